//! Experiment driver scenarios and the command-line interface.

use std::path::Path;
use std::process::Command;

use rlf_core::experiment::{
    emit_figure_data, perturbed_path, read_records, run_experiment, run_limit_study, FigureWindow,
    LimitStudyConfig, Preset, CSV_HEADER,
};
use rlf_core::fields::{BuiltinField, Field};
use rlf_core::integrators::{Method, SolverSettings};

fn rlf(args: &[&str]) -> std::process::Output {
    Command::new(env!("CARGO_BIN_EXE_rlf"))
        .args(args)
        .output()
        .expect("run rlf")
}

fn first_line(path: &Path) -> String {
    std::fs::read_to_string(path).unwrap().lines().next().unwrap().to_string()
}

#[test]
fn example1_explicit_stays_in_window() {
    let mut cfg = Preset::Example1.config(Method::Explicit);
    cfg.h = 0.02;
    cfg.tau_end = 1e4;
    cfg.record_every = 1;
    let s = run_experiment(&cfg).unwrap().remove(0);
    assert!(s.records.max_abs_energy_rel_err <= 2.0 * 0.02 * 0.02);
}

#[test]
fn example3_perturbed_runs_diverge() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = Preset::Example3.config(Method::Explicit);
    cfg.h = 0.004;
    cfg.tau_end = 1e3;
    cfg.record_every = 50;
    cfg.out = Some(dir.path().join("ex3.csv"));
    let summaries = run_experiment(&cfg).unwrap();
    assert_eq!(summaries.len(), 5);

    let finals: Vec<f64> = (0..5)
        .map(|k| {
            let path = perturbed_path(cfg.out.as_ref().unwrap(), k);
            assert_eq!(summaries[k].output.as_deref(), Some(path.as_path()));
            assert_eq!(summaries[k].x0[1], 1.0 + k as f64 * 1e-15);
            read_records(&path).unwrap().last().unwrap().energy_rel_err
        })
        .collect();
    for a in 0..5 {
        for b in a + 1..5 {
            assert!((finals[a] - finals[b]).abs() > 1e-6, "runs {a} and {b} did not separate");
        }
    }
}

#[test]
fn limit_study_scales_with_epsilon_squared() {
    let cfg = LimitStudyConfig {
        field: Field::Builtin(BuiltinField::Example3),
        x0: [0.0, 1.0, 0.1],
        u0: [0.09, 0.55, 0.3],
        h: 0.01,
        tau_end: 10.0,
        epsilons: vec![0.0, 1e-1, 1e-2],
        solver: SolverSettings::default(),
    };
    let rows = run_limit_study(&cfg).unwrap();
    assert_eq!(rows[0].max_difference, 0.0);
    let ratio = rows[1].max_difference / rows[2].max_difference;
    assert!((30.0..=300.0).contains(&ratio), "ratio {ratio}");
}

#[test]
fn limit_study_constant_fields_agree_to_epsilon_squared() {
    let cfg = LimitStudyConfig {
        field: Field::Builtin(BuiltinField::ConstantEB {
            e: [0.0; 3],
            b: [0.0, 0.0, 1.0],
        }),
        x0: [0.0, 1.0, 0.1],
        u0: [0.09, 0.55, 0.3],
        h: 0.01,
        tau_end: 10.0,
        epsilons: vec![1e-2],
        solver: SolverSettings::default(),
    };
    let d = run_limit_study(&cfg).unwrap()[0].max_difference;
    assert!(d > 0.0 && d < 1e-3, "{d:e}");
}

#[test]
fn figure_series_carries_envelope() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = Preset::Example1.config(Method::Explicit);
    cfg.tau_end = 10.0;
    cfg.record_every = 7;
    cfg.out = Some(dir.path().join("e1.csv"));
    run_experiment(&cfg).unwrap();
    let rows = read_records(cfg.out.as_ref().unwrap()).unwrap();
    assert_eq!(rows.len(), 1000usize.div_ceil(7) + 1);

    let window = FigureWindow {
        c: Preset::Example1.envelope_constant().unwrap(),
        stride: 1,
        tau_min: None,
        tau_max: None,
    };
    let fig = emit_figure_data(cfg.out.as_ref().unwrap(), &window).unwrap();
    assert_eq!(fig.tau.len(), rows.len());
    assert!((fig.envelope - 2.0 * 1e-4).abs() < 1e-18);
    assert!(fig.energy_rel_err.iter().all(|e| e.abs() <= fig.envelope));
}

#[test]
fn cli_run_writes_exact_header_and_summary() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("run.csv");
    let o = rlf(&[
        "run", "--preset", "example1", "--method", "variational", "--h", "0.02", "--tau-end", "2",
        "--record-every", "3", "--out", out.to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert_eq!(first_line(&out), CSV_HEADER.join(","));
    assert_eq!(
        first_line(&out),
        "n,tau,t,x1,x2,x3,gamma,u1,u2,u3,energy,energy_rel_err,mass_shell,discrete_energy,noether"
    );
    let summary: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(summary[0]["steps"], 100);
    assert_eq!(summary[0]["records"]["rows"], 35);
    assert_eq!(read_records(&out).unwrap().len(), 35);
}

#[test]
fn cli_run_perturbed_ensemble() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("ens.csv");
    let o = rlf(&[
        "run", "--preset", "example3", "--h", "0.01", "--tau-end", "1", "--perturb", "k*1e-15:3", "--out",
        out.to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    for k in 0..3 {
        assert!(perturbed_path(&out, k).exists());
    }
    assert!(!perturbed_path(&out, 3).exists());
}

#[test]
fn cli_exit_codes() {
    let o = rlf(&["run", "--preset", "example1", "--h", "0", "--tau-end", "1"]);
    assert_eq!(o.status.code(), Some(2));
    let o = rlf(&["run", "--preset", "nope"]);
    assert_eq!(o.status.code(), Some(2));

    let dir = tempfile::tempdir().unwrap();
    let config = dir.path().join("starved.json");
    let json = serde_json::json!({
        "field": "example1",
        "method": "dgrad-avf",
        "h": 0.01,
        "tau_end": 1.0,
        "x0": [0.0, 1.0, 0.1],
        "u0": [0.09, 0.05, 0.2],
        "solver": {"tol": 1e-300, "max_iter": 1, "scheme": "fixed-point"}
    });
    std::fs::write(&config, json.to_string()).unwrap();
    let o = rlf(&["run", "--config", config.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(3), "{}", String::from_utf8_lossy(&o.stderr));
    let o = rlf(&["figure", "--records", "/nonexistent/records.csv", "--c", "2"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn cli_config_file_with_polynomial_field() {
    let dir = tempfile::tempdir().unwrap();
    let config = dir.path().join("cfg.json");
    let out = dir.path().join("poly.csv");
    let json = serde_json::json!({
        "field": {
            "phi": [{"coef": 0.5, "pow": [2, 0, 0]}, {"coef": 0.5, "pow": [0, 2, 0]}],
            "a": [[{"coef": -0.5, "pow": [0, 1, 0]}], [{"coef": 0.5, "pow": [1, 0, 0]}], []]
        },
        "method": "dgrad-avf",
        "h": 0.01,
        "tau_end": 1.0,
        "x0": [0.5, 0.0, 0.0],
        "u0": [0.0, 0.2, 0.1],
        "out": out,
        "record_every": 10
    });
    std::fs::write(&config, json.to_string()).unwrap();
    let o = rlf(&["run", "--config", config.to_str().unwrap()]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let summary: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    assert!(summary[0]["records"]["max_discrete_energy_drift"].as_f64().unwrap() < 1e-12);
    assert_eq!(read_records(&out).unwrap().len(), 11);
}

#[test]
fn cli_converge_and_figure() {
    let dir = tempfile::tempdir().unwrap();
    let conv = dir.path().join("conv.csv");
    let o = rlf(&[
        "converge", "--method", "explicit", "--h-list", "0.04,0.02,0.01", "--tau-end", "2", "--h-ref", "1e-3",
        "--out", conv.to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let text = std::fs::read_to_string(&conv).unwrap();
    let lines: Vec<_> = text.lines().collect();
    assert_eq!(lines[0], "h,error,observed_order");
    assert_eq!(lines.len(), 4);
    let order: f64 = lines[3].split(',').nth(2).unwrap().parse().unwrap();
    assert!((1.8..=2.2).contains(&order), "{order}");

    let records = dir.path().join("e2.csv");
    let o = rlf(&[
        "run", "--preset", "example2", "--h", "0.001", "--tau-end", "1", "--out", records.to_str().unwrap(),
    ]);
    assert!(o.status.success());
    let fig = dir.path().join("fig.csv");
    let o = rlf(&[
        "figure", "--records", records.to_str().unwrap(), "--preset", "example2", "--stride", "10", "--out",
        fig.to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let text = std::fs::read_to_string(&fig).unwrap();
    assert_eq!(text.lines().next().unwrap(), "tau,energy_rel_err,lower,upper");
    let upper: f64 = text.lines().nth(1).unwrap().split(',').nth(3).unwrap().parse().unwrap();
    assert!((upper - 4000.0 * 1e-6).abs() < 1e-15);
}

#[test]
fn cli_limit_study() {
    let o = rlf(&["limit-study", "--epsilons", "0,0.1", "--h", "0.01", "--tau-end", "1"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let rows: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(rows[0]["max_difference"], 0.0);
    let o = rlf(&["limit-study", "--epsilons", "0.9", "--h", "0.01", "--tau-end", "1"]);
    assert_eq!(o.status.code(), Some(2));
}
