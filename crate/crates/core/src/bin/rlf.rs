//! `rlf`: run leapfrog experiments from the command line.
//!
//! Exit status is 0 on success, 2 for invalid input and 3 when an implicit
//! solve fails to converge.

use std::io::{self, Write};
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use rlf_core::diagnostics::convergence_order;
use rlf_core::experiment::{
    emit_figure_data, run_experiment, run_limit_study, write_convergence_csv, write_json,
    ExperimentConfig, ExperimentError, FigureWindow, LimitStudyConfig, Perturbation, Preset,
};
use rlf_core::fields::Field;
use rlf_core::integrators::{Method, SolverSettings};
use rlf_core::minkowski::{Position4, Vec3, Velocity4};

#[derive(Parser)]
#[command(name = "rlf", version, about = "Leapfrog integrators for relativistic charged particles")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Integrate one trajectory (or a perturbed ensemble) and write CSV records.
    Run(RunArgs),
    /// Compare explicit leapfrog on the ε-scaled problem with the Boris method.
    LimitStudy(LimitArgs),
    /// Global error and observed order against an RK4 reference.
    Converge(ConvergeArgs),
    /// Extract a plot series with its ±c·h² envelope from a record file.
    Figure(FigureArgs),
}

#[derive(Args)]
struct RunArgs {
    #[arg(long, required_unless_present = "config")]
    preset: Option<Preset>,
    /// JSON configuration; command-line flags override its values.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    method: Option<Method>,
    #[arg(long)]
    h: Option<f64>,
    #[arg(long)]
    tau_end: Option<f64>,
    #[arg(long)]
    record_every: Option<u64>,
    #[arg(long)]
    out: Option<PathBuf>,
    /// Relative residual tolerance of the implicit solves.
    #[arg(long)]
    tol: Option<f64>,
    /// Perturb x₂ by k·SCALE for k = 0..COUNT, written `k*SCALE:COUNT`.
    #[arg(long, conflicts_with = "no_perturb")]
    perturb: Option<Perturbation>,
    /// Run the unperturbed initial value only.
    #[arg(long)]
    no_perturb: bool,
    #[arg(long)]
    epsilon: Option<f64>,
    /// Also write the summary JSON here.
    #[arg(long)]
    summary: Option<PathBuf>,
}

#[derive(Args)]
struct LimitArgs {
    #[arg(long, default_value = "example3")]
    preset: Preset,
    #[arg(long, value_delimiter = ',', required = true)]
    epsilons: Vec<f64>,
    #[arg(long)]
    h: f64,
    #[arg(long)]
    tau_end: f64,
    #[arg(long, value_delimiter = ',', allow_negative_numbers = true)]
    x0: Option<Vec<f64>>,
    /// Rescaled initial momentum ũ0.
    #[arg(long, value_delimiter = ',', allow_negative_numbers = true)]
    u0: Option<Vec<f64>>,
}

#[derive(Args)]
struct ConvergeArgs {
    #[arg(long, default_value = "example1")]
    preset: Preset,
    #[arg(long)]
    method: Method,
    /// Strictly decreasing step sizes; `tau_end` must be a multiple of each.
    #[arg(long, value_delimiter = ',', num_args = 1.., required = true)]
    h_list: Vec<f64>,
    #[arg(long, default_value_t = 10.0)]
    tau_end: f64,
    #[arg(long, default_value_t = 1e-4)]
    h_ref: f64,
    #[arg(long)]
    tol: Option<f64>,
    /// CSV output `h,error,observed_order`; JSON on stdout otherwise.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct FigureArgs {
    #[arg(long)]
    records: PathBuf,
    /// Envelope constant c; defaults to the preset's value.
    #[arg(long, required_unless_present = "preset")]
    c: Option<f64>,
    #[arg(long)]
    preset: Option<Preset>,
    #[arg(long, default_value_t = 1)]
    stride: usize,
    #[arg(long)]
    tau_min: Option<f64>,
    #[arg(long)]
    tau_max: Option<f64>,
    /// CSV output `tau,energy_rel_err,lower,upper`; JSON on stdout otherwise.
    #[arg(long)]
    out: Option<PathBuf>,
}

fn vec3(v: Option<Vec<f64>>, default: Vec3, name: &str) -> Result<Vec3, ExperimentError> {
    match v {
        None => Ok(default),
        Some(v) => <Vec3>::try_from(v.as_slice())
            .map_err(|_| ExperimentError::Config(format!("--{name} needs three comma-separated values"))),
    }
}

fn stdout_json<T: serde::Serialize>(value: &T) -> Result<(), ExperimentError> {
    write_json(io::stdout().lock(), value).map_err(|e| ExperimentError::Io {
        path: "<stdout>".into(),
        source: e,
    })
}

fn run(args: RunArgs) -> Result<(), ExperimentError> {
    let method = args.method.unwrap_or(Method::Explicit);
    let mut cfg = match (&args.config, args.preset) {
        (Some(path), _) => ExperimentConfig::load(path)?,
        (None, Some(preset)) => preset.config(method),
        (None, None) => unreachable!("clap requires --preset or --config"),
    };
    if let Some(m) = args.method {
        cfg.method = m;
    }
    let horizon_changed = args.h.is_some() || args.tau_end.is_some();
    if let Some(h) = args.h {
        cfg.h = h;
    }
    if let Some(t) = args.tau_end {
        cfg.tau_end = t;
    }
    match args.record_every {
        Some(k) => cfg.record_every = k,
        None if horizon_changed && args.config.is_none() => cfg.auto_record_every(),
        None => {}
    }
    if args.out.is_some() {
        cfg.out = args.out;
    }
    if let Some(tol) = args.tol {
        cfg.solver.tol = tol;
    }
    if args.perturb.is_some() {
        cfg.perturbation = args.perturb;
    }
    if args.no_perturb {
        cfg.perturbation = None;
    }
    if args.epsilon.is_some() {
        cfg.epsilon = args.epsilon;
    }
    let summaries = run_experiment(&cfg)?;
    if let Some(path) = &args.summary {
        let file = std::fs::File::create(path).map_err(|e| ExperimentError::Io {
            path: path.clone(),
            source: e,
        })?;
        write_json(file, &summaries).map_err(|e| ExperimentError::Io {
            path: path.clone(),
            source: e,
        })?;
    }
    stdout_json(&summaries)
}

fn limit_study(args: LimitArgs) -> Result<(), ExperimentError> {
    let base = args.preset.config(Method::Boris);
    let cfg = LimitStudyConfig {
        field: base.field,
        x0: vec3(args.x0, base.x0, "x0")?,
        u0: vec3(args.u0, base.u0, "u0")?,
        h: args.h,
        tau_end: args.tau_end,
        epsilons: args.epsilons,
        solver: SolverSettings::default(),
    };
    stdout_json(&run_limit_study(&cfg)?)
}

fn converge(args: ConvergeArgs) -> Result<(), ExperimentError> {
    let base = args.preset.config(args.method);
    let mut settings = SolverSettings::default();
    if let Some(tol) = args.tol {
        settings.tol = tol;
    }
    let field: Field = base.field;
    let x0 = Position4::new(0.0, base.x0);
    let u0 = if args.method.is_relativistic() {
        Velocity4::on_shell(base.u0)
    } else {
        Velocity4::new(1.0, base.u0)
    };
    let rows = convergence_order(args.method, &field, x0, u0, args.tau_end, &args.h_list, args.h_ref, settings)
        .map_err(|e| match e {
            rlf_core::Error::Invalid(msg) => ExperimentError::Config(msg),
            source => ExperimentError::Solver { step: 0, source },
        })?;
    match &args.out {
        Some(path) => write_convergence_csv(path, &rows),
        None => stdout_json(&rows),
    }
}

fn figure(args: FigureArgs) -> Result<(), ExperimentError> {
    let c = match (args.c, args.preset) {
        (Some(c), _) => c,
        (None, Some(p)) => p
            .envelope_constant()
            .ok_or_else(|| ExperimentError::Config(format!("preset {} has no envelope constant; pass --c", p.name())))?,
        (None, None) => unreachable!("clap requires --c or --preset"),
    };
    let window = FigureWindow {
        c,
        stride: args.stride,
        tau_min: args.tau_min,
        tau_max: args.tau_max,
    };
    let data = emit_figure_data(&args.records, &window)?;
    match &args.out {
        Some(path) => data.write_csv(path),
        None => stdout_json(&data),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Run(a) => run(a),
        Command::LimitStudy(a) => limit_study(a),
        Command::Converge(a) => converge(a),
        Command::Figure(a) => figure(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let _ = writeln!(io::stderr(), "rlf: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
