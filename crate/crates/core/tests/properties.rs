//! Property tests for the conservation laws and the experiment round trip.

use proptest::prelude::*;

use rlf_core::diagnostics::{energy, mass_shell, noether, LorentzGenerator};
use rlf_core::experiment::{read_records, run_experiment, summarize_records, ExperimentConfig};
use rlf_core::fields::{BuiltinField, Field, FieldModel};
use rlf_core::integrators::{Method, Propagator, SolverSettings};
use rlf_core::minkowski::{Position4, Velocity4};

fn arb_model() -> impl Strategy<Value = BuiltinField> {
    prop_oneof![
        Just(BuiltinField::Example1),
        Just(BuiltinField::Example2),
        Just(BuiltinField::Example3),
        Just(BuiltinField::Axisymmetric),
        (prop::array::uniform3(-0.5..0.5f64), prop::array::uniform3(-1.0..1.0f64))
            .prop_map(|(e, b)| BuiltinField::ConstantEB { e, b }),
    ]
}

fn arb_start() -> impl Strategy<Value = (Position4, Velocity4)> {
    (
        0.0..5.0f64,
        prop::array::uniform3(-0.6..0.6f64),
        prop::array::uniform3(-0.4..0.4f64),
    )
        .prop_map(|(t, x, u)| (Position4::new(t, x), Velocity4::on_shell(u)))
}

/// Size of the field entries in the Faraday tensor at `x`.
fn field_scale(model: &BuiltinField, x: [f64; 3]) -> f64 {
    let e = model.grad_phi(x).iter().map(|v| v * v).sum::<f64>().sqrt();
    let j = model.vector_potential_jacobian(x);
    e + j.iter().flatten().map(|v| v * v).sum::<f64>().sqrt()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn explicit_mass_shell_is_exact(model in arb_model(), (x0, u0) in arb_start(), h in 0.001..0.1f64) {
        let mut p = Propagator::new(&model, Method::Explicit, h, SolverSettings::default(), x0, u0).unwrap();
        let m0 = mass_shell(p.initial().u_next);
        let n = 2000;
        let mut gamma_max: f64 = 1.0;
        let mut worst: f64 = 0.0;
        for _ in 0..n {
            let g = p.advance().unwrap();
            // Once h·|F| is large the step no longer resolves the field and the Cayley
            // solve is ill-conditioned; round-off then grows with its condition number.
            if h * field_scale(&model, g.x.x) > 1.0 {
                break;
            }
            gamma_max = gamma_max.max(g.u_next.gamma.abs());
            worst = worst.max((mass_shell(g.u_next) - m0).abs());
        }
        // Round-off only: a few ulps of γ² per step.
        prop_assert!(worst <= 1e-15 * n as f64 * gamma_max * gamma_max, "{worst:e}");
    }

    #[test]
    fn discrete_gradient_energy_is_exact(
        model in arb_model(),
        (x0, u0) in arb_start(),
        avf in any::<bool>(),
    ) {
        let h = 0.01;
        let settings = SolverSettings::default();
        let method = if avf { Method::DgradAvf } else { Method::DgradMidpoint };
        let mut p = Propagator::new(&model, method, h, settings, x0, u0).unwrap();
        let e0 = p.initial().discrete_energy.unwrap();
        let n = 1000;
        for _ in 0..n {
            let g = p.advance().unwrap();
            let half = g.u_next.gamma + model.phi([0, 1, 2].map(|i| g.x.x[i] + 0.5 * h * g.u_next.u[i]));
            prop_assert_eq!(half, g.discrete_energy.unwrap());
            let scale = 1.0 + g.u_next.gamma;
            prop_assert!((half - e0).abs() <= 10.0 * settings.tol * n as f64 * scale, "{:e}", half - e0);
        }
    }

    #[test]
    fn variational_discrete_energy_is_exact(model in arb_model(), (x0, u0) in arb_start()) {
        let settings = SolverSettings::default();
        let mut p = Propagator::new(&model, Method::Variational, 0.01, settings, x0, u0).unwrap();
        let e0 = p.initial().discrete_energy.unwrap();
        let n = 1000;
        for _ in 0..n {
            let g = p.advance().unwrap();
            let d = g.discrete_energy.unwrap() - e0;
            prop_assert!(d.abs() <= 10.0 * settings.tol * n as f64 * (1.0 + g.u_next.gamma), "{d:e}");
        }
    }

    #[test]
    fn variational_conserves_noether_invariant((x0, u0) in arb_start()) {
        let model = BuiltinField::Axisymmetric;
        let l = LorentzGenerator::rotation_x3();
        let mut p = Propagator::new(&model, Method::Variational, 0.01, SolverSettings::default(), x0, u0).unwrap();
        let g0 = p.initial();
        let i0 = rlf_core::diagnostics::noether_from_momentum(&g0.p, &g0.x, &l);
        for n in 1..=1000u32 {
            let g = p.advance().unwrap();
            let i = rlf_core::diagnostics::noether_from_momentum(&g.p, &g.x, &l);
            prop_assert!((i - i0).abs() <= 1e-10 * f64::from(n) * i0.abs().max(1.0));
        }
        // The continuous invariant is only nearly conserved along the discrete flow.
        let last = p.advance().unwrap();
        let continuous = noether(&model, &last.x, last.u, &l);
        prop_assert!((continuous - i0).abs() < 1e-2);
    }

    #[test]
    fn energy_and_mass_shell_are_deterministic(model in arb_model(), (x, u) in arb_start()) {
        prop_assert_eq!(energy(&model, x.x, u.gamma).to_bits(), energy(&model, x.x, u.gamma).to_bits());
        prop_assert_eq!(mass_shell(u).to_bits(), mass_shell(u).to_bits());
    }
}

fn arb_method() -> impl Strategy<Value = Method> {
    prop::sample::select(Method::ALL.to_vec())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn runs_are_deterministic_and_summaries_round_trip(
        method in arb_method(),
        field in prop::sample::select(vec![
            BuiltinField::Example1,
            BuiltinField::Example2,
            BuiltinField::Axisymmetric,
        ]),
        h in prop::sample::select(vec![0.005, 0.01, 0.02]),
        record_every in 1u64..40,
    ) {
        let dir = tempfile::tempdir().unwrap();
        let cfg = |name: &str| ExperimentConfig {
            field: Field::Builtin(field),
            method,
            h,
            tau_end: 2.0,
            x0: [0.3, 0.8, 0.1],
            u0: [0.09, 0.3, 0.2],
            out: Some(dir.path().join(name)),
            record_every,
            solver: SolverSettings::default(),
            epsilon: None,
            perturbation: None,
        };
        let (a, b) = (cfg("a.csv"), cfg("b.csv"));
        let sa = run_experiment(&a).unwrap().remove(0);
        run_experiment(&b).unwrap();
        let bytes_a = std::fs::read(a.out.as_ref().unwrap()).unwrap();
        let bytes_b = std::fs::read(b.out.as_ref().unwrap()).unwrap();
        prop_assert!(bytes_a == bytes_b, "outputs differ");

        prop_assert_eq!(summarize_records(a.out.as_ref().unwrap()).unwrap(), sa.records);
        let rows = read_records(a.out.as_ref().unwrap()).unwrap();
        prop_assert_eq!(rows.len() as u64, a.row_count().unwrap());
        prop_assert_eq!(rows.len() as u64, sa.steps.div_ceil(record_every) + 1);
        prop_assert!(rows.windows(2).all(|w| w[1].tau > w[0].tau));
        prop_assert_eq!(rows.last().unwrap().n, sa.steps);
    }
}
