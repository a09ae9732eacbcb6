//! Conserved quantities, structure checks and the reference oracle.
//!
//! The finite-difference checks treat a stepper as a black-box map on
//! `R⁸` and inspect its Jacobian: the determinant for volume preservation,
//! `DΦᵀ J DΦ − J` for symplecticity. [`reference_solve`] integrates the
//! first-order system `ẋ = u, u̇ = M⁻¹𝐅(x)u` with classical RK4 and serves as
//! the high-accuracy oracle for convergence and invariant tests.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::fields::{faraday, DiscreteGradientKind, FieldModel};
use crate::integrators::{
    dg_lf_step, explicit_lf_step, step_count, variational_step, HalfStepState, Method,
    PhaseState, Propagator, SolverSettings,
};
use crate::minkowski::{det, minkowski_apply, v3, v4, Matrix4, Momentum4, Position4, Vec3, Vec4, Velocity4};

/// Energy `H(x, γ) = γ + φ(x)`.
pub fn energy<M: FieldModel + ?Sized>(model: &M, x: Vec3, gamma: f64) -> f64 {
    gamma + model.phi(x)
}

/// Mass shell `½uᵀMu = ½(−γ² + |u|²)`.
pub fn mass_shell(u: Velocity4) -> f64 {
    0.5 * (-u.gamma * u.gamma + v3::dot(u.u, u.u))
}

/// Snapshot of the conserved quantities at one point.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct ConservedReport {
    pub energy: f64,
    pub mass_shell: f64,
    pub discrete_energy: Option<f64>,
    pub noether: Option<f64>,
}

impl ConservedReport {
    pub fn at<M: FieldModel + ?Sized>(
        model: &M,
        x: &Position4,
        u: Velocity4,
        discrete_energy: Option<f64>,
        generator: Option<&LorentzGenerator>,
    ) -> Self {
        Self {
            energy: energy(model, x.x, u.gamma),
            mass_shell: mass_shell(u),
            discrete_energy,
            noether: generator.map(|g| noether(model, x, u, g)),
        }
    }
}

/// Generator `L` of a one-parameter Lorentz group, `ML + LᵀM = 0`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LorentzGenerator(Matrix4);

impl LorentzGenerator {
    pub fn new(l: Matrix4) -> Result<Self> {
        let m = Matrix4::MINKOWSKI;
        let defect = (m * l + l.transpose() * m).max_abs();
        if defect > 1e-15 * l.max_abs().max(1.0) {
            return Err(Error::Invalid(format!(
                "not a Lorentz generator: ‖ML + LᵀM‖ = {defect:e}"
            )));
        }
        Ok(Self(l))
    }

    /// Spatial rotation about the x₃ axis.
    pub fn rotation_x3() -> Self {
        let mut l = Matrix4::ZERO;
        l.0[1][2] = -1.0;
        l.0[2][1] = 1.0;
        Self(l)
    }

    /// Boost along x₁.
    pub fn boost_x1() -> Self {
        let mut l = Matrix4::ZERO;
        l.0[0][1] = 1.0;
        l.0[1][0] = 1.0;
        Self(l)
    }

    pub fn matrix(&self) -> &Matrix4 {
        &self.0
    }

    /// `e^{sL}` by scaling and squaring of a truncated Taylor series.
    pub fn exp(&self, s: f64) -> Matrix4 {
        let a = self.0.scale(s);
        let norm = a.norm_inf();
        let squarings = if norm > 0.5 { (norm / 0.5).log2().ceil() as u32 } else { 0 };
        let a = a.scale(0.5_f64.powi(squarings as i32));
        let mut term = Matrix4::IDENTITY;
        let mut sum = Matrix4::IDENTITY;
        for k in 1..=20 {
            term = (term * a).scale(1.0 / k as f64);
            sum = sum + term;
        }
        for _ in 0..squarings {
            sum = sum * sum;
        }
        sum
    }
}

/// Noether invariant `𝓘 = pᵀLx` with `p = Mu + 𝐀(x)`.
pub fn noether<M: FieldModel + ?Sized>(
    model: &M,
    x: &Position4,
    u: Velocity4,
    generator: &LorentzGenerator,
) -> f64 {
    let p = v4::add(minkowski_apply(u.to_array()), model.augmented_potential(x));
    noether_from_momentum(&Momentum4(p), x, generator)
}

pub fn noether_from_momentum(p: &Momentum4, x: &Position4, generator: &LorentzGenerator) -> f64 {
    v4::dot(p.0, generator.0.mul_vec(x.to_array()))
}

/// Central-difference Jacobian of a map on `R⁸`.
pub fn fd_jacobian8(
    map: impl Fn([f64; 8]) -> Result<[f64; 8]>,
    state: [f64; 8],
    fd_eps: f64,
) -> Result<[[f64; 8]; 8]> {
    let mut jac = [[0.0; 8]; 8];
    for k in 0..8 {
        let mut plus = state;
        let mut minus = state;
        plus[k] += fd_eps;
        minus[k] -= fd_eps;
        let fp = map(plus)?;
        let fm = map(minus)?;
        for i in 0..8 {
            jac[i][k] = (fp[i] - fm[i]) / (2.0 * fd_eps);
        }
    }
    Ok(jac)
}

/// Determinant of the finite-difference Jacobian of a one-step map.
pub fn fd_jacobian_det(
    map: impl Fn([f64; 8]) -> Result<[f64; 8]>,
    state: [f64; 8],
    fd_eps: f64,
) -> Result<f64> {
    Ok(det(fd_jacobian8(map, state, fd_eps)?))
}

/// `‖DΦᵀ J DΦ − J‖∞` for the canonical structure `J = [[0, I], [−I, 0]]` on `(x, p)`.
pub fn fd_symplectic_defect(
    map: impl Fn([f64; 8]) -> Result<[f64; 8]>,
    state: [f64; 8],
    fd_eps: f64,
) -> Result<f64> {
    let d = fd_jacobian8(map, state, fd_eps)?;
    let mut j = [[0.0; 8]; 8];
    for i in 0..4 {
        j[i][i + 4] = 1.0;
        j[i + 4][i] = -1.0;
    }
    let mut jd = [[0.0; 8]; 8];
    for i in 0..8 {
        for k in 0..8 {
            jd[i][k] = (0..8).map(|l| j[i][l] * d[l][k]).sum();
        }
    }
    let mut worst: f64 = 0.0;
    for i in 0..8 {
        for k in 0..8 {
            let v: f64 = (0..8).map(|l| d[l][i] * jd[l][k]).sum();
            worst = worst.max((v - j[i][k]).abs());
        }
    }
    Ok(worst)
}

/// Default perturbation for the finite-difference structure checks.
pub const FD_EPS: f64 = 1e-6;

fn split8(s: [f64; 8]) -> (Vec4, Vec4) {
    ([s[0], s[1], s[2], s[3]], [s[4], s[5], s[6], s[7]])
}

fn join8(a: Vec4, b: Vec4) -> [f64; 8] {
    [a[0], a[1], a[2], a[3], b[0], b[1], b[2], b[3]]
}

/// `(xⁿ, u^{n−1/2}) ↦ (x^{n+1}, u^{n+1/2})` for the explicit leapfrog method.
pub fn explicit_map<M: FieldModel + ?Sized>(model: &M, h: f64) -> impl Fn([f64; 8]) -> Result<[f64; 8]> + '_ {
    move |s| {
        let (x, u) = split8(s);
        let state = HalfStepState {
            x: Position4::from_array(x),
            u_half: Velocity4::from_array(u),
            step_index: 0,
        };
        let next = explicit_lf_step(model, &state, h)?;
        Ok(join8(next.x.to_array(), next.u_half.to_array()))
    }
}

/// The same map for the discrete-gradient leapfrog method.
pub fn dg_map<'a, M: FieldModel + ?Sized>(
    model: &'a M,
    kind: DiscreteGradientKind,
    h: f64,
    settings: SolverSettings,
) -> impl Fn([f64; 8]) -> Result<[f64; 8]> + 'a {
    move |s| {
        let (x, u) = split8(s);
        let state = HalfStepState {
            x: Position4::from_array(x),
            u_half: Velocity4::from_array(u),
            step_index: 0,
        };
        let next = dg_lf_step(model, kind, &state, h, &settings)?.state;
        Ok(join8(next.x.to_array(), next.u_half.to_array()))
    }
}

/// `(xⁿ, pⁿ) ↦ (x^{n+1}, p^{n+1})` for the variational method.
pub fn variational_map<M: FieldModel + ?Sized>(
    model: &M,
    h: f64,
    settings: SolverSettings,
) -> impl Fn([f64; 8]) -> Result<[f64; 8]> + '_ {
    move |s| {
        let (x, p) = split8(s);
        let state = PhaseState {
            x: Position4::from_array(x),
            p: Momentum4(p),
        };
        let next = variational_step(model, &state, h, &settings)?.state;
        Ok(join8(next.x.to_array(), next.p.0))
    }
}

/// The explicit method written on `(xⁿ, p^{n−1/2})` with `p^{n−1/2} = Mu^{n−1/2} + 𝐀(xⁿ)`.
pub fn explicit_phase_map<M: FieldModel + ?Sized>(model: &M, h: f64) -> impl Fn([f64; 8]) -> Result<[f64; 8]> + '_ {
    move |s| {
        let (x, p) = split8(s);
        let x = Position4::from_array(x);
        let u = minkowski_apply(v4::sub(p, model.augmented_potential(&x)));
        let state = HalfStepState {
            x,
            u_half: Velocity4::from_array(u),
            step_index: 0,
        };
        let next = explicit_lf_step(model, &state, h)?;
        let p_next = v4::add(
            minkowski_apply(next.u_half.to_array()),
            model.augmented_potential(&next.x),
        );
        Ok(join8(next.x.to_array(), p_next))
    }
}

/// A sample of the reference trajectory.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ReferenceSample {
    pub tau: f64,
    pub x: Position4,
    pub u: Velocity4,
}

/// Classical RK4 on `ẋ = u, u̇ = M⁻¹𝐅(x)u`.
///
/// The step is `tau_end / ceil(tau_end / h_ref)`; every step is kept.
pub fn reference_solve<M: FieldModel + ?Sized>(
    model: &M,
    x0: Position4,
    u0: Velocity4,
    tau_end: f64,
    h_ref: f64,
) -> Result<Vec<ReferenceSample>> {
    let rhs = |y: [f64; 8]| {
        let (x, u) = split8(y);
        let f = faraday(model, [x[1], x[2], x[3]]);
        join8(u, minkowski_apply(f.mul_vec(u)))
    };
    let samples = rk4(rhs, join8(x0.to_array(), u0.to_array()), tau_end, h_ref)?;
    Ok(samples
        .into_iter()
        .map(|(tau, y)| {
            let (x, u) = split8(y);
            ReferenceSample {
                tau,
                x: Position4::from_array(x),
                u: Velocity4::from_array(u),
            }
        })
        .collect())
}

/// RK4 on the non-relativistic system `ẋ = v, v̇ = E + v × B`; samples carry `t = τ`, `γ = 1`.
pub fn reference_solve_classical<M: FieldModel + ?Sized>(
    model: &M,
    x0: Vec3,
    v0: Vec3,
    tau_end: f64,
    h_ref: f64,
) -> Result<Vec<ReferenceSample>> {
    let rhs = |y: [f64; 6]| {
        let x = [y[0], y[1], y[2]];
        let v = [y[3], y[4], y[5]];
        let a = v3::add(model.electric_field(x), v3::cross(v, model.magnetic_field(x)));
        [v[0], v[1], v[2], a[0], a[1], a[2]]
    };
    let y0 = [x0[0], x0[1], x0[2], v0[0], v0[1], v0[2]];
    let samples = rk4(rhs, y0, tau_end, h_ref)?;
    Ok(samples
        .into_iter()
        .map(|(tau, y)| ReferenceSample {
            tau,
            x: Position4::new(tau, [y[0], y[1], y[2]]),
            u: Velocity4::new(1.0, [y[3], y[4], y[5]]),
        })
        .collect())
}

fn rk4<const N: usize>(
    rhs: impl Fn([f64; N]) -> [f64; N],
    y0: [f64; N],
    tau_end: f64,
    h_ref: f64,
) -> Result<Vec<(f64, [f64; N])>> {
    if !(h_ref.is_finite() && h_ref > 0.0) {
        return Err(Error::Invalid(format!("reference step must be positive, got {h_ref}")));
    }
    if !(tau_end.is_finite() && tau_end >= 0.0) {
        return Err(Error::Invalid(format!("tau_end must be non-negative, got {tau_end}")));
    }
    let n = (tau_end / h_ref).ceil().max(1.0) as usize;
    let h = tau_end / n as f64;
    let axpy = |a: [f64; N], s: f64, b: [f64; N]| {
        let mut out = a;
        for (o, v) in out.iter_mut().zip(b.iter()) {
            *o += s * v;
        }
        out
    };
    let mut out = Vec::with_capacity(n + 1);
    let mut y = y0;
    out.push((0.0, y));
    for i in 0..n {
        let k1 = rhs(y);
        let k2 = rhs(axpy(y, 0.5 * h, k1));
        let k3 = rhs(axpy(y, 0.5 * h, k2));
        let k4 = rhs(axpy(y, h, k3));
        for j in 0..N {
            y[j] += h / 6.0 * (k1[j] + 2.0 * k2[j] + 2.0 * k3[j] + k4[j]);
        }
        out.push(((i + 1) as f64 * h, y));
    }
    Ok(out)
}

/// One line of a convergence study.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct ConvergenceRow {
    pub h: f64,
    pub error: f64,
    /// `log(err_prev / err) / log(h_prev / h)`; NaN for the first row or when
    /// both errors are at round-off level.
    pub observed_order: f64,
}

/// Errors below this are treated as exact when estimating orders.
pub const ROUNDOFF_ERROR: f64 = 1e-12;

/// Global error at `tau_end` of `method` for each step size, measured in the
/// max-norm over the grid position and momentum against [`reference_solve`].
#[allow(clippy::too_many_arguments)]
pub fn convergence_order<M: FieldModel + ?Sized>(
    method: Method,
    model: &M,
    x0: Position4,
    u0: Velocity4,
    tau_end: f64,
    h_list: &[f64],
    h_ref: f64,
    settings: SolverSettings,
) -> Result<Vec<ConvergenceRow>> {
    if h_list.len() < 2 {
        return Err(Error::Invalid("need at least two step sizes".into()));
    }
    // Written negated so that NaN entries are rejected too.
    #[allow(clippy::neg_cmp_op_on_partial_ord)]
    if h_list.windows(2).any(|w| !(w[1] < w[0])) {
        return Err(Error::Invalid("step sizes must be strictly decreasing".into()));
    }
    let reference = if method.is_relativistic() {
        reference_solve(model, x0, u0, tau_end, h_ref)?
    } else {
        reference_solve_classical(model, x0.x, u0.u, tau_end, h_ref)?
    };
    let exact = reference.last().expect("reference has samples");

    let mut rows: Vec<ConvergenceRow> = Vec::with_capacity(h_list.len());
    for &h in h_list {
        let n = step_count(tau_end, h)?;
        if ((n as f64) * h - tau_end).abs() > 1e-9 * tau_end {
            return Err(Error::Invalid(format!("tau_end {tau_end} is not a multiple of h = {h}")));
        }
        let mut prop = Propagator::new(model, method, h, settings, x0, u0)?;
        let g = prop.run_to(n)?;
        let ex = v4::norm_inf(v4::sub(g.x.to_array(), exact.x.to_array()));
        let eu = v4::norm_inf(v4::sub(g.u.to_array(), exact.u.to_array()));
        let error = ex.max(eu);
        let observed_order = match rows.last() {
            Some(prev) if prev.error > ROUNDOFF_ERROR && error > ROUNDOFF_ERROR => {
                (prev.error / error).ln() / (prev.h / h).ln()
            }
            _ => f64::NAN,
        };
        rows.push(ConvergenceRow {
            h,
            error,
            observed_order,
        });
    }
    Ok(rows)
}
