use crate::error::{Error, Result};
use crate::fields::{dg_faraday, faraday, DiscreteGradientKind, FieldModel};
use crate::minkowski::{gauss_solve, minkowski_apply, solve4, v3, v4, Matrix4, Momentum4, Position4, Vec4, Velocity4};

use super::{fd_jacobian, SolverScheme, StallGuard, SolverSettings, Solved};

/// One-step state `(xⁿ, u^{n−1/2})` of the explicit and discrete-gradient methods.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct HalfStepState {
    pub x: Position4,
    pub u_half: Velocity4,
    pub step_index: u64,
}

impl HalfStepState {
    /// The state `(x¹, u^{1/2})` reached from the initial data by the starting procedure.
    pub fn start<M: FieldModel + ?Sized>(model: &M, x0: Position4, u0: Velocity4, h: f64) -> Self {
        let u_half = start_half_step(model, &x0, u0, h);
        Self {
            x: x0.advance(h, u_half),
            u_half,
            step_index: 1,
        }
    }

    /// `x^{n−1} = xⁿ − h u^{n−1/2}`
    pub fn previous_position(&self, h: f64) -> Position4 {
        self.x.advance(-h, self.u_half)
    }
}

/// Phase-space state `(xⁿ, pⁿ)` of the variational method.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PhaseState {
    pub x: Position4,
    pub p: Momentum4,
}

impl PhaseState {
    /// `p⁰ = M u⁰ + 𝐀(x⁰)`
    pub fn from_initial<M: FieldModel + ?Sized>(model: &M, x0: Position4, u0: Velocity4) -> Self {
        let p = v4::add(minkowski_apply(u0.to_array()), model.augmented_potential(&x0));
        Self {
            x: x0,
            p: Momentum4(p),
        }
    }

    /// Momentum that the variational step would have produced on arriving at
    /// `xⁿ` with velocity `u^{n−1/2}`, taking `x^{n−1} = xⁿ − h u^{n−1/2}`.
    pub fn from_half_step<M: FieldModel + ?Sized>(model: &M, s: &HalfStepState, h: f64) -> Self {
        let prev = s.previous_position(h);
        let u = s.u_half.to_array();
        let jac = model.augmented_jacobian(&s.x);
        let avg = v4::scale(
            0.5,
            v4::add(model.augmented_potential(&prev), model.augmented_potential(&s.x)),
        );
        let p = v4::add(
            v4::add(minkowski_apply(u), v4::scale(0.5 * h, jac.transpose().mul_vec(u))),
            avg,
        );
        Self {
            x: s.x,
            p: Momentum4(p),
        }
    }
}

/// Output of [`variational_step`].
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct VariationalStep {
    pub state: PhaseState,
    /// `u^{n+1/2} = (x^{n+1} − xⁿ)/h`
    pub u_half: Velocity4,
    pub iterations: usize,
}

/// Starting value `u^{1/2}`: the spatial part of `u⁰ + ½h M⁻¹𝐅(x⁰)u⁰`, put back on the mass shell.
pub fn start_half_step<M: FieldModel + ?Sized>(
    model: &M,
    x0: &Position4,
    u0: Velocity4,
    h: f64,
) -> Velocity4 {
    if h == 0.0 {
        return u0;
    }
    let f = faraday(model, x0.x);
    let u = u0.to_array();
    let tilde = v4::axpy(u, 0.5 * h, minkowski_apply(f.mul_vec(u)));
    Velocity4::on_shell([tilde[1], tilde[2], tilde[3]])
}

/// Rejects step sizes with `‖½h M⁻¹𝐅(x⁰)‖∞ ≥ 1`.
pub fn check_step_size<M: FieldModel + ?Sized>(model: &M, x0: &Position4, h: f64) -> Result<()> {
    if !(h.is_finite() && h > 0.0) {
        return Err(Error::Invalid(format!("step size must be positive, got {h}")));
    }
    let z = faraday(model, x0.x).minkowski_left().scale(0.5 * h);
    let n = z.norm_inf();
    if n >= 1.0 {
        return Err(Error::Invalid(format!(
            "step size {h} too large for the field at the initial point (‖½hM⁻¹F‖ = {n:.3})"
        )));
    }
    Ok(())
}

/// Solves `(M − ½h𝐅) u⁺ = (M + ½h𝐅) u⁻`.
fn cayley_update(f: &Matrix4, u_minus: Vec4, h: f64) -> Result<Vec4> {
    let half = f.scale(0.5 * h);
    let lhs = Matrix4::MINKOWSKI - half;
    let rhs = v4::add(minkowski_apply(u_minus), half.mul_vec(u_minus));
    solve4(&lhs, rhs)
}

/// One step of the explicit (linearly implicit) leapfrog method.
pub fn explicit_lf_step<M: FieldModel + ?Sized>(
    model: &M,
    s: &HalfStepState,
    h: f64,
) -> Result<HalfStepState> {
    let f = faraday(model, s.x.x);
    let u_plus = Velocity4::from_array(cayley_update(&f, s.u_half.to_array(), h)?);
    Ok(HalfStepState {
        x: s.x.advance(h, u_plus),
        u_half: u_plus,
        step_index: s.step_index + 1,
    })
}

/// One step of the discrete-gradient leapfrog method.
///
/// The implicit relation `M(u⁺ − u⁻) = ½h𝐅̄(u⁺ + u⁻)` is solved for `u⁺`,
/// where `𝐅̄` carries `∇̄φ(x^{n+1/2}, x^{n−1/2})` with `x^{n±1/2} = xⁿ ± ½h u^±`
/// and the magnetic field at `xⁿ`. Every returned `u⁺` comes out of a solve
/// with a skew `𝐅̄`, so the mass shell is preserved regardless of the solver
/// tolerance.
pub fn dg_lf_step<M: FieldModel + ?Sized>(
    model: &M,
    kind: DiscreteGradientKind,
    s: &HalfStepState,
    h: f64,
    settings: &SolverSettings,
) -> Result<Solved<HalfStepState>> {
    let x = s.x.x;
    let u_minus = s.u_half.to_array();
    let x_old_half = v3::axpy(x, -0.5 * h, s.u_half.u);
    let fbar = |u_plus: Vec4| {
        let x_new_half = v3::axpy(x, 0.5 * h, [u_plus[1], u_plus[2], u_plus[3]]);
        dg_faraday(model, kind, x_new_half, x_old_half, x)
    };
    let residual = |u_plus: Vec4, f: &Matrix4| {
        let lhs = minkowski_apply(v4::sub(u_plus, u_minus));
        let rhs = f.mul_vec(v4::add(u_plus, u_minus));
        v4::axpy(lhs, -0.5 * h, rhs)
    };
    let scale = 1.0 + v4::norm_inf(u_minus);
    let target = settings.tol * scale;

    let mut u = cayley_update(&faraday(model, x), u_minus, h)?;
    let mut iterations = 0;
    let mut last = f64::INFINITY;
    let mut guard = StallGuard::new(scale);

    if settings.scheme == SolverScheme::FixedPoint {
        while iterations < settings.max_iter {
            let f = fbar(u);
            last = v4::norm_inf(residual(u, &f));
            if last <= target {
                return Ok(finish_dg(s, u, h, iterations));
            }
            if let Some(best) = guard.observe(last, u) {
                let polished = cayley_update(&fbar(best), u_minus, h)?;
                return Ok(finish_dg(s, polished, h, iterations));
            }
            u = cayley_update(&f, u_minus, h)?;
            iterations += 1;
        }
    }

    // Newton on the residual with a finite-difference Jacobian.
    let full = |v: Vec4| residual(v, &fbar(v));
    let mut newton_iters = 0;
    while newton_iters < settings.max_iter {
        let r = full(u);
        last = v4::norm_inf(r);
        if last <= target {
            // Project through one skew solve so the mass shell stays exact.
            let polished = cayley_update(&fbar(u), u_minus, h)?;
            return Ok(finish_dg(s, polished, h, iterations + newton_iters));
        }
        if let Some(best) = guard.observe(last, u) {
            let polished = cayley_update(&fbar(best), u_minus, h)?;
            return Ok(finish_dg(s, polished, h, iterations + newton_iters));
        }
        let jac = fd_jacobian(full, u);
        let d = gauss_solve(jac, r.map(|v| [-v]))?;
        u = v4::add(u, d.map(|v| v[0]));
        newton_iters += 1;
    }
    Err(Error::NoConvergence {
        iterations: iterations + newton_iters,
        residual: last / scale,
    })
}

fn finish_dg(s: &HalfStepState, u: Vec4, h: f64, iterations: usize) -> Solved<HalfStepState> {
    let u_plus = Velocity4::from_array(u);
    Solved {
        state: HalfStepState {
            x: s.x.advance(h, u_plus),
            u_half: u_plus,
            step_index: s.step_index + 1,
        },
        iterations,
    }
}

/// One step of the variational leapfrog method, `(xⁿ, pⁿ) ↦ (x^{n+1}, p^{n+1})`.
///
/// Newton's method is applied to
/// `(M − ½h𝐀′(xⁿ)ᵀ) u + ½(𝐀(xⁿ) + 𝐀(xⁿ + h u)) − pⁿ = 0`
/// in the unknown `u = u^{n+1/2} = (x^{n+1} − xⁿ)/h`; its Jacobian
/// `M − ½h𝐀′(xⁿ)ᵀ + ½h𝐀′(x^{n+1})` is exact. Solving for the velocity
/// instead of the position avoids cancellation in `x^{n+1} − xⁿ` once the
/// time coordinate has grown large.
pub fn variational_step<M: FieldModel + ?Sized>(
    model: &M,
    s: &PhaseState,
    h: f64,
    settings: &SolverSettings,
) -> Result<VariationalStep> {
    let x = s.x;
    let p = s.p.0;
    let a_here = model.augmented_potential(&x);
    let jac_here = model.augmented_jacobian(&x);
    let k = Matrix4::MINKOWSKI - jac_here.transpose().scale(0.5 * h);
    let target = settings.tol * (1.0 + v4::norm_inf(p));

    let mut u = minkowski_apply(v4::sub(p, a_here));
    let mut last = f64::INFINITY;
    let mut stalled = false;
    for iterations in 0..=settings.max_iter {
        let next = x.advance(h, Velocity4::from_array(u));
        let a_next = model.augmented_potential(&next);
        let g = v4::sub(
            v4::add(k.mul_vec(u), v4::scale(0.5, v4::add(a_here, a_next))),
            p,
        );
        last = v4::norm_inf(g);
        if last <= target || stalled {
            let jac_next = model.augmented_jacobian(&next);
            let k_next = Matrix4::MINKOWSKI + jac_next.transpose().scale(0.5 * h);
            let p_next = v4::add(k_next.mul_vec(u), v4::scale(0.5, v4::add(a_here, a_next)));
            return Ok(VariationalStep {
                state: PhaseState {
                    x: next,
                    p: Momentum4(p_next),
                },
                u_half: Velocity4::from_array(u),
                iterations,
            });
        }
        if iterations == settings.max_iter {
            break;
        }
        let jac = k + model.augmented_jacobian(&next).scale(0.5 * h);
        let d = solve4(&jac, v4::scale(-1.0, g))?;
        u = v4::add(u, d);
        // A correction at round-off level cannot reduce the residual further.
        stalled = v4::norm_inf(d) <= 8.0 * f64::EPSILON * (1.0 + v4::norm_inf(u));
    }
    Err(Error::NoConvergence {
        iterations: settings.max_iter,
        residual: last / (1.0 + v4::norm_inf(p)),
    })
}

/// Residual of the two-step discrete Euler–Lagrange equations
/// `M(x⁺ − 2x + x⁻)/h² − 𝐀′(x)ᵀ(x⁺ − x⁻)/2h + (𝐀(x⁺) − 𝐀(x⁻))/2h`.
pub fn variational_two_step_residual<M: FieldModel + ?Sized>(
    model: &M,
    x_prev: &Position4,
    x_cur: &Position4,
    x_next: &Position4,
    h: f64,
) -> Vec4 {
    let (a, b, c) = (x_prev.to_array(), x_cur.to_array(), x_next.to_array());
    // (x⁺ − x) − (x − x⁻) keeps the second difference accurate.
    let second = v4::sub(v4::sub(c, b), v4::sub(b, a));
    let lhs = minkowski_apply(v4::scale(1.0 / (h * h), second));
    let central = v4::scale(1.0 / (2.0 * h), v4::sub(c, a));
    let force = model.augmented_jacobian(x_cur).transpose().mul_vec(central);
    let diff = v4::scale(
        1.0 / (2.0 * h),
        v4::sub(model.augmented_potential(x_next), model.augmented_potential(x_prev)),
    );
    v4::add(v4::sub(lhs, force), diff)
}

/// Grid-point momentum `uⁿ = ½(u^{n+1/2} + u^{n−1/2})`.
pub fn grid_momentum(u_minus: Velocity4, u_plus: Velocity4) -> Velocity4 {
    Velocity4 {
        gamma: 0.5 * (u_minus.gamma + u_plus.gamma),
        u: v3::midpoint(u_minus.u, u_plus.u),
    }
}
