//! Non-relativistic limits of the three leapfrog methods: the Boris method,
//! its discrete-gradient variant and the variational integrator for
//! `ẋ = v, v̇ = E(x) + v × B(x)`.

use crate::error::{Error, Result};
use crate::fields::{discrete_gradient, DiscreteGradientKind, FieldModel, Matrix3};
use crate::minkowski::{gauss_solve, v3, Vec3};

use super::{fd_jacobian, SolverScheme, StallGuard, SolverSettings, Solved};

/// One-step state `(xⁿ, v^{n−1/2})`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct NonRelState {
    pub x: Vec3,
    pub v_half: Vec3,
    pub step_index: u64,
}

impl NonRelState {
    pub fn start<M: FieldModel + ?Sized>(model: &M, x0: Vec3, v0: Vec3, h: f64) -> Self {
        let v_half = start_nonrel_half_step(model, x0, v0, h);
        Self {
            x: v3::axpy(x0, h, v_half),
            v_half,
            step_index: 1,
        }
    }

    pub fn previous_position(&self, h: f64) -> Vec3 {
        v3::axpy(self.x, -h, self.v_half)
    }
}

/// `v^{1/2} = v⁰ + ½h(E(x⁰) + v⁰ × B(x⁰))`, the limit of the relativistic starting procedure.
pub fn start_nonrel_half_step<M: FieldModel + ?Sized>(model: &M, x0: Vec3, v0: Vec3, h: f64) -> Vec3 {
    let force = v3::add(model.electric_field(x0), v3::cross(v0, model.magnetic_field(x0)));
    v3::axpy(v0, 0.5 * h, force)
}

fn identity_plus(s: f64, m: &Matrix3) -> Matrix3 {
    let mut out = m.map(|row| row.map(|v| s * v));
    for (i, row) in out.iter_mut().enumerate() {
        row[i] += 1.0;
    }
    out
}

fn solve3(a: Matrix3, b: Vec3) -> Result<Vec3> {
    Ok(gauss_solve(a, b.map(|v| [v]))?.map(|r| r[0]))
}

/// `(I + ½hB̂) v⁺ = (I − ½hB̂) v⁻ + h·force`
fn rotate_and_kick(b: Vec3, force: Vec3, v_minus: Vec3, h: f64) -> Result<Vec3> {
    let bhat = v3::hat(b);
    let lhs = identity_plus(0.5 * h, &bhat);
    let rhs = v3::axpy(
        v3::axpy(v_minus, -0.5 * h, v3::mat_vec(&bhat, v_minus)),
        h,
        force,
    );
    solve3(lhs, rhs)
}

/// One Boris step: `v⁺ − v⁻ = hE(xⁿ) + ½h(v⁺ + v⁻) × B(xⁿ)`, then `x^{n+1} = xⁿ + hv⁺`.
pub fn boris_step<M: FieldModel + ?Sized>(model: &M, x: Vec3, v_half: Vec3, h: f64) -> Result<(Vec3, Vec3)> {
    let v_plus = rotate_and_kick(model.magnetic_field(x), model.electric_field(x), v_half, h)?;
    Ok((v3::axpy(x, h, v_plus), v_plus))
}

/// Boris step with `E(xⁿ)` replaced by `−∇̄φ(x^{n+1/2}, x^{n−1/2})`.
///
/// Conserves `½|v^{n+1/2}|² + φ(x^{n+1/2})` up to the solver tolerance.
pub fn nonrel_dg_step<M: FieldModel + ?Sized>(
    model: &M,
    kind: DiscreteGradientKind,
    s: &NonRelState,
    h: f64,
    settings: &SolverSettings,
) -> Result<Solved<NonRelState>> {
    let x = s.x;
    let v_minus = s.v_half;
    let b = model.magnetic_field(x);
    let bhat = v3::hat(b);
    let x_old_half = v3::axpy(x, -0.5 * h, v_minus);
    let force = |v_plus: Vec3| {
        let g = discrete_gradient(model, kind, v3::axpy(x, 0.5 * h, v_plus), x_old_half);
        v3::scale(-1.0, g)
    };
    let residual = |v_plus: Vec3| {
        let sum = v3::add(v_plus, v_minus);
        let r = v3::sub(v3::sub(v_plus, v_minus), v3::scale(h, force(v_plus)));
        v3::axpy(r, 0.5 * h, v3::mat_vec(&bhat, sum))
    };
    let scale = 1.0 + v3::norm_inf(v_minus);
    let target = settings.tol * scale;

    let mut v = rotate_and_kick(b, model.electric_field(x), v_minus, h)?;
    let mut iterations = 0;
    let mut last = f64::INFINITY;
    let mut guard = StallGuard::new(scale);
    if settings.scheme == SolverScheme::FixedPoint {
        while iterations < settings.max_iter {
            last = v3::norm_inf(residual(v));
            if last <= target {
                return Ok(finish(s, v, h, iterations));
            }
            if let Some(best) = guard.observe(last, v) {
                return Ok(finish(s, best, h, iterations));
            }
            v = rotate_and_kick(b, force(v), v_minus, h)?;
            iterations += 1;
        }
    }
    let mut newton_iters = 0;
    while newton_iters < settings.max_iter {
        let r = residual(v);
        last = v3::norm_inf(r);
        if last <= target {
            return Ok(finish(s, v, h, iterations + newton_iters));
        }
        if let Some(best) = guard.observe(last, v) {
            return Ok(finish(s, best, h, iterations + newton_iters));
        }
        let jac = fd_jacobian(residual, v);
        let d = solve3(jac, v3::scale(-1.0, r))?;
        v = v3::add(v, d);
        newton_iters += 1;
    }
    Err(Error::NoConvergence {
        iterations: iterations + newton_iters,
        residual: last / scale,
    })
}

/// One step of the non-relativistic variational integrator
/// `(x⁺ − 2x + x⁻)/h² = E + ((x⁺ − x⁻)/2h) × B + A′(x)(x⁺ − x⁻)/2h − (A(x⁺) − A(x⁻))/2h`,
/// solved for `v⁺` by Newton's method with the exact Jacobian
/// `I − ½hA′(xⁿ)ᵀ + ½hA′(x^{n+1})`.
pub fn nonrel_variational_step<M: FieldModel + ?Sized>(
    model: &M,
    s: &NonRelState,
    h: f64,
    settings: &SolverSettings,
) -> Result<Solved<NonRelState>> {
    let x = s.x;
    let v_minus = s.v_half;
    let e = model.electric_field(x);
    let bhat = v3::hat(model.magnetic_field(x));
    let jac_here = model.vector_potential_jacobian(x);
    let a_prev = model.vector_potential(v3::axpy(x, -h, v_minus));
    let scale = 1.0 + v3::norm_inf(v_minus);
    let target = settings.tol * scale;

    let residual = |v_plus: Vec3, a_next: Vec3| {
        let sum = v3::add(v_plus, v_minus);
        let mut r = v3::sub(v3::sub(v_plus, v_minus), v3::scale(h, e));
        r = v3::axpy(r, 0.5 * h, v3::mat_vec(&bhat, sum));
        r = v3::axpy(r, -0.5 * h, v3::mat_vec(&jac_here, sum));
        v3::axpy(r, 0.5, v3::sub(a_next, a_prev))
    };

    let mut v = rotate_and_kick(model.magnetic_field(x), e, v_minus, h)?;
    let mut last = f64::INFINITY;
    let mut stalled = false;
    for iterations in 0..=settings.max_iter {
        let next = v3::axpy(x, h, v);
        let r = residual(v, model.vector_potential(next));
        last = v3::norm_inf(r);
        if last <= target || stalled {
            return Ok(finish(s, v, h, iterations));
        }
        if iterations == settings.max_iter {
            break;
        }
        let jac_next = model.vector_potential_jacobian(next);
        let mut jac = [[0.0; 3]; 3];
        for i in 0..3 {
            for j in 0..3 {
                jac[i][j] = 0.5 * h * (jac_next[i][j] - jac_here[j][i]);
            }
            jac[i][i] += 1.0;
        }
        let d = solve3(jac, v3::scale(-1.0, r))?;
        v = v3::add(v, d);
        stalled = v3::norm_inf(d) <= 8.0 * f64::EPSILON * (1.0 + v3::norm_inf(v));
    }
    Err(Error::NoConvergence {
        iterations: settings.max_iter,
        residual: last / scale,
    })
}

/// Residual of the two-step non-relativistic variational scheme.
pub fn nonrel_two_step_residual<M: FieldModel + ?Sized>(
    model: &M,
    x_prev: Vec3,
    x_cur: Vec3,
    x_next: Vec3,
    h: f64,
) -> Vec3 {
    let second = v3::sub(v3::sub(x_next, x_cur), v3::sub(x_cur, x_prev));
    let central = v3::scale(1.0 / (2.0 * h), v3::sub(x_next, x_prev));
    let mut rhs = v3::add(
        model.electric_field(x_cur),
        v3::cross(central, model.magnetic_field(x_cur)),
    );
    rhs = v3::add(rhs, v3::mat_vec(&model.vector_potential_jacobian(x_cur), central));
    rhs = v3::axpy(
        rhs,
        -1.0 / (2.0 * h),
        v3::sub(model.vector_potential(x_next), model.vector_potential(x_prev)),
    );
    v3::sub(v3::scale(1.0 / (h * h), second), rhs)
}

fn finish(s: &NonRelState, v: Vec3, h: f64, iterations: usize) -> Solved<NonRelState> {
    Solved {
        state: NonRelState {
            x: v3::axpy(s.x, h, v),
            v_half: v,
            step_index: s.step_index + 1,
        },
        iterations,
    }
}
