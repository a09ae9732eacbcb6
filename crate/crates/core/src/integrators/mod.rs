//! Leapfrog steppers.
//!
//! The relativistic methods advance the half-step state `(xⁿ, u^{n−1/2})`
//! (explicit and discrete-gradient leapfrog) or the phase-space state
//! `(xⁿ, pⁿ)` (variational leapfrog). The non-relativistic limit methods
//! advance `(xⁿ, v^{n−1/2})`. [`Propagator`] drives any of them and emits
//! grid-point values.

mod nonrel;
mod propagate;
mod relativistic;

use serde::{Deserialize, Serialize};

pub use nonrel::{
    boris_step, nonrel_dg_step, nonrel_two_step_residual, nonrel_variational_step,
    start_nonrel_half_step, NonRelState,
};
pub use propagate::{step_count, GridPoint, Method, Propagator};
pub use relativistic::{
    check_step_size, dg_lf_step, explicit_lf_step, grid_momentum, start_half_step,
    variational_step, variational_two_step_residual, HalfStepState, PhaseState, VariationalStep,
};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SolverScheme {
    /// Picard iteration, with a finite-difference Newton fallback.
    #[default]
    FixedPoint,
    Newton,
}

/// Controls for the implicit solves.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SolverSettings {
    /// Relative residual tolerance.
    pub tol: f64,
    pub max_iter: usize,
    pub scheme: SolverScheme,
}

impl Default for SolverSettings {
    fn default() -> Self {
        Self {
            tol: 1e-14,
            max_iter: 50,
            scheme: SolverScheme::FixedPoint,
        }
    }
}

impl SolverSettings {
    pub fn validate(&self) -> crate::Result<()> {
        if !(self.tol > 0.0 && self.tol.is_finite()) {
            return Err(crate::Error::Invalid(format!("solver tol must be > 0, got {}", self.tol)));
        }
        if self.max_iter < 1 {
            return Err(crate::Error::Invalid("solver max_iter must be >= 1".into()));
        }
        Ok(())
    }
}

/// A state produced by an implicit stepper, with the iteration count it took.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Solved<S> {
    pub state: S,
    pub iterations: usize,
}

/// Relative residual below which an iteration that has stopped contracting is
/// accepted. Discrete gradients lose digits to cancellation in `φ(b) − φ(a)`,
/// so their residual bottoms out above a tight `tol`.
pub(crate) const STALL_RESIDUAL: f64 = 1e-10;

/// Tracks the best iterate of a solve and flags when the residual stops shrinking.
#[derive(Clone, Copy, Debug)]
pub(crate) struct StallGuard<T> {
    best: Option<(f64, T)>,
    prev: f64,
    floor: f64,
}

impl<T: Copy> StallGuard<T> {
    pub(crate) fn new(scale: f64) -> Self {
        Self {
            best: None,
            prev: f64::INFINITY,
            floor: STALL_RESIDUAL * scale,
        }
    }

    /// Record `(residual, iterate)`; returns the best iterate once progress stalls.
    pub(crate) fn observe(&mut self, residual: f64, iterate: T) -> Option<T> {
        if self.best.as_ref().is_none_or(|(r, _)| residual < *r) {
            self.best = Some((residual, iterate));
        }
        let stalled = residual > 0.5 * self.prev && residual <= self.floor;
        self.prev = residual;
        if stalled {
            self.best.map(|(_, v)| v)
        } else {
            None
        }
    }
}

/// Central-difference step for the fallback Newton Jacobians.
pub(crate) const FD_NEWTON_STEP: f64 = 1e-7;

/// Central-difference Jacobian of `f` at `at`.
pub(crate) fn fd_jacobian<const N: usize>(
    f: impl Fn([f64; N]) -> [f64; N],
    at: [f64; N],
) -> [[f64; N]; N] {
    let mut jac = [[0.0; N]; N];
    for k in 0..N {
        let d = FD_NEWTON_STEP * at[k].abs().max(1.0);
        let mut plus = at;
        let mut minus = at;
        plus[k] += d;
        minus[k] -= d;
        let fp = f(plus);
        let fm = f(minus);
        for i in 0..N {
            jac[i][k] = (fp[i] - fm[i]) / (2.0 * d);
        }
    }
    jac
}
