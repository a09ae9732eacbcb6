use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fields::{DiscreteGradientKind, FieldModel};
use crate::minkowski::{minkowski_apply, v3, v4, Matrix4, Momentum4, Position4, Velocity4};

use super::nonrel::{boris_step, nonrel_dg_step, nonrel_variational_step, NonRelState};
use super::relativistic::{
    check_step_size, dg_lf_step, explicit_lf_step, grid_momentum, variational_step,
    HalfStepState, PhaseState,
};
use super::SolverSettings;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    Explicit,
    DgradMidpoint,
    DgradAvf,
    Variational,
    Boris,
    /// Non-relativistic discrete-gradient leapfrog with the midpoint discrete gradient.
    NonrelDgrad,
    NonrelVariational,
}

impl Method {
    pub const ALL: [Method; 7] = [
        Method::Explicit,
        Method::DgradMidpoint,
        Method::DgradAvf,
        Method::Variational,
        Method::Boris,
        Method::NonrelDgrad,
        Method::NonrelVariational,
    ];

    pub const RELATIVISTIC: [Method; 4] = [
        Method::Explicit,
        Method::DgradMidpoint,
        Method::DgradAvf,
        Method::Variational,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Method::Explicit => "explicit",
            Method::DgradMidpoint => "dgrad-midpoint",
            Method::DgradAvf => "dgrad-avf",
            Method::Variational => "variational",
            Method::Boris => "boris",
            Method::NonrelDgrad => "nonrel-dgrad",
            Method::NonrelVariational => "nonrel-variational",
        }
    }

    pub fn is_relativistic(self) -> bool {
        !matches!(self, Method::Boris | Method::NonrelDgrad | Method::NonrelVariational)
    }

    fn gradient_kind(self) -> Option<DiscreteGradientKind> {
        match self {
            Method::DgradMidpoint | Method::NonrelDgrad => Some(DiscreteGradientKind::Midpoint),
            Method::DgradAvf => Some(DiscreteGradientKind::AverageVectorField),
            _ => None,
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Method::ALL
            .into_iter()
            .find(|m| m.name() == s)
            .ok_or_else(|| {
                let names: Vec<_> = Method::ALL.iter().map(|m| m.name()).collect();
                Error::Invalid(format!("unknown method `{s}` (expected one of {})", names.join(", ")))
            })
    }
}

/// Values at grid point `τₙ = nh`.
///
/// For the non-relativistic methods `x.t = τ`, `u.gamma = 1` and `u.u` is the velocity.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GridPoint {
    pub n: u64,
    pub tau: f64,
    pub x: Position4,
    /// `uⁿ = ½(u^{n+1/2} + u^{n−1/2})`; the initial data at `n = 0`.
    pub u: Velocity4,
    /// `u^{n+1/2}`
    pub u_next: Velocity4,
    /// `pⁿ` for the variational method (including `n = 0`), `M uⁿ + 𝐀(xⁿ)` otherwise.
    pub p: Momentum4,
    /// The method's exactly conserved discrete energy, when it has one.
    pub discrete_energy: Option<f64>,
    pub iterations: usize,
}

#[derive(Clone, Copy, Debug)]
enum State {
    Half(HalfStepState),
    Phase {
        phase: PhaseState,
        u_prev: Velocity4,
        step_index: u64,
    },
    NonRel(NonRelState),
}

/// Drives one method from initial data and yields successive grid points.
///
/// All methods share the same starting procedure (the relativistic one, or
/// its non-relativistic limit), so for constant fields the relativistic
/// methods produce identical trajectories.
pub struct Propagator<'m, M: ?Sized> {
    model: &'m M,
    method: Method,
    h: f64,
    settings: SolverSettings,
    state: State,
    initial: GridPoint,
}

impl<'m, M: FieldModel + ?Sized> Propagator<'m, M> {
    pub fn new(
        model: &'m M,
        method: Method,
        h: f64,
        settings: SolverSettings,
        x0: Position4,
        u0: Velocity4,
    ) -> Result<Self> {
        settings.validate()?;
        if !(x0.is_finite() && u0.is_finite()) {
            return Err(Error::Invalid("initial data must be finite".into()));
        }
        if method.is_relativistic() {
            check_step_size(model, &x0, h)?;
        } else if !(h.is_finite() && h > 0.0) {
            return Err(Error::Invalid(format!("step size must be positive, got {h}")));
        }

        let p_cont = |x: &Position4, u: Velocity4| {
            Momentum4(v4::add(minkowski_apply(u.to_array()), model.augmented_potential(x)))
        };

        let (state, initial) = if method.is_relativistic() {
            let half = HalfStepState::start(model, x0, u0, h);
            let u_half = half.u_half;
            let mut initial = GridPoint {
                n: 0,
                tau: 0.0,
                x: x0,
                u: u0,
                u_next: u_half,
                p: p_cont(&x0, u0),
                discrete_energy: None,
                iterations: 0,
            };
            let state = match method {
                Method::Variational => {
                    initial.discrete_energy =
                        Some(u_half.gamma + 0.5 * (model.phi(x0.x) + model.phi(half.x.x)));
                    // p⁰ = −∂L/∂x⁰ of the first discrete Lagrangian, so that the
                    // discrete Noether invariant is conserved from n = 0 on.
                    let k = Matrix4::MINKOWSKI - model.augmented_jacobian(&x0).transpose().scale(0.5 * h);
                    let avg = v4::scale(
                        0.5,
                        v4::add(model.augmented_potential(&x0), model.augmented_potential(&half.x)),
                    );
                    initial.p = Momentum4(v4::add(k.mul_vec(u_half.to_array()), avg));
                    State::Phase {
                        phase: PhaseState::from_half_step(model, &half, h),
                        u_prev: u_half,
                        step_index: 1,
                    }
                }
                Method::DgradMidpoint | Method::DgradAvf => {
                    initial.discrete_energy =
                        Some(u_half.gamma + model.phi(v3::axpy(x0.x, 0.5 * h, u_half.u)));
                    State::Half(half)
                }
                _ => State::Half(half),
            };
            (state, initial)
        } else {
            let s = NonRelState::start(model, x0.x, u0.u, h);
            let u_next = Velocity4::new(1.0, s.v_half);
            let u = Velocity4::new(1.0, u0.u);
            let x = Position4::new(0.0, x0.x);
            let discrete_energy = (method == Method::NonrelDgrad).then(|| {
                0.5 * v3::dot(s.v_half, s.v_half) + model.phi(v3::axpy(x0.x, 0.5 * h, s.v_half))
            });
            let initial = GridPoint {
                n: 0,
                tau: 0.0,
                x,
                u,
                u_next,
                p: p_cont(&x, u),
                discrete_energy,
                iterations: 0,
            };
            (State::NonRel(s), initial)
        };

        Ok(Self {
            model,
            method,
            h,
            settings,
            state,
            initial,
        })
    }

    pub fn method(&self) -> Method {
        self.method
    }

    pub fn step_size(&self) -> f64 {
        self.h
    }

    /// Grid point `n = 0`.
    pub fn initial(&self) -> GridPoint {
        self.initial
    }

    /// Index of the grid point the next call to [`advance`](Self::advance) returns.
    pub fn next_index(&self) -> u64 {
        match &self.state {
            State::Half(s) => s.step_index,
            State::Phase { step_index, .. } => *step_index,
            State::NonRel(s) => s.step_index,
        }
    }

    /// Takes one step from `xⁿ` and returns grid point `n`.
    pub fn advance(&mut self) -> Result<GridPoint> {
        let model = self.model;
        let h = self.h;
        let n = self.next_index();
        let tau = n as f64 * h;
        let p_cont = |x: &Position4, u: Velocity4| {
            Momentum4(v4::add(minkowski_apply(u.to_array()), model.augmented_potential(x)))
        };

        match self.state {
            State::Half(s) => {
                let (next, iterations) = match self.method.gradient_kind() {
                    None => (explicit_lf_step(model, &s, h)?, 0),
                    Some(kind) => {
                        let out = dg_lf_step(model, kind, &s, h, &self.settings)?;
                        (out.state, out.iterations)
                    }
                };
                let u = grid_momentum(s.u_half, next.u_half);
                let discrete_energy = self.method.gradient_kind().map(|_| {
                    next.u_half.gamma + model.phi(v3::axpy(s.x.x, 0.5 * h, next.u_half.u))
                });
                self.state = State::Half(next);
                Ok(GridPoint {
                    n,
                    tau,
                    x: s.x,
                    u,
                    u_next: next.u_half,
                    p: p_cont(&s.x, u),
                    discrete_energy,
                    iterations,
                })
            }
            State::Phase {
                phase,
                u_prev,
                step_index,
            } => {
                let out = variational_step(model, &phase, h, &self.settings)?;
                let u = grid_momentum(u_prev, out.u_half);
                let discrete_energy =
                    out.u_half.gamma + 0.5 * (model.phi(phase.x.x) + model.phi(out.state.x.x));
                self.state = State::Phase {
                    phase: out.state,
                    u_prev: out.u_half,
                    step_index: step_index + 1,
                };
                Ok(GridPoint {
                    n,
                    tau,
                    x: phase.x,
                    u,
                    u_next: out.u_half,
                    p: phase.p,
                    discrete_energy: Some(discrete_energy),
                    iterations: out.iterations,
                })
            }
            State::NonRel(s) => {
                let (next, iterations) = match self.method {
                    Method::Boris => {
                        let (x, v_half) = boris_step(model, s.x, s.v_half, h)?;
                        (
                            NonRelState {
                                x,
                                v_half,
                                step_index: s.step_index + 1,
                            },
                            0,
                        )
                    }
                    Method::NonrelDgrad => {
                        let out = nonrel_dg_step(
                            model,
                            DiscreteGradientKind::Midpoint,
                            &s,
                            h,
                            &self.settings,
                        )?;
                        (out.state, out.iterations)
                    }
                    _ => {
                        let out = nonrel_variational_step(model, &s, h, &self.settings)?;
                        (out.state, out.iterations)
                    }
                };
                let v = v3::midpoint(s.v_half, next.v_half);
                let discrete_energy = (self.method == Method::NonrelDgrad).then(|| {
                    0.5 * v3::dot(next.v_half, next.v_half)
                        + model.phi(v3::axpy(s.x, 0.5 * h, next.v_half))
                });
                self.state = State::NonRel(next);
                let x = Position4::new(tau, s.x);
                let u = Velocity4::new(1.0, v);
                Ok(GridPoint {
                    n,
                    tau,
                    x,
                    u,
                    u_next: Velocity4::new(1.0, next.v_half),
                    p: p_cont(&x, u),
                    discrete_energy,
                    iterations,
                })
            }
        }
    }

    /// Advances to grid point `n` (at least 1) and returns it.
    pub fn run_to(&mut self, n: u64) -> Result<GridPoint> {
        if n == 0 {
            return Ok(self.initial);
        }
        loop {
            let g = self.advance()?;
            if g.n >= n {
                return Ok(g);
            }
        }
    }
}

/// Number of steps `round(tau_end / h)` covering `[0, tau_end]`.
pub fn step_count(tau_end: f64, h: f64) -> Result<u64> {
    if !(h.is_finite() && h > 0.0) {
        return Err(Error::Invalid(format!("step size must be positive, got {h}")));
    }
    if !(tau_end.is_finite() && tau_end > 0.0) {
        return Err(Error::Invalid(format!("tau_end must be positive, got {tau_end}")));
    }
    Ok(((tau_end / h).round() as u64).max(1))
}
