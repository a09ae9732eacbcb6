//! Leapfrog integrators for relativistic charged-particle dynamics.
//!
//! The equations of motion are written in 4D space-time form,
//! `M ẍ = 𝐅(x) ẋ` with proper time as the independent variable, and
//! discretised by three leapfrog methods:
//!
//! - the explicit (linearly implicit) leapfrog method, which preserves the
//!   mass shell and phase-space volume;
//! - the discrete-gradient leapfrog method, which additionally preserves the
//!   energy `γ + φ(x)`;
//! - the variational leapfrog method, a symplectic map on `(x, p)` that
//!   preserves a discrete energy and Noether invariants.
//!
//! Their non-relativistic limits (Boris and friends) live alongside them.
//! [`diagnostics`] evaluates the conserved quantities and structure checks,
//! and [`experiment`] drives complete runs.

pub mod diagnostics;
pub mod error;
pub mod experiment;
pub mod fields;
pub mod integrators;
pub mod minkowski;

pub use error::{Error, Result};
