//! Fixed-size linear algebra on Minkowski space-time.
//!
//! Four-vectors are plain `[f64; 4]` arrays ordered `(t, x1, x2, x3)`. The
//! typed wrappers [`Position4`], [`Velocity4`] and [`Momentum4`] name the
//! role a four-vector plays; [`Matrix4`] carries the metric, the Faraday
//! tensor and the step operators built from them.

use std::ops::{Add, Mul, Neg, Sub};

use crate::error::Error;

pub type Vec3 = [f64; 3];
pub type Vec4 = [f64; 4];

/// Relative pivot threshold below which elimination reports a singular matrix.
pub const PIVOT_TOL: f64 = 1e-14;

pub(crate) mod v3 {
    use super::Vec3;

    #[inline]
    pub fn add(a: Vec3, b: Vec3) -> Vec3 {
        [a[0] + b[0], a[1] + b[1], a[2] + b[2]]
    }

    #[inline]
    pub fn sub(a: Vec3, b: Vec3) -> Vec3 {
        [a[0] - b[0], a[1] - b[1], a[2] - b[2]]
    }

    #[inline]
    pub fn scale(s: f64, a: Vec3) -> Vec3 {
        [s * a[0], s * a[1], s * a[2]]
    }

    /// `a + s * b`
    #[inline]
    pub fn axpy(a: Vec3, s: f64, b: Vec3) -> Vec3 {
        [a[0] + s * b[0], a[1] + s * b[1], a[2] + s * b[2]]
    }

    #[inline]
    pub fn dot(a: Vec3, b: Vec3) -> f64 {
        a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
    }

    #[inline]
    pub fn cross(a: Vec3, b: Vec3) -> Vec3 {
        [
            a[1] * b[2] - a[2] * b[1],
            a[2] * b[0] - a[0] * b[2],
            a[0] * b[1] - a[1] * b[0],
        ]
    }

    #[inline]
    pub fn norm(a: Vec3) -> f64 {
        dot(a, a).sqrt()
    }

    #[inline]
    pub fn norm_inf(a: Vec3) -> f64 {
        a.iter().fold(0.0_f64, |m, v| m.max(v.abs()))
    }

    #[inline]
    pub fn midpoint(a: Vec3, b: Vec3) -> Vec3 {
        [0.5 * (a[0] + b[0]), 0.5 * (a[1] + b[1]), 0.5 * (a[2] + b[2])]
    }

    /// Matrix `B̂` with `B̂ v = b × v`.
    #[inline]
    pub fn hat(b: Vec3) -> [[f64; 3]; 3] {
        [[0.0, -b[2], b[1]], [b[2], 0.0, -b[0]], [-b[1], b[0], 0.0]]
    }

    #[inline]
    pub fn mat_vec(m: &[[f64; 3]; 3], v: Vec3) -> Vec3 {
        [dot(m[0], v), dot(m[1], v), dot(m[2], v)]
    }
}

pub(crate) mod v4 {
    use super::Vec4;

    #[inline]
    pub fn add(a: Vec4, b: Vec4) -> Vec4 {
        [a[0] + b[0], a[1] + b[1], a[2] + b[2], a[3] + b[3]]
    }

    #[inline]
    pub fn sub(a: Vec4, b: Vec4) -> Vec4 {
        [a[0] - b[0], a[1] - b[1], a[2] - b[2], a[3] - b[3]]
    }

    #[inline]
    pub fn scale(s: f64, a: Vec4) -> Vec4 {
        [s * a[0], s * a[1], s * a[2], s * a[3]]
    }

    #[inline]
    pub fn axpy(a: Vec4, s: f64, b: Vec4) -> Vec4 {
        [a[0] + s * b[0], a[1] + s * b[1], a[2] + s * b[2], a[3] + s * b[3]]
    }

    #[inline]
    pub fn dot(a: Vec4, b: Vec4) -> f64 {
        a[0] * b[0] + a[1] * b[1] + a[2] * b[2] + a[3] * b[3]
    }

    #[inline]
    pub fn norm_inf(a: Vec4) -> f64 {
        a.iter().fold(0.0_f64, |m, v| m.max(v.abs()))
    }
}

/// Augmented space-time position `(t; x)`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Position4 {
    pub t: f64,
    pub x: Vec3,
}

impl Position4 {
    pub fn new(t: f64, x: Vec3) -> Self {
        Self { t, x }
    }

    pub fn to_array(self) -> Vec4 {
        [self.t, self.x[0], self.x[1], self.x[2]]
    }

    pub fn from_array(a: Vec4) -> Self {
        Self {
            t: a[0],
            x: [a[1], a[2], a[3]],
        }
    }

    pub fn is_finite(&self) -> bool {
        self.t.is_finite() && self.x.iter().all(|v| v.is_finite())
    }

    /// `self + h * u`
    pub fn advance(self, h: f64, u: Velocity4) -> Self {
        Self {
            t: self.t + h * u.gamma,
            x: v3::axpy(self.x, h, u.u),
        }
    }
}

/// Augmented momentum `(γ; u)`, the proper-time derivative of [`Position4`].
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Velocity4 {
    pub gamma: f64,
    pub u: Vec3,
}

impl Velocity4 {
    pub fn new(gamma: f64, u: Vec3) -> Self {
        Self { gamma, u }
    }

    /// The physical four-velocity with the given spatial momentum, `γ = √(1+|u|²)`.
    pub fn on_shell(u: Vec3) -> Self {
        Self {
            gamma: (1.0 + v3::dot(u, u)).sqrt(),
            u,
        }
    }

    pub fn to_array(self) -> Vec4 {
        [self.gamma, self.u[0], self.u[1], self.u[2]]
    }

    pub fn from_array(a: Vec4) -> Self {
        Self {
            gamma: a[0],
            u: [a[1], a[2], a[3]],
        }
    }

    pub fn is_finite(&self) -> bool {
        self.gamma.is_finite() && self.u.iter().all(|v| v.is_finite())
    }

    /// `γ² − |u|² − 1`, zero for a physical unit-mass particle.
    pub fn shell_defect(&self) -> f64 {
        self.gamma * self.gamma - v3::dot(self.u, self.u) - 1.0
    }
}

/// Conjugate momentum `p = M u + A(x)`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Momentum4(pub Vec4);

impl Momentum4 {
    pub fn to_array(self) -> Vec4 {
        self.0
    }
}

/// Dense 4×4 matrix, row-major.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Matrix4(pub [[f64; 4]; 4]);

impl Matrix4 {
    pub const ZERO: Self = Self([[0.0; 4]; 4]);

    pub const IDENTITY: Self = Self([
        [1.0, 0.0, 0.0, 0.0],
        [0.0, 1.0, 0.0, 0.0],
        [0.0, 0.0, 1.0, 0.0],
        [0.0, 0.0, 0.0, 1.0],
    ]);

    /// The Minkowski metric `diag(−1, 1, 1, 1)`. It is its own inverse.
    pub const MINKOWSKI: Self = Self([
        [-1.0, 0.0, 0.0, 0.0],
        [0.0, 1.0, 0.0, 0.0],
        [0.0, 0.0, 1.0, 0.0],
        [0.0, 0.0, 0.0, 1.0],
    ]);

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.0[i][j]
    }

    pub fn transpose(&self) -> Self {
        let mut out = [[0.0; 4]; 4];
        for (i, row) in self.0.iter().enumerate() {
            for (j, v) in row.iter().enumerate() {
                out[j][i] = *v;
            }
        }
        Self(out)
    }

    #[inline]
    pub fn mul_vec(&self, v: Vec4) -> Vec4 {
        let m = &self.0;
        [
            v4::dot(m[0], v),
            v4::dot(m[1], v),
            v4::dot(m[2], v),
            v4::dot(m[3], v),
        ]
    }

    pub fn scale(&self, s: f64) -> Self {
        Self(self.0.map(|row| row.map(|v| s * v)))
    }

    /// Largest absolute entry.
    pub fn max_abs(&self) -> f64 {
        self.0
            .iter()
            .flatten()
            .fold(0.0_f64, |m, v| m.max(v.abs()))
    }

    /// Maximum absolute row sum.
    pub fn norm_inf(&self) -> f64 {
        self.0
            .iter()
            .map(|row| row.iter().map(|v| v.abs()).sum::<f64>())
            .fold(0.0, f64::max)
    }

    /// `‖A + Aᵀ‖` measured entrywise.
    pub fn skew_defect(&self) -> f64 {
        (*self + self.transpose()).max_abs()
    }

    pub fn is_finite(&self) -> bool {
        self.0.iter().flatten().all(|v| v.is_finite())
    }

    /// Multiply each row by the metric, i.e. `M A`.
    pub fn minkowski_left(&self) -> Self {
        let mut out = self.0;
        out[0] = out[0].map(|v| -v);
        Self(out)
    }
}

impl Add for Matrix4 {
    type Output = Self;
    fn add(self, rhs: Self) -> Self {
        let mut out = self.0;
        for (row, r) in out.iter_mut().zip(rhs.0.iter()) {
            for (a, b) in row.iter_mut().zip(r.iter()) {
                *a += *b;
            }
        }
        Self(out)
    }
}

impl Sub for Matrix4 {
    type Output = Self;
    fn sub(self, rhs: Self) -> Self {
        self + (-rhs)
    }
}

impl Neg for Matrix4 {
    type Output = Self;
    fn neg(self) -> Self {
        self.scale(-1.0)
    }
}

impl Mul for Matrix4 {
    type Output = Self;
    fn mul(self, rhs: Self) -> Self {
        let mut out = [[0.0; 4]; 4];
        for (i, row) in out.iter_mut().enumerate() {
            for (j, v) in row.iter_mut().enumerate() {
                *v = (0..4).map(|k| self.0[i][k] * rhs.0[k][j]).sum();
            }
        }
        Self(out)
    }
}

/// `M v = (−v₀, v₁, v₂, v₃)`.
#[inline]
pub fn minkowski_apply(v: Vec4) -> Vec4 {
    [-v[0], v[1], v[2], v[3]]
}

/// Solves `a · y = b` for `y`.
pub fn solve4(a: &Matrix4, b: Vec4) -> Result<Vec4, Error> {
    let rhs = b.map(|v| [v]);
    let y = gauss_solve(a.0, rhs)?;
    Ok(y.map(|r| r[0]))
}

/// Cayley transform `(I − Z)⁻¹(I + Z)`, computed as a solve with four right-hand sides.
pub fn cayley(z: &Matrix4) -> Result<Matrix4, Error> {
    let lhs = Matrix4::IDENTITY - *z;
    let rhs = Matrix4::IDENTITY + *z;
    Ok(Matrix4(gauss_solve(lhs.0, rhs.0)?))
}

pub fn det4(a: &Matrix4) -> f64 {
    det(a.0)
}

/// Gaussian elimination with partial pivoting, `N` unknowns and `R` right-hand sides.
///
/// A pivot smaller than [`PIVOT_TOL`] times the largest entry of `a` is
/// treated as singular.
pub fn gauss_solve<const N: usize, const R: usize>(
    mut a: [[f64; N]; N],
    mut b: [[f64; R]; N],
) -> Result<[[f64; R]; N], Error> {
    let scale = a
        .iter()
        .flatten()
        .fold(0.0_f64, |m, v| m.max(v.abs()));
    if !scale.is_finite() {
        return Err(Error::NonFinite);
    }
    let threshold = PIVOT_TOL * scale;

    for col in 0..N {
        let mut piv = col;
        let mut best = a[col][col].abs();
        for (row, r) in a.iter().enumerate().skip(col + 1) {
            if r[col].abs() > best {
                best = r[col].abs();
                piv = row;
            }
        }
        if best <= threshold || best == 0.0 {
            return Err(Error::SingularMatrix {
                column: col,
                pivot: best,
            });
        }
        if piv != col {
            a.swap(piv, col);
            b.swap(piv, col);
        }
        let p = a[col][col];
        for row in col + 1..N {
            let f = a[row][col] / p;
            if f == 0.0 {
                continue;
            }
            a[row][col] = 0.0;
            for k in col + 1..N {
                a[row][k] -= f * a[col][k];
            }
            for k in 0..R {
                b[row][k] -= f * b[col][k];
            }
        }
    }

    let mut y = [[0.0; R]; N];
    for row in (0..N).rev() {
        for k in 0..R {
            let mut s = b[row][k];
            for j in row + 1..N {
                s -= a[row][j] * y[j][k];
            }
            y[row][k] = s / a[row][row];
        }
    }
    Ok(y)
}

/// Determinant by pivoted elimination; exactly zero when a column has no nonzero pivot.
pub fn det<const N: usize>(mut a: [[f64; N]; N]) -> f64 {
    let mut d = 1.0;
    for col in 0..N {
        let mut piv = col;
        for row in col + 1..N {
            if a[row][col].abs() > a[piv][col].abs() {
                piv = row;
            }
        }
        if a[piv][col] == 0.0 {
            return 0.0;
        }
        if piv != col {
            a.swap(piv, col);
            d = -d;
        }
        let p = a[col][col];
        d *= p;
        for row in col + 1..N {
            let f = a[row][col] / p;
            for k in col..N {
                a[row][k] -= f * a[col][k];
            }
        }
    }
    d
}
