//! Electromagnetic field models.
//!
//! A model supplies the scalar potential `φ`, the vector potential `A` and
//! their first derivatives. Everything else used by the integrators is
//! derived from those: `E = −∇φ`, `B = ∇ × A`, the augmented potential
//! `𝐀(t; x) = (−φ(x); A(x))` with its 4×4 Jacobian, and the Faraday tensor.
//! Potentials are time-independent throughout.

use serde::{Deserialize, Serialize};

use crate::error::Error;
use crate::minkowski::{v3, Matrix4, Position4, Vec3, Vec4};

pub type Matrix3 = [[f64; 3]; 3];

/// Potentials and their derivatives at a spatial point.
pub trait FieldModel {
    fn phi(&self, x: Vec3) -> f64;

    fn grad_phi(&self, x: Vec3) -> Vec3;

    fn vector_potential(&self, x: Vec3) -> Vec3;

    /// `J[i][j] = ∂A_i/∂x_j`.
    fn vector_potential_jacobian(&self, x: Vec3) -> Matrix3;

    fn electric_field(&self, x: Vec3) -> Vec3 {
        v3::scale(-1.0, self.grad_phi(x))
    }

    fn magnetic_field(&self, x: Vec3) -> Vec3 {
        curl(&self.vector_potential_jacobian(x))
    }

    fn augmented_potential(&self, x: &Position4) -> Vec4 {
        let a = self.vector_potential(x.x);
        [-self.phi(x.x), a[0], a[1], a[2]]
    }

    /// `𝐀′ = (∂_j 𝐀_i)` over `(t, x1, x2, x3)`. The first column is zero.
    fn augmented_jacobian(&self, x: &Position4) -> Matrix4 {
        let g = self.grad_phi(x.x);
        let j = self.vector_potential_jacobian(x.x);
        Matrix4([
            [0.0, -g[0], -g[1], -g[2]],
            [0.0, j[0][0], j[0][1], j[0][2]],
            [0.0, j[1][0], j[1][1], j[1][2]],
            [0.0, j[2][0], j[2][1], j[2][2]],
        ])
    }
}

impl<M: FieldModel + ?Sized> FieldModel for &M {
    fn phi(&self, x: Vec3) -> f64 {
        (**self).phi(x)
    }
    fn grad_phi(&self, x: Vec3) -> Vec3 {
        (**self).grad_phi(x)
    }
    fn vector_potential(&self, x: Vec3) -> Vec3 {
        (**self).vector_potential(x)
    }
    fn vector_potential_jacobian(&self, x: Vec3) -> Matrix3 {
        (**self).vector_potential_jacobian(x)
    }
    fn electric_field(&self, x: Vec3) -> Vec3 {
        (**self).electric_field(x)
    }
    fn magnetic_field(&self, x: Vec3) -> Vec3 {
        (**self).magnetic_field(x)
    }
}

/// `∇ × A` from the Jacobian `J[i][j] = ∂A_i/∂x_j`.
pub fn curl(j: &Matrix3) -> Vec3 {
    [j[2][1] - j[1][2], j[0][2] - j[2][0], j[1][0] - j[0][1]]
}

/// Faraday tensor from field values: first row `(0, −Eᵀ)`, first column `(0; E)`,
/// lower-right block `−B̂`.
pub fn faraday_from_fields(e: Vec3, b: Vec3) -> Matrix4 {
    Matrix4([
        [0.0, -e[0], -e[1], -e[2]],
        [e[0], 0.0, b[2], -b[1]],
        [e[1], -b[2], 0.0, b[0]],
        [e[2], b[1], -b[0], 0.0],
    ])
}

/// Faraday tensor `𝐅(x)` of a model.
pub fn faraday<M: FieldModel + ?Sized>(model: &M, x: Vec3) -> Matrix4 {
    let f = faraday_from_fields(model.electric_field(x), model.magnetic_field(x));
    debug_assert_eq!(f.skew_defect(), 0.0);
    f
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DiscreteGradientKind {
    Midpoint,
    AverageVectorField,
}

/// Midpoint (Gonzalez) discrete gradient of `φ`.
pub fn midpoint_dgrad<M: FieldModel + ?Sized>(model: &M, x_new: Vec3, x_old: Vec3) -> Vec3 {
    let mid = v3::midpoint(x_new, x_old);
    let dx = v3::sub(x_new, x_old);
    let g = model.grad_phi(mid);
    let dx2 = v3::dot(dx, dx);
    if dx2.sqrt() < 1e-12 * (1.0 + v3::norm(mid)) {
        return g;
    }
    let corr = (model.phi(x_new) - model.phi(x_old) - v3::dot(g, dx)) / dx2;
    v3::axpy(g, corr, dx)
}

// 5-point Gauss-Legendre rule mapped to [0, 1].
const GL5_NODES: [f64; 5] = [
    0.046_910_077_030_668_004,
    0.230_765_344_947_158_45,
    0.5,
    0.769_234_655_052_841_6,
    0.953_089_922_969_332,
];
const GL5_WEIGHTS: [f64; 5] = [
    0.118_463_442_528_094_54,
    0.239_314_335_249_683_23,
    0.284_444_444_444_444_45,
    0.239_314_335_249_683_23,
    0.118_463_442_528_094_54,
];

/// Average-vector-field discrete gradient `∫₀¹ ∇φ(x_old + θ(x_new − x_old)) dθ`.
///
/// Exact for polynomial potentials of degree up to 10.
pub fn avf_dgrad<M: FieldModel + ?Sized>(model: &M, x_new: Vec3, x_old: Vec3) -> Vec3 {
    let dx = v3::sub(x_new, x_old);
    let mut acc = [0.0; 3];
    for (theta, w) in GL5_NODES.iter().zip(GL5_WEIGHTS.iter()) {
        let g = model.grad_phi(v3::axpy(x_old, *theta, dx));
        acc = v3::axpy(acc, *w, g);
    }
    acc
}

pub fn discrete_gradient<M: FieldModel + ?Sized>(
    model: &M,
    kind: DiscreteGradientKind,
    x_new: Vec3,
    x_old: Vec3,
) -> Vec3 {
    match kind {
        DiscreteGradientKind::Midpoint => midpoint_dgrad(model, x_new, x_old),
        DiscreteGradientKind::AverageVectorField => avf_dgrad(model, x_new, x_old),
    }
}

/// Faraday tensor with the electric field replaced by the discrete gradient
/// `−∇̄φ(x_new_half, x_old_half)`; the magnetic block is taken at `x_mid`.
pub fn dg_faraday<M: FieldModel + ?Sized>(
    model: &M,
    kind: DiscreteGradientKind,
    x_new_half: Vec3,
    x_old_half: Vec3,
    x_mid: Vec3,
) -> Matrix4 {
    let g = discrete_gradient(model, kind, x_new_half, x_old_half);
    faraday_from_fields(v3::scale(-1.0, g), model.magnetic_field(x_mid))
}

/// The vector potential `(r/3)(−x₂, x₁, 0)`, `r = √(x₁²+x₂²)`, whose curl is `(0, 0, r)`.
fn axial_potential(x: Vec3) -> Vec3 {
    let r = x[0].hypot(x[1]);
    [-x[1] * r / 3.0, x[0] * r / 3.0, 0.0]
}

fn axial_potential_jacobian(x: Vec3) -> Matrix3 {
    let r = x[0].hypot(x[1]);
    if r == 0.0 {
        return [[0.0; 3]; 3];
    }
    let (x1, x2) = (x[0], x[1]);
    [
        [-x1 * x2 / (3.0 * r), -(r + x2 * x2 / r) / 3.0, 0.0],
        [(r + x1 * x1 / r) / 3.0, x1 * x2 / (3.0 * r), 0.0],
        [0.0; 3],
    ]
}

fn quartic_phi(x: Vec3) -> f64 {
    let [x1, x2, x3] = x;
    x1.powi(3) - x2.powi(3) + x1.powi(4) / 5.0 + x2.powi(4) + x3.powi(4)
}

fn quartic_grad(x: Vec3) -> Vec3 {
    let [x1, x2, x3] = x;
    [
        3.0 * x1 * x1 + 0.8 * x1.powi(3),
        -3.0 * x2 * x2 + 4.0 * x2.powi(3),
        4.0 * x3.powi(3),
    ]
}

/// The built-in field configurations.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BuiltinField {
    /// `φ = x₁² + 2x₂² + 3x₃² − x₁`, `B = (0, 0, r)`.
    Example1,
    /// `φ = x₁³ − x₂³ + x₁⁴/5 + x₂⁴ + x₃⁴`, `B = (0, 0, r)`.
    Example2,
    /// Same `φ` as `Example2`, `B = (0, 0, 1)`.
    Example3,
    /// Homogeneous fields with `φ = −E·x` and `A = ½ B × x`.
    ConstantEB { e: Vec3, b: Vec3 },
    /// `φ = |x|²`, `B = (0, 0, r)`; invariant under rotations about the x₃ axis.
    Axisymmetric,
    Zero,
}

impl BuiltinField {
    /// The magnetic field as a closed-form expression, independent of the potential.
    pub fn stated_magnetic_field(&self, x: Vec3) -> Vec3 {
        match self {
            Self::Example1 | Self::Example2 | Self::Axisymmetric => [0.0, 0.0, x[0].hypot(x[1])],
            Self::Example3 => [0.0, 0.0, 1.0],
            Self::ConstantEB { b, .. } => *b,
            Self::Zero => [0.0; 3],
        }
    }

    /// True when `φ` is a polynomial of degree at most two.
    pub fn has_quadratic_potential(&self) -> bool {
        matches!(
            self,
            Self::Example1 | Self::ConstantEB { .. } | Self::Axisymmetric | Self::Zero
        )
    }
}

impl FieldModel for BuiltinField {
    fn phi(&self, x: Vec3) -> f64 {
        let [x1, x2, x3] = x;
        match self {
            Self::Example1 => x1 * x1 + 2.0 * x2 * x2 + 3.0 * x3 * x3 - x1,
            Self::Example2 | Self::Example3 => quartic_phi(x),
            Self::ConstantEB { e, .. } => -v3::dot(*e, x),
            Self::Axisymmetric => v3::dot(x, x),
            Self::Zero => 0.0,
        }
    }

    fn grad_phi(&self, x: Vec3) -> Vec3 {
        let [x1, x2, x3] = x;
        match self {
            Self::Example1 => [2.0 * x1 - 1.0, 4.0 * x2, 6.0 * x3],
            Self::Example2 | Self::Example3 => quartic_grad(x),
            Self::ConstantEB { e, .. } => v3::scale(-1.0, *e),
            Self::Axisymmetric => v3::scale(2.0, x),
            Self::Zero => [0.0; 3],
        }
    }

    fn vector_potential(&self, x: Vec3) -> Vec3 {
        match self {
            Self::Example1 | Self::Example2 | Self::Axisymmetric => axial_potential(x),
            Self::Example3 => [-0.5 * x[1], 0.5 * x[0], 0.0],
            Self::ConstantEB { b, .. } => v3::scale(0.5, v3::cross(*b, x)),
            Self::Zero => [0.0; 3],
        }
    }

    fn vector_potential_jacobian(&self, x: Vec3) -> Matrix3 {
        match self {
            Self::Example1 | Self::Example2 | Self::Axisymmetric => axial_potential_jacobian(x),
            Self::Example3 => [[0.0, -0.5, 0.0], [0.5, 0.0, 0.0], [0.0; 3]],
            Self::ConstantEB { b, .. } => v3::hat(*b).map(|row| row.map(|v| 0.5 * v)),
            Self::Zero => [[0.0; 3]; 3],
        }
    }
}

/// Highest power allowed per variable in a user polynomial.
pub const MAX_POLY_DEGREE: u32 = 6;

/// One term `coef · x₁^i x₂^j x₃^k`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Monomial {
    pub coef: f64,
    pub pow: [u32; 3],
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Polynomial3 {
    pub terms: Vec<Monomial>,
}

impl Polynomial3 {
    pub fn new(terms: Vec<Monomial>) -> Self {
        Self { terms }
    }

    pub fn eval(&self, x: Vec3) -> f64 {
        self.terms
            .iter()
            .map(|m| m.coef * x[0].powi(m.pow[0] as i32) * x[1].powi(m.pow[1] as i32) * x[2].powi(m.pow[2] as i32))
            .sum()
    }

    pub fn gradient(&self, x: Vec3) -> Vec3 {
        let mut g = [0.0; 3];
        for m in &self.terms {
            for (k, gk) in g.iter_mut().enumerate() {
                let p = m.pow[k];
                if p == 0 {
                    continue;
                }
                let mut term = m.coef * p as f64;
                for (i, xi) in x.iter().enumerate() {
                    let e = if i == k { p - 1 } else { m.pow[i] };
                    term *= xi.powi(e as i32);
                }
                *gk += term;
            }
        }
        g
    }

    pub fn validate(&self) -> Result<(), Error> {
        for m in &self.terms {
            if !m.coef.is_finite() {
                return Err(Error::Invalid("polynomial coefficient is not finite".into()));
            }
            if m.pow.iter().any(|&p| p > MAX_POLY_DEGREE) {
                return Err(Error::Invalid(format!(
                    "polynomial power {:?} exceeds {MAX_POLY_DEGREE} per variable",
                    m.pow
                )));
            }
        }
        Ok(())
    }
}

/// User-supplied polynomial potentials.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct PolynomialField {
    pub phi: Polynomial3,
    #[serde(default)]
    pub a: [Polynomial3; 3],
}

impl PolynomialField {
    pub fn validate(&self) -> Result<(), Error> {
        self.phi.validate()?;
        self.a.iter().try_for_each(Polynomial3::validate)
    }
}

impl FieldModel for PolynomialField {
    fn phi(&self, x: Vec3) -> f64 {
        self.phi.eval(x)
    }
    fn grad_phi(&self, x: Vec3) -> Vec3 {
        self.phi.gradient(x)
    }
    fn vector_potential(&self, x: Vec3) -> Vec3 {
        [self.a[0].eval(x), self.a[1].eval(x), self.a[2].eval(x)]
    }
    fn vector_potential_jacobian(&self, x: Vec3) -> Matrix3 {
        [self.a[0].gradient(x), self.a[1].gradient(x), self.a[2].gradient(x)]
    }
}

/// A model with `φ → ε²φ` and `A → εA`, the small-field scaling of the
/// non-relativistic limit.
#[derive(Clone, Copy, Debug)]
pub struct ScaledField<M> {
    pub inner: M,
    pub epsilon: f64,
}

impl<M: FieldModel> FieldModel for ScaledField<M> {
    fn phi(&self, x: Vec3) -> f64 {
        self.epsilon * self.epsilon * self.inner.phi(x)
    }
    fn grad_phi(&self, x: Vec3) -> Vec3 {
        v3::scale(self.epsilon * self.epsilon, self.inner.grad_phi(x))
    }
    fn vector_potential(&self, x: Vec3) -> Vec3 {
        v3::scale(self.epsilon, self.inner.vector_potential(x))
    }
    fn vector_potential_jacobian(&self, x: Vec3) -> Matrix3 {
        self.inner
            .vector_potential_jacobian(x)
            .map(|row| row.map(|v| self.epsilon * v))
    }
}

/// Any model the experiment driver can construct.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Field {
    Builtin(BuiltinField),
    Polynomial(PolynomialField),
}

impl Field {
    pub fn validate(&self) -> Result<(), Error> {
        match self {
            Self::Builtin(BuiltinField::ConstantEB { e, b }) => {
                if e.iter().chain(b.iter()).all(|v| v.is_finite()) {
                    Ok(())
                } else {
                    Err(Error::Invalid("constant fields must be finite".into()))
                }
            }
            Self::Builtin(_) => Ok(()),
            Self::Polynomial(p) => p.validate(),
        }
    }
}

impl FieldModel for Field {
    fn phi(&self, x: Vec3) -> f64 {
        match self {
            Self::Builtin(f) => f.phi(x),
            Self::Polynomial(f) => f.phi(x),
        }
    }
    fn grad_phi(&self, x: Vec3) -> Vec3 {
        match self {
            Self::Builtin(f) => f.grad_phi(x),
            Self::Polynomial(f) => f.grad_phi(x),
        }
    }
    fn vector_potential(&self, x: Vec3) -> Vec3 {
        match self {
            Self::Builtin(f) => f.vector_potential(x),
            Self::Polynomial(f) => f.vector_potential(x),
        }
    }
    fn vector_potential_jacobian(&self, x: Vec3) -> Matrix3 {
        match self {
            Self::Builtin(f) => f.vector_potential_jacobian(x),
            Self::Polynomial(f) => f.vector_potential_jacobian(x),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    const ALL: [BuiltinField; 6] = [
        BuiltinField::Example1,
        BuiltinField::Example2,
        BuiltinField::Example3,
        BuiltinField::ConstantEB {
            e: [1.0, -0.5, 0.25],
            b: [0.3, 0.0, 1.0],
        },
        BuiltinField::Axisymmetric,
        BuiltinField::Zero,
    ];

    fn fd_gradient(f: impl Fn(Vec3) -> f64, x: Vec3) -> Vec3 {
        let eps = 1e-5;
        let mut g = [0.0; 3];
        for k in 0..3 {
            let mut xp = x;
            let mut xm = x;
            xp[k] += eps;
            xm[k] -= eps;
            g[k] = (f(xp) - f(xm)) / (2.0 * eps);
        }
        g
    }

    fn close3(a: Vec3, b: Vec3, tol: f64) -> bool {
        v3::norm_inf(v3::sub(a, b)) <= tol
    }

    #[test]
    fn faraday_block_placement() {
        let f = faraday_from_fields([1.0, 0.0, 0.0], [0.0; 3]);
        assert_eq!(f.0[0], [0.0, -1.0, 0.0, 0.0]);
        assert_eq!([f.0[0][0], f.0[1][0], f.0[2][0], f.0[3][0]], [0.0, 1.0, 0.0, 0.0]);
        for i in 1..4 {
            for j in 1..4 {
                assert_eq!(f.0[i][j], 0.0);
            }
        }

        let f = faraday_from_fields([0.0; 3], [0.0, 0.0, 1.0]);
        let block: Vec<[f64; 3]> = (1..4).map(|i| [f.0[i][1], f.0[i][2], f.0[i][3]]).collect();
        assert_eq!(block, vec![[0.0, 1.0, 0.0], [-1.0, 0.0, 0.0], [0.0, 0.0, 0.0]]);
    }

    #[test]
    fn example1_fields_at_initial_point() {
        let m = BuiltinField::Example1;
        let x = [0.0, 1.0, 0.1];
        assert!(close3(m.electric_field(x), [1.0, -4.0, -0.6], 1e-15));
        assert!(close3(m.magnetic_field(x), [0.0, 0.0, 1.0], 1e-15));
        let f = faraday(&m, x);
        assert_eq!(f.skew_defect(), 0.0);
        assert_eq!(f.0[0], [0.0, -1.0, 4.0, 0.6000000000000001]);
    }

    #[test]
    fn augmented_jacobian_matches_faraday() {
        // 𝐅 = (𝐀′)ᵀ − 𝐀′
        for m in ALL {
            let x = Position4::new(3.0, [0.4, -0.7, 0.2]);
            let j = m.augmented_jacobian(&x);
            let f = faraday(&m, x.x);
            assert!((j.transpose() - j - f).max_abs() < 1e-14, "{m:?}");
            for i in 0..4 {
                assert_eq!(j.0[i][0], 0.0);
            }
        }
    }

    #[test]
    fn midpoint_dgrad_degenerate_and_linear() {
        let m = BuiltinField::Example2;
        let x = [0.3, -0.2, 0.5];
        assert_eq!(midpoint_dgrad(&m, x, x), m.grad_phi(x));
        assert_eq!(avf_dgrad(&m, x, x), {
            // quadrature weights sum to one, up to rounding
            let g = m.grad_phi(x);
            let s: f64 = GL5_WEIGHTS.iter().sum();
            v3::scale(s, g)
        });
        assert!(close3(avf_dgrad(&m, x, x), m.grad_phi(x), 1e-15));

        let lin = BuiltinField::ConstantEB {
            e: [1.0, 2.0, -3.0],
            b: [0.0; 3],
        };
        let g = midpoint_dgrad(&lin, [0.1, 0.2, 0.3], [1.0, -1.0, 2.0]);
        assert!(close3(g, [-1.0, -2.0, 3.0], 1e-14));
        let g = avf_dgrad(&lin, [0.1, 0.2, 0.3], [1.0, -1.0, 2.0]);
        assert!(close3(g, [-1.0, -2.0, 3.0], 1e-14));
    }

    #[test]
    fn discrete_gradient_condition_example2() {
        let m = BuiltinField::Example2;
        let old = [0.0, 1.0, 0.1];
        let new = [0.1, 1.05, 0.12];
        let dphi = m.phi(new) - m.phi(old);
        let dx = v3::sub(new, old);
        let mid = midpoint_dgrad(&m, new, old);
        assert!((v3::dot(mid, dx) - dphi).abs() <= 1e-14);
        let avf = avf_dgrad(&m, new, old);
        assert!((v3::dot(avf, dx) - dphi).abs() <= 1e-13);
    }

    #[test]
    fn avf_equals_midpoint_gradient_for_quadratic() {
        let m = BuiltinField::Example1;
        let old = [0.2, 0.9, -0.1];
        let new = [0.35, 1.1, 0.05];
        let avf = avf_dgrad(&m, new, old);
        let mid_grad = m.grad_phi(v3::midpoint(new, old));
        assert!(close3(avf, mid_grad, 1e-14));
        assert!(close3(midpoint_dgrad(&m, new, old), mid_grad, 1e-14));
    }

    #[test]
    fn dg_faraday_cases() {
        let c = BuiltinField::ConstantEB {
            e: [1.0, 0.0, 0.0],
            b: [0.0, 0.0, 1.0],
        };
        let a = [0.1, 0.2, 0.3];
        let b = [0.4, -0.2, 0.0];
        let mid = v3::midpoint(a, b);
        for kind in [DiscreteGradientKind::Midpoint, DiscreteGradientKind::AverageVectorField] {
            let f = dg_faraday(&c, kind, a, b, mid);
            assert!((f - faraday(&c, mid)).max_abs() < 1e-15);
            assert_eq!(dg_faraday(&BuiltinField::Zero, kind, a, b, mid), Matrix4::ZERO);
            let f2 = dg_faraday(&BuiltinField::Example2, kind, a, b, mid);
            assert_eq!(f2.skew_defect(), 0.0);
        }
    }

    #[test]
    fn polynomial_field_reproduces_example2() {
        let mono = |coef, pow| Monomial { coef, pow };
        let p = PolynomialField {
            phi: Polynomial3::new(vec![
                mono(1.0, [3, 0, 0]),
                mono(-1.0, [0, 3, 0]),
                mono(0.2, [4, 0, 0]),
                mono(1.0, [0, 4, 0]),
                mono(1.0, [0, 0, 4]),
            ]),
            a: [
                Polynomial3::new(vec![mono(-0.5, [0, 1, 0])]),
                Polynomial3::new(vec![mono(0.5, [1, 0, 0])]),
                Polynomial3::default(),
            ],
        };
        p.validate().unwrap();
        let e3 = BuiltinField::Example3;
        for x in [[0.1, 0.7, -0.3], [1.2, -0.4, 0.9]] {
            assert!((p.phi(x) - e3.phi(x)).abs() < 1e-14);
            assert!(close3(p.grad_phi(x), e3.grad_phi(x), 1e-13));
            assert!(close3(p.magnetic_field(x), [0.0, 0.0, 1.0], 1e-15));
        }
        let json = serde_json::to_string(&p).unwrap();
        let back: PolynomialField = serde_json::from_str(&json).unwrap();
        assert_eq!(back, p);

        let bad = Polynomial3::new(vec![mono(1.0, [7, 0, 0])]);
        assert!(bad.validate().is_err());
    }

    fn arb_point() -> impl Strategy<Value = Vec3> {
        prop::array::uniform3(-2.0..2.0f64)
    }

    proptest! {
        #[test]
        fn curl_matches_stated_field(x in arb_point()) {
            for m in ALL {
                prop_assert!(close3(m.magnetic_field(x), m.stated_magnetic_field(x), 1e-12));
            }
        }

        #[test]
        fn derivatives_match_finite_differences(x in arb_point()) {
            for m in ALL {
                let fd_e = v3::scale(-1.0, fd_gradient(|y| m.phi(y), x));
                let tol = 1e-6 * (1.0 + v3::norm_inf(fd_e));
                prop_assert!(close3(m.electric_field(x), fd_e, tol));
                // Away from the axis, where r is smooth.
                if x[0].hypot(x[1]) > 0.05 {
                    let j = m.vector_potential_jacobian(x);
                    for i in 0..3 {
                        let fd = fd_gradient(|y| m.vector_potential(y)[i], x);
                        prop_assert!(close3(j[i], fd, 1e-6));
                    }
                }
            }
        }

        #[test]
        fn discrete_gradients_satisfy_difference_condition(a in arb_point(), b in arb_point()) {
            for m in ALL {
                let dphi = m.phi(a) - m.phi(b);
                let tol = 1e-12 * (1.0 + m.phi(a).abs() + m.phi(b).abs());
                let dx = v3::sub(a, b);
                for kind in [DiscreteGradientKind::Midpoint, DiscreteGradientKind::AverageVectorField] {
                    let g = discrete_gradient(&m, kind, a, b);
                    prop_assert!((v3::dot(g, dx) - dphi).abs() <= tol, "{m:?} {kind:?}");
                }
            }
        }
    }
}
