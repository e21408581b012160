//! Symbolic test functions with analytic ambient derivatives.
//!
//! A function on the manifold is represented by a smooth extension to the
//! ambient space. Intrinsic derivatives follow from the ambient ones:
//! `∇_M f = Jᵀ∇F` and `∇²_M f = Jᵀ∇²F J + ⟨∇F, II(·,·)⟩`.

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::geometry::{Density, EmbeddedManifold};
use crate::linalg::{dot, Matrix};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "id", rename_all = "snake_case", deny_unknown_fields)]
pub enum TestFunction {
    Constant { value: f64 },
    /// `e^{sin x₁} + x₂` on the circle.
    CircleExample,
    /// `sin(x₁ − x₂) + e^{−cos(x₁ + x₂)} + x₃²` on the torus.
    TorusExample,
    /// `x₁ / R`, which is `cos θ` on the circle of radius `R`.
    CosTheta { radius: f64 },
}

impl TestFunction {
    pub fn ambient_dim(&self) -> Option<usize> {
        match self {
            TestFunction::Constant { .. } => None,
            TestFunction::CircleExample | TestFunction::CosTheta { .. } => Some(2),
            TestFunction::TorusExample => Some(3),
        }
    }

    pub fn value(&self, x: &[f64]) -> f64 {
        match *self {
            TestFunction::Constant { value } => value,
            TestFunction::CircleExample => x[0].sin().exp() + x[1],
            TestFunction::TorusExample => (x[0] - x[1]).sin() + (-(x[0] + x[1]).cos()).exp() + x[2] * x[2],
            TestFunction::CosTheta { radius } => x[0] / radius,
        }
    }

    pub fn ambient_gradient(&self, x: &[f64]) -> Vec<f64> {
        match *self {
            TestFunction::Constant { .. } => vec![0.0; x.len()],
            TestFunction::CircleExample => vec![x[0].sin().exp() * x[0].cos(), 1.0],
            TestFunction::TorusExample => {
                let a = x[0] - x[1];
                let b = x[0] + x[1];
                let g1 = (-b.cos()).exp() * b.sin();
                vec![a.cos() + g1, -a.cos() + g1, 2.0 * x[2]]
            }
            TestFunction::CosTheta { radius } => vec![1.0 / radius, 0.0],
        }
    }

    pub fn ambient_hessian(&self, x: &[f64]) -> Matrix {
        match *self {
            TestFunction::Constant { .. } => Matrix::zeros(x.len(), x.len()),
            TestFunction::CircleExample => {
                let (s, c) = x[0].sin_cos();
                Matrix::from_rows(2, 2, vec![s.exp() * (c * c - s), 0.0, 0.0, 0.0])
            }
            TestFunction::TorusExample => {
                let sa = (x[0] - x[1]).sin();
                let (sb, cb) = (x[0] + x[1]).sin_cos();
                let g2 = (-cb).exp() * (sb * sb + cb);
                Matrix::from_rows(3, 3, vec![-sa + g2, sa + g2, 0.0, sa + g2, -sa + g2, 0.0, 0.0, 0.0, 2.0])
            }
            TestFunction::CosTheta { .. } => Matrix::zeros(2, 2),
        }
    }

    /// Values at every row of a row-major point array.
    pub fn evaluate_rows(&self, points: &[f64], dim: usize) -> Vec<f64> {
        points.chunks_exact(dim).map(|p| self.value(p)).collect()
    }
}

/// `∇_M f(x)` in the tangent frame.
pub fn intrinsic_gradient<M: EmbeddedManifold + ?Sized>(m: &M, f: &TestFunction, x: &[f64]) -> Result<Vec<f64>> {
    Ok(m.tangent_frame(x)?.to_tangent(&f.ambient_gradient(x)))
}

/// `∇²_M f(x)` in the tangent frame.
pub fn intrinsic_hessian<M: EmbeddedManifold + ?Sized>(m: &M, f: &TestFunction, x: &[f64]) -> Result<Matrix> {
    let frame = m.tangent_frame(x)?.matrix();
    let sff = m.second_fundamental_form(x)?;
    let grad = f.ambient_gradient(x);
    Ok(frame.transpose().matmul(&f.ambient_hessian(x)).matmul(&frame).add(&sff.contract(&grad)))
}

/// Laplace–Beltrami operator with the positive sign convention, `Δ_M f = −div ∇f`.
pub fn laplace_beltrami<M: EmbeddedManifold + ?Sized>(m: &M, f: &TestFunction, x: &[f64]) -> Result<f64> {
    Ok(-intrinsic_hessian(m, f, x)?.trace())
}

/// Density-weighted Laplacian `Δ_{M,2} f = −ρ⁻² div(ρ² ∇f) = Δ_M f − 2⟨∇ρ, ∇f⟩/ρ`.
pub fn weighted_laplacian(density: &Density, f: &TestFunction, x: &[f64]) -> Result<f64> {
    let m = density.manifold();
    let grad_f = intrinsic_gradient(m, f, x)?;
    let grad_rho = density.tangent_gradient(x)?;
    let rho = density.at(x)?;
    Ok(laplace_beltrami(m, f, x)? - 2.0 * dot(&grad_rho, &grad_f) / rho)
}
