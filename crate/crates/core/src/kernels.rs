//! The Gaussian kernel `K_ε(u) = (2πε²)^{-d/2} exp(-u²/(2ε²))` and its moments.

use std::f64::consts::PI;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::Matrix;

/// Kernel bandwidth together with the intrinsic dimension used in the normalization.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Bandwidth {
    eps: f64,
    dim: usize,
}

impl Bandwidth {
    pub fn new(eps: f64, dim: usize) -> Result<Self> {
        if !(eps.is_finite() && eps > 0.0) {
            return Err(Error::InvalidArgument(format!("bandwidth must be positive, got {eps}")));
        }
        if !(1..=2).contains(&dim) {
            return Err(Error::InvalidArgument(format!("intrinsic dimension must be 1 or 2, got {dim}")));
        }
        Ok(Self { eps, dim })
    }

    pub fn eps(&self) -> f64 {
        self.eps
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Same dimension, bandwidth multiplied by `factor`.
    pub fn scaled(&self, factor: f64) -> Result<Self> {
        Self::new(self.eps * factor, self.dim)
    }

    /// `(2πε²)^{-d/2}`.
    pub fn normalization(&self) -> f64 {
        (2.0 * PI * self.eps * self.eps).powf(-(self.dim as f64) / 2.0)
    }

    /// `K_ε` evaluated at a squared distance.
    #[inline]
    pub fn eval_sq(&self, u2: f64) -> f64 {
        self.normalization() * (-u2 / (2.0 * self.eps * self.eps)).exp()
    }
}

/// `K_ε(u)` for `u ≥ 0`.
pub fn kernel_eval(u: f64, bw: Bandwidth) -> f64 {
    debug_assert!(u >= 0.0, "kernel argument must be non-negative");
    bw.eval_sq(u * u)
}

/// Unit-bandwidth kernel `K(‖z‖)` on R^d.
pub fn unit_kernel(z2: f64, dim: usize) -> f64 {
    (2.0 * PI).powf(-(dim as f64) / 2.0) * (-z2 / 2.0).exp()
}

/// Closed-form moments of the unit Gaussian kernel.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Moment {
    /// `∫ K zᵀAz = tr A`
    Quadratic,
    /// `∫ K (zᵀAz)² = 2‖A‖²_F + (tr A)²`
    QuadraticSquared,
    /// `∫ K (zzᵀ − I)(zᵀAz) = 2A`
    CenteredOuterQuadratic,
    /// `∫ K² = (4π)^{-d/2}`
    SquaredMass,
    /// `∫ K² zᵀAz = tr A / (2(4π)^{d/2})`
    SquaredQuadratic,
    /// `∫ K² (zᵀAz)² = (2‖A‖²_F + (tr A)²) / (4(4π)^{d/2})`
    SquaredQuadraticSquared,
}

impl Moment {
    pub const ALL: [Moment; 6] = [
        Moment::Quadratic,
        Moment::QuadraticSquared,
        Moment::CenteredOuterQuadratic,
        Moment::SquaredMass,
        Moment::SquaredQuadratic,
        Moment::SquaredQuadraticSquared,
    ];

    pub fn needs_matrix(&self) -> bool {
        !matches!(self, Moment::SquaredMass)
    }
}

impl FromStr for Moment {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s {
            "quadratic" => Moment::Quadratic,
            "quadratic_squared" => Moment::QuadraticSquared,
            "centered_outer_quadratic" => Moment::CenteredOuterQuadratic,
            "squared_mass" => Moment::SquaredMass,
            "squared_quadratic" => Moment::SquaredQuadratic,
            "squared_quadratic_squared" => Moment::SquaredQuadraticSquared,
            other => return Err(Error::UnknownMoment(other.to_string())),
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum MomentValue {
    Scalar(f64),
    Matrix(Matrix),
}

impl MomentValue {
    pub fn scalar(&self) -> Option<f64> {
        match self {
            MomentValue::Scalar(v) => Some(*v),
            MomentValue::Matrix(_) => None,
        }
    }
}

/// Evaluates a kernel moment in closed form.
pub fn kernel_moment(which: Moment, dim: usize, a: Option<&Matrix>) -> Result<MomentValue> {
    let four_pi_d = (4.0 * PI).powf(dim as f64 / 2.0);
    if which == Moment::SquaredMass {
        return Ok(MomentValue::Scalar(1.0 / four_pi_d));
    }
    let a = a.ok_or_else(|| Error::InvalidArgument(format!("moment {which:?} needs a matrix")))?;
    if a.nrows() != dim || a.ncols() != dim {
        return Err(Error::DimensionMismatch { expected: dim, got: a.nrows() });
    }
    if a.asymmetry() > 1e-12 * (1.0 + a.max_abs()) {
        return Err(Error::InvalidArgument("moment matrix must be symmetric".into()));
    }
    let tr = a.trace();
    let fro2: f64 = a.as_slice().iter().map(|v| v * v).sum();
    Ok(match which {
        Moment::Quadratic => MomentValue::Scalar(tr),
        Moment::QuadraticSquared => MomentValue::Scalar(2.0 * fro2 + tr * tr),
        Moment::CenteredOuterQuadratic => MomentValue::Matrix(a.scale(2.0)),
        Moment::SquaredQuadratic => MomentValue::Scalar(tr / (2.0 * four_pi_d)),
        Moment::SquaredQuadraticSquared => MomentValue::Scalar((2.0 * fro2 + tr * tr) / (4.0 * four_pi_d)),
        Moment::SquaredMass => unreachable!(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn kernel_values() {
        let bw = Bandwidth::new(1.0, 1).unwrap();
        assert!((kernel_eval(0.0, bw) - 0.398_942_280_401_432_7).abs() < 1e-15);
        let bw = Bandwidth::new(0.3, 2).unwrap();
        let ratio = kernel_eval(0.3, bw) / kernel_eval(0.0, bw);
        assert!((ratio - (-0.5f64).exp()).abs() < 1e-15);
        assert!(kernel_eval(0.31, bw) < kernel_eval(0.3, bw));
    }

    #[test]
    fn bandwidth_validation() {
        assert!(Bandwidth::new(0.0, 1).is_err());
        assert!(Bandwidth::new(f64::NAN, 1).is_err());
        assert!(Bandwidth::new(0.1, 3).is_err());
    }

    #[test]
    fn moment_examples() {
        let m = kernel_moment(Moment::SquaredMass, 1, None).unwrap().scalar().unwrap();
        assert!((m - 0.282_094_791_773_878_1).abs() < 1e-15);
        let i2 = Matrix::identity(2);
        assert_eq!(kernel_moment(Moment::Quadratic, 2, Some(&i2)).unwrap(), MomentValue::Scalar(2.0));
        let a = Matrix::diag(&[1.0, -1.0]);
        assert_eq!(kernel_moment(Moment::QuadraticSquared, 2, Some(&a)).unwrap(), MomentValue::Scalar(4.0));
    }

    #[test]
    fn moment_errors() {
        assert!(matches!("cubic".parse::<Moment>(), Err(Error::UnknownMoment(_))));
        assert_eq!("squared_mass".parse::<Moment>().unwrap(), Moment::SquaredMass);
        let skew = Matrix::from_rows(2, 2, vec![0.0, 1.0, -1.0, 0.0]);
        assert!(kernel_moment(Moment::Quadratic, 2, Some(&skew)).is_err());
        assert!(kernel_moment(Moment::Quadratic, 2, None).is_err());
    }
}
