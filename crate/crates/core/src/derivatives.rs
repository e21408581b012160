//! Gradients and Hessians of smoothed functions.
//!
//! Ambient derivatives of `x ↦ T_{n,ε}[f](x)` are exact kernel sums:
//!
//! ```text
//! ∇T  = (1/n) Σ K_ε(‖X_i − x‖) z_i/ε f(X_i)
//! ∇²T = (1/n) Σ K_ε(‖X_i − x‖) (z_i z_iᵀ − I)/ε² f(X_i),   z_i = (X_i − x)/ε
//! ```
//!
//! Intrinsic derivatives at `x` follow from the chain rule through the
//! exponential map: `Jᵀ∇T` and `Jᵀ∇²T J + Σ_ℓ (∇T)_ℓ B_ℓ`, where
//! `(B_ℓ)_ij` is the `ℓ`-th ambient component of the second fundamental form.

use crate::error::{Error, Result};
use crate::functions::TestFunction;
use crate::geometry::EmbeddedManifold;
use crate::kernels::Bandwidth;
use crate::linalg::{sq_dist, Matrix};
use crate::sampling::Sample;
use crate::smoothing::{check_query, smooth_normalized, PopulationContext, DENOMINATOR_FLOOR};
use crate::summation::CompensatedSum;

/// Intrinsic gradient as coefficients in the tangent frame at the query point.
#[derive(Debug, Clone, PartialEq)]
pub struct TangentGradient {
    coeffs: Vec<f64>,
}

impl TangentGradient {
    pub fn coeffs(&self) -> &[f64] {
        &self.coeffs
    }

    pub fn norm(&self) -> f64 {
        crate::linalg::norm(&self.coeffs)
    }
}

/// Intrinsic Hessian in the tangent frame at the query point.
#[derive(Debug, Clone, PartialEq)]
pub struct TangentHessian {
    mat: Matrix,
}

impl TangentHessian {
    pub fn matrix(&self) -> &Matrix {
        &self.mat
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.mat.frobenius_norm()
    }

    /// Laplace–Beltrami value `−tr ∇²`.
    pub fn laplacian(&self) -> f64 {
        -self.mat.trace()
    }
}

/// Value, ambient gradient and ambient Hessian of a smoothing operator at a point.
#[derive(Debug, Clone, PartialEq)]
pub struct AmbientJet {
    pub value: f64,
    pub grad: Vec<f64>,
    pub hess: Matrix,
}

impl AmbientJet {
    fn tangent<M: EmbeddedManifold + ?Sized>(&self, m: &M, x: &[f64], with_hessian: bool) -> Result<(Vec<f64>, Option<Matrix>)> {
        let frame = m.tangent_frame(x)?;
        let grad = frame.to_tangent(&self.grad);
        let hess = if with_hessian {
            let j = frame.matrix();
            let sff = m.second_fundamental_form(x)?;
            Some(j.transpose().matmul(&self.hess).matmul(&j).add(&sff.contract(&self.grad)))
        } else {
            None
        };
        Ok((grad, hess))
    }
}

/// Kernel-sum jet of `T_{n,ε}[v]` at `x`.
pub fn sample_jet(s: &Sample, v: &[f64], x: &[f64], bw: Bandwidth) -> Result<AmbientJet> {
    check_query(s, Some(v), x)?;
    let dd = x.len();
    let eps = bw.eps();
    let mut value = CompensatedSum::new();
    let mut grad = vec![CompensatedSum::new(); dd];
    let mut hess = vec![CompensatedSum::new(); dd * dd];
    let mut z = vec![0.0; dd];
    for (i, &vi) in v.iter().enumerate() {
        let p = s.point(i);
        let w = bw.eval_sq(sq_dist(p, x)) * vi;
        for k in 0..dd {
            z[k] = (p[k] - x[k]) / eps;
        }
        value.add(w);
        for a in 0..dd {
            grad[a].add(w * z[a] / eps);
            for b in 0..dd {
                let delta = if a == b { 1.0 } else { 0.0 };
                hess[a * dd + b].add(w * (z[a] * z[b] - delta) / (eps * eps));
            }
        }
    }
    let n = s.len() as f64;
    let mut h = Matrix::from_fn(dd, dd, |a, b| hess[a * dd + b].value() / n);
    // symmetric by construction; average to remove summation-order asymmetry
    h = h.add(&h.transpose()).scale(0.5);
    Ok(AmbientJet { value: value.value() / n, grad: grad.iter().map(|g| g.value() / n).collect(), hess: h })
}

/// `∇_{R^D} T_{n,ε}[f](x)`.
pub fn ambient_grad_t(s: &Sample, f: &[f64], x: &[f64], bw: Bandwidth) -> Result<Vec<f64>> {
    Ok(sample_jet(s, f, x, bw)?.grad)
}

/// `∇²_{R^D} T_{n,ε}[f](x)`.
pub fn ambient_hess_t(s: &Sample, f: &[f64], x: &[f64], bw: Bandwidth) -> Result<Matrix> {
    Ok(sample_jet(s, f, x, bw)?.hess)
}

fn check_manifold<M: EmbeddedManifold + ?Sized>(s: &Sample, m: &M) -> Result<()> {
    if m.ambient_dim() != s.ambient_dim() {
        return Err(Error::DimensionMismatch { expected: s.ambient_dim(), got: m.ambient_dim() });
    }
    Ok(())
}

/// `Jᵀ ∇T_{n,ε}[f](x)`; estimates `∇_M(ρf)(x)`.
pub fn grad_unnormalized<M: EmbeddedManifold + ?Sized>(s: &Sample, f: &[f64], x: &[f64], bw: Bandwidth, m: &M) -> Result<TangentGradient> {
    check_manifold(s, m)?;
    let (coeffs, _) = sample_jet(s, f, x, bw)?.tangent(m, x, false)?;
    Ok(TangentGradient { coeffs })
}

/// `Jᵀ∇²T J + Σ_ℓ (∇T)_ℓ B_ℓ`; estimates `∇²_M(ρf)(x)`.
pub fn hess_unnormalized<M: EmbeddedManifold + ?Sized>(s: &Sample, f: &[f64], x: &[f64], bw: Bandwidth, m: &M) -> Result<TangentHessian> {
    check_manifold(s, m)?;
    let (_, hess) = sample_jet(s, f, x, bw)?.tangent(m, x, true)?;
    Ok(TangentHessian { mat: hess.expect("hessian requested") })
}

/// Quotient rule for the tangent gradient of `p/q`.
fn quotient_gradient(p: f64, dp: &[f64], q: f64, dq: &[f64]) -> Vec<f64> {
    dp.iter().zip(dq).map(|(a, b)| a / q - p * b / (q * q)).collect()
}

/// Quotient rule for the tangent Hessian of `p/q`:
/// `∇²p/q − (∇p∇qᵀ + ∇q∇pᵀ)/q² + 2p ∇q∇qᵀ/q³ − p ∇²q/q²`.
fn quotient_hessian(p: f64, dp: &[f64], d2p: &Matrix, q: f64, dq: &[f64], d2q: &Matrix) -> Matrix {
    let cross = Matrix::outer(dp, dq).add(&Matrix::outer(dq, dp));
    d2p.scale(1.0 / q)
        .sub(&cross.scale(1.0 / (q * q)))
        .add(&Matrix::outer(dq, dq).scale(2.0 * p / (q * q * q)))
        .sub(&d2q.scale(p / (q * q)))
}

/// Tangent jets of `p = T[f − c]` and `q = T[1]` with `c = T̄_{n,ε}[f](x)`.
///
/// Centering is exact algebra (the quotient `p/q` only shifts by `c`) and makes
/// constant inputs produce exact zeros.
fn centered_tangent_jets<M: EmbeddedManifold + ?Sized>(
    s: &Sample,
    f: &[f64],
    x: &[f64],
    bw: Bandwidth,
    m: &M,
    with_hessian: bool,
) -> Result<(f64, Vec<f64>, Option<Matrix>, f64, Vec<f64>, Option<Matrix>)> {
    check_manifold(s, m)?;
    let center = smooth_normalized(s, f, x, bw)?;
    let g: Vec<f64> = f.iter().map(|v| v - center).collect();
    let ones = vec![1.0; s.len()];
    let pj = sample_jet(s, &g, x, bw)?;
    let qj = sample_jet(s, &ones, x, bw)?;
    if !(qj.value >= DENOMINATOR_FLOOR) {
        return Err(Error::DegenerateDenominator { value: qj.value });
    }
    let (dp, d2p) = pj.tangent(m, x, with_hessian)?;
    let (dq, d2q) = qj.tangent(m, x, with_hessian)?;
    Ok((pj.value, dp, d2p, qj.value, dq, d2q))
}

/// Gradient of `T̄_{n,ε}[f]` in the tangent frame; estimates `∇_M f(x)`.
pub fn grad_normalized<M: EmbeddedManifold + ?Sized>(s: &Sample, f: &[f64], x: &[f64], bw: Bandwidth, m: &M) -> Result<TangentGradient> {
    let (p, dp, _, q, dq, _) = centered_tangent_jets(s, f, x, bw, m, false)?;
    Ok(TangentGradient { coeffs: quotient_gradient(p, &dp, q, &dq) })
}

/// Hessian of `T̄_{n,ε}[f]` in the tangent frame; estimates `∇²_M f(x)`.
pub fn hess_normalized<M: EmbeddedManifold + ?Sized>(s: &Sample, f: &[f64], x: &[f64], bw: Bandwidth, m: &M) -> Result<TangentHessian> {
    let (p, dp, d2p, q, dq, d2q) = centered_tangent_jets(s, f, x, bw, m, true)?;
    let mat = quotient_hessian(p, &dp, d2p.as_ref().unwrap(), q, &dq, d2q.as_ref().unwrap());
    Ok(TangentHessian { mat })
}

/// Jets of `T_ε[f]` and `T_ε[1]` at `x` by chart quadrature, differentiating the kernel analytically.
pub fn population_jets(ctx: &PopulationContext, f: &TestFunction, x: &[f64], bw: Bandwidth) -> Result<(AmbientJet, AmbientJet)> {
    ctx.check_inputs(f, x, bw)?;
    let dd = x.len();
    let eps = bw.eps();
    let block = 1 + dd + dd * dd;
    let v = ctx.expectation(bw, 2 * block, |u, out| {
        let k = bw.eval_sq(sq_dist(u, x));
        let fu = f.value(u);
        let mut z = [0.0; 3];
        for a in 0..dd {
            z[a] = (u[a] - x[a]) / eps;
        }
        out[0] = k;
        for a in 0..dd {
            out[1 + a] = k * z[a] / eps;
            for b in 0..dd {
                let delta = if a == b { 1.0 } else { 0.0 };
                out[1 + dd + a * dd + b] = k * (z[a] * z[b] - delta) / (eps * eps);
            }
        }
        for c in 0..block {
            out[block + c] = out[c] * fu;
        }
    })?;
    let unpack = |off: usize| {
        let hess = Matrix::from_fn(dd, dd, |a, b| v[off + 1 + dd + a * dd + b]);
        AmbientJet { value: v[off], grad: v[off + 1..off + 1 + dd].to_vec(), hess: hess.add(&hess.transpose()).scale(0.5) }
    };
    Ok((unpack(block), unpack(0)))
}

/// Population gradient: of `T_ε[f]` (limit `∇_M(ρf)`) or of `T̄_ε[f]` (limit `∇_M f`).
pub fn population_gradient(ctx: &PopulationContext, f: &TestFunction, x: &[f64], bw: Bandwidth, normalized: bool) -> Result<TangentGradient> {
    let (pj, qj) = population_jets(ctx, f, x, bw)?;
    let m = ctx.manifold();
    let (dp, _) = pj.tangent(m, x, false)?;
    if !normalized {
        return Ok(TangentGradient { coeffs: dp });
    }
    if !(qj.value >= DENOMINATOR_FLOOR) {
        return Err(Error::DegenerateDenominator { value: qj.value });
    }
    let (dq, _) = qj.tangent(m, x, false)?;
    Ok(TangentGradient { coeffs: quotient_gradient(pj.value, &dp, qj.value, &dq) })
}

/// Population Hessian: of `T_ε[f]` (limit `∇²_M(ρf)`) or of `T̄_ε[f]` (limit `∇²_M f`).
pub fn population_hessian(ctx: &PopulationContext, f: &TestFunction, x: &[f64], bw: Bandwidth, normalized: bool) -> Result<TangentHessian> {
    let (pj, qj) = population_jets(ctx, f, x, bw)?;
    let m = ctx.manifold();
    let (dp, d2p) = pj.tangent(m, x, true)?;
    let d2p = d2p.unwrap();
    if !normalized {
        return Ok(TangentHessian { mat: d2p });
    }
    if !(qj.value >= DENOMINATOR_FLOOR) {
        return Err(Error::DegenerateDenominator { value: qj.value });
    }
    let (dq, d2q) = qj.tangent(m, x, true)?;
    Ok(TangentHessian { mat: quotient_hessian(pj.value, &dp, &d2p, qj.value, &dq, &d2q.unwrap()) })
}
