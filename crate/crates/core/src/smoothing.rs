//! Kernel smoothing estimators and their population counterparts.
//!
//! Sample estimators sum over all points in index order with compensated
//! summation, so results do not depend on thread count or platform BLAS.
//! Population values integrate over the periodic chart with the trapezoid
//! rule; every call evaluates the grid at two resolutions and refuses to
//! answer if they disagree.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::functions::TestFunction;
use crate::geometry::{Density, DensitySpec, EmbeddedManifold, Manifold};
use crate::kernels::{unit_kernel, Bandwidth};
use crate::linalg::sq_dist;
use crate::quadrature::periodic_nodes;
use crate::sampling::Sample;
use crate::summation::CompensatedSum;

/// Below this value `T_{n,ε}[1](x)` is treated as zero.
pub const DENOMINATOR_FLOOR: f64 = 1e-300;

/// Largest relative change tolerated between the two quadrature resolutions.
pub const RESOLUTION_TOLERANCE: f64 = 1e-6;

pub(crate) fn check_query(s: &Sample, values: Option<&[f64]>, x: &[f64]) -> Result<()> {
    if s.is_empty() {
        return Err(Error::EmptySample);
    }
    if x.len() != s.ambient_dim() {
        return Err(Error::DimensionMismatch { expected: s.ambient_dim(), got: x.len() });
    }
    if let Some(v) = values {
        if v.len() != s.len() {
            return Err(Error::DimensionMismatch { expected: s.len(), got: v.len() });
        }
        if let Some(bad) = v.iter().position(|t| !t.is_finite()) {
            return Err(Error::InvalidArgument(format!("function value {bad} is not finite")));
        }
    }
    Ok(())
}

/// `(1/n) Σ K_ε(‖X_i − x‖) f(X_i)`.
pub fn smooth_unnormalized(s: &Sample, f: &[f64], x: &[f64], bw: Bandwidth) -> Result<f64> {
    check_query(s, Some(f), x)?;
    let mut acc = CompensatedSum::new();
    for (i, fi) in f.iter().enumerate() {
        acc.add(bw.eval_sq(sq_dist(s.point(i), x)) * fi);
    }
    Ok(acc.value() / s.len() as f64)
}

/// Kernel density estimate `T_{n,ε}[1](x)`.
pub fn kde(s: &Sample, x: &[f64], bw: Bandwidth) -> Result<f64> {
    check_query(s, None, x)?;
    let mut acc = CompensatedSum::new();
    for i in 0..s.len() {
        acc.add(bw.eval_sq(sq_dist(s.point(i), x)));
    }
    Ok(acc.value() / s.len() as f64)
}

/// Weighted mean `Σ K_i v_i / Σ K_i` computed with weights rescaled by the
/// largest kernel value, so it stays accurate when the kernel values underflow.
fn kernel_weighted_mean(s: &Sample, v: &[f64], x: &[f64], bw: Bandwidth) -> Result<f64> {
    let d2: Vec<f64> = (0..s.len()).map(|i| sq_dist(s.point(i), x)).collect();
    let min_d2 = d2.iter().copied().fold(f64::INFINITY, f64::min);
    let two_eps2 = 2.0 * bw.eps() * bw.eps();
    let mut num = CompensatedSum::new();
    let mut den = CompensatedSum::new();
    for (&dist2, &vi) in d2.iter().zip(v) {
        let w = (-(dist2 - min_d2) / two_eps2).exp();
        num.add(w * vi);
        den.add(w);
    }
    // T_{n,ε}[1](x) = norm · exp(−min_d2/2ε²) · Σw / n, compared on the log scale
    let log_t1 = bw.normalization().ln() - min_d2 / two_eps2 + (den.value() / s.len() as f64).ln();
    if !(log_t1 >= DENOMINATOR_FLOOR.ln()) {
        return Err(Error::DegenerateDenominator { value: log_t1.exp() });
    }
    let (lo, hi) = v.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &t| (lo.min(t), hi.max(t)));
    Ok((num.value() / den.value()).clamp(lo, hi))
}

/// `T_{n,ε}[f](x) / T_{n,ε}[1](x)`.
pub fn smooth_normalized(s: &Sample, f: &[f64], x: &[f64], bw: Bandwidth) -> Result<f64> {
    check_query(s, Some(f), x)?;
    kernel_weighted_mean(s, f, x, bw)
}

/// Nadaraya–Watson regression of the sample responses.
pub fn nw_regress(s: &Sample, x: &[f64], bw: Bandwidth) -> Result<f64> {
    let y = s.responses().ok_or(Error::MissingResponses)?;
    check_query(s, Some(y), x)?;
    kernel_weighted_mean(s, y, x, bw)
}

/// Sampling law plus the chart quadrature used for population values.
#[derive(Debug, Clone, PartialEq)]
pub struct PopulationContext {
    density: Density,
    resolution: usize,
}

impl PopulationContext {
    pub const MIN_RESOLUTION: usize = 64;

    /// Default resolution: 2048 nodes on the circle, 512 per axis on the torus.
    pub fn new(manifold: Manifold, spec: DensitySpec) -> Result<Self> {
        let density = Density::new(manifold, spec)?;
        let resolution = if manifold.intrinsic_dim() == 1 { 2048 } else { 512 };
        Ok(Self { density, resolution })
    }

    /// Overrides the per-axis base resolution (at least 64).
    pub fn with_resolution(mut self, per_axis: usize) -> Result<Self> {
        if per_axis < Self::MIN_RESOLUTION {
            return Err(Error::InvalidArgument(format!(
                "quadrature resolution must be at least {}, got {per_axis}",
                Self::MIN_RESOLUTION
            )));
        }
        self.resolution = per_axis;
        Ok(self)
    }

    pub fn density(&self) -> &Density {
        &self.density
    }

    pub fn manifold(&self) -> &Manifold {
        self.density.manifold()
    }

    pub fn resolution(&self) -> usize {
        self.resolution
    }

    /// Coarse per-axis node counts for a bandwidth: the base resolution, raised
    /// until grid spacing along each axis is at most `ε/2` in arc length.
    pub fn resolution_for(&self, bw: Bandwidth) -> Vec<usize> {
        self.manifold()
            .max_axis_scale()
            .iter()
            .map(|&speed| {
                let needed = (4.0 * std::f64::consts::PI * speed / bw.eps()).ceil() as usize;
                self.resolution.max(needed)
            })
            .collect()
    }

    pub(crate) fn check_inputs(&self, f: &TestFunction, x: &[f64], bw: Bandwidth) -> Result<()> {
        let m = self.manifold();
        if x.len() != m.ambient_dim() {
            return Err(Error::DimensionMismatch { expected: m.ambient_dim(), got: x.len() });
        }
        if bw.dim() != m.intrinsic_dim() {
            return Err(Error::DimensionMismatch { expected: m.intrinsic_dim(), got: bw.dim() });
        }
        if let Some(dim) = f.ambient_dim() {
            if dim != m.ambient_dim() {
                return Err(Error::DimensionMismatch { expected: m.ambient_dim(), got: dim });
            }
        }
        Ok(())
    }

    /// `E[g(X)]` for a vector-valued integrand `g`, which writes `m` values for
    /// the ambient point `u`.
    ///
    /// The sum runs on the doubled grid; the coarse sum reuses its even nodes.
    /// A component fails the check when the two disagree by more than
    /// [`RESOLUTION_TOLERANCE`] relative to the integral of its absolute value.
    pub(crate) fn expectation<F>(&self, bw: Bandwidth, m: usize, integrand: F) -> Result<Vec<f64>>
    where
        F: Fn(&[f64], &mut [f64]) + Sync,
    {
        let coarse = self.resolution_for(bw);
        let fine: Vec<usize> = coarse.iter().map(|n| 2 * n).collect();
        let manifold = *self.manifold();
        let density = &self.density;
        let axes: Vec<Vec<f64>> = fine.iter().map(|&n| periodic_nodes(n)).collect();

        // one task per first-axis node, reduced in index order
        let rows: Vec<RowSums> = (0..fine[0])
            .into_par_iter()
            .map(|i| {
                let mut acc = RowSums::new(m);
                let mut out = vec![0.0; m];
                let mut theta = vec![axes[0][i]; manifold.intrinsic_dim()];
                let inner = if fine.len() == 2 { fine[1] } else { 1 };
                for j in 0..inner {
                    if fine.len() == 2 {
                        theta[1] = axes[1][j];
                    }
                    let u = manifold.embed(&theta);
                    let w = density.chart_density(&theta);
                    integrand(&u, &mut out);
                    acc.add(&out, w, i % 2 == 0 && j % 2 == 0);
                }
                acc
            })
            .collect();

        let mut total = RowSums::new(m);
        for row in &rows {
            total.merge(row);
        }
        let cell_fine: f64 = fine.iter().map(|&n| 2.0 * std::f64::consts::PI / n as f64).product();
        let cell_coarse: f64 = coarse.iter().map(|&n| 2.0 * std::f64::consts::PI / n as f64).product();
        let mut result = Vec::with_capacity(m);
        for k in 0..m {
            let f = total.fine[k].value() * cell_fine;
            let c = total.coarse[k].value() * cell_coarse;
            let scale = total.abs[k].value() * cell_fine;
            if (f - c).abs() > RESOLUTION_TOLERANCE * scale + f64::MIN_POSITIVE {
                return Err(Error::ResolutionTooCoarse { coarse: c, fine: f });
            }
            result.push(f);
        }
        Ok(result)
    }
}

struct RowSums {
    fine: Vec<CompensatedSum>,
    coarse: Vec<CompensatedSum>,
    abs: Vec<CompensatedSum>,
}

impl RowSums {
    fn new(m: usize) -> Self {
        Self { fine: vec![CompensatedSum::new(); m], coarse: vec![CompensatedSum::new(); m], abs: vec![CompensatedSum::new(); m] }
    }

    fn add(&mut self, values: &[f64], weight: f64, on_coarse: bool) {
        for (k, v) in values.iter().enumerate() {
            let t = v * weight;
            self.fine[k].add(t);
            self.abs[k].add(t.abs());
            if on_coarse {
                self.coarse[k].add(t);
            }
        }
    }

    fn merge(&mut self, other: &RowSums) {
        for k in 0..self.fine.len() {
            self.fine[k].add(other.fine[k].value());
            self.coarse[k].add(other.coarse[k].value());
            self.abs[k].add(other.abs[k].value());
        }
    }
}

/// `T_ε[f](x) = E[K_ε(‖X − x‖) f(X)]`, or `T̄_ε[f](x) = T_ε[f](x)/T_ε[1](x)` when `normalized`.
pub fn population_smooth(
    ctx: &PopulationContext,
    f: &TestFunction,
    x: &[f64],
    bw: Bandwidth,
    normalized: bool,
) -> Result<f64> {
    ctx.check_inputs(f, x, bw)?;
    let v = ctx.expectation(bw, 2, |u, out| {
        let k = bw.eval_sq(sq_dist(u, x));
        out[0] = k * f.value(u);
        out[1] = k;
    })?;
    if !normalized {
        return Ok(v[0]);
    }
    if v[1] < DENOMINATOR_FLOOR {
        return Err(Error::DegenerateDenominator { value: v[1] });
    }
    Ok(v[0] / v[1])
}

/// `ε^{-d} E[K²(‖X − x‖/ε) ((f(X) − f(x))/ε)²]` with the unit-bandwidth kernel `K`.
///
/// Tends to `ρ(x)‖∇_M f(x)‖² / (2(4π)^{d/2})` as `ε → 0`.
pub fn population_variance_integral(ctx: &PopulationContext, f: &TestFunction, x: &[f64], bw: Bandwidth) -> Result<f64> {
    ctx.check_inputs(f, x, bw)?;
    let eps = bw.eps();
    let dim = bw.dim();
    let fx = f.value(x);
    let v = ctx.expectation(bw, 1, |u, out| {
        let k = unit_kernel(sq_dist(u, x) / (eps * eps), dim);
        let inc = (f.value(u) - fx) / eps;
        out[0] = k * k * inc * inc;
    })?;
    Ok(v[0] / eps.powi(dim as i32))
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn circle_sample(points: &[f64]) -> Sample {
        let c = Manifold::circle(1.0).unwrap();
        let pts: Vec<Vec<f64>> = points.iter().map(|&t| c.embed(&[t])).collect();
        Sample::from_points(c, &pts).unwrap()
    }

    #[test]
    fn single_point_at_query() {
        let s = circle_sample(&[0.0]);
        let bw = Bandwidth::new(1.0, 1).unwrap();
        let x = [1.0, 0.0];
        let inv_sqrt_2pi = 1.0 / (2.0 * PI).sqrt();
        assert!((smooth_unnormalized(&s, &[1.0], &x, bw).unwrap() - inv_sqrt_2pi).abs() < 1e-15);
        assert!((kde(&s, &x, bw).unwrap() - inv_sqrt_2pi).abs() < 1e-15);
        assert_eq!(smooth_unnormalized(&s, &[0.0], &x, bw).unwrap(), 0.0);
    }

    #[test]
    fn two_symmetric_points() {
        let s = circle_sample(&[0.3, -0.3]);
        let bw = Bandwidth::new(0.2, 1).unwrap();
        let x = [1.0, 0.0];
        let r = (2.0 - 2.0 * 0.3f64.cos()).sqrt();
        let k = bw.normalization() * (-r * r / (2.0 * 0.04)).exp();
        let got = smooth_unnormalized(&s, &[2.0, 5.0], &x, bw).unwrap();
        assert!((got - k * 3.5).abs() < 1e-14 * k);
        assert!((smooth_normalized(&s, &[0.0, 1.0], &x, bw).unwrap() - 0.5).abs() < 1e-15);
        assert_eq!(smooth_normalized(&s, &[4.25, 4.25], &x, bw).unwrap(), 4.25);
    }

    #[test]
    fn far_query_is_degenerate_but_close_query_survives_underflow() {
        let s = circle_sample(&[0.0, 0.1]);
        let bw = Bandwidth::new(1e-3, 1).unwrap();
        // kernel values underflow at distance 0.05 yet the ratio is well defined
        let x = [0.1f64.cos(), 0.1f64.sin()];
        assert!((smooth_normalized(&s, &[1.0, 2.0], &x, bw).unwrap() - 2.0).abs() < 1e-12);
        let far = [-1.0, 0.0];
        assert!(matches!(smooth_normalized(&s, &[1.0, 2.0], &far, bw), Err(Error::DegenerateDenominator { .. })));
    }

    #[test]
    fn regression_needs_responses() {
        let s = circle_sample(&[0.0, 1.0]);
        let bw = Bandwidth::new(0.5, 1).unwrap();
        assert!(matches!(nw_regress(&s, &[1.0, 0.0], bw), Err(Error::MissingResponses)));
        let s = s.with_responses(vec![3.0, 3.0]).unwrap();
        assert_eq!(nw_regress(&s, &[1.0, 0.0], bw).unwrap(), 3.0);
    }

    #[test]
    fn input_validation() {
        let s = circle_sample(&[0.0, 1.0]);
        let bw = Bandwidth::new(0.5, 1).unwrap();
        assert!(smooth_unnormalized(&s, &[1.0], &[1.0, 0.0], bw).is_err());
        assert!(smooth_unnormalized(&s, &[1.0, 2.0], &[1.0, 0.0, 0.0], bw).is_err());
        assert!(smooth_unnormalized(&s, &[1.0, f64::NAN], &[1.0, 0.0], bw).is_err());
    }

    #[test]
    fn population_constant_function() {
        let ctx = PopulationContext::new(Manifold::circle(5.0).unwrap(), DensitySpec::Uniform).unwrap();
        let bw = Bandwidth::new(0.02, 1).unwrap();
        let f = TestFunction::Constant { value: 1.0 };
        let t = population_smooth(&ctx, &f, &[5.0, 0.0], bw, false).unwrap();
        assert!((t - 1.0 / (10.0 * PI)).abs() <= 1e-4);
        let g = TestFunction::Constant { value: -2.5 };
        assert!((population_smooth(&ctx, &g, &[0.0, 5.0], bw, true).unwrap() + 2.5).abs() < 1e-12);
        assert_eq!(population_variance_integral(&ctx, &g, &[0.0, 5.0], bw).unwrap(), 0.0);
    }

    #[test]
    fn resolution_guard() {
        assert!(PopulationContext::new(Manifold::circle(1.0).unwrap(), DensitySpec::Uniform)
            .unwrap()
            .with_resolution(32)
            .is_err());
        let ctx = PopulationContext::new(Manifold::circle(1.0).unwrap(), DensitySpec::Uniform).unwrap();
        let bw = Bandwidth::new(1e-3, 1).unwrap();
        assert!(ctx.resolution_for(bw)[0] >= 4 * 1000);
        let torus = Bandwidth::new(0.1, 2).unwrap();
        assert!(population_smooth(&ctx, &TestFunction::CircleExample, &[1.0, 0.0], torus, false).is_err());
    }

    #[test]
    fn variance_integral_limit_on_unit_circle() {
        let ctx = PopulationContext::new(Manifold::circle(1.0).unwrap(), DensitySpec::Uniform).unwrap();
        let f = TestFunction::CosTheta { radius: 1.0 };
        let limit = 1.0 / (2.0 * PI * 2.0 * (4.0 * PI).sqrt());
        let errors: Vec<f64> = [0.1, 0.05, 0.025]
            .iter()
            .map(|&e| {
                let bw = Bandwidth::new(e, 1).unwrap();
                (population_variance_integral(&ctx, &f, &[0.0, 1.0], bw).unwrap() - limit).abs()
            })
            .collect();
        assert!(errors[2] < errors[1] && errors[1] < errors[0]);
        assert!(errors[2] < 0.05 * limit);
        let at_critical = population_variance_integral(&ctx, &f, &[1.0, 0.0], Bandwidth::new(0.025, 1).unwrap()).unwrap();
        assert!(at_critical < 1e-3 * limit);
    }
}
