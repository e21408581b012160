//! Limit variances, standardized statistics and distances to the normal limit.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};
use statrs::distribution::{ChiSquared, ContinuousCDF};

use crate::error::{Error, Result};
use crate::functions::{intrinsic_gradient, intrinsic_hessian, weighted_laplacian, TestFunction};
use crate::geometry::Manifold;
use crate::kernels::Bandwidth;
use crate::linalg::sq_dist;
use crate::sampling::{std_normal_cdf, RegressionSpec, Sample};
use crate::smoothing::{nw_regress, smooth_normalized, smooth_unnormalized, PopulationContext, DENOMINATOR_FLOOR};
use crate::spectral::pointwise_laplacian;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StatisticKind {
    /// `√(nε^d)(T_{n,ε}[f] − center)`
    Unnormalized,
    /// `√(nε^{d−2})(T̄_{n,ε}[f] − center)`
    Normalized,
    /// `ε⁻¹√(nε^{d−2})(T̄_{n,ε}[f] − center)`, for critical points of `f`
    CriticalNormalized,
    /// `√(nε^{d+2})(Δ_{n,M,2}f − center)`
    Laplacian,
    /// `√(nε^d)(φ_{n,ε} − center)`
    Regression,
}

impl StatisticKind {
    pub fn name(&self) -> &'static str {
        match self {
            StatisticKind::Unnormalized => "unnormalized",
            StatisticKind::Normalized => "normalized",
            StatisticKind::CriticalNormalized => "critical",
            StatisticKind::Laplacian => "laplacian",
            StatisticKind::Regression => "regression",
        }
    }
}

/// A limit variance with the quantities it was computed from.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LimitVariance {
    pub kind: StatisticKind,
    pub sigma2: f64,
    pub ingredients: Vec<(&'static str, f64)>,
}

fn four_pi_half(d: usize) -> f64 {
    (4.0 * PI).powf(d as f64 / 2.0)
}

fn check_density(rho: f64) -> Result<()> {
    if !(rho.is_finite() && rho > 0.0) {
        return Err(Error::InvalidArgument(format!("density must be positive, got {rho}")));
    }
    Ok(())
}

/// `ρ f² / (4π)^{d/2}`.
pub fn sigma_unnormalized(rho: f64, fx: f64, d: usize) -> Result<LimitVariance> {
    check_density(rho)?;
    if fx == 0.0 {
        return Err(Error::DegenerateVariance("f(x) = 0"));
    }
    Ok(LimitVariance {
        kind: StatisticKind::Unnormalized,
        sigma2: rho * fx * fx / four_pi_half(d),
        ingredients: vec![("rho", rho), ("f", fx)],
    })
}

/// `‖∇_M f‖² / (2(4π)^{d/2} ρ)`.
pub fn sigma_normalized(rho: f64, grad_norm: f64, d: usize) -> Result<LimitVariance> {
    check_density(rho)?;
    if grad_norm == 0.0 {
        return Err(Error::DegenerateVariance("gradient vanishes"));
    }
    Ok(LimitVariance {
        kind: StatisticKind::Normalized,
        sigma2: grad_norm * grad_norm / (2.0 * four_pi_half(d) * rho),
        ingredients: vec![("rho", rho), ("grad_norm", grad_norm)],
    })
}

/// `(2‖∇²_M f‖²_F + |Δ_M f|²) / (16(4π)^{d/2} ρ)`.
pub fn sigma_critical(rho: f64, hess_frob: f64, lap_abs: f64, d: usize) -> Result<LimitVariance> {
    check_density(rho)?;
    if hess_frob == 0.0 {
        return Err(Error::DegenerateVariance("Hessian vanishes"));
    }
    Ok(LimitVariance {
        kind: StatisticKind::CriticalNormalized,
        sigma2: (2.0 * hess_frob * hess_frob + lap_abs * lap_abs) / (16.0 * four_pi_half(d) * rho),
        ingredients: vec![("rho", rho), ("hess_frob", hess_frob), ("lap_abs", lap_abs)],
    })
}

/// `Var(Y | X = x) / ((4π)^{d/2} ρ)`.
pub fn sigma_regression(rho: f64, var_y_given_x: f64, d: usize) -> Result<LimitVariance> {
    check_density(rho)?;
    if !(var_y_given_x > 0.0) {
        return Err(Error::DegenerateVariance("conditional variance vanishes"));
    }
    Ok(LimitVariance {
        kind: StatisticKind::Regression,
        sigma2: var_y_given_x / (four_pi_half(d) * rho),
        ingredients: vec![("rho", rho), ("var_y", var_y_given_x)],
    })
}

/// Limit variance of `√(nε^{d+2})(Δ_{n,M,2}f − ·)`.
///
/// The estimator smooths with bandwidth `√2ε` but is scaled with `ε`, so the
/// normalized variance picks up the factor `2^{(2−d)/2}`.
pub fn sigma_laplacian(rho: f64, grad_norm: f64, d: usize) -> Result<LimitVariance> {
    let base = sigma_normalized(rho, grad_norm, d)?;
    Ok(LimitVariance {
        kind: StatisticKind::Laplacian,
        sigma2: base.sigma2 * 2f64.powf((2.0 - d as f64) / 2.0),
        ingredients: base.ingredients,
    })
}

/// The theoretical variance for a statistic at an on-manifold point.
pub fn limit_variance(kind: StatisticKind, ctx: &PopulationContext, f: &TestFunction, x: &[f64]) -> Result<LimitVariance> {
    let m = ctx.manifold();
    let d = crate::geometry::EmbeddedManifold::intrinsic_dim(m);
    let rho = ctx.density().at(x)?;
    match kind {
        StatisticKind::Unnormalized => sigma_unnormalized(rho, f.value(x), d),
        StatisticKind::Normalized => sigma_normalized(rho, crate::linalg::norm(&intrinsic_gradient(m, f, x)?), d),
        StatisticKind::Laplacian => sigma_laplacian(rho, crate::linalg::norm(&intrinsic_gradient(m, f, x)?), d),
        StatisticKind::CriticalNormalized => {
            let h = intrinsic_hessian(m, f, x)?;
            sigma_critical(rho, h.frobenius_norm(), h.trace().abs(), d)
        }
        StatisticKind::Regression => Err(Error::InvalidArgument("regression variance needs a response model".into())),
    }
}

/// Limit variance of the regression statistic under a response model.
pub fn regression_limit_variance(ctx: &PopulationContext, spec: &RegressionSpec, x: &[f64]) -> Result<LimitVariance> {
    let d = crate::geometry::EmbeddedManifold::intrinsic_dim(ctx.manifold());
    sigma_regression(ctx.density().at(x)?, spec.conditional_variance(x), d)
}

/// Multiplier applied to `estimate − center`.
pub fn scaling(kind: StatisticKind, n: usize, bw: Bandwidth) -> f64 {
    let n = n as f64;
    let eps = bw.eps();
    let d = bw.dim() as i32;
    match kind {
        StatisticKind::Unnormalized | StatisticKind::Regression => (n * eps.powi(d)).sqrt(),
        StatisticKind::Normalized => (n * eps.powi(d - 2)).sqrt(),
        StatisticKind::CriticalNormalized => (n * eps.powi(d - 2)).sqrt() / eps,
        StatisticKind::Laplacian => (n * eps.powi(d + 2)).sqrt(),
    }
}

/// The estimator a statistic is built on. `f_at_x` is only used by the Laplacian.
pub fn raw_estimate(kind: StatisticKind, s: &Sample, f: &[f64], f_at_x: f64, x: &[f64], bw: Bandwidth) -> Result<f64> {
    match kind {
        StatisticKind::Unnormalized => smooth_unnormalized(s, f, x, bw),
        StatisticKind::Normalized | StatisticKind::CriticalNormalized => smooth_normalized(s, f, x, bw),
        StatisticKind::Laplacian => pointwise_laplacian(s, f, f_at_x, x, bw),
        StatisticKind::Regression => nw_regress(s, x, bw),
    }
}

/// `scaling · (estimate − center)`.
pub fn standardized_statistic(
    kind: StatisticKind,
    s: &Sample,
    f: &[f64],
    f_at_x: f64,
    x: &[f64],
    bw: Bandwidth,
    center: f64,
) -> Result<f64> {
    let est = raw_estimate(kind, s, f, f_at_x, x, bw)?;
    Ok(scaling(kind, s.len(), bw) * (est - center))
}

/// Population version of the estimator behind `kind` (the default centering).
pub fn population_center(kind: StatisticKind, ctx: &PopulationContext, f: &TestFunction, x: &[f64], bw: Bandwidth) -> Result<f64> {
    use crate::smoothing::population_smooth;
    match kind {
        StatisticKind::Unnormalized => population_smooth(ctx, f, x, bw, false),
        StatisticKind::Normalized | StatisticKind::CriticalNormalized => population_smooth(ctx, f, x, bw, true),
        StatisticKind::Laplacian => {
            let smoothed = population_smooth(ctx, f, x, bw.scaled(2f64.sqrt())?, true)?;
            Ok((f.value(x) - smoothed) / (bw.eps() * bw.eps()))
        }
        StatisticKind::Regression => Err(Error::InvalidArgument("regression centering needs a response model".into())),
    }
}

/// Limit of the estimator behind `kind` as `ε → 0` (the "truth" centering).
pub fn truth_center(kind: StatisticKind, ctx: &PopulationContext, f: &TestFunction, x: &[f64]) -> Result<f64> {
    match kind {
        StatisticKind::Unnormalized => Ok(ctx.density().at(x)? * f.value(x)),
        StatisticKind::Normalized | StatisticKind::CriticalNormalized => Ok(f.value(x)),
        StatisticKind::Laplacian => weighted_laplacian(ctx.density(), f, x),
        StatisticKind::Regression => Err(Error::InvalidArgument("regression centering needs a response model".into())),
    }
}

/// Population Nadaraya–Watson value `E[K_ε m(X)] / E[K_ε]` with `m(x) = E[Y | X = x]`.
pub fn population_regression_center(ctx: &PopulationContext, spec: &RegressionSpec, x: &[f64], bw: Bandwidth) -> Result<f64> {
    ctx.check_inputs(&spec.g, x, bw)?;
    let v = ctx.expectation(bw, 2, |u, out| {
        let k = bw.eval_sq(sq_dist(u, x));
        out[0] = k * spec.conditional_mean(u);
        out[1] = k;
    })?;
    if v[1] < DENOMINATOR_FLOOR {
        return Err(Error::DegenerateDenominator { value: v[1] });
    }
    Ok(v[0] / v[1])
}

/// `sup_t |F̂_B(t) − Φ(t/σ)|`, evaluated on both sides of every jump.
pub fn ks_distance(xs: &[f64], sigma2: f64) -> Result<f64> {
    if !(sigma2.is_finite() && sigma2 > 0.0) {
        return Err(Error::DegenerateVariance("non-positive limit variance"));
    }
    let sigma = sigma2.sqrt();
    ks_against(xs, |t| std_normal_cdf(t / sigma))
}

fn ks_against(xs: &[f64], cdf: impl Fn(f64) -> f64) -> Result<f64> {
    if xs.is_empty() {
        return Err(Error::InvalidArgument("no observations".into()));
    }
    if xs.iter().any(|x| !x.is_finite()) {
        return Err(Error::InvalidArgument("observations must be finite".into()));
    }
    let mut sorted = xs.to_vec();
    sorted.sort_by(f64::total_cmp);
    let b = sorted.len() as f64;
    let mut worst = 0.0f64;
    for (i, &t) in sorted.iter().enumerate() {
        let f = cdf(t);
        worst = worst.max((i as f64 + 1.0) / b - f).max(f - i as f64 / b);
    }
    Ok(worst)
}

/// KS distance between squared Mahalanobis radii `Σ x_k²/σ_k²` and the χ²_m law.
///
/// This compares probabilities of centered ellipsoids only, so it bounds the
/// distance over all convex sets from below.
pub fn mahalanobis_ball_distance(xs: &[Vec<f64>], sigma2_diag: &[f64]) -> Result<f64> {
    if sigma2_diag.iter().any(|s| !(s.is_finite() && *s > 0.0)) {
        return Err(Error::DegenerateVariance("non-positive limit variance"));
    }
    let m = sigma2_diag.len();
    if m == 0 {
        return Err(Error::InvalidArgument("empty covariance".into()));
    }
    let mut radii = Vec::with_capacity(xs.len());
    for x in xs {
        if x.len() != m {
            return Err(Error::DimensionMismatch { expected: m, got: x.len() });
        }
        radii.push(x.iter().zip(sigma2_diag).map(|(v, s)| v * v / s).sum::<f64>());
    }
    let chi2 = ChiSquared::new(m as f64).map_err(|e| Error::InvalidArgument(e.to_string()))?;
    ks_against(&radii, |r2| chi2.cdf(r2))
}

/// Unbiased sample variance.
pub fn empirical_variance(xs: &[f64]) -> f64 {
    let n = xs.len() as f64;
    if xs.len() < 2 {
        return f64::NAN;
    }
    let mean = xs.iter().sum::<f64>() / n;
    xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0)
}

/// Chart angles of the critical points of a function on a circle.
///
/// Sign changes of the arclength derivative are bracketed on a grid of
/// `grid` angles and refined by bisection to `1e-12`.
pub fn circle_critical_angles(manifold: &Manifold, f: &TestFunction, grid: usize) -> Result<Vec<f64>> {
    if !matches!(manifold, Manifold::Circle { .. }) {
        return Err(Error::UnsupportedManifold("critical point search runs on the circle"));
    }
    let deriv = |t: f64| -> Result<f64> { Ok(intrinsic_gradient(manifold, f, &manifold.embed(&[t]))?[0]) };
    let step = 2.0 * PI / grid as f64;
    let mut roots = Vec::new();
    let mut prev = deriv(0.0)?;
    for k in 1..=grid {
        let (lo0, hi0) = ((k - 1) as f64 * step, k as f64 * step);
        let cur = deriv(hi0)?;
        if prev == 0.0 {
            roots.push(lo0);
        } else if prev * cur < 0.0 {
            let (mut lo, mut hi, mut flo) = (lo0, hi0, prev);
            while hi - lo > 1e-12 {
                let mid = 0.5 * (lo + hi);
                let fm = deriv(mid)?;
                if fm == 0.0 {
                    lo = mid;
                    hi = mid;
                    break;
                }
                if (fm < 0.0) == (flo < 0.0) {
                    lo = mid;
                    flo = fm;
                } else {
                    hi = mid;
                }
            }
            roots.push(crate::geometry::reduce_angle(0.5 * (lo + hi)));
        }
        prev = cur;
    }
    Ok(roots)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::DensitySpec;
    use statrs::distribution::Normal;

    #[test]
    fn variance_formula_examples() {
        let s = sigma_unnormalized(1.0, 1.0, 1).unwrap().sigma2;
        assert!((s - 1.0 / (4.0 * PI).sqrt()).abs() < 1e-15);
        let quad = sigma_unnormalized(1.0, 2.0, 1).unwrap().sigma2;
        assert!((quad - 4.0 * s).abs() < 1e-15);
        assert!((sigma_normalized(1.0, 1.0, 1).unwrap().sigma2 - 0.5 / (4.0 * PI).sqrt()).abs() < 1e-15);
        let circ = sigma_normalized(1.0 / (2.0 * PI), 1.0, 1).unwrap().sigma2;
        assert!((circ - PI / (4.0 * PI).sqrt()).abs() < 1e-14);
        let crit = sigma_critical(1.0, 1.0, 1.0, 1).unwrap().sigma2;
        assert!((crit - 3.0 / (16.0 * (4.0 * PI).sqrt())).abs() < 1e-15);
        assert!((sigma_regression(1.0, 1.0, 1).unwrap().sigma2 - 1.0 / (4.0 * PI).sqrt()).abs() < 1e-15);
        assert!(matches!(sigma_unnormalized(1.0, 0.0, 1), Err(Error::DegenerateVariance(_))));
        assert!(matches!(sigma_normalized(1.0, 0.0, 2), Err(Error::DegenerateVariance(_))));
        assert!(matches!(sigma_critical(1.0, 0.0, 0.0, 2), Err(Error::DegenerateVariance(_))));
        assert!(matches!(sigma_regression(1.0, 0.0, 2), Err(Error::DegenerateVariance(_))));
        let lap = sigma_laplacian(1.0, 1.0, 1).unwrap().sigma2;
        assert!((lap - 2f64.sqrt() * sigma_normalized(1.0, 1.0, 1).unwrap().sigma2).abs() < 1e-15);
        assert_eq!(sigma_laplacian(1.0, 1.0, 2).unwrap().sigma2, sigma_normalized(1.0, 1.0, 2).unwrap().sigma2);
    }

    #[test]
    fn ks_examples() {
        assert!((ks_distance(&[0.0], 1.0).unwrap() - 0.5).abs() < 1e-15);
        let normal = Normal::new(0.0, 1.0).unwrap();
        let b = 100;
        let xs: Vec<f64> = (0..b).map(|i| normal.inverse_cdf((i as f64 + 0.5) / b as f64)).collect();
        let d = ks_distance(&xs, 1.0).unwrap();
        // the quantile function is accurate to about 1e-10
        assert!(d <= 0.5 / b as f64 + 1e-9, "{d}");
        let scaled: Vec<f64> = xs.iter().map(|x| 3.0 * x).collect();
        assert!((ks_distance(&scaled, 9.0).unwrap() - ks_distance(&xs, 1.0).unwrap()).abs() < 1e-15);
        assert!(ks_distance(&xs, 0.0).is_err());
    }

    #[test]
    fn ball_distance_in_one_dimension_is_half_normal_ks() {
        let xs = [0.3, -1.2, 2.0, -0.1, 0.7];
        let rows: Vec<Vec<f64>> = xs.iter().map(|&v| vec![v]).collect();
        let ball = mahalanobis_ball_distance(&rows, &[4.0]).unwrap();
        let abs: Vec<f64> = xs.iter().map(|v: &f64| v.abs() / 2.0).collect();
        let half = ks_against(&abs, |t| 2.0 * std_normal_cdf(t) - 1.0).unwrap();
        assert!((ball - half).abs() < 1e-12);
    }

    #[test]
    fn statistics_scale_and_center() {
        let bw = Bandwidth::new(0.1, 1).unwrap();
        assert!((scaling(StatisticKind::Unnormalized, 100, bw) - 10f64.sqrt()).abs() < 1e-14);
        assert!((scaling(StatisticKind::Normalized, 100, bw) - 1000f64.sqrt()).abs() < 1e-10);
        assert!((scaling(StatisticKind::CriticalNormalized, 100, bw) - 10.0 * 1000f64.sqrt()).abs() < 1e-9);
        assert!((scaling(StatisticKind::Laplacian, 100, bw) - 0.1f64.sqrt()).abs() < 1e-14);
        let c = Manifold::circle(1.0).unwrap();
        let s = crate::sampling::sample_uniform(&c, 50, 1).unwrap();
        let f = s.evaluate(&TestFunction::CosTheta { radius: 1.0 });
        let x = [0.0, 1.0];
        let est = raw_estimate(StatisticKind::Normalized, &s, &f, 0.0, &x, bw).unwrap();
        assert_eq!(standardized_statistic(StatisticKind::Normalized, &s, &f, 0.0, &x, bw, est).unwrap(), 0.0);
    }

    #[test]
    fn circle_example_critical_points() {
        let c = Manifold::circle(5.0).unwrap();
        let f = TestFunction::CircleExample;
        let roots = circle_critical_angles(&c, &f, 4096).unwrap();
        assert!(!roots.is_empty() && roots.len().is_multiple_of(2));
        for t in roots {
            let g = intrinsic_gradient(&c, &f, &c.embed(&[t])).unwrap()[0];
            assert!(g.abs() < 1e-9, "gradient {g} at {t}");
        }
    }

    #[test]
    fn truth_and_population_centers_agree_for_small_bandwidth() {
        let ctx = PopulationContext::new(Manifold::circle(1.0).unwrap(), DensitySpec::Uniform).unwrap();
        let f = TestFunction::CosTheta { radius: 1.0 };
        let x = [0.6, 0.8];
        let bw = Bandwidth::new(0.01, 1).unwrap();
        for kind in [StatisticKind::Unnormalized, StatisticKind::Normalized, StatisticKind::Laplacian] {
            let p = population_center(kind, &ctx, &f, &x, bw).unwrap();
            let t = truth_center(kind, &ctx, &f, &x).unwrap();
            assert!((p - t).abs() < 1e-3, "{kind:?}: {p} vs {t}");
        }
    }
}
