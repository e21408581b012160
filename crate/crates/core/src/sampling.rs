//! Seeded i.i.d. samplers on the built-in manifolds.
//!
//! # Random streams
//!
//! Every sampler owns a `Xoshiro256PlusPlus` generator seeded with
//! `seed_from_u64(seed)` (the state is filled from SplitMix64 of `seed`).
//! Uniform variates are `(next_u64 >> 11) · 2⁻⁵³`; normal variates use the
//! ziggurat sampler of `rand_distr::StandardNormal`. Draw order per point:
//!
//! * circle, uniform: `θ = 2πU`.
//! * torus, uniform: `θ₁ = 2πU`, then repeat `θ₂ = 2πU, u = U` until
//!   `u (R + r) ≤ R + r cos θ₂`.
//! * torus, sine model: repeat `θ₁ = 2πU, θ₂ = 2πU, u = U` until
//!   `ln u ≤ log p(θ₁, θ₂) − (κ₁ + κ₂ + |κ₃|)`.
//!
//! Replicate seeds come from [`derive_seed`].

use std::f64::consts::PI;
use std::io::Write;

use rand::{Rng, SeedableRng};
use rand_distr::StandardNormal;
use rand_xoshiro::Xoshiro256PlusPlus;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::functions::TestFunction;
use crate::geometry::{reduce_angle, DensitySpec, EmbeddedManifold, Manifold};

/// Proposal budget per requested point for rejection samplers.
pub const MAX_PROPOSALS_PER_POINT: u64 = 1_000_000;

const GOLDEN_GAMMA: u64 = 0x9E37_79B9_7F4A_7C15;

/// Seed of replicate `index` under `root`.
///
/// `z = root + (index + 1)·0x9E3779B97F4A7C15 (mod 2⁶⁴)`, followed by the
/// SplitMix64 finalizer
///
/// ```text
/// z = (z ^ (z >> 30)) · 0xBF58476D1CE4E5B9
/// z = (z ^ (z >> 27)) · 0x94D049BB133111EB
/// z ^ (z >> 31)
/// ```
///
/// Both steps are bijections, so distinct indices never collide.
pub fn derive_seed(root: u64, index: u64) -> u64 {
    let mut z = root.wrapping_add(index.wrapping_add(1).wrapping_mul(GOLDEN_GAMMA));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

fn rng_from(seed: u64) -> Xoshiro256PlusPlus {
    Xoshiro256PlusPlus::seed_from_u64(seed)
}

/// Synthetic regression responses `Y = clamp(g(X) + ξ, ±C_Y)`, `ξ ~ N(0, σ²)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RegressionSpec {
    pub g: TestFunction,
    pub noise_sd: f64,
    pub clip: f64,
}

impl RegressionSpec {
    pub fn validate(&self) -> Result<()> {
        if !(self.noise_sd.is_finite() && self.noise_sd >= 0.0) {
            return Err(Error::InvalidArgument(format!("noise_sd must be >= 0, got {}", self.noise_sd)));
        }
        if !(self.clip.is_finite() && self.clip > 0.0) {
            return Err(Error::InvalidArgument(format!("clip must be > 0, got {}", self.clip)));
        }
        Ok(())
    }

    /// `E[clamp(g(x) + ξ, ±C_Y)]`, the exact regression function.
    pub fn conditional_mean(&self, x: &[f64]) -> f64 {
        let m = self.g.value(x);
        clipped_normal_mean(m, self.noise_sd, self.clip)
    }

    /// `Var(clamp(g(x) + ξ, ±C_Y))`.
    pub fn conditional_variance(&self, x: &[f64]) -> f64 {
        let m = self.g.value(x);
        let (mean, second) = clipped_normal_moments(m, self.noise_sd, self.clip);
        (second - mean * mean).max(0.0)
    }
}

fn clipped_normal_mean(m: f64, s: f64, c: f64) -> f64 {
    clipped_normal_moments(m, s, c).0
}

/// First two moments of `clamp(Z, −c, c)` for `Z ~ N(m, s²)`.
fn clipped_normal_moments(m: f64, s: f64, c: f64) -> (f64, f64) {
    if s == 0.0 {
        let v = m.clamp(-c, c);
        return (v, v * v);
    }
    let a = (-c - m) / s;
    let b = (c - m) / s;
    let (pa, pb) = (std_normal_cdf(a), std_normal_cdf(b));
    let (da, db) = (std_normal_pdf(a), std_normal_pdf(b));
    let mid = pb - pa;
    let mean = -c * pa + c * (1.0 - pb) + m * mid + s * (da - db);
    // E[Z² ; a<Z'<b] = (m² + s²)·mid + 2ms(da − db) + s²(a·da − b·db)
    let inner2 = (m * m + s * s) * mid + 2.0 * m * s * (da - db) + s * s * (a * da - b * db);
    let second = c * c * (pa + 1.0 - pb) + inner2;
    (mean, second)
}

pub(crate) fn std_normal_cdf(x: f64) -> f64 {
    0.5 * statrs::function::erf::erfc(-x / std::f64::consts::SQRT_2)
}

fn std_normal_pdf(x: f64) -> f64 {
    (-0.5 * x * x).exp() / (2.0 * PI).sqrt()
}

/// Provenance of a sample.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleMeta {
    pub manifold: Manifold,
    pub density: DensitySpec,
    pub seed: u64,
    pub n: usize,
    pub sampler: String,
    pub regression: Option<(RegressionSpec, u64)>,
}

/// `n` ambient points with their chart angles and optional responses.
#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    points: Vec<f64>,
    chart: Vec<f64>,
    responses: Option<Vec<f64>>,
    meta: SampleMeta,
}

impl Sample {
    /// Wraps explicit points; every point must lie on `manifold`.
    pub fn from_points(manifold: Manifold, points: &[Vec<f64>]) -> Result<Self> {
        if points.is_empty() {
            return Err(Error::EmptySample);
        }
        let mut flat = Vec::with_capacity(points.len() * manifold.ambient_dim());
        let mut chart = Vec::with_capacity(points.len() * manifold.intrinsic_dim());
        for p in points {
            let theta = manifold.chart(p)?;
            flat.extend_from_slice(p);
            chart.extend_from_slice(theta.angles());
        }
        Ok(Self {
            points: flat,
            chart,
            responses: None,
            meta: SampleMeta {
                manifold,
                density: DensitySpec::Uniform,
                seed: 0,
                n: points.len(),
                sampler: "explicit".into(),
                regression: None,
            },
        })
    }

    /// Replaces the responses (length must match).
    pub fn with_responses(mut self, y: Vec<f64>) -> Result<Self> {
        if y.len() != self.len() {
            return Err(Error::DimensionMismatch { expected: self.len(), got: y.len() });
        }
        self.responses = Some(y);
        Ok(self)
    }

    pub fn len(&self) -> usize {
        self.meta.n
    }

    pub fn is_empty(&self) -> bool {
        self.meta.n == 0
    }

    pub fn manifold(&self) -> &Manifold {
        &self.meta.manifold
    }

    pub fn ambient_dim(&self) -> usize {
        self.meta.manifold.ambient_dim()
    }

    pub fn intrinsic_dim(&self) -> usize {
        self.meta.manifold.intrinsic_dim()
    }

    pub fn point(&self, i: usize) -> &[f64] {
        let d = self.ambient_dim();
        &self.points[i * d..(i + 1) * d]
    }

    /// Row-major n×D ambient coordinates.
    pub fn points(&self) -> &[f64] {
        &self.points
    }

    pub fn chart_angles(&self, i: usize) -> &[f64] {
        let d = self.intrinsic_dim();
        &self.chart[i * d..(i + 1) * d]
    }

    pub fn responses(&self) -> Option<&[f64]> {
        self.responses.as_deref()
    }

    pub fn meta(&self) -> &SampleMeta {
        &self.meta
    }

    /// Evaluates a test function at every sample point.
    pub fn evaluate(&self, f: &TestFunction) -> Vec<f64> {
        f.evaluate_rows(&self.points, self.ambient_dim())
    }

    /// Writes the sample as CSV with columns `x1..xD, theta1..thetad[, y]`.
    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        let dd = self.ambient_dim();
        let d = self.intrinsic_dim();
        let mut header: Vec<String> = (1..=dd).map(|k| format!("x{k}")).collect();
        header.extend((1..=d).map(|k| format!("theta{k}")));
        if self.responses.is_some() {
            header.push("y".into());
        }
        writeln!(w, "{}", header.join(","))?;
        for i in 0..self.len() {
            let mut row: Vec<String> = self.point(i).iter().map(|v| v.to_string()).collect();
            row.extend(self.chart_angles(i).iter().map(|v| v.to_string()));
            if let Some(y) = &self.responses {
                row.push(y[i].to_string());
            }
            writeln!(w, "{}", row.join(","))?;
        }
        Ok(())
    }
}

fn check_n(n: usize) -> Result<()> {
    if n == 0 {
        Err(Error::InvalidArgument("sample size must be at least 1".into()))
    } else {
        Ok(())
    }
}

/// Uniform sample with respect to the volume measure.
pub fn sample_uniform(manifold: &Manifold, n: usize, seed: u64) -> Result<Sample> {
    check_n(n)?;
    manifold.validate()?;
    let mut rng = rng_from(seed);
    let d = manifold.intrinsic_dim();
    let mut chart = Vec::with_capacity(n * d);
    match *manifold {
        Manifold::Circle { .. } => {
            for _ in 0..n {
                chart.push(uniform_angle(&mut rng));
            }
        }
        Manifold::Torus { major, minor } => {
            for _ in 0..n {
                let t1 = uniform_angle(&mut rng);
                let t2 = loop {
                    let t2 = uniform_angle(&mut rng);
                    let u: f64 = rng.random();
                    if u * (major + minor) <= major + minor * t2.cos() {
                        break t2;
                    }
                };
                chart.push(t1);
                chart.push(t2);
            }
        }
    }
    Ok(build_sample(*manifold, DensitySpec::Uniform, seed, chart, "uniform"))
}

/// Parameters of the bivariate von Mises sine model.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SineModel {
    pub mu1: f64,
    pub mu2: f64,
    pub kappa1: f64,
    pub kappa2: f64,
    pub kappa3: f64,
}

impl SineModel {
    pub fn spec(&self) -> DensitySpec {
        DensitySpec::VonMisesSine {
            mu1: self.mu1,
            mu2: self.mu2,
            kappa1: self.kappa1,
            kappa2: self.kappa2,
            kappa3: self.kappa3,
        }
    }

    fn log_envelope(&self) -> f64 {
        self.kappa1.abs() + self.kappa2.abs() + self.kappa3.abs()
    }
}

/// Draws torus points whose chart angles follow the sine model (density w.r.t. dθ).
pub fn sample_vonmises_sine(manifold: &Manifold, model: SineModel, n: usize, seed: u64) -> Result<Sample> {
    check_n(n)?;
    if !matches!(manifold, Manifold::Torus { .. }) {
        return Err(Error::UnsupportedManifold("von Mises sine model needs the torus"));
    }
    manifold.validate()?;
    let mut rng = rng_from(seed);
    let budget = MAX_PROPOSALS_PER_POINT.saturating_mul(n as u64);
    let log_env = model.log_envelope();
    let mut proposals = 0u64;
    let mut chart = Vec::with_capacity(2 * n);
    while chart.len() < 2 * n {
        if proposals >= budget {
            return Err(Error::SamplerStalled { proposals });
        }
        proposals += 1;
        let t1 = uniform_angle(&mut rng);
        let t2 = uniform_angle(&mut rng);
        let u: f64 = rng.random();
        let logp = DensitySpec::sine_log_kernel(model.mu1, model.mu2, model.kappa1, model.kappa2, model.kappa3, &[t1, t2]);
        if u.ln() <= logp - log_env {
            chart.push(t1);
            chart.push(t2);
        }
    }
    Ok(build_sample(*manifold, model.spec(), seed, chart, "vonmises_sine"))
}

/// Draws a sample from any supported density spec.
pub fn sample_density(manifold: &Manifold, spec: DensitySpec, n: usize, seed: u64) -> Result<Sample> {
    match spec {
        DensitySpec::Uniform => sample_uniform(manifold, n, seed),
        DensitySpec::VonMisesSine { mu1, mu2, kappa1, kappa2, kappa3 } => {
            sample_vonmises_sine(manifold, SineModel { mu1, mu2, kappa1, kappa2, kappa3 }, n, seed)
        }
    }
}

/// Adds responses `clamp(g(X_i) + ξ_i, ±C_Y)` drawn from a separate stream.
pub fn attach_regression(sample: &Sample, spec: &RegressionSpec, seed: u64) -> Result<Sample> {
    spec.validate()?;
    if sample.responses.is_some() {
        return Err(Error::InvalidArgument("sample already carries responses".into()));
    }
    let mut rng = rng_from(seed);
    let y = (0..sample.len())
        .map(|i| {
            let xi: f64 = rng.sample(StandardNormal);
            (spec.g.value(sample.point(i)) + spec.noise_sd * xi).clamp(-spec.clip, spec.clip)
        })
        .collect();
    let mut out = sample.clone();
    out.responses = Some(y);
    out.meta.regression = Some((*spec, seed));
    Ok(out)
}

fn uniform_angle(rng: &mut Xoshiro256PlusPlus) -> f64 {
    let u: f64 = rng.random();
    reduce_angle(2.0 * PI * u)
}

fn build_sample(manifold: Manifold, density: DensitySpec, seed: u64, chart: Vec<f64>, sampler: &str) -> Sample {
    let d = manifold.intrinsic_dim();
    let n = chart.len() / d;
    let mut points = Vec::with_capacity(n * manifold.ambient_dim());
    for theta in chart.chunks_exact(d) {
        points.extend(manifold.embed(theta));
    }
    Sample {
        points,
        chart,
        responses: None,
        meta: SampleMeta { manifold, density, seed, n, sampler: sampler.into(), regression: None },
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::HashSet;

    #[test]
    fn uniform_sampling_is_deterministic() {
        let c = Manifold::circle(5.0).unwrap();
        let a = sample_uniform(&c, 4, 7).unwrap();
        let b = sample_uniform(&c, 4, 7).unwrap();
        assert_eq!(a, b);
        let t = Manifold::torus(0.5, 1.0 / 3.0).unwrap();
        assert_eq!(sample_uniform(&t, 4, 7).unwrap(), sample_uniform(&t, 4, 7).unwrap());
        assert_ne!(sample_uniform(&c, 4, 8).unwrap().points(), a.points());
    }

    #[test]
    fn every_point_is_on_the_manifold() {
        let t = Manifold::torus(0.5, 1.0 / 3.0).unwrap();
        let model = SineModel { mu1: 0.0, mu2: 0.0, kappa1: 1.0, kappa2: 1.0, kappa3: 0.5 };
        let s = sample_vonmises_sine(&t, model, 500, 3).unwrap();
        for i in 0..s.len() {
            t.check_on_manifold(s.point(i)).unwrap();
        }
    }

    #[test]
    fn sine_model_rejects_the_circle() {
        let c = Manifold::circle(1.0).unwrap();
        let model = SineModel { mu1: 0.0, mu2: 0.0, kappa1: 1.0, kappa2: 1.0, kappa3: 0.0 };
        assert!(sample_vonmises_sine(&c, model, 10, 1).is_err());
    }

    #[test]
    fn zero_size_is_rejected() {
        assert!(sample_uniform(&Manifold::circle(1.0).unwrap(), 0, 1).is_err());
    }

    #[test]
    fn derive_seed_contract() {
        assert_eq!(derive_seed(42, 5), derive_seed(42, 5));
        assert_ne!(derive_seed(42, 0), derive_seed(42, 1));
        let seen: HashSet<u64> = (0..100_000).map(|k| derive_seed(9, k)).collect();
        assert_eq!(seen.len(), 100_000);
        // frozen reference values
        assert_eq!(derive_seed(0, 0), 0xE220_A839_7B1D_CDAF);
    }

    #[test]
    fn regression_responses() {
        let c = Manifold::circle(1.0).unwrap();
        let s = sample_uniform(&c, 50, 1).unwrap();
        let g = TestFunction::Constant { value: 3.0 };
        let r = attach_regression(&s, &RegressionSpec { g, noise_sd: 0.0, clip: 10.0 }, 2).unwrap();
        assert!(r.responses().unwrap().iter().all(|&y| y == 3.0));
        let r = attach_regression(&s, &RegressionSpec { g, noise_sd: 0.0, clip: 2.0 }, 2).unwrap();
        assert!(r.responses().unwrap().iter().all(|&y| y == 2.0));
        assert!(attach_regression(&r, &RegressionSpec { g, noise_sd: 0.0, clip: 2.0 }, 2).is_err());
        assert!(RegressionSpec { g, noise_sd: -1.0, clip: 1.0 }.validate().is_err());
    }

    #[test]
    fn clipped_moments_reduce_to_normal_when_clip_is_far() {
        let (m, s2) = clipped_normal_moments(0.3, 0.1, 100.0);
        assert!((m - 0.3).abs() < 1e-14);
        assert!((s2 - m * m - 0.01).abs() < 1e-14);
        // heavy clipping at zero mean: E = 0 by symmetry
        assert!(clipped_normal_moments(0.0, 1.0, 0.5).0.abs() < 1e-15);
    }

    #[test]
    fn csv_layout() {
        let c = Manifold::circle(1.0).unwrap();
        let s = Sample::from_points(c, &[vec![1.0, 0.0], vec![0.0, 1.0]]).unwrap();
        let s = s.with_responses(vec![0.5, -0.25]).unwrap();
        let mut buf = Vec::new();
        s.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], "x1,x2,theta1,y");
        assert_eq!(lines[1], "1,0,0,0.5");
        let fields: Vec<f64> = lines[2].split(',').map(|v| v.parse().unwrap()).collect();
        assert_eq!(fields[2], std::f64::consts::FRAC_PI_2);
    }
}
