//! Running an experiment: replicates, population centers, summaries.

use std::time::Instant;

use rayon::prelude::*;
use serde::Serialize;

use super::config::{Centering, ExperimentConfig, ExperimentKind, HksSettings};
use crate::asymptotics::{
    empirical_variance, ks_distance, limit_variance, mahalanobis_ball_distance, population_center, population_regression_center,
    raw_estimate, regression_limit_variance, scaling, standardized_statistic, truth_center, StatisticKind,
};
use crate::error::{Error, Result};
use crate::geometry::{EmbeddedManifold, Manifold};
use crate::kernels::Bandwidth;
use crate::sampling::{attach_regression, derive_seed, sample_density, RegressionSpec, Sample};
use crate::smoothing::{smooth_normalized, PopulationContext};
use crate::spectral::{
    bandwidth_advisory, build_reweighted_laplacian, eigendecompose, hks_at_samples, hks_extend, true_hks_circle, w_normalize,
};

/// Confidence level used by the bandwidth advisory.
pub const ADVISORY_DELTA: f64 = 0.05;

/// Terms of the heat kernel series below this are dropped.
const HKS_SERIES_TOL: f64 = 1e-15;

/// One replicate value.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ReplicateRow {
    pub statistic: String,
    /// Index into the configured points; `None` for sample-wide values.
    pub point: Option<usize>,
    pub n: usize,
    pub eps: f64,
    pub replicate: usize,
    pub seed: u64,
    pub value: f64,
}

/// Aggregate over the replicates of one (statistic, point, n).
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SummaryRow {
    pub statistic: String,
    pub point: Option<usize>,
    pub theta: Vec<f64>,
    pub x: Vec<f64>,
    pub n: usize,
    pub eps: f64,
    pub replicates: usize,
    pub center: Option<f64>,
    pub sigma2: Option<f64>,
    pub mean: f64,
    pub emp_var: f64,
    pub var_ratio: Option<f64>,
    pub ks: Option<f64>,
}

/// KS distance of the joint vector over all points, against its χ² law.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BallDistance {
    pub statistic: String,
    pub n: usize,
    pub points: usize,
    pub value: f64,
}

/// Log–log slope of the root mean square error against `n`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RateSlope {
    pub statistic: String,
    pub point: usize,
    pub slope: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct WallTime {
    pub n: usize,
    pub seconds: f64,
}

/// Everything an experiment produced, including a failure if it stopped early.
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentResult {
    pub config: ExperimentConfig,
    pub config_hash: String,
    pub version: &'static str,
    pub raw: Vec<ReplicateRow>,
    pub summary: Vec<SummaryRow>,
    pub advisories: Vec<String>,
    pub wall_times: Vec<WallTime>,
    pub ball_distances: Vec<BallDistance>,
    pub rate_slopes: Vec<RateSlope>,
    /// Largest deviation from the Laplacian / smoothing identity over all replicates.
    pub identity_max_diff: Option<f64>,
    pub failure: Option<String>,
}

impl ExperimentResult {
    pub fn is_complete(&self) -> bool {
        self.failure.is_none()
    }

    /// Replicate values for one (statistic, point, n), in replicate order.
    pub fn values(&self, statistic: &str, point: Option<usize>, n: usize) -> Vec<f64> {
        self.raw.iter().filter(|r| r.statistic == statistic && r.point == point && r.n == n).map(|r| r.value).collect()
    }

    pub fn summary_row(&self, statistic: &str, point: Option<usize>, n: usize) -> Option<&SummaryRow> {
        self.summary.iter().find(|r| r.statistic == statistic && r.point == point && r.n == n)
    }
}

/// Seed of replicate `r` at sample size `n`.
pub fn replicate_seed(root: u64, n: usize, r: usize) -> u64 {
    derive_seed(derive_seed(root, n as u64), r as u64)
}

/// Seed of the response noise of a replicate, independent of its sample stream.
pub fn noise_seed(sample_seed: u64) -> u64 {
    derive_seed(sample_seed, 0)
}

/// `(ε*, ε₀)`: the bandwidth window `((max(log n, log 1/δ)/n)^{1/d}, reach)`.
pub fn bandwidth_window(manifold: &Manifold, n: usize, delta: f64) -> (f64, f64) {
    let d = manifold.intrinsic_dim() as f64;
    let nf = n as f64;
    let lower = (nf.ln().max((1.0 / delta).ln()) / nf).powf(1.0 / d);
    (lower, manifold.reach())
}

fn hks_label(prefix: &str, tau: f64) -> String {
    format!("{prefix}(tau={tau})")
}

/// Everything fixed per (statistic, point, n) before replicates run.
struct Target {
    kind: StatisticKind,
    point: usize,
    x: Vec<f64>,
    f_at_x: f64,
    center: f64,
    sigma2: Option<f64>,
    /// Population center of the normalized estimator at `√2 ε`, for the identity check.
    identity_center: Option<f64>,
}

/// Runs an experiment. Numeric failures stop the run and are recorded in
/// [`ExperimentResult::failure`] next to everything completed so far.
pub fn run_experiment(cfg: &ExperimentConfig) -> ExperimentResult {
    run_with_warnings(cfg, Vec::new())
}

/// As [`run_experiment`], carrying parse warnings into the advisories.
pub fn run_with_warnings(cfg: &ExperimentConfig, warnings: Vec<String>) -> ExperimentResult {
    let mut res = ExperimentResult {
        config: cfg.clone(),
        config_hash: cfg.hash(),
        version: env!("CARGO_PKG_VERSION"),
        raw: Vec::new(),
        summary: Vec::new(),
        advisories: warnings,
        wall_times: Vec::new(),
        ball_distances: Vec::new(),
        rate_slopes: Vec::new(),
        identity_max_diff: None,
        failure: None,
    };
    if let Err(e) = run_into(cfg, &mut res) {
        res.failure = Some(e.to_string());
    }
    if cfg.experiment == ExperimentKind::Rates {
        res.rate_slopes = rate_slopes(cfg, &res.summary);
    }
    res
}

fn context(cfg: &ExperimentConfig) -> Result<PopulationContext> {
    let ctx = PopulationContext::new(cfg.manifold, cfg.density)?;
    match cfg.quadrature_resolution {
        Some(r) => ctx.with_resolution(r),
        None => Ok(ctx),
    }
}

fn regression_spec(cfg: &ExperimentConfig) -> Option<RegressionSpec> {
    cfg.regression.map(|r| RegressionSpec { g: cfg.function, noise_sd: r.noise_sd, clip: r.clip })
}

fn run_into(cfg: &ExperimentConfig, res: &mut ExperimentResult) -> Result<()> {
    let manifold = cfg.manifold;
    let d = manifold.intrinsic_dim();
    let ctx = context(cfg)?;
    let xs: Vec<Vec<f64>> = cfg.points.iter().map(|p| manifold.embed(p)).collect();
    for (i, x) in xs.iter().enumerate() {
        manifold.check_on_manifold(x)?;
        if ctx.density().at(x)? <= 0.0 {
            return Err(Error::InvalidArgument(format!("density vanishes at point {i}")));
        }
    }

    if let Some(h) = &cfg.hks {
        for &n in &cfg.n {
            if let Some(msg) = bandwidth_advisory(n, d, h.eta) {
                res.advisories.push(format!("n={n}: {msg}"));
            }
        }
    }

    let sigma2s = if cfg.experiment == ExperimentKind::Hks { Vec::new() } else { limit_variances(cfg, &ctx, &xs, res)? };

    for &n in &cfg.n {
        let started = Instant::now();
        let eps = cfg.bandwidth.eps(n, d);
        let bw = Bandwidth::new(eps, d)?;
        let (lo, hi) = bandwidth_window(&manifold, n, ADVISORY_DELTA);
        if cfg.experiment != ExperimentKind::Hks && !(eps > lo && eps < hi) {
            res.advisories.push(format!("n={n}: eps={eps} lies outside the guidance window ({lo}, {hi})"));
        }
        if cfg.experiment == ExperimentKind::Hks {
            run_hks_level(cfg, cfg.hks.as_ref().expect("validated hks section"), n, &xs, res)?;
        } else {
            let targets = build_targets(cfg, &ctx, &xs, &sigma2s, bw)?;
            run_level(cfg, n, bw, &targets, res)?;
        }
        res.wall_times.push(WallTime { n, seconds: started.elapsed().as_secs_f64() });
    }
    Ok(())
}

/// Limit variances per (statistic, point); degenerate ones become advisories.
fn limit_variances(cfg: &ExperimentConfig, ctx: &PopulationContext, xs: &[Vec<f64>], res: &mut ExperimentResult) -> Result<Vec<Vec<Option<f64>>>> {
    let mut out = Vec::new();
    for &kind in &cfg.statistics {
        let mut row = Vec::new();
        for (i, x) in xs.iter().enumerate() {
            let lv = match kind {
                StatisticKind::Regression => {
                    let spec = regression_spec(cfg).ok_or_else(|| Error::InvalidArgument("missing regression settings".into()))?;
                    regression_limit_variance(ctx, &spec, x)
                }
                _ => limit_variance(kind, ctx, &cfg.function, x),
            };
            match lv {
                Ok(v) => row.push(Some(v.sigma2)),
                Err(Error::DegenerateVariance(why)) => {
                    res.advisories.push(format!("{} at point {i}: limit variance degenerates ({why})", kind.name()));
                    row.push(None);
                }
                Err(e) => return Err(e),
            }
        }
        out.push(row);
    }
    Ok(out)
}

fn build_targets(cfg: &ExperimentConfig, ctx: &PopulationContext, xs: &[Vec<f64>], sigma2s: &[Vec<Option<f64>>], bw: Bandwidth) -> Result<Vec<Target>> {
    let jobs: Vec<(usize, StatisticKind, usize)> = cfg
        .statistics
        .iter()
        .enumerate()
        .flat_map(|(k, &kind)| (0..xs.len()).map(move |p| (k, kind, p)))
        .collect();
    jobs.into_iter()
        .map(|(k, kind, p)| {
            let x = &xs[p];
            let center = match (cfg.experiment, kind, cfg.centering) {
                (_, StatisticKind::Regression, Centering::Population) => {
                    population_regression_center(ctx, &regression_spec(cfg).expect("validated regression section"), x, bw)?
                }
                (_, StatisticKind::Regression, Centering::Truth) => regression_spec(cfg).expect("validated regression section").conditional_mean(x),
                (ExperimentKind::Rates, _, _) => truth_center(kind, ctx, &cfg.function, x)?,
                (_, _, Centering::Population) => population_center(kind, ctx, &cfg.function, x, bw)?,
                (_, _, Centering::Truth) => truth_center(kind, ctx, &cfg.function, x)?,
            };
            let identity_center = if kind == StatisticKind::Laplacian {
                Some(population_center(StatisticKind::Normalized, ctx, &cfg.function, x, bw.scaled(2f64.sqrt())?)?)
            } else {
                None
            };
            Ok(Target { kind, point: p, x: x.clone(), f_at_x: cfg.function.value(x), center, sigma2: sigma2s[k][p], identity_center })
        })
        .collect()
}

fn draw(cfg: &ExperimentConfig, n: usize, seed: u64) -> Result<Sample> {
    let s = sample_density(&cfg.manifold, cfg.density, n, seed)?;
    match regression_spec(cfg) {
        Some(spec) if cfg.experiment == ExperimentKind::Regression => attach_regression(&s, &spec, noise_seed(seed)),
        _ => Ok(s),
    }
}

/// Per replicate: one value per target, and the identity residual if checked.
type ReplicateOutput = (Vec<f64>, f64);

fn run_replicate(cfg: &ExperimentConfig, n: usize, bw: Bandwidth, targets: &[Target], seed: u64) -> Result<ReplicateOutput> {
    let s = draw(cfg, n, seed)?;
    let f = s.evaluate(&cfg.function);
    let d = bw.dim() as f64;
    let mut values = Vec::with_capacity(targets.len());
    let mut identity = 0.0f64;
    for t in targets {
        let v = if cfg.experiment == ExperimentKind::Rates {
            raw_estimate(t.kind, &s, &f, t.f_at_x, &t.x, bw)? - t.center
        } else {
            standardized_statistic(t.kind, &s, &f, t.f_at_x, &t.x, bw, t.center)?
        };
        if let Some(c2) = t.identity_center {
            // The Laplacian statistic is −2^{(2−d)/4} times the normalized statistic
            // at bandwidth √2ε, both centered at their population values.
            let wide = bw.scaled(2f64.sqrt())?;
            let z = scaling(StatisticKind::Normalized, n, wide) * (smooth_normalized(&s, &f, &t.x, wide)? - c2);
            let l_raw = raw_estimate(t.kind, &s, &f, t.f_at_x, &t.x, bw)?;
            let l = scaling(t.kind, n, bw) * (l_raw - (t.f_at_x - c2) / bw.eps().powi(2));
            let diff = (l + 2f64.powf((2.0 - d) / 4.0) * z).abs() / l.abs().max(1.0);
            identity = identity.max(diff);
        }
        values.push(v);
    }
    Ok((values, identity))
}

fn run_level(cfg: &ExperimentConfig, n: usize, bw: Bandwidth, targets: &[Target], res: &mut ExperimentResult) -> Result<()> {
    let seeds: Vec<u64> = (0..cfg.replicates).map(|r| replicate_seed(cfg.seed, n, r)).collect();
    let outputs: Vec<Result<ReplicateOutput>> = seeds.par_iter().map(|&seed| run_replicate(cfg, n, bw, targets, seed)).collect();
    let first_failure = outputs.iter().position(|o| o.is_err());
    let done = first_failure.unwrap_or(outputs.len());
    let eps = bw.eps();

    for (ti, t) in targets.iter().enumerate() {
        for (r, out) in outputs[..done].iter().enumerate() {
            let (values, _) = out.as_ref().expect("only successful replicates are kept");
            res.raw.push(ReplicateRow {
                statistic: t.kind.name().to_string(),
                point: Some(t.point),
                n,
                eps,
                replicate: r,
                seed: seeds[r],
                value: values[ti],
            });
        }
    }
    if let Some(r) = first_failure {
        let err = outputs[r].as_ref().expect_err("failed replicate");
        return Err(Error::InvalidArgument(format!("n={n}, replicate {r} (seed {}): {err}", seeds[r])));
    }

    for (ti, t) in targets.iter().enumerate() {
        let vals: Vec<f64> = outputs.iter().map(|o| o.as_ref().expect("all succeeded").0[ti]).collect();
        let distributional = cfg.experiment.is_distributional();
        res.summary.push(summarize(
            cfg,
            t.kind.name(),
            Some(t.point),
            n,
            eps,
            &vals,
            Some(t.center),
            if distributional { t.sigma2 } else { None },
        )?);
    }
    if targets.iter().any(|t| t.identity_center.is_some()) {
        let worst = outputs.iter().map(|o| o.as_ref().expect("all succeeded").1).fold(0.0, f64::max);
        res.identity_max_diff = Some(res.identity_max_diff.unwrap_or(0.0).max(worst));
    }

    if cfg.experiment.is_distributional() {
        for &kind in &cfg.statistics {
            let idx: Vec<usize> = targets.iter().enumerate().filter(|(_, t)| t.kind == kind).map(|(i, _)| i).collect();
            let diag: Option<Vec<f64>> = idx.iter().map(|&i| targets[i].sigma2).collect();
            if let Some(diag) = diag {
                let vectors: Vec<Vec<f64>> =
                    outputs.iter().map(|o| idx.iter().map(|&i| o.as_ref().expect("all succeeded").0[i]).collect()).collect();
                res.ball_distances.push(BallDistance {
                    statistic: kind.name().to_string(),
                    n,
                    points: idx.len(),
                    value: mahalanobis_ball_distance(&vectors, &diag)?,
                });
            }
        }
    }
    Ok(())
}

#[allow(clippy::too_many_arguments)]
fn summarize(
    cfg: &ExperimentConfig,
    statistic: &str,
    point: Option<usize>,
    n: usize,
    eps: f64,
    vals: &[f64],
    center: Option<f64>,
    sigma2: Option<f64>,
) -> Result<SummaryRow> {
    let mean = vals.iter().sum::<f64>() / vals.len() as f64;
    let emp_var = empirical_variance(vals);
    let (theta, x) = match point {
        Some(p) => (cfg.points[p].clone(), cfg.manifold.embed(&cfg.points[p])),
        None => (Vec::new(), Vec::new()),
    };
    let ks = match sigma2 {
        Some(s2) if vals.len() >= 30 => Some(ks_distance(vals, s2)?),
        _ => None,
    };
    Ok(SummaryRow {
        statistic: statistic.to_string(),
        point,
        theta,
        x,
        n,
        eps,
        replicates: vals.len(),
        center,
        sigma2,
        mean,
        emp_var,
        var_ratio: sigma2.map(|s2| emp_var / s2),
        ks,
    })
}

/// HKS replicates: the sample mean of `Ĥ_τ` and its extension to every point,
/// compared with the exact circle value when the manifold is a circle.
fn run_hks_level(cfg: &ExperimentConfig, h: &HksSettings, n: usize, xs: &[Vec<f64>], res: &mut ExperimentResult) -> Result<()> {
    let seeds: Vec<u64> = (0..cfg.replicates).map(|r| replicate_seed(cfg.seed, n, r)).collect();
    // Per replicate, per tau: [sample mean, extension at each point].
    let outputs: Vec<Result<Vec<Vec<f64>>>> = seeds
        .iter()
        .map(|&seed| {
            let s = draw(cfg, n, seed)?;
            let l = build_reweighted_laplacian(&s, h.eta)?;
            let dec = w_normalize(&eigendecompose(&l, h.eigenpairs)?, &s, h.eta)?;
            h.taus
                .iter()
                .map(|&tau| {
                    let vals = hks_at_samples(&dec, tau, h.eigenpairs)?;
                    let mut row = vec![crate::summation::compensated_sum(vals.iter().copied()) / vals.len() as f64];
                    for x in xs {
                        row.push(hks_extend(&s, &vals, x, h.extension_eps)?);
                    }
                    Ok(row)
                })
                .collect()
        })
        .collect();
    let first_failure = outputs.iter().position(|o| o.is_err());
    let done = first_failure.unwrap_or(outputs.len());
    let truth = |tau: f64| -> Result<Option<f64>> {
        match cfg.manifold {
            Manifold::Circle { radius } => true_hks_circle(radius, tau, HKS_SERIES_TOL).map(Some),
            _ => Ok(None),
        }
    };

    for (k, &tau) in h.taus.iter().enumerate() {
        for slot in 0..=xs.len() {
            let (label, point) = if slot == 0 { (hks_label("hks_mean", tau), None) } else { (hks_label("hks", tau), Some(slot - 1)) };
            for (r, out) in outputs[..done].iter().enumerate() {
                let rows = out.as_ref().expect("only successful replicates are kept");
                res.raw.push(ReplicateRow { statistic: label.clone(), point, n, eps: h.eta, replicate: r, seed: seeds[r], value: rows[k][slot] });
            }
        }
    }
    if let Some(r) = first_failure {
        let err = outputs[r].as_ref().expect_err("failed replicate");
        return Err(Error::InvalidArgument(format!("n={n}, replicate {r} (seed {}): {err}", seeds[r])));
    }
    for (k, &tau) in h.taus.iter().enumerate() {
        let center = truth(tau)?;
        for slot in 0..=xs.len() {
            let (label, point) = if slot == 0 { (hks_label("hks_mean", tau), None) } else { (hks_label("hks", tau), Some(slot - 1)) };
            let vals: Vec<f64> = outputs.iter().map(|o| o.as_ref().expect("all succeeded")[k][slot]).collect();
            res.summary.push(summarize(cfg, &label, point, n, h.eta, &vals, center, None)?);
        }
    }
    Ok(())
}

/// Least-squares slope of `log RMSE` against `log n`, per statistic and point.
fn rate_slopes(cfg: &ExperimentConfig, summary: &[SummaryRow]) -> Vec<RateSlope> {
    let mut out = Vec::new();
    for &kind in &cfg.statistics {
        for p in 0..cfg.points.len() {
            let pts: Vec<(f64, f64)> = summary
                .iter()
                .filter(|r| r.statistic == kind.name() && r.point == Some(p))
                .map(|r| {
                    let var = if r.emp_var.is_nan() { 0.0 } else { r.emp_var * (r.replicates as f64 - 1.0) / r.replicates as f64 };
                    ((r.n as f64).ln(), (r.mean * r.mean + var).sqrt().ln())
                })
                .collect();
            if pts.len() >= 2 {
                out.push(RateSlope { statistic: kind.name().to_string(), point: p, slope: slope(&pts) });
            }
        }
    }
    out
}

/// Least-squares slope through `(x, y)` pairs.
pub fn slope(pts: &[(f64, f64)]) -> f64 {
    let m = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / m;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / m;
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    sxy / sxx
}
