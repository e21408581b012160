//! Graph Laplacians on a sample, their spectra, and the heat kernel signature.

use std::f64::consts::PI;
use std::io::Write;

use faer::dyn_stack::{MemBuffer, MemStack};
use faer::linalg::evd;
use faer::diag::Diag;
use faer::{Mat, Par};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::kernels::Bandwidth;
use crate::linalg::sq_dist;
use crate::sampling::Sample;
use crate::smoothing::smooth_normalized;

/// Largest accepted eigen-residual `‖Lv − μv‖ / ‖v‖`.
pub const RESIDUAL_TOLERANCE: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AffinityKind {
    /// `K_{√2β}(‖X_i − X_j‖)`
    Plain,
    /// `K_{√2β}(‖X_i − X_j‖) / (q(X_i) q(X_j))`
    Reweighted,
}

/// `L = (I − D⁻¹A)/β²` for a symmetric affinity `A` with row sums `D`.
#[derive(Debug, Clone)]
pub struct GraphLaplacian {
    n: usize,
    affinity: Vec<f64>,
    degree: Vec<f64>,
    beta: f64,
    kind: AffinityKind,
}

impl GraphLaplacian {
    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }

    pub fn kind(&self) -> AffinityKind {
        self.kind
    }

    pub fn affinity(&self, i: usize, j: usize) -> f64 {
        self.affinity[i * self.n + j]
    }

    pub fn degrees(&self) -> &[f64] {
        &self.degree
    }

    pub fn entry(&self, i: usize, j: usize) -> f64 {
        let delta = if i == j { 1.0 } else { 0.0 };
        (delta - self.affinity(i, j) / self.degree[i]) / (self.beta * self.beta)
    }

    /// `L v`, computed as `(v_i − Σ_j A_ij v_j / D_i)/β²`.
    pub fn apply(&self, v: &[f64]) -> Vec<f64> {
        let b2 = self.beta * self.beta;
        (0..self.n)
            .into_par_iter()
            .map(|i| {
                let row = &self.affinity[i * self.n..(i + 1) * self.n];
                let mut acc = crate::summation::CompensatedSum::new();
                for (a, x) in row.iter().zip(v) {
                    acc.add(a * x);
                }
                (v[i] - acc.value() / self.degree[i]) / b2
            })
            .collect()
    }

    /// Row sums of `L` (zero up to rounding).
    pub fn row_sums(&self) -> Vec<f64> {
        (0..self.n).map(|i| (0..self.n).map(|j| self.entry(i, j)).sum()).collect()
    }
}

fn affinity_rows(s: &Sample, kernel: Bandwidth) -> Vec<f64> {
    let n = s.len();
    let rows: Vec<Vec<f64>> = (0..n)
        .into_par_iter()
        .map(|i| (0..n).map(|j| kernel.eval_sq(sq_dist(s.point(i), s.point(j)))).collect())
        .collect();
    rows.concat()
}

fn row_totals(a: &[f64], n: usize) -> Vec<f64> {
    a.par_chunks(n).map(|row| crate::summation::compensated_sum(row.iter().copied())).collect()
}

fn check_graph_input(s: &Sample) -> Result<()> {
    if s.len() < 2 {
        return Err(Error::InvalidArgument(format!("a graph Laplacian needs at least 2 points, got {}", s.len())));
    }
    Ok(())
}

/// Random-walk Laplacian with kernel bandwidth `√2 ε` and scale `1/ε²`.
pub fn build_rw_laplacian(s: &Sample, eps: f64) -> Result<GraphLaplacian> {
    check_graph_input(s)?;
    let kernel = Bandwidth::new(eps, s.intrinsic_dim())?.scaled(2f64.sqrt())?;
    let affinity = affinity_rows(s, kernel);
    let degree = row_totals(&affinity, s.len());
    Ok(GraphLaplacian { n: s.len(), affinity, degree, beta: eps, kind: AffinityKind::Plain })
}

/// Kernel-normalized Laplacian: affinities `K_{√2η}/(q_i q_j)` with `q_i = Σ_j K_{√2η}(‖X_i − X_j‖)`.
pub fn build_reweighted_laplacian(s: &Sample, eta: f64) -> Result<GraphLaplacian> {
    check_graph_input(s)?;
    let n = s.len();
    let kernel = Bandwidth::new(eta, s.intrinsic_dim())?.scaled(2f64.sqrt())?;
    let mut affinity = affinity_rows(s, kernel);
    let q = row_totals(&affinity, n);
    affinity.par_chunks_mut(n).enumerate().for_each(|(i, row)| {
        for (j, a) in row.iter_mut().enumerate() {
            *a /= q[i] * q[j];
        }
    });
    let degree = row_totals(&affinity, n);
    Ok(GraphLaplacian { n, affinity, degree, beta: eta, kind: AffinityKind::Reweighted })
}

/// Degree proxies `q_η(X_i) = Σ_j K_{√2η}(‖X_i − X_j‖)`.
pub fn degree_proxies(s: &Sample, eta: f64) -> Result<Vec<f64>> {
    let kernel = Bandwidth::new(eta, s.intrinsic_dim())?.scaled(2f64.sqrt())?;
    Ok((0..s.len())
        .into_par_iter()
        .map(|i| crate::summation::compensated_sum((0..s.len()).map(|j| kernel.eval_sq(sq_dist(s.point(i), s.point(j))))))
        .collect())
}

/// `(f(x) − T̄_{n,√2ε}[f](x)) / ε²`.
pub fn pointwise_laplacian(s: &Sample, f: &[f64], f_at_x: f64, x: &[f64], bw: Bandwidth) -> Result<f64> {
    let smoothed = smooth_normalized(s, f, x, bw.scaled(2f64.sqrt())?)?;
    Ok((f_at_x - smoothed) / (bw.eps() * bw.eps()))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Normalization {
    Euclidean,
    WNorm,
}

/// Leading eigenpairs of a graph Laplacian, eigenvalues ascending.
#[derive(Debug, Clone, PartialEq)]
pub struct SpectralDecomposition {
    eigenvalues: Vec<f64>,
    vectors: Vec<Vec<f64>>,
    normalization: Normalization,
}

impl SpectralDecomposition {
    pub fn eigenvalues(&self) -> &[f64] {
        &self.eigenvalues
    }

    pub fn vector(&self, j: usize) -> &[f64] {
        &self.vectors[j]
    }

    pub fn len(&self) -> usize {
        self.eigenvalues.len()
    }

    pub fn is_empty(&self) -> bool {
        self.eigenvalues.is_empty()
    }

    pub fn normalization(&self) -> Normalization {
        self.normalization
    }

    /// Same decomposition with every eigenvector multiplied by `c`.
    pub fn scaled(&self, c: f64) -> Self {
        Self {
            eigenvalues: self.eigenvalues.clone(),
            vectors: self.vectors.iter().map(|v| v.iter().map(|x| c * x).collect()).collect(),
            normalization: Normalization::Euclidean,
        }
    }

    /// CSV with columns `index,eigenvalue`.
    pub fn write_eigenvalues_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "index,eigenvalue")?;
        for (j, mu) in self.eigenvalues.iter().enumerate() {
            writeln!(w, "{j},{mu}")?;
        }
        Ok(())
    }
}

/// The `count` smallest eigenpairs of `L`.
///
/// Works on the symmetric matrix `S = D^{-1/2} A D^{-1/2}`, which is similar to
/// `D⁻¹A`; an eigenvector `u` of `S` with eigenvalue `λ` gives `v = D^{-1/2}u`
/// with `Lv = ((1 − λ)/β²) v`. Vectors are scaled to unit Euclidean norm and
/// their largest-magnitude entry is made positive.
pub fn eigendecompose(l: &GraphLaplacian, count: usize) -> Result<SpectralDecomposition> {
    let n = l.n;
    if count == 0 || count > n {
        return Err(Error::InvalidArgument(format!("requested {count} eigenpairs from a {n}-point graph")));
    }
    let inv_sqrt: Vec<f64> = l.degree.iter().map(|d| 1.0 / d.sqrt()).collect();
    let s = Mat::<f64>::from_fn(n, n, |i, j| l.affinity[i * n + j] * inv_sqrt[i] * inv_sqrt[j]);
    // Sequential on purpose: faer's blocked parallel path changes rounding
    // with the thread count, and outputs must not depend on it.
    let mut lambdas_diag = Diag::<f64>::zeros(n);
    let mut u = Mat::<f64>::zeros(n, n);
    let scratch = evd::self_adjoint_evd_scratch::<f64>(n, evd::ComputeEigenvectors::Yes, Par::Seq, Default::default());
    evd::self_adjoint_evd(
        s.as_ref(),
        lambdas_diag.as_mut(),
        Some(u.as_mut()),
        Par::Seq,
        MemStack::new(&mut MemBuffer::new(scratch)),
        Default::default(),
    )
    .map_err(|e| Error::ConvergenceFailure(format!("symmetric eigensolver: {e:?}")))?;
    let lambdas = lambdas_diag.column_vector();
    let b2 = l.beta * l.beta;
    let mut eigenvalues = Vec::with_capacity(count);
    let mut vectors = Vec::with_capacity(count);
    for r in 0..count {
        let col = n - 1 - r;
        let mu = (1.0 - lambdas[col]) / b2;
        let mut v: Vec<f64> = (0..n).map(|i| u[(i, col)] * inv_sqrt[i]).collect();
        let norm = crate::linalg::norm(&v);
        let pivot = v.iter().copied().fold(0.0f64, |best, x| if x.abs() > best.abs() { x } else { best });
        let scale = pivot.signum() / norm;
        v.iter_mut().for_each(|x| *x *= scale);
        let lv = l.apply(&v);
        let residual = lv.iter().zip(&v).map(|(a, b)| (a - mu * b).powi(2)).sum::<f64>().sqrt();
        if !(residual <= RESIDUAL_TOLERANCE) {
            return Err(Error::ConvergenceFailure(format!("eigenpair {r} has residual {residual:e}")));
        }
        eigenvalues.push(mu);
        vectors.push(v);
    }
    Ok(SpectralDecomposition { eigenvalues, vectors, normalization: Normalization::Euclidean })
}

/// Volume of the Euclidean ball of radius `r` in `R^d`.
pub fn ball_volume(d: usize, r: f64) -> f64 {
    match d {
        1 => 2.0 * r,
        2 => PI * r * r,
        _ => {
            let half = d as f64 / 2.0;
            PI.powf(half) / statrs::function::gamma::gamma(half + 1.0) * r.powi(d as i32)
        }
    }
}

/// Weights `w_i = vol(B_η ⊂ R^d) / N(i)`, `N(i) = #{j : ‖X_j − X_i‖ ≤ η}` (self included).
pub fn sample_weights(s: &Sample, eta: f64) -> Result<Vec<f64>> {
    let vol = ball_volume(s.intrinsic_dim(), eta);
    let eta2 = eta * eta;
    let counts: Vec<usize> = (0..s.len())
        .into_par_iter()
        .map(|i| (0..s.len()).filter(|&j| sq_dist(s.point(i), s.point(j)) <= eta2).count())
        .collect();
    counts
        .iter()
        .enumerate()
        .map(|(i, &c)| if c == 0 { Err(Error::EmptyBall(i)) } else { Ok(vol / c as f64) })
        .collect()
}

/// Rescales every eigenvector to unit `w`-norm, `Σ_i w_i ν(i)² = 1`.
pub fn w_normalize(dec: &SpectralDecomposition, s: &Sample, eta: f64) -> Result<SpectralDecomposition> {
    if dec.vectors.first().is_some_and(|v| v.len() != s.len()) {
        return Err(Error::DimensionMismatch { expected: s.len(), got: dec.vectors[0].len() });
    }
    let w = sample_weights(s, eta)?;
    let vectors = dec
        .vectors
        .iter()
        .map(|v| {
            let norm2 = crate::summation::compensated_sum(v.iter().zip(&w).map(|(x, wi)| wi * x * x));
            let inv = 1.0 / norm2.sqrt();
            v.iter().map(|x| x * inv).collect()
        })
        .collect();
    Ok(SpectralDecomposition { eigenvalues: dec.eigenvalues.clone(), vectors, normalization: Normalization::WNorm })
}

/// `Ĥ_τ(X_i) = Σ_{j<N} e^{−τ μ_j} ν_j(i)²`.
///
/// Eigenvalues that are negative only through rounding are treated as zero.
pub fn hks_at_samples(dec: &SpectralDecomposition, tau: f64, count: usize) -> Result<Vec<f64>> {
    if !(tau.is_finite() && tau > 0.0) {
        return Err(Error::InvalidArgument(format!("diffusion time must be positive, got {tau}")));
    }
    if count == 0 || count > dec.len() {
        return Err(Error::InvalidArgument(format!("requested {count} of {} eigenpairs", dec.len())));
    }
    let n = dec.vectors[0].len();
    let decay: Vec<f64> = dec.eigenvalues[..count].iter().map(|mu| (-tau * mu.max(0.0)).exp()).collect();
    Ok((0..n)
        .map(|i| {
            let mut acc = 0.0;
            for (j, dj) in decay.iter().enumerate() {
                let v = dec.vectors[j][i];
                acc += dj * v * v;
            }
            acc
        })
        .collect())
}

/// Extends sample HKS values to any point by normalized kernel smoothing.
pub fn hks_extend(s: &Sample, hks_values: &[f64], x: &[f64], eps: f64) -> Result<f64> {
    smooth_normalized(s, hks_values, x, Bandwidth::new(eps, s.intrinsic_dim())?)
}

/// CSV with columns `index,hks`.
pub fn write_hks_csv<W: Write>(values: &[f64], mut w: W) -> std::io::Result<()> {
    writeln!(w, "index,hks")?;
    for (i, h) in values.iter().enumerate() {
        writeln!(w, "{i},{h}")?;
    }
    Ok(())
}

/// Heat kernel diagonal on the circle of radius `R`:
/// `1/(2πR) + (1/(πR)) Σ_{k≥1} e^{−k²τ/R²}`, stopped once a term drops below `tol`.
pub fn true_hks_circle(radius: f64, tau: f64, tol: f64) -> Result<f64> {
    if !(radius > 0.0 && tau > 0.0 && tol > 0.0) {
        return Err(Error::InvalidArgument("radius, time and tolerance must be positive".into()));
    }
    let mut total = 1.0 / (2.0 * PI * radius);
    let mut k = 1.0f64;
    loop {
        let term = (-k * k * tau / (radius * radius)).exp() / (PI * radius);
        if term < tol {
            break;
        }
        total += term;
        k += 1.0;
    }
    Ok(total)
}

/// Advisory when `(log n / n)^{1/(4d+13)}` exceeds `η`, i.e. the sample is
/// too small for the bandwidth by the spectral-convergence guidance.
pub fn bandwidth_advisory(n: usize, d: usize, eta: f64) -> Option<String> {
    let nf = n as f64;
    let bound = (nf.ln() / nf).powf(1.0 / (4.0 * d as f64 + 13.0));
    (bound > eta).then(|| format!("(log n / n)^(1/(4d+13)) = {bound:.4} exceeds eta = {eta}; spectral estimates may be unreliable"))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::Manifold;
    use crate::sampling::sample_uniform;

    fn two_point_sample() -> Sample {
        let c = Manifold::circle(1.0).unwrap();
        Sample::from_points(c, &[c.embed(&[0.0]), c.embed(&[0.5])]).unwrap()
    }

    #[test]
    fn two_point_laplacian_by_hand() {
        let s = two_point_sample();
        let eps = 0.4;
        let l = build_rw_laplacian(&s, eps).unwrap();
        let k = Bandwidth::new(eps * 2f64.sqrt(), 1).unwrap();
        let a = k.eval_sq(0.0);
        let b = k.eval_sq(sq_dist(s.point(0), s.point(1)));
        let off = -(b / (a + b)) / (eps * eps);
        assert!((l.entry(0, 1) - off).abs() < 1e-12);
        assert!((l.entry(0, 0) + off).abs() < 1e-12);
        assert!(l.row_sums().iter().all(|r| r.abs() < 1e-10));
    }

    #[test]
    fn laplacian_matches_pointwise_estimator() {
        let c = Manifold::circle(1.0).unwrap();
        let s = sample_uniform(&c, 200, 4).unwrap();
        let f: Vec<f64> = (0..s.len()).map(|i| s.point(i)[0]).collect();
        let eps = 0.2;
        let l = build_rw_laplacian(&s, eps).unwrap();
        let lf = l.apply(&f);
        let bw = Bandwidth::new(eps, 1).unwrap();
        for i in (0..s.len()).step_by(17) {
            let direct = pointwise_laplacian(&s, &f, f[i], s.point(i), bw).unwrap();
            assert!((lf[i] - direct).abs() < 1e-12, "{i}: {} vs {direct}", lf[i]);
        }
    }

    #[test]
    fn reweighted_laplacian_invariants() {
        let c = Manifold::circle(1.0).unwrap();
        let s = sample_uniform(&c, 150, 2).unwrap();
        let l = build_reweighted_laplacian(&s, 0.3).unwrap();
        assert!(l.row_sums().iter().all(|r| r.abs() < 1e-10));
        for i in 0..20 {
            for j in 0..20 {
                assert!((l.affinity(i, j) - l.affinity(j, i)).abs() <= 1e-12 * l.affinity(i, j));
            }
        }
        assert!(build_reweighted_laplacian(&Sample::from_points(c, &[vec![1.0, 0.0]]).unwrap(), 0.3).is_err());
    }

    #[test]
    fn spectrum_is_nonnegative_with_constant_ground_state() {
        let c = Manifold::circle(1.0).unwrap();
        let s = sample_uniform(&c, 300, 8).unwrap();
        let l = build_reweighted_laplacian(&s, 0.2).unwrap();
        let dec = eigendecompose(&l, 5).unwrap();
        assert!(dec.eigenvalues()[0].abs() <= 1e-8);
        assert!(dec.eigenvalues().windows(2).all(|w| w[0] <= w[1]));
        let v0 = dec.vector(0);
        let mean = v0.iter().sum::<f64>() / v0.len() as f64;
        assert!(mean > 0.0);
        assert!(v0.iter().all(|x| (x - mean).abs() <= 1e-6 * mean));
        let w = w_normalize(&dec, &s, 0.2).unwrap();
        let weights = sample_weights(&s, 0.2).unwrap();
        for j in 0..w.len() {
            let norm: f64 = w.vector(j).iter().zip(&weights).map(|(v, wi)| wi * v * v).sum();
            assert!((norm - 1.0).abs() < 1e-12);
        }
        let again = w_normalize(&dec.scaled(-4.0), &s, 0.2).unwrap();
        for j in 0..w.len() {
            let flipped: Vec<f64> = again.vector(j).iter().map(|x| -x).collect();
            assert_eq!(flipped, w.vector(j));
        }
    }

    #[test]
    fn hks_monotonicity() {
        let c = Manifold::circle(1.0).unwrap();
        let s = sample_uniform(&c, 200, 3).unwrap();
        let l = build_reweighted_laplacian(&s, 0.25).unwrap();
        let dec = w_normalize(&eigendecompose(&l, 8).unwrap(), &s, 0.25).unwrap();
        let a = hks_at_samples(&dec, 0.5, 8).unwrap();
        let b = hks_at_samples(&dec, 1.0, 8).unwrap();
        let c4 = hks_at_samples(&dec, 0.5, 4).unwrap();
        let one = hks_at_samples(&dec, 0.5, 1).unwrap();
        for i in 0..s.len() {
            assert!(b[i] <= a[i] && c4[i] <= a[i]);
            assert!((one[i] - dec.vector(0)[i].powi(2)).abs() < 1e-15);
        }
        assert!(hks_at_samples(&dec, 0.0, 2).is_err());
        assert!(hks_at_samples(&dec, 1.0, 9).is_err());
    }

    #[test]
    fn circle_heat_kernel_diagonal() {
        let late = true_hks_circle(1.0, 100.0, 1e-15).unwrap();
        assert!((late - 1.0 / (2.0 * PI)).abs() < 1e-15);
        assert!(true_hks_circle(1.0, 0.5, 1e-15).unwrap() > true_hks_circle(1.0, 1.0, 1e-15).unwrap());
        // image sum of the line heat kernel: Σ_m (4πτ)^{-1/2} e^{−(2πm)²/(4τ)}
        let tau: f64 = 0.5;
        let images: f64 = (-10_000i64..=10_000)
            .map(|m| (-(2.0 * PI * m as f64).powi(2) / (4.0 * tau)).exp() / (4.0 * PI * tau).sqrt())
            .sum();
        assert!((true_hks_circle(1.0, tau, 1e-17).unwrap() - images).abs() < 1e-10);
    }

    #[test]
    fn advisory_triggers_for_small_bandwidth() {
        assert!(bandwidth_advisory(1000, 1, 0.01).is_some());
        assert!(bandwidth_advisory(1000, 1, 0.9).is_none());
    }
}
