//! Differential geometry of the built-in embedded manifolds.
//!
//! Two manifolds are provided: a circle of radius `R` in R² and a torus of
//! revolution in R³ with major radius `R` and minor radius `r`,
//!
//! ```text
//! circle: θ ↦ (R cos θ, R sin θ)
//! torus:  (θ₁, θ₂) ↦ ((R + r cos θ₂) cos θ₁, (R + r cos θ₂) sin θ₁, r sin θ₂)
//! ```
//!
//! Tangent frames are the normalized coordinate vectors of these charts, so
//! they vary smoothly along chart paths. Densities may be given with respect to
//! the chart angles; [`Density`] converts them to densities with respect to the
//! Riemannian volume measure, which is what every limit formula expects.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{dot, norm, Matrix};
use crate::quadrature::periodic_nodes;

/// Absolute tolerance of the on-manifold check.
pub const ON_MANIFOLD_TOL: f64 = 1e-9;

const TWO_PI: f64 = 2.0 * PI;

/// Geometry needed by the estimators: dimensions, frames and curvature.
///
/// Implementations only have to provide the second fundamental form if they
/// want Hessian estimates.
pub trait EmbeddedManifold {
    fn intrinsic_dim(&self) -> usize;

    fn ambient_dim(&self) -> usize;

    /// Distance-like residual of the defining equation; zero on the manifold.
    fn residual(&self, x: &[f64]) -> f64;

    fn tangent_frame(&self, x: &[f64]) -> Result<TangentFrame>;

    fn second_fundamental_form(&self, _x: &[f64]) -> Result<SecondFundamentalForm> {
        Err(Error::UnsupportedManifold("second fundamental form"))
    }

    fn check_on_manifold(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.ambient_dim() {
            return Err(Error::DimensionMismatch { expected: self.ambient_dim(), got: x.len() });
        }
        let residual = self.residual(x);
        if residual.is_finite() && residual <= ON_MANIFOLD_TOL {
            Ok(())
        } else {
            Err(Error::OffManifold { residual })
        }
    }
}

/// Built-in manifold with a global periodic chart.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Manifold {
    Circle { radius: f64 },
    Torus { major: f64, minor: f64 },
}

/// Chart angles, each reduced to `[0, 2π)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChartCoord(Vec<f64>);

impl ChartCoord {
    pub fn new(angles: impl Into<Vec<f64>>) -> Self {
        Self(angles.into().into_iter().map(reduce_angle).collect())
    }

    pub fn angles(&self) -> &[f64] {
        &self.0
    }
}

/// Reduces an angle to `[0, 2π)`.
pub fn reduce_angle(theta: f64) -> f64 {
    let t = theta.rem_euclid(TWO_PI);
    if t >= TWO_PI {
        0.0
    } else {
        t
    }
}

/// Orthonormal tangent basis at a point, stored column by column.
#[derive(Debug, Clone, PartialEq)]
pub struct TangentFrame {
    columns: Vec<Vec<f64>>,
}

impl TangentFrame {
    pub fn from_columns(columns: Vec<Vec<f64>>) -> Self {
        Self { columns }
    }

    pub fn intrinsic_dim(&self) -> usize {
        self.columns.len()
    }

    pub fn ambient_dim(&self) -> usize {
        self.columns.first().map_or(0, Vec::len)
    }

    pub fn column(&self, k: usize) -> &[f64] {
        &self.columns[k]
    }

    /// `Jᵀ v`.
    pub fn to_tangent(&self, v: &[f64]) -> Vec<f64> {
        self.columns.iter().map(|c| dot(c, v)).collect()
    }

    /// `J c`.
    pub fn to_ambient(&self, coeffs: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.ambient_dim()];
        for (c, col) in coeffs.iter().zip(&self.columns) {
            for (o, v) in out.iter_mut().zip(col) {
                *o += c * v;
            }
        }
        out
    }

    /// `J` as a D×d matrix.
    pub fn matrix(&self) -> Matrix {
        Matrix::from_fn(self.ambient_dim(), self.intrinsic_dim(), |i, j| self.columns[j][i])
    }

    /// `JᵀJ`, the identity for a valid frame.
    pub fn gram(&self) -> Matrix {
        let d = self.intrinsic_dim();
        Matrix::from_fn(d, d, |i, j| dot(&self.columns[i], &self.columns[j]))
    }
}

/// Second fundamental form `b_ij = II(e_i, e_j)` in the tangent frame.
#[derive(Debug, Clone, PartialEq)]
pub struct SecondFundamentalForm {
    dim: usize,
    entries: Vec<Vec<f64>>,
}

impl SecondFundamentalForm {
    /// `entries[i * d + j]` holds `b_ij`; symmetry is enforced by copying the upper triangle.
    pub fn from_entries(dim: usize, mut entries: Vec<Vec<f64>>) -> Self {
        assert_eq!(entries.len(), dim * dim);
        for i in 0..dim {
            for j in 0..i {
                entries[i * dim + j] = entries[j * dim + i].clone();
            }
        }
        Self { dim, entries }
    }

    pub fn intrinsic_dim(&self) -> usize {
        self.dim
    }

    pub fn get(&self, i: usize, j: usize) -> &[f64] {
        &self.entries[i * self.dim + j]
    }

    /// The d×d matrix `⟨b_ij, v⟩`, i.e. `Σ_ℓ v_ℓ B_ℓ`.
    pub fn contract(&self, v: &[f64]) -> Matrix {
        Matrix::from_fn(self.dim, self.dim, |i, j| dot(self.get(i, j), v))
    }

    /// `II(z, z)`.
    pub fn apply(&self, z: &[f64]) -> Vec<f64> {
        let dd = self.get(0, 0).len();
        let mut out = vec![0.0; dd];
        for i in 0..self.dim {
            for j in 0..self.dim {
                for (o, b) in out.iter_mut().zip(self.get(i, j)) {
                    *o += z[i] * z[j] * b;
                }
            }
        }
        out
    }
}

impl Manifold {
    pub fn circle(radius: f64) -> Result<Self> {
        if !(radius.is_finite() && radius > 0.0) {
            return Err(Error::InvalidArgument(format!("circle radius must be positive, got {radius}")));
        }
        Ok(Manifold::Circle { radius })
    }

    pub fn torus(major: f64, minor: f64) -> Result<Self> {
        if !(major.is_finite() && minor.is_finite() && minor > 0.0 && major > minor) {
            return Err(Error::InvalidArgument(format!(
                "torus needs R > r > 0, got R = {major}, r = {minor}"
            )));
        }
        Ok(Manifold::Torus { major, minor })
    }

    /// Re-checks the constructor invariants (useful after deserialization).
    pub fn validate(&self) -> Result<()> {
        match *self {
            Manifold::Circle { radius } => Manifold::circle(radius).map(|_| ()),
            Manifold::Torus { major, minor } => Manifold::torus(major, minor).map(|_| ()),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Manifold::Circle { .. } => "circle",
            Manifold::Torus { .. } => "torus",
        }
    }

    /// Chart map θ ↦ x.
    pub fn embed(&self, theta: &[f64]) -> Vec<f64> {
        match *self {
            Manifold::Circle { radius } => vec![radius * theta[0].cos(), radius * theta[0].sin()],
            Manifold::Torus { major, minor } => {
                let (s1, c1) = theta[0].sin_cos();
                let (s2, c2) = theta[1].sin_cos();
                let w = major + minor * c2;
                vec![w * c1, w * s1, minor * s2]
            }
        }
    }

    /// Inverse chart; angles are reduced to `[0, 2π)`.
    pub fn chart(&self, x: &[f64]) -> Result<ChartCoord> {
        self.check_on_manifold(x)?;
        Ok(match *self {
            Manifold::Circle { .. } => ChartCoord::new(vec![x[1].atan2(x[0])]),
            Manifold::Torus { major, .. } => {
                let w = x[0].hypot(x[1]);
                ChartCoord::new(vec![x[1].atan2(x[0]), x[2].atan2(w - major)])
            }
        })
    }

    /// Density of the Riemannian volume with respect to dθ.
    pub fn volume_form(&self, theta: &[f64]) -> f64 {
        match *self {
            Manifold::Circle { radius } => radius,
            Manifold::Torus { major, minor } => minor * (major + minor * theta[1].cos()),
        }
    }

    pub fn volume(&self) -> f64 {
        match *self {
            Manifold::Circle { radius } => TWO_PI * radius,
            Manifold::Torus { major, minor } => TWO_PI * TWO_PI * major * minor,
        }
    }

    /// Bound on tangent step lengths accepted by [`Manifold::exp_map`].
    ///
    /// Circle: half the circumference. Torus: half the length of the shortest
    /// closed geodesic, `π·min(r, R − r)`.
    pub fn injectivity_bound(&self) -> f64 {
        match *self {
            Manifold::Circle { radius } => PI * radius,
            Manifold::Torus { major, minor } => PI * minor.min(major - minor),
        }
    }

    /// Reach of the embedding (largest tubular neighbourhood radius).
    pub fn reach(&self) -> f64 {
        match *self {
            Manifold::Circle { radius } => radius,
            Manifold::Torus { major, minor } => minor.min(major - minor),
        }
    }

    /// Largest length of a unit chart step along each axis, `max |∂θ_k X|`.
    pub fn max_axis_scale(&self) -> Vec<f64> {
        match *self {
            Manifold::Circle { radius } => vec![radius],
            Manifold::Torus { major, minor } => vec![major + minor, minor],
        }
    }

    /// Smallest length of a unit chart step along each axis, `min |∂θ_k X|`.
    pub fn min_axis_scale(&self) -> Vec<f64> {
        match *self {
            Manifold::Circle { radius } => vec![radius],
            Manifold::Torus { major, minor } => vec![major - minor, minor],
        }
    }

    /// Exponential map `Exp_x(Σ v_k e_k)` in the tangent frame at `x`.
    ///
    /// Closed form on the circle and along meridians or the two equators of the
    /// torus; otherwise the geodesic equations are integrated with RK4 in the chart.
    pub fn exp_map(&self, x: &[f64], v: &[f64]) -> Result<Vec<f64>> {
        self.check_on_manifold(x)?;
        if v.len() != self.intrinsic_dim() {
            return Err(Error::DimensionMismatch { expected: self.intrinsic_dim(), got: v.len() });
        }
        let len = norm(v);
        let bound = self.injectivity_bound();
        if len > bound {
            return Err(Error::StepTooLarge { norm: len, bound });
        }
        let theta = self.chart(x)?;
        let theta = theta.angles();
        match *self {
            Manifold::Circle { radius } => Ok(self.embed(&[theta[0] + v[0] / radius])),
            Manifold::Torus { major, minor } => {
                if v[0] == 0.0 {
                    return Ok(self.embed(&[theta[0], theta[1] + v[1] / minor]));
                }
                let on_equator = theta[1].sin().abs() < 1e-15;
                if v[1] == 0.0 && on_equator {
                    let w = major + minor * theta[1].cos();
                    return Ok(self.embed(&[theta[0] + v[0] / w, theta[1]]));
                }
                Ok(self.embed(&torus_geodesic(major, minor, theta, v)))
            }
        }
    }

    fn circle_frame(theta: f64) -> TangentFrame {
        let (s, c) = theta.sin_cos();
        TangentFrame::from_columns(vec![vec![-s, c]])
    }

    fn torus_frame(theta: &[f64]) -> TangentFrame {
        let (s1, c1) = theta[0].sin_cos();
        let (s2, c2) = theta[1].sin_cos();
        TangentFrame::from_columns(vec![vec![-s1, c1, 0.0], vec![-s2 * c1, -s2 * s1, c2]])
    }
}

/// RK4 on the torus geodesic equations
/// `θ₁'' = 2 r sin θ₂ θ₁'θ₂' / w`, `θ₂'' = −w sin θ₂ θ₁'² / r`, `w = R + r cos θ₂`.
fn torus_geodesic(major: f64, minor: f64, theta: &[f64], v: &[f64]) -> Vec<f64> {
    let w0 = major + minor * theta[1].cos();
    let mut state = [theta[0], theta[1], v[0] / w0, v[1] / minor];
    let rhs = |s: [f64; 4]| -> [f64; 4] {
        let (sn, cs) = s[1].sin_cos();
        let w = major + minor * cs;
        [s[2], s[3], 2.0 * minor * sn * s[2] * s[3] / w, -w * sn * s[2] * s[2] / minor]
    };
    let steps = 4096;
    let h = 1.0 / steps as f64;
    for _ in 0..steps {
        let k1 = rhs(state);
        let k2 = rhs(axpy(state, 0.5 * h, k1));
        let k3 = rhs(axpy(state, 0.5 * h, k2));
        let k4 = rhs(axpy(state, h, k3));
        for i in 0..4 {
            state[i] += h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
        }
    }
    vec![state[0], state[1]]
}

fn axpy(s: [f64; 4], a: f64, k: [f64; 4]) -> [f64; 4] {
    [s[0] + a * k[0], s[1] + a * k[1], s[2] + a * k[2], s[3] + a * k[3]]
}

impl EmbeddedManifold for Manifold {
    fn intrinsic_dim(&self) -> usize {
        match self {
            Manifold::Circle { .. } => 1,
            Manifold::Torus { .. } => 2,
        }
    }

    fn ambient_dim(&self) -> usize {
        match self {
            Manifold::Circle { .. } => 2,
            Manifold::Torus { .. } => 3,
        }
    }

    fn residual(&self, x: &[f64]) -> f64 {
        match *self {
            Manifold::Circle { radius } => (x[0].hypot(x[1]) - radius).abs(),
            Manifold::Torus { major, minor } => {
                let w = x[0].hypot(x[1]) - major;
                (w * w + x[2] * x[2] - minor * minor).abs()
            }
        }
    }

    fn tangent_frame(&self, x: &[f64]) -> Result<TangentFrame> {
        let theta = self.chart(x)?;
        Ok(match self {
            Manifold::Circle { .. } => Manifold::circle_frame(theta.angles()[0]),
            Manifold::Torus { .. } => Manifold::torus_frame(theta.angles()),
        })
    }

    fn second_fundamental_form(&self, x: &[f64]) -> Result<SecondFundamentalForm> {
        let theta = self.chart(x)?;
        let theta = theta.angles();
        Ok(match *self {
            Manifold::Circle { radius } => {
                let (s, c) = theta[0].sin_cos();
                SecondFundamentalForm::from_entries(1, vec![vec![-c / radius, -s / radius]])
            }
            Manifold::Torus { major, minor } => {
                let (s1, c1) = theta[0].sin_cos();
                let (s2, c2) = theta[1].sin_cos();
                let normal = [c2 * c1, c2 * s1, s2];
                let k1 = -c2 / (major + minor * c2);
                let k2 = -1.0 / minor;
                SecondFundamentalForm::from_entries(
                    2,
                    vec![
                        normal.iter().map(|n| k1 * n).collect(),
                        vec![0.0; 3],
                        vec![0.0; 3],
                        normal.iter().map(|n| k2 * n).collect(),
                    ],
                )
            }
        })
    }
}

/// Sampling distribution on a manifold.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum DensitySpec {
    /// Uniform with respect to the volume measure.
    Uniform,
    /// Bivariate von Mises sine model imposed on the torus angles (w.r.t. dθ₁dθ₂).
    VonMisesSine { mu1: f64, mu2: f64, kappa1: f64, kappa2: f64, kappa3: f64 },
}

impl DensitySpec {
    /// Unnormalized log density w.r.t. dθ of the sine model.
    pub(crate) fn sine_log_kernel(mu1: f64, mu2: f64, k1: f64, k2: f64, k3: f64, theta: &[f64]) -> f64 {
        let a = theta[0] - mu1;
        let b = theta[1] - mu2;
        k1 * a.cos() + k2 * b.cos() + k3 * a.sin() * b.sin()
    }
}

/// Grid size per axis of the chart quadrature for the sine-model normalizer.
pub const NORMALIZER_GRID: usize = 256;

/// A density on a built-in manifold with its normalizer precomputed.
#[derive(Debug, Clone, PartialEq)]
pub struct Density {
    manifold: Manifold,
    spec: DensitySpec,
    /// Normalizer of the angle density (`Z`), or the volume for the uniform law.
    normalizer: f64,
}

impl Density {
    pub fn new(manifold: Manifold, spec: DensitySpec) -> Result<Self> {
        manifold.validate()?;
        let normalizer = match spec {
            DensitySpec::Uniform => manifold.volume(),
            DensitySpec::VonMisesSine { mu1, mu2, kappa1, kappa2, kappa3 } => {
                if !matches!(manifold, Manifold::Torus { .. }) {
                    return Err(Error::UnsupportedManifold("von Mises sine model needs the torus"));
                }
                for (name, v) in [("mu1", mu1), ("mu2", mu2), ("kappa1", kappa1), ("kappa2", kappa2), ("kappa3", kappa3)] {
                    crate::error::ensure_finite(name, v)?;
                }
                let nodes = periodic_nodes(NORMALIZER_GRID);
                let h = TWO_PI / NORMALIZER_GRID as f64;
                let mut acc = crate::summation::CompensatedSum::new();
                for &t1 in &nodes {
                    for &t2 in &nodes {
                        acc.add(DensitySpec::sine_log_kernel(mu1, mu2, kappa1, kappa2, kappa3, &[t1, t2]).exp());
                    }
                }
                acc.value() * h * h
            }
        };
        Ok(Self { manifold, spec, normalizer })
    }

    pub fn manifold(&self) -> &Manifold {
        &self.manifold
    }

    pub fn spec(&self) -> &DensitySpec {
        &self.spec
    }

    /// `Z` of the angle density (the volume for the uniform law).
    pub fn normalizer(&self) -> f64 {
        self.normalizer
    }

    /// Density with respect to dθ (integrates to one over the chart square).
    pub fn chart_density(&self, theta: &[f64]) -> f64 {
        match self.spec {
            DensitySpec::Uniform => self.manifold.volume_form(theta) / self.normalizer,
            DensitySpec::VonMisesSine { mu1, mu2, kappa1, kappa2, kappa3 } => {
                DensitySpec::sine_log_kernel(mu1, mu2, kappa1, kappa2, kappa3, theta).exp() / self.normalizer
            }
        }
    }

    /// Density with respect to the volume measure at chart point `theta`.
    pub fn at_chart(&self, theta: &[f64]) -> f64 {
        match self.spec {
            DensitySpec::Uniform => 1.0 / self.normalizer,
            DensitySpec::VonMisesSine { .. } => self.chart_density(theta) / self.manifold.volume_form(theta),
        }
    }

    /// Density with respect to the volume measure at an ambient point.
    pub fn at(&self, x: &[f64]) -> Result<f64> {
        let theta = self.manifold.chart(x)?;
        Ok(self.at_chart(theta.angles()))
    }

    /// Riemannian gradient of the volume density, in the tangent frame at `x`.
    pub fn tangent_gradient(&self, x: &[f64]) -> Result<Vec<f64>> {
        let theta = self.manifold.chart(x)?;
        let theta = theta.angles();
        Ok(match (self.spec, self.manifold) {
            (DensitySpec::Uniform, m) => vec![0.0; m.intrinsic_dim()],
            (DensitySpec::VonMisesSine { mu1, mu2, kappa1, kappa2, kappa3 }, Manifold::Torus { major, minor }) => {
                let rho = self.at_chart(theta);
                let (sa, ca) = (theta[0] - mu1).sin_cos();
                let (sb, cb) = (theta[1] - mu2).sin_cos();
                let (s2, c2) = theta[1].sin_cos();
                let w = major + minor * c2;
                let dlog1 = -kappa1 * sa + kappa3 * ca * sb;
                let dlog2 = -kappa2 * sb + kappa3 * sa * cb + minor * s2 / w;
                vec![rho * dlog1 / w, rho * dlog2 / minor]
            }
            (DensitySpec::VonMisesSine { .. }, Manifold::Circle { .. }) => {
                return Err(Error::UnsupportedManifold("von Mises sine model needs the torus"))
            }
        })
    }
}

/// Density with respect to the volume measure; builds the normalizer on every call.
pub fn density_vol(manifold: &Manifold, spec: DensitySpec, x: &[f64]) -> Result<f64> {
    Density::new(*manifold, spec)?.at(x)
}
