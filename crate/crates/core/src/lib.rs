//! Kernel smoothing of functions and their derivatives on embedded manifolds.

pub mod asymptotics;
pub mod derivatives;
pub mod error;
pub mod functions;
pub mod geometry;
pub mod harness;
pub mod kernels;
pub mod linalg;
pub mod quadrature;
pub mod sampling;
pub mod smoothing;
pub mod spectral;
pub mod summation;

pub use error::{Error, Result};
pub use geometry::{ChartCoord, Density, DensitySpec, EmbeddedManifold, Manifold};
pub use kernels::{kernel_eval, kernel_moment, Bandwidth, Moment, MomentValue};
pub use sampling::{attach_regression, derive_seed, sample_uniform, sample_vonmises_sine, RegressionSpec, Sample};
