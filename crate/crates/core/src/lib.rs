//! Spherical statistics of the half-space functional `F_μ(θ) = Σ wᵢ (xᵢ·θ)₊`
//! for discrete measures μ on ℝⁿ: closed-form sphere kernels, exact pair
//! sums, Monte Carlo with reproducible seeds, L^p-isotropic positioning and
//! finite-difference spherical calculus, plus the batch runner behind the
//! `conclab` binary.

pub mod calculus;
pub mod functional;
pub mod lab;
pub mod linalg;
pub mod measure;
pub mod position;
pub mod reduce;
pub mod rng;
pub mod special;
pub mod sphere_kernel;

pub use functional::{FStats, FunctionalError, McEstimate, StatsMethod};
pub use lab::{ExperimentSpec, LabError, RunReport, Scenario};
pub use measure::{DiscreteMeasure, MeasureError, MomentReport};
pub use position::{PositionError, PositionOptions, PositionResult};
pub use rng::SeedStream;
pub use sphere_kernel::{Correlation, KernelError};

/// Any error raised by the crate.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error(transparent)]
    Measure(#[from] MeasureError),
    #[error(transparent)]
    Functional(#[from] FunctionalError),
    #[error(transparent)]
    Position(#[from] PositionError),
    #[error(transparent)]
    Kernel(#[from] KernelError),
    #[error(transparent)]
    Lab(#[from] LabError),
}
