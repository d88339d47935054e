//! Analytic-prior diffusion solvers for linear inverse problems.
//!
//! Noise schedules are derived from covariance tolerance bounds, the
//! sampler runs in a scale-invariant unit-gradient form, and an NNLS oracle
//! against the ground truth provides reference step weights.

// `!(x > 0.0)` is used on purpose: it rejects NaN along with the bad range.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod config;
pub mod error;
pub mod experiment;
pub mod fft;
pub mod io;
pub mod linops;
pub mod metrics;
pub mod optimal;
pub mod phantom;
pub mod priors;
pub mod rng;
pub mod sampler;
pub mod schedule;
pub mod spectral;
pub mod synthetic;
pub mod tuning;
pub mod vecops;
pub mod verify;

pub use config::ExperimentConfig;
pub use error::{Error, Result};
pub use linops::{InverseProblem, LinearOperator, MaskKind, SamplingMask};
pub use optimal::{OptimalWeights, PolyCoeffs, Preconditioner, UpdateBasis};
pub use priors::{AnalyticPrior, GaussianPrior, GmmPrior, Prior};
pub use sampler::{DescentInterval, LambdaMode, SamplerConfig, StepRecord};
pub use schedule::{CovMatrix, NoiseSchedule, ToleranceParams};
pub use spectral::{Image, RadialPSD, Spectrum2D};
