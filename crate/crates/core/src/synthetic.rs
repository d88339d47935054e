//! Synthetic benchmarks: analytic priors, ground truth drawn from them, and
//! forward operators for the supported tasks.

use std::sync::Arc;

use rand::Rng as _;

use crate::error::{Error, Result};
use crate::fft::{normalized_radius, Fft2d};
use crate::linops::{self, simulate_measurement, InverseProblem, LinearOperator, MaskKind};
use crate::phantom::{self, PhantomKind};
use crate::priors::{GaussianPrior, GmmPrior, Prior};
use crate::rng;
use crate::spectral::{self, Image, RadialPSD};

/// Forward model of an experiment.
#[derive(Debug, Clone, PartialEq)]
pub enum Task {
    Mri {
        kind: MaskKind,
        acceleration: f64,
        calib: usize,
    },
    Deblur {
        kernel_size: usize,
        kernel_var: f64,
    },
    SuperRes {
        factor: usize,
    },
    /// Centered square hole of the given side length.
    Inpaint {
        hole: usize,
    },
}

impl Task {
    pub fn name(&self) -> &'static str {
        match self {
            Task::Mri { .. } => "mri",
            Task::Deblur { .. } => "deblur",
            Task::SuperRes { .. } => "sr",
            Task::Inpaint { .. } => "inpaint",
        }
    }

    /// Radius below which the measurement determines the image well; the
    /// start bound is evaluated on the PSD above it.
    pub fn default_lf_cutoff(&self, height: usize) -> f64 {
        match self {
            Task::Mri { calib, .. } => *calib as f64 / (2.0 * height as f64),
            // Half-amplitude frequency of a 3-wide box, scaled to the kernel width.
            Task::Deblur { kernel_size, .. } => {
                0.25f64.acos() / (2.0 * std::f64::consts::PI) * 3.0 / *kernel_size as f64
            }
            Task::SuperRes { factor } => 1.0 / (2.0 * *factor as f64),
            Task::Inpaint { .. } => 0.0,
        }
    }

    /// The operator; random masks draw from `seed`.
    pub fn operator(&self, height: usize, width: usize, seed: u64) -> Result<Arc<dyn LinearOperator>> {
        Ok(match self {
            Task::Mri {
                kind,
                acceleration,
                calib,
            } => {
                let mask = linops::make_mask(*kind, height, *acceleration, *calib, seed)?;
                Arc::new(linops::subsampled_dft(&mask, width)?)
            }
            Task::Deblur {
                kernel_size,
                kernel_var,
            } => Arc::new(linops::gaussian_blur(height, width, *kernel_size, *kernel_var)?),
            Task::SuperRes { factor } => Arc::new(linops::decimate(height, width, *factor)?),
            Task::Inpaint { hole } => {
                if *hole > height.min(width) {
                    return Err(Error::param("hole", "larger than the image"));
                }
                let (r0, c0) = ((height - hole) / 2, (width - hole) / 2);
                let region: Vec<usize> = (r0..r0 + hole)
                    .flat_map(|r| (c0..c0 + hole).map(move |c| r * width + c))
                    .collect();
                Arc::new(linops::inpaint(height * width, &region)?)
            }
        })
    }
}

/// Mixture whose component means are phantoms and whose per-component
/// variance is a white floor `σ_s²`.
pub fn phantom_gmm(
    kind: PhantomKind,
    height: usize,
    width: usize,
    components: usize,
    variance: f64,
    seed: u64,
) -> Result<GmmPrior> {
    if components == 0 {
        return Err(Error::param("components", "must be at least 1"));
    }
    let means = (0..components)
        .map(|k| phantom::generate(kind, height, width, rng::substream(seed, k as u64).random()).map(Image::into_vec))
        .collect::<Result<Vec<_>>>()?;
    GmmPrior::uniform(means, variance)
}

/// `count` exact draws from a mixture.
pub fn sample_gmm(prior: &GmmPrior, count: usize, seed: u64) -> Vec<Vec<f64>> {
    let mut r = rng::seeded(seed);
    let cum: Vec<f64> = prior
        .weights()
        .iter()
        .scan(0.0, |acc, w| {
            *acc += w;
            Some(*acc)
        })
        .collect();
    (0..count)
        .map(|_| {
            let u: f64 = r.random();
            let k = cum.iter().position(|c| u < *c).unwrap_or(cum.len() - 1);
            let z = rng::standard_normals(&mut r, prior.dim());
            let s = prior.variances()[k].sqrt();
            prior.means()[k].iter().zip(&z).map(|(m, e)| m + s * e).collect()
        })
        .collect()
}

/// Power-law DFT eigenvalues `amplitude · (r + r0)^(−exponent) + floor`.
pub fn power_law_eigenvalues(
    height: usize,
    width: usize,
    amplitude: f64,
    exponent: f64,
    r0: f64,
    floor: f64,
) -> Vec<f64> {
    let mut out = Vec::with_capacity(height * width);
    for u in 0..height {
        for v in 0..width {
            out.push(amplitude * (normalized_radius(u, v, height, width) + r0).powf(-exponent) + floor);
        }
    }
    out
}

/// Stationary Gaussian prior with the given DFT eigenvalues and constant mean.
pub fn wss_gaussian(height: usize, width: usize, mean: f64, eigenvalues: Vec<f64>) -> Result<GaussianPrior> {
    GaussianPrior::dft(vec![mean; height * width], height, width, eigenvalues)
}

/// Exact draws from a stationary Gaussian: mean plus white noise filtered by `√λ`.
pub fn sample_wss(
    height: usize,
    width: usize,
    mean: f64,
    eigenvalues: &[f64],
    count: usize,
    seed: u64,
) -> Vec<Vec<f64>> {
    let fft = Fft2d::new(height, width);
    let amp: Vec<f64> = eigenvalues.iter().map(|v| v.sqrt()).collect();
    let mut r = rng::seeded(seed);
    (0..count)
        .map(|_| {
            let z = rng::standard_normals(&mut r, height * width);
            fft.filter_real(&z, &amp).into_iter().map(|v| v + mean).collect()
        })
        .collect()
}

/// Radial PSD of a set of flat images.
pub fn psd_of(samples: &[Vec<f64>], height: usize, width: usize, n_bins: usize) -> Result<RadialPSD> {
    let imgs = samples
        .iter()
        .map(|s| Image::new(height, width, s.clone()))
        .collect::<Result<Vec<_>>>()?;
    spectral::estimate_psd(&imgs, n_bins)
}

/// Measurements of each ground truth with independent noise.
pub fn measure_all(
    op: &Arc<dyn LinearOperator>,
    truths: &[Vec<f64>],
    eta_var: f64,
    seed: u64,
) -> Result<Vec<InverseProblem>> {
    truths
        .iter()
        .enumerate()
        .map(|(i, x)| simulate_measurement(op.clone(), x, eta_var, rng::substream(seed, i as u64).random()))
        .collect()
}
