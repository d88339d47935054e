//! Fixtures shared by the kernel benchmarks.

use std::sync::Arc;

use optdiff::linops::{gaussian_blur, simulate_measurement, LinearOperator};
use optdiff::optimal::UpdateBasis;
use optdiff::priors::{GaussianPrior, GmmPrior};
use optdiff::rng;
use optdiff::synthetic::{power_law_eigenvalues, wss_gaussian};
use optdiff::InverseProblem;

/// Deterministic image-shaped vector in [0, 1].
pub fn smooth_image(height: usize, width: usize) -> Vec<f64> {
    (0..height * width)
        .map(|i| {
            let (r, c) = ((i / width) as f64, (i % width) as f64);
            0.5 + 0.25 * (0.3 * r).sin() * (0.2 * c).cos()
        })
        .collect()
}

pub fn noise(n: usize, seed: u64) -> Vec<f64> {
    rng::standard_normals(&mut rng::seeded(seed), n)
}

/// Stationary power-law Gaussian prior with a mid-grey mean.
pub fn wss_prior(height: usize, width: usize) -> GaussianPrior {
    let eig = power_law_eigenvalues(height, width, 1.25e-4, 2.0, 0.05, 1e-3);
    wss_gaussian(height, width, 0.5, eig).expect("valid eigenvalues")
}

/// Isotropic mixture with `k` smooth, shifted component means.
pub fn gmm_prior(height: usize, width: usize, k: usize) -> GmmPrior {
    let base = smooth_image(height, width);
    let means = (0..k)
        .map(|j| base.iter().map(|v| v + 0.05 * j as f64).collect())
        .collect();
    GmmPrior::uniform(means, 1e-3).expect("valid mixture")
}

/// 5×5 blur of a smooth image with light noise.
pub fn deblur_problem(height: usize, width: usize) -> InverseProblem {
    let op: Arc<dyn LinearOperator> = Arc::new(gaussian_blur(height, width, 5, 2.0).expect("kernel fits"));
    simulate_measurement(op, &smooth_image(height, width), 1e-3, 1).expect("shapes agree")
}

/// Random `p`-column basis in `n` dimensions.
pub fn random_basis(n: usize, p: usize, seed: u64) -> UpdateBasis {
    let mut r = rng::seeded(seed);
    UpdateBasis::new((0..p).map(|_| rng::standard_normals(&mut r, n)).collect()).expect("nonempty basis")
}
