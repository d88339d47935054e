//! Analytic priors with closed-form denoisers under variance-exploding noise
//! `x_t = x₀ + σ n`. They stand in for a trained noise-prediction network and
//! give exact oracles for the solvers.

use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::fft::Fft2d;
use crate::linops::{to_dense, LinearOperator};
use crate::schedule::CovMatrix;
use crate::vecops;

/// Common interface of the analytic priors.
pub trait Prior: Send + Sync {
    fn dim(&self) -> usize;

    /// Posterior mean `E[x₀ | x_t]`.
    fn denoise(&self, x_t: &[f64], sigma: f64) -> Result<Vec<f64>>;

    /// `∇ log p_σ(x_t)`; needs `σ > 0`.
    fn score(&self, x_t: &[f64], sigma: f64) -> Result<Vec<f64>>;

    /// `log p_σ(x_t)` of the noised marginal.
    fn log_density(&self, x_t: &[f64], sigma: f64) -> Result<f64>;

    /// Predicted noise `(x_t − E[x₀|x_t]) / σ`, which equals `−σ · score`.
    fn epsilon_hat(&self, x_t: &[f64], sigma: f64) -> Result<Vec<f64>> {
        positive_sigma(sigma)?;
        let d = self.denoise(x_t, sigma)?;
        Ok(x_t.iter().zip(&d).map(|(x, m)| (x - m) / sigma).collect())
    }

    /// `ε̂(·; σ)` is affine in `x_t`, so averages commute with it.
    fn affine_denoiser(&self) -> bool {
        false
    }
}

/// Non-negative noise standard deviation.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd)]
pub struct NoiseLevel(f64);

impl NoiseLevel {
    pub fn new(sigma: f64) -> Result<Self> {
        check_sigma(sigma)?;
        Ok(NoiseLevel(sigma))
    }

    pub fn get(self) -> f64 {
        self.0
    }
}

fn check_sigma(sigma: f64) -> Result<()> {
    if sigma >= 0.0 && sigma.is_finite() {
        Ok(())
    } else {
        Err(Error::param("sigma", format!("must be finite and >= 0, got {sigma}")))
    }
}

fn positive_sigma(sigma: f64) -> Result<()> {
    check_sigma(sigma)?;
    if sigma == 0.0 {
        Err(Error::ZeroNoise { sigma })
    } else {
        Ok(())
    }
}

fn check_len(x: &[f64], n: usize) -> Result<()> {
    if x.len() == n {
        Ok(())
    } else {
        Err(Error::DimensionMismatch {
            expected: n,
            found: x.len(),
        })
    }
}

/// Basis in which a diagonal covariance is expressed.
#[derive(Debug, Clone)]
pub enum Basis {
    Identity,
    /// Unitary 2-D DFT of an `height × width` grid; eigenvalues are in
    /// unshifted DFT order.
    Dft(Fft2d),
}

#[derive(Debug, Clone)]
pub enum Covariance {
    Diagonal { eigenvalues: Vec<f64>, basis: Basis },
    Dense(CovMatrix),
}

#[derive(Debug, Clone)]
pub struct GaussianPrior {
    mean: Vec<f64>,
    cov: Covariance,
}

impl GaussianPrior {
    pub fn diagonal(mean: Vec<f64>, eigenvalues: Vec<f64>) -> Result<Self> {
        check_len(&eigenvalues, mean.len())?;
        check_eigs(&eigenvalues)?;
        Ok(GaussianPrior {
            mean,
            cov: Covariance::Diagonal {
                eigenvalues,
                basis: Basis::Identity,
            },
        })
    }

    /// Stationary prior with DFT-diagonal covariance. The eigenvalue grid is
    /// replaced by its Hermitian-symmetric part `(λ(k) + λ(−k))/2`, which is
    /// the covariance such a prior induces on real images.
    pub fn dft(mean: Vec<f64>, height: usize, width: usize, eigenvalues: Vec<f64>) -> Result<Self> {
        check_len(&mean, height * width)?;
        check_len(&eigenvalues, height * width)?;
        check_eigs(&eigenvalues)?;
        let mut sym = eigenvalues.clone();
        for ku in 0..height {
            for kv in 0..width {
                let mu = (height - ku) % height;
                let mv = (width - kv) % width;
                sym[ku * width + kv] = 0.5 * (eigenvalues[ku * width + kv] + eigenvalues[mu * width + mv]);
            }
        }
        Ok(GaussianPrior {
            mean,
            cov: Covariance::Diagonal {
                eigenvalues: sym,
                basis: Basis::Dft(Fft2d::new(height, width)),
            },
        })
    }

    pub fn dense(mean: Vec<f64>, cov: CovMatrix) -> Result<Self> {
        check_len(&mean, cov.dim())?;
        Ok(GaussianPrior {
            mean,
            cov: Covariance::Dense(cov),
        })
    }

    pub fn mean(&self) -> &[f64] {
        &self.mean
    }

    pub fn covariance(&self) -> &Covariance {
        &self.cov
    }

    /// Applies `g(Σ)` for a spectral function `g` defined per eigenvalue.
    fn spectral_apply(&self, v: &[f64], g: impl Fn(f64) -> f64) -> Vec<f64> {
        match &self.cov {
            Covariance::Diagonal { eigenvalues, basis } => {
                let resp: Vec<f64> = eigenvalues.iter().map(|&l| g(l)).collect();
                match basis {
                    Basis::Identity => v.iter().zip(&resp).map(|(x, r)| x * r).collect(),
                    Basis::Dft(fft) => fft.filter_real(v, &resp),
                }
            }
            Covariance::Dense(c) => {
                let eig = nalgebra::SymmetricEigen::new(c.matrix().clone());
                let d = DVector::from_iterator(eig.eigenvalues.len(), eig.eigenvalues.iter().map(|&l| g(l.max(0.0))));
                let q = &eig.eigenvectors;
                let y = q * d.component_mul(&(q.transpose() * DVector::from_column_slice(v)));
                y.as_slice().to_vec()
            }
        }
    }

    /// `Σ v`.
    pub fn cov_apply(&self, v: &[f64]) -> Vec<f64> {
        match &self.cov {
            Covariance::Dense(c) => (c.matrix() * DVector::from_column_slice(v)).as_slice().to_vec(),
            _ => self.spectral_apply(v, |l| l),
        }
    }

    /// Explicit covariance matrix (small dimensions only).
    pub fn cov_dense(&self) -> DMatrix<f64> {
        match &self.cov {
            Covariance::Dense(c) => c.matrix().clone(),
            _ => {
                let n = self.mean.len();
                let mut m = DMatrix::zeros(n, n);
                let mut e = vec![0.0; n];
                for j in 0..n {
                    e[j] = 1.0;
                    for (i, v) in self.cov_apply(&e).into_iter().enumerate() {
                        m[(i, j)] = v;
                    }
                    e[j] = 0.0;
                }
                0.5 * (&m + m.transpose())
            }
        }
    }

    /// Solves `(Σ + s I) z = v` for `s > 0`.
    fn shifted_solve(&self, v: &[f64], s: f64) -> Result<Vec<f64>> {
        match &self.cov {
            Covariance::Dense(c) => {
                let n = c.dim();
                let k = c.matrix() + DMatrix::identity(n, n) * s;
                let chol = k
                    .cholesky()
                    .ok_or_else(|| Error::Solve("Σ + σ²I is not positive definite".into()))?;
                Ok(chol.solve(&DVector::from_column_slice(v)).as_slice().to_vec())
            }
            _ => Ok(self.spectral_apply(v, |l| 1.0 / (l + s))),
        }
    }

    fn log_det_shifted(&self, s: f64) -> f64 {
        match &self.cov {
            Covariance::Diagonal { eigenvalues, .. } => eigenvalues.iter().map(|l| (l + s).ln()).sum(),
            Covariance::Dense(c) => c.eigenvalues().iter().map(|l| (l.max(0.0) + s).ln()).sum(),
        }
    }
}

fn check_eigs(e: &[f64]) -> Result<()> {
    match e.iter().find(|v| !(**v >= 0.0 && v.is_finite())) {
        Some(&v) => Err(Error::NotPsd { eigenvalue: v }),
        None => Ok(()),
    }
}

impl Prior for GaussianPrior {
    fn dim(&self) -> usize {
        self.mean.len()
    }

    fn denoise(&self, x_t: &[f64], sigma: f64) -> Result<Vec<f64>> {
        check_sigma(sigma)?;
        check_len(x_t, self.dim())?;
        if sigma == 0.0 {
            return Ok(x_t.to_vec());
        }
        let s = self.score(x_t, sigma)?;
        let s2 = sigma * sigma;
        Ok(x_t.iter().zip(&s).map(|(x, g)| x + s2 * g).collect())
    }

    fn score(&self, x_t: &[f64], sigma: f64) -> Result<Vec<f64>> {
        positive_sigma(sigma)?;
        check_len(x_t, self.dim())?;
        let r = vecops::sub(x_t, &self.mean);
        let z = self.shifted_solve(&r, sigma * sigma)?;
        Ok(z.into_iter().map(|v| -v).collect())
    }

    fn log_density(&self, x_t: &[f64], sigma: f64) -> Result<f64> {
        check_sigma(sigma)?;
        check_len(x_t, self.dim())?;
        let s = sigma * sigma;
        let r = vecops::sub(x_t, &self.mean);
        let z = self.shifted_solve(&r, s)?;
        let n = self.dim() as f64;
        Ok(-0.5 * vecops::dot(&r, &z) - 0.5 * self.log_det_shifted(s) - 0.5 * n * (2.0 * PI).ln())
    }

    fn epsilon_hat(&self, x_t: &[f64], sigma: f64) -> Result<Vec<f64>> {
        let s = self.score(x_t, sigma)?;
        Ok(s.into_iter().map(|g| -sigma * g).collect())
    }

    fn affine_denoiser(&self) -> bool {
        true
    }
}

/// Mixture of isotropic Gaussians `Σ_k w_k N(m_k, v_k I)`.
#[derive(Debug, Clone)]
pub struct GmmPrior {
    weights: Vec<f64>,
    log_weights: Vec<f64>,
    means: Vec<Vec<f64>>,
    variances: Vec<f64>,
}

impl GmmPrior {
    pub fn new(weights: Vec<f64>, means: Vec<Vec<f64>>, variances: Vec<f64>) -> Result<Self> {
        let k = weights.len();
        if k == 0 {
            return Err(Error::param("weights", "need at least one component"));
        }
        if means.len() != k || variances.len() != k {
            return Err(Error::param(
                "components",
                "weights, means and variances differ in length",
            ));
        }
        if weights.iter().any(|w| !(*w > 0.0)) {
            return Err(Error::param("weights", "must be positive"));
        }
        let total: f64 = weights.iter().sum();
        if (total - 1.0).abs() > 1e-12 {
            return Err(Error::param("weights", format!("must sum to 1 (sum {total})")));
        }
        if variances.iter().any(|v| !(*v > 0.0 && v.is_finite())) {
            return Err(Error::param("variances", "must be positive"));
        }
        let n = means[0].len();
        if let Some(m) = means.iter().find(|m| m.len() != n) {
            return Err(Error::DimensionMismatch {
                expected: n,
                found: m.len(),
            });
        }
        let log_weights = weights.iter().map(|w| w.ln()).collect();
        Ok(GmmPrior {
            weights,
            log_weights,
            means,
            variances,
        })
    }

    /// Equal weights, shared variance.
    pub fn uniform(means: Vec<Vec<f64>>, variance: f64) -> Result<Self> {
        let k = means.len();
        let w = 1.0 / k.max(1) as f64;
        Self::new(vec![w; k], means, vec![variance; k])
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn means(&self) -> &[Vec<f64>] {
        &self.means
    }

    pub fn variances(&self) -> &[f64] {
        &self.variances
    }

    pub fn n_components(&self) -> usize {
        self.weights.len()
    }

    fn log_components(&self, x_t: &[f64], s: f64) -> Vec<f64> {
        let n = x_t.len() as f64;
        self.means
            .iter()
            .zip(&self.variances)
            .zip(&self.log_weights)
            .map(|((m, &v), &lw)| {
                let d2: f64 = x_t.iter().zip(m).map(|(x, mi)| (x - mi) * (x - mi)).sum();
                let var = v + s;
                lw - 0.5 * d2 / var - 0.5 * n * (2.0 * PI * var).ln()
            })
            .collect()
    }

    /// Component responsibilities `γ_k(x_t)`, normalized in the log domain.
    pub fn responsibilities(&self, x_t: &[f64], sigma: f64) -> Result<Vec<f64>> {
        check_sigma(sigma)?;
        check_len(x_t, self.dim())?;
        let logs = self.log_components(x_t, sigma * sigma);
        let max = logs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let mut g: Vec<f64> = logs.iter().map(|l| (l - max).exp()).collect();
        let z: f64 = g.iter().sum();
        g.iter_mut().for_each(|v| *v /= z);
        Ok(g)
    }
}

impl Prior for GmmPrior {
    fn dim(&self) -> usize {
        self.means[0].len()
    }

    fn denoise(&self, x_t: &[f64], sigma: f64) -> Result<Vec<f64>> {
        check_sigma(sigma)?;
        check_len(x_t, self.dim())?;
        if sigma == 0.0 {
            return Ok(x_t.to_vec());
        }
        let s = sigma * sigma;
        let gamma = self.responsibilities(x_t, sigma)?;
        let mut out = vec![0.0; x_t.len()];
        for ((g, m), &v) in gamma.iter().zip(&self.means).zip(&self.variances) {
            if *g == 0.0 {
                continue;
            }
            let a = g * s / (v + s);
            let b = g * v / (v + s);
            for ((o, mi), xi) in out.iter_mut().zip(m).zip(x_t) {
                *o += a * mi + b * xi;
            }
        }
        Ok(out)
    }

    fn score(&self, x_t: &[f64], sigma: f64) -> Result<Vec<f64>> {
        positive_sigma(sigma)?;
        let d = self.denoise(x_t, sigma)?;
        let s = sigma * sigma;
        Ok(d.iter().zip(x_t).map(|(m, x)| (m - x) / s).collect())
    }

    fn log_density(&self, x_t: &[f64], sigma: f64) -> Result<f64> {
        check_sigma(sigma)?;
        check_len(x_t, self.dim())?;
        let logs = self.log_components(x_t, sigma * sigma);
        let max = logs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        Ok(max + logs.iter().map(|l| (l - max).exp()).sum::<f64>().ln())
    }
}

/// Either analytic prior, for configuration-driven code paths.
#[derive(Debug, Clone)]
pub enum AnalyticPrior {
    Gaussian(GaussianPrior),
    Gmm(GmmPrior),
}

impl Prior for AnalyticPrior {
    fn dim(&self) -> usize {
        match self {
            AnalyticPrior::Gaussian(p) => p.dim(),
            AnalyticPrior::Gmm(p) => p.dim(),
        }
    }

    fn denoise(&self, x_t: &[f64], sigma: f64) -> Result<Vec<f64>> {
        match self {
            AnalyticPrior::Gaussian(p) => p.denoise(x_t, sigma),
            AnalyticPrior::Gmm(p) => p.denoise(x_t, sigma),
        }
    }

    fn score(&self, x_t: &[f64], sigma: f64) -> Result<Vec<f64>> {
        match self {
            AnalyticPrior::Gaussian(p) => p.score(x_t, sigma),
            AnalyticPrior::Gmm(p) => p.score(x_t, sigma),
        }
    }

    fn log_density(&self, x_t: &[f64], sigma: f64) -> Result<f64> {
        match self {
            AnalyticPrior::Gaussian(p) => p.log_density(x_t, sigma),
            AnalyticPrior::Gmm(p) => p.log_density(x_t, sigma),
        }
    }

    fn epsilon_hat(&self, x_t: &[f64], sigma: f64) -> Result<Vec<f64>> {
        match self {
            AnalyticPrior::Gaussian(p) => p.epsilon_hat(x_t, sigma),
            AnalyticPrior::Gmm(p) => p.epsilon_hat(x_t, sigma),
        }
    }

    fn affine_denoiser(&self) -> bool {
        match self {
            AnalyticPrior::Gaussian(p) => p.affine_denoiser(),
            AnalyticPrior::Gmm(p) => p.affine_denoiser(),
        }
    }
}

const DENSE_LIMIT: usize = 64;
const CG_TOL: f64 = 1e-12;

/// LMMSE / Gaussian posterior mean `m + Σ Aᵀ (AΣAᵀ + σ_η² I)† (y − A m)`.
///
/// Small problems use a dense solve (pseudo-inverse when `σ_η = 0`); larger ones
/// run conjugate gradients on `AΣAᵀ + σ_η² I` to relative residual 1e-12.
pub fn gaussian_posterior_mean(
    prior: &GaussianPrior,
    op: &dyn LinearOperator,
    y: &[f64],
    eta_var: f64,
) -> Result<Vec<f64>> {
    check_len(prior.mean(), op.input_dim())?;
    check_len(y, op.output_dim())?;
    if !(eta_var >= 0.0) {
        return Err(Error::param("eta_var", "must be nonnegative"));
    }
    let r = vecops::sub(y, &op.apply(prior.mean()));
    let z = if op.input_dim() <= DENSE_LIMIT && op.output_dim() <= DENSE_LIMIT {
        dense_system_solve(prior, op, &r, eta_var)?
    } else {
        cg_system_solve(prior, op, &r, eta_var)?
    };
    let update = prior.cov_apply(&op.adjoint(&z));
    Ok(vecops::add(prior.mean(), &update))
}

fn dense_system_solve(prior: &GaussianPrior, op: &dyn LinearOperator, r: &[f64], eta_var: f64) -> Result<Vec<f64>> {
    let a = to_dense(op);
    let k = &a * prior.cov_dense() * a.transpose() + DMatrix::identity(a.nrows(), a.nrows()) * eta_var;
    let rhs = DVector::from_column_slice(r);
    if eta_var > 0.0 {
        if let Some(ch) = k.clone().cholesky() {
            return Ok(ch.solve(&rhs).as_slice().to_vec());
        }
    }
    let eps = 1e-12 * k.amax().max(f64::MIN_POSITIVE);
    let pinv = k.pseudo_inverse(eps).map_err(|e| Error::Solve(e.to_string()))?;
    Ok((pinv * rhs).as_slice().to_vec())
}

fn cg_system_solve(prior: &GaussianPrior, op: &dyn LinearOperator, r: &[f64], eta_var: f64) -> Result<Vec<f64>> {
    let apply = |v: &[f64]| {
        let mut out = op.apply(&prior.cov_apply(&op.adjoint(v)));
        vecops::axpy(&mut out, eta_var, v);
        out
    };
    let m = r.len();
    let mut x = vec![0.0; m];
    let mut res = r.to_vec();
    let mut p = res.clone();
    let mut rr = vecops::dot(&res, &res);
    let target = CG_TOL * rr.sqrt();
    if rr.sqrt() <= target || rr == 0.0 {
        return Ok(x);
    }
    for _ in 0..(10 * m).max(100) {
        let ap = apply(&p);
        let pap = vecops::dot(&p, &ap);
        if pap <= 0.0 {
            break;
        }
        let alpha = rr / pap;
        vecops::axpy(&mut x, alpha, &p);
        vecops::axpy(&mut res, -alpha, &ap);
        let rr_new = vecops::dot(&res, &res);
        if rr_new.sqrt() <= target {
            return Ok(x);
        }
        let beta = rr_new / rr;
        for (pi, ri) in p.iter_mut().zip(&res) {
            *pi = ri + beta * *pi;
        }
        rr = rr_new;
    }
    Err(Error::Solve(format!(
        "conjugate gradients stalled at residual {:e}",
        rr.sqrt()
    )))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linops::{DenseOperator, Identity};

    fn std_gaussian(n: usize) -> GaussianPrior {
        GaussianPrior::diagonal(vec![0.0; n], vec![1.0; n]).unwrap()
    }

    #[test]
    fn gaussian_denoise_shrinks_by_half() {
        let d = std_gaussian(2).denoise(&[2.0, -2.0], 1.0).unwrap();
        assert_eq!(d, vec![1.0, -1.0]);
    }

    #[test]
    fn tiny_noise_is_identity() {
        let x = [0.3, -1.2, 4.0];
        let g = GaussianPrior::diagonal(vec![0.1, 0.2, 0.3], vec![0.5, 2.0, 1.0]).unwrap();
        let gm = GmmPrior::uniform(vec![vec![0.0; 3], vec![1.0; 3]], 0.3).unwrap();
        for d in [g.denoise(&x, 1e-8).unwrap(), gm.denoise(&x, 1e-8).unwrap()] {
            for (a, b) in d.iter().zip(&x) {
                assert!((a - b).abs() <= 1e-6 * b.abs());
            }
        }
    }

    #[test]
    fn single_component_gmm_matches_gaussian() {
        let m = vec![0.5, -0.25, 1.0];
        let gm = GmmPrior::new(vec![1.0], vec![m.clone()], vec![0.7]).unwrap();
        let g = GaussianPrior::diagonal(m, vec![0.7; 3]).unwrap();
        let x = [1.0, 2.0, -3.0];
        for s in [0.1, 1.0, 5.0] {
            let a = gm.denoise(&x, s).unwrap();
            let b = g.denoise(&x, s).unwrap();
            for (u, v) in a.iter().zip(&b) {
                assert!((u - v).abs() < 1e-14);
            }
            let la = gm.log_density(&x, s).unwrap();
            let lb = g.log_density(&x, s).unwrap();
            assert!((la - lb).abs() < 1e-12);
        }
    }

    #[test]
    fn epsilon_hat_examples() {
        let p = std_gaussian(2);
        assert_eq!(p.epsilon_hat(&[2.0, 0.0], 1.0).unwrap(), vec![1.0, 0.0]);
        assert_eq!(p.epsilon_hat(&[0.0, 0.0], 0.3).unwrap(), vec![0.0, 0.0]);
        assert!(matches!(p.epsilon_hat(&[0.0, 0.0], 0.0), Err(Error::ZeroNoise { .. })));
        assert_eq!(p.score(&[2.0, 0.0], 1.0).unwrap(), vec![-1.0, 0.0]);
    }

    #[test]
    fn symmetric_gmm_score_vanishes_at_midpoint() {
        let gm = GmmPrior::uniform(vec![vec![-1.0, 0.0], vec![1.0, 0.0]], 0.2).unwrap();
        let s = gm.score(&[0.0, 0.0], 0.5).unwrap();
        assert!(s[0].abs() < 1e-15);
    }

    #[test]
    fn gmm_zero_noise_returns_input() {
        let gm = GmmPrior::uniform(vec![vec![5.0], vec![-5.0]], 1e-3).unwrap();
        assert_eq!(gm.denoise(&[0.0], 0.0).unwrap(), vec![0.0]);
    }

    #[test]
    fn extreme_peaking_stays_finite() {
        let gm = GmmPrior::uniform(vec![vec![0.0; 64], vec![1.0; 64]], 1e-6).unwrap();
        let g = gm.responsibilities(&vec![0.9; 64], 1e-3).unwrap();
        assert!(g.iter().all(|v| v.is_finite()));
        assert!((g.iter().sum::<f64>() - 1.0).abs() < 1e-15);
        assert!(g[1] > 0.999);
    }

    #[test]
    fn posterior_mean_identity_operator() {
        let p = std_gaussian(2);
        let x = gaussian_posterior_mean(&p, &Identity(2), &[2.0, -2.0], 1.0).unwrap();
        assert!((x[0] - 1.0).abs() < 1e-14 && (x[1] + 1.0).abs() < 1e-14);
    }

    #[test]
    fn posterior_mean_noiseless_inverts() {
        let a = DMatrix::from_row_slice(3, 3, &[2.0, 0.5, 0.0, 0.1, 1.0, 0.3, 0.0, -0.4, 1.5]);
        let op = DenseOperator(a.clone());
        let y = [1.0, -2.0, 0.5];
        let p = GaussianPrior::diagonal(vec![0.2, 0.0, -0.1], vec![1.0, 2.0, 0.5]).unwrap();
        let x = gaussian_posterior_mean(&p, &op, &y, 0.0).unwrap();
        let exact = a.lu().solve(&DVector::from_column_slice(&y)).unwrap();
        for (u, v) in x.iter().zip(exact.iter()) {
            assert!((u - v).abs() < 1e-9);
        }
    }

    #[test]
    fn posterior_mean_zero_innovation() {
        let p = GaussianPrior::diagonal(vec![0.2, 0.7, -0.1], vec![1.0, 2.0, 0.5]).unwrap();
        let op = DenseOperator(DMatrix::from_row_slice(2, 3, &[1.0, 0.0, 1.0, 0.0, 1.0, -1.0]));
        let y = op.apply(p.mean());
        let x = gaussian_posterior_mean(&p, &op, &y, 0.3).unwrap();
        for (u, v) in x.iter().zip(p.mean()) {
            assert!((u - v).abs() < 1e-14);
        }
    }
}
