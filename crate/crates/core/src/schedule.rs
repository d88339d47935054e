//! Covariance posterior map, tolerance-based start/stop noise bounds, and
//! noise-schedule construction.

use nalgebra::{DMatrix, SymmetricEigen};

use crate::error::{Error, Result};

const SYMMETRY_TOL: f64 = 1e-12;
const PSD_TOL: f64 = 1e-10;

/// Symmetric positive semidefinite matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct CovMatrix(DMatrix<f64>);

impl CovMatrix {
    /// Validates symmetry (relative 1e-12) and semidefiniteness (relative 1e-10).
    pub fn new(m: DMatrix<f64>) -> Result<Self> {
        if !m.is_square() {
            return Err(Error::DimensionMismatch {
                expected: m.nrows(),
                found: m.ncols(),
            });
        }
        let scale = m.norm().max(f64::MIN_POSITIVE);
        let asym = (&m - m.transpose()).amax();
        if asym > SYMMETRY_TOL * scale.max(1.0) {
            return Err(Error::NotSymmetric { asymmetry: asym });
        }
        let sym = symmetrize(m);
        if sym.nrows() > 0 {
            let min = min_eigenvalue(&sym);
            if min < -PSD_TOL * sym.norm() {
                return Err(Error::NotPsd { eigenvalue: min });
            }
        }
        Ok(CovMatrix(sym))
    }

    pub fn diagonal(eigs: &[f64]) -> Result<Self> {
        if let Some(&v) = eigs.iter().find(|v| !(**v >= 0.0)) {
            return Err(Error::NotPsd { eigenvalue: v });
        }
        Ok(CovMatrix(DMatrix::from_diagonal(&nalgebra::DVector::from_row_slice(
            eigs,
        ))))
    }

    pub fn zeros(d: usize) -> Self {
        CovMatrix(DMatrix::zeros(d, d))
    }

    pub fn identity(d: usize) -> Self {
        CovMatrix(DMatrix::identity(d, d))
    }

    pub fn dim(&self) -> usize {
        self.0.nrows()
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.0
    }

    pub fn scaled(&self, s: f64) -> Self {
        CovMatrix(&self.0 * s)
    }

    pub fn eigenvalues(&self) -> Vec<f64> {
        let mut e: Vec<f64> = SymmetricEigen::new(self.0.clone())
            .eigenvalues
            .iter()
            .copied()
            .collect();
        e.sort_by(f64::total_cmp);
        e
    }

    pub fn max_eigenvalue(&self) -> f64 {
        self.eigenvalues().last().copied().unwrap_or(0.0)
    }

    /// Spectral norm.
    pub fn norm(&self) -> f64 {
        self.eigenvalues().iter().fold(0.0f64, |a, v| a.max(v.abs()))
    }
}

fn symmetrize(m: DMatrix<f64>) -> DMatrix<f64> {
    let t = m.transpose();
    (m + t) * 0.5
}

fn min_eigenvalue(m: &DMatrix<f64>) -> f64 {
    SymmetricEigen::new(m.clone())
        .eigenvalues
        .iter()
        .copied()
        .fold(f64::INFINITY, f64::min)
}

/// `(Σ + σ²I)⁻¹ Σ`, via Cholesky. `σ > 0` keeps the system positive definite.
fn resolvent_times(sigma_cov: &CovMatrix, sigma: f64) -> Result<DMatrix<f64>> {
    let d = sigma_cov.dim();
    let shifted = sigma_cov.matrix() + DMatrix::identity(d, d) * (sigma * sigma);
    let chol = shifted
        .cholesky()
        .ok_or_else(|| Error::Solve("Σ + σ²I is not positive definite".into()))?;
    Ok(chol.solve(sigma_cov.matrix()))
}

fn check_sigma(sigma: f64) -> Result<()> {
    if sigma >= 0.0 && sigma.is_finite() {
        Ok(())
    } else {
        Err(Error::param("sigma", format!("must be finite and >= 0, got {sigma}")))
    }
}

/// LMMSE error covariance `Φ(Σ; σ) = Σ − Σ(Σ + σ²I)⁻¹Σ` for `x + σn`.
///
/// Evaluated as `σ² (Σ + σ²I)⁻¹ Σ`, which is algebraically identical and avoids
/// cancellation at small σ. `Φ(Σ; 0) = 0`.
pub fn posterior_map(sigma_cov: &CovMatrix, sigma: f64) -> Result<CovMatrix> {
    check_sigma(sigma)?;
    let d = sigma_cov.dim();
    if sigma == 0.0 {
        return Ok(CovMatrix::zeros(d));
    }
    let x = resolvent_times(sigma_cov, sigma)?;
    Ok(CovMatrix(symmetrize(x * (sigma * sigma))))
}

/// Covariance removed by one observation at σ: `Σ(Σ + σ²I)⁻¹Σ`.
pub fn residual_start(sigma_hl: &CovMatrix, sigma: f64) -> Result<CovMatrix> {
    check_sigma(sigma)?;
    if sigma == 0.0 {
        return Ok(sigma_hl.clone());
    }
    let x = resolvent_times(sigma_hl, sigma)?;
    Ok(CovMatrix(symmetrize(sigma_hl.matrix() * x)))
}

/// Excess posterior covariance over the best attainable one:
/// `Φ(Σ_s; √(σ_s² + σ²)) − Φ(Σ_s; σ_s)`.
pub fn residual_stop(sigma_s_cov: &CovMatrix, sigma_s_sq: f64, sigma: f64) -> Result<CovMatrix> {
    check_sigma(sigma)?;
    if !(sigma_s_sq >= 0.0) {
        return Err(Error::param("sigma_s_sq", "must be nonnegative"));
    }
    if sigma == 0.0 {
        return Ok(CovMatrix::zeros(sigma_s_cov.dim()));
    }
    let now = posterior_map(sigma_s_cov, (sigma_s_sq + sigma * sigma).sqrt())?;
    let best = posterior_map(sigma_s_cov, sigma_s_sq.sqrt())?;
    Ok(CovMatrix(symmetrize(now.0 - best.0)))
}

fn check_tolerance(name: &'static str, tau: f64) -> Result<()> {
    if tau > 0.0 && tau < 1.0 {
        Ok(())
    } else {
        Err(Error::param(name, format!("must lie in (0, 1), got {tau}")))
    }
}

/// Tolerance pair reparameterizing the schedule endpoints.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ToleranceParams {
    tau_max: f64,
    tau_min: f64,
}

impl ToleranceParams {
    pub fn new(tau_max: f64, tau_min: f64) -> Result<Self> {
        check_tolerance("tau_max", tau_max)?;
        check_tolerance("tau_min", tau_min)?;
        Ok(ToleranceParams { tau_max, tau_min })
    }

    pub fn tau_max(&self) -> f64 {
        self.tau_max
    }

    pub fn tau_min(&self) -> f64 {
        self.tau_min
    }
}

/// Smallest admissible `σ_max²`: `((1 − τ_max)/τ_max) · ν_max`.
pub fn start_bound(nu_max: f64, tau_max: f64) -> Result<f64> {
    check_tolerance("tau_max", tau_max)?;
    if !(nu_max >= 0.0) {
        return Err(Error::param("nu_max", "must be nonnegative"));
    }
    Ok((1.0 - tau_max) / tau_max * nu_max)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum StopBoundResult {
    /// Largest admissible `σ_min²`.
    Bound(f64),
    /// `ν_max ≤ τ_min σ_s²`: every σ satisfies the tolerance.
    Vacuous,
}

impl StopBoundResult {
    pub fn kappa(&self) -> Option<f64> {
        match self {
            StopBoundResult::Bound(k) => Some(*k),
            StopBoundResult::Vacuous => None,
        }
    }
}

/// `κ(σ_s) = τ σ_s² (ν_max + σ_s²) / (ν_max − τ σ_s²)` when `ν_max > τ σ_s²`.
pub fn stop_bound(nu_max: f64, sigma_s_sq: f64, tau_min: f64) -> Result<StopBoundResult> {
    check_tolerance("tau_min", tau_min)?;
    if !(nu_max > 0.0) {
        return Err(Error::param("nu_max", "must be positive"));
    }
    if !(sigma_s_sq >= 0.0) {
        return Err(Error::param("sigma_s_sq", "must be nonnegative"));
    }
    let t = tau_min * sigma_s_sq;
    if nu_max <= t {
        return Ok(StopBoundResult::Vacuous);
    }
    let kappa = t * (nu_max + sigma_s_sq) / (nu_max - t);
    if kappa > 0.0 {
        Ok(StopBoundResult::Bound(kappa))
    } else {
        // σ_s² = 0: no floor, nothing to stop at.
        Err(Error::param("sigma_s_sq", "zero noise floor gives a zero stop level"))
    }
}

/// High-SNR approximation `κ ≈ τ_min σ_s²`.
pub fn stop_bound_high_snr(sigma_s_sq: f64, tau_min: f64) -> Result<f64> {
    check_tolerance("tau_min", tau_min)?;
    Ok(tau_min * sigma_s_sq)
}

/// Where a schedule's endpoints came from.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Provenance {
    pub tau_max: f64,
    pub tau_min: f64,
    pub nu_max: f64,
    pub sigma_s_sq: f64,
}

/// Strictly decreasing noise levels from `sigma_max` to `sigma_min`.
#[derive(Debug, Clone, PartialEq)]
pub struct NoiseSchedule {
    sigmas: Vec<f64>,
    rho: f64,
    provenance: Option<Provenance>,
}

pub const DEFAULT_RHO: f64 = 7.0;
pub const DEFAULT_SIGMA_MAX: f64 = 20.0;
pub const DEFAULT_SIGMA_MIN: f64 = 0.002;

impl NoiseSchedule {
    pub fn sigmas(&self) -> &[f64] {
        &self.sigmas
    }

    pub fn len(&self) -> usize {
        self.sigmas.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sigmas.is_empty()
    }

    pub fn sigma_max(&self) -> f64 {
        self.sigmas[0]
    }

    pub fn sigma_min(&self) -> f64 {
        self.sigmas[self.sigmas.len() - 1]
    }

    pub fn rho(&self) -> f64 {
        self.rho
    }

    pub fn provenance(&self) -> Option<&Provenance> {
        self.provenance.as_ref()
    }

    pub fn with_provenance(mut self, p: Provenance) -> Self {
        self.provenance = Some(p);
        self
    }

    /// Single-level schedule.
    pub fn constant(sigma: f64) -> Result<Self> {
        if !(sigma > 0.0 && sigma.is_finite()) {
            return Err(Error::param("sigma", "must be positive"));
        }
        Ok(NoiseSchedule {
            sigmas: vec![sigma],
            rho: DEFAULT_RHO,
            provenance: None,
        })
    }

    /// Noise level for iteration `k` of `n_steps`, resampling by index rounding.
    pub fn at_step(&self, k: usize, n_steps: usize) -> f64 {
        if n_steps <= 1 || self.sigmas.len() == 1 {
            return self.sigmas[0];
        }
        let last = (self.sigmas.len() - 1) as f64;
        let idx = (k as f64 * last / (n_steps - 1) as f64).round() as usize;
        self.sigmas[idx.min(self.sigmas.len() - 1)]
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("index,sigma\n");
        for (i, v) in self.sigmas.iter().enumerate() {
            s.push_str(&format!("{i},{v}\n"));
        }
        s
    }
}

/// ρ-power interpolation between `sigma_max` and `sigma_min`; endpoints are exact.
pub fn build_schedule(sigma_max: f64, sigma_min: f64, n_steps: usize, rho: f64) -> Result<NoiseSchedule> {
    if !(sigma_min > 0.0) || !sigma_max.is_finite() {
        return Err(Error::param("sigma_min", "must be positive and finite"));
    }
    if sigma_min >= sigma_max {
        return Err(Error::param(
            "sigma_min",
            format!("must be below sigma_max ({sigma_min} >= {sigma_max})"),
        ));
    }
    if n_steps < 2 {
        return Err(Error::param("n_steps", "need at least 2 levels"));
    }
    if !(rho > 0.0) {
        return Err(Error::param("rho", "must be positive"));
    }
    let a = sigma_max.powf(1.0 / rho);
    let b = sigma_min.powf(1.0 / rho);
    let last = (n_steps - 1) as f64;
    let mut sigmas: Vec<f64> = (0..n_steps)
        .map(|i| (a + (i as f64 / last) * (b - a)).powf(rho))
        .collect();
    sigmas[0] = sigma_max;
    sigmas[n_steps - 1] = sigma_min;
    if sigmas.windows(2).any(|w| !(w[1] < w[0])) {
        return Err(Error::param(
            "n_steps",
            "too many levels for this range: schedule is not strictly decreasing in f64",
        ));
    }
    Ok(NoiseSchedule {
        sigmas,
        rho,
        provenance: None,
    })
}

/// Endpoints derived from tolerances: `σ_max` at the start bound, `σ_min` at the stop bound.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DerivedEndpoints {
    pub sigma_max: f64,
    pub sigma_min: f64,
}

/// `hf_nu_max` bounds the start level; `signal_nu_max` (the largest signal
/// eigenvalue) and the noise floor bound the stop level. `high_snr` swaps the
/// exact κ for `τ_min σ_s²`.
pub fn derive_endpoints(
    tol: ToleranceParams,
    hf_nu_max: f64,
    signal_nu_max: f64,
    sigma_s_sq: f64,
    high_snr: bool,
) -> Result<Option<DerivedEndpoints>> {
    let smax_sq = start_bound(hf_nu_max, tol.tau_max())?;
    let smin_sq = if high_snr {
        stop_bound_high_snr(sigma_s_sq, tol.tau_min())?
    } else {
        match stop_bound(signal_nu_max, sigma_s_sq, tol.tau_min())? {
            StopBoundResult::Bound(k) => k,
            StopBoundResult::Vacuous => return Ok(None),
        }
    };
    Ok(Some(DerivedEndpoints {
        sigma_max: smax_sq.sqrt(),
        sigma_min: smin_sq.sqrt(),
    }))
}

/// `A ⪯ B` up to `tol · max(1, ‖B‖)` on the smallest eigenvalue of `B − A`.
pub fn loewner_leq(a: &CovMatrix, b: &CovMatrix, tol: f64) -> Result<bool> {
    if a.dim() != b.dim() {
        return Err(Error::DimensionMismatch {
            expected: b.dim(),
            found: a.dim(),
        });
    }
    if a.dim() == 0 {
        return Ok(true);
    }
    let diff = symmetrize(b.matrix() - a.matrix());
    let min = min_eigenvalue(&diff);
    Ok(min >= -tol * b.norm().max(1.0))
}
