//! Grid search over schedule tolerances and sampler weights, and the
//! invariance sweeps comparing parameterizations.

use std::ops::Range;
use std::sync::Arc;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::io::fmt_num;
use crate::linops::InverseProblem;
use crate::metrics;
use crate::priors::Prior;
use crate::sampler::{self, LambdaMode, SamplerConfig, StepSize, WeightPolicy};
use crate::schedule::{build_schedule, derive_endpoints, NoiseSchedule, Provenance, ToleranceParams, DEFAULT_RHO};
use crate::spectral::{self, Image, RadialPSD};

/// Problems with ground truth sharing one prior and image shape.
#[derive(Clone)]
pub struct TuningSet {
    pub problems: Vec<InverseProblem>,
    pub prior: Arc<dyn Prior>,
    pub shape: (usize, usize),
    /// PSNR/SSIM peak; `None` uses the per-image maximum of the ground truth.
    pub peak: Option<f64>,
}

impl std::fmt::Debug for TuningSet {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("TuningSet")
            .field("problems", &self.problems.len())
            .field("shape", &self.shape)
            .finish()
    }
}

impl TuningSet {
    pub fn new(problems: Vec<InverseProblem>, prior: Arc<dyn Prior>, shape: (usize, usize)) -> Result<Self> {
        if problems.is_empty() {
            return Err(Error::param("problems", "tuning set is empty"));
        }
        let n = shape.0 * shape.1;
        for p in &problems {
            if p.ground_truth.is_none() {
                return Err(Error::OracleUnavailable);
            }
            if p.dim() != n {
                return Err(Error::DimensionMismatch {
                    expected: n,
                    found: p.dim(),
                });
            }
        }
        if prior.dim() != n {
            return Err(Error::DimensionMismatch {
                expected: n,
                found: prior.dim(),
            });
        }
        Ok(TuningSet {
            problems,
            prior,
            shape,
            peak: None,
        })
    }

    pub fn with_peak(mut self, peak: Option<f64>) -> Self {
        self.peak = peak;
        self
    }

    pub fn len(&self) -> usize {
        self.problems.len()
    }

    pub fn is_empty(&self) -> bool {
        self.problems.is_empty()
    }
}

/// Named axes of sorted candidate values; cells enumerate in lexicographic index order.
#[derive(Debug, Clone, PartialEq)]
pub struct GridSpec {
    axes: Vec<(String, Vec<f64>)>,
}

impl GridSpec {
    pub fn new(axes: Vec<(String, Vec<f64>)>) -> Result<Self> {
        if axes.is_empty() {
            return Err(Error::param("grid", "no axes"));
        }
        for (name, vals) in &axes {
            if vals.is_empty() {
                return Err(Error::param("grid", format!("axis `{name}` is empty")));
            }
            if vals.iter().any(|v| !v.is_finite()) || vals.windows(2).any(|w| !(w[0] < w[1])) {
                return Err(Error::param(
                    "grid",
                    format!("axis `{name}` must be finite and strictly increasing"),
                ));
            }
        }
        Ok(GridSpec { axes })
    }

    pub fn axes(&self) -> &[(String, Vec<f64>)] {
        &self.axes
    }

    pub fn n_cells(&self) -> usize {
        self.axes.iter().map(|(_, v)| v.len()).product()
    }

    /// Values of cell `i`; the last axis varies fastest.
    pub fn cell(&self, mut i: usize) -> Vec<f64> {
        let mut out = vec![0.0; self.axes.len()];
        for (slot, (_, vals)) in out.iter_mut().zip(&self.axes).rev() {
            *slot = vals[i % vals.len()];
            i /= vals.len();
        }
        out
    }

    /// Index of each axis value for cell `i`.
    pub fn cell_indices(&self, mut i: usize) -> Vec<usize> {
        let mut out = vec![0; self.axes.len()];
        for (slot, (_, vals)) in out.iter_mut().zip(&self.axes).rev() {
            *slot = i % vals.len();
            i /= vals.len();
        }
        out
    }
}

/// `n` log-spaced points from `lo` to `hi` inclusive.
pub fn log_space(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    if n == 1 {
        return vec![lo];
    }
    let (a, b) = (lo.ln(), hi.ln());
    (0..n)
        .map(|i| {
            if i == n - 1 {
                hi
            } else {
                (a + (b - a) * i as f64 / (n - 1) as f64).exp()
            }
        })
        .collect()
}

pub fn default_tau_grid() -> Vec<f64> {
    vec![0.01, 0.02, 0.05, 0.1, 0.2, 0.5]
}

pub fn default_lambda_grid() -> Vec<f64> {
    log_space(0.05, 5.0, 13)
}

pub fn default_alpha_grid() -> Vec<f64> {
    log_space(0.01, 1.0, 8)
}

#[derive(Debug, Clone, PartialEq)]
pub struct CellResult {
    pub values: Vec<f64>,
    pub psnr: Vec<f64>,
    pub ssim: Vec<f64>,
    pub mean_psnr: f64,
    pub std_psnr: f64,
    pub mean_ssim: f64,
    pub valid: bool,
}

impl CellResult {
    fn invalid(values: Vec<f64>) -> Self {
        CellResult {
            values,
            psnr: Vec::new(),
            ssim: Vec::new(),
            mean_psnr: f64::NAN,
            std_psnr: f64::NAN,
            mean_ssim: f64::NAN,
            valid: false,
        }
    }
}

/// Mean and population standard deviation.
pub fn mean_std(v: &[f64]) -> (f64, f64) {
    if v.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let n = v.len() as f64;
    let m = v.iter().sum::<f64>() / n;
    if m.is_infinite() {
        return (m, f64::NAN);
    }
    let var = v.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / n;
    (m, var.sqrt())
}

#[derive(Debug, Clone, PartialEq)]
pub struct TuningReport {
    pub axes: Vec<String>,
    pub cells: Vec<CellResult>,
    /// Index of the best valid cell.
    pub best: Option<usize>,
}

impl TuningReport {
    fn new(axes: Vec<String>, cells: Vec<CellResult>) -> Self {
        let best = argmax_cell(&cells);
        TuningReport { axes, cells, best }
    }

    pub fn best_cell(&self) -> Option<&CellResult> {
        self.best.map(|i| &self.cells[i])
    }

    pub fn to_csv(&self) -> String {
        let mut s = self.axes.join(",");
        s.push_str(",mean_psnr,std_psnr,mean_ssim,valid\n");
        for c in &self.cells {
            for v in &c.values {
                s.push_str(&fmt_num(*v));
                s.push(',');
            }
            s.push_str(&format!(
                "{},{},{},{}\n",
                fmt_num(c.mean_psnr),
                fmt_num(c.std_psnr),
                fmt_num(c.mean_ssim),
                u8::from(c.valid)
            ));
        }
        s
    }
}

/// Highest mean PSNR among valid cells; ties go to the earliest (lexicographically smallest) cell.
pub fn argmax_cell(cells: &[CellResult]) -> Option<usize> {
    let mut best: Option<usize> = None;
    for (i, c) in cells.iter().enumerate() {
        if !c.valid || c.mean_psnr.is_nan() {
            continue;
        }
        match best {
            Some(b) if cells[b].mean_psnr >= c.mean_psnr => {}
            _ => best = Some(i),
        }
    }
    best
}

/// Seed for problem `i` of a run seeded with `seed`.
pub fn problem_seed(seed: u64, i: usize) -> u64 {
    seed ^ (i as u64).wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15)
}

/// Per-problem PSNR and SSIM of one configuration, evaluated in parallel.
pub fn evaluate(ts: &TuningSet, schedule: &NoiseSchedule, config: &SamplerConfig) -> Result<(Vec<f64>, Vec<f64>)> {
    let (h, w) = ts.shape;
    let results: Vec<Result<(f64, f64)>> = ts
        .problems
        .par_iter()
        .enumerate()
        .map(|(i, p)| {
            let cfg = SamplerConfig {
                seed: problem_seed(config.seed, i),
                ..config.clone()
            };
            let out = sampler::run(p, ts.prior.as_ref(), schedule, &cfg)?;
            let gt = p.ground_truth.as_deref().ok_or(Error::OracleUnavailable)?;
            let psnr = metrics::psnr(gt, &out.reconstruction, ts.peak)?;
            let ssim = match (Image::new(h, w, gt.to_vec()), Image::new(h, w, out.reconstruction)) {
                (Ok(a), Ok(b)) => metrics::ssim(&a, &b, ts.peak).unwrap_or(f64::NAN),
                _ => f64::NAN,
            };
            Ok((psnr, ssim))
        })
        .collect();
    let mut psnr = Vec::with_capacity(results.len());
    let mut ssim = Vec::with_capacity(results.len());
    for r in results {
        let (p, s) = r?;
        psnr.push(p);
        ssim.push(s);
    }
    Ok((psnr, ssim))
}

fn cell_from(values: Vec<f64>, psnr: Vec<f64>, ssim: Vec<f64>) -> CellResult {
    let (mean_psnr, std_psnr) = mean_std(&psnr);
    let (mean_ssim, _) = mean_std(&ssim);
    CellResult {
        values,
        psnr,
        ssim,
        mean_psnr,
        std_psnr,
        mean_ssim,
        valid: true,
    }
}

/// Spectral quantities the tolerance bounds need.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SpectralSummary {
    /// Largest PSD value above the low-frequency cutoff.
    pub hf_nu_max: f64,
    /// Largest PSD value overall.
    pub signal_nu_max: f64,
    /// White noise floor `σ_s²`.
    pub sigma_s_sq: f64,
}

impl SpectralSummary {
    pub fn from_psd(psd: &RadialPSD, lf_cutoff: f64, tail_fraction: f64) -> Result<Self> {
        let hf = spectral::hf_spectrum(psd, lf_cutoff)?;
        let hf_nu_max = hf.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let signal_nu_max = psd.max_value().ok_or(Error::EmptyTail)?;
        let floor = spectral::estimate_noise_floor(psd, tail_fraction)?;
        Ok(SpectralSummary {
            hf_nu_max,
            signal_nu_max,
            sigma_s_sq: floor.sigma_s_sq,
        })
    }

    /// Schedule from tolerances, or `None` when the stop bound is vacuous
    /// or the endpoints do not decrease.
    pub fn schedule(
        &self,
        tol: ToleranceParams,
        n_steps: usize,
        rho: f64,
        high_snr: bool,
    ) -> Result<Option<NoiseSchedule>> {
        let Some(ep) = derive_endpoints(tol, self.hf_nu_max, self.signal_nu_max, self.sigma_s_sq, high_snr)? else {
            return Ok(None);
        };
        if !(ep.sigma_min < ep.sigma_max) {
            return Ok(None);
        }
        let s = build_schedule(ep.sigma_max, ep.sigma_min, n_steps, rho)?;
        Ok(Some(s.with_provenance(Provenance {
            tau_max: tol.tau_max(),
            tau_min: tol.tau_min(),
            nu_max: self.hf_nu_max,
            sigma_s_sq: self.sigma_s_sq,
        })))
    }
}

fn oracle_config(template: &SamplerConfig, n_steps: usize) -> SamplerConfig {
    SamplerConfig {
        n_steps,
        policy: WeightPolicy::Oracle,
        ..template.clone()
    }
}

/// Grid over `(tau_max, tau_min)` with oracle sampler weights, so the result
/// does not depend on any sampler hyperparameter.
pub fn tune_noise_schedule(
    ts: &TuningSet,
    summary: &SpectralSummary,
    grid: &GridSpec,
    n_steps: usize,
    template: &SamplerConfig,
) -> Result<TuningReport> {
    if grid.axes().len() != 2 {
        return Err(Error::param("grid", "expected axes (tau_max, tau_min)"));
    }
    let cfg = oracle_config(template, n_steps);
    let mut cells = Vec::with_capacity(grid.n_cells());
    for i in 0..grid.n_cells() {
        let v = grid.cell(i);
        let tol = ToleranceParams::new(v[0], v[1])?;
        match summary.schedule(tol, n_steps, DEFAULT_RHO, false)? {
            None => cells.push(CellResult::invalid(v)),
            Some(s) => {
                let (p, q) = evaluate(ts, &s, &cfg)?;
                cells.push(cell_from(v, p, q));
            }
        }
    }
    Ok(TuningReport::new(
        grid.axes().iter().map(|(n, _)| n.clone()).collect(),
        cells,
    ))
}

/// Grid over `(alpha_hat, lambda_hat)` with scheduled weights on a fixed schedule.
pub fn tune_sampler(
    ts: &TuningSet,
    schedule: &NoiseSchedule,
    grid: &GridSpec,
    template: &SamplerConfig,
) -> Result<TuningReport> {
    if grid.axes().len() != 2 {
        return Err(Error::param("grid", "expected axes (alpha_hat, lambda_hat)"));
    }
    let mut cells = Vec::with_capacity(grid.n_cells());
    for i in 0..grid.n_cells() {
        let v = grid.cell(i);
        let cfg = SamplerConfig {
            alpha: match template.alpha {
                StepSize::LinearDecay(_) => StepSize::LinearDecay(v[0]),
                _ => StepSize::Constant(v[0]),
            },
            lambda_mode: template.lambda_mode.with_lambda_hat(v[1]),
            policy: WeightPolicy::Scheduled,
            ..template.clone()
        };
        let (p, q) = evaluate(ts, schedule, &cfg)?;
        cells.push(cell_from(v, p, q));
    }
    Ok(TuningReport::new(
        grid.axes().iter().map(|(n, _)| n.clone()).collect(),
        cells,
    ))
}

/// Median per-step oracle weights expressed in unit-gradient terms:
/// `α̂ = α_opt ‖∇f‖` and `λ̂ = λ_opt / r`.
pub fn oracle_reference(ts: &TuningSet, schedule: &NoiseSchedule, template: &SamplerConfig) -> Result<(f64, f64)> {
    let cfg = oracle_config(template, template.n_steps);
    let mut alphas = Vec::new();
    let mut lambdas = Vec::new();
    for (i, p) in ts.problems.iter().enumerate() {
        let c = SamplerConfig {
            seed: problem_seed(cfg.seed, i),
            ..cfg.clone()
        };
        let out = sampler::run(p, ts.prior.as_ref(), schedule, &c)?;
        for t in &out.trace {
            if let Some(a) = t.alpha_opt.filter(|a| *a > 0.0) {
                alphas.push(a * t.norm_f);
            }
            if let (Some(l), Some(r)) = (t.lambda_opt, t.r) {
                lambdas.push(l / r);
            }
        }
    }
    Ok((median(&mut alphas), median(&mut lambdas)))
}

fn median(v: &mut [f64]) -> f64 {
    if v.is_empty() {
        return f64::NAN;
    }
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

/// `n` log-spaced values spanning `decades` on each side of `center`.
pub fn centered_grid(center: f64, decades: f64, n: usize) -> Result<Vec<f64>> {
    if !(center > 0.0 && center.is_finite()) {
        return Err(Error::param("center", format!("must be positive, got {center}")));
    }
    let f = 10f64.powf(decades);
    Ok(log_space(center / f, center * f, n))
}

/// One row of a tidy sweep table.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub setup: String,
    pub parameterization: String,
    pub param_value: f64,
    pub mean_psnr: f64,
    pub normalized_psnr: f64,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Sweep {
    pub rows: Vec<SweepRow>,
}

impl Sweep {
    pub fn to_csv(&self) -> String {
        let mut s = String::from("setup,parameterization,param_value,normalized_psnr\n");
        for r in &self.rows {
            s.push_str(&format!(
                "{},{},{},{}\n",
                r.setup,
                r.parameterization,
                fmt_num(r.param_value),
                fmt_num(r.normalized_psnr)
            ));
        }
        s
    }

    pub fn curve(&self, setup: &str, parameterization: &str) -> Vec<&SweepRow> {
        self.rows
            .iter()
            .filter(|r| r.setup == setup && r.parameterization == parameterization)
            .collect()
    }

    /// Index (within the curve) of the best value; ties go to the smallest index.
    pub fn argmax(&self, setup: &str, parameterization: &str) -> Option<usize> {
        let c = self.curve(setup, parameterization);
        let mut best: Option<usize> = None;
        for (i, r) in c.iter().enumerate() {
            if r.mean_psnr.is_nan() {
                continue;
            }
            match best {
                Some(b) if c[b].mean_psnr >= r.mean_psnr => {}
                _ => best = Some(i),
            }
        }
        best
    }

    fn push_curve(&mut self, setup: &str, parameterization: &str, values: &[f64], psnr: &[f64]) {
        let max = psnr
            .iter()
            .copied()
            .filter(|p| !p.is_nan())
            .fold(f64::NEG_INFINITY, f64::max);
        for (v, p) in values.iter().zip(psnr) {
            self.rows.push(SweepRow {
                setup: setup.to_string(),
                parameterization: parameterization.to_string(),
                param_value: *v,
                mean_psnr: *p,
                normalized_psnr: p / max,
            });
        }
    }
}

fn check_partition(intervals: &[Range<usize>], n_steps: usize) -> Result<()> {
    let mut next = 0;
    for r in intervals {
        if r.start != next || r.end <= r.start {
            return Err(Error::param(
                "intervals",
                format!("{intervals:?} do not partition 0..{n_steps}"),
            ));
        }
        next = r.end;
    }
    if next != n_steps {
        return Err(Error::param(
            "intervals",
            format!("{intervals:?} do not partition 0..{n_steps}"),
        ));
    }
    Ok(())
}

/// For each interval and mode, sweep `λ̂` inside the interval with optimal
/// step lengths there and full oracle weights elsewhere.
pub fn invariance_sweep_lambda(
    ts: &TuningSet,
    schedule: &NoiseSchedule,
    lambda_values: &[f64],
    intervals: &[Range<usize>],
    modes: &[LambdaMode],
    template: &SamplerConfig,
) -> Result<Sweep> {
    check_partition(intervals, template.n_steps)?;
    let mut sweep = Sweep::default();
    for mode in modes {
        for iv in intervals {
            let mut psnr = Vec::with_capacity(lambda_values.len());
            for &l in lambda_values {
                let cfg = SamplerConfig {
                    lambda_mode: mode.with_lambda_hat(l),
                    policy: WeightPolicy::OracleOutside { steps: iv.clone() },
                    ..template.clone()
                };
                let (p, _) = evaluate(ts, schedule, &cfg)?;
                psnr.push(mean_std(&p).0);
            }
            sweep.push_curve(&format!("{}-{}", iv.start, iv.end), mode.name(), lambda_values, &psnr);
        }
    }
    Ok(sweep)
}

/// Which schedule endpoint a sweep varies.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Endpoint {
    /// `τ_max` against `σ_max`; `σ_min` is derived from the fixed `τ_min`.
    Start { tau_min: f64 },
    /// `τ_min` against `σ_min²`; `σ_max` is derived from the fixed `τ_max`.
    Stop { tau_max: f64 },
}

#[derive(Debug, Clone)]
pub struct ScheduleSetup {
    pub name: String,
    pub set: TuningSet,
    pub summary: SpectralSummary,
}

fn run_or_invalid(ts: &TuningSet, smax: f64, smin: f64, n_steps: usize, cfg: &SamplerConfig) -> Result<f64> {
    if !(smin > 0.0 && smin < smax && smax.is_finite()) {
        return Ok(f64::NAN);
    }
    let s = build_schedule(smax, smin, n_steps, DEFAULT_RHO)?;
    Ok(mean_std(&evaluate(ts, &s, cfg)?.0).0)
}

/// Normalized PSNR curves per setup under the tolerance parameterization and
/// the direct noise-level parameterization (`σ_max`, or `σ_min²` for the stop end).
pub fn invariance_sweep_schedule(
    setups: &[ScheduleSetup],
    endpoint: Endpoint,
    tau_grid: &[f64],
    sigma_grid: &[f64],
    template: &SamplerConfig,
) -> Result<Sweep> {
    if setups.len() < 2 {
        return Err(Error::param("setups", "need at least two setups"));
    }
    let n = template.n_steps;
    let cfg = oracle_config(template, n);
    let mut sweep = Sweep::default();
    for st in setups {
        let sm = &st.summary;
        let (tau_name, sigma_name) = match endpoint {
            Endpoint::Start { .. } => ("tau_max", "sigma_max"),
            Endpoint::Stop { .. } => ("tau_min", "sigma_min_sq"),
        };
        let mut tau_psnr = Vec::new();
        for &t in tau_grid {
            let tol = match endpoint {
                Endpoint::Start { tau_min } => ToleranceParams::new(t, tau_min)?,
                Endpoint::Stop { tau_max } => ToleranceParams::new(tau_max, t)?,
            };
            tau_psnr.push(match sm.schedule(tol, n, DEFAULT_RHO, false)? {
                Some(s) => mean_std(&evaluate(&st.set, &s, &cfg)?.0).0,
                None => f64::NAN,
            });
        }
        let mut sigma_psnr = Vec::new();
        for &s in sigma_grid {
            let v = match endpoint {
                Endpoint::Start { tau_min } => {
                    let tol = ToleranceParams::new(0.5, tau_min)?;
                    match derive_endpoints(tol, sm.hf_nu_max, sm.signal_nu_max, sm.sigma_s_sq, false)? {
                        Some(ep) => run_or_invalid(&st.set, s, ep.sigma_min, n, &cfg)?,
                        None => f64::NAN,
                    }
                }
                Endpoint::Stop { tau_max } => {
                    let tol = ToleranceParams::new(tau_max, 0.5)?;
                    let smax = crate::schedule::start_bound(sm.hf_nu_max, tol.tau_max())?.sqrt();
                    run_or_invalid(&st.set, smax, s.sqrt(), n, &cfg)?
                }
            };
            sigma_psnr.push(v);
        }
        sweep.push_curve(&st.name, tau_name, tau_grid, &tau_psnr);
        sweep.push_curve(&st.name, sigma_name, sigma_grid, &sigma_psnr);
    }
    Ok(sweep)
}
