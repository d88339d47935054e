//! Randomized property suites for the bounds, the update rules and the
//! NNLS oracle. Each suite draws its cases from a fixed seed and reports
//! how many disagreed with the closed-form prediction.

use rand::Rng as _;

use crate::error::Result;
use crate::optimal::{nnls_small, UpdateBasis};
use crate::rng::{self, Rng};
use crate::sampler::{descent_interval, update_direction, DescentBounds, LambdaMode};
use crate::schedule::{
    loewner_leq, posterior_map, residual_start, residual_stop, start_bound, stop_bound, CovMatrix, StopBoundResult,
};
use crate::vecops::dot;

/// Cases closer than this (relative) to a predicted boundary are not scored.
pub const BOUNDARY_TOL: f64 = 1e-8;
/// Loewner slack relative to the larger operand.
const LOEWNER_TOL: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq)]
pub struct SuiteReport {
    pub name: &'static str,
    pub cases: usize,
    /// Cases skipped for lying within the boundary tolerance.
    pub skipped: usize,
    pub failures: usize,
    pub first_failure: Option<String>,
}

impl SuiteReport {
    fn new(name: &'static str) -> Self {
        SuiteReport {
            name,
            cases: 0,
            skipped: 0,
            failures: 0,
            first_failure: None,
        }
    }

    fn record(&mut self, ok: bool, detail: impl FnOnce() -> String) {
        self.cases += 1;
        if !ok {
            self.failures += 1;
            if self.first_failure.is_none() {
                self.first_failure = Some(detail());
            }
        }
    }

    pub fn passed(&self) -> bool {
        self.failures == 0 && self.cases > 0
    }
}

impl std::fmt::Display for SuiteReport {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(
            f,
            "{} {}: {} cases, {} skipped, {} failures",
            if self.passed() { "PASS" } else { "FAIL" },
            self.name,
            self.cases,
            self.skipped,
            self.failures
        )?;
        if let Some(d) = &self.first_failure {
            write!(f, " (first: {d})")?;
        }
        Ok(())
    }
}

fn log_uniform(r: &mut Rng, lo: f64, hi: f64) -> f64 {
    (r.random_range(lo.ln()..hi.ln())).exp()
}

fn random_spectrum(r: &mut Rng) -> Vec<f64> {
    let d = r.random_range(1..=6);
    (0..d).map(|_| log_uniform(r, 1e-3, 1e1)).collect()
}

fn near(a: f64, b: f64) -> bool {
    (a - b).abs() <= BOUNDARY_TOL * b.abs()
}

/// Start end: `Σ(Σ+σ²I)⁻¹Σ ⪯ τ Σ` holds exactly when `σ² ≥ start_bound`.
pub fn start_bound_suite(n: usize, seed: u64) -> Result<SuiteReport> {
    let mut rep = SuiteReport::new("start-bound");
    let mut r = rng::seeded(seed);
    while rep.cases + rep.skipped < n {
        let eig = random_spectrum(&mut r);
        let tau = r.random_range(0.01..0.99);
        let nu = eig.iter().copied().fold(0.0, f64::max);
        let bound = start_bound(nu, tau)?;
        let s2 = bound * log_uniform(&mut r, 0.1, 10.0);
        if near(s2, bound) {
            rep.skipped += 1;
            continue;
        }
        let cov = CovMatrix::diagonal(&eig)?;
        let holds = loewner_leq(&residual_start(&cov, s2.sqrt())?, &cov.scaled(tau), LOEWNER_TOL)?;
        let predicted = s2 >= bound;
        rep.record(holds == predicted, || {
            format!("eig {eig:?} tau {tau} sigma^2 {s2} bound {bound}")
        });
    }
    Ok(rep)
}

/// Stop end: `Φ(Σ; √(s+σ²)) − Φ(Σ; √s) ⪯ τ Φ(Σ; √s)` holds exactly when
/// `σ² ≤ κ`, and at every σ when the bound is vacuous. The last `vacuous`
/// cases scale the spectrum under `τ s`.
pub fn stop_bound_suite(n: usize, vacuous: usize, seed: u64) -> Result<SuiteReport> {
    let mut rep = SuiteReport::new("stop-bound");
    let mut r = rng::seeded(seed);
    let mut forced = 0;
    while rep.cases + rep.skipped < n + vacuous {
        let force = rep.cases + rep.skipped >= n;
        let mut eig = random_spectrum(&mut r);
        let tau = r.random_range(0.01..0.99);
        let s = log_uniform(&mut r, 1e-3, 1e1);
        if force {
            let nu = eig.iter().copied().fold(0.0, f64::max);
            let target = tau * s * r.random_range(0.05..1.0);
            eig.iter_mut().for_each(|e| *e *= target / nu);
        }
        let nu = eig.iter().copied().fold(0.0, f64::max);
        let cov = CovMatrix::diagonal(&eig)?;
        let floor = posterior_map(&cov, s.sqrt())?.scaled(tau);
        match stop_bound(nu, s, tau)? {
            StopBoundResult::Vacuous => {
                forced += usize::from(force);
                // Several noise levels per vacuous case, spanning many decades.
                let ok = (0..8).try_fold(true, |acc, _| -> Result<bool> {
                    let s2 = log_uniform(&mut r, 1e-6, 1e6);
                    Ok(acc && loewner_leq(&residual_stop(&cov, s, s2.sqrt())?, &floor, LOEWNER_TOL)?)
                })?;
                rep.record(ok, || format!("vacuous case eig {eig:?} tau {tau} s {s} failed"));
            }
            StopBoundResult::Bound(kappa) => {
                if force {
                    rep.record(false, || format!("forced case not vacuous: nu {nu} tau*s {}", tau * s));
                    continue;
                }
                let s2 = kappa * log_uniform(&mut r, 0.1, 10.0);
                if near(s2, kappa) {
                    rep.skipped += 1;
                    continue;
                }
                let holds = loewner_leq(&residual_stop(&cov, s, s2.sqrt())?, &floor, LOEWNER_TOL)?;
                rep.record(holds == (s2 <= kappa), || {
                    format!("eig {eig:?} tau {tau} s {s} sigma^2 {s2} kappa {kappa}")
                });
            }
        }
    }
    if forced < vacuous {
        rep.record(false, || {
            format!("only {forced} of {vacuous} forced cases were vacuous")
        });
    }
    Ok(rep)
}

fn random_vec(r: &mut Rng, n: usize) -> Vec<f64> {
    rng::standard_normals(r, n)
}

fn rel_diff(a: &[f64], b: &[f64]) -> f64 {
    let num = a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt();
    let den = b.iter().map(|y| y * y).sum::<f64>().sqrt();
    num / den
}

/// Invariant-mode updates are unchanged by positive rescaling of either gradient.
pub fn invariance_suite(n: usize, seed: u64, tol: f64) -> Result<SuiteReport> {
    let mut rep = SuiteReport::new("scale-invariance");
    let mut r = rng::seeded(seed);
    for _ in 0..n {
        let d = r.random_range(2..=64);
        let gf = random_vec(&mut r, d);
        let gg = random_vec(&mut r, d);
        let cf = log_uniform(&mut r, 1e-6, 1e6);
        let cg = log_uniform(&mut r, 1e-6, 1e6);
        let mode = LambdaMode::Invariant(log_uniform(&mut r, 1e-2, 1e2));
        let alpha = log_uniform(&mut r, 1e-3, 1.0);
        let sigma = log_uniform(&mut r, 1e-3, 10.0);
        let base = update_direction(&gf, &gg, alpha, &mode, sigma);
        let sf: Vec<f64> = gf.iter().map(|v| cf * v).collect();
        let sg: Vec<f64> = gg.iter().map(|v| cg * v).collect();
        let scaled = update_direction(&sf, &sg, alpha, &mode, sigma);
        let e = rel_diff(&scaled.delta, &base.delta);
        rep.record(e <= tol, || format!("c_f {cf:e} c_g {cg:e}: relative difference {e:e}"));
    }
    Ok(rep)
}

/// Inner products `(⟨∇f, d⟩, ⟨∇g, d⟩)` of `d = ∇f + λ∇g`.
fn descent_products(gf: &[f64], gg: &[f64], lambda: f64) -> (f64, f64) {
    let d: Vec<f64> = gf.iter().zip(gg).map(|(f, g)| f + lambda * g).collect();
    (dot(gf, &d), dot(gg, &d))
}

/// Opposed gradients: the interval midpoint descends on both objectives;
/// just below the lower end only `g` ascends, just above the upper end only `f`.
pub fn sharpness_suite(n: usize, seed: u64, perturbation: f64) -> Result<SuiteReport> {
    let mut rep = SuiteReport::new("descent-sharpness");
    let mut r = rng::seeded(seed);
    while rep.cases < n {
        let d = r.random_range(2..=32);
        let gf = random_vec(&mut r, d);
        let gg = random_vec(&mut r, d);
        let di = descent_interval(&gf, &gg)?;
        let DescentBounds::Interval { lower, upper } = di.bounds else {
            continue;
        };
        if !(lower < upper) {
            continue;
        }
        let mid = 0.5 * (lower + upper);
        let (pf, pg) = descent_products(&gf, &gg, mid);
        let (lf, lg) = descent_products(&gf, &gg, lower * (1.0 - perturbation));
        let (uf, ug) = descent_products(&gf, &gg, upper * (1.0 + perturbation));
        let ok = pf > 0.0 && pg > 0.0 && lf > 0.0 && lg < 0.0 && uf < 0.0 && ug > 0.0;
        rep.record(ok, || {
            format!(
                "cos {}: mid ({pf:e}, {pg:e}) below ({lf:e}, {lg:e}) above ({uf:e}, {ug:e})",
                di.cos_theta
            )
        });
    }
    Ok(rep)
}

/// NNLS against a dense grid over `[0, w_max]^p` with spacing `step · w_max`:
/// the solver is never worse than the grid, and the grid is never better
/// than its own resolution allows.
pub fn nnls_suite(n: usize, seed: u64, step: f64) -> Result<SuiteReport> {
    let mut rep = SuiteReport::new("nnls-vs-grid");
    let mut r = rng::seeded(seed);
    let w_max = 2.0;
    let per_axis = (1.0 / step).round() as usize;
    for case in 0..n {
        let p = if case % 2 == 0 { 2 } else { 3 };
        let d = r.random_range(p..=8);
        let cols: Vec<Vec<f64>> = (0..p).map(|_| random_vec(&mut r, d)).collect();
        // Mixed-sign weights make some constraints active.
        let w_true: Vec<f64> = (0..p).map(|_| r.random_range(-0.5..1.5)).collect();
        let mut target = random_vec(&mut r, d);
        target.iter_mut().for_each(|t| *t *= 0.1);
        for (c, w) in cols.iter().zip(&w_true) {
            for (t, v) in target.iter_mut().zip(c) {
                *t += w * v;
            }
        }
        let g: Vec<Vec<f64>> = cols.iter().map(|a| cols.iter().map(|b| dot(a, b)).collect()).collect();
        let b: Vec<f64> = cols.iter().map(|c| dot(c, &target)).collect();
        let obj = |w: &[f64]| -> f64 {
            let mut v = 0.0;
            for i in 0..p {
                v -= 2.0 * b[i] * w[i];
                for j in 0..p {
                    v += w[i] * g[i][j] * w[j];
                }
            }
            v
        };
        let basis = UpdateBasis::new(cols.clone())?;
        let sol = nnls_small(&basis, &target)?;
        let f_nnls = obj(&sol.w);
        let h = step * w_max;
        let mut f_grid = f64::INFINITY;
        let mut idx = vec![0usize; p];
        let mut w = vec![0.0; p];
        loop {
            for i in 0..p {
                w[i] = idx[i] as f64 * h;
            }
            f_grid = f_grid.min(obj(&w));
            let mut k = 0;
            while k < p {
                idx[k] += 1;
                if idx[k] <= per_axis {
                    break;
                }
                idx[k] = 0;
                k += 1;
            }
            if k == p {
                break;
            }
        }
        let trace: f64 = (0..p).map(|i| g[i][i]).sum();
        let scale = f_grid.abs().max(trace).max(1.0);
        let inside = sol.w.iter().all(|v| *v <= w_max);
        // A grid point lies within h/2 of the minimizer on every axis.
        let resolution = 0.25 * h * h * p as f64 * trace;
        let ok = sol.w.iter().all(|v| *v >= 0.0)
            && f_nnls <= f_grid + 1e-10 * scale
            && (!inside || f_grid - f_nnls <= resolution + 1e-10 * scale);
        rep.record(ok, || format!("p {p}: nnls {f_nnls} grid {f_grid} w {:?}", sol.w));
    }
    Ok(rep)
}

/// All suites at the given case count.
pub fn run_all(n: usize, seed: u64) -> Result<Vec<SuiteReport>> {
    Ok(vec![
        start_bound_suite(n, seed)?,
        stop_bound_suite(n, n / 100, seed ^ 1)?,
        invariance_suite(n / 10, seed ^ 2, 1e-12)?,
        sharpness_suite(n / 10, seed ^ 3, 1e-6)?,
        nnls_suite((n / 20).max(1), seed ^ 4, 1e-2)?,
    ])
}
