//! Variational posterior sampler: gradient descent on `μ` against
//! `f(μ) = ‖y − Aμ‖²` plus the denoising regularizer, in the raw
//! `λ`-weighted form or the unit-gradient (invariant) form.

use std::ops::Range;

use crate::error::{Error, Result};
use crate::io::fmt_num;
use crate::linops::InverseProblem;
use crate::metrics;
use crate::optimal::{
    apply_preconditioner, make_preconditioner, optimal_step, PolyCoeffs, Preconditioner, UpdateBasis,
};
use crate::priors::Prior;
use crate::rng::{self, Rng};
use crate::schedule::NoiseSchedule;
use crate::vecops;

/// Gradient norms below this are treated as zero.
pub const DEGENERATE_NORM: f64 = 1e-30;

/// How the prior weight `λᵏ` is chosen each step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum LambdaMode {
    /// `λᵏ = λ̂ rᵏ`: the update uses unit gradients.
    Invariant(f64),
    Constant(f64),
    Linear(f64),
    Square(f64),
    SquareRoot(f64),
    Log(f64),
}

impl LambdaMode {
    pub fn lambda_hat(&self) -> f64 {
        match *self {
            LambdaMode::Invariant(l)
            | LambdaMode::Constant(l)
            | LambdaMode::Linear(l)
            | LambdaMode::Square(l)
            | LambdaMode::SquareRoot(l)
            | LambdaMode::Log(l) => l,
        }
    }

    pub fn is_invariant(&self) -> bool {
        matches!(self, LambdaMode::Invariant(_))
    }

    /// Same functional form with a different `λ̂`.
    pub fn with_lambda_hat(&self, l: f64) -> Self {
        match self {
            LambdaMode::Invariant(_) => LambdaMode::Invariant(l),
            LambdaMode::Constant(_) => LambdaMode::Constant(l),
            LambdaMode::Linear(_) => LambdaMode::Linear(l),
            LambdaMode::Square(_) => LambdaMode::Square(l),
            LambdaMode::SquareRoot(_) => LambdaMode::SquareRoot(l),
            LambdaMode::Log(_) => LambdaMode::Log(l),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            LambdaMode::Invariant(_) => "invariant",
            LambdaMode::Constant(_) => "constant",
            LambdaMode::Linear(_) => "linear",
            LambdaMode::Square(_) => "square",
            LambdaMode::SquareRoot(_) => "sqrt",
            LambdaMode::Log(_) => "log",
        }
    }

    pub fn parse(name: &str, lambda_hat: f64) -> Result<Self> {
        let mode = match name {
            "invariant" => LambdaMode::Invariant(lambda_hat),
            "constant" => LambdaMode::Constant(lambda_hat),
            "linear" => LambdaMode::Linear(lambda_hat),
            "square" => LambdaMode::Square(lambda_hat),
            "sqrt" => LambdaMode::SquareRoot(lambda_hat),
            "log" => LambdaMode::Log(lambda_hat),
            other => return Err(Error::param("lambda_mode", format!("unknown mode `{other}`"))),
        };
        Ok(mode)
    }
}

/// `λᵏ` for the given mode; `SNR = 1/σ`, so the SNR-based forms are powers of `σ`.
pub fn lambda_weight(mode: &LambdaMode, sigma: f64, r: f64) -> f64 {
    match *mode {
        LambdaMode::Invariant(l) => l * r,
        LambdaMode::Constant(l) => l,
        LambdaMode::Linear(l) => l * sigma,
        LambdaMode::Square(l) => l * sigma * sigma,
        LambdaMode::SquareRoot(l) => l * sigma.sqrt(),
        LambdaMode::Log(l) => l * sigma.ln_1p(),
    }
}

/// Range of `λ` giving a common descent direction for `f` and `g`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum DescentBounds {
    AllPositive,
    Interval { lower: f64, upper: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DescentInterval {
    pub cos_theta: f64,
    pub r: f64,
    pub bounds: DescentBounds,
}

impl DescentInterval {
    /// `(lower, upper)` with `(0, ∞)` for the unconstrained case.
    pub fn as_pair(&self) -> (f64, f64) {
        match self.bounds {
            DescentBounds::AllPositive => (0.0, f64::INFINITY),
            DescentBounds::Interval { lower, upper } => (lower, upper),
        }
    }

    /// Bounds on `λ̂ = λ / r`.
    pub fn normalized(&self) -> (f64, f64) {
        let (l, u) = self.as_pair();
        (l / self.r, u / self.r)
    }

    /// Open-interval membership.
    pub fn contains(&self, lambda: f64) -> bool {
        let (l, u) = self.as_pair();
        lambda > l && lambda < u
    }
}

pub fn descent_interval(grad_f: &[f64], grad_g: &[f64]) -> Result<DescentInterval> {
    let nf = vecops::norm(grad_f);
    let ng = vecops::norm(grad_g);
    if !(nf > 0.0 && ng > 0.0) {
        return Err(Error::UndefinedAngle);
    }
    let cos = (vecops::dot(grad_f, grad_g) / (nf * ng)).clamp(-1.0, 1.0);
    let r = nf / ng;
    let bounds = if cos >= 0.0 {
        DescentBounds::AllPositive
    } else {
        DescentBounds::Interval {
            lower: r * (-cos),
            upper: r * (-1.0 / cos),
        }
    };
    Ok(DescentInterval {
        cos_theta: cos,
        r,
        bounds,
    })
}

/// `2 Aᵀ(Aμ − y)`.
pub fn grad_data(problem: &InverseProblem, mu: &[f64]) -> Vec<f64> {
    let resid = vecops::sub(&problem.op.apply(mu), &problem.y);
    vecops::scale(&problem.op.adjoint(&resid), 2.0)
}

/// Monte Carlo mean of `ε̂(μ + σε; σ) − ε` over `m` fresh draws.
pub fn grad_prior(prior: &dyn Prior, mu: &[f64], sigma: f64, m: usize, rng: &mut Rng) -> Result<Vec<f64>> {
    if !(sigma > 0.0 && sigma.is_finite()) {
        return Err(Error::ZeroNoise { sigma });
    }
    if m == 0 {
        return Err(Error::param("noise_instances", "must be at least 1"));
    }
    let n = mu.len();
    let inv = 1.0 / m as f64;
    if prior.affine_denoiser() && m > 1 {
        // mean_j ε̂(μ + σε_j) = ε̂(μ + σ ε̄): one denoiser call, same draws.
        let mut eps_bar = vec![0.0; n];
        for _ in 0..m {
            let eps = rng::standard_normals(rng, n);
            vecops::axpy(&mut eps_bar, 1.0, &eps);
        }
        eps_bar.iter_mut().for_each(|e| *e *= inv);
        let mut x_t = mu.to_vec();
        vecops::axpy(&mut x_t, sigma, &eps_bar);
        let e_hat = prior.epsilon_hat(&x_t, sigma)?;
        return Ok(vecops::sub(&e_hat, &eps_bar));
    }
    let mut acc = vec![0.0; n];
    for _ in 0..m {
        let eps = rng::standard_normals(rng, n);
        let mut x_t = mu.to_vec();
        vecops::axpy(&mut x_t, sigma, &eps);
        let e_hat = prior.epsilon_hat(&x_t, sigma)?;
        for i in 0..n {
            acc[i] += e_hat[i] - eps[i];
        }
    }
    acc.iter_mut().for_each(|a| *a *= inv);
    Ok(acc)
}

/// A single update `Δμ` and the weight actually applied.
#[derive(Debug, Clone, PartialEq)]
pub struct Update {
    pub delta: Vec<f64>,
    /// `λᵏ`; absent in invariant mode when a gradient is degenerate.
    pub lambda: Option<f64>,
    pub degenerate: bool,
}

fn unit_or_zero(g: &[f64]) -> (Vec<f64>, bool) {
    let n = vecops::norm(g);
    if n < DEGENERATE_NORM {
        (vec![0.0; g.len()], true)
    } else {
        (vecops::scale(g, 1.0 / n), false)
    }
}

/// Raw: `Δμ = −α(∇f + λ∇g)`. Invariant: `Δμ = −α̂(∇f/‖∇f‖ + λ̂ ∇g/‖∇g‖)`.
pub fn update_direction(grad_f: &[f64], grad_g: &[f64], alpha: f64, mode: &LambdaMode, sigma: f64) -> Update {
    if mode.is_invariant() {
        let lh = mode.lambda_hat();
        let (uf, df) = unit_or_zero(grad_f);
        let (ug, dg) = unit_or_zero(grad_g);
        let delta = uf.iter().zip(&ug).map(|(a, b)| -alpha * (a + lh * b)).collect();
        let lambda = if df || dg {
            None
        } else {
            Some(lambda_weight(mode, sigma, vecops::norm(grad_f) / vecops::norm(grad_g)))
        };
        Update {
            delta,
            lambda,
            degenerate: df || dg,
        }
    } else {
        let lambda = lambda_weight(mode, sigma, 1.0);
        let delta = grad_f
            .iter()
            .zip(grad_g)
            .map(|(a, b)| -alpha * (a + lambda * b))
            .collect();
        Update {
            delta,
            lambda: Some(lambda),
            degenerate: false,
        }
    }
}

/// Per-step step sizes.
#[derive(Debug, Clone, PartialEq)]
pub enum StepSize {
    Constant(f64),
    /// `α̂ (1 − k/N)`.
    LinearDecay(f64),
    PerStep(Vec<f64>),
}

impl StepSize {
    pub fn at(&self, k: usize, n_steps: usize) -> f64 {
        match self {
            StepSize::Constant(a) => *a,
            StepSize::LinearDecay(a) => a * (1.0 - k as f64 / n_steps as f64),
            StepSize::PerStep(v) => v[k.min(v.len() - 1)],
        }
    }

    pub fn base(&self) -> f64 {
        match self {
            StepSize::Constant(a) | StepSize::LinearDecay(a) => *a,
            StepSize::PerStep(v) => v[0],
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Momentum {
    Off,
    Fixed(f64),
    /// `β` chosen by the oracle; only valid with an oracle weight policy.
    Optimal,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Precondition {
    Off,
    Polynomial(PolyCoeffs),
}

#[derive(Debug, Clone, PartialEq)]
pub enum Init {
    AdjointOfY,
    Zero,
    Given(Vec<f64>),
}

/// Where step weights come from.
#[derive(Debug, Clone, PartialEq)]
pub enum WeightPolicy {
    /// `α` from the step-size schedule and `λ` from the mode.
    Scheduled,
    /// NNLS oracle against the ground truth at every step.
    Oracle,
    /// Inside `steps`: `λ` from the mode and the step length from a 1-D oracle.
    /// Outside: full oracle.
    OracleOutside { steps: Range<usize> },
}

#[derive(Debug, Clone, PartialEq)]
pub struct SamplerConfig {
    pub n_steps: usize,
    pub noise_instances: usize,
    pub lambda_mode: LambdaMode,
    pub alpha: StepSize,
    pub momentum: Momentum,
    pub precondition: Precondition,
    pub seed: u64,
    pub init: Init,
    pub policy: WeightPolicy,
    /// Record PSNR against the ground truth after each step.
    pub track_psnr: bool,
}

impl Default for SamplerConfig {
    fn default() -> Self {
        SamplerConfig {
            n_steps: 100,
            noise_instances: 1,
            lambda_mode: LambdaMode::Invariant(1.0),
            alpha: StepSize::Constant(0.1),
            momentum: Momentum::Off,
            precondition: Precondition::Off,
            seed: 0,
            init: Init::AdjointOfY,
            policy: WeightPolicy::Scheduled,
            track_psnr: false,
        }
    }
}

impl SamplerConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_steps == 0 {
            return Err(Error::param("n_steps", "must be at least 1"));
        }
        if self.noise_instances == 0 {
            return Err(Error::param("noise_instances", "must be at least 1"));
        }
        let lh = self.lambda_mode.lambda_hat();
        if !(lh >= 0.0 && lh.is_finite()) {
            return Err(Error::param("lambda_hat", format!("must be nonnegative, got {lh}")));
        }
        match &self.alpha {
            StepSize::PerStep(v) if v.is_empty() => return Err(Error::param("alpha", "empty per-step list")),
            StepSize::PerStep(v) if v.iter().any(|a| !(*a >= 0.0)) => {
                return Err(Error::param("alpha", "step sizes must be nonnegative"))
            }
            StepSize::Constant(a) | StepSize::LinearDecay(a) if !(*a >= 0.0 && a.is_finite()) => {
                return Err(Error::param("alpha", format!("must be nonnegative, got {a}")))
            }
            _ => {}
        }
        match self.momentum {
            Momentum::Fixed(b) if !(0.0..1.0).contains(&b) => {
                return Err(Error::param("momentum", format!("beta must lie in [0, 1), got {b}")))
            }
            Momentum::Optimal if self.policy == WeightPolicy::Scheduled => {
                return Err(Error::param("momentum", "optimal beta needs an oracle weight policy"))
            }
            _ => {}
        }
        if let WeightPolicy::OracleOutside { steps } = &self.policy {
            if steps.start > steps.end || steps.end > self.n_steps {
                return Err(Error::param(
                    "policy",
                    format!("interval {steps:?} outside 0..{}", self.n_steps),
                ));
            }
        }
        Ok(())
    }

    /// Score evaluations per run.
    pub fn nfe(&self) -> usize {
        self.n_steps * self.noise_instances
    }
}

/// One row of the run trace.
#[derive(Debug, Clone, PartialEq)]
pub struct StepRecord {
    pub k: usize,
    pub sigma: f64,
    pub norm_f: f64,
    pub norm_g: f64,
    /// `‖∇f‖ / ‖∇g‖`; absent if either gradient is degenerate.
    pub r: Option<f64>,
    pub cos_theta: Option<f64>,
    pub lambda: Option<f64>,
    pub lower_bound: Option<f64>,
    pub upper_bound: Option<f64>,
    pub psnr_vs_gt: Option<f64>,
    pub alpha_opt: Option<f64>,
    pub lambda_opt: Option<f64>,
    pub beta_opt: Option<f64>,
    pub step_norm: f64,
    pub degenerate: bool,
    /// `‖x* − μᵏ⁺¹‖` when the ground truth is known.
    pub dist_to_gt: Option<f64>,
}

impl StepRecord {
    fn diagnostics(k: usize, sigma: f64, grad_f: &[f64], grad_g: &[f64]) -> Self {
        let norm_f = vecops::norm(grad_f);
        let norm_g = vecops::norm(grad_g);
        let degenerate = norm_f < DEGENERATE_NORM || norm_g < DEGENERATE_NORM;
        let di = if degenerate {
            None
        } else {
            descent_interval(grad_f, grad_g).ok()
        };
        StepRecord {
            k,
            sigma,
            norm_f,
            norm_g,
            r: di.map(|d| d.r),
            cos_theta: di.map(|d| d.cos_theta),
            lambda: None,
            lower_bound: di.map(|d| d.as_pair().0),
            upper_bound: di.map(|d| d.as_pair().1),
            psnr_vs_gt: None,
            alpha_opt: None,
            lambda_opt: None,
            beta_opt: None,
            step_norm: 0.0,
            degenerate,
            dist_to_gt: None,
        }
    }
}

pub const TRACE_HEADER: &str =
    "k,sigma,norm_f,norm_g,r,cos_theta,lambda,lower_bound,upper_bound,psnr_vs_gt,alpha_opt,lambda_opt,beta_opt,step_norm,degenerate,dist_to_gt";

pub fn trace_to_csv(trace: &[StepRecord]) -> String {
    let opt = |v: Option<f64>| v.map(fmt_num).unwrap_or_default();
    let mut s = String::from(TRACE_HEADER);
    s.push('\n');
    for t in trace {
        s.push_str(&format!(
            "{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{}\n",
            t.k,
            fmt_num(t.sigma),
            fmt_num(t.norm_f),
            fmt_num(t.norm_g),
            opt(t.r),
            opt(t.cos_theta),
            opt(t.lambda),
            opt(t.lower_bound),
            opt(t.upper_bound),
            opt(t.psnr_vs_gt),
            opt(t.alpha_opt),
            opt(t.lambda_opt),
            opt(t.beta_opt),
            fmt_num(t.step_norm),
            u8::from(t.degenerate),
            opt(t.dist_to_gt),
        ));
    }
    s
}

/// Iterate, momentum buffer and trace of one run.
#[derive(Debug, Clone)]
pub struct SamplerState {
    pub mu: Vec<f64>,
    pub v: Vec<f64>,
    pub k: usize,
    pub rng: Rng,
    pub trace: Vec<StepRecord>,
}

impl SamplerState {
    pub fn new(mu: Vec<f64>, seed: u64) -> Self {
        let n = mu.len();
        SamplerState {
            mu,
            v: vec![0.0; n],
            k: 0,
            rng: rng::seeded(seed),
            trace: Vec::new(),
        }
    }
}

/// Plain (momentum-free) update of `state` at noise level `sigma`; appends a trace row.
pub fn step(
    state: &mut SamplerState,
    grad_f: &[f64],
    grad_g: &[f64],
    alpha: f64,
    mode: &LambdaMode,
    sigma: f64,
) -> Result<Update> {
    if grad_f.len() != state.mu.len() || grad_g.len() != state.mu.len() {
        return Err(Error::DimensionMismatch {
            expected: state.mu.len(),
            found: grad_f.len().max(grad_g.len()),
        });
    }
    let up = update_direction(grad_f, grad_g, alpha, mode, sigma);
    let mut rec = StepRecord::diagnostics(state.k, sigma, grad_f, grad_g);
    rec.lambda = up.lambda;
    rec.degenerate |= up.degenerate;
    rec.step_norm = vecops::norm(&up.delta);
    vecops::axpy(&mut state.mu, 1.0, &up.delta);
    state.v = vecops::scale(&up.delta, -1.0);
    state.trace.push(rec);
    state.k += 1;
    Ok(up)
}

#[derive(Debug, Clone)]
pub struct RunOutput {
    pub reconstruction: Vec<f64>,
    pub trace: Vec<StepRecord>,
}

fn initial_iterate(problem: &InverseProblem, init: &Init) -> Result<Vec<f64>> {
    let n = problem.dim();
    match init {
        Init::AdjointOfY => Ok(problem.op.adjoint(&problem.y)),
        Init::Zero => Ok(vec![0.0; n]),
        Init::Given(v) if v.len() == n => Ok(v.clone()),
        Init::Given(v) => Err(Error::DimensionMismatch {
            expected: n,
            found: v.len(),
        }),
    }
}

fn oracle_into(
    state: &mut SamplerState,
    gt: Option<&[f64]>,
    mut cols: Vec<Vec<f64>>,
    momentum: bool,
    rec: &mut StepRecord,
) -> Result<Vec<f64>> {
    if momentum {
        cols.push(state.v.clone());
    }
    let basis = UpdateBasis::new(cols)?;
    let (next, w) = optimal_step(gt, &state.mu, &basis)?;
    rec.step_norm = vecops::norm(&vecops::sub(&state.mu, &next));
    state.v = basis.combine(&w.w);
    state.mu = next;
    Ok(w.w)
}

/// Run the sampler for `config.n_steps` iterations with noise levels taken
/// from `schedule` in descending order.
pub fn run(
    problem: &InverseProblem,
    prior: &dyn Prior,
    schedule: &NoiseSchedule,
    config: &SamplerConfig,
) -> Result<RunOutput> {
    config.validate()?;
    if schedule.is_empty() {
        return Err(Error::param("schedule", "empty"));
    }
    if prior.dim() != problem.dim() {
        return Err(Error::DimensionMismatch {
            expected: problem.dim(),
            found: prior.dim(),
        });
    }
    let op = problem.op.as_ref();
    let precond: Option<Preconditioner> = match config.precondition {
        Precondition::Off => None,
        Precondition::Polynomial(c) => Some(make_preconditioner(op, c)?),
    };
    let gt = problem.ground_truth.as_deref();
    let n_steps = config.n_steps;
    let use_momentum = config.momentum != Momentum::Off;
    let mut state = SamplerState::new(initial_iterate(problem, &config.init)?, config.seed);

    for k in 0..n_steps {
        let sigma = schedule.at_step(k, n_steps);
        let mut grad_f = grad_data(problem, &state.mu);
        if let Some(pc) = &precond {
            grad_f = apply_preconditioner(pc, op, &grad_f);
        }
        let grad_g = grad_prior(prior, &state.mu, sigma, config.noise_instances, &mut state.rng)?;
        let mut rec = StepRecord::diagnostics(k, sigma, &grad_f, &grad_g);

        let inside = match &config.policy {
            WeightPolicy::Scheduled => None,
            WeightPolicy::Oracle => Some(false),
            WeightPolicy::OracleOutside { steps } => Some(steps.contains(&k)),
        };
        match inside {
            None => {
                let up = update_direction(
                    &grad_f,
                    &grad_g,
                    config.alpha.at(k, n_steps),
                    &config.lambda_mode,
                    sigma,
                );
                rec.lambda = up.lambda;
                rec.degenerate |= up.degenerate;
                match config.momentum {
                    Momentum::Fixed(beta) => {
                        for (v, d) in state.v.iter_mut().zip(&up.delta) {
                            *v = -d + beta * *v;
                        }
                    }
                    _ => state.v = vecops::scale(&up.delta, -1.0),
                }
                rec.step_norm = vecops::norm(&state.v);
                vecops::axpy(&mut state.mu, -1.0, &state.v);
            }
            Some(true) => {
                // Direction fixed by the mode; only its length is optimized.
                let up = update_direction(&grad_f, &grad_g, 1.0, &config.lambda_mode, sigma);
                rec.lambda = up.lambda;
                rec.degenerate |= up.degenerate;
                let dir = vecops::scale(&up.delta, -1.0);
                let w = oracle_into(&mut state, gt, vec![dir], use_momentum, &mut rec)?;
                rec.alpha_opt = Some(w[0]);
                rec.beta_opt = w.get(1).copied();
            }
            Some(false) => {
                let w = oracle_into(&mut state, gt, vec![grad_f, grad_g], use_momentum, &mut rec)?;
                rec.alpha_opt = Some(w[0]);
                rec.lambda_opt = (w[0] > 0.0).then(|| w[1] / w[0]);
                rec.lambda = rec.lambda_opt;
                rec.beta_opt = w.get(2).copied();
            }
        }
        if let Some(gt) = gt {
            rec.dist_to_gt = Some(vecops::norm(&vecops::sub(gt, &state.mu)));
        }
        if config.track_psnr {
            if let Some(gt) = gt {
                rec.psnr_vs_gt = metrics::psnr(gt, &state.mu, None).ok();
            }
        }
        state.trace.push(rec);
        state.k += 1;
    }
    Ok(RunOutput {
        reconstruction: state.mu,
        trace: state.trace,
    })
}
