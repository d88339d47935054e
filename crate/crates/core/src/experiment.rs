//! Experiment orchestration: builds a synthetic benchmark from a config,
//! runs one command, and writes its artifacts.
//!
//! Every file goes through a temp-then-rename write. A `manifest.csv`
//! listing the files written is produced last, with status `complete` or
//! `incomplete` when the command failed part way.

use std::path::{Path, PathBuf};
use std::sync::Arc;

use rand::Rng as _;
use rayon::prelude::*;

use crate::config::{DataSpec, ExperimentConfig, ScheduleSource, SweepVariant};
use crate::error::{Error, Result};
use crate::io::{fmt_num, write_atomic, ArrayFile};
use crate::metrics;
use crate::optimal::PolyCoeffs;
use crate::priors::Prior;
use crate::rng;
use crate::sampler::{self, LambdaMode, Momentum, Precondition, SamplerConfig, WeightPolicy};
use crate::schedule::{build_schedule, NoiseSchedule, ToleranceParams};
use crate::spectral::{self, Image, RadialPSD};
use crate::synthetic::{self, Task};
use crate::tuning::{self, mean_std, Endpoint, GridSpec, ScheduleSetup, SpectralSummary, TuningSet};

/// A tuning set together with the spectral statistics of its training draws.
#[derive(Debug, Clone)]
pub struct Benchmark {
    pub set: TuningSet,
    pub psd: RadialPSD,
    pub summary: SpectralSummary,
}

fn sub(seed: u64, k: u64) -> u64 {
    rng::substream(seed, k).random()
}

/// Builds prior, ground truths, training draws and measurements. All
/// randomness derives from `data.seed`.
pub fn build_benchmark(cfg: &ExperimentConfig) -> Result<Benchmark> {
    let (h, w) = (cfg.height, cfg.width);
    let s = cfg.data_seed;
    let (prior, truths, train): (Arc<dyn Prior>, _, _) = match &cfg.data {
        DataSpec::Gmm {
            phantom,
            components,
            variance,
        } => {
            let g = synthetic::phantom_gmm(*phantom, h, w, *components, *variance, sub(s, 0))?;
            let truths = synthetic::sample_gmm(&g, cfg.count, sub(s, 1));
            let train = synthetic::sample_gmm(&g, cfg.train_count, sub(s, 2));
            (Arc::new(g), truths, train)
        }
        DataSpec::Wss {
            mean,
            amplitude,
            exponent,
            r0,
            floor,
        } => {
            let eig = synthetic::power_law_eigenvalues(h, w, *amplitude, *exponent, *r0, *floor);
            let truths = synthetic::sample_wss(h, w, *mean, &eig, cfg.count, sub(s, 1));
            let train = synthetic::sample_wss(h, w, *mean, &eig, cfg.train_count, sub(s, 2));
            (Arc::new(synthetic::wss_gaussian(h, w, *mean, eig)?), truths, train)
        }
    };
    let op = cfg.task.operator(h, w, sub(s, 3))?;
    let problems = synthetic::measure_all(&op, &truths, cfg.eta_var, sub(s, 4))?;
    let bins = cfg.schedule.n_bins.unwrap_or_else(|| spectral::default_bins(h, w));
    let psd = synthetic::psd_of(&train, h, w, bins)?;
    let cutoff = cfg.schedule.lf_cutoff.unwrap_or_else(|| cfg.task.default_lf_cutoff(h));
    let summary = SpectralSummary::from_psd(&psd, cutoff, cfg.schedule.tail_fraction)?;
    let set = TuningSet::new(problems, prior, (h, w))?.with_peak(cfg.peak);
    Ok(Benchmark { set, psd, summary })
}

/// The configured schedule resampled to `n_steps`.
pub fn resolve_schedule(cfg: &ExperimentConfig, summary: &SpectralSummary, n_steps: usize) -> Result<NoiseSchedule> {
    match cfg.schedule.source {
        ScheduleSource::Explicit { sigma_max, sigma_min } => {
            build_schedule(sigma_max, sigma_min, n_steps, cfg.schedule.rho)
        }
        ScheduleSource::Tolerance {
            tau_max,
            tau_min,
            high_snr,
        } => summary
            .schedule(
                ToleranceParams::new(tau_max, tau_min)?,
                n_steps,
                cfg.schedule.rho,
                high_snr,
            )?
            .ok_or_else(|| {
                Error::param(
                    "schedule",
                    format!("tolerances ({tau_max}, {tau_min}) give no valid schedule for this spectrum"),
                )
            }),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Command {
    Schedule,
    Solve,
    TuneSchedule,
    TuneSampler,
    SweepLambda,
    SweepSchedule,
    Ablate,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Command::Schedule => "schedule",
            Command::Solve => "solve",
            Command::TuneSchedule => "tune-schedule",
            Command::TuneSampler => "tune-sampler",
            Command::SweepLambda => "sweep-lambda",
            Command::SweepSchedule => "sweep-schedule",
            Command::Ablate => "ablate",
        }
    }
}

struct Outputs {
    dir: PathBuf,
    files: Vec<String>,
}

impl Outputs {
    fn new(dir: &Path) -> Result<Self> {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        Ok(Outputs {
            dir: dir.to_path_buf(),
            files: Vec::new(),
        })
    }

    fn write(&mut self, name: &str, bytes: &[u8]) -> Result<()> {
        write_atomic(&self.dir.join(name), bytes)?;
        self.files.push(name.to_string());
        Ok(())
    }

    fn finish(&self, cmd: Command, status: &str) -> Result<()> {
        let mut s = format!("command,{}\nstatus,{status}\nfile\n", cmd.name());
        for f in &self.files {
            s.push_str(f);
            s.push('\n');
        }
        write_atomic(&self.dir.join("manifest.csv"), s.as_bytes())
    }
}

/// Runs `cmd` and writes its artifacts into `out`. Returns a short
/// human-readable report.
pub fn run_command(cmd: Command, cfg: &ExperimentConfig, out: &Path) -> Result<String> {
    cfg.validate()?;
    let mut o = Outputs::new(out)?;
    let result = match cmd {
        Command::Schedule => cmd_schedule(cfg, &mut o),
        Command::Solve => solve(cfg, &mut o),
        Command::TuneSchedule => cmd_tune_schedule(cfg, &mut o),
        Command::TuneSampler => cmd_tune_sampler(cfg, &mut o),
        Command::SweepLambda => cmd_sweep_lambda(cfg, &mut o),
        Command::SweepSchedule => cmd_sweep_schedule(cfg, &mut o),
        Command::Ablate => cmd_ablate(cfg, &mut o),
    };
    match result {
        Ok(msg) => {
            o.finish(cmd, "complete")?;
            Ok(msg)
        }
        Err(e) => {
            // The original error matters more than a failed manifest write.
            let _ = o.finish(cmd, "incomplete");
            Err(e)
        }
    }
}

fn seeded(cfg: &ExperimentConfig, seed: u64) -> SamplerConfig {
    SamplerConfig {
        seed,
        ..cfg.sampler.clone()
    }
}

fn cmd_schedule(cfg: &ExperimentConfig, o: &mut Outputs) -> Result<String> {
    let b = build_benchmark(cfg)?;
    let s = resolve_schedule(cfg, &b.summary, cfg.sampler.n_steps)?;
    o.write("psd.csv", b.psd.to_csv().as_bytes())?;
    o.write("schedule.csv", s.to_csv().as_bytes())?;
    let sm = &b.summary;
    let stats = format!(
        "quantity,value\nhf_nu_max,{}\nsignal_nu_max,{}\nsigma_s_sq,{}\nsigma_max,{}\nsigma_min,{}\n",
        fmt_num(sm.hf_nu_max),
        fmt_num(sm.signal_nu_max),
        fmt_num(sm.sigma_s_sq),
        fmt_num(s.sigma_max()),
        fmt_num(s.sigma_min())
    );
    o.write("spectral_summary.csv", stats.as_bytes())?;
    Ok(format!(
        "sigma_max {} sigma_min {} over {} steps",
        fmt_num(s.sigma_max()),
        fmt_num(s.sigma_min()),
        s.len()
    ))
}

const SUMMARY_HEADER: &str = "cell,seed,n_images,mean_psnr,std_psnr,mean_ssim,std_ssim,nfe\n";

fn summary_row(cell: &str, seed: u64, psnr: &[f64], ssim: &[f64], nfe: usize) -> String {
    let (mp, sp) = mean_std(psnr);
    let (ms, ss) = mean_std(ssim);
    format!(
        "{cell},{seed},{},{},{},{},{},{nfe}\n",
        psnr.len(),
        fmt_num(mp),
        fmt_num(sp),
        fmt_num(ms),
        fmt_num(ss)
    )
}

/// Reconstructs every problem for every seed; writes reconstructions,
/// traces, per-image metrics and a per-seed summary.
pub fn run_experiment(cfg: &ExperimentConfig, out: &Path) -> Result<String> {
    run_command(Command::Solve, cfg, out)
}

fn solve(cfg: &ExperimentConfig, o: &mut Outputs) -> Result<String> {
    let b = build_benchmark(cfg)?;
    let n = cfg.sampler.n_steps;
    let sched = resolve_schedule(cfg, &b.summary, n)?;
    o.write("schedule.csv", sched.to_csv().as_bytes())?;
    let (h, w) = (cfg.height, cfg.width);
    let mut metrics_csv = String::from("seed,image,psnr,ssim,nfe\n");
    let mut summary = String::from(SUMMARY_HEADER);
    for &seed in &cfg.seeds {
        let sc = seeded(cfg, seed);
        let runs: Vec<Result<sampler::RunOutput>> = b
            .set
            .problems
            .par_iter()
            .enumerate()
            .map(|(i, p)| {
                let c = SamplerConfig {
                    seed: tuning::problem_seed(seed, i),
                    ..sc.clone()
                };
                sampler::run(p, b.set.prior.as_ref(), &sched, &c)
            })
            .collect();
        let (mut ps, mut ss) = (Vec::new(), Vec::new());
        for (i, r) in runs.into_iter().enumerate() {
            let r = r?;
            let gt = b.set.problems[i]
                .ground_truth
                .as_deref()
                .ok_or(Error::OracleUnavailable)?;
            let psnr = metrics::psnr(gt, &r.reconstruction, cfg.peak)?;
            let ssim = match (
                Image::new(h, w, gt.to_vec()),
                Image::new(h, w, r.reconstruction.clone()),
            ) {
                (Ok(a), Ok(e)) => metrics::ssim(&a, &e, cfg.peak).unwrap_or(f64::NAN),
                _ => f64::NAN,
            };
            let arr = ArrayFile::new(vec![h, w], r.reconstruction)?;
            o.write(&format!("recon_s{seed}_{i:03}.optd"), &arr.to_bytes())?;
            o.write(
                &format!("trace_s{seed}_{i:03}.csv"),
                sampler::trace_to_csv(&r.trace).as_bytes(),
            )?;
            metrics_csv.push_str(&format!(
                "{seed},{i},{},{},{}\n",
                fmt_num(psnr),
                fmt_num(ssim),
                sc.nfe()
            ));
            ps.push(psnr);
            ss.push(ssim);
        }
        summary.push_str(&summary_row("solve", seed, &ps, &ss, sc.nfe()));
    }
    o.write("metrics.csv", metrics_csv.as_bytes())?;
    o.write("summary.csv", summary.as_bytes())?;
    Ok(summary)
}

fn first_seed(cfg: &ExperimentConfig) -> u64 {
    cfg.seeds[0]
}

fn cmd_tune_schedule(cfg: &ExperimentConfig, o: &mut Outputs) -> Result<String> {
    let b = build_benchmark(cfg)?;
    let grid = GridSpec::new(vec![
        ("tau_max".into(), cfg.tune.tau_max.clone()),
        ("tau_min".into(), cfg.tune.tau_min.clone()),
    ])?;
    let n = cfg.sampler.n_steps;
    let rep = tuning::tune_noise_schedule(&b.set, &b.summary, &grid, n, &seeded(cfg, first_seed(cfg)))?;
    o.write("tune_schedule.csv", rep.to_csv().as_bytes())?;
    let best = rep
        .best_cell()
        .ok_or_else(|| Error::param("tune.tau_max", "no tolerance pair gives a valid schedule"))?;
    let s = b
        .summary
        .schedule(
            ToleranceParams::new(best.values[0], best.values[1])?,
            n,
            cfg.schedule.rho,
            false,
        )?
        .ok_or_else(|| Error::param("tune", "best cell lost its schedule"))?;
    o.write("best_schedule.csv", s.to_csv().as_bytes())?;
    Ok(format!(
        "best tau_max {} tau_min {} mean PSNR {}",
        fmt_num(best.values[0]),
        fmt_num(best.values[1]),
        fmt_num(best.mean_psnr)
    ))
}

fn cmd_tune_sampler(cfg: &ExperimentConfig, o: &mut Outputs) -> Result<String> {
    let b = build_benchmark(cfg)?;
    let sched = resolve_schedule(cfg, &b.summary, cfg.sampler.n_steps)?;
    let template = seeded(cfg, first_seed(cfg));
    let (alpha, lambda) = match cfg.tune.center_decades {
        None => (cfg.tune.alpha.clone(), cfg.tune.lambda.clone()),
        Some(d) => {
            let (a, l) = tuning::oracle_reference(&b.set, &sched, &template)?;
            (
                tuning::centered_grid(a, d, cfg.tune.alpha.len())?,
                tuning::centered_grid(l, d, cfg.tune.lambda.len())?,
            )
        }
    };
    let grid = GridSpec::new(vec![("alpha_hat".into(), alpha), ("lambda_hat".into(), lambda)])?;
    let rep = tuning::tune_sampler(&b.set, &sched, &grid, &template)?;
    o.write("tune_sampler.csv", rep.to_csv().as_bytes())?;
    let best = rep.best_cell().ok_or_else(|| Error::param("tune", "no valid cell"))?;
    Ok(format!(
        "best alpha_hat {} lambda_hat {} mean PSNR {}",
        fmt_num(best.values[0]),
        fmt_num(best.values[1]),
        fmt_num(best.mean_psnr)
    ))
}

fn cmd_sweep_lambda(cfg: &ExperimentConfig, o: &mut Outputs) -> Result<String> {
    let b = build_benchmark(cfg)?;
    let sched = resolve_schedule(cfg, &b.summary, cfg.sampler.n_steps)?;
    let modes = cfg
        .sweep
        .modes
        .iter()
        .map(|m| LambdaMode::parse(m, 1.0))
        .collect::<Result<Vec<_>>>()?;
    let sw = tuning::invariance_sweep_lambda(
        &b.set,
        &sched,
        &cfg.sweep.lambda,
        &cfg.sweep.intervals,
        &modes,
        &seeded(cfg, first_seed(cfg)),
    )?;
    o.write("sweep_lambda.csv", sw.to_csv().as_bytes())?;
    let mut msg = String::new();
    for m in &modes {
        let idx: Vec<String> = cfg
            .sweep
            .intervals
            .iter()
            .map(|iv| {
                sw.argmax(&format!("{}-{}", iv.start, iv.end), m.name())
                    .map_or("-".into(), |i| i.to_string())
            })
            .collect();
        msg.push_str(&format!("{} argmax cells per interval: {}\n", m.name(), idx.join(" ")));
    }
    Ok(msg)
}

/// Copies of `cfg` for each sweep variant, with their setup names.
pub fn variant_configs(cfg: &ExperimentConfig) -> Result<Vec<(String, ExperimentConfig)>> {
    match &cfg.sweep.variant {
        None => Err(Error::param("sweep", "set sweep.calib or sweep.floor")),
        Some(SweepVariant::Calib(widths)) => widths
            .iter()
            .map(|&c| {
                let Task::Mri { kind, acceleration, .. } = cfg.task else {
                    return Err(Error::param("sweep.calib", "needs task = mri"));
                };
                let mut v = cfg.clone();
                v.task = Task::Mri {
                    kind,
                    acceleration,
                    calib: c,
                };
                Ok((format!("calib={c}"), v))
            })
            .collect(),
        Some(SweepVariant::Floor(floors)) => floors
            .iter()
            .map(|&f| {
                let DataSpec::Wss {
                    mean,
                    amplitude,
                    exponent,
                    r0,
                    ..
                } = cfg.data
                else {
                    return Err(Error::param("sweep.floor", "needs data.kind = wss"));
                };
                let mut v = cfg.clone();
                v.data = DataSpec::Wss {
                    mean,
                    amplitude,
                    exponent,
                    r0,
                    floor: f,
                };
                Ok((format!("floor={}", fmt_num(f)), v))
            })
            .collect(),
    }
}

fn cmd_sweep_schedule(cfg: &ExperimentConfig, o: &mut Outputs) -> Result<String> {
    let setups = variant_configs(cfg)?
        .into_iter()
        .map(|(name, c)| {
            let b = build_benchmark(&c)?;
            Ok(ScheduleSetup {
                name,
                set: b.set,
                summary: b.summary,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let endpoint = match cfg.sweep.endpoint.as_str() {
        "start" => Endpoint::Start {
            tau_min: cfg.sweep.fixed_tau,
        },
        _ => Endpoint::Stop {
            tau_max: cfg.sweep.fixed_tau,
        },
    };
    let sw = tuning::invariance_sweep_schedule(
        &setups,
        endpoint,
        &cfg.sweep.tau,
        &cfg.sweep.sigma,
        &seeded(cfg, first_seed(cfg)),
    )?;
    o.write("sweep_schedule.csv", sw.to_csv().as_bytes())?;
    let (tn, sn) = match endpoint {
        Endpoint::Start { .. } => ("tau_max", "sigma_max"),
        Endpoint::Stop { .. } => ("tau_min", "sigma_min_sq"),
    };
    let mut msg = String::new();
    for st in &setups {
        let cell = |p| sw.argmax(&st.name, p).map_or("-".into(), |i: usize| i.to_string());
        msg.push_str(&format!(
            "{}: {tn} argmax cell {}, {sn} argmax cell {}\n",
            st.name,
            cell(tn),
            cell(sn)
        ));
    }
    Ok(msg)
}

/// Sampler settings for a named optimizer of the ablation.
pub fn ablation_config(base: &SamplerConfig, optimizer: &str, beta: f64, oracle: bool) -> Result<SamplerConfig> {
    let policy = if oracle {
        WeightPolicy::Oracle
    } else {
        WeightPolicy::Scheduled
    };
    let (momentum, precondition) = match optimizer {
        "vanilla" => (Momentum::Off, Precondition::Off),
        "momentum" if oracle => (Momentum::Optimal, Precondition::Off),
        "momentum" => (Momentum::Fixed(beta), Precondition::Off),
        "precond" => (Momentum::Off, Precondition::Polynomial(PolyCoeffs::Auto)),
        other => return Err(Error::param("optimizer", format!("unknown `{other}`"))),
    };
    let c = SamplerConfig {
        momentum,
        precondition,
        policy,
        ..base.clone()
    };
    c.validate()?;
    Ok(c)
}

fn cmd_ablate(cfg: &ExperimentConfig, o: &mut Outputs) -> Result<String> {
    let b = build_benchmark(cfg)?;
    let mut summary =
        String::from("optimizer,steps,instances,seed,n_images,mean_psnr,std_psnr,mean_ssim,std_ssim,nfe\n");
    for &(steps, m) in &cfg.ablate.budgets {
        let sched = resolve_schedule(cfg, &b.summary, steps)?;
        for opt in &cfg.ablate.optimizers {
            for &seed in &cfg.seeds {
                let base = SamplerConfig {
                    n_steps: steps,
                    noise_instances: m,
                    ..seeded(cfg, seed)
                };
                let c = ablation_config(&base, opt, cfg.ablate.momentum_beta, cfg.ablate.oracle)?;
                let (p, s) = tuning::evaluate(&b.set, &sched, &c)?;
                summary.push_str(&format!("{opt},{steps},{m},"));
                summary.push_str(summary_row("", seed, &p, &s, c.nfe()).trim_start_matches(','));
            }
        }
    }
    o.write("ablate.csv", summary.as_bytes())?;
    Ok(summary)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny() -> ExperimentConfig {
        ExperimentConfig::from_text(
            "height = 12\ndata.kind = wss\ndata.count = 2\ndata.train_count = 8\nsampler.steps = 6\nseeds = 1,2\n\
             schedule.source = explicit\nschedule.sigma_max = 1\nschedule.sigma_min = 0.01\n",
        )
        .unwrap()
    }

    #[test]
    fn solve_writes_two_summary_rows_for_two_seeds() {
        let dir = tempfile::tempdir().unwrap();
        run_command(Command::Solve, &tiny(), dir.path()).unwrap();
        let s = std::fs::read_to_string(dir.path().join("summary.csv")).unwrap();
        assert_eq!(s.lines().count(), 3);
        let m = std::fs::read_to_string(dir.path().join("manifest.csv")).unwrap();
        assert!(m.contains("status,complete"));
        assert!(dir.path().join("recon_s2_001.optd").exists());
    }

    #[test]
    fn ablation_budgets_report_matching_nfe() {
        let mut c = tiny();
        c.ablate.budgets = vec![(4, 5), (20, 1)];
        c.ablate.optimizers = vec!["vanilla".into()];
        c.seeds = vec![1];
        let dir = tempfile::tempdir().unwrap();
        run_command(Command::Ablate, &c, dir.path()).unwrap();
        let s = std::fs::read_to_string(dir.path().join("ablate.csv")).unwrap();
        let nfe: Vec<&str> = s.lines().skip(1).map(|l| l.rsplit(',').next().unwrap()).collect();
        assert_eq!(nfe, vec!["20", "20"]);
    }

    #[test]
    fn failure_marks_manifest_incomplete() {
        let mut c = tiny();
        c.schedule.source = ScheduleSource::Tolerance {
            tau_max: 0.5,
            tau_min: 0.5,
            high_snr: false,
        };
        c.sweep.variant = None;
        let dir = tempfile::tempdir().unwrap();
        assert!(run_command(Command::SweepSchedule, &c, dir.path()).is_err());
        let m = std::fs::read_to_string(dir.path().join("manifest.csv")).unwrap();
        assert!(m.contains("status,incomplete"));
    }
}
