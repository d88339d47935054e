//! Experiment configuration: flat `key = value` lines with dotted section
//! names, `#` comments, and unknown or repeated keys rejected.

use std::collections::BTreeMap;
use std::ops::Range;
use std::path::Path;

use crate::error::{Error, Result};
use crate::linops::MaskKind;
use crate::optimal::PolyCoeffs;
use crate::phantom::PhantomKind;
use crate::sampler::{Init, LambdaMode, Momentum, Precondition, SamplerConfig, StepSize, WeightPolicy};
use crate::synthetic::Task;
use crate::tuning;

/// Parsed but untyped entries, keeping line numbers for error messages.
#[derive(Debug, Clone, Default)]
pub struct RawConfig {
    entries: BTreeMap<String, (usize, String)>,
}

impl RawConfig {
    pub fn parse(text: &str) -> Result<Self> {
        let mut entries = BTreeMap::new();
        for (i, raw) in text.lines().enumerate() {
            let line_no = i + 1;
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line.split_once('=').ok_or_else(|| Error::Config {
                line: line_no,
                reason: "expected `key = value`".into(),
            })?;
            let key = k.trim().to_string();
            let valid_key = !key.is_empty()
                && key.split('.').count() <= 2
                && key
                    .split('.')
                    .all(|p| !p.is_empty() && p.chars().all(|c| c.is_ascii_alphanumeric() || c == '_'));
            if !valid_key {
                return Err(Error::Config {
                    line: line_no,
                    reason: format!("bad key `{key}`"),
                });
            }
            if entries.insert(key.clone(), (line_no, v.trim().to_string())).is_some() {
                return Err(Error::Config {
                    line: line_no,
                    reason: format!("duplicate key `{key}`"),
                });
            }
        }
        Ok(RawConfig { entries })
    }

    /// Override or add an entry (command-line style).
    pub fn set(&mut self, key: &str, value: &str) {
        self.entries.insert(key.to_string(), (0, value.to_string()));
    }

    fn take(&mut self, key: &str) -> Option<(usize, String)> {
        self.entries.remove(key)
    }

    fn finish(self) -> Result<()> {
        match self.entries.into_iter().next() {
            Some((k, (line, _))) => Err(Error::Config {
                line,
                reason: format!("unknown key `{k}`"),
            }),
            None => Ok(()),
        }
    }
}

fn bad(line: usize, key: &str, reason: impl std::fmt::Display) -> Error {
    Error::Config {
        line,
        reason: format!("`{key}`: {reason}"),
    }
}

struct Reader {
    raw: RawConfig,
}

impl Reader {
    fn parsed<T: std::str::FromStr>(&mut self, key: &str, default: T) -> Result<T> {
        match self.raw.take(key) {
            None => Ok(default),
            Some((line, v)) => v.parse().map_err(|_| bad(line, key, format!("cannot parse `{v}`"))),
        }
    }

    fn opt_f64(&mut self, key: &str) -> Result<Option<f64>> {
        match self.raw.take(key) {
            None => Ok(None),
            Some((line, v)) => v
                .parse()
                .map(Some)
                .map_err(|_| bad(line, key, format!("cannot parse `{v}`"))),
        }
    }

    fn string(&mut self, key: &str, default: &str) -> (usize, String) {
        self.raw.take(key).unwrap_or((0, default.to_string()))
    }

    fn list<T: std::str::FromStr>(&mut self, key: &str, default: Vec<T>) -> Result<Vec<T>> {
        match self.raw.take(key) {
            None => Ok(default),
            Some((line, v)) => v
                .split(',')
                .map(|s| {
                    s.trim()
                        .parse()
                        .map_err(|_| bad(line, key, format!("cannot parse `{s}`")))
                })
                .collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum DataSpec {
    /// Mixture prior with phantom means; ground truth drawn from it.
    Gmm {
        phantom: PhantomKind,
        components: usize,
        variance: f64,
    },
    /// Stationary Gaussian with power-law DFT eigenvalues.
    Wss {
        mean: f64,
        amplitude: f64,
        exponent: f64,
        r0: f64,
        floor: f64,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub enum ScheduleSource {
    Explicit { sigma_max: f64, sigma_min: f64 },
    Tolerance { tau_max: f64, tau_min: f64, high_snr: bool },
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScheduleSpec {
    pub source: ScheduleSource,
    pub rho: f64,
    /// Overrides the task's default cutoff.
    pub lf_cutoff: Option<f64>,
    pub tail_fraction: f64,
    pub n_bins: Option<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TuneSpec {
    pub tau_max: Vec<f64>,
    pub tau_min: Vec<f64>,
    pub alpha: Vec<f64>,
    pub lambda: Vec<f64>,
    /// Center the sampler grid on the oracle medians, spanning this many decades each side.
    pub center_decades: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum SweepVariant {
    /// Vary the calibration width of an MRI mask.
    Calib(Vec<usize>),
    /// Vary the white floor of the data distribution.
    Floor(Vec<f64>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepSpec {
    pub lambda: Vec<f64>,
    pub intervals: Vec<Range<usize>>,
    pub modes: Vec<String>,
    pub endpoint: String,
    pub tau: Vec<f64>,
    pub sigma: Vec<f64>,
    pub variant: Option<SweepVariant>,
    /// Tolerance held fixed on the other end of the schedule.
    pub fixed_tau: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AblateSpec {
    pub optimizers: Vec<String>,
    /// `(steps, noise_instances)` pairs.
    pub budgets: Vec<(usize, usize)>,
    pub momentum_beta: f64,
    /// Use oracle weights for every optimizer.
    pub oracle: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub task: Task,
    pub height: usize,
    pub width: usize,
    pub data: DataSpec,
    pub count: usize,
    pub train_count: usize,
    pub data_seed: u64,
    pub eta_var: f64,
    pub schedule: ScheduleSpec,
    pub sampler: SamplerConfig,
    pub peak: Option<f64>,
    pub seeds: Vec<u64>,
    pub tune: TuneSpec,
    pub sweep: SweepSpec,
    pub ablate: AblateSpec,
}

fn parse_intervals(line: usize, s: &str) -> Result<Vec<Range<usize>>> {
    s.split(',')
        .map(|p| {
            let (a, b) = p
                .trim()
                .split_once('-')
                .ok_or_else(|| bad(line, "sweep.intervals", "expected `a-b`"))?;
            let a = a
                .trim()
                .parse()
                .map_err(|_| bad(line, "sweep.intervals", "bad start"))?;
            let b = b.trim().parse().map_err(|_| bad(line, "sweep.intervals", "bad end"))?;
            Ok(a..b)
        })
        .collect()
}

fn parse_budgets(line: usize, s: &str) -> Result<Vec<(usize, usize)>> {
    s.split(',')
        .map(|p| {
            let (a, b) = p
                .trim()
                .split_once('x')
                .ok_or_else(|| bad(line, "ablate.budgets", "expected `STEPSxINSTANCES`"))?;
            let a = a.trim().parse().map_err(|_| bad(line, "ablate.budgets", "bad steps"))?;
            let b = b
                .trim()
                .parse()
                .map_err(|_| bad(line, "ablate.budgets", "bad instances"))?;
            Ok((a, b))
        })
        .collect()
}

impl ExperimentConfig {
    pub fn from_text(text: &str) -> Result<Self> {
        Self::from_raw(RawConfig::parse(text)?)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_text(&text)
    }

    pub fn from_raw(raw: RawConfig) -> Result<Self> {
        let mut r = Reader { raw };
        let height: usize = r.parsed("height", 32)?;
        let width: usize = r.parsed("width", height)?;

        let (tl, task_name) = r.string("task", "deblur");
        let task = match task_name.as_str() {
            "mri" => {
                let (ml, mask) = r.string("op.mask", "random");
                Task::Mri {
                    kind: MaskKind::parse(&mask).map_err(|e| bad(ml, "op.mask", e))?,
                    acceleration: r.parsed("op.acceleration", 4.0)?,
                    calib: r.parsed("op.calib", 8)?,
                }
            }
            "deblur" => Task::Deblur {
                kernel_size: r.parsed("op.kernel_size", 3)?,
                kernel_var: r.parsed("op.kernel_var", 25.0)?,
            },
            "sr" => Task::SuperRes {
                factor: r.parsed("op.factor", 2)?,
            },
            "inpaint" => Task::Inpaint {
                hole: r.parsed("op.hole", height / 4)?,
            },
            other => return Err(bad(tl, "task", format!("unknown task `{other}`"))),
        };

        let (dl, kind) = r.string("data.kind", "gmm");
        let data = match kind.as_str() {
            "gmm" => {
                let (pl, ph) = r.string("data.phantom", "shapes");
                let param = r.parsed("data.phantom_param", if ph == "shapes" { 5.0 } else { 2.0 })?;
                DataSpec::Gmm {
                    phantom: PhantomKind::parse(&ph, param).map_err(|e| bad(pl, "data.phantom", e))?,
                    components: r.parsed("data.components", 8)?,
                    variance: r.parsed("data.variance", 1e-3)?,
                }
            }
            "wss" => DataSpec::Wss {
                mean: r.parsed("data.mean", 0.5)?,
                amplitude: r.parsed("data.amplitude", 1.25e-4)?,
                exponent: r.parsed("data.exponent", 2.0)?,
                r0: r.parsed("data.r0", 0.05)?,
                floor: r.parsed("data.floor", 1e-3)?,
            },
            other => return Err(bad(dl, "data.kind", format!("unknown kind `{other}`"))),
        };
        let count = r.parsed("data.count", 10)?;
        let train_count = r.parsed("data.train_count", 64)?;
        let data_seed = r.parsed("data.seed", 1)?;
        let eta_var = r.parsed("noise.eta_var", 0.005)?;

        let (sl, src) = r.string("schedule.source", "tau");
        let source = match src.as_str() {
            "explicit" => ScheduleSource::Explicit {
                sigma_max: r.parsed("schedule.sigma_max", crate::schedule::DEFAULT_SIGMA_MAX)?,
                sigma_min: r.parsed("schedule.sigma_min", crate::schedule::DEFAULT_SIGMA_MIN)?,
            },
            "tau" => ScheduleSource::Tolerance {
                tau_max: r.parsed("schedule.tau_max", 0.1)?,
                tau_min: r.parsed("schedule.tau_min", 0.05)?,
                high_snr: r.parsed("schedule.high_snr", false)?,
            },
            other => return Err(bad(sl, "schedule.source", format!("unknown source `{other}`"))),
        };
        let schedule = ScheduleSpec {
            source,
            rho: r.parsed("schedule.rho", crate::schedule::DEFAULT_RHO)?,
            lf_cutoff: r.opt_f64("schedule.lf_cutoff")?,
            tail_fraction: r.parsed("schedule.tail_fraction", 0.1)?,
            n_bins: match r.raw.take("schedule.n_bins") {
                None => None,
                Some((l, v)) => Some(v.parse().map_err(|_| bad(l, "schedule.n_bins", "not an integer"))?),
            },
        };

        let n_steps = r.parsed("sampler.steps", 100)?;
        let (ml, mode) = r.string("sampler.lambda_mode", "invariant");
        let lambda_hat = r.parsed("sampler.lambda_hat", 1.0)?;
        let lambda_mode = LambdaMode::parse(&mode, lambda_hat).map_err(|e| bad(ml, "sampler.lambda_mode", e))?;
        let alpha_v = r.parsed("sampler.alpha", 0.1)?;
        let (al, decay) = r.string("sampler.alpha_decay", "constant");
        let alpha = match decay.as_str() {
            "constant" => StepSize::Constant(alpha_v),
            "linear" => StepSize::LinearDecay(alpha_v),
            other => return Err(bad(al, "sampler.alpha_decay", format!("unknown `{other}`"))),
        };
        let (mol, mom) = r.string("sampler.momentum", "off");
        let momentum = match mom.as_str() {
            "off" => Momentum::Off,
            "optimal" => Momentum::Optimal,
            v => Momentum::Fixed(
                v.parse()
                    .map_err(|_| bad(mol, "sampler.momentum", "expected off, optimal or a number"))?,
            ),
        };
        let (pl, pre) = r.string("sampler.precondition", "off");
        let precondition = match pre.as_str() {
            "off" => Precondition::Off,
            "auto" => Precondition::Polynomial(PolyCoeffs::Auto),
            v => {
                let c: Vec<f64> = v
                    .split(',')
                    .map(|s| s.trim().parse())
                    .collect::<std::result::Result<_, _>>()
                    .map_err(|_| bad(pl, "sampler.precondition", "expected off, auto or c0,c1,c2"))?;
                let c: [f64; 3] = c
                    .try_into()
                    .map_err(|_| bad(pl, "sampler.precondition", "need three coefficients"))?;
                Precondition::Polynomial(PolyCoeffs::Explicit(c))
            }
        };
        let (il, init) = r.string("sampler.init", "adjoint");
        let init = match init.as_str() {
            "adjoint" => Init::AdjointOfY,
            "zero" => Init::Zero,
            other => return Err(bad(il, "sampler.init", format!("unknown `{other}`"))),
        };
        let (pol_l, pol) = r.string("sampler.policy", "scheduled");
        let policy = match pol.as_str() {
            "scheduled" => WeightPolicy::Scheduled,
            "oracle" => WeightPolicy::Oracle,
            other => return Err(bad(pol_l, "sampler.policy", format!("unknown `{other}`"))),
        };
        let sampler = SamplerConfig {
            n_steps,
            noise_instances: r.parsed("sampler.noise_instances", 1)?,
            lambda_mode,
            alpha,
            momentum,
            precondition,
            seed: 0,
            init,
            policy,
            track_psnr: r.parsed("sampler.track_psnr", true)?,
        };

        let (pkl, pk) = r.string("metrics.peak", "auto");
        let peak = match pk.as_str() {
            "auto" => None,
            v => Some(
                v.parse()
                    .map_err(|_| bad(pkl, "metrics.peak", "expected auto or a number"))?,
            ),
        };
        let seeds = r.list("seeds", vec![1u64])?;

        let tune = TuneSpec {
            tau_max: r.list("tune.tau_max", tuning::default_tau_grid())?,
            tau_min: r.list("tune.tau_min", tuning::default_tau_grid())?,
            alpha: r.list("tune.alpha", tuning::default_alpha_grid())?,
            lambda: r.list("tune.lambda", tuning::default_lambda_grid())?,
            center_decades: r.opt_f64("tune.center_decades")?,
        };

        let intervals = match r.raw.take("sweep.intervals") {
            None => {
                let t = n_steps / 3;
                vec![0..t, t..2 * t, 2 * t..n_steps]
            }
            Some((l, v)) => parse_intervals(l, &v)?,
        };
        let variant = match (r.raw.take("sweep.calib"), r.raw.take("sweep.floor")) {
            (Some(_), Some((l, _))) => return Err(bad(l, "sweep.floor", "conflicts with sweep.calib")),
            (Some((l, v)), None) => Some(SweepVariant::Calib(
                v.split(',')
                    .map(|s| s.trim().parse().map_err(|_| bad(l, "sweep.calib", "bad width")))
                    .collect::<Result<_>>()?,
            )),
            (None, Some((l, v))) => Some(SweepVariant::Floor(
                v.split(',')
                    .map(|s| s.trim().parse().map_err(|_| bad(l, "sweep.floor", "bad value")))
                    .collect::<Result<_>>()?,
            )),
            (None, None) => None,
        };
        let sweep = SweepSpec {
            lambda: r.list("sweep.lambda", tuning::default_lambda_grid())?,
            intervals,
            modes: r.list("sweep.modes", vec!["invariant".to_string(), "linear".to_string()])?,
            endpoint: r.string("sweep.endpoint", "start").1,
            tau: r.list("sweep.tau", tuning::default_tau_grid())?,
            sigma: r.list("sweep.sigma", tuning::log_space(0.01, 10.0, 13))?,
            variant,
            fixed_tau: r.parsed("sweep.fixed_tau", 0.1)?,
        };
        let ablate = AblateSpec {
            optimizers: r.list(
                "ablate.optimizers",
                vec!["vanilla".to_string(), "momentum".into(), "precond".into()],
            )?,
            budgets: match r.raw.take("ablate.budgets") {
                None => vec![(20, 5), (100, 1)],
                Some((l, v)) => parse_budgets(l, &v)?,
            },
            momentum_beta: r.parsed("ablate.momentum_beta", 0.5)?,
            oracle: r.parsed("ablate.oracle", false)?,
        };
        r.raw.finish()?;

        let cfg = ExperimentConfig {
            task,
            height,
            width,
            data,
            count,
            train_count,
            data_seed,
            eta_var,
            schedule,
            sampler,
            peak,
            seeds,
            tune,
            sweep,
            ablate,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.height == 0 || self.width == 0 {
            return Err(Error::param("height", "image must be nonempty"));
        }
        if self.count == 0 {
            return Err(Error::param("data.count", "must be at least 1"));
        }
        if self.train_count == 0 {
            return Err(Error::param("data.train_count", "must be at least 1"));
        }
        if !(self.eta_var >= 0.0) {
            return Err(Error::param("noise.eta_var", "must be nonnegative"));
        }
        if self.seeds.is_empty() {
            return Err(Error::param("seeds", "need at least one seed"));
        }
        if !matches!(self.sweep.endpoint.as_str(), "start" | "stop") {
            return Err(Error::param("sweep.endpoint", "expected start or stop"));
        }
        for m in &self.sweep.modes {
            LambdaMode::parse(m, 1.0)?;
        }
        for o in &self.ablate.optimizers {
            if !matches!(o.as_str(), "vanilla" | "momentum" | "precond") {
                return Err(Error::param("ablate.optimizers", format!("unknown optimizer `{o}`")));
            }
        }
        self.sampler.validate()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_parse() {
        let c = ExperimentConfig::from_text("").unwrap();
        assert_eq!(c.height, 32);
        assert_eq!(
            c.task,
            Task::Deblur {
                kernel_size: 3,
                kernel_var: 25.0
            }
        );
        assert_eq!(c.sweep.intervals, vec![0..33, 33..66, 66..100]);
        assert_eq!(c.ablate.budgets, vec![(20, 5), (100, 1)]);
    }

    #[test]
    fn values_and_comments() {
        let text = "task = mri  # comment\nop.calib = 12\nsampler.momentum = 0.3\nsampler.precondition = 1,0,0\nseeds = 1, 2\n";
        let c = ExperimentConfig::from_text(text).unwrap();
        assert!(matches!(c.task, Task::Mri { calib: 12, .. }));
        assert_eq!(c.sampler.momentum, Momentum::Fixed(0.3));
        assert_eq!(
            c.sampler.precondition,
            Precondition::Polynomial(PolyCoeffs::Explicit([1.0, 0.0, 0.0]))
        );
        assert_eq!(c.seeds, vec![1, 2]);
    }

    #[test]
    fn unknown_and_duplicate_keys_rejected() {
        let e = ExperimentConfig::from_text("height = 16\nbogus.key = 1\n").unwrap_err();
        assert!(matches!(e, Error::Config { line: 2, .. }), "{e}");
        assert!(RawConfig::parse("a = 1\na = 2\n").is_err());
        assert!(RawConfig::parse("a.b.c = 1\n").is_err());
        assert!(RawConfig::parse("novalue\n").is_err());
        // Keys of other tasks are unknown here.
        assert!(ExperimentConfig::from_text("task = deblur\nop.calib = 4\n").is_err());
    }

    #[test]
    fn invalid_values_rejected() {
        assert!(ExperimentConfig::from_text("sampler.steps = 0\n").is_err());
        assert!(ExperimentConfig::from_text("sampler.momentum = 1.0\n").is_err());
        assert!(ExperimentConfig::from_text("height = x\n").is_err());
    }
}
