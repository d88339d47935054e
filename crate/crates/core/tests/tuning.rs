use optdiff::experiment::{build_benchmark, resolve_schedule, Benchmark};
use optdiff::sampler::{LambdaMode, SamplerConfig, StepSize, WeightPolicy};
use optdiff::tuning::{self, argmax_cell, mean_std, CellResult, GridSpec};
use optdiff::ExperimentConfig;
use proptest::prelude::*;

const SMALL: &str = "\
height = 16
task = deblur
op.kernel_size = 3
op.kernel_var = 4
data.kind = gmm
data.components = 4
data.count = 3
data.train_count = 32
sampler.steps = 15
";

fn bench() -> (ExperimentConfig, Benchmark) {
    let cfg = ExperimentConfig::from_text(SMALL).unwrap();
    let b = build_benchmark(&cfg).unwrap();
    (cfg, b)
}

fn tau_grid() -> GridSpec {
    GridSpec::new(vec![
        ("tau_max".into(), vec![0.05, 0.2, 0.5]),
        ("tau_min".into(), vec![0.02, 0.1]),
    ])
    .unwrap()
}

#[test]
fn schedule_tuning_ignores_sampler_settings() {
    let (cfg, b) = bench();
    let n = cfg.sampler.n_steps;
    let a = SamplerConfig {
        n_steps: n,
        ..SamplerConfig::default()
    };
    let other = SamplerConfig {
        n_steps: n,
        lambda_mode: LambdaMode::Square(7.0),
        alpha: StepSize::LinearDecay(0.9),
        seed: a.seed,
        ..SamplerConfig::default()
    };
    let ra = tuning::tune_noise_schedule(&b.set, &b.summary, &tau_grid(), n, &a).unwrap();
    let rb = tuning::tune_noise_schedule(&b.set, &b.summary, &tau_grid(), n, &other).unwrap();
    assert_eq!(ra, rb);
    assert_eq!(ra.to_csv(), rb.to_csv());
}

#[test]
fn tuning_reports_are_deterministic() {
    let (cfg, b) = bench();
    let sched = resolve_schedule(&cfg, &b.summary, cfg.sampler.n_steps).unwrap();
    let grid = GridSpec::new(vec![
        ("alpha_hat".into(), vec![0.02, 0.1]),
        ("lambda_hat".into(), vec![0.3, 1.0, 3.0]),
    ])
    .unwrap();
    let a = tuning::tune_sampler(&b.set, &sched, &grid, &cfg.sampler).unwrap();
    let again = tuning::tune_sampler(&b.set, &sched, &grid, &cfg.sampler).unwrap();
    assert_eq!(a.to_csv(), again.to_csv());
    let best = a.best_cell().unwrap();
    assert!(a
        .cells
        .iter()
        .filter(|c| c.valid)
        .all(|c| c.mean_psnr <= best.mean_psnr));
}

// The oracle fits each step to the ground truth, so no scheduled cell should beat it.
#[test]
fn oracle_dominates_every_tuned_cell() {
    let (cfg, b) = bench();
    let sched = resolve_schedule(&cfg, &b.summary, cfg.sampler.n_steps).unwrap();
    let grid = GridSpec::new(vec![
        ("alpha_hat".into(), tuning::log_space(0.01, 1.0, 5)),
        ("lambda_hat".into(), tuning::log_space(0.05, 5.0, 5)),
    ])
    .unwrap();
    let report = tuning::tune_sampler(&b.set, &sched, &grid, &cfg.sampler).unwrap();
    let oracle = SamplerConfig {
        policy: WeightPolicy::Oracle,
        ..cfg.sampler.clone()
    };
    let (psnr, _) = tuning::evaluate(&b.set, &sched, &oracle).unwrap();
    let oracle_mean = mean_std(&psnr).0;
    for c in report.cells.iter().filter(|c| c.valid) {
        assert!(
            c.mean_psnr <= oracle_mean + 1e-9,
            "cell {:?}: {} dB above oracle {}",
            c.values,
            c.mean_psnr,
            oracle_mean
        );
    }
}

fn cell(values: Vec<f64>, mean_psnr: f64) -> CellResult {
    CellResult {
        values,
        psnr: vec![mean_psnr],
        ssim: vec![0.0],
        mean_psnr,
        std_psnr: 0.0,
        mean_ssim: 0.0,
        valid: true,
    }
}

proptest! {
    // Grid cells are enumerated lexicographically, so the earliest maximal
    // cell is the lexicographically smallest one.
    #[test]
    fn argmax_prefers_the_smallest_tied_cell(
        a in prop::collection::vec(-5.0f64..5.0, 1..5),
        b in prop::collection::vec(-5.0f64..5.0, 1..5),
        scores in prop::collection::vec(0usize..3, 25),
        invalid in prop::collection::vec(any::<bool>(), 25),
    ) {
        let mut a = a;
        let mut b = b;
        a.sort_by(f64::total_cmp);
        a.dedup();
        b.sort_by(f64::total_cmp);
        b.dedup();
        let grid = GridSpec::new(vec![("a".into(), a), ("b".into(), b)]).unwrap();
        let cells: Vec<CellResult> = (0..grid.n_cells())
            .map(|i| {
                let mut c = cell(grid.cell(i), scores[i] as f64);
                c.valid = !invalid[i];
                c
            })
            .collect();
        for w in cells.windows(2) {
            prop_assert!(w[0].values.partial_cmp(&w[1].values) == Some(std::cmp::Ordering::Less));
        }
        // Oracle: maximal score, then smallest cell coordinates.
        let want = cells
            .iter()
            .enumerate()
            .filter(|(_, c)| c.valid)
            .max_by(|(_, x), (_, y)| {
                x.mean_psnr
                    .total_cmp(&y.mean_psnr)
                    .then_with(|| y.values.partial_cmp(&x.values).unwrap())
            })
            .map(|(i, _)| i);
        prop_assert_eq!(argmax_cell(&cells), want);
    }

    #[test]
    fn population_std_matches_definition(v in prop::collection::vec(-100.0f64..100.0, 1..50)) {
        let (m, s) = mean_std(&v);
        let n = v.len() as f64;
        let mean = v.iter().sum::<f64>() / n;
        let var = v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n;
        prop_assert!((m - mean).abs() <= 1e-12 * (1.0 + mean.abs()));
        prop_assert!((s - var.sqrt()).abs() <= 1e-12 * (1.0 + var.sqrt()));
    }
}
