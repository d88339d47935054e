use nalgebra::DMatrix;
use optdiff::priors::{GaussianPrior, GmmPrior, Prior};
use optdiff::schedule::CovMatrix;
use optdiff::synthetic::power_law_eigenvalues;
use proptest::prelude::*;

fn log_uniform(lo: f64, hi: f64) -> impl Strategy<Value = f64> {
    (lo.log10()..hi.log10()).prop_map(|e| 10f64.powf(e))
}

fn vec_of(n: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-2.0f64..2.0, n)
}

fn dense_gaussian(d: usize, b: &[f64], mean: Vec<f64>) -> GaussianPrior {
    let b = DMatrix::from_column_slice(d, d, b);
    let m = &b * b.transpose() + DMatrix::identity(d, d) * 1e-3;
    GaussianPrior::dense(mean, CovMatrix::new((&m + m.transpose()) * 0.5).unwrap()).unwrap()
}

fn gmm(d: usize, means: &[f64], var: f64) -> GmmPrior {
    let k = means.len() / d;
    let means: Vec<Vec<f64>> = means.chunks(d).map(|c| c.to_vec()).collect();
    let w: Vec<f64> = (1..=k).map(|i| i as f64).collect();
    let total: f64 = w.iter().sum();
    GmmPrior::new(w.iter().map(|v| v / total).collect(), means, vec![var; k]).unwrap()
}

fn check_identity(p: &dyn Prior, x: &[f64], sigma: f64) -> Result<(), TestCaseError> {
    let den = p.denoise(x, sigma).unwrap();
    let score = p.score(x, sigma).unwrap();
    let s2 = sigma * sigma;
    for i in 0..x.len() {
        let want = x[i] + s2 * score[i];
        prop_assert!(
            (den[i] - want).abs() <= 1e-10 * (1.0 + den[i].abs()),
            "entry {}: {} vs {}",
            i,
            den[i],
            want
        );
    }
    Ok(())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn score_denoiser_identity_diagonal(
        x in vec_of(6),
        eig in prop::collection::vec(log_uniform(1e-4, 1e1), 6),
        mean in vec_of(6),
        sigma in log_uniform(1e-3, 1e2),
    ) {
        let p = GaussianPrior::diagonal(mean, eig).unwrap();
        check_identity(&p, &x, sigma)?;
    }

    #[test]
    fn score_denoiser_identity_dft(x in vec_of(48), mean in -1.0f64..1.0, sigma in log_uniform(1e-3, 1e2)) {
        let eig = power_law_eigenvalues(6, 8, 1e-2, 2.0, 0.05, 1e-3);
        let p = GaussianPrior::dft(vec![mean; 48], 6, 8, eig).unwrap();
        check_identity(&p, &x, sigma)?;
    }

    #[test]
    fn score_denoiser_identity_dense(
        x in vec_of(5),
        b in prop::collection::vec(-1.0f64..1.0, 25),
        mean in vec_of(5),
        sigma in log_uniform(1e-3, 1e2),
    ) {
        check_identity(&dense_gaussian(5, &b, mean), &x, sigma)?;
    }

    #[test]
    fn score_denoiser_identity_gmm(
        x in vec_of(4),
        means in prop::collection::vec(-2.0f64..2.0, 4 * 3),
        var in log_uniform(1e-4, 1.0),
        sigma in log_uniform(1e-3, 1e2),
    ) {
        check_identity(&gmm(4, &means, var), &x, sigma)?;
    }

    #[test]
    fn responsibilities_are_normalized(
        x in prop::collection::vec(-50.0f64..50.0, 4),
        means in prop::collection::vec(-2.0f64..2.0, 4 * 5),
        var in log_uniform(1e-6, 1.0),
        sigma in log_uniform(1e-3, 1e2),
    ) {
        let r = gmm(4, &means, var).responsibilities(&x, sigma).unwrap();
        prop_assert!(r.iter().all(|v| v.is_finite() && *v >= 0.0));
        prop_assert!((r.iter().sum::<f64>() - 1.0).abs() <= 1e-14);
    }

    // Responsibilities follow Bayes' rule on the smoothed component densities.
    #[test]
    fn responsibilities_match_direct_bayes(
        x in prop::collection::vec(-1.0f64..1.0, 3),
        means in prop::collection::vec(-1.0f64..1.0, 3 * 3),
        sigma in 0.3f64..2.0,
    ) {
        let var = 0.5;
        let p = gmm(3, &means, var);
        let s = var + sigma * sigma;
        let lik: Vec<f64> = p.means().iter().zip(p.weights()).map(|(m, w)| {
            let d2: f64 = m.iter().zip(&x).map(|(a, b)| (a - b) * (a - b)).sum();
            w * (-d2 / (2.0 * s)).exp()
        }).collect();
        let z: f64 = lik.iter().sum();
        let r = p.responsibilities(&x, sigma).unwrap();
        for (a, b) in r.iter().zip(&lik) {
            prop_assert!((a - b / z).abs() <= 1e-12);
        }
    }

    #[test]
    fn gaussian_denoiser_contracts_toward_mean(
        x in vec_of(5),
        b in prop::collection::vec(-1.0f64..1.0, 25),
        mean in vec_of(5),
        sigma in log_uniform(1e-3, 1e2),
    ) {
        let p = dense_gaussian(5, &b, mean.clone());
        let den = p.denoise(&x, sigma).unwrap();
        let dist = |v: &[f64]| v.iter().zip(&mean).map(|(a, m)| (a - m) * (a - m)).sum::<f64>().sqrt();
        prop_assert!(dist(&den) <= dist(&x) * (1.0 + 1e-12));
    }
}

#[test]
fn dft_prior_matches_dense_equivalent() {
    // The same stationary prior written densely: Σ = Fᴴ diag(λ) F on real images.
    let (h, w) = (4, 5);
    let n = h * w;
    let eig = power_law_eigenvalues(h, w, 1e-2, 2.0, 0.05, 1e-3);
    let mean = vec![0.3; n];
    let dft = GaussianPrior::dft(mean.clone(), h, w, eig.clone()).unwrap();
    let mut cov = DMatrix::zeros(n, n);
    for a in 0..n {
        for b in 0..n {
            let (ra, ca) = (a / w, a % w);
            let (rb, cb) = (b / w, b % w);
            let mut acc = 0.0;
            for u in 0..h {
                for v in 0..w {
                    let ph = 2.0
                        * std::f64::consts::PI
                        * ((u as f64) * (ra as f64 - rb as f64) / h as f64
                            + (v as f64) * (ca as f64 - cb as f64) / w as f64);
                    acc += eig[u * w + v] * ph.cos();
                }
            }
            cov[(a, b)] = acc / n as f64;
        }
    }
    let dense = GaussianPrior::dense(mean, CovMatrix::new((&cov + cov.transpose()) * 0.5).unwrap()).unwrap();
    let x: Vec<f64> = (0..n).map(|i| (i as f64 * 0.37).sin()).collect();
    for sigma in [1e-3, 0.1, 3.0] {
        let a = dft.denoise(&x, sigma).unwrap();
        let b = dense.denoise(&x, sigma).unwrap();
        for (p, q) in a.iter().zip(&b) {
            assert!((p - q).abs() <= 1e-9, "{p} vs {q} at sigma {sigma}");
        }
    }
}
