use std::sync::Arc;

use optdiff::linops::{inpaint, make_mask, subsampled_dft, LinearOperator};
use optdiff::optimal::{
    apply_preconditioner, make_preconditioner, nnls_small, optimal_step, step_momentum, PolyCoeffs, UpdateBasis,
};
use optdiff::rng;
use optdiff::MaskKind;
use proptest::prelude::*;

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

fn sub(a: &[f64], b: &[f64]) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| x - y).collect()
}

fn columns(p: std::ops::RangeInclusive<usize>, d: usize) -> impl Strategy<Value = Vec<Vec<f64>>> {
    prop::collection::vec(prop::collection::vec(-1.0f64..1.0, d), p)
        .prop_filter("nonzero columns", |c| c.iter().all(|v| norm(v) > 1e-2))
}

/// `‖t − U w‖²` evaluated directly.
fn residual(cols: &[Vec<f64>], w: &[f64], t: &[f64]) -> f64 {
    let mut r = t.to_vec();
    for (c, &wi) in cols.iter().zip(w) {
        for (ri, ci) in r.iter_mut().zip(c) {
            *ri -= wi * ci;
        }
    }
    dot(&r, &r)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn nnls_beats_dense_grid(cols in columns(2..=3, 6), t in prop::collection::vec(-1.0f64..1.0, 6)) {
        let u = UpdateBasis::new(cols.clone()).unwrap();
        let w = nnls_small(&u, &t).unwrap();
        prop_assume!(!w.ridge_fallback);
        prop_assert!(w.w.iter().all(|v| *v >= 0.0));
        let best = residual(&cols, &w.w, &t);

        let p = cols.len();
        let w_max = 1.25 * w.w.iter().cloned().fold(0.0, f64::max) + 0.1;
        let h = 1e-2 * w_max;
        let steps = 101usize;
        let mut grid_min = f64::INFINITY;
        let mut idx = vec![0usize; p];
        loop {
            let g: Vec<f64> = idx.iter().map(|&i| i as f64 * h).collect();
            grid_min = grid_min.min(residual(&cols, &g, &t));
            let mut k = 0;
            while k < p {
                idx[k] += 1;
                if idx[k] < steps { break; }
                idx[k] = 0;
                k += 1;
            }
            if k == p { break; }
        }
        // No grid point may beat the exact optimum; the nearest grid point is within
        // one half-cell per coordinate of it.
        let scale: f64 = cols.iter().map(|c| dot(c, c)).sum();
        let slack = 1e-12 * (1.0 + dot(&t, &t));
        prop_assert!(best <= grid_min + slack, "{} > grid {}", best, grid_min);
        let resolution = scale * p as f64 * h * h + 2.0 * best.sqrt() * scale.sqrt() * (p as f64).sqrt() * h;
        prop_assert!(grid_min - best <= resolution + slack);
    }

    #[test]
    fn oracle_step_never_moves_away(
        cols in columns(1..=3, 8),
        mu in prop::collection::vec(-2.0f64..2.0, 8),
        x in prop::collection::vec(-2.0f64..2.0, 8),
    ) {
        let u = UpdateBasis::new(cols).unwrap();
        let (next, _) = optimal_step(Some(&x), &mu, &u).unwrap();
        prop_assert!(norm(&sub(&x, &next)) <= norm(&sub(&x, &mu)));
    }

    #[test]
    fn decoded_weights_reproduce_the_step(
        cols in columns(2..=2, 8),
        mu in prop::collection::vec(-2.0f64..2.0, 8),
        x in prop::collection::vec(-2.0f64..2.0, 8),
    ) {
        let u = UpdateBasis::new(cols.clone()).unwrap();
        let (next, w) = optimal_step(Some(&x), &mu, &u).unwrap();
        prop_assume!(w.alpha() > 0.0);
        let (a, l) = (w.alpha(), w.lambda().unwrap());
        for i in 0..mu.len() {
            let want = mu[i] - a * (cols[0][i] + l * cols[1][i]);
            prop_assert!((next[i] - want).abs() <= 1e-12 * (1.0 + mu[i].abs()), "{} vs {}", next[i], want);
        }
    }

    #[test]
    fn heavy_ball_recursion(
        g in prop::collection::vec(-1.0f64..1.0, 5),
        q in prop::collection::vec(-1.0f64..1.0, 5),
        v0 in prop::collection::vec(-1.0f64..1.0, 5),
        alpha in 0.0f64..1.0,
        lambda in 0.0f64..5.0,
        beta in 0.0f64..0.99,
    ) {
        let mut mu = vec![0.0; 5];
        let mut v = v0.clone();
        step_momentum(&mut mu, &mut v, &g, &q, alpha, lambda, beta).unwrap();
        for i in 0..5 {
            let want = alpha * (g[i] + lambda * q[i]) + beta * v0[i];
            prop_assert!((v[i] - want).abs() <= 1e-15 * (1.0 + want.abs()));
            prop_assert_eq!(mu[i], -v[i]);
        }
    }
}

// On a projector gram P the Neumann polynomial is 3I − 2P, so the quadratic
// form is 3‖g‖² − 2‖Ag‖², at least ‖g‖².
#[test]
fn neumann_preconditioner_keeps_descent_on_projector_grams() {
    let (h, w) = (16, 8);
    let ops: Vec<Arc<dyn LinearOperator>> = vec![
        Arc::new(subsampled_dft(&make_mask(MaskKind::Random, h, 4.0, 2, 3).unwrap(), w).unwrap()),
        Arc::new(subsampled_dft(&make_mask(MaskKind::Equispaced, h, 2.0, 4, 0).unwrap(), w).unwrap()),
        Arc::new(inpaint(h * w, &(20..70).collect::<Vec<_>>()).unwrap()),
    ];
    let mut r = rng::seeded(8);
    for op in ops {
        let pc = make_preconditioner(op.as_ref(), PolyCoeffs::Auto).unwrap();
        assert!((pc.lipschitz - 1.0).abs() <= 1e-9);
        for _ in 0..200 {
            let g = rng::standard_normals(&mut r, h * w);
            let form = dot(&g, &apply_preconditioner(&pc, op.as_ref(), &g));
            let ag = op.apply(&g);
            let want = 3.0 * dot(&g, &g) - 2.0 * dot(&ag, &ag);
            assert!(form > 0.0);
            assert!(form >= dot(&g, &g) * (1.0 - 1e-9));
            assert!((form - want).abs() <= 1e-9 * want.abs());
        }
    }
}
