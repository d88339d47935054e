//! Optimal-weight oracle and the momentum / polynomial-preconditioner updates.
//!
//! With ground truth `x*`, the best non-negative combination of the update
//! directions `U = [∇f, ∇g (, v)]` is the NNLS solution of
//! `min_{w ≥ 0} ‖(μ − x*) − U w‖²`. With at most three columns it is found
//! exactly by enumerating active sets.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::linops::{gram_norm, LinearOperator};
use crate::vecops;

/// Update directions as columns; 1 to 3 of them.
#[derive(Debug, Clone, PartialEq)]
pub struct UpdateBasis {
    columns: Vec<Vec<f64>>,
}

impl UpdateBasis {
    pub fn new(columns: Vec<Vec<f64>>) -> Result<Self> {
        if columns.is_empty() || columns.len() > 3 {
            return Err(Error::param(
                "columns",
                format!("need 1..=3 columns, got {}", columns.len()),
            ));
        }
        let n = columns[0].len();
        if let Some(c) = columns.iter().find(|c| c.len() != n) {
            return Err(Error::DimensionMismatch {
                expected: n,
                found: c.len(),
            });
        }
        Ok(UpdateBasis { columns })
    }

    pub fn columns(&self) -> &[Vec<f64>] {
        &self.columns
    }

    pub fn p(&self) -> usize {
        self.columns.len()
    }

    pub fn dim(&self) -> usize {
        self.columns[0].len()
    }

    /// `U w`.
    pub fn combine(&self, w: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.dim()];
        for (c, &wi) in self.columns.iter().zip(w) {
            if wi != 0.0 {
                vecops::axpy(&mut out, wi, c);
            }
        }
        out
    }
}

/// NNLS weights with the `(α, λ, β)` decoding `α = w₀`, `λ = w₁/w₀`, `β = w₂`.
#[derive(Debug, Clone, PartialEq)]
pub struct OptimalWeights {
    pub w: Vec<f64>,
    /// A free subset was rank deficient and solved with a small ridge.
    pub ridge_fallback: bool,
    /// Largest KKT violation, relative to `max(1, ‖Uᵀ target‖∞)`.
    pub kkt_residual: f64,
}

impl OptimalWeights {
    pub fn alpha(&self) -> f64 {
        self.w[0]
    }

    /// Undefined when `w₀ = 0`.
    pub fn lambda(&self) -> Option<f64> {
        match self.w.get(1) {
            Some(&w1) if self.w[0] > 0.0 => Some(w1 / self.w[0]),
            _ => None,
        }
    }

    pub fn beta(&self) -> Option<f64> {
        self.w.get(2).copied()
    }
}

fn subset_solve(g: &DMatrix<f64>, b: &DVector<f64>, idx: &[usize], ridge: f64) -> (Vec<f64>, bool) {
    let k = idx.len();
    let mut gs = DMatrix::zeros(k, k);
    let mut bs = DVector::zeros(k);
    for (a, &i) in idx.iter().enumerate() {
        bs[a] = b[i];
        for (c, &j) in idx.iter().enumerate() {
            gs[(a, c)] = g[(i, j)];
        }
    }
    // A pivot this small relative to the diagonal means the columns are
    // numerically dependent.
    let diag_max = (0..k).map(|i| gs[(i, i)]).fold(0.0f64, f64::max);
    if let Some(ch) = gs.clone().cholesky() {
        let l = ch.l();
        let min_pivot = (0..k).map(|i| l[(i, i)] * l[(i, i)]).fold(f64::INFINITY, f64::min);
        if min_pivot > 1e-13 * diag_max {
            return (ch.solve(&bs).as_slice().to_vec(), false);
        }
    }
    for i in 0..k {
        gs[(i, i)] += ridge.max(f64::MIN_POSITIVE);
    }
    let sol = match gs.clone().cholesky() {
        Some(ch) => ch.solve(&bs).as_slice().to_vec(),
        None => vec![0.0; k],
    };
    (sol, true)
}

/// Exact NNLS `argmin_{w ≥ 0} ‖target − U w‖²` by active-set enumeration.
pub fn nnls_small(u: &UpdateBasis, target: &[f64]) -> Result<OptimalWeights> {
    if target.len() != u.dim() {
        return Err(Error::DimensionMismatch {
            expected: u.dim(),
            found: target.len(),
        });
    }
    let p = u.p();
    let cols = u.columns();
    let g = DMatrix::from_fn(p, p, |i, j| vecops::dot(&cols[i], &cols[j]));
    let b = DVector::from_fn(p, |i, _| vecops::dot(&cols[i], target));
    let ridge = 1e-12 * g.trace();
    let objective = |w: &[f64]| {
        let wv = DVector::from_column_slice(w);
        (wv.transpose() * &g * &wv)[(0, 0)] - 2.0 * b.dot(&wv)
    };

    let mut best = vec![0.0; p];
    let mut best_obj = 0.0;
    let mut best_ridge = false;
    for mask in 1u32..(1 << p) {
        let idx: Vec<usize> = (0..p).filter(|i| mask & (1 << i) != 0).collect();
        let (sol, ridged) = subset_solve(&g, &b, &idx, ridge);
        if sol.iter().any(|v| !(*v >= 0.0)) {
            continue;
        }
        let mut w = vec![0.0; p];
        for (&i, v) in idx.iter().zip(sol) {
            w[i] = v;
        }
        let obj = objective(&w);
        if obj < best_obj {
            best_obj = obj;
            best = w;
            best_ridge = ridged;
        }
    }

    let grad = &g * DVector::from_column_slice(&best) - &b;
    let scale = b.amax().max(g.amax()).max(1.0);
    let kkt = (0..p)
        .map(|i| {
            if best[i] > 0.0 {
                grad[i].abs()
            } else {
                (-grad[i]).max(0.0)
            }
        })
        .fold(0.0f64, f64::max)
        / scale;
    Ok(OptimalWeights {
        w: best,
        ridge_fallback: best_ridge,
        kkt_residual: kkt,
    })
}

/// One oracle step: `μ⁺ = μ − U ŵ` with `ŵ` the NNLS fit of `μ − x*`.
///
/// The returned iterate is never farther from `x*` than `μ`; if rounding would
/// make it so, the step is dropped (`w = 0`).
pub fn optimal_step(x_star: Option<&[f64]>, mu: &[f64], u: &UpdateBasis) -> Result<(Vec<f64>, OptimalWeights)> {
    let x_star = x_star.ok_or(Error::OracleUnavailable)?;
    if x_star.len() != mu.len() {
        return Err(Error::DimensionMismatch {
            expected: mu.len(),
            found: x_star.len(),
        });
    }
    let target = vecops::sub(mu, x_star);
    let mut weights = nnls_small(u, &target)?;
    let next = vecops::sub(mu, &u.combine(&weights.w));
    if vecops::norm(&vecops::sub(x_star, &next)) > vecops::norm(&vecops::sub(x_star, mu)) {
        weights.w.iter_mut().for_each(|w| *w = 0.0);
        return Ok((mu.to_vec(), weights));
    }
    Ok((next, weights))
}

/// Heavy-ball update `v⁺ = α(∇f + λ∇g) + β v`, `μ⁺ = μ − v⁺`, in place.
pub fn step_momentum(
    mu: &mut [f64],
    v: &mut [f64],
    grad_f: &[f64],
    grad_g: &[f64],
    alpha: f64,
    lambda: f64,
    beta: f64,
) -> Result<()> {
    if !(0.0..1.0).contains(&beta) {
        return Err(Error::param("beta", format!("must lie in [0, 1), got {beta}")));
    }
    for i in 0..mu.len() {
        v[i] = alpha * (grad_f[i] + lambda * grad_g[i]) + beta * v[i];
        mu[i] -= v[i];
    }
    Ok(())
}

/// Coefficients of `pol(M) = c₀ I + c₁ M + c₂ M²`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum PolyCoeffs {
    /// Truncated Neumann series of `M⁻¹ = (I − (I − M))⁻¹`: `3I − 3M + M²`.
    Auto,
    Explicit([f64; 3]),
}

pub const NEUMANN_DEGREE2: [f64; 3] = [3.0, -3.0, 1.0];

/// Polynomial in the normalized gram `M = AᵀA / L`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Preconditioner {
    pub coeffs: [f64; 3],
    /// Spectral scale `L` of `AᵀA`.
    pub lipschitz: f64,
}

impl Preconditioner {
    pub fn new(coeffs: [f64; 3], lipschitz: f64) -> Result<Self> {
        if !(lipschitz > 0.0 && lipschitz.is_finite()) {
            return Err(Error::DegenerateOperator(lipschitz));
        }
        Ok(Preconditioner { coeffs, lipschitz })
    }

    /// `pol(λ)` for a scalar eigenvalue of `M`.
    pub fn eval(&self, lambda: f64) -> f64 {
        let [c0, c1, c2] = self.coeffs;
        c0 + c1 * lambda + c2 * lambda * lambda
    }
}

const POWER_ITERATIONS: usize = 30;
const POWER_SEED: u64 = 0x5eed;

pub fn make_preconditioner(op: &dyn LinearOperator, coeffs: PolyCoeffs) -> Result<Preconditioner> {
    let l = gram_norm(op, POWER_ITERATIONS, POWER_SEED);
    if !(l > 1e-14) {
        return Err(Error::DegenerateOperator(l));
    }
    let c = match coeffs {
        PolyCoeffs::Auto => NEUMANN_DEGREE2,
        PolyCoeffs::Explicit(c) => c,
    };
    Preconditioner::new(c, l)
}

/// `c₀ g + c₁ M g + c₂ M² g`.
pub fn apply_preconditioner(pc: &Preconditioner, op: &dyn LinearOperator, grad: &[f64]) -> Vec<f64> {
    let [c0, c1, c2] = pc.coeffs;
    let mut out = vecops::scale(grad, c0);
    if c1 == 0.0 && c2 == 0.0 {
        return out;
    }
    let inv_l = 1.0 / pc.lipschitz;
    let mg = vecops::scale(&op.gram(grad), inv_l);
    vecops::axpy(&mut out, c1, &mg);
    if c2 != 0.0 {
        let m2g = vecops::scale(&op.gram(&mg), inv_l);
        vecops::axpy(&mut out, c2, &m2g);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linops::{make_mask, subsampled_dft, DenseOperator, Identity, MaskKind};

    #[test]
    fn orthonormal_columns_clip_negative_part() {
        let u = UpdateBasis::new(vec![vec![1.0, 0.0, 0.0], vec![0.0, 1.0, 0.0]]).unwrap();
        let w = nnls_small(&u, &[2.0, -3.0, 0.0]).unwrap();
        assert_eq!(w.w, vec![2.0, 0.0]);
        assert!(w.kkt_residual <= 1e-9);
    }

    #[test]
    fn orthogonal_target_gives_zero() {
        let u = UpdateBasis::new(vec![vec![1.0, 1.0, 0.0], vec![0.0, 1.0, 1.0]]).unwrap();
        let w = nnls_small(&u, &[1.0, -1.0, 1.0]).unwrap();
        assert_eq!(w.w, vec![0.0, 0.0]);
        assert_eq!(w.lambda(), None);
    }

    #[test]
    fn single_column_projection() {
        let col = vec![0.5, -1.0, 2.0];
        let u = UpdateBasis::new(vec![col.clone()]).unwrap();
        let w = nnls_small(&u, &vecops::scale(&col, 3.0)).unwrap();
        assert!((w.w[0] - 3.0).abs() < 1e-14);
    }

    #[test]
    fn dependent_columns_use_ridge() {
        let c = vec![1.0, 2.0, 3.0];
        let u = UpdateBasis::new(vec![c.clone(), c.clone()]).unwrap();
        let w = nnls_small(&u, &vecops::scale(&c, 2.0)).unwrap();
        let fit = u.combine(&w.w);
        for (a, b) in fit.iter().zip(vecops::scale(&c, 2.0)) {
            assert!((a - b).abs() < 1e-9);
        }
    }

    #[test]
    fn oracle_step_cases() {
        let x = vec![1.0, 2.0, 3.0];
        let u = UpdateBasis::new(vec![vec![1.0, 0.0, 0.0], vec![0.0, 1.0, 0.0]]).unwrap();
        let (next, w) = optimal_step(Some(&x), &x, &u).unwrap();
        assert_eq!(next, x);
        assert_eq!(w.w, vec![0.0, 0.0]);

        let mu = vec![0.0, 0.5, -1.0];
        let dir = vecops::sub(&mu, &x);
        let (next, w) = optimal_step(Some(&x), &mu, &UpdateBasis::new(vec![dir]).unwrap()).unwrap();
        assert!((w.w[0] - 1.0).abs() < 1e-14);
        for (a, b) in next.iter().zip(&x) {
            assert!((a - b).abs() < 1e-14);
        }
        assert!(matches!(optimal_step(None, &mu, &u), Err(Error::OracleUnavailable)));
    }

    #[test]
    fn momentum_zero_beta_is_vanilla() {
        let mut mu = vec![1.0, 1.0];
        let mut v = vec![5.0, 5.0];
        step_momentum(&mut mu, &mut v, &[1.0, 0.0], &[0.0, 2.0], 0.5, 2.0, 0.0).unwrap();
        assert_eq!(mu, vec![0.5, -1.0]);
        assert!(step_momentum(&mut mu, &mut v, &[0.0; 2], &[0.0; 2], 1.0, 0.0, 1.0).is_err());
    }

    #[test]
    fn momentum_buffer_converges_geometrically() {
        let g0 = vec![1.0, -2.0];
        let mut mu = vec![0.0; 2];
        let mut v = vec![0.0; 2];
        for _ in 0..60 {
            step_momentum(&mut mu, &mut v, &g0, &[0.0; 2], 1.0, 0.0, 0.5).unwrap();
        }
        assert!((v[0] - 2.0).abs() < 1e-12 && (v[1] + 4.0).abs() < 1e-12);
    }

    #[test]
    fn orthonormal_operator_preconditioner_is_identity() {
        let pc = make_preconditioner(&Identity(4), PolyCoeffs::Auto).unwrap();
        assert!((pc.lipschitz - 1.0).abs() < 1e-12);
        let g = vec![0.3, -1.0, 2.0, 0.0];
        let out = apply_preconditioner(&pc, &Identity(4), &g);
        for (a, b) in out.iter().zip(&g) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn scalar_neumann_arithmetic() {
        let op = DenseOperator(DMatrix::from_element(1, 1, 0.5f64.sqrt()));
        let pc = Preconditioner::new(NEUMANN_DEGREE2, 1.0).unwrap();
        let out = apply_preconditioner(&pc, &op, &[1.0]);
        assert!((out[0] - 1.75).abs() < 1e-14);
        assert!(((2.0 - out[0]) / 2.0 - 0.125).abs() < 1e-14);
    }

    #[test]
    fn projector_gram_maps_null_space_to_three() {
        let mask = make_mask(MaskKind::Equispaced, 8, 4.0, 0, 0).unwrap();
        let op = subsampled_dft(&mask, 8).unwrap();
        let pc = make_preconditioner(&op, PolyCoeffs::Auto).unwrap();
        assert!((pc.eval(1.0) - 1.0).abs() < 1e-14 && pc.eval(0.0) == 3.0);
        // A vector in the null space: zero on sampled rows.
        let resp = op.response();
        let g: Vec<f64> = (0..64).map(|i| ((i * 7 % 11) as f64) - 5.0).collect();
        let g_null = {
            let fft = crate::fft::Fft2d::new(8, 8);
            let inv: Vec<f64> = resp.iter().map(|r| 1.0 - r).collect();
            fft.filter_real(&g, &inv)
        };
        let out = apply_preconditioner(&pc, &op, &g_null);
        for (a, b) in out.iter().zip(&g_null) {
            assert!((a - 3.0 * b).abs() < 1e-9);
        }
    }

    #[test]
    fn degenerate_operator_rejected() {
        let op = DenseOperator(DMatrix::zeros(2, 2));
        assert!(matches!(
            make_preconditioner(&op, PolyCoeffs::Auto),
            Err(Error::DegenerateOperator(_))
        ));
    }
}
