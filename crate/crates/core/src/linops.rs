//! Linear forward models with exact adjoints, k-space line masks, and
//! measurement simulation.

use std::fmt::Write as _;
use std::sync::Arc;

use nalgebra::DMatrix;
use num_complex::Complex64;
use rand::seq::index;

use crate::error::{Error, Result};
use crate::fft::Fft2d;
use crate::rng;
use crate::vecops;

/// A linear map `A: ℝⁿ → ℝᵐ` with its adjoint.
pub trait LinearOperator: Send + Sync + std::fmt::Debug {
    fn input_dim(&self) -> usize;
    fn output_dim(&self) -> usize;
    fn apply(&self, x: &[f64]) -> Vec<f64>;
    fn adjoint(&self, y: &[f64]) -> Vec<f64>;

    /// `AᵀA x`.
    fn gram(&self, x: &[f64]) -> Vec<f64> {
        self.adjoint(&self.apply(x))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MaskKind {
    Random,
    Equispaced,
}

impl MaskKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            MaskKind::Random => "random",
            MaskKind::Equispaced => "equispaced",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "random" => Ok(MaskKind::Random),
            "equispaced" => Ok(MaskKind::Equispaced),
            _ => Err(Error::param("mask kind", format!("unknown `{s}`"))),
        }
    }
}

/// Phase-encode line mask. Line `i` is the k-space row with signed frequency
/// `i − height/2`, so the calibration band sits in the middle of `0..height`.
#[derive(Debug, Clone, PartialEq)]
pub struct SamplingMask {
    pub kind: MaskKind,
    pub height: usize,
    pub acceleration: f64,
    pub calib: usize,
    pub seed: u64,
    kept: Vec<usize>,
}

impl SamplingMask {
    pub fn kept(&self) -> &[usize] {
        &self.kept
    }

    pub fn calibration_lines(&self) -> std::ops::Range<usize> {
        calib_range(self.height, self.calib)
    }

    /// Unshifted DFT row of centred line `i`.
    pub fn fft_row(&self, i: usize) -> usize {
        (i + self.height - self.height / 2) % self.height
    }

    /// Kept rows plus their Hermitian mirrors, in unshifted DFT order.
    ///
    /// For a real image the row at `−u` is the conjugate of the row at `u`, so
    /// this is the set of frequencies a measurement actually determines.
    pub fn hermitian_rows(&self) -> Vec<usize> {
        let h = self.height;
        let mut rows: Vec<usize> = self
            .kept
            .iter()
            .flat_map(|&i| {
                let r = self.fft_row(i);
                [r, (h - r) % h]
            })
            .collect();
        rows.sort_unstable();
        rows.dedup();
        rows
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("kind,R,calib,seed\n");
        let _ = writeln!(
            s,
            "{},{},{},{}",
            self.kind.as_str(),
            self.acceleration,
            self.calib,
            self.seed
        );
        s.push_str("line\n");
        for i in &self.kept {
            let _ = writeln!(s, "{i}");
        }
        s
    }
}

fn calib_range(height: usize, calib: usize) -> std::ops::Range<usize> {
    let start = height / 2 - calib / 2;
    start..start + calib
}

/// Builds a line mask keeping `round(height / R)` lines, always including the
/// `calib` centre lines. Deterministic per seed.
pub fn make_mask(kind: MaskKind, height: usize, acceleration: f64, calib: usize, seed: u64) -> Result<SamplingMask> {
    if !(acceleration >= 1.0 && acceleration.is_finite()) {
        return Err(Error::param("R", "acceleration must be >= 1"));
    }
    if height == 0 {
        return Err(Error::param("height", "must be positive"));
    }
    if calib > height {
        return Err(Error::param("calib", format!("{calib} lines exceed height {height}")));
    }
    let budget = ((height as f64 / acceleration).round() as usize).clamp(1, height);
    if budget < calib {
        return Err(Error::param(
            "calib",
            format!("line budget {budget} is smaller than the {calib} calibration lines"),
        ));
    }
    let cal = calib_range(height, calib);
    let others: Vec<usize> = (0..height).filter(|i| !cal.contains(i)).collect();
    let need = budget - calib;
    let mut kept: Vec<usize> = cal.collect();
    match kind {
        MaskKind::Random => {
            let mut r = rng::seeded(seed);
            kept.extend(index::sample(&mut r, others.len(), need).into_iter().map(|j| others[j]));
        }
        MaskKind::Equispaced => {
            let l = others.len();
            kept.extend((0..need).map(|j| others[(j * l) / need.max(1)]));
        }
    }
    kept.sort_unstable();
    kept.dedup();
    Ok(SamplingMask {
        kind,
        height,
        acceleration,
        calib,
        seed,
        kept,
    })
}

/// Single-coil Cartesian MRI model: unitary 2-D DFT restricted to the
/// Hermitian closure of the mask rows, emitted as interleaved `(re, im)` pairs.
#[derive(Debug, Clone)]
pub struct SubsampledDft {
    fft: Fft2d,
    rows: Vec<usize>,
    response: Vec<f64>,
}

pub fn subsampled_dft(mask: &SamplingMask, width: usize) -> Result<SubsampledDft> {
    if width == 0 {
        return Err(Error::param("width", "must be positive"));
    }
    let h = mask.height;
    let rows = mask.hermitian_rows();
    let mut response = vec![0.0; h * width];
    for &r in &rows {
        response[r * width..(r + 1) * width].iter_mut().for_each(|v| *v = 1.0);
    }
    Ok(SubsampledDft {
        fft: Fft2d::new(h, width),
        rows,
        response,
    })
}

impl SubsampledDft {
    /// 0/1 frequency response of `AᵀA` in unshifted DFT layout.
    pub fn response(&self) -> &[f64] {
        &self.response
    }

    pub fn rows(&self) -> &[usize] {
        &self.rows
    }

    pub fn shape(&self) -> (usize, usize) {
        self.fft.shape()
    }
}

impl LinearOperator for SubsampledDft {
    fn input_dim(&self) -> usize {
        self.fft.len()
    }

    fn output_dim(&self) -> usize {
        2 * self.rows.len() * self.fft.shape().1
    }

    fn apply(&self, x: &[f64]) -> Vec<f64> {
        let w = self.fft.shape().1;
        let spec = self.fft.forward_real_unitary(x);
        let mut out = Vec::with_capacity(self.output_dim());
        for &r in &self.rows {
            for c in &spec[r * w..(r + 1) * w] {
                out.push(c.re);
                out.push(c.im);
            }
        }
        out
    }

    fn adjoint(&self, y: &[f64]) -> Vec<f64> {
        let w = self.fft.shape().1;
        let mut spec = vec![Complex64::new(0.0, 0.0); self.fft.len()];
        for (j, &r) in self.rows.iter().enumerate() {
            for c in 0..w {
                let k = 2 * (j * w + c);
                spec[r * w + c] = Complex64::new(y[k], y[k + 1]);
            }
        }
        self.fft.inverse_unitary_real(spec)
    }

    fn gram(&self, x: &[f64]) -> Vec<f64> {
        self.fft.filter_real(x, &self.response)
    }
}

/// Circular convolution with a normalized sampled Gaussian kernel.
#[derive(Debug, Clone)]
pub struct GaussianBlur {
    fft: Fft2d,
    kernel: Vec<f64>,
    kernel_size: usize,
    response: Vec<f64>,
}

pub fn gaussian_kernel(kernel_size: usize, kernel_var: f64) -> Result<Vec<f64>> {
    if kernel_size.is_multiple_of(2) {
        return Err(Error::param("kernel_size", "must be odd"));
    }
    if !(kernel_var > 0.0) {
        return Err(Error::param("kernel_var", "must be positive"));
    }
    let half = (kernel_size / 2) as i64;
    let mut k = Vec::with_capacity(kernel_size * kernel_size);
    for dy in -half..=half {
        for dx in -half..=half {
            k.push((-((dx * dx + dy * dy) as f64) / (2.0 * kernel_var)).exp());
        }
    }
    let s: f64 = k.iter().sum();
    k.iter_mut().for_each(|v| *v /= s);
    Ok(k)
}

pub fn gaussian_blur(height: usize, width: usize, kernel_size: usize, kernel_var: f64) -> Result<GaussianBlur> {
    let kernel = gaussian_kernel(kernel_size, kernel_var)?;
    if kernel_size > height || kernel_size > width {
        return Err(Error::param("kernel_size", "kernel larger than the image"));
    }
    let fft = Fft2d::new(height, width);
    let half = (kernel_size / 2) as i64;
    let mut grid = vec![Complex64::new(0.0, 0.0); height * width];
    for dy in -half..=half {
        for dx in -half..=half {
            let r = dy.rem_euclid(height as i64) as usize;
            let c = dx.rem_euclid(width as i64) as usize;
            let kv = kernel[((dy + half) as usize) * kernel_size + (dx + half) as usize];
            grid[r * width + c] += kv;
        }
    }
    fft.forward(&mut grid);
    // Symmetric kernel: the transfer function is real.
    let response = grid.iter().map(|c| c.re).collect();
    Ok(GaussianBlur {
        fft,
        kernel,
        kernel_size,
        response,
    })
}

impl GaussianBlur {
    pub fn kernel(&self) -> &[f64] {
        &self.kernel
    }

    pub fn kernel_size(&self) -> usize {
        self.kernel_size
    }

    /// Real transfer function in unshifted DFT layout.
    pub fn response(&self) -> &[f64] {
        &self.response
    }

    pub fn shape(&self) -> (usize, usize) {
        self.fft.shape()
    }
}

impl LinearOperator for GaussianBlur {
    fn input_dim(&self) -> usize {
        self.fft.len()
    }

    fn output_dim(&self) -> usize {
        self.fft.len()
    }

    fn apply(&self, x: &[f64]) -> Vec<f64> {
        self.fft.filter_real(x, &self.response)
    }

    fn adjoint(&self, y: &[f64]) -> Vec<f64> {
        self.fft.filter_real(y, &self.response)
    }

    fn gram(&self, x: &[f64]) -> Vec<f64> {
        let sq: Vec<f64> = self.response.iter().map(|h| h * h).collect();
        self.fft.filter_real(x, &sq)
    }
}

/// Block-average downsampling by `factor` in both axes.
#[derive(Debug, Clone)]
pub struct Decimate {
    height: usize,
    width: usize,
    factor: usize,
}

pub fn decimate(height: usize, width: usize, factor: usize) -> Result<Decimate> {
    if factor == 0 || !height.is_multiple_of(factor) || !width.is_multiple_of(factor) {
        return Err(Error::param(
            "factor",
            format!("{factor} does not divide {height}x{width}"),
        ));
    }
    Ok(Decimate { height, width, factor })
}

impl Decimate {
    pub fn factor(&self) -> usize {
        self.factor
    }

    pub fn low_res_shape(&self) -> (usize, usize) {
        (self.height / self.factor, self.width / self.factor)
    }
}

impl LinearOperator for Decimate {
    fn input_dim(&self) -> usize {
        self.height * self.width
    }

    fn output_dim(&self) -> usize {
        self.input_dim() / (self.factor * self.factor)
    }

    fn apply(&self, x: &[f64]) -> Vec<f64> {
        let f = self.factor;
        let (lh, lw) = self.low_res_shape();
        let inv = 1.0 / (f * f) as f64;
        let mut out = vec![0.0; lh * lw];
        for r in 0..self.height {
            for c in 0..self.width {
                out[(r / f) * lw + c / f] += x[r * self.width + c] * inv;
            }
        }
        out
    }

    fn adjoint(&self, y: &[f64]) -> Vec<f64> {
        let f = self.factor;
        let lw = self.width / f;
        let inv = 1.0 / (f * f) as f64;
        let mut out = vec![0.0; self.input_dim()];
        for r in 0..self.height {
            for c in 0..self.width {
                out[r * self.width + c] = y[(r / f) * lw + c / f] * inv;
            }
        }
        out
    }
}

/// Keeps every pixel outside `region`.
#[derive(Debug, Clone)]
pub struct Inpaint {
    n: usize,
    keep: Vec<usize>,
}

pub fn inpaint(n: usize, region: &[usize]) -> Result<Inpaint> {
    let mut hidden = vec![false; n];
    for &i in region {
        if i >= n {
            return Err(Error::param("region", format!("index {i} outside 0..{n}")));
        }
        hidden[i] = true;
    }
    let keep: Vec<usize> = (0..n).filter(|&i| !hidden[i]).collect();
    if keep.is_empty() {
        return Err(Error::EmptyMeasurement);
    }
    Ok(Inpaint { n, keep })
}

impl Inpaint {
    pub fn kept(&self) -> &[usize] {
        &self.keep
    }
}

impl LinearOperator for Inpaint {
    fn input_dim(&self) -> usize {
        self.n
    }

    fn output_dim(&self) -> usize {
        self.keep.len()
    }

    fn apply(&self, x: &[f64]) -> Vec<f64> {
        self.keep.iter().map(|&i| x[i]).collect()
    }

    fn adjoint(&self, y: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.n];
        for (&i, &v) in self.keep.iter().zip(y) {
            out[i] = v;
        }
        out
    }
}

#[derive(Debug, Clone)]
pub struct Identity(pub usize);

impl LinearOperator for Identity {
    fn input_dim(&self) -> usize {
        self.0
    }

    fn output_dim(&self) -> usize {
        self.0
    }

    fn apply(&self, x: &[f64]) -> Vec<f64> {
        x.to_vec()
    }

    fn adjoint(&self, y: &[f64]) -> Vec<f64> {
        y.to_vec()
    }
}

/// Explicit matrix operator, for small problems and tests.
#[derive(Debug, Clone)]
pub struct DenseOperator(pub DMatrix<f64>);

impl LinearOperator for DenseOperator {
    fn input_dim(&self) -> usize {
        self.0.ncols()
    }

    fn output_dim(&self) -> usize {
        self.0.nrows()
    }

    fn apply(&self, x: &[f64]) -> Vec<f64> {
        (&self.0 * nalgebra::DVector::from_column_slice(x)).as_slice().to_vec()
    }

    fn adjoint(&self, y: &[f64]) -> Vec<f64> {
        (self.0.transpose() * nalgebra::DVector::from_column_slice(y))
            .as_slice()
            .to_vec()
    }
}

/// Materializes `A` column by column.
pub fn to_dense(op: &dyn LinearOperator) -> DMatrix<f64> {
    let n = op.input_dim();
    let mut m = DMatrix::zeros(op.output_dim(), n);
    let mut e = vec![0.0; n];
    for j in 0..n {
        e[j] = 1.0;
        let col = op.apply(&e);
        for (i, v) in col.into_iter().enumerate() {
            m[(i, j)] = v;
        }
        e[j] = 0.0;
    }
    m
}

/// Power-iteration estimate of `‖AᵀA‖` from a seeded random start.
pub fn gram_norm(op: &dyn LinearOperator, iterations: usize, seed: u64) -> f64 {
    let mut r = rng::seeded(seed);
    let mut v = rng::standard_normals(&mut r, op.input_dim());
    let mut est = 0.0;
    for _ in 0..iterations.max(1) {
        let nv = vecops::norm(&v);
        if nv == 0.0 {
            return 0.0;
        }
        v.iter_mut().for_each(|x| *x /= nv);
        let w = op.gram(&v);
        est = vecops::dot(&v, &w);
        v = w;
    }
    est
}

/// `y = A x* + η` with `η ~ N(0, eta_var I)`.
#[derive(Debug, Clone)]
pub struct InverseProblem {
    pub op: Arc<dyn LinearOperator>,
    pub y: Vec<f64>,
    pub eta_var: f64,
    pub ground_truth: Option<Vec<f64>>,
}

impl InverseProblem {
    pub fn new(op: Arc<dyn LinearOperator>, y: Vec<f64>, eta_var: f64, ground_truth: Option<Vec<f64>>) -> Result<Self> {
        if y.len() != op.output_dim() {
            return Err(Error::DimensionMismatch {
                expected: op.output_dim(),
                found: y.len(),
            });
        }
        if !(eta_var >= 0.0) {
            return Err(Error::param("eta_var", "must be nonnegative"));
        }
        if let Some(gt) = &ground_truth {
            if gt.len() != op.input_dim() {
                return Err(Error::DimensionMismatch {
                    expected: op.input_dim(),
                    found: gt.len(),
                });
            }
        }
        Ok(InverseProblem {
            op,
            y,
            eta_var,
            ground_truth,
        })
    }

    pub fn dim(&self) -> usize {
        self.op.input_dim()
    }
}

pub fn simulate_measurement(
    op: Arc<dyn LinearOperator>,
    x_star: &[f64],
    eta_var: f64,
    seed: u64,
) -> Result<InverseProblem> {
    if x_star.len() != op.input_dim() {
        return Err(Error::DimensionMismatch {
            expected: op.input_dim(),
            found: x_star.len(),
        });
    }
    if !(eta_var >= 0.0) {
        return Err(Error::param("eta_var", "must be nonnegative"));
    }
    let mut y = op.apply(x_star);
    if eta_var > 0.0 {
        let mut r = rng::seeded(seed);
        let z = rng::standard_normals(&mut r, y.len());
        vecops::axpy(&mut y, eta_var.sqrt(), &z);
    }
    InverseProblem::new(op, y, eta_var, Some(x_star.to_vec()))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn full_acceleration_keeps_everything() {
        let m = make_mask(MaskKind::Random, 12, 1.0, 4, 3).unwrap();
        assert_eq!(m.kept(), (0..12).collect::<Vec<_>>().as_slice());
    }

    #[test]
    fn calibration_saturates_budget() {
        let m = make_mask(MaskKind::Random, 128, 8.0, 16, 9).unwrap();
        assert_eq!(m.kept(), (56..72).collect::<Vec<_>>().as_slice());
    }

    #[test]
    fn equispaced_stride() {
        let m = make_mask(MaskKind::Equispaced, 16, 4.0, 0, 0).unwrap();
        assert_eq!(m.kept(), &[0, 4, 8, 12]);
    }

    #[test]
    fn budget_below_calibration_errors() {
        assert!(make_mask(MaskKind::Random, 64, 8.0, 16, 0).is_err());
        assert!(make_mask(MaskKind::Random, 8, 1.0, 9, 0).is_err());
        assert!(make_mask(MaskKind::Random, 8, 0.5, 0, 0).is_err());
    }

    #[test]
    fn random_mask_has_budget_and_calibration() {
        let m = make_mask(MaskKind::Random, 64, 4.0, 8, 5).unwrap();
        assert_eq!(m.kept().len(), 16);
        for i in m.calibration_lines() {
            assert!(m.kept().contains(&i));
        }
        let again = make_mask(MaskKind::Random, 64, 4.0, 8, 5).unwrap();
        assert_eq!(m.to_csv(), again.to_csv());
    }

    #[test]
    fn blur_kernel_is_nearly_uniform_at_large_variance() {
        let k = gaussian_kernel(3, 25.0).unwrap();
        // Oracle: sample exp(-r²/50) on the 3×3 offsets, normalize.
        let w: Vec<f64> = [2.0, 1.0, 2.0, 1.0, 0.0, 1.0, 2.0, 1.0, 2.0]
            .iter()
            .map(|r2: &f64| (-r2 / 50.0).exp())
            .collect();
        let s: f64 = w.iter().sum();
        for (a, b) in k.iter().zip(&w) {
            assert!((a - b / s).abs() < 1e-15);
        }
        // Corner and edge taps sit within 0.002 of 1/9; the centre tap is
        // 1/8.76396 = 0.11410, about 0.0030 above.
        for (i, a) in k.iter().enumerate() {
            let tol = if i == 4 { 0.0031 } else { 0.002 };
            assert!((a - 1.0 / 9.0).abs() < tol, "tap {i}: {a}");
        }
        assert!(gaussian_kernel(4, 1.0).is_err());
    }

    #[test]
    fn blur_preserves_constants() {
        let b = gaussian_blur(8, 8, 3, 25.0).unwrap();
        let out = b.apply(&vec![0.4; 64]);
        assert!(out.iter().all(|v| (v - 0.4).abs() < 1e-14));
    }

    #[test]
    fn decimation_examples() {
        let d = decimate(2, 2, 2).unwrap();
        assert_eq!(d.apply(&[1.0, 2.0, 3.0, 4.0]), vec![2.5]);
        assert_eq!(d.adjoint(&[1.0]), vec![0.25; 4]);
        let id = decimate(3, 5, 1).unwrap();
        let x: Vec<f64> = (0..15).map(f64::from).collect();
        assert_eq!(id.apply(&x), x);
        assert!(decimate(6, 6, 4).is_err());
    }

    #[test]
    fn inpaint_examples() {
        let x: Vec<f64> = (0..6).map(f64::from).collect();
        let empty = inpaint(6, &[]).unwrap();
        assert_eq!(empty.apply(&x), x);
        assert!(matches!(inpaint(3, &[0, 1, 2]), Err(Error::EmptyMeasurement)));
        let op = inpaint(6, &[1, 4]).unwrap();
        assert_eq!(op.gram(&x), vec![0.0, 0.0, 2.0, 3.0, 0.0, 5.0]);
    }

    #[test]
    fn noiseless_measurement_is_exact() {
        let op: Arc<dyn LinearOperator> = Arc::new(decimate(4, 4, 2).unwrap());
        let x: Vec<f64> = (0..16).map(|i| i as f64 * 0.1).collect();
        let p = simulate_measurement(op.clone(), &x, 0.0, 1).unwrap();
        assert_eq!(p.y, op.apply(&x));
    }

    #[test]
    fn full_mask_gram_is_identity() {
        let m = make_mask(MaskKind::Random, 8, 1.0, 0, 0).unwrap();
        let a = subsampled_dft(&m, 6).unwrap();
        let x: Vec<f64> = (0..48).map(|i| ((i * 13 % 7) as f64).sin()).collect();
        let g = a.gram(&x);
        for (u, v) in x.iter().zip(&g) {
            assert!((u - v).abs() < 1e-10);
        }
    }
}
