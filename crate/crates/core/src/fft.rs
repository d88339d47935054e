//! Two-dimensional DFT on row-major grids, built from `rustfft` line transforms.

use std::sync::Arc;

use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

/// Planned forward/inverse 2-D transforms for an `height × width` grid.
///
/// Transforms are unnormalized; callers pick the scaling convention.
#[derive(Clone)]
pub struct Fft2d {
    height: usize,
    width: usize,
    row_fwd: Arc<dyn Fft<f64>>,
    row_inv: Arc<dyn Fft<f64>>,
    col_fwd: Arc<dyn Fft<f64>>,
    col_inv: Arc<dyn Fft<f64>>,
}

impl std::fmt::Debug for Fft2d {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Fft2d")
            .field("height", &self.height)
            .field("width", &self.width)
            .finish()
    }
}

impl Fft2d {
    pub fn new(height: usize, width: usize) -> Self {
        let mut planner = FftPlanner::new();
        Fft2d {
            height,
            width,
            row_fwd: planner.plan_fft_forward(width),
            row_inv: planner.plan_fft_inverse(width),
            col_fwd: planner.plan_fft_forward(height),
            col_inv: planner.plan_fft_inverse(height),
        }
    }

    pub fn len(&self) -> usize {
        self.height * self.width
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.height, self.width)
    }

    pub fn forward(&self, data: &mut [Complex64]) {
        self.run(data, &self.row_fwd, &self.col_fwd);
    }

    pub fn inverse(&self, data: &mut [Complex64]) {
        self.run(data, &self.row_inv, &self.col_inv);
    }

    /// Unitary forward transform of a real grid.
    pub fn forward_real_unitary(&self, x: &[f64]) -> Vec<Complex64> {
        let mut buf: Vec<Complex64> = x.iter().map(|&v| Complex64::new(v, 0.0)).collect();
        self.forward(&mut buf);
        let s = 1.0 / (self.len() as f64).sqrt();
        buf.iter_mut().for_each(|c| *c *= s);
        buf
    }

    /// Unitary inverse transform, keeping the real part.
    pub fn inverse_unitary_real(&self, mut spec: Vec<Complex64>) -> Vec<f64> {
        self.inverse(&mut spec);
        let s = 1.0 / (self.len() as f64).sqrt();
        spec.iter().map(|c| c.re * s).collect()
    }

    /// Applies a real frequency response `h` (unshifted layout) to a real grid:
    /// `Re(F⁻¹ diag(h) F x)`.
    pub fn filter_real(&self, x: &[f64], h: &[f64]) -> Vec<f64> {
        let mut buf: Vec<Complex64> = x.iter().map(|&v| Complex64::new(v, 0.0)).collect();
        self.forward(&mut buf);
        for (c, &g) in buf.iter_mut().zip(h) {
            *c *= g;
        }
        self.inverse(&mut buf);
        let s = 1.0 / self.len() as f64;
        buf.iter().map(|c| c.re * s).collect()
    }

    fn run(&self, data: &mut [Complex64], row: &Arc<dyn Fft<f64>>, col: &Arc<dyn Fft<f64>>) {
        let (h, w) = (self.height, self.width);
        assert_eq!(data.len(), h * w, "grid length mismatch");
        row.process(data);
        let mut column = vec![Complex64::new(0.0, 0.0); h];
        for c in 0..w {
            for r in 0..h {
                column[r] = data[r * w + c];
            }
            col.process(&mut column);
            for r in 0..h {
                data[r * w + c] = column[r];
            }
        }
    }
}

/// Signed frequency of FFT bin `k` on an axis of length `n`, in `[-n/2, n/2)`.
pub fn signed_freq(k: usize, n: usize) -> i64 {
    let k = k as i64;
    let n = n as i64;
    if k >= (n + 1) / 2 {
        k - n
    } else {
        k
    }
}

/// Normalized radius `sqrt((u/H)^2 + (v/W)^2)` of unshifted bin `(ku, kv)`.
pub fn normalized_radius(ku: usize, kv: usize, height: usize, width: usize) -> f64 {
    let u = signed_freq(ku, height) as f64 / height as f64;
    let v = signed_freq(kv, width) as f64 / width as f64;
    (u * u + v * v).sqrt()
}

/// Moves the zero-frequency bin to the grid centre `(H/2, W/2)`.
pub fn fftshift<T: Copy>(data: &[T], height: usize, width: usize) -> Vec<T> {
    let mut out = data.to_vec();
    for r in 0..height {
        let rs = (r + height / 2) % height;
        for c in 0..width {
            let cs = (c + width / 2) % width;
            out[rs * width + cs] = data[r * width + c];
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn unitary_round_trip() {
        let f = Fft2d::new(6, 5);
        let x: Vec<f64> = (0..30).map(|i| (i as f64 * 0.37).sin()).collect();
        let back = f.inverse_unitary_real(f.forward_real_unitary(&x));
        for (a, b) in x.iter().zip(&back) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn signed_frequencies() {
        assert_eq!(signed_freq(0, 8), 0);
        assert_eq!(signed_freq(3, 8), 3);
        assert_eq!(signed_freq(4, 8), -4);
        assert_eq!(signed_freq(7, 8), -1);
        assert_eq!(signed_freq(2, 5), 2);
        assert_eq!(signed_freq(3, 5), -2);
    }

    #[test]
    fn shift_puts_dc_in_centre() {
        let mut d = vec![0; 12];
        d[0] = 1;
        let s = fftshift(&d, 3, 4);
        assert_eq!(s[4 + 2], 1);
    }
}
