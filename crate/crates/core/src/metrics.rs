//! Reconstruction quality metrics.

use crate::error::{Error, Result};
use crate::spectral::Image;

fn check_same(a: &[f64], b: &[f64]) -> Result<()> {
    if a.len() != b.len() {
        return Err(Error::DimensionMismatch {
            expected: a.len(),
            found: b.len(),
        });
    }
    if a.is_empty() {
        return Err(Error::param("image", "empty"));
    }
    Ok(())
}

/// Peak used when none is given: the maximum of the reference.
pub fn default_peak(reference: &[f64]) -> f64 {
    reference.iter().copied().fold(f64::NEG_INFINITY, f64::max)
}

/// `10 log10(peak² / MSE)`; `+∞` for identical inputs.
pub fn psnr(reference: &[f64], estimate: &[f64], peak: Option<f64>) -> Result<f64> {
    check_same(reference, estimate)?;
    let peak = peak.unwrap_or_else(|| default_peak(reference));
    if !(peak > 0.0 && peak.is_finite()) {
        return Err(Error::param("peak", format!("must be positive, got {peak}")));
    }
    let mse = reference
        .iter()
        .zip(estimate)
        .map(|(a, b)| (a - b) * (a - b))
        .sum::<f64>()
        / reference.len() as f64;
    if mse == 0.0 {
        return Ok(f64::INFINITY);
    }
    Ok(10.0 * (peak * peak / mse).log10())
}

const SSIM_WINDOW: usize = 11;
const SSIM_SIGMA: f64 = 1.5;
const SSIM_K1: f64 = 0.01;
const SSIM_K2: f64 = 0.03;

fn ssim_window() -> Vec<f64> {
    let c = (SSIM_WINDOW / 2) as f64;
    let g: Vec<f64> = (0..SSIM_WINDOW)
        .map(|i| (-((i as f64 - c).powi(2)) / (2.0 * SSIM_SIGMA * SSIM_SIGMA)).exp())
        .collect();
    let s: f64 = g.iter().sum();
    g.into_iter().map(|v| v / s).collect()
}

/// Mean SSIM over all fully contained 11×11 Gaussian windows (σ = 1.5).
pub fn ssim(reference: &Image, estimate: &Image, peak: Option<f64>) -> Result<f64> {
    if reference.shape() != estimate.shape() {
        return Err(Error::DimensionMismatch {
            expected: reference.len(),
            found: estimate.len(),
        });
    }
    let (h, w) = reference.shape();
    if h < SSIM_WINDOW || w < SSIM_WINDOW {
        return Err(Error::param(
            "image",
            format!("{h}x{w} is smaller than the {SSIM_WINDOW}x{SSIM_WINDOW} window"),
        ));
    }
    let a = reference.as_slice();
    let b = estimate.as_slice();
    check_same(a, b)?;
    let l = peak.unwrap_or_else(|| default_peak(a));
    if !(l > 0.0 && l.is_finite()) {
        return Err(Error::param("peak", format!("must be positive, got {l}")));
    }
    let c1 = (SSIM_K1 * l).powi(2);
    let c2 = (SSIM_K2 * l).powi(2);

    let g = ssim_window();
    let mut weights = Vec::with_capacity(SSIM_WINDOW * SSIM_WINDOW);
    for gi in &g {
        for gj in &g {
            weights.push(gi * gj);
        }
    }
    let (wh, ww) = (SSIM_WINDOW, SSIM_WINDOW);

    let mut total = 0.0;
    let mut count = 0usize;
    for r0 in 0..=(h - wh) {
        for c0 in 0..=(w - ww) {
            let (mut ma, mut mb, mut saa, mut sbb, mut sab) = (0.0, 0.0, 0.0, 0.0, 0.0);
            for i in 0..wh {
                for j in 0..ww {
                    let k = weights[i * ww + j];
                    let x = a[(r0 + i) * w + c0 + j];
                    let y = b[(r0 + i) * w + c0 + j];
                    ma += k * x;
                    mb += k * y;
                    saa += k * x * x;
                    sbb += k * y * y;
                    sab += k * x * y;
                }
            }
            let va = saa - ma * ma;
            let vb = sbb - mb * mb;
            let cov = sab - ma * mb;
            total += ((2.0 * ma * mb + c1) * (2.0 * cov + c2)) / ((ma * ma + mb * mb + c1) * (va + vb + c2));
            count += 1;
        }
    }
    Ok(total / count as f64)
}
