//! Power spectral density estimation under a wide-sense-stationary image model.
//!
//! Periodograms use the per-pixel normalization `|DFT|² / n`, so a white
//! process of variance `v` has an expected flat spectrum `v` and the total
//! spectral power equals the image energy `Σ x²`.

use std::fmt::Write as _;
use std::path::Path;

use crate::error::{Error, Result};
use crate::fft::{fftshift, normalized_radius, Fft2d};

/// Largest normalized radius on any grid: the corner `(1/2, 1/2)`.
pub const MAX_RADIUS: f64 = std::f64::consts::FRAC_1_SQRT_2;

/// A finite real-valued 2-D grid, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct Image {
    height: usize,
    width: usize,
    data: Vec<f64>,
}

impl Image {
    pub fn new(height: usize, width: usize, data: Vec<f64>) -> Result<Self> {
        if height == 0 || width == 0 {
            return Err(Error::param("shape", "height and width must be positive"));
        }
        if data.len() != height * width {
            return Err(Error::DimensionMismatch {
                expected: height * width,
                found: data.len(),
            });
        }
        if let Some(index) = data.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite { index });
        }
        Ok(Image { height, width, data })
    }

    pub fn zeros(height: usize, width: usize) -> Self {
        Image {
            height,
            width,
            data: vec![0.0; height * width],
        }
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.height, self.width)
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.data
    }

    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.data[row * self.width + col]
    }
}

/// DC-centred per-pixel power spectrum.
#[derive(Debug, Clone, PartialEq)]
pub struct Spectrum2D {
    pub height: usize,
    pub width: usize,
    /// Shifted layout: the DC bin sits at `(height/2, width/2)`.
    pub power: Vec<f64>,
}

impl Spectrum2D {
    pub fn total(&self) -> f64 {
        self.power.iter().sum()
    }

    /// Normalized radius of each (shifted) entry.
    fn radii(&self) -> Vec<f64> {
        let (h, w) = (self.height, self.width);
        let mut r = vec![0.0; h * w];
        for ku in 0..h {
            for kv in 0..w {
                r[ku * w + kv] = normalized_radius(ku, kv, h, w);
            }
        }
        fftshift(&r, h, w)
    }
}

/// Radially averaged PSD over equal-width annuli spanning `[0, √2/2]`.
#[derive(Debug, Clone, PartialEq)]
pub struct RadialPSD {
    pub bin_edges: Vec<f64>,
    /// Mean power per bin; `0.0` where `counts[i] == 0`.
    pub values: Vec<f64>,
    pub counts: Vec<usize>,
}

impl RadialPSD {
    pub fn n_bins(&self) -> usize {
        self.values.len()
    }

    pub fn bin_center(&self, i: usize) -> f64 {
        0.5 * (self.bin_edges[i] + self.bin_edges[i + 1])
    }

    pub fn centers(&self) -> Vec<f64> {
        (0..self.n_bins()).map(|i| self.bin_center(i)).collect()
    }

    pub fn is_present(&self, i: usize) -> bool {
        self.counts[i] > 0
    }

    /// Bin index holding normalized radius `r`; boundary radii go to the lower bin.
    pub fn bin_of(&self, r: f64) -> usize {
        bin_index(r, self.n_bins())
    }

    /// Largest value over present bins.
    pub fn max_value(&self) -> Option<f64> {
        (0..self.n_bins())
            .filter(|&i| self.is_present(i))
            .map(|i| self.values[i])
            .fold(None, |acc, v| Some(acc.map_or(v, |a: f64| a.max(v))))
    }

    /// Looks up the PSD for every bin of an unshifted `height × width` DFT grid.
    ///
    /// Fails if a grid radius lands in an empty bin.
    pub fn to_dft_grid(&self, height: usize, width: usize) -> Result<Vec<f64>> {
        let mut out = Vec::with_capacity(height * width);
        for ku in 0..height {
            for kv in 0..width {
                let b = self.bin_of(normalized_radius(ku, kv, height, width));
                if !self.is_present(b) {
                    return Err(Error::param(
                        "psd",
                        format!("bin {b} is empty; cannot evaluate the spectrum there"),
                    ));
                }
                out.push(self.values[b]);
            }
        }
        Ok(out)
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("bin_center,value,count\n");
        for i in 0..self.n_bins() {
            let _ = writeln!(s, "{},{},{}", self.bin_center(i), self.values[i], self.counts[i]);
        }
        s
    }

    /// Parses the CSV written by [`RadialPSD::to_csv`]. Bins are assumed
    /// equal-width over `[0, √2/2]`, as produced by [`radial_average`].
    pub fn from_csv(text: &str) -> Result<Self> {
        let mut lines = text.lines();
        match lines.next() {
            Some(h) if h.trim() == "bin_center,value,count" => {}
            _ => return Err(Error::Csv("expected header `bin_center,value,count`".into())),
        }
        let mut values = Vec::new();
        let mut counts = Vec::new();
        for (ln, line) in lines.enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let cols: Vec<&str> = line.split(',').collect();
            if cols.len() != 3 {
                return Err(Error::Csv(format!("row {}: expected 3 columns", ln + 2)));
            }
            let parse = |s: &str| {
                s.trim()
                    .parse::<f64>()
                    .map_err(|e| Error::Csv(format!("row {}: {e}", ln + 2)))
            };
            let _center = parse(cols[0])?;
            let v = parse(cols[1])?;
            let c = cols[2]
                .trim()
                .parse::<usize>()
                .map_err(|e| Error::Csv(format!("row {}: {e}", ln + 2)))?;
            if v < 0.0 {
                return Err(Error::Csv(format!("row {}: negative power", ln + 2)));
            }
            values.push(v);
            counts.push(c);
        }
        if values.is_empty() {
            return Err(Error::Csv("no bins".into()));
        }
        Ok(RadialPSD {
            bin_edges: edges(values.len()),
            values,
            counts,
        })
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_csv()).map_err(|e| Error::io(path, e))
    }

    pub fn read_csv(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_csv(&text)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NoiseFloorEstimate {
    pub sigma_s_sq: f64,
    pub tail_fraction: f64,
}

fn edges(n_bins: usize) -> Vec<f64> {
    (0..=n_bins).map(|i| MAX_RADIUS * i as f64 / n_bins as f64).collect()
}

fn bin_index(r: f64, n_bins: usize) -> usize {
    let width = MAX_RADIUS / n_bins as f64;
    if r <= 0.0 {
        return 0;
    }
    let b = (r / width).ceil() as usize;
    b.saturating_sub(1).min(n_bins - 1)
}

/// Default bin count: one per integer radius up to Nyquist.
pub fn default_bins(height: usize, width: usize) -> usize {
    height.min(width).div_ceil(2).max(1)
}

pub fn periodogram(img: &Image) -> Spectrum2D {
    let (h, w) = img.shape();
    let fft = Fft2d::new(h, w);
    // The unitary transform already yields |DFT|²/n.
    let spec = fft.forward_real_unitary(img.as_slice());
    let power: Vec<f64> = spec.iter().map(|c| c.norm_sqr()).collect();
    Spectrum2D {
        height: h,
        width: w,
        power: fftshift(&power, h, w),
    }
}

pub fn radial_average(spec: &Spectrum2D, n_bins: usize) -> Result<RadialPSD> {
    if n_bins == 0 {
        return Err(Error::param("n_bins", "must be at least 1"));
    }
    let mut sums = vec![0.0; n_bins];
    let mut counts = vec![0usize; n_bins];
    for (r, p) in spec.radii().into_iter().zip(&spec.power) {
        let b = bin_index(r, n_bins);
        sums[b] += p;
        counts[b] += 1;
    }
    let values = sums
        .iter()
        .zip(&counts)
        .map(|(&s, &c)| if c > 0 { s / c as f64 } else { 0.0 })
        .collect();
    Ok(RadialPSD {
        bin_edges: edges(n_bins),
        values,
        counts,
    })
}

/// Welch-style estimate: periodograms are averaged before radial binning.
pub fn estimate_psd(images: &[Image], n_bins: usize) -> Result<RadialPSD> {
    let first = images
        .first()
        .ok_or_else(|| Error::param("images", "need at least one image"))?;
    let shape = first.shape();
    if let Some((index, img)) = images.iter().enumerate().find(|(_, img)| img.shape() != shape) {
        return Err(Error::ShapeMismatch {
            index,
            expected: shape,
            found: img.shape(),
        });
    }
    let mut acc = periodogram(first);
    for img in &images[1..] {
        let p = periodogram(img);
        for (a, b) in acc.power.iter_mut().zip(&p.power) {
            *a += b;
        }
    }
    let k = images.len() as f64;
    acc.power.iter_mut().for_each(|v| *v /= k);
    radial_average(&acc, n_bins)
}

/// Median of the highest-frequency `⌈tail_fraction · n_bins⌉` non-empty bins.
pub fn estimate_noise_floor(psd: &RadialPSD, tail_fraction: f64) -> Result<NoiseFloorEstimate> {
    if !(tail_fraction > 0.0 && tail_fraction <= 1.0) {
        return Err(Error::param("tail_fraction", "must lie in (0, 1]"));
    }
    let n = psd.n_bins();
    let take = ((tail_fraction * n as f64).ceil() as usize).clamp(1, n);
    let mut tail: Vec<f64> = (n - take..n)
        .filter(|&i| psd.is_present(i))
        .map(|i| psd.values[i])
        .collect();
    if tail.is_empty() {
        return Err(Error::EmptyTail);
    }
    tail.sort_by(f64::total_cmp);
    let m = tail.len();
    let median = if m % 2 == 1 {
        tail[m / 2]
    } else {
        0.5 * (tail[m / 2 - 1] + tail[m / 2])
    };
    Ok(NoiseFloorEstimate {
        sigma_s_sq: median,
        tail_fraction,
    })
}

/// PSD values of present bins whose centre radius exceeds `lf_cutoff`:
/// the eigenvalues of the HF covariance conditioned on known LF content.
pub fn hf_spectrum(psd: &RadialPSD, lf_cutoff: f64) -> Result<Vec<f64>> {
    if !(lf_cutoff >= 0.0) {
        return Err(Error::param("lf_cutoff", "must be nonnegative"));
    }
    let out: Vec<f64> = (0..psd.n_bins())
        .filter(|&i| psd.is_present(i) && psd.bin_center(i) > lf_cutoff)
        .map(|i| psd.values[i])
        .collect();
    if lf_cutoff >= MAX_RADIUS || out.is_empty() {
        return Err(Error::EmptyHighFrequency { cutoff: lf_cutoff });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn image(h: usize, w: usize, f: impl Fn(usize, usize) -> f64) -> Image {
        let mut d = Vec::with_capacity(h * w);
        for r in 0..h {
            for c in 0..w {
                d.push(f(r, c));
            }
        }
        Image::new(h, w, d).unwrap()
    }

    #[test]
    fn rejects_non_finite_with_index() {
        let mut d = vec![0.0; 16];
        d[5] = f64::NAN;
        match Image::new(4, 4, d) {
            Err(Error::NonFinite { index }) => assert_eq!(index, 5),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn constant_image_puts_all_power_at_dc() {
        let c = 0.7;
        let p = periodogram(&image(8, 8, |_, _| c));
        let dc = 4 * 8 + 4;
        assert!((p.power[dc] - c * c * 64.0).abs() < 1e-12);
        for (i, v) in p.power.iter().enumerate() {
            if i != dc {
                assert!(v.abs() < 1e-24, "bin {i} = {v}");
            }
        }
    }

    #[test]
    fn zero_image_zero_spectrum() {
        let p = periodogram(&Image::zeros(5, 7));
        assert!(p.power.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn impulse_is_flat() {
        let p = periodogram(&image(16, 16, |r, c| if r == 0 && c == 0 { 1.0 } else { 0.0 }));
        let psd = radial_average(&p, 8).unwrap();
        for (v, &n) in psd.values.iter().zip(&psd.counts) {
            if n > 0 {
                assert!((v - 1.0 / 256.0).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn single_bin_is_global_mean() {
        let img = image(6, 9, |r, c| ((r * 7 + c * 3) % 5) as f64 * 0.1);
        let p = periodogram(&img);
        let psd = radial_average(&p, 1).unwrap();
        assert_eq!(psd.counts[0], 54);
        assert!((psd.values[0] - p.total() / 54.0).abs() < 1e-14);
    }

    #[test]
    fn zero_bins_rejected() {
        let p = periodogram(&Image::zeros(4, 4));
        assert!(matches!(radial_average(&p, 0), Err(Error::Parameter { .. })));
    }

    #[test]
    fn boundary_radius_goes_to_lower_bin() {
        let w = MAX_RADIUS / 4.0;
        assert_eq!(bin_index(0.0, 4), 0);
        assert_eq!(bin_index(w, 4), 0);
        assert_eq!(bin_index(w * 1.000001, 4), 1);
        assert_eq!(bin_index(MAX_RADIUS, 4), 3);
    }

    #[test]
    fn shape_mismatch_names_index() {
        let imgs = vec![Image::zeros(4, 4), Image::zeros(4, 4), Image::zeros(4, 5)];
        match estimate_psd(&imgs, 2) {
            Err(Error::ShapeMismatch { index, .. }) => assert_eq!(index, 2),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn flat_psd_noise_floor() {
        let psd = RadialPSD {
            bin_edges: edges(10),
            values: vec![0.3; 10],
            counts: vec![4; 10],
        };
        for tf in [0.05, 0.3, 1.0] {
            assert_eq!(estimate_noise_floor(&psd, tf).unwrap().sigma_s_sq, 0.3);
        }
    }

    #[test]
    fn full_tail_is_global_median() {
        let psd = RadialPSD {
            bin_edges: edges(5),
            values: vec![5.0, 1.0, 4.0, 2.0, 3.0],
            counts: vec![1; 5],
        };
        assert_eq!(estimate_noise_floor(&psd, 1.0).unwrap().sigma_s_sq, 3.0);
    }

    #[test]
    fn empty_tail_errors() {
        let psd = RadialPSD {
            bin_edges: edges(4),
            values: vec![1.0, 1.0, 0.0, 0.0],
            counts: vec![3, 3, 0, 0],
        };
        assert!(matches!(estimate_noise_floor(&psd, 0.5), Err(Error::EmptyTail)));
    }

    #[test]
    fn hf_spectrum_cases() {
        let psd = RadialPSD {
            bin_edges: edges(4),
            values: vec![9.0, 2.0, 2.0, 2.0],
            counts: vec![1; 4],
        };
        assert_eq!(hf_spectrum(&psd, 0.0).unwrap().len(), 4);
        let hf = hf_spectrum(&psd, psd.bin_center(0)).unwrap();
        assert_eq!(hf, vec![2.0, 2.0, 2.0]);
        assert!(matches!(hf_spectrum(&psd, 0.8), Err(Error::EmptyHighFrequency { .. })));
    }

    #[test]
    fn csv_round_trip() {
        let psd = RadialPSD {
            bin_edges: edges(3),
            values: vec![1.5, 0.25, 0.0],
            counts: vec![2, 7, 0],
        };
        let back = RadialPSD::from_csv(&psd.to_csv()).unwrap();
        assert_eq!(back.values, psd.values);
        assert_eq!(back.counts, psd.counts);
    }
}
