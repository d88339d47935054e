//! Synthetic test images.

use std::f64::consts::PI;

use rand::Rng as _;

use crate::error::{Error, Result};
use crate::fft::{normalized_radius, Fft2d};
use crate::rng;
use crate::spectral::Image;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum PhantomKind {
    /// Gaussian field with radial power `∝ r^(−exponent)`, min-max scaled to [0, 1].
    PowerLaw { exponent: f64 },
    /// Random ellipses and rectangles on a dark background, clamped to [0, 1].
    Shapes { count: usize },
}

impl PhantomKind {
    pub fn parse(name: &str, param: f64) -> Result<Self> {
        match name {
            "power_law" => Ok(PhantomKind::PowerLaw { exponent: param }),
            "shapes" => Ok(PhantomKind::Shapes {
                count: param.max(1.0) as usize,
            }),
            other => Err(Error::param("phantom", format!("unknown kind `{other}`"))),
        }
    }
}

pub fn power_law_field(height: usize, width: usize, exponent: f64, seed: u64) -> Vec<f64> {
    let fft = Fft2d::new(height, width);
    let mut r = rng::seeded(seed);
    let white = rng::standard_normals(&mut r, height * width);
    let mut resp = vec![0.0; height * width];
    for u in 0..height {
        for v in 0..width {
            let rad = normalized_radius(u, v, height, width);
            resp[u * width + v] = if rad == 0.0 { 0.0 } else { rad.powf(-exponent / 2.0) };
        }
    }
    fft.filter_real(&white, &resp)
}

fn min_max(mut x: Vec<f64>) -> Vec<f64> {
    let lo = x.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = x.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let span = hi - lo;
    for v in &mut x {
        *v = if span > 0.0 { (*v - lo) / span } else { 0.0 };
    }
    x
}

fn shapes(height: usize, width: usize, count: usize, seed: u64) -> Vec<f64> {
    let mut r = rng::seeded(seed);
    let mut img = vec![0.1f64; height * width];
    let (hf, wf) = (height as f64, width as f64);
    for _ in 0..count {
        let cy = r.random_range(0.15..0.85) * hf;
        let cx = r.random_range(0.15..0.85) * wf;
        let ay = r.random_range(0.08..0.3) * hf;
        let ax = r.random_range(0.08..0.3) * wf;
        let theta = r.random_range(0.0..PI);
        let level = r.random_range(0.2..0.6);
        let ellipse = r.random_bool(0.5);
        let (s, c) = theta.sin_cos();
        for i in 0..height {
            for j in 0..width {
                let dy = i as f64 + 0.5 - cy;
                let dx = j as f64 + 0.5 - cx;
                let u = (c * dx + s * dy) / ax;
                let v = (-s * dx + c * dy) / ay;
                let inside = if ellipse {
                    u * u + v * v <= 1.0
                } else {
                    u.abs() <= 1.0 && v.abs() <= 1.0
                };
                if inside {
                    img[i * width + j] += level;
                }
            }
        }
    }
    img.into_iter().map(|v| v.clamp(0.0, 1.0)).collect()
}

pub fn generate(kind: PhantomKind, height: usize, width: usize, seed: u64) -> Result<Image> {
    if height == 0 || width == 0 {
        return Err(Error::param("shape", "must be nonempty"));
    }
    let data = match kind {
        PhantomKind::PowerLaw { exponent } => {
            if !exponent.is_finite() {
                return Err(Error::param("exponent", "must be finite"));
            }
            min_max(power_law_field(height, width, exponent, seed))
        }
        PhantomKind::Shapes { count } => shapes(height, width, count, seed),
    };
    Image::new(height, width, data)
}
