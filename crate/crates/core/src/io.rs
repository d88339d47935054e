//! Array files, PGM images and CSV helpers.
//!
//! Array file layout (all little-endian): magic `OPTD`, `u16` version, `u8`
//! dtype (1 = f64), `u8` ndim, `ndim × u64` dims, row-major payload.

use std::fs;
use std::io::Write;
use std::path::Path;

use crate::error::{Error, Result};
use crate::spectral::Image;

pub const MAGIC: &[u8; 4] = b"OPTD";
pub const VERSION: u16 = 1;
pub const DTYPE_F64: u8 = 1;

/// CSV number formatting: shortest round-trip decimal, `inf`/`-inf`/`nan` literals.
pub fn fmt_num(v: f64) -> String {
    if v == f64::INFINITY {
        "inf".into()
    } else if v == f64::NEG_INFINITY {
        "-inf".into()
    } else if v.is_nan() {
        "nan".into()
    } else {
        format!("{v}")
    }
}

/// Inverse of [`fmt_num`].
pub fn parse_num(s: &str) -> Option<f64> {
    match s.trim() {
        "inf" => Some(f64::INFINITY),
        "-inf" => Some(f64::NEG_INFINITY),
        "nan" => Some(f64::NAN),
        t => t.parse().ok(),
    }
}

/// Dense row-major f64 array with explicit dims.
#[derive(Debug, Clone, PartialEq)]
pub struct ArrayFile {
    pub dims: Vec<usize>,
    pub data: Vec<f64>,
}

impl ArrayFile {
    pub fn new(dims: Vec<usize>, data: Vec<f64>) -> Result<Self> {
        let n: usize = dims.iter().product();
        if dims.len() > u8::MAX as usize {
            return Err(Error::param("dims", "too many dimensions"));
        }
        if n != data.len() {
            return Err(Error::DimensionMismatch {
                expected: n,
                found: data.len(),
            });
        }
        Ok(ArrayFile { dims, data })
    }

    pub fn from_image(img: &Image) -> Self {
        ArrayFile {
            dims: vec![img.height(), img.width()],
            data: img.as_slice().to_vec(),
        }
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(8 + 8 * self.dims.len() + 8 * self.data.len());
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&VERSION.to_le_bytes());
        out.push(DTYPE_F64);
        out.push(self.dims.len() as u8);
        for &d in &self.dims {
            out.extend_from_slice(&(d as u64).to_le_bytes());
        }
        for v in &self.data {
            out.extend_from_slice(&v.to_le_bytes());
        }
        out
    }

    pub fn from_bytes(b: &[u8]) -> Result<Self> {
        let need = |n: usize| {
            if b.len() < n {
                Err(Error::Truncated {
                    expected: n,
                    found: b.len(),
                })
            } else {
                Ok(())
            }
        };
        need(4)?;
        if &b[..4] != MAGIC {
            return Err(Error::BadMagic);
        }
        need(8)?;
        let version = u16::from_le_bytes([b[4], b[5]]);
        if version != VERSION {
            return Err(Error::UnsupportedVersion(version));
        }
        if b[6] != DTYPE_F64 {
            return Err(Error::UnsupportedDtype(b[6]));
        }
        let ndim = b[7] as usize;
        let header = 8 + 8 * ndim;
        need(header)?;
        let mut dims = Vec::with_capacity(ndim);
        for i in 0..ndim {
            let off = 8 + 8 * i;
            let d = u64::from_le_bytes(b[off..off + 8].try_into().expect("8-byte slice"));
            dims.push(usize::try_from(d).map_err(|_| Error::param("dims", "dimension too large"))?);
        }
        let count = dims
            .iter()
            .try_fold(1usize, |acc, &d| acc.checked_mul(d))
            .and_then(|n| n.checked_mul(8))
            .ok_or_else(|| Error::param("dims", "payload size overflows"))?;
        let total = header + count;
        need(total)?;
        if b.len() != total {
            return Err(Error::param("payload", format!("{} trailing bytes", b.len() - total)));
        }
        let data = b[header..]
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk")))
            .collect();
        Ok(ArrayFile { dims, data })
    }
}

pub fn save_array(path: &Path, arr: &ArrayFile) -> Result<()> {
    write_atomic(path, &arr.to_bytes())
}

pub fn load_array(path: &Path) -> Result<ArrayFile> {
    let b = fs::read(path).map_err(|e| Error::io(path, e))?;
    ArrayFile::from_bytes(&b)
}

/// Write to a sibling temp file, then rename over `path`.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = path
        .parent()
        .filter(|p| !p.as_os_str().is_empty())
        .unwrap_or(Path::new("."));
    let name = path
        .file_name()
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_default();
    let tmp = dir.join(format!(".{name}.tmp{}", std::process::id()));
    {
        let mut f = fs::File::create(&tmp).map_err(|e| Error::io(&tmp, e))?;
        f.write_all(bytes).map_err(|e| Error::io(&tmp, e))?;
        f.sync_all().map_err(|e| Error::io(&tmp, e))?;
    }
    fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
}

/// 8-bit binary PGM, values clamped from `[0, 1]`.
pub fn encode_pgm(img: &Image) -> Vec<u8> {
    let (h, w) = img.shape();
    let mut out = format!("P5\n{w} {h}\n255\n").into_bytes();
    out.extend(img.as_slice().iter().map(|v| (v.clamp(0.0, 1.0) * 255.0).round() as u8));
    out
}

fn pgm_tokens(b: &[u8], count: usize) -> Result<(Vec<String>, usize)> {
    let mut toks = Vec::new();
    let mut i = 0;
    while toks.len() < count {
        while i < b.len() && b[i].is_ascii_whitespace() {
            i += 1;
        }
        if i < b.len() && b[i] == b'#' {
            while i < b.len() && b[i] != b'\n' {
                i += 1;
            }
            continue;
        }
        let start = i;
        while i < b.len() && !b[i].is_ascii_whitespace() {
            i += 1;
        }
        if start == i {
            return Err(Error::Pgm("unexpected end of header".into()));
        }
        toks.push(String::from_utf8_lossy(&b[start..i]).into_owned());
    }
    Ok((toks, i))
}

/// Reads P2 (ASCII) or P5 (binary, 8 or 16 bit) into `[0, 1]`.
pub fn decode_pgm(b: &[u8]) -> Result<Image> {
    let (head, pos) = pgm_tokens(b, 4)?;
    let num = |s: &str| {
        s.parse::<usize>()
            .map_err(|_| Error::Pgm(format!("bad header field `{s}`")))
    };
    let (w, h, maxval) = (num(&head[1])?, num(&head[2])?, num(&head[3])?);
    if maxval == 0 || maxval > 65535 {
        return Err(Error::Pgm(format!("bad maxval {maxval}")));
    }
    let n = w * h;
    let scale = 1.0 / maxval as f64;
    let data: Vec<f64> = match head[0].as_str() {
        "P2" => {
            let (vals, _) = pgm_tokens(&b[pos..], n)?;
            vals.iter()
                .map(|s| num(s).map(|v| v as f64 * scale))
                .collect::<Result<_>>()?
        }
        "P5" => {
            let body = &b[(pos + 1).min(b.len())..];
            let bpp = if maxval < 256 { 1 } else { 2 };
            if body.len() < n * bpp {
                return Err(Error::Truncated {
                    expected: n * bpp,
                    found: body.len(),
                });
            }
            if bpp == 1 {
                body[..n].iter().map(|&v| v as f64 * scale).collect()
            } else {
                body[..2 * n]
                    .chunks_exact(2)
                    .map(|c| u16::from_be_bytes([c[0], c[1]]) as f64 * scale)
                    .collect()
            }
        }
        other => return Err(Error::Pgm(format!("unsupported magic `{other}`"))),
    };
    Image::new(h, w, data)
}

pub fn write_pgm(path: &Path, img: &Image) -> Result<()> {
    write_atomic(path, &encode_pgm(img))
}

pub fn read_pgm(path: &Path) -> Result<Image> {
    let b = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_pgm(&b)
}
