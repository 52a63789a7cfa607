//! Square grayscale images on the unit square and their PGM encoding.
//!
//! Pixel `(row, col)` of an `S x S` image covers
//! `x in [col/S, (col+1)/S]`, `y in [1 - (row+1)/S, 1 - row/S]`: row 0 is the top.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use image::ImageReader;
use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::spectral::{GridTransform, SpectralField, ANGULAR_FREQUENCY};

#[derive(Debug, Clone, PartialEq)]
pub struct Image {
    size: usize,
    pixels: Vec<f64>,
}

impl Image {
    pub fn new(size: usize, pixels: Vec<f64>) -> Result<Self> {
        if size == 0 || pixels.len() != size * size {
            return Err(Error::DimensionMismatch(format!(
                "{} pixels for a {size}x{size} image",
                pixels.len()
            )));
        }
        if pixels.iter().any(|p| !p.is_finite()) {
            return Err(Error::InvalidParameter("image has non-finite pixels".into()));
        }
        Ok(Self { size, pixels })
    }

    /// Samples `f(x, y)` at pixel centres.
    pub fn from_fn(size: usize, f: impl Fn(f64, f64) -> f64) -> Result<Self> {
        let s = size as f64;
        let pixels = (0..size * size)
            .map(|i| {
                let (row, col) = (i / size, i % size);
                f((col as f64 + 0.5) / s, 1.0 - (row as f64 + 0.5) / s)
            })
            .collect();
        Self::new(size, pixels)
    }

    pub fn size(&self) -> usize {
        self.size
    }

    pub fn pixels(&self) -> &[f64] {
        &self.pixels
    }

    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.pixels[row * self.size + col]
    }

    pub fn range(&self) -> (f64, f64) {
        self.pixels
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &p| (lo.min(p), hi.max(p)))
    }

    /// Reads a binary or ASCII PGM; values are scaled to `[0, 1]` by the maxval.
    pub fn read_pgm(path: &Path) -> Result<Self> {
        let decoded = ImageReader::open(path)?
            .with_guessed_format()?
            .decode()
            .map_err(|e| Error::Archive(format!("{}: {e}", path.display())))?;
        let gray = decoded.to_luma16();
        let (w, h) = gray.dimensions();
        if w != h {
            return Err(Error::InvalidParameter(format!(
                "{}: image must be square, got {w}x{h}",
                path.display()
            )));
        }
        let pixels = gray.as_raw().iter().map(|&v| v as f64 / u16::MAX as f64).collect();
        Self::new(w as usize, pixels)
    }

    /// Writes a binary PGM, mapping `[lo, hi]` linearly onto `0..=maxval` and clamping.
    pub fn write_pgm(&self, path: &Path, sixteen_bit: bool, lo: f64, hi: f64) -> Result<()> {
        let span = if hi > lo { hi - lo } else { 1.0 };
        let max = if sixteen_bit { u16::MAX } else { u8::MAX as u16 };
        let mut out = BufWriter::new(File::create(path)?);
        write!(out, "P5\n{0} {0}\n{max}\n", self.size)?;
        for &p in &self.pixels {
            let v = (((p - lo) / span).clamp(0.0, 1.0) * max as f64).round() as u16;
            if sixteen_bit {
                out.write_all(&v.to_be_bytes())?;
            } else {
                out.write_all(&[v as u8])?;
            }
        }
        out.flush()?;
        Ok(())
    }
}

/// Evaluates a 2-D field at the pixel centres of an `S x S` image.
pub fn render(field: &SpectralField, size: usize) -> Result<Image> {
    let spec = field.spec();
    if spec.dim() != 2 {
        return Err(Error::InvalidParameter(format!("render needs d = 2, got d = {}", spec.dim())));
    }
    // Half-pixel shift so that FFT nodes j/S land on pixel centres.
    let shift = 0.5 / size as f64;
    let shifted: Vec<Complex64> = (0..spec.len())
        .map(|pos| {
            let k = spec.multi_index_at(pos);
            let phase = ANGULAR_FREQUENCY * shift * (k[0] + k[1]) as f64;
            field.coeffs()[pos] * Complex64::from_polar(1.0, phase)
        })
        .collect();
    let shifted = SpectralField::from_coeffs_unchecked(spec, shifted);
    let grid = GridTransform::new(2, size)?.synthesize(&shifted)?;
    // Grid sample (i, j) sits at x = i/S, y = j/S.
    let samples = grid.samples();
    Image::from_fn(size, |x, y| {
        let i = (x * size as f64 - 0.5).round() as usize;
        let j = (y * size as f64 - 0.5).round() as usize;
        samples[i * size + j]
    })
}
