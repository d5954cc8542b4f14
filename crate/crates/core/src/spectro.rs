//! Time-frequency power spectrograms and 8-bit grayscale rendering.
//!
//! A series is cut into `n_rows` consecutive non-overlapping windows of
//! `n_fft` samples (rectangular windowing), each window is transformed with
//! an unnormalized forward DFT, and per-bin power `|X[k]|^2` fills one
//! spectrogram row. Rendering maps power (optionally log-compressed) through
//! per-image min-max normalization onto `[0, 255]`.

use std::f64::consts::TAU;
use std::fs;
use std::io::BufWriter;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::complex::Complex64;
use crate::sigsim::ComplexTimeSeries;

#[derive(Debug, Error)]
pub enum SpectroError {
    #[error("length mismatch: expected {expected}, found {actual}")]
    LengthMismatch { expected: usize, actual: usize },
    #[error("transform length {0} is not a power of two >= 2")]
    NotPowerOfTwo(usize),
    #[error("invalid config: {0}")]
    InvalidConfig(String),
    #[error("not a binary PGM (P5) file")]
    BadMagic,
    #[error("unsupported PGM maxval {0}; only 255 is supported")]
    BadMaxval(u32),
    #[error("malformed PGM header: {0}")]
    BadHeader(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error("png encoding failed: {0}")]
    Png(String),
}

/// How spectrogram power maps to display values.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PowerMap {
    Log10,
    Linear,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpectrogramConfig {
    pub n_fft: usize,
    pub n_rows: usize,
    /// Rotate columns so frequency 0 lands in the middle of the image.
    pub center_zero_freq: bool,
    pub power_map: PowerMap,
    /// Added to power before the logarithm so zero power stays finite.
    pub log_floor: f64,
}

impl Default for SpectrogramConfig {
    fn default() -> Self {
        SpectrogramConfig {
            n_fft: 512,
            n_rows: 384,
            center_zero_freq: true,
            power_map: PowerMap::Log10,
            log_floor: 1e-12,
        }
    }
}

impl SpectrogramConfig {
    pub fn validate(&self) -> Result<(), SpectroError> {
        if self.n_fft < 2 || !self.n_fft.is_power_of_two() {
            return Err(SpectroError::NotPowerOfTwo(self.n_fft));
        }
        if self.n_rows == 0 {
            return Err(SpectroError::InvalidConfig("n_rows must be positive".into()));
        }
        if self.log_floor <= 0.0 || self.log_floor.is_nan() {
            return Err(SpectroError::InvalidConfig(
                "log_floor must be positive".into(),
            ));
        }
        Ok(())
    }
}

/// A time x frequency power matrix: row = time window, column = frequency bin.
#[derive(Debug, Clone, PartialEq)]
pub struct Spectrogram {
    pub rows: usize,
    pub cols: usize,
    pub power: Vec<f64>,
}

impl Spectrogram {
    pub fn at(&self, row: usize, col: usize) -> f64 {
        self.power[row * self.cols + col]
    }

    pub fn row(&self, row: usize) -> &[f64] {
        &self.power[row * self.cols..(row + 1) * self.cols]
    }
}

/// An 8-bit grayscale image, row-major.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GrayImage {
    pub height: usize,
    pub width: usize,
    pub pixels: Vec<u8>,
}

impl GrayImage {
    pub fn new(height: usize, width: usize, pixels: Vec<u8>) -> Self {
        assert_eq!(height * width, pixels.len(), "pixel count mismatch");
        GrayImage {
            height,
            width,
            pixels,
        }
    }

    pub fn filled(height: usize, width: usize, value: u8) -> Self {
        GrayImage {
            height,
            width,
            pixels: vec![value; height * width],
        }
    }

    pub fn at(&self, row: usize, col: usize) -> u8 {
        self.pixels[row * self.width + col]
    }

    pub fn set(&mut self, row: usize, col: usize, value: u8) {
        self.pixels[row * self.width + col] = value;
    }
}

/// Unnormalized forward DFT: `X[k] = sum_n x[n] * exp(-i*2*pi*k*n/N)`.
///
/// The length must be a power of two (radix-2 transform); accuracy against
/// the direct summation is well below 1e-9 relative for the sizes used here.
pub fn dft(input: &[Complex64]) -> Result<Vec<Complex64>, SpectroError> {
    let n = input.len();
    if n < 2 || !n.is_power_of_two() {
        return Err(SpectroError::NotPowerOfTwo(n));
    }
    let mut buf = input.to_vec();
    // bit-reversal permutation
    let bits = n.trailing_zeros();
    for i in 0..n {
        let j = (i.reverse_bits() >> (usize::BITS - bits)) as usize;
        if j > i {
            buf.swap(i, j);
        }
    }
    // iterative butterflies
    let mut len = 2;
    while len <= n {
        let ang = -TAU / len as f64;
        let w_len = Complex64::cis(ang);
        for start in (0..n).step_by(len) {
            let mut w = Complex64::new(1.0, 0.0);
            for k in 0..len / 2 {
                let a = buf[start + k];
                let b = buf[start + k + len / 2] * w;
                buf[start + k] = a + b;
                buf[start + k + len / 2] = a - b;
                w = w * w_len;
            }
        }
        len <<= 1;
    }
    Ok(buf)
}

/// Short-time power spectrogram over consecutive non-overlapping windows.
///
/// With `center_zero_freq`, columns are rotated so that bin 0 (frequency 0)
/// lands at column `n_fft / 2`; column `c` then represents normalized
/// frequency `(c - n_fft/2) / n_fft`.
pub fn stft_power(
    series: &ComplexTimeSeries,
    cfg: &SpectrogramConfig,
) -> Result<Spectrogram, SpectroError> {
    cfg.validate()?;
    let expected = cfg.n_fft * cfg.n_rows;
    if series.len() != expected {
        return Err(SpectroError::LengthMismatch {
            expected,
            actual: series.len(),
        });
    }
    let n = cfg.n_fft;
    let half = n / 2;
    let mut power = vec![0.0f64; cfg.n_rows * n];
    for (w, window) in series.samples.chunks_exact(n).enumerate() {
        let bins = dft(window)?;
        let row = &mut power[w * n..(w + 1) * n];
        for (k, bin) in bins.iter().enumerate() {
            let col = if cfg.center_zero_freq { (k + half) % n } else { k };
            row[col] = bin.norm_sqr();
        }
    }
    Ok(Spectrogram {
        rows: cfg.n_rows,
        cols: n,
        power,
    })
}

/// Centered column index for a normalized frequency in `[-0.5, 0.5)`.
pub fn frequency_to_column(freq: f64, n_fft: usize) -> usize {
    let n = n_fft as i64;
    let bin = (freq * n_fft as f64).round() as i64;
    (bin + n / 2).rem_euclid(n) as usize
}

/// Renders power to 8-bit grayscale via per-image min-max normalization.
///
/// A constant spectrogram (degenerate range) maps to all-zero pixels. Rows of
/// the image are time windows top to bottom.
pub fn to_gray(spec: &Spectrogram, cfg: &SpectrogramConfig) -> GrayImage {
    let values: Vec<f64> = match cfg.power_map {
        PowerMap::Log10 => spec
            .power
            .iter()
            .map(|&p| (p + cfg.log_floor).log10())
            .collect(),
        PowerMap::Linear => spec.power.clone(),
    };
    let min = values.iter().copied().fold(f64::INFINITY, f64::min);
    let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let pixels = if max > min {
        let span = max - min;
        values
            .iter()
            .map(|&v| (255.0 * (v - min) / span).round() as u8)
            .collect()
    } else {
        vec![0u8; values.len()]
    };
    GrayImage {
        height: spec.rows,
        width: spec.cols,
        pixels,
    }
}

/// Writes a binary 8-bit PGM (magic `P5`, maxval 255).
pub fn write_pgm(path: &Path, img: &GrayImage) -> Result<(), SpectroError> {
    let mut out = Vec::with_capacity(img.pixels.len() + 32);
    out.extend_from_slice(format!("P5\n{} {}\n255\n", img.width, img.height).as_bytes());
    out.extend_from_slice(&img.pixels);
    fs::write(path, out)?;
    Ok(())
}

/// Reads a binary 8-bit PGM. Comments (`#` to end of line) are accepted in
/// the header; only maxval 255 is supported.
pub fn read_pgm(path: &Path) -> Result<GrayImage, SpectroError> {
    let bytes = fs::read(path)?;
    if bytes.len() < 2 || &bytes[0..2] != b"P5" {
        return Err(SpectroError::BadMagic);
    }
    let mut pos = 2usize;
    let mut fields = [0usize; 3];
    for field in fields.iter_mut() {
        // skip whitespace and comments
        loop {
            while pos < bytes.len() && bytes[pos].is_ascii_whitespace() {
                pos += 1;
            }
            if pos < bytes.len() && bytes[pos] == b'#' {
                while pos < bytes.len() && bytes[pos] != b'\n' {
                    pos += 1;
                }
            } else {
                break;
            }
        }
        let start = pos;
        while pos < bytes.len() && bytes[pos].is_ascii_digit() {
            pos += 1;
        }
        if start == pos {
            return Err(SpectroError::BadHeader("expected integer field".into()));
        }
        let text = std::str::from_utf8(&bytes[start..pos])
            .map_err(|_| SpectroError::BadHeader("non-utf8 header".into()))?;
        *field = text
            .parse()
            .map_err(|_| SpectroError::BadHeader(format!("bad integer {text:?}")))?;
    }
    let [width, height, maxval] = fields;
    if maxval != 255 {
        return Err(SpectroError::BadMaxval(maxval as u32));
    }
    if pos >= bytes.len() || !bytes[pos].is_ascii_whitespace() {
        return Err(SpectroError::BadHeader(
            "missing whitespace before payload".into(),
        ));
    }
    pos += 1;
    let payload = &bytes[pos..];
    let expected = width * height;
    if payload.len() != expected {
        return Err(SpectroError::LengthMismatch {
            expected,
            actual: payload.len(),
        });
    }
    Ok(GrayImage {
        height,
        width,
        pixels: payload.to_vec(),
    })
}

/// Writes an 8-bit grayscale PNG (no alpha), mirroring the PGM content.
pub fn write_png(path: &Path, img: &GrayImage) -> Result<(), SpectroError> {
    let file = fs::File::create(path)?;
    let writer = BufWriter::new(file);
    let mut encoder = png::Encoder::new(writer, img.width as u32, img.height as u32);
    encoder.set_color(png::ColorType::Grayscale);
    encoder.set_depth(png::BitDepth::Eight);
    let mut png_writer = encoder
        .write_header()
        .map_err(|e| SpectroError::Png(e.to_string()))?;
    png_writer
        .write_image_data(&img.pixels)
        .map_err(|e| SpectroError::Png(e.to_string()))?;
    Ok(())
}
