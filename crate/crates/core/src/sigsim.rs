//! Synthesis of the seven simulated narrowband signal classes.
//!
//! Each class is generated as a complex baseband time series
//! `s[n] = A * gate(n) * exp(i*phi[n]) + z[n]` where the phase accumulates
//! `2*pi*f(w)` per sample with a piecewise-constant per-window frequency
//! trajectory `f`, `z` is circular Gaussian noise with unit per-component
//! deviation, and `gate` switches the tone on and off for the pulsed and
//! burst classes. Series are persisted as interleaved signed 8-bit pairs
//! with a JSON sidecar holding the generation parameters.

use std::f64::consts::TAU;
use std::fs;
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::complex::Complex64;
use crate::seeds;

#[derive(Debug, Error)]
pub enum SimError {
    #[error("invalid parameter: {0}")]
    InvalidParams(String),
    #[error("series is all zero; quantization scale is undefined")]
    ZeroSignal,
    #[error("payload length mismatch: expected {expected} bytes, found {actual}")]
    LengthMismatch { expected: usize, actual: usize },
    #[error("malformed sidecar: {0}")]
    MalformedSidecar(String),
    #[error("unknown signal class label {0:?}")]
    UnknownClass(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// The seven signal classes, with stable integer codes assigned in
/// alphabetical label order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SignalClass {
    BrightPixel = 0,
    Narrowband = 1,
    NarrowbandDrd = 2,
    Noise = 3,
    SquarePulsedNarrowband = 4,
    Squiggle = 5,
    SquiggleSquarePulsedNarrowband = 6,
}

impl SignalClass {
    pub const ALL: [SignalClass; 7] = [
        SignalClass::BrightPixel,
        SignalClass::Narrowband,
        SignalClass::NarrowbandDrd,
        SignalClass::Noise,
        SignalClass::SquarePulsedNarrowband,
        SignalClass::Squiggle,
        SignalClass::SquiggleSquarePulsedNarrowband,
    ];

    pub const COUNT: usize = 7;

    pub fn code(self) -> usize {
        self as usize
    }

    pub fn from_code(code: usize) -> Option<SignalClass> {
        Self::ALL.get(code).copied()
    }

    pub fn label(self) -> &'static str {
        match self {
            SignalClass::BrightPixel => "brightpixel",
            SignalClass::Narrowband => "narrowband",
            SignalClass::NarrowbandDrd => "narrowbanddrd",
            SignalClass::Noise => "noise",
            SignalClass::SquarePulsedNarrowband => "squarepulsednarrowband",
            SignalClass::Squiggle => "squiggle",
            SignalClass::SquiggleSquarePulsedNarrowband => "squigglesquarepulsednarrowband",
        }
    }

    pub fn from_label(label: &str) -> Result<SignalClass, SimError> {
        Self::ALL
            .iter()
            .copied()
            .find(|c| c.label() == label)
            .ok_or_else(|| SimError::UnknownClass(label.to_string()))
    }

    /// True for every class that carries a tone (everything but `Noise`).
    pub fn has_tone(self) -> bool {
        self != SignalClass::Noise
    }

    /// True for the square-wave amplitude-modulated classes.
    pub fn is_pulsed(self) -> bool {
        matches!(
            self,
            SignalClass::SquarePulsedNarrowband | SignalClass::SquiggleSquarePulsedNarrowband
        )
    }

    /// True for the classes whose carrier wanders as a random walk.
    pub fn is_squiggle(self) -> bool {
        matches!(
            self,
            SignalClass::Squiggle | SignalClass::SquiggleSquarePulsedNarrowband
        )
    }
}

/// Simulation parameters for one sample.
///
/// Frequencies are normalized to cycles/sample in `[-0.5, 0.5)`; drift and
/// curvature are per window and per window squared. `snr_db` relates the tone
/// amplitude to the unit per-component noise deviation by
/// `A = 10^(snr_db/20)`; `f64::INFINITY` disables the noise entirely and uses
/// unit amplitude, which makes spectral positions exactly predictable.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimParams {
    pub n_fft: usize,
    pub n_rows: usize,
    #[serde(with = "serde_snr")]
    pub snr_db: f64,
    pub f_start: f64,
    pub drift_rate: f64,
    pub curvature: f64,
    pub squiggle_step_std: f64,
    pub squiggle_smooth_len: usize,
    pub pulse_period: usize,
    pub pulse_duty: f64,
    pub brightpixel_windows: usize,
    pub rng_seed: u64,
}

impl Default for SimParams {
    fn default() -> Self {
        SimParams {
            n_fft: 512,
            n_rows: 384,
            snr_db: 15.0,
            f_start: 0.1,
            drift_rate: 0.0,
            curvature: 0.0,
            squiggle_step_std: 0.002,
            squiggle_smooth_len: 8,
            pulse_period: 48,
            pulse_duty: 0.5,
            brightpixel_windows: 16,
            rng_seed: 0,
        }
    }
}

impl SimParams {
    pub fn total_samples(&self) -> usize {
        self.n_fft * self.n_rows
    }

    /// Tone amplitude for a given class: 0 for noise, 1 when noise is
    /// disabled, `10^(snr_db/20)` otherwise.
    pub fn tone_amplitude(&self, class: SignalClass) -> f64 {
        if !class.has_tone() {
            0.0
        } else if self.snr_db.is_infinite() {
            1.0
        } else {
            10f64.powf(self.snr_db / 20.0)
        }
    }

    /// True when the additive noise term is suppressed.
    pub fn noise_disabled(&self) -> bool {
        self.snr_db.is_infinite() && self.snr_db > 0.0
    }

    pub fn validate(&self) -> Result<(), SimError> {
        if self.n_fft == 0 || self.n_rows == 0 {
            return Err(SimError::InvalidParams(
                "n_fft and n_rows must be positive".into(),
            ));
        }
        if self.f_start <= -0.5 || self.f_start >= 0.5 || self.f_start.is_nan() {
            return Err(SimError::InvalidParams(format!(
                "f_start {} outside (-0.5, 0.5)",
                self.f_start
            )));
        }
        if self.snr_db.is_nan() {
            return Err(SimError::InvalidParams("snr_db is NaN".into()));
        }
        if !self.drift_rate.is_finite() || !self.curvature.is_finite() {
            return Err(SimError::InvalidParams(
                "drift_rate and curvature must be finite".into(),
            ));
        }
        if self.squiggle_step_std < 0.0 || !self.squiggle_step_std.is_finite() {
            return Err(SimError::InvalidParams(
                "squiggle_step_std must be a finite value >= 0".into(),
            ));
        }
        if self.squiggle_smooth_len == 0 {
            return Err(SimError::InvalidParams(
                "squiggle_smooth_len must be >= 1".into(),
            ));
        }
        if self.pulse_period == 0 {
            return Err(SimError::InvalidParams("pulse_period must be >= 1".into()));
        }
        if !(self.pulse_duty > 0.0 && self.pulse_duty < 1.0) {
            return Err(SimError::InvalidParams(format!(
                "pulse_duty {} outside (0, 1)",
                self.pulse_duty
            )));
        }
        if self.brightpixel_windows == 0 || self.brightpixel_windows > self.n_rows {
            return Err(SimError::InvalidParams(
                "brightpixel_windows must be in [1, n_rows]".into(),
            ));
        }
        Ok(())
    }
}

/// Full-precision complex baseband samples.
#[derive(Debug, Clone, PartialEq)]
pub struct ComplexTimeSeries {
    pub samples: Vec<Complex64>,
}

impl ComplexTimeSeries {
    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }
}

/// 8-bit quantized complex samples: `code = round(scale * value)` per
/// component, clipped to `[-128, 127]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Complex8Series {
    pub codes: Vec<(i8, i8)>,
    pub scale: f64,
}

impl Complex8Series {
    pub fn len(&self) -> usize {
        self.codes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.codes.is_empty()
    }
}

/// Wraps a normalized frequency into `[-0.5, 0.5)`.
pub fn wrap_frequency(f: f64) -> f64 {
    f - (f + 0.5).floor()
}

/// Per-window carrier frequency trajectory for a class.
///
/// Noise has no carrier and yields an empty trajectory. The squiggle walk
/// draws `n_rows` Gaussian steps of deviation `squiggle_step_std` from
/// `ChaCha8Rng::seed_from_u64(seeds::derive(rng_seed, seeds::STREAM_TRAJECTORY))`,
/// accumulates them, and applies a trailing moving average of length
/// `squiggle_smooth_len` (truncated at the start). All values are wrapped
/// into `[-0.5, 0.5)`.
pub fn frequency_trajectory(
    class: SignalClass,
    params: &SimParams,
) -> Result<Vec<f64>, SimError> {
    params.validate()?;
    if !class.has_tone() {
        return Ok(Vec::new());
    }
    let n = params.n_rows;
    let mut traj = Vec::with_capacity(n);
    for w in 0..n {
        let w_f = w as f64;
        let mut f = params.f_start + params.drift_rate * w_f;
        if class == SignalClass::NarrowbandDrd {
            f += params.curvature * w_f * w_f;
        }
        traj.push(f);
    }
    if class.is_squiggle() && params.squiggle_step_std > 0.0 {
        let walk = squiggle_walk(params);
        for (f, w) in traj.iter_mut().zip(walk) {
            *f += w;
        }
    }
    for f in traj.iter_mut() {
        *f = wrap_frequency(*f);
    }
    Ok(traj)
}

/// The smoothed cumulative Gaussian walk added to squiggle carriers.
fn squiggle_walk(params: &SimParams) -> Vec<f64> {
    let n = params.n_rows;
    let mut rng =
        ChaCha8Rng::seed_from_u64(seeds::derive(params.rng_seed, seeds::STREAM_TRAJECTORY));
    let mut cumulative = Vec::with_capacity(n);
    let mut acc = 0.0f64;
    for _ in 0..n {
        let step: f64 = StandardNormal.sample(&mut rng);
        acc += step * params.squiggle_step_std;
        cumulative.push(acc);
    }
    let len = params.squiggle_smooth_len;
    let mut smoothed = Vec::with_capacity(n);
    let mut window_sum = 0.0f64;
    for w in 0..n {
        window_sum += cumulative[w];
        if w >= len {
            window_sum -= cumulative[w - len];
        }
        let count = (w + 1).min(len);
        smoothed.push(window_sum / count as f64);
    }
    smoothed
}

/// Per-window on/off mask for the tone.
///
/// Pulsed classes cycle with `pulse_period` windows per cycle and a window
/// `w` is on iff `(w mod period) < duty * period`. Brightpixel is on only for
/// a burst of `brightpixel_windows` windows whose start is drawn uniformly
/// from the gate stream. All other classes are always on (noise is never on;
/// it has no tone to gate).
pub fn gate_mask(class: SignalClass, params: &SimParams) -> Result<Vec<bool>, SimError> {
    params.validate()?;
    let n = params.n_rows;
    if !class.has_tone() {
        return Ok(vec![false; n]);
    }
    let mask = match class {
        SignalClass::BrightPixel => {
            let mut rng =
                ChaCha8Rng::seed_from_u64(seeds::derive(params.rng_seed, seeds::STREAM_GATE));
            let max_start = n - params.brightpixel_windows;
            let start = if max_start == 0 {
                0
            } else {
                rng.gen_range(0..=max_start)
            };
            (0..n)
                .map(|w| w >= start && w < start + params.brightpixel_windows)
                .collect()
        }
        c if c.is_pulsed() => {
            let on = params.pulse_duty * params.pulse_period as f64;
            (0..n)
                .map(|w| ((w % params.pulse_period) as f64) < on)
                .collect()
        }
        _ => vec![true; n],
    };
    Ok(mask)
}

/// Synthesizes one sample of the given class.
///
/// Deterministic: identical `(class, params)` including `rng_seed` yield a
/// bit-identical series.
pub fn simulate(class: SignalClass, params: &SimParams) -> Result<ComplexTimeSeries, SimError> {
    params.validate()?;
    let total = params.total_samples();
    let mut samples = vec![Complex64::ZERO; total];

    if class.has_tone() {
        let traj = frequency_trajectory(class, params)?;
        let gate = gate_mask(class, params)?;
        let amp = params.tone_amplitude(class);
        let mut phase = 0.0f64;
        for (n, s) in samples.iter_mut().enumerate() {
            let w = n / params.n_fft;
            if gate[w] {
                *s = Complex64::from_polar(amp, phase);
            }
            phase += TAU * traj[w];
            // keep the accumulator bounded; exp(i*phi) is 2*pi periodic
            if phase > 1e9 {
                phase %= TAU;
            }
        }
    }

    if !params.noise_disabled() {
        let mut rng =
            ChaCha8Rng::seed_from_u64(seeds::derive(params.rng_seed, seeds::STREAM_NOISE));
        for s in samples.iter_mut() {
            let re: f64 = StandardNormal.sample(&mut rng);
            let im: f64 = StandardNormal.sample(&mut rng);
            *s += Complex64::new(re, im);
        }
    }

    Ok(ComplexTimeSeries { samples })
}

fn round_half_away(x: f64) -> f64 {
    x.round()
}

/// Quantizes a series to 8 bits per component.
///
/// The scale maps four times the per-component RMS to code 127, so Gaussian
/// tails clip rarely while most of the 8-bit range is used.
pub fn quantize(series: &ComplexTimeSeries) -> Result<Complex8Series, SimError> {
    if series.is_empty() {
        return Err(SimError::ZeroSignal);
    }
    let mut sum_sq = 0.0f64;
    for s in &series.samples {
        if !s.is_finite() {
            return Err(SimError::InvalidParams("non-finite sample".into()));
        }
        sum_sq += s.norm_sqr();
    }
    if sum_sq == 0.0 {
        return Err(SimError::ZeroSignal);
    }
    let rms = (sum_sq / (2.0 * series.len() as f64)).sqrt();
    let scale = 127.0 / (4.0 * rms);
    let codes = series
        .samples
        .iter()
        .map(|s| {
            let q = |v: f64| round_half_away(scale * v).clamp(-128.0, 127.0) as i8;
            (q(s.re), q(s.im))
        })
        .collect();
    Ok(Complex8Series { codes, scale })
}

/// Inverse of [`quantize`] up to rounding: `code / scale` per component.
pub fn dequantize(c8: &Complex8Series) -> ComplexTimeSeries {
    let samples = c8
        .codes
        .iter()
        .map(|&(re, im)| Complex64::new(re as f64 / c8.scale, im as f64 / c8.scale))
        .collect();
    ComplexTimeSeries { samples }
}

/// Generation metadata stored alongside a `.c8` payload.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct C8Sidecar {
    pub class: SignalClass,
    pub scale: f64,
    pub params: SimParams,
}

/// Path of the sidecar for a payload path: the extension is replaced with
/// `meta.json` (`sample.c8` -> `sample.meta.json`).
pub fn sidecar_path(path: &Path) -> PathBuf {
    path.with_extension("meta.json")
}

/// Writes the payload (interleaved signed 8-bit `(re, im)` pairs) and its
/// JSON sidecar.
pub fn write_c8(path: &Path, c8: &Complex8Series, sidecar: &C8Sidecar) -> Result<(), SimError> {
    let mut payload = Vec::with_capacity(c8.len() * 2);
    for &(re, im) in &c8.codes {
        payload.push(re as u8);
        payload.push(im as u8);
    }
    fs::write(path, &payload)?;
    let json = serde_json::to_string_pretty(sidecar)
        .map_err(|e| SimError::MalformedSidecar(e.to_string()))?;
    fs::write(sidecar_path(path), json)?;
    Ok(())
}

/// Reads a payload and its sidecar, checking that the payload length matches
/// the geometry recorded in the sidecar.
pub fn read_c8(path: &Path) -> Result<(Complex8Series, C8Sidecar), SimError> {
    let sidecar_text = fs::read_to_string(sidecar_path(path))?;
    let sidecar: C8Sidecar = serde_json::from_str(&sidecar_text)
        .map_err(|e| SimError::MalformedSidecar(e.to_string()))?;
    let payload = fs::read(path)?;
    let expected = sidecar.params.total_samples() * 2;
    if payload.len() != expected {
        return Err(SimError::LengthMismatch {
            expected,
            actual: payload.len(),
        });
    }
    if sidecar.scale <= 0.0 || !sidecar.scale.is_finite() {
        return Err(SimError::MalformedSidecar(format!(
            "scale {} must be positive",
            sidecar.scale
        )));
    }
    let codes = payload
        .chunks_exact(2)
        .map(|pair| (pair[0] as i8, pair[1] as i8))
        .collect();
    Ok((
        Complex8Series {
            codes,
            scale: sidecar.scale,
        },
        sidecar,
    ))
}

/// JSON does not represent infinities; the noise-disabled sentinel is stored
/// as the string `"inf"`.
mod serde_snr {
    use serde::{de, Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(value: &f64, ser: S) -> Result<S::Ok, S::Error> {
        if value.is_infinite() && *value > 0.0 {
            ser.serialize_str("inf")
        } else {
            ser.serialize_f64(*value)
        }
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(de: D) -> Result<f64, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Num(f64),
            Text(String),
        }
        match Raw::deserialize(de)? {
            Raw::Num(v) => Ok(v),
            Raw::Text(s) if s == "inf" || s == "+inf" => Ok(f64::INFINITY),
            Raw::Text(s) => Err(de::Error::custom(format!("invalid snr_db value {s:?}"))),
        }
    }
}
