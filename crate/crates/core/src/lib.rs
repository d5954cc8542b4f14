//! Narrowband radio signal classification pipeline.
//!
//! This crate simulates seven classes of narrowband radio signals as complex
//! baseband time series, renders them to time-frequency power spectrograms,
//! applies Gaussian smoothing and edge-detection preprocessing, trains a small
//! densely-connected CNN with the Adamax optimizer, and evaluates the result
//! with confusion-matrix metrics under a stratified k-fold protocol.
//!
//! The stages map onto modules:
//!
//! 1. [`sigsim`] — signal synthesis and 8-bit complex persistence
//! 2. [`spectro`] — windowed DFT power spectrograms and grayscale rendering
//! 3. [`imgproc`] — Gaussian smoothing, Sobel/Scharr/Laplace edge maps, resizing
//! 4. [`nn`] — a minimal tensor engine and the MiniDense classifier
//! 5. [`optim`] — the Adamax update rule, in two variants
//! 6. [`evalkit`] — confusion matrices, per-class P/R/F1, Macro-F1, k-fold splits
//! 7. [`pipeline`] — configuration, manifests, and the end-to-end commands
//!
//! Every stage is deterministic given its seeds: rerunning a command with the
//! same configuration reproduces its outputs byte for byte.

pub mod complex;
pub mod evalkit;
pub mod imgproc;
pub mod nn;
pub mod optim;
pub mod pipeline;
pub mod seeds;
pub mod sigsim;
pub mod spectro;

pub use complex::Complex64;
pub use sigsim::{Complex8Series, ComplexTimeSeries, SignalClass, SimParams};
pub use spectro::{GrayImage, Spectrogram, SpectrogramConfig};
