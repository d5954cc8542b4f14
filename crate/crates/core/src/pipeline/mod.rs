//! End-to-end orchestration: configuration, dataset manifests, and the
//! generate / render / preprocess / train / evaluate / compare commands.

mod config;
mod manifest;
mod run;

pub use config::{
    Arm, DatasetConfig, EvalConfig, PathsConfig, PreprocessSection, RunConfig, TrainingConfig,
};
pub use manifest::{DatasetManifest, ManifestEntry};
pub use run::{
    arm_config, cmd_compare, cmd_evaluate, cmd_generate, cmd_metrics_from_cm, cmd_preprocess,
    cmd_render, cmd_train, ensure_dataset, parse_confusion_file, ArmResult, CompareReport,
    EpochRecord, MetricsBody, MetricsReport, RoundResult, TrainOutcome,
};

use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Sim(#[from] crate::sigsim::SimError),
    #[error(transparent)]
    Spectro(#[from] crate::spectro::SpectroError),
    #[error(transparent)]
    Img(#[from] crate::imgproc::ImgError),
    #[error(transparent)]
    Nn(#[from] crate::nn::NnError),
    #[error(transparent)]
    Optim(#[from] crate::optim::OptimError),
    #[error(transparent)]
    Eval(#[from] crate::evalkit::EvalError),
    #[error("invalid config: {0}")]
    InvalidConfig(String),
    #[error("missing file: {0}")]
    MissingFile(PathBuf),
    #[error("config hash mismatch: artifact was built from {artifact}, current config is {current}")]
    HashMismatch { artifact: String, current: String },
    #[error("non-finite loss at epoch {epoch}, batch {batch}; aborting")]
    NonFiniteLoss { epoch: usize, batch: usize },
    #[error("malformed confusion matrix: {0}")]
    BadMatrixFile(String),
}
