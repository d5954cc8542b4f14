//! Command implementations: generate, render, preprocess, train, evaluate,
//! compare, and the confusion-matrix metrics entry point.
//!
//! All commands are deterministic given the configuration; files are always
//! visited in manifest order, never directory order.

use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::evalkit::{self, ConfusionMatrix, EvalReport, Split};
use crate::imgproc;
use crate::nn::{load_checkpoint, save_checkpoint, Checkpoint, MiniDense, Tensor};
use crate::optim::{Adamax, AdamaxState};
use crate::pipeline::config::{Arm, PreprocessSection, RunConfig};
use crate::pipeline::manifest::{DatasetManifest, ManifestEntry};
use crate::pipeline::PipelineError;
use crate::seeds;
use crate::sigsim::{self, C8Sidecar, SignalClass, SimParams};
use crate::spectro::{self, PowerMap, SpectrogramConfig};

/// A run configuration with the preprocessing arm substituted; artifacts of
/// one arm carry this configuration's hash.
pub fn arm_config(cfg: &RunConfig, arm: Arm) -> RunConfig {
    let mut out = cfg.clone();
    out.preprocess.arm = arm;
    out
}

fn draw_uniform(rng: &mut ChaCha8Rng, (lo, hi): (f64, f64)) -> f64 {
    if lo == hi {
        lo
    } else {
        rng.gen_range(lo..=hi)
    }
}

fn draw_uniform_usize(rng: &mut ChaCha8Rng, (lo, hi): (usize, usize)) -> usize {
    if lo == hi {
        lo
    } else {
        rng.gen_range(lo..=hi)
    }
}

/// Per-sample simulation parameters drawn from the configured ranges.
/// The draw order is fixed so a given sample seed always yields the same
/// parameters regardless of class.
fn draw_params(cfg: &RunConfig, class: SignalClass, sample_seed: u64) -> SimParams {
    let d = &cfg.dataset;
    let mut rng = ChaCha8Rng::seed_from_u64(seeds::derive(sample_seed, seeds::STREAM_PARAMS));
    let snr_db = draw_uniform(&mut rng, d.snr_db);
    let f_start = draw_uniform(&mut rng, d.f_start);
    let drift_rate = draw_uniform(&mut rng, d.drift_rate);
    let curvature_mag = draw_uniform(&mut rng, d.curvature_mag);
    let curvature_negative: bool = rng.gen();
    let squiggle_step_std = draw_uniform(&mut rng, d.squiggle_step_std);
    let squiggle_smooth_len = draw_uniform_usize(&mut rng, d.squiggle_smooth_len);
    let pulse_period = draw_uniform_usize(&mut rng, d.pulse_period);
    let pulse_duty = draw_uniform(&mut rng, d.pulse_duty);
    let brightpixel_windows = draw_uniform_usize(&mut rng, d.brightpixel_windows);
    let curvature = if class == SignalClass::NarrowbandDrd {
        if curvature_negative {
            -curvature_mag
        } else {
            curvature_mag
        }
    } else {
        0.0
    };
    SimParams {
        n_fft: d.n_fft,
        n_rows: d.n_rows,
        snr_db,
        f_start,
        drift_rate,
        curvature,
        squiggle_step_std,
        squiggle_smooth_len,
        pulse_period,
        pulse_duty,
        brightpixel_windows: brightpixel_windows.min(d.n_rows),
        rng_seed: sample_seed,
    }
}

fn preprocessed_rel_path(arm: Arm, id: &str) -> PathBuf {
    PathBuf::from("preproc").join(arm.name()).join(format!("{id}.pgm"))
}

/// Generates the dataset: complex8 payloads with sidecars, plus the manifest
/// with fold and split assignments for the first configured round.
pub fn cmd_generate(cfg: &RunConfig) -> Result<DatasetManifest, PipelineError> {
    cfg.validate()?;
    let data_dir = &cfg.paths.data_dir;
    fs::create_dir_all(data_dir.join("raw"))?;
    fs::create_dir_all(data_dir.join("images"))?;

    let spc = cfg.dataset.samples_per_class;
    let mut entries = Vec::with_capacity(SignalClass::COUNT * spc);
    for class in SignalClass::ALL {
        for i in 0..spc {
            let global_index = (class.code() * spc + i) as u64;
            let sample_seed = seeds::sample_seed(cfg.dataset.master_seed, global_index);
            let params = draw_params(cfg, class, sample_seed);
            let series = sigsim::simulate(class, &params)?;
            let c8 = sigsim::quantize(&series)?;
            let id = format!("{}-{i:04}", class.label());
            let raw_rel = PathBuf::from("raw").join(format!("{id}.c8"));
            let sidecar = C8Sidecar {
                class,
                scale: c8.scale,
                params,
            };
            sigsim::write_c8(&data_dir.join(&raw_rel), &c8, &sidecar)?;
            entries.push(ManifestEntry {
                id: id.clone(),
                class,
                seed: sample_seed,
                raw: raw_rel,
                image: PathBuf::from("images").join(format!("{id}.pgm")),
                preprocessed: preprocessed_rel_path(cfg.preprocess.arm, &id),
                fold: 0,
                split: Split::Train,
            });
        }
    }

    let labels: Vec<usize> = entries.iter().map(|e| e.class.code()).collect();
    let plan = evalkit::stratified_kfold(
        &labels,
        SignalClass::COUNT,
        cfg.evaluation.k_folds,
        cfg.evaluation.seed,
    )?;
    let assignment = plan.round(cfg.evaluation.rounds[0])?;
    for (entry, (fold, split)) in entries
        .iter_mut()
        .zip(assignment.fold.iter().zip(&assignment.split))
    {
        entry.fold = *fold;
        entry.split = *split;
    }

    let manifest = DatasetManifest {
        config_hash: cfg.config_hash(),
        dataset_hash: cfg.dataset_hash(),
        entries,
    };
    manifest.save(data_dir)?;
    Ok(manifest)
}

fn spectrogram_config(cfg: &RunConfig) -> SpectrogramConfig {
    SpectrogramConfig {
        n_fft: cfg.dataset.n_fft,
        n_rows: cfg.dataset.n_rows,
        center_zero_freq: true,
        power_map: PowerMap::Log10,
        log_floor: 1e-12,
    }
}

/// Renders every raw sample to a grayscale spectrogram image.
pub fn cmd_render(cfg: &RunConfig, emit_png: bool) -> Result<(), PipelineError> {
    let data_dir = &cfg.paths.data_dir;
    let manifest = DatasetManifest::load(data_dir)?;
    manifest.check_dataset_hash(&cfg.dataset_hash())?;
    let scfg = spectrogram_config(cfg);
    for entry in &manifest.entries {
        let raw_path = data_dir.join(&entry.raw);
        if !raw_path.exists() {
            return Err(PipelineError::MissingFile(raw_path));
        }
        let (c8, _) = sigsim::read_c8(&raw_path)?;
        let series = sigsim::dequantize(&c8);
        let spec = spectro::stft_power(&series, &scfg)?;
        let img = spectro::to_gray(&spec, &scfg);
        let img_path = data_dir.join(&entry.image);
        spectro::write_pgm(&img_path, &img)?;
        if emit_png {
            spectro::write_png(&img_path.with_extension("png"), &img)?;
        }
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct PreprocMeta {
    /// Full hash of the arm configuration that produced the images
    /// (informational; compatibility is decided by the fields below).
    config_hash: String,
    dataset_hash: String,
    arm: Arm,
    section: PreprocessSection,
}

fn preproc_meta_path(data_dir: &Path, arm: Arm) -> PathBuf {
    data_dir.join("preproc").join(arm.name()).join("meta.json")
}

/// Applies the preprocessing chain of the given arm to every rendered image.
pub fn cmd_preprocess(cfg: &RunConfig, arm: Arm) -> Result<(), PipelineError> {
    let acfg = arm_config(cfg, arm);
    let data_dir = &acfg.paths.data_dir;
    let manifest = DatasetManifest::load(data_dir)?;
    manifest.check_dataset_hash(&acfg.dataset_hash())?;
    fs::create_dir_all(data_dir.join("preproc").join(arm.name()))?;
    let pipeline = acfg.preprocess.pipeline_for(arm);
    for entry in &manifest.entries {
        let img_path = data_dir.join(&entry.image);
        if !img_path.exists() {
            return Err(PipelineError::MissingFile(img_path));
        }
        let img = spectro::read_pgm(&img_path)?;
        let processed = imgproc::preprocess(&img, &pipeline)?;
        spectro::write_pgm(&data_dir.join(preprocessed_rel_path(arm, &entry.id)), &processed)?;
    }
    let meta = PreprocMeta {
        config_hash: acfg.config_hash(),
        dataset_hash: acfg.dataset_hash(),
        arm,
        section: acfg.preprocess.clone(),
    };
    fs::write(
        preproc_meta_path(data_dir, arm),
        serde_json::to_string_pretty(&meta)?,
    )?;
    Ok(())
}

/// Preprocessed images depend only on the dataset and preprocess sections,
/// so only those decide compatibility; the full config hash is informational.
fn check_preproc_meta(cfg: &RunConfig, arm: Arm) -> Result<(), PipelineError> {
    let acfg = arm_config(cfg, arm);
    let path = preproc_meta_path(&acfg.paths.data_dir, arm);
    if !path.exists() {
        return Err(PipelineError::MissingFile(path));
    }
    let meta: PreprocMeta = serde_json::from_str(&fs::read_to_string(&path)?)?;
    let compatible = meta.dataset_hash == acfg.dataset_hash()
        && meta.arm == arm
        && meta.section == acfg.preprocess;
    if !compatible {
        return Err(PipelineError::HashMismatch {
            artifact: format!("{}/{:?}", meta.dataset_hash, meta.section),
            current: format!("{}/{:?}", acfg.dataset_hash(), acfg.preprocess),
        });
    }
    Ok(())
}

/// Loads one preprocessed image as a normalized model input plane,
/// area-resizing when the model input dims differ from the stored image.
fn load_model_plane(
    data_dir: &Path,
    arm: Arm,
    id: &str,
    model: &crate::nn::ModelConfig,
) -> Result<Vec<f32>, PipelineError> {
    let path = data_dir.join(preprocessed_rel_path(arm, id));
    if !path.exists() {
        return Err(PipelineError::MissingFile(path));
    }
    let img = spectro::read_pgm(&path)?;
    let img = if img.height != model.input_height || img.width != model.input_width {
        imgproc::resize_area(&img, model.input_height, model.input_width)?
    } else {
        img
    };
    let mut plane: Vec<f32> = img.pixels.iter().map(|&p| p as f32 / 255.0).collect();
    if model.input_norm == crate::nn::InputNorm::Standardize {
        let n = plane.len() as f64;
        let mean = plane.iter().map(|&v| v as f64).sum::<f64>() / n;
        let var = plane
            .iter()
            .map(|&v| (v as f64 - mean) * (v as f64 - mean))
            .sum::<f64>()
            / n;
        let inv_std = 1.0 / var.sqrt().max(1e-6);
        for v in plane.iter_mut() {
            *v = ((*v as f64 - mean) * inv_std) as f32;
        }
    }
    Ok(plane)
}

fn batch_tensor(
    planes: &[Vec<f32>],
    indices: &[usize],
    h: usize,
    w: usize,
) -> Result<Tensor<f32>, PipelineError> {
    let mut data = Vec::with_capacity(indices.len() * h * w);
    for &i in indices {
        data.extend_from_slice(&planes[i]);
    }
    Ok(Tensor::new(&[indices.len(), 1, h, w], data)?)
}

/// Mean loss, accuracy, and argmax predictions over a set of samples.
fn evaluate_samples(
    model: &MiniDense<f32>,
    planes: &[Vec<f32>],
    labels: &[usize],
    indices: &[usize],
    batch_size: usize,
    h: usize,
    w: usize,
) -> Result<(f64, f64, Vec<usize>), PipelineError> {
    let mut total_loss = 0.0f64;
    let mut correct = 0usize;
    let mut predictions = Vec::with_capacity(indices.len());
    for chunk in indices.chunks(batch_size) {
        let batch = batch_tensor(planes, chunk, h, w)?;
        let batch_labels: Vec<usize> = chunk.iter().map(|&i| labels[i]).collect();
        let logits = model.forward(&batch)?;
        let (loss, _) = crate::nn::softmax_cross_entropy(&logits, &batch_labels)?;
        total_loss += loss * chunk.len() as f64;
        let (_, classes) = logits.dims2()?;
        for (row, &label) in batch_labels.iter().enumerate() {
            let row_data = &logits.data()[row * classes..(row + 1) * classes];
            let pred = row_data
                .iter()
                .enumerate()
                .max_by(|a, b| a.1.partial_cmp(b.1).unwrap_or(std::cmp::Ordering::Equal))
                .map(|(i, _)| i)
                .unwrap();
            predictions.push(pred);
            if pred == label {
                correct += 1;
            }
        }
    }
    let n = indices.len() as f64;
    Ok((total_loss / n, correct as f64 / n, predictions))
}

/// One line of training history.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    /// Absent for the pre-training record.
    pub train_loss: Option<f64>,
    pub val_loss: f64,
    pub val_accuracy: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainOutcome {
    pub best_checkpoint: PathBuf,
    pub last_checkpoint: PathBuf,
    pub history: Vec<EpochRecord>,
    pub best_epoch: usize,
    pub best_val_accuracy: f64,
}

fn round_dir(cfg: &RunConfig, arm: Arm, round: usize) -> PathBuf {
    cfg.paths.out_dir.join(arm.name()).join(format!("round{round}"))
}

fn optimizer_entries(model: &MiniDense<f32>, opt: &Adamax<f32>) -> Vec<(String, Vec<usize>, Vec<f32>)> {
    let mut extra = Vec::new();
    for ((name, param), state) in model.parameters().zip(&opt.states) {
        extra.push((
            format!("optim.m.{name}"),
            param.shape().to_vec(),
            state.first_moment.clone(),
        ));
        extra.push((
            format!("optim.n.{name}"),
            param.shape().to_vec(),
            state.inf_norm.clone(),
        ));
    }
    extra
}

fn restore_optimizer(
    model: &MiniDense<f32>,
    ckpt: &Checkpoint,
    cfg: &RunConfig,
) -> Result<Adamax<f32>, PipelineError> {
    let step = ckpt.optim_step.ok_or_else(|| {
        PipelineError::InvalidConfig("checkpoint has no optimizer state to resume from".into())
    })?;
    let mut states = Vec::new();
    for (name, param) in model.parameters() {
        let m = ckpt
            .tensor(&format!("optim.m.{name}"))
            .ok_or_else(|| PipelineError::InvalidConfig(format!("missing optim.m.{name}")))?;
        let n = ckpt
            .tensor(&format!("optim.n.{name}"))
            .ok_or_else(|| PipelineError::InvalidConfig(format!("missing optim.n.{name}")))?;
        if m.0 != param.shape() || n.0 != param.shape() {
            return Err(PipelineError::InvalidConfig(format!(
                "optimizer state shape mismatch for {name}"
            )));
        }
        states.push(AdamaxState {
            step,
            first_moment: m.1.to_vec(),
            inf_norm: n.1.to_vec(),
        });
    }
    Ok(Adamax {
        hyper: cfg.training.optimizer,
        variant: cfg.training.variant,
        states,
    })
}

/// Trains MiniDense on the train split of one round, tracking the best
/// validation accuracy. Deterministic: weight init, shuffles, and batch
/// order all derive from the training seed; resuming from `last.ckpt`
/// reproduces the uninterrupted run exactly.
///
/// `stop_after` caps the number of epochs this invocation runs (the
/// configured total is unchanged), leaving a `last.ckpt` a later `resume`
/// picks up.
pub fn cmd_train(
    cfg: &RunConfig,
    arm: Arm,
    round: usize,
    resume: Option<&Path>,
    stop_after: Option<usize>,
) -> Result<TrainOutcome, PipelineError> {
    let acfg = arm_config(cfg, arm);
    acfg.validate()?;
    let data_dir = &acfg.paths.data_dir;
    let manifest = DatasetManifest::load(data_dir)?;
    manifest.check_dataset_hash(&acfg.dataset_hash())?;
    check_preproc_meta(&acfg, arm)?;

    let labels = manifest.labels();
    let plan = evalkit::stratified_kfold(
        &labels,
        SignalClass::COUNT,
        acfg.evaluation.k_folds,
        acfg.evaluation.seed,
    )?;
    let assignment = plan.round(round)?;
    let train_idx: Vec<usize> = (0..labels.len())
        .filter(|&i| assignment.split[i] == Split::Train)
        .collect();
    let val_idx: Vec<usize> = (0..labels.len())
        .filter(|&i| assignment.split[i] == Split::Val)
        .collect();

    let planes: Vec<Vec<f32>> = manifest
        .entries
        .iter()
        .map(|e| load_model_plane(data_dir, arm, &e.id, &acfg.model))
        .collect::<Result<_, _>>()?;
    let (h, w) = (acfg.model.input_height, acfg.model.input_width);

    let out_dir = round_dir(&acfg, arm, round);
    fs::create_dir_all(&out_dir)?;
    let last_path = out_dir.join("last.ckpt");
    let best_path = out_dir.join("best.ckpt");
    let history_path = out_dir.join("history.json");
    let config_hash = acfg.config_hash();

    let mut model;
    let mut optimizer;
    let mut history: Vec<EpochRecord>;
    let start_epoch;
    match resume {
        Some(path) => {
            let ckpt = load_checkpoint(path)?;
            if ckpt.config_hash != config_hash {
                return Err(PipelineError::HashMismatch {
                    artifact: ckpt.config_hash.clone(),
                    current: config_hash.clone(),
                });
            }
            model = ckpt.build_model(&acfg.model)?;
            optimizer = restore_optimizer(&model, &ckpt, &acfg)?;
            start_epoch = ckpt.epoch as usize;
            history = if history_path.exists() {
                serde_json::from_str(&fs::read_to_string(&history_path)?)?
            } else {
                Vec::new()
            };
        }
        None => {
            model = MiniDense::<f32>::new(&acfg.model, acfg.training.seed)?;
            optimizer = Adamax::init(&model, acfg.training.optimizer, acfg.training.variant);
            start_epoch = 0;
            // pre-training validation record; the zero head makes this ln(7)
            let (val_loss, val_acc, _) =
                evaluate_samples(&model, &planes, &labels, &val_idx, acfg.training.batch_size, h, w)?;
            history = vec![EpochRecord {
                epoch: 0,
                train_loss: None,
                val_loss,
                val_accuracy: val_acc,
            }];
        }
    }

    let shuffle_base = seeds::derive(acfg.training.seed, seeds::STREAM_SHUFFLE);
    let until = match stop_after {
        Some(cap) => acfg.training.epochs.min(start_epoch + cap),
        None => acfg.training.epochs,
    };
    for epoch in start_epoch + 1..=until {
        let mut order = train_idx.clone();
        let mut rng = ChaCha8Rng::seed_from_u64(seeds::derive(shuffle_base, epoch as u64));
        order.shuffle(&mut rng);

        let mut epoch_loss = 0.0f64;
        for (batch_no, chunk) in order.chunks(acfg.training.batch_size).enumerate() {
            let batch = batch_tensor(&planes, chunk, h, w)?;
            let batch_labels: Vec<usize> = chunk.iter().map(|&i| labels[i]).collect();
            let (logits, cache) = model.forward_cached(&batch)?;
            let (loss, grad) = crate::nn::softmax_cross_entropy(&logits, &batch_labels)?;
            if !loss.is_finite() {
                return Err(PipelineError::NonFiniteLoss {
                    epoch,
                    batch: batch_no,
                });
            }
            model.zero_grads();
            model.backward(&cache, &grad)?;
            optimizer.step_model(&mut model)?;
            epoch_loss += loss * chunk.len() as f64;
        }
        let train_loss = epoch_loss / train_idx.len() as f64;
        let (val_loss, val_acc, _) =
            evaluate_samples(&model, &planes, &labels, &val_idx, acfg.training.batch_size, h, w)?;
        history.push(EpochRecord {
            epoch,
            train_loss: Some(train_loss),
            val_loss,
            val_accuracy: val_acc,
        });

        let ckpt = Checkpoint::from_model(
            &model,
            &config_hash,
            epoch as u64,
            Some(optimizer.step_count()),
            optimizer_entries(&model, &optimizer),
        );
        save_checkpoint(&last_path, &ckpt)?;
        let (best_epoch, _) = best_of(&history);
        if best_epoch == epoch {
            save_checkpoint(&best_path, &ckpt)?;
        }
        fs::write(&history_path, serde_json::to_string_pretty(&history)?)?;
    }

    if !best_path.exists() {
        // zero-epoch run: the untrained model is the best there is
        let ckpt = Checkpoint::from_model(
            &model,
            &config_hash,
            0,
            Some(optimizer.step_count()),
            optimizer_entries(&model, &optimizer),
        );
        save_checkpoint(&best_path, &ckpt)?;
        save_checkpoint(&last_path, &ckpt)?;
        fs::write(&history_path, serde_json::to_string_pretty(&history)?)?;
    }

    let (best_epoch, best_val_accuracy) = best_of(&history);
    Ok(TrainOutcome {
        best_checkpoint: best_path,
        last_checkpoint: last_path,
        history,
        best_epoch,
        best_val_accuracy,
    })
}

/// Best epoch by validation accuracy; earlier epochs win ties. The
/// pre-training record (epoch 0) only wins when it is strictly best.
fn best_of(history: &[EpochRecord]) -> (usize, f64) {
    let mut best_epoch = 0usize;
    let mut best_acc = f64::NEG_INFINITY;
    for rec in history {
        if rec.train_loss.is_none() && rec.epoch == 0 {
            continue;
        }
        if rec.val_accuracy > best_acc {
            best_acc = rec.val_accuracy;
            best_epoch = rec.epoch;
        }
    }
    if best_acc == f64::NEG_INFINITY {
        // only the pre-training record exists
        if let Some(rec) = history.first() {
            return (rec.epoch, rec.val_accuracy);
        }
    }
    (best_epoch, best_acc)
}

/// The deterministic content of an evaluation, separated from wall-clock
/// metadata so reports from identical runs compare byte-for-byte.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsBody {
    pub config_hash: String,
    pub dataset_hash: String,
    pub arm: Arm,
    pub round: usize,
    pub split: Split,
    /// Human-readable summary of the experimental protocol this run used.
    pub protocol: String,
    pub report: EvalReport,
    pub confusion: Vec<Vec<u64>>,
    pub history: Vec<EpochRecord>,
}

fn protocol_label(cfg: &RunConfig) -> String {
    format!(
        "desk-scale: {} samples/class, {}-fold cross validation, {} epochs, batch {}",
        cfg.dataset.samples_per_class,
        cfg.evaluation.k_folds,
        cfg.training.epochs,
        cfg.training.batch_size
    )
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub body: MetricsBody,
    pub wall_clock_sec: f64,
}

impl MetricsReport {
    pub fn render_text(&self) -> String {
        let labels: Vec<&str> = SignalClass::ALL.iter().map(|c| c.label()).collect();
        let counts: Vec<u64> = self.body.confusion.iter().flatten().copied().collect();
        let cm = ConfusionMatrix::from_counts(labels.len(), counts).expect("square matrix");
        let mut text = format!(
            "arm: {}  round: {}  split: {}  config: {}\n{}\n\n",
            self.body.arm.name(),
            self.body.round,
            self.body.split,
            self.body.config_hash,
            self.body.protocol
        );
        text.push_str(&evalkit::render_report(&cm, &labels).expect("nonempty matrix"));
        text
    }
}

/// Evaluates a checkpoint over one split of one round and writes the report
/// pair (`report-<split>.json` / `.txt`) into the round directory.
pub fn cmd_evaluate(
    cfg: &RunConfig,
    arm: Arm,
    round: usize,
    checkpoint: Option<&Path>,
    split: Split,
) -> Result<MetricsReport, PipelineError> {
    let started = Instant::now();
    let acfg = arm_config(cfg, arm);
    let data_dir = &acfg.paths.data_dir;
    let manifest = DatasetManifest::load(data_dir)?;
    manifest.check_dataset_hash(&acfg.dataset_hash())?;

    let out_dir = round_dir(&acfg, arm, round);
    let ckpt_path = checkpoint
        .map(|p| p.to_path_buf())
        .unwrap_or_else(|| out_dir.join("best.ckpt"));
    if !ckpt_path.exists() {
        return Err(PipelineError::MissingFile(ckpt_path));
    }
    let ckpt = load_checkpoint(&ckpt_path)?;
    let config_hash = acfg.config_hash();
    if ckpt.config_hash != config_hash {
        return Err(PipelineError::HashMismatch {
            artifact: ckpt.config_hash.clone(),
            current: config_hash.clone(),
        });
    }
    let model = ckpt.build_model(&acfg.model)?;

    let labels = manifest.labels();
    let plan = evalkit::stratified_kfold(
        &labels,
        SignalClass::COUNT,
        acfg.evaluation.k_folds,
        acfg.evaluation.seed,
    )?;
    let assignment = plan.round(round)?;
    let indices: Vec<usize> = (0..labels.len())
        .filter(|&i| assignment.split[i] == split)
        .collect();
    if indices.is_empty() {
        return Err(PipelineError::InvalidConfig(format!(
            "split {split} is empty for round {round}"
        )));
    }
    let wanted: std::collections::BTreeSet<usize> = indices.iter().copied().collect();
    let planes: Vec<Vec<f32>> = manifest
        .entries
        .iter()
        .enumerate()
        .map(|(i, e)| {
            if wanted.contains(&i) {
                load_model_plane(data_dir, arm, &e.id, &acfg.model)
            } else {
                Ok(Vec::new())
            }
        })
        .collect::<Result<_, _>>()?;

    let (_, _, predictions) = evaluate_samples(
        &model,
        &planes,
        &labels,
        &indices,
        acfg.training.batch_size.max(1),
        acfg.model.input_height,
        acfg.model.input_width,
    )?;
    let actual: Vec<usize> = indices.iter().map(|&i| labels[i]).collect();
    let cm = evalkit::confusion_matrix(&actual, &predictions, SignalClass::COUNT)?;
    let report = evalkit::report(&cm)?;

    let history_path = out_dir.join("history.json");
    let history: Vec<EpochRecord> = if history_path.exists() {
        serde_json::from_str(&fs::read_to_string(&history_path)?)?
    } else {
        Vec::new()
    };

    let confusion: Vec<Vec<u64>> = (0..cm.n_classes)
        .map(|a| (0..cm.n_classes).map(|p| cm.at(a, p)).collect())
        .collect();
    let metrics = MetricsReport {
        body: MetricsBody {
            config_hash,
            dataset_hash: acfg.dataset_hash(),
            arm,
            round,
            split,
            protocol: protocol_label(&acfg),
            report,
            confusion,
            history,
        },
        wall_clock_sec: started.elapsed().as_secs_f64(),
    };
    fs::create_dir_all(&out_dir)?;
    let split_name = split.to_string();
    fs::write(
        out_dir.join(format!("report-{split_name}.json")),
        serde_json::to_string_pretty(&metrics)?,
    )?;
    fs::write(
        out_dir.join(format!("report-{split_name}.txt")),
        metrics.render_text(),
    )?;
    Ok(metrics)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoundResult {
    pub round: usize,
    pub accuracy: f64,
    pub macro_f1: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArmResult {
    pub arm: Arm,
    pub rounds: Vec<RoundResult>,
    pub mean_accuracy: f64,
    pub mean_macro_f1: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompareReport {
    pub dataset_hash: String,
    pub arms: Vec<ArmResult>,
}

impl CompareReport {
    pub fn render_text(&self) -> String {
        let mut out = String::from(
            "arm       accuracy   macro-f1   per-round (accuracy / macro-f1)\n",
        );
        for arm in &self.arms {
            let rounds: Vec<String> = arm
                .rounds
                .iter()
                .map(|r| format!("r{}: {:.4}/{:.4}", r.round, r.accuracy, r.macro_f1))
                .collect();
            out.push_str(&format!(
                "{:<9} {:>8.4}   {:>8.4}   {}\n",
                arm.arm.name(),
                arm.mean_accuracy,
                arm.mean_macro_f1,
                rounds.join("  ")
            ));
        }
        out
    }

    pub fn arm(&self, arm: Arm) -> Option<&ArmResult> {
        self.arms.iter().find(|a| a.arm == arm)
    }
}

/// True when every preprocessed image of the arm exists and the arm
/// metadata matches the current configuration.
fn preproc_is_current(cfg: &RunConfig, arm: Arm, manifest: &DatasetManifest) -> bool {
    if check_preproc_meta(cfg, arm).is_err() {
        return false;
    }
    manifest.entries.iter().all(|e| {
        cfg.paths
            .data_dir
            .join(preprocessed_rel_path(arm, &e.id))
            .exists()
    })
}

/// True when a completed training run for this exact configuration already
/// sits in the round directory. Artifacts are pure functions of the
/// configuration, so a matching hash plus a final-epoch checkpoint means
/// retraining would only reproduce them.
fn training_is_current(cfg: &RunConfig, arm: Arm, round: usize) -> bool {
    let out_dir = round_dir(cfg, arm, round);
    let last = out_dir.join("last.ckpt");
    if !last.exists()
        || !out_dir.join("best.ckpt").exists()
        || !out_dir.join("history.json").exists()
    {
        return false;
    }
    match load_checkpoint(&last) {
        Ok(ckpt) => {
            ckpt.config_hash == cfg.config_hash() && ckpt.epoch == cfg.training.epochs as u64
        }
        Err(_) => false,
    }
}

/// Runs all four preprocessing arms over the configured rounds and tabulates
/// test accuracy and Macro-F1 per arm. Generates and renders the dataset
/// first when it is not already on disk; stages whose artifacts already
/// match the configuration by content hash are reused, not recomputed.
pub fn cmd_compare(cfg: &RunConfig) -> Result<CompareReport, PipelineError> {
    cfg.validate()?;
    ensure_dataset(cfg)?;
    let manifest = DatasetManifest::load(&cfg.paths.data_dir)?;

    let mut arms = Vec::new();
    for arm in Arm::ALL {
        let acfg = arm_config(cfg, arm);
        if !preproc_is_current(&acfg, arm, &manifest) {
            cmd_preprocess(cfg, arm)?;
        }
        let mut rounds = Vec::new();
        for &round in &cfg.evaluation.rounds {
            if !training_is_current(&acfg, arm, round) {
                cmd_train(cfg, arm, round, None, None)?;
            }
            let metrics = cmd_evaluate(cfg, arm, round, None, Split::Test)?;
            rounds.push(RoundResult {
                round,
                accuracy: metrics.body.report.accuracy,
                macro_f1: metrics.body.report.macro_f1,
            });
        }
        let n = rounds.len() as f64;
        arms.push(ArmResult {
            arm,
            mean_accuracy: rounds.iter().map(|r| r.accuracy).sum::<f64>() / n,
            mean_macro_f1: rounds.iter().map(|r| r.macro_f1).sum::<f64>() / n,
            rounds,
        });
    }
    let report = CompareReport {
        dataset_hash: cfg.dataset_hash(),
        arms,
    };
    fs::create_dir_all(&cfg.paths.out_dir)?;
    fs::write(
        cfg.paths.out_dir.join("compare.json"),
        serde_json::to_string_pretty(&report)?,
    )?;
    fs::write(cfg.paths.out_dir.join("compare.txt"), report.render_text())?;
    Ok(report)
}

/// Generates and renders only when the on-disk dataset is missing or was
/// built from a different dataset section.
pub fn ensure_dataset(cfg: &RunConfig) -> Result<(), PipelineError> {
    let manifest = match DatasetManifest::load(&cfg.paths.data_dir) {
        Ok(m) if m.dataset_hash == cfg.dataset_hash() => m,
        _ => cmd_generate(cfg)?,
    };
    let all_rendered = manifest
        .entries
        .iter()
        .all(|e| cfg.paths.data_dir.join(&e.image).exists());
    if !all_rendered {
        cmd_render(cfg, false)?;
    }
    Ok(())
}

/// Parses a whitespace-separated square integer matrix.
pub fn parse_confusion_file(path: &Path) -> Result<ConfusionMatrix, PipelineError> {
    let text = fs::read_to_string(path)?;
    let mut counts = Vec::new();
    for token in text.split_whitespace() {
        let value: i64 = token
            .parse()
            .map_err(|_| PipelineError::BadMatrixFile(format!("bad integer {token:?}")))?;
        if value < 0 {
            return Err(PipelineError::BadMatrixFile(format!(
                "negative count {value}"
            )));
        }
        counts.push(value as u64);
    }
    if counts.is_empty() {
        return Err(PipelineError::BadMatrixFile("empty matrix".into()));
    }
    let n = (counts.len() as f64).sqrt().round() as usize;
    if n * n != counts.len() {
        return Err(PipelineError::BadMatrixFile(format!(
            "{} values do not form a square matrix",
            counts.len()
        )));
    }
    Ok(ConfusionMatrix::from_counts(n, counts)?)
}

/// Metrics from a stored confusion matrix: the acceptance oracle entry point.
pub fn cmd_metrics_from_cm(path: &Path) -> Result<(ConfusionMatrix, EvalReport), PipelineError> {
    let cm = parse_confusion_file(path)?;
    let report = evalkit::report(&cm)?;
    Ok((cm, report))
}
