//! Command-line driver: dataset generation, rendering, preprocessing,
//! training, evaluation, arm comparison, and confusion-matrix metrics.

use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{anyhow, Context, Result};
use clap::{Args, Parser, Subcommand};

use setiscan::evalkit::Split;
use setiscan::pipeline::{
    cmd_compare, cmd_evaluate, cmd_generate, cmd_metrics_from_cm, cmd_preprocess, cmd_render,
    cmd_train, Arm, RunConfig,
};
use setiscan::sigsim::SignalClass;

#[derive(Parser)]
#[command(
    name = "setiscan",
    about = "Simulated narrowband signal classification pipeline",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct ConfigArgs {
    /// Run configuration (JSON). Defaults apply for absent fields; with no
    /// file at all, the built-in desk-scale configuration is used.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Overrides every seed in the configuration (dataset, training, eval).
    #[arg(long)]
    seed: Option<u64>,
    /// Overrides the output directory.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Overrides the data directory.
    #[arg(long)]
    data: Option<PathBuf>,
}

impl ConfigArgs {
    fn load(&self) -> Result<RunConfig> {
        let mut cfg = match &self.config {
            Some(path) => RunConfig::from_file(path)
                .with_context(|| format!("loading config {}", path.display()))?,
            None => RunConfig::default(),
        };
        if let Some(seed) = self.seed {
            cfg.override_seed(seed);
        }
        if let Some(out) = &self.out {
            cfg.paths.out_dir = out.clone();
        }
        if let Some(data) = &self.data {
            cfg.paths.data_dir = data.clone();
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

fn parse_arm(text: &str) -> Result<Arm> {
    Arm::from_name(text).ok_or_else(|| anyhow!("unknown arm {text:?}; expected origin|sobel|scharr|laplace"))
}

fn parse_split(text: &str) -> Result<Split> {
    match text {
        "train" => Ok(Split::Train),
        "val" => Ok(Split::Val),
        "test" => Ok(Split::Test),
        other => Err(anyhow!("unknown split {other:?}; expected train|val|test")),
    }
}

#[derive(Subcommand)]
enum Command {
    /// Synthesize the dataset: complex8 payloads, sidecars, and the manifest.
    Generate {
        #[command(flatten)]
        config: ConfigArgs,
    },
    /// Render raw samples to grayscale spectrograms (PGM, optionally PNG).
    Render {
        #[command(flatten)]
        config: ConfigArgs,
        /// Also write PNG copies next to the PGM files.
        #[arg(long)]
        png: bool,
    },
    /// Apply smoothing/edge preprocessing for one arm.
    Preprocess {
        #[command(flatten)]
        config: ConfigArgs,
        /// origin | sobel | scharr | laplace (default: the configured arm)
        #[arg(long)]
        arm: Option<String>,
    },
    /// Train MiniDense on the train split of one cross-validation round.
    Train {
        #[command(flatten)]
        config: ConfigArgs,
        #[arg(long)]
        arm: Option<String>,
        /// Cross-validation round (default: first configured round).
        #[arg(long)]
        round: Option<usize>,
        /// Resume from a `last.ckpt` written by an interrupted run.
        #[arg(long)]
        resume: Option<PathBuf>,
        /// Run at most this many epochs now (resume later for the rest).
        #[arg(long)]
        stop_after: Option<usize>,
    },
    /// Evaluate a checkpoint on a split and write the metrics report.
    Evaluate {
        #[command(flatten)]
        config: ConfigArgs,
        #[arg(long)]
        arm: Option<String>,
        #[arg(long)]
        round: Option<usize>,
        /// Checkpoint path (default: the round's best.ckpt).
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        /// train | val | test
        #[arg(long, default_value = "test")]
        split: String,
    },
    /// Run every preprocessing arm over the configured rounds and tabulate
    /// test accuracy and Macro-F1.
    Compare {
        #[command(flatten)]
        config: ConfigArgs,
    },
    /// Compute the metrics report for a stored confusion matrix.
    #[command(name = "metrics-from-cm")]
    MetricsFromCm {
        /// Whitespace-separated square integer matrix, rows = actual class.
        matrix: PathBuf,
        /// Emit machine-readable JSON instead of the table.
        #[arg(long)]
        json: bool,
    },
}

fn run() -> Result<()> {
    let cli = Cli::parse();
    match cli.command {
        Command::Generate { config } => {
            let cfg = config.load()?;
            let manifest = cmd_generate(&cfg)?;
            println!(
                "generated {} samples ({} per class) under {}",
                manifest.entries.len(),
                cfg.dataset.samples_per_class,
                cfg.paths.data_dir.display()
            );
        }
        Command::Render { config, png } => {
            let cfg = config.load()?;
            cmd_render(&cfg, png)?;
            println!("rendered spectrograms into {}", cfg.paths.data_dir.join("images").display());
        }
        Command::Preprocess { config, arm } => {
            let cfg = config.load()?;
            let arm = match arm {
                Some(a) => parse_arm(&a)?,
                None => cfg.preprocess.arm,
            };
            cmd_preprocess(&cfg, arm)?;
            println!(
                "preprocessed ({}) into {}",
                arm.name(),
                cfg.paths.data_dir.join("preproc").join(arm.name()).display()
            );
        }
        Command::Train {
            config,
            arm,
            round,
            resume,
            stop_after,
        } => {
            let cfg = config.load()?;
            let arm = match arm {
                Some(a) => parse_arm(&a)?,
                None => cfg.preprocess.arm,
            };
            let round = round.unwrap_or(cfg.evaluation.rounds[0]);
            let outcome = cmd_train(&cfg, arm, round, resume.as_deref(), stop_after)?;
            for rec in &outcome.history {
                match rec.train_loss {
                    Some(tl) => println!(
                        "epoch {:>3}  train_loss {:.4}  val_loss {:.4}  val_acc {:.4}",
                        rec.epoch, tl, rec.val_loss, rec.val_accuracy
                    ),
                    None => println!(
                        "epoch {:>3}  (pre-training)     val_loss {:.4}  val_acc {:.4}",
                        rec.epoch, rec.val_loss, rec.val_accuracy
                    ),
                }
            }
            println!(
                "best epoch {} (val_acc {:.4}); checkpoints in {}",
                outcome.best_epoch,
                outcome.best_val_accuracy,
                outcome.best_checkpoint.parent().unwrap_or(&cfg.paths.out_dir).display()
            );
        }
        Command::Evaluate {
            config,
            arm,
            round,
            checkpoint,
            split,
        } => {
            let cfg = config.load()?;
            let arm = match arm {
                Some(a) => parse_arm(&a)?,
                None => cfg.preprocess.arm,
            };
            let round = round.unwrap_or(cfg.evaluation.rounds[0]);
            let split = parse_split(&split)?;
            let metrics = cmd_evaluate(&cfg, arm, round, checkpoint.as_deref(), split)?;
            print!("{}", metrics.render_text());
        }
        Command::Compare { config } => {
            let cfg = config.load()?;
            let report = cmd_compare(&cfg)?;
            print!("{}", report.render_text());
            println!("full report in {}", cfg.paths.out_dir.join("compare.json").display());
        }
        Command::MetricsFromCm { matrix, json } => {
            let (cm, report) = cmd_metrics_from_cm(&matrix)?;
            if json {
                println!("{}", serde_json::to_string_pretty(&report)?);
            } else {
                let labels: Vec<&str> = if cm.n_classes == SignalClass::COUNT {
                    SignalClass::ALL.iter().map(|c| c.label()).collect()
                } else {
                    (0..cm.n_classes).map(|_| "class").collect()
                };
                print!("{}", setiscan::evalkit::render_report(&cm, &labels)?);
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match run() {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::FAILURE
        }
    }
}
