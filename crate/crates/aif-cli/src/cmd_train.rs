//! `aif train`: run the training protocol and write run artifacts
//! (training.csv, validation.csv, best/last checkpoints, config snapshot).

use std::path::{Path, PathBuf};

use aif_core::agent::eval::ValidationReport;
use aif_core::agent::protocol::{run_training, CheckpointStage, TrainSink};
use aif_core::agent::train::{Optimizers, TrainingRow};
use aif_core::io::checkpoint::{save_checkpoint, Checkpoint};
use aif_core::io::config::{load_config, save_config, RunConfig};
use aif_core::io::csvlog::{training_row, validation_row, CsvWriter, TRAINING_HEADER, VALIDATION_HEADER};
use aif_core::model::{Actor, GenerativeModel};
use aif_core::sim::config::SimConfig;
use aif_core::Result;

pub const LAST_CHECKPOINT: &str = "checkpoint_last.ckpt";
pub const BEST_CHECKPOINT: &str = "checkpoint_best.ckpt";

struct FileSink {
    training: CsvWriter,
    validation: CsvWriter,
    out: PathBuf,
    horizon: usize,
}

impl FileSink {
    fn new(out: &Path, cfg: &RunConfig) -> Result<Self> {
        Ok(FileSink {
            training: CsvWriter::create(&out.join("training.csv"), TRAINING_HEADER)?,
            validation: CsvWriter::create(&out.join("validation.csv"), VALIDATION_HEADER)?,
            out: out.to_path_buf(),
            horizon: cfg.train.horizon,
        })
    }

    fn finish(self) -> Result<()> {
        self.training.finish()?;
        self.validation.finish()
    }
}

impl TrainSink for FileSink {
    fn on_row(&mut self, row: &TrainingRow) -> Result<()> {
        self.training.row(&training_row(row))
    }

    fn on_validation(&mut self, report: &ValidationReport) -> Result<()> {
        println!(
            "epoch {}: pref {:.4} ± {:.4} (random {:.4}), saving {:.2}%, loss {:.2}%",
            report.epoch,
            report.mean_pref,
            report.std_pref,
            report.random_pref,
            report.saving_pct,
            report.loss_pct
        );
        self.validation.row(&validation_row(report))
    }

    fn on_checkpoint(
        &mut self,
        stage: CheckpointStage,
        model: &GenerativeModel,
        actor: &Actor,
        opts: &Optimizers,
        sim: &SimConfig,
    ) -> Result<()> {
        let name = match stage {
            CheckpointStage::Last { .. } => LAST_CHECKPOINT,
            CheckpointStage::Best { .. } => BEST_CHECKPOINT,
        };
        let ck = Checkpoint {
            model: model.clone(),
            actor: actor.clone(),
            opts: opts.clone(),
            horizon: self.horizon,
            max_throughput: sim.max_throughput,
        };
        save_checkpoint(&self.out.join(name), &ck)
    }
}

pub fn cmd_train(config: &Path, out: &Path, seed: Option<u64>) -> Result<()> {
    let mut cfg = load_config(config)?;
    if let Some(s) = seed {
        cfg.seed = s;
    }
    std::fs::create_dir_all(out)?;

    println!(
        "training: {} epochs × {} iterations, H = {}, seed {}",
        cfg.train.epochs, cfg.train.iterations, cfg.train.horizon, cfg.seed
    );
    let mut sink = FileSink::new(out, &cfg)?;
    let outcome = run_training(&cfg.sim, &cfg.arch, &cfg.train, cfg.seed, &mut sink)?;
    sink.finish()?;

    // Snapshot the exact configuration used, including the calibrated
    // reference throughput, so `evaluate` can reproduce the preferences.
    let mut snapshot = cfg.clone();
    snapshot.sim = outcome.calibrated_sim.clone();
    save_config(&out.join("config.txt"), &snapshot)?;

    println!(
        "done: best epoch {} (validation preference {:.4}); artifacts in {}",
        outcome.best_epoch,
        outcome.best_pref,
        out.display()
    );
    Ok(())
}
