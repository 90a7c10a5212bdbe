//! End-to-end training protocol: calibration, per-epoch fresh environments
//! with warm-up and random-control phases, the alternating updates, per-epoch
//! validation, and best/last checkpoint selection.

use crate::agent::eval::{
    calibrate_max_throughput, run_phase, run_validation, Controller, EvalRngs, ValidationReport,
};
use crate::agent::replay::ReplayMemory;
use crate::agent::train::{train_epoch, Optimizers, TrainConfig, TrainRngs, TrainingRow};
use crate::error::Result;
use crate::model::{Actor, ArchConfig, GenerativeModel};
use crate::rng::{stream, stream_seed};
use crate::sim::config::SimConfig;
use crate::sim::obs::ObsLayout;
use crate::sim::state::Workstation;

/// Which checkpoint a [`TrainSink::on_checkpoint`] call refers to.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CheckpointStage {
    /// The state after the given epoch (always emitted).
    Last { epoch: usize },
    /// The state after the given epoch, which achieved the best validation
    /// preference so far (emitted when that happens, after `Last`).
    Best { epoch: usize },
}

/// Receives training artifacts as they are produced (CSV rows, validation
/// summaries, checkpoints). All methods default to no-ops.
pub trait TrainSink {
    fn on_row(&mut self, _row: &TrainingRow) -> Result<()> {
        Ok(())
    }
    fn on_validation(&mut self, _report: &ValidationReport) -> Result<()> {
        Ok(())
    }
    /// `sim` is the calibrated simulator config (with `max_throughput` set),
    /// so sinks can embed the calibration in saved checkpoints.
    fn on_checkpoint(
        &mut self,
        _stage: CheckpointStage,
        _model: &GenerativeModel,
        _actor: &Actor,
        _opts: &Optimizers,
        _sim: &SimConfig,
    ) -> Result<()> {
        Ok(())
    }
}

/// No-op sink.
impl TrainSink for () {}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    /// Networks after the final epoch.
    pub model: GenerativeModel,
    pub actor: Actor,
    pub opts: Optimizers,
    /// Networks from the epoch with the highest validation preference.
    pub best_model: GenerativeModel,
    pub best_actor: Actor,
    pub best_epoch: usize,
    pub best_pref: f64,
    /// The simulator config actually used, with `max_throughput` filled in.
    pub calibrated_sim: SimConfig,
    pub validations: Vec<ValidationReport>,
}

/// Run the full training protocol.
///
/// If `sim.max_throughput` is unset it is first calibrated from a 30-day
/// all-on reference run. Each epoch interacts with a fresh environment that
/// gets an all-on warm-up day (discarded) and a random-control day before
/// the agent takes over; network parameters, optimizer state, and the replay
/// memory persist across epochs. After each epoch the networks are validated
/// on held-out environments and checkpoints are emitted through `sink`.
pub fn run_training(
    sim: &SimConfig,
    arch: &ArchConfig,
    cfg: &TrainConfig,
    root_seed: u64,
    sink: &mut dyn TrainSink,
) -> Result<TrainOutcome> {
    sim.validate()?;
    arch.validate()?;
    cfg.validate()?;

    let mut sim_cal = sim.clone();
    if sim_cal.max_throughput.is_none() {
        let seed = stream_seed(root_seed, "calibrate");
        sim_cal.max_throughput = Some(calibrate_max_throughput(&sim_cal, seed, 30.0)?);
    }

    let layout = ObsLayout::from_config(&sim_cal);
    let mut init_rng = stream(root_seed, "init");
    let mut model = GenerativeModel::new(layout, arch.clone(), &mut init_rng)?;
    let mut actor = Actor::new(layout, arch, &mut init_rng)?;
    let mut memory = ReplayMemory::new(cfg.replay_capacity)?;
    let mut opts = Optimizers::new();

    let mut validations = Vec::with_capacity(cfg.epochs);
    let mut best_epoch = 0usize;
    let mut best_pref = f64::NEG_INFINITY;
    let mut best_model = model.clone();
    let mut best_actor = actor.clone();

    for epoch in 0..cfg.epochs {
        let scope = format!("train-e{epoch}");
        let sim_seed = stream_seed(root_seed, &format!("{scope}/sim"));
        let mut ws = Workstation::new(sim_cal.clone(), sim_seed)?;

        let mut warm_rngs = EvalRngs::new(root_seed, &format!("{scope}/warmup"));
        run_phase(&mut ws, &mut Controller::AllOn, cfg.warmup_days, &mut warm_rngs, None)?;
        let mut rand_rngs = EvalRngs::new(root_seed, &format!("{scope}/random"));
        run_phase(&mut ws, &mut Controller::UniformRandom, cfg.random_days, &mut rand_rngs, None)?;

        let mut rngs = TrainRngs::for_epoch(root_seed, epoch);
        let first_iteration = epoch * cfg.iterations + 1;
        let rows = train_epoch(
            &mut ws,
            &mut model,
            &mut actor,
            &mut memory,
            &mut opts,
            cfg,
            &mut rngs,
            epoch,
            first_iteration,
        )?;
        for row in &rows {
            sink.on_row(row)?;
        }

        let report = run_validation(&model, &actor, &sim_cal, cfg, root_seed, epoch)?;
        sink.on_validation(&report)?;
        validations.push(report);

        sink.on_checkpoint(CheckpointStage::Last { epoch }, &model, &actor, &opts, &sim_cal)?;
        if report.mean_pref > best_pref {
            best_pref = report.mean_pref;
            best_epoch = epoch;
            best_model = model.clone();
            best_actor = actor.clone();
            sink.on_checkpoint(CheckpointStage::Best { epoch }, &model, &actor, &opts, &sim_cal)?;
        }
    }

    Ok(TrainOutcome {
        model,
        actor,
        opts,
        best_model,
        best_actor,
        best_epoch,
        best_pref,
        calibrated_sim: sim_cal,
        validations,
    })
}
