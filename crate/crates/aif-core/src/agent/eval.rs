//! Evaluation protocols: phase runner with paired (common-random-number)
//! branches, per-epoch validation, and the long-horizon final evaluation.

use rayon::prelude::*;

use crate::agent::train::{plan_finetune, TrainConfig};
use crate::error::Result;
use crate::model::{Actor, GenerativeModel};
use crate::nn::adam::Adam;
use crate::rng::{stream, stream_seed, Stream};
use crate::sim::config::{SimConfig, SECS_PER_DAY};
use crate::sim::obs::observe;
use crate::sim::state::{Action, Workstation};

/// Named RNG streams for one evaluation phase.
pub struct EvalRngs {
    pub action: Stream,
    pub dropout: Stream,
    pub reparam: Stream,
}

impl EvalRngs {
    pub fn new(root_seed: u64, scope: &str) -> Self {
        Self {
            action: stream(root_seed, &format!("{scope}/action")),
            dropout: stream(root_seed, &format!("{scope}/dropout")),
            reparam: stream(root_seed, &format!("{scope}/reparam")),
        }
    }
}

/// Stateful agent policy used during evaluation: a working copy of the actor
/// that is fine-tuned in place at every H-th decision boundary (planning as
/// inference), with the generative model frozen. Deployment acts greedily
/// (argmax wake target): the softmax is sampled only during training
/// interaction, where the stochasticity is exploration. Sampling at
/// deployment would re-toggle machines at event cadence, and with an 8-hour
/// setup time every transient sleep draw parks a machine in a setup it
/// rarely finishes — pure loss the greedy policy avoids.
pub struct AgentController<'a> {
    pub model: &'a GenerativeModel,
    pub actor: Actor,
    pub opt: Adam,
    cfg: &'a TrainConfig,
    decisions: u64,
}

impl<'a> AgentController<'a> {
    pub fn new(model: &'a GenerativeModel, actor: Actor, cfg: &'a TrainConfig) -> Self {
        Self { model, actor, opt: Adam::new(), cfg, decisions: 0 }
    }

    fn decide(&mut self, ws: &Workstation, rngs: &mut EvalRngs) -> Result<Action> {
        let o = observe(ws)?;
        let due = self.cfg.finetune_steps > 0
            && self.cfg.horizon > 0
            && self.decisions % self.cfg.horizon as u64 == 0;
        if due {
            plan_finetune(
                self.model,
                &mut self.actor,
                &mut self.opt,
                &o,
                self.cfg,
                &mut rngs.dropout,
                &mut rngs.reparam,
            )?;
        }
        self.decisions += 1;
        let (probs, _) = self.actor.forward(&o)?;
        Ok(Actor::argmax_action(&probs))
    }
}

/// A control policy for [`run_phase`].
pub enum Controller<'a> {
    /// Keep every machine commanded awake.
    AllOn,
    /// Uniformly random wake target in `1..=machines`.
    UniformRandom,
    Agent(AgentController<'a>),
}

impl Controller<'_> {
    fn decide(&mut self, ws: &Workstation, rngs: &mut EvalRngs) -> Result<Action> {
        match self {
            Controller::AllOn => Ok(Action::new(ws.config().machines)),
            Controller::UniformRandom => {
                use rand::Rng;
                Ok(Action::new(rngs.action.random_range(1..=ws.config().machines)))
            }
            Controller::Agent(agent) => agent.decide(ws, rngs),
        }
    }
}

/// KPI counters accumulated over one phase.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PhaseMetrics {
    pub duration: f64,
    pub parts: u64,
    pub energy_kws: f64,
    /// Phase-level throughput, parts per second.
    pub throughput: f64,
    /// Phase-level average power, kW.
    pub avg_power: f64,
    /// Mean composite preference R over decision events.
    pub mean_composite: f64,
    /// Mean linearized preference over decision events.
    pub mean_linear: f64,
    pub decisions: u64,
}

/// One periodic KPI sample (row of the KPI CSV).
#[derive(Debug, Clone, Copy)]
pub struct KpiSample {
    pub clock: f64,
    pub throughput: f64,
    pub avg_power: f64,
    pub r_production: f64,
    pub r_energy: f64,
    pub r_composite: f64,
    pub r_linear: f64,
}

/// Collects a [`KpiSample`] the first event at or past each period boundary.
pub struct KpiLogger {
    period: f64,
    next: f64,
    pub rows: Vec<KpiSample>,
}

impl KpiLogger {
    pub fn new(period: f64, start_clock: f64) -> Self {
        Self { period, next: start_clock, rows: Vec::new() }
    }

    fn maybe_sample(&mut self, ws: &Workstation) -> Result<()> {
        if self.period <= 0.0 || ws.clock() < self.next {
            return Ok(());
        }
        let (throughput, avg_power) = ws.kpis();
        let p = ws.preferences()?;
        self.rows.push(KpiSample {
            clock: ws.clock(),
            throughput,
            avg_power,
            r_production: p.production,
            r_energy: p.energy,
            r_composite: p.composite,
            r_linear: p.linear,
        });
        while self.next <= ws.clock() {
            self.next += self.period;
        }
        Ok(())
    }
}

/// Drive `ws` under `ctrl` for exactly `days` simulated days. Decisions
/// happen before every event; the clock lands exactly on the phase boundary
/// (an event exactly at the boundary is left pending for the next phase).
pub fn run_phase(
    ws: &mut Workstation,
    ctrl: &mut Controller,
    days: f64,
    rngs: &mut EvalRngs,
    mut kpi: Option<&mut KpiLogger>,
) -> Result<PhaseMetrics> {
    let start_clock = ws.clock();
    let end = start_clock + days * SECS_PER_DAY;
    let parts0 = ws.parts_produced();
    let energy0 = ws.energy_kws();
    let mut sum_composite = 0.0;
    let mut sum_linear = 0.0;
    let mut decisions = 0u64;

    while ws.next_event_time() < end {
        let action = ctrl.decide(ws, rngs)?;
        ws.apply(action)?;
        ws.step();
        let p = ws.preferences()?;
        sum_composite += p.composite;
        sum_linear += p.linear;
        decisions += 1;
        if let Some(log) = kpi.as_deref_mut() {
            log.maybe_sample(ws)?;
        }
    }
    ws.advance_to(end)?;

    let duration = end - start_clock;
    let parts = ws.parts_produced() - parts0;
    let energy_kws = ws.energy_kws() - energy0;
    let n = decisions.max(1) as f64;
    Ok(PhaseMetrics {
        duration,
        parts,
        energy_kws,
        throughput: parts as f64 / duration,
        avg_power: energy_kws / duration,
        mean_composite: sum_composite / n,
        mean_linear: sum_linear / n,
        decisions,
    })
}

/// Measure the all-on reference throughput over `days` on a fresh
/// environment; used to calibrate `max_throughput` before training.
pub fn calibrate_max_throughput(sim: &SimConfig, seed: u64, days: f64) -> Result<f64> {
    let mut ws = Workstation::new(sim.clone(), seed)?;
    let end = days * SECS_PER_DAY;
    while ws.next_event_time() < end {
        ws.step();
    }
    ws.advance_to(end)?;
    Ok(ws.parts_produced() as f64 / end)
}

fn mean_std(xs: &[f64]) -> (f64, f64) {
    if xs.is_empty() {
        return (0.0, 0.0);
    }
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n;
    (mean, var.sqrt())
}

fn saving_pct(reference: &PhaseMetrics, tested: &PhaseMetrics) -> f64 {
    if reference.energy_kws <= 0.0 {
        return 0.0;
    }
    100.0 * (reference.energy_kws - tested.energy_kws) / reference.energy_kws
}

fn loss_pct(reference: &PhaseMetrics, tested: &PhaseMetrics) -> f64 {
    if reference.parts == 0 {
        return 0.0;
    }
    100.0 * (reference.parts as f64 - tested.parts as f64) / reference.parts as f64
}

/// Per-epoch validation summary (one CSV row).
#[derive(Debug, Clone, Copy)]
pub struct ValidationReport {
    pub epoch: usize,
    /// Mean composite preference of the agent phase across environments.
    pub mean_pref: f64,
    pub std_pref: f64,
    /// Mean composite preference of the preceding random-control phase.
    pub random_pref: f64,
    /// Mean paired energy saving vs the all-on reference, percent.
    pub saving_pct: f64,
    /// Mean paired production loss vs the all-on reference, percent.
    pub loss_pct: f64,
    pub n_envs: usize,
}

struct EnvOutcome {
    agent: PhaseMetrics,
    reference: PhaseMetrics,
    random: PhaseMetrics,
}

fn validate_env(
    model: &GenerativeModel,
    actor: &Actor,
    sim: &SimConfig,
    cfg: &TrainConfig,
    root_seed: u64,
    epoch: usize,
    env: usize,
) -> Result<EnvOutcome> {
    let scope = format!("val-e{epoch}-env{env}");
    let sim_seed = stream_seed(root_seed, &format!("{scope}/sim"));
    let mut ws = Workstation::new(sim.clone(), sim_seed)?;

    let mut warm_rngs = EvalRngs::new(root_seed, &format!("{scope}/warmup"));
    run_phase(&mut ws, &mut Controller::AllOn, cfg.warmup_days, &mut warm_rngs, None)?;

    let mut rand_rngs = EvalRngs::new(root_seed, &format!("{scope}/random"));
    let random =
        run_phase(&mut ws, &mut Controller::UniformRandom, cfg.random_days, &mut rand_rngs, None)?;

    // Paired branch: the clone shares every future stochastic draw with the
    // original, so the two phases differ only through the control policy.
    let mut ws_ref = ws.clone();

    let mut agent_rngs = EvalRngs::new(root_seed, &format!("{scope}/agent"));
    let mut ctrl = Controller::Agent(AgentController::new(model, actor.clone(), cfg));
    let agent = run_phase(&mut ws, &mut ctrl, cfg.val_days, &mut agent_rngs, None)?;

    let mut ref_rngs = EvalRngs::new(root_seed, &format!("{scope}/reference"));
    let reference =
        run_phase(&mut ws_ref, &mut Controller::AllOn, cfg.val_days, &mut ref_rngs, None)?;

    Ok(EnvOutcome { agent, reference, random })
}

/// Validate the current model+actor on `cfg.val_envs` fresh environments
/// (in parallel, order-stable). Each environment: all-on warm-up (discarded),
/// a random-control day, then a paired agent-vs-all-on day from a cloned
/// branch point.
pub fn run_validation(
    model: &GenerativeModel,
    actor: &Actor,
    sim: &SimConfig,
    cfg: &TrainConfig,
    root_seed: u64,
    epoch: usize,
) -> Result<ValidationReport> {
    let outcomes = (0..cfg.val_envs)
        .into_par_iter()
        .map(|env| validate_env(model, actor, sim, cfg, root_seed, epoch, env))
        .collect::<Result<Vec<_>>>()?;

    let prefs: Vec<f64> = outcomes.iter().map(|o| o.agent.mean_composite).collect();
    let rand_prefs: Vec<f64> = outcomes.iter().map(|o| o.random.mean_composite).collect();
    let savings: Vec<f64> = outcomes.iter().map(|o| saving_pct(&o.reference, &o.agent)).collect();
    let losses: Vec<f64> = outcomes.iter().map(|o| loss_pct(&o.reference, &o.agent)).collect();

    let (mean_pref, std_pref) = mean_std(&prefs);
    Ok(ValidationReport {
        epoch,
        mean_pref,
        std_pref,
        random_pref: mean_std(&rand_prefs).0,
        saving_pct: mean_std(&savings).0,
        loss_pct: mean_std(&losses).0,
        n_envs: outcomes.len(),
    })
}

/// Which policy the final evaluation measures against the all-on reference.
#[derive(Clone, Copy)]
pub enum EvalPolicy<'a> {
    AllOn,
    Random,
    Agent { model: &'a GenerativeModel, actor: &'a Actor },
}

/// One replication of the final evaluation (one CSV row).
#[derive(Debug, Clone, Copy)]
pub struct FinalEvalRow {
    pub replication: usize,
    pub days: f64,
    pub agent_parts: u64,
    pub agent_energy_kwh: f64,
    pub agent_mean_pref: f64,
    pub ref_parts: u64,
    pub ref_energy_kwh: f64,
    pub ref_mean_pref: f64,
    pub saving_pct: f64,
    pub loss_pct: f64,
}

#[derive(Debug, Clone)]
pub struct FinalEvalReport {
    pub rows: Vec<FinalEvalRow>,
    /// Agent-phase KPI traces per replication (empty when `kpi_period <= 0`).
    pub kpi: Vec<(usize, Vec<KpiSample>)>,
    pub mean_saving: f64,
    pub std_saving: f64,
    pub mean_loss: f64,
    pub std_loss: f64,
    pub mean_pref: f64,
    pub std_pref: f64,
}

#[allow(clippy::too_many_arguments)]
fn final_replication(
    policy: EvalPolicy,
    sim: &SimConfig,
    cfg: &TrainConfig,
    root_seed: u64,
    replication: usize,
    warmup_days: f64,
    eval_days: f64,
    kpi_period: f64,
) -> Result<(FinalEvalRow, Vec<KpiSample>)> {
    let scope = format!("final-r{replication}");
    let sim_seed = stream_seed(root_seed, &format!("{scope}/sim"));
    let mut ws = Workstation::new(sim.clone(), sim_seed)?;

    let mut warm_rngs = EvalRngs::new(root_seed, &format!("{scope}/warmup"));
    run_phase(&mut ws, &mut Controller::AllOn, warmup_days, &mut warm_rngs, None)?;

    let mut ws_ref = ws.clone();

    let mut ctrl = match policy {
        EvalPolicy::AllOn => Controller::AllOn,
        EvalPolicy::Random => Controller::UniformRandom,
        EvalPolicy::Agent { model, actor } => {
            Controller::Agent(AgentController::new(model, actor.clone(), cfg))
        }
    };
    let mut agent_rngs = EvalRngs::new(root_seed, &format!("{scope}/agent"));
    let mut logger = KpiLogger::new(kpi_period, ws.clock());
    let agent = run_phase(&mut ws, &mut ctrl, eval_days, &mut agent_rngs, Some(&mut logger))?;

    let mut ref_rngs = EvalRngs::new(root_seed, &format!("{scope}/reference"));
    let reference =
        run_phase(&mut ws_ref, &mut Controller::AllOn, eval_days, &mut ref_rngs, None)?;

    let row = FinalEvalRow {
        replication,
        days: eval_days,
        agent_parts: agent.parts,
        agent_energy_kwh: agent.energy_kws / 3600.0,
        agent_mean_pref: agent.mean_composite,
        ref_parts: reference.parts,
        ref_energy_kwh: reference.energy_kws / 3600.0,
        ref_mean_pref: reference.mean_composite,
        saving_pct: saving_pct(&reference, &agent),
        loss_pct: loss_pct(&reference, &agent),
    };
    Ok((row, logger.rows))
}

/// Final evaluation: `replications` independent environments, each with an
/// all-on warm-up, then a paired tested-policy vs all-on run from a cloned
/// branch point (common random numbers).
#[allow(clippy::too_many_arguments)]
pub fn run_final_eval(
    policy: EvalPolicy,
    sim: &SimConfig,
    cfg: &TrainConfig,
    root_seed: u64,
    replications: usize,
    warmup_days: f64,
    eval_days: f64,
    kpi_period: f64,
) -> Result<FinalEvalReport> {
    let results = (0..replications)
        .into_par_iter()
        .map(|r| {
            final_replication(policy, sim, cfg, root_seed, r, warmup_days, eval_days, kpi_period)
        })
        .collect::<Result<Vec<_>>>()?;

    let mut rows = Vec::with_capacity(results.len());
    let mut kpi = Vec::new();
    for (row, trace) in results {
        if !trace.is_empty() {
            kpi.push((row.replication, trace));
        }
        rows.push(row);
    }
    let savings: Vec<f64> = rows.iter().map(|r| r.saving_pct).collect();
    let losses: Vec<f64> = rows.iter().map(|r| r.loss_pct).collect();
    let prefs: Vec<f64> = rows.iter().map(|r| r.agent_mean_pref).collect();
    let (mean_saving, std_saving) = mean_std(&savings);
    let (mean_loss, std_loss) = mean_std(&losses);
    let (mean_pref, std_pref) = mean_std(&prefs);
    Ok(FinalEvalReport {
        rows,
        kpi,
        mean_saving,
        std_saving,
        mean_loss,
        std_loss,
        mean_pref,
        std_pref,
    })
}
