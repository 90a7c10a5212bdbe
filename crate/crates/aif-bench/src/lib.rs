//! Shared fixtures for the criterion benchmarks.
//!
//! The bench harness lives in `benches/core.rs`; this library only exposes
//! the setup helpers so they can be unit-tested like any other code.

use aif_core::agent::{interact, Experience, ReplayMemory};
use aif_core::model::{Actor, ArchConfig, GenerativeModel};
use aif_core::rng::stream;
use aif_core::sim::{Action, ObsLayout, SimConfig, Workstation};

pub const BENCH_SEED: u64 = 7_001;

/// A deterministic bundle of everything the training-step benchmarks need.
pub struct Fixture {
    pub sim: SimConfig,
    pub model: GenerativeModel,
    pub actor: Actor,
    pub memory: ReplayMemory,
}

impl Fixture {
    /// Build the default six-machine station, a default-architecture model,
    /// and a replay memory pre-filled with `windows` interaction windows of
    /// `horizon` events each.
    pub fn new(windows: usize, horizon: usize) -> Fixture {
        let mut sim = SimConfig::default();
        // Nominal ALL-ON ceiling; benches don't need a calibration run.
        sim.max_throughput = Some(0.0497);
        let layout = ObsLayout::from_config(&sim);
        let arch = ArchConfig::default();
        let mut init = stream(BENCH_SEED, "init");
        let model = GenerativeModel::new(layout.clone(), arch.clone(), &mut init)
            .expect("model init");
        let actor = Actor::new(layout, &arch, &mut init).expect("actor init");

        let mut ws = Workstation::new(sim.clone(), BENCH_SEED).expect("sim init");
        let mut action_rng = stream(BENCH_SEED, "bench/action");
        let mut memory = ReplayMemory::new(windows.max(1)).expect("replay");
        for _ in 0..windows {
            let e = interact(&mut ws, &actor, horizon, &mut action_rng)
                .expect("interact");
            memory.push(e);
        }
        Fixture { sim, model, actor, memory }
    }

    pub fn batch(&self, n: usize) -> Vec<&Experience> {
        let mut rng = stream(BENCH_SEED, "bench/batch");
        self.memory.sample_batch(n, &mut rng).expect("batch")
    }
}

/// Run the station for `days` under ALL-ON and return events processed.
pub fn run_all_on(days: f64, seed: u64) -> u64 {
    let sim = SimConfig::default();
    let mut ws = Workstation::new(sim.clone(), seed).expect("sim init");
    ws.apply(Action::new(sim.machines)).expect("all-on");
    let end = days * 86_400.0;
    let mut events = 0u64;
    while ws.next_event_time() < end {
        ws.step();
        events += 1;
    }
    ws.advance_to(end).expect("advance");
    events
}
