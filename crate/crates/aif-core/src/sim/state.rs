//! Event-driven workstation simulator.
//!
//! Continuous time, discrete events, all sojourns exponential:
//!
//! ```text
//!   arrivals ──► [ buffer ≤ K ] ──► c parallel machines ──► finished parts
//!    exp(λ)                          Busy   exp(μ) completion
//!                                           exp(ψ) failure (part requeued)
//!                                    Startup exp(δ) ──► Idle
//!                                    Failed  exp(ξ) ──► Idle
//! ```
//!
//! The controller picks a target number of awake machines after every event.
//! Sleep commands are deferred: a Busy/Startup/Failed machine finishes its
//! current activity first and powers down at the next Idle. Wake commands act
//! immediately (Standby → Startup).
//!
//! Energy is integrated exactly between events at the current total power
//! draw, so the cumulative energy counter is exact, not sampled.

use rand::SeedableRng;
use rand_distr::{Distribution, Exp};

use crate::error::{Error, Result};
use crate::rng::Stream;
use crate::sim::config::SimConfig;
use crate::sim::kpi::{preference_score, KpiWindow, PrefScores};
use crate::sim::machine::{Machine, MachineMode};

/// Controller action: how many machines should be awake (1..=c).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Action {
    pub target_awake: usize,
}

impl Action {
    pub fn new(target_awake: usize) -> Self {
        Action { target_awake }
    }
}

/// What happened at an event, for traces and tests.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EventKind {
    /// A part arrived; `accepted` is false if the buffer was full.
    Arrival { accepted: bool },
    /// A machine finished its part (NP += 1).
    Completion { machine: usize },
    /// A machine failed mid-process; its part went back to the buffer unless
    /// the buffer was full at that instant.
    Failure { machine: usize, requeued: bool },
    /// Warm-up finished; the machine is available again.
    StartupDone { machine: usize },
    /// Repair finished; the machine is available again.
    Repaired { machine: usize },
}

impl EventKind {
    pub fn name(&self) -> &'static str {
        match self {
            EventKind::Arrival { .. } => "arrival",
            EventKind::Completion { .. } => "completion",
            EventKind::Failure { .. } => "failure",
            EventKind::StartupDone { .. } => "startup_done",
            EventKind::Repaired { .. } => "repaired",
        }
    }
}

/// A fired event.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Event {
    pub clock: f64,
    pub kind: EventKind,
}

/// Pending-event identity used for the next-event scan.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Pending {
    Arrival,
    Completion(usize),
    Failure(usize),
    StartupDone(usize),
    Repaired(usize),
}

/// The full workstation state. `Clone` gives an independent branch that
/// replays identical future randomness — used for paired policy comparisons.
#[derive(Debug, Clone)]
pub struct Workstation {
    config: SimConfig,
    clock: f64,
    buffer: usize,
    machines: Vec<Machine>,
    next_arrival_at: f64,
    window: KpiWindow,
    rng: Stream,
    // Cumulative counters.
    parts_produced: u64,
    energy_kws: f64,
    arrivals: u64,
    blocked_arrivals: u64,
    failures: u64,
    requeue_losses: u64,
}

impl Workstation {
    /// Fresh environment: empty buffer, every machine Idle and commanded
    /// awake, clock at 0, first arrival already scheduled.
    pub fn new(config: SimConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let window = KpiWindow::new(config.window_secs);
        let machines = vec![Machine::idle(); config.machines];
        let mut ws = Workstation {
            config,
            clock: 0.0,
            buffer: 0,
            machines,
            next_arrival_at: 0.0,
            window,
            rng: Stream::seed_from_u64(seed),
            parts_produced: 0,
            energy_kws: 0.0,
            arrivals: 0,
            blocked_arrivals: 0,
            failures: 0,
            requeue_losses: 0,
        };
        ws.next_arrival_at = ws.clock + ws.exp_draw(ws.config.arrival_rate);
        Ok(ws)
    }

    // ------------------------------------------------------------------
    // Accessors
    // ------------------------------------------------------------------

    pub fn config(&self) -> &SimConfig {
        &self.config
    }
    pub fn clock(&self) -> f64 {
        self.clock
    }
    pub fn buffer_level(&self) -> usize {
        self.buffer
    }
    pub fn machines(&self) -> &[Machine] {
        &self.machines
    }
    pub fn parts_produced(&self) -> u64 {
        self.parts_produced
    }
    /// Cumulative energy in kW·s (divide by 3600 for kWh).
    pub fn energy_kws(&self) -> f64 {
        self.energy_kws
    }
    pub fn arrivals(&self) -> u64 {
        self.arrivals
    }
    pub fn blocked_arrivals(&self) -> u64 {
        self.blocked_arrivals
    }
    pub fn failures(&self) -> u64 {
        self.failures
    }
    pub fn requeue_losses(&self) -> u64 {
        self.requeue_losses
    }

    /// Instantaneous total power draw (kW) across all machines.
    pub fn total_power(&self) -> f64 {
        self.machines
            .iter()
            .map(|m| match m.mode {
                MachineMode::Busy => self.config.power_busy,
                MachineMode::Idle => self.config.power_idle,
                MachineMode::Standby => self.config.power_standby,
                MachineMode::Startup => self.config.power_startup,
                MachineMode::Failed => self.config.power_failed,
            })
            .sum()
    }

    /// Windowed (throughput parts/s, average power kW).
    pub fn kpis(&self) -> (f64, f64) {
        self.window.kpis(self.clock)
    }

    /// Preference scores from the windowed KPIs. Errors if `max_throughput`
    /// is not calibrated.
    pub fn preferences(&self) -> Result<PrefScores> {
        let (t, e) = self.kpis();
        preference_score(t, e, &self.config)
    }

    // ------------------------------------------------------------------
    // Dynamics
    // ------------------------------------------------------------------

    fn exp_draw(&mut self, rate: f64) -> f64 {
        Exp::new(rate).expect("rates validated > 0").sample(&mut self.rng)
    }

    /// Earliest pending event. Ties resolve to the first in scan order:
    /// arrival, then per machine (completion, failure, startup, repair).
    fn peek(&self) -> (f64, Pending) {
        let mut best_t = self.next_arrival_at;
        let mut best = Pending::Arrival;
        for (i, m) in self.machines.iter().enumerate() {
            let candidates = [
                (m.completion_at, Pending::Completion(i)),
                (m.failure_at, Pending::Failure(i)),
                (m.startup_done_at, Pending::StartupDone(i)),
                (m.repaired_at, Pending::Repaired(i)),
            ];
            for (t_opt, p) in candidates {
                if let Some(t) = t_opt {
                    if t < best_t {
                        best_t = t;
                        best = p;
                    }
                }
            }
        }
        (best_t, best)
    }

    /// Time of the next pending event (the arrival clock is always armed, so
    /// one always exists).
    pub fn next_event_time(&self) -> f64 {
        self.peek().0
    }

    fn integrate_to(&mut self, t: f64) {
        debug_assert!(t >= self.clock);
        self.energy_kws += self.total_power() * (t - self.clock);
        self.clock = t;
    }

    /// Advance the clock to `t` without firing an event (energy integrates,
    /// modes untouched). Errors if an event is pending before `t`.
    pub fn advance_to(&mut self, t: f64) -> Result<()> {
        if t < self.clock {
            return Err(Error::Input(format!(
                "advance_to({t}) is before current clock {}",
                self.clock
            )));
        }
        let next = self.next_event_time();
        if next < t {
            return Err(Error::State(format!(
                "cannot advance to {t}: event pending at {next}"
            )));
        }
        self.integrate_to(t);
        self.window.push(self.clock, self.parts_produced, self.energy_kws);
        Ok(())
    }

    fn start_processing(&mut self, i: usize) {
        debug_assert_eq!(self.machines[i].mode, MachineMode::Idle);
        // Fixed draw order per seize: completion first, then failure.
        let completion = self.clock + self.exp_draw(self.config.process_rate);
        let failure = self.clock + self.exp_draw(self.config.failure_rate);
        let m = &mut self.machines[i];
        m.mode = MachineMode::Busy;
        m.completion_at = Some(completion);
        m.failure_at = Some(failure);
    }

    /// Resolve every Idle machine: commanded-asleep ones power down now;
    /// commanded-awake ones seize a part if one is waiting (index order).
    fn settle_idle_machines(&mut self) {
        for i in 0..self.machines.len() {
            if self.machines[i].mode != MachineMode::Idle {
                continue;
            }
            if !self.machines[i].awake_commanded {
                self.machines[i].mode = MachineMode::Standby;
            } else if self.buffer > 0 {
                self.buffer -= 1;
                self.start_processing(i);
            }
        }
    }

    /// Fire the next event and return it. Energy is integrated up to the
    /// event time first; the KPI window records the post-event counters.
    pub fn step(&mut self) -> Event {
        let (t, pending) = self.peek();
        self.integrate_to(t);
        let kind = match pending {
            Pending::Arrival => {
                self.arrivals += 1;
                self.next_arrival_at = self.clock + self.exp_draw(self.config.arrival_rate);
                let accepted = self.buffer < self.config.buffer_capacity;
                if accepted {
                    self.buffer += 1;
                } else {
                    self.blocked_arrivals += 1;
                }
                EventKind::Arrival { accepted }
            }
            Pending::Completion(i) => {
                self.parts_produced += 1;
                self.machines[i].clear_clocks();
                self.machines[i].mode = MachineMode::Idle;
                EventKind::Completion { machine: i }
            }
            Pending::Failure(i) => {
                self.failures += 1;
                self.machines[i].clear_clocks();
                self.machines[i].mode = MachineMode::Failed;
                let repaired = self.clock + self.exp_draw(self.config.repair_rate);
                self.machines[i].repaired_at = Some(repaired);
                // The interrupted part goes back to the buffer; it is lost
                // only if the buffer is full at this instant.
                let requeued = self.buffer < self.config.buffer_capacity;
                if requeued {
                    self.buffer += 1;
                } else {
                    self.requeue_losses += 1;
                }
                EventKind::Failure { machine: i, requeued }
            }
            Pending::StartupDone(i) => {
                self.machines[i].clear_clocks();
                self.machines[i].mode = MachineMode::Idle;
                EventKind::StartupDone { machine: i }
            }
            Pending::Repaired(i) => {
                self.machines[i].clear_clocks();
                self.machines[i].mode = MachineMode::Idle;
                EventKind::Repaired { machine: i }
            }
        };
        self.settle_idle_machines();
        self.window.push(self.clock, self.parts_produced, self.energy_kws);
        Event { clock: self.clock, kind }
    }

    /// Apply a wake/sleep command. The `target_awake` machines chosen to stay
    /// awake are ranked Busy, Startup, Idle, Failed, Standby (ties to the
    /// lowest index), so the command disturbs running work as little as
    /// possible. Wake-ups start immediately; powering down waits for the
    /// machine's next Idle.
    pub fn apply(&mut self, action: Action) -> Result<()> {
        let c = self.config.machines;
        let n = action.target_awake;
        if n < 1 || n > c {
            return Err(Error::Input(format!(
                "target_awake must be in 1..={c}, got {n}"
            )));
        }
        fn wake_rank(mode: MachineMode) -> u8 {
            match mode {
                MachineMode::Busy => 0,
                MachineMode::Startup => 1,
                MachineMode::Idle => 2,
                MachineMode::Failed => 3,
                MachineMode::Standby => 4,
            }
        }
        let mut order: Vec<usize> = (0..c).collect();
        order.sort_by_key(|&i| (wake_rank(self.machines[i].mode), i));
        for (pos, &i) in order.iter().enumerate() {
            self.machines[i].awake_commanded = pos < n;
        }
        // Immediate consequences, machine-index order for deterministic draws.
        for i in 0..c {
            match (self.machines[i].mode, self.machines[i].awake_commanded) {
                (MachineMode::Standby, true) => {
                    let done = self.clock + self.exp_draw(self.config.startup_rate);
                    self.machines[i].mode = MachineMode::Startup;
                    self.machines[i].startup_done_at = Some(done);
                }
                (MachineMode::Idle, false) => {
                    self.machines[i].mode = MachineMode::Standby;
                }
                _ => {}
            }
        }
        Ok(())
    }

    /// Internal consistency checks used by tests and `simcheck`.
    pub fn check_invariants(&self) -> Result<()> {
        if self.buffer > self.config.buffer_capacity {
            return Err(Error::State(format!(
                "buffer {} exceeds capacity {}",
                self.buffer, self.config.buffer_capacity
            )));
        }
        let mut busy = 0u64;
        for (i, m) in self.machines.iter().enumerate() {
            let ok = match m.mode {
                MachineMode::Busy => {
                    busy += 1;
                    m.completion_at.is_some()
                        && m.failure_at.is_some()
                        && m.startup_done_at.is_none()
                        && m.repaired_at.is_none()
                }
                MachineMode::Startup => {
                    m.startup_done_at.is_some()
                        && m.completion_at.is_none()
                        && m.failure_at.is_none()
                        && m.repaired_at.is_none()
                }
                MachineMode::Failed => {
                    m.repaired_at.is_some()
                        && m.completion_at.is_none()
                        && m.failure_at.is_none()
                        && m.startup_done_at.is_none()
                }
                MachineMode::Idle | MachineMode::Standby => {
                    m.completion_at.is_none()
                        && m.failure_at.is_none()
                        && m.startup_done_at.is_none()
                        && m.repaired_at.is_none()
                }
            };
            if !ok {
                return Err(Error::State(format!(
                    "machine {i} in mode {:?} has inconsistent event clocks",
                    m.mode
                )));
            }
            if m.mode == MachineMode::Idle && !m.awake_commanded {
                return Err(Error::State(format!(
                    "machine {i} is Idle while commanded asleep"
                )));
            }
        }
        // Part conservation: every accepted arrival is produced, lost at a
        // full-buffer requeue, waiting in the buffer, or in service.
        let accepted = self.arrivals - self.blocked_arrivals;
        let accounted = self.parts_produced + self.requeue_losses + self.buffer as u64 + busy;
        if accepted != accounted {
            return Err(Error::State(format!(
                "part conservation violated: accepted {accepted} != accounted {accounted}"
            )));
        }
        if !self.energy_kws.is_finite() || self.energy_kws < 0.0 {
            return Err(Error::State(format!("energy counter corrupt: {}", self.energy_kws)));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ws(seed: u64) -> Workstation {
        Workstation::new(SimConfig::default(), seed).unwrap()
    }

    #[test]
    fn fresh_env_is_idle_and_silent() {
        let w = ws(1);
        assert_eq!(w.clock(), 0.0);
        assert_eq!(w.buffer_level(), 0);
        assert_eq!(w.kpis(), (0.0, 0.0));
        assert!(w.machines().iter().all(|m| m.mode == MachineMode::Idle && m.awake_commanded));
        w.check_invariants().unwrap();
    }

    #[test]
    fn energy_integrates_at_idle_power_until_first_event() {
        let mut w = ws(2);
        let t0 = w.next_event_time();
        let ev = w.step();
        assert_eq!(ev.clock, t0);
        let expected = 6.0 * 9.3 * t0;
        assert!((w.energy_kws() - expected).abs() < 1e-9 * expected.max(1.0));
    }

    #[test]
    fn first_arrival_is_seized_immediately() {
        let mut w = ws(3);
        let ev = w.step();
        assert!(matches!(ev.kind, EventKind::Arrival { accepted: true }));
        // All machines awake, so the part goes straight into service.
        assert_eq!(w.buffer_level(), 0);
        assert_eq!(w.machines()[0].mode, MachineMode::Busy);
    }

    #[test]
    fn identical_seeds_replay_identical_traces() {
        let mut a = ws(42);
        let mut b = ws(42);
        for _ in 0..2000 {
            let (ea, eb) = (a.step(), b.step());
            assert_eq!(ea.clock, eb.clock);
            assert_eq!(ea.kind, eb.kind);
        }
        assert_eq!(a.energy_kws(), b.energy_kws());
    }

    #[test]
    fn invariants_hold_under_random_control() {
        use rand::Rng;
        let mut w = ws(7);
        let mut rng = crate::rng::stream(7, "test-actions");
        for k in 0..20_000 {
            let target = rng.random_range(1..=6);
            w.apply(Action::new(target)).unwrap();
            let before = w.clock();
            w.step();
            assert!(w.clock() >= before);
            if k % 64 == 0 {
                w.check_invariants().unwrap();
            }
        }
        w.check_invariants().unwrap();
        assert!(w.parts_produced() > 0);
        assert!(w.failures() > 0, "30-day-scale random run should see failures");
    }

    #[test]
    fn tiny_buffer_blocks_arrivals() {
        let cfg = SimConfig {
            buffer_capacity: 1,
            arrival_rate: 0.5,
            process_rate: 0.012,
            ..SimConfig::default()
        };
        let mut w = Workstation::new(cfg, 11).unwrap();
        for _ in 0..5000 {
            w.step();
        }
        assert!(w.blocked_arrivals() > 0);
        w.check_invariants().unwrap();
    }

    #[test]
    fn failures_requeue_their_part() {
        // Failure-dominated: ψ >> μ, so almost every started part fails.
        let cfg = SimConfig {
            failure_rate: 0.1,
            process_rate: 0.001,
            ..SimConfig::default()
        };
        let mut w = Workstation::new(cfg, 5).unwrap();
        let mut requeued = 0u64;
        for _ in 0..3000 {
            if let EventKind::Failure { requeued: true, .. } = w.step().kind {
                requeued += 1;
            }
        }
        assert!(requeued > 10);
        w.check_invariants().unwrap();
    }

    #[test]
    fn apply_rejects_out_of_range_targets() {
        let mut w = ws(1);
        assert!(w.apply(Action::new(0)).is_err());
        assert!(w.apply(Action::new(7)).is_err());
        w.apply(Action::new(1)).unwrap();
        w.apply(Action::new(6)).unwrap();
    }

    #[test]
    fn sleep_command_prefers_standby_and_idle_machines() {
        let mut w = ws(9);
        // Occupy some machines first.
        for _ in 0..200 {
            w.step();
        }
        let busy_before: Vec<usize> = (0..6)
            .filter(|&i| w.machines()[i].mode == MachineMode::Busy)
            .collect();
        w.apply(Action::new(busy_before.len().max(1))).unwrap();
        // Every Busy machine keeps its wake command (deferred power-down
        // would still let it finish, but ranking should protect it outright).
        for &i in &busy_before {
            assert!(w.machines()[i].awake_commanded, "busy machine {i} was demoted");
            assert_eq!(w.machines()[i].mode, MachineMode::Busy);
        }
        // No machine may sit Idle while commanded asleep.
        w.check_invariants().unwrap();
    }

    #[test]
    fn wake_command_starts_standby_machines_immediately() {
        let mut w = ws(13);
        w.apply(Action::new(1)).unwrap();
        // Five machines were Idle → Standby instantly.
        let standby = w.machines().iter().filter(|m| m.mode == MachineMode::Standby).count();
        assert_eq!(standby, 5);
        w.apply(Action::new(6)).unwrap();
        let startup = w.machines().iter().filter(|m| m.mode == MachineMode::Startup).count();
        assert_eq!(startup, 5);
        assert!(w.machines().iter().all(|m| m.awake_commanded));
    }

    #[test]
    fn advance_to_stops_before_pending_events() {
        let mut w = ws(17);
        let next = w.next_event_time();
        w.advance_to(next * 0.5).unwrap();
        assert_eq!(w.clock(), next * 0.5);
        // Advancing past the pending event must fail.
        assert!(w.advance_to(next + 1.0).is_err());
        // Backwards must fail.
        assert!(w.advance_to(0.0).is_err());
    }

    #[test]
    fn two_day_all_on_throughput_is_near_arrival_rate() {
        let mut w = ws(23);
        let two_days = 2.0 * crate::sim::config::SECS_PER_DAY;
        while w.clock() < two_days {
            w.step();
        }
        let rate = w.parts_produced() as f64 / w.clock();
        assert!((0.045..=0.055).contains(&rate), "throughput {rate}");
        w.check_invariants().unwrap();
    }
}
