//! Sliding-window KPIs and preference scores.
//!
//! Throughput and average power are measured over a trailing window of length
//! `t_s` (covering the whole run while the clock is still below `t_s`).
//! Cumulative counters are step functions of time, so it is enough to keep
//! the counter values sampled at event times and subtract the value at the
//! window's left edge.

use std::collections::VecDeque;

use crate::error::Result;
use crate::sim::config::SimConfig;

/// Weight of the production score in the *linear* preference form, which is
/// logged for diagnostics only; the composite (sigmoid-gated) form drives the
/// agent.
pub const LINEAR_PREF_WEIGHT: f64 = 0.95;

/// One sample of the cumulative counters: (clock, parts produced, energy kW·s).
type Sample = (f64, u64, f64);

/// Ring of cumulative-counter samples covering at least the trailing window.
#[derive(Debug, Clone)]
pub struct KpiWindow {
    window_secs: f64,
    samples: VecDeque<Sample>,
}

impl KpiWindow {
    /// A window primed with the t=0 sample.
    pub fn new(window_secs: f64) -> Self {
        let mut samples = VecDeque::new();
        samples.push_back((0.0, 0, 0.0));
        KpiWindow { window_secs, samples }
    }

    /// Record the counters at time `t` and drop samples that can no longer be
    /// the left-edge reference. The newest sample at or before `t − t_s` must
    /// survive because the counters are right-continuous step functions.
    pub fn push(&mut self, t: f64, parts: u64, energy_kws: f64) {
        self.samples.push_back((t, parts, energy_kws));
        let cutoff = t - self.window_secs;
        while self.samples.len() >= 2 && self.samples[1].0 <= cutoff {
            self.samples.pop_front();
        }
    }

    /// Windowed (throughput parts/s, average power kW) at time `now`, which
    /// must be the time of the latest push. Both are 0 at the initial state.
    pub fn kpis(&self, now: f64) -> (f64, f64) {
        if now <= 0.0 {
            return (0.0, 0.0);
        }
        let span = now.min(self.window_secs);
        let cutoff = now - self.window_secs;
        // Left-edge reference: newest sample at or before the cutoff, or the
        // oldest sample while the run is shorter than the window.
        let mut base = self.samples[0];
        for &s in &self.samples {
            if s.0 <= cutoff {
                base = s;
            } else {
                break;
            }
        }
        let latest = *self.samples.back().expect("window always holds one sample");
        let parts = latest.1.saturating_sub(base.1) as f64;
        let energy = latest.2 - base.2;
        (parts / span, energy / span)
    }
}

/// Preference scores derived from windowed KPIs.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PrefScores {
    /// Production score: throughput normalized by T_max, clamped to [0, 1].
    pub production: f64,
    /// Energy score: 1 − E_avg/E_max, clamped to [0, 1].
    pub energy: f64,
    /// Composite preference R = production · sigmoid(c_r · energy). This is
    /// the score the agent optimizes.
    pub composite: f64,
    /// Linear diagnostic form φ·production + (1−φ)·energy with φ fixed at
    /// [`LINEAR_PREF_WEIGHT`]. Logged, never optimized.
    pub linear: f64,
}

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// Map windowed (throughput, average power) to preference scores.
///
/// Errors with a state error if `max_throughput` has not been calibrated.
pub fn preference_score(throughput: f64, avg_power: f64, config: &SimConfig) -> Result<PrefScores> {
    let t_max = config.max_throughput()?;
    let e_max = config.max_power();
    let production = (throughput / t_max).clamp(0.0, 1.0);
    let energy = (1.0 - avg_power / e_max).clamp(0.0, 1.0);
    let composite = production * sigmoid(config.energy_sharpness * energy);
    let linear = LINEAR_PREF_WEIGHT * production + (1.0 - LINEAR_PREF_WEIGHT) * energy;
    Ok(PrefScores { production, energy, composite, linear })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn calibrated() -> SimConfig {
        SimConfig { max_throughput: Some(0.05), ..SimConfig::default() }
    }

    #[test]
    fn zero_time_kpis_are_zero() {
        let w = KpiWindow::new(100.0);
        assert_eq!(w.kpis(0.0), (0.0, 0.0));
    }

    #[test]
    fn partial_window_divides_by_elapsed_time() {
        let mut w = KpiWindow::new(100.0);
        w.push(10.0, 2, 50.0);
        let (t, e) = w.kpis(10.0);
        assert!((t - 0.2).abs() < 1e-12);
        assert!((e - 5.0).abs() < 1e-12);
    }

    #[test]
    fn full_window_subtracts_left_edge() {
        let mut w = KpiWindow::new(100.0);
        w.push(30.0, 3, 30.0);
        w.push(90.0, 9, 90.0);
        w.push(150.0, 15, 150.0);
        // Window [50, 150]: reference is the newest sample at t ≤ 50, i.e.
        // t=30 with counters (3, 30), because counters are constant on [30,90).
        let (t, e) = w.kpis(150.0);
        assert!((t - (15.0 - 3.0) / 100.0).abs() < 1e-12);
        assert!((e - (150.0 - 30.0) / 100.0).abs() < 1e-12);
    }

    #[test]
    fn pruning_never_drops_the_reference_sample() {
        let mut w = KpiWindow::new(100.0);
        for k in 1..=50u64 {
            w.push(10.0 * k as f64, k, 10.0 * k as f64);
        }
        // now = 500, cutoff = 400; reference must be the t=400 sample.
        let (t, _) = w.kpis(500.0);
        assert!((t - (50.0 - 40.0) / 100.0).abs() < 1e-12);
        // Queue stays bounded: only samples in (400, 500] plus the reference.
        assert!(w.samples.len() <= 12);
    }

    #[test]
    fn exact_steady_rate_matches_window_average() {
        // Constant rates: 1 part / 20 s, 7 kW. Any window returns the rates.
        let mut w = KpiWindow::new(200.0);
        for k in 1..=100u64 {
            let t = 20.0 * k as f64;
            w.push(t, k, 7.0 * t);
        }
        let (t, e) = w.kpis(2000.0);
        assert!((t - 0.05).abs() < 1e-12);
        assert!((e - 7.0).abs() < 1e-9);
    }

    #[test]
    fn preference_requires_calibration() {
        let cfg = SimConfig::default();
        assert!(preference_score(0.04, 50.0, &cfg).is_err());
    }

    #[test]
    fn preference_scores_clamp_and_compose() {
        let cfg = calibrated();
        // Overdriven throughput clamps production to 1; zero power gives
        // energy 1 and composite sigmoid(c_r) ≈ 1.
        let p = preference_score(0.06, 0.0, &cfg).unwrap();
        assert_eq!(p.production, 1.0);
        assert_eq!(p.energy, 1.0);
        assert!((p.composite - sigmoid(10.0)).abs() < 1e-12);
        // Full power: energy 0, composite = production · sigmoid(0) = 0.5·prod.
        let p = preference_score(0.025, 90.0, &cfg).unwrap();
        assert!((p.energy - 0.0).abs() < 1e-12);
        assert!((p.composite - 0.5 * 0.5).abs() < 1e-12);
        // Linear diagnostic follows the fixed weight.
        assert!((p.linear - (0.95 * 0.5 + 0.05 * 0.0)).abs() < 1e-12);
    }
}
