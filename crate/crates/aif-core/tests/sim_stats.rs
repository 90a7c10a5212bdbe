//! Statistical fidelity checks for the simulator, run at full 30-day scale.
//!
//! Oracles are independent of the implementation: queueing-theory capacity
//! and steady-state power arguments, plus closed-form exponential moments.
//!
//! Reference numbers for the default config (c=6, K=10, λ=0.05, μ=0.012,
//! ψ=0.001, ξ=0.033):
//!   * availability A = ξ/(ψ+ξ) ≈ 0.9706, c·μ·A ≈ 0.0699 > λ → arrival-limited,
//!     so completed-part throughput ≈ λ·(1−P_block) ≈ 0.0499 parts/s;
//!   * expected busy machines = λ/μ ≈ 4.16 (total busy time per completed
//!     part is 1/μ by memorylessness, failures included);
//!   * expected failed machines = (λ/μ)·ψ/ξ ≈ 0.126;
//!   * mean power ≈ 4.16·15 + 1.71·9.3 + 0.126·0 ≈ 78.3 kW.

use aif_core::sim::{Action, SimConfig, Workstation, SECS_PER_DAY};

fn run_all_on(seed: u64, days: f64) -> (f64, f64) {
    let mut ws = Workstation::new(SimConfig::default(), seed).unwrap();
    let horizon = days * SECS_PER_DAY;
    while ws.clock() < horizon {
        ws.step();
    }
    ws.check_invariants().unwrap();
    let throughput = ws.parts_produced() as f64 / ws.clock();
    let avg_power = ws.energy_kws() / ws.clock();
    (throughput, avg_power)
}

#[test]
fn all_on_30_days_matches_arrival_limited_oracle() {
    let (t, p) = run_all_on(1001, 30.0);
    println!("seed 1001: throughput {t:.6} parts/s, mean power {p:.3} kW");
    assert!(
        (0.049..=0.050).contains(&t),
        "30-day ALL-ON throughput {t} outside arrival-limited band [0.049, 0.050]"
    );
    assert!(
        (76.0..=80.0).contains(&p),
        "30-day ALL-ON mean power {p} kW outside steady-state band [76, 80]"
    );
}

#[test]
fn all_on_throughput_is_stable_across_seeds() {
    // Mean over several seeds should sit within ~2 SE of λ(1−P_block); the
    // averaging shrinks per-seed noise (SE ≈ 1.4e-4 per 30-day run).
    let seeds = [11u64, 12, 13, 14, 15];
    let mut ts = Vec::new();
    for &s in &seeds {
        let (t, _) = run_all_on(s, 30.0);
        println!("seed {s}: throughput {t:.6}");
        ts.push(t);
    }
    let mean = ts.iter().sum::<f64>() / ts.len() as f64;
    assert!(
        (0.0493..=0.0503).contains(&mean),
        "mean 30-day throughput {mean} drifted from λ(1−P_block) ≈ 0.0499"
    );
}

#[test]
fn constant_low_awake_count_throttles_throughput_and_power() {
    // Two awake machines cap service at 2·μ·A ≈ 0.0233 < λ: the system
    // saturates, blocks arrivals, and burns far less energy than ALL-ON.
    let mut ws = Workstation::new(SimConfig::default(), 31).unwrap();
    let horizon = 10.0 * SECS_PER_DAY;
    while ws.clock() < horizon {
        ws.apply(Action::new(2)).unwrap();
        ws.step();
    }
    let t = ws.parts_produced() as f64 / ws.clock();
    let p = ws.energy_kws() / ws.clock();
    println!("2-awake: throughput {t:.6}, power {p:.3} kW");
    assert!((0.020..=0.026).contains(&t), "throughput {t} should be ≈ 2·μ·A ≈ 0.0233");
    assert!(ws.blocked_arrivals() > 0, "saturated system must block arrivals");
    assert!(p < 45.0, "two awake machines should draw well under half of ALL-ON power");
}

#[test]
fn five_awake_machines_keep_most_throughput_with_less_power() {
    // The sweet spot the agent should discover: 4–5 awake machines still
    // clear nearly all arrivals (5·μ·A ≈ 0.0583 > λ) while saving energy.
    let mut ws = Workstation::new(SimConfig::default(), 37).unwrap();
    let horizon = 10.0 * SECS_PER_DAY;
    while ws.clock() < horizon {
        ws.apply(Action::new(5)).unwrap();
        ws.step();
    }
    let t = ws.parts_produced() as f64 / ws.clock();
    let p = ws.energy_kws() / ws.clock();
    println!("5-awake: throughput {t:.6}, power {p:.3} kW");
    let (t_ref, p_ref) = run_all_on(37, 10.0);
    let loss = 100.0 * (t_ref - t) / t_ref;
    let saving = 100.0 * (p_ref - p) / p_ref;
    println!("5-awake vs ALL-ON: loss {loss:.2}%, saving {saving:.2}%");
    assert!(loss < 8.0, "production loss {loss}% too high for 5 awake machines");
    assert!(saving > 3.0, "energy saving {saving}% too low for 5 awake machines");
}

#[test]
fn exponential_event_gaps_have_the_configured_mean() {
    // Arrival gaps over a long ALL-ON run: mean ≈ 1/λ within 3 SE.
    let mut ws = Workstation::new(SimConfig::default(), 41).unwrap();
    let mut last_arrival = 0.0;
    let mut gaps = Vec::new();
    while gaps.len() < 100_000 {
        let ev = ws.step();
        if let aif_core::sim::EventKind::Arrival { .. } = ev.kind {
            gaps.push(ev.clock - last_arrival);
            last_arrival = ev.clock;
        }
    }
    let n = gaps.len() as f64;
    let mean = gaps.iter().sum::<f64>() / n;
    let expect = 1.0 / 0.050;
    let se = expect / n.sqrt();
    assert!(
        (mean - expect).abs() < 3.0 * se,
        "arrival gap mean {mean} vs {expect} (3 SE = {})",
        3.0 * se
    );
}
