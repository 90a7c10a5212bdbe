//! Workstation parameters.
//!
//! All rates are per second; power draws are kW; times are seconds. The
//! defaults describe the reference workstation: six parallel machines fed by
//! a shared buffer, with an 8-hour sliding KPI window.

use crate::error::{Error, Result};

/// Seconds in one day, the natural unit for run lengths.
pub const SECS_PER_DAY: f64 = 86_400.0;

/// Full parameterization of the workstation environment.
#[derive(Debug, Clone, PartialEq)]
pub struct SimConfig {
    /// Number of parallel machines (`c`).
    pub machines: usize,
    /// Finite buffer capacity in parts (`K`); buffer level lives in `0..=K`.
    pub buffer_capacity: usize,
    /// Part arrival rate λ (1/s) of the upstream Poisson source.
    pub arrival_rate: f64,
    /// Per-machine processing rate μ (1/s) while Busy.
    pub process_rate: f64,
    /// Startup completion rate δ (1/s) while Startup.
    pub startup_rate: f64,
    /// Failure rate ψ (1/s); the failure clock runs only while Busy.
    pub failure_rate: f64,
    /// Repair completion rate ξ (1/s) while Failed.
    pub repair_rate: f64,
    /// Power draw (kW) per machine in each mode.
    pub power_busy: f64,
    pub power_startup: f64,
    pub power_idle: f64,
    pub power_standby: f64,
    pub power_failed: f64,
    /// Sliding KPI window length t_s in seconds.
    pub window_secs: f64,
    /// Sharpness c_r of the sigmoid gate in the composite preference score.
    pub energy_sharpness: f64,
    /// Throughput normalizer T_max (parts/s) for the production score.
    /// `None` means "not yet calibrated"; preference scores cannot be
    /// computed until it is set (normally from a long ALL-ON run).
    pub max_throughput: Option<f64>,
}

impl Default for SimConfig {
    fn default() -> Self {
        SimConfig {
            machines: 6,
            buffer_capacity: 10,
            arrival_rate: 0.050,
            process_rate: 0.012,
            startup_rate: 0.033,
            failure_rate: 0.001,
            repair_rate: 0.033,
            power_busy: 15.0,
            power_startup: 10.0,
            power_idle: 9.3,
            power_standby: 0.0,
            power_failed: 0.0,
            window_secs: 28_800.0,
            energy_sharpness: 10.0,
            max_throughput: None,
        }
    }
}

impl SimConfig {
    /// Check every invariant, naming the offending field on failure.
    pub fn validate(&self) -> Result<()> {
        if self.machines == 0 {
            return Err(Error::config("machines", "must be at least 1"));
        }
        if self.buffer_capacity == 0 {
            return Err(Error::config("buffer_capacity", "must be at least 1"));
        }
        let positive_rates: [(&'static str, f64); 5] = [
            ("arrival_rate", self.arrival_rate),
            ("process_rate", self.process_rate),
            ("startup_rate", self.startup_rate),
            ("failure_rate", self.failure_rate),
            ("repair_rate", self.repair_rate),
        ];
        for (field, v) in positive_rates {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::Config {
                    field,
                    reason: format!("rate must be finite and > 0, got {v}"),
                });
            }
        }
        let powers: [(&'static str, f64); 5] = [
            ("power_busy", self.power_busy),
            ("power_startup", self.power_startup),
            ("power_idle", self.power_idle),
            ("power_standby", self.power_standby),
            ("power_failed", self.power_failed),
        ];
        for (field, v) in powers {
            if !(v.is_finite() && v >= 0.0) {
                return Err(Error::Config {
                    field,
                    reason: format!("power must be finite and >= 0, got {v}"),
                });
            }
        }
        // The energy lever only works if waking costs more than sleeping.
        if !(self.power_busy > self.power_startup) {
            return Err(Error::config("power_startup", "must be < power_busy"));
        }
        if !(self.power_startup > self.power_idle) {
            return Err(Error::config("power_idle", "must be < power_startup"));
        }
        if !(self.power_idle > self.power_standby) {
            return Err(Error::config("power_standby", "must be < power_idle"));
        }
        if !(self.window_secs.is_finite() && self.window_secs > 0.0) {
            return Err(Error::config("window_secs", "must be finite and > 0"));
        }
        if !(self.energy_sharpness.is_finite() && self.energy_sharpness > 0.0) {
            return Err(Error::config("energy_sharpness", "must be finite and > 0"));
        }
        if let Some(tm) = self.max_throughput {
            if !(tm.is_finite() && tm > 0.0) {
                return Err(Error::config("max_throughput", "must be finite and > 0"));
            }
        }
        Ok(())
    }

    /// Power draw with every machine Busy — the energy normalizer E_max.
    pub fn max_power(&self) -> f64 {
        self.machines as f64 * self.power_busy
    }

    /// Throughput normalizer, or a state error if not yet calibrated.
    pub fn max_throughput(&self) -> Result<f64> {
        self.max_throughput.ok_or_else(|| {
            Error::State("max_throughput not calibrated; run an ALL-ON calibration first".into())
        })
    }
}
