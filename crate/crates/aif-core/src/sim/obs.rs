//! Observation encoding: what the agent sees.
//!
//! An observation is a flat vector in [0, 1]:
//!
//! ```text
//! [ buffer level one-hot (K+1) | machine mode one-hots (c × 5) | R_prod, R_energy, R ]
//! ```
//!
//! Machine one-hot channel order is Busy, Idle, Standby, Startup, Failed.
//! The three trailing channels are the windowed preference scores, already
//! normalized to [0, 1], so the decoder can treat every channel as a
//! Bernoulli-like probability.

use std::ops::Range;

use crate::error::{Error, Result};
use crate::sim::config::SimConfig;
use crate::sim::machine::MODE_COUNT;
use crate::sim::state::Workstation;

/// Number of trailing preference channels.
pub const PREF_CHANNELS: usize = 3;

/// Shape of the observation vector for a given workstation size.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ObsLayout {
    pub buffer_capacity: usize,
    pub machines: usize,
}

impl ObsLayout {
    pub fn from_config(cfg: &SimConfig) -> Self {
        ObsLayout { buffer_capacity: cfg.buffer_capacity, machines: cfg.machines }
    }

    /// Total observation dimension: (K+1) + 5c + 3.
    pub fn dim(&self) -> usize {
        self.buffer_capacity + 1 + self.machines * MODE_COUNT + PREF_CHANNELS
    }

    /// Channels of the buffer-level one-hot.
    pub fn buffer_range(&self) -> Range<usize> {
        0..self.buffer_capacity + 1
    }

    /// Channels of machine `i`'s mode one-hot.
    pub fn machine_range(&self, i: usize) -> Range<usize> {
        let start = self.buffer_capacity + 1 + i * MODE_COUNT;
        start..start + MODE_COUNT
    }

    /// Channels of all machine one-hots together.
    pub fn machines_range(&self) -> Range<usize> {
        self.buffer_capacity + 1..self.buffer_capacity + 1 + self.machines * MODE_COUNT
    }

    /// Channels of the preference scores (R_production, R_energy, R).
    pub fn pref_range(&self) -> Range<usize> {
        let start = self.buffer_capacity + 1 + self.machines * MODE_COUNT;
        start..start + PREF_CHANNELS
    }

    /// Channel holding the composite preference R.
    pub fn composite_index(&self) -> usize {
        self.pref_range().start + 2
    }

    /// Check that `v` is a plausible observation for this layout: right
    /// length, finite, every channel in [0, 1].
    pub fn validate(&self, v: &[f64]) -> Result<()> {
        if v.len() != self.dim() {
            return Err(Error::Shape(format!(
                "observation length {} does not match layout dim {}",
                v.len(),
                self.dim()
            )));
        }
        for (i, &x) in v.iter().enumerate() {
            if !x.is_finite() || !(0.0..=1.0).contains(&x) {
                return Err(Error::Input(format!(
                    "observation channel {i} out of range: {x}"
                )));
            }
        }
        Ok(())
    }
}

/// A validated observation vector.
#[derive(Debug, Clone, PartialEq)]
pub struct ObservationVec(Vec<f64>);

impl ObservationVec {
    /// Wrap a raw vector, validating against the layout.
    pub fn new(layout: &ObsLayout, v: Vec<f64>) -> Result<Self> {
        layout.validate(&v)?;
        Ok(ObservationVec(v))
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

/// Encode the current workstation state as an observation.
///
/// Errors if preference scores cannot be computed yet (throughput
/// normalizer not calibrated).
pub fn observe(ws: &Workstation) -> Result<ObservationVec> {
    let layout = ObsLayout::from_config(ws.config());
    let mut v = vec![0.0; layout.dim()];
    v[layout.buffer_range().start + ws.buffer_level()] = 1.0;
    for (i, m) in ws.machines().iter().enumerate() {
        v[layout.machine_range(i).start + m.mode.index()] = 1.0;
    }
    let prefs = ws.preferences()?;
    let pr = layout.pref_range();
    v[pr.start] = prefs.production;
    v[pr.start + 1] = prefs.energy;
    v[pr.start + 2] = prefs.composite;
    ObservationVec::new(&layout, v)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sim::state::Action;

    fn calibrated() -> SimConfig {
        SimConfig { max_throughput: Some(0.0497), ..SimConfig::default() }
    }

    #[test]
    fn default_layout_dimension() {
        let layout = ObsLayout::from_config(&SimConfig::default());
        assert_eq!(layout.dim(), 11 + 30 + 3);
        assert_eq!(layout.buffer_range(), 0..11);
        assert_eq!(layout.machine_range(0), 11..16);
        assert_eq!(layout.machine_range(5), 36..41);
        assert_eq!(layout.pref_range(), 41..44);
        assert_eq!(layout.composite_index(), 43);
    }

    #[test]
    fn observe_requires_calibration() {
        let ws = Workstation::new(SimConfig::default(), 1).unwrap();
        assert!(observe(&ws).is_err());
    }

    #[test]
    fn fresh_env_observation() {
        let ws = Workstation::new(calibrated(), 1).unwrap();
        let o = observe(&ws).unwrap();
        let v = o.as_slice();
        // Buffer empty → channel 0 hot.
        assert_eq!(v[0], 1.0);
        assert_eq!(v[1..11].iter().sum::<f64>(), 0.0);
        // All machines Idle → Idle channel hot in each block.
        for i in 0..6 {
            let r = ObsLayout::from_config(ws.config()).machine_range(i);
            assert_eq!(v[r.start + 1], 1.0, "machine {i} idle channel");
            assert_eq!(v[r.clone()].iter().sum::<f64>(), 1.0);
        }
        // Prefs at t=0: production 0, energy 1, composite 0.
        assert_eq!(&v[41..44], &[0.0, 1.0, 0.0]);
    }

    #[test]
    fn observations_stay_valid_during_a_run() {
        let mut ws = Workstation::new(calibrated(), 3).unwrap();
        let layout = ObsLayout::from_config(ws.config());
        let mut rng = crate::rng::stream(3, "obs-actions");
        use rand::Rng;
        for _ in 0..5000 {
            ws.apply(Action::new(rng.random_range(1..=6))).unwrap();
            ws.step();
            let o = observe(&ws).unwrap();
            layout.validate(o.as_slice()).unwrap();
            // One-hot groups must each sum to exactly 1.
            let v = o.as_slice();
            assert_eq!(v[layout.buffer_range()].iter().sum::<f64>(), 1.0);
            for i in 0..6 {
                assert_eq!(v[layout.machine_range(i)].iter().sum::<f64>(), 1.0);
            }
        }
    }

    #[test]
    fn validate_rejects_bad_vectors() {
        let layout = ObsLayout::from_config(&SimConfig::default());
        assert!(layout.validate(&vec![0.0; 43]).is_err());
        let mut v = vec![0.0; 44];
        v[7] = 1.5;
        assert!(layout.validate(&v).is_err());
        v[7] = f64::NAN;
        assert!(layout.validate(&v).is_err());
    }
}
