//! Replay memory of interaction windows.
//!
//! One [`Experience`] spans H decision events: the observation where the
//! window started, the policy embedding π̂ captured there, and the
//! observation H events later. Training batches always contain the most
//! recent experience (the agent never ignores what just happened) plus
//! uniform draws with replacement.

use std::collections::VecDeque;

use rand::Rng;

use crate::error::{Error, Result};
use crate::rng::Stream;
use crate::sim::obs::ObservationVec;

/// One H-event interaction window.
#[derive(Debug, Clone)]
pub struct Experience {
    /// Observation at the start of the window.
    pub o_start: ObservationVec,
    /// Policy embedding π̂ = Π(actor, o_start) captured at the start.
    pub pi_hat: Vec<f64>,
    /// Observation after H decision events.
    pub o_end: ObservationVec,
    /// Simulation clock at the window start (diagnostics).
    pub start_clock: f64,
    /// Simulation clock at the window end (diagnostics).
    pub end_clock: f64,
}

/// Bounded FIFO of experiences.
#[derive(Debug, Clone)]
pub struct ReplayMemory {
    items: VecDeque<Experience>,
    capacity: usize,
}

impl ReplayMemory {
    pub fn new(capacity: usize) -> Result<Self> {
        if capacity == 0 {
            return Err(Error::config("replay_capacity", "must be ≥ 1"));
        }
        Ok(ReplayMemory { items: VecDeque::with_capacity(capacity.min(16_384)), capacity })
    }

    pub fn push(&mut self, e: Experience) {
        if self.items.len() == self.capacity {
            self.items.pop_front();
        }
        self.items.push_back(e);
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn latest(&self) -> Option<&Experience> {
        self.items.back()
    }

    pub fn iter(&self) -> impl Iterator<Item = &Experience> {
        self.items.iter()
    }

    /// `n` experiences for model learning: the most recent one first, the
    /// rest uniform with replacement.
    pub fn sample_batch(&self, n: usize, rng: &mut Stream) -> Result<Vec<&Experience>> {
        let latest = self
            .latest()
            .ok_or_else(|| Error::State("cannot sample from empty replay memory".into()))?;
        let mut batch = Vec::with_capacity(n);
        if n == 0 {
            return Err(Error::Input("batch size must be ≥ 1".into()));
        }
        batch.push(latest);
        for _ in 1..n {
            let idx = rng.random_range(0..self.items.len());
            batch.push(&self.items[idx]);
        }
        Ok(batch)
    }

    /// `n` observations for policy optimization: the most recent observation
    /// first (the latest window's end), the rest uniform start-observations.
    pub fn sample_observations(&self, n: usize, rng: &mut Stream) -> Result<Vec<&ObservationVec>> {
        let latest = self
            .latest()
            .ok_or_else(|| Error::State("cannot sample from empty replay memory".into()))?;
        if n == 0 {
            return Err(Error::Input("batch size must be ≥ 1".into()));
        }
        let mut obs = Vec::with_capacity(n);
        obs.push(&latest.o_end);
        for _ in 1..n {
            let idx = rng.random_range(0..self.items.len());
            obs.push(&self.items[idx].o_start);
        }
        Ok(obs)
    }
}
