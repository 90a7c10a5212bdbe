//! Event-driven workstation simulator: parallel machines behind a finite
//! buffer, exponential event clocks, exact energy accounting, sliding-window
//! KPIs, and the observation encoding the agent consumes.

pub mod config;
pub mod kpi;
pub mod machine;
pub mod obs;
pub mod state;

pub use config::{SimConfig, SECS_PER_DAY};
pub use kpi::{preference_score, KpiWindow, PrefScores};
pub use machine::{Machine, MachineMode, MODE_COUNT};
pub use obs::{observe, ObsLayout, ObservationVec, PREF_CHANNELS};
pub use state::{Action, Event, EventKind, Workstation};
