//! A single machine: mode, wake command, and pending event clocks.

/// Operating mode of one machine.
///
/// The discriminant order is the one-hot encoding order in observations:
/// Busy, Idle, Standby, Startup, Failed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum MachineMode {
    /// Processing a part; draws `power_busy`. Completion races failure.
    Busy,
    /// Awake and waiting for a part; draws `power_idle`.
    Idle,
    /// Powered down; draws `power_standby`. Must start up before working.
    Standby,
    /// Warming up; draws `power_startup` until the startup clock fires.
    Startup,
    /// Broken; draws `power_failed` until repaired. The in-progress part is
    /// scrapped at failure time.
    Failed,
}

/// Number of machine modes (width of each machine's one-hot block).
pub const MODE_COUNT: usize = 5;

impl MachineMode {
    /// Position inside the one-hot block.
    pub fn index(self) -> usize {
        match self {
            MachineMode::Busy => 0,
            MachineMode::Idle => 1,
            MachineMode::Standby => 2,
            MachineMode::Startup => 3,
            MachineMode::Failed => 4,
        }
    }

    pub fn from_index(i: usize) -> Option<Self> {
        match i {
            0 => Some(MachineMode::Busy),
            1 => Some(MachineMode::Idle),
            2 => Some(MachineMode::Standby),
            3 => Some(MachineMode::Startup),
            4 => Some(MachineMode::Failed),
            _ => None,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            MachineMode::Busy => "busy",
            MachineMode::Idle => "idle",
            MachineMode::Standby => "standby",
            MachineMode::Startup => "startup",
            MachineMode::Failed => "failed",
        }
    }
}

/// One machine's full state. Event clocks hold absolute firing times and are
/// populated only in the modes where they can run.
#[derive(Debug, Clone, PartialEq)]
pub struct Machine {
    pub mode: MachineMode,
    /// Latest wake/sleep command from the controller. A machine commanded
    /// asleep finishes its current activity first (deferred power-down).
    pub awake_commanded: bool,
    /// Absolute completion time of the part in service (Busy only).
    pub completion_at: Option<f64>,
    /// Absolute failure time racing the completion (Busy only).
    pub failure_at: Option<f64>,
    /// Absolute end of warm-up (Startup only).
    pub startup_done_at: Option<f64>,
    /// Absolute end of repair (Failed only).
    pub repaired_at: Option<f64>,
}

impl Machine {
    /// A fresh machine: awake and idle, no pending events.
    pub fn idle() -> Self {
        Machine {
            mode: MachineMode::Idle,
            awake_commanded: true,
            completion_at: None,
            failure_at: None,
            startup_done_at: None,
            repaired_at: None,
        }
    }

    /// Drop every pending clock (used when leaving the mode that owns them).
    pub fn clear_clocks(&mut self) {
        self.completion_at = None;
        self.failure_at = None;
        self.startup_done_at = None;
        self.repaired_at = None;
    }
}
