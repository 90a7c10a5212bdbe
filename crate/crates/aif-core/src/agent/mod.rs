//! Agent layer: replayed experience, environment interaction, the
//! alternating training loop, and the evaluation protocols.

pub mod eval;
pub mod interact;
pub mod protocol;
pub mod replay;
pub mod train;

pub use eval::{
    calibrate_max_throughput, run_final_eval, run_phase, run_validation, AgentController,
    Controller, EvalRngs, FinalEvalReport, FinalEvalRow, PhaseMetrics, ValidationReport,
};
pub use interact::interact;
pub use protocol::{run_training, CheckpointStage, TrainOutcome, TrainSink};
pub use replay::{Experience, ReplayMemory};
pub use train::{plan_finetune, train_epoch, Optimizers, TrainConfig, TrainRngs, TrainingRow};
