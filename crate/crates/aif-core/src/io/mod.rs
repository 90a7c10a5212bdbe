//! Run configuration, checkpoints, and CSV artifacts.

pub mod checkpoint;
pub mod config;
pub mod csvlog;

pub use checkpoint::{load_checkpoint, save_checkpoint, Checkpoint};
pub use config::{
    apply_env_overrides, load_config, parse_config_str, save_config, write_config, RunConfig,
    ENV_PREFIX, SCHEMA_VERSION,
};
pub use csvlog::{
    final_eval_row, kpi_row, read_csv, training_row, validation_row, CsvTable, CsvWriter,
    FINAL_EVAL_HEADER, KPI_HEADER, SWEEP_HEADER, TRAINING_HEADER, VALIDATION_HEADER,
};
