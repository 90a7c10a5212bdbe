//! Flat `key = value` run configuration with a schema version, `#` comments,
//! strict unknown-key/duplicate-key errors, and `AIF_*` environment
//! overrides.

use std::path::Path;

use crate::agent::train::TrainConfig;
use crate::error::{Error, Result};
use crate::model::ArchConfig;
use crate::sim::config::SimConfig;

pub const SCHEMA_VERSION: u64 = 1;
/// Environment variables named `AIF_<KEY>` (key upper-cased) override file
/// values.
pub const ENV_PREFIX: &str = "AIF_";

/// Everything a run needs: root seed, simulator, architecture, training
/// schedule, and the KPI sampling period used by `evaluate`.
#[derive(Debug, Clone)]
pub struct RunConfig {
    pub seed: u64,
    /// KPI CSV sampling period in seconds; 0 disables the KPI trace.
    pub kpi_period: f64,
    pub sim: SimConfig,
    pub arch: ArchConfig,
    pub train: TrainConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            seed: 42,
            kpi_period: 3600.0,
            sim: SimConfig::default(),
            arch: ArchConfig::default(),
            train: TrainConfig::default(),
        }
    }
}

impl RunConfig {
    pub fn validate(&self) -> Result<()> {
        if !self.kpi_period.is_finite() || self.kpi_period < 0.0 {
            return Err(Error::config("kpi_period", "must be finite and ≥ 0"));
        }
        self.sim.validate()?;
        self.arch.validate()?;
        self.train.validate()
    }
}

/// Every key the parser accepts, in canonical snapshot order
/// (`schema_version` first).
pub const KEYS: &[&str] = &[
    "schema_version",
    "seed",
    "kpi_period",
    "machines",
    "buffer_capacity",
    "arrival_rate",
    "process_rate",
    "startup_rate",
    "failure_rate",
    "repair_rate",
    "power_busy",
    "power_startup",
    "power_idle",
    "power_standby",
    "power_failed",
    "window_secs",
    "energy_sharpness",
    "max_throughput",
    "latent_dim",
    "encoder_hidden",
    "transition_hidden",
    "decoder_hidden",
    "actor_hidden",
    "lambda_s",
    "var_floor",
    "dropout",
    "epochs",
    "iterations",
    "horizon",
    "batch_model",
    "batch_policy",
    "samples_outer",
    "samples_inner",
    "beta",
    "lr_encoder",
    "lr_transition",
    "lr_decoder",
    "lr_actor",
    "lr_finetune",
    "grad_clip",
    "replay_capacity",
    "finetune_steps",
    "val_envs",
    "val_days",
    "warmup_days",
    "random_days",
];

fn parse_err(context: &str, detail: impl std::fmt::Display) -> Error {
    Error::ConfigParse(format!("{context}: {detail}"))
}

fn parse_f64(context: &str, v: &str) -> Result<f64> {
    let x: f64 =
        v.parse().map_err(|_| parse_err(context, format_args!("expected a number, got `{v}`")))?;
    if !x.is_finite() {
        return Err(parse_err(context, format_args!("`{v}` is not finite")));
    }
    Ok(x)
}

fn parse_u64(context: &str, v: &str) -> Result<u64> {
    v.parse().map_err(|_| parse_err(context, format_args!("expected a non-negative integer, got `{v}`")))
}

fn parse_usize(context: &str, v: &str) -> Result<usize> {
    v.parse().map_err(|_| parse_err(context, format_args!("expected a non-negative integer, got `{v}`")))
}

fn parse_usize_list(context: &str, v: &str) -> Result<Vec<usize>> {
    v.split(',').map(|p| parse_usize(context, p.trim())).collect()
}

/// Apply one `key = value` pair to the config. `context` prefixes error
/// messages (e.g. "line 7" or "env AIF_SEED").
fn apply_key(cfg: &mut RunConfig, key: &str, value: &str, context: &str) -> Result<()> {
    match key {
        "schema_version" => {
            let v = parse_u64(context, value)?;
            if v != SCHEMA_VERSION {
                return Err(parse_err(
                    context,
                    format_args!("unsupported schema_version {v} (supported: {SCHEMA_VERSION})"),
                ));
            }
        }
        "seed" => cfg.seed = parse_u64(context, value)?,
        "kpi_period" => cfg.kpi_period = parse_f64(context, value)?,

        "machines" => cfg.sim.machines = parse_usize(context, value)?,
        "buffer_capacity" => cfg.sim.buffer_capacity = parse_usize(context, value)?,
        "arrival_rate" => cfg.sim.arrival_rate = parse_f64(context, value)?,
        "process_rate" => cfg.sim.process_rate = parse_f64(context, value)?,
        "startup_rate" => cfg.sim.startup_rate = parse_f64(context, value)?,
        "failure_rate" => cfg.sim.failure_rate = parse_f64(context, value)?,
        "repair_rate" => cfg.sim.repair_rate = parse_f64(context, value)?,
        "power_busy" => cfg.sim.power_busy = parse_f64(context, value)?,
        "power_startup" => cfg.sim.power_startup = parse_f64(context, value)?,
        "power_idle" => cfg.sim.power_idle = parse_f64(context, value)?,
        "power_standby" => cfg.sim.power_standby = parse_f64(context, value)?,
        "power_failed" => cfg.sim.power_failed = parse_f64(context, value)?,
        "window_secs" => cfg.sim.window_secs = parse_f64(context, value)?,
        "energy_sharpness" => cfg.sim.energy_sharpness = parse_f64(context, value)?,
        "max_throughput" => cfg.sim.max_throughput = Some(parse_f64(context, value)?),

        "latent_dim" => cfg.arch.latent_dim = parse_usize(context, value)?,
        "encoder_hidden" => cfg.arch.encoder_hidden = parse_usize_list(context, value)?,
        "transition_hidden" => cfg.arch.transition_hidden = parse_usize_list(context, value)?,
        "decoder_hidden" => cfg.arch.decoder_hidden = parse_usize_list(context, value)?,
        "actor_hidden" => cfg.arch.actor_hidden = parse_usize(context, value)?,
        "lambda_s" => cfg.arch.lambda_s = parse_f64(context, value)?,
        "var_floor" => cfg.arch.var_floor = parse_f64(context, value)?,
        "dropout" => cfg.arch.dropout = parse_f64(context, value)?,

        "epochs" => cfg.train.epochs = parse_usize(context, value)?,
        "iterations" => cfg.train.iterations = parse_usize(context, value)?,
        "horizon" => cfg.train.horizon = parse_usize(context, value)?,
        "batch_model" => cfg.train.batch_model = parse_usize(context, value)?,
        "batch_policy" => cfg.train.batch_policy = parse_usize(context, value)?,
        "samples_outer" => cfg.train.samples_outer = parse_usize(context, value)?,
        "samples_inner" => cfg.train.samples_inner = parse_usize(context, value)?,
        "beta" => cfg.train.beta = parse_f64(context, value)?,
        "lr_encoder" => cfg.train.lr_encoder = parse_f64(context, value)?,
        "lr_transition" => cfg.train.lr_transition = parse_f64(context, value)?,
        "lr_decoder" => cfg.train.lr_decoder = parse_f64(context, value)?,
        "lr_actor" => cfg.train.lr_actor = parse_f64(context, value)?,
        "lr_finetune" => cfg.train.lr_finetune = parse_f64(context, value)?,
        "grad_clip" => cfg.train.grad_clip = parse_f64(context, value)?,
        "replay_capacity" => cfg.train.replay_capacity = parse_usize(context, value)?,
        "finetune_steps" => cfg.train.finetune_steps = parse_usize(context, value)?,
        "val_envs" => cfg.train.val_envs = parse_usize(context, value)?,
        "val_days" => cfg.train.val_days = parse_f64(context, value)?,
        "warmup_days" => cfg.train.warmup_days = parse_f64(context, value)?,
        "random_days" => cfg.train.random_days = parse_f64(context, value)?,

        other => {
            return Err(parse_err(context, format_args!("unknown key `{other}`")));
        }
    }
    Ok(())
}

/// Parse a config document. Requires `schema_version`; rejects unknown and
/// duplicate keys. Semantic validation (`validate`) is the caller's job so
/// that env overrides can be applied first.
pub fn parse_config_str(text: &str) -> Result<RunConfig> {
    let mut cfg = RunConfig::default();
    let mut seen = std::collections::BTreeSet::new();
    let mut saw_schema = false;
    for (idx, raw) in text.lines().enumerate() {
        let line = idx + 1;
        let content = raw.split('#').next().unwrap_or("").trim();
        if content.is_empty() {
            continue;
        }
        let context = format!("line {line}");
        let (key, value) = content
            .split_once('=')
            .ok_or_else(|| parse_err(&context, format_args!("expected `key = value`, got `{content}`")))?;
        let key = key.trim();
        let value = value.trim();
        if key.is_empty() || value.is_empty() {
            return Err(parse_err(&context, "empty key or value"));
        }
        if !seen.insert(key.to_string()) {
            return Err(parse_err(&context, format_args!("duplicate key `{key}`")));
        }
        apply_key(&mut cfg, key, value, &context)?;
        if key == "schema_version" {
            saw_schema = true;
        }
    }
    if !saw_schema {
        return Err(Error::ConfigParse(format!(
            "missing required key `schema_version` (expected schema_version = {SCHEMA_VERSION})"
        )));
    }
    Ok(cfg)
}

/// Apply `AIF_<KEY>` overrides via the given lookup (normally
/// `std::env::var`). Overrides run after file parsing and win over it.
pub fn apply_env_overrides(
    cfg: &mut RunConfig,
    lookup: impl Fn(&str) -> Option<String>,
) -> Result<()> {
    for key in KEYS {
        if *key == "schema_version" {
            continue;
        }
        let var = format!("{ENV_PREFIX}{}", key.to_uppercase());
        if let Some(value) = lookup(&var) {
            apply_key(cfg, key, value.trim(), &format!("env {var}"))?;
        }
    }
    Ok(())
}

/// Load a config file, apply process-environment overrides, and validate.
pub fn load_config(path: &Path) -> Result<RunConfig> {
    let text = std::fs::read_to_string(path).map_err(|e| {
        Error::ConfigParse(format!("cannot read config {}: {e}", path.display()))
    })?;
    let mut cfg = parse_config_str(&text)?;
    apply_env_overrides(&mut cfg, |k| std::env::var(k).ok())?;
    cfg.validate()?;
    Ok(cfg)
}

fn fmt_list(xs: &[usize]) -> String {
    xs.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(",")
}

/// Render a config snapshot that `parse_config_str` reads back exactly.
pub fn write_config(cfg: &RunConfig) -> String {
    let mut out = String::new();
    let mut push = |k: &str, v: String| {
        out.push_str(k);
        out.push_str(" = ");
        out.push_str(&v);
        out.push('\n');
    };
    push("schema_version", SCHEMA_VERSION.to_string());
    push("seed", cfg.seed.to_string());
    push("kpi_period", cfg.kpi_period.to_string());

    push("machines", cfg.sim.machines.to_string());
    push("buffer_capacity", cfg.sim.buffer_capacity.to_string());
    push("arrival_rate", cfg.sim.arrival_rate.to_string());
    push("process_rate", cfg.sim.process_rate.to_string());
    push("startup_rate", cfg.sim.startup_rate.to_string());
    push("failure_rate", cfg.sim.failure_rate.to_string());
    push("repair_rate", cfg.sim.repair_rate.to_string());
    push("power_busy", cfg.sim.power_busy.to_string());
    push("power_startup", cfg.sim.power_startup.to_string());
    push("power_idle", cfg.sim.power_idle.to_string());
    push("power_standby", cfg.sim.power_standby.to_string());
    push("power_failed", cfg.sim.power_failed.to_string());
    push("window_secs", cfg.sim.window_secs.to_string());
    push("energy_sharpness", cfg.sim.energy_sharpness.to_string());
    if let Some(t) = cfg.sim.max_throughput {
        push("max_throughput", t.to_string());
    }

    push("latent_dim", cfg.arch.latent_dim.to_string());
    push("encoder_hidden", fmt_list(&cfg.arch.encoder_hidden));
    push("transition_hidden", fmt_list(&cfg.arch.transition_hidden));
    push("decoder_hidden", fmt_list(&cfg.arch.decoder_hidden));
    push("actor_hidden", cfg.arch.actor_hidden.to_string());
    push("lambda_s", cfg.arch.lambda_s.to_string());
    push("var_floor", cfg.arch.var_floor.to_string());
    push("dropout", cfg.arch.dropout.to_string());

    push("epochs", cfg.train.epochs.to_string());
    push("iterations", cfg.train.iterations.to_string());
    push("horizon", cfg.train.horizon.to_string());
    push("batch_model", cfg.train.batch_model.to_string());
    push("batch_policy", cfg.train.batch_policy.to_string());
    push("samples_outer", cfg.train.samples_outer.to_string());
    push("samples_inner", cfg.train.samples_inner.to_string());
    push("beta", cfg.train.beta.to_string());
    push("lr_encoder", cfg.train.lr_encoder.to_string());
    push("lr_transition", cfg.train.lr_transition.to_string());
    push("lr_decoder", cfg.train.lr_decoder.to_string());
    push("lr_actor", cfg.train.lr_actor.to_string());
    push("lr_finetune", cfg.train.lr_finetune.to_string());
    push("grad_clip", cfg.train.grad_clip.to_string());
    push("replay_capacity", cfg.train.replay_capacity.to_string());
    push("finetune_steps", cfg.train.finetune_steps.to_string());
    push("val_envs", cfg.train.val_envs.to_string());
    push("val_days", cfg.train.val_days.to_string());
    push("warmup_days", cfg.train.warmup_days.to_string());
    push("random_days", cfg.train.random_days.to_string());
    out
}

pub fn save_config(path: &Path, cfg: &RunConfig) -> Result<()> {
    std::fs::write(path, write_config(cfg))?;
    Ok(())
}
