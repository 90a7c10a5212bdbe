//! `aif evaluate`: paired final evaluation of a trained checkpoint (or the
//! `all-on` / `random` pseudo-policies) against the all-on reference.

use std::path::Path;

use aif_core::agent::eval::{calibrate_max_throughput, run_final_eval, EvalPolicy};
use aif_core::io::checkpoint::{load_checkpoint, Checkpoint};
use aif_core::io::config::load_config;
use aif_core::io::csvlog::{final_eval_row, kpi_row, CsvWriter, FINAL_EVAL_HEADER, KPI_HEADER};
use aif_core::rng::stream_seed;
use aif_core::Result;

enum Loaded {
    AllOn,
    Random,
    Trained(Box<Checkpoint>),
}

#[allow(clippy::too_many_arguments)]
pub fn cmd_evaluate(
    config: &Path,
    checkpoint: &str,
    out: &Path,
    replications: usize,
    days: f64,
    warmup_days: f64,
    seed: Option<u64>,
) -> Result<()> {
    let mut cfg = load_config(config)?;
    if let Some(s) = seed {
        cfg.seed = s;
    }
    std::fs::create_dir_all(out)?;

    let loaded = match checkpoint.to_ascii_lowercase().as_str() {
        "all-on" | "allon" => Loaded::AllOn,
        "random" => Loaded::Random,
        _ => Loaded::Trained(Box::new(load_checkpoint(Path::new(checkpoint))?)),
    };

    // Reference-throughput calibration: config value wins, then the value
    // stored in the checkpoint, then a fresh 30-day calibration run.
    let mut sim = cfg.sim.clone();
    if sim.max_throughput.is_none() {
        if let Loaded::Trained(ck) = &loaded {
            sim.max_throughput = ck.max_throughput;
        }
    }
    if sim.max_throughput.is_none() {
        let s = stream_seed(cfg.seed, "calibrate");
        let t = calibrate_max_throughput(&sim, s, 30.0)?;
        println!("calibrated reference throughput: {t:.6} parts/s");
        sim.max_throughput = Some(t);
    }

    let mut tcfg = cfg.train.clone();
    let policy = match &loaded {
        Loaded::AllOn => EvalPolicy::AllOn,
        Loaded::Random => EvalPolicy::Random,
        Loaded::Trained(ck) => {
            // Fine-tuning cadence follows the horizon the agent was trained
            // with, not whatever the eval config happens to say.
            tcfg.horizon = ck.horizon;
            EvalPolicy::Agent { model: &ck.model, actor: &ck.actor }
        }
    };

    println!(
        "evaluating `{checkpoint}`: {replications} × {days}-day runs ({warmup_days}-day warm-up), seed {}",
        cfg.seed
    );
    let report = run_final_eval(
        policy,
        &sim,
        &tcfg,
        cfg.seed,
        replications,
        warmup_days,
        days,
        cfg.kpi_period,
    )?;

    let mut w = CsvWriter::create(&out.join("final_eval.csv"), FINAL_EVAL_HEADER)?;
    for row in &report.rows {
        w.row(&final_eval_row(row))?;
    }
    w.finish()?;
    if !report.kpi.is_empty() {
        let mut w = CsvWriter::create(&out.join("kpi.csv"), KPI_HEADER)?;
        for (rep, rows) in &report.kpi {
            for s in rows {
                w.row(&kpi_row(*rep, s))?;
            }
        }
        w.finish()?;
    }

    println!("energy saving:   {:+.2}% ± {:.2}", report.mean_saving, report.std_saving);
    println!("production loss: {:+.2}% ± {:.2}", report.mean_loss, report.std_loss);
    println!("mean preference: {:.4} ± {:.4}", report.mean_pref, report.std_pref);
    println!("results in {}", out.display());
    Ok(())
}
