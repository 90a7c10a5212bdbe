//! CSV writers/readers for the run artifacts. Numbers are written with
//! Rust's shortest-round-trip `f64` formatting, so identical runs produce
//! byte-identical files.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use crate::agent::eval::{FinalEvalRow, KpiSample, ValidationReport};
use crate::agent::train::TrainingRow;
use crate::error::{Error, Result};

pub const TRAINING_HEADER: &str =
    "iteration,L_s,L_o,BCE_b,BCE_m,MSE_r,KL_prior,G_total,G_extrinsic,G_state,G_param";
pub const VALIDATION_HEADER: &str =
    "epoch,mean_pref,std_pref,random_pref,saving_pct,loss_pct,n_envs";
pub const FINAL_EVAL_HEADER: &str = "replication,days,agent_parts,agent_energy_kwh,\
agent_mean_pref,ref_parts,ref_energy_kwh,ref_mean_pref,saving_pct,loss_pct";
/// The trailing `r_linear` column is a diagnostic linearized preference.
pub const KPI_HEADER: &str =
    "replication,clock,T_current,E_avg,R_production,R_energy,R,r_linear";
pub const SWEEP_HEADER: &str = "horizon,best_epoch,best_pref,saving_pct,loss_pct";

pub fn training_row(r: &TrainingRow) -> String {
    format!(
        "{},{},{},{},{},{},{},{},{},{},{}",
        r.iteration,
        r.l_s,
        r.l_o,
        r.bce_buffer,
        r.bce_machines,
        r.mse_prefs,
        r.kl_prior,
        r.g_total,
        r.g_extrinsic,
        r.g_state,
        r.g_param
    )
}

pub fn validation_row(v: &ValidationReport) -> String {
    format!(
        "{},{},{},{},{},{},{}",
        v.epoch, v.mean_pref, v.std_pref, v.random_pref, v.saving_pct, v.loss_pct, v.n_envs
    )
}

pub fn final_eval_row(r: &FinalEvalRow) -> String {
    format!(
        "{},{},{},{},{},{},{},{},{},{}",
        r.replication,
        r.days,
        r.agent_parts,
        r.agent_energy_kwh,
        r.agent_mean_pref,
        r.ref_parts,
        r.ref_energy_kwh,
        r.ref_mean_pref,
        r.saving_pct,
        r.loss_pct
    )
}

pub fn kpi_row(replication: usize, s: &KpiSample) -> String {
    format!(
        "{},{},{},{},{},{},{},{}",
        replication,
        s.clock,
        s.throughput,
        s.avg_power,
        s.r_production,
        s.r_energy,
        s.r_composite,
        s.r_linear
    )
}

/// Line-buffered CSV file writer; writes the header on creation.
pub struct CsvWriter {
    w: BufWriter<File>,
}

impl CsvWriter {
    pub fn create(path: &Path, header: &str) -> Result<Self> {
        let mut w = BufWriter::new(File::create(path)?);
        writeln!(w, "{header}")?;
        Ok(CsvWriter { w })
    }

    pub fn row(&mut self, line: &str) -> Result<()> {
        writeln!(self.w, "{line}")?;
        Ok(())
    }

    pub fn finish(mut self) -> Result<()> {
        self.w.flush()?;
        Ok(())
    }
}

/// An all-numeric CSV table read back for plotting.
#[derive(Debug, Clone)]
pub struct CsvTable {
    pub header: Vec<String>,
    pub rows: Vec<Vec<f64>>,
}

impl CsvTable {
    pub fn column_index(&self, name: &str) -> Result<usize> {
        self.header
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| Error::Csv(format!("no column `{name}` (have: {})", self.header.join(","))))
    }

    pub fn column(&self, name: &str) -> Result<Vec<f64>> {
        let idx = self.column_index(name)?;
        Ok(self.rows.iter().map(|r| r[idx]).collect())
    }
}

/// Read a numeric CSV produced by this crate. Missing files, empty files,
/// files with no data rows, ragged rows, and non-numeric cells are all
/// [`Error::Csv`].
pub fn read_csv(path: &Path) -> Result<CsvTable> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Error::Csv(format!("cannot read {}: {e}", path.display())))?;
    let mut lines = text.lines();
    let header: Vec<String> = lines
        .next()
        .filter(|h| !h.trim().is_empty())
        .ok_or_else(|| Error::Csv(format!("{} is empty", path.display())))?
        .split(',')
        .map(|s| s.trim().to_string())
        .collect();
    let mut rows = Vec::new();
    for (i, line) in lines.enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let row: Vec<f64> = line
            .split(',')
            .map(|cell| {
                cell.trim().parse::<f64>().map_err(|_| {
                    Error::Csv(format!(
                        "{} line {}: `{cell}` is not a number",
                        path.display(),
                        i + 2
                    ))
                })
            })
            .collect::<Result<_>>()?;
        if row.len() != header.len() {
            return Err(Error::Csv(format!(
                "{} line {}: {} cells but {} header columns",
                path.display(),
                i + 2,
                row.len(),
                header.len()
            )));
        }
        rows.push(row);
    }
    if rows.is_empty() {
        return Err(Error::Csv(format!("{} has no data rows", path.display())));
    }
    Ok(CsvTable { header, rows })
}
