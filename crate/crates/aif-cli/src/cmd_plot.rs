//! `aif plot`: render SVG charts from run CSVs, or a horizon-sweep summary
//! chart from a sweep CSV.

use std::path::{Path, PathBuf};

use aif_core::io::csvlog::read_csv;
use aif_core::Result;

use crate::svg::{thin, write_chart, Chart, Series, PALETTE};

fn pair(xs: &[f64], ys: &[f64]) -> Vec<(f64, f64)> {
    xs.iter().copied().zip(ys.iter().copied()).collect()
}

/// The six standard charts for one training run directory.
fn plot_run(run: &Path, out: &Path) -> Result<Vec<PathBuf>> {
    let training = read_csv(&run.join("training.csv"))?;
    let validation = read_csv(&run.join("validation.csv"))?;
    std::fs::create_dir_all(out)?;
    let mut written = Vec::new();

    let epochs = validation.column("epoch")?;
    let iters = training.column("iteration")?;
    let mut save = |name: &str, chart: Chart| -> Result<()> {
        let path = out.join(name);
        write_chart(&path, &chart)?;
        written.push(path);
        Ok(())
    };

    save(
        "validation_preference.svg",
        Chart {
            title: "Validation preference per epoch".into(),
            x_label: "epoch".into(),
            y_label: "mean composite preference".into(),
            series: vec![
                Series::new("agent", PALETTE[0], pair(&epochs, &validation.column("mean_pref")?)),
                Series::dashed(
                    "random phase",
                    PALETTE[1],
                    pair(&epochs, &validation.column("random_pref")?),
                ),
            ],
        },
    )?;

    save(
        "energy_saving.svg",
        Chart {
            title: "Paired validation saving / loss per epoch".into(),
            x_label: "epoch".into(),
            y_label: "percent vs all-on reference".into(),
            series: vec![
                Series::new(
                    "energy saving",
                    PALETTE[2],
                    pair(&epochs, &validation.column("saving_pct")?),
                ),
                Series::new(
                    "production loss",
                    PALETTE[1],
                    pair(&epochs, &validation.column("loss_pct")?),
                ),
            ],
        },
    )?;

    save(
        "efe_components.svg",
        Chart {
            title: "Expected free energy components".into(),
            x_label: "iteration".into(),
            y_label: "G (nats)".into(),
            series: vec![
                Series::new("G total", PALETTE[0], thin(pair(&iters, &training.column("G_total")?), 1500)),
                Series::new(
                    "extrinsic",
                    PALETTE[1],
                    thin(pair(&iters, &training.column("G_extrinsic")?), 1500),
                ),
                Series::new(
                    "state epistemic",
                    PALETTE[2],
                    thin(pair(&iters, &training.column("G_state")?), 1500),
                ),
                Series::new(
                    "parameter epistemic",
                    PALETTE[3],
                    thin(pair(&iters, &training.column("G_param")?), 1500),
                ),
            ],
        },
    )?;

    for (file, column, label) in [
        ("loss_preference.svg", "MSE_r", "preference reconstruction loss"),
        ("loss_machines.svg", "BCE_m", "machine-mode reconstruction BCE"),
        ("loss_buffer.svg", "BCE_b", "buffer reconstruction BCE"),
    ] {
        save(
            file,
            Chart {
                title: format!("Training {label}"),
                x_label: "iteration".into(),
                y_label: format!("{column} (nats)"),
                series: vec![Series::new(
                    column,
                    PALETTE[0],
                    thin(pair(&iters, &training.column(column)?), 1500),
                )],
            },
        )?;
    }

    Ok(written)
}

/// Preference-vs-horizon chart from a sweep CSV.
fn plot_sweep(sweep: &Path, out: &Path) -> Result<Vec<PathBuf>> {
    let table = read_csv(sweep)?;
    std::fs::create_dir_all(out)?;
    let horizons = table.column("horizon")?;
    let mut points: Vec<(f64, f64)> = pair(&horizons, &table.column("best_pref")?);
    points.sort_by(|a, b| a.0.total_cmp(&b.0));
    let chart = Chart {
        title: "Best validation preference vs planning horizon".into(),
        x_label: "horizon H (decision events)".into(),
        y_label: "best validation preference".into(),
        series: vec![Series::new("best preference", PALETTE[0], points)],
    };
    let path = out.join("horizon_sweep.svg");
    write_chart(&path, &chart)?;
    Ok(vec![path])
}

pub fn cmd_plot(run: Option<&Path>, sweep: Option<&Path>, out: Option<&Path>) -> Result<()> {
    let mut written = Vec::new();
    if let Some(run) = run {
        let out_dir = out.map(Path::to_path_buf).unwrap_or_else(|| run.join("plots"));
        written.extend(plot_run(run, &out_dir)?);
    }
    if let Some(sweep) = sweep {
        let out_dir = out
            .map(Path::to_path_buf)
            .or_else(|| sweep.parent().map(Path::to_path_buf))
            .unwrap_or_else(|| PathBuf::from("."));
        written.extend(plot_sweep(sweep, &out_dir)?);
    }
    if written.is_empty() {
        return Err(aif_core::Error::Input(
            "plot: pass --run <dir> and/or --sweep <csv>".into(),
        ));
    }
    for path in &written {
        println!("wrote {}", path.display());
    }
    Ok(())
}
