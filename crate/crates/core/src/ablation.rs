//! The CIF × direction ablation grid and the manual CIF hyperparameter sweep.

use std::fmt::Write as _;

use crate::cif::CifConfig;
use crate::data::{Dataset, ExperimentConfig};
use crate::error::{config, Result};
use crate::model::DirectionMode;
use crate::train::{run_multi_seed_on, MetricsReport, SplitIndices};

#[derive(Clone, Debug)]
pub struct AblationRow {
    pub cif: bool,
    pub direction: DirectionMode,
    pub report: MetricsReport,
    /// `(seed, test accuracy)` per run.
    pub seed_accuracy: Vec<(u64, f64)>,
    pub splits: SplitIndices,
}

impl AblationRow {
    pub fn label(&self) -> String {
        format!("{}/{}", if self.cif { "cif" } else { "no-cif" }, self.direction.label())
    }
}

pub const ABLATION_CSV_HEADER: &str = "cif,direction,accuracy,precision,recall,f1,auroc,auprc";
pub const SEED_CSV_HEADER: &str = "cif,direction,seed,accuracy";

/// Runs every combination of {CIF off, CIF on} × {Forward, Backward, Both}
/// on one dataset with one fixed split. The experiment must carry a CIF config.
pub fn run_ablation(exp: &ExperimentConfig) -> Result<Vec<AblationRow>> {
    exp.validate()?;
    let cif = exp
        .model_config()
        .cif
        .ok_or_else(|| crate::Error::Config("ablation needs a CIF config".into()))?;
    let ds = exp.dataset()?;
    run_ablation_on(&ds, exp, &cif)
}

fn run_ablation_on(ds: &Dataset, exp: &ExperimentConfig, cif: &CifConfig) -> Result<Vec<AblationRow>> {
    let mut rows = Vec::with_capacity(6);
    for with_cif in [false, true] {
        for direction in DirectionMode::ALL {
            let mut model = exp.model_config();
            model.cif = with_cif.then(|| cif.clone());
            model.direction_mode = direction;
            let result = run_multi_seed_on(ds, &model, &exp.train, &exp.split)?;
            rows.push(AblationRow {
                cif: with_cif,
                direction,
                report: result.report,
                seed_accuracy: result.runs.iter().map(|r| (r.seed, r.evaluation.accuracy)).collect(),
                splits: result.splits,
            });
        }
    }
    Ok(rows)
}

/// One row per configuration with `mean±std` (percent) for the six metrics.
pub fn ablation_csv(rows: &[AblationRow]) -> String {
    let mut out = format!("{ABLATION_CSV_HEADER}\n");
    for r in rows {
        let cells: Vec<String> = r.report.fields().iter().map(|m| m.percent()).collect();
        writeln!(
            out,
            "{},{},{}",
            if r.cif { "on" } else { "off" },
            r.direction.label(),
            cells.join(",")
        )
        .unwrap();
    }
    out
}

/// Per-seed test accuracy of every configuration.
pub fn seed_accuracy_csv(rows: &[AblationRow]) -> String {
    let mut out = format!("{SEED_CSV_HEADER}\n");
    for r in rows {
        for (seed, acc) in &r.seed_accuracy {
            writeln!(
                out,
                "{},{},{seed},{acc}",
                if r.cif { "on" } else { "off" },
                r.direction.label()
            )
            .unwrap();
        }
    }
    out
}

/// Candidate values for each CIF hyperparameter.
#[derive(Clone, Debug, PartialEq)]
pub struct CifGrid {
    pub t: Vec<i64>,
    pub n: Vec<usize>,
    pub a: Vec<f64>,
    pub b: Vec<f64>,
}

#[derive(Clone, Debug)]
pub struct CifGridRow {
    pub cif: CifConfig,
    pub report: MetricsReport,
}

pub const GRID_CSV_HEADER: &str = "t,n,a,b,accuracy,precision,recall,f1,auroc,auprc";

/// Trains the experiment once per CIF setting in the Cartesian product of `grid`,
/// skipping settings whose group width does not fit the channel count.
pub fn grid_cif(exp: &ExperimentConfig, grid: &CifGrid) -> Result<Vec<CifGridRow>> {
    exp.validate()?;
    let ds = exp.dataset()?;
    let base = exp.model_config();
    let mut rows = Vec::new();
    for &t in &grid.t {
        for &n in &grid.n {
            for &a in &grid.a {
                for &b in &grid.b {
                    let mut cif = base.cif.clone().unwrap_or_else(|| CifConfig::new(t, n, a, b));
                    cif.t = t;
                    cif.n = n;
                    cif.a = a;
                    cif.b = b;
                    if cif.validate(ds.channels()).is_err() {
                        continue;
                    }
                    let mut model = base.clone();
                    model.cif = Some(cif.clone());
                    let result = run_multi_seed_on(&ds, &model, &exp.train, &exp.split)?;
                    rows.push(CifGridRow {
                        cif,
                        report: result.report,
                    });
                }
            }
        }
    }
    if rows.is_empty() {
        return config("no grid setting is valid for this channel count");
    }
    Ok(rows)
}

pub fn grid_csv(rows: &[CifGridRow]) -> String {
    let mut out = format!("{GRID_CSV_HEADER}\n");
    for r in rows {
        let cells: Vec<String> = r.report.fields().iter().map(|m| m.percent()).collect();
        writeln!(out, "{},{},{},{},{}", r.cif.t, r.cif.n, r.cif.a, r.cif.b, cells.join(",")).unwrap();
    }
    out
}
