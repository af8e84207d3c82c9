//! Error metrics, comparison statistics and report serialization.
//!
//! Report CSVs have one row per `(dataset, horizon, variant, eta)` with the
//! columns of [`REPORT_COLUMNS`], in that order. Lines starting with `#`
//! before the header carry run metadata such as the config fingerprint.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{HadlError, Result};
use crate::model::Variant;

/// Column order of every report CSV.
pub const REPORT_COLUMNS: [&str; 9] = [
    "dataset", "horizon", "variant", "seed", "eta", "mse", "mae", "nrr", "params",
];

/// Written in place of a MAV when no noisy setting was run.
pub const UNDEFINED: &str = "undefined";

fn check_pair(pred: &[f64], target: &[f64]) -> Result<()> {
    if pred.len() != target.len() {
        return Err(HadlError::ShapeMismatch(format!(
            "{} predictions vs {} targets",
            pred.len(),
            target.len()
        )));
    }
    if pred.is_empty() {
        return Err(HadlError::Empty("metric input"));
    }
    Ok(())
}

pub fn mse(pred: &[f64], target: &[f64]) -> Result<f64> {
    check_pair(pred, target)?;
    let s: f64 = pred.iter().zip(target).map(|(p, t)| (p - t) * (p - t)).sum();
    Ok(s / pred.len() as f64)
}

pub fn mae(pred: &[f64], target: &[f64]) -> Result<f64> {
    check_pair(pred, target)?;
    let s: f64 = pred.iter().zip(target).map(|(p, t)| (p - t).abs()).sum();
    Ok(s / pred.len() as f64)
}

/// Positive when `ours` beats the baseline.
pub fn improvement(mse_best_baseline: f64, mse_ours: f64) -> f64 {
    mse_best_baseline - mse_ours
}

/// Noise-robustness ratio `mse(η) / mse(0)`.
pub fn nrr(mse_eta: f64, mse_zero: f64) -> Result<f64> {
    if mse_zero <= 0.0 {
        return Err(HadlError::ZeroBaseline);
    }
    Ok(mse_eta / mse_zero)
}

/// Mean absolute deviation of the ratios from 1.
pub fn mav(nrrs: &[f64]) -> Result<f64> {
    if nrrs.is_empty() {
        return Err(HadlError::Empty("NRR list"));
    }
    Ok(nrrs.iter().map(|r| (r - 1.0).abs()).sum::<f64>() / nrrs.len() as f64)
}

/// Mean and population standard deviation.
pub fn mean_std(values: &[f64]) -> Result<(f64, f64)> {
    if values.is_empty() {
        return Err(HadlError::Empty("value list"));
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    Ok((mean, var.sqrt()))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub dataset: String,
    pub horizon: usize,
    pub variant: Variant,
    pub seed: u64,
    pub eta: f64,
    pub mse: f64,
    pub mae: f64,
    pub params: u64,
}

impl EvalReport {
    pub fn row(&self, nrr: Option<f64>) -> Vec<String> {
        vec![
            self.dataset.clone(),
            self.horizon.to_string(),
            self.variant.label(),
            self.seed.to_string(),
            self.eta.to_string(),
            self.mse.to_string(),
            self.mae.to_string(),
            nrr.map(|v| v.to_string()).unwrap_or_default(),
            self.params.to_string(),
        ]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RobustnessReport {
    pub eta_list: Vec<f64>,
    pub mse_per_eta: Vec<f64>,
    /// One entry per `η > 0`, in the order of `eta_list`.
    pub nrr_per_eta: Vec<f64>,
    /// `None` when the run had no noisy setting.
    pub mav: Option<f64>,
    pub runs: Vec<EvalReport>,
}

impl RobustnessReport {
    pub fn from_runs(runs: Vec<EvalReport>) -> Result<Self> {
        let zero = runs
            .iter()
            .find(|r| r.eta == 0.0)
            .ok_or(HadlError::MissingZeroEta)?
            .mse;
        let eta_list: Vec<f64> = runs.iter().map(|r| r.eta).collect();
        let mse_per_eta: Vec<f64> = runs.iter().map(|r| r.mse).collect();
        let nrr_per_eta = runs
            .iter()
            .filter(|r| r.eta > 0.0)
            .map(|r| nrr(r.mse, zero))
            .collect::<Result<Vec<_>>>()?;
        let mav = if nrr_per_eta.is_empty() {
            None
        } else {
            Some(mav(&nrr_per_eta)?)
        };
        Ok(Self {
            eta_list,
            mse_per_eta,
            nrr_per_eta,
            mav,
            runs,
        })
    }

    pub fn mav_text(&self) -> String {
        self.mav.map_or_else(|| UNDEFINED.to_string(), |m| m.to_string())
    }

    /// Report CSV with the `nrr` column filled for noisy rows and the MAV in
    /// the metadata lines.
    pub fn write_csv<W: Write>(&self, w: W, header: &[(String, String)]) -> Result<()> {
        let mut header = header.to_vec();
        header.push(("mav".into(), self.mav_text()));
        let mut noisy = self.nrr_per_eta.iter();
        let rows: Vec<Vec<String>> = self
            .runs
            .iter()
            .map(|r| r.row(if r.eta > 0.0 { noisy.next().copied() } else { None }))
            .collect();
        write_rows(w, &header, &rows)
    }
}

/// Writes `# key=value` lines, the [`REPORT_COLUMNS`] header, then `rows`.
pub fn write_rows<W: Write>(mut w: W, header: &[(String, String)], rows: &[Vec<String>]) -> Result<()> {
    for (k, v) in header {
        writeln!(w, "# {k}={v}")?;
    }
    let mut out = csv::Writer::from_writer(w);
    out.write_record(REPORT_COLUMNS)?;
    for row in rows {
        out.write_record(row)?;
    }
    out.flush()?;
    Ok(())
}

pub fn write_reports<W: Write>(w: W, header: &[(String, String)], reports: &[EvalReport]) -> Result<()> {
    let rows: Vec<Vec<String>> = reports.iter().map(|r| r.row(None)).collect();
    write_rows(w, header, &rows)
}
