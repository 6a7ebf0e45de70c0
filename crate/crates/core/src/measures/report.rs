use serde::{Deserialize, Serialize};

use super::{correlation_tril, diagonal};
use crate::error::Result;
use crate::tensor::KernelMatrix;

/// Summary of how close a layer's filters are to mutual orthogonality.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NearOrthReport {
    pub layer_name: String,
    pub rows: usize,
    pub cols: usize,
    /// Mean of the lower-triangle correlations.
    pub tril_mean: f64,
    /// Population standard deviation of the lower-triangle correlations.
    pub tril_std: f64,
    /// Mean squared filter norm `⟨k_j, k_j⟩`.
    pub diag_mean: f64,
    /// False for a single filter, where there are no pairs and the
    /// correlation statistics are reported as zero.
    pub tril_defined: bool,
}

impl NearOrthReport {
    /// `M ± S/D` with two decimals.
    pub fn table_cell(&self) -> String {
        format!(
            "{:.2} ± {:.2}/{:.2}",
            self.tril_mean, self.tril_std, self.diag_mean
        )
    }
}

fn mean_std(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    (mean, var.sqrt())
}

pub fn near_orth_report(k: &KernelMatrix, name: impl Into<String>) -> Result<NearOrthReport> {
    let tril = correlation_tril(k)?;
    let (tril_mean, tril_std, tril_defined) = if tril.is_empty() {
        (0.0, 0.0, false)
    } else {
        let (m, s) = mean_std(tril.entries());
        (m, s, true)
    };
    let diag = diagonal(k);
    Ok(NearOrthReport {
        layer_name: name.into(),
        rows: k.rows(),
        cols: k.cols(),
        tril_mean,
        tril_std,
        diag_mean: diag.0.iter().sum::<f64>() / k.rows() as f64,
        tril_defined,
    })
}

/// Averages each statistic over layers sharing a shape `(o, d)`.
///
/// Groups appear in order of first occurrence and are named `[o,d]`.
pub fn aggregate_reports(reports: &[NearOrthReport]) -> Vec<NearOrthReport> {
    let mut keys: Vec<(usize, usize)> = Vec::new();
    for r in reports {
        if !keys.contains(&(r.rows, r.cols)) {
            keys.push((r.rows, r.cols));
        }
    }
    keys.into_iter()
        .map(|(o, d)| {
            let members: Vec<&NearOrthReport> = reports
                .iter()
                .filter(|r| (r.rows, r.cols) == (o, d))
                .collect();
            let n = members.len() as f64;
            let avg = |f: fn(&NearOrthReport) -> f64| members.iter().map(|r| f(r)).sum::<f64>() / n;
            NearOrthReport {
                layer_name: format!("[{o},{d}]"),
                rows: o,
                cols: d,
                tril_mean: avg(|r| r.tril_mean),
                tril_std: avg(|r| r.tril_std),
                diag_mean: avg(|r| r.diag_mean),
                tril_defined: members.iter().all(|r| r.tril_defined),
            }
        })
        .collect()
}
