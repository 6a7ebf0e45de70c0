//! Central finite-difference gradient checks.

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::measures::{evaluate, regularizer_gradient, RegularizerSpec};
use crate::tensor::KernelMatrix;

pub const FD_STEP: f64 = 1e-5;
pub const GRAD_TOLERANCE: f64 = 1e-4;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GradCheckReport {
    /// `‖a − n‖ / max(‖a‖, ‖n‖)` over the whole gradient.
    pub relative_error: f64,
    /// Largest `|a_j − n_j|`.
    pub max_abs_error: f64,
    pub worst_index: usize,
    pub parameters: usize,
}

impl GradCheckReport {
    pub fn passed(&self, tolerance: f64) -> bool {
        self.relative_error <= tolerance
    }
}

/// Compares `analytic` against central differences of `f` around `x`.
pub fn check_gradient<F>(
    x: &[f64],
    analytic: &[f64],
    step: f64,
    mut f: F,
) -> Result<GradCheckReport>
where
    F: FnMut(&[f64]) -> Result<f64>,
{
    assert_eq!(x.len(), analytic.len(), "gradient length mismatch");
    let mut probe = x.to_vec();
    let mut diff_sq = 0.0;
    let mut a_sq = 0.0;
    let mut n_sq = 0.0;
    let mut max_abs_error = 0.0;
    let mut worst_index = 0;
    for j in 0..x.len() {
        probe[j] = x[j] + step;
        let up = f(&probe)?;
        probe[j] = x[j] - step;
        let down = f(&probe)?;
        probe[j] = x[j];
        let numeric = (up - down) / (2.0 * step);
        let err = (analytic[j] - numeric).abs();
        if err > max_abs_error {
            max_abs_error = err;
            worst_index = j;
        }
        diff_sq += err * err;
        a_sq += analytic[j] * analytic[j];
        n_sq += numeric * numeric;
    }
    let scale = a_sq.sqrt().max(n_sq.sqrt());
    let relative_error = if scale > 0.0 {
        diff_sq.sqrt() / scale
    } else {
        0.0
    };
    Ok(GradCheckReport {
        relative_error,
        max_abs_error,
        worst_index,
        parameters: x.len(),
    })
}

/// Checks [`regularizer_gradient`] for `spec` at `k`.
pub fn check_regularizer_gradient(
    k: &KernelMatrix,
    spec: &RegularizerSpec,
) -> Result<GradCheckReport> {
    let analytic = regularizer_gradient(k, spec)?
        .gradient
        .expect("gradient requested");
    let (o, d) = k.shape();
    check_gradient(k.data(), &analytic, FD_STEP, |p| {
        let probe = KernelMatrix::from_rows(o, d, p.to_vec())?;
        Ok(evaluate(&probe, spec)?.total)
    })
}
