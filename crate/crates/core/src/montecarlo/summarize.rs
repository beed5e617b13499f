use serde::Serialize;

use crate::error::{Error, Result};
use crate::variance::VarianceEstimate;

/// Replicate statistics for one (estimator, design) cell.
///
/// `emp_var` uses divisor R − 1 and `mse` divisor R, so
/// `mse = bias² + emp_var (R − 1)/R`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SimSummary {
    pub replicates: usize,
    pub truth: f64,
    pub mean: f64,
    pub bias: f64,
    /// sd / √R.
    pub mcse: f64,
    pub emp_var: f64,
    pub mse: f64,
    pub mean_var_hat: Option<f64>,
    /// mean V̂ − empirical variance.
    pub gap: Option<f64>,
    pub negative_count: Option<usize>,
}

impl SimSummary {
    pub fn negative_fraction(&self) -> Option<f64> {
        self.negative_count.map(|k| k as f64 / self.replicates as f64)
    }
}

pub fn summarize(deltas: &[f64], truth: f64, variances: Option<&[VarianceEstimate]>) -> Result<SimSummary> {
    let r = deltas.len();
    if r < 2 {
        return Err(Error::validation(format!("summaries need at least 2 replicates, got {r}")));
    }
    let rf = r as f64;
    let mean = deltas.iter().sum::<f64>() / rf;
    let ss: f64 = deltas.iter().map(|d| (d - mean).powi(2)).sum();
    let emp_var = ss / (rf - 1.0);
    let mse = deltas.iter().map(|d| (d - truth).powi(2)).sum::<f64>() / rf;
    let (mean_var_hat, gap, negative_count) = match variances {
        Some(v) => {
            if v.len() != r {
                return Err(Error::validation("variance estimates must be parallel to the replicates"));
            }
            let m = v.iter().map(|x| x.var_hat).sum::<f64>() / rf;
            (Some(m), Some(m - emp_var), Some(v.iter().filter(|x| x.negative).count()))
        }
        None => (None, None, None),
    };
    Ok(SimSummary {
        replicates: r,
        truth,
        mean,
        bias: mean - truth,
        mcse: (emp_var / rf).sqrt(),
        emp_var,
        mse,
        mean_var_hat,
        gap,
        negative_count,
    })
}
