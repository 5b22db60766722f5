//! Relative terminal-cash improvement of one major strategy over another.

use crate::error::{Error, Result};
use crate::sim::market::SimulationResult;
use crate::sim::stats::{mean_sd, quantile};

/// Per path `(X0_opt - X0_bm) / X0_bm * 1e4`; `None` where the benchmark cash is zero.
pub fn savings_bps(opt: &SimulationResult, bm: &SimulationResult) -> Result<Vec<Option<f64>>> {
    if opt.n_paths() != bm.n_paths() {
        return Err(Error::LengthMismatch {
            expected: opt.n_paths(),
            got: bm.n_paths(),
        });
    }
    Ok(opt
        .x0_terminal
        .iter()
        .zip(&bm.x0_terminal)
        .map(|(&a, &b)| (b != 0.0 && b.is_finite()).then(|| (a - b) / b * 1e4))
        .collect())
}

#[derive(Debug, Clone, PartialEq)]
pub struct SavingsSummary {
    pub n_valid: usize,
    pub n_invalid: usize,
    pub mean: f64,
    pub sd: f64,
    pub median: f64,
    pub q25: f64,
    pub q75: f64,
    /// `mean / (sd / sqrt(n))`.
    pub t_stat: f64,
}

pub fn summarize_savings(bps: &[Option<f64>]) -> SavingsSummary {
    let valid: Vec<f64> = bps.iter().flatten().copied().collect();
    let (mean, sd) = mean_sd(&valid);
    let n = valid.len() as f64;
    let t_stat = if sd > 0.0 {
        mean / (sd / n.sqrt())
    } else if mean > 0.0 {
        f64::INFINITY
    } else {
        0.0
    };
    SavingsSummary {
        n_valid: valid.len(),
        n_invalid: bps.len() - valid.len(),
        mean,
        sd,
        median: quantile(&valid, 0.5),
        q25: quantile(&valid, 0.25),
        q75: quantile(&valid, 0.75),
        t_stat,
    }
}
