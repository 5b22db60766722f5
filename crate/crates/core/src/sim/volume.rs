//! Intraday traded-volume curves in fixed clock bins.

use crate::error::{Error, Result};
use crate::grid::{trapezoid, TimeGrid};
use crate::sim::market::SimulationResult;
use crate::sim::stats::median;

/// Partition of the grid into equal clock bins whose edges are nodes.
#[derive(Debug, Clone, PartialEq)]
pub struct VolumeBins {
    nodes_per_bin: usize,
    n_bins: usize,
    width: f64,
}

impl VolumeBins {
    /// `bin_minutes` wide bins with `minutes_per_unit` clock minutes per unit of model time.
    pub fn new(grid: &TimeGrid, bin_minutes: f64, minutes_per_unit: f64) -> Result<Self> {
        if !(bin_minutes > 0.0 && minutes_per_unit > 0.0) {
            return Err(Error::BinMisalignment(format!(
                "bin width {bin_minutes} min and {minutes_per_unit} min per unit must be positive"
            )));
        }
        let width = bin_minutes / minutes_per_unit;
        let bins = grid.horizon() / width;
        let n_bins = bins.round();
        if n_bins < 1.0 || (bins - n_bins).abs() > 1e-9 * bins.max(1.0) {
            return Err(Error::BinMisalignment(format!(
                "{bin_minutes}-minute bins do not divide a horizon of {} minutes",
                grid.horizon() * minutes_per_unit
            )));
        }
        let intervals = (grid.len() - 1) as f64;
        let per_bin = intervals / n_bins;
        let nodes_per_bin = per_bin.round();
        if (per_bin - nodes_per_bin).abs() > 1e-9 * per_bin {
            return Err(Error::BinMisalignment(format!(
                "{intervals} grid intervals cannot be split evenly into {n_bins} bins"
            )));
        }
        Ok(VolumeBins {
            nodes_per_bin: nodes_per_bin as usize,
            n_bins: n_bins as usize,
            width,
        })
    }

    pub fn len(&self) -> usize {
        self.n_bins
    }

    pub fn is_empty(&self) -> bool {
        self.n_bins == 0
    }

    /// Start time of each bin in model units.
    pub fn starts(&self) -> Vec<f64> {
        (0..self.n_bins).map(|k| k as f64 * self.width).collect()
    }

    /// Shares traded per bin, `int |nu0| + |nu1|` over each bin.
    pub fn bin_volumes(&self, dt: f64, nu0: &[f64], nu1: &[f64]) -> Vec<f64> {
        let total: Vec<f64> = nu0
            .iter()
            .zip(nu1)
            .map(|(a, b)| a.abs() + b.abs())
            .collect();
        (0..self.n_bins)
            .map(|k| {
                let lo = k * self.nodes_per_bin;
                trapezoid(&total[lo..=lo + self.nodes_per_bin], dt)
            })
            .collect()
    }
}

/// `log(1 + volume)` per path and bin, plus the cross-sectional median per bin.
#[derive(Debug, Clone)]
pub struct VolumeCurve {
    pub bin_starts: Vec<f64>,
    pub log_volume: Vec<Vec<f64>>,
    pub median: Vec<f64>,
}

impl VolumeCurve {
    /// First and last bin medians each exceed the median of the middle third.
    pub fn middle_third_median(&self) -> f64 {
        let n = self.median.len();
        median(&self.median[n / 3..n - n / 3])
    }

    pub fn is_u_shaped(&self) -> bool {
        let mid = self.middle_third_median();
        self.median.first().is_some_and(|&v| v > mid)
            && self.median.last().is_some_and(|&v| v > mid)
    }
}

pub fn volume_curve(result: &SimulationResult) -> Result<VolumeCurve> {
    let (bins, raw) = result
        .volumes()
        .ok_or_else(|| Error::BinMisalignment("simulation ran without volume bins".into()))?;
    let log_volume: Vec<Vec<f64>> = raw
        .iter()
        .map(|row| row.iter().map(|v| v.ln_1p()).collect())
        .collect();
    let median = (0..bins.len())
        .map(|k| median(&log_volume.iter().map(|row| row[k]).collect::<Vec<_>>()))
        .collect();
    Ok(VolumeCurve {
        bin_starts: bins.starts(),
        log_volume,
        median,
    })
}
