//! Uniform time grids, composite trapezoid quadrature and the cosine basis.

use crate::error::{Error, Result};

/// Uniformly spaced nodes `0 = t_0 < .. < t_{n-1} = T`.
#[derive(Debug, Clone, PartialEq)]
pub struct TimeGrid {
    horizon: f64,
    nodes: Vec<f64>,
    dt: f64,
}

impl TimeGrid {
    pub fn new(horizon: f64, n_points: usize) -> Result<Self> {
        if n_points < 2 {
            return Err(Error::param(
                "n_points",
                format!("need at least 2, got {n_points}"),
            ));
        }
        if !(horizon.is_finite() && horizon > 0.0) {
            return Err(Error::param("T", format!("must be > 0, got {horizon}")));
        }
        let intervals = (n_points - 1) as f64;
        let dt = horizon / intervals;
        let mut nodes: Vec<f64> = (0..n_points)
            .map(|i| horizon * (i as f64) / intervals)
            .collect();
        nodes[n_points - 1] = horizon;
        Ok(TimeGrid { horizon, nodes, dt })
    }

    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// Samples `f` at every node.
    pub fn sample(&self, f: impl Fn(f64) -> f64) -> Vec<f64> {
        self.nodes.iter().map(|&t| f(t)).collect()
    }

    pub fn check_len(&self, samples: &[f64]) -> Result<()> {
        if samples.len() == self.len() {
            Ok(())
        } else {
            Err(Error::LengthMismatch {
                expected: self.len(),
                got: samples.len(),
            })
        }
    }

    /// Composite trapezoid approximation of `int_0^T f dt`.
    pub fn integrate(&self, samples: &[f64]) -> Result<f64> {
        self.check_len(samples)?;
        Ok(trapezoid(samples, self.dt))
    }

    /// Trapezoidal `<f, g>` in `L^2([0, T])`.
    pub fn inner(&self, f: &[f64], g: &[f64]) -> Result<f64> {
        self.check_len(f)?;
        self.check_len(g)?;
        Ok(weighted_dot(f, g, self.dt))
    }

    /// `t -> int_0^t f`, zero at the first node.
    pub fn cumulative(&self, samples: &[f64]) -> Result<Vec<f64>> {
        self.check_len(samples)?;
        Ok(cumulative_trapezoid(samples, self.dt))
    }

    /// `t -> int_t^T f`, zero at the last node.
    pub fn cumulative_from_end(&self, samples: &[f64]) -> Result<Vec<f64>> {
        self.check_len(samples)?;
        Ok(reverse_cumulative_trapezoid(samples, self.dt))
    }

    /// Trapezoid weights (`dt/2` at both ends, `dt` inside).
    pub fn weights(&self) -> Vec<f64> {
        let n = self.len();
        let mut w = vec![self.dt; n];
        w[0] *= 0.5;
        w[n - 1] *= 0.5;
        w
    }

    /// Sup norm of a sampled function.
    pub fn sup_norm(samples: &[f64]) -> f64 {
        samples.iter().fold(0.0f64, |m, v| m.max(v.abs()))
    }

    /// Trapezoidal `L^2` norm.
    pub fn l2_norm(&self, samples: &[f64]) -> Result<f64> {
        Ok(self.inner(samples, samples)?.max(0.0).sqrt())
    }
}

pub(crate) fn trapezoid(f: &[f64], dt: f64) -> f64 {
    let n = f.len();
    if n < 2 {
        return 0.0;
    }
    let interior: f64 = f[1..n - 1].iter().sum();
    dt * (interior + 0.5 * (f[0] + f[n - 1]))
}

pub(crate) fn weighted_dot(f: &[f64], g: &[f64], dt: f64) -> f64 {
    let n = f.len();
    if n < 2 {
        return 0.0;
    }
    let interior: f64 = f[1..n - 1]
        .iter()
        .zip(&g[1..n - 1])
        .map(|(a, b)| a * b)
        .sum();
    dt * (interior + 0.5 * (f[0] * g[0] + f[n - 1] * g[n - 1]))
}

pub(crate) fn cumulative_trapezoid(f: &[f64], dt: f64) -> Vec<f64> {
    let mut out = Vec::with_capacity(f.len());
    let mut acc = 0.0;
    out.push(0.0);
    for w in f.windows(2) {
        acc += 0.5 * dt * (w[0] + w[1]);
        out.push(acc);
    }
    out
}

pub(crate) fn reverse_cumulative_trapezoid(f: &[f64], dt: f64) -> Vec<f64> {
    let n = f.len();
    let mut out = vec![0.0; n];
    let mut acc = 0.0;
    for i in (0..n.saturating_sub(1)).rev() {
        acc += 0.5 * dt * (f[i] + f[i + 1]);
        out[i] = acc;
    }
    out
}

/// Orthonormal cosine basis of `L^2([0, T])`, indexed from 1.
///
/// `a_1 = 1/sqrt(T)`, `a_i(t) = sqrt(2/T) cos((i-1) pi t / T)` for `i >= 2`.
pub fn cosine_basis(i: usize, t: f64, horizon: f64) -> Result<f64> {
    if i < 1 {
        return Err(Error::param("i", "basis index starts at 1"));
    }
    Ok(cosine_basis_unchecked(i, t, horizon))
}

pub(crate) fn cosine_basis_unchecked(i: usize, t: f64, horizon: f64) -> f64 {
    if i == 1 {
        1.0 / horizon.sqrt()
    } else {
        (2.0 / horizon).sqrt() * (((i - 1) as f64) * std::f64::consts::PI * t / horizon).cos()
    }
}
