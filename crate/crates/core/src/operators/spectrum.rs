//! Explicit eigensystem of `G` when the running penalty vanishes.
//!
//! With `phi = 0` the gain is `r(t) = -1/(L - t)` and `G` is a Green's function
//! of `-d^2/dt^2` with `psi(0) = 0` and the Robin condition `psi'(T) = r(T) psi(T)`.
//! Eigenfunctions are `sin(z t / T)` where `cot z = r(T) T / z`.

use std::f64::consts::PI;

use crate::error::{Error, Result};
use crate::grid::{weighted_dot, TimeGrid};
use crate::model::ModelParams;
use crate::operators::kernels::KernelTables;

const ROOT_TOL: f64 = 1e-12;

#[derive(Debug, Clone)]
pub struct SpectrumPhi0 {
    horizon: f64,
    /// Roots `z_n`, `n = 1..N`.
    pub roots: Vec<f64>,
    /// `zeta_n = T^2 / z_n^2`, decreasing.
    pub eigenvalues: Vec<f64>,
    norms: Vec<f64>,
}

impl SpectrumPhi0 {
    pub fn len(&self) -> usize {
        self.roots.len()
    }

    pub fn is_empty(&self) -> bool {
        self.roots.is_empty()
    }

    /// Normalized eigenfunction `psi_n(t)`, `n` starting at 1.
    pub fn eigenfunction(&self, n: usize, t: f64) -> f64 {
        let z = self.roots[n - 1];
        (z * t / self.horizon).sin() / self.norms[n - 1]
    }

    pub fn sample_eigenfunction(&self, n: usize, grid: &TimeGrid) -> Vec<f64> {
        grid.sample(|t| self.eigenfunction(n, t))
    }
}

/// Roots of `cot z = -a T / z`, `a = (2 alpha - kappa1)/(2 lambda1)`, one per `((n-1) pi, n pi)`.
pub fn spectrum_phi0(params: &ModelParams, count: usize) -> Result<SpectrumPhi0> {
    params.validate()?;
    if count < 1 {
        return Err(Error::param("N", "need at least one eigenpair"));
    }
    let horizon = params.horizon;
    let slope = -params.riccati_terminal() * horizon;
    let mut roots = Vec::with_capacity(count);
    for n in 1..=count {
        roots.push(bracketed_root(n, slope)?);
    }
    let eigenvalues = roots.iter().map(|z| horizon * horizon / (z * z)).collect();
    let norms = roots
        .iter()
        .map(|&z| (horizon / 2.0 - horizon * (2.0 * z).sin() / (4.0 * z)).sqrt())
        .collect();
    Ok(SpectrumPhi0 {
        horizon,
        roots,
        eigenvalues,
        norms,
    })
}

/// `f(z) = cot z + s / z` decreases strictly from `+inf` to `-inf` on each bracket.
fn bracketed_root(n: usize, slope: f64) -> Result<f64> {
    let f = |z: f64| z.cos() / z.sin() + slope / z;
    let df = |z: f64| -1.0 / (z.sin() * z.sin()) - slope / (z * z);
    let lower = (n - 1) as f64 * PI;
    let upper = n as f64 * PI;
    let pad = 1e-9 * upper;
    if !(f(lower + pad) > 0.0 && f(upper - pad) < 0.0) {
        return Err(Error::Bracketing {
            index: n,
            reason: format!("no sign change on ({lower}, {upper})"),
        });
    }
    let (mut lo, mut hi) = (lower, upper);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if f(mid) > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let mut z = 0.5 * (lo + hi);
    // polish; keep a Newton step only if it stays bracketed and lowers |f|
    for _ in 0..3 {
        let next = z - f(z) / df(z);
        if !(next.is_finite() && next >= lo && next <= hi && f(next).abs() < f(z).abs()) {
            break;
        }
        z = next;
    }
    if hi - lo > ROOT_TOL * hi {
        return Err(Error::Bracketing {
            index: n,
            reason: format!("bisection stalled at width {}", hi - lo),
        });
    }
    if !(z > lower && z < upper) {
        return Err(Error::Bracketing {
            index: n,
            reason: format!("root {z} escaped its bracket"),
        });
    }
    Ok(z)
}

/// `R(t,s) = -c G(t,s) + sum_n (c zeta_n)^2 / (1 + c zeta_n) psi_n(t) psi_n(s)`.
pub fn resolvent_kernel_truncated(
    spec: &SpectrumPhi0,
    tables: &KernelTables,
    params: &ModelParams,
    t: f64,
    s: f64,
) -> f64 {
    let c = params.coupling();
    let series: f64 = (1..=spec.len())
        .map(|n| {
            let cz = c * spec.eigenvalues[n - 1];
            cz * cz / (1.0 + cz) * spec.eigenfunction(n, t) * spec.eigenfunction(n, s)
        })
        .sum();
    -c * tables.g_at(t, s) + series
}

/// `(I + R) psi` on the grid, the truncated-resolvent inverse of `I + c G`.
pub fn apply_resolvent(
    spec: &SpectrumPhi0,
    tables: &KernelTables,
    params: &ModelParams,
    psi: &[f64],
) -> Result<Vec<f64>> {
    let grid = tables.grid();
    let g_psi = tables.apply_g(psi)?;
    let c = params.coupling();
    let mut out: Vec<f64> = psi.iter().zip(&g_psi).map(|(p, g)| p - c * g).collect();
    for n in 1..=spec.len() {
        let cz = c * spec.eigenvalues[n - 1];
        let basis = spec.sample_eigenfunction(n, grid);
        let coef = cz * cz / (1.0 + cz) * weighted_dot(&basis, psi, grid.dt());
        for (o, b) in out.iter_mut().zip(&basis) {
            *o += coef * b;
        }
    }
    Ok(out)
}
