//! Equilibrium strategies: the major agent's deterministic rate from the
//! degenerate-kernel scheme, the signal-only benchmark, and the minor agent's
//! feedback response along a signal path.

use crate::error::{Error, Result};
use crate::grid::{cumulative_trapezoid, TimeGrid};
use crate::model::{ModelParams, SignalParams};
use crate::operators::{DegenerateOperator, KernelTables};

/// `E[mu_t]` for the OU signal.
pub fn mu_bar(signal: &SignalParams, t: f64) -> f64 {
    signal.mean(t)
}

pub fn mu_bar_samples(signal: &SignalParams, grid: &TimeGrid) -> Vec<f64> {
    grid.sample(|t| signal.mean(t))
}

#[derive(Debug, Clone)]
pub struct MajorStrategy {
    /// Solution of the approximate equation `(I + c G_n) nu = S mu_bar + eta_n / (2 lambda0)`.
    pub nu0_n: Vec<f64>,
    /// Uniform refinement `-c G nu0_n + S mu_bar + eta_n / (2 lambda0)`.
    pub nu0_hat: Vec<f64>,
    pub eta_n: f64,
    pub rank: usize,
    /// `|int nu0_hat - q0|`.
    pub fuel_error: f64,
    /// Sup norm of `(I + c G) nu0_hat - S mu_bar - eta_n / (2 lambda0)`.
    pub fredholm_residual: f64,
}

/// `eta_n = 2 lambda0 (q0 - <R_n S mu_bar, 1>) / <R_n 1, 1>`.
pub fn compute_eta_n(
    op: &DegenerateOperator,
    grid: &TimeGrid,
    s_mu_bar: &[f64],
    params: &ModelParams,
) -> Result<f64> {
    let ones = vec![1.0; grid.len()];
    let rn_one = op.apply_rn(&ones)?;
    let denom = grid.integrate(&rn_one)?;
    if denom.is_nan() || denom <= 0.0 {
        return Err(Error::Numerical(format!(
            "<R_n 1, 1> = {denom} is not positive at rank {}; increase the rank",
            op.rank()
        )));
    }
    let rn_s = op.apply_rn(s_mu_bar)?;
    Ok(2.0 * params.lambda0 * (params.q0 - grid.integrate(&rn_s)?) / denom)
}

pub fn solve_major(
    op: &DegenerateOperator,
    tables: &KernelTables,
    params: &ModelParams,
    signal: &SignalParams,
) -> Result<MajorStrategy> {
    let grid = tables.grid();
    let mu = mu_bar_samples(signal, grid);
    let s_mu = tables.apply_s(params, &mu)?;
    let eta = compute_eta_n(op, grid, &s_mu, params)?;
    let shift = eta / (2.0 * params.lambda0);
    let rhs: Vec<f64> = s_mu.iter().map(|v| v + shift).collect();
    let nu0_n = op.apply_rn(&rhs)?;
    let c = params.coupling();
    let g_nu = tables.apply_g(&nu0_n)?;
    let nu0_hat: Vec<f64> = rhs.iter().zip(&g_nu).map(|(f, g)| f - c * g).collect();
    if nu0_hat.iter().any(|v| !v.is_finite()) {
        return Err(Error::Numerical("major strategy is not finite".into()));
    }
    let fuel_error = (grid.integrate(&nu0_hat)? - params.q0).abs();
    let fredholm_residual = fredholm_residual(tables, params, &nu0_hat, &rhs)?;
    Ok(MajorStrategy {
        nu0_n,
        nu0_hat,
        eta_n: eta,
        rank: op.rank(),
        fuel_error,
        fredholm_residual,
    })
}

/// `sup |(I + c G) nu - rhs|`.
pub fn fredholm_residual(
    tables: &KernelTables,
    params: &ModelParams,
    nu: &[f64],
    rhs: &[f64],
) -> Result<f64> {
    tables.grid().check_len(rhs)?;
    let g_nu = tables.apply_g(nu)?;
    let c = params.coupling();
    Ok(nu
        .iter()
        .zip(&g_nu)
        .zip(rhs)
        .map(|((v, g), f)| (v + c * g - f).abs())
        .fold(0.0, f64::max))
}

/// Major rate through the truncated eigen-resolvent (`phi = 0` only).
///
/// `rank` in the result is the number of eigenpairs; `nu0_n` and `nu0_hat` coincide.
pub fn solve_major_resolvent(
    spectrum: &crate::operators::SpectrumPhi0,
    tables: &KernelTables,
    params: &ModelParams,
    signal: &SignalParams,
) -> Result<MajorStrategy> {
    use crate::operators::apply_resolvent;
    let grid = tables.grid();
    let mu = mu_bar_samples(signal, grid);
    let s_mu = tables.apply_s(params, &mu)?;
    let r_one = apply_resolvent(spectrum, tables, params, &vec![1.0; grid.len()])?;
    let r_s = apply_resolvent(spectrum, tables, params, &s_mu)?;
    let denom = grid.integrate(&r_one)?;
    if denom.is_nan() || denom <= 0.0 {
        return Err(Error::Numerical(format!(
            "<(I+R) 1, 1> = {denom} is not positive"
        )));
    }
    let eta = 2.0 * params.lambda0 * (params.q0 - grid.integrate(&r_s)?) / denom;
    let shift = eta / (2.0 * params.lambda0);
    let nu: Vec<f64> = r_s.iter().zip(&r_one).map(|(a, b)| a + shift * b).collect();
    let rhs: Vec<f64> = s_mu.iter().map(|v| v + shift).collect();
    Ok(MajorStrategy {
        fuel_error: (grid.integrate(&nu)? - params.q0).abs(),
        fredholm_residual: fredholm_residual(tables, params, &nu, &rhs)?,
        nu0_n: nu.clone(),
        nu0_hat: nu,
        eta_n: eta,
        rank: spectrum.len(),
    })
}

/// Signal-aware rate that ignores the minor agent:
/// `q0/T + (m0/(2 lambda0 beta)) (1 - beta T e^{-beta t} - e^{-beta T}) / (beta T)`.
pub fn benchmark_strategy(params: &ModelParams, signal: &SignalParams, t: f64) -> f64 {
    let (b, horizon) = (signal.beta, params.horizon);
    let bt = b * horizon;
    params.q0 / horizon
        + signal.m0 / (2.0 * params.lambda0 * b) * (1.0 - bt * (-b * t).exp() - (-bt).exp()) / bt
}

pub fn benchmark_samples(params: &ModelParams, signal: &SignalParams, grid: &TimeGrid) -> Vec<f64> {
    grid.sample(|t| benchmark_strategy(params, signal, t))
}

/// `Q0_t = q0 - int_0^t nu0`.
pub fn major_inventory(params: &ModelParams, grid: &TimeGrid, nu0: &[f64]) -> Result<Vec<f64>> {
    Ok(grid
        .cumulative(nu0)?
        .iter()
        .map(|c| params.q0 - c)
        .collect())
}

/// Deterministic pieces of the minor agent's response to a fixed major rate.
///
/// With the OU transition mean, `r0_t = (mu_t w_t - kappa0 (K1* nu0)_t) / (2 lambda1)`
/// where `w_t = int_t^T K(t,s) e^{-beta (s - t)} ds`.
#[derive(Debug, Clone)]
pub struct MinorResponse {
    lambda1: f64,
    kappa0: f64,
    signal_weight: Vec<f64>,
    k1_star_nu0: Vec<f64>,
}

impl MinorResponse {
    pub fn new(
        tables: &KernelTables,
        params: &ModelParams,
        signal: &SignalParams,
        nu0: &[f64],
    ) -> Result<Self> {
        let grid = tables.grid();
        grid.check_len(nu0)?;
        let r = tables.riccati();
        let n = grid.len();
        let decay = (-signal.beta * grid.dt()).exp();
        let half = 0.5 * grid.dt();
        // backward recursion equal to the trapezoid of xi^+_s e^{-beta (s - t)} over [t, T]
        let mut tail = vec![0.0; n];
        for i in (0..n - 1).rev() {
            tail[i] = decay * tail[i + 1] + half * (r.xi_plus[i] + decay * r.xi_plus[i + 1]);
        }
        let signal_weight = tail.iter().zip(&r.xi_minus).map(|(a, x)| a * x).collect();
        Ok(MinorResponse {
            lambda1: params.lambda1,
            kappa0: params.kappa0,
            signal_weight,
            k1_star_nu0: tables.apply_k1_star(nu0)?,
        })
    }

    pub fn signal_weight(&self) -> &[f64] {
        &self.signal_weight
    }

    pub fn r0(&self, mu_path: &[f64]) -> Result<Vec<f64>> {
        if mu_path.len() != self.signal_weight.len() {
            return Err(Error::LengthMismatch {
                expected: self.signal_weight.len(),
                got: mu_path.len(),
            });
        }
        let mut out = vec![0.0; mu_path.len()];
        self.r0_into(mu_path, &mut out);
        Ok(out)
    }

    pub(crate) fn r0_into(&self, mu_path: &[f64], out: &mut [f64]) {
        let scale = 1.0 / (2.0 * self.lambda1);
        for (((o, m), w), k) in out
            .iter_mut()
            .zip(mu_path)
            .zip(&self.signal_weight)
            .zip(&self.k1_star_nu0)
        {
            *o = scale * (m * w - self.kappa0 * k);
        }
    }
}

/// Per-path minor agent state on the grid.
#[derive(Debug, Clone, PartialEq)]
pub struct MinorPathState {
    pub mu: Vec<f64>,
    pub r0: Vec<f64>,
    pub nu1: Vec<f64>,
    pub q1: Vec<f64>,
}

pub fn minor_r0_path(
    tables: &KernelTables,
    params: &ModelParams,
    signal: &SignalParams,
    mu_path: &[f64],
    nu0: &[f64],
) -> Result<Vec<f64>> {
    MinorResponse::new(tables, params, signal, nu0)?.r0(mu_path)
}

/// `Q1 = xi^+ int_0^t xi^- r0`, `nu1 = -(r0 + r1 Q1)`.
pub fn minor_strategy_path(
    tables: &KernelTables,
    mu_path: &[f64],
    r0: &[f64],
) -> Result<MinorPathState> {
    let grid = tables.grid();
    grid.check_len(mu_path)?;
    let q1 = tables.apply_k1(r0)?;
    let r1 = &tables.riccati().r1;
    let nu1 = r0
        .iter()
        .zip(r1)
        .zip(&q1)
        .map(|((a, r), q)| -(a + r * q))
        .collect();
    Ok(MinorPathState {
        mu: mu_path.to_vec(),
        r0: r0.to_vec(),
        nu1,
        q1,
    })
}

/// Allocation-free variant used inside the Monte Carlo loop.
pub(crate) fn minor_strategy_into(
    tables: &KernelTables,
    r0: &[f64],
    scratch: &mut [f64],
    q1: &mut [f64],
    nu1: &mut [f64],
) {
    let r = tables.riccati();
    for ((s, x), v) in scratch.iter_mut().zip(&r.xi_minus).zip(r0) {
        *s = x * v;
    }
    let dt = tables.grid().dt();
    let mut acc = 0.0;
    q1[0] = 0.0;
    for i in 1..r0.len() {
        acc += 0.5 * dt * (scratch[i - 1] + scratch[i]);
        q1[i] = r.xi_plus[i] * acc;
    }
    for i in 0..r0.len() {
        nu1[i] = -(r0[i] + r.r1[i] * q1[i]);
    }
}

/// `E[r0] = (K1* mu_bar - kappa0 K1* nu0) / (2 lambda1)`.
pub fn expected_r0(
    tables: &KernelTables,
    params: &ModelParams,
    nu0: &[f64],
    mu_bar: &[f64],
) -> Result<Vec<f64>> {
    let a = tables.apply_k1_star(mu_bar)?;
    let b = tables.apply_k1_star(nu0)?;
    let s = 1.0 / (2.0 * params.lambda1);
    Ok(a.iter()
        .zip(&b)
        .map(|(m, v)| s * (m - params.kappa0 * v))
        .collect())
}

/// `E[nu1] = (kappa0/(2 lambda1)) (K1* nu0 + r1 G nu0) - (1/(2 lambda1)) (K1* mu_bar + r1 G mu_bar)`.
pub fn expected_minor_rate(
    tables: &KernelTables,
    params: &ModelParams,
    nu0: &[f64],
    mu_bar: &[f64],
) -> Result<Vec<f64>> {
    let k_nu = tables.apply_k1_star(nu0)?;
    let g_nu = tables.apply_g(nu0)?;
    let k_mu = tables.apply_k1_star(mu_bar)?;
    let g_mu = tables.apply_g(mu_bar)?;
    let r1 = &tables.riccati().r1;
    let s = 1.0 / (2.0 * params.lambda1);
    Ok((0..r1.len())
        .map(|i| s * params.kappa0 * (k_nu[i] + r1[i] * g_nu[i]) - s * (k_mu[i] + r1[i] * g_mu[i]))
        .collect())
}

/// `-int_0^t nu1`, the inventory implied by a rate path.
pub fn inventory_from_rate(grid: &TimeGrid, nu1: &[f64]) -> Result<Vec<f64>> {
    grid.check_len(nu1)?;
    Ok(cumulative_trapezoid(nu1, grid.dt())
        .iter()
        .map(|v| -v)
        .collect())
}
