//! Backward Riccati equation for the minor agent's feedback gain.
//!
//! Solves `dr/dt = phi(t)/lambda1 - r^2` backwards from
//! `r(T) = -(2 alpha - kappa1)/(2 lambda1)` with classical RK4 on the grid,
//! and carries `int r` and `int exp(-2 int r)` along as quadrature states so
//! that the exponentials feeding every kernel inherit fourth-order accuracy.

use crate::error::{Error, Result};
use crate::grid::TimeGrid;
use crate::model::{ModelParams, PenaltySpec};

/// Aborts when the gain leaves this range; cannot happen when `2 alpha >= kappa1`.
const BLOWUP_LIMIT: f64 = 1e8;
/// Upper bound on `|r| h` for a single RK4 sub-step.
const MAX_STEP_STIFFNESS: f64 = 0.01;
const MAX_SUBSTEPS: usize = 512;

/// Riccati gain and the derived exponentials on a grid.
#[derive(Debug, Clone)]
pub struct RiccatiSolution {
    grid: TimeGrid,
    /// `r^1` at each node.
    pub r1: Vec<f64>,
    /// `int_0^t r^1`.
    pub log_xi: Vec<f64>,
    /// `exp(+int_0^t r^1)`.
    pub xi_plus: Vec<f64>,
    /// `exp(-int_0^t r^1)`.
    pub xi_minus: Vec<f64>,
    /// `int_0^t (xi^-)^2`.
    pub cum_xi_minus_sq: Vec<f64>,
    /// Penalty sampled at the nodes.
    pub phi: Vec<f64>,
}

impl RiccatiSolution {
    pub fn grid(&self) -> &TimeGrid {
        &self.grid
    }

    pub fn len(&self) -> usize {
        self.r1.len()
    }

    pub fn is_empty(&self) -> bool {
        self.r1.is_empty()
    }
}

struct StepOutcome {
    r: f64,
    /// `int_{t_i}^{t_{i+1}} r`
    log_increment: f64,
    /// `int_{t_i}^{t_{i+1}} exp(-2 (R(u) - R(t_{i+1}))) du`
    weight_integral: f64,
}

/// Integrates the Riccati equation backwards over the grid.
pub fn solve_riccati(
    params: &ModelParams,
    phi: &PenaltySpec,
    grid: &TimeGrid,
) -> Result<RiccatiSolution> {
    params.validate()?;
    phi.validate(grid.horizon())?;
    if (grid.horizon() - params.horizon).abs() > 1e-12 * params.horizon {
        return Err(Error::param("T", "grid horizon differs from model horizon"));
    }
    let n = grid.len();
    let nodes = grid.nodes();
    let lambda1 = params.lambda1;
    let phi_nodes: Vec<f64> = nodes.iter().map(|&t| phi.value(t)).collect();
    let phi_mean = phi_nodes.iter().sum::<f64>() / n as f64;

    let mut r1 = vec![0.0; n];
    let mut log_inc = vec![0.0; n - 1];
    let mut weight_int = vec![0.0; n - 1];
    r1[n - 1] = params.riccati_terminal();

    for i in (0..n - 1).rev() {
        let (a, b) = (nodes[i], nodes[i + 1]);
        let forcing = |t: f64| phi.value_on_interval(t, a, b) / lambda1;
        let mut substeps = ((r1[i + 1].abs() * (b - a)) / MAX_STEP_STIFFNESS).ceil() as usize;
        let peak = forcing(a).max(forcing(b)).max(forcing(0.5 * (a + b))) * lambda1;
        if phi_mean > 0.0 && peak > 10.0 * phi_mean {
            substeps = substeps.max(4);
        }
        let substeps = substeps.clamp(1, MAX_SUBSTEPS);
        let out = integrate_step(r1[i + 1], a, b, substeps, &forcing);
        if !out.r.is_finite() || out.r.abs() > BLOWUP_LIMIT {
            return Err(Error::Numerical(format!(
                "Riccati gain blew up near t={a} (r={}); check 2*alpha >= kappa1",
                out.r
            )));
        }
        r1[i] = out.r;
        log_inc[i] = out.log_increment;
        weight_int[i] = out.weight_integral;
    }

    let mut log_xi = vec![0.0; n];
    let mut cum = vec![0.0; n];
    for i in 0..n - 1 {
        log_xi[i + 1] = log_xi[i] + log_inc[i];
        cum[i + 1] = cum[i] + (-2.0 * log_xi[i + 1]).exp() * weight_int[i];
    }
    let xi_plus: Vec<f64> = log_xi.iter().map(|l| l.exp()).collect();
    let xi_minus: Vec<f64> = log_xi.iter().map(|l| (-l).exp()).collect();
    if xi_plus
        .iter()
        .chain(&xi_minus)
        .chain(&cum)
        .any(|v| !v.is_finite())
    {
        return Err(Error::Numerical(
            "exponential of the Riccati integral overflowed".into(),
        ));
    }

    Ok(RiccatiSolution {
        grid: grid.clone(),
        r1,
        log_xi,
        xi_plus,
        xi_minus,
        cum_xi_minus_sq: cum,
        phi: phi_nodes,
    })
}

/// RK4 from `b` down to `a` on the augmented state `(r, l, e)` with
/// `l' = r`, `e' = exp(-2 l)`, `l(b) = e(b) = 0`.
fn integrate_step(
    r_end: f64,
    a: f64,
    b: f64,
    substeps: usize,
    forcing: &dyn Fn(f64) -> f64,
) -> StepOutcome {
    let h = -(b - a) / substeps as f64;
    let rhs =
        |t: f64, y: [f64; 3]| -> [f64; 3] { [forcing(t) - y[0] * y[0], y[0], (-2.0 * y[1]).exp()] };
    let mut y = [r_end, 0.0, 0.0];
    for k in 0..substeps {
        let t = b + h * k as f64;
        let k1 = rhs(t, y);
        let k2 = rhs(t + 0.5 * h, axpy(y, 0.5 * h, k1));
        let k3 = rhs(t + 0.5 * h, axpy(y, 0.5 * h, k2));
        let t_next = if k + 1 == substeps { a } else { t + h };
        let k4 = rhs(t_next, axpy(y, h, k3));
        for c in 0..3 {
            y[c] += h / 6.0 * (k1[c] + 2.0 * k2[c] + 2.0 * k3[c] + k4[c]);
        }
    }
    StepOutcome {
        r: y[0],
        log_increment: -y[1],
        weight_integral: -y[2],
    }
}

fn axpy(y: [f64; 3], h: f64, k: [f64; 3]) -> [f64; 3] {
    [y[0] + h * k[0], y[1] + h * k[1], y[2] + h * k[2]]
}

/// Closed-form gain for `phi = 0`:
/// `r(t) = (2 alpha - kappa1) / ((t - T)(2 alpha - kappa1) - 2 lambda1)`.
pub fn riccati_closed_form_phi0(params: &ModelParams, grid: &TimeGrid) -> Result<Vec<f64>> {
    params.validate()?;
    let gap = 2.0 * params.alpha - params.kappa1;
    let horizon = params.horizon;
    Ok(grid.sample(|t| gap / ((t - horizon) * gap - 2.0 * params.lambda1)))
}
