//! Independent objective evaluations and residual checks of the optimality
//! systems. Nothing here feeds back into the solvers.

use rand::Rng;
use rand_distr::StandardNormal;

use crate::equilibrium::{minor_strategy_path, MinorPathState, MinorResponse};
use crate::error::{Error, Result};
use crate::grid::{cosine_basis_unchecked, cumulative_trapezoid, TimeGrid};
use crate::model::{ModelParams, SignalParams};
use crate::operators::KernelTables;
use crate::par::{self, Execution};
use crate::sim::ou::{path_rng, simulate_ou_path};
use crate::sim::stats::mean_sd;

/// Objective value with its additive breakdown.
#[derive(Debug, Clone, PartialEq)]
pub struct ObjectiveReport {
    pub value: f64,
    pub components: Vec<(&'static str, f64)>,
    /// `(2 alpha - kappa1) / 2`.
    pub theta: f64,
}

impl ObjectiveReport {
    pub fn component(&self, name: &str) -> Option<f64> {
        self.components
            .iter()
            .find(|(n, _)| *n == name)
            .map(|(_, v)| *v)
    }
}

/// Major objective for a deterministic fuel-feasible rate:
/// `x0 + M0 q0 - kappa0 q0^2/2 - (kappa1 kappa0/(2 lambda1)) <nu, G nu>
///  + int [(kappa1/(2 lambda1)) nu G mu_bar + Q0 mu_bar] - lambda0 int nu^2`.
pub fn h0_discrete(
    nu0: &[f64],
    tables: &KernelTables,
    params: &ModelParams,
    signal: &SignalParams,
) -> Result<ObjectiveReport> {
    let grid = tables.grid();
    grid.check_len(nu0)?;
    let fuel = grid.integrate(nu0)?;
    let tol = 1e-6 * params.q0.abs().max(1.0);
    if (fuel - params.q0).abs() > tol {
        return Err(Error::param(
            "nu0",
            format!(
                "violates the fuel constraint: int nu0 = {fuel}, q0 = {}",
                params.q0
            ),
        ));
    }
    let mu = grid.sample(|t| signal.mean(t));
    let g_nu = tables.apply_g(nu0)?;
    let g_mu = tables.apply_g(&mu)?;
    let q0_path: Vec<f64> = cumulative_trapezoid(nu0, grid.dt())
        .iter()
        .map(|c| params.q0 - c)
        .collect();
    let initial =
        params.x0 + signal.price0 * params.q0 - 0.5 * params.kappa0 * params.q0 * params.q0;
    let interaction =
        -params.kappa1 * params.kappa0 / (2.0 * params.lambda1) * grid.inner(nu0, &g_nu)?;
    let signal_rev = params.kappa1 / (2.0 * params.lambda1) * grid.inner(nu0, &g_mu)?
        + grid.inner(&q0_path, &mu)?;
    let temporary = -params.lambda0 * grid.inner(nu0, nu0)?;
    let components = vec![
        ("initial", initial),
        ("permanent_interaction", interaction),
        ("signal_revenue", signal_rev),
        ("temporary_cost", temporary),
    ];
    Ok(ObjectiveReport {
        value: components.iter().map(|(_, v)| v).sum(),
        components,
        theta: params.theta(),
    })
}

/// Integrand of the major objective's first variation:
/// `-2 lambda0 nu - (kappa1 kappa0/lambda1) G nu + (kappa1/(2 lambda1)) G mu_bar - int_t^T mu_bar`.
pub fn h0_gateaux_integrand(
    nu0: &[f64],
    tables: &KernelTables,
    params: &ModelParams,
    signal: &SignalParams,
) -> Result<Vec<f64>> {
    let grid = tables.grid();
    let mu = grid.sample(|t| signal.mean(t));
    let g_nu = tables.apply_g(nu0)?;
    let g_mu = tables.apply_g(&mu)?;
    let tail = grid.cumulative_from_end(&mu)?;
    let a = params.kappa1 * params.kappa0 / params.lambda1;
    let b = params.kappa1 / (2.0 * params.lambda1);
    Ok((0..grid.len())
        .map(|i| -2.0 * params.lambda0 * nu0[i] - a * g_nu[i] + b * g_mu[i] - tail[i])
        .collect())
}

/// Unit-norm zero-integral direction spanned by cosine modes `2..=modes+1`.
pub fn random_fuel_neutral_direction<R: Rng + ?Sized>(
    grid: &TimeGrid,
    modes: usize,
    rng: &mut R,
) -> Vec<f64> {
    let horizon = grid.horizon();
    let coeffs: Vec<f64> = (0..modes)
        .map(|k| rng.sample::<f64, _>(StandardNormal) / (1.0 + k as f64))
        .collect();
    let mut w = grid.sample(|t| {
        coeffs
            .iter()
            .enumerate()
            .map(|(k, c)| c * cosine_basis_unchecked(k + 2, t, horizon))
            .sum()
    });
    let norm = grid.l2_norm(&w).unwrap_or(1.0).max(f64::MIN_POSITIVE);
    w.iter_mut().for_each(|v| *v /= norm);
    w
}

#[derive(Debug, Clone, PartialEq)]
pub struct MajorOptimality {
    pub best_value: f64,
    /// Largest objective among the perturbed rates.
    pub best_perturbed: f64,
    /// Perturbations whose objective is strictly below the candidate's.
    pub n_beaten: usize,
    pub n_perturbations: usize,
    /// `max |int omega g| / ||omega||` over the Gateaux directions.
    pub gateaux_max: f64,
}

/// Scores `nu0` against `n_perturb` random fuel-neutral perturbations with
/// `eps` drawn in `[eps_lo, eps_hi]`, and probes the first variation along
/// `n_gateaux` further directions.
#[allow(clippy::too_many_arguments)]
pub fn major_optimality(
    nu0: &[f64],
    tables: &KernelTables,
    params: &ModelParams,
    signal: &SignalParams,
    n_perturb: usize,
    n_gateaux: usize,
    (eps_lo, eps_hi): (f64, f64),
    seed: u64,
    exec: Execution,
) -> Result<MajorOptimality> {
    let grid = tables.grid();
    let base = h0_discrete(nu0, tables, params, signal)?.value;
    let modes = 40;
    let values = par::try_map_indexed(n_perturb, exec, |k| {
        let mut rng = path_rng(seed, k as u64);
        let w = random_fuel_neutral_direction(grid, modes, &mut rng);
        let eps = eps_lo + (eps_hi - eps_lo) * rng.random::<f64>();
        let nu: Vec<f64> = nu0.iter().zip(&w).map(|(a, b)| a + eps * b).collect();
        h0_discrete(&nu, tables, params, signal).map(|r| r.value)
    })?;
    let integrand = h0_gateaux_integrand(nu0, tables, params, signal)?;
    let gateaux = par::try_map_indexed(n_gateaux, exec, |k| {
        let mut rng = path_rng(seed ^ 0x9e37_79b9_7f4a_7c15, k as u64);
        let w = random_fuel_neutral_direction(grid, modes, &mut rng);
        Ok::<f64, Error>(grid.inner(&w, &integrand)?.abs() / grid.l2_norm(&w)?)
    })?;
    Ok(MajorOptimality {
        best_value: base,
        best_perturbed: values.iter().copied().fold(f64::NEG_INFINITY, f64::max),
        n_beaten: values.iter().filter(|&&v| v < base).count(),
        n_perturbations: n_perturb,
        gateaux_max: gateaux.into_iter().fold(0.0, f64::max),
    })
}

/// Realized minor objective on one path:
/// `x1 - [lambda1 int nu1^2 + alpha Q_T^2 + int phi Q^2 + int Q (kappa0 nu0 + kappa1 nu1 - mu)]`.
pub fn h1_discrete_pathwise(
    nu1: &[f64],
    q1: &[f64],
    mu: &[f64],
    nu0: &[f64],
    phi: &[f64],
    params: &ModelParams,
    grid: &TimeGrid,
) -> Result<f64> {
    for s in [nu1, q1, mu, nu0, phi] {
        grid.check_len(s)?;
    }
    let n = grid.len();
    let temp = params.lambda1 * grid.inner(nu1, nu1)?;
    let terminal = params.alpha * q1[n - 1] * q1[n - 1];
    let running: Vec<f64> = (0..n).map(|i| phi[i] * q1[i] * q1[i]).collect();
    let cross: Vec<f64> = (0..n)
        .map(|i| q1[i] * (params.kappa0 * nu0[i] + params.kappa1 * nu1[i] - mu[i]))
        .collect();
    Ok(params.x1 - (temp + terminal + grid.integrate(&running)? + grid.integrate(&cross)?))
}

/// Feedback-form deviations from the optimal minor strategy.
#[derive(Debug, Clone, PartialEq)]
pub enum MinorPerturbation {
    /// `nu1 + eps omega` with deterministic `omega`.
    Additive(Vec<f64>),
    /// Gain `r1 + delta` in `nu1 = -(r0 + gain Q1)`.
    Gain(Vec<f64>),
}

impl MinorPerturbation {
    /// Applies the deviation to an optimal path, returning `(nu1, Q1)`.
    /// `log_xi` is `int_0^t r1`, so a zero deviation reproduces `opt` exactly.
    pub fn apply(
        &self,
        grid: &TimeGrid,
        r1: &[f64],
        log_xi: &[f64],
        opt: &MinorPathState,
    ) -> (Vec<f64>, Vec<f64>) {
        match self {
            MinorPerturbation::Additive(w) => {
                let dq = cumulative_trapezoid(w, grid.dt());
                let nu = opt.nu1.iter().zip(w).map(|(a, b)| a + b).collect();
                let q = opt.q1.iter().zip(&dq).map(|(a, b)| a - b).collect();
                (nu, q)
            }
            MinorPerturbation::Gain(delta) => {
                let gain: Vec<f64> = r1.iter().zip(delta).map(|(a, b)| a + b).collect();
                let extra = cumulative_trapezoid(delta, grid.dt());
                let log_xi: Vec<f64> = log_xi.iter().zip(&extra).map(|(a, b)| a + b).collect();
                let weighted: Vec<f64> = opt
                    .r0
                    .iter()
                    .zip(&log_xi)
                    .map(|(r, l)| r * (-l).exp())
                    .collect();
                let acc = cumulative_trapezoid(&weighted, grid.dt());
                let q: Vec<f64> = acc.iter().zip(&log_xi).map(|(a, l)| a * l.exp()).collect();
                let nu = (0..q.len())
                    .map(|i| -(opt.r0[i] + gain[i] * q[i]))
                    .collect();
                (nu, q)
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PerturbationOutcome {
    /// Mean of `h1(optimal) - h1(perturbed)` over paths.
    pub mean_gain: f64,
    pub std_error: f64,
}

impl PerturbationOutcome {
    pub fn passes(&self, n_se: f64) -> bool {
        self.mean_gain >= -n_se * self.std_error
    }
}

/// Random perturbation `k` of the family used by [`minor_optimality`].
pub fn minor_perturbation(grid: &TimeGrid, k: usize, seed: u64) -> MinorPerturbation {
    let mut rng = path_rng(seed ^ 0x5bd1_e995, k as u64);
    let horizon = grid.horizon();
    let eps = 0.01 + 0.09 * rng.random::<f64>();
    let coeffs: Vec<f64> = (0..6)
        .map(|_| rng.sample::<f64, _>(StandardNormal))
        .collect();
    let shape = grid.sample(|t| {
        coeffs
            .iter()
            .enumerate()
            .map(|(j, c)| c * cosine_basis_unchecked(j + 1, t, horizon))
            .sum()
    });
    let scale = eps / grid.l2_norm(&shape).unwrap_or(1.0).max(f64::MIN_POSITIVE);
    let w = shape.iter().map(|v| v * scale).collect();
    if k.is_multiple_of(2) {
        MinorPerturbation::Additive(w)
    } else {
        MinorPerturbation::Gain(w)
    }
}

/// Monte Carlo comparison of the optimal minor strategy against `n_perturb`
/// feedback deviations on common random paths.
#[allow(clippy::too_many_arguments)]
pub fn minor_optimality(
    tables: &KernelTables,
    params: &ModelParams,
    signal: &SignalParams,
    nu0: &[f64],
    n_paths: usize,
    n_perturb: usize,
    seed: u64,
    exec: Execution,
) -> Result<Vec<PerturbationOutcome>> {
    let grid = tables.grid();
    let response = MinorResponse::new(tables, params, signal, nu0)?;
    let r1 = &tables.riccati().r1;
    let phi = &tables.riccati().phi;
    let log_xi = &tables.riccati().log_xi;
    let perturbations: Vec<MinorPerturbation> = (0..n_perturb)
        .map(|k| minor_perturbation(grid, k, seed))
        .collect();
    // each path yields one difference per perturbation
    let diffs: Vec<Vec<f64>> = par::try_map_indexed(n_paths, exec, |p| {
        let mu = simulate_ou_path(signal, grid, &mut path_rng(seed, p as u64));
        let opt = minor_strategy_path(tables, &mu, &response.r0(&mu)?)?;
        let h_opt = h1_discrete_pathwise(&opt.nu1, &opt.q1, &mu, nu0, phi, params, grid)?;
        perturbations
            .iter()
            .map(|pert| {
                let (nu, q) = pert.apply(grid, r1, log_xi, &opt);
                Ok(h_opt - h1_discrete_pathwise(&nu, &q, &mu, nu0, phi, params, grid)?)
            })
            .collect::<Result<Vec<f64>>>()
    })?;
    Ok((0..n_perturb)
        .map(|k| {
            let col: Vec<f64> = diffs.iter().map(|d| d[k]).collect();
            let (mean, sd) = mean_sd(&col);
            PerturbationOutcome {
                mean_gain: mean,
                std_error: sd / (col.len() as f64).sqrt(),
            }
        })
        .collect())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FbsdeResidual {
    /// Max over interior nodes of `|2 lambda1 dr0/dt + 2 lambda1 r1 r0 - kappa0 nu0 + mu|`.
    pub drift: f64,
    /// `|nu1_T - (2 alpha - kappa1)/(2 lambda1) Q1_T|`.
    pub terminal: f64,
}

pub fn fbsde_residual(
    path: &MinorPathState,
    nu0: &[f64],
    tables: &KernelTables,
    params: &ModelParams,
) -> Result<FbsdeResidual> {
    let grid = tables.grid();
    for s in [&path.mu, &path.r0, &path.nu1, &path.q1] {
        grid.check_len(s)?;
    }
    grid.check_len(nu0)?;
    let r1 = &tables.riccati().r1;
    let dt = grid.dt();
    let l1 = params.lambda1;
    let n = grid.len();
    let drift = (1..n - 1)
        .map(|i| {
            let dr0 = (path.r0[i + 1] - path.r0[i - 1]) / (2.0 * dt);
            (2.0 * l1 * dr0 + 2.0 * l1 * r1[i] * path.r0[i] - params.kappa0 * nu0[i] + path.mu[i])
                .abs()
        })
        .fold(0.0, f64::max);
    let terminal = (path.nu1[n - 1] + params.riccati_terminal() * path.q1[n - 1]).abs();
    Ok(FbsdeResidual { drift, terminal })
}

/// Sup-norm residuals of `d/dt (G psi) = r1 G psi + K1* psi` and
/// `d/dt (K1* psi) = -r1 K1* psi - psi` at interior nodes, by centered differences.
pub fn operator_ode_residual(tables: &KernelTables, psi: &[f64]) -> Result<(f64, f64)> {
    let grid = tables.grid();
    let g = tables.apply_g(psi)?;
    let k = tables.apply_k1_star(psi)?;
    let r1 = &tables.riccati().r1;
    let h = 2.0 * grid.dt();
    let n = grid.len();
    let (mut rg, mut rk) = (0.0f64, 0.0f64);
    for i in 1..n - 1 {
        let dg = (g[i + 1] - g[i - 1]) / h;
        let dk = (k[i + 1] - k[i - 1]) / h;
        rg = rg.max((dg - r1[i] * g[i] - k[i]).abs());
        rk = rk.max((dk + r1[i] * k[i] + psi[i]).abs());
    }
    Ok((rg, rk))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::equilibrium::{benchmark_samples, minor_r0_path, solve_major};
    use crate::model::PenaltySpec;
    use crate::operators::build_degenerate;
    use crate::riccati::solve_riccati;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    fn param1() -> ModelParams {
        ModelParams::new(1.0, 1.0, 2.0, 2.0, 10.0, 10.0, 0.0, 0.0, 6.0).unwrap()
    }

    fn param2() -> SignalParams {
        SignalParams::new(-0.5, 0.1, 4.0, 100.0, 1.0).unwrap()
    }

    fn tables(p: &ModelParams, phi: PenaltySpec, n: usize) -> KernelTables {
        let g = TimeGrid::new(p.horizon, n).unwrap();
        KernelTables::new(solve_riccati(p, &phi, &g).unwrap())
    }

    #[test]
    fn uncoupled_flat_signal_prefers_twap() {
        let p = ModelParams::new(1.0, 1.0, 2.0, 1e-12, 10.0, 10.0, 0.0, 0.0, 6.0).unwrap();
        let s = SignalParams::new(0.0, 0.1, 1.0, 100.0, 1.0).unwrap();
        let t = tables(&p, PenaltySpec::Zero, 601);
        let twap = vec![10.0 / 6.0; 601];
        let r = h0_discrete(&twap, &t, &p, &s).unwrap();
        assert_abs_diff_eq!(r.value, 1000.0 - 100.0 - 100.0 / 6.0, epsilon = 1e-8);
        let opt = major_optimality(
            &twap,
            &t,
            &p,
            &s,
            100,
            10,
            (0.01, 0.1),
            3,
            Execution::default(),
        )
        .unwrap();
        assert_eq!(opt.n_beaten, 100);
    }

    #[test]
    fn components_reconcile() {
        let p = param1();
        let s = param2();
        let t = tables(&p, PenaltySpec::Zero, 601);
        let nu = benchmark_samples(&p, &s, t.grid());
        let r = h0_discrete(&nu, &t, &p, &s).unwrap();
        let sum: f64 = r.components.iter().map(|(_, v)| v).sum();
        assert!((sum - r.value).abs() <= 1e-10 * r.value.abs());
        assert!(r.value.is_finite());
        assert_eq!(r.theta, 9.0);
        assert!(r.component("temporary_cost").unwrap() < 0.0);
    }

    #[test]
    fn fuel_violation_is_rejected() {
        let p = param1();
        let t = tables(&p, PenaltySpec::Zero, 101);
        assert!(h0_discrete(&vec![1.0; 101], &t, &p, &param2()).is_err());
    }

    #[test]
    fn solved_rate_is_stationary_and_optimal() {
        let p = param1();
        let s = param2();
        let t = tables(&p, PenaltySpec::Constant { value: 1.0 }, 1201);
        let op = build_degenerate(&t, &p, 100).unwrap();
        let m = solve_major(&op, &t, &p, &s).unwrap();
        let r = major_optimality(
            &m.nu0_hat,
            &t,
            &p,
            &s,
            60,
            20,
            (0.01, 0.1),
            9,
            Execution::default(),
        )
        .unwrap();
        assert_eq!(r.n_beaten, 60);
        assert!(r.gateaux_max <= 1e-4, "{}", r.gateaux_max);
    }

    #[test]
    fn h1_trivial_path() {
        let p = param1();
        let g = TimeGrid::new(6.0, 11).unwrap();
        let z = vec![0.0; 11];
        let h = h1_discrete_pathwise(
            &z,
            &z,
            &vec![0.3; 11],
            &vec![1.0; 11],
            &vec![1.0; 11],
            &p,
            &g,
        )
        .unwrap();
        assert_eq!(h, p.x1);
        assert!(h1_discrete_pathwise(&z, &z, &z, &z, &z[..3], &p, &g).is_err());
    }

    #[test]
    fn larger_terminal_penalty_lowers_objective() {
        let p = param1();
        let g = TimeGrid::new(6.0, 61).unwrap();
        let nu1 = vec![-0.2; 61];
        let q1: Vec<f64> = g.nodes().iter().map(|t| 0.2 * t).collect();
        let mu = vec![0.1; 61];
        let nu0 = vec![10.0 / 6.0; 61];
        let phi = vec![1.0; 61];
        let mut p2 = p;
        p2.alpha *= 2.0;
        let a = h1_discrete_pathwise(&nu1, &q1, &mu, &nu0, &phi, &p, &g).unwrap();
        let b = h1_discrete_pathwise(&nu1, &q1, &mu, &nu0, &phi, &p2, &g).unwrap();
        assert!(b <= a);
    }

    #[test]
    fn equilibrium_minor_strategy_beats_perturbations() {
        let p = param1();
        let s = SignalParams::new(-0.5, 0.1, 1.5, 100.0, 1.0).unwrap();
        let t = tables(&p, PenaltySpec::Constant { value: 1.0 }, 301);
        let nu0 = benchmark_samples(&p, &s, t.grid());
        let out = minor_optimality(&t, &p, &s, &nu0, 2000, 50, 17, Execution::default()).unwrap();
        assert!(out.iter().all(|o| o.passes(3.0)), "{out:?}");
    }

    #[test]
    fn fbsde_residual_deterministic_signal() {
        let p = param1();
        let s = SignalParams::new(-0.5, 0.1, 0.0, 100.0, 1.0).unwrap();
        let mut prev = f64::INFINITY;
        for n in [301, 601, 1201] {
            let t = tables(&p, PenaltySpec::Constant { value: 1.0 }, n);
            let nu0 = benchmark_samples(&p, &s, t.grid());
            let mu = simulate_ou_path(&s, t.grid(), &mut path_rng(0, 0));
            let r0 = minor_r0_path(&t, &p, &s, &mu, &nu0).unwrap();
            let path = minor_strategy_path(&t, &mu, &r0).unwrap();
            let res = fbsde_residual(&path, &nu0, &t, &p).unwrap();
            assert!(res.terminal <= 1e-6);
            assert!(
                res.drift <= 50.0 * t.grid().dt(),
                "{} at dt {}",
                res.drift,
                t.grid().dt()
            );
            assert!(res.drift < prev);
            prev = res.drift;
        }
        let t = tables(&p, PenaltySpec::Zero, 101);
        let z = vec![0.0; 101];
        let path = minor_strategy_path(&t, &z, &z).unwrap();
        let res = fbsde_residual(&path, &z, &t, &p).unwrap();
        assert_eq!(res.drift, 0.0);
        assert_eq!(res.terminal, 0.0);
    }

    #[test]
    fn operator_odes_flat_kernel() {
        let p = ModelParams::new(1.0, 1.0, 2.0, 2.0, 1.0, 10.0, 0.0, 0.0, 6.0).unwrap();
        let t = tables(&p, PenaltySpec::Zero, 601);
        let (rg, rk) = operator_ode_residual(&t, &vec![1.0; 601]).unwrap();
        assert!(rg <= 1e-10 && rk <= 1e-10, "{rg} {rk}");
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]
        #[test]
        fn h0_quadratic_identity(seed in 0u64..1000, rho in 0.05f64..0.95) {
            let p = param1();
            let s = param2();
            let t = tables(&p, PenaltySpec::Constant { value: 1.0 }, 401);
            let g = t.grid();
            let mut rng = path_rng(seed, 0);
            let twap = vec![10.0 / 6.0; 401];
            let w1 = random_fuel_neutral_direction(g, 10, &mut rng);
            let w2 = random_fuel_neutral_direction(g, 10, &mut rng);
            let nu: Vec<f64> = twap.iter().zip(&w1).map(|(a, b)| a + b).collect();
            let om: Vec<f64> = twap.iter().zip(&w2).map(|(a, b)| a - 0.5 * b).collect();
            let mix: Vec<f64> = nu.iter().zip(&om).map(|(a, b)| rho * a + (1.0 - rho) * b).collect();
            let h = |v: &[f64]| h0_discrete(v, &t, &p, &s).unwrap().value;
            let gap = h(&mix) - rho * h(&nu) - (1.0 - rho) * h(&om);
            let d: Vec<f64> = nu.iter().zip(&om).map(|(a, b)| a - b).collect();
            let gd = t.apply_g(&d).unwrap();
            let want = rho * (1.0 - rho)
                * (p.lambda0 * g.inner(&d, &d).unwrap()
                    + p.kappa1 * p.kappa0 / (2.0 * p.lambda1) * g.inner(&d, &gd).unwrap());
            prop_assert!(gap >= -1e-10);
            prop_assert!((gap - want).abs() <= 1e-8 * want.abs().max(1.0));
        }
    }
}
