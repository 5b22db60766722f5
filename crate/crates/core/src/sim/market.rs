//! Monte Carlo simulation of the market under a fixed major rate and the
//! minor agent's optimal response.

use crate::equilibrium::{minor_strategy_into, MinorResponse};
use crate::error::{Error, Result};
use crate::grid::{cumulative_trapezoid, trapezoid, TimeGrid};
use crate::model::{ModelParams, SignalParams};
use crate::operators::KernelTables;
use crate::par::{self, Execution};
use crate::sim::ou::{fill_brownian, fill_ou_path, path_rng};
use crate::sim::stats::NodeMoments;
use crate::sim::volume::VolumeBins;

/// Paths per work unit; fixed so results do not depend on the thread count.
const BLOCK: usize = 32;

#[derive(Debug, Clone)]
pub struct SimulationConfig {
    pub n_paths: usize,
    pub seed: u64,
    /// Keep every per-path series (memory grows with `n_paths * n_points`).
    pub store_paths: bool,
    /// Bin traded volume per path when set.
    pub volume_bins: Option<VolumeBins>,
    /// Times at which `Q1` is recorded per path.
    pub checkpoints: Vec<f64>,
    pub execution: Execution,
}

impl SimulationConfig {
    pub fn new(n_paths: usize, seed: u64) -> Self {
        SimulationConfig {
            n_paths,
            seed,
            store_paths: false,
            volume_bins: None,
            checkpoints: Vec::new(),
            execution: Execution::default(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_paths < 1 {
            return Err(Error::param("n_paths", "need at least one path"));
        }
        Ok(())
    }
}

/// Full record of one simulated path.
#[derive(Debug, Clone, PartialEq)]
pub struct PathRecord {
    pub mu: Vec<f64>,
    /// Brownian motion driving the martingale price part.
    pub noise: Vec<f64>,
    pub price: Vec<f64>,
    pub s0: Vec<f64>,
    pub s1: Vec<f64>,
    pub r0: Vec<f64>,
    pub nu1: Vec<f64>,
    pub q1: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct SimulationResult {
    grid: TimeGrid,
    pub nu0: Vec<f64>,
    pub q0: Vec<f64>,
    pub x0_terminal: Vec<f64>,
    pub x1_terminal: Vec<f64>,
    /// `max_t |Q1_t|` per path.
    pub q1_max_abs: Vec<f64>,
    /// `Q1` at the configured checkpoints, one row per path.
    pub q1_checkpoints: Vec<Vec<f64>>,
    pub nu1_moments: NodeMoments,
    pub r0_moments: NodeMoments,
    pub q1_moments: NodeMoments,
    pub paths: Option<Vec<PathRecord>>,
    volumes: Option<(VolumeBins, Vec<Vec<f64>>)>,
}

impl SimulationResult {
    pub fn grid(&self) -> &TimeGrid {
        &self.grid
    }

    pub fn n_paths(&self) -> usize {
        self.x0_terminal.len()
    }

    pub fn volumes(&self) -> Option<(&VolumeBins, &Vec<Vec<f64>>)> {
        self.volumes.as_ref().map(|(b, v)| (b, v))
    }
}

struct Block {
    x0: Vec<f64>,
    x1: Vec<f64>,
    q1_max: Vec<f64>,
    checkpoints: Vec<Vec<f64>>,
    nu1: NodeMoments,
    r0: NodeMoments,
    q1: NodeMoments,
    paths: Vec<PathRecord>,
    volumes: Vec<Vec<f64>>,
}

struct Scratch {
    mu: Vec<f64>,
    noise: Vec<f64>,
    r0: Vec<f64>,
    tmp: Vec<f64>,
    q1: Vec<f64>,
    nu1: Vec<f64>,
    flow: Vec<f64>,
    price: Vec<f64>,
    s0: Vec<f64>,
    s1: Vec<f64>,
}

impl Scratch {
    fn new(n: usize) -> Self {
        let z = || vec![0.0; n];
        Scratch {
            mu: z(),
            noise: z(),
            r0: z(),
            tmp: z(),
            q1: z(),
            nu1: z(),
            flow: z(),
            price: z(),
            s0: z(),
            s1: z(),
        }
    }
}

pub fn simulate_market(
    tables: &KernelTables,
    params: &ModelParams,
    signal: &SignalParams,
    nu0: &[f64],
    cfg: &SimulationConfig,
) -> Result<SimulationResult> {
    cfg.validate()?;
    let grid = tables.grid();
    grid.check_len(nu0)?;
    let response = MinorResponse::new(tables, params, signal, nu0)?;
    let checkpoint_idx = cfg
        .checkpoints
        .iter()
        .map(|&t| {
            if !(0.0..=grid.horizon()).contains(&t) {
                return Err(Error::OutOfDomain {
                    t,
                    horizon: grid.horizon(),
                });
            }
            Ok((t / grid.dt()).round() as usize)
        })
        .collect::<Result<Vec<_>>>()?;
    let n_blocks = cfg.n_paths.div_ceil(BLOCK);
    let blocks = par::try_map_indexed(n_blocks, cfg.execution, |b| {
        let lo = b * BLOCK;
        let hi = (lo + BLOCK).min(cfg.n_paths);
        run_block(
            tables,
            params,
            signal,
            nu0,
            &response,
            cfg,
            &checkpoint_idx,
            lo..hi,
        )
    })?;

    let n = grid.len();
    let mut out = SimulationResult {
        grid: grid.clone(),
        nu0: nu0.to_vec(),
        q0: cumulative_trapezoid(nu0, grid.dt())
            .iter()
            .map(|c| params.q0 - c)
            .collect(),
        x0_terminal: Vec::with_capacity(cfg.n_paths),
        x1_terminal: Vec::with_capacity(cfg.n_paths),
        q1_max_abs: Vec::with_capacity(cfg.n_paths),
        q1_checkpoints: Vec::with_capacity(cfg.n_paths),
        nu1_moments: NodeMoments::new(n),
        r0_moments: NodeMoments::new(n),
        q1_moments: NodeMoments::new(n),
        paths: cfg.store_paths.then(Vec::new),
        volumes: cfg.volume_bins.clone().map(|b| (b, Vec::new())),
    };
    for blk in blocks {
        out.x0_terminal.extend(blk.x0);
        out.x1_terminal.extend(blk.x1);
        out.q1_max_abs.extend(blk.q1_max);
        out.q1_checkpoints.extend(blk.checkpoints);
        out.nu1_moments.merge(&blk.nu1);
        out.r0_moments.merge(&blk.r0);
        out.q1_moments.merge(&blk.q1);
        if let Some(p) = out.paths.as_mut() {
            p.extend(blk.paths);
        }
        if let Some((_, v)) = out.volumes.as_mut() {
            v.extend(blk.volumes);
        }
    }
    Ok(out)
}

#[allow(clippy::too_many_arguments)]
fn run_block(
    tables: &KernelTables,
    params: &ModelParams,
    signal: &SignalParams,
    nu0: &[f64],
    response: &MinorResponse,
    cfg: &SimulationConfig,
    checkpoint_idx: &[usize],
    range: std::ops::Range<usize>,
) -> Result<Block> {
    let grid = tables.grid();
    let n = grid.len();
    let dt = grid.dt();
    let mut blk = Block {
        x0: Vec::with_capacity(range.len()),
        x1: Vec::with_capacity(range.len()),
        q1_max: Vec::with_capacity(range.len()),
        checkpoints: Vec::with_capacity(range.len()),
        nu1: NodeMoments::new(n),
        r0: NodeMoments::new(n),
        q1: NodeMoments::new(n),
        paths: Vec::new(),
        volumes: Vec::new(),
    };
    let mut s = Scratch::new(n);
    for path in range {
        let mut rng = path_rng(cfg.seed, path as u64);
        fill_ou_path(signal, grid, &mut rng, &mut s.mu);
        fill_brownian(grid, &mut rng, &mut s.noise);
        response.r0_into(&s.mu, &mut s.r0);
        minor_strategy_into(tables, &s.r0, &mut s.tmp, &mut s.q1, &mut s.nu1);

        // permanent impact and signal drift, both cumulative trapezoids
        let (mut y, mut drift) = (0.0, 0.0);
        for i in 0..n {
            s.flow[i] = params.kappa0 * nu0[i] + params.kappa1 * s.nu1[i];
            if i > 0 {
                y += 0.5 * dt * (s.flow[i - 1] + s.flow[i]);
                drift += 0.5 * dt * (s.mu[i - 1] + s.mu[i]);
            }
            s.price[i] = signal.price0 + signal.sigma_m * s.noise[i] + drift - y;
            s.s0[i] = s.price[i] - params.lambda0 * nu0[i];
            s.s1[i] = s.price[i] - params.lambda1 * s.nu1[i];
        }
        for i in 0..n {
            s.tmp[i] = s.s0[i] * nu0[i];
        }
        let x0 = params.x0 + trapezoid(&s.tmp, dt);
        for i in 0..n {
            s.tmp[i] = s.s1[i] * s.nu1[i];
        }
        let x1 = params.x1 + trapezoid(&s.tmp, dt);
        if !(x0.is_finite() && x1.is_finite()) || s.nu1.iter().any(|v| !v.is_finite()) {
            return Err(Error::Numerical(format!(
                "non-finite values on path {path}"
            )));
        }

        blk.x0.push(x0);
        blk.x1.push(x1);
        blk.q1_max.push(TimeGrid::sup_norm(&s.q1));
        blk.checkpoints
            .push(checkpoint_idx.iter().map(|&i| s.q1[i]).collect());
        blk.nu1.push(&s.nu1);
        blk.r0.push(&s.r0);
        blk.q1.push(&s.q1);
        if let Some(bins) = &cfg.volume_bins {
            blk.volumes.push(bins.bin_volumes(dt, nu0, &s.nu1));
        }
        if cfg.store_paths {
            blk.paths.push(PathRecord {
                mu: s.mu.clone(),
                noise: s.noise.clone(),
                price: s.price.clone(),
                s0: s.s0.clone(),
                s1: s.s1.clone(),
                r0: s.r0.clone(),
                nu1: s.nu1.clone(),
                q1: s.q1.clone(),
            });
        }
    }
    Ok(blk)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::equilibrium::{benchmark_samples, expected_minor_rate, mu_bar_samples};
    use crate::model::PenaltySpec;
    use crate::riccati::solve_riccati;
    use approx::assert_abs_diff_eq;

    fn setup(sigma: f64, sigma_m: f64) -> (ModelParams, SignalParams, KernelTables) {
        let p = ModelParams::new(1.0, 1.0, 2.0, 2.0, 10.0, 10.0, 0.0, 0.0, 6.0).unwrap();
        let s = SignalParams::new(-0.5, 0.1, sigma, 100.0, sigma_m).unwrap();
        let g = TimeGrid::new(6.0, 601).unwrap();
        let t = KernelTables::new(
            solve_riccati(&p, &PenaltySpec::Constant { value: 1.0 }, &g).unwrap(),
        );
        (p, s, t)
    }

    #[test]
    fn impact_free_market() {
        let p = ModelParams::new(1.0, 1.0, 1e-300, 1e-300, 10.0, 10.0, 0.0, 0.0, 6.0).unwrap();
        let s = SignalParams::new(0.0, 0.1, 0.0, 100.0, 0.0).unwrap();
        let g = TimeGrid::new(6.0, 601).unwrap();
        let t = KernelTables::new(solve_riccati(&p, &PenaltySpec::Zero, &g).unwrap());
        let nu0 = g.sample(|x| 10.0 / 6.0 + 0.3 * (x - 3.0));
        let mut cfg = SimulationConfig::new(3, 1);
        cfg.store_paths = true;
        let res = simulate_market(&t, &p, &s, &nu0, &cfg).unwrap();
        let sq: Vec<f64> = nu0.iter().map(|v| v * v).collect();
        let want = 100.0 * 10.0 - g.integrate(&sq).unwrap();
        for (x, path) in res.x0_terminal.iter().zip(res.paths.as_ref().unwrap()) {
            assert_abs_diff_eq!(*x, want, epsilon = 1e-9);
            assert!(path.price.iter().all(|&v| (v - 100.0).abs() < 1e-12));
        }
        assert_abs_diff_eq!(res.q0[600], 0.0, epsilon = 1e-12);
    }

    #[test]
    fn stored_paths_reconcile() {
        let (p, s, t) = setup(1.5, 1.0);
        let g = t.grid().clone();
        let nu0 = benchmark_samples(&p, &s, &g);
        let mut cfg = SimulationConfig::new(5, 11);
        cfg.store_paths = true;
        let res = simulate_market(&t, &p, &s, &nu0, &cfg).unwrap();
        for (k, path) in res.paths.as_ref().unwrap().iter().enumerate() {
            let sn: Vec<f64> = path.s0.iter().zip(&nu0).map(|(a, b)| a * b).collect();
            let x0 = p.x0 + g.integrate(&sn).unwrap();
            assert!((x0 - res.x0_terminal[k]).abs() <= 1e-10 * x0.abs());
            // P = M0 + sigmaM W + int mu - Y
            let flow: Vec<f64> = nu0
                .iter()
                .zip(&path.nu1)
                .map(|(a, b)| 2.0 * a + 2.0 * b)
                .collect();
            let y = g.cumulative(&flow).unwrap();
            let a = g.cumulative(&path.mu).unwrap();
            for i in 0..g.len() {
                let want = 100.0 + path.noise[i] + a[i] - y[i];
                assert_abs_diff_eq!(path.price[i], want, epsilon = 1e-9);
            }
        }
    }

    #[test]
    fn path_is_independent_of_batch_size_and_mode() {
        let (p, s, t) = setup(1.5, 1.0);
        let nu0 = benchmark_samples(&p, &s, t.grid());
        let mut small = SimulationConfig::new(3, 99);
        small.store_paths = true;
        let mut big = SimulationConfig::new(70, 99);
        big.store_paths = true;
        big.execution = Execution::Sequential;
        let a = simulate_market(&t, &p, &s, &nu0, &small).unwrap();
        let b = simulate_market(&t, &p, &s, &nu0, &big).unwrap();
        assert_eq!(a.paths.as_ref().unwrap()[2], b.paths.as_ref().unwrap()[2]);
        assert_eq!(a.x0_terminal[..3], b.x0_terminal[..3]);
        big.execution = Execution::Parallel;
        let c = simulate_market(&t, &p, &s, &nu0, &big).unwrap();
        assert_eq!(b.nu1_moments, c.nu1_moments);
        assert_eq!(b.x1_terminal, c.x1_terminal);
    }

    #[test]
    fn cross_sectional_mean_tracks_expected_rate() {
        let (p, s, t) = setup(1.5, 1.0);
        let nu0 = benchmark_samples(&p, &s, t.grid());
        let res = simulate_market(&t, &p, &s, &nu0, &SimulationConfig::new(800, 5)).unwrap();
        let expected = expected_minor_rate(&t, &p, &nu0, &mu_bar_samples(&s, t.grid())).unwrap();
        let se = res.nu1_moments.std_error();
        for i in (0..601).step_by(50) {
            let d = (res.nu1_moments.mean()[i] - expected[i]).abs();
            assert!(d <= 4.0 * se[i] + 1e-9, "node {i}: {d} vs se {}", se[i]);
        }
    }

    #[test]
    fn rejects_bad_inputs() {
        let (p, s, t) = setup(1.5, 1.0);
        let nu0 = vec![1.0; 601];
        assert!(simulate_market(&t, &p, &s, &nu0, &SimulationConfig::new(0, 1)).is_err());
        assert!(simulate_market(&t, &p, &s, &nu0[..5], &SimulationConfig::new(1, 1)).is_err());
        let mut cfg = SimulationConfig::new(1, 1);
        cfg.checkpoints = vec![7.0];
        assert!(simulate_market(&t, &p, &s, &nu0, &cfg).is_err());
    }
}
