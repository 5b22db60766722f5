use std::fs;
use std::io::Write;

use stackelberg_core::config::MajorMethod;
use stackelberg_core::equilibrium::{
    benchmark_samples, expected_minor_rate, major_inventory, mu_bar_samples, solve_major,
    solve_major_resolvent, MajorStrategy,
};
use stackelberg_core::operators::{build_degenerate_with, spectrum_phi0, KernelTables};
use stackelberg_core::report::{self, Cell, CsvWriter};
use stackelberg_core::sim::{
    savings_bps, simulate_market, summarize_savings, volume_curve, SimulationConfig,
    SimulationResult,
};
use stackelberg_core::verify::{major_optimality, minor_optimality, operator_ode_residual};
use stackelberg_core::{
    riccati_closed_form_phi0, solve_riccati, Error, Execution, PenaltySpec, RunConfig, TimeGrid,
};

use crate::manifest::Recorder;
use crate::{Command, Common, Failure, Figure};

const BASE: &str = include_str!("../../../configs/base.toml");
const MULTI_DAY: &str = include_str!("../../../configs/multi_day.toml");
const SINGLE_DAY: &str = include_str!("../../../configs/single_day.toml");
const SAVINGS: &str = include_str!("../../../configs/savings.toml");
const VOLUME: &str = include_str!("../../../configs/volume.toml");

type Outcome<T = ()> = Result<T, Failure>;

pub fn run(common: &Common, command: &Command) -> Outcome {
    let threads = match common.threads {
        Some(0) => {
            return Err(Error::Config {
                section: "cli".into(),
                key: "threads".into(),
                message: "must be at least 1".into(),
            }
            .into())
        }
        Some(n) => {
            rayon::ThreadPoolBuilder::new()
                .num_threads(n)
                .build_global()
                .map_err(|e| Failure::Io(e.to_string()))?;
            n
        }
        None => rayon::current_num_threads(),
    };

    let (text, config_path) = match command {
        Command::Reproduce { figure } => (
            canned(*figure).to_string(),
            Some(format!("<canned:{figure:?}>")),
        ),
        _ => match &common.config {
            Some(path) => {
                let text = fs::read_to_string(path).map_err(|e| Error::Config {
                    section: "<file>".into(),
                    key: path.display().to_string(),
                    message: format!("cannot read config: {e}"),
                })?;
                (text, Some(path.display().to_string()))
            }
            None => (BASE.to_string(), None),
        },
    };
    let cfg = apply_flags(RunConfig::parse(&text)?, common)?;

    let mut rec = Recorder::new(&common.out)?;
    let name = match command {
        Command::Riccati => {
            riccati(&cfg, &mut rec)?;
            "riccati".to_string()
        }
        Command::Spectrum => {
            spectrum(&cfg, &mut rec)?;
            "spectrum".to_string()
        }
        Command::Kernel { points } => {
            kernel(&cfg, *points, &mut rec)?;
            "kernel".to_string()
        }
        Command::Solve => {
            solve(&cfg, &mut rec)?;
            "solve".to_string()
        }
        Command::Simulate => {
            simulate(&cfg, &mut rec)?;
            "simulate".to_string()
        }
        Command::Compare => {
            compare(&cfg, &mut rec)?;
            "compare".to_string()
        }
        Command::Volume => {
            volume(&cfg, &mut rec)?;
            "volume".to_string()
        }
        Command::Verify => {
            let failed = verify(&cfg, &mut rec)?;
            if !failed.is_empty() {
                rec.finish("verify".into(), config_path, cfg, threads)?;
                return Err(Failure::Verification(failed.join(", ")));
            }
            "verify".to_string()
        }
        Command::Reproduce { figure } => {
            match figure {
                Figure::Fig1 | Figure::Fig2 | Figure::Fig3 => {
                    solve(&cfg, &mut rec)?;
                    simulate(&cfg, &mut rec)?;
                }
                Figure::Fig4 => compare(&cfg, &mut rec)?,
                Figure::Fig5 => volume(&cfg, &mut rec)?,
            }
            format!("reproduce {figure:?}").to_lowercase()
        }
    };
    rec.finish(name, config_path, cfg, threads)?;
    Ok(())
}

fn canned(figure: Figure) -> &'static str {
    match figure {
        Figure::Fig1 => MULTI_DAY,
        Figure::Fig2 | Figure::Fig3 => SINGLE_DAY,
        Figure::Fig4 => SAVINGS,
        Figure::Fig5 => VOLUME,
    }
}

fn flag_error(key: &str, message: impl Into<String>) -> Failure {
    Error::Config {
        section: "cli".into(),
        key: key.into(),
        message: message.into(),
    }
    .into()
}

fn apply_flags(mut cfg: RunConfig, common: &Common) -> Outcome<RunConfig> {
    if let Some(seed) = common.seed {
        cfg.simulation.seed = seed;
    }
    if let Some(n) = common.paths {
        if n == 0 {
            return Err(flag_error("paths", "must be at least 1"));
        }
        cfg.simulation.n_paths = n;
    }
    if let Some(n) = common.rank {
        if n == 0 {
            return Err(flag_error("rank", "must be at least 1"));
        }
        cfg.numerics.rank = n;
    }
    if let Some(n) = common.grid {
        TimeGrid::new(cfg.model.horizon, n).map_err(|e| flag_error("grid", e.to_string()))?;
        cfg.n_points = n;
    }
    Ok(cfg)
}

fn tables(cfg: &RunConfig, rec: &mut Recorder) -> Outcome<KernelTables> {
    let grid = cfg.grid()?;
    let sol = rec.phase("riccati", || solve_riccati(&cfg.model, &cfg.penalty, &grid))?;
    Ok(KernelTables::new(sol))
}

fn major(cfg: &RunConfig, t: &KernelTables, rec: &mut Recorder) -> Outcome<MajorStrategy> {
    let m = match cfg.numerics.method {
        MajorMethod::Degenerate => {
            let op = rec.phase("degenerate", || {
                build_degenerate_with(t, &cfg.model, cfg.numerics.rank, Execution::Parallel)
            })?;
            rec.phase("major", || solve_major(&op, t, &cfg.model, &cfg.signal))?
        }
        MajorMethod::Resolvent => {
            let spec = rec.phase("spectrum", || {
                spectrum_phi0(&cfg.model, cfg.numerics.resolvent_terms)
            })?;
            rec.phase("major", || {
                solve_major_resolvent(&spec, t, &cfg.model, &cfg.signal)
            })?
        }
    };
    Ok(m)
}

fn require_zero_penalty(cfg: &RunConfig, what: &str) -> Outcome {
    if cfg.penalty.is_zero() {
        Ok(())
    } else {
        Err(Error::Config {
            section: "penalty".into(),
            key: "variant".into(),
            message: format!("{what} is only available for variant = \"zero\""),
        }
        .into())
    }
}

fn sim_config(cfg: &RunConfig, seed: u64) -> SimulationConfig {
    let mut sim = SimulationConfig::new(cfg.simulation.n_paths, seed);
    sim.store_paths = cfg.simulation.store_paths;
    sim.checkpoints = cfg.simulation.checkpoints.clone();
    sim
}

fn riccati(cfg: &RunConfig, rec: &mut Recorder) -> Outcome {
    let t = tables(cfg, rec)?;
    rec.csv("riccati.csv", |w| report::write_riccati(w, t.riccati()))?;
    Ok(())
}

fn spectrum(cfg: &RunConfig, rec: &mut Recorder) -> Outcome {
    require_zero_penalty(cfg, "the explicit spectrum")?;
    let spec = rec.phase("spectrum", || {
        spectrum_phi0(&cfg.model, cfg.numerics.resolvent_terms)
    })?;
    rec.csv("spectrum.csv", |w| report::write_spectrum(w, &spec))?;
    Ok(())
}

fn kernel(cfg: &RunConfig, points: usize, rec: &mut Recorder) -> Outcome {
    if points < 2 {
        return Err(flag_error("points", "need at least 2 points"));
    }
    let t = tables(cfg, rec)?;
    let (nodes, rows) = t.dense_g(points)?;
    rec.csv("kernel.csv", |w| report::write_kernel(w, &nodes, &rows))?;
    Ok(())
}

fn solve(cfg: &RunConfig, rec: &mut Recorder) -> Outcome {
    let t = tables(cfg, rec)?;
    let m = major(cfg, &t, rec)?;
    let grid = t.grid();
    let bm = benchmark_samples(&cfg.model, &cfg.signal, grid);
    let q_star = major_inventory(&cfg.model, grid, &m.nu0_hat)?;
    let q_bm = major_inventory(&cfg.model, grid, &bm)?;
    let mu_bar = mu_bar_samples(&cfg.signal, grid);
    let table = report::StrategyTable {
        t: grid.nodes(),
        nu0_hat: &m.nu0_hat,
        nu0_bm: &bm,
        q0_star: &q_star,
        q0_bm: &q_bm,
        mu_bar: &mu_bar,
    };
    rec.csv("strategy.csv", |w| report::write_strategy(w, &table))?;
    rec.csv("solve_summary.csv", |w| report::write_major_summary(w, &m))?;
    println!(
        "rank {} eta_n {} fuel_error {:.3e} fredholm_residual {:.3e}",
        m.rank,
        report::fmt_f64(m.eta_n),
        m.fuel_error,
        m.fredholm_residual
    );
    Ok(())
}

fn run_sim(
    cfg: &RunConfig,
    t: &KernelTables,
    nu0: &[f64],
    sim: &SimulationConfig,
    rec: &mut Recorder,
) -> Outcome<SimulationResult> {
    Ok(rec.phase("simulate", || {
        simulate_market(t, &cfg.model, &cfg.signal, nu0, sim)
    })?)
}

fn simulate(cfg: &RunConfig, rec: &mut Recorder) -> Outcome {
    let t = tables(cfg, rec)?;
    let m = major(cfg, &t, rec)?;
    let sim = sim_config(cfg, cfg.simulation.seed);
    let res = run_sim(cfg, &t, &m.nu0_hat, &sim, rec)?;
    if res.paths.is_some() {
        rec.csv("paths.csv", |w| report::write_paths(w, &res))?;
    }
    rec.csv("summary.csv", |w| report::write_terminal_cash(w, &res))?;
    rec.csv("moments.csv", |w| report::write_moments(w, &res))?;
    if !sim.checkpoints.is_empty() {
        rec.csv("checkpoints.csv", |w| {
            let mut csv = CsvWriter::new(w, &["path_id", "t", "Q1", "max_abs_Q1"])?;
            for (k, row) in res.q1_checkpoints.iter().enumerate() {
                for (&tc, &q) in sim.checkpoints.iter().zip(row) {
                    csv.row(&[
                        Cell::I(k as u64),
                        Cell::F(tc),
                        Cell::F(q),
                        Cell::F(res.q1_max_abs[k]),
                    ])?;
                }
            }
            csv.finish()
        })?;
    }
    Ok(())
}

fn compare(cfg: &RunConfig, rec: &mut Recorder) -> Outcome {
    let t = tables(cfg, rec)?;
    let m = major(cfg, &t, rec)?;
    let bm = benchmark_samples(&cfg.model, &cfg.signal, t.grid());
    let mut sim = sim_config(cfg, cfg.simulation.seed);
    sim.store_paths = false;
    let opt = run_sim(cfg, &t, &m.nu0_hat, &sim, rec)?;
    let base = run_sim(cfg, &t, &bm, &sim, rec)?;
    let bps = savings_bps(&opt, &base)?;
    let summary = summarize_savings(&bps);
    rec.csv("savings.csv", |w| report::write_savings(w, &bps, &summary))?;
    println!(
        "savings: mean {:.4} bps, median {:.4} bps, t = {:.2}, {} valid paths",
        summary.mean, summary.median, summary.t_stat, summary.n_valid
    );
    Ok(())
}

fn volume(cfg: &RunConfig, rec: &mut Recorder) -> Outcome {
    let t = tables(cfg, rec)?;
    let bins = cfg.volume_bins(t.grid())?.ok_or_else(|| Error::Config {
        section: "simulation".into(),
        key: "bin_minutes".into(),
        message: "missing key (required by volume)".into(),
    })?;
    let m = major(cfg, &t, rec)?;
    let mut sim = sim_config(cfg, cfg.simulation.seed);
    sim.store_paths = false;
    sim.volume_bins = Some(bins);
    let res = run_sim(cfg, &t, &m.nu0_hat, &sim, rec)?;
    let curve = volume_curve(&res)?;
    let mpu = cfg.simulation.minutes_per_unit;
    rec.csv("volume.csv", |w| report::write_volume(w, &curve, mpu))?;
    rec.csv("volume_median.csv", |w| {
        report::write_volume_median(w, &curve, mpu)
    })?;
    println!(
        "median log-volume: first {:.4}, last {:.4}, middle third {:.4}, U-shaped: {}",
        curve.median[0],
        curve.median[curve.median.len() - 1],
        curve.middle_third_median(),
        curve.is_u_shaped()
    );
    Ok(())
}

struct Check {
    name: &'static str,
    statistic: f64,
    threshold: f64,
    pass: bool,
}

fn at_most(name: &'static str, statistic: f64, threshold: f64) -> Check {
    Check {
        name,
        statistic,
        threshold,
        pass: statistic <= threshold,
    }
}

/// Runs the oracle battery and returns the names of failed oracles.
fn verify(cfg: &RunConfig, rec: &mut Recorder) -> Outcome<Vec<&'static str>> {
    let t = tables(cfg, rec)?;
    let sol = t.riccati();
    let grid = t.grid();
    let mut checks = Vec::new();

    let recip = sol
        .xi_plus
        .iter()
        .zip(&sol.xi_minus)
        .map(|(a, b)| (a * b - 1.0).abs())
        .fold(0.0, f64::max);
    checks.push(at_most("riccati_reciprocal", recip, 1e-10));
    let terminal = (sol.r1[sol.r1.len() - 1] - cfg.model.riccati_terminal()).abs();
    checks.push(at_most("riccati_terminal", terminal, 1e-12));
    if cfg.penalty == PenaltySpec::Zero {
        let exact = riccati_closed_form_phi0(&cfg.model, grid)?;
        let err = sol
            .r1
            .iter()
            .zip(&exact)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        checks.push(at_most("riccati_closed_form", err, 1e-8));
    }

    let psi = grid.sample(|s| (0.7 * s).cos() + 0.1 * s);
    let (rg, rk) = operator_ode_residual(&t, &psi)?;
    checks.push(at_most("operator_ode_residual", rg.max(rk), 1e-4));
    let fine = KernelTables::new(solve_riccati(
        &cfg.model,
        &cfg.penalty,
        &TimeGrid::new(cfg.model.horizon, 2 * grid.len() - 1)?,
    )?);
    let fine_psi = fine.grid().sample(|s| (0.7 * s).cos() + 0.1 * s);
    let (fg, fk) = operator_ode_residual(&fine, &fine_psi)?;
    let ratio = rg.max(rk) / fg.max(fk);
    checks.push(Check {
        name: "operator_ode_order",
        statistic: ratio,
        threshold: 3.0,
        pass: (3.0..=5.0).contains(&ratio),
    });

    let m = major(cfg, &t, rec)?;
    checks.push(at_most(
        "fuel_error",
        m.fuel_error,
        1e-6 * cfg.model.q0.abs().max(1.0),
    ));
    checks.push(at_most("fredholm_residual", m.fredholm_residual, 1e-3));

    let seed = cfg.simulation.seed;
    let opt = rec.phase("major_optimality", || {
        major_optimality(
            &m.nu0_hat,
            &t,
            &cfg.model,
            &cfg.signal,
            200,
            50,
            (0.01, 0.1),
            seed,
            Execution::Parallel,
        )
    })?;
    checks.push(Check {
        name: "major_perturbations_beaten",
        statistic: opt.n_beaten as f64,
        threshold: opt.n_perturbations as f64,
        pass: opt.n_beaten == opt.n_perturbations,
    });
    checks.push(at_most("major_gateaux", opt.gateaux_max, 1e-4));

    let minor = rec.phase("minor_optimality", || {
        minor_optimality(
            &t,
            &cfg.model,
            &cfg.signal,
            &m.nu0_hat,
            cfg.simulation.n_paths,
            20,
            seed,
            Execution::Parallel,
        )
    })?;
    let worst = minor
        .iter()
        .map(|o| -o.mean_gain / o.std_error.max(f64::MIN_POSITIVE))
        .fold(f64::NEG_INFINITY, f64::max);
    checks.push(Check {
        name: "minor_perturbation_se",
        statistic: worst,
        threshold: 3.0,
        pass: minor.iter().all(|o| o.passes(3.0)),
    });

    let sim = SimulationConfig::new(cfg.simulation.n_paths, seed);
    let res = run_sim(cfg, &t, &m.nu0_hat, &sim, rec)?;
    let mu_bar = mu_bar_samples(&cfg.signal, grid);
    let exact = expected_minor_rate(&t, &cfg.model, &m.nu0_hat, &mu_bar)?;
    let se = res.nu1_moments.std_error();
    let worst = res
        .nu1_moments
        .mean()
        .iter()
        .zip(&se)
        .zip(&exact)
        .map(|((a, s), e)| (a - e).abs() / (s + 1e-9 * (1.0 + e.abs()) / 3.0))
        .fold(0.0, f64::max);
    checks.push(at_most("minor_mean_rate_se", worst, 3.0));

    rec.csv("verify.csv", |w| {
        let mut csv = CsvWriter::new(w, &["oracle", "statistic", "threshold", "result"])?;
        for c in &checks {
            csv.row(&[
                Cell::S(c.name.into()),
                Cell::F(c.statistic),
                Cell::F(c.threshold),
                Cell::S(if c.pass { "pass" } else { "fail" }.into()),
            ])?;
        }
        csv.finish()
    })?;
    let mut stdout = std::io::stdout().lock();
    for c in &checks {
        writeln!(
            stdout,
            "{:<28} {:>12.4e} {:>12.4e} {}",
            c.name,
            c.statistic,
            c.threshold,
            if c.pass { "pass" } else { "FAIL" }
        )?;
    }
    Ok(checks.iter().filter(|c| !c.pass).map(|c| c.name).collect())
}
