//! Exact-transition sampling of the OU signal and per-path random streams.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::grid::TimeGrid;
use crate::model::SignalParams;

/// Random stream for path `path` under `seed`; independent of how many paths run.
pub fn path_rng(seed: u64, path: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(path);
    rng
}

/// `mu_{t+d} = mu_t e^{-beta d} + sigma sqrt((1 - e^{-2 beta d}) / (2 beta)) Z`, started at `m0`.
pub fn simulate_ou_path<R: Rng + ?Sized>(
    signal: &SignalParams,
    grid: &TimeGrid,
    rng: &mut R,
) -> Vec<f64> {
    let mut out = vec![0.0; grid.len()];
    fill_ou_path(signal, grid, rng, &mut out);
    out
}

pub(crate) fn fill_ou_path<R: Rng + ?Sized>(
    signal: &SignalParams,
    grid: &TimeGrid,
    rng: &mut R,
    out: &mut [f64],
) {
    let decay = (-signal.beta * grid.dt()).exp();
    let sd = signal.sigma * ((1.0 - decay * decay) / (2.0 * signal.beta)).sqrt();
    out[0] = signal.m0;
    for i in 1..out.len() {
        let z: f64 = if sd > 0.0 {
            rng.sample(StandardNormal)
        } else {
            0.0
        };
        out[i] = out[i - 1] * decay + sd * z;
    }
}

/// Standard Brownian motion on the grid, `W_0 = 0`.
pub(crate) fn fill_brownian<R: Rng + ?Sized>(grid: &TimeGrid, rng: &mut R, out: &mut [f64]) {
    let sd = grid.dt().sqrt();
    out[0] = 0.0;
    for i in 1..out.len() {
        let z: f64 = rng.sample(StandardNormal);
        out[i] = out[i - 1] + sd * z;
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn deterministic_without_noise() {
        let s = SignalParams::new(-0.5, 0.1, 0.0, 100.0, 1.0).unwrap();
        let g = TimeGrid::new(6.0, 61).unwrap();
        let path = simulate_ou_path(&s, &g, &mut path_rng(1, 0));
        for (i, &t) in g.nodes().iter().enumerate() {
            assert!((path[i] - s.mean(t)).abs() <= 1e-14);
        }
    }

    #[test]
    fn moments_match_transition_law() {
        let s = SignalParams::new(-0.5, 0.1, 4.0, 100.0, 1.0).unwrap();
        let g = TimeGrid::new(6.0, 31).unwrap();
        let n = 10_000;
        let finals: Vec<f64> = (0..n)
            .map(|p| {
                *simulate_ou_path(&s, &g, &mut path_rng(7, p))
                    .last()
                    .unwrap()
            })
            .collect();
        let (mean, sd) = crate::sim::stats::mean_sd(&finals);
        let var_exact = 16.0 * (1.0 - (-1.2f64).exp()) / 0.2;
        let se = (var_exact / n as f64).sqrt();
        assert!((mean - s.mean(6.0)).abs() <= 3.0 * se);
        // sd of the sample variance for a Gaussian is var * sqrt(2/(n-1))
        let var_se = var_exact * (2.0 / (n as f64 - 1.0)).sqrt();
        assert!((sd * sd - var_exact).abs() <= 3.0 * var_se);
    }

    #[test]
    fn streams_are_reproducible_and_distinct() {
        let s = SignalParams::new(0.0, 1.0, 1.0, 100.0, 1.0).unwrap();
        let g = TimeGrid::new(1.0, 11).unwrap();
        let a = simulate_ou_path(&s, &g, &mut path_rng(3, 5));
        let b = simulate_ou_path(&s, &g, &mut path_rng(3, 5));
        let c = simulate_ou_path(&s, &g, &mut path_rng(3, 6));
        assert_eq!(a, b);
        assert_ne!(a, c);
    }
}
