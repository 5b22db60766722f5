//! Kernels `K(t,s) = xi^-_t xi^+_s` and `G(t,s) = xi^+_t xi^+_s I(t ^ s)`
//! with `I(t) = int_0^t (xi^-)^2`, and the integral operators built on them.

use crate::error::Result;
use crate::grid::{cumulative_trapezoid, reverse_cumulative_trapezoid, TimeGrid};
use crate::model::ModelParams;
use crate::riccati::RiccatiSolution;

/// Node-wise kernel lookups plus `O(N)` operator applications.
#[derive(Debug, Clone)]
pub struct KernelTables {
    riccati: RiccatiSolution,
}

impl KernelTables {
    pub fn new(riccati: RiccatiSolution) -> Self {
        KernelTables { riccati }
    }

    pub fn riccati(&self) -> &RiccatiSolution {
        &self.riccati
    }

    pub fn grid(&self) -> &TimeGrid {
        self.riccati.grid()
    }

    /// `K(t_i, t_j)`; only meaningful for `j >= i`.
    pub fn k_node(&self, i: usize, j: usize) -> f64 {
        self.riccati.xi_minus[i] * self.riccati.xi_plus[j]
    }

    pub fn g_node(&self, i: usize, j: usize) -> f64 {
        let r = &self.riccati;
        r.xi_plus[i] * r.xi_plus[j] * r.cum_xi_minus_sq[i.min(j)]
    }

    /// `K(t, s)` off the grid, linear interpolation of `xi^-` and `xi^+`.
    pub fn k_at(&self, t: f64, s: f64) -> f64 {
        let r = &self.riccati;
        interp(r.grid(), &r.xi_minus, t) * interp(r.grid(), &r.xi_plus, s)
    }

    /// `G(t, s)` off the grid, linear interpolation of each factor.
    pub fn g_at(&self, t: f64, s: f64) -> f64 {
        let r = &self.riccati;
        let g = r.grid();
        interp(g, &r.xi_plus, t)
            * interp(g, &r.xi_plus, s)
            * interp(g, &r.cum_xi_minus_sq, t.min(s))
    }

    /// `(G psi)(t) = int_0^T G(t,s) psi(s) ds`.
    ///
    /// Splits the integral at `t` so that each piece is a cumulative
    /// trapezoid; the result equals the row-wise trapezoid of the dense kernel.
    pub fn apply_g(&self, psi: &[f64]) -> Result<Vec<f64>> {
        let grid = self.grid();
        grid.check_len(psi)?;
        let r = &self.riccati;
        let dt = grid.dt();
        let xp_psi: Vec<f64> = r.xi_plus.iter().zip(psi).map(|(x, p)| x * p).collect();
        let xp_i_psi: Vec<f64> = xp_psi
            .iter()
            .zip(&r.cum_xi_minus_sq)
            .map(|(a, i)| a * i)
            .collect();
        let tail = reverse_cumulative_trapezoid(&xp_psi, dt);
        let head = cumulative_trapezoid(&xp_i_psi, dt);
        Ok((0..grid.len())
            .map(|i| r.xi_plus[i] * (r.cum_xi_minus_sq[i] * tail[i] + head[i]))
            .collect())
    }

    /// `(K1* psi)(t) = int_t^T K(t,s) psi(s) ds`.
    pub fn apply_k1_star(&self, psi: &[f64]) -> Result<Vec<f64>> {
        let grid = self.grid();
        grid.check_len(psi)?;
        let r = &self.riccati;
        let xp_psi: Vec<f64> = r.xi_plus.iter().zip(psi).map(|(x, p)| x * p).collect();
        let tail = reverse_cumulative_trapezoid(&xp_psi, grid.dt());
        Ok(tail.iter().zip(&r.xi_minus).map(|(a, x)| a * x).collect())
    }

    /// `(K1 psi)(t) = int_0^t K(s,t) psi(s) ds = xi^+_t int_0^t xi^-_s psi(s) ds`.
    pub fn apply_k1(&self, psi: &[f64]) -> Result<Vec<f64>> {
        let grid = self.grid();
        grid.check_len(psi)?;
        let r = &self.riccati;
        let xm_psi: Vec<f64> = r.xi_minus.iter().zip(psi).map(|(x, p)| x * p).collect();
        let head = cumulative_trapezoid(&xm_psi, grid.dt());
        Ok(head.iter().zip(&r.xi_plus).map(|(a, x)| a * x).collect())
    }

    /// `(S psi)(t) = (1/(2 lambda0)) int_0^t psi + (kappa1/(4 lambda1 lambda0)) (G psi)(t)`.
    pub fn apply_s(&self, params: &ModelParams, psi: &[f64]) -> Result<Vec<f64>> {
        let g_psi = self.apply_g(psi)?;
        let prim = self.grid().cumulative(psi)?;
        let a = 1.0 / (2.0 * params.lambda0);
        let b = params.kappa1 / (4.0 * params.lambda1 * params.lambda0);
        Ok(prim
            .iter()
            .zip(&g_psi)
            .map(|(p, g)| a * p + b * g)
            .collect())
    }

    /// `G` sampled on an evenly spaced coarse sub-grid of `n` points (inspection only).
    pub fn dense_g(&self, n: usize) -> Result<(Vec<f64>, Vec<Vec<f64>>)> {
        let coarse = TimeGrid::new(self.grid().horizon(), n)?;
        let t = coarse.nodes().to_vec();
        let rows = t
            .iter()
            .map(|&ti| t.iter().map(|&sj| self.g_at(ti, sj)).collect())
            .collect();
        Ok((t, rows))
    }
}

fn interp(grid: &TimeGrid, values: &[f64], t: f64) -> f64 {
    let n = grid.len();
    let x = (t / grid.dt()).clamp(0.0, (n - 1) as f64);
    let i = (x.floor() as usize).min(n - 2);
    let w = x - i as f64;
    values[i] * (1.0 - w) + values[i + 1] * w
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::PenaltySpec;
    use crate::riccati::solve_riccati;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    fn flat_tables(horizon: f64, n: usize) -> KernelTables {
        // 2 alpha == kappa1 switches the gain off: K = 1, G = min(t, s)
        let p = ModelParams::new(1.0, 1.0, 2.0, 2.0, 1.0, 10.0, 0.0, 0.0, horizon).unwrap();
        let g = TimeGrid::new(horizon, n).unwrap();
        KernelTables::new(solve_riccati(&p, &PenaltySpec::Zero, &g).unwrap())
    }

    fn tables(alpha: f64, phi: PenaltySpec, n: usize) -> (ModelParams, KernelTables) {
        let p = ModelParams::new(1.0, 1.0, 2.0, 2.0, alpha, 10.0, 0.0, 0.0, 6.0).unwrap();
        let g = TimeGrid::new(6.0, n).unwrap();
        (p, KernelTables::new(solve_riccati(&p, &phi, &g).unwrap()))
    }

    /// Plain row-wise trapezoid of the dense kernel.
    fn dense_apply(t: &KernelTables, psi: &[f64]) -> Vec<f64> {
        let n = psi.len();
        let w = t.grid().weights();
        (0..n)
            .map(|i| (0..n).map(|j| w[j] * t.g_node(i, j) * psi[j]).sum())
            .collect()
    }

    #[test]
    fn apply_g_flat_kernel() {
        let t = flat_tables(1.0, 1001);
        let one = vec![1.0; 1001];
        let out = t.apply_g(&one).unwrap();
        for (i, &s) in t.grid().nodes().iter().enumerate() {
            assert_abs_diff_eq!(out[i], s - s * s / 2.0, epsilon = 1e-6);
        }
        assert!(t
            .apply_g(&vec![0.0; 1001])
            .unwrap()
            .iter()
            .all(|&v| v == 0.0));
        assert!(t.apply_g(&one[..10]).is_err());
    }

    #[test]
    fn apply_k1_star_flat_kernel() {
        let t = flat_tables(3.0, 301);
        let out = t.apply_k1_star(&vec![1.0; 301]).unwrap();
        for (i, &s) in t.grid().nodes().iter().enumerate() {
            assert_abs_diff_eq!(out[i], 3.0 - s, epsilon = 1e-12);
        }
        assert_eq!(out[300], 0.0);
    }

    #[test]
    fn apply_s_flat_kernel() {
        let t = flat_tables(1.0, 1001);
        let p = ModelParams::new(1.0, 1.0, 2.0, 2.0, 1.0, 10.0, 0.0, 0.0, 1.0).unwrap();
        let out = t.apply_s(&p, &vec![1.0; 1001]).unwrap();
        for (i, &s) in t.grid().nodes().iter().enumerate() {
            assert_abs_diff_eq!(out[i], s / 2.0 + (s - s * s / 2.0) / 2.0, epsilon = 1e-6);
        }
    }

    #[test]
    fn fast_apply_equals_dense_trapezoid() {
        let phi = PenaltySpec::Constant { value: 1.0 };
        let (_, t) = tables(50.0, phi, 301);
        let psi = t.grid().sample(|s| (1.3 * s).sin() + 0.2 * s);
        let fast = t.apply_g(&psi).unwrap();
        let dense = dense_apply(&t, &psi);
        for (a, b) in fast.iter().zip(&dense) {
            assert!((a - b).abs() <= 1e-12 * b.abs().max(1.0));
        }
    }

    #[test]
    fn kernel_values() {
        let (_, t) = tables(10.0, PenaltySpec::Zero, 201);
        for i in (0..201).step_by(17) {
            for j in (0..201).step_by(13) {
                assert!((t.g_node(i, j) - t.g_node(j, i)).abs() <= 1e-12);
                if j >= i {
                    assert!(t.k_node(i, j) > 0.0);
                }
            }
            assert_eq!(t.g_node(0, i), 0.0);
        }
        let nodes = t.grid().nodes();
        assert_abs_diff_eq!(
            t.g_at(nodes[40], nodes[120]),
            t.g_node(40, 120),
            epsilon = 1e-12
        );
        assert_abs_diff_eq!(t.k_at(nodes[40], nodes[40]), 1.0, epsilon = 1e-12);
        // off-node query sits between its neighbours
        let mid = t.g_at(nodes[40], 0.5 * (nodes[120] + nodes[121]));
        let (lo, hi) = (t.g_node(40, 120), t.g_node(40, 121));
        assert!(mid >= lo.min(hi) - 1e-15 && mid <= lo.max(hi) + 1e-15);
    }

    #[test]
    fn boundary_values_are_exact() {
        let (_, t) = tables(10.0, PenaltySpec::Constant { value: 3.0 }, 401);
        let psi = t.grid().sample(|s| s.cos() + 2.0);
        assert_eq!(t.apply_g(&psi).unwrap()[0], 0.0);
        assert_eq!(t.apply_k1_star(&psi).unwrap()[400], 0.0);
        assert_eq!(t.apply_k1(&psi).unwrap()[0], 0.0);
    }

    #[test]
    fn k1_is_adjoint_of_k1_star() {
        let (_, t) = tables(10.0, PenaltySpec::Zero, 2001);
        let f = t.grid().sample(|s| (0.7 * s).cos());
        let h = t.grid().sample(|s| 1.0 + s * s / 10.0);
        let lhs = t.grid().inner(&t.apply_k1_star(&f).unwrap(), &h).unwrap();
        let rhs = t.grid().inner(&f, &t.apply_k1(&h).unwrap()).unwrap();
        assert!((lhs - rhs).abs() <= 1e-5 * lhs.abs().max(1.0));
    }

    proptest! {
        #[test]
        fn g_is_positive(coeffs in prop::collection::vec(-3.0f64..3.0, 8)) {
            let (_, t) = tables(10.0, PenaltySpec::Constant { value: 1.0 }, 241);
            let psi = t.grid().sample(|s| {
                coeffs.iter().enumerate().map(|(k, c)| c * (k as f64 * s).cos()).sum()
            });
            let g_psi = t.apply_g(&psi).unwrap();
            prop_assert!(t.grid().inner(&psi, &g_psi).unwrap() >= -1e-8);
        }
    }
}
