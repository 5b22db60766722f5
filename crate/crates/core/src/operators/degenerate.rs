//! Rank-n approximation `G_n psi = sum_i a_i <b_i, psi>` with `b_i = G a_i`
//! on the cosine basis, and the closed-form inverse of `I + c G_n`.

use nalgebra::{DMatrix, DVector, SymmetricEigen, LU};

use crate::error::{Error, Result};
use crate::grid::{cosine_basis_unchecked, weighted_dot};
use crate::model::ModelParams;
use crate::operators::kernels::KernelTables;
use crate::par::{self, Execution};

/// Minimum nodes per period of the highest cosine mode.
const NODES_PER_PERIOD: usize = 10;

#[derive(Debug, Clone)]
pub struct DegenerateOperator {
    rank: usize,
    coupling: f64,
    dt: f64,
    /// `a_i` sampled on the grid, one row per basis function.
    pub a_samples: Vec<Vec<f64>>,
    /// `b_i = G a_i` sampled on the grid.
    pub b_samples: Vec<Vec<f64>>,
    /// `(gram)_{ij} = <a_i, b_j>`.
    pub gram: DMatrix<f64>,
    /// LU of `I + c gram^T`, the system solved for `<b_j, x>`.
    inv_factor: LU<f64, nalgebra::Dyn, nalgebra::Dyn>,
}

impl DegenerateOperator {
    pub fn rank(&self) -> usize {
        self.rank
    }

    pub fn coupling(&self) -> f64 {
        self.coupling
    }

    pub fn len(&self) -> usize {
        self.a_samples.first().map_or(0, Vec::len)
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn check(&self, psi: &[f64]) -> Result<()> {
        if psi.len() != self.len() {
            return Err(Error::LengthMismatch {
                expected: self.len(),
                got: psi.len(),
            });
        }
        Ok(())
    }

    /// `(G_n psi)(t) = sum_i a_i(t) <b_i, psi>`.
    pub fn apply_gn(&self, psi: &[f64]) -> Result<Vec<f64>> {
        self.check(psi)?;
        let coeffs: Vec<f64> = self
            .b_samples
            .iter()
            .map(|b| weighted_dot(b, psi, self.dt))
            .collect();
        Ok(self.combine(&coeffs))
    }

    /// `(I + c G_n)^{-1} psi`.
    pub fn apply_rn(&self, psi: &[f64]) -> Result<Vec<f64>> {
        self.check(psi)?;
        if self.coupling == 0.0 {
            return Ok(psi.to_vec());
        }
        let rhs = DVector::from_iterator(
            self.rank,
            self.b_samples.iter().map(|b| weighted_dot(b, psi, self.dt)),
        );
        let beta = self
            .inv_factor
            .solve(&rhs)
            .ok_or(Error::SingularMatrix { rank: self.rank })?;
        let correction = self.combine(beta.as_slice());
        Ok(psi
            .iter()
            .zip(&correction)
            .map(|(p, q)| p - self.coupling * q)
            .collect())
    }

    fn combine(&self, coeffs: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.len()];
        for (a, &c) in self.a_samples.iter().zip(coeffs) {
            for (o, v) in out.iter_mut().zip(a) {
                *o += c * v;
            }
        }
        out
    }

    /// Eigenvalues of the symmetrized Gram matrix, largest first.
    pub fn gram_eigenvalues(&self) -> Vec<f64> {
        let sym = (&self.gram + self.gram.transpose()) * 0.5;
        let mut ev: Vec<f64> = SymmetricEigen::new(sym)
            .eigenvalues
            .iter()
            .copied()
            .collect();
        ev.sort_by(|a, b| b.total_cmp(a));
        ev
    }

    /// Largest `|gram_ij - gram_ji|`.
    pub fn asymmetry(&self) -> f64 {
        (&self.gram - self.gram.transpose()).amax()
    }
}

/// Grid points needed so that cosine mode `rank` has enough nodes per period.
pub fn required_points(rank: usize) -> usize {
    // period of a_n is 2T/(n-1); ask for NODES_PER_PERIOD nodes in it
    (NODES_PER_PERIOD * rank.saturating_sub(1)).div_ceil(2) + 1
}

pub fn build_degenerate(
    tables: &KernelTables,
    params: &ModelParams,
    rank: usize,
) -> Result<DegenerateOperator> {
    build_degenerate_with(tables, params, rank, Execution::default())
}

pub fn build_degenerate_with(
    tables: &KernelTables,
    params: &ModelParams,
    rank: usize,
    exec: Execution,
) -> Result<DegenerateOperator> {
    if rank < 1 {
        return Err(Error::param("rank", "must be >= 1"));
    }
    let grid = tables.grid();
    let needed = required_points(rank);
    if grid.len() < needed {
        return Err(Error::UnderResolved {
            rank,
            n_points: grid.len(),
            needed,
        });
    }
    let horizon = grid.horizon();
    let a_samples: Vec<Vec<f64>> = par::map_indexed(rank, exec, |i| {
        grid.sample(|t| cosine_basis_unchecked(i + 1, t, horizon))
    });
    let b_samples: Vec<Vec<f64>> =
        par::try_map_indexed(rank, exec, |i| tables.apply_g(&a_samples[i]))?;

    let npts = grid.len();
    let w = grid.weights();
    let a_mat = DMatrix::from_fn(rank, npts, |i, k| a_samples[i][k] * w[k]);
    let b_mat = DMatrix::from_fn(npts, rank, |k, j| b_samples[j][k]);
    let gram = &a_mat * &b_mat;

    let coupling = params.coupling();
    let system = DMatrix::<f64>::identity(rank, rank) + gram.transpose() * coupling;
    let inv_factor = system.lu();
    if !inv_factor.is_invertible() {
        return Err(Error::SingularMatrix { rank });
    }
    let det = inv_factor.determinant();
    if !det.is_finite() || det.abs() < 1e-300 {
        return Err(Error::SingularMatrix { rank });
    }
    Ok(DegenerateOperator {
        rank,
        coupling,
        dt: grid.dt(),
        a_samples,
        b_samples,
        gram,
        inv_factor,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::TimeGrid;
    use crate::model::PenaltySpec;
    use crate::riccati::solve_riccati;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    fn setup(alpha: f64, kappa1: f64, horizon: f64, n: usize) -> (ModelParams, KernelTables) {
        let p = ModelParams::new(1.0, 1.0, 2.0, kappa1, alpha, 10.0, 0.0, 0.0, horizon).unwrap();
        let g = TimeGrid::new(horizon, n).unwrap();
        let t = KernelTables::new(
            solve_riccati(&p, &PenaltySpec::Constant { value: 1.0 }, &g).unwrap(),
        );
        (p, t)
    }

    #[test]
    fn rank_one_flat_kernel() {
        let p = ModelParams::new(1.0, 1.0, 2.0, 2.0, 1.0, 10.0, 0.0, 0.0, 1.0).unwrap();
        let g = TimeGrid::new(1.0, 2001).unwrap();
        let t = KernelTables::new(solve_riccati(&p, &PenaltySpec::Zero, &g).unwrap());
        let op = build_degenerate(&t, &p, 1).unwrap();
        assert_abs_diff_eq!(op.gram[(0, 0)], 1.0 / 3.0, epsilon = 1e-6);
    }

    #[test]
    fn gram_is_symmetric_and_positive() {
        let (p, t) = setup(10.0, 2.0, 6.0, 1001);
        let op = build_degenerate(&t, &p, 60).unwrap();
        assert!(op.asymmetry() <= 1e-6);
        assert!(op.gram_eigenvalues().iter().all(|&e| e >= -1e-8));
    }

    #[test]
    fn under_resolved_rank_is_rejected() {
        let (p, t) = setup(10.0, 2.0, 6.0, 101);
        assert!(matches!(
            build_degenerate(&t, &p, 50),
            Err(Error::UnderResolved { rank: 50, .. })
        ));
        assert!(build_degenerate(&t, &p, 0).is_err());
        assert!(build_degenerate(&t, &p, 21).is_ok());
        assert_eq!(required_points(300), 1496);
    }

    #[test]
    fn zero_coupling_is_identity() {
        let p = ModelParams {
            kappa0: 2.0,
            ..ModelParams::new(1.0, 1.0, 2.0, 2.0, 10.0, 10.0, 0.0, 0.0, 6.0).unwrap()
        };
        let mut q = p;
        q.kappa1 = 0.0;
        let g = TimeGrid::new(6.0, 401).unwrap();
        let t = KernelTables::new(solve_riccati(&p, &PenaltySpec::Zero, &g).unwrap());
        let op = build_degenerate(&t, &q, 20).unwrap();
        let psi = g.sample(|s| s.sin());
        assert_eq!(op.apply_rn(&psi).unwrap(), psi);
    }

    #[test]
    fn rank_convergence_is_monotone() {
        let (p, t) = setup(10.0, 2.0, 6.0, 2001);
        let psi = t.grid().sample(|s| (0.4 * s).sin() + 0.1 * s);
        let exact = t.apply_g(&psi).unwrap();
        let errs: Vec<f64> = [10, 50, 100, 300]
            .iter()
            .map(|&n| {
                let op = build_degenerate(&t, &p, n).unwrap();
                let approx = op.apply_gn(&psi).unwrap();
                let diff: Vec<f64> = approx.iter().zip(&exact).map(|(a, b)| a - b).collect();
                t.grid().l2_norm(&diff).unwrap()
            })
            .collect();
        assert!(errs.windows(2).all(|w| w[1] < w[0]), "{errs:?}");
    }

    #[test]
    fn sequential_and_parallel_builds_agree() {
        let (p, t) = setup(10.0, 2.0, 6.0, 1001);
        let a = build_degenerate_with(&t, &p, 40, Execution::Sequential).unwrap();
        let b = build_degenerate_with(&t, &p, 40, Execution::Parallel).unwrap();
        assert_eq!(a.gram, b.gram);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(16))]
        #[test]
        fn rn_inverts_i_plus_c_gn(coeffs in prop::collection::vec(-2.0f64..2.0, 6)) {
            let (p, t) = setup(10.0, 2.0, 6.0, 601);
            let op = build_degenerate(&t, &p, 40).unwrap();
            let phi = t.grid().sample(|s| {
                coeffs.iter().enumerate().map(|(k, c)| c * (0.5 * k as f64 * s).sin()).sum::<f64>() + 1.0
            });
            let gn_phi = op.apply_gn(&phi).unwrap();
            let psi: Vec<f64> = phi.iter().zip(&gn_phi).map(|(f, g)| f + op.coupling() * g).collect();
            let back = op.apply_rn(&psi).unwrap();
            for (x, y) in back.iter().zip(&phi) {
                prop_assert!((x - y).abs() <= 1e-8);
            }
            let again = op.apply_gn(&back).unwrap();
            for ((x, g), y) in back.iter().zip(&again).zip(&psi) {
                prop_assert!((x + op.coupling() * g - y).abs() <= 1e-8);
            }
        }
    }
}
