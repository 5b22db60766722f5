//! CSV emission. Floats are written with 17 significant digits so that a
//! value read back is bit-identical to the one written.

use std::io::{self, Write};

use crate::equilibrium::MajorStrategy;
use crate::operators::SpectrumPhi0;
use crate::riccati::RiccatiSolution;
use crate::sim::{SavingsSummary, SimulationResult, VolumeCurve};

pub fn fmt_f64(v: f64) -> String {
    format!("{v:.16e}")
}

/// Minimal CSV writer: header first, LF line endings, no quoting needed.
pub struct CsvWriter<W: Write> {
    out: W,
    columns: usize,
}

impl<W: Write> CsvWriter<W> {
    pub fn new(mut out: W, header: &[&str]) -> io::Result<Self> {
        writeln!(out, "{}", header.join(","))?;
        Ok(CsvWriter {
            out,
            columns: header.len(),
        })
    }

    pub fn row(&mut self, cells: &[Cell]) -> io::Result<()> {
        debug_assert_eq!(cells.len(), self.columns);
        let line: Vec<String> = cells.iter().map(Cell::render).collect();
        writeln!(self.out, "{}", line.join(","))
    }

    pub fn finish(mut self) -> io::Result<W> {
        self.out.flush()?;
        Ok(self.out)
    }
}

#[derive(Debug, Clone)]
pub enum Cell {
    F(f64),
    I(u64),
    S(String),
}

impl Cell {
    fn render(&self) -> String {
        match self {
            Cell::F(v) => fmt_f64(*v),
            Cell::I(v) => v.to_string(),
            Cell::S(s) => s.clone(),
        }
    }
}

use Cell::{F, I};

pub fn write_riccati<W: Write>(out: W, sol: &RiccatiSolution) -> io::Result<W> {
    let mut w = CsvWriter::new(out, &["t", "r1", "xi_plus", "xi_minus", "cum_xi_minus_sq"])?;
    for (i, &t) in sol.grid().nodes().iter().enumerate() {
        w.row(&[
            F(t),
            F(sol.r1[i]),
            F(sol.xi_plus[i]),
            F(sol.xi_minus[i]),
            F(sol.cum_xi_minus_sq[i]),
        ])?;
    }
    w.finish()
}

pub fn write_spectrum<W: Write>(out: W, spec: &SpectrumPhi0) -> io::Result<W> {
    let mut w = CsvWriter::new(out, &["n", "z_n", "zeta_n"])?;
    for (k, (&z, &zeta)) in spec.roots.iter().zip(&spec.eigenvalues).enumerate() {
        w.row(&[I(k as u64 + 1), F(z), F(zeta)])?;
    }
    w.finish()
}

pub fn write_kernel<W: Write>(out: W, t: &[f64], rows: &[Vec<f64>]) -> io::Result<W> {
    let mut w = CsvWriter::new(out, &["t", "s", "G"])?;
    for (i, row) in rows.iter().enumerate() {
        for (j, g) in row.iter().enumerate() {
            w.row(&[F(t[i]), F(t[j]), F(*g)])?;
        }
    }
    w.finish()
}

/// Deterministic strategy table for `solve`.
pub struct StrategyTable<'a> {
    pub t: &'a [f64],
    pub nu0_hat: &'a [f64],
    pub nu0_bm: &'a [f64],
    pub q0_star: &'a [f64],
    pub q0_bm: &'a [f64],
    pub mu_bar: &'a [f64],
}

pub fn write_strategy<W: Write>(out: W, tab: &StrategyTable<'_>) -> io::Result<W> {
    let mut w = CsvWriter::new(
        out,
        &["t", "nu0_hat", "nu0_bm", "Q0_star", "Q0_bm", "mu_bar"],
    )?;
    for i in 0..tab.t.len() {
        w.row(&[
            F(tab.t[i]),
            F(tab.nu0_hat[i]),
            F(tab.nu0_bm[i]),
            F(tab.q0_star[i]),
            F(tab.q0_bm[i]),
            F(tab.mu_bar[i]),
        ])?;
    }
    w.finish()
}

pub fn write_major_summary<W: Write>(out: W, m: &MajorStrategy) -> io::Result<W> {
    let mut w = CsvWriter::new(out, &["rank", "eta_n", "fuel_error", "fredholm_residual"])?;
    w.row(&[
        I(m.rank as u64),
        F(m.eta_n),
        F(m.fuel_error),
        F(m.fredholm_residual),
    ])?;
    w.finish()
}

/// `path_id, t, mu, price, nu0, nu1, Q0, Q1`; requires stored paths.
pub fn write_paths<W: Write>(out: W, res: &SimulationResult) -> io::Result<W> {
    let mut w = CsvWriter::new(
        out,
        &["path_id", "t", "mu", "price", "nu0", "nu1", "Q0", "Q1"],
    )?;
    let nodes = res.grid().nodes();
    for (k, p) in res.paths.iter().flatten().enumerate() {
        for (i, &t) in nodes.iter().enumerate() {
            w.row(&[
                I(k as u64),
                F(t),
                F(p.mu[i]),
                F(p.price[i]),
                F(res.nu0[i]),
                F(p.nu1[i]),
                F(res.q0[i]),
                F(p.q1[i]),
            ])?;
        }
    }
    w.finish()
}

pub fn write_terminal_cash<W: Write>(out: W, res: &SimulationResult) -> io::Result<W> {
    let mut w = CsvWriter::new(out, &["path_id", "X0_T", "X1_T"])?;
    for (k, (a, b)) in res.x0_terminal.iter().zip(&res.x1_terminal).enumerate() {
        w.row(&[I(k as u64), F(*a), F(*b)])?;
    }
    w.finish()
}

/// Cross-sectional mean and standard error of the minor quantities per node.
pub fn write_moments<W: Write>(out: W, res: &SimulationResult) -> io::Result<W> {
    let mut w = CsvWriter::new(
        out,
        &[
            "t", "nu1_mean", "nu1_se", "r0_mean", "r0_se", "Q1_mean", "Q1_se",
        ],
    )?;
    let (nu_se, r_se, q_se) = (
        res.nu1_moments.std_error(),
        res.r0_moments.std_error(),
        res.q1_moments.std_error(),
    );
    for (i, &t) in res.grid().nodes().iter().enumerate() {
        w.row(&[
            F(t),
            F(res.nu1_moments.mean()[i]),
            F(nu_se[i]),
            F(res.r0_moments.mean()[i]),
            F(r_se[i]),
            F(res.q1_moments.mean()[i]),
            F(q_se[i]),
        ])?;
    }
    w.finish()
}

/// Per-path savings; invalid paths are written as `NaN`, followed by summary rows.
pub fn write_savings<W: Write>(
    out: W,
    bps: &[Option<f64>],
    summary: &SavingsSummary,
) -> io::Result<W> {
    let mut w = CsvWriter::new(out, &["path_id", "savings_bps"])?;
    for (k, v) in bps.iter().enumerate() {
        w.row(&[I(k as u64), F(v.unwrap_or(f64::NAN))])?;
    }
    for (name, v) in [
        ("mean", summary.mean),
        ("median", summary.median),
        ("q25", summary.q25),
        ("q75", summary.q75),
        ("t_stat", summary.t_stat),
    ] {
        w.row(&[Cell::S(name.into()), F(v)])?;
    }
    w.finish()
}

/// Bin starts are in clock minutes after the session open.
pub fn write_volume<W: Write>(out: W, curve: &VolumeCurve, minutes_per_unit: f64) -> io::Result<W> {
    let mut w = CsvWriter::new(out, &["bin_start", "path_id", "log_volume"])?;
    for (k, &start) in curve.bin_starts.iter().enumerate() {
        for (p, row) in curve.log_volume.iter().enumerate() {
            w.row(&[F(start * minutes_per_unit), I(p as u64), F(row[k])])?;
        }
    }
    w.finish()
}

pub fn write_volume_median<W: Write>(
    out: W,
    curve: &VolumeCurve,
    minutes_per_unit: f64,
) -> io::Result<W> {
    let mut w = CsvWriter::new(out, &["bin_start", "median_log_volume"])?;
    for (start, m) in curve.bin_starts.iter().zip(&curve.median) {
        w.row(&[F(start * minutes_per_unit), F(*m)])?;
    }
    w.finish()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn floats_round_trip() {
        for v in [
            0.1,
            1.0 / 3.0,
            -2.5e-300,
            123456789.12345679,
            f64::MIN_POSITIVE,
        ] {
            let s = fmt_f64(v);
            assert_eq!(s.parse::<f64>().unwrap(), v, "{s}");
        }
        assert_eq!(fmt_f64(1.0), "1.0000000000000000e0");
    }

    #[test]
    fn writes_header_and_rows() {
        let mut w = CsvWriter::new(Vec::new(), &["a", "b"]).unwrap();
        w.row(&[I(3), F(0.5)]).unwrap();
        let bytes = w.finish().unwrap();
        assert_eq!(
            String::from_utf8(bytes).unwrap(),
            "a,b\n3,5.0000000000000000e-1\n"
        );
    }
}
