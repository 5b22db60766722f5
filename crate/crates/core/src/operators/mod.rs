//! Integral operators of the equilibrium and their finite-rank approximations.

pub mod degenerate;
pub mod kernels;
pub mod spectrum;

pub use degenerate::{build_degenerate, build_degenerate_with, DegenerateOperator};
pub use kernels::KernelTables;
pub use spectrum::{apply_resolvent, resolvent_kernel_truncated, spectrum_phi0, SpectrumPhi0};
