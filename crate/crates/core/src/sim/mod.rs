//! Monte Carlo experiments on top of the equilibrium strategies.

pub mod market;
pub mod ou;
pub mod savings;
pub mod stats;
pub mod volume;

pub use market::{simulate_market, PathRecord, SimulationConfig, SimulationResult};
pub use ou::{path_rng, simulate_ou_path};
pub use savings::{savings_bps, summarize_savings, SavingsSummary};
pub use volume::{volume_curve, VolumeBins, VolumeCurve};
