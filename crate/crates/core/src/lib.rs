//! Simulation and verification of decentralized funnel cruise control for
//! heterogeneous vehicle platoons.
//!
//! Each follower measures only its gap to the predecessor, its own speed and
//! the relative speed, and applies a barrier-type funnel feedback combined
//! with a constant-headway term. The crate integrates the resulting closed
//! loop and checks the run against the controller's guarantees: the safety
//! corridor, funnel containment, bounded inputs and practical velocity
//! string stability.

// Negated float comparisons are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod analysis;
pub mod dynamics;
pub mod error;
pub mod funnel;
pub mod leader;
pub mod plot;
pub mod scenario;
pub mod sim;
pub mod state;

pub use analysis::{
    assumption_report, d_bar_estimate, delta_of_initial, epsilon1, gain_heuristic,
    mass_chain_check, theorem_report, AssumptionReport, MassChain, MassChainParams, TheoremReport,
};
pub use dynamics::{ForceBreakdown, VehicleParams};
pub use error::ParamError;
pub use funnel::{ControllerParams, FunnelBoundary, PairDiagnostics, Violation};
pub use leader::{LeaderSample, LeaderTrajectory};
pub use scenario::{load_config, preset, write_config, ConfigError, ScenarioConfig};
pub use sim::{integrate, refine_check, rhs, SimError, SimulationTrace};
pub use state::PlatoonState;
