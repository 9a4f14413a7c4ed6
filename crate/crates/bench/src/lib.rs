//! Fixtures shared by the benchmarks.

use platoon_core::{preset, ScenarioConfig};

/// The varying-leader scenario cut down to `count` followers and `horizon`
/// seconds.
pub fn reference(count: usize, horizon: f64) -> ScenarioConfig {
    let mut cfg = preset("scenario2").expect("bundled preset");
    cfg.platoon.count = count;
    cfg.integration.horizon = horizon;
    cfg
}
