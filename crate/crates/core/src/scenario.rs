//! Scenario configuration: the JSON document consumed by the simulator and
//! the CLI, its validation, and the two bundled presets.
//!
//! Top-level keys are `platoon`, `controller`, `leader`, `integration` and
//! `checks`. See the README for a complete example.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::analysis::{delta_of_initial, AssumptionError, MassChainParams};
use crate::dynamics::VehicleParams;
use crate::error::{ensure, ParamError};
use crate::funnel::{ControllerParams, FunnelBoundary};
use crate::leader::LeaderTrajectory;
use crate::state::PlatoonState;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("parse error at line {line}, column {column}: {message}")]
    Parse {
        line: usize,
        column: usize,
        message: String,
    },
    #[error("invalid configuration: {0}")]
    Invalid(#[from] ParamError),
    #[error("initial state violates the start-up assumption: {0}")]
    Assumption(#[from] AssumptionError),
    #[error("unknown preset {0:?} (expected \"scenario1\" or \"scenario2\")")]
    UnknownPreset(String),
}

/// A value given either once for every vehicle or per vehicle.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum PerVehicle {
    Uniform(f64),
    List(Vec<f64>),
}

impl PerVehicle {
    fn expand(&self, n: usize, field: &str) -> Result<Vec<f64>, ParamError> {
        match self {
            PerVehicle::Uniform(v) => Ok(vec![*v; n]),
            PerVehicle::List(vs) => {
                ensure(vs.len() == n, field, "list length must equal platoon.count")?;
                Ok(vs.clone())
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum VehicleSpec {
    /// Every vehicle copies `template`, with mass
    /// `base_mass + (-1)^i * swing` for the 1-based index `i`.
    Alternating {
        base_mass: f64,
        swing: f64,
        template: VehicleParams,
    },
    List { vehicles: Vec<VehicleParams> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlatoonConfig {
    pub count: usize,
    pub vehicles: VehicleSpec,
    /// `x_{i-1}(0) - x_i(0)`, m.
    pub initial_gaps: PerVehicle,
    pub initial_velocities: PerVehicle,
}

fn default_sample_step() -> f64 {
    0.01
}
fn default_tol() -> f64 {
    1e-10
}
fn default_min_step() -> f64 {
    1e-12
}
fn default_max_step() -> f64 {
    1.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IntegrationConfig {
    pub horizon: f64,
    #[serde(default = "default_sample_step")]
    pub sample_step: f64,
    #[serde(default = "default_tol")]
    pub rel_tol: f64,
    #[serde(default = "default_tol")]
    pub abs_tol: f64,
    #[serde(default = "default_min_step")]
    pub min_step: f64,
    #[serde(default = "default_max_step")]
    pub max_step: f64,
}

impl IntegrationConfig {
    pub fn with_horizon(horizon: f64) -> Self {
        Self {
            horizon,
            sample_step: default_sample_step(),
            rel_tol: default_tol(),
            abs_tol: default_tol(),
            min_step: default_min_step(),
            max_step: default_max_step(),
        }
    }
}

fn enabled() -> bool {
    true
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChecksConfig {
    #[serde(default = "enabled")]
    pub enabled: bool,
    /// Parameters for the mass-chain condition; reported when present.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mass_chain: Option<MassChainParams>,
}

impl Default for ChecksConfig {
    fn default() -> Self {
        Self {
            enabled: true,
            mass_chain: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioConfig {
    pub platoon: PlatoonConfig,
    pub controller: ControllerParams,
    pub leader: LeaderTrajectory,
    pub integration: IntegrationConfig,
    #[serde(default)]
    pub checks: ChecksConfig,
}

impl ScenarioConfig {
    pub fn len(&self) -> usize {
        self.platoon.count
    }

    pub fn is_empty(&self) -> bool {
        self.platoon.count == 0
    }

    /// Per-vehicle parameters in platoon order.
    pub fn vehicles(&self) -> Result<Vec<VehicleParams>, ParamError> {
        let n = self.platoon.count;
        match &self.platoon.vehicles {
            VehicleSpec::Alternating {
                base_mass,
                swing,
                template,
            } => Ok((1..=n)
                .map(|i| {
                    let sign = if i % 2 == 0 { 1.0 } else { -1.0 };
                    VehicleParams {
                        mass: base_mass + sign * swing,
                        ..template.clone()
                    }
                })
                .collect()),
            VehicleSpec::List { vehicles } => {
                ensure(
                    vehicles.len() == n,
                    "platoon.vehicles",
                    "list length must equal platoon.count",
                )?;
                Ok(vehicles.clone())
            }
        }
    }

    pub fn masses(&self) -> Result<Vec<f64>, ParamError> {
        Ok(self.vehicles()?.iter().map(|v| v.mass).collect())
    }

    /// Initial follower positions and velocities, built backwards from the
    /// leader's position at `t = 0`.
    pub fn initial_state(&self) -> Result<PlatoonState, ParamError> {
        let n = self.platoon.count;
        let gaps = self.platoon.initial_gaps.expand(n, "platoon.initial_gaps")?;
        let velocities = self
            .platoon
            .initial_velocities
            .expand(n, "platoon.initial_velocities")?;
        let mut x = self.leader.eval(0.0).position;
        let positions = gaps
            .iter()
            .map(|g| {
                x -= g;
                x
            })
            .collect();
        Ok(PlatoonState::new(0.0, positions, velocities))
    }

    /// Full validation: parameter ranges, initial ordering, corridor and
    /// funnel interiority, and the initial velocity cap `|v_i(0)| <= M/lambda`.
    pub fn validate(&self) -> Result<(), ConfigError> {
        let n = self.platoon.count;
        ensure(n >= 1, "platoon.count", "need at least one follower")?;
        let ic = &self.integration;
        ensure(
            ic.horizon.is_finite() && ic.horizon >= 0.0,
            "integration.horizon",
            "must be non-negative",
        )?;
        ensure(
            ic.sample_step.is_finite() && ic.sample_step > 0.0,
            "integration.sample_step",
            "must be positive",
        )?;
        ensure(
            ic.rel_tol > 0.0 && ic.abs_tol > 0.0,
            "integration",
            "tolerances must be positive",
        )?;
        ensure(
            ic.min_step > 0.0 && ic.max_step >= ic.min_step,
            "integration",
            "need 0 < min_step <= max_step",
        )?;

        self.controller.validate(ic.horizon)?;
        self.leader.validate()?;
        for (i, v) in self.vehicles()?.iter().enumerate() {
            v.validate(&format!("platoon.vehicles[{}]", i + 1))?;
        }

        let state = self.initial_state()?;
        let gaps = self.platoon.initial_gaps.expand(n, "platoon.initial_gaps")?;
        for (i, &g) in gaps.iter().enumerate() {
            ensure(
                g > 0.0,
                format!("platoon.initial_gaps[{}]", i + 1),
                "initial positions must be strictly ordered behind the predecessor",
            )?;
            ensure(
                g > self.controller.d_min && g < self.controller.d_max,
                format!("platoon.initial_gaps[{}]", i + 1),
                "initial gap must lie strictly inside (d_min, d_max)",
            )?;
        }
        for (i, v) in state.velocities.iter().enumerate() {
            ensure(
                v.is_finite(),
                format!("platoon.initial_velocities[{}]", i + 1),
                "must be finite",
            )?;
        }
        if let Some(mc) = &self.checks.mass_chain {
            mc.validate()?;
        }
        delta_of_initial(self)?;
        Ok(())
    }

    /// Fails for configs holding a closure-defined funnel boundary.
    pub fn to_json(&self) -> Result<String, serde_json::Error> {
        serde_json::to_string_pretty(self)
    }

    pub fn from_json(text: &str) -> Result<Self, ConfigError> {
        serde_json::from_str(text).map_err(|e| ConfigError::Parse {
            line: e.line(),
            column: e.column(),
            message: e.to_string(),
        })
    }
}

/// Reads and validates a configuration file.
pub fn load_config(path: impl AsRef<Path>) -> Result<ScenarioConfig, ConfigError> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|source| ConfigError::Io {
        path: path.display().to_string(),
        source,
    })?;
    let cfg = ScenarioConfig::from_json(&text)?;
    cfg.validate()?;
    Ok(cfg)
}

pub fn write_config(cfg: &ScenarioConfig, path: impl AsRef<Path>) -> std::io::Result<()> {
    fs::write(path, cfg.to_json().map_err(std::io::Error::other)?)
}

/// Default brake onset for the full-brake scenario, s.
pub const DEFAULT_BRAKE_START: f64 = 15.0;

fn reference_platoon(leader: LeaderTrajectory) -> ScenarioConfig {
    ScenarioConfig {
        platoon: PlatoonConfig {
            count: 20,
            vehicles: VehicleSpec::Alternating {
                base_mass: 1500.0,
                swing: 300.0,
                template: VehicleParams::passenger_car(1500.0),
            },
            initial_gaps: PerVehicle::Uniform(11.0),
            initial_velocities: PerVehicle::Uniform(20.0),
        },
        controller: ControllerParams {
            d_min: 2.0,
            d_max: 15.0,
            headway: 0.5,
            gain1: 3600.0,
            gain2: 3600.0,
            funnel: FunnelBoundary::exponential(1.0, 2.0, 1.0),
        },
        leader,
        integration: IntegrationConfig::with_horizon(40.0),
        checks: ChecksConfig::default(),
    }
}

/// Twenty followers behind a leader that brakes fully at 5 m/s².
pub fn scenario1(brake_start: f64) -> ScenarioConfig {
    reference_platoon(LeaderTrajectory::full_brake(brake_start))
}

/// Twenty followers behind a leader with strongly varying acceleration.
pub fn scenario2() -> ScenarioConfig {
    reference_platoon(LeaderTrajectory::vivid_curve())
}

pub fn preset(name: &str) -> Result<ScenarioConfig, ConfigError> {
    match name {
        "scenario1" => Ok(scenario1(DEFAULT_BRAKE_START)),
        "scenario2" => Ok(scenario2()),
        other => Err(ConfigError::UnknownPreset(other.to_string())),
    }
}
