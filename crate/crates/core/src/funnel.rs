//! Decentralized funnel cruise controller.
//!
//! For follower `i` with predecessor `i-1` (the leader when `i = 1`):
//!
//! ```text
//! xi   = x_i - x_{i-1} + d_min                  spacing error, in (-M, 0)
//! e    = xi + lambda v_i                        constant-headway error
//! w    = v_i - v_{i-1} - 1/xi - 1/(M + xi)      funnel variable, |w| < psi(t)
//! k3   = 1 / (psi(t) - |w|)                     funnel gain
//! u    = -k1 (v_i - v_{i-1}) - k2 e - k3 w
//! ```
//!
//! with `M = d_max - d_min`. The barrier terms in `w` diverge at both edges
//! of the spacing corridor, so keeping `w` inside the funnel keeps every gap
//! inside `(d_min, d_max)`.

use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::error::{ensure, ParamError};
use crate::state::PlatoonState;

/// Relative tolerance for sampled sup/inf estimates of user boundaries.
pub const SAMPLING_REL_TOL: f64 = 1e-3;

pub type ScalarFn = Arc<dyn Fn(f64) -> f64 + Send + Sync>;

/// Performance funnel boundary `psi`.
#[derive(Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum FunnelBoundary {
    /// `amp * exp(-decay t) + floor`
    Exponential { amp: f64, decay: f64, floor: f64 },
    /// User-supplied `psi` and its derivative. Bounds left as `None` are
    /// estimated by dense sampling over the horizon.
    #[serde(skip)]
    Custom {
        psi: ScalarFn,
        dpsi: ScalarFn,
        sup: Option<f64>,
        inf: Option<f64>,
        dsup: Option<f64>,
    },
}

impl fmt::Debug for FunnelBoundary {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            FunnelBoundary::Exponential { amp, decay, floor } => f
                .debug_struct("Exponential")
                .field("amp", amp)
                .field("decay", decay)
                .field("floor", floor)
                .finish(),
            FunnelBoundary::Custom { sup, inf, dsup, .. } => f
                .debug_struct("Custom")
                .field("sup", sup)
                .field("inf", inf)
                .field("dsup", dsup)
                .finish_non_exhaustive(),
        }
    }
}

impl PartialEq for FunnelBoundary {
    fn eq(&self, other: &Self) -> bool {
        match (self, other) {
            (
                FunnelBoundary::Exponential { amp, decay, floor },
                FunnelBoundary::Exponential {
                    amp: a2,
                    decay: d2,
                    floor: f2,
                },
            ) => amp == a2 && decay == d2 && floor == f2,
            (
                FunnelBoundary::Custom { psi, dpsi, .. },
                FunnelBoundary::Custom {
                    psi: p2, dpsi: d2, ..
                },
            ) => Arc::ptr_eq(psi, p2) && Arc::ptr_eq(dpsi, d2),
            _ => false,
        }
    }
}

impl FunnelBoundary {
    pub fn exponential(amp: f64, decay: f64, floor: f64) -> Self {
        FunnelBoundary::Exponential { amp, decay, floor }
    }

    /// `psi ≡ level`
    pub fn constant(level: f64) -> Self {
        FunnelBoundary::Exponential {
            amp: 0.0,
            decay: 1.0,
            floor: level,
        }
    }

    pub fn custom<P, D>(psi: P, dpsi: D) -> Self
    where
        P: Fn(f64) -> f64 + Send + Sync + 'static,
        D: Fn(f64) -> f64 + Send + Sync + 'static,
    {
        FunnelBoundary::Custom {
            psi: Arc::new(psi),
            dpsi: Arc::new(dpsi),
            sup: None,
            inf: None,
            dsup: None,
        }
    }

    pub fn eval(&self, t: f64) -> f64 {
        match self {
            FunnelBoundary::Exponential { amp, decay, floor } => amp * (-decay * t).exp() + floor,
            FunnelBoundary::Custom { psi, .. } => psi(t),
        }
    }

    pub fn derivative(&self, t: f64) -> f64 {
        match self {
            FunnelBoundary::Exponential { amp, decay, .. } => -amp * decay * (-decay * t).exp(),
            FunnelBoundary::Custom { dpsi, .. } => dpsi(t),
        }
    }

    /// `‖psi‖∞`; the horizon only matters for undeclared custom bounds.
    pub fn sup_norm(&self, horizon: f64) -> f64 {
        match self {
            FunnelBoundary::Exponential { amp, floor, .. } => amp + floor,
            FunnelBoundary::Custom { psi, sup, .. } => {
                sup.unwrap_or_else(|| sampled_max(|t| psi(t).abs(), horizon))
            }
        }
    }

    /// Positive lower bound `inf psi`.
    pub fn infimum(&self, horizon: f64) -> f64 {
        match self {
            FunnelBoundary::Exponential { floor, .. } => *floor,
            FunnelBoundary::Custom { psi, inf, .. } => {
                inf.unwrap_or_else(|| -sampled_max(|t| -psi(t), horizon))
            }
        }
    }

    /// `‖psi'‖∞`
    pub fn derivative_sup(&self, horizon: f64) -> f64 {
        match self {
            FunnelBoundary::Exponential { amp, decay, .. } => amp * decay,
            FunnelBoundary::Custom { dpsi, dsup, .. } => {
                dsup.unwrap_or_else(|| sampled_max(|t| dpsi(t).abs(), horizon))
            }
        }
    }

    pub fn validate(&self, horizon: f64) -> Result<(), ParamError> {
        match *self {
            FunnelBoundary::Exponential { amp, decay, floor } => {
                ensure(
                    amp.is_finite() && amp >= 0.0,
                    "controller.funnel.amp",
                    "must be non-negative",
                )?;
                ensure(
                    decay.is_finite() && decay > 0.0,
                    "controller.funnel.decay",
                    "must be positive",
                )?;
                ensure(
                    floor.is_finite() && floor > 0.0,
                    "controller.funnel.floor",
                    "must be positive",
                )
            }
            FunnelBoundary::Custom { .. } => {
                let inf = self.infimum(horizon);
                ensure(
                    inf.is_finite() && inf > 0.0,
                    "controller.funnel",
                    "boundary must have a positive infimum",
                )?;
                ensure(
                    self.sup_norm(horizon).is_finite() && self.derivative_sup(horizon).is_finite(),
                    "controller.funnel",
                    "boundary and its derivative must be bounded",
                )
            }
        }
    }
}

/// Maximum of `f` over `[0, horizon]` on a grid refined until successive
/// estimates agree to `SAMPLING_REL_TOL`.
fn sampled_max(f: impl Fn(f64) -> f64, horizon: f64) -> f64 {
    let horizon = horizon.max(0.0);
    let grid_max = |n: usize| {
        (0..=n)
            .map(|k| f(horizon * k as f64 / n as f64))
            .fold(f64::NEG_INFINITY, f64::max)
    };
    let mut n = 1024;
    let mut est = grid_max(n);
    while n < (1 << 22) {
        n *= 2;
        let next = grid_max(n);
        let settled = (next - est).abs() <= SAMPLING_REL_TOL * next.abs().max(f64::MIN_POSITIVE);
        est = next;
        if settled {
            break;
        }
    }
    est
}

/// Shared design constants of the controller.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ControllerParams {
    /// Safety distance, m.
    pub d_min: f64,
    /// Maximal distance, m.
    pub d_max: f64,
    /// Headway time lambda, s.
    pub headway: f64,
    /// Relative-velocity gain k1, N·s/m.
    pub gain1: f64,
    /// Headway-error gain k2, N/m.
    pub gain2: f64,
    pub funnel: FunnelBoundary,
}

impl ControllerParams {
    /// `M = d_max - d_min`
    pub fn gap_range(&self) -> f64 {
        self.d_max - self.d_min
    }

    pub fn validate(&self, horizon: f64) -> Result<(), ParamError> {
        ensure(
            self.d_min.is_finite() && self.d_min > 0.0,
            "controller.d_min",
            "safety distance must satisfy d_min > 0",
        )?;
        ensure(
            self.d_max.is_finite() && self.d_max > self.d_min,
            "controller.d_max",
            "corridor must satisfy d_max > d_min > 0",
        )?;
        for (field, value) in [
            ("controller.headway", self.headway),
            ("controller.gain1", self.gain1),
            ("controller.gain2", self.gain2),
        ] {
            ensure(value.is_finite() && value > 0.0, field, "must be positive")?;
        }
        self.funnel.validate(horizon)
    }
}

/// Intermediate quantities of the control law for one follower/predecessor pair.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PairDiagnostics {
    pub xi: f64,
    pub headway_err: f64,
    pub funnel_var: f64,
    pub funnel_gain: f64,
    pub control: f64,
    /// `psi(t) - |w|`
    pub funnel_margin: f64,
}

/// Which inequality of the closed-loop domain failed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Barrier {
    /// Gap reached `d_min` (`xi >= 0`).
    SpacingLower,
    /// Gap reached `d_max` (`xi <= -M`).
    SpacingUpper,
    /// `|w| >= psi(t)`.
    Funnel,
}

impl fmt::Display for Barrier {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Barrier::SpacingLower => "spacing-lower (gap <= d_min)",
            Barrier::SpacingUpper => "spacing-upper (gap >= d_max)",
            Barrier::Funnel => "funnel (|w| >= psi)",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Error)]
pub enum DomainError {
    #[error("spacing error {xi} left (-{gap_range}, 0) at the {barrier} barrier")]
    Spacing {
        xi: f64,
        gap_range: f64,
        barrier: Barrier,
    },
    #[error("funnel violated: |w| = {w_abs} >= psi = {psi} (margin {margin})", w_abs = w.abs())]
    Funnel { w: f64, psi: f64, margin: f64 },
}

impl DomainError {
    pub fn barrier(&self) -> Barrier {
        match self {
            DomainError::Spacing { barrier, .. } => *barrier,
            DomainError::Funnel { .. } => Barrier::Funnel,
        }
    }
}

pub fn spacing_error(x_self: f64, x_pred: f64, cp: &ControllerParams) -> f64 {
    x_self - x_pred + cp.d_min
}

pub fn funnel_variable(dv: f64, xi: f64, cp: &ControllerParams) -> Result<f64, DomainError> {
    let m = cp.gap_range();
    // NaN fails both comparisons and is reported at the lower barrier
    if !(xi < 0.0) {
        return Err(DomainError::Spacing {
            xi,
            gap_range: m,
            barrier: Barrier::SpacingLower,
        });
    }
    if !(xi > -m) {
        return Err(DomainError::Spacing {
            xi,
            gap_range: m,
            barrier: Barrier::SpacingUpper,
        });
    }
    Ok(dv - 1.0 / xi - 1.0 / (m + xi))
}

pub fn funnel_gain(t: f64, w: f64, cp: &ControllerParams) -> Result<f64, DomainError> {
    let psi = cp.funnel.eval(t);
    let margin = psi - w.abs();
    if !(margin > 0.0) {
        return Err(DomainError::Funnel { w, psi, margin });
    }
    Ok(1.0 / margin)
}

/// Evaluates the full control law for one pair.
pub fn control_input(
    t: f64,
    x_self: f64,
    v_self: f64,
    x_pred: f64,
    v_pred: f64,
    cp: &ControllerParams,
) -> Result<PairDiagnostics, DomainError> {
    let xi = spacing_error(x_self, x_pred, cp);
    let dv = v_self - v_pred;
    let w = funnel_variable(dv, xi, cp)?;
    let k3 = funnel_gain(t, w, cp)?;
    let headway_err = xi + cp.headway * v_self;
    let control = -cp.gain1 * dv - cp.gain2 * headway_err - k3 * w;
    Ok(PairDiagnostics {
        xi,
        headway_err,
        funnel_var: w,
        funnel_gain: k3,
        control,
        funnel_margin: 1.0 / k3,
    })
}

/// First failing inequality in a platoon state, by 1-based follower index.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Violation {
    pub index: usize,
    pub barrier: Barrier,
    /// The offending `xi` for spacing failures, `w` for funnel failures.
    pub value: f64,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "vehicle {}: {} (value {})",
            self.index, self.barrier, self.value
        )
    }
}

impl Violation {
    pub fn from_error(index: usize, err: DomainError) -> Self {
        let value = match err {
            DomainError::Spacing { xi, .. } => xi,
            DomainError::Funnel { w, .. } => w,
        };
        Violation {
            index,
            barrier: err.barrier(),
            value,
        }
    }
}

/// Membership of `(t, x, v)` in the closed-loop domain, over raw slices.
pub fn check_domain(
    t: f64,
    leader: (f64, f64),
    positions: &[f64],
    velocities: &[f64],
    cp: &ControllerParams,
) -> Result<(), Violation> {
    let (mut x_pred, mut v_pred) = leader;
    for (k, (&x, &v)) in positions.iter().zip(velocities).enumerate() {
        let xi = spacing_error(x, x_pred, cp);
        funnel_variable(v - v_pred, xi, cp)
            .and_then(|w| funnel_gain(t, w, cp))
            .map_err(|e| Violation::from_error(k + 1, e))?;
        x_pred = x;
        v_pred = v;
    }
    Ok(())
}

/// `true` iff every consecutive pair, including the leader pair, lies strictly
/// inside its spacing corridor and funnel. On `false` the smallest failing
/// index is reported.
pub fn in_domain(
    t: f64,
    leader: (f64, f64),
    state: &PlatoonState,
    cp: &ControllerParams,
) -> (bool, Option<Violation>) {
    match check_domain(t, leader, &state.positions, &state.velocities, cp) {
        Ok(()) => (true, None),
        Err(v) => (false, Some(v)),
    }
}
