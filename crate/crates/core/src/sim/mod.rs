//! Closed-loop platoon simulation.
//!
//! The state holds the followers only, laid out as `[x_1..x_N, v_1..v_N]`;
//! the leader enters as a forcing signal inside the right-hand side.
//! Integration uses an explicit 5(4) pair whose steps are rejected whenever a
//! stage leaves the closed-loop domain, and outputs are sampled on a fixed
//! grid by the pair's fourth-order continuous extension, independent of the
//! step sequence.
//!
//! The closed loop need not have unique solutions; the trace is the unique
//! output of this discretization.

pub mod csv;
pub mod integrator;

use std::collections::VecDeque;

use serde::Serialize;
use thiserror::Error;

use crate::dynamics::{acceleration, VehicleParams};
use crate::error::ParamError;
use crate::funnel::{
    check_domain, control_input, ControllerParams, PairDiagnostics, Violation,
};
use crate::leader::{LeaderSample, LeaderTrajectory};
use crate::scenario::ScenarioConfig;
use crate::state::PlatoonState;

use integrator::{dense, DomainSystem, Step, StepFailure, StepStats, StepperOptions};

/// Number of recent accepted steps whose funnel margins are kept for
/// domain-exit diagnostics.
const MARGIN_HISTORY: usize = 32;

#[derive(Debug, Error)]
pub enum SimError {
    #[error(transparent)]
    Config(#[from] ParamError),
    #[error(
        "left the closed-loop domain at t = {time}: {violation} \
         (step {step:e} s; recent min funnel margin {recent_margin:e})"
    )]
    DomainExit {
        time: f64,
        step: f64,
        violation: Violation,
        /// `(t, min_i psi - |w_i|)` over the last accepted steps.
        margin_history: Vec<(f64, f64)>,
        recent_margin: f64,
    },
    #[error("initial state outside the closed-loop domain: {0}")]
    InitialState(Violation),
    #[error("state became non-finite at t = {time}")]
    NonFinite {
        time: f64,
        last_good: PlatoonState,
    },
    #[error("error tolerance not met at t = {time} even with the minimum step {step:e} s")]
    ToleranceUnreachable { time: f64, step: f64 },
    #[error("step budget exhausted at t = {time}")]
    TooManySteps { time: f64 },
    #[error("closed-loop right-hand side undefined at t = {time}: {violation}")]
    OutOfDomain { time: f64, violation: Violation },
}

/// The closed-loop vector field for a fixed scenario.
pub struct ClosedLoop<'a> {
    vehicles: Vec<VehicleParams>,
    controller: &'a ControllerParams,
    leader: &'a LeaderTrajectory,
}

impl<'a> ClosedLoop<'a> {
    pub fn new(cfg: &'a ScenarioConfig) -> Result<Self, ParamError> {
        Ok(Self {
            vehicles: cfg.vehicles()?,
            controller: &cfg.controller,
            leader: &cfg.leader,
        })
    }

    pub fn len(&self) -> usize {
        self.vehicles.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vehicles.is_empty()
    }

    /// Evaluates the per-pair controller, writing `v_i'` into `accel`.
    /// `pairs`, when given, receives the controller diagnostics.
    fn evaluate(
        &self,
        t: f64,
        y: &[f64],
        accel: &mut [f64],
        mut pairs: Option<&mut Vec<PairDiagnostics>>,
    ) -> Result<LeaderSample, Violation> {
        let n = self.vehicles.len();
        let (xs, vs) = y.split_at(n);
        let lead = self.leader.eval(t);
        let (mut x_pred, mut v_pred) = (lead.position, lead.velocity);
        for i in 0..n {
            let diag = control_input(t, xs[i], vs[i], x_pred, v_pred, self.controller)
                .map_err(|e| Violation::from_error(i + 1, e))?;
            accel[i] = acceleration(&self.vehicles[i], t, xs[i], vs[i], diag.control);
            if let Some(p) = pairs.as_deref_mut() {
                p.push(diag);
            }
            x_pred = xs[i];
            v_pred = vs[i];
        }
        Ok(lead)
    }

    /// Controller diagnostics, accelerations and leader sample at one point.
    pub fn diagnostics(
        &self,
        t: f64,
        state: &PlatoonState,
    ) -> Result<(Vec<PairDiagnostics>, Vec<f64>, LeaderSample), Violation> {
        let y = state.to_flat();
        let mut accel = vec![0.0; self.len()];
        let mut pairs = Vec::with_capacity(self.len());
        let lead = self.evaluate(t, &y, &mut accel, Some(&mut pairs))?;
        Ok((pairs, accel, lead))
    }
}

impl DomainSystem for ClosedLoop<'_> {
    fn dim(&self) -> usize {
        2 * self.vehicles.len()
    }

    fn eval(&self, t: f64, y: &[f64], dy: &mut [f64]) -> Result<(), Violation> {
        let n = self.vehicles.len();
        let (dx, dv) = dy.split_at_mut(n);
        dx.copy_from_slice(&y[n..]);
        self.evaluate(t, y, dv, None).map(|_| ())
    }
}

/// `(x', v')` of the closed loop at `(t, state)`.
pub fn rhs(
    t: f64,
    state: &PlatoonState,
    cfg: &ScenarioConfig,
) -> Result<(Vec<f64>, Vec<f64>), SimError> {
    let sys = ClosedLoop::new(cfg)?;
    let y = state.to_flat();
    let mut dy = vec![0.0; y.len()];
    sys.eval(t, &y, &mut dy)
        .map_err(|violation| SimError::OutOfDomain { time: t, violation })?;
    let dv = dy.split_off(state.len());
    Ok((dy, dv))
}

/// One output sample of a closed-loop run.
#[derive(Debug, Clone, PartialEq)]
pub struct TraceSample {
    pub state: PlatoonState,
    pub leader: LeaderSample,
    pub pairs: Vec<PairDiagnostics>,
    pub accelerations: Vec<f64>,
    pub psi: f64,
}

impl TraceSample {
    pub fn time(&self) -> f64 {
        self.state.time
    }

    /// `x_{i-1} - x_i` for every follower.
    pub fn gaps(&self) -> Vec<f64> {
        let mut pred = self.leader.position;
        self.state
            .positions
            .iter()
            .map(|&x| {
                let g = pred - x;
                pred = x;
                g
            })
            .collect()
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize)]
pub struct RunMeta {
    pub accepted_steps: usize,
    pub rejected_steps: usize,
    pub domain_rejections: usize,
    pub rhs_evaluations: usize,
    /// Smallest `psi - |w_i|` over accepted step end points and samples.
    pub min_funnel_margin: f64,
    /// Smallest distance of any spacing error to either corridor edge.
    pub min_spacing_margin: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimulationTrace {
    pub samples: Vec<TraceSample>,
    pub meta: RunMeta,
}

impl SimulationTrace {
    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn vehicles(&self) -> usize {
        self.samples.first().map_or(0, |s| s.state.len())
    }

    pub fn times(&self) -> Vec<f64> {
        self.samples.iter().map(TraceSample::time).collect()
    }
}

/// Output grid `k * step` for `k = 0, 1, ...` up to the horizon, with the
/// horizon itself appended when it falls off the grid.
pub fn sample_times(horizon: f64, step: f64) -> Vec<f64> {
    let n = (horizon / step + 1e-9).floor() as usize;
    let mut ts: Vec<f64> = (0..=n).map(|k| k as f64 * step).filter(|&t| t <= horizon).collect();
    if ts.last().is_some_and(|&t| horizon - t > 1e-9 * step) {
        ts.push(horizon);
    }
    ts
}

fn margins(pairs: &[PairDiagnostics], gap_range: f64) -> (f64, f64) {
    pairs.iter().fold((f64::INFINITY, f64::INFINITY), |(fm, sm), p| {
        (
            fm.min(p.funnel_margin),
            sm.min((-p.xi).min(p.xi + gap_range)),
        )
    })
}

fn stepper_options(cfg: &ScenarioConfig) -> StepperOptions {
    let ic = &cfg.integration;
    StepperOptions {
        rel_tol: ic.rel_tol,
        abs_tol: ic.abs_tol,
        min_step: ic.min_step,
        max_step: ic.max_step,
        initial_step: 1e-4f64.min(ic.max_step).max(ic.min_step),
        ..StepperOptions::default()
    }
}

/// Integrates the closed loop over `[0, horizon]` and samples the result.
pub fn integrate(cfg: &ScenarioConfig) -> Result<SimulationTrace, SimError> {
    let sys = ClosedLoop::new(cfg)?;
    let start = cfg.initial_state()?;
    let n = start.len();
    let gap_range = cfg.controller.gap_range();
    let times = sample_times(cfg.integration.horizon, cfg.integration.sample_step);

    let make_sample = |t: f64, y: &[f64]| -> Result<TraceSample, Violation> {
        let state = PlatoonState::from_flat(t, y);
        let (pairs, accelerations, leader) = sys.diagnostics(t, &state)?;
        Ok(TraceSample {
            state,
            leader,
            pairs,
            accelerations,
            psi: cfg.controller.funnel.eval(t),
        })
    };

    let first = make_sample(0.0, &start.to_flat()).map_err(SimError::InitialState)?;
    let (mut min_funnel, mut min_spacing) = margins(&first.pairs, gap_range);
    let mut samples = Vec::with_capacity(times.len());
    samples.push(first);

    let mut next = 1;
    let mut history: VecDeque<(f64, f64)> = VecDeque::with_capacity(MARGIN_HISTORY);
    let mut sample_failure: Option<(f64, Violation)> = None;
    let mut last_good = start.clone();
    let mut interp = vec![0.0; 2 * n];
    let mut accel = vec![0.0; n];
    let mut pairs = Vec::with_capacity(n);

    let observe = |step: &Step<'_>| -> bool {
        if step.y1.iter().any(|v| !v.is_finite()) {
            return false;
        }
        pairs.clear();
        if let Err(v) = sys.evaluate(step.t1, step.y1, &mut accel, Some(&mut pairs)) {
            sample_failure = Some((step.t1, v));
            return false;
        }
        debug_assert!(check_domain(
            step.t1,
            {
                let l = cfg.leader.eval(step.t1);
                (l.position, l.velocity)
            },
            &step.y1[..n],
            &step.y1[n..],
            &cfg.controller
        )
        .is_ok());
        let (fm, sm) = margins(&pairs, gap_range);
        min_funnel = min_funnel.min(fm);
        min_spacing = min_spacing.min(sm);
        if history.len() == MARGIN_HISTORY {
            history.pop_front();
        }
        history.push_back((step.t1, fm));

        while next < times.len() && times[next] <= step.t1 {
            let t = times[next];
            if t == step.t1 {
                interp.copy_from_slice(step.y1);
            } else {
                dense(step, t, &mut interp);
            }
            match make_sample(t, &interp) {
                Ok(s) => {
                    let (fm, sm) = margins(&s.pairs, gap_range);
                    min_funnel = min_funnel.min(fm);
                    min_spacing = min_spacing.min(sm);
                    samples.push(s);
                }
                Err(v) => {
                    sample_failure = Some((t, v));
                    return false;
                }
            }
            next += 1;
        }
        last_good = PlatoonState::from_flat(step.t1, step.y1);
        true
    };

    let result = integrator::integrate(
        &sys,
        0.0,
        &start.to_flat(),
        cfg.integration.horizon,
        &stepper_options(cfg),
        observe,
    );

    let stats: StepStats = match result {
        Ok(stats) => stats,
        Err(StepFailure::DomainExit { t, step, violation }) => {
            let margin_history: Vec<(f64, f64)> = history.into_iter().collect();
            let recent_margin = margin_history
                .iter()
                .map(|m| m.1)
                .fold(f64::INFINITY, f64::min);
            return Err(SimError::DomainExit {
                time: t,
                step,
                violation,
                margin_history,
                recent_margin,
            });
        }
        Err(StepFailure::NonFinite { t, .. }) => {
            return Err(SimError::NonFinite {
                time: t,
                last_good,
            })
        }
        Err(StepFailure::ToleranceUnreachable { t, step }) => {
            return Err(SimError::ToleranceUnreachable { time: t, step })
        }
        Err(StepFailure::TooManySteps { t }) => return Err(SimError::TooManySteps { time: t }),
        Err(StepFailure::InitialPoint(v)) => return Err(SimError::InitialState(v)),
        Err(StepFailure::Aborted { t }) => {
            return Err(match sample_failure {
                Some((time, violation)) => SimError::OutOfDomain { time, violation },
                None => SimError::NonFinite { time: t, last_good },
            })
        }
    };

    Ok(SimulationTrace {
        samples,
        meta: RunMeta {
            accepted_steps: stats.accepted,
            rejected_steps: stats.rejected_error + stats.rejected_domain,
            domain_rejections: stats.rejected_domain,
            rhs_evaluations: stats.evaluations,
            min_funnel_margin: min_funnel,
            min_spacing_margin: min_spacing,
        },
    })
}

/// Largest max-norm state difference between a run at the configured
/// tolerances and one at tolerances ten times tighter, over common samples.
pub fn refine_check(cfg: &ScenarioConfig) -> Result<f64, SimError> {
    let coarse = integrate(cfg)?;
    let mut fine_cfg = cfg.clone();
    fine_cfg.integration.rel_tol /= 10.0;
    fine_cfg.integration.abs_tol /= 10.0;
    let fine = integrate(&fine_cfg)?;
    Ok(max_state_deviation(&coarse, &fine))
}

pub fn max_state_deviation(a: &SimulationTrace, b: &SimulationTrace) -> f64 {
    a.samples
        .iter()
        .zip(&b.samples)
        .flat_map(|(p, q)| {
            p.state
                .positions
                .iter()
                .zip(&q.state.positions)
                .chain(p.state.velocities.iter().zip(&q.state.velocities))
                .map(|(u, v)| (u - v).abs())
        })
        .fold(0.0, f64::max)
}
