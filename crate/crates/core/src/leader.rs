//! Leader motions. The leader has no dynamics; it is a C² forcing signal
//! evaluated in closed form.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{ensure, ParamError};

/// Position, velocity and acceleration of the leader at one instant.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LeaderSample {
    pub position: f64,
    pub velocity: f64,
    pub acceleration: f64,
}

/// One term `cos_amp * cos(freq t) + sin_amp * sin(freq t)` of a harmonic
/// position profile.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Harmonic {
    pub cos_amp: f64,
    pub sin_amp: f64,
    /// rad/s
    pub freq: f64,
}

/// Knot of a quintic Hermite spline: the leader passes `position` at `time`
/// with the given velocity and acceleration.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Knot {
    pub time: f64,
    pub position: f64,
    pub velocity: f64,
    pub acceleration: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum LeaderTrajectory {
    ConstantCruise {
        initial_position: f64,
        speed: f64,
    },
    /// Cruise, then brake to a standstill and hold. The deceleration is
    /// ramped in and out with a half-cosine over `jerk_window` so that the
    /// acceleration stays continuously differentiable.
    BrakeProfile {
        initial_position: f64,
        speed: f64,
        brake_start: f64,
        /// Peak deceleration magnitude, m/s².
        decel: f64,
        jerk_window: f64,
    },
    /// `offset + speed t + Σ harmonics`
    SinusoidalProfile {
        offset: f64,
        speed: f64,
        harmonics: Vec<Harmonic>,
    },
    /// Quintic Hermite spline through the knots; continues at constant
    /// velocity after the last knot, whose acceleration must be zero.
    UserSpline { knots: Vec<Knot> },
}

impl LeaderTrajectory {
    /// `x0(t) = 10 + 19 t - 10 cos(t/5) + ½ sin(2t)`
    pub fn vivid_curve() -> Self {
        LeaderTrajectory::SinusoidalProfile {
            offset: 10.0,
            speed: 19.0,
            harmonics: vec![
                Harmonic {
                    cos_amp: -10.0,
                    sin_amp: 0.0,
                    freq: 0.2,
                },
                Harmonic {
                    cos_amp: 0.0,
                    sin_amp: 0.5,
                    freq: 2.0,
                },
            ],
        }
    }

    /// Full brake at 5 m/s² from 20 m/s starting at `brake_start`.
    pub fn full_brake(brake_start: f64) -> Self {
        LeaderTrajectory::BrakeProfile {
            initial_position: 0.0,
            speed: 20.0,
            brake_start,
            decel: 5.0,
            jerk_window: 0.5,
        }
    }

    pub fn validate(&self) -> Result<(), ParamError> {
        match self {
            LeaderTrajectory::ConstantCruise {
                initial_position,
                speed,
            } => ensure(
                initial_position.is_finite() && speed.is_finite(),
                "leader",
                "parameters must be finite",
            ),
            LeaderTrajectory::BrakeProfile {
                initial_position,
                speed,
                brake_start,
                decel,
                jerk_window,
            } => {
                ensure(
                    [*initial_position, *speed, *brake_start, *decel, *jerk_window]
                        .iter()
                        .all(|v| v.is_finite()),
                    "leader",
                    "parameters must be finite",
                )?;
                ensure(*speed >= 0.0, "leader.speed", "must be non-negative")?;
                ensure(*brake_start >= 0.0, "leader.brake_start", "must be non-negative")?;
                ensure(*decel > 0.0, "leader.decel", "must be positive")?;
                ensure(*jerk_window > 0.0, "leader.jerk_window", "must be positive")?;
                ensure(
                    speed / decel >= *jerk_window,
                    "leader.jerk_window",
                    "must not exceed the braking time speed/decel",
                )
            }
            LeaderTrajectory::SinusoidalProfile {
                offset,
                speed,
                harmonics,
            } => ensure(
                offset.is_finite()
                    && speed.is_finite()
                    && harmonics
                        .iter()
                        .all(|h| h.cos_amp.is_finite() && h.sin_amp.is_finite() && h.freq.is_finite()),
                "leader",
                "parameters must be finite",
            ),
            LeaderTrajectory::UserSpline { knots } => {
                ensure(!knots.is_empty(), "leader.knots", "need at least one knot")?;
                ensure(
                    knots[0].time == 0.0,
                    "leader.knots",
                    "first knot must be at t = 0",
                )?;
                ensure(
                    knots.windows(2).all(|w| w[0].time < w[1].time),
                    "leader.knots",
                    "knot times must be strictly increasing",
                )?;
                ensure(
                    knots.last().map(|k| k.acceleration) == Some(0.0),
                    "leader.knots",
                    "last knot must have zero acceleration",
                )
            }
        }
    }

    pub fn eval(&self, t: f64) -> LeaderSample {
        match self {
            LeaderTrajectory::ConstantCruise {
                initial_position,
                speed,
            } => LeaderSample {
                position: initial_position + speed * t,
                velocity: *speed,
                acceleration: 0.0,
            },
            LeaderTrajectory::BrakeProfile {
                initial_position,
                speed,
                brake_start,
                decel,
                jerk_window,
            } => brake_eval(*initial_position, *speed, *brake_start, *decel, *jerk_window, t),
            LeaderTrajectory::SinusoidalProfile {
                offset,
                speed,
                harmonics,
            } => {
                let mut s = LeaderSample {
                    position: offset + speed * t,
                    velocity: *speed,
                    acceleration: 0.0,
                };
                for h in harmonics {
                    let (sin, cos) = (h.freq * t).sin_cos();
                    let w = h.freq;
                    s.position += h.cos_amp * cos + h.sin_amp * sin;
                    s.velocity += w * (h.sin_amp * cos - h.cos_amp * sin);
                    s.acceleration -= w * w * (h.cos_amp * cos + h.sin_amp * sin);
                }
                s
            }
            LeaderTrajectory::UserSpline { knots } => spline_eval(knots, t),
        }
    }

    /// `(‖v0‖∞, ‖a0‖∞)` over `[0, horizon]`.
    pub fn sup_norms(&self, horizon: f64) -> (f64, f64) {
        match self {
            LeaderTrajectory::ConstantCruise { speed, .. } => (speed.abs(), 0.0),
            LeaderTrajectory::BrakeProfile {
                speed,
                brake_start,
                decel,
                jerk_window,
                ..
            } => {
                // velocity only decreases from `speed`; peak deceleration is
                // reached once the ramp-in completes
                let a_sup = if horizon >= brake_start + jerk_window {
                    *decel
                } else if horizon > *brake_start {
                    self.eval(horizon).acceleration.abs()
                } else {
                    0.0
                };
                (speed.abs(), a_sup)
            }
            _ => sampled_sup_norms(self, horizon),
        }
    }
}

fn brake_eval(x0: f64, speed: f64, start: f64, decel: f64, window: f64, t: f64) -> LeaderSample {
    let k = PI / window;
    let plateau = speed / decel - window;
    let t1 = start + window;
    let t2 = t1 + plateau;
    let t3 = t2 + window;

    // state at the phase boundaries
    let xb = x0 + speed * start;
    let v1 = speed - decel * window / 2.0;
    let x1 = xb + speed * window - decel / 2.0 * (window * window / 2.0 - 2.0 / (k * k));
    let v2 = v1 - decel * plateau;
    let x2 = x1 + v1 * plateau - decel * plateau * plateau / 2.0;
    let x3 = x2 + v2 * window - decel / 2.0 * (window * window / 2.0 + 2.0 / (k * k));

    if t <= start {
        LeaderSample {
            position: x0 + speed * t,
            velocity: speed,
            acceleration: 0.0,
        }
    } else if t <= t1 {
        let s = t - start;
        LeaderSample {
            position: xb + speed * s - decel / 2.0 * (s * s / 2.0 + ((k * s).cos() - 1.0) / (k * k)),
            velocity: speed - decel / 2.0 * (s - (k * s).sin() / k),
            acceleration: -decel / 2.0 * (1.0 - (k * s).cos()),
        }
    } else if t <= t2 {
        let s = t - t1;
        LeaderSample {
            position: x1 + v1 * s - decel * s * s / 2.0,
            velocity: v1 - decel * s,
            acceleration: -decel,
        }
    } else if t <= t3 {
        let s = t - t2;
        LeaderSample {
            position: x2 + v2 * s - decel / 2.0 * (s * s / 2.0 - ((k * s).cos() - 1.0) / (k * k)),
            velocity: v2 - decel / 2.0 * (s + (k * s).sin() / k),
            acceleration: -decel / 2.0 * (1.0 + (k * s).cos()),
        }
    } else {
        LeaderSample {
            position: x3,
            velocity: 0.0,
            acceleration: 0.0,
        }
    }
}

fn spline_eval(knots: &[Knot], t: f64) -> LeaderSample {
    let last = knots[knots.len() - 1];
    if t >= last.time {
        return LeaderSample {
            position: last.position + last.velocity * (t - last.time),
            velocity: last.velocity,
            acceleration: 0.0,
        };
    }
    let seg = knots.partition_point(|k| k.time <= t).saturating_sub(1);
    let (a, b) = (knots[seg], knots[seg + 1]);
    let h = b.time - a.time;
    let s = (t - a.time) / h;
    // quintic Hermite basis on [0, 1] and its first two derivatives
    let (s2, s3, s4, s5) = (s * s, s * s * s, s.powi(4), s.powi(5));
    let h0 = [
        1.0 - 10.0 * s3 + 15.0 * s4 - 6.0 * s5,
        -30.0 * s2 + 60.0 * s3 - 30.0 * s4,
        -60.0 * s + 180.0 * s2 - 120.0 * s3,
    ];
    let h1 = [
        s - 6.0 * s3 + 8.0 * s4 - 3.0 * s5,
        1.0 - 18.0 * s2 + 32.0 * s3 - 15.0 * s4,
        -36.0 * s + 96.0 * s2 - 60.0 * s3,
    ];
    let h2 = [
        0.5 * s2 - 1.5 * s3 + 1.5 * s4 - 0.5 * s5,
        s - 4.5 * s2 + 6.0 * s3 - 2.5 * s4,
        1.0 - 9.0 * s + 18.0 * s2 - 10.0 * s3,
    ];
    let h3 = [
        0.5 * s3 - s4 + 0.5 * s5,
        1.5 * s2 - 4.0 * s3 + 2.5 * s4,
        3.0 * s - 12.0 * s2 + 10.0 * s3,
    ];
    let h4 = [
        -4.0 * s3 + 7.0 * s4 - 3.0 * s5,
        -12.0 * s2 + 28.0 * s3 - 15.0 * s4,
        -24.0 * s + 84.0 * s2 - 60.0 * s3,
    ];
    let h5 = [10.0 * s3 - 15.0 * s4 + 6.0 * s5, 30.0 * s2 - 60.0 * s3 + 30.0 * s4, 60.0 * s - 180.0 * s2 + 120.0 * s3];
    let combine = |d: usize| {
        let scale = h.powi(-(d as i32));
        scale
            * (a.position * h0[d]
                + a.velocity * h * h1[d]
                + a.acceleration * h * h * h2[d]
                + b.acceleration * h * h * h3[d]
                + b.velocity * h * h4[d]
                + b.position * h5[d])
    };
    LeaderSample {
        position: combine(0),
        velocity: combine(1),
        acceleration: combine(2),
    }
}

/// Dense sampling with golden-section polishing of the largest sample.
fn sampled_sup_norms(traj: &LeaderTrajectory, horizon: f64) -> (f64, f64) {
    let horizon = horizon.max(0.0);
    let n = ((horizon / 1e-3).ceil() as usize).max(1);
    let dt = horizon / n as f64;
    let refine = |f: &dyn Fn(f64) -> f64| {
        let (mut best_t, mut best) = (0.0, f(0.0));
        for k in 1..=n {
            let t = k as f64 * dt;
            let v = f(t);
            if v > best {
                best = v;
                best_t = t;
            }
        }
        let (mut lo, mut hi) = ((best_t - dt).max(0.0), (best_t + dt).min(horizon));
        let g = 0.5 * (5f64.sqrt() - 1.0);
        for _ in 0..80 {
            let a = hi - g * (hi - lo);
            let b = lo + g * (hi - lo);
            if f(a) > f(b) {
                hi = b;
            } else {
                lo = a;
            }
        }
        best.max(f(0.5 * (lo + hi)))
    };
    (
        refine(&|t| traj.eval(t).velocity.abs()),
        refine(&|t| traj.eval(t).acceleration.abs()),
    )
}
