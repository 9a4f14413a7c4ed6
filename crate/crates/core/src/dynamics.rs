//! Longitudinal vehicle model.
//!
//! Each follower obeys `m v' = u - f(t, x, v) + d(t)` where `f` collects the
//! slope, aerodynamic and rolling resistance forces. Rolling friction uses
//! `erf(alpha v)` in place of `sgn(v)` so that the closed loop stays
//! continuous.

use std::f64::consts::{FRAC_PI_2, PI};

use serde::{Deserialize, Serialize};

use crate::error::{ensure, ParamError};

/// Gravitational acceleration in m/s².
pub const GRAVITY: f64 = 9.81;

/// Road slope as a function of position, in radians.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SlopeProfile {
    Constant { angle: f64 },
    /// `mean + amplitude * sin(2π x / wavelength)`
    Sinusoidal {
        mean: f64,
        amplitude: f64,
        wavelength: f64,
    },
}

impl Default for SlopeProfile {
    fn default() -> Self {
        SlopeProfile::Constant { angle: 0.0 }
    }
}

impl SlopeProfile {
    pub fn eval(&self, x: f64) -> f64 {
        match *self {
            SlopeProfile::Constant { angle } => angle,
            SlopeProfile::Sinusoidal {
                mean,
                amplitude,
                wavelength,
            } => mean + amplitude * (2.0 * PI * x / wavelength).sin(),
        }
    }

    /// Supremum of `|θ(x)|` over all positions.
    pub fn sup_abs(&self) -> f64 {
        match *self {
            SlopeProfile::Constant { angle } => angle.abs(),
            SlopeProfile::Sinusoidal {
                mean, amplitude, ..
            } => mean.abs() + amplitude.abs(),
        }
    }

    fn validate(&self, field: &str) -> Result<(), ParamError> {
        if let SlopeProfile::Sinusoidal { wavelength, .. } = *self {
            ensure(
                wavelength.is_finite() && wavelength > 0.0,
                format!("{field}.wavelength"),
                "must be positive",
            )?;
        }
        ensure(
            self.sup_abs() <= FRAC_PI_2,
            field,
            "slope must stay within [-pi/2, pi/2]",
        )
    }
}

/// Air density as a function of time and position, in kg/m³.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum AirDensityProfile {
    Constant { density: f64 },
    /// `mean + amplitude * sin(2π t / period)`, position independent.
    Sinusoidal {
        mean: f64,
        amplitude: f64,
        period: f64,
    },
}

impl Default for AirDensityProfile {
    fn default() -> Self {
        AirDensityProfile::Constant { density: 1.3 }
    }
}

impl AirDensityProfile {
    pub fn eval(&self, t: f64, _x: f64) -> f64 {
        match *self {
            AirDensityProfile::Constant { density } => density,
            AirDensityProfile::Sinusoidal {
                mean,
                amplitude,
                period,
            } => mean + amplitude * (2.0 * PI * t / period).sin(),
        }
    }

    pub fn sup(&self) -> f64 {
        match *self {
            AirDensityProfile::Constant { density } => density,
            AirDensityProfile::Sinusoidal {
                mean, amplitude, ..
            } => mean + amplitude.abs(),
        }
    }

    fn validate(&self, field: &str) -> Result<(), ParamError> {
        match *self {
            AirDensityProfile::Constant { density } => ensure(
                density.is_finite() && density >= 0.0,
                field,
                "density must be finite and non-negative",
            ),
            AirDensityProfile::Sinusoidal {
                mean,
                amplitude,
                period,
            } => {
                ensure(
                    period.is_finite() && period > 0.0,
                    format!("{field}.period"),
                    "must be positive",
                )?;
                ensure(
                    mean.is_finite() && amplitude.is_finite() && mean >= amplitude.abs(),
                    field,
                    "density must stay non-negative (mean >= |amplitude|)",
                )
            }
        }
    }
}

/// Bounded external force acting on a vehicle, in newtons.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Disturbance {
    #[default]
    Zero,
    Constant { value: f64 },
    /// `amplitude * sin(frequency * t + phase)`, frequency in rad/s.
    Sinusoidal {
        amplitude: f64,
        frequency: f64,
        phase: f64,
    },
    /// Holds `values[k]` on `[times[k], times[k+1])`; zero before `times[0]`.
    Piecewise { times: Vec<f64>, values: Vec<f64> },
}

impl Disturbance {
    pub fn eval(&self, t: f64) -> f64 {
        match self {
            Disturbance::Zero => 0.0,
            Disturbance::Constant { value } => *value,
            Disturbance::Sinusoidal {
                amplitude,
                frequency,
                phase,
            } => amplitude * (frequency * t + phase).sin(),
            Disturbance::Piecewise { times, values } => {
                match times.iter().rposition(|&start| start <= t) {
                    Some(k) => values[k],
                    None => 0.0,
                }
            }
        }
    }

    /// Supremum norm over all `t >= 0`.
    pub fn sup_abs(&self) -> f64 {
        match self {
            Disturbance::Zero => 0.0,
            Disturbance::Constant { value } => value.abs(),
            Disturbance::Sinusoidal { amplitude, .. } => amplitude.abs(),
            Disturbance::Piecewise { values, .. } => {
                values.iter().fold(0.0, |acc: f64, v| acc.max(v.abs()))
            }
        }
    }

    fn validate(&self, field: &str) -> Result<(), ParamError> {
        match self {
            Disturbance::Piecewise { times, values } => {
                ensure(
                    times.len() == values.len(),
                    field,
                    "times and values must have equal length",
                )?;
                ensure(
                    times.windows(2).all(|w| w[0] < w[1]),
                    format!("{field}.times"),
                    "must be strictly increasing",
                )?;
                ensure(
                    times.iter().chain(values).all(|v| v.is_finite()),
                    field,
                    "entries must be finite",
                )
            }
            other => ensure(other.sup_abs().is_finite(), field, "must be bounded"),
        }
    }
}

fn default_smoothing() -> f64 {
    100.0
}

/// Physical constants and environment profiles of one vehicle.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VehicleParams {
    /// kg
    pub mass: f64,
    pub drag_coeff: f64,
    pub rolling_coeff: f64,
    /// m²
    pub frontal_area: f64,
    #[serde(default)]
    pub slope: SlopeProfile,
    #[serde(default)]
    pub air_density: AirDensityProfile,
    /// Steepness of the `erf` friction smoothing.
    #[serde(default = "default_smoothing")]
    pub friction_smoothing: f64,
    #[serde(default)]
    pub disturbance: Disturbance,
}

impl VehicleParams {
    /// Passenger car on a flat road: drag 0.32, rolling 0.01, 2.4 m², air 1.3 kg/m³.
    pub fn passenger_car(mass: f64) -> Self {
        Self {
            mass,
            drag_coeff: 0.32,
            rolling_coeff: 0.01,
            frontal_area: 2.4,
            slope: SlopeProfile::default(),
            air_density: AirDensityProfile::default(),
            friction_smoothing: default_smoothing(),
            disturbance: Disturbance::Zero,
        }
    }

    /// Mass `1500 + (-1)^index * 300` kg for the 1-based platoon index.
    pub fn alternating(index: usize) -> Self {
        let sign = if index.is_multiple_of(2) { 1.0 } else { -1.0 };
        Self::passenger_car(1500.0 + sign * 300.0)
    }

    pub fn validate(&self, field: &str) -> Result<(), ParamError> {
        ensure(
            self.mass.is_finite() && self.mass > 0.0,
            format!("{field}.mass"),
            "must be positive",
        )?;
        ensure(
            self.drag_coeff.is_finite() && self.drag_coeff >= 0.0,
            format!("{field}.drag_coeff"),
            "must be non-negative",
        )?;
        ensure(
            self.rolling_coeff.is_finite() && self.rolling_coeff >= 0.0,
            format!("{field}.rolling_coeff"),
            "must be non-negative",
        )?;
        ensure(
            self.frontal_area.is_finite() && self.frontal_area >= 0.0,
            format!("{field}.frontal_area"),
            "must be non-negative",
        )?;
        ensure(
            self.friction_smoothing.is_finite() && self.friction_smoothing > 0.0,
            format!("{field}.friction_smoothing"),
            "must be positive",
        )?;
        self.slope.validate(&format!("{field}.slope"))?;
        self.air_density.validate(&format!("{field}.air_density"))?;
        self.disturbance.validate(&format!("{field}.disturbance"))
    }

    /// Upper bound of `½ ρ C_d A` over all times and positions.
    pub fn drag_bound(&self) -> f64 {
        0.5 * self.air_density.sup() * self.drag_coeff * self.frontal_area
    }
}

/// The three resistance forces and their sum, in newtons.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ForceBreakdown {
    pub gravity: f64,
    pub aero: f64,
    pub rolling: f64,
    pub total: f64,
}

pub fn gravity_force(p: &VehicleParams, x: f64) -> f64 {
    p.mass * GRAVITY * p.slope.eval(x).sin()
}

pub fn aero_drag(p: &VehicleParams, t: f64, x: f64, v: f64) -> f64 {
    // sgn(v) v² == v |v|, and vanishes at v = 0
    0.5 * p.air_density.eval(t, x) * p.drag_coeff * p.frontal_area * v * v.abs()
}

pub fn rolling_friction(p: &VehicleParams, v: f64) -> f64 {
    p.mass * GRAVITY * p.rolling_coeff * libm::erf(p.friction_smoothing * v)
}

pub fn total_force(p: &VehicleParams, t: f64, x: f64, v: f64) -> ForceBreakdown {
    let gravity = gravity_force(p, x);
    let aero = aero_drag(p, t, x, v);
    let rolling = rolling_friction(p, v);
    ForceBreakdown {
        gravity,
        aero,
        rolling,
        total: gravity + aero + rolling,
    }
}

/// `v' = (u - f(t, x, v) + d(t)) / m`
pub fn acceleration(p: &VehicleParams, t: f64, x: f64, v: f64, u: f64) -> f64 {
    (u - total_force(p, t, x, v).total + p.disturbance.eval(t)) / p.mass
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    fn car1() -> VehicleParams {
        VehicleParams::alternating(1)
    }

    #[test]
    fn alternating_masses() {
        assert_eq!(VehicleParams::alternating(1).mass, 1200.0);
        assert_eq!(VehicleParams::alternating(2).mass, 1800.0);
        assert_eq!(VehicleParams::alternating(19).mass, 1200.0);
    }

    #[test]
    fn gravity_examples() {
        assert_eq!(gravity_force(&car1(), 123.4), 0.0);
        let mut p = car1();
        p.slope = SlopeProfile::Constant { angle: FRAC_PI_2 };
        assert_abs_diff_eq!(gravity_force(&p, 0.0), 11772.0, epsilon = 1e-9);
    }

    #[test]
    fn gravity_odd_slope() {
        let mut p = car1();
        p.slope = SlopeProfile::Sinusoidal {
            mean: 0.0,
            amplitude: 0.1,
            wavelength: 250.0,
        };
        for x in [0.3, 17.0, 99.9, 410.0] {
            assert_abs_diff_eq!(gravity_force(&p, x), -gravity_force(&p, -x), epsilon = 1e-12);
        }
    }

    #[test]
    fn aero_examples() {
        let p = car1();
        assert_eq!(aero_drag(&p, 0.0, 0.0, 0.0), 0.0);
        assert_abs_diff_eq!(aero_drag(&p, 0.0, 0.0, 20.0), 199.68, epsilon = 1e-9);
        assert_abs_diff_eq!(aero_drag(&p, 0.0, 0.0, -20.0), -199.68, epsilon = 1e-9);
    }

    #[test]
    fn rolling_examples() {
        let p = car1();
        assert_eq!(rolling_friction(&p, 0.0), 0.0);
        let r = rolling_friction(&p, 20.0);
        assert!((r - 1200.0 * GRAVITY * 0.01).abs() < 1e-9);
        assert_abs_diff_eq!(r, 117.72, epsilon = 1e-9);
    }

    #[test]
    fn erf_accuracy() {
        // reference values of erf to 16 digits
        let table = [
            (0.1, 0.1124629160182849),
            (0.5, 0.5204998778130465),
            (1.0, 0.8427007929497149),
            (2.0, 0.9953222650189527),
            (3.0, 0.9999779095030014),
        ];
        for (z, expect) in table {
            assert!((libm::erf(z) - expect).abs() < 1e-12, "erf({z})");
        }
    }

    #[test]
    fn total_force_examples() {
        let flat_still = total_force(&car1(), 0.0, 0.0, 0.0);
        assert_eq!(flat_still.total, 0.0);
        let f1 = total_force(&car1(), 0.0, 0.0, 20.0);
        assert_abs_diff_eq!(f1.total, 317.40, epsilon = 1e-9);
        let f2 = total_force(&VehicleParams::alternating(2), 0.0, 0.0, 20.0);
        assert_abs_diff_eq!(f2.total, 376.26, epsilon = 1e-9);
    }

    #[test]
    fn acceleration_examples() {
        let p = car1();
        let a = acceleration(&p, 0.0, 0.0, 20.0, -3599.93);
        assert_abs_diff_eq!(a, (-3599.93 - 317.40) / 1200.0, epsilon = 1e-12);
        assert_abs_diff_eq!(a, -3.2644, epsilon = 1e-4);

        let mut q = car1();
        q.disturbance = Disturbance::Constant { value: 40.0 };
        let f = total_force(&q, 1.0, 5.0, 7.0).total;
        assert_abs_diff_eq!(acceleration(&q, 1.0, 5.0, 7.0, f - 40.0), 0.0, epsilon = 1e-12);
    }

    #[test]
    fn piecewise_disturbance() {
        let d = Disturbance::Piecewise {
            times: vec![1.0, 2.0],
            values: vec![50.0, -80.0],
        };
        assert_eq!(d.eval(0.5), 0.0);
        assert_eq!(d.eval(1.0), 50.0);
        assert_eq!(d.eval(3.0), -80.0);
        assert_eq!(d.sup_abs(), 80.0);
    }

    #[test]
    fn validation_rejects_bad_params() {
        let mut p = car1();
        p.mass = 0.0;
        assert!(p.validate("v").is_err());
        let mut p = car1();
        p.friction_smoothing = 0.0;
        assert!(p.validate("v").is_err());
        let mut p = car1();
        p.slope = SlopeProfile::Constant { angle: 2.0 };
        assert!(p.validate("v").is_err());
        assert!(car1().validate("v").is_ok());
    }

    proptest! {
        #[test]
        fn aero_quadratic(v in 0.01f64..80.0) {
            let p = car1();
            let a1 = aero_drag(&p, 0.0, 0.0, v);
            let a2 = aero_drag(&p, 0.0, 0.0, 2.0 * v);
            prop_assert!((a2 - 4.0 * a1).abs() <= 1e-12 * a2.abs().max(1.0));
        }

        #[test]
        fn rolling_bounded_and_odd(v in -50.0f64..50.0) {
            let p = car1();
            let cap = p.mass * GRAVITY * p.rolling_coeff;
            let r = rolling_friction(&p, v);
            prop_assert!(r.abs() <= cap);
            prop_assert_eq!(rolling_friction(&p, -v), -r);
        }

        #[test]
        fn rolling_strictly_increasing(v in -0.03f64..0.03, dv in 1e-4f64..1e-2) {
            // erf saturates in f64 far from zero, so probe where it is resolvable
            let p = car1();
            prop_assert!(rolling_friction(&p, v + dv) > rolling_friction(&p, v));
        }

        #[test]
        fn affine_in_input(t in 0.0f64..40.0, x in -500.0f64..500.0, v in -30.0f64..30.0,
                           u in -1e4f64..1e4, du in -1e4f64..1e4) {
            let p = VehicleParams::alternating(2);
            let a0 = acceleration(&p, t, x, v, u);
            let a1 = acceleration(&p, t, x, v, u + du);
            prop_assert!(((a1 - a0) - du / p.mass).abs() < 1e-9);
        }

        #[test]
        fn doubling_net_force_doubles_acceleration(v in -30.0f64..30.0, u in -1e4f64..1e4) {
            let p = VehicleParams::alternating(1);
            let f = total_force(&p, 0.0, 0.0, v).total;
            let a = acceleration(&p, 0.0, 0.0, v, u);
            // u' - f = 2 (u - f)
            let a2 = acceleration(&p, 0.0, 0.0, v, 2.0 * u - f);
            prop_assert!((a2 - 2.0 * a).abs() < 1e-9);
        }
    }

    #[test]
    fn forces_continuous_on_grid() {
        let mut p = car1();
        p.slope = SlopeProfile::Sinusoidal {
            mean: 0.02,
            amplitude: 0.05,
            wavelength: 300.0,
        };
        p.air_density = AirDensityProfile::Sinusoidal {
            mean: 1.3,
            amplitude: 0.1,
            period: 10.0,
        };
        let h = 1e-7;
        for i in -20..=20 {
            let v = i as f64 * 0.75;
            let (t, x) = (0.37 * i as f64 + 1.0, 11.0 * i as f64);
            let f0 = total_force(&p, t, x, v).total;
            let f1 = total_force(&p, t + h, x + h, v + h).total;
            // rolling term has slope up to m g C_r alpha 2/sqrt(pi) ≈ 1.3e4 N/(m/s)
            assert!((f1 - f0).abs() < 1e5 * h, "jump at v = {v}");
        }
    }
}
