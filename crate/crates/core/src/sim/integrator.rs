//! Dormand–Prince 5(4) stepper with PI step-size control and rejection of
//! steps whose stages leave the admissible domain.

use crate::funnel::Violation;

/// A right-hand side that may be undefined outside its domain.
pub trait DomainSystem {
    fn dim(&self) -> usize;
    fn eval(&self, t: f64, y: &[f64], dy: &mut [f64]) -> Result<(), Violation>;
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepperOptions {
    pub rel_tol: f64,
    pub abs_tol: f64,
    pub min_step: f64,
    pub max_step: f64,
    pub initial_step: f64,
    pub max_steps: usize,
}

impl Default for StepperOptions {
    fn default() -> Self {
        Self {
            rel_tol: 1e-10,
            abs_tol: 1e-10,
            min_step: 1e-12,
            max_step: 1.0,
            initial_step: 1e-4,
            max_steps: 50_000_000,
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct StepStats {
    pub accepted: usize,
    pub rejected_error: usize,
    pub rejected_domain: usize,
    pub evaluations: usize,
}

/// An accepted step `[t0, t1]` with end-point states and slopes.
pub struct Step<'a> {
    pub t0: f64,
    pub y0: &'a [f64],
    pub f0: &'a [f64],
    pub t1: f64,
    pub y1: &'a [f64],
    pub f1: &'a [f64],
    /// Interior stages `k3..k6`, used by the continuous extension.
    pub stages: [&'a [f64]; 4],
}

#[derive(Debug, Clone, PartialEq)]
pub enum StepFailure {
    /// Every attempt down to the minimum step size left the domain.
    DomainExit {
        t: f64,
        step: f64,
        violation: Violation,
    },
    NonFinite { t: f64, step: f64 },
    /// The error test still fails at the minimum step.
    ToleranceUnreachable { t: f64, step: f64 },
    TooManySteps { t: f64 },
    /// The initial point itself is outside the domain.
    InitialPoint(Violation),
    /// The observer asked to stop.
    Aborted { t: f64 },
}

// Dormand–Prince coefficients
const C2: f64 = 1.0 / 5.0;
const C3: f64 = 3.0 / 10.0;
const C4: f64 = 4.0 / 5.0;
const C5: f64 = 8.0 / 9.0;
const A21: f64 = 1.0 / 5.0;
const A31: f64 = 3.0 / 40.0;
const A32: f64 = 9.0 / 40.0;
const A41: f64 = 44.0 / 45.0;
const A42: f64 = -56.0 / 15.0;
const A43: f64 = 32.0 / 9.0;
const A51: f64 = 19372.0 / 6561.0;
const A52: f64 = -25360.0 / 2187.0;
const A53: f64 = 64448.0 / 6561.0;
const A54: f64 = -212.0 / 729.0;
const A61: f64 = 9017.0 / 3168.0;
const A62: f64 = -355.0 / 33.0;
const A63: f64 = 46732.0 / 5247.0;
const A64: f64 = 49.0 / 176.0;
const A65: f64 = -5103.0 / 18656.0;
const A71: f64 = 35.0 / 384.0;
const A73: f64 = 500.0 / 1113.0;
const A74: f64 = 125.0 / 192.0;
const A75: f64 = -2187.0 / 6784.0;
const A76: f64 = 11.0 / 84.0;
// 5th order weights minus embedded 4th order weights
const E1: f64 = 71.0 / 57600.0;
const E3: f64 = -71.0 / 16695.0;
const E4: f64 = 71.0 / 1920.0;
const E5: f64 = -17253.0 / 339200.0;
const E6: f64 = 22.0 / 525.0;
const E7: f64 = -1.0 / 40.0;

const SAFETY: f64 = 0.9;
const FAC_MIN: f64 = 0.2;
const FAC_MAX: f64 = 10.0;
const BETA: f64 = 0.04;

/// Integrates from `(t0, y0)` to `t_end`, calling `observe` after every
/// accepted step. A step is rejected and halved when any stage, including
/// the end point, is outside the domain.
pub fn integrate<S, F>(
    sys: &S,
    t0: f64,
    y0: &[f64],
    t_end: f64,
    opts: &StepperOptions,
    mut observe: F,
) -> Result<StepStats, StepFailure>
where
    S: DomainSystem,
    F: FnMut(&Step<'_>) -> bool,
{
    let n = sys.dim();
    let mut stats = StepStats::default();
    let mut y = y0.to_vec();
    let mut f = vec![0.0; n];
    sys.eval(t0, &y, &mut f).map_err(StepFailure::InitialPoint)?;
    stats.evaluations += 1;

    let mut k2 = vec![0.0; n];
    let mut k3 = vec![0.0; n];
    let mut k4 = vec![0.0; n];
    let mut k5 = vec![0.0; n];
    let mut k6 = vec![0.0; n];
    let mut k7 = vec![0.0; n];
    let mut tmp = vec![0.0; n];
    let mut y_new = vec![0.0; n];

    let mut t = t0;
    let mut h = opts.initial_step.min(opts.max_step);
    let mut err_old: f64 = 1e-4;
    let mut after_reject = false;

    while t < t_end {
        if stats.accepted + stats.rejected_error + stats.rejected_domain >= opts.max_steps {
            return Err(StepFailure::TooManySteps { t });
        }
        let last = t + h >= t_end;
        if last {
            h = t_end - t;
        }

        let stages = (|| -> Result<(), Violation> {
            for i in 0..n {
                tmp[i] = y[i] + h * A21 * f[i];
            }
            sys.eval(t + C2 * h, &tmp, &mut k2)?;
            for i in 0..n {
                tmp[i] = y[i] + h * (A31 * f[i] + A32 * k2[i]);
            }
            sys.eval(t + C3 * h, &tmp, &mut k3)?;
            for i in 0..n {
                tmp[i] = y[i] + h * (A41 * f[i] + A42 * k2[i] + A43 * k3[i]);
            }
            sys.eval(t + C4 * h, &tmp, &mut k4)?;
            for i in 0..n {
                tmp[i] = y[i] + h * (A51 * f[i] + A52 * k2[i] + A53 * k3[i] + A54 * k4[i]);
            }
            sys.eval(t + C5 * h, &tmp, &mut k5)?;
            for i in 0..n {
                tmp[i] = y[i]
                    + h * (A61 * f[i] + A62 * k2[i] + A63 * k3[i] + A64 * k4[i] + A65 * k5[i]);
            }
            sys.eval(t + h, &tmp, &mut k6)?;
            for i in 0..n {
                y_new[i] = y[i]
                    + h * (A71 * f[i] + A73 * k3[i] + A74 * k4[i] + A75 * k5[i] + A76 * k6[i]);
            }
            sys.eval(t + h, &y_new, &mut k7)
        })();
        stats.evaluations += 6;

        if let Err(violation) = stages {
            stats.rejected_domain += 1;
            if h <= opts.min_step {
                return Err(StepFailure::DomainExit { t, step: h, violation });
            }
            h = (h / 2.0).max(opts.min_step);
            after_reject = true;
            continue;
        }

        let mut sum = 0.0;
        for i in 0..n {
            let e = h
                * (E1 * f[i] + E3 * k3[i] + E4 * k4[i] + E5 * k5[i] + E6 * k6[i] + E7 * k7[i]);
            let scale = opts.abs_tol + opts.rel_tol * y[i].abs().max(y_new[i].abs());
            sum += (e / scale) * (e / scale);
        }
        let err = (sum / n as f64).sqrt();

        if !err.is_finite() {
            if h <= opts.min_step {
                return Err(StepFailure::NonFinite { t, step: h });
            }
            stats.rejected_error += 1;
            h = (h / 2.0).max(opts.min_step);
            after_reject = true;
            continue;
        }

        let fac11 = err.powf(0.2 - BETA * 0.75);
        if err <= 1.0 {
            let t_new = if last { t_end } else { t + h };
            if !observe(&Step {
                t0: t,
                y0: &y,
                f0: &f,
                t1: t_new,
                y1: &y_new,
                f1: &k7,
                stages: [&k3, &k4, &k5, &k6],
            }) {
                return Err(StepFailure::Aborted { t: t_new });
            }
            stats.accepted += 1;
            std::mem::swap(&mut y, &mut y_new);
            std::mem::swap(&mut f, &mut k7);
            t = t_new;

            let mut fac = fac11 / err_old.powf(BETA);
            fac = (fac / SAFETY).clamp(1.0 / FAC_MAX, 1.0 / FAC_MIN);
            let mut h_new = h / fac;
            if after_reject {
                h_new = h_new.min(h);
            }
            err_old = err.max(1e-4);
            h = h_new.clamp(opts.min_step, opts.max_step);
            after_reject = false;
        } else {
            stats.rejected_error += 1;
            if h <= opts.min_step {
                return Err(StepFailure::ToleranceUnreachable { t, step: h });
            }
            h = (h / (fac11 / SAFETY).min(1.0 / FAC_MIN)).max(opts.min_step);
            after_reject = true;
        }
    }
    Ok(stats)
}

const D1: f64 = -12715105075.0 / 11282082432.0;
const D3: f64 = 87487479700.0 / 32700410799.0;
const D4: f64 = -10690763975.0 / 1880347072.0;
const D5: f64 = 701980252875.0 / 199316789632.0;
const D6: f64 = -1453857185.0 / 822651844.0;
const D7: f64 = 69997945.0 / 29380423.0;

/// Fourth-order continuous extension of an accepted step at `t` in
/// `[t0, t1]`.
pub fn dense(step: &Step<'_>, t: f64, out: &mut [f64]) {
    let h = step.t1 - step.t0;
    if h == 0.0 {
        out.copy_from_slice(step.y1);
        return;
    }
    let th = (t - step.t0) / h;
    let th1 = 1.0 - th;
    let [k3, k4, k5, k6] = step.stages;
    for (i, o) in out.iter_mut().enumerate() {
        let diff = step.y1[i] - step.y0[i];
        let bspl = h * step.f0[i] - diff;
        let r4 = diff - h * step.f1[i] - bspl;
        let r5 = h
            * (D1 * step.f0[i]
                + D3 * k3[i]
                + D4 * k4[i]
                + D5 * k5[i]
                + D6 * k6[i]
                + D7 * step.f1[i]);
        *o = step.y0[i] + th * (diff + th1 * (bspl + th * (r4 + th1 * r5)));
    }
}
