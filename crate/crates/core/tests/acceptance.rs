//! Acceptance suite. Each test prints one `PASS`/`FAIL` line to stderr
//! (bypassing output capture) and then asserts on the same verdict.

use std::io::Write;
use std::sync::OnceLock;

use platoon_core::analysis::MassChain;
use platoon_core::dynamics::{aero_drag, gravity_force, rolling_friction, SlopeProfile};
use platoon_core::funnel::{funnel_gain, funnel_variable};
use platoon_core::sim::csv::write_csv;
use platoon_core::sim::max_state_deviation;
use platoon_core::{
    d_bar_estimate, delta_of_initial, epsilon1, integrate, mass_chain_check, preset,
    refine_check, theorem_report, FunnelBoundary, MassChainParams, ScenarioConfig,
    SimulationTrace, TheoremReport, VehicleParams,
};

const GAP_VARIATION_LIMIT: f64 = 3.0;
const D_BAR: f64 = 176.58;
const PLATEAU_SPREAD_LIMIT: f64 = 1.0;
const PLATEAU_TIME: f64 = 10.0;
const REFINE_LIMIT: f64 = 1e-6;
const FD_LIMIT: f64 = 1e-3;

struct Run {
    cfg: ScenarioConfig,
    trace: SimulationTrace,
    report: TheoremReport,
}

fn run(name: &str) -> Run {
    let cfg = preset(name).unwrap();
    let trace = integrate(&cfg).unwrap_or_else(|e| panic!("{name}: {e}"));
    let report = theorem_report(&trace, &cfg).unwrap();
    Run { cfg, trace, report }
}

fn scenario1() -> &'static Run {
    static RUN: OnceLock<Run> = OnceLock::new();
    RUN.get_or_init(|| run("scenario1"))
}

fn scenario2() -> &'static Run {
    static RUN: OnceLock<Run> = OnceLock::new();
    RUN.get_or_init(|| run("scenario2"))
}

fn verdict(label: &str, ok: bool, detail: String) {
    let line = format!(
        "acceptance {label}: {} ({detail})",
        if ok { "PASS" } else { "FAIL" }
    );
    let _ = writeln!(std::io::stderr(), "{line}");
    assert!(ok, "{line}");
}

fn gap_extremes(trace: &SimulationTrace) -> Vec<(f64, f64)> {
    let mut ext = vec![(f64::INFINITY, f64::NEG_INFINITY); trace.vehicles()];
    for s in &trace.samples {
        for (e, g) in ext.iter_mut().zip(s.gaps()) {
            *e = (e.0.min(g), e.1.max(g));
        }
    }
    ext
}

fn max_abs_accel(trace: &SimulationTrace, index: usize, from: f64) -> f64 {
    trace
        .samples
        .iter()
        .filter(|s| s.time() >= from)
        .map(|s| s.accelerations[index].abs())
        .fold(0.0, f64::max)
}

/// Largest `|(x(t+h) - x(t-h)) / 2h - v(t)|` over interior samples.
fn central_difference_error(trace: &SimulationTrace) -> (f64, f64, usize) {
    let s = &trace.samples;
    let mut worst = (0.0, 0.0, 0);
    for k in 1..s.len().saturating_sub(1) {
        let span = s[k + 1].time() - s[k - 1].time();
        for i in 0..trace.vehicles() {
            let dx = (s[k + 1].state.positions[i] - s[k - 1].state.positions[i]) / span;
            let err = (dx - s[k].state.velocities[i]).abs();
            if err > worst.0 {
                worst = (err, s[k].time(), i + 1);
            }
        }
    }
    worst
}

#[test]
fn a01_scenario1_gaps_stay_in_corridor() {
    let r = scenario1();
    let cp = &r.cfg.controller;
    let eps1 = epsilon1(&cp.funnel, delta_of_initial(&r.cfg).unwrap(), 40.0);
    let ext = gap_extremes(&r.trace);
    let lo = ext.iter().map(|e| e.0).fold(f64::INFINITY, f64::min);
    let hi = ext.iter().map(|e| e.1).fold(f64::NEG_INFINITY, f64::max);
    let last = r.trace.samples.last().unwrap().time();
    let ok = last == 40.0
        && lo > cp.d_min
        && hi < cp.d_max
        && lo >= cp.d_min + eps1
        && hi <= cp.d_max - eps1;
    verdict(
        "[1/10] scenario 1 corridor",
        ok,
        format!(
            "gaps in [{lo:.6}, {hi:.6}] m over [0, {last}] s; required [{:.6}, {:.6}] with eps1 = {eps1:.6}",
            cp.d_min + eps1,
            cp.d_max - eps1
        ),
    );
}

#[test]
fn a02_scenario2_gap_variation() {
    let r = scenario2();
    let ext = gap_extremes(&r.trace);
    let (worst, idx) = ext
        .iter()
        .enumerate()
        .map(|(i, e)| (e.1 - e.0, i + 1))
        .fold((0.0, 0), |a, b| if b.0 > a.0 { b } else { a });
    verdict(
        "[2/10] scenario 2 gap variation",
        worst <= GAP_VARIATION_LIMIT,
        format!("largest per-pair max-min {worst:.6} m at pair {idx}; limit {GAP_VARIATION_LIMIT} m"),
    );
}

#[test]
fn a03_funnel_containment() {
    let mut ok = true;
    let mut detail = Vec::new();
    for (name, r) in [("scenario 1", scenario1()), ("scenario 2", scenario2())] {
        let touched = r
            .trace
            .samples
            .iter()
            .flat_map(|s| s.pairs.iter().map(move |p| p.funnel_var.abs() >= s.psi))
            .filter(|&t| t)
            .count();
        ok &= r.report.eps2_emp > 0.0 && r.report.funnel_ok && touched == 0;
        detail.push(format!(
            "{name}: eps2_emp = {:.6e} m/s, {touched} samples with |w| >= psi",
            r.report.eps2_emp
        ));
    }
    verdict("[3/10] funnel containment", ok, detail.join("; "));
}

#[test]
fn a04_velocity_bound() {
    let mut ok = true;
    let mut detail = Vec::new();
    for (name, r) in [("scenario 1", scenario1()), ("scenario 2", scenario2())] {
        let d_bar = d_bar_estimate(&r.cfg).unwrap();
        ok &= (d_bar - D_BAR).abs() < 1e-9;
        let eps2 = r.report.eps2_emp;
        let sampled_leader = r
            .trace
            .samples
            .iter()
            .map(|s| s.leader.velocity.abs())
            .fold(0.0, f64::max);
        let v0_sup = r.report.leader_speed_sup.max(sampled_leader);
        let mut worst_slack = f64::INFINITY;
        for i in 1..=r.trace.vehicles() {
            let measured = r
                .trace
                .samples
                .iter()
                .map(|s| s.state.velocities[i - 1].abs())
                .fold(0.0, f64::max);
            let bound = 26.0
                + (2.0 / eps2 + D_BAR) / (0.5 * 3600.0)
                + (2.0f64 / 3.0).powi(i as i32) * v0_sup;
            worst_slack = worst_slack.min(bound - measured);
            ok &= measured <= bound;
        }
        ok &= r.report.velocity_ok();
        detail.push(format!(
            "{name}: d_bar = {d_bar:.4} N, smallest bound slack {worst_slack:.4} m/s"
        ));
    }
    verdict("[4/10] velocity bound", ok, detail.join("; "));
}

#[test]
fn a05_scenario2_acceleration_attenuation() {
    let r = scenario2();
    let n = r.trace.vehicles();
    let a1 = max_abs_accel(&r.trace, 0, 0.0);
    let a_last = max_abs_accel(&r.trace, n - 1, 0.0);
    let a0 = r.report.leader_accel_sup;
    let ok = a_last < a1 && a_last <= 0.5 * a0;
    verdict(
        "[5/10] scenario 2 attenuation",
        ok,
        format!(
            "max|a_1| = {a1:.4}, max|a_{n}| = {a_last:.4}, 0.5 ||a_0|| = {:.4} m/s^2; \
             after t = 2 s max|a_{n}| = {:.4}",
            0.5 * a0,
            max_abs_accel(&r.trace, n - 1, 2.0)
        ),
    );
}

#[test]
fn a06_scenario1_velocity_plateau() {
    let r = scenario1();
    let spread_at = |t: f64| {
        let s = r
            .trace
            .samples
            .iter()
            .find(|s| (s.time() - t).abs() < 1e-9)
            .unwrap();
        let v = &s.state.velocities;
        v.iter().copied().fold(f64::NEG_INFINITY, f64::max)
            - v.iter().copied().fold(f64::INFINITY, f64::min)
    };
    let spread = spread_at(PLATEAU_TIME);
    verdict(
        "[6/10] scenario 1 velocity plateau",
        spread < PLATEAU_SPREAD_LIMIT,
        format!(
            "max_i v_i - min_i v_i = {spread:.4} m/s at t = {PLATEAU_TIME} s (limit {PLATEAU_SPREAD_LIMIT}); \
             {:.4} m/s at t = 14.9 s",
            spread_at(14.9)
        ),
    );
}

#[test]
fn a07_bounded_inputs() {
    let mut ok = true;
    let mut detail = Vec::new();
    for (name, r) in [("scenario 1", scenario1()), ("scenario 2", scenario2())] {
        let finite = r.trace.samples.iter().all(|s| {
            s.state.positions.iter().all(|v| v.is_finite())
                && s.state.velocities.iter().all(|v| v.is_finite())
                && s.accelerations.iter().all(|v| v.is_finite())
                && s.pairs.iter().all(|p| {
                    p.control.is_finite() && p.funnel_var.is_finite() && p.funnel_gain.is_finite()
                })
        });
        let sups = &r.report.input_sup;
        ok &= finite
            && r.report.all_finite
            && sups.len() == r.trace.vehicles()
            && sups.iter().all(|u| u.is_finite());
        detail.push(format!(
            "{name}: max_i ||u_i|| = {:.1} N",
            sups.iter().copied().fold(0.0, f64::max)
        ));
    }
    verdict("[7/10] bounded inputs", ok, detail.join("; "));
}

#[test]
fn a08_integrator_soundness() {
    let mut small = preset("scenario2").unwrap();
    small.platoon.count = 5;
    let refine = refine_check(&small).unwrap();
    let (fd2, t2, i2) = central_difference_error(&scenario2().trace);
    let (fd1, t1, i1) = central_difference_error(&scenario1().trace);
    let ok = refine < REFINE_LIMIT && fd2 < FD_LIMIT && fd1 < FD_LIMIT;
    verdict(
        "[8/10] integrator soundness",
        ok,
        format!(
            "refine deviation {refine:.3e} (limit {REFINE_LIMIT:e}); \
             difference-quotient error {fd2:.3e} (scenario 2, t = {t2:.2}, i = {i2}), \
             {fd1:.3e} (scenario 1, t = {t1:.2}, i = {i1}), limit {FD_LIMIT:e}"
        ),
    );
}

#[test]
fn a09_property_checks() {
    let s1 = preset("scenario1").unwrap();
    let cp = &s1.controller;
    let m = cp.gap_range();
    let mut failures: Vec<&str> = Vec::new();
    let mut check = |ok: bool, what: &'static str| {
        if !ok {
            failures.push(what);
        }
    };

    // barrier algebra
    for dv in [-30.0, -1.0, 0.0, 0.25, 7.5] {
        let w = funnel_variable(dv, -m / 2.0, cp).unwrap();
        check((w - dv).abs() <= 1e-14 * (1.0 + dv.abs()), "midpoint cancellation");
    }
    let grid: Vec<f64> = (1..1000).map(|k| -m * k as f64 / 1000.0).collect();
    let ws: Vec<f64> = grid.iter().map(|&xi| funnel_variable(0.0, xi, cp).unwrap()).collect();
    check(ws.windows(2).all(|p| p[1] < p[0]), "monotone in spacing error");
    check(funnel_variable(0.0, -1e-9, cp).unwrap() > 1e8, "divergence at d_min");
    check(funnel_variable(0.0, -m + 1e-9, cp).unwrap() < -1e8, "divergence at d_max");
    check(funnel_variable(0.0, 0.0, cp).is_err(), "barrier at d_min");
    check(funnel_variable(0.0, -m, cp).is_err(), "barrier at d_max");

    // force model
    let car = VehicleParams::passenger_car(1500.0);
    for v in [0.1, 1.0, 12.0, 30.0] {
        check(aero_drag(&car, 0.0, 0.0, -v) == -aero_drag(&car, 0.0, 0.0, v), "drag odd");
        check(
            (aero_drag(&car, 0.0, 0.0, 2.0 * v) - 4.0 * aero_drag(&car, 0.0, 0.0, v)).abs()
                < 1e-9 * aero_drag(&car, 0.0, 0.0, 2.0 * v),
            "drag quadratic",
        );
        check(rolling_friction(&car, -v) == -rolling_friction(&car, v), "friction odd");
    }
    let mut hill = VehicleParams::passenger_car(1000.0);
    hill.slope = SlopeProfile::Constant { angle: 0.1 };
    let mut heavy = hill.clone();
    heavy.mass = 3000.0;
    check(
        (gravity_force(&heavy, 5.0) - 3.0 * gravity_force(&hill, 5.0)).abs() < 1e-9,
        "gravity scales with mass",
    );

    // funnel gain blow-up
    let psi0 = cp.funnel.eval(0.0);
    check(funnel_gain(0.0, psi0 * (1.0 - 1e-12), cp).unwrap() > 1e11, "gain blow-up");
    check(funnel_gain(0.0, psi0, cp).is_err(), "gain undefined on the boundary");
    check(funnel_gain(0.0, 0.0, cp).unwrap() == 1.0 / psi0, "gain at centre");

    // delta and eps1 arithmetic
    let delta = delta_of_initial(&s1).unwrap();
    check((delta - 67.0 / 36.0).abs() < 1e-12, "delta of the reference start");
    check((delta - 1.861111).abs() < 1e-6, "delta rounding");
    let psi = FunnelBoundary::exponential(1.0, 2.0, 1.0);
    check((epsilon1(&psi, delta, 40.0) - 67.0 / 170.0).abs() < 1e-12, "eps1 of the reference start");
    check((epsilon1(&psi, 1.0, 40.0) - 1.0 / 3.0).abs() < 1e-12, "eps1 with delta = 1");
    check((epsilon1(&psi, 1e300, 40.0) - 0.5).abs() < 1e-12, "eps1 limit");

    // mass-chain truth table
    let table: Vec<f64> = s1.masses().unwrap();
    let params = |n0| MassChainParams { p: 0.2, q: 0.8, n0 };
    check(
        matches!(mass_chain_check(&table, params(21)), Ok(MassChain::Vacuous { .. })),
        "mass chain vacuous beyond N",
    );
    check(
        matches!(mass_chain_check(&table, params(2)), Ok(MassChain::Fails { index: 2, .. })),
        "mass chain fails at the first increase",
    );
    check(
        matches!(mass_chain_check(&[1000.0], params(1)), Ok(MassChain::Holds { .. })),
        "mass chain holds for one vehicle",
    );
    check(
        mass_chain_check(&table, MassChainParams { p: 0.5, q: 0.7, n0: 2 }).is_err(),
        "mass chain rejects (1 + p) q >= 1",
    );

    let ok = failures.is_empty();
    verdict(
        "[9/10] property checks",
        ok,
        if ok {
            "barrier algebra, force model, gain blow-up, delta/eps1, mass chain".to_string()
        } else {
            format!("failed: {}", failures.join(", "))
        },
    );
}

#[test]
fn a10_determinism() {
    let cfg = preset("scenario1").unwrap();
    let csv = |trace: &SimulationTrace| {
        let mut buf = Vec::new();
        write_csv(trace, &mut buf).unwrap();
        buf
    };
    let first = csv(&scenario1().trace);
    let second = integrate(&cfg).unwrap();
    let again = csv(&second);
    let ok = first == again && max_state_deviation(&scenario1().trace, &second) == 0.0;
    verdict(
        "[10/10] determinism",
        ok,
        format!("two scenario 1 CSVs of {} bytes, identical: {}", first.len(), first == again),
    );
}
