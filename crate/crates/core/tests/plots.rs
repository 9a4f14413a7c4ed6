use platoon_core::plot::{render, PlotKind};
use platoon_core::{integrate, preset};

fn attr(tag: &str, name: &str) -> String {
    let key = format!("{name}=\"");
    let start = tag.find(&key).unwrap() + key.len();
    let end = start + tag[start..].find('"').unwrap();
    tag[start..end].to_string()
}

fn tags<'a>(svg: &'a str, element: &str) -> Vec<&'a str> {
    svg.lines()
        .filter(|l| l.trim_start().starts_with(&format!("<{element} ")))
        .collect()
}

/// Screen y coordinates of one polyline.
fn ys(tag: &str) -> Vec<f64> {
    attr(tag, "points")
        .split_whitespace()
        .map(|p| p.split(',').nth(1).unwrap().parse().unwrap())
        .collect()
}

#[test]
fn scenario1_distances_stay_between_reference_lines() {
    let cfg = preset("scenario1").unwrap();
    let trace = integrate(&cfg).unwrap();
    let svg = render(
        &trace,
        PlotKind::Distances,
        Some((cfg.controller.d_min, cfg.controller.d_max)),
    );
    let refs: Vec<&str> = tags(&svg, "line")
        .into_iter()
        .filter(|t| t.contains("data-ref"))
        .collect();
    assert_eq!(refs.len(), 2);
    let y_of = |name: &str| -> f64 {
        let t = refs.iter().find(|t| t.contains(&format!("data-ref=\"{name}\""))).unwrap();
        attr(t, "y1").parse().unwrap()
    };
    // screen y grows downwards
    let (bottom, top) = (y_of("d_min"), y_of("d_max"));
    assert!(bottom > top);
    let lines = tags(&svg, "polyline");
    assert_eq!(lines.len(), 20);
    for l in lines {
        assert!(ys(l).iter().all(|&y| y > top && y < bottom));
    }
}

#[test]
fn scenario2_last_follower_accelerations_are_smaller() {
    let mut cfg = preset("scenario2").unwrap();
    cfg.integration.rel_tol = 1e-8;
    cfg.integration.abs_tol = 1e-8;
    let trace = integrate(&cfg).unwrap();
    let svg = render(&trace, PlotKind::Accelerations, None);
    let span = |series: &str| {
        let tag = tags(&svg, "polyline")
            .into_iter()
            .find(|t| t.contains(&format!("data-series=\"{series}\"")))
            .unwrap();
        let y = ys(tag);
        y.iter().copied().fold(f64::MIN, f64::max) - y.iter().copied().fold(f64::MAX, f64::min)
    };
    assert!(span("a_20") < span("a_1"));
    assert!(svg.contains("acceleration [m/s^2]"));
}

#[test]
fn every_kind_renders_deterministically() {
    let mut cfg = preset("scenario2").unwrap();
    cfg.platoon.count = 3;
    cfg.integration.horizon = 2.0;
    let trace = integrate(&cfg).unwrap();
    for kind in PlotKind::ALL {
        let a = render(&trace, kind, Some((2.0, 15.0)));
        assert_eq!(a, render(&trace, kind, Some((2.0, 15.0))));
        assert!(a.starts_with("<svg") && a.trim_end().ends_with("</svg>"));
        assert!(a.contains("time [s]"));
    }
}
