//! Scenario execution behind the `platoon` binary.
//!
//! Exit codes: 0 when the run completed and every enabled check passed,
//! 2 when a check failed, 3 when the integration could not be completed
//! (domain exit, non-finite state, unreachable tolerance or step budget),
//! 4 for configuration and usage errors.

use std::fs::{self, File};
use std::io::{BufReader, BufWriter};
use std::path::{Path, PathBuf};
use std::time::Instant;

use platoon_core::plot::{write_plot, PlotKind};
use platoon_core::sim::csv::{read_csv, write_csv, CsvError};
use platoon_core::sim::RunMeta;
use platoon_core::{
    assumption_report, integrate, load_config, preset, theorem_report, AssumptionReport,
    ConfigError, LeaderTrajectory, ScenarioConfig, SimError, SimulationTrace, TheoremReport,
};
use serde::Serialize;
use serde_json::Value;
use thiserror::Error;

pub const EXIT_PASS: i32 = 0;
pub const EXIT_CHECK_FAILED: i32 = 2;
pub const EXIT_DOMAIN: i32 = 3;
pub const EXIT_CONFIG: i32 = 4;

/// Environment variable that replaces the default output directory.
pub const OUT_DIR_ENV: &str = "PLATOON_OUT_DIR";

#[derive(Debug, Error)]
pub enum CliError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("{0}")]
    Usage(String),
    #[error("cannot write {path}: {source}")]
    Output {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("cannot read trace {path}: {source}")]
    Trace {
        path: String,
        #[source]
        source: CsvError,
    },
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) | CliError::Usage(_) | CliError::Trace { .. } => EXIT_CONFIG,
            // an unwritable output location is an environment problem, not a
            // check failure
            CliError::Output { .. } => EXIT_CONFIG,
        }
    }
}

fn output_err(path: &Path) -> impl FnOnce(std::io::Error) -> CliError + '_ {
    move |source| CliError::Output {
        path: path.display().to_string(),
        source,
    }
}

/// Where a scenario comes from.
#[derive(Debug, Clone, PartialEq)]
pub enum ConfigSource {
    File(PathBuf),
    Preset(String),
}

impl ConfigSource {
    pub fn label(&self) -> String {
        match self {
            ConfigSource::File(p) => p.display().to_string(),
            ConfigSource::Preset(name) => format!("preset:{name}"),
        }
    }
}

/// Command-line overrides applied on top of a loaded config.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Overrides {
    pub sample_step: Option<f64>,
    /// Sets both the relative and absolute tolerance.
    pub tol: Option<f64>,
    pub brake_start: Option<f64>,
    pub no_checks: bool,
}

#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct RunFlags {
    pub plots: bool,
}

/// Loads, overrides and validates a scenario.
pub fn resolve_config(source: &ConfigSource, ov: &Overrides) -> Result<ScenarioConfig, CliError> {
    let mut cfg = match source {
        ConfigSource::File(path) => load_config(path)?,
        ConfigSource::Preset(name) => preset(name)?,
    };
    apply_overrides(&mut cfg, ov)?;
    cfg.validate()?;
    Ok(cfg)
}

pub fn apply_overrides(cfg: &mut ScenarioConfig, ov: &Overrides) -> Result<(), CliError> {
    if let Some(step) = ov.sample_step {
        cfg.integration.sample_step = step;
    }
    if let Some(tol) = ov.tol {
        cfg.integration.rel_tol = tol;
        cfg.integration.abs_tol = tol;
    }
    if let Some(start) = ov.brake_start {
        match &mut cfg.leader {
            LeaderTrajectory::BrakeProfile { brake_start, .. } => *brake_start = start,
            _ => {
                return Err(CliError::Usage(
                    "--brake-start applies only to a brake-profile leader".into(),
                ))
            }
        }
    }
    if ov.no_checks {
        cfg.checks.enabled = false;
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunManifest {
    pub config: String,
    pub out_dir: PathBuf,
    pub artifacts: Vec<PathBuf>,
    pub exit_status: i32,
    /// One-line outcome, e.g. the failed check or the domain violation.
    pub outcome: String,
    pub wall_clock_secs: f64,
}

#[derive(Debug, Serialize)]
struct ReportFile<'a> {
    config: &'a str,
    checks_enabled: bool,
    passed: bool,
    assumptions: &'a AssumptionReport,
    theorem: &'a TheoremReport,
    run: &'a RunMeta,
}

#[derive(Debug, Serialize)]
struct FailureFile<'a> {
    config: &'a str,
    error: String,
    time: Option<f64>,
    vehicle: Option<usize>,
    /// `(t, min_i psi - |w_i|)` over the last accepted steps.
    margin_history: Vec<(f64, f64)>,
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), CliError> {
    let text = serde_json::to_string_pretty(value)
        .map_err(|e| std::io::Error::other(e.to_string()))
        .map_err(output_err(path))?;
    fs::write(path, text + "\n").map_err(output_err(path))
}

fn write_trace(path: &Path, trace: &SimulationTrace) -> Result<(), CliError> {
    let file = File::create(path).map_err(output_err(path))?;
    write_csv(trace, BufWriter::new(file)).map_err(output_err(path))
}

/// Writes `report.txt` and `report.json`; returns whether the checks passed.
fn write_reports(
    out_dir: &Path,
    label: &str,
    cfg: &ScenarioConfig,
    trace: &SimulationTrace,
    artifacts: &mut Vec<PathBuf>,
) -> Result<(bool, String), CliError> {
    let assumptions = assumption_report(cfg).map_err(ConfigError::from)?;
    let theorem = theorem_report(trace, cfg).map_err(ConfigError::from)?;
    let passed = theorem.passed();

    let mut text = format!("scenario: {label}\n");
    text.push_str(&format!(
        "samples: {}, accepted steps: {}, rejected steps: {}\n\n",
        trace.len(),
        trace.meta.accepted_steps,
        trace.meta.rejected_steps
    ));
    text.push_str(&theorem.to_text());
    if !cfg.checks.enabled {
        text.push_str("\nchecks disabled; the verdicts above are informational\n");
    }
    let txt = out_dir.join("report.txt");
    fs::write(&txt, &text).map_err(output_err(&txt))?;
    artifacts.push(txt);

    let json = out_dir.join("report.json");
    write_json(
        &json,
        &ReportFile {
            config: label,
            checks_enabled: cfg.checks.enabled,
            passed,
            assumptions: &assumptions,
            theorem: &theorem,
            run: &trace.meta,
        },
    )?;
    artifacts.push(json);

    let summary = if passed {
        let flag = if theorem.velocity_flagged {
            " (velocity bound flagged)"
        } else {
            ""
        };
        format!("all checks passed{flag}")
    } else {
        let mut failed = Vec::new();
        if !theorem.corridor_strict_ok || !theorem.corridor_ok {
            failed.push("corridor");
        }
        if !theorem.funnel_ok {
            failed.push("funnel");
        }
        if !theorem.all_finite {
            failed.push("finiteness");
        }
        format!("failed checks: {}", failed.join(", "))
    };
    Ok((passed, summary))
}

fn failure_details(err: &SimError) -> (Option<f64>, Option<usize>, Vec<(f64, f64)>) {
    match err {
        SimError::DomainExit {
            time,
            violation,
            margin_history,
            ..
        } => (Some(*time), Some(violation.index), margin_history.clone()),
        SimError::OutOfDomain { time, violation } => (Some(*time), Some(violation.index), vec![]),
        SimError::InitialState(v) => (Some(0.0), Some(v.index), vec![]),
        SimError::NonFinite { time, .. }
        | SimError::TooManySteps { time }
        | SimError::ToleranceUnreachable { time, .. } => {
            (Some(*time), None, vec![])
        }
        SimError::Config(_) => (None, None, vec![]),
    }
}

/// Runs one validated scenario and writes its artifacts into `out_dir`.
pub fn run(
    cfg: &ScenarioConfig,
    label: &str,
    out_dir: &Path,
    flags: RunFlags,
) -> Result<RunManifest, CliError> {
    let started = Instant::now();
    fs::create_dir_all(out_dir).map_err(output_err(out_dir))?;
    let mut artifacts = Vec::new();

    let used = out_dir.join("config.json");
    let text = cfg
        .to_json()
        .map_err(|e| CliError::Usage(format!("config cannot be serialized: {e}")))?;
    fs::write(&used, text + "\n").map_err(output_err(&used))?;
    artifacts.push(used);

    let (exit_status, outcome) = match integrate(cfg) {
        Ok(trace) => {
            let csv = out_dir.join("trace.csv");
            write_trace(&csv, &trace)?;
            artifacts.push(csv);
            let (passed, summary) = write_reports(out_dir, label, cfg, &trace, &mut artifacts)?;
            if flags.plots {
                let corridor = Some((cfg.controller.d_min, cfg.controller.d_max));
                for kind in PlotKind::ALL {
                    let path = out_dir.join(format!("{}.svg", kind.name()));
                    write_plot(&trace, kind, corridor, &path).map_err(output_err(&path))?;
                    artifacts.push(path);
                }
            }
            if !cfg.checks.enabled {
                (EXIT_PASS, format!("completed; checks disabled ({summary})"))
            } else if passed {
                (EXIT_PASS, summary)
            } else {
                (EXIT_CHECK_FAILED, summary)
            }
        }
        Err(SimError::Config(e)) => return Err(ConfigError::from(e).into()),
        Err(err) => {
            let (time, vehicle, margin_history) = failure_details(&err);
            let path = out_dir.join("failure.json");
            write_json(
                &path,
                &FailureFile {
                    config: label,
                    error: err.to_string(),
                    time,
                    vehicle,
                    margin_history,
                },
            )?;
            artifacts.push(path);
            (EXIT_DOMAIN, err.to_string())
        }
    };

    let mut manifest = RunManifest {
        config: label.to_string(),
        out_dir: out_dir.to_path_buf(),
        artifacts,
        exit_status,
        outcome,
        wall_clock_secs: 0.0,
    };
    let path = out_dir.join("manifest.json");
    manifest.artifacts.push(path.clone());
    manifest.wall_clock_secs = started.elapsed().as_secs_f64();
    write_json(&path, &manifest)?;
    Ok(manifest)
}

/// Re-analyses a trace CSV against `cfg`, writing reports into `out_dir`.
pub fn report(
    trace_path: &Path,
    cfg: &ScenarioConfig,
    label: &str,
    out_dir: &Path,
) -> Result<RunManifest, CliError> {
    let started = Instant::now();
    let file = File::open(trace_path).map_err(|e| CliError::Trace {
        path: trace_path.display().to_string(),
        source: CsvError::Io(e),
    })?;
    let trace = read_csv(BufReader::new(file), &cfg.controller).map_err(|source| CliError::Trace {
        path: trace_path.display().to_string(),
        source,
    })?;
    if trace.vehicles() != cfg.len() {
        return Err(CliError::Usage(format!(
            "trace has {} vehicles but the config has {}",
            trace.vehicles(),
            cfg.len()
        )));
    }
    fs::create_dir_all(out_dir).map_err(output_err(out_dir))?;
    let mut artifacts = Vec::new();
    let (passed, outcome) = write_reports(out_dir, label, cfg, &trace, &mut artifacts)?;
    Ok(RunManifest {
        config: label.to_string(),
        out_dir: out_dir.to_path_buf(),
        artifacts,
        exit_status: if passed || !cfg.checks.enabled {
            EXIT_PASS
        } else {
            EXIT_CHECK_FAILED
        },
        outcome,
        wall_clock_secs: started.elapsed().as_secs_f64(),
    })
}

/// One `--set path=v1,v2,...` axis of a sweep; `path` is a dotted key into
/// the JSON config, e.g. `controller.gain2`.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepAxis {
    pub path: String,
    pub values: Vec<Value>,
}

impl SweepAxis {
    pub fn parse(spec: &str) -> Result<Self, CliError> {
        let (path, values) = spec
            .split_once('=')
            .ok_or_else(|| CliError::Usage(format!("expected key=v1,v2,... in {spec:?}")))?;
        let values: Vec<Value> = values
            .split(',')
            .map(|v| serde_json::from_str(v.trim()).unwrap_or_else(|_| Value::String(v.trim().into())))
            .collect();
        if path.is_empty() || values.is_empty() {
            return Err(CliError::Usage(format!("empty sweep axis {spec:?}")));
        }
        Ok(Self {
            path: path.to_string(),
            values,
        })
    }
}

fn set_path(root: &mut Value, path: &str, value: Value) -> Result<(), CliError> {
    let mut node = root;
    let keys: Vec<&str> = path.split('.').collect();
    for (k, key) in keys.iter().enumerate() {
        let obj = node
            .as_object_mut()
            .ok_or_else(|| CliError::Usage(format!("{path}: {key} is not inside an object")))?;
        if k + 1 == keys.len() {
            obj.insert(key.to_string(), value);
            return Ok(());
        }
        node = obj
            .get_mut(*key)
            .ok_or_else(|| CliError::Usage(format!("{path}: no key {key}")))?;
    }
    unreachable!("split always yields one key")
}

/// Every combination of the axes applied to `base`, with a short label
/// such as `controller.gain2=1000`.
pub fn expand_sweep(
    base: &ScenarioConfig,
    axes: &[SweepAxis],
) -> Result<Vec<(String, ScenarioConfig)>, CliError> {
    let base_json: Value = serde_json::to_value(base)
        .map_err(|e| CliError::Usage(format!("config cannot be serialized: {e}")))?;
    let mut points: Vec<(Vec<String>, Value)> = vec![(Vec::new(), base_json)];
    for axis in axes {
        let mut next = Vec::with_capacity(points.len() * axis.values.len());
        for (labels, json) in &points {
            for v in &axis.values {
                let mut j = json.clone();
                set_path(&mut j, &axis.path, v.clone())?;
                let mut l = labels.clone();
                l.push(format!("{}={}", axis.path, v));
                next.push((l, j));
            }
        }
        points = next;
    }
    points
        .into_iter()
        .map(|(labels, json)| {
            let cfg = ScenarioConfig::from_json(&json.to_string())?;
            cfg.validate()?;
            Ok((labels.join(" "), cfg))
        })
        .collect()
}

/// Runs every sweep point in parallel, each in `out_dir/run-NNN`.
pub fn sweep(
    points: &[(String, ScenarioConfig)],
    out_dir: &Path,
    flags: RunFlags,
) -> Result<Vec<RunManifest>, CliError> {
    use rayon::prelude::*;
    fs::create_dir_all(out_dir).map_err(output_err(out_dir))?;
    let manifests: Vec<RunManifest> = points
        .par_iter()
        .enumerate()
        .map(|(k, (label, cfg))| run(cfg, label, &out_dir.join(format!("run-{k:03}")), flags))
        .collect::<Result<_, _>>()?;
    write_json(&out_dir.join("sweep.json"), &manifests)?;
    Ok(manifests)
}

/// The most severe exit status of a set of runs.
pub fn combined_status(manifests: &[RunManifest]) -> i32 {
    manifests.iter().map(|m| m.exit_status).max().unwrap_or(EXIT_PASS)
}
