use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use platoon_cli::{
    combined_status, expand_sweep, report, resolve_config, run, sweep, CliError, ConfigSource,
    Overrides, RunFlags, SweepAxis, EXIT_CONFIG, EXIT_PASS, OUT_DIR_ENV,
};
use platoon_core::assumption_report;

#[derive(Parser)]
#[command(name = "platoon", version, about = "Simulate and check funnel-controlled vehicle platoons")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Integrate a scenario, write the trace, the report and optional plots.
    Run {
        #[command(flatten)]
        scenario: ScenarioArgs,
        #[command(flatten)]
        output: OutputArgs,
    },
    /// Load and check a scenario without integrating it.
    Validate {
        #[command(flatten)]
        scenario: ScenarioArgs,
    },
    /// Run every combination of `--set` values in parallel.
    Sweep {
        #[command(flatten)]
        scenario: ScenarioArgs,
        #[command(flatten)]
        output: OutputArgs,
        /// Dotted config key and values, e.g. `controller.gain2=900,3600`.
        #[arg(long = "set", value_name = "KEY=V1,V2,...", required = true)]
        axes: Vec<String>,
    },
    /// Re-check a previously written trace CSV.
    Report {
        #[command(flatten)]
        scenario: ScenarioArgs,
        /// Trace written by `run`.
        #[arg(long)]
        trace: PathBuf,
        #[arg(long, env = OUT_DIR_ENV, default_value = "out")]
        out: PathBuf,
    },
}

#[derive(Args)]
struct ScenarioArgs {
    /// Scenario config file (JSON).
    #[arg(long, conflicts_with = "preset", required_unless_present = "preset")]
    config: Option<PathBuf>,
    /// Bundled scenario: scenario1 or scenario2.
    #[arg(long)]
    preset: Option<String>,
    /// Output sampling step, s.
    #[arg(long)]
    sample_step: Option<f64>,
    /// Relative and absolute integration tolerance.
    #[arg(long)]
    tol: Option<f64>,
    /// Brake onset of a brake-profile leader, s.
    #[arg(long)]
    brake_start: Option<f64>,
    /// Report the checks without letting them decide the exit status.
    #[arg(long)]
    no_checks: bool,
}

impl ScenarioArgs {
    fn source(&self) -> ConfigSource {
        match (&self.config, &self.preset) {
            (Some(path), _) => ConfigSource::File(path.clone()),
            (None, Some(name)) => ConfigSource::Preset(name.clone()),
            (None, None) => unreachable!("clap requires one of --config and --preset"),
        }
    }

    fn overrides(&self) -> Overrides {
        Overrides {
            sample_step: self.sample_step,
            tol: self.tol,
            brake_start: self.brake_start,
            no_checks: self.no_checks,
        }
    }
}

#[derive(Args)]
struct OutputArgs {
    /// Output directory.
    #[arg(long, env = OUT_DIR_ENV, default_value = "out")]
    out: PathBuf,
    /// Also write distance, velocity and acceleration SVG plots.
    #[arg(long)]
    plots: bool,
}

fn execute(cli: Cli) -> Result<i32, CliError> {
    match cli.command {
        Command::Run { scenario, output } => {
            let source = scenario.source();
            let cfg = resolve_config(&source, &scenario.overrides())?;
            let manifest = run(&cfg, &source.label(), &output.out, RunFlags { plots: output.plots })?;
            println!("{}", manifest.outcome);
            for a in &manifest.artifacts {
                println!("  {}", a.display());
            }
            println!("finished in {:.2} s", manifest.wall_clock_secs);
            Ok(manifest.exit_status)
        }
        Command::Validate { scenario } => {
            let cfg = resolve_config(&scenario.source(), &scenario.overrides())?;
            let r = assumption_report(&cfg).map_err(platoon_core::ConfigError::from)?;
            println!("{} vehicles, horizon {} s", cfg.len(), cfg.integration.horizon);
            println!("d_bar {:.4} N, m_bar {:.1} kg, rho_bar {:.6} kg/m", r.d_bar, r.m_bar, r.rho_bar);
            if let Some(delta) = r.delta {
                println!("delta {delta:.6}");
            }
            if let Some(chain) = &r.mass_chain {
                println!("mass chain: {chain:?}");
            }
            println!("valid");
            Ok(EXIT_PASS)
        }
        Command::Sweep {
            scenario,
            output,
            axes,
        } => {
            let base = resolve_config(&scenario.source(), &scenario.overrides())?;
            let axes = axes
                .iter()
                .map(|a| SweepAxis::parse(a))
                .collect::<Result<Vec<_>, _>>()?;
            let points = expand_sweep(&base, &axes)?;
            let manifests = sweep(&points, &output.out, RunFlags { plots: output.plots })?;
            for m in &manifests {
                println!("[{}] {} -> {} ({})", m.exit_status, m.config, m.out_dir.display(), m.outcome);
            }
            Ok(combined_status(&manifests))
        }
        Command::Report {
            scenario,
            trace,
            out,
        } => {
            let source = scenario.source();
            let cfg = resolve_config(&source, &scenario.overrides())?;
            let manifest = report(&trace, &cfg, &source.label(), &out)?;
            println!("{}", manifest.outcome);
            Ok(manifest.exit_status)
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_CONFIG } else { EXIT_PASS };
            let _ = e.print();
            return ExitCode::from(code as u8);
        }
    };
    let code = match execute(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    };
    ExitCode::from(code as u8)
}
