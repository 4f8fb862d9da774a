use std::collections::BTreeSet;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use flowprobe_bench::report::{plot_data, TOOL_VERSION};
use flowprobe_bench::sweep::{sweep_epsilon, sweep_horizon};
use flowprobe_bench::{emit_reports, matrix, run_matrix, BenchError, ExperimentConfig, Format, RunOptions};
use flowprobe_core::toy::{train, TrainingConfig};

#[derive(Parser)]
#[command(name = "flowprobe", version, about = "Benchmark probe-scheduled and baseline ODE solvers on flow fields")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    #[arg(long)]
    config: PathBuf,
    /// Output directory; overrides `output_dir` from the config.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Overrides the config seed.
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Subcommand)]
enum Command {
    /// Run the solver-by-field matrix plus any sweeps listed in the config.
    Run {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_delimiter = ',', default_value = "csv,json")]
        format: Vec<Format>,
        /// Run cells one after another so timings are not co-scheduled.
        #[arg(long)]
        serial_timing: bool,
    },
    SweepEpsilon {
        #[command(flatten)]
        common: Common,
        /// Defaults to `[sweep].epsilons` from the config.
        #[arg(long, value_delimiter = ',')]
        epsilons: Vec<f64>,
    },
    SweepHorizon {
        #[command(flatten)]
        common: Common,
        /// Defaults to `[sweep].horizons` from the config.
        #[arg(long, value_delimiter = ',')]
        horizons: Vec<f64>,
    },
    /// Train a toy MLP field; the config is a TOML training document.
    Train {
        #[arg(long)]
        config: PathBuf,
        /// Directory for `weights.fpw` and `trace.json`.
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
    },
    ValidateConfig {
        #[arg(long)]
        config: PathBuf,
    },
}

fn load(common: &Common) -> Result<ExperimentConfig, BenchError> {
    let mut cfg = ExperimentConfig::load(&common.config)?;
    if let Some(seed) = common.seed {
        cfg.seed = seed;
    }
    if let Some(out) = &common.out {
        cfg.output_dir = out.clone();
    }
    Ok(cfg)
}

fn write(path: &Path, body: &str) -> Result<(), BenchError> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).map_err(|e| BenchError::io(dir, e))?;
    }
    fs::write(path, body).map_err(|e| BenchError::io(path, e))
}

fn sweep_values(given: Vec<f64>, configured: Option<Vec<f64>>, what: &str) -> Result<Vec<f64>, BenchError> {
    if !given.is_empty() {
        return Ok(given);
    }
    configured
        .filter(|v| !v.is_empty())
        .ok_or_else(|| BenchError::Config(format!("no {what} given on the command line or in [sweep]")))
}

fn execute(command: Command) -> Result<ExitCode, BenchError> {
    match command {
        Command::Run {
            common,
            format,
            serial_timing,
        } => {
            let cfg = load(&common)?;
            let bundle = run_matrix(
                &cfg,
                RunOptions {
                    serial_timing,
                    with_sweeps: true,
                },
            )?;
            let formats: BTreeSet<Format> = format.into_iter().collect();
            for path in emit_reports(&bundle, &cfg.output_dir, &formats)? {
                println!("wrote {}", path.display());
            }
            for cell in &bundle.cells {
                match &cell.aggregate {
                    Some(a) => println!(
                        "{:<24} {:<14} steps {:>7.3}  nfe {:>7.3}  error {:.3e}  success {:.2}  failed {}",
                        cell.field, cell.solver, a.mean_steps, a.mean_nfe, a.mean_error, a.success_rate, cell.failed_runs
                    ),
                    None => println!("{:<24} {:<14} all {} runs failed", cell.field, cell.solver, cell.runs),
                }
            }
            Ok(if bundle.any_cell_failed() {
                ExitCode::from(2)
            } else {
                ExitCode::SUCCESS
            })
        }
        Command::SweepEpsilon { common, epsilons } => {
            let cfg = load(&common)?;
            let eps = sweep_values(epsilons, cfg.sweep.clone().map(|s| s.epsilons), "epsilons")?;
            let fields = matrix::load_fields(&cfg)?;
            let rows = sweep_epsilon(&cfg, &fields, &eps)?;
            let dir = &cfg.output_dir;
            write(&dir.join("epsilon_sweep.json"), &serde_json::to_string_pretty(&rows).expect("serializes"))?;
            write(&dir.join("epsilon_steps.dat"), &plot_data(rows.iter().map(|r| (r.epsilon, r.mean_steps))))?;
            write(&dir.join("epsilon_error.dat"), &plot_data(rows.iter().map(|r| (r.epsilon, r.mean_error))))?;
            println!("epsilon      mean_steps  mean_error   success  time_s");
            for r in rows {
                println!(
                    "{:<12} {:>10.3}  {:.3e}  {:>7.3}  {:.3e}",
                    r.epsilon, r.mean_steps, r.mean_error, r.success_rate, r.mean_solver_time_s
                );
            }
            Ok(ExitCode::SUCCESS)
        }
        Command::SweepHorizon { common, horizons } => {
            let cfg = load(&common)?;
            let dts = sweep_values(horizons, cfg.sweep.clone().map(|s| s.horizons), "horizons")?;
            let fields = matrix::load_fields(&cfg)?;
            let rows = sweep_horizon(&cfg, &fields, &dts)?;
            let dir = &cfg.output_dir;
            write(&dir.join("horizon_sweep.json"), &serde_json::to_string_pretty(&rows).expect("serializes"))?;
            write(&dir.join("horizon_failure.dat"), &plot_data(rows.iter().map(|r| (r.dt_probe, r.failure_rate))))?;
            write(&dir.join("horizon_steps.dat"), &plot_data(rows.iter().map(|r| (r.dt_probe, r.mean_steps))))?;
            println!("dt_probe  mean_steps  mean_error   failure_rate");
            for r in rows {
                println!(
                    "{:<9} {:>10.3}  {:.3e}  {:>7.3}",
                    r.dt_probe, r.mean_steps, r.mean_error, r.failure_rate
                );
            }
            Ok(ExitCode::SUCCESS)
        }
        Command::Train { config, out, seed } => {
            let text = fs::read_to_string(&config)
                .map_err(|e| BenchError::Config(format!("{}: {e}", config.display())))?;
            let mut cfg: TrainingConfig =
                toml::from_str(&text).map_err(|e| BenchError::Config(format!("{}: {e}", config.display())))?;
            if let Some(seed) = seed {
                cfg.seed = seed;
            }
            cfg.validate()
                .map_err(|e| BenchError::Config(format!("{}: {e}", config.display())))?;
            let (net, trace) = train(&cfg)?;
            let weights = out.join("weights.fpw");
            fs::create_dir_all(&out).map_err(|e| BenchError::io(&out, e))?;
            fs::write(&weights, net.save_weights()).map_err(|e| BenchError::io(&weights, e))?;
            write(&out.join("trace.json"), &serde_json::to_string_pretty(&trace).expect("serializes"))?;
            println!(
                "trained {} parameters; loss {:.4} -> {:.4}; wrote {}",
                net.parameter_count(),
                trace.first_window_mean(),
                trace.last_window_mean(),
                weights.display()
            );
            Ok(ExitCode::SUCCESS)
        }
        Command::ValidateConfig { config } => {
            let cfg = ExperimentConfig::load(&config)?;
            // loading every field also checks that weight files parse
            let fields = matrix::load_fields(&cfg)?;
            println!(
                "ok: {} field entries ({} members), {} solvers, {} runs per cell (flowprobe {TOOL_VERSION})",
                fields.len(),
                fields.iter().map(|f| f.members.len()).sum::<usize>(),
                cfg.solvers.len(),
                cfg.runs
            );
            Ok(ExitCode::SUCCESS)
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(cli.command) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
