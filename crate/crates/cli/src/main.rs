use std::path::PathBuf;
use std::process::ExitCode;

use cdt_router_cli::{apply_overrides, parse_config, run, Overrides, RunError};
use clap::Parser;

/// Run a routing, sweep, ensemble or optimization experiment from a JSON
/// configuration. Every flag can also be set through a `CDT_ROUTER_*`
/// environment variable.
#[derive(Debug, Parser)]
#[command(name = "cdt-router", version, about)]
struct Args {
    /// Run configuration (JSON).
    #[arg(long, env = "CDT_ROUTER_CONFIG")]
    config: PathBuf,
    /// Output directory; overrides `output_dir` in the config.
    #[arg(long, env = "CDT_ROUTER_OUT")]
    out: Option<PathBuf>,
    /// Base seed for ensemble runs; overrides `errors.seed`.
    #[arg(long, env = "CDT_ROUTER_SEED")]
    seed: Option<u64>,
    /// Worker threads for ensembles (default: available parallelism).
    #[arg(long, env = "CDT_ROUTER_WORKERS")]
    workers: Option<usize>,
    /// Largest integrator step, in units of 1/J.
    #[arg(long, env = "CDT_ROUTER_DT_MAX")]
    dt_max: Option<f64>,
}

fn main() -> ExitCode {
    let args = Args::parse();
    let overrides = Overrides {
        out: args.out,
        seed: args.seed,
        workers: args.workers,
        dt_max: args.dt_max,
    };
    let result = parse_config(&args.config)
        .and_then(|config| apply_overrides(config, &overrides))
        .map_err(RunError::from)
        .and_then(|config| run(&config));
    match result {
        Ok(outcome) => {
            println!("{}", serde_json::to_string_pretty(&outcome.summary).expect("serializable"));
            eprintln!("wrote {} files to {}", outcome.manifest.outputs.len(), outcome.out_dir.display());
            ExitCode::SUCCESS
        }
        Err(err) => {
            eprintln!("{}", err.to_json());
            ExitCode::from(err.exit_code() as u8)
        }
    }
}
