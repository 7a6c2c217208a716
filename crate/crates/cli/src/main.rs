use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use opf_core::harness::{
    builtin, parse_config, run_experiment, sweep_config, write_outputs, ExperimentConfig, ExperimentResult, Factor,
    Method, RunOptions, SweepParam, BUILTIN_NAMES,
};
use opf_core::opf::EpochInit;
use opf_core::Error;

#[derive(Parser)]
#[command(name = "opf", version, about = "Online prediction experiments against the steady-state Kalman predictor")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(clap::Args)]
struct RunArgs {
    /// Number of seeded replicates.
    #[arg(long)]
    seeds: Option<usize>,
    #[arg(long)]
    base_seed: Option<u64>,
    /// Output directory (default: the config's `output`, else results/<name>).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Worker threads; 0 uses all cores.
    #[arg(long, default_value_t = 0)]
    workers: usize,
    /// Override the epoch initialization of every learned method.
    #[arg(long, value_enum)]
    init: Option<InitArg>,
}

#[derive(Clone, Copy, ValueEnum)]
enum InitArg {
    Iterative,
    Direct,
}

#[derive(Subcommand)]
enum Command {
    /// Run a config file or a built-in experiment.
    Run {
        experiment: String,
        #[command(flatten)]
        args: RunArgs,
    },
    /// Replace one grid parameter by a list of values and run.
    Sweep {
        experiment: String,
        #[arg(long)]
        param: String,
        /// Comma-separated values; `auto` is accepted for gamma.
        #[arg(long, value_delimiter = ',', required = true)]
        values: Vec<String>,
        #[command(flatten)]
        args: RunArgs,
    },
    /// List built-in experiments.
    List,
}

fn load(experiment: &str) -> Result<ExperimentConfig, Error> {
    let path = Path::new(experiment);
    if path.is_file() {
        parse_config(&std::fs::read_to_string(path)?)
    } else {
        builtin(experiment)
    }
}

fn apply(mut cfg: ExperimentConfig, args: &RunArgs) -> Result<ExperimentConfig, Error> {
    if let Some(n) = args.seeds {
        cfg.seeds = n;
    }
    if let Some(s) = args.base_seed {
        cfg.base_seed = s;
    }
    if let Some(init) = args.init {
        let init = match init {
            InitArg::Iterative => EpochInit::Iterative,
            InitArg::Direct => EpochInit::Direct,
        };
        for e in cfg.grid.iter_mut().filter(|e| e.method != Method::Kalman) {
            e.init = init;
        }
    }
    cfg.validate()?;
    Ok(cfg)
}

fn parse_value(text: &str) -> Result<Factor, Error> {
    match text.trim() {
        "auto" => Ok(Factor::Auto),
        t => t.parse().map(Factor::Value).map_err(|_| Error::Usage(format!("invalid sweep value '{t}'"))),
    }
}

fn execute(cfg: &ExperimentConfig, args: &RunArgs) -> Result<(), Error> {
    let out = args
        .out
        .clone()
        .or_else(|| cfg.output.clone())
        .unwrap_or_else(|| Path::new("results").join(&cfg.name));
    let result = run_experiment(cfg, &RunOptions { workers: args.workers })?;
    write_outputs(&result, &out)?;
    report(&result, &out);
    Ok(())
}

fn report(result: &ExperimentResult, out: &Path) {
    println!(
        "{} ({} seeds, config {}) finished in {:.1}s",
        result.config.name,
        result.config.seeds,
        result.config_hash,
        result.wall_clock.as_secs_f64()
    );
    println!("rho(A - LC) = {:.4}", result.spectral.rho_closed);
    println!("{:<40} {:>5} {:>12} {:>12} {:>12}", "method", "runs", "q1", "median", "q3");
    for m in result.method_summaries() {
        println!("{:<40} {:>5} {:>12.2} {:>12.2} {:>12.2}", m.method, m.runs, m.q1, m.median, m.q3);
    }
    for f in result.failures() {
        println!("failed: seed {} {}: {}", f.seed, f.method, f.error.as_deref().unwrap_or(""));
    }
    println!("results written to {}", out.display());
}

fn dispatch(cli: Cli) -> Result<(), Error> {
    match cli.command {
        Command::List => {
            for name in BUILTIN_NAMES {
                println!("{name}");
            }
            Ok(())
        }
        Command::Run { experiment, args } => {
            let cfg = apply(load(&experiment)?, &args)?;
            execute(&cfg, &args)
        }
        Command::Sweep { experiment, param, values, args } => {
            let param = SweepParam::parse(&param)?;
            let values = values.iter().map(|v| parse_value(v)).collect::<Result<Vec<_>, _>>()?;
            let cfg = sweep_config(&apply(load(&experiment)?, &args)?, param, &values)?;
            execute(&cfg, &args)
        }
    }
}

fn fail(kind: &str, message: &str, code: u8) -> ExitCode {
    eprintln!("{}", serde_json::json!({ "error": kind, "message": message }));
    ExitCode::from(code)
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if !e.use_stderr() => {
            // --help and --version
            print!("{e}");
            return ExitCode::SUCCESS;
        }
        Err(e) => return fail("usage", e.to_string().trim(), 2),
    };
    match dispatch(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => fail(e.kind(), &e.to_string(), 1),
    }
}
