use std::path::PathBuf;
use std::process::ExitCode;

use cenn_forge::ExecMode;
use cenn_forge_cli::checks::VerifyConfig;
use cenn_forge_cli::config::DEFAULT_COST_PRESET;
use cenn_forge_cli::{cmd_compile, cmd_run, cmd_sweep, cmd_verify, CliError, RunConfig, SweepAxis};
use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Parser)]
#[command(name = "cenn-forge", version, about = "CeNN accelerator simulator: compile, run, sweep and verify")]
struct Cli {
    /// Worker threads for batch inference and verification.
    #[arg(long, global = true, env = "CENN_FORGE_THREADS")]
    threads: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Lower a network to an event trace.
    Compile(RunArgs),
    /// Run inference and write accuracy, cost and trace reports.
    Run(RunArgs),
    /// One report row per value of a design axis.
    Sweep {
        #[arg(value_enum)]
        axis: Axis,
        /// Comma-separated axis values.
        #[arg(long, value_delimiter = ',', required = true)]
        values: Vec<String>,
        #[command(flatten)]
        run: RunArgs,
    },
    /// Run the built-in check suite and print one line per check.
    Verify(VerifyArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum Mode {
    Ideal,
    Quantized,
    Nonideal,
}

#[derive(Clone, Copy, ValueEnum)]
enum Axis {
    Precision,
    #[value(name = "n_arrays")]
    NArrays,
    #[value(name = "pool_kind")]
    PoolKind,
}

#[derive(Args)]
struct RunArgs {
    /// Network preset name or network file.
    #[arg(long, default_value = "mnist_design1")]
    network: String,
    /// Weight blob; defaults to the network's own, else seeded random weights.
    #[arg(long)]
    weights: Option<PathBuf>,
    /// IDX image file.
    #[arg(long, requires = "labels")]
    images: Option<PathBuf>,
    /// IDX label file.
    #[arg(long, requires = "images")]
    labels: Option<PathBuf>,
    /// Seeded random images instead of an IDX dataset.
    #[arg(long, conflicts_with = "images")]
    synthetic: Option<usize>,
    /// Hardware preset (mnist, cifar) or file.
    #[arg(long)]
    hw: Option<String>,
    #[arg(long, value_enum, default_value = "ideal")]
    mode: Mode,
    /// Operand width for quantized or nonideal runs.
    #[arg(long)]
    bits: Option<u32>,
    /// OTA transfer curve for nonideal runs.
    #[arg(long)]
    curve: Option<PathBuf>,
    /// Cost preset name or file.
    #[arg(long, default_value = DEFAULT_COST_PRESET)]
    cost_preset: String,
    /// Report root; each invocation adds a run-NNN directory.
    #[arg(long, default_value = "reports")]
    out: PathBuf,
    /// Use only the first N images.
    #[arg(long)]
    limit: Option<usize>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

impl RunArgs {
    fn config(self) -> RunConfig {
        RunConfig {
            network: self.network,
            weights: self.weights,
            images: self.images,
            labels: self.labels,
            synthetic: self.synthetic,
            hw: self.hw,
            mode: match self.mode {
                Mode::Ideal => ExecMode::Ideal,
                Mode::Quantized => ExecMode::Quantized,
                Mode::Nonideal => ExecMode::Nonideal,
            },
            bits: self.bits,
            curve: self.curve,
            cost_preset: self.cost_preset,
            out: self.out,
            limit: self.limit,
            seed: self.seed,
        }
    }
}

#[derive(Args)]
struct VerifyArgs {
    #[arg(long, default_value = DEFAULT_COST_PRESET)]
    cost_preset: String,
    /// Directory with mnist_design1.toml and mnist_design2.toml to check
    /// instead of the built-in presets.
    #[arg(long)]
    networks: Option<PathBuf>,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    /// Fraction of the full trial counts.
    #[arg(long, default_value_t = 1.0)]
    scale: f64,
}

fn run(cli: Cli) -> Result<ExitCode, CliError> {
    if let Some(n) = cli.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| CliError::Usage(format!("cannot start {n} threads: {e}")))?;
    }
    let dir = match cli.command {
        Command::Compile(a) => cmd_compile(&a.config())?,
        Command::Run(a) => cmd_run(&a.config())?,
        Command::Sweep { axis, values, run } => {
            let axis = match axis {
                Axis::Precision => SweepAxis::Precision,
                Axis::NArrays => SweepAxis::NArrays,
                Axis::PoolKind => SweepAxis::PoolKind,
            };
            cmd_sweep(&run.config(), axis, &values)?
        }
        Command::Verify(a) => {
            if !(a.scale > 0.0 && a.scale <= 1.0) {
                return Err(CliError::Usage(format!("--scale must be in (0, 1], got {}", a.scale)));
            }
            let cfg = VerifyConfig {
                cost_preset: a.cost_preset,
                networks: a.networks,
                seed: a.seed,
                scale: a.scale,
            };
            let outcomes = cmd_verify(&cfg);
            for o in &outcomes {
                println!("{o}");
            }
            let failed = outcomes.iter().filter(|o| !o.passed).count();
            println!("{} passed, {failed} failed", outcomes.len() - failed);
            return Ok(if failed == 0 { ExitCode::SUCCESS } else { ExitCode::FAILURE });
        }
    };
    println!("{}", dir.display());
    Ok(ExitCode::SUCCESS)
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error[{}]: {e}", e.kind());
            ExitCode::FAILURE
        }
    }
}
