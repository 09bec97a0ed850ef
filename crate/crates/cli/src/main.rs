use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use fpe_cli::commands::{cmd_gen_data, cmd_metrics, render_theory, theory_report, GenDataArgs, MetricsArgs, TheoryArgs};
use fpe_cli::{cmd_run, cmd_sweep, exit_code, ExperimentConfig, Overrides};
use fpe_core::{FpeError, Result};

#[derive(Parser)]
#[command(name = "fpe", version, about = "Fixed parameter expansion experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a DNF dataset as an FPEE file plus a JSON sidecar.
    GenData {
        #[arg(long)]
        m: usize,
        #[arg(long)]
        k: usize,
        #[arg(long)]
        n: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        jitter: bool,
        /// Output path without extension.
        #[arg(long, short)]
        out: PathBuf,
    },
    /// Train dense and expanded models as described by a config file.
    Run(RunArgs),
    /// Run every cell of the config's sweep axes.
    Sweep(RunArgs),
    /// Coverage and interference quantities, optionally checked by simulation.
    Theory {
        #[arg(long)]
        m: u64,
        #[arg(long)]
        k: u64,
        #[arg(long)]
        alpha: u64,
        #[arg(long)]
        r: u64,
        #[arg(long)]
        epsilon: Option<f64>,
        #[arg(long)]
        mc_trials: Option<usize>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        json: bool,
    },
    /// Capacity, cosine and Gram reports for a checkpoint.
    Metrics {
        model: PathBuf,
        #[arg(long, short)]
        out: PathBuf,
        /// Clause size for the per-block capacity breakdown.
        #[arg(long)]
        k: Option<usize>,
    },
}

#[derive(Args)]
struct RunArgs {
    #[arg(long, short)]
    config: PathBuf,
    #[arg(long, short)]
    out: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    trials: Option<usize>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    pretrain_epochs: Option<usize>,
    #[arg(long)]
    lr: Option<f64>,
}

impl RunArgs {
    fn load(&self) -> Result<(ExperimentConfig, PathBuf)> {
        let mut cfg = ExperimentConfig::load(&self.config)?;
        Overrides {
            seed: self.seed,
            trials: self.trials,
            epochs: self.epochs,
            pretrain_epochs: self.pretrain_epochs,
            lr: self.lr,
            output_dir: self.out.clone(),
        }
        .apply(&mut cfg);
        cfg.validate()?;
        let out = cfg
            .output_dir
            .clone()
            .ok_or_else(|| FpeError::Input("no output directory in config or on the command line".into()))?;
        Ok((cfg, out))
    }
}

fn dispatch(cmd: Command) -> Result<()> {
    match cmd {
        Command::GenData { m, k, n, seed, jitter, out } => {
            let (data, side) = cmd_gen_data(&GenDataArgs { m, k, n, seed, jitter }, &out)?;
            println!("{}\n{}", data.display(), side.display());
        }
        Command::Run(args) => {
            let (cfg, out) = args.load()?;
            cmd_run(&cfg, &out)?;
            println!("{}", out.display());
        }
        Command::Sweep(args) => {
            let (cfg, out) = args.load()?;
            let rows = cmd_sweep(&cfg, &out)?;
            println!("{} rows written to {}", rows.len(), out.display());
        }
        Command::Theory {
            m,
            k,
            alpha,
            r,
            epsilon,
            mc_trials,
            seed,
            json,
        } => {
            let report = theory_report(&TheoryArgs {
                m,
                k,
                alpha,
                r,
                epsilon,
                mc_trials,
                seed,
            })?;
            if json {
                println!("{}", serde_json::to_string_pretty(&report)?);
            } else {
                print!("{}", render_theory(&report, epsilon.is_some()));
            }
        }
        Command::Metrics { model, out, k } => {
            let report = cmd_metrics(&MetricsArgs {
                model,
                out_dir: out.clone(),
                k,
            })?;
            println!(
                "total capacity {:.4}, mean cosine {:.4}; reports in {}",
                report.total_capacity,
                report.mean_pairwise_cosine,
                out.display()
            );
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    match dispatch(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e) as u8)
        }
    }
}
