use std::path::PathBuf;
use std::process::ExitCode;

use ambicomp_cli::config::{env_overrides, parse_seeds, ExperimentConfig, LatencySettings};
use ambicomp_cli::{cmd_bench, cmd_eval, cmd_report, cmd_run, cmd_synth, CliError};
use clap::{Args, Parser, Subcommand};

#[derive(Parser)]
#[command(
    name = "ambicomp",
    version,
    about = "Prune a classifier at a lower layer and distill a lower layer into it"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct RunArgs {
    /// JSON experiment config; defaults apply when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Seeds as `0,1,2` or `0..3`; overrides the config.
    #[arg(long)]
    seed: Option<String>,
    /// Output directory; overrides the config.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Replace an existing output directory.
    #[arg(long)]
    force: bool,
}

impl RunArgs {
    fn resolve(&self) -> Result<ExperimentConfig, CliError> {
        let mut cfg = ExperimentConfig::load(self.config.as_deref(), env_overrides())?;
        if let Some(s) = &self.seed {
            cfg.seeds = parse_seeds(s)?;
        }
        if let Some(out) = &self.out {
            cfg.output_dir = out.clone();
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

#[derive(Subcommand)]
enum Command {
    /// Write synthetic train/val/test JSONL splits per seed.
    Synth(RunArgs),
    /// Run the pipeline and baselines for every seed.
    Run(RunArgs),
    /// Score a checkpoint on a JSONL dataset.
    Eval {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        data: PathBuf,
        /// Write the JSON report here instead of stdout.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Render markdown tables from a run directory.
    Report { dir: PathBuf },
    /// Compare parameter counts and latency of checkpoints.
    Bench {
        checkpoints: Vec<PathBuf>,
        #[arg(long, default_value_t = 256)]
        batch: usize,
        #[arg(long, default_value_t = 20)]
        repeats: usize,
        /// Print JSON instead of a markdown table.
        #[arg(long)]
        json: bool,
    },
}

fn to_json<T: serde::Serialize>(v: &T) -> String {
    serde_json::to_string_pretty(v).expect("report serializes")
}

fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Synth(args) => {
            for p in cmd_synth(&args.resolve()?, args.force)? {
                println!("{}", p.display());
            }
        }
        Command::Run(args) => {
            let cfg = args.resolve()?;
            cmd_run(&cfg, args.force)?;
            print!("{}", cmd_report(&cfg.output_dir)?);
        }
        Command::Eval {
            checkpoint,
            data,
            out,
        } => {
            let text = to_json(&cmd_eval(&checkpoint, &data)?);
            match out {
                Some(p) => std::fs::write(&p, text + "\n")
                    .map_err(|source| CliError::Io { path: p, source })?,
                None => println!("{text}"),
            }
        }
        Command::Report { dir } => print!("{}", cmd_report(&dir)?),
        Command::Bench {
            checkpoints,
            batch,
            repeats,
            json,
        } => {
            if repeats < 10 || batch == 0 {
                return Err(CliError::Config {
                    field: "--repeats/--batch".into(),
                    message: "need repeats >= 10 and batch >= 1".into(),
                });
            }
            let report = cmd_bench(&checkpoints, LatencySettings { batch, repeats })?;
            if json {
                println!("{}", to_json(&report));
            } else {
                print!("{}", report.markdown());
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
