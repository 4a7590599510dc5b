use std::fs;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use lagkv::Mode;
use lagkv_cli::{cmd_compress, cmd_ratio, cmd_scores, cmd_sweep, CliError, RunConfig};

#[derive(Parser, Debug)]
#[command(name = "lagkv", version, about = "Attention-free KV-cache compression")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug, Clone)]
struct ConfigArgs {
    /// Flat `key = value` config file.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Overrides a config key; repeatable, e.g. `--set lag=128,512`.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    sets: Vec<String>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Compress a KVD dump and print per-layer metrics as JSON lines.
    Compress {
        #[arg(long)]
        input: Option<PathBuf>,
        #[arg(long)]
        output: Option<PathBuf>,
        /// oneshot | incremental
        #[arg(long)]
        mode: Option<Mode>,
        #[command(flatten)]
        config: ConfigArgs,
    },
    /// Sweep lag, ratio, strategy and seed lists; print a CSV table.
    #[command(alias = "simulate")]
    Sweep {
        /// Sweep a KVD dump instead of generated streams.
        #[arg(long)]
        input: Option<PathBuf>,
        /// Write the CSV here instead of stdout.
        #[arg(long)]
        output: Option<PathBuf>,
        #[command(flatten)]
        config: ConfigArgs,
    },
    /// Print per-token scores for one partition of one head.
    Scores {
        #[arg(long)]
        input: Option<PathBuf>,
        #[arg(long, default_value_t = 0)]
        layer: usize,
        #[arg(long, default_value_t = 0)]
        head: usize,
        #[arg(long, default_value_t = 0)]
        partition: usize,
        #[command(flatten)]
        config: ConfigArgs,
    },
    /// Print retained length and compression ratio for a sequence length.
    Ratio { seq_len: usize, sink: usize, lag: usize, ratio: f64 },
}

fn load_config(args: &ConfigArgs) -> Result<RunConfig, CliError> {
    let mut cfg = RunConfig::default();
    if let Some(path) = &args.config {
        let text = fs::read_to_string(path).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
        cfg.apply_text(&text)?;
    }
    for s in &args.sets {
        cfg.apply_assignment(s)?;
    }
    cfg.apply_env()?;
    Ok(cfg)
}

fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Compress { input, output, mode, config } => {
            let mut cfg = load_config(&config)?;
            cfg.input = input.or(cfg.input);
            cfg.output = output.or(cfg.output);
            cfg.mode = mode.unwrap_or(cfg.mode);
            print!("{}", cmd_compress(&cfg)?);
        }
        Command::Sweep { input, output, config } => {
            let mut cfg = load_config(&config)?;
            cfg.input = input.or(cfg.input);
            let csv = cmd_sweep(&cfg)?;
            match output.or(cfg.output) {
                Some(path) => fs::write(&path, csv).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?,
                None => print!("{csv}"),
            }
        }
        Command::Scores { input, layer, head, partition, config } => {
            let mut cfg = load_config(&config)?;
            cfg.input = input.or(cfg.input);
            print!("{}", cmd_scores(&cfg, layer, head, partition)?);
        }
        Command::Ratio { seq_len, sink, lag, ratio } => {
            println!("{}", cmd_ratio(seq_len, sink, lag, ratio)?);
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("lagkv: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
