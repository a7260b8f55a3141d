//! `kmerspace`: train contrastive k-mer encoders and position heads, simulate
//! reads, map and evaluate them, and export embedding diagnostics.

mod commands;
mod config;
mod error;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use kmerspace_core::contrastive::Mode;
use kmerspace_core::heads::HeadKind;

use crate::config::RunConfig;
use crate::error::CliError;

#[derive(Parser)]
#[command(name = "kmerspace", version, about = "Contrastive k-mer embeddings and read mapping")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct Common {
    /// INI file with per-module sections; flags override its values.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Master seed for every random stream.
    #[arg(long)]
    seed: Option<u64>,
    /// Primary output file; the resolved config is written beside it.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Subcommand)]
enum Command {
    /// Train an encoder with the contrastive loss.
    TrainEncoder {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        fasta: PathBuf,
        /// Read TSV to draw self-supervised pairs from instead of the genome.
        #[arg(long)]
        reads: Option<PathBuf>,
        #[arg(long)]
        iterations: Option<u64>,
        #[arg(long)]
        gamma: Option<f64>,
        #[arg(long, value_parser = parse_mode)]
        mode: Option<Mode>,
    },
    /// Train a position head on a frozen encoder.
    TrainHead {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        fasta: PathBuf,
        /// Encoder checkpoint.
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long, value_parser = parse_head)]
        head: Option<HeadKind>,
        #[arg(long)]
        base: Option<u32>,
        #[arg(long)]
        iterations: Option<u64>,
    },
    /// Simulate damaged reads with their true coordinates.
    SimulateReads {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        fasta: PathBuf,
        /// Number of reads.
        #[arg(short = 'n', long = "num-reads", value_parser = clap::value_parser!(u64).range(1..))]
        num_reads: u64,
        /// Disable damage and sequencing errors.
        #[arg(long)]
        noiseless: bool,
        /// Reverse-complement START:END of the genome before sampling.
        #[arg(long, value_parser = parse_interval)]
        invert: Option<(usize, usize)>,
    },
    /// Map reads with a trained encoder and head.
    Map {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        fasta: PathBuf,
        /// Checkpoint written by train-head.
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        reads: PathBuf,
        #[arg(long)]
        window: Option<usize>,
    },
    /// Score a mapping against the simulated truth.
    Eval {
        #[command(flatten)]
        common: Common,
        /// Mapping TSV written by map.
        #[arg(long)]
        mapping: PathBuf,
        /// Read TSV with true coordinates.
        #[arg(long)]
        reads: PathBuf,
    },
    /// Export the embedding of every indexed k-mer.
    Embed {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        fasta: PathBuf,
        #[arg(long)]
        checkpoint: PathBuf,
    },
    /// Two-component PCA of the genome embedding.
    Pca {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        fasta: PathBuf,
        #[arg(long)]
        checkpoint: PathBuf,
    },
    /// Mean genomic distance to the nearest embedding neighbours.
    KnnStats {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        fasta: PathBuf,
        #[arg(long)]
        checkpoint: PathBuf,
    },
    /// Flag reads whose end k-mers embed far apart.
    DetectInversions {
        #[command(flatten)]
        common: Common,
        /// Reference genome.
        #[arg(long)]
        fasta: PathBuf,
        /// Checkpoint written by train-head.
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        reads: PathBuf,
        #[arg(long)]
        window: Option<usize>,
    },
}

fn parse_mode(s: &str) -> Result<Mode, String> {
    Mode::parse(s).map_err(|e| e.to_string())
}

fn parse_head(s: &str) -> Result<HeadKind, String> {
    HeadKind::parse(s).map_err(|e| e.to_string())
}

fn parse_interval(s: &str) -> Result<(usize, usize), String> {
    let (a, b) = s.split_once(':').ok_or("expected START:END")?;
    let start = a.trim().parse().map_err(|_| format!("bad start {a:?}"))?;
    let end = b.trim().parse().map_err(|_| format!("bad end {b:?}"))?;
    Ok((start, end))
}

fn base_config(common: &Common) -> Result<RunConfig, CliError> {
    let mut cfg = match &common.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    if let Some(seed) = common.seed {
        cfg.seed = seed;
    }
    Ok(cfg)
}

fn finish(mut cfg: RunConfig) -> Result<RunConfig, CliError> {
    cfg.resolve()?;
    Ok(cfg)
}

fn run(cli: Cli) -> Result<(), CliError> {
    use commands::*;
    match cli.command {
        Command::TrainEncoder {
            common,
            fasta,
            reads,
            iterations,
            gamma,
            mode,
        } => {
            let mut cfg = base_config(&common)?;
            if let Some(n) = iterations {
                cfg.train.iterations = n;
            }
            if let Some(g) = gamma {
                cfg.loss.gamma = g;
            }
            if let Some(m) = mode {
                cfg.loss.mode = m;
            }
            train_encoder_cmd(&finish(cfg)?, &fasta, reads.as_deref(), &common.out)
        }
        Command::TrainHead {
            common,
            fasta,
            checkpoint,
            head,
            base,
            iterations,
        } => {
            let mut cfg = base_config(&common)?;
            if let Some(h) = head {
                cfg.head.kind = h;
            }
            if let Some(b) = base {
                cfg.head.base = b;
            }
            if let Some(n) = iterations {
                cfg.head_train.iterations = n;
            }
            train_head_cmd(&finish(cfg)?, &fasta, &checkpoint, &common.out)
        }
        Command::SimulateReads {
            common,
            fasta,
            num_reads,
            noiseless,
            invert,
        } => {
            let cfg = finish(base_config(&common)?)?;
            simulate_reads_cmd(&cfg, &fasta, num_reads as usize, noiseless, invert, &common.out)
        }
        Command::Map {
            common,
            fasta,
            checkpoint,
            reads,
            window,
        } => {
            let mut cfg = base_config(&common)?;
            if let Some(w) = window {
                cfg.window = w;
            }
            map_cmd(&finish(cfg)?, &fasta, &checkpoint, &reads, &common.out)
        }
        Command::Eval { common, mapping, reads } => {
            let cfg = finish(base_config(&common)?)?;
            eval_cmd(&cfg, &mapping, &reads, &common.out)
        }
        Command::Embed {
            common,
            fasta,
            checkpoint,
        } => embed_cmd(&finish(base_config(&common)?)?, &fasta, &checkpoint, &common.out),
        Command::Pca {
            common,
            fasta,
            checkpoint,
        } => pca_cmd(&finish(base_config(&common)?)?, &fasta, &checkpoint, &common.out),
        Command::KnnStats {
            common,
            fasta,
            checkpoint,
        } => knn_stats_cmd(&finish(base_config(&common)?)?, &fasta, &checkpoint, &common.out),
        Command::DetectInversions {
            common,
            fasta,
            checkpoint,
            reads,
            window,
        } => {
            let mut cfg = base_config(&common)?;
            if let Some(w) = window {
                cfg.window = w;
            }
            detect_inversions_cmd(&finish(cfg)?, &fasta, &checkpoint, &reads, &common.out)
        }
    }
}

fn init_threads() -> Result<(), CliError> {
    if let Ok(v) = std::env::var("KMERSPACE_THREADS") {
        let n: usize = v
            .parse()
            .ok()
            .filter(|n| *n > 0)
            .ok_or_else(|| CliError::Usage(format!("KMERSPACE_THREADS must be a positive integer, got {v:?}")))?;
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| CliError::Runtime(e.to_string()))?;
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => e.exit(),
    };
    match init_threads().and_then(|()| run(cli)) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{e}");
            ExitCode::from(e.exit_code())
        }
    }
}
