//! `tencodec`: compress, reconstruct, inspect and benchmark dense tensors.
//!
//! Results go to stdout as JSON (or CSV for `bench`), logs go to stderr.

mod bench;

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::{Parser, Subcommand, ValueEnum};
use serde_json::json;

use tensorcodec::codec::{CompressedArtifact, Precision};
use tensorcodec::synth::{self, SynthKind};
use tensorcodec::tensor::{fitness, mean_std, read_tcn_file, smoothness, write_tcn_file};
use tensorcodec::trainer::{TrainConfig, Trainer};
use tensorcodec::{Error, FoldingSpec, Result};

/// Version of every JSON object and CSV layout this binary emits.
pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Parser)]
#[command(name = "tencodec", version, about = "Lossy compression of dense tensors with neural tensor-train models")]
struct Cli {
    /// Worker threads (falls back to TENCODEC_THREADS, then all logical cores).
    #[arg(long, global = true)]
    threads: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Compress a .tcn tensor into a .tcc artifact.
    Compress(CompressArgs),
    /// Reconstruct the full tensor from a .tcc artifact.
    Decompress {
        #[arg(short, long)]
        input: PathBuf,
        #[arg(short, long)]
        output: PathBuf,
    },
    /// Reconstruct a single entry.
    Query {
        #[arg(short, long)]
        input: PathBuf,
        /// Comma-separated zero-based index, one value per mode.
        #[arg(long)]
        index: String,
    },
    /// Fitness of an approximation against the original.
    Eval {
        #[arg(long)]
        original: PathBuf,
        #[arg(long)]
        approx: PathBuf,
    },
    /// Shape and summary statistics of a .tcn tensor.
    Stats {
        #[arg(short, long)]
        input: PathBuf,
    },
    /// Write a synthetic tensor.
    Synth {
        #[arg(long, value_enum)]
        kind: KindArg,
        /// Mode lengths, e.g. `64x32x32` or `64,32,32`.
        #[arg(long)]
        dims: String,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(short, long)]
        output: PathBuf,
    },
    /// Run an experiment and write CSV rows.
    Bench(bench::BenchArgs),
}

#[derive(Debug, clap::Args)]
struct CompressArgs {
    #[arg(short, long)]
    input: PathBuf,
    #[arg(short, long)]
    output: PathBuf,
    /// TT rank R.
    #[arg(long, default_value_t = 8)]
    rank: usize,
    /// LSTM hidden width h.
    #[arg(long, default_value_t = 8)]
    hidden: usize,
    /// Text file with one row of folding factors per mode.
    #[arg(long)]
    fold_matrix: Option<PathBuf>,
    #[arg(long, default_value_t = 1e-2)]
    lr: f64,
    /// Mini-batch size (default: scaled to the tensor size).
    #[arg(long)]
    batch: Option<usize>,
    #[arg(long, default_value_t = 5)]
    epochs: usize,
    #[arg(long, default_value_t = 50)]
    rounds: usize,
    #[arg(long, default_value_t = 1e-4)]
    tol: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Entries sampled per swap evaluation.
    #[arg(long, default_value_t = 4096)]
    sample_budget: usize,
    /// Write one JSON record per round to this file.
    #[arg(long)]
    log: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = PrecisionArg::F64)]
    precision: PrecisionArg,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum PrecisionArg {
    F64,
    F32,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum KindArg {
    Random,
    Rank1,
    Smooth,
    Shuffled,
    Nttd,
}

impl From<KindArg> for SynthKind {
    fn from(k: KindArg) -> Self {
        match k {
            KindArg::Random => SynthKind::Random,
            KindArg::Rank1 => SynthKind::Rank1,
            KindArg::Smooth => SynthKind::Smooth,
            KindArg::Shuffled => SynthKind::Shuffled,
            KindArg::Nttd => SynthKind::Nttd,
        }
    }
}

pub fn parse_dims(text: &str) -> Result<Vec<usize>> {
    let dims = text
        .split(['x', ','])
        .map(|s| {
            s.trim()
                .parse::<usize>()
                .map_err(|_| Error::Argument(format!("bad mode length {s:?} in {text:?}")))
        })
        .collect::<Result<Vec<_>>>()?;
    if dims.is_empty() || dims.contains(&0) {
        return Err(Error::Argument(format!("dims {text:?} must be positive")));
    }
    Ok(dims)
}

fn parse_index(text: &str) -> Result<Vec<usize>> {
    text.split(',')
        .map(|s| {
            s.trim()
                .parse::<usize>()
                .map_err(|_| Error::Index(format!("bad index component {s:?}")))
        })
        .collect()
}

fn read_artifact(path: &Path) -> Result<CompressedArtifact> {
    let bytes = std::fs::read(path).map_err(|e| Error::Argument(format!("{}: {e}", path.display())))?;
    CompressedArtifact::deserialize(&bytes)
}

fn read_tensor(path: &Path) -> Result<tensorcodec::DenseTensor> {
    read_tcn_file(path).map_err(|e| match e {
        Error::Io(io) => Error::Argument(format!("{}: {io}", path.display())),
        other => other,
    })
}

fn print_json(value: serde_json::Value) {
    println!("{value}");
}

fn compress(args: CompressArgs) -> Result<()> {
    let start = Instant::now();
    let t = read_tensor(&args.input)?;
    let folding = match &args.fold_matrix {
        Some(path) => {
            let text = std::fs::read_to_string(path).map_err(|e| Error::Argument(format!("{}: {e}", path.display())))?;
            Some(FoldingSpec::from_factors(t.dims(), FoldingSpec::parse_matrix(&text)?)?)
        }
        None => None,
    };
    let cfg = TrainConfig {
        lr: args.lr,
        batch_size: args.batch,
        epochs_per_round: args.epochs,
        max_rounds: args.rounds,
        tol: args.tol,
        seed: args.seed,
        sample_budget: args.sample_budget,
        ..TrainConfig::default()
    };
    let mut log = match &args.log {
        Some(path) => Some(BufWriter::new(File::create(path)?)),
        None => None,
    };
    let mut log_err = None;
    let trainer = Trainer::new(&t, args.rank, args.hidden, folding, cfg)?;
    let (artifact, report) = trainer.run_with(|rec| {
        log::info!("round {}: loss {:.6e}, fitness {:.5}, swaps {:?}", rec.round, rec.train_loss, rec.fitness, rec.swaps);
        if let Some(w) = log.as_mut() {
            let line = serde_json::to_string(rec).expect("round record serializes");
            if let Err(e) = writeln!(w, "{line}") {
                log_err.get_or_insert(e);
            }
        }
    })?;
    if let Some(e) = log_err {
        return Err(e.into());
    }
    if let Some(mut w) = log {
        w.flush()?;
    }
    let artifact = match args.precision {
        PrecisionArg::F64 => artifact,
        PrecisionArg::F32 => artifact.with_precision(Precision::F32),
    };
    let bytes = artifact.serialize();
    std::fs::write(&args.output, &bytes)?;
    let fit = match args.precision {
        PrecisionArg::F64 => report.final_fitness,
        PrecisionArg::F32 => fitness(&t, &artifact.reconstruct_full()?)?,
    };
    let size = artifact.report_size();
    print_json(json!({
        "version": SCHEMA_VERSION,
        "fitness": fit,
        "bytes": bytes.len(),
        "payload_bytes": size.payload(),
        "rounds": report.rounds.len(),
        "seconds": start.elapsed().as_secs_f64(),
    }));
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Compress(args) => compress(args),
        Command::Decompress { input, output } => {
            let t = read_artifact(&input)?.reconstruct_full()?;
            write_tcn_file(&output, &t)
        }
        Command::Query { input, index } => {
            let a = read_artifact(&input)?;
            let idx = parse_index(&index)?;
            let start = Instant::now();
            let value = a.reconstruct_entry(&idx)?;
            let micros = start.elapsed().as_secs_f64() * 1e6;
            print_json(json!({ "version": SCHEMA_VERSION, "value": value, "micros": micros }));
            Ok(())
        }
        Command::Eval { original, approx } => {
            let f = fitness(&read_tensor(&original)?, &read_tensor(&approx)?)?;
            print_json(json!({ "version": SCHEMA_VERSION, "fitness": f }));
            Ok(())
        }
        Command::Stats { input } => {
            let t = read_tensor(&input)?;
            let nonzero = t.values().iter().filter(|&&v| v != 0.0).count();
            let smooth = match smoothness(&t) {
                Ok(s) => Some(s),
                Err(Error::Domain(_)) => None,
                Err(e) => return Err(e),
            };
            let (mean, std) = mean_std(t.values());
            print_json(json!({
                "version": SCHEMA_VERSION,
                "dims": t.dims(),
                "entries": t.len(),
                "density": nonzero as f64 / t.len() as f64,
                "smoothness": smooth,
                "mean": mean,
                "std": std,
            }));
            Ok(())
        }
        Command::Synth { kind, dims, seed, output } => {
            let t = synth::generate(kind.into(), &parse_dims(&dims)?, seed)?;
            write_tcn_file(&output, &t)
        }
        Command::Bench(args) => bench::run(args),
    }
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Diverged(_) => 2,
        Error::Domain(_) => 3,
        Error::Index(_) | Error::Argument(_) | Error::Format { .. } | Error::Io(_) => 1,
    }
}

fn init_threads(flag: Option<usize>) -> Result<()> {
    let n = match flag {
        Some(n) => Some(n),
        None => match std::env::var("TENCODEC_THREADS") {
            Ok(v) => Some(v.trim().parse().map_err(|_| Error::Argument(format!("TENCODEC_THREADS={v:?} is not a count")))?),
            Err(_) => None,
        },
    };
    if let Some(n) = n {
        if n == 0 {
            return Err(Error::Argument("thread count must be positive".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| Error::Argument(e.to_string()))?;
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match init_threads(cli.threads).and_then(|_| run(cli)) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("tencodec: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
