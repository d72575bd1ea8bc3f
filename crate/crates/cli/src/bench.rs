//! `tencodec bench`: experiment drivers that write CSV.

use std::io::Write;
use std::path::PathBuf;

use clap::{Args, Subcommand};
use serde::Serialize;

use tensorcodec::bench::{ablation, compress_scaling, query_scaling, tradeoff};
use tensorcodec::synth;
use tensorcodec::tensor::read_tcn_file;
use tensorcodec::trainer::TrainConfig;
use tensorcodec::{Error, Result};

use crate::parse_dims;

#[derive(Debug, Args)]
pub struct BenchArgs {
    /// CSV destination (default: stdout).
    #[arg(short, long, global = true)]
    output: Option<PathBuf>,
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,
    #[command(subcommand)]
    experiment: Experiment,
}

#[derive(Debug, Subcommand)]
enum Experiment {
    /// Seconds per training round on uniform random tensors of growing size.
    CompressScaling {
        /// Semicolon-separated shapes.
        #[arg(long, default_value = "64x64x64;128x64x64;128x128x64;128x128x128")]
        shapes: String,
        #[arg(long, default_value_t = 2)]
        rank: usize,
        #[arg(long, default_value_t = 4)]
        hidden: usize,
        #[arg(long, default_value_t = 1)]
        epochs: usize,
    },
    /// Mean single-entry reconstruction latency against the longest mode length.
    QueryScaling {
        /// Smallest and largest power of two for the mode length.
        #[arg(long, default_value_t = 6)]
        min_exp: u32,
        #[arg(long, default_value_t = 14)]
        max_exp: u32,
        #[arg(long, default_value_t = 3)]
        order: usize,
        #[arg(long, default_value_t = 1 << 18)]
        queries: usize,
        #[arg(long, default_value_t = 5)]
        rank: usize,
        #[arg(long, default_value_t = 5)]
        hidden: usize,
    },
    /// Full pipeline against its variants on shuffled smooth tensors.
    Ablation {
        #[arg(long, default_value = "64x32x32")]
        dims: String,
        #[arg(long, default_value_t = 5)]
        seeds: u64,
        #[arg(long, default_value_t = 4)]
        rank: usize,
        #[arg(long, default_value_t = 8)]
        hidden: usize,
        #[arg(long, default_value_t = 5)]
        epochs: usize,
        #[arg(long, default_value_t = 6)]
        rounds: usize,
    },
    /// Size against fitness for the codec and for TT-SVD on one tensor.
    Tradeoff {
        /// Input tensor; a smooth synthetic tensor is used if absent.
        #[arg(short, long)]
        input: Option<PathBuf>,
        #[arg(long, default_value = "32x32x32")]
        dims: String,
        /// Comma-separated `R:h` pairs.
        #[arg(long, default_value = "2:2,4:4,6:6,8:8")]
        settings: String,
        /// Comma-separated TT ranks.
        #[arg(long, default_value = "1,2,4,8,16")]
        tt_ranks: String,
        #[arg(long, default_value_t = 5)]
        epochs: usize,
        #[arg(long, default_value_t = 10)]
        rounds: usize,
    },
}

fn parse_list<T: std::str::FromStr>(text: &str, what: &str) -> Result<Vec<T>> {
    text.split(',')
        .map(|s| s.trim().parse().map_err(|_| Error::Argument(format!("bad {what} {s:?}"))))
        .collect()
}

fn parse_settings(text: &str) -> Result<Vec<(usize, usize)>> {
    text.split(',')
        .map(|pair| {
            let (r, h) = pair
                .split_once(':')
                .ok_or_else(|| Error::Argument(format!("setting {pair:?} is not R:h")))?;
            Ok((parse_list(r, "rank")?[0], parse_list(h, "hidden width")?[0]))
        })
        .collect()
}

fn write_csv<R: Serialize>(rows: &[R], output: Option<&PathBuf>) -> Result<()> {
    let sink: Box<dyn Write> = match output {
        Some(path) => Box::new(std::fs::File::create(path)?),
        None => Box::new(std::io::stdout().lock()),
    };
    let mut w = csv::Writer::from_writer(sink);
    for row in rows {
        w.serialize(row).map_err(|e| Error::Argument(format!("csv: {e}")))?;
    }
    w.flush()?;
    Ok(())
}

pub fn run(args: BenchArgs) -> Result<()> {
    let out = args.output.as_ref();
    let seed = args.seed;
    match args.experiment {
        Experiment::CompressScaling { shapes, rank, hidden, epochs } => {
            let shapes = shapes.split(';').map(parse_dims).collect::<Result<Vec<_>>>()?;
            let cfg = TrainConfig {
                epochs_per_round: epochs,
                seed,
                ..TrainConfig::default()
            };
            write_csv(&compress_scaling(&shapes, rank, hidden, &cfg)?, out)
        }
        Experiment::QueryScaling { min_exp, max_exp, order, queries, rank, hidden } => {
            if min_exp > max_exp || max_exp >= usize::BITS {
                return Err(Error::Argument(format!("bad exponent range {min_exp}..={max_exp}")));
            }
            let lens: Vec<usize> = (min_exp..=max_exp).map(|e| 1usize << e).collect();
            write_csv(&query_scaling(&lens, order, queries, rank, hidden, seed)?, out)
        }
        Experiment::Ablation { dims, seeds, rank, hidden, epochs, rounds } => {
            let cfg = TrainConfig {
                epochs_per_round: epochs,
                max_rounds: rounds,
                ..TrainConfig::default()
            };
            let seeds: Vec<u64> = (seed..seed + seeds).collect();
            write_csv(&ablation(&parse_dims(&dims)?, &seeds, rank, hidden, &cfg)?, out)
        }
        Experiment::Tradeoff { input, dims, settings, tt_ranks, epochs, rounds } => {
            let t = match input {
                Some(path) => read_tcn_file(&path)?,
                None => synth::smooth(&parse_dims(&dims)?, seed)?,
            };
            let cfg = TrainConfig {
                epochs_per_round: epochs,
                max_rounds: rounds,
                seed,
                ..TrainConfig::default()
            };
            let rows = tradeoff(&t, &parse_settings(&settings)?, &parse_list(&tt_ranks, "TT rank")?, &cfg)?;
            write_csv(&rows, out)
        }
    }
}
