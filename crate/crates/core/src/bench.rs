//! Experiment drivers behind `tencodec bench`. Each returns plain rows that
//! the CLI writes as CSV.

use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::codec::CompressedArtifact;
use crate::error::Result;
use crate::folding::FoldingSpec;
use crate::nttd::{NttdHyper, NttdModel};
use crate::synth;
use crate::tensor::{fitness, DenseTensor, PermutationSet};
use crate::trainer::{Reordering, TrainConfig, Trainer};
use crate::ttd::{tt_param_count, tt_svd, variant_n, TtTarget};

fn dims_label(dims: &[usize]) -> String {
    dims.iter().map(usize::to_string).collect::<Vec<_>>().join("x")
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CompressScalingRow {
    pub dims: String,
    pub entries: usize,
    pub seconds_per_round: f64,
}

/// Wall time of one training round (model epochs plus order update) on
/// uniform random tensors of the given shapes. Initialization is not timed.
pub fn compress_scaling(shapes: &[Vec<usize>], rank: usize, hidden: usize, cfg: &TrainConfig) -> Result<Vec<CompressScalingRow>> {
    shapes
        .iter()
        .map(|dims| {
            let t = synth::random_uniform(dims, cfg.seed)?;
            let mut tr = Trainer::new(&t, rank, hidden, None, cfg.clone())?;
            let start = Instant::now();
            tr.train_round()?;
            if cfg.reordering == Reordering::Full {
                tr.update_orders();
            }
            Ok(CompressScalingRow {
                dims: dims_label(dims),
                entries: t.len(),
                seconds_per_round: start.elapsed().as_secs_f64(),
            })
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct QueryScalingRow {
    pub n_max: usize,
    pub order: usize,
    pub folded_order: usize,
    pub queries: usize,
    pub mean_us: f64,
}

/// A randomly initialized artifact for `dims`; no tensor is materialized.
pub fn random_artifact(dims: &[usize], rank: usize, hidden: usize, seed: u64) -> Result<CompressedArtifact> {
    let spec = FoldingSpec::auto(dims)?;
    let hyper = NttdHyper::new(rank, hidden, spec.folded_dims().to_vec())?;
    let model = NttdModel::random(hyper, seed);
    let perms = PermutationSet::random(dims, seed.wrapping_add(1));
    CompressedArtifact::new(spec, model, perms, 0.0, 1.0, seed)
}

/// Mean latency of single-entry reconstruction at uniformly random indices,
/// for order-`order` artifacts with every mode of length `n`.
pub fn query_scaling(mode_lengths: &[usize], order: usize, queries: usize, rank: usize, hidden: usize, seed: u64) -> Result<Vec<QueryScalingRow>> {
    mode_lengths
        .iter()
        .map(|&n| {
            let dims = vec![n; order];
            let a = random_artifact(&dims, rank, hidden, seed)?;
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let idx: Vec<usize> = (0..queries * order).map(|_| rng.random_range(0..n)).collect();
            let start = Instant::now();
            let out = a.reconstruct_entries(&idx)?;
            let secs = start.elapsed().as_secs_f64();
            std::hint::black_box(out);
            Ok(QueryScalingRow {
                n_max: n,
                order,
                folded_order: a.spec().folded_order(),
                queries,
                mean_us: secs * 1e6 / queries as f64,
            })
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AblationRow {
    pub variant: String,
    pub seed: u64,
    pub fitness: f64,
    pub bytes: usize,
    pub seconds: f64,
}

/// Full pipeline and its variants on a smooth tensor with shuffled modes:
/// `full`, `-R` (no order updates), `-T` (no reordering at all) and `-N`
/// (TT-SVD of the folded tensor with the full model's byte budget).
pub fn ablation(dims: &[usize], seeds: &[u64], rank: usize, hidden: usize, cfg: &TrainConfig) -> Result<Vec<AblationRow>> {
    let mut rows = Vec::new();
    for &seed in seeds {
        let t = synth::shuffled(&synth::smooth(dims, seed)?, seed.wrapping_add(1000)).0;
        let mut full_payload = 0;
        for (name, reordering) in [("full", Reordering::Full), ("-R", Reordering::InitOnly), ("-T", Reordering::Off)] {
            let start = Instant::now();
            let cfg = TrainConfig {
                seed,
                reordering,
                ..cfg.clone()
            };
            let (a, report) = Trainer::new(&t, rank, hidden, None, cfg)?.run()?;
            let size = a.report_size();
            if reordering == Reordering::Full {
                full_payload = size.payload();
            }
            rows.push(AblationRow {
                variant: name.into(),
                seed,
                fitness: report.final_fitness,
                bytes: size.payload(),
                seconds: start.elapsed().as_secs_f64(),
            });
        }
        let start = Instant::now();
        let spec = FoldingSpec::auto(dims)?;
        let v = variant_n(&t, &spec, full_payload / 8)?;
        rows.push(AblationRow {
            variant: "-N".into(),
            seed,
            fitness: v.fitness,
            bytes: 8 * v.cores.param_count(),
            seconds: start.elapsed().as_secs_f64(),
        });
    }
    Ok(rows)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TradeoffRow {
    pub method: String,
    pub setting: String,
    pub bytes: usize,
    pub fitness: f64,
    pub seconds: f64,
}

/// Size/fitness pairs for NTTD at several `(R, h)` settings and for TT-SVD
/// at several ranks, on the same tensor.
pub fn tradeoff(t: &DenseTensor, settings: &[(usize, usize)], tt_ranks: &[usize], cfg: &TrainConfig) -> Result<Vec<TradeoffRow>> {
    let mut rows = Vec::new();
    for &(rank, hidden) in settings {
        let start = Instant::now();
        let (a, report) = Trainer::new(t, rank, hidden, None, cfg.clone())?.run()?;
        rows.push(TradeoffRow {
            method: "tensorcodec".into(),
            setting: format!("R={rank} h={hidden}"),
            bytes: a.report_size().payload(),
            fitness: report.final_fitness,
            seconds: start.elapsed().as_secs_f64(),
        });
    }
    for &r in tt_ranks {
        let start = Instant::now();
        let cores = tt_svd(t, TtTarget::MaxRank(r))?;
        let f = fitness(t, &cores.reconstruct_full()?)?;
        rows.push(TradeoffRow {
            method: "tt-svd".into(),
            setting: format!("R={r}"),
            bytes: 8 * tt_param_count(t.dims(), r),
            fitness: f,
            seconds: start.elapsed().as_secs_f64(),
        });
    }
    Ok(rows)
}
