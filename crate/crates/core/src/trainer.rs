//! The alternating training loop: model epochs, then an order update, then a
//! fitness check, until the fitness stops changing.

use std::time::Instant;

use rand::seq::{index, SliceRandom};
use rayon::prelude::*;
use serde::Serialize;

use crate::codec::CompressedArtifact;
use crate::error::{Error, Result};
use crate::folding::FoldingSpec;
use crate::nttd::{Adam, NttdHyper, NttdModel};
use crate::reorder::{init_orders_tsp, update_orders, Objective, DEFAULT_SAMPLE_BUDGET};
use crate::rng::{derive_seed, rng_for};
use crate::tensor::{mean_std, DenseTensor, PermutationSet};

/// Entries used for the per-round fitness estimate on large tensors.
pub const FITNESS_SAMPLE: usize = 1 << 20;

const FITNESS_CHUNK: usize = 4096;

/// Default batch size: about 256 batches per epoch, between 64 and 2^16 entries.
pub fn auto_batch_size(entries: usize) -> usize {
    (entries / 256).clamp(64, 1 << 16)
}

/// Which parts of the reordering are used.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Reordering {
    /// TSP initialization and swap updates every round.
    #[default]
    Full,
    /// TSP initialization only.
    InitOnly,
    /// Identity orders, never updated.
    Off,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub lr: f64,
    /// Entries per mini-batch; `None` picks [`auto_batch_size`].
    pub batch_size: Option<usize>,
    pub epochs_per_round: usize,
    pub max_rounds: usize,
    pub tol: f64,
    pub seed: u64,
    pub sample_budget: usize,
    pub reordering: Reordering,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            lr: 1e-2,
            batch_size: None,
            epochs_per_round: 5,
            max_rounds: 50,
            tol: 1e-4,
            seed: 0,
            sample_budget: DEFAULT_SAMPLE_BUDGET,
            reordering: Reordering::Full,
        }
    }
}

impl TrainConfig {
    fn validate(&self) -> Result<()> {
        if !(self.lr >= 0.0 && self.lr.is_finite()) {
            return Err(Error::Argument(format!("learning rate {} must be a non-negative number", self.lr)));
        }
        if self.batch_size == Some(0) {
            return Err(Error::Argument("batch size must be at least 1".into()));
        }
        if !(self.tol >= 0.0) {
            return Err(Error::Argument(format!("tolerance {} must be non-negative", self.tol)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RoundRecord {
    pub round: usize,
    /// Mean squared error of the last epoch, in standardized units.
    pub train_loss: f64,
    pub fitness: f64,
    pub swaps: Vec<usize>,
    pub seconds: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TrainReport {
    /// Estimated fitness before the first round.
    pub initial_fitness: f64,
    pub rounds: Vec<RoundRecord>,
    /// Exact fitness of the returned artifact.
    pub final_fitness: f64,
    pub seconds: f64,
}

/// Training state for one tensor.
pub struct Trainer<'a> {
    original: &'a DenseTensor,
    standardized: DenseTensor,
    mean: f64,
    std: f64,
    spec: FoldingSpec,
    model: NttdModel,
    perms: PermutationSet,
    adam: Adam,
    cfg: TrainConfig,
    fitness_sample: Option<Vec<usize>>,
    rounds_done: usize,
}

impl<'a> Trainer<'a> {
    /// Standardizes `t`, builds the folding (auto unless given), initializes
    /// the model and the orders.
    pub fn new(t: &'a DenseTensor, rank: usize, hidden: usize, folding: Option<FoldingSpec>, cfg: TrainConfig) -> Result<Self> {
        cfg.validate()?;
        let (mean, std) = mean_std(t.values());
        if !(std > 0.0) {
            return Err(Error::Domain("cannot compress a constant tensor (standard deviation is 0)".into()));
        }
        let standardized = t.map(|v| (v - mean) / std)?;
        let spec = match folding {
            Some(spec) if spec.dims() != t.dims() => {
                return Err(Error::Argument(format!(
                    "folding is for dims {:?}, tensor has dims {:?}",
                    spec.dims(),
                    t.dims()
                )))
            }
            Some(spec) => spec,
            None => FoldingSpec::auto(t.dims())?,
        };
        let hyper = NttdHyper::new(rank, hidden, spec.folded_dims().to_vec())?;
        let model = NttdModel::random(hyper, derive_seed(cfg.seed, &[1]));
        let perms = match cfg.reordering {
            Reordering::Off => PermutationSet::identity(t.dims()),
            _ => init_orders_tsp(&standardized, derive_seed(cfg.seed, &[2])),
        };
        let fitness_sample = (t.len() > FITNESS_SAMPLE).then(|| {
            let mut idx = index::sample(&mut rng_for(cfg.seed, &[5]), t.len(), FITNESS_SAMPLE).into_vec();
            idx.sort_unstable();
            idx
        });
        let adam = Adam::new(model.param_count(), cfg.lr);
        Ok(Self {
            original: t,
            standardized,
            mean,
            std,
            spec,
            model,
            perms,
            adam,
            cfg,
            fitness_sample,
            rounds_done: 0,
        })
    }

    pub fn model(&self) -> &NttdModel {
        &self.model
    }

    pub fn perms(&self) -> &PermutationSet {
        &self.perms
    }

    pub fn spec(&self) -> &FoldingSpec {
        &self.spec
    }

    pub fn standardized(&self) -> &DenseTensor {
        &self.standardized
    }

    /// Total squared error of the model on the standardized tensor.
    pub fn loss(&self) -> f64 {
        Objective::new(&self.standardized, &self.model, &self.spec).loss(&self.perms)
    }

    /// `epochs_per_round` passes over all entries in shuffled mini-batches.
    /// Returns the mean squared error of each epoch.
    pub fn train_round(&mut self) -> Result<Vec<f64>> {
        let t = &self.standardized;
        let dp = self.spec.folded_order();
        let batch = self.cfg.batch_size.unwrap_or_else(|| auto_batch_size(t.len())).min(t.len());
        let mut order: Vec<usize> = (0..t.len()).collect();
        let mut pos = vec![0; t.order()];
        let mut orig = vec![0; t.order()];
        let mut fidx = Vec::with_capacity(batch * dp);
        let mut targets = Vec::with_capacity(batch);
        let mut losses = Vec::with_capacity(self.cfg.epochs_per_round);
        for epoch in 0..self.cfg.epochs_per_round {
            let mut rng = rng_for(self.cfg.seed, &[3, self.rounds_done as u64, epoch as u64]);
            order.shuffle(&mut rng);
            let mut sse = 0.0;
            for chunk in order.chunks(batch) {
                fidx.clear();
                targets.clear();
                for &flat in chunk {
                    t.unravel_into(flat, &mut pos);
                    self.perms.map_into(&pos, &mut orig);
                    targets.push(t.values()[t.offset_unchecked(&orig)]);
                    let start = fidx.len();
                    fidx.resize(start + dp, 0);
                    self.spec.fold_into(&pos, &mut fidx[start..]);
                }
                let (loss, grads) = self.model.batch_loss_and_grads(&fidx, &targets)?;
                if !loss.is_finite() || grads.iter().any(|g| !g.is_finite()) {
                    return Err(Error::Diverged(format!(
                        "non-finite loss in round {} epoch {epoch}",
                        self.rounds_done + 1
                    )));
                }
                sse += loss * chunk.len() as f64;
                self.adam.step(self.model.params_mut(), &grads);
            }
            losses.push(sse / t.len() as f64);
        }
        Ok(losses)
    }

    /// One order-update pass over every mode; returns swaps applied per mode.
    pub fn update_orders(&mut self) -> Vec<usize> {
        let obj = Objective::new(&self.standardized, &self.model, &self.spec);
        let seed = derive_seed(self.cfg.seed, &[4, self.rounds_done as u64]);
        update_orders(&obj, &mut self.perms, seed, self.cfg.sample_budget)
    }

    /// Fitness in original units, on the fixed subsample for large tensors.
    pub fn estimate_fitness(&self) -> f64 {
        match &self.fitness_sample {
            Some(sample) => self.fitness_on(sample),
            None => self.fitness_on_all(),
        }
    }

    fn fitness_on_all(&self) -> f64 {
        let flat: Vec<usize> = (0..self.original.len()).collect();
        self.fitness_on(&flat)
    }

    fn fitness_on(&self, flat: &[usize]) -> f64 {
        let t = self.original;
        let d = t.order();
        let dp = self.spec.folded_order();
        let parts: Vec<(f64, f64)> = flat
            .par_chunks(FITNESS_CHUNK)
            .map_init(
                || (self.model.new_tape(), vec![0; d], vec![0; d], vec![0; dp]),
                |(tape, idx, pos, fidx), chunk| {
                    let (mut err, mut norm) = (0.0, 0.0);
                    for &f in chunk {
                        t.unravel_into(f, idx);
                        for (k, (p, &i)) in pos.iter_mut().zip(idx.iter()).enumerate() {
                            *p = self.perms.inv(k)[i];
                        }
                        self.spec.fold_into(pos, fidx);
                        let approx = self.model.forward(fidx, tape) * self.std + self.mean;
                        let x = t.values()[f];
                        err += (x - approx) * (x - approx);
                        norm += x * x;
                    }
                    (err, norm)
                },
            )
            .collect();
        let (err, norm) = parts.iter().fold((0.0, 0.0), |(a, b), (e, n)| (a + e, b + n));
        if norm == 0.0 {
            return f64::NAN;
        }
        1.0 - (err / norm).sqrt()
    }

    /// Runs rounds until the fitness change drops below `tol` or `max_rounds`
    /// is reached, logging each round to `on_round`.
    pub fn run_with(mut self, mut on_round: impl FnMut(&RoundRecord)) -> Result<(CompressedArtifact, TrainReport)> {
        let start = Instant::now();
        let initial_fitness = self.estimate_fitness();
        let mut prev = initial_fitness;
        let mut rounds = Vec::new();
        while self.rounds_done < self.cfg.max_rounds {
            let round_start = Instant::now();
            let losses = self.train_round()?;
            let swaps = if self.cfg.reordering == Reordering::Full {
                self.update_orders()
            } else {
                vec![0; self.original.order()]
            };
            self.adam.reset();
            self.rounds_done += 1;
            let fitness = self.estimate_fitness();
            let record = RoundRecord {
                round: self.rounds_done,
                train_loss: losses.last().copied().unwrap_or(f64::NAN),
                fitness,
                swaps,
                seconds: round_start.elapsed().as_secs_f64(),
            };
            log::info!(
                "round {}: loss {:.6e}, fitness {:.6}, swaps {:?}",
                record.round,
                record.train_loss,
                record.fitness,
                record.swaps
            );
            on_round(&record);
            rounds.push(record);
            if (fitness - prev).abs() < self.cfg.tol {
                break;
            }
            prev = fitness;
        }
        let final_fitness = if self.fitness_sample.is_some() {
            self.fitness_on_all()
        } else {
            rounds.last().map_or(initial_fitness, |r| r.fitness)
        };
        let report = TrainReport {
            initial_fitness,
            rounds,
            final_fitness,
            seconds: start.elapsed().as_secs_f64(),
        };
        let artifact = self.into_artifact()?;
        Ok((artifact, report))
    }

    pub fn run(self) -> Result<(CompressedArtifact, TrainReport)> {
        self.run_with(|_| {})
    }

    pub fn into_artifact(self) -> Result<CompressedArtifact> {
        CompressedArtifact::new(self.spec, self.model, self.perms, self.mean, self.std, self.cfg.seed)
    }
}

/// Compresses `t` with an NTTD model of rank `rank` and hidden size `hidden`.
pub fn compress(
    t: &DenseTensor,
    rank: usize,
    hidden: usize,
    folding: Option<FoldingSpec>,
    cfg: &TrainConfig,
) -> Result<(CompressedArtifact, TrainReport)> {
    Trainer::new(t, rank, hidden, folding, cfg.clone())?.run()
}
