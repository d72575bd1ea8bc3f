//! End-to-end acceptance checks. Every criterion runs in sequence (timings
//! are part of several of them), prints one PASS/FAIL line, and the test
//! fails if any criterion fails.

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::io::Write;
use std::path::Path;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use tensorcodec::bench::{compress_scaling, query_scaling, random_artifact};
use tensorcodec::codec::CompressedArtifact;
use tensorcodec::nttd::generate_random_nttd_tensor;
use tensorcodec::reorder::{init_orders_tsp, mode_slices, path_cost, update_orders, Objective};
use tensorcodec::synth;
use tensorcodec::tensor::fitness;
use tensorcodec::trainer::{compress, Reordering, TrainConfig, Trainer};
use tensorcodec::ttd::{tt_svd, variant_n, TtTarget};
use tensorcodec::{DenseTensor, FoldingSpec, NttdHyper, NttdModel, PermutationSet};

type Outcome = Result<String, String>;

fn check(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn within(start: Instant, limit: Duration, what: &str) -> Result<(), String> {
    let took = start.elapsed();
    check(took <= limit, || format!("{what} took {took:.1?}, limit {limit:?}"))
}

fn folding_bijection() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut cells = 0usize;
    for _ in 0..50 {
        let d = rng.random_range(1..=4);
        let dims: Vec<usize> = (0..d).map(|_| rng.random_range(1..=64)).collect();
        let spec = FoldingSpec::auto(&dims).map_err(|e| e.to_string())?;
        let padded = spec.padded_dims().to_vec();
        let folded = spec.folded_dims().to_vec();
        let total: usize = padded.iter().product();
        let mut seen = vec![0u64; total.div_ceil(64)];
        let mut idx = vec![0usize; d];
        let mut fidx = vec![0usize; folded.len()];
        let mut back = vec![0usize; d];
        for _ in 0..total {
            spec.fold_into(&idx, &mut fidx);
            let off = fidx.iter().zip(&folded).fold(0, |acc, (&i, &n)| {
                assert!(i < n);
                acc * n + i
            });
            let (word, bit) = (off / 64, 1u64 << (off % 64));
            check(seen[word] & bit == 0, || format!("dims {dims:?}: folded cell {fidx:?} hit twice"))?;
            seen[word] |= bit;
            spec.unfold_into(&fidx, &mut back);
            check(back == idx, || format!("dims {dims:?}: {idx:?} -> {fidx:?} -> {back:?}"))?;
            for k in (0..d).rev() {
                idx[k] += 1;
                if idx[k] < padded[k] {
                    break;
                }
                idx[k] = 0;
            }
        }
        cells += total;
    }
    within(start, Duration::from_secs(10), "folding round trips")?;
    Ok(format!("{cells} padded cells over 50 dim sets, all exact"))
}

fn gradient_correctness() -> Outcome {
    let start = Instant::now();
    let folded = vec![4, 3, 5, 2, 4];
    let mut worst = 0.0f64;
    for seed in 0..3u64 {
        let hyper = NttdHyper::new(3, 4, folded.clone()).unwrap();
        let mut model = NttdModel::random(hyper, seed);
        let mut rng = ChaCha8Rng::seed_from_u64(100 + seed);
        let n = 64;
        let fidx: Vec<usize> = (0..n).flat_map(|_| folded.iter().map(|&m| rng.random_range(0..m)).collect::<Vec<_>>()).collect();
        let targets: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
        let (_, grads) = model.batch_loss_and_grads(&fidx, &targets).unwrap();
        let picked = rand::seq::index::sample(&mut rng, model.param_count(), 100);
        let step = 1e-5;
        for p in picked.iter() {
            let orig = model.params()[p];
            model.params_mut()[p] = orig + step;
            let (plus, _) = model.batch_loss_and_grads(&fidx, &targets).unwrap();
            model.params_mut()[p] = orig - step;
            let (minus, _) = model.batch_loss_and_grads(&fidx, &targets).unwrap();
            model.params_mut()[p] = orig;
            let numeric = (plus - minus) / (2.0 * step);
            let rel = (grads[p] - numeric).abs() / grads[p].abs().max(numeric.abs()).max(1e-6);
            worst = worst.max(rel);
        }
    }
    within(start, Duration::from_secs(30), "gradient check")?;
    check(worst < 1e-4, || format!("max relative error {worst:.3e}"))?;
    Ok(format!("max relative error {worst:.2e} over 300 parameters"))
}

fn tt_svd_guarantee() -> Outcome {
    let start = Instant::now();
    let mut worst_margin = f64::INFINITY;
    for eps in [0.1, 0.3, 0.5] {
        for s in 0..20u64 {
            let t = synth::random_uniform(&[8, 8, 8], 1000 + s).unwrap();
            let cores = tt_svd(&t, TtTarget::Tolerance(eps)).unwrap();
            let approx = cores.reconstruct_full().unwrap();
            let err = t
                .values()
                .iter()
                .zip(approx.values())
                .map(|(a, b)| (a - b) * (a - b))
                .sum::<f64>()
                .sqrt()
                / t.frobenius_norm();
            check(err <= eps, || format!("eps {eps}, tensor {s}: relative error {err}"))?;
            worst_margin = worst_margin.min(eps - err);
        }
    }
    within(start, Duration::from_secs(60), "TT-SVD checks")?;
    Ok(format!("60 cases, smallest margin {worst_margin:.3e}"))
}

fn distance_matrix(t: &DenseTensor, mode: usize) -> Vec<Vec<f64>> {
    let slices = mode_slices(t, mode);
    slices
        .iter()
        .map(|a| {
            slices
                .iter()
                .map(|b| a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt())
                .collect()
        })
        .collect()
}

/// Minimum-weight Hamiltonian path by dynamic programming over subsets.
fn optimal_path(w: &[Vec<f64>]) -> f64 {
    let n = w.len();
    if n <= 1 {
        return 0.0;
    }
    let full = 1usize << n;
    let mut best = vec![f64::INFINITY; full * n];
    for v in 0..n {
        best[(1 << v) * n + v] = 0.0;
    }
    for set in 1..full {
        for v in 0..n {
            let cur = best[set * n + v];
            if set & (1 << v) == 0 || !cur.is_finite() {
                continue;
            }
            for u in 0..n {
                if set & (1 << u) == 0 {
                    let next = (set | (1 << u)) * n + u;
                    best[next] = best[next].min(cur + w[v][u]);
                }
            }
        }
    }
    (0..n).map(|v| best[(full - 1) * n + v]).fold(f64::INFINITY, f64::min)
}

/// Kruskal's MST weight.
fn mst_weight(w: &[Vec<f64>]) -> f64 {
    let n = w.len();
    let mut edges: Vec<(f64, usize, usize)> = (0..n).flat_map(|a| (a + 1..n).map(move |b| (a, b))).map(|(a, b)| (w[a][b], a, b)).collect();
    edges.sort_by(|x, y| x.0.total_cmp(&y.0));
    let mut root: Vec<usize> = (0..n).collect();
    fn find(root: &mut [usize], mut x: usize) -> usize {
        while root[x] != x {
            root[x] = root[root[x]];
            x = root[x];
        }
        x
    }
    let mut total = 0.0;
    for (wt, a, b) in edges {
        let (ra, rb) = (find(&mut root, a), find(&mut root, b));
        if ra != rb {
            root[ra] = rb;
            total += wt;
        }
    }
    total
}

fn tsp_bound() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut worst_ratio = 0.0f64;
    let mut modes = 0;
    for inst in 0..30u64 {
        let d = rng.random_range(1..=3);
        let dims: Vec<usize> = (0..d).map(|_| rng.random_range(2..=10)).collect();
        let t = DenseTensor::from_fn(&dims, |_| rng.random_range(-1.0..1.0)).unwrap();
        let p = init_orders_tsp(&t, inst);
        for k in 0..d {
            let w = distance_matrix(&t, k);
            let cost = path_cost(p.perm(k), |a, b| w[a][b]);
            let opt = optimal_path(&w);
            let mst = mst_weight(&w);
            check(cost <= 2.0 * opt + 1e-9, || format!("instance {inst} mode {k}: cost {cost} > 2 x optimal {opt}"))?;
            check(cost <= 2.0 * mst + 1e-9, || format!("instance {inst} mode {k}: cost {cost} > 2 x MST {mst}"))?;
            worst_ratio = worst_ratio.max(cost / opt.max(1e-300));
            modes += 1;
        }
    }
    within(start, Duration::from_secs(120), "TSP checks")?;
    Ok(format!("{modes} modes over 30 instances, worst cost/optimal {worst_ratio:.3}"))
}

fn reorder_monotonicity() -> Outcome {
    let start = Instant::now();
    let dims = [16, 16, 16];
    let spec = FoldingSpec::auto(&dims).unwrap();
    let mut passes = 0;
    let mut swaps = 0;
    for s in 0..10u64 {
        let t = synth::random_uniform(&dims, 500 + s).unwrap();
        let hyper = NttdHyper::new(3, 4, spec.folded_dims().to_vec()).unwrap();
        let model = NttdModel::random(hyper, s);
        let obj = Objective::new(&t, &model, &spec);
        let mut p = PermutationSet::random(&dims, s);
        let mut loss = obj.loss(&p);
        for pass in 0..3 {
            swaps += update_orders(&obj, &mut p, pass, usize::MAX).iter().sum::<usize>();
            let next = obj.loss(&p);
            // Allow only summation-order rounding.
            check(next <= loss * (1.0 + 1e-12), || format!("tensor {s} pass {pass}: {loss} -> {next}"))?;
            loss = next;
            passes += 1;
        }
    }
    within(start, Duration::from_secs(300), "reorder passes")?;
    Ok(format!("{passes} passes, {swaps} swaps, loss never increased"))
}

fn end_to_end_quality() -> Outcome {
    let start = Instant::now();
    let t = synth::rank1(&[16, 16, 16], 1).unwrap();
    let cfg = TrainConfig {
        batch_size: Some(128),
        epochs_per_round: 10,
        max_rounds: 5,
        tol: 0.0,
        seed: 1,
        ..TrainConfig::default()
    };
    let (a, report) = compress(&t, 4, 8, None, &cfg).map_err(|e| e.to_string())?;
    let f_rank1 = fitness(&t, &a.reconstruct_full().unwrap()).unwrap();
    within(start, Duration::from_secs(120), "rank-1 compression")?;
    check(report.rounds.len() <= 5 && f_rank1 >= 0.95, || format!("rank-1 fitness {f_rank1:.4}"))?;

    let start = Instant::now();
    let dims = [64, 32, 32];
    let mut wins = 0;
    let mut detail = Vec::new();
    for seed in 0..5u64 {
        let t = synth::shuffled(&synth::smooth(&dims, seed).unwrap(), seed + 100).0;
        let cfg = TrainConfig {
            batch_size: Some(256),
            epochs_per_round: 5,
            max_rounds: 6,
            seed,
            ..TrainConfig::default()
        };
        let (a, report) = compress(&t, 4, 8, None, &cfg).map_err(|e| e.to_string())?;
        let budget = a.report_size().payload() / 8;
        let n = variant_n(&t, a.spec(), budget).map_err(|e| e.to_string())?;
        if report.final_fitness >= n.fitness {
            wins += 1;
        }
        detail.push(format!("{:.3}/{:.3}", report.final_fitness, n.fitness));
    }
    within(start, Duration::from_secs(900), "smooth-after-shuffle runs")?;
    check(wins >= 4, || format!("full pipeline beat -N in {wins}/5 seeds ({})", detail.join(", ")))?;
    Ok(format!(
        "rank-1 fitness {f_rank1:.4} in {} rounds; full vs -N fitness {} ({wins}/5 wins)",
        report.rounds.len(),
        detail.join(", ")
    ))
}

fn expressiveness() -> Outcome {
    let start = Instant::now();
    let dims = [64, 64, 64];
    let t = generate_random_nttd_tensor(5, 5, &dims, 7).unwrap();
    let spec = FoldingSpec::auto(&dims).unwrap();
    let generator_params = NttdHyper::new(5, 5, spec.folded_dims().to_vec()).unwrap().param_count();
    let mut needed = None;
    for r in 1..=64 {
        let cores = tt_svd(&t, TtTarget::MaxRank(r)).unwrap();
        if fitness(&t, &cores.reconstruct_full().unwrap()).unwrap() >= 0.95 {
            needed = Some((r, cores.param_count()));
            break;
        }
    }
    within(start, Duration::from_secs(600), "expressiveness probe")?;
    let (rank, params) = needed.ok_or("no TT rank reached fitness 0.95")?;
    let factor = params as f64 / generator_params as f64;
    check(factor > 1.0, || format!("TT-SVD needs {params} parameters, generator has {generator_params}"))?;
    Ok(format!(
        "TT-SVD needs rank {rank} = {params} parameters vs {generator_params} in the generator (factor {factor:.1})"
    ))
}

fn scaling() -> Outcome {
    let start = Instant::now();
    let queries = 1 << 18;
    let mut best = [f64::INFINITY; 2];
    for rep in 0..2 {
        let rows = query_scaling(&[1 << 8, 1 << 16], 3, queries, 5, 5, rep).map_err(|e| e.to_string())?;
        for (b, r) in best.iter_mut().zip(&rows) {
            *b = b.min(r.mean_us);
        }
    }
    let query_ratio = best[1] / best[0];
    check(query_ratio <= 3.0, || format!("query latency ratio {query_ratio:.2}"))?;

    let shapes = vec![vec![128, 128, 64], vec![128, 128, 128], vec![256, 128, 128], vec![256, 256, 128]];
    let cfg = TrainConfig {
        epochs_per_round: 1,
        seed: 3,
        reordering: Reordering::Full,
        ..TrainConfig::default()
    };
    let mut round = vec![f64::INFINITY; shapes.len()];
    for _ in 0..2 {
        let rows = compress_scaling(&shapes, 2, 4, &cfg).map_err(|e| e.to_string())?;
        for (b, r) in round.iter_mut().zip(&rows) {
            *b = b.min(r.seconds_per_round);
        }
    }
    let growth: Vec<f64> = round.windows(2).map(|w| w[1] / w[0]).collect();
    within(start, Duration::from_secs(1200), "scaling runs")?;
    check(growth.iter().all(|&g| g <= 2.6), || format!("per-round time growth per doubling {growth:.2?}"))?;
    Ok(format!(
        "query {:.2}us -> {:.2}us (ratio {query_ratio:.2}); round seconds {round:.2?}, growth {growth:.2?}",
        best[0], best[1]
    ))
}

fn ceil_log2(n: usize) -> usize {
    let mut bits = 0;
    while (1usize << bits) < n {
        bits += 1;
    }
    bits
}

fn size_accounting() -> Outcome {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    for i in 0..20u64 {
        let d = rng.random_range(1..=4);
        let dims: Vec<usize> = (0..d).map(|_| rng.random_range(1..=300)).collect();
        let a = random_artifact(&dims, rng.random_range(1..=6), rng.random_range(1..=8), i).map_err(|e| e.to_string())?;
        let path = dir.path().join(format!("a{i}.tcc"));
        std::fs::write(&path, a.serialize()).map_err(|e| e.to_string())?;
        let file_len = std::fs::metadata(&path).map_err(|e| e.to_string())?.len() as usize;
        let size = a.report_size();
        check(size.total == file_len, || format!("dims {dims:?}: reported {} vs file {file_len}", size.total))?;
        let perm_bytes: usize = dims.iter().map(|&n| (n * ceil_log2(n)).div_ceil(8)).sum();
        check(size.perms == perm_bytes, || format!("dims {dims:?}: perm bytes {} vs {perm_bytes}", size.perms))?;
        check(size.model == 8 * a.model().param_count(), || "model bytes".into())?;
        check(size.header + size.model + size.perms == size.total, || "parts do not add up".into())?;
    }
    Ok("20 artifacts, totals equal file lengths, permutation bytes match".into())
}

fn golden_fixture() -> Outcome {
    let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures/golden.tcc");
    let bytes = std::fs::read(&path).map_err(|e| format!("{}: {e}", path.display()))?;
    let a = CompressedArtifact::deserialize(&bytes).map_err(|e| e.to_string())?;
    let b = CompressedArtifact::deserialize(&bytes).map_err(|e| e.to_string())?;
    let bits = |x: &CompressedArtifact| x.model().params().iter().map(|p| p.to_bits()).collect::<Vec<_>>();
    check(bits(&a) == bits(&b) && a.perms() == b.perms(), || "two decodes differ".into())?;
    let regenerated = random_artifact(&[6, 5, 4], 2, 3, 42).map_err(|e| e.to_string())?;
    check(bits(&a) == bits(&regenerated), || "fixture parameters differ from the seeded generator".into())?;
    check(regenerated.serialize() == bytes, || "re-encoding the seeded artifact changes bytes".into())?;
    Ok(format!(
        "{} bytes, {} parameters decode bit-identically and match the seeded encoder",
        bytes.len(),
        a.model().param_count()
    ))
}

/// Written to the raw stderr handle so the lines show without `--nocapture`.
fn report(line: &str) {
    let _ = writeln!(std::io::stderr(), "{line}");
}

#[test]
fn acceptance() {
    let criteria: [(&str, fn() -> Outcome); 10] = [
        ("1 folding bijection", folding_bijection),
        ("2 gradient correctness", gradient_correctness),
        ("3 TT-SVD guarantee", tt_svd_guarantee),
        ("4 TSP init bound", tsp_bound),
        ("5 exact-delta reorder monotonicity", reorder_monotonicity),
        ("6 end-to-end quality", end_to_end_quality),
        ("7 expressiveness", expressiveness),
        ("8 scaling", scaling),
        ("9 size accounting", size_accounting),
        ("10 serialization", golden_fixture),
    ];
    let mut failed = Vec::new();
    for (name, run) in criteria {
        let start = Instant::now();
        let outcome = catch_unwind(AssertUnwindSafe(run)).unwrap_or_else(|_| Err("panicked".into()));
        let secs = start.elapsed().as_secs_f64();
        match outcome {
            Ok(msg) => report(&format!("criterion {name}: PASS ({secs:.1}s) {msg}")),
            Err(msg) => {
                report(&format!("criterion {name}: FAIL ({secs:.1}s) {msg}"));
                failed.push(name);
            }
        }
    }
    assert!(failed.is_empty(), "failed criteria: {failed:?}");
}

#[test]
fn trainer_ablation_variants_run() {
    // Quick smoke run of the variant switches used by the ablation harness.
    let t = synth::shuffled(&synth::smooth(&[8, 8, 4], 1).unwrap(), 2).0;
    for reordering in [Reordering::Full, Reordering::InitOnly, Reordering::Off] {
        let cfg = TrainConfig {
            batch_size: Some(32),
            epochs_per_round: 1,
            max_rounds: 1,
            reordering,
            ..TrainConfig::default()
        };
        let tr = Trainer::new(&t, 2, 2, None, cfg).unwrap();
        assert_eq!(tr.perms().is_identity(), reordering == Reordering::Off);
        tr.run().unwrap();
    }
}
