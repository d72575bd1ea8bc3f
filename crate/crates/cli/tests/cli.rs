use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;
use tempfile::TempDir;

use tensorcodec::bench::random_artifact;
use tensorcodec::tensor::{read_tcn_file, write_tcn_file};
use tensorcodec::DenseTensor;

fn tencodec(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_tencodec"))
        .args(args)
        .env_remove("TENCODEC_THREADS")
        .output()
        .expect("binary runs")
}

fn ok_json(args: &[&str]) -> Value {
    let out = tencodec(args);
    assert!(out.status.success(), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
    serde_json::from_slice(&out.stdout).expect("stdout is JSON")
}

fn p(dir: &TempDir, name: &str) -> String {
    dir.path().join(name).to_str().unwrap().to_owned()
}

fn synth(dir: &TempDir, kind: &str, dims: &str, name: &str) -> String {
    let path = p(dir, name);
    let out = tencodec(&["synth", "--kind", kind, "--dims", dims, "--seed", "1", "-o", &path]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    path
}

#[test]
fn rank_one_round_trip_reaches_high_fitness() {
    let dir = TempDir::new().unwrap();
    let input = synth(&dir, "rank1", "16x16x16", "r1.tcn");
    let (tcc, recon, log) = (p(&dir, "r1.tcc"), p(&dir, "r1r.tcn"), p(&dir, "log.jsonl"));
    let res = ok_json(&[
        "compress", "-i", &input, "-o", &tcc, "--rank", "4", "--hidden", "8", "--batch", "128", "--epochs", "10",
        "--rounds", "5", "--tol", "0", "--seed", "1", "--log", &log,
    ]);
    assert_eq!(res["bytes"].as_u64().unwrap(), std::fs::metadata(&tcc).unwrap().len());
    assert!(res["seconds"].as_f64().unwrap() > 0.0);
    let lines = std::fs::read_to_string(&log).unwrap();
    assert_eq!(lines.lines().count() as u64, res["rounds"].as_u64().unwrap());
    let first: Value = serde_json::from_str(lines.lines().next().unwrap()).unwrap();
    assert_eq!(first["round"], 1);

    let out = tencodec(&["decompress", "-i", &tcc, "-o", &recon]);
    assert!(out.status.success());
    let eval = ok_json(&["eval", "--original", &input, "--approx", &recon]);
    assert!(eval["fitness"].as_f64().unwrap() >= 0.95, "{eval}");
    assert!((eval["fitness"].as_f64().unwrap() - res["fitness"].as_f64().unwrap()).abs() < 1e-9);

    // A single query agrees exactly with the full reconstruction.
    let q = ok_json(&["query", "-i", &tcc, "--index", "3,7,11"]);
    let full = read_tcn_file(Path::new(&recon)).unwrap();
    assert_eq!(q["value"].as_f64().unwrap(), full.get(&[3, 7, 11]).unwrap());
    assert!(q["micros"].as_f64().unwrap() >= 0.0);
}

#[test]
fn zero_rounds_still_writes_an_artifact() {
    let dir = TempDir::new().unwrap();
    let input = synth(&dir, "smooth", "6x5x4", "s.tcn");
    let tcc = p(&dir, "s.tcc");
    let res = ok_json(&["compress", "-i", &input, "-o", &tcc, "--rank", "2", "--hidden", "2", "--rounds", "0"]);
    assert_eq!(res["rounds"], 0);
    let q = ok_json(&["query", "-i", &tcc, "--index", "0,0,0"]);
    assert!(q["value"].as_f64().unwrap().is_finite());
}

#[test]
fn query_on_a_single_entry_tensor() {
    let dir = TempDir::new().unwrap();
    let tcc = p(&dir, "one.tcc");
    let a = random_artifact(&[1], 2, 2, 5).unwrap();
    std::fs::write(&tcc, a.serialize()).unwrap();
    let recon = p(&dir, "one.tcn");
    assert!(tencodec(&["decompress", "-i", &tcc, "-o", &recon]).status.success());
    let only = read_tcn_file(Path::new(&recon)).unwrap().values()[0];
    let q = ok_json(&["query", "-i", &tcc, "--index", "0"]);
    assert_eq!(q["value"].as_f64().unwrap(), only);
}

#[test]
fn f32_precision_shrinks_the_model() {
    let dir = TempDir::new().unwrap();
    let input = synth(&dir, "smooth", "8x8x8", "s.tcn");
    let (a, b) = (p(&dir, "a.tcc"), p(&dir, "b.tcc"));
    let common = ["--rank", "2", "--hidden", "3", "--rounds", "1", "--epochs", "1"];
    let r64 = ok_json(&[&["compress", "-i", &input, "-o", &a][..], &common].concat());
    let r32 = ok_json(&[&["compress", "-i", &input, "-o", &b, "--precision", "f32"][..], &common].concat());
    assert!(r32["bytes"].as_u64().unwrap() < r64["bytes"].as_u64().unwrap());
    assert!((r32["fitness"].as_f64().unwrap() - r64["fitness"].as_f64().unwrap()).abs() < 1e-3);
}

#[test]
fn fold_matrix_override() {
    let dir = TempDir::new().unwrap();
    let input = synth(&dir, "smooth", "8x4", "s.tcn");
    let fm = p(&dir, "fold.txt");
    std::fs::write(&fm, "2 2 2\n2 2 1\n").unwrap();
    let tcc = p(&dir, "s.tcc");
    ok_json(&["compress", "-i", &input, "-o", &tcc, "--rank", "2", "--hidden", "2", "--rounds", "1", "--fold-matrix", &fm]);
    std::fs::write(&fm, "2 2 1\n2 2 1\n").unwrap();
    let out = tencodec(&["compress", "-i", &input, "-o", &tcc, "--fold-matrix", &fm]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn exit_codes() {
    let dir = TempDir::new().unwrap();
    let missing = p(&dir, "nope.tcn");
    let out = tencodec(&["compress", "-i", &missing, "-o", &p(&dir, "x.tcc")]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("nope.tcn"));

    let zeros = p(&dir, "z.tcn");
    write_tcn_file(Path::new(&zeros), &DenseTensor::zeros(&[4, 4]).unwrap()).unwrap();
    let out = tencodec(&["compress", "-i", &zeros, "-o", &p(&dir, "z.tcc")]);
    assert_eq!(out.status.code(), Some(3));

    let input = synth(&dir, "random", "8x8", "r.tcn");
    let out = tencodec(&["compress", "-i", &input, "-o", &p(&dir, "r.tcc"), "--lr", "1e120", "--rounds", "2"]);
    assert_eq!(out.status.code(), Some(2));

    let tcc = p(&dir, "ok.tcc");
    ok_json(&["compress", "-i", &input, "-o", &tcc, "--rank", "1", "--hidden", "1", "--rounds", "0"]);
    assert_eq!(tencodec(&["query", "-i", &tcc, "--index", "1,2,3"]).status.code(), Some(1));
    assert_eq!(tencodec(&["query", "-i", &tcc, "--index", "1,8"]).status.code(), Some(1));

    std::fs::write(&tcc, b"TCCZ garbage").unwrap();
    assert_eq!(tencodec(&["decompress", "-i", &tcc, "-o", &p(&dir, "o.tcn")]).status.code(), Some(1));
    assert_eq!(tencodec(&["synth", "--kind", "random", "--dims", "4x0", "-o", &p(&dir, "bad.tcn")]).status.code(), Some(1));
    assert_eq!(tencodec(&["frobnicate"]).status.code(), Some(1));
}

#[test]
fn stats_and_eval() {
    let dir = TempDir::new().unwrap();
    let zeros = p(&dir, "z.tcn");
    write_tcn_file(Path::new(&zeros), &DenseTensor::zeros(&[3, 3]).unwrap()).unwrap();
    let s = ok_json(&["stats", "-i", &zeros]);
    assert_eq!(s["density"], 0.0);
    assert!(s["smoothness"].is_null());

    let half = p(&dir, "h.tcn");
    write_tcn_file(Path::new(&half), &DenseTensor::new(vec![2, 2], vec![0.0, 1.0, 0.0, 2.0]).unwrap()).unwrap();
    let s = ok_json(&["stats", "-i", &half]);
    assert_eq!(s["density"], 0.5);
    assert_eq!(s["dims"], serde_json::json!([2, 2]));
    assert!(s["smoothness"].is_number());

    let e = ok_json(&["eval", "--original", &half, "--approx", &half]);
    assert_eq!(e["fitness"], 1.0);
}

#[test]
fn synth_random_is_unit_interval_and_seeded() {
    let dir = TempDir::new().unwrap();
    let a = synth(&dir, "random", "10x10x10", "a.tcn");
    let b = synth(&dir, "random", "10,10,10", "b.tcn");
    let ta = read_tcn_file(Path::new(&a)).unwrap();
    assert!(ta.values().iter().all(|&v| (0.0..1.0).contains(&v)));
    assert_eq!(std::fs::read(&a).unwrap(), std::fs::read(&b).unwrap());
    for kind in ["rank1", "smooth", "shuffled", "nttd"] {
        synth(&dir, kind, "6x5x4", &format!("{kind}.tcn"));
    }
}

fn csv(dir: &TempDir, args: &[&str]) -> Vec<csv_row::Row> {
    let out = p(dir, "out.csv");
    let res = Command::new(env!("CARGO_BIN_EXE_tencodec"))
        .args(args)
        .args(["-o", &out, "--threads", "1"])
        .output()
        .unwrap();
    assert!(res.status.success(), "{}", String::from_utf8_lossy(&res.stderr));
    csv_row::read(&out)
}

mod csv_row {
    use std::collections::HashMap;

    pub type Row = HashMap<String, String>;

    pub fn read(path: &str) -> Vec<Row> {
        let mut r = csv::Reader::from_path(path).unwrap();
        r.deserialize().map(|row| row.unwrap()).collect()
    }

    pub fn get<'a>(row: &'a Row, key: &str) -> &'a str {
        &row[key]
    }
}

#[test]
fn bench_query_scaling_has_one_row_per_length() {
    let dir = TempDir::new().unwrap();
    let rows = csv(&dir, &["bench", "query-scaling", "--queries", "64"]);
    let lens: Vec<&str> = rows.iter().map(|r| csv_row::get(r, "n_max")).collect();
    let expected: Vec<String> = (6..=14).map(|e| (1usize << e).to_string()).collect();
    assert_eq!(lens, expected);
}

#[test]
fn bench_ablation_variants() {
    let dir = TempDir::new().unwrap();
    let rows = csv(
        &dir,
        &["bench", "ablation", "--dims", "8x6x4", "--seeds", "2", "--rank", "2", "--hidden", "2", "--epochs", "1", "--rounds", "1"],
    );
    let names: Vec<&str> = rows.iter().map(|r| csv_row::get(r, "variant")).collect();
    assert_eq!(names, ["full", "-R", "-T", "-N", "full", "-R", "-T", "-N"]);
}

#[test]
fn bench_compress_scaling_and_tradeoff() {
    let dir = TempDir::new().unwrap();
    let rows = csv(&dir, &["bench", "compress-scaling", "--shapes", "8x8;16x8"]);
    assert_eq!(csv_row::get(&rows[1], "entries"), "128");
    let rows = csv(
        &dir,
        &["bench", "tradeoff", "--dims", "6x6x6", "--settings", "2:2", "--tt-ranks", "1,2", "--epochs", "1", "--rounds", "1"],
    );
    let methods: Vec<&str> = rows.iter().map(|r| csv_row::get(r, "method")).collect();
    assert_eq!(methods, ["tensorcodec", "tt-svd", "tt-svd"]);
}

#[test]
fn threads_env_is_validated() {
    let dir = TempDir::new().unwrap();
    let out = Command::new(env!("CARGO_BIN_EXE_tencodec"))
        .args(["synth", "--kind", "random", "--dims", "2x2", "-o", &p(&dir, "a.tcn")])
        .env("TENCODEC_THREADS", "lots")
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(1));
    let out = Command::new(env!("CARGO_BIN_EXE_tencodec"))
        .args(["synth", "--kind", "random", "--dims", "2x2", "-o", &p(&dir, "a.tcn")])
        .env("TENCODEC_THREADS", "1")
        .output()
        .unwrap();
    assert!(out.status.success());
}
