use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use tempfile::TempDir;

fn bin() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_kmerspace"));
    c.env("KMERSPACE_THREADS", "1");
    c
}

fn run(dir: &Path, args: &[&str]) -> Output {
    bin().current_dir(dir).args(args).output().unwrap()
}

fn ok(dir: &Path, args: &[&str]) -> String {
    let out = run(dir, args);
    assert!(
        out.status.success(),
        "{args:?}: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn read(dir: &Path, name: &str) -> Vec<u8> {
    std::fs::read(dir.join(name)).unwrap()
}

fn toy(len: usize) -> (TempDir, PathBuf) {
    let dir = tempfile::tempdir().unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let seq: String = (0..len).map(|_| ['A', 'C', 'G', 'T'][rng.random_range(0..4)]).collect();
    let mut text = String::from(">toy\n");
    for chunk in seq.as_bytes().chunks(60) {
        text.push_str(std::str::from_utf8(chunk).unwrap());
        text.push('\n');
    }
    std::fs::write(dir.path().join("toy.fa"), text).unwrap();
    let p = dir.path().to_path_buf();
    (dir, p)
}

/// Small networks so every subcommand finishes in seconds.
const FAST: &str = "[head]\nmlp_width = 32\nmlp_layers = 1\n[head_train]\nbatch = 16\niterations = 3\n[train]\nbatch_pairs = 4\niterations = 2\n";

fn fast_config(dir: &Path) {
    std::fs::write(dir.join("fast.ini"), FAST).unwrap();
}

#[test]
fn missing_fasta_is_a_usage_error_naming_the_flag() {
    let (_t, dir) = toy(500);
    let out = run(&dir, &["train-encoder", "--out", "e.ckpt"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("--fasta"));
    let out = run(&dir, &["train-encoder", "--fasta", "absent.fa", "--out", "e.ckpt"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("--fasta"));
}

#[test]
fn invalid_values_are_usage_errors() {
    let (_t, dir) = toy(500);
    for args in [
        vec!["simulate-reads", "--fasta", "toy.fa", "-n", "0", "--out", "r.tsv"],
        vec![
            "train-head",
            "--fasta",
            "toy.fa",
            "--checkpoint",
            "x",
            "--head",
            "bins",
            "--out",
            "h",
        ],
        vec!["train-encoder", "--fasta", "toy.fa", "--mode", "both", "--out", "e"],
    ] {
        assert_eq!(run(&dir, &args).status.code(), Some(2), "{args:?}");
    }
    std::fs::write(dir.join("bad.ini"), "[run]\nsed = 3\n").unwrap();
    let out = run(
        &dir,
        &[
            "simulate-reads",
            "--fasta",
            "toy.fa",
            "-n",
            "3",
            "--config",
            "bad.ini",
            "--out",
            "r.tsv",
        ],
    );
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("sed"));
}

#[test]
fn runtime_failures_exit_with_one() {
    let (_t, dir) = toy(500);
    std::fs::write(dir.join("junk.ckpt"), b"not a checkpoint").unwrap();
    ok(
        &dir,
        &["simulate-reads", "--fasta", "toy.fa", "-n", "5", "--out", "r.tsv"],
    );
    let out = run(
        &dir,
        &[
            "map",
            "--fasta",
            "toy.fa",
            "--checkpoint",
            "junk.ckpt",
            "--reads",
            "r.tsv",
            "--out",
            "m.tsv",
        ],
    );
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn zero_iterations_writes_an_initialised_model() {
    let (_t, dir) = toy(500);
    ok(
        &dir,
        &[
            "train-encoder",
            "--fasta",
            "toy.fa",
            "--iterations",
            "0",
            "--seed",
            "3",
            "--out",
            "a.ckpt",
        ],
    );
    ok(
        &dir,
        &[
            "train-encoder",
            "--fasta",
            "toy.fa",
            "--iterations",
            "0",
            "--seed",
            "3",
            "--out",
            "b.ckpt",
        ],
    );
    assert_eq!(read(&dir, "a.ckpt"), read(&dir, "b.ckpt"));
    assert_eq!(read(&dir, "a.loss.csv"), b"step,lr,loss\n");
    assert!(read(&dir, "a.config.ini").starts_with(b"[run]\nseed=3\n"));
    ok(
        &dir,
        &[
            "train-encoder",
            "--fasta",
            "toy.fa",
            "--iterations",
            "0",
            "--seed",
            "4",
            "--out",
            "c.ckpt",
        ],
    );
    assert_ne!(read(&dir, "a.ckpt"), read(&dir, "c.ckpt"));
}

#[test]
fn pipeline_is_deterministic_and_config_echo_reruns() {
    let (_t, dir) = toy(1_500);
    fast_config(&dir);
    let steps: Vec<Vec<&str>> = vec![
        vec!["train-encoder", "--fasta", "toy.fa", "--out", "enc{}.ckpt"],
        vec![
            "train-head",
            "--fasta",
            "toy.fa",
            "--checkpoint",
            "enc{}.ckpt",
            "--head",
            "gpt",
            "--out",
            "head{}.ckpt",
        ],
        vec![
            "simulate-reads",
            "--fasta",
            "toy.fa",
            "-n",
            "40",
            "--out",
            "reads{}.tsv",
        ],
        vec![
            "map",
            "--fasta",
            "toy.fa",
            "--checkpoint",
            "head{}.ckpt",
            "--reads",
            "reads{}.tsv",
            "--window",
            "300",
            "--out",
            "map{}.tsv",
        ],
        vec![
            "eval",
            "--mapping",
            "map{}.tsv",
            "--reads",
            "reads{}.tsv",
            "--out",
            "ecdf{}.csv",
        ],
        vec![
            "pca",
            "--fasta",
            "toy.fa",
            "--checkpoint",
            "enc{}.ckpt",
            "--out",
            "pca{}.csv",
        ],
        vec![
            "knn-stats",
            "--fasta",
            "toy.fa",
            "--checkpoint",
            "enc{}.ckpt",
            "--out",
            "knn{}.csv",
        ],
        vec![
            "embed",
            "--fasta",
            "toy.fa",
            "--checkpoint",
            "enc{}.ckpt",
            "--out",
            "emb{}.csv",
        ],
    ];
    let outputs = ["enc", "head", "reads", "map", "ecdf", "pca", "knn", "emb"];
    let exts = ["ckpt", "ckpt", "tsv", "tsv", "csv", "csv", "csv", "csv"];
    for tag in ["a", "b"] {
        for step in &steps {
            let mut args: Vec<String> = step.iter().map(|s| s.replace("{}", tag)).collect();
            args.extend(["--config".into(), "fast.ini".into(), "--seed".into(), "9".into()]);
            ok(&dir, &args.iter().map(String::as_str).collect::<Vec<_>>());
        }
    }
    for (o, e) in outputs.iter().zip(exts) {
        assert_eq!(
            read(&dir, &format!("{o}a.{e}")),
            read(&dir, &format!("{o}b.{e}")),
            "{o}"
        );
    }
    // The resolved config alone reproduces the run.
    ok(
        &dir,
        &[
            "train-encoder",
            "--fasta",
            "toy.fa",
            "--config",
            "enca.config.ini",
            "--out",
            "encc.ckpt",
        ],
    );
    assert_eq!(read(&dir, "enca.ckpt"), read(&dir, "encc.ckpt"));
    assert_eq!(read(&dir, "enca.config.ini"), read(&dir, "encc.config.ini"));
}

#[test]
fn csv_header_contracts() {
    let (_t, dir) = toy(1_000);
    fast_config(&dir);
    ok(
        &dir,
        &[
            "train-encoder",
            "--fasta",
            "toy.fa",
            "--config",
            "fast.ini",
            "--iterations",
            "0",
            "--out",
            "e.ckpt",
        ],
    );
    ok(
        &dir,
        &["pca", "--fasta", "toy.fa", "--checkpoint", "e.ckpt", "--out", "pca.csv"],
    );
    let pca = String::from_utf8(read(&dir, "pca.csv")).unwrap();
    assert!(pca.starts_with("pc1,pc2,coordinate\n"));
    assert_eq!(pca.lines().nth(1).unwrap().split(',').count(), 3);
    ok(
        &dir,
        &[
            "knn-stats",
            "--fasta",
            "toy.fa",
            "--checkpoint",
            "e.ckpt",
            "--out",
            "knn.csv",
        ],
    );
    assert!(read(&dir, "knn.csv").starts_with(b"coordinate,mean_knn_distance\n"));
    ok(
        &dir,
        &[
            "train-head",
            "--fasta",
            "toy.fa",
            "--config",
            "fast.ini",
            "--checkpoint",
            "e.ckpt",
            "--out",
            "h.ckpt",
        ],
    );
    std::fs::write(
        dir.join("long.ini"),
        "[damage]\nfragment_len = 150\n[inversion]\nbackground_reads = 100\n",
    )
    .unwrap();
    ok(
        &dir,
        &[
            "simulate-reads",
            "--fasta",
            "toy.fa",
            "--config",
            "long.ini",
            "-n",
            "30",
            "--invert",
            "300:600",
            "--out",
            "inv.tsv",
        ],
    );
    ok(
        &dir,
        &[
            "detect-inversions",
            "--fasta",
            "toy.fa",
            "--config",
            "long.ini",
            "--checkpoint",
            "h.ckpt",
            "--reads",
            "inv.tsv",
            "--out",
            "inv.csv",
        ],
    );
    assert!(read(&dir, "inv.csv").starts_with(b"read_id,coordinate,distance,flagged\n"));
    let summary = String::from_utf8(read(&dir, "inv.summary.csv")).unwrap();
    assert!(summary.contains("background_quantile,0.99,"));
    assert!(summary.contains("threshold,"));
}

#[test]
fn eval_reports_perfect_and_empty_mappings() {
    let (_t, dir) = toy(1_000);
    ok(
        &dir,
        &[
            "simulate-reads",
            "--fasta",
            "toy.fa",
            "-n",
            "25",
            "--noiseless",
            "--out",
            "r.tsv",
        ],
    );
    let truth = String::from_utf8(read(&dir, "r.tsv")).unwrap();
    let mut mapping = String::from("read_id\tpred_coord\trefined_coord\tstrand\tscore\tambiguous\n");
    for line in truth.lines().skip(1) {
        let f: Vec<&str> = line.split('\t').collect();
        mapping.push_str(&format!("{}\t{}\t{}\t{}\t30\t0\n", f[0], f[2], f[2], f[3]));
    }
    std::fs::write(dir.join("m.tsv"), mapping).unwrap();
    let out = ok(
        &dir,
        &["eval", "--mapping", "m.tsv", "--reads", "r.tsv", "--out", "e.csv"],
    );
    assert_eq!(out.trim(), "accuracy=1.0000");
    let ecdf = String::from_utf8(read(&dir, "e.csv")).unwrap();
    let values: Vec<f64> = ecdf
        .lines()
        .skip(1)
        .map(|l| l.split(',').nth(1).unwrap().parse().unwrap())
        .collect();
    assert!(values.windows(2).all(|w| w[0] <= w[1]));
    assert_eq!(*values.last().unwrap(), 1.0);

    std::fs::write(dir.join("empty.tsv"), "read_id\tsequence\ttrue_coordinate\tstrand\n").unwrap();
    std::fs::write(
        dir.join("empty_map.tsv"),
        "read_id\tpred_coord\trefined_coord\tstrand\tscore\tambiguous\n",
    )
    .unwrap();
    let out = ok(
        &dir,
        &[
            "eval",
            "--mapping",
            "empty_map.tsv",
            "--reads",
            "empty.tsv",
            "--out",
            "e2.csv",
        ],
    );
    assert!(out.contains("accuracy=undefined"));

    let mut bad = String::from_utf8(read(&dir, "m.tsv")).unwrap();
    bad = bad.replacen("read3\t", "other\t", 1);
    std::fs::write(dir.join("bad.tsv"), bad).unwrap();
    let out = run(
        &dir,
        &["eval", "--mapping", "bad.tsv", "--reads", "r.tsv", "--out", "e3.csv"],
    );
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("other"));
}

#[test]
fn map_of_empty_read_set_is_empty() {
    let (_t, dir) = toy(1_000);
    fast_config(&dir);
    ok(
        &dir,
        &[
            "train-encoder",
            "--fasta",
            "toy.fa",
            "--config",
            "fast.ini",
            "--iterations",
            "0",
            "--out",
            "e.ckpt",
        ],
    );
    ok(
        &dir,
        &[
            "train-head",
            "--fasta",
            "toy.fa",
            "--config",
            "fast.ini",
            "--checkpoint",
            "e.ckpt",
            "--out",
            "h.ckpt",
        ],
    );
    std::fs::write(dir.join("empty.tsv"), "read_id\tsequence\ttrue_coordinate\tstrand\n").unwrap();
    ok(
        &dir,
        &[
            "map",
            "--fasta",
            "toy.fa",
            "--checkpoint",
            "h.ckpt",
            "--reads",
            "empty.tsv",
            "--out",
            "m.tsv",
        ],
    );
    assert_eq!(
        read(&dir, "m.tsv"),
        b"read_id\tpred_coord\trefined_coord\tstrand\tscore\tambiguous\n"
    );
}

#[test]
fn head_checkpoint_must_match_the_reference() {
    let (_t, dir) = toy(1_000);
    fast_config(&dir);
    ok(
        &dir,
        &[
            "train-encoder",
            "--fasta",
            "toy.fa",
            "--config",
            "fast.ini",
            "--iterations",
            "0",
            "--out",
            "e.ckpt",
        ],
    );
    ok(
        &dir,
        &[
            "train-head",
            "--fasta",
            "toy.fa",
            "--config",
            "fast.ini",
            "--checkpoint",
            "e.ckpt",
            "--out",
            "h.ckpt",
        ],
    );
    std::fs::write(
        dir.join("short.fa"),
        ">s\nACGTACGTACGTACGTACGTACGTACGTACGTACGTACGTACGTACGTACGTACGTACGT\n",
    )
    .unwrap();
    ok(
        &dir,
        &["simulate-reads", "--fasta", "short.fa", "-n", "3", "--out", "r.tsv"],
    );
    let out = run(
        &dir,
        &[
            "map",
            "--fasta",
            "short.fa",
            "--checkpoint",
            "h.ckpt",
            "--reads",
            "r.tsv",
            "--out",
            "m.tsv",
        ],
    );
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("length"));
}
