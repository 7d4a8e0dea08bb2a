use std::fs;
use std::path::Path;
use std::process::{Command, Output};

const TINY: &str = "\
dataset.kind = gaussian
dataset.d = 2
dataset.n_train = 256
dataset.n_test = 256
net.mid = 8
net.depth = 1
train.epochs = 2
train.batch_size = 64
sampler.steps = 20
sampler.n_samples = 128
metric.projections = 50
run.repetitions = 1
sweep.epsilons = 0
sweep.a = 1
";

fn cld(dir: &Path, args: &[&str]) -> Output {
    let cfg = dir.join("tiny.cfg");
    if !cfg.exists() {
        fs::write(&cfg, TINY).unwrap();
    }
    Command::new(env!("CARGO_BIN_EXE_cld"))
        .args(args)
        .arg("--config")
        .arg(&cfg)
        .arg("--out")
        .arg(dir.join("out"))
        .arg("--threads")
        .arg("1")
        .output()
        .unwrap()
}

fn code(o: &Output) -> i32 {
    o.status.code().unwrap()
}

fn read(dir: &Path, name: &str) -> String {
    fs::read_to_string(dir.join("out").join(name)).unwrap()
}

fn strip_wall(csv: &str) -> String {
    csv.lines().map(|l| l.rsplit_once(',').map_or(l, |(head, _)| head)).collect::<Vec<_>>().join("\n")
}

#[test]
fn single_cell_experiment_writes_all_tables() {
    let dir = tempfile::tempdir().unwrap();
    let o = cld(dir.path(), &["experiment"]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let results = read(dir.path(), "results.csv");
    let lines: Vec<&str> = results.lines().collect();
    assert_eq!(lines[0], "dataset,epsilon,a,seed,n,sw2,wall_seconds");
    assert_eq!(lines.len(), 2);
    assert!(lines[1].starts_with("gaussian,0.0,1.0,0,128,"));
    assert!(read(dir.path(), "aggregate.csv").starts_with("epsilon,a=1.0\n0.0,"));
    assert!(dir.path().join("out/cells/eps0.0_a1.0_rep0.cldn").exists());
}

#[test]
fn resume_skips_finished_cells_and_reruns_are_identical() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(code(&cld(dir.path(), &["experiment"])), 0);
    let first = read(dir.path(), "manifest.csv");
    let o = cld(dir.path(), &["experiment"]);
    assert!(String::from_utf8_lossy(&o.stdout).contains("1 already in the manifest"));
    assert_eq!(read(dir.path(), "manifest.csv"), first);

    let other = tempfile::tempdir().unwrap();
    assert_eq!(code(&cld(other.path(), &["experiment"])), 0);
    assert_eq!(strip_wall(&read(other.path(), "results.csv")), strip_wall(&read(dir.path(), "results.csv")));
}

#[test]
fn pipeline_dataset_train_sample_eval() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("out");
    assert_eq!(code(&cld(dir.path(), &["dataset"])), 0);
    let o = cld(dir.path(), &["train", "--data", out.join("train.clds").to_str().unwrap()]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    assert!(read(dir.path(), "loss.csv").starts_with("epoch,mean_loss,wall_seconds\n0,"));
    assert_eq!(code(&cld(dir.path(), &["sample"])), 0);
    let o = cld(
        dir.path(),
        &[
            "eval",
            "--samples",
            out.join("samples.clds").to_str().unwrap(),
            "--test",
            out.join("test.clds").to_str().unwrap(),
        ],
    );
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let eval = read(dir.path(), "eval.csv");
    assert_eq!(eval.lines().count(), 2);
    let sw2: f64 = eval.lines().nth(1).unwrap().split(',').nth(5).unwrap().parse().unwrap();
    assert!(sw2.is_finite() && sw2 > 0.0);

    // a checkpoint trained without position noise cannot drive an ε > 0 sampler
    assert_eq!(code(&cld(dir.path(), &["sample", "--set", "kinetics.epsilon=0.5"])), 1);
}

#[test]
fn analytic_sampling_needs_no_checkpoint() {
    let dir = tempfile::tempdir().unwrap();
    let o = cld(dir.path(), &["sample", "--set", "sampler.score_source=analytic"]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    assert_eq!(read(dir.path(), "samples.csv").lines().count(), 129);
    let o = cld(dir.path(), &["sample", "--set", "sampler.score_source=analytic", "--set", "dataset.kind=funnel"]);
    assert_eq!(code(&o), 1);
}

#[test]
fn theory_single_point_and_bound_violation() {
    let dir = tempfile::tempdir().unwrap();
    let o = cld(dir.path(), &["theory"]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let csv = read(dir.path(), "theory.csv");
    let rows: Vec<&str> = csv.lines().collect();
    assert_eq!(rows.len(), 2);
    let admissible: f64 = rows[1].split(',').nth(8).unwrap().parse().unwrap();
    assert!(admissible <= 0.0);

    // the stated eigenvalue upper bound fails at a = 1, σ = 2, ε = 1
    let o = cld(dir.path(), &["theory", "--set", "sweep.epsilons=1"]);
    assert_eq!(code(&o), 3);
    assert!(read(dir.path(), "theory.csv").lines().nth(1).unwrap().contains(",false,"));
}

#[test]
fn config_and_usage_errors_exit_one() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(code(&cld(dir.path(), &["controlled", "--set", "sweep.epsilons=0.5,1.5"])), 1);
    assert_eq!(code(&cld(dir.path(), &["theory", "--set", "train.epoch=3"])), 1);
    assert_eq!(code(&cld(dir.path(), &["frobnicate"])), 1);
    assert_eq!(code(&cld(dir.path(), &["eval", "--samples", "/nonexistent.clds"])), 1);
}

#[test]
fn diverging_training_exits_two() {
    let dir = tempfile::tempdir().unwrap();
    let o = cld(dir.path(), &["train", "--set", "train.lr=1e30", "--set", "train.epochs=5"]);
    assert_eq!(code(&o), 2, "{}", String::from_utf8_lossy(&o.stderr));
}

#[test]
fn controlled_sweep_reports_derived_a() {
    let dir = tempfile::tempdir().unwrap();
    let o = cld(dir.path(), &["controlled", "--set", "sweep.epsilons=1", "--set", "sampler.score_source=analytic"]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    assert!(read(dir.path(), "results.csv").lines().nth(1).unwrap().starts_with("gaussian,1.0,0.5,"));
}
