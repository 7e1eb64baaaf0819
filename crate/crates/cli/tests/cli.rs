use std::path::Path;
use std::process::{Command, Output};

fn nlvl(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_nlvl"))
        .args(args)
        .output()
        .expect("spawn nlvl")
}

fn ok(args: &[&str]) -> String {
    let out = nlvl(args);
    assert!(
        out.status.success(),
        "nlvl {args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn code(args: &[&str]) -> i32 {
    nlvl(args).status.code().expect("exit code")
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn read(p: impl AsRef<Path>) -> Vec<u8> {
    std::fs::read(p.as_ref()).unwrap_or_else(|e| panic!("{}: {e}", p.as_ref().display()))
}

const SMALL: &[&str] = &["--set", "model.hidden=[16,16,16]"];

fn train_twice(sub: &str, preset: &str, extra: &[&str]) -> (tempfile::TempDir, Vec<u8>) {
    let dir = tempfile::tempdir().unwrap();
    let mut csv = Vec::new();
    for name in ["a", "b"] {
        let out = dir.path().join(name);
        let mut args = vec![sub, "--preset", preset, "--seed", "7", "--out", s(&out)];
        args.extend_from_slice(extra);
        ok(&args);
        csv.push(read(out.join("metrics.csv")));
        assert!(out.join("config.toml").is_file());
        assert!(out.join("checkpoints/final.nlvl").is_file());
        assert!(out.join("plots/metrics.svg").is_file());
    }
    assert_eq!(csv[0], csv[1], "{sub} metrics differ between identical runs");
    let first = csv.swap_remove(0);
    (dir, first)
}

#[test]
fn classifier_runs_are_deterministic() {
    let mut extra = SMALL.to_vec();
    extra.extend(["--epochs", "3", "--set", "output.grid_res=40"]);
    let (dir, csv) = train_twice("train-classifier", "fig1", &extra);
    let text = String::from_utf8(csv).unwrap();
    assert!(text.starts_with("epoch,"));
    assert_eq!(text.lines().count(), 4);
    assert!(dir.path().join("a/plots/contours.svg").is_file());
    let cfg = std::fs::read_to_string(dir.path().join("a/config.toml")).unwrap();
    assert!(cfg.contains("seed = 7"));
}

#[test]
fn robust_runs_are_deterministic() {
    let mut extra = SMALL.to_vec();
    extra.extend(["--epochs", "2", "--set", "output.eval_every=1", "--set", "attack.steps=5"]);
    let (dir, csv) = train_twice("train-robust", "two_moons_robust", &extra);
    let text = String::from_utf8(csv).unwrap();
    assert!(text.lines().next().unwrap().contains("robust_acc_margin"));

    let run = dir.path().join("a");
    let adv = dir.path().join("adv.csv");
    let out = ok(&["attack", "--run", s(&run), "--steps", "3", "--objective", "margin", "--out", s(&adv)]);
    assert!(out.contains("clean_accuracy="));
    assert!(out.contains("robust_accuracy_Margin="));
    let rows = std::fs::read_to_string(&adv).unwrap();
    assert_eq!(rows.lines().count(), 201);
}

#[test]
fn recon_runs_are_deterministic() {
    let mut extra = SMALL.to_vec();
    extra.extend(["--epochs", "2", "--set", "extract.res=40", "--set", "output.eval_every=1"]);
    let (dir, csv) = train_twice("train-recon", "circle", &extra);
    let text = String::from_utf8(csv).unwrap();
    assert!(text.lines().next().unwrap().contains("chamfer_normalized"));
    assert!(dir.path().join("a/cloud.xyz").is_file());

    let plots = ok(&["plot", s(&dir.path().join("a"))]);
    assert!(plots.contains("metrics.svg"));
}

#[test]
fn compile_extract_project_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let net = dir.path().join("square.nlvl");
    let report = dir.path().join("verify.csv");
    let out = ok(&[
        "compile-pl", "--shape", "square", "--out", s(&net), "--verify", "2000", "--report", s(&report),
    ]);
    assert!(out.contains("planes=4"));
    assert!(read(&report).len() > 10);

    let obj = dir.path().join("square.obj");
    let out = ok(&["extract", "--model", s(&net), "--bounds", "-0.5,1.5;-0.5,1.5", "--res", "41", "--out", s(&obj)]);
    assert!(out.contains("closed=1"), "{out}");
    assert!(std::fs::read_to_string(&obj).unwrap().contains("\nv "));

    let proj = dir.path().join("proj.csv");
    ok(&[
        "project", "--model", s(&net), "--bounds", "-0.5,1.5;-0.5,1.5", "--n", "20", "--seed", "3", "--out",
        s(&proj),
    ]);
    assert_eq!(std::fs::read_to_string(&proj).unwrap().lines().count(), 21);
}

#[test]
fn eval_metrics_on_identical_clouds_is_zero() {
    let dir = tempfile::tempdir().unwrap();
    let a = dir.path().join("a.xyz");
    std::fs::write(&a, "0 0 0\n1 0 0\n0 1 0\n").unwrap();
    let out = ok(&["eval-metrics", s(&a), s(&a)]);
    let last = out.lines().last().unwrap();
    assert!(last.ends_with(",0.000000,0.000000,0.000000"), "{out}");
}

#[test]
fn errors_map_to_exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("run");
    // Wrong subcommand for the config kind.
    assert_eq!(code(&["train-recon", "--preset", "fig1", "--seed", "1", "--out", s(&out)]), 2);
    assert_eq!(code(&["train-classifier", "--preset", "nope", "--seed", "1", "--out", s(&out)]), 2);
    assert_eq!(
        code(&["train-classifier", "--preset", "fig1", "--seed", "1", "--out", s(&out), "--set", "optim.bogus=1"]),
        2
    );
    let missing = dir.path().join("missing.toml");
    assert_eq!(code(&["train-classifier", "--config", s(&missing), "--seed", "1", "--out", s(&out)]), 3);
    let bad = dir.path().join("bad.xyz");
    std::fs::write(&bad, "0 0\n1 x\n").unwrap();
    assert_eq!(code(&["eval-metrics", s(&bad), s(&bad)]), 3);
    // clap usage errors also exit with 2
    assert_eq!(code(&["train-classifier", "--preset", "fig1"]), 2);
}

#[test]
fn config_file_round_trips_through_training() {
    let dir = tempfile::tempdir().unwrap();
    let first = dir.path().join("first");
    ok(&["train-classifier", "--preset", "fig1_xent", "--seed", "4", "--out", s(&first), "--epochs", "2", "--set", "model.hidden=[8,8,8]", "--set", "output.grid_res=30"]);
    let second = dir.path().join("second");
    let cfg = first.join("config.toml");
    ok(&["train-classifier", "--config", s(&cfg), "--seed", "4", "--out", s(&second)]);
    assert_eq!(read(first.join("metrics.csv")), read(second.join("metrics.csv")));
    assert_eq!(read(first.join("checkpoints/final.nlvl")), read(second.join("checkpoints/final.nlvl")));
}
