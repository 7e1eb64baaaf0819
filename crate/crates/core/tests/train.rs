mod common;

use std::collections::BTreeMap;

use common::{random_net, random_point};
use levelsets::data::{ingest_idx, merge_low_high_digits, LabeledBatch};
use levelsets::mlp::Batch;
use levelsets::pl::{compile_to_mlp, enumerate_lambda, unit_square};
use levelsets::train::{
    accuracy, classifier_contours, emit_plots, pgd_attack, preset, robust_accuracy, train, AttackConfig,
    AttackObjective, RunConfig, RunDirectory,
};
use levelsets::{Matrix, Mlp};
use proptest::prelude::*;

/// Two logits `[0, x0]`: class 1 exactly where `x0 > 0`.
fn half_plane() -> Mlp {
    Mlp::affine(&Matrix::from_rows(&[vec![0.0, 0.0], vec![1.0, 0.0]]).unwrap(), &[0.0, 0.0]).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn pgd_stays_in_the_ball_and_the_box(seed in 0u64..100_000, eps in 0.0f64..0.5, margin_obj: bool) {
        let mlp = random_net(seed, 4, 3, 2, 8);
        let x: Vec<f64> = random_point(seed, 4).iter().map(|v| 0.5 + 0.5 * v).collect();
        let cfg = AttackConfig {
            eps_attack: eps,
            steps: 10,
            step_size: 0.05,
            objective: if margin_obj { AttackObjective::Margin } else { AttackObjective::Xent },
            restarts: 2,
            clip: Some((0.0, 1.0)),
            ..AttackConfig::default()
        };
        let adv = pgd_attack(&mlp, &x, (seed % 3) as usize, &cfg, seed).unwrap();
        for (a, b) in adv.iter().zip(&x) {
            prop_assert!((a - b).abs() <= eps + 1e-12);
            prop_assert!((0.0..=1.0).contains(a));
        }
        prop_assert_eq!(&adv, &pgd_attack(&mlp, &x, (seed % 3) as usize, &cfg, seed).unwrap());
    }
}

#[test]
fn pgd_flips_points_near_the_boundary_only() {
    let mlp = half_plane();
    let near: Vec<Vec<f64>> = (0..20).map(|i| vec![0.01 + 0.004 * i as f64, 0.1 * i as f64]).collect();
    let far: Vec<Vec<f64>> = (0..20).map(|i| vec![0.5 + 0.01 * i as f64, -0.1 * i as f64]).collect();
    let cfg = AttackConfig {
        eps_attack: 0.1,
        steps: 20,
        step_size: 0.02,
        ..AttackConfig::default()
    };
    for obj in [AttackObjective::Xent, AttackObjective::Margin] {
        let cfg = AttackConfig { objective: obj, ..cfg.clone() };
        let near = LabeledBatch::new(Batch::from_rows(2, &near).unwrap(), vec![1; 20]).unwrap();
        let far = LabeledBatch::new(Batch::from_rows(2, &far).unwrap(), vec![1; 20]).unwrap();
        assert_eq!(accuracy(&mlp, &near), 1.0);
        assert!(robust_accuracy(&mlp, &near, &cfg, 0).unwrap() <= 0.5);
        assert_eq!(robust_accuracy(&mlp, &far, &cfg, 0).unwrap(), 1.0);
        let none = AttackConfig { eps_attack: 0.0, ..cfg };
        assert_eq!(robust_accuracy(&mlp, &near, &none, 0).unwrap(), 1.0);
    }
}

#[test]
fn compiled_square_has_closed_margin_contours() {
    let sq = unit_square();
    let mlp = compile_to_mlp(&sq, &enumerate_lambda(&sq).unwrap()).unwrap();
    let contours = classifier_contours(&mlp, &[(-0.5, 1.5), (-0.5, 1.5)], 81).unwrap();
    let zero = contours.iter().find(|m| m.level == 0.0).unwrap();
    assert_eq!(zero.polylines.len(), 1);
    assert!(zero.polylines[0].closed);
    for v in &zero.vertices {
        let on_edge = [v[0], v[1], 1.0 - v[0], 1.0 - v[1]].iter().any(|c| c.abs() < 1e-9);
        assert!(on_edge, "{v:?} is off the square");
    }
}

#[test]
fn run_without_metrics_plots_a_warning() {
    let dir = tempfile::tempdir().unwrap();
    let run = RunDirectory::create(dir.path().join("r"), &preset("fig1").unwrap()).unwrap();
    let plots = emit_plots(&run).unwrap();
    let svg = std::fs::read_to_string(&plots[0]).unwrap();
    assert!(svg.contains("warning: no data recorded"));
}

#[test]
fn cross_entropy_separates_the_sixteen_point_fixture() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = preset("fig1_xent")
        .unwrap()
        .with_overrides(&[
            "model.hidden=[32,32,32]".into(),
            "optim.epochs=150".into(),
            "optim.lr=0.01".into(),
            "output.checkpoint_every=50".into(),
            "output.grid_res=60".into(),
        ])
        .unwrap();
    let run = RunDirectory::create(dir.path().join("r"), &cfg).unwrap();
    let summary = train(&cfg, &run).unwrap();
    assert_eq!(summary.metrics.last("train_acc"), Some(1.0));
    for e in [50, 100, 150] {
        assert!(run.checkpoint_dir().join(format!("epoch_{e:05}.nlvl")).is_file());
    }
    assert_eq!(run.load_final().unwrap(), summary.model);
    assert!(run.plots_dir().join("contours.svg").is_file());
    let back = run.metrics().unwrap();
    assert_eq!(back.rows.len(), 150);
    assert!(matches!(run.config().unwrap(), RunConfig::Classifier(_)));
}

fn idx_images(n: usize, rows: usize, cols: usize, pixel: impl Fn(usize, usize) -> u8) -> Vec<u8> {
    let mut b = vec![0, 0, 8, 3];
    for v in [n, rows, cols] {
        b.extend_from_slice(&(v as u32).to_be_bytes());
    }
    for i in 0..n {
        for k in 0..rows * cols {
            b.push(pixel(i, k));
        }
    }
    b
}

fn idx_labels(labels: &[u8]) -> Vec<u8> {
    let mut b = vec![0, 0, 8, 1];
    b.extend_from_slice(&(labels.len() as u32).to_be_bytes());
    b.extend_from_slice(labels);
    b
}

#[test]
fn idx_files_are_scaled_merged_and_subset() {
    let dir = tempfile::tempdir().unwrap();
    let (img, lab) = (dir.path().join("img"), dir.path().join("lab"));
    std::fs::write(&img, idx_images(10, 2, 3, |i, k| ((i * 10 + k) * 4) as u8)).unwrap();
    std::fs::write(&lab, idx_labels(&[0, 1, 2, 3, 4, 5, 6, 7, 8, 9])).unwrap();

    let all = ingest_idx(&img, &lab, None, &BTreeMap::new(), 0).unwrap();
    assert_eq!((all.len(), all.dim()), (10, 6));
    assert_eq!(all.x.row(1)[2], 48.0 / 255.0);
    assert_eq!(all.labels[7], 7);

    let merged = ingest_idx(&img, &lab, None, &merge_low_high_digits(), 0).unwrap();
    assert_eq!(merged.labels, vec![0, 0, 0, 0, 0, 1, 1, 1, 1, 1]);

    let a = ingest_idx(&img, &lab, Some(4), &merge_low_high_digits(), 3).unwrap();
    let b = ingest_idx(&img, &lab, Some(4), &merge_low_high_digits(), 3).unwrap();
    assert_eq!(a.len(), 4);
    assert_eq!(a, b);

    std::fs::write(&lab, idx_labels(&[0, 1, 2])).unwrap();
    assert!(ingest_idx(&img, &lab, None, &BTreeMap::new(), 0).is_err());
    let mut short = idx_images(2, 2, 2, |_, _| 1);
    short.pop();
    std::fs::write(&img, short).unwrap();
    let err = ingest_idx(&img, &lab, None, &BTreeMap::new(), 0).unwrap_err();
    assert_eq!(err.kind(), levelsets::ErrorKind::Data);
}
