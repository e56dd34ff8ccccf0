mod common;

use candle_core::Device;
use gait_vlm::harness::cv::{run_ablation_grid, run_cv};
use gait_vlm::harness::export::{export_embeddings, write_embeddings, EmbeddingSpace};
use gait_vlm::harness::train::read_metrics_log;
use gait_vlm::harness::{evaluate, make_folds, train, Fold, GaitModel, TrainOptions};
use gait_vlm::Error;

use common::{encoders, tiny_config, tiny_dataset};

fn first_fold(ds: &gait_vlm::harness::Dataset, k: usize) -> Fold {
    make_folds(&ds.subjects(), k, 0).unwrap().folds[0].clone()
}

#[test]
fn nte_off_never_evaluates_parameter_loss() {
    let ds = tiny_dataset(1);
    let fold = first_fold(&ds, 3);
    let mut cfg = tiny_config();
    cfg.epochs = 1;
    cfg.nte = false;
    let off = train(&cfg, &ds, &fold, encoders(&cfg), &TrainOptions::default(), |_| {}).unwrap();
    assert_eq!(off.gp_calls, 0);
    assert!(off.history.iter().all(|e| e.gp_loss == 0.0));
    cfg.nte = true;
    let on = train(&cfg, &ds, &fold, encoders(&cfg), &TrainOptions::default(), |_| {}).unwrap();
    assert!(on.gp_calls > 0);
}

#[test]
fn backbone_checksum_is_constant_across_training() {
    let ds = tiny_dataset(2);
    let fold = first_fold(&ds, 3);
    let cfg = tiny_config();
    let enc = encoders(&cfg);
    let before = enc.checksum().unwrap();
    let out = train(&cfg, &ds, &fold, enc, &TrainOptions::default(), |_| {}).unwrap();
    assert_eq!(out.checksum_start, before);
    assert_eq!(out.checksum_end, before);
    assert_eq!(out.model.backbone_checksum().unwrap(), before);
}

#[test]
fn identical_seeds_reproduce_metrics_logs() {
    let ds = tiny_dataset(3);
    let fold = first_fold(&ds, 3);
    let cfg = tiny_config();
    let dirs = [tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap()];
    for d in &dirs {
        let opts = TrainOptions {
            out_dir: Some(d.path().to_path_buf()),
            fold_index: 0,
        };
        train(&cfg, &ds, &fold, encoders(&cfg), &opts, |_| {}).unwrap();
    }
    let a = read_metrics_log(dirs[0].path().join("metrics.jsonl")).unwrap();
    let b = read_metrics_log(dirs[1].path().join("metrics.jsonl")).unwrap();
    assert_eq!(a.len(), cfg.epochs);
    assert_eq!(a.len(), b.len());
    for (x, y) in a.iter().zip(&b) {
        assert!((x.loss - y.loss).abs() <= 1e-6);
        assert!((x.video_text_loss - y.video_text_loss).abs() <= 1e-6);
        assert!((x.gp_loss - y.gp_loss).abs() <= 1e-6);
        assert!((x.val_accuracy - y.val_accuracy).abs() <= 1e-6);
        assert!((x.val_macro_f1 - y.val_macro_f1).abs() <= 1e-6);
    }

    let mut other = cfg.clone();
    other.seed = 99;
    let c = train(&other, &ds, &fold, encoders(&other), &TrainOptions::default(), |_| {}).unwrap();
    assert!((c.history[0].loss - a[0].loss).abs() > 1e-9);
}

#[test]
fn checkpoint_reloads_to_the_same_evaluation() {
    let ds = tiny_dataset(4);
    let fold = first_fold(&ds, 3);
    let cfg = tiny_config();
    let dir = tempfile::tempdir().unwrap();
    let opts = TrainOptions {
        out_dir: Some(dir.path().to_path_buf()),
        fold_index: 0,
    };
    let out = train(&cfg, &ds, &fold, encoders(&cfg), &opts, |_| {}).unwrap();
    let model = GaitModel::load(dir.path().join("checkpoint"), &Device::Cpu).unwrap();
    let report = evaluate(&model, &ds, &out.val_clips).unwrap();
    assert_eq!(report.metrics, out.best.metrics);
    for (a, b) in report.predictions.iter().zip(&out.best.predictions) {
        for (p, q) in a.prediction.probabilities.iter().zip(&b.prediction.probabilities) {
            assert!((p - q).abs() < 1e-6);
        }
    }
}

#[test]
fn leaking_fold_is_rejected() {
    let ds = tiny_dataset(5);
    let mut fold = first_fold(&ds, 3);
    fold.train.push(fold.validation[0].clone());
    let cfg = tiny_config();
    let err = train(&cfg, &ds, &fold, encoders(&cfg), &TrainOptions::default(), |_| {});
    assert!(matches!(err, Err(Error::Invalid(_))));
}

#[test]
fn non_finite_loss_aborts_with_diagnostics() {
    let ds = tiny_dataset(6);
    let fold = first_fold(&ds, 3);
    let mut cfg = tiny_config();
    cfg.epochs = 1;
    cfg.optim.lr = f64::INFINITY;
    match train(&cfg, &ds, &fold, encoders(&cfg), &TrainOptions::default(), |_| {}) {
        Err(Error::Diverged(msg)) => assert!(msg.contains("epoch"), "{msg}"),
        Err(e) => panic!("unexpected error {e}"),
        Ok(_) => panic!("training with an infinite step size should diverge"),
    }
}

#[test]
fn cross_validation_report_and_reproducibility() {
    let ds = tiny_dataset(7);
    let mut cfg = tiny_config();
    cfg.epochs = 1;
    let enc = encoders(&cfg);
    let a = run_cv(&cfg, &ds, &enc, None, None, |_| {}).unwrap();
    assert_eq!(a.folds.len(), cfg.folds);
    assert_eq!(a.to_table().lines().count(), cfg.folds + 2);
    let b = run_cv(&cfg, &ds, &enc, None, None, |_| {}).unwrap();
    assert!((a.mean_accuracy - b.mean_accuracy).abs() <= 1e-6);
    assert!((a.mean_macro_f1 - b.mean_macro_f1).abs() <= 1e-6);
}

#[test]
fn ablation_grid_has_four_rows() {
    let ds = tiny_dataset(8);
    let mut cfg = tiny_config();
    cfg.epochs = 1;
    let enc = encoders(&cfg);
    let grid = run_ablation_grid(&cfg, &ds, &enc, Some(&[0]), None, |_| {}).unwrap();
    let labels: Vec<&str> = grid.iter().map(|r| r.configuration.as_str()).collect();
    assert_eq!(labels, ["baseline", "+KAPT", "+NTE", "full"]);
}

#[test]
fn embedding_export_has_one_row_per_sample_plus_class_rows() {
    let ds = tiny_dataset(9);
    let fold = first_fold(&ds, 3);
    let mut cfg = tiny_config();
    cfg.epochs = 1;
    let out = train(&cfg, &ds, &fold, encoders(&cfg), &TrainOptions::default(), |_| {}).unwrap();
    for space in [EmbeddingSpace::Raw, EmbeddingSpace::Projected] {
        let rows = export_embeddings(&out.model, &ds, &out.val_clips, space).unwrap();
        let classes = out.model.num_classes();
        assert_eq!(rows.len(), out.val_clips.len() + classes);
        assert_eq!(rows.iter().filter(|r| r.class_feature).count(), classes);
        let dim = rows[0].vector.len();
        assert!(rows.iter().all(|r| r.vector.len() == dim));

        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("emb.csv");
        write_embeddings(&path, &rows).unwrap();
        let mut reader = csv::Reader::from_path(&path).unwrap();
        assert_eq!(reader.headers().unwrap().len(), 3 + dim);
        assert_eq!(reader.records().count(), rows.len());
    }
}
