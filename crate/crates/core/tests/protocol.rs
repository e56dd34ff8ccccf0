use gait_vlm::harness::make_folds;
use gait_vlm::harness::metrics::{class_metrics, confusion_matrix};
use gait_vlm::video_branch::{sliding_windows, WindowMode, WindowSpec};
use proptest::prelude::*;

/// Direct per-class counting, independent of the confusion matrix.
fn oracle(truth: &[usize], pred: &[usize], k: usize) -> (f64, f64) {
    let n = truth.len() as f64;
    let acc = truth.iter().zip(pred).filter(|(t, p)| t == p).count() as f64 / n;
    let mut f1 = 0.0;
    for c in 0..k {
        let tp = truth.iter().zip(pred).filter(|&(&t, &p)| t == c && p == c).count() as f64;
        let fp = truth.iter().zip(pred).filter(|&(&t, &p)| t != c && p == c).count() as f64;
        let fn_ = truth.iter().zip(pred).filter(|&(&t, &p)| t == c && p != c).count() as f64;
        let precision = if tp + fp > 0.0 { tp / (tp + fp) } else { 0.0 };
        let recall = if tp + fn_ > 0.0 { tp / (tp + fn_) } else { 0.0 };
        f1 += if precision + recall > 0.0 {
            2.0 * precision * recall / (precision + recall)
        } else {
            0.0
        };
    }
    (acc, f1 / k as f64)
}

fn labelled(k: usize) -> impl Strategy<Value = (Vec<usize>, Vec<usize>)> {
    (1usize..60).prop_flat_map(move |n| (prop::collection::vec(0..k, n), prop::collection::vec(0..k, n)))
}

proptest! {
    #[test]
    fn metrics_match_counting_oracle((truth, pred) in labelled(4)) {
        let m = class_metrics(&truth, &pred, 4).unwrap();
        let (acc, f1) = oracle(&truth, &pred, 4);
        prop_assert!((m.accuracy - acc).abs() < 1e-12);
        prop_assert!((m.macro_f1 - f1).abs() < 1e-12);
        let cm = confusion_matrix(&truth, &pred, 4).unwrap();
        prop_assert_eq!(cm.iter().flatten().sum::<usize>(), truth.len());
        for (c, row) in cm.iter().enumerate() {
            prop_assert_eq!(row.iter().sum::<usize>(), truth.iter().filter(|&&t| t == c).count());
        }
    }

    #[test]
    fn folds_are_subject_disjoint_and_exhaustive(n in 10usize..60, k in 2usize..11, seed in any::<u64>()) {
        let subjects: Vec<String> = (0..n).map(|i| format!("s{i:03}")).collect();
        let plan = make_folds(&subjects, k, seed).unwrap();
        prop_assert_eq!(plan.folds.len(), k);
        let mut seen: Vec<&String> = Vec::new();
        for f in &plan.folds {
            prop_assert!(f.validation.iter().all(|s| !f.train.contains(s)));
            prop_assert_eq!(f.train.len() + f.validation.len(), n);
            seen.extend(&f.validation);
        }
        seen.sort();
        seen.dedup();
        prop_assert_eq!(seen.len(), n);
        prop_assert_eq!(plan.clone(), make_folds(&subjects, k, seed).unwrap());
    }
}

#[test]
fn perfect_and_constant_predictors() {
    let truth: Vec<usize> = (0..30).map(|i| i % 3).collect();
    let m = class_metrics(&truth, &truth, 3).unwrap();
    assert_eq!((m.accuracy, m.macro_f1), (1.0, 1.0));
    let m = class_metrics(&truth, &[0; 30], 3).unwrap();
    assert!((m.accuracy - 1.0 / 3.0).abs() < 1e-12);
    assert!((m.macro_f1 - 0.5 / 3.0).abs() < 1e-12);
}

#[test]
fn ten_subjects_give_one_per_validation_fold() {
    let subjects: Vec<String> = (0..10).map(|i| format!("p{i}")).collect();
    let plan = make_folds(&subjects, 10, 3).unwrap();
    assert!(plan.folds.iter().all(|f| f.validation.len() == 1));
    assert!(make_folds(&subjects[..9], 10, 3).is_err());
}

#[test]
fn window_counts_follow_closed_form() {
    let spec = WindowSpec::default();
    for len in 70..=300 {
        for (mode, stride) in [(WindowMode::Train, spec.train_stride), (WindowMode::Eval, spec.eval_stride)] {
            let w = sliding_windows(len, &spec, mode).unwrap();
            assert_eq!(w.len(), (len - spec.window) / stride + 1, "len {len} {mode:?}");
            assert!(w.iter().all(|r| r.len() == spec.window && r.end <= len));
            assert!(w.windows(2).all(|p| p[1].start - p[0].start == stride));
        }
    }
}
