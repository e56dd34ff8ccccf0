//! Cross-validation over all folds and the ablation grid.

use std::fmt::Write as _;
use std::path::PathBuf;

use serde::{Deserialize, Serialize};

use crate::encoders::FrozenEncoders;
use crate::error::Result;
use crate::harness::config::{Ablation, ExperimentConfig};
use crate::harness::dataset::Dataset;
use crate::harness::folds::{make_folds, FoldPlan};
use crate::harness::train::{train, EpochLog, TrainOptions};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FoldResult {
    pub fold: usize,
    pub accuracy: f64,
    pub macro_f1: f64,
    pub best_epoch: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CvReport {
    pub configuration: String,
    pub folds: Vec<FoldResult>,
    pub mean_accuracy: f64,
    pub mean_macro_f1: f64,
}

impl CvReport {
    fn from_folds(configuration: &str, folds: Vec<FoldResult>) -> Self {
        let n = folds.len().max(1) as f64;
        Self {
            configuration: configuration.to_string(),
            mean_accuracy: folds.iter().map(|f| f.accuracy).sum::<f64>() / n,
            mean_macro_f1: folds.iter().map(|f| f.macro_f1).sum::<f64>() / n,
            folds,
        }
    }

    /// One row per fold plus the mean, accuracy and F-score in percent.
    pub fn to_table(&self) -> String {
        let mut s = format!("{:<10} {:>8} {:>8}\n", "fold", "Acc", "Fscore");
        for f in &self.folds {
            let _ = writeln!(s, "{:<10} {:>8.2} {:>8.2}", f.fold, 100.0 * f.accuracy, 100.0 * f.macro_f1);
        }
        let _ = writeln!(
            s,
            "{:<10} {:>8.2} {:>8.2}",
            "mean",
            100.0 * self.mean_accuracy,
            100.0 * self.mean_macro_f1
        );
        s
    }
}

/// Trains and evaluates each fold in `folds` (all folds when `None`) sequentially.
pub fn run_cv(
    config: &ExperimentConfig,
    dataset: &Dataset,
    encoders: &FrozenEncoders,
    folds: Option<&[usize]>,
    out_dir: Option<PathBuf>,
    mut on_epoch: impl FnMut(&EpochLog),
) -> Result<CvReport> {
    let plan: FoldPlan = make_folds(&dataset.subjects(), config.folds, config.fold_seed)?;
    plan.validate()?;
    let all: Vec<usize> = (0..plan.len()).collect();
    let selected = folds.unwrap_or(&all);
    let mut results = Vec::with_capacity(selected.len());
    for &f in selected {
        let opts = TrainOptions {
            out_dir: out_dir.as_ref().map(|d| d.join(format!("fold-{f:02}"))),
            fold_index: f,
        };
        let outcome = train(config, dataset, plan.fold(f)?, encoders.clone(), &opts, &mut on_epoch)?;
        results.push(FoldResult {
            fold: f,
            accuracy: outcome.best.metrics.accuracy,
            macro_f1: outcome.best.metrics.macro_f1,
            best_epoch: outcome.best_epoch,
        });
    }
    Ok(CvReport::from_folds(config.ablation().label(), results))
}

/// Cross-validates each of the four configurations with shared seeds and folds.
pub fn run_ablation_grid(
    config: &ExperimentConfig,
    dataset: &Dataset,
    encoders: &FrozenEncoders,
    folds: Option<&[usize]>,
    out_dir: Option<PathBuf>,
    mut on_epoch: impl FnMut(&EpochLog),
) -> Result<Vec<CvReport>> {
    Ablation::ALL
        .iter()
        .map(|&a| {
            let dir = out_dir.as_ref().map(|d| d.join(a.label().trim_start_matches('+').to_lowercase()));
            run_cv(&config.with_ablation(a), dataset, encoders, folds, dir, &mut on_epoch)
        })
        .collect()
}

/// Configuration rows with mean accuracy and F-score in percent.
pub fn grid_table(reports: &[CvReport]) -> String {
    let mut s = format!("{:<14} {:>8} {:>8}\n", "configuration", "Acc", "Fscore");
    for r in reports {
        let _ = writeln!(
            s,
            "{:<14} {:>8.2} {:>8.2}",
            r.configuration,
            100.0 * r.mean_accuracy,
            100.0 * r.mean_macro_f1
        );
    }
    s
}
