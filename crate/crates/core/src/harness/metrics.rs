//! Per-video aggregation, accuracy, macro-F1 and confusion matrices.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::text_branch::argmax;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum Aggregation {
    /// Mean of window probability vectors, then argmax.
    #[default]
    MeanProbability,
    /// Most frequent window prediction; ties go to the lowest class index.
    MajorityVote,
}

/// Video-level `(probabilities, class)` from window probability vectors.
pub fn aggregate(windows: &[Vec<f64>], how: Aggregation) -> Result<(Vec<f64>, usize)> {
    let first = windows.first().ok_or_else(|| Error::Invalid("video has no windows".into()))?;
    let n = first.len();
    let mut mean = vec![0.0; n];
    for w in windows {
        if w.len() != n {
            return Err(Error::shape("window probabilities", n, w.len()));
        }
        for (m, p) in mean.iter_mut().zip(w) {
            *m += p / windows.len() as f64;
        }
    }
    let class = match how {
        Aggregation::MeanProbability => argmax(&mean),
        Aggregation::MajorityVote => {
            let mut votes = vec![0.0; n];
            for w in windows {
                votes[argmax(w)] += 1.0;
            }
            argmax(&votes)
        }
    };
    Ok((mean, class))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassMetrics {
    pub accuracy: f64,
    pub macro_f1: f64,
    /// `confusion[true][predicted]`
    pub confusion: Vec<Vec<usize>>,
}

pub fn confusion_matrix(truth: &[usize], predicted: &[usize], classes: usize) -> Result<Vec<Vec<usize>>> {
    if truth.len() != predicted.len() {
        return Err(Error::shape("predictions", truth.len(), predicted.len()));
    }
    let mut m = vec![vec![0; classes]; classes];
    for (&t, &p) in truth.iter().zip(predicted) {
        if t >= classes || p >= classes {
            return Err(Error::OutOfRange(format!("label pair ({t}, {p}) with {classes} classes")));
        }
        m[t][p] += 1;
    }
    Ok(m)
}

/// Accuracy and macro-F1; a class with no true or predicted samples scores F1 = 0.
pub fn class_metrics(truth: &[usize], predicted: &[usize], classes: usize) -> Result<ClassMetrics> {
    if truth.is_empty() {
        return Err(Error::Invalid("no predictions to score".into()));
    }
    let confusion = confusion_matrix(truth, predicted, classes)?;
    let correct: usize = (0..classes).map(|c| confusion[c][c]).sum();
    let f1_sum: f64 = (0..classes)
        .map(|c| {
            let tp = confusion[c][c] as f64;
            let fp = (0..classes).map(|t| confusion[t][c]).sum::<usize>() as f64 - tp;
            let fn_ = confusion[c].iter().sum::<usize>() as f64 - tp;
            let denom = 2.0 * tp + fp + fn_;
            if denom > 0.0 {
                2.0 * tp / denom
            } else {
                0.0
            }
        })
        .sum();
    Ok(ClassMetrics {
        accuracy: correct as f64 / truth.len() as f64,
        macro_f1: f1_sum / classes as f64,
        confusion,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn perfect_predictions() {
        let y = [0, 1, 2, 2, 1, 0];
        let m = class_metrics(&y, &y, 3).unwrap();
        assert_eq!(m.accuracy, 1.0);
        assert_eq!(m.macro_f1, 1.0);
    }

    #[test]
    fn constant_predictor_on_balanced_set() {
        let truth = [0, 0, 1, 1, 2, 2];
        let m = class_metrics(&truth, &[0; 6], 3).unwrap();
        assert!((m.accuracy - 1.0 / 3.0).abs() < 1e-12);
        // F1 of the predicted class is 2/(1+3); the other two are 0.
        assert!((m.macro_f1 - 0.5 / 3.0).abs() < 1e-12);
        assert_eq!(m.confusion[1][0], 2);
    }

    #[test]
    fn mean_and_majority_can_disagree() {
        let w = vec![vec![0.4, 0.6], vec![0.45, 0.55], vec![0.95, 0.05]];
        assert_eq!(aggregate(&w, Aggregation::MeanProbability).unwrap().1, 0);
        assert_eq!(aggregate(&w, Aggregation::MajorityVote).unwrap().1, 1);
        assert!(aggregate(&[], Aggregation::MeanProbability).is_err());
    }
}
