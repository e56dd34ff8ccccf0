//! Subject-disjoint cross-validation folds.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Fold {
    pub train: Vec<String>,
    pub validation: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FoldPlan {
    pub folds: Vec<Fold>,
}

/// Shuffles `subjects` by `seed` and deals them round-robin into `k`
/// validation groups; each fold trains on the remaining subjects.
pub fn make_folds(subjects: &[String], k: usize, seed: u64) -> Result<FoldPlan> {
    let mut unique: Vec<String> = subjects.to_vec();
    unique.sort();
    unique.dedup();
    if k < 2 || unique.len() < k {
        return Err(Error::Invalid(format!(
            "{k}-fold split needs k >= 2 and at least k subjects, found {}",
            unique.len()
        )));
    }
    unique.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let mut groups = vec![Vec::new(); k];
    for (i, s) in unique.iter().enumerate() {
        groups[i % k].push(s.clone());
    }
    let folds = (0..k)
        .map(|f| Fold {
            validation: groups[f].clone(),
            train: unique.iter().filter(|s| !groups[f].contains(s)).cloned().collect(),
        })
        .collect();
    Ok(FoldPlan { folds })
}

impl FoldPlan {
    pub fn len(&self) -> usize {
        self.folds.len()
    }

    pub fn is_empty(&self) -> bool {
        self.folds.is_empty()
    }

    pub fn fold(&self, i: usize) -> Result<&Fold> {
        self.folds
            .get(i)
            .ok_or_else(|| Error::OutOfRange(format!("fold {i} of {}", self.folds.len())))
    }

    /// Checks disjointness within folds and that validation groups partition the subjects.
    pub fn validate(&self) -> Result<()> {
        let mut all: Vec<&String> = Vec::new();
        for (i, f) in self.folds.iter().enumerate() {
            if f.validation.iter().any(|s| f.train.contains(s)) {
                return Err(Error::Invalid(format!("fold {i} leaks a subject")));
            }
            all.extend(&f.validation);
        }
        let n = all.len();
        all.sort();
        all.dedup();
        if all.len() != n {
            return Err(Error::Invalid("a subject appears in two validation groups".into()));
        }
        for (i, f) in self.folds.iter().enumerate() {
            if f.train.len() + f.validation.len() != n {
                return Err(Error::Invalid(format!("fold {i} does not cover every subject")));
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn ids(n: usize) -> Vec<String> {
        (0..n).map(|i| format!("s{i:03}")).collect()
    }

    #[test]
    fn ten_subjects_one_per_fold() {
        let plan = make_folds(&ids(10), 10, 0).unwrap();
        assert!(plan.folds.iter().all(|f| f.validation.len() == 1 && f.train.len() == 9));
        plan.validate().unwrap();
    }

    #[test]
    fn too_few_subjects() {
        assert!(make_folds(&ids(9), 10, 0).is_err());
    }

    #[test]
    fn deterministic_per_seed() {
        assert_eq!(make_folds(&ids(30), 10, 4).unwrap(), make_folds(&ids(30), 10, 4).unwrap());
        assert_ne!(make_folds(&ids(30), 10, 4).unwrap(), make_folds(&ids(30), 10, 5).unwrap());
    }

    proptest! {
        #[test]
        fn folds_partition_subjects(n in 10usize..80, k in 2usize..11, seed in any::<u64>()) {
            prop_assume!(n >= k);
            let plan = make_folds(&ids(n), k, seed).unwrap();
            plan.validate().unwrap();
            let mut union: Vec<String> = plan.folds.iter().flat_map(|f| f.validation.clone()).collect();
            union.sort();
            prop_assert_eq!(union, ids(n));
            let sizes: Vec<usize> = plan.folds.iter().map(|f| f.validation.len()).collect();
            prop_assert!(sizes.iter().max().unwrap() - sizes.iter().min().unwrap() <= 1);
        }
    }
}
