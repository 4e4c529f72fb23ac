use rand::seq::SliceRandom;

use crate::rng::{derive_seed, seeded};
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FoldAssignment {
    /// Fold index of every row.
    pub fold_of: Vec<usize>,
    pub folds: usize,
    pub warnings: Vec<String>,
}

impl FoldAssignment {
    /// `(train, test)` row indices of fold `f`, ascending.
    pub fn split(&self, f: usize) -> (Vec<usize>, Vec<usize>) {
        (0..self.fold_of.len()).partition(|&i| self.fold_of[i] != f)
    }
}

/// Shuffles each class with its own seeded stream, then deals its members
/// round-robin, continuing the deal position from one class to the next so
/// that fold sizes stay balanced too.
pub fn stratified_kfold(y: &[u8], folds: usize, seed: u64) -> Result<FoldAssignment> {
    let mut classes = y.to_vec();
    classes.sort_unstable();
    classes.dedup();
    let min_count = classes
        .iter()
        .map(|&c| y.iter().filter(|&&l| l == c).count())
        .min()
        .unwrap_or(0);
    let mut warnings = Vec::new();
    let mut k = folds;
    if min_count < folds {
        warnings.push(format!(
            "smallest class has {min_count} members; using {min_count} folds instead of {folds}"
        ));
        k = min_count;
    }
    if k < 2 {
        return Err(Error::invalid(format!("need at least 2 usable folds, got {k}")));
    }
    let mut fold_of = vec![0; y.len()];
    let mut next = 0;
    for &c in &classes {
        let mut members: Vec<usize> = (0..y.len()).filter(|&i| y[i] == c).collect();
        members.shuffle(&mut seeded(derive_seed(seed, &format!("class-{c}"))));
        for i in members {
            fold_of[i] = next % k;
            next += 1;
        }
    }
    Ok(FoldAssignment {
        fold_of,
        folds: k,
        warnings,
    })
}
