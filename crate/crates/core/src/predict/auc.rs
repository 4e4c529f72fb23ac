use nalgebra::DMatrix;
use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{ToPrimitive, Zero};
use serde::{Deserialize, Serialize};

use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassAuc {
    pub class: u8,
    pub auc: f64,
    pub support: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AucReport {
    pub classes: Vec<ClassAuc>,
    /// `Σ_c support(c)/n · AUC(c)` over the classes in `classes`.
    pub weighted: f64,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub warnings: Vec<String>,
}

/// Twice the Mann–Whitney U of the positives: pairs where the positive
/// outranks the negative count 2, ties count 1.
fn doubled_u(scores: &[f64], positive: &[bool]) -> u128 {
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));
    let mut rank_sum: u128 = 0;
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && scores[order[j + 1]] == scores[order[i]] {
            j += 1;
        }
        // 1-based ranks i+1..=j+1 share the doubled midrank i+j+2.
        let pos = order[i..=j].iter().filter(|&&r| positive[r]).count() as u128;
        rank_sum += pos * (i + j + 2) as u128;
        i = j + 1;
    }
    let p = positive.iter().filter(|&&b| b).count() as u128;
    rank_sum - p * (p + 1)
}

/// Support-weighted one-vs-rest ROC AUC. Column `j` of `scores` holds the
/// scores for `classes[j]`. Classes with no positives or no negatives in `y`
/// are left out with a warning; the aggregate is computed in exact rational
/// arithmetic before rounding.
pub fn weighted_auc(scores: &DMatrix<f64>, classes: &[u8], y: &[u8]) -> Result<AucReport> {
    if scores.nrows() != y.len() {
        return Err(Error::Misaligned(format!("{} score rows vs {} labels", scores.nrows(), y.len())));
    }
    if scores.ncols() != classes.len() {
        return Err(Error::DimensionMismatch(format!(
            "{} score columns for {} classes",
            scores.ncols(),
            classes.len()
        )));
    }
    if scores.iter().any(|v| v.is_nan()) {
        return Err(Error::invalid("scores contain NaN"));
    }
    let n = y.len();
    let mut warnings = Vec::new();
    for c in y {
        if !classes.contains(c) && !warnings.iter().any(|w: &String| w.contains(&format!("class {c} "))) {
            warnings.push(format!("class {c} has no score column; excluded"));
        }
    }
    let mut included = Vec::new();
    for (j, &c) in classes.iter().enumerate() {
        let positive: Vec<bool> = y.iter().map(|&l| l == c).collect();
        let p = positive.iter().filter(|&&b| b).count();
        if p == 0 {
            warnings.push(format!("class {c} is absent from the labels; excluded"));
            continue;
        }
        if p == n {
            warnings.push(format!("class {c} has no negatives; excluded"));
            continue;
        }
        let col: Vec<f64> = scores.column(j).iter().copied().collect();
        included.push((c, doubled_u(&col, &positive), p, n - p));
    }
    if included.is_empty() {
        return Err(Error::invalid("no class has both positives and negatives"));
    }
    let total: usize = included.iter().map(|t| t.2).sum();
    let mut weighted = BigRational::zero();
    let mut out = Vec::with_capacity(included.len());
    for &(c, u2, p, neg) in &included {
        let auc = BigRational::new(BigInt::from(u2), BigInt::from(2 * p as u128 * neg as u128));
        weighted += BigRational::new(BigInt::from(u2), BigInt::from(2 * total as u128 * neg as u128));
        out.push(ClassAuc {
            class: c,
            auc: auc.to_f64().expect("finite ratio"),
            support: p,
        });
    }
    Ok(AucReport {
        classes: out,
        weighted: weighted.to_f64().expect("finite ratio"),
        warnings,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::seeded;
    use num_traits::One;
    use proptest::prelude::*;
    use rand::Rng;

    /// Counts every (positive, negative) pair directly.
    fn oracle(scores: &DMatrix<f64>, classes: &[u8], y: &[u8]) -> BigRational {
        let n = BigInt::from(y.len());
        let mut total = BigRational::zero();
        let half = BigRational::new(BigInt::one(), BigInt::from(2));
        for (j, &c) in classes.iter().enumerate() {
            let pos: Vec<usize> = (0..y.len()).filter(|&i| y[i] == c).collect();
            let neg: Vec<usize> = (0..y.len()).filter(|&i| y[i] != c).collect();
            if pos.is_empty() || neg.is_empty() {
                continue;
            }
            let mut wins = BigRational::zero();
            for &a in &pos {
                for &b in &neg {
                    if scores[(a, j)] > scores[(b, j)] {
                        wins += BigRational::one();
                    } else if scores[(a, j)] == scores[(b, j)] {
                        wins += half.clone();
                    }
                }
            }
            let auc = wins / BigRational::from_integer(BigInt::from(pos.len() * neg.len()));
            total += auc * BigRational::new(BigInt::from(pos.len()), n.clone());
        }
        total
    }

    #[test]
    fn hand_example() {
        let y = [1, 2, 2];
        let s = DMatrix::from_row_slice(3, 2, &[0.9, 0.2, 0.1, 0.8, 0.3, 0.4]);
        let r = weighted_auc(&s, &[1, 2], &y).unwrap();
        assert_eq!(r.classes[0].auc, 1.0);
        assert_eq!(r.classes[1].auc, 1.0);
        assert_eq!(r.weighted, 1.0);
    }

    #[test]
    fn ties_count_half() {
        let y = [1, 2];
        let s = DMatrix::from_row_slice(2, 1, &[0.5, 0.5]);
        assert_eq!(weighted_auc(&s, &[1], &y).unwrap().classes[0].auc, 0.5);
    }

    #[test]
    fn absent_class_is_excluded() {
        let y = [1, 1, 2, 2];
        let s = DMatrix::from_row_slice(4, 3, &[0.9, 0.1, 0.0, 0.8, 0.2, 0.0, 0.1, 0.9, 0.0, 0.3, 0.7, 0.0]);
        let r = weighted_auc(&s, &[1, 2, 3], &y).unwrap();
        assert_eq!(r.classes.len(), 2);
        assert_eq!(r.warnings.len(), 1);
        assert_eq!(r.weighted, 1.0);
        assert!(weighted_auc(&s, &[1, 2, 3], &y[..3]).is_err());
    }

    #[test]
    fn random_scores_are_near_chance() {
        let mut rng = seeded(2);
        let y: Vec<u8> = (0..3000).map(|i| (i % 3) as u8 + 1).collect();
        let s = DMatrix::from_fn(3000, 3, |_, _| rng.random::<f64>());
        let r = weighted_auc(&s, &[1, 2, 3], &y).unwrap();
        assert!((r.weighted - 0.5).abs() < 0.03);
    }

    proptest! {
        #[test]
        fn matches_pairwise_oracle(seed in 0u64..10_000, n in 2usize..120, levels in 1u32..8) {
            let mut rng = seeded(seed);
            let y: Vec<u8> = (0..n).map(|_| rng.random_range(1..=3)).collect();
            let s = DMatrix::from_fn(n, 3, |_, _| rng.random_range(0..levels) as f64 / 2.0);
            match weighted_auc(&s, &[1, 2, 3], &y) {
                Ok(r) => {
                    prop_assert_eq!(r.weighted, oracle(&s, &[1, 2, 3], &y).to_f64().unwrap());
                    let recon: f64 = r.classes.iter().map(|c| c.support as f64 / n as f64 * c.auc).sum();
                    prop_assert!((recon - r.weighted).abs() < 1e-12);
                }
                Err(_) => prop_assert!(y.iter().all(|&l| l == y[0])),
            }
        }

        #[test]
        fn monotone_transform_invariance(seed in 0u64..10_000) {
            let mut rng = seeded(seed);
            let y: Vec<u8> = (0..60).map(|_| rng.random_range(1..=3)).collect();
            let s = DMatrix::from_fn(60, 3, |_, _| rng.random_range(-3.0..3.0f64));
            let t = s.map(|v| v.exp() * 4.0 + v.powi(3));
            let a = weighted_auc(&s, &[1, 2, 3], &y);
            let b = weighted_auc(&t, &[1, 2, 3], &y);
            if let (Ok(a), Ok(b)) = (a, b) {
                prop_assert_eq!(a, b);
            }
        }
    }
}
