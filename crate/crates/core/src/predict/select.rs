use crate::linalg::CsrMatrix;
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct FeatureSelection {
    /// Column indices, best first.
    pub indices: Vec<usize>,
    /// F statistic of each selected column.
    pub scores: Vec<f64>,
    pub warnings: Vec<String>,
}

/// One-way ANOVA F statistic of `values` grouped by `y`.
///
/// Constant columns score 0. Columns with no within-class spread but some
/// between-class spread score `+∞`.
pub fn anova_f(values: &[f64], y: &[u8]) -> f64 {
    let n = values.len();
    let mut classes: Vec<u8> = y.to_vec();
    classes.sort_unstable();
    classes.dedup();
    let c = classes.len();
    if c < 2 || n <= c {
        return 0.0;
    }
    let (lo, hi) = values.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &v| (a.min(v), b.max(v)));
    if lo == hi {
        return 0.0;
    }
    let mean = values.iter().sum::<f64>() / n as f64;
    let mut ssb = 0.0;
    let mut ssw = 0.0;
    for &k in &classes {
        let group: Vec<f64> = values.iter().zip(y).filter(|(_, &l)| l == k).map(|(&v, _)| v).collect();
        let m = group.iter().sum::<f64>() / group.len() as f64;
        ssb += group.len() as f64 * (m - mean).powi(2);
        ssw += group.iter().map(|v| (v - m).powi(2)).sum::<f64>();
    }
    if ssw == 0.0 {
        return if ssb > 0.0 { f64::INFINITY } else { 0.0 };
    }
    (ssb / (c - 1) as f64) / (ssw / (n - c) as f64)
}

/// Ranks the columns of `x` by ANOVA F against `y` and keeps the best
/// `top_k`, ties going to the lower index.
pub fn select_features(x: &CsrMatrix, y: &[u8], top_k: usize) -> Result<FeatureSelection> {
    if x.nrows() != y.len() {
        return Err(Error::Misaligned(format!("{} rows vs {} labels", x.nrows(), y.len())));
    }
    if top_k == 0 {
        return Err(Error::invalid("top_k must be at least 1"));
    }
    let mut warnings = Vec::new();
    let p = x.ncols();
    let k = if top_k > p {
        warnings.push(format!("top_k {top_k} exceeds {p} features; keeping all"));
        p
    } else {
        top_k
    };
    let mut columns = vec![vec![0.0; x.nrows()]; p];
    for r in 0..x.nrows() {
        for (c, v) in x.row(r) {
            columns[c][r] = v;
        }
    }
    let f: Vec<f64> = columns.iter().map(|col| anova_f(col, y)).collect();
    let mut order: Vec<usize> = (0..p).collect();
    order.sort_by(|&a, &b| f[b].total_cmp(&f[a]).then(a.cmp(&b)));
    order.truncate(k);
    Ok(FeatureSelection {
        scores: order.iter().map(|&i| f[i]).collect(),
        indices: order,
        warnings,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::seeded;
    use nalgebra::DMatrix;
    use rand::Rng;

    /// Textbook F: mean squares between over mean squares within.
    fn oracle_f(col: &[f64], y: &[u8]) -> f64 {
        let n = col.len() as f64;
        let grand = col.iter().sum::<f64>() / n;
        let mut between = 0.0;
        let mut within = 0.0;
        let mut groups = 0;
        for k in 1..=3u8 {
            let g: Vec<f64> = (0..col.len()).filter(|&i| y[i] == k).map(|i| col[i]).collect();
            if g.is_empty() {
                continue;
            }
            groups += 1;
            let m = g.iter().sum::<f64>() / g.len() as f64;
            between += g.len() as f64 * (m - grand) * (m - grand);
            within += g.iter().map(|v| (v - m) * (v - m)).sum::<f64>();
        }
        (between / (groups - 1) as f64) / (within / (n - groups as f64))
    }

    #[test]
    fn ranking_matches_the_direct_formula() {
        let mut rng = seeded(3);
        let y: Vec<u8> = (0..30).map(|i| (i % 3) as u8 + 1).collect();
        let x = DMatrix::from_fn(30, 5, |i, j| rng.random_range(0..6) as f64 + (j as f64 * 0.7) * y[i] as f64);
        let sel = select_features(&CsrMatrix::from_dense(&x), &y, 5).unwrap();
        let mut expected: Vec<(usize, f64)> = (0..5)
            .map(|j| (j, oracle_f(&x.column(j).iter().copied().collect::<Vec<_>>(), &y)))
            .collect();
        expected.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
        assert_eq!(sel.indices, expected.iter().map(|e| e.0).collect::<Vec<_>>());
        for (s, e) in sel.scores.iter().zip(&expected) {
            assert!((s - e.1).abs() <= 1e-10 * e.1.abs().max(1.0));
        }
    }

    #[test]
    fn degenerate_columns() {
        let y = [1, 1, 2, 2, 3, 3];
        let x = DMatrix::from_row_slice(
            6,
            3,
            &[
                4.0, 1.0, 0.5, //
                4.0, 1.0, 0.1, //
                4.0, 2.0, 0.4, //
                4.0, 2.0, 0.3, //
                4.0, 3.0, 0.2, //
                4.0, 3.0, 0.6,
            ],
        );
        assert_eq!(anova_f(&[4.0; 6], &y), 0.0);
        let sel = select_features(&CsrMatrix::from_dense(&x), &y, 3).unwrap();
        assert_eq!(sel.indices, vec![1, 2, 0]);
        assert_eq!(sel.scores[0], f64::INFINITY);
        assert_eq!(sel.scores[2], 0.0);
    }

    #[test]
    fn ties_prefer_lower_index_and_oversized_k_warns() {
        let y = [1, 2, 1, 2];
        let x = DMatrix::from_row_slice(4, 3, &[0.0, 1.0, 1.0, 1.0, 0.0, 0.0, 0.0, 1.0, 1.0, 1.0, 0.0, 0.0]);
        let sel = select_features(&CsrMatrix::from_dense(&x), &y, 10).unwrap();
        assert_eq!(sel.indices, vec![0, 1, 2]);
        assert_eq!(sel.warnings.len(), 1);
        assert!(select_features(&CsrMatrix::from_dense(&x), &y, 0).is_err());
        assert!(select_features(&CsrMatrix::from_dense(&x), &y[..3], 1).is_err());
    }
}
