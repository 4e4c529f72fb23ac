use nalgebra::{DMatrix, DVector};

use super::check_aligned;
use crate::embedders::EmbeddingMatrix;
use crate::linalg::{center_columns, column_means, inv_sqrt_spd, sorted_svd};
use crate::{Error, Result};

/// Correlations above one by more than this are treated as a numerical failure.
const CLAMP_TOLERANCE: f64 = 1e-9;

/// Linear CCA. Column `j` of `w1` and `w2` is the `j`-th canonical pair.
#[derive(Debug, Clone, PartialEq)]
pub struct CcaModel {
    pub w1: DMatrix<f64>,
    pub w2: DMatrix<f64>,
    pub correlations: DVector<f64>,
    pub epsilon: f64,
    pub mean1: DVector<f64>,
    pub mean2: DVector<f64>,
}

impl CcaModel {
    pub fn k(&self) -> usize {
        self.correlations.len()
    }

    /// Canonical variates of both views.
    pub fn transform(&self, x1: &DMatrix<f64>, x2: &DMatrix<f64>) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
        if x1.ncols() != self.w1.nrows() || x2.ncols() != self.w2.nrows() {
            return Err(Error::DimensionMismatch("inputs do not match the fitted view dimensions".into()));
        }
        Ok((center_columns(x1, &self.mean1) * &self.w1, center_columns(x2, &self.mean2) * &self.w2))
    }
}

pub fn cca_fit(x1: &EmbeddingMatrix, x2: &EmbeddingMatrix, k: usize, epsilon: f64) -> Result<CcaModel> {
    check_aligned(&[x1, x2])?;
    cca_fit_matrices(x1.data(), x2.data(), k, epsilon)
}

/// Whitens each view with `(Σ_ii + εI)^{-1/2}` and takes the top `k` singular
/// pairs of the whitened cross-covariance.
pub fn cca_fit_matrices(x1: &DMatrix<f64>, x2: &DMatrix<f64>, k: usize, epsilon: f64) -> Result<CcaModel> {
    let n = x1.nrows();
    if x2.nrows() != n {
        return Err(Error::Misaligned(format!("{n} rows vs {} rows", x2.nrows())));
    }
    if k == 0 || k > x1.ncols().min(x2.ncols()) {
        return Err(Error::invalid(format!(
            "k = {k} must be in 1..={}",
            x1.ncols().min(x2.ncols())
        )));
    }
    if n <= k {
        return Err(Error::invalid(format!("need more than k = {k} rows, got {n}")));
    }
    if epsilon < 0.0 {
        return Err(Error::invalid("epsilon must be non-negative"));
    }
    let mean1 = column_means(x1);
    let mean2 = column_means(x2);
    let c1 = center_columns(x1, &mean1);
    let c2 = center_columns(x2, &mean2);
    let scale = 1.0 / (n - 1) as f64;
    let s11 = c1.transpose() * &c1 * scale + DMatrix::identity(x1.ncols(), x1.ncols()) * epsilon;
    let s22 = c2.transpose() * &c2 * scale + DMatrix::identity(x2.ncols(), x2.ncols()) * epsilon;
    let s12 = c1.transpose() * &c2 * scale;
    let r1 = inv_sqrt_spd(&s11)?;
    let r2 = inv_sqrt_spd(&s22)?;
    let svd = sorted_svd(&(&r1 * s12 * &r2))?;
    let mut u = svd.u.columns(0, k).into_owned();
    let mut v = svd.v.columns(0, k).into_owned();
    for j in 0..k {
        let col = u.column(j);
        let pivot = col.iter().copied().fold(0.0f64, |b, x| if x.abs() > b.abs() { x } else { b });
        if pivot < 0.0 {
            u.column_mut(j).neg_mut();
            v.column_mut(j).neg_mut();
        }
    }
    let mut correlations = svd.s.rows(0, k).into_owned();
    for c in correlations.iter_mut() {
        if *c > 1.0 + CLAMP_TOLERANCE {
            return Err(Error::Numerical(format!("canonical correlation {c} exceeds 1")));
        }
        *c = c.min(1.0);
    }
    Ok(CcaModel {
        w1: r1 * u,
        w2: r2 * v,
        correlations,
        epsilon,
        mean1,
        mean2,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::UserId;
    use crate::embedders::Provenance;
    use crate::rng::seeded;
    use rand::Rng;
    use rand_distr::StandardNormal;

    fn normal(n: usize, d: usize, seed: u64) -> DMatrix<f64> {
        let mut rng = seeded(seed);
        DMatrix::from_fn(n, d, |_, _| rng.sample(StandardNormal))
    }

    fn emb(x: DMatrix<f64>) -> EmbeddingMatrix {
        let users = (0..x.nrows()).map(|i| UserId::new(format!("u{i}")).unwrap()).collect();
        EmbeddingMatrix::new(users, x, Provenance::new("test", 0, None)).unwrap()
    }

    /// Correlations from Cholesky whitening, independent of the symmetric square root.
    fn oracle(x1: &DMatrix<f64>, x2: &DMatrix<f64>, eps: f64) -> Vec<f64> {
        let n = x1.nrows() as f64;
        let c1 = center_columns(x1, &column_means(x1));
        let c2 = center_columns(x2, &column_means(x2));
        let s11 = c1.transpose() * &c1 / (n - 1.0) + DMatrix::identity(x1.ncols(), x1.ncols()) * eps;
        let s22 = c2.transpose() * &c2 / (n - 1.0) + DMatrix::identity(x2.ncols(), x2.ncols()) * eps;
        let s12 = c1.transpose() * &c2 / (n - 1.0);
        let l1 = s11.cholesky().unwrap().l();
        let l2 = s22.cholesky().unwrap().l();
        let a = l1.solve_lower_triangular(&s12).unwrap();
        let t = l2.solve_lower_triangular(&a.transpose()).unwrap().transpose();
        let mut s: Vec<f64> = t.svd(false, false).singular_values.iter().copied().collect();
        s.sort_by(|a, b| b.total_cmp(a));
        s
    }

    #[test]
    fn matches_cholesky_oracle() {
        let x1 = normal(200, 6, 1);
        let mix = normal(6, 4, 2);
        let x2 = &x1 * mix * 0.3 + normal(200, 4, 3);
        let m = cca_fit(&emb(x1.clone()), &emb(x2.clone()), 4, 1e-8).unwrap();
        let o = oracle(&x1, &x2, 1e-8);
        for j in 0..4 {
            assert!((m.correlations[j] - o[j]).abs() < 1e-10);
        }
    }

    #[test]
    fn canonical_variates_have_the_reported_correlation() {
        let x1 = normal(300, 5, 4);
        let x2 = x1.columns(0, 3) * 0.5 + normal(300, 3, 5);
        let m = cca_fit_matrices(&x1, &x2, 3, 0.0).unwrap();
        let (a, b) = m.transform(&x1, &x2).unwrap();
        for j in 0..3 {
            let (u, v) = (a.column(j), b.column(j));
            let r = u.dot(&v) / (u.norm() * v.norm());
            assert!((r - m.correlations[j]).abs() < 1e-9);
            assert!((u.norm_squared() / 299.0 - 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn identical_views_are_perfectly_correlated() {
        let x = normal(100, 5, 6);
        let m = cca_fit(&emb(x.clone()), &emb(x), 5, 1e-8).unwrap();
        assert!(m.correlations.iter().all(|&c| (c - 1.0).abs() < 1e-6));
    }

    #[test]
    fn invertible_map_keeps_correlations_at_one() {
        let x = normal(100, 4, 7);
        let a = DMatrix::from_row_slice(4, 4, &[2.0, 1.0, 0.0, 0.0, 0.0, 1.0, 3.0, 0.0, 1.0, 0.0, 1.0, 0.5, 0.0, 0.0, 0.0, 1.0]);
        let m = cca_fit_matrices(&x, &(&x * a), 4, 1e-8).unwrap();
        assert!(m.correlations.iter().all(|&c| (c - 1.0).abs() < 1e-6));
    }

    #[test]
    fn invariant_under_invertible_map_of_one_view() {
        let x1 = normal(150, 4, 8);
        let x2 = x1.columns(0, 3) * 0.7 + normal(150, 3, 9);
        let a = DMatrix::from_row_slice(3, 3, &[1.0, 2.0, 0.0, 0.0, 1.0, -1.0, 0.5, 0.0, 2.0]);
        let m1 = cca_fit_matrices(&x1, &x2, 3, 0.0).unwrap();
        let m2 = cca_fit_matrices(&x1, &(&x2 * a), 3, 0.0).unwrap();
        assert!((m1.correlations - m2.correlations).amax() < 1e-6);
    }

    #[test]
    fn independent_views_have_small_correlation() {
        let m = cca_fit_matrices(&normal(10000, 5, 10), &normal(10000, 5, 11), 5, 1e-8).unwrap();
        assert!(m.correlations[0] < 0.1, "{}", m.correlations[0]);
        for j in 1..5 {
            assert!(m.correlations[j] <= m.correlations[j - 1]);
        }
    }

    #[test]
    fn errors() {
        let x = normal(10, 3, 1);
        assert!(cca_fit_matrices(&x, &x, 4, 0.0).is_err());
        assert!(cca_fit_matrices(&x, &x, 0, 0.0).is_err());
        assert!(cca_fit_matrices(&x.rows(0, 3).into_owned(), &x.rows(0, 3).into_owned(), 3, 1e-8).is_err());
        assert!(cca_fit_matrices(&x, &normal(9, 3, 2), 2, 0.0).is_err());
        let users = emb(x.clone());
        let other = emb(x).select_rows(&[1, 0, 2, 3, 4, 5, 6, 7, 8, 9]);
        assert!(matches!(cca_fit(&users, &other, 2, 0.0), Err(Error::Misaligned(_))));
    }
}
