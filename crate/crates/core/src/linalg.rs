//! Dense helpers on top of nalgebra plus a small CSR matrix.

use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::{Error, Result};

/// Compressed sparse row matrix with `f64` values.
#[derive(Debug, Clone, PartialEq)]
pub struct CsrMatrix {
    rows: usize,
    cols: usize,
    indptr: Vec<usize>,
    indices: Vec<usize>,
    values: Vec<f64>,
}

impl CsrMatrix {
    /// Builds from per-row `(col, value)` lists. Duplicate columns in a row are summed,
    /// zero entries are dropped.
    pub fn from_rows(cols: usize, rows: Vec<Vec<(usize, f64)>>) -> Self {
        let mut indptr = Vec::with_capacity(rows.len() + 1);
        let mut indices = Vec::new();
        let mut values = Vec::new();
        indptr.push(0);
        let n_rows = rows.len();
        for mut row in rows {
            row.sort_by_key(|&(c, _)| c);
            let mut last: Option<usize> = None;
            for (c, v) in row {
                assert!(c < cols, "column {c} out of range {cols}");
                if last == Some(c) {
                    *values.last_mut().unwrap() += v;
                } else {
                    indices.push(c);
                    values.push(v);
                    last = Some(c);
                }
            }
            indptr.push(indices.len());
        }
        let mut m = CsrMatrix {
            rows: n_rows,
            cols,
            indptr,
            indices,
            values,
        };
        m.prune_zeros();
        m
    }

    pub fn from_dense(d: &DMatrix<f64>) -> Self {
        let rows = (0..d.nrows())
            .map(|i| {
                (0..d.ncols())
                    .filter(|&j| d[(i, j)] != 0.0)
                    .map(|j| (j, d[(i, j)]))
                    .collect()
            })
            .collect();
        Self::from_rows(d.ncols(), rows)
    }

    fn prune_zeros(&mut self) {
        if self.values.iter().all(|&v| v != 0.0) {
            return;
        }
        let mut indptr = vec![0];
        let mut indices = Vec::with_capacity(self.indices.len());
        let mut values = Vec::with_capacity(self.values.len());
        for r in 0..self.rows {
            for k in self.indptr[r]..self.indptr[r + 1] {
                if self.values[k] != 0.0 {
                    indices.push(self.indices[k]);
                    values.push(self.values[k]);
                }
            }
            indptr.push(indices.len());
        }
        self.indptr = indptr;
        self.indices = indices;
        self.values = values;
    }

    pub fn nrows(&self) -> usize {
        self.rows
    }

    pub fn ncols(&self) -> usize {
        self.cols
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    pub fn row(&self, r: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let span = self.indptr[r]..self.indptr[r + 1];
        self.indices[span.clone()]
            .iter()
            .copied()
            .zip(self.values[span].iter().copied())
    }

    pub fn get(&self, r: usize, c: usize) -> f64 {
        let span = self.indptr[r]..self.indptr[r + 1];
        match self.indices[span.clone()].binary_search(&c) {
            Ok(k) => self.values[span.start + k],
            Err(_) => 0.0,
        }
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn sum(&self) -> f64 {
        self.values.iter().sum()
    }

    pub fn row_sum(&self, r: usize) -> f64 {
        self.row(r).map(|(_, v)| v).sum()
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        let mut d = DMatrix::zeros(self.rows, self.cols);
        for r in 0..self.rows {
            for (c, v) in self.row(r) {
                d[(r, c)] = v;
            }
        }
        d
    }

    /// `y = A x`
    pub fn mul_vec(&self, x: &DVector<f64>) -> DVector<f64> {
        assert_eq!(x.len(), self.cols);
        DVector::from_iterator(
            self.rows,
            (0..self.rows).map(|r| self.row(r).map(|(c, v)| v * x[c]).sum::<f64>()),
        )
    }

    /// `y = Aᵀ x`
    pub fn tr_mul_vec(&self, x: &DVector<f64>) -> DVector<f64> {
        assert_eq!(x.len(), self.rows);
        let mut y = DVector::zeros(self.cols);
        for r in 0..self.rows {
            let xr = x[r];
            if xr == 0.0 {
                continue;
            }
            for (c, v) in self.row(r) {
                y[c] += v * xr;
            }
        }
        y
    }

    /// Keeps the given rows, in the given order.
    pub fn select_rows(&self, rows: &[usize]) -> CsrMatrix {
        CsrMatrix::from_rows(self.cols, rows.iter().map(|&r| self.row(r).collect()).collect())
    }

    /// Keeps the given columns, renumbered to their position in `cols`.
    pub fn select_cols(&self, cols: &[usize]) -> CsrMatrix {
        let mut remap = vec![usize::MAX; self.cols];
        for (new, &old) in cols.iter().enumerate() {
            remap[old] = new;
        }
        let rows = (0..self.rows)
            .map(|r| {
                self.row(r)
                    .filter(|&(c, _)| remap[c] != usize::MAX)
                    .map(|(c, v)| (remap[c], v))
                    .collect()
            })
            .collect();
        CsrMatrix::from_rows(cols.len(), rows)
    }
}

pub fn column_means(x: &DMatrix<f64>) -> DVector<f64> {
    let n = x.nrows().max(1) as f64;
    DVector::from_iterator(x.ncols(), x.column_iter().map(|c| c.sum() / n))
}

pub fn center_columns(x: &DMatrix<f64>, means: &DVector<f64>) -> DMatrix<f64> {
    let mut out = x.clone();
    for (j, mut col) in out.column_iter_mut().enumerate() {
        col.add_scalar_mut(-means[j]);
    }
    out
}

/// Per-column centering and unit-variance scaling; zero-variance columns are
/// centered only.
#[derive(Debug, Clone, PartialEq)]
pub struct Standardizer {
    pub mean: DVector<f64>,
    pub scale: DVector<f64>,
}

impl Standardizer {
    pub fn fit(x: &DMatrix<f64>) -> Self {
        let mean = column_means(x);
        let n = x.nrows().max(2) as f64;
        let scale = DVector::from_fn(x.ncols(), |j, _| {
            let sd = (x.column(j).iter().map(|v| (v - mean[j]).powi(2)).sum::<f64>() / (n - 1.0)).sqrt();
            if sd > 0.0 { 1.0 / sd } else { 1.0 }
        });
        Standardizer { mean, scale }
    }

    pub fn apply(&self, x: &DMatrix<f64>) -> DMatrix<f64> {
        let mut out = center_columns(x, &self.mean);
        for (j, mut col) in out.column_iter_mut().enumerate() {
            col *= self.scale[j];
        }
        out
    }
}

/// `S^{-1/2}` for a symmetric positive definite matrix.
pub fn inv_sqrt_spd(s: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let sym = symmetrize(s);
    let eig = SymmetricEigen::new(sym);
    let min = eig.eigenvalues.min();
    if !(min > 0.0) {
        return Err(Error::Numerical(format!(
            "matrix is not positive definite (smallest eigenvalue {min:e})"
        )));
    }
    let d = DMatrix::from_diagonal(&eig.eigenvalues.map(|l| 1.0 / l.sqrt()));
    Ok(&eig.eigenvectors * d * eig.eigenvectors.transpose())
}

pub fn symmetrize(s: &DMatrix<f64>) -> DMatrix<f64> {
    (s + s.transpose()) * 0.5
}

/// Flips each column so its largest-magnitude component is positive.
pub fn fix_column_signs(m: &mut DMatrix<f64>) {
    for mut col in m.column_iter_mut() {
        let mut best = 0.0f64;
        for &v in col.iter() {
            if v.abs() > best.abs() {
                best = v;
            }
        }
        if best < 0.0 {
            col.neg_mut();
        }
    }
}

/// Orthonormal basis for the column span (thin QR).
#[cfg(test)]
pub fn orthonormal_basis(a: &DMatrix<f64>) -> DMatrix<f64> {
    a.clone().qr().q()
}

/// Largest principal angle (radians) between two column spans of equal rank.
/// Computed from sines, which stay accurate for tiny angles.
#[cfg(test)]
pub fn max_principal_angle(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    let qa = orthonormal_basis(a);
    let qb = orthonormal_basis(b);
    let resid = &qb - &qa * (qa.transpose() * &qb);
    let s = resid.svd(false, false).singular_values.max();
    s.clamp(0.0, 1.0).asin()
}

/// Thin SVD with singular values sorted in descending order.
pub struct SortedSvd {
    pub u: DMatrix<f64>,
    pub s: DVector<f64>,
    pub v: DMatrix<f64>,
}

pub fn sorted_svd(a: &DMatrix<f64>) -> Result<SortedSvd> {
    let svd = a.clone().try_svd(true, true, f64::EPSILON, 0).ok_or_else(|| {
        Error::Numerical("SVD did not converge".into())
    })?;
    let u = svd.u.expect("requested u");
    let vt = svd.v_t.expect("requested v_t");
    let mut order: Vec<usize> = (0..svd.singular_values.len()).collect();
    order.sort_by(|&i, &j| svd.singular_values[j].total_cmp(&svd.singular_values[i]));
    let s = DVector::from_iterator(order.len(), order.iter().map(|&i| svd.singular_values[i]));
    let u = DMatrix::from_columns(&order.iter().map(|&i| u.column(i).into_owned()).collect::<Vec<_>>());
    let v = DMatrix::from_columns(
        &order
            .iter()
            .map(|&i| vt.row(i).transpose().into_owned())
            .collect::<Vec<_>>(),
    );
    Ok(SortedSvd { u, s, v })
}

/// Symmetric eigendecomposition with eigenvalues in descending order.
#[cfg(test)]
pub fn sorted_symmetric_eigen(s: &DMatrix<f64>) -> (DVector<f64>, DMatrix<f64>) {
    let eig = SymmetricEigen::new(symmetrize(s));
    let mut order: Vec<usize> = (0..eig.eigenvalues.len()).collect();
    order.sort_by(|&i, &j| eig.eigenvalues[j].total_cmp(&eig.eigenvalues[i]));
    let vals = DVector::from_iterator(order.len(), order.iter().map(|&i| eig.eigenvalues[i]));
    let vecs = DMatrix::from_columns(
        &order
            .iter()
            .map(|&i| eig.eigenvectors.column(i).into_owned())
            .collect::<Vec<_>>(),
    );
    (vals, vecs)
}

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}
