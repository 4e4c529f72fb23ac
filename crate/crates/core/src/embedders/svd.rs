//! Truncated SVD of a sparse matrix by Golub–Kahan–Lanczos bidiagonalization
//! with full reorthogonalization.
//!
//! After `k` steps, `A V_k = U_k B_k` with `B_k` upper bidiagonal. The Ritz
//! triplets come from the SVD of `B_k`, and the residual of triplet `i` is
//! `beta_k * |P[k-1, i]|`. Iteration stops once the top `r` residuals are
//! below `tol * sigma_max`, or when the Krylov space spans `min(m, n)`
//! directions, at which point the factorization is exact.

use log::warn;
use nalgebra::{DMatrix, DVector};
use rand::Rng;

use super::{EmbeddingMatrix, Provenance};
use crate::corpus::UserId;
use crate::linalg::{sorted_svd, CsrMatrix};
use crate::rng::{seeded, SeededRng};
use crate::{Error, Result};

#[derive(Debug, Clone)]
pub struct SvdFactor {
    /// `m × r`, orthonormal columns.
    pub u: DMatrix<f64>,
    /// Descending, nonnegative.
    pub singular_values: DVector<f64>,
    /// `n × r`, orthonormal columns.
    pub v: DMatrix<f64>,
    pub rank: usize,
    pub lanczos_steps: usize,
    pub converged: bool,
}

#[derive(Debug, Clone, Copy)]
pub struct LanczosOptions {
    /// Residual tolerance relative to the largest singular value.
    pub tol: f64,
    /// Defaults to `min(min(m, n), 3r + 50)`.
    pub max_steps: Option<usize>,
    pub seed: u64,
}

impl Default for LanczosOptions {
    fn default() -> Self {
        LanczosOptions {
            tol: 1e-12,
            max_steps: None,
            seed: 0x5eed,
        }
    }
}

pub fn svd_fit(a: &CsrMatrix, r: usize) -> Result<SvdFactor> {
    svd_fit_with(a, r, &LanczosOptions::default())
}

pub fn svd_fit_with(a: &CsrMatrix, r: usize, opts: &LanczosOptions) -> Result<SvdFactor> {
    let (m, n) = (a.nrows(), a.ncols());
    let p = m.min(n);
    if r == 0 || r > p {
        return Err(Error::invalid(format!("rank {r} must be in 1..={p}")));
    }
    if a.values().iter().all(|&v| v == 0.0) {
        return Err(Error::invalid("cannot factor an all-zero matrix"));
    }
    let max_steps = opts.max_steps.unwrap_or(3 * r + 50).clamp(r, p);
    let frob = a.values().iter().map(|v| v * v).sum::<f64>().sqrt();
    let breakdown = frob * 1e-13;
    let mut rng = seeded(opts.seed);

    let mut us: Vec<DVector<f64>> = Vec::with_capacity(max_steps);
    let mut vs: Vec<DVector<f64>> = Vec::with_capacity(max_steps + 1);
    let mut alphas: Vec<f64> = Vec::with_capacity(max_steps);
    let mut betas: Vec<f64> = Vec::with_capacity(max_steps);

    vs.push(random_orthogonal(n, &[], &mut rng));
    let mut converged = false;
    let mut result = None;
    for j in 0..max_steps {
        let mut u = a.mul_vec(&vs[j]);
        if j > 0 {
            u.axpy(-betas[j - 1], &us[j - 1], 1.0);
        }
        reorthogonalize(&mut u, &us);
        let mut alpha = u.norm();
        if alpha <= breakdown {
            alpha = 0.0;
            u = random_orthogonal(m, &us, &mut rng);
        } else {
            u /= alpha;
        }
        us.push(u);
        alphas.push(alpha);

        let mut v = a.tr_mul_vec(&us[j]);
        v.axpy(-alpha, &vs[j], 1.0);
        reorthogonalize(&mut v, &vs);
        let beta = v.norm();
        let k = j + 1;
        let exhausted = k == p;
        let broke_down = beta <= breakdown;

        if k >= r {
            let b = bidiagonal(&alphas, &betas);
            let svd = sorted_svd(&b)?;
            let smax = svd.s[0].max(f64::MIN_POSITIVE);
            let ok = !broke_down
                && (0..r).all(|i| beta * svd.u[(k - 1, i)].abs() <= opts.tol * smax);
            if ok || exhausted || k == max_steps {
                converged = ok || exhausted;
                result = Some(svd);
                break;
            }
        }
        if broke_down {
            betas.push(0.0);
            vs.push(random_orthogonal(n, &vs, &mut rng));
        } else {
            betas.push(beta);
            vs.push(v / beta);
        }
    }
    let svd = result.expect("loop always produces a factorization by max_steps");
    let k = alphas.len();
    if !converged {
        warn!("Lanczos SVD stopped after {k} steps without meeting tolerance {:e}", opts.tol);
    }
    let uk = DMatrix::from_columns(&us[..k]);
    let vk = DMatrix::from_columns(&vs[..k]);
    let mut u = uk * svd.u.columns(0, r);
    let mut v = vk * svd.v.columns(0, r);
    for i in 0..r {
        let col = v.column(i);
        let pivot = col.iter().copied().fold(0.0f64, |b, x| if x.abs() > b.abs() { x } else { b });
        if pivot < 0.0 {
            v.column_mut(i).neg_mut();
            u.column_mut(i).neg_mut();
        }
    }
    Ok(SvdFactor {
        u,
        singular_values: svd.s.rows(0, r).into_owned().map(|s| s.max(0.0)),
        v,
        rank: r,
        lanczos_steps: k,
        converged,
    })
}

fn bidiagonal(alphas: &[f64], betas: &[f64]) -> DMatrix<f64> {
    let k = alphas.len();
    let mut b = DMatrix::zeros(k, k);
    for i in 0..k {
        b[(i, i)] = alphas[i];
        if i + 1 < k {
            b[(i, i + 1)] = betas[i];
        }
    }
    b
}

/// Two passes of classical Gram–Schmidt against `basis`.
fn reorthogonalize(x: &mut DVector<f64>, basis: &[DVector<f64>]) {
    for _ in 0..2 {
        for q in basis {
            let c = q.dot(x);
            x.axpy(-c, q, 1.0);
        }
    }
}

fn random_orthogonal(dim: usize, basis: &[DVector<f64>], rng: &mut SeededRng) -> DVector<f64> {
    if basis.len() >= dim {
        return DVector::zeros(dim);
    }
    loop {
        let mut x = DVector::from_fn(dim, |_, _| rng.random::<f64>() - 0.5);
        reorthogonalize(&mut x, basis);
        let nrm = x.norm();
        if nrm > 1e-8 {
            return x / nrm;
        }
    }
}

/// `U · diag(W_r)`, one row per user.
pub fn svd_embed(f: &SvdFactor, users: Vec<UserId>) -> Result<EmbeddingMatrix> {
    let mut data = f.u.clone();
    for (j, mut col) in data.column_iter_mut().enumerate() {
        col *= f.singular_values[j];
    }
    let prov = Provenance::new("svd", f.rank, None)
        .with("rank", f.rank)
        .with("lanczos_steps", f.lanczos_steps)
        .with("converged", f.converged);
    EmbeddingMatrix::new(users, data, prov)
}

impl SvdFactor {
    pub fn reconstruct(&self) -> DMatrix<f64> {
        let mut us = self.u.clone();
        for (j, mut col) in us.column_iter_mut().enumerate() {
            col *= self.singular_values[j];
        }
        us * self.v.transpose()
    }
}
