//! Weighted generalized CCA.
//!
//! The shared representation `G` holds the top `k` eigenvectors of
//! `M = Σ_i w_i X_i (X_iᵀX_i + εI)^{-1} X_iᵀ`. With the thin SVD
//! `X_i = A_i S_i B_iᵀ` each term is `A_i diag(s²/(s²+ε)) A_iᵀ`, so `M = CCᵀ`
//! for `C = [√w_i A_i diag(s/√(s²+ε))]` and `G` comes from an SVD of `C`
//! without forming any `n × n` matrix.

use nalgebra::{DMatrix, DVector};

use super::check_aligned;
use crate::corpus::UserId;
use crate::embedders::{EmbeddingMatrix, Provenance};
use crate::linalg::{center_columns, column_means, fix_column_signs, sorted_svd};
use crate::{Error, Result};

/// Singular values below this fraction of the largest are treated as zero.
const RANK_TOL: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq)]
pub struct WgccaModel {
    pub weights: Vec<f64>,
    /// `U_i`, `d_i × k`.
    pub projections: Vec<DMatrix<f64>>,
    pub means: Vec<DVector<f64>>,
    pub k: usize,
    pub epsilon: f64,
    /// Top `k` eigenvalues of `M`.
    pub eigenvalues: DVector<f64>,
    /// Shared representation of the training users, `n × k`.
    pub g: DMatrix<f64>,
    users: Vec<UserId>,
    training: Vec<DMatrix<f64>>,
}

/// `weights = None` means equal weights.
pub fn wgcca_fit(views: &[&EmbeddingMatrix], weights: Option<&[f64]>, k: usize, epsilon: f64) -> Result<WgccaModel> {
    if views.len() < 2 {
        return Err(Error::invalid("wGCCA needs at least two views"));
    }
    check_aligned(views)?;
    let weights = match weights {
        Some(w) if w.len() != views.len() => {
            return Err(Error::invalid(format!("{} weights for {} views", w.len(), views.len())));
        }
        Some(w) if w.iter().any(|&x| !(x > 0.0 && x.is_finite())) => {
            return Err(Error::invalid("view weights must be positive"));
        }
        Some(w) => w.to_vec(),
        None => vec![1.0; views.len()],
    };
    let n = views[0].nrows();
    let min_dim = views.iter().map(|v| v.dim()).min().unwrap_or(0);
    if k == 0 || k > min_dim {
        return Err(Error::invalid(format!("k = {k} must be in 1..={min_dim}")));
    }
    if k > n {
        return Err(Error::invalid(format!("k = {k} exceeds the {n} users")));
    }
    if epsilon < 0.0 {
        return Err(Error::invalid("epsilon must be non-negative"));
    }

    let mut means = Vec::new();
    let mut factors = Vec::new();
    let mut blocks = Vec::new();
    for (v, &w) in views.iter().zip(&weights) {
        let mean = column_means(v.data());
        let x = center_columns(v.data(), &mean);
        let svd = sorted_svd(&x)?;
        let smax = svd.s.iter().copied().fold(0.0, f64::max);
        let r = svd.s.iter().filter(|&&s| s > RANK_TOL * smax && s > 0.0).count();
        let a = svd.u.columns(0, r).into_owned();
        let s = svd.s.rows(0, r).into_owned();
        let b = svd.v.columns(0, r).into_owned();
        let mut block = a.clone();
        for j in 0..r {
            let d = s[j] / (s[j] * s[j] + epsilon).sqrt();
            block.column_mut(j).scale_mut(w.sqrt() * d);
        }
        blocks.push(block);
        factors.push((a, s, b));
        means.push(mean);
    }
    let total: usize = blocks.iter().map(|b| b.ncols()).sum();
    if total < k {
        return Err(Error::invalid(format!("views have combined rank {total} < k = {k}")));
    }
    let mut c = DMatrix::zeros(n, total);
    let mut off = 0;
    for b in &blocks {
        c.columns_mut(off, b.ncols()).copy_from(b);
        off += b.ncols();
    }
    let svd = sorted_svd(&c)?;
    let mut g = svd.u.columns(0, k).into_owned();
    fix_column_signs(&mut g);
    let eigenvalues = svd.s.rows(0, k).map(|s| s * s);

    // U_i = B_i diag(s/(s²+ε)) A_iᵀ G
    let projections = factors
        .iter()
        .map(|(a, s, b)| {
            let mut at_g = a.transpose() * &g;
            for j in 0..s.len() {
                at_g.row_mut(j).scale_mut(s[j] / (s[j] * s[j] + epsilon));
            }
            b * at_g
        })
        .collect();
    Ok(WgccaModel {
        weights,
        projections,
        means,
        k,
        epsilon,
        eigenvalues,
        g,
        users: views[0].users().to_vec(),
        training: views.iter().map(|v| v.data().clone()).collect(),
    })
}

/// The training views map to `G`; any other aligned views map to the
/// weighted mean of `X_i U_i`.
pub fn wgcca_transform(model: &WgccaModel, views: &[&EmbeddingMatrix]) -> Result<EmbeddingMatrix> {
    if views.len() != model.projections.len() {
        return Err(Error::invalid(format!(
            "model has {} views, got {}",
            model.projections.len(),
            views.len()
        )));
    }
    check_aligned(views)?;
    for (v, p) in views.iter().zip(&model.projections) {
        if v.dim() != p.nrows() {
            return Err(Error::DimensionMismatch(format!("view dim {} vs fitted {}", v.dim(), p.nrows())));
        }
    }
    let is_training = views[0].users() == model.users.as_slice()
        && views.iter().zip(&model.training).all(|(v, t)| v.data() == t);
    let data = if is_training {
        model.g.clone()
    } else {
        let wsum: f64 = model.weights.iter().sum();
        let mut acc = DMatrix::zeros(views[0].nrows(), model.k);
        for (((v, p), m), &w) in views.iter().zip(&model.projections).zip(&model.means).zip(&model.weights) {
            acc += center_columns(v.data(), m) * p * (w / wsum);
        }
        acc
    };
    let prov = Provenance::new("mue.wgcca", model.k, None)
        .with("k", model.k)
        .with("epsilon", model.epsilon)
        .with("weights", &model.weights)
        .with("input_dims", model.projections.iter().map(|p| p.nrows()).collect::<Vec<_>>())
        .with("inputs", views.iter().map(|v| v.provenance().learner.clone()).collect::<Vec<_>>());
    EmbeddingMatrix::new(views[0].users().to_vec(), data, prov)
}
