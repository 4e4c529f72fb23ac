//! Linear one-vs-rest SVM trained by averaged stochastic subgradient descent.
//!
//! Each binary problem minimizes `λ/2 ‖w‖² + mean_i max(0, 1 − y_i w·x_i)`
//! with `λ = 1/C` and the bias folded into `w` as a constant feature. Because
//! the loss is a mean, duplicating every training row leaves the optimum
//! unchanged.

use nalgebra::{DMatrix, DVector};
use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::rng::{derive_seed, seeded};
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SvmConfig {
    pub c: f64,
    pub epochs: usize,
    pub seed: u64,
}

impl Default for SvmConfig {
    fn default() -> Self {
        SvmConfig {
            c: 1.0,
            epochs: 50,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClassifierModel {
    /// Sorted class ids; row `i` of `weights` belongs to `classes[i]`.
    pub classes: Vec<u8>,
    pub weights: DMatrix<f64>,
    pub bias: DVector<f64>,
    pub c: f64,
    pub epochs: usize,
    pub seed: u64,
}

impl ClassifierModel {
    /// Highest score wins; the lowest class id wins exact ties.
    pub fn predict(&self, x: &DMatrix<f64>) -> Result<Vec<u8>> {
        let s = decision_scores(self, x)?;
        Ok(s.row_iter()
            .map(|row| {
                let mut best = 0;
                for j in 1..row.len() {
                    if row[j] > row[best] {
                        best = j;
                    }
                }
                self.classes[best]
            })
            .collect())
    }
}

/// Averaged Pegasos on `x` (rows) with labels `y ∈ {−1, +1}`. Returns
/// weights with the bias as the last entry.
fn pegasos(x: &DMatrix<f64>, y: &[f64], lambda: f64, epochs: usize, seed: u64) -> DVector<f64> {
    let (n, d) = x.shape();
    let mut w = vec![0.0; d + 1];
    let mut avg = vec![0.0; d + 1];
    let mut averaged = 0.0;
    let total = (n * epochs) as f64;
    let radius = 1.0 / lambda.sqrt();
    let rows: Vec<Vec<f64>> = (0..n).map(|i| x.row(i).iter().copied().chain([1.0]).collect()).collect();
    let mut order: Vec<usize> = (0..n).collect();
    let mut rng = seeded(seed);
    let mut t = 0.0;
    for _ in 0..epochs {
        order.shuffle(&mut rng);
        for &i in &order {
            t += 1.0;
            let eta = 1.0 / (lambda * t);
            let xi = &rows[i];
            let margin = y[i] * xi.iter().zip(&w).map(|(a, b)| a * b).sum::<f64>();
            let shrink = 1.0 - eta * lambda;
            for wj in w.iter_mut() {
                *wj *= shrink;
            }
            if margin < 1.0 {
                for (wj, xj) in w.iter_mut().zip(xi) {
                    *wj += eta * y[i] * xj;
                }
            }
            let norm = w.iter().map(|v| v * v).sum::<f64>().sqrt();
            if norm > radius {
                let s = radius / norm;
                w.iter_mut().for_each(|v| *v *= s);
            }
            if t > total / 2.0 {
                averaged += 1.0;
                for (a, v) in avg.iter_mut().zip(&w) {
                    *a += (v - *a) / averaged;
                }
            }
        }
    }
    DVector::from_vec(avg)
}

pub fn svm_fit(x: &DMatrix<f64>, y: &[u8], cfg: &SvmConfig) -> Result<ClassifierModel> {
    if x.nrows() != y.len() {
        return Err(Error::Misaligned(format!("{} rows vs {} labels", x.nrows(), y.len())));
    }
    if x.iter().any(|v| !v.is_finite()) {
        return Err(Error::invalid("features contain NaN or infinite values"));
    }
    if !(cfg.c > 0.0) || cfg.epochs == 0 {
        return Err(Error::invalid("C and epochs must be positive"));
    }
    let mut classes = y.to_vec();
    classes.sort_unstable();
    classes.dedup();
    if classes.len() < 2 {
        return Err(Error::invalid("training labels contain a single class"));
    }
    let d = x.ncols();
    let mut weights = DMatrix::zeros(classes.len(), d);
    let mut bias = DVector::zeros(classes.len());
    for (ci, &c) in classes.iter().enumerate() {
        let yy: Vec<f64> = y.iter().map(|&l| if l == c { 1.0 } else { -1.0 }).collect();
        let w = pegasos(x, &yy, 1.0 / cfg.c, cfg.epochs, derive_seed(cfg.seed, &format!("class-{c}")));
        weights.row_mut(ci).copy_from(&w.rows(0, d).transpose());
        bias[ci] = w[d];
    }
    Ok(ClassifierModel {
        classes,
        weights,
        bias,
        c: cfg.c,
        epochs: cfg.epochs,
        seed: cfg.seed,
    })
}

/// Raw margins, one column per class of the model.
pub fn decision_scores(model: &ClassifierModel, x: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    if x.ncols() != model.weights.ncols() {
        return Err(Error::DimensionMismatch(format!(
            "model has {} features, input has {}",
            model.weights.ncols(),
            x.ncols()
        )));
    }
    let mut s = x * model.weights.transpose();
    for mut row in s.row_iter_mut() {
        row += model.bias.transpose();
    }
    Ok(s)
}
