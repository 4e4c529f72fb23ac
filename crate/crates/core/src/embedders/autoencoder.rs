//! Single-hidden-layer autoencoder with sigmoid units and a cross-entropy
//! reconstruction loss.

use nalgebra::{DMatrix, DVector};
use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{EmbeddingMatrix, Provenance};
use crate::corpus::UserId;
use crate::linalg::{sigmoid, CsrMatrix};
use crate::rng::seeded;
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AeConfig {
    pub hidden_dim: usize,
    pub epochs: usize,
    pub learning_rate: f64,
    /// `None` trains full batch.
    pub batch_size: Option<usize>,
    pub seed: u64,
}

impl AeConfig {
    pub fn new(hidden_dim: usize) -> Self {
        AeConfig {
            hidden_dim,
            epochs: 500,
            learning_rate: 5.0,
            batch_size: None,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AutoencoderModel {
    /// `hidden × n`
    pub w_enc: DMatrix<f64>,
    pub b_enc: DVector<f64>,
    /// `n × hidden`
    pub w_dec: DMatrix<f64>,
    pub b_dec: DVector<f64>,
}

struct Gradients {
    w_enc: DMatrix<f64>,
    b_enc: DVector<f64>,
    w_dec: DMatrix<f64>,
    b_dec: DVector<f64>,
}

fn softplus(x: f64) -> f64 {
    if x > 0.0 {
        x + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p()
    }
}

impl AutoencoderModel {
    pub fn hidden_dim(&self) -> usize {
        self.w_enc.nrows()
    }

    pub fn input_dim(&self) -> usize {
        self.w_enc.ncols()
    }

    /// Hidden activations, one row per input row.
    pub fn encode(&self, x: &DMatrix<f64>) -> DMatrix<f64> {
        let mut z = x * self.w_enc.transpose();
        for mut row in z.row_iter_mut() {
            row += self.b_enc.transpose();
        }
        z.map(sigmoid)
    }

    fn decode_logits(&self, h: &DMatrix<f64>) -> DMatrix<f64> {
        let mut z = h * self.w_dec.transpose();
        for mut row in z.row_iter_mut() {
            row += self.b_dec.transpose();
        }
        z
    }

    pub fn reconstruct(&self, x: &DMatrix<f64>) -> DMatrix<f64> {
        self.decode_logits(&self.encode(x)).map(sigmoid)
    }

    /// Mean per-element binary cross-entropy.
    pub fn loss(&self, x: &DMatrix<f64>) -> f64 {
        let z = self.decode_logits(&self.encode(x));
        z.zip_map(x, |z, x| softplus(z) - x * z).mean()
    }

    fn gradients(&self, x: &DMatrix<f64>) -> Gradients {
        let h = self.encode(x);
        let y = self.decode_logits(&h).map(sigmoid);
        let scale = 1.0 / (x.nrows() * x.ncols()) as f64;
        let dz = (y - x) * scale;
        let dh = &dz * &self.w_dec;
        let da = dh.component_mul(&h.map(|v| v * (1.0 - v)));
        Gradients {
            w_dec: dz.transpose() * &h,
            b_dec: row_sums(&dz),
            w_enc: da.transpose() * x,
            b_enc: row_sums(&da),
        }
    }

    fn apply(&mut self, g: &Gradients, lr: f64) {
        self.w_enc -= &g.w_enc * lr;
        self.b_enc -= &g.b_enc * lr;
        self.w_dec -= &g.w_dec * lr;
        self.b_dec -= &g.b_dec * lr;
    }
}

/// Column sums as a vector.
fn row_sums(m: &DMatrix<f64>) -> DVector<f64> {
    DVector::from_fn(m.ncols(), |j, _| m.column(j).sum())
}

pub fn ae_fit(a: &CsrMatrix, cfg: &AeConfig) -> Result<AutoencoderModel> {
    let n = a.ncols();
    let h = cfg.hidden_dim;
    if h == 0 || h >= n {
        return Err(Error::invalid(format!("hidden_dim {h} must be in 1..{n}")));
    }
    if a.nrows() == 0 {
        return Err(Error::EmptyCorpus("autoencoder input has no rows".into()));
    }
    if cfg.epochs == 0 || cfg.learning_rate <= 0.0 {
        return Err(Error::invalid("epochs and learning_rate must be positive"));
    }
    let x = a.to_dense();
    let mut rng = seeded(cfg.seed);
    let bound = (6.0 / (n + h) as f64).sqrt();
    let mut model = AutoencoderModel {
        w_enc: DMatrix::from_fn(h, n, |_, _| rng.random_range(-bound..bound)),
        b_enc: DVector::zeros(h),
        w_dec: DMatrix::from_fn(n, h, |_, _| rng.random_range(-bound..bound)),
        b_dec: DVector::zeros(n),
    };
    match cfg.batch_size {
        None => {
            for _ in 0..cfg.epochs {
                let g = model.gradients(&x);
                model.apply(&g, cfg.learning_rate);
            }
        }
        Some(0) => return Err(Error::invalid("batch_size must be at least 1")),
        Some(b) => {
            let mut order: Vec<usize> = (0..x.nrows()).collect();
            for _ in 0..cfg.epochs {
                order.shuffle(&mut rng);
                for chunk in order.chunks(b) {
                    let g = model.gradients(&x.select_rows(chunk));
                    model.apply(&g, cfg.learning_rate);
                }
            }
        }
    }
    let finite = model.w_enc.iter().chain(model.w_dec.iter()).chain(model.b_enc.iter()).chain(model.b_dec.iter());
    if finite.into_iter().any(|v| !v.is_finite()) {
        return Err(Error::Numerical("autoencoder weights diverged".into()));
    }
    Ok(model)
}

pub fn ae_embed(model: &AutoencoderModel, a: &CsrMatrix, users: Vec<UserId>) -> Result<EmbeddingMatrix> {
    if a.ncols() != model.input_dim() {
        return Err(Error::DimensionMismatch(format!(
            "autoencoder expects {} columns, got {}",
            model.input_dim(),
            a.ncols()
        )));
    }
    let prov = Provenance::new("autoencoder", model.hidden_dim(), None);
    EmbeddingMatrix::new(users, model.encode(&a.to_dense()), prov)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn patterns_matrix(rows: usize, seed: u64) -> (CsrMatrix, DMatrix<f64>) {
        let patterns = [
            [1.0, 1.0, 1.0, 0.0, 0.0, 0.0, 0.0, 0.0, 1.0, 0.0],
            [0.0, 0.0, 1.0, 1.0, 1.0, 0.0, 0.0, 0.0, 0.0, 1.0],
            [0.0, 0.0, 0.0, 0.0, 0.0, 1.0, 1.0, 1.0, 1.0, 0.0],
        ];
        let mut rng = seeded(seed);
        let d = DMatrix::from_fn(rows, 10, |_, _| 0.0);
        let mut d = d;
        for i in 0..rows {
            let p = rng.random_range(0..3);
            for j in 0..10 {
                d[(i, j)] = patterns[p][j];
            }
        }
        (CsrMatrix::from_dense(&d), d)
    }

    #[test]
    fn distinct_patterns_fit_in_the_bottleneck() {
        let (a, x) = patterns_matrix(30, 1);
        let cfg = AeConfig { epochs: 5000, learning_rate: 20.0, seed: 2, ..AeConfig::new(3) };
        let m = ae_fit(&a, &cfg).unwrap();
        let err = (m.reconstruct(&x) - &x).abs().mean();
        assert!(err < 0.05, "{err}");
    }

    #[test]
    fn minibatch_reduces_loss() {
        let (a, x) = patterns_matrix(30, 1);
        let cfg = AeConfig { epochs: 1, learning_rate: 5.0, batch_size: Some(5), seed: 2, ..AeConfig::new(3) };
        let start = ae_fit(&a, &AeConfig { epochs: 1, learning_rate: 1e-12, ..cfg.clone() }).unwrap().loss(&x);
        let end = ae_fit(&a, &AeConfig { epochs: 300, ..cfg }).unwrap().loss(&x);
        assert!(end < start * 0.5, "{start} -> {end}");
    }

    #[test]
    fn gradients_match_finite_differences() {
        let x = DMatrix::from_row_slice(
            4,
            6,
            &[
                1.0, 0.0, 1.0, 0.0, 0.0, 1.0, //
                0.0, 1.0, 1.0, 0.0, 1.0, 0.0, //
                1.0, 1.0, 0.0, 0.0, 0.0, 0.0, //
                0.0, 0.0, 0.0, 1.0, 1.0, 1.0,
            ],
        );
        let mut rng = seeded(5);
        let mut m = AutoencoderModel {
            w_enc: DMatrix::from_fn(2, 6, |_, _| rng.random_range(-1.0..1.0)),
            b_enc: DVector::from_fn(2, |_, _| rng.random_range(-1.0..1.0)),
            w_dec: DMatrix::from_fn(6, 2, |_, _| rng.random_range(-1.0..1.0)),
            b_dec: DVector::from_fn(6, |_, _| rng.random_range(-1.0..1.0)),
        };
        let g = m.gradients(&x);
        let eps = 1e-6;
        let check = |fd: f64, an: f64| {
            let rel = (fd - an).abs() / fd.abs().max(an.abs()).max(1e-7);
            assert!(rel < 1e-4, "{fd} vs {an}");
        };
        macro_rules! fd_all {
            ($field:ident) => {
                for i in 0..m.$field.len() {
                    let orig = m.$field[i];
                    m.$field[i] = orig + eps;
                    let lp = m.loss(&x);
                    m.$field[i] = orig - eps;
                    let lm = m.loss(&x);
                    m.$field[i] = orig;
                    check((lp - lm) / (2.0 * eps), g.$field[i]);
                }
            };
        }
        fd_all!(w_enc);
        fd_all!(b_enc);
        fd_all!(w_dec);
        fd_all!(b_dec);
    }

    #[test]
    fn zero_row_embeds_to_sigmoid_of_bias() {
        let (a, _) = patterns_matrix(10, 3);
        let m = ae_fit(&a, &AeConfig { epochs: 20, ..AeConfig::new(2) }).unwrap();
        let zero = CsrMatrix::from_rows(10, vec![vec![]]);
        let e = ae_embed(&m, &zero, vec![UserId::new("z").unwrap()]).unwrap();
        for k in 0..2 {
            assert_eq!(e.data()[(0, k)], sigmoid(m.b_enc[k]));
        }
    }

    #[test]
    fn same_seed_same_weights() {
        let (a, _) = patterns_matrix(10, 3);
        let cfg = AeConfig { epochs: 10, seed: 7, batch_size: Some(3), ..AeConfig::new(2) };
        assert_eq!(ae_fit(&a, &cfg).unwrap(), ae_fit(&a, &cfg).unwrap());
    }

    #[test]
    fn hidden_must_be_smaller_than_input() {
        let (a, _) = patterns_matrix(5, 3);
        assert!(ae_fit(&a, &AeConfig::new(10)).is_err());
        assert!(ae_fit(&a, &AeConfig::new(0)).is_err());
        assert!(ae_fit(&a, &AeConfig::new(9)).is_ok());
    }
}
