//! Deep CCA: two feed-forward networks trained by full-batch gradient ascent
//! on the sum of the top `k` canonical correlations of their outputs.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::cca::{cca_fit_matrices, CcaModel};
use super::check_aligned;
use super::network::{Arch, Layer, Network};
use crate::embedders::{EmbeddingMatrix, Provenance};
use crate::linalg::{center_columns, column_means, inv_sqrt_spd, sigmoid, sorted_svd, Standardizer};
use crate::rng::{derive_seed, seeded};
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DccaConfig {
    pub arch: Arch,
    pub k: usize,
    /// Ridge added to both output covariances.
    pub reg: f64,
    pub epochs: usize,
    pub learning_rate: f64,
    /// Denoising-autoencoder epochs per layer; 0 skips pretraining.
    pub pretrain_epochs: usize,
    pub pretrain_learning_rate: f64,
    pub noise_rate: f64,
    pub seed: u64,
}

impl DccaConfig {
    pub fn new(arch: Arch, k: usize) -> Self {
        DccaConfig {
            arch,
            k,
            reg: 1e-4,
            epochs: 200,
            learning_rate: 0.5,
            pretrain_epochs: 100,
            pretrain_learning_rate: 2.0,
            noise_rate: 0.2,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DccaModel {
    pub net1: Network,
    pub net2: Network,
    /// Linear CCA on the trained network outputs.
    pub cca: CcaModel,
    /// Objective before training, then after every epoch.
    pub history: Vec<f64>,
    pub config: DccaConfig,
    scale1: Standardizer,
    scale2: Standardizer,
}

/// Sum of the top `k` canonical correlations of `h1` and `h2` and its
/// gradients with respect to both.
pub fn dcca_objective(h1: &DMatrix<f64>, h2: &DMatrix<f64>, k: usize, reg: f64) -> Result<(f64, DMatrix<f64>, DMatrix<f64>)> {
    let n = h1.nrows();
    if h2.nrows() != n || n < 2 {
        return Err(Error::Misaligned(format!("{n} vs {} rows", h2.nrows())));
    }
    let (o1, o2) = (h1.ncols(), h2.ncols());
    if k == 0 || k > o1.min(o2) {
        return Err(Error::invalid(format!("k = {k} must be in 1..={}", o1.min(o2))));
    }
    let scale = 1.0 / (n - 1) as f64;
    let c1 = center_columns(h1, &column_means(h1));
    let c2 = center_columns(h2, &column_means(h2));
    let s11 = c1.transpose() * &c1 * scale + DMatrix::identity(o1, o1) * reg;
    let s22 = c2.transpose() * &c2 * scale + DMatrix::identity(o2, o2) * reg;
    let s12 = c1.transpose() * &c2 * scale;
    let r1 = inv_sqrt_spd(&s11)?;
    let r2 = inv_sqrt_spd(&s22)?;
    let svd = sorted_svd(&(&r1 * s12 * &r2))?;
    let uk = svd.u.columns(0, k);
    let vk = svd.v.columns(0, k);
    let dk = DMatrix::from_diagonal(&svd.s.rows(0, k));
    let value = svd.s.rows(0, k).sum();
    let g12 = &r1 * uk * vk.transpose() * &r2;
    let g11 = &r1 * uk * &dk * uk.transpose() * &r1 * -0.5;
    let g22 = &r2 * vk * &dk * vk.transpose() * &r2 * -0.5;
    let d1 = (&c1 * g11 * 2.0 + &c2 * g12.transpose()) * scale;
    let d2 = (&c2 * g22 * 2.0 + &c1 * g12) * scale;
    Ok((value, d1, d2))
}

/// Objective of two networks and its gradients in [`Network::parameters`] order.
pub fn dcca_objective_for(
    net1: &Network,
    net2: &Network,
    x1: &DMatrix<f64>,
    x2: &DMatrix<f64>,
    k: usize,
    reg: f64,
) -> Result<(f64, Vec<f64>, Vec<f64>)> {
    let (v, d1, d2) = dcca_objective(&net1.forward(x1), &net2.forward(x2), k, reg)?;
    Ok((v, net1.parameter_gradient(x1, &d1), net2.parameter_gradient(x2, &d2)))
}

/// A network initialized by greedy layer-wise denoising autoencoders.
#[derive(Debug, Clone, PartialEq)]
pub struct Pretrained {
    pub network: Network,
    /// Clean-input reconstruction loss of each layer before and after pretraining.
    pub layer_losses: Vec<(f64, f64)>,
}

/// One autoencoder layer: `f(x Wᵀ + b)` encoded, decoded linearly.
struct Dae {
    enc: Layer,
    dec: Layer,
    sigmoid: bool,
}

impl Dae {
    fn encode(&self, x: &DMatrix<f64>) -> DMatrix<f64> {
        let mut z = x * self.enc.w.transpose();
        for mut row in z.row_iter_mut() {
            row += self.enc.b.transpose();
        }
        if self.sigmoid { z.map(sigmoid) } else { z }
    }

    fn decode(&self, a: &DMatrix<f64>) -> DMatrix<f64> {
        let mut y = a * self.dec.w.transpose();
        for mut row in y.row_iter_mut() {
            row += self.dec.b.transpose();
        }
        y
    }

    /// Half the mean squared reconstruction error of `input` against `target`.
    fn loss(&self, input: &DMatrix<f64>, target: &DMatrix<f64>) -> f64 {
        (self.decode(&self.encode(input)) - target).norm_squared() / (2.0 * target.len() as f64)
    }

    fn step(&mut self, input: &DMatrix<f64>, target: &DMatrix<f64>, lr: f64) {
        let a = self.encode(input);
        let dy = (self.decode(&a) - target) / target.len() as f64;
        let col_sums = |m: &DMatrix<f64>| DVector::from_fn(m.ncols(), |j, _| m.column(j).sum());
        let dwd = dy.transpose() * &a;
        let dbd = col_sums(&dy);
        let mut dz = &dy * &self.dec.w;
        if self.sigmoid {
            dz.component_mul_assign(&a.map(|v| v * (1.0 - v)));
        }
        let dwe = dz.transpose() * input;
        let dbe = col_sums(&dz);
        self.dec.w -= dwd * lr;
        self.dec.b -= dbd * lr;
        self.enc.w -= dwe * lr;
        self.enc.b -= dbe * lr;
    }
}

/// Pretrains every layer of a network for `x` as a denoising autoencoder on
/// the previous layer's clean output. Inputs are masked to zero with
/// probability `noise_rate`.
pub fn dcca_pretrain(
    x: &DMatrix<f64>,
    arch: &Arch,
    noise_rate: f64,
    epochs: usize,
    learning_rate: f64,
    seed: u64,
) -> Result<Pretrained> {
    if !(0.0..1.0).contains(&noise_rate) {
        return Err(Error::invalid(format!("noise_rate {noise_rate} is outside [0, 1)")));
    }
    let mut network = Network::new(x.ncols(), arch, derive_seed(seed, "init"))?;
    let mut rng = seeded(derive_seed(seed, "mask"));
    let mut dec_rng = seeded(derive_seed(seed, "decoder"));
    let mut input = x.clone();
    let mut layer_losses = Vec::new();
    let n_layers = network.layers.len();
    for l in 0..n_layers {
        let enc = network.layers[l].clone();
        let (out, inp) = enc.w.shape();
        let bound = (6.0 / (inp + out) as f64).sqrt();
        let dec = Layer {
            w: DMatrix::from_fn(inp, out, |_, _| dec_rng.random_range(-bound..bound)),
            b: DVector::zeros(inp),
        };
        let mut dae = Dae {
            enc,
            dec,
            sigmoid: l + 1 < n_layers,
        };
        let before = dae.loss(&input, &input);
        for _ in 0..epochs {
            let noisy = if noise_rate > 0.0 {
                input.map(|v| if rng.random::<f64>() < noise_rate { 0.0 } else { v })
            } else {
                input.clone()
            };
            dae.step(&noisy, &input, learning_rate);
        }
        let after = dae.loss(&input, &input);
        layer_losses.push((before, after));
        input = dae.encode(&input);
        network.layers[l] = dae.enc;
    }
    Ok(Pretrained { network, layer_losses })
}

pub fn dcca_fit(x1: &EmbeddingMatrix, x2: &EmbeddingMatrix, cfg: &DccaConfig) -> Result<DccaModel> {
    check_aligned(&[x1, x2])?;
    cfg.arch.validate()?;
    if cfg.k == 0 || cfg.k > cfg.arch.output {
        return Err(Error::invalid(format!(
            "k = {} must be in 1..={} (output width)",
            cfg.k, cfg.arch.output
        )));
    }
    if x1.nrows() <= cfg.k {
        return Err(Error::invalid(format!("need more than k = {} users", cfg.k)));
    }
    if !(cfg.reg > 0.0) {
        return Err(Error::invalid("reg must be positive"));
    }
    let scale1 = Standardizer::fit(x1.data());
    let scale2 = Standardizer::fit(x2.data());
    let z1 = scale1.apply(x1.data());
    let z2 = scale2.apply(x2.data());
    let init = |z: &DMatrix<f64>, tag: &str| -> Result<Network> {
        let seed = derive_seed(cfg.seed, tag);
        if cfg.pretrain_epochs > 0 {
            Ok(dcca_pretrain(z, &cfg.arch, cfg.noise_rate, cfg.pretrain_epochs, cfg.pretrain_learning_rate, seed)?.network)
        } else {
            if !(0.0..1.0).contains(&cfg.noise_rate) {
                return Err(Error::invalid(format!("noise_rate {} is outside [0, 1)", cfg.noise_rate)));
            }
            Network::new(z.ncols(), &cfg.arch, derive_seed(seed, "init"))
        }
    };
    let mut net1 = init(&z1, "view1")?;
    let mut net2 = init(&z2, "view2")?;

    let mut history = Vec::with_capacity(cfg.epochs + 1);
    for epoch in 0..=cfg.epochs {
        let h1 = net1.forward(&z1);
        let h2 = net2.forward(&z2);
        let (value, d1, d2) = match dcca_objective(&h1, &h2, cfg.k, cfg.reg) {
            Ok(r) if r.0.is_finite() => r,
            _ => return Err(Error::NonFiniteObjective { epoch }),
        };
        history.push(value);
        if epoch == cfg.epochs {
            break;
        }
        let g1 = net1.backward(&z1, &d1);
        let g2 = net2.backward(&z2, &d2);
        net1.step(&g1, cfg.learning_rate);
        net2.step(&g2, cfg.learning_rate);
    }
    log::info!(
        "dcca: objective {:.4} -> {:.4} over {} epochs",
        history[0],
        history[history.len() - 1],
        cfg.epochs
    );
    let cca = cca_fit_matrices(&net1.forward(&z1), &net2.forward(&z2), cfg.k, cfg.reg)?;
    Ok(DccaModel {
        net1,
        net2,
        cca,
        history,
        config: cfg.clone(),
        scale1,
        scale2,
    })
}

/// Both views through their networks and the final CCA, concatenated (`2k` columns).
pub fn dcca_transform(model: &DccaModel, x1: &EmbeddingMatrix, x2: &EmbeddingMatrix) -> Result<EmbeddingMatrix> {
    check_aligned(&[x1, x2])?;
    if x1.dim() != model.net1.input_dim() || x2.dim() != model.net2.input_dim() {
        return Err(Error::DimensionMismatch("inputs do not match the fitted view dimensions".into()));
    }
    let h1 = model.net1.forward(&model.scale1.apply(x1.data()));
    let h2 = model.net2.forward(&model.scale2.apply(x2.data()));
    let (a, b) = model.cca.transform(&h1, &h2)?;
    let k = model.config.k;
    let mut out = DMatrix::zeros(a.nrows(), 2 * k);
    out.columns_mut(0, k).copy_from(&a);
    out.columns_mut(k, k).copy_from(&b);
    let c = &model.config;
    let prov = Provenance::new("mue.dcca", 2 * k, Some(c.seed))
        .with("k", c.k)
        .with("hidden", &c.arch.hidden)
        .with("output", c.arch.output)
        .with("reg", c.reg)
        .with("epochs", c.epochs)
        .with("learning_rate", c.learning_rate)
        .with("pretrain_epochs", c.pretrain_epochs)
        .with("noise_rate", c.noise_rate)
        .with("final_objective", model.history.last().copied())
        .with("inputs", [x1.provenance().learner.clone(), x2.provenance().learner.clone()]);
    EmbeddingMatrix::new(x1.users().to_vec(), out, prov)
}
