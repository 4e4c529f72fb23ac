//! Paragraph vectors trained with negative sampling.
//!
//! DBOW predicts every token of a document from the document vector alone.
//! DM predicts each token from the document vector combined with the word
//! vectors of its context window, either averaged or concatenated.

use nalgebra::DMatrix;
use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::linalg::sigmoid;
use crate::rng::{derive_seed, seeded, SeededRng};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum PvMode {
    Dm,
    Dbow,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PvConfig {
    pub mode: PvMode,
    pub dim: usize,
    /// Context radius for DM.
    pub window: usize,
    pub negative: usize,
    pub epochs: usize,
    /// Initial learning rate, decayed linearly to `min_learning_rate`.
    pub learning_rate: f64,
    pub min_learning_rate: f64,
    /// DM only: concatenate instead of averaging.
    pub concat: bool,
    pub seed: u64,
    pub workers: usize,
}

impl PvConfig {
    pub fn new(mode: PvMode, dim: usize) -> Self {
        PvConfig {
            mode,
            dim,
            window: 5,
            negative: 5,
            epochs: 20,
            learning_rate: 0.025,
            min_learning_rate: 0.0001,
            concat: false,
            seed: 0,
            workers: 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PvModel {
    pub mode: PvMode,
    pub dim: usize,
    pub window: usize,
    pub concat: bool,
    /// `D × dim`
    pub doc_vectors: DMatrix<f64>,
    /// `V × dim` input word vectors, DM only.
    pub word_vectors: Option<DMatrix<f64>>,
    pub negative_samples: usize,
    pub epochs: usize,
    pub seed: u64,
}

/// Negative-sampling loss `-log σ(t·h) - Σ log σ(-n·h)` and its gradient in `h`.
pub fn ns_loss_grad(h: &[f64], target: &[f64], negatives: &[&[f64]]) -> (f64, Vec<f64>) {
    let mut grad = vec![0.0; h.len()];
    let mut loss = 0.0;
    let rows = std::iter::once((target, 1.0)).chain(negatives.iter().map(|n| (*n, 0.0)));
    for (u, label) in rows {
        let f = dot(u, h);
        loss += if label == 1.0 { softplus(-f) } else { softplus(f) };
        let g = sigmoid(f) - label;
        for (gi, ui) in grad.iter_mut().zip(u) {
            *gi += g * ui;
        }
    }
    (loss, grad)
}

fn softplus(x: f64) -> f64 {
    if x > 0.0 {
        x + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p()
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// One SGD step on the output rows for `h`; accumulates the `h` gradient into `grad_h`.
fn ns_update(h: &[f64], out: &mut [f64], items: &[(usize, f64)], lr: f64, grad_h: &mut [f64]) {
    let n = h.len();
    grad_h.iter_mut().for_each(|g| *g = 0.0);
    for &(w, label) in items {
        let row = &mut out[w * n..(w + 1) * n];
        let g = sigmoid(dot(row, h)) - label;
        for i in 0..n {
            grad_h[i] += g * row[i];
            row[i] -= lr * g * h[i];
        }
    }
}

struct Trainer<'a> {
    cfg: &'a PvConfig,
    noise: WeightedIndex<f64>,
    hidden: usize,
    /// Index of the padding word in concat mode.
    null_word: usize,
    total_tokens: f64,
}

struct Shared {
    word_in: Vec<f64>,
    out: Vec<f64>,
}

impl Trainer<'_> {
    fn lr(&self, processed: f64) -> f64 {
        let frac = (processed / self.total_tokens).min(1.0);
        let c = self.cfg;
        c.learning_rate - (c.learning_rate - c.min_learning_rate) * frac
    }

    fn sample_items(&self, target: usize, rng: &mut SeededRng, items: &mut Vec<(usize, f64)>) {
        items.clear();
        items.push((target, 1.0));
        while items.len() <= self.cfg.negative {
            let w = self.noise.sample(rng);
            if w != target {
                items.push((w, 0.0));
            }
        }
    }

    /// Trains documents `order` for one epoch. `docs_vec` is indexed by local doc position.
    #[allow(clippy::too_many_arguments)]
    fn epoch(
        &self,
        docs: &[Vec<usize>],
        order: &[usize],
        doc_vecs: &mut [f64],
        shared: &mut Shared,
        rng: &mut SeededRng,
        processed: &mut f64,
        scale: f64,
    ) {
        let dim = self.cfg.dim;
        let mut h = vec![0.0; self.hidden];
        let mut grad = vec![0.0; self.hidden];
        let mut items = Vec::with_capacity(self.cfg.negative + 1);
        let mut ctx: Vec<usize> = Vec::with_capacity(2 * self.cfg.window + 1);
        for &d in order {
            let doc = &docs[d];
            for pos in 0..doc.len() {
                let lr = self.lr(*processed);
                *processed += scale;
                self.sample_items(doc[pos], rng, &mut items);
                let dv = &mut doc_vecs[d * dim..(d + 1) * dim];
                match self.cfg.mode {
                    PvMode::Dbow => {
                        ns_update(dv, &mut shared.out, &items, lr, &mut grad);
                        for i in 0..dim {
                            dv[i] -= lr * grad[i];
                        }
                    }
                    PvMode::Dm if self.cfg.concat => {
                        let w = self.cfg.window;
                        ctx.clear();
                        for off in 1..=w {
                            ctx.push(pos.checked_sub(off).map_or(self.null_word, |p| doc[p]));
                        }
                        for off in 1..=w {
                            ctx.push(doc.get(pos + off).copied().unwrap_or(self.null_word));
                        }
                        h[..dim].copy_from_slice(dv);
                        for (j, &c) in ctx.iter().enumerate() {
                            h[(j + 1) * dim..(j + 2) * dim].copy_from_slice(&shared.word_in[c * dim..(c + 1) * dim]);
                        }
                        ns_update(&h, &mut shared.out, &items, lr, &mut grad);
                        for i in 0..dim {
                            dv[i] -= lr * grad[i];
                        }
                        for (j, &c) in ctx.iter().enumerate() {
                            let g = &grad[(j + 1) * dim..(j + 2) * dim];
                            for (x, gi) in shared.word_in[c * dim..(c + 1) * dim].iter_mut().zip(g) {
                                *x -= lr * gi;
                            }
                        }
                    }
                    PvMode::Dm => {
                        let w = self.cfg.window;
                        ctx.clear();
                        ctx.extend((pos.saturating_sub(w)..(pos + w + 1).min(doc.len())).filter(|&p| p != pos).map(|p| doc[p]));
                        let inv = 1.0 / (1 + ctx.len()) as f64;
                        h.copy_from_slice(dv);
                        for &c in &ctx {
                            for (hi, x) in h.iter_mut().zip(&shared.word_in[c * dim..(c + 1) * dim]) {
                                *hi += x;
                            }
                        }
                        h.iter_mut().for_each(|x| *x *= inv);
                        ns_update(&h, &mut shared.out, &items, lr, &mut grad);
                        for i in 0..dim {
                            dv[i] -= lr * grad[i] * inv;
                        }
                        for &c in &ctx {
                            for (x, gi) in shared.word_in[c * dim..(c + 1) * dim].iter_mut().zip(&grad) {
                                *x -= lr * gi * inv;
                            }
                        }
                    }
                }
            }
        }
    }
}

fn init_uniform(n: usize, dim: usize, rng: &mut SeededRng) -> Vec<f64> {
    let b = 0.5 / dim as f64;
    (0..n * dim).map(|_| rng.random_range(-b..b)).collect()
}

/// Fits paragraph vectors on `docs` (token indices below `vocab_size`).
/// Empty documents keep a zero vector.
pub fn pv_fit(docs: &[Vec<usize>], vocab_size: usize, cfg: &PvConfig) -> Result<PvModel> {
    if cfg.dim == 0 {
        return Err(Error::invalid("dim must be at least 1"));
    }
    if cfg.mode == PvMode::Dm && cfg.window == 0 {
        return Err(Error::invalid("DM requires window >= 1"));
    }
    if cfg.epochs == 0 || cfg.negative == 0 {
        return Err(Error::invalid("epochs and negative must be at least 1"));
    }
    if docs.is_empty() {
        return Err(Error::EmptyCorpus("no documents for paragraph vectors".into()));
    }
    if docs.iter().flatten().any(|&w| w >= vocab_size) {
        return Err(Error::invalid("token index outside the vocabulary"));
    }
    let mut counts = vec![0u64; vocab_size];
    for &w in docs.iter().flatten() {
        counts[w] += 1;
    }
    let present = counts.iter().filter(|&&c| c > 0).count();
    if present < cfg.negative + 1 {
        return Err(Error::invalid(format!(
            "vocabulary of {present} words is smaller than negative + 1 = {}",
            cfg.negative + 1
        )));
    }
    let noise = WeightedIndex::new(counts.iter().map(|&c| (c as f64).powf(0.75)))
        .map_err(|e| Error::invalid(format!("noise distribution: {e}")))?;

    let dim = cfg.dim;
    let concat = cfg.mode == PvMode::Dm && cfg.concat;
    let hidden = if concat { dim * (1 + 2 * cfg.window) } else { dim };
    let mut rng = seeded(cfg.seed);
    let mut doc_vecs = init_uniform(docs.len(), dim, &mut rng);
    for (d, doc) in docs.iter().enumerate() {
        if doc.is_empty() {
            doc_vecs[d * dim..(d + 1) * dim].fill(0.0);
        }
    }
    let word_rows = if concat { vocab_size + 1 } else { vocab_size };
    let mut shared = Shared {
        word_in: if cfg.mode == PvMode::Dm { init_uniform(word_rows, dim, &mut rng) } else { Vec::new() },
        out: vec![0.0; vocab_size * hidden],
    };
    let n_tokens: usize = docs.iter().map(Vec::len).sum();
    let trainer = Trainer {
        cfg,
        noise,
        hidden,
        null_word: vocab_size,
        total_tokens: (n_tokens * cfg.epochs) as f64,
    };

    let workers = cfg.workers.clamp(1, docs.len());
    if workers == 1 {
        let mut order: Vec<usize> = (0..docs.len()).collect();
        let mut processed = 0.0;
        for _ in 0..cfg.epochs {
            order.shuffle(&mut rng);
            trainer.epoch(docs, &order, &mut doc_vecs, &mut shared, &mut rng, &mut processed, 1.0);
        }
    } else {
        let chunk = docs.len().div_ceil(workers);
        let mut rngs: Vec<SeededRng> = (0..workers)
            .map(|w| seeded(derive_seed(cfg.seed, &format!("pv-worker-{w}"))))
            .collect();
        let mut processed = vec![0.0; workers];
        for _ in 0..cfg.epochs {
            let locals: Vec<Shared> = std::thread::scope(|s| {
                let handles: Vec<_> = docs
                    .chunks(chunk)
                    .zip(doc_vecs.chunks_mut(chunk * dim))
                    .zip(rngs.iter_mut().zip(processed.iter_mut()))
                    .map(|((shard, vecs), (r, p))| {
                        let mut local = Shared {
                            word_in: shared.word_in.clone(),
                            out: shared.out.clone(),
                        };
                        let trainer = &trainer;
                        let scale = workers as f64;
                        s.spawn(move || {
                            let mut order: Vec<usize> = (0..shard.len()).collect();
                            order.shuffle(r);
                            trainer.epoch(shard, &order, vecs, &mut local, r, p, scale);
                            local
                        })
                    })
                    .collect();
                handles.into_iter().map(|h| h.join().expect("PV worker panicked")).collect()
            });
            let inv = 1.0 / locals.len() as f64;
            for (i, x) in shared.out.iter_mut().enumerate() {
                *x = locals.iter().map(|l| l.out[i]).sum::<f64>() * inv;
            }
            for (i, x) in shared.word_in.iter_mut().enumerate() {
                *x = locals.iter().map(|l| l.word_in[i]).sum::<f64>() * inv;
            }
        }
    }

    if doc_vecs.iter().any(|v| !v.is_finite()) {
        return Err(Error::Numerical("paragraph vectors diverged".into()));
    }
    let word_vectors = (cfg.mode == PvMode::Dm).then(|| DMatrix::from_row_slice(vocab_size, dim, &shared.word_in[..vocab_size * dim]));
    Ok(PvModel {
        mode: cfg.mode,
        dim,
        window: cfg.window,
        concat,
        doc_vectors: DMatrix::from_row_slice(docs.len(), dim, &doc_vecs),
        word_vectors,
        negative_samples: cfg.negative,
        epochs: cfg.epochs,
        seed: cfg.seed,
    })
}
