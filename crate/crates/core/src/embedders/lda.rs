//! Latent Dirichlet allocation fitted by collapsed Gibbs sampling.
//!
//! Topic-word and document-topic estimates are read from the final
//! assignment counts with symmetric Dirichlet smoothing. With `workers > 1`
//! the documents are sharded and each shard sweeps against a private copy
//! of the topic-word counts; copies are merged after every sweep
//! (approximate distributed Gibbs). The merge is deterministic, so results
//! are still reproducible per seed, though they differ from the
//! single-worker chain.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::rng::{derive_seed, seeded, SeededRng};
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LdaConfig {
    pub k: usize,
    /// Document-topic prior; `None` means `50 / k`.
    pub alpha: Option<f64>,
    pub beta: f64,
    pub iterations: usize,
    pub seed: u64,
    pub workers: usize,
}

impl LdaConfig {
    pub fn new(k: usize) -> Self {
        LdaConfig {
            k,
            alpha: None,
            beta: 0.01,
            iterations: 200,
            seed: 0,
            workers: 1,
        }
    }

    pub fn alpha(&self) -> f64 {
        self.alpha.unwrap_or(50.0 / self.k as f64)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LdaModel {
    pub k: usize,
    pub alpha: f64,
    pub beta: f64,
    /// `K × V`, rows are distributions over the vocabulary.
    pub phi: DMatrix<f64>,
    /// `D × K`, rows are distributions over topics.
    pub theta: DMatrix<f64>,
    /// Share of all token assignments held by each topic.
    pub topic_prior: DVector<f64>,
}

impl LdaModel {
    pub fn vocab_size(&self) -> usize {
        self.phi.ncols()
    }

    /// `P(topic | word)` by Bayes' rule from `phi` and `topic_prior`.
    /// Falls back to uniform when the word has zero mass under every topic.
    pub fn topic_given_word(&self, w: usize) -> DVector<f64> {
        let joint = DVector::from_fn(self.k, |t, _| self.phi[(t, w)] * self.topic_prior[t]);
        let z = joint.sum();
        if z > 0.0 {
            joint / z
        } else {
            DVector::from_element(self.k, 1.0 / self.k as f64)
        }
    }

    /// Indices of the `n` highest-probability words of `topic`, ties by index.
    pub fn top_words(&self, topic: usize, n: usize) -> Vec<usize> {
        let mut idx: Vec<usize> = (0..self.vocab_size()).collect();
        idx.sort_by(|&a, &b| self.phi[(topic, b)].total_cmp(&self.phi[(topic, a)]).then(a.cmp(&b)));
        idx.truncate(n);
        idx
    }
}

struct Counts {
    k: usize,
    /// `word * k + topic`
    word_topic: Vec<u32>,
    topic: Vec<u32>,
}

impl Counts {
    fn delta(&self, base: &Counts) -> (Vec<i64>, Vec<i64>) {
        let wt = self.word_topic.iter().zip(&base.word_topic).map(|(&a, &b)| a as i64 - b as i64).collect();
        let t = self.topic.iter().zip(&base.topic).map(|(&a, &b)| a as i64 - b as i64).collect();
        (wt, t)
    }

    fn apply(&mut self, delta: &(Vec<i64>, Vec<i64>)) {
        for (c, d) in self.word_topic.iter_mut().zip(&delta.0) {
            *c = (*c as i64 + d) as u32;
        }
        for (c, d) in self.topic.iter_mut().zip(&delta.1) {
            *c = (*c as i64 + d) as u32;
        }
    }

    fn clone_counts(&self) -> Counts {
        Counts {
            k: self.k,
            word_topic: self.word_topic.clone(),
            topic: self.topic.clone(),
        }
    }
}

/// One Gibbs sweep over `docs`; `doc_topic` rows are `k` wide.
#[allow(clippy::too_many_arguments)]
fn sweep(
    docs: &[Vec<usize>],
    assign: &mut [Vec<u16>],
    doc_topic: &mut [u32],
    counts: &mut Counts,
    alpha: f64,
    beta: f64,
    vbeta: f64,
    rng: &mut SeededRng,
) {
    let k = counts.k;
    let mut cum = vec![0.0f64; k];
    for (d, doc) in docs.iter().enumerate() {
        let dt = &mut doc_topic[d * k..(d + 1) * k];
        for (i, &w) in doc.iter().enumerate() {
            let old = assign[d][i] as usize;
            dt[old] -= 1;
            counts.word_topic[w * k + old] -= 1;
            counts.topic[old] -= 1;
            let wt = &counts.word_topic[w * k..(w + 1) * k];
            let mut total = 0.0;
            for t in 0..k {
                total += (dt[t] as f64 + alpha) * (wt[t] as f64 + beta) / (counts.topic[t] as f64 + vbeta);
                cum[t] = total;
            }
            let u = rng.random::<f64>() * total;
            let new = cum.iter().position(|&c| u < c).unwrap_or(k - 1);
            assign[d][i] = new as u16;
            dt[new] += 1;
            counts.word_topic[w * k + new] += 1;
            counts.topic[new] += 1;
        }
    }
}

pub fn lda_fit(docs: &[Vec<usize>], vocab_size: usize, cfg: &LdaConfig) -> Result<LdaModel> {
    let k = cfg.k;
    if k == 0 || k > u16::MAX as usize {
        return Err(Error::invalid("topic count must be in 1..=65535"));
    }
    if cfg.iterations == 0 {
        return Err(Error::invalid("iterations must be at least 1"));
    }
    let alpha = cfg.alpha();
    if !(alpha > 0.0 && cfg.beta > 0.0) {
        return Err(Error::invalid("alpha and beta must be positive"));
    }
    if docs.is_empty() {
        return Err(Error::EmptyCorpus("LDA needs at least one document".into()));
    }
    if let Some(d) = docs.iter().position(|d| d.is_empty()) {
        return Err(Error::invalid(format!("document {d} is empty")));
    }
    if docs.iter().flatten().any(|&w| w >= vocab_size) {
        return Err(Error::invalid("token index outside the vocabulary"));
    }
    let vbeta = vocab_size as f64 * cfg.beta;
    let mut rng = seeded(cfg.seed);

    let mut counts = Counts {
        k,
        word_topic: vec![0; vocab_size * k],
        topic: vec![0; k],
    };
    let mut doc_topic = vec![0u32; docs.len() * k];
    let mut assign: Vec<Vec<u16>> = Vec::with_capacity(docs.len());
    for (d, doc) in docs.iter().enumerate() {
        let z: Vec<u16> = doc.iter().map(|_| rng.random_range(0..k) as u16).collect();
        for (&w, &t) in doc.iter().zip(&z) {
            doc_topic[d * k + t as usize] += 1;
            counts.word_topic[w * k + t as usize] += 1;
            counts.topic[t as usize] += 1;
        }
        assign.push(z);
    }

    let workers = cfg.workers.clamp(1, docs.len());
    if workers == 1 {
        for _ in 0..cfg.iterations {
            sweep(docs, &mut assign, &mut doc_topic, &mut counts, alpha, cfg.beta, vbeta, &mut rng);
        }
    } else {
        let chunk = docs.len().div_ceil(workers);
        let mut rngs: Vec<SeededRng> = (0..workers)
            .map(|w| seeded(derive_seed(cfg.seed, &format!("lda-worker-{w}"))))
            .collect();
        for _ in 0..cfg.iterations {
            let deltas: Vec<(Vec<i64>, Vec<i64>)> = std::thread::scope(|s| {
                let handles: Vec<_> = docs
                    .chunks(chunk)
                    .zip(assign.chunks_mut(chunk))
                    .zip(doc_topic.chunks_mut(chunk * k))
                    .zip(rngs.iter_mut())
                    .map(|(((ds, zs), dts), r)| {
                        let mut local = counts.clone_counts();
                        let base = &counts;
                        s.spawn(move || {
                            sweep(ds, zs, dts, &mut local, alpha, cfg.beta, vbeta, r);
                            local.delta(base)
                        })
                    })
                    .collect();
                handles.into_iter().map(|h| h.join().expect("LDA worker panicked")).collect()
            });
            for d in &deltas {
                counts.apply(d);
            }
        }
    }

    let mut theta = DMatrix::zeros(docs.len(), k);
    for (d, doc) in docs.iter().enumerate() {
        let denom = doc.len() as f64 + k as f64 * alpha;
        for t in 0..k {
            theta[(d, t)] = (doc_topic[d * k + t] as f64 + alpha) / denom;
        }
    }
    let mut phi = DMatrix::zeros(k, vocab_size);
    for t in 0..k {
        let denom = counts.topic[t] as f64 + vbeta;
        for w in 0..vocab_size {
            phi[(t, w)] = (counts.word_topic[w * k + t] as f64 + cfg.beta) / denom;
        }
    }
    normalize_rows(&mut theta);
    normalize_rows(&mut phi);
    let n_tokens: f64 = counts.topic.iter().map(|&c| c as f64).sum();
    let topic_prior = DVector::from_iterator(k, counts.topic.iter().map(|&c| c as f64 / n_tokens));
    Ok(LdaModel {
        k,
        alpha,
        beta: cfg.beta,
        phi,
        theta,
        topic_prior,
    })
}

fn normalize_rows(m: &mut DMatrix<f64>) {
    for mut row in m.row_iter_mut() {
        let s: f64 = row.sum();
        row /= s;
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TopicInference {
    pub distribution: Vec<f64>,
    /// No in-vocabulary token; `distribution` is uniform.
    pub fallback: bool,
}

/// Fold-in Gibbs sampling with `phi` held fixed. Out-of-vocabulary tokens are
/// dropped. The returned distribution averages the per-sweep estimates over
/// the second half of the sweeps.
pub fn lda_infer(model: &LdaModel, doc: &[usize], iterations: usize, seed: u64) -> TopicInference {
    let k = model.k;
    let words: Vec<usize> = doc.iter().copied().filter(|&w| w < model.vocab_size()).collect();
    if words.is_empty() {
        return TopicInference {
            distribution: vec![1.0 / k as f64; k],
            fallback: true,
        };
    }
    if k == 1 {
        return TopicInference {
            distribution: vec![1.0],
            fallback: false,
        };
    }
    let mut rng = seeded(seed);
    let mut z: Vec<usize> = words.iter().map(|_| rng.random_range(0..k)).collect();
    let mut n = vec![0u32; k];
    for &t in &z {
        n[t] += 1;
    }
    let iterations = iterations.max(2);
    let burn = iterations / 2;
    let denom = words.len() as f64 + k as f64 * model.alpha;
    let mut acc = vec![0.0; k];
    let mut cum = vec![0.0; k];
    for it in 0..iterations {
        for (i, &w) in words.iter().enumerate() {
            n[z[i]] -= 1;
            let mut total = 0.0;
            for t in 0..k {
                total += (n[t] as f64 + model.alpha) * model.phi[(t, w)];
                cum[t] = total;
            }
            let u = rng.random::<f64>() * total;
            let new = cum.iter().position(|&c| u < c).unwrap_or(k - 1);
            z[i] = new;
            n[new] += 1;
        }
        if it >= burn {
            for t in 0..k {
                acc[t] += (n[t] as f64 + model.alpha) / denom;
            }
        }
    }
    let s: f64 = acc.iter().sum();
    TopicInference {
        distribution: acc.into_iter().map(|a| a / s).collect(),
        fallback: false,
    }
}
