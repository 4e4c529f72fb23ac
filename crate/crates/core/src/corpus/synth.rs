//! Synthetic corpora with a planted latent class driving both views.
//!
//! Vocabulary and like entities are split into one block per class plus a
//! background block. The background block is further cut into nuisance
//! topics. Every token (or like) of a user is drawn, with probability equal
//! to the view's signal strength, from the user's class block; otherwise it
//! comes from the user's nuisance topic or from a Zipfian background over the
//! whole inventory, class blocks included.

use std::collections::{BTreeMap, BTreeSet};

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{LikeTable, Post, PostTable, SudLabels, SudRecord, UserId};
use crate::rng::{seeded, SeededRng};
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthSpec {
    pub users: usize,
    pub classes: usize,
    /// Relative class frequencies; empty means uniform.
    pub class_weights: Vec<f64>,
    pub class_words: usize,
    pub background_words: usize,
    pub class_likes: usize,
    pub background_likes: usize,
    pub nuisance_topics: usize,
    /// Cross-view signal strength in `[0, 1]`.
    pub signal: f64,
    /// Per-view multipliers on `signal`.
    pub post_signal_scale: f64,
    pub like_signal_scale: f64,
    pub posts_per_user: usize,
    pub words_per_post: usize,
    pub likes_per_user: usize,
    pub zipf_exponent: f64,
}

impl Default for SynthSpec {
    fn default() -> Self {
        SynthSpec {
            users: 900,
            classes: 3,
            class_weights: Vec::new(),
            class_words: 60,
            background_words: 600,
            class_likes: 60,
            background_likes: 600,
            nuisance_topics: 8,
            signal: 0.5,
            post_signal_scale: 1.0,
            like_signal_scale: 1.0,
            posts_per_user: 20,
            words_per_post: 10,
            likes_per_user: 40,
            zipf_exponent: 1.0,
        }
    }
}

impl SynthSpec {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::invalid(format!("synth spec: {m}")));
        if self.classes == 0 {
            return bad("classes must be at least 1");
        }
        if self.users == 0 {
            return bad("users must be at least 1");
        }
        if self.classes > 3 {
            return bad("labels are ordinal in {1,2,3}, so at most 3 classes");
        }
        if !self.class_weights.is_empty()
            && (self.class_weights.len() != self.classes
                || self.class_weights.iter().any(|w| !(*w >= 0.0))
                || self.class_weights.iter().sum::<f64>() <= 0.0)
        {
            return bad("class_weights must have one nonnegative weight per class");
        }
        if self.class_words == 0 || self.class_likes == 0 {
            return bad("class blocks must be non-empty");
        }
        if self.background_words == 0 || self.background_likes == 0 {
            return bad("background blocks must be non-empty");
        }
        if self.nuisance_topics == 0
            || self.nuisance_topics > self.background_words.min(self.background_likes)
        {
            return bad("nuisance_topics must be in 1..=background size");
        }
        for (name, s) in [
            ("signal", self.signal),
            ("post signal", self.signal * self.post_signal_scale),
            ("like signal", self.signal * self.like_signal_scale),
        ] {
            if !(0.0..=1.0).contains(&s) {
                return bad(&format!("{name} must lie in [0, 1]"));
            }
        }
        if self.posts_per_user == 0 || self.words_per_post == 0 || self.likes_per_user == 0 {
            return bad("per-user post, word and like counts must be positive");
        }
        if self.signal * self.like_signal_scale >= 1.0 && self.likes_per_user > self.class_likes {
            return bad("with full like signal, likes_per_user cannot exceed class_likes");
        }
        if self.likes_per_user * 2 > self.background_likes {
            return bad("likes_per_user must be at most half the background like block");
        }
        if !(self.zipf_exponent >= 0.0) {
            return bad("zipf_exponent must be nonnegative");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthCorpus {
    pub posts: PostTable,
    pub likes: LikeTable,
    pub labels: SudLabels,
    /// Planted class (0-based) per user, aligned with `labels`.
    pub classes: BTreeMap<UserId, usize>,
}

/// One view's inventory: class blocks, then the background block.
struct Inventory {
    class_block: usize,
    background: usize,
    classes: usize,
    zipf_class: WeightedIndex<f64>,
    zipf_topic: Vec<(usize, WeightedIndex<f64>)>,
    zipf_all: WeightedIndex<f64>,
}

fn zipf(n: usize, a: f64) -> WeightedIndex<f64> {
    WeightedIndex::new((0..n).map(|i| 1.0 / ((i + 1) as f64).powf(a))).expect("n > 0")
}

impl Inventory {
    fn new(classes: usize, class_block: usize, background: usize, topics: usize, a: f64) -> Self {
        let per = background / topics;
        let zipf_topic = (0..topics)
            .map(|t| {
                let start = t * per;
                let len = if t + 1 == topics { background - start } else { per };
                (start, zipf(len, a))
            })
            .collect();
        Inventory {
            class_block,
            background,
            classes,
            zipf_class: zipf(class_block, a),
            zipf_topic,
            zipf_all: zipf(classes * class_block + background, a),
        }
    }

    /// Item index in `0..classes*class_block + background`.
    fn draw(&self, rng: &mut SeededRng, class: usize, topic: usize, signal: f64) -> usize {
        if rng.random::<f64>() < signal {
            return class * self.class_block + self.zipf_class.sample(rng);
        }
        if rng.random::<bool>() {
            let (start, z) = &self.zipf_topic[topic];
            self.classes * self.class_block + start + z.sample(rng)
        } else {
            // Interleave class and background items so that the Zipf head
            // is not owned by one class block.
            let r = self.zipf_all.sample(rng);
            let total = self.classes * self.class_block + self.background;
            if total % 7919 == 0 {
                r
            } else {
                (r * 7919) % total
            }
        }
    }

    fn name(&self, item: usize, prefix: &str) -> String {
        let cb = self.classes * self.class_block;
        if item < cb {
            format!("{prefix}c{}x{}", item / self.class_block, item % self.class_block)
        } else {
            format!("{prefix}bg{}", item - cb)
        }
    }
}

/// Deterministic for a fixed `(spec, seed)`.
pub fn synth_generate(spec: &SynthSpec, seed: u64) -> Result<SynthCorpus> {
    spec.validate()?;
    let mut rng = seeded(seed);
    let weights = if spec.class_weights.is_empty() {
        vec![1.0; spec.classes]
    } else {
        spec.class_weights.clone()
    };
    let class_dist = WeightedIndex::new(&weights).map_err(|e| Error::invalid(e.to_string()))?;
    let a = spec.zipf_exponent;
    let words = Inventory::new(spec.classes, spec.class_words, spec.background_words, spec.nuisance_topics, a);
    let les = Inventory::new(spec.classes, spec.class_likes, spec.background_likes, spec.nuisance_topics, a);
    let post_signal = spec.signal * spec.post_signal_scale;
    let like_signal = spec.signal * spec.like_signal_scale;
    let width = spec.users.to_string().len().max(4);

    let mut posts = Vec::with_capacity(spec.users * spec.posts_per_user);
    let mut likes = Vec::with_capacity(spec.users * spec.likes_per_user);
    let mut labels = BTreeMap::new();
    let mut classes = BTreeMap::new();
    for u in 0..spec.users {
        let user = UserId::new(format!("u{u:0width$}"))?;
        let class = class_dist.sample(&mut rng);
        let post_topic = rng.random_range(0..spec.nuisance_topics);
        let like_topic = rng.random_range(0..spec.nuisance_topics);
        for p in 0..spec.posts_per_user {
            let tokens = (0..spec.words_per_post)
                .map(|_| words.name(words.draw(&mut rng, class, post_topic, post_signal), "w"))
                .collect();
            posts.push(Post {
                user: user.clone(),
                post_id: format!("{user}p{p}"),
                tokens,
            });
        }
        let mut seen = BTreeSet::new();
        while seen.len() < spec.likes_per_user {
            let item = les.draw(&mut rng, class, like_topic, like_signal);
            if seen.insert(item) {
                likes.push((user.clone(), les.name(item, "le_")));
            }
        }
        let y = Some(class as u8 + 1);
        labels.insert(user.clone(), SudRecord::new(y, y, y)?);
        classes.insert(user, class);
    }
    Ok(SynthCorpus {
        posts: PostTable::new(posts),
        likes: LikeTable::new(likes),
        labels: SudLabels::new(labels),
        classes,
    })
}
