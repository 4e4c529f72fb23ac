//! Run configuration: a flat `key = value` file with dotted keys.
//!
//! Blank lines and lines starting with `#` are ignored. Every key has a
//! default; unknown or repeated keys are errors. [`RunConfig::pairs`] lists
//! every key with its effective value and is what outputs echo.

use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::analyze::CorrelationOptions;
use crate::corpus::{FilterConfig, Substance, SynthSpec};
use crate::multiview::{Arch, DccaConfig, IMBALANCED_DIMS, MUE_DIMS};
use crate::predict::{CvConfig, SvmConfig};
use crate::rng::derive_seed;
use crate::views::{Method, ViewKind, ViewSpec, SINGLE_VIEW_DIMS};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum FusionKind {
    None,
    Wgcca,
    Dcca,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Balance {
    /// Both views at the same dimension.
    Balanced,
    /// The post view at 50 and the like view at 300 dimensions.
    Imbalanced,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FusionSpec {
    pub kind: FusionKind,
    pub balance: Balance,
    /// Output dimension; DCCA uses `dim / 2` canonical directions per view.
    pub dim: usize,
    pub epsilon: f64,
    /// Per-view weights (posts, likes) for wGCCA.
    pub weights: Vec<f64>,
    pub dcca_hidden: Vec<usize>,
    pub dcca_epochs: usize,
    pub dcca_learning_rate: f64,
    pub dcca_reg: f64,
    pub dcca_pretrain_epochs: usize,
    pub dcca_pretrain_learning_rate: f64,
    pub dcca_noise_rate: f64,
}

impl Default for FusionSpec {
    fn default() -> Self {
        let d = DccaConfig::new(Arch { hidden: vec![64], output: 10 }, 10);
        FusionSpec {
            kind: FusionKind::Wgcca,
            balance: Balance::Balanced,
            dim: 20,
            epsilon: 1e-3,
            weights: vec![1.0, 1.0],
            dcca_hidden: vec![64],
            dcca_epochs: d.epochs,
            dcca_learning_rate: d.learning_rate,
            dcca_reg: d.reg,
            dcca_pretrain_epochs: d.pretrain_epochs,
            dcca_pretrain_learning_rate: d.pretrain_learning_rate,
            dcca_noise_rate: d.noise_rate,
        }
    }
}

impl FusionSpec {
    pub fn dcca_config(&self, seed: u64) -> DccaConfig {
        let k = self.dim / 2;
        DccaConfig {
            reg: self.dcca_reg,
            epochs: self.dcca_epochs,
            learning_rate: self.dcca_learning_rate,
            pretrain_epochs: self.dcca_pretrain_epochs,
            pretrain_learning_rate: self.dcca_pretrain_learning_rate,
            noise_rate: self.dcca_noise_rate,
            seed,
            ..DccaConfig::new(Arch { hidden: self.dcca_hidden.clone(), output: k }, k)
        }
    }
}

/// What `eval` scores.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum FeatureSource {
    Spe,
    Sle,
    Mue,
    /// Post token counts with in-fold ANOVA selection.
    Unigram,
}

impl FeatureSource {
    pub fn name(self) -> &'static str {
        match self {
            FeatureSource::Spe => "spe",
            FeatureSource::Sle => "sle",
            FeatureSource::Mue => "mue",
            FeatureSource::Unigram => "unigram",
        }
    }
}

impl FromStr for FeatureSource {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "spe" => Ok(FeatureSource::Spe),
            "sle" => Ok(FeatureSource::Sle),
            "mue" => Ok(FeatureSource::Mue),
            "unigram" => Ok(FeatureSource::Unigram),
            _ => Err(Error::Config(format!("unknown feature source {s:?}"))),
        }
    }
}

impl fmt::Display for FeatureSource {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub seed: u64,
    /// Threads for training and cross-validation.
    pub workers: usize,
    pub posts: Option<PathBuf>,
    pub likes: Option<PathBuf>,
    pub labels: Option<PathBuf>,
    pub lexicon: Option<PathBuf>,
    pub filter: FilterConfig,
    pub spe: ViewSpec,
    pub sle: ViewSpec,
    pub mue: FusionSpec,
    pub svm: SvmConfig,
    pub folds: usize,
    pub substances: Vec<Substance>,
    pub features: Vec<FeatureSource>,
    pub unigram_top_k: usize,
    pub analysis: CorrelationOptions,
    pub topics: bool,
    pub top_n: usize,
    pub grid_spe_dims: Vec<usize>,
    pub grid_sle_dims: Vec<usize>,
    pub grid_mue_dims: Vec<usize>,
    pub synth: SynthSpec,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            seed: 0,
            workers: 1,
            posts: None,
            likes: None,
            labels: None,
            lexicon: None,
            filter: FilterConfig::default(),
            spe: ViewSpec::new(ViewKind::Posts, Method::UserDbow, 50).expect("valid default"),
            sle: ViewSpec::new(ViewKind::Likes, Method::UserDbow, 50).expect("valid default"),
            mue: FusionSpec::default(),
            svm: SvmConfig::default(),
            folds: 10,
            substances: Substance::ALL.to_vec(),
            features: vec![FeatureSource::Spe, FeatureSource::Sle, FeatureSource::Mue],
            unigram_top_k: 1000,
            analysis: CorrelationOptions::default(),
            topics: false,
            top_n: 10,
            grid_spe_dims: SINGLE_VIEW_DIMS.to_vec(),
            grid_sle_dims: SINGLE_VIEW_DIMS.to_vec(),
            grid_mue_dims: MUE_DIMS.to_vec(),
            synth: SynthSpec::default(),
        }
    }
}

fn bad(key: &str, value: &str, why: impl fmt::Display) -> Error {
    Error::Config(format!("{key} = {value:?}: {why}"))
}

fn num<T: FromStr>(key: &str, value: &str) -> Result<T>
where
    T::Err: fmt::Display,
{
    value.parse().map_err(|e| bad(key, value, e))
}

fn boolean(key: &str, value: &str) -> Result<bool> {
    match value {
        "true" => Ok(true),
        "false" => Ok(false),
        _ => Err(bad(key, value, "expected true or false")),
    }
}

fn list<T: FromStr>(key: &str, value: &str) -> Result<Vec<T>>
where
    T::Err: fmt::Display,
{
    if value.is_empty() {
        return Ok(Vec::new());
    }
    value.split(',').map(|v| num(key, v.trim())).collect()
}

fn optional<T: FromStr>(key: &str, value: &str) -> Result<Option<T>>
where
    T::Err: fmt::Display,
{
    if value == "none" {
        Ok(None)
    } else {
        num(key, value).map(Some)
    }
}

fn path(value: &str) -> Option<PathBuf> {
    (!value.is_empty() && value != "none").then(|| PathBuf::from(value))
}

fn join<T: fmt::Display>(v: &[T]) -> String {
    v.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(",")
}

fn show_opt<T: fmt::Display>(v: &Option<T>) -> String {
    v.as_ref().map_or_else(|| "none".to_string(), |x| x.to_string())
}

fn show_path(p: &Option<PathBuf>) -> String {
    p.as_ref().map_or_else(|| "none".to_string(), |x| x.display().to_string())
}

fn set_view(v: &mut ViewSpec, key: &str, sub: &str, value: &str) -> Result<bool> {
    match sub {
        "method" => v.method = Method::parse(v.view, value).map_err(|e| bad(key, value, e))?,
        "dim" => v.dim = num(key, value)?,
        "weighted_average" => v.weighted_average = boolean(key, value)?,
        "lda.alpha" => v.lda.alpha = optional(key, value)?,
        "lda.beta" => v.lda.beta = num(key, value)?,
        "lda.iterations" => v.lda.iterations = num(key, value)?,
        "pv.window" => v.pv.window = optional(key, value)?,
        "pv.negative" => v.pv.negative = num(key, value)?,
        "pv.epochs" => v.pv.epochs = num(key, value)?,
        "pv.learning_rate" => v.pv.learning_rate = num(key, value)?,
        "pv.min_learning_rate" => v.pv.min_learning_rate = num(key, value)?,
        "pv.concat" => v.pv.concat = boolean(key, value)?,
        "ae.epochs" => v.ae.epochs = num(key, value)?,
        "ae.learning_rate" => v.ae.learning_rate = num(key, value)?,
        "ae.batch_size" => v.ae.batch_size = optional(key, value)?,
        _ => return Ok(false),
    }
    Ok(true)
}

fn view_pairs(prefix: &str, v: &ViewSpec, out: &mut BTreeMap<String, String>) {
    let mut put = |k: &str, val: String| {
        out.insert(format!("{prefix}.{k}"), val);
    };
    put("method", v.name().to_string());
    put("dim", v.dim.to_string());
    put("weighted_average", v.weighted_average.to_string());
    put("lda.alpha", show_opt(&v.lda.alpha));
    put("lda.beta", v.lda.beta.to_string());
    put("lda.iterations", v.lda.iterations.to_string());
    put("pv.window", show_opt(&v.pv.window));
    put("pv.negative", v.pv.negative.to_string());
    put("pv.epochs", v.pv.epochs.to_string());
    put("pv.learning_rate", v.pv.learning_rate.to_string());
    put("pv.min_learning_rate", v.pv.min_learning_rate.to_string());
    put("pv.concat", v.pv.concat.to_string());
    put("ae.epochs", v.ae.epochs.to_string());
    put("ae.learning_rate", v.ae.learning_rate.to_string());
    put("ae.batch_size", show_opt(&v.ae.batch_size));
}

impl RunConfig {
    /// Applies one `key = value` setting.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let value = value.trim();
        if let Some(sub) = key.strip_prefix("spe.") {
            if set_view(&mut self.spe, key, sub, value)? {
                return Ok(());
            }
        }
        if let Some(sub) = key.strip_prefix("sle.") {
            if set_view(&mut self.sle, key, sub, value)? {
                return Ok(());
            }
        }
        let s = &mut self.synth;
        let m = &mut self.mue;
        match key {
            "seed" => self.seed = num(key, value)?,
            "workers" => self.workers = num(key, value)?,
            "data.posts" => self.posts = path(value),
            "data.likes" => self.likes = path(value),
            "data.labels" => self.labels = path(value),
            "data.lexicon" => self.lexicon = path(value),
            "filter.min_words_per_user" => self.filter.min_words_per_user = num(key, value)?,
            "filter.min_word_count" => self.filter.min_word_count = num(key, value)?,
            "filter.min_likes_per_user" => self.filter.min_likes_per_user = num(key, value)?,
            "filter.min_likes_per_le" => self.filter.min_likes_per_le = num(key, value)?,
            "filter.fixed_point" => self.filter.fixed_point = boolean(key, value)?,
            "mue.kind" => {
                m.kind = match value {
                    "none" => FusionKind::None,
                    "wgcca" => FusionKind::Wgcca,
                    "dcca" => FusionKind::Dcca,
                    _ => return Err(bad(key, value, "expected none, wgcca or dcca")),
                }
            }
            "mue.balance" => {
                m.balance = match value {
                    "balanced" => Balance::Balanced,
                    "imbalanced" => Balance::Imbalanced,
                    _ => return Err(bad(key, value, "expected balanced or imbalanced")),
                }
            }
            "mue.dim" => m.dim = num(key, value)?,
            "mue.epsilon" => m.epsilon = num(key, value)?,
            "mue.weights" => m.weights = list(key, value)?,
            "mue.dcca.hidden" => m.dcca_hidden = list(key, value)?,
            "mue.dcca.epochs" => m.dcca_epochs = num(key, value)?,
            "mue.dcca.learning_rate" => m.dcca_learning_rate = num(key, value)?,
            "mue.dcca.reg" => m.dcca_reg = num(key, value)?,
            "mue.dcca.pretrain_epochs" => m.dcca_pretrain_epochs = num(key, value)?,
            "mue.dcca.pretrain_learning_rate" => m.dcca_pretrain_learning_rate = num(key, value)?,
            "mue.dcca.noise_rate" => m.dcca_noise_rate = num(key, value)?,
            "svm.c" => self.svm.c = num(key, value)?,
            "svm.epochs" => self.svm.epochs = num(key, value)?,
            "cv.folds" => self.folds = num(key, value)?,
            "eval.substances" => self.substances = list(key, value)?,
            "eval.features" => self.features = list(key, value)?,
            "eval.unigram_top_k" => self.unigram_top_k = num(key, value)?,
            "analysis.alpha" => self.analysis.alpha = num(key, value)?,
            "analysis.permutation" => self.analysis.permutation = boolean(key, value)?,
            "analysis.benjamini_hochberg" => self.analysis.benjamini_hochberg = boolean(key, value)?,
            "analysis.topics" => self.topics = boolean(key, value)?,
            "analysis.top_n" => self.top_n = num(key, value)?,
            "grid.spe_dims" => self.grid_spe_dims = list(key, value)?,
            "grid.sle_dims" => self.grid_sle_dims = list(key, value)?,
            "grid.mue_dims" => self.grid_mue_dims = list(key, value)?,
            "synth.users" => s.users = num(key, value)?,
            "synth.classes" => s.classes = num(key, value)?,
            "synth.class_weights" => s.class_weights = list(key, value)?,
            "synth.class_words" => s.class_words = num(key, value)?,
            "synth.background_words" => s.background_words = num(key, value)?,
            "synth.class_likes" => s.class_likes = num(key, value)?,
            "synth.background_likes" => s.background_likes = num(key, value)?,
            "synth.nuisance_topics" => s.nuisance_topics = num(key, value)?,
            "synth.signal" => s.signal = num(key, value)?,
            "synth.post_signal_scale" => s.post_signal_scale = num(key, value)?,
            "synth.like_signal_scale" => s.like_signal_scale = num(key, value)?,
            "synth.posts_per_user" => s.posts_per_user = num(key, value)?,
            "synth.words_per_post" => s.words_per_post = num(key, value)?,
            "synth.likes_per_user" => s.likes_per_user = num(key, value)?,
            "synth.zipf_exponent" => s.zipf_exponent = num(key, value)?,
            _ => return Err(Error::Config(format!("unknown key {key:?}"))),
        }
        Ok(())
    }

    /// Every key with its effective value, sorted by key.
    pub fn pairs(&self) -> BTreeMap<String, String> {
        let mut out = BTreeMap::new();
        let mut put = |k: &str, v: String| {
            out.insert(k.to_string(), v);
        };
        let (s, m, f) = (&self.synth, &self.mue, &self.filter);
        put("seed", self.seed.to_string());
        put("workers", self.workers.to_string());
        put("data.posts", show_path(&self.posts));
        put("data.likes", show_path(&self.likes));
        put("data.labels", show_path(&self.labels));
        put("data.lexicon", show_path(&self.lexicon));
        put("filter.min_words_per_user", f.min_words_per_user.to_string());
        put("filter.min_word_count", f.min_word_count.to_string());
        put("filter.min_likes_per_user", f.min_likes_per_user.to_string());
        put("filter.min_likes_per_le", f.min_likes_per_le.to_string());
        put("filter.fixed_point", f.fixed_point.to_string());
        put(
            "mue.kind",
            match m.kind {
                FusionKind::None => "none",
                FusionKind::Wgcca => "wgcca",
                FusionKind::Dcca => "dcca",
            }
            .into(),
        );
        put(
            "mue.balance",
            match m.balance {
                Balance::Balanced => "balanced",
                Balance::Imbalanced => "imbalanced",
            }
            .into(),
        );
        put("mue.dim", m.dim.to_string());
        put("mue.epsilon", m.epsilon.to_string());
        put("mue.weights", join(&m.weights));
        put("mue.dcca.hidden", join(&m.dcca_hidden));
        put("mue.dcca.epochs", m.dcca_epochs.to_string());
        put("mue.dcca.learning_rate", m.dcca_learning_rate.to_string());
        put("mue.dcca.reg", m.dcca_reg.to_string());
        put("mue.dcca.pretrain_epochs", m.dcca_pretrain_epochs.to_string());
        put("mue.dcca.pretrain_learning_rate", m.dcca_pretrain_learning_rate.to_string());
        put("mue.dcca.noise_rate", m.dcca_noise_rate.to_string());
        put("svm.c", self.svm.c.to_string());
        put("svm.epochs", self.svm.epochs.to_string());
        put("cv.folds", self.folds.to_string());
        put("eval.substances", join(&self.substances));
        put("eval.features", join(&self.features));
        put("eval.unigram_top_k", self.unigram_top_k.to_string());
        put("analysis.alpha", self.analysis.alpha.to_string());
        put("analysis.permutation", self.analysis.permutation.to_string());
        put("analysis.benjamini_hochberg", self.analysis.benjamini_hochberg.to_string());
        put("analysis.topics", self.topics.to_string());
        put("analysis.top_n", self.top_n.to_string());
        put("grid.spe_dims", join(&self.grid_spe_dims));
        put("grid.sle_dims", join(&self.grid_sle_dims));
        put("grid.mue_dims", join(&self.grid_mue_dims));
        put("synth.users", s.users.to_string());
        put("synth.classes", s.classes.to_string());
        put("synth.class_weights", join(&s.class_weights));
        put("synth.class_words", s.class_words.to_string());
        put("synth.background_words", s.background_words.to_string());
        put("synth.class_likes", s.class_likes.to_string());
        put("synth.background_likes", s.background_likes.to_string());
        put("synth.nuisance_topics", s.nuisance_topics.to_string());
        put("synth.signal", s.signal.to_string());
        put("synth.post_signal_scale", s.post_signal_scale.to_string());
        put("synth.like_signal_scale", s.like_signal_scale.to_string());
        put("synth.posts_per_user", s.posts_per_user.to_string());
        put("synth.words_per_post", s.words_per_post.to_string());
        put("synth.likes_per_user", s.likes_per_user.to_string());
        put("synth.zipf_exponent", s.zipf_exponent.to_string());
        drop(put);
        view_pairs("spe", &self.spe, &mut out);
        view_pairs("sle", &self.sle, &mut out);
        out
    }

    pub fn parse(text: &str, source: &Path) -> Result<RunConfig> {
        let mut cfg = RunConfig::default();
        let mut seen = BTreeMap::new();
        for (i, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let at = |m: String| Error::Config(format!("{}:{}: {m}", source.display(), i + 1));
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| at(format!("expected key = value, got {line:?}")))?;
            let key = key.trim();
            if let Some(prev) = seen.insert(key.to_string(), i + 1) {
                return Err(at(format!("{key} already set on line {prev}")));
            }
            cfg.set(key, value).map_err(|e| at(e.to_string()))?;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<RunConfig> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        RunConfig::parse(&text, path)
    }

    /// The canonical text form; parsing it gives back the same config.
    pub fn to_text(&self) -> String {
        self.pairs().iter().map(|(k, v)| format!("{k} = {v}\n")).collect()
    }

    /// First 8 hex digits of the SHA-256 of [`RunConfig::to_text`].
    pub fn hash8(&self) -> String {
        hex::encode(Sha256::digest(self.to_text().as_bytes()))[..8].to_string()
    }

    pub fn validate(&self) -> Result<()> {
        let err = |m: String| Err(Error::Config(m));
        if self.workers == 0 {
            return err("workers must be at least 1".into());
        }
        self.spe.validate().map_err(|e| Error::Config(format!("spe: {e}")))?;
        self.sle.validate().map_err(|e| Error::Config(format!("sle: {e}")))?;
        for (name, dims, grid) in [
            ("grid.spe_dims", &self.grid_spe_dims, &SINGLE_VIEW_DIMS[..]),
            ("grid.sle_dims", &self.grid_sle_dims, &SINGLE_VIEW_DIMS[..]),
            ("grid.mue_dims", &self.grid_mue_dims, &MUE_DIMS[..]),
        ] {
            if let Some(d) = dims.iter().find(|d| !grid.contains(d)) {
                return err(format!("{name}: {d} is not in {grid:?}"));
            }
        }
        let m = &self.mue;
        if !MUE_DIMS.contains(&m.dim) {
            return err(format!("mue.dim {} is not in {MUE_DIMS:?}", m.dim));
        }
        if m.balance == Balance::Imbalanced && (self.spe.dim, self.sle.dim) != IMBALANCED_DIMS {
            return err(format!(
                "imbalanced fusion needs spe.dim = {} and sle.dim = {}",
                IMBALANCED_DIMS.0, IMBALANCED_DIMS.1
            ));
        }
        if m.balance == Balance::Balanced && self.spe.dim != self.sle.dim && m.kind != FusionKind::None {
            return err(format!("balanced fusion needs spe.dim = sle.dim, got {} and {}", self.spe.dim, self.sle.dim));
        }
        if m.weights.len() != 2 || m.weights.iter().any(|w| !(*w > 0.0)) {
            return err("mue.weights must be two positive numbers".into());
        }
        if !(m.epsilon >= 0.0) {
            return err("mue.epsilon must be nonnegative".into());
        }
        if m.kind == FusionKind::Dcca {
            m.dcca_config(0).arch.validate().map_err(|e| Error::Config(format!("mue.dcca: {e}")))?;
        }
        if self.folds < 2 {
            return err("cv.folds must be at least 2".into());
        }
        if self.substances.is_empty() || self.features.is_empty() {
            return err("eval.substances and eval.features must not be empty".into());
        }
        if self.unigram_top_k == 0 || self.top_n == 0 {
            return err("eval.unigram_top_k and analysis.top_n must be positive".into());
        }
        if !(self.svm.c > 0.0) || self.svm.epochs == 0 {
            return err("svm.c and svm.epochs must be positive".into());
        }
        if !(self.analysis.alpha > 0.0 && self.analysis.alpha < 1.0) {
            return err("analysis.alpha must lie in (0, 1)".into());
        }
        self.synth.validate().map_err(|e| Error::Config(e.to_string()))
    }

    /// Paths the config refers to that do not exist.
    pub fn missing_paths(&self) -> Vec<PathBuf> {
        [&self.posts, &self.likes, &self.labels, &self.lexicon]
            .into_iter()
            .flatten()
            .filter(|p| !p.exists())
            .cloned()
            .collect()
    }

    /// View spec with its seed and worker count derived from the run.
    pub fn view(&self, kind: ViewKind, dim: usize) -> ViewSpec {
        let (base, tag) = match kind {
            ViewKind::Posts => (&self.spe, "spe"),
            ViewKind::Likes => (&self.sle, "sle"),
        };
        ViewSpec {
            dim,
            seed: derive_seed(self.seed, tag),
            workers: self.workers,
            ..base.clone()
        }
    }

    pub fn cv(&self) -> CvConfig {
        CvConfig {
            folds: self.folds,
            seed: derive_seed(self.seed, "cv"),
            svm: self.svm.clone(),
            workers: self.workers,
        }
    }
}
