//! Named single-view pipelines: post embeddings (SPE) and like embeddings (SLE).

use std::collections::HashMap;
use std::fmt;

use nalgebra::DMatrix;
use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::corpus::{build_like_matrix, build_matrices, CountMatrix, LikeTable, PostTable, UserId, Vocabulary};
use crate::embedders::{
    ae_embed, ae_fit, lda_fit, pv_fit, svd_embed, svd_fit, AeConfig, EmbeddingMatrix, LdaConfig, LdaModel,
    Provenance, PvConfig, PvMode,
};
use crate::rng::{derive_seed, seeded};
use crate::{Error, Result};

/// Output dimensions searched for single views.
pub const SINGLE_VIEW_DIMS: [usize; 4] = [50, 100, 300, 500];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ViewKind {
    Posts,
    Likes,
}

impl ViewKind {
    /// Artifact prefix: `spe` or `sle`.
    pub fn prefix(self) -> &'static str {
        match self {
            ViewKind::Posts => "spe",
            ViewKind::Likes => "sle",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Method {
    Svd,
    UserLda,
    PostLdaDoc,
    PostLdaWord,
    UserDm,
    PostDm,
    UserDbow,
    PostDbow,
    Ae,
}

impl Method {
    pub const POSTS: [Method; 8] = [
        Method::Svd,
        Method::UserLda,
        Method::PostLdaDoc,
        Method::PostLdaWord,
        Method::UserDm,
        Method::PostDm,
        Method::UserDbow,
        Method::PostDbow,
    ];
    pub const LIKES: [Method; 5] = [Method::Svd, Method::UserLda, Method::Ae, Method::UserDm, Method::UserDbow];

    pub fn valid_for(self, view: ViewKind) -> bool {
        match view {
            ViewKind::Posts => Self::POSTS.contains(&self),
            ViewKind::Likes => Self::LIKES.contains(&self),
        }
    }

    /// Display name within a view; likes have one document per user, so the
    /// `User-` prefix is dropped there.
    pub fn name(self, view: ViewKind) -> &'static str {
        match (self, view) {
            (Method::Svd, _) => "SVD",
            (Method::UserLda, ViewKind::Posts) => "UserLDA",
            (Method::UserLda, ViewKind::Likes) => "LDA",
            (Method::PostLdaDoc, _) => "PostLDA_Doc",
            (Method::PostLdaWord, _) => "PostLDA_Word",
            (Method::UserDm, ViewKind::Posts) => "User-D-DM",
            (Method::UserDm, ViewKind::Likes) => "D-DM",
            (Method::PostDm, _) => "Post-D-DM",
            (Method::UserDbow, ViewKind::Posts) => "User-D-DBOW",
            (Method::UserDbow, ViewKind::Likes) => "D-DBOW",
            (Method::PostDbow, _) => "Post-D-DBOW",
            (Method::Ae, _) => "AE",
        }
    }

    /// Accepts the display names of either view.
    pub fn parse(view: ViewKind, s: &str) -> Result<Method> {
        let m = match s {
            "SVD" => Method::Svd,
            "UserLDA" | "LDA" => Method::UserLda,
            "PostLDA_Doc" => Method::PostLdaDoc,
            "PostLDA_Word" => Method::PostLdaWord,
            "User-D-DM" | "D-DM" => Method::UserDm,
            "Post-D-DM" => Method::PostDm,
            "User-D-DBOW" | "D-DBOW" => Method::UserDbow,
            "Post-D-DBOW" => Method::PostDbow,
            "AE" => Method::Ae,
            other => return Err(Error::invalid(format!("unknown method {other:?}"))),
        };
        if !m.valid_for(view) {
            return Err(Error::invalid(format!("method {s} is not available for {view:?}")));
        }
        Ok(m)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LdaSettings {
    /// `None`: 0.3 for post-level LDA, `50 / K` otherwise.
    pub alpha: Option<f64>,
    pub beta: f64,
    pub iterations: usize,
}

impl Default for LdaSettings {
    fn default() -> Self {
        LdaSettings {
            alpha: None,
            beta: 0.01,
            iterations: 200,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PvSettings {
    /// `None`: 5 for posts, 20 for likes.
    pub window: Option<usize>,
    pub negative: usize,
    pub epochs: usize,
    pub learning_rate: f64,
    pub min_learning_rate: f64,
    pub concat: bool,
}

impl Default for PvSettings {
    fn default() -> Self {
        let d = PvConfig::new(PvMode::Dbow, 1);
        PvSettings {
            window: None,
            negative: d.negative,
            epochs: d.epochs,
            learning_rate: d.learning_rate,
            min_learning_rate: d.min_learning_rate,
            concat: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AeSettings {
    pub epochs: usize,
    pub learning_rate: f64,
    pub batch_size: Option<usize>,
}

impl Default for AeSettings {
    fn default() -> Self {
        let d = AeConfig::new(1);
        AeSettings {
            epochs: d.epochs,
            learning_rate: d.learning_rate,
            batch_size: d.batch_size,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ViewSpec {
    pub view: ViewKind,
    pub method: Method,
    pub dim: usize,
    pub seed: u64,
    pub lda: LdaSettings,
    pub pv: PvSettings,
    pub ae: AeSettings,
    /// Weight post vectors by token count when averaging per user.
    pub weighted_average: bool,
    pub workers: usize,
}

impl ViewSpec {
    pub fn new(view: ViewKind, method: Method, dim: usize) -> Result<Self> {
        let spec = ViewSpec {
            view,
            method,
            dim,
            seed: 0,
            lda: LdaSettings::default(),
            pv: PvSettings::default(),
            ae: AeSettings::default(),
            weighted_average: false,
            workers: 1,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if !self.method.valid_for(self.view) {
            return Err(Error::invalid(format!(
                "method {:?} is not available for {:?}",
                self.method, self.view
            )));
        }
        if !SINGLE_VIEW_DIMS.contains(&self.dim) {
            return Err(Error::invalid(format!(
                "dimension {} is not in {SINGLE_VIEW_DIMS:?}",
                self.dim
            )));
        }
        Ok(())
    }

    pub fn name(&self) -> &'static str {
        self.method.name(self.view)
    }

    /// `spe.User-D-DBOW`, `sle.SVD`, ...
    pub fn learner(&self) -> String {
        format!("{}.{}", self.view.prefix(), self.name())
    }

    fn lda_config(&self) -> LdaConfig {
        let post_level = matches!(self.method, Method::PostLdaDoc | Method::PostLdaWord);
        LdaConfig {
            alpha: self.lda.alpha.or(post_level.then_some(0.3)),
            beta: self.lda.beta,
            iterations: self.lda.iterations,
            seed: derive_seed(self.seed, "lda"),
            workers: self.workers,
            ..LdaConfig::new(self.dim)
        }
    }

    pub fn pv_config(&self) -> PvConfig {
        let mode = match self.method {
            Method::UserDm | Method::PostDm => PvMode::Dm,
            _ => PvMode::Dbow,
        };
        let default_window = match self.view {
            ViewKind::Posts => 5,
            ViewKind::Likes => 20,
        };
        PvConfig {
            window: self.pv.window.unwrap_or(default_window),
            negative: self.pv.negative,
            epochs: self.pv.epochs,
            learning_rate: self.pv.learning_rate,
            min_learning_rate: self.pv.min_learning_rate,
            concat: self.pv.concat,
            seed: derive_seed(self.seed, "pv"),
            workers: self.workers,
            ..PvConfig::new(mode, self.dim)
        }
    }

    fn ae_config(&self) -> AeConfig {
        AeConfig {
            epochs: self.ae.epochs,
            learning_rate: self.ae.learning_rate,
            batch_size: self.ae.batch_size,
            seed: derive_seed(self.seed, "ae"),
            ..AeConfig::new(self.dim)
        }
    }

    fn provenance(&self) -> Provenance {
        let mut p = Provenance::new(self.learner(), self.dim, Some(self.seed)).with("workers", self.workers);
        match self.method {
            Method::Svd => {}
            Method::UserLda | Method::PostLdaDoc | Method::PostLdaWord => {
                let c = self.lda_config();
                p = p
                    .with("alpha", c.alpha())
                    .with("beta", c.beta)
                    .with("iterations", c.iterations);
            }
            Method::UserDm | Method::PostDm | Method::UserDbow | Method::PostDbow => {
                let c = self.pv_config();
                p = p
                    .with("window", c.window)
                    .with("negative", c.negative)
                    .with("epochs", c.epochs)
                    .with("learning_rate", c.learning_rate)
                    .with("min_learning_rate", c.min_learning_rate)
                    .with("concat", c.concat);
            }
            Method::Ae => {
                let c = self.ae_config();
                p = p
                    .with("epochs", c.epochs)
                    .with("learning_rate", c.learning_rate)
                    .with("batch_size", c.batch_size);
            }
        }
        if matches!(self.method, Method::PostLdaDoc | Method::PostDm | Method::PostDbow) {
            p = p.with("weighted_average", self.weighted_average);
        }
        p
    }
}

impl fmt::Display for ViewSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}-{}", self.learner(), self.dim)
    }
}

/// One token sequence per user, users sorted.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct UserDocuments {
    pub users: Vec<UserId>,
    pub docs: Vec<Vec<String>>,
}

/// Concatenates each user's posts in post order.
pub fn build_user_documents(posts: &PostTable) -> Result<UserDocuments> {
    if posts.is_empty() {
        return Err(Error::EmptyCorpus("no posts".into()));
    }
    let (users, docs) = posts
        .by_user()
        .into_iter()
        .map(|(u, ps)| (u.clone(), ps.iter().flat_map(|p| p.tokens.iter().cloned()).collect()))
        .unzip();
    Ok(UserDocuments { users, docs })
}

/// Each user's like entities in a seeded random order.
pub fn build_like_documents(likes: &LikeTable, seed: u64) -> Result<UserDocuments> {
    if likes.is_empty() {
        return Err(Error::EmptyCorpus("no likes".into()));
    }
    let mut rng = seeded(seed);
    let (users, docs) = likes
        .by_user()
        .into_iter()
        .map(|(u, les)| {
            let mut doc: Vec<String> = les.iter().map(|s| s.to_string()).collect();
            doc.shuffle(&mut rng);
            (u.clone(), doc)
        })
        .unzip();
    Ok(UserDocuments { users, docs })
}

/// Input of [`embed_view`].
#[derive(Debug, Clone, Copy)]
pub enum ViewData<'a> {
    Posts { posts: &'a PostTable, vocab: &'a Vocabulary },
    Likes(&'a LikeTable),
}

/// Posts encoded against `vocab`, with the owning user row of each post.
struct PostDocs {
    users: Vec<UserId>,
    docs: Vec<Vec<usize>>,
    owner: Vec<usize>,
}

fn post_docs(posts: &PostTable, vocab: &Vocabulary) -> PostDocs {
    let mut users = Vec::new();
    let mut docs = Vec::new();
    let mut owner = Vec::new();
    for (row, (u, ps)) in posts.by_user().into_iter().enumerate() {
        users.push(u.clone());
        for p in ps {
            docs.push(vocab.encode(&p.tokens));
            owner.push(row);
        }
    }
    PostDocs { users, docs, owner }
}

/// Mean of the rows of `vectors` per group. Rows with zero weight are
/// skipped; a group with no weight gets `fallback` and is reported.
pub(crate) fn average_by_group(
    vectors: &DMatrix<f64>,
    owner: &[usize],
    weights: &[f64],
    groups: usize,
    fallback: &[f64],
) -> (DMatrix<f64>, Vec<usize>) {
    let dim = vectors.ncols();
    let mut sum = DMatrix::zeros(groups, dim);
    let mut total = vec![0.0; groups];
    for (r, (&g, &w)) in owner.iter().zip(weights).enumerate() {
        if w > 0.0 {
            for j in 0..dim {
                sum[(g, j)] += w * vectors[(r, j)];
            }
            total[g] += w;
        }
    }
    let mut empty = Vec::new();
    for g in 0..groups {
        if total[g] > 0.0 {
            for j in 0..dim {
                sum[(g, j)] /= total[g];
            }
        } else {
            empty.push(g);
            for j in 0..dim {
                sum[(g, j)] = fallback[j];
            }
        }
    }
    (sum, empty)
}

/// Fits LDA on the non-empty documents; empty ones get a uniform topic row.
fn lda_on_docs(docs: &[Vec<usize>], vocab_size: usize, cfg: &LdaConfig) -> Result<(LdaModel, DMatrix<f64>, Vec<usize>)> {
    let keep: Vec<usize> = (0..docs.len()).filter(|&d| !docs[d].is_empty()).collect();
    let fit_docs: Vec<Vec<usize>> = keep.iter().map(|&d| docs[d].clone()).collect();
    let model = lda_fit(&fit_docs, vocab_size, cfg)?;
    let k = cfg.k;
    let mut theta = DMatrix::from_element(docs.len(), k, 1.0 / k as f64);
    for (i, &d) in keep.iter().enumerate() {
        theta.set_row(d, &model.theta.row(i));
    }
    let empty = (0..docs.len()).filter(|d| docs[*d].is_empty()).collect();
    Ok((model, theta, empty))
}

fn user_list(users: &[UserId], rows: &[usize]) -> String {
    rows.iter().map(|&r| users[r].as_str()).collect::<Vec<_>>().join(",")
}

/// Runs the pipeline named by `spec`. Rows follow the sorted user index of
/// the input table.
pub fn embed_view(spec: &ViewSpec, data: ViewData<'_>) -> Result<EmbeddingMatrix> {
    spec.validate()?;
    let mut prov = spec.provenance();
    let (users, matrix) = match (spec.view, data) {
        (ViewKind::Posts, ViewData::Posts { posts, vocab }) => embed_posts(spec, posts, vocab, &mut prov)?,
        (ViewKind::Likes, ViewData::Likes(likes)) => embed_likes(spec, likes, &mut prov)?,
        _ => return Err(Error::invalid(format!("{} does not accept this input", spec.learner()))),
    };
    log::info!("{spec}: {} users", users.len());
    EmbeddingMatrix::new(users, matrix, prov)
}

fn embed_posts(
    spec: &ViewSpec,
    posts: &PostTable,
    vocab: &Vocabulary,
    prov: &mut Provenance,
) -> Result<(Vec<UserId>, DMatrix<f64>)> {
    if posts.is_empty() {
        return Err(Error::EmptyCorpus("no posts".into()));
    }
    let v = vocab.len();
    match spec.method {
        Method::Svd => {
            let counts = build_matrices(posts, vocab);
            let f = svd_fit(&counts.matrix, spec.dim)?;
            let e = svd_embed(&f, counts.users)?;
            let (users, data, p) = e.into_parts();
            prov.params.extend(p.params);
            Ok((users, data))
        }
        Method::UserLda | Method::UserDm | Method::UserDbow => {
            let ud = build_user_documents(posts)?;
            let docs: Vec<Vec<usize>> = ud.docs.iter().map(|d| vocab.encode(d)).collect();
            user_level(spec, &ud.users, &docs, v, prov)
        }
        Method::PostLdaDoc | Method::PostDm | Method::PostDbow => {
            let pd = post_docs(posts, vocab);
            let (vectors, fallback) = if spec.method == Method::PostLdaDoc {
                let (_, theta, _) = lda_on_docs(&pd.docs, v, &spec.lda_config())?;
                (theta, vec![1.0 / spec.dim as f64; spec.dim])
            } else {
                (pv_fit(&pd.docs, v, &spec.pv_config())?.doc_vectors, vec![0.0; spec.dim])
            };
            let weights: Vec<f64> = pd
                .docs
                .iter()
                .map(|d| match (d.is_empty(), spec.weighted_average) {
                    (true, _) => 0.0,
                    (false, true) => d.len() as f64,
                    (false, false) => 1.0,
                })
                .collect();
            let (m, empty) = average_by_group(&vectors, &pd.owner, &weights, pd.users.len(), &fallback);
            if !empty.is_empty() {
                prov.warnings.push(format!("users without in-vocabulary posts: {}", user_list(&pd.users, &empty)));
            }
            Ok((pd.users, m))
        }
        Method::PostLdaWord => {
            let pd = post_docs(posts, vocab);
            let (model, _, _) = lda_on_docs(&pd.docs, v, &spec.lda_config())?;
            let counts = build_matrices(posts, vocab);
            let e = aggregate_postlda_word(&model, &counts)?;
            let (users, data, p) = e.into_parts();
            prov.warnings.extend(p.warnings);
            Ok((users, data))
        }
        Method::Ae => Err(Error::invalid("the autoencoder applies to likes only")),
    }
}

fn user_level(
    spec: &ViewSpec,
    users: &[UserId],
    docs: &[Vec<usize>],
    vocab_size: usize,
    prov: &mut Provenance,
) -> Result<(Vec<UserId>, DMatrix<f64>)> {
    let m = if spec.method == Method::UserLda {
        let (_, theta, empty) = lda_on_docs(docs, vocab_size, &spec.lda_config())?;
        if !empty.is_empty() {
            prov.warnings.push(format!("users with empty documents: {}", user_list(users, &empty)));
        }
        theta
    } else {
        pv_fit(docs, vocab_size, &spec.pv_config())?.doc_vectors
    };
    Ok((users.to_vec(), m))
}

fn embed_likes(spec: &ViewSpec, likes: &LikeTable, prov: &mut Provenance) -> Result<(Vec<UserId>, DMatrix<f64>)> {
    if likes.is_empty() {
        return Err(Error::EmptyCorpus("no likes".into()));
    }
    match spec.method {
        Method::Svd | Method::Ae => {
            let lm = build_like_matrix(likes);
            let e = if spec.method == Method::Svd {
                svd_embed(&svd_fit(&lm.matrix, spec.dim)?, lm.users)?
            } else {
                ae_embed(&ae_fit(&lm.matrix, &spec.ae_config())?, &lm.matrix, lm.users)?
            };
            let (users, data, p) = e.into_parts();
            prov.params.extend(p.params);
            Ok((users, data))
        }
        Method::UserLda | Method::UserDm | Method::UserDbow => {
            let entities = likes.entities();
            let index: HashMap<&str, usize> = entities.iter().enumerate().map(|(i, e)| (e.as_str(), i)).collect();
            let ld = build_like_documents(likes, derive_seed(spec.seed, "like-order"))?;
            let docs: Vec<Vec<usize>> = ld.docs.iter().map(|d| d.iter().map(|e| index[e.as_str()]).collect()).collect();
            user_level(spec, &ld.users, &docs, entities.len(), prov)
        }
        _ => Err(Error::invalid(format!("{:?} applies to posts only", spec.method))),
    }
}

/// The fitted model behind a post-view `UserLDA` embedding, for topic
/// reporting, together with the embedding itself.
pub fn user_topic_model(spec: &ViewSpec, posts: &PostTable, vocab: &Vocabulary) -> Result<(LdaModel, EmbeddingMatrix)> {
    spec.validate()?;
    if spec.view != ViewKind::Posts || spec.method != Method::UserLda {
        return Err(Error::invalid(format!("{} is not a post-view UserLDA pipeline", spec.learner())));
    }
    let ud = build_user_documents(posts)?;
    let docs: Vec<Vec<usize>> = ud.docs.iter().map(|d| vocab.encode(d)).collect();
    let (model, theta, empty) = lda_on_docs(&docs, vocab.len(), &spec.lda_config())?;
    let mut prov = spec.provenance();
    if !empty.is_empty() {
        prov.warnings.push(format!("users with empty documents: {}", user_list(&ud.users, &empty)));
    }
    Ok((model, EmbeddingMatrix::new(ud.users, theta, prov)?))
}

/// `p(topic | user) = Σ_w P(topic | w) · p(w | user)`, with `P(topic | w)`
/// from Bayes' rule on `phi` and the corpus topic shares.
pub fn aggregate_postlda_word(model: &LdaModel, counts: &CountMatrix) -> Result<EmbeddingMatrix> {
    let v = counts.matrix.ncols();
    if v != model.vocab_size() {
        return Err(Error::DimensionMismatch(format!(
            "model vocabulary {} vs count columns {v}",
            model.vocab_size()
        )));
    }
    let k = model.k;
    let topic_given_word: Vec<_> = (0..v).map(|w| model.topic_given_word(w)).collect();
    let mut out = DMatrix::zeros(counts.users.len(), k);
    let mut empty = Vec::new();
    for r in 0..counts.users.len() {
        let total = counts.matrix.row_sum(r);
        if total <= 0.0 {
            empty.push(r);
            out.row_mut(r).fill(1.0 / k as f64);
            continue;
        }
        for (w, c) in counts.matrix.row(r) {
            let p_w = c / total;
            for t in 0..k {
                out[(r, t)] += topic_given_word[w][t] * p_w;
            }
        }
    }
    let mut prov = Provenance::new("spe.PostLDA_Word", k, None);
    if !empty.is_empty() {
        prov.warnings.push(format!("users with zero counts: {}", user_list(&counts.users, &empty)));
    }
    EmbeddingMatrix::new(counts.users.clone(), out, prov)
}
