//! Posts, likes and substance-use labels: ingestion, frequency filtering,
//! vocabularies, sparse user matrices and user-set intersection.

mod io;
mod synth;

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::linalg::CsrMatrix;
use crate::{Error, Result};

pub use io::{
    ingest_labels, ingest_likes, ingest_posts, read_vocabulary, write_labels, write_likes,
    write_posts, write_vocabulary,
};
pub use synth::{synth_generate, SynthCorpus, SynthSpec};

/// Tokens longer than this (in chars) are dropped.
pub const MAX_TOKEN_CHARS: usize = 50;

/// Lowercases, splits on runs of non-alphanumeric characters and drops overlong tokens.
pub fn tokenize(text: &str) -> Vec<String> {
    text.to_lowercase()
        .split(|c: char| !c.is_alphanumeric())
        .filter(|t| !t.is_empty() && t.chars().count() <= MAX_TOKEN_CHARS)
        .map(str::to_owned)
        .collect()
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct UserId(String);

impl UserId {
    pub fn new(id: impl Into<String>) -> Result<Self> {
        let id = id.into();
        if id.is_empty() {
            return Err(Error::invalid("user id must be non-empty"));
        }
        Ok(UserId(id))
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl TryFrom<String> for UserId {
    type Error = Error;
    fn try_from(s: String) -> Result<Self> {
        UserId::new(s)
    }
}

impl From<UserId> for String {
    fn from(u: UserId) -> String {
        u.0
    }
}

impl fmt::Display for UserId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Post {
    pub user: UserId,
    pub post_id: String,
    pub tokens: Vec<String>,
}

/// Posts in ingestion order.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct PostTable {
    posts: Vec<Post>,
}

impl PostTable {
    pub fn new(posts: Vec<Post>) -> Self {
        PostTable { posts }
    }

    pub fn posts(&self) -> &[Post] {
        &self.posts
    }

    pub fn len(&self) -> usize {
        self.posts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.posts.is_empty()
    }

    /// Distinct users, sorted. This is the row order of every per-user output.
    pub fn users(&self) -> Vec<UserId> {
        self.by_user().into_keys().cloned().collect()
    }

    /// Each user's posts in ingestion order.
    pub fn by_user(&self) -> BTreeMap<&UserId, Vec<&Post>> {
        let mut m: BTreeMap<&UserId, Vec<&Post>> = BTreeMap::new();
        for p in &self.posts {
            m.entry(&p.user).or_default().push(p);
        }
        m
    }

    pub fn total_tokens(&self) -> usize {
        self.posts.iter().map(|p| p.tokens.len()).sum()
    }
}

/// Unique `(user, like entity)` pairs in ingestion order.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct LikeTable {
    pairs: Vec<(UserId, String)>,
}

impl LikeTable {
    /// Drops repeated pairs, keeping the first occurrence.
    pub fn new(pairs: Vec<(UserId, String)>) -> Self {
        let mut seen = BTreeSet::new();
        let pairs = pairs
            .into_iter()
            .filter(|(u, le)| seen.insert((u.clone(), le.clone())))
            .collect();
        LikeTable { pairs }
    }

    pub fn pairs(&self) -> &[(UserId, String)] {
        &self.pairs
    }

    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    pub fn users(&self) -> Vec<UserId> {
        self.by_user().into_keys().cloned().collect()
    }

    /// Distinct like entities, sorted. This is the column order of [`LikeMatrix`].
    pub fn entities(&self) -> Vec<String> {
        self.pairs
            .iter()
            .map(|(_, le)| le.clone())
            .collect::<BTreeSet<_>>()
            .into_iter()
            .collect()
    }

    pub fn by_user(&self) -> BTreeMap<&UserId, Vec<&str>> {
        let mut m: BTreeMap<&UserId, Vec<&str>> = BTreeMap::new();
        for (u, le) in &self.pairs {
            m.entry(u).or_default().push(le.as_str());
        }
        m
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Substance {
    Tobacco,
    Alcohol,
    Drug,
}

impl Substance {
    pub const ALL: [Substance; 3] = [Substance::Tobacco, Substance::Alcohol, Substance::Drug];

    pub fn name(self) -> &'static str {
        match self {
            Substance::Tobacco => "tobacco",
            Substance::Alcohol => "alcohol",
            Substance::Drug => "drug",
        }
    }
}

impl std::str::FromStr for Substance {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "tobacco" => Ok(Substance::Tobacco),
            "alcohol" => Ok(Substance::Alcohol),
            "drug" => Ok(Substance::Drug),
            other => Err(Error::invalid(format!("unknown substance {other:?}"))),
        }
    }
}

impl fmt::Display for Substance {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Ordinal use group per substance: 1 = never, 2 = occasional, 3 = frequent.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SudRecord {
    pub tobacco: Option<u8>,
    pub alcohol: Option<u8>,
    pub drug: Option<u8>,
}

impl SudRecord {
    pub fn new(tobacco: Option<u8>, alcohol: Option<u8>, drug: Option<u8>) -> Result<Self> {
        for v in [tobacco, alcohol, drug].into_iter().flatten() {
            if !(1..=3).contains(&v) {
                return Err(Error::invalid(format!("label {v} not in {{1,2,3}}")));
            }
        }
        if tobacco.is_none() && alcohol.is_none() && drug.is_none() {
            return Err(Error::invalid("record has no substance label"));
        }
        Ok(SudRecord {
            tobacco,
            alcohol,
            drug,
        })
    }

    pub fn get(&self, s: Substance) -> Option<u8> {
        match s {
            Substance::Tobacco => self.tobacco,
            Substance::Alcohol => self.alcohol,
            Substance::Drug => self.drug,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct SudLabels {
    records: BTreeMap<UserId, SudRecord>,
}

impl SudLabels {
    pub fn new(records: BTreeMap<UserId, SudRecord>) -> Self {
        SudLabels { records }
    }

    pub fn records(&self) -> &BTreeMap<UserId, SudRecord> {
        &self.records
    }

    pub fn get(&self, user: &UserId, s: Substance) -> Option<u8> {
        self.records.get(user).and_then(|r| r.get(s))
    }

    pub fn users(&self) -> Vec<UserId> {
        self.records.keys().cloned().collect()
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    /// Labels for `users` in order, `None` where absent.
    pub fn aligned(&self, users: &[UserId], s: Substance) -> Vec<Option<u8>> {
        users.iter().map(|u| self.get(u, s)).collect()
    }
}

/// Token → dense index, ordered by descending corpus count then token.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Vocabulary {
    tokens: Vec<String>,
    counts: Vec<u64>,
    index: HashMap<String, usize>,
}

impl Vocabulary {
    pub fn from_counts(counts: impl IntoIterator<Item = (String, u64)>) -> Self {
        let mut entries: Vec<(String, u64)> = counts.into_iter().collect();
        entries.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
        let index = entries
            .iter()
            .enumerate()
            .map(|(i, (t, _))| (t.clone(), i))
            .collect();
        let (tokens, counts) = entries.into_iter().unzip();
        Vocabulary {
            tokens,
            counts,
            index,
        }
    }

    /// Counts every token of `posts`.
    pub fn build(posts: &PostTable) -> Self {
        Self::from_counts(token_counts(posts))
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn index_of(&self, token: &str) -> Option<usize> {
        self.index.get(token).copied()
    }

    pub fn token(&self, i: usize) -> &str {
        &self.tokens[i]
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }

    pub fn count(&self, i: usize) -> u64 {
        self.counts[i]
    }

    pub fn counts(&self) -> &[u64] {
        &self.counts
    }

    /// Maps tokens to indices, skipping out-of-vocabulary tokens.
    pub fn encode<'a>(&self, tokens: impl IntoIterator<Item = &'a String>) -> Vec<usize> {
        tokens.into_iter().filter_map(|t| self.index_of(t)).collect()
    }
}

fn token_counts(posts: &PostTable) -> HashMap<String, u64> {
    let mut counts: HashMap<String, u64> = HashMap::new();
    for p in posts.posts() {
        for t in &p.tokens {
            *counts.entry(t.clone()).or_default() += 1;
        }
    }
    counts
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct FilterConfig {
    pub min_words_per_user: usize,
    pub min_word_count: usize,
    pub min_likes_per_user: usize,
    pub min_likes_per_le: usize,
    /// Repeat the filters until nothing changes instead of one pass each.
    pub fixed_point: bool,
}

impl Default for FilterConfig {
    fn default() -> Self {
        FilterConfig {
            min_words_per_user: 500,
            min_word_count: 50,
            min_likes_per_user: 50,
            min_likes_per_le: 800,
            fixed_point: false,
        }
    }
}

impl FilterConfig {
    pub fn none() -> Self {
        FilterConfig {
            min_words_per_user: 0,
            min_word_count: 0,
            min_likes_per_user: 0,
            min_likes_per_le: 0,
            fixed_point: false,
        }
    }
}

/// Drops users with fewer than `min_words_per_user` tokens, then drops tokens
/// whose count over the remaining users is below `min_word_count`.
///
/// Posts left without tokens are kept so that every retained user keeps its posts.
pub fn filter_posts(t: &PostTable, cfg: &FilterConfig) -> Result<(PostTable, Vocabulary)> {
    let mut current = t.clone();
    loop {
        let next = filter_posts_once(&current, cfg);
        let done = !cfg.fixed_point || next == current;
        current = next;
        if done {
            break;
        }
    }
    if current.is_empty() {
        return Err(Error::EmptyCorpus("no user passes the word-count filter".into()));
    }
    let vocab = Vocabulary::build(&current);
    if vocab.is_empty() {
        return Err(Error::EmptyCorpus("no token passes the frequency filter".into()));
    }
    Ok((current, vocab))
}

fn filter_posts_once(t: &PostTable, cfg: &FilterConfig) -> PostTable {
    let mut words_per_user: HashMap<&UserId, usize> = HashMap::new();
    for p in t.posts() {
        *words_per_user.entry(&p.user).or_default() += p.tokens.len();
    }
    let kept_users: PostTable = PostTable::new(
        t.posts()
            .iter()
            .filter(|p| words_per_user[&p.user] >= cfg.min_words_per_user)
            .cloned()
            .collect(),
    );
    let counts = token_counts(&kept_users);
    let min = cfg.min_word_count as u64;
    PostTable::new(
        kept_users
            .posts
            .into_iter()
            .map(|mut p| {
                p.tokens.retain(|tok| counts[tok] >= min);
                p
            })
            .collect(),
    )
}

/// Drops like entities with fewer than `min_likes_per_le` likers, then users
/// with fewer than `min_likes_per_user` remaining likes.
pub fn filter_likes(t: &LikeTable, cfg: &FilterConfig) -> Result<LikeTable> {
    let mut current = t.clone();
    loop {
        let next = filter_likes_once(&current, cfg);
        let done = !cfg.fixed_point || next == current;
        current = next;
        if done {
            break;
        }
    }
    if current.is_empty() {
        return Err(Error::EmptyCorpus("no like survives the like filters".into()));
    }
    Ok(current)
}

fn filter_likes_once(t: &LikeTable, cfg: &FilterConfig) -> LikeTable {
    let mut likers: HashMap<&str, usize> = HashMap::new();
    for (_, le) in t.pairs() {
        *likers.entry(le.as_str()).or_default() += 1;
    }
    let le_kept: Vec<&(UserId, String)> = t
        .pairs()
        .iter()
        .filter(|(_, le)| likers[le.as_str()] >= cfg.min_likes_per_le)
        .collect();
    let mut per_user: HashMap<&UserId, usize> = HashMap::new();
    for (u, _) in &le_kept {
        *per_user.entry(u).or_default() += 1;
    }
    LikeTable {
        pairs: le_kept
            .into_iter()
            .filter(|(u, _)| per_user[u] >= cfg.min_likes_per_user)
            .cloned()
            .collect(),
    }
}

/// User × vocabulary occurrence counts.
#[derive(Debug, Clone, PartialEq)]
pub struct CountMatrix {
    pub users: Vec<UserId>,
    pub matrix: CsrMatrix,
}

/// Binary user × like-entity matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct LikeMatrix {
    pub users: Vec<UserId>,
    pub entities: Vec<String>,
    pub matrix: CsrMatrix,
}

/// Rows follow [`PostTable::users`]; tokens outside `vocab` are skipped.
pub fn build_matrices(posts: &PostTable, vocab: &Vocabulary) -> CountMatrix {
    let by_user = posts.by_user();
    let users: Vec<UserId> = by_user.keys().map(|u| (*u).clone()).collect();
    let rows = by_user
        .values()
        .map(|ps| {
            ps.iter()
                .flat_map(|p| p.tokens.iter())
                .filter_map(|t| vocab.index_of(t))
                .map(|i| (i, 1.0))
                .collect()
        })
        .collect();
    CountMatrix {
        users,
        matrix: CsrMatrix::from_rows(vocab.len(), rows),
    }
}

/// Rows follow [`LikeTable::users`], columns follow [`LikeTable::entities`].
pub fn build_like_matrix(likes: &LikeTable) -> LikeMatrix {
    let entities = likes.entities();
    let col: HashMap<&str, usize> = entities
        .iter()
        .enumerate()
        .map(|(i, e)| (e.as_str(), i))
        .collect();
    let by_user = likes.by_user();
    let users = by_user.keys().map(|u| (*u).clone()).collect();
    let rows = by_user
        .values()
        .map(|les| les.iter().map(|le| (col[le], 1.0)).collect())
        .collect();
    LikeMatrix {
        users,
        matrix: CsrMatrix::from_rows(entities.len(), rows),
        entities,
    }
}

/// Users common to every input, sorted, with the row of each common user in each input.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Intersection {
    pub users: Vec<UserId>,
    /// `selections[i][r]` is the row of `users[r]` in input `i`.
    pub selections: Vec<Vec<usize>>,
}

pub fn intersect(indices: &[&[UserId]]) -> Result<Intersection> {
    if indices.len() < 2 {
        return Err(Error::invalid("intersect needs at least two user indices"));
    }
    let positions: Vec<HashMap<&UserId, usize>> = indices
        .iter()
        .map(|idx| idx.iter().enumerate().map(|(i, u)| (u, i)).collect())
        .collect();
    let mut users: Vec<UserId> = indices[0]
        .iter()
        .filter(|u| positions[1..].iter().all(|p| p.contains_key(u)))
        .cloned()
        .collect::<BTreeSet<_>>()
        .into_iter()
        .collect();
    users.dedup();
    if users.is_empty() {
        return Err(Error::EmptyIntersection);
    }
    let selections = positions
        .iter()
        .map(|p| users.iter().map(|u| p[u]).collect())
        .collect();
    Ok(Intersection { users, selections })
}
