//! Command-line front end. Each subcommand reads its inputs from a run
//! directory, writes its outputs there, and reuses outputs that an earlier
//! invocation with the same config already produced.

use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use clap::{Args, Parser, Subcommand};
use log::{info, warn};
use serde::Serialize;
use serde_json::json;

use crate::analyze::{
    correlate_features, heatmap, lexicon_features, load_lexicon, topic_report, CorrelationReport, FeatureTable,
};
use crate::config::{FeatureSource, FusionKind, RunConfig};
use crate::corpus::{
    build_matrices, filter_likes, filter_posts, ingest_labels, ingest_likes, ingest_posts, intersect, read_vocabulary,
    synth_generate, write_labels, write_likes, write_posts, write_vocabulary, LikeTable, PostTable, Substance,
    SudLabels, Vocabulary,
};
use crate::embedders::EmbeddingMatrix;
use crate::multiview::{dcca_fit, dcca_transform, wgcca_fit, wgcca_transform};
use crate::predict::{run_experiment, EvalReport, Features};
use crate::rng::derive_seed;
use crate::views::{embed_view, user_topic_model, Method, ViewData, ViewKind};
use crate::{Error, Result};

#[derive(Debug, Parser)]
#[command(name = "mvsud", version, about = "User embeddings, multi-view fusion and substance-use evaluation")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
    #[command(flatten)]
    pub common: CommonArgs,
}

#[derive(Debug, Clone, Default, Args)]
pub struct CommonArgs {
    /// Flat `key = value` config file.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Overrides the `seed` key.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Run directory; defaults to `runs/<config hash>-<unix time>`.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Recompute outputs even when matching ones exist.
    #[arg(long, global = true)]
    pub force: bool,
    /// Single worker everywhere.
    #[arg(long, global = true)]
    pub deterministic: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Subcommand)]
pub enum Command {
    /// Filter posts, likes and labels into the run directory.
    Ingest,
    /// Embed the post and like views.
    Embed,
    /// Fuse the two views.
    Fuse,
    /// Cross-validated weighted AUC per feature source and substance.
    Eval,
    /// Spearman correlations of lexicon and topic features with the labels.
    Correlate,
    /// Write a synthetic dataset with planted classes.
    Synth,
    /// Search the dimension grids and report the best model per substance.
    Grid,
}

/// A resolved invocation: config plus run directory.
pub struct Run {
    pub cfg: RunConfig,
    pub dir: PathBuf,
    /// Whether outputs already in `dir` may be reused.
    reuse: bool,
    echo: BTreeMap<String, String>,
}

fn write_json(path: &Path, value: &impl Serialize) -> Result<()> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

/// Newest `runs/<hash>-<time>` directory, if any.
fn latest_run(root: &Path, hash: &str) -> Option<PathBuf> {
    let mut found: Vec<(u64, PathBuf)> = fs::read_dir(root)
        .ok()?
        .filter_map(|e| e.ok())
        .filter_map(|e| {
            let name = e.file_name().into_string().ok()?;
            let t = name.strip_prefix(hash)?.strip_prefix('-')?.parse().ok()?;
            Some((t, e.path()))
        })
        .collect();
    found.sort();
    found.pop().map(|(_, p)| p)
}

impl Run {
    pub fn open(common: &CommonArgs) -> Result<Run> {
        let mut cfg = match &common.config {
            Some(p) => RunConfig::load(p)?,
            None => RunConfig::default(),
        };
        if let Some(s) = common.seed {
            cfg.seed = s;
        }
        if common.deterministic {
            cfg.workers = 1;
        }
        cfg.validate()?;
        let text = cfg.to_text();
        let dir = match &common.out {
            Some(d) => d.clone(),
            None => {
                let root = PathBuf::from("runs");
                latest_run(&root, &cfg.hash8()).unwrap_or_else(|| {
                    let t = SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0);
                    root.join(format!("{}-{t}", cfg.hash8()))
                })
            }
        };
        fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
        let manifest = dir.join("run.conf");
        let same = fs::read_to_string(&manifest).map(|t| t == text).unwrap_or(false);
        if !same {
            fs::write(&manifest, &text).map_err(|e| Error::io(&manifest, e))?;
        }
        info!("run directory {}", dir.display());
        Ok(Run {
            echo: cfg.pairs(),
            cfg,
            dir,
            reuse: same && !common.force,
        })
    }

    fn path(&self, rel: &str) -> PathBuf {
        self.dir.join(rel)
    }

    fn reusable(&self, p: &Path) -> bool {
        self.reuse && p.exists()
    }

    fn require(&self, rel: &str) -> Result<PathBuf> {
        let p = self.path(rel);
        if p.exists() {
            Ok(p)
        } else {
            Err(Error::MissingArtifact(p))
        }
    }

    /// JSON output wrapped with the config echo and seed.
    fn emit(&self, rel: &str, result: &impl Serialize) -> Result<PathBuf> {
        let p = self.path(rel);
        write_json(&p, &json!({ "config": &self.echo, "seed": self.cfg.seed, "result": result }))?;
        Ok(p)
    }

    /// Explicit data path, or the file `synth` wrote into this run.
    fn input(&self, configured: &Option<PathBuf>, name: &str) -> Result<PathBuf> {
        match configured {
            Some(p) if p.exists() => Ok(p.clone()),
            Some(p) => Err(Error::MissingArtifact(p.clone())),
            None => self.require(&format!("synth/{name}")),
        }
    }
}

pub struct Corpus {
    pub posts: PostTable,
    pub vocab: Vocabulary,
    pub likes: LikeTable,
    pub labels: SudLabels,
}

fn load_corpus(run: &Run) -> Result<Corpus> {
    Ok(Corpus {
        posts: ingest_posts(run.require("corpus/posts.jsonl")?)?,
        vocab: read_vocabulary(run.require("corpus/vocab.tsv")?)?,
        likes: ingest_likes(run.require("corpus/likes.jsonl")?)?,
        labels: ingest_labels(run.require("corpus/labels.csv")?)?,
    })
}

pub fn cmd_synth(run: &Run) -> Result<()> {
    let c = synth_generate(&run.cfg.synth, derive_seed(run.cfg.seed, "synth"))?;
    write_posts(run.path("synth/posts.jsonl"), &c.posts)?;
    write_likes(run.path("synth/likes.jsonl"), &c.likes)?;
    write_labels(run.path("synth/labels.csv"), &c.labels)?;
    let classes: BTreeMap<String, usize> = c.classes.iter().map(|(u, k)| (u.to_string(), *k)).collect();
    run.emit("synth/classes.json", &classes)?;
    println!("synth: {} users, {} posts, {} likes in {}", c.labels.len(), c.posts.len(), c.likes.len(), run.path("synth").display());
    Ok(())
}

pub fn cmd_ingest(run: &Run) -> Result<()> {
    if run.reusable(&run.path("corpus/summary.json")) {
        info!("corpus already ingested");
        return Ok(());
    }
    let cfg = &run.cfg;
    let missing = cfg.missing_paths();
    if let Some(p) = missing.into_iter().next() {
        return Err(Error::MissingArtifact(p));
    }
    let posts = ingest_posts(run.input(&cfg.posts, "posts.jsonl")?)?;
    let likes = ingest_likes(run.input(&cfg.likes, "likes.jsonl")?)?;
    let labels = ingest_labels(run.input(&cfg.labels, "labels.csv")?)?;
    let (posts, vocab) = filter_posts(&posts, &cfg.filter)?;
    let likes = filter_likes(&likes, &cfg.filter)?;
    write_posts(run.path("corpus/posts.jsonl"), &posts)?;
    write_vocabulary(run.path("corpus/vocab.tsv"), &vocab)?;
    write_likes(run.path("corpus/likes.jsonl"), &likes)?;
    write_labels(run.path("corpus/labels.csv"), &labels)?;
    let summary = json!({
        "post_users": posts.users().len(),
        "posts": posts.len(),
        "tokens": posts.total_tokens(),
        "vocabulary": vocab.len(),
        "like_users": likes.users().len(),
        "likes": likes.len(),
        "like_entities": likes.entities().len(),
        "labelled_users": labels.len(),
    });
    run.emit("corpus/summary.json", &summary)?;
    println!("ingest: {summary}");
    Ok(())
}

fn view_file(kind: ViewKind, name: &str, dim: usize) -> String {
    format!("embeddings/{}-{name}-{dim}.csv", kind.prefix())
}

/// The embedding of one view at `dim`, computed once per run directory.
fn embedding(run: &Run, corpus: &Corpus, kind: ViewKind, dim: usize) -> Result<EmbeddingMatrix> {
    let spec = run.cfg.view(kind, dim);
    let p = run.path(&view_file(kind, spec.name(), dim));
    if run.reusable(&p) {
        return EmbeddingMatrix::read(&p);
    }
    let data = match kind {
        ViewKind::Posts => ViewData::Posts {
            posts: &corpus.posts,
            vocab: &corpus.vocab,
        },
        ViewKind::Likes => ViewData::Likes(&corpus.likes),
    };
    let mut e = embed_view(&spec, data)?;
    for w in &e.provenance().warnings {
        warn!("{spec}: {w}");
    }
    e.provenance_mut().params.insert("run_config".into(), serde_json::to_value(&run.echo)?);
    e.write(&p)?;
    Ok(e)
}

pub fn cmd_embed(run: &Run) -> Result<()> {
    let corpus = load_corpus(run)?;
    for (kind, dim) in [(ViewKind::Posts, run.cfg.spe.dim), (ViewKind::Likes, run.cfg.sle.dim)] {
        let e = embedding(run, &corpus, kind, dim)?;
        println!("embed: {} ({} users × {})", e.provenance().learner, e.nrows(), e.dim());
    }
    Ok(())
}

fn fused_file(run: &Run, spe_dim: usize, sle_dim: usize, dim: usize) -> String {
    let kind = match run.cfg.mue.kind {
        FusionKind::None => "none",
        FusionKind::Wgcca => "wgcca",
        FusionKind::Dcca => "dcca",
    };
    format!("embeddings/mue-{kind}-{spe_dim}x{sle_dim}-{dim}.csv")
}

fn fused(run: &Run, spe: &EmbeddingMatrix, sle: &EmbeddingMatrix, dim: usize) -> Result<EmbeddingMatrix> {
    let m = &run.cfg.mue;
    let p = run.path(&fused_file(run, spe.dim(), sle.dim(), dim));
    if run.reusable(&p) {
        return EmbeddingMatrix::read(&p);
    }
    let common = intersect(&[spe.users(), sle.users()])?;
    let a = spe.select_rows(&common.selections[0]);
    let b = sle.select_rows(&common.selections[1]);
    let mut e = match m.kind {
        FusionKind::None => return Err(Error::Config("mue.kind = none; nothing to fuse".into())),
        FusionKind::Wgcca => {
            let model = wgcca_fit(&[&a, &b], Some(&m.weights), dim, m.epsilon)?;
            wgcca_transform(&model, &[&a, &b])?
        }
        FusionKind::Dcca => {
            let cfg = m.dcca_config(derive_seed(run.cfg.seed, "dcca"));
            let model = dcca_fit(&a, &b, &cfg)?;
            dcca_transform(&model, &a, &b)?
        }
    };
    e.provenance_mut().params.insert("run_config".into(), serde_json::to_value(&run.echo)?);
    e.write(&p)?;
    Ok(e)
}

pub fn cmd_fuse(run: &Run) -> Result<()> {
    let cfg = &run.cfg;
    let read_view = |kind: ViewKind, dim: usize, name: &str| EmbeddingMatrix::read(run.path(&view_file(kind, name, dim)));
    let spe = read_view(ViewKind::Posts, cfg.spe.dim, cfg.spe.name())?;
    let sle = read_view(ViewKind::Likes, cfg.sle.dim, cfg.sle.name())?;
    let e = fused(run, &spe, &sle, cfg.mue.dim)?;
    println!("fuse: {} ({} users × {})", e.provenance().learner, e.nrows(), e.dim());
    Ok(())
}

/// One row of a results table: a method and its AUC per substance.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TableRow {
    pub method: String,
    pub auc: BTreeMap<Substance, f64>,
}

fn table(rows: &[TableRow], substances: &[Substance]) -> String {
    let width = rows.iter().map(|r| r.method.len()).max().unwrap_or(6).max(6);
    let mut s = format!("{:width$}", "method");
    for sub in substances {
        s.push_str(&format!("  {:>7}", sub.name()));
    }
    s.push('\n');
    for r in rows {
        s.push_str(&format!("{:width$}", r.method));
        for sub in substances {
            match r.auc.get(sub) {
                Some(v) => s.push_str(&format!("  {v:>7.3}")),
                None => s.push_str(&format!("  {:>7}", "-")),
            }
        }
        s.push('\n');
    }
    s
}

fn evaluate(run: &Run, rel: &str, features: Features, labels: &SudLabels) -> Result<TableRow> {
    let mut auc = BTreeMap::new();
    let mut reports: Vec<EvalReport> = Vec::new();
    for &sub in &run.cfg.substances {
        let r = run_experiment(features, labels, sub, &run.cfg.cv())?;
        for w in &r.warnings {
            warn!("{} {sub}: {w}", r.features);
        }
        auc.insert(sub, r.weighted_auc);
        reports.push(r);
    }
    run.emit(rel, &reports)?;
    Ok(TableRow {
        method: features.name(),
        auc,
    })
}

fn feature_rows(run: &Run, corpus: &Corpus, source: FeatureSource) -> Result<TableRow> {
    let cfg = &run.cfg;
    let labels = &corpus.labels;
    match source {
        FeatureSource::Spe | FeatureSource::Sle => {
            let (kind, spec) = match source {
                FeatureSource::Spe => (ViewKind::Posts, &cfg.spe),
                _ => (ViewKind::Likes, &cfg.sle),
            };
            let e = EmbeddingMatrix::read(run.path(&view_file(kind, spec.name(), spec.dim)))?;
            let mut row = evaluate(run, &format!("eval/{}-{}-{}.json", kind.prefix(), spec.name(), spec.dim), Features::Dense(&e), labels)?;
            row.method = format!("{}-{}", row.method, spec.dim);
            Ok(row)
        }
        FeatureSource::Mue => {
            let e = EmbeddingMatrix::read(run.path(&fused_file(run, cfg.spe.dim, cfg.sle.dim, cfg.mue.dim)))?;
            let mut row = evaluate(run, &format!("eval/mue-{}x{}-{}.json", cfg.spe.dim, cfg.sle.dim, cfg.mue.dim), Features::Dense(&e), labels)?;
            row.method = format!("{}-{}x{}-{}", row.method, cfg.spe.dim, cfg.sle.dim, cfg.mue.dim);
            Ok(row)
        }
        FeatureSource::Unigram => {
            let counts = build_matrices(&corpus.posts, &corpus.vocab);
            let top_k = cfg.unigram_top_k.min(corpus.vocab.len().max(1));
            evaluate(run, "eval/unigram.json", Features::Counts { matrix: &counts, top_k }, labels)
        }
    }
}

pub fn cmd_eval(run: &Run) -> Result<Vec<TableRow>> {
    let corpus = load_corpus(run)?;
    let rows = run
        .cfg
        .features
        .iter()
        .map(|&s| feature_rows(run, &corpus, s))
        .collect::<Result<Vec<_>>>()?;
    run.emit("eval/summary.json", &rows)?;
    print!("{}", table(&rows, &run.cfg.substances));
    Ok(rows)
}

fn correlate_table(run: &Run, name: &str, table: &FeatureTable, labels: &SudLabels) -> Result<Vec<CorrelationReport>> {
    let mut reports = Vec::new();
    for &sub in &run.cfg.substances {
        let r = correlate_features(table, labels, sub, &run.cfg.analysis)?;
        r.write_csv(run.path(&format!("correlate/{name}-{sub}.csv")))?;
        let flagged = r.rows.iter().filter(|x| x.significant).count();
        println!("correlate: {name} {sub}: {flagged} of {} features significant", r.rows.len());
        reports.push(r);
    }
    let h = heatmap(&reports);
    run.emit(&format!("correlate/heatmap-{name}.json"), &h)?;
    Ok(reports)
}

pub fn cmd_correlate(run: &Run) -> Result<()> {
    let cfg = &run.cfg;
    if cfg.lexicon.is_none() && !cfg.topics {
        return Err(Error::Config("set data.lexicon or analysis.topics = true".into()));
    }
    let corpus = load_corpus(run)?;
    fs::create_dir_all(run.path("correlate")).map_err(|e| Error::io(run.path("correlate"), e))?;
    if let Some(lp) = &cfg.lexicon {
        let lex = load_lexicon(lp)?;
        let table = lexicon_features(&corpus.posts, &lex)?;
        correlate_table(run, "lexicon", &table, &corpus.labels)?;
    }
    if cfg.topics {
        let spec = crate::views::ViewSpec {
            method: Method::UserLda,
            ..cfg.view(ViewKind::Posts, cfg.spe.dim)
        };
        let (model, e) = user_topic_model(&spec, &corpus.posts, &corpus.vocab)?;
        let table = FeatureTable::from_embedding(&e, "topic_");
        let reports = correlate_table(run, "topics", &table, &corpus.labels)?;
        let mut terms = BTreeMap::new();
        for r in &reports {
            terms.insert(r.substance, topic_report(&model, r, corpus.vocab.tokens(), "topic_", cfg.top_n)?);
        }
        run.emit("correlate/topics.json", &terms)?;
    }
    Ok(())
}

#[derive(Debug, Clone, Serialize)]
pub struct GridSummary {
    pub rows: Vec<TableRow>,
    /// Per family (`spe`, `sle`, `mue`) and substance, the best row.
    pub best: BTreeMap<String, BTreeMap<Substance, (String, f64)>>,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub skipped: Vec<String>,
}

pub fn cmd_grid(run: &Run) -> Result<GridSummary> {
    let cfg = &run.cfg;
    let corpus = load_corpus(run)?;
    let mut rows = Vec::new();
    let mut family = Vec::new();
    let mut skipped = Vec::new();
    let mut views: BTreeMap<(&str, usize), EmbeddingMatrix> = BTreeMap::new();
    for (kind, dims) in [(ViewKind::Posts, &cfg.grid_spe_dims), (ViewKind::Likes, &cfg.grid_sle_dims)] {
        for &d in dims {
            let e = embedding(run, &corpus, kind, d)?;
            let name = e.provenance().learner.clone();
            let mut row = evaluate(run, &format!("grid/{name}-{d}.json"), Features::Dense(&e), &corpus.labels)?;
            row.method = format!("{name}-{d}");
            rows.push(row);
            family.push(kind.prefix());
            views.insert((kind.prefix(), d), e);
        }
    }
    if cfg.mue.kind != FusionKind::None {
        let pairs: Vec<(usize, usize)> = match cfg.mue.balance {
            crate::config::Balance::Balanced => cfg.grid_spe_dims.iter().filter(|d| cfg.grid_sle_dims.contains(d)).map(|&d| (d, d)).collect(),
            crate::config::Balance::Imbalanced => vec![crate::multiview::IMBALANCED_DIMS],
        };
        for (ds, dl) in pairs {
            let spe = match views.get(&("spe", ds)) {
                Some(e) => e.clone(),
                None => embedding(run, &corpus, ViewKind::Posts, ds)?,
            };
            let sle = match views.get(&("sle", dl)) {
                Some(e) => e.clone(),
                None => embedding(run, &corpus, ViewKind::Likes, dl)?,
            };
            for &k in &cfg.grid_mue_dims {
                let e = match fused(run, &spe, &sle, k) {
                    Ok(e) => e,
                    Err(err @ (Error::InvalidArgument(_) | Error::DimensionMismatch(_))) => {
                        skipped.push(format!("mue {ds}x{dl}-{k}: {err}"));
                        continue;
                    }
                    Err(e) => return Err(e),
                };
                let name = e.provenance().learner.clone();
                let mut row = evaluate(run, &format!("grid/{name}-{ds}x{dl}-{k}.json"), Features::Dense(&e), &corpus.labels)?;
                row.method = format!("{name}-{ds}x{dl}-{k}");
                rows.push(row);
                family.push("mue");
            }
        }
    }
    let mut best: BTreeMap<String, BTreeMap<Substance, (String, f64)>> = BTreeMap::new();
    for (row, fam) in rows.iter().zip(&family) {
        let entry = best.entry(fam.to_string()).or_default();
        for (&sub, &v) in &row.auc {
            match entry.get(&sub) {
                Some((_, b)) if *b >= v => {}
                _ => {
                    entry.insert(sub, (row.method.clone(), v));
                }
            }
        }
    }
    let summary = GridSummary { rows, best, skipped };
    run.emit("grid/summary.json", &summary)?;
    print!("{}", table(&summary.rows, &cfg.substances));
    for (fam, per) in &summary.best {
        for (sub, (m, v)) in per {
            println!("best {fam} {sub}: {m} {v:.3}");
        }
    }
    Ok(summary)
}

pub fn run(cli: &Cli) -> Result<()> {
    let run = Run::open(&cli.common)?;
    match cli.command {
        Command::Synth => cmd_synth(&run),
        Command::Ingest => cmd_ingest(&run),
        Command::Embed => cmd_embed(&run),
        Command::Fuse => cmd_fuse(&run),
        Command::Eval => cmd_eval(&run).map(|_| ()),
        Command::Correlate => cmd_correlate(&run),
        Command::Grid => cmd_grid(&run).map(|_| ()),
    }?;
    std::io::stdout().flush().map_err(|e| Error::io(&run.dir, e))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn table_layout() {
        let mut auc = BTreeMap::new();
        auc.insert(Substance::Tobacco, 0.8125);
        let t = table(&[TableRow { method: "spe.SVD-50".into(), auc }], &[Substance::Tobacco, Substance::Drug]);
        assert_eq!(t, "method      tobacco     drug\nspe.SVD-50    0.812        -\n");
    }

    #[test]
    fn latest_run_picks_the_newest_matching_directory() {
        let dir = tempfile::tempdir().unwrap();
        for name in ["abcd1234-10", "abcd1234-200", "abcd1234-x", "ffff0000-900"] {
            fs::create_dir(dir.path().join(name)).unwrap();
        }
        assert_eq!(latest_run(dir.path(), "abcd1234"), Some(dir.path().join("abcd1234-200")));
        assert_eq!(latest_run(dir.path(), "00000000"), None);
    }
}
