//! Lexicon-category features, Spearman correlation of features with ordinal
//! labels, and topic summaries of significant correlations.

mod lexicon;
mod spearman;

pub use lexicon::{lexicon_features, load_lexicon, Lexicon, Pattern};
pub use spearman::{
    average_ranks, benjamini_hochberg, permutation_pvalue, spearman, spearman_pvalue, MAX_PERMUTATION_N,
};

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::corpus::{Substance, SudLabels, UserId};
use crate::embedders::{EmbeddingMatrix, LdaModel};
use crate::{Error, Result};

/// Named per-user feature columns; row `i` belongs to `users[i]`.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureTable {
    pub users: Vec<UserId>,
    pub names: Vec<String>,
    pub values: DMatrix<f64>,
    pub warnings: Vec<String>,
}

impl FeatureTable {
    pub fn new(users: Vec<UserId>, names: Vec<String>, values: DMatrix<f64>) -> Result<Self> {
        if values.nrows() != users.len() || values.ncols() != names.len() {
            return Err(Error::DimensionMismatch(format!(
                "{}×{} values for {} users and {} names",
                values.nrows(),
                values.ncols(),
                users.len(),
                names.len()
            )));
        }
        Ok(FeatureTable {
            users,
            names,
            values,
            warnings: Vec::new(),
        })
    }

    /// Columns named `{prefix}{j}`.
    pub fn from_embedding(e: &EmbeddingMatrix, prefix: &str) -> Self {
        FeatureTable {
            users: e.users().to_vec(),
            names: (0..e.dim()).map(|j| format!("{prefix}{j}")).collect(),
            values: e.data().clone(),
            warnings: e.provenance().warnings.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorrelationOptions {
    pub alpha: f64,
    /// Exact permutation p-values when `n ≤ MAX_PERMUTATION_N`.
    pub permutation: bool,
    /// Flag on Benjamini–Hochberg adjusted p-values instead of raw ones.
    pub benjamini_hochberg: bool,
}

impl Default for CorrelationOptions {
    fn default() -> Self {
        CorrelationOptions {
            alpha: 0.05,
            permutation: false,
            benjamini_hochberg: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorrelationRow {
    pub feature: String,
    /// `None` when the feature or label is constant over the aligned users.
    pub rho: Option<f64>,
    pub p: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub q: Option<f64>,
    pub n: usize,
    pub significant: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorrelationReport {
    pub substance: Substance,
    /// Ascending p; undefined rows last.
    pub rows: Vec<CorrelationRow>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub warnings: Vec<String>,
}

/// Spearman correlation of every feature column with the ordinal label of
/// `substance`, over users that have that label.
pub fn correlate_features(
    features: &FeatureTable,
    labels: &SudLabels,
    substance: Substance,
    opts: &CorrelationOptions,
) -> Result<CorrelationReport> {
    let aligned = labels.aligned(&features.users, substance);
    let rows: Vec<usize> = (0..aligned.len()).filter(|&i| aligned[i].is_some()).collect();
    let n = rows.len();
    if n < 4 {
        return Err(Error::invalid(format!("{n} users carry a {substance} label; need at least 4")));
    }
    let mut warnings = features.warnings.clone();
    if n < aligned.len() {
        warnings.push(format!("{} users lack a {substance} label", aligned.len() - n));
    }
    let y: Vec<f64> = rows.iter().map(|&i| aligned[i].expect("filtered") as f64).collect();
    let mut out = Vec::with_capacity(features.names.len());
    for (j, name) in features.names.iter().enumerate() {
        let x: Vec<f64> = rows.iter().map(|&i| features.values[(i, j)]).collect();
        let rho = spearman(&x, &y)?;
        let p = match rho {
            Some(_) if opts.permutation && n <= MAX_PERMUTATION_N => Some(permutation_pvalue(&x, &y)?),
            Some(r) => Some(spearman_pvalue(r, n)?),
            None => None,
        };
        out.push(CorrelationRow {
            feature: name.clone(),
            rho,
            p,
            q: None,
            n,
            significant: false,
        });
    }
    let defined: Vec<usize> = (0..out.len()).filter(|&i| out[i].p.is_some()).collect();
    if opts.benjamini_hochberg {
        let ps: Vec<f64> = defined.iter().map(|&i| out[i].p.expect("defined")).collect();
        for (&i, q) in defined.iter().zip(benjamini_hochberg(&ps)) {
            out[i].q = Some(q);
        }
    }
    for row in &mut out {
        row.significant = match (opts.benjamini_hochberg, row.p, row.q) {
            (true, _, Some(q)) => q < opts.alpha,
            (false, Some(p), _) => p < opts.alpha,
            _ => false,
        };
    }
    out.sort_by(|a, b| match (a.p, b.p) {
        (Some(x), Some(y)) => x.total_cmp(&y).then_with(|| a.feature.cmp(&b.feature)),
        (Some(_), None) => std::cmp::Ordering::Less,
        (None, Some(_)) => std::cmp::Ordering::Greater,
        (None, None) => a.feature.cmp(&b.feature),
    });
    Ok(CorrelationReport {
        substance,
        rows: out,
        warnings,
    })
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map(|x| format!("{x:?}")).unwrap_or_default()
}

impl CorrelationReport {
    /// CSV `feature,rho,p,n,significant`; undefined values are empty cells.
    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let mut w = csv::Writer::from_path(path)?;
        w.write_record(["feature", "rho", "p", "n", "significant"])?;
        for r in &self.rows {
            w.write_record([
                r.feature.clone(),
                fmt_opt(r.rho),
                fmt_opt(r.p),
                r.n.to_string(),
                r.significant.to_string(),
            ])?;
        }
        w.flush().map_err(|e| Error::io(path, e))
    }
}

/// Feature × substance grid of `sign(rho) · −log10(p)`; `None` where rho is
/// undefined or the feature is missing for that substance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Heatmap {
    pub substances: Vec<Substance>,
    pub features: Vec<String>,
    /// `values[feature][substance]`
    pub values: Vec<Vec<Option<f64>>>,
}

pub fn heatmap(reports: &[CorrelationReport]) -> Heatmap {
    let substances: Vec<Substance> = reports.iter().map(|r| r.substance).collect();
    let mut features: Vec<String> = reports.iter().flat_map(|r| r.rows.iter().map(|x| x.feature.clone())).collect();
    features.sort();
    features.dedup();
    let values = features
        .iter()
        .map(|f| {
            reports
                .iter()
                .map(|r| {
                    let row = r.rows.iter().find(|x| &x.feature == f)?;
                    let (rho, p) = (row.rho?, row.p?);
                    // p = 0 is capped at the smallest positive normal f64.
                    let mag = -p.max(f64::MIN_POSITIVE).log10();
                    Some(if rho < 0.0 { -mag } else { mag })
                })
                .collect()
        })
        .collect();
    Heatmap {
        substances,
        features,
        values,
    }
}

impl Heatmap {
    pub fn write_json(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let mut f = BufWriter::new(File::create(path).map_err(|e| Error::io(path, e))?);
        serde_json::to_writer_pretty(&mut f, self)?;
        writeln!(f).map_err(|e| Error::io(path, e))?;
        f.flush().map_err(|e| Error::io(path, e))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TopicTerms {
    pub topic: usize,
    pub rho: f64,
    pub p: f64,
    /// Highest-phi terms first.
    pub terms: Vec<String>,
    pub weights: Vec<f64>,
}

/// Top `top_n` terms of every significant topic in `report`. Rows are
/// matched to topics by the feature name `{prefix}{t}`; other rows are
/// ignored. `terms[w]` names vocabulary index `w` of the model.
pub fn topic_report(model: &LdaModel, report: &CorrelationReport, terms: &[String], prefix: &str, top_n: usize) -> Result<Vec<TopicTerms>> {
    if terms.len() != model.vocab_size() {
        return Err(Error::DimensionMismatch(format!(
            "{} term names for a vocabulary of {}",
            terms.len(),
            model.vocab_size()
        )));
    }
    let mut out = Vec::new();
    for row in report.rows.iter().filter(|r| r.significant) {
        let Some(t) = row.feature.strip_prefix(prefix).and_then(|s| s.parse::<usize>().ok()) else {
            continue;
        };
        if t >= model.k {
            continue;
        }
        let (Some(rho), Some(p)) = (row.rho, row.p) else { continue };
        let top = model.top_words(t, top_n);
        out.push(TopicTerms {
            topic: t,
            rho,
            p,
            terms: top.iter().map(|&w| terms[w].clone()).collect(),
            weights: top.iter().map(|&w| model.phi[(t, w)]).collect(),
        });
    }
    Ok(out)
}
