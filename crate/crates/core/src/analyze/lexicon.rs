use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;

use nalgebra::DMatrix;

use super::FeatureTable;
use crate::corpus::PostTable;
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
pub enum Pattern {
    Literal(String),
    /// Stem of a `stem*` pattern.
    Prefix(String),
}

impl Pattern {
    pub fn matches(&self, token: &str) -> bool {
        match self {
            Pattern::Literal(w) => token == w,
            Pattern::Prefix(stem) => token.starts_with(stem.as_str()),
        }
    }
}

impl fmt::Display for Pattern {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Pattern::Literal(w) => f.write_str(w),
            Pattern::Prefix(stem) => write!(f, "{stem}*"),
        }
    }
}

/// Category name → patterns, categories sorted by name.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Lexicon {
    categories: BTreeMap<String, Vec<Pattern>>,
}

impl Lexicon {
    pub fn categories(&self) -> impl Iterator<Item = (&str, &[Pattern])> {
        self.categories.iter().map(|(c, p)| (c.as_str(), p.as_slice()))
    }

    pub fn len(&self) -> usize {
        self.categories.len()
    }

    pub fn is_empty(&self) -> bool {
        self.categories.is_empty()
    }

    /// Parses `category<TAB>pattern` lines. Blank lines and lines starting
    /// with `#` are skipped; patterns are lowercased.
    pub fn parse(text: &str, source: &Path) -> Result<Lexicon> {
        let mut categories: BTreeMap<String, Vec<Pattern>> = BTreeMap::new();
        for (i, line) in text.lines().enumerate() {
            let bad = |m: &str| Error::Parse {
                path: source.to_path_buf(),
                line: i + 1,
                message: m.to_string(),
            };
            let trimmed = line.trim();
            if trimmed.is_empty() || trimmed.starts_with('#') {
                continue;
            }
            let (cat, pat) = line.split_once('\t').ok_or_else(|| bad("expected category<TAB>pattern"))?;
            let (cat, pat) = (cat.trim(), pat.trim().to_lowercase());
            if cat.is_empty() {
                return Err(bad("empty category name"));
            }
            if pat.is_empty() || pat.contains('\t') {
                return Err(bad("pattern must be a single non-empty field"));
            }
            let pattern = match pat.strip_suffix('*') {
                Some("") => return Err(bad("bare `*` matches everything")),
                Some(stem) if stem.contains('*') => return Err(bad("`*` is only allowed at the end")),
                Some(stem) => Pattern::Prefix(stem.to_string()),
                None if pat.contains('*') => return Err(bad("`*` is only allowed at the end")),
                None => Pattern::Literal(pat),
            };
            let list = categories.entry(cat.to_string()).or_default();
            if !list.contains(&pattern) {
                list.push(pattern);
            }
        }
        Ok(Lexicon { categories })
    }
}

pub fn load_lexicon(path: impl AsRef<Path>) -> Result<Lexicon> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    Lexicon::parse(&text, path)
}

/// Per-user share of tokens matching each category. Users without tokens
/// are left out with a warning.
pub fn lexicon_features(posts: &PostTable, lex: &Lexicon) -> Result<FeatureTable> {
    if lex.is_empty() {
        return Err(Error::invalid("lexicon has no categories"));
    }
    let names: Vec<String> = lex.categories.keys().cloned().collect();
    let mut users = Vec::new();
    let mut rows: Vec<Vec<f64>> = Vec::new();
    let mut skipped = Vec::new();
    for (user, ps) in posts.by_user() {
        let tokens: Vec<&String> = ps.iter().flat_map(|p| p.tokens.iter()).collect();
        if tokens.is_empty() {
            skipped.push(user.to_string());
            continue;
        }
        let row = lex
            .categories
            .values()
            .map(|pats| tokens.iter().filter(|t| pats.iter().any(|p| p.matches(t))).count() as f64 / tokens.len() as f64)
            .collect();
        users.push(user.clone());
        rows.push(row);
    }
    let values = DMatrix::from_fn(rows.len(), names.len(), |i, j| rows[i][j]);
    let mut table = FeatureTable::new(users, names, values)?;
    if !skipped.is_empty() {
        table.warnings.push(format!("users without tokens: {}", skipped.join(",")));
    }
    Ok(table)
}
