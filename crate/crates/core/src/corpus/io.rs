use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{tokenize, LikeTable, Post, PostTable, SudLabels, SudRecord, UserId, Vocabulary};
use crate::{Error, Result};

#[derive(Deserialize, Serialize)]
struct PostLine {
    user_id: String,
    post_id: String,
    text: String,
}

#[derive(Deserialize, Serialize)]
struct LikeLine {
    user_id: String,
    like_id: String,
}

fn parse_err(path: &Path, line: usize, message: impl Into<String>) -> Error {
    Error::Parse {
        path: path.to_path_buf(),
        line,
        message: message.into(),
    }
}

/// Non-blank lines with 1-based line numbers.
fn jsonl_lines(path: &Path) -> Result<Vec<(usize, String)>> {
    let f = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut out = Vec::new();
    for (i, line) in BufReader::new(f).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if !line.trim().is_empty() {
            out.push((i + 1, line));
        }
    }
    Ok(out)
}

/// Reads `posts.jsonl` (`user_id`, `post_id`, `text` per line) and tokenizes the text.
pub fn ingest_posts(path: impl AsRef<Path>) -> Result<PostTable> {
    let path = path.as_ref();
    let mut posts = Vec::new();
    for (n, line) in jsonl_lines(path)? {
        let rec: PostLine =
            serde_json::from_str(&line).map_err(|e| parse_err(path, n, e.to_string()))?;
        let user = UserId::new(rec.user_id).map_err(|e| parse_err(path, n, e.to_string()))?;
        posts.push(Post {
            user,
            post_id: rec.post_id,
            tokens: tokenize(&rec.text),
        });
    }
    Ok(PostTable::new(posts))
}

/// Reads `likes.jsonl` (`user_id`, `like_id` per line); repeated pairs collapse.
pub fn ingest_likes(path: impl AsRef<Path>) -> Result<LikeTable> {
    let path = path.as_ref();
    let mut pairs = Vec::new();
    for (n, line) in jsonl_lines(path)? {
        let rec: LikeLine =
            serde_json::from_str(&line).map_err(|e| parse_err(path, n, e.to_string()))?;
        let user = UserId::new(rec.user_id).map_err(|e| parse_err(path, n, e.to_string()))?;
        if rec.like_id.is_empty() {
            return Err(parse_err(path, n, "empty like_id"));
        }
        pairs.push((user, rec.like_id));
    }
    Ok(LikeTable::new(pairs))
}

const LABEL_HEADER: [&str; 4] = ["user_id", "tobacco", "alcohol", "drug"];

/// Reads `labels.csv` with header `user_id,tobacco,alcohol,drug`; cells are 1, 2, 3 or empty.
pub fn ingest_labels(path: impl AsRef<Path>) -> Result<SudLabels> {
    let path = path.as_ref();
    let f = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(f);
    let header = rdr.headers()?.clone();
    if header.iter().map(str::trim).ne(LABEL_HEADER) {
        return Err(parse_err(path, 1, format!("expected header {}", LABEL_HEADER.join(","))));
    }
    let mut records = BTreeMap::new();
    for (i, row) in rdr.records().enumerate() {
        let line = i + 2;
        let row = row.map_err(|e| parse_err(path, line, e.to_string()))?;
        if row.len() != 4 {
            return Err(parse_err(path, line, "expected 4 fields"));
        }
        let cell = |k: usize| -> Result<Option<u8>> {
            match row[k].trim() {
                "" => Ok(None),
                "1" => Ok(Some(1)),
                "2" => Ok(Some(2)),
                "3" => Ok(Some(3)),
                other => Err(parse_err(path, line, format!("label {other:?} not in {{1,2,3}}"))),
            }
        };
        let user = UserId::new(row[0].trim()).map_err(|e| parse_err(path, line, e.to_string()))?;
        let rec = SudRecord::new(cell(1)?, cell(2)?, cell(3)?)
            .map_err(|e| parse_err(path, line, e.to_string()))?;
        if records.insert(user.clone(), rec).is_some() {
            return Err(parse_err(path, line, format!("duplicate user {user}")));
        }
    }
    Ok(SudLabels::new(records))
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    Ok(BufWriter::new(File::create(path).map_err(|e| Error::io(path, e))?))
}

/// Writes posts with their tokens joined by single spaces; re-ingesting yields the same tokens.
pub fn write_posts(path: impl AsRef<Path>, posts: &PostTable) -> Result<()> {
    let path = path.as_ref();
    let mut w = create(path)?;
    for p in posts.posts() {
        let line = serde_json::to_string(&PostLine {
            user_id: p.user.to_string(),
            post_id: p.post_id.clone(),
            text: p.tokens.join(" "),
        })?;
        writeln!(w, "{line}").map_err(|e| Error::io(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn write_likes(path: impl AsRef<Path>, likes: &LikeTable) -> Result<()> {
    let path = path.as_ref();
    let mut w = create(path)?;
    for (u, le) in likes.pairs() {
        let line = serde_json::to_string(&LikeLine {
            user_id: u.to_string(),
            like_id: le.clone(),
        })?;
        writeln!(w, "{line}").map_err(|e| Error::io(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn write_labels(path: impl AsRef<Path>, labels: &SudLabels) -> Result<()> {
    let path = path.as_ref();
    let mut w = csv::Writer::from_writer(create(path)?);
    w.write_record(LABEL_HEADER)?;
    let cell = |v: Option<u8>| v.map(|x| x.to_string()).unwrap_or_default();
    for (u, r) in labels.records() {
        w.write_record([u.to_string(), cell(r.tobacco), cell(r.alcohol), cell(r.drug)])?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// `token<TAB>count` lines in index order.
pub fn write_vocabulary(path: impl AsRef<Path>, vocab: &Vocabulary) -> Result<()> {
    let path = path.as_ref();
    let mut w = create(path)?;
    for (t, c) in vocab.tokens().iter().zip(vocab.counts()) {
        writeln!(w, "{t}\t{c}").map_err(|e| Error::io(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn read_vocabulary(path: impl AsRef<Path>) -> Result<Vocabulary> {
    let path = path.as_ref();
    let f = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut entries = Vec::new();
    for (i, line) in BufReader::new(f).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        let (t, c) = line
            .split_once('\t')
            .ok_or_else(|| parse_err(path, i + 1, "expected token<TAB>count"))?;
        let c: u64 = c.parse().map_err(|_| parse_err(path, i + 1, "bad count"))?;
        entries.push((t.to_string(), c));
    }
    Ok(Vocabulary::from_counts(entries))
}
