//! Generic unsupervised learners and their common output type.

pub mod autoencoder;
pub mod lda;
pub mod pv;
pub mod svd;

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::corpus::UserId;
use crate::{Error, Result};

pub use autoencoder::{ae_embed, ae_fit, AeConfig, AutoencoderModel};
pub use lda::{lda_fit, lda_infer, LdaConfig, LdaModel, TopicInference};
pub use pv::{pv_fit, PvConfig, PvMode, PvModel};
pub use svd::{svd_embed, svd_fit, svd_fit_with, LanczosOptions, SvdFactor};

/// Which learner produced an embedding, with what settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub learner: String,
    pub dim: usize,
    pub seed: Option<u64>,
    pub params: BTreeMap<String, serde_json::Value>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub warnings: Vec<String>,
}

impl Provenance {
    pub fn new(learner: impl Into<String>, dim: usize, seed: Option<u64>) -> Self {
        Provenance {
            learner: learner.into(),
            dim,
            seed,
            params: BTreeMap::new(),
            warnings: Vec::new(),
        }
    }

    pub fn with(mut self, key: &str, value: impl Serialize) -> Self {
        self.params.insert(
            key.to_string(),
            serde_json::to_value(value).expect("provenance values are plain data"),
        );
        self
    }
}

/// Dense per-user vectors; row `i` belongs to `users[i]`.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingMatrix {
    users: Vec<UserId>,
    data: DMatrix<f64>,
    provenance: Provenance,
}

impl EmbeddingMatrix {
    pub fn new(users: Vec<UserId>, data: DMatrix<f64>, mut provenance: Provenance) -> Result<Self> {
        if users.len() != data.nrows() {
            return Err(Error::DimensionMismatch(format!(
                "{} users but {} rows",
                users.len(),
                data.nrows()
            )));
        }
        if let Some(pos) = data.iter().position(|v| !v.is_finite()) {
            return Err(Error::Numerical(format!(
                "non-finite embedding value at row {}",
                pos % data.nrows().max(1)
            )));
        }
        provenance.dim = data.ncols();
        Ok(EmbeddingMatrix {
            users,
            data,
            provenance,
        })
    }

    pub fn users(&self) -> &[UserId] {
        &self.users
    }

    pub fn data(&self) -> &DMatrix<f64> {
        &self.data
    }

    pub fn provenance(&self) -> &Provenance {
        &self.provenance
    }

    pub fn provenance_mut(&mut self) -> &mut Provenance {
        &mut self.provenance
    }

    pub fn nrows(&self) -> usize {
        self.data.nrows()
    }

    pub fn dim(&self) -> usize {
        self.data.ncols()
    }

    pub fn into_parts(self) -> (Vec<UserId>, DMatrix<f64>, Provenance) {
        (self.users, self.data, self.provenance)
    }

    /// Rows in the given order.
    pub fn select_rows(&self, rows: &[usize]) -> EmbeddingMatrix {
        let users = rows.iter().map(|&r| self.users[r].clone()).collect();
        let data = self.data.select_rows(rows);
        EmbeddingMatrix {
            users,
            data,
            provenance: self.provenance.clone(),
        }
    }

    /// `foo.csv` → `foo.csv.json`
    pub fn sidecar_path(csv_path: &Path) -> PathBuf {
        let mut s = csv_path.as_os_str().to_owned();
        s.push(".json");
        PathBuf::from(s)
    }

    /// CSV `user_id,e0,e1,...` with shortest round-trip decimals, plus the provenance sidecar.
    pub fn write(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        if let Some(dir) = path.parent() {
            std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        }
        let f = File::create(path).map_err(|e| Error::io(path, e))?;
        let mut w = csv::Writer::from_writer(BufWriter::new(f));
        let mut header = vec!["user_id".to_string()];
        header.extend((0..self.dim()).map(|j| format!("e{j}")));
        w.write_record(&header)?;
        for (i, u) in self.users.iter().enumerate() {
            let mut rec = Vec::with_capacity(self.dim() + 1);
            rec.push(u.to_string());
            rec.extend(self.data.row(i).iter().map(|v| format!("{v:?}")));
            w.write_record(&rec)?;
        }
        w.flush().map_err(|e| Error::io(path, e))?;
        let side = Self::sidecar_path(path);
        let mut sf = BufWriter::new(File::create(&side).map_err(|e| Error::io(&side, e))?);
        serde_json::to_writer_pretty(&mut sf, &self.provenance)?;
        writeln!(sf).map_err(|e| Error::io(&side, e))?;
        sf.flush().map_err(|e| Error::io(&side, e))
    }

    pub fn read(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        if !path.exists() {
            return Err(Error::MissingArtifact(path.to_path_buf()));
        }
        let side = Self::sidecar_path(path);
        let provenance: Provenance = serde_json::from_reader(
            File::open(&side).map_err(|_| Error::MissingArtifact(side.clone()))?,
        )?;
        let f = File::open(path).map_err(|e| Error::io(path, e))?;
        let mut rdr = csv::Reader::from_reader(f);
        let header = rdr.headers()?.clone();
        let dim = header.len().saturating_sub(1);
        if header.get(0) != Some("user_id") || header.iter().skip(1).enumerate().any(|(j, h)| h != format!("e{j}")) {
            return Err(Error::Parse {
                path: path.to_path_buf(),
                line: 1,
                message: "expected header user_id,e0,e1,...".into(),
            });
        }
        let mut users = Vec::new();
        let mut values = Vec::new();
        for (i, rec) in rdr.records().enumerate() {
            let rec = rec?;
            let bad = |m: String| Error::Parse {
                path: path.to_path_buf(),
                line: i + 2,
                message: m,
            };
            users.push(UserId::new(&rec[0]).map_err(|e| bad(e.to_string()))?);
            for cell in rec.iter().skip(1) {
                values.push(cell.parse::<f64>().map_err(|e| bad(format!("{cell:?}: {e}")))?);
            }
        }
        if provenance.dim != dim {
            return Err(Error::DimensionMismatch(format!(
                "sidecar says dim {} but CSV has {dim} columns",
                provenance.dim
            )));
        }
        let data = DMatrix::from_row_slice(users.len(), dim, &values);
        EmbeddingMatrix::new(users, data, provenance)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn csv_roundtrip_is_exact() {
        let users = vec![UserId::new("a").unwrap(), UserId::new("b,c").unwrap()];
        let data = DMatrix::from_row_slice(2, 3, &[0.1, -1e-300, 1.0 / 3.0, 2.5e17, 0.0, -7.25]);
        let e = EmbeddingMatrix::new(users, data, Provenance::new("test", 3, Some(9)).with("k", 3)).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("x.csv");
        e.write(&p).unwrap();
        assert!(EmbeddingMatrix::sidecar_path(&p).exists());
        let back = EmbeddingMatrix::read(&p).unwrap();
        assert_eq!(back, e);
        let text = std::fs::read_to_string(&p).unwrap();
        assert!(text.starts_with("user_id,e0,e1,e2\n"));
        assert!(text.contains("0.1,"));
    }

    #[test]
    fn non_finite_values_are_rejected() {
        let data = DMatrix::from_row_slice(1, 1, &[f64::NAN]);
        assert!(EmbeddingMatrix::new(vec![UserId::new("a").unwrap()], data, Provenance::new("t", 1, None)).is_err());
    }

    #[test]
    fn missing_file_is_a_missing_artifact() {
        assert!(matches!(
            EmbeddingMatrix::read("/nonexistent/e.csv"),
            Err(Error::MissingArtifact(_))
        ));
    }
}
