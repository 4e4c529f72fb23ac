//! Cross-validated supervised evaluation: ANOVA feature selection for count
//! features, per-fold standardization, a linear one-vs-rest SVM and
//! support-weighted ROC AUC.

mod auc;
mod cv;
mod select;
mod svm;

pub use auc::{weighted_auc, AucReport, ClassAuc};
pub use cv::{stratified_kfold, FoldAssignment};
pub use select::{anova_f, select_features, FeatureSelection};
pub use svm::{decision_scores, svm_fit, ClassifierModel, SvmConfig};

use log::warn;
use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::corpus::{CountMatrix, Substance, SudLabels, UserId};
use crate::embedders::EmbeddingMatrix;
pub use crate::linalg::Standardizer;
use crate::rng::derive_seed;
use crate::{Error, Result};

/// Input to [`run_experiment`].
#[derive(Debug, Clone, Copy)]
pub enum Features<'a> {
    Dense(&'a EmbeddingMatrix),
    /// Raw counts; the `top_k` columns by ANOVA F are chosen inside each
    /// training fold.
    Counts { matrix: &'a CountMatrix, top_k: usize },
}

impl Features<'_> {
    pub fn users(&self) -> &[UserId] {
        match self {
            Features::Dense(e) => e.users(),
            Features::Counts { matrix, .. } => &matrix.users,
        }
    }

    pub fn name(&self) -> String {
        match self {
            Features::Dense(e) => e.provenance().learner.clone(),
            Features::Counts { top_k, .. } => format!("unigram-top{top_k}"),
        }
    }

    fn nrows(&self) -> usize {
        self.users().len()
    }

    /// Dense rows `rows`, restricted to `cols` for count features.
    fn dense_rows(&self, rows: &[usize], cols: Option<&[usize]>) -> DMatrix<f64> {
        match self {
            Features::Dense(e) => e.data().select_rows(rows),
            Features::Counts { matrix, .. } => {
                let sub = matrix.matrix.select_rows(rows);
                match cols {
                    Some(c) => sub.select_cols(c).to_dense(),
                    None => sub.to_dense(),
                }
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CvConfig {
    pub folds: usize,
    pub seed: u64,
    pub svm: SvmConfig,
    /// Folds evaluated concurrently; results do not depend on this.
    pub workers: usize,
}

impl Default for CvConfig {
    fn default() -> Self {
        CvConfig {
            folds: 10,
            seed: 0,
            svm: SvmConfig::default(),
            workers: 1,
        }
    }
}

/// Everything learned from one training fold.
#[derive(Debug, Clone, PartialEq)]
pub struct FoldModel {
    /// Selected count columns, if any.
    pub selected: Option<Vec<usize>>,
    pub standardizer: Standardizer,
    pub classifier: ClassifierModel,
}

impl FoldModel {
    pub fn scores(&self, features: &Features, rows: &[usize]) -> Result<DMatrix<f64>> {
        let x = features.dense_rows(rows, self.selected.as_deref());
        decision_scores(&self.classifier, &self.standardizer.apply(&x))
    }
}

/// Fits selection, standardization and the classifier on `train` rows only.
/// `y` is indexed like the feature rows.
pub fn fit_fold(features: &Features, y: &[u8], train: &[usize], svm: &SvmConfig) -> Result<FoldModel> {
    if y.len() != features.nrows() {
        return Err(Error::Misaligned(format!("{} labels for {} rows", y.len(), features.nrows())));
    }
    let y_train: Vec<u8> = train.iter().map(|&i| y[i]).collect();
    let selected = match features {
        Features::Dense(_) => None,
        Features::Counts { matrix, top_k } => {
            let sel = select_features(&matrix.matrix.select_rows(train), &y_train, *top_k)?;
            for w in &sel.warnings {
                warn!("{w}");
            }
            Some(sel.indices)
        }
    };
    let x = features.dense_rows(train, selected.as_deref());
    let standardizer = Standardizer::fit(&x);
    let classifier = svm_fit(&standardizer.apply(&x), &y_train, svm)?;
    Ok(FoldModel {
        selected,
        standardizer,
        classifier,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FoldReport {
    pub fold: usize,
    pub n_train: usize,
    pub n_test: usize,
    pub classes: Vec<ClassAuc>,
    pub weighted_auc: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub features: String,
    pub substance: Substance,
    pub n_users: usize,
    pub config: CvConfig,
    pub folds: Vec<FoldReport>,
    /// Mean of the per-fold weighted AUCs.
    pub weighted_auc: f64,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub warnings: Vec<String>,
}

fn run_fold(features: &Features, y: &[u8], assignment: &FoldAssignment, f: usize, cfg: &CvConfig) -> Result<(FoldReport, Vec<String>)> {
    let (train, test) = assignment.split(f);
    let svm = SvmConfig {
        seed: derive_seed(cfg.seed, &format!("fold-{f}")),
        ..cfg.svm.clone()
    };
    let model = fit_fold(features, y, &train, &svm)?;
    let scores = model.scores(features, &test)?;
    let y_test: Vec<u8> = test.iter().map(|&i| y[i]).collect();
    let auc = weighted_auc(&scores, &model.classifier.classes, &y_test)?;
    let warnings = auc.warnings.iter().map(|w| format!("fold {f}: {w}")).collect();
    Ok((
        FoldReport {
            fold: f,
            n_train: train.len(),
            n_test: test.len(),
            classes: auc.classes,
            weighted_auc: auc.weighted,
        },
        warnings,
    ))
}

/// Stratified k-fold evaluation of `features` against one substance label.
/// Users without that label are dropped.
pub fn run_experiment(features: Features, labels: &SudLabels, substance: Substance, cfg: &CvConfig) -> Result<EvalReport> {
    let aligned = labels.aligned(features.users(), substance);
    let rows: Vec<usize> = (0..aligned.len()).filter(|&i| aligned[i].is_some()).collect();
    if rows.is_empty() {
        return Err(Error::EmptyIntersection);
    }
    let mut warnings = Vec::new();
    if rows.len() < aligned.len() {
        warnings.push(format!("{} users lack a {substance} label", aligned.len() - rows.len()));
    }
    let subset;
    let count_subset;
    let features = match features {
        Features::Dense(e) if rows.len() < e.nrows() => {
            subset = e.select_rows(&rows);
            Features::Dense(&subset)
        }
        Features::Counts { matrix, top_k } if rows.len() < matrix.users.len() => {
            count_subset = CountMatrix {
                users: rows.iter().map(|&r| matrix.users[r].clone()).collect(),
                matrix: matrix.matrix.select_rows(&rows),
            };
            Features::Counts {
                matrix: &count_subset,
                top_k,
            }
        }
        f => f,
    };
    let y: Vec<u8> = rows.iter().map(|&i| aligned[i].expect("filtered")).collect();
    let assignment = stratified_kfold(&y, cfg.folds, derive_seed(cfg.seed, "folds"))?;
    warnings.extend(assignment.warnings.iter().cloned());

    let k = assignment.folds;
    let workers = cfg.workers.clamp(1, k);
    let mut results: Vec<Option<Result<(FoldReport, Vec<String>)>>> = (0..k).map(|_| None).collect();
    std::thread::scope(|s| {
        for (w, chunk) in results.chunks_mut(k.div_ceil(workers)).enumerate() {
            let features = &features;
            let y = &y;
            let assignment = &assignment;
            let start = w * k.div_ceil(workers);
            s.spawn(move || {
                for (i, slot) in chunk.iter_mut().enumerate() {
                    *slot = Some(run_fold(features, y, assignment, start + i, cfg));
                }
            });
        }
    });
    let mut folds = Vec::with_capacity(k);
    for r in results {
        let (report, w) = r.expect("every fold is evaluated")?;
        warnings.extend(w);
        folds.push(report);
    }
    let weighted_auc = folds.iter().map(|f| f.weighted_auc).sum::<f64>() / k as f64;
    Ok(EvalReport {
        features: features.name(),
        substance,
        n_users: y.len(),
        config: cfg.clone(),
        folds,
        weighted_auc,
        warnings,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::embedders::Provenance;
    use crate::corpus::SudRecord;
    use crate::linalg::CsrMatrix;
    use crate::rng::seeded;
    use rand::Rng;
    use std::collections::BTreeMap;

    fn users(n: usize) -> Vec<UserId> {
        (0..n).map(|i| UserId::new(format!("u{i:04}")).unwrap()).collect()
    }

    fn labels(us: &[UserId], y: &[u8]) -> SudLabels {
        let map: BTreeMap<UserId, SudRecord> = us
            .iter()
            .zip(y)
            .map(|(u, &l)| (u.clone(), SudRecord::new(Some(l), Some(l), None).unwrap()))
            .collect();
        SudLabels::new(map)
    }

    fn quick() -> CvConfig {
        CvConfig {
            svm: SvmConfig { c: 1.0, epochs: 10, seed: 0 },
            ..CvConfig::default()
        }
    }

    #[test]
    fn one_hot_labels_give_perfect_auc() {
        let n = 90;
        let us = users(n);
        let y: Vec<u8> = (0..n).map(|i| (i % 3) as u8 + 1).collect();
        let x = DMatrix::from_fn(n, 3, |i, j| if y[i] as usize == j + 1 { 1.0 } else { 0.0 });
        let e = EmbeddingMatrix::new(us.clone(), x, Provenance::new("onehot", 3, None)).unwrap();
        let r = run_experiment(Features::Dense(&e), &labels(&us, &y), Substance::Tobacco, &quick()).unwrap();
        assert_eq!(r.weighted_auc, 1.0);
        assert_eq!(r.folds.len(), 10);
        for f in &r.folds {
            let total: usize = f.classes.iter().map(|c| c.support).sum();
            let recon: f64 = f.classes.iter().map(|c| c.support as f64 / total as f64 * c.auc).sum();
            assert!((recon - f.weighted_auc).abs() < 1e-12);
        }
    }

    #[test]
    fn random_features_are_near_chance() {
        let n = 900;
        let us = users(n);
        let mut rng = seeded(5);
        let y: Vec<u8> = (0..n).map(|i| (i % 3) as u8 + 1).collect();
        let x = DMatrix::from_fn(n, 20, |_, _| rng.random::<f64>());
        let e = EmbeddingMatrix::new(us.clone(), x, Provenance::new("noise", 20, None)).unwrap();
        let r = run_experiment(Features::Dense(&e), &labels(&us, &y), Substance::Tobacco, &quick()).unwrap();
        assert!((0.45..=0.55).contains(&r.weighted_auc), "{}", r.weighted_auc);
    }

    #[test]
    fn workers_do_not_change_the_report() {
        let n = 120;
        let us = users(n);
        let mut rng = seeded(6);
        let y: Vec<u8> = (0..n).map(|i| (i % 3) as u8 + 1).collect();
        let x = DMatrix::from_fn(n, 4, |i, _| rng.random::<f64>() + y[i] as f64 * 0.3);
        let e = EmbeddingMatrix::new(us.clone(), x, Provenance::new("x", 4, None)).unwrap();
        let lab = labels(&us, &y);
        let a = run_experiment(Features::Dense(&e), &lab, Substance::Alcohol, &quick()).unwrap();
        let b = run_experiment(Features::Dense(&e), &lab, Substance::Alcohol, &CvConfig { workers: 4, ..quick() }).unwrap();
        assert_eq!((&a.folds, a.weighted_auc), (&b.folds, b.weighted_auc));
        assert!(a.weighted_auc > 0.7);
        assert!(run_experiment(Features::Dense(&e), &lab, Substance::Drug, &quick()).is_err());
    }

    #[test]
    fn test_rows_never_reach_the_fitted_model() {
        let n = 60;
        let mut rng = seeded(8);
        let y: Vec<u8> = (0..n).map(|i| (i % 3) as u8 + 1).collect();
        let rows: Vec<Vec<(usize, f64)>> = (0..n)
            .map(|i| (0..12).filter_map(|j| {
                let c = rng.random_range(0..4) + if j % 3 + 1 == y[i] as usize { 2 } else { 0 };
                (c > 0).then_some((j, c as f64))
            }).collect())
            .collect();
        let cm = CountMatrix { users: users(n), matrix: CsrMatrix::from_rows(12, rows) };
        let features = Features::Counts { matrix: &cm, top_k: 5 };
        let assignment = stratified_kfold(&y, 5, 1).unwrap();
        let (train, test) = assignment.split(2);
        let svm = SvmConfig { c: 1.0, epochs: 10, seed: 3 };
        let base = fit_fold(&features, &y, &train, &svm).unwrap();

        let mut y2 = y.clone();
        let mut perm: Vec<u8> = test.iter().map(|&i| y[i]).collect();
        perm.rotate_left(1);
        for (&i, &l) in test.iter().zip(&perm) {
            y2[i] = l;
        }
        assert_eq!(base, fit_fold(&features, &y2, &train, &svm).unwrap());

        let mut dense = cm.matrix.to_dense();
        for &i in &test {
            dense.row_mut(i).fill(99.0);
        }
        let cm2 = CountMatrix { users: cm.users.clone(), matrix: CsrMatrix::from_dense(&dense) };
        let f2 = Features::Counts { matrix: &cm2, top_k: 5 };
        assert_eq!(base, fit_fold(&f2, &y, &train, &svm).unwrap());
    }

    #[test]
    fn report_roundtrips_through_json() {
        let n = 30;
        let us = users(n);
        let y: Vec<u8> = (0..n).map(|i| (i % 3) as u8 + 1).collect();
        let x = DMatrix::from_fn(n, 2, |i, j| (i * (j + 1)) as f64);
        let e = EmbeddingMatrix::new(us.clone(), x, Provenance::new("x", 2, None)).unwrap();
        let r = run_experiment(Features::Dense(&e), &labels(&us, &y), Substance::Tobacco, &quick()).unwrap();
        let back: EvalReport = serde_json::from_str(&serde_json::to_string(&r).unwrap()).unwrap();
        assert_eq!(back, r);
    }
}
