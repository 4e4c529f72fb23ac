//! Unsupervised user embeddings from social-media posts and likes, multi-view
//! fusion of those embeddings, and the supervised/correlational evaluation
//! used to predict ordinal substance-use labels.
//!
//! The pipeline runs bottom-up:
//!
//! * [`corpus`] ingests posts, likes and labels, filters them and builds
//!   sparse count matrices;
//! * [`embedders`] holds the generic unsupervised learners (truncated SVD,
//!   collapsed-Gibbs LDA, paragraph vectors, a one-hidden-layer autoencoder);
//! * [`views`] wires those learners into the named post and like pipelines;
//! * [`multiview`] fuses two views with CCA, weighted generalized CCA or deep CCA;
//! * [`predict`] runs cross-validated one-vs-rest linear SVMs scored by
//!   support-weighted ROC AUC;
//! * [`analyze`] computes lexicon features and Spearman correlations with labels;
//! * [`config`] and [`cli`] orchestrate reproducible runs.

pub mod analyze;
pub mod cli;
pub mod config;
pub mod corpus;
pub mod embedders;
mod error;
pub(crate) mod linalg;
pub mod multiview;
pub mod predict;
pub(crate) mod rng;
pub mod views;

pub use error::{Error, Result};
pub use linalg::CsrMatrix;
