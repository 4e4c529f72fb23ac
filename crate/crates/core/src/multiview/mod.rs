//! Fusion of two single-view embeddings into one multi-view user embedding.

mod cca;
mod dcca;
mod network;
mod wgcca;

pub use cca::{cca_fit, cca_fit_matrices, CcaModel};
pub use dcca::{dcca_fit, dcca_objective, dcca_objective_for, dcca_pretrain, dcca_transform, DccaConfig, DccaModel, Pretrained};
pub use network::{Arch, Network};
pub use wgcca::{wgcca_fit, wgcca_transform, WgccaModel};

use crate::embedders::EmbeddingMatrix;
use crate::{Error, Result};

/// Output dimensions searched for fused embeddings.
pub const MUE_DIMS: [usize; 8] = [20, 50, 100, 200, 300, 400, 500, 1000];

/// Single-view dimensions of the imbalanced setting: posts, likes.
pub const IMBALANCED_DIMS: (usize, usize) = (50, 300);

pub(crate) fn check_aligned(views: &[&EmbeddingMatrix]) -> Result<()> {
    let first = views[0].users();
    for (i, v) in views.iter().enumerate().skip(1) {
        if v.users() != first {
            return Err(Error::Misaligned(format!("view {i} has a different user index than view 0")));
        }
    }
    Ok(())
}
