//! Random forest: bootstrap-resampled trees with per-split feature sampling.
//! Tree `t` draws from its own RNG stream `(seed, t)`.

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::rng_for;
use super::tree::{MaxFeatures, TreeModel, TreeParams};
use crate::sparse::SparseVector;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForestParams {
    pub trees: usize,
    pub bootstrap: bool,
    pub tree: TreeParams,
}

impl Default for ForestParams {
    fn default() -> Self {
        Self {
            trees: 100,
            bootstrap: true,
            tree: TreeParams {
                max_features: MaxFeatures::Sqrt,
                ..TreeParams::default()
            },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForestModel {
    trees: Vec<TreeModel>,
}

impl ForestModel {
    pub(super) fn fit(
        params: &ForestParams,
        rows: &[SparseVector],
        targets: &[bool],
        dim: usize,
        seed: u64,
    ) -> Self {
        let n = rows.len();
        let trees = (0..params.trees)
            .map(|t| {
                let mut rng = rng_for(seed, t as u64);
                let weights = params.bootstrap.then(|| {
                    let mut counts = vec![0u32; n];
                    for _ in 0..n {
                        counts[rng.random_range(0..n)] += 1;
                    }
                    counts
                });
                TreeModel::fit(&params.tree, rows, targets, weights.as_deref(), dim, &mut rng)
            })
            .collect();
        Self { trees }
    }

    pub fn trees(&self) -> &[TreeModel] {
        &self.trees
    }

    /// Mean of the trees' leaf proportions.
    pub fn score(&self, x: &SparseVector) -> f64 {
        self.trees.iter().map(|t| t.score(x)).sum::<f64>() / self.trees.len() as f64
    }
}
