//! k-nearest neighbors under cosine distance.
//!
//! Distances are `1 - cos(x, y)`; a zero vector is at distance 1 from
//! everything. Ties are broken by the lower training ordinal. Dot products
//! are accumulated through an inverted index in ascending feature order, so
//! each one equals the plain sparse merge dot product bit for bit.

use std::sync::OnceLock;

use serde::{Deserialize, Serialize};

use crate::sparse::SparseVector;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KnnParams {
    pub k: usize,
}

impl Default for KnnParams {
    fn default() -> Self {
        Self { k: 5 }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct KnnModel {
    k: usize,
    rows: Vec<SparseVector>,
    targets: Vec<bool>,
    norms: Vec<f64>,
    #[serde(skip)]
    index: OnceLock<Vec<Vec<(u32, f64)>>>,
}

impl PartialEq for KnnModel {
    fn eq(&self, other: &Self) -> bool {
        self.k == other.k && self.rows == other.rows && self.targets == other.targets
    }
}

impl KnnModel {
    pub(super) fn fit(params: &KnnParams, rows: &[SparseVector], targets: &[bool]) -> Self {
        Self {
            k: params.k,
            rows: rows.to_vec(),
            targets: targets.to_vec(),
            norms: rows.iter().map(|r| r.squared_norm().sqrt()).collect(),
            index: OnceLock::new(),
        }
    }

    fn postings(&self) -> &[Vec<(u32, f64)>] {
        self.index.get_or_init(|| {
            let dim = self.rows.first().map_or(0, SparseVector::dim);
            let mut postings = vec![Vec::new(); dim];
            for (i, row) in self.rows.iter().enumerate() {
                for (f, v) in row.iter() {
                    postings[f as usize].push((i as u32, v));
                }
            }
            postings
        })
    }

    /// Cosine distances from `x` to every training row.
    pub fn distances(&self, x: &SparseVector) -> Vec<f64> {
        let postings = self.postings();
        let mut dots = vec![0.0; self.rows.len()];
        for (f, v) in x.iter() {
            for &(i, w) in &postings[f as usize] {
                dots[i as usize] += v * w;
            }
        }
        let qn = x.squared_norm().sqrt();
        dots.iter()
            .zip(&self.norms)
            .map(|(&d, &n)| {
                if qn == 0.0 || n == 0.0 {
                    1.0
                } else {
                    1.0 - d / (qn * n)
                }
            })
            .collect()
    }

    /// Ordinals of the k nearest rows, nearest first.
    pub fn neighbors(&self, x: &SparseVector) -> Vec<usize> {
        let dist = self.distances(x);
        let mut order: Vec<usize> = (0..dist.len()).collect();
        let k = self.k.min(order.len());
        let cmp = |a: &usize, b: &usize| dist[*a].total_cmp(&dist[*b]).then(a.cmp(b));
        if k < order.len() {
            order.select_nth_unstable_by(k, cmp);
            order.truncate(k);
        }
        order.sort_by(cmp);
        order
    }

    pub fn score(&self, x: &SparseVector) -> f64 {
        let nn = self.neighbors(x);
        let pos = nn.iter().filter(|&&i| self.targets[i]).count();
        pos as f64 / nn.len() as f64
    }
}
