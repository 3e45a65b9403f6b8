//! CART classification tree with Gini splits over sparse features.
//!
//! A split sends `x[feature] <= threshold` left. Absent entries count as
//! zero. Among equally good splits the lowest feature index wins, then the
//! lowest threshold. A node becomes a leaf when it is pure, when it holds
//! fewer than `min_samples_split` (weighted) instances, at `max_depth`, or
//! when no split strictly lowers impurity.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::sparse::SparseVector;

const MIN_GAIN: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum MaxFeatures {
    /// Every feature present in the node is a split candidate.
    All,
    /// `ceil(sqrt(m))` candidates drawn from the `m` features present in the node.
    Sqrt,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TreeParams {
    pub max_depth: usize,
    pub min_samples_split: usize,
    pub max_features: MaxFeatures,
}

impl Default for TreeParams {
    fn default() -> Self {
        Self {
            max_depth: 20,
            min_samples_split: 2,
            max_features: MaxFeatures::All,
        }
    }
}

impl TreeParams {
    pub(super) fn validate(&self) -> Result<()> {
        if self.max_depth == 0 || self.min_samples_split < 2 {
            return Err(Error::InvalidConfig(format!(
                "tree needs depth >= 1 and min split >= 2, got {self:?}"
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Node {
    Leaf {
        positive: f64,
        total: f64,
    },
    Split {
        feature: u32,
        threshold: f64,
        left: u32,
        right: u32,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TreeModel {
    nodes: Vec<Node>,
}

impl TreeModel {
    /// `weights` are per-row multiplicities (bootstrap counts); `None` means
    /// one each. Rows with weight zero are ignored.
    pub(crate) fn fit(
        params: &TreeParams,
        rows: &[SparseVector],
        targets: &[bool],
        weights: Option<&[u32]>,
        dim: usize,
        rng: &mut ChaCha8Rng,
    ) -> Self {
        let weights: Vec<f64> = match weights {
            Some(w) => w.iter().map(|&c| f64::from(c)).collect(),
            None => vec![1.0; rows.len()],
        };
        let root: Vec<usize> = (0..rows.len()).filter(|&i| weights[i] > 0.0).collect();
        let mut builder = Builder {
            params,
            rows,
            targets,
            weights,
            rng,
            stamp: vec![0; dim],
            epoch: 0,
            nodes: Vec::new(),
        };
        builder.grow(root, 0);
        TreeModel { nodes: builder.nodes }
    }

    pub fn nodes(&self) -> &[Node] {
        &self.nodes
    }

    pub fn depth(&self) -> usize {
        fn walk(nodes: &[Node], i: usize) -> usize {
            match &nodes[i] {
                Node::Leaf { .. } => 0,
                Node::Split { left, right, .. } => {
                    1 + walk(nodes, *left as usize).max(walk(nodes, *right as usize))
                }
            }
        }
        walk(&self.nodes, 0)
    }

    /// Positive proportion of the reached leaf.
    pub fn score(&self, x: &SparseVector) -> f64 {
        let mut i = 0;
        loop {
            match &self.nodes[i] {
                Node::Leaf { positive, total } => return positive / total,
                Node::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => {
                    i = if x.get(*feature) <= *threshold {
                        *left as usize
                    } else {
                        *right as usize
                    };
                }
            }
        }
    }
}

struct Builder<'a> {
    params: &'a TreeParams,
    rows: &'a [SparseVector],
    targets: &'a [bool],
    weights: Vec<f64>,
    rng: &'a mut ChaCha8Rng,
    stamp: Vec<u32>,
    epoch: u32,
    nodes: Vec<Node>,
}

struct Split {
    feature: u32,
    threshold: f64,
    quality: f64,
}

fn sq_sum_ratio(pos: f64, total: f64) -> f64 {
    let neg = total - pos;
    (pos * pos + neg * neg) / total
}

fn midpoint(lo: f64, hi: f64) -> f64 {
    let m = lo + (hi - lo) / 2.0;
    if m >= hi {
        lo
    } else {
        m
    }
}

impl Builder<'_> {
    fn grow(&mut self, idx: Vec<usize>, depth: usize) -> u32 {
        let id = self.nodes.len() as u32;
        let (mut total, mut positive) = (0.0, 0.0);
        for &i in &idx {
            total += self.weights[i];
            if self.targets[i] {
                positive += self.weights[i];
            }
        }
        self.nodes.push(Node::Leaf { positive, total });

        let pure = positive == 0.0 || positive == total;
        if pure || depth >= self.params.max_depth || total < self.params.min_samples_split as f64 {
            return id;
        }
        let Some(split) = self.best_split(&idx, total, positive) else {
            return id;
        };
        let (left, right): (Vec<usize>, Vec<usize>) = idx
            .into_iter()
            .partition(|&i| self.rows[i].get(split.feature) <= split.threshold);
        let l = self.grow(left, depth + 1);
        let r = self.grow(right, depth + 1);
        self.nodes[id as usize] = Node::Split {
            feature: split.feature,
            threshold: split.threshold,
            left: l,
            right: r,
        };
        id
    }

    fn next_epoch(&mut self) -> u32 {
        self.epoch += 1;
        if self.epoch == u32::MAX {
            self.stamp.fill(0);
            self.epoch = 1;
        }
        self.epoch
    }

    /// Marks the candidate features of this node in `stamp` and returns the
    /// epoch value that denotes "candidate".
    fn choose_candidates(&mut self, idx: &[usize]) -> Option<u32> {
        if self.params.max_features == MaxFeatures::All {
            return None;
        }
        let seen = self.next_epoch();
        let mut present = Vec::new();
        for &i in idx {
            for &f in self.rows[i].indices() {
                if self.stamp[f as usize] != seen {
                    self.stamp[f as usize] = seen;
                    present.push(f);
                }
            }
        }
        present.sort_unstable();
        let m = (present.len() as f64).sqrt().ceil() as usize;
        for j in 0..m.min(present.len()) {
            let k = self.rng.random_range(j..present.len());
            present.swap(j, k);
        }
        let chosen = self.next_epoch();
        for &f in &present[..m.min(present.len())] {
            self.stamp[f as usize] = chosen;
        }
        Some(chosen)
    }

    fn best_split(&mut self, idx: &[usize], total: f64, positive: f64) -> Option<Split> {
        let candidate = self.choose_candidates(idx);
        let mut entries: Vec<(u32, f64, f64, bool)> = Vec::new();
        for &i in idx {
            let (w, y) = (self.weights[i], self.targets[i]);
            for (f, v) in self.rows[i].iter() {
                if candidate.is_none_or(|c| self.stamp[f as usize] == c) {
                    entries.push((f, v, w, y));
                }
            }
        }
        entries.sort_unstable_by(|a, b| a.0.cmp(&b.0).then(a.1.total_cmp(&b.1)));

        let parent = sq_sum_ratio(positive, total);
        let mut best: Option<Split> = None;
        // (value, weight, positive weight) groups of one feature, ascending
        let mut groups: Vec<(f64, f64, f64)> = Vec::new();
        let mut start = 0;
        while start < entries.len() {
            let feature = entries[start].0;
            let mut end = start;
            while end < entries.len() && entries[end].0 == feature {
                end += 1;
            }
            groups.clear();
            let (mut w_nz, mut p_nz) = (0.0, 0.0);
            for &(_, v, w, y) in &entries[start..end] {
                w_nz += w;
                let p = if y { w } else { 0.0 };
                p_nz += p;
                match groups.last_mut() {
                    Some(g) if g.0 == v => {
                        g.1 += w;
                        g.2 += p;
                    }
                    _ => groups.push((v, w, p)),
                }
            }
            let w_zero = total - w_nz;
            if w_zero > 0.0 {
                let at = groups.partition_point(|g| g.0 < 0.0);
                groups.insert(at, (0.0, w_zero, positive - p_nz));
            }

            let (mut wl, mut pl) = (0.0, 0.0);
            for g in 0..groups.len().saturating_sub(1) {
                wl += groups[g].1;
                pl += groups[g].2;
                let (wr, pr) = (total - wl, positive - pl);
                let quality = sq_sum_ratio(pl, wl) + sq_sum_ratio(pr, wr);
                let gain = (quality - parent) / total;
                if gain > MIN_GAIN && best.as_ref().is_none_or(|b| quality > b.quality) {
                    best = Some(Split {
                        feature,
                        threshold: midpoint(groups[g].0, groups[g + 1].0),
                        quality,
                    });
                }
            }
            start = end;
        }
        best
    }
}
