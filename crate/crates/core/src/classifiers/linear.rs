//! Linear SVM trained by stochastic subgradient descent on the hinge loss
//! (Pegasos) with `lambda = 1 / (C * n)` and step `1 / (lambda * t)`.
//!
//! The bias is a constant input feature, so it is regularized with the
//! weights. Training rows are first put into a canonical order (by label,
//! then vector contents) and then shuffled once per epoch from the seed, so
//! the result does not depend on the order rows were supplied in.

use std::cmp::Ordering;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::rng_for;
use crate::sparse::SparseVector;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearParams {
    pub c: f64,
    pub epochs: usize,
}

impl Default for LinearParams {
    fn default() -> Self {
        Self { c: 1.0, epochs: 20 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearModel {
    weights: SparseVector,
    bias: f64,
}

pub(super) fn canonical_order(rows: &[SparseVector], targets: &[bool]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..rows.len()).collect();
    order.sort_by(|&a, &b| {
        targets[a]
            .cmp(&targets[b])
            .then_with(|| compare_vectors(&rows[a], &rows[b]))
    });
    order
}

fn compare_vectors(a: &SparseVector, b: &SparseVector) -> Ordering {
    for ((ia, va), (ib, vb)) in a.iter().zip(b.iter()) {
        let o = ia.cmp(&ib).then(va.total_cmp(&vb));
        if o != Ordering::Equal {
            return o;
        }
    }
    a.nnz().cmp(&b.nnz())
}

impl LinearModel {
    pub(super) fn fit(
        params: &LinearParams,
        rows: &[SparseVector],
        targets: &[bool],
        dim: usize,
        seed: u64,
    ) -> Self {
        let n = rows.len();
        let lambda = 1.0 / (params.c * n as f64);
        let radius_sq = 1.0 / lambda;
        let bias_index = dim;
        // w = scale * v
        let mut v = vec![0.0; dim + 1];
        let mut scale = 1.0;
        let mut v_norm_sq = 0.0;
        let mut order = canonical_order(rows, targets);
        let mut rng = rng_for(seed, 0);
        let mut t = 0usize;

        for _ in 0..params.epochs {
            order.shuffle(&mut rng);
            for &i in &order {
                t += 1;
                let x = &rows[i];
                let y = if targets[i] { 1.0 } else { -1.0 };
                let vx: f64 = x.iter().map(|(f, val)| v[f as usize] * val).sum::<f64>() + v[bias_index];
                let violated = y * scale * vx < 1.0;

                if t == 1 {
                    v.fill(0.0);
                    v_norm_sq = 0.0;
                    scale = 1.0;
                } else {
                    scale *= 1.0 - 1.0 / t as f64;
                }
                if violated {
                    let eta = 1.0 / (lambda * t as f64);
                    let a = eta * y / scale;
                    let vx_now = if t == 1 { 0.0 } else { vx };
                    let x_norm_sq = x.squared_norm() + 1.0;
                    v_norm_sq += 2.0 * a * vx_now + a * a * x_norm_sq;
                    for (f, val) in x.iter() {
                        v[f as usize] += a * val;
                    }
                    v[bias_index] += a;
                }
                let w_norm_sq = scale * scale * v_norm_sq;
                if w_norm_sq > radius_sq {
                    scale *= (radius_sq / w_norm_sq).sqrt();
                }
                if scale < 1e-9 {
                    for x in v.iter_mut() {
                        *x *= scale;
                    }
                    v_norm_sq *= scale * scale;
                    scale = 1.0;
                }
            }
        }

        let w: Vec<f64> = v[..dim].iter().map(|x| x * scale).collect();
        Self {
            weights: SparseVector::from_dense(&w),
            bias: v[bias_index] * scale,
        }
    }

    pub fn bias(&self) -> f64 {
        self.bias
    }

    pub fn weights(&self) -> &SparseVector {
        &self.weights
    }

    pub fn margin(&self, x: &SparseVector) -> f64 {
        self.weights.dot(x) + self.bias
    }
}
