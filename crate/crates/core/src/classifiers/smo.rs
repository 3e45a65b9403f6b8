//! RBF-kernel SVM solved in the dual by sequential minimal optimization.
//!
//! Working pairs are chosen by maximal violation for the first index and
//! second-order gain for the second (Fan, Chen and Lin, 2005). The solver
//! stops once the maximal KKT violation drops below `tolerance`. If the
//! iteration cap is hit first, the current feasible iterate is kept and the
//! model is marked `converged = false`.
//!
//! Rows are put into a canonical order before solving, so the solution does
//! not depend on the order rows were supplied in.

use std::collections::VecDeque;
use std::rc::Rc;

use serde::{Deserialize, Serialize};

use super::linear::canonical_order;
use crate::error::{Error, Result};
use crate::sparse::SparseVector;

const TAU: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RbfParams {
    pub c: f64,
    /// `None` selects `1 / (mean number of nonzero features per row)`.
    pub gamma: Option<f64>,
    pub tolerance: f64,
    /// `None` selects `max(100_000, 100 * n)`.
    pub max_iter: Option<usize>,
    pub cache_mb: usize,
}

impl Default for RbfParams {
    fn default() -> Self {
        Self {
            c: 1.0,
            gamma: None,
            tolerance: 1e-3,
            max_iter: None,
            cache_mb: 256,
        }
    }
}

fn positive(x: f64) -> bool {
    x.is_finite() && x > 0.0
}

impl RbfParams {
    pub(super) fn validate(&self) -> Result<()> {
        let gamma_ok = self.gamma.is_none_or(positive);
        if !positive(self.c) || !gamma_ok || !positive(self.tolerance) {
            return Err(Error::InvalidConfig(format!(
                "RBF SVM needs C > 0, gamma > 0 and tolerance > 0, got {self:?}"
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RbfModel {
    gamma: f64,
    rho: f64,
    /// `alpha_i * y_i` per support vector
    coef: Vec<f64>,
    support: Vec<SparseVector>,
    support_sq_norms: Vec<f64>,
    pub converged: bool,
    pub iterations: usize,
}

/// Automatic gamma: inverse of the mean number of active features per row.
pub fn auto_gamma(rows: &[SparseVector]) -> f64 {
    let total: usize = rows.iter().map(SparseVector::nnz).sum();
    if total == 0 {
        1.0
    } else {
        rows.len() as f64 / total as f64
    }
}

struct KernelColumns<'a> {
    rows: Vec<&'a SparseVector>,
    y: Vec<f64>,
    sq_norms: Vec<f64>,
    gamma: f64,
    scatter: Vec<f64>,
    cache: Vec<Option<Rc<[f64]>>>,
    fifo: VecDeque<usize>,
    capacity: usize,
}

impl KernelColumns<'_> {
    /// Column `i` of `Q`, where `Q_ij = y_i y_j K(x_i, x_j)`.
    fn column(&mut self, i: usize) -> Rc<[f64]> {
        if let Some(col) = &self.cache[i] {
            return Rc::clone(col);
        }
        let xi = self.rows[i];
        for (f, v) in xi.iter() {
            self.scatter[f as usize] = v;
        }
        let col: Rc<[f64]> = (0..self.rows.len())
            .map(|j| {
                let dot: f64 = self.rows[j]
                    .iter()
                    .map(|(f, v)| self.scatter[f as usize] * v)
                    .sum();
                let d = (self.sq_norms[i] + self.sq_norms[j] - 2.0 * dot).max(0.0);
                self.y[i] * self.y[j] * (-self.gamma * d).exp()
            })
            .collect();
        for (f, _) in xi.iter() {
            self.scatter[f as usize] = 0.0;
        }
        if self.fifo.len() >= self.capacity {
            if let Some(old) = self.fifo.pop_front() {
                self.cache[old] = None;
            }
        }
        self.fifo.push_back(i);
        self.cache[i] = Some(Rc::clone(&col));
        col
    }
}

impl RbfModel {
    pub(super) fn fit(params: &RbfParams, rows: &[SparseVector], targets: &[bool], dim: usize) -> Self {
        let order = canonical_order(rows, targets);
        let n = rows.len();
        let c = params.c;
        let gamma = params.gamma.unwrap_or_else(|| auto_gamma(rows));
        let max_iter = params.max_iter.unwrap_or((100 * n).max(100_000));
        let capacity = ((params.cache_mb << 20) / (8 * n.max(1))).max(2);

        let rows_c: Vec<&SparseVector> = order.iter().map(|&i| &rows[i]).collect();
        let y: Vec<f64> = order
            .iter()
            .map(|&i| if targets[i] { 1.0 } else { -1.0 })
            .collect();
        let mut q = KernelColumns {
            sq_norms: rows_c.iter().map(|r| r.squared_norm()).collect(),
            rows: rows_c,
            y: y.clone(),
            gamma,
            scatter: vec![0.0; dim],
            cache: vec![None; n],
            fifo: VecDeque::new(),
            capacity,
        };

        let mut alpha = vec![0.0; n];
        let mut grad = vec![-1.0; n];
        let mut iterations = 0;
        let mut converged = false;

        while iterations < max_iter {
            // First index: maximal violation over I_up.
            let mut g_max = f64::NEG_INFINITY;
            let mut i_sel = None;
            for t in 0..n {
                let up = if y[t] > 0.0 { alpha[t] < c } else { alpha[t] > 0.0 };
                if up && -y[t] * grad[t] > g_max {
                    g_max = -y[t] * grad[t];
                    i_sel = Some(t);
                }
            }
            let Some(i) = i_sel else {
                converged = true;
                break;
            };
            let q_i = q.column(i);

            // Second index: best second-order decrease over I_low.
            let mut g_max2 = f64::NEG_INFINITY;
            let mut j_sel = None;
            let mut best_obj = f64::INFINITY;
            for t in 0..n {
                let low = if y[t] > 0.0 { alpha[t] > 0.0 } else { alpha[t] < c };
                if !low {
                    continue;
                }
                let yg = y[t] * grad[t];
                g_max2 = g_max2.max(yg);
                let grad_diff = g_max + yg;
                if grad_diff > 0.0 {
                    // K_ii = K_tt = 1 for the RBF kernel
                    let quad = 2.0 - 2.0 * y[i] * y[t] * q_i[t];
                    let quad = if quad > 0.0 { quad } else { TAU };
                    let obj = -(grad_diff * grad_diff) / quad;
                    if obj < best_obj {
                        best_obj = obj;
                        j_sel = Some(t);
                    }
                }
            }
            let Some(j) = j_sel.filter(|_| g_max + g_max2 >= params.tolerance) else {
                converged = true;
                break;
            };
            iterations += 1;
            let q_j = q.column(j);

            let (old_i, old_j) = (alpha[i], alpha[j]);
            if y[i] != y[j] {
                let quad = 2.0 + 2.0 * q_i[j];
                let quad = if quad > 0.0 { quad } else { TAU };
                let delta = (-grad[i] - grad[j]) / quad;
                let diff = alpha[i] - alpha[j];
                alpha[i] += delta;
                alpha[j] += delta;
                if diff > 0.0 {
                    if alpha[j] < 0.0 {
                        alpha[j] = 0.0;
                        alpha[i] = diff;
                    }
                } else if alpha[i] < 0.0 {
                    alpha[i] = 0.0;
                    alpha[j] = -diff;
                }
                if diff > 0.0 {
                    if alpha[i] > c {
                        alpha[i] = c;
                        alpha[j] = c - diff;
                    }
                } else if alpha[j] > c {
                    alpha[j] = c;
                    alpha[i] = c + diff;
                }
            } else {
                let quad = 2.0 - 2.0 * q_i[j];
                let quad = if quad > 0.0 { quad } else { TAU };
                let delta = (grad[i] - grad[j]) / quad;
                let sum = alpha[i] + alpha[j];
                alpha[i] -= delta;
                alpha[j] += delta;
                if sum > c {
                    if alpha[i] > c {
                        alpha[i] = c;
                        alpha[j] = sum - c;
                    }
                } else if alpha[j] < 0.0 {
                    alpha[j] = 0.0;
                    alpha[i] = sum;
                }
                if sum > c {
                    if alpha[j] > c {
                        alpha[j] = c;
                        alpha[i] = sum - c;
                    }
                } else if alpha[i] < 0.0 {
                    alpha[i] = 0.0;
                    alpha[j] = sum;
                }
            }

            let (d_i, d_j) = (alpha[i] - old_i, alpha[j] - old_j);
            for t in 0..n {
                grad[t] += q_i[t] * d_i + q_j[t] * d_j;
            }
        }

        let rho = compute_rho(&alpha, &grad, &y, c);
        let mut coef = Vec::new();
        let mut support = Vec::new();
        for (k, &a) in alpha.iter().enumerate() {
            if a > 0.0 {
                coef.push(a * y[k]);
                support.push(q.rows[k].clone());
            }
        }
        Self {
            gamma,
            rho,
            support_sq_norms: support.iter().map(SparseVector::squared_norm).collect(),
            coef,
            support,
            converged,
            iterations,
        }
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    pub fn support_len(&self) -> usize {
        self.support.len()
    }

    /// Signed decision value `sum(alpha_i y_i K(x_i, x)) - rho`.
    pub fn margin(&self, x: &SparseVector) -> f64 {
        let xn = x.squared_norm();
        let mut sum = -self.rho;
        for ((sv, &sn), &c) in self.support.iter().zip(&self.support_sq_norms).zip(&self.coef) {
            let d = (xn + sn - 2.0 * sv.dot(x)).max(0.0);
            sum += c * (-self.gamma * d).exp();
        }
        sum
    }
}

fn compute_rho(alpha: &[f64], grad: &[f64], y: &[f64], c: f64) -> f64 {
    let (mut ub, mut lb) = (f64::INFINITY, f64::NEG_INFINITY);
    let (mut free, mut sum_free) = (0usize, 0.0);
    for t in 0..alpha.len() {
        let yg = y[t] * grad[t];
        if alpha[t] >= c {
            if y[t] < 0.0 {
                ub = ub.min(yg);
            } else {
                lb = lb.max(yg);
            }
        } else if alpha[t] <= 0.0 {
            if y[t] > 0.0 {
                ub = ub.min(yg);
            } else {
                lb = lb.max(yg);
            }
        } else {
            free += 1;
            sum_free += yg;
        }
    }
    if free > 0 {
        sum_free / free as f64
    } else {
        (ub + lb) / 2.0
    }
}
