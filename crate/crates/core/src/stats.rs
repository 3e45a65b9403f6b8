//! Paired comparisons of two systems scored on the same test items.
//!
//! The bootstrap resamples whole groups (transcripts) with replacement.
//! Resample `r` draws from its own RNG stream `(seed, r)`, so the interval
//! does not depend on evaluation order.

use std::collections::BTreeMap;

use rand::Rng;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ChiSquared, ContinuousCDF};
use statrs::function::erf::erfc;

use crate::classifiers::rng_for;
use crate::error::{Error, Result};
use crate::metrics::{check_lengths, midranks, prf1_accuracy, roc_auc, Confusion};

pub const MIN_BOOTSTRAP: usize = 100;
/// Largest discordant count still tested with the exact binomial.
pub const MCNEMAR_EXACT_MAX: usize = 25;

#[derive(Debug, Clone, PartialEq)]
pub struct PairedRun {
    pub gold: Vec<bool>,
    pub pred_a: Vec<bool>,
    pub pred_b: Vec<bool>,
    pub scores_a: Vec<f64>,
    pub scores_b: Vec<f64>,
    pub groups: Vec<String>,
}

impl PairedRun {
    pub fn validate(&self) -> Result<()> {
        let n = self.gold.len();
        for len in [
            self.pred_a.len(),
            self.pred_b.len(),
            self.scores_a.len(),
            self.scores_b.len(),
            self.groups.len(),
        ] {
            check_lengths(n, len)?;
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.gold.len()
    }

    pub fn is_empty(&self) -> bool {
        self.gold.is_empty()
    }
}

/// Instance indices of each distinct group, groups in sorted key order.
pub fn group_members(groups: &[String]) -> Vec<Vec<usize>> {
    let mut by_key: BTreeMap<&str, Vec<usize>> = BTreeMap::new();
    for (i, g) in groups.iter().enumerate() {
        by_key.entry(g).or_default().push(i);
    }
    by_key.into_values().collect()
}

/// Group ordinals drawn with replacement for resample `r`.
pub fn resample_groups(n_groups: usize, seed: u64, r: usize) -> Vec<usize> {
    let mut rng = rng_for(seed, r as u64);
    (0..n_groups).map(|_| rng.random_range(0..n_groups)).collect()
}

/// Instance indices of a resample: each drawn group contributes all of its
/// members, once per draw.
pub fn expand_resample(drawn: &[usize], members: &[Vec<usize>]) -> Vec<usize> {
    drawn.iter().flat_map(|&g| members[g].iter().copied()).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BootstrapCi {
    pub delta_f1: f64,
    pub ci_low: f64,
    pub ci_high: f64,
}

fn f1_of(c: &Confusion) -> f64 {
    prf1_accuracy(c).f1
}

/// Nearest-rank percentile of sorted data: element `ceil(q * n) - 1`.
pub fn nearest_rank(sorted: &[f64], q: f64) -> f64 {
    let rank = (q * sorted.len() as f64).ceil() as usize;
    sorted[rank.clamp(1, sorted.len()) - 1]
}

/// Point estimate `F1(a) - F1(b)` and its 95% percentile interval from `b`
/// grouped resamples.
pub fn grouped_bootstrap_delta_f1(run: &PairedRun, b: usize, seed: u64) -> Result<BootstrapCi> {
    run.validate()?;
    if b < MIN_BOOTSTRAP {
        return Err(Error::InvalidConfig(format!(
            "bootstrap needs at least {MIN_BOOTSTRAP} resamples, got {b}"
        )));
    }
    let members = group_members(&run.groups);
    if members.len() < 2 {
        return Err(Error::TooFewGroups(members.len()));
    }
    let per_group: Vec<(Confusion, Confusion)> = members
        .iter()
        .map(|idx| {
            let (mut ca, mut cb) = (Confusion::default(), Confusion::default());
            for &i in idx {
                ca.record(run.gold[i], run.pred_a[i]);
                cb.record(run.gold[i], run.pred_b[i]);
            }
            (ca, cb)
        })
        .collect();
    let delta = |drawn: &mut dyn Iterator<Item = usize>| {
        let (mut ca, mut cb) = (Confusion::default(), Confusion::default());
        for g in drawn {
            ca.add(&per_group[g].0);
            cb.add(&per_group[g].1);
        }
        f1_of(&ca) - f1_of(&cb)
    };

    let point = delta(&mut (0..members.len()));
    let mut deltas: Vec<f64> = (0..b)
        .map(|r| delta(&mut resample_groups(members.len(), seed, r).into_iter()))
        .collect();
    deltas.sort_by(f64::total_cmp);
    Ok(BootstrapCi {
        delta_f1: point,
        ci_low: nearest_rank(&deltas, 0.025),
        ci_high: nearest_rank(&deltas, 0.975),
    })
}

/// `(b, c)`: items only A gets right, items only B gets right.
pub fn discordant_counts(run: &PairedRun) -> Result<(usize, usize)> {
    run.validate()?;
    let (mut b, mut c) = (0, 0);
    for i in 0..run.len() {
        let ok_a = run.pred_a[i] == run.gold[i];
        let ok_b = run.pred_b[i] == run.gold[i];
        match (ok_a, ok_b) {
            (true, false) => b += 1,
            (false, true) => c += 1,
            _ => {}
        }
    }
    Ok((b, c))
}

fn binomial(n: u64, k: u64) -> u64 {
    (0..k).fold(1, |acc, i| acc * (n - i) / (i + 1))
}

/// Two-sided McNemar p. Exact binomial for `b + c <= 25`, otherwise the
/// continuity-corrected chi-square with one degree of freedom.
pub fn mcnemar_p(b: usize, c: usize) -> f64 {
    let n = b + c;
    if n == 0 {
        return 1.0;
    }
    if n <= MCNEMAR_EXACT_MAX {
        let k = b.min(c) as u64;
        let tail: u64 = (0..=k).map(|i| binomial(n as u64, i)).sum();
        return (2.0 * tail as f64 / (1u64 << n) as f64).min(1.0);
    }
    let diff = (b as f64 - c as f64).abs();
    let stat = (diff - 1.0).max(0.0).powi(2) / n as f64;
    let chi = ChiSquared::new(1.0).expect("one degree of freedom");
    chi.sf(stat).clamp(0.0, 1.0)
}

pub fn mcnemar(run: &PairedRun) -> Result<f64> {
    let (b, c) = discordant_counts(run)?;
    Ok(mcnemar_p(b, c))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DeLong {
    pub auc_a: f64,
    pub auc_b: f64,
    pub delta_auc: f64,
    pub variance: f64,
    pub p: f64,
}

/// Per-instance structural components: `V10` for positives, `V01` for negatives.
fn structural_components(gold: &[bool], scores: &[f64]) -> (Vec<f64>, Vec<f64>) {
    let pos: Vec<f64> = gold
        .iter()
        .zip(scores)
        .filter(|(g, _)| **g)
        .map(|(_, s)| *s)
        .collect();
    let neg: Vec<f64> = gold
        .iter()
        .zip(scores)
        .filter(|(g, _)| !**g)
        .map(|(_, s)| *s)
        .collect();
    let (m, n) = (pos.len() as f64, neg.len() as f64);
    let all = midranks(scores);
    let rank_pos = midranks(&pos);
    let rank_neg = midranks(&neg);
    let (mut pi, mut ni) = (0, 0);
    let (mut v10, mut v01) = (Vec::new(), Vec::new());
    for (k, &g) in gold.iter().enumerate() {
        if g {
            v10.push((all[k] - rank_pos[pi]) / n);
            pi += 1;
        } else {
            v01.push(1.0 - (all[k] - rank_neg[ni]) / m);
            ni += 1;
        }
    }
    (v10, v01)
}

/// Sample variance of `x - y` with an `n - 1` denominator; 0 below two items.
fn paired_difference_variance(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len();
    if n < 2 {
        return 0.0;
    }
    let d: Vec<f64> = x.iter().zip(y).map(|(a, b)| a - b).collect();
    let mean = d.iter().sum::<f64>() / n as f64;
    d.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64
}

/// DeLong test for two correlated AUCs. `delta_auc` is exactly
/// `roc_auc(a) - roc_auc(b)`. With zero estimated variance the p-value is 1
/// when the AUCs are equal and 0 otherwise.
pub fn delong(run: &PairedRun) -> Result<DeLong> {
    run.validate()?;
    let auc_a = roc_auc(&run.gold, &run.scores_a)?;
    let auc_b = roc_auc(&run.gold, &run.scores_b)?;
    let delta_auc = auc_a - auc_b;
    let (a10, a01) = structural_components(&run.gold, &run.scores_a);
    let (b10, b01) = structural_components(&run.gold, &run.scores_b);
    // var(A - B) = var(A) + var(B) - 2 cov(A, B), per class
    let variance = paired_difference_variance(&a10, &b10) / a10.len() as f64
        + paired_difference_variance(&a01, &b01) / a01.len() as f64;
    let p = if variance <= 0.0 {
        if delta_auc == 0.0 {
            1.0
        } else {
            0.0
        }
    } else {
        let z = delta_auc / variance.sqrt();
        erfc(z.abs() / std::f64::consts::SQRT_2).clamp(0.0, 1.0)
    };
    Ok(DeLong {
        auc_a,
        auc_b,
        delta_auc,
        variance,
        p,
    })
}

/// Holm step-down adjustment. Output is in input order. Ties in p are
/// ordered by comparison key so the result is independent of input order.
pub fn holm_bonferroni(p_values: &[(String, f64)]) -> Vec<(String, f64)> {
    let m = p_values.len();
    let mut order: Vec<usize> = (0..m).collect();
    order.sort_by(|&a, &b| {
        p_values[a]
            .1
            .total_cmp(&p_values[b].1)
            .then_with(|| p_values[a].0.cmp(&p_values[b].0))
    });
    let mut adjusted = vec![0.0; m];
    let mut running: f64 = 0.0;
    for (rank, &i) in order.iter().enumerate() {
        running = running.max(((m - rank) as f64 * p_values[i].1).min(1.0));
        adjusted[i] = running;
    }
    p_values
        .iter()
        .zip(adjusted)
        .map(|((k, _), a)| (k.clone(), a))
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StatsRow {
    pub comparison: String,
    pub delta_f1: f64,
    pub ci_low: f64,
    pub ci_high: f64,
    pub mcnemar_p: f64,
    pub delta_auc: f64,
    pub delong_p: f64,
    pub holm_adjusted_p: f64,
}

pub const STATS_HEADER: &str =
    "comparison,delta_f1,ci_low,ci_high,mcnemar_p,delta_auc,delong_p,holm_adjusted_p";

impl StatsRow {
    pub fn csv_line(&self) -> String {
        format!(
            "{},{},{},{},{},{},{},{}",
            self.comparison,
            self.delta_f1,
            self.ci_low,
            self.ci_high,
            self.mcnemar_p,
            self.delta_auc,
            self.delong_p,
            self.holm_adjusted_p
        )
    }
}

/// All three tests for one comparison; `holm_adjusted_p` starts as the raw
/// McNemar p until [`adjust_family`] runs.
pub fn compare(comparison: &str, run: &PairedRun, b: usize, seed: u64) -> Result<StatsRow> {
    let ci = grouped_bootstrap_delta_f1(run, b, seed)?;
    let mcnemar_p = mcnemar(run)?;
    let d = delong(run)?;
    Ok(StatsRow {
        comparison: comparison.to_string(),
        delta_f1: ci.delta_f1,
        ci_low: ci.ci_low,
        ci_high: ci.ci_high,
        mcnemar_p,
        delta_auc: d.delta_auc,
        delong_p: d.p,
        holm_adjusted_p: mcnemar_p,
    })
}

/// Holm-adjusts the McNemar p-values of one comparison family in place.
pub fn adjust_family(rows: &mut [StatsRow]) {
    let raw: Vec<(String, f64)> = rows.iter().map(|r| (r.comparison.clone(), r.mcnemar_p)).collect();
    for (row, (_, adj)) in rows.iter_mut().zip(holm_bonferroni(&raw)) {
        row.holm_adjusted_p = adj;
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn run_from(gold: &[bool], pred_a: &[bool], pred_b: &[bool], groups: &[&str]) -> PairedRun {
        let score = |p: &[bool]| p.iter().map(|&x| if x { 0.8 } else { 0.2 }).collect();
        PairedRun {
            gold: gold.to_vec(),
            pred_a: pred_a.to_vec(),
            pred_b: pred_b.to_vec(),
            scores_a: score(pred_a),
            scores_b: score(pred_b),
            groups: groups.iter().map(|g| g.to_string()).collect(),
        }
    }

    /// Binomial(n, 1/2) two-sided p by enumerating every outcome.
    fn enumerated_p(b: usize, c: usize) -> f64 {
        let n = b + c;
        if n == 0 {
            return 1.0;
        }
        let mut pmf = vec![1.0f64];
        for _ in 0..n {
            let mut next = vec![0.0; pmf.len() + 1];
            for (k, &v) in pmf.iter().enumerate() {
                next[k] += v / 2.0;
                next[k + 1] += v / 2.0;
            }
            pmf = next;
        }
        let lo = b.min(c);
        let tail: f64 = pmf[..=lo].iter().sum::<f64>() + pmf[n - lo..].iter().sum::<f64>();
        let tail = if n - lo <= lo { 1.0 } else { tail };
        tail.min(1.0)
    }

    #[test]
    fn mcnemar_hand_cases() {
        assert_eq!(mcnemar_p(5, 5), 1.0);
        assert_eq!(mcnemar_p(0, 0), 1.0);
        assert_eq!(mcnemar_p(8, 2), 0.109375);
        assert_eq!(mcnemar_p(2, 8), 0.109375);
        assert!(mcnemar_p(40, 10) < 1e-4);
        assert_eq!(mcnemar_p(20, 20), 1.0);
    }

    #[test]
    fn mcnemar_exact_matches_enumeration() {
        for n in 0..=MCNEMAR_EXACT_MAX {
            for b in 0..=n {
                let c = n - b;
                assert!((mcnemar_p(b, c) - enumerated_p(b, c)).abs() <= 1e-12, "{b},{c}");
            }
        }
    }

    #[test]
    fn holm_hand_cases() {
        let fam = |ps: &[f64]| -> Vec<f64> {
            let input: Vec<(String, f64)> = ps
                .iter()
                .enumerate()
                .map(|(i, &p)| (format!("c{i}"), p))
                .collect();
            holm_bonferroni(&input).into_iter().map(|(_, p)| p).collect()
        };
        assert_eq!(fam(&[0.01]), [0.01]);
        let adj = fam(&[0.04, 0.01, 0.03]);
        let want = [0.06, 0.03, 0.06];
        for (a, w) in adj.iter().zip(want) {
            assert!((a - w).abs() < 1e-15);
        }
        assert_eq!(fam(&[0.05, 0.05]), [0.1, 0.1]);
        assert_eq!(fam(&[0.9, 0.8]), [1.0, 1.0]);
    }

    #[test]
    fn identical_systems_have_null_statistics() {
        let gold = [true, false, true, true, false, false];
        let pred = [true, true, false, true, false, false];
        let run = run_from(&gold, &pred, &pred, &["a", "a", "b", "b", "c", "c"]);
        let ci = grouped_bootstrap_delta_f1(&run, 500, 1).unwrap();
        assert_eq!((ci.delta_f1, ci.ci_low, ci.ci_high), (0.0, 0.0, 0.0));
        assert_eq!(mcnemar(&run).unwrap(), 1.0);
        let d = delong(&run).unwrap();
        assert_eq!((d.delta_auc, d.p), (0.0, 1.0));
    }

    #[test]
    fn bootstrap_needs_two_groups_and_enough_resamples() {
        let run = run_from(&[true, false], &[true, false], &[false, false], &["a", "a"]);
        assert!(matches!(
            grouped_bootstrap_delta_f1(&run, 200, 0),
            Err(Error::TooFewGroups(1))
        ));
        let run = run_from(&[true, false], &[true, false], &[false, false], &["a", "b"]);
        assert!(grouped_bootstrap_delta_f1(&run, 10, 0).is_err());
    }

    #[test]
    fn two_group_interval_comes_from_the_three_multisets() {
        // A beats B only in g1.
        let gold = [true, true, false, true, true, false];
        let pa = [true, true, false, true, false, false];
        let pb = [false, false, false, true, false, false];
        let run = run_from(&gold, &pa, &pb, &["g1", "g1", "g1", "g2", "g2", "g2"]);
        let members = group_members(&run.groups);
        let achievable: Vec<f64> = [[0, 0], [0, 1], [1, 1]]
            .iter()
            .map(|drawn| {
                let idx = expand_resample(drawn, &members);
                let (mut ca, mut cb) = (Confusion::default(), Confusion::default());
                for i in idx {
                    ca.record(gold[i], pa[i]);
                    cb.record(gold[i], pb[i]);
                }
                f1_of(&ca) - f1_of(&cb)
            })
            .collect();
        let ci = grouped_bootstrap_delta_f1(&run, 4000, 9).unwrap();
        // Each multiset has probability >= 1/4, so the 2.5% and 97.5%
        // points land on the smallest and largest achievable deltas.
        let lo = achievable.iter().cloned().fold(f64::INFINITY, f64::min);
        let hi = achievable.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        assert_eq!(ci.ci_low, lo);
        assert_eq!(ci.ci_high, hi);
        assert_eq!(ci.delta_f1, achievable[1]);
    }

    #[test]
    fn resamples_are_unions_of_whole_groups() {
        let groups: Vec<String> = (0..30).map(|i| format!("t{}", i % 7)).collect();
        let members = group_members(&groups);
        for r in 0..200 {
            let drawn = resample_groups(members.len(), 3, r);
            let idx = expand_resample(&drawn, &members);
            let mut count: BTreeMap<&str, usize> = BTreeMap::new();
            for &i in &idx {
                *count.entry(&groups[i]).or_default() += 1;
            }
            for (g, k) in count {
                let size = groups.iter().filter(|x| *x == g).count();
                assert_eq!(k % size, 0);
            }
        }
    }

    #[test]
    fn delong_swap_is_antisymmetric() {
        let gold: Vec<bool> = (0..40).map(|i| i % 3 != 0).collect();
        let sa: Vec<f64> = (0..40)
            .map(|i| ((i * 7) % 11) as f64 + if i % 3 != 0 { 3.0 } else { 0.0 })
            .collect();
        let sb: Vec<f64> = (0..40).map(|i| ((i * 5) % 13) as f64).collect();
        let run = PairedRun {
            pred_a: vec![false; 40],
            pred_b: vec![false; 40],
            groups: vec!["g".into(); 40],
            gold,
            scores_a: sa,
            scores_b: sb,
        };
        let swapped = PairedRun {
            scores_a: run.scores_b.clone(),
            scores_b: run.scores_a.clone(),
            ..run.clone()
        };
        let (d1, d2) = (delong(&run).unwrap(), delong(&swapped).unwrap());
        assert_eq!(d1.delta_auc, -d2.delta_auc);
        assert_eq!(d1.p, d2.p);
        assert_eq!(d1.delta_auc, d1.auc_a - d1.auc_b);
        assert!(d1.p > 0.0 && d1.p < 1.0);
    }

    #[test]
    fn nearest_rank_indices() {
        let v: Vec<f64> = (1..=2000).map(f64::from).collect();
        assert_eq!(nearest_rank(&v, 0.025), 50.0);
        assert_eq!(nearest_rank(&v, 0.975), 1950.0);
    }

    proptest! {
        #[test]
        fn holm_monotone_and_capped(ps in prop::collection::vec(0.0f64..=1.0, 1..30)) {
            let input: Vec<(String, f64)> =
                ps.iter().enumerate().map(|(i, &p)| (format!("c{i:02}"), p)).collect();
            let adj = holm_bonferroni(&input);
            let mut pairs: Vec<(f64, f64)> = input.iter().zip(&adj).map(|(a, b)| (a.1, b.1)).collect();
            for &(raw, a) in &pairs {
                prop_assert!(a >= raw && a <= 1.0);
            }
            pairs.sort_by(|x, y| x.0.total_cmp(&y.0));
            prop_assert!(pairs.windows(2).all(|w| w[0].1 <= w[1].1));
        }

        #[test]
        fn bootstrap_is_seed_deterministic(seed in any::<u64>()) {
            let gold = [true, false, true, true, false, true, false, true];
            let pa = [true, false, true, false, false, true, true, true];
            let pb = [false, false, true, true, true, true, false, false];
            let run = run_from(&gold, &pa, &pb, &["a", "a", "b", "b", "c", "c", "d", "d"]);
            let x = grouped_bootstrap_delta_f1(&run, 200, seed).unwrap();
            let y = grouped_bootstrap_delta_f1(&run, 200, seed).unwrap();
            prop_assert_eq!(x, y);
        }

        #[test]
        fn delong_delta_equals_auc_difference(
            data in prop::collection::vec((any::<bool>(), 0u8..10, 0u8..10), 4..80)
        ) {
            let gold: Vec<bool> = data.iter().map(|d| d.0).collect();
            prop_assume!(gold.iter().any(|&g| g) && gold.iter().any(|&g| !g));
            let n = gold.len();
            let run = PairedRun {
                scores_a: data.iter().map(|d| f64::from(d.1)).collect(),
                scores_b: data.iter().map(|d| f64::from(d.2)).collect(),
                pred_a: vec![true; n],
                pred_b: vec![true; n],
                groups: vec!["g".into(); n],
                gold,
            };
            let d = delong(&run).unwrap();
            let want = roc_auc(&run.gold, &run.scores_a).unwrap() - roc_auc(&run.gold, &run.scores_b).unwrap();
            prop_assert_eq!(d.delta_auc, want);
            prop_assert!((0.0..=1.0).contains(&d.p));
        }
    }
}
