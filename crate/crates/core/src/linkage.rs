//! Within-pool linkage updates.
//!
//! Small pools are redrawn exactly by enumerating every permutation of the
//! side-2 slots. Larger pools take a run of Metropolis swap moves.

use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::analysis::{AnalysisModel, KeyPredictor, Theta};
use crate::error::{Error, Result};
use crate::pools::{Pool, PoolIndex};
use crate::rng::Rng;

/// Settings for the linkage updates.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LinkConfig {
    /// Pools with `c` below this are enumerated exactly.
    pub exact_below: usize,
    /// Swap proposals per large pool and retries of a pool move.
    pub switch_reps: usize,
}

impl Default for LinkConfig {
    fn default() -> Self {
        LinkConfig { exact_below: 5, switch_reps: 30 }
    }
}

impl LinkConfig {
    pub fn validate(&self) -> Result<()> {
        if self.exact_below < 1 || self.exact_below > 9 {
            return Err(Error::Parameter("the exact-enumeration bound must lie in 1..=9".into()));
        }
        if self.switch_reps < 1 {
            return Err(Error::Parameter("at least one swap repetition is required".into()));
        }
        Ok(())
    }

    pub fn is_exact(&self, c: usize) -> bool {
        c < self.exact_below
    }
}

/// Counters for reporting which update ran.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct LinkStats {
    pub exact_pools: u64,
    pub switch_pools: u64,
    pub swaps_proposed: u64,
    pub swaps_accepted: u64,
}

impl LinkStats {
    pub fn add(&mut self, other: &LinkStats) {
        self.exact_pools += other.exact_pools;
        self.switch_pools += other.switch_pools;
        self.swaps_proposed += other.swaps_proposed;
        self.swaps_accepted += other.swaps_accepted;
    }
}

/// Steps to the next permutation in lexicographic order; false after the last.
pub fn next_permutation(p: &mut [usize]) -> bool {
    if p.len() < 2 {
        return false;
    }
    let mut i = p.len() - 1;
    while i > 0 && p[i - 1] >= p[i] {
        i -= 1;
    }
    if i == 0 {
        return false;
    }
    let mut j = p.len() - 1;
    while p[j] <= p[i - 1] {
        j -= 1;
    }
    p.swap(i - 1, j);
    p[i..].reverse();
    true
}

/// All permutations of `0..c` in lexicographic order.
pub fn permutations(c: usize) -> Vec<Vec<usize>> {
    let mut p: Vec<usize> = (0..c).collect();
    let mut out = vec![p.clone()];
    while next_permutation(&mut p) {
        out.push(p.clone());
    }
    out
}

pub fn ln_factorial(n: usize) -> f64 {
    (2..=n).map(|k| (k as f64).ln()).sum()
}

pub fn log_sum_exp(x: &[f64]) -> f64 {
    let max = x.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return max;
    }
    max + x.iter().map(|v| (v - max).exp()).sum::<f64>().ln()
}

/// `ln f(y1 of side1[p], y2 of side2[q])` for every pair of positions.
pub fn pair_matrix(pool: &Pool, pred: &KeyPredictor, y1: &[f64], y2: &[f64]) -> Vec<Vec<f64>> {
    pool.side1
        .iter()
        .map(|a| {
            let v1 = a.value(y1);
            pool.side2.iter().map(|b| pred.ln_joint(v1, b.value(y2))).collect()
        })
        .collect()
}

/// Normalized log probabilities of every permutation of the side-2 slots.
///
/// Entry `s` belongs to `permutations(c)[s]`, which links `side1[p]` to
/// `side2[perm[p]]`.
pub fn exact_distribution(pool: &Pool, pred: &KeyPredictor, y1: &[f64], y2: &[f64]) -> (Vec<Vec<usize>>, Vec<f64>) {
    let m = pair_matrix(pool, pred, y1, y2);
    let perms = permutations(pool.c());
    let mut lw: Vec<f64> = perms.iter().map(|perm| perm.iter().enumerate().map(|(p, &q)| m[p][q]).sum()).collect();
    let z = log_sum_exp(&lw);
    for w in lw.iter_mut() {
        *w -= z;
    }
    (perms, lw)
}

/// Log probability that an exact draw produces the pool's current linkage.
pub fn exact_log_prob(pool: &Pool, pred: &KeyPredictor, y1: &[f64], y2: &[f64]) -> f64 {
    let m = pair_matrix(pool, pred, y1, y2);
    let current: f64 = (0..pool.c()).map(|p| m[p][p]).sum();
    let mut perm: Vec<usize> = (0..pool.c()).collect();
    let mut lw = Vec::new();
    loop {
        lw.push(perm.iter().enumerate().map(|(p, &q)| m[p][q]).sum::<f64>());
        if !next_permutation(&mut perm) {
            break;
        }
    }
    current - log_sum_exp(&lw)
}

fn draw_index(log_probs: &[f64], rng: &mut Rng) -> usize {
    let mut u: f64 = rng.random();
    for (s, lp) in log_probs.iter().enumerate() {
        u -= lp.exp();
        if u <= 0.0 {
            return s;
        }
    }
    log_probs.iter().rposition(|lp| lp.is_finite()).unwrap_or(0)
}

/// Redraws the linkage of a pool from its exact conditional.
pub fn exact_step(pool: &mut Pool, pred: &KeyPredictor, y1: &[f64], y2: &[f64], rng: &mut Rng) {
    if pool.c() < 2 {
        return;
    }
    let (perms, lp) = exact_distribution(pool, pred, y1, y2);
    let s = draw_index(&lp, rng);
    let old = pool.side2.clone();
    for (p, &q) in perms[s].iter().enumerate() {
        pool.side2[p] = old[q];
    }
}

/// Draws two distinct positions uniformly.
pub fn draw_swap(c: usize, rng: &mut Rng) -> (usize, usize) {
    let a = rng.random_range(0..c);
    let mut b = rng.random_range(0..c - 1);
    if b >= a {
        b += 1;
    }
    (a, b)
}

/// Runs `reps` Metropolis swap moves on the side-2 slots.
pub fn switch_step(pool: &mut Pool, pred: &KeyPredictor, y1: &[f64], y2: &[f64], reps: usize, rng: &mut Rng, stats: &mut LinkStats) {
    let c = pool.c();
    if c < 2 {
        return;
    }
    for _ in 0..reps {
        let (a, b) = draw_swap(c, rng);
        let y1a = pool.side1[a].value(y1);
        let y1b = pool.side1[b].value(y1);
        let y2a = pool.side2[a].value(y2);
        let y2b = pool.side2[b].value(y2);
        let before = pred.ln_joint(y1a, y2a) + pred.ln_joint(y1b, y2b);
        let after = pred.ln_joint(y1a, y2b) + pred.ln_joint(y1b, y2a);
        stats.swaps_proposed += 1;
        let u: f64 = rng.random();
        if u.ln() < after - before {
            pool.side2.swap(a, b);
            stats.swaps_accepted += 1;
        }
    }
}

/// Updates the linkage of one pool with the rule that fits its size.
pub fn update_pool(pool: &mut Pool, pred: &KeyPredictor, y1: &[f64], y2: &[f64], cfg: &LinkConfig, rng: &mut Rng, stats: &mut LinkStats) {
    if cfg.is_exact(pool.c()) {
        stats.exact_pools += 1;
        exact_step(pool, pred, y1, y2, rng);
    } else {
        stats.switch_pools += 1;
        switch_step(pool, pred, y1, y2, cfg.switch_reps, rng, stats);
    }
}

/// Updates every pool in key order.
pub fn sample_c(
    index: &mut PoolIndex,
    model: &AnalysisModel,
    theta: &Theta,
    y1: &[f64],
    y2: &[f64],
    cfg: &LinkConfig,
    rng: &mut Rng,
) -> LinkStats {
    let mut stats = LinkStats::default();
    for (key, pool) in index.pools.iter_mut() {
        let pred = model.predictor(theta, key);
        update_pool(pool, &pred, y1, y2, cfg, rng, &mut stats);
    }
    stats
}

/// `ln( c_k! c_k*! / (c_k'! c_k*'!) )` for a move between two pools.
///
/// Each pool may change by at most one linked position.
pub fn ln_c_prior_ratio(c_k_old: usize, c_k_new: usize, c_ks_old: usize, c_ks_new: usize) -> Result<f64> {
    for (a, b) in [(c_k_old, c_k_new), (c_ks_old, c_ks_new)] {
        if a.abs_diff(b) > 1 {
            return Err(Error::Contract(format!("pool size changed from {a} to {b}")));
        }
    }
    Ok(ln_factorial(c_k_old) + ln_factorial(c_ks_old) - ln_factorial(c_k_new) - ln_factorial(c_ks_new))
}

/// `ln( m_k'! m_k*'! / (m_k! m_k*!) )` where `m` counts the dummies of a pool.
///
/// Dummies are interchangeable, so one arrangement of real records stands
/// for `m!` permutations of the labelled slots.
pub fn ln_dummy_count_ratio(old_k: &Pool, new_k: &Pool, old_s: &Pool, new_s: &Pool) -> f64 {
    let m = |p: &Pool| p.n1().abs_diff(p.n2());
    ln_factorial(m(new_k)) + ln_factorial(m(new_s)) - ln_factorial(m(old_k)) - ln_factorial(m(old_s))
}

pub fn c_prior_length_ratio(c_k_old: usize, c_k_new: usize, c_ks_old: usize, c_ks_new: usize) -> Result<f64> {
    ln_c_prior_ratio(c_k_old, c_k_new, c_ks_old, c_ks_new).map(f64::exp)
}

/// Probability that one uniform swap among `c` slots hits a given neighbour.
pub fn swap_proposal_prob(c: usize) -> f64 {
    2.0 / (c as f64 * (c as f64 - 1.0))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn lexicographic_permutations() {
        let p = permutations(3);
        assert_eq!(p.len(), 6);
        assert_eq!(p[0], vec![0, 1, 2]);
        assert_eq!(p[1], vec![0, 2, 1]);
        assert_eq!(p[5], vec![2, 1, 0]);
        assert_eq!(permutations(4).len(), 24);
        assert_eq!(permutations(1), vec![vec![0]]);
    }

    #[test]
    fn c_prior_ratio_values() {
        assert!((c_prior_length_ratio(3, 2, 1, 2).unwrap() - 1.5).abs() < 1e-12);
        assert!((c_prior_length_ratio(2, 1, 2, 2).unwrap() - 2.0).abs() < 1e-12);
        assert!(c_prior_length_ratio(4, 2, 1, 1).is_err());
    }

    #[test]
    fn swap_probability_matches_factorial_form() {
        for c in 2..9usize {
            let f = |n: usize| (1..=n).product::<usize>() as f64;
            let expected = f(c - 2) * 2.0 / f(c);
            assert!((swap_proposal_prob(c) - expected).abs() < 1e-12);
        }
    }

    #[test]
    fn log_sum_exp_is_stable() {
        let v = [-1000.0, -1000.0];
        assert!((log_sum_exp(&v) - (-1000.0 + 2f64.ln())).abs() < 1e-9);
        assert_eq!(log_sum_exp(&[f64::NEG_INFINITY]), f64::NEG_INFINITY);
    }
}
