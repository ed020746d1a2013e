//! Exact posteriors of tiny instances by enumeration.
//!
//! With the regression parameters, the latent-class model and the error
//! rates held fixed, the posterior of the true file-2 codes is computed by
//! summing over every linkage of every pool, with dummy outcomes integrated
//! out.

use std::collections::{BTreeMap, HashSet};

use crate::analysis::Theta;
use crate::data::Code;
use crate::error::{Error, Result};
use crate::error_model::GammaParams;
use crate::latent_class::Psi;
use crate::linkage::{ln_factorial, log_sum_exp, permutations};
use crate::pools::{PoolIndex, Slot};
use crate::sampler::Problem;

/// `(record, field)` of every non-seed matching value of file 2.
pub fn free_slots(problem: &Problem) -> Vec<(usize, usize)> {
    let mut out = Vec::new();
    for i in 0..problem.f2.len() {
        if problem.f2.is_t1(i) {
            continue;
        }
        for j in problem.schema.matching_fields() {
            if !problem.f2.is_seed(i, j) {
                out.push((i, j));
            }
        }
    }
    out
}

/// The true codes of the free slots in a state.
pub fn slot_codes(slots: &[(usize, usize)], b2: &[Code], n_fields: usize) -> Vec<Code> {
    slots.iter().map(|&(i, j)| b2[i * n_fields + j]).collect()
}

/// Log of the linkage-marginal pool likelihood summed over all pools.
pub fn ln_linkage_marginal(problem: &Problem, theta: &Theta, index: &PoolIndex) -> f64 {
    let (y1, y2) = (&problem.f1.y, &problem.f2.y);
    let mut total = 0.0;
    for (key, pool) in &index.pools {
        let pred = problem.model.predictor(theta, key);
        total += pool.t1.iter().map(|&(r, i)| pred.ln_joint(y1[r], y2[i])).sum::<f64>();
        let c = pool.c();
        let g: Vec<Vec<f64>> = pool
            .side1
            .iter()
            .map(|a| {
                pool.side2
                    .iter()
                    .map(|b| match (*a, *b) {
                        (Slot::Real(r), Slot::Real(i)) => pred.ln_joint(y1[r], y2[i]),
                        (Slot::Real(r), Slot::Dummy { .. }) => pred.ln_marginal_y1(y1[r]),
                        (Slot::Dummy { .. }, Slot::Real(i)) => pred.ln_marginal_y2(y2[i]),
                        _ => f64::NEG_INFINITY,
                    })
                    .collect()
            })
            .collect();
        let terms: Vec<f64> = permutations(c).iter().map(|perm| perm.iter().enumerate().map(|(p, &q)| g[p][q]).sum()).collect();
        total += log_sum_exp(&terms) - ln_factorial(c);
    }
    total
}

/// Posterior probability of every configuration of the free slots.
///
/// `labels` gives the latent class of each file-2 record. With `restrict`,
/// a record whose key differs from its reported key must carry a key that
/// occurs in file 1, as in the restricted moves.
pub fn code_posterior(
    problem: &Problem,
    theta: &Theta,
    psi: &Psi,
    labels: &[usize],
    gamma: &GammaParams,
    restrict: bool,
) -> Result<BTreeMap<Vec<Code>, f64>> {
    let slots = free_slots(problem);
    if slots.len() > 16 {
        return Err(Error::Parameter(format!("{} free values are too many to enumerate", slots.len())));
    }
    let nf = problem.schema.len();
    let f1_keys: HashSet<Vec<Code>> = (0..problem.f1.len()).map(|r| problem.f1.row(r).to_vec()).collect();
    let reported: Vec<Code> = (0..problem.f2.len()).flat_map(|i| problem.f2.row(i).to_vec()).collect();
    let levels: Vec<Code> = slots.iter().map(|&(_, j)| problem.schema.levels(j)).collect();
    let mut codes: Vec<Code> = vec![1; slots.len()];
    let mut ln_w = BTreeMap::new();
    loop {
        let mut b2 = reported.clone();
        let mut lw = 0.0;
        for (s, &(i, j)) in slots.iter().enumerate() {
            b2[i * nf + j] = codes[s];
            let rate = gamma.rate(j);
            lw += if codes[s] == reported[i * nf + j] {
                (1.0 - rate).ln()
            } else {
                rate.ln() - ((levels[s] - 1) as f64).ln()
            };
            lw += psi.prob(labels[i], j, codes[s]).ln();
        }
        let legal = !restrict
            || (0..problem.f2.len()).all(|i| {
                let key = &b2[i * nf..(i + 1) * nf];
                key == &reported[i * nf..(i + 1) * nf] || f1_keys.contains(key)
            });
        if legal {
            let index = PoolIndex::build(&problem.f1, &problem.f2, &b2);
            lw += ln_linkage_marginal(problem, theta, &index);
            ln_w.insert(codes.clone(), lw);
        }
        let mut s = 0;
        loop {
            if s == codes.len() {
                let z = log_sum_exp(&ln_w.values().copied().collect::<Vec<_>>());
                return Ok(ln_w.into_iter().map(|(k, v)| (k, (v - z).exp())).collect());
            }
            if codes[s] < levels[s] {
                codes[s] += 1;
                break;
            }
            codes[s] = 1;
            s += 1;
        }
    }
}

/// Total variation distance between two distributions on the same keys.
pub fn total_variation<K: Ord + Clone>(p: &BTreeMap<K, f64>, q: &BTreeMap<K, f64>) -> f64 {
    let keys: std::collections::BTreeSet<&K> = p.keys().chain(q.keys()).collect();
    0.5 * keys.iter().map(|k| (p.get(*k).copied().unwrap_or(0.0) - q.get(*k).copied().unwrap_or(0.0)).abs()).sum::<f64>()
}

/// Empirical distribution of observed keys.
pub fn frequencies<K: Ord + Clone>(draws: &[K]) -> BTreeMap<K, f64> {
    let mut m = BTreeMap::new();
    for d in draws {
        *m.entry(d.clone()).or_insert(0.0) += 1.0;
    }
    let n = draws.len() as f64;
    m.values_mut().for_each(|v| *v /= n);
    m
}
