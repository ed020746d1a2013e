//! Metropolis-Hastings moves of file-2 records between pools.
//!
//! A move picks one non-seed matching field of a file-2 record, proposes a
//! new error indicator and a new true code, and so moves the record from its
//! pool `k` to the pool `k*` of the changed key. Both pools are rebuilt:
//!
//! * leaving `k`: when side 1 has dummies, one side-1 dummy goes away (the one
//!   linked to the record if there is one, otherwise a uniformly chosen one);
//!   otherwise the record's slot becomes a side-2 dummy whose outcome is
//!   imputed from its partner.
//! * entering `k*`: a uniformly chosen side-2 dummy is replaced by the record
//!   when there is one; otherwise a side-1 dummy with an imputed outcome is
//!   added as its partner.
//!
//! The linkage of each rebuilt pool is then proposed by exact enumeration
//! (small pools) or by one swap (large pools). The acceptance ratio carries
//! the probability of every random choice in both directions, including the
//! densities of imputed outcomes, so a move is reversible in the augmented
//! space of linkages and dummy outcomes.

use std::collections::{BTreeSet, HashMap, HashSet};

use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::analysis::{AnalysisModel, KeyPredictor, Theta};
use crate::data::{Code, InCommonSchema, RecordTable};
use crate::error::{Error, Result};
use crate::error_model::{reporting_ratio, GammaParams};
use crate::latent_class::Psi;
use crate::linkage::{draw_swap, exact_log_prob, exact_step, ln_c_prior_ratio, ln_dummy_count_ratio, swap_proposal_prob, LinkConfig};
use crate::pools::{DummyIds, Pool, PoolKey, Slot, SlotId};
use crate::rng::Rng;
use crate::state::LinkState;

/// How the moves of one sweep are combined.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SweepMode {
    /// Every move is judged against the state at the start of the sweep and
    /// accepted moves are applied together afterwards.
    Snapshot,
    /// Moves are judged and applied one record at a time.
    Sequential,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MoveConfig {
    /// Only propose codes whose resulting key occurs in file 1.
    pub restrict_to_file1_keys: bool,
    pub sweep: SweepMode,
}

impl Default for MoveConfig {
    fn default() -> Self {
        MoveConfig { restrict_to_file1_keys: true, sweep: SweepMode::Snapshot }
    }
}

/// Everything a move reads but does not change.
pub struct MoveContext<'a> {
    pub schema: &'a InCommonSchema,
    pub f1: &'a RecordTable,
    pub f2: &'a RecordTable,
    pub model: &'a AnalysisModel,
    pub theta: &'a Theta,
    pub psi: &'a Psi,
    pub gamma: &'a GammaParams,
    pub f1_keys: &'a HashSet<PoolKey>,
    pub moves: &'a MoveConfig,
    pub link: &'a LinkConfig,
}

pub fn file1_keys(f1: &RecordTable) -> HashSet<PoolKey> {
    (0..f1.len()).map(|r| f1.row(r).to_vec()).collect()
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct MoveStats {
    /// Moves that reached the acceptance test.
    pub proposed: u64,
    pub accepted: u64,
    /// Moves dropped because no legal code existed.
    pub aborted: u64,
    /// Moves that proposed no change.
    pub unchanged: u64,
}

impl MoveStats {
    pub fn add(&mut self, o: &MoveStats) {
        self.proposed += o.proposed;
        self.accepted += o.accepted;
        self.aborted += o.aborted;
        self.unchanged += o.unchanged;
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Rule {
    /// Side 1 has dummies and the record is linked to one of them.
    DropLinkedDummy,
    /// Side 1 has dummies and the record is linked to a real record.
    DropOtherDummy,
    /// Side 1 has no dummies; the record's slot becomes a dummy.
    LeaveDummy,
    /// Side 2 has dummies; one is replaced by the record.
    ReplaceDummy,
    /// Side 2 has no dummies; a side-1 dummy is added as partner.
    AddDummy,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum PermMode {
    Keep,
    Exact,
    Swap,
}

fn leaving_rule(pool: &Pool, i: usize) -> Option<(Rule, usize)> {
    let pos = pool.position_of_f2(i)?;
    let rule = if pool.n2() > pool.n1() {
        if pool.side1[pos].is_dummy() {
            Rule::DropLinkedDummy
        } else {
            Rule::DropOtherDummy
        }
    } else {
        Rule::LeaveDummy
    };
    Some((rule, pos))
}

fn entering_rule(pool: &Pool) -> Rule {
    if pool.n2() < pool.n1() {
        Rule::ReplaceDummy
    } else {
        Rule::AddDummy
    }
}

fn perm_mode(rule: Rule, c: usize, link: &LinkConfig) -> PermMode {
    if c < 2 {
        return PermMode::Keep;
    }
    let exact = link.is_exact(c);
    match rule {
        Rule::DropLinkedDummy => {
            if exact {
                PermMode::Keep
            } else {
                PermMode::Swap
            }
        }
        Rule::DropOtherDummy => {
            if exact {
                PermMode::Exact
            } else {
                PermMode::Keep
            }
        }
        _ => {
            if exact {
                PermMode::Exact
            } else {
                PermMode::Swap
            }
        }
    }
}

/// Structural change when a record leaves. `dropped` is the side-1 dummy
/// position removed; `added` is the new side-2 dummy.
fn leaving_base(from: &Pool, pos: usize, rule: Rule, dropped: Option<usize>, added: Option<Slot>) -> Pool {
    let mut p = from.clone();
    match rule {
        Rule::DropLinkedDummy => {
            p.side1.remove(pos);
            p.side2.remove(pos);
        }
        Rule::DropOtherDummy => {
            let d = dropped.expect("dropped dummy position");
            p.side2[pos] = p.side2[d];
            p.side1.remove(d);
            p.side2.remove(d);
        }
        Rule::LeaveDummy => p.side2[pos] = added.expect("new dummy"),
        _ => unreachable!("not a leaving rule"),
    }
    p
}

fn entering_base(from: &Pool, i: usize, rule: Rule, replaced: Option<usize>, added: Option<Slot>) -> Pool {
    let mut p = from.clone();
    match rule {
        Rule::ReplaceDummy => p.side2[replaced.expect("replaced dummy position")] = Slot::Real(i),
        Rule::AddDummy => {
            p.side1.push(added.expect("new dummy"));
            p.side2.push(Slot::Real(i));
        }
        _ => unreachable!("not an entering rule"),
    }
    p
}

fn apply_perm(base: &Pool, mode: PermMode, pred: &KeyPredictor, y1: &[f64], y2: &[f64], rng: &mut Rng) -> Pool {
    let mut p = base.clone();
    match mode {
        PermMode::Keep => {}
        PermMode::Exact => exact_step(&mut p, pred, y1, y2, rng),
        PermMode::Swap => {
            let (a, b) = draw_swap(p.c(), rng);
            p.side2.swap(a, b);
        }
    }
    p
}

fn link_map(p: &Pool) -> HashMap<SlotId, SlotId> {
    p.side1.iter().zip(&p.side2).map(|(a, b)| (a.id(), b.id())).collect()
}

fn ln_perm_prob(base: &Pool, to: &Pool, mode: PermMode, pred: &KeyPredictor, y1: &[f64], y2: &[f64]) -> f64 {
    if !base.same_members(to) {
        return f64::NEG_INFINITY;
    }
    match mode {
        PermMode::Keep => {
            if base.links() == to.links() {
                0.0
            } else {
                f64::NEG_INFINITY
            }
        }
        PermMode::Exact => exact_log_prob(to, pred, y1, y2),
        PermMode::Swap => {
            let a = link_map(base);
            let b = link_map(to);
            let diff: Vec<&SlotId> = a.keys().filter(|k| a[*k] != b[*k]).collect();
            if diff.len() == 2 && a[diff[0]] == b[diff[1]] && a[diff[1]] == b[diff[0]] {
                swap_proposal_prob(to.c()).ln()
            } else {
                f64::NEG_INFINITY
            }
        }
    }
}

/// Slot identities tagged with their side.
fn ids(p: &Pool) -> BTreeSet<(u8, SlotId)> {
    let one = p.side1.iter().map(|s| (1, s.id()));
    one.chain(p.side2.iter().map(|s| (2, s.id()))).collect()
}

fn find_slot(p: &Pool, (side, id): (u8, SlotId)) -> Option<(u8, usize, Slot)> {
    let v = if side == 1 { &p.side1 } else { &p.side2 };
    v.iter().position(|s| s.id() == id).map(|q| (side, q, v[q]))
}

/// Log probability (density for imputed outcomes) that record `i` leaving
/// `from` yields `to`.
fn ln_leaving_prob(ctx: &MoveContext, pred: &KeyPredictor, from: &Pool, to: &Pool, i: usize) -> f64 {
    let Some((rule, pos)) = leaving_rule(from, i) else {
        return f64::NEG_INFINITY;
    };
    let (y1, y2) = (&ctx.f1.y, &ctx.f2.y);
    let before = ids(from);
    let after = ids(to);
    let removed: Vec<(u8, SlotId)> = before.difference(&after).copied().collect();
    let added: Vec<(u8, SlotId)> = after.difference(&before).copied().collect();
    let (lp, base) = match rule {
        Rule::DropLinkedDummy | Rule::DropOtherDummy => {
            let me = (2, SlotId::Real(i));
            if !added.is_empty() || removed.len() != 2 || !removed.contains(&me) {
                return f64::NEG_INFINITY;
            }
            let gone = if removed[0] == me { removed[1] } else { removed[0] };
            let Some((1, d, slot)) = find_slot(from, gone) else {
                return f64::NEG_INFINITY;
            };
            if !slot.is_dummy() {
                return f64::NEG_INFINITY;
            }
            if rule == Rule::DropLinkedDummy {
                if d != pos {
                    return f64::NEG_INFINITY;
                }
                (0.0, leaving_base(from, pos, rule, None, None))
            } else {
                let m = from.n2() - from.n1();
                (-(m as f64).ln(), leaving_base(from, pos, rule, Some(d), None))
            }
        }
        Rule::LeaveDummy => {
            if removed != [(2, SlotId::Real(i))] || added.len() != 1 {
                return f64::NEG_INFINITY;
            }
            let Some((2, _, slot)) = find_slot(to, added[0]) else {
                return f64::NEG_INFINITY;
            };
            let Slot::Dummy { y, .. } = slot else {
                return f64::NEG_INFINITY;
            };
            let partner = from.side1[pos].value(y1);
            (pred.ln_y2_given_y1(y, partner), leaving_base(from, pos, rule, None, Some(slot)))
        }
        _ => unreachable!(),
    };
    let mode = perm_mode(rule, base.c(), ctx.link);
    lp + ln_perm_prob(&base, to, mode, pred, y1, y2)
}

/// Log probability (density for imputed outcomes) that record `i` entering
/// `from` yields `to`.
fn ln_entering_prob(ctx: &MoveContext, pred: &KeyPredictor, from: &Pool, to: &Pool, i: usize) -> f64 {
    if from.position_of_f2(i).is_some() {
        return f64::NEG_INFINITY;
    }
    let (y1, y2) = (&ctx.f1.y, &ctx.f2.y);
    let rule = entering_rule(from);
    let before = ids(from);
    let after = ids(to);
    let removed: Vec<(u8, SlotId)> = before.difference(&after).copied().collect();
    let added: Vec<(u8, SlotId)> = after.difference(&before).copied().collect();
    let (lp, base) = match rule {
        Rule::ReplaceDummy => {
            if added != [(2, SlotId::Real(i))] || removed.len() != 1 {
                return f64::NEG_INFINITY;
            }
            let Some((2, d, slot)) = find_slot(from, removed[0]) else {
                return f64::NEG_INFINITY;
            };
            if !slot.is_dummy() {
                return f64::NEG_INFINITY;
            }
            let m = from.n1() - from.n2();
            (-(m as f64).ln(), entering_base(from, i, rule, Some(d), None))
        }
        Rule::AddDummy => {
            let me = (2, SlotId::Real(i));
            if !removed.is_empty() || added.len() != 2 || !added.contains(&me) {
                return f64::NEG_INFINITY;
            }
            let new = if added[0] == me { added[1] } else { added[0] };
            let Some((1, _, slot)) = find_slot(to, new) else {
                return f64::NEG_INFINITY;
            };
            let Slot::Dummy { y, .. } = slot else {
                return f64::NEG_INFINITY;
            };
            (pred.ln_y1_given_y2(y, y2[i]), entering_base(from, i, rule, None, Some(slot)))
        }
        _ => unreachable!(),
    };
    let mode = perm_mode(rule, base.c(), ctx.link);
    lp + ln_perm_prob(&base, to, mode, pred, y1, y2)
}

#[derive(Clone, Debug)]
struct PoolChange {
    old: Pool,
    base: Pool,
    new: Pool,
    mode: PermMode,
}

/// One proposed move with everything needed to judge and apply it.
#[derive(Clone, Debug)]
pub struct MoveProposal {
    pub record: usize,
    pub field: usize,
    pub e_old: bool,
    pub e_new: bool,
    pub b_old: Code,
    pub b_new: Code,
    pub key_old: PoolKey,
    pub key_new: PoolKey,
    source: PoolChange,
    target: PoolChange,
    ln_q_code_forward: f64,
    ln_q_code_reverse: f64,
}

impl MoveProposal {
    pub fn source_pools(&self) -> (&Pool, &Pool) {
        (&self.source.old, &self.source.new)
    }

    pub fn target_pools(&self) -> (&Pool, &Pool) {
        (&self.target.old, &self.target.new)
    }

    fn uses_swaps(&self) -> bool {
        self.source.mode == PermMode::Swap || self.target.mode == PermMode::Swap
    }
}

#[derive(Debug)]
pub enum MoveOutcome {
    /// The record has no non-seed matching field.
    Skipped,
    Unchanged,
    Aborted,
    Rejected,
    Accepted(Box<MoveProposal>),
}

/// Non-seed matching fields of file-2 record `i`.
pub fn movable_fields(ctx: &MoveContext, i: usize) -> Vec<usize> {
    if ctx.f2.is_t1(i) {
        return Vec::new();
    }
    ctx.gamma.fields.iter().copied().filter(|&j| !ctx.f2.is_seed(i, j)).collect()
}

/// Codes other than the reported one (and `exclude`) that may replace field
/// `j` of `key`.
pub fn legal_codes(ctx: &MoveContext, key: &[Code], j: usize, reported: Code, exclude: Option<Code>) -> Vec<Code> {
    let mut probe = key.to_vec();
    (1..=ctx.schema.levels(j))
        .filter(|&m| m != reported && Some(m) != exclude)
        .filter(|&m| {
            if !ctx.moves.restrict_to_file1_keys {
                return true;
            }
            probe[j] = m;
            ctx.f1_keys.contains(&probe)
        })
        .collect()
}

fn ln_code_prob(psi: &Psi, h: usize, j: usize, set: &[Code], m: Code) -> f64 {
    if !set.contains(&m) {
        return f64::NEG_INFINITY;
    }
    let total: f64 = set.iter().map(|&s| psi.prob(h, j, s)).sum();
    (psi.prob(h, j, m) / total).ln()
}

fn draw_code(psi: &Psi, h: usize, j: usize, set: &[Code], rng: &mut Rng) -> Code {
    let total: f64 = set.iter().map(|&s| psi.prob(h, j, s)).sum();
    let mut u = rng.random::<f64>() * total;
    for &m in set {
        u -= psi.prob(h, j, m);
        if u <= 0.0 {
            return m;
        }
    }
    *set.last().expect("non-empty legal set")
}

/// Draws a proposal for record `i` against `state`.
pub fn propose(
    ctx: &MoveContext,
    state: &LinkState,
    i: usize,
    ids: &mut DummyIds,
    rng: &mut Rng,
) -> Result<std::result::Result<MoveProposal, MoveOutcome>> {
    let fields = movable_fields(ctx, i);
    if fields.is_empty() {
        return Ok(Err(MoveOutcome::Skipped));
    }
    let j = fields[rng.random_range(0..fields.len())];
    let e_old = state.error(i, j);
    let e_new = rng.random::<f64>() < ctx.gamma.rate(j);
    if !e_old && !e_new {
        return Ok(Err(MoveOutcome::Unchanged));
    }
    let key_old = state.key2(i).to_vec();
    let reported = ctx.f2.code(i, j);
    let b_old = key_old[j];
    let h = state.z2[i];
    let (b_new, ln_q_code_forward, ln_q_code_reverse) = if !e_new {
        let set = legal_codes(ctx, &key_old, j, reported, None);
        (reported, 0.0, ln_code_prob(ctx.psi, h, j, &set, b_old))
    } else if !e_old {
        let set = legal_codes(ctx, &key_old, j, reported, None);
        if set.is_empty() {
            return Ok(Err(MoveOutcome::Aborted));
        }
        let b = draw_code(ctx.psi, h, j, &set, rng);
        (b, ln_code_prob(ctx.psi, h, j, &set, b), 0.0)
    } else {
        let set = legal_codes(ctx, &key_old, j, reported, Some(b_old));
        if set.is_empty() {
            return Ok(Err(MoveOutcome::Aborted));
        }
        let b = draw_code(ctx.psi, h, j, &set, rng);
        let back = legal_codes(ctx, &key_old, j, reported, Some(b));
        (b, ln_code_prob(ctx.psi, h, j, &set, b), ln_code_prob(ctx.psi, h, j, &back, b_old))
    };
    let mut key_new = key_old.clone();
    key_new[j] = b_new;
    let (y1, y2) = (&ctx.f1.y, &ctx.f2.y);

    let old_k = state
        .pools
        .get(&key_old)
        .cloned()
        .ok_or_else(|| Error::Contract(format!("record {i} has no pool")))?;
    let (rule, pos) = leaving_rule(&old_k, i).ok_or_else(|| Error::Contract(format!("record {i} missing from its pool")))?;
    let pred_k = ctx.model.predictor(ctx.theta, &key_old);
    let base_k = match rule {
        Rule::DropLinkedDummy => leaving_base(&old_k, pos, rule, None, None),
        Rule::DropOtherDummy => {
            let ds = old_k.side1_dummies();
            let d = ds[rng.random_range(0..ds.len())];
            leaving_base(&old_k, pos, rule, Some(d), None)
        }
        _ => {
            let partner = old_k.side1[pos].value(y1);
            let slot = Slot::Dummy { id: ids.fresh(), y: pred_k.impute_y2(partner, rng) };
            leaving_base(&old_k, pos, rule, None, Some(slot))
        }
    };
    let mode_k = perm_mode(rule, base_k.c(), ctx.link);
    let new_k = apply_perm(&base_k, mode_k, &pred_k, y1, y2, rng);

    let old_s = state.pools.get(&key_new).cloned().unwrap_or_default();
    let pred_s = ctx.model.predictor(ctx.theta, &key_new);
    let rule_s = entering_rule(&old_s);
    let base_s = match rule_s {
        Rule::ReplaceDummy => {
            let ds = old_s.side2_dummies();
            let d = ds[rng.random_range(0..ds.len())];
            entering_base(&old_s, i, rule_s, Some(d), None)
        }
        _ => {
            let slot = Slot::Dummy { id: ids.fresh(), y: pred_s.impute_y1(y2[i], rng) };
            entering_base(&old_s, i, rule_s, None, Some(slot))
        }
    };
    let mode_s = perm_mode(rule_s, base_s.c(), ctx.link);
    let new_s = apply_perm(&base_s, mode_s, &pred_s, y1, y2, rng);

    Ok(Ok(MoveProposal {
        record: i,
        field: j,
        e_old,
        e_new,
        b_old,
        b_new,
        key_old,
        key_new,
        source: PoolChange { old: old_k, base: base_k, new: new_k, mode: mode_k },
        target: PoolChange { old: old_s, base: base_s, new: new_s, mode: mode_s },
        ln_q_code_forward,
        ln_q_code_reverse,
    }))
}

/// Log acceptance ratio of a proposal.
///
/// The prior of the error indicator and the probability of proposing it are
/// identical and cancel, so neither enters.
pub fn log_acceptance(ctx: &MoveContext, state: &LinkState, p: &MoveProposal) -> Result<f64> {
    let i = p.record;
    let j = p.field;
    let h = state.z2[i];
    let (y1, y2) = (&ctx.f1.y, &ctx.f2.y);
    let pred_k = ctx.model.predictor(ctx.theta, &p.key_old);
    let pred_s = ctx.model.predictor(ctx.theta, &p.key_new);

    let mut target = reporting_ratio(p.e_old, p.e_new, ctx.schema.levels(j)).ln();
    target += ctx.psi.prob(h, j, p.b_new).ln() - ctx.psi.prob(h, j, p.b_old).ln();
    target += ln_c_prior_ratio(p.source.old.c(), p.source.new.c(), p.target.old.c(), p.target.new.c())?;
    target += ln_dummy_count_ratio(&p.source.old, &p.source.new, &p.target.old, &p.target.new);
    target += p.source.new.loglik(&pred_k, y1, y2) + p.target.new.loglik(&pred_s, y1, y2)
        - p.source.old.loglik(&pred_k, y1, y2)
        - p.target.old.loglik(&pred_s, y1, y2);

    let forward = p.ln_q_code_forward
        + ln_leaving_prob(ctx, &pred_k, &p.source.old, &p.source.new, i)
        + ln_entering_prob(ctx, &pred_s, &p.target.old, &p.target.new, i);
    let reverse = p.ln_q_code_reverse
        + ln_entering_prob(ctx, &pred_k, &p.source.new, &p.source.old, i)
        + ln_leaving_prob(ctx, &pred_s, &p.target.new, &p.target.old, i);
    if !forward.is_finite() {
        return Err(Error::Contract(format!("proposal for record {i} has zero forward probability")));
    }
    let la = target + reverse - forward;
    Ok(if la.is_nan() { f64::NEG_INFINITY } else { la })
}

/// Proposes and judges one move. Proposals that rely on swaps are redrawn up
/// to `switch_reps` times before the move is rejected.
pub fn attempt_move(
    ctx: &MoveContext,
    state: &LinkState,
    i: usize,
    ids: &mut DummyIds,
    rng: &mut Rng,
    stats: &mut MoveStats,
) -> Result<MoveOutcome> {
    let mut p = match propose(ctx, state, i, ids, rng)? {
        Ok(p) => p,
        Err(outcome) => {
            match outcome {
                MoveOutcome::Aborted => stats.aborted += 1,
                MoveOutcome::Unchanged => stats.unchanged += 1,
                _ => {}
            }
            return Ok(outcome);
        }
    };
    stats.proposed += 1;
    let tries = if p.uses_swaps() { ctx.link.switch_reps } else { 1 };
    let (y1, y2) = (&ctx.f1.y, &ctx.f2.y);
    for t in 0..tries {
        if t > 0 {
            for (change, key) in [(&mut p.source, &p.key_old), (&mut p.target, &p.key_new)] {
                if change.mode == PermMode::Swap {
                    let pred = ctx.model.predictor(ctx.theta, key);
                    change.new = apply_perm(&change.base, PermMode::Swap, &pred, y1, y2, rng);
                }
            }
        }
        let la = log_acceptance(ctx, state, &p)?;
        let u: f64 = rng.random();
        if u.ln() < la {
            stats.accepted += 1;
            return Ok(MoveOutcome::Accepted(Box::new(p)));
        }
    }
    Ok(MoveOutcome::Rejected)
}

fn install(state: &mut LinkState, p: MoveProposal) {
    state.pools.set(p.key_old.clone(), p.source.new);
    state.pools.set(p.key_new.clone(), p.target.new);
    state.set(p.record, p.field, p.b_new, p.e_new);
}

/// Moves a record without proposing a linkage, for accepted moves that share
/// a pool with another accepted move in the same sweep.
fn apply_structural(ctx: &MoveContext, state: &mut LinkState, p: &MoveProposal, rng: &mut Rng) -> Result<()> {
    let i = p.record;
    let (y1, y2) = (&ctx.f1.y, &ctx.f2.y);
    let old_k = state.pools.get(&p.key_old).cloned().unwrap_or_default();
    let (rule, pos) = leaving_rule(&old_k, i).ok_or_else(|| Error::Contract(format!("record {i} missing from its pool")))?;
    let pred_k = ctx.model.predictor(ctx.theta, &p.key_old);
    let new_k = match rule {
        Rule::DropLinkedDummy => leaving_base(&old_k, pos, rule, None, None),
        Rule::DropOtherDummy => leaving_base(&old_k, pos, rule, Some(old_k.side1_dummies()[0]), None),
        _ => {
            let partner = old_k.side1[pos].value(y1);
            let slot = Slot::Dummy { id: state.pools.ids.fresh(), y: pred_k.impute_y2(partner, rng) };
            leaving_base(&old_k, pos, rule, None, Some(slot))
        }
    };
    let old_s = state.pools.get(&p.key_new).cloned().unwrap_or_default();
    let pred_s = ctx.model.predictor(ctx.theta, &p.key_new);
    let rule_s = entering_rule(&old_s);
    let new_s = match rule_s {
        Rule::ReplaceDummy => entering_base(&old_s, i, rule_s, Some(old_s.side2_dummies()[0]), None),
        _ => {
            let slot = Slot::Dummy { id: state.pools.ids.fresh(), y: pred_s.impute_y1(y2[i], rng) };
            entering_base(&old_s, i, rule_s, None, Some(slot))
        }
    };
    state.pools.set(p.key_old.clone(), new_k);
    state.pools.set(p.key_new.clone(), new_s);
    state.set(i, p.field, p.b_new, p.e_new);
    Ok(())
}

/// One pass of moves over the file-2 records in row order.
pub fn sweep(ctx: &MoveContext, state: &mut LinkState, rng: &mut Rng) -> Result<MoveStats> {
    let mut stats = MoveStats::default();
    match ctx.moves.sweep {
        SweepMode::Sequential => {
            for i in 0..ctx.f2.len() {
                let mut ids = state.pools.ids.clone();
                let outcome = attempt_move(ctx, state, i, &mut ids, rng, &mut stats)?;
                state.pools.ids = ids;
                if let MoveOutcome::Accepted(p) = outcome {
                    install(state, *p);
                }
            }
        }
        SweepMode::Snapshot => {
            let mut ids = state.pools.ids.clone();
            let mut accepted = Vec::new();
            for i in 0..ctx.f2.len() {
                if let MoveOutcome::Accepted(p) = attempt_move(ctx, state, i, &mut ids, rng, &mut stats)? {
                    accepted.push(*p);
                }
            }
            state.pools.ids = ids;
            let mut touches: HashMap<PoolKey, usize> = HashMap::new();
            for p in &accepted {
                *touches.entry(p.key_old.clone()).or_default() += 1;
                *touches.entry(p.key_new.clone()).or_default() += 1;
            }
            for p in accepted {
                if touches[&p.key_old] == 1 && touches[&p.key_new] == 1 {
                    install(state, p);
                } else {
                    apply_structural(ctx, state, &p, rng)?;
                }
            }
        }
    }
    Ok(stats)
}
