//! Pools of records that share a full categorical key.
//!
//! Within a pool the records of the two files that are not seeded pairs are
//! linked one to one. The smaller side is padded with dummy records so both
//! sides have `c = max(n1, n2)` slots. A dummy carries an imputed outcome for
//! the real record it is linked to. Seeded pairs are kept apart and never
//! relinked.
//!
//! `side1[p]` is linked to `side2[p]`. Real file-1 records sit first on side 1
//! in row order, followed by any side-1 dummies.

use std::collections::BTreeMap;

use crate::analysis::KeyPredictor;
use crate::data::{Code, RecordTable};
use crate::error::{Error, Result};

pub type PoolKey = Vec<Code>;

/// Identity of a slot, used to compare linkages.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum SlotId {
    Real(usize),
    Dummy(u64),
}

#[derive(Clone, Copy, Debug)]
pub enum Slot {
    Real(usize),
    Dummy { id: u64, y: f64 },
}

impl Slot {
    pub fn id(&self) -> SlotId {
        match *self {
            Slot::Real(r) => SlotId::Real(r),
            Slot::Dummy { id, .. } => SlotId::Dummy(id),
        }
    }

    pub fn is_dummy(&self) -> bool {
        matches!(self, Slot::Dummy { .. })
    }

    pub fn real(&self) -> Option<usize> {
        match *self {
            Slot::Real(r) => Some(r),
            Slot::Dummy { .. } => None,
        }
    }

    /// Outcome of the slot: the observed value of a real record or the
    /// imputed value of a dummy.
    pub fn value(&self, observed: &[f64]) -> f64 {
        match *self {
            Slot::Real(r) => observed[r],
            Slot::Dummy { y, .. } => y,
        }
    }
}

impl PartialEq for Slot {
    fn eq(&self, other: &Self) -> bool {
        self.id() == other.id()
    }
}

/// Source of fresh dummy identities.
#[derive(Clone, Debug, Default)]
pub struct DummyIds {
    next: u64,
}

impl DummyIds {
    pub fn fresh(&mut self) -> u64 {
        self.next += 1;
        self.next
    }
}

#[derive(Clone, Debug, Default)]
pub struct Pool {
    pub side1: Vec<Slot>,
    pub side2: Vec<Slot>,
    /// Seeded pairs `(file-1 row, file-2 row)`.
    pub t1: Vec<(usize, usize)>,
}

impl Pool {
    /// Number of non-seed real file-1 records.
    pub fn n1(&self) -> usize {
        self.side1.iter().filter(|s| !s.is_dummy()).count()
    }

    pub fn n2(&self) -> usize {
        self.side2.iter().filter(|s| !s.is_dummy()).count()
    }

    /// Number of linked positions, `max(n1, n2)`.
    pub fn c(&self) -> usize {
        self.side1.len()
    }

    pub fn u(&self) -> usize {
        self.t1.len()
    }

    /// Individuals in the pool.
    pub fn size(&self) -> usize {
        self.c() + self.u()
    }

    pub fn is_empty(&self) -> bool {
        self.side1.is_empty() && self.t1.is_empty()
    }

    pub fn position_of_f2(&self, i: usize) -> Option<usize> {
        self.side2.iter().position(|s| *s == Slot::Real(i))
    }

    pub fn position_of_f1(&self, r: usize) -> Option<usize> {
        self.side1.iter().position(|s| *s == Slot::Real(r))
    }

    pub fn side1_dummies(&self) -> Vec<usize> {
        (0..self.side1.len()).filter(|&p| self.side1[p].is_dummy()).collect()
    }

    pub fn side2_dummies(&self) -> Vec<usize> {
        (0..self.side2.len()).filter(|&p| self.side2[p].is_dummy()).collect()
    }

    /// Linked pairs as identities, sorted.
    pub fn links(&self) -> Vec<(SlotId, SlotId)> {
        let mut l: Vec<(SlotId, SlotId)> = self.side1.iter().zip(&self.side2).map(|(a, b)| (a.id(), b.id())).collect();
        l.sort_unstable();
        l
    }

    /// Same members on each side, ignoring how they are linked.
    pub fn same_members(&self, other: &Pool) -> bool {
        let ids = |v: &[Slot]| {
            let mut x: Vec<SlotId> = v.iter().map(|s| s.id()).collect();
            x.sort_unstable();
            x
        };
        ids(&self.side1) == ids(&other.side1) && ids(&self.side2) == ids(&other.side2)
    }

    pub fn check_balanced(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Contract(format!("unbalanced pool: {m}")));
        if self.side1.len() != self.side2.len() {
            return bad("sides differ in length");
        }
        let (n1, n2) = (self.n1(), self.n2());
        if self.c() != n1.max(n2) {
            return bad("dummy count does not match the size difference");
        }
        if self.side1.iter().zip(&self.side2).any(|(a, b)| a.is_dummy() && b.is_dummy()) {
            return bad("two dummies are linked");
        }
        let first_dummy = self.side1.iter().position(|s| s.is_dummy()).unwrap_or(self.side1.len());
        if self.side1[first_dummy..].iter().any(|s| !s.is_dummy()) {
            return bad("side-1 dummies must follow the real records");
        }
        if self.side1[..first_dummy].windows(2).any(|w| w[0].real() >= w[1].real()) {
            return bad("side-1 records out of order");
        }
        Ok(())
    }

    /// Pool log likelihood with completed outcomes, seeded pairs included.
    pub fn loglik(&self, pred: &KeyPredictor, y1: &[f64], y2: &[f64]) -> f64 {
        let linked: f64 = self.side1.iter().zip(&self.side2).map(|(a, b)| pred.ln_joint(a.value(y1), b.value(y2))).sum();
        let seeded: f64 = self.t1.iter().map(|&(r, i)| pred.ln_joint(y1[r], y2[i])).sum();
        linked + seeded
    }

    /// Log likelihood of the pool with the dummies integrated out.
    pub fn loglik_observed(&self, pred: &KeyPredictor, y1: &[f64], y2: &[f64]) -> f64 {
        let mut total: f64 = self.t1.iter().map(|&(r, i)| pred.ln_joint(y1[r], y2[i])).sum();
        for (a, b) in self.side1.iter().zip(&self.side2) {
            total += match (*a, *b) {
                (Slot::Real(r), Slot::Real(i)) => pred.ln_joint(y1[r], y2[i]),
                (Slot::Real(r), Slot::Dummy { .. }) => pred.ln_marginal_y1(y1[r]),
                (Slot::Dummy { .. }, Slot::Real(i)) => pred.ln_marginal_y2(y2[i]),
                _ => f64::NAN,
            };
        }
        total
    }

    /// Adds side-1 dummies or side-2 dummies so both sides have equal length.
    pub fn balance(&mut self, ids: &mut DummyIds) {
        while self.side1.len() < self.side2.len() {
            self.side1.push(Slot::Dummy { id: ids.fresh(), y: f64::NAN });
        }
        while self.side2.len() < self.side1.len() {
            self.side2.push(Slot::Dummy { id: ids.fresh(), y: f64::NAN });
        }
    }
}

/// All pools, keyed by the full categorical key.
#[derive(Clone, Debug, Default)]
pub struct PoolIndex {
    pub pools: BTreeMap<PoolKey, Pool>,
    pub ids: DummyIds,
}

/// Members of a pool without linkage or dummies.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Membership {
    pub f1: Vec<usize>,
    pub f2: Vec<usize>,
    pub t1: Vec<(usize, usize)>,
}

impl PoolIndex {
    /// Groups records by key. `b2` holds the current file-2 codes, row-major.
    ///
    /// Seeded pairs sit in the pool of their file-1 key. The linkage of
    /// every pool starts as the identity over rows, padded with dummies.
    pub fn build(f1: &RecordTable, f2: &RecordTable, b2: &[Code]) -> PoolIndex {
        let j = f1.n_fields();
        let mut index = PoolIndex::default();
        for r in 0..f1.len() {
            let key = f1.row(r).to_vec();
            let pool = index.pools.entry(key).or_default();
            match f1.t1_partner[r] {
                Some(i) => pool.t1.push((r, i)),
                None => pool.side1.push(Slot::Real(r)),
            }
        }
        for i in 0..f2.len() {
            if f2.is_t1(i) {
                continue;
            }
            let key = b2[i * j..(i + 1) * j].to_vec();
            index.pools.entry(key).or_default().side2.push(Slot::Real(i));
        }
        let PoolIndex { pools, ids } = &mut index;
        for pool in pools.values_mut() {
            pool.balance(ids);
        }
        index
    }

    pub fn get(&self, key: &[Code]) -> Option<&Pool> {
        self.pools.get(key)
    }

    /// Replaces a pool, dropping it when empty.
    pub fn set(&mut self, key: PoolKey, pool: Pool) {
        if pool.is_empty() {
            self.pools.remove(&key);
        } else {
            self.pools.insert(key, pool);
        }
    }

    pub fn membership(&self) -> BTreeMap<PoolKey, Membership> {
        self.pools
            .iter()
            .map(|(k, p)| {
                let mut f1: Vec<usize> = p.side1.iter().filter_map(|s| s.real()).collect();
                let mut f2: Vec<usize> = p.side2.iter().filter_map(|s| s.real()).collect();
                let mut t1 = p.t1.clone();
                f1.sort_unstable();
                f2.sort_unstable();
                t1.sort_unstable();
                (k.clone(), Membership { f1, f2, t1 })
            })
            .collect()
    }

    /// Total number of individuals.
    pub fn n_individuals(&self) -> usize {
        self.pools.values().map(|p| p.size()).sum()
    }

    pub fn max_c(&self) -> usize {
        self.pools.values().map(|p| p.c()).max().unwrap_or(0)
    }

    pub fn check(&self) -> Result<()> {
        for (k, p) in &self.pools {
            if p.is_empty() {
                return Err(Error::Contract(format!("empty pool {k:?} kept in the index")));
            }
            p.check_balanced()?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::FileId;

    fn files() -> (RecordTable, RecordTable) {
        let mut f1 = RecordTable::new(FileId::One, 2);
        let mut f2 = RecordTable::new(FileId::Two, 2);
        f1.push(&[1, 1], 1.0, &[true, true], Some(0));
        f1.push(&[1, 1], 2.0, &[true, false], None);
        f1.push(&[1, 1], 3.0, &[true, false], None);
        f1.push(&[2, 1], 4.0, &[true, false], None);
        f2.push(&[1, 1], 5.0, &[true, true], Some(0));
        f2.push(&[1, 1], 6.0, &[true, false], None);
        f2.push(&[2, 2], 7.0, &[true, false], None);
        (f1, f2)
    }

    #[test]
    fn build_pads_with_dummies() {
        let (f1, f2) = files();
        let b2: Vec<Code> = (0..f2.len()).flat_map(|i| f2.row(i).to_vec()).collect();
        let idx = PoolIndex::build(&f1, &f2, &b2);
        idx.check().unwrap();
        assert_eq!(idx.pools.len(), 3);
        let p = idx.get(&[1, 1]).unwrap();
        assert_eq!((p.n1(), p.n2(), p.c(), p.u()), (2, 1, 2, 1));
        assert_eq!(p.side2_dummies().len(), 1);
        let q = idx.get(&[2, 2]).unwrap();
        assert_eq!((q.n1(), q.n2(), q.c()), (0, 1, 1));
        assert!(q.side1[0].is_dummy());
        assert_eq!(idx.n_individuals(), 2 + 1 + 1 + 1);
    }

    #[test]
    fn empty_pools_are_dropped() {
        let (f1, f2) = files();
        let b2: Vec<Code> = (0..f2.len()).flat_map(|i| f2.row(i).to_vec()).collect();
        let mut idx = PoolIndex::build(&f1, &f2, &b2);
        idx.set(vec![2, 2], Pool::default());
        assert!(idx.get(&[2, 2]).is_none());
    }

    #[test]
    fn links_ignore_position_order() {
        let mut a = Pool::default();
        a.side1 = vec![Slot::Real(0), Slot::Real(1)];
        a.side2 = vec![Slot::Real(5), Slot::Real(6)];
        let mut b = a.clone();
        b.side1.swap(0, 1);
        b.side2.swap(0, 1);
        assert_eq!(a.links(), b.links());
        b.side2.swap(0, 1);
        assert_ne!(a.links(), b.links());
    }
}
