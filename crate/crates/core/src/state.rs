//! Mutable linkage state of a chain.

use crate::data::{Code, RecordTable};
use crate::pools::PoolIndex;

#[derive(Clone, Debug)]
pub struct LinkState {
    pub n_fields: usize,
    /// Current true codes of file 2, row-major.
    pub b2: Vec<Code>,
    /// Error indicators of file 2, row-major.
    pub e2: Vec<bool>,
    pub pools: PoolIndex,
    /// Latent class carried by each file-1 record.
    pub z1: Vec<usize>,
    /// Latent class carried by each file-2 record.
    pub z2: Vec<usize>,
}

impl LinkState {
    /// True codes start at the reported codes with no errors.
    pub fn from_reported(f1: &RecordTable, f2: &RecordTable) -> LinkState {
        let n_fields = f2.n_fields();
        let b2: Vec<Code> = (0..f2.len()).flat_map(|i| f2.row(i).to_vec()).collect();
        let pools = PoolIndex::build(f1, f2, &b2);
        LinkState { n_fields, e2: vec![false; b2.len()], b2, pools, z1: vec![0; f1.len()], z2: vec![0; f2.len()] }
    }

    pub fn key2(&self, i: usize) -> &[Code] {
        &self.b2[i * self.n_fields..(i + 1) * self.n_fields]
    }

    pub fn error(&self, i: usize, j: usize) -> bool {
        self.e2[i * self.n_fields + j]
    }

    pub fn set(&mut self, i: usize, j: usize, b: Code, e: bool) {
        self.b2[i * self.n_fields + j] = b;
        self.e2[i * self.n_fields + j] = e;
    }

    /// Rebuilds the pool membership from scratch for comparison with the
    /// incrementally maintained index.
    pub fn rebuilt_pools(&self, f1: &RecordTable, f2: &RecordTable) -> PoolIndex {
        PoolIndex::build(f1, f2, &self.b2)
    }
}
