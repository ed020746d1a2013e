//! Structural invariants of the chain on random small files.

use std::collections::BTreeSet;

use proptest::prelude::*;

use blase_core::analysis::{AnalysisModel, TermSpec};
use blase_core::data::{Code, FieldRole, FieldSpec, FileId, InCommonSchema, RecordTable};
use blase_core::error_model::GammaParams;
use blase_core::latent_class::DpHyper;
use blase_core::linkage::exact_distribution;
use blase_core::pool_move::SweepMode;
use blase_core::pools::{Pool, Slot};
use blase_core::sampler::{ChainConfig, ModelKind, Priors, Problem, Sampler};

const LEVELS: [Code; 3] = [2, 2, 3];

fn schema() -> InCommonSchema {
    InCommonSchema::new(vec![
        FieldSpec::new("bv", 2, FieldRole::Blocking),
        FieldSpec::new("mv1", 2, FieldRole::Matching),
        FieldSpec::new("mv2", 3, FieldRole::Matching),
    ])
    .unwrap()
}

#[derive(Clone, Debug)]
struct Files {
    f1: Vec<([Code; 3], f64)>,
    f2: Vec<([Code; 3], f64, [bool; 2])>,
    seeded_pairs: usize,
}

fn row() -> impl Strategy<Value = [Code; 3]> {
    (1..=LEVELS[0], 1..=LEVELS[1], 1..=LEVELS[2]).prop_map(|(a, b, c)| [a, b, c])
}

fn files() -> impl Strategy<Value = Files> {
    (
        prop::collection::vec((row(), -3.0..3.0f64), 5..12),
        prop::collection::vec((row(), -3.0..3.0f64, any::<[bool; 2]>()), 5..12),
        0usize..4,
    )
        .prop_map(|(f1, f2, seeded_pairs)| Files { f1, f2, seeded_pairs })
}

fn problem(files: &Files) -> Problem {
    let s = schema();
    let mut f1 = RecordTable::new(FileId::One, 3);
    let mut f2 = RecordTable::new(FileId::Two, 3);
    let pairs = files.seeded_pairs.min(files.f1.len()).min(files.f2.len());
    for (r, (codes, y)) in files.f1.iter().enumerate() {
        let partner = (r < pairs).then_some(r);
        let seed = if partner.is_some() { [true; 3] } else { [true, false, false] };
        f1.push(codes, *y, &seed, partner);
    }
    for (i, (codes, y, seed)) in files.f2.iter().enumerate() {
        if i < pairs {
            f2.push(&files.f1[i].0, *y, &[true; 3], Some(i));
        } else {
            f2.push(codes, *y, &[true, seed[0], seed[1]], None);
        }
    }
    let t = |v: &[&str]| v.iter().map(|s| TermSpec(s.to_string())).collect::<Vec<_>>();
    let model = AnalysisModel::new(&s, &t(&["1", "y2", "mv1=2"]), &t(&["1", "mv2=3"])).unwrap();
    Problem::new(s, f1, f2, model).unwrap()
}

fn config(sweep: SweepMode, seed: u64) -> ChainConfig {
    let mut cfg = ChainConfig { iterations: 20, burnin: 0, thin: 1, seed, update_theta: false, ..ChainConfig::default() };
    cfg.moves.sweep = sweep;
    cfg
}

fn priors(p: &Problem, a: f64, b: f64) -> Priors {
    Priors { gamma: GammaParams::new(&p.schema, a, b).unwrap(), dp: DpHyper { classes: 5, ..DpHyper::default() } }
}

fn t1_pairs(s: &Sampler) -> BTreeSet<(usize, usize)> {
    s.state.pools.pools.values().flat_map(|p| p.t1.iter().copied()).collect()
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 48, ..ProptestConfig::default() })]

    #[test]
    fn moves_keep_the_state_consistent(files in files(), seed in any::<u64>(), sequential in any::<bool>()) {
        let p = problem(&files);
        let sweep = if sequential { SweepMode::Sequential } else { SweepMode::Snapshot };
        let mut s = Sampler::new(&p, ModelKind::Blase, config(sweep, seed), priors(&p, 2.0, 2.0)).unwrap();
        let t1 = t1_pairs(&s);
        s.check_state().unwrap();
        for _ in 0..20 {
            s.step().unwrap();
            prop_assert!(s.check_state().is_ok(), "{:?}", s.check_state());
            prop_assert_eq!(&t1_pairs(&s), &t1);
            for i in 0..p.f2.len() {
                for j in 0..3 {
                    if p.f2.is_seed(i, j) {
                        prop_assert_eq!(s.state.key2(i)[j], p.f2.code(i, j));
                    }
                }
            }
        }
    }

    #[test]
    fn every_real_record_is_linked_once(files in files(), seed in any::<u64>()) {
        let p = problem(&files);
        let mut s = Sampler::new(&p, ModelKind::Blase, config(SweepMode::Snapshot, seed), priors(&p, 2.0, 2.0)).unwrap();
        for _ in 0..10 {
            s.step().unwrap();
            let mut seen1 = vec![0usize; p.f1.len()];
            let mut seen2 = vec![0usize; p.f2.len()];
            for pool in s.state.pools.pools.values() {
                for (a, b) in pool.side1.iter().zip(&pool.side2) {
                    prop_assert!(!(a.is_dummy() && b.is_dummy()));
                    if let Slot::Real(r) = *a { seen1[r] += 1; }
                    if let Slot::Real(i) = *b { seen2[i] += 1; }
                }
                for &(r, i) in &pool.t1 {
                    seen1[r] += 1;
                    seen2[i] += 1;
                }
            }
            prop_assert!(seen1.iter().chain(&seen2).all(|&k| k == 1));
        }
    }

    #[test]
    fn exact_probabilities_are_normalized(y in prop::collection::vec((-5.0..5.0f64, -5.0..5.0f64), 1..6)) {
        let p = problem(&Files { f1: vec![([1, 1, 1], 0.0); 5], f2: vec![([1, 1, 1], 0.0, [false; 2]); 5], seeded_pairs: 0 });
        let theta = blase_core::analysis::Theta { beta: vec![0.1, 0.9, -0.4], sigma1_sq: 0.7, eta: vec![0.2, 1.1], sigma2_sq: 1.6 };
        let pred = p.model.predictor(&theta, &[1, 2, 3]);
        let c = y.len();
        let pool = Pool { side1: (0..c).map(Slot::Real).collect(), side2: (0..c).map(Slot::Real).collect(), t1: Vec::new() };
        let y1: Vec<f64> = y.iter().map(|v| v.0).collect();
        let y2: Vec<f64> = y.iter().map(|v| v.1).collect();
        let (_, lp) = exact_distribution(&pool, &pred, &y1, &y2);
        let total: f64 = lp.iter().map(|l| l.exp()).sum();
        prop_assert!((total - 1.0).abs() < 1e-10);
    }
}
