use criterion::{criterion_group, criterion_main, BatchSize, Criterion};

use blase_core::analysis::{AnalysisModel, KeyPredictor, TermSpec, Theta};
use blase_core::data::{FieldRole, FieldSpec, InCommonSchema};
use blase_core::error_model::GammaParams;
use blase_core::latent_class::DpHyper;
use blase_core::linkage::{exact_step, switch_step, LinkStats};
use blase_core::pool_move::SweepMode;
use blase_core::pools::{Pool, Slot};
use blase_core::rng::{seeded, stream, Stream};
use blase_core::sampler::{ChainConfig, ModelKind, Priors, Problem, Sampler};
use blase_core::scenario::Scenario;
use blase_core::sim::generate::{school_model, simulate, GenerationModel, ScenarioConfig};

fn predictor() -> KeyPredictor {
    let schema = InCommonSchema::new(vec![FieldSpec::new("g", 2, FieldRole::Blocking)]).unwrap();
    let t = |v: &[&str]| v.iter().map(|s| TermSpec(s.to_string())).collect::<Vec<_>>();
    let model = AnalysisModel::new(&schema, &t(&["1", "y2"]), &t(&["1"])).unwrap();
    let theta = Theta { beta: vec![0.0, 0.7], sigma1_sq: 1.0, eta: vec![0.0], sigma2_sq: 1.0 };
    model.predictor(&theta, &[1])
}

fn pool(c: usize) -> (Pool, Vec<f64>, Vec<f64>) {
    let p = Pool { side1: (0..c).map(Slot::Real).collect(), side2: (0..c).map(Slot::Real).collect(), t1: Vec::new() };
    let y1 = (0..c).map(|k| (k as f64 * 1.3).sin() * 2.0).collect();
    let y2 = (0..c).map(|k| (k as f64 * 0.7).cos() * 3.0).collect();
    (p, y1, y2)
}

fn linkage_steps(c: &mut Criterion) {
    let pred = predictor();
    let (p4, a4, b4) = pool(4);
    let mut rng = seeded(1);
    c.bench_function("exact step, 4 slots", |b| {
        b.iter_batched_ref(|| p4.clone(), |p| exact_step(p, &pred, &a4, &b4, &mut rng), BatchSize::SmallInput)
    });
    let (p10, a10, b10) = pool(10);
    let mut stats = LinkStats::default();
    c.bench_function("switch step, 10 slots, 30 swaps", |b| {
        b.iter_batched_ref(|| p10.clone(), |p| switch_step(p, &pred, &a10, &b10, 30, &mut rng, &mut stats), BatchSize::SmallInput)
    });
}

fn iterations(c: &mut Criterion) {
    let cfg = ScenarioConfig { pairs: 1000, ..ScenarioConfig::from_preset(Scenario::HSHF) };
    let data = simulate(&cfg, &GenerationModel::default(), &mut stream(3, Stream::Generate)).unwrap();
    let model = school_model(&data.schema).unwrap();
    let problem = Problem::new(data.schema.clone(), data.f1.clone(), data.f2.clone(), model).unwrap();
    let priors = Priors { gamma: GammaParams::new(&data.schema, 2.0, 10.0).unwrap(), dp: DpHyper::default() };
    let mut group = c.benchmark_group("iteration, 1000 pairs");
    group.sample_size(20);
    for (name, kind, sweep) in [
        ("baseline", ModelKind::Gazm, SweepMode::Snapshot),
        ("matching, snapshot sweep", ModelKind::Blase, SweepMode::Snapshot),
        ("matching, sequential sweep", ModelKind::Blase, SweepMode::Sequential),
    ] {
        let mut chain = ChainConfig { iterations: 2, burnin: 0, thin: 1, seed: 4, ..ChainConfig::default() };
        chain.moves.sweep = sweep;
        let mut s = Sampler::new(&problem, kind, chain, priors.clone()).unwrap();
        group.bench_function(name, |b| b.iter(|| s.step().unwrap()));
    }
    group.finish();
}

criterion_group!(benches, linkage_steps, iterations);
criterion_main!(benches);
