//! Chain-level behaviour on simulated school files.

use blase_core::data::{FieldRole, InCommonSchema};
use blase_core::error_model::GammaParams;
use blase_core::latent_class::DpHyper;
use blase_core::rng::{stream, Stream};
use blase_core::sampler::{ChainConfig, ModelKind, Priors, Problem, Sampler};
use blase_core::scenario::Scenario;
use blase_core::sim::generate::{school_model, simulate, GenerationModel, ScenarioConfig, SimData};

fn data(pairs: usize, seed: u64) -> SimData {
    let cfg = ScenarioConfig { pairs, ..ScenarioConfig::from_preset(Scenario::HSHF) };
    simulate(&cfg, &GenerationModel::default(), &mut stream(seed, Stream::Generate)).unwrap()
}

fn problem(d: &SimData, schema: InCommonSchema) -> Problem {
    let model = school_model(&schema).unwrap();
    Problem::new(schema, d.f1.clone(), d.f2.clone(), model).unwrap()
}

fn chain(iterations: usize, burnin: usize, thin: usize, seed: u64) -> ChainConfig {
    ChainConfig { iterations, burnin, thin, seed, ..ChainConfig::default() }
}

fn priors(p: &Problem, a: f64, b: f64) -> Priors {
    Priors { gamma: GammaParams::new(&p.schema, a, b).unwrap(), dp: DpHyper::default() }
}

#[test]
fn same_seed_same_draws() {
    let d = data(200, 1);
    let p = problem(&d, d.schema.clone());
    let run = |seed| {
        let mut s = Sampler::new(&p, ModelKind::Blase, chain(30, 10, 2, seed), priors(&p, 1.0, 1.0)).unwrap();
        s.run(Some(&d.truth_links())).unwrap()
    };
    let a = run(5);
    assert_eq!(a, run(5));
    assert_ne!(a.draws, run(6).draws);
}

#[test]
fn stored_draws_follow_burnin_and_thinning() {
    let d = data(150, 2);
    let p = problem(&d, d.schema.clone());
    for (it, burn, thin) in [(10, 0, 1), (25, 5, 3), (40, 39, 1)] {
        let cfg = chain(it, burn, thin, 3);
        let want = cfg.stored_draws();
        assert_eq!(want, (it - burn) / thin);
        let store = Sampler::new(&p, ModelKind::Blase, cfg, priors(&p, 1.0, 1.0)).unwrap().run(None).unwrap();
        assert_eq!(store.len(), want);
        assert!(store.draws.iter().all(|d| d.iteration > burn && (d.iteration - burn) % thin == 0));
    }
}

#[test]
fn matching_model_without_matching_fields_is_the_baseline() {
    let d = data(200, 4);
    let mut schema = d.schema.clone();
    for f in schema.fields.iter_mut() {
        f.role = FieldRole::Blocking;
    }
    let p = problem(&d, schema);
    let run = |kind| {
        let mut s = Sampler::new(&p, kind, chain(40, 10, 1, 9), priors(&p, 1.0, 1.0)).unwrap();
        assert!(s.psi.is_none() && s.gamma.is_none());
        s.run(Some(&d.truth_links())).unwrap()
    };
    let blase = run(ModelKind::Blase);
    let gazm = run(ModelKind::Gazm);
    assert_eq!(blase, gazm);
    assert!(blase.gamma_names.is_empty());
}

#[test]
fn vanishing_error_rate_keeps_reported_codes_and_baseline_draws() {
    let d = data(200, 5);
    let p = problem(&d, d.schema.clone());
    let mut blase = Sampler::new(&p, ModelKind::Blase, chain(30, 0, 1, 11), priors(&p, 1.0, 1e9)).unwrap();
    let mut gazm = Sampler::new(&p, ModelKind::Gazm, chain(30, 0, 1, 11), priors(&p, 1.0, 1e9)).unwrap();
    let reported: Vec<_> = (0..p.f2.len()).flat_map(|i| p.f2.row(i).to_vec()).collect();
    for _ in 0..30 {
        blase.step().unwrap();
        gazm.step().unwrap();
        assert_eq!(blase.state.b2, reported);
        assert_eq!(blase.theta, gazm.theta);
    }
    assert_eq!(blase.stats.moves.accepted, 0);
}

#[test]
fn faulty_files_see_accepted_moves() {
    let d = data(300, 6);
    let p = problem(&d, d.schema.clone());
    let mut s = Sampler::new(&p, ModelKind::Blase, chain(20, 0, 1, 12), priors(&p, 1.0, 1.0)).unwrap();
    for _ in 0..20 {
        s.step().unwrap();
    }
    s.check_state().unwrap();
    assert!(s.stats.moves.proposed > 0);
    assert!(s.stats.moves.accepted > 0);
}

#[test]
fn without_seeds_the_start_falls_back_to_moments() {
    let mut d = data(100, 7);
    for r in 0..d.f1.len() {
        d.f1.t1_partner[r] = None;
    }
    for i in 0..d.f2.len() {
        d.f2.t1_partner[i] = None;
    }
    let p = problem(&d, d.schema.clone());
    let mut s = Sampler::new(&p, ModelKind::Blase, chain(5, 0, 1, 13), priors(&p, 1.0, 1.0)).unwrap();
    assert!(s.theta_fallback);
    for _ in 0..5 {
        s.step().unwrap();
    }
    s.check_state().unwrap();
}
