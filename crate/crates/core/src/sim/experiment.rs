//! Replicated simulation runs.

use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::error_model::GammaParams;
use crate::latent_class::DpHyper;
use crate::rng::{derive_seed, stream, Stream};
use crate::sampler::{ChainConfig, ModelKind, PosteriorStore, Priors, Problem, Sampler};
use crate::sim::generate::{school_model, simulate, GenerationModel, ScenarioConfig, SimData, TestSet};
use crate::sim::metrics::{compute_rmse, RepMetrics};

/// A way of analysing one replication.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Method {
    /// The matching model on the faulty files.
    #[serde(rename = "BL")]
    Blase,
    /// The baseline on the faulty files.
    #[serde(rename = "GM")]
    Gazm,
    /// The baseline on files with the true codes.
    #[serde(rename = "PB")]
    Blocked,
}

impl Method {
    pub const ALL: [Method; 3] = [Method::Blase, Method::Gazm, Method::Blocked];

    pub fn kind(self) -> ModelKind {
        match self {
            Method::Blase => ModelKind::Blase,
            Method::Gazm | Method::Blocked => ModelKind::Gazm,
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Method::Blase => "BL",
            Method::Gazm => "GM",
            Method::Blocked => "PB",
        })
    }
}

impl FromStr for Method {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_uppercase().as_str() {
            "BL" => Ok(Method::Blase),
            "GM" => Ok(Method::Gazm),
            "PB" => Ok(Method::Blocked),
            _ => Err(Error::Parameter(format!("unknown method '{s}'"))),
        }
    }
}

/// Seed of replication `rep` under a master seed.
pub fn replication_seed(master: u64, rep: usize) -> u64 {
    derive_seed(derive_seed(master, Stream::Replication as u64), rep as u64)
}

/// Files and test set of one replication.
pub fn generate_replication(cfg: &ScenarioConfig, gen: &GenerationModel, master: u64, rep: usize) -> Result<(SimData, TestSet)> {
    let seed = replication_seed(master, rep);
    let data = simulate(cfg, gen, &mut stream(seed, Stream::Generate))?;
    let test = TestSet::generate(cfg.test_size, gen, &mut stream(derive_seed(seed, 1), Stream::Generate));
    Ok((data, test))
}

/// Runs one method on one replication's data.
pub fn run_method(
    data: &SimData,
    method: Method,
    chain: &ChainConfig,
    gamma: &GammaParams,
    dp: &DpHyper,
) -> Result<PosteriorStore> {
    let f2 = match method {
        Method::Blocked => data.perfectly_blocked(),
        _ => data.f2.clone(),
    };
    let model = school_model(&data.schema)?;
    let problem = Problem::new(data.schema.clone(), data.f1.clone(), f2, model)?;
    let priors = Priors { gamma: gamma.clone(), dp: dp.clone() };
    let mut sampler = Sampler::new(&problem, method.kind(), chain.clone(), priors)?;
    sampler.run(Some(&data.truth_links()))
}

/// Settings of a replicated experiment.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Experiment {
    pub scenario: ScenarioConfig,
    pub generator: GenerationModel,
    pub chain: ChainConfig,
    pub dp: DpHyper,
    pub methods: Vec<Method>,
    pub master_seed: u64,
    pub mean_prediction: bool,
}

/// Metrics of every method on one replication.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReplicationResult {
    pub rep: usize,
    pub methods: Vec<(Method, RepMetrics)>,
}

impl ReplicationResult {
    pub fn get(&self, m: Method) -> Option<&RepMetrics> {
        self.methods.iter().find(|(k, _)| *k == m).map(|(_, r)| r)
    }
}

impl Experiment {
    pub fn run_replication(&self, rep: usize) -> Result<ReplicationResult> {
        let (data, test) = generate_replication(&self.scenario, &self.generator, self.master_seed, rep)?;
        let (a, b) = self.scenario.gamma_params()?;
        let gamma = GammaParams::new(&data.schema, a, b)?;
        let seed = replication_seed(self.master_seed, rep);
        let chain = ChainConfig { seed, ..self.chain.clone() };
        let model = school_model(&data.schema)?;
        let mut methods = Vec::new();
        for &m in &self.methods {
            let store = run_method(&data, m, &chain, &gamma, &self.dp)?;
            let theta = store.theta_mean();
            let rmse = compute_rmse(&model, &theta, &test, self.mean_prediction, &mut stream(seed, Stream::Predict));
            methods.push((m, RepMetrics { rep, theta: theta.to_vec(), pmr: store.mean_match_rate(), rmse }));
        }
        Ok(ReplicationResult { rep, methods })
    }

    /// Runs every replication in parallel; results come back in order.
    pub fn run(&self) -> Result<Vec<ReplicationResult>> {
        self.scenario.validate()?;
        self.chain.validate()?;
        (0..self.scenario.replications).into_par_iter().map(|r| self.run_replication(r)).collect()
    }

    /// Results of one method across replications.
    pub fn column(results: &[ReplicationResult], m: Method) -> Vec<RepMetrics> {
        results.iter().filter_map(|r| r.get(m).cloned()).collect()
    }
}
