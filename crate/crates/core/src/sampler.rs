//! The Gibbs sampler that ties the components together.
//!
//! One full iteration of the matching model runs, in order: pool moves,
//! linkage updates, imputation of dummy outcomes, regression parameters,
//! error rates and the latent-class model. The baseline that trusts the
//! reported codes runs only the middle three steps.

use std::collections::HashSet;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::analysis::{sample_theta, AnalysisModel, CompletedData, Theta};
use crate::data::{validate_pair, Code, InCommonSchema, RecordTable};
use crate::error::{Error, Result};
use crate::error_model::{sample_gamma, GammaParams};
use crate::latent_class::{DpHyper, Psi};
use crate::linkage::{sample_c, LinkConfig, LinkStats};
use crate::pool_move::{file1_keys, sweep, MoveConfig, MoveContext, MoveStats};
use crate::pools::{PoolKey, Slot};
use crate::rng::{stream, Rng, Stream};
use crate::state::LinkState;

/// Which model a chain runs.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelKind {
    /// Matching and regression with faulty matching variables.
    Blase,
    /// Matching and regression that trusts the reported codes.
    Gazm,
}

impl fmt::Display for ModelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ModelKind::Blase => "blase",
            ModelKind::Gazm => "gazm",
        })
    }
}

impl FromStr for ModelKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "blase" => Ok(ModelKind::Blase),
            "gazm" => Ok(ModelKind::Gazm),
            _ => Err(Error::Parameter(format!("unknown model '{s}'"))),
        }
    }
}

/// Chain length and component settings.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ChainConfig {
    pub iterations: usize,
    pub burnin: usize,
    pub thin: usize,
    pub seed: u64,
    pub link: LinkConfig,
    pub moves: MoveConfig,
    /// Switches that hold a block of parameters at its current value.
    pub update_theta: bool,
    pub update_gamma: bool,
    pub update_psi: bool,
}

impl Default for ChainConfig {
    fn default() -> Self {
        ChainConfig {
            iterations: 10_000,
            burnin: 500,
            thin: 2,
            seed: 1,
            link: LinkConfig::default(),
            moves: MoveConfig::default(),
            update_theta: true,
            update_gamma: true,
            update_psi: true,
        }
    }
}

impl ChainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.thin == 0 {
            return Err(Error::Parameter("thin must be at least 1".into()));
        }
        if self.burnin >= self.iterations {
            return Err(Error::Parameter(format!(
                "burn-in ({}) must be smaller than the number of iterations ({})",
                self.burnin, self.iterations
            )));
        }
        self.link.validate()
    }

    /// Number of stored draws.
    pub fn stored_draws(&self) -> usize {
        (self.iterations - self.burnin) / self.thin
    }

    /// Whether iteration `s` (1-based) is stored.
    pub fn keeps(&self, s: usize) -> bool {
        s > self.burnin && (s - self.burnin).is_multiple_of(self.thin)
    }
}

/// Data and analysis model shared by every chain on the same files.
#[derive(Clone, Debug)]
pub struct Problem {
    pub schema: InCommonSchema,
    pub f1: RecordTable,
    pub f2: RecordTable,
    pub model: AnalysisModel,
}

impl Problem {
    pub fn new(schema: InCommonSchema, mut f1: RecordTable, mut f2: RecordTable, model: AnalysisModel) -> Result<Problem> {
        schema.validate()?;
        f1.normalize_seeds(&schema);
        f2.normalize_seeds(&schema);
        validate_pair(&schema, &f1, &f2)?;
        Ok(Problem { schema, f1, f2, model })
    }

    /// Seeded pairs as completed rows.
    pub fn seeded_data(&self) -> CompletedData {
        let mut d = CompletedData::default();
        for r in 0..self.f1.len() {
            if let Some(i) = self.f1.t1_partner[r] {
                d.push(&self.model, self.f1.row(r), self.f1.y[r], self.f2.y[i]);
            }
        }
        d
    }

    /// Keys of seeded records: one per seeded pair plus every record that is
    /// a seed on all fields without a partner.
    pub fn seed_keys(&self) -> Vec<Code> {
        let mut rows = Vec::new();
        for r in 0..self.f1.len() {
            if self.f1.is_t1(r) || self.f1.is_t2(r) {
                rows.extend_from_slice(self.f1.row(r));
            }
        }
        for i in 0..self.f2.len() {
            if self.f2.is_t2(i) {
                rows.extend_from_slice(self.f2.row(i));
            }
        }
        rows
    }
}

/// Priors of the matching model.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Priors {
    pub gamma: GammaParams,
    pub dp: DpHyper,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SamplerStats {
    pub moves: MoveStats,
    pub link: LinkStats,
}

struct Streams {
    moves: Rng,
    link: Rng,
    impute: Rng,
    theta: Rng,
    gamma: Rng,
    psi: Rng,
}

impl Streams {
    fn new(seed: u64) -> Streams {
        Streams {
            moves: stream(seed, Stream::PoolMove),
            link: stream(seed, Stream::Link),
            impute: stream(seed, Stream::Impute),
            theta: stream(seed, Stream::Theta),
            gamma: stream(seed, Stream::Gamma),
            psi: stream(seed, Stream::Psi),
        }
    }
}

/// One chain.
pub struct Sampler<'p> {
    pub problem: &'p Problem,
    pub kind: ModelKind,
    pub config: ChainConfig,
    pub state: LinkState,
    pub theta: Theta,
    pub psi: Option<Psi>,
    pub gamma: Option<GammaParams>,
    pub dp: DpHyper,
    pub stats: SamplerStats,
    /// Set when the starting regression parameters did not come from seeds.
    pub theta_fallback: bool,
    f1_keys: HashSet<PoolKey>,
    rng: Streams,
}

impl<'p> Sampler<'p> {
    /// Builds the starting state.
    ///
    /// Regression parameters start from a draw given the seeded pairs. The
    /// linkage is drawn given those parameters, and the latent-class model
    /// starts from one sweep over the seeded keys.
    pub fn new(problem: &'p Problem, kind: ModelKind, config: ChainConfig, priors: Priors) -> Result<Sampler<'p>> {
        config.validate()?;
        priors.dp.validate()?;
        if priors.gamma.fields != problem.schema.matching_fields() {
            return Err(Error::Parameter("error-rate priors do not match the matching fields".into()));
        }
        let mut rng = Streams::new(config.seed);
        let state = LinkState::from_reported(&problem.f1, &problem.f2);
        if kind == ModelKind::Blase && problem.f1.t1_count() == 0 {
            log::warn!("no seeded pairs; the matching model starts without anchors");
        }
        let (theta, theta_fallback) = match sample_theta(&problem.model, &problem.seeded_data(), &mut rng.theta) {
            Ok(t) => (t, false),
            Err(e) => {
                log::warn!("starting parameters from moments of the outcomes: {e}");
                (moment_theta(problem), true)
            }
        };
        let mut s = Sampler {
            problem,
            kind,
            config,
            state,
            theta,
            psi: None,
            gamma: None,
            dp: priors.dp.clone(),
            stats: SamplerStats::default(),
            theta_fallback,
            f1_keys: file1_keys(&problem.f1),
            rng,
        };
        s.impute();
        s.stats.link.add(&sample_c(
            &mut s.state.pools,
            &problem.model,
            &s.theta,
            &problem.f1.y,
            &problem.f2.y,
            &s.config.link,
            &mut s.rng.link,
        ));
        s.impute();
        if kind == ModelKind::Blase && !problem.schema.matching_fields().is_empty() {
            let mut psi = Psi::from_prior(&problem.schema, &priors.dp, &mut s.rng.psi)?;
            let seeds = problem.seed_keys();
            if !seeds.is_empty() {
                psi.gibbs_sweep(&seeds, problem.schema.len(), &priors.dp, &mut s.rng.psi)?;
            }
            s.psi = Some(psi);
            s.relabel_all();
            let mut gamma = priors.gamma;
            gamma.draw_prior(&mut s.rng.gamma)?;
            s.gamma = Some(gamma);
        }
        Ok(s)
    }

    /// Fixes the regression parameters, for held-fixed experiments.
    pub fn set_theta(&mut self, theta: Theta) -> Result<()> {
        theta.validate(&self.problem.model)?;
        self.theta = theta;
        Ok(())
    }

    /// Draws a fresh class label for every individual from the current model.
    fn relabel_all(&mut self) {
        let Some(psi) = self.psi.as_ref() else { return };
        let mut labels = Vec::new();
        for (key, pool) in &self.state.pools.pools {
            for _ in 0..pool.size() {
                labels.push(psi.draw_label(key, &mut self.rng.psi));
            }
        }
        self.write_labels(&labels);
    }

    fn write_labels(&mut self, labels: &[usize]) {
        let mut it = labels.iter();
        for pool in self.state.pools.pools.values() {
            for (a, b) in pool.side1.iter().zip(&pool.side2) {
                let z = *it.next().expect("one label per individual");
                if let Slot::Real(r) = *a {
                    self.state.z1[r] = z;
                }
                if let Slot::Real(i) = *b {
                    self.state.z2[i] = z;
                }
            }
            for &(r, i) in &pool.t1 {
                let z = *it.next().expect("one label per individual");
                self.state.z1[r] = z;
                self.state.z2[i] = z;
            }
        }
    }

    /// Sets every class label, in individual order, for held-fixed experiments.
    pub fn set_labels(&mut self, labels: &[usize]) -> Result<()> {
        if labels.len() != self.state.pools.n_individuals() {
            return Err(Error::Parameter("one label is needed per individual".into()));
        }
        self.write_labels(labels);
        Ok(())
    }

    /// Redraws the outcome of every dummy given its partner.
    pub fn impute(&mut self) {
        let p = self.problem;
        for (key, pool) in self.state.pools.pools.iter_mut() {
            let pred = p.model.predictor(&self.theta, key);
            for q in 0..pool.c() {
                match (pool.side1[q], pool.side2[q]) {
                    (Slot::Dummy { id, .. }, Slot::Real(i)) => {
                        pool.side1[q] = Slot::Dummy { id, y: pred.impute_y1(p.f2.y[i], &mut self.rng.impute) };
                    }
                    (Slot::Real(r), Slot::Dummy { id, .. }) => {
                        pool.side2[q] = Slot::Dummy { id, y: pred.impute_y2(p.f1.y[r], &mut self.rng.impute) };
                    }
                    _ => {}
                }
            }
        }
    }

    /// Completed outcomes of every individual, pools in key order.
    pub fn completed(&self) -> CompletedData {
        let p = self.problem;
        let mut d = CompletedData::default();
        for (key, pool) in &self.state.pools.pools {
            for (a, b) in pool.side1.iter().zip(&pool.side2) {
                d.push(&p.model, key, a.value(&p.f1.y), b.value(&p.f2.y));
            }
            for &(r, i) in &pool.t1 {
                d.push(&p.model, key, p.f1.y[r], p.f2.y[i]);
            }
        }
        d
    }

    fn individual_keys(&self) -> Vec<Code> {
        let mut rows = Vec::with_capacity(self.state.pools.n_individuals() * self.problem.schema.len());
        for (key, pool) in &self.state.pools.pools {
            for _ in 0..pool.size() {
                rows.extend_from_slice(key);
            }
        }
        rows
    }

    pub fn move_context(&self) -> Option<MoveContext<'_>> {
        Some(MoveContext {
            schema: &self.problem.schema,
            f1: &self.problem.f1,
            f2: &self.problem.f2,
            model: &self.problem.model,
            theta: &self.theta,
            psi: self.psi.as_ref()?,
            gamma: self.gamma.as_ref()?,
            f1_keys: &self.f1_keys,
            moves: &self.config.moves,
            link: &self.config.link,
        })
    }

    /// Runs one iteration.
    pub fn step(&mut self) -> Result<()> {
        let p = self.problem;
        if let (Some(psi), Some(gamma)) = (&self.psi, &self.gamma) {
            let ctx = MoveContext {
                schema: &p.schema,
                f1: &p.f1,
                f2: &p.f2,
                model: &p.model,
                theta: &self.theta,
                psi,
                gamma,
                f1_keys: &self.f1_keys,
                moves: &self.config.moves,
                link: &self.config.link,
            };
            let st = sweep(&ctx, &mut self.state, &mut self.rng.moves)?;
            self.stats.moves.add(&st);
        }
        let st = sample_c(&mut self.state.pools, &p.model, &self.theta, &p.f1.y, &p.f2.y, &self.config.link, &mut self.rng.link);
        self.stats.link.add(&st);
        self.impute();
        if self.config.update_theta {
            self.theta = sample_theta(&p.model, &self.completed(), &mut self.rng.theta)?;
        }
        if self.psi.is_some() {
            if self.config.update_gamma {
                let gamma = self.gamma.as_mut().expect("error rates");
                let state = &self.state;
                let f2 = &p.f2;
                let fields = gamma.fields.clone();
                sample_gamma(
                    gamma,
                    |m| {
                        let j = fields[m];
                        let mut errors = 0;
                        let mut total = 0;
                        for i in 0..f2.len() {
                            if !f2.is_seed(i, j) {
                                total += 1;
                                errors += state.error(i, j) as usize;
                            }
                        }
                        (errors, total)
                    },
                    &mut self.rng.gamma,
                )?;
            }
            if self.config.update_psi {
                let rows = self.individual_keys();
                let psi = self.psi.as_mut().expect("latent-class model");
                let labels = psi.gibbs_sweep(&rows, p.schema.len(), &self.dp, &mut self.rng.psi)?;
                self.write_labels(&labels);
            }
        }
        Ok(())
    }

    /// Checks that pools are balanced, that every record sits in the pool of
    /// its current key, and that error indicators agree with the codes.
    pub fn check_state(&self) -> Result<()> {
        let p = self.problem;
        self.state.pools.check()?;
        if self.state.pools.membership() != self.state.rebuilt_pools(&p.f1, &p.f2).membership() {
            return Err(Error::Contract("pool index differs from a rebuild".into()));
        }
        for i in 0..p.f2.len() {
            for j in 0..p.schema.len() {
                let e = self.state.error(i, j);
                let same = self.state.key2(i)[j] == p.f2.code(i, j);
                if (p.f2.is_seed(i, j) && (e || !same)) || e == same {
                    return Err(Error::Contract(format!("record {i}, field {j}: error indicator disagrees with codes")));
                }
            }
        }
        Ok(())
    }

    /// Share of correct links among non-seed links between real records.
    pub fn match_rate(&self, truth: &[Option<usize>]) -> Option<f64> {
        let mut total = 0usize;
        let mut correct = 0usize;
        for pool in self.state.pools.pools.values() {
            for (a, b) in pool.side1.iter().zip(&pool.side2) {
                if let (Slot::Real(r), Slot::Real(i)) = (*a, *b) {
                    total += 1;
                    if truth[i] == Some(r) {
                        correct += 1;
                    }
                }
            }
        }
        (total > 0).then(|| correct as f64 / total as f64)
    }

    /// Number of distinct class labels among individuals.
    pub fn occupied_classes(&self) -> usize {
        if self.psi.is_none() {
            return 0;
        }
        let mut labels = Vec::new();
        for pool in self.state.pools.pools.values() {
            for (a, b) in pool.side1.iter().zip(&pool.side2) {
                labels.push(match (*a, *b) {
                    (Slot::Real(r), _) => self.state.z1[r],
                    (_, Slot::Real(i)) => self.state.z2[i],
                    _ => 0,
                });
            }
            for &(r, _) in &pool.t1 {
                labels.push(self.state.z1[r]);
            }
        }
        Psi::occupied(&labels)
    }

    /// Runs the configured number of iterations and stores the kept draws.
    pub fn run(&mut self, truth: Option<&[Option<usize>]>) -> Result<PosteriorStore> {
        let mut store = PosteriorStore::new(&self.problem.model, self.gamma.as_ref(), &self.problem.schema);
        for s in 1..=self.config.iterations {
            self.step()?;
            if self.config.keeps(s) {
                store.push(Draw {
                    iteration: s,
                    theta: self.theta.to_vec(),
                    gamma: self.gamma.as_ref().map(|g| g.gamma.clone()).unwrap_or_default(),
                    match_rate: truth.and_then(|t| self.match_rate(t)),
                    occupied: self.occupied_classes(),
                });
            }
        }
        store.stats = self.stats;
        Ok(store)
    }
}

/// Starting parameters from the marginal moments of each outcome.
fn moment_theta(problem: &Problem) -> Theta {
    let moments = |y: &[f64]| {
        let n = y.len().max(1) as f64;
        let mean = y.iter().sum::<f64>() / n;
        let var = y.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0).max(1.0);
        (mean, if var > 0.0 { var } else { 1.0 })
    };
    let (m1, v1) = moments(&problem.f1.y);
    let (m2, v2) = moments(&problem.f2.y);
    let start = |terms: &[crate::analysis::Term], mean: f64| {
        terms
            .iter()
            .map(|t| if *t == crate::analysis::Term::Intercept { mean } else { 0.0 })
            .collect::<Vec<f64>>()
    };
    Theta {
        beta: start(&problem.model.y1_terms, m1),
        sigma1_sq: v1,
        eta: start(&problem.model.y2_terms, m2),
        sigma2_sq: v2,
    }
}

/// One stored draw.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Draw {
    pub iteration: usize,
    pub theta: Vec<f64>,
    pub gamma: Vec<f64>,
    pub match_rate: Option<f64>,
    pub occupied: usize,
}

/// Summary of one scalar across draws.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub name: String,
    pub mean: f64,
    pub sd: f64,
    pub q025: f64,
    pub q975: f64,
}

impl Summary {
    pub fn of(name: &str, x: &[f64]) -> Summary {
        let n = x.len() as f64;
        let mean = x.iter().sum::<f64>() / n;
        let sd = if x.len() > 1 {
            (x.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0)).sqrt()
        } else {
            0.0
        };
        let mut sorted = x.to_vec();
        sorted.sort_by(|a, b| a.total_cmp(b));
        Summary { name: name.to_string(), mean, sd, q025: quantile(&sorted, 0.025), q975: quantile(&sorted, 0.975) }
    }
}

/// Linear-interpolation quantile of sorted data.
pub fn quantile(sorted: &[f64], q: f64) -> f64 {
    if sorted.is_empty() {
        return f64::NAN;
    }
    let h = (sorted.len() - 1) as f64 * q;
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

/// Kept draws of a chain.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PosteriorStore {
    pub theta_names: Vec<String>,
    pub gamma_names: Vec<String>,
    pub p1: usize,
    pub p2: usize,
    pub draws: Vec<Draw>,
    pub stats: SamplerStats,
}

impl PosteriorStore {
    pub fn new(model: &AnalysisModel, gamma: Option<&GammaParams>, schema: &InCommonSchema) -> PosteriorStore {
        PosteriorStore {
            theta_names: Theta::names(model),
            gamma_names: gamma
                .map(|g| g.fields.iter().map(|&j| format!("gamma[{}]", schema.fields[j].name)).collect())
                .unwrap_or_default(),
            p1: model.p1(),
            p2: model.p2(),
            draws: Vec::new(),
            stats: SamplerStats::default(),
        }
    }

    pub fn push(&mut self, d: Draw) {
        self.draws.push(d);
    }

    pub fn len(&self) -> usize {
        self.draws.len()
    }

    pub fn is_empty(&self) -> bool {
        self.draws.is_empty()
    }

    pub fn theta_column(&self, k: usize) -> Vec<f64> {
        self.draws.iter().map(|d| d.theta[k]).collect()
    }

    pub fn theta_summaries(&self) -> Vec<Summary> {
        self.theta_names.iter().enumerate().map(|(k, n)| Summary::of(n, &self.theta_column(k))).collect()
    }

    pub fn gamma_summaries(&self) -> Vec<Summary> {
        self.gamma_names
            .iter()
            .enumerate()
            .map(|(k, n)| Summary::of(n, &self.draws.iter().map(|d| d.gamma[k]).collect::<Vec<_>>()))
            .collect()
    }

    /// Posterior mean of the regression parameters.
    pub fn theta_mean(&self) -> Theta {
        let k = self.theta_names.len();
        let mean: Vec<f64> = (0..k).map(|c| self.theta_column(c).iter().sum::<f64>() / self.len() as f64).collect();
        Theta::from_vec(&mean, self.p1, self.p2)
    }

    /// Match rate averaged over the draws that have one.
    pub fn mean_match_rate(&self) -> Option<f64> {
        let v: Vec<f64> = self.draws.iter().filter_map(|d| d.match_rate).collect();
        (!v.is_empty()).then(|| v.iter().sum::<f64>() / v.len() as f64)
    }
}
