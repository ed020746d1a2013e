//! The `generate`, `run`, `metrics` and `report` commands.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use blase_core::analysis::Theta;
use blase_core::data::{format_f64, FileId};
use blase_core::rng::{stream, Stream};
use blase_core::sampler::{PosteriorStore, Summary};
use blase_core::sim::experiment::{generate_replication, replication_seed, Experiment, Method, ReplicationResult};
use blase_core::sim::generate::{GenerationModel, ScenarioConfig, SimData, TestSet};
use blase_core::sim::metrics::{compare_methods, compute_rmse, Comparison, RepMetrics};
use blase_core::{ChainConfig, InCommonSchema, ModelKind, Priors, Problem, RecordTable, Sampler, Scenario};

use crate::config::Settings;
use crate::error::{CliError, Result};

pub const F1_FILE: &str = "F1.csv";
pub const F2_FILE: &str = "F2.csv";
pub const TRUTH_FILE: &str = "truth.csv";
pub const TEST_FILE: &str = "test.csv";
pub const SCENARIO_FILE: &str = "scenario.json";
pub const TRACE_FILE: &str = "trace.csv";
pub const SUMMARY_FILE: &str = "summary.json";

pub fn rep_dir(root: &Path, rep: usize) -> PathBuf {
    root.join(format!("rep_{rep:03}"))
}

fn create_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| CliError::output(dir, e))
}

fn write_bytes(path: &Path, bytes: &[u8]) -> Result<()> {
    std::fs::write(path, bytes).map_err(|e| CliError::output(path, e))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value).map_err(|e| CliError::output(path, e))?;
    text.push('\n');
    write_bytes(path, text.as_bytes())
}

fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::input(path, e))?;
    serde_json::from_str(&text).map_err(|e| CliError::input(path, e))
}

/// Renders CSV into memory so that a failed write leaves no partial file.
fn csv_bytes(f: impl FnOnce(&mut Vec<u8>) -> blase_core::Result<()>) -> Result<Vec<u8>> {
    let mut buf = Vec::new();
    f(&mut buf)?;
    Ok(buf)
}

/// Description of one generated replication.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScenarioRecord {
    pub replication: usize,
    pub master_seed: u64,
    pub scenario: ScenarioConfig,
    pub schema: InCommonSchema,
    pub theta_names: Vec<String>,
    pub true_theta: Vec<f64>,
    pub faulty_rows: usize,
    pub max_true_pool: usize,
}

/// Writes the files of every replication under `out/rep_XXX`.
pub fn generate(s: &Settings) -> Result<Vec<PathBuf>> {
    let scenario = s.scenario()?;
    let gen = GenerationModel::default();
    let names = Theta::names(&blase_core::sim::generate::school_model(&blase_core::sim::generate::school_schema())?);
    let master = s.chain.seed;
    (0..scenario.replications)
        .into_par_iter()
        .map(|rep| {
            let (data, test) = generate_replication(scenario, &gen, master, rep)?;
            let dir = rep_dir(&s.out, rep);
            create_dir(&dir)?;
            write_bytes(&dir.join(F1_FILE), &csv_bytes(|b| data.f1.write_csv(&data.schema, b))?)?;
            write_bytes(&dir.join(F2_FILE), &csv_bytes(|b| data.f2.write_csv(&data.schema, b))?)?;
            write_bytes(&dir.join(TRUTH_FILE), &csv_bytes(|b| data.write_truth(b))?)?;
            write_bytes(&dir.join(TEST_FILE), &csv_bytes(|b| test.write_csv(&data.schema, b))?)?;
            let record = ScenarioRecord {
                replication: rep,
                master_seed: master,
                scenario: scenario.clone(),
                schema: data.schema.clone(),
                theta_names: names.clone(),
                true_theta: gen.true_theta().to_vec(),
                faulty_rows: data.faulty_rows(),
                max_true_pool: data.max_true_pool(),
            };
            write_json(&dir.join(SCENARIO_FILE), &record)?;
            Ok(dir)
        })
        .collect()
}

/// Acceptance counters of a chain.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Acceptance {
    pub pool_moves_proposed: u64,
    pub pool_moves_accepted: u64,
    pub pool_moves_unchanged: u64,
    pub pool_moves_aborted: u64,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub pool_move_rate: Option<f64>,
    pub exact_pools: u64,
    pub switch_pools: u64,
    pub swaps_proposed: u64,
    pub swaps_accepted: u64,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub swap_rate: Option<f64>,
}

fn rate(a: u64, n: u64) -> Option<f64> {
    (n > 0).then(|| a as f64 / n as f64)
}

/// Contents of `summary.json`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub method: Method,
    pub model: ModelKind,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub replication: Option<usize>,
    pub seed: u64,
    pub iterations: usize,
    pub burnin: usize,
    pub thin: usize,
    pub stored_draws: usize,
    /// Number of coefficients of the first regression.
    pub p1: usize,
    pub theta: Vec<Summary>,
    #[serde(skip_serializing_if = "Vec::is_empty", default)]
    pub gamma: Vec<Summary>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub mean_pmr: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub rmse: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub true_theta: Option<Vec<f64>>,
    pub theta_fallback: bool,
    pub acceptance: Acceptance,
}

impl RunSummary {
    fn metrics(&self) -> Result<RepMetrics> {
        let rmse = self.rmse.ok_or_else(|| {
            CliError::Config(format!("{} result has no RMSE; run it on a directory with {TEST_FILE}", self.method))
        })?;
        Ok(RepMetrics {
            rep: self.replication.unwrap_or(0),
            theta: self.theta.iter().map(|t| t.mean).collect(),
            pmr: self.mean_pmr,
            rmse,
        })
    }
}

pub fn write_trace(path: &Path, store: &PosteriorStore, with_pmr: bool) -> Result<()> {
    let bytes = csv_bytes(|buf| {
        let mut w = csv::WriterBuilder::new().quote_style(csv::QuoteStyle::Never).from_writer(buf);
        let mut header = vec!["iteration".to_string()];
        header.extend(store.theta_names.iter().cloned());
        header.extend(store.gamma_names.iter().cloned());
        if with_pmr {
            header.push("pmr".into());
        }
        header.push("occupied".into());
        w.write_record(&header)?;
        for d in &store.draws {
            let mut rec = vec![d.iteration.to_string()];
            rec.extend(d.theta.iter().map(|v| format_f64(*v)));
            rec.extend(d.gamma.iter().map(|v| format_f64(*v)));
            if with_pmr {
                rec.push(d.match_rate.map(format_f64).unwrap_or_default());
            }
            rec.push(d.occupied.to_string());
            w.write_record(&rec)?;
        }
        w.flush()?;
        Ok(())
    })?;
    write_bytes(path, &bytes)
}

/// Directories holding input files: the input itself, or its `rep_*`
/// subdirectories.
pub fn input_units(input: &Path) -> Result<Vec<PathBuf>> {
    if input.join(F1_FILE).is_file() {
        return Ok(vec![input.to_path_buf()]);
    }
    let entries = std::fs::read_dir(input).map_err(|e| CliError::input(input, e))?;
    let mut dirs: Vec<PathBuf> = entries
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.is_dir() && p.file_name().is_some_and(|n| n.to_string_lossy().starts_with("rep_")))
        .filter(|p| p.join(F1_FILE).is_file())
        .collect();
    dirs.sort();
    if dirs.is_empty() {
        return Err(CliError::input(input, format!("no {F1_FILE} here or in rep_* subdirectories")));
    }
    Ok(dirs)
}

fn method_of(s: &Settings) -> Method {
    match (s.kind, s.use_true_codes) {
        (ModelKind::Blase, _) => Method::Blase,
        (ModelKind::Gazm, false) => Method::Gazm,
        (ModelKind::Gazm, true) => Method::Blocked,
    }
}

/// Runs one chain on the files in `dir` and writes its trace and summary to
/// `out`.
pub fn run_unit(s: &Settings, dir: &Path, out: &Path) -> Result<RunSummary> {
    let record_path = dir.join(SCENARIO_FILE);
    let record: Option<ScenarioRecord> = record_path.is_file().then(|| read_json(&record_path)).transpose()?;
    let read = |name: &str, file: FileId| {
        let path = dir.join(name);
        RecordTable::read_csv_path(&s.schema, file, &path).map_err(|e| CliError::input(&path, e))
    };
    let f1 = read(F1_FILE, FileId::One)?;
    let mut f2 = read(F2_FILE, FileId::Two)?;
    let truth_path = dir.join(TRUTH_FILE);
    let truth = if truth_path.is_file() {
        let (links, codes) = SimData::read_truth_path(&s.schema, &truth_path).map_err(|e| CliError::input(&truth_path, e))?;
        if links.len() != f2.len() || links.iter().any(|&r| r >= f1.len()) {
            return Err(CliError::input(&truth_path, "does not fit the files"));
        }
        Some((links, codes))
    } else {
        None
    };
    let method = method_of(s);
    if method == Method::Blocked {
        let (_, codes) = truth
            .as_ref()
            .ok_or_else(|| CliError::Config(format!("model.use_true_codes needs {TRUTH_FILE} next to the files")))?;
        let j = s.schema.len();
        for i in 0..f2.len() {
            f2.row_mut(i).copy_from_slice(&codes[i * j..(i + 1) * j]);
        }
    }
    let model = s.analysis_model()?;
    let problem = Problem::new(s.schema.clone(), f1, f2, model)?;
    let seed = match &record {
        Some(r) => replication_seed(s.chain.seed, r.replication),
        None => s.chain.seed,
    };
    let chain = ChainConfig { seed, ..s.chain.clone() };
    let preset: Option<Scenario> = record.as_ref().and_then(|r| r.scenario.preset);
    let priors = Priors { gamma: s.gamma_params(preset)?, dp: s.dp.clone() };
    let links: Option<Vec<Option<usize>>> = truth.as_ref().map(|(l, _)| l.iter().map(|&r| Some(r)).collect());
    let mut sampler = Sampler::new(&problem, s.kind, chain.clone(), priors)?;
    let theta_fallback = sampler.theta_fallback;
    let store = sampler.run(links.as_deref())?;

    let test_path = dir.join(TEST_FILE);
    let rmse = if test_path.is_file() {
        let file = std::fs::File::open(&test_path).map_err(|e| CliError::input(&test_path, e))?;
        let test = TestSet::read_csv(&s.schema, file).map_err(|e| CliError::input(&test_path, e))?;
        Some(compute_rmse(&problem.model, &store.theta_mean(), &test, s.mean_prediction, &mut stream(seed, Stream::Predict)))
    } else {
        None
    };

    let st = store.stats;
    let summary = RunSummary {
        method,
        model: s.kind,
        replication: record.as_ref().map(|r| r.replication),
        seed,
        iterations: chain.iterations,
        burnin: chain.burnin,
        thin: chain.thin,
        stored_draws: store.len(),
        p1: store.p1,
        theta: store.theta_summaries(),
        gamma: store.gamma_summaries(),
        mean_pmr: store.mean_match_rate(),
        rmse,
        true_theta: record.as_ref().map(|r| r.true_theta.clone()),
        theta_fallback,
        acceptance: Acceptance {
            pool_moves_proposed: st.moves.proposed,
            pool_moves_accepted: st.moves.accepted,
            pool_moves_unchanged: st.moves.unchanged,
            pool_moves_aborted: st.moves.aborted,
            pool_move_rate: rate(st.moves.accepted, st.moves.proposed),
            exact_pools: st.link.exact_pools,
            switch_pools: st.link.switch_pools,
            swaps_proposed: st.link.swaps_proposed,
            swaps_accepted: st.link.swaps_accepted,
            swap_rate: rate(st.link.swaps_accepted, st.link.swaps_proposed),
        },
    };
    create_dir(out)?;
    write_trace(&out.join(TRACE_FILE), &store, links.is_some())?;
    write_json(&out.join(SUMMARY_FILE), &summary)?;
    Ok(summary)
}

/// Runs the configured model on the input directory, or on each of its
/// replication directories.
pub fn run(s: &Settings) -> Result<Vec<RunSummary>> {
    let input = s.input.as_ref().ok_or_else(|| CliError::Config("no input: set io.input or pass --input".into()))?;
    let units = input_units(input)?;
    let single = units.len() == 1 && units[0] == *input;
    units
        .par_iter()
        .map(|dir| {
            let out = if single { s.out.clone() } else { s.out.join(dir.file_name().expect("named directory")) };
            run_unit(s, dir, &out)
        })
        .collect()
}

fn load_summaries(dir: &Path) -> Result<Vec<RunSummary>> {
    let direct = dir.join(SUMMARY_FILE);
    if direct.is_file() {
        return Ok(vec![read_json(&direct)?]);
    }
    let entries = std::fs::read_dir(dir).map_err(|e| CliError::input(dir, e))?;
    let mut paths: Vec<PathBuf> = entries
        .filter_map(|e| e.ok().map(|e| e.path().join(SUMMARY_FILE)))
        .filter(|p| p.is_file())
        .collect();
    paths.sort();
    if paths.is_empty() {
        return Err(CliError::input(dir, format!("no {SUMMARY_FILE} here or one level below")));
    }
    paths.iter().map(|p| read_json(p)).collect()
}

/// Mean PMR and RMSE of one method.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MethodReport {
    pub method: Method,
    pub replications: usize,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub mean_pmr: Option<f64>,
    pub mean_rmse: f64,
}

fn method_report(method: Method, reps: &[RepMetrics]) -> MethodReport {
    let n = reps.len() as f64;
    let pmr: Option<Vec<f64>> = reps.iter().map(|r| r.pmr).collect();
    MethodReport {
        method,
        replications: reps.len(),
        mean_pmr: pmr.map(|v| v.iter().sum::<f64>() / n),
        mean_rmse: reps.iter().map(|r| r.rmse).sum::<f64>() / n,
    }
}

fn write_reports(out: &Path, reports: &[MethodReport]) -> Result<()> {
    let bytes = csv_bytes(|buf| {
        let mut w = csv::WriterBuilder::new().quote_style(csv::QuoteStyle::Never).from_writer(buf);
        w.write_record(["method", "replications", "mean_pmr", "mean_rmse"])?;
        for r in reports {
            w.write_record([
                r.method.to_string(),
                r.replications.to_string(),
                r.mean_pmr.map(format_f64).unwrap_or_default(),
                format_f64(r.mean_rmse),
            ])?;
        }
        w.flush()?;
        Ok(())
    })?;
    write_bytes(&out.join("metrics.csv"), &bytes)?;
    write_json(&out.join("metrics.json"), &reports)
}

fn write_comparison(out: &Path, c: &Comparison) -> Result<()> {
    write_bytes(&out.join("comparison.csv"), &csv_bytes(|b| c.write_csv(b))?)?;
    write_json(&out.join("comparison.json"), c)
}

/// Compares the matching model with the baseline when both are present.
fn comparison(
    by_method: &BTreeMap<Method, Vec<RepMetrics>>,
    truth: &[f64],
    names: &[String],
    p1: usize,
) -> Result<Option<Comparison>> {
    let (Some(bl), Some(gm)) = (by_method.get(&Method::Blase), by_method.get(&Method::Gazm)) else {
        return Ok(None);
    };
    let pb = by_method.get(&Method::Blocked).map(|v| v.as_slice());
    let coefficients: Vec<usize> = (0..p1).collect();
    Ok(Some(compare_methods(bl, gm, pb, truth, names, &coefficients)?))
}

/// Reads run results, one directory per method, and writes per-method
/// means and, when both models are present, the paired comparison.
pub fn metrics(s: &Settings, dirs: &[PathBuf]) -> Result<(Vec<MethodReport>, Option<Comparison>)> {
    if dirs.is_empty() {
        return Err(CliError::Usage("metrics needs at least one result directory".into()));
    }
    let mut by_method: BTreeMap<Method, Vec<RepMetrics>> = BTreeMap::new();
    let mut first: Option<RunSummary> = None;
    for dir in dirs {
        let summaries = load_summaries(dir)?;
        let method = summaries[0].method;
        if summaries.iter().any(|x| x.method != method) {
            return Err(CliError::input(dir, "mixes results of different methods"));
        }
        if by_method.contains_key(&method) {
            return Err(CliError::Config(format!("{method} results given twice")));
        }
        let mut reps: Vec<RepMetrics> = summaries.iter().map(|x| x.metrics()).collect::<Result<_>>()?;
        reps.sort_by_key(|r| r.rep);
        by_method.insert(method, reps);
        if method == Method::Blase || first.is_none() {
            first = Some(summaries[0].clone());
        }
    }
    let ordered: Vec<Method> = Method::ALL.iter().copied().filter(|m| by_method.contains_key(m)).collect();
    let reports: Vec<MethodReport> = ordered.iter().map(|m| method_report(*m, &by_method[m])).collect();
    create_dir(&s.out)?;
    write_reports(&s.out, &reports)?;
    let first = first.expect("at least one directory");
    let names: Vec<String> = first.theta.iter().map(|t| t.name.clone()).collect();
    let cmp = match &first.true_theta {
        Some(truth) => comparison(&by_method, truth, &names, first.p1)?,
        None if by_method.len() > 1 => {
            return Err(CliError::Config("comparisons need the true parameters recorded by generate".into()))
        }
        None => None,
    };
    if let Some(c) = &cmp {
        write_comparison(&s.out, c)?;
    }
    Ok((reports, cmp))
}

fn write_replications(path: &Path, results: &[ReplicationResult], names: &[String]) -> Result<()> {
    let bytes = csv_bytes(|buf| {
        let mut w = csv::WriterBuilder::new().quote_style(csv::QuoteStyle::Never).from_writer(buf);
        let mut header = vec!["replication".to_string(), "method".into(), "pmr".into(), "rmse".into()];
        header.extend(names.iter().cloned());
        w.write_record(&header)?;
        for r in results {
            for (m, x) in &r.methods {
                let mut rec = vec![r.rep.to_string(), m.to_string(), x.pmr.map(format_f64).unwrap_or_default(), format_f64(x.rmse)];
                rec.extend(x.theta.iter().map(|v| format_f64(*v)));
                w.write_record(&rec)?;
            }
        }
        w.flush()?;
        Ok(())
    })?;
    write_bytes(path, &bytes)
}

/// Runs the whole simulation in memory: generate, fit every method and
/// compare.
pub fn report(s: &Settings) -> Result<(Vec<MethodReport>, Option<Comparison>)> {
    let scenario = s.scenario()?.clone();
    let gen = GenerationModel::default();
    let model = blase_core::sim::generate::school_model(&blase_core::sim::generate::school_schema())?;
    let names = Theta::names(&model);
    let exp = Experiment {
        scenario,
        generator: gen.clone(),
        chain: s.chain.clone(),
        dp: s.dp.clone(),
        methods: s.methods.clone(),
        master_seed: s.chain.seed,
        mean_prediction: s.mean_prediction,
    };
    let results = exp.run()?;
    create_dir(&s.out)?;
    write_replications(&s.out.join("replications.csv"), &results, &names)?;
    let mut by_method = BTreeMap::new();
    for &m in &s.methods {
        by_method.insert(m, Experiment::column(&results, m));
    }
    let reports: Vec<MethodReport> =
        Method::ALL.iter().filter(|m| by_method.contains_key(m)).map(|m| method_report(*m, &by_method[m])).collect();
    write_reports(&s.out, &reports)?;
    let cmp = comparison(&by_method, &gen.true_theta().to_vec(), &names, model.p1())?;
    if let Some(c) = &cmp {
        write_comparison(&s.out, c)?;
    }
    Ok((reports, cmp))
}
