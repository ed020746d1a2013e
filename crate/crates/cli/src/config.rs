//! The configuration file and its resolution into validated settings.
//!
//! The file is TOML with five optional tables: `scenario`, `chain`, `prior`,
//! `model` and `io`. Unknown keys anywhere are errors. Command-line flags
//! override the file.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use blase_core::analysis::{AnalysisModel, TermSpec};
use blase_core::error_model::{GammaParams, GammaPreset};
use blase_core::latent_class::DpHyper;
use blase_core::linkage::LinkConfig;
use blase_core::pool_move::{MoveConfig, SweepMode};
use blase_core::sim::experiment::Method;
use blase_core::sim::generate::{school_schema, y1_terms, y2_terms, FaultMechanism, ScenarioConfig};
use blase_core::{ChainConfig, FieldSpec, InCommonSchema, ModelKind, Scenario};

use crate::error::{CliError, Result};

#[derive(Clone, Debug, Default, PartialEq, Deserialize, Serialize)]
#[serde(deny_unknown_fields, default)]
pub struct ConfigFile {
    pub scenario: ScenarioSection,
    pub chain: ChainSection,
    pub prior: PriorSection,
    pub model: ModelSection,
    pub io: IoSection,
}

#[derive(Clone, Debug, Default, PartialEq, Deserialize, Serialize)]
#[serde(deny_unknown_fields, default)]
pub struct ScenarioSection {
    pub preset: Option<Scenario>,
    pub pairs: Option<usize>,
    pub fault_level: Option<f64>,
    pub seed_level: Option<f64>,
    pub mechanism: Option<MechanismKind>,
    pub confusion_map: Option<Vec<Vec<f64>>>,
    pub pool_cap: Option<usize>,
    pub test_size: Option<usize>,
    pub replications: Option<usize>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Deserialize, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum MechanismKind {
    Uniform,
    ConfusionMap,
}

#[derive(Clone, Debug, Default, PartialEq, Deserialize, Serialize)]
#[serde(deny_unknown_fields, default)]
pub struct ChainSection {
    pub iterations: Option<usize>,
    pub burnin: Option<usize>,
    pub thin: Option<usize>,
    pub seed: Option<u64>,
    pub exact_below: Option<usize>,
    pub switch_reps: Option<usize>,
    pub sweep: Option<SweepMode>,
    pub restrict_to_file1_keys: Option<bool>,
}

#[derive(Clone, Debug, PartialEq, Deserialize, Serialize)]
#[serde(untagged)]
pub enum OneOrMany {
    One(f64),
    Many(Vec<f64>),
}

#[derive(Clone, Debug, Default, PartialEq, Deserialize, Serialize)]
#[serde(deny_unknown_fields, default)]
pub struct PriorSection {
    /// `D`, `CA`, `CP` or `custom`.
    pub gamma: Option<String>,
    pub gamma_a: Option<OneOrMany>,
    pub gamma_b: Option<OneOrMany>,
    pub classes: Option<usize>,
    pub a_alpha: Option<f64>,
    pub b_alpha: Option<f64>,
    pub dirichlet: Option<f64>,
}

#[derive(Clone, Debug, Default, PartialEq, Deserialize, Serialize)]
#[serde(deny_unknown_fields, default)]
pub struct ModelSection {
    pub kind: Option<ModelKind>,
    pub methods: Option<Vec<Method>>,
    pub fields: Option<Vec<FieldSpec>>,
    pub y1_terms: Option<Vec<String>>,
    pub y2_terms: Option<Vec<String>>,
    pub use_true_codes: Option<bool>,
    pub mean_prediction: Option<bool>,
}

#[derive(Clone, Debug, Default, PartialEq, Deserialize, Serialize)]
#[serde(deny_unknown_fields, default)]
pub struct IoSection {
    pub input: Option<PathBuf>,
    pub out: Option<PathBuf>,
}

impl ConfigFile {
    pub fn parse(text: &str) -> Result<ConfigFile> {
        toml::from_str(text).map_err(|e| CliError::Config(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<ConfigFile> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::input(path, e))?;
        Self::parse(&text)
    }
}

/// Command-line values that take precedence over the file.
#[derive(Clone, Debug, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub model: Option<ModelKind>,
    pub out: Option<PathBuf>,
    pub reps: Option<usize>,
    pub preset: Option<Scenario>,
    pub input: Option<PathBuf>,
}

/// The error-rate prior as configured.
#[derive(Clone, Debug, PartialEq)]
pub enum GammaChoice {
    Preset(GammaPreset),
    Custom { a: Vec<f64>, b: Vec<f64> },
}

/// Validated settings shared by every command.
#[derive(Clone, Debug)]
pub struct Settings {
    /// Present when a preset or explicit levels were given.
    pub scenario: Option<ScenarioConfig>,
    pub chain: ChainConfig,
    pub dp: DpHyper,
    pub gamma: GammaChoice,
    pub schema: InCommonSchema,
    pub y1_terms: Vec<TermSpec>,
    pub y2_terms: Vec<TermSpec>,
    pub kind: ModelKind,
    pub methods: Vec<Method>,
    pub use_true_codes: bool,
    pub mean_prediction: bool,
    pub input: Option<PathBuf>,
    pub out: PathBuf,
}

fn terms(list: &Option<Vec<String>>, default: Vec<TermSpec>) -> Vec<TermSpec> {
    list.as_ref().map(|v| v.iter().map(|s| TermSpec(s.trim().to_string())).collect()).unwrap_or(default)
}

fn expand(v: &OneOrMany, n: usize, name: &str) -> Result<Vec<f64>> {
    match v {
        OneOrMany::One(x) => Ok(vec![*x; n]),
        OneOrMany::Many(xs) if xs.len() == n => Ok(xs.clone()),
        OneOrMany::Many(xs) => Err(CliError::Config(format!(
            "prior.{name} lists {} values for {n} matching fields",
            xs.len()
        ))),
    }
}

impl Settings {
    pub fn resolve(file: &ConfigFile, o: &Overrides) -> Result<Settings> {
        let scenario = resolve_scenario(&file.scenario, o)?;

        let c = &file.chain;
        let d = ChainConfig::default();
        let chain = ChainConfig {
            iterations: c.iterations.unwrap_or(d.iterations),
            burnin: c.burnin.unwrap_or(d.burnin),
            thin: c.thin.unwrap_or(d.thin),
            seed: o.seed.or(c.seed).unwrap_or(d.seed),
            link: LinkConfig {
                exact_below: c.exact_below.unwrap_or(d.link.exact_below),
                switch_reps: c.switch_reps.unwrap_or(d.link.switch_reps),
            },
            moves: MoveConfig {
                restrict_to_file1_keys: c.restrict_to_file1_keys.unwrap_or(d.moves.restrict_to_file1_keys),
                sweep: c.sweep.unwrap_or(d.moves.sweep),
            },
            ..d
        };
        chain.validate()?;

        let p = &file.prior;
        let dd = DpHyper::default();
        let dp = DpHyper {
            classes: p.classes.unwrap_or(dd.classes),
            a_alpha: p.a_alpha.unwrap_or(dd.a_alpha),
            b_alpha: p.b_alpha.unwrap_or(dd.b_alpha),
            dirichlet: p.dirichlet.unwrap_or(dd.dirichlet),
        };
        dp.validate()?;

        let m = &file.model;
        let schema = match &m.fields {
            Some(f) => InCommonSchema::new(f.clone())?,
            None => school_schema(),
        };
        let y1_terms = terms(&m.y1_terms, y1_terms());
        let y2_terms = terms(&m.y2_terms, y2_terms());
        AnalysisModel::new(&schema, &y1_terms, &y2_terms)?;

        let n_mv = schema.matching_fields().len();
        let gamma = match p.gamma.as_deref().unwrap_or("D") {
            g if g.eq_ignore_ascii_case("custom") => {
                let (Some(a), Some(b)) = (&p.gamma_a, &p.gamma_b) else {
                    return Err(CliError::Config("prior.gamma = \"custom\" needs prior.gamma_a and prior.gamma_b".into()));
                };
                let (a, b) = (expand(a, n_mv, "gamma_a")?, expand(b, n_mv, "gamma_b")?);
                GammaParams::with_priors(schema.matching_fields(), a.clone(), b.clone())?;
                GammaChoice::Custom { a, b }
            }
            g => {
                if p.gamma_a.is_some() || p.gamma_b.is_some() {
                    return Err(CliError::Config("prior.gamma_a and prior.gamma_b apply only to prior.gamma = \"custom\"".into()));
                }
                GammaChoice::Preset(g.parse()?)
            }
        };
        let scenario = scenario
            .map(|mut s| -> Result<ScenarioConfig> {
                match &gamma {
                    GammaChoice::Preset(g) => s.gamma_prior = *g,
                    GammaChoice::Custom { a, b } => {
                        let same = |v: &[f64]| v.windows(2).all(|w| w[0] == w[1]);
                        if !same(a) || !same(b) {
                            return Err(CliError::Config("simulated files need one Beta prior shared by all matching fields".into()));
                        }
                        s.gamma_ab = a.first().zip(b.first()).map(|(x, y)| (*x, *y));
                    }
                }
                s.validate()?;
                Ok(s)
            })
            .transpose()?;

        let methods = m.methods.clone().unwrap_or_else(|| Method::ALL.to_vec());
        if methods.is_empty() {
            return Err(CliError::Config("model.methods must not be empty".into()));
        }
        for (k, a) in methods.iter().enumerate() {
            if methods[..k].contains(a) {
                return Err(CliError::Config(format!("model.methods lists {a} twice")));
            }
        }

        let kind = o.model.or(m.kind).unwrap_or(ModelKind::Blase);
        let use_true_codes = m.use_true_codes.unwrap_or(false);
        if use_true_codes && kind == ModelKind::Blase {
            return Err(CliError::Config("model.use_true_codes applies to the gazm model only".into()));
        }

        Ok(Settings {
            scenario,
            chain,
            dp,
            gamma,
            schema,
            y1_terms,
            y2_terms,
            kind,
            methods,
            use_true_codes,
            mean_prediction: m.mean_prediction.unwrap_or(false),
            input: o.input.clone().or_else(|| file.io.input.clone()),
            out: o.out.clone().or_else(|| file.io.out.clone()).unwrap_or_else(|| PathBuf::from("out")),
        })
    }

    pub fn scenario(&self) -> Result<&ScenarioConfig> {
        self.scenario.as_ref().ok_or_else(|| {
            CliError::Config("no scenario: set scenario.preset (or --preset), or scenario.fault_level and scenario.seed_level".into())
        })
    }

    pub fn analysis_model(&self) -> Result<AnalysisModel> {
        Ok(AnalysisModel::new(&self.schema, &self.y1_terms, &self.y2_terms)?)
    }

    /// Error-rate priors for the configured schema. The named priors other
    /// than `D` depend on the scenario.
    pub fn gamma_params(&self, preset: Option<Scenario>) -> Result<GammaParams> {
        let fields = self.schema.matching_fields();
        Ok(match &self.gamma {
            GammaChoice::Custom { a, b } => GammaParams::with_priors(fields, a.clone(), b.clone())?,
            GammaChoice::Preset(g) => {
                let (a, b) = match (g, preset.or(self.scenario.as_ref().and_then(|s| s.preset))) {
                    (GammaPreset::Diffuse, s) => g.params(s.unwrap_or(Scenario::HSHF)),
                    (_, Some(s)) => g.params(s),
                    (_, None) => {
                        return Err(CliError::Config(format!("the {g} prior needs a named scenario")));
                    }
                };
                GammaParams::new(&self.schema, a, b)?
            }
        })
    }
}

fn resolve_scenario(s: &ScenarioSection, o: &Overrides) -> Result<Option<ScenarioConfig>> {
    let preset = o.preset.or(s.preset);
    let mut cfg = match (preset, s.fault_level, s.seed_level) {
        (Some(p), _, _) => ScenarioConfig::from_preset(p),
        (None, Some(f), Some(l)) => ScenarioConfig { preset: None, fault_level: f, seed_level: l, ..ScenarioConfig::from_preset(Scenario::HSHF) },
        (None, None, None) if s == &ScenarioSection::default() && o.reps.is_none() => return Ok(None),
        _ => {
            return Err(CliError::Config(
                "a scenario without a preset needs both scenario.fault_level and scenario.seed_level".into(),
            ))
        }
    };
    if let Some(v) = s.fault_level {
        cfg.fault_level = v;
    }
    if let Some(v) = s.seed_level {
        cfg.seed_level = v;
    }
    if let Some(v) = s.pairs {
        cfg.pairs = v;
    }
    if let Some(v) = s.pool_cap {
        cfg.pool_cap = v;
    }
    if let Some(v) = s.test_size {
        cfg.test_size = v;
    }
    if let Some(v) = o.reps.or(s.replications) {
        cfg.replications = v;
    }
    cfg.mechanism = match (s.mechanism, &s.confusion_map) {
        (None | Some(MechanismKind::Uniform), None) => FaultMechanism::Uniform,
        (None | Some(MechanismKind::ConfusionMap), Some(m)) => FaultMechanism::ConfusionMap(m.clone()),
        (Some(MechanismKind::ConfusionMap), None) => {
            return Err(CliError::Config("scenario.mechanism = \"confusion_map\" needs scenario.confusion_map".into()))
        }
        (Some(MechanismKind::Uniform), Some(_)) => {
            return Err(CliError::Config("scenario.confusion_map is only read with mechanism = \"confusion_map\"".into()))
        }
    };
    Ok(Some(cfg))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn settings(text: &str) -> Result<Settings> {
        Settings::resolve(&ConfigFile::parse(text)?, &Overrides::default())
    }

    #[test]
    fn empty_file_gives_defaults() {
        let s = settings("").unwrap();
        assert!(s.scenario.is_none());
        assert_eq!(s.chain, ChainConfig::default());
        assert_eq!(s.kind, ModelKind::Blase);
        assert_eq!(s.gamma, GammaChoice::Preset(GammaPreset::Diffuse));
        assert_eq!(s.methods, Method::ALL.to_vec());
    }

    #[test]
    fn unknown_keys_are_rejected() {
        assert!(matches!(settings("[chain]\niteration = 5\n"), Err(CliError::Config(_))));
        assert!(matches!(settings("[chains]\n"), Err(CliError::Config(_))));
    }

    #[test]
    fn fault_level_above_one_fails_validation() {
        let e = settings("[scenario]\npreset = \"HSHF\"\nfault_level = 1.5\n").unwrap_err();
        assert_eq!(e.exit_code(), 2);
    }

    #[test]
    fn flags_override_the_file() {
        let file = ConfigFile::parse("[chain]\nseed = 3\n[scenario]\npreset = \"LSLF\"\nreplications = 4\n").unwrap();
        let o = Overrides { seed: Some(9), reps: Some(2), preset: Some(Scenario::HSLF), model: Some(ModelKind::Gazm), ..Overrides::default() };
        let s = Settings::resolve(&file, &o).unwrap();
        assert_eq!(s.chain.seed, 9);
        let sc = s.scenario.unwrap();
        assert_eq!((sc.preset, sc.replications), (Some(Scenario::HSLF), 2));
        assert_eq!(s.kind, ModelKind::Gazm);
    }

    #[test]
    fn custom_gamma_prior_per_field() {
        let s = settings("[prior]\ngamma = \"custom\"\ngamma_a = [3.0]\ngamma_b = 7.0\n").unwrap();
        let g = s.gamma_params(None).unwrap();
        assert_eq!((g.a.clone(), g.b.clone()), (vec![3.0], vec![7.0]));
        assert!(settings("[prior]\ngamma = \"custom\"\ngamma_a = [3.0, 1.0]\ngamma_b = 7.0\n").is_err());
        assert!(settings("[prior]\ngamma = \"custom\"\n").is_err());
    }

    #[test]
    fn concentrated_prior_needs_a_scenario() {
        let s = settings("[prior]\ngamma = \"CA\"\n").unwrap();
        assert!(s.gamma_params(None).is_err());
        let g = s.gamma_params(Some(Scenario::HSHF)).unwrap();
        assert_eq!((g.a[0], g.b[0]), (90000.0, 10000.0));
    }

    #[test]
    fn confusion_map_is_read() {
        let s = settings(
            "[scenario]\npreset = \"HSHF\"\nmechanism = \"confusion_map\"\nconfusion_map = [[0.0, 1.0, 0.0], [0.0, 0.0, 1.0], [1.0, 0.0, 0.0]]\n",
        )
        .unwrap();
        assert!(matches!(s.scenario.unwrap().mechanism, FaultMechanism::ConfusionMap(_)));
        assert!(settings("[scenario]\npreset = \"HSHF\"\nmechanism = \"confusion_map\"\n").is_err());
    }

    #[test]
    fn custom_schema_and_terms() {
        let s = settings(
            "[model]\nfields = [{ name = \"a\", levels = 2, role = \"BV\" }, { name = \"b\", levels = 3, role = \"MV\" }]\ny1_terms = [\"1\", \"y2\", \"b=2\"]\ny2_terms = [\"1\"]\n",
        )
        .unwrap();
        assert_eq!(s.analysis_model().unwrap().p1(), 3);
        assert!(settings("[model]\ny1_terms = [\"1\", \"nosuch=2\"]\n").is_err());
    }

    #[test]
    fn burnin_must_fit() {
        assert!(settings("[chain]\niterations = 10\nburnin = 10\n").is_err());
    }
}
