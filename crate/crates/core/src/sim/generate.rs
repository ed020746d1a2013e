//! Synthetic school-testing files.
//!
//! Each pair shares six categorical fields (female, schtyp, ses, prog,
//! honors, cid). File 2 carries `math`, file 1 carries `read`. The
//! categorical conditionals are fixed tables chosen to resemble the public
//! `hsbdemo` data; the two normal regressions use the published coefficients.

use std::io::{Read, Write};
use std::path::Path;

use rand::seq::SliceRandom;
use rand::Rng as _;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::analysis::{AnalysisModel, TermSpec, Theta};
use crate::data::{format_f64, Code, FieldRole, FieldSpec, FileId, InCommonSchema, RecordTable};
use crate::error::{Error, Result};
use crate::error_model::GammaPreset;
use crate::rng::Rng;
use crate::scenario::Scenario;

pub const FEMALE: usize = 0;
pub const SCHTYP: usize = 1;
pub const SES: usize = 2;
pub const PROG: usize = 3;
pub const HONORS: usize = 4;
pub const CID: usize = 5;

/// The six shared fields; `prog` is the matching variable.
pub fn school_schema() -> InCommonSchema {
    InCommonSchema::new(vec![
        FieldSpec::new("female", 2, FieldRole::Blocking),
        FieldSpec::new("schtyp", 2, FieldRole::Blocking),
        FieldSpec::new("ses", 3, FieldRole::Blocking),
        FieldSpec::new("prog", 3, FieldRole::Matching),
        FieldSpec::new("honors", 2, FieldRole::Blocking),
        FieldSpec::new("cid", 30, FieldRole::Blocking),
    ])
    .expect("valid schema")
}

pub fn y1_terms() -> Vec<TermSpec> {
    ["1", "y2", "prog=2", "prog=3"].iter().map(|s| TermSpec(s.to_string())).collect()
}

pub fn y2_terms() -> Vec<TermSpec> {
    ["1", "female=2", "prog=2", "prog=3", "ses=2", "ses=3"].iter().map(|s| TermSpec(s.to_string())).collect()
}

/// `read ~ math + prog` and `math ~ female + prog + ses`.
pub fn school_model(schema: &InCommonSchema) -> Result<AnalysisModel> {
    AnalysisModel::new(schema, &y1_terms(), &y2_terms())
}

/// Fixed conditional tables and regression coefficients of the generator.
///
/// Codes are 1-based: female 1 = male, 2 = female; schtyp 1 = public,
/// 2 = private; ses 1..3 = low, middle, high; prog 1..3 = general, academic,
/// vocational; honors 1 = no, 2 = yes; cid 1..30.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GenerationModel {
    pub cid_levels: Code,
    pub p_female: f64,
    /// Logit of a private school is `a + b * cid`.
    pub schtyp_logit: (f64, f64),
    /// `prog | schtyp`, rows indexed by schtyp.
    pub prog: [[f64; 3]; 2],
    /// `ses | schtyp, prog`.
    pub ses: [[[f64; 3]; 3]; 2],
    /// `P(honors) | ses, prog`.
    pub honors: [[f64; 3]; 3],
    /// Math intercept, female, academic, vocational, middle, high, and sd.
    pub math: [f64; 7],
    /// Read intercept, math, academic, vocational, and sd.
    pub read: [f64; 5],
}

impl Default for GenerationModel {
    fn default() -> Self {
        GenerationModel {
            cid_levels: 30,
            p_female: 0.545,
            schtyp_logit: (-2.2, 0.04),
            prog: [[0.232, 0.488, 0.280], [0.19, 0.72, 0.09]],
            ses: [
                [[0.35, 0.45, 0.20], [0.17, 0.45, 0.38], [0.29, 0.56, 0.15]],
                [[0.15, 0.55, 0.30], [0.10, 0.45, 0.45], [0.20, 0.60, 0.20]],
            ],
            honors: [[0.15, 0.30, 0.05], [0.18, 0.35, 0.08], [0.25, 0.45, 0.10]],
            math: [47.9, -0.20, 5.88, -3.84, 2.93, 4.57, 6.37],
            read: [17.1, 0.65, 2.02, -1.20, 6.25],
        }
    }
}

impl GenerationModel {
    /// Regression parameters implied by the generator, in the order of
    /// [`y1_terms`] and [`y2_terms`].
    pub fn true_theta(&self) -> Theta {
        let m = &self.math;
        let r = &self.read;
        Theta {
            beta: vec![r[0], r[1], r[2], r[3]],
            sigma1_sq: r[4] * r[4],
            eta: vec![m[0], m[1], m[2], m[3], m[4], m[5]],
            sigma2_sq: m[6] * m[6],
        }
    }

    fn draw_cat(p: &[f64], rng: &mut Rng) -> Code {
        let mut u: f64 = rng.random::<f64>() * p.iter().sum::<f64>();
        for (k, pk) in p.iter().enumerate() {
            u -= pk;
            if u < 0.0 {
                return k as Code + 1;
            }
        }
        p.len() as Code
    }

    /// Draws the six codes of one individual.
    pub fn draw_codes(&self, rng: &mut Rng) -> [Code; 6] {
        let cid = rng.random_range(1..=self.cid_levels);
        let female = if rng.random::<f64>() < self.p_female { 2 } else { 1 };
        let (a, b) = self.schtyp_logit;
        let p_private = 1.0 / (1.0 + (-(a + b * cid as f64)).exp());
        let schtyp = if rng.random::<f64>() < p_private { 2 } else { 1 };
        let prog = Self::draw_cat(&self.prog[schtyp as usize - 1], rng);
        let ses = Self::draw_cat(&self.ses[schtyp as usize - 1][prog as usize - 1], rng);
        let honors = if rng.random::<f64>() < self.honors[ses as usize - 1][prog as usize - 1] { 2 } else { 1 };
        let mut codes = [0; 6];
        codes[FEMALE] = female;
        codes[SCHTYP] = schtyp;
        codes[SES] = ses;
        codes[PROG] = prog;
        codes[HONORS] = honors;
        codes[CID] = cid;
        codes
    }

    /// Draws `(read, math)` given the codes.
    pub fn draw_outcomes(&self, codes: &[Code], rng: &mut Rng) -> (f64, f64) {
        let ind = |j: usize, v: Code| if codes[j] == v { 1.0 } else { 0.0 };
        let m = &self.math;
        let mean_math = m[0] + m[1] * ind(FEMALE, 2) + m[2] * ind(PROG, 2) + m[3] * ind(PROG, 3) + m[4] * ind(SES, 2) + m[5] * ind(SES, 3);
        let math = mean_math + m[6] * standard_normal(rng);
        let r = &self.read;
        let mean_read = r[0] + r[1] * math + r[2] * ind(PROG, 2) + r[3] * ind(PROG, 3);
        let read = mean_read + r[4] * standard_normal(rng);
        (read, math)
    }
}

fn standard_normal(rng: &mut Rng) -> f64 {
    Normal::new(0.0, 1.0).expect("unit normal").sample(rng)
}

/// How faulty reported codes are chosen.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum FaultMechanism {
    /// Uniform over the wrong codes.
    #[default]
    Uniform,
    /// Row `t` of the square table gives the reported-code probabilities
    /// for true code `t + 1`. A draw equal to the true code leaves the pair
    /// unchanged.
    ConfusionMap(Vec<Vec<f64>>),
}

impl FaultMechanism {
    pub fn validate(&self, levels: Code) -> Result<()> {
        if let FaultMechanism::ConfusionMap(rows) = self {
            if rows.len() != levels as usize || rows.iter().any(|r| r.len() != levels as usize) {
                return Err(Error::Parameter(format!("the confusion map must be {levels} x {levels}")));
            }
            for r in rows {
                let s: f64 = r.iter().sum();
                if r.iter().any(|&p| !(p >= 0.0)) || (s - 1.0).abs() > 1e-9 {
                    return Err(Error::Parameter("confusion map rows must be probabilities summing to 1".into()));
                }
            }
        }
        Ok(())
    }
}

/// One simulation setting.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    /// Named preset the levels came from, if any.
    pub preset: Option<Scenario>,
    pub pairs: usize,
    /// Share of all pairs whose matching code is misreported.
    pub fault_level: f64,
    /// Share of all pairs seeded with a known partner.
    pub seed_level: f64,
    pub gamma_prior: GammaPreset,
    /// Explicit Beta prior for the error rate; overrides the preset.
    pub gamma_ab: Option<(f64, f64)>,
    pub mechanism: FaultMechanism,
    pub pool_cap: usize,
    pub test_size: usize,
    pub replications: usize,
}

impl ScenarioConfig {
    pub fn from_preset(s: Scenario) -> ScenarioConfig {
        ScenarioConfig {
            preset: Some(s),
            pairs: 5000,
            fault_level: s.fault_level(),
            seed_level: s.seed_level(),
            gamma_prior: GammaPreset::Diffuse,
            gamma_ab: None,
            mechanism: FaultMechanism::Uniform,
            pool_cap: 10,
            test_size: 500,
            replications: 100,
        }
    }

    pub fn non_seed_fault_level(&self) -> f64 {
        self.fault_level / (1.0 - self.seed_level)
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [("fault level", self.fault_level), ("seed level", self.seed_level)] {
            if !(0.0..=1.0).contains(&v) {
                return Err(Error::Parameter(format!("{name} {v} must lie in [0, 1]")));
            }
        }
        if self.fault_level > 0.0 && (self.seed_level >= 1.0 || self.non_seed_fault_level() > 1.0 + 1e-12) {
            return Err(Error::Parameter(format!(
                "fault level {} exceeds the share of pairs that are not seeded ({})",
                self.fault_level,
                1.0 - self.seed_level
            )));
        }
        if self.pairs == 0 {
            return Err(Error::Parameter("at least one pair is required".into()));
        }
        if self.pool_cap == 0 {
            return Err(Error::Parameter("the pool cap must be at least 1".into()));
        }
        self.gamma_params()?;
        self.mechanism.validate(3)
    }

    /// Beta prior of the error rate.
    pub fn gamma_params(&self) -> Result<(f64, f64)> {
        if let Some((a, b)) = self.gamma_ab {
            if !(a > 0.0 && b > 0.0) {
                return Err(Error::Parameter("Beta prior parameters must be positive".into()));
            }
            return Ok((a, b));
        }
        match (self.gamma_prior, self.preset) {
            (GammaPreset::Diffuse, s) => Ok(GammaPreset::Diffuse.params(s.unwrap_or(Scenario::HSHF))),
            (p, Some(s)) => Ok(p.params(s)),
            (p, None) => Err(Error::Parameter(format!(
                "the {p} prior needs a named scenario or explicit Beta parameters"
            ))),
        }
    }
}

/// Generated files with the truth.
#[derive(Clone, Debug, PartialEq)]
pub struct SimData {
    pub schema: InCommonSchema,
    pub f1: RecordTable,
    pub f2: RecordTable,
    /// File-1 row of the true partner of each file-2 row.
    pub truth: Vec<usize>,
    /// True codes of the file-2 rows, row-major.
    pub true_b2: Vec<Code>,
}

impl SimData {
    pub fn truth_links(&self) -> Vec<Option<usize>> {
        self.truth.iter().map(|&r| Some(r)).collect()
    }

    pub fn true_row(&self, i: usize) -> &[Code] {
        let j = self.schema.len();
        &self.true_b2[i * j..(i + 1) * j]
    }

    /// File 2 with every reported code replaced by the true code.
    pub fn perfectly_blocked(&self) -> RecordTable {
        let mut f2 = self.f2.clone();
        for i in 0..f2.len() {
            let row = self.true_row(i).to_vec();
            f2.row_mut(i).copy_from_slice(&row);
        }
        f2
    }

    /// Number of file-2 rows whose reported codes differ from the truth.
    pub fn faulty_rows(&self) -> usize {
        (0..self.f2.len()).filter(|&i| self.f2.row(i) != self.true_row(i)).count()
    }

    /// Largest number of unseeded pairs sharing one true key.
    pub fn max_true_pool(&self) -> usize {
        let mut counts = std::collections::HashMap::new();
        for i in 0..self.f2.len() {
            if !self.f2.is_t1(i) {
                *counts.entry(self.true_row(i).to_vec()).or_insert(0usize) += 1;
            }
        }
        counts.values().copied().max().unwrap_or(0)
    }

    pub fn write_truth<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::WriterBuilder::new().quote_style(csv::QuoteStyle::Never).from_writer(out);
        let mut header = vec!["f2_row".to_string(), "f1_row".to_string()];
        header.extend(self.schema.fields.iter().map(|f| format!("true_{}", f.name)));
        w.write_record(&header)?;
        for (i, &r) in self.truth.iter().enumerate() {
            let mut rec = vec![i.to_string(), r.to_string()];
            rec.extend(self.true_row(i).iter().map(|c| c.to_string()));
            w.write_record(&rec)?;
        }
        w.flush()?;
        Ok(())
    }

    /// Reads a truth table written by [`SimData::write_truth`].
    pub fn read_truth<R: Read>(schema: &InCommonSchema, input: R) -> Result<(Vec<usize>, Vec<Code>)> {
        let mut rd = csv::Reader::from_reader(input);
        let mut truth = Vec::new();
        let mut codes = Vec::new();
        for (n, rec) in rd.records().enumerate() {
            let rec = rec?;
            if rec.len() != 2 + schema.len() {
                return Err(Error::Validation(format!("truth row {n}: expected {} columns", 2 + schema.len())));
            }
            let parse = |k: usize| -> Result<usize> {
                rec[k].trim().parse().map_err(|_| Error::Validation(format!("truth row {n}: bad integer '{}'", &rec[k])))
            };
            if parse(0)? != n {
                return Err(Error::Validation(format!("truth row {n}: rows must be listed in order")));
            }
            truth.push(parse(1)?);
            for k in 0..schema.len() {
                codes.push(parse(2 + k)? as Code);
            }
        }
        Ok((truth, codes))
    }

    pub fn read_truth_path(schema: &InCommonSchema, path: &Path) -> Result<(Vec<usize>, Vec<Code>)> {
        Self::read_truth(schema, std::fs::File::open(path)?)
    }
}

/// Generates `n` perfectly reported pairs. File 2 rows are shuffled.
pub fn generate_dataset(n: usize, gen: &GenerationModel, rng: &mut Rng) -> SimData {
    let schema = school_schema();
    let j = schema.len();
    let mut codes = Vec::with_capacity(n);
    let mut read = Vec::with_capacity(n);
    let mut math = Vec::with_capacity(n);
    for _ in 0..n {
        let c = gen.draw_codes(rng);
        let (r, m) = gen.draw_outcomes(&c, rng);
        codes.push(c);
        read.push(r);
        math.push(m);
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(rng);
    let seeds: Vec<bool> = (0..j).map(|k| !schema.is_matching(k)).collect();
    let mut f1 = RecordTable::new(FileId::One, j);
    for r in 0..n {
        f1.push(&codes[r], read[r], &seeds, None);
    }
    let mut f2 = RecordTable::new(FileId::Two, j);
    let mut true_b2 = Vec::with_capacity(n * j);
    for &r in &order {
        f2.push(&codes[r], math[r], &seeds, None);
        true_b2.extend_from_slice(&codes[r]);
    }
    SimData { schema, f1, f2, truth: order, true_b2 }
}

fn make_t1(data: &mut SimData, i: usize) {
    let r = data.truth[i];
    data.f1.t1_partner[r] = Some(i);
    data.f2.t1_partner[i] = Some(r);
    for k in 0..data.schema.len() {
        data.f1.set_seed(r, k, true);
        data.f2.set_seed(i, k, true);
    }
}

/// Seeds pairs so that no true key holds more than `cap` unseeded pairs, then
/// seeds uniformly chosen pairs until `round(level * n)` pairs are seeded.
pub fn assign_seeds_and_cap(data: &mut SimData, level: f64, cap: usize, rng: &mut Rng) -> Result<()> {
    let n = data.f2.len();
    let mut by_key: std::collections::BTreeMap<Vec<Code>, Vec<usize>> = std::collections::BTreeMap::new();
    for i in 0..n {
        if !data.f2.is_t1(i) {
            by_key.entry(data.true_row(i).to_vec()).or_default().push(i);
        }
    }
    let mut forced = Vec::new();
    for members in by_key.values() {
        if members.len() > cap {
            forced.extend(rand::seq::index::sample(rng, members.len(), members.len() - cap).into_iter().map(|k| members[k]));
        }
    }
    let already = data.f2.t1_count();
    let target = (level * n as f64).round() as usize;
    if target < already + forced.len() {
        return Err(Error::Parameter(format!(
            "seed level {level} gives {target} seeded pairs but the pool cap needs t* = {}",
            already + forced.len()
        )));
    }
    for &i in &forced {
        make_t1(data, i);
    }
    let free: Vec<usize> = (0..n).filter(|&i| !data.f2.is_t1(i)).collect();
    let extra = target - already - forced.len();
    for k in rand::seq::index::sample(rng, free.len(), extra) {
        make_t1(data, free[k]);
    }
    Ok(())
}

/// Misreports field `j` of file 2 on `round(rate * n)` unseeded pairs.
pub fn inject_faults(data: &mut SimData, j: usize, rate: f64, mechanism: &FaultMechanism, rng: &mut Rng) -> Result<()> {
    if !data.schema.is_matching(j) {
        return Err(Error::Parameter(format!("field '{}' is not a matching field", data.schema.fields[j].name)));
    }
    let levels = data.schema.levels(j);
    mechanism.validate(levels)?;
    let n = data.f2.len();
    let eligible: Vec<usize> = (0..n).filter(|&i| !data.f2.is_t1(i) && !data.f2.is_seed(i, j)).collect();
    let count = (rate * n as f64).round() as usize;
    if count > eligible.len() {
        return Err(Error::Parameter(format!(
            "fault rate {rate} needs {count} faulty pairs but only {} are unseeded",
            eligible.len()
        )));
    }
    for k in rand::seq::index::sample(rng, eligible.len(), count) {
        let i = eligible[k];
        let truth = data.true_row(i)[j];
        let reported = match mechanism {
            FaultMechanism::Uniform => {
                let v = rng.random_range(1..levels);
                if v >= truth {
                    v + 1
                } else {
                    v
                }
            }
            FaultMechanism::ConfusionMap(rows) => GenerationModel::draw_cat(&rows[truth as usize - 1], rng),
        };
        data.f2.set_code(i, j, reported);
    }
    Ok(())
}

/// Generates, seeds and corrupts one replication.
pub fn simulate(cfg: &ScenarioConfig, gen: &GenerationModel, rng: &mut Rng) -> Result<SimData> {
    cfg.validate()?;
    let mut data = generate_dataset(cfg.pairs, gen, rng);
    assign_seeds_and_cap(&mut data, cfg.seed_level, cfg.pool_cap, rng)?;
    inject_faults(&mut data, PROG, cfg.fault_level, &cfg.mechanism, rng)?;
    Ok(data)
}

/// Held-out records with both outcomes.
#[derive(Clone, Debug, PartialEq)]
pub struct TestSet {
    pub n_fields: usize,
    pub codes: Vec<Code>,
    pub y1: Vec<f64>,
    pub y2: Vec<f64>,
}

impl TestSet {
    pub fn generate(m: usize, gen: &GenerationModel, rng: &mut Rng) -> TestSet {
        let mut t = TestSet { n_fields: 6, codes: Vec::new(), y1: Vec::new(), y2: Vec::new() };
        for _ in 0..m {
            let c = gen.draw_codes(rng);
            let (r, mth) = gen.draw_outcomes(&c, rng);
            t.codes.extend_from_slice(&c);
            t.y1.push(r);
            t.y2.push(mth);
        }
        t
    }

    pub fn len(&self) -> usize {
        self.y1.len()
    }

    pub fn is_empty(&self) -> bool {
        self.y1.is_empty()
    }

    pub fn row(&self, i: usize) -> &[Code] {
        &self.codes[i * self.n_fields..(i + 1) * self.n_fields]
    }

    pub fn write_csv<W: Write>(&self, schema: &InCommonSchema, out: W) -> Result<()> {
        let mut w = csv::WriterBuilder::new().quote_style(csv::QuoteStyle::Never).from_writer(out);
        let mut header: Vec<String> = schema.fields.iter().map(|f| f.name.clone()).collect();
        header.push("y1".into());
        header.push("y2".into());
        w.write_record(&header)?;
        for i in 0..self.len() {
            let mut rec: Vec<String> = self.row(i).iter().map(|c| c.to_string()).collect();
            rec.push(format_f64(self.y1[i]));
            rec.push(format_f64(self.y2[i]));
            w.write_record(&rec)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn read_csv<R: Read>(schema: &InCommonSchema, input: R) -> Result<TestSet> {
        let j = schema.len();
        let mut t = TestSet { n_fields: j, codes: Vec::new(), y1: Vec::new(), y2: Vec::new() };
        let mut rd = csv::Reader::from_reader(input);
        for (n, rec) in rd.records().enumerate() {
            let rec = rec?;
            if rec.len() != j + 2 {
                return Err(Error::Validation(format!("test row {n}: expected {} columns", j + 2)));
            }
            for k in 0..j {
                let c: Code = rec[k]
                    .trim()
                    .parse()
                    .map_err(|_| Error::Validation(format!("test row {n}: bad code '{}'", &rec[k])))?;
                t.codes.push(c);
            }
            let num = |k: usize| -> Result<f64> {
                rec[k].trim().parse().map_err(|_| Error::Validation(format!("test row {n}: bad number '{}'", &rec[k])))
            };
            t.y1.push(num(j)?);
            t.y2.push(num(j + 1)?);
        }
        Ok(t)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::seeded;

    #[test]
    fn preset_levels() {
        let c = ScenarioConfig::from_preset(Scenario::LSLF);
        assert!((c.non_seed_fault_level() - 0.0625).abs() < 1e-12);
        assert_eq!(c.gamma_params().unwrap(), (2.0, 10.0));
        let bad = ScenarioConfig { fault_level: 1.5, ..c.clone() };
        assert!(bad.validate().is_err());
        let bad = ScenarioConfig { fault_level: 0.5, seed_level: 0.6, ..c };
        assert!(bad.validate().is_err());
    }

    #[test]
    fn truth_is_a_bijection() {
        let d = generate_dataset(300, &GenerationModel::default(), &mut seeded(1));
        let mut seen = vec![false; 300];
        for (i, &r) in d.truth.iter().enumerate() {
            assert!(!seen[r]);
            seen[r] = true;
            assert_eq!(d.f1.row(r), d.f2.row(i));
        }
    }

    #[test]
    fn full_seed_level_seeds_every_pair() {
        let mut d = generate_dataset(200, &GenerationModel::default(), &mut seeded(2));
        assign_seeds_and_cap(&mut d, 1.0, 10, &mut seeded(3)).unwrap();
        assert_eq!(d.f2.t1_count(), 200);
        assert_eq!(d.f1.t1_count(), 200);
    }

    #[test]
    fn cap_forces_seeds_in_a_crowded_pool() {
        let mut d = generate_dataset(14, &GenerationModel::default(), &mut seeded(4));
        let key = d.true_row(0).to_vec();
        for i in 0..14 {
            d.f2.row_mut(i).copy_from_slice(&key);
            d.true_b2[i * 6..(i + 1) * 6].copy_from_slice(&key);
            let r = d.truth[i];
            d.f1.row_mut(r).copy_from_slice(&key);
        }
        assert!(assign_seeds_and_cap(&mut d, 0.1, 10, &mut seeded(5)).is_err());
        assign_seeds_and_cap(&mut d, 0.3, 10, &mut seeded(5)).unwrap();
        assert!(d.f2.t1_count() >= 4);
        assert!(d.max_true_pool() <= 10);
    }

    #[test]
    fn zero_rate_changes_nothing() {
        let mut d = generate_dataset(200, &GenerationModel::default(), &mut seeded(6));
        inject_faults(&mut d, PROG, 0.0, &FaultMechanism::Uniform, &mut seeded(7)).unwrap();
        assert_eq!(d.faulty_rows(), 0);
    }

    #[test]
    fn high_fault_scenario_corrupts_every_unseeded_pair() {
        let cfg = ScenarioConfig { pairs: 500, ..ScenarioConfig::from_preset(Scenario::HSHF) };
        let d = simulate(&cfg, &GenerationModel::default(), &mut seeded(8)).unwrap();
        assert_eq!(d.f2.t1_count(), 300);
        assert_eq!(d.faulty_rows(), 200);
        for i in 0..500 {
            let faulty = d.f2.row(i) != d.true_row(i);
            assert_eq!(faulty, !d.f2.is_t1(i));
            for k in 0..6 {
                if k != PROG {
                    assert_eq!(d.f2.code(i, k), d.true_row(i)[k]);
                }
            }
        }
    }

    #[test]
    fn uniform_faults_split_evenly() {
        let cfg = ScenarioConfig { pairs: 4000, seed_level: 0.0, fault_level: 1.0, pool_cap: 4000, ..ScenarioConfig::from_preset(Scenario::HSHF) };
        let d = simulate(&cfg, &GenerationModel::default(), &mut seeded(9)).unwrap();
        let mut to_low = 0usize;
        let mut from_one = 0usize;
        for i in 0..4000 {
            if d.true_row(i)[PROG] == 1 {
                from_one += 1;
                if d.f2.code(i, PROG) == 2 {
                    to_low += 1;
                }
            }
        }
        let share = to_low as f64 / from_one as f64;
        let se = (0.25 / from_one as f64).sqrt();
        assert!((share - 0.5).abs() < 4.0 * se, "share {share}");
    }

    #[test]
    fn confusion_map_is_followed() {
        let map = vec![vec![0.0, 1.0, 0.0], vec![0.0, 0.0, 1.0], vec![1.0, 0.0, 0.0]];
        let mut d = generate_dataset(300, &GenerationModel::default(), &mut seeded(10));
        inject_faults(&mut d, PROG, 1.0, &FaultMechanism::ConfusionMap(map), &mut seeded(11)).unwrap();
        for i in 0..300 {
            let t = d.true_row(i)[PROG];
            assert_eq!(d.f2.code(i, PROG), t % 3 + 1);
        }
    }

    #[test]
    fn truth_and_test_csv_round_trip() {
        let gen = GenerationModel::default();
        let d = generate_dataset(20, &gen, &mut seeded(12));
        let mut buf = Vec::new();
        d.write_truth(&mut buf).unwrap();
        let (truth, codes) = SimData::read_truth(&d.schema, &buf[..]).unwrap();
        assert_eq!(truth, d.truth);
        assert_eq!(codes, d.true_b2);
        let t = TestSet::generate(15, &gen, &mut seeded(13));
        let mut buf = Vec::new();
        t.write_csv(&d.schema, &mut buf).unwrap();
        assert_eq!(TestSet::read_csv(&d.schema, &buf[..]).unwrap(), t);
    }
}
