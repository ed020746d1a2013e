//! Linear analysis model for the linked outcomes.
//!
//! `y1 = x1 * beta + e1` where `x1` may contain the file-2 outcome `y2`, and
//! `y2 = x2 * eta + e2`. Both design rows are built from the categorical key
//! of a linked individual. Under the flat prior `p ∝ 1/(s1^2 s2^2)` the
//! parameters are drawn by composition: the variance from its marginal
//! inverse gamma, then the coefficients given the variance.

use std::fmt;
use std::str::FromStr;

use nalgebra::{DMatrix, DVector};
use rand::Rng as _;
use rand_distr::{Distribution, Gamma, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::data::{Code, InCommonSchema};
use crate::error::{Error, Result};
use crate::rng::Rng;

const LN_2PI: f64 = 1.837_877_066_409_345_3;
const RANK_TOLERANCE: f64 = 1e-10;

pub fn ln_normal(x: f64, mean: f64, var: f64) -> f64 {
    let d = x - mean;
    -0.5 * (LN_2PI + var.ln()) - 0.5 * d * d / var
}

/// One column of a design matrix.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Term {
    Intercept,
    /// The linked file-2 outcome.
    Outcome2,
    /// `1` when field `field` equals `level`.
    Indicator { field: usize, level: Code },
}

/// Textual form of a term: `1`, `y2` or `<field>=<level>`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct TermSpec(pub String);

impl fmt::Display for TermSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl FromStr for TermSpec {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        Ok(TermSpec(s.trim().to_string()))
    }
}

impl TermSpec {
    pub fn resolve(&self, schema: &InCommonSchema) -> Result<Term> {
        let s = self.0.trim();
        match s {
            "1" => Ok(Term::Intercept),
            "y2" => Ok(Term::Outcome2),
            _ => {
                let (name, level) = s
                    .split_once('=')
                    .ok_or_else(|| Error::Parameter(format!("cannot parse design term '{s}'")))?;
                let field = schema
                    .index_of(name.trim())
                    .ok_or_else(|| Error::Parameter(format!("design term '{s}' names an unknown field")))?;
                let level: Code = level
                    .trim()
                    .parse()
                    .map_err(|_| Error::Parameter(format!("design term '{s}' has a bad level")))?;
                if level < 1 || level > schema.levels(field) {
                    return Err(Error::Parameter(format!("design term '{s}' level out of range")));
                }
                Ok(Term::Indicator { field, level })
            }
        }
    }
}

fn term_value(term: &Term, key: &[Code], y2: f64) -> f64 {
    match *term {
        Term::Intercept => 1.0,
        Term::Outcome2 => y2,
        Term::Indicator { field, level } => {
            if key[field] == level {
                1.0
            } else {
                0.0
            }
        }
    }
}

/// Design of both regressions.
#[derive(Clone, Debug)]
pub struct AnalysisModel {
    pub y1_terms: Vec<Term>,
    pub y2_terms: Vec<Term>,
    pub y1_names: Vec<String>,
    pub y2_names: Vec<String>,
    y2_column: Option<usize>,
}

impl AnalysisModel {
    pub fn new(schema: &InCommonSchema, y1: &[TermSpec], y2: &[TermSpec]) -> Result<Self> {
        let y1_terms: Vec<Term> = y1.iter().map(|t| t.resolve(schema)).collect::<Result<_>>()?;
        let y2_terms: Vec<Term> = y2.iter().map(|t| t.resolve(schema)).collect::<Result<_>>()?;
        if y1_terms.is_empty() || y2_terms.is_empty() {
            return Err(Error::Parameter("both regressions need at least one term".into()));
        }
        if y2_terms.contains(&Term::Outcome2) {
            return Err(Error::Parameter("the file-2 regression cannot use its own outcome".into()));
        }
        let count = y1_terms.iter().filter(|t| **t == Term::Outcome2).count();
        if count > 1 {
            return Err(Error::Parameter("y2 appears more than once in the file-1 regression".into()));
        }
        for terms in [&y1_terms, &y2_terms] {
            for (i, t) in terms.iter().enumerate() {
                if terms[..i].contains(t) {
                    return Err(Error::Parameter("duplicate design term".into()));
                }
            }
        }
        if count == 0 {
            log::warn!("file-1 regression does not use y2; outcomes carry no linkage information");
        }
        let y2_column = y1_terms.iter().position(|t| *t == Term::Outcome2);
        Ok(AnalysisModel {
            y1_terms,
            y2_terms,
            y1_names: y1.iter().map(|t| t.0.clone()).collect(),
            y2_names: y2.iter().map(|t| t.0.clone()).collect(),
            y2_column,
        })
    }

    pub fn p1(&self) -> usize {
        self.y1_terms.len()
    }

    pub fn p2(&self) -> usize {
        self.y2_terms.len()
    }

    pub fn x1_row(&self, key: &[Code], y2: f64, out: &mut Vec<f64>) {
        out.clear();
        out.extend(self.y1_terms.iter().map(|t| term_value(t, key, y2)));
    }

    pub fn x2_row(&self, key: &[Code], out: &mut Vec<f64>) {
        out.clear();
        out.extend(self.y2_terms.iter().map(|t| term_value(t, key, 0.0)));
    }

    /// Per-key constants for fast density evaluation.
    pub fn predictor(&self, theta: &Theta, key: &[Code]) -> KeyPredictor {
        let mean2 = self.y2_terms.iter().zip(&theta.eta).map(|(t, c)| term_value(t, key, 0.0) * c).sum();
        let mut base1 = 0.0;
        for (idx, (t, c)) in self.y1_terms.iter().zip(&theta.beta).enumerate() {
            if Some(idx) != self.y2_column {
                base1 += term_value(t, key, 0.0) * c;
            }
        }
        KeyPredictor {
            mean2,
            base1,
            beta_y2: self.y2_column.map(|i| theta.beta[i]).unwrap_or(0.0),
            var1: theta.sigma1_sq,
            var2: theta.sigma2_sq,
        }
    }

    /// Joint log density of one linked pair.
    pub fn loglik_pair(&self, theta: &Theta, key: &[Code], y1: f64, y2: f64) -> f64 {
        self.predictor(theta, key).ln_joint(y1, y2)
    }
}

/// Everything needed to evaluate densities for one categorical key.
#[derive(Clone, Copy, Debug)]
pub struct KeyPredictor {
    pub mean2: f64,
    pub base1: f64,
    pub beta_y2: f64,
    pub var1: f64,
    pub var2: f64,
}

impl KeyPredictor {
    pub fn ln_joint(&self, y1: f64, y2: f64) -> f64 {
        ln_normal(y2, self.mean2, self.var2) + ln_normal(y1, self.base1 + self.beta_y2 * y2, self.var1)
    }

    pub fn ln_marginal_y1(&self, y1: f64) -> f64 {
        let mean = self.base1 + self.beta_y2 * self.mean2;
        let var = self.var1 + self.beta_y2 * self.beta_y2 * self.var2;
        ln_normal(y1, mean, var)
    }

    pub fn ln_marginal_y2(&self, y2: f64) -> f64 {
        ln_normal(y2, self.mean2, self.var2)
    }

    /// Mean and variance of `y2` given `y1`.
    pub fn y2_given_y1(&self, y1: f64) -> (f64, f64) {
        let prec = 1.0 / self.var2 + self.beta_y2 * self.beta_y2 / self.var1;
        let var = 1.0 / prec;
        let mean = var * (self.mean2 / self.var2 + self.beta_y2 * (y1 - self.base1) / self.var1);
        (mean, var)
    }

    /// Mean and variance of `y1` given `y2`.
    pub fn y1_given_y2(&self, y2: f64) -> (f64, f64) {
        (self.base1 + self.beta_y2 * y2, self.var1)
    }

    pub fn ln_y2_given_y1(&self, y2: f64, y1: f64) -> f64 {
        let (m, v) = self.y2_given_y1(y1);
        ln_normal(y2, m, v)
    }

    pub fn ln_y1_given_y2(&self, y1: f64, y2: f64) -> f64 {
        let (m, v) = self.y1_given_y2(y2);
        ln_normal(y1, m, v)
    }

    pub fn impute_y2(&self, y1: f64, rng: &mut Rng) -> f64 {
        let (m, v) = self.y2_given_y1(y1);
        m + v.sqrt() * rng.sample::<f64, _>(StandardNormal)
    }

    pub fn impute_y1(&self, y2: f64, rng: &mut Rng) -> f64 {
        let (m, v) = self.y1_given_y2(y2);
        m + v.sqrt() * rng.sample::<f64, _>(StandardNormal)
    }
}

/// Parameters of both regressions.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Theta {
    pub beta: Vec<f64>,
    pub sigma1_sq: f64,
    pub eta: Vec<f64>,
    pub sigma2_sq: f64,
}

impl Theta {
    pub fn validate(&self, model: &AnalysisModel) -> Result<()> {
        if self.beta.len() != model.p1() || self.eta.len() != model.p2() {
            return Err(Error::Parameter("coefficient vectors do not match the design".into()));
        }
        if !(self.sigma1_sq > 0.0 && self.sigma2_sq > 0.0) || !self.sigma1_sq.is_finite() || !self.sigma2_sq.is_finite() {
            return Err(Error::Parameter("variances must be positive and finite".into()));
        }
        if self.beta.iter().chain(&self.eta).any(|x| !x.is_finite()) {
            return Err(Error::Parameter("coefficients must be finite".into()));
        }
        Ok(())
    }

    /// Flat view: beta, sigma1^2, eta, sigma2^2.
    pub fn to_vec(&self) -> Vec<f64> {
        let mut v = self.beta.clone();
        v.push(self.sigma1_sq);
        v.extend_from_slice(&self.eta);
        v.push(self.sigma2_sq);
        v
    }

    pub fn from_vec(v: &[f64], p1: usize, p2: usize) -> Theta {
        Theta {
            beta: v[..p1].to_vec(),
            sigma1_sq: v[p1],
            eta: v[p1 + 1..p1 + 1 + p2].to_vec(),
            sigma2_sq: v[p1 + 1 + p2],
        }
    }

    pub fn names(model: &AnalysisModel) -> Vec<String> {
        let mut n: Vec<String> = model.y1_names.iter().map(|s| format!("beta[{s}]")).collect();
        n.push("sigma1_sq".into());
        n.extend(model.y2_names.iter().map(|s| format!("eta[{s}]")));
        n.push("sigma2_sq".into());
        n
    }
}

/// Completed data of all linked individuals.
#[derive(Clone, Debug, Default)]
pub struct CompletedData {
    pub x1: Vec<f64>,
    pub y1: Vec<f64>,
    pub x2: Vec<f64>,
    pub y2: Vec<f64>,
}

impl CompletedData {
    pub fn push(&mut self, model: &AnalysisModel, key: &[Code], y1: f64, y2: f64) {
        let mut row = Vec::with_capacity(model.p1().max(model.p2()));
        model.x1_row(key, y2, &mut row);
        self.x1.extend_from_slice(&row);
        model.x2_row(key, &mut row);
        self.x2.extend_from_slice(&row);
        self.y1.push(y1);
        self.y2.push(y2);
    }

    pub fn len(&self) -> usize {
        self.y1.len()
    }

    pub fn is_empty(&self) -> bool {
        self.y1.is_empty()
    }
}

/// Least squares pieces of one regression.
#[derive(Clone, Debug)]
pub struct LeastSquares {
    pub coef: Vec<f64>,
    pub sse: f64,
    /// Cholesky factor of `X'X`.
    chol: nalgebra::Cholesky<f64, nalgebra::Dyn>,
}

impl LeastSquares {
    pub fn fit(x: &[f64], y: &[f64], names: &[String]) -> Result<Self> {
        let p = names.len();
        let n = y.len();
        debug_assert_eq!(x.len(), n * p);
        let mut xtx = DMatrix::<f64>::zeros(p, p);
        let mut xty = DVector::<f64>::zeros(p);
        for i in 0..n {
            let row = &x[i * p..(i + 1) * p];
            for a in 0..p {
                xty[a] += row[a] * y[i];
                for b in 0..=a {
                    xtx[(a, b)] += row[a] * row[b];
                }
            }
        }
        for a in 0..p {
            for b in 0..a {
                xtx[(b, a)] = xtx[(a, b)];
            }
        }
        check_rank(&xtx, names)?;
        let chol = xtx.clone().cholesky().ok_or_else(|| Error::Singular { columns: names.to_vec() })?;
        let coef = chol.solve(&xty);
        let mut sse = 0.0;
        for i in 0..n {
            let row = &x[i * p..(i + 1) * p];
            let fit: f64 = row.iter().zip(coef.iter()).map(|(a, b)| a * b).sum();
            sse += (y[i] - fit) * (y[i] - fit);
        }
        Ok(LeastSquares { coef: coef.iter().copied().collect(), sse, chol })
    }

    /// `(X'X)^-1`.
    pub fn inverse_gram(&self) -> DMatrix<f64> {
        self.chol.inverse()
    }

    /// Draws `(coef, variance)` from the flat-prior posterior.
    pub fn draw(&self, n: usize, rng: &mut Rng) -> Result<(Vec<f64>, f64)> {
        let p = self.coef.len();
        if n <= p {
            return Err(Error::TooFewRows { rows: n, columns: p });
        }
        let shape = (n - p) as f64 / 2.0;
        let rate = self.sse / 2.0;
        if !(rate > 0.0) || !rate.is_finite() {
            return Err(Error::Numerical(format!("residual sum of squares is {}", self.sse)));
        }
        let g = Gamma::new(shape, 1.0 / rate).map_err(|e| Error::Numerical(e.to_string()))?;
        let var = 1.0 / g.sample(rng);
        // L L' = X'X, so L'^-1 z has covariance (X'X)^-1.
        let z = DVector::<f64>::from_iterator(p, (0..p).map(|_| rng.sample::<f64, _>(StandardNormal)));
        let l = self.chol.l();
        let dev = l
            .transpose()
            .solve_upper_triangular(&z)
            .ok_or_else(|| Error::Numerical("triangular solve failed".into()))?;
        let sd = var.sqrt();
        let coef = self.coef.iter().zip(dev.iter()).map(|(c, d)| c + sd * d).collect();
        Ok((coef, var))
    }
}

fn check_rank(xtx: &DMatrix<f64>, names: &[String]) -> Result<()> {
    let eig = xtx.clone().symmetric_eigen();
    let (mut imin, mut imax) = (0, 0);
    for i in 0..eig.eigenvalues.len() {
        if eig.eigenvalues[i] < eig.eigenvalues[imin] {
            imin = i;
        }
        if eig.eigenvalues[i] > eig.eigenvalues[imax] {
            imax = i;
        }
    }
    let max = eig.eigenvalues[imax];
    let min = eig.eigenvalues[imin];
    if !(max > 0.0) || min / max < RANK_TOLERANCE {
        let v = eig.eigenvectors.column(imin);
        let columns = names
            .iter()
            .enumerate()
            .filter(|(i, _)| v[*i].abs() > 0.1)
            .map(|(_, n)| n.clone())
            .collect();
        return Err(Error::Singular { columns });
    }
    Ok(())
}

/// Draws both regressions from the completed data.
pub fn sample_theta(model: &AnalysisModel, data: &CompletedData, rng: &mut Rng) -> Result<Theta> {
    let n = data.len();
    for p in [model.p1(), model.p2()] {
        if n <= p {
            return Err(Error::TooFewRows { rows: n, columns: p });
        }
    }
    let ls1 = LeastSquares::fit(&data.x1, &data.y1, &model.y1_names)?;
    let ls2 = LeastSquares::fit(&data.x2, &data.y2, &model.y2_names)?;
    let (beta, sigma1_sq) = ls1.draw(n, rng)?;
    let (eta, sigma2_sq) = ls2.draw(n, rng)?;
    Ok(Theta { beta, sigma1_sq, eta, sigma2_sq })
}

/// One predictive draw of `y1` for a test record.
pub fn predict_y1(model: &AnalysisModel, theta: &Theta, key: &[Code], y2: f64, rng: &mut Rng) -> f64 {
    model.predictor(theta, key).impute_y1(y2, rng)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{FieldRole, FieldSpec};
    use crate::rng::seeded;

    fn schema() -> InCommonSchema {
        InCommonSchema::new(vec![FieldSpec::new("g", 3, FieldRole::Matching)]).unwrap()
    }

    fn model() -> AnalysisModel {
        let t = |s: &str| TermSpec(s.into());
        AnalysisModel::new(&schema(), &[t("1"), t("y2"), t("g=2")], &[t("1"), t("g=2"), t("g=3")]).unwrap()
    }

    #[test]
    fn single_pair_density_is_sum_of_two_normals() {
        let m = model();
        let th = Theta { beta: vec![1.0, 0.5, 2.0], sigma1_sq: 4.0, eta: vec![3.0, -1.0, 1.0], sigma2_sq: 2.0 };
        let key = [2];
        let y2 = 2.5;
        let y1 = 4.0;
        let direct = ln_normal(y2, 3.0 - 1.0, 2.0) + ln_normal(y1, 1.0 + 0.5 * y2 + 2.0, 4.0);
        assert!((m.loglik_pair(&th, &key, y1, y2) - direct).abs() < 1e-12);
        let p = m.predictor(&th, &key);
        // f(y1, y2) = f(y2) f(y1 | y2) = f(y1) f(y2 | y1)
        let a = p.ln_marginal_y2(y2) + p.ln_y1_given_y2(y1, y2);
        let b = p.ln_marginal_y1(y1) + p.ln_y2_given_y1(y2, y1);
        assert!((a - direct).abs() < 1e-12);
        assert!((b - direct).abs() < 1e-12);
    }

    #[test]
    fn impute_y2_matches_closed_form() {
        let m = model();
        let th = Theta { beta: vec![0.0, 2.0, 0.0], sigma1_sq: 1.0, eta: vec![0.0, 0.0, 0.0], sigma2_sq: 1.0 };
        let p = m.predictor(&th, &[1]);
        let (mean, var) = p.y2_given_y1(4.0);
        // precision 1 + 4 = 5, mean = (0 + 2 * 4) / 5
        assert!((var - 0.2).abs() < 1e-12);
        assert!((mean - 1.6).abs() < 1e-12);
    }

    #[test]
    fn rank_deficient_design_names_columns() {
        let t = |s: &str| TermSpec(s.into());
        let m = AnalysisModel::new(&schema(), &[t("1"), t("y2")], &[t("1"), t("g=2"), t("g=3")]).unwrap();
        let mut d = CompletedData::default();
        for i in 0..20 {
            d.push(&m, &[2], i as f64, 1.0);
        }
        match sample_theta(&m, &d, &mut seeded(1)) {
            Err(Error::Singular { columns }) => {
                assert!(columns.contains(&"g=2".to_string()) || columns.contains(&"1".to_string()))
            }
            other => panic!("expected singular design, got {other:?}"),
        }
    }

    #[test]
    fn too_few_rows_is_an_error() {
        let m = model();
        let mut d = CompletedData::default();
        for g in 1..=3 {
            d.push(&m, &[g], 1.0, g as f64);
        }
        assert!(matches!(sample_theta(&m, &d, &mut seeded(1)), Err(Error::TooFewRows { .. })));
    }

    #[test]
    fn draws_center_on_least_squares() {
        let m = model();
        let mut rng = seeded(3);
        let mut d = CompletedData::default();
        for i in 0..400 {
            let g = (i % 3 + 1) as Code;
            let y2 = 1.0 + if g == 2 { 2.0 } else { 0.0 } + rng.sample::<f64, _>(StandardNormal);
            let y1 = 0.5 + 1.5 * y2 + rng.sample::<f64, _>(StandardNormal);
            d.push(&m, &[g], y1, y2);
        }
        let ls = LeastSquares::fit(&d.x1, &d.y1, &m.y1_names).unwrap();
        let draws: Vec<Theta> = (0..4000).map(|_| sample_theta(&m, &d, &mut rng).unwrap()).collect();
        let mean_slope = draws.iter().map(|t| t.beta[1]).sum::<f64>() / draws.len() as f64;
        let mean_var = draws.iter().map(|t| t.sigma1_sq).sum::<f64>() / draws.len() as f64;
        assert!((mean_slope - ls.coef[1]).abs() < 0.01);
        // E[s^2] = SSE / (n - p - 2) under the inverse gamma
        let expected = ls.sse / (400.0 - 3.0 - 2.0);
        assert!((mean_var - expected).abs() / expected < 0.02);
    }
}
