//! Reporting-error model for the matching variables of file 2.
//!
//! Each non-seed matching value carries an indicator `e`. With `e = 0` the
//! reported code equals the true code; with `e = 1` the reported code is
//! uniform over the `d - 1` wrong codes. Each matching field has its own
//! error rate with a Beta prior.

use std::fmt;
use std::str::FromStr;

use rand_distr::{Beta, Distribution};
use serde::{Deserialize, Serialize};

use crate::data::{Code, InCommonSchema};
use crate::error::{Error, Result};
use crate::rng::Rng;
use crate::scenario::Scenario;

/// Named Beta priors for the error rate.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum GammaPreset {
    /// Concentrated near the true non-seed fault level.
    #[serde(rename = "CA")]
    ConcentratedAppropriate,
    /// Diffuse, Beta(2, 10).
    #[serde(rename = "D")]
    Diffuse,
    /// Concentrated on a wrong fault level.
    #[serde(rename = "CP")]
    ConcentratedPoor,
}

impl GammaPreset {
    /// `(a, b)` of the Beta prior for a scenario.
    pub fn params(self, scenario: Scenario) -> (f64, f64) {
        use GammaPreset::*;
        use Scenario::*;
        match (self, scenario) {
            (Diffuse, _) => (2.0, 10.0),
            (ConcentratedAppropriate, HSHF) => (90000.0, 10000.0),
            (ConcentratedAppropriate, HSLF) => (12500.0, 87500.0),
            (ConcentratedAppropriate, LSHF) => (50000.0, 50000.0),
            (ConcentratedAppropriate, LSLF) => (6250.0, 93750.0),
            (ConcentratedPoor, HSHF) => (12500.0, 87500.0),
            (ConcentratedPoor, HSLF) => (90000.0, 10000.0),
            (ConcentratedPoor, LSHF) => (6250.0, 93750.0),
            (ConcentratedPoor, LSLF) => (50000.0, 50000.0),
        }
    }
}

impl fmt::Display for GammaPreset {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            GammaPreset::ConcentratedAppropriate => "CA",
            GammaPreset::Diffuse => "D",
            GammaPreset::ConcentratedPoor => "CP",
        })
    }
}

impl FromStr for GammaPreset {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_uppercase().as_str() {
            "CA" => Ok(GammaPreset::ConcentratedAppropriate),
            "D" => Ok(GammaPreset::Diffuse),
            "CP" => Ok(GammaPreset::ConcentratedPoor),
            _ => Err(Error::Parameter(format!("unknown error-rate prior '{s}'"))),
        }
    }
}

/// Error rates and their Beta priors, one entry per matching field.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GammaParams {
    /// Schema index of each matching field.
    pub fields: Vec<usize>,
    pub gamma: Vec<f64>,
    pub a: Vec<f64>,
    pub b: Vec<f64>,
}

impl GammaParams {
    pub fn new(schema: &InCommonSchema, a: f64, b: f64) -> Result<Self> {
        let fields = schema.matching_fields();
        let k = fields.len();
        Self::with_priors(fields, vec![a; k], vec![b; k])
    }

    pub fn with_priors(fields: Vec<usize>, a: Vec<f64>, b: Vec<f64>) -> Result<Self> {
        if a.len() != fields.len() || b.len() != fields.len() {
            return Err(Error::Parameter("one Beta prior is needed per matching field".into()));
        }
        if a.iter().chain(&b).any(|&x| !(x > 0.0) || !x.is_finite()) {
            return Err(Error::Parameter("Beta prior parameters must be positive".into()));
        }
        let gamma = a.iter().zip(&b).map(|(a, b)| a / (a + b)).collect();
        Ok(GammaParams { fields, gamma, a, b })
    }

    pub fn prior_mean(&self, m: usize) -> f64 {
        self.a[m] / (self.a[m] + self.b[m])
    }

    /// Position of schema field `j` among the matching fields.
    pub fn slot(&self, j: usize) -> Option<usize> {
        self.fields.iter().position(|&f| f == j)
    }

    pub fn rate(&self, j: usize) -> f64 {
        self.gamma[self.slot(j).expect("not a matching field")]
    }

    /// Draws every rate from its prior.
    pub fn draw_prior(&mut self, rng: &mut Rng) -> Result<()> {
        for m in 0..self.fields.len() {
            self.gamma[m] = draw_beta(self.a[m], self.b[m], rng)?;
        }
        Ok(())
    }

    /// Beta parameters of the full conditional of rate `m`.
    pub fn conditional(&self, m: usize, errors: usize, non_errors: usize) -> (f64, f64) {
        (self.a[m] + errors as f64, self.b[m] + non_errors as f64)
    }
}

fn draw_beta(a: f64, b: f64, rng: &mut Rng) -> Result<f64> {
    let d = Beta::new(a, b).map_err(|e| Error::Numerical(format!("Beta({a}, {b}): {e}")))?;
    Ok(d.sample(rng))
}

/// Ratio `f(reported | e*, b*) / f(reported | e, b)` for one field with `levels` codes.
pub fn reporting_ratio(e_old: bool, e_new: bool, levels: Code) -> f64 {
    let d1 = (levels - 1) as f64;
    match (e_old, e_new) {
        (false, false) | (true, true) => 1.0,
        (false, true) => 1.0 / d1,
        (true, false) => d1,
    }
}

/// `log f(reported | e, true)`.
pub fn loglik_reported(reported: Code, e: bool, truth: Code, levels: Code) -> f64 {
    match (e, reported == truth) {
        (false, true) => 0.0,
        (true, false) => -((levels - 1) as f64).ln(),
        _ => f64::NEG_INFINITY,
    }
}

/// Draws each rate from its Beta full conditional given the error indicators.
///
/// `indicators(m)` yields the indicators of every non-seed value of matching
/// field `m`.
pub fn sample_gamma<F>(params: &mut GammaParams, mut indicators: F, rng: &mut Rng) -> Result<()>
where
    F: FnMut(usize) -> (usize, usize),
{
    for m in 0..params.fields.len() {
        let (errors, total) = indicators(m);
        let (a, b) = params.conditional(m, errors, total - errors);
        params.gamma[m] = draw_beta(a, b, rng)?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{FieldRole, FieldSpec};
    use crate::rng::seeded;

    #[test]
    fn ratio_cases() {
        assert_eq!(reporting_ratio(true, true, 3), 1.0);
        assert_eq!(reporting_ratio(false, true, 3), 0.5);
        assert_eq!(reporting_ratio(true, false, 3), 2.0);
        assert_eq!(reporting_ratio(false, false, 5), 1.0);
    }

    #[test]
    fn reported_likelihood() {
        assert_eq!(loglik_reported(2, false, 2, 3), 0.0);
        assert_eq!(loglik_reported(2, false, 1, 3), f64::NEG_INFINITY);
        assert_eq!(loglik_reported(2, true, 2, 3), f64::NEG_INFINITY);
        assert!((loglik_reported(2, true, 1, 3) - 0.5f64.ln()).abs() < 1e-15);
    }

    #[test]
    fn ratio_agrees_with_likelihood() {
        // truth moves from the reported code to another one
        let r = (loglik_reported(1, true, 2, 4) - loglik_reported(1, false, 1, 4)).exp();
        assert!((r - reporting_ratio(false, true, 4)).abs() < 1e-15);
    }

    #[test]
    fn conjugate_update() {
        let s = InCommonSchema::new(vec![
            FieldSpec::new("a", 2, FieldRole::Blocking),
            FieldSpec::new("m", 3, FieldRole::Matching),
        ])
        .unwrap();
        let p = GammaParams::new(&s, 2.0, 10.0).unwrap();
        assert_eq!(p.conditional(0, 7, 43), (9.0, 53.0));
        assert_eq!(p.fields, vec![1]);
        let hshf = GammaPreset::ConcentratedAppropriate.params(Scenario::HSHF);
        assert!((hshf.0 / (hshf.0 + hshf.1) - 0.9).abs() < 1e-12);
    }

    #[test]
    fn gamma_draws_follow_the_conditional() {
        let s = InCommonSchema::new(vec![FieldSpec::new("m", 3, FieldRole::Matching)]).unwrap();
        let mut p = GammaParams::new(&s, 2.0, 10.0).unwrap();
        let mut rng = seeded(11);
        let n = 20000;
        let mut sum = 0.0;
        for _ in 0..n {
            sample_gamma(&mut p, |_| (30, 100), &mut rng).unwrap();
            sum += p.gamma[0];
        }
        let mean = 32.0 / 112.0;
        let sd = (32.0 * 80.0 / (112.0f64.powi(2) * 113.0)).sqrt();
        assert!((sum / n as f64 - mean).abs() < 4.0 * sd / (n as f64).sqrt());
    }
}
