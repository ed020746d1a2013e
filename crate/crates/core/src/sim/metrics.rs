//! Match rates, prediction error and method comparisons.

use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, StudentsT};

use crate::analysis::{predict_y1, AnalysisModel, Theta};
use crate::error::{Error, Result};
use crate::rng::Rng;
use crate::sim::generate::TestSet;

/// Share of correct links among `(f1_row, f2_row)` links of one draw.
pub fn match_rate(links: &[(usize, usize)], truth: &[usize]) -> Option<f64> {
    if links.is_empty() {
        return None;
    }
    let correct = links.iter().filter(|&&(r, i)| truth[i] == r).count();
    Some(correct as f64 / links.len() as f64)
}

/// Match rate averaged over draws.
pub fn compute_pmr(draws: &[Vec<(usize, usize)>], truth: &[usize]) -> Option<f64> {
    let rates: Vec<f64> = draws.iter().filter_map(|d| match_rate(d, truth)).collect();
    (!rates.is_empty()).then(|| rates.iter().sum::<f64>() / rates.len() as f64)
}

/// Root mean squared error of `y1` predictions on a test set.
///
/// Each prediction is one draw from the predictive distribution, or its mean
/// when `mean_prediction` is set.
pub fn compute_rmse(model: &AnalysisModel, theta: &Theta, test: &TestSet, mean_prediction: bool, rng: &mut Rng) -> f64 {
    let mut sse = 0.0;
    for i in 0..test.len() {
        let key = test.row(i);
        let pred = if mean_prediction {
            model.predictor(theta, key).y1_given_y2(test.y2[i]).0
        } else {
            predict_y1(model, theta, key, test.y2[i], rng)
        };
        sse += (pred - test.y1[i]).powi(2);
    }
    (sse / test.len() as f64).sqrt()
}

/// Per-replication result of one method.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RepMetrics {
    pub rep: usize,
    /// Posterior mean of the regression parameters.
    pub theta: Vec<f64>,
    pub pmr: Option<f64>,
    pub rmse: f64,
}

/// One compared quantity.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ComparisonEntry {
    pub name: String,
    pub mean: f64,
    pub t: f64,
    pub p_value: f64,
    /// `p < 0.05` in a paired t-test.
    pub significant: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Comparison {
    pub replications: usize,
    pub entries: Vec<ComparisonEntry>,
}

impl Comparison {
    pub fn get(&self, name: &str) -> Option<&ComparisonEntry> {
        self.entries.iter().find(|e| e.name == name)
    }

    pub fn write_csv<W: std::io::Write>(&self, out: W) -> Result<()> {
        let mut w = csv::WriterBuilder::new().quote_style(csv::QuoteStyle::Never).from_writer(out);
        w.write_record(["quantity", "mean", "t", "p_value", "significant"])?;
        for e in &self.entries {
            w.write_record([
                e.name.clone(),
                crate::data::format_f64(e.mean),
                crate::data::format_f64(e.t),
                crate::data::format_f64(e.p_value),
                (e.significant as u8).to_string(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}

/// One-sample t-test of the mean of paired differences.
pub fn paired_t(d: &[f64]) -> (f64, f64) {
    let n = d.len() as f64;
    let mean = d.iter().sum::<f64>() / n;
    if d.len() < 2 {
        return (f64::NAN, f64::NAN);
    }
    let sd = (d.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt();
    if sd == 0.0 {
        return if mean == 0.0 { (0.0, 1.0) } else { (mean.signum() * f64::INFINITY, 0.0) };
    }
    let t = mean / (sd / n.sqrt());
    let dist = StudentsT::new(0.0, 1.0, n - 1.0).expect("positive degrees of freedom");
    (t, 2.0 * (1.0 - dist.cdf(t.abs())))
}

fn entry(name: String, d: &[f64]) -> ComparisonEntry {
    let mean = d.iter().sum::<f64>() / d.len() as f64;
    let (t, p) = paired_t(d);
    ComparisonEntry { name, mean, t, p_value: p, significant: p < 0.05 }
}

/// Compares the matching model with the baseline on aligned replications.
///
/// Positive entries favour the matching model. Coefficient entries average
/// `100 (|gm - theta| - |bl - theta|) / |theta|`; `dPMR` averages
/// `100 (PMR_bl - PMR_gm)`; `dRMSE` averages `(RMSE_gm - RMSE_bl) / RMSE_pb`
/// and needs the perfectly blocked results.
pub fn compare_methods(
    blase: &[RepMetrics],
    gazm: &[RepMetrics],
    blocked: Option<&[RepMetrics]>,
    truth: &[f64],
    names: &[String],
    coefficients: &[usize],
) -> Result<Comparison> {
    if blase.len() != gazm.len() || blocked.is_some_and(|b| b.len() != blase.len()) {
        return Err(Error::Validation("methods have different numbers of replications".into()));
    }
    if blase.is_empty() {
        return Err(Error::Validation("no replications to compare".into()));
    }
    for (k, b) in blase.iter().enumerate() {
        let aligned = gazm[k].rep == b.rep && blocked.is_none_or(|p| p[k].rep == b.rep);
        if !aligned {
            return Err(Error::Validation(format!("replication {} is not aligned across methods", b.rep)));
        }
    }
    let mut entries = Vec::new();
    for &c in coefficients {
        let theta = truth[c];
        let d: Vec<f64> = blase
            .iter()
            .zip(gazm)
            .map(|(b, g)| 100.0 * ((g.theta[c] - theta).abs() - (b.theta[c] - theta).abs()) / theta.abs())
            .collect();
        entries.push(entry(names[c].clone(), &d));
    }
    let pmr: Option<Vec<f64>> = blase.iter().zip(gazm).map(|(b, g)| Some(100.0 * (b.pmr? - g.pmr?))).collect();
    if let Some(d) = pmr {
        entries.push(entry("dPMR".into(), &d));
    }
    if let Some(pb) = blocked {
        let d: Vec<f64> = blase.iter().zip(gazm).zip(pb).map(|((b, g), p)| (g.rmse - b.rmse) / p.rmse).collect();
        entries.push(entry("dRMSE".into(), &d));
    }
    Ok(Comparison { replications: blase.len(), entries })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rep(rep: usize, theta: Vec<f64>, pmr: f64, rmse: f64) -> RepMetrics {
        RepMetrics { rep, theta, pmr: Some(pmr), rmse }
    }

    #[test]
    fn match_rate_examples() {
        let truth = vec![0, 1, 2, 3];
        assert_eq!(match_rate(&[(0, 0), (1, 1), (2, 2), (3, 3)], &truth), Some(1.0));
        assert_eq!(match_rate(&[(0, 0), (1, 1), (2, 2), (2, 3)], &truth), Some(0.75));
        assert_eq!(compute_pmr(&[vec![(0, 0)], vec![(1, 0)]], &truth), Some(0.5));
    }

    #[test]
    fn identical_methods_compare_to_zero() {
        let a = vec![rep(0, vec![1.0, -2.0], 0.8, 6.0), rep(1, vec![1.5, -1.0], 0.7, 6.5)];
        let names = vec!["a".to_string(), "b".to_string()];
        let c = compare_methods(&a, &a, Some(&a), &[1.0, -2.0], &names, &[0, 1]).unwrap();
        for e in &c.entries {
            assert_eq!(e.mean, 0.0);
            assert!(!e.significant);
        }
    }

    #[test]
    fn hand_computed_two_replications() {
        let names = vec!["b0".to_string()];
        let bl = vec![rep(0, vec![2.1], 0.9, 6.0), rep(1, vec![1.8], 0.8, 6.2)];
        let gm = vec![rep(0, vec![2.5], 0.7, 6.6), rep(1, vec![2.4], 0.75, 6.4)];
        let pb = vec![rep(0, vec![2.0], 1.0, 6.0), rep(1, vec![2.0], 1.0, 5.0)];
        let c = compare_methods(&bl, &gm, Some(&pb), &[2.0], &names, &[0]).unwrap();
        // (0.5 - 0.1) / 2 * 100 = 20 and (0.4 - 0.2) / 2 * 100 = 10
        assert!((c.get("b0").unwrap().mean - 15.0).abs() < 1e-9);
        // 20 and 5
        assert!((c.get("dPMR").unwrap().mean - 12.5).abs() < 1e-9);
        // 0.1 and 0.04
        assert!((c.get("dRMSE").unwrap().mean - 0.07).abs() < 1e-9);
        let (t, _) = paired_t(&[20.0, 10.0]);
        assert!((t - 3.0).abs() < 1e-9);
    }

    #[test]
    fn positive_means_matching_model_is_closer() {
        let names = vec!["neg".to_string()];
        let bl = vec![rep(0, vec![-1.1], 0.9, 6.0)];
        let gm = vec![rep(0, vec![-1.6], 0.7, 6.0)];
        let c = compare_methods(&bl, &gm, None, &[-1.2], &names, &[0]).unwrap();
        assert!(c.get("neg").unwrap().mean > 0.0);
        assert!(c.get("dRMSE").is_none());
    }

    #[test]
    fn misaligned_replications_fail() {
        let a = vec![rep(0, vec![1.0], 0.8, 6.0)];
        let b = vec![rep(0, vec![1.0], 0.8, 6.0), rep(1, vec![1.0], 0.8, 6.0)];
        assert!(compare_methods(&a, &b, None, &[1.0], &["x".into()], &[0]).is_err());
    }
}
