//! Truncated Dirichlet process mixture of product multinomials.
//!
//! Each individual belongs to one of `H` latent classes. Within a class the
//! categorical fields are independent. Class weights come from a truncated
//! stick-breaking prior with concentration `alpha ~ Gamma(a_alpha, b_alpha)`.

use rand::Rng as _;
use rand_distr::{Beta, Distribution, Gamma};
use serde::{Deserialize, Serialize};

use crate::data::{Code, InCommonSchema};
use crate::error::{Error, Result};
use crate::rng::Rng;

const MIN_ALPHA: f64 = 1e-8;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DpHyper {
    /// Number of latent classes kept by the truncation.
    pub classes: usize,
    pub a_alpha: f64,
    pub b_alpha: f64,
    /// Dirichlet parameter applied to every level of every field.
    pub dirichlet: f64,
}

impl Default for DpHyper {
    fn default() -> Self {
        DpHyper { classes: 30, a_alpha: 0.25, b_alpha: 0.25, dirichlet: 1.0 }
    }
}

impl DpHyper {
    pub fn validate(&self) -> Result<()> {
        if self.classes == 0 {
            return Err(Error::Parameter("the number of latent classes must be positive".into()));
        }
        for (name, v) in [("a_alpha", self.a_alpha), ("b_alpha", self.b_alpha), ("dirichlet", self.dirichlet)] {
            if !(v > 0.0) || !v.is_finite() {
                return Err(Error::Parameter(format!("{name} must be positive")));
            }
        }
        Ok(())
    }
}

/// Class weights and within-class probabilities.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Psi {
    /// Stick-breaking fractions, the last one fixed at 1.
    pub v: Vec<f64>,
    pub pi: Vec<f64>,
    /// `phi[h][j][b - 1]`.
    pub phi: Vec<Vec<Vec<f64>>>,
    pub alpha: f64,
}

impl Psi {
    pub fn classes(&self) -> usize {
        self.pi.len()
    }

    /// Probability of code `b` of field `j` within class `h`.
    pub fn prob(&self, h: usize, j: usize, b: Code) -> f64 {
        self.phi[h][j][b as usize - 1]
    }

    /// Draws a starting value from the prior with `alpha = 1`.
    pub fn from_prior(schema: &InCommonSchema, hyper: &DpHyper, rng: &mut Rng) -> Result<Psi> {
        hyper.validate()?;
        let h = hyper.classes;
        let alpha = 1.0;
        let mut v = vec![1.0; h];
        for vh in v.iter_mut().take(h - 1) {
            *vh = draw_beta(1.0, alpha, rng)?;
        }
        let pi = stick_weights(&v);
        let mut phi = Vec::with_capacity(h);
        for _ in 0..h {
            let mut per_field = Vec::with_capacity(schema.len());
            for f in &schema.fields {
                per_field.push(draw_dirichlet(&vec![hyper.dirichlet; f.levels as usize], rng)?);
            }
            phi.push(per_field);
        }
        Ok(Psi { v, pi, phi, alpha })
    }

    /// Log probability of a full key under class `h`, without the weight.
    pub fn ln_row(&self, h: usize, row: &[Code]) -> f64 {
        row.iter().enumerate().map(|(j, &b)| self.prob(h, j, b).ln()).sum()
    }

    /// Number of classes with at least one member.
    pub fn occupied(labels: &[usize]) -> usize {
        let mut seen: Vec<usize> = labels.to_vec();
        seen.sort_unstable();
        seen.dedup();
        seen.len()
    }

    /// Draws one class label for a row from its full conditional.
    pub fn draw_label(&self, row: &[Code], rng: &mut Rng) -> usize {
        let mut w: Vec<f64> = (0..self.classes()).map(|h| self.pi[h].ln() + self.ln_row(h, row)).collect();
        let max = w.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let mut total = 0.0;
        for x in w.iter_mut() {
            *x = (*x - max).exp();
            total += *x;
        }
        let mut u = rng.random::<f64>() * total;
        for (h, x) in w.iter().enumerate() {
            u -= x;
            if u <= 0.0 {
                return h;
            }
        }
        w.iter().rposition(|&x| x > 0.0).unwrap_or(0)
    }

    /// One blocked Gibbs sweep over the rows (flattened, `J` codes each).
    ///
    /// Returns the class label drawn for every row.
    pub fn gibbs_sweep(&mut self, rows: &[Code], n_fields: usize, hyper: &DpHyper, rng: &mut Rng) -> Result<Vec<usize>> {
        let n = rows.len().checked_div(n_fields).unwrap_or(0);
        let h_count = self.classes();
        let labels: Vec<usize> = (0..n).map(|i| self.draw_label(&rows[i * n_fields..(i + 1) * n_fields], rng)).collect();
        let mut counts = vec![0usize; h_count];
        for &z in &labels {
            counts[z] += 1;
        }
        let alpha = self.alpha.max(MIN_ALPHA);
        let mut tail = n;
        for h in 0..h_count - 1 {
            tail -= counts[h];
            self.v[h] = draw_beta(1.0 + counts[h] as f64, alpha + tail as f64, rng)?;
        }
        self.v[h_count - 1] = 1.0;
        self.pi = stick_weights(&self.v);
        let mut conc: Vec<Vec<Vec<f64>>> = self
            .phi
            .iter()
            .map(|fields| fields.iter().map(|p| vec![hyper.dirichlet; p.len()]).collect())
            .collect();
        for (i, &z) in labels.iter().enumerate() {
            for j in 0..n_fields {
                conc[z][j][rows[i * n_fields + j] as usize - 1] += 1.0;
            }
        }
        for h in 0..h_count {
            for j in 0..n_fields {
                self.phi[h][j] = draw_dirichlet(&conc[h][j], rng)?;
            }
        }
        self.alpha = sample_alpha(&self.v, hyper, rng)?;
        Ok(labels)
    }
}

/// Draws `alpha` from its full conditional given the stick fractions.
pub fn sample_alpha(v: &[f64], hyper: &DpHyper, rng: &mut Rng) -> Result<f64> {
    let (shape, rate) = alpha_conditional(v, hyper);
    Ok(draw_gamma(shape, rate, rng)?.max(MIN_ALPHA))
}

/// Share of pairs on which two partitions agree about being together.
pub fn rand_index(a: &[usize], b: &[usize]) -> f64 {
    assert_eq!(a.len(), b.len());
    let n = a.len();
    if n < 2 {
        return 1.0;
    }
    let pairs = |x: u64| x * x.saturating_sub(1) / 2;
    let mut joint = std::collections::HashMap::new();
    let mut ca = std::collections::HashMap::new();
    let mut cb = std::collections::HashMap::new();
    for (&x, &y) in a.iter().zip(b) {
        *joint.entry((x, y)).or_insert(0u64) += 1;
        *ca.entry(x).or_insert(0u64) += 1;
        *cb.entry(y).or_insert(0u64) += 1;
    }
    let both: u64 = joint.values().map(|&c| pairs(c)).sum();
    let same_a: u64 = ca.values().map(|&c| pairs(c)).sum();
    let same_b: u64 = cb.values().map(|&c| pairs(c)).sum();
    let total = pairs(n as u64);
    let agree = total + 2 * both - same_a - same_b;
    agree as f64 / total as f64
}

/// Shape and rate of the Gamma full conditional of `alpha`.
pub fn alpha_conditional(v: &[f64], hyper: &DpHyper) -> (f64, f64) {
    let h = v.len();
    let ln_pi_last: f64 = v[..h - 1].iter().map(|&x| (-x).ln_1p()).sum();
    let ln_pi_last = ln_pi_last.max(-1e300);
    (hyper.a_alpha + (h - 1) as f64, hyper.b_alpha - ln_pi_last)
}

pub fn stick_weights(v: &[f64]) -> Vec<f64> {
    let mut rest = 1.0;
    v.iter()
        .map(|&x| {
            let w = x * rest;
            rest *= 1.0 - x;
            w
        })
        .collect()
}

fn draw_beta(a: f64, b: f64, rng: &mut Rng) -> Result<f64> {
    let d = Beta::new(a, b).map_err(|e| Error::Numerical(format!("Beta({a}, {b}): {e}")))?;
    Ok(d.sample(rng))
}

pub(crate) fn draw_gamma(shape: f64, rate: f64, rng: &mut Rng) -> Result<f64> {
    let d = Gamma::new(shape, 1.0 / rate).map_err(|e| Error::Numerical(format!("Gamma({shape}, {rate}): {e}")))?;
    Ok(d.sample(rng))
}

fn draw_dirichlet(conc: &[f64], rng: &mut Rng) -> Result<Vec<f64>> {
    let mut g: Vec<f64> = conc.iter().map(|&a| draw_gamma(a, 1.0, rng)).collect::<Result<_>>()?;
    let total: f64 = g.iter().sum();
    if !(total > 0.0) {
        let k = g.len();
        let i = rng.random_range(0..k);
        g.iter_mut().enumerate().for_each(|(j, x)| *x = if j == i { 1.0 } else { 0.0 });
        return Ok(g);
    }
    for x in g.iter_mut() {
        *x /= total;
    }
    Ok(g)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{FieldRole, FieldSpec};
    use crate::rng::seeded;

    fn schema() -> InCommonSchema {
        InCommonSchema::new(vec![FieldSpec::new("a", 3, FieldRole::Blocking), FieldSpec::new("b", 2, FieldRole::Matching)])
            .unwrap()
    }

    #[test]
    fn weights_sum_to_one() {
        let mut rng = seeded(4);
        let psi = Psi::from_prior(&schema(), &DpHyper::default(), &mut rng).unwrap();
        assert!((psi.pi.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        assert_eq!(psi.v[29], 1.0);
        for h in 0..30 {
            for j in 0..2 {
                assert!((psi.phi[h][j].iter().sum::<f64>() - 1.0).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn single_class_sweep() {
        let hyper = DpHyper { classes: 1, ..DpHyper::default() };
        let mut rng = seeded(5);
        let mut psi = Psi::from_prior(&schema(), &hyper, &mut rng).unwrap();
        let rows = vec![1, 1, 2, 2, 3, 1];
        let z = psi.gibbs_sweep(&rows, 2, &hyper, &mut rng).unwrap();
        assert_eq!(z, vec![0, 0, 0]);
        assert_eq!(psi.pi, vec![1.0]);
    }

    #[test]
    fn alpha_conditional_uses_last_weight() {
        let hyper = DpHyper::default();
        let v = vec![0.5, 0.5, 1.0];
        let (shape, rate) = alpha_conditional(&v, &hyper);
        assert!((shape - 2.25).abs() < 1e-12);
        assert!((rate - (0.25 - 0.25f64.ln())).abs() < 1e-12);
        assert!((stick_weights(&v)[2] - 0.25).abs() < 1e-12);
    }

    #[test]
    fn stick_weights_example() {
        assert_eq!(stick_weights(&[0.5, 0.5, 1.0]), vec![0.5, 0.25, 0.25]);
    }

    #[test]
    fn label_probabilities_follow_weights() {
        let mut rng = seeded(6);
        let mut psi = Psi::from_prior(&schema(), &DpHyper { classes: 2, ..DpHyper::default() }, &mut rng).unwrap();
        psi.pi = vec![0.5, 0.5];
        psi.phi[0][0] = vec![0.2, 0.3, 0.5];
        psi.phi[1][0] = vec![0.5, 0.3, 0.2];
        psi.phi[0][1] = vec![0.5, 0.5];
        psi.phi[1][1] = vec![0.5, 0.5];
        assert_eq!(psi.prob(0, 0, 3), 0.5);
        let n = 20_000;
        let hits = (0..n).filter(|_| psi.draw_label(&[3, 1], &mut rng) == 0).count();
        let p = hits as f64 / n as f64;
        assert!((p - 5.0 / 7.0).abs() < 4.0 * (p * (1.0 - p) / n as f64).sqrt());
    }

    #[test]
    fn phi_concentrates_on_observed_level() {
        let hyper = DpHyper { classes: 1, ..DpHyper::default() };
        let mut rng = seeded(7);
        let mut psi = Psi::from_prior(&schema(), &hyper, &mut rng).unwrap();
        let rows: Vec<Code> = (0..500).flat_map(|_| [1, 1]).collect();
        psi.gibbs_sweep(&rows, 2, &hyper, &mut rng).unwrap();
        assert!(psi.phi[0][1][0] > 0.98);
    }

    #[test]
    fn rand_index_counts_pair_agreement() {
        assert_eq!(rand_index(&[0, 0, 1, 1], &[5, 5, 7, 7]), 1.0);
        // pairs: (01) same/same, (02) diff/same, (03) diff/diff, (12) diff/same, (13) diff/diff, (23) same/diff
        assert!((rand_index(&[0, 0, 1, 1], &[0, 0, 0, 1]) - 0.5).abs() < 1e-12);
    }
}
