//! Matched-pair data, rule-decision tables and the reduction of a rule
//! comparison to a single vector of signed differences.

use crate::error::{Error, Result};

/// Matched pairs with the treated-minus-control difference of each pair and
/// the 0/1 decision of every candidate rule at the pair's shared covariates.
#[derive(Debug, Clone, PartialEq)]
pub struct PairedSample {
    pair_ids: Vec<String>,
    d: Vec<f64>,
    // row-major: decisions[pair * rule_count + rule]
    decisions: Vec<bool>,
    rule_count: usize,
    control: usize,
}

impl PairedSample {
    /// Builds a sample from per-pair rows of rule decisions.
    ///
    /// Every row must hold the same number of decisions (at least one).
    pub fn new(pair_ids: Vec<String>, d: Vec<f64>, rules: Vec<Vec<bool>>) -> Result<Self> {
        let n = d.len();
        if n == 0 {
            return Err(Error::TooFewPairs { needed: 1, got: 0 });
        }
        if pair_ids.len() != n || rules.len() != n {
            return Err(Error::Config(format!(
                "length mismatch: {} ids, {} differences, {} rule rows",
                pair_ids.len(),
                n,
                rules.len()
            )));
        }
        let rule_count = rules[0].len();
        if rule_count == 0 {
            return Err(Error::Config("at least one rule column is required".into()));
        }
        let mut decisions = Vec::with_capacity(n * rule_count);
        for (row, r) in rules.iter().enumerate() {
            if r.len() != rule_count {
                return Err(Error::Validation {
                    row,
                    message: format!("expected {rule_count} rule decisions, found {}", r.len()),
                });
            }
            decisions.extend_from_slice(r);
        }
        if let Some(row) = d.iter().position(|x| !x.is_finite()) {
            return Err(Error::Validation {
                row,
                message: "difference is not finite".into(),
            });
        }
        Ok(Self {
            pair_ids,
            d,
            decisions,
            rule_count,
            control: 0,
        })
    }

    /// Convenience constructor with pair ids `0..n` and rule columns given
    /// column-major as 0/1 values.
    pub fn from_columns(d: Vec<f64>, columns: &[Vec<u8>]) -> Result<Self> {
        let n = d.len();
        for (k, col) in columns.iter().enumerate() {
            if col.len() != n {
                return Err(Error::Config(format!(
                    "rule column {k} has {} entries, expected {n}",
                    col.len()
                )));
            }
            if let Some(row) = col.iter().position(|&v| v > 1) {
                return Err(Error::Validation {
                    row,
                    message: format!("rule_{k} decision must be 0 or 1"),
                });
            }
        }
        let rows = (0..n)
            .map(|i| columns.iter().map(|c| c[i] == 1).collect())
            .collect();
        let ids = (0..n).map(|i| i.to_string()).collect();
        Self::new(ids, d, rows)
    }

    /// Designates the control rule (column 0 by default).
    pub fn with_control(mut self, control: usize) -> Result<Self> {
        self.check_rule(control)?;
        self.control = control;
        Ok(self)
    }

    pub fn len(&self) -> usize {
        self.d.len()
    }

    pub fn is_empty(&self) -> bool {
        self.d.is_empty()
    }

    pub fn rule_count(&self) -> usize {
        self.rule_count
    }

    pub fn control(&self) -> usize {
        self.control
    }

    pub fn differences(&self) -> &[f64] {
        &self.d
    }

    pub fn pair_ids(&self) -> &[String] {
        &self.pair_ids
    }

    #[inline]
    pub fn decision(&self, pair: usize, rule: usize) -> bool {
        self.decisions[pair * self.rule_count + rule]
    }

    /// The decisions of every rule for one pair.
    pub fn decisions_of(&self, pair: usize) -> &[bool] {
        let start = pair * self.rule_count;
        &self.decisions[start..start + self.rule_count]
    }

    pub fn check_rule(&self, index: usize) -> Result<()> {
        if index >= self.rule_count {
            return Err(Error::InvalidRule {
                index,
                count: self.rule_count,
            });
        }
        Ok(())
    }

    /// A new sample holding the given pairs, in the given order. The control
    /// designation is kept.
    pub fn subset(&self, pairs: &[usize]) -> Self {
        let mut decisions = Vec::with_capacity(pairs.len() * self.rule_count);
        for &p in pairs {
            decisions.extend_from_slice(self.decisions_of(p));
        }
        Self {
            pair_ids: pairs.iter().map(|&p| self.pair_ids[p].clone()).collect(),
            d: pairs.iter().map(|&p| self.d[p]).collect(),
            decisions,
            rule_count: self.rule_count,
            control: self.control,
        }
    }
}

/// The signed differences `D_i · (r_j − r_i)` on the pairs where two rules
/// disagree.
#[derive(Debug, Clone, PartialEq)]
pub struct ComparisonFrame {
    pub rule_pair: (usize, usize),
    pub signed_d: Vec<f64>,
    /// Positions (in the source sample) of the pairs kept in `signed_d`.
    pub pairs: Vec<usize>,
    /// Total number of pairs in the source sample.
    pub n: usize,
}

impl ComparisonFrame {
    /// Number of pairs on which the two rules disagree.
    pub fn m(&self) -> usize {
        self.signed_d.len()
    }

    /// The margin shift applied to each signed difference when testing
    /// dominance by `delta`: the average-effect bound `delta · n / m`.
    pub fn margin_shift(&self, delta: f64) -> f64 {
        if delta == 0.0 {
            0.0
        } else {
            delta * self.n as f64 / self.m() as f64
        }
    }
}

/// Reduces the comparison of `rule_i` against `rule_j` to signed differences.
///
/// Pairs where rule `j` treats and rule `i` does not keep their sign; pairs
/// where only rule `i` treats are flipped; agreeing pairs are dropped.
pub fn build_comparison_frame(
    sample: &PairedSample,
    rule_i: usize,
    rule_j: usize,
) -> Result<ComparisonFrame> {
    sample.check_rule(rule_i)?;
    sample.check_rule(rule_j)?;
    if rule_i == rule_j {
        return Err(Error::IdenticalRules(rule_i, rule_j));
    }
    let mut signed_d = Vec::new();
    let mut pairs = Vec::new();
    for (p, &d) in sample.differences().iter().enumerate() {
        let ri = sample.decision(p, rule_i);
        let rj = sample.decision(p, rule_j);
        if ri != rj {
            signed_d.push(if rj { d } else { -d });
            pairs.push(p);
        }
    }
    if signed_d.is_empty() {
        return Err(Error::IdenticalRules(rule_i, rule_j));
    }
    Ok(ComparisonFrame {
        rule_pair: (rule_i, rule_j),
        signed_d,
        pairs,
        n: sample.len(),
    })
}

/// Γ, its bounded transform κ = (Γ−1)/(Γ+1), the level α and the dominance
/// margin δ.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SensitivityParams {
    gamma: f64,
    kappa: f64,
    alpha: f64,
    delta: f64,
}

impl SensitivityParams {
    pub fn new(gamma: f64, alpha: f64, delta: f64) -> Result<Self> {
        let kappa = crate::sensitivity::gamma_to_kappa(gamma)?;
        if !(alpha > 0.0 && alpha < 1.0) {
            return Err(Error::InvalidAlpha(alpha));
        }
        if !(delta.is_finite() && delta >= 0.0) {
            return Err(Error::InvalidDelta(delta));
        }
        Ok(Self {
            gamma,
            kappa,
            alpha,
            delta,
        })
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    pub fn kappa(&self) -> f64 {
        self.kappa
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn delta(&self) -> f64 {
        self.delta
    }

    /// Same Γ and δ at another level (used for Bonferroni-adjusted tests).
    pub fn with_alpha(self, alpha: f64) -> Result<Self> {
        Self::new(self.gamma, alpha, self.delta)
    }

    pub fn with_gamma(self, gamma: f64) -> Result<Self> {
        Self::new(gamma, self.alpha, self.delta)
    }
}
