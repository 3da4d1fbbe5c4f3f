//! Monte Carlo harness for cohort-structured matched-pair studies.
//!
//! Each cohort has a constant treatment effect; the pair differences in
//! cohort k are `N(μ_k, sd²)`. Rule `r_k` treats cohorts `1..=k`, so `r_0`
//! (the control) treats nobody. Replicates draw from independent ChaCha
//! streams keyed by `(seed, replicate_index)`, which makes every aggregate
//! independent of the worker count.

use std::collections::BTreeSet;
use std::fmt::Write as _;

use log::warn;
use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{PairedSample, SensitivityParams};
use crate::normal;
use crate::selection::{Goal, Method, SelectionPlan, SelectionResult, SelectionSession};

fn default_noise_sd() -> f64 {
    1.0
}

fn default_alpha() -> f64 {
    0.05
}

fn default_goal() -> Goal {
    Goal::Positive
}

fn default_split_fractions() -> Vec<f64> {
    vec![0.5, 0.25]
}

/// The truth at one Γ: the rules that belong to the target set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrueSet {
    pub gamma: f64,
    pub rules: BTreeSet<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulationScenario {
    #[serde(default)]
    pub name: String,
    pub cohort_means: Vec<f64>,
    pub cohort_size: usize,
    #[serde(default = "default_noise_sd")]
    pub noise_sd: f64,
    pub gamma_grid: Vec<f64>,
    #[serde(default = "default_alpha")]
    pub alpha: f64,
    #[serde(default)]
    pub delta: f64,
    pub methods: Vec<Method>,
    /// Planning fractions tried by each ordered method.
    #[serde(default = "default_split_fractions")]
    pub split_fractions: Vec<f64>,
    pub replicates: usize,
    pub seed: u64,
    /// Which set the procedures estimate: positive rules (default) or
    /// maximal rules.
    #[serde(default = "default_goal")]
    pub goal: Goal,
    /// One entry per grid point. For the maximal goal these are the true
    /// maximal sets.
    #[serde(alias = "true_positive_sets")]
    pub true_sets: Vec<TrueSet>,
}

impl SimulationScenario {
    pub fn from_json(text: &str) -> Result<Self> {
        let s: Self = serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        s.validate()?;
        Ok(s)
    }

    pub fn cohort_count(&self) -> usize {
        self.cohort_means.len()
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(m.to_string()));
        if self.cohort_means.is_empty() {
            return bad("cohort_means must not be empty");
        }
        if self.cohort_means.iter().any(|m| !m.is_finite()) {
            return bad("cohort_means must be finite");
        }
        if self.cohort_size == 0 {
            return bad("cohort_size must be positive");
        }
        if !(self.noise_sd.is_finite() && self.noise_sd >= 0.0) {
            return bad("noise_sd must be finite and non-negative");
        }
        if self.replicates == 0 {
            return bad("replicates must be at least 1");
        }
        if self.methods.is_empty() {
            return bad("at least one method is required");
        }
        if self.gamma_grid.is_empty() {
            return bad("gamma_grid must not be empty");
        }
        for &g in &self.gamma_grid {
            SensitivityParams::new(g, self.alpha, self.delta)?;
        }
        if self.methods.iter().any(Method::uses_split) {
            if self.split_fractions.is_empty() {
                return bad("ordered methods need at least one split fraction");
            }
            if let Some(&f) = self.split_fractions.iter().find(|f| !(**f > 0.0 && **f < 1.0)) {
                return Err(Error::InvalidFraction(f));
            }
        }
        let k = self.cohort_count();
        for &g in &self.gamma_grid {
            let t = self
                .true_set(g)
                .ok_or_else(|| Error::Config(format!("no true set given for gamma {g}")))?;
            if let Some(&r) = t.iter().find(|&&r| r > k) {
                return Err(Error::InvalidRule { index: r, count: k + 1 });
            }
        }
        Ok(())
    }

    pub fn true_set(&self, gamma: f64) -> Option<&BTreeSet<usize>> {
        self.true_sets.iter().find(|t| t.gamma == gamma).map(|t| &t.rules)
    }

    /// Every (method, split) combination the scenario runs, in output order.
    pub fn arms(&self) -> Vec<(Method, Option<f64>)> {
        self.methods
            .iter()
            .flat_map(|&m| {
                if m.uses_split() {
                    self.split_fractions.iter().map(|&f| (m, Some(f))).collect::<Vec<_>>()
                } else {
                    vec![(m, None)]
                }
            })
            .collect()
    }
}

fn replicate_rng(seed: u64, replicate_index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(replicate_index);
    rng
}

fn draw_sample(scenario: &SimulationScenario, rng: &mut ChaCha8Rng) -> PairedSample {
    let k = scenario.cohort_count();
    let size = scenario.cohort_size;
    let mut d = Vec::with_capacity(k * size);
    let mut rules = Vec::with_capacity(k * size);
    for (c, &mu) in scenario.cohort_means.iter().enumerate() {
        // validated: sd is finite and non-negative
        let dist = Normal::new(mu, scenario.noise_sd).expect("valid normal");
        for _ in 0..size {
            d.push(dist.sample(rng));
            rules.push((0..=k).map(|r| r > c).collect());
        }
    }
    let ids = (0..d.len()).map(|i| i.to_string()).collect();
    PairedSample::new(ids, d, rules).expect("generated sample is well formed")
}

/// The sample of one replicate. Rule columns are `r_0..r_K`.
pub fn generate_replicate(scenario: &SimulationScenario, replicate_index: u64) -> PairedSample {
    draw_sample(scenario, &mut replicate_rng(scenario.seed, replicate_index))
}

/// Selection results of one arm at one Γ; `None` when the engine failed.
#[derive(Debug, Clone)]
pub struct CellOutcome {
    pub method: Method,
    pub split_fraction: Option<f64>,
    pub gamma: f64,
    pub result: Option<SelectionResult>,
}

/// Runs every arm at every Γ on one replicate. Each replicate gets one
/// planning/testing split, shared by all arms and grid points.
pub fn run_replicate(scenario: &SimulationScenario, replicate_index: u64) -> Vec<CellOutcome> {
    let mut rng = replicate_rng(scenario.seed, replicate_index);
    let sample = draw_sample(scenario, &mut rng);
    let split_seed = rng.next_u64();
    let mut out = Vec::new();
    for (method, split) in scenario.arms() {
        let plan = SelectionPlan {
            method,
            split_fraction: split.unwrap_or(0.5),
            seed: split_seed,
            goal: scenario.goal,
        };
        let session = SelectionSession::new(&sample, plan, scenario.delta)
            .map_err(|e| warn!("replicate {replicate_index}, {}: {e}", method.name()))
            .ok();
        for &gamma in &scenario.gamma_grid {
            let result = session.as_ref().and_then(|s| {
                let params = SensitivityParams::new(gamma, scenario.alpha, scenario.delta).ok()?;
                s.run(&params)
                    .map_err(|e| warn!("replicate {replicate_index}, {}, gamma {gamma}: {e}", method.name()))
                    .ok()
            });
            out.push(CellOutcome {
                method,
                split_fraction: split,
                gamma,
                result,
            });
        }
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MetricsRow {
    pub method: Method,
    pub split_fraction: Option<f64>,
    pub gamma: f64,
    pub replicates: usize,
    /// Mean size of the selected set.
    pub power: f64,
    pub power_se: f64,
    /// `1 − P(selected ⊆ truth)`.
    pub error_rate: f64,
    pub error_se: f64,
    /// Replicates where the engine failed (counted as empty selections).
    pub failures: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MetricsTable {
    pub scenario: String,
    pub rows: Vec<MetricsRow>,
}

impl MetricsTable {
    pub fn row(&self, method: Method, split_fraction: Option<f64>, gamma: f64) -> Option<&MetricsRow> {
        self.rows
            .iter()
            .find(|r| r.method == method && r.split_fraction == split_fraction && r.gamma == gamma)
    }

    pub fn to_tsv(&self) -> String {
        let mut out = String::from("method\tsplit\tgamma\treplicates\tpower\tpower_se\terror_rate\terror_se\tfailures\n");
        for r in &self.rows {
            let split = r.split_fraction.map_or_else(|| "-".to_string(), |f| f.to_string());
            let _ = writeln!(
                out,
                "{}\t{}\t{}\t{}\t{:.6}\t{:.6}\t{:.6}\t{:.6}\t{}",
                r.method.name(),
                split,
                r.gamma,
                r.replicates,
                r.power,
                r.power_se,
                r.error_rate,
                r.error_se,
                r.failures
            );
        }
        out
    }
}

#[derive(Default, Clone, Copy)]
struct Accumulator {
    size_sum: f64,
    size_sq_sum: f64,
    errors: usize,
    failures: usize,
}

fn selected_size_and_error(cell: &CellOutcome, truth: &BTreeSet<usize>) -> (usize, bool) {
    match &cell.result {
        Some(r) => (r.selected.len(), !r.selected.is_subset(truth)),
        None => (0, false),
    }
}

/// Runs all replicates on `threads` workers (0 = rayon default) and
/// aggregates power and error rate per (method, split, Γ).
pub fn run_scenario(scenario: &SimulationScenario, threads: usize) -> Result<MetricsTable> {
    scenario.validate()?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| Error::Config(e.to_string()))?;
    // order-preserving collect; the reduction below is sequential in index order
    let per_replicate: Vec<Vec<(usize, bool, bool)>> = pool.install(|| {
        (0..scenario.replicates as u64)
            .into_par_iter()
            .map(|i| {
                run_replicate(scenario, i)
                    .iter()
                    .map(|cell| {
                        let truth = scenario.true_set(cell.gamma).expect("validated");
                        let (size, err) = selected_size_and_error(cell, truth);
                        (size, err, cell.result.is_none())
                    })
                    .collect()
            })
            .collect()
    });

    let cells: Vec<(Method, Option<f64>, f64)> = scenario
        .arms()
        .into_iter()
        .flat_map(|(m, f)| scenario.gamma_grid.iter().map(move |&g| (m, f, g)))
        .collect();
    let mut acc = vec![Accumulator::default(); cells.len()];
    for rep in &per_replicate {
        for (a, &(size, err, failed)) in acc.iter_mut().zip(rep) {
            let s = size as f64;
            a.size_sum += s;
            a.size_sq_sum += s * s;
            a.errors += usize::from(err);
            a.failures += usize::from(failed);
        }
    }

    let r = scenario.replicates as f64;
    let rows = cells
        .into_iter()
        .zip(acc)
        .map(|((method, split_fraction, gamma), a)| {
            let power = a.size_sum / r;
            let var = if scenario.replicates > 1 {
                ((a.size_sq_sum - r * power * power) / (r - 1.0)).max(0.0)
            } else {
                0.0
            };
            let error_rate = a.errors as f64 / r;
            MetricsRow {
                method,
                split_fraction,
                gamma,
                replicates: scenario.replicates,
                power,
                power_se: (var / r).sqrt(),
                error_rate,
                error_se: (error_rate * (1.0 - error_rate) / r).sqrt(),
                failures: a.failures,
            }
        })
        .collect();
    Ok(MetricsTable {
        scenario: scenario.name.clone(),
        rows,
    })
}

/// `E|X|` for `X ~ N(mu, sd²)`.
pub fn folded_normal_mean(mu: f64, sd: f64) -> f64 {
    if sd == 0.0 {
        return mu.abs();
    }
    let z = mu / sd;
    sd * (2.0 / std::f64::consts::PI).sqrt() * (-0.5 * z * z).exp() + mu * (1.0 - 2.0 * normal::cdf(-z))
}

/// Population design sensitivity of the comparison `r_i` versus `r_j` under
/// the scenario's nested rules (∞ when the signed differences are almost
/// surely positive, 1 when their mean is not positive).
pub fn population_design_sensitivity(scenario: &SimulationScenario, rule_i: usize, rule_j: usize) -> f64 {
    let (lo, hi, sign) = if rule_i < rule_j {
        (rule_i, rule_j, 1.0)
    } else {
        (rule_j, rule_i, -1.0)
    };
    let cohorts = &scenario.cohort_means[lo..hi];
    if cohorts.is_empty() {
        return 1.0;
    }
    let c = cohorts.len() as f64;
    let ed = sign * cohorts.iter().sum::<f64>() / c;
    let ea = cohorts
        .iter()
        .map(|&m| folded_normal_mean(m, scenario.noise_sd))
        .sum::<f64>()
        / c;
    if ed <= 0.0 {
        1.0
    } else if ed >= ea {
        f64::INFINITY
    } else {
        (ea + ed) / (ea - ed)
    }
}

/// Relations `(i, j)` whose population design sensitivity exceeds Γ.
pub fn population_order(scenario: &SimulationScenario, gamma: f64) -> BTreeSet<(usize, usize)> {
    let k = scenario.cohort_count();
    (0..=k)
        .flat_map(|i| (0..=k).filter(move |&j| j != i).map(move |j| (i, j)))
        .filter(|&(i, j)| population_design_sensitivity(scenario, i, j) > gamma)
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn scenario(means: Vec<f64>, size: usize, sd: f64) -> SimulationScenario {
        let k = means.len();
        SimulationScenario {
            name: "t".into(),
            cohort_means: means,
            cohort_size: size,
            noise_sd: sd,
            gamma_grid: vec![1.0],
            alpha: 0.05,
            delta: 0.0,
            methods: vec![Method::Bonferroni],
            split_fractions: vec![0.5],
            replicates: 4,
            seed: 9,
            goal: Goal::Positive,
            true_sets: vec![TrueSet {
                gamma: 1.0,
                rules: (1..=k).collect(),
            }],
        }
    }

    #[test]
    fn degenerate_noise_gives_constant_differences() {
        let s = generate_replicate(&scenario(vec![0.5], 4, 0.0), 0);
        assert_eq!(s.differences(), &[0.5; 4]);
        assert_eq!(s.rule_count(), 2);
    }

    #[test]
    fn dimensions_and_nesting() {
        let sc = scenario(vec![0.5, 0.25, 0.25, 0.15, 0.05], 250, 1.0);
        let s = generate_replicate(&sc, 3);
        assert_eq!((s.len(), s.rule_count()), (1250, 6));
        for p in [0, 249, 250, 999, 1249] {
            let cohort = p / 250;
            for r in 0..6 {
                assert_eq!(s.decision(p, r), r > cohort);
            }
        }
    }

    #[test]
    fn replicates_are_reproducible_and_distinct() {
        let sc = scenario(vec![0.5, 0.2], 20, 1.0);
        assert_eq!(generate_replicate(&sc, 5), generate_replicate(&sc, 5));
        assert_ne!(generate_replicate(&sc, 5), generate_replicate(&sc, 6));
    }

    #[test]
    fn folded_normal_matches_limits() {
        assert!((folded_normal_mean(0.0, 1.0) - (2.0 / std::f64::consts::PI).sqrt()).abs() < 1e-15);
        assert!((folded_normal_mean(10.0, 1.0) - 10.0).abs() < 1e-12);
        assert!((folded_normal_mean(-10.0, 1.0) - 10.0).abs() < 1e-12);
    }

    #[test]
    fn first_cohort_design_sensitivity() {
        let sc = scenario(vec![0.5, 0.25], 10, 1.0);
        let ds = population_design_sensitivity(&sc, 0, 1);
        assert!((ds - 3.528).abs() < 1e-3, "{ds}");
        assert_eq!(population_design_sensitivity(&sc, 1, 0), 1.0);
        let order = population_order(&sc, 3.0);
        assert!(order.contains(&(0, 1)) && !order.contains(&(1, 0)));
    }

    #[test]
    fn validation_catches_missing_truth() {
        let mut sc = scenario(vec![0.5], 10, 1.0);
        sc.gamma_grid.push(2.0);
        assert!(matches!(sc.validate(), Err(Error::Config(_))));
        let mut sc = scenario(vec![0.5], 10, 1.0);
        sc.replicates = 0;
        assert!(sc.validate().is_err());
    }

    #[test]
    fn strong_effects_are_found() {
        let mut sc = scenario(vec![2.0, 2.0], 50, 0.5);
        sc.methods = vec![Method::Bonferroni, Method::PowerOrdered];
        let t = run_scenario(&sc, 1).unwrap();
        assert_eq!(t.rows.len(), 2);
        for r in &t.rows {
            assert_eq!(r.power, 2.0);
            assert_eq!(r.error_rate, 0.0);
            assert_eq!(r.failures, 0);
        }
        assert!(t.to_tsv().starts_with("method\tsplit\tgamma"));
    }
}
