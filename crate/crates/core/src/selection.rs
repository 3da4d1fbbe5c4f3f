//! Multiple-testing procedures over families of dominance hypotheses.
//!
//! Two engines are provided: Bonferroni on the full sample, and split-sample
//! fixed-sequence testing where a planning part orders the hypotheses (by
//! approximate power or by estimated value) and the remaining testing part
//! tests them at full level until the first non-rejection.

use std::collections::{BTreeSet, HashMap};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::dominance::test_frame;
use crate::error::{Error, Result};
use crate::model::{build_comparison_frame, ComparisonFrame, PairedSample, SensitivityParams};
use crate::partial_order::{leaves, OrderSet};
use crate::sensitivity::{approx_power, asymptotic_params, MomentSummary};

/// `H: r_from ⊀_{Γ,margin} r_to`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Hypothesis {
    pub from_rule: usize,
    pub to_rule: usize,
    pub margin: f64,
}

impl Hypothesis {
    pub fn new(from_rule: usize, to_rule: usize, margin: f64) -> Self {
        Self {
            from_rule,
            to_rule,
            margin,
        }
    }

    fn key(&self) -> (usize, usize) {
        (self.from_rule, self.to_rule)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Bonferroni,
    #[serde(alias = "power")]
    PowerOrdered,
    #[serde(alias = "value")]
    ValueOrdered,
}

impl Method {
    pub fn name(&self) -> &'static str {
        match self {
            Method::Bonferroni => "bonferroni",
            Method::PowerOrdered => "power_ordered",
            Method::ValueOrdered => "value_ordered",
        }
    }

    pub fn uses_split(&self) -> bool {
        !matches!(self, Method::Bonferroni)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Goal {
    Order,
    Maximal,
    Positive,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OrderingMode {
    Power,
    Value,
}

/// How a family of hypotheses is tested.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SelectionPlan {
    pub method: Method,
    /// Fraction of pairs used for planning (ordered methods only).
    pub split_fraction: f64,
    pub seed: u64,
    pub goal: Goal,
}

/// The hypothesis family for a goal: every ordered pair of distinct rules for
/// ordering and maximal selection, `H_{0k}` against the control otherwise.
pub fn hypothesis_family(goal: Goal, rule_count: usize, control: usize, margin: f64) -> Vec<Hypothesis> {
    match goal {
        Goal::Order | Goal::Maximal => (0..rule_count)
            .flat_map(|i| (0..rule_count).filter(move |&j| j != i).map(move |j| (i, j)))
            .map(|(i, j)| Hypothesis::new(i, j, margin))
            .collect(),
        Goal::Positive => (0..rule_count)
            .filter(|&k| k != control)
            .map(|k| Hypothesis::new(control, k, margin))
            .collect(),
    }
}

/// Random disjoint planning/testing partition. Planning receives
/// `round(fraction · n)` pairs (at least one, leaving at least one for
/// testing); both parts keep the original pair order.
pub fn split_sample(
    sample: &PairedSample,
    fraction: f64,
    seed: u64,
) -> Result<(PairedSample, PairedSample)> {
    if !(fraction > 0.0 && fraction < 1.0) {
        return Err(Error::InvalidFraction(fraction));
    }
    let n = sample.len();
    if n < 2 {
        return Err(Error::TooFewPairs { needed: 2, got: n });
    }
    let planning_size = ((fraction * n as f64).round() as usize).clamp(1, n - 1);
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let (plan, test) = idx.split_at_mut(planning_size);
    plan.sort_unstable();
    test.sort_unstable();
    Ok((sample.subset(plan), sample.subset(test)))
}

/// A hypothesis with the score used to place it in the testing sequence.
/// `score` is `None` when the planning data could not estimate it.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct OrderedHypothesis {
    pub hypothesis: Hypothesis,
    pub score: Option<f64>,
}

#[derive(Debug, Clone)]
struct Estimate {
    disagreement_fraction: f64,
    shifted_moments: MomentSummary,
    value: f64,
}

/// Per-hypothesis moment estimates from the planning part. They do not depend
/// on Γ, so one set serves a whole Γ grid.
#[derive(Debug, Clone)]
pub struct PlanningEstimates {
    hypotheses: Vec<Hypothesis>,
    estimates: Vec<Option<Estimate>>,
}

impl PlanningEstimates {
    pub fn new(planning: &PairedSample, hypotheses: &[Hypothesis]) -> Self {
        let estimates = hypotheses
            .iter()
            .map(|h| {
                let frame = build_comparison_frame(planning, h.from_rule, h.to_rule).ok()?;
                let m = frame.m();
                if m < 2 {
                    return None;
                }
                let shift = frame.margin_shift(h.margin);
                let shifted: Vec<f64> = frame.signed_d.iter().map(|x| x - shift).collect();
                let shifted_moments = MomentSummary::from_values(&shifted).ok()?;
                let mean = frame.signed_d.iter().sum::<f64>() / m as f64;
                let fraction = m as f64 / frame.n as f64;
                Some(Estimate {
                    disagreement_fraction: fraction,
                    shifted_moments,
                    value: mean * fraction,
                })
            })
            .collect();
        Self {
            hypotheses: hypotheses.to_vec(),
            estimates,
        }
    }

    /// Orders the hypotheses by estimated power (at Γ, on a testing part of
    /// `testing_count` pairs) or by the Γ = 1 estimated value difference,
    /// highest first. Ties go to the lexicographically smaller (i, j);
    /// hypotheses without an estimate go last.
    pub fn order(&self, gamma: f64, alpha: f64, testing_count: usize, mode: OrderingMode) -> Vec<OrderedHypothesis> {
        let mut out: Vec<OrderedHypothesis> = self
            .hypotheses
            .iter()
            .zip(&self.estimates)
            .map(|(h, e)| OrderedHypothesis {
                hypothesis: *h,
                score: e.as_ref().and_then(|e| match mode {
                    OrderingMode::Value => Some(e.value),
                    OrderingMode::Power => {
                        let params = asymptotic_params(&e.shifted_moments).ok()?;
                        let count = (e.disagreement_fraction * testing_count as f64).round().max(1.0);
                        approx_power(&params, count as usize, gamma, alpha).ok()
                    }
                }),
            })
            .collect();
        out.sort_by(|a, b| match (a.score, b.score) {
            (Some(x), Some(y)) => y.total_cmp(&x).then(a.hypothesis.key().cmp(&b.hypothesis.key())),
            (Some(_), None) => std::cmp::Ordering::Less,
            (None, Some(_)) => std::cmp::Ordering::Greater,
            (None, None) => a.hypothesis.key().cmp(&b.hypothesis.key()),
        });
        out
    }
}

pub fn order_hypotheses(
    planning: &PairedSample,
    hypotheses: &[Hypothesis],
    gamma: f64,
    alpha: f64,
    testing_count: usize,
    mode: OrderingMode,
) -> Result<Vec<OrderedHypothesis>> {
    if planning.is_empty() {
        return Err(Error::TooFewPairs { needed: 1, got: 0 });
    }
    Ok(PlanningEstimates::new(planning, hypotheses).order(gamma, alpha, testing_count, mode))
}

/// Keeps only the first hypothesis for each source rule: once `r_i` is shown
/// to be dominated by anything it cannot be maximal.
pub fn prune_for_max(ordered: &[Hypothesis]) -> Vec<Hypothesis> {
    let mut seen = BTreeSet::new();
    ordered
        .iter()
        .filter(|h| seen.insert(h.from_rule))
        .copied()
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum RecordStatus {
    Tested,
    /// The comparison could not be tested (identical rules, too few pairs,
    /// zero variance); counted as a non-rejection.
    Failed,
    /// Not reached by the fixed sequence.
    Skipped,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct HypothesisRecord {
    pub hypothesis: Hypothesis,
    pub order_score: Option<f64>,
    pub status: RecordStatus,
    pub statistic: Option<f64>,
    pub p_value: Option<f64>,
    pub level: f64,
    pub rejected: bool,
    pub error: Option<String>,
}

impl HypothesisRecord {
    fn skipped(h: Hypothesis, score: Option<f64>, level: f64) -> Self {
        Self {
            hypothesis: h,
            order_score: score,
            status: RecordStatus::Skipped,
            statistic: None,
            p_value: None,
            level,
            rejected: false,
            error: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SelectionResult {
    pub gamma: f64,
    pub method: Method,
    pub goal: Goal,
    pub rule_count: usize,
    /// Rejected hypotheses as (dominated, dominating) pairs.
    pub order_set: BTreeSet<(usize, usize)>,
    /// Maximal-rule set for the order/maximal goals, positive-rule set for
    /// the positive goal.
    pub selected: BTreeSet<usize>,
    pub records: Vec<HypothesisRecord>,
}

impl SelectionResult {
    pub fn order(&self) -> OrderSet {
        OrderSet::new(self.rule_count, self.order_set.iter().copied()).with_gamma(self.gamma)
    }

    fn finish(mut self, control: usize) -> Self {
        self.selected = match self.goal {
            Goal::Order | Goal::Maximal => select_maximal(&self, self.rule_count),
            Goal::Positive => self
                .order_set
                .iter()
                .filter(|(i, _)| *i == control)
                .map(|&(_, j)| j)
                .collect(),
        };
        self
    }
}

/// Comparison frames for a family on one sample, built once and reused
/// across Γ.
#[derive(Debug, Clone)]
pub struct FrameTable {
    frames: HashMap<(usize, usize), Result<ComparisonFrame>>,
}

impl FrameTable {
    pub fn new(sample: &PairedSample, hypotheses: &[Hypothesis]) -> Self {
        let frames = hypotheses
            .iter()
            .map(|h| (h.key(), build_comparison_frame(sample, h.from_rule, h.to_rule)))
            .collect();
        Self { frames }
    }

    fn test(&self, h: &Hypothesis, params: &SensitivityParams) -> Result<crate::dominance::TestResult> {
        let frame = self
            .frames
            .get(&h.key())
            .ok_or_else(|| Error::Config(format!("no frame for H{}{}", h.from_rule, h.to_rule)))?
            .as_ref()
            .map_err(Clone::clone)?;
        let p = SensitivityParams::new(params.gamma(), params.alpha(), h.margin)?;
        test_frame(frame, &p)
    }

    fn record(&self, h: Hypothesis, score: Option<f64>, params: &SensitivityParams) -> HypothesisRecord {
        match self.test(&h, params) {
            Ok(t) => HypothesisRecord {
                hypothesis: h,
                order_score: score,
                status: RecordStatus::Tested,
                statistic: Some(t.statistic),
                p_value: Some(t.p_value),
                level: params.alpha(),
                rejected: t.rejected,
                error: None,
            },
            Err(e) => HypothesisRecord {
                hypothesis: h,
                order_score: score,
                status: RecordStatus::Failed,
                statistic: None,
                p_value: None,
                level: params.alpha(),
                rejected: false,
                error: Some(e.to_string()),
            },
        }
    }
}

fn empty_result(params: &SensitivityParams, method: Method, goal: Goal, rule_count: usize) -> SelectionResult {
    SelectionResult {
        gamma: params.gamma(),
        method,
        goal,
        rule_count,
        order_set: BTreeSet::new(),
        selected: BTreeSet::new(),
        records: Vec::new(),
    }
}

fn run_fixed_sequence(
    frames: &FrameTable,
    ordered: &[OrderedHypothesis],
    params: &SensitivityParams,
    result: &mut SelectionResult,
) {
    let mut stopped = false;
    for oh in ordered {
        if stopped {
            result
                .records
                .push(HypothesisRecord::skipped(oh.hypothesis, oh.score, params.alpha()));
            continue;
        }
        let rec = frames.record(oh.hypothesis, oh.score, params);
        if rec.rejected {
            result.order_set.insert(oh.hypothesis.key());
        } else {
            stopped = true;
        }
        result.records.push(rec);
    }
}

fn run_bonferroni(
    frames: &FrameTable,
    hypotheses: &[Hypothesis],
    params: &SensitivityParams,
    result: &mut SelectionResult,
) -> Result<()> {
    if hypotheses.is_empty() {
        return Ok(());
    }
    let adjusted = params.with_alpha(params.alpha() / hypotheses.len() as f64)?;
    for h in hypotheses {
        let rec = frames.record(*h, None, &adjusted);
        if rec.rejected {
            result.order_set.insert(h.key());
        }
        result.records.push(rec);
    }
    Ok(())
}

/// Tests the hypotheses in the given order at full level α, stopping at the
/// first non-rejection. Untestable comparisons count as non-rejections.
pub fn fixed_sequence_test(
    testing: &PairedSample,
    ordered: &[Hypothesis],
    params: &SensitivityParams,
) -> SelectionResult {
    let frames = FrameTable::new(testing, ordered);
    let ordered: Vec<OrderedHypothesis> = ordered
        .iter()
        .map(|&hypothesis| OrderedHypothesis {
            hypothesis,
            score: None,
        })
        .collect();
    let mut result = empty_result(params, Method::PowerOrdered, Goal::Order, testing.rule_count());
    run_fixed_sequence(&frames, &ordered, params, &mut result);
    result.finish(testing.control())
}

/// Tests every hypothesis on the full sample at level α / |family|.
pub fn bonferroni_test(
    sample: &PairedSample,
    hypotheses: &[Hypothesis],
    params: &SensitivityParams,
) -> Result<SelectionResult> {
    let frames = FrameTable::new(sample, hypotheses);
    let mut result = empty_result(params, Method::Bonferroni, Goal::Order, sample.rule_count());
    run_bonferroni(&frames, hypotheses, params, &mut result)?;
    Ok(result.finish(sample.control()))
}

/// Rules with no rejected hypothesis `H_{ij}` for any j.
pub fn select_maximal(result: &SelectionResult, rule_count: usize) -> BTreeSet<usize> {
    leaves(&result.order(), rule_count)
}

/// Everything that can be prepared once for a sample and reused across a Γ
/// grid: the split, the planning estimates and the comparison frames.
#[derive(Debug, Clone)]
pub struct SelectionSession {
    plan: SelectionPlan,
    hypotheses: Vec<Hypothesis>,
    rule_count: usize,
    control: usize,
    testing_count: usize,
    estimates: Option<PlanningEstimates>,
    frames: FrameTable,
}

impl SelectionSession {
    pub fn new(sample: &PairedSample, plan: SelectionPlan, delta: f64) -> Result<Self> {
        let hypotheses = hypothesis_family(plan.goal, sample.rule_count(), sample.control(), delta);
        if hypotheses.is_empty() {
            return Err(Error::Config("sample has a single rule; nothing to compare".into()));
        }
        let (estimates, frames, testing_count) = if plan.method.uses_split() {
            let (planning, testing) = split_sample(sample, plan.split_fraction, plan.seed)?;
            (
                Some(PlanningEstimates::new(&planning, &hypotheses)),
                FrameTable::new(&testing, &hypotheses),
                testing.len(),
            )
        } else {
            (None, FrameTable::new(sample, &hypotheses), sample.len())
        };
        Ok(Self {
            plan,
            hypotheses,
            rule_count: sample.rule_count(),
            control: sample.control(),
            testing_count,
            estimates,
            frames,
        })
    }

    pub fn run(&self, params: &SensitivityParams) -> Result<SelectionResult> {
        let mut result = empty_result(params, self.plan.method, self.plan.goal, self.rule_count);
        match (&self.estimates, self.plan.method) {
            (Some(est), Method::PowerOrdered | Method::ValueOrdered) => {
                let mode = if self.plan.method == Method::PowerOrdered {
                    OrderingMode::Power
                } else {
                    OrderingMode::Value
                };
                let mut ordered = est.order(params.gamma(), params.alpha(), self.testing_count, mode);
                if self.plan.goal == Goal::Maximal {
                    let kept: Vec<Hypothesis> =
                        prune_for_max(&ordered.iter().map(|o| o.hypothesis).collect::<Vec<_>>());
                    let mut it = kept.iter().peekable();
                    ordered.retain(|o| {
                        if it.peek().is_some_and(|h| h.key() == o.hypothesis.key()) {
                            it.next();
                            true
                        } else {
                            false
                        }
                    });
                }
                run_fixed_sequence(&self.frames, &ordered, params, &mut result);
            }
            _ => run_bonferroni(&self.frames, &self.hypotheses, params, &mut result)?,
        }
        Ok(result.finish(self.control))
    }
}

/// Runs the planned procedure at one Γ.
pub fn run_selection(sample: &PairedSample, params: &SensitivityParams, plan: &SelectionPlan) -> Result<SelectionResult> {
    SelectionSession::new(sample, *plan, params.delta())?.run(params)
}

/// Rules shown to dominate the control (by margin δ).
pub fn select_positive(
    sample: &PairedSample,
    params: &SensitivityParams,
    plan: &SelectionPlan,
) -> Result<BTreeSet<usize>> {
    let plan = SelectionPlan {
        goal: Goal::Positive,
        ..*plan
    };
    Ok(run_selection(sample, params, &plan)?.selected)
}
