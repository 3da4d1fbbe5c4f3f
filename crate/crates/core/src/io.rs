//! Pairs files, a greedy exact-key matcher and JSON reports.
//!
//! Pairs CSV schema: header `pair_id,d,rule_0,...,rule_K`, one matched pair
//! per row, `d` the treated-minus-control outcome and each `rule_k` cell the
//! 0/1 decision of rule k at the pair's covariates.

use std::collections::{BTreeMap, HashSet};
use std::io::{Read, Write};
use std::path::Path;

use serde_json::{Map, Number, Value};

use crate::dominance::TestResult;
use crate::error::{Error, Result};
use crate::model::PairedSample;
use crate::partial_order::{hasse_edges, transitive_closure};
use crate::selection::{Goal, HypothesisRecord, RecordStatus, SelectionResult};
use crate::sensitivity::{AsymptoticParams, Regime, SensitivityValue};
use crate::sim::MetricsTable;

pub const REPORT_SCHEMA: &str = "rulerank-report/1";

fn csv_error(e: csv::Error) -> Error {
    let row = e.position().map_or(0, |p| p.record() as usize);
    Error::Parse {
        row,
        column: String::new(),
        message: e.to_string(),
    }
}

/// Reads a pairs file. Rows are numbered from 1 (the first data row) in
/// error messages.
pub fn read_pairs<R: Read>(reader: R) -> Result<PairedSample> {
    let mut rdr = csv::ReaderBuilder::new()
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(reader);
    let header = rdr.headers().map_err(csv_error)?.clone();
    if header.len() < 3 || &header[0] != "pair_id" || &header[1] != "d" {
        return Err(Error::Parse {
            row: 0,
            column: header.iter().take(2).collect::<Vec<_>>().join(","),
            message: "header must start with pair_id,d followed by rule columns".into(),
        });
    }
    for (k, name) in header.iter().skip(2).enumerate() {
        if name != format!("rule_{k}") {
            return Err(Error::Parse {
                row: 0,
                column: name.to_string(),
                message: format!("expected rule_{k}"),
            });
        }
    }
    let width = header.len();
    let mut ids = Vec::new();
    let mut d = Vec::new();
    let mut rules = Vec::new();
    let mut seen = HashSet::new();
    for (i, rec) in rdr.records().enumerate() {
        let row = i + 1;
        let rec = rec.map_err(csv_error)?;
        let cell = |c: usize| -> Result<&str> {
            match rec.get(c) {
                Some(s) if !s.is_empty() => Ok(s),
                _ => Err(Error::Parse {
                    row,
                    column: header[c].to_string(),
                    message: "missing value".into(),
                }),
            }
        };
        if rec.len() > width {
            return Err(Error::Parse {
                row,
                column: String::new(),
                message: format!("{} fields, header has {width}", rec.len()),
            });
        }
        let id = cell(0)?.to_string();
        let value: f64 = cell(1)?.parse().map_err(|e| Error::Parse {
            row,
            column: "d".into(),
            message: format!("{e}"),
        })?;
        if !value.is_finite() {
            return Err(Error::Validation {
                row,
                message: "d is not finite".into(),
            });
        }
        let mut decisions = Vec::with_capacity(width - 2);
        for c in 2..width {
            match cell(c)? {
                "0" => decisions.push(false),
                "1" => decisions.push(true),
                other => {
                    return Err(Error::Validation {
                        row,
                        message: format!("{} must be 0 or 1, found {other:?}", &header[c]),
                    })
                }
            }
        }
        if !seen.insert(id.clone()) {
            return Err(Error::Validation {
                row,
                message: format!("duplicate pair_id {id:?}"),
            });
        }
        ids.push(id);
        d.push(value);
        rules.push(decisions);
    }
    if d.len() < 2 {
        return Err(Error::TooFewPairs { needed: 2, got: d.len() });
    }
    PairedSample::new(ids, d, rules)
}

pub fn load_pairs(path: impl AsRef<Path>) -> Result<PairedSample> {
    let path = path.as_ref();
    let file = std::fs::File::open(path).map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
    read_pairs(std::io::BufReader::new(file))
}

/// Writes a pairs file. Differences use the shortest representation that
/// parses back to the same `f64`.
pub fn write_pairs<W: Write>(sample: &PairedSample, writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    let mut header = vec!["pair_id".to_string(), "d".to_string()];
    header.extend((0..sample.rule_count()).map(|k| format!("rule_{k}")));
    w.write_record(&header).map_err(csv_error)?;
    for p in 0..sample.len() {
        let mut row = vec![sample.pair_ids()[p].clone(), format!("{:?}", sample.differences()[p])];
        row.extend(sample.decisions_of(p).iter().map(|&b| if b { "1" } else { "0" }.to_string()));
        w.write_record(&row).map_err(csv_error)?;
    }
    w.flush()?;
    Ok(())
}

pub fn save_pairs(sample: &PairedSample, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let file = std::fs::File::create(path).map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
    write_pairs(sample, std::io::BufWriter::new(file))
}

/// A unit left without a partner by [`match_pairs`]. `row` counts data rows
/// from 1.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct UnmatchedUnit {
    pub row: usize,
    pub treated: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MatchOutcome {
    pub sample: PairedSample,
    pub unmatched: Vec<UnmatchedUnit>,
}

/// Greedy exact matching on the key columns. Within each key stratum the
/// treated and control units are paired in file order until one side runs
/// out. Every column named `rule_k` is carried over as a rule decision; the
/// two units of a pair must agree on it since rules act on the shared
/// covariates. Pair ids are `t<row>-c<row>`.
pub fn match_pairs<R: Read>(
    units: R,
    keys: &[String],
    treatment_col: &str,
    outcome_col: &str,
) -> Result<MatchOutcome> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(units);
    let header = rdr.headers().map_err(csv_error)?.clone();
    let find = |name: &str| {
        header
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| Error::Config(format!("column {name:?} not found")))
    };
    let key_idx = keys.iter().map(|k| find(k)).collect::<Result<Vec<_>>>()?;
    let treat_idx = find(treatment_col)?;
    let outcome_idx = find(outcome_col)?;
    let mut rule_idx = Vec::new();
    while let Some(p) = header.iter().position(|h| h == format!("rule_{}", rule_idx.len())) {
        rule_idx.push(p);
    }
    if rule_idx.is_empty() {
        return Err(Error::Config("units file has no rule_0 column".into()));
    }

    struct Unit {
        row: usize,
        outcome: f64,
        rules: Vec<bool>,
    }
    // stratum key -> (treated, controls), strata in first-seen order
    let mut strata: BTreeMap<usize, (Vec<Unit>, Vec<Unit>)> = BTreeMap::new();
    let mut stratum_of: std::collections::HashMap<Vec<String>, usize> = Default::default();
    for (i, rec) in rdr.records().enumerate() {
        let row = i + 1;
        let rec = rec.map_err(csv_error)?;
        let treated = match &rec[treat_idx] {
            "1" => true,
            "0" => false,
            other => {
                return Err(Error::Validation {
                    row,
                    message: format!("{treatment_col} must be 0 or 1, found {other:?}"),
                })
            }
        };
        let outcome: f64 = rec[outcome_idx].parse().map_err(|e| Error::Parse {
            row,
            column: outcome_col.to_string(),
            message: format!("{e}"),
        })?;
        let rules = rule_idx
            .iter()
            .map(|&c| match &rec[c] {
                "1" => Ok(true),
                "0" => Ok(false),
                other => Err(Error::Validation {
                    row,
                    message: format!("{} must be 0 or 1, found {other:?}", &header[c]),
                }),
            })
            .collect::<Result<Vec<_>>>()?;
        let key: Vec<String> = key_idx.iter().map(|&c| rec[c].to_string()).collect();
        let next = stratum_of.len();
        let s = *stratum_of.entry(key).or_insert(next);
        let entry = strata.entry(s).or_default();
        let unit = Unit { row, outcome, rules };
        if treated {
            entry.0.push(unit);
        } else {
            entry.1.push(unit);
        }
    }

    let mut ids = Vec::new();
    let mut d = Vec::new();
    let mut rules = Vec::new();
    let mut unmatched = Vec::new();
    for (treated, controls) in strata.into_values() {
        let k = treated.len().min(controls.len());
        for (t, c) in treated.iter().zip(&controls) {
            if t.rules != c.rules {
                return Err(Error::Validation {
                    row: c.row,
                    message: format!("rule decisions differ from matched treated unit on row {}", t.row),
                });
            }
            ids.push(format!("t{}-c{}", t.row, c.row));
            d.push(t.outcome - c.outcome);
            rules.push(t.rules.clone());
        }
        unmatched.extend(treated[k..].iter().map(|u| UnmatchedUnit { row: u.row, treated: true }));
        unmatched.extend(controls[k..].iter().map(|u| UnmatchedUnit { row: u.row, treated: false }));
    }
    if d.is_empty() {
        return Err(Error::NoMatches);
    }
    unmatched.sort_by_key(|u| u.row);
    Ok(MatchOutcome {
        sample: PairedSample::new(ids, d, rules)?,
        unmatched,
    })
}

/// A JSON number with 17 significant digits; non-finite values become the
/// strings `"inf"`, `"-inf"` and `"nan"`.
pub fn num(x: f64) -> Value {
    if x.is_nan() {
        return Value::String("nan".into());
    }
    if x.is_infinite() {
        return Value::String(if x > 0.0 { "inf" } else { "-inf" }.into());
    }
    let text = format!("{x:.16e}");
    Value::Number(text.parse::<Number>().expect("formatted float is a JSON number"))
}

fn opt_num(x: Option<f64>) -> Value {
    x.map_or(Value::Null, num)
}

fn pair_list(pairs: impl IntoIterator<Item = (usize, usize)>) -> Value {
    Value::Array(pairs.into_iter().map(|(i, j)| Value::from(vec![i, j])).collect())
}

pub fn test_result_json(t: &TestResult) -> Value {
    let mut m = Map::new();
    m.insert("rule_pair".into(), Value::from(vec![t.rule_pair.0, t.rule_pair.1]));
    m.insert("gamma".into(), num(t.gamma));
    m.insert("delta".into(), num(t.delta));
    m.insert("statistic".into(), num(t.statistic));
    m.insert("p_value".into(), num(t.p_value));
    m.insert("level".into(), num(t.level));
    m.insert("rejected".into(), Value::Bool(t.rejected));
    m.insert("m".into(), Value::from(t.m));
    m.insert("shifted_margin".into(), num(t.shifted_margin));
    Value::Object(m)
}

fn record_json(r: &HypothesisRecord) -> Value {
    let status = match r.status {
        RecordStatus::Tested => "tested",
        RecordStatus::Failed => "failed",
        RecordStatus::Skipped => "skipped",
    };
    let mut m = Map::new();
    m.insert("from".into(), Value::from(r.hypothesis.from_rule));
    m.insert("to".into(), Value::from(r.hypothesis.to_rule));
    m.insert("margin".into(), num(r.hypothesis.margin));
    m.insert("order_score".into(), opt_num(r.order_score));
    m.insert("status".into(), Value::from(status));
    m.insert("statistic".into(), opt_num(r.statistic));
    m.insert("p_value".into(), opt_num(r.p_value));
    m.insert("level".into(), num(r.level));
    m.insert("rejected".into(), Value::Bool(r.rejected));
    m.insert("error".into(), r.error.clone().map_or(Value::Null, Value::from));
    Value::Object(m)
}

/// One analysis block: the records, the order set, its closure and Hasse
/// edges, and the derived rule set.
pub fn selection_json(r: &SelectionResult) -> Result<Value> {
    let order = r.order();
    let closure = transitive_closure(&order)?;
    let hasse = hasse_edges(&order)?;
    let mut m = Map::new();
    m.insert("gamma".into(), num(r.gamma));
    m.insert("method".into(), Value::from(r.method.name()));
    m.insert("order_set".into(), pair_list(r.order_set.iter().copied()));
    m.insert("closure".into(), pair_list(closure.relations));
    m.insert("hasse_edges".into(), pair_list(hasse.edges));
    let set_name = match r.goal {
        Goal::Positive => "positive_set",
        Goal::Order | Goal::Maximal => "maximal_set",
    };
    m.insert(set_name.into(), Value::from(r.selected.iter().copied().collect::<Vec<_>>()));
    m.insert("records".into(), Value::Array(r.records.iter().map(record_json).collect()));
    Ok(Value::Object(m))
}

pub fn sensitivity_json(
    rule_pair: (usize, usize),
    m: usize,
    value: &SensitivityValue,
    asymptotics: Option<&AsymptoticParams>,
) -> Value {
    let mut o = Map::new();
    o.insert("rule_pair".into(), Value::from(vec![rule_pair.0, rule_pair.1]));
    o.insert("m".into(), Value::from(m));
    o.insert("gamma_star".into(), num(value.gamma));
    o.insert("kappa_star".into(), num(value.kappa));
    if let Some(a) = asymptotics {
        o.insert("kappa_limit".into(), num(a.kappa_limit));
        o.insert("design_sensitivity".into(), num(a.design_sensitivity));
        o.insert(
            "regime".into(),
            Value::from(match a.regime {
                Regime::PositiveMean => "positive_mean",
                Regime::NonPositiveMean => "non_positive_mean",
            }),
        );
    }
    Value::Object(o)
}

pub fn metrics_json(t: &MetricsTable) -> Value {
    let rows = t
        .rows
        .iter()
        .map(|r| {
            let mut m = Map::new();
            m.insert("method".into(), Value::from(r.method.name()));
            m.insert("split_fraction".into(), opt_num(r.split_fraction));
            m.insert("gamma".into(), num(r.gamma));
            m.insert("replicates".into(), Value::from(r.replicates));
            m.insert("power".into(), num(r.power));
            m.insert("power_se".into(), num(r.power_se));
            m.insert("error_rate".into(), num(r.error_rate));
            m.insert("error_se".into(), num(r.error_se));
            m.insert("failures".into(), Value::from(r.failures));
            Value::Object(m)
        })
        .collect();
    let mut o = Map::new();
    o.insert("scenario".into(), Value::from(t.scenario.clone()));
    o.insert("rows".into(), Value::Array(rows));
    Value::Object(o)
}

/// Top-level report: schema tag, tool version, the command, a config echo and
/// one block per analysis.
#[derive(Debug, Clone, PartialEq)]
pub struct ReportDocument {
    pub command: String,
    pub config: Map<String, Value>,
    pub analyses: Vec<Value>,
}

impl ReportDocument {
    pub fn new(command: &str) -> Self {
        Self {
            command: command.to_string(),
            config: Map::new(),
            analyses: Vec::new(),
        }
    }

    pub fn set(&mut self, key: &str, value: Value) -> &mut Self {
        self.config.insert(key.to_string(), value);
        self
    }

    pub fn to_value(&self) -> Value {
        let mut o = Map::new();
        o.insert("schema".into(), Value::from(REPORT_SCHEMA));
        o.insert("version".into(), Value::from(env!("CARGO_PKG_VERSION")));
        o.insert("command".into(), Value::from(self.command.clone()));
        o.insert("config".into(), Value::Object(self.config.clone()));
        o.insert("analyses".into(), Value::Array(self.analyses.clone()));
        Value::Object(o)
    }

    pub fn to_json_string(&self) -> String {
        let mut s = serde_json::to_string_pretty(&self.to_value()).expect("report serializes");
        s.push('\n');
        s
    }
}
