//! Established dominance relations between rules: closure, Hasse diagram,
//! maximal elements and DOT export.
//!
//! A relation `(i, j)` means rule `i` is dominated by rule `j` (`r_i ≺ r_j`).
//! Rule counts are small, so reachability is computed on a dense matrix.

use std::collections::BTreeSet;
use std::fmt::Write as _;

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct OrderSet {
    pub relations: BTreeSet<(usize, usize)>,
    pub rule_labels: Vec<String>,
    pub gamma: Option<f64>,
}

impl OrderSet {
    /// Relations over rules labelled `r0, r1, …`.
    pub fn new(rule_count: usize, relations: impl IntoIterator<Item = (usize, usize)>) -> Self {
        Self {
            relations: relations.into_iter().collect(),
            rule_labels: default_labels(rule_count),
            gamma: None,
        }
    }

    pub fn with_gamma(mut self, gamma: f64) -> Self {
        self.gamma = Some(gamma);
        self
    }

    pub fn rule_count(&self) -> usize {
        self.rule_labels.len()
    }

    fn validate(&self) -> Result<()> {
        let n = self.rule_count();
        for &(i, j) in &self.relations {
            if i == j {
                return Err(Error::CycleDetected(i));
            }
            if i >= n || j >= n {
                return Err(Error::InvalidRule {
                    index: i.max(j),
                    count: n,
                });
            }
        }
        Ok(())
    }

    fn reachability(&self) -> Result<Vec<Vec<bool>>> {
        self.validate()?;
        let n = self.rule_count();
        let mut reach = vec![vec![false; n]; n];
        for &(i, j) in &self.relations {
            reach[i][j] = true;
        }
        for k in 0..n {
            for i in 0..n {
                if reach[i][k] {
                    for j in 0..n {
                        if reach[k][j] {
                            reach[i][j] = true;
                        }
                    }
                }
            }
        }
        if let Some(i) = (0..n).find(|&i| reach[i][i]) {
            return Err(Error::CycleDetected(i));
        }
        Ok(reach)
    }
}

pub fn default_labels(rule_count: usize) -> Vec<String> {
    (0..rule_count).map(|k| format!("r{k}")).collect()
}

/// Adds every relation implied by a chain of established relations.
pub fn transitive_closure(o: &OrderSet) -> Result<OrderSet> {
    let reach = o.reachability()?;
    let n = o.rule_count();
    let relations = (0..n)
        .flat_map(|i| (0..n).map(move |j| (i, j)))
        .filter(|&(i, j)| reach[i][j])
        .collect();
    Ok(OrderSet {
        relations,
        rule_labels: o.rule_labels.clone(),
        gamma: o.gamma,
    })
}

/// Minimal edge set with the same closure, drawn upward from the dominated
/// rule to the dominating one.
#[derive(Debug, Clone, PartialEq)]
pub struct HasseDiagram {
    pub edges: BTreeSet<(usize, usize)>,
    pub nodes: Vec<String>,
    pub gamma: Option<f64>,
    /// Number of relations the diagram was built from.
    pub order_size: usize,
}

pub fn hasse_edges(o: &OrderSet) -> Result<HasseDiagram> {
    let reach = o.reachability()?;
    let n = o.rule_count();
    let mut edges = BTreeSet::new();
    for i in 0..n {
        for j in 0..n {
            if reach[i][j] && !(0..n).any(|k| reach[i][k] && reach[k][j]) {
                edges.insert((i, j));
            }
        }
    }
    Ok(HasseDiagram {
        edges,
        nodes: o.rule_labels.clone(),
        gamma: o.gamma,
        order_size: o.relations.len(),
    })
}

/// Rules that are not dominated by any rule in the set: the maximal elements,
/// i.e. the vertices with no upward edge in the Hasse diagram.
pub fn leaves(o: &OrderSet, rule_count: usize) -> BTreeSet<usize> {
    (0..rule_count)
        .filter(|&i| !o.relations.iter().any(|&(from, _)| from == i))
        .collect()
}

/// DOT description of the diagram. Output is sorted and byte-stable.
pub fn to_dot(h: &HasseDiagram) -> String {
    let mut out = String::new();
    out.push_str("digraph hasse {\n");
    out.push_str("  rankdir=BT;\n");
    let title = match h.gamma {
        Some(g) => format!("Gamma = {g}, |O| = {}", h.order_size),
        None => format!("|O| = {}", h.order_size),
    };
    let _ = writeln!(out, "  label=\"{}\";", escape(&title));
    for node in &h.nodes {
        let _ = writeln!(out, "  \"{}\";", escape(node));
    }
    for &(i, j) in &h.edges {
        let _ = writeln!(
            out,
            "  \"{}\" -> \"{}\";",
            escape(&h.nodes[i]),
            escape(&h.nodes[j])
        );
    }
    out.push_str("}\n");
    out
}

fn escape(s: &str) -> String {
    s.replace('\\', "\\\\").replace('"', "\\\"")
}
