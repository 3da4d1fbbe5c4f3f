//! Comparing, ranking and selecting treatment rules from matched pairs under
//! Rosenbaum's Γ sensitivity model.
//!
//! A rule comparison reduces to the signed pair differences where the two
//! rules disagree; the studentized sensitivity test on those decides whether
//! one rule dominates the other at a given Γ. Families of such tests are
//! combined by Bonferroni or by split-sample fixed-sequence testing to build
//! an order set, from which maximal and positive rules are read off.

pub mod dominance;
pub mod error;
pub mod io;
pub mod model;
pub mod normal;
pub mod partial_order;
pub mod selection;
pub mod sensitivity;
pub mod sim;

pub use dominance::{adjusted_differences, fogarty_statistic, test_dominance, test_frame, Studentized, TestResult};
pub use error::{Error, Result};
pub use model::{build_comparison_frame, ComparisonFrame, PairedSample, SensitivityParams};
pub use partial_order::{hasse_edges, leaves, to_dot, transitive_closure, HasseDiagram, OrderSet};
pub use selection::{
    bonferroni_test, fixed_sequence_test, order_hypotheses, prune_for_max, run_selection, select_maximal,
    select_positive, split_sample, Goal, Hypothesis, Method, OrderingMode, SelectionPlan, SelectionResult,
};
pub use sensitivity::{
    amplify, approx_power, asymptotic_params, gamma_to_kappa, kappa_to_gamma, moment_summary, sensitivity_value,
    AsymptoticParams, MomentSummary, SensitivityValue,
};
pub use sim::{generate_replicate, run_scenario, MetricsTable, SimulationScenario};
