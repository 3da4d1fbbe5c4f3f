use std::fs;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use log::{info, warn};
use serde_json::Value;

use rulerank::io::{self, num, ReportDocument};
use rulerank::selection::SelectionSession;
use rulerank::{
    amplify, asymptotic_params, build_comparison_frame, hasse_edges, moment_summary, sensitivity_value, test_frame,
    to_dot, Error, Goal, Method, PairedSample, Result, SelectionPlan, SensitivityParams, SimulationScenario,
};

#[derive(Parser)]
#[command(name = "rulerank", version, about = "Sensitivity analysis for comparing treatment rules on matched pairs")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Test whether one rule dominates another at each Γ.
    Compare(CompareArgs),
    /// Sensitivity value Γ* for one comparison, or for every ordered pair.
    Sensvalue(SensvalueArgs),
    /// Estimate the partial order of the rules.
    Rank(SelectArgs),
    /// Select the maximal rules.
    SelectMax(SelectArgs),
    /// Select the rules that dominate the control.
    SelectPos(SelectArgs),
    /// Run a simulation scenario and report power and error rate.
    Simulate(SimulateArgs),
    /// Δ paired with Λ on the amplification curve of Γ.
    Amplify(AmplifyArgs),
    /// Greedy exact matching of a units file into a pairs file.
    Match(MatchArgs),
}

#[derive(Args)]
struct DataArgs {
    /// Pairs CSV: pair_id,d,rule_0,...,rule_K
    #[arg(long)]
    pairs: PathBuf,
    /// Index of the control rule.
    #[arg(long, default_value_t = 0)]
    control: usize,
    #[arg(long, default_value_t = 0.05)]
    alpha: f64,
    /// Report path (JSON); standard output when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct CompareArgs {
    #[command(flatten)]
    data: DataArgs,
    #[arg(long)]
    from: usize,
    #[arg(long)]
    to: usize,
    #[arg(long, value_delimiter = ',', default_value = "1")]
    gamma: Vec<f64>,
    #[arg(long, default_value_t = 0.0)]
    delta: f64,
}

#[derive(Args)]
struct SensvalueArgs {
    #[command(flatten)]
    data: DataArgs,
    #[arg(long, requires = "to")]
    from: Option<usize>,
    #[arg(long, requires = "from")]
    to: Option<usize>,
}

#[derive(Clone, Copy, ValueEnum)]
enum MethodArg {
    Bonferroni,
    Power,
    Value,
}

impl From<MethodArg> for Method {
    fn from(m: MethodArg) -> Self {
        match m {
            MethodArg::Bonferroni => Method::Bonferroni,
            MethodArg::Power => Method::PowerOrdered,
            MethodArg::Value => Method::ValueOrdered,
        }
    }
}

#[derive(Args)]
struct SelectArgs {
    #[command(flatten)]
    data: DataArgs,
    #[arg(long, value_delimiter = ',', default_value = "1")]
    gamma: Vec<f64>,
    #[arg(long, default_value_t = 0.0)]
    delta: f64,
    #[arg(long, value_enum, default_value_t = MethodArg::Power)]
    method: MethodArg,
    /// Fraction of pairs used to order the hypotheses.
    #[arg(long, default_value_t = 0.5)]
    split: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Write the Hasse diagram of each Γ as DOT.
    #[arg(long)]
    dot: Option<PathBuf>,
}

#[derive(Args)]
struct SimulateArgs {
    #[arg(long)]
    scenario: PathBuf,
    /// Worker threads (0: one per core).
    #[arg(long, default_value_t = 0)]
    threads: usize,
    /// Metrics JSON path; standard output when neither this nor --tsv is given.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    tsv: Option<PathBuf>,
}

#[derive(Args)]
struct AmplifyArgs {
    #[arg(long, value_delimiter = ',', required = true)]
    gamma: Vec<f64>,
    #[arg(long)]
    lambda: f64,
}

#[derive(Args)]
struct MatchArgs {
    #[arg(long)]
    units: PathBuf,
    /// Columns that must agree exactly within a pair.
    #[arg(long, value_delimiter = ',', required = true)]
    keys: Vec<String>,
    #[arg(long)]
    treatment: String,
    #[arg(long)]
    outcome: String,
    /// Pairs CSV output.
    #[arg(long)]
    out: PathBuf,
}

fn load(data: &DataArgs) -> Result<PairedSample> {
    let sample = io::load_pairs(&data.pairs)?.with_control(data.control)?;
    info!("loaded {} pairs, {} rules", sample.len(), sample.rule_count());
    Ok(sample)
}

fn base_report(command: &str, data: &DataArgs, sample: &PairedSample) -> ReportDocument {
    let mut r = ReportDocument::new(command);
    r.set("pairs", Value::from(data.pairs.display().to_string()))
        .set("alpha", num(data.alpha))
        .set("control", Value::from(data.control))
        .set("n", Value::from(sample.len()))
        .set("rule_count", Value::from(sample.rule_count()));
    r
}

fn emit(text: &str, path: Option<&PathBuf>) -> Result<()> {
    match path {
        Some(p) => fs::write(p, text).map_err(|e| Error::Io(format!("{}: {e}", p.display()))),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn gamma_list(gammas: &[f64]) -> Value {
    Value::Array(gammas.iter().map(|&g| num(g)).collect())
}

fn compare(a: &CompareArgs) -> Result<()> {
    let sample = load(&a.data)?;
    let frame = build_comparison_frame(&sample, a.from, a.to)?;
    let mut report = base_report("compare", &a.data, &sample);
    report
        .set("gamma", gamma_list(&a.gamma))
        .set("delta", num(a.delta))
        .set("from", Value::from(a.from))
        .set("to", Value::from(a.to));
    for &g in &a.gamma {
        let params = SensitivityParams::new(g, a.data.alpha, a.delta)?;
        report.analyses.push(io::test_result_json(&test_frame(&frame, &params)?));
    }
    emit(&report.to_json_string(), a.data.out.as_ref())
}

fn sensvalue(a: &SensvalueArgs) -> Result<()> {
    let sample = load(&a.data)?;
    let mut report = base_report("sensvalue", &a.data, &sample);
    let pairs: Vec<(usize, usize)> = match (a.from, a.to) {
        (Some(i), Some(j)) => vec![(i, j)],
        _ => {
            let k = sample.rule_count();
            (0..k).flat_map(|i| (0..k).filter(move |&j| j != i).map(move |j| (i, j))).collect()
        }
    };
    let single = pairs.len() == 1;
    for (i, j) in pairs {
        let computed = build_comparison_frame(&sample, i, j).and_then(|frame| {
            let value = sensitivity_value(&frame, a.data.alpha)?;
            let asym = moment_summary(&frame).and_then(|m| asymptotic_params(&m)).ok();
            Ok(io::sensitivity_json((i, j), frame.m(), &value, asym.as_ref()))
        });
        match computed {
            Ok(v) => report.analyses.push(v),
            Err(e) if !single => {
                warn!("comparison ({i}, {j}): {e}");
                report.analyses.push(serde_json::json!({
                    "rule_pair": [i, j],
                    "error": e.to_string(),
                }));
            }
            Err(e) => return Err(e),
        }
    }
    emit(&report.to_json_string(), a.data.out.as_ref())
}

fn select(a: &SelectArgs, goal: Goal, command: &str) -> Result<()> {
    let sample = load(&a.data)?;
    let method = Method::from(a.method);
    let plan = SelectionPlan {
        method,
        split_fraction: a.split,
        seed: a.seed,
        goal,
    };
    let mut report = base_report(command, &a.data, &sample);
    report
        .set("gamma", gamma_list(&a.gamma))
        .set("delta", num(a.delta))
        .set("method", Value::from(method.name()))
        .set("split", if method.uses_split() { num(a.split) } else { Value::Null })
        .set("seed", Value::from(a.seed));
    // one split for the whole Γ grid
    let session = SelectionSession::new(&sample, plan, a.delta)?;
    let mut dot = String::new();
    for &g in &a.gamma {
        let params = SensitivityParams::new(g, a.data.alpha, a.delta)?;
        let result = session.run(&params)?;
        info!("gamma {g}: {} relations", result.order_set.len());
        report.analyses.push(io::selection_json(&result)?);
        if a.dot.is_some() {
            dot.push_str(&to_dot(&hasse_edges(&result.order())?));
        }
    }
    if let Some(p) = &a.dot {
        if goal == Goal::Positive {
            warn!("--dot is ignored for positive-rule selection");
        } else {
            emit(&dot, Some(p))?;
        }
    }
    emit(&report.to_json_string(), a.data.out.as_ref())
}

fn simulate(a: &SimulateArgs) -> Result<()> {
    let text = fs::read_to_string(&a.scenario).map_err(|e| Error::Io(format!("{}: {e}", a.scenario.display())))?;
    let scenario = SimulationScenario::from_json(&text)?;
    info!("scenario {:?}: {} replicates", scenario.name, scenario.replicates);
    let table = rulerank::run_scenario(&scenario, a.threads)?;
    let mut json = serde_json::to_string_pretty(&io::metrics_json(&table)).expect("metrics serialize");
    json.push('\n');
    if let Some(p) = &a.tsv {
        emit(&table.to_tsv(), Some(p))?;
    }
    match (&a.out, &a.tsv) {
        (Some(p), _) => emit(&json, Some(p)),
        (None, Some(_)) => Ok(()),
        (None, None) => emit(&table.to_tsv(), None),
    }
}

fn amplify_cmd(a: &AmplifyArgs) -> Result<()> {
    for &g in &a.gamma {
        let delta = amplify(g, a.lambda)?;
        println!("Γ={g} Λ={} Δ={delta}", a.lambda);
    }
    Ok(())
}

fn match_cmd(a: &MatchArgs) -> Result<()> {
    let file = fs::File::open(&a.units).map_err(|e| Error::Io(format!("{}: {e}", a.units.display())))?;
    let out = io::match_pairs(std::io::BufReader::new(file), &a.keys, &a.treatment, &a.outcome)?;
    for u in &out.unmatched {
        eprintln!("unmatched {} unit on row {}", if u.treated { "treated" } else { "control" }, u.row);
    }
    eprintln!("{} pairs, {} unmatched units", out.sample.len(), out.unmatched.len());
    io::save_pairs(&out.sample, &a.out)
}

fn run(cli: &Cli) -> Result<()> {
    match &cli.command {
        Command::Compare(a) => compare(a),
        Command::Sensvalue(a) => sensvalue(a),
        Command::Rank(a) => select(a, Goal::Order, "rank"),
        Command::SelectMax(a) => select(a, Goal::Maximal, "select-max"),
        Command::SelectPos(a) => select(a, Goal::Positive, "select-pos"),
        Command::Simulate(a) => simulate(a),
        Command::Amplify(a) => amplify_cmd(a),
        Command::Match(a) => match_cmd(a),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            if e.is_validation() {
                ExitCode::from(2)
            } else {
                ExitCode::from(1)
            }
        }
    }
}
