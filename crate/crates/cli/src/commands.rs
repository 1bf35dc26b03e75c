use std::collections::BTreeMap;
use std::fmt;
use std::fs;
use std::io::Write;
use std::path::Path;

use amodreg_bayesopt::{Checkpoint, NestedConfig, NestedOptimizer, Surrogate, SurrogateConfig};
use amodreg_core::evaluator::SimulationProblem;
use amodreg_core::params::{DecisionVector, WelfareWeights, DECISION_NAMES};
use amodreg_core::scenario_io::{load_scenario, Scenario};
use amodreg_core::simulation::{self, aggregate_runs, ResultRecord};
use amodreg_core::store::ResultStore;
use amodreg_core::synth::GridCity;
use rayon::prelude::*;
use serde::Serialize;

use crate::tables;
use crate::{OptimizeArgs, ReweightArgs, SimulateArgs, SliceArgs, SynthArgs};

#[derive(Debug)]
pub enum CliError {
    /// Bad input: scenario files, flags, weight files.
    Invalid(String),
    Runtime(String),
}

impl CliError {
    pub fn code(&self) -> u8 {
        match self {
            CliError::Invalid(_) => 1,
            CliError::Runtime(_) => 2,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Invalid(m) => write!(f, "error: {m}"),
            CliError::Runtime(m) => write!(f, "runtime error: {m}"),
        }
    }
}

impl From<amodreg_core::Error> for CliError {
    fn from(e: amodreg_core::Error) -> Self {
        if e.is_validation() {
            CliError::Invalid(e.to_string())
        } else {
            CliError::Runtime(e.to_string())
        }
    }
}

impl From<amodreg_bayesopt::Error> for CliError {
    fn from(e: amodreg_bayesopt::Error) -> Self {
        CliError::Runtime(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, CliError>;

pub fn io_err(path: &Path, e: impl fmt::Display) -> CliError {
    CliError::Runtime(format!("{}: {e}", path.display()))
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    fs::write(path, bytes).map_err(|e| io_err(path, e))
}

fn json_line<T: Serialize>(value: &T) -> Result<String> {
    serde_json::to_string(value).map(|s| s + "\n").map_err(|e| CliError::Runtime(e.to_string()))
}

/// Writes to `path`, or to standard output when there is none.
fn emit(path: Option<&Path>, bytes: &[u8]) -> Result<()> {
    match path {
        Some(p) => write_file(p, bytes),
        None => std::io::stdout().write_all(bytes).map_err(|e| CliError::Runtime(e.to_string())),
    }
}

/// A preset name, `scenario` for the scenario's own weights, or a TOML file.
fn parse_weights(spec: &str, scenario: Option<&Scenario>) -> Result<WelfareWeights> {
    if spec == "scenario" {
        return Ok(scenario.map_or_else(WelfareWeights::identity, |s| s.params.welfare_weights));
    }
    if let Some(w) = WelfareWeights::preset(spec) {
        return Ok(w);
    }
    let path = Path::new(spec);
    let text = fs::read_to_string(path)
        .map_err(|e| CliError::Invalid(format!("weights '{spec}' is neither a preset nor a readable file: {e}")))?;
    toml::from_str(&text).map_err(|e| CliError::Invalid(format!("{spec}: {e}")))
}

fn seeds(first: u64, count: u64) -> Vec<u64> {
    (first..first + count).collect()
}

pub fn validate(dir: &Path) -> Result<()> {
    let s = load_scenario(dir)?;
    println!(
        "ok: {} nodes, {} edges, {} clusters, {} transit lines, {} OD rows",
        s.graph.node_count(),
        s.graph.edges().len(),
        s.clusters().len(),
        s.files.lines.len(),
        s.files.od.len()
    );
    Ok(())
}

/// Unregulated setting with the operator at the middle of its ranges, the fleet
/// limited by the cap.
fn default_decision(s: &Scenario) -> DecisionVector {
    let b = &s.bounds;
    let mid = |r: [f64; 2]| 0.5 * (r[0] + r[1]);
    let mut d = b.status_quo_decision(mid(b.fleet_size), mid(b.distance_fare), mid(b.surge_factor));
    d.fleet_size = d.fleet_size.min(d.fleet_cap);
    d
}

fn parse_decision(s: &Scenario, overrides: &[String]) -> Result<DecisionVector> {
    let mut d = default_decision(s);
    for o in overrides {
        let (k, v) = o.split_once('=').ok_or_else(|| CliError::Invalid(format!("override '{o}' is not KEY=VALUE")))?;
        let v: f64 =
            v.trim().parse().map_err(|_| CliError::Invalid(format!("override '{o}': '{v}' is not a number")))?;
        d.set(k.trim(), v)?;
    }
    if !s.bounds.contains(&d) {
        let violations: Vec<String> = DECISION_NAMES
            .iter()
            .zip(d.to_array().into_iter().zip(s.bounds.ranges()))
            .filter(|(_, (x, [lo, hi]))| !(x >= lo && x <= hi))
            .map(|(n, (x, [lo, hi]))| format!("{n} = {x} lies outside [{lo}, {hi}]"))
            .collect();
        let msg = if violations.is_empty() {
            format!("fleet_size {} exceeds fleet_cap {}", d.fleet_size, d.fleet_cap)
        } else {
            violations.join("; ")
        };
        return Err(CliError::Invalid(format!("decision out of bounds: {msg}")));
    }
    Ok(d)
}

pub fn simulate(a: &SimulateArgs) -> Result<()> {
    let s = load_scenario(&a.scenario)?;
    let decision = parse_decision(&s, &a.overrides)?;
    let outputs = seeds(a.first_seed, a.seeds)
        .into_par_iter()
        .map(|seed| simulation::run_detailed(&s, &decision, seed))
        .collect::<amodreg_core::Result<Vec<_>>>()?;
    let mut text = String::new();
    for o in &outputs {
        text += &json_line(&o.record)?;
    }
    emit(a.out.as_deref(), text.as_bytes())?;
    if let Some(dir) = &a.tables {
        fs::create_dir_all(dir).map_err(|e| io_err(dir, e))?;
        for o in &outputs {
            let path = dir.join(format!("trace_seed{}.csv", o.record.seed));
            write_file(&path, &tables::trace_csv(s.clusters(), &o.trace)?)?;
        }
        let records: Vec<ResultRecord> = outputs.iter().map(|o| o.record.clone()).collect();
        write_file(&dir.join("kpis.csv"), &tables::kpi_csv(&records)?)?;
    }
    Ok(())
}

/// Records of earlier runs in `path`, keyed by decision bits and seed.
fn known_records(path: &Path) -> Result<BTreeMap<([u64; 7], u64), ResultRecord>> {
    let stored: Vec<ResultRecord> = ResultStore::new(path).read()?;
    Ok(stored.into_iter().map(|r| ((r.decision.to_array().map(f64::to_bits), r.seed), r)).collect())
}

#[derive(Serialize)]
struct IncumbentReport {
    regulator: Vec<f64>,
    operator: Vec<f64>,
    decision: DecisionVector,
    profit: f64,
    welfare: f64,
    evaluations: usize,
    hyperplanes: usize,
    operator_iterations: usize,
    regulator_iterations: usize,
}

pub fn optimize(a: &OptimizeArgs) -> Result<()> {
    let s = load_scenario(&a.scenario)?;
    let weights = parse_weights(&a.weights, Some(&s))?;
    let problem = SimulationProblem::new(&s, seeds(a.first_seed, a.seeds)).with_weights(weights);
    let config = NestedConfig {
        init_operator: a.init_operator,
        init_regulator: a.init_regulator,
        include_corners: !a.no_corners,
        budget_operator: a.budget_operator,
        budget_regulator: a.budget_regulator,
        patience_operator: a.patience_operator,
        patience_regulator: a.patience_regulator,
        ..NestedConfig::default()
    };
    fs::create_dir_all(&a.out).map_err(|e| io_err(&a.out, e))?;
    let mut opt = NestedOptimizer::new(&problem, config);
    if let Some(cp) = &a.checkpoint {
        opt = opt.with_checkpoint(cp)?;
    }
    let incumbent = opt.run()?;
    eprintln!(
        "{} evaluations ({} replayed), {} hyperplanes, {} operator / {} regulator iterations",
        opt.observations().len(),
        opt.replayed(),
        opt.hyperplanes().len(),
        opt.operator_iterations(),
        opt.regulator_iterations()
    );

    let report = IncumbentReport {
        decision: problem.decision(&incumbent.regulator, &incumbent.operator),
        regulator: incumbent.regulator.clone(),
        operator: incumbent.operator.clone(),
        profit: incumbent.profit,
        welfare: incumbent.welfare,
        evaluations: opt.observations().len(),
        hyperplanes: opt.hyperplanes().len(),
        operator_iterations: opt.operator_iterations(),
        regulator_iterations: opt.regulator_iterations(),
    };
    let json = serde_json::to_string_pretty(&report).map_err(|e| CliError::Runtime(e.to_string()))? + "\n";
    write_file(&a.out.join("incumbent.json"), json.as_bytes())?;
    write_file(&a.out.join("trace.csv"), &tables::serialize_csv(opt.trace())?)?;
    write_file(&a.out.join("observations.csv"), &tables::observations_csv(&problem, opt.observations())?)?;

    // Records in observation order; evaluations served from a checkpoint are looked
    // up in the previous record file or simulated again.
    let records_path = a.out.join("records.jsonl");
    let known = known_records(&records_path)?;
    let mut text = String::new();
    let mut seen = std::collections::BTreeSet::new();
    for o in opt.observations() {
        let d = problem.decision(&o.regulator, &o.operator);
        let bits = d.to_array().map(f64::to_bits);
        if !seen.insert(bits) {
            continue;
        }
        let records = match problem.records_for(&d) {
            Some(r) => r,
            None => {
                let cached: Option<Vec<ResultRecord>> =
                    problem.seeds().iter().map(|&seed| known.get(&(bits, seed)).cloned()).collect();
                match cached {
                    Some(r) => r,
                    None => problem.simulate(&d)?,
                }
            }
        };
        for r in &records {
            text += &json_line(r)?;
        }
    }
    write_file(&records_path, text.as_bytes())
}

pub fn reweight(a: &ReweightArgs) -> Result<()> {
    let records: Vec<ResultRecord> = ResultStore::new(&a.store).read()?;
    let weights = a.weights.iter().map(|w| parse_weights(w, None)).collect::<Result<Vec<_>>>()?;
    let rows: Vec<(DecisionVector, String, Vec<f64>)> = if a.aggregate {
        let mut groups: Vec<(DecisionVector, Vec<ResultRecord>)> = Vec::new();
        for r in records {
            match groups.iter_mut().find(|g| g.0 == r.decision) {
                Some(g) => g.1.push(r),
                None => groups.push((r.decision, vec![r])),
            }
        }
        groups
            .into_iter()
            .map(|(d, rs)| {
                let agg = aggregate_runs(&rs)?;
                let seeds = agg.seeds.iter().map(u64::to_string).collect::<Vec<_>>().join(" ");
                let n = rs.len() as f64;
                let w = weights.iter().map(|w| rs.iter().map(|r| r.reweighted(w)).sum::<f64>() / n).collect();
                Ok((d, seeds, w))
            })
            .collect::<Result<_>>()?
    } else {
        records
            .iter()
            .map(|r| (r.decision, r.seed.to_string(), weights.iter().map(|w| r.reweighted(w)).collect()))
            .collect()
    };
    emit(a.out.as_deref(), &tables::welfare_csv(&a.weights, &rows)?)
}

pub fn export_slice(a: &SliceArgs) -> Result<()> {
    let cp = Checkpoint::<f64>::read(&a.checkpoint)?;
    let (data, incumbent_base) = match a.model.as_str() {
        "profit" => (
            cp.profit_data(),
            cp.incumbent.as_ref().map(|i| i.regulator.iter().chain(&i.operator).copied().collect::<Vec<_>>()),
        ),
        "welfare" => (cp.welfare_data(), cp.incumbent.as_ref().map(|i| i.regulator.clone())),
        m => return Err(CliError::Invalid(format!("unknown model '{m}' (expected profit or welfare)"))),
    };
    let dim = data.first().map(|d| d.0.len()).ok_or_else(|| CliError::Invalid("checkpoint holds no evaluations".into()))?;
    let base = match &a.base {
        Some(b) => b.clone(),
        None => incumbent_base.unwrap_or_else(|| vec![0.5; dim]),
    };
    if base.len() != dim {
        return Err(CliError::Invalid(format!("base has {} coordinates, the {} model has {dim}", base.len(), a.model)));
    }
    let [da, db] = a.dims[..] else {
        return Err(CliError::Invalid("--dims takes exactly two coordinates".into()));
    };
    if da >= dim || db >= dim || da == db {
        return Err(CliError::Invalid(format!("dims must be two distinct coordinates below {dim}")));
    }
    let mut model = Surrogate::new(dim, SurrogateConfig::default());
    model.extend(data)?;
    let points = model.slice(&base, da, db, a.resolution.max(2));
    emit(a.out.as_deref(), &tables::serialize_csv(&points)?)
}

pub fn synth(a: &SynthArgs) -> Result<()> {
    let city = GridCity {
        side: a.side,
        requests_per_hour: a.requests_per_hour,
        max_fleet: a.max_fleet,
        ..GridCity::default()
    };
    let scenario = city.scenario()?;
    fs::create_dir_all(&a.out).map_err(|e| io_err(&a.out, e))?;
    scenario.files.write(&a.out)?;
    println!("wrote {} nodes and {} edges to {}", scenario.graph.node_count(), scenario.graph.edges().len(), a.out.display());
    Ok(())
}
