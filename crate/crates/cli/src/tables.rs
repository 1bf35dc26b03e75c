//! Delimited tables for plotting. Every writer returns the CSV bytes so commands can
//! decide where they go.

use amodreg_bayesopt::Observation;
use amodreg_core::evaluator::SimulationProblem;
use amodreg_core::params::{DecisionVector, DECISION_NAMES};
use amodreg_core::simulation::{ProfitBreakdown, ResultRecord, ServiceKpis, TraceRow, WelfareBreakdown};
use serde::Serialize;

use crate::commands::{CliError, Result};

fn finish(w: csv::Writer<Vec<u8>>) -> Result<Vec<u8>> {
    w.into_inner().map_err(|e| CliError::Runtime(e.to_string()))
}

fn csv_err(e: csv::Error) -> CliError {
    CliError::Runtime(e.to_string())
}

/// One row per item of a flat serializable type.
pub fn serialize_csv<T: Serialize>(items: &[T]) -> Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for item in items {
        w.serialize(item).map_err(csv_err)?;
    }
    finish(w)
}

/// Per-step densities, travel-time factors, transit load and fleet occupancy stack.
pub fn trace_csv(clusters: &[u32], trace: &[TraceRow]) -> Result<Vec<u8>> {
    let stack = trace.first().map_or(0, |t| t.active_by_occupancy.len());
    let mut header = vec!["time".to_string()];
    header.extend(clusters.iter().map(|c| format!("density_{c}")));
    header.extend(clusters.iter().map(|c| format!("travel_time_factor_{c}")));
    header.extend(["pt_onboard", "crowding", "idle_vehicles"].map(String::from));
    header.extend((0..stack).map(|k| format!("active_onboard_{k}")));
    header.push("amod_toll".into());

    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(&header).map_err(csv_err)?;
    for t in trace {
        let mut row = vec![t.time.to_string()];
        row.extend(t.density.iter().map(f64::to_string));
        row.extend(t.travel_time_factor.iter().map(f64::to_string));
        row.extend([t.pt_onboard.to_string(), t.crowding.to_string(), t.idle_vehicles.to_string()]);
        row.extend(t.active_by_occupancy.iter().map(usize::to_string));
        row.push(t.amod_toll.to_string());
        w.write_record(&row).map_err(csv_err)?;
    }
    finish(w)
}

/// Decision, seed, totals and every component and KPI of each record.
pub fn kpi_csv(records: &[ResultRecord]) -> Result<Vec<u8>> {
    let mut header: Vec<&str> = DECISION_NAMES.to_vec();
    header.extend(["seed", "welfare", "profit"]);
    header.extend(WelfareBreakdown::NAMES);
    header.extend(ProfitBreakdown::NAMES);
    header.extend(ServiceKpis::NAMES);

    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(&header).map_err(csv_err)?;
    for r in records {
        let mut row: Vec<String> = r.decision.to_array().iter().map(f64::to_string).collect();
        row.extend([r.seed.to_string(), r.welfare.to_string(), r.profit.to_string()]);
        for v in [r.welfare_components.values(), r.profit_components.values(), r.service_kpis.values()] {
            row.extend(v.iter().map(f64::to_string));
        }
        w.write_record(&row).map_err(csv_err)?;
    }
    finish(w)
}

/// Optimizer evaluations with both normalized coordinates and quoted decisions.
pub fn observations_csv(problem: &SimulationProblem, observations: &[Observation<f64>]) -> Result<Vec<u8>> {
    let mut header = vec!["evaluation".to_string(), "hyperplane".into(), "stage".into()];
    header.extend(DECISION_NAMES.iter().map(|n| format!("unit_{n}")));
    header.extend(DECISION_NAMES.iter().map(|n| n.to_string()));
    header.extend(["profit", "welfare"].map(String::from));

    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(&header).map_err(csv_err)?;
    for (i, o) in observations.iter().enumerate() {
        let stage = serde_json::to_value(o.stage).map_err(|e| CliError::Runtime(e.to_string()))?;
        let mut row = vec![i.to_string(), o.hyperplane.to_string(), stage.as_str().unwrap_or_default().to_string()];
        row.extend(o.regulator.iter().chain(&o.operator).map(f64::to_string));
        row.extend(problem.decision(&o.regulator, &o.operator).to_array().iter().map(f64::to_string));
        row.extend([o.profit.to_string(), o.welfare.to_string()]);
        w.write_record(&row).map_err(csv_err)?;
    }
    finish(w)
}

/// Decision, seed label and one welfare column per weight set.
pub fn welfare_csv(weight_names: &[String], rows: &[(DecisionVector, String, Vec<f64>)]) -> Result<Vec<u8>> {
    let mut header: Vec<String> = DECISION_NAMES.iter().map(|n| n.to_string()).collect();
    header.push("seed".into());
    header.extend(weight_names.iter().map(|n| format!("welfare[{n}]")));

    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(&header).map_err(csv_err)?;
    for (d, seed, values) in rows {
        let mut row: Vec<String> = d.to_array().iter().map(f64::to_string).collect();
        row.push(seed.clone());
        row.extend(values.iter().map(f64::to_string));
        w.write_record(&row).map_err(csv_err)?;
    }
    finish(w)
}
