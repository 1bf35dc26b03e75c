//! Connects the simulation to the two-level optimizer: normalized coordinates are
//! mapped to decisions, each decision is simulated for every seed and the seed means
//! of profit and welfare are returned.

use std::collections::BTreeMap;
use std::sync::Mutex;

use amodreg_bayesopt::{Evaluation, TwoLevelProblem};
use rayon::prelude::*;

use crate::error::Result;
use crate::params::{DecisionVector, WelfareWeights, OPERATOR_DIM, REGULATOR_DIM};
use crate::scenario_io::Scenario;
use crate::simulation::{self, ResultRecord};

pub struct SimulationProblem<'s> {
    scenario: &'s Scenario,
    seeds: Vec<u64>,
    weights: WelfareWeights,
    parallel: bool,
    /// Records per decision, keyed by the bit patterns of its components.
    records: Mutex<BTreeMap<[u64; 7], Vec<ResultRecord>>>,
}

fn key(d: &DecisionVector) -> [u64; 7] {
    d.to_array().map(f64::to_bits)
}

impl<'s> SimulationProblem<'s> {
    pub fn new(scenario: &'s Scenario, seeds: Vec<u64>) -> Self {
        Self {
            scenario,
            seeds,
            weights: scenario.params.welfare_weights,
            parallel: true,
            records: Mutex::new(BTreeMap::new()),
        }
    }

    /// Optimizes welfare under other weights; the simulations are unaffected.
    pub fn with_weights(mut self, weights: WelfareWeights) -> Self {
        self.weights = weights;
        self
    }

    /// Runs the seeds of one evaluation in parallel.
    pub fn with_parallel_seeds(mut self, parallel: bool) -> Self {
        self.parallel = parallel;
        self
    }

    pub fn scenario(&self) -> &Scenario {
        self.scenario
    }

    pub fn seeds(&self) -> &[u64] {
        &self.seeds
    }

    /// Decision in quoted units for normalized regulator and operator coordinates.
    pub fn decision(&self, regulator: &[f64], operator: &[f64]) -> DecisionVector {
        let mut u = [0.0; 7];
        u[..REGULATOR_DIM].copy_from_slice(regulator);
        u[REGULATOR_DIM..].copy_from_slice(operator);
        self.scenario.bounds.denormalize(&u)
    }

    /// Simulates one decision for every seed, in seed order.
    pub fn simulate(&self, decision: &DecisionVector) -> Result<Vec<ResultRecord>> {
        let run = |&seed: &u64| simulation::run(self.scenario, decision, seed);
        if self.parallel {
            self.seeds.par_iter().map(run).collect()
        } else {
            self.seeds.iter().map(run).collect()
        }
    }

    /// Records produced for `decision` so far.
    pub fn records_for(&self, decision: &DecisionVector) -> Option<Vec<ResultRecord>> {
        self.records.lock().expect("records lock").get(&key(decision)).cloned()
    }
}

impl TwoLevelProblem<f64> for SimulationProblem<'_> {
    fn regulator_dim(&self) -> usize {
        REGULATOR_DIM
    }

    fn operator_dim(&self) -> usize {
        OPERATOR_DIM
    }

    fn status_quo(&self) -> Vec<f64> {
        let b = &self.scenario.bounds;
        let sq = b.status_quo();
        let d = b.status_quo_decision(b.fleet_size[0], b.distance_fare[0], b.surge_factor[0]);
        debug_assert_eq!(d.to_array()[..REGULATOR_DIM], sq);
        b.normalize(&d)[..REGULATOR_DIM].to_vec()
    }

    /// The fleet-size coordinate stops at the license cap.
    fn operator_bounds(&self, regulator: &[f64]) -> (Vec<f64>, Vec<f64>) {
        let cap = self.decision(regulator, &[0.0; OPERATOR_DIM]).fleet_cap;
        let upper = self.scenario.bounds.fleet_size_upper_unit(cap);
        (vec![0.0; OPERATOR_DIM], vec![upper, 1.0, 1.0])
    }

    fn evaluate(&self, regulator: &[f64], operator: &[f64]) -> std::result::Result<Evaluation<f64>, String> {
        let decision = self.decision(regulator, operator);
        let records = self.simulate(&decision).map_err(|e| e.to_string())?;
        let n = records.len().max(1) as f64;
        let profit = records.iter().map(|r| r.profit).sum::<f64>() / n;
        let welfare = records.iter().map(|r| r.reweighted(&self.weights)).sum::<f64>() / n;
        self.records.lock().expect("records lock").insert(key(&decision), records);
        Ok(Evaluation { profit, welfare })
    }
}
