//! Two-level Bayesian optimization: an inner (operator) search along hyperplanes of
//! fixed regulator variables, and an outer (regulator) search over the best-profit
//! welfare of each hyperplane.
//!
//! A single profit surrogate over `(regulator, operator)` is shared by every
//! hyperplane, so observations made for one regulator setting inform the search
//! in nearby settings. The welfare surrogate only holds one point per regulator
//! setting: the welfare observed at that setting's most profitable operator point.
//!
//! Evaluations are merged in batches. Every hyperplane that is active in a round
//! proposes against the same surrogate snapshot, the batch is evaluated (in
//! parallel when enabled), and the observations are merged in hyperplane order,
//! so results do not depend on the number of worker threads.

use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::acquisition::{next_point, KappaSchedule, SearchBox, SearchSettings};
use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::sobol::initial_design;
use crate::surrogate::{Surrogate, SurrogateConfig};

/// Objective values returned by one (seed-averaged) simulation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Evaluation<T> {
    pub profit: T,
    pub welfare: T,
}

/// The problem seen by the optimizer; all coordinates are normalized to `[0, 1]`.
pub trait TwoLevelProblem<T: Scalar>: Sync {
    fn regulator_dim(&self) -> usize;
    fn operator_dim(&self) -> usize;

    /// Regulator setting the operator is first optimized for.
    fn status_quo(&self) -> Vec<T>;

    /// Operator box for a regulator setting (e.g. a fleet cap truncating fleet size).
    fn operator_bounds(&self, regulator: &[T]) -> (Vec<T>, Vec<T>) {
        let _ = regulator;
        (vec![T::zero(); self.operator_dim()], vec![T::one(); self.operator_dim()])
    }

    fn evaluate(&self, regulator: &[T], operator: &[T]) -> std::result::Result<Evaluation<T>, String>;
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct NestedConfig {
    /// Sobol points in the operator space for the status-quo hyperplane.
    pub init_operator: usize,
    /// Sobol points in the regulator space.
    pub init_regulator: usize,
    pub include_corners: bool,
    /// Maximum acquisition steps per hyperplane visit (at least one step is taken).
    pub budget_operator: usize,
    /// Maximum regulator-level acquisition steps after initialization.
    pub budget_regulator: usize,
    pub patience_operator: usize,
    pub patience_regulator: usize,
    /// A step counts as progress only if it improves the incumbent by more than this.
    pub tolerance: f64,
    pub operator_kappa: KappaSchedule,
    pub regulator_kappa: KappaSchedule,
    pub surrogate: SurrogateConfig,
    pub search: SearchSettings,
    pub parallel: bool,
}

impl Default for NestedConfig {
    fn default() -> Self {
        Self {
            init_operator: 272,
            init_regulator: 272,
            include_corners: true,
            budget_operator: 20,
            budget_regulator: 20,
            patience_operator: 5,
            patience_regulator: 5,
            tolerance: 0.0,
            operator_kappa: KappaSchedule { delta: 0.1, cap_after: Some(34) },
            regulator_kappa: KappaSchedule { delta: 0.1, cap_after: None },
            surrogate: SurrogateConfig::default(),
            search: SearchSettings::default(),
            parallel: true,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stage {
    /// Initial operator design at the status-quo regulation.
    OperatorInit,
    /// Operator acquisition steps within a hyperplane.
    Operator,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Observation<T> {
    pub hyperplane: usize,
    pub regulator: Vec<T>,
    pub operator: Vec<T>,
    pub profit: T,
    pub welfare: T,
    pub stage: Stage,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Hyperplane<T> {
    pub regulator: Vec<T>,
    pub observations: Vec<usize>,
    /// Index (into the global observation list) of the most profitable observation.
    pub best: Option<usize>,
    /// Acquisition steps taken in this hyperplane.
    pub iterations: usize,
    pub welfare_index: Option<usize>,
}

/// One line of the convergence trace.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceEntry<T> {
    pub evaluation: usize,
    /// Continuous operator-iteration count (`None` for initial designs).
    pub operator_iteration: Option<usize>,
    pub regulator_iteration: usize,
    pub hyperplane: usize,
    pub profit: T,
    pub welfare: T,
    pub hyperplane_best_profit: T,
    pub best_welfare: Option<T>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Incumbent<T> {
    pub hyperplane: usize,
    pub regulator: Vec<T>,
    pub operator: Vec<T>,
    pub profit: T,
    pub welfare: T,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct CachedEvaluation<T> {
    regulator: Vec<T>,
    operator: Vec<T>,
    profit: T,
    welfare: T,
}

/// On-disk optimizer state: every evaluation in order, the trace and the incumbent.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Checkpoint<T> {
    pub version: u32,
    evaluations: Vec<CachedEvaluation<T>>,
    pub operator_iterations: usize,
    pub regulator_iterations: usize,
    pub trace: Vec<TraceEntry<T>>,
    pub incumbent: Option<Incumbent<T>>,
}

impl<T: Scalar + Serialize + DeserializeOwned> Checkpoint<T> {
    pub fn read(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Ok(serde_json::from_str(&text)?)
    }

    pub fn evaluation_count(&self) -> usize {
        self.evaluations.len()
    }

    /// Every evaluation as `(regulator ++ operator, profit)`, in evaluation order.
    pub fn profit_data(&self) -> Vec<(Vec<T>, T)> {
        self.evaluations
            .iter()
            .map(|e| (e.regulator.iter().chain(&e.operator).copied().collect(), e.profit))
            .collect()
    }

    /// One `(regulator, welfare)` pair per regulator setting: the welfare at its most
    /// profitable evaluation. Settings appear in order of first evaluation.
    pub fn welfare_data(&self) -> Vec<(Vec<T>, T)> {
        let mut best: Vec<(Vec<T>, T, T)> = Vec::new();
        for e in &self.evaluations {
            match best.iter_mut().find(|b| b.0 == e.regulator) {
                Some(b) if e.profit > b.1 => {
                    b.1 = e.profit;
                    b.2 = e.welfare;
                }
                Some(_) => {}
                None => best.push((e.regulator.clone(), e.profit, e.welfare)),
            }
        }
        best.into_iter().map(|(r, _, w)| (r, w)).collect()
    }

    fn write(&self, path: &Path) -> Result<()> {
        let tmp = path.with_extension("tmp");
        std::fs::write(&tmp, serde_json::to_vec_pretty(self)?)?;
        std::fs::rename(tmp, path)?;
        Ok(())
    }
}

/// Outcome of optimizing one hyperplane.
#[derive(Debug, Clone, PartialEq)]
pub struct OperatorOutcome<T> {
    pub hyperplane: usize,
    pub operator: Vec<T>,
    pub profit: T,
    pub evaluations: usize,
}

struct Request<T> {
    hyperplane: usize,
    operator: Vec<T>,
    stage: Stage,
    operator_iteration: Option<usize>,
}

pub struct NestedOptimizer<'p, T: Scalar, P> {
    problem: &'p P,
    config: NestedConfig,
    observations: Vec<Observation<T>>,
    hyperplanes: Vec<Hyperplane<T>>,
    profit_model: Surrogate<T>,
    welfare_model: Surrogate<T>,
    operator_iterations: usize,
    regulator_iterations: usize,
    trace: Vec<TraceEntry<T>>,
    replay: Vec<CachedEvaluation<T>>,
    replay_valid: bool,
    checkpoint_path: Option<PathBuf>,
    replayed: usize,
}

impl<'p, T, P> NestedOptimizer<'p, T, P>
where
    T: Scalar + Serialize + DeserializeOwned,
    P: TwoLevelProblem<T>,
{
    pub fn new(problem: &'p P, config: NestedConfig) -> Self {
        let dr = problem.regulator_dim();
        let d = dr + problem.operator_dim();
        Self {
            profit_model: Surrogate::new(d, config.surrogate.clone()),
            welfare_model: Surrogate::new(dr, config.surrogate.clone()),
            problem,
            config,
            observations: Vec::new(),
            hyperplanes: Vec::new(),
            operator_iterations: 0,
            regulator_iterations: 0,
            trace: Vec::new(),
            replay: Vec::new(),
            replay_valid: true,
            checkpoint_path: None,
            replayed: 0,
        }
    }

    /// Persists state to `path` after every merge. An existing checkpoint is
    /// replayed: evaluations it already holds are served from the file instead of
    /// re-running the objective, as long as the proposals match.
    pub fn with_checkpoint(mut self, path: impl Into<PathBuf>) -> Result<Self> {
        let path = path.into();
        if path.exists() {
            self.replay = Checkpoint::<T>::read(&path)?.evaluations;
        }
        self.checkpoint_path = Some(path);
        Ok(self)
    }

    pub fn config(&self) -> &NestedConfig {
        &self.config
    }

    pub fn observations(&self) -> &[Observation<T>] {
        &self.observations
    }

    pub fn hyperplanes(&self) -> &[Hyperplane<T>] {
        &self.hyperplanes
    }

    pub fn profit_model(&self) -> &Surrogate<T> {
        &self.profit_model
    }

    pub fn welfare_model(&self) -> &Surrogate<T> {
        &self.welfare_model
    }

    pub fn trace(&self) -> &[TraceEntry<T>] {
        &self.trace
    }

    pub fn operator_iterations(&self) -> usize {
        self.operator_iterations
    }

    pub fn regulator_iterations(&self) -> usize {
        self.regulator_iterations
    }

    /// Evaluations served from a replayed checkpoint.
    pub fn replayed(&self) -> usize {
        self.replayed
    }

    /// Returns the index of the hyperplane at `regulator`, creating it if needed.
    pub fn hyperplane(&mut self, regulator: &[T]) -> usize {
        if let Some(i) = self.hyperplanes.iter().position(|h| h.regulator == regulator) {
            return i;
        }
        self.hyperplanes.push(Hyperplane {
            regulator: regulator.to_vec(),
            observations: Vec::new(),
            best: None,
            iterations: 0,
            welfare_index: None,
        });
        self.hyperplanes.len() - 1
    }

    pub fn hyperplane_best(&self, hp: usize) -> Option<&Observation<T>> {
        self.hyperplanes[hp].best.map(|i| &self.observations[i])
    }

    fn joint(regulator: &[T], operator: &[T]) -> Vec<T> {
        regulator.iter().chain(operator).copied().collect()
    }

    fn operator_box(&self, hp: usize) -> SearchBox<T> {
        let regulator = &self.hyperplanes[hp].regulator;
        let (lo, hi) = self.problem.operator_bounds(regulator);
        let dr = regulator.len();
        let mut b = SearchBox::unit(dr + lo.len());
        for (i, v) in regulator.iter().enumerate() {
            b.frozen[i] = Some(*v);
        }
        for j in 0..lo.len() {
            b.lower[dr + j] = lo[j];
            b.upper[dr + j] = hi[j].max(lo[j]);
        }
        b
    }

    fn evaluate_one(&self, regulator: &[T], operator: &[T]) -> Result<Evaluation<T>> {
        self.problem.evaluate(regulator, operator).map_err(Error::Evaluation)
    }

    /// Evaluates a batch against the current snapshot and merges it in order.
    fn run_batch(&mut self, requests: Vec<Request<T>>) -> Result<()> {
        if requests.is_empty() {
            return Ok(());
        }
        let start = self.observations.len();
        let mut results: Vec<Option<Evaluation<T>>> = Vec::with_capacity(requests.len());
        for (k, r) in requests.iter().enumerate() {
            let idx = start + k;
            let regulator = &self.hyperplanes[r.hyperplane].regulator;
            let cached = match self.replay.get(idx) {
                Some(c) if self.replay_valid && c.regulator == *regulator && c.operator == r.operator => {
                    Some(Evaluation { profit: c.profit, welfare: c.welfare })
                }
                Some(_) => {
                    self.replay_valid = false;
                    None
                }
                None => None,
            };
            if cached.is_some() {
                self.replayed += 1;
            }
            results.push(cached);
        }
        let pending: Vec<usize> = (0..requests.len()).filter(|&k| results[k].is_none()).collect();
        let jobs: Vec<(Vec<T>, Vec<T>)> = pending
            .iter()
            .map(|&k| (self.hyperplanes[requests[k].hyperplane].regulator.clone(), requests[k].operator.clone()))
            .collect();
        let fresh: Vec<Result<Evaluation<T>>> = if self.config.parallel {
            jobs.par_iter().map(|(r, o)| self.evaluate_one(r, o)).collect()
        } else {
            jobs.iter().map(|(r, o)| self.evaluate_one(r, o)).collect()
        };
        let mut first_error = None;
        for (k, res) in pending.into_iter().zip(fresh) {
            match res {
                Ok(e) => results[k] = Some(e),
                Err(e) => {
                    first_error.get_or_insert(e);
                }
            }
        }

        let mut new_points = Vec::new();
        for (r, res) in requests.into_iter().zip(results) {
            // stop merging at the first failure, keeping everything before it
            let Some(eval) = res else { break };
            let hp = r.hyperplane;
            let regulator = self.hyperplanes[hp].regulator.clone();
            let idx = self.observations.len();
            new_points.push((Self::joint(&regulator, &r.operator), eval.profit));
            self.observations.push(Observation {
                hyperplane: hp,
                regulator,
                operator: r.operator,
                profit: eval.profit,
                welfare: eval.welfare,
                stage: r.stage,
            });
            let h = &mut self.hyperplanes[hp];
            h.observations.push(idx);
            let improved = match h.best {
                Some(b) => eval.profit > self.observations[b].profit,
                None => true,
            };
            if improved {
                h.best = Some(idx);
                self.update_welfare_point(hp)?;
            }
            let best_welfare = self.best_welfare();
            self.trace.push(TraceEntry {
                evaluation: idx + 1,
                operator_iteration: r.operator_iteration,
                regulator_iteration: self.regulator_iterations,
                hyperplane: hp,
                profit: eval.profit,
                welfare: eval.welfare,
                hyperplane_best_profit: self.observations[self.hyperplanes[hp].best.unwrap()].profit,
                best_welfare,
            });
        }
        self.profit_model.extend(new_points)?;
        self.save_checkpoint()?;
        match first_error {
            Some(e) => Err(e),
            None => Ok(()),
        }
    }

    fn update_welfare_point(&mut self, hp: usize) -> Result<()> {
        let best = self.hyperplanes[hp].best.expect("best set before welfare update");
        let welfare = self.observations[best].welfare;
        match self.hyperplanes[hp].welfare_index {
            Some(i) => self.welfare_model.set_value(i, welfare),
            None => {
                self.hyperplanes[hp].welfare_index = Some(self.welfare_model.len());
                self.welfare_model.add(self.hyperplanes[hp].regulator.clone(), welfare)
            }
        }
    }

    fn best_welfare(&self) -> Option<T> {
        self.hyperplanes
            .iter()
            .filter_map(|h| h.best.map(|b| self.observations[b].welfare))
            .fold(None, |acc: Option<T>, w| Some(acc.map_or(w, |a| a.max(w))))
    }

    fn save_checkpoint(&self) -> Result<()> {
        let Some(path) = &self.checkpoint_path else {
            return Ok(());
        };
        self.checkpoint().write(path)
    }

    pub fn checkpoint(&self) -> Checkpoint<T> {
        Checkpoint {
            version: 1,
            evaluations: self
                .observations
                .iter()
                .map(|o| CachedEvaluation {
                    regulator: o.regulator.clone(),
                    operator: o.operator.clone(),
                    profit: o.profit,
                    welfare: o.welfare,
                })
                .collect(),
            operator_iterations: self.operator_iterations,
            regulator_iterations: self.regulator_iterations,
            trace: self.trace.clone(),
            incumbent: self.incumbent(),
        }
    }

    /// Evaluates a Sobol (+ corners) design inside the hyperplane's operator box.
    pub fn initialize_hyperplane(&mut self, hp: usize, count: usize) -> Result<()> {
        let b = self.operator_box(hp);
        let dr = self.hyperplanes[hp].regulator.len();
        let design: Vec<Vec<T>> = initial_design(b.dim() - dr, count, self.config.include_corners)?;
        let requests = design
            .into_iter()
            .map(|u| {
                let operator = (0..u.len())
                    .map(|j| b.lower[dr + j] * (T::one() - u[j]) + b.upper[dr + j] * u[j])
                    .collect();
                Request { hyperplane: hp, operator, stage: Stage::OperatorInit, operator_iteration: None }
            })
            .collect();
        self.run_batch(requests)
    }

    fn propose_operator(&self, hp: usize, n: usize) -> Result<Vec<T>> {
        let kappa = T::lit(self.config.operator_kappa.value(n, self.profit_model.dim()));
        let b = self.operator_box(hp);
        let mut search = self.config.search.clone();
        search.seed = search.seed.wrapping_add(n as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15);
        let x = next_point(&self.profit_model, kappa, &b, &search)?;
        Ok(x[self.hyperplanes[hp].regulator.len()..].to_vec())
    }

    /// Runs operator acquisition on several hyperplanes in lock-step rounds.
    pub fn optimize_operators(&mut self, hps: &[usize], budget: usize) -> Result<Vec<OperatorOutcome<T>>> {
        let budget = budget.max(1);
        let tol = T::lit(self.config.tolerance);
        let mut steps = vec![0usize; hps.len()];
        let mut stale = vec![0usize; hps.len()];
        let mut evaluations = vec![0usize; hps.len()];
        let mut active: Vec<bool> = vec![true; hps.len()];
        while active.iter().any(|a| *a) {
            let mut requests = Vec::new();
            let mut before = Vec::new();
            for (k, &hp) in hps.iter().enumerate() {
                if !active[k] {
                    continue;
                }
                self.operator_iterations += 1;
                let n = self.operator_iterations;
                let operator = self.propose_operator(hp, n)?;
                before.push((k, self.hyperplane_best(hp).map(|o| o.profit)));
                requests.push(Request { hyperplane: hp, operator, stage: Stage::Operator, operator_iteration: Some(n) });
            }
            self.run_batch(requests)?;
            for (k, prev) in before {
                let hp = hps[k];
                steps[k] += 1;
                evaluations[k] += 1;
                self.hyperplanes[hp].iterations += 1;
                let now = self.hyperplane_best(hp).map(|o| o.profit).expect("evaluated");
                let progressed = match prev {
                    Some(p) => now - p > tol,
                    None => true,
                };
                stale[k] = if progressed { 0 } else { stale[k] + 1 };
                if steps[k] >= budget || stale[k] >= self.config.patience_operator.max(1) {
                    active[k] = false;
                }
            }
        }
        Ok(hps
            .iter()
            .zip(evaluations)
            .map(|(&hp, evaluations)| {
                let best = self.hyperplane_best(hp).expect("evaluated");
                OperatorOutcome { hyperplane: hp, operator: best.operator.clone(), profit: best.profit, evaluations }
            })
            .collect())
    }

    /// Operator optimization on the hyperplane of `regulator`, using all shared data.
    pub fn optimize_operator(&mut self, regulator: &[T], budget: usize) -> Result<OperatorOutcome<T>> {
        let hp = self.hyperplane(regulator);
        Ok(self.optimize_operators(&[hp], budget)?.remove(0))
    }

    /// Best (welfare at best profit) regulator setting seen so far.
    pub fn incumbent(&self) -> Option<Incumbent<T>> {
        let mut best: Option<Incumbent<T>> = None;
        for (i, h) in self.hyperplanes.iter().enumerate() {
            let Some(b) = h.best else { continue };
            let o = &self.observations[b];
            if best.as_ref().is_none_or(|cur| o.welfare > cur.welfare) {
                best = Some(Incumbent {
                    hyperplane: i,
                    regulator: o.regulator.clone(),
                    operator: o.operator.clone(),
                    profit: o.profit,
                    welfare: o.welfare,
                });
            }
        }
        best
    }

    /// Stage 1: operator design and acquisition at the status-quo regulation.
    pub fn run_status_quo(&mut self) -> Result<OperatorOutcome<T>> {
        let sq = self.problem.status_quo();
        let hp = self.hyperplane(&sq);
        if self.hyperplanes[hp].observations.is_empty() {
            self.initialize_hyperplane(hp, self.config.init_operator)?;
        }
        Ok(self.optimize_operators(&[hp], self.config.budget_operator)?.remove(0))
    }

    /// Stage 2: operator optimization on a Sobol (+ corners) set of regulator settings.
    pub fn run_regulator_design(&mut self) -> Result<Vec<OperatorOutcome<T>>> {
        let dr = self.problem.regulator_dim();
        let design: Vec<Vec<T>> = initial_design(dr, self.config.init_regulator, self.config.include_corners)?;
        let mut hps = Vec::new();
        for x in design {
            let hp = self.hyperplane(&x);
            if !hps.contains(&hp) {
                hps.push(hp);
            }
        }
        self.optimize_operators(&hps, self.config.budget_operator)
    }

    /// Stage 3: regulator acquisition on the welfare surrogate.
    pub fn run_regulator_search(&mut self) -> Result<()> {
        let dr = self.problem.regulator_dim();
        let tol = T::lit(self.config.tolerance);
        let mut stale = 0usize;
        for _ in 0..self.config.budget_regulator {
            let before = self.best_welfare();
            self.regulator_iterations += 1;
            let n = self.regulator_iterations;
            let kappa = T::lit(self.config.regulator_kappa.value(n, dr));
            let mut search = self.config.search.clone();
            search.seed = search.seed.wrapping_add(1_000_003 * n as u64);
            let x = next_point(&self.welfare_model, kappa, &SearchBox::unit(dr), &search)?;
            let hp = self.hyperplane(&x);
            self.optimize_operators(&[hp], self.config.budget_operator)?;
            let after = self.best_welfare();
            let progressed = match (before, after) {
                (Some(b), Some(a)) => a - b > tol,
                (None, Some(_)) => true,
                _ => false,
            };
            stale = if progressed { 0 } else { stale + 1 };
            if stale >= self.config.patience_regulator.max(1) {
                break;
            }
        }
        Ok(())
    }

    /// Runs all three stages and returns the incumbent.
    pub fn run(&mut self) -> Result<Incumbent<T>> {
        self.run_status_quo()?;
        self.run_regulator_design()?;
        self.run_regulator_search()?;
        self.incumbent().ok_or(Error::Empty)
    }
}

/// Operator optimization on one hyperplane with no outside data: its own initial
/// design followed by acquisition steps. Used as the reference for warm starts.
pub fn optimize_operator_cold<T, P>(
    problem: &P,
    regulator: &[T],
    init: usize,
    budget: usize,
    config: &NestedConfig,
) -> Result<(OperatorOutcome<T>, Vec<T>)>
where
    T: Scalar + Serialize + DeserializeOwned,
    P: TwoLevelProblem<T>,
{
    let mut opt = NestedOptimizer::new(problem, config.clone());
    let hp = opt.hyperplane(regulator);
    opt.initialize_hyperplane(hp, init)?;
    let mut out = opt.optimize_operators(&[hp], budget)?.remove(0);
    out.evaluations = opt.observations().len();
    let history = opt.observations().iter().map(|o| o.profit).collect();
    Ok((out, history))
}
