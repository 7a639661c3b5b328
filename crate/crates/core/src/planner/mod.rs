//! The four planning models: deterministic and scenario-based, each with and
//! without order-based loans.
//!
//! Every model is built over a [`ScenarioFan`]; deterministic kinds use a
//! one-scenario fan holding the point forecast. Stochastic models place one
//! decision per node of the demand-prefix lattice (orders on the node before
//! the period's demand is seen, inventory and loans on the node after), so
//! non-anticipativity holds by construction.

mod build;
pub mod lattice;

use std::fmt;
use std::io::Write;
use std::str::FromStr;
use std::time::Duration;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::instance::InstanceConfig;
use crate::scenario_reduce::ScenarioFan;
use crate::simulate::{simulate, Trajectory};
use crate::solver::{Backend, SolveOptions, SolveStatus};

pub use build::{build, compute_big_m, BigMPlan, BuiltModel, ModelIndex};

/// Tolerance for replaying a solved plan through the simulator.
pub const REPLAY_TOL: f64 = 1e-6;
/// Relative tolerance between the solver objective and the replayed value.
pub const OBJECTIVE_TOL: f64 = 1e-4;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ModelKind {
    #[serde(rename = "so-d")]
    SoD,
    #[serde(rename = "ol-d")]
    OlD,
    #[serde(rename = "so-s")]
    SoS,
    #[serde(rename = "ol-s")]
    OlS,
}

impl ModelKind {
    pub fn loans(self) -> bool {
        matches!(self, ModelKind::OlD | ModelKind::OlS)
    }

    pub fn is_stochastic(self) -> bool {
        matches!(self, ModelKind::SoS | ModelKind::OlS)
    }

    pub fn deterministic(loans: bool) -> Self {
        if loans {
            ModelKind::OlD
        } else {
            ModelKind::SoD
        }
    }

    pub fn stochastic(loans: bool) -> Self {
        if loans {
            ModelKind::OlS
        } else {
            ModelKind::SoS
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            ModelKind::SoD => "so-d",
            ModelKind::OlD => "ol-d",
            ModelKind::SoS => "so-s",
            ModelKind::OlS => "ol-s",
        }
    }
}

impl fmt::Display for ModelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ModelKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().replace('_', "-").as_str() {
            "so-d" => Ok(ModelKind::SoD),
            "ol-d" => Ok(ModelKind::OlD),
            "so-s" => Ok(ModelKind::SoS),
            "ol-s" => Ok(ModelKind::OlS),
            other => Err(Error::Input(format!("unknown model '{other}' (so-d, ol-d, so-s, ol-s)"))),
        }
    }
}

/// How non-anticipativity is expressed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Formulation {
    /// One variable per lattice node.
    #[default]
    Nodes,
    /// Per-scenario variables tied by linear equalities within each history
    /// class.
    Explicit,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BuildOptions {
    pub formulation: Formulation,
    /// Multiplier on the computed big-M constants.
    pub big_m_scale: f64,
    /// Fixes the first-period orders (the root decision) to these values.
    pub fixed_first_orders: Option<Vec<f64>>,
}

impl Default for BuildOptions {
    fn default() -> Self {
        Self {
            formulation: Formulation::Nodes,
            big_m_scale: 1.0,
            fixed_first_orders: None,
        }
    }
}

/// Decisions and state at one lattice node.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NodeDecision {
    pub id: usize,
    pub depth: usize,
    pub parent: Option<usize>,
    pub probability: f64,
    /// Demand of the node's period (empty at the root).
    pub demand: Vec<f64>,
    /// Orders for period `depth + 1`, absent at the leaves.
    pub orders: Option<Vec<f64>>,
    pub inventory: Option<Vec<f64>>,
    pub delta: Option<Vec<f64>>,
    pub loans: Option<Vec<f64>>,
    pub cash: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioOutcome {
    pub probability: f64,
    pub demands: Vec<Vec<f64>>,
    pub trajectory: Trajectory,
}

/// A solved and replay-validated plan.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlanSolution {
    pub kind: ModelKind,
    /// Solver objective (expected final cash).
    pub objective: f64,
    /// Probability-weighted final cash of the replayed trajectories.
    pub expected_final_cash: f64,
    pub status: SolveStatus,
    pub gap: f64,
    pub n_variables: usize,
    pub n_binaries: usize,
    pub n_constraints: usize,
    pub scenarios: Vec<ScenarioOutcome>,
    pub nodes: Vec<NodeDecision>,
    #[serde(skip)]
    pub wall_time: Duration,
}

impl PlanSolution {
    /// Orders of period 1 (identical in every scenario).
    pub fn first_period_orders(&self) -> Vec<f64> {
        self.scenarios[0].trajectory.orders.iter().map(|row| row[0]).collect()
    }

    pub fn is_optimal(&self) -> bool {
        self.status == SolveStatus::Optimal
    }

    pub fn to_json_pretty(&self) -> String {
        serde_json::to_string_pretty(self).expect("plan serializes")
    }

    /// One row per scenario: probability, final cash, total loan value.
    pub fn write_summary_csv<W: Write>(&self, cfg: &InstanceConfig, w: W) -> Result<()> {
        let mut wr = csv::Writer::from_writer(w);
        wr.write_record(["scenario", "probability", "final_cash", "total_loan"])?;
        for (s, sc) in self.scenarios.iter().enumerate() {
            wr.write_record([
                s.to_string(),
                format!("{}", sc.probability),
                format!("{:.6}", sc.trajectory.final_cash),
                format!("{:.6}", sc.trajectory.total_loan(cfg)),
            ])?;
        }
        wr.flush()?;
        Ok(())
    }
}

/// Builds, solves, extracts and validates a model of `kind` on `fan`.
pub fn solve(
    cfg: &InstanceConfig,
    fan: &ScenarioFan,
    kind: ModelKind,
    build_opts: &BuildOptions,
    backend: &dyn Backend,
    solve_opts: &SolveOptions,
) -> Result<PlanSolution> {
    if !kind.is_stochastic() && fan.len() != 1 {
        return Err(Error::Input(format!(
            "{kind} needs a point forecast (one scenario), got {} scenarios",
            fan.len()
        )));
    }
    let built = build(cfg, fan, kind.loans(), build_opts)?;
    let out = built.model.optimize(backend, solve_opts)?;
    match out.status {
        SolveStatus::Optimal | SolveStatus::FeasibleIncumbent => {}
        SolveStatus::Infeasible => {
            return Err(Error::Infeasible(format!(
                "{kind} model reported infeasible; the empty plan should always be feasible under the {:?} cash rule",
                cfg.cash_rule
            )))
        }
        SolveStatus::Error => {
            return Err(Error::Solver(out.message.unwrap_or_else(|| "solver failed".into())));
        }
    }
    if out.status == SolveStatus::FeasibleIncumbent {
        log::warn!("{kind}: time limit reached, returning incumbent with gap {:.3e}", out.gap);
    }
    let mut plan = extract(cfg, fan, kind, &built, &out.values)?;
    plan.objective = out.objective;
    plan.status = out.status;
    plan.gap = out.gap;
    plan.wall_time = out.wall_time;
    let scale = plan.objective.abs().max(1.0);
    if (plan.objective - plan.expected_final_cash).abs() > OBJECTIVE_TOL * scale {
        return Err(Error::Replay(format!(
            "objective {} differs from replayed expected final cash {}",
            plan.objective, plan.expected_final_cash
        )));
    }
    Ok(plan)
}

/// Deterministic model at `forecast[n][t]`.
pub fn solve_deterministic(
    cfg: &InstanceConfig,
    forecast: Vec<Vec<f64>>,
    loans: bool,
    backend: &dyn Backend,
    solve_opts: &SolveOptions,
) -> Result<PlanSolution> {
    solve(
        cfg,
        &ScenarioFan::single(forecast),
        ModelKind::deterministic(loans),
        &BuildOptions::default(),
        backend,
        solve_opts,
    )
}

fn clean(x: f64) -> f64 {
    if x.abs() < 1e-10 {
        0.0
    } else {
        x
    }
}

/// Reads node decisions from solver values and replays each scenario.
fn extract(
    cfg: &InstanceConfig,
    fan: &ScenarioFan,
    kind: ModelKind,
    built: &BuiltModel,
    values: &[f64],
) -> Result<PlanSolution> {
    let idx = &built.index;
    let lat = &idx.lattice;
    let n = cfg.n_products;
    let horizon = cfg.horizon;
    let vals = |v: &Option<Vec<crate::solver::Var>>| v.as_ref().map(|vs| vs.iter().map(|&x| clean(values[x.index()])).collect::<Vec<f64>>());

    let nodes: Vec<NodeDecision> = lat
        .nodes
        .iter()
        .enumerate()
        .map(|(id, node)| NodeDecision {
            id,
            depth: node.depth,
            parent: node.parent,
            probability: node.probability,
            demand: node.demand.clone(),
            orders: vals(&idx.orders[id]),
            inventory: vals(&idx.inventory[id]),
            delta: vals(&idx.delta[id]),
            loans: vals(&idx.loans[id]),
            cash: idx.cash[id].map_or(cfg.initial_cash, |c| values[c.index()]),
        })
        .collect();

    let mut scenarios = Vec::with_capacity(fan.len());
    let mut expected = 0.0;
    for (s, demands) in fan.scenarios.iter().enumerate() {
        let path = &lat.path[s];
        let mut orders = vec![vec![0.0; horizon]; n];
        let mut loans = vec![vec![0.0; horizon]; n];
        for t in 1..=horizon {
            let q = nodes[path[t - 1]].orders.as_ref().expect("orders on pre-demand node");
            for i in 0..n {
                orders[i][t - 1] = q[i];
                if let Some(g) = &nodes[path[t]].loans {
                    loans[i][t - 1] = g[i];
                }
            }
        }
        let tr = simulate(cfg, demands, &orders, &loans, kind.loans())?;
        check_replay(s, &tr, path, &nodes, idx, values)?;
        expected += fan.probabilities[s] * tr.final_cash;
        scenarios.push(ScenarioOutcome {
            probability: fan.probabilities[s],
            demands: demands.clone(),
            trajectory: tr,
        });
    }

    Ok(PlanSolution {
        kind,
        objective: f64::NAN,
        expected_final_cash: expected,
        status: SolveStatus::Optimal,
        gap: 0.0,
        n_variables: built.model.vars().len(),
        n_binaries: built.model.n_binaries(),
        n_constraints: built.model.constraints().len(),
        scenarios,
        nodes,
        wall_time: Duration::ZERO,
    })
}

fn check_replay(
    s: usize,
    tr: &Trajectory,
    path: &[usize],
    nodes: &[NodeDecision],
    idx: &ModelIndex,
    values: &[f64],
) -> Result<()> {
    let mismatch = |what: &str, t: usize, model: f64, sim: f64| {
        Error::Replay(format!("scenario {s}, {what} at period {t}: model {model}, simulation {sim}"))
    };
    if let Some(v) = tr.violations.first() {
        return Err(Error::Replay(format!("scenario {s} breaks a constraint: {v:?}")));
    }
    for (t, &id) in path.iter().enumerate().skip(1) {
        let inv = nodes[id].inventory.as_ref().expect("inventory");
        let rev = idx.revenue[id].as_ref().expect("revenue");
        for i in 0..inv.len() {
            if (inv[i] - tr.inventory[i][t]).abs() > REPLAY_TOL {
                return Err(mismatch("inventory", t, inv[i], tr.inventory[i][t]));
            }
            let r = rev[i].eval(values);
            if (r - tr.revenue[i][t]).abs() > REPLAY_TOL {
                return Err(mismatch("revenue", t, r, tr.revenue[i][t]));
            }
        }
        if (nodes[id].cash - tr.cash[t]).abs() > REPLAY_TOL {
            return Err(mismatch("cash", t, nodes[id].cash, tr.cash[t]));
        }
    }
    let leaf = *path.last().expect("path");
    let fc = nodes[leaf].cash + idx.tail[leaf].as_ref().expect("tail").eval(values);
    if (fc - tr.final_cash).abs() > REPLAY_TOL {
        return Err(mismatch("final cash", path.len() - 1, fc, tr.final_cash));
    }
    Ok(())
}

#[cfg(test)]
mod tests;
