//! Value-of-information measures, tree stability, sample-size sweeps and loan
//! profit-gap studies.

use std::fmt;
use std::io::Write;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::instance::{CashRule, InstanceConfig, Regime};
use crate::planner::{self, BuildOptions, ModelKind, PlanSolution, REPLAY_TOL};
use crate::scenario_gen::ScenarioTree;
use crate::scenario_reduce::{fast_forward_select, ScenarioFan};
use crate::simulate::{simulate, Trajectory};
use crate::solver::{Backend, SolveOptions};

/// Entries of a stability matrix further apart than this (relative) mark the
/// trees as unstable.
pub const STABILITY_THRESHOLD: f64 = 0.05;

/// Shared solver settings for a study.
#[derive(Clone, Copy)]
pub struct Solver<'a> {
    pub backend: &'a dyn Backend,
    pub options: &'a SolveOptions,
}

impl Solver<'_> {
    fn plan(&self, cfg: &InstanceConfig, fan: &ScenarioFan, kind: ModelKind, opts: &BuildOptions) -> Result<PlanSolution> {
        planner::solve(cfg, fan, kind, opts, self.backend, self.options)
    }

    fn stochastic(&self, cfg: &InstanceConfig, fan: &ScenarioFan, loans: bool) -> Result<PlanSolution> {
        self.plan(cfg, fan, ModelKind::stochastic(loans), &BuildOptions::default())
    }
}

/// Expected objective with perfect foresight: each scenario solved on its own.
pub fn wait_and_see(cfg: &InstanceConfig, fan: &ScenarioFan, loans: bool, solver: Solver<'_>) -> Result<f64> {
    fan.validate()?;
    let values: Vec<f64> = fan
        .scenarios
        .par_iter()
        .map(|d| {
            planner::solve_deterministic(cfg, d.clone(), loans, solver.backend, solver.options).map(|p| p.objective)
        })
        .collect::<Result<_>>()?;
    Ok(values.iter().zip(&fan.probabilities).map(|(v, p)| v * p).sum())
}

/// Result of scoring the mean-forecast plan on every scenario.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeterministicValue {
    pub dv: f64,
    pub deterministic_objective: f64,
    /// Scenarios where purchases or loans had to be cut back.
    pub repaired_scenarios: usize,
    pub repair_policy: String,
}

pub const REPAIR_POLICY: &str = "period purchases scaled by min(1, available cash / planned spend); \
loans clipped to realized sales and to the remaining loan limit";

/// Replays a fixed plan on one demand path, cutting it back where it would
/// break a constraint. Returns the trajectory and whether anything changed.
pub fn repair_and_simulate(
    cfg: &InstanceConfig,
    demands: &[Vec<f64>],
    orders: &[Vec<f64>],
    loans: &[Vec<f64>],
    loans_enabled: bool,
) -> Result<(Trajectory, bool)> {
    let n = cfg.n_products;
    let mut q = orders.to_vec();
    let mut g = if loans_enabled {
        loans.to_vec()
    } else {
        vec![vec![0.0; cfg.horizon]; n]
    };
    let mut changed = false;
    let mut loan_used = 0.0;
    for t in 1..=cfg.horizon {
        // Cash and stock at the start of period t only depend on earlier periods.
        let tr = simulate(cfg, demands, &q, &g, loans_enabled)?;
        let spend: f64 = (0..n).map(|i| cfg.unit_cost[i] * q[i][t - 1]).sum();
        let available = match cfg.cash_rule {
            CashRule::Strict => tr.cash[t - 1],
            CashRule::NonNegativePurchasing => tr.cash[t - 1].max(0.0),
        };
        if spend > available + REPLAY_TOL * available.abs().max(1.0) && spend > 0.0 {
            let theta = (available / spend).clamp(0.0, 1.0);
            for row in q.iter_mut() {
                row[t - 1] *= theta;
            }
            changed = true;
        }
        if loans_enabled {
            let tr = simulate(cfg, demands, &q, &g, true)?;
            for i in 0..n {
                let room = ((cfg.loan_limit - loan_used) / cfg.price[i]).max(0.0);
                let cap = tr.sales[i][t - 1].min(room);
                if g[i][t - 1] > cap + REPLAY_TOL * cap.max(1.0) {
                    g[i][t - 1] = cap;
                    changed = true;
                }
                loan_used += cfg.price[i] * g[i][t - 1];
            }
        }
    }
    Ok((simulate(cfg, demands, &q, &g, loans_enabled)?, changed))
}

/// Solves the deterministic model at the fan's mean demand and scores its
/// plan on every scenario.
pub fn expected_value_of_deterministic(
    cfg: &InstanceConfig,
    fan: &ScenarioFan,
    loans: bool,
    solver: Solver<'_>,
) -> Result<DeterministicValue> {
    fan.validate()?;
    let plan = planner::solve_deterministic(cfg, fan.mean(), loans, solver.backend, solver.options)?;
    let tr = &plan.scenarios[0].trajectory;
    let mut dv = 0.0;
    let mut repaired = 0;
    for (d, p) in fan.scenarios.iter().zip(&fan.probabilities) {
        let (out, changed) = repair_and_simulate(cfg, d, &tr.orders, &tr.loans, loans)?;
        dv += p * out.final_cash;
        repaired += changed as usize;
    }
    Ok(DeterministicValue {
        dv,
        deterministic_objective: plan.objective,
        repaired_scenarios: repaired,
        repair_policy: REPAIR_POLICY.to_string(),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValueOfInformation {
    pub kind: ModelKind,
    pub dv: f64,
    pub sv: f64,
    pub pv: f64,
    pub evpi: f64,
    pub vss: f64,
    pub repaired_scenarios: usize,
}

pub fn value_of_information(
    cfg: &InstanceConfig,
    fan: &ScenarioFan,
    loans: bool,
    solver: Solver<'_>,
) -> Result<ValueOfInformation> {
    let sv = solver.stochastic(cfg, fan, loans)?.objective;
    let pv = wait_and_see(cfg, fan, loans, solver)?;
    let dv = expected_value_of_deterministic(cfg, fan, loans, solver)?;
    Ok(ValueOfInformation {
        kind: ModelKind::stochastic(loans),
        dv: dv.dv,
        sv,
        pv,
        evpi: pv - sv,
        vss: sv - dv.dv,
        repaired_scenarios: dv.repaired_scenarios,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StabilityMatrix {
    pub kind: ModelKind,
    /// `values[a][b]`: first-period orders of tree `a`'s optimum, re-solved on
    /// tree `b`. The diagonal is the plain optimum of each tree.
    pub values: Vec<Vec<f64>>,
    pub first_orders: Vec<Vec<f64>>,
    /// `(max - min) / |min|` over all entries.
    pub max_relative_gap: f64,
    pub stable: bool,
}

/// Out-of-sample stability across trees of identical shape.
pub fn stability_matrix(
    cfg: &InstanceConfig,
    fans: &[ScenarioFan],
    loans: bool,
    solver: Solver<'_>,
) -> Result<StabilityMatrix> {
    if fans.len() < 2 {
        return Err(Error::Input("stability needs at least two trees".into()));
    }
    let shape = |f: &ScenarioFan| (f.n_products(), f.horizon(), f.len());
    if let Some(bad) = fans.iter().position(|f| shape(f) != shape(&fans[0])) {
        return Err(Error::Input(format!(
            "tree {bad} has shape {:?}, tree 0 has {:?}",
            shape(&fans[bad]),
            shape(&fans[0])
        )));
    }
    let kind = ModelKind::stochastic(loans);
    let diag: Vec<PlanSolution> = fans
        .par_iter()
        .map(|f| solver.stochastic(cfg, f, loans))
        .collect::<Result<_>>()?;
    let first: Vec<Vec<f64>> = diag.iter().map(PlanSolution::first_period_orders).collect();
    let k = fans.len();
    let pairs: Vec<(usize, usize)> = (0..k).flat_map(|a| (0..k).map(move |b| (a, b))).filter(|(a, b)| a != b).collect();
    let off: Vec<f64> = pairs
        .par_iter()
        .map(|&(a, b)| {
            let opts = BuildOptions {
                fixed_first_orders: Some(first[a].clone()),
                ..Default::default()
            };
            solver.plan(cfg, &fans[b], kind, &opts).map(|p| p.objective)
        })
        .collect::<Result<_>>()?;
    let mut values = vec![vec![0.0; k]; k];
    for (a, p) in diag.iter().enumerate() {
        values[a][a] = p.objective;
    }
    for (&(a, b), v) in pairs.iter().zip(off) {
        values[a][b] = v;
    }
    let all = values.iter().flatten();
    let max = all.clone().copied().fold(f64::NEG_INFINITY, f64::max);
    let min = all.copied().fold(f64::INFINITY, f64::min);
    let gap = (max - min) / min.abs().max(1e-12);
    Ok(StabilityMatrix {
        kind,
        values,
        first_orders: first,
        max_relative_gap: gap,
        stable: gap < STABILITY_THRESHOLD,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub size: usize,
    pub objective: f64,
}

/// Reduces `full` to each size with fast forward selection and solves.
pub fn sample_size_sweep(
    cfg: &InstanceConfig,
    full: &ScenarioFan,
    sizes: &[usize],
    loans: bool,
    solver: Solver<'_>,
) -> Result<Vec<SweepRow>> {
    if let Some(&bad) = sizes.iter().find(|&&k| k == 0 || k > full.len()) {
        return Err(Error::KOutOfRange { k: bad, n: full.len() });
    }
    sizes
        .par_iter()
        .map(|&k| {
            let fan = if k == full.len() {
                full.clone()
            } else {
                fast_forward_select(full, k)?.apply(full)
            };
            let objective = solver.stochastic(cfg, &fan, loans)?.objective;
            Ok(SweepRow { size: k, objective })
        })
        .collect()
}

/// Relative spread `(max - min) / |min|` of sweep objectives.
pub fn sweep_spread(rows: &[SweepRow]) -> f64 {
    let max = rows.iter().map(|r| r.objective).fold(f64::NEG_INFINITY, f64::max);
    let min = rows.iter().map(|r| r.objective).fold(f64::INFINITY, f64::min);
    (max - min) / min.abs().max(1e-12)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StudyParameter {
    InitialCash,
    ReceiptDelay,
    Overhead,
    Pattern,
}

impl FromStr for StudyParameter {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().replace('-', "_").as_str() {
            "initial_cash" | "c0" | "cash" => Ok(StudyParameter::InitialCash),
            "receipt_delay" | "l" | "delay" => Ok(StudyParameter::ReceiptDelay),
            "overhead" | "h" => Ok(StudyParameter::Overhead),
            "pattern" | "demand_pattern" => Ok(StudyParameter::Pattern),
            other => Err(Error::Input(format!(
                "unknown parameter '{other}' (initial-cash, receipt-delay, overhead, pattern)"
            ))),
        }
    }
}

impl fmt::Display for StudyParameter {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            StudyParameter::InitialCash => "initial_cash",
            StudyParameter::ReceiptDelay => "receipt_delay",
            StudyParameter::Overhead => "overhead",
            StudyParameter::Pattern => "pattern",
        })
    }
}

/// A value of a [`StudyParameter`]. Patterns are written as regime flags,
/// e.g. `000011`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ParameterValue {
    Number(f64),
    Pattern(Vec<Regime>),
}

impl ParameterValue {
    pub fn parse(param: StudyParameter, s: &str) -> Result<Self> {
        let s = s.trim();
        match param {
            StudyParameter::Pattern => s
                .chars()
                .filter(|c| !matches!(c, ',' | ' ' | '[' | ']'))
                .map(|c| {
                    Regime::from_flag(c.to_digit(10).map_or(u64::MAX, u64::from))
                        .ok_or_else(|| Error::Input(format!("pattern '{s}' must be a string of 0/1 flags")))
                })
                .collect::<Result<_>>()
                .map(ParameterValue::Pattern),
            _ => s
                .parse()
                .map(ParameterValue::Number)
                .map_err(|_| Error::Input(format!("'{s}' is not a number"))),
        }
    }

    pub fn label(&self) -> String {
        match self {
            ParameterValue::Number(x) => format!("{x}"),
            ParameterValue::Pattern(p) => p.iter().map(|r| r.flag().to_string()).collect(),
        }
    }
}

/// Applies a parameter value; returns the changed config and demand pattern.
pub fn apply_parameter(cfg: &InstanceConfig, param: StudyParameter, value: &ParameterValue) -> Result<InstanceConfig> {
    let mut c = cfg.clone();
    match (param, value) {
        (StudyParameter::InitialCash, ParameterValue::Number(x)) => c.initial_cash = *x,
        (StudyParameter::ReceiptDelay, ParameterValue::Number(x)) => {
            if *x < 0.0 || x.fract() != 0.0 {
                return Err(Error::Input(format!("receipt delay {x} must be a non-negative integer")));
            }
            c.receipt_delay = *x as usize;
        }
        (StudyParameter::Overhead, ParameterValue::Number(x)) => c.overhead = vec![*x; c.horizon],
        (StudyParameter::Pattern, ParameterValue::Pattern(p)) => c.demand_pattern = p.clone(),
        _ => return Err(Error::Input(format!("value {} does not fit parameter {param}", value.label()))),
    }
    c.validate().map_err(Error::Invalid)?;
    Ok(c)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProfitGapRow {
    pub value: ParameterValue,
    pub so_s: f64,
    pub ol_s: f64,
    /// `(OL-S - SO-S) / |SO-S|` in percent.
    pub gap_percent: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProfitGapTable {
    pub parameter: StudyParameter,
    pub rows: Vec<ProfitGapRow>,
}

/// Loan profit gap for each parameter value. The tree is re-expanded when
/// the pattern changes and reduced to `reduce_to` scenarios when given.
pub fn profit_gap_study(
    cfg: &InstanceConfig,
    tree: &ScenarioTree,
    reduce_to: Option<usize>,
    param: StudyParameter,
    values: &[ParameterValue],
    solver: Solver<'_>,
) -> Result<ProfitGapTable> {
    let prepared: Vec<(InstanceConfig, ScenarioFan)> = values
        .iter()
        .map(|v| {
            let c = apply_parameter(cfg, param, v)?;
            let full = tree.with_pattern(c.demand_pattern.clone())?.to_fan();
            let fan = match reduce_to {
                Some(k) if k < full.len() => fast_forward_select(&full, k)?.apply(&full),
                _ => full,
            };
            Ok((c, fan))
        })
        .collect::<Result<_>>()?;
    let jobs: Vec<(usize, bool)> = (0..values.len()).flat_map(|i| [(i, false), (i, true)]).collect();
    let objs: Vec<f64> = jobs
        .par_iter()
        .map(|&(i, loans)| solver.stochastic(&prepared[i].0, &prepared[i].1, loans).map(|p| p.objective))
        .collect::<Result<_>>()?;
    let rows = values
        .iter()
        .enumerate()
        .map(|(i, v)| {
            let (so, ol) = (objs[2 * i], objs[2 * i + 1]);
            ProfitGapRow {
                value: v.clone(),
                so_s: so,
                ol_s: ol,
                gap_percent: 100.0 * (ol - so) / so.abs().max(1e-12),
            }
        })
        .collect();
    Ok(ProfitGapTable { parameter: param, rows })
}

/// Everything a full evaluation run produces.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct EvaluationReport {
    /// How infeasible deterministic plans were scored, when DV was computed.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dv_repair_policy: Option<String>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub value_of_information: Vec<ValueOfInformation>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub stability: Vec<StabilityMatrix>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub sweep: Vec<(ModelKind, Vec<SweepRow>)>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub profit_gap: Vec<ProfitGapTable>,
}

impl EvaluationReport {
    pub fn to_json_pretty(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    /// Writes one CSV per study present in the report. Returns the file names.
    pub fn write_csvs(&self, dir: &std::path::Path) -> Result<Vec<String>> {
        let mut names = Vec::new();
        let mut emit = |name: String, header: &[&str], rows: Vec<Vec<String>>| -> Result<()> {
            let mut w = csv::Writer::from_path(dir.join(&name))?;
            w.write_record(header)?;
            for r in rows {
                w.write_record(r)?;
            }
            w.flush()?;
            names.push(name);
            Ok(())
        };
        if !self.value_of_information.is_empty() {
            let rows = self
                .value_of_information
                .iter()
                .map(|v| {
                    vec![
                        v.kind.to_string(),
                        fmt_money(v.dv),
                        fmt_money(v.sv),
                        fmt_money(v.pv),
                        fmt_money(v.evpi),
                        fmt_money(v.vss),
                    ]
                })
                .collect();
            emit("vss_evpi.csv".into(), &["model", "dv", "sv", "pv", "evpi", "vss"], rows)?;
        }
        for m in &self.stability {
            let k = m.values.len();
            let header: Vec<String> = std::iter::once("solution_from".to_string())
                .chain((1..=k).map(|b| format!("tree_{b}")))
                .collect();
            let header: Vec<&str> = header.iter().map(String::as_str).collect();
            let rows = m
                .values
                .iter()
                .enumerate()
                .map(|(a, row)| {
                    std::iter::once(format!("tree_{}", a + 1))
                        .chain(row.iter().map(|&v| fmt_money(v)))
                        .collect()
                })
                .collect();
            emit(format!("stability_{}.csv", m.kind), &header, rows)?;
        }
        for (kind, rows) in &self.sweep {
            let rows = rows
                .iter()
                .map(|r| vec![r.size.to_string(), fmt_money(r.objective)])
                .collect();
            emit(format!("sweep_{kind}.csv"), &["sample_size", "objective"], rows)?;
        }
        for t in &self.profit_gap {
            let rows = t
                .rows
                .iter()
                .map(|r| {
                    vec![
                        r.value.label(),
                        fmt_money(r.so_s),
                        fmt_money(r.ol_s),
                        format!("{:.4}", r.gap_percent),
                    ]
                })
                .collect();
            emit(
                format!("profit_gap_{}.csv", t.parameter),
                &[&t.parameter.to_string(), "so_s", "ol_s", "gap_percent"],
                rows,
            )?;
        }
        Ok(names)
    }

    pub fn write_json<W: Write>(&self, mut w: W) -> Result<()> {
        w.write_all(self.to_json_pretty().as_bytes())?;
        w.write_all(b"\n")?;
        Ok(())
    }
}

fn fmt_money(x: f64) -> String {
    format!("{x:.4}")
}
