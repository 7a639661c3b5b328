use std::time::Instant;

use highs::{HighsModelStatus, HighsSolutionStatus, RowProblem};

use super::{Backend, Cmp, LinearModel, Sense, SolveOptions, SolveOutcome, SolveStatus, VarKind};
use crate::error::{Error, Result};

/// HiGHS branch-and-cut through its C API.
#[derive(Debug, Clone, Copy, Default)]
pub struct HighsBackend;

struct RawResult {
    status: HighsModelStatus,
    has_primal: bool,
    objective: f64,
    values: Vec<f64>,
    gap: f64,
}

fn opt<V: highs::HighsOptionValue>(m: &mut highs::Model, name: &str, value: V) -> Result<()> {
    m.try_set_option(name, value)
        .map_err(|s| Error::Solver(format!("HiGHS option {name}: {s:?}")))
}

fn run(model: &LinearModel, options: &SolveOptions, integers: bool, time_limit: f64) -> Result<RawResult> {
    let mut pb = RowProblem::default();
    let mut cost = vec![0.0; model.vars.len()];
    for &(v, c) in &model.objective.terms {
        cost[v.0] += c;
    }
    let cols: Vec<highs::Col> = model
        .vars
        .iter()
        .zip(&cost)
        .map(|(v, &c)| {
            let is_int = integers && v.kind == VarKind::Binary;
            pb.add_column_with_integrality(c, v.lower..=v.upper, is_int)
        })
        .collect();
    for con in &model.constraints {
        let row: Vec<(highs::Col, f64)> = con.lhs.terms.iter().map(|&(v, c)| (cols[v.0], c)).collect();
        match con.cmp {
            Cmp::Le => pb.add_row(..=con.rhs, row),
            Cmp::Ge => pb.add_row(con.rhs.., row),
            Cmp::Eq => pb.add_row(con.rhs..=con.rhs, row),
        }
    }
    let sense = match model.sense {
        Sense::Maximize => highs::Sense::Maximise,
        Sense::Minimize => highs::Sense::Minimise,
    };
    let mut m = pb
        .try_optimise(sense)
        .map_err(|s| Error::Solver(format!("HiGHS rejected the model: {s:?}")))?;
    m.make_quiet();
    opt(&mut m, "threads", options.threads.max(1) as i32)?;
    opt(&mut m, "random_seed", (options.seed % (i32::MAX as u32)) as i32)?;
    opt(&mut m, "mip_rel_gap", options.mip_gap)?;
    opt(&mut m, "time_limit", time_limit.max(1e-3))?;
    opt(&mut m, "primal_feasibility_tolerance", options.feasibility_tolerance)?;
    opt(&mut m, "mip_feasibility_tolerance", options.feasibility_tolerance)?;

    let solved = m
        .try_solve()
        .map_err(|s| Error::Solver(format!("HiGHS run failed: {s:?}")))?;
    let status = solved.status();
    let has_primal = solved.primal_solution_status() == HighsSolutionStatus::Feasible;
    let values = if has_primal {
        solved.get_solution().columns().to_vec()
    } else {
        vec![0.0; model.vars.len()]
    };
    let gap = if integers && model.n_binaries() > 0 {
        solved.mip_gap()
    } else {
        0.0
    };
    Ok(RawResult {
        status,
        has_primal,
        objective: solved.objective_value() + model.objective.constant,
        values,
        gap,
    })
}

impl Backend for HighsBackend {
    fn name(&self) -> &'static str {
        "highs"
    }

    fn solve(&self, model: &LinearModel, options: &SolveOptions) -> Result<SolveOutcome> {
        let start = Instant::now();
        let limit = options.time_limit.as_secs_f64();
        let raw = run(model, options, true, limit)?;
        let status = match raw.status {
            HighsModelStatus::Optimal => SolveStatus::Optimal,
            HighsModelStatus::Infeasible => SolveStatus::Infeasible,
            HighsModelStatus::ReachedTimeLimit
            | HighsModelStatus::ReachedIterationLimit
            | HighsModelStatus::ReachedSolutionLimit
            | HighsModelStatus::ReachedInterrupt
            | HighsModelStatus::ReachedMemoryLimit
                if raw.has_primal =>
            {
                SolveStatus::FeasibleIncumbent
            }
            HighsModelStatus::ModelEmpty => SolveStatus::Optimal,
            _ => SolveStatus::Error,
        };
        let mut out = SolveOutcome {
            status,
            objective: raw.objective,
            values: raw.values,
            gap: raw.gap,
            wall_time: start.elapsed(),
            message: (status == SolveStatus::Error).then(|| format!("HiGHS status {:?}", raw.status)),
        };
        if status == SolveStatus::Optimal && model.vars.is_empty() {
            out.objective = model.objective.constant;
        }

        if options.polish && out.has_solution() && model.n_binaries() > 0 {
            let mut fixed = model.clone();
            for (i, v) in model.vars.iter().enumerate() {
                if v.kind == VarKind::Binary {
                    let b = out.values[i].round().clamp(v.lower, v.upper);
                    fixed.vars[i].lower = b;
                    fixed.vars[i].upper = b;
                }
            }
            let remaining = (limit - start.elapsed().as_secs_f64()).max(1.0);
            let lp = run(&fixed, options, false, remaining)?;
            if lp.status == HighsModelStatus::Optimal && lp.has_primal {
                out.values = lp.values;
                out.objective = lp.objective;
            } else {
                log::warn!("polishing LP ended with {:?}; keeping branch-and-cut values", lp.status);
            }
        }
        out.wall_time = start.elapsed();
        Ok(out)
    }
}
