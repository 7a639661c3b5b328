//! Solver-agnostic mixed-integer linear models.
//!
//! Planner code builds a [`LinearModel`] and hands it to a [`Backend`]; the
//! concrete solver is picked at runtime (see [`backend_from_env`]).

mod highs_backend;
pub mod lp_format;

use std::fmt;
use std::ops::{Add, AddAssign, Mul, Neg, Sub, SubAssign};
use std::time::Duration;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use highs_backend::HighsBackend;

/// Environment variable naming the solver backend.
pub const SOLVER_ENV: &str = "PLANNER_SOLVER";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Var(pub(crate) usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum VarKind {
    Continuous,
    Binary,
}

#[derive(Debug, Clone, PartialEq)]
pub struct VarDef {
    pub name: String,
    pub kind: VarKind,
    pub lower: f64,
    pub upper: f64,
}

/// Sparse linear expression with a constant term.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct LinExpr {
    pub terms: Vec<(Var, f64)>,
    pub constant: f64,
}

impl LinExpr {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn constant(c: f64) -> Self {
        Self {
            terms: Vec::new(),
            constant: c,
        }
    }

    pub fn add_term(&mut self, v: Var, coef: f64) {
        if coef != 0.0 {
            self.terms.push((v, coef));
        }
    }

    /// Merges repeated variables and drops zero coefficients, keeping first
    /// occurrence order.
    pub fn compact(&self) -> LinExpr {
        let mut order: Vec<Var> = Vec::new();
        let mut coef: std::collections::HashMap<Var, f64> = std::collections::HashMap::new();
        for &(v, c) in &self.terms {
            let e = coef.entry(v).or_insert_with(|| {
                order.push(v);
                0.0
            });
            *e += c;
        }
        LinExpr {
            terms: order
                .into_iter()
                .filter_map(|v| {
                    let c = coef[&v];
                    (c != 0.0).then_some((v, c))
                })
                .collect(),
            constant: self.constant,
        }
    }

    pub fn eval(&self, values: &[f64]) -> f64 {
        self.constant + self.terms.iter().map(|&(v, c)| c * values[v.0]).sum::<f64>()
    }
}

impl From<Var> for LinExpr {
    fn from(v: Var) -> Self {
        LinExpr {
            terms: vec![(v, 1.0)],
            constant: 0.0,
        }
    }
}

impl From<f64> for LinExpr {
    fn from(c: f64) -> Self {
        LinExpr::constant(c)
    }
}

impl<T: Into<LinExpr>> AddAssign<T> for LinExpr {
    fn add_assign(&mut self, rhs: T) {
        let rhs = rhs.into();
        self.terms.extend(rhs.terms);
        self.constant += rhs.constant;
    }
}

impl<T: Into<LinExpr>> SubAssign<T> for LinExpr {
    fn sub_assign(&mut self, rhs: T) {
        let rhs = rhs.into();
        self.terms.extend(rhs.terms.into_iter().map(|(v, c)| (v, -c)));
        self.constant -= rhs.constant;
    }
}

impl<T: Into<LinExpr>> Add<T> for LinExpr {
    type Output = LinExpr;
    fn add(mut self, rhs: T) -> LinExpr {
        self += rhs;
        self
    }
}

impl<T: Into<LinExpr>> Sub<T> for LinExpr {
    type Output = LinExpr;
    fn sub(mut self, rhs: T) -> LinExpr {
        self -= rhs;
        self
    }
}

impl Mul<f64> for LinExpr {
    type Output = LinExpr;
    fn mul(mut self, k: f64) -> LinExpr {
        for t in &mut self.terms {
            t.1 *= k;
        }
        self.constant *= k;
        self
    }
}

impl Neg for LinExpr {
    type Output = LinExpr;
    fn neg(self) -> LinExpr {
        self * -1.0
    }
}

impl Mul<f64> for Var {
    type Output = LinExpr;
    fn mul(self, k: f64) -> LinExpr {
        LinExpr {
            terms: vec![(self, k)],
            constant: 0.0,
        }
    }
}

impl Mul<Var> for f64 {
    type Output = LinExpr;
    fn mul(self, v: Var) -> LinExpr {
        v * self
    }
}

impl<T: Into<LinExpr>> Add<T> for Var {
    type Output = LinExpr;
    fn add(self, rhs: T) -> LinExpr {
        LinExpr::from(self) + rhs
    }
}

impl<T: Into<LinExpr>> Sub<T> for Var {
    type Output = LinExpr;
    fn sub(self, rhs: T) -> LinExpr {
        LinExpr::from(self) - rhs
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Cmp {
    Le,
    Ge,
    Eq,
}

impl fmt::Display for Cmp {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Cmp::Le => "<=",
            Cmp::Ge => ">=",
            Cmp::Eq => "=",
        })
    }
}

/// `lhs cmp rhs`, stored with all variables on the left and a constant right side.
#[derive(Debug, Clone, PartialEq)]
pub struct Constraint {
    pub name: String,
    pub lhs: LinExpr,
    pub cmp: Cmp,
    pub rhs: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Sense {
    Maximize,
    Minimize,
}

/// A mixed-integer linear program under construction.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearModel {
    pub(crate) vars: Vec<VarDef>,
    pub(crate) constraints: Vec<Constraint>,
    pub(crate) objective: LinExpr,
    pub(crate) sense: Sense,
}

impl Default for LinearModel {
    fn default() -> Self {
        Self::new(Sense::Maximize)
    }
}

impl LinearModel {
    pub fn new(sense: Sense) -> Self {
        Self {
            vars: Vec::new(),
            constraints: Vec::new(),
            objective: LinExpr::new(),
            sense,
        }
    }

    pub fn add_variable(&mut self, name: impl Into<String>, kind: VarKind, lower: f64, upper: f64) -> Var {
        let (lower, upper) = match kind {
            VarKind::Binary => (lower.max(0.0), upper.min(1.0)),
            VarKind::Continuous => (lower, upper),
        };
        self.vars.push(VarDef {
            name: name.into(),
            kind,
            lower,
            upper,
        });
        Var(self.vars.len() - 1)
    }

    /// Continuous variable in `[0, inf)`.
    pub fn add_nonneg(&mut self, name: impl Into<String>) -> Var {
        self.add_variable(name, VarKind::Continuous, 0.0, f64::INFINITY)
    }

    pub fn add_free(&mut self, name: impl Into<String>) -> Var {
        self.add_variable(name, VarKind::Continuous, f64::NEG_INFINITY, f64::INFINITY)
    }

    pub fn add_binary(&mut self, name: impl Into<String>) -> Var {
        self.add_variable(name, VarKind::Binary, 0.0, 1.0)
    }

    /// Adds `lhs cmp rhs`; constants on either side are folded into the right side.
    pub fn add_constraint(
        &mut self,
        name: impl Into<String>,
        lhs: impl Into<LinExpr>,
        cmp: Cmp,
        rhs: impl Into<LinExpr>,
    ) {
        let mut e: LinExpr = lhs.into() - rhs.into();
        let rhs = -e.constant;
        e.constant = 0.0;
        self.constraints.push(Constraint {
            name: name.into(),
            lhs: e.compact(),
            cmp,
            rhs,
        });
    }

    pub fn set_objective(&mut self, sense: Sense, objective: impl Into<LinExpr>) {
        self.sense = sense;
        self.objective = objective.into().compact();
    }

    pub fn fix_variable(&mut self, v: Var, value: f64) {
        self.vars[v.0].lower = value;
        self.vars[v.0].upper = value;
    }

    pub fn var(&self, v: Var) -> &VarDef {
        &self.vars[v.0]
    }

    pub fn vars(&self) -> &[VarDef] {
        &self.vars
    }

    pub fn constraints(&self) -> &[Constraint] {
        &self.constraints
    }

    pub fn objective(&self) -> &LinExpr {
        &self.objective
    }

    pub fn sense(&self) -> Sense {
        self.sense
    }

    pub fn n_binaries(&self) -> usize {
        self.vars.iter().filter(|v| v.kind == VarKind::Binary).count()
    }

    /// Checks references and coefficients.
    pub fn check(&self) -> Result<()> {
        let n = self.vars.len();
        let bad = |e: &LinExpr| e.terms.iter().any(|&(v, c)| v.0 >= n || !c.is_finite());
        if bad(&self.objective) || !self.objective.constant.is_finite() {
            return Err(Error::Solver("objective references an unknown variable or a non-finite coefficient".into()));
        }
        for c in &self.constraints {
            if bad(&c.lhs) || !c.rhs.is_finite() {
                return Err(Error::Solver(format!(
                    "constraint '{}' references an unknown variable or a non-finite coefficient",
                    c.name
                )));
            }
        }
        for v in &self.vars {
            if v.lower > v.upper {
                return Err(Error::Solver(format!("variable '{}' has empty bounds", v.name)));
            }
        }
        Ok(())
    }

    /// Largest constraint or bound violation at `values`.
    pub fn max_violation(&self, values: &[f64]) -> f64 {
        let mut worst: f64 = 0.0;
        for c in &self.constraints {
            let lhs = c.lhs.eval(values);
            let viol = match c.cmp {
                Cmp::Le => lhs - c.rhs,
                Cmp::Ge => c.rhs - lhs,
                Cmp::Eq => (lhs - c.rhs).abs(),
            };
            worst = worst.max(viol);
        }
        for (v, x) in self.vars.iter().zip(values) {
            worst = worst.max(v.lower - x).max(x - v.upper);
        }
        worst
    }

    /// Solves with the given backend.
    pub fn optimize(&self, backend: &dyn Backend, options: &SolveOptions) -> Result<SolveOutcome> {
        self.check()?;
        backend.solve(self, options)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolveOptions {
    /// Relative MIP gap at which the search stops.
    pub mip_gap: f64,
    pub time_limit: Duration,
    /// Solver threads; 1 keeps runs reproducible.
    pub threads: u32,
    pub seed: u32,
    /// After the MIP, fix integers at their rounded values and re-solve the
    /// LP so continuous values satisfy the constraints to LP precision.
    pub polish: bool,
    pub feasibility_tolerance: f64,
}

impl Default for SolveOptions {
    fn default() -> Self {
        Self {
            mip_gap: 1e-6,
            time_limit: Duration::from_secs(600),
            threads: 1,
            seed: 0,
            polish: true,
            feasibility_tolerance: 1e-9,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SolveStatus {
    Optimal,
    /// Stopped by a limit with a feasible incumbent.
    FeasibleIncumbent,
    Infeasible,
    Error,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolveOutcome {
    pub status: SolveStatus,
    pub objective: f64,
    pub values: Vec<f64>,
    pub gap: f64,
    #[serde(skip)]
    pub wall_time: Duration,
    pub message: Option<String>,
}

impl SolveOutcome {
    pub fn value(&self, v: Var) -> f64 {
        self.values[v.0]
    }

    pub fn has_solution(&self) -> bool {
        matches!(self.status, SolveStatus::Optimal | SolveStatus::FeasibleIncumbent)
    }
}

/// A concrete MILP solver.
pub trait Backend: Send + Sync {
    fn name(&self) -> &'static str;
    fn solve(&self, model: &LinearModel, options: &SolveOptions) -> Result<SolveOutcome>;
}

/// Backend named by `name` (case-insensitive).
pub fn backend_by_name(name: &str) -> Result<Box<dyn Backend>> {
    match name.trim().to_ascii_lowercase().as_str() {
        "" | "highs" => Ok(Box::new(HighsBackend)),
        other => Err(Error::Solver(format!("unknown solver backend '{other}' (available: highs)"))),
    }
}

/// Backend selected by `PLANNER_SOLVER`, HiGHS when unset.
pub fn backend_from_env() -> Result<Box<dyn Backend>> {
    backend_by_name(&std::env::var(SOLVER_ENV).unwrap_or_default())
}
