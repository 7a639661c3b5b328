//! Forward recursions for inventory, delayed revenue, cash and final cash.
//!
//! This is the exact evaluation of a fixed ordering/loan plan against one
//! demand path; MILP solutions are replayed through it.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::instance::{CashRule, InstanceConfig, LoanRepayment};

/// Slack allowed before a constraint counts as violated.
pub const VIOLATION_TOL: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Violation {
    /// Purchases of `period` exceed the cash available at its start.
    Cash {
        period: usize,
        purchase: f64,
        available: f64,
    },
    /// Total financed revenue exceeds the loan limit.
    LoanCap { used: f64, limit: f64 },
    /// A loan exceeds the realized sales it is drawn against.
    LoanAboveSales {
        product: usize,
        period: usize,
        loan: f64,
        sales: f64,
    },
}

/// Realized trajectory of a plan on one demand path.
///
/// `orders`, `loans` and `sales` are `[n][t-1]` for periods `1..=T`;
/// `inventory[n][t]` and `cash[t]` include period 0; `revenue[n][t]` runs over
/// `0..=T+L` with index 0 always zero.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub orders: Vec<Vec<f64>>,
    pub loans: Vec<Vec<f64>>,
    pub sales: Vec<Vec<f64>>,
    pub inventory: Vec<Vec<f64>>,
    pub revenue: Vec<Vec<f64>>,
    pub cash: Vec<f64>,
    pub final_cash: f64,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub violations: Vec<Violation>,
}

impl Trajectory {
    pub fn is_feasible(&self) -> bool {
        self.violations.is_empty()
    }

    pub fn total_loan(&self, cfg: &InstanceConfig) -> f64 {
        self.loans
            .iter()
            .zip(&cfg.price)
            .map(|(g, p)| p * g.iter().sum::<f64>())
            .sum()
    }
}

/// Coefficient on `p g[t-L]` deducted from the revenue of period `t`.
pub(crate) fn repayment_coefficient(cfg: &InstanceConfig) -> f64 {
    let f = cfg.repayment_factor();
    match cfg.loan_repayment {
        LoanRepayment::AsPrinted => 1.0 + f,
        LoanRepayment::InterestOnly => f,
    }
}

fn check_matrix(what: &str, m: &[Vec<f64>], n: usize, t: usize) -> Result<()> {
    if m.len() != n {
        return Err(Error::Dimension {
            what: format!("{what} products"),
            expected: n,
            actual: m.len(),
        });
    }
    for row in m {
        if row.len() != t {
            return Err(Error::Dimension {
                what: format!("{what} periods"),
                expected: t,
                actual: row.len(),
            });
        }
    }
    Ok(())
}

/// Runs the plan `(orders, loans)` against `demands`, all `[n][t-1]`.
///
/// Constraint breaches (cash, loan cap, loan above sales) are reported in
/// [`Trajectory::violations`] rather than rejected.
pub fn simulate(
    cfg: &InstanceConfig,
    demands: &[Vec<f64>],
    orders: &[Vec<f64>],
    loans: &[Vec<f64>],
    loans_enabled: bool,
) -> Result<Trajectory> {
    let n = cfg.n_products;
    let horizon = cfg.horizon;
    let lag = cfg.receipt_delay;
    check_matrix("demands", demands, n, horizon)?;
    check_matrix("orders", orders, n, horizon)?;
    check_matrix("loans", loans, n, horizon)?;

    let zero_loans;
    let loans = if loans_enabled {
        loans
    } else {
        zero_loans = vec![vec![0.0; horizon]; n];
        &zero_loans
    };

    let mut inventory = vec![vec![0.0; horizon + 1]; n];
    let mut sales = vec![vec![0.0; horizon]; n];
    for i in 0..n {
        inventory[i][0] = cfg.initial_inventory[i];
        for t in 1..=horizon {
            let available = inventory[i][t - 1] + orders[i][t - 1];
            let left = (available - demands[i][t - 1]).max(0.0);
            inventory[i][t] = left;
            sales[i][t - 1] = available - left;
        }
    }

    let repay = repayment_coefficient(cfg);
    let mut revenue = vec![vec![0.0; horizon + lag + 1]; n];
    for i in 0..n {
        let p = cfg.price[i];
        for t in 1..=horizon + lag {
            let mut r = 0.0;
            if t <= horizon {
                r += p * loans[i][t - 1];
            }
            if t > lag {
                let s = t - lag;
                r += p * (sales[i][s - 1] - repay * loans[i][s - 1]);
            }
            revenue[i][t] = r;
        }
    }

    let mut violations = Vec::new();
    let mut cash = vec![0.0; horizon + 1];
    cash[0] = cfg.initial_cash;
    for t in 1..=horizon {
        let purchase: f64 = (0..n).map(|i| cfg.unit_cost[i] * orders[i][t - 1]).sum();
        let available = match cfg.cash_rule {
            CashRule::Strict => cash[t - 1],
            CashRule::NonNegativePurchasing => cash[t - 1].max(0.0),
        };
        if purchase > available + VIOLATION_TOL {
            violations.push(Violation::Cash {
                period: t,
                purchase,
                available,
            });
        }
        let income: f64 = (0..n).map(|i| revenue[i][t]).sum();
        cash[t] = cash[t - 1] + income - purchase - cfg.overhead[t - 1];
    }

    let mut final_cash = cash[horizon];
    for k in 1..=lag {
        let tail: f64 = (0..n).map(|i| revenue[i][horizon + k]).sum();
        final_cash += cfg.tail_discount(k) * tail;
    }

    if loans_enabled {
        let used: f64 = (0..n)
            .map(|i| cfg.price[i] * loans[i].iter().sum::<f64>())
            .sum();
        if used > cfg.loan_limit + VIOLATION_TOL {
            violations.push(Violation::LoanCap {
                used,
                limit: cfg.loan_limit,
            });
        }
        for i in 0..n {
            for t in 0..horizon {
                if loans[i][t] > sales[i][t] + VIOLATION_TOL {
                    violations.push(Violation::LoanAboveSales {
                        product: i,
                        period: t + 1,
                        loan: loans[i][t],
                        sales: sales[i][t],
                    });
                }
            }
        }
    }

    Ok(Trajectory {
        orders: orders.to_vec(),
        loans: loans.to_vec(),
        sales,
        inventory,
        revenue,
        cash,
        final_cash,
        violations,
    })
}
