//! Multi-period inventory planning for a cash-constrained retailer that can
//! finance receivables through order-based loans.
//!
//! The pipeline runs demand fitting, moment-matched scenario trees, fast
//! forward scenario reduction, MILP planning models, and evaluation studies.
//! [`simulate`] is the reference semantics every solved plan is replayed
//! against.

pub mod demand_fit;
pub mod error;
pub mod evaluation;
pub mod instance;
pub mod planner;
pub mod presets;
pub mod scenario_gen;
pub mod scenario_reduce;
pub mod simulate;
pub mod solver;

pub use error::{Error, Result};
pub use instance::{CashRule, InstanceConfig, LoanRepayment, Regime};
