//! Problem data for the cash-constrained retailer and its validation.
//!
//! Periods are 1-indexed in the model; arrays indexed by period hold period
//! `t` at position `t - 1`. Period 0 only carries the initial cash and the
//! initial inventory.

use std::fmt;
use std::path::Path;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};

/// Demand regime of a period.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Regime {
    Normal,
    Booming,
}

impl Regime {
    pub const ALL: [Regime; 2] = [Regime::Normal, Regime::Booming];

    pub fn as_str(self) -> &'static str {
        match self {
            Regime::Normal => "normal",
            Regime::Booming => "booming",
        }
    }

    pub fn flag(self) -> u8 {
        match self {
            Regime::Normal => 0,
            Regime::Booming => 1,
        }
    }

    pub fn from_flag(flag: u64) -> Option<Regime> {
        match flag {
            0 => Some(Regime::Normal),
            1 => Some(Regime::Booming),
            _ => None,
        }
    }
}

impl fmt::Display for Regime {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for Regime {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "normal" | "0" => Ok(Regime::Normal),
            "booming" | "boom" | "1" => Ok(Regime::Booming),
            other => Err(Error::Input(format!("unknown regime '{other}'"))),
        }
    }
}

impl Serialize for Regime {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_str(self.as_str())
    }
}

// Accepts "normal"/"booming" as well as the 0/1 flags used in demand patterns.
impl<'de> Deserialize<'de> for Regime {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Flag(u64),
            Name(String),
        }
        match Raw::deserialize(d)? {
            Raw::Flag(f) => Regime::from_flag(f)
                .ok_or_else(|| serde::de::Error::custom(format!("regime flag {f} is not 0 or 1"))),
            Raw::Name(s) => s.parse().map_err(serde::de::Error::custom),
        }
    }
}

/// Log-scale parameters of a log-normal demand distribution.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LogNormalParams {
    pub mu: f64,
    pub sigma: f64,
}

impl LogNormalParams {
    pub fn new(mu: f64, sigma: f64) -> Self {
        Self { mu, sigma }
    }

    pub fn mean(&self) -> f64 {
        (self.mu + 0.5 * self.sigma * self.sigma).exp()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RegimeParams {
    pub normal: LogNormalParams,
    pub booming: LogNormalParams,
}

impl RegimeParams {
    pub fn get(&self, regime: Regime) -> LogNormalParams {
        match regime {
            Regime::Normal => self.normal,
            Regime::Booming => self.booming,
        }
    }
}

/// How order-based loan repayments enter the revenue stream.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LoanRepayment {
    /// Revenue of period `t > L` is `p (sales[t-L] - g[t-L] - g[t-L] (1+r)^L)`:
    /// the customer payment of a financed sale goes to the platform and the
    /// retailer repays principal plus interest on top.
    #[default]
    AsPrinted,
    /// The customer payment of a financed sale repays the principal; only the
    /// interest `p g[t-L] ((1+r)^L - 1)` is charged to the retailer.
    InterestOnly,
}

impl LoanRepayment {
    fn is_default(&self) -> bool {
        *self == LoanRepayment::default()
    }
}

/// What happens when the cash balance at the start of a period is negative.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CashRule {
    /// Purchases are bounded by `max(C[t-1], 0)`: a negative balance only
    /// blocks ordering, so the do-nothing plan is always feasible.
    #[default]
    NonNegativePurchasing,
    /// `sum v Q[t] <= C[t-1]` as a plain linear constraint, which also forbids
    /// entering a period with negative cash.
    Strict,
}

impl CashRule {
    fn is_default(&self) -> bool {
        *self == CashRule::default()
    }
}

/// All operational and financial parameters of one planning instance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InstanceConfig {
    pub n_products: usize,
    pub horizon: usize,
    pub initial_cash: f64,
    pub initial_inventory: Vec<f64>,
    pub price: Vec<f64>,
    pub unit_cost: Vec<f64>,
    pub overhead: Vec<f64>,
    pub receipt_delay: usize,
    pub discount_rate: f64,
    pub loan_rate: f64,
    pub loan_limit: f64,
    pub demand_pattern: Vec<Regime>,
    pub regime_params: Vec<RegimeParams>,
    #[serde(default, skip_serializing_if = "LoanRepayment::is_default")]
    pub loan_repayment: LoanRepayment,
    #[serde(default, skip_serializing_if = "CashRule::is_default")]
    pub cash_rule: CashRule,
}

/// One violated invariant of an [`InstanceConfig`].
#[derive(Debug, Clone, PartialEq)]
pub struct ValidationError {
    pub field: String,
    pub rule: String,
}

impl ValidationError {
    fn new(field: impl Into<String>, rule: impl Into<String>) -> Self {
        Self {
            field: field.into(),
            rule: rule.into(),
        }
    }
}

impl fmt::Display for ValidationError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.field, self.rule)
    }
}

impl InstanceConfig {
    pub fn from_json_str(s: &str) -> Result<Self> {
        Ok(serde_json::from_str(s)?)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::from_json_str(&text)
    }

    pub fn to_json_pretty(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    /// Interest-inclusive repayment factor `(1 + r)^L` for one unit of loan.
    pub fn repayment_factor(&self) -> f64 {
        (1.0 + self.loan_rate).powi(self.receipt_delay as i32)
    }

    /// Discount factor `(1 + alpha)^-k` applied to receipts `k` periods after the horizon.
    pub fn tail_discount(&self, k: usize) -> f64 {
        (1.0 + self.discount_rate).powi(-(k as i32))
    }

    /// Per-period mean demand implied by the regime pattern, `[n][t]`.
    pub fn mean_forecast(&self) -> Vec<Vec<f64>> {
        self.regime_params
            .iter()
            .map(|rp| self.demand_pattern.iter().map(|&r| rp.get(r).mean()).collect())
            .collect()
    }

    /// Checks every invariant and reports all violations.
    pub fn validate(&self) -> std::result::Result<(), Vec<ValidationError>> {
        let mut errs = Vec::new();
        let n = self.n_products;
        let t = self.horizon;

        if n < 1 {
            errs.push(ValidationError::new("n_products", "must be at least 1"));
        }
        if t < 1 {
            errs.push(ValidationError::new("horizon", "must be at least 1"));
        }
        if self.receipt_delay > t {
            errs.push(ValidationError::new(
                "receipt_delay",
                format!("must not exceed horizon ({t})"),
            ));
        }
        check_scalar(&mut errs, "initial_cash", self.initial_cash);
        check_scalar(&mut errs, "discount_rate", self.discount_rate);
        check_scalar(&mut errs, "loan_rate", self.loan_rate);
        check_scalar(&mut errs, "loan_limit", self.loan_limit);
        check_vector(&mut errs, "initial_inventory", &self.initial_inventory, n);
        check_vector(&mut errs, "price", &self.price, n);
        check_vector(&mut errs, "unit_cost", &self.unit_cost, n);
        check_vector(&mut errs, "overhead", &self.overhead, t);

        if self.demand_pattern.len() != t {
            errs.push(ValidationError::new(
                "demand_pattern",
                format!("must have exactly {t} entries, has {}", self.demand_pattern.len()),
            ));
        }
        if self.regime_params.len() != n {
            errs.push(ValidationError::new(
                "regime_params",
                format!("must have exactly {n} entries, has {}", self.regime_params.len()),
            ));
        }
        for (i, rp) in self.regime_params.iter().enumerate() {
            for regime in Regime::ALL {
                let p = rp.get(regime);
                if !p.mu.is_finite() {
                    errs.push(ValidationError::new(
                        format!("regime_params[{i}].{regime}.mu"),
                        "must be finite",
                    ));
                }
                if !(p.sigma > 0.0 && p.sigma.is_finite()) {
                    errs.push(ValidationError::new(
                        format!("regime_params[{i}].{regime}.sigma"),
                        "must be positive",
                    ));
                }
            }
        }

        if errs.is_empty() {
            Ok(())
        } else {
            Err(errs)
        }
    }

    pub fn validated(self) -> Result<Self> {
        self.validate().map_err(Error::Invalid)?;
        Ok(self)
    }
}

fn check_scalar(errs: &mut Vec<ValidationError>, field: &str, v: f64) {
    if !(v >= 0.0 && v.is_finite()) {
        errs.push(ValidationError::new(field, format!("must be finite and non-negative, got {v}")));
    }
}

fn check_vector(errs: &mut Vec<ValidationError>, field: &str, v: &[f64], len: usize) {
    if v.len() != len {
        errs.push(ValidationError::new(
            field,
            format!("must have exactly {len} entries, has {}", v.len()),
        ));
    }
    for (i, &x) in v.iter().enumerate() {
        if !(x >= 0.0 && x.is_finite()) {
            errs.push(ValidationError::new(
                format!("{field}[{i}]"),
                format!("must be finite and non-negative, got {x}"),
            ));
        }
    }
}
