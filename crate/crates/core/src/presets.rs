//! The three-product reference instance (keyboard, mouse, headset) and its
//! published moment-matched branch sets and benchmark values.

use std::collections::BTreeMap;

use crate::instance::{CashRule, InstanceConfig, LoanRepayment, LogNormalParams, Regime, RegimeParams};
use crate::scenario_gen::BranchSet;

pub const PRODUCT_NAMES: [&str; 3] = ["keyboard", "mouse", "headset"];

/// Six-month horizon, booming demand in the last two months. Purchases are
/// bounded by the signed cash balance, as in the published model.
pub fn paper_instance() -> InstanceConfig {
    let rp = |mn: f64, sn: f64, mb: f64, sb: f64| RegimeParams {
        normal: LogNormalParams::new(mn, sn),
        booming: LogNormalParams::new(mb, sb),
    };
    use Regime::{Booming as B, Normal as N};
    InstanceConfig {
        n_products: 3,
        horizon: 6,
        initial_cash: 20_000.0,
        initial_inventory: vec![0.0; 3],
        price: vec![189.0, 144.0, 239.0],
        unit_cost: vec![120.0, 70.0, 150.0],
        overhead: vec![2_000.0; 6],
        receipt_delay: 2,
        discount_rate: 0.01,
        loan_rate: 0.015,
        loan_limit: 10_000.0,
        demand_pattern: vec![N, N, N, N, B, B],
        regime_params: vec![
            rp(3.66, 0.60, 5.79, 0.26),
            rp(4.13, 0.66, 5.91, 0.33),
            rp(3.54, 0.46, 4.96, 0.18),
        ],
        loan_repayment: LoanRepayment::default(),
        cash_rule: CashRule::Strict,
    }
}

fn bs(rows: [(f64, [f64; 3]); 3]) -> BranchSet {
    BranchSet::new(
        rows.iter().map(|r| r.0).collect(),
        rows.iter().map(|r| r.1.to_vec()).collect(),
    )
    .expect("reference branch set is valid")
}

/// The three published moment-matched trees (y = 3 branches per regime).
pub fn table3_branch_sets() -> Vec<BTreeMap<Regime, BranchSet>> {
    let tree = |normal: BranchSet, booming: BranchSet| {
        BTreeMap::from([(Regime::Normal, normal), (Regime::Booming, booming)])
    };
    vec![
        tree(
            bs([(0.1, [133.0, 246.0, 87.0]), (0.598, [30.0, 58.0, 39.0]), (0.302, [49.0, 57.0, 20.0])]),
            bs([(0.286, [291.0, 597.0, 123.0]), (0.318, [468.0, 322.0, 124.0]), (0.396, [268.0, 293.0, 177.0])]),
        ),
        tree(
            bs([(0.102, [134.0, 246.0, 88.0]), (0.694, [32.0, 59.0, 37.0]), (0.204, [54.0, 56.0, 17.0])]),
            bs([(0.185, [345.0, 341.0, 156.0]), (0.556, [269.0, 302.0, 123.0]), (0.259, [481.0, 611.0, 184.0])]),
        ),
        tree(
            bs([(0.103, [134.0, 246.0, 87.0]), (0.476, [28.0, 58.0, 24.0]), (0.421, [46.0, 58.0, 43.0])]),
            bs([(0.266, [481.0, 608.0, 134.0]), (0.34, [317.0, 311.0, 181.0]), (0.394, [259.0, 309.0, 121.0])]),
        ),
    ]
}

/// Published out-of-sample stability matrix without loans: entry `[a][b]`
/// evaluates the first-period plan of tree `a` on tree `b`.
pub const REFERENCE_SO_S: [[f64; 3]; 3] = [
    [46067.0, 46092.0, 46061.0],
    [46116.0, 46173.0, 46024.0],
    [46117.0, 46126.0, 46131.0],
];

/// Published out-of-sample stability matrix with loans, indexed as
/// [`REFERENCE_SO_S`].
pub const REFERENCE_OL_S: [[f64; 3]; 3] = [
    [46200.0, 46223.0, 46193.0],
    [46246.0, 46306.0, 46202.0],
    [46247.0, 46258.0, 46263.0],
];

/// Published profit gap (percent) against initial cash.
pub const REFERENCE_GAP_BY_CASH: [(f64, f64); 5] = [
    (10_000.0, 6.51),
    (15_000.0, 0.34),
    (20_000.0, 0.14),
    (25_000.0, 0.09),
    (30_000.0, 0.04),
];

/// Published profit gap (percent) against receipt delay.
pub const REFERENCE_GAP_BY_DELAY: [(usize, f64); 5] = [(0, 0.0), (1, 0.04), (2, 0.14), (3, 6.18), (4, 13.24)];
