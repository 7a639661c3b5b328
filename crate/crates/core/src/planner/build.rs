use serde::{Deserialize, Serialize};

use super::lattice::Lattice;
use super::{BuildOptions, Formulation};
use crate::error::{Error, Result};
use crate::instance::{CashRule, InstanceConfig};
use crate::scenario_reduce::ScenarioFan;
use crate::simulate::repayment_coefficient;
use crate::solver::{Cmp, LinExpr, LinearModel, Sense, Var};

/// Inventory linearization constants, `m[n][t-1]` for period `t`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BigMPlan {
    pub m: Vec<Vec<f64>>,
}

/// `M[n][t] = I0 + sum_{tau<=t} dmax + (C0 + sum_{tau<=t} sum_m p_m dmax_m) / v_n`,
/// with `dmax` the largest demand over all scenarios.
pub fn compute_big_m(cfg: &InstanceConfig, fan: &ScenarioFan) -> Result<BigMPlan> {
    if let Some(n) = cfg.unit_cost.iter().position(|&v| v <= 0.0) {
        return Err(Error::ZeroUnitCost(n));
    }
    let dmax = fan.max_demand();
    let mut m = vec![vec![0.0; cfg.horizon]; cfg.n_products];
    let mut cum_d = cfg.initial_inventory.clone();
    let mut cum_rev = cfg.initial_cash.max(0.0);
    for t in 0..cfg.horizon {
        cum_rev += (0..cfg.n_products).map(|j| cfg.price[j] * dmax[j][t]).sum::<f64>();
        for n in 0..cfg.n_products {
            cum_d[n] += dmax[n][t];
            m[n][t] = cum_d[n] + cum_rev / cfg.unit_cost[n];
        }
    }
    Ok(BigMPlan { m })
}

/// Variable handles of a built model, indexed by lattice node.
#[derive(Debug, Clone)]
pub struct ModelIndex {
    pub lattice: Lattice,
    /// Orders placed at a node for the next period (nodes of depth < T).
    pub orders: Vec<Option<Vec<Var>>>,
    pub inventory: Vec<Option<Vec<Var>>>,
    pub delta: Vec<Option<Vec<Var>>>,
    pub loans: Vec<Option<Vec<Var>>>,
    pub cash: Vec<Option<Var>>,
    pub kappa: Vec<Option<Var>>,
    /// Revenue of each product in the node's period (depth >= 1 nodes).
    pub revenue: Vec<Option<Vec<LinExpr>>>,
    /// Discounted revenue received after the horizon (leaves only).
    pub tail: Vec<Option<LinExpr>>,
    pub big_m: BigMPlan,
}

/// A built model together with its variable map.
#[derive(Debug, Clone)]
pub struct BuiltModel {
    pub model: LinearModel,
    pub index: ModelIndex,
}

struct Bounds {
    /// Lower bound on cash at the end of period t, t = 0..T.
    cash_lb: Vec<f64>,
    /// Upper bound on cash at the end of period t.
    cash_ub: Vec<f64>,
}

fn cash_bounds(cfg: &InstanceConfig, fan: &ScenarioFan, loans: bool) -> Bounds {
    let dmax = fan.max_demand();
    let repay_excess = if loans {
        (repayment_coefficient(cfg) - 1.0).max(0.0) * cfg.loan_limit
    } else {
        0.0
    };
    let advance = if loans { cfg.loan_limit } else { 0.0 };
    let mut lb = vec![cfg.initial_cash; cfg.horizon + 1];
    let mut ub = vec![cfg.initial_cash.max(0.0) + advance; cfg.horizon + 1];
    for t in 1..=cfg.horizon {
        lb[t] = lb[t - 1].min(0.0) - cfg.overhead[t - 1] - repay_excess;
        ub[t] = ub[t - 1] + (0..cfg.n_products).map(|j| cfg.price[j] * dmax[j][t - 1]).sum::<f64>();
    }
    Bounds {
        cash_lb: lb,
        cash_ub: ub,
    }
}

/// Builds the planning MILP of `fan` under `cfg`.
pub fn build(cfg: &InstanceConfig, fan: &ScenarioFan, loans: bool, opts: &BuildOptions) -> Result<BuiltModel> {
    cfg.validate().map_err(Error::Invalid)?;
    fan.validate()?;
    if fan.n_products() != cfg.n_products || fan.horizon() != cfg.horizon {
        return Err(Error::Dimension {
            what: "scenario fan shape (products x periods)".into(),
            expected: cfg.n_products * cfg.horizon,
            actual: fan.n_products() * fan.horizon(),
        });
    }
    let mut big_m = compute_big_m(cfg, fan)?;
    for row in &mut big_m.m {
        for x in row {
            *x *= opts.big_m_scale;
        }
    }

    let lattice = match opts.formulation {
        Formulation::Nodes => Lattice::shared(fan),
        Formulation::Explicit => Lattice::split(fan),
    };
    let n = cfg.n_products;
    let horizon = cfg.horizon;
    let lag = cfg.receipt_delay;
    let repay = repayment_coefficient(cfg);
    let bounds = cash_bounds(cfg, fan, loans);
    let n_nodes = lattice.len();

    let mut model = LinearModel::new(Sense::Maximize);
    let mut orders: Vec<Option<Vec<Var>>> = vec![None; n_nodes];
    let mut inventory: Vec<Option<Vec<Var>>> = vec![None; n_nodes];
    let mut delta: Vec<Option<Vec<Var>>> = vec![None; n_nodes];
    let mut loan_vars: Vec<Option<Vec<Var>>> = vec![None; n_nodes];
    let mut cash: Vec<Option<Var>> = vec![None; n_nodes];
    let mut kappa: Vec<Option<Var>> = vec![None; n_nodes];

    for (id, node) in lattice.nodes.iter().enumerate() {
        let t = node.depth;
        if t < horizon {
            orders[id] = Some((0..n).map(|i| model.add_nonneg(format!("Q_{i}_{id}"))).collect());
        }
        if t >= 1 {
            inventory[id] = Some((0..n).map(|i| model.add_nonneg(format!("I_{i}_{id}"))).collect());
            delta[id] = Some((0..n).map(|i| model.add_binary(format!("delta_{i}_{id}"))).collect());
            if loans {
                loan_vars[id] = Some((0..n).map(|i| model.add_nonneg(format!("g_{i}_{id}"))).collect());
            }
            cash[id] = Some(model.add_free(format!("C_{id}")));
        }
    }

    if let Some(fixed) = &opts.fixed_first_orders {
        if fixed.len() != n {
            return Err(Error::Dimension {
                what: "fixed first-period orders".into(),
                expected: n,
                actual: fixed.len(),
            });
        }
        for id in lattice.at_depth(0) {
            for (i, &q) in orders[id].as_ref().expect("root orders").iter().enumerate() {
                model.fix_variable(q, fixed[i].max(0.0));
            }
        }
    }

    let inv_expr = |id: usize, i: usize| -> LinExpr {
        match &inventory[id] {
            Some(v) => v[i].into(),
            None => LinExpr::constant(cfg.initial_inventory[i]),
        }
    };
    let cash_expr = |id: usize| -> LinExpr {
        match cash[id] {
            Some(v) => v.into(),
            None => LinExpr::constant(cfg.initial_cash),
        }
    };
    // Units sold in the period of node `id` (depth >= 1).
    let sales = |id: usize, i: usize| -> LinExpr {
        let parent = lattice.nodes[id].parent.expect("sales need a parent");
        let q = orders[parent].as_ref().expect("parent orders")[i];
        inv_expr(parent, i) + q - inventory[id].as_ref().expect("inventory")[i]
    };
    let loan_expr = |id: usize, i: usize| -> LinExpr {
        match &loan_vars[id] {
            Some(g) => g[i].into(),
            None => LinExpr::new(),
        }
    };
    // Customer receipts of sales made at node `src`, net of loan repayment.
    let delayed = |src: usize, i: usize| -> LinExpr { (sales(src, i) - loan_expr(src, i) * repay) * cfg.price[i] };

    let mut revenue: Vec<Option<Vec<LinExpr>>> = vec![None; n_nodes];
    let mut tail: Vec<Option<LinExpr>> = vec![None; n_nodes];

    for (id, node) in lattice.nodes.iter().enumerate() {
        let t = node.depth;
        if t == 0 {
            continue;
        }
        let parent = node.parent.expect("depth >= 1 has a parent");
        let q = orders[parent].clone().expect("parent orders");
        let inv = inventory[id].clone().expect("inventory");
        let dl = delta[id].clone().expect("delta");

        for i in 0..n {
            let m = big_m.m[i][t - 1];
            let d = node.demand[i];
            // When delta = 0 the inventory is zero and avail <= d, so d bounds the slack.
            let m_hi = d.min(m);
            let avail = inv_expr(parent, i) + q[i];
            model.add_constraint(format!("inv_lo_{i}_{id}"), LinExpr::from(inv[i]), Cmp::Ge, avail.clone() - d);
            model.add_constraint(
                format!("inv_hi_{i}_{id}"),
                LinExpr::from(inv[i]),
                Cmp::Le,
                avail - d + m_hi - dl[i] * m_hi,
            );
            model.add_constraint(format!("inv_on_{i}_{id}"), LinExpr::from(inv[i]), Cmp::Le, dl[i] * m);
            if let Some(g) = &loan_vars[id] {
                model.add_constraint(format!("loan_sales_{i}_{id}"), LinExpr::from(g[i]), Cmp::Le, sales(id, i));
            }
        }

        let rev: Vec<LinExpr> = (0..n)
            .map(|i| {
                let mut r = loan_expr(id, i) * cfg.price[i];
                if t > lag {
                    r += delayed(lattice.ancestor(id, t - lag), i);
                }
                r
            })
            .collect();

        let mut flow = cash_expr(parent) - cfg.overhead[t - 1];
        for i in 0..n {
            flow += rev[i].clone();
            flow -= q[i] * cfg.unit_cost[i];
        }
        model.add_constraint(format!("cash_{id}"), LinExpr::from(cash[id].expect("cash")), Cmp::Eq, flow);
        revenue[id] = Some(rev);

        if t == horizon {
            let mut tl = LinExpr::new();
            for k in 1..=lag {
                if horizon + k > lag {
                    let src = lattice.ancestor(id, horizon + k - lag);
                    for i in 0..n {
                        tl += delayed(src, i) * cfg.tail_discount(k);
                    }
                }
            }
            if loans {
                let mut used = LinExpr::new();
                let mut a = id;
                while lattice.nodes[a].depth >= 1 {
                    for i in 0..n {
                        used += loan_expr(a, i) * cfg.price[i];
                    }
                    a = lattice.nodes[a].parent.expect("parent");
                }
                model.add_constraint(format!("loan_cap_{id}"), used, Cmp::Le, cfg.loan_limit);
            }
            tail[id] = Some(tl);
        }
    }

    // Purchases are limited by the cash at the start of the period.
    for (id, node) in lattice.nodes.iter().enumerate() {
        let Some(q) = &orders[id] else { continue };
        let tau = node.depth;
        let mut purchase = LinExpr::new();
        for i in 0..n {
            purchase += q[i] * cfg.unit_cost[i];
        }
        if tau == 0 {
            let avail = match cfg.cash_rule {
                CashRule::Strict => cfg.initial_cash,
                CashRule::NonNegativePurchasing => cfg.initial_cash.max(0.0),
            };
            model.add_constraint(format!("buy_{id}"), purchase, Cmp::Le, avail);
            continue;
        }
        let c = cash[id].expect("cash");
        let needs_switch = cfg.cash_rule == CashRule::NonNegativePurchasing && bounds.cash_lb[tau] < 0.0;
        if needs_switch {
            let k = model.add_binary(format!("kappa_{id}"));
            let mc = -bounds.cash_lb[tau] + 1.0;
            let mq = bounds.cash_ub[tau] + 1.0;
            model.add_constraint(format!("buy_{id}"), purchase.clone(), Cmp::Le, c + mc - k * mc);
            model.add_constraint(format!("buy_on_{id}"), purchase, Cmp::Le, k * mq);
            kappa[id] = Some(k);
        } else {
            model.add_constraint(format!("buy_{id}"), purchase, Cmp::Le, c);
        }
    }

    if opts.formulation == Formulation::Explicit {
        add_nonanticipativity(&mut model, fan, &lattice, &orders, &inventory, &delta, &loan_vars);
    }

    let mut objective = LinExpr::new();
    for id in lattice.leaves() {
        let pr = lattice.nodes[id].probability;
        objective += (LinExpr::from(cash[id].expect("cash")) + tail[id].clone().expect("tail")) * pr;
    }
    model.set_objective(Sense::Maximize, objective);

    Ok(BuiltModel {
        model,
        index: ModelIndex {
            lattice,
            orders,
            inventory,
            delta,
            loans: loan_vars,
            cash,
            kappa,
            revenue,
            tail,
            big_m,
        },
    })
}

// Per-scenario copies are tied together within each history class:
// x^s * sum_{J} Pr = sum_{s' in J} Pr_{s'} x^{s'}.
fn add_nonanticipativity(
    model: &mut LinearModel,
    fan: &ScenarioFan,
    lattice: &Lattice,
    orders: &[Option<Vec<Var>>],
    inventory: &[Option<Vec<Var>>],
    delta: &[Option<Vec<Var>>],
    loans: &[Option<Vec<Var>>],
) {
    let horizon = lattice.horizon;
    let pr = &lattice.probabilities;
    let tie = |model: &mut LinearModel, name: &str, class: &[usize], var_of: &dyn Fn(usize) -> Var| {
        let total: f64 = class.iter().map(|&s| pr[s]).sum();
        for &s in class {
            let mut e = LinExpr::new();
            if total > 0.0 {
                e += var_of(s) * total;
                for &o in class {
                    e -= var_of(o) * pr[o];
                }
            } else {
                e += var_of(s) - var_of(class[0]);
            }
            model.add_constraint(format!("{name}_{s}"), e, Cmp::Eq, 0.0);
        }
    };
    for t in 0..=horizon {
        for (c, class) in Lattice::history_classes(fan, t).iter().enumerate() {
            if class.len() < 2 {
                continue;
            }
            for i in 0..fan.n_products() {
                if t < horizon {
                    let f = |s: usize| orders[lattice.path[s][t]].as_ref().unwrap()[i];
                    tie(model, &format!("na_Q_{t}_{c}_{i}"), class, &f);
                }
                if t >= 1 {
                    let f = |s: usize| inventory[lattice.path[s][t]].as_ref().unwrap()[i];
                    tie(model, &format!("na_I_{t}_{c}_{i}"), class, &f);
                    let f = |s: usize| delta[lattice.path[s][t]].as_ref().unwrap()[i];
                    tie(model, &format!("na_delta_{t}_{c}_{i}"), class, &f);
                    if loans[lattice.path[class[0]][t]].is_some() {
                        let f = |s: usize| loans[lattice.path[s][t]].as_ref().unwrap()[i];
                        tie(model, &format!("na_g_{t}_{c}_{i}"), class, &f);
                    }
                }
            }
        }
    }
}
