//! Acceptance suite. Runs every criterion, prints one line each and exits
//! nonzero when a hard criterion fails. Criterion 7 is soft: it is reported
//! but never fails the run.

use std::collections::BTreeMap;
use std::fs;
use std::process::Command;
use std::time::{Duration, Instant};

use cashplan_core::evaluation::{self, ParameterValue, Solver, StudyParameter};
use cashplan_core::instance::{LogNormalParams, RegimeParams};
use cashplan_core::planner::lattice::Lattice;
use cashplan_core::planner::{self, BuildOptions, ModelKind, PlanSolution};
use cashplan_core::scenario_gen::{self, branching_factor, lognormal_moments, DEFAULT_STARTS};
use cashplan_core::scenario_reduce::{fast_forward_select, pairwise_distance, ScenarioFan};
use cashplan_core::simulate::simulate;
use cashplan_core::solver::{HighsBackend, SolveOptions};
use cashplan_core::{presets, CashRule, InstanceConfig, LoanRepayment, Regime};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const REPLAY_ABS: f64 = 1e-6;
const SINGLE_SCENARIO_REL: f64 = 1e-6;
const MOMENT_REL: f64 = 1e-3;
const KEYBOARD_MEAN: f64 = 46.46;
const KEYBOARD_BAND: f64 = 0.05;
const TABLE3_MEAN: f64 = 46.0;
// Half a unit in the last printed digit of 46.0.
const TABLE3_TOL: f64 = 0.05;
const PROB_SUM_TOL: f64 = 1e-9;
const PAPER_BAND: f64 = 0.05;
const STABILITY_GAP: f64 = 0.05;
const SWEEP_SPREAD: f64 = 0.02;
const PAPER_K: usize = 140;

enum Verdict {
    Pass,
    Fail,
    SoftFail,
}

struct Line {
    id: usize,
    title: &'static str,
    verdict: Verdict,
    detail: String,
}

fn opts() -> SolveOptions {
    SolveOptions::default()
}

fn solver(o: &SolveOptions) -> Solver<'_> {
    Solver {
        backend: &HighsBackend,
        options: o,
    }
}

/// Slack allowed when comparing two optimal values: twice the MIP gap.
fn gap_tol(x: f64) -> f64 {
    2.0 * opts().mip_gap * x.abs().max(1.0)
}

fn solve(cfg: &InstanceConfig, fan: &ScenarioFan, kind: ModelKind) -> PlanSolution {
    planner::solve(cfg, fan, kind, &BuildOptions::default(), &HighsBackend, &opts())
        .unwrap_or_else(|e| panic!("{kind} failed: {e}"))
}

fn random_instance(rng: &mut ChaCha8Rng, n: usize, horizon: usize) -> InstanceConfig {
    let lp = LogNormalParams::new(2.0, 0.5);
    let unit_cost: Vec<f64> = (0..n).map(|_| rng.random_range(1.0..10.0)).collect();
    InstanceConfig {
        n_products: n,
        horizon,
        initial_cash: rng.random_range(0.0..300.0),
        initial_inventory: (0..n).map(|_| rng.random_range(0.0..5.0)).collect(),
        price: unit_cost.iter().map(|v| v * rng.random_range(1.2..3.0)).collect(),
        unit_cost,
        overhead: (0..horizon).map(|_| rng.random_range(0.0..20.0)).collect(),
        receipt_delay: rng.random_range(0..=horizon.min(2)),
        discount_rate: rng.random_range(0.0..0.05),
        loan_rate: rng.random_range(0.0..0.05),
        loan_limit: rng.random_range(0.0..100.0),
        demand_pattern: vec![Regime::Normal; horizon],
        regime_params: vec![
            RegimeParams {
                normal: lp,
                booming: lp,
            };
            n
        ],
        loan_repayment: if rng.random_bool(0.5) {
            LoanRepayment::AsPrinted
        } else {
            LoanRepayment::InterestOnly
        },
        cash_rule: CashRule::NonNegativePurchasing,
    }
}

/// Full tree with `branches[t]` children per period-`t` node and per-period
/// realizations drawn independently, so histories are distinct.
fn random_tree(rng: &mut ChaCha8Rng, n: usize, branches: &[usize], max_d: f64, integer: bool) -> ScenarioFan {
    let horizon = branches.len();
    let draw = |rng: &mut ChaCha8Rng| {
        let x = rng.random_range(0.0..max_d);
        if integer {
            x.round()
        } else {
            x
        }
    };
    let values: Vec<Vec<Vec<f64>>> = branches
        .iter()
        .map(|&b| (0..b).map(|_| (0..n).map(|_| draw(rng)).collect()).collect())
        .collect();
    let probs: Vec<Vec<f64>> = branches
        .iter()
        .map(|&b| {
            let w: Vec<f64> = (0..b).map(|_| rng.random_range(1u32..=9) as f64).collect();
            let s: f64 = w.iter().sum();
            w.into_iter().map(|x| x / s).collect()
        })
        .collect();
    let total: usize = branches.iter().product();
    let mut scenarios = Vec::with_capacity(total);
    let mut probabilities = Vec::with_capacity(total);
    for mut code in 0..total {
        let mut idx = vec![0; horizon];
        for t in (0..horizon).rev() {
            idx[t] = code % branches[t];
            code /= branches[t];
        }
        let mut d = vec![vec![0.0; horizon]; n];
        let mut p = 1.0;
        for t in 0..horizon {
            p *= probs[t][idx[t]];
            for (i, row) in d.iter_mut().enumerate() {
                row[t] = values[t][idx[t]][i];
            }
        }
        scenarios.push(d);
        probabilities.push(p);
    }
    let s: f64 = probabilities.iter().sum();
    probabilities.iter_mut().for_each(|p| *p /= s);
    ScenarioFan::new(scenarios, probabilities).unwrap()
}

fn random_branches(rng: &mut ChaCha8Rng, horizon: usize, max_leaves: usize) -> Vec<usize> {
    let mut b: Vec<usize> = (0..horizon).map(|_| rng.random_range(1..=3)).collect();
    while b.iter().product::<usize>() > max_leaves {
        let t = b.iter().position(|&x| x > 1).unwrap();
        b[t] -= 1;
    }
    b
}

/// Replays every scenario of `plan` through the simulator and returns the
/// largest absolute deviation over inventory, revenue, cash and final cash.
fn replay_deviation(cfg: &InstanceConfig, fan: &ScenarioFan, plan: &PlanSolution) -> f64 {
    let lat = Lattice::shared(fan);
    assert_eq!(lat.len(), plan.nodes.len());
    let (n, horizon) = (cfg.n_products, cfg.horizon);
    let mut worst: f64 = 0.0;
    let mut expected_fc = 0.0;
    for (s, demands) in fan.scenarios.iter().enumerate() {
        let path = &lat.path[s];
        let mut orders = vec![vec![0.0; horizon]; n];
        let mut loans = vec![vec![0.0; horizon]; n];
        for t in 1..=horizon {
            let q = plan.nodes[path[t - 1]].orders.as_ref().unwrap();
            for i in 0..n {
                orders[i][t - 1] = q[i];
                if let Some(g) = &plan.nodes[path[t]].loans {
                    loans[i][t - 1] = g[i];
                }
            }
        }
        let tr = simulate(cfg, demands, &orders, &loans, plan.kind.loans()).unwrap();
        assert!(tr.is_feasible(), "scenario {s}: {:?}", tr.violations);
        for t in 1..=horizon {
            let node = &plan.nodes[path[t]];
            let inv = node.inventory.as_ref().unwrap();
            for i in 0..n {
                worst = worst.max((inv[i] - tr.inventory[i][t]).abs());
            }
            worst = worst.max((node.cash - tr.cash[t]).abs());
            // Revenue implied by the model's cash balance.
            let spend: f64 = (0..n).map(|i| cfg.unit_cost[i] * orders[i][t - 1]).sum();
            let model_rev = node.cash - plan.nodes[path[t - 1]].cash + spend + cfg.overhead[t - 1];
            let sim_rev: f64 = (0..n).map(|i| tr.revenue[i][t]).sum();
            worst = worst.max((model_rev - sim_rev).abs());
        }
        expected_fc += fan.probabilities[s] * tr.final_cash;
    }
    worst.max((plan.objective - expected_fc).abs())
}

fn criterion_1() -> (bool, String) {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(101);
    let mut worst: f64 = 0.0;
    let mut solved = 0;
    for _ in 0..50 {
        let n = rng.random_range(1..=3);
        let horizon = rng.random_range(1..=4);
        let cfg = random_instance(&mut rng, n, horizon);
        let b = random_branches(&mut rng, horizon, 27);
        let fan = random_tree(&mut rng, n, &b, 30.0, false);
        for kind in [ModelKind::SoS, ModelKind::OlS] {
            let plan = solve(&cfg, &fan, kind);
            worst = worst.max(replay_deviation(&cfg, &fan, &plan));
            solved += 1;
        }
    }
    let elapsed = start.elapsed();
    let ok = worst <= REPLAY_ABS && elapsed < Duration::from_secs(300);
    (
        ok,
        format!("{solved} solves on 50 instances, max |model - replay| = {worst:.2e}, {:.1}s", elapsed.as_secs_f64()),
    )
}

/// Best expected final cash over integer policies, by recursion over the
/// scenario lattice. Leaves are scored with the simulator.
struct Grid<'a> {
    cfg: &'a InstanceConfig,
    fan: &'a ScenarioFan,
    lat: Lattice,
    loans: bool,
    q_max: usize,
}

impl Grid<'_> {
    fn best(&self, node: usize, orders: &mut Vec<f64>, loans: &mut Vec<f64>) -> f64 {
        let nd = &self.lat.nodes[node];
        let t = nd.depth;
        if t == self.cfg.horizon {
            let s = nd.scenarios[0];
            let tr = simulate(self.cfg, &self.fan.scenarios[s], &[orders.clone()], &[loans.clone()], self.loans).unwrap();
            return if tr.is_feasible() { tr.final_cash } else { f64::NEG_INFINITY };
        }
        let children: Vec<usize> = self.lat.at_depth(t + 1).filter(|&c| self.lat.nodes[c].parent == Some(node)).collect();
        let mut best = f64::NEG_INFINITY;
        for q in 0..=self.q_max {
            orders[t] = q as f64;
            let mut total = 0.0;
            for &c in &children {
                let d = self.lat.nodes[c].demand[0];
                // Loans move in steps of 1/price so cash stays on the unit grid.
                let p = self.cfg.price[0];
                let g_steps = if self.loans { (d * p).round() as usize } else { 0 };
                let mut child_best = f64::NEG_INFINITY;
                for k in 0..=g_steps {
                    loans[t] = k as f64 / p;
                    child_best = child_best.max(self.best(c, orders, loans));
                }
                loans[t] = 0.0;
                total += self.lat.nodes[c].probability / nd.probability * child_best;
            }
            best = best.max(total);
        }
        orders[t] = 0.0;
        best
    }
}

fn criterion_2() -> (bool, String) {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(202);
    let mut worst: f64 = 0.0;
    let mut count = 0;
    let mut below = false;
    while count < 24 {
        let horizon = rng.random_range(1..=2);
        let lp = LogNormalParams::new(1.0, 0.5);
        let price = rng.random_range(2..=3) as f64;
        let cfg = InstanceConfig {
            n_products: 1,
            horizon,
            initial_cash: rng.random_range(0..=6) as f64,
            initial_inventory: vec![rng.random_range(0..=2) as f64],
            price: vec![price],
            unit_cost: vec![1.0],
            overhead: (0..horizon).map(|_| rng.random_range(0..=1) as f64).collect(),
            receipt_delay: rng.random_range(0..=horizon),
            discount_rate: 0.0,
            loan_rate: 0.0,
            // A multiple of the price keeps the loan cap on the unit grid.
            loan_limit: price * rng.random_range(0..=2) as f64,
            demand_pattern: vec![Regime::Normal; horizon],
            regime_params: vec![RegimeParams {
                normal: lp,
                booming: lp,
            }],
            loan_repayment: if rng.random_bool(0.5) {
                LoanRepayment::AsPrinted
            } else {
                LoanRepayment::InterestOnly
            },
            cash_rule: CashRule::NonNegativePurchasing,
        };
        // At most three scenarios.
        let b = if horizon == 1 { vec![rng.random_range(1..=3)] } else { vec![rng.random_range(1..=3), 1] };
        let mut fan = random_tree(&mut rng, 1, &b, 4.0, true);
        if horizon == 2 {
            for s in &mut fan.scenarios {
                s[0][1] = rng.random_range(0..=4) as f64;
            }
        }
        for kind in [ModelKind::SoS, ModelKind::OlS] {
            let lat = Lattice::shared(&fan);
            let root = lat.path[0][0];
            // Stock beyond total demand has no value.
            let q_max = fan.max_demand()[0].iter().sum::<f64>() as usize;
            let grid = Grid {
                cfg: &cfg,
                fan: &fan,
                lat,
                loans: kind.loans(),
                q_max,
            };
            let brute = grid.best(root, &mut vec![0.0; horizon], &mut vec![0.0; horizon]);
            let milp = solve(&cfg, &fan, kind).objective;
            below |= milp < brute - 1e-6;
            worst = worst.max((milp - brute).abs());
        }
        count += 1;
    }
    let elapsed = start.elapsed();
    // With integer data, unit cost 1 and a loan cap that is a multiple of the
    // price, every breakpoint lies on the grid, so the grid optimum is exact.
    let ok = !below && worst <= 1e-6 && elapsed < Duration::from_secs(120);
    (
        ok,
        format!("{count} instances x 2 models, max |MILP - grid| = {worst:.2e}, {:.1}s", elapsed.as_secs_f64()),
    )
}

fn criterion_3() -> (bool, String) {
    let o = opts();
    let mut rng = ChaCha8Rng::seed_from_u64(303);
    let mut cases: Vec<(InstanceConfig, ScenarioFan)> = (0..10)
        .map(|_| {
            let n = rng.random_range(1..=3);
            let horizon = rng.random_range(2..=3);
            let cfg = random_instance(&mut rng, n, horizon);
            let fan = random_tree(&mut rng, n, &vec![3; horizon], 30.0, false);
            (cfg, fan)
        })
        .collect();
    cases.push((presets::paper_instance(), paper_fan(0, 20)));
    let mut violations = Vec::new();
    let (mut min_evpi, mut min_vss, mut min_loan_gain) = (f64::INFINITY, f64::INFINITY, f64::INFINITY);
    for (c, (cfg, fan)) in cases.iter().enumerate() {
        let mut sv = [0.0; 2];
        for loans in [false, true] {
            let v = evaluation::value_of_information(cfg, fan, loans, solver(&o)).unwrap();
            let tol = gap_tol(v.sv);
            if v.evpi < -tol || v.vss < -tol {
                violations.push(format!("case {c} {}: evpi {:.3e} vss {:.3e}", v.kind, v.evpi, v.vss));
            }
            min_evpi = min_evpi.min(v.evpi);
            min_vss = min_vss.min(v.vss);
            sv[loans as usize] = v.sv;
        }
        if sv[1] < sv[0] - gap_tol(sv[0]) {
            violations.push(format!("case {c}: OL-S {} < SO-S {}", sv[1], sv[0]));
        }
        min_loan_gain = min_loan_gain.min(sv[1] - sv[0]);
    }
    (
        violations.is_empty(),
        format!(
            "{} instances; min EVPI {min_evpi:.3e}, min VSS {min_vss:.3e}, min OL-S - SO-S {min_loan_gain:.3e}{}",
            cases.len(),
            if violations.is_empty() { String::new() } else { format!("; {}", violations.join("; ")) }
        ),
    )
}

fn paper_fan(tree: usize, k: usize) -> ScenarioFan {
    let cfg = presets::paper_instance();
    let full = scenario_gen::build_tree(&cfg, &presets::table3_branch_sets()[tree])
        .unwrap()
        .to_fan();
    fast_forward_select(&full, k).unwrap().apply(&full)
}

fn criterion_4() -> (bool, String) {
    let o = opts();
    let mut rng = ChaCha8Rng::seed_from_u64(404);
    let mut worst_single: f64 = 0.0;
    let mut worst_collapse: f64 = 0.0;
    let paper = presets::paper_instance();
    let mut singles = vec![(paper.clone(), ScenarioFan::single(paper.mean_forecast()))];
    let mut collapses = vec![(paper.clone(), paper_fan(0, 20))];
    for _ in 0..10 {
        let n = rng.random_range(1..=3);
        let horizon = rng.random_range(1..=4);
        let cfg = random_instance(&mut rng, n, horizon);
        let one = random_tree(&mut rng, n, &vec![1; horizon], 30.0, false);
        singles.push((cfg.clone(), one));
        let b = random_branches(&mut rng, horizon, 27);
        collapses.push((cfg, random_tree(&mut rng, n, &b, 30.0, false)));
    }
    for (cfg, fan) in &singles {
        let sos = solve(cfg, fan, ModelKind::SoS).objective;
        let sod = solve(cfg, fan, ModelKind::SoD).objective;
        worst_single = worst_single.max((sos - sod).abs() / sod.abs().max(1.0));
    }
    for (cfg, fan) in &mut collapses {
        cfg.loan_limit = 0.0;
        let so = solve(cfg, fan, ModelKind::SoS).objective;
        let ol = solve(cfg, fan, ModelKind::OlS).objective;
        worst_collapse = worst_collapse.max((ol - so).abs() / so.abs().max(1.0));
    }
    let tree = scenario_gen::build_tree(&paper, &presets::table3_branch_sets()[0]).unwrap();
    let t = evaluation::profit_gap_study(
        &paper,
        &tree,
        Some(20),
        StudyParameter::ReceiptDelay,
        &[ParameterValue::Number(0.0)],
        solver(&o),
    )
    .unwrap();
    let l0_gap = t.rows[0].gap_percent;
    let ok = worst_single <= SINGLE_SCENARIO_REL
        && worst_collapse <= 2.0 * o.mip_gap
        && l0_gap.abs() <= 100.0 * 2.0 * o.mip_gap;
    (
        ok,
        format!(
            "SO-S vs SO-D max rel {worst_single:.1e} ({} cases); B_U=0 OL-S vs SO-S max rel {worst_collapse:.1e} ({} cases); L=0 gap {l0_gap:.2e}%",
            singles.len(),
            collapses.len()
        ),
    )
}

fn criterion_5() -> (bool, String) {
    let cfg = presets::paper_instance();
    let y = branching_factor(cfg.n_products, cfg.horizon, 3);
    let matched = scenario_gen::generate_branch_sets(&cfg, y, 1, DEFAULT_STARTS).unwrap();
    let mut worst: f64 = 0.0;
    for (regime, outcome) in &matched {
        for (n, implied) in outcome.branches.implied_moments().iter().enumerate() {
            let p = cfg.regime_params[n].get(*regime);
            let target = lognormal_moments(p.mu, p.sigma);
            for (a, b) in [
                (implied.mean, target.mean),
                (implied.variance, target.variance),
                (implied.skewness, target.skewness),
            ] {
                worst = worst.max((a - b).abs() / b.abs());
            }
        }
    }
    let keyboard = matched[&Regime::Normal].branches.implied_moments()[0].mean;
    let keyboard_dev = (keyboard - KEYBOARD_MEAN).abs() / KEYBOARD_MEAN;
    let table3 = presets::table3_branch_sets()[0][&Regime::Normal].implied_moments()[0].mean;
    let ok = worst <= MOMENT_REL && keyboard_dev <= KEYBOARD_BAND && (table3 - TABLE3_MEAN).abs() <= TABLE3_TOL;
    (
        ok,
        format!(
            "y = {y}, max rel moment error {worst:.1e}; keyboard normal mean {keyboard:.3} ({:.2}% from {KEYBOARD_MEAN}); published tree 1 keyboard mean {table3:.3}",
            100.0 * keyboard_dev
        ),
    )
}

fn criterion_6() -> (bool, String) {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(606);
    let mut mismatches = 0;
    let mut worst_sum: f64 = 0.0;
    for _ in 0..100 {
        let n = rng.random_range(1..=3);
        let horizon = rng.random_range(1..=4);
        let size = rng.random_range(2..=30);
        let scenarios: Vec<Vec<Vec<f64>>> = (0..size)
            .map(|_| (0..n).map(|_| (0..horizon).map(|_| rng.random_range(0.0..50.0)).collect()).collect())
            .collect();
        let w: Vec<f64> = (0..size).map(|_| rng.random_range(0.1..1.0)).collect();
        let total: f64 = w.iter().sum();
        let fan = ScenarioFan::new(scenarios, w.iter().map(|x| x / total).collect()).unwrap();

        let score = |i: usize| -> f64 {
            (0..size)
                .map(|j| fan.probabilities[j] * pairwise_distance(&fan.scenarios[j], &fan.scenarios[i]).unwrap())
                .sum()
        };
        let mut brute = 0;
        for i in 1..size {
            if score(i) < score(brute) {
                brute = i;
            }
        }
        let r = fast_forward_select(&fan, 1).unwrap();
        if r.selected != vec![brute] || (r.probabilities[0] - 1.0).abs() > PROB_SUM_TOL {
            mismatches += 1;
        }
        let k = rng.random_range(1..=size);
        let sum: f64 = fast_forward_select(&fan, k).unwrap().probabilities.iter().sum();
        worst_sum = worst_sum.max((sum - 1.0).abs());
    }
    let hand = ScenarioFan::new(vec![vec![vec![0.0]], vec![vec![10.0]], vec![vec![11.0]]], vec![0.2, 0.4, 0.4]).unwrap();
    let r = fast_forward_select(&hand, 2).unwrap();
    let hand_ok = r.selected == vec![1, 0] && r.assignment == vec![0, 1, 1] && r.probabilities == vec![0.8, 0.2];
    let elapsed = start.elapsed();
    let ok = mismatches == 0 && worst_sum <= PROB_SUM_TOL && hand_ok && elapsed < Duration::from_secs(60);
    (
        ok,
        format!(
            "K=1 vs brute force: {mismatches}/100 mismatches; max |sum Pr - 1| {worst_sum:.1e}; hand trace {}; {:.1}s",
            if hand_ok { "matches" } else { "differs" },
            elapsed.as_secs_f64()
        ),
    )
}

fn criterion_7() -> (bool, String) {
    let start = Instant::now();
    let o = opts();
    let cfg = presets::paper_instance();
    let fans: Vec<ScenarioFan> = (0..3).map(|t| paper_fan(t, PAPER_K)).collect();
    let mut parts = Vec::new();
    let mut ok = true;
    for (loans, reference) in [(false, presets::REFERENCE_SO_S), (true, presets::REFERENCE_OL_S)] {
        let m = evaluation::stability_matrix(&cfg, &fans, loans, solver(&o)).unwrap();
        let diag: Vec<f64> = (0..3).map(|i| m.values[i][i]).collect();
        let published: Vec<f64> = (0..3).map(|i| reference[i][i]).collect();
        let flat = reference.iter().flatten();
        let lo = flat.clone().copied().fold(f64::INFINITY, f64::min) * (1.0 - PAPER_BAND);
        let hi = flat.copied().fold(f64::NEG_INFINITY, f64::max) * (1.0 + PAPER_BAND);
        let in_band = diag.iter().all(|&d| (lo..=hi).contains(&d));
        ok &= in_band && m.max_relative_gap < STABILITY_GAP;
        parts.push(format!(
            "{}: diagonal {:?} vs published {:?} (band {:.0}-{:.0}, {}), max gap {:.3}%",
            m.kind,
            diag.iter().map(|x| x.round()).collect::<Vec<_>>(),
            published,
            lo,
            hi,
            if in_band { "inside" } else { "outside" },
            100.0 * m.max_relative_gap
        ));
    }
    parts.push(format!("{:.1}s", start.elapsed().as_secs_f64()));
    (ok, parts.join("; "))
}

fn criterion_8() -> (bool, String) {
    let o = opts();
    let cfg = presets::paper_instance();
    let tree = scenario_gen::build_tree(&cfg, &presets::table3_branch_sets()[0]).unwrap();
    let slack = 100.0 * 2.0 * o.mip_gap;
    let nums = |v: &[f64]| v.iter().map(|&x| ParameterValue::Number(x)).collect::<Vec<_>>();
    let cash = evaluation::profit_gap_study(
        &cfg,
        &tree,
        Some(PAPER_K),
        StudyParameter::InitialCash,
        &nums(&[10_000.0, 15_000.0, 20_000.0, 25_000.0, 30_000.0]),
        solver(&o),
    )
    .unwrap();
    let delay = evaluation::profit_gap_study(
        &cfg,
        &tree,
        Some(PAPER_K),
        StudyParameter::ReceiptDelay,
        &nums(&[0.0, 1.0, 2.0, 3.0, 4.0]),
        solver(&o),
    )
    .unwrap();
    let g = |t: &evaluation::ProfitGapTable| t.rows.iter().map(|r| r.gap_percent).collect::<Vec<_>>();
    let (gc, gl) = (g(&cash), g(&delay));
    let cash_ok = gc.windows(2).all(|w| w[1] <= w[0] + slack);
    let delay_ok = gl.windows(2).all(|w| w[1] >= w[0] - slack);
    let full = tree.to_fan();
    let sizes = [100, 120, 140, 160, 180];
    let mut spreads = BTreeMap::new();
    for loans in [false, true] {
        let rows = evaluation::sample_size_sweep(&cfg, &full, &sizes, loans, solver(&o)).unwrap();
        spreads.insert(ModelKind::stochastic(loans).to_string(), evaluation::sweep_spread(&rows));
    }
    let sweep_ok = spreads.values().all(|&s| s < SWEEP_SPREAD);
    let fmt = |v: &[f64]| v.iter().map(|x| format!("{x:.3}")).collect::<Vec<_>>().join("/");
    (
        cash_ok && delay_ok && sweep_ok,
        format!(
            "gap% by C0 {} ({}), by L {} ({}); sweep spread {}",
            fmt(&gc),
            if cash_ok { "non-increasing" } else { "NOT non-increasing" },
            fmt(&gl),
            if delay_ok { "non-decreasing" } else { "NOT non-decreasing" },
            spreads
                .iter()
                .map(|(k, s)| format!("{k} {:.3}%", 100.0 * s))
                .collect::<Vec<_>>()
                .join(", ")
        ),
    )
}

fn criterion_9() -> (bool, String) {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("repro");
    let run = || {
        let status = Command::new(env!("CARGO_BIN_EXE_cashplan"))
            .args(["repro-paper", "--quick", "--out"])
            .arg(&out)
            .env("SOURCE_DATE_EPOCH", "1700000000")
            .env_remove("PLANNER_SOLVER")
            .output()
            .unwrap();
        assert!(status.status.success(), "{}", String::from_utf8_lossy(&status.stderr));
        let files: BTreeMap<String, Vec<u8>> = fs::read_dir(&out)
            .unwrap()
            .map(|e| {
                let p = e.unwrap().path();
                (p.file_name().unwrap().to_string_lossy().into_owned(), fs::read(&p).unwrap())
            })
            .collect();
        fs::remove_dir_all(&out).unwrap();
        files
    };
    let a = run();
    let b = run();
    let differing: Vec<&String> = a.keys().filter(|k| b.get(*k) != a.get(*k)).collect();
    let ok = differing.is_empty() && a.len() == b.len() && a.contains_key("manifest.json");
    (ok, format!("{} files compared, {} differ", a.len(), differing.len()))
}

fn main() {
    let criteria: [(usize, &'static str, fn() -> (bool, String), bool); 9] = [
        (1, "oracle equivalence (MILP vs simulator)", criterion_1, false),
        (2, "brute-force optimality", criterion_2, false),
        (3, "dominance chain", criterion_3, false),
        (4, "degeneracy collapses", criterion_4, false),
        (5, "moment matching", criterion_5, false),
        (6, "fast forward selection", criterion_6, false),
        (7, "paper-scale reproduction", criterion_7, true),
        (8, "qualitative trends", criterion_8, false),
        (9, "determinism", criterion_9, false),
    ];
    // ACCEPTANCE_ONLY=2,5 runs a subset.
    let only: Option<Vec<usize>> = std::env::var("ACCEPTANCE_ONLY")
        .ok()
        .map(|v| v.split(',').filter_map(|x| x.trim().parse().ok()).collect());
    let mut lines = Vec::new();
    for (id, title, f, soft) in criteria {
        if only.as_ref().is_some_and(|o| !o.contains(&id)) {
            continue;
        }
        let (ok, detail) = f();
        let verdict = match (ok, soft) {
            (true, _) => Verdict::Pass,
            (false, true) => Verdict::SoftFail,
            (false, false) => Verdict::Fail,
        };
        let line = Line {
            id,
            title,
            verdict,
            detail,
        };
        println!("{}", render(&line));
        lines.push(line);
    }
    let hard_failures = lines.iter().filter(|l| matches!(l.verdict, Verdict::Fail)).count();
    println!(
        "acceptance: {} passed, {} soft-failed, {} failed",
        lines.iter().filter(|l| matches!(l.verdict, Verdict::Pass)).count(),
        lines.iter().filter(|l| matches!(l.verdict, Verdict::SoftFail)).count(),
        hard_failures
    );
    if hard_failures > 0 {
        std::process::exit(1);
    }
}

fn render(l: &Line) -> String {
    let tag = match l.verdict {
        Verdict::Pass => "PASS",
        Verdict::Fail => "FAIL",
        Verdict::SoftFail => "FAIL (soft)",
    };
    format!("criterion {} [{}]: {tag} - {}", l.id, l.title, l.detail)
}
