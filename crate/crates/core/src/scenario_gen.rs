//! Moment-matching generation of per-regime demand branches and the
//! stationary scenario trees built from them.

use std::collections::BTreeMap;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::instance::{InstanceConfig, Regime};
use crate::scenario_reduce::ScenarioFan;

/// Objective value below which a moment match counts as exact.
pub const MATCH_TOLERANCE: f64 = 1e-6;
/// Number of random starting points tried by [`match_moments`].
pub const DEFAULT_STARTS: usize = 20;

const MAX_ITERATIONS: usize = 400;

/// Mean, variance and standardized skewness of a univariate distribution.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Moments {
    pub mean: f64,
    pub variance: f64,
    pub skewness: f64,
}

impl Moments {
    fn get(&self, k: usize) -> f64 {
        match k {
            0 => self.mean,
            1 => self.variance,
            _ => self.skewness,
        }
    }
}

/// Closed-form moments of log-normal(mu, sigma).
pub fn lognormal_moments(mu: f64, sigma: f64) -> Moments {
    assert!(sigma > 0.0, "sigma must be positive");
    let s2 = sigma * sigma;
    let es2 = s2.exp();
    Moments {
        mean: (mu + 0.5 * s2).exp(),
        variance: (es2 - 1.0) * (2.0 * mu + s2).exp(),
        skewness: (es2 + 2.0) * (es2 - 1.0).sqrt(),
    }
}

/// Smallest branching factor `y` with `(D + 1) y - 1 >= D m`, `D = N T`.
pub fn branching_factor(n_products: usize, horizon: usize, n_moments: usize) -> usize {
    let d = n_products * horizon;
    let specs = d * n_moments;
    let mut y = 1;
    while (d + 1) * y < specs + 1 {
        y += 1;
    }
    y
}

/// Per-product moment targets with a weight for each matched property.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MomentSpec {
    pub targets: Vec<Moments>,
    /// `[n][k]` for k = mean, variance, skewness.
    pub weights: Vec<[f64; 3]>,
}

impl MomentSpec {
    pub fn new(targets: Vec<Moments>) -> Self {
        let weights = vec![[1.0; 3]; targets.len()];
        Self { targets, weights }
    }

    /// Targets from the log-normal parameters of `regime` for every product.
    pub fn from_config(cfg: &InstanceConfig, regime: Regime) -> Self {
        Self::new(
            cfg.regime_params
                .iter()
                .map(|rp| {
                    let p = rp.get(regime);
                    lognormal_moments(p.mu, p.sigma)
                })
                .collect(),
        )
    }

    pub fn n_products(&self) -> usize {
        self.targets.len()
    }

    /// Keeps only the first `k` properties (mean, then variance, then
    /// skewness) by zeroing the remaining weights.
    pub fn first_moments(mut self, k: usize) -> Self {
        for w in &mut self.weights {
            for (j, x) in w.iter_mut().enumerate() {
                if j >= k {
                    *x = 0.0;
                }
            }
        }
        self
    }

    /// Number of properties with a positive weight.
    pub fn n_specs(&self) -> usize {
        self.weights.iter().flatten().filter(|&&w| w > 0.0).count()
    }

    fn validate(&self) -> Result<()> {
        if self.targets.is_empty() {
            return Err(Error::Input("moment spec has no products".into()));
        }
        if self.weights.len() != self.targets.len() {
            return Err(Error::Dimension {
                what: "moment weights".into(),
                expected: self.targets.len(),
                actual: self.weights.len(),
            });
        }
        for (i, m) in self.targets.iter().enumerate() {
            if !(m.mean > 0.0 && m.mean.is_finite()) {
                return Err(Error::Input(format!("product {i}: target mean must be positive")));
            }
            if !(m.variance > 0.0 && m.variance.is_finite()) {
                return Err(Error::Input(format!("product {i}: target variance must be positive")));
            }
            if !m.skewness.is_finite() {
                return Err(Error::Input(format!("product {i}: target skewness must be finite")));
            }
        }
        if self.weights.iter().flatten().any(|&w| !(w >= 0.0 && w.is_finite())) {
            return Err(Error::Input("moment weights must be non-negative".into()));
        }
        if self.n_specs() == 0 {
            return Err(Error::Input("at least one moment weight must be positive".into()));
        }
        Ok(())
    }
}

/// Discrete joint demand outcomes for one period: `realizations[s][n]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BranchSet {
    pub probabilities: Vec<f64>,
    pub realizations: Vec<Vec<f64>>,
}

impl BranchSet {
    pub fn new(probabilities: Vec<f64>, realizations: Vec<Vec<f64>>) -> Result<Self> {
        let bs = Self {
            probabilities,
            realizations,
        };
        bs.validate()?;
        Ok(bs)
    }

    pub fn len(&self) -> usize {
        self.probabilities.len()
    }

    pub fn is_empty(&self) -> bool {
        self.probabilities.is_empty()
    }

    pub fn n_products(&self) -> usize {
        self.realizations.first().map_or(0, Vec::len)
    }

    pub fn validate(&self) -> Result<()> {
        if self.probabilities.is_empty() || self.probabilities.len() != self.realizations.len() {
            return Err(Error::Input(format!(
                "branch set has {} probabilities and {} realizations",
                self.probabilities.len(),
                self.realizations.len()
            )));
        }
        let n = self.n_products();
        if n == 0 || self.realizations.iter().any(|r| r.len() != n) {
            return Err(Error::Input("branch realizations must share one positive width".into()));
        }
        if self.probabilities.iter().any(|&p| !(p >= 0.0)) {
            return Err(Error::Input("branch probabilities must be non-negative".into()));
        }
        if self.realizations.iter().flatten().any(|&d| !(d >= 0.0 && d.is_finite())) {
            return Err(Error::Input("branch demands must be finite and non-negative".into()));
        }
        let sum: f64 = self.probabilities.iter().sum();
        if (sum - 1.0).abs() > 1e-9 {
            return Err(Error::ProbabilitySum(sum));
        }
        Ok(())
    }

    /// Moments implied by the discrete distribution of each product.
    pub fn implied_moments(&self) -> Vec<Moments> {
        (0..self.n_products())
            .map(|n| {
                let mean: f64 = self
                    .probabilities
                    .iter()
                    .zip(&self.realizations)
                    .map(|(p, r)| p * r[n])
                    .sum();
                let mut c2 = 0.0;
                let mut c3 = 0.0;
                for (p, r) in self.probabilities.iter().zip(&self.realizations) {
                    let dev = r[n] - mean;
                    c2 += p * dev * dev;
                    c3 += p * dev * dev * dev;
                }
                let skewness = if c2 > 0.0 { c3 / c2.powf(1.5) } else { 0.0 };
                Moments {
                    mean,
                    variance: c2,
                    skewness,
                }
            })
            .collect()
    }

    /// Copy with every realization rounded to whole units, for display.
    pub fn rounded(&self) -> BranchSet {
        BranchSet {
            probabilities: self.probabilities.clone(),
            realizations: self
                .realizations
                .iter()
                .map(|r| r.iter().map(|x| x.round()).collect())
                .collect(),
        }
    }
}

/// Result of a moment-matching run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MatchOutcome {
    pub branches: BranchSet,
    /// Weighted squared distance to the targets.
    pub objective: f64,
    /// Moments as evaluated by the optimizer at the returned point.
    pub fitted: Vec<Moments>,
    /// Objective is above [`MATCH_TOLERANCE`].
    pub not_converged: bool,
    /// `y (N + 1) - 1` is below the number of specified properties.
    pub underspecified: bool,
    pub best_start: usize,
}

/// Finds `y` joint realizations and probabilities whose per-product mean,
/// variance and skewness best match `spec`.
///
/// Probabilities live on the simplex through `u_s^2 / sum u^2` and
/// realizations through `exp(z)`, so the search is unconstrained. Each of
/// `starts` random points is refined by Levenberg-Marquardt on the weighted
/// residuals; the best end point wins.
pub fn match_moments(spec: &MomentSpec, y: usize, seed: u64, starts: usize) -> Result<MatchOutcome> {
    spec.validate()?;
    if y == 0 {
        return Err(Error::Input("branching factor must be at least 1".into()));
    }
    let n = spec.n_products();
    let underspecified = y * (n + 1) - 1 < spec.n_specs();
    if underspecified {
        log::warn!(
            "{} branches give {} free values for {} moment targets",
            y,
            y * (n + 1) - 1,
            spec.n_specs()
        );
    }

    if y == 1 {
        let realization: Vec<f64> = spec.targets.iter().map(|m| m.mean).collect();
        let branches = BranchSet::new(vec![1.0], vec![realization])?;
        let fitted = branches.implied_moments();
        let objective = weighted_distance(spec, &fitted);
        return Ok(MatchOutcome {
            branches,
            objective,
            fitted,
            not_converged: objective > MATCH_TOLERANCE,
            underspecified,
            best_start: 0,
        });
    }

    let mut master = ChaCha8Rng::seed_from_u64(seed);
    let start_seeds: Vec<u64> = (0..starts.max(1)).map(|_| master.random()).collect();
    let runs: Vec<(f64, Vec<f64>)> = start_seeds
        .par_iter()
        .map(|&s| {
            let problem = MatchProblem { spec, y };
            let x0 = problem.initial_point(&mut ChaCha8Rng::seed_from_u64(s));
            problem.solve(x0)
        })
        .collect();

    let (best_start, (objective, x)) = runs
        .into_iter()
        .enumerate()
        .fold(None::<(usize, (f64, Vec<f64>))>, |best, (i, run)| match best {
            Some((_, (obj, _))) if obj <= run.0 || run.0.is_nan() => best,
            _ => Some((i, run)),
        })
        .expect("at least one start");

    let problem = MatchProblem { spec, y };
    let (probabilities, realizations) = problem.decode(&x);
    let fitted = problem.moments(&probabilities, &realizations);
    let branches = BranchSet::new(probabilities, realizations)?;
    if objective > MATCH_TOLERANCE {
        log::warn!("moment matching stopped at objective {objective:.3e}");
    }
    Ok(MatchOutcome {
        branches,
        objective,
        fitted,
        not_converged: objective > MATCH_TOLERANCE,
        underspecified,
        best_start,
    })
}

fn weighted_distance(spec: &MomentSpec, fitted: &[Moments]) -> f64 {
    let mut total = 0.0;
    for (n, (target, got)) in spec.targets.iter().zip(fitted).enumerate() {
        for k in 0..3 {
            let diff = got.get(k) - target.get(k);
            total += spec.weights[n][k] * diff * diff;
        }
    }
    total
}

/// Parameter layout: `z[s * N + n]` for the log-realizations, then `u[s]`.
struct MatchProblem<'a> {
    spec: &'a MomentSpec,
    y: usize,
}

impl MatchProblem<'_> {
    fn n(&self) -> usize {
        self.spec.n_products()
    }

    fn dim(&self) -> usize {
        self.y * (self.n() + 1)
    }

    fn initial_point(&self, rng: &mut ChaCha8Rng) -> Vec<f64> {
        let n = self.n();
        let mut x = vec![0.0; self.dim()];
        for s in 0..self.y {
            for (i, m) in self.spec.targets.iter().enumerate() {
                let log_var = (1.0 + m.variance / (m.mean * m.mean)).ln();
                let spread = log_var.sqrt();
                let z: f64 = rng.sample(StandardNormal);
                x[s * n + i] = m.mean.ln() - 0.5 * log_var + spread * z;
            }
            x[self.y * n + s] = rng.random_range(0.3..1.0);
        }
        x
    }

    fn decode(&self, x: &[f64]) -> (Vec<f64>, Vec<Vec<f64>>) {
        let n = self.n();
        let u = &x[self.y * n..];
        let total: f64 = u.iter().map(|v| v * v).sum();
        let mut probs: Vec<f64> = u.iter().map(|v| v * v / total).collect();
        let head: f64 = probs[..self.y - 1].iter().sum();
        probs[self.y - 1] = (1.0 - head).max(0.0);
        let real = (0..self.y)
            .map(|s| (0..n).map(|i| x[s * n + i].exp()).collect())
            .collect();
        (probs, real)
    }

    fn moments(&self, probs: &[f64], real: &[Vec<f64>]) -> Vec<Moments> {
        (0..self.n())
            .map(|i| {
                let mean: f64 = (0..self.y).map(|s| probs[s] * real[s][i]).sum();
                let c2: f64 = (0..self.y).map(|s| probs[s] * (real[s][i] - mean).powi(2)).sum();
                let c3: f64 = (0..self.y).map(|s| probs[s] * (real[s][i] - mean).powi(3)).sum();
                Moments {
                    mean,
                    variance: c2,
                    skewness: if c2 > 0.0 { c3 / c2.powf(1.5) } else { 0.0 },
                }
            })
            .collect()
    }

    /// Weighted residuals and their Jacobian with respect to `x`.
    fn residuals(&self, x: &[f64]) -> (DVector<f64>, DMatrix<f64>) {
        let n = self.n();
        let y = self.y;
        let u = &x[y * n..];
        let total: f64 = u.iter().map(|v| v * v).sum();
        let probs: Vec<f64> = u.iter().map(|v| v * v / total).collect();
        // d probs[s] / d u[r]
        let dp_du = |s: usize, r: usize| -> f64 {
            let own = if s == r { 2.0 * u[r] / total } else { 0.0 };
            own - probs[s] * 2.0 * u[r] / total
        };

        let mut res = DVector::zeros(3 * n);
        let mut jac = DMatrix::zeros(3 * n, self.dim());
        for i in 0..n {
            let real: Vec<f64> = (0..y).map(|s| x[s * n + i].exp()).collect();
            let mean: f64 = (0..y).map(|s| probs[s] * real[s]).sum();
            let c2: f64 = (0..y).map(|s| probs[s] * (real[s] - mean).powi(2)).sum();
            let c3: f64 = (0..y).map(|s| probs[s] * (real[s] - mean).powi(3)).sum();
            let c2 = c2.max(1e-300);
            let skew = c3 / c2.powf(1.5);
            let target = self.spec.targets[i];
            let w = self.spec.weights[i].map(f64::sqrt);
            res[3 * i] = w[0] * (mean - target.mean);
            res[3 * i + 1] = w[1] * (c2 - target.variance);
            res[3 * i + 2] = w[2] * (skew - target.skewness);

            let dskew = |d2: f64, d3: f64| d3 / c2.powf(1.5) - 1.5 * c3 / c2.powf(2.5) * d2;
            // realizations
            for s in 0..y {
                let dev = real[s] - mean;
                let dm = probs[s];
                let d2 = 2.0 * probs[s] * dev;
                let d3 = 3.0 * probs[s] * (dev * dev - c2);
                let chain = real[s];
                let col = s * n + i;
                jac[(3 * i, col)] = w[0] * dm * chain;
                jac[(3 * i + 1, col)] = w[1] * d2 * chain;
                jac[(3 * i + 2, col)] = w[2] * dskew(d2, d3) * chain;
            }
            // probabilities, through the simplex map
            let dm_dp: Vec<f64> = real.clone();
            let d2_dp: Vec<f64> = real.iter().map(|r| (r - mean).powi(2)).collect();
            let d3_dp: Vec<f64> = real
                .iter()
                .map(|r| (r - mean).powi(3) - 3.0 * c2 * r)
                .collect();
            for r in 0..y {
                let (mut dm, mut d2, mut d3) = (0.0, 0.0, 0.0);
                for s in 0..y {
                    let g = dp_du(s, r);
                    dm += dm_dp[s] * g;
                    d2 += d2_dp[s] * g;
                    d3 += d3_dp[s] * g;
                }
                let col = y * n + r;
                jac[(3 * i, col)] = w[0] * dm;
                jac[(3 * i + 1, col)] = w[1] * d2;
                jac[(3 * i + 2, col)] = w[2] * dskew(d2, d3);
            }
        }
        (res, jac)
    }

    fn solve(&self, mut x: Vec<f64>) -> (f64, Vec<f64>) {
        let (mut r, mut j) = self.residuals(&x);
        let mut obj = r.norm_squared();
        let mut lambda = 1e-3;
        for _ in 0..MAX_ITERATIONS {
            if obj < 1e-20 || !obj.is_finite() {
                break;
            }
            let jt = j.transpose();
            let jtj = &jt * &j;
            let grad = &jt * &r;
            let mut improved = false;
            for _ in 0..30 {
                let mut a = jtj.clone();
                for d in 0..a.nrows() {
                    a[(d, d)] += lambda * (jtj[(d, d)] + 1e-12);
                }
                let Some(step) = a.lu().solve(&(-&grad)) else {
                    lambda *= 10.0;
                    continue;
                };
                let trial: Vec<f64> = x.iter().zip(step.iter()).map(|(a, b)| a + b).collect();
                if trial.iter().any(|v| !v.is_finite() || v.abs() > 50.0) {
                    lambda *= 10.0;
                    continue;
                }
                let (tr, tj) = self.residuals(&trial);
                let tobj = tr.norm_squared();
                if tobj.is_finite() && tobj < obj {
                    let rel = (obj - tobj) / obj.max(1e-300);
                    x = trial;
                    r = tr;
                    j = tj;
                    obj = tobj;
                    lambda = (lambda * 0.3).max(1e-15);
                    improved = rel > 1e-15;
                    break;
                }
                lambda *= 10.0;
            }
            if !improved {
                break;
            }
        }
        // renormalize the simplex parameters so u stays O(1)
        let n = self.n();
        let norm = x[self.y * n..].iter().map(|v| v * v).sum::<f64>().sqrt();
        if norm > 0.0 {
            for v in &mut x[self.y * n..] {
                *v /= norm;
            }
        }
        let (probs, real) = self.decode(&x);
        let obj = weighted_distance(self.spec, &self.moments(&probs, &real));
        (obj, x)
    }
}

/// Stationary-within-regime tree: period `t` branches according to the
/// branch set of `pattern[t]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioTree {
    pub regimes: BTreeMap<Regime, BranchSet>,
    pub pattern: Vec<Regime>,
}

impl ScenarioTree {
    pub fn horizon(&self) -> usize {
        self.pattern.len()
    }

    pub fn n_products(&self) -> usize {
        self.regimes.values().next().map_or(0, BranchSet::n_products)
    }

    pub fn period(&self, t: usize) -> &BranchSet {
        &self.regimes[&self.pattern[t]]
    }

    /// Number of root-to-leaf paths.
    pub fn n_scenarios(&self) -> usize {
        (0..self.horizon()).map(|t| self.period(t).len()).product()
    }

    /// Same branch sets laid over another regime pattern.
    pub fn with_pattern(&self, pattern: Vec<Regime>) -> Result<ScenarioTree> {
        for r in &pattern {
            if !self.regimes.contains_key(r) {
                return Err(Error::MissingRegime(r.to_string()));
            }
        }
        Ok(ScenarioTree {
            regimes: self.regimes.clone(),
            pattern,
        })
    }

    /// Flattens the tree into its leaves; path order is lexicographic in the
    /// branch index with period 1 most significant.
    pub fn to_fan(&self) -> ScenarioFan {
        let horizon = self.horizon();
        let n = self.n_products();
        let mut scenarios = Vec::with_capacity(self.n_scenarios());
        let mut probabilities = Vec::with_capacity(self.n_scenarios());
        let mut idx = vec![0usize; horizon];
        loop {
            let mut prob = 1.0;
            let mut demand = vec![vec![0.0; horizon]; n];
            for t in 0..horizon {
                let bs = self.period(t);
                prob *= bs.probabilities[idx[t]];
                for i in 0..n {
                    demand[i][t] = bs.realizations[idx[t]][i];
                }
            }
            scenarios.push(demand);
            probabilities.push(prob);

            let mut t = horizon;
            loop {
                if t == 0 {
                    return ScenarioFan {
                        scenarios,
                        probabilities,
                    };
                }
                t -= 1;
                idx[t] += 1;
                if idx[t] < self.period(t).len() {
                    break;
                }
                idx[t] = 0;
            }
        }
    }

    pub fn to_json_pretty(&self) -> String {
        serde_json::to_string_pretty(self).expect("tree serializes")
    }
}

/// Lays the per-regime branch sets over the configuration's demand pattern.
pub fn build_tree(cfg: &InstanceConfig, branch_sets: &BTreeMap<Regime, BranchSet>) -> Result<ScenarioTree> {
    for bs in branch_sets.values() {
        bs.validate()?;
        if bs.n_products() != cfg.n_products {
            return Err(Error::Dimension {
                what: "branch set products".into(),
                expected: cfg.n_products,
                actual: bs.n_products(),
            });
        }
    }
    let mut regimes = BTreeMap::new();
    for r in &cfg.demand_pattern {
        let bs = branch_sets
            .get(r)
            .ok_or_else(|| Error::MissingRegime(r.to_string()))?;
        regimes.insert(*r, bs.clone());
    }
    Ok(ScenarioTree {
        regimes,
        pattern: cfg.demand_pattern.clone(),
    })
}

/// Generates one branch set per regime present in the pattern.
pub fn generate_branch_sets(
    cfg: &InstanceConfig,
    y: usize,
    seed: u64,
    starts: usize,
) -> Result<BTreeMap<Regime, MatchOutcome>> {
    generate_branch_sets_matching(cfg, 3, y, seed, starts)
}

/// Like [`generate_branch_sets`], matching only the first `n_moments`
/// moments of each product.
pub fn generate_branch_sets_matching(
    cfg: &InstanceConfig,
    n_moments: usize,
    y: usize,
    seed: u64,
    starts: usize,
) -> Result<BTreeMap<Regime, MatchOutcome>> {
    if !(1..=3).contains(&n_moments) {
        return Err(Error::Input(format!("moment count {n_moments} must be 1, 2 or 3")));
    }
    let mut regimes: Vec<Regime> = cfg.demand_pattern.clone();
    regimes.sort();
    regimes.dedup();
    let mut out = BTreeMap::new();
    for (k, r) in regimes.into_iter().enumerate() {
        let spec = MomentSpec::from_config(cfg, r).first_moments(n_moments);
        let outcome = match_moments(&spec, y, seed.wrapping_add(k as u64 * 0x9E37_79B9), starts)?;
        out.insert(r, outcome);
    }
    Ok(out)
}
