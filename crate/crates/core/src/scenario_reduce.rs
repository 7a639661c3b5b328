//! Scenario fans and fast forward selection.

use std::collections::HashSet;
use std::io::{Read, Write};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Default number of scenarios kept by reduction presets.
pub const DEFAULT_REDUCED_SIZE: usize = 140;

/// Flat list of full-horizon demand paths, `scenarios[s][n][t]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioFan {
    pub scenarios: Vec<Vec<Vec<f64>>>,
    pub probabilities: Vec<f64>,
}

impl ScenarioFan {
    pub fn new(scenarios: Vec<Vec<Vec<f64>>>, probabilities: Vec<f64>) -> Result<Self> {
        let fan = Self {
            scenarios,
            probabilities,
        };
        fan.validate()?;
        Ok(fan)
    }

    /// One scenario with probability 1.
    pub fn single(demands: Vec<Vec<f64>>) -> Self {
        Self {
            scenarios: vec![demands],
            probabilities: vec![1.0],
        }
    }

    pub fn len(&self) -> usize {
        self.scenarios.len()
    }

    pub fn is_empty(&self) -> bool {
        self.scenarios.is_empty()
    }

    pub fn n_products(&self) -> usize {
        self.scenarios.first().map_or(0, Vec::len)
    }

    pub fn horizon(&self) -> usize {
        self.scenarios
            .first()
            .and_then(|s| s.first())
            .map_or(0, Vec::len)
    }

    pub fn validate(&self) -> Result<()> {
        if self.scenarios.is_empty() {
            return Err(Error::Input("scenario fan is empty".into()));
        }
        if self.scenarios.len() != self.probabilities.len() {
            return Err(Error::Dimension {
                what: "fan probabilities".into(),
                expected: self.scenarios.len(),
                actual: self.probabilities.len(),
            });
        }
        let (n, t) = (self.n_products(), self.horizon());
        for s in &self.scenarios {
            if s.len() != n || s.iter().any(|row| row.len() != t) {
                return Err(Error::Input("scenarios must share one N x T shape".into()));
            }
            if s.iter().flatten().any(|&d| !(d >= 0.0 && d.is_finite())) {
                return Err(Error::Input("scenario demands must be finite and non-negative".into()));
            }
        }
        if self.probabilities.iter().any(|&p| !(p >= 0.0)) {
            return Err(Error::Input("scenario probabilities must be non-negative".into()));
        }
        let sum: f64 = self.probabilities.iter().sum();
        if (sum - 1.0).abs() > 1e-6 {
            return Err(Error::ProbabilitySum(sum));
        }
        Ok(())
    }

    /// Number of scenarios that repeat an earlier one exactly.
    pub fn duplicate_count(&self) -> usize {
        let mut seen = HashSet::new();
        self.scenarios
            .iter()
            .filter(|s| {
                let key: Vec<u64> = s.iter().flatten().map(|x| x.to_bits()).collect();
                !seen.insert(key)
            })
            .count()
    }

    /// Probability-weighted mean demand `[n][t]`.
    pub fn mean(&self) -> Vec<Vec<f64>> {
        let mut m = vec![vec![0.0; self.horizon()]; self.n_products()];
        for (s, p) in self.scenarios.iter().zip(&self.probabilities) {
            for (row, srow) in m.iter_mut().zip(s) {
                for (x, d) in row.iter_mut().zip(srow) {
                    *x += p * d;
                }
            }
        }
        m
    }

    /// Largest realization of each `(n, t)` across scenarios.
    pub fn max_demand(&self) -> Vec<Vec<f64>> {
        let mut m = vec![vec![0.0f64; self.horizon()]; self.n_products()];
        for s in &self.scenarios {
            for (row, srow) in m.iter_mut().zip(s) {
                for (x, d) in row.iter_mut().zip(srow) {
                    *x = x.max(*d);
                }
            }
        }
        m
    }

    /// Writes the fan as CSV: a header, then one row per scenario holding the
    /// probability and the `N T` demands in period-major order.
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut wtr = csv::Writer::from_writer(w);
        let mut header = vec!["probability".to_string()];
        for t in 1..=self.horizon() {
            for n in 1..=self.n_products() {
                header.push(format!("t{t}_n{n}"));
            }
        }
        wtr.write_record(&header)?;
        for (s, p) in self.scenarios.iter().zip(&self.probabilities) {
            let mut rec = vec![p.to_string()];
            for t in 0..self.horizon() {
                for row in s {
                    rec.push(row[t].to_string());
                }
            }
            wtr.write_record(&rec)?;
        }
        wtr.flush()?;
        Ok(())
    }

    pub fn read_csv<R: Read>(r: R) -> Result<Self> {
        let mut rdr = csv::Reader::from_reader(r);
        let header = rdr.headers()?.clone();
        if header.get(0) != Some("probability") {
            return Err(Error::Input("fan CSV must start with a 'probability' column".into()));
        }
        let mut horizon = 0;
        let mut n_products = 0;
        for name in header.iter().skip(1) {
            let (t, n) = parse_column(name)
                .ok_or_else(|| Error::Input(format!("bad fan column '{name}'")))?;
            horizon = horizon.max(t);
            n_products = n_products.max(n);
        }
        if horizon * n_products != header.len() - 1 {
            return Err(Error::Input("fan CSV columns do not form an N x T grid".into()));
        }
        let mut scenarios = Vec::new();
        let mut probabilities = Vec::new();
        for rec in rdr.records() {
            let rec = rec?;
            let vals: Vec<f64> = rec
                .iter()
                .map(|v| v.trim().parse::<f64>())
                .collect::<std::result::Result<_, _>>()
                .map_err(|e| Error::Input(format!("fan CSV value: {e}")))?;
            probabilities.push(vals[0]);
            let mut s = vec![vec![0.0; horizon]; n_products];
            for t in 0..horizon {
                for (n, row) in s.iter_mut().enumerate() {
                    row[t] = vals[1 + t * n_products + n];
                }
            }
            scenarios.push(s);
        }
        Self::new(scenarios, probabilities)
    }
}

fn parse_column(name: &str) -> Option<(usize, usize)> {
    let rest = name.strip_prefix('t')?;
    let (t, n) = rest.split_once("_n")?;
    Some((t.parse().ok()?, n.parse().ok()?))
}

/// Euclidean distance over all `N T` demand entries.
pub fn pairwise_distance(a: &[Vec<f64>], b: &[Vec<f64>]) -> Result<f64> {
    if a.len() != b.len() || a.iter().zip(b).any(|(x, y)| x.len() != y.len()) {
        return Err(Error::Input("scenario shapes differ".into()));
    }
    Ok(a.iter()
        .zip(b)
        .flat_map(|(x, y)| x.iter().zip(y))
        .map(|(p, q)| (p - q) * (p - q))
        .sum::<f64>()
        .sqrt())
}

/// Outcome of fast forward selection.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReductionResult {
    /// Original indices in the order they were selected.
    pub selected: Vec<usize>,
    /// Redistributed probabilities, aligned with `selected`.
    pub probabilities: Vec<f64>,
    /// For every original scenario, the original index of the selected
    /// scenario that absorbs it (itself when selected).
    pub assignment: Vec<usize>,
    /// `sum_j Pr(j) d(j, assignment(j))` over the dropped scenarios.
    pub total_distance: f64,
}

impl ReductionResult {
    /// The reduced fan, scenarios in selection order.
    pub fn apply(&self, fan: &ScenarioFan) -> ScenarioFan {
        ScenarioFan {
            scenarios: self.selected.iter().map(|&i| fan.scenarios[i].clone()).collect(),
            probabilities: self.probabilities.clone(),
        }
    }
}

fn distance_matrix(fan: &ScenarioFan) -> Vec<Vec<f64>> {
    let flat: Vec<Vec<f64>> = fan
        .scenarios
        .iter()
        .map(|s| s.iter().flatten().copied().collect())
        .collect();
    flat.par_iter()
        .map(|a| {
            flat.iter()
                .map(|b| {
                    a.iter()
                        .zip(b)
                        .map(|(p, q)| (p - q) * (p - q))
                        .sum::<f64>()
                        .sqrt()
                })
                .collect()
        })
        .collect()
}

/// Greedy fast forward selection of `k` scenarios.
///
/// Each step picks the unselected scenario with the smallest probability
/// weighted distance to the remaining ones, after shrinking every distance
/// `d(j, i)` to `min(d(j, i), d(j, l))` for the last pick `l`. Ties go to the
/// lowest index. Dropped scenarios hand their probability to the nearest
/// selected one.
pub fn fast_forward_select(fan: &ScenarioFan, k: usize) -> Result<ReductionResult> {
    let n = fan.len();
    if k == 0 || k > n {
        return Err(Error::KOutOfRange { k, n });
    }
    let original = distance_matrix(fan);
    // dist[j][i]: distance from unselected j to candidate i, min-updated
    let mut dist = original.clone();
    let mut in_pool = vec![true; n];
    let mut selected = Vec::with_capacity(k);
    let prob = &fan.probabilities;

    while selected.len() < k {
        if let Some(&last) = selected.last() {
            for j in 0..n {
                if !in_pool[j] {
                    continue;
                }
                let via_last = dist[j][last];
                let row = &mut dist[j];
                for i in 0..n {
                    if in_pool[i] && via_last < row[i] {
                        row[i] = via_last;
                    }
                }
            }
        }
        let mut best: Option<(usize, f64)> = None;
        for i in (0..n).filter(|&i| in_pool[i]) {
            let wd: f64 = (0..n)
                .filter(|&j| in_pool[j])
                .map(|j| prob[j] * dist[j][i])
                .sum();
            if best.is_none_or(|(_, b)| wd < b) {
                best = Some((i, wd));
            }
        }
        let (pick, _) = best.expect("pool is non-empty while fewer than k are selected");
        in_pool[pick] = false;
        selected.push(pick);
    }

    let mut assignment: Vec<usize> = (0..n).collect();
    let mut total_distance = 0.0;
    let mut probabilities: Vec<f64> = selected.iter().map(|&i| prob[i]).collect();
    for j in (0..n).filter(|&j| in_pool[j]) {
        let (slot, &target) = selected
            .iter()
            .enumerate()
            .min_by(|a, b| {
                original[j][*a.1]
                    .partial_cmp(&original[j][*b.1])
                    .expect("finite distances")
                    .then(a.1.cmp(b.1))
            })
            .expect("k >= 1");
        assignment[j] = target;
        probabilities[slot] += prob[j];
        total_distance += prob[j] * original[j][target];
    }

    Ok(ReductionResult {
        selected,
        probabilities,
        assignment,
        total_distance,
    })
}
