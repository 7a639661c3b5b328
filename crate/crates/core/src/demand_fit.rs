//! Log-normal demand fitting from sales samples.

use std::collections::BTreeMap;
use std::io::Read;

use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, LogNormal};

use crate::error::{Error, Result};
use crate::instance::{LogNormalParams, Regime};

/// Demand observations for one product in one regime.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleSet {
    pub product_id: String,
    pub regime: Regime,
    pub observations: Vec<f64>,
}

impl SampleSet {
    pub fn new(product_id: impl Into<String>, regime: Regime, observations: Vec<f64>) -> Self {
        Self {
            product_id: product_id.into(),
            regime,
            observations,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FitResult {
    pub mu: f64,
    pub sigma: f64,
    pub ks_statistic: f64,
    pub ks_p_value: f64,
    pub n: usize,
}

impl FitResult {
    pub fn params(&self) -> LogNormalParams {
        LogNormalParams::new(self.mu, self.sigma)
    }
}

/// A demand estimate re-dated by the comment lag. `period` may be negative
/// when the lag reaches before the first observed period.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DatedEstimate {
    pub period: i64,
    pub demand: f64,
}

/// Converts comment counts into demand estimates: each count is divided by
/// the share of buyers who comment, rounded, and moved `lag` periods earlier.
pub fn scale_comments(counts: &[f64], comment_rate: f64, lag: usize) -> Result<Vec<DatedEstimate>> {
    if counts.is_empty() {
        return Err(Error::Input("comment series is empty".into()));
    }
    if !(comment_rate > 0.0 && comment_rate <= 1.0) {
        return Err(Error::Input(format!("comment rate {comment_rate} must lie in (0, 1]")));
    }
    Ok(counts
        .iter()
        .enumerate()
        .map(|(i, &c)| DatedEstimate {
            period: i as i64 - lag as i64,
            demand: (c / comment_rate).round(),
        })
        .collect())
}

/// Closed-form maximum likelihood fit (population variance of the logs).
/// The KS fields are filled by [`fit_and_test`]; here they are NaN-free zeros.
pub fn fit_lognormal_mle(samples: &SampleSet) -> Result<FitResult> {
    let obs = &samples.observations;
    if obs.len() < 2 {
        return Err(Error::Input(format!(
            "product {} ({}) needs at least 2 observations, got {}",
            samples.product_id,
            samples.regime,
            obs.len()
        )));
    }
    if let Some((index, &value)) = obs.iter().enumerate().find(|(_, &x)| !(x > 0.0) || !x.is_finite()) {
        return Err(Error::NonPositiveObservation { index, value });
    }
    let n = obs.len() as f64;
    let logs: Vec<f64> = obs.iter().map(|x| x.ln()).collect();
    let mu = logs.iter().sum::<f64>() / n;
    let var = logs.iter().map(|l| (l - mu).powi(2)).sum::<f64>() / n;
    let sigma = var.sqrt();
    if !(sigma > 1e-12) {
        return Err(Error::Degenerate(format!(
            "product {} ({}) has zero spread on log scale",
            samples.product_id, samples.regime
        )));
    }
    Ok(FitResult {
        mu,
        sigma,
        ks_statistic: 0.0,
        ks_p_value: 1.0,
        n: obs.len(),
    })
}

/// Survival function of the Kolmogorov distribution, `P(K > lambda)`.
pub fn kolmogorov_sf(lambda: f64) -> f64 {
    if lambda <= 0.0 {
        return 1.0;
    }
    if lambda < 1.0 {
        // Small-argument series for the CDF converges much faster here.
        let x = std::f64::consts::PI.powi(2) / (8.0 * lambda * lambda);
        let s: f64 = (1..=20)
            .map(|k| {
                let m = (2 * k - 1) as f64;
                (-m * m * x).exp()
            })
            .sum();
        let cdf = (2.0 * std::f64::consts::PI).sqrt() / lambda * s;
        return (1.0 - cdf).clamp(0.0, 1.0);
    }
    let mut s = 0.0;
    for k in 1..=100 {
        let kf = k as f64;
        let term = (-2.0 * kf * kf * lambda * lambda).exp();
        s += if k % 2 == 1 { term } else { -term };
        if term < 1e-17 {
            break;
        }
    }
    (2.0 * s).clamp(0.0, 1.0)
}

/// One-sample KS statistic of `observations` against a CDF.
pub fn ks_statistic(observations: &[f64], cdf: impl Fn(f64) -> f64) -> f64 {
    let mut xs = observations.to_vec();
    xs.sort_by(f64::total_cmp);
    let n = xs.len() as f64;
    xs.iter()
        .enumerate()
        .map(|(i, &x)| {
            let f = cdf(x);
            (f - i as f64 / n).max((i + 1) as f64 / n - f)
        })
        .fold(0.0, f64::max)
}

/// Asymptotic KS p-value of the observations against log-normal(mu, sigma).
/// Returns `(statistic, p_value)`.
pub fn ks_test(samples: &SampleSet, fit: &FitResult) -> Result<(f64, f64)> {
    if samples.observations.is_empty() {
        return Err(Error::Input("no observations to test".into()));
    }
    let dist = LogNormal::new(fit.mu, fit.sigma)
        .map_err(|e| Error::Input(format!("invalid log-normal ({}, {}): {e}", fit.mu, fit.sigma)))?;
    let d = ks_statistic(&samples.observations, |x| if x <= 0.0 { 0.0 } else { dist.cdf(x) });
    let p = kolmogorov_sf((samples.observations.len() as f64).sqrt() * d);
    Ok((d, p))
}

/// Fits and tests in one go.
pub fn fit_and_test(samples: &SampleSet) -> Result<FitResult> {
    let mut fit = fit_lognormal_mle(samples)?;
    let (d, p) = ks_test(samples, &fit)?;
    fit.ks_statistic = d;
    fit.ks_p_value = p;
    Ok(fit)
}

#[derive(Debug, Deserialize)]
struct SampleRow {
    product_id: String,
    #[allow(dead_code)]
    period_start_date: String,
    regime: String,
    observation: f64,
}

/// Reads `product_id,period_start_date,regime,observation` rows and groups
/// them by product and regime, keeping file order within a group.
pub fn read_samples_csv<R: Read>(r: R) -> Result<Vec<SampleSet>> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(r);
    let mut groups: BTreeMap<(String, Regime), Vec<f64>> = BTreeMap::new();
    for (i, row) in rdr.deserialize::<SampleRow>().enumerate() {
        let row = row?;
        let regime: Regime = row
            .regime
            .parse()
            .map_err(|_| Error::Input(format!("row {}: unknown regime '{}'", i + 1, row.regime)))?;
        groups.entry((row.product_id, regime)).or_default().push(row.observation);
    }
    if groups.is_empty() {
        return Err(Error::Input("sample file has no rows".into()));
    }
    Ok(groups
        .into_iter()
        .map(|((product_id, regime), observations)| SampleSet {
            product_id,
            regime,
            observations,
        })
        .collect())
}

/// Fits every sample set after converting comment counts to demand.
/// Output is keyed by product, then by regime name.
pub fn fit_all(
    sets: &[SampleSet],
    comment_rate: f64,
    lag: usize,
) -> Result<BTreeMap<String, BTreeMap<Regime, FitResult>>> {
    let mut out: BTreeMap<String, BTreeMap<Regime, FitResult>> = BTreeMap::new();
    for s in sets {
        let scaled: Vec<f64> = scale_comments(&s.observations, comment_rate, lag)?
            .into_iter()
            .map(|e| e.demand)
            .collect();
        let fit = fit_and_test(&SampleSet::new(s.product_id.clone(), s.regime, scaled))?;
        out.entry(s.product_id.clone()).or_default().insert(s.regime, fit);
    }
    Ok(out)
}
