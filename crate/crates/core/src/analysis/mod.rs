//! Estimators and checks over trial outputs.

pub mod stats;

use std::collections::HashMap;
use std::f64::consts::FRAC_PI_2;

use rand::Rng;
use serde::Serialize;

use crate::engine::TrialResult;
use crate::error::{Error, Result};
use crate::interest::{cosine_similarity, sample_profile, InterestProfile};
use crate::trace::{ContactTrace, ProfileTable};

/// Mean with a normal-approximation confidence interval:
/// `mean ± z·s/√count`, where `s` is the sample standard deviation.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SummaryStats {
    pub mean: f64,
    pub ci_low: f64,
    pub ci_high: f64,
    pub std_error: f64,
    pub count: usize,
    pub delivery_rate: f64,
}

pub fn mean_ci(samples: &[f64], confidence: f64) -> Result<SummaryStats> {
    if samples.len() < 2 {
        return Err(Error::argument(format!(
            "confidence interval needs at least 2 samples, got {}",
            samples.len()
        )));
    }
    if !(confidence > 0.0 && confidence < 1.0) {
        return Err(Error::argument(format!("confidence must be in (0, 1), got {confidence}")));
    }
    let n = samples.len() as f64;
    let mean = samples.iter().sum::<f64>() / n;
    let var = samples.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    let std_error = (var / n).sqrt();
    let half = stats::normal_quantile(0.5 + confidence / 2.0) * std_error;
    Ok(SummaryStats {
        mean,
        ci_low: mean - half,
        ci_high: mean + half,
        std_error,
        count: samples.len(),
        delivery_rate: 1.0,
    })
}

/// Pearson correlation; errors if either series is constant.
pub fn pearson(x: &[f64], y: &[f64]) -> Result<f64> {
    if x.len() != y.len() {
        return Err(Error::argument("correlation series differ in length"));
    }
    if x.len() < 2 {
        return Err(Error::UndefinedCorrelation("need at least 2 points".into()));
    }
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        let (dx, dy) = (a - mx, b - my);
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    if sxx == 0.0 || syy == 0.0 {
        return Err(Error::UndefinedCorrelation("zero variance in one series".into()));
    }
    Ok((sxy / (sxx.sqrt() * syy.sqrt())).clamp(-1.0, 1.0))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CorrelationReport {
    pub pearson: f64,
    pub pair_count: usize,
}

/// Correlation between per-pair contact counts and per-pair cosine
/// similarity, over every unordered pair of nodes seen in the trace.
pub fn meeting_similarity_correlation(
    trace: &ContactTrace,
    profiles: &ProfileTable,
) -> Result<CorrelationReport> {
    let ids: Vec<&String> = trace.node_ids().iter().collect();
    let index: HashMap<&str, usize> = ids.iter().enumerate().map(|(i, id)| (id.as_str(), i)).collect();
    let resolved: Vec<&InterestProfile> = ids
        .iter()
        .map(|id| {
            profiles
                .get(id)
                .ok_or_else(|| Error::data(format!("trace node '{id}' has no profile")))
        })
        .collect::<Result<_>>()?;

    let mut counts: HashMap<(usize, usize), u64> = HashMap::new();
    for e in trace.events() {
        let (i, j) = (index[e.a.as_str()], index[e.b.as_str()]);
        *counts.entry((i.min(j), i.max(j))).or_default() += 1;
    }

    let size = ids.len();
    let mut x = Vec::with_capacity(size * size.saturating_sub(1) / 2);
    let mut y = Vec::with_capacity(x.capacity());
    for i in 0..size {
        for j in (i + 1)..size {
            x.push(counts.get(&(i, j)).copied().unwrap_or(0) as f64);
            y.push(cosine_similarity(resolved[i], resolved[j])?);
        }
    }
    Ok(CorrelationReport {
        pearson: pearson(&x, &y)?,
        pair_count: x.len(),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FitResult {
    pub slope: f64,
    pub intercept: f64,
    pub r_squared: f64,
}

/// Least squares of mean delay against `ln(1/δ)`.
///
/// A perfect fit (zero residual) has `r_squared = 1`, including a flat line
/// through constant data.
pub fn log_delta_fit(points: &[(f64, f64)]) -> Result<FitResult> {
    if points.len() < 3 {
        return Err(Error::argument(format!("fit needs at least 3 points, got {}", points.len())));
    }
    for &(d, y) in points {
        if !(d > 0.0 && d < 1.0) {
            return Err(Error::argument(format!("delta {d} outside (0, 1)")));
        }
        if !y.is_finite() {
            return Err(Error::argument(format!("non-finite delay {y}")));
        }
    }
    let xs: Vec<f64> = points.iter().map(|&(d, _)| (1.0 / d).ln()).collect();
    let ys: Vec<f64> = points.iter().map(|&(_, y)| y).collect();
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    if sxx <= 1e-12 * n {
        return Err(Error::Degenerate("deltas must be distinct".into()));
    }
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let ss_res: f64 = xs
        .iter()
        .zip(&ys)
        .map(|(x, y)| (y - intercept - slope * x).powi(2))
        .sum();
    let ss_tot: f64 = ys.iter().map(|y| (y - my).powi(2)).sum();
    let r_squared = if ss_tot == 0.0 {
        1.0
    } else {
        (1.0 - ss_res / ss_tot).clamp(0.0, 1.0)
    };
    Ok(FitResult {
        slope,
        intercept,
        r_squared,
    })
}

/// `max(mean) / min(mean) ≤ band` over a sweep.
pub fn boundedness_check(points: &[(f64, f64)], band: f64) -> Result<bool> {
    Ok(spread_ratio(points)? <= check_band(band)?)
}

/// `max(mean) / min(mean)` over a sweep.
pub fn spread_ratio(points: &[(f64, f64)]) -> Result<f64> {
    if points.len() < 2 {
        return Err(Error::argument("boundedness needs at least 2 points"));
    }
    let mut lo = f64::INFINITY;
    let mut hi: f64 = 0.0;
    for &(_, y) in points {
        if !(y > 0.0 && y.is_finite()) {
            return Err(Error::argument(format!("mean delay {y} must be positive")));
        }
        lo = lo.min(y);
        hi = hi.max(y);
    }
    Ok(hi / lo)
}

fn check_band(band: f64) -> Result<f64> {
    if !(band > 1.0) {
        return Err(Error::argument(format!("band must exceed 1, got {band}")));
    }
    Ok(band)
}

/// Smallest sample count accepted by [`forwarding_fraction`].
pub const MIN_FRACTION_SAMPLES: usize = 10_000;

/// Share of random profiles (drawn around `S = e1`) that are at least
/// `gamma`-similar to `D = e2` while staying within `3π/8` of `S`.
pub fn forwarding_fraction<R: Rng + ?Sized>(rng: &mut R, m: usize, gamma: f64, samples: usize) -> Result<f64> {
    if samples < MIN_FRACTION_SAMPLES {
        return Err(Error::argument(format!(
            "need at least {MIN_FRACTION_SAMPLES} samples, got {samples}"
        )));
    }
    let source = InterestProfile::basis(m, 0)?;
    let limit = 0.75 * FRAC_PI_2;
    let mut hits = 0usize;
    for _ in 0..samples {
        let r = sample_profile(rng, m, &source)?;
        let to_dest = r.coords()[1];
        let to_source = r.coords()[0].clamp(-1.0, 1.0).acos();
        if to_dest >= gamma && to_source <= limit {
            hits += 1;
        }
    }
    Ok(hits as f64 / samples as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DelayDifference {
    pub ttl: f64,
    pub mean_fm: f64,
    pub mean_ib: f64,
    /// `mean_fm − mean_ib`.
    pub difference: f64,
    /// Unpaired standard error of the difference; `None` if either side has
    /// fewer than two delivered trials.
    pub std_error: Option<f64>,
    pub delivered_fm: usize,
    pub delivered_ib: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DelayDifferenceReport {
    pub points: Vec<DelayDifference>,
    /// TTLs with no delivered trial on at least one side.
    pub omitted: Vec<f64>,
}

/// For each TTL, compares mean delays restricted to trials delivered within
/// that TTL. The two result lists must be paired trial by trial.
pub fn delay_difference_vs_ttl(
    results_fm: &[TrialResult],
    results_ib: &[TrialResult],
    ttl_grid: &[f64],
) -> Result<DelayDifferenceReport> {
    if results_fm.len() != results_ib.len() {
        return Err(Error::argument(format!(
            "paired result sets differ in length ({} vs {})",
            results_fm.len(),
            results_ib.len()
        )));
    }
    let mut points = Vec::new();
    let mut omitted = Vec::new();
    for &ttl in ttl_grid {
        let fm: Vec<f64> = results_fm.iter().filter_map(|r| r.delivered_within(ttl)).collect();
        let ib: Vec<f64> = results_ib.iter().filter_map(|r| r.delivered_within(ttl)).collect();
        if fm.is_empty() || ib.is_empty() {
            omitted.push(ttl);
            continue;
        }
        let (mean_fm, var_fm) = mean_var(&fm);
        let (mean_ib, var_ib) = mean_var(&ib);
        let std_error = match (var_fm, var_ib) {
            (Some(a), Some(b)) => Some((a / fm.len() as f64 + b / ib.len() as f64).sqrt()),
            _ => None,
        };
        points.push(DelayDifference {
            ttl,
            mean_fm,
            mean_ib,
            difference: mean_fm - mean_ib,
            std_error,
            delivered_fm: fm.len(),
            delivered_ib: ib.len(),
        });
    }
    Ok(DelayDifferenceReport { points, omitted })
}

fn mean_var(xs: &[f64]) -> (f64, Option<f64>) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = (xs.len() > 1).then(|| xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0));
    (mean, var)
}

/// One validator outcome, serialized as a report line.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CheckReport {
    pub check_name: String,
    pub passed: bool,
    pub statistic: f64,
    pub threshold: f64,
    pub details: serde_json::Value,
}
