//! The acceptance checks, each returning a [`CheckReport`].
//!
//! Every check derives its seeds from one master seed, so a run is fully
//! reproducible. Significance for distribution tests is 0.001.

use std::f64::consts::FRAC_PI_2;
use std::time::{Duration, Instant};

use rayon::prelude::*;
use serde_json::json;

use crate::analysis::stats::{
    chi_square_critical, chi_square_statistic, ks_critical_value, ks_statistic,
};
use crate::analysis::{
    boundedness_check, delay_difference_vs_ttl, forwarding_fraction, log_delta_fit, mean_ci,
    meeting_similarity_correlation, spread_ratio, CheckReport,
};
use crate::engine::{
    rng_from_seed, run_experiment, simulate, sub_seed, ExperimentConfig, ExperimentSummary, Message,
    Replayer, TrialResult, CONFIDENCE,
};
use crate::error::Result;
use crate::interest::{sample_profile, InterestProfile, Population, Scenario};
use crate::meeting::{sample_min_meeting, RateMatrix, RateModel};
use crate::routing::{Eligibility, ProtocolSpec};
use crate::trace::{
    filter_short_contacts, generate_synthetic_trace, parse_trace, ProfileTable, DEFAULT_MIN_CONTACT,
};

/// Significance used by the KS and chi-square checks.
pub const ALPHA: f64 = 0.001;
/// Spread allowed by the boundedness checks.
pub const BAND: f64 = 1.5;

fn seed_for(master: u64, check: u64, part: u64) -> u64 {
    sub_seed(sub_seed(master, check), part)
}

fn ib_gamma(m: usize) -> f64 {
    0.29 / (m - 1) as f64
}

fn ib(m: usize) -> ProtocolSpec {
    ProtocolSpec::InterestBased {
        gamma: ib_gamma(m),
        fallback_time: None,
    }
}

/// Mean delivery time and standard error of one experiment.
fn run_point(config: &ExperimentConfig) -> Result<(f64, f64, ExperimentSummary)> {
    let out = run_experiment(config)?;
    let s = out.summary;
    Ok((s.mean_delay.unwrap_or(f64::NAN), s.std_error.unwrap_or(f64::NAN), s))
}

fn point_json(x: f64, mean: f64, se: f64) -> serde_json::Value {
    json!({"x": x, "mean": mean, "std_error": se})
}

/// Exact mean of two-copy first-meeting forwarding with every pair meeting
/// at rate `lambda` and `n` relays.
pub fn oblivious_fm_exact(n: usize, lambda: f64) -> f64 {
    let n = n as f64;
    1.0 / ((n + 1.0) * lambda) + n / (n + 1.0) / (2.0 * lambda)
}

fn oblivious_config(n: usize, protocol: ProtocolSpec, trials: usize, seed: u64) -> ExperimentConfig {
    let mut c = ExperimentConfig::new(n, 4, RateModel::social_oblivious(1.0).expect("valid"), protocol);
    c.trials = trials;
    c.master_seed = seed;
    c
}

fn interest_config(
    n: usize,
    m: usize,
    delta: f64,
    scenario: Scenario,
    protocol: ProtocolSpec,
    trials: usize,
    seed: u64,
) -> Result<ExperimentConfig> {
    let mut c = ExperimentConfig::new(n, m, RateModel::interest_based(1.0, delta)?, protocol);
    c.scenario = scenario;
    c.trials = trials;
    c.master_seed = seed;
    Ok(c)
}

/// Check 1: oblivious FM mean against the exact finite-n value.
pub fn oblivious_fm_mean(master: u64) -> Result<CheckReport> {
    const N: usize = 1000;
    const TRIALS: usize = 10_000;
    let started = Instant::now();
    let (mean, se, _) = run_point(&oblivious_config(N, ProtocolSpec::FirstMeeting, TRIALS, seed_for(master, 1, 0)))?;
    let elapsed = started.elapsed();
    let exact = oblivious_fm_exact(N, 1.0);
    let err = (mean - exact).abs();
    let passed = err <= 0.02 && err <= 3.0 * se && elapsed < Duration::from_secs(30);
    Ok(CheckReport {
        check_name: "oblivious_fm_mean".into(),
        passed,
        statistic: mean,
        threshold: exact,
        details: json!({
            "abs_error": err, "tolerance": 0.02, "std_error": se, "within_3_se": err <= 3.0 * se,
            "runtime_s": elapsed.as_secs_f64(), "runtime_limit_s": 30.0, "n": N, "trials": TRIALS,
        }),
    })
}

/// Check 2: oblivious IB matches the same value and FM.
pub fn oblivious_ib_mean(master: u64) -> Result<CheckReport> {
    const N: usize = 1000;
    const TRIALS: usize = 10_000;
    let seed = seed_for(master, 2, 0);
    let (ib_mean, ib_se, _) = run_point(&oblivious_config(N, ib(4), TRIALS, seed))?;
    let (fm_mean, _, _) = run_point(&oblivious_config(N, ProtocolSpec::FirstMeeting, TRIALS, seed))?;
    let exact = oblivious_fm_exact(N, 1.0);
    let err = (ib_mean - exact).abs();
    let gap = (fm_mean - ib_mean).abs();
    let passed = err <= 0.02 && err <= 3.0 * ib_se && gap < 0.03;
    Ok(CheckReport {
        check_name: "oblivious_ib_mean".into(),
        passed,
        statistic: ib_mean,
        threshold: exact,
        details: json!({
            "abs_error": err, "tolerance": 0.02, "std_error": ib_se, "fm_mean": fm_mean,
            "fm_ib_gap": gap, "gap_limit": 0.03, "gamma": ib_gamma(4),
        }),
    })
}

/// Check 3: competing clocks and the mean-rate normalization.
pub fn clock_distributions(master: u64) -> Result<CheckReport> {
    const DRAWS: usize = 1_000_000;
    let rates = [1.0, 2.0, 3.0, 4.0];
    let total: f64 = rates.iter().sum();
    let mut rng = rng_from_seed(seed_for(master, 3, 0));
    let mut times = Vec::with_capacity(DRAWS);
    let mut counts = [0u64; 4];
    for _ in 0..DRAWS {
        let (t, i) = sample_min_meeting(&mut rng, &rates)?;
        times.push(t);
        counts[i] += 1;
    }
    let ks = ks_statistic(&times, |x| 1.0 - (-total * x).exp())?;
    let ks_crit = ks_critical_value(ALPHA, DRAWS);
    let probs: Vec<f64> = rates.iter().map(|r| r / total).collect();
    let (chi, df) = chi_square_statistic(&counts, &probs)?;
    let chi_crit = chi_square_critical(ALPHA, df);

    // Mean rate from a source to a relay drawn at uniform angle.
    let (lambda, delta, m) = (1.0, 0.01, 4);
    let model = RateModel::interest_based(lambda, delta)?;
    let source = InterestProfile::basis(m, 0)?;
    let mut rng = rng_from_seed(seed_for(master, 3, 1));
    let mut sum = 0.0;
    for _ in 0..DRAWS {
        let r = sample_profile(&mut rng, m, &source)?;
        sum += crate::meeting::pair_rate(&model, &source, &r)?;
    }
    let mean_rate = sum / DRAWS as f64;
    let rel = (mean_rate - lambda).abs() / lambda;

    let passed = ks < ks_crit && chi < chi_crit && rel < 0.01;
    Ok(CheckReport {
        check_name: "clock_distributions".into(),
        passed,
        statistic: ks,
        threshold: ks_crit,
        details: json!({
            "ks": ks, "ks_critical": ks_crit, "chi_square": chi, "chi_square_critical": chi_crit,
            "index_counts": counts, "mean_rate": mean_rate, "relative_error": rel, "draws": DRAWS,
        }),
    })
}

/// Check 4: FM delay grows with log(1/delta) in the worst-case geometry.
pub fn fm_log_delta_growth(master: u64) -> Result<CheckReport> {
    const N: usize = 2000;
    const TRIALS: usize = 5000;
    let deltas = [0.1, 0.01, 0.001];
    let started = Instant::now();
    let mut points = Vec::new();
    let mut rows = Vec::new();
    for (i, &d) in deltas.iter().enumerate() {
        let c = interest_config(N, 4, d, Scenario::WorstCase, ProtocolSpec::FirstMeeting, TRIALS, seed_for(master, 4, i as u64))?;
        let (mean, se, _) = run_point(&c)?;
        points.push((d, mean));
        rows.push(point_json(d, mean, se));
    }
    let elapsed = started.elapsed();
    let increasing = points.windows(2).all(|w| w[1].1 > w[0].1);
    let fit = log_delta_fit(&points)?;
    let passed = increasing && fit.slope > 0.0 && fit.r_squared > 0.9 && elapsed < Duration::from_secs(300);
    Ok(CheckReport {
        check_name: "fm_log_delta_growth".into(),
        passed,
        statistic: fit.r_squared,
        threshold: 0.9,
        details: json!({
            "points": rows, "strictly_increasing": increasing, "fit": fit,
            "runtime_s": elapsed.as_secs_f64(), "runtime_limit_s": 300.0,
        }),
    })
}

/// Sweep over n with delta = 1/n.
fn n_sweep(master: u64, check: u64, protocol: ProtocolSpec, ns: &[usize], trials: usize) -> Result<Vec<(f64, f64, f64)>> {
    let mut out = Vec::new();
    for (i, &n) in ns.iter().enumerate() {
        let c = interest_config(n, 4, 1.0 / n as f64, Scenario::WorstCase, protocol, trials, seed_for(master, check, i as u64))?;
        let (mean, se, _) = run_point(&c)?;
        out.push((n as f64, mean, se));
    }
    Ok(out)
}

fn xy(points: &[(f64, f64, f64)]) -> Vec<(f64, f64)> {
    points.iter().map(|p| (p.0, p.1)).collect()
}

fn rows(points: &[(f64, f64, f64)]) -> Vec<serde_json::Value> {
    points.iter().map(|p| point_json(p.0, p.1, p.2)).collect()
}

/// Check 5: IB stays within the band over n; FM does not.
pub fn ib_bounded_in_n(master: u64) -> Result<CheckReport> {
    let ns = [250, 500, 1000, 2000];
    let ib_points = n_sweep(master, 5, ib(4), &ns, 5000)?;
    let fm_points = n_sweep(master, 5, ProtocolSpec::FirstMeeting, &ns, 5000)?;
    let ib_ok = boundedness_check(&xy(&ib_points), BAND)?;
    let fm_bounded = boundedness_check(&xy(&fm_points), BAND)?;
    let ib_ratio = spread_ratio(&xy(&ib_points))?;
    Ok(CheckReport {
        check_name: "ib_bounded_in_n".into(),
        passed: ib_ok && !fm_bounded,
        statistic: ib_ratio,
        threshold: BAND,
        details: json!({
            "ib_points": rows(&ib_points), "ib_spread": ib_ratio, "ib_within_band": ib_ok,
            "fm_points": rows(&fm_points), "fm_spread": spread_ratio(&xy(&fm_points))?,
            "fm_within_band": fm_bounded, "gamma": ib_gamma(4),
        }),
    })
}

/// Exact mean of direct delivery when the source-destination angle is
/// uniform on `[0, π/2]`, by midpoint quadrature.
pub fn direct_uniform_angle_exact(lambda: f64, delta: f64) -> f64 {
    let k = FRAC_PI_2 * (lambda - delta);
    let steps = 200_000;
    let h = FRAC_PI_2 / steps as f64;
    let sum: f64 = (0..steps)
        .map(|i| 1.0 / (k * ((i as f64 + 0.5) * h).cos() + delta))
        .sum();
    sum * h / FRAC_PI_2
}

/// Check 6: FM bounded over delta with random endpoints; direct delivery
/// grows like log(1/delta).
pub fn uniform_angle_delta_sweep(master: u64) -> Result<CheckReport> {
    const N: usize = 1000;
    let deltas = [0.1, 0.01, 0.001];
    let mut fm = Vec::new();
    let mut direct = Vec::new();
    for (i, &d) in deltas.iter().enumerate() {
        let seed = seed_for(master, 6, i as u64);
        let c = interest_config(N, 4, d, Scenario::UniformAngle, ProtocolSpec::FirstMeeting, 5000, seed)?;
        let (mean, se, _) = run_point(&c)?;
        fm.push((d, mean, se));
        let c = interest_config(N, 4, d, Scenario::UniformAngle, ProtocolSpec::Direct, 20_000, seed)?;
        let (mean, se, _) = run_point(&c)?;
        direct.push((d, mean, se));
    }
    let fm_ok = boundedness_check(&xy(&fm), BAND)?;
    let fit = log_delta_fit(&xy(&direct))?;
    let direct_ok = fit.slope > 0.0 && fit.r_squared > 0.9;
    let exact: Vec<f64> = deltas.iter().map(|&d| direct_uniform_angle_exact(1.0, d)).collect();
    Ok(CheckReport {
        check_name: "uniform_angle_delta_sweep".into(),
        passed: fm_ok && direct_ok,
        statistic: spread_ratio(&xy(&fm))?,
        threshold: BAND,
        details: json!({
            "fm_points": rows(&fm), "fm_within_band": fm_ok,
            "direct_points": rows(&direct), "direct_fit": fit, "direct_exact_means": exact,
        }),
    })
}

/// Check 7: FM vs IB on synthetic traces, paired by message.
pub fn trace_fm_vs_ib(master: u64) -> Result<CheckReport> {
    trace_comparison(master, 800, 4000)
}

/// FM vs IB replay on one interest-driven and one oblivious synthetic trace
/// of `nodes` nodes, with `messages` random messages each.
pub fn trace_comparison(master: u64, nodes: usize, messages: usize) -> Result<CheckReport> {
    const TTL_POINTS: usize = 20;
    const GAMMA: f64 = 0.9;
    let (m, lambda, delta) = (4, 1.0, 0.01);
    let mut rng = rng_from_seed(seed_for(master, 7, 0));
    let anchor = InterestProfile::basis(m, 0)?;
    let profiles: Vec<InterestProfile> = (0..nodes)
        .map(|_| sample_profile(&mut rng, m, &anchor))
        .collect::<Result<_>>()?;
    let table = ProfileTable::from_indexed(&profiles)?;

    let ib_rates = RateMatrix::from_profiles(&RateModel::interest_based(lambda, delta)?, &profiles)?;
    let rates: Vec<f64> = ib_rates.pairs().map(|(_, _, r)| r).collect();
    let mu = rates.iter().sum::<f64>() / rates.len() as f64;
    let var = rates.iter().map(|r| (r - mu).powi(2)).sum::<f64>() / rates.len() as f64;
    // Poisson counts over a horizon H give corr(count, rate)² = Hσ² / (Hσ² + μ).
    let target: f64 = 0.6;
    let horizon = target.powi(2) / (1.0 - target.powi(2)) * mu / var;
    let ttl_max = horizon / 2.0;
    let obl_rates = RateMatrix::from_profiles(&RateModel::social_oblivious(mu)?, &profiles)?;

    let protocol_ib = ProtocolSpec::InterestBased {
        gamma: GAMMA,
        fallback_time: None,
    };
    let grid: Vec<f64> = (1..=TTL_POINTS).map(|i| ttl_max * i as f64 / TTL_POINTS as f64).collect();

    let mut sides = Vec::new();
    for (part, rate_table) in [(1u64, &ib_rates), (2, &obl_rates)] {
        let mut rng = rng_from_seed(seed_for(master, 7, part));
        let trace = generate_synthetic_trace(&mut rng, rate_table, horizon, 0.0)?;
        let correlation = meeting_similarity_correlation(&trace, &table)?;
        let replayer = Replayer::new(&trace, &table)?;
        let messages: Vec<Message> = replayer.sample_messages(&mut rng, messages, (0.0, horizon - ttl_max))?;
        let fm = replayer.replay_all(&ProtocolSpec::FirstMeeting, &messages, Some(ttl_max))?;
        let ibr = replayer.replay_all(&protocol_ib, &messages, Some(ttl_max))?;
        let report = delay_difference_vs_ttl(&fm, &ibr, &grid)?;
        sides.push((trace.len(), correlation, fm, report));
    }

    let (ib_events, ib_corr, ib_fm, ib_report) = &sides[0];
    let mut delays: Vec<f64> = ib_fm.iter().filter_map(|r| r.delivery_time).collect();
    delays.sort_by(f64::total_cmp);
    let median = delays.get(delays.len() / 2).copied().unwrap_or(f64::NAN);
    let checked: Vec<_> = ib_report.points.iter().filter(|p| p.ttl >= median).collect();
    let interest_ok = !checked.is_empty() && checked.iter().all(|p| p.difference >= 0.0);
    let min_diff = checked.iter().map(|p| p.difference).fold(f64::INFINITY, f64::min);

    let (obl_events, obl_corr, _, obl_report) = &sides[1];
    let oblivious_ok = obl_report.omitted.is_empty()
        && obl_report
            .points
            .iter()
            .all(|p| p.std_error.is_some_and(|se| p.difference.abs() < 2.0 * se));

    Ok(CheckReport {
        check_name: "trace_fm_vs_ib".into(),
        passed: interest_ok && oblivious_ok,
        statistic: min_diff,
        threshold: 0.0,
        details: json!({
            "horizon": horizon, "ttl_max": ttl_max, "gamma": GAMMA, "nodes": nodes, "messages": messages,
            "interest_trace": {
                "events": ib_events, "correlation": ib_corr.pearson, "median_fm_delay": median,
                "nonnegative_above_median": interest_ok, "points": ib_report.points, "omitted": ib_report.omitted,
            },
            "oblivious_trace": {
                "events": obl_events, "correlation": obl_corr.pearson,
                "within_two_se": oblivious_ok, "points": obl_report.points, "omitted": obl_report.omitted,
            },
        }),
    })
}

/// Runs an experiment trial by trial, checking copy conservation and the hop
/// bound on every final state. Returns results and the violation count.
pub fn audited_trials(config: &ExperimentConfig) -> Result<(Vec<TrialResult>, usize)> {
    config.validate()?;
    let copies = config.protocol.copies();
    let max_hops = config.protocol.max_hops();
    let out = (0..config.trials as u64)
        .into_par_iter()
        .map(|i| {
            let seed = sub_seed(config.master_seed, i);
            let mut rng = rng_from_seed(seed);
            let pop = Population::sample(&mut rng, config.scenario, config.m, config.n)?;
            let state = simulate(&pop, &config.rate_model, &config.protocol, config.ttl, config.engine, &mut rng, None)?;
            let ok = state.total_copies() == copies && state.holders().values().all(|h| h.depth <= max_hops);
            Ok((TrialResult::from_state(&state, seed), ok))
        })
        .collect::<Result<Vec<_>>>()?;
    let violations = out.iter().filter(|(_, ok)| !ok).count();
    Ok((out.into_iter().map(|(r, _)| r).collect(), violations))
}

fn audited_mean(config: &ExperimentConfig) -> Result<(f64, f64, usize)> {
    let (results, violations) = audited_trials(config)?;
    let s = ExperimentSummary::from_results(&results);
    Ok((s.mean_delay.unwrap_or(f64::NAN), s.std_error.unwrap_or(f64::NAN), violations))
}

/// Check 8: multi-copy extensions.
pub fn multi_copy_extensions(master: u64) -> Result<CheckReport> {
    const TRIALS: usize = 5000;
    let fm_star = ProtocolSpec::FmStar { copies: 4, max_hops: 2 };
    let mut star = Vec::new();
    let mut violations = 0;
    for (i, &d) in [0.1, 0.01, 0.001].iter().enumerate() {
        let c = interest_config(1000, 4, d, Scenario::WorstCase, fm_star, TRIALS, seed_for(master, 8, i as u64))?;
        let (mean, se, v) = audited_mean(&c)?;
        violations += v;
        star.push((d, mean, se));
    }
    let star_fit = log_delta_fit(&xy(&star))?;

    let mod_ib = ProtocolSpec::ModIb { copies: 4 };
    let mut modib = Vec::new();
    for (i, &n) in [250usize, 1000, 2000].iter().enumerate() {
        let c = interest_config(n, 4, 1.0 / n as f64, Scenario::WorstCase, mod_ib, TRIALS, seed_for(master, 8, 10 + i as u64))?;
        let (mean, se, v) = audited_mean(&c)?;
        violations += v;
        modib.push((n as f64, mean, se));
    }
    let modib_ok = boundedness_check(&xy(&modib), BAND)?;
    let passed = star_fit.slope > 0.0 && modib_ok && violations == 0;
    Ok(CheckReport {
        check_name: "multi_copy_extensions".into(),
        passed,
        statistic: spread_ratio(&xy(&modib))?,
        threshold: BAND,
        details: json!({
            "fm_star_points": rows(&star), "fm_star_fit": star_fit, "fm_star_slope_positive": star_fit.slope > 0.0,
            "mod_ib_points": rows(&modib), "mod_ib_within_band": modib_ok, "invariant_violations": violations,
        }),
    })
}

/// Check 9: protocols that reduce to FM replay identically.
pub fn protocol_equivalence(master: u64) -> Result<CheckReport> {
    const TRIALS: u64 = 1000;
    let base = |p| -> Result<ExperimentConfig> {
        interest_config(200, 4, 0.01, Scenario::WorstCase, p, 1, seed_for(master, 9, 0))
    };
    let fm = base(ProtocolSpec::FirstMeeting)?;
    let ib0 = base(ProtocolSpec::InterestBased { gamma: 0.0, fallback_time: None })?;
    let spray = base(ProtocolSpec::Spray {
        copies: 2,
        max_hops: 2,
        eligibility: Eligibility::FirstMeeting,
        gamma: 0.0,
    })?;
    let mismatches: usize = (0..TRIALS)
        .into_par_iter()
        .map(|i| -> Result<usize> {
            let seed = sub_seed(fm.master_seed, i);
            let a = crate::engine::run_trial_logged(&fm, seed)?;
            let b = crate::engine::run_trial_logged(&ib0, seed)?;
            let c = crate::engine::run_trial_logged(&spray, seed)?;
            Ok(usize::from(a != b) + usize::from(a != c))
        })
        .collect::<Result<Vec<_>>>()?
        .into_iter()
        .sum();
    Ok(CheckReport {
        check_name: "protocol_equivalence".into(),
        passed: mismatches == 0,
        statistic: mismatches as f64,
        threshold: 0.0,
        details: json!({"trials": TRIALS, "compared": ["ib(0)", "spray(2, first_meeting, 2)"], "mismatched_logs": mismatches}),
    })
}

/// Check 10: share of relays eligible for IB forwarding.
pub fn forwarding_fraction_bound(master: u64) -> Result<CheckReport> {
    const SAMPLES: usize = 1_000_000;
    let m = 4;
    let mut rng = rng_from_seed(seed_for(master, 10, 0));
    let f = forwarding_fraction(&mut rng, m, ib_gamma(m), SAMPLES)?;
    let se = (f * (1.0 - f) / SAMPLES as f64).sqrt();
    let bound = 1.0 / (4.0 * (m - 1) as f64);
    Ok(CheckReport {
        check_name: "forwarding_fraction_bound".into(),
        passed: f >= bound - 3.0 * se,
        statistic: f,
        threshold: bound - 3.0 * se,
        details: json!({"fraction": f, "std_error": se, "lower_bound": bound, "samples": SAMPLES}),
    })
}

/// Fixture for the contact filter: ids name the expected outcome.
pub const FILTER_FIXTURE: &str = "\
a,b,start,end
keep1,x,0,300
drop1,x,10,309.5
keep2,x,20,320.5
drop2,x,30,30
keep3,x,40,4000
drop3,x,50,349.999
";

/// Check 11: trace replay agrees with the rate-based engine, and the
/// contact filter drops exactly the short contacts.
pub fn replay_pipeline(master: u64) -> Result<CheckReport> {
    const HORIZON: f64 = 20_000.0;
    const MESSAGES: usize = 5000;
    const TRIALS: usize = 10_000;
    // Source, destination and two relays.
    let rates = RateMatrix::from_rows(vec![vec![1.0; 4]; 4])?;
    let mut rng = rng_from_seed(seed_for(master, 11, 0));
    let trace = generate_synthetic_trace(&mut rng, &rates, HORIZON, 0.0)?;
    let anchor = InterestProfile::basis(2, 0)?;
    let profiles: Vec<InterestProfile> = (0..4).map(|_| sample_profile(&mut rng, 2, &anchor)).collect::<Result<_>>()?;
    let table = ProfileTable::from_indexed(&profiles)?;
    let replayer = Replayer::new(&trace, &table)?;
    let ttl = 100.0;
    let messages: Vec<Message> = (0..MESSAGES)
        .map(|i| Message {
            source: "0".into(),
            destination: "1".into(),
            start_time: (HORIZON - ttl) * i as f64 / MESSAGES as f64,
        })
        .collect();
    let replayed = replayer.replay_all(&ProtocolSpec::FirstMeeting, &messages, Some(ttl))?;
    let delays: Vec<f64> = replayed.iter().filter_map(|r| r.delivery_time).collect();
    let replay_stats = mean_ci(&delays, CONFIDENCE)?;

    let engine = run_experiment(&oblivious_config(2, ProtocolSpec::FirstMeeting, TRIALS, seed_for(master, 11, 1)))?;
    let engine_stats = mean_ci(
        &engine.results.iter().filter_map(|r| r.delivery_time).collect::<Vec<_>>(),
        CONFIDENCE,
    )?;
    let overlap = replay_stats.ci_low <= engine_stats.ci_high && engine_stats.ci_low <= replay_stats.ci_high;
    let exact = oblivious_fm_exact(2, 1.0);
    let engine_covers_exact = engine_stats.ci_low <= exact && exact <= engine_stats.ci_high;

    let fixture = parse_trace(FILTER_FIXTURE.as_bytes())?;
    let filtered = filter_short_contacts(&fixture, DEFAULT_MIN_CONTACT)?;
    let mut kept: Vec<&str> = filtered.events().iter().map(|e| e.a.as_str()).collect();
    kept.sort_unstable();
    let filter_ok = kept == ["keep1", "keep2", "keep3"];

    Ok(CheckReport {
        check_name: "replay_pipeline".into(),
        passed: overlap && filter_ok && replayed.len() == delays.len(),
        statistic: replay_stats.mean,
        threshold: exact,
        details: json!({
            "replay": replay_stats, "engine": engine_stats, "ci_overlap": overlap,
            "engine_ci_covers_exact": engine_covers_exact, "trace_events": trace.len(),
            "filter_kept": kept, "filter_ok": filter_ok,
        }),
    })
}

/// A numbered acceptance check.
pub struct Check {
    pub number: u32,
    pub name: &'static str,
    pub run: fn(u64) -> Result<CheckReport>,
}

pub const CHECKS: [Check; 11] = [
    Check { number: 1, name: "oblivious_fm_mean", run: oblivious_fm_mean },
    Check { number: 2, name: "oblivious_ib_mean", run: oblivious_ib_mean },
    Check { number: 3, name: "clock_distributions", run: clock_distributions },
    Check { number: 4, name: "fm_log_delta_growth", run: fm_log_delta_growth },
    Check { number: 5, name: "ib_bounded_in_n", run: ib_bounded_in_n },
    Check { number: 6, name: "uniform_angle_delta_sweep", run: uniform_angle_delta_sweep },
    Check { number: 7, name: "trace_fm_vs_ib", run: trace_fm_vs_ib },
    Check { number: 8, name: "multi_copy_extensions", run: multi_copy_extensions },
    Check { number: 9, name: "protocol_equivalence", run: protocol_equivalence },
    Check { number: 10, name: "forwarding_fraction_bound", run: forwarding_fraction_bound },
    Check { number: 11, name: "replay_pipeline", run: replay_pipeline },
];

/// Runs every check in order.
pub fn run_all(master: u64) -> Result<Vec<CheckReport>> {
    CHECKS.iter().map(|c| (c.run)(master)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exact_values() {
        assert!((oblivious_fm_exact(1000, 1.0) - 0.5005).abs() < 1e-4);
        assert!((oblivious_fm_exact(2, 1.0) - 2.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn direct_quadrature_grows() {
        let a = direct_uniform_angle_exact(1.0, 0.1);
        let b = direct_uniform_angle_exact(1.0, 0.01);
        let c = direct_uniform_angle_exact(1.0, 0.001);
        assert!(a < b && b < c);
        // Each decade adds about (2/π)·ln(10)/k.
        let step = 2.0 / std::f64::consts::PI * 10f64.ln() / (FRAC_PI_2 * 0.999);
        assert!(((c - b) - step).abs() < 0.05, "{}", c - b);
    }

    #[test]
    fn fixture_filter() {
        let t = parse_trace(FILTER_FIXTURE.as_bytes()).unwrap();
        let f = filter_short_contacts(&t, DEFAULT_MIN_CONTACT).unwrap();
        assert_eq!(f.len(), 3);
    }
}
