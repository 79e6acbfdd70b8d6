//! Simulator outputs against independently derived values.

use std::f64::consts::{FRAC_PI_2, PI};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use psn_core::analysis::stats::{
    chi_square_critical, chi_square_statistic, ks_critical_value, ks_statistic, ks_two_sample,
    ks_two_sample_critical_value, poisson_dispersion,
};
use psn_core::analysis::{mean_ci, meeting_similarity_correlation, pearson};
use psn_core::engine::{rng_from_seed, simulate, EngineMode, Replayer, Message};
use psn_core::interest::{angle_between, sample_profile_at_angle};
use psn_core::meeting::pair_rate;
use psn_core::trace::{generate_synthetic_trace, ProfileTable};
use psn_core::*;

const ALPHA: f64 = 0.001;

fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn uniform_angle_cdf(x: f64) -> f64 {
    (x / FRAC_PI_2).clamp(0.0, 1.0)
}

#[test]
fn angle_to_anchor_is_uniform() {
    let mut r = rng(1);
    let draws = 100_000;
    let anchors = [
        InterestProfile::basis(4, 0).unwrap(),
        // Axis anchors other than e1 go through the reflection path. Interior
        // anchors cannot reach angles near π/2 inside the orthant.
        InterestProfile::basis(3, 2).unwrap(),
        InterestProfile::basis(2, 1).unwrap(),
    ];
    for anchor in &anchors {
        let angles: Vec<f64> = (0..draws)
            .map(|_| {
                let p = sample_profile(&mut r, anchor.dim(), anchor).unwrap();
                angle_between(&p, anchor).unwrap()
            })
            .collect();
        let d = ks_statistic(&angles, uniform_angle_cdf).unwrap();
        assert!(d < ks_critical_value(ALPHA, draws), "anchor {anchor}: D = {d}");
    }
}

/// Plain rejection: a Gaussian direction in the span of e2..em, kept only
/// when every coordinate is non-negative.
fn rejection_slice(r: &mut ChaCha8Rng, m: usize, alpha: f64) -> Vec<f64> {
    loop {
        let u: Vec<f64> = (1..m).map(|_| r.sample(StandardNormal)).collect();
        if u.iter().any(|c: &f64| *c < 0.0) {
            continue;
        }
        let norm = u.iter().map(|c| c * c).sum::<f64>().sqrt();
        let mut v = vec![alpha.cos()];
        v.extend(u.iter().map(|c| alpha.sin() * c / norm));
        return v;
    }
}

#[test]
fn slice_sampler_matches_rejection() {
    let m = 4;
    let alpha = 1.0;
    let e1 = InterestProfile::basis(m, 0).unwrap();
    let mut a = rng(2);
    let mut b = rng(3);
    let n = 40_000;
    for axis in 1..m {
        let fast: Vec<f64> = (0..n)
            .map(|_| sample_profile_at_angle(&mut a, &e1, alpha).unwrap().coords()[axis])
            .collect();
        let slow: Vec<f64> = (0..n).map(|_| rejection_slice(&mut b, m, alpha)[axis]).collect();
        let d = ks_two_sample(&fast, &slow).unwrap();
        assert!(d < ks_two_sample_critical_value(ALPHA, n, n), "axis {axis}: D = {d}");
    }
}

#[test]
fn mean_similarity_to_anchor_is_two_over_pi() {
    let mut r = rng(4);
    let anchor = InterestProfile::basis(5, 0).unwrap();
    let cos: Vec<f64> = (0..200_000)
        .map(|_| sample_profile(&mut r, 5, &anchor).unwrap().coords()[0])
        .collect();
    let s = mean_ci(&cos, 0.95).unwrap();
    assert!((s.mean - 2.0 / PI).abs() < 4.0 * s.std_error, "{s:?}");
}

#[test]
fn rate_normalization_holds_for_several_settings() {
    let mut r = rng(5);
    for &(lambda, delta) in &[(1.0, 0.0), (1.0, 0.1), (3.0, 0.5), (0.2, 0.001)] {
        let model = RateModel::interest_based(lambda, delta).unwrap();
        let s = InterestProfile::basis(3, 0).unwrap();
        let rates: Vec<f64> = (0..200_000)
            .map(|_| pair_rate(&model, &s, &sample_profile(&mut r, 3, &s).unwrap()).unwrap())
            .collect();
        let st = mean_ci(&rates, 0.95).unwrap();
        assert!((st.mean - lambda).abs() < 4.0 * st.std_error, "λ={lambda} δ={delta}: {st:?}");
    }
}

#[test]
fn competing_clocks() {
    let mut r = rng(6);
    let rates = [0.5, 1.5, 3.0];
    let n = 200_000;
    let mut times = Vec::with_capacity(n);
    let mut counts = [0u64; 3];
    for _ in 0..n {
        let (t, i) = sample_min_meeting(&mut r, &rates).unwrap();
        times.push(t);
        counts[i] += 1;
    }
    let d = ks_statistic(&times, |x| 1.0 - (-5.0 * x).exp()).unwrap();
    assert!(d < ks_critical_value(ALPHA, n));
    let (chi, df) = chi_square_statistic(&counts, &[0.1, 0.3, 0.6]).unwrap();
    assert!(chi < chi_square_critical(ALPHA, df));
}

/// With equal rates, the source meets the destination first with probability
/// 1/(n+1); otherwise two holders race at combined rate 2λ.
#[test]
fn oblivious_first_meeting_closed_form() {
    let lambda = 2.0;
    for &n in &[1usize, 2, 10] {
        let mut c = ExperimentConfig::new(n, 3, RateModel::social_oblivious(lambda).unwrap(), ProtocolSpec::FirstMeeting);
        c.trials = 50_000;
        c.master_seed = 70 + n as u64;
        let out = run_experiment(&c).unwrap();
        let exact = 1.0 / ((n as f64 + 1.0) * lambda) + (n as f64 / (n as f64 + 1.0)) / (2.0 * lambda);
        let s = out.summary;
        let (mean, se) = (s.mean_delay.unwrap(), s.std_error.unwrap());
        assert!((mean - exact).abs() < 4.0 * se, "n={n}: {mean} vs {exact}");
    }
}

/// Simpson's rule for the mean of 1/(k cos α + δ) with α uniform.
fn direct_mean(lambda: f64, delta: f64) -> f64 {
    let k = FRAC_PI_2 * (lambda - delta);
    let f = |a: f64| 1.0 / (k * a.cos() + delta);
    let steps = 100_000;
    let h = FRAC_PI_2 / steps as f64;
    let mut sum = f(0.0) + f(FRAC_PI_2);
    for i in 1..steps {
        sum += f(i as f64 * h) * if i % 2 == 1 { 4.0 } else { 2.0 };
    }
    sum * h / 3.0 / FRAC_PI_2
}

#[test]
fn direct_delivery_means() {
    // Orthogonal endpoints meet only through the floor rate.
    let mut c = ExperimentConfig::new(5, 4, RateModel::interest_based(1.0, 0.2).unwrap(), ProtocolSpec::Direct);
    c.trials = 40_000;
    c.master_seed = 8;
    let s = run_experiment(&c).unwrap().summary;
    assert!((s.mean_delay.unwrap() - 5.0).abs() < 4.0 * s.std_error.unwrap());

    for &delta in &[0.1, 0.02] {
        let mut c = ExperimentConfig::new(5, 4, RateModel::interest_based(1.0, delta).unwrap(), ProtocolSpec::Direct);
        c.scenario = Scenario::UniformAngle;
        c.trials = 100_000;
        c.master_seed = 9;
        let s = run_experiment(&c).unwrap().summary;
        let exact = direct_mean(1.0, delta);
        assert!(
            (s.mean_delay.unwrap() - exact).abs() < 4.0 * s.std_error.unwrap(),
            "δ={delta}: {:?} vs {exact}",
            s.mean_delay
        );
    }
}

#[test]
fn resample_and_persistent_clocks_agree_in_distribution() {
    let spec = ProtocolSpec::InterestBased { gamma: 0.2, fallback_time: None };
    let mut c = ExperimentConfig::new(40, 3, RateModel::interest_based(1.0, 0.05).unwrap(), spec);
    c.trials = 20_000;
    c.master_seed = 10;
    let a: Vec<f64> = run_experiment(&c).unwrap().results.iter().filter_map(|r| r.delivery_time).collect();
    c.engine = EngineMode::Persistent;
    c.master_seed = 11;
    let b: Vec<f64> = run_experiment(&c).unwrap().results.iter().filter_map(|r| r.delivery_time).collect();
    let d = ks_two_sample(&a, &b).unwrap();
    assert!(d < ks_two_sample_critical_value(ALPHA, a.len(), b.len()), "D = {d}");
}

#[test]
fn synthetic_counts_are_poisson() {
    let mut r = rng(12);
    let single = RateMatrix::from_rows(vec![vec![0.0, 2.0], vec![2.0, 0.0]]).unwrap();
    let t = generate_synthetic_trace(&mut r, &single, 1.0e4, 0.0).unwrap();
    let expected = 2.0e4;
    assert!((t.len() as f64 - expected).abs() < 3.0 * expected.sqrt(), "{}", t.len());
    let gaps: Vec<f64> = t.events().windows(2).map(|w| w[1].start - w[0].start).collect();
    let d = ks_statistic(&gaps, |x| 1.0 - (-2.0 * x).exp()).unwrap();
    assert!(d < ks_critical_value(ALPHA, gaps.len()));

    // Heterogeneous rates: dispersion statistic against chi-square.
    let profiles: Vec<InterestProfile> = {
        let s = InterestProfile::basis(3, 0).unwrap();
        (0..30).map(|_| sample_profile(&mut r, 3, &s).unwrap()).collect()
    };
    let rates = RateMatrix::from_profiles(&RateModel::interest_based(1.0, 0.05).unwrap(), &profiles).unwrap();
    let horizon = 50.0;
    let t = generate_synthetic_trace(&mut r, &rates, horizon, 0.0).unwrap();
    let mut counts = std::collections::HashMap::new();
    for e in t.events() {
        let (i, j): (usize, usize) = (e.a.parse().unwrap(), e.b.parse().unwrap());
        *counts.entry((i.min(j), i.max(j))).or_insert(0u64) += 1;
    }
    let (obs, means): (Vec<u64>, Vec<f64>) = rates
        .pairs()
        .map(|(i, j, rate)| (counts.get(&(i, j)).copied().unwrap_or(0), rate * horizon))
        .unzip();
    let stat = poisson_dispersion(&obs, &means).unwrap();
    assert!(stat < chi_square_critical(ALPHA, obs.len()), "{stat}");
    assert!(stat > chi_square_critical(1.0 - ALPHA, obs.len()), "{stat}");
}

#[test]
fn trace_correlation_matches_rate_correlation() {
    let mut r = rng(13);
    let s = InterestProfile::basis(4, 0).unwrap();
    let profiles: Vec<InterestProfile> = (0..100).map(|_| sample_profile(&mut r, 4, &s).unwrap()).collect();
    let rates = RateMatrix::from_profiles(&RateModel::interest_based(1.0, 0.01).unwrap(), &profiles).unwrap();
    // About 100 meetings per pair keeps the trace in memory while counts
    // still track rates closely.
    let trace = generate_synthetic_trace(&mut r, &rates, 100.0, 0.0).unwrap();
    let report = meeting_similarity_correlation(&trace, &ProfileTable::from_indexed(&profiles).unwrap()).unwrap();

    let (x, y): (Vec<f64>, Vec<f64>) = rates
        .pairs()
        .map(|(i, j, rate)| (rate, cosine_similarity(&profiles[i], &profiles[j]).unwrap()))
        .unzip();
    let oracle = pearson(&x, &y).unwrap();
    assert_eq!(report.pair_count, 100 * 99 / 2);
    assert!((report.pearson - oracle).abs() < 0.05, "{} vs {oracle}", report.pearson);
}

/// Replaying a trace drawn from a population's own rates reproduces the
/// rate-driven engine on that population.
#[test]
fn replay_agrees_with_engine_on_fixed_population() {
    let mut r = rng(14);
    let model = RateModel::interest_based(1.0, 0.05).unwrap();
    let pop = Population::sample(&mut r, Scenario::UniformAngle, 3, 6).unwrap();
    let spec = ProtocolSpec::FirstMeeting;

    let engine: Vec<f64> = (0..20_000u64)
        .map(|i| {
            let mut rr = rng_from_seed(sub_seed(15, i));
            simulate(&pop, &model, &spec, None, EngineMode::Resample, &mut rr, None)
                .unwrap()
                .delivered_at()
                .unwrap()
        })
        .collect();

    let profiles: Vec<InterestProfile> = pop.nodes().map(|id| pop.profile(id).clone()).collect();
    let rates = build_rate_matrix(&model, &pop).unwrap();
    let horizon = 4.0e5;
    let trace = generate_synthetic_trace(&mut r, &rates, horizon, 0.0).unwrap();
    let replayer = Replayer::new(&trace, &ProfileTable::from_indexed(&profiles).unwrap()).unwrap();
    let ttl = 2000.0;
    let messages: Vec<Message> = (0..20_000)
        .map(|i| Message {
            source: "0".into(),
            destination: "1".into(),
            start_time: (horizon - ttl) * i as f64 / 20_000.0,
        })
        .collect();
    let replay: Vec<f64> = replayer
        .replay_all(&spec, &messages, Some(ttl))
        .unwrap()
        .iter()
        .map(|r| r.delivery_time.expect("delivered within ttl"))
        .collect();

    let a = mean_ci(&engine, 0.95).unwrap();
    let b = mean_ci(&replay, 0.95).unwrap();
    let se = (a.std_error.powi(2) + b.std_error.powi(2)).sqrt();
    assert!((a.mean - b.mean).abs() < 4.0 * se, "{a:?} vs {b:?}");
}

#[test]
fn exponential_mean_and_ci_scaling() {
    let mut r = rng(16);
    let draws: Vec<f64> = (0..100_000).map(|_| -(1.0 - r.random::<f64>()).ln() / 2.0).collect();
    let s = mean_ci(&draws, 0.95).unwrap();
    assert!((s.mean - 0.5).abs() < 0.005);
    let small = mean_ci(&draws[..25_000], 0.95).unwrap();
    let ratio = (small.ci_high - small.ci_low) / (s.ci_high - s.ci_low);
    assert!((1.8..=2.2).contains(&ratio), "{ratio}");
}

#[test]
fn eligible_fraction_bound_small_sample() {
    let mut r = rng(17);
    let n = 100_000;
    let f = forwarding_fraction(&mut r, 4, 0.29 / 3.0, n).unwrap();
    let se = (f * (1.0 - f) / n as f64).sqrt();
    assert!(f >= 1.0 / 12.0 - 3.0 * se);
}

#[test]
fn kolmogorov_table_values() {
    // Published asymptotic coefficients: 1.36 at 0.05, 1.63 at 0.01, 1.95 at 0.001.
    assert!((ks_critical_value(0.05, 1) - 1.36).abs() < 0.005);
    assert!((ks_critical_value(0.01, 1) - 1.63).abs() < 0.005);
    assert!((ks_critical_value(0.001, 1) - 1.95).abs() < 0.005);
}
