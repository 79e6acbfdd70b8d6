use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use psn_core::analysis::pearson;
use psn_core::engine::{run_trial_logged, simulate, EngineMode};
use psn_core::trace::merge_overlapping;
use psn_core::*;

fn weights(m: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(0.0f64..10.0, m).prop_filter("non-zero", |w| w.iter().any(|x| *x > 1e-3))
}

fn protocol(m: usize) -> impl Strategy<Value = ProtocolSpec> {
    prop_oneof![
        Just(ProtocolSpec::FirstMeeting),
        Just(ProtocolSpec::Direct),
        (0.0f64..1.0).prop_map(|gamma| ProtocolSpec::InterestBased { gamma, fallback_time: None }),
        (2u32..9, 2u32..5).prop_map(|(copies, max_hops)| ProtocolSpec::FmStar { copies, max_hops }),
        Just(ProtocolSpec::ModIb { copies: m as u32 }),
        (2u32..9, 2u32..5, 0usize..3, 0.0f64..1.0).prop_map(|(copies, max_hops, e, gamma)| ProtocolSpec::Spray {
            copies,
            max_hops,
            eligibility: [Eligibility::FirstMeeting, Eligibility::Threshold, Eligibility::StrictlyCloser][e],
            gamma,
        }),
    ]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn sampled_profiles_are_unit_and_nonnegative(m in 2usize..8, axis in 0usize..8, seed: u64) {
        // Only axis anchors admit every angle in [0, π/2] inside the orthant.
        let anchor = InterestProfile::basis(m, axis % m).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for _ in 0..20 {
            let p = sample_profile(&mut rng, m, &anchor).unwrap();
            prop_assert!((p.norm() - 1.0).abs() < 1e-9);
            prop_assert!(p.coords().iter().all(|c| *c >= 0.0));
        }
    }

    #[test]
    fn cosine_is_symmetric_and_bounded(a in weights(5), b in weights(5)) {
        let a = InterestProfile::from_weights(a).unwrap();
        let b = InterestProfile::from_weights(b).unwrap();
        let ab = cosine_similarity(&a, &b).unwrap();
        prop_assert_eq!(ab, cosine_similarity(&b, &a).unwrap());
        prop_assert!((0.0..=1.0).contains(&ab));
        prop_assert!((cosine_similarity(&a, &a).unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn copies_conserved_and_hops_bounded(
        (m, spec) in (2usize..5).prop_flat_map(|m| (Just(m), protocol(m))),
        n in 0usize..25,
        delta in 0.01f64..0.5,
        seed: u64,
        persistent: bool,
    ) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let pop = Population::sample(&mut rng, Scenario::UniformAngle, m, n).unwrap();
        let model = RateModel::interest_based(1.0, delta).unwrap();
        let mode = if persistent { EngineMode::Persistent } else { EngineMode::Resample };
        let mut log = Vec::new();
        let state = simulate(&pop, &model, &spec, Some(30.0), mode, &mut rng, Some(&mut log)).unwrap();
        prop_assert_eq!(state.total_copies(), spec.copies());
        prop_assert!(state.holders().values().all(|h| h.depth <= spec.max_hops()));
        prop_assert!(log.windows(2).all(|w| w[0].time <= w[1].time));
        if let Some(t) = state.delivered_at() {
            prop_assert!(t <= 30.0);
            prop_assert!(state.first_event_at().unwrap() <= t);
        }
    }

    #[test]
    fn ib_zero_and_two_copy_spray_replay_fm(seed: u64, n in 1usize..40) {
        let model = RateModel::interest_based(1.0, 0.02).unwrap();
        let cfg = |p| ExperimentConfig::new(n, 3, model, p);
        let fm = run_trial_logged(&cfg(ProtocolSpec::FirstMeeting), seed).unwrap();
        let ib = run_trial_logged(&cfg(ProtocolSpec::InterestBased { gamma: 0.0, fallback_time: None }), seed).unwrap();
        let spray = run_trial_logged(&cfg(ProtocolSpec::Spray {
            copies: 2, max_hops: 2, eligibility: Eligibility::FirstMeeting, gamma: 0.0,
        }), seed).unwrap();
        prop_assert_eq!(&fm, &ib);
        prop_assert_eq!(&fm, &spray);
    }

    #[test]
    fn trace_write_parse_round_trip(
        rows in prop::collection::vec((0u8..6, 0u8..6, 0.0f64..1e6, 0.0f64..1e4), 0..60)
    ) {
        let events: Vec<ContactEvent> = rows
            .into_iter()
            .filter(|(a, b, _, _)| a != b)
            .map(|(a, b, s, d)| ContactEvent::new(format!("n{a}"), format!("n{b}"), s, s + d).unwrap())
            .collect();
        let trace = ContactTrace::new(events);
        let mut buf = Vec::new();
        write_trace(&mut buf, &trace).unwrap();
        prop_assert_eq!(parse_trace(buf.as_slice()).unwrap(), trace.clone());

        let once = filter_short_contacts(&trace, 300.0).unwrap();
        prop_assert_eq!(filter_short_contacts(&once, 300.0).unwrap(), once.clone());
        prop_assert!(once.events().iter().all(|e| e.duration() >= 300.0));
        prop_assert!(merge_overlapping(&trace).len() <= trace.len());
    }

    #[test]
    fn correlation_is_affine_invariant(
        xy in prop::collection::vec((-100.0f64..100.0, -100.0f64..100.0), 3..40),
        scale in 0.01f64..100.0,
        shift in -1e3f64..1e3,
    ) {
        let (x, y): (Vec<f64>, Vec<f64>) = xy.into_iter().unzip();
        if let Ok(r) = pearson(&x, &y) {
            let x2: Vec<f64> = x.iter().map(|v| scale * v + shift).collect();
            prop_assert!((pearson(&x2, &y).unwrap() - r).abs() < 1e-9);
            prop_assert!((-1.0..=1.0).contains(&r));
        }
    }
}
