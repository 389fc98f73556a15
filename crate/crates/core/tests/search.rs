use std::collections::BTreeMap;

use fedtune::hpo::{
    combine_feedback, probe_set, suggest_adaptive, suggest_random, AdaptiveSampler, ConfigId, Direction,
    FeedbackKind, FeedbackRecord, FeedbackStore, HpConfig, ProbeConfig, RandomSampler, SearchSpace,
};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn names(v: &[&str]) -> Vec<String> {
    v.iter().map(|s| s.to_string()).collect()
}

fn space() -> SearchSpace {
    SearchSpace::low_fidelity()
}

fn on_grid(space: &SearchSpace, c: &HpConfig) -> bool {
    space.contains(c) && c.values.len() == space.dims.len()
}

/// Random scores for a probe set, with the current configuration first.
fn scored(probes: Vec<ProbeConfig>, rng: &mut ChaCha8Rng) -> Vec<(ProbeConfig, f64)> {
    probes.into_iter().map(|p| (p, rng.random_range(0.0..3.0))).collect()
}

#[test]
fn random_draws_are_uniform_over_the_lr_grid() {
    let s = space();
    let grid = s.dim("learning_rate").unwrap().grid();
    let mut counts = vec![0usize; grid.len()];
    for seed in 0..10_000 {
        let v = suggest_random(&s, seed).get("learning_rate").unwrap();
        counts[grid.iter().position(|&g| g == v).unwrap()] += 1;
    }
    for c in counts {
        let f = c as f64 / 10_000.0;
        assert!((0.17..=0.23).contains(&f), "frequency {f}");
    }
}

#[test]
fn probe_set_size_tracks_tuned_count() {
    let s = space();
    let current = suggest_random(&s, 4);
    let all = names(&["learning_rate", "weight_decay", "local_epochs"]);
    for k in 0..=3 {
        let p = probe_set(&s, &current, &FeedbackStore::new(), &all[..k]).unwrap();
        assert_eq!(p.len(), k + 1);
        assert!(p[0].target.is_none());
        for probe in &p[1..] {
            let t = probe.target.as_deref().unwrap();
            let differing: Vec<_> = current
                .values
                .iter()
                .filter(|(n, v)| probe.config.get(n) != Some(**v))
                .map(|(n, _)| n.as_str())
                .collect();
            assert_eq!(differing, vec![t]);
        }
    }
}

#[test]
fn lower_boundary_probes_upward() {
    let s = space();
    let current = suggest_random(&s, 1).with("learning_rate", 1e-5);
    let mut store = FeedbackStore::new();
    store.note_direction("learning_rate", Direction::Down);
    let p = probe_set(&s, &current, &store, &names(&["learning_rate"])).unwrap();
    assert_eq!(p[1].config.get("learning_rate"), Some(1e-4));
    assert_eq!(p[1].direction, Some(Direction::Up));
}

#[test]
fn two_point_mean_and_identity() {
    let mut store = FeedbackStore::new();
    let id = ConfigId("a".into());
    store.record(&id, 0.4).unwrap();
    assert_eq!(store.mean(&id), Some(0.4));
    store.record(&id, 0.6).unwrap();
    assert!((store.mean(&id).unwrap() - 0.5).abs() < 1e-15);
    assert_eq!(store.count(&id), 2);
}

#[test]
fn running_mean_matches_brute_force_sum() {
    let mut rng = ChaCha8Rng::seed_from_u64(77);
    let mut store = FeedbackStore::new();
    let id = ConfigId("x".into());
    let xs: Vec<f64> = (0..1000).map(|_| rng.random_range(-5.0..5.0)).collect();
    for &x in &xs {
        store.record(&id, x).unwrap();
    }
    let brute = xs.iter().sum::<f64>() / xs.len() as f64;
    assert!((store.mean(&id).unwrap() - brute).abs() <= 1e-12);
    assert_eq!(store.combined_history().len(), 1000);
}

#[test]
fn adaptive_uses_only_the_latest_results() {
    let s = space();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut quiet = FeedbackStore::new();
    let mut noisy = FeedbackStore::new();
    for i in 0..200 {
        let other = suggest_random(&s, 1000 + i);
        noisy.record(&other.config_id, rng.random_range(0.0..5.0)).unwrap();
        noisy
            .push(FeedbackRecord {
                config_id: other.config_id.clone(),
                round: i as usize,
                kind: FeedbackKind::Probe,
                train_loss: 9.0,
                val_loss: 9.0,
                group_size: 1,
                probe_target: Some("learning_rate".into()),
            })
            .unwrap();
    }
    let mut a = AdaptiveSampler::new(s.clone(), 0.0, 21);
    let mut b = AdaptiveSampler::new(s.clone(), 0.0, 21);
    let current = a.start().unwrap();
    assert_eq!(b.start().unwrap(), current);
    noisy.record(&current.config_id, 0.0).unwrap();
    let latest = scored(probe_set(&s, &current, &quiet, &s.names()).unwrap(), &mut rng);
    assert_eq!(
        a.next_config(&mut quiet, &latest),
        b.next_config(&mut noisy, &latest)
    );
}

#[test]
fn adaptive_with_no_results_keeps_current() {
    let s = space();
    let c = suggest_random(&s, 2);
    let step = suggest_adaptive(&s, &c, &[], &s.names(), 0.0, &mut ChaCha8Rng::seed_from_u64(1));
    assert_eq!(step.config, c);
}

#[test]
fn adaptive_sampler_never_reissues() {
    let s = SearchSpace::low_fidelity_core();
    let mut sampler = AdaptiveSampler::new(s.clone(), 0.1, 5);
    let mut store = FeedbackStore::new();
    let mut seen = std::collections::BTreeSet::new();
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let mut next = sampler.start();
    let tuned = sampler.tuned().to_vec();
    for _ in 0..60 {
        let c = next.unwrap();
        assert!(on_grid(&s, &c));
        assert!(seen.insert(c.config_id.clone()));
        let latest = scored(probe_set(&s, &c, &store, &tuned).unwrap(), &mut rng);
        next = sampler.next_config(&mut store, &latest);
    }
}

#[test]
fn random_sampler_exhausts_small_spaces() {
    let s = SearchSpace::new(vec![fedtune::hpo::HpDim::new(
        "batch_size",
        fedtune::hpo::Scale::Pow2,
        16.0,
        64.0,
        2.0,
    )]);
    let mut sampler = RandomSampler::new(s, 1);
    let drawn: Vec<_> = std::iter::from_fn(|| sampler.next_config()).collect();
    assert_eq!(drawn.len(), 3);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]

    #[test]
    fn combined_feedback_lies_between_its_inputs(
        lf in prop::collection::vec(0.0f64..10.0, 1..12),
        gf in 0.0f64..10.0,
    ) {
        let c = combine_feedback(&lf, gf, lf.len()).unwrap();
        let lo = lf.iter().copied().fold(gf, f64::min);
        let hi = lf.iter().copied().fold(gf, f64::max);
        prop_assert!(lo - 1e-12 <= c && c <= hi + 1e-12);
    }

    #[test]
    fn combined_feedback_fixed_point(gf in 0.0f64..10.0, n in 1usize..20) {
        let c = combine_feedback(&vec![gf; n], gf, n).unwrap();
        prop_assert!((c - gf).abs() <= 1e-12 * gf.max(1.0));
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn snapping_lands_on_the_grid(x in -1.0f64..300.0, which in 0usize..5) {
        let s = space();
        let d = &s.dims[which];
        let v = d.snap(x);
        prop_assert!(d.index_of(v).is_some());
        prop_assert_eq!(d.snap(v), v);
    }

    #[test]
    fn every_emitted_config_is_on_the_grid(seed in 0u64..100_000, eps in 0.0f64..1.0) {
        let s = space();
        let r = suggest_random(&s, seed);
        prop_assert!(on_grid(&s, &r));
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let latest = scored(probe_set(&s, &r, &FeedbackStore::new(), &s.names()).unwrap(), &mut rng);
        for p in &latest {
            prop_assert!(on_grid(&s, &p.0.config));
        }
        let step = suggest_adaptive(&s, &r, &latest, &s.names(), eps, &mut rng);
        prop_assert!(on_grid(&s, &step.config));
    }

    #[test]
    fn greedy_adaptive_is_deterministic(seed in 0u64..10_000) {
        let s = space();
        let c = suggest_random(&s, seed);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let latest = scored(probe_set(&s, &c, &FeedbackStore::new(), &s.names()).unwrap(), &mut rng);
        let a = suggest_adaptive(&s, &c, &latest, &s.names(), 0.0, &mut ChaCha8Rng::seed_from_u64(1));
        let b = suggest_adaptive(&s, &c, &latest, &s.names(), 0.0, &mut ChaCha8Rng::seed_from_u64(2));
        prop_assert_eq!(a, b);
    }

    #[test]
    fn config_id_ignores_insertion_order(a in 0.0f64..1.0, b in 0.0f64..1.0) {
        let mut fwd = BTreeMap::new();
        fwd.insert("learning_rate".to_string(), a);
        fwd.insert("dropout".to_string(), b);
        let rev = HpConfig::from_pairs([("dropout", b), ("learning_rate", a)]);
        prop_assert_eq!(ConfigId::of(&fwd), rev.config_id);
    }
}
