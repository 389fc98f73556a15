use fedtune::data::{
    gen_synthetic, label_entropy, mean_label_entropy, parse_csv, partition_dirichlet, tv_from_uniform, Dataset,
    SplitFractions,
};
use fedtune::Error;
use proptest::prelude::*;

/// Each sample as (feature bits, label), sorted: an exact multiset.
fn multiset<'a>(parts: impl IntoIterator<Item = &'a fedtune::data::Samples>) -> Vec<(Vec<u64>, usize)> {
    let mut v: Vec<(Vec<u64>, usize)> = parts
        .into_iter()
        .flat_map(|s| s.iter().map(|(x, y)| (x.iter().map(|f| f.to_bits()).collect(), y)))
        .collect();
    v.sort();
    v
}

fn mean_entropy_over_seeds(alpha: f64, seeds: u64) -> f64 {
    (0..seeds)
        .map(|seed| {
            let ds = gen_synthetic(10, 2, 2000, 1.0, 500 + seed).unwrap();
            let shards = partition_dirichlet(&ds, 10, alpha, SplitFractions::default(), seed).unwrap();
            mean_label_entropy(&shards, 10)
        })
        .sum::<f64>()
        / seeds as f64
}

#[test]
fn near_iid_at_large_alpha() {
    let ds = gen_synthetic(10, 2, 10_000, 1.0, 3).unwrap();
    for seed in 0..5 {
        let shards = partition_dirichlet(&ds, 10, 1000.0, SplitFractions::default(), seed).unwrap();
        let close = shards
            .iter()
            .filter(|s| tv_from_uniform(&s.class_counts(10)) <= 0.1)
            .count();
        assert!(close >= 9, "seed {seed}: only {close} clients near uniform");
    }
}

#[test]
fn small_alpha_is_more_heterogeneous() {
    let ds = gen_synthetic(10, 2, 10_000, 1.0, 3).unwrap();
    let entropy = |alpha| {
        let shards = partition_dirichlet(&ds, 10, alpha, SplitFractions::default(), 1).unwrap();
        mean_label_entropy(&shards, 10)
    };
    assert!(entropy(0.1) < entropy(1000.0));
}

#[test]
fn entropy_is_monotone_in_alpha() {
    let means: Vec<f64> = [0.1, 1.0, 10.0, 100.0]
        .iter()
        .map(|&a| mean_entropy_over_seeds(a, 20))
        .collect();
    assert!(means.windows(2).all(|w| w[0] <= w[1]), "{means:?}");
    assert!(means[3] <= 10f64.ln() + 1e-12);
}

/// Plain batch gradient descent on binary logistic loss, coded separately
/// from the crate's models.
fn reference_logistic_accuracy(ds: &Dataset) -> f64 {
    let d = ds.input_dim();
    let mut w = vec![0.0; d + 1];
    for _ in 0..500 {
        let mut g = vec![0.0; d + 1];
        for (x, y) in ds.samples.iter() {
            let z = w[d] + x.iter().zip(&w).map(|(a, b)| a * b).sum::<f64>();
            let p = 1.0 / (1.0 + (-z).exp());
            let err = p - y as f64;
            for j in 0..d {
                g[j] += err * x[j];
            }
            g[d] += err;
        }
        for j in 0..=d {
            w[j] -= 0.1 * g[j] / ds.len() as f64;
        }
    }
    let correct = ds
        .samples
        .iter()
        .filter(|(x, y)| {
            let z = w[d] + x.iter().zip(&w).map(|(a, b)| a * b).sum::<f64>();
            (z > 0.0) as usize == *y
        })
        .count();
    correct as f64 / ds.len() as f64
}

#[test]
fn well_separated_blobs_are_linearly_separable() {
    let ds = gen_synthetic(2, 2, 200, 10.0, 5).unwrap();
    assert!(reference_logistic_accuracy(&ds) > 0.99);
}

#[test]
fn synthetic_bytes_repeat_per_seed() {
    let a = gen_synthetic(3, 4, 90, 2.0, 8).unwrap();
    let b = gen_synthetic(3, 4, 90, 2.0, 8).unwrap();
    let bits = |d: &Dataset| d.samples.features().iter().map(|f| f.to_bits()).collect::<Vec<_>>();
    assert_eq!(bits(&a), bits(&b));
    assert_eq!(a.samples.labels(), b.samples.labels());
    assert!(matches!(gen_synthetic(5, 2, 4, 1.0, 1), Err(Error::Config { .. })));
}

#[test]
fn too_many_clients_is_a_partition_error() {
    let ds = gen_synthetic(2, 2, 100, 1.0, 1).unwrap();
    let err = partition_dirichlet(&ds, 20, 1.0, SplitFractions::default(), 1).unwrap_err();
    assert!(matches!(err, Error::Partition(_)), "{err}");
}

#[test]
fn csv_round_trip_through_partitioning() {
    let text: String = (0..60).map(|i| format!("{},{},{}\n", i as f64 * 0.5, -(i as f64), i % 3)).collect();
    let ds = parse_csv(text.as_bytes()).unwrap();
    assert_eq!(ds.num_classes, 3);
    let shards = partition_dirichlet(&ds, 2, 5.0, SplitFractions::default(), 4).unwrap();
    assert_eq!(multiset(shards.iter().flat_map(|s| [&s.train, &s.val, &s.test])), multiset([&ds.samples]));
}

#[test]
fn entropy_helper_matches_hand_values() {
    assert!((label_entropy(&[1, 1]) - 2f64.ln()).abs() < 1e-15);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(50))]

    #[test]
    fn partitions_conserve_the_dataset(
        seed in 0u64..10_000,
        n_clients in 1usize..=5,
        alpha in prop::sample::select(vec![0.5, 1.0, 10.0, 100.0]),
        classes in 2usize..6,
    ) {
        let ds = gen_synthetic(classes, 3, 1200, 2.0, seed).unwrap();
        let shards = partition_dirichlet(&ds, n_clients, alpha, SplitFractions::default(), seed).unwrap();
        prop_assert_eq!(shards.len(), n_clients);
        prop_assert_eq!(
            multiset(shards.iter().flat_map(|s| [&s.train, &s.val, &s.test])),
            multiset([&ds.samples])
        );
        for s in &shards {
            let n = s.total_len() as f64;
            prop_assert!(s.train.len() >= 10);
            prop_assert!((s.train.len() as f64 - 0.6 * n).abs() <= 1.0);
            prop_assert!((s.val.len() as f64 - 0.2 * n).abs() <= 1.0);
            prop_assert!((s.test.len() as f64 - 0.2 * n).abs() <= 1.0);
        }
    }

    #[test]
    fn partitions_are_deterministic(seed in 0u64..1000) {
        let ds = gen_synthetic(3, 2, 300, 2.0, 1).unwrap();
        let a = partition_dirichlet(&ds, 4, 0.5, SplitFractions::default(), seed).unwrap();
        let b = partition_dirichlet(&ds, 4, 0.5, SplitFractions::default(), seed).unwrap();
        prop_assert_eq!(a, b);
    }
}
