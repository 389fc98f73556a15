use fedtune::data::{DataShard, Samples};
use fedtune::model::{ModelSpec, TrainHp, WeightVector};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn random_batch(rng: &mut ChaCha8Rng, dim: usize, classes: usize, n: usize) -> Samples {
    let features = (0..n * dim).map(|_| rng.random_range(-2.0..2.0)).collect();
    let labels = (0..n).map(|_| rng.random_range(0..classes)).collect();
    Samples::new(dim, features, labels).unwrap()
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// Central differences, independent of the analytic backward pass.
fn numeric_grad(spec: &ModelSpec, w: &[f64], batch: &Samples) -> Vec<f64> {
    let h = 1e-5;
    let mut probe = w.to_vec();
    (0..w.len())
        .map(|i| {
            probe[i] = w[i] + h;
            let up = spec.loss_and_grad(&probe, batch).0;
            probe[i] = w[i] - h;
            let down = spec.loss_and_grad(&probe, batch).0;
            probe[i] = w[i];
            (up - down) / (2.0 * h)
        })
        .collect()
}

fn max_relative_gradient_error(spec: &ModelSpec, points: usize, seed: u64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst = 0.0f64;
    for _ in 0..points {
        let w: Vec<f64> = (0..spec.param_count()).map(|_| rng.random_range(-1.0..1.0)).collect();
        let batch = random_batch(&mut rng, spec.input_dim, spec.num_classes, 8);
        let (_, analytic) = spec.loss_and_grad(&w, &batch);
        let numeric = numeric_grad(spec, &w, &batch);
        let diff: Vec<f64> = analytic.iter().zip(&numeric).map(|(a, b)| a - b).collect();
        let scale = norm(&analytic).max(norm(&numeric)).max(1e-12);
        worst = worst.max(norm(&diff) / scale);
    }
    worst
}

#[test]
fn logistic_gradient_matches_finite_differences() {
    let err = max_relative_gradient_error(&ModelSpec::logistic(5, 3), 100, 11);
    assert!(err <= 1e-4, "relative error {err}");
}

#[test]
fn mlp_gradient_matches_finite_differences() {
    let err = max_relative_gradient_error(&ModelSpec::mlp(4, 6, 3), 100, 12);
    assert!(err <= 1e-4, "relative error {err}");
}

fn shard(seed: u64) -> DataShard {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    DataShard {
        client_id: 0,
        train: random_batch(&mut rng, 3, 2, 40),
        val: random_batch(&mut rng, 3, 2, 10),
        test: random_batch(&mut rng, 3, 2, 10),
    }
}

#[test]
fn training_is_bit_reproducible() {
    let spec = ModelSpec::mlp(3, 5, 2);
    let w = spec.init_weights(3).unwrap();
    let hp = TrainHp {
        learning_rate: 0.05,
        local_epochs: 3,
        batch_size: 8,
        dropout: 0.3,
        ..TrainHp::default()
    };
    let a = spec.local_train(&w, &hp, &shard(1), 99).unwrap();
    let b = spec.local_train(&w, &hp, &shard(1), 99).unwrap();
    assert_eq!(a.weights, b.weights);
    assert_eq!(a.train_loss.to_bits(), b.train_loss.to_bits());
    assert_eq!(a.val_loss.to_bits(), b.val_loss.to_bits());
    let c = spec.local_train(&w, &hp, &shard(1), 100).unwrap();
    assert_ne!(a.weights, c.weights);
}

#[test]
fn init_seeds_give_different_vectors() {
    let spec = ModelSpec::logistic(4, 2);
    let a = spec.init_weights(7).unwrap();
    let b = spec.init_weights(8).unwrap();
    assert!(spec.layout_id() == a.layout_id);
    // Logistic biases start at zero, so compare the weight block only.
    assert!(a.values.iter().zip(&b.values).any(|(x, y)| x != y));
}

#[test]
fn evaluation_ignores_dropout() {
    let mut spec = ModelSpec::mlp(3, 5, 2);
    spec.dropout_rate = 0.5;
    let w = spec.init_weights(2).unwrap();
    let set = shard(4).val;
    let first = spec.evaluate(&w, &set).unwrap();
    for _ in 0..3 {
        assert_eq!(spec.evaluate(&w, &set).unwrap(), first);
    }
    spec.dropout_rate = 0.0;
    assert_eq!(spec.evaluate(&w, &set).unwrap(), first);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    /// With every feature zero the data gradient of the weight block
    /// vanishes, so weight decay alone can only shrink the vector.
    #[test]
    fn weight_decay_never_grows_weights(seed in 0u64..1000, wd in 1e-5f64..0.1, lr in 1e-4f64..0.5) {
        let spec = ModelSpec::logistic(3, 2);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let values: Vec<f64> = (0..spec.param_count()).map(|_| rng.random_range(-1.0..1.0)).collect();
        let w = WeightVector::new(values, spec.layout_id());
        let zeros = Samples::new(3, vec![0.0; 3 * 20], (0..20).map(|i| i % 2).collect()).unwrap();
        let shard = DataShard { client_id: 0, train: zeros.clone(), val: zeros.clone(), test: zeros };
        let hp = TrainHp { learning_rate: lr, weight_decay: wd, local_epochs: 1, batch_size: 4, dropout: 0.0 };
        let out = spec.local_train(&w, &hp, &shard, seed).unwrap();
        let n_weights = 3 * 2;
        let before: f64 = w.values[..n_weights].iter().map(|x| x * x).sum();
        let after: f64 = out.weights.values[..n_weights].iter().map(|x| x * x).sum();
        prop_assert!(after <= before);
    }

    #[test]
    fn losses_are_nonnegative_and_accuracy_is_a_fraction(seed in 0u64..1000) {
        let spec = ModelSpec::mlp(3, 4, 3);
        let w = spec.init_weights(seed).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let set = random_batch(&mut rng, 3, 3, 25);
        let e = spec.evaluate(&w, &set).unwrap();
        prop_assert!(e.loss >= 0.0);
        prop_assert!((0.0..=1.0).contains(&e.accuracy));
    }

    #[test]
    fn trained_weights_stay_finite(seed in 0u64..500, lr_exp in -5i32..=-1) {
        let spec = ModelSpec::mlp(3, 4, 2);
        let w = spec.init_weights(seed).unwrap();
        let hp = TrainHp { learning_rate: 10f64.powi(lr_exp), local_epochs: 2, batch_size: 16, ..TrainHp::default() };
        let out = spec.local_train(&w, &hp, &shard(seed), seed).unwrap();
        prop_assert!(out.weights.is_finite());
    }
}
