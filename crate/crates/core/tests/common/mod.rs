#![allow(dead_code)]

use fedtune::data::{gen_synthetic, SplitFractions};
use fedtune::flcore::{World, WorldSpec};
use fedtune::hpo::HpConfig;
use fedtune::model::ModelKind;

/// Two well-separated blobs spread almost evenly over `n_clients`.
pub fn separable_world(n_clients: usize, seed: u64) -> World {
    let ds = gen_synthetic(2, 2, 600, 10.0, seed).unwrap();
    let spec = WorldSpec {
        n_clients,
        alpha: 1000.0,
        split: SplitFractions::default(),
        ..WorldSpec::default()
    };
    World::build(&ds, &spec, seed).unwrap()
}

/// A small non-IID multi-class world with an MLP and uneven client speeds.
pub fn mixed_world(n_clients: usize, seed: u64) -> World {
    let ds = gen_synthetic(4, 6, 160 * n_clients, 3.0, seed).unwrap();
    let spec = WorldSpec {
        n_clients,
        alpha: 0.5,
        model_kind: ModelKind::Mlp,
        hidden_dim: 8,
        ..WorldSpec::default()
    };
    World::build(&ds, &spec, seed).unwrap()
}

pub fn hp(lr: f64, epochs: f64) -> HpConfig {
    HpConfig::from_pairs([
        ("learning_rate", lr),
        ("weight_decay", 1e-5),
        ("local_epochs", epochs),
        ("batch_size", 16.0),
    ])
}
