//! Shared fixtures for the criterion benchmarks.

use petnn_core::{CellConfig, InitScheme, Model, Rng, UpdateVariant, Vector};

pub fn model(input_dim: usize, hidden_dim: usize, variant: UpdateVariant) -> Model {
    let cfg = CellConfig::new(input_dim, hidden_dim).with_variant(variant);
    Model::petnn(cfg, 1, &mut Rng::new(0), InitScheme::GlorotUniform).expect("valid dims")
}

pub fn sequence(len: usize, input_dim: usize, seed: u64) -> Vec<Vector> {
    let mut rng = Rng::new(seed);
    (0..len)
        .map(|_| (0..input_dim).map(|_| rng.uniform_range(-1.0, 1.0)).collect::<Vec<_>>().into())
        .collect()
}
