//! Shared fixtures for unit tests.

use ndarray::{Array1, Array2};
use rand::prelude::*;

use crate::net::{ActivationKind, Layer, Network};

/// Random dense network with weights in (-scale, scale) and biases in
/// (-scale/2, scale/2).
pub fn random_net_scaled(
    rng: &mut impl Rng,
    dims: &[usize],
    activation: ActivationKind,
    scale: f64,
) -> Network {
    let layers = dims
        .windows(2)
        .map(|w| {
            let weights = Array2::from_shape_fn((w[1], w[0]), |_| rng.random_range(-scale..scale));
            let bias = Array1::from_shape_fn(w[1], |_| {
                rng.random_range(-0.5 * scale..0.5 * scale)
            });
            Layer::new(weights, bias).unwrap()
        })
        .collect();
    Network::new(dims[0], activation, layers).unwrap()
}

pub fn random_net(rng: &mut impl Rng, dims: &[usize], activation: ActivationKind) -> Network {
    random_net_scaled(rng, dims, activation, 1.0)
}
