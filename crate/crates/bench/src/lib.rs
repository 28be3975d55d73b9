//! Shared fixtures for the benchmarks; see benches/pipeline.rs.

use certiq_core::{ActivationKind, Layer, Network};
use ndarray::{Array1, Array2};

/// Deterministic dense network with a simple congruential fill, so the
/// benches do not depend on RNG crate versions.
pub fn fixture_net(dims: &[usize], activation: ActivationKind) -> Network {
    let mut state = 0x9e3779b97f4a7c15u64;
    let mut next = move || {
        state = state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
        ((state >> 11) as f64 / (1u64 << 53) as f64) * 2.0 - 1.0
    };
    let layers = dims
        .windows(2)
        .map(|w| {
            Layer::new(
                Array2::from_shape_fn((w[1], w[0]), |_| next()),
                Array1::from_shape_fn(w[1], |_| 0.5 * next()),
            )
            .unwrap()
        })
        .collect();
    Network::new(dims[0], activation, layers).unwrap()
}
