//! Feedforward network representation, evaluation, and pruning masks.

use ndarray::{Array1, Array2};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Activation function applied to every hidden layer.
///
/// The final layer is always identity (logits).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ActivationKind {
    Relu,
    Hardtanh,
    Sigmoid,
    Tanh,
    Identity,
}

impl ActivationKind {
    pub fn is_piecewise_linear(self) -> bool {
        matches!(
            self,
            ActivationKind::Relu | ActivationKind::Hardtanh | ActivationKind::Identity
        )
    }

    /// All supported activations are monotone non-decreasing.
    pub fn is_monotone(self) -> bool {
        true
    }

    pub fn eval(self, z: f64) -> f64 {
        match self {
            ActivationKind::Relu => z.max(0.0),
            ActivationKind::Hardtanh => z.clamp(-1.0, 1.0),
            ActivationKind::Sigmoid => 1.0 / (1.0 + (-z).exp()),
            ActivationKind::Tanh => z.tanh(),
            ActivationKind::Identity => z,
        }
    }

    /// Derivative, used by the fixture trainer. At piecewise-linear kinks the
    /// right derivative is taken.
    pub fn derivative(self, z: f64) -> f64 {
        match self {
            ActivationKind::Relu => {
                if z >= 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            ActivationKind::Hardtanh => {
                if (-1.0..1.0).contains(&z) {
                    1.0
                } else {
                    0.0
                }
            }
            ActivationKind::Sigmoid => {
                let s = self.eval(z);
                s * (1.0 - s)
            }
            ActivationKind::Tanh => 1.0 - z.tanh().powi(2),
            ActivationKind::Identity => 1.0,
        }
    }
}

/// A single dense layer `z = W a + b`.
#[derive(Debug, Clone, PartialEq)]
pub struct Layer {
    pub weights: Array2<f64>,
    pub bias: Array1<f64>,
}

impl Layer {
    pub fn new(weights: Array2<f64>, bias: Array1<f64>) -> Result<Self> {
        if weights.nrows() != bias.len() {
            return Err(Error::ShapeMismatch(format!(
                "weight rows {} != bias length {}",
                weights.nrows(),
                bias.len()
            )));
        }
        Ok(Self { weights, bias })
    }

    pub fn out_dim(&self) -> usize {
        self.weights.nrows()
    }

    pub fn in_dim(&self) -> usize {
        self.weights.ncols()
    }
}

/// A feedforward network. Hidden layers share `activation`; the final layer
/// produces raw logits.
#[derive(Debug, Clone, PartialEq)]
pub struct Network {
    pub input_dim: usize,
    pub activation: ActivationKind,
    pub layers: Vec<Layer>,
}

impl Network {
    pub fn new(input_dim: usize, activation: ActivationKind, layers: Vec<Layer>) -> Result<Self> {
        let mut prev = input_dim;
        for (l, layer) in layers.iter().enumerate() {
            if layer.in_dim() != prev {
                return Err(Error::DimensionMismatch {
                    layer: l,
                    expected: prev,
                    got: layer.in_dim(),
                });
            }
            prev = layer.out_dim();
        }
        Ok(Self {
            input_dim,
            activation,
            layers,
        })
    }

    pub fn num_layers(&self) -> usize {
        self.layers.len()
    }

    pub fn output_dim(&self) -> usize {
        self.layers.last().map_or(self.input_dim, Layer::out_dim)
    }

    /// Activation applied after layer `l` (0-based): identity on the last
    /// layer, the shared hidden activation otherwise.
    pub fn activation_at(&self, l: usize) -> ActivationKind {
        if l + 1 == self.layers.len() {
            ActivationKind::Identity
        } else {
            self.activation
        }
    }

    /// Forward pass returning the logits.
    pub fn forward(&self, x: &Array1<f64>) -> Result<Array1<f64>> {
        Ok(self.forward_trace(x)?.pop().unwrap_or_else(|| x.clone()))
    }

    /// Forward pass returning every post-activation `h_1, ..., h_L`
    /// (the last entry is the logits).
    pub fn forward_trace(&self, x: &Array1<f64>) -> Result<Vec<Array1<f64>>> {
        if x.len() != self.input_dim {
            return Err(Error::DimensionMismatch {
                layer: 0,
                expected: self.input_dim,
                got: x.len(),
            });
        }
        let mut h = x.clone();
        let mut trace = Vec::with_capacity(self.layers.len());
        for (l, layer) in self.layers.iter().enumerate() {
            let z = layer.weights.dot(&h) + &layer.bias;
            let act = self.activation_at(l);
            h = z.mapv(|v| act.eval(v));
            trace.push(h.clone());
        }
        Ok(trace)
    }
}

/// Per-layer 0/1 masks over weight matrices. Biases are never pruned.
#[derive(Debug, Clone)]
pub struct PruneMask {
    pub masks: Vec<Array2<f64>>,
}

impl PruneMask {
    pub fn new(masks: Vec<Array2<f64>>) -> Result<Self> {
        for (l, m) in masks.iter().enumerate() {
            if m.iter().any(|&v| v != 0.0 && v != 1.0) {
                return Err(Error::ShapeMismatch(format!(
                    "mask for layer {l} has entries outside {{0, 1}}"
                )));
            }
        }
        Ok(Self { masks })
    }

    /// A mask that keeps every weight.
    pub fn identity(net: &Network) -> Self {
        Self {
            masks: net
                .layers
                .iter()
                .map(|l| Array2::ones(l.weights.raw_dim()))
                .collect(),
        }
    }
}

/// A labeled input.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Sample {
    pub x0: Vec<f64>,
    pub label: usize,
}

/// Logit margin `a_y - max_{k != y} a_k`; positive iff `y` wins strictly.
pub fn logit_margin(logits: &Array1<f64>, y: usize) -> Result<f64> {
    if logits.len() < 2 {
        return Err(Error::SingletonLogits);
    }
    if y >= logits.len() {
        return Err(Error::InvalidParameter(format!(
            "label {y} out of range for {} logits",
            logits.len()
        )));
    }
    let runner_up = logits
        .iter()
        .enumerate()
        .filter(|&(k, _)| k != y)
        .map(|(_, &v)| v)
        .fold(f64::NEG_INFINITY, f64::max);
    Ok(logits[y] - runner_up)
}

/// Induced infinity-to-infinity operator norm: max absolute row sum.
pub fn op_norm_inf(m: &Array2<f64>) -> f64 {
    m.rows()
        .into_iter()
        .map(|r| r.iter().map(|v| v.abs()).sum::<f64>())
        .fold(0.0, f64::max)
}

/// Split a network into its pruned version `W' = W .* M` and the residual
/// matrices `dW = W .* (1 - M)`, so `W = W' + dW` elementwise.
pub fn apply_mask(net: &Network, mask: &PruneMask) -> Result<(Network, Vec<Array2<f64>>)> {
    if mask.masks.len() != net.layers.len() {
        return Err(Error::ShapeMismatch(format!(
            "mask has {} layers, network has {}",
            mask.masks.len(),
            net.layers.len()
        )));
    }
    let mut pruned_layers = Vec::with_capacity(net.layers.len());
    let mut residuals = Vec::with_capacity(net.layers.len());
    for (l, (layer, m)) in net.layers.iter().zip(&mask.masks).enumerate() {
        if m.raw_dim() != layer.weights.raw_dim() {
            return Err(Error::ShapeMismatch(format!(
                "mask shape {:?} != weight shape {:?} at layer {l}",
                m.shape(),
                layer.weights.shape()
            )));
        }
        let kept = &layer.weights * m;
        let removed = &layer.weights - &kept;
        pruned_layers.push(Layer {
            weights: kept,
            bias: layer.bias.clone(),
        });
        residuals.push(removed);
    }
    let pruned = Network {
        input_dim: net.input_dim,
        activation: net.activation,
        layers: pruned_layers,
    };
    Ok((pruned, residuals))
}

// On-disk format. Field names are normative.
#[derive(Serialize, Deserialize)]
struct LayerFile {
    rows: usize,
    cols: usize,
    weights: Vec<f64>,
    bias: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct NetworkFile {
    input_dim: usize,
    activation: ActivationKind,
    layers: Vec<LayerFile>,
}

impl Network {
    pub fn to_json(&self) -> Result<String> {
        let file = NetworkFile {
            input_dim: self.input_dim,
            activation: self.activation,
            layers: self
                .layers
                .iter()
                .map(|l| LayerFile {
                    rows: l.weights.nrows(),
                    cols: l.weights.ncols(),
                    weights: l.weights.iter().copied().collect(),
                    bias: l.bias.to_vec(),
                })
                .collect(),
        };
        Ok(serde_json::to_string_pretty(&file)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let file: NetworkFile = serde_json::from_str(text)?;
        let mut layers = Vec::with_capacity(file.layers.len());
        for (l, lf) in file.layers.into_iter().enumerate() {
            if lf.weights.len() != lf.rows * lf.cols {
                return Err(Error::ShapeMismatch(format!(
                    "layer {l}: {} weights for {}x{}",
                    lf.weights.len(),
                    lf.rows,
                    lf.cols
                )));
            }
            let weights = Array2::from_shape_vec((lf.rows, lf.cols), lf.weights)
                .map_err(|e| Error::ShapeMismatch(e.to_string()))?;
            layers.push(Layer::new(weights, Array1::from(lf.bias))?);
        }
        Network::new(file.input_dim, file.activation, layers)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use ndarray::array;
    use proptest::prelude::*;
    use rand::prelude::*;
    use rand_chacha::ChaCha8Rng;

    fn tiny_relu_net() -> Network {
        Network::new(
            1,
            ActivationKind::Relu,
            vec![
                Layer::new(array![[2.0]], array![-1.0]).unwrap(),
                Layer::new(array![[1.0]], array![0.0]).unwrap(),
            ],
        )
        .unwrap()
    }

    use crate::testutil::random_net;

    #[test]
    fn forward_matches_hand_computation() {
        let net = tiny_relu_net();
        assert_eq!(net.forward(&array![1.0]).unwrap(), array![1.0]);
        assert_eq!(net.forward(&array![0.0]).unwrap(), array![0.0]);
    }

    #[test]
    fn forward_dimension_mismatch_names_layer() {
        let net = tiny_relu_net();
        let err = net.forward(&array![1.0, 2.0]).unwrap_err();
        assert!(matches!(err, Error::DimensionMismatch { layer: 0, .. }));
    }

    /// Independent forward implementation: plain nested loops, no ndarray ops.
    fn forward_oracle(net: &Network, x: &[f64]) -> Vec<f64> {
        let mut h: Vec<f64> = x.to_vec();
        for (l, layer) in net.layers.iter().enumerate() {
            let mut out = vec![0.0; layer.out_dim()];
            for j in 0..layer.out_dim() {
                let mut z = layer.bias[j];
                for k in 0..layer.in_dim() {
                    z += layer.weights[[j, k]] * h[k];
                }
                out[j] = net.activation_at(l).eval(z);
            }
            h = out;
        }
        h
    }

    #[test]
    fn forward_matches_independent_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..20 {
            let net = random_net(&mut rng, &[2, 2, 2], ActivationKind::Relu);
            let x = Array1::from_shape_fn(2, |_| rng.random_range(-2.0..2.0));
            let got = net.forward(&x).unwrap();
            let want = forward_oracle(&net, x.as_slice().unwrap());
            for (g, w) in got.iter().zip(&want) {
                assert_abs_diff_eq!(g, w, epsilon = 1e-12);
            }
        }
    }

    #[test]
    fn margin_basic_cases() {
        assert_eq!(logit_margin(&array![2.0, 5.0, 1.0], 1).unwrap(), 3.0);
        assert_eq!(logit_margin(&array![2.0, 2.0], 0).unwrap(), 0.0);
        assert!(matches!(
            logit_margin(&array![1.0], 0),
            Err(Error::SingletonLogits)
        ));
    }

    #[test]
    fn margin_matches_brute_force() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..50 {
            let logits = Array1::from_shape_fn(5, |_| rng.random_range(-4.0..4.0));
            for y in 0..5 {
                let brute = (0..5)
                    .filter(|&k| k != y)
                    .map(|k| logits[k])
                    .fold(f64::NEG_INFINITY, f64::max);
                assert_eq!(logit_margin(&logits, y).unwrap(), logits[y] - brute);
            }
        }
    }

    #[test]
    fn op_norm_inf_cases() {
        assert_eq!(op_norm_inf(&array![[1.0, -2.0], [3.0, 0.0]]), 3.0);
        assert_eq!(op_norm_inf(&Array2::zeros((3, 3))), 0.0);
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let m = Array2::from_shape_fn((4, 4), |_| rng.random_range(-2.0..2.0f64));
        let brute = (0..4)
            .map(|i| (0..4).map(|j| m[[i, j]].abs()).sum::<f64>())
            .fold(0.0, f64::max);
        assert_eq!(op_norm_inf(&m), brute);
    }

    #[test]
    fn apply_mask_cases() {
        let net = Network::new(
            2,
            ActivationKind::Relu,
            vec![Layer::new(array![[1.0, 1.0]], array![0.0]).unwrap()],
        )
        .unwrap();
        let mask = PruneMask::new(vec![array![[1.0, 0.0]]]).unwrap();
        let (pruned, residual) = apply_mask(&net, &mask).unwrap();
        assert_eq!(pruned.layers[0].weights, array![[1.0, 0.0]]);
        assert_eq!(residual[0], array![[0.0, 1.0]]);

        let all_ones = PruneMask::identity(&net);
        let (same, zero) = apply_mask(&net, &all_ones).unwrap();
        assert_eq!(same.layers[0].weights, net.layers[0].weights);
        assert!(zero[0].iter().all(|&v| v == 0.0));
    }

    #[test]
    fn mask_reconstruction_random() {
        let mut rng = ChaCha8Rng::seed_from_u64(19);
        for _ in 0..10 {
            let net = random_net(&mut rng, &[3, 4, 2], ActivationKind::Tanh);
            let mask = PruneMask::new(
                net.layers
                    .iter()
                    .map(|l| {
                        Array2::from_shape_fn(l.weights.raw_dim(), |_| {
                            if rng.random_bool(0.5) {
                                1.0
                            } else {
                                0.0
                            }
                        })
                    })
                    .collect(),
            )
            .unwrap();
            let (pruned, residual) = apply_mask(&net, &mask).unwrap();
            for l in 0..net.layers.len() {
                let recon = &pruned.layers[l].weights + &residual[l];
                assert_eq!(recon, net.layers[l].weights);
            }
        }
    }

    #[test]
    fn json_round_trip_is_exact() {
        let mut rng = ChaCha8Rng::seed_from_u64(23);
        let net = random_net(&mut rng, &[4, 3, 2], ActivationKind::Sigmoid);
        let text = net.to_json().unwrap();
        assert!(text.contains("\"input_dim\""));
        assert!(text.contains("\"activation\""));
        assert!(text.contains("\"weights\""));
        let back = Network::from_json(&text).unwrap();
        assert_eq!(net, back);
    }

    #[test]
    fn per_layer_lipschitz_after_normalization() {
        // After dividing by op_norm_inf(W), a single layer is 1-Lipschitz
        // in the infinity norm for every supported activation.
        let mut rng = ChaCha8Rng::seed_from_u64(31);
        for act in [
            ActivationKind::Relu,
            ActivationKind::Hardtanh,
            ActivationKind::Sigmoid,
        ] {
            let w = Array2::from_shape_fn((3, 3), |_| rng.random_range(-2.0..2.0));
            let b = Array1::from_shape_fn(3, |_| rng.random_range(-1.0..1.0));
            let norm = op_norm_inf(&w);
            for _ in 0..200 {
                let x: Array1<f64> = Array1::from_shape_fn(3, |_| rng.random_range(-2.0..2.0));
                let y: Array1<f64> = Array1::from_shape_fn(3, |_| rng.random_range(-2.0..2.0));
                let fx = (w.dot(&x) + &b).mapv(|v| act.eval(v));
                let fy = (w.dot(&y) + &b).mapv(|v| act.eval(v));
                let num = (&fx - &fy).iter().fold(0.0f64, |m, v| m.max(v.abs())) / norm;
                let den = (&x - &y).iter().fold(0.0f64, |m, v| m.max(v.abs()));
                assert!(num <= den + 1e-9);
            }
        }
    }

    proptest! {
        #[test]
        fn margin_positive_iff_unique_argmax(
            logits in proptest::collection::vec(-10.0..10.0f64, 2..6),
            y_raw in 0usize..6,
        ) {
            let y = y_raw % logits.len();
            let a = Array1::from(logits.clone());
            let m = logit_margin(&a, y).unwrap();
            let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let unique_argmax =
                logits[y] == max && logits.iter().filter(|&&v| v == max).count() == 1;
            prop_assert_eq!(m > 0.0, unique_argmax);
        }
    }
}
