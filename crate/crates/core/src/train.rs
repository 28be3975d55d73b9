//! Minimal fixture trainer: full-batch Adam on softmax cross-entropy with
//! hand-rolled backprop. Deterministic under seed; just enough to produce
//! small trained networks for verification campaigns.

use ndarray::{Array1, Array2};
use rand::prelude::*;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::net::{ActivationKind, Layer, Network, Sample};

#[derive(Debug, Clone, Copy)]
pub struct TrainConfig {
    pub epochs: usize,
    pub lr: f64,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 100,
            lr: 0.01,
            seed: 0,
        }
    }
}

fn glorot_init(rng: &mut impl Rng, dims: &[usize], activation: ActivationKind) -> Network {
    let layers = dims
        .windows(2)
        .map(|w| {
            let bound = (6.0 / (w[0] + w[1]) as f64).sqrt();
            Layer {
                weights: Array2::from_shape_fn((w[1], w[0]), |_| {
                    rng.random_range(-bound..bound)
                }),
                bias: Array1::zeros(w[1]),
            }
        })
        .collect();
    Network::new(dims[0], activation, layers).unwrap()
}

fn softmax(logits: &Array1<f64>) -> Array1<f64> {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exp = logits.mapv(|v| (v - max).exp());
    let sum = exp.sum();
    exp / sum
}

/// Fraction of samples whose argmax logit matches the label.
pub fn accuracy(net: &Network, samples: &[Sample]) -> Result<f64> {
    let mut hits = 0usize;
    for s in samples {
        let logits = net.forward(&Array1::from(s.x0.clone()))?;
        let argmax = logits
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.total_cmp(b.1))
            .map(|(i, _)| i)
            .unwrap();
        hits += usize::from(argmax == s.label);
    }
    Ok(hits as f64 / samples.len().max(1) as f64)
}

pub struct TrainOutcome {
    pub net: Network,
    pub final_loss: f64,
    pub train_accuracy: f64,
}

/// Train `dims`-shaped network on the full batch every epoch.
pub fn train_fixture(
    samples: &[Sample],
    dims: &[usize],
    activation: ActivationKind,
    cfg: &TrainConfig,
) -> Result<TrainOutcome> {
    if samples.is_empty() {
        return Err(Error::InvalidParameter("empty training set".into()));
    }
    if dims.len() < 2 {
        return Err(Error::InvalidParameter(
            "architecture needs input and output dims".into(),
        ));
    }
    if dims[0] != samples[0].x0.len() {
        return Err(Error::DimensionMismatch {
            layer: 0,
            expected: dims[0],
            got: samples[0].x0.len(),
        });
    }
    let num_classes = dims[dims.len() - 1];
    if let Some(s) = samples.iter().find(|s| s.label >= num_classes) {
        return Err(Error::InvalidParameter(format!(
            "label {} with {num_classes} output logits",
            s.label
        )));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut net = glorot_init(&mut rng, dims, activation);
    let num_layers = net.layers.len();

    // Adam moments per parameter tensor.
    let mut m_w: Vec<Array2<f64>> = net.layers.iter().map(|l| Array2::zeros(l.weights.raw_dim())).collect();
    let mut v_w = m_w.clone();
    let mut m_b: Vec<Array1<f64>> = net.layers.iter().map(|l| Array1::zeros(l.bias.len())).collect();
    let mut v_b = m_b.clone();
    let (b1, b2, eps_adam) = (0.9f64, 0.999f64, 1e-8);

    let inputs: Vec<Array1<f64>> = samples.iter().map(|s| Array1::from(s.x0.clone())).collect();
    let batch = samples.len() as f64;
    let mut loss = f64::NAN;

    for epoch in 0..cfg.epochs {
        let mut g_w: Vec<Array2<f64>> =
            net.layers.iter().map(|l| Array2::zeros(l.weights.raw_dim())).collect();
        let mut g_b: Vec<Array1<f64>> =
            net.layers.iter().map(|l| Array1::zeros(l.bias.len())).collect();
        loss = 0.0;
        for (x, s) in inputs.iter().zip(samples) {
            // Forward, keeping pre-activations and post-activations.
            let mut zs = Vec::with_capacity(num_layers);
            let mut hs = vec![x.clone()];
            for (l, layer) in net.layers.iter().enumerate() {
                let z = layer.weights.dot(hs.last().unwrap()) + &layer.bias;
                let act = net.activation_at(l);
                hs.push(z.mapv(|v| act.eval(v)));
                zs.push(z);
            }
            let probs = softmax(hs.last().unwrap());
            loss -= (probs[s.label].max(1e-300)).ln() / batch;

            // Backward.
            let mut delta = probs;
            delta[s.label] -= 1.0;
            for l in (0..num_layers).rev() {
                if l + 1 != num_layers {
                    let act = net.activation_at(l);
                    delta = &delta * &zs[l].mapv(|z| act.derivative(z));
                }
                for j in 0..net.layers[l].out_dim() {
                    g_b[l][j] += delta[j] / batch;
                    for k in 0..net.layers[l].in_dim() {
                        g_w[l][[j, k]] += delta[j] * hs[l][k] / batch;
                    }
                }
                if l > 0 {
                    delta = net.layers[l].weights.t().dot(&delta);
                }
            }
        }
        if !loss.is_finite() {
            return Err(Error::TrainingDiverged);
        }
        let t = (epoch + 1) as f64;
        let corr = |m: f64, v: f64| -> f64 {
            let m_hat = m / (1.0 - b1.powf(t));
            let v_hat = v / (1.0 - b2.powf(t));
            m_hat / (v_hat.sqrt() + eps_adam)
        };
        for l in 0..num_layers {
            for j in 0..net.layers[l].out_dim() {
                for k in 0..net.layers[l].in_dim() {
                    let g = g_w[l][[j, k]];
                    m_w[l][[j, k]] = b1 * m_w[l][[j, k]] + (1.0 - b1) * g;
                    v_w[l][[j, k]] = b2 * v_w[l][[j, k]] + (1.0 - b2) * g * g;
                    net.layers[l].weights[[j, k]] -= cfg.lr * corr(m_w[l][[j, k]], v_w[l][[j, k]]);
                }
                let g = g_b[l][j];
                m_b[l][j] = b1 * m_b[l][j] + (1.0 - b1) * g;
                v_b[l][j] = b2 * v_b[l][j] + (1.0 - b2) * g * g;
                net.layers[l].bias[j] -= cfg.lr * corr(m_b[l][j], v_b[l][j]);
            }
        }
        if net
            .layers
            .iter()
            .any(|l| l.weights.iter().chain(l.bias.iter()).any(|v| !v.is_finite()))
        {
            return Err(Error::TrainingDiverged);
        }
    }
    let train_accuracy = accuracy(&net, samples)?;
    Ok(TrainOutcome {
        net,
        final_loss: loss,
        train_accuracy,
    })
}
