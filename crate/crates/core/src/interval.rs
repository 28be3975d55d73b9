//! Interval bound propagation through the network.
//!
//! Produces sound per-layer pre/post-activation boxes over an input box,
//! feasibility masks over activation segments, and the per-layer
//! activation-norm bounds used by the pruning-transfer certificate.

use ndarray::Array1;

use crate::error::{Error, Result};
use crate::net::Network;
use crate::pwl::SegmentTable;

/// Per-layer interval enclosures over an input box.
#[derive(Debug, Clone)]
pub struct IntervalBounds {
    pub input_lo: Array1<f64>,
    pub input_hi: Array1<f64>,
    /// Pre-activation intervals per layer.
    pub z_lo: Vec<Array1<f64>>,
    pub z_hi: Vec<Array1<f64>>,
    /// Post-activation intervals per layer (logits for the final layer).
    pub a_lo: Vec<Array1<f64>>,
    pub a_hi: Vec<Array1<f64>>,
}

/// Propagate the l-infinity ball `[x0 - eps, x0 + eps]` through the network.
pub fn propagate(net: &Network, x0: &Array1<f64>, eps: f64) -> Result<IntervalBounds> {
    if eps < 0.0 {
        return Err(Error::InvalidParameter(format!("eps must be >= 0, got {eps}")));
    }
    propagate_box(net, &x0.mapv(|v| v - eps), &x0.mapv(|v| v + eps))
}

/// Propagate an arbitrary input box. Used directly by the layerwise
/// partition mode, where the suffix input is a prefix reachability box.
pub fn propagate_box(net: &Network, lo: &Array1<f64>, hi: &Array1<f64>) -> Result<IntervalBounds> {
    if lo.len() != net.input_dim || hi.len() != net.input_dim {
        return Err(Error::DimensionMismatch {
            layer: 0,
            expected: net.input_dim,
            got: lo.len(),
        });
    }
    let mut a_lo_prev = lo.clone();
    let mut a_hi_prev = hi.clone();
    let mut bounds = IntervalBounds {
        input_lo: lo.clone(),
        input_hi: hi.clone(),
        z_lo: Vec::with_capacity(net.layers.len()),
        z_hi: Vec::with_capacity(net.layers.len()),
        a_lo: Vec::with_capacity(net.layers.len()),
        a_hi: Vec::with_capacity(net.layers.len()),
    };
    for (l, layer) in net.layers.iter().enumerate() {
        let n = layer.out_dim();
        let mut z_lo = Array1::zeros(n);
        let mut z_hi = Array1::zeros(n);
        for j in 0..n {
            // Sign-split sum: min/max of w.a over the previous box.
            let mut lo_acc = layer.bias[j];
            let mut hi_acc = layer.bias[j];
            for k in 0..layer.in_dim() {
                let w = layer.weights[[j, k]];
                if w >= 0.0 {
                    lo_acc += w * a_lo_prev[k];
                    hi_acc += w * a_hi_prev[k];
                } else {
                    lo_acc += w * a_hi_prev[k];
                    hi_acc += w * a_lo_prev[k];
                }
            }
            z_lo[j] = lo_acc;
            z_hi[j] = hi_acc;
        }
        // All supported activations are monotone, so the image of an
        // interval is the interval of endpoint images.
        let act = net.activation_at(l);
        let a_lo = z_lo.mapv(|v| act.eval(v));
        let a_hi = z_hi.mapv(|v| act.eval(v));
        bounds.z_lo.push(z_lo);
        bounds.z_hi.push(z_hi);
        bounds.a_lo.push(a_lo.clone());
        bounds.a_hi.push(a_hi.clone());
        a_lo_prev = a_lo;
        a_hi_prev = a_hi;
    }
    Ok(bounds)
}

/// Which segments of `table` can a pre-activation confined to `[z_lo, z_hi]`
/// actually select. Segment i is infeasible exactly when the interval does
/// not intersect `[M_{i-1}, M_i]`.
pub fn feasible_segments(z_lo: f64, z_hi: f64, table: &SegmentTable) -> Result<Vec<bool>> {
    let bp = &table.breakpoints;
    let (bp_lo, bp_hi) = (bp[0], bp[bp.len() - 1]);
    if z_lo < bp_lo - 1e-12 || z_hi > bp_hi + 1e-12 {
        return Err(Error::BreakpointCoverage {
            lo: z_lo,
            hi: z_hi,
            bp_lo,
            bp_hi,
        });
    }
    Ok((0..table.num_segments())
        .map(|i| !(z_hi < bp[i] || z_lo > bp[i + 1]))
        .collect())
}

/// Per-layer sup bound on the post-activation infinity norm over the box,
/// with index 0 holding the input-box bound.
pub fn activation_sup_bounds(bounds: &IntervalBounds) -> Vec<f64> {
    let sup = |lo: &Array1<f64>, hi: &Array1<f64>| {
        lo.iter()
            .zip(hi)
            .map(|(&l, &h)| l.abs().max(h.abs()))
            .fold(0.0f64, f64::max)
    };
    let mut h = vec![sup(&bounds.input_lo, &bounds.input_hi)];
    for l in 0..bounds.a_lo.len() {
        h.push(sup(&bounds.a_lo[l], &bounds.a_hi[l]));
    }
    h
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::net::{ActivationKind, Layer, Network};
    use crate::testutil::random_net;
    use approx::assert_abs_diff_eq;
    use ndarray::array;
    use rand::prelude::*;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn sign_split_sum_example() {
        let net = Network::new(
            2,
            ActivationKind::Identity,
            vec![Layer::new(array![[1.0, -1.0]], array![0.0]).unwrap()],
        )
        .unwrap();
        let b = propagate(&net, &array![0.0, 0.0], 1.0).unwrap();
        assert_eq!(b.z_lo[0][0], -2.0);
        assert_eq!(b.z_hi[0][0], 2.0);
    }

    #[test]
    fn relu_interval_example() {
        let net = Network::new(
            1,
            ActivationKind::Relu,
            vec![
                Layer::new(array![[2.0]], array![-1.0]).unwrap(),
                Layer::new(array![[1.0]], array![0.0]).unwrap(),
            ],
        )
        .unwrap();
        let b = propagate(&net, &array![1.0], 0.5).unwrap();
        assert_eq!((b.z_lo[0][0], b.z_hi[0][0]), (0.0, 2.0));
        assert_eq!((b.a_lo[0][0], b.a_hi[0][0]), (0.0, 2.0));
    }

    fn sample_in_box(rng: &mut impl Rng, lo: &Array1<f64>, hi: &Array1<f64>) -> Array1<f64> {
        Array1::from_shape_fn(lo.len(), |i| {
            if lo[i] == hi[i] {
                lo[i]
            } else {
                rng.random_range(lo[i]..hi[i])
            }
        })
    }

    #[test]
    fn monte_carlo_containment_all_activations() {
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        for act in [
            ActivationKind::Relu,
            ActivationKind::Hardtanh,
            ActivationKind::Sigmoid,
            ActivationKind::Tanh,
        ] {
            let net = random_net(&mut rng, &[2, 3, 2], act);
            let x0 = array![0.3, -0.2];
            let eps = 0.4;
            let b = propagate(&net, &x0, eps).unwrap();
            for _ in 0..10_000 {
                let x = sample_in_box(&mut rng, &b.input_lo, &b.input_hi);
                let trace = net.forward_trace(&x).unwrap();
                for (l, h) in trace.iter().enumerate() {
                    for j in 0..h.len() {
                        assert!(h[j] >= b.a_lo[l][j] - 1e-9 && h[j] <= b.a_hi[l][j] + 1e-9);
                    }
                }
            }
        }
    }

    #[test]
    fn monotone_in_eps() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let net = random_net(&mut rng, &[3, 4, 2], ActivationKind::Tanh);
        let x0 = array![0.1, 0.2, -0.3];
        let small = propagate(&net, &x0, 0.1).unwrap();
        let big = propagate(&net, &x0, 0.3).unwrap();
        for l in 0..net.layers.len() {
            for j in 0..net.layers[l].out_dim() {
                assert!(small.z_lo[l][j] >= big.z_lo[l][j]);
                assert!(small.z_hi[l][j] <= big.z_hi[l][j]);
            }
        }
    }

    #[test]
    fn eps_zero_is_exact_forward() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let net = random_net(&mut rng, &[2, 3, 2], ActivationKind::Sigmoid);
        let x0 = array![0.4, -0.7];
        let b = propagate(&net, &x0, 0.0).unwrap();
        let trace = net.forward_trace(&x0).unwrap();
        for (l, h) in trace.iter().enumerate() {
            for j in 0..h.len() {
                assert_abs_diff_eq!(b.a_lo[l][j], h[j], epsilon = 1e-12);
                assert_abs_diff_eq!(b.a_hi[l][j], h[j], epsilon = 1e-12);
            }
        }
    }

    #[test]
    fn feasible_segments_cases() {
        let table = SegmentTable::new(
            vec![-1.0, 0.0, 1.0],
            vec![(0.0, 0.0), (1.0, 0.0)],
        )
        .unwrap();
        assert_eq!(feasible_segments(0.3, 0.9, &table).unwrap(), vec![false, true]);
        assert_eq!(feasible_segments(-0.5, 0.5, &table).unwrap(), vec![true, true]);
        assert!(matches!(
            feasible_segments(-2.0, 0.5, &table),
            Err(Error::BreakpointCoverage { .. })
        ));
    }

    #[test]
    fn feasible_segments_matches_brute_overlap() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for _ in 0..100 {
            let mut bp: Vec<f64> = (0..7).map(|_| rng.random_range(-3.0..3.0)).collect();
            bp.sort_by(f64::total_cmp);
            bp.dedup_by(|a, b| (*a - *b).abs() < 1e-6);
            if bp.len() < 3 {
                continue;
            }
            let segs = (0..bp.len() - 1).map(|_| (0.0, 0.0)).collect();
            let table = SegmentTable::new(bp.clone(), segs).unwrap();
            let lo = rng.random_range(bp[0]..bp[bp.len() - 1]);
            let hi = rng.random_range(lo..bp[bp.len() - 1]);
            let got = feasible_segments(lo, hi, &table).unwrap();
            for i in 0..bp.len() - 1 {
                let overlap = lo.max(bp[i]) <= hi.min(bp[i + 1]);
                assert_eq!(got[i], overlap, "segment {i}");
            }
        }
    }

    #[test]
    fn sup_bounds_cases() {
        let b = IntervalBounds {
            input_lo: array![-1.0, -1.0],
            input_hi: array![1.0, 1.0],
            z_lo: vec![array![0.0]],
            z_hi: vec![array![2.0]],
            a_lo: vec![array![0.0]],
            a_hi: vec![array![2.0]],
        };
        let h = activation_sup_bounds(&b);
        assert_eq!(h, vec![1.0, 2.0]);
    }

    #[test]
    fn sup_bounds_dominate_sampled_norms() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let net = random_net(&mut rng, &[2, 3, 2], ActivationKind::Relu);
        let x0 = array![0.2, -0.1];
        let b = propagate(&net, &x0, 0.3).unwrap();
        let h = activation_sup_bounds(&b);
        for _ in 0..10_000 {
            let x = sample_in_box(&mut rng, &b.input_lo, &b.input_hi);
            let trace = net.forward_trace(&x).unwrap();
            for (l, hv) in trace.iter().enumerate() {
                let norm = hv.iter().fold(0.0f64, |m, v| m.max(v.abs()));
                assert!(h[l + 1] >= norm - 1e-12);
            }
        }
    }
}
