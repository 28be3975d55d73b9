//! Sound over-approximation of networks with arbitrary monotone
//! activations.
//!
//! Each activation is enclosed between piecewise-constant lower and upper
//! step functions; separate binary families select the step for the lower
//! and upper tracks, which propagate through sign-split weight copies. The
//! optimum is a certified lower bound on the true minimum margin, and
//! tightens as the step count grows.

use ndarray::{Array1, Array2};

use crate::error::{Error, Result};
use crate::interval::{self, IntervalBounds};
use crate::net::{ActivationKind, Network};
use crate::pwl::DEGENERATE_TOL;
use crate::system::{self, MixedConstraintSystem, OneHotGroup, VariableLayout};

/// Per-segment constant enclosure of an activation: on segment `i`
/// (between breakpoints `i` and `i+1`), `gamma_lo[i] <= sigma(z) <=
/// gamma_hi[i]`.
#[derive(Debug, Clone)]
pub struct StepBoundTable {
    pub breakpoints: Vec<f64>,
    pub gamma_lo: Vec<f64>,
    pub gamma_hi: Vec<f64>,
}

impl StepBoundTable {
    pub fn num_segments(&self) -> usize {
        self.gamma_lo.len()
    }

    /// Largest per-segment enclosure width.
    pub fn max_gap(&self) -> f64 {
        self.gamma_lo
            .iter()
            .zip(&self.gamma_hi)
            .map(|(l, h)| h - l)
            .fold(0.0, f64::max)
    }

    /// Segment index containing `z` (clamped to the covered range).
    pub fn segment_of(&self, z: f64) -> usize {
        let n = self.num_segments();
        for i in 0..n {
            if z <= self.breakpoints[i + 1] {
                return i;
            }
        }
        n - 1
    }
}

/// Uniform-width step enclosure of `act` on `[z_lo, z_hi]`. Monotone
/// activations take their extrema at segment endpoints, so the table is
/// exact rather than sampled.
pub fn build_step_table(
    act: ActivationKind,
    z_lo: f64,
    z_hi: f64,
    n_segments: usize,
) -> Result<StepBoundTable> {
    if n_segments == 0 {
        return Err(Error::InvalidParameter("n_segments must be >= 1".into()));
    }
    if !(z_lo < z_hi) {
        return Err(Error::InvalidSegments(format!(
            "need z_lo < z_hi, got [{z_lo}, {z_hi}]; fold the neuron instead"
        )));
    }
    if !act.is_monotone() {
        return Err(Error::UnsupportedActivation(
            act,
            "step enclosures need a monotone activation".into(),
        ));
    }
    let breakpoints: Vec<f64> = (0..=n_segments)
        .map(|i| z_lo + (z_hi - z_lo) * i as f64 / n_segments as f64)
        .collect();
    let gamma_lo = (0..n_segments).map(|i| act.eval(breakpoints[i])).collect();
    let gamma_hi = (0..n_segments)
        .map(|i| act.eval(breakpoints[i + 1]))
        .collect();
    Ok(StepBoundTable {
        breakpoints,
        gamma_lo,
        gamma_hi,
    })
}

/// One table per neuron per layer over the propagated intervals.
/// Degenerate neurons get a widened placeholder; the encoder folds them.
pub fn default_tables_model2(
    net: &Network,
    bounds: &IntervalBounds,
    n_segments: usize,
) -> Result<Vec<Vec<StepBoundTable>>> {
    let mut out = Vec::with_capacity(net.layers.len());
    for (l, layer) in net.layers.iter().enumerate() {
        let act = net.activation_at(l);
        let mut tables = Vec::with_capacity(layer.out_dim());
        for j in 0..layer.out_dim() {
            let (mut lo, mut hi) = (bounds.z_lo[l][j], bounds.z_hi[l][j]);
            if hi - lo < DEGENERATE_TOL {
                lo -= 0.5;
                hi += 0.5;
            }
            tables.push(build_step_table(act, lo, hi, n_segments)?);
        }
        out.push(tables);
    }
    Ok(out)
}

#[derive(Clone, Copy, PartialEq, Eq)]
enum Side {
    Lower,
    Upper,
}

/// Build the over-approximating system for the margin
/// `f_true(x) - f_target(x)` over the ball `|x - x0|_inf <= eps`.
/// With `one_sided` set, final-layer neurons emit only the track the
/// objective reads (lower for the true class, upper for the target) and
/// unused logits are dropped entirely.
#[allow(clippy::too_many_arguments)]
pub fn build_model2(
    net: &Network,
    x0: &Array1<f64>,
    eps: f64,
    true_class: usize,
    target_class: usize,
    tables: &[Vec<StepBoundTable>],
    bounds: &IntervalBounds,
    one_sided: bool,
) -> Result<MixedConstraintSystem> {
    build_model2_box(
        net,
        &x0.mapv(|v| v - eps),
        &x0.mapv(|v| v + eps),
        true_class,
        target_class,
        tables,
        bounds,
        one_sided,
    )
}

/// As [`build_model2`] over an arbitrary per-coordinate input box; used by
/// the layerwise partition with a prefix reachability box.
#[allow(clippy::too_many_arguments)]
pub fn build_model2_box(
    net: &Network,
    in_lo: &Array1<f64>,
    in_hi: &Array1<f64>,
    true_class: usize,
    target_class: usize,
    tables: &[Vec<StepBoundTable>],
    bounds: &IntervalBounds,
    one_sided: bool,
) -> Result<MixedConstraintSystem> {
    let num_classes = net.layers.last().map_or(0, |l| l.out_dim());
    if true_class >= num_classes || target_class >= num_classes {
        return Err(Error::ShapeMismatch(format!(
            "class pair ({true_class}, {target_class}) with {num_classes} logits"
        )));
    }
    if target_class == true_class {
        return Err(Error::TargetIsTrueClass(target_class));
    }
    if tables.len() != net.layers.len()
        || tables
            .iter()
            .zip(&net.layers)
            .any(|(t, l)| t.len() != l.out_dim())
    {
        return Err(Error::ShapeMismatch("tables do not match the layer sizes".into()));
    }
    if in_lo.len() != net.input_dim || in_hi.len() != net.input_dim {
        return Err(Error::DimensionMismatch {
            layer: 0,
            expected: net.input_dim,
            got: in_lo.len(),
        });
    }

    let last = net.layers.len() - 1;
    // Which (neuron, side) pairs exist in each layer.
    let emit = |l: usize, j: usize, side: Side| -> bool {
        if !one_sided || l != last {
            return true;
        }
        (j == true_class && side == Side::Lower) || (j == target_class && side == Side::Upper)
    };

    let mut names: Vec<String> = Vec::new();
    let mut lo_box: Vec<f64> = Vec::new();
    let mut hi_box: Vec<f64> = Vec::new();
    let mut push_col = |name: String, lo: f64, hi: f64| -> usize {
        names.push(name);
        lo_box.push(lo);
        hi_box.push(hi);
        names.len() - 1
    };
    let input_cols: Vec<usize> = (0..net.input_dim)
        .map(|j| push_col(format!("x[{j}]"), in_lo[j], in_hi[j]))
        .collect();

    let mut beta_names: Vec<String> = Vec::new();
    let mut one_hot: Vec<OneHotGroup> = Vec::new();

    // Per (layer, neuron, side): column of the post-activation track, or a
    // folded constant.
    #[derive(Clone, Copy)]
    enum Track {
        Col { a: usize },
        Const(f64),
        Absent,
    }
    // Previous layer's lower/upper post-activation references; the input
    // box serves as both tracks of "layer 0".
    let mut prev: Vec<(Track, Track)> = input_cols
        .iter()
        .map(|&c| {
            (
                Track::Col { a: c },
                Track::Col { a: c },
            )
        })
        .collect();

    struct RowAcc {
        a: Vec<(usize, usize, f64)>,
        b0: Vec<f64>,
        b: Vec<(usize, usize, f64)>,
    }
    let mut eq_pre = RowAcc { a: vec![], b0: vec![], b: vec![] };
    let mut eq_act = RowAcc { a: vec![], b0: vec![], b: vec![] };
    let mut eq_hot = RowAcc { a: vec![], b0: vec![], b: vec![] };
    let mut in_rows = RowAcc { a: vec![], b0: vec![], b: vec![] };

    for j in 0..net.input_dim {
        let r = in_rows.b0.len();
        in_rows.a.push((r, input_cols[j], 1.0));
        in_rows.b0.push(in_hi[j]);
        let r = in_rows.b0.len();
        in_rows.a.push((r, input_cols[j], -1.0));
        in_rows.b0.push(-in_lo[j]);
    }

    for (l, layer) in net.layers.iter().enumerate() {
        let act = net.activation_at(l);
        let mut this: Vec<(Track, Track)> = Vec::with_capacity(layer.out_dim());
        for j in 0..layer.out_dim() {
            let (z_lo, z_hi) = (bounds.z_lo[l][j], bounds.z_hi[l][j]);
            if z_hi - z_lo < DEGENERATE_TOL {
                let v = act.eval(0.5 * (z_lo + z_hi));
                this.push((Track::Const(v), Track::Const(v)));
                continue;
            }
            let table = &tables[l][j];
            if (table.breakpoints[0] > z_lo + 1e-12)
                || (*table.breakpoints.last().unwrap() < z_hi - 1e-12)
            {
                return Err(Error::BreakpointCoverage {
                    lo: z_lo,
                    hi: z_hi,
                    bp_lo: table.breakpoints[0],
                    bp_hi: *table.breakpoints.last().unwrap(),
                });
            }
            let kept: Vec<usize> = (0..table.num_segments())
                .filter(|&i| !(z_hi < table.breakpoints[i] || z_lo > table.breakpoints[i + 1]))
                .collect();
            let mut tracks = (Track::Absent, Track::Absent);
            for side in [Side::Lower, Side::Upper] {
                if !emit(l, j, side) {
                    continue;
                }
                let tag = if side == Side::Lower { "lo" } else { "hi" };
                let gammas: &[f64] = if side == Side::Lower {
                    &table.gamma_lo
                } else {
                    &table.gamma_hi
                };
                let (a_min, a_max) = kept.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |m, &i| {
                    (m.0.min(gammas[i]), m.1.max(gammas[i]))
                });
                let z_col = push_col(format!("z{tag}{}[{j}]", l + 1), z_lo, z_hi);
                let a_col = push_col(format!("a{tag}{}[{j}]", l + 1), a_min, a_max);
                let beta_cols: Vec<usize> = kept
                    .iter()
                    .map(|&i| {
                        beta_names.push(format!("b{tag}{}[{j},{i}]", l + 1));
                        beta_names.len() - 1
                    })
                    .collect();
                one_hot.push(OneHotGroup {
                    cols: beta_cols.clone(),
                    label: format!("z{tag}{}[{j}]", l + 1),
                });

                // Pre-activation track: lower uses W+ on the lower previous
                // track and W- on the upper; the upper track mirrors it.
                let r = eq_pre.b0.len();
                eq_pre.a.push((r, z_col, 1.0));
                let mut rhs = layer.bias[j];
                for (k, &(pl, pu)) in prev.iter().enumerate() {
                    let w = layer.weights[[j, k]];
                    if w == 0.0 {
                        continue;
                    }
                    let same_sign = (w >= 0.0) == (side == Side::Lower);
                    let src = if same_sign { pl } else { pu };
                    match src {
                        Track::Col { a, .. } => eq_pre.a.push((r, a, -w)),
                        Track::Const(v) => rhs += w * v,
                        Track::Absent => {
                            return Err(Error::Internal(
                                "pre-activation references a dropped track".into(),
                            ))
                        }
                    }
                }
                eq_pre.b0.push(rhs);

                // Activation track: a = sum gamma_i beta_i.
                let r = eq_act.b0.len();
                eq_act.a.push((r, a_col, 1.0));
                for (pos, &i) in kept.iter().enumerate() {
                    if gammas[i] != 0.0 {
                        eq_act.b.push((r, beta_cols[pos], gammas[i]));
                    }
                }
                eq_act.b0.push(0.0);

                // One-hot.
                let r = eq_hot.b0.len();
                for &bc in &beta_cols {
                    eq_hot.b.push((r, bc, -1.0));
                }
                eq_hot.b0.push(1.0);

                // Segment membership.
                let r = in_rows.b0.len();
                in_rows.a.push((r, z_col, -1.0));
                for (pos, &i) in kept.iter().enumerate() {
                    in_rows.b.push((r, beta_cols[pos], -table.breakpoints[i]));
                }
                in_rows.b0.push(0.0);
                let r = in_rows.b0.len();
                in_rows.a.push((r, z_col, 1.0));
                for (pos, &i) in kept.iter().enumerate() {
                    in_rows.b.push((r, beta_cols[pos], table.breakpoints[i + 1]));
                }
                in_rows.b0.push(0.0);

                let _ = z_col;
                let t = Track::Col { a: a_col };
                if side == Side::Lower {
                    tracks.0 = t;
                } else {
                    tracks.1 = t;
                }
            }
            this.push(tracks);
        }
        prev = this;
    }

    let n = names.len();
    let p = beta_names.len();
    let mut objective = Array1::zeros(n);
    let mut objective_offset = 0.0;
    match prev[true_class].0 {
        Track::Col { a, .. } => objective[a] += 1.0,
        Track::Const(v) => objective_offset += v,
        Track::Absent => return Err(Error::Internal("true-class track missing".into())),
    }
    match prev[target_class].1 {
        Track::Col { a, .. } => objective[a] -= 1.0,
        Track::Const(v) => objective_offset -= v,
        Track::Absent => return Err(Error::Internal("target-class track missing".into())),
    }

    let m_e = eq_pre.b0.len() + eq_act.b0.len() + eq_hot.b0.len();
    let mut a_eq = Array2::zeros((m_e, n));
    let mut b_coef = Array2::zeros((m_e, p));
    let mut b0 = Array1::zeros(m_e);
    let mut off = 0;
    for acc in [&eq_pre, &eq_act, &eq_hot] {
        for &(r, c, v) in &acc.a {
            a_eq[[off + r, c]] += v;
        }
        for &(r, c, v) in &acc.b {
            b_coef[[off + r, c]] += v;
        }
        for (r, &v) in acc.b0.iter().enumerate() {
            b0[off + r] = v;
        }
        off += acc.b0.len();
    }
    let m_c = in_rows.b0.len();
    let mut c_in = Array2::zeros((m_c, n));
    let mut d_coef = Array2::zeros((m_c, p));
    for &(r, c, v) in &in_rows.a {
        c_in[[r, c]] += v;
    }
    for &(r, c, v) in &in_rows.b {
        d_coef[[r, c]] += v;
    }
    let d0 = Array1::from(in_rows.b0);

    Ok(MixedConstraintSystem {
        objective,
        objective_offset,
        a_eq,
        b0,
        b_coef,
        c_in,
        d0,
        d_coef,
        one_hot,
        layout: VariableLayout {
            names,
            lo: lo_box,
            hi: hi_box,
            input_cols,
            beta_names,
        },
    })
}

/// Outcome of the segment-refinement loop.
#[derive(Debug)]
pub struct RefineResult {
    pub system: MixedConstraintSystem,
    pub lower: f64,
    pub upper: f64,
    pub gap: f64,
    pub n_used: usize,
    /// `(segments, gap)` at each refinement step.
    pub trajectory: Vec<(usize, f64)>,
    /// False when `n_max` was reached with the gap still above target.
    pub complete: bool,
}

/// Double the segment count until the certified lower bound and the
/// replayed upper bound are within `target_gap`. The upper bound comes from
/// running the network on the decoded input of the certified optimum, so
/// both bounds bracket the true minimum margin.
#[allow(clippy::too_many_arguments)]
pub fn refine_until(
    net: &Network,
    x0: &Array1<f64>,
    eps: f64,
    true_class: usize,
    target_class: usize,
    target_gap: f64,
    n_start: usize,
    n_max: usize,
) -> Result<RefineResult> {
    if target_gap <= 0.0 || n_start == 0 || n_max < n_start {
        return Err(Error::InvalidParameter(format!(
            "refinement wants target_gap > 0 and 1 <= n_start <= n_max, got \
             ({target_gap}, {n_start}, {n_max})"
        )));
    }
    let bounds = interval::propagate(net, x0, eps)?;
    let mut trajectory = Vec::new();
    let mut n = n_start;
    loop {
        let tables = default_tables_model2(net, &bounds, n)?;
        let system = build_model2(
            net,
            x0,
            eps,
            true_class,
            target_class,
            &tables,
            &bounds,
            true,
        )?;
        let res = system::solve_enumerate(&system)?;
        let lower = res.objective;
        let x = Array1::from_iter(system.layout.input_cols.iter().map(|&c| res.best_y[c]));
        let logits = net.forward(&x)?;
        let upper = logits[true_class] - logits[target_class];
        let gap = upper - lower;
        trajectory.push((n, gap));
        let complete = gap <= target_gap;
        if complete || n.saturating_mul(2) > n_max {
            return Ok(RefineResult {
                system,
                lower,
                upper,
                gap,
                n_used: n,
                trajectory,
                complete,
            });
        }
        n *= 2;
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::net::{Layer, Network};
    use crate::system::solve_enumerate;
    use crate::testutil::random_net_scaled;
    use approx::assert_abs_diff_eq;
    use ndarray::array;
    use rand::prelude::*;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn sigmoid_single_segment_table() {
        let t = build_step_table(ActivationKind::Sigmoid, 0.0, 1.0, 1).unwrap();
        assert_abs_diff_eq!(t.gamma_lo[0], 0.5, epsilon = 1e-15);
        assert_abs_diff_eq!(t.gamma_hi[0], 1.0 / (1.0 + (-1.0f64).exp()), epsilon = 1e-15);
    }

    #[test]
    fn identity_two_segment_table() {
        let t = build_step_table(ActivationKind::Identity, 0.0, 2.0, 2).unwrap();
        assert_eq!(t.gamma_lo, vec![0.0, 1.0]);
        assert_eq!(t.gamma_hi, vec![1.0, 2.0]);
        // Per-segment gap (z_hi - z_lo)/n for linear activations.
        assert_eq!(t.max_gap(), 1.0);
    }

    #[test]
    fn tanh_two_segment_table() {
        let t = build_step_table(ActivationKind::Tanh, -1.0, 1.0, 2).unwrap();
        assert_eq!(t.gamma_lo, vec![(-1.0f64).tanh(), 0.0]);
        assert_eq!(t.gamma_hi, vec![0.0, 1.0f64.tanh()]);
    }

    #[test]
    fn table_encloses_activation_densely() {
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        for act in [
            ActivationKind::Sigmoid,
            ActivationKind::Tanh,
            ActivationKind::Relu,
        ] {
            for _ in 0..20 {
                let lo = rng.random_range(-3.0..0.0);
                let hi = rng.random_range(lo + 0.2..3.0);
                let n = rng.random_range(1..=7);
                let t = build_step_table(act, lo, hi, n).unwrap();
                for i in 0..n {
                    for k in 0..=1000 {
                        let z = t.breakpoints[i]
                            + (t.breakpoints[i + 1] - t.breakpoints[i]) * k as f64 / 1000.0;
                        let v = act.eval(z);
                        assert!(t.gamma_lo[i] <= v + 1e-12 && v <= t.gamma_hi[i] + 1e-12);
                    }
                }
            }
        }
    }

    /// Frozen sizing on 1-2-2 sigmoid with n = 2: per neuron both sides
    /// carry 2 z + 2 a columns, 2n selectors, 6 equality rows, 4 segment
    /// rows. The 1-2-1 instantiation (3 neurons) gives continuous 13,
    /// beta 12, equalities 18, inequalities 14.
    #[test]
    fn frozen_dimension_counts() {
        let net = Network::new(
            1,
            ActivationKind::Sigmoid,
            vec![
                Layer::new(array![[1.0], [-1.0]], array![0.1, -0.1]).unwrap(),
                Layer::new(array![[1.0, -0.5], [0.3, 0.8]], array![0.0, 0.1]).unwrap(),
            ],
        )
        .unwrap();
        let x0 = array![0.0];
        let bounds = interval::propagate(&net, &x0, 1.0).unwrap();
        let tables = default_tables_model2(&net, &bounds, 2).unwrap();
        let sys = build_model2(&net, &x0, 1.0, 0, 1, &tables, &bounds, false).unwrap();
        let neurons = 4;
        assert_eq!(sys.layout.num_continuous(), 1 + 4 * neurons);
        assert_eq!(sys.layout.num_beta(), 2 * 2 * neurons);
        assert_eq!(sys.num_eq_rows(), 6 * neurons);
        assert_eq!(sys.num_ineq_rows(), 2 + 4 * neurons);
        assert_eq!(1 + 4 * 3, 13);
        assert_eq!(2 * 2 * 3, 12);
        assert_eq!(6 * 3, 18);
        assert_eq!(2 + 4 * 3, 14);

        // One-sided: the final layer keeps one track per referenced class.
        let one = build_model2(&net, &x0, 1.0, 0, 1, &tables, &bounds, true).unwrap();
        assert_eq!(one.layout.num_continuous(), 1 + 4 * 2 + 2 * 2);
        assert_eq!(one.layout.num_beta(), 2 * 2 * 2 + 2 * 2);
    }

    #[test]
    fn certified_bound_is_sound_against_sampling() {
        let mut rng = ChaCha8Rng::seed_from_u64(23);
        for act in [ActivationKind::Sigmoid, ActivationKind::Tanh] {
            let net = random_net_scaled(&mut rng, &[2, 2, 2], act, 1.0);
            let x0 = array![0.2, -0.1];
            let eps = 0.3;
            let bounds = interval::propagate(&net, &x0, eps).unwrap();
            for n in [1usize, 2, 4] {
                let tables = default_tables_model2(&net, &bounds, n).unwrap();
                let sys =
                    build_model2(&net, &x0, eps, 0, 1, &tables, &bounds, true).unwrap();
                let lower = solve_enumerate(&sys).unwrap().objective;
                for _ in 0..10_000 {
                    let x = Array1::from_shape_fn(2, |j| {
                        rng.random_range(x0[j] - eps..x0[j] + eps)
                    });
                    let logits = net.forward(&x).unwrap();
                    let margin = logits[0] - logits[1];
                    assert!(
                        margin >= lower - 1e-9,
                        "{act:?} n={n}: margin {margin} below bound {lower}"
                    );
                }
            }
        }
    }

    #[test]
    fn doubling_segments_never_loosens() {
        let mut rng = ChaCha8Rng::seed_from_u64(29);
        for _ in 0..5 {
            let net = random_net_scaled(&mut rng, &[1, 2, 2], ActivationKind::Sigmoid, 1.5);
            let x0 = array![rng.random_range(-0.4..0.4)];
            let eps = 0.3;
            let bounds = interval::propagate(&net, &x0, eps).unwrap();
            let mut prev = f64::NEG_INFINITY;
            for n in [2usize, 4, 8] {
                let tables = default_tables_model2(&net, &bounds, n).unwrap();
                let sys =
                    build_model2(&net, &x0, eps, 0, 1, &tables, &bounds, true).unwrap();
                let lower = solve_enumerate(&sys).unwrap().objective;
                assert!(
                    lower >= prev - 1e-9,
                    "n={n} loosened the bound: {lower} < {prev}"
                );
                prev = lower;
            }
        }
    }

    #[test]
    fn single_neuron_chain_brackets_grid_optimum() {
        let net = Network::new(
            1,
            ActivationKind::Sigmoid,
            vec![
                Layer::new(array![[1.3]], array![-0.2]).unwrap(),
                Layer::new(array![[2.0], [-1.0]], array![0.1, 0.4]).unwrap(),
            ],
        )
        .unwrap();
        let x0 = array![0.1];
        let eps = 0.5;
        let bounds = interval::propagate(&net, &x0, eps).unwrap();
        let mut grid_min = f64::INFINITY;
        for k in 0..=100_000 {
            let x = array![x0[0] - eps + 2.0 * eps * k as f64 / 100_000.0];
            let logits = net.forward(&x).unwrap();
            grid_min = grid_min.min(logits[0] - logits[1]);
        }
        for n in [2usize, 8, 32] {
            let tables = default_tables_model2(&net, &bounds, n).unwrap();
            let sys = build_model2(&net, &x0, eps, 0, 1, &tables, &bounds, true).unwrap();
            let lower = solve_enumerate(&sys).unwrap().objective;
            assert!(lower <= grid_min + 1e-9, "n={n}: {lower} > {grid_min}");
            // At n = 32 the enclosure is tight.
            if n == 32 {
                assert!(grid_min - lower < 0.1, "n=32 bound too loose: {lower} vs {grid_min}");
            }
        }
    }

    #[test]
    fn refinement_gap_shrinks() {
        let net = Network::new(
            1,
            ActivationKind::Sigmoid,
            vec![
                Layer::new(array![[1.0]], array![0.0]).unwrap(),
                Layer::new(array![[1.5], [-0.7]], array![0.0, 0.2]).unwrap(),
            ],
        )
        .unwrap();
        let x0 = array![0.0];
        let res = refine_until(&net, &x0, 0.4, 0, 1, 1e-9, 2, 16).unwrap();
        assert!(!res.complete);
        assert_eq!(res.n_used, 16);
        let gaps: Vec<f64> = res.trajectory.iter().map(|&(_, g)| g).collect();
        assert_eq!(res.trajectory.len(), 4);
        for w in gaps.windows(2) {
            assert!(w[1] < w[0], "gap did not decrease: {gaps:?}");
        }
        // Lipschitz activation on a fixed interval: quadrupling the segment
        // count cuts the enclosure gap by at least 4x.
        assert!(gaps[0] / gaps[3] >= 4.0, "ratio too small: {gaps:?}");
        assert!(res.lower <= res.upper);
    }

    #[test]
    fn refinement_meets_loose_target() {
        let net = Network::new(
            1,
            ActivationKind::Tanh,
            vec![
                Layer::new(array![[0.8]], array![0.1]).unwrap(),
                Layer::new(array![[1.0], [0.5]], array![0.3, 0.0]).unwrap(),
            ],
        )
        .unwrap();
        let x0 = array![0.2];
        let res = refine_until(&net, &x0, 0.2, 0, 1, 0.5, 2, 64).unwrap();
        assert!(res.complete);
        assert!(res.gap <= 0.5);
        assert!(res.n_used < 64);
    }
}
