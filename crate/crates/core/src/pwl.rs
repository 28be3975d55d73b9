//! Exact mixed-binary encoding of piecewise-linear networks.
//!
//! Over an l-infinity input ball, the margin between two logits is encoded
//! as a constraint system whose optimum equals the true minimum margin:
//! each neuron's activation is written segment by segment with binary
//! selectors, and the selector-times-preactivation products are linearized
//! with per-neuron big-M constants taken from interval propagation.

use ndarray::{Array1, Array2};

use crate::error::{Error, Result};
use crate::interval::{self, IntervalBounds};
use crate::net::{ActivationKind, Network};
use crate::system::{MixedConstraintSystem, OneHotGroup, VariableLayout};

/// Neurons whose pre-activation interval is at most this wide are folded
/// into constants.
pub const DEGENERATE_TOL: f64 = 1e-12;

/// Piecewise-linear description of an activation over a bounded interval:
/// breakpoints `M_0 < … < M_n` and per-segment `(slope, intercept)` pairs.
#[derive(Debug, Clone)]
pub struct SegmentTable {
    pub breakpoints: Vec<f64>,
    /// `(alpha_i, gamma_i)` per segment: value `alpha_i * z + gamma_i`.
    pub segments: Vec<(f64, f64)>,
}

impl SegmentTable {
    pub fn new(breakpoints: Vec<f64>, segments: Vec<(f64, f64)>) -> Result<Self> {
        if breakpoints.len() < 2 || segments.len() != breakpoints.len() - 1 {
            return Err(Error::InvalidSegments(format!(
                "{} breakpoints with {} segments",
                breakpoints.len(),
                segments.len()
            )));
        }
        for w in breakpoints.windows(2) {
            if !(w[0] < w[1]) {
                return Err(Error::InvalidSegments(format!(
                    "breakpoints not strictly increasing at {} >= {}",
                    w[0], w[1]
                )));
            }
        }
        // Continuity at interior breakpoints.
        for i in 0..segments.len() - 1 {
            let m = breakpoints[i + 1];
            let left = segments[i].0 * m + segments[i].1;
            let right = segments[i + 1].0 * m + segments[i + 1].1;
            let scale = 1.0 + left.abs().max(right.abs());
            if (left - right).abs() > 1e-9 * scale {
                return Err(Error::InvalidSegments(format!(
                    "discontinuity at breakpoint {m}: {left} vs {right}"
                )));
            }
        }
        Ok(SegmentTable {
            breakpoints,
            segments,
        })
    }

    pub fn num_segments(&self) -> usize {
        self.segments.len()
    }

    pub fn lo(&self) -> f64 {
        self.breakpoints[0]
    }

    pub fn hi(&self) -> f64 {
        *self.breakpoints.last().unwrap()
    }

    /// Table value at `z` (first segment containing it).
    pub fn eval(&self, z: f64) -> f64 {
        for i in 0..self.num_segments() {
            if z <= self.breakpoints[i + 1] || i == self.num_segments() - 1 {
                return self.segments[i].0 * z + self.segments[i].1;
            }
        }
        unreachable!()
    }
}

/// Minimal exact table for a piecewise-linear activation on `[z_lo, z_hi]`:
/// the activation's own kinks, clipped to the interval.
pub fn build_segment_table_pwl(act: ActivationKind, z_lo: f64, z_hi: f64) -> Result<SegmentTable> {
    if !(z_lo < z_hi) {
        return Err(Error::InvalidSegments(format!(
            "need z_lo < z_hi, got [{z_lo}, {z_hi}]; fold the neuron instead"
        )));
    }
    let kinks: &[f64] = match act {
        ActivationKind::Relu => &[0.0],
        ActivationKind::Hardtanh => &[-1.0, 1.0],
        ActivationKind::Identity => &[],
        _ => {
            return Err(Error::UnsupportedActivation(
                act,
                "not piecewise-linear; use the step-bound relaxation".into(),
            ))
        }
    };
    let mut bp = vec![z_lo];
    for &k in kinks {
        if k > z_lo && k < z_hi {
            bp.push(k);
        }
    }
    bp.push(z_hi);
    let segments = bp
        .windows(2)
        .map(|w| {
            // Exact chord on a segment with no interior kink.
            let (a, b) = (w[0], w[1]);
            let (fa, fb) = (act.eval(a), act.eval(b));
            let slope = (fb - fa) / (b - a);
            (slope, fa - slope * a)
        })
        .collect();
    SegmentTable::new(bp, segments)
}

/// One exact table per neuron (inner index) per layer (outer index), built
/// from the propagated pre-activation intervals. Degenerate neurons get a
/// widened placeholder table; the encoder folds them before looking.
pub fn default_tables_model1(
    net: &Network,
    bounds: &IntervalBounds,
) -> Result<Vec<Vec<SegmentTable>>> {
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
            tables.push(build_segment_table_pwl(act, lo, hi)?);
        }
        out.push(tables);
    }
    Ok(out)
}

/// Column bookkeeping while assembling the system.
struct Columns {
    names: Vec<String>,
    lo: Vec<f64>,
    hi: Vec<f64>,
}

impl Columns {
    fn push(&mut self, name: String, lo: f64, hi: f64) -> usize {
        self.names.push(name);
        self.lo.push(lo);
        self.hi.push(hi);
        self.names.len() - 1
    }
}

/// Where layer `l-1`'s post-activation value `k` lives: a column, or a
/// folded constant.
#[derive(Clone, Copy)]
enum PrevRef {
    Col(usize),
    Const(f64),
}

/// Build the exact system for the margin `f_true(x) - f_target(x)` over the
/// ball `|x - x0|_inf <= eps`. `tables[l][j]` must cover the propagated
/// interval of neuron `j` in layer `l`; segments the interval cannot reach
/// are dropped before emission.
pub fn build_model1(
    net: &Network,
    x0: &Array1<f64>,
    eps: f64,
    true_class: usize,
    target_class: usize,
    tables: &[Vec<SegmentTable>],
    bounds: &IntervalBounds,
) -> Result<MixedConstraintSystem> {
    build_model1_opts(
        net,
        x0,
        eps,
        true_class,
        target_class,
        tables,
        bounds,
        true,
    )
}

/// As [`build_model1`] with segment pruning optional (kept for the
/// prune-vs-no-prune equivalence tests).
#[allow(clippy::too_many_arguments)]
pub fn build_model1_opts(
    net: &Network,
    x0: &Array1<f64>,
    eps: f64,
    true_class: usize,
    target_class: usize,
    tables: &[Vec<SegmentTable>],
    bounds: &IntervalBounds,
    prune_segments: bool,
) -> Result<MixedConstraintSystem> {
    build_model1_box(
        net,
        &x0.mapv(|v| v - eps),
        &x0.mapv(|v| v + eps),
        true_class,
        target_class,
        tables,
        bounds,
        prune_segments,
    )
}

/// As [`build_model1`] over an arbitrary per-coordinate input box instead
/// of a uniform ball; the layerwise partition feeds a prefix reachability
/// box through here.
#[allow(clippy::too_many_arguments)]
pub fn build_model1_box(
    net: &Network,
    in_lo: &Array1<f64>,
    in_hi: &Array1<f64>,
    true_class: usize,
    target_class: usize,
    tables: &[Vec<SegmentTable>],
    bounds: &IntervalBounds,
    prune_segments: bool,
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
    if !net.activation.is_piecewise_linear() {
        return Err(Error::UnsupportedActivation(
            net.activation,
            "exact encoding needs a piecewise-linear activation".into(),
        ));
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

    let mut cols = Columns {
        names: Vec::new(),
        lo: Vec::new(),
        hi: Vec::new(),
    };
    let input_cols: Vec<usize> = (0..net.input_dim)
        .map(|j| cols.push(format!("x[{j}]"), in_lo[j], in_hi[j]))
        .collect();

    let mut beta_names: Vec<String> = Vec::new();
    let mut one_hot: Vec<OneHotGroup> = Vec::new();

    // Per neuron: either folded constant or its (z, a, u-cols, beta-cols,
    // kept segment indices).
    struct NeuronEnc {
        z_col: usize,
        a_col: usize,
        u_cols: Vec<usize>,
        beta_cols: Vec<usize>,
        kept: Vec<usize>,
    }
    enum Enc {
        Folded(f64),
        Active(NeuronEnc),
    }

    let mut prev_refs: Vec<PrevRef> = input_cols.iter().map(|&c| PrevRef::Col(c)).collect();
    let mut encs: Vec<Vec<Enc>> = Vec::with_capacity(net.layers.len());

    // Triplet-style accumulation; densified at the end.
    struct RowAcc {
        a: Vec<(usize, usize, f64)>,
        b0: Vec<f64>,
        b: Vec<(usize, usize, f64)>,
    }
    let mut eq_pre = RowAcc { a: vec![], b0: vec![], b: vec![] };
    let mut eq_act = RowAcc { a: vec![], b0: vec![], b: vec![] };
    let mut eq_hot = RowAcc { a: vec![], b0: vec![], b: vec![] };
    let mut in_rows = RowAcc { a: vec![], b0: vec![], b: vec![] };

    // Input box as explicit inequality rows (the boxes repeat them, which
    // keeps the input set visible to dual-based machinery).
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
        let mut layer_encs = Vec::with_capacity(layer.out_dim());
        for j in 0..layer.out_dim() {
            let (z_lo, z_hi) = (bounds.z_lo[l][j], bounds.z_hi[l][j]);
            if z_hi - z_lo < DEGENERATE_TOL {
                layer_encs.push(Enc::Folded(act.eval(0.5 * (z_lo + z_hi))));
                continue;
            }
            let table = &tables[l][j];
            let feas = interval::feasible_segments(z_lo, z_hi, table)?;
            let kept: Vec<usize> = (0..table.num_segments())
                .filter(|&i| !prune_segments || feas[i])
                .collect();
            if kept.is_empty() {
                return Err(Error::Internal(format!(
                    "no feasible segment for neuron {j} in layer {l}"
                )));
            }
            let z_col = cols.push(format!("z{}[{j}]", l + 1), z_lo, z_hi);
            let a_col = cols.push(
                format!("a{}[{j}]", l + 1),
                bounds.a_lo[l][j],
                bounds.a_hi[l][j],
            );
            let mut u_cols = Vec::with_capacity(kept.len());
            let mut beta_cols = Vec::with_capacity(kept.len());
            for &i in &kept {
                u_cols.push(cols.push(
                    format!("u{}[{j},{i}]", l + 1),
                    z_lo.min(0.0),
                    z_hi.max(0.0),
                ));
                beta_cols.push(beta_names.len());
                beta_names.push(format!("b{}[{j},{i}]", l + 1));
            }
            one_hot.push(OneHotGroup {
                cols: beta_cols.clone(),
                label: format!("z{}[{j}]", l + 1),
            });
            layer_encs.push(Enc::Active(NeuronEnc {
                z_col,
                a_col,
                u_cols,
                beta_cols,
                kept,
            }));
        }

        for (j, enc) in layer_encs.iter().enumerate() {
            let Enc::Active(ne) = enc else { continue };
            let table = &tables[l][j];
            let (z_lo, z_hi) = (bounds.z_lo[l][j], bounds.z_hi[l][j]);

            // Pre-activation: z - W a_prev = b + W (folded constants).
            let r = eq_pre.b0.len();
            eq_pre.a.push((r, ne.z_col, 1.0));
            let mut rhs = layer.bias[j];
            for (k, pref) in prev_refs.iter().enumerate() {
                let w = layer.weights[[j, k]];
                match pref {
                    PrevRef::Col(c) => eq_pre.a.push((r, *c, -w)),
                    PrevRef::Const(v) => rhs += w * v,
                }
            }
            eq_pre.b0.push(rhs);

            // Activation: a - sum alpha_i u_i = sum gamma_i beta_i.
            let r = eq_act.b0.len();
            eq_act.a.push((r, ne.a_col, 1.0));
            for (pos, &i) in ne.kept.iter().enumerate() {
                let (alpha, gamma) = table.segments[i];
                if alpha != 0.0 {
                    eq_act.a.push((r, ne.u_cols[pos], -alpha));
                }
                if gamma != 0.0 {
                    eq_act.b.push((r, ne.beta_cols[pos], gamma));
                }
            }
            eq_act.b0.push(0.0);

            // One-hot: 0 = 1 - sum beta_i.
            let r = eq_hot.b0.len();
            for &bc in &ne.beta_cols {
                eq_hot.b.push((r, bc, -1.0));
            }
            eq_hot.b0.push(1.0);

            // Segment membership: sum M_{i-1} beta <= z <= sum M_i beta.
            let r = in_rows.b0.len();
            in_rows.a.push((r, ne.z_col, -1.0));
            for (pos, &i) in ne.kept.iter().enumerate() {
                in_rows.b.push((r, ne.beta_cols[pos], -table.breakpoints[i]));
            }
            in_rows.b0.push(0.0);
            let r = in_rows.b0.len();
            in_rows.a.push((r, ne.z_col, 1.0));
            for (pos, &i) in ne.kept.iter().enumerate() {
                in_rows.b.push((r, ne.beta_cols[pos], table.breakpoints[i + 1]));
            }
            in_rows.b0.push(0.0);

            // Big-M linearization of u = beta * z, four rows per product.
            for pos in 0..ne.kept.len() {
                let (u, bc) = (ne.u_cols[pos], ne.beta_cols[pos]);
                let r = in_rows.b0.len();
                in_rows.a.push((r, u, 1.0));
                in_rows.b.push((r, bc, z_hi));
                in_rows.b0.push(0.0);
                let r = in_rows.b0.len();
                in_rows.a.push((r, u, -1.0));
                in_rows.b.push((r, bc, -z_lo));
                in_rows.b0.push(0.0);
                let r = in_rows.b0.len();
                in_rows.a.push((r, u, 1.0));
                in_rows.a.push((r, ne.z_col, -1.0));
                in_rows.b.push((r, bc, z_lo));
                in_rows.b0.push(-z_lo);
                let r = in_rows.b0.len();
                in_rows.a.push((r, u, -1.0));
                in_rows.a.push((r, ne.z_col, 1.0));
                in_rows.b.push((r, bc, -z_hi));
                in_rows.b0.push(z_hi);
            }
        }

        prev_refs = layer_encs
            .iter()
            .map(|e| match e {
                Enc::Folded(v) => PrevRef::Const(*v),
                Enc::Active(ne) => PrevRef::Col(ne.a_col),
            })
            .collect();
        encs.push(layer_encs);
    }

    // Objective: margin between the two final post-activations.
    let n = cols.names.len();
    let p = beta_names.len();
    let mut objective = Array1::zeros(n);
    let mut objective_offset = 0.0;
    for (class, sign) in [(true_class, 1.0), (target_class, -1.0)] {
        match &prev_refs[class] {
            PrevRef::Col(c) => objective[*c] += sign,
            PrevRef::Const(v) => objective_offset += sign * v,
        }
    }

    // Densify, stacking pre/act/one-hot equality rows in that order.
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
            names: cols.names,
            lo: cols.lo,
            hi: cols.hi,
            input_cols,
            beta_names,
        },
    })
}
