//! Lowering of a mixed constraint system to an explicit QUBO.
//!
//! Continuous variables become binary-weighted bit groups, inequalities
//! gain bit-encoded slacks, and all constraints are folded into one
//! quadratic penalty `rho/2 * |M_eq x - r_eq|^2` on top of the linear
//! objective. Energy is `x' Q x + q' x + offset` over the unified bit
//! vector `x = [y-bits, slack-bits, beta]`.

use ndarray::{Array1, Array2};

use crate::error::{Error, Result};
use crate::system::MixedConstraintSystem;

/// Binary-weighted encoding of the continuous variables and slacks.
/// Zero-width variables get zero bits and stay at their lower bound.
#[derive(Debug, Clone)]
pub struct BitEncoding {
    /// Per continuous variable: bit weights `t_k = 2^(k-1) * delta`.
    pub y_weights: Vec<Vec<f64>>,
    /// Start of each variable's bit group within the y-bit block.
    pub y_offsets: Vec<usize>,
    pub num_y_bits: usize,
    /// Per kept inequality row: slack upper bound and bit weights.
    pub slack_ub: Vec<f64>,
    pub s_weights: Vec<Vec<f64>>,
    pub s_offsets: Vec<usize>,
    pub num_s_bits: usize,
    /// Inequality rows kept (vacuous rows are dropped).
    pub kept_rows: Vec<usize>,
    pub dropped_rows: Vec<usize>,
}

impl BitEncoding {
    /// Smallest nonzero bit weight across variables and slacks.
    pub fn resolution(&self) -> f64 {
        self.y_weights
            .iter()
            .chain(self.s_weights.iter())
            .flat_map(|w| w.first())
            .fold(f64::INFINITY, |m, &w| m.min(w))
    }
}

fn binary_weights(range: f64, bits: usize) -> Vec<f64> {
    if range <= 0.0 || bits == 0 {
        return Vec::new();
    }
    let delta = range / ((1u64 << bits) - 1) as f64;
    (0..bits).map(|k| (1u64 << k) as f64 * delta).collect()
}

/// Build the encoding: `bits_per_var` bits per continuous variable and
/// `bits_per_slack` per inequality slack. Slack upper bounds come from
/// interval evaluation of the residual `d0 + D beta - C y` over the boxes;
/// rows whose residual is always negative can never be satisfied through
/// this relaxation and rows with zero range need no bits.
pub fn make_encoding(
    system: &MixedConstraintSystem,
    bits_per_var: usize,
    bits_per_slack: usize,
) -> Result<BitEncoding> {
    let n = system.layout.num_continuous();
    let mut y_weights = Vec::with_capacity(n);
    let mut y_offsets = Vec::with_capacity(n);
    let mut num_y_bits = 0;
    for i in 0..n {
        let (lo, hi) = (system.layout.lo[i], system.layout.hi[i]);
        if !lo.is_finite() || !hi.is_finite() {
            return Err(Error::InvalidParameter(format!(
                "column {i} has unbounded box; bit encoding needs finite ranges"
            )));
        }
        let w = binary_weights(hi - lo, bits_per_var);
        y_offsets.push(num_y_bits);
        num_y_bits += w.len();
        y_weights.push(w);
    }

    let mut slack_ub = Vec::new();
    let mut s_weights = Vec::new();
    let mut s_offsets = Vec::new();
    let mut kept_rows = Vec::new();
    let mut dropped_rows = Vec::new();
    let mut num_s_bits = 0;
    for j in 0..system.num_ineq_rows() {
        // max residual = d0 + sum max(D, 0) - min over the box of C y.
        let mut ub = system.d0[j];
        for b in 0..system.layout.num_beta() {
            ub += system.d_coef[[j, b]].max(0.0);
        }
        for i in 0..n {
            let c = system.c_in[[j, i]];
            ub -= (c * system.layout.lo[i]).min(c * system.layout.hi[i]);
        }
        if ub < 0.0 {
            dropped_rows.push(j);
            continue;
        }
        kept_rows.push(j);
        slack_ub.push(ub);
        let w = binary_weights(ub, bits_per_slack);
        s_offsets.push(num_s_bits);
        num_s_bits += w.len();
        s_weights.push(w);
    }
    Ok(BitEncoding {
        y_weights,
        y_offsets,
        num_y_bits,
        slack_ub,
        s_weights,
        s_offsets,
        num_s_bits,
        kept_rows,
        dropped_rows,
    })
}

/// Assembled QUBO with its block provenance.
#[derive(Debug, Clone)]
pub struct QuboInstance {
    /// Symmetric quadratic form.
    pub q: Array2<f64>,
    pub lin: Array1<f64>,
    /// Constant energy term: objective constant plus `rho/2 |r_eq|^2`.
    pub offset: f64,
    pub rho: f64,
    pub enc: BitEncoding,
    pub num_beta: usize,
}

impl QuboInstance {
    pub fn dim(&self) -> usize {
        self.lin.len()
    }

    pub fn energy(&self, bits: &[u8]) -> f64 {
        debug_assert_eq!(bits.len(), self.dim());
        let mut e = self.offset;
        for i in 0..bits.len() {
            if bits[i] == 0 {
                continue;
            }
            e += self.lin[i] + self.q[[i, i]];
            for j in 0..bits.len() {
                if j != i && bits[j] != 0 {
                    e += self.q[[i, j]];
                }
            }
        }
        e
    }
}

/// Penalty weight making any one-resolution-step constraint violation cost
/// more than the whole objective range; minimal default when the objective
/// is flat.
pub fn choose_rho(system: &MixedConstraintSystem, enc: &BitEncoding) -> f64 {
    let c1: f64 = system.objective.iter().map(|v| v.abs()).sum();
    let max_range = (0..system.layout.num_continuous())
        .map(|i| system.layout.hi[i] - system.layout.lo[i])
        .fold(0.0f64, f64::max);
    let delta = enc.resolution();
    if c1 == 0.0 || max_range == 0.0 || !delta.is_finite() || delta <= 0.0 {
        return 1.0;
    }
    2.0 * c1 * max_range / (delta * delta) + 1.0
}

/// Assemble `Q`, `q`, and the constant per the closed block forms: with
/// `M_eq = [[A T_y, 0, -B], [C T_y, T_s, -D]]` and
/// `r_eq = [b0 - A l; d0 - C l]`,
/// `Q = rho/2 M_eq' M_eq` and `q = [T_y' c; 0; 0] - rho M_eq' r_eq`.
/// Blocks are written out index by index rather than through generic
/// products.
pub fn assemble(system: &MixedConstraintSystem, enc: &BitEncoding, rho: f64) -> Result<QuboInstance> {
    if rho <= 0.0 {
        return Err(Error::InvalidParameter(format!("rho must be > 0, got {rho}")));
    }
    let n = system.layout.num_continuous();
    let p = system.layout.num_beta();
    let m_e = system.num_eq_rows();
    let m_k = enc.kept_rows.len();
    let ny = enc.num_y_bits;
    let ns = enc.num_s_bits;
    let dim = ny + ns + p;

    let lo = &system.layout.lo;
    // Gram matrices over the original columns: A'A + C'C, A'B + C'D, B'B + D'D.
    let mut g_yy = Array2::<f64>::zeros((n, n));
    let mut g_yb = Array2::<f64>::zeros((n, p));
    let mut g_bb = Array2::<f64>::zeros((p, p));
    for r in 0..m_e {
        for i in 0..n {
            let a = system.a_eq[[r, i]];
            if a == 0.0 {
                continue;
            }
            for i2 in 0..n {
                g_yy[[i, i2]] += a * system.a_eq[[r, i2]];
            }
            for b in 0..p {
                g_yb[[i, b]] += a * system.b_coef[[r, b]];
            }
        }
        for b in 0..p {
            let v = system.b_coef[[r, b]];
            if v == 0.0 {
                continue;
            }
            for b2 in 0..p {
                g_bb[[b, b2]] += v * system.b_coef[[r, b2]];
            }
        }
    }
    for &r in &enc.kept_rows {
        for i in 0..n {
            let c = system.c_in[[r, i]];
            if c == 0.0 {
                continue;
            }
            for i2 in 0..n {
                g_yy[[i, i2]] += c * system.c_in[[r, i2]];
            }
            for b in 0..p {
                g_yb[[i, b]] += c * system.d_coef[[r, b]];
            }
        }
        for b in 0..p {
            let v = system.d_coef[[r, b]];
            if v == 0.0 {
                continue;
            }
            for b2 in 0..p {
                g_bb[[b, b2]] += v * system.d_coef[[r, b2]];
            }
        }
    }

    let h = rho / 2.0;
    let mut q = Array2::<f64>::zeros((dim, dim));
    // Q_yy[(i,k),(i2,k2)] = (A'A + C'C)_{i,i2} t_ik t_i2k2.
    for i in 0..n {
        for (k, &t1) in enc.y_weights[i].iter().enumerate() {
            let row = enc.y_offsets[i] + k;
            for i2 in 0..n {
                let g = g_yy[[i, i2]];
                if g == 0.0 {
                    continue;
                }
                for (k2, &t2) in enc.y_weights[i2].iter().enumerate() {
                    q[[row, enc.y_offsets[i2] + k2]] += h * g * t1 * t2;
                }
            }
            // Q_ys[(i,k),(j,k2)] = C_{ji} t_ik ts_jk2 (slacks only couple
            // through their own row).
            for (jj, &r) in enc.kept_rows.iter().enumerate() {
                let c = system.c_in[[r, i]];
                if c == 0.0 {
                    continue;
                }
                for (k2, &t2) in enc.s_weights[jj].iter().enumerate() {
                    let col = ny + enc.s_offsets[jj] + k2;
                    let v = h * c * t1 * t2;
                    q[[row, col]] += v;
                    q[[col, row]] += v;
                }
            }
            // Q_ybeta[(i,k),b] = -(A'B + C'D)_{i,b} t_ik.
            for b in 0..p {
                let g = g_yb[[i, b]];
                if g == 0.0 {
                    continue;
                }
                let col = ny + ns + b;
                let v = -h * g * t1;
                q[[row, col]] += v;
                q[[col, row]] += v;
            }
        }
    }
    // Q_ss: block diagonal per slack row.
    for jj in 0..m_k {
        for (k, &t1) in enc.s_weights[jj].iter().enumerate() {
            let row = ny + enc.s_offsets[jj] + k;
            for (k2, &t2) in enc.s_weights[jj].iter().enumerate() {
                q[[row, ny + enc.s_offsets[jj] + k2]] += h * t1 * t2;
            }
            // Q_sbeta[(j,k),b] = -D_{j,b} ts_jk.
            let r = enc.kept_rows[jj];
            for b in 0..p {
                let d = system.d_coef[[r, b]];
                if d == 0.0 {
                    continue;
                }
                let col = ny + ns + b;
                let v = -h * d * t1;
                q[[row, col]] += v;
                q[[col, row]] += v;
            }
        }
    }
    // Q_betabeta = B'B + D'D.
    for b in 0..p {
        for b2 in 0..p {
            q[[ny + ns + b, ny + ns + b2]] += h * g_bb[[b, b2]];
        }
    }

    // r_eq and the linear term q = [T_y' c; 0; 0] - rho M_eq' r_eq.
    let mut r_eq = Array1::<f64>::zeros(m_e + m_k);
    for r in 0..m_e {
        let mut v = system.b0[r];
        for i in 0..n {
            v -= system.a_eq[[r, i]] * lo[i];
        }
        r_eq[r] = v;
    }
    for (jj, &r) in enc.kept_rows.iter().enumerate() {
        let mut v = system.d0[r];
        for i in 0..n {
            v -= system.c_in[[r, i]] * lo[i];
        }
        r_eq[m_e + jj] = v;
    }
    let mut lin = Array1::<f64>::zeros(dim);
    for i in 0..n {
        let c = system.objective[i];
        for (k, &t) in enc.y_weights[i].iter().enumerate() {
            lin[enc.y_offsets[i] + k] += c * t;
        }
    }
    // -rho M_eq' r_eq, column block by column block.
    for i in 0..n {
        for (k, &t) in enc.y_weights[i].iter().enumerate() {
            let row = enc.y_offsets[i] + k;
            let mut v = 0.0;
            for r in 0..m_e {
                v += system.a_eq[[r, i]] * r_eq[r];
            }
            for (jj, &r) in enc.kept_rows.iter().enumerate() {
                v += system.c_in[[r, i]] * r_eq[m_e + jj];
            }
            lin[row] -= rho * t * v;
        }
    }
    for jj in 0..m_k {
        for (k, &t) in enc.s_weights[jj].iter().enumerate() {
            lin[ny + enc.s_offsets[jj] + k] -= rho * t * r_eq[m_e + jj];
        }
    }
    for b in 0..p {
        let mut v = 0.0;
        for r in 0..m_e {
            v += -system.b_coef[[r, b]] * r_eq[r];
        }
        for (jj, &r) in enc.kept_rows.iter().enumerate() {
            v += -system.d_coef[[r, b]] * r_eq[m_e + jj];
        }
        lin[ny + ns + b] -= rho * v;
    }

    let offset = system.objective_offset
        + system.objective.dot(&Array1::from(lo.clone()))
        + h * r_eq.dot(&r_eq);

    Ok(QuboInstance {
        q,
        lin,
        offset,
        rho,
        enc: enc.clone(),
        num_beta: p,
    })
}

/// A bit vector decoded back into model space.
#[derive(Debug, Clone)]
pub struct Decoded {
    pub y: Array1<f64>,
    pub beta: Array1<f64>,
    pub slacks: Array1<f64>,
    /// `|M_eq x - r_eq|_inf`: how badly the penalty rows are violated.
    pub residual_inf: f64,
}

/// Reconstruct `(y, beta, slacks)` from a bit assignment and report the
/// worst penalty-row residual so callers can reject infeasible minima.
pub fn decode(system: &MixedConstraintSystem, enc: &BitEncoding, bits: &[u8]) -> Result<Decoded> {
    let n = system.layout.num_continuous();
    let p = system.layout.num_beta();
    let dim = enc.num_y_bits + enc.num_s_bits + p;
    if bits.len() != dim {
        return Err(Error::ShapeMismatch(format!(
            "{} bits for a {dim}-bit instance",
            bits.len()
        )));
    }
    let y = Array1::from_shape_fn(n, |i| {
        let mut v = system.layout.lo[i];
        for (k, &t) in enc.y_weights[i].iter().enumerate() {
            if bits[enc.y_offsets[i] + k] != 0 {
                v += t;
            }
        }
        v
    });
    let slacks = Array1::from_shape_fn(enc.kept_rows.len(), |jj| {
        let mut v = 0.0;
        for (k, &t) in enc.s_weights[jj].iter().enumerate() {
            if bits[enc.num_y_bits + enc.s_offsets[jj] + k] != 0 {
                v += t;
            }
        }
        v
    });
    let beta = Array1::from_shape_fn(p, |b| {
        f64::from(bits[enc.num_y_bits + enc.num_s_bits + b])
    });
    let mut residual: f64 = 0.0;
    for r in 0..system.num_eq_rows() {
        let mut v = -system.b0[r];
        for i in 0..n {
            v += system.a_eq[[r, i]] * y[i];
        }
        for b in 0..p {
            v -= system.b_coef[[r, b]] * beta[b];
        }
        residual = residual.max(v.abs());
    }
    for (jj, &r) in enc.kept_rows.iter().enumerate() {
        let mut v = slacks[jj] - system.d0[r];
        for i in 0..n {
            v += system.c_in[[r, i]] * y[i];
        }
        for b in 0..p {
            v -= system.d_coef[[r, b]] * beta[b];
        }
        residual = residual.max(v.abs());
    }
    Ok(Decoded {
        y,
        beta,
        slacks,
        residual_inf: residual,
    })
}

/// Dump as an upper-triangular coordinate list: header lines carry the
/// dimension, constant offset, and penalty weight; diagonal entries fold
/// the linear term in.
pub fn to_coord_string(q: &QuboInstance) -> String {
    let mut out = String::new();
    out.push_str(&format!("# qubo dim {}\n", q.dim()));
    out.push_str(&format!("# offset {}\n", q.offset));
    out.push_str(&format!("# rho {}\n", q.rho));
    for i in 0..q.dim() {
        let d = q.q[[i, i]] + q.lin[i];
        if d != 0.0 {
            out.push_str(&format!("{i} {i} {d}\n"));
        }
        for j in i + 1..q.dim() {
            let v = q.q[[i, j]] + q.q[[j, i]];
            if v != 0.0 {
                out.push_str(&format!("{i} {j} {v}\n"));
            }
        }
    }
    out
}

/// A QUBO read back from the coordinate-list format; enough to evaluate
/// and solve, without the model-space provenance.
#[derive(Debug, Clone)]
pub struct RawQubo {
    /// Upper-triangular with the linear term on the diagonal.
    pub q: Array2<f64>,
    pub offset: f64,
    pub rho: f64,
}

impl RawQubo {
    pub fn dim(&self) -> usize {
        self.q.nrows()
    }

    pub fn energy(&self, bits: &[u8]) -> f64 {
        let mut e = self.offset;
        for i in 0..self.dim() {
            if bits[i] == 0 {
                continue;
            }
            e += self.q[[i, i]];
            for j in i + 1..self.dim() {
                if bits[j] != 0 {
                    e += self.q[[i, j]];
                }
            }
        }
        e
    }

    /// Split into the symmetric-matrix + linear form the solvers take.
    pub fn to_dense(&self) -> (Array2<f64>, Array1<f64>, f64) {
        let n = self.dim();
        let mut q = Array2::zeros((n, n));
        let mut lin = Array1::zeros(n);
        for i in 0..n {
            lin[i] = self.q[[i, i]];
            for j in i + 1..n {
                q[[i, j]] = 0.5 * self.q[[i, j]];
                q[[j, i]] = 0.5 * self.q[[i, j]];
            }
        }
        (q, lin, self.offset)
    }
}

impl QuboInstance {
    pub fn to_raw(&self) -> RawQubo {
        let n = self.dim();
        let mut q = Array2::zeros((n, n));
        for i in 0..n {
            q[[i, i]] = self.q[[i, i]] + self.lin[i];
            for j in i + 1..n {
                q[[i, j]] = self.q[[i, j]] + self.q[[j, i]];
            }
        }
        RawQubo {
            q,
            offset: self.offset,
            rho: self.rho,
        }
    }
}

pub fn from_coord_string(text: &str) -> Result<RawQubo> {
    let mut dim = None;
    let mut offset = 0.0;
    let mut rho = 1.0;
    let mut entries = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let bad = |reason: &str| Error::MalformedCsv {
            line: lineno + 1,
            reason: reason.into(),
        };
        if let Some(rest) = line.strip_prefix('#') {
            let toks: Vec<&str> = rest.split_whitespace().collect();
            match toks.as_slice() {
                ["qubo", "dim", v] => dim = Some(v.parse().map_err(|_| bad("bad dim"))?),
                ["offset", v] => offset = v.parse().map_err(|_| bad("bad offset"))?,
                ["rho", v] => rho = v.parse().map_err(|_| bad("bad rho"))?,
                _ => {}
            }
            continue;
        }
        let toks: Vec<&str> = line.split_whitespace().collect();
        if toks.len() != 3 {
            return Err(bad("expected `i j value`"));
        }
        let i: usize = toks[0].parse().map_err(|_| bad("bad row index"))?;
        let j: usize = toks[1].parse().map_err(|_| bad("bad col index"))?;
        let v: f64 = toks[2].parse().map_err(|_| bad("bad value"))?;
        if i > j {
            return Err(bad("lower-triangular entry"));
        }
        entries.push((i, j, v));
    }
    let dim = dim.ok_or_else(|| Error::MalformedCsv {
        line: 0,
        reason: "missing `# qubo dim` header".into(),
    })?;
    let mut q = Array2::zeros((dim, dim));
    for (i, j, v) in entries {
        if j >= dim {
            return Err(Error::MalformedCsv {
                line: 0,
                reason: format!("index ({i}, {j}) outside dim {dim}"),
            });
        }
        q[[i, j]] += v;
    }
    Ok(RawQubo { q, offset, rho })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::system::tests_support::hand_system;
    use approx::assert_abs_diff_eq;
    use ndarray::array;
    use rand::prelude::*;
    use rand_chacha::ChaCha8Rng;

    fn single_eq_system() -> MixedConstraintSystem {
        // min y s.t. y = 1, y in [0, 3].
        MixedConstraintSystem {
            objective: array![1.0],
            objective_offset: 0.0,
            a_eq: array![[1.0]],
            b0: array![1.0],
            b_coef: Array2::zeros((1, 0)),
            c_in: Array2::zeros((0, 1)),
            d0: array![],
            d_coef: Array2::zeros((0, 0)),
            one_hot: vec![],
            layout: crate::system::VariableLayout {
                names: vec!["y".into()],
                lo: vec![0.0],
                hi: vec![3.0],
                input_cols: vec![],
                beta_names: vec![],
            },
        }
    }

    #[test]
    fn binary_weight_examples() {
        assert_eq!(binary_weights(3.0, 2), vec![1.0, 2.0]);
        let w = binary_weights(2.0, 3);
        assert_abs_diff_eq!(w[0], 2.0 / 7.0, epsilon = 1e-15);
        assert_abs_diff_eq!(w[1], 4.0 / 7.0, epsilon = 1e-15);
        assert_abs_diff_eq!(w[2], 8.0 / 7.0, epsilon = 1e-15);
    }

    #[test]
    fn slack_range_by_interval_evaluation() {
        // x <= 1 with x in [-1, 1]: residual 1 - x in [0, 2].
        let sys = MixedConstraintSystem {
            objective: array![0.0],
            objective_offset: 0.0,
            a_eq: Array2::zeros((0, 1)),
            b0: array![],
            b_coef: Array2::zeros((0, 0)),
            c_in: array![[1.0]],
            d0: array![1.0],
            d_coef: Array2::zeros((1, 0)),
            one_hot: vec![],
            layout: crate::system::VariableLayout {
                names: vec!["x".into()],
                lo: vec![-1.0],
                hi: vec![1.0],
                input_cols: vec![0],
                beta_names: vec![],
            },
        };
        let enc = make_encoding(&sys, 2, 2).unwrap();
        assert_eq!(enc.slack_ub, vec![2.0]);
        assert!(enc.dropped_rows.is_empty());
    }

    #[test]
    fn hand_penalty_expansion() {
        let sys = single_eq_system();
        let enc = make_encoding(&sys, 2, 0).unwrap();
        let q = assemble(&sys, &enc, 2.0).unwrap();
        assert_eq!(q.dim(), 2);
        // y = 1 (bits 10): feasible, energy = objective = 1.
        assert_abs_diff_eq!(q.energy(&[1, 0]), 1.0, epsilon = 1e-12);
        // y = 3 (bits 11): objective 3 plus penalty rho/2 * (3-1)^2 = 4.
        assert_abs_diff_eq!(q.energy(&[1, 1]), 7.0, epsilon = 1e-12);
        // y = 0: penalty 1, total 1.
        assert_abs_diff_eq!(q.energy(&[0, 0]), 1.0, epsilon = 1e-12);
    }

    #[test]
    fn empty_inequality_block_dimension() {
        let sys = single_eq_system();
        let enc = make_encoding(&sys, 2, 4).unwrap();
        assert_eq!(enc.num_s_bits, 0);
        let q = assemble(&sys, &enc, 1.0).unwrap();
        assert_eq!(q.dim(), 2);
    }

    /// Generic-product oracle: build M_eq and r_eq densely and expand
    /// rho/2 |M_eq x - r_eq|^2 + c' y(x) directly.
    fn oracle_energy(
        sys: &MixedConstraintSystem,
        enc: &BitEncoding,
        rho: f64,
        bits: &[u8],
    ) -> f64 {
        let d = decode(sys, enc, bits).unwrap();
        let mut penalty = 0.0;
        for r in 0..sys.num_eq_rows() {
            let mut v = -sys.b0[r];
            for i in 0..d.y.len() {
                v += sys.a_eq[[r, i]] * d.y[i];
            }
            for b in 0..d.beta.len() {
                v -= sys.b_coef[[r, b]] * d.beta[b];
            }
            penalty += v * v;
        }
        for (jj, &r) in enc.kept_rows.iter().enumerate() {
            let mut v = d.slacks[jj] - sys.d0[r];
            for i in 0..d.y.len() {
                v += sys.c_in[[r, i]] * d.y[i];
            }
            for b in 0..d.beta.len() {
                v -= sys.d_coef[[r, b]] * d.beta[b];
            }
            penalty += v * v;
        }
        sys.objective.dot(&d.y) + sys.objective_offset + 0.5 * rho * penalty
    }

    #[test]
    fn energy_identity_on_random_bitstrings() {
        let sys = hand_system();
        let enc = make_encoding(&sys, 3, 2).unwrap();
        let rho = choose_rho(&sys, &enc);
        let q = assemble(&sys, &enc, rho).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..200 {
            let bits: Vec<u8> = (0..q.dim()).map(|_| rng.random_range(0..2u8)).collect();
            let got = q.energy(&bits);
            let want = oracle_energy(&sys, &enc, rho, &bits);
            assert_abs_diff_eq!(got, want, epsilon = 1e-9 * (1.0 + want.abs()));
        }
    }

    /// Cross-validate the block assembly against generic dense products.
    #[test]
    fn blocks_match_generic_products() {
        let sys = hand_system();
        let enc = make_encoding(&sys, 2, 2).unwrap();
        let rho = 3.0;
        let inst = assemble(&sys, &enc, rho).unwrap();
        let n = sys.layout.num_continuous();
        let p = sys.layout.num_beta();
        let m_e = sys.num_eq_rows();
        let m_k = enc.kept_rows.len();
        let dim = inst.dim();
        // Dense T_y, T_s.
        let mut t_y = Array2::<f64>::zeros((n, enc.num_y_bits));
        for i in 0..n {
            for (k, &t) in enc.y_weights[i].iter().enumerate() {
                t_y[[i, enc.y_offsets[i] + k]] = t;
            }
        }
        let mut t_s = Array2::<f64>::zeros((m_k, enc.num_s_bits));
        for j in 0..m_k {
            for (k, &t) in enc.s_weights[j].iter().enumerate() {
                t_s[[j, enc.s_offsets[j] + k]] = t;
            }
        }
        let mut m_eq = Array2::<f64>::zeros((m_e + m_k, dim));
        let at = sys.a_eq.dot(&t_y);
        for r in 0..m_e {
            for c in 0..enc.num_y_bits {
                m_eq[[r, c]] = at[[r, c]];
            }
            for b in 0..p {
                m_eq[[r, enc.num_y_bits + enc.num_s_bits + b]] = -sys.b_coef[[r, b]];
            }
        }
        for (jj, &r) in enc.kept_rows.iter().enumerate() {
            for c in 0..enc.num_y_bits {
                let mut v = 0.0;
                for i in 0..n {
                    v += sys.c_in[[r, i]] * t_y[[i, c]];
                }
                m_eq[[m_e + jj, c]] = v;
            }
            for c in 0..enc.num_s_bits {
                m_eq[[m_e + jj, enc.num_y_bits + c]] = t_s[[jj, c]];
            }
            for b in 0..p {
                m_eq[[m_e + jj, enc.num_y_bits + enc.num_s_bits + b]] = -sys.d_coef[[r, b]];
            }
        }
        let generic = m_eq.t().dot(&m_eq) * (rho / 2.0);
        for i in 0..dim {
            for j in 0..dim {
                assert_abs_diff_eq!(inst.q[[i, j]], generic[[i, j]], epsilon = 1e-9);
            }
        }
    }

    #[test]
    fn decode_all_zero_bits() {
        let sys = hand_system();
        let enc = make_encoding(&sys, 2, 2).unwrap();
        let dim = enc.num_y_bits + enc.num_s_bits + sys.layout.num_beta();
        let d = decode(&sys, &enc, &vec![0u8; dim]).unwrap();
        assert_eq!(d.y.to_vec(), sys.layout.lo);
        assert!(d.slacks.iter().all(|&s| s == 0.0));
        // No selector set: the one-hot equality row is violated by 1.
        assert!(d.residual_inf >= 1.0);
    }

    #[test]
    fn round_trip_near_feasible_vertex() {
        let sys = hand_system();
        let enc = make_encoding(&sys, 8, 8).unwrap();
        // Feasible point: segment 1, z = -1, a = 0.5.
        let y = array![-1.0, 0.5];
        let beta = [1.0, 0.0];
        let mut bits = vec![0u8; enc.num_y_bits + enc.num_s_bits + 2];
        // Nearest-bit encode y.
        for i in 0..2 {
            let range: f64 = enc.y_weights[i].iter().sum();
            let frac = ((y[i] - sys.layout.lo[i]) / range).clamp(0.0, 1.0);
            let steps = (frac * ((1u64 << 8) - 1) as f64).round() as u64;
            for k in 0..8 {
                bits[enc.y_offsets[i] + k] = ((steps >> k) & 1) as u8;
            }
        }
        // Slacks: residual of each kept row at (y, beta).
        for (jj, &r) in enc.kept_rows.iter().enumerate() {
            let mut resid = sys.d0[r];
            for b in 0..2 {
                resid += sys.d_coef[[r, b]] * beta[b];
            }
            for i in 0..2 {
                resid -= sys.c_in[[r, i]] * y[i];
            }
            let range: f64 = enc.s_weights[jj].iter().sum();
            if range > 0.0 {
                let frac = (resid / range).clamp(0.0, 1.0);
                let steps = (frac * ((1u64 << 8) - 1) as f64).round() as u64;
                for k in 0..8 {
                    bits[enc.num_y_bits + enc.s_offsets[jj] + k] = ((steps >> k) & 1) as u8;
                }
            }
        }
        bits[enc.num_y_bits + enc.num_s_bits] = 1;
        let d = decode(&sys, &enc, &bits).unwrap();
        assert!((d.y[0] - -1.0).abs() < 0.02);
        // Residual bounded by bit resolution times row mass.
        assert!(d.residual_inf < 0.1, "residual {}", d.residual_inf);
    }

    #[test]
    fn rho_formula_examples() {
        let sys = single_eq_system();
        // Objective |c|_1 = 1, range 3 -> delta(K=2) = 1; rho = 2*3 + 1.
        let enc = make_encoding(&sys, 2, 0).unwrap();
        assert_abs_diff_eq!(choose_rho(&sys, &enc), 7.0, epsilon = 1e-12);
        let mut flat = single_eq_system();
        flat.objective = array![0.0];
        assert_eq!(choose_rho(&flat, &enc), 1.0);
    }

    #[test]
    fn coord_dump_round_trip() {
        let sys = hand_system();
        let enc = make_encoding(&sys, 2, 2).unwrap();
        let inst = assemble(&sys, &enc, 2.5).unwrap();
        let text = to_coord_string(&inst);
        let raw = from_coord_string(&text).unwrap();
        assert_eq!(raw.dim(), inst.dim());
        assert_eq!(raw.rho, 2.5);
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for _ in 0..50 {
            let bits: Vec<u8> = (0..inst.dim()).map(|_| rng.random_range(0..2u8)).collect();
            assert_abs_diff_eq!(raw.energy(&bits), inst.energy(&bits), epsilon = 1e-9);
            let (qd, lind, off) = raw.to_dense();
            let mut e = off;
            for i in 0..inst.dim() {
                if bits[i] != 0 {
                    e += lind[i];
                    for j in 0..inst.dim() {
                        if bits[j] != 0 {
                            e += qd[[i, j]];
                        }
                    }
                }
            }
            assert_abs_diff_eq!(e, inst.energy(&bits), epsilon = 1e-9);
        }
    }
}
