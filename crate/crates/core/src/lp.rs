//! Dense two-phase primal simplex over the subproblem class
//! `min c' y` subject to `A y = b`, `C y <= d`, `lo <= y <= hi`,
//! returning primal solutions, dual multipliers, or a Farkas infeasibility
//! certificate.
//!
//! Dual convention. Box rows are folded into the inequality block, so the
//! stacked system is `C_all y <= d_all` with
//! `C_all = [C; I; -I]`, `d_all = [d; hi; -lo]` and multipliers
//! `lam >= 0` ordered the same way. At an optimum
//! `A' pi - C_all' lam = c` and `b' pi - d_all' lam = c' y*`.
//!
//! When the problem is infeasible the returned ray satisfies
//! `A' pi - C_all' lam = 0`, `lam >= 0`, and a certificate value
//! `b' pi - d_all' lam > 0`; any feasible point would force that value
//! to be <= 0.

use ndarray::{Array1, Array2};

use crate::error::{Error, Result};

pub const FEAS_TOL: f64 = 1e-7;
const PIVOT_TOL: f64 = 1e-10;

#[derive(Debug, Clone)]
pub struct LpProblem {
    pub objective: Array1<f64>,
    pub a_eq: Array2<f64>,
    pub b_eq: Array1<f64>,
    pub c_in: Array2<f64>,
    pub d_in: Array1<f64>,
    pub lo: Array1<f64>,
    pub hi: Array1<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LpStatus {
    Optimal,
    Infeasible,
}

/// Dual ray proving infeasibility.
#[derive(Debug, Clone)]
pub struct FarkasRay {
    pub pi: Array1<f64>,
    /// Over `[C rows, upper box rows, lower box rows]`, nonnegative.
    pub lam: Array1<f64>,
    /// `b' pi - d_all' lam`, strictly positive.
    pub value: f64,
}

#[derive(Debug, Clone)]
pub struct LpSolution {
    pub status: LpStatus,
    pub y: Array1<f64>,
    pub objective: f64,
    /// Equality-row duals.
    pub pi: Array1<f64>,
    /// Inequality duals over `[C rows, upper box rows, lower box rows]`.
    pub lam: Array1<f64>,
    pub farkas: Option<FarkasRay>,
}

impl LpProblem {
    fn validate(&self) -> Result<()> {
        let n = self.objective.len();
        if self.lo.len() != n || self.hi.len() != n {
            return Err(Error::ShapeMismatch("box length != objective length".into()));
        }
        if self.a_eq.nrows() != self.b_eq.len() || (self.a_eq.nrows() > 0 && self.a_eq.ncols() != n)
        {
            return Err(Error::ShapeMismatch("equality block shape".into()));
        }
        if self.c_in.nrows() != self.d_in.len() || (self.c_in.nrows() > 0 && self.c_in.ncols() != n)
        {
            return Err(Error::ShapeMismatch("inequality block shape".into()));
        }
        for i in 0..n {
            if !self.lo[i].is_finite() || !self.hi[i].is_finite() || self.lo[i] > self.hi[i] + 1e-12
            {
                return Err(Error::InvalidParameter(format!(
                    "column {i} has invalid box [{}, {}]",
                    self.lo[i], self.hi[i]
                )));
            }
        }
        Ok(())
    }
}

/// Dense simplex tableau with explicit artificial columns.
struct Tableau {
    /// rows x (ncols + 1); last column is the rhs.
    t: Vec<Vec<f64>>,
    /// Reduced-cost row, length ncols + 1 (last entry: -objective).
    cost: Vec<f64>,
    basis: Vec<usize>,
    ncols: usize,
    /// Columns barred from entering (artificials in phase 2).
    barred: Vec<bool>,
}

impl Tableau {
    fn pivot(&mut self, row: usize, col: usize) {
        let piv = self.t[row][col];
        let inv = 1.0 / piv;
        for v in self.t[row].iter_mut() {
            *v *= inv;
        }
        for r in 0..self.t.len() {
            if r != row {
                let f = self.t[r][col];
                if f != 0.0 {
                    for c in 0..=self.ncols {
                        self.t[r][c] -= f * self.t[row][c];
                    }
                }
            }
        }
        let f = self.cost[col];
        if f != 0.0 {
            for c in 0..=self.ncols {
                self.cost[c] -= f * self.t[row][c];
            }
        }
        self.basis[row] = col;
    }

    /// Run simplex to optimality. Dantzig rule with a Bland fallback.
    fn optimize(&mut self) -> Result<()> {
        let rows = self.t.len();
        let bland_after = 20 * (rows + self.ncols);
        let max_iter = 200 * (rows + self.ncols) + 2000;
        for iter in 0..max_iter {
            let bland = iter >= bland_after;
            let mut enter = None;
            if bland {
                for j in 0..self.ncols {
                    if !self.barred[j] && self.cost[j] < -PIVOT_TOL {
                        enter = Some(j);
                        break;
                    }
                }
            } else {
                let mut best = -PIVOT_TOL;
                for j in 0..self.ncols {
                    if !self.barred[j] && self.cost[j] < best {
                        best = self.cost[j];
                        enter = Some(j);
                    }
                }
            }
            let Some(col) = enter else {
                return Ok(());
            };
            let mut leave: Option<(usize, f64)> = None;
            for r in 0..rows {
                let a = self.t[r][col];
                if a > PIVOT_TOL {
                    let ratio = self.t[r][self.ncols] / a;
                    match leave {
                        None => leave = Some((r, ratio)),
                        Some((lr, lratio)) => {
                            let better = if bland {
                                ratio < lratio - 1e-12
                                    || (ratio <= lratio + 1e-12 && self.basis[r] < self.basis[lr])
                            } else {
                                ratio < lratio - 1e-12
                                    || (ratio <= lratio + 1e-12
                                        && a.abs() > self.t[lr][col].abs())
                            };
                            if better {
                                leave = Some((r, ratio));
                            }
                        }
                    }
                }
            }
            let Some((row, _)) = leave else {
                return Err(Error::LpNumerical(
                    "unbounded pivot column in a box-bounded LP".into(),
                ));
            };
            self.pivot(row, col);
        }
        Err(Error::LpNumerical(format!(
            "simplex did not converge within {max_iter} iterations"
        )))
    }
}

/// Solve the LP. Box bounds are folded into the inequality system as
/// described in the module docs.
pub fn solve_lp(p: &LpProblem) -> Result<LpSolution> {
    p.validate()?;
    let n = p.objective.len();
    let m_e = p.a_eq.nrows();
    let m_c = p.c_in.nrows();
    let rows = m_e + m_c + n;

    // Shift to yhat = y - lo >= 0. Rows (before sign normalization):
    //   eq i:        A yhat            = b - A lo
    //   ineq i:      C yhat + s_i      = d - C lo
    //   upper i:     yhat_i + s_i      = hi_i - lo_i
    let n_slack = m_c + n;
    let n_art = rows;
    let ncols = n + n_slack + n_art;

    let mut t = vec![vec![0.0; ncols + 1]; rows];
    let mut sign = vec![1.0f64; rows];
    let a_lo = if m_e > 0 { p.a_eq.dot(&p.lo) } else { Array1::zeros(0) };
    let c_lo = if m_c > 0 { p.c_in.dot(&p.lo) } else { Array1::zeros(0) };
    for i in 0..m_e {
        for j in 0..n {
            t[i][j] = p.a_eq[[i, j]];
        }
        t[i][ncols] = p.b_eq[i] - a_lo[i];
    }
    for i in 0..m_c {
        let r = m_e + i;
        for j in 0..n {
            t[r][j] = p.c_in[[i, j]];
        }
        t[r][n + i] = 1.0;
        t[r][ncols] = p.d_in[i] - c_lo[i];
    }
    for i in 0..n {
        let r = m_e + m_c + i;
        t[r][i] = 1.0;
        t[r][n + m_c + i] = 1.0;
        t[r][ncols] = p.hi[i] - p.lo[i];
    }
    for (r, row) in t.iter_mut().enumerate() {
        if row[ncols] < 0.0 {
            sign[r] = -1.0;
            for v in row.iter_mut() {
                *v = -*v;
            }
        }
        row[n + n_slack + r] = 1.0;
    }

    // Phase 1: minimize the sum of artificials.
    let mut cost = vec![0.0; ncols + 1];
    for r in 0..rows {
        for c in 0..=ncols {
            cost[c] -= t[r][c];
        }
    }
    for a in 0..n_art {
        cost[n + n_slack + a] += 1.0;
    }
    let mut tab = Tableau {
        t,
        cost,
        basis: (0..rows).map(|r| n + n_slack + r).collect(),
        ncols,
        barred: vec![false; ncols],
    };
    tab.optimize()?;
    let phase1_obj = -tab.cost[ncols];
    let scale = 1.0 + p.b_eq.iter().chain(p.d_in.iter()).fold(0.0f64, |m, v| m.max(v.abs()));
    if phase1_obj > FEAS_TOL * scale {
        // Infeasible: duals of the phase-1 optimum give the Farkas ray.
        let mut u = vec![0.0; rows];
        for r in 0..rows {
            u[r] = sign[r] * (1.0 - tab.cost[n + n_slack + r]);
        }
        let pi = Array1::from_iter(u[..m_e].iter().copied());
        let lam_c = Array1::from_shape_fn(m_c, |i| (-u[m_e + i]).max(0.0));
        let lam_up = Array1::from_shape_fn(n, |i| (-u[m_e + m_c + i]).max(0.0));
        // lam_low closes the stationarity identity exactly.
        let mut lam_low = Array1::zeros(n);
        for j in 0..n {
            let mut v = 0.0;
            for i in 0..m_e {
                v += p.a_eq[[i, j]] * pi[i];
            }
            for i in 0..m_c {
                v -= p.c_in[[i, j]] * lam_c[i];
            }
            v -= lam_up[j];
            lam_low[j] = (-v).max(0.0);
        }
        let mut lam = Array1::zeros(m_c + 2 * n);
        for i in 0..m_c {
            lam[i] = lam_c[i];
        }
        for i in 0..n {
            lam[m_c + i] = lam_up[i];
            lam[m_c + n + i] = lam_low[i];
        }
        let value = p.b_eq.dot(&pi) - p.d_in.dot(&lam_c) - p.hi.dot(&lam_up)
            + p.lo.dot(&lam_low);
        return Ok(LpSolution {
            status: LpStatus::Infeasible,
            y: p.lo.clone(),
            objective: f64::INFINITY,
            pi,
            lam,
            farkas: Some(FarkasRay {
                pi: Array1::from_iter(u[..m_e].iter().copied()),
                lam: {
                    let mut l = Array1::zeros(m_c + 2 * n);
                    for i in 0..m_c {
                        l[i] = lam_c[i];
                    }
                    for i in 0..n {
                        l[m_c + i] = lam_up[i];
                        l[m_c + n + i] = lam_low[i];
                    }
                    l
                },
                value,
            }),
        });
    }

    // Drive any remaining basic artificials out, then bar them.
    for r in 0..rows {
        if tab.basis[r] >= n + n_slack {
            if let Some(col) = (0..n + n_slack).find(|&j| tab.t[r][j].abs() > 1e-8) {
                tab.pivot(r, col);
            }
        }
    }
    for a in 0..n_art {
        tab.barred[n + n_slack + a] = true;
    }

    // Phase 2: real objective over yhat.
    let mut cost = vec![0.0; ncols + 1];
    for j in 0..n {
        cost[j] = p.objective[j];
    }
    for r in 0..rows {
        let b = tab.basis[r];
        let cb = if b < n { p.objective[b] } else { 0.0 };
        if cb != 0.0 {
            for c in 0..=ncols {
                cost[c] -= cb * tab.t[r][c];
            }
        }
    }
    tab.cost = cost;
    tab.optimize()?;

    let mut yhat = Array1::zeros(n);
    for r in 0..rows {
        if tab.basis[r] < n {
            yhat[tab.basis[r]] = tab.t[r][ncols];
        }
    }
    let y = &yhat + &p.lo;
    let objective = p.objective.dot(&y);

    // Duals from artificial-column reduced costs; lower-box duals are the
    // structural reduced costs.
    let mut u = vec![0.0; rows];
    for r in 0..rows {
        u[r] = sign[r] * (-tab.cost[n + n_slack + r]);
    }
    let pi = Array1::from_iter(u[..m_e].iter().copied());
    let lam_c = Array1::from_shape_fn(m_c, |i| (-u[m_e + i]).max(0.0));
    let lam_up = Array1::from_shape_fn(n, |i| (-u[m_e + m_c + i]).max(0.0));
    let mut lam_low = Array1::zeros(n);
    for j in 0..n {
        let mut v = p.objective[j];
        for i in 0..m_e {
            v -= p.a_eq[[i, j]] * pi[i];
        }
        for i in 0..m_c {
            v += p.c_in[[i, j]] * lam_c[i];
        }
        v += lam_up[j];
        lam_low[j] = v.max(0.0);
    }
    let mut lam = Array1::zeros(m_c + 2 * n);
    for i in 0..m_c {
        lam[i] = lam_c[i];
    }
    for i in 0..n {
        lam[m_c + i] = lam_up[i];
        lam[m_c + n + i] = lam_low[i];
    }
    Ok(LpSolution {
        status: LpStatus::Optimal,
        y,
        objective,
        pi,
        lam,
        farkas: None,
    })
}

/// Recompute every KKT residual of an optimal solution from scratch:
/// primal feasibility, dual feasibility, complementary slackness, and the
/// duality gap. Returns the largest residual.
pub fn check_kkt(p: &LpProblem, sol: &LpSolution) -> f64 {
    let n = p.objective.len();
    let m_c = p.c_in.nrows();
    let mut res = 0.0f64;
    // Primal feasibility.
    if p.a_eq.nrows() > 0 {
        for (i, r) in (p.a_eq.dot(&sol.y) - &p.b_eq).iter().enumerate() {
            let _ = i;
            res = res.max(r.abs());
        }
    }
    let slack_c = if m_c > 0 {
        &p.d_in - &p.c_in.dot(&sol.y)
    } else {
        Array1::zeros(0)
    };
    for s in slack_c.iter() {
        res = res.max(-s);
    }
    for j in 0..n {
        res = res.max(p.lo[j] - sol.y[j]);
        res = res.max(sol.y[j] - p.hi[j]);
    }
    // Dual feasibility: A' pi - C_all' lam = c, lam >= 0.
    for l in sol.lam.iter() {
        res = res.max(-l);
    }
    for j in 0..n {
        let mut v = 0.0;
        for i in 0..p.a_eq.nrows() {
            v += p.a_eq[[i, j]] * sol.pi[i];
        }
        for i in 0..m_c {
            v -= p.c_in[[i, j]] * sol.lam[i];
        }
        v -= sol.lam[m_c + j];
        v += sol.lam[m_c + n + j];
        res = res.max((v - p.objective[j]).abs());
    }
    // Complementary slackness.
    for i in 0..m_c {
        res = res.max((sol.lam[i] * slack_c[i]).abs());
    }
    for j in 0..n {
        res = res.max((sol.lam[m_c + j] * (p.hi[j] - sol.y[j])).abs());
        res = res.max((sol.lam[m_c + n + j] * (sol.y[j] - p.lo[j])).abs());
    }
    // Duality gap.
    let dual_obj = p.b_eq.dot(&sol.pi)
        - (0..m_c).map(|i| p.d_in[i] * sol.lam[i]).sum::<f64>()
        - (0..n).map(|j| p.hi[j] * sol.lam[m_c + j]).sum::<f64>()
        + (0..n).map(|j| p.lo[j] * sol.lam[m_c + n + j]).sum::<f64>();
    res = res.max((dual_obj - sol.objective).abs());
    res
}

/// Verify a Farkas ray algebraically: stationarity `A' pi - C_all' lam = 0`,
/// `lam >= 0`, and a strictly positive certificate value.
pub fn check_farkas(p: &LpProblem, ray: &FarkasRay) -> f64 {
    let n = p.objective.len();
    let m_c = p.c_in.nrows();
    let mut res = 0.0f64;
    for l in ray.lam.iter() {
        res = res.max(-l);
    }
    for j in 0..n {
        let mut v = 0.0;
        for i in 0..p.a_eq.nrows() {
            v += p.a_eq[[i, j]] * ray.pi[i];
        }
        for i in 0..m_c {
            v -= p.c_in[[i, j]] * ray.lam[i];
        }
        v -= ray.lam[m_c + j];
        v += ray.lam[m_c + n + j];
        res = res.max(v.abs());
    }
    let value = p.b_eq.dot(&ray.pi)
        - (0..m_c).map(|i| p.d_in[i] * ray.lam[i]).sum::<f64>()
        - (0..n).map(|j| p.hi[j] * ray.lam[m_c + j]).sum::<f64>()
        + (0..n).map(|j| p.lo[j] * ray.lam[m_c + n + j]).sum::<f64>();
    res = res.max((value - ray.value).abs());
    if value <= 0.0 {
        res = res.max(1.0);
    }
    res
}
