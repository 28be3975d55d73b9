//! The mixed binary/continuous constraint system shared by both encoders,
//! plus the ground-truth feasibility checker and the enumerate-over-beta
//! reference solver.
//!
//! A system captures
//!     min  c~' y + offset
//!     s.t. A y  = b0 + B beta      (equalities; one-hot rows included)
//!          C y <= d0 + D beta      (inequalities)
//!          lo <= y <= hi           (per-column boxes)
//! with beta binary, partitioned into one-hot groups of segment selectors.

use ndarray::{Array1, Array2};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::lp::{self, LpStatus};

/// Exactly one selector in `cols` (indices into the beta vector) is 1.
#[derive(Debug, Clone, Serialize)]
pub struct OneHotGroup {
    pub cols: Vec<usize>,
    /// Human-readable owner, e.g. "z1[0]".
    pub label: String,
}

/// Column map for the continuous vector plus per-column boxes.
#[derive(Debug, Clone, Serialize)]
pub struct VariableLayout {
    pub names: Vec<String>,
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
    /// Columns holding the network input, for counterexample extraction.
    pub input_cols: Vec<usize>,
    pub beta_names: Vec<String>,
}

impl VariableLayout {
    pub fn num_continuous(&self) -> usize {
        self.names.len()
    }

    pub fn num_beta(&self) -> usize {
        self.beta_names.len()
    }
}

#[derive(Debug, Clone)]
pub struct MixedConstraintSystem {
    /// Objective over the continuous columns.
    pub objective: Array1<f64>,
    /// Constant folded out of the objective (degenerate neurons).
    pub objective_offset: f64,
    pub a_eq: Array2<f64>,
    pub b0: Array1<f64>,
    pub b_coef: Array2<f64>,
    pub c_in: Array2<f64>,
    pub d0: Array1<f64>,
    pub d_coef: Array2<f64>,
    pub one_hot: Vec<OneHotGroup>,
    pub layout: VariableLayout,
}

/// Result of checking a candidate point against every constraint.
#[derive(Debug, Clone, Copy)]
pub struct FeasibilityReport {
    pub objective: f64,
    pub max_violation: f64,
}

impl MixedConstraintSystem {
    pub fn num_eq_rows(&self) -> usize {
        self.a_eq.nrows()
    }

    pub fn num_ineq_rows(&self) -> usize {
        self.c_in.nrows()
    }

    /// Objective value and the largest signed constraint violation of a
    /// candidate `(y, beta)`. The ground-truth oracle every solver is
    /// checked against.
    pub fn eval_feasible(&self, y: &Array1<f64>, beta: &Array1<f64>) -> Result<FeasibilityReport> {
        let n = self.layout.num_continuous();
        let p = self.layout.num_beta();
        if y.len() != n || beta.len() != p {
            return Err(Error::ShapeMismatch(format!(
                "candidate dims ({}, {}) != layout dims ({n}, {p})",
                y.len(),
                beta.len()
            )));
        }
        let mut viol = 0.0f64;
        let eq_res = self.a_eq.dot(y) - &self.b0 - self.b_coef.dot(beta);
        for r in eq_res.iter() {
            viol = viol.max(r.abs());
        }
        let ineq_res = self.c_in.dot(y) - &self.d0 - self.d_coef.dot(beta);
        for r in ineq_res.iter() {
            viol = viol.max(*r);
        }
        for i in 0..n {
            viol = viol.max(self.layout.lo[i] - y[i]);
            viol = viol.max(y[i] - self.layout.hi[i]);
        }
        for b in beta.iter() {
            viol = viol.max((b * (1.0 - b)).abs());
        }
        Ok(FeasibilityReport {
            objective: self.objective.dot(y) + self.objective_offset,
            max_violation: viol,
        })
    }

    /// Beta columns not covered by any one-hot group (free binaries).
    pub fn ungrouped_beta(&self) -> Vec<usize> {
        let mut covered = vec![false; self.layout.num_beta()];
        for g in &self.one_hot {
            for &c in &g.cols {
                covered[c] = true;
            }
        }
        covered
            .iter()
            .enumerate()
            .filter(|(_, &c)| !c)
            .map(|(i, _)| i)
            .collect()
    }

    /// Number of binary assignments respecting the one-hot groups.
    pub fn assignment_count(&self) -> u128 {
        let mut count: u128 = 1;
        for g in &self.one_hot {
            count = count.saturating_mul(g.cols.len() as u128);
        }
        count.saturating_mul(1u128 << self.ungrouped_beta().len().min(127))
    }

    /// Enumerate every one-hot-valid beta assignment.
    pub fn one_hot_assignments(&self) -> Vec<Array1<f64>> {
        let p = self.layout.num_beta();
        let free = self.ungrouped_beta();
        let mut out = vec![Array1::zeros(p)];
        for g in &self.one_hot {
            let mut next = Vec::with_capacity(out.len() * g.cols.len());
            for base in &out {
                for &c in &g.cols {
                    let mut b = base.clone();
                    b[c] = 1.0;
                    next.push(b);
                }
            }
            out = next;
        }
        for &c in &free {
            let mut next = Vec::with_capacity(out.len() * 2);
            for base in &out {
                let mut b1 = base.clone();
                b1[c] = 1.0;
                next.push(base.clone());
                next.push(b1);
            }
            out = next;
        }
        out
    }

    /// The LP over `y` with beta fixed.
    pub fn lp_for_beta(&self, beta: &Array1<f64>) -> lp::LpProblem {
        lp::LpProblem {
            objective: self.objective.clone(),
            a_eq: self.a_eq.clone(),
            b_eq: &self.b0 + &self.b_coef.dot(beta),
            c_in: self.c_in.clone(),
            d_in: &self.d0 + &self.d_coef.dot(beta),
            lo: Array1::from(self.layout.lo.clone()),
            hi: Array1::from(self.layout.hi.clone()),
        }
    }

    /// Trivial lower bound on the objective from the column boxes alone.
    pub fn box_objective_lower_bound(&self) -> f64 {
        let mut lb = self.objective_offset;
        for (i, &c) in self.objective.iter().enumerate() {
            lb += (c * self.layout.lo[i]).min(c * self.layout.hi[i]);
        }
        lb
    }

    /// Dense JSON dump for debugging (`encode` subcommand).
    pub fn to_debug_json(&self) -> Result<String> {
        #[derive(Serialize)]
        struct Dump<'a> {
            objective: Vec<f64>,
            objective_offset: f64,
            a_eq: Vec<Vec<f64>>,
            b0: Vec<f64>,
            b_coef: Vec<Vec<f64>>,
            c_in: Vec<Vec<f64>>,
            d0: Vec<f64>,
            d_coef: Vec<Vec<f64>>,
            one_hot: &'a [OneHotGroup],
            layout: &'a VariableLayout,
        }
        let rows = |m: &Array2<f64>| -> Vec<Vec<f64>> {
            m.rows().into_iter().map(|r| r.to_vec()).collect()
        };
        Ok(serde_json::to_string_pretty(&Dump {
            objective: self.objective.to_vec(),
            objective_offset: self.objective_offset,
            a_eq: rows(&self.a_eq),
            b0: self.b0.to_vec(),
            b_coef: rows(&self.b_coef),
            c_in: rows(&self.c_in),
            d0: self.d0.to_vec(),
            d_coef: rows(&self.d_coef),
            one_hot: &self.one_hot,
            layout: &self.layout,
        })?)
    }
}

/// Outcome of the enumerate-over-beta reference solver.
#[derive(Debug, Clone)]
pub struct EnumerateResult {
    pub objective: f64,
    pub best_beta: Array1<f64>,
    pub best_y: Array1<f64>,
    /// Assignments whose LP was feasible.
    pub feasible_count: usize,
    pub assignment_count: usize,
}

/// Solve the system exactly by trying every one-hot-valid beta and solving
/// the remaining LP. Exponential in the number of neurons; the reference
/// route for everything else.
pub fn solve_enumerate(system: &MixedConstraintSystem) -> Result<EnumerateResult> {
    let assignments = system.one_hot_assignments();
    let total = assignments.len();
    let mut best: Option<(f64, Array1<f64>, Array1<f64>)> = None;
    let mut feasible = 0usize;
    for beta in assignments {
        let sol = lp::solve_lp(&system.lp_for_beta(&beta))?;
        if sol.status == LpStatus::Optimal {
            feasible += 1;
            let obj = sol.objective + system.objective_offset;
            if best.as_ref().is_none_or(|(b, _, _)| obj < *b) {
                best = Some((obj, beta, sol.y));
            }
        }
    }
    let (objective, best_beta, best_y) = best.ok_or_else(|| {
        Error::Internal("every one-hot assignment yields an infeasible LP".into())
    })?;
    Ok(EnumerateResult {
        objective,
        best_beta,
        best_y,
        feasible_count: feasible,
        assignment_count: total,
    })
}
