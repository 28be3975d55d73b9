//! Benders decomposition over the mixed constraint systems: a binary
//! master over the segment selectors accumulates optimality and
//! feasibility cuts, and an LP subproblem prices each candidate selector.
//!
//! Cuts live in the solver's dual convention (box rows folded into the
//! inequality multipliers, see the LP module): an optimal subproblem at
//! `beta_k` yields
//!
//! `theta >= b0' pi - d0' lam_c - hi' lam_up + lo' lam_low + (B' pi - D' lam_c)' beta`
//!
//! and a Farkas ray yields the same expression required to be <= 0. The
//! master can be solved exhaustively (exact) or through the QUBO pipeline
//! with simulated annealing; annealed masters only propose candidates and
//! never by themselves raise the certified lower bound.

use std::collections::HashSet;

use ndarray::{Array1, Array2};
use serde::Serialize;

use crate::anneal::{self, AnnealConfig};
use crate::error::{Error, Result};
use crate::lp::{self, LpSolution, LpStatus};
use crate::qubo;
use crate::system::{MixedConstraintSystem, VariableLayout};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum CutKind {
    Optimality,
    Feasibility,
}

#[derive(Debug, Clone, Serialize)]
pub struct BendersCut {
    pub kind: CutKind,
    pub constant: f64,
    pub coef: Vec<f64>,
}

impl BendersCut {
    pub fn eval(&self, beta: &Array1<f64>) -> f64 {
        self.constant
            + self
                .coef
                .iter()
                .zip(beta.iter())
                .map(|(c, b)| c * b)
                .sum::<f64>()
    }
}

const CUT_TOL: f64 = 1e-6;

/// Solve SP(beta) and derive the corresponding cut. The cut is validated
/// at its generating point before being returned: an optimality cut must
/// reproduce the subproblem optimum, a feasibility cut must be violated.
pub fn subproblem(
    system: &MixedConstraintSystem,
    beta: &Array1<f64>,
) -> Result<(LpSolution, BendersCut)> {
    let p = system.layout.num_beta();
    let n = system.layout.num_continuous();
    let m_c = system.num_ineq_rows();
    let sol = lp::solve_lp(&system.lp_for_beta(beta))?;
    let (pi, lam) = match sol.status {
        LpStatus::Optimal => (sol.pi.clone(), sol.lam.clone()),
        LpStatus::Infeasible => {
            let ray = sol.farkas.as_ref().ok_or_else(|| {
                Error::Internal("infeasible subproblem without a Farkas ray".into())
            })?;
            (ray.pi.clone(), ray.lam.clone())
        }
    };
    let mut constant = system.b0.dot(&pi);
    for j in 0..m_c {
        constant -= system.d0[j] * lam[j];
    }
    for i in 0..n {
        constant -= system.layout.hi[i] * lam[m_c + i];
        constant += system.layout.lo[i] * lam[m_c + n + i];
    }
    let coef: Vec<f64> = (0..p)
        .map(|b| {
            let mut v = 0.0;
            for r in 0..system.num_eq_rows() {
                v += system.b_coef[[r, b]] * pi[r];
            }
            for j in 0..m_c {
                v -= system.d_coef[[j, b]] * lam[j];
            }
            v
        })
        .collect();
    let cut = BendersCut {
        kind: if sol.status == LpStatus::Optimal {
            CutKind::Optimality
        } else {
            CutKind::Feasibility
        },
        constant,
        coef,
    };
    let at_gen = cut.eval(beta);
    match cut.kind {
        CutKind::Optimality => {
            let scale = 1.0 + sol.objective.abs();
            if (at_gen - sol.objective).abs() > CUT_TOL * scale {
                return Err(Error::Internal(format!(
                    "optimality cut reproduces {at_gen} instead of the subproblem \
                     optimum {}",
                    sol.objective
                )));
            }
        }
        CutKind::Feasibility => {
            if at_gen <= 0.0 {
                return Err(Error::Internal(format!(
                    "feasibility cut not violated at its generating point ({at_gen})"
                )));
            }
        }
    }
    Ok((sol, cut))
}

/// Objective lower bound over the boxes alone, without the offset; the
/// master floor before any optimality cut exists.
fn raw_box_lower_bound(system: &MixedConstraintSystem) -> f64 {
    let mut lb = 0.0;
    for (i, &c) in system.objective.iter().enumerate() {
        lb += (c * system.layout.lo[i]).min(c * system.layout.hi[i]);
    }
    lb
}

fn theta_of(system: &MixedConstraintSystem, cuts: &[BendersCut], beta: &Array1<f64>) -> f64 {
    let mut theta = raw_box_lower_bound(system);
    for cut in cuts {
        if cut.kind == CutKind::Optimality {
            theta = theta.max(cut.eval(beta));
        }
    }
    theta
}

fn excluded(cuts: &[BendersCut], beta: &Array1<f64>) -> bool {
    cuts.iter()
        .any(|c| c.kind == CutKind::Feasibility && c.eval(beta) > CUT_TOL)
}

fn lex_less(a: &Array1<f64>, b: &Array1<f64>) -> bool {
    for (x, y) in a.iter().zip(b.iter()) {
        if x != y {
            return x < y;
        }
    }
    false
}

/// Exact master: enumerate one-hot-valid selectors, drop those excluded by
/// feasibility cuts, minimize the cut envelope. Ties break to the
/// lexicographically smallest selector. `None` when every selector is cut
/// off.
pub fn master_exhaustive(
    system: &MixedConstraintSystem,
    cuts: &[BendersCut],
) -> Option<(Array1<f64>, f64)> {
    let mut best: Option<(Array1<f64>, f64)> = None;
    for beta in system.one_hot_assignments() {
        if excluded(cuts, &beta) {
            continue;
        }
        let theta = theta_of(system, cuts, &beta);
        let better = match &best {
            None => true,
            Some((bb, bt)) => {
                theta < bt - 1e-12 || ((theta - bt).abs() <= 1e-12 && lex_less(&beta, bb))
            }
        };
        if better {
            best = Some((beta, theta));
        }
    }
    best
}

/// Annealed master: the epigraph `min theta s.t. theta >= cut(beta)` is
/// itself a mixed system over one continuous column, lowered through the
/// QUBO pipeline and solved with simulated annealing. The decoded selector
/// is repaired to one-hot validity; the returned theta is recomputed
/// exactly from the cuts, so annealing errors can only misdirect the
/// search, never corrupt bounds.
pub fn master_anneal(
    system: &MixedConstraintSystem,
    cuts: &[BendersCut],
    theta_lo: f64,
    theta_hi: f64,
    cfg: &AnnealConfig,
) -> Result<Option<(Array1<f64>, f64)>> {
    let p = system.layout.num_beta();
    let opt_cuts: Vec<&BendersCut> = cuts.iter().filter(|c| c.kind == CutKind::Optimality).collect();
    let feas_cuts: Vec<&BendersCut> =
        cuts.iter().filter(|c| c.kind == CutKind::Feasibility).collect();
    let m = opt_cuts.len() + feas_cuts.len();
    let theta_hi = theta_hi.max(theta_lo + 1e-9);
    let mut c_in = Array2::zeros((m, 1));
    let mut d0 = Array1::zeros(m);
    let mut d_coef = Array2::zeros((m, p));
    for (r, cut) in opt_cuts.iter().chain(feas_cuts.iter()).enumerate() {
        // Optimality: cut(beta) - theta <= 0; feasibility: cut(beta) <= 0.
        if r < opt_cuts.len() {
            c_in[[r, 0]] = -1.0;
        }
        d0[r] = -cut.constant;
        for b in 0..p {
            d_coef[[r, b]] = -cut.coef[b];
        }
    }
    let epigraph = MixedConstraintSystem {
        objective: Array1::from(vec![1.0]),
        objective_offset: 0.0,
        a_eq: Array2::zeros((0, 1)),
        b0: Array1::zeros(0),
        b_coef: Array2::zeros((0, p)),
        c_in,
        d0,
        d_coef,
        one_hot: system.one_hot.clone(),
        layout: VariableLayout {
            names: vec!["theta".into()],
            lo: vec![theta_lo],
            hi: vec![theta_hi],
            input_cols: vec![],
            beta_names: system.layout.beta_names.clone(),
        },
    };
    let enc = qubo::make_encoding(&epigraph, 10, 8)?;
    let rho = qubo::choose_rho(&epigraph, &enc);
    let inst = qubo::assemble(&epigraph, &enc, rho)?;
    let sa = anneal::solve_sa(&inst, cfg)?;
    let decoded = qubo::decode(&epigraph, &enc, &sa.bits)?;

    // Repair to a one-hot-valid selector.
    let mut beta = decoded.beta.clone();
    for g in &system.one_hot {
        let on: Vec<usize> = g.cols.iter().copied().filter(|&c| beta[c] > 0.5).collect();
        let keep = *on.first().unwrap_or(&g.cols[0]);
        for &c in &g.cols {
            beta[c] = if c == keep { 1.0 } else { 0.0 };
        }
    }
    if excluded(cuts, &beta) {
        // The annealer proposed a cut-off selector; fall back to the exact
        // master so progress never stalls.
        return Ok(master_exhaustive(system, cuts));
    }
    Ok(Some((beta.clone(), theta_of(system, cuts, &beta))))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum MasterMode {
    Exhaustive,
    Anneal,
}

/// One master/subproblem round, for the serialized audit trail.
#[derive(Debug, Clone, Serialize)]
pub struct IterationRecord {
    pub iteration: usize,
    pub beta: Vec<f64>,
    pub master_theta: f64,
    pub subproblem_objective: Option<f64>,
    pub cut: BendersCut,
    pub lower: f64,
    pub upper: f64,
}

#[derive(Debug, Serialize)]
pub struct BendersResult {
    /// Certified optimum including the objective's constant part.
    pub objective: f64,
    pub lower: f64,
    pub upper: f64,
    #[serde(skip)]
    pub beta: Array1<f64>,
    #[serde(skip)]
    pub y: Array1<f64>,
    pub iterations: usize,
    pub complete: bool,
    pub trail: Vec<IterationRecord>,
}

impl BendersResult {
    pub fn trail_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(&self.trail)?)
    }
}

/// Full decomposition loop. With the exhaustive master the certified
/// bounds are exact; with the annealed master the lower bound is only
/// raised through an exact re-solve (affordable whenever the one-hot
/// space has at most 2^20 points), so certificates never rest on
/// annealing having found a ground state.
pub fn run(
    system: &MixedConstraintSystem,
    mode: MasterMode,
    tol: f64,
    max_iter: usize,
    seed: u64,
) -> Result<BendersResult> {
    if tol <= 0.0 {
        return Err(Error::InvalidParameter(format!("tol must be > 0, got {tol}")));
    }
    let offset = system.objective_offset;
    let exact_lb_affordable = system.assignment_count() <= 1 << 20;
    let mut cuts: Vec<BendersCut> = Vec::new();
    let mut trail = Vec::new();
    let mut lower = raw_box_lower_bound(system);
    let mut upper = f64::INFINITY;
    let mut incumbent: Option<(Array1<f64>, Array1<f64>)> = None;
    let mut visited: HashSet<Vec<u8>> = HashSet::new();
    let mut complete = false;
    let mut iterations = 0;

    for it in 0..max_iter {
        iterations = it + 1;
        let proposal = match mode {
            MasterMode::Exhaustive => master_exhaustive(system, &cuts),
            MasterMode::Anneal => {
                let theta_hi = if upper.is_finite() { upper } else { lower + 1e3 };
                let cfg = AnnealConfig {
                    sweeps: 400,
                    restarts: 6,
                    seed: seed.wrapping_add(it as u64),
                    ..AnnealConfig::default()
                };
                master_anneal(system, &cuts, lower, theta_hi, &cfg)?
            }
        };
        let Some((beta, theta)) = proposal else {
            return Err(Error::Internal(
                "every selector was excluded by feasibility cuts; model systems \
                 always admit one"
                    .into(),
            ));
        };
        match mode {
            MasterMode::Exhaustive => lower = lower.max(theta),
            MasterMode::Anneal => {
                if exact_lb_affordable {
                    if let Some((_, exact_theta)) = master_exhaustive(system, &cuts) {
                        lower = lower.max(exact_theta);
                    }
                }
            }
        }

        let (sol, cut) = subproblem(system, &beta)?;
        let sp_obj = (sol.status == LpStatus::Optimal).then_some(sol.objective);
        if let Some(obj) = sp_obj {
            if obj < upper {
                upper = obj;
                incumbent = Some((beta.clone(), sol.y.clone()));
            }
        }
        trail.push(IterationRecord {
            iteration: it,
            beta: beta.to_vec(),
            master_theta: theta,
            subproblem_objective: sp_obj,
            cut: cut.clone(),
            lower: lower + offset,
            upper: upper + offset,
        });
        cuts.push(cut);
        if upper - lower <= tol {
            complete = true;
            break;
        }
        let key: Vec<u8> = beta.iter().map(|&b| b as u8).collect();
        if !visited.insert(key) && mode == MasterMode::Anneal && !exact_lb_affordable {
            // Revisiting without an exact master cannot tighten further.
            break;
        }
    }
    if !complete && upper - lower <= tol {
        complete = true;
    }
    let (beta, y) = incumbent.ok_or_else(|| {
        Error::Internal("no feasible subproblem encountered before termination".into())
    })?;
    Ok(BendersResult {
        objective: upper + offset,
        lower: lower + offset,
        upper: upper + offset,
        beta,
        y,
        iterations,
        complete,
        trail,
    })
}
