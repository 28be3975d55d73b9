//! Layerwise split verification: a classical interval pass abstracts the
//! first `cut` layers into a reachability box, and only the suffix is
//! encoded and solved. Trades precision (the box forgets correlations)
//! for suffix instances small enough for a fixed spin budget.
//!
//! Suffix counterexamples are points of the prefix box, which may be
//! unreachable from any real input, so this mode reports robust or
//! unknown but never nonrobust.

use ndarray::Array1;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::interval;
use crate::net::Network;
use crate::pwl;
use crate::qubo;
use crate::stepbound;
use crate::benders;
use crate::system::{solve_enumerate, MixedConstraintSystem};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum PartitionVerdict {
    Robust,
    Unknown,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SuffixSolver {
    Enumerate,
    Benders,
}

#[derive(Debug, Clone, Serialize)]
pub struct PartitionReport {
    pub cut: usize,
    /// Certified lower bound on the true-minus-target margin, minimized
    /// over target classes and the prefix box.
    pub margin_lower: f64,
    pub verdict: PartitionVerdict,
    pub suffix_spins: usize,
    pub prefix_lo: Vec<f64>,
    pub prefix_hi: Vec<f64>,
}

/// QUBO dimension the system would occupy, the hardware resource metric.
pub fn spin_count(system: &MixedConstraintSystem, bits_per_var: usize, bits_per_slack: usize) -> Result<usize> {
    let enc = qubo::make_encoding(system, bits_per_var, bits_per_slack)?;
    Ok(enc.num_y_bits + enc.num_s_bits + system.layout.num_beta())
}

const SPIN_BITS_VAR: usize = 4;
const SPIN_BITS_SLACK: usize = 4;

fn suffix_of(net: &Network, cut: usize) -> Result<Network> {
    let prefix_out = net.layers[cut - 1].out_dim();
    Network::new(prefix_out, net.activation, net.layers[cut..].to_vec())
}

fn margin_system(
    net: &Network,
    in_lo: &Array1<f64>,
    in_hi: &Array1<f64>,
    true_class: usize,
    target_class: usize,
    segments: usize,
) -> Result<MixedConstraintSystem> {
    let bounds = interval::propagate_box(net, in_lo, in_hi)?;
    if net.activation.is_piecewise_linear() {
        let tables = pwl::default_tables_model1(net, &bounds)?;
        pwl::build_model1_box(net, in_lo, in_hi, true_class, target_class, &tables, &bounds, true)
    } else {
        let tables = stepbound::default_tables_model2(net, &bounds, segments)?;
        stepbound::build_model2_box(
            net, in_lo, in_hi, true_class, target_class, &tables, &bounds, true,
        )
    }
}

/// Certified margin lower bound for one class pair over an input box,
/// through whichever encoder matches the activation.
fn solve_margin(system: &MixedConstraintSystem, solver: SuffixSolver) -> Result<f64> {
    match solver {
        SuffixSolver::Enumerate => Ok(solve_enumerate(system)?.objective),
        SuffixSolver::Benders => {
            Ok(benders::run(system, benders::MasterMode::Exhaustive, 1e-6, 10_000, 0)?.objective)
        }
    }
}

/// Verify the full network by abstracting layers `1..=cut` into an
/// interval box and solving the margin problem on the remaining layers
/// over that box. `cut` ranges over `1..=L-1`.
pub fn split_verify(
    net: &Network,
    x0: &Array1<f64>,
    eps: f64,
    true_class: usize,
    cut: usize,
    solver: SuffixSolver,
    segments: usize,
) -> Result<PartitionReport> {
    let layers = net.layers.len();
    if cut == 0 || cut >= layers {
        return Err(Error::InvalidCut { cut, layers });
    }
    let full_bounds = interval::propagate(net, x0, eps)?;
    let box_lo = full_bounds.a_lo[cut - 1].clone();
    let box_hi = full_bounds.a_hi[cut - 1].clone();
    let suffix = suffix_of(net, cut)?;
    let num_classes = suffix.output_dim();

    let mut margin = f64::INFINITY;
    let mut spins = 0;
    for target in (0..num_classes).filter(|&t| t != true_class) {
        let sys = margin_system(&suffix, &box_lo, &box_hi, true_class, target, segments)?;
        spins = spins.max(spin_count(&sys, SPIN_BITS_VAR, SPIN_BITS_SLACK)?);
        margin = margin.min(solve_margin(&sys, solver)?);
    }
    Ok(PartitionReport {
        cut,
        margin_lower: margin,
        verdict: if margin > 0.0 {
            PartitionVerdict::Robust
        } else {
            PartitionVerdict::Unknown
        },
        suffix_spins: spins,
        prefix_lo: box_lo.to_vec(),
        prefix_hi: box_hi.to_vec(),
    })
}

/// Spin cost of verifying the whole network without a split (worst class
/// pair).
pub fn full_spin_count(
    net: &Network,
    x0: &Array1<f64>,
    eps: f64,
    true_class: usize,
    segments: usize,
) -> Result<usize> {
    let lo = x0.mapv(|v| v - eps);
    let hi = x0.mapv(|v| v + eps);
    let mut spins = 0;
    for target in (0..net.output_dim()).filter(|&t| t != true_class) {
        let sys = margin_system(net, &lo, &hi, true_class, target, segments)?;
        spins = spins.max(spin_count(&sys, SPIN_BITS_VAR, SPIN_BITS_SLACK)?);
    }
    Ok(spins)
}

/// Smallest cut whose suffix fits the spin budget; 0 means the whole
/// network fits without a split.
pub fn suggest_cut(
    net: &Network,
    spin_budget: usize,
    x0: &Array1<f64>,
    eps: f64,
    true_class: usize,
    segments: usize,
) -> Result<usize> {
    if full_spin_count(net, x0, eps, true_class, segments)? <= spin_budget {
        return Ok(0);
    }
    let full_bounds = interval::propagate(net, x0, eps)?;
    for cut in 1..net.layers.len() {
        let suffix = suffix_of(net, cut)?;
        let box_lo = &full_bounds.a_lo[cut - 1];
        let box_hi = &full_bounds.a_hi[cut - 1];
        let mut spins = 0;
        for target in (0..suffix.output_dim()).filter(|&t| t != true_class) {
            let sys = margin_system(&suffix, box_lo, box_hi, true_class, target, segments)?;
            spins = spins.max(spin_count(&sys, SPIN_BITS_VAR, SPIN_BITS_SLACK)?);
        }
        if spins <= spin_budget {
            return Ok(cut);
        }
    }
    Err(Error::SpinBudgetExceeded(spin_budget))
}

/// Exact full-network margin on piecewise-linear fixtures, the oracle the
/// soundness tests compare against.
pub fn full_margin_enumerate(
    net: &Network,
    x0: &Array1<f64>,
    eps: f64,
    true_class: usize,
) -> Result<f64> {
    let lo = x0.mapv(|v| v - eps);
    let hi = x0.mapv(|v| v + eps);
    let mut margin = f64::INFINITY;
    for target in (0..net.output_dim()).filter(|&t| t != true_class) {
        let sys = margin_system(net, &lo, &hi, true_class, target, 1)?;
        margin = margin.min(solve_enumerate(&sys)?.objective);
    }
    Ok(margin)
}
