//! Verification campaigns: per-sample robustness queries with an interval
//! pre-screen, pluggable solvers, replay-validated counterexamples, and
//! machine-readable reports over an epsilon grid.

use std::time::Instant;

use ndarray::Array1;
use serde::Serialize;

use crate::anneal::{self, AnnealConfig, EXHAUSTIVE_CAP};
use crate::benders;
use crate::error::{Error, Result};
use crate::interval;
use crate::net::{logit_margin, Network, Sample};
use crate::pwl;
use crate::qubo;
use crate::stepbound;
use crate::system::{solve_enumerate, MixedConstraintSystem};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Verdict {
    Robust,
    Nonrobust,
    Unknown,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Solver {
    Enumerate,
    QuboSa,
    Benders,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum ModelKind {
    /// Exact big-M encoding; piecewise-linear activations only.
    Exact,
    /// Piecewise-constant step-bound relaxation; any monotone activation.
    StepBound,
}

#[derive(Debug, Clone, Copy)]
pub struct CampaignOpts {
    pub segments: usize,
    pub bits_per_var: usize,
    pub bits_per_slack: usize,
    pub budget_ms: u64,
    pub seed: u64,
}

impl Default for CampaignOpts {
    fn default() -> Self {
        Self {
            segments: 2,
            bits_per_var: 4,
            bits_per_slack: 4,
            budget_ms: 5000,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct SampleReport {
    pub index: usize,
    pub verdict: Verdict,
    /// Certified lower bound on the worst class-pair margin, when a sound
    /// solver produced one.
    pub margin_lower: Option<f64>,
    pub counterexample: Option<Vec<f64>>,
    pub replayed_margin: Option<f64>,
    pub spins: usize,
    pub solver: Solver,
    pub screened_by_ibp: bool,
    pub budget_exhausted: bool,
    pub wall_ms: u64,
}

#[derive(Debug, Clone, Serialize)]
pub struct EpsReport {
    pub eps: f64,
    pub certified_accuracy: f64,
    pub vulnerable: usize,
    pub unknown: usize,
    pub spin_mean: f64,
    pub spin_min: usize,
    pub spin_max: usize,
    pub samples: Vec<SampleReport>,
}

#[derive(Debug, Clone, Serialize)]
pub struct CampaignReport {
    pub model: ModelKind,
    pub solver: Solver,
    pub eps_grid: Vec<f64>,
    pub reports: Vec<EpsReport>,
}

/// Interval pre-screen: a positive lower bound on every class-pair margin
/// certifies the sample without encoding anything.
fn ibp_margin_lower(net: &Network, x0: &Array1<f64>, eps: f64, label: usize) -> Result<f64> {
    let bounds = interval::propagate(net, x0, eps)?;
    let lo = bounds.a_lo.last().unwrap();
    let hi = bounds.a_hi.last().unwrap();
    let mut worst = f64::INFINITY;
    for t in (0..net.output_dim()).filter(|&t| t != label) {
        worst = worst.min(lo[label] - hi[t]);
    }
    Ok(worst)
}

fn build_system(
    net: &Network,
    x0: &Array1<f64>,
    eps: f64,
    label: usize,
    target: usize,
    model: ModelKind,
    opts: &CampaignOpts,
) -> Result<MixedConstraintSystem> {
    let bounds = interval::propagate(net, x0, eps)?;
    match model {
        ModelKind::Exact => {
            let tables = pwl::default_tables_model1(net, &bounds)?;
            pwl::build_model1(net, x0, eps, label, target, &tables, &bounds)
        }
        ModelKind::StepBound => {
            let tables = stepbound::default_tables_model2(net, &bounds, opts.segments)?;
            stepbound::build_model2(net, x0, eps, label, target, &tables, &bounds, true)
        }
    }
}

/// A counterexample only counts after replaying it through the network:
/// it must sit inside the ball and lose (or tie) the margin.
fn validate_counterexample(
    net: &Network,
    x0: &Array1<f64>,
    eps: f64,
    label: usize,
    x: &Array1<f64>,
) -> Result<Option<f64>> {
    let in_ball = x
        .iter()
        .zip(x0.iter())
        .all(|(&v, &c)| (v - c).abs() <= eps + 1e-9);
    if !in_ball {
        return Ok(None);
    }
    let margin = logit_margin(&net.forward(x)?, label)?;
    Ok((margin <= 0.0).then_some(margin))
}

fn input_point(system: &MixedConstraintSystem, y: &Array1<f64>) -> Array1<f64> {
    Array1::from_iter(system.layout.input_cols.iter().map(|&c| y[c]))
}

/// Verify one sample at one radius. The exact model with a complete
/// solver decides robust/nonrobust; the step-bound model certifies robust
/// when its lower bound is positive and falls back to replayed candidate
/// points for falsification; annealing alone never certifies.
pub fn verify_sample(
    net: &Network,
    sample: &Sample,
    index: usize,
    eps: f64,
    model: ModelKind,
    solver: Solver,
    opts: &CampaignOpts,
) -> Result<SampleReport> {
    let start = Instant::now();
    let x0 = Array1::from(sample.x0.clone());
    let label = sample.label;
    let mut report = SampleReport {
        index,
        verdict: Verdict::Unknown,
        margin_lower: None,
        counterexample: None,
        replayed_margin: None,
        spins: 0,
        solver,
        screened_by_ibp: false,
        budget_exhausted: false,
        wall_ms: 0,
    };
    let done = |mut r: SampleReport| {
        r.wall_ms = start.elapsed().as_millis() as u64;
        Ok(r)
    };

    // A misclassified center is its own counterexample.
    if let Some(m) = validate_counterexample(net, &x0, eps, label, &x0)? {
        report.verdict = Verdict::Nonrobust;
        report.counterexample = Some(x0.to_vec());
        report.replayed_margin = Some(m);
        return done(report);
    }

    let screen = ibp_margin_lower(net, &x0, eps, label)?;
    if screen > 0.0 {
        report.verdict = Verdict::Robust;
        report.margin_lower = Some(screen);
        report.screened_by_ibp = true;
        return done(report);
    }

    let mut certified_lower = f64::INFINITY;
    let mut sound = true;
    for target in (0..net.output_dim()).filter(|&t| t != label) {
        if start.elapsed().as_millis() as u64 > opts.budget_ms {
            report.budget_exhausted = true;
            report.verdict = Verdict::Unknown;
            return done(report);
        }
        let sys = build_system(net, &x0, eps, label, target, model, opts)?;
        let enc = qubo::make_encoding(&sys, opts.bits_per_var, opts.bits_per_slack)?;
        report.spins = report
            .spins
            .max(enc.num_y_bits + enc.num_s_bits + sys.layout.num_beta());

        let (lower, candidate): (Option<f64>, Option<Array1<f64>>) = match solver {
            Solver::Enumerate => {
                let res = solve_enumerate(&sys)?;
                (Some(res.objective), Some(input_point(&sys, &res.best_y)))
            }
            Solver::Benders => {
                let res =
                    benders::run(&sys, benders::MasterMode::Exhaustive, 1e-6, 100_000, opts.seed)?;
                let lower = if res.complete { res.objective } else { res.lower };
                (Some(lower), Some(input_point(&sys, &res.y)))
            }
            Solver::QuboSa => {
                let rho = qubo::choose_rho(&sys, &enc);
                let inst = qubo::assemble(&sys, &enc, rho)?;
                let remaining = opts.budget_ms.saturating_sub(start.elapsed().as_millis() as u64);
                let bits = if inst.dim() <= EXHAUSTIVE_CAP {
                    anneal::solve_exhaustive(&inst)?.bits
                } else {
                    let cfg = AnnealConfig {
                        seed: opts.seed.wrapping_add(index as u64),
                        budget_ms: Some(remaining.max(1)),
                        ..AnnealConfig::default()
                    };
                    let sa = anneal::solve_sa(&inst, &cfg)?;
                    report.budget_exhausted |= sa.budget_exhausted;
                    sa.bits
                };
                let dec = qubo::decode(&sys, &enc, &bits)?;
                // Bit-quantized points are heuristics only: no sound bound.
                (None, Some(input_point(&sys, &dec.y)))
            }
        };

        if let Some(x) = candidate {
            if let Some(m) = validate_counterexample(net, &x0, eps, label, &x)? {
                report.verdict = Verdict::Nonrobust;
                report.counterexample = Some(x.to_vec());
                report.replayed_margin = Some(m);
                return done(report);
            }
        }
        match lower {
            Some(l) => certified_lower = certified_lower.min(l),
            None => sound = false,
        }
    }

    if sound {
        report.margin_lower = Some(certified_lower);
        if certified_lower > 0.0 {
            report.verdict = Verdict::Robust;
        } else if model == ModelKind::Exact && solver == Solver::Enumerate {
            // Exact model, complete solver, optimum <= 0: the optimizer is
            // a real adversarial point; it replayed clean only if the
            // optimum is exactly on the boundary within float noise.
            report.verdict = Verdict::Unknown;
        }
    }
    done(report)
}

fn aggregate(eps: f64, samples: Vec<SampleReport>) -> EpsReport {
    let n = samples.len().max(1);
    let robust = samples.iter().filter(|s| s.verdict == Verdict::Robust).count();
    let vulnerable = samples.iter().filter(|s| s.verdict == Verdict::Nonrobust).count();
    let unknown = samples.iter().filter(|s| s.verdict == Verdict::Unknown).count();
    let spin_sum: usize = samples.iter().map(|s| s.spins).sum();
    EpsReport {
        eps,
        certified_accuracy: robust as f64 / n as f64,
        vulnerable,
        unknown,
        spin_mean: spin_sum as f64 / n as f64,
        spin_min: samples.iter().map(|s| s.spins).min().unwrap_or(0),
        spin_max: samples.iter().map(|s| s.spins).max().unwrap_or(0),
        samples,
    }
}

pub fn campaign(
    net: &Network,
    samples: &[Sample],
    eps_grid: &[f64],
    model: ModelKind,
    solver: Solver,
    opts: &CampaignOpts,
) -> Result<CampaignReport> {
    if samples.is_empty() {
        return Err(Error::InvalidParameter("empty sample set".into()));
    }
    if eps_grid.is_empty() || eps_grid.iter().any(|&e| e < 0.0) {
        return Err(Error::InvalidParameter("eps grid must be nonempty and nonnegative".into()));
    }
    if model == ModelKind::Exact && !net.activation.is_piecewise_linear() {
        return Err(Error::UnsupportedActivation(
            net.activation,
            "exact model needs a piecewise-linear activation".into(),
        ));
    }
    let mut reports = Vec::with_capacity(eps_grid.len());
    for &eps in eps_grid {
        let mut per_sample = Vec::with_capacity(samples.len());
        for (i, s) in samples.iter().enumerate() {
            per_sample.push(verify_sample(net, s, i, eps, model, solver, opts)?);
        }
        reports.push(aggregate(eps, per_sample));
    }
    Ok(CampaignReport {
        model,
        solver,
        eps_grid: eps_grid.to_vec(),
        reports,
    })
}

impl CampaignReport {
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}
