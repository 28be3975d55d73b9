//! Robustness transfer between a network and its pruned version.
//!
//! The residual bound tau dominates `||f - g||_inf` over the input ball,
//! computed compositionally from the removed weight mass, the pruned
//! operator norms downstream, and activation sup-bounds along the
//! unpruned trajectory. Margin bounds verified on the pruned net then
//! sandwich the original's robust margin within `2 tau`.

use ndarray::Array2;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::net::{op_norm_inf, Network};

/// tau = sum_l (prod_{j>l} ||W'_j||_inf) * ||dW_l||_inf * H_{l-1}
///
/// `h` holds sup bounds on the post-activation infinity norm with index 0
/// for the input box (see the interval module). Downstream products use
/// the pruned weights; hidden activations contribute Lipschitz factor at
/// most one and the final layer has no activation, so only weight norms
/// appear.
pub fn compute_tau(
    pruned: &Network,
    residuals: &[Array2<f64>],
    h: &[f64],
) -> Result<f64> {
    let num_layers = pruned.layers.len();
    if residuals.len() != num_layers {
        return Err(Error::ShapeMismatch(format!(
            "{} residual matrices for {num_layers} layers",
            residuals.len()
        )));
    }
    if h.len() < num_layers {
        return Err(Error::ShapeMismatch(format!(
            "{} sup bounds for {num_layers} layers",
            h.len()
        )));
    }
    let mut tau = 0.0;
    for l in 0..num_layers {
        let mut suffix = 1.0;
        for j in l + 1..num_layers {
            suffix *= op_norm_inf(&pruned.layers[j].weights);
        }
        tau += suffix * op_norm_inf(&residuals[l]) * h[l];
    }
    Ok(tau)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum TransferVerdict {
    CertifiedRobust,
    CertifiedNonrobust,
    Undecided,
}

/// Margin bounds on the original network derived from verifier bounds
/// `[l_g, u_g]` on the pruned network's robust margin.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct TransferBounds {
    pub l_f: f64,
    pub u_f: f64,
    pub verdict: TransferVerdict,
}

pub fn transfer_margin_bounds(l_g: f64, u_g: f64, tau: f64) -> Result<TransferBounds> {
    if l_g > u_g {
        return Err(Error::InvalidParameter(format!(
            "margin bounds inverted: lower {l_g} > upper {u_g}"
        )));
    }
    if tau < 0.0 {
        return Err(Error::InvalidParameter(format!("tau must be >= 0, got {tau}")));
    }
    let verdict = if l_g > 2.0 * tau {
        TransferVerdict::CertifiedRobust
    } else if u_g <= -2.0 * tau {
        TransferVerdict::CertifiedNonrobust
    } else {
        TransferVerdict::Undecided
    };
    Ok(TransferBounds {
        l_f: l_g - 2.0 * tau,
        u_f: u_g + 2.0 * tau,
        verdict,
    })
}

/// Per-sample record emitted by the `transfer` subcommand.
#[derive(Debug, Clone, Serialize)]
pub struct TransferCertificate {
    pub sample: usize,
    pub tau: f64,
    pub l_g: f64,
    pub u_g: f64,
    pub l_f: f64,
    pub u_f: f64,
    pub verdict: TransferVerdict,
}

impl TransferCertificate {
    pub fn new(sample: usize, tau: f64, l_g: f64, u_g: f64) -> Result<Self> {
        let b = transfer_margin_bounds(l_g, u_g, tau)?;
        Ok(Self {
            sample,
            tau,
            l_g,
            u_g,
            l_f: b.l_f,
            u_f: b.u_f,
            verdict: b.verdict,
        })
    }
}

/// Certified-accuracy bracket over a sample set: the lower bound counts
/// samples certified robust after transfer, the upper bound discounts
/// those certified nonrobust.
pub fn dataset_bounds(certs: &[TransferCertificate]) -> Result<(f64, f64)> {
    if certs.is_empty() {
        return Err(Error::InvalidParameter("empty sample set".into()));
    }
    let n = certs.len() as f64;
    let robust = certs
        .iter()
        .filter(|c| c.verdict == TransferVerdict::CertifiedRobust)
        .count() as f64;
    let nonrobust = certs
        .iter()
        .filter(|c| c.verdict == TransferVerdict::CertifiedNonrobust)
        .count() as f64;
    Ok((robust / n, 1.0 - nonrobust / n))
}
