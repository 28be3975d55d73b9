//! QUBO solvers: exhaustive enumeration as the small-instance oracle, and
//! seeded simulated annealing as the classical stand-in for Ising
//! hardware.
//!
//! Both work on the dense symmetric form `x' Q x + lin' x + offset`; flips
//! are scored through maintained local fields so a sweep costs O(n^2)
//! rather than O(n^3).

use std::time::Instant;

use ndarray::{Array1, Array2};
use rand::prelude::*;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::qubo::QuboInstance;

/// Full enumeration beyond this many bits is refused.
pub const EXHAUSTIVE_CAP: usize = 26;

#[derive(Debug, Clone)]
pub struct AnnealConfig {
    pub sweeps: usize,
    pub restarts: usize,
    /// Starting temperature; estimated from the largest flip delta when
    /// absent.
    pub t_initial: Option<f64>,
    /// Final temperature as a fraction of the initial.
    pub t_final_frac: f64,
    pub seed: u64,
    pub budget_ms: Option<u64>,
}

impl Default for AnnealConfig {
    fn default() -> Self {
        AnnealConfig {
            sweeps: 2000,
            restarts: 20,
            t_initial: None,
            t_final_frac: 1e-3,
            seed: 0,
            budget_ms: None,
        }
    }
}

impl AnnealConfig {
    fn validate(&self) -> Result<()> {
        if self.sweeps == 0 || self.restarts == 0 {
            return Err(Error::InvalidParameter(
                "sweeps and restarts must be >= 1".into(),
            ));
        }
        if !(self.t_final_frac > 0.0 && self.t_final_frac < 1.0) {
            return Err(Error::InvalidParameter(format!(
                "t_final_frac must lie in (0, 1), got {}",
                self.t_final_frac
            )));
        }
        if let Some(t) = self.t_initial {
            if t <= 0.0 {
                return Err(Error::InvalidParameter(format!(
                    "t_initial must be > 0, got {t}"
                )));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct SolveOutcome {
    pub bits: Vec<u8>,
    pub energy: f64,
}

#[derive(Debug, Clone)]
pub struct SaOutcome {
    pub bits: Vec<u8>,
    pub energy: f64,
    /// Best energy after each completed restart.
    pub history: Vec<f64>,
    pub budget_exhausted: bool,
    pub sweeps_done: usize,
}

/// Exact energy of a bit assignment.
pub fn energy(q: &Array2<f64>, lin: &Array1<f64>, offset: f64, bits: &[u8]) -> f64 {
    let n = bits.len();
    let mut e = offset;
    for i in 0..n {
        if bits[i] == 0 {
            continue;
        }
        e += lin[i] + q[[i, i]];
        for j in 0..n {
            if j != i && bits[j] != 0 {
                e += q[[i, j]];
            }
        }
    }
    e
}

/// Energy change of flipping bit `i` given the local fields
/// `h_i = sum_{j != i} q_ij x_j`.
#[inline]
fn flip_delta(q: &Array2<f64>, lin: &Array1<f64>, h: &[f64], bits: &[u8], i: usize) -> f64 {
    let s = 1.0 - 2.0 * f64::from(bits[i]);
    s * (lin[i] + q[[i, i]] + 2.0 * h[i])
}

fn apply_flip(q: &Array2<f64>, h: &mut [f64], bits: &mut [u8], i: usize) {
    let s = 1.0 - 2.0 * f64::from(bits[i]);
    bits[i] = 1 - bits[i];
    for j in 0..h.len() {
        if j != i {
            h[j] += s * q[[i, j]];
        }
    }
}

fn local_fields(q: &Array2<f64>, bits: &[u8]) -> Vec<f64> {
    let n = bits.len();
    (0..n)
        .map(|i| {
            (0..n)
                .filter(|&j| j != i && bits[j] != 0)
                .map(|j| q[[i, j]])
                .sum()
        })
        .collect()
}

/// Global minimum by Gray-code enumeration: each step flips one bit and
/// updates the energy incrementally.
pub fn solve_exhaustive_dense(
    q: &Array2<f64>,
    lin: &Array1<f64>,
    offset: f64,
) -> Result<SolveOutcome> {
    let n = lin.len();
    if n > EXHAUSTIVE_CAP {
        return Err(Error::ExhaustiveCap(n, EXHAUSTIVE_CAP));
    }
    let mut bits = vec![0u8; n];
    let mut h = vec![0.0f64; n];
    let mut e = offset;
    let mut best = bits.clone();
    let mut best_e = e;
    if n == 0 {
        return Ok(SolveOutcome {
            bits,
            energy: best_e,
        });
    }
    for k in 1u64..(1u64 << n) {
        let i = k.trailing_zeros() as usize;
        e += flip_delta(q, lin, &h, &bits, i);
        apply_flip(q, &mut h, &mut bits, i);
        if e < best_e {
            best_e = e;
            best = bits.clone();
        }
    }
    Ok(SolveOutcome {
        bits: best,
        energy: best_e,
    })
}

pub fn solve_exhaustive(inst: &QuboInstance) -> Result<SolveOutcome> {
    solve_exhaustive_dense(&inst.q, &inst.lin, inst.offset)
}

/// Single-bit-flip Metropolis annealing with geometric cooling and
/// per-restart reheat; deterministic given the seed.
pub fn solve_sa_dense(
    q: &Array2<f64>,
    lin: &Array1<f64>,
    offset: f64,
    cfg: &AnnealConfig,
) -> Result<SaOutcome> {
    cfg.validate()?;
    let n = lin.len();
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    if n == 0 {
        return Ok(SaOutcome {
            bits: vec![],
            energy: offset,
            history: vec![offset],
            budget_exhausted: false,
            sweeps_done: 0,
        });
    }
    // Worst-case flip magnitude bounds the useful temperature range.
    let t0 = cfg.t_initial.unwrap_or_else(|| {
        (0..n)
            .map(|i| {
                let mut m = (lin[i] + q[[i, i]]).abs();
                for j in 0..n {
                    if j != i {
                        m += 2.0 * q[[i, j]].abs();
                    }
                }
                m
            })
            .fold(1e-12f64, f64::max)
    });
    let t_end = t0 * cfg.t_final_frac;
    let cool = if cfg.sweeps > 1 {
        (t_end / t0).powf(1.0 / (cfg.sweeps - 1) as f64)
    } else {
        1.0
    };

    let mut best: Option<(f64, Vec<u8>)> = None;
    let mut history = Vec::with_capacity(cfg.restarts);
    let mut budget_exhausted = false;
    let mut sweeps_done = 0;
    'restarts: for _ in 0..cfg.restarts {
        let mut bits: Vec<u8> = (0..n).map(|_| rng.random_range(0..2u8)).collect();
        let mut h = local_fields(q, &bits);
        let mut e = energy(q, lin, offset, &bits);
        if best.as_ref().map_or(true, |(be, _)| e < *be) {
            best = Some((e, bits.clone()));
        }
        let mut t = t0;
        for _ in 0..cfg.sweeps {
            if let Some(ms) = cfg.budget_ms {
                if start.elapsed().as_millis() as u64 > ms {
                    budget_exhausted = true;
                    break 'restarts;
                }
            }
            for i in 0..n {
                let de = flip_delta(q, lin, &h, &bits, i);
                if de <= 0.0 || rng.random::<f64>() < (-de / t).exp() {
                    apply_flip(q, &mut h, &mut bits, i);
                    e += de;
                    if best.as_ref().map_or(true, |(be, _)| e < *be) {
                        best = Some((e, bits.clone()));
                    }
                }
            }
            t *= cool;
            sweeps_done += 1;
        }
        history.push(best.as_ref().unwrap().0);
    }
    let (_, bits) = best.unwrap();
    // Accumulated deltas drift; report the exact energy of the best state.
    let exact = energy(q, lin, offset, &bits);
    Ok(SaOutcome {
        bits,
        energy: exact,
        history,
        budget_exhausted,
        sweeps_done,
    })
}

pub fn solve_sa(inst: &QuboInstance, cfg: &AnnealConfig) -> Result<SaOutcome> {
    solve_sa_dense(&inst.q, &inst.lin, inst.offset, cfg)
}
