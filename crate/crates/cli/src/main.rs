//! `certiq`: command-line harness over the certification library.
//!
//! Exit codes: 0 on success, 2 when an internal invariant is violated,
//! 1 for ordinary failures (bad input, unreadable files).

use std::fs;
use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Context};
use clap::{Parser, Subcommand, ValueEnum};
use ndarray::{Array1, Array2};
use serde::Serialize;

use certiq_core::error::Error as CoreError;
use certiq_core::{
    anneal, benders, campaign, data, interval, net, partition, prune, pwl, qubo, stepbound,
    system, train,
};
use certiq_core::{ActivationKind, Network, PruneMask, Sample};

#[derive(Parser)]
#[command(name = "certiq", version, about = "Robustness certification for small networks")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum SolverArg {
    Enumerate,
    QuboSa,
    Benders,
}

#[derive(Clone, Copy, ValueEnum)]
enum DatasetKind {
    TwoMoons,
    Csv,
}

#[derive(Subcommand)]
enum Command {
    /// Generate or ingest a dataset and write it as JSON samples.
    Gen {
        #[arg(long, value_enum, default_value = "two-moons")]
        kind: DatasetKind,
        #[arg(long, default_value_t = 100)]
        n: usize,
        #[arg(long, default_value_t = 0.1)]
        noise: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// CSV input path (kind = csv).
        #[arg(long)]
        path: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Train a fixture network on a JSON sample file.
    Train {
        #[arg(long)]
        data: PathBuf,
        /// Layer sizes, e.g. 2,5,2.
        #[arg(long, value_delimiter = ',')]
        arch: Vec<usize>,
        #[arg(long, value_enum, default_value = "relu")]
        activation: ActivationArg,
        #[arg(long, default_value_t = 100)]
        epochs: usize,
        #[arg(long, default_value_t = 0.01)]
        lr: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Interval bounds of a network over an input ball.
    Bounds {
        #[arg(long)]
        net: PathBuf,
        /// Comma-separated center, e.g. 0.1,-0.2.
        #[arg(long, value_delimiter = ',')]
        x0: Vec<f64>,
        #[arg(long)]
        eps: f64,
    },
    /// Emit the constraint system or its QUBO for one robustness query.
    Encode {
        #[arg(long)]
        net: PathBuf,
        #[arg(long, value_delimiter = ',')]
        x0: Vec<f64>,
        #[arg(long)]
        eps: f64,
        #[arg(long, default_value_t = 0)]
        label: usize,
        #[arg(long)]
        target: Option<usize>,
        #[arg(long, default_value_t = 1)]
        model: u8,
        #[arg(long, default_value_t = 2)]
        segments: usize,
        /// Write the QUBO coordinate dump instead of the system JSON.
        #[arg(long)]
        as_qubo: bool,
        #[arg(long, default_value_t = 4)]
        bits_per_var: usize,
        #[arg(long, default_value_t = 4)]
        bits_per_slack: usize,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Solve a QUBO coordinate dump (exhaustive when small, else annealed).
    SolveQubo {
        #[arg(long)]
        qubo: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        budget_ms: Option<u64>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Verify one sample; optionally split at a layer or fit a spin budget.
    Verify {
        #[arg(long)]
        net: PathBuf,
        #[arg(long, value_delimiter = ',')]
        x0: Vec<f64>,
        #[arg(long)]
        eps: f64,
        #[arg(long, default_value_t = 0)]
        label: usize,
        #[arg(long, default_value_t = 1)]
        model: u8,
        #[arg(long, value_enum, default_value = "enumerate")]
        solver: SolverArg,
        #[arg(long, default_value_t = 2)]
        segments: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 5000)]
        budget_ms: u64,
        /// Abstract layers 1..=N with interval boxes and verify the suffix.
        #[arg(long)]
        partition_at: Option<usize>,
        /// Choose the smallest split whose suffix fits this many spins.
        #[arg(long)]
        spin_budget: Option<usize>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Pruning-transfer certificates over a dataset.
    Transfer {
        #[arg(long)]
        net: PathBuf,
        /// Mask JSON: {"masks": [{"rows": r, "cols": c, "values": [0/1, ...]}]}.
        #[arg(long)]
        mask: PathBuf,
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        eps: f64,
        #[arg(long, default_value_t = 1)]
        model: u8,
        #[arg(long, default_value_t = 2)]
        segments: usize,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Sweep an epsilon grid over a dataset and report aggregates.
    Campaign {
        #[arg(long)]
        net: PathBuf,
        #[arg(long)]
        data: PathBuf,
        /// Comma-separated grid, e.g. 0.05,0.1,0.2.
        #[arg(long, value_delimiter = ',')]
        eps: Vec<f64>,
        #[arg(long, default_value_t = 1)]
        model: u8,
        #[arg(long, value_enum, default_value = "enumerate")]
        solver: SolverArg,
        #[arg(long, default_value_t = 2)]
        segments: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 5000)]
        budget_ms: u64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum ActivationArg {
    Relu,
    Hardtanh,
    Sigmoid,
    Tanh,
    Identity,
}

impl From<ActivationArg> for ActivationKind {
    fn from(a: ActivationArg) -> Self {
        match a {
            ActivationArg::Relu => ActivationKind::Relu,
            ActivationArg::Hardtanh => ActivationKind::Hardtanh,
            ActivationArg::Sigmoid => ActivationKind::Sigmoid,
            ActivationArg::Tanh => ActivationKind::Tanh,
            ActivationArg::Identity => ActivationKind::Identity,
        }
    }
}

fn model_kind(model: u8) -> anyhow::Result<campaign::ModelKind> {
    match model {
        1 => Ok(campaign::ModelKind::Exact),
        2 => Ok(campaign::ModelKind::StepBound),
        other => bail!("unknown model {other}; expected 1 or 2"),
    }
}

fn solver_kind(s: SolverArg) -> campaign::Solver {
    match s {
        SolverArg::Enumerate => campaign::Solver::Enumerate,
        SolverArg::QuboSa => campaign::Solver::QuboSa,
        SolverArg::Benders => campaign::Solver::Benders,
    }
}

fn emit(out: &Option<PathBuf>, text: &str) -> anyhow::Result<()> {
    match out {
        Some(path) => fs::write(path, text).with_context(|| format!("writing {}", path.display()))?,
        None => println!("{text}"),
    }
    Ok(())
}

fn read_net(path: &PathBuf) -> anyhow::Result<Network> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    Ok(Network::from_json(&text)?)
}

fn read_samples(path: &PathBuf) -> anyhow::Result<Vec<Sample>> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    if path.extension().is_some_and(|e| e == "csv") {
        Ok(data::load_csv(&text)?)
    } else {
        Ok(serde_json::from_str(&text)?)
    }
}

#[derive(serde::Deserialize)]
struct MaskLayerFile {
    rows: usize,
    cols: usize,
    values: Vec<f64>,
}

#[derive(serde::Deserialize)]
struct MaskFile {
    masks: Vec<MaskLayerFile>,
}

fn read_mask(path: &PathBuf) -> anyhow::Result<PruneMask> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let file: MaskFile = serde_json::from_str(&text)?;
    let mut masks = Vec::with_capacity(file.masks.len());
    for (l, m) in file.masks.into_iter().enumerate() {
        if m.values.len() != m.rows * m.cols {
            bail!("mask layer {l}: {} values for {}x{}", m.values.len(), m.rows, m.cols);
        }
        masks.push(
            Array2::from_shape_vec((m.rows, m.cols), m.values)
                .map_err(|e| anyhow::anyhow!("mask layer {l}: {e}"))?,
        );
    }
    Ok(PruneMask::new(masks)?)
}

fn build_system_for(
    netw: &Network,
    x0: &Array1<f64>,
    eps: f64,
    label: usize,
    target: usize,
    model: campaign::ModelKind,
    segments: usize,
) -> anyhow::Result<system::MixedConstraintSystem> {
    let bounds = interval::propagate(netw, x0, eps)?;
    Ok(match model {
        campaign::ModelKind::Exact => {
            let tables = pwl::default_tables_model1(netw, &bounds)?;
            pwl::build_model1(netw, x0, eps, label, target, &tables, &bounds)?
        }
        campaign::ModelKind::StepBound => {
            let tables = stepbound::default_tables_model2(netw, &bounds, segments)?;
            stepbound::build_model2(netw, x0, eps, label, target, &tables, &bounds, true)?
        }
    })
}

fn run(cli: Cli) -> anyhow::Result<()> {
    match cli.command {
        Command::Gen {
            kind,
            n,
            noise,
            seed,
            path,
            out,
        } => {
            let samples = match kind {
                DatasetKind::TwoMoons => data::two_moons(n, noise, seed),
                DatasetKind::Csv => {
                    let path = path.context("--path is required for --kind csv")?;
                    let text = fs::read_to_string(&path)
                        .with_context(|| format!("reading {}", path.display()))?;
                    data::load_csv(&text)?
                }
            };
            emit(&out, &serde_json::to_string_pretty(&samples)?)
        }
        Command::Train {
            data: data_path,
            arch,
            activation,
            epochs,
            lr,
            seed,
            out,
        } => {
            let samples = read_samples(&data_path)?;
            let cfg = train::TrainConfig { epochs, lr, seed };
            let outcome = train::train_fixture(&samples, &arch, activation.into(), &cfg)?;
            eprintln!(
                "trained {:?}: loss {:.6}, train accuracy {:.3}",
                arch, outcome.final_loss, outcome.train_accuracy
            );
            emit(&out, &outcome.net.to_json()?)
        }
        Command::Bounds { net: net_path, x0, eps } => {
            let netw = read_net(&net_path)?;
            let x0 = Array1::from(x0);
            let bounds = interval::propagate(&netw, &x0, eps)?;
            #[derive(Serialize)]
            struct BoundsOut {
                z_lo: Vec<Vec<f64>>,
                z_hi: Vec<Vec<f64>>,
                a_lo: Vec<Vec<f64>>,
                a_hi: Vec<Vec<f64>>,
            }
            let v = |xs: &[Array1<f64>]| xs.iter().map(|a| a.to_vec()).collect();
            println!(
                "{}",
                serde_json::to_string_pretty(&BoundsOut {
                    z_lo: v(&bounds.z_lo),
                    z_hi: v(&bounds.z_hi),
                    a_lo: v(&bounds.a_lo),
                    a_hi: v(&bounds.a_hi),
                })?
            );
            Ok(())
        }
        Command::Encode {
            net: net_path,
            x0,
            eps,
            label,
            target,
            model,
            segments,
            as_qubo,
            bits_per_var,
            bits_per_slack,
            out,
        } => {
            let netw = read_net(&net_path)?;
            let x0 = Array1::from(x0);
            let target = target.unwrap_or_else(|| usize::from(label == 0));
            let sys =
                build_system_for(&netw, &x0, eps, label, target, model_kind(model)?, segments)?;
            if as_qubo {
                let enc = qubo::make_encoding(&sys, bits_per_var, bits_per_slack)?;
                let rho = qubo::choose_rho(&sys, &enc);
                let inst = qubo::assemble(&sys, &enc, rho)?;
                emit(&out, &qubo::to_coord_string(&inst))
            } else {
                emit(&out, &sys.to_debug_json()?)
            }
        }
        Command::SolveQubo {
            qubo: qubo_path,
            seed,
            budget_ms,
            out,
        } => {
            let text = fs::read_to_string(&qubo_path)
                .with_context(|| format!("reading {}", qubo_path.display()))?;
            let raw = qubo::from_coord_string(&text)?;
            let (q, lin, offset) = raw.to_dense();
            #[derive(Serialize)]
            struct QuboOut {
                energy: f64,
                bits: Vec<u8>,
                exhaustive: bool,
            }
            let result = if raw.dim() <= anneal::EXHAUSTIVE_CAP {
                let sol = anneal::solve_exhaustive_dense(&q, &lin, offset)?;
                QuboOut {
                    energy: sol.energy,
                    bits: sol.bits,
                    exhaustive: true,
                }
            } else {
                let cfg = anneal::AnnealConfig {
                    seed,
                    budget_ms,
                    ..anneal::AnnealConfig::default()
                };
                let sol = anneal::solve_sa_dense(&q, &lin, offset, &cfg)?;
                QuboOut {
                    energy: sol.energy,
                    bits: sol.bits,
                    exhaustive: false,
                }
            };
            emit(&out, &serde_json::to_string_pretty(&result)?)
        }
        Command::Verify {
            net: net_path,
            x0,
            eps,
            label,
            model,
            solver,
            segments,
            seed,
            budget_ms,
            partition_at,
            spin_budget,
            out,
        } => {
            let netw = read_net(&net_path)?;
            let x0 = Array1::from(x0);
            let cut = match (partition_at, spin_budget) {
                (Some(c), _) => Some(c),
                (None, Some(budget)) => {
                    let c = partition::suggest_cut(&netw, budget, &x0, eps, label, segments)?;
                    if c == 0 {
                        None
                    } else {
                        Some(c)
                    }
                }
                (None, None) => None,
            };
            if let Some(cut) = cut {
                let suffix_solver = match solver {
                    SolverArg::Benders => partition::SuffixSolver::Benders,
                    _ => partition::SuffixSolver::Enumerate,
                };
                let rep =
                    partition::split_verify(&netw, &x0, eps, label, cut, suffix_solver, segments)?;
                return emit(&out, &serde_json::to_string_pretty(&rep)?);
            }
            let opts = campaign::CampaignOpts {
                segments,
                budget_ms,
                seed,
                ..campaign::CampaignOpts::default()
            };
            let sample = Sample {
                x0: x0.to_vec(),
                label,
            };
            let rep = campaign::verify_sample(
                &netw,
                &sample,
                0,
                eps,
                model_kind(model)?,
                solver_kind(solver),
                &opts,
            )?;
            if matches!(solver, SolverArg::Benders) {
                // Attach the decomposition's audit trail for the worst
                // class pair.
                #[derive(Serialize)]
                struct VerifyOut {
                    report: campaign::SampleReport,
                    trail: Vec<benders::IterationRecord>,
                }
                let mut trail = Vec::new();
                for target in (0..netw.output_dim()).filter(|&t| t != label) {
                    let sys = build_system_for(
                        &netw,
                        &x0,
                        eps,
                        label,
                        target,
                        model_kind(model)?,
                        segments,
                    )?;
                    let res =
                        benders::run(&sys, benders::MasterMode::Exhaustive, 1e-6, 100_000, seed)?;
                    trail.extend(res.trail);
                }
                emit(&out, &serde_json::to_string_pretty(&VerifyOut { report: rep, trail })?)
            } else {
                emit(&out, &serde_json::to_string_pretty(&rep)?)
            }
        }
        Command::Transfer {
            net: net_path,
            mask,
            data: data_path,
            eps,
            model,
            segments,
            out,
        } => {
            let netw = read_net(&net_path)?;
            let mask = read_mask(&mask)?;
            let samples = read_samples(&data_path)?;
            let (pruned, residuals) = net::apply_mask(&netw, &mask)?;
            let model = model_kind(model)?;
            let opts = campaign::CampaignOpts {
                segments,
                ..campaign::CampaignOpts::default()
            };
            let mut certs = Vec::with_capacity(samples.len());
            for (i, s) in samples.iter().enumerate() {
                let x0 = Array1::from(s.x0.clone());
                let bounds = interval::propagate(&netw, &x0, eps)?;
                let h = interval::activation_sup_bounds(&bounds);
                let tau = prune::compute_tau(&pruned, &residuals, &h)?;
                // Verify the pruned network; margins transfer within 2 tau.
                let rep = campaign::verify_sample(
                    &pruned,
                    s,
                    i,
                    eps,
                    model,
                    campaign::Solver::Enumerate,
                    &opts,
                )?;
                let l_g = rep.margin_lower.unwrap_or(f64::NEG_INFINITY);
                let u_g = rep.replayed_margin.unwrap_or(f64::INFINITY);
                certs.push(prune::TransferCertificate::new(i, tau, l_g.min(u_g), u_g)?);
            }
            let (ca_lo, ca_hi) = prune::dataset_bounds(&certs)?;
            #[derive(Serialize)]
            struct TransferOut {
                eps: f64,
                certified_accuracy_lower: f64,
                certified_accuracy_upper: f64,
                certificates: Vec<prune::TransferCertificate>,
            }
            emit(
                &out,
                &serde_json::to_string_pretty(&TransferOut {
                    eps,
                    certified_accuracy_lower: ca_lo,
                    certified_accuracy_upper: ca_hi,
                    certificates: certs,
                })?,
            )
        }
        Command::Campaign {
            net: net_path,
            data: data_path,
            eps,
            model,
            solver,
            segments,
            seed,
            budget_ms,
            out,
        } => {
            let netw = read_net(&net_path)?;
            let samples = read_samples(&data_path)?;
            let opts = campaign::CampaignOpts {
                segments,
                budget_ms,
                seed,
                ..campaign::CampaignOpts::default()
            };
            let rep = campaign::campaign(
                &netw,
                &samples,
                &eps,
                model_kind(model)?,
                solver_kind(solver),
                &opts,
            )?;
            emit(&out, &rep.to_json()?)
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err:#}");
            let internal = err
                .chain()
                .any(|c| matches!(c.downcast_ref::<CoreError>(), Some(CoreError::Internal(_))));
            if internal {
                ExitCode::from(2)
            } else {
                ExitCode::FAILURE
            }
        }
    }
}
