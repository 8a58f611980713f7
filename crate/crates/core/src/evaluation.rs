//! Monte Carlo sweeps over transmit power and NMSE aggregation.

use std::io::Write;

use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use crate::channel::{cascaded_csi, draw_realization, CascadedCsi, Dims};
use crate::config::{dbm_to_watts, ConfigError, NmseMode, SystemConfig};
use crate::estimator::{
    run_benchmark, run_proposed, BenchmarkSlots, EstimationResult, EstimatorOptions,
};
use crate::scalar::{frob2, CMatrix, Real};
use crate::seeding::{stream_rng, Stream};
use crate::training::{overhead_benchmark, PhaseSlots, TrainingError, TrainingPlan};

#[derive(Debug, Error)]
pub enum EvaluationError {
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("true channel {0} is zero")]
    ZeroTruth(usize),
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Training(#[from] TrainingError),
    #[error("worker pool: {0}")]
    Pool(String),
}

/// Normalized squared error of a family of matrices.
///
/// `Literal` divides the summed per-matrix ratios `‖Ê−E‖²/‖E‖²` by the total
/// entry count of the family; `PerMatrix` divides by the number of matrices.
pub fn nmse<T: Real>(
    est: &[CMatrix<T>],
    truth: &[CMatrix<T>],
    mode: NmseMode,
) -> Result<f64, EvaluationError> {
    if est.len() != truth.len() || truth.is_empty() {
        return Err(EvaluationError::ShapeMismatch(format!(
            "{} estimates for {} matrices",
            est.len(),
            truth.len()
        )));
    }
    let shape = truth[0].shape();
    let mut sum = 0.0;
    for (i, (e, t)) in est.iter().zip(truth).enumerate() {
        if e.shape() != t.shape() || t.shape() != shape {
            return Err(EvaluationError::ShapeMismatch(format!(
                "matrix {i}: estimate {:?}, truth {:?}",
                e.shape(),
                t.shape()
            )));
        }
        let norm = frob2(t).as_f64();
        if norm == 0.0 {
            return Err(EvaluationError::ZeroTruth(i));
        }
        sum += frob2(&(e - t)).as_f64() / norm;
    }
    let count = match mode {
        NmseMode::Literal => truth.len() * shape.0 * shape.1,
        NmseMode::PerMatrix => truth.len(),
    };
    Ok(sum / count as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Scheme {
    Proposed,
    Benchmark,
}

impl Scheme {
    pub const ALL: [Scheme; 2] = [Scheme::Proposed, Scheme::Benchmark];

    pub fn name(self) -> &'static str {
        match self {
            Scheme::Proposed => "proposed",
            Scheme::Benchmark => "benchmark",
        }
    }
}

/// Channel family whose NMSE is reported.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Family {
    /// User → IRS 1 → BS.
    R,
    /// User → IRS 2 → BS.
    RTilde,
    /// User → IRS 1 → IRS 2 → BS.
    Q,
}

impl Family {
    pub const ALL: [Family; 3] = [Family::R, Family::RTilde, Family::Q];

    pub fn name(self) -> &'static str {
        match self {
            Family::R => "R",
            Family::RTilde => "R_tilde",
            Family::Q => "Q",
        }
    }

    fn index(self) -> usize {
        self as usize
    }
}

/// Per-family NMSE of one estimate, in [`Family::ALL`] order.
pub fn family_nmse<T: Real>(
    est: &EstimationResult<T>,
    truth: &CascadedCsi<T>,
    mode: NmseMode,
) -> Result<[f64; 3], EvaluationError> {
    let flat = |q: &[Vec<CMatrix<T>>]| q.iter().flatten().cloned().collect::<Vec<_>>();
    Ok([
        nmse(&est.r_hat, &truth.r, mode)?,
        nmse(&est.r_tilde_hat, &truth.r_tilde, mode)?,
        nmse(&flat(&est.q_hat), &flat(&truth.q), mode)?,
    ])
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize)]
pub struct SweepOptions {
    /// Pad the proposed scheme's phases to the benchmark's total overhead.
    pub equal_overhead: bool,
    /// Cancel single-reflection paths with the true channels.
    pub genie_cancel: bool,
    /// Use the joint Phase III solver even when sequential training suffices.
    pub joint_phase3: bool,
    /// Worker threads; `None` uses the global pool.
    pub workers: Option<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize)]
pub struct Stat {
    pub nmse: f64,
    /// Standard error of the mean over trials.
    pub stderr: f64,
}

/// Mean condition numbers of the proposed scheme's LS systems.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize)]
pub struct MeanConditions {
    pub phase1: f64,
    pub phase2: f64,
    pub phase3: f64,
    pub phase4: f64,
    pub phase5: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PointResult {
    pub p_dbm: f64,
    pub p_watts: f64,
    pub sigma2: f64,
    /// Indexed by [`Family::ALL`].
    pub proposed: [Stat; 3],
    pub benchmark: [Stat; 3],
    /// Trials aggregated (attempted minus excluded).
    pub trials: usize,
    pub excluded: usize,
    pub conditions: MeanConditions,
    pub rank_extended: usize,
}

impl PointResult {
    pub fn stat(&self, scheme: Scheme, family: Family) -> Stat {
        match scheme {
            Scheme::Proposed => self.proposed[family.index()],
            Scheme::Benchmark => self.benchmark[family.index()],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepResult {
    pub mode: NmseMode,
    pub options: SweepOptions,
    pub proposed_slots: PhaseSlots,
    pub benchmark_slots: usize,
    pub points: Vec<PointResult>,
}

/// Per-trial outcome at one power point; `None` if the trial was excluded.
#[derive(Debug, Clone, Copy)]
struct TrialPoint {
    proposed: [f64; 3],
    benchmark: [f64; 3],
    conditions: [f64; 5],
    rank_extended: bool,
}

/// Slot counts of the proposed scheme for the sweep.
pub fn proposed_slots(dims: Dims, equal_overhead: bool) -> PhaseSlots {
    let minimum = PhaseSlots::minimum(dims);
    if equal_overhead {
        minimum.padded_to(overhead_benchmark(dims.m1, dims.m2, dims.k))
    } else {
        minimum
    }
}

fn run_trial(
    cfg: &SystemConfig,
    plan: &TrainingPlan<f64>,
    bench: BenchmarkSlots,
    sigma2: &[f64],
    opts: &EstimatorOptions,
    trial: u64,
) -> Vec<Option<TrialPoint>> {
    let truth = draw_realization::<f64>(cfg, trial)
        .and_then(|real| cascaded_csi(&real).map(|csi| (real, csi)));
    let Ok((real, csi)) = truth else {
        return vec![None; sigma2.len()];
    };
    sigma2
        .iter()
        .enumerate()
        .map(|(point, &s2)| {
            let mut rng = stream_rng(cfg.seed, Stream::ProposedNoise, trial, point as u64);
            let proposed = run_proposed(&real, plan, s2, &mut rng, opts).ok()?;
            let mut rng = stream_rng(cfg.seed, Stream::BenchmarkNoise, trial, point as u64);
            let benchmark = run_benchmark(&real, bench, s2, &mut rng, opts).ok()?;
            let p = family_nmse(&proposed, &csi, cfg.nmse_mode).ok()?;
            let b = family_nmse(&benchmark, &csi, cfg.nmse_mode).ok()?;
            if p.iter().chain(&b).any(|v| !v.is_finite()) {
                return None;
            }
            let c = proposed.conditions;
            let conditions =
                [c.phase1, c.phase2, c.phase3, c.phase4, c.phase5].map(|v| v.unwrap_or(1.0));
            Some(TrialPoint {
                proposed: p,
                benchmark: b,
                conditions,
                rank_extended: proposed.rank_extended,
            })
        })
        .collect()
}

fn mean_stderr(values: impl Iterator<Item = f64> + Clone) -> Stat {
    let n = values.clone().count();
    if n == 0 {
        return Stat {
            nmse: f64::NAN,
            stderr: f64::NAN,
        };
    }
    let mean = values.clone().sum::<f64>() / n as f64;
    let stderr = if n > 1 {
        let var = values.map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1) as f64;
        (var / n as f64).sqrt()
    } else {
        0.0
    };
    Stat { nmse: mean, stderr }
}

/// Runs `cfg.trials` realizations through both schemes at every power in
/// `powers` (dBm). Each trial's channel is shared by all power points; noise
/// is drawn per (trial, point). The result does not depend on the worker
/// count or scheduling.
pub fn run_sweep(
    cfg: &SystemConfig,
    powers: &[f64],
    options: SweepOptions,
) -> Result<SweepResult, EvaluationError> {
    cfg.validate()?;
    if powers.iter().any(|p| !p.is_finite()) {
        return Err(ConfigError::Invalid("power levels must be finite dBm values".into()).into());
    }
    let dims = Dims::from(cfg);
    let slots = proposed_slots(dims, options.equal_overhead);
    let plan = TrainingPlan::<f64>::with_slots(dims, slots, options.joint_phase3)?;
    let bench = BenchmarkSlots::minimal(dims.m1, dims.m2);
    let sigma2: Vec<f64> = powers.iter().map(|&p| cfg.normalized_noise(p)).collect();
    let opts = EstimatorOptions {
        genie_cancel: options.genie_cancel,
        ..EstimatorOptions::new(cfg.rank_tol)
    };

    let work = || -> Vec<Vec<Option<TrialPoint>>> {
        (0..cfg.trials as u64)
            .into_par_iter()
            .map(|t| run_trial(cfg, &plan, bench, &sigma2, &opts, t))
            .collect()
    };
    let outcomes = match options.workers {
        Some(w) => rayon::ThreadPoolBuilder::new()
            .num_threads(w)
            .build()
            .map_err(|e| EvaluationError::Pool(e.to_string()))?
            .install(work),
        None => work(),
    };

    let points = powers
        .iter()
        .enumerate()
        .map(|(i, &p_dbm)| {
            let kept: Vec<&TrialPoint> = outcomes.iter().filter_map(|t| t[i].as_ref()).collect();
            let stats = |pick: fn(&TrialPoint) -> &[f64; 3]| {
                Family::ALL.map(|f| mean_stderr(kept.iter().map(move |t| pick(t)[f.index()])))
            };
            let cond = |j: usize| mean_stderr(kept.iter().map(move |t| t.conditions[j])).nmse;
            PointResult {
                p_dbm,
                p_watts: dbm_to_watts(p_dbm),
                sigma2: sigma2[i],
                proposed: stats(|t| &t.proposed),
                benchmark: stats(|t| &t.benchmark),
                trials: kept.len(),
                excluded: cfg.trials - kept.len(),
                conditions: MeanConditions {
                    phase1: cond(0),
                    phase2: cond(1),
                    phase3: cond(2),
                    phase4: cond(3),
                    phase5: cond(4),
                },
                rank_extended: kept.iter().filter(|t| t.rank_extended).count(),
            }
        })
        .collect();
    Ok(SweepResult {
        mode: cfg.nmse_mode,
        options,
        proposed_slots: plan.slots(),
        benchmark_slots: overhead_benchmark(dims.m1, dims.m2, dims.k),
        points,
    })
}

pub const CSV_HEADER: &str = "scheme,family,P_dBm,sigma2,nmse,stderr,trials,excluded";

/// One row per (scheme, family, power point).
pub fn write_csv<W: Write>(result: &SweepResult, mut w: W) -> std::io::Result<()> {
    writeln!(w, "{CSV_HEADER}")?;
    for scheme in Scheme::ALL {
        for family in Family::ALL {
            for p in &result.points {
                let s = p.stat(scheme, family);
                writeln!(
                    w,
                    "{},{},{},{:e},{:e},{:e},{},{}",
                    scheme.name(),
                    family.name(),
                    p.p_dbm,
                    p.sigma2,
                    s.nmse,
                    s.stderr,
                    p.trials,
                    p.excluded
                )?;
            }
        }
    }
    Ok(())
}
