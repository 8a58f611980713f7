//! Cascaded channel estimation: the five-phase reference-user protocol and the
//! per-antenna benchmark it is compared against.

mod benchmark;
mod joint;
mod proposed;

use num_complex::Complex;
use rand::Rng;
use thiserror::Error;

use crate::channel::{effective_channel, ChannelError, ChannelRealization};
use crate::numerics::{ls_solve_right_cond, scale_columns, NumericsError};
use crate::scalar::{complex_gaussian, CMatrix, CVector, Real};
use crate::training::{PhaseSlots, TrainingError};

pub use benchmark::{run_benchmark, BenchmarkSlots};
pub use joint::{dense_joint_matrix, BinnedSolver};
pub use proposed::{
    phase3_estimate_a, phase4_estimate_b, phase5_estimate_btilde, prepare_joint, run_proposed,
    JointPreparation, PhaseOutput,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Phase {
    I,
    II,
    III,
    IV,
    V,
    Pairs,
}

impl std::fmt::Display for Phase {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            Phase::I => "I",
            Phase::II => "II",
            Phase::III => "III",
            Phase::IV => "IV",
            Phase::V => "V",
            Phase::Pairs => "pairs",
        };
        f.write_str(s)
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum EstimationError {
    #[error("phase {phase}: {source}")]
    Numerics { phase: Phase, source: NumericsError },
    #[error(transparent)]
    Channel(#[from] ChannelError),
    #[error(transparent)]
    Training(#[from] TrainingError),
    #[error("phase {phase}: sequential plan requires N ≥ {required}, got N = {n}")]
    CaseMismatch {
        phase: Phase,
        n: usize,
        required: usize,
    },
    #[error("plan does not match the scenario: {0}")]
    PlanMismatch(String),
}

pub(crate) fn at(phase: Phase) -> impl Fn(NumericsError) -> EstimationError {
    move |source| EstimationError::Numerics { phase, source }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EstimatorOptions {
    pub rank_tol: f64,
    /// Cancel single-reflection pilots with the true channels (diagnostics).
    pub genie_cancel: bool,
    /// Keep every LS problem for offline cross-checking.
    pub record_steps: bool,
}

impl EstimatorOptions {
    pub fn new(rank_tol: f64) -> Self {
        Self {
            rank_tol,
            genie_cancel: false,
            record_steps: false,
        }
    }
}

/// One least-squares problem solved during estimation.
#[derive(Debug, Clone, PartialEq)]
pub enum LsStep<T: Real> {
    /// `min ‖Y − X·Θ‖` with solution `X`.
    Right {
        phase: Phase,
        y: CMatrix<T>,
        theta: CMatrix<T>,
        solution: CMatrix<T>,
    },
    /// `min ‖Y − A·X‖` with solution `X` (one column per right-hand side).
    Left {
        phase: Phase,
        a: CMatrix<T>,
        y: CMatrix<T>,
        solution: CMatrix<T>,
    },
}

/// Reference-user scaling vectors estimated by the proposed scheme.
#[derive(Debug, Clone, PartialEq)]
pub struct ScalingEstimates<T: Real> {
    pub a_hat: Vec<CVector<T>>,
    /// `b_hat[0]` is all-ones (the reference user).
    pub b_hat: Vec<CVector<T>>,
    pub b_tilde_hat: Vec<CVector<T>>,
}

/// Condition number of the LS system solved in each phase.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct PhaseConditions {
    pub phase1: Option<f64>,
    pub phase2: Option<f64>,
    pub phase3: Option<f64>,
    pub phase4: Option<f64>,
    pub phase5: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EstimationResult<T: Real> {
    pub r_hat: Vec<CMatrix<T>>,
    pub r_tilde_hat: Vec<CMatrix<T>>,
    pub q_hat: Vec<Vec<CMatrix<T>>>,
    /// `None` for the benchmark, which estimates every user directly.
    pub scaling: Option<ScalingEstimates<T>>,
    pub slots: PhaseSlots,
    pub conditions: PhaseConditions,
    /// A joint phase needed more slots than planned to reach full rank.
    pub rank_extended: bool,
    pub ls_steps: Vec<LsStep<T>>,
}

/// Received pilot vector `Σ_k x_k·h_k(θ1, θ2) + v`, with `v` white complex
/// Gaussian of per-entry variance `noise_power`. `pilots` has one symbol per
/// user; silent users carry zero.
pub fn synthesize_rx<T: Real, R: Rng + ?Sized>(
    real: &ChannelRealization<T>,
    theta1: &[Complex<T>],
    theta2: &[Complex<T>],
    pilots: &[Complex<T>],
    noise_power: T,
    rng: &mut R,
) -> Result<CVector<T>, EstimationError> {
    let dims = real.dims();
    if pilots.len() != dims.k {
        return Err(EstimationError::PlanMismatch(format!(
            "{} pilots for {} users",
            pilots.len(),
            dims.k
        )));
    }
    let mut y = CVector::zeros(dims.n);
    for (k, x) in pilots.iter().enumerate() {
        if x.re != T::zero() || x.im != T::zero() {
            y += effective_channel(real, theta1, theta2, k)? * *x;
        }
    }
    if noise_power > T::zero() {
        for z in y.iter_mut() {
            *z += complex_gaussian(rng, noise_power);
        }
    }
    Ok(y)
}

pub(crate) fn zeros<T: Real>(n: usize) -> Vec<Complex<T>> {
    vec![Complex::new(T::zero(), T::zero()); n]
}

pub(crate) fn single_pilot<T: Real>(k: usize, user: usize) -> Vec<Complex<T>> {
    let mut p = zeros(k);
    p[user] = Complex::new(T::one(), T::zero());
    p
}

/// Collects the single-reflection training of one IRS for `user`, with the
/// other IRS OFF. `irs` is 1 or 2.
pub fn collect_single<T: Real, R: Rng + ?Sized>(
    real: &ChannelRealization<T>,
    theta: &CMatrix<T>,
    irs: u8,
    user: usize,
    noise_power: T,
    rng: &mut R,
) -> Result<CMatrix<T>, EstimationError> {
    let dims = real.dims();
    let pilots = single_pilot(dims.k, user);
    let mut y = CMatrix::zeros(dims.n, theta.ncols());
    for i in 0..theta.ncols() {
        let col: Vec<Complex<T>> = theta.column(i).iter().cloned().collect();
        let rx = if irs == 1 {
            synthesize_rx(real, &col, &zeros(dims.m2), &pilots, noise_power, rng)?
        } else {
            synthesize_rx(real, &zeros(dims.m1), &col, &pilots, noise_power, rng)?
        };
        y.set_column(i, &rx);
    }
    Ok(y)
}

/// `R̂ = Y·Θᴴ(ΘΘᴴ)⁻¹` from Phase I observations (IRS 2 OFF).
pub fn phase1_estimate<T: Real>(
    y: &CMatrix<T>,
    theta1: &CMatrix<T>,
    tol: f64,
) -> Result<(CMatrix<T>, f64), EstimationError> {
    ls_solve_right_cond(y, theta1, tol).map_err(at(Phase::I))
}

/// Phase II mirror of [`phase1_estimate`] (IRS 1 OFF).
pub fn phase2_estimate<T: Real>(
    y: &CMatrix<T>,
    theta2: &CMatrix<T>,
    tol: f64,
) -> Result<(CMatrix<T>, f64), EstimationError> {
    ls_solve_right_cond(y, theta2, tol).map_err(at(Phase::II))
}

/// Removes both single-reflection contributions from a Phase III observation:
/// `ȳ = y − R̃·θ2 − R·θ1`.
pub fn phase3_cancel<T: Real>(
    y: &CVector<T>,
    r: &CMatrix<T>,
    r_tilde: &CMatrix<T>,
    theta1: &[Complex<T>],
    theta2: &[Complex<T>],
) -> CVector<T> {
    let t1 = CVector::from_column_slice(theta1);
    let t2 = CVector::from_column_slice(theta2);
    y - r_tilde * t2 - r * t1
}

/// `Q̂_m = R̃̂·diag(â_m)` for every IRS-1 subsurface.
pub fn reconstruct_q<T: Real>(r_tilde_hat: &CMatrix<T>, a_hat: &[CVector<T>]) -> Vec<CMatrix<T>> {
    a_hat
        .iter()
        .map(|a| scale_columns(r_tilde_hat, a.as_slice()))
        .collect()
}
