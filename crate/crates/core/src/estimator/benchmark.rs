use num_complex::Complex;
use rand::Rng;

use super::{
    at, collect_single, single_pilot, synthesize_rx, zeros, EstimationError, EstimationResult,
    EstimatorOptions, LsStep, Phase, PhaseConditions,
};
use crate::channel::{cascaded_csi, ChannelRealization};
use crate::numerics::ls_solve_right_cond;
use crate::scalar::{CMatrix, Real};
use crate::training::{dft_training, PhaseSlots};

/// Per-user single-reflection training lengths of the benchmark.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BenchmarkSlots {
    pub phase1: usize,
    pub phase2: usize,
}

impl BenchmarkSlots {
    /// One slot per subsurface.
    pub fn minimal(m1: usize, m2: usize) -> Self {
        Self {
            phase1: m1,
            phase2: m2,
        }
    }
}

fn basis<T: Real>(m: usize, i: usize) -> Vec<Complex<T>> {
    let mut v = zeros(m);
    v[i] = Complex::new(T::one(), T::zero());
    v
}

/// Estimates every user's cascaded channels independently: DFT training of
/// each IRS alone, then one slot per subsurface pair with exactly one element
/// of each IRS ON, from which a column of `Q_{k,m1}` is read after cancelling
/// the single-reflection paths.
pub fn run_benchmark<T: Real, R: Rng + ?Sized>(
    real: &ChannelRealization<T>,
    training: BenchmarkSlots,
    noise_power: T,
    rng: &mut R,
    opts: &EstimatorOptions,
) -> Result<EstimationResult<T>, EstimationError> {
    let d = real.dims();
    let theta1: CMatrix<T> = dft_training(d.m1, training.phase1)?;
    let theta2: CMatrix<T> = dft_training(d.m2, training.phase2)?;
    let genie = if opts.genie_cancel {
        Some(cascaded_csi(real)?)
    } else {
        None
    };
    let mut steps = Vec::new();
    let mut conditions = PhaseConditions::default();
    let (mut r_hat, mut r_tilde_hat, mut q_hat) = (Vec::new(), Vec::new(), Vec::new());

    for k in 0..d.k {
        let y1 = collect_single(real, &theta1, 1, k, noise_power, rng)?;
        let (r, c1) = ls_solve_right_cond(&y1, &theta1, opts.rank_tol).map_err(at(Phase::I))?;
        let y2 = collect_single(real, &theta2, 2, k, noise_power, rng)?;
        let (rt, c2) = ls_solve_right_cond(&y2, &theta2, opts.rank_tol).map_err(at(Phase::II))?;
        conditions.phase1 = Some(conditions.phase1.map_or(c1, |c| c.max(c1)));
        conditions.phase2 = Some(conditions.phase2.map_or(c2, |c| c.max(c2)));
        if opts.record_steps {
            steps.push(LsStep::Right {
                phase: Phase::I,
                y: y1,
                theta: theta1.clone(),
                solution: r.clone(),
            });
            steps.push(LsStep::Right {
                phase: Phase::II,
                y: y2,
                theta: theta2.clone(),
                solution: rt.clone(),
            });
        }
        let (cancel_r, cancel_rt) = match &genie {
            Some(csi) => (&csi.r[k], &csi.r_tilde[k]),
            None => (&r, &rt),
        };
        let pilots = single_pilot(d.k, k);
        let mut q = vec![CMatrix::zeros(d.n, d.m2); d.m1];
        for (m1, qm) in q.iter_mut().enumerate() {
            let t1 = basis(d.m1, m1);
            for m2 in 0..d.m2 {
                let y = synthesize_rx(real, &t1, &basis(d.m2, m2), &pilots, noise_power, rng)?;
                let col = y - cancel_r.column(m1) - cancel_rt.column(m2);
                qm.set_column(m2, &col);
            }
        }
        r_hat.push(r);
        r_tilde_hat.push(rt);
        q_hat.push(q);
    }
    let slots = PhaseSlots {
        phase1: d.k * training.phase1,
        phase2: d.k * training.phase2,
        phase3: d.k * d.m1 * d.m2,
        phase4: 0,
        phase5: 0,
    };
    Ok(EstimationResult {
        r_hat,
        r_tilde_hat,
        q_hat,
        scaling: None,
        slots,
        conditions,
        rank_extended: false,
        ls_steps: steps,
    })
}
