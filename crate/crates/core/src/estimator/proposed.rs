use num_complex::Complex;
use rand::Rng;

use super::joint::{dense_joint_matrix, stack, BinnedSolver};
use super::{
    at, collect_single, phase1_estimate, phase2_estimate, phase3_cancel, reconstruct_q,
    synthesize_rx, zeros, EstimationError, EstimationResult, EstimatorOptions, LsStep, Phase,
    PhaseConditions, ScalingEstimates,
};
use crate::channel::{cascaded_csi, ChannelRealization};
use crate::numerics::{ls_solve_left_multi, scale_columns, NumericsError};
use crate::scalar::{modulus, CMatrix, CVector, Real};
use crate::training::{
    multi_user_joint, phase3_joint, AliasedDft, MultiUserPlan, Phase3Plan, PhaseCase, SlotPair,
    TrainingPlan,
};

/// Per-bin solver for a joint phase, possibly trained over more slots than
/// planned.
pub struct JointPreparation<T: Real> {
    pub solver: BinnedSolver<T>,
    pub extended: bool,
}

/// Factors the joint system for `design` against the estimated reference
/// channel. If the stacked matrix is rank deficient the design is grown one
/// slot at a time, up to one slot per unknown.
pub fn prepare_joint<T: Real>(
    design: AliasedDft,
    base: &CMatrix<T>,
    tol: f64,
) -> Result<JointPreparation<T>, NumericsError> {
    let cap = design.unknowns().max(design.slots);
    let mut current = design;
    loop {
        match BinnedSolver::new(current, base, tol) {
            Ok(solver) => {
                return Ok(JointPreparation {
                    solver,
                    extended: current.slots != design.slots,
                })
            }
            Err(NumericsError::RankDeficient { .. }) if current.slots < cap => {
                current.slots += 1;
            }
            Err(e) => return Err(e),
        }
    }
}

struct Solved<T: Real> {
    /// Stacked unknowns, `o·inner + n` ordering.
    values: CVector<T>,
    condition: f64,
}

/// Joint LS solve for `outer·inner` unknowns observed through
/// `outerᵀ ⊗ base·diag(inner)` per slot.
#[allow(clippy::too_many_arguments)]
fn solve_joint<T: Real>(
    phase: Phase,
    obs: &[CVector<T>],
    slots: &[SlotPair<T>],
    design: Option<AliasedDft>,
    base: &CMatrix<T>,
    prepared: Option<&BinnedSolver<T>>,
    opts: &EstimatorOptions,
    steps: &mut Vec<LsStep<T>>,
) -> Result<Solved<T>, EstimationError> {
    let solved = match design {
        Some(design) => {
            let owned;
            let solver = match prepared {
                Some(s) if s.design() == design => s,
                _ => {
                    owned = BinnedSolver::new(design, base, opts.rank_tol).map_err(at(phase))?;
                    &owned
                }
            };
            let values = solver.solve(obs).map_err(at(phase))?;
            Solved {
                values,
                condition: solver.condition(),
            }
        }
        None => {
            let c = dense_joint_matrix(slots, base);
            let (x, condition) =
                ls_solve_left_multi(&c, &stack(obs), opts.rank_tol).map_err(at(phase))?;
            Solved {
                values: x.column(0).into_owned(),
                condition,
            }
        }
    };
    if opts.record_steps {
        let a = dense_joint_matrix(slots, base);
        let y = stack(obs);
        let solution = CMatrix::from_column_slice(solved.values.len(), 1, solved.values.as_slice());
        steps.push(LsStep::Left {
            phase,
            a,
            y,
            solution,
        });
    }
    Ok(solved)
}

fn active_index<T: Real>(v: &[Complex<T>]) -> Option<(usize, Complex<T>)> {
    let mut nz = v.iter().enumerate().filter(|(_, z)| modulus(z) > T::zero());
    let first = nz.next()?;
    if nz.next().is_some() {
        return None;
    }
    Some((first.0, *first.1))
}

/// Averages repeated sequential observations into one column per unknown
/// block, dividing out the active coefficient.
fn average_groups<T: Real>(
    phase: Phase,
    obs: &[CVector<T>],
    active: &[(usize, Complex<T>)],
    groups: usize,
    n: usize,
) -> Result<CMatrix<T>, EstimationError> {
    let mut sums = CMatrix::zeros(n, groups);
    let mut counts = vec![0usize; groups];
    for (y, (g, x)) in obs.iter().zip(active) {
        let mut col = sums.column_mut(*g);
        col += y.map(|z| z / *x);
        counts[*g] += 1;
    }
    for (g, c) in counts.iter().enumerate() {
        if *c == 0 {
            return Err(EstimationError::PlanMismatch(format!(
                "phase {phase}: unknown block {g} never trained"
            )));
        }
        let inv = Complex::from(T::one() / T::of(*c as f64));
        for z in sums.column_mut(g).iter_mut() {
            *z *= inv;
        }
    }
    Ok(sums)
}

/// Phase-level estimate: one vector per unknown block, the condition number of
/// the solved system, and any recorded LS steps.
#[derive(Debug, Clone, PartialEq)]
pub struct PhaseOutput<T: Real> {
    pub blocks: Vec<CVector<T>>,
    pub condition: f64,
    pub steps: Vec<LsStep<T>>,
}

fn unstack<T: Real>(values: &CVector<T>, blocks: usize, len: usize) -> Vec<CVector<T>> {
    (0..blocks)
        .map(|b| values.rows(b * len, len).into_owned())
        .collect()
}

/// Estimates the double-reflection scaling vectors `a_1..a_M1` from cancelled
/// Phase III observations, using the estimated `R̃` as reference channel.
pub fn phase3_estimate_a<T: Real>(
    cancelled: &[CVector<T>],
    plan: &Phase3Plan<T>,
    r_tilde_hat: &CMatrix<T>,
    opts: &EstimatorOptions,
    prepared: Option<&BinnedSolver<T>>,
) -> Result<PhaseOutput<T>, EstimationError> {
    let (n, m2) = r_tilde_hat.shape();
    let m1 = plan.slots.first().map_or(0, |(t1, _)| t1.len());
    if cancelled.len() != plan.slots.len() {
        return Err(EstimationError::PlanMismatch(format!(
            "{} Phase III observations for {} slots",
            cancelled.len(),
            plan.slots.len()
        )));
    }
    let mut steps = Vec::new();
    match plan.case {
        PhaseCase::Sequential => {
            if n < m2 {
                return Err(EstimationError::CaseMismatch {
                    phase: Phase::III,
                    n,
                    required: m2,
                });
            }
            let one = Complex::new(T::one(), T::zero());
            let active = plan
                .slots
                .iter()
                .map(|(t1, t2)| match active_index(t1) {
                    Some(a) if t2.iter().all(|z| *z == one) => Ok(a),
                    _ => Err(EstimationError::PlanMismatch(
                        "sequential Phase III slots need one IRS-1 subsurface ON and IRS 2 fully ON".into(),
                    )),
                })
                .collect::<Result<Vec<_>, _>>()?;
            let y = average_groups(Phase::III, cancelled, &active, m1, n)?;
            let (x, condition) =
                ls_solve_left_multi(r_tilde_hat, &y, opts.rank_tol).map_err(at(Phase::III))?;
            if opts.record_steps {
                steps.push(LsStep::Left {
                    phase: Phase::III,
                    a: r_tilde_hat.clone(),
                    y,
                    solution: x.clone(),
                });
            }
            let blocks = x.column_iter().map(|c| c.into_owned()).collect();
            Ok(PhaseOutput {
                blocks,
                condition,
                steps,
            })
        }
        PhaseCase::Joint => {
            let solved = solve_joint(
                Phase::III,
                cancelled,
                &plan.slots,
                plan.design,
                r_tilde_hat,
                prepared,
                opts,
                &mut steps,
            )?;
            Ok(PhaseOutput {
                blocks: unstack(&solved.values, m1, m2),
                condition: solved.condition,
                steps,
            })
        }
    }
}

fn multi_user_estimate<T: Real>(
    phase: Phase,
    received: &[CVector<T>],
    plan: &MultiUserPlan<T>,
    reference: &CMatrix<T>,
    opts: &EstimatorOptions,
    prepared: Option<&BinnedSolver<T>>,
) -> Result<PhaseOutput<T>, EstimationError> {
    let (n, m) = reference.shape();
    let others = plan.slots.first().map_or(0, |s| s.pilots.len());
    let mut steps = Vec::new();
    if plan.slots.is_empty() {
        return Ok(PhaseOutput {
            blocks: Vec::new(),
            condition: 1.0,
            steps,
        });
    }
    if received.len() != plan.slots.len() {
        return Err(EstimationError::PlanMismatch(format!(
            "{} phase {phase} observations for {} slots",
            received.len(),
            plan.slots.len()
        )));
    }
    match plan.case {
        PhaseCase::Sequential => {
            if n < m {
                return Err(EstimationError::CaseMismatch {
                    phase,
                    n,
                    required: m,
                });
            }
            let one = Complex::new(T::one(), T::zero());
            let active = plan
                .slots
                .iter()
                .map(|s| match active_index(&s.pilots) {
                    Some(a) if s.theta.iter().all(|z| *z == one) => Ok(a),
                    _ => Err(EstimationError::PlanMismatch(format!(
                        "sequential phase {phase} slots need one active user and a fully ON IRS"
                    ))),
                })
                .collect::<Result<Vec<_>, _>>()?;
            let y = average_groups(phase, received, &active, others, n)?;
            let (x, condition) =
                ls_solve_left_multi(reference, &y, opts.rank_tol).map_err(at(phase))?;
            if opts.record_steps {
                steps.push(LsStep::Left {
                    phase,
                    a: reference.clone(),
                    y,
                    solution: x.clone(),
                });
            }
            Ok(PhaseOutput {
                blocks: x.column_iter().map(|c| c.into_owned()).collect(),
                condition,
                steps,
            })
        }
        PhaseCase::Joint => {
            let pairs: Vec<_> = plan
                .slots
                .iter()
                .map(|s| (s.pilots.clone(), s.theta.clone()))
                .collect();
            let solved = solve_joint(
                phase,
                received,
                &pairs,
                plan.design,
                reference,
                prepared,
                opts,
                &mut steps,
            )?;
            Ok(PhaseOutput {
                blocks: unstack(&solved.values, others, m),
                condition: solved.condition,
                steps,
            })
        }
    }
}

/// Estimates `b_2..b_K` from Phase IV observations (IRS 2 OFF) against the
/// reference user's `R̂_1`.
pub fn phase4_estimate_b<T: Real>(
    received: &[CVector<T>],
    plan: &MultiUserPlan<T>,
    r_hat_1: &CMatrix<T>,
    opts: &EstimatorOptions,
    prepared: Option<&BinnedSolver<T>>,
) -> Result<PhaseOutput<T>, EstimationError> {
    multi_user_estimate(Phase::IV, received, plan, r_hat_1, opts, prepared)
}

/// Estimates `b̃_2..b̃_K` from Phase V observations (IRS 1 OFF) against the
/// reference user's `R̃̂_1`.
pub fn phase5_estimate_btilde<T: Real>(
    received: &[CVector<T>],
    plan: &MultiUserPlan<T>,
    r_tilde_hat_1: &CMatrix<T>,
    opts: &EstimatorOptions,
    prepared: Option<&BinnedSolver<T>>,
) -> Result<PhaseOutput<T>, EstimationError> {
    multi_user_estimate(Phase::V, received, plan, r_tilde_hat_1, opts, prepared)
}

/// Replacement plan when extended, and the per-bin solver for joint plans.
type MultiUserPreparation<T> = (Option<MultiUserPlan<T>>, Option<BinnedSolver<T>>);

/// Grows a joint multi-user plan if its stacked matrix is rank deficient.
fn prepare_multi_user<T: Real>(
    phase: Phase,
    plan: &MultiUserPlan<T>,
    k: usize,
    reference: &CMatrix<T>,
    tol: f64,
) -> Result<MultiUserPreparation<T>, EstimationError> {
    match plan.design {
        Some(design) if plan.case == PhaseCase::Joint => {
            let prep = prepare_joint(design, reference, tol).map_err(at(phase))?;
            let grown = if prep.extended {
                Some(multi_user_joint(
                    k,
                    reference.ncols(),
                    prep.solver.design().slots,
                )?)
            } else {
                None
            };
            Ok((grown, Some(prep.solver)))
        }
        _ => Ok((None, None)),
    }
}

fn check_plan<T: Real>(
    real: &ChannelRealization<T>,
    plan: &TrainingPlan<T>,
) -> Result<(), EstimationError> {
    let d = real.dims();
    let ok = plan.phase1.nrows() == d.m1
        && plan.phase2.nrows() == d.m2
        && plan
            .phase3
            .slots
            .iter()
            .all(|(a, b)| a.len() == d.m1 && b.len() == d.m2)
        && plan
            .phase4
            .slots
            .iter()
            .all(|s| s.pilots.len() + 1 == d.k && s.theta.len() == d.m1)
        && plan
            .phase5
            .slots
            .iter()
            .all(|s| s.pilots.len() + 1 == d.k && s.theta.len() == d.m2)
        && (d.k == 1 || (!plan.phase4.slots.is_empty() && !plan.phase5.slots.is_empty()));
    if ok {
        Ok(())
    } else {
        Err(EstimationError::PlanMismatch(format!(
            "plan dimensions do not fit {d:?}"
        )))
    }
}

fn multi_user_rx<T: Real, R: Rng + ?Sized>(
    real: &ChannelRealization<T>,
    plan: &MultiUserPlan<T>,
    irs: u8,
    noise_power: T,
    rng: &mut R,
) -> Result<Vec<CVector<T>>, EstimationError> {
    let d = real.dims();
    plan.slots
        .iter()
        .map(|s| {
            let mut pilots = zeros(d.k);
            pilots[1..].copy_from_slice(&s.pilots);
            if irs == 1 {
                synthesize_rx(real, &s.theta, &zeros(d.m2), &pilots, noise_power, rng)
            } else {
                synthesize_rx(real, &zeros(d.m1), &s.theta, &pilots, noise_power, rng)
            }
        })
        .collect()
}

/// Runs Phases I-V on one realization and reconstructs every user's cascaded
/// CSI from the reference user's estimates.
pub fn run_proposed<T: Real, R: Rng + ?Sized>(
    real: &ChannelRealization<T>,
    plan: &TrainingPlan<T>,
    noise_power: T,
    rng: &mut R,
    opts: &EstimatorOptions,
) -> Result<EstimationResult<T>, EstimationError> {
    check_plan(real, plan)?;
    let d = real.dims();
    let tol = opts.rank_tol;
    let mut steps = Vec::new();
    let mut conditions = PhaseConditions::default();
    let mut rank_extended = false;

    // Phase I: IRS 2 OFF
    let y1 = collect_single(real, &plan.phase1, 1, 0, noise_power, rng)?;
    let (r1, c1) = phase1_estimate(&y1, &plan.phase1, tol)?;
    conditions.phase1 = Some(c1);
    // Phase II: IRS 1 OFF
    let y2 = collect_single(real, &plan.phase2, 2, 0, noise_power, rng)?;
    let (rt1, c2) = phase2_estimate(&y2, &plan.phase2, tol)?;
    conditions.phase2 = Some(c2);
    if opts.record_steps {
        steps.push(LsStep::Right {
            phase: Phase::I,
            y: y1,
            theta: plan.phase1.clone(),
            solution: r1.clone(),
        });
        steps.push(LsStep::Right {
            phase: Phase::II,
            y: y2,
            theta: plan.phase2.clone(),
            solution: rt1.clone(),
        });
    }

    // Phase III: rank is verified against the estimated R̃ before training
    let mut phase3 = None;
    let mut solver3 = None;
    if let (PhaseCase::Joint, Some(design)) = (plan.phase3.case, plan.phase3.design) {
        let prep = prepare_joint(design, &rt1, tol).map_err(at(Phase::III))?;
        if prep.extended {
            rank_extended = true;
            phase3 = Some(phase3_joint(d.m1, d.m2, prep.solver.design().slots)?);
        }
        solver3 = Some(prep.solver);
    }
    let phase3 = phase3.as_ref().unwrap_or(&plan.phase3);
    let genie = if opts.genie_cancel {
        Some(cascaded_csi(real)?)
    } else {
        None
    };
    let (cancel_r, cancel_rt) = match &genie {
        Some(csi) => (&csi.r[0], &csi.r_tilde[0]),
        None => (&r1, &rt1),
    };
    let pilot = super::single_pilot(d.k, 0);
    let mut cancelled = Vec::with_capacity(phase3.slots.len());
    for (t1, t2) in &phase3.slots {
        let y = synthesize_rx(real, t1, t2, &pilot, noise_power, rng)?;
        cancelled.push(phase3_cancel(&y, cancel_r, cancel_rt, t1, t2));
    }
    let out3 = phase3_estimate_a(&cancelled, phase3, &rt1, opts, solver3.as_ref())?;
    conditions.phase3 = Some(out3.condition);
    steps.extend(out3.steps);
    let a_hat = out3.blocks;
    let q1 = reconstruct_q(&rt1, &a_hat);

    // Phases IV and V: remaining users against the reference user's estimates
    let (grown4, solver4) = prepare_multi_user(Phase::IV, &plan.phase4, d.k, &r1, tol)?;
    let plan4 = grown4.as_ref().unwrap_or(&plan.phase4);
    let rx4 = multi_user_rx(real, plan4, 1, noise_power, rng)?;
    let out4 = phase4_estimate_b(&rx4, plan4, &r1, opts, solver4.as_ref())?;

    let (grown5, solver5) = prepare_multi_user(Phase::V, &plan.phase5, d.k, &rt1, tol)?;
    let plan5 = grown5.as_ref().unwrap_or(&plan.phase5);
    let rx5 = multi_user_rx(real, plan5, 2, noise_power, rng)?;
    let out5 = phase5_estimate_btilde(&rx5, plan5, &rt1, opts, solver5.as_ref())?;
    rank_extended |= grown4.is_some() || grown5.is_some();
    if d.k > 1 {
        conditions.phase4 = Some(out4.condition);
        conditions.phase5 = Some(out5.condition);
    }
    steps.extend(out4.steps);
    steps.extend(out5.steps);

    let ones = CVector::from_element(d.m1, Complex::new(T::one(), T::zero()));
    let ones_t = CVector::from_element(d.m2, Complex::new(T::one(), T::zero()));
    let b_hat: Vec<CVector<T>> = std::iter::once(ones).chain(out4.blocks).collect();
    let b_tilde_hat: Vec<CVector<T>> = std::iter::once(ones_t).chain(out5.blocks).collect();

    let r_hat = b_hat
        .iter()
        .map(|b| scale_columns(&r1, b.as_slice()))
        .collect();
    let r_tilde_hat = b_tilde_hat
        .iter()
        .map(|b| scale_columns(&rt1, b.as_slice()))
        .collect();
    let q_hat = b_hat
        .iter()
        .map(|b| {
            q1.iter()
                .zip(b.iter())
                .map(|(q, bm)| q.map(|z| z * *bm))
                .collect()
        })
        .collect();

    let slots = crate::training::PhaseSlots {
        phase1: plan.phase1.ncols(),
        phase2: plan.phase2.ncols(),
        phase3: phase3.slots.len(),
        phase4: plan4.slots.len(),
        phase5: plan5.slots.len(),
    };
    Ok(EstimationResult {
        r_hat,
        r_tilde_hat,
        q_hat,
        scaling: Some(ScalingEstimates {
            a_hat,
            b_hat,
            b_tilde_hat,
        }),
        slots,
        conditions,
        rank_extended,
        ls_steps: steps,
    })
}
