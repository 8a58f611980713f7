//! Training reflection patterns, pilot schedules and overhead accounting.
//!
//! Reflection amplitudes are binary: a subsurface is either OFF (0) or ON
//! with unit amplitude and a programmable phase.
//!
//! Joint (multi-slot) estimation phases use an aliased DFT design. Unknowns
//! are indexed by an outer index `o < O` and an inner index `n`; slot `i`
//! applies phase `ω^{i·o}` on the outer axis and `ω^{i·O·n}` on the inner
//! axis, with `ω = e^{-j2π/I}`. Column `(o, n)` of the stacked system is then
//! `s_f ⊗ b_n`, where `s_f` is DFT column `f = (o + O·n) mod I` and `b_n` is
//! column `n` of the reference channel. Distinct bins are orthogonal, so the
//! least-squares problem splits into one small solve per bin, and each bin
//! holds at most `⌈O·inner/I⌉` unknowns with distinct inner indices whenever
//! `I ≥ O`.

use std::collections::BTreeMap;
use std::io::{BufRead, Write};

use num_complex::Complex;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::channel::Dims;
use crate::scalar::{modulus, unit_root, CMatrix, Real};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum TrainingError {
    #[error("{slots} slots cannot train {unknowns} reflection coefficients")]
    TooFewSlots { unknowns: usize, slots: usize },
    #[error("malformed plan record: {0}")]
    Malformed(String),
    #[error("plan I/O: {0}")]
    Io(String),
}

fn div_ceil(a: usize, b: usize) -> usize {
    a.div_ceil(b)
}

/// First `m` rows of the `slots`-point DFT matrix: `Θ[r, i] = ω^{r·i}`.
pub fn dft_training<T: Real>(m: usize, slots: usize) -> Result<CMatrix<T>, TrainingError> {
    if slots < m {
        return Err(TrainingError::TooFewSlots { unknowns: m, slots });
    }
    Ok(CMatrix::from_fn(m, slots, |r, i| unit_root(r * i, slots)))
}

/// Aliased DFT design for a joint estimation phase (see module docs).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct AliasedDft {
    pub slots: usize,
    pub outer: usize,
    pub inner: usize,
}

impl AliasedDft {
    pub fn unknowns(&self) -> usize {
        self.outer * self.inner
    }

    pub fn outer_phase<T: Real>(&self, slot: usize, o: usize) -> Complex<T> {
        unit_root(slot * o, self.slots)
    }

    pub fn inner_phase<T: Real>(&self, slot: usize, n: usize) -> Complex<T> {
        unit_root(
            (slot % self.slots) * ((self.outer * n) % self.slots),
            self.slots,
        )
    }

    pub fn outer_vector<T: Real>(&self, slot: usize) -> Vec<Complex<T>> {
        (0..self.outer).map(|o| self.outer_phase(slot, o)).collect()
    }

    pub fn inner_vector<T: Real>(&self, slot: usize) -> Vec<Complex<T>> {
        (0..self.inner).map(|n| self.inner_phase(slot, n)).collect()
    }

    pub fn bin(&self, o: usize, n: usize) -> usize {
        (o + self.outer * n) % self.slots
    }

    /// Unknowns `(o, n)` grouped by frequency bin, in increasing bin order.
    pub fn bins(&self) -> Vec<(usize, Vec<(usize, usize)>)> {
        let mut groups: BTreeMap<usize, Vec<(usize, usize)>> = BTreeMap::new();
        for o in 0..self.outer {
            for n in 0..self.inner {
                groups.entry(self.bin(o, n)).or_default().push((o, n));
            }
        }
        groups.into_iter().collect()
    }
}

/// How a multi-slot phase resolves its unknowns.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PhaseCase {
    /// One unknown block per slot (single subsurface or single user active).
    Sequential,
    /// All unknowns stacked and solved jointly.
    Joint,
}

/// One Phase III slot: `(θ1, θ2)`.
pub type SlotPair<T> = (Vec<Complex<T>>, Vec<Complex<T>>);

/// Phase III: per-slot `(θ1, θ2)` reflection pairs.
#[derive(Debug, Clone, PartialEq)]
pub struct Phase3Plan<T: Real> {
    pub case: PhaseCase,
    pub slots: Vec<SlotPair<T>>,
    /// Set for generated joint plans; enables per-bin solving and extension.
    pub design: Option<AliasedDft>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MultiUserSlot<T: Real> {
    /// Pilot symbols of users 2..K.
    pub pilots: Vec<Complex<T>>,
    /// Reflection of the active IRS (the other one is OFF).
    pub theta: Vec<Complex<T>>,
}

/// Phase IV (IRS 1 active) or Phase V (IRS 2 active) schedule.
#[derive(Debug, Clone, PartialEq)]
pub struct MultiUserPlan<T: Real> {
    pub case: PhaseCase,
    pub slots: Vec<MultiUserSlot<T>>,
    pub design: Option<AliasedDft>,
}

impl<T: Real> MultiUserPlan<T> {
    fn empty() -> Self {
        Self {
            case: PhaseCase::Sequential,
            slots: Vec::new(),
            design: None,
        }
    }
}

fn ones<T: Real>(n: usize) -> Vec<Complex<T>> {
    vec![Complex::new(T::one(), T::zero()); n]
}

fn basis<T: Real>(n: usize, i: usize) -> Vec<Complex<T>> {
    let mut v = vec![Complex::new(T::zero(), T::zero()); n];
    v[i] = Complex::new(T::one(), T::zero());
    v
}

/// Slots needed by a joint phase with the aliased design.
pub fn joint_min_slots(outer: usize, inner: usize, n: usize) -> usize {
    div_ceil(outer * inner, n).max(outer)
}

pub fn phase3_joint<T: Real>(
    m1: usize,
    m2: usize,
    slots: usize,
) -> Result<Phase3Plan<T>, TrainingError> {
    if slots < m1 {
        return Err(TrainingError::TooFewSlots {
            unknowns: m1,
            slots,
        });
    }
    let design = AliasedDft {
        slots,
        outer: m1,
        inner: m2,
    };
    let slots = (0..slots)
        .map(|i| (design.outer_vector(i), design.inner_vector(i)))
        .collect();
    Ok(Phase3Plan {
        case: PhaseCase::Joint,
        slots,
        design: Some(design),
    })
}

pub fn phase3_sequential<T: Real>(
    m1: usize,
    m2: usize,
    slots: usize,
) -> Result<Phase3Plan<T>, TrainingError> {
    if slots < m1 {
        return Err(TrainingError::TooFewSlots {
            unknowns: m1,
            slots,
        });
    }
    let slots = (0..slots).map(|i| (basis(m1, i % m1), ones(m2))).collect();
    Ok(Phase3Plan {
        case: PhaseCase::Sequential,
        slots,
        design: None,
    })
}

/// Minimal Phase III plan: one IRS-1 subsurface ON per slot with IRS 2 fully
/// ON when `N ≥ M2`, otherwise a joint design over `⌈M1·M2/N⌉` slots.
pub fn phase3_plan<T: Real>(m1: usize, m2: usize, n: usize) -> Phase3Plan<T> {
    let built = if n >= m2 {
        phase3_sequential(m1, m2, m1)
    } else {
        phase3_joint(m1, m2, joint_min_slots(m1, m2, n))
    };
    built.expect("minimum slot count is feasible")
}

pub fn multi_user_sequential<T: Real>(
    k: usize,
    m: usize,
    slots: usize,
) -> Result<MultiUserPlan<T>, TrainingError> {
    let others = k.saturating_sub(1);
    if others == 0 {
        return Ok(MultiUserPlan::empty());
    }
    if slots < others {
        return Err(TrainingError::TooFewSlots {
            unknowns: others,
            slots,
        });
    }
    let slots = (0..slots)
        .map(|i| MultiUserSlot {
            pilots: basis(others, i % others),
            theta: ones(m),
        })
        .collect();
    Ok(MultiUserPlan {
        case: PhaseCase::Sequential,
        slots,
        design: None,
    })
}

pub fn multi_user_joint<T: Real>(
    k: usize,
    m: usize,
    slots: usize,
) -> Result<MultiUserPlan<T>, TrainingError> {
    let others = k.saturating_sub(1);
    if others == 0 {
        return Ok(MultiUserPlan::empty());
    }
    if slots < others {
        return Err(TrainingError::TooFewSlots {
            unknowns: others,
            slots,
        });
    }
    let design = AliasedDft {
        slots,
        outer: others,
        inner: m,
    };
    let slots = (0..slots)
        .map(|i| MultiUserSlot {
            pilots: design.outer_vector(i),
            theta: design.inner_vector(i),
        })
        .collect();
    Ok(MultiUserPlan {
        case: PhaseCase::Joint,
        slots,
        design: Some(design),
    })
}

fn multi_user_min(k: usize, m: usize, n: usize) -> usize {
    let others = k.saturating_sub(1);
    if others == 0 {
        0
    } else if n >= m {
        others
    } else {
        div_ceil(others * m, n)
    }
}

/// Minimal Phase IV and Phase V schedules.
pub fn phase45_plan<T: Real>(
    k: usize,
    m1: usize,
    m2: usize,
    n: usize,
) -> (MultiUserPlan<T>, MultiUserPlan<T>) {
    let build = |m: usize| {
        let slots = multi_user_min(k, m, n);
        if n >= m {
            multi_user_sequential(k, m, slots)
        } else {
            multi_user_joint(k, m, slots)
        }
        .expect("minimum slot count is feasible")
    };
    (build(m1), build(m2))
}

/// Slot counts of the five phases of the proposed protocol.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct PhaseSlots {
    pub phase1: usize,
    pub phase2: usize,
    pub phase3: usize,
    pub phase4: usize,
    pub phase5: usize,
}

impl PhaseSlots {
    pub fn minimum(dims: Dims) -> Self {
        let Dims { n, m1, m2, k } = dims;
        Self {
            phase1: m1,
            phase2: m2,
            phase3: if n >= m2 { m1 } else { div_ceil(m1 * m2, n) },
            phase4: multi_user_min(k, m1, n),
            phase5: multi_user_min(k, m2, n),
        }
    }

    pub fn total(&self) -> usize {
        self.phase1 + self.phase2 + self.phase3 + self.phase4 + self.phase5
    }

    /// Grows every phase in proportion to its current count until the total
    /// reaches `target` (rounding down, leftover slots go to Phase III).
    pub fn padded_to(&self, target: usize) -> Self {
        let total = self.total();
        if target <= total {
            return *self;
        }
        let extra = target - total;
        let share = |v: usize| extra * v / total;
        let mut out = Self {
            phase1: self.phase1 + share(self.phase1),
            phase2: self.phase2 + share(self.phase2),
            phase3: self.phase3 + share(self.phase3),
            phase4: self.phase4 + share(self.phase4),
            phase5: self.phase5 + share(self.phase5),
        };
        out.phase3 += target - out.total();
        out
    }
}

/// Minimum pilot slots of the proposed five-phase protocol.
pub fn overhead_proposed(n: usize, m1: usize, m2: usize, k: usize) -> usize {
    PhaseSlots::minimum(Dims { n, m1, m2, k }).total()
}

/// Pilot slots of the per-antenna benchmark: each user separately trains both
/// single-reflection links and then every subsurface pair.
pub fn overhead_benchmark(m1: usize, m2: usize, k: usize) -> usize {
    k * (m1 + m2) + k * m1 * m2
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainingPlan<T: Real> {
    /// Θ₁ (M1×I1), IRS 2 OFF.
    pub phase1: CMatrix<T>,
    /// Θ₂ (M2×I2), IRS 1 OFF.
    pub phase2: CMatrix<T>,
    pub phase3: Phase3Plan<T>,
    pub phase4: MultiUserPlan<T>,
    pub phase5: MultiUserPlan<T>,
}

impl<T: Real> TrainingPlan<T> {
    pub fn minimal(dims: Dims) -> Self {
        Self::with_slots(dims, PhaseSlots::minimum(dims), false)
            .expect("minimum slot counts are feasible")
    }

    /// Builds a plan with the given per-phase slot counts. Each case follows
    /// `N` versus the relevant subsurface count; `joint_phase3` forces the
    /// joint Phase III design even when `N ≥ M2`.
    pub fn with_slots(
        dims: Dims,
        slots: PhaseSlots,
        joint_phase3: bool,
    ) -> Result<Self, TrainingError> {
        let Dims { n, m1, m2, k } = dims;
        let phase3 = if n >= m2 && !joint_phase3 {
            phase3_sequential(m1, m2, slots.phase3)?
        } else {
            let needed = joint_min_slots(m1, m2, n);
            if slots.phase3 < needed {
                return Err(TrainingError::TooFewSlots {
                    unknowns: m1 * m2,
                    slots: slots.phase3,
                });
            }
            phase3_joint(m1, m2, slots.phase3)?
        };
        let multi = |m: usize, count: usize| {
            if n >= m {
                multi_user_sequential(k, m, count)
            } else {
                if count < multi_user_min(k, m, n) {
                    return Err(TrainingError::TooFewSlots {
                        unknowns: (k - 1) * m,
                        slots: count,
                    });
                }
                multi_user_joint(k, m, count)
            }
        };
        Ok(Self {
            phase1: dft_training(m1, slots.phase1)?,
            phase2: dft_training(m2, slots.phase2)?,
            phase3,
            phase4: multi(m1, slots.phase4)?,
            phase5: multi(m2, slots.phase5)?,
        })
    }

    pub fn slots(&self) -> PhaseSlots {
        PhaseSlots {
            phase1: self.phase1.ncols(),
            phase2: self.phase2.ncols(),
            phase3: self.phase3.slots.len(),
            phase4: self.phase4.slots.len(),
            phase5: self.phase5.slots.len(),
        }
    }

    /// Every training amplitude is exactly 0 or 1 (up to rounding of the
    /// unit-modulus phases).
    pub fn amplitudes_binary(&self) -> bool {
        let ok = |z: &Complex<T>| {
            let a = modulus(z).as_f64();
            a == 0.0 || (a - 1.0).abs() < 1e-12
        };
        self.phase1.iter().all(ok)
            && self.phase2.iter().all(ok)
            && self
                .phase3
                .slots
                .iter()
                .all(|(a, b)| a.iter().all(ok) && b.iter().all(ok))
            && self.phase4.slots.iter().all(|s| s.theta.iter().all(ok))
            && self.phase5.slots.iter().all(|s| s.theta.iter().all(ok))
    }

    /// Flattens the plan into one record per slot.
    pub fn records(&self) -> Vec<SlotRecord> {
        let m1 = self.phase1.nrows();
        let m2 = self.phase2.nrows();
        let off = |n: usize| vec![[0.0, 0.0]; n];
        let mut out = Vec::with_capacity(self.slots().total());
        for i in 0..self.phase1.ncols() {
            let col: Vec<_> = self.phase1.column(i).iter().cloned().collect();
            out.push(SlotRecord::new(
                1,
                i,
                polar(&col),
                off(m2),
                vec![[1.0, 0.0]],
            ));
        }
        for i in 0..self.phase2.ncols() {
            let col: Vec<_> = self.phase2.column(i).iter().cloned().collect();
            out.push(SlotRecord::new(
                2,
                i,
                off(m1),
                polar(&col),
                vec![[1.0, 0.0]],
            ));
        }
        for (i, (t1, t2)) in self.phase3.slots.iter().enumerate() {
            out.push(SlotRecord::new(
                3,
                i,
                polar(t1),
                polar(t2),
                vec![[1.0, 0.0]],
            ));
        }
        for (i, s) in self.phase4.slots.iter().enumerate() {
            out.push(SlotRecord::new(
                4,
                i,
                polar(&s.theta),
                off(m2),
                polar(&s.pilots),
            ));
        }
        for (i, s) in self.phase5.slots.iter().enumerate() {
            out.push(SlotRecord::new(
                5,
                i,
                off(m1),
                polar(&s.theta),
                polar(&s.pilots),
            ));
        }
        out
    }

    /// Writes the plan as JSON Lines, one [`SlotRecord`] per line.
    pub fn write_jsonl<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        for rec in self.records() {
            serde_json::to_writer(&mut w, &rec)?;
            writeln!(w)?;
        }
        Ok(())
    }
}

fn polar<T: Real>(v: &[Complex<T>]) -> Vec<[f64; 2]> {
    v.iter()
        .map(|z| {
            let r = modulus(z).as_f64();
            let phi = z.im.atan2(z.re).as_f64();
            if r == 0.0 {
                [0.0, 0.0]
            } else {
                [r, phi.as_f64()]
            }
        })
        .collect()
}

/// One pilot slot: reflection coefficients and pilot symbols as
/// `[amplitude, phase_rad]` pairs. Phase I-III slots carry the reference
/// user's single pilot; Phase IV/V slots carry users 2..K.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SlotRecord {
    pub phase: u8,
    pub slot: usize,
    pub theta1: Vec<[f64; 2]>,
    pub theta2: Vec<[f64; 2]>,
    pub pilots: Vec<[f64; 2]>,
}

impl SlotRecord {
    fn new(
        phase: u8,
        slot: usize,
        theta1: Vec<[f64; 2]>,
        theta2: Vec<[f64; 2]>,
        pilots: Vec<[f64; 2]>,
    ) -> Self {
        Self {
            phase,
            slot,
            theta1,
            theta2,
            pilots,
        }
    }

    pub fn theta1<T: Real>(&self) -> Vec<Complex<T>> {
        from_polar(&self.theta1)
    }

    pub fn theta2<T: Real>(&self) -> Vec<Complex<T>> {
        from_polar(&self.theta2)
    }

    pub fn pilots<T: Real>(&self) -> Vec<Complex<T>> {
        from_polar(&self.pilots)
    }
}

fn from_polar<T: Real>(v: &[[f64; 2]]) -> Vec<Complex<T>> {
    v.iter()
        .map(|[r, phi]| Complex::new(T::of(r * phi.cos()), T::of(r * phi.sin())))
        .collect()
}

pub fn read_jsonl<R: BufRead>(r: R) -> Result<Vec<SlotRecord>, TrainingError> {
    let mut out = Vec::new();
    for (lineno, line) in r.lines().enumerate() {
        let line = line.map_err(|e| TrainingError::Io(e.to_string()))?;
        if line.trim().is_empty() {
            continue;
        }
        let rec: SlotRecord = serde_json::from_str(&line)
            .map_err(|e| TrainingError::Malformed(format!("line {}: {e}", lineno + 1)))?;
        if !(1..=5).contains(&rec.phase) {
            return Err(TrainingError::Malformed(format!(
                "line {}: phase {}",
                lineno + 1,
                rec.phase
            )));
        }
        out.push(rec);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::rank_report;
    use crate::scalar::complex_gaussian;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    type C = Complex<f64>;

    fn dims(n: usize, m1: usize, m2: usize, k: usize) -> Dims {
        Dims { n, m1, m2, k }
    }

    #[test]
    fn dft_examples() {
        let t: CMatrix<f64> = dft_training(2, 2).unwrap();
        let expect = [
            C::new(1., 0.),
            C::new(1., 0.),
            C::new(1., 0.),
            C::new(-1., 0.),
        ];
        for (a, b) in t.iter().zip(expect.iter()) {
            assert!((a - b).norm() < 1e-15);
        }
        let t: CMatrix<f64> = dft_training(2, 4).unwrap();
        let gram = &t * t.adjoint();
        assert!((gram - CMatrix::identity(2, 2).scale(4.0))
            .iter()
            .all(|z| z.norm() < 1e-12));
        assert!(t.iter().all(|z| (z.norm() - 1.0).abs() < 1e-15));
        assert_eq!(
            dft_training::<f64>(3, 2),
            Err(TrainingError::TooFewSlots {
                unknowns: 3,
                slots: 2
            })
        );
    }

    #[test]
    fn phase3_sequential_pattern() {
        let p: Phase3Plan<f64> = phase3_plan(2, 2, 4);
        assert_eq!(p.case, PhaseCase::Sequential);
        assert_eq!(p.slots.len(), 2);
        let one = C::new(1., 0.);
        let zero = C::new(0., 0.);
        assert_eq!(p.slots[0], (vec![one, zero], vec![one, one]));
        assert_eq!(p.slots[1], (vec![zero, one], vec![one, one]));
    }

    #[test]
    fn phase3_slot_counts() {
        let p: Phase3Plan<f64> = phase3_plan(20, 20, 8);
        assert_eq!(p.case, PhaseCase::Joint);
        assert_eq!(p.slots.len(), 50);
        assert_eq!(phase3_plan::<f64>(1, 1, 1).slots.len(), 1);
    }

    #[test]
    fn phase45_slot_counts() {
        let (p4, p5) = phase45_plan::<f64>(1, 20, 20, 4);
        assert!(p4.slots.is_empty() && p5.slots.is_empty());
        let (p4, p5) = phase45_plan::<f64>(4, 20, 20, 20);
        assert_eq!((p4.slots.len(), p5.slots.len()), (3, 3));
        assert_eq!(p4.case, PhaseCase::Sequential);
        let (p4, p5) = phase45_plan::<f64>(4, 20, 20, 8);
        assert_eq!((p4.slots.len(), p5.slots.len()), (8, 8));
        assert_eq!(p5.case, PhaseCase::Joint);
    }

    #[test]
    fn overhead_golden_values() {
        assert_eq!(overhead_proposed(20, 20, 20, 1), 60);
        assert_eq!(overhead_proposed(8, 20, 20, 4), 106);
        assert_eq!(overhead_proposed(32, 20, 20, 5), 68);
        assert_eq!(overhead_benchmark(20, 20, 4), 1760);
        assert_eq!(overhead_benchmark(20, 20, 1), 440);
        assert_eq!(overhead_benchmark(1, 1, 1), 3);
    }

    #[test]
    fn overhead_monotone_with_plateau() {
        for k in 1..8 {
            let mut prev = usize::MAX;
            for n in 1..64 {
                let v = overhead_proposed(n, 20, 12, k);
                assert!(v <= prev);
                if n >= 20 {
                    assert_eq!(v, 2 * 20 + 12 + 2 * (k - 1));
                }
                prev = v;
            }
        }
    }

    #[test]
    fn plan_matches_overhead_and_is_binary() {
        for d in [
            dims(8, 20, 20, 4),
            dims(32, 20, 20, 5),
            dims(3, 5, 7, 3),
            dims(1, 1, 1, 1),
            dims(6, 4, 9, 2),
        ] {
            let plan: TrainingPlan<f64> = TrainingPlan::minimal(d);
            assert_eq!(
                plan.slots().total(),
                overhead_proposed(d.n, d.m1, d.m2, d.k)
            );
            assert!(plan.amplitudes_binary());
        }
    }

    #[test]
    fn padding_hits_target_exactly() {
        let base = PhaseSlots::minimum(dims(8, 20, 20, 4));
        let padded = base.padded_to(1760);
        assert_eq!(padded.total(), 1760);
        assert_eq!(
            padded,
            PhaseSlots {
                phase1: 332,
                phase2: 332,
                phase3: 832,
                phase4: 132,
                phase5: 132
            }
        );
        assert_eq!(base.padded_to(10), base);
        let plan: TrainingPlan<f64> =
            TrainingPlan::with_slots(dims(8, 20, 20, 4), padded, false).unwrap();
        assert_eq!(plan.slots(), padded);
    }

    /// The stacked Phase III matrix reaches full rank at the minimum slot
    /// count for a generic reference channel.
    #[test]
    fn aliased_design_full_rank_at_minimum() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for (n, m1, m2) in [(8, 20, 20), (3, 4, 5), (1, 2, 2), (5, 3, 7), (4, 6, 6)] {
            let r: CMatrix<f64> = CMatrix::from_fn(n, m2, |_, _| complex_gaussian(&mut rng, 1.0));
            let plan: Phase3Plan<f64> = phase3_plan(m1, m2, n);
            assert_eq!(plan.slots.len(), (m1 * m2).div_ceil(n));
            let mut c = CMatrix::zeros(plan.slots.len() * n, m1 * m2);
            for (i, (t1, t2)) in plan.slots.iter().enumerate() {
                let block = crate::numerics::kron_row(t1, &crate::numerics::scale_columns(&r, t2));
                c.rows_mut(i * n, n).copy_from(&block);
            }
            assert_eq!(
                rank_report(&c, 1e-12).rank,
                m1 * m2,
                "n={n} m1={m1} m2={m2}"
            );
        }
    }

    #[test]
    fn bins_partition_unknowns() {
        let d = AliasedDft {
            slots: 50,
            outer: 20,
            inner: 20,
        };
        let bins = d.bins();
        assert_eq!(bins.iter().map(|(_, g)| g.len()).sum::<usize>(), 400);
        for (_, g) in &bins {
            assert!(g.len() <= 8);
            let mut inner: Vec<_> = g.iter().map(|(_, n)| *n).collect();
            inner.sort();
            inner.dedup();
            assert_eq!(inner.len(), g.len());
        }
    }

    #[test]
    fn jsonl_round_trip() {
        let plan: TrainingPlan<f64> = TrainingPlan::minimal(dims(3, 4, 5, 3));
        let mut buf = Vec::new();
        plan.write_jsonl(&mut buf).unwrap();
        let recs = read_jsonl(buf.as_slice()).unwrap();
        assert_eq!(recs.len(), plan.slots().total());
        let p3: Vec<_> = recs.iter().filter(|r| r.phase == 3).collect();
        for (rec, (t1, _)) in p3.iter().zip(&plan.phase3.slots) {
            let back: Vec<C> = rec.theta1();
            for (a, b) in back.iter().zip(t1) {
                assert!((a - b).norm() < 1e-12);
            }
        }
        assert!(read_jsonl(
            "{\"phase\":9,\"slot\":0,\"theta1\":[],\"theta2\":[],\"pilots\":[]}".as_bytes()
        )
        .is_err());
    }
}
