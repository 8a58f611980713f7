use crate::numerics::{kron_row, pinv, scale_columns, NumericsError};
use crate::scalar::{unit_root, CMatrix, CVector, Real};
use crate::training::{AliasedDft, SlotPair};
use num_complex::Complex;

struct Bin<T: Real> {
    freq: usize,
    /// Positions `o·inner + n` of the unknowns in this bin.
    positions: Vec<usize>,
    pinv: CMatrix<T>,
}

/// Least-squares solver for a joint phase trained with an [`AliasedDft`]
/// design. The stacked system decouples into one small solve per frequency
/// bin against the reference-channel columns that share that bin.
pub struct BinnedSolver<T: Real> {
    design: AliasedDft,
    bins: Vec<Bin<T>>,
    sigma_max: f64,
    sigma_min: f64,
}

impl<T: Real> BinnedSolver<T> {
    /// Factors every bin; fails if any bin's reference columns are rank
    /// deficient (i.e. the stacked matrix is).
    pub fn new(design: AliasedDft, base: &CMatrix<T>, tol: f64) -> Result<Self, NumericsError> {
        if base.ncols() != design.inner {
            return Err(NumericsError::DimensionMismatch(format!(
                "reference channel has {} columns, design expects {}",
                base.ncols(),
                design.inner
            )));
        }
        let mut bins = Vec::new();
        let (mut smax, mut smin) = (0.0_f64, f64::INFINITY);
        let root_slots = (design.slots as f64).sqrt();
        for (freq, members) in design.bins() {
            let cols: Vec<usize> = members.iter().map(|&(_, n)| n).collect();
            if cols.len() > base.nrows() {
                let total = design.unknowns();
                return Err(NumericsError::RankDeficient {
                    rank: total - 1,
                    required: total,
                });
            }
            let b = CMatrix::from_fn(base.nrows(), cols.len(), |r, c| base[(r, cols[c])]);
            let p = pinv(&b, tol)?;
            smax = smax.max(p.sigma_max * root_slots);
            smin = smin.min(p.sigma_min * root_slots);
            let positions = members.iter().map(|&(o, n)| o * design.inner + n).collect();
            bins.push(Bin {
                freq,
                positions,
                pinv: p.matrix,
            });
        }
        // rank is judged against the whole stacked matrix, not just per bin
        if smin < tol * smax {
            let total = design.unknowns();
            return Err(NumericsError::RankDeficient {
                rank: total - 1,
                required: total,
            });
        }
        Ok(Self {
            design,
            bins,
            sigma_max: smax,
            sigma_min: smin,
        })
    }

    pub fn design(&self) -> AliasedDft {
        self.design
    }

    /// Condition number of the full stacked system.
    pub fn condition(&self) -> f64 {
        self.sigma_max / self.sigma_min
    }

    /// Solves for the stacked unknowns (`o·inner + n` ordering) given one
    /// observation per slot.
    pub fn solve(&self, observations: &[CVector<T>]) -> Result<CVector<T>, NumericsError> {
        let slots = self.design.slots;
        if observations.len() != slots {
            return Err(NumericsError::DimensionMismatch(format!(
                "{} observations for {} slots",
                observations.len(),
                slots
            )));
        }
        let n = observations.first().map_or(0, |y| y.len());
        let inv_slots = Complex::from(T::one() / T::of(slots as f64));
        let roots: Vec<Complex<T>> = (0..slots)
            .map(|j| unit_root::<T>(j, slots).conj())
            .collect();
        let one = Complex::from(T::one());
        let mut out = CVector::zeros(self.design.unknowns());
        for bin in &self.bins {
            // z_f = (1/I) Σ_i conj(ω^{i f}) ȳ_i
            let mut z = CVector::zeros(n);
            for (i, y) in observations.iter().enumerate() {
                z.axpy(roots[(i * bin.freq) % slots], y, one);
            }
            z *= inv_slots;
            let x = &bin.pinv * z;
            for (pos, v) in bin.positions.iter().zip(x.iter()) {
                out[*pos] = *v;
            }
        }
        Ok(out)
    }
}

/// Stacks `outerᵀ ⊗ (base·diag(inner))` over slots into the dense joint
/// design matrix.
pub fn dense_joint_matrix<T: Real>(slots: &[SlotPair<T>], base: &CMatrix<T>) -> CMatrix<T> {
    let n = base.nrows();
    let cols = slots.first().map_or(0, |(o, i)| o.len() * i.len());
    let mut c = CMatrix::zeros(slots.len() * n, cols);
    for (s, (outer, inner)) in slots.iter().enumerate() {
        c.rows_mut(s * n, n)
            .copy_from(&kron_row(outer, &scale_columns(base, inner)));
    }
    c
}

pub(crate) fn stack<T: Real>(obs: &[CVector<T>]) -> CMatrix<T> {
    let n = obs.first().map_or(0, |y| y.len());
    let mut out = CMatrix::zeros(obs.len() * n, 1);
    for (s, y) in obs.iter().enumerate() {
        out.rows_mut(s * n, n).copy_from(y);
    }
    out
}
