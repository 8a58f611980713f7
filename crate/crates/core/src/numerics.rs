//! Dense complex least-squares primitives.
//!
//! All solvers go through a thin SVD so that rank decisions and the
//! pseudo-inverse share one factorization. [`reference`] solves the same
//! problems through a QR factorization and serves only as a cross-check.

use nalgebra::linalg::SVD;
use num_complex::Complex;
use thiserror::Error;

use crate::scalar::{is_finite, CMatrix, CVector, Real};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum NumericsError {
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("rank deficient: numerical rank {rank} < required {required}")]
    RankDeficient { rank: usize, required: usize },
    #[error("matrix contains non-finite entries")]
    NonFinite,
}

/// Numerical rank and the condition number over the retained singular values.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RankReport {
    pub rank: usize,
    /// `None` when no singular value survives (zero matrix).
    pub condition: Option<f64>,
}

pub fn ensure_finite<T: Real>(m: &CMatrix<T>) -> Result<(), NumericsError> {
    if m.iter().all(is_finite) {
        Ok(())
    } else {
        Err(NumericsError::NonFinite)
    }
}

fn singular_values<T: Real>(a: &CMatrix<T>) -> Vec<f64> {
    if a.is_empty() {
        return Vec::new();
    }
    let svd = SVD::new(a.clone(), false, false);
    svd.singular_values.iter().map(|s| s.as_f64()).collect()
}

fn summarize(sv: &[f64], tol: f64) -> RankReport {
    let smax = sv.iter().cloned().fold(0.0, f64::max);
    if smax <= 0.0 {
        return RankReport {
            rank: 0,
            condition: None,
        };
    }
    let kept: Vec<f64> = sv.iter().cloned().filter(|&s| s > tol * smax).collect();
    let smin = kept.iter().cloned().fold(f64::INFINITY, f64::min);
    RankReport {
        rank: kept.len(),
        condition: Some(smax / smin),
    }
}

pub fn rank_report<T: Real>(a: &CMatrix<T>, tol: f64) -> RankReport {
    summarize(&singular_values(a), tol)
}

/// Pseudo-inverse of a full-rank matrix with its extreme singular values.
#[derive(Debug, Clone)]
pub struct Pinv<T: Real> {
    pub matrix: CMatrix<T>,
    pub sigma_max: f64,
    pub sigma_min: f64,
}

impl<T: Real> Pinv<T> {
    pub fn condition(&self) -> f64 {
        self.sigma_max / self.sigma_min
    }
}

/// Moore-Penrose pseudo-inverse of a matrix whose rank is `min(rows, cols)`.
pub fn pinv<T: Real>(a: &CMatrix<T>, tol: f64) -> Result<Pinv<T>, NumericsError> {
    ensure_finite(a)?;
    let required = a.nrows().min(a.ncols());
    let svd = SVD::new(a.clone(), true, true);
    let sv: Vec<f64> = svd.singular_values.iter().map(|s| s.as_f64()).collect();
    let report = summarize(&sv, tol);
    if report.rank < required || required == 0 {
        return Err(NumericsError::RankDeficient {
            rank: report.rank,
            required,
        });
    }
    let u = svd.u.expect("requested U");
    let v_t = svd.v_t.expect("requested V^H");
    // A^+ = V Σ^{-1} U^H
    let mut v_scaled = v_t.adjoint();
    for (j, s) in svd.singular_values.iter().enumerate() {
        let inv = Complex::from(T::one() / *s);
        for z in v_scaled.column_mut(j).iter_mut() {
            *z *= inv;
        }
    }
    let sigma_max = sv.iter().cloned().fold(0.0, f64::max);
    let sigma_min = sv.iter().cloned().fold(f64::INFINITY, f64::min);
    Ok(Pinv {
        matrix: v_scaled * u.adjoint(),
        sigma_max,
        sigma_min,
    })
}

/// Solves `min ‖Y − X·Θ‖_F` for `X` (N×M), given `Y` (N×I) and a training
/// matrix `Θ` (M×I) of full row rank.
pub fn ls_solve_right<T: Real>(
    y: &CMatrix<T>,
    theta: &CMatrix<T>,
    tol: f64,
) -> Result<CMatrix<T>, NumericsError> {
    ls_solve_right_cond(y, theta, tol).map(|(x, _)| x)
}

/// [`ls_solve_right`] that also returns the condition number of `Θ`.
pub fn ls_solve_right_cond<T: Real>(
    y: &CMatrix<T>,
    theta: &CMatrix<T>,
    tol: f64,
) -> Result<(CMatrix<T>, f64), NumericsError> {
    if y.ncols() != theta.ncols() {
        return Err(NumericsError::DimensionMismatch(format!(
            "Y has {} columns but Theta has {}",
            y.ncols(),
            theta.ncols()
        )));
    }
    ensure_finite(y)?;
    if theta.ncols() < theta.nrows() {
        let rank = rank_report(theta, tol).rank;
        return Err(NumericsError::RankDeficient {
            rank,
            required: theta.nrows(),
        });
    }
    let p = pinv(theta, tol)?;
    Ok((y * &p.matrix, p.condition()))
}

/// Solves `min ‖y − A·x‖` for `x` with `A` (P×Q) of full column rank.
pub fn ls_solve_left<T: Real>(
    a: &CMatrix<T>,
    y: &CVector<T>,
    tol: f64,
) -> Result<CVector<T>, NumericsError> {
    let rhs = CMatrix::from_column_slice(y.len(), 1, y.as_slice());
    let x = ls_solve_left_multi(a, &rhs, tol)?.0;
    Ok(x.column(0).into_owned())
}

/// Left LS solve for several right-hand sides at once (columns of `y`);
/// returns the solutions and the condition number of `A`.
pub fn ls_solve_left_multi<T: Real>(
    a: &CMatrix<T>,
    y: &CMatrix<T>,
    tol: f64,
) -> Result<(CMatrix<T>, f64), NumericsError> {
    if a.nrows() != y.nrows() {
        return Err(NumericsError::DimensionMismatch(format!(
            "A has {} rows but y has {}",
            a.nrows(),
            y.nrows()
        )));
    }
    ensure_finite(y)?;
    if a.nrows() < a.ncols() {
        let rank = rank_report(a, tol).rank;
        return Err(NumericsError::RankDeficient {
            rank,
            required: a.ncols(),
        });
    }
    let p = pinv(a, tol)?;
    Ok((&p.matrix * y, p.condition()))
}

/// `vᵀ ⊗ B` for a row vector `v`: block `j` (N×M2) equals `v_j·B`.
pub fn kron_row<T: Real>(v: &[Complex<T>], b: &CMatrix<T>) -> CMatrix<T> {
    let (n, m2) = b.shape();
    let mut out = CMatrix::zeros(n, v.len() * m2);
    for (j, vj) in v.iter().enumerate() {
        let mut block = out.columns_mut(j * m2, m2);
        block.copy_from(b);
        for z in block.iter_mut() {
            *z *= *vj;
        }
    }
    out
}

/// `B·diag(d)`: scales column `j` of `B` by `d_j`.
pub fn scale_columns<T: Real>(b: &CMatrix<T>, d: &[Complex<T>]) -> CMatrix<T> {
    assert_eq!(
        b.ncols(),
        d.len(),
        "diagonal length must match column count"
    );
    let mut out = b.clone();
    for (j, dj) in d.iter().enumerate() {
        for z in out.column_mut(j).iter_mut() {
            *z *= *dj;
        }
    }
    out
}

/// Least-squares solutions through a thin QR factorization. Independent of
/// the SVD route; used only for cross-checking.
pub mod reference {
    use super::*;

    /// `argmin ‖A·X − Y‖` for `A` of full column rank.
    pub fn solve_left<T: Real>(a: &CMatrix<T>, y: &CMatrix<T>) -> Option<CMatrix<T>> {
        if a.nrows() < a.ncols() || a.nrows() != y.nrows() {
            return None;
        }
        let qr = a.clone().qr();
        qr.r().solve_upper_triangular(&(qr.q().adjoint() * y))
    }

    /// `argmin ‖X·Θ − Y‖` for `Θ` of full row rank.
    pub fn solve_right<T: Real>(y: &CMatrix<T>, theta: &CMatrix<T>) -> Option<CMatrix<T>> {
        solve_left(&theta.adjoint(), &y.adjoint()).map(|xh| xh.adjoint())
    }
}
