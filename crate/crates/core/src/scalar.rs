//! Real scalar abstraction shared by the numerics, channel and estimator code.
//!
//! Everything below the evaluation layer is written against [`Real`], so the
//! same estimators run in `f32` or `f64`. Complex entries are
//! [`num_complex::Complex<T>`].

use std::fmt::{Debug, Display};

use nalgebra::{DMatrix, DVector, RealField};
use num_complex::Complex;
use num_traits::{FromPrimitive, ToPrimitive};
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

/// Floating point type usable by the simulator: `f32` or `f64`.
pub trait Real:
    RealField + Copy + FromPrimitive + ToPrimitive + Default + Debug + Display + Send + Sync + 'static
{
    /// Relative singular-value threshold used for rank decisions.
    const RANK_TOL: f64;

    fn of(x: f64) -> Self {
        Self::from_f64(x).expect("f64 is representable")
    }

    fn as_f64(self) -> f64 {
        self.to_f64().expect("finite real")
    }

    fn standard_normal<R: Rng + ?Sized>(rng: &mut R) -> Self;
}

impl Real for f64 {
    const RANK_TOL: f64 = 1e-12;

    fn standard_normal<R: Rng + ?Sized>(rng: &mut R) -> Self {
        StandardNormal.sample(rng)
    }
}

impl Real for f32 {
    const RANK_TOL: f64 = 1e-5;

    fn standard_normal<R: Rng + ?Sized>(rng: &mut R) -> Self {
        StandardNormal.sample(rng)
    }
}

pub type Cplx<T> = Complex<T>;
pub type CMatrix<T> = DMatrix<Complex<T>>;
pub type CVector<T> = DVector<Complex<T>>;

/// Circularly-symmetric complex Gaussian sample with `E|z|^2 = variance`.
pub fn complex_gaussian<T: Real, R: Rng + ?Sized>(rng: &mut R, variance: T) -> Complex<T> {
    let scale = (variance / T::of(2.0)).sqrt();
    Complex::new(
        T::standard_normal(rng) * scale,
        T::standard_normal(rng) * scale,
    )
}

/// `exp(-j 2π k / n)`, reduced modulo `n` before evaluation so large
/// exponents stay exact.
pub fn unit_root<T: Real>(k: usize, n: usize) -> Complex<T> {
    let r = (k % n) as f64;
    let phase = -2.0 * std::f64::consts::PI * r / n as f64;
    Complex::new(T::of(phase.cos()), T::of(phase.sin()))
}

/// `|z|`.
pub fn modulus<T: Real>(z: &Complex<T>) -> T {
    z.re.hypot(z.im)
}

pub(crate) fn is_finite<T: Real>(z: &Complex<T>) -> bool {
    z.re.as_f64().is_finite() && z.im.as_f64().is_finite()
}

/// Squared Frobenius norm.
pub fn frob2<T: Real>(m: &CMatrix<T>) -> T {
    m.iter().fold(T::zero(), |acc, z| acc + z.norm_sqr())
}

/// `‖a − b‖_F / ‖b‖_F`, or the absolute norm when `b` is zero.
pub fn rel_err<T: Real>(a: &CMatrix<T>, b: &CMatrix<T>) -> f64 {
    let diff = frob2(&(a - b)).as_f64().sqrt();
    let base = frob2(b).as_f64().sqrt();
    if base > 0.0 {
        diff / base
    } else {
        diff
    }
}

pub fn rel_err_vec<T: Real>(a: &CVector<T>, b: &CVector<T>) -> f64 {
    let diff = (a - b)
        .iter()
        .fold(0.0, |acc, z| acc + z.norm_sqr().as_f64());
    let base = b.iter().fold(0.0, |acc, z| acc + z.norm_sqr().as_f64());
    if base > 0.0 {
        (diff / base).sqrt()
    } else {
        diff.sqrt()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn unit_root_wraps() {
        let a: Complex<f64> = unit_root(1, 4);
        assert!((a - Complex::new(0.0, -1.0)).norm() < 1e-15);
        let b: Complex<f64> = unit_root(9, 4);
        assert_eq!(a, b);
    }

    #[test]
    fn gaussian_variance() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let n = 200_000;
        let var: f64 = (0..n)
            .map(|_| complex_gaussian::<f64, _>(&mut rng, 2.5).norm_sqr())
            .sum::<f64>()
            / n as f64;
        assert!((var / 2.5 - 1.0).abs() < 0.01, "{var}");
    }
}
