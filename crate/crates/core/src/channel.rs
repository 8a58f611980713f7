//! Physical channel synthesis and the cascaded CSI derived from it.
//!
//! Links (uplink direction):
//!
//! | symbol     | link              | shape   |
//! |------------|-------------------|---------|
//! | `g1`       | IRS 1 -> BS       | N×M1    |
//! | `g2`       | IRS 2 -> BS       | N×M2    |
//! | `d`        | IRS 1 -> IRS 2    | M2×M1   |
//! | `u[k]`     | user k -> IRS 1   | M1      |
//! | `u_tilde[k]` | user k -> IRS 2 | M2      |
//!
//! Entries are i.i.d. circularly-symmetric Gaussian with variance equal to the
//! link's path gain. Direct user -> BS links are blocked and not modeled.

use nalgebra::DVector;
use num_complex::Complex;
use rand::Rng;
use thiserror::Error;

use crate::config::SystemConfig;
use crate::numerics::scale_columns;
use crate::scalar::{complex_gaussian, is_finite, modulus, CMatrix, CVector, Real};
use crate::seeding::{stream_rng, Stream};

/// Redraws allowed before a realization is declared degenerate.
pub const MAX_REDRAWS: usize = 16;
/// Reference-user entries must exceed this fraction of the link RMS amplitude.
pub const DEGENERACY_FLOOR: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ChannelError {
    #[error("non-positive link distance {0} m")]
    NonPositiveDistance(f64),
    #[error("degenerate geometry: {0} coincide")]
    DegenerateGeometry(&'static str),
    #[error("reference user channel below degeneracy floor after {0} draws")]
    DegenerateRealization(usize),
    #[error("reference user entry {index} of {link} below degeneracy floor")]
    DegenerateReference { link: &'static str, index: usize },
    #[error("reflection amplitude {0} outside [0, 1]")]
    AmplitudeOutOfRange(f64),
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("user index {0} out of range")]
    UserOutOfRange(usize),
}

/// `gamma0 / d^alpha`.
pub fn path_loss(distance: f64, alpha: f64, gamma0: f64) -> Result<f64, ChannelError> {
    if distance.is_nan() || distance <= 0.0 {
        return Err(ChannelError::NonPositiveDistance(distance));
    }
    Ok(gamma0 / distance.powf(alpha))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LinkDistances {
    pub user_irs1: f64,
    pub irs2_bs: f64,
    pub irs1_irs2: f64,
    pub irs1_bs: f64,
    pub user_irs2: f64,
}

fn dist(a: [f64; 3], b: [f64; 3]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y).powi(2))
        .sum::<f64>()
        .sqrt()
}

pub fn link_distances(cfg: &SystemConfig) -> Result<LinkDistances, ChannelError> {
    let p = &cfg.positions;
    let d = LinkDistances {
        user_irs1: dist(p.users, p.irs1),
        irs2_bs: dist(p.irs2, p.bs),
        irs1_irs2: dist(p.irs1, p.irs2),
        irs1_bs: dist(p.irs1, p.bs),
        user_irs2: dist(p.users, p.irs2),
    };
    let named = [
        ("user cluster and IRS 1", d.user_irs1),
        ("IRS 2 and BS", d.irs2_bs),
        ("IRS 1 and IRS 2", d.irs1_irs2),
        ("IRS 1 and BS", d.irs1_bs),
        ("user cluster and IRS 2", d.user_irs2),
    ];
    for (name, v) in named {
        if v <= 0.0 {
            return Err(ChannelError::DegenerateGeometry(name));
        }
    }
    Ok(d)
}

/// Per-entry variance (linear path gain) of each link.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LinkGains {
    pub g1: f64,
    pub g2: f64,
    pub d: f64,
    pub u: f64,
    pub u_tilde: f64,
}

impl LinkGains {
    /// Near links (user cluster <-> IRS 1, IRS 2 <-> BS) use `alpha_near`;
    /// the rest use `alpha_far`.
    pub fn from_config(cfg: &SystemConfig) -> Result<Self, ChannelError> {
        let d = link_distances(cfg)?;
        let pl = |dist, alpha| path_loss(dist, alpha, cfg.gamma0);
        Ok(Self {
            g1: pl(d.irs1_bs, cfg.alpha_far)?,
            g2: pl(d.irs2_bs, cfg.alpha_near)?,
            d: pl(d.irs1_irs2, cfg.alpha_far)?,
            u: pl(d.user_irs1, cfg.alpha_near)?,
            u_tilde: pl(d.user_irs2, cfg.alpha_far)?,
        })
    }
}

/// Array dimensions of a scenario.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Dims {
    pub n: usize,
    pub m1: usize,
    pub m2: usize,
    pub k: usize,
}

impl From<&SystemConfig> for Dims {
    fn from(cfg: &SystemConfig) -> Self {
        Self {
            n: cfg.bs_antennas,
            m1: cfg.irs1_subsurfaces,
            m2: cfg.irs2_subsurfaces,
            k: cfg.users,
        }
    }
}

/// One draw of every physical link.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelRealization<T: Real> {
    pub g1: CMatrix<T>,
    pub g2: CMatrix<T>,
    pub d: CMatrix<T>,
    pub u: Vec<CVector<T>>,
    pub u_tilde: Vec<CVector<T>>,
}

impl<T: Real> ChannelRealization<T> {
    pub fn dims(&self) -> Dims {
        Dims {
            n: self.g1.nrows(),
            m1: self.g1.ncols(),
            m2: self.g2.ncols(),
            k: self.u.len(),
        }
    }

    fn reference_ok(&self, gains: &LinkGains) -> bool {
        let floor_u = T::of(DEGENERACY_FLOOR * gains.u.sqrt());
        let floor_ut = T::of(DEGENERACY_FLOOR * gains.u_tilde.sqrt());
        self.u[0].iter().all(|z| modulus(z) >= floor_u)
            && self.u_tilde[0].iter().all(|z| modulus(z) >= floor_ut)
    }
}

fn gaussian_matrix<T: Real, R: Rng + ?Sized>(
    rng: &mut R,
    rows: usize,
    cols: usize,
    var: f64,
) -> CMatrix<T> {
    let v = T::of(var);
    CMatrix::from_fn(rows, cols, |_, _| complex_gaussian(rng, v))
}

fn gaussian_vector<T: Real, R: Rng + ?Sized>(rng: &mut R, len: usize, var: f64) -> CVector<T> {
    let v = T::of(var);
    DVector::from_fn(len, |_, _| complex_gaussian(rng, v))
}

/// Draws a realization from an explicit generator, redrawing while the
/// reference user's links fall below the degeneracy floor.
pub fn draw_with_rng<T: Real, R: Rng + ?Sized>(
    dims: Dims,
    gains: &LinkGains,
    rng: &mut R,
) -> Result<ChannelRealization<T>, ChannelError> {
    for _ in 0..MAX_REDRAWS {
        let real = ChannelRealization {
            g1: gaussian_matrix(rng, dims.n, dims.m1, gains.g1),
            g2: gaussian_matrix(rng, dims.n, dims.m2, gains.g2),
            d: gaussian_matrix(rng, dims.m2, dims.m1, gains.d),
            u: (0..dims.k)
                .map(|_| gaussian_vector(rng, dims.m1, gains.u))
                .collect(),
            u_tilde: (0..dims.k)
                .map(|_| gaussian_vector(rng, dims.m2, gains.u_tilde))
                .collect(),
        };
        if real.reference_ok(gains) {
            return Ok(real);
        }
    }
    Err(ChannelError::DegenerateRealization(MAX_REDRAWS))
}

/// Deterministic draw keyed by `(cfg.seed, trial_seed)`.
pub fn draw_realization<T: Real>(
    cfg: &SystemConfig,
    trial_seed: u64,
) -> Result<ChannelRealization<T>, ChannelError> {
    let gains = LinkGains::from_config(cfg)?;
    let mut rng = stream_rng(cfg.seed, Stream::Channel, trial_seed, 0);
    draw_with_rng(Dims::from(cfg), &gains, &mut rng)
}

/// Ground-truth cascaded CSI of every user.
#[derive(Debug, Clone, PartialEq)]
pub struct CascadedCsi<T: Real> {
    /// `R_k = G1·diag(u_k)`, N×M1.
    pub r: Vec<CMatrix<T>>,
    /// `R̃_k = G2·diag(ũ_k)`, N×M2.
    pub r_tilde: Vec<CMatrix<T>>,
    /// `Q_{k,m} = G2·diag(d_m·u_{k,m})`, N×M2 for each IRS-1 subsurface m.
    pub q: Vec<Vec<CMatrix<T>>>,
    /// Double-reflection scaling vectors of the reference user, `a_m = diag(ũ_1)⁻¹ d_m u_{1,m}`.
    pub a: Vec<CVector<T>>,
    /// `b_k = diag(u_1)⁻¹ u_k`.
    pub b: Vec<CVector<T>>,
    /// `b̃_k = diag(ũ_1)⁻¹ ũ_k`.
    pub b_tilde: Vec<CVector<T>>,
}

impl<T: Real> CascadedCsi<T> {
    pub fn users(&self) -> usize {
        self.r.len()
    }

    pub fn dims(&self) -> Dims {
        Dims {
            n: self.r[0].nrows(),
            m1: self.r[0].ncols(),
            m2: self.r_tilde[0].ncols(),
            k: self.r.len(),
        }
    }
}

fn ratio<T: Real>(num: &CVector<T>, den: &CVector<T>) -> CVector<T> {
    num.zip_map(den, |a, b| a / b)
}

pub fn cascaded_csi<T: Real>(real: &ChannelRealization<T>) -> Result<CascadedCsi<T>, ChannelError> {
    let dims = real.dims();
    let u1 = &real.u[0];
    let ut1 = &real.u_tilde[0];
    let zero = T::zero();
    // NaN moduli count as degenerate.
    #[allow(clippy::neg_cmp_op_on_partial_ord)]
    let degenerate = |z: &Complex<T>| !(modulus(z) > zero);
    if let Some(index) = u1.iter().position(degenerate) {
        return Err(ChannelError::DegenerateReference {
            link: "user->IRS 1",
            index,
        });
    }
    if let Some(index) = ut1.iter().position(degenerate) {
        return Err(ChannelError::DegenerateReference {
            link: "user->IRS 2",
            index,
        });
    }

    let r = real
        .u
        .iter()
        .map(|u| scale_columns(&real.g1, u.as_slice()))
        .collect();
    let r_tilde = real
        .u_tilde
        .iter()
        .map(|u| scale_columns(&real.g2, u.as_slice()))
        .collect();
    let q = real
        .u
        .iter()
        .map(|u| {
            (0..dims.m1)
                .map(|m| {
                    let d_tilde: Vec<Complex<T>> =
                        real.d.column(m).iter().map(|z| *z * u[m]).collect();
                    scale_columns(&real.g2, &d_tilde)
                })
                .collect()
        })
        .collect();
    let a = (0..dims.m1)
        .map(|m| {
            let d_tilde = real.d.column(m).map(|z| z * u1[m]);
            ratio(&d_tilde, ut1)
        })
        .collect();
    let b = real.u.iter().map(|u| ratio(u, u1)).collect();
    let b_tilde = real.u_tilde.iter().map(|u| ratio(u, ut1)).collect();
    Ok(CascadedCsi {
        r,
        r_tilde,
        q,
        a,
        b,
        b_tilde,
    })
}

fn check_amplitudes<T: Real>(theta: &[Complex<T>]) -> Result<(), ChannelError> {
    for z in theta {
        let amp = modulus(z).as_f64();
        if !is_finite(z) || amp > 1.0 + 1e-9 {
            return Err(ChannelError::AmplitudeOutOfRange(amp));
        }
    }
    Ok(())
}

fn check_reflections<T: Real>(
    dims: Dims,
    theta1: &[Complex<T>],
    theta2: &[Complex<T>],
    k: usize,
) -> Result<(), ChannelError> {
    if theta1.len() != dims.m1 || theta2.len() != dims.m2 {
        return Err(ChannelError::DimensionMismatch(format!(
            "reflection vectors of length {}/{} for M1={} M2={}",
            theta1.len(),
            theta2.len(),
            dims.m1,
            dims.m2
        )));
    }
    if k >= dims.k {
        return Err(ChannelError::UserOutOfRange(k));
    }
    check_amplitudes(theta1)?;
    check_amplitudes(theta2)
}

fn cvec<T: Real>(v: &[Complex<T>]) -> CVector<T> {
    DVector::from_column_slice(v)
}

/// Effective channel of user `k` (0-based) from the physical links:
/// `G2·Φ2·D·Φ1·u_k + G2·Φ2·ũ_k + G1·Φ1·u_k`.
pub fn effective_channel<T: Real>(
    real: &ChannelRealization<T>,
    theta1: &[Complex<T>],
    theta2: &[Complex<T>],
    k: usize,
) -> Result<CVector<T>, ChannelError> {
    check_reflections(real.dims(), theta1, theta2, k)?;
    let t1 = cvec(theta1);
    let t2 = cvec(theta2);
    let phi1_u = real.u[k].component_mul(&t1);
    let at_irs2 = (&real.d * &phi1_u + &real.u_tilde[k]).component_mul(&t2);
    Ok(&real.g2 * at_irs2 + &real.g1 * phi1_u)
}

/// Equivalent expressions of the effective channel in terms of cascaded CSI.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Formulation {
    /// `Σ_m Q_{k,m}·θ2·θ_{1,m} + R̃_k·θ2 + R_k·θ1`.
    Cascaded,
    /// Reference user only: `Σ_m R̃·diag(a_m)·θ2·θ_{1,m} + R̃·θ2 + R·θ1`.
    ReferenceScaled,
    /// Any user via the reference user's CSI:
    /// `Σ_m Q_{1,m}·θ2·θ_{1,m}·b_{k,m} + R̃_1·diag(θ2)·b̃_k + R_1·diag(θ1)·b_k`.
    UserScaled,
}

pub fn effective_channel_cascaded<T: Real>(
    csi: &CascadedCsi<T>,
    theta1: &[Complex<T>],
    theta2: &[Complex<T>],
    k: usize,
    form: Formulation,
) -> Result<CVector<T>, ChannelError> {
    check_reflections(csi.dims(), theta1, theta2, k)?;
    let t1 = cvec(theta1);
    let t2 = cvec(theta2);
    let n = csi.dims().n;
    let mut h = CVector::zeros(n);
    match form {
        Formulation::Cascaded => {
            for (m, q) in csi.q[k].iter().enumerate() {
                h += q * &t2 * theta1[m];
            }
            h += &csi.r_tilde[k] * &t2 + &csi.r[k] * &t1;
        }
        Formulation::ReferenceScaled => {
            if k != 0 {
                return Err(ChannelError::UserOutOfRange(k));
            }
            for (m, a) in csi.a.iter().enumerate() {
                h += &csi.r_tilde[0] * a.component_mul(&t2) * theta1[m];
            }
            h += &csi.r_tilde[0] * &t2 + &csi.r[0] * &t1;
        }
        Formulation::UserScaled => {
            for (m, q) in csi.q[0].iter().enumerate() {
                h += q * &t2 * (theta1[m] * csi.b[k][m]);
            }
            h += &csi.r_tilde[0] * t2.component_mul(&csi.b_tilde[k])
                + &csi.r[0] * t1.component_mul(&csi.b[k]);
        }
    }
    Ok(h)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scalar::{frob2, rel_err, rel_err_vec};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn small_cfg() -> SystemConfig {
        SystemConfig {
            bs_antennas: 4,
            irs1_subsurfaces: 3,
            irs2_subsurfaces: 5,
            users: 3,
            ..Default::default()
        }
    }

    #[test]
    fn path_loss_values() {
        assert!((path_loss(1.0, 3.0, 1e-3).unwrap() - 1e-3).abs() < 1e-18);
        // 40-digit evaluations of gamma0 / d^alpha
        let v = path_loss(1.5, 2.2, 1e-3).unwrap();
        assert!((v / 4.098_257_384_363_234_5e-4 - 1.0).abs() < 1e-13);
        let v = path_loss(49.0, 3.0, 1e-3).unwrap();
        assert!((v / 8.499_859_752_314_087e-9 - 1.0).abs() < 1e-13);
        assert_eq!(
            path_loss(0.0, 2.0, 1e-3),
            Err(ChannelError::NonPositiveDistance(0.0))
        );
    }

    #[test]
    fn reference_geometry_distances() {
        let d = link_distances(&SystemConfig::default()).unwrap();
        assert!((d.user_irs1 - 1.5).abs() < 1e-12);
        assert!((d.irs2_bs - 1.5).abs() < 1e-12);
        assert!((d.irs1_irs2 - 49.0).abs() < 1e-12);
        assert!((d.irs1_bs - 49.520_197_899_443_01).abs() < 1e-12);
        assert!((d.user_irs2 - 49.520_197_899_443_01).abs() < 1e-12);
    }

    #[test]
    fn colocated_points_rejected() {
        let mut cfg = SystemConfig::default();
        cfg.positions.irs1 = cfg.positions.users;
        assert!(matches!(
            link_distances(&cfg),
            Err(ChannelError::DegenerateGeometry(_))
        ));
    }

    #[test]
    fn draws_are_deterministic() {
        let cfg = small_cfg();
        let a: ChannelRealization<f64> = draw_realization(&cfg, 11).unwrap();
        let b: ChannelRealization<f64> = draw_realization(&cfg, 11).unwrap();
        let c: ChannelRealization<f64> = draw_realization(&cfg, 12).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, c);
        assert_eq!(
            a.dims(),
            Dims {
                n: 4,
                m1: 3,
                m2: 5,
                k: 3
            }
        );
    }

    #[test]
    fn g2_variance_matches_path_gain() {
        // Monte Carlo moment check over 1e5 draws of a single G2 entry
        let cfg = SystemConfig {
            bs_antennas: 1,
            irs1_subsurfaces: 1,
            irs2_subsurfaces: 1,
            users: 1,
            ..Default::default()
        };
        let gains = LinkGains::from_config(&cfg).unwrap();
        let expected = path_loss(1.5, 2.2, 1e-3).unwrap();
        assert_eq!(gains.g2, expected);
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        let n = 100_000;
        let mut acc = 0.0;
        for _ in 0..n {
            let r: ChannelRealization<f64> =
                draw_with_rng(Dims::from(&cfg), &gains, &mut rng).unwrap();
            acc += r.g2[(0, 0)].norm_sqr();
        }
        let var = acc / n as f64;
        assert!((var / expected - 1.0).abs() < 0.02, "{var} vs {expected}");
    }

    #[test]
    fn degenerate_reference_is_redrawn_then_rejected() {
        let dims = Dims {
            n: 1,
            m1: 1,
            m2: 1,
            k: 1,
        };
        let gains = LinkGains {
            g1: 1.0,
            g2: 1.0,
            d: 1.0,
            u: 1.0,
            u_tilde: 1.0,
        };
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        assert!(draw_with_rng::<f64, _>(dims, &gains, &mut rng).is_ok());

        let mut real: ChannelRealization<f64> = draw_with_rng(dims, &gains, &mut rng).unwrap();
        real.u[0][0] = Complex::new(0.0, 0.0);
        assert!(matches!(
            cascaded_csi(&real),
            Err(ChannelError::DegenerateReference { .. })
        ));
    }

    #[test]
    fn cascaded_identities() {
        let real: ChannelRealization<f64> = draw_realization(&small_cfg(), 5).unwrap();
        let csi = cascaded_csi(&real).unwrap();
        for m in 0..3 {
            let rebuilt = scale_columns(&csi.r_tilde[0], csi.a[m].as_slice());
            let q = &csi.q[0][m];
            assert!(frob2(&(&rebuilt - q)).sqrt() <= 1e-14 * frob2(q).sqrt());
        }
        for k in 0..3 {
            assert!(rel_err(&scale_columns(&csi.r[0], csi.b[k].as_slice()), &csi.r[k]) < 1e-14);
            assert!(
                rel_err(
                    &scale_columns(&csi.r_tilde[0], csi.b_tilde[k].as_slice()),
                    &csi.r_tilde[k]
                ) < 1e-14
            );
            for m in 0..3 {
                assert!(rel_err(&csi.q[0][m].map(|z| z * csi.b[k][m]), &csi.q[k][m]) < 1e-14);
            }
        }
        assert!(csi.b[0].iter().all(|z| *z == Complex::new(1.0, 0.0)));
        assert!(csi.b_tilde[0].iter().all(|z| *z == Complex::new(1.0, 0.0)));
    }

    #[test]
    fn unit_user_channel_gives_g1() {
        let mut real: ChannelRealization<f64> = draw_realization(&small_cfg(), 6).unwrap();
        real.u[1] = CVector::from_element(3, Complex::new(1.0, 0.0));
        let csi = cascaded_csi(&real).unwrap();
        assert_eq!(csi.r[1], real.g1);
    }

    #[test]
    fn phase_configurations_isolate_links() {
        let real: ChannelRealization<f64> = draw_realization(&small_cfg(), 7).unwrap();
        let one = Complex::new(1.0, 0.0);
        let zero = Complex::new(0.0, 0.0);
        let t1 = vec![one, zero, Complex::new(0.0, 1.0)];
        let t2 = vec![one, one, zero, one, Complex::new(0.6, 0.8)];

        let h = effective_channel(&real, &[zero; 3], &t2, 1).unwrap();
        let expect = &real.g2 * real.u_tilde[1].component_mul(&cvec(&t2));
        assert!(rel_err_vec(&h, &expect) < 1e-14);

        let h = effective_channel(&real, &t1, &[zero; 5], 2).unwrap();
        let expect = &real.g1 * real.u[2].component_mul(&cvec(&t1));
        assert!(rel_err_vec(&h, &expect) < 1e-14);

        let csi = cascaded_csi(&real).unwrap();
        let h = effective_channel_cascaded(&csi, &[zero; 3], &[zero; 5], 0, Formulation::Cascaded)
            .unwrap();
        assert!(h.iter().all(|z| *z == zero));
    }

    #[test]
    fn reference_user_forms_agree_exactly() {
        let real: ChannelRealization<f64> = draw_realization(&small_cfg(), 8).unwrap();
        let csi = cascaded_csi(&real).unwrap();
        let t1 = vec![Complex::new(0.0, 1.0); 3];
        let t2 = vec![Complex::new(-1.0, 0.0); 5];
        let h2 = effective_channel_cascaded(&csi, &t1, &t2, 0, Formulation::Cascaded).unwrap();
        let h20 = effective_channel_cascaded(&csi, &t1, &t2, 0, Formulation::UserScaled).unwrap();
        assert!(rel_err_vec(&h20, &h2) <= 1e-15);
    }

    #[test]
    fn rejects_bad_reflections() {
        let real: ChannelRealization<f64> = draw_realization(&small_cfg(), 9).unwrap();
        let t1 = vec![Complex::new(1.5, 0.0); 3];
        let t2 = vec![Complex::new(1.0, 0.0); 5];
        assert!(matches!(
            effective_channel(&real, &t1, &t2, 0),
            Err(ChannelError::AmplitudeOutOfRange(_))
        ));
        assert!(matches!(
            effective_channel(&real, &t2, &t2, 0),
            Err(ChannelError::DimensionMismatch(_))
        ));
        assert!(matches!(
            effective_channel(&real, &t2[..3], &t2, 5),
            Err(ChannelError::UserOutOfRange(5))
        ));
    }
}
