//! Cascaded channel estimation for uplink multi-user MIMO assisted by two
//! distributed intelligent reflecting surfaces.
//!
//! The numerical core is generic over the real scalar ([`f64`] or [`f32`]);
//! the aliases below fix it to `f64`.

pub mod channel;
pub mod cli;
pub mod config;
pub mod estimator;
pub mod evaluation;
pub mod numerics;
pub mod scalar;
pub mod seeding;
pub mod training;

pub use config::{NmseMode, SystemConfig};
pub use scalar::Real;

pub type Complex64 = num_complex::Complex<f64>;
pub type Matrix = scalar::CMatrix<f64>;
pub type Vector = scalar::CVector<f64>;
pub type Realization = channel::ChannelRealization<f64>;
pub type Csi = channel::CascadedCsi<f64>;
pub type Plan = training::TrainingPlan<f64>;
pub type Estimate = estimator::EstimationResult<f64>;
