//! Anisotropic repulsive–attractive particle swarms on the periodic torus.
//!
//! The crate covers the whole pipeline: radial force coefficients with
//! compactly supported cutoffs ([`coeffs`]), the anisotropic force and its
//! Jacobian ([`field`]), time integration with cell lists ([`dynamics`]),
//! linear stability of straight-line steady states ([`linestab`]) and the
//! configuration / CSV layer behind the `anisoswarm` binary ([`cli_io`]).
//!
//! Numeric types are generic over [`Scalar`] (`f32` or `f64`); the aliases at
//! the crate root fix `f64`, which is what the CLI uses.

pub mod cli_io;
pub mod coeffs;
pub mod dynamics;
pub mod field;
pub mod linestab;
pub mod quadrature;
pub mod scalar;
pub mod vec2;

use thiserror::Error;

pub use coeffs::{CoeffError, CutoffMode, Family, KcParams, Role, Violation};
pub use scalar::Scalar;
pub use vec2::{Mat2, Vec2};

/// Errors raised by the numeric modules.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error(transparent)]
    Coeff(#[from] CoeffError),
    #[error("invalid input: {0}")]
    Invalid(String),
    #[error("zero displacement: self-interaction must be excluded by the caller")]
    ZeroDisplacement,
    #[error("particles {0} and {1} coincide")]
    Coincident(usize, usize),
    #[error("step size underflow at t = {t:e}: h = {h:e}")]
    StepUnderflow { t: f64, h: f64 },
    #[error("inadmissible line angle {theta}: {reason}")]
    InadmissibleAngle { theta: f64, reason: String },
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

pub type Point = Vec2<f64>;
pub type CoefficientSpec = coeffs::CoefficientSpec<f64>;
pub type TensorField = field::TensorField<f64>;
pub type ForcePair = field::ForcePair<f64>;
pub type ParticleState = dynamics::ParticleState<f64>;
pub type SimConfig = dynamics::SimConfig<f64>;
pub type Integrator = dynamics::Integrator<f64>;
pub type LineAnsatz = linestab::LineAnsatz<f64>;
pub type StabilitySpectrum = linestab::StabilitySpectrum<f64>;
pub type QuadratureSpec = quadrature::QuadratureSpec;
