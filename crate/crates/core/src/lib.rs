//! Norm-optimal iterative learning control (NOILC) for an antagonistic
//! pneumatic arm, together with the multi-rate closed-loop simulator used
//! to exercise it.
//!
//! The crate is organized around a nominal second-order LTI arm model
//! ([`lti`]), a higher-fidelity nonlinear pneumatic truth plant
//! ([`pneumatics`]), an outer PID loop ([`feedback`]), the lifted-domain
//! learning law ([`noilc`]), trapezoidal reference generation
//! ([`trajectory`]) and the experiment engine ([`harness`]). The math
//! modules are generic over the scalar type; the harness and CLI run on
//! `f64`.

pub mod config;
pub mod error;
pub mod feedback;
pub mod harness;
pub mod lti;
pub mod noilc;
pub mod pneumatics;
pub mod scalar;
pub mod trajectory;

pub use error::{Error, Result};
pub use scalar::Real;

/// f64 instantiations used by the harness and the CLI.
pub type SecondOrderModel64 = lti::SecondOrderModel<f64>;
pub type NormalizationConstants64 = lti::NormalizationConstants<f64>;
pub type DiscretePlant64 = lti::DiscretePlant<f64>;
pub type LiftedSystem64 = lti::LiftedSystem<f64>;
