//! Numerical laboratory for Lefschetz fibrations on cotangent bundles built
//! from a Morse function and an adapted gradient.
//!
//! The core is generic over the scalar type through [`scalar::Real`]; the
//! aliases at the crate root fix `f64` for everyday use.

pub mod complexification;
pub mod fibration;
pub mod geometry;
pub mod linalg;
pub mod local_model;
pub mod ode;
pub mod rearrangement;
pub mod sampling;
pub mod scalar;
pub mod topology;

pub use geometry::{scenario, ChartId, MorseSystem};

pub type PhasePoint = geometry::PhasePoint<f64>;
pub type PhaseVector = geometry::PhaseVector<f64>;
pub type Complex = num_complex::Complex<f64>;
pub type Dual = scalar::Dual<f64>;
pub type QuadricPoint = local_model::QuadricPoint<f64>;
pub type PlaneFrame = local_model::PlaneFrame<f64>;
pub type AnnulusCoord = local_model::AnnulusCoord<f64>;
