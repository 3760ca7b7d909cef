//! Manifold backends, Morse data, the Hamiltonian and contact lifts of the
//! adapted gradient, and flows on the cotangent bundle.
//!
//! Phase space is `T*M` with coordinates `(q, p)`, canonical form
//! `λ = p dq` and symplectic form `ω = dp ∧ dq`. Hamiltonian fields satisfy
//! `ι_X ω = −dH`, i.e. `X_H = (∂_p H, −∂_q H)`.

mod fields;
mod flow;
mod manifold;
mod morse;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::scalar::Real;

pub use fields::{
    contact_lift, eval_g, eval_rho, hamiltonian_field, hamiltonian_lift, omega, phase_directional,
    phase_gradient, pairing_lambda, sign_convention_self_test, upsilon, GFn, PhaseScalar, RhoFn,
};
pub use flow::{flow, FlowField, FlowResult};
pub use manifold::{ManifoldKind, ManifoldModel, SPHERE_SWITCH_RADIUS};
pub use morse::{
    check_adapted_gradient, scenario, AdaptedGradientReport, CriticalPoint, MorseSystem, Potential,
    SCENARIO_NAMES,
};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GeometryError {
    #[error("point outside the chart domain: {0}")]
    Domain(String),
    #[error("covector is zero; direction undefined")]
    ZeroCovector,
    #[error("unknown scenario `{0}`")]
    UnknownScenario(String),
    #[error("sign convention self-test failed: {0}")]
    SelfTest(String),
    #[error("dimension mismatch: expected {expected}, got {got}")]
    Dimension { expected: usize, got: usize },
}

/// Discrete chart label carried by phase points.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Default, Serialize, Deserialize)]
pub struct ChartId(pub u8);

/// A covector `p` at a base point `q`, in the chart `chart`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhasePoint<T> {
    pub q: Vec<T>,
    pub p: Vec<T>,
    pub chart: ChartId,
}

impl<T: Real> PhasePoint<T> {
    pub fn new(q: Vec<T>, p: Vec<T>) -> Self {
        Self { q, p, chart: ChartId(0) }
    }

    pub fn in_chart(q: Vec<T>, p: Vec<T>, chart: ChartId) -> Self {
        Self { q, p, chart }
    }

    pub fn dim(&self) -> usize {
        self.q.len()
    }

    /// Flattened `[q; p]` state.
    pub fn to_state(&self) -> Vec<T> {
        let mut v = self.q.clone();
        v.extend_from_slice(&self.p);
        v
    }

    pub fn from_state(y: &[T], chart: ChartId) -> Self {
        let n = y.len() / 2;
        Self { q: y[..n].to_vec(), p: y[n..].to_vec(), chart }
    }

    /// Same base point, covector scaled by `t`.
    pub fn scaled(&self, t: T) -> Self {
        Self {
            q: self.q.clone(),
            p: self.p.iter().map(|&x| x * t).collect(),
            chart: self.chart,
        }
    }
}

/// A tangent vector to phase space, split into base and fiber parts.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhaseVector<T> {
    pub dq: Vec<T>,
    pub dp: Vec<T>,
}

impl<T: Real> PhaseVector<T> {
    pub fn zeros(n: usize) -> Self {
        Self { dq: vec![T::zero(); n], dp: vec![T::zero(); n] }
    }

    pub fn to_state(&self) -> Vec<T> {
        let mut v = self.dq.clone();
        v.extend_from_slice(&self.dp);
        v
    }

    pub fn from_state(y: &[T]) -> Self {
        let n = y.len() / 2;
        Self { dq: y[..n].to_vec(), dp: y[n..].to_vec() }
    }

    pub fn scale(&self, s: T) -> Self {
        Self {
            dq: self.dq.iter().map(|&x| x * s).collect(),
            dp: self.dp.iter().map(|&x| x * s).collect(),
        }
    }

    pub fn add(&self, o: &Self) -> Self {
        Self {
            dq: self.dq.iter().zip(&o.dq).map(|(&a, &b)| a + b).collect(),
            dp: self.dp.iter().zip(&o.dp).map(|(&a, &b)| a + b).collect(),
        }
    }

    pub fn norm(&self) -> T {
        self.dq.iter().chain(&self.dp).map(|&x| x * x).sum::<T>().sqrt()
    }
}
