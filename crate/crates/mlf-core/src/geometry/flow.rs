use serde::{Deserialize, Serialize};

use super::fields::{contact_lift, hamiltonian_field, GFn, PhaseScalar, RhoFn};
use super::{ChartId, GeometryError, MorseSystem, PhasePoint, PhaseVector};
use crate::ode::{integrate, OdeConfig, OdeSystem, Terminal};
use crate::scalar::Real;

/// Which vector field to integrate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum FlowField {
    /// `ν` on the base, with `p` carried along unchanged.
    Base,
    /// `ν̃`; conserves `g`.
    Hamiltonian,
    /// `ν̄`; conserves `ρ`.
    Contact,
}

/// Integrated trajectory with the drift of the conserved quantity.
#[derive(Debug, Clone)]
pub struct FlowResult<T> {
    pub samples: Vec<(T, PhasePoint<T>)>,
    pub terminal: Terminal,
    /// Max deviation of `g` (Hamiltonian) or `ρ` (contact) from its start
    /// value; zero for the base flow.
    pub drift: T,
    pub accepted: usize,
    pub rejected: usize,
}

impl<T: Real> FlowResult<T> {
    pub fn last(&self) -> &PhasePoint<T> {
        &self.samples.last().expect("flow has at least one sample").1
    }
}

struct PhaseOde<'a> {
    ms: &'a MorseSystem,
    field: FlowField,
    chart: ChartId,
}

impl<T: Real> OdeSystem<T> for PhaseOde<'_> {
    fn rhs(&self, _t: T, y: &[T], dy: &mut [T]) -> Result<(), String> {
        let x = PhasePoint::from_state(y, self.chart);
        let v = match self.field {
            FlowField::Base => PhaseVector { dq: self.ms.nu(x.chart, &x.q), dp: vec![T::zero(); x.q.len()] },
            FlowField::Hamiltonian => hamiltonian_field(&GFn, self.ms, &x),
            FlowField::Contact => contact_lift(&x, self.ms).map_err(|e| e.to_string())?,
        };
        if v.dq.iter().chain(&v.dp).any(|a| !a.is_finite()) {
            return Err("non-finite vector field".into());
        }
        dy.copy_from_slice(&v.to_state());
        Ok(())
    }

    fn after_step(&mut self, _t: T, y: &mut [T]) {
        let mut x = PhasePoint::from_state(y, self.chart);
        if self.ms.manifold.normalize(&mut x).is_ok() {
            self.chart = x.chart;
            y.copy_from_slice(&x.to_state());
        }
    }

    fn tag(&self) -> u8 {
        self.chart.0
    }
}

/// Integrates `field` from `x0` for time `t_end` (negative for backward).
pub fn flow<T: Real>(
    ms: &MorseSystem,
    field: FlowField,
    x0: &PhasePoint<T>,
    t_end: T,
    cfg: &OdeConfig,
) -> Result<FlowResult<T>, GeometryError> {
    cfg.validate().map_err(GeometryError::Domain)?;
    let mut x = x0.clone();
    ms.manifold.normalize(&mut x)?;
    if field == FlowField::Contact && x.p.iter().all(|&v| v == T::zero()) {
        return Err(GeometryError::ZeroCovector);
    }
    let mut sys = PhaseOde { ms, field, chart: x.chart };
    let tr = integrate(&mut sys, T::zero(), &x.to_state(), t_end, cfg, true);
    let samples: Vec<(T, PhasePoint<T>)> = tr
        .times
        .iter()
        .zip(&tr.states)
        .zip(&tr.tags)
        .map(|((&t, y), &c)| (t, PhasePoint::from_state(y, ChartId(c))))
        .collect();
    let invariant = |p: &PhasePoint<T>| match field {
        FlowField::Base => T::zero(),
        FlowField::Hamiltonian => GFn.eval(ms, p.chart, &p.q, &p.p),
        FlowField::Contact => RhoFn.eval(ms, p.chart, &p.q, &p.p),
    };
    let i0 = invariant(&x);
    let drift = samples
        .iter()
        .map(|(_, p)| (invariant(p) - i0).abs())
        .fold(T::zero(), |a, b| a.max(b));
    Ok(FlowResult { samples, terminal: tr.terminal, drift, accepted: tr.accepted, rejected: tr.rejected })
}
