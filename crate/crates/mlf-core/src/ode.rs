//! Adaptive Dormand–Prince 5(4) integrator with a post-step hook used for
//! chart switching and coordinate reduction.

use serde::{Deserialize, Serialize};

use crate::linalg::norm;
use crate::scalar::{lit, Real};

/// Integration settings.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OdeConfig {
    pub abs_tol: f64,
    pub rel_tol: f64,
    pub max_step: f64,
    pub escape_radius: f64,
    pub max_steps: usize,
    pub seed: u64,
}

impl Default for OdeConfig {
    fn default() -> Self {
        Self {
            abs_tol: 1e-11,
            rel_tol: 1e-11,
            max_step: 0.1,
            escape_radius: 1e6,
            max_steps: 200_000,
            seed: 0,
        }
    }
}

impl OdeConfig {
    pub fn validate(&self) -> Result<(), String> {
        if !(self.abs_tol > 0.0 && self.rel_tol > 0.0) {
            return Err("tolerances must be positive".into());
        }
        if !(self.escape_radius > 0.0) {
            return Err("escape_radius must be positive".into());
        }
        if !(self.max_step > 0.0) {
            return Err("max_step must be positive".into());
        }
        Ok(())
    }

    pub fn with_tol(mut self, tol: f64) -> Self {
        self.abs_tol = tol;
        self.rel_tol = tol;
        self
    }
}

/// How an integration ended.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Terminal {
    Completed,
    Escaped,
    Stopped,
    StepFailure(String),
}

/// A right-hand side together with optional hooks.
pub trait OdeSystem<T: Real> {
    fn rhs(&self, t: T, y: &[T], dy: &mut [T]) -> Result<(), String>;

    /// Called after every accepted step; may rewrite the state in place.
    fn after_step(&mut self, _t: T, _y: &mut [T]) {}

    /// Size used against the escape radius.
    fn escape_measure(&self, y: &[T]) -> T {
        norm(y)
    }

    /// Early termination request.
    fn should_stop(&self, _t: T, _y: &[T]) -> bool {
        false
    }

    /// Discrete tag recorded alongside each sample (e.g. a chart id).
    fn tag(&self) -> u8 {
        0
    }
}

/// Accepted samples of an integration.
#[derive(Debug, Clone)]
pub struct Trajectory<T> {
    pub times: Vec<T>,
    pub states: Vec<Vec<T>>,
    pub tags: Vec<u8>,
    pub terminal: Terminal,
    pub accepted: usize,
    pub rejected: usize,
}

impl<T: Real> Trajectory<T> {
    pub fn last_state(&self) -> &[T] {
        self.states.last().map(Vec::as_slice).unwrap_or(&[])
    }

    pub fn last_time(&self) -> T {
        self.times.last().copied().unwrap_or_else(T::zero)
    }

    pub fn completed(&self) -> bool {
        self.terminal == Terminal::Completed
    }
}

const C: [f64; 7] = [0.0, 0.2, 0.3, 0.8, 8.0 / 9.0, 1.0, 1.0];
const A: [[f64; 6]; 7] = [
    [0.0; 6],
    [0.2, 0.0, 0.0, 0.0, 0.0, 0.0],
    [3.0 / 40.0, 9.0 / 40.0, 0.0, 0.0, 0.0, 0.0],
    [44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0, 0.0, 0.0, 0.0],
    [19372.0 / 6561.0, -25360.0 / 2187.0, 64448.0 / 6561.0, -212.0 / 729.0, 0.0, 0.0],
    [9017.0 / 3168.0, -355.0 / 33.0, 46732.0 / 5247.0, 49.0 / 176.0, -5103.0 / 18656.0, 0.0],
    [35.0 / 384.0, 0.0, 500.0 / 1113.0, 125.0 / 192.0, -2187.0 / 6784.0, 11.0 / 84.0],
];
const E: [f64; 7] = [
    71.0 / 57600.0,
    0.0,
    -71.0 / 16695.0,
    71.0 / 1920.0,
    -17253.0 / 339200.0,
    22.0 / 525.0,
    -1.0 / 40.0,
];

/// Integrates `sys` from `(t0, y0)` to `t1`. When `record_all` is false only
/// the initial and final states are kept.
pub fn integrate<T: Real, S: OdeSystem<T>>(
    sys: &mut S,
    t0: T,
    y0: &[T],
    t1: T,
    cfg: &OdeConfig,
    record_all: bool,
) -> Trajectory<T> {
    let n = y0.len();
    let atol: T = lit(cfg.abs_tol);
    let rtol: T = lit(cfg.rel_tol);
    let max_step: T = lit(cfg.max_step);
    let escape: T = lit(cfg.escape_radius);
    let dir = if t1 >= t0 { T::one() } else { -T::one() };
    let span = (t1 - t0).abs();

    let mut traj = Trajectory {
        times: vec![t0],
        states: vec![y0.to_vec()],
        tags: vec![sys.tag()],
        terminal: Terminal::Completed,
        accepted: 0,
        rejected: 0,
    };
    if span == T::zero() {
        return traj;
    }

    let mut t = t0;
    let mut y = y0.to_vec();
    let mut k: Vec<Vec<T>> = vec![vec![T::zero(); n]; 7];
    let mut ytmp = vec![T::zero(); n];
    let mut h = max_step.min(span * lit(0.01)).max(span * lit(1e-6));
    let safety: T = lit(0.9);
    let fac_min: T = lit(0.2);
    let fac_max: T = lit(5.0);
    let tiny: T = lit(1e-14);

    let push = |traj: &mut Trajectory<T>, t: T, y: &[T], tag: u8| {
        traj.times.push(t);
        traj.states.push(y.to_vec());
        traj.tags.push(tag);
    };

    while (t1 - t) * dir > T::zero() {
        if traj.accepted + traj.rejected >= cfg.max_steps {
            traj.terminal = Terminal::StepFailure("maximum step count exceeded".into());
            break;
        }
        let last = h >= (t1 - t).abs();
        if last {
            h = (t1 - t).abs();
        }
        if h <= tiny * (T::one() + t.abs()) {
            traj.terminal = Terminal::StepFailure("step size underflow".into());
            break;
        }
        let hs = h * dir;
        if let Err(e) = sys.rhs(t, &y, &mut k[0]) {
            traj.terminal = Terminal::StepFailure(e);
            break;
        }
        let mut failed = None;
        for s in 1..7 {
            for i in 0..n {
                let mut acc = y[i];
                for (j, kj) in k.iter().enumerate().take(s) {
                    let a = A[s][j];
                    if a != 0.0 {
                        acc += hs * lit::<T>(a) * kj[i];
                    }
                }
                ytmp[i] = acc;
            }
            if let Err(e) = sys.rhs(t + hs * lit::<T>(C[s]), &ytmp, &mut k[s]) {
                failed = Some(e);
                break;
            }
        }
        if let Some(e) = failed {
            // Treat evaluation failure as a rejected step.
            traj.rejected += 1;
            h *= lit(0.25);
            if h <= tiny * (T::one() + t.abs()) {
                traj.terminal = Terminal::StepFailure(e);
                break;
            }
            continue;
        }
        // ytmp now holds the 5th-order solution (stage 7 uses the b weights).
        let mut err = T::zero();
        for i in 0..n {
            let mut e = T::zero();
            for (s, ks) in k.iter().enumerate() {
                if E[s] != 0.0 {
                    e += lit::<T>(E[s]) * ks[i];
                }
            }
            e *= hs;
            let sc = atol + rtol * y[i].abs().max(ytmp[i].abs());
            err += (e / sc) * (e / sc);
        }
        err = (err / T::from_usize(n.max(1)).unwrap()).sqrt();
        if !err.is_finite() {
            traj.rejected += 1;
            h *= lit(0.25);
            continue;
        }
        if err <= T::one() {
            t = if last { t1 } else { t + hs };
            y.copy_from_slice(&ytmp);
            sys.after_step(t, &mut y);
            traj.accepted += 1;
            if record_all {
                push(&mut traj, t, &y, sys.tag());
            }
            if sys.escape_measure(&y) > escape {
                traj.terminal = Terminal::Escaped;
                break;
            }
            if sys.should_stop(t, &y) {
                traj.terminal = Terminal::Stopped;
                break;
            }
            let fac = if err == T::zero() {
                fac_max
            } else {
                (safety * err.powf(lit(-0.2))).max(fac_min).min(fac_max)
            };
            h = (h * fac).min(max_step);
        } else {
            traj.rejected += 1;
            let fac = (safety * err.powf(lit(-0.2))).max(fac_min);
            h *= fac.min(T::one());
        }
    }
    if !record_all || traj.times.last().copied() != Some(t) {
        push(&mut traj, t, &y, sys.tag());
    }
    traj
}

/// Convenience wrapper turning a closure into an [`OdeSystem`].
pub struct FnSystem<F>(pub F);

impl<T: Real, F: Fn(T, &[T], &mut [T])> OdeSystem<T> for FnSystem<F> {
    fn rhs(&self, t: T, y: &[T], dy: &mut [T]) -> Result<(), String> {
        (self.0)(t, y, dy);
        Ok(())
    }
}
