//! The symplectic connection of `h = f + i g`: horizontal lifts, parallel
//! transport, monodromy, thimbles, the Morse–Smale check and the fiber
//! analysis at a regular value.

use num_complex::Complex;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::complexification::{c_sphere_dim, distance_to_critical, sample_c_sphere, F0Fn};
use crate::geometry::{
    flow, hamiltonian_field, hamiltonian_lift, phase_directional, phase_gradient, ChartId, FlowField, GFn,
    GeometryError, MorseSystem, PhasePoint, PhaseScalar, PhaseVector, RhoFn,
};
use crate::linalg::{dot, gram_schmidt, norm, null_space, solve, sym_eigen, Mat};
use crate::local_model::{annulus_twist, psi, psi_inv, AnnulusCoord, PlaneFrame};
use crate::ode::{integrate, OdeConfig, OdeSystem, Terminal};
use crate::rearrangement::AssembledLyapunov;
use crate::sampling::{rng, sphere_from_cube, unit_vector};
use crate::scalar::Real;

#[derive(Debug, Error)]
pub enum FibrationError {
    #[error("point is too close to a critical point (conditioning {0:e})")]
    NearCritical(f64),
    #[error("path comes within {0:e} of a critical value")]
    PathNearCritical(f64),
    #[error("{0}")]
    Domain(String),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
}

/// Which real part `f` is used.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum LyapunovKind {
    /// `f = f⁰`.
    Coarse(F0Fn),
    /// The blended function.
    Assembled(AssembledLyapunov),
}

impl PhaseScalar for LyapunovKind {
    fn eval<S: Real>(&self, ms: &MorseSystem, chart: ChartId, q: &[S], p: &[S]) -> S {
        match self {
            LyapunovKind::Coarse(f) => f.eval(ms, chart, q, p),
            LyapunovKind::Assembled(f) => f.eval(ms, chart, q, p),
        }
    }
}

/// `h = f + i g`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FibrationMap {
    pub ms: MorseSystem,
    pub kind: LyapunovKind,
}

impl FibrationMap {
    pub fn coarse(ms: MorseSystem) -> Self {
        Self { ms, kind: LyapunovKind::Coarse(F0Fn::default()) }
    }

    pub fn eval<T: Real>(&self, x: &PhasePoint<T>) -> Complex<T> {
        Complex::new(self.kind.eval(&self.ms, x.chart, &x.q, &x.p), GFn.eval(&self.ms, x.chart, &x.q, &x.p))
    }

    pub fn critical_values(&self) -> &[f64] {
        &self.ms.delta_phi
    }

    /// `df`, `dg`.
    pub fn differentials(&self, x: &PhasePoint<f64>) -> (PhaseVector<f64>, PhaseVector<f64>) {
        (phase_gradient(&self.kind, &self.ms, x).1, phase_gradient(&GFn, &self.ms, x).1)
    }

    /// `df(ν̃)`.
    pub fn lyapunov(&self, x: &PhasePoint<f64>) -> Result<f64, FibrationError> {
        let v = hamiltonian_lift(x, &self.ms)?;
        Ok(phase_directional(&self.kind, &self.ms, x, &v))
    }

    /// Smallest distance from `w` to a critical value.
    pub fn critical_distance(&self, w: Complex<f64>) -> f64 {
        self.ms.delta_phi.iter().map(|&c| (w - c).norm()).fold(f64::INFINITY, f64::min)
    }

    /// Smallest gap between distinct critical values, 1 with a single one.
    pub fn critical_gap(&self) -> f64 {
        let g = self.ms.delta_phi.windows(2).map(|w| w[1] - w[0]).fold(f64::INFINITY, f64::min);
        if g.is_finite() { g } else { 1.0 }
    }
}

/// Unique `v ∈ span(X_f, X_g)` with `dh(v) = wdot`.
pub fn horizontal_lift(fm: &FibrationMap, x: &PhasePoint<f64>, wdot: Complex<f64>) -> Result<PhaseVector<f64>, FibrationError> {
    let xf = hamiltonian_field(&fm.kind, &fm.ms, x);
    let xg = hamiltonian_field(&GFn, &fm.ms, x);
    let (df, dg) = fm.differentials(x);
    let ap = |d: &PhaseVector<f64>, v: &PhaseVector<f64>| dot(&d.dq, &v.dq) + dot(&d.dp, &v.dp);
    let m = vec![vec![ap(&df, &xf), ap(&df, &xg)], vec![ap(&dg, &xf), ap(&dg, &xg)]];
    let det = m[0][0] * m[1][1] - m[0][1] * m[1][0];
    let cond = det.abs() / (df.norm() * dg.norm() * xf.norm() * xg.norm()).max(f64::MIN_POSITIVE);
    if !(cond >= 1e-10) {
        return Err(FibrationError::NearCritical(cond));
    }
    let ab = solve(&m, &[wdot.re, wdot.im], 0.0).ok_or(FibrationError::NearCritical(cond))?;
    Ok(xf.scale(ab[0]).add(&xg.scale(ab[1])))
}

/// A path `w: [0, 1] → C`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum PathSpec {
    Constant { w: Complex<f64> },
    /// `center + radius e^{i(θ₀ + 2π turns t)}`.
    Circle { center: Complex<f64>, radius: f64, theta0: f64, turns: f64 },
    Segment { from: Complex<f64>, to: Complex<f64> },
}

impl PathSpec {
    pub fn w(&self, t: f64) -> Complex<f64> {
        match *self {
            PathSpec::Constant { w } => w,
            PathSpec::Circle { center, radius, theta0, turns } => {
                center + Complex::from_polar(radius, theta0 + std::f64::consts::TAU * turns * t)
            }
            PathSpec::Segment { from, to } => from + (to - from) * t,
        }
    }

    pub fn wdot(&self, t: f64) -> Complex<f64> {
        match *self {
            PathSpec::Constant { .. } => Complex::new(0.0, 0.0),
            PathSpec::Circle { radius, theta0, turns, .. } => {
                let s = std::f64::consts::TAU * turns;
                Complex::new(0.0, s) * Complex::from_polar(radius, theta0 + s * t)
            }
            PathSpec::Segment { from, to } => to - from,
        }
    }
}

/// Outcome of a transport.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransportResult {
    pub path: Vec<(f64, PhasePoint<f64>)>,
    /// Max `|h(x(t)) − w(t)|`.
    pub fiber_error: f64,
    /// Max of `|dρ(v)| / (ρ |dh(v)|)` along the path.
    pub completeness_ratio: f64,
    /// Max `|p|` along the path.
    pub max_p: f64,
    pub terminal: Terminal,
}

impl TransportResult {
    pub fn last(&self) -> &PhasePoint<f64> {
        &self.path.last().expect("transport has a start point").1
    }

    pub fn last_time(&self) -> f64 {
        self.path.last().map(|v| v.0).unwrap_or(0.0)
    }
}

struct TransportOde<'a> {
    fm: &'a FibrationMap,
    path: PathSpec,
    chart: ChartId,
    /// Stop inside this Morse-chart radius around a critical point.
    stop: Option<(usize, f64)>,
}

impl OdeSystem<f64> for TransportOde<'_> {
    fn rhs(&self, t: f64, y: &[f64], dy: &mut [f64]) -> Result<(), String> {
        let x = PhasePoint::from_state(y, self.chart);
        let v = horizontal_lift(self.fm, &x, self.path.wdot(t)).map_err(|e| e.to_string())?;
        if v.dq.iter().chain(&v.dp).any(|a| !a.is_finite()) {
            return Err("non-finite lift".into());
        }
        dy.copy_from_slice(&v.to_state());
        Ok(())
    }

    fn after_step(&mut self, _t: f64, y: &mut [f64]) {
        let mut x = PhasePoint::from_state(y, self.chart);
        if self.fm.ms.manifold.normalize(&mut x).is_ok() {
            self.chart = x.chart;
            y.copy_from_slice(&x.to_state());
        }
    }

    fn should_stop(&self, _t: f64, y: &[f64]) -> bool {
        match self.stop {
            Some((a, r)) => distance_to_critical(&self.fm.ms, a, &PhasePoint::from_state(y, self.chart)) < r,
            None => false,
        }
    }

    fn tag(&self) -> u8 {
        self.chart.0
    }
}

fn transport_raw(
    fm: &FibrationMap,
    x0: &PhasePoint<f64>,
    path: PathSpec,
    cfg: &OdeConfig,
    stop: Option<(usize, f64)>,
) -> Result<TransportResult, FibrationError> {
    cfg.validate().map_err(FibrationError::Domain)?;
    let mut x = x0.clone();
    fm.ms.manifold.normalize(&mut x)?;
    let mut sys = TransportOde { fm, path, chart: x.chart, stop };
    let tr = integrate(&mut sys, 0.0, &x.to_state(), 1.0, cfg, true);
    let pts: Vec<(f64, PhasePoint<f64>)> = tr
        .times
        .iter()
        .zip(&tr.states)
        .zip(&tr.tags)
        .map(|((&t, y), &c)| (t, PhasePoint::from_state(y, ChartId(c))))
        .collect();
    let mut fiber_error: f64 = 0.0;
    let mut ratio: f64 = 0.0;
    let mut max_p: f64 = 0.0;
    for (t, p) in &pts {
        fiber_error = fiber_error.max((fm.eval(p) - path.w(*t)).norm());
        max_p = max_p.max(fm.ms.manifold.covector_norm2(p.chart, &p.q, &p.p).sqrt());
        let wd = path.wdot(*t);
        if wd.norm() > 0.0 {
            if let Ok(v) = horizontal_lift(fm, p, wd) {
                let (rho, drho) = phase_gradient(&RhoFn, &fm.ms, p);
                if rho > 0.0 {
                    let d = dot(&drho.dq, &v.dq) + dot(&drho.dp, &v.dp);
                    ratio = ratio.max(d.abs() / (rho * wd.norm()));
                }
            }
        }
    }
    Ok(TransportResult { path: pts, fiber_error, completeness_ratio: ratio, max_p, terminal: tr.terminal })
}

/// Transport of `x0` over `path`, which must stay `10⁻³ ×` the critical
/// value gap away from the critical values.
pub fn parallel_transport(fm: &FibrationMap, x0: &PhasePoint<f64>, path: PathSpec, cfg: &OdeConfig) -> Result<TransportResult, FibrationError> {
    let margin = 1e-3 * fm.critical_gap();
    let closest = (0..=1000).map(|i| fm.critical_distance(path.w(i as f64 / 1000.0))).fold(f64::INFINITY, f64::min);
    if closest < margin {
        return Err(FibrationError::PathNearCritical(closest));
    }
    transport_raw(fm, x0, path, cfg, None)
}

/// `z = q + i p`.
pub fn phase_to_cn(x: &PhasePoint<f64>) -> Vec<Complex<f64>> {
    x.q.iter().zip(&x.p).map(|(&a, &b)| Complex::new(a, b)).collect()
}

pub fn cn_to_phase(z: &[Complex<f64>]) -> PhasePoint<f64> {
    PhasePoint::new(z.iter().map(|v| v.re).collect(), z.iter().map(|v| v.im).collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MonodromyRow {
    pub r: f64,
    pub twist_measured: f64,
    pub twist_model: f64,
    pub radial_error: f64,
    pub fiber_error: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MonodromyReport {
    pub u: f64,
    pub rows: Vec<MonodromyRow>,
    /// Max of angular and radial deviation from the annulus model.
    pub max_deviation: f64,
}

/// Transports the annulus points `ψ_u(r, θ₀)` of `frame` once around `|w| = u`
/// and compares with the twist `2π/(1+r⁴)`. Needs `φ = Σ q_j²`.
pub fn monodromy_circle(
    fm: &FibrationMap,
    u: f64,
    frame: &PlaneFrame<f64>,
    theta0: f64,
    radii: &[f64],
    cfg: &OdeConfig,
) -> Result<MonodromyReport, FibrationError> {
    let ms = &fm.ms;
    if !(ms.critical_points.len() == 1 && ms.critical_points[0].signature.iter().all(|&e| e == 1) && ms.critical_points[0].value == 0.0) {
        return Err(FibrationError::Domain("the annulus model needs the positive quadric".into()));
    }
    if !(u > 0.0) {
        return Err(FibrationError::Domain("u must be positive".into()));
    }
    let w = Complex::new(u, 0.0);
    let path = PathSpec::Circle { center: Complex::new(0.0, 0.0), radius: u, theta0: 0.0, turns: 1.0 };
    let rows: Vec<Result<MonodromyRow, FibrationError>> = radii
        .par_iter()
        .map(|&r| {
            let (a, b) = psi(w, AnnulusCoord { r, theta: theta0 });
            let x = cn_to_phase(&frame.from_special(a, b));
            let tr = parallel_transport(fm, &x, path, cfg)?;
            if tr.terminal != Terminal::Completed {
                return Err(FibrationError::Domain(format!("transport stopped: {:?}", tr.terminal)));
            }
            let (a2, _) = frame.special(&phase_to_cn(tr.last()));
            let got = psi_inv(w, a2);
            let model = annulus_twist(AnnulusCoord { r, theta: 0.0 }, std::f64::consts::TAU).theta;
            let d = (got.theta - theta0 - model + std::f64::consts::PI).rem_euclid(std::f64::consts::TAU) - std::f64::consts::PI;
            Ok(MonodromyRow {
                r,
                twist_measured: model + d,
                twist_model: model,
                radial_error: (got.r - r).abs(),
                fiber_error: tr.fiber_error,
            })
        })
        .collect();
    let rows: Vec<MonodromyRow> = rows.into_iter().collect::<Result<_, _>>()?;
    let max_deviation = rows
        .iter()
        .map(|r| (r.twist_measured - r.twist_model).abs().max(r.radial_error))
        .fold(0.0, f64::max);
    Ok(MonodromyReport { u, rows, max_deviation })
}

/// Indices with `ε = e` at a critical point.
fn coords_with(ms: &MorseSystem, a: usize, e: i8) -> Vec<usize> {
    let s = &ms.critical_points[a].signature;
    (0..s.len()).filter(|&j| s[j] == e).collect()
}

/// Vanishing cycle of `a` at `φ(a) + sign·t` in the Morse chart: the sphere
/// `|q|² + |p|² = t` with `q` in the `ε = sign` and `p` in the `ε = −sign`
/// coordinates. It lies on `N*E^{sign}(a)`.
pub fn vanishing_cycle(ms: &MorseSystem, a: usize, sign: i8, t: f64, count: usize, seed: u64) -> Vec<PhasePoint<f64>> {
    let qi = coords_with(ms, a, sign);
    let pi = coords_with(ms, a, -sign);
    let n = ms.dim();
    let m = qi.len() + pi.len();
    let mut g = rng(seed, 91);
    let count = if m == 1 { count.min(2) } else { count };
    (0..count)
        .map(|k| {
            let d = if m == 1 { vec![if k % 2 == 0 { 1.0 } else { -1.0 }] } else { unit_vector(&mut g, m) };
            let mut qm = vec![0.0; n];
            let mut pm = vec![0.0; n];
            for (i, &j) in qi.iter().enumerate() {
                qm[j] = t.sqrt() * d[i];
            }
            for (i, &j) in pi.iter().enumerate() {
                pm[j] = t.sqrt() * d[qi.len() + i];
            }
            ms.from_morse(a, &qm, &pm)
        })
        .collect()
}

/// Residual of `x ∈ N*E^{sign}(a)`: the point is carried along `ν̃` into the
/// Morse chart of `a`, where `E^+` and `E^−` are coordinate planes; returns
/// the `q`-distance to `E^{sign}` plus the relative size of the part of `p`
/// that does not annihilate it.
pub fn conormal_residual(ms: &MorseSystem, a: usize, sign: i8, x: &PhasePoint<f64>, cfg: &OdeConfig) -> Result<f64, FibrationError> {
    let cp = &ms.critical_points[a];
    let rad = 0.5 * cp.chart_radius.min(ms.sample_radius);
    let inside = |y: &PhasePoint<f64>| ms.morse_coords(a, y).map(|m| norm(&m.q) < rad).unwrap_or(false);
    let mut y = x.clone();
    if !inside(&y) {
        let dir = if sign < 0 { 1.0 } else { -1.0 };
        let fr = flow(ms, FlowField::Hamiltonian, x, dir * 40.0, cfg)?;
        y = fr
            .samples
            .iter()
            .map(|s| &s.1)
            .find(|s| inside(s))
            .cloned()
            .ok_or_else(|| FibrationError::Domain("orbit never enters the Morse chart".into()))?;
    }
    let m = ms.morse_coords(a, &y)?;
    let off_q: f64 = coords_with(ms, a, -sign).iter().map(|&j| m.q[j] * m.q[j]).sum::<f64>().sqrt();
    let np = norm(&m.p);
    let off_p = if np > 0.0 { coords_with(ms, a, sign).iter().map(|&j| m.p[j] * m.p[j]).sum::<f64>().sqrt() / np } else { 0.0 };
    Ok(off_q + off_p)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThimbleTrace {
    pub point: usize,
    /// `+1` for values above `φ(a)`, `−1` below.
    pub direction: i8,
    pub t_near: f64,
    pub t_far: f64,
    /// Vanishing cycle on the regular fiber `φ(a) + direction·t_far`.
    pub cycle: Vec<PhasePoint<f64>>,
    /// Per cycle point: `(Re w, point)` samples of the inward trace.
    pub traces: Vec<Vec<(f64, PhasePoint<f64>)>>,
    /// Final Morse-chart distance to `(a, 0)` per trace.
    pub terminal_distances: Vec<f64>,
    pub monotone: bool,
    pub max_fiber_error: f64,
    /// Max `|p|` along the traces in chart coordinates.
    pub max_imaginary: f64,
    pub pairing_residual: f64,
}

/// Transports the vanishing cycle out to `φ(a) ± t_far` and then traces it
/// back along the real path until it is within `stop_radius` of `(a, 0)`.
pub fn trace_thimble(
    fm: &FibrationMap,
    a: usize,
    direction: i8,
    t_far: f64,
    stop_radius: f64,
    count: usize,
    cfg: &OdeConfig,
) -> Result<ThimbleTrace, FibrationError> {
    let ms = &fm.ms;
    let cp = ms.critical_points.get(a).ok_or_else(|| FibrationError::Domain(format!("no critical point {a}")))?;
    let d = direction.signum() as f64;
    let r = cp.chart_radius.min(ms.sample_radius);
    let t_near = (0.25 * r * r).min(0.5 * t_far);
    let c0 = Complex::new(cp.value, 0.0);
    let w_near = c0 + d * t_near;
    let w_far = c0 + d * t_far;
    let seeds = vanishing_cycle(ms, a, direction, t_near, count, 7);

    let outward: Vec<PhasePoint<f64>> = seeds
        .par_iter()
        .map(|x| {
            let tr = transport_raw(fm, x, PathSpec::Segment { from: w_near, to: w_far }, cfg, None)?;
            if tr.terminal != Terminal::Completed {
                return Err(FibrationError::Domain(format!("outward transport stopped: {:?}", tr.terminal)));
            }
            Ok(tr.last().clone())
        })
        .collect::<Result<_, _>>()?;

    let inward: Vec<TransportResult> = outward
        .par_iter()
        .map(|x| transport_raw(fm, x, PathSpec::Segment { from: w_far, to: c0 }, cfg, Some((a, stop_radius))))
        .collect::<Result<_, _>>()?;

    let mut traces = Vec::new();
    let mut terminal_distances = Vec::new();
    let mut monotone = true;
    let mut max_fiber_error: f64 = 0.0;
    let mut max_imaginary: f64 = 0.0;
    for tr in &inward {
        let pts: Vec<(f64, PhasePoint<f64>)> = tr.path.iter().map(|(t, x)| ((c0 + (w_far - c0) * (1.0 - t)).re, x.clone())).collect();
        monotone &= pts.windows(2).all(|w| d * (w[1].0 - w[0].0) < 0.0);
        max_fiber_error = max_fiber_error.max(tr.fiber_error);
        for (_, x) in &pts {
            if let Ok(m) = ms.morse_coords(a, x) {
                max_imaginary = max_imaginary.max(norm(&m.p));
            }
        }
        terminal_distances.push(distance_to_critical(ms, a, tr.last()));
        traces.push(pts);
    }
    let checks: Vec<&PhasePoint<f64>> = outward.iter().chain(inward.iter().map(|t| &t.path[t.path.len() / 2].1)).collect();
    let pairing_residual = checks
        .par_iter()
        .map(|x| conormal_residual(ms, a, direction, x, cfg))
        .collect::<Result<Vec<f64>, _>>()?
        .into_iter()
        .fold(0.0, f64::max);
    Ok(ThimbleTrace {
        point: a,
        direction,
        t_near,
        t_far,
        cycle: outward,
        traces,
        terminal_distances,
        monotone,
        max_fiber_error,
        max_imaginary,
        pairing_residual,
    })
}

/// A detected flow line from `a` into the neighbourhood of `b`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Connection {
    pub from: usize,
    pub to: usize,
    pub seeds: usize,
    /// Closest approach to `b` in chart distance.
    pub approach: f64,
    /// `asin` of the smallest singular value of `[ν̂, A, B]`, with `A`, `B`
    /// complements of `ν` in `TE⁺(a)`, `TE⁻(b)`; 0 when they cannot span.
    pub angle: f64,
    /// Distance between the unit conormals of `E⁺(a)` and `E⁻(b)`.
    pub conormal_margin: f64,
    pub saddle_to_saddle: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MSReport {
    pub connections: Vec<Connection>,
    pub min_angle: f64,
    pub min_conormal_margin: f64,
    pub violation: bool,
}

/// Integrates `ν` on the base and returns the samples.
fn base_flow(ms: &MorseSystem, chart: ChartId, q: &[f64], t: f64, cfg: &OdeConfig) -> Result<Vec<(f64, PhasePoint<f64>)>, FibrationError> {
    let n = q.len();
    let x = PhasePoint::in_chart(q.to_vec(), vec![0.0; n], chart);
    Ok(flow(ms, FlowField::Base, &x, t, cfg)?.samples)
}

fn base_in_chart(ms: &MorseSystem, x: &PhasePoint<f64>, chart: ChartId) -> Vec<f64> {
    match ms.manifold.to_chart(x, chart) {
        Ok(y) => y.q,
        Err(_) => vec![f64::NAN; x.q.len()],
    }
}

/// Pushes the coordinate directions `dirs` at the Morse-chart point `qm` of
/// `c` along the base flow for time `t` by finite differences and returns
/// an orthonormal basis at the image.
fn pushed_frame(ms: &MorseSystem, c: usize, qm: &[f64], dirs: &[usize], t: f64, cfg: &OdeConfig) -> Result<(PhasePoint<f64>, Vec<Vec<f64>>), FibrationError> {
    let n = qm.len();
    let x0 = ms.from_morse(c, qm, &vec![0.0; n]);
    let end = |x: &PhasePoint<f64>| -> Result<PhasePoint<f64>, FibrationError> {
        let s = base_flow(ms, x.chart, &x.q, t, cfg)?;
        Ok(s.last().expect("flow sample").1.clone())
    };
    let y0 = end(&x0)?;
    let h = 1e-7;
    let mut vs = Vec::new();
    for &j in dirs {
        let mut q = qm.to_vec();
        q[j] += h;
        let y = end(&ms.from_morse(c, &q, &vec![0.0; n]))?;
        let qy = base_in_chart(ms, &y, y0.chart);
        let mut v: Vec<f64> = qy.iter().zip(&y0.q).map(|(a, b)| (a - b) / h).collect();
        // torus coordinates may wrap between the two flows
        if let crate::geometry::ManifoldKind::FlatTorus { periods } = &ms.manifold.kind {
            for (vi, per) in v.iter_mut().zip(periods) {
                *vi = (*vi * h - per * (*vi * h / per).round()) / h;
            }
        }
        vs.push(v);
    }
    Ok((y0, gram_schmidt(&vs, 1e-9)))
}

fn smallest_singular(cols: &[Vec<f64>], n: usize) -> f64 {
    if cols.len() < n {
        return 0.0;
    }
    let m: Mat<f64> = (0..n).map(|i| (0..n).map(|j| cols.iter().map(|c| c[i] * c[j]).sum()).collect()).collect();
    sym_eigen(&m).0[0].max(0.0).sqrt()
}

fn largest_singular_cross(a: &[Vec<f64>], b: &[Vec<f64>]) -> f64 {
    if a.is_empty() || b.is_empty() {
        return 0.0;
    }
    let c: Mat<f64> = a.iter().map(|u| b.iter().map(|v| dot(u, v)).collect()).collect();
    let k = b.len();
    let ctc: Mat<f64> = (0..k).map(|i| (0..k).map(|j| c.iter().map(|row| row[i] * row[j]).sum()).collect()).collect();
    sym_eigen(&ctc).0.last().copied().unwrap_or(0.0).max(0.0).sqrt()
}

fn complement(vs: &[Vec<f64>], nu: &[f64]) -> Vec<Vec<f64>> {
    let mut all = vec![nu.to_vec()];
    all.extend(vs.iter().cloned());
    gram_schmidt(&all, 1e-6).into_iter().skip(1).collect()
}

/// Flows the unstable spheres (radius `10⁻³` in the Morse charts) forward
/// and records approaches within `10⁻²` of other critical points, with the
/// transversality of `E⁺(a)` and `E⁻(b)` along each detected connection.
pub fn morse_smale_check(ms: &MorseSystem, cfg: &OdeConfig) -> Result<MSReport, FibrationError> {
    const RADIUS: f64 = 1e-3;
    const APPROACH: f64 = 1e-2;
    const T_END: f64 = 12.0;
    let n = ms.dim();
    let mut connections: Vec<Connection> = Vec::new();
    for (a, _) in ms.critical_points.iter().enumerate() {
        let up = coords_with(ms, a, 1);
        if up.is_empty() {
            continue;
        }
        let seeds = if up.len() == 1 { 2 } else { 64 * 4usize.pow(up.len() as u32 - 2) };
        let seed_points: Vec<Vec<f64>> = (0..seeds)
            .map(|k| {
                let d = if up.len() == 1 {
                    vec![if k % 2 == 0 { 1.0 } else { -1.0 }]
                } else {
                    let u: Vec<f64> = (0..up.len() - 1).map(|i| (k as f64 + 0.5) / seeds as f64 * if i == 0 { 1.0 } else { 0.618 }).map(|v| v.fract()).collect();
                    sphere_from_cube(&u, up.len())
                };
                let mut qm = vec![0.0; n];
                for (i, &j) in up.iter().enumerate() {
                    qm[j] = RADIUS * d[i];
                }
                qm
            })
            .collect();
        let hits: Vec<Vec<(usize, f64, f64, Vec<f64>)>> = seed_points
            .par_iter()
            .map(|qm| {
                let x0 = ms.from_morse(a, qm, &vec![0.0; n]);
                let Ok(s) = base_flow(ms, x0.chart, &x0.q, T_END, cfg) else { return Vec::new() };
                let mut best: Vec<(usize, f64, f64, Vec<f64>)> = Vec::new();
                for b in (0..ms.critical_points.len()).filter(|&b| b != a) {
                    let mut closest = (f64::INFINITY, 0.0);
                    for (t, y) in &s {
                        let d = ms.chart_distance(b, y.chart, &y.q);
                        if d < closest.0 {
                            closest = (d, *t);
                        }
                    }
                    if closest.0 < APPROACH {
                        best.push((b, closest.0, closest.1, qm.clone()));
                    }
                }
                best
            })
            .collect();
        for b in 0..ms.critical_points.len() {
            let found: Vec<&(usize, f64, f64, Vec<f64>)> = hits.iter().flatten().filter(|h| h.0 == b).collect();
            if found.is_empty() {
                continue;
            }
            let approach = found.iter().map(|h| h.1).fold(f64::INFINITY, f64::min);
            let (_, _, t_hit, qm) = found[0];
            let saddle_to_saddle = coords_with(ms, a, -1).len() > 0 && coords_with(ms, b, 1).len() > 0;
            let (angle, margin) = connection_transversality(ms, a, b, qm, *t_hit, cfg)?;
            connections.push(Connection { from: a, to: b, seeds: found.len(), approach, angle, conormal_margin: margin, saddle_to_saddle });
        }
    }
    let min_angle = connections.iter().map(|c| c.angle).fold(std::f64::consts::FRAC_PI_2, f64::min);
    let min_conormal_margin = connections.iter().map(|c| c.conormal_margin).fold(2f64.sqrt(), f64::min);
    Ok(MSReport { violation: min_angle < 1e-3, connections, min_angle, min_conormal_margin })
}

/// Angle and conormal margin at the midpoint of the flow line from the seed
/// `qm` (Morse chart of `a`) that reaches `b` at time `t_hit`.
fn connection_transversality(ms: &MorseSystem, a: usize, b: usize, qm: &[f64], t_hit: f64, cfg: &OdeConfig) -> Result<(f64, f64), FibrationError> {
    let n = ms.dim();
    let t_mid = 0.5 * t_hit;
    let (xm, ea) = pushed_frame(ms, a, qm, &coords_with(ms, a, 1), t_mid, cfg)?;
    // point near b on the same line, then backwards with E⁻(b) directions
    let x0 = ms.from_morse(a, qm, &vec![0.0; n]);
    let s = base_flow(ms, x0.chart, &x0.q, t_hit, cfg)?;
    let yb = s.last().expect("flow sample").1.clone();
    let mb = ms.morse_coords(b, &yb)?;
    let (xm2, eb) = pushed_frame(ms, b, &mb.q, &coords_with(ms, b, -1), -(t_hit - t_mid), cfg)?;
    let eb: Vec<Vec<f64>> = if xm2.chart == xm.chart {
        eb
    } else {
        // re-express the frame in the chart of xm by differencing the transition
        let h = 1e-7;
        let base = base_in_chart(ms, &xm2, xm.chart);
        let vs: Vec<Vec<f64>> = eb
            .iter()
            .map(|v| {
                let q: Vec<f64> = xm2.q.iter().zip(v).map(|(a, b)| a + h * b).collect();
                let qq = base_in_chart(ms, &PhasePoint::in_chart(q, vec![0.0; n], xm2.chart), xm.chart);
                qq.iter().zip(&base).map(|(a, b)| (a - b) / h).collect()
            })
            .collect();
        gram_schmidt(&vs, 1e-9)
    };
    let nu = ms.nu(xm.chart, &xm.q);
    let nn = norm(&nu);
    let nu_hat: Vec<f64> = nu.iter().map(|v| v / nn).collect();
    let mut cols = vec![nu_hat.clone()];
    cols.extend(complement(&ea, &nu_hat));
    cols.extend(complement(&eb, &nu_hat));
    let sigma = smallest_singular(&cols, n).min(1.0);
    // conormals: orthogonal complements of the tangent spaces
    let mut ta = vec![nu_hat.clone()];
    ta.extend(ea);
    let mut tb = vec![nu_hat];
    tb.extend(eb);
    let na = null_space(&gram_schmidt(&ta, 1e-6), n, 1e-9);
    let nb = null_space(&gram_schmidt(&tb, 1e-6), n, 1e-9);
    let margin = if na.is_empty() || nb.is_empty() {
        2f64.sqrt()
    } else {
        (2.0 - 2.0 * largest_singular_cross(&na, &nb).min(1.0)).max(0.0).sqrt()
    };
    Ok((sigma.asin(), margin))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProbeReport {
    pub seed: PhasePoint<f64>,
    pub w_start: f64,
    pub w_target: f64,
    /// Real value reached by the transport.
    pub w_reached: f64,
    /// `max |p| / |p(0)|`, 1 when `p(0) = 0`.
    pub blow_up_factor: f64,
    pub terminal: Terminal,
}

/// Transport of `seed` along the real arc from `h(seed)` to `target`,
/// recording the growth of `|p|`.
pub fn incompleteness_probe(fm: &FibrationMap, seed: &PhasePoint<f64>, target: f64, cfg: &OdeConfig) -> Result<ProbeReport, FibrationError> {
    let w0 = fm.eval(seed);
    let path = PathSpec::Segment { from: w0, to: Complex::new(target, w0.im) };
    let tr = transport_raw(fm, seed, path, cfg, None)?;
    let p0 = fm.ms.manifold.covector_norm2(seed.chart, &seed.q, &seed.p).sqrt();
    let blow_up_factor = if p0 > 0.0 { tr.max_p / p0 } else if tr.max_p == 0.0 { 1.0 } else { f64::INFINITY };
    Ok(ProbeReport {
        seed: seed.clone(),
        w_start: w0.re,
        w_target: target,
        w_reached: path.w(tr.last_time()).re,
        blow_up_factor,
        terminal: tr.terminal,
    })
}

/// Probe seed on the connection of `torus-upright`: just after the saddle of
/// value −2 along `y = π`, with a conormal covector.
pub fn torus_connection_seed() -> (PhasePoint<f64>, f64) {
    let pi = std::f64::consts::PI;
    (PhasePoint::new(vec![pi - 1e-3, pi], vec![0.0, 0.05]), 2.0 - 0.01)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SphereRoot {
    pub point: usize,
    pub sign: i8,
    pub sphere_dim: i32,
    /// Radius with `f_r(C_a^±) = u`; absent for an empty sphere.
    pub radius: Option<f64>,
    pub root_residual: f64,
    /// Max relative part of `dρ` outside `span(df, dg)` on sphere samples.
    pub gradient_residual: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeinsteinReport {
    pub u: f64,
    pub roots: Vec<SphereRoot>,
    pub plus: usize,
    pub minus: usize,
    /// Smallest `ρ` on tube samples around `Q_u` (positive means minimum).
    pub tube_min_rho: f64,
    pub tube_samples: usize,
    /// Smallest `dρ(η)` over slice samples, `η` the fiberwise Liouville field.
    pub slice_min: f64,
    pub slice_samples: usize,
}

fn c_sphere_value(fm: &FibrationMap, a: usize, sign: i8, r: f64) -> Option<f64> {
    sample_c_sphere(&fm.ms, a, sign, r, 1, 0).first().map(|x| fm.eval(x).re)
}

/// Root of the monotone function `r ↦ f_r(C_a^±) − u`.
fn sphere_root(fm: &FibrationMap, a: usize, sign: i8, u: f64) -> Option<(f64, f64)> {
    let f = |r: f64| c_sphere_value(fm, a, sign, r).map(|v| v - u);
    let s = f(0.0)?.signum();
    let mut hi = 1e-3;
    while f(hi)?.signum() == s {
        hi *= 2.0;
        if hi > 1e6 {
            return None;
        }
    }
    let mut lo = 0.0;
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if f(mid)?.signum() == s {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo < 1e-15 * hi.max(1.0) {
            break;
        }
    }
    let r = 0.5 * (lo + hi);
    Some((r, f(r)?.abs()))
}

/// Relative part of `dρ` outside `span(df, dg)`.
pub fn fiber_gradient_residual(fm: &FibrationMap, x: &PhasePoint<f64>) -> f64 {
    let (df, dg) = fm.differentials(x);
    let (_, dr) = phase_gradient(&RhoFn, &fm.ms, x);
    let (a, b, c) = (df.to_state(), dg.to_state(), dr.to_state());
    let m = vec![vec![dot(&a, &a), dot(&a, &b)], vec![dot(&b, &a), dot(&b, &b)]];
    let Some(k) = solve(&m, &[dot(&a, &c), dot(&b, &c)], 0.0) else { return f64::INFINITY };
    let res: Vec<f64> = (0..c.len()).map(|i| c[i] - k[0] * a[i] - k[1] * b[i]).collect();
    norm(&res) / norm(&c).max(f64::MIN_POSITIVE)
}

/// `dρ(η)` for the fiberwise Liouville field `η = Z − αX_f − βX_g`.
pub fn slice_liouville(fm: &FibrationMap, x: &PhasePoint<f64>) -> Result<f64, FibrationError> {
    let n = x.dim();
    let z = PhaseVector { dq: vec![0.0; n], dp: x.p.clone() };
    let (df, dg) = fm.differentials(x);
    let l = fm.lyapunov(x)?;
    let ap = |d: &PhaseVector<f64>, v: &PhaseVector<f64>| dot(&d.dq, &v.dq) + dot(&d.dp, &v.dp);
    let b = ap(&df, &z) / l;
    let a = -ap(&dg, &z) / l;
    let xf = hamiltonian_field(&fm.kind, &fm.ms, x);
    let xg = hamiltonian_field(&GFn, &fm.ms, x);
    let eta = z.add(&xf.scale(-a)).add(&xg.scale(-b));
    let (_, dr) = phase_gradient(&RhoFn, &fm.ms, x);
    Ok(ap(&dr, &eta))
}

/// Gauss–Newton projection onto `h = w` with minimal-norm steps.
pub fn project_to_fiber(fm: &FibrationMap, x: &PhasePoint<f64>, w: Complex<f64>) -> Option<PhasePoint<f64>> {
    let mut y = x.clone();
    for _ in 0..60 {
        let e = fm.eval(&y) - w;
        if e.norm() < 1e-13 * (1.0 + w.norm()) {
            return Some(y);
        }
        let (df, dg) = fm.differentials(&y);
        let (a, b) = (df.to_state(), dg.to_state());
        let m = vec![vec![dot(&a, &a), dot(&a, &b)], vec![dot(&b, &a), dot(&b, &b)]];
        let k = solve(&m, &[e.re, e.im], 0.0)?;
        let s: Vec<f64> = y.to_state().iter().enumerate().map(|(i, v)| v - k[0] * a[i] - k[1] * b[i]).collect();
        y = PhasePoint::from_state(&s, y.chart);
        fm.ms.manifold.normalize(&mut y).ok()?;
    }
    ((fm.eval(&y) - w).norm() < 1e-10 * (1.0 + w.norm())).then_some(y)
}

/// Critical spheres of `ρ` on `F_u`, the minimum `Q_u` and the contact
/// slice condition on `F_u ∩ V_r` for `r` in `radii`.
pub fn weinstein_fiber_report(fm: &FibrationMap, u: f64, radii: &[f64], samples: usize, seed: u64) -> Result<WeinsteinReport, FibrationError> {
    let ms = &fm.ms;
    if fm.critical_distance(Complex::new(u, 0.0)) < 1e-9 {
        return Err(FibrationError::Domain(format!("{u} is a critical value")));
    }
    let mut roots = Vec::new();
    for (a, cp) in ms.critical_points.iter().enumerate() {
        let sign: i8 = if cp.value < u { 1 } else { -1 };
        let sphere_dim = c_sphere_dim(ms, a, sign);
        let (radius, root_residual, gradient_residual) = if sphere_dim < 0 {
            (None, 0.0, 0.0)
        } else {
            let (r, res) = sphere_root(fm, a, sign, u).ok_or_else(|| FibrationError::Domain(format!("no root for point {a}")))?;
            let g = sample_c_sphere(ms, a, sign, r, 16, seed)
                .iter()
                .map(|x| fiber_gradient_residual(fm, x))
                .fold(0.0, f64::max);
            (Some(r), res, g)
        };
        roots.push(SphereRoot { point: a, sign, sphere_dim, radius, root_residual, gradient_residual });
    }
    let plus = roots.iter().filter(|r| r.sign > 0).count();
    let minus = roots.len() - plus;

    let n = ms.dim();
    let w = Complex::new(u, 0.0);
    let mut g = rng(seed, 97);
    let mut tube_min_rho = f64::INFINITY;
    let mut tube_samples = 0;
    let mut slice_min = f64::INFINITY;
    let mut slice_samples = 0;
    let nb = ms.base_sample_dim();
    for _ in 0..samples {
        let cube: Vec<f64> = (0..nb).map(|_| rand::Rng::gen::<f64>(&mut g)).collect();
        let (chart, q) = ms.sample_base(&cube);
        let dir = unit_vector(&mut g, n);
        // tube around Q_u
        let p = ms.covector_of_length(chart, &q, &dir, 1e-3);
        if let Some(y) = project_to_fiber(fm, &PhasePoint::in_chart(q.clone(), p, chart), w) {
            if ms.manifold.covector_norm2(y.chart, &y.q, &y.p).sqrt() < 0.1 {
                tube_samples += 1;
                tube_min_rho = tube_min_rho.min(RhoFn.eval(ms, y.chart, &y.q, &y.p));
            }
        }
        for &r in radii {
            let p = ms.covector_of_length(chart, &q, &dir, r);
            let Some(y) = project_to_fiber(fm, &PhasePoint::in_chart(q.clone(), p, chart), w) else { continue };
            if roots.iter().any(|s| s.radius.is_some() && distance_to_critical(ms, s.point, &y).is_finite() && fiber_gradient_residual(fm, &y) < 1e-6) {
                continue;
            }
            if let Ok(v) = slice_liouville(fm, &y) {
                slice_samples += 1;
                slice_min = slice_min.min(v);
            }
        }
    }
    Ok(WeinsteinReport { u, roots, plus, minus, tube_min_rho, tube_samples, slice_min, slice_samples })
}
