//! The coarse complexification `h⁰ = f⁰ + i g` of a Morse function near the
//! zero section, with the checks of its local properties.

use num_complex::Complex;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::geometry::{
    contact_lift, hamiltonian_lift, phase_directional, phase_gradient, upsilon, ChartId, GFn, GeometryError,
    MorseSystem, PhasePoint, PhaseScalar, PhaseVector, RhoFn,
};
use crate::linalg::{dot, norm, solve, Mat};
use crate::sampling::{rng, sphere_from_cube, unit_vector, Halton};
use crate::scalar::{hessian, lit, smoothstep5, Dual, Real, ScalarFn};

/// The cut-off `χ: M → [0,1]` multiplying the Hessian term.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
pub enum CutoffSpec {
    /// `χ ≡ 1`.
    #[default]
    Unit,
    /// `χ = 1` within chart distance `inner` of a critical point and `0`
    /// beyond `outer`.
    Balls { inner: f64, outer: f64 },
}

impl CutoffSpec {
    pub fn eval<S: Real>(&self, ms: &MorseSystem, chart: ChartId, q: &[S]) -> S {
        match *self {
            CutoffSpec::Unit => S::one(),
            CutoffSpec::Balls { inner, outer } => {
                let x = PhasePoint::in_chart(q.to_vec(), vec![S::zero(); q.len()], chart);
                let mut best = S::zero();
                for a in 0..ms.critical_points.len() {
                    let Ok(y) = ms.morse_coords(a, &x) else { continue };
                    let d = dot(&y.q, &y.q).sqrt();
                    let v = S::one() - smoothstep5((d - lit(inner)) / lit(outer - inner));
                    best = best.max(v);
                }
                best
            }
        }
    }

    pub fn validate(&self) -> Result<(), GeometryError> {
        match *self {
            CutoffSpec::Unit => Ok(()),
            CutoffSpec::Balls { inner, outer } if inner > 0.0 && outer > inner => Ok(()),
            _ => Err(GeometryError::Domain("cut-off needs 0 < inner < outer".into())),
        }
    }
}

/// `f⁰ = φ − ½ χ ∇²φ(p♯, p♯)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
pub struct F0Fn {
    pub chi: CutoffSpec,
}

impl PhaseScalar for F0Fn {
    fn eval<S: Real>(&self, ms: &MorseSystem, chart: ChartId, q: &[S], p: &[S]) -> S {
        let half: S = lit(0.5);
        ms.phi(chart, q) - half * self.chi.eval(ms, chart, q) * ms.cov_hess_pp(chart, q, p)
    }
}

/// `h⁰ = f⁰ + i g` for a Morse system.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComplexificationMap {
    pub ms: MorseSystem,
    pub chi: CutoffSpec,
}

impl ComplexificationMap {
    pub fn new(ms: MorseSystem) -> Self {
        Self { ms, chi: CutoffSpec::Unit }
    }

    pub fn f0(&self) -> F0Fn {
        F0Fn { chi: self.chi }
    }
}

/// `h⁰(x)`.
pub fn eval_h0<T: Real>(x: &PhasePoint<T>, cm: &ComplexificationMap) -> Complex<T> {
    let ms = &cm.ms;
    Complex::new(cm.f0().eval(ms, x.chart, &x.q, &x.p), GFn.eval(ms, x.chart, &x.q, &x.p))
}

/// Samples a phase point from a cube point: base point, covector direction,
/// and metric length uniform in `[r_lo, r_hi]`. Consumes
/// [`phase_sample_dim`] coordinates.
pub fn sample_phase(ms: &MorseSystem, u: &[f64], r_lo: f64, r_hi: f64) -> PhasePoint<f64> {
    let n = ms.dim();
    let nb = ms.base_sample_dim();
    let nd = (n - 1).max(1);
    let (chart, q) = ms.sample_base(&u[..nb]);
    let dir = sphere_from_cube(&u[nb..nb + nd], n);
    let r = r_lo + (r_hi - r_lo) * u[nb + nd];
    let p = ms.covector_of_length(chart, &q, &dir, r);
    let mut x = PhasePoint::in_chart(q, p, chart);
    let _ = ms.manifold.normalize(&mut x);
    x
}

pub fn phase_sample_dim(ms: &MorseSystem) -> usize {
    ms.base_sample_dim() + (ms.dim() - 1).max(1) + 1
}

/// Phase-space distance from `x` to `(a, 0)` in Morse coordinates.
pub fn distance_to_critical(ms: &MorseSystem, a: usize, x: &PhasePoint<f64>) -> f64 {
    match ms.morse_coords(a, x) {
        Ok(y) => (dot(&y.q, &y.q) + dot(&y.p, &y.p)).sqrt(),
        Err(_) => f64::INFINITY,
    }
}

struct Joint<'a, F> {
    f: &'a F,
    ms: &'a MorseSystem,
    chart: ChartId,
    n: usize,
}

impl<F: PhaseScalar> ScalarFn for Joint<'_, F> {
    fn call<S: Real>(&self, x: &[S]) -> S {
        self.f.eval(self.ms, self.chart, &x[..self.n], &x[self.n..])
    }
}

/// Hessian of a phase function in the coordinates `(q, p)` of `x`'s chart.
pub fn phase_hessian<F: PhaseScalar>(f: &F, ms: &MorseSystem, x: &PhasePoint<f64>) -> Mat<f64> {
    hessian(&Joint { f, ms, chart: x.chart, n: x.dim() }, &x.to_state())
}

/// Outcome of [`verify_h0_critical`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct H0CriticalReport {
    pub seeds: usize,
    pub converged: usize,
    /// Indices of critical points of `φ` hit by some root.
    pub found: Vec<usize>,
    /// Roots away from `Γ_φ`, as `(chart, q, p)`.
    pub extra: Vec<(ChartId, Vec<f64>, Vec<f64>)>,
    /// Max deviation of the chart Hessian of `h⁰` from `2 diag(ε)`.
    pub hessian_error: f64,
    pub pass: bool,
}

/// Newton search for critical points of `h⁰` in `W_radius` from random
/// seeds, plus the complex Hessian in Morse charts.
pub fn verify_h0_critical(cm: &ComplexificationMap, radius: f64, seeds: usize, seed: u64) -> H0CriticalReport {
    let ms = &cm.ms;
    let f0 = cm.f0();
    let halton = Halton::new(phase_sample_dim(ms), seed);
    let roots: Vec<Option<PhasePoint<f64>>> = (0..seeds as u64)
        .into_par_iter()
        .map(|i| newton_dh0(cm, sample_phase(ms, &halton.point(i), 0.0, radius), 80))
        .collect();
    let mut found = Vec::new();
    let mut extra = Vec::new();
    let mut converged = 0;
    for x in roots.into_iter().flatten() {
        if x.p.iter().map(|v| v * v).sum::<f64>().sqrt() > radius * 1.5 {
            continue;
        }
        converged += 1;
        match (0..ms.critical_points.len()).find(|&a| distance_to_critical(ms, a, &x) < 1e-7) {
            Some(a) => {
                if !found.contains(&a) {
                    found.push(a);
                }
            }
            None => {
                if extra.len() < 20 {
                    extra.push((x.chart, x.q.clone(), x.p.clone()));
                }
            }
        }
    }
    found.sort_unstable();

    let mut hessian_error: f64 = 0.0;
    for (a, cp) in ms.critical_points.iter().enumerate() {
        let n = cp.signature.len();
        let x = ms.from_morse(a, &vec![0.0; n], &vec![0.0; n]);
        let hf = phase_hessian(&f0, ms, &x);
        let hg = phase_hessian(&GFn, ms, &x);
        for i in 0..n {
            for j in 0..n {
                let e = if i == j { 2.0 * cp.signature[i] as f64 } else { 0.0 };
                // ∂²h/∂z_i∂z_j = ∂²h/∂q_i∂q_j for a holomorphic chart expression
                hessian_error = hessian_error.max((hf[i][j] - e).abs()).max(hg[i][j].abs());
                hessian_error = hessian_error.max((hf[n + i][n + j] + e).abs());
                hessian_error = hessian_error.max((hg[i][n + j] - ms.nu_sign * e).abs());
            }
        }
    }
    let pass = extra.is_empty() && found.len() == ms.critical_points.len() && hessian_error < 1e-8;
    H0CriticalReport { seeds, converged, found, extra, hessian_error, pass }
}

/// Gauss–Newton on `(df⁰, dg) = 0`.
fn newton_dh0(cm: &ComplexificationMap, mut x: PhasePoint<f64>, iters: usize) -> Option<PhasePoint<f64>> {
    let ms = &cm.ms;
    let f0 = cm.f0();
    let n = x.dim();
    for _ in 0..iters {
        let (_, df) = phase_gradient(&f0, ms, &x);
        let (_, dg) = phase_gradient(&GFn, ms, &x);
        let r: Vec<f64> = df.to_state().into_iter().chain(dg.to_state()).collect();
        if norm(&r) < 1e-12 {
            return Some(x);
        }
        let hf = phase_hessian(&f0, ms, &x);
        let hg = phase_hessian(&GFn, ms, &x);
        let jac: Mat<f64> = hf.into_iter().chain(hg).collect();
        let m = 2 * n;
        let jtj: Mat<f64> = (0..m)
            .map(|i| (0..m).map(|j| (0..2 * m).map(|k| jac[k][i] * jac[k][j]).sum::<f64>() + if i == j { 1e-14 } else { 0.0 }).collect())
            .collect();
        let jtr: Vec<f64> = (0..m).map(|i| (0..2 * m).map(|k| jac[k][i] * r[k]).sum()).collect();
        let step = solve(&jtj, &jtr, 1e-300)?;
        let smax = step.iter().fold(0.0f64, |a, b| a.max(b.abs()));
        let damp = if smax > 0.5 { 0.5 / smax } else { 1.0 };
        let y: Vec<f64> = x.to_state().iter().zip(&step).map(|(a, s)| a - damp * s).collect();
        x = PhasePoint::from_state(&y, x.chart);
        if ms.manifold.normalize(&mut x).is_err() {
            return None;
        }
    }
    let (_, df) = phase_gradient(&f0, ms, &x);
    let (_, dg) = phase_gradient(&GFn, ms, &x);
    (df.norm() + dg.norm() < 1e-10).then_some(x)
}

/// One level of the δ-scan.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeltaLevel {
    pub delta: f64,
    pub min_margin_interior: f64,
    pub min_margin_sphere: f64,
    pub accepted: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeltaScanReport {
    /// Largest accepted grid value, 0 if none.
    pub delta: f64,
    pub min_margin_interior: f64,
    pub min_margin_sphere: f64,
    pub samples_interior: usize,
    pub samples_sphere: usize,
    pub levels: Vec<DeltaLevel>,
}

/// Dyadic scan `δ = δ₀ 2^{−k}`, `k < 12`, from the smallest chart radius.
/// A level is accepted when `ν̃·f⁰ > 0` on samples of `W_δ` away from small
/// balls around `Γ_φ`, and `ν̄·f⁰ > 0` on samples of `V_δ` away from the
/// spheres `C_a^±`.
pub fn scan_delta(cm: &ComplexificationMap, samples: usize, seed: u64) -> Result<DeltaScanReport, GeometryError> {
    let ms = &cm.ms;
    let d0 = ms
        .critical_points
        .iter()
        .map(|c| c.chart_radius.min(ms.sample_radius))
        .fold(f64::INFINITY, f64::min);
    let halton = Halton::new(phase_sample_dim(ms), seed);
    let mut levels = Vec::new();
    for k in 0..12 {
        let delta = d0 / 2f64.powi(k);
        let interior = lyapunov_margin_interior(cm, delta, samples, &halton);
        let sphere = lyapunov_margin_sphere(cm, delta, samples, &halton);
        let accepted = interior > 0.0 && sphere > 0.0;
        levels.push(DeltaLevel { delta, min_margin_interior: interior, min_margin_sphere: sphere, accepted });
        if accepted {
            return Ok(DeltaScanReport {
                delta,
                min_margin_interior: interior,
                min_margin_sphere: sphere,
                samples_interior: samples,
                samples_sphere: samples,
                levels,
            });
        }
    }
    Err(GeometryError::Domain(format!("no admissible δ down to {:e}", d0 / 2048.0)))
}

fn excluded_ball(ms: &MorseSystem, x: &PhasePoint<f64>) -> bool {
    ms.critical_points
        .iter()
        .enumerate()
        .any(|(a, cp)| distance_to_critical(ms, a, x) < 1e-3 * cp.chart_radius.min(ms.sample_radius))
}

fn lyapunov_margin_interior(cm: &ComplexificationMap, delta: f64, samples: usize, halton: &Halton) -> f64 {
    let ms = &cm.ms;
    let f0 = cm.f0();
    (0..samples as u64)
        .into_par_iter()
        .filter_map(|i| {
            let x = sample_phase(ms, &halton.point(i), 0.0, delta);
            if excluded_ball(ms, &x) {
                return None;
            }
            let v = hamiltonian_lift(&x, ms).ok()?;
            Some(phase_directional(&f0, ms, &x, &v))
        })
        .reduce(|| f64::INFINITY, f64::min)
}

/// Distance from `x` to the nearest sphere `C_a^±` (Morse chart distance of
/// the base point plus the distance of the unit covector to the sphere).
pub fn distance_to_c_spheres(ms: &MorseSystem, x: &PhasePoint<f64>) -> f64 {
    let mut best = f64::INFINITY;
    for (a, cp) in ms.critical_points.iter().enumerate() {
        let Ok(y) = ms.morse_coords(a, x) else { continue };
        let dq = norm(&y.q);
        let np = norm(&y.p);
        if np == 0.0 {
            continue;
        }
        for sign in [-1i8, 1] {
            // C^+ keeps the ε = −1 entries, C^− the ε = +1 entries
            let off: f64 = y
                .p
                .iter()
                .zip(&cp.signature)
                .filter(|(_, &e)| e == sign)
                .map(|(v, _)| v * v)
                .sum::<f64>()
                .sqrt()
                / np;
            best = best.min(dq + off);
        }
    }
    best
}

fn lyapunov_margin_sphere(cm: &ComplexificationMap, delta: f64, samples: usize, halton: &Halton) -> f64 {
    let ms = &cm.ms;
    let f0 = cm.f0();
    (0..samples as u64)
        .into_par_iter()
        .filter_map(|i| {
            let x = sample_phase(ms, &halton.point(i), delta, delta);
            if distance_to_c_spheres(ms, &x) < 1e-3 {
                return None;
            }
            let v = contact_lift(&x, ms).ok()?;
            Some(phase_directional(&f0, ms, &x, &v))
        })
        .reduce(|| f64::INFINITY, f64::min)
}

/// Max of `|ν̃·f⁰ − 4Σ|z_j|²|` over Morse-chart samples, `z = q + ip`.
pub fn lyapunov_chart_identity(cm: &ComplexificationMap, samples: usize, seed: u64) -> f64 {
    let ms = &cm.ms;
    let f0 = cm.f0();
    let mut r = rng(seed, 41);
    let mut worst: f64 = 0.0;
    for (a, cp) in ms.critical_points.iter().enumerate() {
        let n = cp.signature.len();
        let rad = 0.9 * cp.chart_radius.min(ms.sample_radius);
        for _ in 0..samples {
            let qm: Vec<f64> = unit_vector(&mut r, n).iter().map(|v| v * rad * rand::Rng::gen::<f64>(&mut r)).collect();
            let pm: Vec<f64> = unit_vector(&mut r, n).iter().map(|v| v * rand::Rng::gen::<f64>(&mut r)).collect();
            let x = ms.from_morse(a, &qm, &pm);
            let Ok(v) = hamiltonian_lift(&x, ms) else { continue };
            let lhs = phase_directional(&f0, ms, &x, &v);
            let rhs = 4.0 * (dot(&qm, &qm) + dot(&pm, &pm));
            worst = worst.max((lhs - rhs).abs());
        }
    }
    worst
}

/// A critical sphere `C_a^±` of `f_r⁰`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SphereValue {
    pub point: usize,
    pub sign: i8,
    /// `−1` for the empty sphere.
    pub sphere_dim: i32,
    pub value: f64,
}

/// Dimension of `C_a^±`: `ind(a) − 1` for `+`, `n − ind(a) − 1` for `−`.
pub fn c_sphere_dim(ms: &MorseSystem, a: usize, sign: i8) -> i32 {
    let cp = &ms.critical_points[a];
    let ind = cp.index() as i32;
    if sign > 0 {
        ind - 1
    } else {
        cp.signature.len() as i32 - ind - 1
    }
}

/// Critical values `f_r⁰(C_a^±) = φ(a) ± r²` on `V_r`.
pub fn critical_values_f0r(ms: &MorseSystem, r: f64) -> Vec<SphereValue> {
    let mut out = Vec::new();
    for (a, cp) in ms.critical_points.iter().enumerate() {
        for sign in [1i8, -1] {
            out.push(SphereValue {
                point: a,
                sign,
                sphere_dim: c_sphere_dim(ms, a, sign),
                value: cp.value + sign as f64 * r * r,
            });
        }
    }
    out
}

/// Samples of `C_a^±` on `V_r`; empty when the sphere is.
pub fn sample_c_sphere(ms: &MorseSystem, a: usize, sign: i8, r: f64, count: usize, seed: u64) -> Vec<PhasePoint<f64>> {
    let cp = &ms.critical_points[a];
    let idx: Vec<usize> = (0..cp.signature.len()).filter(|&j| cp.signature[j] == -sign).collect();
    if idx.is_empty() {
        return Vec::new();
    }
    let n = cp.signature.len();
    let mut g = rng(seed, 43 + a as u64);
    (0..count)
        .map(|_| {
            let d = unit_vector(&mut g, idx.len());
            let mut p = vec![0.0; n];
            for (k, &j) in idx.iter().enumerate() {
                p[j] = r * d[k];
            }
            ms.from_morse(a, &vec![0.0; n], &p)
        })
        .collect()
}

/// `ν̄·υ` at a point over a Morse chart.
pub fn nu_bar_dot_upsilon<T: Real>(x: &PhasePoint<T>, ms: &MorseSystem) -> Result<T, GeometryError> {
    let q64: Vec<f64> = x.q.iter().map(|v| v.to_f64().unwrap_or(f64::NAN)).collect();
    let inside = ms
        .critical_points
        .iter()
        .enumerate()
        .any(|(a, cp)| ms.chart_distance(a, x.chart, &q64) < cp.chart_radius);
    if !inside {
        return Err(GeometryError::Domain("point is not over a Morse chart".into()));
    }
    let v = contact_lift(x, ms)?;
    let xd = PhasePoint {
        q: x.q.iter().zip(&v.dq).map(|(&a, &b)| Dual::new(a, b)).collect(),
        p: x.p.iter().zip(&v.dp).map(|(&a, &b)| Dual::new(a, b)).collect(),
        chart: x.chart,
    };
    Ok(upsilon(&xd, ms)?.eps)
}

/// Max of `|f⁰ − φ|` and of the gap between their differentials over
/// samples with `|p| ≤ r`.
pub fn c1_gap(cm: &ComplexificationMap, r: f64, samples: usize, seed: u64) -> (f64, f64) {
    let ms = &cm.ms;
    let f0 = cm.f0();
    let halton = Halton::new(phase_sample_dim(ms), seed);
    (0..samples as u64)
        .into_par_iter()
        .map(|i| {
            let x = sample_phase(ms, &halton.point(i), 0.0, r);
            let (v, d) = phase_gradient(&f0, ms, &x);
            let (phi, dphi) = ms.dphi(x.chart, &x.q);
            let gq: f64 = d.dq.iter().zip(&dphi).map(|(a, b)| (a - b) * (a - b)).sum();
            let gp: f64 = dot(&d.dp, &d.dp);
            ((v - phi).abs(), (gq + gp).sqrt())
        })
        .reduce(|| (0.0, 0.0), |a, b| (a.0.max(b.0), a.1.max(b.1)))
}

/// Norm of the part of `df⁰` not proportional to `dρ`: zero exactly at the
/// critical points of `f⁰` restricted to the level set of `ρ`.
pub fn vr_projected_gradient(cm: &ComplexificationMap, x: &PhasePoint<f64>) -> f64 {
    let (_, df) = phase_gradient(&cm.f0(), &cm.ms, x);
    let (_, dr) = phase_gradient(&RhoFn, &cm.ms, x);
    let (a, b) = (df.to_state(), dr.to_state());
    let c = dot(&a, &b) / dot(&b, &b);
    let res: Vec<f64> = a.iter().zip(&b).map(|(u, v)| u - c * v).collect();
    norm(&res)
}

/// `|ν̄|` at `x`.
pub fn contact_lift_norm(ms: &MorseSystem, x: &PhasePoint<f64>) -> Result<f64, GeometryError> {
    let v: PhaseVector<f64> = contact_lift(x, ms)?;
    Ok(v.norm())
}
