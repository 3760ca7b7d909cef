//! Slope functions on the sphere bundle, the cut-off pair and the blended
//! Lyapunov function `f` with `h = f + i g`.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::complexification::{distance_to_critical, phase_sample_dim, sample_phase, ComplexificationMap, F0Fn};
use crate::fibration::{FibrationMap, LyapunovKind};
use crate::geometry::{
    contact_lift, hamiltonian_lift, phase_directional, phase_gradient, upsilon, ChartId, GFn, GeometryError,
    MorseSystem, PhasePoint, PhaseScalar,
};
use crate::linalg::{dot, norm};
use crate::sampling::{rng, unit_vector, Halton};
use crate::scalar::{lit, Real};

#[derive(Debug, Error)]
pub enum RearrangementError {
    #[error("no slope function is available for scenario {0}")]
    SlopeUnavailable(String),
    #[error("slope function rejected: {0}")]
    SlopeRejected(String),
    #[error("cut-off pair rejected: {0}")]
    Cutoff(String),
    #[error("search exhausted after {steps} steps; best margins {best:?}")]
    SearchExhausted { steps: usize, best: [f64; 3] },
    #[error("Lyapunov margin {0:e} is not positive")]
    Refused(f64),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum SlopeKind {
    /// `sinh(κφ)/sinh κ`, for functions with values in `[−1, 1]`.
    SinhHeight { kappa: f64 },
    /// `υ/2`.
    HalfUpsilon,
}

/// A 0-homogeneous function `f_∞` on `T*M \ M`, read as a function on the
/// sphere bundle.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SlopeFunction {
    pub kind: SlopeKind,
    /// `+1`, or `−1` for the negated candidate.
    pub sign: f64,
}

impl SlopeFunction {
    /// The library candidate for a built-in scenario. The torus has none:
    /// `υ` changes sign over the saddles, so no function of `φ` alone works.
    pub fn for_scenario(ms: &MorseSystem) -> Result<Self, RearrangementError> {
        let kind = if ms.name.starts_with("sphere") {
            SlopeKind::SinhHeight { kappa: 4.0 }
        } else if ms.name.starts_with("quadric") {
            SlopeKind::HalfUpsilon
        } else {
            return Err(RearrangementError::SlopeUnavailable(ms.name.clone()));
        };
        Ok(Self { kind, sign: 1.0 })
    }

    pub fn negated(self) -> Self {
        Self { sign: -self.sign, ..self }
    }
}

impl PhaseScalar for SlopeFunction {
    fn eval<S: Real>(&self, ms: &MorseSystem, chart: ChartId, q: &[S], p: &[S]) -> S {
        let v = match self.kind {
            SlopeKind::SinhHeight { kappa } => {
                let k: S = lit(kappa);
                (k * ms.phi(chart, q)).sinh() / k.sinh()
            }
            SlopeKind::HalfUpsilon => {
                let x = PhasePoint::in_chart(q.to_vec(), p.to_vec(), chart);
                upsilon(&x, ms).map(|u| u * lit(0.5)).unwrap_or_else(|_| S::nan())
            }
        };
        v * lit(self.sign)
    }
}

/// Sampled points of `A^+` (`sign > 0`) or `A^−`: over the Morse chart of
/// `a`, `A^−` has `q` in the `ε = −1` directions and unit `p` in the
/// `ε = +1` directions; `A^+` the other way round.
pub fn sample_a_set(ms: &MorseSystem, sign: i8, per_point: usize, seed: u64) -> Vec<PhasePoint<f64>> {
    let mut g = rng(seed, 71);
    let mut out = Vec::new();
    for (a, cp) in ms.critical_points.iter().enumerate() {
        let n = cp.signature.len();
        let qi: Vec<usize> = (0..n).filter(|&j| cp.signature[j] == sign).collect();
        let pi: Vec<usize> = (0..n).filter(|&j| cp.signature[j] == -sign).collect();
        if pi.is_empty() {
            continue;
        }
        let rad = 0.9 * cp.chart_radius.min(ms.sample_radius);
        for _ in 0..per_point {
            let mut qm = vec![0.0; n];
            if !qi.is_empty() {
                let d = unit_vector(&mut g, qi.len());
                let s = rad * rand::Rng::gen::<f64>(&mut g);
                for (k, &j) in qi.iter().enumerate() {
                    qm[j] = s * d[k];
                }
            }
            let d = unit_vector(&mut g, pi.len());
            let mut pm = vec![0.0; n];
            for (k, &j) in pi.iter().enumerate() {
                pm[j] = d[k];
            }
            out.push(ms.from_morse(a, &qm, &pm));
        }
    }
    out
}

/// Outcome of [`validate_slope`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SlopeReport {
    pub a_samples: usize,
    /// `min f_∞` on `A^+` and `max f_∞` on `A^−`.
    pub a_plus_min: f64,
    pub a_minus_max: f64,
    /// Sampled minimum of `(ν̄·f_∞) + υ f_∞`.
    pub lyapunov_min: f64,
    /// Sampled minimum of `υ f_∞` over the critical neighbourhoods.
    pub upsilon_product_min: f64,
    pub worst: Option<(ChartId, Vec<f64>, Vec<f64>)>,
    pub failures: Vec<String>,
    pub pass: bool,
}

/// `(ν̄·f_∞) + υ f_∞` at `x`.
pub fn slope_lyapunov(sf: &SlopeFunction, ms: &MorseSystem, x: &PhasePoint<f64>) -> Result<f64, GeometryError> {
    let v = contact_lift(x, ms)?;
    Ok(phase_directional(sf, ms, x, &v) + upsilon(x, ms)? * sf.eval(ms, x.chart, &x.q, &x.p))
}

/// Checks the sign on `A^±`, positivity of `(ν̄·f_∞) + υ f_∞` and
/// `υ f_∞ ≥ 0` over the Morse charts.
pub fn validate_slope(sf: &SlopeFunction, ms: &MorseSystem, samples: usize, seed: u64) -> SlopeReport {
    let mut failures = Vec::new();
    let ap = sample_a_set(ms, 1, 200, seed);
    let am = sample_a_set(ms, -1, 200, seed + 1);
    let fe = |x: &PhasePoint<f64>| sf.eval(ms, x.chart, &x.q, &x.p);
    let a_plus_min = ap.iter().map(fe).fold(f64::INFINITY, f64::min);
    let a_minus_max = am.iter().map(fe).fold(f64::NEG_INFINITY, f64::max);
    if a_plus_min <= 0.0 {
        failures.push(format!("f_inf takes the value {a_plus_min:e} on A+"));
    }
    if a_minus_max >= 0.0 {
        failures.push(format!("f_inf takes the value {a_minus_max:e} on A-"));
    }

    let halton = Halton::new(phase_sample_dim(ms), seed);
    let vals: Vec<(f64, f64, PhasePoint<f64>)> = (0..samples as u64)
        .into_par_iter()
        .filter_map(|i| {
            let x = sample_phase(ms, &halton.point(i), 1.0, 1.0);
            let l = slope_lyapunov(sf, ms, &x).ok()?;
            let inside = ms
                .critical_points
                .iter()
                .enumerate()
                .any(|(a, cp)| ms.chart_distance(a, x.chart, &x.q) < cp.chart_radius.min(ms.sample_radius));
            let u = if inside { upsilon(&x, ms).ok()? * fe(&x) } else { f64::INFINITY };
            Some((l, u, x))
        })
        .collect();
    let (mut lyapunov_min, mut upsilon_product_min, mut worst) = (f64::INFINITY, f64::INFINITY, None);
    for (l, u, x) in &vals {
        if *l < lyapunov_min {
            lyapunov_min = *l;
            worst = Some((x.chart, x.q.clone(), x.p.clone()));
        }
        upsilon_product_min = upsilon_product_min.min(*u);
    }
    if !(lyapunov_min > 0.0) {
        failures.push(format!("(nu_bar . f_inf) + upsilon f_inf reaches {lyapunov_min:e}"));
    }
    if upsilon_product_min < 0.0 {
        failures.push(format!("upsilon f_inf reaches {upsilon_product_min:e} over a chart"));
    }
    SlopeReport {
        a_samples: ap.len() + am.len(),
        a_plus_min,
        a_minus_max,
        lyapunov_min,
        upsilon_product_min,
        worst,
        pass: failures.is_empty(),
        failures,
    }
}

/// Ramp `[0,1] → [0,1]`: linear with slope `1/(1−β)` joined to the constants
/// by sextic pieces, `C²` overall.
pub fn ramp<S: Real>(x: S) -> S {
    let b: S = lit(0.1);
    let one = S::one();
    let j = |t: S| t * t * t * t * (lit::<S>(2.5) - lit::<S>(3.0) * t + t * t);
    if x <= S::zero() {
        S::zero()
    } else if x >= one {
        one
    } else if x <= b {
        b * j(x / b) / (one - b)
    } else if x >= one - b {
        ((one - b) - b * j((one - x) / b)) / (one - b)
    } else {
        (b * lit(0.5) + x - b) / (one - b)
    }
}

/// Largest slope of [`ramp`].
pub const RAMP_MAX_SLOPE: f64 = 1.0 / 0.9;

/// `τ₀` falls from 1 to 0 on `[δ/2, δ]`; `τ₁` rises from 0 to `C` on `[ε/2, ε]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CutoffPair {
    pub delta: f64,
    pub epsilon: f64,
    pub c: f64,
}

impl CutoffPair {
    pub fn tau0<S: Real>(&self, r: S) -> S {
        let h: S = lit(self.delta * 0.5);
        S::one() - ramp((r - h) / h)
    }

    pub fn tau1<S: Real>(&self, r: S) -> S {
        let h: S = lit(self.epsilon * 0.5);
        ramp((r - h) / h) * lit(self.c)
    }

    pub fn tau0_prime(&self, r: f64) -> f64 {
        self.tau0(crate::scalar::Dual::variable(r)).eps
    }

    pub fn tau1_prime(&self, r: f64) -> f64 {
        self.tau1(crate::scalar::Dual::variable(r)).eps
    }

    /// Checks the profile invariants on a grid of `[0, 2δ]`.
    pub fn validate(&self) -> Result<(), RearrangementError> {
        let bad = |m: String| Err(RearrangementError::Cutoff(m));
        if !(self.delta > 0.0 && self.epsilon > 0.0 && self.c > 0.0) {
            return bad("δ, ε and C must be positive".into());
        }
        if self.epsilon > 0.25 * self.delta {
            return bad(format!("ε = {} is not small against δ/2 = {}", self.epsilon, 0.5 * self.delta));
        }
        for i in 0..=4000 {
            let r = 2.0 * self.delta * i as f64 / 4000.0;
            let (t0, t1) = (self.tau0(r), self.tau1(r));
            let (d0, d1) = (self.tau0_prime(r), self.tau1_prime(r));
            if !(0.0..=1.0).contains(&t0) || !(0.0..=self.c).contains(&t1) {
                return bad(format!("profile out of range at r = {r}"));
            }
            if d0 > 0.0 || d0.abs() > 3.0 / self.delta {
                return bad(format!("τ0' = {d0} at r = {r}"));
            }
            if d1 < 0.0 || d1 >= 3.0 * self.c / self.epsilon {
                return bad(format!("τ1' = {d1} at r = {r}"));
            }
            if d0 * d1 != 0.0 {
                return bad(format!("τ0' and τ1' overlap at r = {r}"));
            }
            if (r <= 0.5 * self.delta && t0 != 1.0) || (r >= self.delta && t0 != 0.0) {
                return bad(format!("τ0 plateau broken at r = {r}"));
            }
            if (r <= 0.5 * self.epsilon && t1 != 0.0) || (r >= self.epsilon && t1 != self.c) {
                return bad(format!("τ1 plateau broken at r = {r}"));
            }
        }
        Ok(())
    }

    /// `(r, τ₀, τ₁)` table.
    pub fn table(&self, points: usize) -> Vec<[f64; 3]> {
        (0..points)
            .map(|i| {
                let r = 1.25 * self.delta * i as f64 / (points - 1).max(1) as f64;
                [r, self.tau0(r), self.tau1(r)]
            })
            .collect()
    }
}

/// `f = τ₀(r) f⁰ + τ₁(r) r f_∞` with `r = |p|`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AssembledLyapunov {
    pub f0: F0Fn,
    pub slope: SlopeFunction,
    pub cutoff: CutoffPair,
}

impl PhaseScalar for AssembledLyapunov {
    fn eval<S: Real>(&self, ms: &MorseSystem, chart: ChartId, q: &[S], p: &[S]) -> S {
        let r2 = ms.manifold.covector_norm2(chart, q, p);
        let h: S = lit(0.5 * self.cutoff.epsilon);
        if r2 <= h * h {
            return self.f0.eval(ms, chart, q, p);
        }
        let r = r2.sqrt();
        let far = self.cutoff.tau1(r) * r * self.slope.eval(ms, chart, q, p);
        if r >= lit(self.cutoff.delta) {
            return far;
        }
        self.cutoff.tau0(r) * self.f0.eval(ms, chart, q, p) + far
    }
}

/// Builds `f` after checking the cut-off invariants.
pub fn blend(cm: &ComplexificationMap, sf: &SlopeFunction, cp: &CutoffPair) -> Result<AssembledLyapunov, RearrangementError> {
    cp.validate()?;
    Ok(AssembledLyapunov { f0: cm.f0(), slope: *sf, cutoff: *cp })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Region {
    /// `r ≤ δ/2`, away from small balls around the critical points.
    Inner,
    /// `δ/2 ≤ r ≤ δ`.
    Middle,
    /// `δ ≤ r ≤ 2δ`; the sign is scale invariant beyond.
    Outer,
}

/// Sampled `(x, ν̃·f)` in a region.
pub fn region_values(al: &AssembledLyapunov, ms: &MorseSystem, region: Region, samples: usize, seed: u64) -> Vec<(PhasePoint<f64>, f64)> {
    let d = al.cutoff.delta;
    let (lo, hi) = match region {
        Region::Inner => (0.0, 0.5 * d),
        Region::Middle => (0.5 * d, d),
        Region::Outer => (d, 2.0 * d),
    };
    let halton = Halton::new(phase_sample_dim(ms), seed);
    (0..samples as u64)
        .into_par_iter()
        .filter_map(|i| {
            let x = sample_phase(ms, &halton.point(i), lo, hi);
            if region == Region::Inner
                && ms
                    .critical_points
                    .iter()
                    .enumerate()
                    .any(|(a, cp)| distance_to_critical(ms, a, &x) < 1e-3 * cp.chart_radius.min(ms.sample_radius))
            {
                return None;
            }
            let v = hamiltonian_lift(&x, ms).ok()?;
            let l = phase_directional(al, ms, &x, &v);
            Some((x, l))
        })
        .collect()
}

fn region_margin(al: &AssembledLyapunov, ms: &MorseSystem, region: Region, samples: usize, seed: u64) -> f64 {
    region_values(al, ms, region, samples, seed)
        .into_iter()
        .map(|(_, v)| if v.is_nan() { f64::NEG_INFINITY } else { v })
        .fold(f64::INFINITY, f64::min)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchStep {
    pub epsilon: f64,
    pub c: f64,
    /// Inner, middle, outer.
    pub margins: [f64; 3],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchReport {
    pub cutoff: CutoffPair,
    pub margins: [f64; 3],
    pub samples_per_region: usize,
    pub history: Vec<SearchStep>,
}

/// Doubling search from `C = 1`, `ε = δ/8`: `C` doubles while the middle
/// region fails, `ε` halves while the inner region fails.
pub fn search_constants(
    cm: &ComplexificationMap,
    sf: &SlopeFunction,
    delta: f64,
    samples: usize,
    seed: u64,
) -> Result<SearchReport, RearrangementError> {
    const BUDGET: usize = 20;
    let ms = &cm.ms;
    let mut cp = CutoffPair { delta, epsilon: delta / 8.0, c: 1.0 };
    let mut history = Vec::new();
    let mut best = [f64::NEG_INFINITY; 3];
    for _ in 0..=BUDGET {
        let al = blend(cm, sf, &cp)?;
        let margins = [Region::Inner, Region::Middle, Region::Outer].map(|r| region_margin(&al, ms, r, samples, seed));
        history.push(SearchStep { epsilon: cp.epsilon, c: cp.c, margins });
        if margins.iter().fold(f64::INFINITY, |a, &b| a.min(b)) > best.iter().fold(f64::INFINITY, |a, &b| a.min(b)) {
            best = margins;
        }
        if margins.iter().all(|&m| m > 0.0) {
            return Ok(SearchReport { cutoff: cp, margins, samples_per_region: samples, history });
        }
        if margins[2] <= 0.0 {
            break;
        }
        if margins[1] <= 0.0 {
            cp.c *= 2.0;
        } else {
            cp.epsilon *= 0.5;
        }
    }
    Err(RearrangementError::SearchExhausted { steps: history.len(), best })
}

/// Outcome of the symplectic spot check in [`assemble_h`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpotCheck {
    pub samples: usize,
    /// Smallest `df(ν̃)`, which is `ω(X_f, X_g)`.
    pub min_lyapunov: f64,
    /// Smallest `|df ∧ dg| / (|df| |dg|)`.
    pub min_independence: f64,
    pub critical_values: Vec<f64>,
}

/// Packages `h = f + i g` after the spot check at regular samples.
pub fn assemble_h(
    cm: &ComplexificationMap,
    al: &AssembledLyapunov,
    samples: usize,
    seed: u64,
) -> Result<(FibrationMap, SpotCheck), RearrangementError> {
    let ms = &cm.ms;
    let halton = Halton::new(phase_sample_dim(ms), seed);
    let top = 2.0 * al.cutoff.delta;
    let vals: Vec<(f64, f64)> = (0..samples as u64)
        .into_par_iter()
        .filter_map(|i| {
            let x = sample_phase(ms, &halton.point(i), 0.0, top);
            if ms
                .critical_points
                .iter()
                .enumerate()
                .any(|(a, cp)| distance_to_critical(ms, a, &x) < 1e-3 * cp.chart_radius.min(ms.sample_radius))
            {
                return None;
            }
            let v = hamiltonian_lift(&x, ms).ok()?;
            let l = phase_directional(al, ms, &x, &v);
            let (_, df) = phase_gradient(al, ms, &x);
            let (_, dg) = phase_gradient(&GFn, ms, &x);
            let (a, b) = (df.to_state(), dg.to_state());
            let (na, nb) = (norm(&a), norm(&b));
            let c = dot(&a, &b) / (na * nb);
            Some((l, (1.0 - c * c).max(0.0).sqrt()))
        })
        .collect();
    let min_lyapunov = vals.iter().map(|v| v.0).fold(f64::INFINITY, f64::min);
    let min_independence = vals.iter().map(|v| v.1).fold(f64::INFINITY, f64::min);
    if !(min_lyapunov > 0.0) {
        return Err(RearrangementError::Refused(min_lyapunov));
    }
    let fm = FibrationMap { ms: ms.clone(), kind: LyapunovKind::Assembled(*al) };
    let critical_values = ms
        .critical_points
        .iter()
        .enumerate()
        .map(|(a, cp)| {
            let n = cp.signature.len();
            fm.eval(&ms.from_morse(a, &vec![0.0; n], &vec![0.0; n])).re
        })
        .collect();
    Ok((fm, SpotCheck { samples: vals.len(), min_lyapunov, min_independence, critical_values }))
}

/// Spread of `f_r / r` over `r ∈ [δ, 8δ]` along the ray through `x`.
pub fn far_field_spread(al: &AssembledLyapunov, ms: &MorseSystem, x: &PhasePoint<f64>) -> f64 {
    let r0 = ms.manifold.covector_norm2(x.chart, &x.q, &x.p).sqrt();
    let vals: Vec<f64> = (0..8)
        .map(|k| {
            let r = al.cutoff.delta * (1.0 + k as f64);
            let p: Vec<f64> = x.p.iter().map(|v| v * r / r0).collect();
            al.eval(ms, x.chart, &x.q, &p) / r
        })
        .collect();
    let (lo, hi) = vals.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &v| (a.min(v), b.max(v)));
    hi - lo
}

/// Whether `f` takes both signs on sampled points of `V_r`, so that its zero
/// level meets `V_r`.
pub fn zero_level_meets(al: &AssembledLyapunov, ms: &MorseSystem, r: f64, samples: usize, seed: u64) -> bool {
    let halton = Halton::new(phase_sample_dim(ms), seed);
    let (mut pos, mut neg) = (false, false);
    for i in 0..samples as u64 {
        let x = sample_phase(ms, &halton.point(i), r, r);
        let v = al.eval(ms, x.chart, &x.q, &x.p);
        pos |= v > 0.0;
        neg |= v < 0.0;
        if pos && neg {
            return true;
        }
    }
    false
}
