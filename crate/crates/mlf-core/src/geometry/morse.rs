use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::manifold::wrap_period;
use super::{ChartId, GeometryError, ManifoldKind, ManifoldModel, PhasePoint};
use crate::linalg::{dot, Mat};
use crate::sampling::{sphere_from_cube, Halton};
use crate::scalar::{gradient, hessian, lit, smoothstep5, Real, ScalarFn};

/// Torus critical data: location, value, signature.
const TORUS_CRIT: [([f64; 2], f64, [i8; 2]); 4] = [
    ([0.0, 0.0], 6.0, [-1, -1]),
    ([0.0, std::f64::consts::PI], 2.0, [-1, 1]),
    ([std::f64::consts::PI, std::f64::consts::PI], -2.0, [1, -1]),
    ([std::f64::consts::PI, 0.0], -6.0, [1, 1]),
];

/// The Morse function, by scenario family.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Potential {
    /// `Σ ε_j q_j²` on `R^n`.
    Quadric { eps: Vec<i8> },
    /// Height function on `S^n`: `c − |q|²` near the north pole and
    /// `−c + |q'|²` near the south pole, blended in between.
    SphereHeight { c: f64, ball: f64 },
    /// Four-critical-point function on the square torus with exact quadratic
    /// normal forms in the balls of radius `r1`; `tilt` breaks the invariant
    /// circle joining the two saddles.
    Torus { tilt: f64, r1: f64, r2: f64 },
}

impl Potential {
    pub fn eval<S: Real>(&self, chart: ChartId, q: &[S]) -> S {
        match self {
            Potential::Quadric { eps } => q.iter().zip(eps).map(|(&x, &e)| x * x * lit(e as f64)).sum(),
            Potential::SphereHeight { c, ball } => {
                let s: S = q.iter().map(|&x| x * x).sum();
                let c: S = lit(*c);
                let lo: S = lit(*ball);
                let v = if s <= lo {
                    c - s
                } else if s >= lo.recip() {
                    -c + s.recip()
                } else {
                    let l = lo.ln();
                    let w = S::one() - smoothstep5((s.ln() - l) / (-(l + l)));
                    w * (c - s) + (S::one() - w) * (-c + s.recip())
                };
                if chart.0 == 0 {
                    v
                } else {
                    -v
                }
            }
            Potential::Torus { tilt, r1, r2 } => {
                let (x, y) = (q[0], q[1]);
                let cx = x.cos();
                let sx = x.sin();
                let mut v = lit::<S>(4.25) * cx - lit::<S>(0.25) * (x * lit(3.0)).cos()
                    + (lit::<S>(3.0) * cx - cx * cx * cx) * y.cos()
                    + lit::<S>(*tilt) * y.sin() * sx * sx;
                let tau: S = lit(std::f64::consts::TAU);
                let (r1s, r2s): (S, S) = (lit(*r1), lit(*r2));
                for (a, val, eps) in TORUS_CRIT {
                    let d0 = wrap_period(x - lit(a[0]), tau);
                    let d1 = wrap_period(y - lit(a[1]), tau);
                    let rr = d0 * d0 + d1 * d1;
                    if rr >= r2s * r2s {
                        continue;
                    }
                    let beta = if rr <= r1s * r1s {
                        S::one()
                    } else {
                        S::one() - smoothstep5((rr.sqrt() - r1s) / (r2s - r1s))
                    };
                    let quad = lit::<S>(val) + lit::<S>(eps[0] as f64) * d0 * d0 + lit::<S>(eps[1] as f64) * d1 * d1;
                    v = beta * quad + (S::one() - beta) * v;
                }
                v
            }
        }
    }
}

/// A critical point with its Morse chart: in the chart the coordinates are
/// `q − location` (wrapped on the torus) and the normal forms hold exactly
/// for `|q − location| < chart_radius`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CriticalPoint {
    pub location: Vec<f64>,
    pub chart: ChartId,
    pub signature: Vec<i8>,
    pub value: f64,
    pub chart_radius: f64,
}

impl CriticalPoint {
    /// Number of negative signature entries.
    pub fn index(&self) -> usize {
        self.signature.iter().filter(|&&e| e < 0).count()
    }
}

/// Manifold, Morse function, adapted gradient `ν = ±grad φ` and critical data.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MorseSystem {
    pub name: String,
    pub manifold: ManifoldModel,
    pub potential: Potential,
    /// `+1` for the adapted gradient, `−1` for its negation.
    pub nu_sign: f64,
    pub critical_points: Vec<CriticalPoint>,
    pub delta_phi: Vec<f64>,
    /// Half-width of the sampling box on non-compact bases.
    pub sample_radius: f64,
}

struct PhiFn<'a> {
    ms: &'a MorseSystem,
    chart: ChartId,
}

impl ScalarFn for PhiFn<'_> {
    fn call<S: Real>(&self, x: &[S]) -> S {
        self.ms.potential.eval(self.chart, x)
    }
}

struct SigmaFn<'a> {
    m: &'a ManifoldModel,
    chart: ChartId,
}

impl ScalarFn for SigmaFn<'_> {
    fn call<S: Real>(&self, x: &[S]) -> S {
        self.m.log_conformal(self.chart, x)
    }
}

impl MorseSystem {
    fn build(name: &str, manifold: ManifoldModel, potential: Potential, critical_points: Vec<CriticalPoint>, sample_radius: f64) -> Self {
        let mut delta_phi: Vec<f64> = critical_points.iter().map(|c| c.value).collect();
        delta_phi.sort_by(f64::total_cmp);
        Self {
            name: name.to_string(),
            manifold,
            potential,
            nu_sign: 1.0,
            critical_points,
            delta_phi,
            sample_radius,
        }
    }

    /// `φ = Σ ε_j q_j²` on `R^n`.
    pub fn quadric(eps: Vec<i8>) -> Self {
        let n = eps.len();
        let k = eps.iter().filter(|&&e| e < 0).count();
        let name = if k == 0 { format!("quadric-n{n}") } else { format!("quadric-n{n}-k{k}") };
        let cp = CriticalPoint {
            location: vec![0.0; n],
            chart: ChartId(0),
            signature: eps.clone(),
            value: 0.0,
            chart_radius: f64::INFINITY,
        };
        Self::build(&name, ManifoldModel::euclidean(n), Potential::Quadric { eps }, vec![cp], 1.0)
    }

    /// Height function on `S^n` with critical values `±1`.
    pub fn sphere_height(n: usize) -> Self {
        let ball = 1.0 / 3.0;
        let r = 0.55;
        let cps = vec![
            CriticalPoint { location: vec![0.0; n], chart: ChartId(0), signature: vec![-1; n], value: 1.0, chart_radius: r },
            CriticalPoint { location: vec![0.0; n], chart: ChartId(1), signature: vec![1; n], value: -1.0, chart_radius: r },
        ];
        Self::build(
            &format!("sphere{n}-height"),
            ManifoldModel::embedded_sphere(n, ball),
            Potential::SphereHeight { c: 1.0, ball },
            cps,
            1.0,
        )
    }

    /// Torus scenario; `tilt = 0` has a saddle–saddle connection.
    pub fn torus(tilt: f64) -> Self {
        let r1 = 0.2;
        let cps = TORUS_CRIT
            .iter()
            .map(|(a, v, e)| CriticalPoint {
                location: a.to_vec(),
                chart: ChartId(0),
                signature: e.to_vec(),
                value: *v,
                chart_radius: r1,
            })
            .collect();
        let name = if tilt == 0.0 { "torus-upright" } else { "torus-tilted" };
        Self::build(
            name,
            ManifoldModel::flat_torus(vec![std::f64::consts::TAU; 2]),
            Potential::Torus { tilt, r1, r2: 0.45 },
            cps,
            std::f64::consts::PI,
        )
    }

    /// Same data with `ν` replaced by `−ν`.
    pub fn negated(&self) -> Self {
        let mut m = self.clone();
        m.nu_sign = -m.nu_sign;
        m.name = format!("{}-negated", self.name);
        m
    }

    pub fn dim(&self) -> usize {
        self.manifold.dim
    }

    pub fn phi<S: Real>(&self, chart: ChartId, q: &[S]) -> S {
        self.potential.eval(chart, q)
    }

    /// `φ` and its differential.
    pub fn dphi<S: Real>(&self, chart: ChartId, q: &[S]) -> (S, Vec<S>) {
        gradient(&PhiFn { ms: self, chart }, q)
    }

    pub fn hess_phi<S: Real>(&self, chart: ChartId, q: &[S]) -> Mat<S> {
        hessian(&PhiFn { ms: self, chart }, q)
    }

    pub fn sigma<S: Real>(&self, chart: ChartId, q: &[S]) -> S {
        self.manifold.log_conformal(chart, q)
    }

    pub fn dsigma<S: Real>(&self, chart: ChartId, q: &[S]) -> (S, Vec<S>) {
        gradient(&SigmaFn { m: &self.manifold, chart }, q)
    }

    /// The adapted gradient `ν = ±e^{−2σ} dφ`.
    pub fn nu<S: Real>(&self, chart: ChartId, q: &[S]) -> Vec<S> {
        let (_, d) = self.dphi(chart, q);
        let f = (self.sigma(chart, q) * lit(-2.0)).exp() * lit(self.nu_sign);
        d.into_iter().map(|v| v * f).collect()
    }

    /// Covariant Hessian `∇²φ(p♯, p♯)` for the conformal metric.
    pub fn cov_hess_pp<S: Real>(&self, chart: ChartId, q: &[S], p: &[S]) -> S {
        let h = self.hess_phi(chart, q);
        let (_, dp) = self.dphi(chart, q);
        let (sig, ds) = self.dsigma(chart, q);
        let php: S = p.iter().enumerate().map(|(i, &pi)| pi * dot(&h[i], p)).sum();
        let two: S = lit(2.0);
        let inner = php - two * dot(p, &ds) * dot(p, &dp) + dot(p, p) * dot(&ds, &dp);
        (sig * lit(-4.0)).exp() * inner
    }

    /// Morse chart coordinates of `x` relative to critical point `a`.
    pub fn morse_coords<T: Real>(&self, a: usize, x: &PhasePoint<T>) -> Result<PhasePoint<T>, GeometryError> {
        let cp = &self.critical_points[a];
        let y = self.manifold.to_chart(x, cp.chart)?;
        Ok(PhasePoint {
            q: self.manifold.chart_difference(&y.q, &cp.location),
            p: y.p,
            chart: cp.chart,
        })
    }

    /// Phase point with Morse chart coordinates `(qm, pm)` at `a`.
    pub fn from_morse<T: Real>(&self, a: usize, qm: &[T], pm: &[T]) -> PhasePoint<T> {
        let cp = &self.critical_points[a];
        PhasePoint {
            q: qm.iter().zip(&cp.location).map(|(&v, &l)| v + lit(l)).collect(),
            p: pm.to_vec(),
            chart: cp.chart,
        }
    }

    /// Chart distance from base point `(chart, q)` to critical point `a`;
    /// infinite when `a` is not visible from the point.
    pub fn chart_distance(&self, a: usize, chart: ChartId, q: &[f64]) -> f64 {
        let x = PhasePoint::in_chart(q.to_vec(), vec![0.0; q.len()], chart);
        match self.morse_coords(a, &x) {
            Ok(y) => dot(&y.q, &y.q).sqrt(),
            Err(_) => f64::INFINITY,
        }
    }

    /// Index and chart distance of the nearest critical point.
    pub fn nearest_critical(&self, chart: ChartId, q: &[f64]) -> (usize, f64) {
        (0..self.critical_points.len())
            .map(|a| (a, self.chart_distance(a, chart, q)))
            .min_by(|x, y| x.1.total_cmp(&y.1))
            .unwrap_or((0, f64::INFINITY))
    }

    /// Cube dimension consumed by [`sample_base`](Self::sample_base).
    pub fn base_sample_dim(&self) -> usize {
        self.dim()
    }

    /// Maps a cube point to a base point, roughly uniformly.
    pub fn sample_base(&self, u: &[f64]) -> (ChartId, Vec<f64>) {
        match &self.manifold.kind {
            ManifoldKind::EuclideanChart => {
                (ChartId(0), u.iter().map(|v| self.sample_radius * (2.0 * v - 1.0)).collect())
            }
            ManifoldKind::FlatTorus { periods } => {
                (ChartId(0), u.iter().zip(periods).map(|(v, per)| per * (v - 0.5)).collect())
            }
            ManifoldKind::EmbeddedSphere => {
                let x = sphere_from_cube(u, self.dim() + 1);
                self.manifold.from_sphere(&x)
            }
        }
    }

    /// Scales a nonzero direction to a covector of metric length `r` at `q`.
    pub fn covector_of_length(&self, chart: ChartId, q: &[f64], dir: &[f64], r: f64) -> Vec<f64> {
        let n2 = self.manifold.covector_norm2(chart, q, dir);
        let s = r / n2.sqrt();
        dir.iter().map(|v| v * s).collect()
    }
}

/// Built-in scenario names (quadrics accept `quadric-n{n}` and
/// `quadric-n{n}-k{k}` for `1 ≤ n ≤ 4`, `0 ≤ k ≤ n`).
pub const SCENARIO_NAMES: [&str; 7] = [
    "quadric-n2",
    "quadric-n3",
    "quadric-n4",
    "sphere2-height",
    "sphere3-height",
    "torus-upright",
    "torus-tilted",
];

/// Looks up a scenario by name.
pub fn scenario(name: &str) -> Result<MorseSystem, GeometryError> {
    match name {
        "sphere2-height" => return Ok(MorseSystem::sphere_height(2)),
        "sphere3-height" => return Ok(MorseSystem::sphere_height(3)),
        "torus-upright" => return Ok(MorseSystem::torus(0.0)),
        "torus-tilted" => return Ok(MorseSystem::torus(0.3)),
        _ => {}
    }
    let unknown = || GeometryError::UnknownScenario(name.to_string());
    let rest = name.strip_prefix("quadric-n").ok_or_else(unknown)?;
    let (n, k) = match rest.split_once("-k") {
        Some((a, b)) => (a.parse::<usize>().map_err(|_| unknown())?, b.parse::<usize>().map_err(|_| unknown())?),
        None => (rest.parse::<usize>().map_err(|_| unknown())?, 0),
    };
    if !(1..=4).contains(&n) || k > n {
        return Err(unknown());
    }
    Ok(MorseSystem::quadric((0..n).map(|j| if j < k { -1 } else { 1 }).collect()))
}

/// Outcome of [`check_adapted_gradient`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdaptedGradientReport {
    pub samples: usize,
    pub regular_samples: usize,
    /// Smallest `ν·φ` over samples outside the chart balls.
    pub min_margin: f64,
    /// Up to 20 `(chart, q, ν·φ)` samples with `ν·φ ≤ 0`.
    pub offending: Vec<(ChartId, Vec<f64>, f64)>,
    pub violations: usize,
    /// Largest deviation from the quadratic normal forms of `φ` and `ν`.
    pub normal_form_error: f64,
    pub pass: bool,
}

/// Samples `ν·φ` away from the critical points and the normal forms inside
/// the Morse charts.
pub fn check_adapted_gradient(ms: &MorseSystem, samples: usize, seed: u64) -> AdaptedGradientReport {
    let halton = Halton::new(ms.base_sample_dim(), seed);
    let vals: Vec<Option<(ChartId, Vec<f64>, f64)>> = (0..samples as u64)
        .into_par_iter()
        .map(|i| {
            let (chart, q) = ms.sample_base(&halton.point(i));
            let inside = ms
                .critical_points
                .iter()
                .enumerate()
                .any(|(a, cp)| ms.chart_distance(a, chart, &q) < cp.chart_radius.min(ms.sample_radius));
            if inside {
                return None;
            }
            let (_, d) = ms.dphi(chart, &q);
            let m = dot(&d, &ms.nu(chart, &q));
            Some((chart, q, m))
        })
        .collect();
    let regular: Vec<_> = vals.into_iter().flatten().collect();
    let min_margin = regular.iter().map(|v| v.2).fold(f64::INFINITY, f64::min);
    let bad: Vec<_> = regular.iter().filter(|v| v.2 <= 0.0).cloned().collect();

    let n = ms.dim();
    let ball = Halton::new(n, seed ^ 0x5eed);
    let mut nf_err: f64 = 0.0;
    for (a, cp) in ms.critical_points.iter().enumerate() {
        let rad = 0.9 * cp.chart_radius.min(ms.sample_radius);
        for i in 0..256u64 {
            let u = ball.point(i);
            let qm: Vec<f64> = u.iter().map(|v| rad * (2.0 * v - 1.0) / (n as f64).sqrt()).collect();
            let x = ms.from_morse(a, &qm, &vec![0.0; n]);
            let model: f64 = cp.value + qm.iter().zip(&cp.signature).map(|(v, &e)| e as f64 * v * v).sum::<f64>();
            nf_err = nf_err.max((ms.phi(x.chart, &x.q) - model).abs());
            let nu = ms.nu(x.chart, &x.q);
            for ((v, &e), w) in qm.iter().zip(&cp.signature).zip(&nu) {
                nf_err = nf_err.max((ms.nu_sign * 2.0 * e as f64 * v - w).abs());
            }
        }
    }
    let values_distinct = ms.delta_phi.windows(2).all(|w| w[1] > w[0]);
    AdaptedGradientReport {
        samples,
        regular_samples: regular.len(),
        min_margin,
        violations: bad.len(),
        offending: bad.into_iter().take(20).collect(),
        normal_form_error: nf_err,
        pass: min_margin > 0.0 && nf_err < 1e-10 && values_distinct,
    }
}
