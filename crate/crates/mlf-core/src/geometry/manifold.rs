use serde::{Deserialize, Serialize};

use super::{ChartId, GeometryError, PhasePoint};
use crate::linalg::{dot, Mat};
use crate::scalar::{lit, smoothstep5, Real};

/// Sphere charts are swapped once `|q|` exceeds this radius.
pub const SPHERE_SWITCH_RADIUS: f64 = 1.5;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum ManifoldKind {
    /// `R^n` in a single chart.
    EuclideanChart,
    /// `R^n / (periods · Z^n)`.
    FlatTorus { periods: Vec<f64> },
    /// `S^n` covered by the two stereographic charts; chart 0 is centred at
    /// the north pole, chart 1 at the south pole.
    EmbeddedSphere,
}

/// Base manifold with a conformally flat metric `e^{2σ} δ` in every chart.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifoldModel {
    pub kind: ManifoldKind,
    pub dim: usize,
    /// For the sphere: the metric is Euclidean for `|q|² ≤ ball` in either
    /// chart, and blends to the pulled-back flat metric of the other chart.
    pub ball: f64,
}

impl ManifoldModel {
    pub fn euclidean(n: usize) -> Self {
        Self { kind: ManifoldKind::EuclideanChart, dim: n, ball: f64::INFINITY }
    }

    pub fn flat_torus(periods: Vec<f64>) -> Self {
        let dim = periods.len();
        Self { kind: ManifoldKind::FlatTorus { periods }, dim, ball: f64::INFINITY }
    }

    pub fn embedded_sphere(n: usize, ball: f64) -> Self {
        Self { kind: ManifoldKind::EmbeddedSphere, dim: n, ball }
    }

    pub fn chart_count(&self) -> usize {
        match self.kind {
            ManifoldKind::EmbeddedSphere => 2,
            _ => 1,
        }
    }

    /// Weight of the inner (Euclidean) region at `s = |q|²` for the sphere
    /// charts; satisfies `w(1/s) = 1 − w(s)`.
    pub fn sphere_weight<S: Real>(&self, s: S) -> S {
        let lo: S = lit(self.ball);
        if s <= lo {
            return S::one();
        }
        if s >= lo.recip() {
            return S::zero();
        }
        let l = lo.ln();
        S::one() - smoothstep5((s.ln() - l) / (-(l + l)))
    }

    /// `σ` with metric `e^{2σ} δ` in the given chart.
    pub fn log_conformal<S: Real>(&self, _chart: ChartId, q: &[S]) -> S {
        match self.kind {
            ManifoldKind::EmbeddedSphere => {
                let s: S = q.iter().map(|&x| x * x).sum();
                if s <= lit(self.ball) {
                    S::zero()
                } else {
                    -(S::one() - self.sphere_weight(s)) * s.ln()
                }
            }
            _ => S::zero(),
        }
    }

    pub fn metric<S: Real>(&self, chart: ChartId, q: &[S]) -> Mat<S> {
        let c = (self.log_conformal(chart, q) * lit(2.0)).exp();
        (0..q.len())
            .map(|i| (0..q.len()).map(|j| if i == j { c } else { S::zero() }).collect())
            .collect()
    }

    /// Squared metric norm of a covector.
    pub fn covector_norm2<S: Real>(&self, chart: ChartId, q: &[S], p: &[S]) -> S {
        (self.log_conformal(chart, q) * lit(-2.0)).exp() * dot(p, p)
    }

    pub fn check_dim(&self, n: usize) -> Result<(), GeometryError> {
        if n == self.dim {
            Ok(())
        } else {
            Err(GeometryError::Dimension { expected: self.dim, got: n })
        }
    }

    /// Validates a point and brings it to canonical form: torus coordinates
    /// reduced to `[-period/2, period/2)`, sphere points moved to the chart in
    /// which `|q| ≤` [`SPHERE_SWITCH_RADIUS`].
    pub fn normalize<T: Real>(&self, x: &mut PhasePoint<T>) -> Result<(), GeometryError> {
        self.check_dim(x.q.len())?;
        self.check_dim(x.p.len())?;
        if x.q.iter().chain(&x.p).any(|v| !v.is_finite()) {
            return Err(GeometryError::Domain("non-finite coordinate".into()));
        }
        match &self.kind {
            ManifoldKind::EuclideanChart => {
                if x.chart != ChartId(0) {
                    return Err(GeometryError::Domain(format!("no chart {}", x.chart.0)));
                }
            }
            ManifoldKind::FlatTorus { periods } => {
                for (v, &per) in x.q.iter_mut().zip(periods) {
                    *v = wrap_period(*v, lit(per));
                }
            }
            ManifoldKind::EmbeddedSphere => {
                if x.chart.0 > 1 {
                    return Err(GeometryError::Domain(format!("no chart {}", x.chart.0)));
                }
                let r2 = dot(&x.q, &x.q);
                let sw: T = lit(SPHERE_SWITCH_RADIUS);
                if r2 > sw * sw {
                    *x = sphere_transition(x);
                }
            }
        }
        Ok(())
    }

    /// Expresses `x` in `chart`.
    pub fn to_chart<T: Real>(&self, x: &PhasePoint<T>, chart: ChartId) -> Result<PhasePoint<T>, GeometryError> {
        if x.chart == chart {
            return Ok(x.clone());
        }
        match self.kind {
            ManifoldKind::EmbeddedSphere if chart.0 <= 1 => {
                if dot(&x.q, &x.q) == T::zero() {
                    return Err(GeometryError::Domain("pole is not in the other chart".into()));
                }
                Ok(sphere_transition(x))
            }
            _ => Err(GeometryError::Domain(format!("no chart {}", chart.0))),
        }
    }

    /// Difference `q − a` of base coordinates in one chart, wrapped on the torus.
    pub fn chart_difference<T: Real>(&self, q: &[T], a: &[f64]) -> Vec<T> {
        match &self.kind {
            ManifoldKind::FlatTorus { periods } => q
                .iter()
                .zip(a)
                .zip(periods)
                .map(|((&x, &y), &per)| wrap_period(x - lit(y), lit(per)))
                .collect(),
            _ => q.iter().zip(a).map(|(&x, &y)| x - lit(y)).collect(),
        }
    }

    /// Embedding used for reporting: the unit sphere in `R^{n+1}`, angles on
    /// the torus, identity on `R^n`.
    pub fn embed(&self, chart: ChartId, q: &[f64]) -> Vec<f64> {
        match self.kind {
            ManifoldKind::EmbeddedSphere => {
                let s = dot(q, q);
                let mut x: Vec<f64> = q.iter().map(|v| 2.0 * v / (1.0 + s)).collect();
                let h = (1.0 - s) / (1.0 + s);
                x.push(if chart.0 == 0 { h } else { -h });
                x
            }
            _ => q.to_vec(),
        }
    }

    /// Inverse of [`embed`](Self::embed) for the sphere: picks the chart of
    /// the nearer pole.
    pub fn from_sphere(&self, x: &[f64]) -> (ChartId, Vec<f64>) {
        let n = x.len() - 1;
        let h = x[n];
        let (chart, denom) = if h >= 0.0 { (ChartId(0), 1.0 + h) } else { (ChartId(1), 1.0 - h) };
        (chart, x[..n].iter().map(|v| v / denom).collect())
    }
}

/// Stereographic chart transition `q' = q/|q|²`, `p' = |q|² p − 2(q·p) q`;
/// preserves `p dq`.
fn sphere_transition<T: Real>(x: &PhasePoint<T>) -> PhasePoint<T> {
    let s = dot(&x.q, &x.q);
    let qp = dot(&x.q, &x.p);
    let two: T = lit(2.0);
    PhasePoint {
        q: x.q.iter().map(|&v| v / s).collect(),
        p: x.p.iter().zip(&x.q).map(|(&p, &q)| s * p - two * qp * q).collect(),
        chart: ChartId(1 - x.chart.0),
    }
}

pub(crate) fn wrap_period<T: Real>(v: T, per: T) -> T {
    v - per * (v / per).round()
}
