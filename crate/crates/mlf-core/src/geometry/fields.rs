use super::{ChartId, GeometryError, MorseSystem, PhasePoint, PhaseVector};
use crate::linalg::dot;
use crate::scalar::{gradient, lit, Dual, Real, ScalarFn};

/// Scalar function on phase space, generic over the evaluation scalar.
pub trait PhaseScalar: Sync {
    fn eval<S: Real>(&self, ms: &MorseSystem, chart: ChartId, q: &[S], p: &[S]) -> S;
}

/// `g(p, q) = ⟨p, ν(q)⟩`.
#[derive(Debug, Clone, Copy, Default)]
pub struct GFn;

impl PhaseScalar for GFn {
    fn eval<S: Real>(&self, ms: &MorseSystem, chart: ChartId, q: &[S], p: &[S]) -> S {
        dot(p, &ms.nu(chart, q))
    }
}

/// Kinetic energy `ρ = ½|p|²`.
#[derive(Debug, Clone, Copy, Default)]
pub struct RhoFn;

impl PhaseScalar for RhoFn {
    fn eval<S: Real>(&self, ms: &MorseSystem, chart: ChartId, q: &[S], p: &[S]) -> S {
        ms.manifold.covector_norm2(chart, q, p) * lit(0.5)
    }
}

struct Split<'a, F> {
    f: &'a F,
    ms: &'a MorseSystem,
    chart: ChartId,
    n: usize,
}

impl<F: PhaseScalar> ScalarFn for Split<'_, F> {
    fn call<S: Real>(&self, x: &[S]) -> S {
        self.f.eval(self.ms, self.chart, &x[..self.n], &x[self.n..])
    }
}

/// Value and differential `(∂_q F, ∂_p F)` of a phase-space function.
pub fn phase_gradient<T: Real, F: PhaseScalar>(f: &F, ms: &MorseSystem, x: &PhasePoint<T>) -> (T, PhaseVector<T>) {
    let n = x.q.len();
    let (v, d) = gradient(&Split { f, ms, chart: x.chart, n }, &x.to_state());
    (v, PhaseVector::from_state(&d))
}

/// `dF(v)` at `x`.
pub fn phase_directional<T: Real, F: PhaseScalar>(f: &F, ms: &MorseSystem, x: &PhasePoint<T>, v: &PhaseVector<T>) -> T {
    let xs: Vec<Dual<T>> = x
        .to_state()
        .into_iter()
        .zip(v.to_state())
        .map(|(a, b)| Dual::new(a, b))
        .collect();
    let n = x.q.len();
    f.eval(ms, x.chart, &xs[..n], &xs[n..]).eps
}

/// Hamiltonian field `X_F = (∂_p F, −∂_q F)`, so that `ι_X ω = −dF`.
pub fn hamiltonian_field<T: Real, F: PhaseScalar>(f: &F, ms: &MorseSystem, x: &PhasePoint<T>) -> PhaseVector<T> {
    let (_, d) = phase_gradient(f, ms, x);
    PhaseVector { dq: d.dp, dp: d.dq.into_iter().map(|v| -v).collect() }
}

/// `ω(u, v)` for `ω = dp ∧ dq`.
pub fn omega<T: Real>(u: &PhaseVector<T>, v: &PhaseVector<T>) -> T {
    dot(&u.dp, &v.dq) - dot(&u.dq, &v.dp)
}

/// `λ(v) = ⟨p, dq(v)⟩`.
pub fn pairing_lambda<T: Real>(x: &PhasePoint<T>, v: &PhaseVector<T>) -> T {
    dot(&x.p, &v.dq)
}

fn check<T: Real>(ms: &MorseSystem, x: &PhasePoint<T>) -> Result<(), GeometryError> {
    ms.manifold.check_dim(x.q.len())?;
    ms.manifold.check_dim(x.p.len())?;
    if x.chart.0 as usize >= ms.manifold.chart_count() {
        return Err(GeometryError::Domain(format!("no chart {}", x.chart.0)));
    }
    if x.q.iter().chain(&x.p).any(|v| !v.is_finite()) {
        return Err(GeometryError::Domain("non-finite coordinate".into()));
    }
    Ok(())
}

/// `g(p, q) = ⟨p, ν(q)⟩`.
pub fn eval_g<T: Real>(x: &PhasePoint<T>, ms: &MorseSystem) -> Result<T, GeometryError> {
    check(ms, x)?;
    Ok(GFn.eval(ms, x.chart, &x.q, &x.p))
}

/// `ρ(p, q) = ½|p|²`.
pub fn eval_rho<T: Real>(x: &PhasePoint<T>, ms: &MorseSystem) -> Result<T, GeometryError> {
    check(ms, x)?;
    Ok(RhoFn.eval(ms, x.chart, &x.q, &x.p))
}

/// The Hamiltonian lift `ν̃ = X_g = (ν(q), −Dν(q)ᵀ p)`.
pub fn hamiltonian_lift<T: Real>(x: &PhasePoint<T>, ms: &MorseSystem) -> Result<PhaseVector<T>, GeometryError> {
    check(ms, x)?;
    Ok(hamiltonian_field(&GFn, ms, x))
}

/// `υ = (ν̃·ρ) / (Z_λ·ρ) = (ν̃·ρ) / 2ρ`.
pub fn upsilon<T: Real>(x: &PhasePoint<T>, ms: &MorseSystem) -> Result<T, GeometryError> {
    check(ms, x)?;
    if x.p.iter().all(|&v| v == T::zero()) {
        return Err(GeometryError::ZeroCovector);
    }
    let nt = hamiltonian_field(&GFn, ms, x);
    let drho = phase_directional(&RhoFn, ms, x, &nt);
    let rho = RhoFn.eval(ms, x.chart, &x.q, &x.p);
    Ok(drho / (rho + rho))
}

/// The contact lift `ν̄ = ν̃ − υ Z_λ`, tangent to the level sets of `ρ`.
pub fn contact_lift<T: Real>(x: &PhasePoint<T>, ms: &MorseSystem) -> Result<PhaseVector<T>, GeometryError> {
    let u = upsilon(x, ms)?;
    let mut v = hamiltonian_field(&GFn, ms, x);
    for (d, &p) in v.dp.iter_mut().zip(&x.p) {
        *d -= u * p;
    }
    Ok(v)
}

/// Checks the global sign conventions on a signed quadric: `ν̃` equals
/// `2Σε_j(q_j∂_{q_j} − p_j∂_{p_j})`, `λ(ν̃) = g` and `ι_{ν̃}ω = −dg`.
pub fn sign_convention_self_test() -> Result<(), GeometryError> {
    let ms = MorseSystem::quadric(vec![-1, 1, 1]);
    let pts = [
        ([0.3, -1.2, 0.7], [1.1, 0.4, -0.9]),
        ([2.0, 0.5, -0.1], [-0.6, 0.2, 1.3]),
    ];
    let probe: PhaseVector<f64> = PhaseVector { dq: vec![0.2, -0.7, 0.4], dp: vec![0.9, 0.1, -0.3] };
    for (q, p) in pts {
        let x: PhasePoint<f64> = PhasePoint::new(q.to_vec(), p.to_vec());
        let v = hamiltonian_lift(&x, &ms)?;
        let eps = [-1.0f64, 1.0, 1.0];
        for j in 0..3 {
            let (eq, ep) = (2.0 * eps[j] * q[j], -2.0 * eps[j] * p[j]);
            if (v.dq[j] - eq).abs() > 1e-12 || (v.dp[j] - ep).abs() > 1e-12 {
                return Err(GeometryError::SelfTest(format!("chart form of the Hamiltonian lift at {q:?}")));
            }
        }
        let g: f64 = eval_g(&x, &ms)?;
        if (pairing_lambda(&x, &v) - g).abs() > 1e-12 {
            return Err(GeometryError::SelfTest("λ(ν̃) ≠ g".into()));
        }
        let dg: f64 = phase_directional(&GFn, &ms, &x, &probe);
        if (omega(&v, &probe) + dg).abs() > 1e-12 {
            return Err(GeometryError::SelfTest("ι ω ≠ −dg".into()));
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn self_test_passes() {
        sign_convention_self_test().unwrap();
    }

    #[test]
    fn upsilon_on_the_spheres() {
        let ms = MorseSystem::quadric(vec![-1, 1]);
        let plus = PhasePoint::new(vec![0.0, 0.0], vec![1.0, 0.0]);
        let minus = PhasePoint::new(vec![0.0, 0.0], vec![0.0, 1.0]);
        assert!((upsilon::<f64>(&plus, &ms).unwrap() - 2.0).abs() < 1e-14);
        assert!((upsilon::<f64>(&minus, &ms).unwrap() + 2.0).abs() < 1e-14);
        let z = PhasePoint::new(vec![0.0, 0.0], vec![0.0, 0.0]);
        assert_eq!(upsilon(&z, &ms), Err(GeometryError::ZeroCovector));
    }
}
