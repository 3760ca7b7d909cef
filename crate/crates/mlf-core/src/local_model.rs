//! The quadric `h(z) = Σ z_j²` on `C^n`: parallel transport, the annulus
//! twist, real forms, critical loci of `ρ_{k,w}`, surgery curves and the
//! perturbed system near a critical point.

use num_complex::Complex;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{ChartId, PhasePoint};
use crate::linalg::{dot, gram_schmidt, norm, null_space, sym_eigen, Mat};
use crate::ode::{integrate, FnSystem, OdeConfig, Terminal};
use crate::sampling::{rng, unit_vector};
use crate::scalar::{hessian, lit, smoothstep5, Real, ScalarFn};

pub type C<T> = Complex<T>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LocalModelError {
    #[error("both plane coordinates vanish")]
    BothZero,
    #[error("point is not on the fiber: residual {0}")]
    NotInFiber(f64),
    #[error("real part vanishes; no cotangent representative")]
    RealPartZero,
    #[error("fiber over 0 is nodal")]
    NodalFiber,
    #[error("index {k} out of range for dimension {n}")]
    BadIndex { k: usize, n: usize },
    #[error("plane does not meet the level set")]
    PlaneMissesLevel,
    #[error("degenerate plane frame")]
    DegenerateFrame,
    #[error("integration failed: {0}")]
    Integration(String),
}

/// A point of `C^n` for the (optionally signed, shifted) quadric.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuadricPoint<T> {
    pub z: Vec<C<T>>,
    pub signature: Option<Vec<i8>>,
    pub offset: T,
}

impl<T: Real> QuadricPoint<T> {
    pub fn new(z: Vec<C<T>>) -> Self {
        Self { z, signature: None, offset: T::zero() }
    }

    /// `offset + Σ ε_j z_j²`.
    pub fn h(&self) -> C<T> {
        let s: C<T> = match &self.signature {
            Some(eps) => self.z.iter().zip(eps).map(|(&z, &e)| z * z * lit::<T>(e as f64)).sum(),
            None => h_value(&self.z),
        };
        s + self.offset
    }
}

/// `Σ z_j²`.
pub fn h_value<T: Real>(z: &[C<T>]) -> C<T> {
    z.iter().map(|&v| v * v).sum()
}

pub fn norm2<T: Real>(z: &[C<T>]) -> T {
    z.iter().map(|v| v.norm_sqr()).sum()
}

/// Closed-form transport `τ_α(z₁, z₂) = (e^{isα} z₁, e^{i(1−s)α} z₂)` for
/// `h = z₁z₂`, `s = |z₂|²/(|z₁|²+|z₂|²)`.
pub fn transport_plane_closed<T: Real>(z1: C<T>, z2: C<T>, alpha: T) -> Result<(C<T>, C<T>), LocalModelError> {
    let (a, b) = (z1.norm_sqr(), z2.norm_sqr());
    if a + b == T::zero() {
        return Err(LocalModelError::BothZero);
    }
    let s = b / (a + b);
    Ok((z1 * C::from_polar(T::one(), s * alpha), z2 * C::from_polar(T::one(), (T::one() - s) * alpha)))
}

/// Result of integrating the Hamiltonian flow of `|z₁z₂|²`.
#[derive(Debug, Clone, PartialEq)]
pub struct PlaneFlowResult<T> {
    pub z1: C<T>,
    pub z2: C<T>,
    /// Max drift of `|z₁|²` and `|z₂|²` along the orbit.
    pub integral_drift: T,
}

/// Transport by integrating `2|z₂|²(x₁∂_{y₁} − y₁∂_{x₁}) + 2|z₁|²(x₂∂_{y₂} − y₂∂_{x₂})`
/// for time `α / 2(|z₁|²+|z₂|²)`.
pub fn transport_plane_flow<T: Real>(z1: C<T>, z2: C<T>, alpha: T, cfg: &OdeConfig) -> Result<PlaneFlowResult<T>, LocalModelError> {
    let (a, b) = (z1.norm_sqr(), z2.norm_sqr());
    if a + b == T::zero() {
        return Err(LocalModelError::BothZero);
    }
    let two: T = lit(2.0);
    let t_end = alpha / (two * (a + b));
    let mut sys = FnSystem(move |_t: T, y: &[T], dy: &mut [T]| {
        let m1 = y[0] * y[0] + y[1] * y[1];
        let m2 = y[2] * y[2] + y[3] * y[3];
        dy[0] = -two * m2 * y[1];
        dy[1] = two * m2 * y[0];
        dy[2] = -two * m1 * y[3];
        dy[3] = two * m1 * y[2];
    });
    let tr = integrate(&mut sys, T::zero(), &[z1.re, z1.im, z2.re, z2.im], t_end, cfg, true);
    if !tr.completed() {
        return Err(LocalModelError::Integration(format!("{:?}", tr.terminal)));
    }
    let drift = tr.states.iter().fold(T::zero(), |m, y| {
        let m1 = y[0] * y[0] + y[1] * y[1];
        let m2 = y[2] * y[2] + y[3] * y[3];
        m.max((m1 - a).abs()).max((m2 - b).abs())
    });
    let y = tr.last_state();
    Ok(PlaneFlowResult { z1: C::new(y[0], y[1]), z2: C::new(y[2], y[3]), integral_drift: drift })
}

/// Orthonormal real frame of a plane `P ⊂ R^n` with the special coordinates
/// `Z₁ = c₂ − i c₁`, `Z₂ = c₂ + i c₁` (`c_j = ⟨z, e_j⟩`) in which
/// `h|_{CP} = Z₁Z₂`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlaneFrame<T> {
    pub e1: Vec<T>,
    pub e2: Vec<T>,
}

impl<T: Real> PlaneFrame<T> {
    pub fn new(v1: &[T], v2: &[T]) -> Result<Self, LocalModelError> {
        let b = gram_schmidt(&[v1.to_vec(), v2.to_vec()], lit(1e-12));
        if b.len() < 2 {
            return Err(LocalModelError::DegenerateFrame);
        }
        Ok(Self { e1: b[0].clone(), e2: b[1].clone() })
    }

    /// A plane with `z ∈ CP`, spanned by `Re z` and `Im z` (completed if
    /// they are dependent).
    pub fn containing(z: &[C<T>]) -> Result<Self, LocalModelError> {
        let n = z.len();
        if n < 2 {
            return Err(LocalModelError::DegenerateFrame);
        }
        let mut cands = vec![z.iter().map(|v| v.re).collect::<Vec<T>>(), z.iter().map(|v| v.im).collect()];
        for i in 0..n {
            let mut e = vec![T::zero(); n];
            e[i] = T::one();
            cands.push(e);
        }
        let scale = norm2(z).sqrt().max(T::one());
        let b = gram_schmidt(&cands, lit::<T>(1e-10) * scale);
        Ok(Self { e1: b[0].clone(), e2: b[1].clone() })
    }

    pub fn dim(&self) -> usize {
        self.e1.len()
    }

    fn coeffs(&self, z: &[C<T>]) -> (C<T>, C<T>) {
        let c = |e: &[T]| z.iter().zip(e).map(|(&v, &w)| v * w).sum::<C<T>>();
        (c(&self.e1), c(&self.e2))
    }

    /// Special coordinates of (the projection of) `z`.
    pub fn special(&self, z: &[C<T>]) -> (C<T>, C<T>) {
        let (c1, c2) = self.coeffs(z);
        let i = C::new(T::zero(), T::one());
        (c2 - i * c1, c2 + i * c1)
    }

    pub fn from_special(&self, z1: C<T>, z2: C<T>) -> Vec<C<T>> {
        let two: T = lit(2.0);
        let i = C::new(T::zero(), T::one());
        let c2 = (z1 + z2) / two;
        let c1 = (z2 - z1) / (i * two);
        self.e1.iter().zip(&self.e2).map(|(&a, &b)| c1 * a + c2 * b).collect()
    }

    /// Distance from `z` to `CP`.
    pub fn distance(&self, z: &[C<T>]) -> T {
        let (c1, c2) = self.coeffs(z);
        z.iter()
            .zip(self.e1.iter().zip(&self.e2))
            .map(|(&v, (&a, &b))| (v - c1 * a - c2 * b).norm_sqr())
            .sum::<T>()
            .sqrt()
    }
}

impl PlaneFrame<f64> {
    /// Max of `|h(z) − Z₁Z₂|` over random points of `CP`.
    pub fn identity_residual(&self, samples: usize, seed: u64) -> f64 {
        let mut r = rng(seed, 17);
        (0..samples)
            .map(|_| {
                let v = unit_vector(&mut r, 4);
                let z = self.from_special(C::new(v[0], v[1]), C::new(v[2], v[3]));
                let z = {
                    // random point of CP, not just the image of the unit sphere
                    let (c1, c2) = self.coeffs(&z);
                    self.e1.iter().zip(&self.e2).map(|(&a, &b)| c1 * a + c2 * b).collect::<Vec<_>>()
                };
                let (a, b) = self.special(&z);
                (h_value(&z) - a * b).norm()
            })
            .fold(0.0, f64::max)
    }
}

/// Polar coordinate on the annulus `F_w ∩ CP ≅ C^*`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AnnulusCoord<T> {
    pub r: T,
    pub theta: T,
}

/// `(r, θ) ↦ (r, θ + α/(1+r⁴))`.
pub fn annulus_twist<T: Real>(a: AnnulusCoord<T>, alpha: T) -> AnnulusCoord<T> {
    let r4 = a.r.powi(4);
    AnnulusCoord { r: a.r, theta: a.theta + alpha / (T::one() + r4) }
}

/// `ψ_w(ζ) = (|w|^{1/2} ζ, w / (|w|^{1/2} ζ))`, taking the unit circle to
/// `Z_w ∩ CP`.
pub fn psi<T: Real>(w: C<T>, a: AnnulusCoord<T>) -> (C<T>, C<T>) {
    let s = w.norm().sqrt();
    let zeta = C::from_polar(a.r, a.theta);
    (zeta * s, w / (zeta * s))
}

/// Inverse of [`psi`] read off from the first coordinate.
pub fn psi_inv<T: Real>(w: C<T>, z1: C<T>) -> AnnulusCoord<T> {
    let zeta = z1 / w.norm().sqrt();
    AnnulusCoord { r: zeta.norm(), theta: zeta.arg() }
}

/// Closed-form transport of `z ∈ C^n` over the arc `w ↦ e^{iα} w`.
pub fn transport_closed_cn<T: Real>(z: &[C<T>], alpha: T) -> Result<Vec<C<T>>, LocalModelError> {
    let frame = PlaneFrame::containing(z)?;
    let (a, b) = frame.special(z);
    let (a2, b2) = transport_plane_closed(a, b, alpha)?;
    Ok(frame.from_special(a2, b2))
}

/// Result of integrating the horizontal lift in `C^n`.
#[derive(Debug, Clone, PartialEq)]
pub struct CnTransport<T> {
    pub z: Vec<C<T>>,
    /// Max `|h(z(t)) − w(t)|`.
    pub fiber_error: T,
}

/// Transport over `w(t) = e^{it} h(z₀)`, `t ∈ [0, α]`, by integrating the
/// horizontal lift `ż = ẇ z̄ / 2|z|²`.
pub fn transport_flow_cn<T: Real>(z: &[C<T>], alpha: T, cfg: &OdeConfig) -> Result<CnTransport<T>, LocalModelError> {
    let n = z.len();
    let w0 = h_value(z);
    if w0 == C::new(T::zero(), T::zero()) {
        return Err(LocalModelError::NodalFiber);
    }
    let two: T = lit(2.0);
    let mut sys = FnSystem(move |t: T, y: &[T], dy: &mut [T]| {
        let wdot = w0 * C::new(T::zero(), T::one()) * C::from_polar(T::one(), t);
        let m: T = y.iter().map(|&v| v * v).sum();
        for j in 0..n {
            let v = wdot * C::new(y[j], -y[n + j]) / (two * m);
            dy[j] = v.re;
            dy[n + j] = v.im;
        }
    });
    let y0: Vec<T> = z.iter().map(|v| v.re).chain(z.iter().map(|v| v.im)).collect();
    let tr = integrate(&mut sys, T::zero(), &y0, alpha, cfg, true);
    if tr.terminal != Terminal::Completed {
        return Err(LocalModelError::Integration(format!("{:?}", tr.terminal)));
    }
    let to_c = |y: &[T]| (0..n).map(|j| C::new(y[j], y[n + j])).collect::<Vec<_>>();
    let fiber_error = tr
        .times
        .iter()
        .zip(&tr.states)
        .map(|(&t, y)| (h_value(&to_c(y)) - w0 * C::from_polar(T::one(), t)).norm())
        .fold(T::zero(), |a, b| a.max(b));
    Ok(CnTransport { z: to_c(tr.last_state()), fiber_error })
}

/// `z ∈ F_u ↦ (p, q) = (−|x| y, x/|x|) ∈ T*S^{n−1}` (ambient coordinates).
pub fn quadric_to_cotangent_sphere<T: Real>(z: &[C<T>], u: T, tol: T) -> Result<PhasePoint<T>, LocalModelError> {
    let res = (h_value(z) - C::new(u, T::zero())).norm();
    if !(u > T::zero()) || res > tol {
        return Err(LocalModelError::NotInFiber(res.to_f64().unwrap_or(f64::NAN)));
    }
    let x: Vec<T> = z.iter().map(|v| v.re).collect();
    let y: Vec<T> = z.iter().map(|v| v.im).collect();
    let nx = norm(&x);
    if nx == T::zero() {
        return Err(LocalModelError::RealPartZero);
    }
    Ok(PhasePoint {
        q: x.iter().map(|&v| v / nx).collect(),
        p: y.iter().map(|&v| -nx * v).collect(),
        chart: ChartId(0),
    })
}

/// Index `k` of the real form `M_k` and a real level `u`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RealFormData {
    pub k: usize,
    pub u: f64,
}

impl RealFormData {
    pub fn validate(&self, n: usize) -> Result<(), LocalModelError> {
        if self.k > n {
            Err(LocalModelError::BadIndex { k: self.k, n })
        } else {
            Ok(())
        }
    }
}

/// Values of the real-form data at a point.
#[derive(Debug, Clone, PartialEq)]
pub struct RealFormValue<T> {
    /// `−|y'|² + |x''|²` (equals `h` on `M_k`).
    pub phi_k: T,
    pub rho_k: T,
    /// `λ_k` as coefficients of `(dx_1..dx_n, dy_1..dy_n)`.
    pub lambda_k: Vec<T>,
}

pub fn real_form_eval<T: Real>(d: &RealFormData, z: &[C<T>]) -> Result<RealFormValue<T>, LocalModelError> {
    let n = z.len();
    d.validate(n)?;
    let mut phi = T::zero();
    let mut rho = T::zero();
    let mut lam = vec![T::zero(); 2 * n];
    for (j, v) in z.iter().enumerate() {
        if j < d.k {
            phi -= v.im * v.im;
            rho += v.re * v.re;
            lam[n + j] = v.re;
        } else {
            phi += v.re * v.re;
            rho += v.im * v.im;
            lam[j] = -v.im;
        }
    }
    Ok(RealFormValue { phi_k: phi, rho_k: rho * lit(0.5), lambda_k: lam })
}

struct RhoK {
    k: usize,
    n: usize,
}

impl ScalarFn for RhoK {
    fn call<S: Real>(&self, x: &[S]) -> S {
        let half: S = lit(0.5);
        (0..self.n)
            .map(|j| if j < self.k { x[j] * x[j] } else { x[self.n + j] * x[self.n + j] })
            .sum::<S>()
            * half
    }
}

/// Checks `λ_k = d^C ρ_k` with `d^C ρ(v) = −dρ(iv)` at a few points.
pub fn complex_differential_self_test() -> Result<(), LocalModelError> {
    let n = 3;
    for k in 0..=n {
        let z = [C::new(0.3, -0.8), C::new(1.1, 0.4), C::new(-0.6, 0.9)];
        let lam = real_form_eval(&RealFormData { k, u: 0.0 }, &z)?.lambda_k;
        let rk = RhoK { k, n };
        let x: Vec<f64> = z.iter().map(|v| v.re).chain(z.iter().map(|v| v.im)).collect();
        let (_, d) = crate::scalar::gradient(&rk, &x);
        // i·∂x_j = ∂y_j and i·∂y_j = −∂x_j
        for j in 0..n {
            let on_dx = -d[n + j];
            let on_dy = d[j];
            if (on_dx - lam[j]).abs() > 1e-14 || (on_dy - lam[n + j]).abs() > 1e-14 {
                return Err(LocalModelError::Integration(format!("complex differential convention fails for k = {k}")));
            }
        }
    }
    Ok(())
}

/// Gradient of `ρ_k` projected onto `T_z F_{h(z)}` (real coordinates
/// `(x, y)`).
pub fn fiberwise_gradient_rho(k: usize, z: &[C<f64>]) -> Vec<f64> {
    let n = z.len();
    let mut g = vec![0.0; 2 * n];
    for j in 0..n {
        if j < k {
            g[j] = z[j].re;
        } else {
            g[n + j] = z[j].im;
        }
    }
    // normals: ∇Re h = 2(x, −y), ∇Im h = 2(y, x)
    let nre: Vec<f64> = z.iter().map(|v| v.re).chain(z.iter().map(|v| -v.im)).collect();
    let nim: Vec<f64> = z.iter().map(|v| v.im).chain(z.iter().map(|v| v.re)).collect();
    let basis = gram_schmidt(&[nre, nim], 1e-14);
    for b in &basis {
        let c = dot(&g, b);
        for (gi, bi) in g.iter_mut().zip(b) {
            *gi -= c * bi;
        }
    }
    g
}

/// Which piece of the critical locus of `ρ_{k,w}`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ComponentKind {
    /// `Z_w ∩ (C^k × 0)`.
    LeadingSphere,
    /// `Z_w ∩ (0 × C^{n−k})`.
    TrailingSphere,
    /// `F_w ∩ M_k`.
    RealLevel,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CriticalComponent {
    pub kind: ComponentKind,
    pub present: bool,
    /// Diffeomorphism type, e.g. `S^1` or `S^0×R^2`.
    pub topology: String,
    pub witness: Option<Vec<C<f64>>>,
    pub gradient_residual: f64,
}

/// The three candidate critical components of `ρ_k` on `F_w`.
pub fn rho_kw_critical_classifier(d: &RealFormData, n: usize, w: C<f64>) -> Result<Vec<CriticalComponent>, LocalModelError> {
    d.validate(n)?;
    if w.norm() == 0.0 {
        return Err(LocalModelError::NodalFiber);
    }
    let k = d.k;
    let sw = w.sqrt();
    let basis = |j: usize| {
        let mut z = vec![C::new(0.0, 0.0); n];
        z[j] = sw;
        z
    };
    let mut out = Vec::new();
    let mk = |kind, present: bool, topology: String, witness: Option<Vec<C<f64>>>| {
        let gradient_residual = witness.as_ref().map_or(0.0, |z| norm(&fiberwise_gradient_rho(k, z)));
        CriticalComponent { kind, present, topology, witness, gradient_residual }
    };
    out.push(mk(ComponentKind::LeadingSphere, k >= 1, format!("S^{}", k as i64 - 1), (k >= 1).then(|| basis(0))));
    out.push(mk(ComponentKind::TrailingSphere, k < n, format!("S^{}", n as i64 - k as i64 - 1), (k < n).then(|| basis(k))));
    // F_w ∩ M_k: z = (i y', x'') with −|y'|² + |x''|² = w
    let real = w.im == 0.0;
    let u = w.re;
    let level = if !real {
        None
    } else if u > 0.0 && k < n {
        let t: f64 = if k >= 1 { 0.7 } else { 0.0 };
        let mut z = vec![C::new(0.0, 0.0); n];
        if k >= 1 {
            z[0] = C::new(0.0, t);
        }
        z[k] = C::new((u + t * t).sqrt(), 0.0);
        Some((z, if k == 0 { format!("S^{}", n - 1) } else { format!("R^{}×S^{}", k, n - k - 1) }))
    } else if u < 0.0 && k >= 1 {
        let t: f64 = if k < n { 0.7 } else { 0.0 };
        let mut z = vec![C::new(0.0, 0.0); n];
        z[0] = C::new(0.0, (t * t - u).sqrt());
        if k < n {
            z[k] = C::new(t, 0.0);
        }
        Some((z, if k == n { format!("S^{}", n - 1) } else { format!("S^{}×R^{}", k - 1, n - k) }))
    } else {
        None
    };
    out.push(match level {
        Some((z, topo)) => mk(ComponentKind::RealLevel, true, topo, Some(z)),
        None => mk(ComponentKind::RealLevel, false, "empty".into(), None),
    });
    Ok(out)
}

/// Newton iteration on `∇ρ_k = a ∇Re h + b ∇Im h`, `h(z) = w` from a seed;
/// returns the converged point, or `None` on divergence.
pub fn refine_critical_point(k: usize, w: C<f64>, seed: &[C<f64>], iters: usize) -> Option<Vec<C<f64>>> {
    let n = seed.len();
    let m = 2 * n + 2;
    let mut x: Vec<f64> = seed.iter().map(|v| v.re).chain(seed.iter().map(|v| v.im)).collect();
    x.extend([0.0, 0.0]);
    let resid = |x: &[f64]| -> Vec<f64> {
        let mut r = vec![0.0; m];
        let (a, b) = (x[2 * n], x[2 * n + 1]);
        for j in 0..n {
            let (xj, yj) = (x[j], x[n + j]);
            let (gx, gy) = if j < k { (xj, 0.0) } else { (0.0, yj) };
            r[j] = gx - a * 2.0 * xj - b * 2.0 * yj;
            r[n + j] = gy + a * 2.0 * yj - b * 2.0 * xj;
        }
        let z: Vec<C<f64>> = (0..n).map(|j| C::new(x[j], x[n + j])).collect();
        let h = h_value(&z) - w;
        r[2 * n] = h.re;
        r[2 * n + 1] = h.im;
        r
    };
    for _ in 0..iters {
        let r = resid(&x);
        if norm(&r) < 1e-13 {
            break;
        }
        let eps = 1e-7;
        let mut jac: Mat<f64> = vec![vec![0.0; m]; m];
        for c in 0..m {
            let mut xp = x.clone();
            let mut xm = x.clone();
            xp[c] += eps;
            xm[c] -= eps;
            let (rp, rm) = (resid(&xp), resid(&xm));
            for rrow in 0..m {
                jac[rrow][c] = (rp[rrow] - rm[rrow]) / (2.0 * eps);
            }
        }
        // least-squares step through the normal equations (the critical set is
        // not isolated)
        let jt: Mat<f64> = (0..m).map(|i| (0..m).map(|j| jac[j][i]).collect()).collect();
        let mut jtj: Mat<f64> = (0..m).map(|i| (0..m).map(|j| dot(&jt[i], &jt[j])).collect()).collect();
        for (i, row) in jtj.iter_mut().enumerate() {
            row[i] += 1e-12;
        }
        let jtr: Vec<f64> = jt.iter().map(|row| dot(row, &r)).collect();
        let step = crate::linalg::solve(&jtj, &jtr, 1e-300)?;
        for (xi, si) in x.iter_mut().zip(&step) {
            *xi -= si;
        }
    }
    let z: Vec<C<f64>> = (0..n).map(|j| C::new(x[j], x[n + j])).collect();
    let bound = 1e2 * (1.0 + w.norm().sqrt() + norm2(seed).sqrt());
    (norm(&resid(&x)) < 1e-9 && norm2(&z).sqrt() < bound).then_some(z)
}

/// How to carry curves from `F_{−u}` to `F_u`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum TransportMethod {
    Closed,
    Ode(OdeConfig),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SurgeryRow {
    pub r: f64,
    pub theta_measured: f64,
    pub theta_template: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SurgeryReport {
    pub rows: Vec<SurgeryRow>,
    pub max_deviation: f64,
    /// Radius at which the image of the `θ₀ = 0` ray meets `Z_u ∩ CP`, and
    /// the angular shift there.
    pub crossing_radius: f64,
    pub crossing_shift: f64,
}

fn wrap_angle(a: f64) -> f64 {
    use std::f64::consts::{PI, TAU};
    let mut x = (a + PI).rem_euclid(TAU) - PI;
    if x <= -PI {
        x += TAU;
    }
    x
}

/// Transports the rays `Q_{k,−u} ∩ CP` through `τ_π` and compares their
/// images with `θ(r) = θ₀ + π/(1+r⁴)`. `frame.e1` must lie in `R^k × 0` and
/// `frame.e2` in `0 × R^{n−k}`.
pub fn surgery_compare(
    k: usize,
    u: f64,
    frame: &PlaneFrame<f64>,
    method: TransportMethod,
    r_grid: &[f64],
) -> Result<SurgeryReport, LocalModelError> {
    use std::f64::consts::PI;
    let n = frame.dim();
    if k == 0 || k >= n || !(u > 0.0) {
        return Err(LocalModelError::PlaneMissesLevel);
    }
    let split_ok = frame.e1[k..].iter().all(|v| v.abs() < 1e-12) && frame.e2[..k].iter().all(|v| v.abs() < 1e-12);
    if !split_ok {
        return Err(LocalModelError::PlaneMissesLevel);
    }
    let wm = C::new(-u, 0.0);
    let wp = C::new(u, 0.0);
    let carry = |theta0: f64, r: f64| -> Result<AnnulusCoord<f64>, LocalModelError> {
        let (a, b) = psi(wm, AnnulusCoord { r, theta: theta0 });
        let z = frame.from_special(a, b);
        // the start point lies on M_k
        let img = match method {
            TransportMethod::Closed => transport_closed_cn(&z, PI)?,
            TransportMethod::Ode(cfg) => transport_flow_cn(&z, PI, &cfg)?.z,
        };
        let (a2, _) = frame.special(&img);
        Ok(psi_inv(wp, a2))
    };
    let mut rows = Vec::new();
    let mut dev: f64 = 0.0;
    for &theta0 in &[0.0, PI] {
        for &r in r_grid {
            let img = carry(theta0, r)?;
            let tmpl = theta0 + PI / (1.0 + r.powi(4));
            dev = dev.max(wrap_angle(img.theta - tmpl).abs()).max((img.r - r).abs());
            rows.push(SurgeryRow { r, theta_measured: img.theta, theta_template: tmpl });
        }
    }
    // bisection on the transported modulus against the unit circle
    let (mut lo, mut hi) = (0.2f64, 5.0f64);
    let f = |r: f64| carry(0.0, r).map(|a| a.r - 1.0);
    let (flo, _) = (f(lo)?, f(hi)?);
    for _ in 0..60 {
        let mid = 0.5 * (lo + hi);
        let fm = f(mid)?;
        if (fm < 0.0) == (flo < 0.0) {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let crossing_radius = 0.5 * (lo + hi);
    let crossing_shift = wrap_angle(carry(0.0, crossing_radius)?.theta);
    Ok(SurgeryReport { rows, max_deviation: dev, crossing_radius, crossing_shift })
}

/// Parameters of the perturbation `ρ#_k = ρ_k + (c/2) σ(|z|²)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SharpConfig {
    pub delta: f64,
    pub c: f64,
}

impl Default for SharpConfig {
    fn default() -> Self {
        Self { delta: 0.1, c: 0.04 }
    }
}

impl SharpConfig {
    /// `σ(t) = t (1 − S((t − 4δ²)/5δ²))`: identity up to `4δ²`, zero from `9δ²`.
    pub fn sigma<S: Real>(&self, t: S) -> S {
        let d2: S = lit(self.delta * self.delta);
        t * (S::one() - smoothstep5((t - d2 * lit(4.0)) / (d2 * lit(5.0))))
    }

    pub fn sigma_prime(&self, t: f64) -> f64 {
        let x = crate::scalar::Dual::variable(t);
        self.sigma(x).eps
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SharpReport {
    /// Max residual of each of the four equation families.
    pub residuals: [f64; 4],
    pub max_residual: f64,
    pub im_h: f64,
    pub norm2: f64,
    pub in_shell: bool,
}

/// Residuals of the tangency system for `T_zF_w ⊂ ker λ#` at `z`.
pub fn sharp_system_check(cfg: &SharpConfig, k: usize, z: &[C<f64>]) -> SharpReport {
    let n = z.len();
    let x: Vec<f64> = z.iter().map(|v| v.re).collect();
    let y: Vec<f64> = z.iter().map(|v| v.im).collect();
    let t = norm2(z);
    let sp = cfg.sigma_prime(t);
    let c = cfg.c;
    let mut res = [0.0f64; 4];
    for l in 0..n {
        for j in 0..l {
            if l < k {
                res[0] = res[0].max((y[l] * x[j] - x[l] * y[j]).abs());
            } else if j >= k {
                res[1] = res[1].max((y[l] * x[j] - x[l] * y[j]).abs());
            }
        }
    }
    for j in 0..k {
        for l in k..n {
            res[2] = res[2].max((x[l] * x[j] - y[l] * y[j]).abs());
            res[3] = res[3].max(((1.0 + c * sp) * y[l] * x[j] - c * sp * x[l] * y[j]).abs());
        }
    }
    let d = cfg.delta;
    SharpReport {
        residuals: res,
        max_residual: res.iter().cloned().fold(0.0, f64::max),
        im_h: h_value(z).im,
        norm2: t,
        in_shell: t >= d * d * (1.0 - 1e-12) && t <= 4.0 * d * d * (1.0 + 1e-12),
    }
}

/// The solution family `y' = μx'`, `x'' = μy''` with `μ² = (1+c)/c`,
/// scaled to `|z| = radius`.
pub fn sharp_solution(cfg: &SharpConfig, k: usize, xp: &[f64], ypp: &[f64], radius: f64, sign: f64) -> Vec<C<f64>> {
    let mu = sign * ((1.0 + cfg.c) / cfg.c).sqrt();
    let mut z: Vec<C<f64>> = xp.iter().map(|&a| C::new(a, mu * a)).collect();
    z.extend(ypp.iter().map(|&b| C::new(mu * b, b)));
    debug_assert_eq!(z.len(), k + ypp.len());
    let s = radius / norm2(&z).sqrt();
    z.iter().map(|v| v * s).collect()
}

struct RhoSharp {
    k: usize,
    n: usize,
    cfg: SharpConfig,
}

impl ScalarFn for RhoSharp {
    fn call<S: Real>(&self, x: &[S]) -> S {
        let t: S = x.iter().map(|&v| v * v).sum();
        RhoK { k: self.k, n: self.n }.call(x) + self.cfg.sigma(t) * lit(self.cfg.c * 0.5)
    }
}

/// Smallest eigenvalue of the Levi form of `ρ#_k` over samples of the ball
/// `|z| ≤ 3δ` (positive means pseudoconvex there).
pub fn sharp_pseudoconvexity(cfg: &SharpConfig, k: usize, n: usize, samples: usize, seed: u64) -> f64 {
    let f = RhoSharp { k, n, cfg: *cfg };
    let mut r = rng(seed, 23);
    let mut worst = f64::INFINITY;
    for i in 0..samples {
        let dir = unit_vector(&mut r, 2 * n);
        let rad = 3.0 * cfg.delta * (i as f64 + 0.5) / samples as f64;
        let x: Vec<f64> = dir.iter().map(|v| v * rad).collect();
        let h = hessian(&f, &x);
        // H + Jᵀ H J with J(x, y) = (−y, x)
        let m = 2 * n;
        let jmap = |i: usize| if i < n { (i + n, 1.0) } else { (i - n, -1.0) };
        let a: Mat<f64> = (0..m)
            .map(|i| {
                (0..m)
                    .map(|j| {
                        let (ii, si) = jmap(i);
                        let (jj, sj) = jmap(j);
                        h[i][j] + si * sj * h[ii][jj]
                    })
                    .collect()
            })
            .collect();
        let (vals, _) = sym_eigen(&a);
        worst = worst.min(vals[0] / 4.0);
    }
    worst
}

/// Null space helper re-exported for tangent-space computations on fibers.
pub fn fiber_tangent_basis(z: &[C<f64>]) -> Vec<Vec<f64>> {
    let nre: Vec<f64> = z.iter().map(|v| v.re).chain(z.iter().map(|v| -v.im)).collect();
    let nim: Vec<f64> = z.iter().map(|v| v.im).chain(z.iter().map(|v| v.re)).collect();
    null_space(&[nre, nim], 2 * z.len(), 1e-12)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn complex_differential_convention() {
        complex_differential_self_test().unwrap();
    }

    #[test]
    fn transport_examples() {
        let one = C::new(1.0, 0.0);
        let (a, b) = transport_plane_closed(one, one, std::f64::consts::PI).unwrap();
        assert!((a - C::new(0.0, 1.0)).norm() < 1e-15 && (b - C::new(0.0, 1.0)).norm() < 1e-15);
        let (a, b) = transport_plane_closed(one, C::new(0.0, 0.0), 2.3).unwrap();
        assert_eq!((a, b), (one, C::new(0.0, 0.0)));
        assert!(transport_plane_closed(C::new(0.0, 0.0), C::new(0.0, 0.0), 1.0).is_err());
    }

    #[test]
    fn annulus_examples() {
        let a = annulus_twist(AnnulusCoord { r: 1.0, theta: 0.0 }, std::f64::consts::TAU);
        assert!((a.theta - std::f64::consts::PI).abs() < 1e-15);
        let b = annulus_twist(AnnulusCoord { r: 8.0, theta: 0.0 }, std::f64::consts::TAU);
        assert!(b.theta < 2e-3);
    }

    #[test]
    fn sigma_profile() {
        let cfg = SharpConfig { delta: 0.2, c: 0.1 };
        assert!((cfg.sigma_prime(0.1) - 1.0).abs() < 1e-14);
        assert!((cfg.sigma_prime(0.16) - 1.0).abs() < 1e-14);
        assert_eq!(cfg.sigma(0.4), 0.0);
    }
}
