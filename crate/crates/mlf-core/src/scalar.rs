//! Scalar abstraction and forward-mode dual numbers.
//!
//! Every numerical routine in the crate is written against [`Real`], so the
//! same code runs on `f32`, `f64` and on [`Dual`] numbers (nested as deep as a
//! derivative order requires).

use std::cmp::Ordering;
use std::fmt;
use std::iter::Sum;
use std::num::FpCategory;
use std::ops::{Add, AddAssign, Div, DivAssign, Mul, MulAssign, Neg, Rem, RemAssign, Sub, SubAssign};

use num_traits::{
    Float, FloatConst, FromPrimitive, Num, NumAssignOps, NumCast, One, ToPrimitive, Zero,
};

/// Real scalar accepted by the numerical core.
pub trait Real:
    Float
    + FloatConst
    + FromPrimitive
    + NumAssignOps
    + Sum
    + Default
    + fmt::Debug
    + fmt::Display
    + Send
    + Sync
    + 'static
{
}

impl<T> Real for T where
    T: Float
        + FloatConst
        + FromPrimitive
        + NumAssignOps
        + Sum
        + Default
        + fmt::Debug
        + fmt::Display
        + Send
        + Sync
        + 'static
{
}

/// Converts an `f64` literal into the working scalar.
#[inline]
pub fn lit<T: Real>(x: f64) -> T {
    T::from_f64(x).expect("literal representable in scalar type")
}

/// Lossy conversion to `f64` for reporting.
#[inline]
pub fn to_f64<T: Real>(x: T) -> f64 {
    x.to_f64().unwrap_or(f64::NAN)
}

/// Quintic smoothstep `t³(10 − 15t + 6t²)`: 0 for `t ≤ 0`, 1 for `t ≥ 1`, with vanishing
/// first and second derivatives at both ends.
pub fn smoothstep5<S: Real>(t: S) -> S {
    if t <= S::zero() {
        S::zero()
    } else if t >= S::one() {
        S::one()
    } else {
        t * t * t * (lit::<S>(10.0) - lit::<S>(15.0) * t + lit::<S>(6.0) * t * t)
    }
}

/// First-order dual number `re + eps·ε` with `ε² = 0`.
#[derive(Clone, Copy, Default)]
pub struct Dual<T> {
    pub re: T,
    pub eps: T,
}

impl<T: Real> Dual<T> {
    #[inline]
    pub fn new(re: T, eps: T) -> Self {
        Self { re, eps }
    }

    #[inline]
    pub fn constant(re: T) -> Self {
        Self { re, eps: T::zero() }
    }

    #[inline]
    pub fn variable(re: T) -> Self {
        Self { re, eps: T::one() }
    }

    #[inline]
    fn chain(self, f: T, df: T) -> Self {
        Self { re: f, eps: self.eps * df }
    }
}

impl<T: fmt::Debug> fmt::Debug for Dual<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Dual({:?}, {:?})", self.re, self.eps)
    }
}

impl<T: fmt::Display> fmt::Display for Dual<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}+{}ε", self.re, self.eps)
    }
}

impl<T: Real> PartialEq for Dual<T> {
    fn eq(&self, other: &Self) -> bool {
        self.re == other.re
    }
}

impl<T: Real> PartialOrd for Dual<T> {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        self.re.partial_cmp(&other.re)
    }
}

impl<T: Real> Add for Dual<T> {
    type Output = Self;
    #[inline]
    fn add(self, o: Self) -> Self {
        Self::new(self.re + o.re, self.eps + o.eps)
    }
}

impl<T: Real> Sub for Dual<T> {
    type Output = Self;
    #[inline]
    fn sub(self, o: Self) -> Self {
        Self::new(self.re - o.re, self.eps - o.eps)
    }
}

impl<T: Real> Mul for Dual<T> {
    type Output = Self;
    #[inline]
    fn mul(self, o: Self) -> Self {
        Self::new(self.re * o.re, self.eps * o.re + self.re * o.eps)
    }
}

impl<T: Real> Div for Dual<T> {
    type Output = Self;
    #[inline]
    fn div(self, o: Self) -> Self {
        let inv = T::one() / o.re;
        let re = self.re * inv;
        Self::new(re, (self.eps - re * o.eps) * inv)
    }
}

impl<T: Real> Rem for Dual<T> {
    type Output = Self;
    fn rem(self, o: Self) -> Self {
        let q = (self.re / o.re).trunc();
        Self::new(self.re % o.re, self.eps - o.eps * q)
    }
}

impl<T: Real> Neg for Dual<T> {
    type Output = Self;
    #[inline]
    fn neg(self) -> Self {
        Self::new(-self.re, -self.eps)
    }
}

macro_rules! assign_op {
    ($tr:ident, $m:ident, $op:tt) => {
        impl<T: Real> $tr for Dual<T> {
            #[inline]
            fn $m(&mut self, o: Self) {
                *self = *self $op o;
            }
        }
    };
}
assign_op!(AddAssign, add_assign, +);
assign_op!(SubAssign, sub_assign, -);
assign_op!(MulAssign, mul_assign, *);
assign_op!(DivAssign, div_assign, /);
assign_op!(RemAssign, rem_assign, %);

impl<T: Real> Zero for Dual<T> {
    fn zero() -> Self {
        Self::constant(T::zero())
    }
    fn is_zero(&self) -> bool {
        self.re.is_zero()
    }
}

impl<T: Real> One for Dual<T> {
    fn one() -> Self {
        Self::constant(T::one())
    }
}

impl<T: Real> Num for Dual<T> {
    type FromStrRadixErr = T::FromStrRadixErr;
    fn from_str_radix(s: &str, radix: u32) -> Result<Self, Self::FromStrRadixErr> {
        T::from_str_radix(s, radix).map(Self::constant)
    }
}

impl<T: Real> ToPrimitive for Dual<T> {
    fn to_i64(&self) -> Option<i64> {
        self.re.to_i64()
    }
    fn to_u64(&self) -> Option<u64> {
        self.re.to_u64()
    }
    fn to_f64(&self) -> Option<f64> {
        self.re.to_f64()
    }
}

impl<T: Real> NumCast for Dual<T> {
    fn from<N: ToPrimitive>(n: N) -> Option<Self> {
        <T as NumCast>::from(n).map(Self::constant)
    }
}

impl<T: Real> FromPrimitive for Dual<T> {
    fn from_i64(n: i64) -> Option<Self> {
        T::from_i64(n).map(Self::constant)
    }
    fn from_u64(n: u64) -> Option<Self> {
        T::from_u64(n).map(Self::constant)
    }
    fn from_f64(n: f64) -> Option<Self> {
        T::from_f64(n).map(Self::constant)
    }
}

impl<T: Real> Sum for Dual<T> {
    fn sum<I: Iterator<Item = Self>>(iter: I) -> Self {
        iter.fold(Self::zero(), |a, b| a + b)
    }
}

macro_rules! dual_consts {
    ($($name:ident),*) => {
        $(
            #[allow(non_snake_case)]
            fn $name() -> Self {
                Self::constant(T::$name())
            }
        )*
    };
}

impl<T: Real> FloatConst for Dual<T> {
    dual_consts!(
        E, FRAC_1_PI, FRAC_1_SQRT_2, FRAC_2_PI, FRAC_2_SQRT_PI, FRAC_PI_2, FRAC_PI_3,
        FRAC_PI_4, FRAC_PI_6, FRAC_PI_8, LN_10, LN_2, LOG10_E, LOG2_E, PI, SQRT_2
    );
}

impl<T: Real> Float for Dual<T> {
    fn nan() -> Self {
        Self::constant(T::nan())
    }
    fn infinity() -> Self {
        Self::constant(T::infinity())
    }
    fn neg_infinity() -> Self {
        Self::constant(T::neg_infinity())
    }
    fn neg_zero() -> Self {
        Self::constant(T::neg_zero())
    }
    fn min_value() -> Self {
        Self::constant(T::min_value())
    }
    fn min_positive_value() -> Self {
        Self::constant(T::min_positive_value())
    }
    fn epsilon() -> Self {
        Self::constant(T::epsilon())
    }
    fn max_value() -> Self {
        Self::constant(T::max_value())
    }
    fn is_nan(self) -> bool {
        self.re.is_nan() || self.eps.is_nan()
    }
    fn is_infinite(self) -> bool {
        self.re.is_infinite()
    }
    fn is_finite(self) -> bool {
        self.re.is_finite() && self.eps.is_finite()
    }
    fn is_normal(self) -> bool {
        self.re.is_normal()
    }
    fn classify(self) -> FpCategory {
        self.re.classify()
    }
    fn floor(self) -> Self {
        Self::constant(self.re.floor())
    }
    fn ceil(self) -> Self {
        Self::constant(self.re.ceil())
    }
    fn round(self) -> Self {
        Self::constant(self.re.round())
    }
    fn trunc(self) -> Self {
        Self::constant(self.re.trunc())
    }
    fn fract(self) -> Self {
        Self::new(self.re.fract(), self.eps)
    }
    fn abs(self) -> Self {
        if self.re < T::zero() {
            -self
        } else {
            self
        }
    }
    fn signum(self) -> Self {
        Self::constant(self.re.signum())
    }
    fn is_sign_positive(self) -> bool {
        self.re.is_sign_positive()
    }
    fn is_sign_negative(self) -> bool {
        self.re.is_sign_negative()
    }
    fn mul_add(self, a: Self, b: Self) -> Self {
        self * a + b
    }
    fn recip(self) -> Self {
        let r = self.re.recip();
        self.chain(r, -r * r)
    }
    fn powi(self, n: i32) -> Self {
        if n == 0 {
            return Self::one();
        }
        let pm1 = self.re.powi(n - 1);
        self.chain(pm1 * self.re, T::from_i32(n).unwrap() * pm1)
    }
    fn powf(self, n: Self) -> Self {
        if n.eps.is_zero() {
            let p = self.re.powf(n.re);
            let d = if self.re.is_zero() {
                T::zero()
            } else {
                n.re * p / self.re
            };
            return self.chain(p, d);
        }
        (self.ln() * n).exp()
    }
    fn sqrt(self) -> Self {
        let s = self.re.sqrt();
        self.chain(s, T::one() / (s + s))
    }
    fn exp(self) -> Self {
        let e = self.re.exp();
        self.chain(e, e)
    }
    fn exp2(self) -> Self {
        let e = self.re.exp2();
        self.chain(e, e * T::LN_2())
    }
    fn ln(self) -> Self {
        self.chain(self.re.ln(), self.re.recip())
    }
    fn log(self, base: Self) -> Self {
        self.ln() / base.ln()
    }
    fn log2(self) -> Self {
        self.chain(self.re.log2(), (self.re * T::LN_2()).recip())
    }
    fn log10(self) -> Self {
        self.chain(self.re.log10(), (self.re * T::LN_10()).recip())
    }
    fn max(self, o: Self) -> Self {
        if o.re > self.re || self.re.is_nan() {
            o
        } else {
            self
        }
    }
    fn min(self, o: Self) -> Self {
        if o.re < self.re || self.re.is_nan() {
            o
        } else {
            self
        }
    }
    fn abs_sub(self, o: Self) -> Self {
        if self.re <= o.re {
            Self::zero()
        } else {
            self - o
        }
    }
    fn cbrt(self) -> Self {
        let c = self.re.cbrt();
        self.chain(c, (lit::<T>(3.0) * c * c).recip())
    }
    fn hypot(self, o: Self) -> Self {
        (self * self + o * o).sqrt()
    }
    fn sin(self) -> Self {
        let (s, c) = self.re.sin_cos();
        self.chain(s, c)
    }
    fn cos(self) -> Self {
        let (s, c) = self.re.sin_cos();
        self.chain(c, -s)
    }
    fn tan(self) -> Self {
        let t = self.re.tan();
        self.chain(t, T::one() + t * t)
    }
    fn asin(self) -> Self {
        self.chain(self.re.asin(), (T::one() - self.re * self.re).sqrt().recip())
    }
    fn acos(self) -> Self {
        self.chain(self.re.acos(), -(T::one() - self.re * self.re).sqrt().recip())
    }
    fn atan(self) -> Self {
        self.chain(self.re.atan(), (T::one() + self.re * self.re).recip())
    }
    fn atan2(self, o: Self) -> Self {
        let d = self.re * self.re + o.re * o.re;
        Self::new(self.re.atan2(o.re), (o.re * self.eps - self.re * o.eps) / d)
    }
    fn sin_cos(self) -> (Self, Self) {
        let (s, c) = self.re.sin_cos();
        (self.chain(s, c), self.chain(c, -s))
    }
    fn exp_m1(self) -> Self {
        self.chain(self.re.exp_m1(), self.re.exp())
    }
    fn ln_1p(self) -> Self {
        self.chain(self.re.ln_1p(), (T::one() + self.re).recip())
    }
    fn sinh(self) -> Self {
        self.chain(self.re.sinh(), self.re.cosh())
    }
    fn cosh(self) -> Self {
        self.chain(self.re.cosh(), self.re.sinh())
    }
    fn tanh(self) -> Self {
        let t = self.re.tanh();
        self.chain(t, T::one() - t * t)
    }
    fn asinh(self) -> Self {
        self.chain(self.re.asinh(), (self.re * self.re + T::one()).sqrt().recip())
    }
    fn acosh(self) -> Self {
        self.chain(self.re.acosh(), (self.re * self.re - T::one()).sqrt().recip())
    }
    fn atanh(self) -> Self {
        self.chain(self.re.atanh(), (T::one() - self.re * self.re).recip())
    }
    fn integer_decode(self) -> (u64, i16, i8) {
        self.re.integer_decode()
    }
}

/// Scalar function of several variables, generic over the evaluation scalar so
/// that it can be differentiated with nested [`Dual`] numbers.
pub trait ScalarFn {
    fn call<S: Real>(&self, x: &[S]) -> S;
}

/// Value and gradient of `f` at `x`.
pub fn gradient<T: Real, F: ScalarFn>(f: &F, x: &[T]) -> (T, Vec<T>) {
    let mut xs: Vec<Dual<T>> = x.iter().map(|&v| Dual::constant(v)).collect();
    let mut value = T::zero();
    let mut g = Vec::with_capacity(x.len());
    for i in 0..x.len() {
        xs[i].eps = T::one();
        let d = f.call(&xs);
        value = d.re;
        g.push(d.eps);
        xs[i].eps = T::zero();
    }
    if x.is_empty() {
        value = f.call(&xs).re;
    }
    (value, g)
}

/// Value and derivative of `f` along direction `v`.
pub fn directional<T: Real, F: ScalarFn>(f: &F, x: &[T], v: &[T]) -> (T, T) {
    let xs: Vec<Dual<T>> = x.iter().zip(v).map(|(&a, &b)| Dual::new(a, b)).collect();
    let d = f.call(&xs);
    (d.re, d.eps)
}

/// Hessian of `f` at `x` (row-major, symmetric).
pub fn hessian<T: Real, F: ScalarFn>(f: &F, x: &[T]) -> Vec<Vec<T>> {
    let n = x.len();
    let mut h = vec![vec![T::zero(); n]; n];
    let mut xs: Vec<Dual<Dual<T>>> = x
        .iter()
        .map(|&v| Dual::constant(Dual::constant(v)))
        .collect();
    for i in 0..n {
        for j in i..n {
            xs[i].re.eps = T::one();
            xs[j].eps.re += T::one();
            let d = f.call(&xs);
            h[i][j] = d.eps.eps;
            h[j][i] = d.eps.eps;
            xs[i].re.eps = T::zero();
            xs[j].eps.re = T::zero();
        }
    }
    h
}

#[cfg(test)]
mod tests {
    use super::*;

    struct Poly;
    impl ScalarFn for Poly {
        fn call<S: Real>(&self, x: &[S]) -> S {
            x[0] * x[0] * x[1] + x[1].sin() * x[0].exp()
        }
    }

    #[test]
    fn gradient_and_hessian_of_polynomial() {
        let x = [0.7_f64, -0.3];
        let (v, g) = gradient(&Poly, &x);
        let e = x[0].exp();
        assert!((v - (x[0] * x[0] * x[1] + x[1].sin() * e)).abs() < 1e-15);
        assert!((g[0] - (2.0 * x[0] * x[1] + x[1].sin() * e)).abs() < 1e-14);
        assert!((g[1] - (x[0] * x[0] + x[1].cos() * e)).abs() < 1e-14);
        let h = hessian(&Poly, &x);
        assert!((h[0][0] - (2.0 * x[1] + x[1].sin() * e)).abs() < 1e-14);
        assert!((h[0][1] - (2.0 * x[0] + x[1].cos() * e)).abs() < 1e-14);
        assert!((h[1][1] + x[1].sin() * e).abs() < 1e-14);
    }

    #[test]
    fn elementary_derivatives() {
        let x = Dual::variable(0.4_f64);
        let cases: [(Dual<f64>, f64); 6] = [
            (x.sqrt(), 0.5 / 0.4_f64.sqrt()),
            (x.ln(), 1.0 / 0.4),
            (x.tanh(), 1.0 - 0.4_f64.tanh().powi(2)),
            (x.powf(Dual::constant(2.5)), 2.5 * 0.4_f64.powf(1.5)),
            (x.atan2(Dual::constant(1.3)), 1.3 / (0.16 + 1.69)),
            (x.powi(3), 3.0 * 0.16),
        ];
        for (d, want) in cases {
            assert!((d.eps - want).abs() < 1e-13, "{d:?} vs {want}");
        }
    }

    #[test]
    fn runs_on_f32() {
        let (_, g) = gradient(&Poly, &[0.5_f32, 0.25]);
        assert!((g[1] - (0.25 + 0.25_f32.cos() * 0.5_f32.exp())).abs() < 1e-5);
    }
}
