use std::fmt::Debug;
use std::ops::{Add, AddAssign, Div, Mul, MulAssign, Neg, Sub, SubAssign};

/// Field element the model math is written against: `f64` for evaluation,
/// [`Dual`](super::Dual) for parameter derivatives.
pub trait Scalar:
    Copy
    + Debug
    + PartialEq
    + Add<Output = Self>
    + Sub<Output = Self>
    + Mul<Output = Self>
    + Div<Output = Self>
    + Neg<Output = Self>
    + AddAssign
    + SubAssign
    + MulAssign
    + 'static
{
    fn from_f64(v: f64) -> Self;

    /// The primal value.
    fn value(self) -> f64;

    /// Applies a scalar function whose value `f` and derivative `df` at
    /// `self.value()` are already known.
    fn lift(self, f: f64, df: f64) -> Self;

    fn zero() -> Self {
        Self::from_f64(0.0)
    }

    fn one() -> Self {
        Self::from_f64(1.0)
    }

    fn is_finite(self) -> bool;

    fn scale(self, c: f64) -> Self {
        self * Self::from_f64(c)
    }

    fn exp(self) -> Self {
        let e = self.value().exp();
        self.lift(e, e)
    }

    fn ln(self) -> Self {
        let v = self.value();
        self.lift(v.ln(), 1.0 / v)
    }

    fn sqrt(self) -> Self {
        let r = self.value().sqrt();
        self.lift(r, 0.5 / r)
    }

    fn tanh(self) -> Self {
        let t = self.value().tanh();
        self.lift(t, 1.0 - t * t)
    }

    fn abs(self) -> Self {
        let v = self.value();
        self.lift(v.abs(), if v < 0.0 { -1.0 } else { 1.0 })
    }

    fn powi(self, k: i32) -> Self {
        let v = self.value();
        self.lift(v.powi(k), f64::from(k) * v.powi(k - 1))
    }
}

impl Scalar for f64 {
    #[inline]
    fn from_f64(v: f64) -> Self {
        v
    }

    #[inline]
    fn value(self) -> f64 {
        self
    }

    #[inline]
    fn lift(self, f: f64, _df: f64) -> Self {
        f
    }

    #[inline]
    fn is_finite(self) -> bool {
        f64::is_finite(self)
    }

    #[inline]
    fn scale(self, c: f64) -> Self {
        self * c
    }

    #[inline]
    fn exp(self) -> Self {
        f64::exp(self)
    }

    #[inline]
    fn ln(self) -> Self {
        f64::ln(self)
    }

    #[inline]
    fn sqrt(self) -> Self {
        f64::sqrt(self)
    }

    #[inline]
    fn tanh(self) -> Self {
        f64::tanh(self)
    }

    #[inline]
    fn abs(self) -> Self {
        f64::abs(self)
    }

    #[inline]
    fn powi(self, k: i32) -> Self {
        f64::powi(self, k)
    }
}
