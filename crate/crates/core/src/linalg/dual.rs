use std::ops::{Add, AddAssign, Div, Mul, MulAssign, Neg, Sub, SubAssign};

use super::Scalar;

/// Forward-mode dual number `value + deriv·ε` with `ε² = 0`.
///
/// Seeding one parameter with `deriv = 1` and every other input with
/// `deriv = 0` makes any computation built from these operations return the
/// partial derivative with respect to that parameter alongside its value.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Dual {
    pub value: f64,
    pub deriv: f64,
}

impl Dual {
    #[inline]
    pub const fn new(value: f64, deriv: f64) -> Self {
        Self { value, deriv }
    }

    #[inline]
    pub const fn constant(value: f64) -> Self {
        Self { value, deriv: 0.0 }
    }

    #[inline]
    pub const fn variable(value: f64) -> Self {
        Self { value, deriv: 1.0 }
    }
}

impl Scalar for Dual {
    #[inline]
    fn from_f64(v: f64) -> Self {
        Dual::constant(v)
    }

    #[inline]
    fn value(self) -> f64 {
        self.value
    }

    #[inline]
    fn lift(self, f: f64, df: f64) -> Self {
        Dual::new(f, df * self.deriv)
    }

    #[inline]
    fn is_finite(self) -> bool {
        self.value.is_finite() && self.deriv.is_finite()
    }

    #[inline]
    fn scale(self, c: f64) -> Self {
        Dual::new(self.value * c, self.deriv * c)
    }
}

impl Add for Dual {
    type Output = Dual;
    #[inline]
    fn add(self, rhs: Dual) -> Dual {
        Dual::new(self.value + rhs.value, self.deriv + rhs.deriv)
    }
}

impl Sub for Dual {
    type Output = Dual;
    #[inline]
    fn sub(self, rhs: Dual) -> Dual {
        Dual::new(self.value - rhs.value, self.deriv - rhs.deriv)
    }
}

impl Mul for Dual {
    type Output = Dual;
    #[inline]
    fn mul(self, rhs: Dual) -> Dual {
        Dual::new(
            self.value * rhs.value,
            self.deriv * rhs.value + self.value * rhs.deriv,
        )
    }
}

impl Div for Dual {
    type Output = Dual;
    #[inline]
    fn div(self, rhs: Dual) -> Dual {
        let inv = 1.0 / rhs.value;
        let q = self.value * inv;
        Dual::new(q, (self.deriv - q * rhs.deriv) * inv)
    }
}

impl Neg for Dual {
    type Output = Dual;
    #[inline]
    fn neg(self) -> Dual {
        Dual::new(-self.value, -self.deriv)
    }
}

impl AddAssign for Dual {
    #[inline]
    fn add_assign(&mut self, rhs: Dual) {
        self.value += rhs.value;
        self.deriv += rhs.deriv;
    }
}

impl SubAssign for Dual {
    #[inline]
    fn sub_assign(&mut self, rhs: Dual) {
        self.value -= rhs.value;
        self.deriv -= rhs.deriv;
    }
}

impl MulAssign for Dual {
    #[inline]
    fn mul_assign(&mut self, rhs: Dual) {
        *self = *self * rhs;
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn central(f: impl Fn(f64) -> f64, x: f64) -> f64 {
        let h = 1e-6;
        (f(x + h) - f(x - h)) / (2.0 * h)
    }

    fn check(name: &str, lo: f64, hi: f64, d: impl Fn(Dual) -> Dual, f: impl Fn(f64) -> f64) {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..1000 {
            let x = rng.random_range(lo..hi);
            let got = d(Dual::variable(x));
            let want = central(&f, x);
            assert!((got.value - f(x)).abs() <= 1e-12 * f(x).abs().max(1.0), "{name} value at {x}");
            let err = (got.deriv - want).abs() / want.abs().max(1.0);
            assert!(err <= 1e-6, "{name} at {x}: dual {} vs fd {want}", got.deriv);
        }
    }

    #[test]
    fn catalog_matches_finite_differences() {
        check("exp", -5.0, 5.0, |x| x.exp(), f64::exp);
        check("ln", 0.1, 10.0, |x| x.ln(), f64::ln);
        check("tanh", -5.0, 5.0, |x| x.tanh(), f64::tanh);
        check("sqrt", 0.1, 10.0, |x| x.sqrt(), f64::sqrt);
        check("mul", -5.0, 5.0, |x| x * x * Dual::constant(3.0), |x| 3.0 * x * x);
        check("add", -5.0, 5.0, |x| x + x.exp(), |x| x + x.exp());
        check("div", 0.5, 5.0, |x| (x + Dual::constant(1.0)) / (x * x), |x| (x + 1.0) / (x * x));
        check("neg/sub", -5.0, 5.0, |x| -(x - x.tanh()), |x| -(x - x.tanh()));
    }

    #[test]
    fn chain_rule_composes() {
        // d/dx tanh(exp(x)) = (1 - tanh²(e^x))·e^x
        let x = 0.3_f64;
        let d = Dual::variable(x).exp().tanh();
        let t = x.exp().tanh();
        assert!((d.deriv - (1.0 - t * t) * x.exp()).abs() < 1e-15);
    }

    #[test]
    fn constants_carry_no_tangent() {
        let c = Dual::constant(2.5);
        assert_eq!((c * c + c.exp()).deriv, 0.0);
    }
}
