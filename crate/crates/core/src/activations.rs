//! Element-wise activation families.
//!
//! Each family is a potential `s`, its derivative `σ = s′` and `σ′`. The
//! cascaded network needs only `σ` monotonically increasing (`σ′ ≥ 0`); the
//! modular network additionally needs `s` convex and nonnegative, which only
//! the families with a closed-form potential provide.
//!
//! Families also expose `σ″`, which the parameter-gradient engine needs to
//! differentiate Jacobians.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::Error;
use crate::linalg::Scalar;

const LN_2: f64 = std::f64::consts::LN_2;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum Activation {
    /// `s = log cosh`, `σ = tanh`.
    LogcoshTanh,
    /// `s = softplus`, `σ = logistic`.
    SoftplusSigmoid,
    /// `σ = softplus`; no elementary potential.
    SoftplusOnly,
    TanhOnly,
    SigmoidOnly,
}

/// Which map of a family to apply to a vector.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Which {
    PotentialSum,
    First,
    Second,
}

/// Result of [`Activation::apply_vec`].
#[derive(Debug, Clone, PartialEq)]
pub enum Applied {
    Scalar(f64),
    Vector(Vec<f64>),
}

impl Activation {
    pub const ALL: [Activation; 5] = [
        Activation::LogcoshTanh,
        Activation::SoftplusSigmoid,
        Activation::SoftplusOnly,
        Activation::TanhOnly,
        Activation::SigmoidOnly,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Activation::LogcoshTanh => "logcosh_tanh",
            Activation::SoftplusSigmoid => "softplus_sigmoid",
            Activation::SoftplusOnly => "softplus_only",
            Activation::TanhOnly => "tanh_only",
            Activation::SigmoidOnly => "sigmoid_only",
        }
    }

    pub fn get(name: &str) -> Result<Self, Error> {
        Self::ALL
            .into_iter()
            .find(|a| a.name() == name)
            .ok_or_else(|| Error::UnknownActivation(name.to_string()))
    }

    /// Whether the family meets the modular network's hypotheses: a convex,
    /// nonnegative potential with `σ = ∇s`.
    pub fn prop2_eligible(self) -> bool {
        matches!(self, Activation::LogcoshTanh | Activation::SoftplusSigmoid)
    }

    pub fn potential(self, t: f64) -> Option<f64> {
        match self {
            Activation::LogcoshTanh => Some(log_cosh(t)),
            Activation::SoftplusSigmoid => Some(softplus(t)),
            _ => None,
        }
    }

    pub fn first(self, t: f64) -> f64 {
        match self {
            Activation::LogcoshTanh | Activation::TanhOnly => t.tanh(),
            Activation::SoftplusSigmoid | Activation::SigmoidOnly => logistic(t),
            Activation::SoftplusOnly => softplus(t),
        }
    }

    pub fn second(self, t: f64) -> f64 {
        match self {
            Activation::LogcoshTanh | Activation::TanhOnly => sech2(t),
            Activation::SoftplusSigmoid | Activation::SigmoidOnly => {
                let l = logistic(t);
                l * (1.0 - l)
            }
            Activation::SoftplusOnly => logistic(t),
        }
    }

    pub fn third(self, t: f64) -> f64 {
        match self {
            Activation::LogcoshTanh | Activation::TanhOnly => -2.0 * t.tanh() * sech2(t),
            Activation::SoftplusSigmoid | Activation::SigmoidOnly => {
                let l = logistic(t);
                l * (1.0 - l) * (1.0 - 2.0 * l)
            }
            Activation::SoftplusOnly => {
                let l = logistic(t);
                l * (1.0 - l)
            }
        }
    }

    /// `s(t)` lifted to any scalar. Panics for families without a potential;
    /// models validate eligibility at construction.
    #[inline]
    pub fn potential_s<T: Scalar>(self, t: T) -> T {
        let v = t.value();
        let s = self.potential(v).expect("activation family has no potential");
        t.lift(s, self.first(v))
    }

    #[inline]
    pub fn first_s<T: Scalar>(self, t: T) -> T {
        let v = t.value();
        t.lift(self.first(v), self.second(v))
    }

    #[inline]
    pub fn second_s<T: Scalar>(self, t: T) -> T {
        let v = t.value();
        t.lift(self.second(v), self.third(v))
    }

    pub fn apply_vec(self, which: Which, z: &[f64]) -> Result<Applied, Error> {
        Ok(match which {
            Which::PotentialSum => {
                if self.potential(0.0).is_none() {
                    return Err(Error::InvalidSpec(format!("{self} has no potential")));
                }
                Applied::Scalar(z.iter().map(|&t| self.potential(t).unwrap_or(0.0)).sum())
            }
            Which::First => Applied::Vector(z.iter().map(|&t| self.first(t)).collect()),
            Which::Second => Applied::Vector(z.iter().map(|&t| self.second(t)).collect()),
        })
    }
}

impl fmt::Display for Activation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Activation {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self, Error> {
        Activation::get(s)
    }
}

impl TryFrom<String> for Activation {
    type Error = Error;
    fn try_from(s: String) -> Result<Self, Error> {
        Activation::get(&s)
    }
}

impl From<Activation> for String {
    fn from(a: Activation) -> String {
        a.name().to_string()
    }
}

/// `log cosh t = |t| + log(1 + e^{−2|t|}) − log 2`.
pub fn log_cosh(t: f64) -> f64 {
    let a = t.abs();
    a + (-2.0 * a).exp().ln_1p() - LN_2
}

/// `log(1 + eᵗ) = max(t, 0) + log(1 + e^{−|t|})`.
pub fn softplus(t: f64) -> f64 {
    t.max(0.0) + (-t.abs()).exp().ln_1p()
}

/// Inverse of [`softplus`] for positive arguments.
pub fn softplus_inv(y: f64) -> f64 {
    if y > 30.0 {
        y + (-(-y).exp()).ln_1p()
    } else {
        y.exp_m1().ln()
    }
}

pub fn logistic(t: f64) -> f64 {
    if t >= 0.0 {
        1.0 / (1.0 + (-t).exp())
    } else {
        let e = t.exp();
        e / (1.0 + e)
    }
}

fn sech2(t: f64) -> f64 {
    let th = t.tanh();
    (1.0 - th * th).max(0.0)
}
