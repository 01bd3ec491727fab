//! Scalar types the wavefunction can be evaluated over.
//!
//! Every wavefunction is written once, generic over [`Scalar`]. Evaluating it
//! with `f64` gives values; evaluating it with [`Jet`] propagates a value
//! together with its first and second derivative along one seeded input
//! direction, which is how the coordinate gradient and Laplacian are obtained
//! exactly.

use std::fmt::Debug;
use std::ops::{Add, AddAssign, Div, Mul, Neg, Sub, SubAssign};

/// Field-like numeric type supporting the elementary functions used by the
/// wavefunctions in this crate.
pub trait Scalar:
    Copy
    + Debug
    + Send
    + Sync
    + Add<Output = Self>
    + Sub<Output = Self>
    + Mul<Output = Self>
    + Div<Output = Self>
    + Neg<Output = Self>
    + AddAssign
    + SubAssign
{
    fn from_f64(v: f64) -> Self;

    /// Leading (plain `f64`) part. Used for branching and pivoting only.
    fn value(&self) -> f64;

    /// Multiplication by a constant.
    fn scale(self, k: f64) -> Self;

    fn exp(self) -> Self;
    fn exp_m1(self) -> Self;
    fn ln(self) -> Self;
    fn sqrt(self) -> Self;
    fn tanh(self) -> Self;

    fn zero() -> Self {
        Self::from_f64(0.0)
    }

    fn square(self) -> Self {
        self * self
    }

    /// `self * a + b` with a constant `a`.
    fn mul_add_const(self, a: f64, b: Self) -> Self {
        self.scale(a) + b
    }
}

impl Scalar for f64 {
    #[inline]
    fn from_f64(v: f64) -> Self {
        v
    }
    #[inline]
    fn value(&self) -> f64 {
        *self
    }
    #[inline]
    fn scale(self, k: f64) -> Self {
        self * k
    }
    #[inline]
    fn exp(self) -> Self {
        f64::exp(self)
    }
    #[inline]
    fn exp_m1(self) -> Self {
        f64::exp_m1(self)
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
}

/// Truncated Taylor expansion `v + d·t + ½·dd·t²` along one direction.
///
/// `d` is the first directional derivative and `dd` the second.
#[derive(Clone, Copy, Debug, PartialEq, Default)]
pub struct Jet {
    pub v: f64,
    pub d: f64,
    pub dd: f64,
}

impl Jet {
    pub const fn constant(v: f64) -> Self {
        Jet { v, d: 0.0, dd: 0.0 }
    }

    /// Independent variable: unit first derivative.
    pub const fn variable(v: f64) -> Self {
        Jet { v, d: 1.0, dd: 0.0 }
    }

    #[inline]
    fn chain(self, f: f64, f1: f64, f2: f64) -> Self {
        Jet {
            v: f,
            d: f1 * self.d,
            dd: f2 * self.d * self.d + f1 * self.dd,
        }
    }
}

impl Add for Jet {
    type Output = Jet;
    #[inline]
    fn add(self, o: Jet) -> Jet {
        Jet {
            v: self.v + o.v,
            d: self.d + o.d,
            dd: self.dd + o.dd,
        }
    }
}

impl Sub for Jet {
    type Output = Jet;
    #[inline]
    fn sub(self, o: Jet) -> Jet {
        Jet {
            v: self.v - o.v,
            d: self.d - o.d,
            dd: self.dd - o.dd,
        }
    }
}

impl Mul for Jet {
    type Output = Jet;
    #[inline]
    fn mul(self, o: Jet) -> Jet {
        Jet {
            v: self.v * o.v,
            d: self.v * o.d + self.d * o.v,
            dd: self.v * o.dd + 2.0 * self.d * o.d + self.dd * o.v,
        }
    }
}

impl Div for Jet {
    type Output = Jet;
    #[inline]
    fn div(self, o: Jet) -> Jet {
        let q = self.v / o.v;
        let qd = (self.d - q * o.d) / o.v;
        let qdd = (self.dd - 2.0 * qd * o.d - q * o.dd) / o.v;
        Jet { v: q, d: qd, dd: qdd }
    }
}

impl Neg for Jet {
    type Output = Jet;
    #[inline]
    fn neg(self) -> Jet {
        Jet {
            v: -self.v,
            d: -self.d,
            dd: -self.dd,
        }
    }
}

impl AddAssign for Jet {
    #[inline]
    fn add_assign(&mut self, o: Jet) {
        *self = *self + o;
    }
}

impl SubAssign for Jet {
    #[inline]
    fn sub_assign(&mut self, o: Jet) {
        *self = *self - o;
    }
}

impl Scalar for Jet {
    #[inline]
    fn from_f64(v: f64) -> Self {
        Jet::constant(v)
    }
    #[inline]
    fn value(&self) -> f64 {
        self.v
    }
    #[inline]
    fn scale(self, k: f64) -> Self {
        Jet {
            v: self.v * k,
            d: self.d * k,
            dd: self.dd * k,
        }
    }
    fn exp(self) -> Self {
        let e = self.v.exp();
        self.chain(e, e, e)
    }
    fn exp_m1(self) -> Self {
        let e = self.v.exp();
        self.chain(self.v.exp_m1(), e, e)
    }
    fn ln(self) -> Self {
        let inv = 1.0 / self.v;
        self.chain(self.v.ln(), inv, -inv * inv)
    }
    fn sqrt(self) -> Self {
        let s = self.v.sqrt();
        let f1 = 0.5 / s;
        self.chain(s, f1, -f1 / (2.0 * self.v))
    }
    fn tanh(self) -> Self {
        let t = self.v.tanh();
        let f1 = 1.0 - t * t;
        self.chain(t, f1, -2.0 * t * f1)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn fd2(f: impl Fn(f64) -> f64, x: f64) -> (f64, f64) {
        let h = 1e-4;
        let d = (f(x + h) - f(x - h)) / (2.0 * h);
        let dd = (f(x + h) - 2.0 * f(x) + f(x - h)) / (h * h);
        (d, dd)
    }

    #[test]
    fn elementary_functions_match_finite_differences() {
        let x = 0.37;
        let cases: Vec<(Box<dyn Fn(Jet) -> Jet>, Box<dyn Fn(f64) -> f64>)> = vec![
            (Box::new(|j: Jet| j.exp()), Box::new(f64::exp)),
            (Box::new(|j: Jet| j.exp_m1()), Box::new(f64::exp_m1)),
            (Box::new(|j: Jet| j.ln()), Box::new(f64::ln)),
            (Box::new(|j: Jet| j.sqrt()), Box::new(f64::sqrt)),
            (Box::new(|j: Jet| j.tanh()), Box::new(f64::tanh)),
            (
                Box::new(|j: Jet| (j * j + Jet::constant(1.0)) / (j - Jet::constant(2.0))),
                Box::new(|v: f64| (v * v + 1.0) / (v - 2.0)),
            ),
        ];
        for (jf, ff) in cases {
            let out = jf(Jet::variable(x));
            let (d, dd) = fd2(&ff, x);
            assert!((out.v - ff(x)).abs() < 1e-15);
            assert!((out.d - d).abs() < 1e-7, "{} vs {}", out.d, d);
            assert!((out.dd - dd).abs() < 1e-5, "{} vs {}", out.dd, dd);
        }
    }

    #[test]
    fn constants_carry_no_derivative() {
        let c = Jet::constant(2.5).exp().tanh();
        assert_eq!(c.d, 0.0);
        assert_eq!(c.dd, 0.0);
    }
}
