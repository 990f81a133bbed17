//! Scalar abstraction so the encoder and loss gradients can run either on
//! plain `f64` or on dual numbers. Dual numbers give exact Hessian-vector
//! products (forward-over-reverse), which the second-order meta-gradient
//! test mode relies on.

use std::ops::{Add, Div, Mul, Neg, Sub};

pub trait Scalar:
    Copy
    + PartialOrd
    + Add<Output = Self>
    + Sub<Output = Self>
    + Mul<Output = Self>
    + Div<Output = Self>
    + Neg<Output = Self>
{
    fn from_f64(x: f64) -> Self;
    /// Primal (value) part; the tangent is dropped for duals.
    fn primal(self) -> f64;
    fn zero() -> Self;
    fn one() -> Self;
    fn sqrt(self) -> Self;
    fn ln(self) -> Self;
    fn exp(self) -> Self;
}

impl Scalar for f64 {
    fn from_f64(x: f64) -> Self {
        x
    }
    fn primal(self) -> f64 {
        self
    }
    fn zero() -> Self {
        0.0
    }
    fn one() -> Self {
        1.0
    }
    fn sqrt(self) -> Self {
        f64::sqrt(self)
    }
    fn ln(self) -> Self {
        f64::ln(self)
    }
    fn exp(self) -> Self {
        f64::exp(self)
    }
}

/// Forward-mode dual number: value plus directional derivative.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Dual {
    pub v: f64,
    pub t: f64,
}

impl Dual {
    pub fn new(v: f64, t: f64) -> Self {
        Dual { v, t }
    }

    pub fn constant(v: f64) -> Self {
        Dual { v, t: 0.0 }
    }
}

impl PartialOrd for Dual {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        self.v.partial_cmp(&other.v)
    }
}

impl Add for Dual {
    type Output = Dual;
    fn add(self, rhs: Dual) -> Dual {
        Dual::new(self.v + rhs.v, self.t + rhs.t)
    }
}

impl Sub for Dual {
    type Output = Dual;
    fn sub(self, rhs: Dual) -> Dual {
        Dual::new(self.v - rhs.v, self.t - rhs.t)
    }
}

impl Mul for Dual {
    type Output = Dual;
    fn mul(self, rhs: Dual) -> Dual {
        Dual::new(self.v * rhs.v, self.t * rhs.v + self.v * rhs.t)
    }
}

impl Div for Dual {
    type Output = Dual;
    fn div(self, rhs: Dual) -> Dual {
        Dual::new(
            self.v / rhs.v,
            (self.t * rhs.v - self.v * rhs.t) / (rhs.v * rhs.v),
        )
    }
}

impl Neg for Dual {
    type Output = Dual;
    fn neg(self) -> Dual {
        Dual::new(-self.v, -self.t)
    }
}

impl Scalar for Dual {
    fn from_f64(x: f64) -> Self {
        Dual::constant(x)
    }
    fn primal(self) -> f64 {
        self.v
    }
    fn zero() -> Self {
        Dual::constant(0.0)
    }
    fn one() -> Self {
        Dual::constant(1.0)
    }
    fn sqrt(self) -> Self {
        let s = self.v.sqrt();
        Dual::new(s, self.t / (2.0 * s))
    }
    fn ln(self) -> Self {
        Dual::new(self.v.ln(), self.t / self.v)
    }
    fn exp(self) -> Self {
        let e = self.v.exp();
        Dual::new(e, self.t * e)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn dual_product_rule() {
        // f(x) = x^2 at x=3 with tangent 1 -> f'=6
        let x = Dual::new(3.0, 1.0);
        let y = x * x;
        assert_eq!(y.v, 9.0);
        assert_eq!(y.t, 6.0);
    }

    #[test]
    fn dual_chain_through_sqrt_ln_exp() {
        let x = Dual::new(2.0, 1.0);
        let y = (x.sqrt().ln()).exp(); // = sqrt(x), derivative 1/(2 sqrt x)
        assert!((y.v - 2.0_f64.sqrt()).abs() < 1e-12);
        assert!((y.t - 1.0 / (2.0 * 2.0_f64.sqrt())).abs() < 1e-12);
    }

    #[test]
    fn dual_quotient_rule() {
        let x = Dual::new(3.0, 1.0);
        let y = Dual::constant(1.0) / x; // -1/x^2
        assert!((y.t + 1.0 / 9.0).abs() < 1e-12);
    }
}
