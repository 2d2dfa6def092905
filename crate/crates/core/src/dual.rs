//! Small fixed-arity forward-derivative numbers.
//!
//! Residual assembly needs the exact partial derivatives of every term with
//! respect to the handful of unknowns it touches (at most four: the two cell
//! unknowns on each side of a face, or the four unknowns of one dual-porosity
//! cell). Carrying a value together with its partials through the arithmetic
//! keeps the Jacobian exact without hand-expanding product rules.

use crate::props::WithDeriv;
use crate::scalar::Scalar;
use std::ops::{Add, Div, Mul, Neg, Sub};

/// Value plus partial derivatives with respect to `N` fixed unknown slots.
#[derive(Clone, Copy, Debug)]
pub struct Dual<S, const N: usize> {
    pub v: S,
    pub d: [S; N],
}

impl<S: Scalar, const N: usize> Dual<S, N> {
    #[inline]
    pub fn constant(v: S) -> Self {
        Dual { v, d: [S::zero(); N] }
    }

    /// An independent variable occupying derivative slot `slot`.
    #[inline]
    pub fn var(v: S, slot: usize) -> Self {
        let mut d = [S::zero(); N];
        d[slot] = S::one();
        Dual { v, d }
    }

    /// Chain rule through a univariate property evaluation `f(x)`.
    #[inline]
    pub fn chain(f: WithDeriv<S>, x: &Dual<S, N>) -> Self {
        let mut d = [S::zero(); N];
        for (di, xi) in d.iter_mut().zip(x.d.iter()) {
            *di = f.deriv * *xi;
        }
        Dual { v: f.value, d }
    }

    #[inline]
    pub fn scale(&self, a: S) -> Self {
        let mut d = [S::zero(); N];
        for (di, xi) in d.iter_mut().zip(self.d.iter()) {
            *di = a * *xi;
        }
        Dual { v: a * self.v, d }
    }
}

impl<S: Scalar, const N: usize> Add for Dual<S, N> {
    type Output = Self;
    #[inline]
    fn add(self, rhs: Self) -> Self {
        let mut d = self.d;
        for (di, ri) in d.iter_mut().zip(rhs.d.iter()) {
            *di += *ri;
        }
        Dual { v: self.v + rhs.v, d }
    }
}

impl<S: Scalar, const N: usize> Sub for Dual<S, N> {
    type Output = Self;
    #[inline]
    fn sub(self, rhs: Self) -> Self {
        let mut d = self.d;
        for (di, ri) in d.iter_mut().zip(rhs.d.iter()) {
            *di -= *ri;
        }
        Dual { v: self.v - rhs.v, d }
    }
}

impl<S: Scalar, const N: usize> Mul for Dual<S, N> {
    type Output = Self;
    #[inline]
    fn mul(self, rhs: Self) -> Self {
        let mut d = [S::zero(); N];
        for i in 0..N {
            d[i] = self.d[i] * rhs.v + self.v * rhs.d[i];
        }
        Dual { v: self.v * rhs.v, d }
    }
}

impl<S: Scalar, const N: usize> Div for Dual<S, N> {
    type Output = Self;
    #[inline]
    fn div(self, rhs: Self) -> Self {
        let inv = S::one() / rhs.v;
        let v = self.v * inv;
        let mut d = [S::zero(); N];
        for i in 0..N {
            d[i] = (self.d[i] - v * rhs.d[i]) * inv;
        }
        Dual { v, d }
    }
}

impl<S: Scalar, const N: usize> Neg for Dual<S, N> {
    type Output = Self;
    #[inline]
    fn neg(self) -> Self {
        let mut d = [S::zero(); N];
        for i in 0..N {
            d[i] = -self.d[i];
        }
        Dual { v: -self.v, d }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    type D2 = Dual<f64, 2>;

    #[test]
    fn product_and_quotient_rules() {
        let x = D2::var(3.0, 0);
        let y = D2::var(5.0, 1);
        let p = x * y;
        assert_eq!(p.v, 15.0);
        assert_eq!(p.d, [5.0, 3.0]);
        let q = x / y;
        assert!((q.v - 0.6).abs() < 1e-15);
        assert!((q.d[0] - 1.0 / 5.0).abs() < 1e-15);
        assert!((q.d[1] + 3.0 / 25.0).abs() < 1e-15);
    }

    #[test]
    fn chain_through_property() {
        // f(x) = x^2 evaluated at x = 3 with slope 6
        let x = D2::var(3.0, 0).scale(2.0); // v = 6, d0 = 2
        let f = WithDeriv { value: 36.0, deriv: 12.0 }; // derivative wrt v
        let y = D2::chain(f, &x);
        assert_eq!(y.v, 36.0);
        assert_eq!(y.d[0], 24.0);
    }
}
