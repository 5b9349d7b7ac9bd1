//! Complex scalars and first-order dual numbers over them.
//!
//! Every evaluator in the crate (theta series, Lax differential, r-matrix,
//! compensator) is written against [`Scalar`], so the same code path yields
//! plain values with `Complex64` and exact directional derivatives with
//! [`Dual`].

use std::fmt::Debug;
use std::ops::{Add, AddAssign, Div, Mul, MulAssign, Neg, Sub, SubAssign};

use num_complex::Complex64;

pub type C64 = Complex64;

/// Holomorphic scalar arithmetic.
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
    + MulAssign
{
    fn constant(c: C64) -> Self;
    /// The primal value.
    fn value(&self) -> C64;
    fn exp(self) -> Self;
    /// Principal branch logarithm.
    fn ln(self) -> Self;

    fn zero() -> Self {
        Self::constant(C64::new(0.0, 0.0))
    }

    fn one() -> Self {
        Self::constant(C64::new(1.0, 0.0))
    }

    fn real(x: f64) -> Self {
        Self::constant(C64::new(x, 0.0))
    }

    fn scale(self, c: C64) -> Self {
        self * Self::constant(c)
    }

    /// Principal branch power `self^e`.
    fn powc(self, e: C64) -> Self {
        (self.ln().scale(e)).exp()
    }

    fn norm(&self) -> f64 {
        self.value().norm()
    }
}

impl Scalar for C64 {
    #[inline]
    fn constant(c: C64) -> Self {
        c
    }

    #[inline]
    fn value(&self) -> C64 {
        *self
    }

    #[inline]
    fn exp(self) -> Self {
        Complex64::exp(self)
    }

    #[inline]
    fn ln(self) -> Self {
        Complex64::ln(self)
    }
}

/// A complex number with one infinitesimal direction: `re + eps * du`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Dual {
    pub re: C64,
    pub du: C64,
}

impl Dual {
    pub fn new(re: C64, du: C64) -> Self {
        Self { re, du }
    }

    /// A seeded independent variable (unit derivative).
    pub fn variable(re: C64) -> Self {
        Self { re, du: C64::new(1.0, 0.0) }
    }
}

impl Scalar for Dual {
    #[inline]
    fn constant(c: C64) -> Self {
        Self { re: c, du: C64::new(0.0, 0.0) }
    }

    #[inline]
    fn value(&self) -> C64 {
        self.re
    }

    #[inline]
    fn exp(self) -> Self {
        let e = self.re.exp();
        Self { re: e, du: e * self.du }
    }

    #[inline]
    fn ln(self) -> Self {
        Self { re: self.re.ln(), du: self.du / self.re }
    }
}

impl Add for Dual {
    type Output = Self;
    #[inline]
    fn add(self, rhs: Self) -> Self {
        Self { re: self.re + rhs.re, du: self.du + rhs.du }
    }
}

impl Sub for Dual {
    type Output = Self;
    #[inline]
    fn sub(self, rhs: Self) -> Self {
        Self { re: self.re - rhs.re, du: self.du - rhs.du }
    }
}

impl Mul for Dual {
    type Output = Self;
    #[inline]
    fn mul(self, rhs: Self) -> Self {
        Self { re: self.re * rhs.re, du: self.du * rhs.re + self.re * rhs.du }
    }
}

impl Div for Dual {
    type Output = Self;
    #[inline]
    fn div(self, rhs: Self) -> Self {
        let inv = C64::new(1.0, 0.0) / rhs.re;
        Self {
            re: self.re * inv,
            du: (self.du * rhs.re - self.re * rhs.du) * inv * inv,
        }
    }
}

impl Neg for Dual {
    type Output = Self;
    #[inline]
    fn neg(self) -> Self {
        Self { re: -self.re, du: -self.du }
    }
}

impl AddAssign for Dual {
    #[inline]
    fn add_assign(&mut self, rhs: Self) {
        *self = *self + rhs;
    }
}

impl SubAssign for Dual {
    #[inline]
    fn sub_assign(&mut self, rhs: Self) {
        *self = *self - rhs;
    }
}

impl MulAssign for Dual {
    #[inline]
    fn mul_assign(&mut self, rhs: Self) {
        *self = *self * rhs;
    }
}
