//! Scalar abstraction shared by the residual assembly.
//!
//! The scheme residual is written once, generic over [`Scalar`]. Evaluating it
//! with `f64` gives the residual; evaluating it with [`Dual`] gives the exact
//! directional derivative `J v` of the residual, which is what the Newton
//! solver uses as its analytic Jacobian action.

use std::fmt::Debug;
use std::ops::{Add, AddAssign, Div, Mul, MulAssign, Neg, Sub, SubAssign};

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
    + Add<f64, Output = Self>
    + Sub<f64, Output = Self>
    + Mul<f64, Output = Self>
    + Send
    + Sync
{
    fn cst(v: f64) -> Self;
    fn value(self) -> f64;
    fn abs(self) -> Self;
    fn zero() -> Self {
        Self::cst(0.0)
    }
}

impl Scalar for f64 {
    #[inline(always)]
    fn cst(v: f64) -> Self {
        v
    }
    #[inline(always)]
    fn value(self) -> f64 {
        self
    }
    #[inline(always)]
    fn abs(self) -> Self {
        f64::abs(self)
    }
}

/// Forward-mode dual number `v + d·ϵ` with `ϵ² = 0`.
#[derive(Clone, Copy, Debug, PartialEq, Default)]
pub struct Dual {
    pub v: f64,
    pub d: f64,
}

impl Dual {
    #[inline(always)]
    pub fn new(v: f64, d: f64) -> Self {
        Self { v, d }
    }
}

impl Scalar for Dual {
    #[inline(always)]
    fn cst(v: f64) -> Self {
        Dual { v, d: 0.0 }
    }
    #[inline(always)]
    fn value(self) -> f64 {
        self.v
    }
    #[inline(always)]
    fn abs(self) -> Self {
        if self.v < 0.0 {
            -self
        } else if self.v > 0.0 {
            self
        } else {
            Dual { v: 0.0, d: 0.0 }
        }
    }
}

impl Add for Dual {
    type Output = Dual;
    #[inline(always)]
    fn add(self, o: Dual) -> Dual {
        Dual::new(self.v + o.v, self.d + o.d)
    }
}
impl Sub for Dual {
    type Output = Dual;
    #[inline(always)]
    fn sub(self, o: Dual) -> Dual {
        Dual::new(self.v - o.v, self.d - o.d)
    }
}
impl Mul for Dual {
    type Output = Dual;
    #[inline(always)]
    fn mul(self, o: Dual) -> Dual {
        Dual::new(self.v * o.v, self.d * o.v + self.v * o.d)
    }
}
impl Div for Dual {
    type Output = Dual;
    #[inline(always)]
    fn div(self, o: Dual) -> Dual {
        let q = self.v / o.v;
        Dual::new(q, (self.d - q * o.d) / o.v)
    }
}
impl Neg for Dual {
    type Output = Dual;
    #[inline(always)]
    fn neg(self) -> Dual {
        Dual::new(-self.v, -self.d)
    }
}
impl AddAssign for Dual {
    #[inline(always)]
    fn add_assign(&mut self, o: Dual) {
        self.v += o.v;
        self.d += o.d;
    }
}
impl SubAssign for Dual {
    #[inline(always)]
    fn sub_assign(&mut self, o: Dual) {
        self.v -= o.v;
        self.d -= o.d;
    }
}
impl MulAssign for Dual {
    #[inline(always)]
    fn mul_assign(&mut self, o: Dual) {
        *self = *self * o;
    }
}
impl Add<f64> for Dual {
    type Output = Dual;
    #[inline(always)]
    fn add(self, o: f64) -> Dual {
        Dual::new(self.v + o, self.d)
    }
}
impl Sub<f64> for Dual {
    type Output = Dual;
    #[inline(always)]
    fn sub(self, o: f64) -> Dual {
        Dual::new(self.v - o, self.d)
    }
}
impl Mul<f64> for Dual {
    type Output = Dual;
    #[inline(always)]
    fn mul(self, o: f64) -> Dual {
        Dual::new(self.v * o, self.d * o)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn dual_product_and_quotient_rules() {
        let x = Dual::new(3.0, 1.0);
        let y = Dual::new(2.0, 0.0);
        let f = x * x * y / (x + 1.0);
        // f = 2x²/(x+1), f' = 2(x² + 2x)/(x+1)²
        assert!((f.v - 4.5).abs() < 1e-15);
        assert!((f.d - 2.0 * 15.0 / 16.0).abs() < 1e-15);
    }

    #[test]
    fn dual_abs_follows_sign() {
        assert_eq!(Dual::new(-2.0, 1.0).abs(), Dual::new(2.0, -1.0));
        assert_eq!(Dual::new(2.0, 1.0).abs(), Dual::new(2.0, 1.0));
    }
}
