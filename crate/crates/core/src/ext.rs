//! Extended-range complex numbers.
//!
//! Cylinder functions at small arguments and high orders, or at large
//! imaginary arguments, leave the `f64` exponent range long before the
//! physically meaningful ratios do. `Ext` stores `mant * 2^exp` with the
//! mantissa kept near unit magnitude so products and ratios of such values
//! can be formed and only collapsed to `Complex64` at the end.

use num_complex::Complex64;
use std::ops::{Add, Div, Mul, Neg, Sub};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Ext {
    mant: Complex64,
    exp: i32,
}

fn ilogb(x: f64) -> i32 {
    if x == 0.0 || !x.is_finite() {
        return 0;
    }
    let bits = x.abs().to_bits();
    let raw = ((bits >> 52) & 0x7ff) as i32;
    if raw == 0 {
        // subnormal
        return ilogb(x * 2f64.powi(64)) - 64;
    }
    raw - 1023
}

fn ldexp(x: f64, n: i32) -> f64 {
    if n > 1000 {
        ldexp(x * 2f64.powi(1000), n - 1000)
    } else if n < -1000 {
        ldexp(x * 2f64.powi(-1000), n + 1000)
    } else {
        x * 2f64.powi(n)
    }
}

impl Ext {
    pub const ZERO: Ext = Ext {
        mant: Complex64 { re: 0.0, im: 0.0 },
        exp: 0,
    };
    pub const ONE: Ext = Ext {
        mant: Complex64 { re: 1.0, im: 0.0 },
        exp: 0,
    };

    pub fn new(mant: Complex64, exp: i32) -> Self {
        Ext { mant, exp }.normalized()
    }

    pub fn from_c64(z: Complex64) -> Self {
        Ext::new(z, 0)
    }

    pub fn from_f64(x: f64) -> Self {
        Ext::new(Complex64::new(x, 0.0), 0)
    }

    /// `exp(ln_mag) * exp(i phase)`.
    pub fn from_polar_ln(ln_mag: f64, phase: f64) -> Self {
        let e2 = ln_mag / std::f64::consts::LN_2;
        let ie = e2.floor();
        let frac = (e2 - ie) * std::f64::consts::LN_2;
        Ext::new(Complex64::from_polar(frac.exp(), phase), ie as i32)
    }

    /// `exp(w)` for complex `w` without overflow.
    pub fn exp_c(w: Complex64) -> Self {
        Ext::from_polar_ln(w.re, w.im)
    }

    fn normalized(self) -> Self {
        let big = self.mant.re.abs().max(self.mant.im.abs());
        if big == 0.0 || !big.is_finite() {
            return Ext {
                mant: self.mant,
                exp: if big == 0.0 { 0 } else { self.exp },
            };
        }
        let shift = ilogb(big);
        if shift == 0 {
            return self;
        }
        Ext {
            mant: Complex64::new(ldexp(self.mant.re, -shift), ldexp(self.mant.im, -shift)),
            exp: self.exp.saturating_add(shift),
        }
    }

    pub fn is_zero(&self) -> bool {
        self.mant.re == 0.0 && self.mant.im == 0.0
    }

    pub fn is_finite(&self) -> bool {
        self.mant.re.is_finite() && self.mant.im.is_finite()
    }

    /// Collapse to `Complex64`; overflows to infinity and underflows to zero.
    pub fn to_c64(self) -> Complex64 {
        Complex64::new(ldexp(self.mant.re, self.exp), ldexp(self.mant.im, self.exp))
    }

    pub fn ln_abs(&self) -> f64 {
        if self.is_zero() {
            return f64::NEG_INFINITY;
        }
        self.mant.norm().ln() + self.exp as f64 * std::f64::consts::LN_2
    }

    pub fn abs(&self) -> Ext {
        Ext::new(Complex64::new(self.mant.norm(), 0.0), self.exp)
    }

    pub fn scale(self, s: f64) -> Ext {
        Ext::new(self.mant * s, self.exp)
    }

    pub fn mul_c(self, c: Complex64) -> Ext {
        Ext::new(self.mant * c, self.exp)
    }

    pub fn recip(self) -> Ext {
        Ext::new(self.mant.inv(), -self.exp)
    }
}

impl Mul for Ext {
    type Output = Ext;
    fn mul(self, rhs: Ext) -> Ext {
        Ext::new(self.mant * rhs.mant, self.exp.saturating_add(rhs.exp))
    }
}

impl Div for Ext {
    type Output = Ext;
    fn div(self, rhs: Ext) -> Ext {
        Ext::new(self.mant / rhs.mant, self.exp.saturating_sub(rhs.exp))
    }
}

impl Add for Ext {
    type Output = Ext;
    fn add(self, rhs: Ext) -> Ext {
        if self.is_zero() {
            return rhs;
        }
        if rhs.is_zero() {
            return self;
        }
        let (hi, lo) = if self.exp >= rhs.exp { (self, rhs) } else { (rhs, self) };
        let d = hi.exp - lo.exp;
        if d > 110 {
            return hi;
        }
        let lo_m = Complex64::new(ldexp(lo.mant.re, -d), ldexp(lo.mant.im, -d));
        Ext::new(hi.mant + lo_m, hi.exp)
    }
}

impl Neg for Ext {
    type Output = Ext;
    fn neg(self) -> Ext {
        Ext {
            mant: -self.mant,
            exp: self.exp,
        }
    }
}

impl Sub for Ext {
    type Output = Ext;
    fn sub(self, rhs: Ext) -> Ext {
        self + (-rhs)
    }
}
