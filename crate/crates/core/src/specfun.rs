//! Integer-order Bessel and Hankel functions of complex argument.
//!
//! `J_m` comes from Miller's downward recurrence normalised against
//! `exp(∓iz) = J_0 + 2 Σ (∓i)^m J_m`, which stays free of cancellation for
//! either sign of `Im z`. `H^(1)_0` and `H^(1)_1` are seeded by one of
//! three routes depending on where `z` sits:
//!
//! * `|z| ≥ 17`: Hankel asymptotic series,
//! * `Im z ≥ 3`: `K_ν(-iz)` from its `cosh` integral (trapezoidal rule),
//! * otherwise: Neumann series for `Y_0`, `Y_1` built from the `J` sequence,
//!
//! and higher orders follow by upward recurrence, which is stable for `H`.
//! Everything is carried in [`Ext`] so that orders up to a few hundred at
//! tiny arguments, or arguments deep in the evanescent region, do not
//! overflow.

use crate::ext::Ext;
use num_complex::Complex64;
use std::f64::consts::{FRAC_PI_2, FRAC_PI_4, PI};

const EULER_GAMMA: f64 = 0.577_215_664_901_532_9;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum SpecFunError {
    #[error("Hankel function undefined at z = {0}")]
    Domain(Complex64),
    #[error("cylinder function of order {m} at z = {z} exceeds the f64 range")]
    Range { m: i32, z: Complex64 },
}

/// Value and first derivative of `J_m` and `H^(1)_m` at one argument.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CylFunValue {
    pub m: i32,
    pub j: Complex64,
    pub jp: Complex64,
    pub h1: Complex64,
    pub h1p: Complex64,
}

fn parity(m: i32) -> f64 {
    if m.rem_euclid(2) == 0 {
        1.0
    } else {
        -1.0
    }
}

/// `J_0 .. J_nmax` at `z`.
pub(crate) fn j_sequence(nmax: usize, z: Complex64) -> Vec<Ext> {
    let mut out = vec![Ext::ZERO; nmax + 1];
    let az = z.norm();
    if az == 0.0 {
        out[0] = Ext::ONE;
        return out;
    }
    let big = nmax.max(az.ceil() as usize);
    let mut start = big + 40 + (3.0 * az.cbrt()).ceil() as usize + (0.5 * az.sqrt()) as usize;
    if start % 2 == 1 {
        start += 1;
    }
    // normalisation target exp(-i s z) with s = sign(Im z) (s=+1 when Im z >= 0)
    let upper = z.im >= 0.0;
    let unit = if upper {
        Complex64::new(0.0, -1.0)
    } else {
        Complex64::new(0.0, 1.0)
    };
    let two_over_z = Complex64::new(2.0, 0.0) / z;
    let mut f_next = Complex64::new(0.0, 0.0);
    let mut f_cur = Complex64::new(1e-30, 0.0);
    let mut common: i32 = 0;
    let mut sum = Ext::ZERO;
    // weights (unit)^n * 2 for n >= 1
    let mut weight_pow = vec![Complex64::new(1.0, 0.0); 4];
    for (p, w) in weight_pow.iter_mut().enumerate() {
        *w = unit.powu(p as u32);
    }
    let mut raw: Vec<(Complex64, i32)> = vec![(Complex64::new(0.0, 0.0), 0); nmax + 1];
    let mut n = start;
    loop {
        // f_cur holds f_n
        let w = if n == 0 {
            Complex64::new(1.0, 0.0)
        } else {
            2.0 * weight_pow[n % 4]
        };
        sum = sum + Ext::new(f_cur * w, common);
        if n <= nmax {
            raw[n] = (f_cur, common);
        }
        if n == 0 {
            break;
        }
        let f_prev = two_over_z * (n as f64) * f_cur - f_next;
        f_next = f_cur;
        f_cur = f_prev;
        let mag = f_cur.norm();
        if mag > 1e250 {
            let s = 2f64.powi(-830);
            f_cur *= s;
            f_next *= s;
            common += 830;
        }
        n -= 1;
    }
    let target = if upper {
        Ext::exp_c(Complex64::new(z.im, -z.re))
    } else {
        Ext::exp_c(Complex64::new(-z.im, z.re))
    };
    let norm = target / sum;
    for (k, (f, e)) in raw.into_iter().enumerate() {
        out[k] = Ext::new(f, e) * norm;
    }
    out
}

fn hankel_asymptotic(nu: i32, z: Complex64) -> Ext {
    let mu = 4.0 * (nu * nu) as f64;
    let iz = Complex64::new(0.0, 1.0) / z;
    let mut term = Complex64::new(1.0, 0.0);
    let mut sum = term;
    let mut last = f64::INFINITY;
    for k in 1..200 {
        let kk = k as f64;
        let odd = 2.0 * kk - 1.0;
        term *= iz * ((mu - odd * odd) / (8.0 * kk));
        let t = term.norm();
        if t > last {
            break;
        }
        sum += term;
        last = t;
        if t < 1e-17 * sum.norm() {
            break;
        }
    }
    // sqrt(2/(pi z)) exp(i(z - nu pi/2 - pi/4)), with exp(-Im z) kept in Ext
    let pref = (Complex64::new(2.0 / PI, 0.0) / z).sqrt();
    let phase = z.re - nu as f64 * FRAC_PI_2 - FRAC_PI_4;
    Ext::from_polar_ln(-z.im, phase).mul_c(pref * sum)
}

/// `H^(1)_0`, `H^(1)_1` through `K_ν(w)`, `w = -iz`, `Re w > 0`.
fn hankel_via_k(z: Complex64) -> (Ext, Ext) {
    let w = Complex64::new(z.im, -z.re);
    let theta = w.arg().abs();
    let strip = (FRAC_PI_2 - theta).max(0.02) * 0.9;
    let h = (2.0 * PI * strip / 40.0).min(0.25);
    // integrand exp(-w (cosh t - 1)) cosh(nu t): K_nu(w) e^{w}
    let mut k0 = Complex64::new(0.5, 0.0);
    let mut k1 = Complex64::new(0.5, 0.0);
    let mut t = 0.0;
    loop {
        t += h;
        let c = t.cosh();
        let f = (-w * (c - 1.0)).exp();
        k0 += f;
        k1 += f * c;
        if w.re * (c - 1.0) > 45.0 {
            break;
        }
    }
    k0 *= h;
    k1 *= h;
    // H_nu(z) = (2/(pi i)) i^{-nu} K_nu(w);  K e^{w} known, so H = (...) * exp(-w)
    let scale = Ext::exp_c(-w);
    let c0 = Complex64::new(0.0, -2.0 / PI);
    let c1 = c0 * Complex64::new(0.0, -1.0);
    (scale.mul_c(c0 * k0), scale.mul_c(c1 * k1))
}

/// `Y_0`, `Y_1` from Neumann series over a long enough `J` sequence.
fn y01_neumann(z: Complex64, j: &[Ext]) -> (Complex64, Complex64) {
    let jv: Vec<Complex64> = j.iter().map(|e| e.to_c64()).collect();
    let lg = (z / 2.0).ln() + EULER_GAMMA;
    let mut s0 = Complex64::new(0.0, 0.0);
    let mut s1 = Complex64::new(0.0, 0.0);
    let mut k = 1;
    while 2 * k + 1 < jv.len() {
        let sign = if k % 2 == 0 { 1.0 } else { -1.0 };
        s0 += sign * jv[2 * k] / k as f64;
        s1 += sign * (jv[2 * k - 1] - jv[2 * k + 1]) / k as f64;
        k += 1;
    }
    let y0 = (2.0 / PI) * lg * jv[0] - (4.0 / PI) * s0;
    let y1 = -(2.0 / PI) * jv[0] / z + (2.0 / PI) * lg * jv[1] + (2.0 / PI) * s1;
    (y0, y1)
}

/// `H^(1)_0 .. H^(1)_nmax` at `z` (requires `z ≠ 0`, `Im z ≥ 0`).
pub(crate) fn h_sequence(nmax: usize, z: Complex64, j: Option<&[Ext]>) -> Vec<Ext> {
    let az = z.norm();
    let (h0, h1) = if az >= 17.0 {
        (hankel_asymptotic(0, z), hankel_asymptotic(1, z))
    } else if z.im >= 3.0 {
        hankel_via_k(z)
    } else {
        let need = az.ceil() as usize + 45;
        let owned;
        let js = match j {
            Some(s) if s.len() > need => s,
            _ => {
                owned = j_sequence(need.max(2), z);
                &owned[..]
            }
        };
        let (y0, y1) = y01_neumann(z, js);
        let i = Complex64::new(0.0, 1.0);
        (
            Ext::from_c64(js[0].to_c64() + i * y0),
            Ext::from_c64(js[1].to_c64() + i * y1),
        )
    };
    let mut out = Vec::with_capacity(nmax + 1);
    out.push(h0);
    if nmax >= 1 {
        out.push(h1);
    }
    let two_over_z = Ext::from_c64(Complex64::new(2.0, 0.0) / z);
    for n in 1..nmax {
        let next = two_over_z.scale(n as f64) * out[n] - out[n - 1];
        out.push(next);
    }
    out
}

/// Cylinder functions for all orders `|m| ≤ nmax` at one argument.
///
/// Stores orders `0 ..= nmax + 1` so derivatives are available up to `nmax`.
#[derive(Debug, Clone)]
pub struct CylSeq {
    nmax: usize,
    j: Vec<Ext>,
    h: Option<Vec<Ext>>,
}

impl CylSeq {
    /// `J` only; any `z`.
    pub fn bessel(nmax: usize, z: Complex64) -> Self {
        CylSeq {
            nmax,
            j: j_sequence(nmax + 1, z),
            h: None,
        }
    }

    /// `J` and `H^(1)`.
    pub fn full(nmax: usize, z: Complex64) -> Result<Self, SpecFunError> {
        check_hankel_arg(z)?;
        let j = j_sequence((nmax + 1).max(z.norm().ceil() as usize + 46), z);
        let h = h_sequence(nmax + 1, z, Some(&j));
        Ok(CylSeq {
            nmax,
            j,
            h: Some(h),
        })
    }

    /// `H^(1)` only.
    pub fn hankel(nmax: usize, z: Complex64) -> Result<Self, SpecFunError> {
        check_hankel_arg(z)?;
        Ok(CylSeq {
            nmax,
            j: Vec::new(),
            h: Some(h_sequence(nmax + 1, z, None)),
        })
    }

    pub fn nmax(&self) -> usize {
        self.nmax
    }

    fn pick(v: &[Ext], m: i32) -> Ext {
        let a = m.unsigned_abs() as usize;
        let val = v[a];
        if m < 0 && a % 2 == 1 {
            -val
        } else {
            val
        }
    }

    pub fn j(&self, m: i32) -> Ext {
        Self::pick(&self.j, m)
    }

    pub fn jp(&self, m: i32) -> Ext {
        (self.j(m - 1) - self.j(m + 1)).scale(0.5)
    }

    pub fn h(&self, m: i32) -> Ext {
        Self::pick(self.h.as_ref().expect("Hankel values not computed"), m)
    }

    pub fn hp(&self, m: i32) -> Ext {
        (self.h(m - 1) - self.h(m + 1)).scale(0.5)
    }
}

fn check_hankel_arg(z: Complex64) -> Result<(), SpecFunError> {
    if z.norm() == 0.0 || z.im < 0.0 || !z.re.is_finite() || !z.im.is_finite() {
        return Err(SpecFunError::Domain(z));
    }
    Ok(())
}

fn finite(m: i32, z: Complex64, v: Ext) -> Result<Complex64, SpecFunError> {
    let c = v.to_c64();
    if c.re.is_finite() && c.im.is_finite() && (c.norm() > 0.0 || v.is_zero()) {
        Ok(c)
    } else {
        Err(SpecFunError::Range { m, z })
    }
}

/// Bessel function of the first kind `J_m(z)`.
pub fn bessel_j(m: i32, z: Complex64) -> Result<Complex64, SpecFunError> {
    let a = m.unsigned_abs() as usize;
    let seq = j_sequence(a, z);
    finite(m, z, seq[a].scale(parity(m.min(0))))
}

/// Hankel function of the first kind `H^(1)_m(z)`, `Im z ≥ 0`, `z ≠ 0`.
pub fn hankel1(m: i32, z: Complex64) -> Result<Complex64, SpecFunError> {
    let seq = CylSeq::hankel(m.unsigned_abs() as usize, z)?;
    finite(m, z, seq.h(m))
}

/// Values and derivatives of `J_m` and `H^(1)_m`.
pub fn derivative_pair(m: i32, z: Complex64) -> Result<CylFunValue, SpecFunError> {
    let seq = CylSeq::full(m.unsigned_abs() as usize, z)?;
    Ok(CylFunValue {
        m,
        j: finite(m, z, seq.j(m))?,
        jp: finite(m, z, seq.jp(m))?,
        h1: finite(m, z, seq.h(m))?,
        h1p: finite(m, z, seq.hp(m))?,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    fn rel(a: Complex64, b: Complex64) -> f64 {
        (a - b).norm() / b.norm()
    }

    #[test]
    fn origin_values() {
        assert_eq!(bessel_j(0, c(0.0, 0.0)).unwrap(), c(1.0, 0.0));
        assert_eq!(bessel_j(1, c(0.0, 0.0)).unwrap(), c(0.0, 0.0));
        assert!(matches!(hankel1(0, c(0.0, 0.0)), Err(SpecFunError::Domain(_))));
        assert!(matches!(hankel1(2, c(1.0, -0.1)), Err(SpecFunError::Domain(_))));
    }

    #[test]
    fn j0_prime_is_minus_j1() {
        let z = c(1.3, 0.0);
        let p = derivative_pair(0, z).unwrap();
        assert!(rel(p.jp, -bessel_j(1, z).unwrap()) < 1e-14);
    }

    #[test]
    fn wronskian_at_reference_point() {
        let z = c(2.0, 0.5);
        let p = derivative_pair(4, z).unwrap();
        let w = p.j * p.h1p - p.jp * p.h1;
        let expect = c(0.0, 2.0) / (PI * z);
        assert!(rel(w, expect) < 1e-12);
    }

    #[test]
    fn hankel_derivative_matches_finite_difference() {
        let z = c(3.0, 0.2);
        let m = 5;
        let p = derivative_pair(m, z).unwrap();
        let step = 1e-5;
        let fd = (hankel1(m, z + step).unwrap() - hankel1(m, z - step).unwrap()) / (2.0 * step);
        assert!(rel(p.h1p, fd) < 1e-7);
    }

    #[test]
    fn evanescent_hankel_decays() {
        let mut last = f64::INFINITY;
        for i in 1..60 {
            let x = 0.25 * i as f64;
            let v = hankel1(3, c(0.0, x)).unwrap().norm();
            assert!(v < last);
            last = v;
        }
        // exponent e^{-x} survives far past the f64 range of the raw value
        let seq = CylSeq::hankel(2, c(0.0, 900.0)).unwrap();
        let ln = seq.h(2).ln_abs();
        // leading term times the first correction 1 + (4m² - 1)/(8x)
        let expect = -900.0 - 0.5 * (900.0f64 * PI / 2.0).ln() + (1.0 + 15.0 / 7200.0f64).ln();
        assert!((ln - expect).abs() < 1e-5);
    }

    #[test]
    fn reflection_in_order() {
        let z = c(4.1, 0.7);
        for m in 1..8 {
            let s = parity(m);
            assert!(rel(bessel_j(-m, z).unwrap(), s * bessel_j(m, z).unwrap()) < 1e-14);
            assert!(rel(hankel1(-m, z).unwrap(), s * hankel1(m, z).unwrap()) < 1e-14);
        }
    }

    #[test]
    fn continuity_between_seed_routes() {
        // the three H seeds meet at |z| = 17 and Im z = 3
        for &z in &[c(16.999, 2.0), c(17.001, 2.0), c(5.0, 2.999), c(5.0, 3.001)] {
            let a = hankel1(2, z).unwrap();
            let b = hankel1(2, z + c(1e-7, 1e-7)).unwrap();
            assert!(rel(a, b) < 1e-6);
        }
    }

    // (m, z, J_m(z), H^(1)_m(z)) at 30 digits, rounded to f64
    const REFERENCE: &[(i32, (f64, f64), (f64, f64), (f64, f64))] = &[
        (0, (5.0e-01, 0.0), (9.3846980724081286e-01, 0.0), (9.3846980724081286e-01, -4.4451873350670656e-01)),
        (3, (2.7, 1.1), (2.5676883432456776e-01, 2.4344669973329638e-01), (-8.1000415258370595e-02, -3.2024514075998584e-01)),
        (1, (10.0, 0.5), (4.5708579294690042e-02, -1.3034922328297383e-01), (3.0209343922594625e-02, 1.5050339566241580e-01)),
        (7, (1.5, 0.0), (2.4679795788287943e-05, 0.0), (2.4679795788287943e-05, -1.8873970313392283e+03)),
        (12, (0.3, 0.2), (1.7635564515515953e-18, 1.7119069891548350e-18), (-7.5152889367126870e+15, -7.7485354343143480e+15)),
        (2, (25.0, 3.0), (-1.1246659853021834e+00, -1.1162748491737255e+00), (-4.9450239816527181e-03, 6.2867072344768285e-03)),
        (0, (0.0, 4.0), (1.1301921952136331e+01, 0.0), (0.0, -7.1044704494716933e-03)),
        (5, (0.8, 6.0), (6.8958353374738071e+00, 4.4255281776781326e+00), (-2.3450957007674854e-03, -4.3739490825347354e-03)),
        (20, (5.0, 0.01), (2.7683599572737509e-11, 1.0744671274876289e-12), (-2.2933530905906308e+07, -5.9292861742045820e+08)),
        (40, (2.0, 0.0), (1.1960774581136801e-48, 0.0), (1.1960774581136801e-48, -6.6615412355271830e+45)),
        (1, (16.5, 1.0), (-1.5835473383427865e-02, -2.2989777974649500e-01), (7.9648521250795355e-05, 7.2342435431227509e-02)),
        (3, (1.0e-03, 0.0), (2.0833332031250035e-11, 0.0), (2.0833332031250035e-11, -5.0929588155605021e+09)),
        (2, (-3.0, 0.5), (5.2111646937826928e-01, -8.7439605584787358e-03), (-3.0251831456253686e-01, -1.4550842489279558e-01)),
    ];

    #[test]
    fn matches_high_precision_reference() {
        for &(m, (zr, zi), (jr, ji), (hr, hi)) in REFERENCE {
            let z = c(zr, zi);
            let j = bessel_j(m, z).unwrap();
            let h = hankel1(m, z).unwrap();
            assert!(rel(j, c(jr, ji)) < 1e-12, "J_{m}({z}) = {j}");
            assert!(rel(h, c(hr, hi)) < 1e-12, "H_{m}({z}) = {h}");
        }
    }

    proptest::proptest! {
        #[test]
        fn wronskian_holds(m in 0i32..30, re in -40.0f64..40.0, im in 0.0f64..30.0) {
            proptest::prop_assume!(re.hypot(im) > 1e-2);
            let z = c(re, im);
            let p = CylSeq::full(m as usize, z).unwrap();
            let w = p.j(m) * p.hp(m) - p.jp(m) * p.h(m);
            let expect = c(0.0, 2.0) / (PI * z);
            proptest::prop_assert!(rel(w.to_c64(), expect) < 1e-10, "{:?}", w);
        }
    }
}
