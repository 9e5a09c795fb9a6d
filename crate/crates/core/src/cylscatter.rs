//! Boundary matching at one cylinder.
//!
//! Outside fiber `l` the axial fields at order `m` are
//! `A J_m(κ₊ρ) + B H_m(κ₊ρ)`, inside `C J_m(κ₋ρ)`; continuity of `E_z`, `H_z`,
//! `E_φ`, `H_φ` at `ρ = a` eliminates `C` and leaves two equations
//! `P_A·A + P_B·B = 0`. They are written without dividing by any Bessel
//! value, so the only zeros of `det P_B` are the isolated-fiber modes.
//!
//! `H` here is `Z₀H`, so `∇×E = ikH` and `∇×H = −ikn²E`.
//!
//! Amplitudes are carried scaled (`a = A·(|J_m|+|J_{m+1}|)(κ₊a)`,
//! `b = B·|H_m(κ₊a)|`) so that the 2×2 blocks stay O(1) for any order.

use crate::config::Fiber;
use crate::ext::Ext;
use crate::specfun::CylSeq;
use num_complex::Complex64;

pub type C64 = Complex64;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum CylScatterError {
    #[error("β = {beta} sits on an isolated-fiber mode at order {m}")]
    Pole { m: i32, beta: C64 },
    #[error("β = {0} is a branch point of the ambient medium")]
    BranchPoint(C64),
    #[error("scattering coefficient at order {m} exceeds the f64 range")]
    Range { m: i32 },
}

/// Transverse wavenumber in the ambient medium, taken on the retarded sheet:
/// `Im κ ≥ 0` on the real axis, analytic just below it for `Re β > 0` and
/// along the vertical rays used by the contour.
pub fn kappa_ambient(k: f64, n: f64, beta: C64) -> C64 {
    let v = C64::new(k * k * n * n, 0.0) - beta * beta;
    if v.im == 0.0 {
        // −0.0 counts as the upper side
        C64::new(v.re, 0.0).sqrt()
    } else if v.im > 0.0 {
        v.sqrt()
    } else {
        C64::new(0.0, 1.0) * (-v).sqrt()
    }
}

/// Transverse wavenumber inside a core. The boundary equations are even in
/// it, so the principal branch is as good as any.
pub fn kappa_core(k: f64, n: f64, beta: C64) -> C64 {
    (C64::new(k * k * n * n, 0.0) - beta * beta).sqrt()
}

/// Unscaled single-cylinder scattering matrix `B = R·A` at order `m`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScatterMatrix {
    pub m: i32,
    pub r_ee: C64,
    pub r_eh: C64,
    pub r_he: C64,
    pub r_hh: C64,
}

/// Scaled boundary blocks of one fiber at one β for orders `−M..=M`.
#[derive(Debug, Clone)]
pub(crate) struct FiberBoundary {
    pub m_max: usize,
    /// indexed by `m + M`; rows (E_φ eq, H_φ eq), columns (E, H)
    pub pa: Vec<[[C64; 2]; 2]>,
    pub pb: Vec<[[C64; 2]; 2]>,
    /// `|J_m|+|J_{m+1}|` and `|H_m|` at `κ₊a`, indexed by `|m|`
    pub norm_j: Vec<Ext>,
    pub norm_h: Vec<Ext>,
}

impl FiberBoundary {
    pub fn new(fiber: &Fiber, n_out: f64, k: f64, beta: C64, m_max: usize) -> Result<Self, CylScatterError> {
        let a = fiber.radius_nm;
        let kp = kappa_ambient(k, n_out, beta);
        let km = kappa_core(k, fiber.index_core, beta);
        if kp.norm() == 0.0 {
            return Err(CylScatterError::BranchPoint(beta));
        }
        let outer = CylSeq::full(m_max + 1, kp * a).map_err(|_| CylScatterError::BranchPoint(beta))?;
        let inner = CylSeq::bessel(m_max + 1, km * a);
        let norm_j: Vec<Ext> = (0..=m_max as i32).map(|m| outer.j(m).abs() + outer.j(m + 1).abs()).collect();
        let norm_h: Vec<Ext> = (0..=m_max as i32).map(|m| outer.h(m).abs()).collect();

        let kc = C64::new(k, 0.0);
        let np2 = n_out * n_out;
        let nm2 = fiber.index_core * fiber.index_core;
        let (kp2, km2) = (kp * kp, km * km);
        let mut pa = Vec::with_capacity(2 * m_max + 1);
        let mut pb = Vec::with_capacity(2 * m_max + 1);
        for m in -(m_max as i32)..=m_max as i32 {
            let am = m.unsigned_abs() as usize;
            let j = inner.j(m);
            let jk = inner.jp(m).mul_c(km);
            let row_scale = (j.abs() + inner.jp(m).abs()).recip();
            let alpha = C64::new(0.0, m as f64) * beta / a * (km2 - kp2);
            // rows: E_φ and H_φ continuity with E_z, H_z continuity substituted
            let block = |f: Ext, fp: Ext| -> [[Ext; 2]; 2] {
                let e3_e = (j * f).mul_c(alpha);
                let e3_h = (j * fp).mul_c(-kc * kp * km2) + (jk * f).mul_c(kc * kp2);
                let e4_e = (j * fp).mul_c(kc * np2 * kp * km2) - (jk * f).mul_c(kc * nm2 * kp2);
                let e4_h = (j * f).mul_c(alpha);
                [[e3_e, e3_h], [e4_e, e4_h]]
            };
            let ba = block(outer.j(m), outer.jp(m));
            let bb = block(outer.h(m), outer.hp(m));
            let sa = norm_j[am].recip() * row_scale;
            let sb = norm_h[am].recip() * row_scale;
            let mut ra = [[C64::new(0.0, 0.0); 2]; 2];
            let mut rb = [[C64::new(0.0, 0.0); 2]; 2];
            for r in 0..2 {
                for c in 0..2 {
                    ra[r][c] = (ba[r][c] * sa).to_c64();
                    rb[r][c] = (bb[r][c] * sb).to_c64();
                }
                let big = ra[r].iter().chain(rb[r].iter()).map(|z| z.norm()).fold(0.0, f64::max);
                if big > 0.0 && big.is_finite() {
                    for c in 0..2 {
                        ra[r][c] /= big;
                        rb[r][c] /= big;
                    }
                }
            }
            pa.push(ra);
            pb.push(rb);
        }
        Ok(FiberBoundary {
            m_max,
            pa,
            pb,
            norm_j,
            norm_h,
        })
    }

    pub fn index(&self, m: i32) -> usize {
        (m + self.m_max as i32) as usize
    }

    /// Scaled single-fiber scattering block `b = R_s a`.
    pub fn scaled_r(&self, m: i32) -> Option<[[C64; 2]; 2]> {
        let i = self.index(m);
        let inv = inv2(&self.pb[i])?;
        let p = &self.pa[i];
        let mut r = [[C64::new(0.0, 0.0); 2]; 2];
        for (a, row) in r.iter_mut().enumerate() {
            for (b, v) in row.iter_mut().enumerate() {
                *v = -(inv[a][0] * p[0][b] + inv[a][1] * p[1][b]);
            }
        }
        Some(r)
    }

    /// `det P_B` at order `m`: vanishes on the isolated fiber's guided modes.
    pub fn mode_determinant(&self, m: i32) -> C64 {
        det2(&self.pb[self.index(m)])
    }
}

fn det2(p: &[[C64; 2]; 2]) -> C64 {
    p[0][0] * p[1][1] - p[0][1] * p[1][0]
}

pub(crate) fn inv2(p: &[[C64; 2]; 2]) -> Option<[[C64; 2]; 2]> {
    let d = det2(p);
    let scale = p.iter().flatten().map(|z| z.norm_sqr()).sum::<f64>();
    if d.norm() <= 1e-14 * scale {
        return None;
    }
    Some([[p[1][1] / d, -p[0][1] / d], [-p[1][0] / d, p[0][0] / d]])
}

/// Single-cylinder scattering matrix at order `m` for the given fiber in an
/// ambient of index `n_out`.
pub fn scatter_matrix(m: i32, beta: f64, k: f64, fiber: &Fiber, n_out: f64) -> Result<ScatterMatrix, CylScatterError> {
    let b = C64::new(beta, 0.0);
    let fb = FiberBoundary::new(fiber, n_out, k, b, m.unsigned_abs() as usize)?;
    let rs = fb.scaled_r(m).ok_or(CylScatterError::Pole { m, beta: b })?;
    let am = m.unsigned_abs() as usize;
    let ratio = (fb.norm_j[am] / fb.norm_h[am]).to_c64();
    if !ratio.re.is_finite() {
        return Err(CylScatterError::Range { m });
    }
    Ok(ScatterMatrix {
        m,
        r_ee: rs[0][0] * ratio,
        r_eh: rs[0][1] * ratio,
        r_he: rs[1][0] * ratio,
        r_hh: rs[1][1] * ratio,
    })
}
