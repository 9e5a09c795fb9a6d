//! Multiple scattering between fibers at fixed axial wavenumber β.
//!
//! For each fiber `l` the field regular at its axis is the incident field plus
//! everything scattered by the other fibers, re-expanded with Graf's theorem:
//! `A_l = A_l^inc + Σ_{l'≠l} S^{ll'} B_{l'}`. Combined with the boundary
//! relation `P_A A + P_B B = 0` this gives one dense system
//! `(P_B + P_A S) B = −P_A A^inc` per β, shared by every source point and
//! dipole orientation.
//!
//! The incident coefficients relate to the tabulated source terms by
//! `A^inc = −(i/4) K`.

use crate::config::{FiberArray, Fiber};
use crate::cylscatter::{kappa_ambient, CylScatterError, FiberBoundary, C64};
use crate::ext::Ext;
use crate::specfun::{CylSeq, SpecFunError};
use nalgebra::{DMatrix, DVector};

pub type Tensor3 = [[C64; 3]; 3];

pub const ZERO3: Tensor3 = [[C64 { re: 0.0, im: 0.0 }; 3]; 3];

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum MultiScatterError {
    #[error("point ({x}, {y}) nm lies inside or within 0.1 nm of fiber {fiber}")]
    InsideFiber { x: f64, y: f64, fiber: usize },
    #[error(transparent)]
    Boundary(#[from] CylScatterError),
    #[error(transparent)]
    SpecialFunction(#[from] SpecFunError),
    #[error("multiple-scattering system is singular at β = {0} (guided-mode pole)")]
    Singular(C64),
    #[error("solve residual {residual:e} exceeds 1e-10 at β = {beta}")]
    Residual { beta: C64, residual: f64 },
}

const SURFACE_CLEARANCE_NM: f64 = 0.1;

fn polar(p: [f64; 2], c: [f64; 2]) -> (f64, f64) {
    let (dx, dy) = (p[0] - c[0], p[1] - c[1]);
    (dx.hypot(dy), dy.atan2(dx))
}

pub(crate) fn check_outside(fibers: &FiberArray, p: [f64; 2]) -> Result<(), MultiScatterError> {
    for (i, f) in fibers.fibers.iter().enumerate() {
        if f.distance_to_axis(p) < f.radius_nm + SURFACE_CLEARANCE_NM {
            return Err(MultiScatterError::InsideFiber {
                x: p[0],
                y: p[1],
                fiber: i,
            });
        }
    }
    Ok(())
}

/// Field kind of an axial component.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FieldKind {
    E = 0,
    H = 1,
}

/// Source coefficients `K[u][V][l][m]` of a point dipole, as tabulated:
/// the incident axial field around fiber `l` is
/// `−(i/4) Σ_m K_{um}^{Vl} J_m(κρ_l) e^{imφ_l}`.
#[derive(Debug, Clone)]
pub struct SourceTerms {
    m_max: usize,
    n_fibers: usize,
    values: Vec<Ext>,
}

impl SourceTerms {
    fn slot(&self, u: usize, v: FieldKind, l: usize, m: i32) -> usize {
        let nm = 2 * self.m_max + 1;
        ((u * 2 + v as usize) * self.n_fibers + l) * nm + (m + self.m_max as i32) as usize
    }

    pub fn m_max(&self) -> usize {
        self.m_max
    }

    pub fn get(&self, u: usize, v: FieldKind, l: usize, m: i32) -> C64 {
        self.values[self.slot(u, v, l, m)].to_c64()
    }

    pub(crate) fn get_ext(&self, u: usize, v: FieldKind, l: usize, m: i32) -> Ext {
        self.values[self.slot(u, v, l, m)]
    }
}

/// Source terms of a dipole at `src` for all fibers and orders `|m| ≤ m_max`.
pub fn source_terms(
    beta: C64,
    k: f64,
    fibers: &FiberArray,
    src: [f64; 2],
    m_max: usize,
) -> Result<SourceTerms, MultiScatterError> {
    check_outside(fibers, src)?;
    let kappa = kappa_ambient(k, fibers.index_ambient, beta);
    let kb2 = k * k * fibers.index_ambient * fibers.index_ambient;
    let nf = fibers.len();
    let mut st = SourceTerms {
        m_max,
        n_fibers: nf,
        values: vec![Ext::ZERO; 6 * nf * (2 * m_max + 1)],
    };
    let i = C64::new(0.0, 1.0);
    for (l, f) in fibers.fibers.iter().enumerate() {
        let (r, phi) = polar(src, f.center_nm);
        let seq = CylSeq::hankel(m_max + 1, kappa * r)?;
        // h_m = H_m(κρ'_l) e^{−imφ'_l}
        let h = |m: i32| seq.h(m).mul_c(C64::from_polar(1.0, -(m as f64) * phi));
        for m in -(m_max as i32)..=m_max as i32 {
            let (hm1, h0, hp1) = (h(m - 1), h(m), h(m + 1));
            let e_x = (hm1 - hp1).mul_c(i * beta * kappa / (2.0 * kb2));
            let e_y = (hm1 + hp1).mul_c(beta * kappa / (2.0 * kb2));
            let e_z = h0.mul_c(-(C64::new(1.0, 0.0) - beta * beta / kb2));
            let h_x = (hm1 + hp1).mul_c(kappa / (2.0 * k));
            let h_y = (hm1 - hp1).mul_c(kappa / (2.0 * k) / i);
            for (u, (ve, vh)) in [(e_x, h_x), (e_y, h_y), (e_z, Ext::ZERO)].into_iter().enumerate() {
                let se = st.slot(u, FieldKind::E, l, m);
                st.values[se] = ve;
                let sh = st.slot(u, FieldKind::H, l, m);
                st.values[sh] = vh;
            }
        }
    }
    Ok(st)
}

/// Graf translation coefficients: a wave `H_{m'}(κρ_{l'})e^{im'φ_{l'}}`
/// scattered by fiber `l'` equals `Σ_m S^{ll'}_{mm'} J_m(κρ_l)e^{imφ_l}`
/// near fiber `l`, with `S^{ll'}_{mm'} = H_{m'−m}(κ d) e^{i(m'−m)φ_D}`,
/// `d e^{iφ_D} = c_l − c_{l'}`.
#[derive(Debug, Clone)]
pub struct TranslationOperator {
    m_max: usize,
    n_fibers: usize,
    /// per ordered pair `(l, l')`, orders `−2M..=2M` of `H_ν(κd)e^{iνφ_D}`
    waves: Vec<Vec<Ext>>,
}

impl TranslationOperator {
    pub fn new(beta: C64, k: f64, fibers: &FiberArray, m_max: usize) -> Result<Self, MultiScatterError> {
        let kappa = kappa_ambient(k, fibers.index_ambient, beta);
        let nf = fibers.len();
        let mut waves = Vec::with_capacity(nf * nf);
        for l in 0..nf {
            for lp in 0..nf {
                if l == lp {
                    waves.push(Vec::new());
                    continue;
                }
                let (d, phi) = polar(fibers.fibers[l].center_nm, fibers.fibers[lp].center_nm);
                let seq = CylSeq::hankel(2 * m_max, kappa * d)?;
                let w = (-(2 * m_max as i32)..=2 * m_max as i32)
                    .map(|nu| seq.h(nu).mul_c(C64::from_polar(1.0, nu as f64 * phi)))
                    .collect();
                waves.push(w);
            }
        }
        Ok(TranslationOperator {
            m_max,
            n_fibers: nf,
            waves,
        })
    }

    pub(crate) fn get_ext(&self, l: usize, lp: usize, m: i32, mp: i32) -> Ext {
        assert_ne!(l, lp, "translation is defined between distinct fibers only");
        self.waves[l * self.n_fibers + lp][(mp - m + 2 * self.m_max as i32) as usize]
    }

    pub fn get(&self, l: usize, lp: usize, m: i32, mp: i32) -> C64 {
        self.get_ext(l, lp, m, mp).to_c64()
    }
}

/// Scaled unknown layout: `((l·(2M+1) + m + M)·2 + V)`.
fn unknown(m_max: usize, l: usize, m: i32, v: usize) -> usize {
    ((l * (2 * m_max + 1)) + (m + m_max as i32) as usize) * 2 + v
}

/// Factorized multiple-scattering operator at one β.
pub struct SpectralSystem<'a> {
    pub beta: C64,
    pub k: f64,
    pub kappa: C64,
    pub m_max: usize,
    fibers: &'a FiberArray,
    boundaries: Vec<FiberBoundary>,
    trans: TranslationOperator,
    matrix: DMatrix<C64>,
    lu: std::sync::OnceLock<Lu>,
}

type Lu = nalgebra::LU<C64, nalgebra::Dyn, nalgebra::Dyn>;

fn log_det_of(lu: &Lu) -> (f64, f64) {
    let u = lu.u();
    let mut ln = 0.0;
    let mut arg = 0.0;
    for i in 0..u.nrows() {
        let d = u[(i, i)];
        ln += d.norm().ln();
        arg += d.arg();
    }
    if lu.p().determinant::<f64>() < 0.0 {
        arg += std::f64::consts::PI;
    }
    (ln, arg.rem_euclid(2.0 * std::f64::consts::PI))
}

/// Scattered-wave amplitudes `B[u][V][l][m]` for the three unit dipoles.
#[derive(Debug, Clone)]
pub struct ScatteredAmplitudes {
    pub m_max: usize,
    pub n_fibers: usize,
    /// scaled by `|H_m(κ₊a_l)|`, one column per orientation
    scaled: [Vec<C64>; 3],
    norm_h: Vec<Vec<Ext>>,
    /// worst normwise backward error over the three solves
    pub residual: f64,
}

impl ScatteredAmplitudes {
    /// Physical amplitude multiplying `H_m(κρ_l)e^{imφ_l}`.
    pub fn get(&self, u: usize, v: FieldKind, l: usize, m: i32) -> C64 {
        let s = self.scaled[u][unknown(self.m_max, l, m, v as usize)];
        (Ext::from_c64(s) / self.norm_h[l][m.unsigned_abs() as usize]).to_c64()
    }

    pub fn norm(&self) -> f64 {
        self.scaled.iter().flatten().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
    }
}

impl<'a> SpectralSystem<'a> {
    pub fn new(fibers: &'a FiberArray, k: f64, beta: C64, m_max: usize) -> Result<Self, MultiScatterError> {
        let nf = fibers.len();
        let nm = 2 * m_max + 1;
        let n = 2 * nf * nm;
        let boundaries = fibers
            .fibers
            .iter()
            .map(|f| FiberBoundary::new(f, fibers.index_ambient, k, beta, m_max))
            .collect::<Result<Vec<_>, _>>()?;
        let trans = TranslationOperator::new(beta, k, fibers, m_max)?;
        let mut matrix = DMatrix::<C64>::zeros(n, n);
        let mi = m_max as i32;
        for l in 0..nf {
            let bl = &boundaries[l];
            for m in -mi..=mi {
                let ia = bl.index(m);
                for r in 0..2 {
                    let row = unknown(m_max, l, m, r);
                    for v in 0..2 {
                        matrix[(row, unknown(m_max, l, m, v))] = bl.pb[ia][r][v];
                    }
                }
            }
            for lp in 0..nf {
                if lp == l {
                    continue;
                }
                let blp = &boundaries[lp];
                for m in -mi..=mi {
                    let nj = bl.norm_j[m.unsigned_abs() as usize];
                    let ia = bl.index(m);
                    for mp in -mi..=mi {
                        let t = (nj * trans.get_ext(l, lp, m, mp) / blp.norm_h[mp.unsigned_abs() as usize]).to_c64();
                        if t == C64::new(0.0, 0.0) {
                            continue;
                        }
                        for r in 0..2 {
                            let row = unknown(m_max, l, m, r);
                            for v in 0..2 {
                                matrix[(row, unknown(m_max, lp, mp, v))] += bl.pa[ia][r][v] * t;
                            }
                        }
                    }
                }
            }
        }
        Ok(SpectralSystem {
            beta,
            k,
            kappa: kappa_ambient(k, fibers.index_ambient, beta),
            m_max,
            fibers,
            boundaries,
            trans,
            matrix,
            lu: std::sync::OnceLock::new(),
        })
    }

    pub fn dimension(&self) -> usize {
        self.matrix.nrows()
    }

    fn lu(&self) -> &Lu {
        self.lu.get_or_init(|| self.matrix.clone().lu())
    }

    /// `(ln|det|, arg det)` of the scaled system matrix.
    pub fn log_determinant(&self) -> (f64, f64) {
        log_det_of(self.lu())
    }

    /// Fiber `l`'s mirror partner under `y → −y`, if the array is symmetric.
    fn mirror_partners(&self) -> Option<Vec<usize>> {
        let fs = &self.fibers.fibers;
        let scale = fs.iter().map(|f| f.radius_nm + f.center_nm[0].abs() + f.center_nm[1].abs()).fold(1.0, f64::max);
        fs.iter()
            .map(|f| {
                fs.iter().position(|g| {
                    (g.center_nm[0] - f.center_nm[0]).abs() < 1e-12 * scale
                        && (g.center_nm[1] + f.center_nm[1]).abs() < 1e-12 * scale
                        && g.radius_nm == f.radius_nm
                        && g.index_core == f.index_core
                })
            })
            .collect()
    }

    /// When the array is symmetric under `y → −y` the operator commutes with
    /// the mirror and splits into an even and an odd block (by the parity of
    /// `E_z`); returns `(ln|det|, arg)` of each block.
    ///
    /// Partners of opposite mirror parity can be nearly or exactly degenerate,
    /// so their roots cancel in the full determinant's sign; the blocks keep
    /// them apart.
    pub fn mirror_log_determinants(&self) -> Option<[(f64, f64); 2]> {
        if self.m_max == 0 {
            return None;
        }
        let perm = self.mirror_partners()?;
        let nf = self.fibers.len();
        let mm = self.m_max;
        let mi = mm as i32;
        // mirror image of b_{l,m} is ±(−1)^m b_{π(l),−m}: E_z is a scalar, H_z a
        // pseudo-scalar, and H_{−m} = (−1)^m H_m; a sign rule is (parity, alternating)
        let col_sign = [(1.0, true), (-1.0, true)];
        let sgn = |(p, alt): (f64, bool), m: i32| if alt && m % 2 != 0 { -p } else { p };
        // one orbit {(l, m), (π(l), −m)} per entry, listed once
        let mut orbits = Vec::new();
        for l in 0..nf {
            for m in -mi..=mi {
                let partner = (perm[l], -m);
                if (l, m) <= partner {
                    orbits.push(((l, m), partner));
                }
            }
        }
        let basis = |parity: f64, signs: [(f64, bool); 2]| -> Vec<Vec<(usize, f64)>> {
            let h = std::f64::consts::FRAC_1_SQRT_2;
            let mut out = Vec::new();
            for &((l, m), (lp, mp)) in &orbits {
                for v in 0..2 {
                    let s = parity * sgn(signs[v], m);
                    if (l, m) == (lp, mp) {
                        if s > 0.0 {
                            out.push(vec![(unknown(mm, l, m, v), 1.0)]);
                        }
                    } else {
                        out.push(vec![(unknown(mm, l, m, v), h), (unknown(mm, lp, mp, v), h * s)]);
                    }
                }
            }
            out
        };
        // row parities read off from the image of one even vector
        let mut p = DVector::<C64>::zeros(self.dimension());
        for (i, col) in basis(1.0, col_sign).iter().enumerate() {
            let w = C64::new(1.0 / (1.0 + i as f64), 0.3 / (2.0 + i as f64));
            for &(idx, c) in col {
                p[idx] += w * c;
            }
        }
        let y = &self.matrix * &p;
        let scale = y.iter().map(|z| z.norm()).fold(0.0, f64::max);
        let mut row_sign = [(1.0, false); 2];
        for (r, rule) in row_sign.iter_mut().enumerate() {
            let leak = |cand: (f64, bool)| {
                let mut e = 0.0f64;
                for &((l, m), (lp, mp)) in &orbits {
                    let (a, b) = (y[unknown(mm, l, m, r)], y[unknown(mm, lp, mp, r)]);
                    e = e.max((b - a * sgn(cand, m)).norm());
                }
                e
            };
            let cands = [(1.0, false), (-1.0, false), (1.0, true), (-1.0, true)];
            let (best, err) = cands
                .iter()
                .map(|&c| (c, leak(c)))
                .min_by(|x, y| x.1.total_cmp(&y.1))
                .expect("non-empty");
            if err > 1e-9 * scale {
                return None;
            }
            *rule = best;
        }
        let mut res = [(0.0, 0.0); 2];
        for (slot, parity) in res.iter_mut().zip([1.0, -1.0]) {
            let cols = basis(parity, col_sign);
            let rows = basis(parity, row_sign);
            if rows.len() != cols.len() {
                return None;
            }
            let red = DMatrix::<C64>::from_fn(rows.len(), cols.len(), |i, j| {
                let mut acc = C64::new(0.0, 0.0);
                for &(ri, rw) in &rows[i] {
                    for &(cj, cw) in &cols[j] {
                        acc += self.matrix[(ri, cj)] * (rw * cw);
                    }
                }
                acc
            });
            *slot = log_det_of(&red.lu());
        }
        Some(res)
    }

    fn rhs(&self, st: &SourceTerms, u: usize) -> DVector<C64> {
        let nf = self.fibers.len();
        let mi = self.m_max as i32;
        let mut rhs = DVector::<C64>::zeros(self.dimension());
        // A^inc = −(i/4) K, right-hand side −P_A A^inc
        let pref = C64::new(0.0, 0.25);
        for l in 0..nf {
            let bl = &self.boundaries[l];
            for m in -mi..=mi {
                let nj = bl.norm_j[m.unsigned_abs() as usize];
                let a = [
                    (st.get_ext(u, FieldKind::E, l, m) * nj).to_c64() * pref,
                    (st.get_ext(u, FieldKind::H, l, m) * nj).to_c64() * pref,
                ];
                let ia = bl.index(m);
                for r in 0..2 {
                    rhs[unknown(self.m_max, l, m, r)] = bl.pa[ia][r][0] * a[0] + bl.pa[ia][r][1] * a[1];
                }
            }
        }
        rhs
    }

    /// Residual measured in the form `b − R_s·T·b = R_s·a_inc`, obtained by
    /// applying the per-order inverse of `P_B` to residual and right-hand
    /// side; `None` where some `P_B` block is singular.
    /// Solve for the amplitudes radiated by the fibers in response to the
    /// three unit dipoles at `src`.
    pub fn solve(&self, src: [f64; 2]) -> Result<ScatteredAmplitudes, MultiScatterError> {
        let st = source_terms(self.beta, self.k, self.fibers, src, self.m_max)?;
        let n = self.dimension();
        let mut b = DMatrix::<C64>::zeros(n, 3);
        for u in 0..3 {
            b.set_column(u, &self.rhs(&st, u));
        }
        let mnorm = self.matrix.norm();
        let bn: Vec<f64> = (0..3).map(|u| b.column(u).norm()).collect();
        let mut x = self.lu().solve(&b).ok_or(MultiScatterError::Singular(self.beta))?;
        // iterative refinement where the system is ill-conditioned, all three
        // orientations per matrix product; a column only takes a correction
        // that lowers its residual
        let mut r = &b - &self.matrix * &x;
        let rel = |r: &DMatrix<C64>, u: usize| if bn[u] > 0.0 { r.column(u).norm() / bn[u] } else { 0.0 };
        let mut res: Vec<f64> = (0..3).map(|u| rel(&r, u)).collect();
        let mut live: Vec<bool> = res.iter().map(|&e| e > 1e-13).collect();
        for _ in 0..3 {
            if !live.iter().any(|&l| l) {
                break;
            }
            let Some(dx) = self.lu().solve(&r) else { break };
            let xn = &x + dx;
            let rn = &b - &self.matrix * &xn;
            for u in 0..3 {
                if !live[u] {
                    continue;
                }
                let e = rel(&rn, u);
                if e >= res[u] {
                    live[u] = false;
                    continue;
                }
                x.set_column(u, &xn.column(u));
                r.set_column(u, &rn.column(u));
                res[u] = e;
                live[u] = e > 1e-13;
            }
        }
        let mut cols: [Vec<C64>; 3] = Default::default();
        let mut worst: f64 = 0.0;
        for (u, col) in cols.iter_mut().enumerate() {
            if bn[u] > 0.0 {
                // normwise backward error: near the light line the system is
                // ill-conditioned and |r|/|b| says nothing about the solve
                worst = worst.max(r.column(u).norm() / (mnorm * x.column(u).norm() + bn[u]));
            }
            if x.column(u).iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
                return Err(MultiScatterError::Singular(self.beta));
            }
            *col = x.column(u).iter().copied().collect();
        }
        if worst > 1e-10 {
            return Err(MultiScatterError::Residual {
                beta: self.beta,
                residual: worst,
            });
        }
        Ok(ScatteredAmplitudes {
            m_max: self.m_max,
            n_fibers: self.fibers.len(),
            scaled: cols,
            norm_h: self.boundaries.iter().map(|b| b.norm_h.clone()).collect(),
            residual: worst,
        })
    }

    /// Scattered spectral tensor at `obs` (columns: source orientation).
    pub fn scattered_field(&self, amps: &ScatteredAmplitudes, obs: [f64; 2]) -> Result<Tensor3, MultiScatterError> {
        check_outside(self.fibers, obs)?;
        let mi = self.m_max as i32;
        let kappa = self.kappa;
        // per orientation: Ez, ∂xEz, ∂yEz, Hz, ∂xHz, ∂yHz
        let mut acc = [[C64::new(0.0, 0.0); 6]; 3];
        for l in 0..self.fibers.len() {
            let (r, phi) = polar(obs, self.fibers.fibers[l].center_nm);
            let seq = CylSeq::hankel(self.m_max + 2, kappa * r)?;
            let bl = &self.boundaries[l];
            let wave = |m: i32, nh: Ext| (seq.h(m) / nh).to_c64() * C64::from_polar(1.0, m as f64 * phi);
            for m in -mi..=mi {
                let nh = bl.norm_h[m.unsigned_abs() as usize];
                let (w0, wm, wp) = (wave(m, nh), wave(m - 1, nh), wave(m + 1, nh));
                let dx = 0.5 * kappa * (wm - wp);
                let dy = C64::new(0.0, 0.5) * kappa * (wp + wm);
                for (u, a) in acc.iter_mut().enumerate() {
                    let be = amps.scaled[u][unknown(self.m_max, l, m, 0)];
                    let bh = amps.scaled[u][unknown(self.m_max, l, m, 1)];
                    a[0] += be * w0;
                    a[1] += be * dx;
                    a[2] += be * dy;
                    a[3] += bh * w0;
                    a[4] += bh * dx;
                    a[5] += bh * dy;
                }
            }
        }
        let mut g = ZERO3;
        for (u, a) in acc.iter().enumerate() {
            let [ex, ey] = transverse_e(self.beta, self.k, kappa, a[1], a[2], a[4], a[5]);
            g[0][u] = ex;
            g[1][u] = ey;
            g[2][u] = a[0];
        }
        Ok(g)
    }

    pub fn fibers(&self) -> &FiberArray {
        self.fibers
    }

    pub(crate) fn boundary(&self, l: usize) -> &FiberBoundary {
        &self.boundaries[l]
    }

    pub(crate) fn matrix(&self) -> &DMatrix<C64> {
        &self.matrix
    }

    /// `u·M⁻¹·v` for fixed probe vectors; its reciprocal has a simple zero at
    /// every pole, degenerate or not.
    pub(crate) fn probe(&self, u: &DVector<C64>, v: &DVector<C64>) -> Option<C64> {
        let x = self.lu().solve(v)?;
        Some(u.dot(&x))
    }

    /// Scaled regular amplitudes `a = T b` re-radiated onto each fiber by the
    /// others (no incident part), same layout as `b`.
    pub(crate) fn regular_from(&self, b: &[C64]) -> Vec<C64> {
        let nf = self.fibers.len();
        let mi = self.m_max as i32;
        let mut a = vec![C64::new(0.0, 0.0); b.len()];
        for l in 0..nf {
            let bl = &self.boundaries[l];
            for lp in (0..nf).filter(|&x| x != l) {
                let blp = &self.boundaries[lp];
                for m in -mi..=mi {
                    let nj = bl.norm_j[m.unsigned_abs() as usize];
                    for mp in -mi..=mi {
                        let t = (nj * self.trans.get_ext(l, lp, m, mp) / blp.norm_h[mp.unsigned_abs() as usize]).to_c64();
                        for v in 0..2 {
                            a[unknown(self.m_max, l, m, v)] += t * b[unknown(self.m_max, lp, mp, v)];
                        }
                    }
                }
            }
        }
        a
    }
}

/// Position of `(fiber l, order m, kind V)` in scaled vectors.
pub(crate) fn slot(m_max: usize, l: usize, m: i32, v: FieldKind) -> usize {
    unknown(m_max, l, m, v as usize)
}

/// Azimuthal derivative rules for `Σ_m c_m Z_m(κρ)e^{imφ}`: returns the
/// value and `∂x`, `∂y` given `Z_{m−1}, Z_m, Z_{m+1}` already multiplied by
/// their phases.
pub(crate) fn cyl_gradient(kappa: C64, c: C64, wm: C64, w0: C64, wp: C64) -> [C64; 3] {
    [c * w0, c * 0.5 * kappa * (wm - wp), c * C64::new(0.0, 0.5) * kappa * (wp + wm)]
}

/// `E_x, E_y` from transverse gradients of `E_z` and `Z₀H_z` in a medium
/// whose transverse wavenumber is `κ`.
pub(crate) fn transverse_e(beta: C64, k: f64, kappa: C64, ez_x: C64, ez_y: C64, hz_x: C64, hz_y: C64) -> [C64; 2] {
    let f = C64::new(0.0, 1.0) / (kappa * kappa);
    [f * (beta * ez_x + k * hz_y), f * (beta * ez_y - k * hz_x)]
}

/// Convenience wrapper: solve at one β for a dipole at `rho_src`.
pub fn assemble_and_solve(
    beta: C64,
    k: f64,
    fibers: &FiberArray,
    rho_src: [f64; 2],
    m_max: usize,
) -> Result<ScatteredAmplitudes, MultiScatterError> {
    SpectralSystem::new(fibers, k, beta, m_max)?.solve(rho_src)
}

/// Fourier-domain Green's tensor split into its free and scattered parts.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SpectralGreen {
    pub vacuum: Tensor3,
    pub scattered: Tensor3,
}

impl SpectralGreen {
    pub fn total(&self) -> Tensor3 {
        let mut t = self.vacuum;
        for i in 0..3 {
            for j in 0..3 {
                t[i][j] += self.scattered[i][j];
            }
        }
        t
    }
}

pub fn spectral_tensor(
    beta: C64,
    k: f64,
    fibers: &FiberArray,
    rho: [f64; 2],
    rho_src: [f64; 2],
    m_max: usize,
) -> Result<SpectralGreen, MultiScatterError> {
    check_outside(fibers, rho)?;
    let scattered = if fibers.is_empty() {
        ZERO3
    } else {
        let sys = SpectralSystem::new(fibers, k, beta, m_max)?;
        let amps = sys.solve(rho_src)?;
        sys.scattered_field(&amps, rho)?
    };
    Ok(SpectralGreen {
        vacuum: vacuum_spectral_tensor(beta, k, fibers.index_ambient, rho, rho_src)?,
        scattered,
    })
}

/// `(I + ∇̃∇̃/k²n²)(i/4)H_0(κ|ρ−ρ'|)` with `∇̃ = (∂x, ∂y, iβ)`.
pub fn vacuum_spectral_tensor(beta: C64, k: f64, n: f64, rho: [f64; 2], rho_src: [f64; 2]) -> Result<Tensor3, SpecFunError> {
    let kappa = kappa_ambient(k, n, beta);
    let (dx, dy) = (rho[0] - rho_src[0], rho[1] - rho_src[1]);
    let r = dx.hypot(dy);
    let x = kappa * r;
    let seq = CylSeq::hankel(2, x)?;
    let (h0, h1) = (seq.h(0).to_c64(), seq.h(1).to_c64());
    let q = C64::new(0.0, 0.25);
    let kb2 = k * k * n * n;
    let g = q * h0;
    let rh = [dx / r, dy / r];
    let grad = [q * (-kappa * h1) * rh[0], q * (-kappa * h1) * rh[1], C64::new(0.0, 1.0) * beta * g];
    let h1p = h0 - h1 / x;
    let mut hess = [[C64::new(0.0, 0.0); 3]; 3];
    for i in 0..2 {
        for j in 0..2 {
            let delta = if i == j { 1.0 } else { 0.0 };
            hess[i][j] = q * (-kappa) * (kappa * h1p * rh[i] * rh[j] + h1 * (delta - rh[i] * rh[j]) / r);
        }
        hess[i][2] = C64::new(0.0, 1.0) * beta * grad[i];
        hess[2][i] = hess[i][2];
    }
    hess[2][2] = -beta * beta * g;
    let mut t = ZERO3;
    for i in 0..3 {
        for j in 0..3 {
            t[i][j] = hess[i][j] / kb2 + if i == j { g } else { C64::new(0.0, 0.0) };
        }
    }
    Ok(t)
}

/// Incident axial fields re-expanded about fiber `l` and pushed through the
/// transverse relations; equals the vacuum tensor inside the annulus of
/// validity. Exposed for consistency tests.
pub fn incident_from_expansion(
    beta: C64,
    k: f64,
    fibers: &FiberArray,
    l: usize,
    rho: [f64; 2],
    rho_src: [f64; 2],
    m_max: usize,
) -> Result<Tensor3, MultiScatterError> {
    let st = source_terms(beta, k, fibers, rho_src, m_max)?;
    let kappa = kappa_ambient(k, fibers.index_ambient, beta);
    let fib: &Fiber = &fibers.fibers[l];
    let (r, phi) = polar(rho, fib.center_nm);
    let seq = CylSeq::bessel(m_max + 2, kappa * r);
    let mi = m_max as i32;
    let mut g = ZERO3;
    for u in 0..3 {
        let mut acc = [C64::new(0.0, 0.0); 6];
        for m in -mi..=mi {
            let wave = |mm: i32| seq.j(mm).mul_c(C64::from_polar(1.0, mm as f64 * phi));
            let ke = st.get_ext(u, FieldKind::E, l, m).mul_c(C64::new(0.0, -0.25));
            let kh = st.get_ext(u, FieldKind::H, l, m).mul_c(C64::new(0.0, -0.25));
            let (w0, wm, wp) = (wave(m), wave(m - 1), wave(m + 1));
            let dx = (wm - wp).mul_c(0.5 * kappa);
            let dy = (wp + wm).mul_c(C64::new(0.0, 0.5) * kappa);
            acc[0] += (ke * w0).to_c64();
            acc[1] += (ke * dx).to_c64();
            acc[2] += (ke * dy).to_c64();
            acc[3] += (kh * w0).to_c64();
            acc[4] += (kh * dx).to_c64();
            acc[5] += (kh * dy).to_c64();
        }
        let [ex, ey] = transverse_e(beta, k, kappa, acc[1], acc[2], acc[4], acc[5]);
        g[0][u] = ex;
        g[1][u] = ey;
        g[2][u] = acc[0];
    }
    Ok(g)
}
