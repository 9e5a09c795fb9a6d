//! Real-space Green's tensor by Fourier inversion along the fiber axis.
//!
//! The scattered part is integrated over `β ∈ (−∞, ∞)` folded onto `β > 0`
//! with `G̃(−β) = S∘G̃(β)`, `S_ij = s_i s_j`, `s = (1, 1, −1)`:
//! `G_s = (1/2π) ∫_{C+} [G̃(β)e^{iβΔz} + S∘G̃(β)e^{−iβΔz}] dβ`.
//! `C+` follows the real axis but dips below the light line and all guided
//! poles (retarded prescription). Beyond the poles the tail runs along the
//! real axis for short axial separations and up/down vertical rays for long
//! ones. The free-space part is added in closed form.
//!
//! Guided modes are the zeros of the multiple-scattering determinant on
//! `(k n₊, k n₋)`; the guided part is `i Σ_μ Res_{β_μ}[Q∘G̃ e^{iβ|Δz|}]`
//! with `Q = I` (`Δz > 0`), `S` (`Δz < 0`), `(I+S)/2` (`Δz = 0`).

use crate::config::{ContourKind, FiberArray, SolverSettings};
use crate::cylscatter::{kappa_core, C64};
use crate::ext::Ext;
use crate::multiscatter::{
    check_outside, cyl_gradient, slot, transverse_e, vacuum_spectral_tensor, FieldKind, MultiScatterError,
    SpectralSystem, Tensor3, ZERO3,
};
use crate::quad::{par_map, Adaptive, QuadError};
use crate::specfun::CylSeq;
use nalgebra::DVector;
use std::f64::consts::PI;
use std::sync::OnceLock;

const I: C64 = C64 { re: 0.0, im: 1.0 };
const FOLD: [f64; 3] = [1.0, 1.0, -1.0];
pub const M_MAX_CAP: usize = 64;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum SpectralError {
    #[error(transparent)]
    Scatter(#[from] MultiScatterError),
    #[error(transparent)]
    Quadrature(#[from] QuadError),
    #[error("azimuthal truncation not converged by m_max = {m_max} (relative change {change:e})")]
    TruncationNotConverged { m_max: usize, change: f64 },
    #[error("guided-mode search needs a core index above the ambient index")]
    NoGuiding,
    #[error("poles at β/k = {0} and {1} are too close to separate")]
    PoleOverlap(f64, f64),
    #[error("pole refinement failed near β/k = {0}")]
    PoleRefinement(f64),
}

/// Weight in the mode normalization `∫ d²ρ w |E_μ|² = 1`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum NormWeight {
    /// `w = n`, the form used in the long-range expression
    #[default]
    Index,
    /// `w = n²`, the electric energy density
    Permittivity,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SpectralOptions {
    pub m_max: Option<usize>,
    pub quad_rel_tol: f64,
    pub pole_rel_tol: f64,
    pub contour: ContourKind,
    pub norm_weight: NormWeight,
    /// uniform samples of the guided interval in the pole scan
    pub scan_points: usize,
}

impl Default for SpectralOptions {
    fn default() -> Self {
        SpectralOptions::from(&SolverSettings::default())
    }
}

impl From<&SolverSettings> for SpectralOptions {
    fn from(s: &SolverSettings) -> Self {
        SpectralOptions {
            m_max: s.m_max,
            quad_rel_tol: s.quad_rel_tol,
            pole_rel_tol: s.pole_rel_tol,
            contour: s.contour,
            norm_weight: NormWeight::Index,
            scan_points: 160,
        }
    }
}

/// Observation point, source point and axial offset `Δz = z − z′`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PointPair {
    pub obs: [f64; 2],
    pub src: [f64; 2],
    pub dz: f64,
}

impl PointPair {
    pub fn new(obs: [f64; 2], src: [f64; 2], dz: f64) -> Self {
        PointPair { obs, src, dz }
    }

    pub fn coincident(p: [f64; 2]) -> Self {
        PointPair { obs: p, src: p, dz: 0.0 }
    }

    pub fn is_coincident(&self) -> bool {
        self.obs == self.src && self.dz == 0.0
    }

    fn swapped(&self) -> Self {
        PointPair {
            obs: self.src,
            src: self.obs,
            dz: -self.dz,
        }
    }
}

/// Real-space tensor `G(r, r′)` in 1/nm with its decomposition. At
/// coincident points the real part of the free-space term is excluded.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GreenTensor {
    pub pair: PointPair,
    pub k: f64,
    pub m_max: usize,
    pub total: Tensor3,
    pub vacuum: Tensor3,
    pub scattered: Tensor3,
    pub guided: Tensor3,
    pub radiation: Tensor3,
}

pub fn add(a: &Tensor3, b: &Tensor3) -> Tensor3 {
    let mut t = *a;
    for i in 0..3 {
        for j in 0..3 {
            t[i][j] += b[i][j];
        }
    }
    t
}

pub fn sub(a: &Tensor3, b: &Tensor3) -> Tensor3 {
    let mut t = *a;
    for i in 0..3 {
        for j in 0..3 {
            t[i][j] -= b[i][j];
        }
    }
    t
}

pub fn transpose(a: &Tensor3) -> Tensor3 {
    let mut t = ZERO3;
    for i in 0..3 {
        for j in 0..3 {
            t[i][j] = a[j][i];
        }
    }
    t
}

pub fn max_norm(a: &Tensor3) -> f64 {
    a.iter().flatten().map(|z| z.norm()).fold(0.0, f64::max)
}

/// `dᴴ·G·d`.
pub fn quadratic_form(g: &Tensor3, d: &[C64; 3]) -> C64 {
    let mut s = C64::new(0.0, 0.0);
    for i in 0..3 {
        for j in 0..3 {
            s += d[i].conj() * g[i][j] * d[j];
        }
    }
    s
}

/// `d₁ᴴ·G·d₂`.
pub fn bilinear(d1: &[C64; 3], g: &Tensor3, d2: &[C64; 3]) -> C64 {
    let mut s = C64::new(0.0, 0.0);
    for i in 0..3 {
        for j in 0..3 {
            s += d1[i].conj() * g[i][j] * d2[j];
        }
    }
    s
}

fn fold(g: &Tensor3) -> Tensor3 {
    let mut t = ZERO3;
    for i in 0..3 {
        for j in 0..3 {
            t[i][j] = g[i][j] * FOLD[i] * FOLD[j];
        }
    }
    t
}

/// Free-space tensor `(I + ∇∇/k_b²) e^{ik_bR}/(4πR)`, `k_b = k n`. At `R = 0`
/// only the finite imaginary part `k_b/(6π) I` is returned.
pub fn vacuum_tensor(k: f64, n: f64, obs: [f64; 2], src: [f64; 2], dz: f64) -> Tensor3 {
    let kb = k * n;
    let d = [obs[0] - src[0], obs[1] - src[1], dz];
    let r = (d[0] * d[0] + d[1] * d[1] + d[2] * d[2]).sqrt();
    let mut t = ZERO3;
    if r == 0.0 {
        for (i, row) in t.iter_mut().enumerate() {
            row[i] = C64::new(0.0, kb / (6.0 * PI));
        }
        return t;
    }
    let x = kb * r;
    let g = C64::from_polar(1.0, x) / (4.0 * PI * r);
    let a = g * (1.0 + I / x - 1.0 / (x * x));
    let b = g * (-1.0 - 3.0 * I / x + 3.0 / (x * x));
    for i in 0..3 {
        for j in 0..3 {
            t[i][j] = b * d[i] * d[j] / (r * r) + if i == j { a } else { C64::new(0.0, 0.0) };
        }
    }
    t
}

/// A guided pole `β_μ` with its degeneracy.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Pole {
    pub beta: f64,
    pub multiplicity: usize,
    /// azimuthal order for a single fiber
    pub order: Option<i32>,
    /// mirror class (0: `E_z` even under `y → −y`, 1: odd) when the array
    /// is symmetric about the x-axis
    pub mirror: Option<usize>,
}

/// Which determinant a root search runs on.
#[derive(Debug, Clone, Copy, PartialEq)]
enum Block {
    Order(i32),
    Full,
    Mirror(usize),
}

impl Pole {
    fn block(&self) -> Block {
        match (self.order, self.mirror) {
            (Some(m), _) => Block::Order(m),
            (None, Some(c)) => Block::Mirror(c),
            _ => Block::Full,
        }
    }
}

/// Outcome of the pole search.
#[derive(Debug, Clone, PartialEq)]
pub struct PoleSearch {
    pub poles: Vec<Pole>,
    pub m_max: usize,
    pub warnings: Vec<String>,
}

/// Imaginary parts at coincident points from the fast decay-rate path.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CoincidentImag {
    pub point: [f64; 2],
    pub m_max: usize,
    /// elementwise `Im G_scatt(r, r)`
    pub scattered: [[f64; 3]; 3],
    /// elementwise `Im G_guided(r, r)`
    pub guided: [[f64; 3]; 3],
    /// `Im G₀(r, r)`, isotropic
    pub vacuum: f64,
}

/// Imaginary parts between two points from the fast path.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PairImag {
    pub pair: PointPair,
    pub m_max: usize,
    /// elementwise `Im G_scatt(r, r′)`
    pub scattered: [[f64; 3]; 3],
    /// elementwise `Im G_guided(r, r′)`
    pub guided: [[f64; 3]; 3],
    /// elementwise `Im G₀(r, r′)`
    pub vacuum: [[f64; 3]; 3],
}

pub struct Solver<'a> {
    pub fibers: &'a FiberArray,
    pub k: f64,
    pub opts: SpectralOptions,
    poles: OnceLock<Result<PoleSearch, SpectralError>>,
}

struct Segment {
    from: C64,
    to: C64,
}

#[derive(Clone, Copy, PartialEq)]
enum Term {
    Both,
    Up,
    Down,
}

impl<'a> Solver<'a> {
    pub fn new(fibers: &'a FiberArray, k: f64, opts: SpectralOptions) -> Self {
        Solver {
            fibers,
            k,
            opts,
            poles: OnceLock::new(),
        }
    }

    fn kn_out(&self) -> f64 {
        self.k * self.fibers.index_ambient
    }

    fn kn_core(&self) -> f64 {
        self.k * self.fibers.max_core_index()
    }

    pub fn default_m_max(&self) -> usize {
        let a = self.fibers.fibers.iter().map(|f| f.radius_nm * f.index_core).fold(0.0, f64::max);
        ((self.k * a).ceil() as usize + 12).min(M_MAX_CAP)
    }

    /// Scattered spectral tensors at one β for every pair.
    pub fn spectral_at(&self, beta: C64, pairs: &[PointPair], m_max: usize) -> Result<Vec<Tensor3>, SpectralError> {
        if self.fibers.is_empty() {
            return Ok(vec![ZERO3; pairs.len()]);
        }
        let sys = SpectralSystem::new(self.fibers, self.k, beta, m_max)?;
        let mut sources: Vec<([f64; 2], crate::multiscatter::ScatteredAmplitudes)> = Vec::new();
        let mut out = Vec::with_capacity(pairs.len());
        for p in pairs {
            let idx = match sources.iter().position(|(s, _)| *s == p.src) {
                Some(i) => i,
                None => {
                    sources.push((p.src, sys.solve(p.src)?));
                    sources.len() - 1
                }
            };
            out.push(sys.scattered_field(&sources[idx].1, p.obs)?);
        }
        Ok(out)
    }

    fn check_pairs(&self, pairs: &[PointPair]) -> Result<(), SpectralError> {
        for p in pairs {
            check_outside(self.fibers, p.obs)?;
            check_outside(self.fibers, p.src)?;
        }
        Ok(())
    }

    /// Azimuthal truncation for these pairs: the configured value, or the
    /// heuristic start doubled until the sampled spectral tensors (imaginary
    /// folded part at coincident pairs, all entries otherwise) change by less
    /// than `quad_rel_tol`.
    pub fn resolve_m_max(&self, pairs: &[PointPair]) -> Result<usize, SpectralError> {
        if let Some(m) = self.opts.m_max {
            return Ok(m);
        }
        let mut m = self.default_m_max();
        if self.fibers.is_empty() {
            return Ok(m);
        }
        let samples = [0.3 * self.kn_out(), 0.8 * self.kn_out()];
        let measure = |m: usize| -> Result<Vec<Vec<C64>>, SpectralError> {
            samples
                .iter()
                .map(|&b| {
                    let g = self.spectral_at(C64::new(b, 0.0), pairs, m)?;
                    Ok(g.iter()
                        .zip(pairs)
                        .flat_map(|(t, p)| {
                            if p.is_coincident() {
                                let f = add(t, &fold(t));
                                f.iter().flatten().map(|z| C64::new(z.im, 0.0)).collect::<Vec<_>>()
                            } else {
                                t.iter().flatten().copied().collect()
                            }
                        })
                        .collect())
                })
                .collect()
        };
        let scales: Vec<f64> = pairs
            .iter()
            .map(|p| {
                if p.is_coincident() {
                    0.25
                } else {
                    samples
                        .iter()
                        .map(|&b| {
                            vacuum_spectral_tensor(C64::new(b, 0.0), self.k, self.fibers.index_ambient, p.obs, p.src)
                                .map(|t| max_norm(&t))
                                .unwrap_or(0.0)
                        })
                        .fold(0.0, f64::max)
                }
            })
            .collect();
        let mut cur = measure(m)?;
        loop {
            let next_m = (2 * m).min(M_MAX_CAP);
            if next_m == m {
                return Err(SpectralError::TruncationNotConverged { m_max: m, change: f64::NAN });
            }
            let next = measure(next_m)?;
            let mut change: f64 = 0.0;
            for (c, n) in cur.iter().zip(&next) {
                for (p, (cp, np)) in c.chunks(9).zip(n.chunks(9)).enumerate() {
                    let scale = np.iter().map(|z| z.norm()).fold(scales[p], f64::max);
                    for (x, y) in cp.iter().zip(np) {
                        change = change.max((x - y).norm() / scale);
                    }
                }
            }
            if change < self.opts.quad_rel_tol {
                return Ok(m);
            }
            if next_m == M_MAX_CAP {
                return Err(SpectralError::TruncationNotConverged { m_max: next_m, change });
            }
            m = next_m;
            cur = next;
        }
    }

    // ---- poles ----

    /// Guided poles in `(k n₊, k n₋)`, cached per solver.
    pub fn poles(&self) -> Result<PoleSearch, SpectralError> {
        self.poles.get_or_init(|| self.search_poles(self.k)).clone()
    }

    /// `(ln|det|, arg det)` of the full scattering system at real β.
    pub fn determinant_scan(&self, betas: &[f64], m_max: usize) -> Result<Vec<(f64, f64)>, SpectralError> {
        par_map(betas, |b| self.det_sample(self.k, b, m_max, Block::Full))
    }

    #[doc(hidden)]
    pub fn singular_scan(&self, betas: &[f64], m_max: usize, count: usize) -> Result<Vec<Vec<f64>>, SpectralError> {
        par_map(betas, |b| {
            let sys = SpectralSystem::new(self.fibers, self.k, C64::new(b, 0.0), m_max)?;
            let mut s: Vec<f64> = sys.matrix().singular_values().iter().copied().collect();
            s.sort_by(f64::total_cmp);
            s.truncate(count);
            Ok(s)
        })
    }

    fn det_sample(&self, k: f64, beta: f64, m_max: usize, block: Block) -> Result<(f64, f64), SpectralError> {
        let b = C64::new(beta, 0.0);
        match block {
            Block::Order(m) => {
                let fb = crate::cylscatter::FiberBoundary::new(&self.fibers.fibers[0], self.fibers.index_ambient, k, b, m.unsigned_abs() as usize)
                    .map_err(MultiScatterError::from)?;
                let d = fb.mode_determinant(m);
                Ok((d.norm().ln(), d.arg()))
            }
            Block::Full => Ok(SpectralSystem::new(self.fibers, k, b, m_max)?.log_determinant()),
            Block::Mirror(c) => SpectralSystem::new(self.fibers, k, b, m_max)?
                .mirror_log_determinants()
                .map(|d| d[c])
                .ok_or(SpectralError::PoleRefinement(beta / k)),
        }
    }

    fn search_poles(&self, k: f64) -> Result<PoleSearch, SpectralError> {
        if !self.fibers.supports_guiding() {
            return Err(SpectralError::NoGuiding);
        }
        let mut warnings = Vec::new();
        let (lo, hi) = (k * self.fibers.index_ambient, k * self.fibers.max_core_index());
        let grid = scan_grid(lo, hi, self.opts.scan_points);
        let step = (hi - lo) / self.opts.scan_points as f64;
        let tol = self.opts.pole_rel_tol;
        let mut poles = Vec::new();
        let m_final;
        if self.fibers.len() == 1 {
            let f = &self.fibers.fibers[0];
            let v = k * f.radius_nm * (f.index_core.powi(2) - self.fibers.index_ambient.powi(2)).sqrt();
            let m_top = v.ceil() as i32 + 2;
            for m in 0..=m_top {
                let det = |b: f64| self.det_sample(k, b, 0, Block::Order(m));
                for (beta, mult) in find_roots(&grid, &det, tol, &mut warnings)? {
                    debug_assert_eq!(mult, 1);
                    poles.push(Pole {
                        beta,
                        multiplicity: if m == 0 { 1 } else { 2 },
                        order: Some(m),
                        mirror: None,
                    });
                }
            }
            m_final = self.opts.m_max.unwrap_or(self.default_m_max());
        } else {
            let m0 = self.opts.m_max.unwrap_or(self.default_m_max());
            let probe = SpectralSystem::new(self.fibers, k, C64::new(0.5 * (lo + hi), 0.0), m0.min(4))?;
            let blocks: Vec<Block> = if probe.mirror_log_determinants().is_some() {
                vec![Block::Mirror(0), Block::Mirror(1)]
            } else {
                vec![Block::Full]
            };
            let mut m = m0;
            let mut roots = Vec::new();
            for &blk in &blocks {
                let det = |b: f64| self.det_sample(k, b, m, blk);
                roots.extend(find_roots(&grid, &det, tol, &mut warnings)?.into_iter().map(|(b, mult)| (b, mult, blk)));
            }
            if self.opts.m_max.is_none() {
                // follow the roots to larger truncations until they settle
                loop {
                    let next = (2 * m).min(M_MAX_CAP);
                    if next == m {
                        break;
                    }
                    // the window must stay finer than the scan so neighbouring
                    // roots of one block never share a cell
                    let moved: Vec<(f64, usize, Block)> = roots
                        .iter()
                        .map(|&(b, mult, blk)| Ok((self.refine_pole(k, b, mult, next, 4.0 * step.min(1e-3 * b), blk)?, mult, blk)))
                        .collect::<Result<_, SpectralError>>()?;
                    let shift = roots
                        .iter()
                        .zip(&moved)
                        .map(|(a, b)| ((a.0 - b.0) / a.0).abs())
                        .fold(0.0, f64::max);
                    roots = moved;
                    m = next;
                    if shift < 1e-9 {
                        break;
                    }
                    if m == M_MAX_CAP {
                        warnings.push(format!("pole positions still moving by {shift:e} at m_max = {m}"));
                    }
                }
            }
            m_final = m;
            for (beta, mult, blk) in roots {
                poles.push(Pole {
                    beta,
                    multiplicity: mult,
                    order: None,
                    mirror: match blk {
                        Block::Mirror(c) => Some(c),
                        _ => None,
                    },
                });
            }
        }
        poles.sort_by(|a, b| b.beta.total_cmp(&a.beta));
        for w in poles.windows(2) {
            if (w[0].beta - w[1].beta).abs() < 2.0 * step && w[0].order.is_none() && w[0].mirror == w[1].mirror {
                warnings.push(format!(
                    "poles at β/k = {:.9} and {:.9} are closer than twice the scan step",
                    w[0].beta / k,
                    w[1].beta / k
                ));
            }
        }
        Ok(PoleSearch {
            poles,
            m_max: m_final,
            warnings,
        })
    }

    /// Re-locate a pole near `guess` (for another `k` or truncation).
    fn refine_pole(&self, k: f64, guess: f64, mult: usize, m_max: usize, width: f64, block: Block) -> Result<f64, SpectralError> {
        let det = |b: f64| self.det_sample(k, b, m_max, block);
        let tol = self.opts.pole_rel_tol;
        let lo = (guess - width).max(k * self.fibers.index_ambient * (1.0 + 1e-12));
        let hi = guess + width;
        let n = 16;
        let grid: Vec<f64> = (0..=n).map(|i| lo + (hi - lo) * i as f64 / n as f64).collect();
        let mut warn = Vec::new();
        let roots = find_roots(&grid, &det, tol, &mut warn)?;
        let best = roots
            .iter()
            .filter(|r| r.1 == mult || mult == 0)
            .min_by(|a, b| (a.0 - guess).abs().total_cmp(&(b.0 - guess).abs()))
            .or_else(|| roots.iter().min_by(|a, b| (a.0 - guess).abs().total_cmp(&(b.0 - guess).abs())));
        match best {
            Some(&(b, m)) if m == 2 => self.polish_degenerate(k, b, m_max),
            Some(&(b, _)) => Ok(b),
            None => Err(SpectralError::PoleRefinement(guess / k)),
        }
    }

    /// Secant on `1/(u·M⁻¹·v)`, which has a simple zero even where the
    /// determinant has a double one.
    fn polish_degenerate(&self, k: f64, guess: f64, m_max: usize) -> Result<f64, SpectralError> {
        let n = SpectralSystem::new(self.fibers, k, C64::new(guess, 0.0), m_max)?.dimension();
        let u = DVector::from_fn(n, |i, _| C64::from_polar(1.0, 0.7 * i as f64 + 0.3));
        let v = DVector::from_fn(n, |i, _| C64::from_polar(1.0, 1.3 * i as f64 * i as f64 + 0.1));
        let h = |b: f64| -> Result<C64, SpectralError> {
            let sys = SpectralSystem::new(self.fibers, k, C64::new(b, 0.0), m_max)?;
            Ok(sys.probe(&u, &v).map(|p| 1.0 / p).unwrap_or(C64::new(0.0, 0.0)))
        };
        let (mut x0, mut x1) = (guess * (1.0 - 1e-7), guess * (1.0 + 1e-7));
        let (mut f0, mut f1) = (h(x0)?, h(x1)?);
        for _ in 0..40 {
            if f1.norm() == 0.0 {
                return Ok(x1);
            }
            let dx = -(f1 * (x1 - x0) / (f1 - f0)).re;
            if !dx.is_finite() {
                break;
            }
            x0 = x1;
            f0 = f1;
            x1 += dx;
            f1 = h(x1)?;
            if dx.abs() < self.opts.pole_rel_tol * x1 {
                return Ok(x1);
            }
        }
        if ((x1 - guess) / guess).abs() < 1e-6 {
            Ok(x1)
        } else {
            Err(SpectralError::PoleRefinement(guess / k))
        }
    }

    // ---- residues ----

    fn clusters(&self, poles: &[Pole]) -> Vec<(C64, f64)> {
        let mut sorted: Vec<f64> = poles.iter().map(|p| p.beta).collect();
        sorted.sort_by(f64::total_cmp);
        let merge = 1e-4 * self.k;
        let mut groups: Vec<(f64, f64)> = Vec::new();
        for b in sorted {
            match groups.last_mut() {
                Some(g) if b - g.1 < merge => g.1 = b,
                _ => groups.push((b, b)),
            }
        }
        let lo = self.kn_out();
        (0..groups.len())
            .map(|i| {
                let (a, b) = groups[i];
                let centre = 0.5 * (a + b);
                let half = 0.5 * (b - a);
                let mut room = centre - lo;
                if i > 0 {
                    room = room.min(a - groups[i - 1].1);
                }
                if i + 1 < groups.len() {
                    room = room.min(groups[i + 1].0 - b);
                }
                let r = (half + 0.4 * room).min(half + 0.02 * self.k).max(1.5 * half + 1e-12 * self.k);
                (C64::new(centre, 0.0), r)
            })
            .collect()
    }

    /// `i Σ Res[Q∘G̃ e^{iβ|Δz|}]` for each pair, by 32-point circles.
    fn guided_tensors(&self, pairs: &[PointPair], poles: &[Pole], m_max: usize) -> Result<Vec<Tensor3>, SpectralError> {
        const NC: usize = 32;
        let mut out = vec![ZERO3; pairs.len()];
        for (c, r) in self.clusters(poles) {
            let nodes: Vec<f64> = (0..NC).map(|j| 2.0 * PI * j as f64 / NC as f64).collect();
            let vals = par_map(&nodes, |th| {
                let w = C64::from_polar(r, th);
                self.spectral_at(c + w, pairs, m_max).map(|g| (w, g))
            })?;
            for (w, g) in vals {
                let beta = c + w;
                for (p, (o, gt)) in pairs.iter().zip(out.iter_mut().zip(&g)) {
                    let q = if p.dz > 0.0 {
                        *gt
                    } else if p.dz < 0.0 {
                        fold(gt)
                    } else {
                        let f = fold(gt);
                        let mut h = ZERO3;
                        for i in 0..3 {
                            for j in 0..3 {
                                h[i][j] = 0.5 * (gt[i][j] + f[i][j]);
                            }
                        }
                        h
                    };
                    let ph = (I * beta * p.dz.abs()).exp() * w * I / NC as f64;
                    for i in 0..3 {
                        for j in 0..3 {
                            o[i][j] += q[i][j] * ph;
                        }
                    }
                }
            }
        }
        Ok(out)
    }

    /// Guided part of `G` for each pair.
    pub fn guided_part(&self, pairs: &[PointPair]) -> Result<Vec<Tensor3>, SpectralError> {
        self.check_pairs(pairs)?;
        if !self.fibers.supports_guiding() {
            return Ok(vec![ZERO3; pairs.len()]);
        }
        let m = self.resolve_m_max(pairs)?;
        let poles = self.poles()?.poles;
        self.guided_tensors(pairs, &poles, m)
    }

    // ---- inversion ----

    fn detour(&self, poles: &[Pole], max_dz: f64) -> (Vec<Segment>, f64) {
        let kn = self.kn_out();
        let top = poles.iter().map(|p| p.beta).fold(kn, f64::max);
        let margin = (0.03 * self.k).min(0.5 * (kn - 0.0));
        let left = kn - margin;
        let right = top + 0.03 * self.k;
        let mut depth = 0.03 * self.k;
        if max_dz > 0.0 {
            depth = depth.min(2.0 / max_dz).max(0.003 * self.k);
        }
        let mut segs = Vec::new();
        match self.opts.contour {
            ContourKind::IndentedRealAxis => {
                segs.push(Segment {
                    from: C64::new(0.0, 0.0),
                    to: C64::new(left, 0.0),
                });
                let corners = [
                    C64::new(left, 0.0),
                    C64::new(left, -depth),
                    C64::new(right, -depth),
                    C64::new(right, 0.0),
                ];
                for w in corners.windows(2) {
                    segs.push(Segment { from: w[0], to: w[1] });
                }
            }
            ContourKind::RotatedPath => {
                let apex = C64::new(0.5 * (left + right), -depth * (left + right) / (right - left).max(1e-12 * self.k));
                let apex = C64::new(apex.re, apex.im.max(-0.3 * self.k).min(-depth));
                segs.push(Segment {
                    from: C64::new(0.0, 0.0),
                    to: apex,
                });
                segs.push(Segment {
                    from: apex,
                    to: C64::new(right, 0.0),
                });
            }
        }
        (segs, right)
    }

    /// Surface-distance scale that sets the evanescent decay of `G̃_s`.
    fn decay_length(&self, p: &PointPair) -> f64 {
        self.fibers
            .fibers
            .iter()
            .map(|f| (f.distance_to_axis(p.obs) - f.radius_nm) + (f.distance_to_axis(p.src) - f.radius_nm))
            .fold(f64::INFINITY, f64::min)
    }

    fn integrate_segment(
        &self,
        seg: &Segment,
        pairs: &[PointPair],
        terms: &[Term],
        m_max: usize,
        tol: f64,
    ) -> Result<Vec<Tensor3>, SpectralError> {
        let d = seg.to - seg.from;
        let max_dz = pairs.iter().map(|p| p.dz.abs()).fold(0.0, f64::max);
        let osc = (d.norm() * max_dz / (2.0 * PI)).ceil() as usize;
        let q = Adaptive {
            rel_tol: tol,
            abs_tol: 0.0,
            max_panels: 6000,
            initial_panels: (2 * osc).clamp(2, 400),
        };
        let integrand = |beta: C64, g: &[Tensor3]| -> Vec<C64> {
            let mut v = Vec::with_capacity(9 * pairs.len());
            for ((p, t), term) in pairs.iter().zip(g).zip(terms) {
                let e1 = (I * beta * p.dz).exp();
                let e2 = (-I * beta * p.dz).exp();
                let (w1, w2) = match (term, p.dz >= 0.0) {
                    (Term::Both, _) => (e1, e2),
                    (Term::Up, true) | (Term::Down, false) => (e1, C64::new(0.0, 0.0)),
                    (Term::Up, false) | (Term::Down, true) => (C64::new(0.0, 0.0), e2),
                };
                for i in 0..3 {
                    for j in 0..3 {
                        v.push((t[i][j] * w1 + t[i][j] * FOLD[i] * FOLD[j] * w2) * d);
                    }
                }
            }
            v
        };
        // per-pair scales so that small pairs are resolved as well as large
        let probe: Vec<f64> = (0..7).map(|i| (i as f64 + 0.5) / 7.0).collect();
        let probe_vals = par_map(&probe, |t| {
            let beta = seg.from + d * t;
            self.spectral_at(beta, pairs, m_max).map(|g| integrand(beta, &g))
        })?;
        let scale: Vec<f64> = (0..pairs.len())
            .map(|p| {
                let s = probe_vals
                    .iter()
                    .flat_map(|v| v[9 * p..9 * p + 9].iter().map(|z| z.norm()))
                    .fold(0.0, f64::max);
                if s > 0.0 {
                    1.0 / s
                } else {
                    1.0
                }
            })
            .collect();
        let res = q.integrate(0.0, 1.0, |ts: &[f64]| -> Result<Vec<Vec<C64>>, SpectralError> {
            par_map(ts, |t| {
                let beta = seg.from + d * t;
                let g = self.spectral_at(beta, pairs, m_max)?;
                let mut v = integrand(beta, &g);
                for (i, z) in v.iter_mut().enumerate() {
                    *z *= scale[i / 9];
                }
                Ok(v)
            })
        })?;
        Ok((0..pairs.len())
            .map(|p| {
                let mut t = ZERO3;
                for i in 0..3 {
                    for j in 0..3 {
                        t[i][j] = res[9 * p + 3 * i + j] / scale[p] / (2.0 * PI);
                    }
                }
                t
            })
            .collect())
    }

    /// Full real-space tensors for each pair.
    pub fn invert(&self, pairs: &[PointPair]) -> Result<Vec<GreenTensor>, SpectralError> {
        self.check_pairs(pairs)?;
        let n = self.fibers.index_ambient;
        let vac: Vec<Tensor3> = pairs.iter().map(|p| vacuum_tensor(self.k, n, p.obs, p.src, p.dz)).collect();
        if self.fibers.is_empty() {
            return Ok(pairs
                .iter()
                .zip(vac)
                .map(|(p, v)| GreenTensor {
                    pair: *p,
                    k: self.k,
                    m_max: 0,
                    total: v,
                    vacuum: v,
                    scattered: ZERO3,
                    guided: ZERO3,
                    radiation: ZERO3,
                })
                .collect());
        }
        let m = self.resolve_m_max(pairs)?;
        let poles = if self.fibers.supports_guiding() {
            self.poles()?.poles
        } else {
            Vec::new()
        };
        let max_dz = pairs.iter().map(|p| p.dz.abs()).fold(0.0, f64::max);
        let (segs, right) = self.detour(&poles, max_dz);
        let tol = self.opts.quad_rel_tol;
        let mut scat = vec![ZERO3; pairs.len()];
        let both = vec![Term::Both; pairs.len()];
        for s in &segs {
            for (acc, t) in scat.iter_mut().zip(self.integrate_segment(s, pairs, &both, m, tol)?) {
                *acc = add(acc, &t);
            }
        }
        // tails
        let lengths: Vec<f64> = pairs.iter().map(|p| self.decay_length(p)).collect();
        let short: Vec<usize> = (0..pairs.len()).filter(|&i| pairs[i].dz.abs() <= lengths[i]).collect();
        let long: Vec<usize> = (0..pairs.len()).filter(|&i| pairs[i].dz.abs() > lengths[i]).collect();
        if !short.is_empty() {
            let sub_pairs: Vec<PointPair> = short.iter().map(|&i| pairs[i]).collect();
            let dmin = short.iter().map(|&i| lengths[i]).fold(f64::INFINITY, f64::min);
            let end = (self.kn_core() + 40.0 / dmin).max(right * 1.01);
            let seg = Segment {
                from: C64::new(right, 0.0),
                to: C64::new(end, 0.0),
            };
            let r = self.integrate_segment(&seg, &sub_pairs, &vec![Term::Both; short.len()], m, tol)?;
            for (&i, t) in short.iter().zip(r) {
                scat[i] = add(&scat[i], &t);
            }
        }
        for &i in &long {
            let p = [pairs[i]];
            let reach = 40.0 / pairs[i].dz.abs();
            let up = Segment {
                from: C64::new(right, 0.0),
                to: C64::new(right, reach),
            };
            let down = Segment {
                from: C64::new(right, 0.0),
                to: C64::new(right, -reach),
            };
            let a = self.integrate_segment(&up, &p, &[Term::Up], m, tol)?;
            let b = self.integrate_segment(&down, &p, &[Term::Down], m, tol)?;
            scat[i] = add(&scat[i], &add(&a[0], &b[0]));
        }
        let guided = if poles.is_empty() {
            vec![ZERO3; pairs.len()]
        } else {
            self.guided_tensors(pairs, &poles, m)?
        };
        Ok(pairs
            .iter()
            .enumerate()
            .map(|(i, p)| GreenTensor {
                pair: *p,
                k: self.k,
                m_max: m,
                total: add(&vac[i], &scat[i]),
                vacuum: vac[i],
                scattered: scat[i],
                guided: guided[i],
                radiation: sub(&scat[i], &guided[i]),
            })
            .collect())
    }

    /// Imaginary parts at coincident points only.
    pub fn coincident_imag(&self, points: &[[f64; 2]]) -> Result<Vec<CoincidentImag>, SpectralError> {
        let pairs: Vec<PointPair> = points.iter().map(|&p| PointPair::coincident(p)).collect();
        Ok(self
            .pair_imag(&pairs)?
            .into_iter()
            .zip(points)
            .map(|(p, &pt)| CoincidentImag {
                point: pt,
                m_max: p.m_max,
                scattered: p.scattered,
                guided: p.guided,
                vacuum: p.vacuum[0][0],
            })
            .collect())
    }

    /// Elementwise `Im G(r, r′)` without the full inversion. Beyond the light
    /// line the phased, folded integrand is real on the real axis (lossless
    /// media), so only `|β| < k n₊` and the guided poles contribute.
    pub fn pair_imag(&self, pairs: &[PointPair]) -> Result<Vec<PairImag>, SpectralError> {
        self.check_pairs(pairs)?;
        let kn = self.kn_out();
        let vac: Vec<[[f64; 3]; 3]> = pairs
            .iter()
            .map(|p| vacuum_tensor(self.k, self.fibers.index_ambient, p.obs, p.src, p.dz).map(|r| r.map(|z| z.im)))
            .collect();
        if self.fibers.is_empty() {
            return Ok(pairs
                .iter()
                .zip(vac)
                .map(|(p, v)| PairImag {
                    pair: *p,
                    m_max: 0,
                    scattered: [[0.0; 3]; 3],
                    guided: [[0.0; 3]; 3],
                    vacuum: v,
                })
                .collect());
        }
        let m = self.resolve_m_max(pairs)?;
        let max_dz = pairs.iter().map(|p| p.dz.abs()).fold(0.0, f64::max);
        let q = Adaptive {
            rel_tol: self.opts.quad_rel_tol,
            abs_tol: 1e-12 * kn / (6.0 * PI),
            max_panels: 4000,
            initial_panels: ((kn * max_dz / PI).ceil() as usize).clamp(4, 400),
        };
        let phased = |beta: f64, g: &[Tensor3], scale: f64| -> Vec<C64> {
            let mut v = Vec::with_capacity(9 * pairs.len());
            for (p, t) in pairs.iter().zip(g) {
                let e1 = C64::from_polar(1.0, beta * p.dz);
                let f = fold(t);
                for i in 0..3 {
                    for j in 0..3 {
                        v.push(C64::new((t[i][j] * e1 + f[i][j] * e1.conj()).im * scale, 0.0));
                    }
                }
            }
            v
        };
        // β = kn(1 − u²) resolves the square-root edge at the light line. The
        // folded integrand is bounded there, so the sliver u < U0 is taken as
        // kn·U0²·F(U0) instead of chasing the logarithmic edge into
        // arbitrarily ill-conditioned solves.
        const U0: f64 = 1e-4;
        let b0 = kn * (1.0 - U0 * U0);
        let edge = phased(b0, &self.spectral_at(C64::new(b0, 0.0), pairs, m)?, kn * U0 * U0 / (2.0 * PI));
        let mut res = q.integrate(U0, 1.0, |us: &[f64]| -> Result<Vec<Vec<C64>>, SpectralError> {
            par_map(us, |u| {
                let beta = kn * (1.0 - u * u);
                let g = self.spectral_at(C64::new(beta, 0.0), pairs, m)?;
                Ok(phased(beta, &g, 2.0 * kn * u / (2.0 * PI)))
            })
        })?;
        for (r, e) in res.iter_mut().zip(&edge) {
            *r += e;
        }
        let guided = if self.fibers.supports_guiding() {
            let poles = self.poles()?.poles;
            self.guided_tensors(pairs, &poles, m)?
        } else {
            vec![ZERO3; pairs.len()]
        };
        Ok(pairs
            .iter()
            .zip(vac)
            .enumerate()
            .map(|(n, (p, v))| {
                let mut s = [[0.0; 3]; 3];
                let mut g = [[0.0; 3]; 3];
                for i in 0..3 {
                    for j in 0..3 {
                        g[i][j] = guided[n][i][j].im;
                        s[i][j] = res[9 * n + 3 * i + j].re + g[i][j];
                    }
                }
                PairImag {
                    pair: *p,
                    m_max: m,
                    scattered: s,
                    guided: g,
                    vacuum: v,
                }
            })
            .collect())
    }

    // ---- modes ----

    /// Guided modes with normalized profiles and group slopes.
    pub fn guided_modes(&self) -> Result<Vec<GuidedMode>, SpectralError> {
        let search = self.poles()?;
        let m = search.m_max;
        let mut out = Vec::new();
        for pole in &search.poles {
            let fields = self.null_fields(pole, m)?;
            let slope = self.dbeta_dk(pole, m)?;
            let gram = self.gram(&fields);
            // Gram–Schmidt in the weighted inner product
            let coeffs = orthonormalize(&gram);
            for (idx, c) in coeffs.into_iter().enumerate() {
                let mut mode = GuidedMode {
                    beta: pole.beta,
                    k: self.k,
                    label: String::new(),
                    dbeta_dk: slope,
                    domega_dbeta: 1.0 / slope,
                    fields: fields.clone(),
                    coeffs: c,
                    weight: self.opts.norm_weight,
                    partner: idx,
                };
                mode.label = self.classify(&mode, pole);
                out.push(mode);
            }
        }
        Ok(out)
    }

    fn null_fields(&self, pole: &Pole, m_max: usize) -> Result<Vec<ModeField>, SpectralError> {
        let beta = C64::new(pole.beta, 0.0);
        let sys = SpectralSystem::new(self.fibers, self.k, beta, m_max)?;
        let svd = sys.matrix().clone().svd(false, true);
        let vt = svd.v_t.expect("right singular vectors requested");
        let mut order: Vec<usize> = (0..svd.singular_values.len()).collect();
        order.sort_by(|&a, &b| svd.singular_values[a].total_cmp(&svd.singular_values[b]));
        let mut fields = Vec::new();
        for &i in order.iter().take(pole.multiplicity) {
            let b: Vec<C64> = vt.row(i).iter().map(|z| z.conj()).collect();
            fields.push(ModeField::new(&sys, &b)?);
        }
        Ok(fields)
    }

    fn dbeta_dk(&self, pole: &Pole, m_max: usize) -> Result<f64, SpectralError> {
        let h = 1e-5 * self.k;
        let mut b = [0.0; 2];
        for (s, out) in [1.0, -1.0].iter().zip(b.iter_mut()) {
            let k2 = self.k + s * h;
            let guess = pole.beta * k2 / self.k;
            let width = 4e-5 * pole.beta;
            *out = match pole.order {
                Some(m) => {
                    let det = |x: f64| self.det_sample(k2, x, 0, Block::Order(m));
                    let lo = guess - width;
                    let grid: Vec<f64> = (0..=16).map(|i| lo + 2.0 * width * i as f64 / 16.0).collect();
                    let mut w = Vec::new();
                    find_roots(&grid, &det, self.opts.pole_rel_tol, &mut w)?
                        .into_iter()
                        .map(|r| r.0)
                        .min_by(|a, c| (a - guess).abs().total_cmp(&(c - guess).abs()))
                        .ok_or(SpectralError::PoleRefinement(pole.beta / self.k))?
                }
                None => self.refine_pole(k2, guess, pole.multiplicity, m_max, width, pole.block())?,
            };
        }
        Ok((b[0] - b[1]) / (2.0 * h))
    }

    fn weight(&self, n: f64) -> f64 {
        match self.opts.norm_weight {
            NormWeight::Index => n,
            NormWeight::Permittivity => n * n,
        }
    }

    /// `∫ w E_i*·E_j d²ρ` over the plane: polar grids in each core and in
    /// each fiber's power-diagram cell outside it.
    fn gram(&self, fields: &[ModeField]) -> Vec<Vec<C64>> {
        let nf = fields.len();
        let mut g = vec![vec![C64::new(0.0, 0.0); nf]; nf];
        let Some(first) = fields.first() else { return g };
        let gamma = first.kappa_out.im.max(1e-6 * self.k);
        let (xr, wr) = crate::quad::gauss_legendre(16);
        let nphi = 256;
        let accumulate = |p: [f64; 2], w: f64, g: &mut Vec<Vec<C64>>| {
            let e: Vec<[C64; 3]> = fields.iter().map(|f| f.eval(p)).collect();
            for i in 0..nf {
                for j in 0..nf {
                    let dot: C64 = (0..3).map(|c| e[i][c].conj() * e[j][c]).sum();
                    g[i][j] += dot * w;
                }
            }
        };
        for (l, f) in self.fibers.fibers.iter().enumerate() {
            let a = f.radius_nm;
            let c = f.center_nm;
            let w_in = self.weight(f.index_core);
            let w_out = self.weight(self.fibers.index_ambient);
            let far = a + 36.0 / gamma;
            for ip in 0..nphi {
                let phi = 2.0 * PI * ip as f64 / nphi as f64;
                let u = [phi.cos(), phi.sin()];
                let dphi = 2.0 * PI / nphi as f64;
                // core: two radial panels
                for (r0, r1) in [(0.0, 0.5 * a), (0.5 * a, a)] {
                    for (x, w) in xr.iter().zip(&wr) {
                        let r = 0.5 * (r0 + r1) + 0.5 * (r1 - r0) * x;
                        let p = [c[0] + r * u[0], c[1] + r * u[1]];
                        accumulate(p, w_in * w * 0.5 * (r1 - r0) * r * dphi, &mut g);
                    }
                }
                // outside, up to the power-diagram boundary
                let mut rmax = far;
                for (lp, o) in self.fibers.fibers.iter().enumerate() {
                    if lp == l {
                        continue;
                    }
                    let dx = [o.center_nm[0] - c[0], o.center_nm[1] - c[1]];
                    let proj = u[0] * dx[0] + u[1] * dx[1];
                    if proj > 0.0 {
                        let d2 = dx[0] * dx[0] + dx[1] * dx[1];
                        rmax = rmax.min((d2 + a * a - o.radius_nm * o.radius_nm) / (2.0 * proj));
                    }
                }
                let mut r0 = a;
                let mut h = (0.1 * a).min(0.5 / gamma);
                while r0 < rmax {
                    let r1 = (r0 + h).min(rmax);
                    for (x, w) in xr.iter().zip(&wr) {
                        let r = 0.5 * (r0 + r1) + 0.5 * (r1 - r0) * x;
                        let p = [c[0] + r * u[0], c[1] + r * u[1]];
                        accumulate(p, w_out * w * 0.5 * (r1 - r0) * r * dphi, &mut g);
                    }
                    r0 = r1;
                    h *= 1.5;
                }
            }
        }
        g
    }

    fn classify(&self, mode: &GuidedMode, pole: &Pole) -> String {
        if let Some(m) = pole.order {
            if m == 0 {
                let f = &mode.fields[0];
                let (e, h) = f.axial_weight();
                return if e > h { "TM0-like".into() } else { "TE0-like".into() };
            }
            return format!("HE{m}-like");
        }
        let n = self.fibers.len() as f64;
        let mut c = [0.0, 0.0];
        for f in &self.fibers.fibers {
            c[0] += f.center_nm[0] / n;
            c[1] += f.center_nm[1] / n;
        }
        let probe = if self.fibers.check_outside(c, "probe").is_ok() {
            c
        } else {
            let f = &self.fibers.fibers[0];
            [f.center_nm[0], f.center_nm[1] + f.radius_nm * 1.05]
        };
        let e = mode.profile(probe);
        let mags: Vec<f64> = e.iter().map(|z| z.norm()).collect();
        let total: f64 = mags.iter().sum();
        if total < 1e-12 {
            return "HE/EH-like".into();
        }
        if mags[0] >= mags[1] && mags[0] >= mags[2] {
            "TE-like".into()
        } else if mags[1] >= mags[2] {
            "TM-like".into()
        } else {
            "HE/EH-like".into()
        }
    }
}

fn orthonormalize(gram: &[Vec<C64>]) -> Vec<Vec<C64>> {
    let n = gram.len();
    let mut basis: Vec<Vec<C64>> = Vec::new();
    let ip = |x: &[C64], y: &[C64]| -> C64 {
        let mut s = C64::new(0.0, 0.0);
        for i in 0..n {
            for j in 0..n {
                s += x[i].conj() * gram[i][j] * y[j];
            }
        }
        s
    };
    for i in 0..n {
        let mut v = vec![C64::new(0.0, 0.0); n];
        v[i] = C64::new(1.0, 0.0);
        for b in &basis {
            let c = ip(b, &v);
            for (vi, bi) in v.iter_mut().zip(b) {
                *vi -= c * bi;
            }
        }
        let norm = ip(&v, &v).re.sqrt();
        for vi in &mut v {
            *vi /= norm;
        }
        basis.push(v);
    }
    basis
}

/// Sample points for the pole scan: uniform plus geometric clustering at
/// the light line, where weakly guided modes sit.
fn scan_grid(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    let span = hi - lo;
    let mut pts: Vec<f64> = (1..n).map(|i| lo + span * i as f64 / n as f64).collect();
    for e in 2..=12 {
        pts.push(lo + span * 10f64.powi(-e) * 3.0);
        pts.push(lo + span * 10f64.powi(-e));
    }
    pts.push(hi - span * 1e-9);
    pts.sort_by(f64::total_cmp);
    pts.dedup();
    pts
}

/// Zeros of a determinant that is real up to a constant phase, from sign
/// changes (simple roots) and deep minima of `|det|` (double roots).
fn find_roots<F>(grid: &[f64], det: &F, tol: f64, warnings: &mut Vec<String>) -> Result<Vec<(f64, usize)>, SpectralError>
where
    F: Fn(f64) -> Result<(f64, f64), SpectralError> + Sync,
{
    let vals = par_map(grid, |b| det(b))?;
    let (ref_idx, _) = vals
        .iter()
        .enumerate()
        .filter(|(_, v)| v.0.is_finite())
        .max_by(|a, b| a.1 .0.total_cmp(&b.1 .0))
        .ok_or(SpectralError::PoleRefinement(grid[0]))?;
    let theta = vals[ref_idx].1;
    let mut non_real: f64 = 0.0;
    let sgn: Vec<f64> = vals
        .iter()
        .map(|v| {
            let c = (v.1 - theta).cos();
            non_real = non_real.max((v.1 - theta).sin().abs());
            if c >= 0.0 {
                1.0
            } else {
                -1.0
            }
        })
        .collect();
    if non_real > 1e-4 {
        warnings.push(format!("determinant departs from a constant phase by {non_real:e}"));
    }
    let signed = |b: f64, lref: f64| -> Result<f64, SpectralError> {
        let (ln, arg) = det(b)?;
        let s = if (arg - theta).cos() >= 0.0 { 1.0 } else { -1.0 };
        Ok(s * (ln - lref).clamp(-700.0, 700.0).exp())
    };
    let mut roots = Vec::new();
    for i in 0..grid.len() - 1 {
        if sgn[i] != sgn[i + 1] {
            let lref = vals[i].0.max(vals[i + 1].0);
            roots.push((illinois(grid[i], grid[i + 1], |b| signed(b, lref), tol)?, 1));
        }
    }
    for i in 1..grid.len() - 1 {
        let (l0, l1, l2) = (vals[i - 1].0, vals[i].0, vals[i + 1].0);
        if !(l1 < l0 && l1 < l2) || sgn[i - 1] != sgn[i] || sgn[i] != sgn[i + 1] {
            continue;
        }
        // golden-section on ln|det|, watching for a hidden sign change
        let (mut a, mut b) = (grid[i - 1], grid[i + 1]);
        let g = 0.5 * (5f64.sqrt() - 1.0);
        let mut x1 = b - g * (b - a);
        let mut x2 = a + g * (b - a);
        let mut f1 = det(x1)?;
        let mut f2 = det(x2)?;
        let s0 = sgn[i];
        let mut split = None;
        for _ in 0..80 {
            for (x, f) in [(x1, f1), (x2, f2)] {
                let s = if (f.1 - theta).cos() >= 0.0 { 1.0 } else { -1.0 };
                if s != s0 {
                    split = Some(x);
                }
            }
            if split.is_some() || (b - a) < 1e-12 * b {
                break;
            }
            if f1.0 < f2.0 {
                b = x2;
                x2 = x1;
                f2 = f1;
                x1 = b - g * (b - a);
                f1 = det(x1)?;
            } else {
                a = x1;
                x1 = x2;
                f1 = f2;
                x2 = a + g * (b - a);
                f2 = det(x2)?;
            }
        }
        if let Some(x) = split {
            let lref = vals[i].0;
            roots.push((illinois(grid[i - 1], x, |b| signed(b, lref), tol)?, 1));
            roots.push((illinois(x, grid[i + 1], |b| signed(b, lref), tol)?, 1));
            continue;
        }
        let xm = 0.5 * (a + b);
        let depth = l0.min(l2) - det(xm)?.0;
        if depth > 12.0 {
            roots.push((xm, 2));
        }
    }
    roots.sort_by(|a, b| a.0.total_cmp(&b.0));
    Ok(roots)
}

/// Illinois regula falsi on a sign-changing bracket.
fn illinois<F>(mut a: f64, mut b: f64, f: F, tol: f64) -> Result<f64, SpectralError>
where
    F: Fn(f64) -> Result<f64, SpectralError>,
{
    let (mut fa, mut fb) = (f(a)?, f(b)?);
    let mut side = 0;
    for _ in 0..200 {
        let c = if fa.is_finite() && fb.is_finite() && fa != fb {
            let c = (a * fb - b * fa) / (fb - fa);
            if c > a.min(b) && c < a.max(b) {
                c
            } else {
                0.5 * (a + b)
            }
        } else {
            0.5 * (a + b)
        };
        if (b - a).abs() < tol * c.abs() {
            return Ok(c);
        }
        let fc = f(c)?;
        if fc == 0.0 {
            return Ok(c);
        }
        if (fc > 0.0) == (fb > 0.0) {
            b = c;
            fb = fc;
            if side == -1 {
                fa *= 0.5;
            }
            side = -1;
        } else {
            a = c;
            fa = fc;
            if side == 1 {
                fb *= 0.5;
            }
            side = 1;
        }
        if (b - a).abs() < tol * c.abs() {
            return Ok(0.5 * (a + b));
        }
    }
    Ok(0.5 * (a + b))
}

/// Field of one solution of the homogeneous system, inside and outside the
/// fibers.
#[derive(Debug, Clone)]
pub struct ModeField {
    fibers: FiberArray,
    k: f64,
    beta: f64,
    m_max: usize,
    kappa_out: C64,
    b: Vec<C64>,
    norm_h: Vec<Vec<Ext>>,
    /// per fiber, per `m + M`: axial `(E, H)` values on the surface
    surface: Vec<Vec<[Ext; 2]>>,
    kappa_in: Vec<C64>,
    jin_a: Vec<CylSeq>,
}

impl ModeField {
    fn new(sys: &SpectralSystem, b: &[C64]) -> Result<Self, SpectralError> {
        let fibers = sys.fibers().clone();
        let k = sys.k;
        let beta = sys.beta;
        let m_max = sys.m_max;
        let a = sys.regular_from(b);
        let mi = m_max as i32;
        let mut surface = Vec::new();
        let mut kappa_in = Vec::new();
        let mut jin_a = Vec::new();
        let mut norm_h = Vec::new();
        for (l, f) in fibers.fibers.iter().enumerate() {
            let bd = sys.boundary(l);
            let outer = CylSeq::full(m_max + 1, sys.kappa * f.radius_nm).map_err(MultiScatterError::from)?;
            let mut s = Vec::with_capacity(2 * m_max + 1);
            for m in -mi..=mi {
                let am = m.unsigned_abs() as usize;
                let mut pair = [Ext::ZERO; 2];
                for (v, kind) in [FieldKind::E, FieldKind::H].into_iter().enumerate() {
                    let idx = slot(m_max, l, m, kind);
                    pair[v] = (outer.j(m) / bd.norm_j[am]).mul_c(a[idx]) + (outer.h(m) / bd.norm_h[am]).mul_c(b[idx]);
                }
                s.push(pair);
            }
            surface.push(s);
            let km = kappa_core(k, f.index_core, beta);
            kappa_in.push(km);
            jin_a.push(CylSeq::bessel(m_max + 2, km * f.radius_nm));
            norm_h.push(bd.norm_h.clone());
        }
        Ok(ModeField {
            fibers,
            k,
            beta: beta.re,
            m_max,
            kappa_out: sys.kappa,
            b: b.to_vec(),
            norm_h,
            surface,
            kappa_in,
            jin_a,
        })
    }

    /// Relative weight of the axial `E` and `H` content on the surfaces.
    fn axial_weight(&self) -> (f64, f64) {
        let mut e = 0.0;
        let mut h = 0.0;
        for s in &self.surface {
            for p in s {
                e += p[0].to_c64().norm_sqr();
                h += p[1].to_c64().norm_sqr();
            }
        }
        (e, h)
    }

    /// Unnormalized `E` at a transverse point.
    pub fn eval(&self, p: [f64; 2]) -> [C64; 3] {
        let beta = C64::new(self.beta, 0.0);
        let mi = self.m_max as i32;
        for (l, f) in self.fibers.fibers.iter().enumerate() {
            let (dx, dy) = (p[0] - f.center_nm[0], p[1] - f.center_nm[1]);
            let r = dx.hypot(dy);
            if r < f.radius_nm {
                let phi = dy.atan2(dx);
                let km = self.kappa_in[l];
                let inner = CylSeq::bessel(self.m_max + 2, km * r);
                let mut acc = [C64::new(0.0, 0.0); 6];
                for m in -mi..=mi {
                    let den = self.jin_a[l].j(m);
                    let wave = |mm: i32| (inner.j(mm) / den).to_c64() * C64::from_polar(1.0, mm as f64 * phi);
                    let (wm, w0, wp) = (wave(m - 1), wave(m), wave(m + 1));
                    let s = &self.surface[l][(m + mi) as usize];
                    let ge = cyl_gradient(km, s[0].to_c64(), wm, w0, wp);
                    let gh = cyl_gradient(km, s[1].to_c64(), wm, w0, wp);
                    for c in 0..3 {
                        acc[c] += ge[c];
                        acc[3 + c] += gh[c];
                    }
                }
                let [ex, ey] = transverse_e(beta, self.k, km, acc[1], acc[2], acc[4], acc[5]);
                return [ex, ey, acc[0]];
            }
        }
        let kp = self.kappa_out;
        let mut acc = [C64::new(0.0, 0.0); 6];
        for (l, f) in self.fibers.fibers.iter().enumerate() {
            let (dx, dy) = (p[0] - f.center_nm[0], p[1] - f.center_nm[1]);
            let (r, phi) = (dx.hypot(dy), dy.atan2(dx));
            let Ok(seq) = CylSeq::hankel(self.m_max + 2, kp * r) else { continue };
            for m in -mi..=mi {
                let nh = self.norm_h[l][m.unsigned_abs() as usize];
                let wave = |mm: i32| (seq.h(mm) / nh).to_c64() * C64::from_polar(1.0, mm as f64 * phi);
                let (wm, w0, wp) = (wave(m - 1), wave(m), wave(m + 1));
                let ge = cyl_gradient(kp, self.b[slot(self.m_max, l, m, FieldKind::E)], wm, w0, wp);
                let gh = cyl_gradient(kp, self.b[slot(self.m_max, l, m, FieldKind::H)], wm, w0, wp);
                for c in 0..3 {
                    acc[c] += ge[c];
                    acc[3 + c] += gh[c];
                }
            }
        }
        let [ex, ey] = transverse_e(beta, self.k, kp, acc[1], acc[2], acc[4], acc[5]);
        [ex, ey, acc[0]]
    }
}

/// A guided mode: propagation constant, normalized transverse profile
/// `𝓔_μ(ρ)` (forward, `e^{iβz}`) and group slope.
#[derive(Debug, Clone)]
pub struct GuidedMode {
    pub beta: f64,
    pub k: f64,
    pub label: String,
    pub dbeta_dk: f64,
    /// group velocity in units of c
    pub domega_dbeta: f64,
    fields: Vec<ModeField>,
    coeffs: Vec<C64>,
    pub weight: NormWeight,
    /// index within a degenerate set
    pub partner: usize,
}

impl GuidedMode {
    pub fn profile(&self, p: [f64; 2]) -> [C64; 3] {
        let mut e = [C64::new(0.0, 0.0); 3];
        for (f, c) in self.fields.iter().zip(&self.coeffs) {
            let v = f.eval(p);
            for i in 0..3 {
                e[i] += c * v[i];
            }
        }
        e
    }

    pub fn effective_index(&self) -> f64 {
        self.beta / self.k
    }
}

/// Long-range form: `(i/2k) Σ_μ (dβ_μ/dk) 𝓔_μ(ρ)⊗𝓔_μ*(ρ′) e^{iβ_μΔz}` for
/// `Δz > 0` and `𝓔_μ*(ρ)⊗𝓔_μ(ρ′) e^{−iβ_μΔz}` for `Δz < 0`.
pub fn asymptotic_tensor(modes: &[GuidedMode], rho: [f64; 2], rho_src: [f64; 2], dz: f64) -> Tensor3 {
    let mut t = ZERO3;
    for m in modes {
        let e1 = m.profile(rho);
        let e2 = m.profile(rho_src);
        let pref = I / (2.0 * m.k) * m.dbeta_dk;
        for i in 0..3 {
            for j in 0..3 {
                let v = if dz >= 0.0 {
                    e1[i] * e2[j].conj() * (I * m.beta * dz).exp()
                } else {
                    e1[i].conj() * e2[j] * (-I * m.beta * dz).exp()
                };
                t[i][j] += pref * v;
            }
        }
    }
    t
}

/// Convenience wrapper around [`Solver::invert`] for a single pair.
pub fn invert_total(
    rho: [f64; 2],
    rho_src: [f64; 2],
    dz: f64,
    k: f64,
    fibers: &FiberArray,
    settings: &SolverSettings,
) -> Result<GreenTensor, SpectralError> {
    let s = Solver::new(fibers, k, SpectralOptions::from(settings));
    Ok(s.invert(&[PointPair::new(rho, rho_src, dz)])?.remove(0))
}

/// Guided modes of a geometry with default options.
pub fn find_guided_modes(k: f64, fibers: &FiberArray, settings: &SolverSettings) -> Result<Vec<GuidedMode>, SpectralError> {
    Solver::new(fibers, k, SpectralOptions::from(settings)).guided_modes()
}

#[doc(hidden)]
pub fn swapped(p: &PointPair) -> PointPair {
    p.swapped()
}
