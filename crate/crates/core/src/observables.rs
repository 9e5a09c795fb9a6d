//! Figures of merit from Green's tensors: decay rates, coupling efficiency,
//! Purcell factor, Lamb shift and the collective coupling matrix. All values
//! are ratios to the free-space rate Γ₀ of the ambient medium.

use crate::config::{ConfigError, Dipole, EmitterSpec, FiberArray, SolverSettings};
use crate::cylscatter::C64;
use crate::multiscatter::Tensor3;
use crate::spectral::{asymptotic_tensor, max_norm, sub, PointPair, Solver, SpectralError, SpectralOptions};
use nalgebra::DMatrix;
use std::f64::consts::PI;

#[derive(Debug, thiserror::Error)]
pub enum ObservablesError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Spectral(#[from] SpectralError),
    #[error("emitters {0} and {1} coincide")]
    CoincidentEmitters(usize, usize),
    #[error("emitters must share one transition wavelength")]
    WavelengthMismatch,
    #[error("need at least {0} emitters")]
    TooFewEmitters(usize),
    #[error("eigen-decomposition of the coupling matrix failed")]
    Eigen,
}

/// Single-emitter figures of merit.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize)]
pub struct EmitterRates {
    /// Γ/Γ₀
    pub gamma_total_ratio: f64,
    /// Γ₁D/Γ₀
    pub gamma_guided_ratio: f64,
    pub eta: f64,
    /// F_p ≡ Γ/Γ₀
    pub purcell: f64,
    /// Δω/γ₀ with γ₀ = Γ₀/2; absent when only the decay path was run
    pub lamb_shift_ratio: Option<f64>,
}

/// `d·X·d'*`.
fn dxd(d: &[C64; 3], x: &Tensor3, dp: &[C64; 3]) -> C64 {
    let mut s = C64::new(0.0, 0.0);
    for i in 0..3 {
        for j in 0..3 {
            s += d[i] * x[i][j] * dp[j].conj();
        }
    }
    s
}

fn re_part(g: &Tensor3) -> Tensor3 {
    g.map(|r| r.map(|z| C64::new(z.re, 0.0)))
}

fn im_part(g: &Tensor3) -> Tensor3 {
    g.map(|r| r.map(|z| C64::new(z.im, 0.0)))
}

fn real_tensor(g: &[[f64; 3]; 3]) -> Tensor3 {
    g.map(|r| r.map(|x| C64::new(x, 0.0)))
}

fn rates_from(gamma: f64, guided: f64, lamb: Option<f64>) -> EmitterRates {
    EmitterRates {
        gamma_total_ratio: gamma,
        gamma_guided_ratio: guided,
        eta: if gamma > 0.0 { guided / gamma } else { 0.0 },
        purcell: gamma,
        lamb_shift_ratio: lamb,
    }
}

/// Rates of one dipole at many transverse points. With `lamb` the full
/// contour is inverted for the real part; otherwise only the imaginary parts
/// are computed along the fast decay path.
pub fn rates_at(
    points: &[[f64; 2]],
    dipole: &Dipole,
    k: f64,
    fibers: &FiberArray,
    settings: &SolverSettings,
    lamb: bool,
) -> Result<Vec<EmitterRates>, ObservablesError> {
    for (i, p) in points.iter().enumerate() {
        fibers.check_outside(*p, &format!("points[{i}]"))?;
    }
    let d = dipole.components();
    let solver = Solver::new(fibers, k, SpectralOptions::from(settings));
    let g0 = k * fibers.index_ambient / (6.0 * PI);
    if lamb {
        let pairs: Vec<PointPair> = points.iter().map(|&p| PointPair::coincident(p)).collect();
        let g = solver.invert(&pairs)?;
        Ok(g.iter()
            .map(|t| {
                let gamma = dxd(&d, &im_part(&t.total), &d).re / g0;
                let guided = dxd(&d, &im_part(&t.guided), &d).re / g0;
                let shift = dxd(&d, &re_part(&t.scattered), &d).re / g0;
                rates_from(gamma, guided, Some(shift))
            })
            .collect())
    } else {
        let c = solver.coincident_imag(points)?;
        Ok(c.iter()
            .map(|ci| {
                let mut s = ci.scattered;
                for (i, row) in s.iter_mut().enumerate() {
                    row[i] += ci.vacuum;
                }
                let gamma = dxd(&d, &real_tensor(&s), &d).re / g0;
                let guided = dxd(&d, &real_tensor(&ci.guided), &d).re / g0;
                rates_from(gamma, guided, None)
            })
            .collect())
    }
}

/// Γ, Γ₁D, η, F_p and Δω of one emitter.
pub fn emitter_rates(emitter: &EmitterSpec, fibers: &FiberArray, settings: &SolverSettings) -> Result<EmitterRates, ObservablesError> {
    emitter.validate(fibers, "emitter")?;
    Ok(rates_at(&[emitter.rho_a_nm], &emitter.dipole, emitter.k(), fibers, settings, true)?[0])
}

/// `Ω_mn/Γ₀`, `Γ_mn/Γ₀` and the eigen-resonances `λ_j = Δω_j + iγ_j` of
/// `Ω + iΓ/2` (in units of Γ₀), sorted by linewidth, narrowest first.
#[derive(Debug, Clone, PartialEq, serde::Serialize)]
pub struct CouplingMatrix {
    pub omega: Vec<Vec<f64>>,
    pub gamma: Vec<Vec<f64>>,
    pub eigenvalues: Vec<C64>,
    /// unit eigenvectors, one per eigenvalue
    pub eigenvectors: Vec<Vec<C64>>,
}

impl CouplingMatrix {
    fn from_parts(omega: Vec<Vec<f64>>, gamma: Vec<Vec<f64>>) -> Result<Self, ObservablesError> {
        let n = omega.len();
        let a = DMatrix::from_fn(n, n, |i, j| C64::new(omega[i][j], 0.5 * gamma[i][j]));
        let mut eig: Vec<C64> = a
            .clone()
            .schur()
            .eigenvalues()
            .ok_or(ObservablesError::Eigen)?
            .iter()
            .copied()
            .collect();
        eig.sort_by(|x, y| x.im.total_cmp(&y.im).then(x.re.total_cmp(&y.re)));
        let eigenvectors = eig
            .iter()
            .map(|&l| {
                let shifted = &a - DMatrix::<C64>::identity(n, n) * l;
                let svd = shifted.svd(false, true);
                let vt = svd.v_t.ok_or(ObservablesError::Eigen)?;
                let (imin, _) = svd
                    .singular_values
                    .iter()
                    .enumerate()
                    .min_by(|x, y| x.1.total_cmp(y.1))
                    .ok_or(ObservablesError::Eigen)?;
                Ok(vt.row(imin).iter().map(|z| z.conj()).collect())
            })
            .collect::<Result<Vec<Vec<C64>>, ObservablesError>>()?;
        Ok(CouplingMatrix {
            omega,
            gamma,
            eigenvalues: eig,
            eigenvectors,
        })
    }

    /// `γ_j/γ₀` and `Δω_j/γ₀` for each resonance.
    pub fn resonances_over_gamma0(&self) -> Vec<(f64, f64)> {
        self.eigenvalues.iter().map(|l| (2.0 * l.im, 2.0 * l.re)).collect()
    }
}

fn common_k(emitters: &[EmitterSpec]) -> Result<f64, ObservablesError> {
    let k = emitters[0].k();
    if emitters.iter().any(|e| e.wavelength_nm != emitters[0].wavelength_nm) {
        return Err(ObservablesError::WavelengthMismatch);
    }
    Ok(k)
}

/// Coupling matrix of several emitters from exact real-space tensors.
pub fn coupling_matrix(emitters: &[EmitterSpec], fibers: &FiberArray, settings: &SolverSettings) -> Result<CouplingMatrix, ObservablesError> {
    if emitters.len() < 2 {
        return Err(ObservablesError::TooFewEmitters(2));
    }
    for (i, e) in emitters.iter().enumerate() {
        e.validate(fibers, &format!("emitters[{i}]"))?;
    }
    for i in 0..emitters.len() {
        for j in i + 1..emitters.len() {
            let (a, b) = (&emitters[i], &emitters[j]);
            if a.rho_a_nm == b.rho_a_nm && a.z_nm == b.z_nm {
                return Err(ObservablesError::CoincidentEmitters(i, j));
            }
        }
    }
    let k = common_k(emitters)?;
    let n = emitters.len();
    // upper triangle including the diagonal; G_nm = G_mnᵀ by reciprocity
    let mut pairs = Vec::new();
    let mut index = Vec::new();
    for i in 0..n {
        for j in i..n {
            let (a, b) = (&emitters[i], &emitters[j]);
            pairs.push(PointPair::new(a.rho_a_nm, b.rho_a_nm, a.z_nm - b.z_nm));
            index.push((i, j));
        }
    }
    let solver = Solver::new(fibers, k, SpectralOptions::from(settings));
    let g = solver.invert(&pairs)?;
    let g0 = k * fibers.index_ambient / (6.0 * PI);
    let mut omega = vec![vec![0.0; n]; n];
    let mut gamma = vec![vec![0.0; n]; n];
    for (t, &(i, j)) in g.iter().zip(&index) {
        let (di, dj) = (emitters[i].dipole.components(), emitters[j].dipole.components());
        // the divergent vacuum real part is absorbed in the bare frequency
        let re = if i == j { re_part(&t.scattered) } else { re_part(&t.total) };
        let o = dxd(&di, &re, &dj).re / (2.0 * g0);
        let gm = dxd(&di, &im_part(&t.total), &dj).re / g0;
        omega[i][j] = o;
        omega[j][i] = o;
        gamma[i][j] = gm;
        gamma[j][i] = gm;
    }
    CouplingMatrix::from_parts(omega, gamma)
}

/// Collective resonances of two copies of one emitter displaced by each
/// `dz` along the axis; one matrix per `dz`.
pub fn pair_resonances_vs_dz(
    emitter: &EmitterSpec,
    dzs: &[f64],
    fibers: &FiberArray,
    settings: &SolverSettings,
) -> Result<Vec<CouplingMatrix>, ObservablesError> {
    emitter.validate(fibers, "emitter")?;
    if let Some(i) = dzs.iter().position(|&dz| dz == 0.0) {
        return Err(ObservablesError::CoincidentEmitters(i, i));
    }
    let p = emitter.rho_a_nm;
    let mut pairs = vec![PointPair::coincident(p)];
    pairs.extend(dzs.iter().map(|&dz| PointPair::new(p, p, -dz)));
    let k = emitter.k();
    let g = Solver::new(fibers, k, SpectralOptions::from(settings)).invert(&pairs)?;
    let g0 = k * fibers.index_ambient / (6.0 * PI);
    let d = emitter.dipole.components();
    let self_omega = dxd(&d, &re_part(&g[0].scattered), &d).re / (2.0 * g0);
    let self_gamma = dxd(&d, &im_part(&g[0].total), &d).re / g0;
    g[1..]
        .iter()
        .map(|t| {
            let o = dxd(&d, &re_part(&t.total), &d).re / (2.0 * g0);
            let gm = dxd(&d, &im_part(&t.total), &d).re / g0;
            CouplingMatrix::from_parts(vec![vec![self_omega, o], vec![o, self_omega]], vec![vec![self_gamma, gm], vec![gm, self_gamma]])
        })
        .collect()
}

/// Same pair resonances with the off-diagonal elements from the guided-mode
/// long-range form; self terms stay exact.
pub fn pair_resonances_asymptotic(
    emitter: &EmitterSpec,
    dzs: &[f64],
    fibers: &FiberArray,
    settings: &SolverSettings,
) -> Result<Vec<CouplingMatrix>, ObservablesError> {
    emitter.validate(fibers, "emitter")?;
    if let Some(i) = dzs.iter().position(|&dz| dz == 0.0) {
        return Err(ObservablesError::CoincidentEmitters(i, i));
    }
    let p = emitter.rho_a_nm;
    let k = emitter.k();
    let solver = Solver::new(fibers, k, SpectralOptions::from(settings));
    let g = solver.invert(&[PointPair::coincident(p)])?;
    let modes = solver.guided_modes()?;
    let g0 = k * fibers.index_ambient / (6.0 * PI);
    let d = emitter.dipole.components();
    let self_omega = dxd(&d, &re_part(&g[0].scattered), &d).re / (2.0 * g0);
    let self_gamma = dxd(&d, &im_part(&g[0].total), &d).re / g0;
    dzs.iter()
        .map(|&dz| {
            let t = asymptotic_tensor(&modes, p, p, -dz);
            let o = dxd(&d, &re_part(&t), &d).re / (2.0 * g0);
            let gm = dxd(&d, &im_part(&t), &d).re / g0;
            CouplingMatrix::from_parts(vec![vec![self_omega, o], vec![o, self_omega]], vec![vec![self_gamma, gm], vec![gm, self_gamma]])
        })
        .collect()
}

/// One row of the exact-vs-asymptotic comparison.
#[derive(Debug, Clone, PartialEq)]
pub struct AsymptoticRow {
    pub dz: f64,
    pub exact: Tensor3,
    pub asymptotic: Tensor3,
    /// `max|G − G_asym| / max|G|`
    pub deviation: f64,
    /// `(exact, asymptotic)` of `Ω₁₂/Γ₀` and `Γ₁₂/Γ₀` for the given dipoles
    pub omega12: (f64, f64),
    pub gamma12: (f64, f64),
}

/// Exact tensors vs. the guided-mode asymptotic form over a `dz` grid.
#[allow(clippy::too_many_arguments)]
pub fn compare_exact_asymptotic(
    fibers: &FiberArray,
    k: f64,
    rho: [f64; 2],
    rho_src: [f64; 2],
    dipoles: (&Dipole, &Dipole),
    dzs: &[f64],
    settings: &SolverSettings,
) -> Result<Vec<AsymptoticRow>, ObservablesError> {
    fibers.check_outside(rho, "rho")?;
    fibers.check_outside(rho_src, "rho_src")?;
    let solver = Solver::new(fibers, k, SpectralOptions::from(settings));
    let pairs: Vec<PointPair> = dzs.iter().map(|&dz| PointPair::new(rho, rho_src, dz)).collect();
    let g = solver.invert(&pairs)?;
    let modes = solver.guided_modes()?;
    let g0 = k * fibers.index_ambient / (6.0 * PI);
    let (d1, d2) = (dipoles.0.components(), dipoles.1.components());
    Ok(g.iter()
        .zip(dzs)
        .map(|(t, &dz)| {
            let asym = asymptotic_tensor(&modes, rho, rho_src, dz);
            let scale = max_norm(&t.total);
            AsymptoticRow {
                dz,
                exact: t.total,
                asymptotic: asym,
                deviation: max_norm(&sub(&t.total, &asym)) / scale,
                omega12: (
                    dxd(&d1, &re_part(&t.total), &d2).re / (2.0 * g0),
                    dxd(&d1, &re_part(&asym), &d2).re / (2.0 * g0),
                ),
                gamma12: (dxd(&d1, &im_part(&t.total), &d2).re / g0, dxd(&d1, &im_part(&asym), &d2).re / g0),
            }
        })
        .collect())
}

/// Dominant wavenumber of samples `y(x)`: least-squares fit of
/// `A cos qx + B sin qx + C` over `q ∈ [lo, hi]`, scanned then refined.
/// The band must exclude sampling aliases.
pub fn oscillation_wavenumber(x: &[f64], y: &[f64], lo: f64, hi: f64) -> Option<f64> {
    if x.len() != y.len() || x.len() < 4 || !(lo > 0.0 && hi > lo) {
        return None;
    }
    let residual = |q: f64| {
        let a = DMatrix::from_fn(x.len(), 3, |i, j| match j {
            0 => (q * x[i]).cos(),
            1 => (q * x[i]).sin(),
            _ => 1.0,
        });
        let b = nalgebra::DVector::from_column_slice(y);
        match a.clone().svd(true, true).solve(&b, 1e-12) {
            Ok(c) => (a * c - b).norm_squared(),
            Err(_) => f64::INFINITY,
        }
    };
    // scan finer than the spectral resolution 2π/span
    let span = x.iter().cloned().fold(f64::MIN, f64::max) - x.iter().cloned().fold(f64::MAX, f64::min);
    let n = (((hi - lo) * span / (2.0 * PI)) * 20.0).ceil().max(50.0) as usize;
    let step = (hi - lo) / n as f64;
    let (mut best, mut best_r) = (lo, f64::INFINITY);
    for i in 0..=n {
        let q = lo + step * i as f64;
        let r = residual(q);
        if r < best_r {
            (best, best_r) = (q, r);
        }
    }
    // golden-section on the bracketing cell
    let (mut a, mut b) = ((best - step).max(lo), (best + step).min(hi));
    let g = (5f64.sqrt() - 1.0) / 2.0;
    let (mut c, mut d) = (b - g * (b - a), a + g * (b - a));
    let (mut fc, mut fd) = (residual(c), residual(d));
    while b - a > 1e-12 * best.abs() {
        if fc < fd {
            (b, d, fd) = (d, c, fc);
            c = b - g * (b - a);
            fc = residual(c);
        } else {
            (a, c, fc) = (c, d, fd);
            d = a + g * (b - a);
            fd = residual(d);
        }
    }
    Some((a + b) / 2.0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::{canonical_two_fiber, Fiber};
    use proptest::prelude::*;

    fn settings() -> SolverSettings {
        SolverSettings::default()
    }

    #[test]
    fn vacuum_rates_are_trivial() {
        let e = EmitterSpec::new([10.0, -20.0], 0.0, Dipole::X);
        let r = emitter_rates(&e, &FiberArray::vacuum(), &settings()).unwrap();
        assert!((r.gamma_total_ratio - 1.0).abs() < 1e-12);
        assert_eq!(r.eta, 0.0);
        assert_eq!(r.lamb_shift_ratio, Some(0.0));
    }

    #[test]
    fn fast_and_full_paths_agree() {
        let f = canonical_two_fiber(150.0, 200.0).unwrap();
        let p = [[0.0, 0.0], [0.0, 150.0]];
        let full = rates_at(&p, &Dipole::X, 2.0 * PI / 780.0, &f, &settings(), true).unwrap();
        let fast = rates_at(&p, &Dipole::X, 2.0 * PI / 780.0, &f, &settings(), false).unwrap();
        for (a, b) in full.iter().zip(&fast) {
            assert!((a.gamma_total_ratio - b.gamma_total_ratio).abs() < 1e-6 * a.gamma_total_ratio);
            assert!((a.eta - b.eta).abs() < 1e-6, "{} vs {}", a.eta, b.eta);
            assert!(a.eta > 0.0 && a.eta < 1.0 && a.gamma_guided_ratio <= a.gamma_total_ratio);
        }
    }

    #[test]
    fn coupling_matrix_structure() {
        let f = canonical_two_fiber(150.0, 200.0).unwrap();
        let a = EmitterSpec::new([0.0, 0.0], 0.0, Dipole::X);
        let b = EmitterSpec::new([0.0, 0.0], 5.0 * 780.0 / 1.08, Dipole::X);
        let c = coupling_matrix(&[a, b], &f, &settings()).unwrap();
        let single = emitter_rates(&a, &f, &settings()).unwrap();
        assert!((c.gamma[0][0] - single.gamma_total_ratio).abs() < 1e-8);
        // different dz sets deform the contour differently; agreement is at the
        // quadrature tolerance relative to the full tensor
        assert!((c.omega[0][0] - 0.5 * single.lamb_shift_ratio.unwrap()).abs() < 1e-5 * c.gamma[0][0]);
        let tr: C64 = c.eigenvalues.iter().sum();
        assert!((tr.re - (c.omega[0][0] + c.omega[1][1])).abs() < 1e-10);
        assert!((tr.im - 0.5 * (c.gamma[0][0] + c.gamma[1][1])).abs() < 1e-10);
        assert!(c.eigenvalues[0].im <= c.eigenvalues[1].im);
        // identical emitters: (1, ±1)/√2 eigenvectors
        for v in &c.eigenvectors {
            let s = (v[0] + v[1]).norm() / 2f64.sqrt();
            let d = (v[0] - v[1]).norm() / 2f64.sqrt();
            assert!(s.max(d) > 0.999);
        }
        assert!(matches!(coupling_matrix(&[a, a], &f, &settings()), Err(ObservablesError::CoincidentEmitters(0, 1))));
    }

    #[test]
    fn close_emitters_share_their_decay() {
        let f = canonical_two_fiber(150.0, 200.0).unwrap();
        let a = EmitterSpec::new([0.0, 0.0], 0.0, Dipole::X);
        let b = EmitterSpec::new([0.0, 0.0], 1.0, Dipole::X);
        let c = coupling_matrix(&[a, b], &f, &settings()).unwrap();
        assert!((c.gamma[0][1] / c.gamma[0][0] - 1.0).abs() < 1e-3);
    }

    #[test]
    fn asymptotic_table_is_symmetric_under_swap() {
        let f = FiberArray {
            fibers: vec![Fiber {
                radius_nm: 200.0,
                center_nm: [0.0, 0.0],
                index_core: 1.4537,
            }],
            index_ambient: 1.0,
        };
        let k = 2.0 * PI / 780.0;
        let (r1, r2) = ([250.0, 0.0], [-40.0, 230.0]);
        let dz = [780.0, 4.0 * 780.0];
        let fwd = compare_exact_asymptotic(&f, k, r1, r2, (&Dipole::X, &Dipole::Y), &dz, &settings()).unwrap();
        let rev = compare_exact_asymptotic(&f, k, r2, r1, (&Dipole::Y, &Dipole::X), &[-dz[0], -dz[1]], &settings()).unwrap();
        for (a, b) in fwd.iter().zip(&rev) {
            assert!((a.gamma12.0 - b.gamma12.0).abs() < 1e-7 * a.gamma12.0.abs().max(1e-3));
            assert!((a.omega12.0 - b.omega12.0).abs() < 1e-7 * a.omega12.0.abs().max(1e-3));
        }
        // at a wavelength the radiation continuum is far from negligible
        assert!(fwd[0].deviation > 0.01);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(6))]
        #[test]
        fn decay_matrix_is_positive(ys in proptest::collection::vec(-300.0f64..300.0, 3), zs in proptest::collection::vec(0.0f64..2000.0, 3)) {
            let f = canonical_two_fiber(150.0, 200.0).unwrap();
            let em: Vec<EmitterSpec> = ys.iter().zip(&zs).enumerate()
                .map(|(i, (&y, &z))| EmitterSpec::new([0.0, y], z + 10.0 * i as f64, Dipole::normalized([C64::new(1.0, 0.0), C64::new(0.3, 0.2), C64::new(0.0, -0.4)]).unwrap()))
                .collect();
            let c = coupling_matrix(&em, &f, &settings()).unwrap();
            let n = em.len();
            let g = DMatrix::from_fn(n, n, |i, j| c.gamma[i][j]);
            let ev = g.symmetric_eigen().eigenvalues;
            prop_assert!(ev.iter().all(|&e| e > -1e-8 * c.gamma[0][0]), "{ev:?}");
        }
    }

    #[test]
    fn oscillation_fit_recovers_a_damped_wave() {
        let x: Vec<f64> = (0..40).map(|i| 3000.0 + 230.0 * i as f64).collect();
        let q0 = 0.00874;
        let y: Vec<f64> = x.iter().map(|&x| 2.0 * (q0 * x + 0.4).cos() + 0.3 + 50.0 / x * (0.006 * x).sin()).collect();
        let q = oscillation_wavenumber(&x, &y, 0.007, 0.011).unwrap();
        assert!((q / q0 - 1.0).abs() < 1e-3, "{q}");
        assert!(oscillation_wavenumber(&x[..2], &y[..2], 0.007, 0.011).is_none());
    }
}
