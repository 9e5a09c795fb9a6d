//! Driven-dissipative master equation for up to four two-level emitters:
//! `dρ/dt = −i[H, ρ] + Σ_jk Γ_jk/2 (2σ_k ρ σ_j⁺ − σ_j⁺σ_k ρ − ρ σ_j⁺σ_k)` with
//! `H = Σ_j Ω/2 (σ_j + σ_j⁺) + Σ_jk Ω_jk σ_j⁺σ_k`, all rates in units of Γ.
//!
//! Basis: qubit `j` is bit `n−1−j` of the state index (emitter 1 leftmost),
//! bit value 1 = excited.

use crate::cylscatter::C64;
use nalgebra::{DMatrix, DVector};

pub const MAX_EMITTERS: usize = 4;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum QDynError {
    #[error("{0} emitters requested; supported range is 1..={MAX_EMITTERS}")]
    EmitterCount(usize),
    #[error("{0} matrix must be {1}×{1} and symmetric")]
    Shape(&'static str, usize),
    #[error("decay matrix is not positive semidefinite (eigenvalue {0:e})")]
    NotPositive(f64),
    #[error("density matrix invalid: {0}")]
    InvalidDensity(String),
    #[error("time grid must start at 0 or later and increase")]
    TimeGrid,
    #[error("step size underflow at t = {0}")]
    StepUnderflow(f64),
    #[error("steady state residual {0:e} exceeds 1e-10")]
    SteadyResidual(f64),
    #[error("steady state is not unique (decoupled subspace, e.g. η = 1)")]
    NonUniqueSteady,
    #[error("concurrence needs two emitters")]
    NotTwoQubits,
}

/// Hermitian, unit-trace, positive state of `n` emitters.
#[derive(Debug, Clone, PartialEq)]
pub struct DensityMatrix(DMatrix<C64>);

impl DensityMatrix {
    pub fn new(m: DMatrix<C64>) -> Result<Self, QDynError> {
        let d = m.nrows();
        if m.ncols() != d || !d.is_power_of_two() || d < 2 || d > 1 << MAX_EMITTERS {
            return Err(QDynError::InvalidDensity(format!("shape {}×{}", d, m.ncols())));
        }
        let herm = (&m - m.adjoint()).norm();
        if herm > 1e-10 {
            return Err(QDynError::InvalidDensity(format!("non-Hermitian by {herm:e}")));
        }
        let tr = m.trace();
        if (tr - 1.0).norm() > 1e-9 {
            return Err(QDynError::InvalidDensity(format!("trace {tr}")));
        }
        let low = m.clone().symmetric_eigen().eigenvalues.min();
        if low < -1e-8 {
            return Err(QDynError::InvalidDensity(format!("eigenvalue {low:e}")));
        }
        Ok(DensityMatrix(m))
    }

    /// Pure product state; `excited[j]` for emitter `j`.
    pub fn product(excited: &[bool]) -> Result<Self, QDynError> {
        let n = excited.len();
        if n == 0 || n > MAX_EMITTERS {
            return Err(QDynError::EmitterCount(n));
        }
        let idx = excited.iter().fold(0usize, |acc, &e| (acc << 1) | e as usize);
        let mut m = DMatrix::zeros(1 << n, 1 << n);
        m[(idx, idx)] = C64::new(1.0, 0.0);
        Ok(DensityMatrix(m))
    }

    pub fn matrix(&self) -> &DMatrix<C64> {
        &self.0
    }

    pub fn n_emitters(&self) -> usize {
        self.0.nrows().trailing_zeros() as usize
    }

    /// `⟨σ_j⁺σ_j⟩`.
    pub fn population(&self, j: usize) -> f64 {
        let n = self.n_emitters();
        let bit = 1 << (n - 1 - j);
        (0..self.0.nrows()).filter(|i| i & bit != 0).map(|i| self.0[(i, i)].re).sum()
    }

    pub fn purity(&self) -> f64 {
        (&self.0 * &self.0).trace().re
    }
}

/// Master-equation parameters, in units of the single-emitter rate Γ.
#[derive(Debug, Clone, PartialEq)]
pub struct MasterEqSpec {
    pub omega: DMatrix<f64>,
    pub gamma: DMatrix<f64>,
    /// common real Rabi frequency Ω
    pub drive: f64,
}

impl MasterEqSpec {
    pub fn new(omega: DMatrix<f64>, gamma: DMatrix<f64>, drive: f64) -> Result<Self, QDynError> {
        let n = gamma.nrows();
        if n == 0 || n > MAX_EMITTERS {
            return Err(QDynError::EmitterCount(n));
        }
        for (name, m) in [("omega", &omega), ("gamma", &gamma)] {
            if m.nrows() != n || m.ncols() != n || (m - m.transpose()).amax() > 1e-12 {
                return Err(QDynError::Shape(name, n));
            }
        }
        let low = gamma.clone().symmetric_eigen().eigenvalues.min();
        if low < -1e-10 * gamma.amax().max(1.0) {
            return Err(QDynError::NotPositive(low));
        }
        Ok(MasterEqSpec { omega, gamma, drive })
    }

    /// Two emitters at commensurate spacing: `Γ₁₂ = ηΓ`, `Ω_jk = 0`.
    pub fn commensurate_pair(eta: f64, drive: f64) -> Result<Self, QDynError> {
        Self::new(DMatrix::zeros(2, 2), DMatrix::from_row_slice(2, 2, &[1.0, eta, eta, 1.0]), drive)
    }

    pub fn n_emitters(&self) -> usize {
        self.gamma.nrows()
    }

    fn lowering(&self, j: usize) -> DMatrix<C64> {
        let n = self.n_emitters();
        let d = 1 << n;
        let bit = 1 << (n - 1 - j);
        let mut s = DMatrix::zeros(d, d);
        for i in 0..d {
            if i & bit != 0 {
                s[(i ^ bit, i)] = C64::new(1.0, 0.0);
            }
        }
        s
    }

    /// Hamiltonian in the frame rotating at the emitter frequency.
    pub fn hamiltonian(&self) -> DMatrix<C64> {
        let n = self.n_emitters();
        let d = 1 << n;
        let sig: Vec<DMatrix<C64>> = (0..n).map(|j| self.lowering(j)).collect();
        let mut h = DMatrix::<C64>::zeros(d, d);
        for j in 0..n {
            h += (&sig[j] + sig[j].adjoint()) * C64::new(0.5 * self.drive, 0.0);
            for k in 0..n {
                h += sig[j].adjoint() * &sig[k] * C64::new(self.omega[(j, k)], 0.0);
            }
        }
        h
    }

    /// Liouvillian on row-major `vec(ρ)`: `vec(AρB) = (A ⊗ Bᵀ) vec(ρ)`.
    pub fn liouvillian(&self) -> DMatrix<C64> {
        let n = self.n_emitters();
        let d = 1 << n;
        let id = DMatrix::<C64>::identity(d, d);
        let sig: Vec<DMatrix<C64>> = (0..n).map(|j| self.lowering(j)).collect();
        let h = self.hamiltonian();
        let i = C64::new(0.0, 1.0);
        let mut l = (h.kronecker(&id) - id.kronecker(&h.transpose())) * (-i);
        for j in 0..n {
            for k in 0..n {
                let g = self.gamma[(j, k)];
                if g == 0.0 {
                    continue;
                }
                let sjd = sig[j].adjoint();
                let prod = &sjd * &sig[k];
                let jump = sig[k].kronecker(&sjd.transpose()) * C64::new(2.0, 0.0);
                let left = prod.kronecker(&id);
                let right = id.kronecker(&prod.transpose());
                l += (jump - left - right) * C64::new(0.5 * g, 0.0);
            }
        }
        l
    }
}

fn vec_of(m: &DMatrix<C64>) -> DVector<C64> {
    let d = m.nrows();
    DVector::from_fn(d * d, |k, _| m[(k / d, k % d)])
}

fn mat_of(v: &DVector<C64>, d: usize) -> DMatrix<C64> {
    DMatrix::from_fn(d, d, |i, j| v[i * d + j])
}

/// Adaptive Dormand–Prince 5(4) step control.
#[derive(Debug, Clone, Copy)]
pub struct Rk45 {
    pub rel_tol: f64,
    pub abs_tol: f64,
    pub h_min: f64,
}

impl Default for Rk45 {
    fn default() -> Self {
        Rk45 {
            rel_tol: 1e-10,
            abs_tol: 1e-12,
            h_min: 1e-12,
        }
    }
}

const DP_A: [[f64; 6]; 6] = [
    [1.0 / 5.0, 0.0, 0.0, 0.0, 0.0, 0.0],
    [3.0 / 40.0, 9.0 / 40.0, 0.0, 0.0, 0.0, 0.0],
    [44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0, 0.0, 0.0, 0.0],
    [19372.0 / 6561.0, -25360.0 / 2187.0, 64448.0 / 6561.0, -212.0 / 729.0, 0.0, 0.0],
    [9017.0 / 3168.0, -355.0 / 33.0, 46732.0 / 5247.0, 49.0 / 176.0, -5103.0 / 18656.0, 0.0],
    [35.0 / 384.0, 0.0, 500.0 / 1113.0, 125.0 / 192.0, -2187.0 / 6784.0, 11.0 / 84.0],
];
const DP_B5: [f64; 7] = [35.0 / 384.0, 0.0, 500.0 / 1113.0, 125.0 / 192.0, -2187.0 / 6784.0, 11.0 / 84.0, 0.0];
const DP_B4: [f64; 7] = [
    5179.0 / 57600.0,
    0.0,
    7571.0 / 16695.0,
    393.0 / 640.0,
    -92097.0 / 339200.0,
    187.0 / 2100.0,
    1.0 / 40.0,
];

impl Rk45 {
    /// Integrate `y' = L y` and return `y` at every time in `ts` (from `t = ts[0]`).
    pub fn integrate(&self, l: &DMatrix<C64>, y0: &DVector<C64>, ts: &[f64]) -> Result<Vec<DVector<C64>>, QDynError> {
        if ts.is_empty() || ts[0] < 0.0 || ts.windows(2).any(|w| w[1] <= w[0]) {
            return Err(QDynError::TimeGrid);
        }
        let mut out = vec![y0.clone()];
        let mut y = y0.clone();
        let mut t = ts[0];
        let mut h: f64 = 0.01;
        let mut k1 = l * &y;
        for &target in &ts[1..] {
            while t < target {
                let step = h.min(target - t);
                let mut ks = vec![k1.clone()];
                for a in DP_A.iter() {
                    let mut yi = y.clone();
                    for (aj, kj) in a.iter().zip(&ks) {
                        if *aj != 0.0 {
                            yi.axpy(C64::new(step * aj, 0.0), kj, C64::new(1.0, 0.0));
                        }
                    }
                    ks.push(l * &yi);
                }
                let mut y5 = y.clone();
                let mut err = DVector::<C64>::zeros(y.len());
                for (j, kj) in ks.iter().enumerate() {
                    y5.axpy(C64::new(step * DP_B5[j], 0.0), kj, C64::new(1.0, 0.0));
                    err.axpy(C64::new(step * (DP_B5[j] - DP_B4[j]), 0.0), kj, C64::new(1.0, 0.0));
                }
                let scale = self.abs_tol + self.rel_tol * y.camax().max(y5.camax());
                let e = err.camax() / scale;
                if e <= 1.0 {
                    t += step;
                    y = y5;
                    k1 = ks.pop().expect("seven stages");
                }
                let fac = if e == 0.0 { 5.0 } else { (0.9 * e.powf(-0.2)).clamp(0.2, 5.0) };
                if e <= 1.0 && step < h {
                    // clipped to a grid point; keep the controller's proposal
                    continue;
                }
                h = step * fac;
                if h < self.h_min {
                    return Err(QDynError::StepUnderflow(t));
                }
            }
            out.push(y.clone());
        }
        Ok(out)
    }
}

/// Density matrices at each time of `ts` (first entry is the initial state).
pub fn evolve(spec: &MasterEqSpec, initial: &DensityMatrix, ts: &[f64]) -> Result<Vec<DensityMatrix>, QDynError> {
    let d = 1 << spec.n_emitters();
    if initial.matrix().nrows() != d {
        return Err(QDynError::InvalidDensity("dimension does not match the emitter count".into()));
    }
    let l = spec.liouvillian();
    let ys = Rk45::default().integrate(&l, &vec_of(initial.matrix()), ts)?;
    let t_end = ts.last().copied().unwrap_or(0.0) - ts[0];
    ys.iter()
        .map(|y| {
            let m = mat_of(y, d);
            let drift = (m.trace() - 1.0).norm().max((&m - m.adjoint()).camax());
            if drift > 1e-9 * t_end.max(1.0) {
                return Err(QDynError::InvalidDensity(format!("trace/Hermiticity drift {drift:e}")));
            }
            // restore exact Hermiticity lost to rounding
            Ok(DensityMatrix((&m + m.adjoint()) * C64::new(0.5, 0.0)))
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct SteadyState {
    pub rho: DensityMatrix,
    pub residual: f64,
}

/// Null vector of the Liouvillian normalized to unit trace; a kernel of
/// more than one dimension is an error since any mixture would do.
pub fn steady_state(spec: &MasterEqSpec) -> Result<SteadyState, QDynError> {
    let d = 1 << spec.n_emitters();
    let l = spec.liouvillian();
    let sv = l.clone().singular_values();
    let smax = sv.max();
    if sv.iter().filter(|&&s| s < 1e-10 * smax).count() > 1 {
        return Err(QDynError::NonUniqueSteady);
    }
    // replace one equation by Tr ρ = 1
    let mut a = l.clone();
    let mut b = DVector::<C64>::zeros(d * d);
    for c in 0..d * d {
        a[(0, c)] = C64::new(0.0, 0.0);
    }
    for i in 0..d {
        a[(0, i * d + i)] = C64::new(1.0, 0.0);
    }
    b[0] = C64::new(1.0, 0.0);
    let x = a.lu().solve(&b).ok_or(QDynError::SteadyResidual(f64::INFINITY))?;
    let residual = (&l * &x).camax();
    if residual > 1e-10 {
        return Err(QDynError::SteadyResidual(residual));
    }
    let m = mat_of(&x, d);
    let rho = DensityMatrix::new((&m + m.adjoint()) * C64::new(0.5, 0.0))?;
    Ok(SteadyState { rho, residual })
}

/// Wootters concurrence `max(0, λ₁ − λ₂ − λ₃ − λ₄)` of a two-emitter state,
/// with `λᵢ` the square roots of the eigenvalues of `ρ ρ̃`,
/// `ρ̃ = (σ_y⊗σ_y) ρ* (σ_y⊗σ_y)`.
pub fn concurrence(rho: &DensityMatrix) -> Result<f64, QDynError> {
    if rho.n_emitters() != 2 {
        return Err(QDynError::NotTwoQubits);
    }
    let m = rho.matrix();
    // σ_y⊗σ_y in this basis is the anti-diagonal (−1, 1, 1, −1)
    let mut yy = DMatrix::<C64>::zeros(4, 4);
    for (i, s) in [-1.0, 1.0, 1.0, -1.0].iter().enumerate() {
        yy[(i, 3 - i)] = C64::new(*s, 0.0);
    }
    let tilde = &yy * m.map(|z| z.conj()) * &yy;
    // eigenvalues of ρρ̃ equal those of the Hermitian √ρ ρ̃ √ρ
    let eig = m.clone().symmetric_eigen();
    let sqrt_vals = eig.eigenvalues.map(|x| C64::new(x.max(0.0).sqrt(), 0.0));
    let sq = &eig.eigenvectors * DMatrix::from_diagonal(&sqrt_vals) * eig.eigenvectors.adjoint();
    let r = &sq * tilde * &sq;
    let r = (&r + r.adjoint()) * C64::new(0.5, 0.0);
    let mut lam: Vec<f64> = r.symmetric_eigen().eigenvalues.iter().map(|x| x.max(0.0).sqrt()).collect();
    lam.sort_by(|a, b| b.total_cmp(a));
    Ok((lam[0] - lam[1] - lam[2] - lam[3]).max(0.0))
}

/// Result of one transient run from `|eg⟩`.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize)]
pub struct TransientPoint {
    pub eta: f64,
    pub max_concurrence: f64,
    /// largest `⟨σ₂⁺σ₂⟩` reached
    pub max_transfer: f64,
}

/// Evolve `|eg⟩` with `Γ₁₂ = ηΓ`, no drive, over `[0, t_max]` sampled at `samples` points.
pub fn transient(eta: f64, t_max: f64, samples: usize) -> Result<(Vec<f64>, Vec<f64>, Vec<f64>), QDynError> {
    let spec = MasterEqSpec::commensurate_pair(eta, 0.0)?;
    let ts: Vec<f64> = (0..samples).map(|i| t_max * i as f64 / (samples - 1) as f64).collect();
    let traj = evolve(&spec, &DensityMatrix::product(&[true, false])?, &ts)?;
    let c = traj.iter().map(concurrence).collect::<Result<Vec<_>, _>>()?;
    let p2 = traj.iter().map(|r| r.population(1)).collect();
    Ok((ts, c, p2))
}

/// Maximal concurrence and transferred population for each `η`, up to `Γt = t_max`.
pub fn transient_sweep(etas: &[f64], t_max: f64) -> Result<Vec<TransientPoint>, QDynError> {
    etas.iter()
        .map(|&eta| {
            let (_, c, p2) = transient(eta, t_max, 2001)?;
            Ok(TransientPoint {
                eta,
                max_concurrence: c.iter().copied().fold(0.0, f64::max),
                max_transfer: p2.iter().copied().fold(0.0, f64::max),
            })
        })
        .collect()
}

/// Steady-state concurrence of the driven commensurate pair.
pub fn steady_concurrence(eta: f64, drive: f64) -> Result<f64, QDynError> {
    concurrence(&steady_state(&MasterEqSpec::commensurate_pair(eta, drive)?)?.rho)
}

/// Smallest `η` on `[0, 1]` with non-zero steady-state concurrence at this
/// drive, by bisection to `tol`; `None` if the state stays separable.
pub fn eta_threshold(drive: f64, tol: f64) -> Result<Option<f64>, QDynError> {
    const ZERO: f64 = 1e-12;
    if steady_concurrence(1.0 - 1e-9, drive)? <= ZERO {
        return Ok(None);
    }
    let (mut lo, mut hi) = (0.0, 1.0 - 1e-9);
    while hi - lo > tol {
        let mid = 0.5 * (lo + hi);
        if steady_concurrence(mid, drive)? > ZERO {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Ok(Some(hi))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn pure(v: [C64; 4]) -> DensityMatrix {
        let v = DVector::from_row_slice(&v);
        DensityMatrix::new(&v * v.adjoint()).unwrap()
    }

    #[test]
    fn single_emitter_decays_exponentially() {
        let spec = MasterEqSpec::new(DMatrix::zeros(1, 1), DMatrix::from_element(1, 1, 1.0), 0.0).unwrap();
        let r = evolve(&spec, &DensityMatrix::product(&[true]).unwrap(), &[0.0, 0.5, 1.0]).unwrap();
        assert!((r[2].population(0) - (-1.0f64).exp()).abs() < 1e-6);
    }

    #[test]
    fn uncoupled_emitters_never_entangle() {
        let spec = MasterEqSpec::commensurate_pair(0.0, 0.0).unwrap();
        let ts: Vec<f64> = (0..50).map(|i| 0.2 * i as f64).collect();
        for r in evolve(&spec, &DensityMatrix::product(&[true, false]).unwrap(), &ts).unwrap() {
            assert!(r.population(1).abs() < 1e-14);
            assert!(concurrence(&r).unwrap() < 1e-12);
        }
    }

    #[test]
    fn perfect_coupling_reaches_half() {
        let pts = transient_sweep(&[0.0, 1.0], 20.0).unwrap();
        assert!(pts[0].max_concurrence < 1e-12);
        assert!((pts[1].max_concurrence - 0.5).abs() < 0.01, "{}", pts[1].max_concurrence);
    }

    #[test]
    fn concurrence_of_reference_states() {
        let h = std::f64::consts::FRAC_1_SQRT_2;
        let z = C64::new(0.0, 0.0);
        let bell = pure([z, C64::new(h, 0.0), C64::new(h, 0.0), z]);
        assert!((concurrence(&bell).unwrap() - 1.0).abs() < 1e-12);
        let prod = pure([C64::new(0.6, 0.0), C64::new(0.0, 0.8), z, z]);
        assert!(concurrence(&prod).unwrap() < 1e-12);
        let phi = DVector::from_row_slice(&[C64::new(h, 0.0), z, z, C64::new(h, 0.0)]);
        for p in [0.2, 0.6, 0.9] {
            let w = (&phi * phi.adjoint()) * C64::new(p, 0.0) + DMatrix::identity(4, 4) * C64::new((1.0 - p) / 4.0, 0.0);
            let c = concurrence(&DensityMatrix::new(w).unwrap()).unwrap();
            assert!((c - ((3.0 * p - 1.0) / 2.0).max(0.0)).abs() < 1e-10, "{p}: {c}");
        }
    }

    #[test]
    fn undriven_steady_state_is_ground() {
        let s = steady_state(&MasterEqSpec::commensurate_pair(0.5, 0.0).unwrap()).unwrap();
        assert!((s.rho.matrix()[(0, 0)].re - 1.0).abs() < 1e-10);
        assert_eq!(concurrence(&s.rho).unwrap(), 0.0);
    }

    #[test]
    fn dark_state_makes_the_steady_state_ambiguous() {
        let spec = MasterEqSpec::commensurate_pair(1.0, 0.45).unwrap();
        assert_eq!(steady_state(&spec), Err(QDynError::NonUniqueSteady));
    }

    #[test]
    fn steady_entanglement_threshold() {
        assert!(steady_concurrence(0.24, 0.45).unwrap() > 0.0);
        assert!(steady_concurrence(0.16, 0.45).unwrap() < 1e-6);
        let t = eta_threshold(0.45, 1e-4).unwrap().unwrap();
        assert!(t > 0.16 && t < 0.24, "{t}");
    }

    #[test]
    fn steady_state_forgets_the_initial_state() {
        let spec = MasterEqSpec::commensurate_pair(0.3, 0.45).unwrap();
        let ss = steady_state(&spec).unwrap();
        let ts = [0.0, 60.0];
        for init in [[true, false], [true, true]] {
            let r = evolve(&spec, &DensityMatrix::product(&init).unwrap(), &ts).unwrap();
            assert!((r[1].matrix() - ss.rho.matrix()).camax() < 1e-8);
        }
    }

    #[test]
    fn invalid_inputs_are_rejected() {
        assert!(matches!(
            MasterEqSpec::new(DMatrix::zeros(2, 2), DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 1.0]), 0.0),
            Err(QDynError::NotPositive(_))
        ));
        assert!(DensityMatrix::new(DMatrix::identity(4, 4)).is_err());
        assert!(matches!(MasterEqSpec::commensurate_pair(0.1, 0.0).map(|_| ()), Ok(())));
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(16))]
        #[test]
        fn evolution_keeps_a_physical_state(eta in 0.0f64..1.0, drive in 0.0f64..2.0, w in -0.5f64..0.5) {
            let spec = MasterEqSpec::new(
                DMatrix::from_row_slice(2, 2, &[0.0, w, w, 0.0]),
                DMatrix::from_row_slice(2, 2, &[1.0, eta, eta, 1.0]),
                drive,
            ).unwrap();
            let ts: Vec<f64> = (0..11).map(|i| i as f64).collect();
            for r in evolve(&spec, &DensityMatrix::product(&[true, false]).unwrap(), &ts).unwrap() {
                prop_assert!((r.matrix().trace() - 1.0).norm() < 1e-9);
                prop_assert!(r.matrix().clone().symmetric_eigen().eigenvalues.min() > -1e-8);
                prop_assert!(r.purity() <= 1.0 + 1e-9);
                let c = concurrence(&r).unwrap();
                prop_assert!((0.0..=1.0).contains(&c));
            }
        }
    }
}
