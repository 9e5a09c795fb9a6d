//! Problem definitions and their TOML form.
//!
//! Lengths are nanometres throughout, the vacuum wavenumber is `k = 2π/λ`
//! in rad/nm, and every rate leaves the crate as a ratio to the free-space
//! value, so `ħ`, `ε₀` and `|d|` never need numbers.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;
use std::path::Path;

/// Fused silica at 780 nm.
pub const DEFAULT_CORE_INDEX: f64 = 1.4537;
pub const DEFAULT_AMBIENT_INDEX: f64 = 1.0;
pub const DEFAULT_WAVELENGTH_NM: f64 = 780.0;

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("malformed config: {0}")]
    Parse(String),
    #[error("invalid `{field}`: {reason}")]
    Invalid { field: String, reason: String },
}

fn invalid(field: impl Into<String>, reason: impl Into<String>) -> ConfigError {
    ConfigError::Invalid {
        field: field.into(),
        reason: reason.into(),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Fiber {
    pub radius_nm: f64,
    pub center_nm: [f64; 2],
    #[serde(default = "default_core")]
    pub index_core: f64,
}

fn default_core() -> f64 {
    DEFAULT_CORE_INDEX
}

fn default_ambient() -> f64 {
    DEFAULT_AMBIENT_INDEX
}

impl Fiber {
    pub fn distance_to_axis(&self, p: [f64; 2]) -> f64 {
        (p[0] - self.center_nm[0]).hypot(p[1] - self.center_nm[1])
    }
}

/// Parallel cylinders along `z` in a homogeneous ambient medium.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FiberArray {
    #[serde(default)]
    pub fibers: Vec<Fiber>,
    #[serde(default = "default_ambient")]
    pub index_ambient: f64,
}

impl Default for FiberArray {
    fn default() -> Self {
        FiberArray::vacuum()
    }
}

// Touching cylinders are allowed; only genuine overlap (beyond rounding of
// the center arithmetic) is rejected.
const OVERLAP_SLACK_NM: f64 = 1e-9;

impl FiberArray {
    pub fn vacuum() -> Self {
        FiberArray {
            fibers: Vec::new(),
            index_ambient: DEFAULT_AMBIENT_INDEX,
        }
    }

    pub fn len(&self) -> usize {
        self.fibers.len()
    }

    pub fn is_empty(&self) -> bool {
        self.fibers.is_empty()
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        if !(self.index_ambient >= 1.0) {
            return Err(invalid("fibers.index_ambient", "must be ≥ 1"));
        }
        for (i, f) in self.fibers.iter().enumerate() {
            if !(f.radius_nm > 0.0 && f.radius_nm.is_finite()) {
                return Err(invalid(format!("fibers.fibers[{i}].radius_nm"), "must be positive"));
            }
            if !f.center_nm.iter().all(|c| c.is_finite()) {
                return Err(invalid(format!("fibers.fibers[{i}].center_nm"), "must be finite"));
            }
            if !(f.index_core >= 1.0) {
                return Err(invalid(format!("fibers.fibers[{i}].index_core"), "must be ≥ 1"));
            }
        }
        for i in 0..self.fibers.len() {
            for j in i + 1..self.fibers.len() {
                let (a, b) = (&self.fibers[i], &self.fibers[j]);
                let dist = a.distance_to_axis(b.center_nm);
                if dist + OVERLAP_SLACK_NM < a.radius_nm + b.radius_nm {
                    return Err(invalid(
                        format!("fibers.fibers[{j}].center_nm"),
                        format!("overlaps fiber {i} (center distance {dist} nm < {} nm)", a.radius_nm + b.radius_nm),
                    ));
                }
            }
        }
        Ok(())
    }

    /// Guided quantities need at least one core denser than the ambient.
    pub fn supports_guiding(&self) -> bool {
        self.fibers.iter().any(|f| f.index_core > self.index_ambient)
    }

    pub fn max_core_index(&self) -> f64 {
        self.fibers.iter().map(|f| f.index_core).fold(self.index_ambient, f64::max)
    }

    /// Fails if `p` lies inside or on any fiber cross-section.
    pub fn check_outside(&self, p: [f64; 2], field: &str) -> Result<(), ConfigError> {
        for (i, f) in self.fibers.iter().enumerate() {
            if f.distance_to_axis(p) <= f.radius_nm {
                return Err(invalid(field, format!("point ({}, {}) nm lies inside fiber {i}", p[0], p[1])));
            }
        }
        Ok(())
    }

    /// Smallest distance from `p` to any fiber surface (infinite when empty).
    pub fn surface_gap(&self, p: [f64; 2]) -> f64 {
        self.fibers
            .iter()
            .map(|f| f.distance_to_axis(p) - f.radius_nm)
            .fold(f64::INFINITY, f64::min)
    }
}

/// Two identical fibers of radius `a` with surface separation `d`, centered on
/// `(±(a + d/2), 0)`.
pub fn canonical_two_fiber(a_nm: f64, d_nm: f64) -> Result<FiberArray, ConfigError> {
    canonical_two_fiber_with_index(a_nm, d_nm, DEFAULT_CORE_INDEX)
}

pub fn canonical_two_fiber_with_index(a_nm: f64, d_nm: f64, index_core: f64) -> Result<FiberArray, ConfigError> {
    if !(a_nm > 0.0) {
        return Err(invalid("radius_nm", "must be positive"));
    }
    if !(d_nm >= 0.0) {
        return Err(invalid("separation_nm", "must be non-negative"));
    }
    let x = a_nm + 0.5 * d_nm;
    let fiber = |cx| Fiber {
        radius_nm: a_nm,
        center_nm: [cx, 0.0],
        index_core,
    };
    let arr = FiberArray {
        fibers: vec![fiber(-x), fiber(x)],
        index_ambient: DEFAULT_AMBIENT_INDEX,
    };
    arr.validate()?;
    Ok(arr)
}

/// `n` fibers of radius `a` on a ring of radius `a + d/2` about the origin;
/// fiber `l` sits at angle `2πl/n`.
pub fn nfiber_ring(n: usize, a_nm: f64, d_nm: f64) -> Result<FiberArray, ConfigError> {
    nfiber_ring_with_index(n, a_nm, d_nm, DEFAULT_CORE_INDEX)
}

pub fn nfiber_ring_with_index(n: usize, a_nm: f64, d_nm: f64, index_core: f64) -> Result<FiberArray, ConfigError> {
    if n == 0 {
        return Err(invalid("ring.count", "must be at least 1"));
    }
    if !(a_nm > 0.0) {
        return Err(invalid("radius_nm", "must be positive"));
    }
    if !(d_nm >= 0.0) {
        return Err(invalid("separation_nm", "must be non-negative"));
    }
    let r = a_nm + 0.5 * d_nm;
    let fibers = (0..n)
        .map(|l| {
            let t = 2.0 * PI * l as f64 / n as f64;
            Fiber {
                radius_nm: a_nm,
                center_nm: [r * t.cos(), r * t.sin()],
                index_core,
            }
        })
        .collect();
    let arr = FiberArray {
        fibers,
        index_ambient: DEFAULT_AMBIENT_INDEX,
    };
    arr.validate()?;
    Ok(arr)
}

/// Complex dipole orientation with unit norm.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Dipole([Complex64; 3]);

impl Dipole {
    pub const X: Dipole = Dipole([Complex64::new(1.0, 0.0), Complex64::new(0.0, 0.0), Complex64::new(0.0, 0.0)]);
    pub const Y: Dipole = Dipole([Complex64::new(0.0, 0.0), Complex64::new(1.0, 0.0), Complex64::new(0.0, 0.0)]);
    pub const Z: Dipole = Dipole([Complex64::new(0.0, 0.0), Complex64::new(0.0, 0.0), Complex64::new(1.0, 0.0)]);

    /// Rejects vectors whose norm differs from one by more than 1e-12.
    pub fn new(v: [Complex64; 3]) -> Result<Self, ConfigError> {
        let n = v.iter().map(|c| c.norm_sqr()).sum::<f64>().sqrt();
        if !((n - 1.0).abs() <= 1e-12) {
            return Err(invalid("emitter.dipole", format!("norm is {n}, expected 1")));
        }
        Ok(Dipole(v))
    }

    /// Normalizes any nonzero vector.
    pub fn normalized(v: [Complex64; 3]) -> Result<Self, ConfigError> {
        let n = v.iter().map(|c| c.norm_sqr()).sum::<f64>().sqrt();
        if !(n > 0.0 && n.is_finite()) {
            return Err(invalid("emitter.dipole", "zero or non-finite vector"));
        }
        Ok(Dipole(v.map(|c| c / n)))
    }

    pub fn components(&self) -> [Complex64; 3] {
        self.0
    }
}

/// TOML form of a dipole: either three reals or three `[re, im]` pairs.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(untagged)]
enum DipoleRepr {
    Real([f64; 3]),
    Complex([[f64; 2]; 3]),
}

impl Serialize for Dipole {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        let repr = if self.0.iter().all(|c| c.im == 0.0) {
            DipoleRepr::Real(self.0.map(|c| c.re))
        } else {
            DipoleRepr::Complex(self.0.map(|c| [c.re, c.im]))
        };
        repr.serialize(s)
    }
}

impl<'de> Deserialize<'de> for Dipole {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let v = match DipoleRepr::deserialize(d)? {
            DipoleRepr::Real(r) => r.map(|x| Complex64::new(x, 0.0)),
            DipoleRepr::Complex(c) => c.map(|[re, im]| Complex64::new(re, im)),
        };
        Dipole::new(v).map_err(serde::de::Error::custom)
    }
}

/// One quantum emitter: transverse position, axial position, orientation and
/// transition wavelength.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EmitterSpec {
    pub rho_a_nm: [f64; 2],
    #[serde(default)]
    pub z_nm: f64,
    pub dipole: Dipole,
    #[serde(default = "default_wavelength")]
    pub wavelength_nm: f64,
}

fn default_wavelength() -> f64 {
    DEFAULT_WAVELENGTH_NM
}

impl EmitterSpec {
    pub fn new(rho_a_nm: [f64; 2], z_nm: f64, dipole: Dipole) -> Self {
        EmitterSpec {
            rho_a_nm,
            z_nm,
            dipole,
            wavelength_nm: DEFAULT_WAVELENGTH_NM,
        }
    }

    pub fn k(&self) -> f64 {
        2.0 * PI / self.wavelength_nm
    }

    pub fn validate(&self, fibers: &FiberArray, field: &str) -> Result<(), ConfigError> {
        if !(self.wavelength_nm > 0.0 && self.wavelength_nm.is_finite()) {
            return Err(invalid(format!("{field}.wavelength_nm"), "must be positive"));
        }
        if !(self.z_nm.is_finite() && self.rho_a_nm.iter().all(|x| x.is_finite())) {
            return Err(invalid(format!("{field}.rho_a_nm"), "must be finite"));
        }
        fibers.check_outside(self.rho_a_nm, &format!("{field}.rho_a_nm"))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum ContourKind {
    /// Real axis with rectangular indentations below the branch point and
    /// poles, closed by an exponentially decaying tail.
    #[default]
    IndentedRealAxis,
    /// Same body, but the tail always leaves the real axis along rays.
    RotatedPath,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolverSettings {
    /// Azimuthal truncation; chosen from the geometry when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub m_max: Option<usize>,
    #[serde(default = "default_quad_tol")]
    pub quad_rel_tol: f64,
    #[serde(default = "default_pole_tol")]
    pub pole_rel_tol: f64,
    #[serde(default)]
    pub contour: ContourKind,
}

fn default_quad_tol() -> f64 {
    1e-6
}

fn default_pole_tol() -> f64 {
    1e-11
}

impl Default for SolverSettings {
    fn default() -> Self {
        SolverSettings {
            m_max: None,
            quad_rel_tol: default_quad_tol(),
            pole_rel_tol: default_pole_tol(),
            contour: ContourKind::default(),
        }
    }
}

impl SolverSettings {
    pub fn validate(&self) -> Result<(), ConfigError> {
        if let Some(m) = self.m_max {
            if m < 1 {
                return Err(invalid("solver.m_max", "must be ≥ 1"));
            }
        }
        for (name, v) in [("solver.quad_rel_tol", self.quad_rel_tol), ("solver.pole_rel_tol", self.pole_rel_tol)] {
            if !(v > 0.0 && v < 1.0) {
                return Err(invalid(name, "must lie in (0, 1)"));
            }
        }
        Ok(())
    }
}

/// Parameter axes and requested outputs of a sweep.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields)]
pub struct SweepConfig {
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub radius_nm: Vec<f64>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub separation_nm: Vec<f64>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub x_nm: Vec<f64>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub y_nm: Vec<f64>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub dz_nm: Vec<f64>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub fiber_count: Vec<usize>,
    /// Drive strength `Ω/Γ`.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub drive: Vec<f64>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub eta: Vec<f64>,
    /// Time grid `Γt`.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub time: Vec<f64>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub observables: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub out_dir: Option<String>,
}

impl SweepConfig {
    pub fn validate(&self) -> Result<(), ConfigError> {
        let real_axes: [(&str, &Vec<f64>); 8] = [
            ("sweep.radius_nm", &self.radius_nm),
            ("sweep.separation_nm", &self.separation_nm),
            ("sweep.x_nm", &self.x_nm),
            ("sweep.y_nm", &self.y_nm),
            ("sweep.dz_nm", &self.dz_nm),
            ("sweep.drive", &self.drive),
            ("sweep.eta", &self.eta),
            ("sweep.time", &self.time),
        ];
        for (name, axis) in real_axes {
            if axis.iter().any(|v| !v.is_finite()) {
                return Err(invalid(name, "contains non-finite values"));
            }
            if !axis.windows(2).all(|w| w[1] > w[0]) {
                return Err(invalid(name, "must be strictly increasing"));
            }
        }
        if !self.fiber_count.windows(2).all(|w| w[1] > w[0]) {
            return Err(invalid("sweep.fiber_count", "must be strictly increasing"));
        }
        if self.radius_nm.iter().any(|&a| a <= 0.0) {
            return Err(invalid("sweep.radius_nm", "radii must be positive"));
        }
        if self.separation_nm.iter().any(|&d| d < 0.0) {
            return Err(invalid("sweep.separation_nm", "separations must be non-negative"));
        }
        if self.eta.iter().any(|&e| !(0.0..=1.0).contains(&e)) {
            return Err(invalid("sweep.eta", "must lie in [0, 1]"));
        }
        Ok(())
    }
}

/// Everything a run needs, validated.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Config {
    #[serde(default)]
    pub fibers: FiberArray,
    pub emitter: EmitterSpec,
    /// Further emitters for coupling and dynamics runs.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub partners: Vec<EmitterSpec>,
    #[serde(default)]
    pub solver: SolverSettings,
    #[serde(default)]
    pub sweep: SweepConfig,
}

impl Config {
    pub fn validate(&self) -> Result<(), ConfigError> {
        self.fibers.validate()?;
        self.emitter.validate(&self.fibers, "emitter")?;
        for (i, p) in self.partners.iter().enumerate() {
            p.validate(&self.fibers, &format!("partners[{i}]"))?;
            if p.wavelength_nm != self.emitter.wavelength_nm {
                return Err(invalid(format!("partners[{i}].wavelength_nm"), "must equal emitter.wavelength_nm"));
            }
        }
        self.solver.validate()?;
        self.sweep.validate()
    }

    pub fn emitters(&self) -> Vec<EmitterSpec> {
        std::iter::once(self.emitter).chain(self.partners.iter().copied()).collect()
    }

    pub fn from_toml_str(text: &str) -> Result<Self, ConfigError> {
        let cfg: Config = toml::from_str(text).map_err(|e| ConfigError::Parse(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("config is always representable in TOML")
    }
}

pub fn load_config(path: &Path) -> Result<Config, ConfigError> {
    let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
        path: path.display().to_string(),
        source,
    })?;
    Config::from_toml_str(&text)
}
