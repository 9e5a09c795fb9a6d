//! Dyadic Green's function of parallel dielectric nanofibers by cylindrical
//! multiple scattering, and the emitter physics built on it.

pub(crate) mod ext;
pub mod config;
pub mod cylscatter;
pub mod multiscatter;
pub mod observables;
pub mod qdynamics;
pub mod quad;
pub mod spectral;
pub mod specfun;
