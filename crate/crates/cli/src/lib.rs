//! Command-line laboratory for nonlocal SIR epidemics: configured runs of
//! the fixed-domain and moving-front solvers, parameter sweeps, spectral
//! threshold reports, and post-hoc artifact verification.

pub mod artifacts;
pub mod config;
pub mod presets;
pub mod report;
pub mod runner;
pub mod sweep;
