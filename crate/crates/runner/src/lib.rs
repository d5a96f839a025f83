//! Command-line orchestration for the dynamical-map solvers: configuration,
//! presets, sweep pipelines and run manifests.

pub mod cli;
pub mod config;
pub mod manifest;
pub mod pipelines;
pub mod presets;
