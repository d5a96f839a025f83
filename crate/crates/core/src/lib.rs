//! Dynamical maps for a qubit coupled to a bosonic bath.
//!
//! The workhorse is the self-consistent non-crossing (NCA) propagator; Born,
//! and Markovian variants of both, share the same stepping engine.

pub mod bath;
pub mod dynmaps;
pub mod observables;
pub mod qops;
pub mod quad;
