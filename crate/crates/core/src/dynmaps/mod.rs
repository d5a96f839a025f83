//! Dynamical-map solvers: NCA, NCA-Markov, Born and Born-Markov.
//!
//! All four share a uniform grid `t_n = n·dt`, the kernel construction in
//! [`kernel`] and the stepping machinery in [`engine`]. They propagate the
//! full superoperator `V̂(t)` with `ρ(t) = V̂(t)ρ(0)`.

mod engine;
pub mod io;
pub mod kernel;
mod markov;

pub use engine::{solve_nca, solve_nca_markov, solve_born, solve};
pub use kernel::{born_kernel, kernel_trajectory, nca_kernel, KernelTrajectory};
pub use markov::{filtered_operator, solve_born_markov};

mod convergence;
pub use convergence::{convergence_study, ConvergenceRow, ConvergenceStudy};

use std::fmt;
use std::str::FromStr;

use thiserror::Error;

use crate::bath::{BathError, CorrelationTable};
use crate::qops::{liouvillian, AlgebraError, Operator, SuperOperator, C64, HERMITIAN_TOL};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Method {
    Nca,
    NcaMarkov,
    Born,
    BornMarkov,
}

impl Method {
    pub const ALL: [Method; 4] = [Method::Nca, Method::NcaMarkov, Method::Born, Method::BornMarkov];

    pub fn as_str(self) -> &'static str {
        match self {
            Method::Nca => "nca",
            Method::NcaMarkov => "nca_markov",
            Method::Born => "born",
            Method::BornMarkov => "born_markov",
        }
    }

    /// True for the time-local (Markovian) variants.
    pub fn is_markovian(self) -> bool {
        matches!(self, Method::NcaMarkov | Method::BornMarkov)
    }

    /// True when the kernel is built from the dressed propagator.
    pub fn is_self_consistent(self) -> bool {
        matches!(self, Method::Nca | Method::NcaMarkov)
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Method {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim() {
            "nca" => Ok(Method::Nca),
            "nca_markov" | "nca-markov" => Ok(Method::NcaMarkov),
            "born" => Ok(Method::Born),
            "born_markov" | "born-markov" | "redfield" => Ok(Method::BornMarkov),
            other => Err(format!(
                "unknown method {other:?} (expected nca, nca_markov, born or born_markov)"
            )),
        }
    }
}

/// System Hamiltonian plus the operator(s) coupled to the bath.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelSpec {
    pub delta: f64,
    pub epsilon: f64,
    hamiltonian: Operator,
    coupling_operators: Vec<Operator>,
}

impl ModelSpec {
    /// `H = (Δ/2)σx + (ε/2)σz` coupled through `X = σz`.
    pub fn spin_boson(delta: f64, epsilon: f64) -> Self {
        let h = Operator::sigma_x()
            .scale(C64::new(delta / 2.0, 0.0))
            .add(&Operator::sigma_z().scale(C64::new(epsilon / 2.0, 0.0)));
        Self {
            delta,
            epsilon,
            hamiltonian: h,
            coupling_operators: vec![Operator::sigma_z()],
        }
    }

    /// A generic model. Only a single coupling operator is supported by the
    /// solvers.
    pub fn new(hamiltonian: Operator, coupling_operators: Vec<Operator>) -> Result<Self, SolverError> {
        hamiltonian.ensure_hermitian(HERMITIAN_TOL)?;
        if coupling_operators.len() != 1 {
            return Err(SolverError::Unsupported(format!(
                "{} coupling operators given, exactly one is supported",
                coupling_operators.len()
            )));
        }
        for x in &coupling_operators {
            x.ensure_hermitian(HERMITIAN_TOL)?;
            if x.dim() != hamiltonian.dim() {
                return Err(AlgebraError::DimensionMismatch {
                    expected: hamiltonian.dim(),
                    found: x.dim(),
                }
                .into());
            }
        }
        Ok(Self {
            delta: f64::NAN,
            epsilon: f64::NAN,
            hamiltonian,
            coupling_operators,
        })
    }

    pub fn hamiltonian(&self) -> &Operator {
        &self.hamiltonian
    }

    pub fn coupling_operators(&self) -> &[Operator] {
        &self.coupling_operators
    }

    pub fn coupling(&self) -> &Operator {
        &self.coupling_operators[0]
    }

    pub fn dim(&self) -> usize {
        self.hamiltonian.dim()
    }

    pub fn liouvillian(&self) -> SuperOperator {
        liouvillian(&self.hamiltonian).expect("validated Hermitian at construction")
    }
}

/// Knobs shared by all solvers.
#[derive(Debug, Clone, PartialEq)]
pub struct SolverOptions {
    /// Max-norm tolerance on the corrector update of `V̂`.
    pub corrector_tol: f64,
    pub max_corrector_iters: usize,
    /// Entries of `V̂` above this magnitude count as a blow-up.
    pub divergence_threshold: f64,
    /// Keep every `store_stride`-th map in the returned trajectory.
    pub store_stride: usize,
    /// NCA-Markov only: evolve with the full NCA Volterra equation up to this
    /// time before switching to the time-local equation.
    pub nca_seed_time: Option<f64>,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self {
            corrector_tol: 1e-10,
            max_corrector_iters: 25,
            divergence_threshold: 1e6,
            store_stride: 1,
            nca_seed_time: None,
        }
    }
}

#[derive(Debug, Error)]
pub enum SolverError {
    #[error(transparent)]
    Algebra(#[from] AlgebraError),
    #[error(transparent)]
    Bath(#[from] BathError),
    #[error("solver step {dt} does not match correlation table step {table_dt}")]
    GridMismatch { dt: f64, table_dt: f64 },
    #[error("correlation table has {have} entries, {need} needed")]
    TableTooShort { need: usize, have: usize },
    #[error("invalid grid: {0}")]
    InvalidGrid(String),
    #[error("corrector did not converge at step {step} (t = {time}), last update {residual:.3e}")]
    NonConvergent { step: usize, time: f64, residual: f64 },
    #[error("numerical instability: diverged at t = {time} (step {step})")]
    Diverged {
        step: usize,
        time: f64,
        /// Maps computed before the blow-up.
        partial: Box<PropagatorTrajectory>,
    },
    #[error("unsupported: {0}")]
    Unsupported(String),
}

impl SolverError {
    /// Time of the blow-up for diverged runs.
    pub fn divergence_time(&self) -> Option<f64> {
        match self {
            SolverError::Diverged { time, .. } => Some(*time),
            _ => None,
        }
    }
}

/// `V̂(t_0) … V̂(t_N)` on a uniform grid.
#[derive(Debug, Clone, PartialEq)]
pub struct PropagatorTrajectory {
    dt: f64,
    maps: Vec<SuperOperator>,
    method: Method,
}

impl PropagatorTrajectory {
    pub fn new(dt: f64, maps: Vec<SuperOperator>, method: Method) -> Self {
        Self { dt, maps, method }
    }

    /// Spacing of the stored maps.
    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn maps(&self) -> &[SuperOperator] {
        &self.maps
    }

    pub fn method(&self) -> Method {
        self.method
    }

    pub fn len(&self) -> usize {
        self.maps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.maps.is_empty()
    }

    pub fn time(&self, n: usize) -> f64 {
        n as f64 * self.dt
    }

    pub fn times(&self) -> Vec<f64> {
        (0..self.maps.len()).map(|n| self.time(n)).collect()
    }

    pub fn last(&self) -> Option<&SuperOperator> {
        self.maps.last()
    }

    /// `ρ(t_n) = V̂(t_n)ρ(0)`.
    pub fn evolve(&self, n: usize, rho0: &Operator) -> Result<Operator, AlgebraError> {
        self.maps[n].apply(rho0)
    }

    /// Worst trace defect `max_n |w†V̂(t_n) − w†|`.
    pub fn max_trace_defect(&self) -> f64 {
        self.maps.iter().map(|v| v.trace_defect()).fold(0.0, f64::max)
    }
}

pub(crate) fn check_grid(
    bath: &CorrelationTable,
    dt: f64,
    n_steps: usize,
) -> Result<(), SolverError> {
    if !(dt > 0.0 && dt.is_finite()) {
        return Err(SolverError::InvalidGrid(format!("dt must be positive, got {dt}")));
    }
    if n_steps == 0 {
        return Err(SolverError::InvalidGrid("n_steps must be at least 1".into()));
    }
    if (bath.dt() - dt).abs() > 1e-12 * dt {
        return Err(SolverError::GridMismatch {
            dt,
            table_dt: bath.dt(),
        });
    }
    if bath.len() < n_steps + 1 {
        return Err(SolverError::TableTooShort {
            need: n_steps + 1,
            have: bath.len(),
        });
    }
    Ok(())
}
