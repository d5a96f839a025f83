//! Memory kernels ("self-energies").
//!
//! ```text
//! Ŝ(τ) = (−X̂₊ + X̂₋) · 𝒰(τ) · [Γ(τ) X̂₊ − Γ*(τ) X̂₋]
//! ```
//!
//! with `X̂₊ = X•`, `X̂₋ = •X`. The NCA kernel uses the dressed propagator
//! `𝒰 = V̂(τ)`; the Born kernel uses the bare one, `𝒰 = exp(L_S τ)`.

use crate::bath::CorrelationTable;
use crate::qops::{left_mult, mul_acc, right_mult, AlgebraError, NormalExp, Operator, SuperOperator, TraceContract, C64, ZERO};

use super::{ModelSpec, PropagatorTrajectory, SolverError};

/// `(−X̂₊ + X̂₋) V̂(τ) [Γ X̂₊ − Γ* X̂₋]`.
pub fn nca_kernel(v_tau: &SuperOperator, gamma_tau: C64, x: &Operator) -> Result<SuperOperator, AlgebraError> {
    if v_tau.dim() != x.dim() {
        return Err(AlgebraError::DimensionMismatch {
            expected: v_tau.dim(),
            found: x.dim(),
        });
    }
    let parts = KernelParts::new(x);
    let mut out = vec![ZERO; parts.nn()];
    let mut scratch = KernelScratch::new(parts.n);
    parts.kernel_into(&mut out, v_tau.as_slice(), gamma_tau, &mut scratch);
    Ok(SuperOperator::from_column_slice(parts.n, &out, TraceContract::Generator))
}

/// Born kernel at a grid time `tau`.
pub fn born_kernel(tau: f64, model: &ModelSpec, bath: &CorrelationTable) -> Result<SuperOperator, SolverError> {
    let idx = grid_index(tau, bath.dt())?;
    let gamma = bath.get(idx).ok_or(SolverError::TableTooShort {
        need: idx + 1,
        have: bath.len(),
    })?;
    let l = model.liouvillian();
    let bare = NormalExp::try_new(l.matrix()).expect("Liouvillians are normal");
    let u = SuperOperator::from_column_slice(l.size(), bare.exp(tau).as_slice(), TraceContract::Map);
    Ok(nca_kernel(&u, gamma, model.coupling())?)
}

pub(crate) fn grid_index(tau: f64, dt: f64) -> Result<usize, SolverError> {
    let x = tau / dt;
    let n = x.round();
    if tau < 0.0 || (x - n).abs() > 1e-9 * x.abs().max(1.0) {
        return Err(SolverError::InvalidGrid(format!(
            "tau = {tau} is not on the grid with step {dt}"
        )));
    }
    Ok(n as usize)
}

/// Flat column-major pieces of the kernel for a fixed coupling operator.
#[derive(Debug, Clone)]
pub(crate) struct KernelParts {
    pub n: usize,
    /// `−X̂₊ + X̂₋`
    pub outer: Vec<C64>,
    pub x_left: Vec<C64>,
    pub x_right: Vec<C64>,
}

#[derive(Debug, Clone)]
pub(crate) struct KernelScratch {
    right: Vec<C64>,
    tmp: Vec<C64>,
}

impl KernelScratch {
    pub fn new(n: usize) -> Self {
        Self {
            right: vec![ZERO; n * n],
            tmp: vec![ZERO; n * n],
        }
    }
}

impl KernelParts {
    pub fn new(x: &Operator) -> Self {
        let xl = left_mult(x);
        let xr = right_mult(x);
        let outer = xr.sub(&xl);
        Self {
            n: xl.size(),
            outer: outer.as_slice().to_vec(),
            x_left: xl.as_slice().to_vec(),
            x_right: xr.as_slice().to_vec(),
        }
    }

    pub fn nn(&self) -> usize {
        self.n * self.n
    }

    /// `out = outer · v · (Γ X̂₊ − Γ* X̂₋)`.
    pub fn kernel_into(&self, out: &mut [C64], v: &[C64], gamma: C64, s: &mut KernelScratch) {
        let gc = gamma.conj();
        for ((r, a), b) in s.right.iter_mut().zip(&self.x_left).zip(&self.x_right) {
            *r = gamma * a - gc * b;
        }
        s.tmp.iter_mut().for_each(|z| *z = ZERO);
        mul_acc(&mut s.tmp, v, &s.right, self.n, 1.0);
        out.iter_mut().for_each(|z| *z = ZERO);
        mul_acc(out, &self.outer, &s.tmp, self.n, 1.0);
    }
}

/// `Ŝ(τ_n)` on a uniform grid.
#[derive(Debug, Clone, PartialEq)]
pub struct KernelTrajectory {
    dt: f64,
    kernels: Vec<SuperOperator>,
    /// Kernels from a time-local method; the steady-state generator then uses
    /// `Ŝ(τ)·exp(−L_S τ)`.
    markovian: bool,
}

impl KernelTrajectory {
    pub fn new(dt: f64, kernels: Vec<SuperOperator>, markovian: bool) -> Self {
        Self { dt, kernels, markovian }
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn kernels(&self) -> &[SuperOperator] {
        &self.kernels
    }

    pub fn is_markovian(&self) -> bool {
        self.markovian
    }

    pub fn len(&self) -> usize {
        self.kernels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.kernels.is_empty()
    }
}

/// Rebuilds the kernels belonging to a computed trajectory: NCA kernels from
/// the stored maps for the NCA methods, Born kernels otherwise.
pub fn kernel_trajectory(
    model: &ModelSpec,
    bath: &CorrelationTable,
    traj: &PropagatorTrajectory,
) -> Result<KernelTrajectory, SolverError> {
    let parts = KernelParts::new(model.coupling());
    let mut scratch = KernelScratch::new(parts.n);
    let l = model.liouvillian();
    let bare = NormalExp::try_new(l.matrix()).expect("Liouvillians are normal");
    let mut kernels = Vec::with_capacity(traj.len());
    let mut out = vec![ZERO; parts.nn()];
    for (n, v) in traj.maps().iter().enumerate() {
        let tau = traj.time(n);
        let idx = grid_index(tau, bath.dt())?;
        let gamma = bath.get(idx).ok_or(SolverError::TableTooShort {
            need: idx + 1,
            have: bath.len(),
        })?;
        if traj.method().is_self_consistent() {
            parts.kernel_into(&mut out, v.as_slice(), gamma, &mut scratch);
        } else {
            let u = bare.exp(tau);
            parts.kernel_into(&mut out, u.as_slice(), gamma, &mut scratch);
        }
        kernels.push(SuperOperator::from_column_slice(parts.n, &out, TraceContract::Generator));
    }
    Ok(KernelTrajectory::new(traj.dt(), kernels, traj.method().is_markovian()))
}
