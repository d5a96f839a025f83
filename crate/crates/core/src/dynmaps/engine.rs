//! Time stepping shared by the NCA, NCA-Markov and Born solvers.
//!
//! Volterra form (NCA, Born): with `K(t) = ∫₀^t Ŝ(t−t₁)V̂(t₁)dt₁` discretized
//! by the composite trapezoidal rule, the exponential trapezoid step
//!
//! ```text
//! V̂ₙ₊₁ = E V̂ₙ + (dt/2)(E Kₙ + Kₙ₊₁),   E = exp(L_S dt)
//! ```
//!
//! is second order and exact when the kernel vanishes. `Kₙ₊₁` depends on
//! `V̂ₙ₊₁` through the `Ŝ₀V̂ₙ₊₁` endpoint and, for NCA, through `Ŝₙ₊₁`; both
//! are resolved by fixed-point iteration.
//!
//! Time-local form (NCA-Markov): `M(t) = ∫₀^t Ŝ(τ)exp(−L_S τ)dτ` is
//! accumulated by the trapezoidal rule and
//!
//! ```text
//! V̂ₙ₊₁ = exp[(L_S + (Mₙ + Mₙ₊₁)/2) dt] V̂ₙ
//! ```
//!
//! with `Mₙ₊₁` iterated to self-consistency with `V̂ₙ₊₁`.

use nalgebra::DMatrix;

use crate::bath::CorrelationTable;
use crate::qops::{expm, mul_acc, mul_into, NormalExp, SuperOperator, TraceContract, C64, ZERO};

use super::kernel::{KernelParts, KernelScratch};
use super::markov::solve_born_markov_with;
use super::{check_grid, Method, ModelSpec, PropagatorTrajectory, SolverError, SolverOptions};

/// Dispatches to the solver for `method`.
pub fn solve(
    method: Method,
    model: &ModelSpec,
    bath: &CorrelationTable,
    dt: f64,
    n_steps: usize,
    opts: &SolverOptions,
) -> Result<PropagatorTrajectory, SolverError> {
    match method {
        Method::Nca => Engine::new(model, bath, dt, n_steps, true, opts)?.run(Method::Nca, false),
        Method::NcaMarkov => Engine::new(model, bath, dt, n_steps, true, opts)?.run(Method::NcaMarkov, true),
        Method::Born => Engine::new(model, bath, dt, n_steps, false, opts)?.run(Method::Born, false),
        Method::BornMarkov => solve_born_markov_with(model, bath, dt, n_steps, opts),
    }
}

/// Self-consistent NCA map.
pub fn solve_nca(
    model: &ModelSpec,
    bath: &CorrelationTable,
    dt: f64,
    n_steps: usize,
) -> Result<PropagatorTrajectory, SolverError> {
    solve(Method::Nca, model, bath, dt, n_steps, &SolverOptions::default())
}

/// Time-local NCA-Markov map, integrated from `t = 0`.
pub fn solve_nca_markov(
    model: &ModelSpec,
    bath: &CorrelationTable,
    dt: f64,
    n_steps: usize,
) -> Result<PropagatorTrajectory, SolverError> {
    solve(Method::NcaMarkov, model, bath, dt, n_steps, &SolverOptions::default())
}

/// Born (second-order, time-nonlocal) master equation at the superoperator
/// level.
pub fn solve_born(
    model: &ModelSpec,
    bath: &CorrelationTable,
    dt: f64,
    n_steps: usize,
) -> Result<PropagatorTrajectory, SolverError> {
    solve(Method::Born, model, bath, dt, n_steps, &SolverOptions::default())
}

/// Born-Markov generator assembled from Born kernels instead of the filtered
/// operator. Used to cross-check [`super::solve_born_markov`].
#[cfg(test)]
pub(crate) fn solve_born_markov_via_kernels(
    model: &ModelSpec,
    bath: &CorrelationTable,
    dt: f64,
    n_steps: usize,
) -> Result<PropagatorTrajectory, SolverError> {
    Engine::new(model, bath, dt, n_steps, false, &SolverOptions::default())?.run(Method::BornMarkov, true)
}

struct Engine<'a> {
    n: usize,
    nn: usize,
    dt: f64,
    n_steps: usize,
    opts: &'a SolverOptions,
    gammas: &'a [C64],
    parts: KernelParts,
    scratch: KernelScratch,
    bare: NormalExp,
    generator: DMatrix<C64>,
    step_exp: Vec<C64>,
    dressed: bool,
    /// `V̂ₘ` for all computed steps, contiguous.
    vs: Vec<C64>,
    /// `Ŝₘ` for all computed steps, contiguous.
    ss: Vec<C64>,
    /// `K` at the latest step.
    memory: Vec<C64>,
    /// `M` and `Ŝ exp(−L_S τ)` at the latest step.
    markov_acc: Vec<C64>,
    markov_integrand: Vec<C64>,
}

fn max_abs_diff(a: &[C64], b: &[C64]) -> f64 {
    a.iter().zip(b).fold(0.0f64, |m, (x, y)| m.max((x - y).norm()))
}

fn is_blown_up(v: &[C64], threshold: f64) -> bool {
    v.iter()
        .any(|z| !(z.re.is_finite() && z.im.is_finite()) || z.norm() > threshold)
}

impl<'a> Engine<'a> {
    fn new(
        model: &ModelSpec,
        bath: &'a CorrelationTable,
        dt: f64,
        n_steps: usize,
        dressed: bool,
        opts: &'a SolverOptions,
    ) -> Result<Self, SolverError> {
        check_grid(bath, dt, n_steps)?;
        if opts.store_stride == 0 {
            return Err(SolverError::InvalidGrid("store_stride must be at least 1".into()));
        }
        let parts = KernelParts::new(model.coupling());
        let n = parts.n;
        let nn = n * n;
        let l = model.liouvillian();
        let bare = NormalExp::try_new(l.matrix()).expect("Liouvillians are normal");
        let step_exp = bare.exp(dt).as_slice().to_vec();
        let mut vs = Vec::with_capacity((n_steps + 1) * nn);
        vs.extend_from_slice(SuperOperator::identity(model.dim()).as_slice());
        let mut engine = Self {
            n,
            nn,
            dt,
            n_steps,
            opts,
            gammas: &bath.values()[..=n_steps],
            scratch: KernelScratch::new(n),
            parts,
            bare,
            generator: l.matrix().clone(),
            step_exp,
            dressed,
            vs,
            ss: Vec::with_capacity((n_steps + 1) * nn),
            memory: vec![ZERO; nn],
            markov_acc: vec![ZERO; nn],
            markov_integrand: vec![ZERO; nn],
        };
        let mut s0 = vec![ZERO; nn];
        engine.kernel(0, &engine.vs[..nn].to_vec(), &mut s0);
        engine.markov_integrand.copy_from_slice(&s0);
        engine.ss.extend_from_slice(&s0);
        Ok(engine)
    }

    fn v(&self, m: usize) -> &[C64] {
        &self.vs[m * self.nn..(m + 1) * self.nn]
    }

    fn s(&self, m: usize) -> &[C64] {
        &self.ss[m * self.nn..(m + 1) * self.nn]
    }

    /// `Ŝ_k` evaluated with `v` as the dressed propagator (ignored for the
    /// bare kernel).
    fn kernel(&mut self, k: usize, v: &[C64], out: &mut [C64]) {
        let gamma = self.gammas[k];
        if self.dressed {
            self.parts.kernel_into(out, v, gamma, &mut self.scratch);
        } else {
            let u = self.bare.exp(k as f64 * self.dt);
            self.parts.kernel_into(out, u.as_slice(), gamma, &mut self.scratch);
        }
    }

    /// `Ŝ_k exp(−L_S τ_k)`.
    fn markov_integrand_into(&self, k: usize, s: &[C64], out: &mut [C64]) {
        let back = self.bare.exp(-(k as f64) * self.dt);
        mul_into(out, s, back.as_slice(), self.n);
    }

    fn run(mut self, method: Method, markovian: bool) -> Result<PropagatorTrajectory, SolverError> {
        let seed_steps = match (markovian, self.opts.nca_seed_time) {
            (true, Some(ts)) if ts > 0.0 => (ts / self.dt).round() as usize,
            _ => 0,
        };
        for step in 0..self.n_steps {
            if markovian && step >= seed_steps {
                self.markov_step(step)?;
            } else {
                self.volterra_step(step)?;
                if markovian {
                    self.track_markov(step + 1);
                }
            }
            let next = step + 1;
            if is_blown_up(self.v(next), self.opts.divergence_threshold) {
                let partial = self.trajectory(method, next);
                return Err(SolverError::Diverged {
                    step: next,
                    time: next as f64 * self.dt,
                    partial: Box::new(partial),
                });
            }
        }
        Ok(self.trajectory(method, self.n_steps + 1))
    }

    /// Stored maps `0..count`, subsampled by the stride.
    fn trajectory(&self, method: Method, count: usize) -> PropagatorTrajectory {
        let stride = self.opts.store_stride;
        let maps = (0..count)
            .step_by(stride)
            .map(|m| SuperOperator::from_column_slice(self.n, self.v(m), TraceContract::Map))
            .collect();
        PropagatorTrajectory::new(self.dt * stride as f64, maps, method)
    }

    fn volterra_step(&mut self, step: usize) -> Result<(), SolverError> {
        let (n, nn, dt) = (self.n, self.nn, self.dt);
        let next = step + 1;

        // Fixed part of the quadrature: Σ_{m=1}^{step} Ŝ_{next−m} V̂_m.
        let mut history = vec![ZERO; nn];
        for m in 1..=step {
            mul_acc(&mut history, self.s(next - m), self.v(m), n, 1.0);
        }

        let mut half = self.v(step).to_vec();
        let mut full = self.v(step).to_vec();
        for ((h, f), k) in half.iter_mut().zip(full.iter_mut()).zip(&self.memory) {
            *h += k * (0.5 * dt);
            *f += k * dt;
        }
        let mut base = vec![ZERO; nn];
        mul_into(&mut base, &self.step_exp, &half, n);
        let mut guess = vec![ZERO; nn];
        mul_into(&mut guess, &self.step_exp, &full, n);

        let s0 = self.s(0).to_vec();
        let mut s_next = vec![ZERO; nn];
        if !self.dressed {
            self.kernel(next, &guess, &mut s_next);
        }
        let mut memory_next = vec![ZERO; nn];
        let mut updated = vec![ZERO; nn];
        let mut residual = f64::INFINITY;
        for _ in 0..self.opts.max_corrector_iters {
            if self.dressed {
                self.kernel(next, &guess, &mut s_next);
            }
            for ((k, s), h) in memory_next.iter_mut().zip(&s_next).zip(&history) {
                *k = (s * 0.5 + h) * dt;
            }
            mul_acc(&mut memory_next, &s0, &guess, n, 0.5 * dt);
            for ((u, b), k) in updated.iter_mut().zip(&base).zip(&memory_next) {
                *u = b + k * (0.5 * dt);
            }
            residual = max_abs_diff(&updated, &guess);
            std::mem::swap(&mut guess, &mut updated);
            if residual < self.opts.corrector_tol {
                break;
            }
            if !residual.is_finite() {
                break;
            }
        }
        if residual >= self.opts.corrector_tol && residual.is_finite() {
            return Err(SolverError::NonConvergent {
                step: next,
                time: next as f64 * dt,
                residual,
            });
        }

        // Kernel and memory consistent with the accepted map.
        if self.dressed {
            self.kernel(next, &guess, &mut s_next);
        }
        for ((k, s), h) in memory_next.iter_mut().zip(&s_next).zip(&history) {
            *k = (s * 0.5 + h) * dt;
        }
        mul_acc(&mut memory_next, &s0, &guess, n, 0.5 * dt);
        self.memory = memory_next;
        self.accept(next, &guess, &s_next);
        Ok(())
    }

    fn markov_step(&mut self, step: usize) -> Result<(), SolverError> {
        let (n, nn, dt) = (self.n, self.nn, self.dt);
        let next = step + 1;
        let acc = self.markov_acc.clone();
        let integrand = self.markov_integrand.clone();
        let v_now = self.v(step).to_vec();

        let mut s_next = vec![ZERO; nn];
        let mut g_next = vec![ZERO; nn];
        let mut acc_next = vec![ZERO; nn];
        let trapezoid = |acc_next: &mut [C64], g_next: &[C64]| {
            for ((a, m), (g0, g1)) in acc_next.iter_mut().zip(&acc).zip(integrand.iter().zip(g_next)) {
                *a = m + (g0 + g1) * (0.5 * dt);
            }
        };
        if self.dressed {
            // Predictor: explicit rectangle rule for the new accumulator.
            for ((a, m), g) in acc_next.iter_mut().zip(&acc).zip(&integrand) {
                *a = m + g * dt;
            }
        } else {
            self.kernel(next, &v_now, &mut s_next);
            self.markov_integrand_into(next, &s_next, &mut g_next);
            trapezoid(&mut acc_next, &g_next);
        }

        let mut accepted: Option<Vec<C64>> = None;
        let mut residual = f64::INFINITY;
        for _ in 0..self.opts.max_corrector_iters {
            let mut gen = self.generator.clone();
            for (z, (a, b)) in gen.iter_mut().zip(acc.iter().zip(&acc_next)) {
                *z += (a + b) * 0.5;
            }
            let prop = expm(&(gen * C64::new(dt, 0.0)))?;
            let mut candidate = vec![ZERO; nn];
            mul_into(&mut candidate, prop.as_slice(), &v_now, n);
            if let Some(prev) = &accepted {
                residual = max_abs_diff(&candidate, prev);
            }
            if !self.dressed {
                accepted = Some(candidate);
                residual = 0.0;
                break;
            }
            self.kernel(next, &candidate, &mut s_next);
            self.markov_integrand_into(next, &s_next, &mut g_next);
            trapezoid(&mut acc_next, &g_next);
            let blown = is_blown_up(&candidate, self.opts.divergence_threshold);
            accepted = Some(candidate);
            if residual < self.opts.corrector_tol || blown {
                residual = 0.0;
                break;
            }
        }
        if residual >= self.opts.corrector_tol {
            return Err(SolverError::NonConvergent {
                step: next,
                time: next as f64 * dt,
                residual,
            });
        }
        self.markov_acc = acc_next;
        self.markov_integrand = g_next;
        self.accept(next, &accepted.expect("at least one iteration"), &s_next);
        Ok(())
    }

    fn accept(&mut self, next: usize, v: &[C64], s: &[C64]) {
        debug_assert_eq!(self.vs.len(), next * self.nn);
        self.vs.extend_from_slice(v);
        self.ss.extend_from_slice(s);
    }

    /// Advances the time-local accumulator after a Volterra step, so a seeded
    /// NCA-Markov run can switch over.
    fn track_markov(&mut self, next: usize) {
        let s = self.s(next).to_vec();
        let mut g = vec![ZERO; self.nn];
        self.markov_integrand_into(next, &s, &mut g);
        for ((a, g0), g1) in self.markov_acc.iter_mut().zip(&self.markov_integrand).zip(&g) {
            *a += (g0 + g1) * (0.5 * self.dt);
        }
        self.markov_integrand = g;
    }
}
