//! Physics read out of dynamical maps: expectation values, steady states,
//! regression-theorem correlations, spectra, transmission and a couple of
//! analyzers for `⟨σz⟩(t)`.

use nalgebra::DMatrix;
use thiserror::Error;

use crate::bath::BathSpec;
use crate::dynmaps::{KernelTrajectory, ModelSpec, PropagatorTrajectory};
use crate::qops::{
    density_diagnostics, devectorize, left_mult, right_mult, vectorize, AlgebraError, DensityDiagnostics,
    NormalExp, Operator, C64, ZERO,
};

#[derive(Debug, Error)]
pub enum ObservableError {
    #[error(transparent)]
    Algebra(#[from] AlgebraError),
    #[error("steady state is degenerate: two smallest singular values {0:e} and {1:e}")]
    DegenerateNullSpace(f64, f64),
    #[error("steady-state candidate has vanishing trace")]
    ZeroTrace,
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("empty input")]
    Empty,
}

/// Uniformly sampled series starting at `t = 0`.
#[derive(Debug, Clone, PartialEq)]
pub struct TimeSeries<T = f64> {
    dt: f64,
    values: Vec<T>,
    label: String,
}

impl<T: Copy> TimeSeries<T> {
    pub fn new(dt: f64, values: Vec<T>, label: impl Into<String>) -> Self {
        Self {
            dt,
            values,
            label: label.into(),
        }
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn values(&self) -> &[T] {
        &self.values
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn time(&self, n: usize) -> f64 {
        n as f64 * self.dt
    }

    pub fn times(&self) -> Vec<f64> {
        (0..self.len()).map(|n| self.time(n)).collect()
    }

    pub fn last(&self) -> Option<T> {
        self.values.last().copied()
    }
}

impl TimeSeries<C64> {
    /// `F(t_n)` for either sign of `n`, using `F(−t) = F(t)*`.
    pub fn at_signed(&self, n: isize) -> Option<C64> {
        let v = *self.values.get(n.unsigned_abs())?;
        Some(if n < 0 { v.conj() } else { v })
    }

    /// `C(t) = ½(F(t) − F(t)*)`.
    pub fn commutator_part(&self) -> TimeSeries<C64> {
        let values = self.values.iter().map(|f| (f - f.conj()) * 0.5).collect();
        TimeSeries::new(self.dt, values, format!("{}_commutator", self.label))
    }
}

#[derive(Debug, Clone)]
pub struct Expectations {
    pub series: Vec<TimeSeries>,
    pub diagnostics: Vec<DensityDiagnostics>,
}

impl Expectations {
    pub fn get(&self, label: &str) -> Option<&TimeSeries> {
        self.series.iter().find(|s| s.label() == label)
    }

    pub fn min_eigenvalue(&self) -> f64 {
        self.diagnostics.iter().map(|d| d.min_eigenvalue).fold(f64::INFINITY, f64::min)
    }

    pub fn max_hermiticity_defect(&self) -> f64 {
        self.diagnostics.iter().map(|d| d.hermiticity_defect).fold(0.0, f64::max)
    }

    pub fn max_trace_error(&self) -> f64 {
        self.diagnostics.iter().map(|d| (d.trace - 1.0).abs()).fold(0.0, f64::max)
    }
}

/// `tr[O_i ρ(t_n)]` for every stored map, plus density diagnostics of `ρ(t_n)`.
pub fn evolve_expectations(
    traj: &PropagatorTrajectory,
    rho0: &Operator,
    ops: &[(&str, &Operator)],
) -> Result<Expectations, ObservableError> {
    let mut values = vec![Vec::with_capacity(traj.len()); ops.len()];
    let mut diagnostics = Vec::with_capacity(traj.len());
    for v in traj.maps() {
        let rho = v.apply(rho0)?;
        for ((_, op), out) in ops.iter().zip(values.iter_mut()) {
            if op.dim() != rho.dim() {
                return Err(AlgebraError::DimensionMismatch {
                    expected: rho.dim(),
                    found: op.dim(),
                }
                .into());
            }
            out.push(op.trace_product(&rho).re);
        }
        diagnostics.push(density_diagnostics(&rho));
    }
    let series = ops
        .iter()
        .zip(values)
        .map(|((label, _), v)| TimeSeries::new(traj.dt(), v, *label))
        .collect();
    Ok(Expectations { series, diagnostics })
}

#[derive(Debug, Clone)]
pub struct SteadyState {
    pub rho: Operator,
    /// Singular values of the steady-state generator, ascending.
    pub singular_values: Vec<f64>,
    /// `σ₂/σ₁`.
    pub separation: f64,
    /// Separation below 10.
    pub nearly_singular: bool,
    /// Norm of the last tenth of the kernel integral relative to the whole.
    pub tail_fraction: f64,
}

/// Null vector of `L_S + ∫ Ŝ(τ) dτ` (trapezoid over the stored kernels).
/// Time-local kernels enter as `Ŝ(τ) e^{−L_S τ}`.
pub fn steady_state(model: &ModelSpec, kernels: &KernelTrajectory) -> Result<SteadyState, ObservableError> {
    let ks = kernels.kernels();
    if ks.is_empty() {
        return Err(ObservableError::Empty);
    }
    let l = model.liouvillian();
    let n = l.size();
    let dt = kernels.dt();
    let bare = if kernels.is_markovian() {
        Some(NormalExp::try_new(l.matrix()).expect("Liouvillians are normal"))
    } else {
        None
    };
    let last = ks.len() - 1;
    let tail_start = ks.len() - ks.len().div_ceil(10);
    let mut integral = DMatrix::<C64>::zeros(n, n);
    let mut tail = DMatrix::<C64>::zeros(n, n);
    for (k, s) in ks.iter().enumerate() {
        let w = if last == 0 {
            0.0
        } else if k == 0 || k == last {
            0.5 * dt
        } else {
            dt
        };
        let term = match &bare {
            Some(b) => s.matrix() * b.exp(-(k as f64) * dt),
            None => s.matrix().clone(),
        } * C64::new(w, 0.0);
        if k >= tail_start {
            tail += &term;
        }
        integral += term;
    }
    let total_norm = integral.norm();
    let tail_fraction = if total_norm > 0.0 { tail.norm() / total_norm } else { 0.0 };
    null_space_state(l.matrix() + integral, tail_fraction)
}

fn null_space_state(a: DMatrix<C64>, tail_fraction: f64) -> Result<SteadyState, ObservableError> {
    let svd = a.svd(false, true);
    let v_t = svd.v_t.expect("requested right singular vectors");
    let mut order: Vec<usize> = (0..svd.singular_values.len()).collect();
    order.sort_by(|&i, &j| svd.singular_values[i].total_cmp(&svd.singular_values[j]));
    let singular_values: Vec<f64> = order.iter().map(|&i| svd.singular_values[i]).collect();
    let (s1, s2) = (singular_values[0], singular_values[1]);
    let smax = *singular_values.last().expect("non-empty");
    if s2 <= 1e-10 * smax {
        return Err(ObservableError::DegenerateNullSpace(s1, s2));
    }
    let null = v_t.row(order[0]).adjoint();
    let rho = devectorize(&null)?.hermitian_part();
    let tr = rho.trace().re;
    if tr.abs() < 1e-14 {
        return Err(ObservableError::ZeroTrace);
    }
    let separation = if s1 > 0.0 { s2 / s1 } else { f64::INFINITY };
    Ok(SteadyState {
        rho: rho.scale(C64::new(1.0 / tr, 0.0)),
        singular_values,
        separation,
        nearly_singular: separation < 10.0,
        tail_fraction,
    })
}

/// `F(t_n) = tr[X V̂(t_n)(X ρ_s)]`.
pub fn regression_correlation(
    traj: &PropagatorTrajectory,
    x: &Operator,
    rho_s: &Operator,
) -> Result<TimeSeries<C64>, ObservableError> {
    let source = x.matmul(rho_s);
    let values = traj
        .maps()
        .iter()
        .map(|v| v.apply(&source).map(|r| x.trace_product(&r)))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(TimeSeries::new(traj.dt(), values, "F"))
}

/// Sensitivity of `F(t)` to the preparation time `t′` when the steady state is
/// replaced by `ρ(t′) = V̂(t′)ρ₀`: largest change in `F` when `t′` is doubled.
pub fn regression_preparation_check(
    traj: &PropagatorTrajectory,
    x: &Operator,
    rho0: &Operator,
    prep_index: usize,
) -> Result<f64, ObservableError> {
    let double = 2 * prep_index;
    if double >= traj.len() {
        return Err(ObservableError::InvalidParameter(format!(
            "preparation index {prep_index} needs {} stored maps, have {}",
            double + 1,
            traj.len()
        )));
    }
    let rho_a = traj.maps()[prep_index].apply(rho0)?;
    let rho_b = traj.maps()[double].apply(rho0)?;
    let fa = regression_correlation(traj, x, &rho_a)?;
    let fb = regression_correlation(traj, x, &rho_b)?;
    Ok(fa
        .values()
        .iter()
        .zip(fb.values())
        .map(|(a, b)| (a - b).norm())
        .fold(0.0, f64::max))
}

#[derive(Debug, Clone, PartialEq)]
pub struct Spectrum {
    pub omega: Vec<f64>,
    pub values: Vec<C64>,
    pub eta: f64,
    /// `e^{−ηT}` at the end of the window.
    pub window_residual: f64,
}

impl Spectrum {
    /// The damping window does not suppress the end of the series below 1e-3.
    pub fn insufficient_window(&self) -> bool {
        self.window_residual > 1e-3
    }

    pub fn real_parts(&self) -> Vec<f64> {
        self.values.iter().map(|z| z.re).collect()
    }

    /// `max|Im| / max|Re|`.
    pub fn imaginary_ratio(&self) -> f64 {
        let re = self.values.iter().map(|z| z.re.abs()).fold(0.0, f64::max);
        let im = self.values.iter().map(|z| z.im.abs()).fold(0.0, f64::max);
        if re > 0.0 {
            im / re
        } else if im > 0.0 {
            f64::INFINITY
        } else {
            0.0
        }
    }

    pub fn abs2(&self) -> Vec<f64> {
        self.values.iter().map(|z| z.norm_sqr()).collect()
    }

    /// Grid point of the largest real part.
    pub fn peak(&self) -> Option<(f64, f64)> {
        self.omega
            .iter()
            .zip(&self.values)
            .map(|(&w, z)| (w, z.re))
            .max_by(|a, b| a.1.total_cmp(&b.1))
    }
}

fn check_transform_input(f: &TimeSeries<C64>, eta: f64) -> Result<(), ObservableError> {
    if !(eta > 0.0) {
        return Err(ObservableError::InvalidParameter(format!("eta must be positive, got {eta}")));
    }
    if f.len() < 2 {
        return Err(ObservableError::Empty);
    }
    Ok(())
}

fn trapezoid_weight(n: usize, last: usize, dt: f64) -> f64 {
    if n == 0 || n == last {
        0.5 * dt
    } else {
        dt
    }
}

/// `C_z(ω) = ∫_{−T}^{T} dt e^{iωt − η|t|} C_z(t)` with `C_z(t) = ½(F − F*)`,
/// summed over both signs of `t` by the trapezoidal rule.
pub fn spectrum_cz(f: &TimeSeries<C64>, eta: f64, omega: &[f64]) -> Result<Spectrum, ObservableError> {
    check_transform_input(f, eta)?;
    let c = f.commutator_part();
    let last = c.len() - 1;
    let dt = c.dt();
    let values = omega
        .iter()
        .map(|&w| {
            let mut acc = ZERO;
            for (n, &cn) in c.values().iter().enumerate() {
                let t = n as f64 * dt;
                let weight = trapezoid_weight(n, last, dt) * (-eta * t).exp();
                let phase = C64::new(0.0, w * t).exp();
                // t and −t; the t = 0 node is shared by both halves
                let pair = phase * cn + phase.conj() * (-cn);
                acc += pair * weight;
            }
            acc
        })
        .collect();
    Ok(Spectrum {
        omega: omega.to_vec(),
        values,
        eta,
        window_residual: (-eta * last as f64 * dt).exp(),
    })
}

/// Retarded response `χ(t) = −iθ(t)(F − F*)` transformed with the same window,
/// and `T(ω) = 1 − i N ω χ(ω)`.
pub fn susceptibility_and_transmission(
    f: &TimeSeries<C64>,
    eta: f64,
    omega: &[f64],
    n_coupling: f64,
) -> Result<(Spectrum, Spectrum), ObservableError> {
    check_transform_input(f, eta)?;
    let last = f.len() - 1;
    let dt = f.dt();
    let chi_t: Vec<C64> = f.values().iter().map(|z| -C64::i() * (z - z.conj())).collect();
    let chi: Vec<C64> = omega
        .iter()
        .map(|&w| {
            let mut acc = ZERO;
            for (n, &x) in chi_t.iter().enumerate() {
                let t = n as f64 * dt;
                acc += C64::new(0.0, w * t).exp() * x * (trapezoid_weight(n, last, dt) * (-eta * t).exp());
            }
            acc
        })
        .collect();
    let transmission = omega
        .iter()
        .zip(&chi)
        .map(|(&w, &x)| C64::new(1.0, 0.0) - C64::new(0.0, n_coupling * w) * x)
        .collect();
    let window_residual = (-eta * last as f64 * dt).exp();
    Ok((
        Spectrum {
            omega: omega.to_vec(),
            values: chi,
            eta,
            window_residual,
        },
        Spectrum {
            omega: omega.to_vec(),
            values: transmission,
            eta,
            window_residual,
        },
    ))
}

/// Laplace-domain solution of the Born equation with the untruncated kernel,
///
/// ```text
/// V̂(z) = [z − L_S − Ŝ(z)]⁻¹,   Ŝ(z) = Σ_k (−X̂₊ + X̂₋) P_k [γ(z − λ_k) X̂₊ − γ(z* − λ_k*)* X̂₋]
/// ```
///
/// with `L_S = Σ λ_k P_k` and `γ` the Laplace transform of `Γ`. Gives the
/// infinite-time steady state and spectra for arbitrarily small damping.
#[derive(Debug, Clone)]
pub struct BornResolvent {
    bath: BathSpec,
    l: DMatrix<C64>,
    x: Operator,
    x_left: DMatrix<C64>,
    x_right: DMatrix<C64>,
    eigenvalues: Vec<C64>,
    projectors: Vec<DMatrix<C64>>,
}

impl BornResolvent {
    pub fn new(model: &ModelSpec, bath: &BathSpec) -> Result<Self, ObservableError> {
        let l = model.liouvillian().matrix().clone();
        // iL_S is Hermitian
        let eig = (&l * C64::i()).symmetric_eigen();
        let eigenvalues = eig.eigenvalues.iter().map(|&e| C64::new(0.0, -e)).collect();
        let projectors = eig
            .eigenvectors
            .column_iter()
            .map(|u| &u * u.adjoint())
            .collect();
        let x = model.coupling().clone();
        Ok(Self {
            bath: *bath,
            x_left: left_mult(&x).matrix().clone(),
            x_right: right_mult(&x).matrix().clone(),
            l,
            x,
            eigenvalues,
            projectors,
        })
    }

    /// `Ŝ(z)` for `Re z ≥ 0`.
    pub fn kernel_transform(&self, z: C64) -> Result<DMatrix<C64>, ObservableError> {
        let n = self.l.nrows();
        let mut acc = DMatrix::<C64>::zeros(n, n);
        for (lam, p) in self.eigenvalues.iter().zip(&self.projectors) {
            let s = z - lam;
            let g = self.bath.laplace_correlation(s).map_err(bath_error)?;
            let g_bar = self.bath.laplace_correlation(s.conj()).map_err(bath_error)?.conj();
            acc += p * (&self.x_left * g - &self.x_right * g_bar);
        }
        Ok((&self.x_right - &self.x_left) * acc)
    }

    /// Null vector of `L_S + Ŝ(0⁺)`.
    pub fn steady_state(&self) -> Result<SteadyState, ObservableError> {
        null_space_state(&self.l + self.kernel_transform(ZERO)?, 0.0)
    }

    /// `F(z) = ∫₀^∞ e^{−zt} tr[X V̂(t)(X ρ_s)] dt`.
    pub fn correlation_transform(&self, z: C64, rho_s: &Operator) -> Result<C64, ObservableError> {
        let n = self.l.nrows();
        let m = DMatrix::<C64>::identity(n, n) * z - &self.l - self.kernel_transform(z)?;
        let source = vectorize(&self.x.matmul(rho_s));
        let v = m
            .lu()
            .solve(&source)
            .ok_or_else(|| ObservableError::InvalidParameter(format!("resolvent is singular at z = {z}")))?;
        Ok(self.x.trace_product(&devectorize(&v)?))
    }

    /// `C_z(ω)` with the `e^{−η|t|}` window and an infinite time range.
    pub fn spectrum_cz(&self, rho_s: &Operator, eta: f64, omega: &[f64]) -> Result<Spectrum, ObservableError> {
        if !(eta > 0.0) {
            return Err(ObservableError::InvalidParameter(format!("eta must be positive, got {eta}")));
        }
        // one-sided transform of C(t) = ½(F − F*)
        let c_hat = |z: C64| -> Result<C64, ObservableError> {
            Ok((self.correlation_transform(z, rho_s)? - self.correlation_transform(z.conj(), rho_s)?.conj()) * 0.5)
        };
        let values = omega
            .iter()
            .map(|&w| Ok(c_hat(C64::new(eta, -w))? - c_hat(C64::new(eta, w))?))
            .collect::<Result<Vec<_>, ObservableError>>()?;
        Ok(Spectrum {
            omega: omega.to_vec(),
            values,
            eta,
            window_residual: 0.0,
        })
    }
}

fn bath_error(e: crate::bath::BathError) -> ObservableError {
    ObservableError::InvalidParameter(e.to_string())
}

/// Least-squares slope of `log|Re C(ω)|` against `log ω` over the grid.
pub fn log_log_slope(spectrum: &Spectrum) -> Option<f64> {
    let points: Vec<(f64, f64)> = spectrum
        .omega
        .iter()
        .zip(&spectrum.values)
        .filter(|(w, z)| **w > 0.0 && z.re != 0.0)
        .map(|(w, z)| (w.ln(), z.re.abs().ln()))
        .collect();
    if points.len() < 2 {
        return None;
    }
    let n = points.len() as f64;
    let mx = points.iter().map(|p| p.0).sum::<f64>() / n;
    let my = points.iter().map(|p| p.1).sum::<f64>() / n;
    let sxy: f64 = points.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = points.iter().map(|p| (p.0 - mx).powi(2)).sum();
    Some(sxy / sxx)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Regime {
    Coherent,
    Incoherent,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Classification {
    pub regime: Regime,
    /// Sign changes between excursions outside the ±1% band.
    pub zero_crossings: usize,
    /// Time after which `|⟨σz⟩|` stays inside the band (infinite if never).
    pub decay_time: f64,
    /// The series ends inside the band.
    pub settled: bool,
}

const CROSSING_BAND: f64 = 0.01;

/// Coherent iff the series changes sign at least twice before settling inside
/// ±1% of its initial magnitude. Excursions inside the band do not count, so
/// the result is unchanged by rescaling the series.
pub fn classify_dynamics(sz: &TimeSeries) -> Result<Classification, ObservableError> {
    let z0 = *sz.values().first().ok_or(ObservableError::Empty)?;
    let band = CROSSING_BAND * z0.abs();
    let mut sign = z0.signum();
    let mut crossings = 0;
    for &z in sz.values() {
        if z.abs() > band && z.signum() != sign {
            crossings += 1;
            sign = z.signum();
        }
    }
    let decay_time = relaxation_time(sz, CROSSING_BAND)?;
    Ok(Classification {
        regime: if crossings >= 2 {
            Regime::Coherent
        } else {
            Regime::Incoherent
        },
        zero_crossings: crossings,
        decay_time,
        settled: decay_time.is_finite(),
    })
}

/// First time after which `|z(t)| < threshold·|z(0)|` for the rest of the
/// series; `f64::INFINITY` if the last sample is still outside.
pub fn relaxation_time(sz: &TimeSeries, threshold: f64) -> Result<f64, ObservableError> {
    if !(threshold > 0.0 && threshold < 1.0) {
        return Err(ObservableError::InvalidParameter(format!(
            "threshold must lie in (0, 1), got {threshold}"
        )));
    }
    let z0 = *sz.values().first().ok_or(ObservableError::Empty)?;
    let limit = threshold * z0.abs();
    match sz.values().iter().rposition(|z| z.abs() >= limit) {
        Some(i) if i + 1 == sz.len() => Ok(f64::INFINITY),
        Some(i) => Ok(sz.time(i + 1)),
        None => Ok(0.0),
    }
}

/// Bisects a monotone predicate on `[lo, hi]` (`pred(lo)` false, `pred(hi)`
/// true) down to width `tol` and returns the midpoint of the final bracket.
pub fn bisect_transition<E>(
    mut lo: f64,
    mut hi: f64,
    tol: f64,
    mut pred: impl FnMut(f64) -> Result<bool, E>,
) -> Result<f64, E> {
    while hi - lo > tol {
        let mid = 0.5 * (lo + hi);
        if pred(mid)? {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}
