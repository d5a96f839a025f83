//! Born-Markov (Bloch–Redfield) master equation with a finite upper limit on
//! the filtered operator
//!
//! ```text
//! X̃(t) = ∫₀^t dτ Γ(τ) e^{−iH_S τ} X e^{iH_S τ}
//! ∂t ρ = −i[H_S, ρ] − X X̃ ρ + X̃ ρ X + X ρ X̃† − ρ X̃† X
//! ```

use nalgebra::DMatrix;

use crate::bath::CorrelationTable;
use crate::qops::{expm, left_mult, right_mult, Operator, SuperOperator, TraceContract, C64};

use super::{check_grid, Method, ModelSpec, PropagatorTrajectory, SolverError, SolverOptions};

/// Diagonalized `e^{−iHτ}`.
struct Rotation {
    basis: DMatrix<C64>,
    energies: Vec<f64>,
}

impl Rotation {
    fn new(h: &Operator) -> Self {
        let eig = h.matrix().clone().symmetric_eigen();
        Self {
            basis: eig.eigenvectors,
            energies: eig.eigenvalues.iter().copied().collect(),
        }
    }

    /// `e^{−iHτ} X e^{iHτ}`.
    fn heisenberg_back(&self, x: &DMatrix<C64>, tau: f64) -> DMatrix<C64> {
        let d = self.energies.len();
        let xe = self.basis.adjoint() * x * &self.basis;
        let rotated = DMatrix::from_fn(d, d, |i, j| {
            xe[(i, j)] * C64::new(0.0, -(self.energies[i] - self.energies[j]) * tau).exp()
        });
        &self.basis * rotated * self.basis.adjoint()
    }
}

/// `X̃(t_n)` by the trapezoidal rule on the table grid.
pub fn filtered_operator(model: &ModelSpec, bath: &CorrelationTable, n: usize) -> Result<Operator, SolverError> {
    if bath.len() < n + 1 {
        return Err(SolverError::TableTooShort {
            need: n + 1,
            have: bath.len(),
        });
    }
    let rot = Rotation::new(model.hamiltonian());
    let x = model.coupling().matrix();
    let d = model.dim();
    let mut acc = DMatrix::<C64>::zeros(d, d);
    let mut prev = x * bath.values()[0];
    for k in 1..=n {
        let cur = rot.heisenberg_back(x, k as f64 * bath.dt()) * bath.values()[k];
        acc += (&prev + &cur) * C64::new(0.5 * bath.dt(), 0.0);
        prev = cur;
    }
    Ok(Operator::new(acc)?)
}

/// Generator `L_S + D[X̃]` for a given filtered operator.
fn redfield_generator(l_s: &SuperOperator, x: &Operator, filtered: &Operator) -> SuperOperator {
    let fd = filtered.dagger();
    let dissipator = left_mult(x)
        .compose(&right_mult(&fd))
        .add(&left_mult(filtered).compose(&right_mult(x)))
        .sub(&left_mult(&x.matmul(filtered)))
        .sub(&right_mult(&fd.matmul(x)));
    l_s.add(&dissipator.with_contract(TraceContract::Generator))
}

/// Born-Markov dynamical map with default options.
pub fn solve_born_markov(
    model: &ModelSpec,
    bath: &CorrelationTable,
    dt: f64,
    n_steps: usize,
) -> Result<PropagatorTrajectory, SolverError> {
    solve_born_markov_with(model, bath, dt, n_steps, &SolverOptions::default())
}

pub(crate) fn solve_born_markov_with(
    model: &ModelSpec,
    bath: &CorrelationTable,
    dt: f64,
    n_steps: usize,
    opts: &SolverOptions,
) -> Result<PropagatorTrajectory, SolverError> {
    check_grid(bath, dt, n_steps)?;
    if opts.store_stride == 0 {
        return Err(SolverError::InvalidGrid("store_stride must be at least 1".into()));
    }
    let stride = opts.store_stride;
    let rot = Rotation::new(model.hamiltonian());
    let x = model.coupling().clone();
    let l_s = model.liouvillian();
    let d = model.dim();

    let mut maps = vec![SuperOperator::identity(d)];
    let mut v = SuperOperator::identity(d).matrix().clone();
    let mut filtered = DMatrix::<C64>::zeros(d, d);
    let mut integrand = x.matrix() * bath.values()[0];
    for step in 0..n_steps {
        let next = step + 1;
        let g_next = rot.heisenberg_back(x.matrix(), next as f64 * dt) * bath.values()[next];
        let filtered_next = &filtered + (&integrand + &g_next) * C64::new(0.5 * dt, 0.0);
        let mid = Operator::new((&filtered + &filtered_next) * C64::new(0.5, 0.0))?;
        let gen = redfield_generator(&l_s, &x, &mid);
        let prop = expm(&(gen.matrix() * C64::new(dt, 0.0)))?;
        v = prop * v;
        filtered = filtered_next;
        integrand = g_next;

        let blown = v
            .iter()
            .any(|z| !(z.re.is_finite() && z.im.is_finite()) || z.norm() > opts.divergence_threshold);
        if next % stride == 0 || blown {
            maps.push(SuperOperator::new(v.clone(), TraceContract::Map)?);
        }
        if blown {
            if next % stride != 0 {
                maps.pop();
            }
            return Err(SolverError::Diverged {
                step: next,
                time: next as f64 * dt,
                partial: Box::new(PropagatorTrajectory::new(dt * stride as f64, maps, Method::BornMarkov)),
            });
        }
    }
    Ok(PropagatorTrajectory::new(dt * stride as f64, maps, Method::BornMarkov))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bath::BathSpec;
    use crate::dynmaps::engine::solve_born_markov_via_kernels;
    use crate::dynmaps::kernel::born_kernel;
    use crate::qops::NormalExp;

    #[test]
    fn filtered_operator_matches_kernel_route_generator() {
        // L_S + ∫ Ŝ_Born(τ) exp(−L_S τ) dτ  ==  L_S + D[X̃]
        let model = ModelSpec::spin_boson(0.1, 0.05);
        let dt = 0.2;
        let n = 60;
        let bath = BathSpec::ohmic(0.15, 1.0).unwrap().tabulate(dt, n).unwrap();
        let l = model.liouvillian();
        let bare = NormalExp::try_new(l.matrix()).unwrap();
        let mut acc = DMatrix::<C64>::zeros(4, 4);
        for k in 0..=n {
            let w = if k == 0 || k == n { 0.5 * dt } else { dt };
            let s = born_kernel(k as f64 * dt, &model, &bath).unwrap();
            acc += s.matrix() * bare.exp(-(k as f64) * dt) * C64::new(w, 0.0);
        }
        let via_kernels = l.add(&SuperOperator::new(acc, TraceContract::Generator).unwrap());
        let xt = filtered_operator(&model, &bath, n).unwrap();
        let via_filter = redfield_generator(&l, model.coupling(), &xt);
        assert!(via_kernels.max_abs_diff(&via_filter) < 1e-13);
    }

    #[test]
    fn filtered_and_kernel_routes_give_same_dynamics() {
        let model = ModelSpec::spin_boson(0.1, 0.0);
        let dt = 0.1 * std::f64::consts::TAU;
        let n = 200;
        let bath = BathSpec::ohmic(0.1, 1.0).unwrap().tabulate(dt, n).unwrap();
        let a = solve_born_markov(&model, &bath, dt, n).unwrap();
        let b = solve_born_markov_via_kernels(&model, &bath, dt, n).unwrap();
        for (va, vb) in a.maps().iter().zip(b.maps()) {
            assert!(va.max_abs_diff(vb) < 1e-11);
        }
    }

    #[test]
    fn filtered_operator_at_zero_time_vanishes() {
        let model = ModelSpec::spin_boson(0.1, 0.0);
        let bath = BathSpec::ohmic(0.1, 1.0).unwrap().tabulate(0.5, 3).unwrap();
        assert_eq!(filtered_operator(&model, &bath, 0).unwrap().max_abs(), 0.0);
        assert!(filtered_operator(&model, &bath, 9).is_err());
    }
}
