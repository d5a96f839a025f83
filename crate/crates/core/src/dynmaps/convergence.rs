//! Self-convergence in the time step.

use crate::bath::BathSpec;
use crate::qops::Operator;

use super::{solve, Method, ModelSpec, SolverError, SolverOptions};

#[derive(Debug, Clone, PartialEq)]
pub struct ConvergenceRow {
    pub dt: f64,
    /// Sup-norm difference of the observable against the next finer step, on
    /// the coarsest grid.
    pub sup_diff: Option<f64>,
    /// `log(d_i / d_{i+1}) / log(dt_i / dt_{i+1})` for consecutive rows.
    pub local_order: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConvergenceStudy {
    pub method: Method,
    pub rows: Vec<ConvergenceRow>,
    /// Least-squares slope of `log d` against `log dt`.
    pub fitted_order: Option<f64>,
}

/// Runs `method` at every step in `dt_list` (descending, each an integer
/// refinement of the first) up to `t_max` and compares `tr[O ρ(t)]` on the
/// coarsest grid.
pub fn convergence_study(
    method: Method,
    model: &ModelSpec,
    bath: &BathSpec,
    dt_list: &[f64],
    t_max: f64,
    rho0: &Operator,
    observable: &Operator,
) -> Result<ConvergenceStudy, SolverError> {
    if dt_list.len() < 2 {
        return Err(SolverError::InvalidGrid("need at least two time steps".into()));
    }
    if dt_list.windows(2).any(|w| !(w[0] > w[1])) {
        return Err(SolverError::InvalidGrid("dt_list must be strictly descending".into()));
    }
    let coarse = dt_list[0];
    let n_coarse = (t_max / coarse).round() as usize;
    let mut series = Vec::with_capacity(dt_list.len());
    for &dt in dt_list {
        let ratio = coarse / dt;
        let r = ratio.round();
        if (ratio - r).abs() > 1e-9 * ratio {
            return Err(SolverError::InvalidGrid(format!(
                "dt {dt} does not divide the coarsest step {coarse}"
            )));
        }
        let r = r as usize;
        let n_steps = n_coarse * r;
        let table = bath.tabulate(dt, n_steps)?;
        let opts = SolverOptions {
            store_stride: r,
            ..SolverOptions::default()
        };
        let traj = solve(method, model, &table, dt, n_steps, &opts)?;
        let values = traj
            .maps()
            .iter()
            .map(|v| v.apply(rho0).map(|rho| observable.trace_product(&rho).re))
            .collect::<Result<Vec<f64>, _>>()?;
        series.push(values);
    }
    let diffs: Vec<f64> = series
        .windows(2)
        .map(|w| {
            w[0].iter()
                .zip(&w[1])
                .map(|(a, b)| (a - b).abs())
                .fold(0.0, f64::max)
        })
        .collect();
    let mut rows: Vec<ConvergenceRow> = dt_list
        .iter()
        .enumerate()
        .map(|(i, &dt)| ConvergenceRow {
            dt,
            sup_diff: diffs.get(i).copied(),
            local_order: None,
        })
        .collect();
    for i in 0..diffs.len().saturating_sub(1) {
        let (d0, d1) = (diffs[i], diffs[i + 1]);
        if d0 > 0.0 && d1 > 0.0 {
            rows[i].local_order = Some((d0 / d1).ln() / (dt_list[i] / dt_list[i + 1]).ln());
        }
    }
    let points: Vec<(f64, f64)> = diffs
        .iter()
        .zip(dt_list)
        .filter(|(d, _)| **d > 0.0)
        .map(|(d, dt)| (dt.ln(), d.ln()))
        .collect();
    let fitted_order = if points.len() >= 2 {
        let n = points.len() as f64;
        let mx = points.iter().map(|p| p.0).sum::<f64>() / n;
        let my = points.iter().map(|p| p.1).sum::<f64>() / n;
        let sxy: f64 = points.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
        let sxx: f64 = points.iter().map(|p| (p.0 - mx).powi(2)).sum();
        Some(sxy / sxx)
    } else {
        None
    };
    Ok(ConvergenceStudy {
        method,
        rows,
        fitted_order,
    })
}
