//! Sweep pipelines. Every sweep point is independent; points run on a rayon
//! pool and results are gathered in sweep order, so outputs do not depend on
//! scheduling.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use ncamaps::bath::{BathSpec, CorrelationTable};
use ncamaps::dynmaps::{
    convergence_study, io as traj_io, kernel_trajectory, solve, Method, ModelSpec, PropagatorTrajectory,
    SolverError, SolverOptions,
};
use ncamaps::observables::{
    evolve_expectations, regression_correlation, spectrum_cz, steady_state, susceptibility_and_transmission,
    ObservableError,
};
use ncamaps::qops::Operator;
use rayon::prelude::*;
use thiserror::Error;

use crate::config::SimulationConfig;
use crate::manifest::{RunManifest, RunRecord, RunStatus, MANIFEST_FILE};

const TAU: f64 = std::f64::consts::TAU;

#[derive(Debug, Error)]
pub enum RunError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("output directory {0} is not empty (pass --overwrite to replace a previous run)")]
    OutputNotEmpty(PathBuf),
    #[error("cannot start worker pool: {0}")]
    Pool(String),
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> RunError + '_ {
    move |source| RunError::Io {
        path: path.to_path_buf(),
        source,
    }
}

/// Where and how a pipeline runs.
#[derive(Debug, Clone)]
pub struct RunOptions {
    pub out_dir: PathBuf,
    pub workers: usize,
    /// Remove the files of a previous run listed in its manifest first.
    pub overwrite: bool,
}

impl RunOptions {
    pub fn new(out_dir: impl Into<PathBuf>) -> Self {
        Self {
            out_dir: out_dir.into(),
            workers: std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1),
            overwrite: false,
        }
    }
}

/// Environment variable naming the default output directory.
pub const OUT_DIR_ENV: &str = "NCAMAPS_OUT";

/// `--out`, then `output.directory`, then `$NCAMAPS_OUT`, then `ncamaps-out`.
pub fn resolve_out_dir(cli: Option<&Path>, config: &SimulationConfig) -> PathBuf {
    cli.map(Path::to_path_buf)
        .or_else(|| config.output.directory.clone())
        .or_else(|| std::env::var_os(OUT_DIR_ENV).map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from("ncamaps-out"))
}

fn prepare_out_dir(opts: &RunOptions) -> Result<(), RunError> {
    let dir = &opts.out_dir;
    fs::create_dir_all(dir).map_err(io_err(dir))?;
    if opts.overwrite {
        if let Ok(previous) = RunManifest::read(dir) {
            for f in previous.files() {
                let p = dir.join(f);
                if p.exists() {
                    fs::remove_file(&p).map_err(io_err(&p))?;
                }
            }
            let p = dir.join(MANIFEST_FILE);
            fs::remove_file(&p).map_err(io_err(&p))?;
        }
    }
    let mut entries = fs::read_dir(dir).map_err(io_err(dir))?;
    if entries.next().is_some() {
        return Err(RunError::OutputNotEmpty(dir.clone()));
    }
    Ok(())
}

/// Physical setup shared by every point of a run, in solver units.
struct Setup<'a> {
    config: &'a SimulationConfig,
    /// `2π/ω_c`: converts configuration times to solver times.
    time_unit: f64,
}

impl<'a> Setup<'a> {
    fn new(config: &'a SimulationConfig) -> Self {
        Self {
            config,
            time_unit: TAU / config.bath.omega_c,
        }
    }

    fn model(&self, epsilon: f64) -> ModelSpec {
        let wc = self.config.bath.omega_c;
        ModelSpec::spin_boson(self.config.model.delta * wc, epsilon * wc)
    }

    fn bath(&self, alpha: f64) -> BathSpec {
        let b = &self.config.bath;
        BathSpec::new(b.kind, alpha, b.omega_c, b.temperature * b.omega_c).expect("validated configuration")
    }

    fn options(&self) -> SolverOptions {
        let s = &self.config.solver;
        SolverOptions {
            corrector_tol: s.corrector_tol,
            max_corrector_iters: s.max_corrector_iters,
            divergence_threshold: s.divergence_threshold,
            store_stride: 1,
            nca_seed_time: s.nca_seed_time.map(|t| t * self.time_unit),
        }
    }

    /// Solver step, step count and correlation table for a run of `t_max`.
    fn grid(&self, alpha: f64, dt: f64, t_max: f64) -> (f64, usize, CorrelationTable) {
        let n = ((t_max / dt).round() as usize).max(1);
        let step = dt * self.time_unit;
        let table = self.bath(alpha).tabulate(step, n).expect("validated configuration");
        (step, n, table)
    }

    fn solve(&self, method: Method, model: &ModelSpec, alpha: f64, dt: f64, t_max: f64) -> Result<(PropagatorTrajectory, CorrelationTable), SolverError> {
        let (step, n, table) = self.grid(alpha, dt, t_max);
        let traj = solve(method, model, &table, step, n, &self.options())?;
        Ok((traj, table))
    }

    fn in_config_time(&self, t: f64) -> f64 {
        t / self.time_unit
    }
}

fn run_parallel<T: Sync, R: Send>(workers: usize, tasks: &[T], f: impl Fn(&T) -> R + Sync) -> Result<Vec<R>, RunError> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers.max(1))
        .build()
        .map_err(|e| RunError::Pool(e.to_string()))?;
    Ok(pool.install(|| tasks.par_iter().map(&f).collect()))
}

fn point_name(method: Method, alpha: f64) -> String {
    format!("{}_alpha{}", method.as_str(), alpha)
}

/// Times on the output grid, trimmed of round-off.
fn fmt_time(t: f64) -> String {
    ((t * 1e9).round() / 1e9).to_string()
}

fn write_file(dir: &Path, name: &str, contents: &str) -> Result<(), RunError> {
    let path = dir.join(name);
    fs::write(&path, contents).map_err(io_err(&path))
}

fn failure_status(e: &SolverError, setup: &Setup) -> RunStatus {
    match e.divergence_time() {
        Some(t) => RunStatus::Diverged {
            time: setup.in_config_time(t),
        },
        None => RunStatus::Failed { message: e.to_string() },
    }
}

fn observable_failure(e: ObservableError) -> RunStatus {
    RunStatus::Failed { message: e.to_string() }
}

fn sweep_points(config: &SimulationConfig) -> Vec<(Method, f64)> {
    config
        .methods
        .iter()
        .flat_map(|&m| config.bath.alpha.iter().map(move |&a| (m, a)))
        .collect()
}

fn finish(manifest: RunManifest, opts: &RunOptions) -> Result<RunManifest, RunError> {
    manifest.write(&opts.out_dir).map_err(io_err(&opts.out_dir))?;
    Ok(manifest)
}

/// `⟨σx⟩(t)`, `⟨σz⟩(t)` and density diagnostics per (method, α); a diverged
/// run keeps the steps computed before the blow-up.
pub fn run_dynamics(config: &SimulationConfig, opts: &RunOptions) -> Result<RunManifest, RunError> {
    prepare_out_dir(opts)?;
    let setup = Setup::new(config);
    let model = setup.model(config.model.epsilon);
    let rho0 = config.initial_state.density_matrix();
    let sx = Operator::sigma_x();
    let sz = Operator::sigma_z();
    let points = sweep_points(config);
    let results = run_parallel(opts.workers, &points, |&(method, alpha)| -> Result<RunRecord, RunError> {
        let start = Instant::now();
        let mut record = RunRecord::new(point_name(method, alpha));
        let dt = config.dt_for(method);
        let traj = match setup.solve(method, &model, alpha, dt, config.grid.t_max) {
            Ok((t, _)) => t,
            Err(e) => {
                record.status = failure_status(&e, &setup);
                match e {
                    SolverError::Diverged { partial, .. } => *partial,
                    _ => {
                        record.wall_time = start.elapsed().as_secs_f64();
                        return Ok(record);
                    }
                }
            }
        };
        let e = evolve_expectations(&traj, &rho0, &[("sx", &sx), ("sz", &sz)]).expect("qubit operators");
        let mut csv = String::from("t,sx,sz,trace,min_eig,purity\n");
        for (n, d) in e.diagnostics.iter().enumerate() {
            let _ = writeln!(
                csv,
                "{},{},{},{},{},{}",
                fmt_time(n as f64 * dt),
                e.series[0].values()[n],
                e.series[1].values()[n],
                d.trace,
                d.min_eigenvalue,
                d.purity
            );
        }
        let file = format!("dynamics_{}.csv", record.name);
        write_file(&opts.out_dir, &file, &csv)?;
        record.files.push(file);
        if config.output.checkpoints {
            let file = format!("propagator_{}.bin", record.name);
            let path = opts.out_dir.join(&file);
            let f = fs::File::create(&path).map_err(io_err(&path))?;
            traj_io::write_trajectory(&traj, std::io::BufWriter::new(f)).map_err(io_err(&path))?;
            record.files.push(file);
        }
        record.note("min_eigenvalue", e.min_eigenvalue());
        record.wall_time = start.elapsed().as_secs_f64();
        Ok(record)
    })?;
    let mut manifest = RunManifest::new("dynamics", config.to_text());
    for r in results {
        manifest.records.push(r?);
    }
    finish(manifest, opts)
}

/// Null-space steady state per (method, α), one CSV per method.
pub fn run_steady_sweep(config: &SimulationConfig, opts: &RunOptions) -> Result<RunManifest, RunError> {
    prepare_out_dir(opts)?;
    let setup = Setup::new(config);
    let model = setup.model(config.model.epsilon);
    let points = sweep_points(config);
    let results = run_parallel(opts.workers, &points, |&(method, alpha)| {
        let start = Instant::now();
        let mut record = RunRecord::new(point_name(method, alpha));
        let mut row = None;
        match setup.solve(method, &model, alpha, config.dt_for(method), config.grid.t_max) {
            Err(e) => record.status = failure_status(&e, &setup),
            Ok((traj, table)) => {
                let ss = kernel_trajectory(&model, &table, &traj)
                    .map_err(|e| failure_status(&e, &setup))
                    .and_then(|k| steady_state(&model, &k).map_err(observable_failure));
                match ss {
                    Err(status) => record.status = status,
                    Ok(ss) => {
                        if ss.nearly_singular {
                            record.note("warning", format!("nearly singular, separation {}", ss.separation));
                        }
                        record.note("tail_fraction", ss.tail_fraction);
                        row = Some((
                            Operator::sigma_x().trace_product(&ss.rho).re,
                            Operator::sigma_z().trace_product(&ss.rho).re,
                        ));
                    }
                }
            }
        }
        record.wall_time = start.elapsed().as_secs_f64();
        (method, alpha, record, row)
    })?;
    let mut manifest = RunManifest::new("steady", config.to_text());
    for &method in &config.methods {
        let file = format!("steady_{}.csv", method.as_str());
        let mut csv = String::from("alpha,sx_steady,sz_steady\n");
        for (_, alpha, _, row) in results.iter().filter(|r| r.0 == method) {
            if let Some((x, z)) = row {
                let _ = writeln!(csv, "{alpha},{x},{z}");
            }
        }
        write_file(&opts.out_dir, &file, &csv)?;
        let mut first = true;
        for (_, _, record, _) in results.iter().filter(|r| r.0 == method) {
            let mut record = record.clone();
            if first {
                record.files.push(file.clone());
                first = false;
            }
            manifest.records.push(record);
        }
    }
    finish(manifest, opts)
}

/// Regression-theorem spectrum of one model: `(C_z, χ, T)` on `omega`.
struct SpectralResult {
    cz: Vec<f64>,
    chi: Vec<ncamaps::qops::C64>,
    t2: Vec<f64>,
    warnings: Vec<String>,
}

fn spectral_point(
    setup: &Setup,
    method: Method,
    alpha: f64,
    epsilon: f64,
    omega: &[f64],
) -> Result<SpectralResult, RunStatus> {
    let config = setup.config;
    let model = setup.model(epsilon);
    let (traj, table) = setup
        .solve(method, &model, alpha, config.grid.dt, config.spectrum.t_max)
        .map_err(|e| failure_status(&e, setup))?;
    let kernels = kernel_trajectory(&model, &table, &traj).map_err(|e| failure_status(&e, setup))?;
    let ss = steady_state(&model, &kernels).map_err(observable_failure)?;
    let x = model.coupling();
    let f = regression_correlation(&traj, x, &ss.rho).map_err(observable_failure)?;
    // configuration frequencies are in ω_c, the time grid in solver units
    let wc = config.bath.omega_c;
    let omega_lib: Vec<f64> = omega.iter().map(|w| w * wc).collect();
    let eta = config.spectrum.eta * wc;
    let cz = spectrum_cz(&f, eta, &omega_lib).map_err(observable_failure)?;
    let (chi, t) = susceptibility_and_transmission(&f, eta, &omega_lib, config.transmission.n_coupling)
        .map_err(observable_failure)?;
    let mut warnings = Vec::new();
    if cz.insufficient_window() {
        warnings.push(format!("damping window leaves exp(-eta T) = {:e}", cz.window_residual));
    }
    if ss.nearly_singular {
        warnings.push(format!("steady state nearly singular, separation {}", ss.separation));
    }
    Ok(SpectralResult {
        cz: cz.real_parts(),
        chi: chi.values,
        t2: t.abs2(),
        warnings,
    })
}

/// `C_z(ω)`, `χ(ω)` and `|T(ω)|²` per (method, α).
pub fn run_spectrum(config: &SimulationConfig, opts: &RunOptions) -> Result<RunManifest, RunError> {
    prepare_out_dir(opts)?;
    let setup = Setup::new(config);
    let omega = config.spectrum.omega.values();
    let points = sweep_points(config);
    let results = run_parallel(opts.workers, &points, |&(method, alpha)| -> Result<RunRecord, RunError> {
        let start = Instant::now();
        let mut record = RunRecord::new(point_name(method, alpha));
        match spectral_point(&setup, method, alpha, config.model.epsilon, &omega) {
            Err(status) => record.status = status,
            Ok(s) => {
                let mut csv = String::from("omega,cz,re_chi,im_chi,t2\n");
                for k in 0..omega.len() {
                    let _ = writeln!(csv, "{},{},{},{},{}", omega[k], s.cz[k], s.chi[k].re, s.chi[k].im, s.t2[k]);
                }
                let file = format!("spectrum_{}.csv", record.name);
                write_file(&opts.out_dir, &file, &csv)?;
                record.files.push(file);
                for w in s.warnings {
                    record.note("warning", w);
                }
            }
        }
        record.wall_time = start.elapsed().as_secs_f64();
        Ok(record)
    })?;
    let mut manifest = RunManifest::new("spectrum", config.to_text());
    for r in results {
        manifest.records.push(r?);
    }
    finish(manifest, opts)
}

/// `|T(ω)|²` over the (ε, ω) plane per (method, α); one record per ε point.
pub fn run_transmission_map(config: &SimulationConfig, opts: &RunOptions) -> Result<RunManifest, RunError> {
    prepare_out_dir(opts)?;
    let setup = Setup::new(config);
    let omega = config.transmission.omega.values();
    let epsilon = config.transmission.epsilon.values();
    let tasks: Vec<(Method, f64, f64)> = sweep_points(config)
        .into_iter()
        .flat_map(|(m, a)| epsilon.iter().map(move |&e| (m, a, e)))
        .collect();
    let results = run_parallel(opts.workers, &tasks, |&(method, alpha, eps)| {
        let start = Instant::now();
        let mut record = RunRecord::new(format!("{}_epsilon{}", point_name(method, alpha), eps));
        let t2 = match spectral_point(&setup, method, alpha, eps, &omega) {
            Err(status) => {
                record.status = status;
                None
            }
            Ok(s) => {
                for w in s.warnings {
                    record.note("warning", w);
                }
                Some(s.t2)
            }
        };
        record.wall_time = start.elapsed().as_secs_f64();
        (record, t2)
    })?;
    let mut manifest = RunManifest::new("transmission", config.to_text());
    let mut chunks = results.into_iter();
    for (method, alpha) in sweep_points(config) {
        let file = format!("transmission_{}.csv", point_name(method, alpha));
        let mut csv = String::from("epsilon,omega,t2\n");
        let mut records = Vec::with_capacity(epsilon.len());
        for &eps in &epsilon {
            let (record, t2) = chunks.next().expect("one result per task");
            if let Some(t2) = t2 {
                for (w, v) in omega.iter().zip(t2) {
                    let _ = writeln!(csv, "{eps},{w},{v}");
                }
            }
            records.push(record);
        }
        write_file(&opts.out_dir, &file, &csv)?;
        records[0].files.push(file);
        manifest.records.extend(records);
    }
    finish(manifest, opts)
}

/// Self-convergence of `⟨σz⟩(t)` over `convergence.dt_list` per (method, α).
pub fn run_convergence(config: &SimulationConfig, opts: &RunOptions) -> Result<RunManifest, RunError> {
    prepare_out_dir(opts)?;
    let setup = Setup::new(config);
    let model = setup.model(config.model.epsilon);
    let rho0 = config.initial_state.density_matrix();
    let dts: Vec<f64> = config.convergence.dt_list.iter().map(|d| d * setup.time_unit).collect();
    let points = sweep_points(config);
    let results = run_parallel(opts.workers, &points, |&(method, alpha)| -> Result<RunRecord, RunError> {
        let start = Instant::now();
        let mut record = RunRecord::new(point_name(method, alpha));
        let study = convergence_study(
            method,
            &model,
            &setup.bath(alpha),
            &dts,
            config.convergence.t_max * setup.time_unit,
            &rho0,
            &Operator::sigma_z(),
        );
        match study {
            Err(e) => record.status = failure_status(&e, &setup),
            Ok(study) => {
                let mut csv = String::from("dt,sup_diff,local_order\n");
                let opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
                for (row, dt) in study.rows.iter().zip(&config.convergence.dt_list) {
                    let _ = writeln!(csv, "{dt},{},{}", opt(row.sup_diff), opt(row.local_order));
                }
                let file = format!("convergence_{}.csv", record.name);
                write_file(&opts.out_dir, &file, &csv)?;
                record.files.push(file);
                record.note("fitted_order", opt(study.fitted_order));
            }
        }
        record.wall_time = start.elapsed().as_secs_f64();
        Ok(record)
    })?;
    let mut manifest = RunManifest::new("convergence", config.to_text());
    for r in results {
        manifest.records.push(r?);
    }
    finish(manifest, opts)
}
