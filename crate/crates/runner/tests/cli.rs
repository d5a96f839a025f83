use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use ncamaps_runner::config::SimulationConfig;
use ncamaps_runner::manifest::{RunManifest, RunStatus, MANIFEST_FILE};
use ncamaps_runner::pipelines::{run_convergence, run_dynamics, run_steady_sweep, RunOptions};

fn ncamaps(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_ncamaps"))
        .args(args)
        .env_remove("NCAMAPS_OUT")
        .output()
        .expect("binary runs")
}

fn small_config(extra: &str) -> SimulationConfig {
    SimulationConfig::parse(&format!("methods = nca\nalpha = 0.1, 0.3\ndt = 0.2\nt_max = 20\n{extra}")).unwrap()
}

fn options(dir: &Path, workers: usize) -> RunOptions {
    let mut o = RunOptions::new(dir);
    o.workers = workers;
    o
}

#[test]
fn outputs_do_not_depend_on_worker_count() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let config = small_config("methods = nca, born_markov\n");
    let ma = run_dynamics(&config, &options(a.path(), 1)).unwrap();
    let mb = run_dynamics(&config, &options(b.path(), 3)).unwrap();
    let names = ma.files();
    assert_eq!(names, mb.files());
    assert_eq!(names.len(), 4);
    for f in names {
        let x = fs::read(a.path().join(f)).unwrap();
        let y = fs::read(b.path().join(f)).unwrap();
        assert_eq!(x, y, "{f} differs");
    }
}

#[test]
fn manifest_lists_every_point_and_echoes_config() {
    let dir = tempfile::tempdir().unwrap();
    let config = small_config("");
    let m = run_dynamics(&config, &options(dir.path(), 2)).unwrap();
    let back = RunManifest::read(dir.path()).unwrap();
    assert_eq!(back.files(), m.files());
    assert_eq!(back.records.len(), 2);
    assert!(back.all_completed());
    let echoed = SimulationConfig::parse(&back.config).unwrap();
    assert_eq!(echoed, config);
    for f in back.files() {
        assert!(dir.path().join(f).is_file());
    }
    let csv = fs::read_to_string(dir.path().join("dynamics_nca_alpha0.1.csv")).unwrap();
    let mut lines = csv.lines();
    assert_eq!(lines.next(), Some("t,sx,sz,trace,min_eig,purity"));
    assert_eq!(lines.count(), 101);
}

#[test]
fn refuses_non_empty_directory_unless_overwriting() {
    let dir = tempfile::tempdir().unwrap();
    let config = small_config("alpha = 0.1\n");
    run_dynamics(&config, &options(dir.path(), 1)).unwrap();
    assert!(run_dynamics(&config, &options(dir.path(), 1)).is_err());
    let mut o = options(dir.path(), 1);
    o.overwrite = true;
    run_steady_sweep(&config, &o).unwrap();
    let left: Vec<_> = fs::read_dir(dir.path()).unwrap().map(|e| e.unwrap().file_name()).collect();
    assert_eq!(left.len(), 2, "{left:?}");
    assert!(dir.path().join("steady_nca.csv").is_file());
}

#[test]
fn steady_sweep_writes_one_row_per_alpha() {
    let dir = tempfile::tempdir().unwrap();
    run_steady_sweep(&small_config("t_max = 60\n"), &options(dir.path(), 1)).unwrap();
    let csv = fs::read_to_string(dir.path().join("steady_nca.csv")).unwrap();
    let rows: Vec<&str> = csv.lines().collect();
    assert_eq!(rows[0], "alpha,sx_steady,sz_steady");
    assert_eq!(rows.len(), 3);
    assert!(rows[1].starts_with("0.1,"));
}

#[test]
fn convergence_reports_fitted_order() {
    let dir = tempfile::tempdir().unwrap();
    let config = small_config("alpha = 0.1\nconvergence.dt_list = 0.2, 0.1, 0.05\nconvergence.t_max = 5\n");
    let m = run_convergence(&config, &options(dir.path(), 1)).unwrap();
    let order: f64 = m.records[0].get_note("fitted_order").unwrap().parse().unwrap();
    assert!(order > 1.5, "order {order}");
    let csv = fs::read_to_string(dir.path().join("convergence_nca_alpha0.1.csv")).unwrap();
    assert_eq!(csv.lines().count(), 4);
}

#[test]
fn divergent_point_exits_two_and_keeps_partial_output() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("run");
    let o = ncamaps(&[
        "dynamics",
        "--method",
        "born_markov",
        "--alpha",
        "0.1,0.4",
        "--set",
        "t_max=200",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(2), "{}", String::from_utf8_lossy(&o.stderr));
    let m = RunManifest::read(&out).unwrap();
    assert!(m.record("born_markov_alpha0.1").unwrap().status.is_completed());
    let bad = m.record("born_markov_alpha0.4").unwrap();
    let RunStatus::Diverged { time } = bad.status else {
        panic!("expected divergence, got {:?}", bad.status);
    };
    assert!(time > 0.0 && time < 200.0);
    let csv = fs::read_to_string(out.join(&bad.files[0])).unwrap();
    let rows = csv.lines().count() - 1;
    assert!(rows > 1 && rows < 2001, "{rows} rows");
}

#[test]
fn config_file_and_flags_combine() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.cfg");
    fs::write(&cfg, "# short run\n[grid]\ndt = 0.5\nt_max = 5\n[bath]\nalpha = 0.2\n").unwrap();
    let out = dir.path().join("out");
    let o = ncamaps(&[
        "dynamics",
        "--config",
        cfg.to_str().unwrap(),
        "--method",
        "nca_markov",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(out.join("dynamics_nca_markov_alpha0.2.csv").is_file());
    assert!(out.join(MANIFEST_FILE).is_file());
}

#[test]
fn bad_input_exits_one() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("x");
    let out = out.to_str().unwrap();
    assert_eq!(ncamaps(&["dynamics", "--bogus"]).status.code(), Some(1));
    assert_eq!(ncamaps(&["dynamics", "--alpha", "-1", "--out", out]).status.code(), Some(1));
    assert_eq!(ncamaps(&["dynamics", "--preset", "nope", "--out", out]).status.code(), Some(1));
    assert_eq!(ncamaps(&["dynamics", "--set", "grid.colour=red", "--out", out]).status.code(), Some(1));
    assert_eq!(ncamaps(&["--help"]).status.code(), Some(0));
}

#[test]
fn presets_print_as_loadable_config() {
    let o = ncamaps(&["presets"]);
    assert_eq!(String::from_utf8(o.stdout).unwrap().lines().count(), 3);
    let o = ncamaps(&["presets", "spectra"]);
    assert_eq!(o.status.code(), Some(0));
    let text = String::from_utf8(o.stdout).unwrap();
    let parsed = SimulationConfig::parse(&text).unwrap();
    assert_eq!(parsed, ncamaps_runner::presets::preset("spectra").unwrap());
}

#[test]
fn spectral_pipelines_write_grids() {
    use ncamaps_runner::pipelines::{run_spectrum, run_transmission_map};
    let grids = "alpha = 0.3\nspectrum.t_max = 40\nspectrum.omega_points = 7\n\
                 transmission.omega_points = 5\ntransmission.epsilon_points = 3\n";
    let dir = tempfile::tempdir().unwrap();
    let m = run_spectrum(&small_config(grids), &options(dir.path(), 2)).unwrap();
    // a 40-period window is far too short for the default damping
    assert!(m.records[0].get_note("warning").is_some());
    let csv = fs::read_to_string(dir.path().join("spectrum_nca_alpha0.3.csv")).unwrap();
    assert!(csv.starts_with("omega,cz,re_chi,im_chi,t2\n"));
    assert_eq!(csv.lines().count(), 8);

    let dir = tempfile::tempdir().unwrap();
    let m = run_transmission_map(&small_config(grids), &options(dir.path(), 2)).unwrap();
    assert_eq!(m.records.len(), 3);
    assert_eq!(m.files(), vec!["transmission_nca_alpha0.3.csv"]);
    let csv = fs::read_to_string(dir.path().join("transmission_nca_alpha0.3.csv")).unwrap();
    assert_eq!(csv.lines().count(), 1 + 3 * 5);
    assert!(csv.lines().nth(1).unwrap().starts_with("-0.5,0,"));
}
