use ncamaps::bath::BathSpec;
use ncamaps::dynmaps::{born_kernel, nca_kernel, solve, Method, ModelSpec, SolverOptions};
use ncamaps::observables::evolve_expectations;
use ncamaps::qops::{superop_exp, Operator};
use proptest::prelude::*;

fn down() -> Operator {
    Operator::ket_bra(2, 1, 1)
}

#[test]
fn zero_coupling_is_free_precession() {
    let delta = 0.1;
    let dt = 0.01 * std::f64::consts::TAU;
    let steps = 1000;
    let model = ModelSpec::spin_boson(delta, 0.0);
    let table = BathSpec::ohmic(0.0, 1.0).unwrap().tabulate(dt, steps).unwrap();
    let l = model.liouvillian();
    for method in Method::ALL {
        let traj = solve(method, &model, &table, dt, steps, &SolverOptions::default()).unwrap();
        let e = evolve_expectations(&traj, &down(), &[("sz", &Operator::sigma_z())]).unwrap();
        let mut worst = 0.0f64;
        for (n, z) in e.series[0].values().iter().enumerate() {
            worst = worst.max((z + (delta * n as f64 * dt).cos()).abs());
        }
        assert!(worst < 1e-6, "{}: {worst:e}", method.as_str());
        for n in [1, 77, 500, 1000] {
            let exact = superop_exp(&l, n as f64 * dt).unwrap();
            let d = traj.maps()[n].max_abs_diff(&exact);
            assert!(d < 1e-9, "{} step {n}: {d:e}", method.as_str());
        }
    }
}

#[test]
fn maps_preserve_trace_and_hermiticity() {
    let model = ModelSpec::spin_boson(0.1, 0.05);
    let dt = 0.2 * std::f64::consts::TAU;
    let steps = 250;
    for alpha in [0.1, 0.5] {
        let table = BathSpec::ohmic(alpha, 1.0).unwrap().tabulate(dt, steps).unwrap();
        for method in [Method::Nca, Method::NcaMarkov, Method::Born] {
            let traj = solve(method, &model, &table, dt, steps, &SolverOptions::default()).unwrap();
            assert!(traj.max_trace_defect() < 1e-8, "{} α={alpha}", method.as_str());
            let rho0 = Operator::from_real_rows(2, &[0.3, 0.1, 0.1, 0.7]).unwrap();
            let e = evolve_expectations(&traj, &rho0, &[]).unwrap();
            assert!(e.max_hermiticity_defect() < 1e-8, "{} α={alpha}", method.as_str());
            assert!(e.max_trace_error() < 1e-8, "{} α={alpha}", method.as_str());
        }
    }
}

#[test]
fn solvers_agree_to_second_order_in_coupling() {
    // all four maps share the same O(α) term, so pairwise gaps scale as α²
    let model = ModelSpec::spin_boson(0.1, 0.0);
    let dt = 0.1 * std::f64::consts::TAU;
    let steps = 300;
    let gap = |alpha: f64| {
        let table = BathSpec::ohmic(alpha, 1.0).unwrap().tabulate(dt, steps).unwrap();
        let sz: Vec<Vec<f64>> = Method::ALL
            .iter()
            .map(|&m| {
                let traj = solve(m, &model, &table, dt, steps, &SolverOptions::default()).unwrap();
                let e = evolve_expectations(&traj, &down(), &[("sz", &Operator::sigma_z())]).unwrap();
                e.series[0].values().to_vec()
            })
            .collect();
        let mut worst = 0.0f64;
        for a in &sz {
            for b in &sz {
                for (x, y) in a.iter().zip(b) {
                    worst = worst.max((x - y).abs());
                }
            }
        }
        worst
    };
    let ratio = gap(0.01) / gap(0.005);
    assert!((3.0..5.0).contains(&ratio), "ratio {ratio}");
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn nca_kernel_reduces_to_born_kernel(n in 0usize..2000, delta in 0.05f64..1.0, eps in -0.5f64..0.5) {
        let dt = 0.05;
        let model = ModelSpec::spin_boson(delta, eps);
        let table = BathSpec::ohmic(0.3, 1.0).unwrap().tabulate(dt, 2000).unwrap();
        let tau = n as f64 * dt;
        let free = superop_exp(&model.liouvillian(), tau).unwrap();
        let a = nca_kernel(&free, table.get(n).unwrap(), model.coupling()).unwrap();
        let b = born_kernel(tau, &model, &table).unwrap();
        prop_assert!(a.max_abs_diff(&b) <= 1e-12);
    }
}
