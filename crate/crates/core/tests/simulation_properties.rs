mod common;

use rand::Rng;
use tankfdi_core::linalg::Vector;
use tankfdi_core::model::{
    self, FaultModel, FaultProfile, Integrator, PiecewiseConstantSignal, SimOptions, TankParams,
};

fn opts(integrator: Integrator, fault_model: FaultModel) -> SimOptions {
    SimOptions { integrator, fault_model }
}

#[test]
fn leak_input_equals_switched_matrix() {
    let params = TankParams::benchmark().with_leak(0.5);
    let u = PiecewiseConstantSignal::benchmark();
    let fault = FaultProfile::new(2.0, 0.5).unwrap();
    let x0 = Vector::from_row_slice(&[2.4, 3.6, 1.8]);
    for integrator in [Integrator::Rk4, Integrator::Exact] {
        let a = model::simulate_with(&params, &u, &fault, &x0, 1e-3, 10.0, opts(integrator, FaultModel::LeakInput)).unwrap();
        let b = model::simulate_with(&params, &u, &fault, &x0, 1e-3, 10.0, opts(integrator, FaultModel::SwitchedMatrix)).unwrap();
        for (x, y) in a.states.iter().zip(&b.states) {
            assert!((x - y).amax() <= 1e-10);
        }
    }
}

#[test]
fn rk4_agrees_with_exact_discretization() {
    let params = TankParams::benchmark().with_leak(0.5);
    let u = PiecewiseConstantSignal::benchmark();
    let fault = FaultProfile::new(2.0, 0.5).unwrap();
    let x0 = Vector::from_row_slice(&[0.26, 0.26, 0.26]);
    let rk = model::simulate(&params, &u, &fault, &x0, 1e-3, 10.0).unwrap();
    let ex = model::simulate_with(&params, &u, &fault, &x0, 1e-3, 10.0, opts(Integrator::Exact, FaultModel::LeakInput)).unwrap();
    for (x, y) in rk.states.iter().zip(&ex.states) {
        assert!((x - y).amax() <= 1e-10);
    }
}

#[test]
fn rk4_error_shrinks_with_fourth_order() {
    let params = TankParams::benchmark();
    let u = PiecewiseConstantSignal::constant(1.0);
    let x0 = Vector::from_row_slice(&[4.0, 0.0, 2.0]);
    let exact = model::simulate_with(&params, &u, &FaultProfile::none(), &x0, 0.1, 5.0, opts(Integrator::Exact, FaultModel::LeakInput)).unwrap();
    let err = |dt: f64| {
        let t = model::simulate(&params, &u, &FaultProfile::none(), &x0, dt, 5.0).unwrap();
        (t.final_state() - exact.final_state()).amax()
    };
    let (coarse, fine) = (err(0.1), err(0.05));
    assert!(coarse > 0.0);
    let ratio = coarse / fine;
    assert!((12.0..20.0).contains(&ratio), "ratio {ratio}");
}

#[test]
fn levels_stay_nonnegative_for_nonnegative_data() {
    let mut r = common::rng(17);
    let fault = FaultProfile::new(2.0, 0.5).unwrap();
    let params = TankParams::benchmark().with_leak(0.5);
    for _ in 0..50 {
        let x0 = Vector::from_fn(3, |_, _| r.random_range(0.0..4.0));
        let u = PiecewiseConstantSignal::new(vec![0.0, 1.0, 3.0], vec![r.random_range(0.0..3.0), 0.0, r.random_range(0.0..3.0)]).unwrap();
        let traj = model::simulate(&params, &u, &fault, &x0, 1e-2, 10.0).unwrap();
        assert!(traj.states.iter().all(|x| x.iter().all(|&v| v >= -1e-12)));
    }
}

#[test]
fn constant_input_converges_to_steady_state() {
    let params = TankParams::benchmark();
    let ss = model::build_healthy(&params).unwrap();
    let target = model::steady_state(&ss, 1.2).unwrap();
    let traj = model::simulate(
        &params,
        &PiecewiseConstantSignal::constant(1.2),
        &FaultProfile::none(),
        &Vector::from_row_slice(&[4.0, 4.0, 4.0]),
        1e-2,
        80.0,
    )
    .unwrap();
    assert!((traj.final_state() - &target).amax() <= 1e-9);
    let from_target = model::simulate(&params, &PiecewiseConstantSignal::constant(1.2), &FaultProfile::none(), &target, 1e-2, 5.0).unwrap();
    assert!(from_target.states.iter().all(|x| (x - &target).amax() <= 1e-12));
}

#[test]
fn fault_onset_snaps_to_the_grid() {
    let params = TankParams::benchmark().with_leak(1.0);
    let x0 = Vector::from_row_slice(&[1.0, 1.0, 1.0]);
    let u = PiecewiseConstantSignal::constant(0.5);
    for dt in [1e-3, 2e-3, 5e-3] {
        let traj = model::simulate(&params, &u, &FaultProfile::new(2.0, 1.0).unwrap(), &x0, dt, 3.0).unwrap();
        let first = traj.fault_flows.iter().position(|&f| f != 0.0).unwrap();
        assert!((traj.times[first] - 2.0).abs() <= 1e-9);
    }
}
