mod common;

use num_complex::Complex64;
use rand::Rng;
use tankfdi_core::detect::{self, ThresholdBound, ThresholdCurve};
use tankfdi_core::linalg::{self, Vector};
use tankfdi_core::model::{self, FaultProfile, PiecewiseConstantSignal, StateSpace, TankParams};
use tankfdi_core::observer::{self, ObserverDesign};

fn benchmark() -> (StateSpace, ObserverDesign) {
    let ss = model::build_healthy(&TankParams::benchmark()).unwrap();
    let poles = [-5.0, -8.0, -10.0].map(|p| Complex64::new(p, 0.0));
    let design = observer::place_observer_poles(&ss, &poles).unwrap();
    (ss, design)
}

fn threshold(bound: ThresholdBound) -> ThresholdCurve {
    let (ss, d) = benchmark();
    let e_hat = detect::initial_error_bound(
        &Vector::from_element(3, 0.25),
        &Vector::from_element(3, 4.0),
        &Vector::from_element(3, 0.25),
    )
    .unwrap();
    detect::build_threshold(&d.gamma_d, &ss.c, &e_hat, bound).unwrap()
}

/// Allowance for RK4 and roundoff error in the computed residual (~2e-11).
const FLOOR: f64 = 1e-9;

struct Run {
    residual: detect::ResidualTrace,
}

fn run(x0: &Vector, delta_bar: f64, fault: bool, horizon: f64) -> Run {
    let (ss, d) = benchmark();
    let params = TankParams::benchmark().with_leak(delta_bar);
    let u = PiecewiseConstantSignal::benchmark();
    let profile = if fault { FaultProfile::new(2.0, delta_bar).unwrap() } else { FaultProfile::none() };
    let plant = model::simulate(&params, &u, &profile, x0, 1e-3, horizon).unwrap();
    let y: Vec<f64> = (0..plant.len()).map(|k| plant.y(k)).collect();
    let obs = observer::run_luenberger(&ss, &d.psi, &u, &y, &Vector::from_element(3, 0.25), 1e-3).unwrap();
    Run { residual: detect::residual(&plant, &obs).unwrap() }
}

#[test]
fn signed_curve_matches_matrix_exponential() {
    let (ss, d) = benchmark();
    let thr = threshold(ThresholdBound::ModalAbsolute);
    let mut r = common::rng(99);
    for _ in 0..200 {
        let t: f64 = r.random_range(0.0..10.0);
        let oracle = (&ss.c * linalg::expm(&(&d.gamma_d * t)) * &thr.e_hat)[0];
        assert!((thr.signed_value(t) - oracle).abs() <= 1e-8, "t = {t}");
    }
    assert!((thr.signed_value(0.0) - 1.875).abs() <= 1e-12);
}

#[test]
fn fault_free_residual_follows_error_dynamics() {
    let (ss, d) = benchmark();
    let x0 = Vector::from_row_slice(&[2.4, 3.6, 1.8]);
    let res = run(&x0, 0.5, false, 4.0).residual;
    let e0 = &x0 - Vector::from_element(3, 0.25);
    for k in (0..res.times.len()).step_by(97) {
        let t = res.times[k];
        let oracle = (&ss.c * linalg::expm(&(&d.gamma_d * t)) * &e0)[0];
        assert!((res.residuals[k] - oracle).abs() <= 1e-6, "t = {t}");
    }
}

#[test]
fn componentwise_bound_has_no_false_alarms() {
    let thr = threshold(ThresholdBound::Componentwise).with_floor(FLOOR).unwrap();
    let mut r = common::rng(2024);
    for _ in 0..100 {
        let x0 = Vector::from_fn(3, |_, _| r.random_range(0.25..4.0));
        let res = run(&x0, 0.5, false, 10.0).residual;
        let report = detect::detect(&res, &thr, None);
        assert!(!report.detected, "false alarm from {x0:?} at {:?}", report.t_d);
    }
}

#[test]
fn modal_bound_is_crossed_by_some_healthy_runs() {
    let thr = threshold(ThresholdBound::ModalAbsolute).with_floor(FLOOR).unwrap();
    let mut r = common::rng(2024);
    let alarms = (0..100)
        .filter(|_| {
            let x0 = Vector::from_fn(3, |_, _| r.random_range(0.25..4.0));
            detect::detect(&run(&x0, 0.5, false, 10.0).residual, &thr, None).detected
        })
        .count();
    assert!(alarms > 0);
}

#[test]
fn bound_covers_every_corner_error() {
    let (ss, d) = benchmark();
    let thr = threshold(ThresholdBound::Componentwise);
    for mask in 0..8 {
        let e0 = Vector::from_fn(3, |i, _| if mask >> i & 1 == 1 { thr.e_hat[i] } else { -thr.e_hat[i] });
        for k in 0..=1000 {
            let t = k as f64 * 0.01;
            let eps = (&ss.c * linalg::expm(&(&d.gamma_d * t)) * &e0)[0];
            assert!(eps.abs() <= thr.value(t) * (1.0 + 1e-12) + 1e-15);
        }
    }
}

#[test]
fn larger_leaks_are_detected_no_later() {
    let thr = threshold(ThresholdBound::Componentwise).with_floor(FLOOR).unwrap();
    let x0 = Vector::from_row_slice(&[2.4, 3.6, 1.8]);
    let mut last = f64::INFINITY;
    for delta_bar in [0.25, 0.5, 1.0, 2.0] {
        let report = detect::detect(&run(&x0, delta_bar, true, 4.0).residual, &thr, Some(2.0));
        let t_d = report.t_d.expect("leak detected");
        assert!(t_d > 2.0 && t_d <= last + 1e-12, "delta_bar {delta_bar}: {t_d}");
        last = t_d;
    }
}

#[test]
fn modal_expansion_sums_to_signed_coefficients() {
    let thr = threshold(ThresholdBound::ModalAbsolute);
    let want = [78.0 / 64.0, -765.0 / 64.0, 807.0 / 64.0];
    let mut modes = thr.signed_modes.clone();
    modes.sort_by(|a, b| b.pole.total_cmp(&a.pole));
    for (m, (w, p)) in modes.iter().zip(want.iter().zip([-5.0, -8.0, -10.0])) {
        assert!((m.coefficient - w).abs() <= 1e-8);
        assert!((m.pole - p).abs() <= 1e-8);
    }
}

