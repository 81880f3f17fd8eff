//! Luenberger observer synthesis through the observable canonical form.
//!
//! The gain is found by matching the characteristic polynomial of the
//! canonical error dynamics `A_o - Psi_o C_o` against the desired polynomial,
//! then mapped back with `Psi = Delta Psi_o`.

use num_complex::Complex64;

use crate::analysis::{self, Polynomial};
use crate::linalg::{self, Matrix, Vector};
use crate::model::{self, PiecewiseConstantSignal, StateSpace, Trajectory};
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct CanonicalRealization {
    pub a_o: Matrix,
    pub b_o: Matrix,
    pub c_o: Matrix,
    /// Observability matrix of `(A_o, C_o)`.
    pub qbar_o: Matrix,
    /// Similarity transform with `x = Delta x_o`.
    pub delta: Matrix,
    /// Characteristic polynomial shared by `A` and `A_o`.
    pub char_poly: Polynomial,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ObserverDesign {
    pub desired_poles: Vec<Complex64>,
    /// Gain in canonical coordinates (`l_1..l_n`).
    pub psi_o: Vector,
    /// Gain in physical coordinates.
    pub psi: Vector,
    /// Error dynamics `A - Psi C`.
    pub gamma_d: Matrix,
    pub canonical: CanonicalRealization,
}

fn require_siso_observable(ss: &StateSpace) -> Result<()> {
    if ss.q() != 1 {
        return Err(Error::UnsupportedShape(format!(
            "observer design needs a single output, got {}",
            ss.q()
        )));
    }
    let report = analysis::observability_matrix(ss);
    if !report.full_rank {
        return Err(Error::NotObservable {
            rank: report.rank,
            n: ss.n(),
        });
    }
    Ok(())
}

pub fn canonical_form(ss: &StateSpace) -> Result<CanonicalRealization> {
    require_siso_observable(ss)?;
    let n = ss.n();
    let char_poly = analysis::characteristic_polynomial(&ss.a)?;

    let mut a_o = Matrix::zeros(n, n);
    for i in 1..n {
        a_o[(i, i - 1)] = 1.0;
    }
    for i in 0..n {
        a_o[(i, n - 1)] = -char_poly.coeff(i);
    }
    let mut c_o = Matrix::zeros(1, n);
    c_o[(0, n - 1)] = 1.0;

    let canon = StateSpace::new(a_o.clone(), ss.b.clone(), c_o.clone(), ss.f.clone())?;
    let qbar_o = analysis::observability_matrix(&canon).matrix;
    let q_o = analysis::observability_matrix(ss).matrix;
    let delta = linalg::inverse(&q_o, "observability matrix")? * &qbar_o;
    let b_o = linalg::inverse(&delta, "canonical transform")? * &ss.b;

    Ok(CanonicalRealization {
        a_o,
        b_o,
        c_o,
        qbar_o,
        delta,
        char_poly,
    })
}

pub fn place_observer_poles(ss: &StateSpace, desired: &[Complex64]) -> Result<ObserverDesign> {
    let n = ss.n();
    if desired.len() != n {
        return Err(Error::InvalidParameter(format!(
            "{} desired poles for an order-{n} system",
            desired.len()
        )));
    }
    let target = Polynomial::from_roots(desired)?;
    let canonical = canonical_form(ss)?;

    // det(sI - (A_o - Psi_o C_o)) has s^i coefficient eta_i + l_(i+1).
    let psi_o = Vector::from_iterator(
        n,
        (0..n).map(|i| target.coeff(i) - canonical.char_poly.coeff(i)),
    );
    let psi = &canonical.delta * &psi_o;
    let gamma_d = &ss.a - &psi * &ss.c;

    Ok(ObserverDesign {
        desired_poles: desired.to_vec(),
        psi_o,
        psi,
        gamma_d,
        canonical,
    })
}

/// Output at the midpoint of step `k`, interpolated from the sampled stream.
fn midpoint(y: &[f64], k: usize) -> f64 {
    let last = y.len() - 1;
    match (k > 0, k + 2 <= last) {
        (true, true) => (-y[k - 1] + 9.0 * y[k] + 9.0 * y[k + 1] - y[k + 2]) / 16.0,
        (false, true) => (3.0 * y[k] + 6.0 * y[k + 1] - y[k + 2]) / 8.0,
        (true, false) => (-y[k - 1] + 6.0 * y[k] + 3.0 * y[k + 1]) / 8.0,
        (false, false) => 0.5 * (y[k] + y[k + 1]),
    }
}

/// Integrates `xhat' = A xhat + B u + Psi (y - C xhat)` with RK4 on the grid of
/// `y_stream`. Between samples the output is interpolated with a cubic through
/// the neighbouring samples.
pub fn run_luenberger(
    ss: &StateSpace,
    psi: &Vector,
    u: &PiecewiseConstantSignal,
    y_stream: &[f64],
    xhat0: &Vector,
    dt: f64,
) -> Result<Trajectory> {
    let n = ss.n();
    if ss.q() != 1 || ss.p() != 1 {
        return Err(Error::UnsupportedShape("run_luenberger needs SISO".into()));
    }
    if psi.len() != n || xhat0.len() != n {
        return Err(Error::Dimension(format!(
            "gain has {} and initial estimate {} entries, expected {n}",
            psi.len(),
            xhat0.len()
        )));
    }
    if y_stream.len() < 2 {
        return Err(Error::InvalidParameter("output stream needs two samples".into()));
    }
    if !(dt > 0.0 && dt.is_finite()) {
        return Err(Error::InvalidParameter(format!("dt = {dt} must be positive")));
    }

    let len = y_stream.len();
    let gamma = &ss.a - psi * &ss.c;
    let mut traj = Trajectory {
        dt,
        times: Vec::with_capacity(len),
        states: Vec::with_capacity(len),
        outputs: Vec::with_capacity(len),
        inputs: Vec::with_capacity(len),
        fault_flows: vec![0.0; len],
    };

    let mut xhat = xhat0.clone();
    for k in 0..len {
        let t = k as f64 * dt;
        let uk = u.sample(t, dt);
        traj.times.push(t);
        traj.outputs.push(ss.output(&xhat));
        traj.inputs.push(Vector::from_element(1, uk));
        traj.states.push(xhat.clone());
        if k + 1 == len {
            break;
        }
        let y_mid = midpoint(y_stream, k);
        let (y0, y1) = (y_stream[k], y_stream[k + 1]);
        xhat = model::rk4_step(&xhat, dt, |frac, s| {
            let y = if frac == 0.0 {
                y0
            } else if frac == 1.0 {
                y1
            } else {
                y_mid
            };
            &gamma * s + &ss.b * uk + psi * y
        });
        if xhat.iter().any(|v| !v.is_finite()) {
            return Err(Error::Divergence { t: t + dt });
        }
    }
    Ok(traj)
}
