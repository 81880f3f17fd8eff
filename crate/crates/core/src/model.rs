//! Three-tank plant: parameters, state-space construction, input and fault
//! signals, and continuous-time simulation of the truth trajectory.
//!
//! Tank 1 is fed by the input flow `u`, drains into tank 2, which drains into
//! tank 3; the output is the level of tank 3. A leak on tank 2 removes
//! `delta_bar * h2` once the fault is active.

use crate::linalg::{self, Matrix, Vector};
use crate::{Error, Result};

/// Grid-snapping slack, as a fraction of `dt`, when comparing sample times
/// against breakpoints and the fault onset.
const GRID_EPS: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TankParams {
    /// Cross-sectional areas (m²).
    pub psi: [f64; 3],
    /// Outflow coefficients (m²/s).
    pub delta: [f64; 3],
    /// Leak coefficient on tank 2 (m²/s); zero is the healthy plant.
    pub delta_bar: f64,
}

impl TankParams {
    pub fn new(psi: [f64; 3], delta: [f64; 3], delta_bar: f64) -> Result<Self> {
        let params = Self { psi, delta, delta_bar };
        params.validate()?;
        Ok(params)
    }

    /// The benchmark plant: psi = (2, 1, 2), delta = (1, 1.5, 1), leak 0.5.
    pub fn benchmark() -> Self {
        Self {
            psi: [2.0, 1.0, 2.0],
            delta: [1.0, 1.5, 1.0],
            delta_bar: 0.5,
        }
    }

    pub fn with_leak(mut self, delta_bar: f64) -> Self {
        self.delta_bar = delta_bar;
        self
    }

    pub fn validate(&self) -> Result<()> {
        for i in 0..3 {
            if !(self.psi[i] > 0.0 && self.psi[i].is_finite()) {
                return Err(Error::InvalidParameter(format!(
                    "psi[{i}] = {} must be positive",
                    self.psi[i]
                )));
            }
            if !(self.delta[i] > 0.0 && self.delta[i].is_finite()) {
                return Err(Error::InvalidParameter(format!(
                    "delta[{i}] = {} must be positive",
                    self.delta[i]
                )));
            }
        }
        if !(self.delta_bar >= 0.0 && self.delta_bar.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "delta_bar = {} must be nonnegative",
                self.delta_bar
            )));
        }
        Ok(())
    }

    /// Levels `h = x / psi` from volumes.
    pub fn levels(&self, x: &Vector) -> [f64; 3] {
        [x[0] / self.psi[0], x[1] / self.psi[1], x[2] / self.psi[2]]
    }
}

/// `dx/dt = A x + B u + F f`, `y = C x`.
#[derive(Debug, Clone, PartialEq)]
pub struct StateSpace {
    pub a: Matrix,
    pub b: Matrix,
    pub c: Matrix,
    pub f: Matrix,
}

impl StateSpace {
    pub fn new(a: Matrix, b: Matrix, c: Matrix, f: Matrix) -> Result<Self> {
        let n = a.nrows();
        if a.ncols() != n {
            return Err(Error::Dimension(format!("A is {}x{}", n, a.ncols())));
        }
        if b.nrows() != n {
            return Err(Error::Dimension(format!("B has {} rows, expected {n}", b.nrows())));
        }
        if c.ncols() != n {
            return Err(Error::Dimension(format!("C has {} cols, expected {n}", c.ncols())));
        }
        if f.nrows() != n {
            return Err(Error::Dimension(format!("F has {} rows, expected {n}", f.nrows())));
        }
        Ok(Self { a, b, c, f })
    }

    pub fn n(&self) -> usize {
        self.a.nrows()
    }

    pub fn p(&self) -> usize {
        self.b.ncols()
    }

    pub fn q(&self) -> usize {
        self.c.nrows()
    }

    pub fn output(&self, x: &Vector) -> Vector {
        &self.c * x
    }
}

/// Healthy plant matrices.
pub fn build_healthy(params: &TankParams) -> Result<StateSpace> {
    params.validate()?;
    let [p1, p2, p3] = params.psi;
    let [d1, d2, d3] = params.delta;
    #[rustfmt::skip]
    let a = Matrix::from_row_slice(3, 3, &[
        -d1 / p1, 0.0,      0.0,
         d1 / p1, -d2 / p2, 0.0,
         0.0,      d2 / p2, -d3 / p3,
    ]);
    let b = Matrix::from_column_slice(3, 1, &[1.0, 0.0, 0.0]);
    let c = Matrix::from_row_slice(1, 3, &[0.0, 0.0, 1.0 / p3]);
    let f = Matrix::from_column_slice(3, 1, &[0.0, -1.0, 0.0]);
    StateSpace::new(a, b, c, f)
}

/// Faulty plant with the leak folded into the state matrix:
/// `A[1][1] = -(delta_2 + delta_bar) / psi_2`.
pub fn build_faulty(params: &TankParams) -> Result<StateSpace> {
    let mut ss = build_healthy(params)?;
    ss.a[(1, 1)] = -(params.delta[1] + params.delta_bar) / params.psi[1];
    Ok(ss)
}

#[derive(Debug, Clone, PartialEq)]
pub struct PiecewiseConstantSignal {
    breakpoints: Vec<f64>,
    values: Vec<f64>,
}

impl PiecewiseConstantSignal {
    /// Segment `i` holds `values[i]` on `[breakpoints[i], breakpoints[i+1])`;
    /// the last segment extends to infinity.
    pub fn new(breakpoints: Vec<f64>, values: Vec<f64>) -> Result<Self> {
        if breakpoints.is_empty() || breakpoints.len() != values.len() {
            return Err(Error::InvalidParameter(format!(
                "signal needs one value per breakpoint (got {} breakpoints, {} values)",
                breakpoints.len(),
                values.len()
            )));
        }
        if breakpoints.windows(2).any(|w| w[1].partial_cmp(&w[0]) != Some(std::cmp::Ordering::Greater)) {
            return Err(Error::InvalidParameter(
                "signal breakpoints must be strictly increasing".into(),
            ));
        }
        if breakpoints.iter().chain(values.iter()).any(|v| !v.is_finite()) {
            return Err(Error::InvalidParameter("signal has non-finite entries".into()));
        }
        Ok(Self { breakpoints, values })
    }

    pub fn constant(value: f64) -> Self {
        Self {
            breakpoints: vec![0.0],
            values: vec![value],
        }
    }

    /// The benchmark input: 2 on [0, 1), 1 afterwards.
    pub fn benchmark() -> Self {
        Self {
            breakpoints: vec![0.0, 1.0],
            values: vec![2.0, 1.0],
        }
    }

    pub fn breakpoints(&self) -> &[f64] {
        &self.breakpoints
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Value of the segment containing `t`. Times before the first breakpoint
    /// take the first value.
    pub fn value_at(&self, t: f64) -> f64 {
        let idx = self.breakpoints.partition_point(|&b| b <= t);
        self.values[idx.saturating_sub(1)]
    }

    /// Value on a sample grid of step `dt`, tolerant of round-off in `t`.
    pub fn sample(&self, t: f64, dt: f64) -> f64 {
        self.value_at(t + GRID_EPS * dt)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FaultProfile {
    pub t_f: f64,
    pub delta_bar: f64,
}

impl FaultProfile {
    pub fn new(t_f: f64, delta_bar: f64) -> Result<Self> {
        if !t_f.is_finite() {
            return Err(Error::InvalidParameter(format!("t_f = {t_f} must be finite")));
        }
        if !(delta_bar >= 0.0 && delta_bar.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "delta_bar = {delta_bar} must be nonnegative"
            )));
        }
        Ok(Self { t_f, delta_bar })
    }

    pub fn none() -> Self {
        Self {
            t_f: f64::INFINITY,
            delta_bar: 0.0,
        }
    }

    /// Active from the first sample instant at or after `t_f`.
    pub fn active_on_grid(&self, t: f64, dt: f64) -> bool {
        self.delta_bar > 0.0 && t + GRID_EPS * dt >= self.t_f
    }
}

/// Leak flow out of tank 2: zero before onset, `(delta_bar / psi_2) * x2` after.
pub fn fault_flow(profile: &FaultProfile, params: &TankParams, x2: f64, t: f64) -> f64 {
    if t < profile.t_f {
        0.0
    } else {
        profile.delta_bar / params.psi[1] * x2
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub dt: f64,
    pub times: Vec<f64>,
    pub states: Vec<Vector>,
    pub outputs: Vec<Vector>,
    pub inputs: Vec<Vector>,
    pub fault_flows: Vec<f64>,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn final_state(&self) -> &Vector {
        self.states.last().expect("trajectory is never empty")
    }

    /// Scalar output at sample `k` (first output channel).
    pub fn y(&self, k: usize) -> f64 {
        self.outputs[k][0]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Integrator {
    /// Fixed-step classical Runge-Kutta.
    #[default]
    Rk4,
    /// Matrix exponential per step; exact for the piecewise-LTI plant.
    Exact,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum FaultModel {
    /// Healthy `A` plus the leak flow through `F`.
    #[default]
    LeakInput,
    /// `A` before onset, the faulty matrix after, no fault input.
    SwitchedMatrix,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct SimOptions {
    pub integrator: Integrator,
    pub fault_model: FaultModel,
}

pub fn number_of_steps(dt: f64, horizon: f64) -> Result<usize> {
    if !(dt > 0.0 && dt.is_finite()) {
        return Err(Error::InvalidParameter(format!("dt = {dt} must be positive")));
    }
    if !(horizon > 0.0 && horizon.is_finite()) {
        return Err(Error::InvalidParameter(format!(
            "horizon = {horizon} must be positive"
        )));
    }
    Ok(((horizon / dt).round() as usize).max(1))
}

pub(crate) fn rk4_step<F>(x: &Vector, dt: f64, mut deriv: F) -> Vector
where
    F: FnMut(f64, &Vector) -> Vector,
{
    let k1 = deriv(0.0, x);
    let k2 = deriv(0.5, &(x + &k1 * (0.5 * dt)));
    let k3 = deriv(0.5, &(x + &k2 * (0.5 * dt)));
    let k4 = deriv(1.0, &(x + &k3 * dt));
    x + (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (dt / 6.0)
}

/// RK4 simulation with the leak applied as a fault input.
pub fn simulate(
    params: &TankParams,
    u: &PiecewiseConstantSignal,
    fault: &FaultProfile,
    x0: &Vector,
    dt: f64,
    horizon: f64,
) -> Result<Trajectory> {
    simulate_with(params, u, fault, x0, dt, horizon, SimOptions::default())
}

pub fn simulate_with(
    params: &TankParams,
    u: &PiecewiseConstantSignal,
    fault: &FaultProfile,
    x0: &Vector,
    dt: f64,
    horizon: f64,
    opts: SimOptions,
) -> Result<Trajectory> {
    params.validate()?;
    let steps = number_of_steps(dt, horizon)?;
    if x0.len() != 3 || x0.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidParameter(
            "x0 must be a finite 3-vector".into(),
        ));
    }

    let healthy = build_healthy(params)?;
    let faulty = build_faulty(&params.with_leak(fault.delta_bar))?;
    let leak_gain = fault.delta_bar / params.psi[1];

    // Exact stepping only needs the two discretizations.
    let exact = match opts.integrator {
        Integrator::Exact => Some((
            linalg::zoh(&healthy.a, &healthy.b, dt),
            linalg::zoh(&faulty.a, &faulty.b, dt),
        )),
        Integrator::Rk4 => None,
    };

    let mut traj = Trajectory {
        dt,
        times: Vec::with_capacity(steps + 1),
        states: Vec::with_capacity(steps + 1),
        outputs: Vec::with_capacity(steps + 1),
        inputs: Vec::with_capacity(steps + 1),
        fault_flows: Vec::with_capacity(steps + 1),
    };

    let mut x = x0.clone();
    for k in 0..=steps {
        let t = k as f64 * dt;
        let uk = u.sample(t, dt);
        let active = fault.active_on_grid(t, dt);
        traj.times.push(t);
        traj.outputs.push(healthy.output(&x));
        traj.inputs.push(Vector::from_element(1, uk));
        traj.fault_flows.push(if active { leak_gain * x[1] } else { 0.0 });
        traj.states.push(x.clone());
        if k == steps {
            break;
        }

        x = match (&exact, opts.fault_model) {
            (Some((h, f)), _) => {
                let (ad, bd) = if active { f } else { h };
                ad * &x + bd * uk
            }
            (None, FaultModel::LeakInput) => rk4_step(&x, dt, |_, s| {
                let leak = if active { leak_gain * s[1] } else { 0.0 };
                &healthy.a * s + &healthy.b * uk + &healthy.f * leak
            }),
            (None, FaultModel::SwitchedMatrix) => {
                let a = if active { &faulty.a } else { &healthy.a };
                rk4_step(&x, dt, |_, s| a * s + &healthy.b * uk)
            }
        };
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::Divergence { t: t + dt });
        }
    }
    Ok(traj)
}

/// Equilibrium `x*` solving `A x* + B u = 0`.
pub fn steady_state(ss: &StateSpace, u_const: f64) -> Result<Vector> {
    let rhs = -(ss.b.column_sum() * u_const);
    ss.a
        .clone()
        .lu()
        .solve(&rhs)
        .filter(|x| x.iter().all(|v| v.is_finite()))
        .ok_or_else(|| Error::Singular("state matrix A".into()))
}
