//! Information-form consensus filter over a set of sensors observing the same
//! state. Sensor information terms are averaged, fused with the prior, and the
//! posterior is propagated through the model.

use crate::askf::DiscreteModel;
use crate::linalg::{self, Matrix, Vector};
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct Sensor {
    pub theta: Matrix,
    pub r: Matrix,
    r_inv: Matrix,
}

impl Sensor {
    pub fn new(theta: Matrix, r: Matrix) -> Result<Self> {
        if !r.is_square() || r.nrows() != theta.nrows() {
            return Err(Error::Dimension(format!(
                "sensor R {:?} for Theta {:?}",
                r.shape(),
                theta.shape()
            )));
        }
        if linalg::min_symmetric_eigenvalue(&r) <= 0.0 {
            return Err(Error::Singular("sensor noise covariance R".into()));
        }
        let r_inv = linalg::inverse(&r, "sensor noise covariance R")?;
        Ok(Self { theta, r, r_inv })
    }

    /// `Thetaᵀ R^-1 Theta`.
    fn information(&self) -> Matrix {
        self.theta.transpose() * &self.r_inv * &self.theta
    }

    /// `Thetaᵀ R^-1 y`.
    fn information_vector(&self, y: &Vector) -> Vector {
        self.theta.transpose() * (&self.r_inv * y)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SensorNetwork {
    sensors: Vec<Sensor>,
}

impl SensorNetwork {
    pub fn new(sensors: Vec<Sensor>) -> Result<Self> {
        let Some(first) = sensors.first() else {
            return Err(Error::InvalidParameter("sensor network is empty".into()));
        };
        let n = first.theta.ncols();
        if sensors.iter().any(|s| s.theta.ncols() != n) {
            return Err(Error::Dimension("sensors observe different state sizes".into()));
        }
        Ok(Self { sensors })
    }

    /// `count` copies of the same sensor.
    pub fn identical(theta: Matrix, r: Matrix, count: usize) -> Result<Self> {
        let sensor = Sensor::new(theta, r)?;
        Self::new(vec![sensor; count])
    }

    pub fn len(&self) -> usize {
        self.sensors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sensors.is_empty()
    }

    pub fn sensors(&self) -> &[Sensor] {
        &self.sensors
    }

    pub fn state_dim(&self) -> usize {
        self.sensors[0].theta.ncols()
    }
}

/// How the prior covariance enters the information update.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum PriorScaling {
    /// `Pk^-1 = P^-1 + H`.
    #[default]
    One,
    /// `Pk^-1 = (n P)^-1 + H` with `n` the sensor count.
    SensorCount,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ConsensusOptions {
    pub prior_scaling: PriorScaling,
    /// Add `B u` to the propagated mean.
    pub include_input: bool,
}

impl Default for ConsensusOptions {
    fn default() -> Self {
        Self {
            prior_scaling: PriorScaling::One,
            include_input: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConsensusState {
    /// Prior mean.
    pub xbar: Vector,
    /// Prior covariance.
    pub p: Matrix,
    /// Fused posterior covariance.
    pub pk: Matrix,
    /// Posterior mean.
    pub xm: Vector,
}

impl ConsensusState {
    /// State holding a prior only; posterior fields mirror the prior.
    pub fn from_prior(xbar: Vector, p: Matrix) -> Self {
        Self {
            xm: xbar.clone(),
            pk: p.clone(),
            xbar,
            p,
        }
    }
}

/// `H = (1/n) sum_i Theta_iᵀ R_i^-1 Theta_i`, summed in sensor order.
pub fn fused_information(net: &SensorNetwork) -> Matrix {
    let dim = net.state_dim();
    let sum = net
        .sensors
        .iter()
        .fold(Matrix::zeros(dim, dim), |acc, s| acc + s.information());
    sum / net.len() as f64
}

/// `z = (1/n) sum_i Theta_iᵀ R_i^-1 y_i`.
pub fn fused_measurement(net: &SensorNetwork, measurements: &[Vector]) -> Result<Vector> {
    if measurements.len() != net.len() {
        return Err(Error::Dimension(format!(
            "{} measurements for {} sensors",
            measurements.len(),
            net.len()
        )));
    }
    let mut z = Vector::zeros(net.state_dim());
    for (s, y) in net.sensors.iter().zip(measurements) {
        if y.len() != s.theta.nrows() {
            return Err(Error::Dimension(format!(
                "measurement of length {} for a {}-output sensor",
                y.len(),
                s.theta.nrows()
            )));
        }
        z += s.information_vector(y);
    }
    Ok(z / net.len() as f64)
}

/// Information update of the prior in `state` with one measurement per sensor.
pub fn consensus_update(
    state: &ConsensusState,
    net: &SensorNetwork,
    measurements: &[Vector],
    scaling: PriorScaling,
) -> Result<ConsensusState> {
    let h = fused_information(net);
    let z = fused_measurement(net, measurements)?;
    let scale = match scaling {
        PriorScaling::One => 1.0,
        PriorScaling::SensorCount => net.len() as f64,
    };
    let prior_info = linalg::inverse(&(&state.p * scale), "prior covariance")?;
    let pk = linalg::symmetrize(&linalg::inverse(&(prior_info + &h), "fused information")?);
    let xm = &state.xbar + &pk * (z - &h * &state.xbar);
    Ok(ConsensusState {
        xbar: state.xbar.clone(),
        p: state.p.clone(),
        pk,
        xm,
    })
}

/// `P+ = A Pk Aᵀ + B Q Bᵀ`, `xbar+ = A xm (+ B u)`. The returned state holds
/// the new prior.
pub fn consensus_predict(
    state: &ConsensusState,
    model: &DiscreteModel,
    u_k: &Vector,
    include_input: bool,
) -> Result<ConsensusState> {
    if u_k.len() != model.b.ncols() {
        return Err(Error::Dimension(format!(
            "input has {} entries, B has {} columns",
            u_k.len(),
            model.b.ncols()
        )));
    }
    let p = linalg::symmetrize(
        &(&model.a * &state.pk * model.a.transpose() + model.process_covariance()),
    );
    let mut xbar = &model.a * &state.xm;
    if include_input {
        xbar += &model.b * u_k;
    }
    Ok(ConsensusState::from_prior(xbar, p))
}

/// Alternates prediction (with `inputs[k]`) and the update with
/// `measurements[k]`, starting from the posterior belief `(x0, p0)`. Each
/// returned state carries the prior it was updated from and its posterior.
pub fn run_consensus(
    model: &DiscreteModel,
    net: &SensorNetwork,
    x0: &Vector,
    p0: &Matrix,
    inputs: &[Vector],
    measurements: &[Vec<Vector>],
    opts: ConsensusOptions,
) -> Result<Vec<ConsensusState>> {
    if inputs.len() != measurements.len() {
        return Err(Error::Dimension(format!(
            "{} inputs for {} measurement sets",
            inputs.len(),
            measurements.len()
        )));
    }
    if x0.len() != model.n() || p0.shape() != (model.n(), model.n()) {
        return Err(Error::Dimension("initial belief does not match the model".into()));
    }
    let mut posterior = ConsensusState::from_prior(x0.clone(), p0.clone());
    let mut out = Vec::with_capacity(measurements.len());
    for (u_k, ys) in inputs.iter().zip(measurements) {
        let prior = consensus_predict(&posterior, model, u_k, opts.include_input)?;
        posterior = consensus_update(&prior, net, ys, opts.prior_scaling)?;
        if posterior.xm.iter().any(|v| !v.is_finite()) {
            return Err(Error::Numerical(format!("consensus filter diverged at step {}", out.len() + 1)));
        }
        out.push(posterior.clone());
    }
    Ok(out)
}
