//! Discrete-time Kalman filter with an adaptive scaling `phi` on the
//! process-noise contribution to the predicted covariance.
//!
//! Each step predicts, splits the innovation covariance into the part
//! explained by the propagated covariance (`beta`) and the part scaled by
//! `phi` (`gamma`), re-estimates `phi` from the squared innovation, and then
//! runs the usual measurement update with the rescaled prediction.

use crate::linalg::{self, Matrix, Vector};
use crate::{Error, Result};

/// Relative tolerance for the `nu^2 == alpha` consistency branch.
const CONSISTENCY_RTOL: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq)]
pub struct DiscreteModel {
    pub a: Matrix,
    pub b: Matrix,
    /// Measurement matrix.
    pub theta: Matrix,
    pub q: Matrix,
    pub r: Matrix,
}

fn check_covariance(m: &Matrix, name: &str, definite: bool) -> Result<()> {
    if !m.is_square() {
        return Err(Error::Dimension(format!("{name} is not square")));
    }
    let asym = linalg::max_abs_diff(m, &m.transpose());
    if asym > 1e-12 * m.amax().max(1.0) {
        return Err(Error::InvalidParameter(format!("{name} is not symmetric")));
    }
    let min = linalg::min_symmetric_eigenvalue(m);
    let floor = -1e-12 * m.amax().max(1.0);
    if definite && min <= 0.0 {
        return Err(Error::InvalidParameter(format!("{name} is not positive definite")));
    }
    if min < floor {
        return Err(Error::InvalidParameter(format!(
            "{name} is not positive semidefinite"
        )));
    }
    Ok(())
}

impl DiscreteModel {
    pub fn new(a: Matrix, b: Matrix, theta: Matrix, q: Matrix, r: Matrix) -> Result<Self> {
        let n = a.nrows();
        if a.ncols() != n || b.nrows() != n || theta.ncols() != n {
            return Err(Error::Dimension(format!(
                "A {:?}, B {:?}, Theta {:?}",
                a.shape(),
                b.shape(),
                theta.shape()
            )));
        }
        if q.nrows() != b.ncols() || r.nrows() != theta.nrows() {
            return Err(Error::Dimension(format!(
                "Q {:?} vs {} inputs, R {:?} vs {} outputs",
                q.shape(),
                b.ncols(),
                r.shape(),
                theta.nrows()
            )));
        }
        check_covariance(&q, "Q", false)?;
        check_covariance(&r, "R", true)?;
        Ok(Self { a, b, theta, q, r })
    }

    pub fn n(&self) -> usize {
        self.a.nrows()
    }

    pub fn q_dim(&self) -> usize {
        self.theta.nrows()
    }

    /// `B Q Bᵀ`.
    pub fn process_covariance(&self) -> Matrix {
        &self.b * &self.q * self.b.transpose()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScalingParams {
    pub a: f64,
    pub b: f64,
    pub c: f64,
    pub phi0: f64,
}

impl ScalingParams {
    pub fn new(a: f64, b: f64, c: f64, phi0: f64) -> Result<Self> {
        let params = Self { a, b, c, phi0 };
        params.validate()?;
        Ok(params)
    }

    /// Reduces the filter to a plain Kalman filter.
    pub fn plain() -> Self {
        Self {
            a: 1.0,
            b: 0.0,
            c: 0.0,
            phi0: 1.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if [self.a, self.b, self.c].iter().any(|v| !(*v >= 0.0 && v.is_finite())) {
            return Err(Error::InvalidParameter(format!(
                "scaling weights must be nonnegative, got ({}, {}, {})",
                self.a, self.b, self.c
            )));
        }
        if (self.a + self.b + self.c - 1.0).abs() > 1e-12 {
            return Err(Error::InvalidParameter(format!(
                "scaling weights must sum to 1, got {}",
                self.a + self.b + self.c
            )));
        }
        if !(self.phi0 >= 0.0 && self.phi0.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "phi0 = {} must be nonnegative",
                self.phi0
            )));
        }
        Ok(())
    }
}

impl Default for ScalingParams {
    fn default() -> Self {
        Self {
            a: 1.0 / 3.0,
            b: 1.0 / 3.0,
            c: 1.0 / 3.0,
            phi0: 1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FilterState {
    pub xhat: Vector,
    pub p: Matrix,
    pub phi: f64,
    pub k: usize,
}

impl FilterState {
    pub fn new(xhat: Vector, p: Matrix, phi: f64) -> Result<Self> {
        if p.nrows() != xhat.len() || !p.is_square() {
            return Err(Error::Dimension(format!(
                "covariance {:?} for a {}-state estimate",
                p.shape(),
                xhat.len()
            )));
        }
        check_covariance(&p, "P0", false)?;
        Ok(Self { xhat, p, phi, k: 0 })
    }
}

/// Predicted mean with the two covariance contributions kept apart.
#[derive(Debug, Clone, PartialEq)]
pub struct Prediction {
    pub xpred: Vector,
    /// `A P Aᵀ`.
    pub propagated: Matrix,
    /// `B Q Bᵀ`, the part multiplied by `phi`.
    pub process: Matrix,
}

impl Prediction {
    /// `A P Aᵀ + phi B Q Bᵀ`.
    pub fn covariance(&self, phi: f64) -> Matrix {
        &self.propagated + &self.process * phi
    }
}

/// Innovation-covariance split `alpha = beta + gamma`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InnovationParts {
    pub alpha: f64,
    pub beta: f64,
    pub gamma: f64,
    /// `Theta B Q Bᵀ Thetaᵀ`, the factor of `gamma` per unit `phi`.
    pub gamma_unit: f64,
    /// False when `gamma_unit` is zero, so `phi` cannot be inferred.
    pub identifiable: bool,
}

/// `xpred = A xhat + B u`; covariance parts `A P Aᵀ` and `B Q Bᵀ`.
pub fn predict(state: &FilterState, model: &DiscreteModel, u_k: &Vector) -> Result<Prediction> {
    if u_k.len() != model.b.ncols() {
        return Err(Error::Dimension(format!(
            "input has {} entries, B has {} columns",
            u_k.len(),
            model.b.ncols()
        )));
    }
    Ok(Prediction {
        xpred: &model.a * &state.xhat + &model.b * u_k,
        propagated: &model.a * &state.p * model.a.transpose(),
        process: model.process_covariance(),
    })
}

pub fn innovation_decomposition(
    pred: &Prediction,
    phi: f64,
    model: &DiscreteModel,
) -> Result<InnovationParts> {
    if model.q_dim() != 1 {
        return Err(Error::UnsupportedShape(format!(
            "adaptive scaling needs a scalar measurement, got {}",
            model.q_dim()
        )));
    }
    let th = &model.theta;
    let beta = (th * &pred.propagated * th.transpose())[(0, 0)] + model.r[(0, 0)];
    let gamma_unit = (th * &pred.process * th.transpose())[(0, 0)];
    let gamma = phi * gamma_unit;
    Ok(InnovationParts {
        alpha: beta + gamma,
        beta,
        gamma,
        gamma_unit,
        identifiable: gamma_unit > 0.0,
    })
}

/// New scaling from the squared innovation `nu_k^2`.
///
/// When `nu_k^2` matches `alpha = beta + phi_prev gamma_unit` (to a relative
/// `1e-9`) the consistency branch `a phi0 + (b + c) phi_prev` is taken. A
/// non-positive `gamma_unit` leaves `phi` frozen at `phi_prev`.
pub fn update_scaling(
    params: &ScalingParams,
    phi_prev: f64,
    nu_k: f64,
    beta: f64,
    gamma_unit: f64,
) -> f64 {
    if gamma_unit.is_nan() || gamma_unit <= 0.0 {
        log::warn!("scaling unidentifiable (gamma_unit = {gamma_unit:e}); holding phi = {phi_prev}");
        return phi_prev;
    }
    let nu2 = nu_k * nu_k;
    let alpha = beta + phi_prev * gamma_unit;
    let upsilon = if (nu2 - alpha).abs() <= CONSISTENCY_RTOL * alpha.abs() {
        params.a * params.phi0 + (params.b + params.c) * phi_prev
    } else {
        params.a * params.phi0 + params.b * phi_prev + params.c * (nu2 - beta) / gamma_unit
    };
    upsilon.max(0.0)
}

/// Measurement update: `K = Ppred Thetaᵀ Pbar^-1` with
/// `Pbar = Theta Ppred Thetaᵀ + R`, then `P = (I - K Theta) Ppred`, symmetrized.
pub fn update(
    state: &FilterState,
    model: &DiscreteModel,
    xpred: &Vector,
    ppred: &Matrix,
    y_k: &Vector,
) -> Result<FilterState> {
    if y_k.len() != model.q_dim() {
        return Err(Error::Dimension(format!(
            "measurement has {} entries, expected {}",
            y_k.len(),
            model.q_dim()
        )));
    }
    let th = &model.theta;
    let nu = y_k - th * xpred;
    let pbar = th * ppred * th.transpose() + &model.r;
    let gain = ppred * th.transpose() * linalg::inverse(&pbar, "innovation covariance")?;
    let n = model.n();
    let p = linalg::symmetrize(&((Matrix::identity(n, n) - &gain * th) * ppred));
    Ok(FilterState {
        xhat: xpred + gain * nu,
        p,
        phi: state.phi,
        k: state.k + 1,
    })
}

/// Runs the filter over `measurements`; `inputs[k]` drives the prediction
/// into the instant of `measurements[k]`. Returns the posterior after each
/// measurement.
pub fn run_askf(
    model: &DiscreteModel,
    params: &ScalingParams,
    x0: &Vector,
    p0: &Matrix,
    inputs: &[Vector],
    measurements: &[Vector],
) -> Result<Vec<FilterState>> {
    params.validate()?;
    if inputs.len() != measurements.len() {
        return Err(Error::Dimension(format!(
            "{} inputs for {} measurements",
            inputs.len(),
            measurements.len()
        )));
    }
    let mut state = FilterState::new(x0.clone(), p0.clone(), params.phi0)?;
    let mut out = Vec::with_capacity(measurements.len());
    for (u_k, y_k) in inputs.iter().zip(measurements) {
        let pred = predict(&state, model, u_k)?;
        let parts = innovation_decomposition(&pred, state.phi, model)?;
        let nu = y_k[0] - (&model.theta * &pred.xpred)[0];
        let phi = update_scaling(params, state.phi, nu, parts.beta, parts.gamma_unit);
        let ppred = pred.covariance(phi);
        let mut next = update(&state, model, &pred.xpred, &ppred, y_k)?;
        next.phi = phi;
        if next.xhat.iter().chain(next.p.iter()).any(|v| !v.is_finite()) {
            return Err(Error::Numerical(format!("filter diverged at step {}", next.k)));
        }
        state = next;
        out.push(state.clone());
    }
    Ok(out)
}
