//! Residual generation, analytic detection thresholds and the crossing test.
//!
//! The fault-free output error of the observer is `C exp(Gamma_d t) e(0)`.
//! With `Gamma_d = V diag(p) V^-1` this is a sum of decaying exponentials whose
//! coefficients split per initial-error component:
//! `c_ij = (C V)_i (V^-1)_ij e_j`. The threshold bounds that sum for every
//! initial error within `|e_j(0)| <= e_hat_j`.

use nalgebra::SVD;

use crate::analysis;
use crate::linalg::{self, Matrix, Vector};
use crate::model::Trajectory;
use crate::{Error, Result};

/// Relative spacing below which two poles are treated as repeated.
const DISTINCT_RTOL: f64 = 1e-6;
/// Samples in the degraded envelope.
const ENVELOPE_SAMPLES: usize = 8000;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Mode {
    pub coefficient: f64,
    pub pole: f64,
}

/// How the per-mode coefficients are made conservative.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ThresholdBound {
    /// `sum_i |sum_j c_ij| e^(p_i t)`: absolute value of each mode's total
    /// coefficient at `e(0) = e_hat`. Not a bound for every `e(0)` in the box.
    ModalAbsolute,
    /// `sum_i (sum_j |c_ij|) e^(p_i t)`: bounds `|C exp(Gamma_d t) e(0)|` for
    /// every `|e_j(0)| <= e_hat_j`.
    #[default]
    Componentwise,
}

#[derive(Debug, Clone, PartialEq)]
struct SampledEnvelope {
    step: f64,
    bound: Vec<f64>,
    signed: Vec<f64>,
}

impl SampledEnvelope {
    fn lookup(values: &[f64], step: f64, t: f64, conservative: bool) -> f64 {
        if t <= 0.0 {
            return values[0];
        }
        let pos = t / step;
        let i = pos.floor() as usize;
        if i + 1 >= values.len() {
            return *values.last().unwrap();
        }
        if conservative {
            values[i].max(values[i + 1])
        } else {
            let w = pos - i as f64;
            values[i] * (1.0 - w) + values[i + 1] * w
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ThresholdCurve {
    /// Conservative modes defining the threshold.
    pub modes: Vec<Mode>,
    /// Modal expansion of `C exp(Gamma_d t) e_hat` with its signs.
    pub signed_modes: Vec<Mode>,
    pub e_hat: Vector,
    pub bound: ThresholdBound,
    /// Absolute allowance added to the bound for integration and roundoff
    /// error in a computed residual.
    pub floor: f64,
    envelope: Option<SampledEnvelope>,
}

impl ThresholdCurve {
    /// Threshold value at `t`, including the floor.
    pub fn value(&self, t: f64) -> f64 {
        let bound = match &self.envelope {
            Some(env) => SampledEnvelope::lookup(&env.bound, env.step, t, true),
            None => eval_modes(&self.modes, t),
        };
        bound + self.floor
    }

    pub fn with_floor(mut self, floor: f64) -> Result<Self> {
        if !(floor >= 0.0 && floor.is_finite()) {
            return Err(Error::InvalidParameter(format!("threshold floor {floor} must be nonnegative")));
        }
        self.floor = floor;
        Ok(self)
    }

    /// `C exp(Gamma_d t) e_hat`.
    pub fn signed_value(&self, t: f64) -> f64 {
        match &self.envelope {
            Some(env) => SampledEnvelope::lookup(&env.signed, env.step, t, false),
            None => eval_modes(&self.signed_modes, t),
        }
    }

    /// True when built from sampled matrix exponentials instead of modes.
    pub fn is_degraded(&self) -> bool {
        self.envelope.is_some()
    }
}

fn eval_modes(modes: &[Mode], t: f64) -> f64 {
    modes.iter().map(|m| m.coefficient * (m.pole * t).exp()).sum()
}

/// Unit vector spanning the (numerical) null space of `m`.
fn null_vector(m: &Matrix) -> Vector {
    let svd = SVD::new(m.clone(), false, true);
    let v_t = svd.v_t.expect("requested V");
    let idx = svd.singular_values.imin();
    v_t.row(idx).transpose()
}

/// Per-mode, per-component coefficients `c_ij` and the poles, when `gamma_d`
/// has distinct real eigenvalues.
fn modal_coefficients(gamma_d: &Matrix, c: &Matrix, e_hat: &Vector) -> Option<(Vec<f64>, Matrix)> {
    let ev = analysis::eigenvalues(gamma_d).ok()?;
    let scale = ev.iter().map(|l| l.norm()).fold(1.0, f64::max);
    if ev.iter().any(|l| l.im.abs() > 1e-9 * scale) {
        return None;
    }
    let poles: Vec<f64> = ev.iter().map(|l| l.re).collect();
    for (i, a) in poles.iter().enumerate() {
        if poles[i + 1..].iter().any(|b| (a - b).abs() <= DISTINCT_RTOL * scale) {
            return None;
        }
    }
    let n = gamma_d.nrows();
    let mut v = Matrix::zeros(n, n);
    for (i, &p) in poles.iter().enumerate() {
        let shifted = gamma_d - Matrix::identity(n, n) * p;
        v.set_column(i, &null_vector(&shifted));
    }
    let v_inv = v.clone().try_inverse()?;
    let cv = c * &v;
    let mut coeffs = Matrix::zeros(n, n);
    for i in 0..n {
        for j in 0..n {
            coeffs[(i, j)] = cv[(0, i)] * v_inv[(i, j)] * e_hat[j];
        }
    }
    Some((poles, coeffs))
}

/// Threshold from the observer error dynamics. Falls back to a sampled
/// matrix-exponential envelope when `gamma_d` has complex or repeated poles.
pub fn build_threshold(
    gamma_d: &Matrix,
    c: &Matrix,
    e_hat: &Vector,
    bound: ThresholdBound,
) -> Result<ThresholdCurve> {
    let n = gamma_d.nrows();
    if !gamma_d.is_square() || c.shape() != (1, n) || e_hat.len() != n {
        return Err(Error::Dimension(format!(
            "threshold from Gamma_d {:?}, C {:?}, e_hat of length {}",
            gamma_d.shape(),
            c.shape(),
            e_hat.len()
        )));
    }
    if let Some((poles, coeffs)) = modal_coefficients(gamma_d, c, e_hat) {
        if let Some(p) = poles.iter().find(|p| **p >= 0.0) {
            return Err(Error::InvalidParameter(format!(
                "error dynamics pole {p} is not strictly negative"
            )));
        }
        let signed_modes = poles
            .iter()
            .enumerate()
            .map(|(i, &pole)| Mode {
                coefficient: coeffs.row(i).sum(),
                pole,
            })
            .collect::<Vec<_>>();
        let modes = signed_modes
            .iter()
            .enumerate()
            .map(|(i, m)| Mode {
                coefficient: match bound {
                    ThresholdBound::ModalAbsolute => m.coefficient.abs(),
                    ThresholdBound::Componentwise => coeffs.row(i).abs().sum(),
                },
                pole: m.pole,
            })
            .collect();
        return Ok(ThresholdCurve {
            modes,
            signed_modes,
            e_hat: e_hat.clone(),
            bound,
            floor: 0.0,
            envelope: None,
        });
    }

    log::warn!("Gamma_d is not diagonalizable with distinct real poles; using a sampled envelope");
    let ev = analysis::eigenvalues(gamma_d)?;
    let slowest = ev.iter().map(|l| l.re).fold(f64::NEG_INFINITY, f64::max);
    if slowest >= 0.0 {
        return Err(Error::InvalidParameter(format!(
            "error dynamics pole with real part {slowest} is not strictly negative"
        )));
    }
    let horizon = 25.0 / -slowest;
    let step = horizon / ENVELOPE_SAMPLES as f64;
    let stepper = linalg::expm(&(gamma_d * step));
    let mut g = c.clone();
    let mut bound_vals = Vec::with_capacity(ENVELOPE_SAMPLES + 1);
    let mut signed = Vec::with_capacity(ENVELOPE_SAMPLES + 1);
    for _ in 0..=ENVELOPE_SAMPLES {
        bound_vals.push((0..n).map(|j| g[(0, j)].abs() * e_hat[j].abs()).sum());
        signed.push((&g * e_hat)[0]);
        g = &g * &stepper;
    }
    Ok(ThresholdCurve {
        modes: Vec::new(),
        signed_modes: Vec::new(),
        e_hat: e_hat.clone(),
        bound: ThresholdBound::Componentwise,
        floor: 0.0,
        envelope: Some(SampledEnvelope {
            step,
            bound: bound_vals,
            signed,
        }),
    })
}

/// `e_hat_i = max(x_hi_i - xhat0_i, xhat0_i - x_lo_i)`.
pub fn initial_error_bound(x_lo: &Vector, x_hi: &Vector, xhat0: &Vector) -> Result<Vector> {
    let n = xhat0.len();
    if x_lo.len() != n || x_hi.len() != n {
        return Err(Error::Dimension("bounds and estimate differ in length".into()));
    }
    for i in 0..n {
        if !(x_lo[i] <= xhat0[i] && xhat0[i] <= x_hi[i]) {
            return Err(Error::InvalidParameter(format!(
                "state {i}: need x_lo <= xhat0 <= x_hi, got {} <= {} <= {}",
                x_lo[i], xhat0[i], x_hi[i]
            )));
        }
    }
    Ok(Vector::from_iterator(
        n,
        (0..n).map(|i| (x_hi[i] - xhat0[i]).max(xhat0[i] - x_lo[i])),
    ))
}

#[derive(Debug, Clone, PartialEq)]
pub struct ResidualTrace {
    pub times: Vec<f64>,
    pub residuals: Vec<f64>,
}

/// `eps(t) = y(t) - yhat(t)` on a shared grid.
pub fn residual(plant: &Trajectory, observer: &Trajectory) -> Result<ResidualTrace> {
    if plant.len() != observer.len() {
        return Err(Error::GridMismatch(format!(
            "{} plant samples vs {} observer samples",
            plant.len(),
            observer.len()
        )));
    }
    let tol = 1e-9 * plant.dt.max(observer.dt);
    if let Some(k) = (0..plant.len()).find(|&k| (plant.times[k] - observer.times[k]).abs() > tol)
    {
        return Err(Error::GridMismatch(format!(
            "sample {k}: t = {} vs {}",
            plant.times[k], observer.times[k]
        )));
    }
    Ok(ResidualTrace {
        times: plant.times.clone(),
        residuals: (0..plant.len()).map(|k| plant.y(k) - observer.y(k)).collect(),
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct DetectionReport {
    pub detected: bool,
    /// Interpolated crossing time, rounded to 1e-4.
    pub t_d: Option<f64>,
    /// First sample index with `|eps| > eps_bar`.
    pub first_sample: Option<usize>,
    /// `eps_bar(t) - |eps(t)|` per sample.
    pub margin_trace: Vec<f64>,
    pub t_f_configured: Option<f64>,
}

/// First sample where `|eps| > eps_bar`, refined by linear interpolation of
/// the margin between the bracketing samples.
pub fn detect(res: &ResidualTrace, thr: &ThresholdCurve, t_f_hint: Option<f64>) -> DetectionReport {
    let margin_trace: Vec<f64> = res
        .times
        .iter()
        .zip(&res.residuals)
        .map(|(&t, &e)| thr.value(t) - e.abs())
        .collect();
    let first = margin_trace.iter().position(|&m| m < 0.0);
    let t_d = first.map(|i| {
        if i == 0 {
            return res.times[0];
        }
        let (m0, m1) = (margin_trace[i - 1], margin_trace[i]);
        let (t0, t1) = (res.times[i - 1], res.times[i]);
        let t = t0 + (t1 - t0) * m0 / (m0 - m1);
        (t * 1e4).round() / 1e4
    });
    DetectionReport {
        detected: first.is_some(),
        t_d,
        first_sample: first,
        margin_trace,
        t_f_configured: t_f_hint,
    }
}
