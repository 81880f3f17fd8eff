//! Scenario orchestration: observer design, the noise-free detection run, and
//! seeded Monte Carlo comparisons of the three estimators.
//!
//! Random streams: every (scenario, repetition) cell owns a ChaCha8 stream
//! `seed_from_u64(seed)` with `set_stream(scenario << 32 | repetition)`. Within
//! a cell the draws are, in order, the input disturbance for each sampling
//! period and then the measurement noise of sensor 0, 1, ... for every sample.
//! Sensor 0 is the stream fed to all three estimators.

use nalgebra::DMatrix;
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use tankfdi_core::askf::{self, DiscreteModel};
use tankfdi_core::consensus::{self, ConsensusOptions, SensorNetwork};
use tankfdi_core::detect::{self, DetectionReport, ResidualTrace, ThresholdCurve};
use tankfdi_core::linalg::{self, Matrix, Vector};
use tankfdi_core::model::{self, PiecewiseConstantSignal, StateSpace, Trajectory};
use tankfdi_core::observer::{self, ObserverDesign};

use crate::config::ExperimentConfig;
use crate::error::Result;

/// Detection times reported for the three benchmark initial conditions.
pub const REFERENCE_DETECTION_TIMES: [f64; 3] = [2.0235, 2.015, 2.0165];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Estimator {
    Luenberger,
    Askf,
    Consensus,
}

impl Estimator {
    pub const ALL: [Estimator; 3] = [Estimator::Luenberger, Estimator::Askf, Estimator::Consensus];

    pub fn name(self) -> &'static str {
        match self {
            Estimator::Luenberger => "luenberger",
            Estimator::Askf => "askf",
            Estimator::Consensus => "consensus",
        }
    }

    fn index(self) -> usize {
        self as usize
    }
}

#[derive(Debug, Clone)]
pub struct Design {
    pub plant: StateSpace,
    pub observer: ObserverDesign,
    pub e_hat: Vector,
    pub threshold: ThresholdCurve,
}

pub fn design(cfg: &ExperimentConfig) -> Result<Design> {
    let plant = model::build_healthy(&cfg.tank_params())?;
    let poles: Vec<Complex64> = cfg.observer.poles.iter().map(|&p| Complex64::new(p, 0.0)).collect();
    let observer = observer::place_observer_poles(&plant, &poles)?;
    let v = |a: [f64; 3]| Vector::from_row_slice(&a);
    let e_hat = detect::initial_error_bound(
        &v(cfg.observer.x_lo),
        &v(cfg.observer.x_hi),
        &v(cfg.observer.xhat0),
    )?;
    let threshold =
        detect::build_threshold(&observer.gamma_d, &plant.c, &e_hat, cfg.observer.threshold.into())?
            .with_floor(cfg.observer.threshold_floor)?;
    Ok(Design {
        plant,
        observer,
        e_hat,
        threshold,
    })
}

#[derive(Debug, Clone)]
pub struct DetectionRun {
    pub x0: [f64; 3],
    pub plant: Trajectory,
    pub observer: Trajectory,
    pub residual: ResidualTrace,
    pub report: DetectionReport,
}

/// Noise-free plant and observer from `x0`, then the threshold test.
pub fn detection_run(cfg: &ExperimentConfig, design: &Design, x0: [f64; 3]) -> Result<DetectionRun> {
    let u = cfg.input_signal()?;
    let plant = model::simulate(
        &cfg.tank_params(),
        &u,
        &cfg.fault_profile()?,
        &Vector::from_row_slice(&x0),
        cfg.run.dt,
        cfg.run.horizon,
    )?;
    let y: Vec<f64> = (0..plant.len()).map(|k| plant.y(k)).collect();
    let observer = observer::run_luenberger(
        &design.plant,
        &design.observer.psi,
        &u,
        &y,
        &Vector::from_row_slice(&cfg.observer.xhat0),
        cfg.run.dt,
    )?;
    let residual = detect::residual(&plant, &observer)?;
    let report = detect::detect(&residual, &design.threshold, Some(cfg.fault.t_f));
    Ok(DetectionRun {
        x0,
        plant,
        observer,
        residual,
        report,
    })
}

/// One seeded realisation on the filter sampling grid.
#[derive(Debug, Clone)]
pub struct FilterRun {
    pub times: Vec<f64>,
    pub truth: Vec<Vector>,
    /// Sensor-0 measurements.
    pub measured: Vec<f64>,
    pub inputs: Vec<f64>,
    pub fault_flows: Vec<f64>,
    /// Estimates per estimator (indexed like `Estimator::ALL`).
    pub estimates: [std::result::Result<Vec<Vector>, String>; 3],
    /// ASKF scaling per sample.
    pub phi: Vec<f64>,
    /// Consensus prior means, the quantity behind its collected error `e2`.
    pub consensus_prior: Vec<Vector>,
}

impl FilterRun {
    pub fn estimate(&self, e: Estimator) -> std::result::Result<&[Vector], &str> {
        match &self.estimates[e.index()] {
            Ok(v) => Ok(v),
            Err(s) => Err(s),
        }
    }

    /// Mean squared error per state over the samples.
    pub fn mse(&self, e: Estimator) -> std::result::Result<[f64; 3], String> {
        let est = self.estimate(e).map_err(str::to_string)?;
        Ok(per_state_mse(&self.truth, est))
    }
}

fn per_state_mse(truth: &[Vector], est: &[Vector]) -> [f64; 3] {
    let mut acc = [0.0; 3];
    for (x, xh) in truth.iter().zip(est) {
        for i in 0..3 {
            acc[i] += (x[i] - xh[i]).powi(2);
        }
    }
    acc.map(|s| s / truth.len() as f64)
}

pub fn cell_rng(seed: u64, scenario: usize, repetition: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(((scenario as u64) << 32) | repetition as u64);
    rng
}

fn gaussian(rng: &mut ChaCha8Rng, variance: f64) -> f64 {
    let z: f64 = rng.sample(StandardNormal);
    z * variance.sqrt()
}

/// `u` plus a disturbance held constant over each sampling period.
fn disturbed_input(
    u: &PiecewiseConstantSignal,
    disturbance: &[f64],
    period: f64,
) -> Result<PiecewiseConstantSignal> {
    let slack = 1e-9 * period;
    let mut bps: Vec<f64> = (0..disturbance.len()).map(|j| j as f64 * period).collect();
    bps.extend_from_slice(u.breakpoints());
    bps.sort_by(|a, b| a.partial_cmp(b).expect("finite breakpoints"));
    bps.dedup_by(|a, b| (*a - *b).abs() <= slack);
    let values = bps
        .iter()
        .map(|&b| {
            let j = (((b + slack) / period).floor().max(0.0) as usize).min(disturbance.len() - 1);
            u.value_at(b + slack) + disturbance[j]
        })
        .collect();
    Ok(PiecewiseConstantSignal::new(bps, values)?)
}

pub fn discrete_model(plant: &StateSpace, period: f64, q: f64, r: f64) -> Result<DiscreteModel> {
    let (ad, bd) = linalg::zoh(&plant.a, &plant.b, period);
    Ok(DiscreteModel::new(
        ad,
        bd,
        plant.c.clone(),
        DMatrix::from_element(1, 1, q),
        DMatrix::from_element(1, 1, r),
    )?)
}

pub fn filter_run(
    cfg: &ExperimentConfig,
    design: &Design,
    x0: [f64; 3],
    rng: &mut ChaCha8Rng,
) -> Result<FilterRun> {
    let params = cfg.tank_params();
    let u = cfg.input_signal()?;
    let fault = cfg.fault_profile()?;
    let dt = cfg.run.dt;
    let ts = cfg.run.sample_period;
    let m = cfg.decimation();
    let steps = model::number_of_steps(dt, cfg.run.horizon)?;
    let periods = (steps / m).max(1);

    let disturbance: Vec<f64> = (0..periods)
        .map(|_| gaussian(rng, cfg.run.process_noise))
        .collect();
    let noisy_u = disturbed_input(&u, &disturbance, ts)?;
    let truth = model::simulate(&params, &noisy_u, &fault, &Vector::from_row_slice(&x0), dt, cfg.run.horizon)?;

    let sensors = cfg.consensus.sensors;
    let noise: Vec<Vec<f64>> = (0..sensors)
        .map(|_| (0..=periods).map(|_| gaussian(rng, cfg.run.measurement_noise)).collect())
        .collect();

    let idx: Vec<usize> = (0..=periods).map(|j| j * m).collect();
    let times: Vec<f64> = idx.iter().map(|&k| truth.times[k]).collect();
    let truth_s: Vec<Vector> = idx.iter().map(|&k| truth.states[k].clone()).collect();
    let y_true: Vec<f64> = idx.iter().map(|&k| truth.y(k)).collect();
    let measured: Vec<f64> = y_true.iter().zip(&noise[0]).map(|(y, v)| y + v).collect();
    let inputs: Vec<f64> = times.iter().map(|&t| u.sample(t, dt)).collect();
    let fault_flows: Vec<f64> = idx.iter().map(|&k| truth.fault_flows[k]).collect();
    let xhat0 = Vector::from_row_slice(&cfg.observer.xhat0);

    // Luenberger: continuous observer on the integration grid; the sensor
    // reading is held between samples.
    let luenberger = (|| -> tankfdi_core::Result<Vec<Vector>> {
        let y_fine: Vec<f64> = (0..=periods * m)
            .map(|k| truth.y(k) + noise[0][k / m])
            .collect();
        let obs = observer::run_luenberger(&design.plant, &design.observer.psi, &u, &y_fine, &xhat0, dt)?;
        Ok(idx.iter().map(|&k| obs.states[k].clone()).collect())
    })();

    let filter_inputs: Vec<Vector> = inputs[..periods].iter().map(|&v| Vector::from_element(1, v)).collect();

    let mut phi = vec![cfg.askf.phi0];
    let askf_est = (|| -> tankfdi_core::Result<Vec<Vector>> {
        let dm = discrete_model(&design.plant, ts, cfg.askf.q, cfg.askf.r)
            .map_err(|e| tankfdi_core::Error::Numerical(e.to_string()))?;
        let ys: Vec<Vector> = measured[1..].iter().map(|&y| Vector::from_element(1, y)).collect();
        let p0 = Matrix::identity(3, 3) * cfg.askf.p0;
        let states = askf::run_askf(&dm, &cfg.askf.scaling(), &xhat0, &p0, &filter_inputs, &ys)?;
        phi.extend(states.iter().map(|s| s.phi));
        Ok(std::iter::once(xhat0.clone()).chain(states.into_iter().map(|s| s.xhat)).collect())
    })();

    let mut consensus_prior = vec![xhat0.clone()];
    let consensus_est = (|| -> tankfdi_core::Result<Vec<Vector>> {
        let dm = discrete_model(&design.plant, ts, cfg.consensus.q, cfg.consensus.r)
            .map_err(|e| tankfdi_core::Error::Numerical(e.to_string()))?;
        let net = SensorNetwork::identical(
            design.plant.c.clone(),
            DMatrix::from_element(1, 1, cfg.consensus.r),
            sensors,
        )?;
        let ys: Vec<Vec<Vector>> = (1..=periods)
            .map(|j| {
                noise
                    .iter()
                    .map(|v| Vector::from_element(1, y_true[j] + v[j]))
                    .collect()
            })
            .collect();
        let p0 = Matrix::identity(3, 3) * cfg.consensus.p0;
        let opts = ConsensusOptions {
            prior_scaling: cfg.consensus.prior_scaling.into(),
            include_input: cfg.consensus.include_input,
        };
        let states = consensus::run_consensus(&dm, &net, &xhat0, &p0, &filter_inputs, &ys, opts)?;
        consensus_prior.extend(states.iter().map(|s| s.xbar.clone()));
        Ok(std::iter::once(xhat0.clone()).chain(states.into_iter().map(|s| s.xm)).collect())
    })();

    Ok(FilterRun {
        times,
        truth: truth_s,
        measured,
        inputs,
        fault_flows,
        estimates: [
            luenberger.map_err(|e| e.to_string()),
            askf_est.map_err(|e| e.to_string()),
            consensus_est.map_err(|e| e.to_string()),
        ],
        phi,
        consensus_prior,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct MseCell {
    pub per_state: [f64; 3],
    /// Sum of the per-state MSEs.
    pub aggregate: f64,
    /// Standard error of the aggregate across repetitions.
    pub std_error: f64,
    pub repetitions: usize,
}

impl MseCell {
    fn from_reps(reps: &[[f64; 3]]) -> Self {
        let k = reps.len() as f64;
        let mut per_state = [0.0; 3];
        for r in reps {
            for i in 0..3 {
                per_state[i] += r[i] / k;
            }
        }
        let totals: Vec<f64> = reps.iter().map(|r| r.iter().sum()).collect();
        let aggregate: f64 = per_state.iter().sum();
        let std_error = if reps.len() > 1 {
            let var = totals.iter().map(|t| (t - aggregate).powi(2)).sum::<f64>() / (k - 1.0);
            (var / k).sqrt()
        } else {
            0.0
        };
        Self {
            per_state,
            aggregate,
            std_error,
            repetitions: reps.len(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MseRow {
    pub estimator: Estimator,
    pub scenario: usize,
    pub cell: std::result::Result<MseCell, String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MseTable {
    pub rows: Vec<MseRow>,
}

impl MseTable {
    pub fn cell(&self, estimator: Estimator, scenario: usize) -> Option<&MseRow> {
        self.rows
            .iter()
            .find(|r| r.estimator == estimator && r.scenario == scenario)
    }

    /// Aggregate MSE summed over scenarios; `None` if any cell failed.
    pub fn total(&self, estimator: Estimator) -> Option<f64> {
        self.rows
            .iter()
            .filter(|r| r.estimator == estimator)
            .map(|r| r.cell.as_ref().ok().map(|c| c.aggregate))
            .sum()
    }
}

/// Runs `monte_carlo` repetitions per scenario in parallel and merges the
/// per-state MSEs in (scenario, repetition) order.
pub fn compare(cfg: &ExperimentConfig, design: &Design) -> Result<(MseTable, Vec<FilterRun>)> {
    let scenarios = cfg.run.initial_conditions.len();
    let reps = cfg.run.monte_carlo;
    let cells: Vec<(usize, usize)> = (0..scenarios)
        .flat_map(|s| (0..reps).map(move |r| (s, r)))
        .collect();
    let runs: Vec<Result<FilterRun>> = cells
        .par_iter()
        .map(|&(s, r)| {
            let mut rng = cell_rng(cfg.run.seed, s, r);
            filter_run(cfg, design, cfg.run.initial_conditions[s], &mut rng)
        })
        .collect();

    let mut rows = Vec::new();
    let mut first_runs = Vec::new();
    for s in 0..scenarios {
        let scenario_runs = &runs[s * reps..(s + 1) * reps];
        for est in Estimator::ALL {
            let mut per_rep = Vec::with_capacity(reps);
            let mut failure = None;
            for run in scenario_runs {
                match run.as_ref().map_err(|e| e.to_string()).and_then(|r| r.mse(est)) {
                    Ok(v) => per_rep.push(v),
                    Err(e) => {
                        failure = Some(e);
                        break;
                    }
                }
            }
            rows.push(MseRow {
                estimator: est,
                scenario: s,
                cell: match failure {
                    Some(e) => Err(e),
                    None => Ok(MseCell::from_reps(&per_rep)),
                },
            });
        }
        if let Ok(r) = &scenario_runs[0] {
            first_runs.push(r.clone());
        }
    }
    // Surface a failure of the truth simulation itself.
    if first_runs.len() != scenarios {
        if let Some(Err(e)) = runs.into_iter().find(|r| r.is_err()) {
            return Err(e);
        }
    }
    Ok((MseTable { rows }, first_runs))
}

#[derive(Debug, Clone)]
pub struct RunArtifacts {
    pub design: Design,
    pub detections: Vec<DetectionRun>,
    pub mse: MseTable,
    /// Repetition 0 of each scenario, written to the estimator CSVs.
    pub filter_runs: Vec<FilterRun>,
}

pub fn detect_all(cfg: &ExperimentConfig, design: &Design) -> Result<Vec<DetectionRun>> {
    cfg.run
        .initial_conditions
        .par_iter()
        .map(|&x0| detection_run(cfg, design, x0))
        .collect()
}

pub fn run_experiment(cfg: &ExperimentConfig) -> Result<RunArtifacts> {
    cfg.validate()?;
    let design = design(cfg)?;
    let detections = detect_all(cfg, &design)?;
    let (mse, filter_runs) = compare(cfg, &design)?;
    Ok(RunArtifacts {
        design,
        detections,
        mse,
        filter_runs,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct CalibrationRow {
    pub delta_bar: f64,
    pub detection_times: Vec<Option<f64>>,
    /// Largest deviation from the reference times (infinite if undetected).
    pub max_deviation: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CalibrationReport {
    pub rows: Vec<CalibrationRow>,
    pub best: CalibrationRow,
}

/// Scans the leak coefficient over `grid` and reports how closely the
/// detection times of the configured scenarios match the reference values.
pub fn calibrate(cfg: &ExperimentConfig, grid: &[f64]) -> Result<CalibrationReport> {
    let design = design(cfg)?;
    let refs = &REFERENCE_DETECTION_TIMES[..cfg.run.initial_conditions.len().min(3)];
    let rows: Vec<CalibrationRow> = grid
        .par_iter()
        .map(|&delta_bar| -> Result<CalibrationRow> {
            let mut c = cfg.clone();
            c.fault.delta_bar = delta_bar;
            let times: Vec<Option<f64>> = c.run.initial_conditions[..refs.len()]
                .iter()
                .map(|&x0| detection_run(&c, &design, x0).map(|d| d.report.t_d))
                .collect::<Result<_>>()?;
            let max_deviation = times
                .iter()
                .zip(refs)
                .map(|(t, r)| t.map_or(f64::INFINITY, |t| (t - r).abs()))
                .fold(0.0, f64::max);
            Ok(CalibrationRow {
                delta_bar,
                detection_times: times,
                max_deviation,
            })
        })
        .collect::<Result<_>>()?;
    let best = rows
        .iter()
        .min_by(|a, b| a.max_deviation.total_cmp(&b.max_deviation))
        .cloned()
        .expect("non-empty grid");
    Ok(CalibrationReport { rows, best })
}
