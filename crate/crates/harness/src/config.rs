//! Experiment configuration: a TOML file with the sections `[plant]`,
//! `[input]`, `[fault]`, `[observer]`, `[askf]`, `[consensus]` and `[run]`.
//! Every key is optional and defaults to the benchmark scenario; unknown keys
//! are rejected.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use tankfdi_core::askf::ScalingParams;
use tankfdi_core::consensus::PriorScaling;
use tankfdi_core::detect::ThresholdBound;
use tankfdi_core::model::{FaultProfile, PiecewiseConstantSignal, TankParams};

use crate::error::{HarnessError, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PlantConfig {
    pub psi: [f64; 3],
    pub delta: [f64; 3],
}

impl Default for PlantConfig {
    fn default() -> Self {
        let p = TankParams::benchmark();
        Self {
            psi: p.psi,
            delta: p.delta,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct InputConfig {
    pub breakpoints: Vec<f64>,
    pub values: Vec<f64>,
}

impl Default for InputConfig {
    fn default() -> Self {
        let u = PiecewiseConstantSignal::benchmark();
        Self {
            breakpoints: u.breakpoints().to_vec(),
            values: u.values().to_vec(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FaultConfig {
    pub t_f: f64,
    /// Leak coefficient; 0.5 reproduces the reference detection times.
    pub delta_bar: f64,
}

impl Default for FaultConfig {
    fn default() -> Self {
        Self {
            t_f: 2.0,
            delta_bar: 0.5,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ThresholdKind {
    /// Absolute value of each mode's coefficient at the worst-case corner.
    Modal,
    /// Absolute value per mode and per initial-error component.
    #[default]
    Componentwise,
}

impl From<ThresholdKind> for ThresholdBound {
    fn from(k: ThresholdKind) -> Self {
        match k {
            ThresholdKind::Modal => ThresholdBound::ModalAbsolute,
            ThresholdKind::Componentwise => ThresholdBound::Componentwise,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ObserverConfig {
    pub poles: Vec<f64>,
    /// Initial estimate shared by every estimator.
    pub xhat0: [f64; 3],
    /// Box of admissible initial states used for the threshold.
    pub x_lo: [f64; 3],
    pub x_hi: [f64; 3],
    pub threshold: ThresholdKind,
    /// Absolute allowance for numerical error in the computed residual.
    pub threshold_floor: f64,
}

impl Default for ObserverConfig {
    fn default() -> Self {
        Self {
            poles: vec![-5.0, -8.0, -10.0],
            xhat0: [0.25; 3],
            x_lo: [0.25; 3],
            x_hi: [4.0; 3],
            threshold: ThresholdKind::default(),
            threshold_floor: 1e-9,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AskfConfig {
    pub a: f64,
    pub b: f64,
    pub c: f64,
    pub phi0: f64,
    /// Process-noise variance assumed by the filter.
    pub q: f64,
    /// Measurement-noise variance assumed by the filter.
    pub r: f64,
    /// Initial covariance `p0 * I`.
    pub p0: f64,
}

impl Default for AskfConfig {
    fn default() -> Self {
        let s = ScalingParams::default();
        Self {
            a: s.a,
            b: s.b,
            c: s.c,
            phi0: s.phi0,
            q: 1e-4,
            r: 1e-4,
            p0: 1.0,
        }
    }
}

impl AskfConfig {
    pub fn scaling(&self) -> ScalingParams {
        ScalingParams {
            a: self.a,
            b: self.b,
            c: self.c,
            phi0: self.phi0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PriorScalingKind {
    #[default]
    One,
    SensorCount,
}

impl From<PriorScalingKind> for PriorScaling {
    fn from(k: PriorScalingKind) -> Self {
        match k {
            PriorScalingKind::One => PriorScaling::One,
            PriorScalingKind::SensorCount => PriorScaling::SensorCount,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ConsensusConfig {
    /// Identical sensors on the plant output; sensor 0 shares the measurement
    /// stream of the other estimators.
    pub sensors: usize,
    pub prior_scaling: PriorScalingKind,
    /// Add `B u` when propagating the mean.
    pub include_input: bool,
    pub q: f64,
    pub r: f64,
    pub p0: f64,
}

impl Default for ConsensusConfig {
    fn default() -> Self {
        Self {
            sensors: 3,
            prior_scaling: PriorScalingKind::One,
            include_input: true,
            q: 1e-4,
            r: 1e-4,
            p0: 1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    /// Integration step (s).
    pub dt: f64,
    pub horizon: f64,
    /// Filter sampling period (s); an integer multiple of `dt`.
    pub sample_period: f64,
    pub seed: u64,
    pub monte_carlo: usize,
    pub initial_conditions: Vec<[f64; 3]>,
    /// Variance of the input disturbance in the truth simulation.
    pub process_noise: f64,
    /// Variance of the output measurement noise.
    pub measurement_noise: f64,
    pub out_dir: PathBuf,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            dt: 1e-3,
            horizon: 10.0,
            sample_period: 0.01,
            seed: 2024,
            monte_carlo: 20,
            initial_conditions: vec![[0.26; 3], [4.0; 3], [2.4, 3.6, 1.8]],
            process_noise: 1e-4,
            measurement_noise: 1e-4,
            out_dir: PathBuf::from("out"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub plant: PlantConfig,
    pub input: InputConfig,
    pub fault: FaultConfig,
    pub observer: ObserverConfig,
    pub askf: AskfConfig,
    pub consensus: ConsensusConfig,
    pub run: RunConfig,
}

fn positive(name: &str, v: f64) -> Result<()> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(HarnessError::Validation(format!("{name} = {v} must be positive")))
    }
}

fn nonnegative(name: &str, v: f64) -> Result<()> {
    if v >= 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(HarnessError::Validation(format!("{name} = {v} must be nonnegative")))
    }
}

impl ExperimentConfig {
    pub fn from_toml_str(text: &str, origin: &Path) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| HarnessError::Config {
            path: origin.to_path_buf(),
            message: e.to_string(),
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn tank_params(&self) -> TankParams {
        TankParams {
            psi: self.plant.psi,
            delta: self.plant.delta,
            delta_bar: self.fault.delta_bar,
        }
    }

    pub fn input_signal(&self) -> Result<PiecewiseConstantSignal> {
        Ok(PiecewiseConstantSignal::new(
            self.input.breakpoints.clone(),
            self.input.values.clone(),
        )?)
    }

    pub fn fault_profile(&self) -> Result<FaultProfile> {
        Ok(FaultProfile::new(self.fault.t_f, self.fault.delta_bar)?)
    }

    /// Filter samples per sampling period.
    pub fn decimation(&self) -> usize {
        (self.run.sample_period / self.run.dt).round() as usize
    }

    pub fn validate(&self) -> Result<()> {
        self.tank_params().validate()?;
        self.input_signal()?;
        self.fault_profile()?;

        if self.observer.poles.len() != 3 {
            return Err(HarnessError::Validation(format!(
                "observer.poles needs 3 entries, got {}",
                self.observer.poles.len()
            )));
        }
        if let Some(p) = self.observer.poles.iter().find(|p| p.is_nan() || **p >= 0.0) {
            return Err(HarnessError::Validation(format!(
                "observer pole {p} must be strictly negative"
            )));
        }
        for i in 0..3 {
            let (lo, x, hi) = (self.observer.x_lo[i], self.observer.xhat0[i], self.observer.x_hi[i]);
            if !(lo <= x && x <= hi) {
                return Err(HarnessError::Validation(format!(
                    "observer box: need x_lo <= xhat0 <= x_hi for state {}, got {lo} <= {x} <= {hi}",
                    i + 1
                )));
            }
        }

        nonnegative("observer.threshold_floor", self.observer.threshold_floor)?;
        self.askf.scaling().validate()?;
        nonnegative("askf.q", self.askf.q)?;
        positive("askf.r", self.askf.r)?;
        positive("askf.p0", self.askf.p0)?;

        if self.consensus.sensors == 0 {
            return Err(HarnessError::Validation("consensus.sensors must be at least 1".into()));
        }
        nonnegative("consensus.q", self.consensus.q)?;
        positive("consensus.r", self.consensus.r)?;
        positive("consensus.p0", self.consensus.p0)?;

        positive("run.dt", self.run.dt)?;
        positive("run.horizon", self.run.horizon)?;
        positive("run.sample_period", self.run.sample_period)?;
        let ratio = self.run.sample_period / self.run.dt;
        if ratio < 1.0 - 1e-9 || (ratio - ratio.round()).abs() > 1e-6 * ratio {
            return Err(HarnessError::Validation(format!(
                "run.sample_period = {} must be an integer multiple of run.dt = {}",
                self.run.sample_period, self.run.dt
            )));
        }
        if self.run.sample_period > self.run.horizon {
            return Err(HarnessError::Validation("run.sample_period exceeds run.horizon".into()));
        }
        if self.run.monte_carlo == 0 {
            return Err(HarnessError::Validation("run.monte_carlo must be at least 1".into()));
        }
        if self.run.initial_conditions.is_empty() {
            return Err(HarnessError::Validation("run.initial_conditions is empty".into()));
        }
        if self
            .run
            .initial_conditions
            .iter()
            .flatten()
            .any(|v| !v.is_finite())
        {
            return Err(HarnessError::Validation("run.initial_conditions must be finite".into()));
        }
        nonnegative("run.process_noise", self.run.process_noise)?;
        nonnegative("run.measurement_noise", self.run.measurement_noise)?;
        Ok(())
    }
}

/// Reads and validates a configuration file; an empty file yields the defaults.
pub fn load_config(path: impl AsRef<Path>) -> Result<ExperimentConfig> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| HarnessError::io(path, e))?;
    ExperimentConfig::from_toml_str(&text, path)
}
