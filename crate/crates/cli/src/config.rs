//! JSON experiment configs. Angles are given in degrees and converted here.

use std::path::Path;

use entangleometer_core::estimation::{Estimator, Weighting};
use entangleometer_core::polcore::retardance_of;
use entangleometer_core::{
    DetectionModel, FitConfig, FitModel, Mode, PhysicalSample, PolAngle, Retardance, SampleSpec, Sampling, SweepPlan,
};
use serde::{de::DeserializeOwned, Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{CliError, CliResult};

pub fn load_json<T: DeserializeOwned>(path: &Path) -> CliResult<T> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))
}

/// Hex SHA-256 of the compact JSON serialization.
pub fn config_hash<T: Serialize>(config: &T) -> String {
    let bytes = serde_json::to_vec(config).expect("config serializes");
    hex::encode(Sha256::digest(&bytes))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PhysicalConfig {
    pub wavelength_nm: f64,
    pub birefringence: f64,
    pub thickness_nm: f64,
}

/// Sample axis plus either a retardance or the physical parameters producing it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SampleConfig {
    pub axis_deg: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub retardance_rad: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub physical: Option<PhysicalConfig>,
}

impl SampleConfig {
    pub fn spec(&self) -> CliResult<SampleSpec> {
        let axis = PolAngle::deg(self.axis_deg);
        let delta = match (self.retardance_rad, &self.physical) {
            (Some(d), None) => Retardance(d),
            (None, Some(p)) => retardance_of(&PhysicalSample {
                wavelength_nm: p.wavelength_nm,
                birefringence: p.birefringence,
                thickness_nm: p.thickness_nm,
                axis,
            })?,
            _ => return Err(CliError::Config("sample needs exactly one of `retardance_rad` or `physical`".into())),
        };
        if !delta.0.is_finite() || !axis.0.is_finite() {
            return Err(CliError::Config("sample angle and retardance must be finite".into()));
        }
        Ok(SampleSpec::new(axis, delta))
    }
}

fn default_stop() -> f64 {
    180.0
}

fn default_points() -> usize {
    36
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepConfig {
    /// Signal HWP `h_s` (quantum) or polarizer `p` (classical).
    pub fixed_deg: f64,
    #[serde(default)]
    pub start_deg: f64,
    #[serde(default = "default_stop")]
    pub stop_deg: f64,
    #[serde(default = "default_points")]
    pub points: usize,
    /// Explicit angles; overrides start/stop/points.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub angles_deg: Option<Vec<f64>>,
}

impl SweepConfig {
    pub fn angles(&self) -> Vec<PolAngle> {
        match &self.angles_deg {
            Some(a) => a.iter().map(|&d| PolAngle::deg(d)).collect(),
            None => SweepPlan::uniform_angles(self.start_deg.to_radians(), self.stop_deg.to_radians(), self.points),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelChoice {
    /// Follow the experiment's mode and compensator flag.
    #[default]
    Auto,
    Senarmont,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EstimatorChoice {
    #[default]
    LeastSquares,
    SenarmontExtremum,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FitSettings {
    pub model: ModelChoice,
    pub estimator: EstimatorChoice,
    pub initial_delta_rad: Option<f64>,
    pub initial_scale: Option<f64>,
    pub max_iterations: usize,
    pub convergence_tol: f64,
    pub scale_perturbation: f64,
    pub dependence_threshold: f64,
    pub weighting: Weighting,
}

impl Default for FitSettings {
    fn default() -> Self {
        let base = FitConfig::new(FitModel::Senarmont);
        FitSettings {
            model: ModelChoice::Auto,
            estimator: EstimatorChoice::LeastSquares,
            initial_delta_rad: None,
            initial_scale: None,
            max_iterations: base.max_iterations,
            convergence_tol: base.convergence_tol,
            scale_perturbation: base.scale_perturbation,
            dependence_threshold: base.dependence_threshold,
            weighting: base.weighting,
        }
    }
}

impl FitSettings {
    pub fn resolve_model(&self, mode: Mode, compensator: bool, fixed: PolAngle, theta: PolAngle) -> FitModel {
        match (self.model, mode, compensator) {
            (ModelChoice::Senarmont, _, _) => FitModel::Senarmont,
            (ModelChoice::Auto, Mode::Quantum, false) => FitModel::NoCompensator { h_signal: fixed, theta },
            (ModelChoice::Auto, Mode::Quantum, true) => FitModel::Compensator { h_signal: fixed, theta },
            (ModelChoice::Auto, Mode::Classical, compensator) => FitModel::ClassicalPsa { polarizer: fixed, theta, compensator },
        }
    }

    pub fn fit_config(&self, model: FitModel) -> CliResult<FitConfig> {
        let cfg = FitConfig {
            model,
            initial_delta: self.initial_delta_rad.map(Retardance),
            initial_scale: self.initial_scale,
            max_iterations: self.max_iterations,
            convergence_tol: self.convergence_tol,
            scale_perturbation: self.scale_perturbation,
            dependence_threshold: self.dependence_threshold,
            weighting: self.weighting,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn estimator(&self, model: FitModel) -> CliResult<Estimator> {
        Ok(match self.estimator {
            EstimatorChoice::LeastSquares => Estimator::LeastSquares(self.fit_config(model)?),
            EstimatorChoice::SenarmontExtremum => Estimator::SenarmontExtremum,
        })
    }
}

fn one() -> usize {
    1
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub mode: Mode,
    #[serde(default)]
    pub compensator: bool,
    pub sample: SampleConfig,
    pub sweep: SweepConfig,
    #[serde(default)]
    pub sampling: Sampling,
    #[serde(default)]
    pub detection: DetectionModel,
    #[serde(default)]
    pub fit: FitSettings,
    #[serde(default = "one")]
    pub repetitions: usize,
    /// Sample axes for a varying-axis run; replaces `sample.axis_deg`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub axis_schedule_deg: Option<Vec<f64>>,
    #[serde(default)]
    pub seed: u64,
    /// Reference retardance for relative errors; defaults to the sample's.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub delta_std: Option<f64>,
    #[serde(default)]
    pub override_validity: bool,
}

/// One simulated run: index, sample and derived seed.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RunSpec {
    pub index: usize,
    pub sample: SampleSpec,
    pub seed: u64,
}

impl ExperimentConfig {
    pub fn validate(&self) -> CliResult<()> {
        if self.repetitions < 1 {
            return Err(CliError::Config("repetitions must be >= 1".into()));
        }
        if let Some(s) = &self.axis_schedule_deg {
            if s.is_empty() {
                return Err(CliError::Config("axis_schedule_deg must not be empty".into()));
            }
        }
        self.detection.validate()?;
        self.plan().validate()?;
        self.sample.spec()?;
        Ok(())
    }

    pub fn plan(&self) -> SweepPlan {
        let fixed = PolAngle::deg(self.sweep.fixed_deg);
        let mut plan = match self.mode {
            Mode::Quantum => SweepPlan::quantum(fixed, self.sweep.angles(), self.compensator),
            Mode::Classical => SweepPlan::classical(fixed, self.sweep.angles(), self.compensator),
        }
        .with_sampling(self.sampling);
        plan.override_validity = self.override_validity;
        plan
    }

    /// Runs ordered by (axis, repetition); run `k` uses `derive_seed(seed, k)`.
    pub fn runs(&self) -> CliResult<Vec<RunSpec>> {
        let base = self.sample.spec()?;
        let axes: Vec<PolAngle> = match &self.axis_schedule_deg {
            Some(s) => s.iter().map(|&d| PolAngle::deg(d)).collect(),
            None => vec![base.theta],
        };
        let mut runs = Vec::with_capacity(axes.len() * self.repetitions);
        for theta in axes {
            for _ in 0..self.repetitions {
                let index = runs.len();
                runs.push(RunSpec {
                    index,
                    sample: SampleSpec::new(theta, base.delta),
                    seed: entangleometer_core::detection::derive_seed(self.seed, index as u64),
                });
            }
        }
        Ok(runs)
    }

    pub fn fit_model(&self, theta: PolAngle) -> FitModel {
        self.fit.resolve_model(self.mode, self.compensator, PolAngle::deg(self.sweep.fixed_deg), theta)
    }

    pub fn delta_std(&self) -> CliResult<f64> {
        Ok(match self.delta_std {
            Some(d) => d,
            None => self.sample.spec()?.delta.0,
        })
    }
}

fn default_visibility() -> f64 {
    1.0
}

fn default_fringe_points() -> usize {
    36
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StateConfig {
    /// Werner mixing weight `v` of the Bell state.
    #[serde(default = "default_visibility")]
    pub visibility: f64,
}

impl Default for StateConfig {
    fn default() -> Self {
        StateConfig { visibility: 1.0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CharacterizeConfig {
    #[serde(default)]
    pub state: StateConfig,
    #[serde(default)]
    pub detection: DetectionModel,
    #[serde(default = "default_fringe_points")]
    pub fringe_points: usize,
    #[serde(default)]
    pub sampling: Sampling,
    /// `[a, a', b, b']` analyzer polarization angles.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub chsh_settings_deg: Option<[f64; 4]>,
    #[serde(default)]
    pub seed: u64,
}
