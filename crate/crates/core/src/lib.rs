//! Simulation and estimation core for entangled-photon and classical
//! transmission ellipsometry.
//!
//! * [`polcore`]: Jones matrices for rotators, retarders and polarizers.
//! * [`biphoton`]: two-photon state evolution, joint projective measurements
//!   and the closed-form coincidence models.
//! * [`classical_psa`]: the classical polarizer–sample–analyzer counterpart.
//! * [`detection`]: count budgets, shot noise and sweep datasets.
//! * [`estimation`]: retardance fitting, Senarmont extremum estimation and
//!   initial-condition sensitivity.
//! * [`characterization`]: visibility, CHSH, fidelity and maximum-likelihood
//!   tomography of the source.

pub mod biphoton;
pub mod characterization;
pub mod classical_psa;
pub mod detection;
pub mod error;
pub mod estimation;
pub mod polcore;

pub use biphoton::{AnalyzerConfig, BiphotonDensity, BiphotonState, ModelValue, Port, ProjectorSetting};
pub use classical_psa::PsaConfig;
pub use detection::{DetectionModel, Mode, SampleSpec, Sampling, SweepDataset, SweepPlan, SweepRecord};
pub use error::{Error, Result};
pub use estimation::{FitConfig, FitModel, FitResult, SensitivityReport, Summary};
pub use polcore::{PhysicalSample, PolAngle, PolOperator, Retardance};
