//! From ideal probabilities to photon counts.
//!
//! Coincidence budget: `pair_rate·η_s·η_i·p·T + R_s·R_i·τ·T`, where the singles
//! rates `R = pair_rate·η/2 + dark` use the unpolarized single-arm marginal of a
//! maximally entangled pair (unchanged by local unitaries and by depolarization).
//! Dark counts enter the singles, never the true coincidences, and accidentals
//! are never subtracted from generated data.
//!
//! Shot noise is drawn from per-record ChaCha streams keyed by `(seed, index)`,
//! so datasets do not depend on evaluation order or thread count.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Poisson};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::biphoton::{coincidence_probability, sample_state, sweep_validity, AnalyzerConfig};
use crate::classical_psa::{psa_intensity, PsaConfig};
use crate::error::{Error, Result};
use crate::polcore::{retardance_of, PhysicalSample, PolAngle, Retardance};

pub const CSV_HEADER: &str = "angle_rad,counts,integration_s";
pub const SCHEMA_VERSION: u32 = 1;

/// Detector and source parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DetectionModel {
    /// Entangled pairs per second emitted into the two collection modes.
    pub pair_rate: f64,
    pub efficiency_signal: f64,
    pub efficiency_idler: f64,
    pub dark_rate_signal: f64,
    pub dark_rate_idler: f64,
    /// Coincidence window in seconds.
    pub coincidence_window: f64,
    /// Integration time per record in seconds.
    pub integration_time: f64,
    /// Detected count rate of the classical single-beam mode at full transmission.
    pub singles_rate_classical: f64,
}

impl Default for DetectionModel {
    fn default() -> Self {
        DetectionModel {
            // placeholder: the coincidence rate of the entangled source is not reported
            pair_rate: 2.0e4,
            efficiency_signal: 0.60,
            efficiency_idler: 0.60,
            dark_rate_signal: 360.0,
            dark_rate_idler: 360.0,
            coincidence_window: 1e-9,
            integration_time: 10.0,
            singles_rate_classical: 2.1e5,
        }
    }
}

impl DetectionModel {
    /// Background-free model whose expected coincidences are `counts·p` per record.
    pub fn ideal(counts_per_record: f64) -> Self {
        DetectionModel {
            pair_rate: counts_per_record,
            efficiency_signal: 1.0,
            efficiency_idler: 1.0,
            dark_rate_signal: 0.0,
            dark_rate_idler: 0.0,
            coincidence_window: 0.0,
            integration_time: 1.0,
            singles_rate_classical: counts_per_record,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let nonneg = [
            ("pair_rate", self.pair_rate),
            ("dark_rate_signal", self.dark_rate_signal),
            ("dark_rate_idler", self.dark_rate_idler),
            ("singles_rate_classical", self.singles_rate_classical),
        ];
        for (name, v) in nonneg {
            if !(v >= 0.0) || !v.is_finite() {
                return Err(Error::InvalidInput(format!("{name} must be finite and >= 0, got {v}")));
            }
        }
        for (name, v) in [("efficiency_signal", self.efficiency_signal), ("efficiency_idler", self.efficiency_idler)] {
            if !(0.0..=1.0).contains(&v) {
                return Err(Error::InvalidInput(format!("{name} must lie in [0, 1], got {v}")));
            }
        }
        if !(self.coincidence_window >= 0.0) || !self.coincidence_window.is_finite() {
            return Err(Error::InvalidInput(format!("coincidence_window must be >= 0, got {}", self.coincidence_window)));
        }
        if !(self.integration_time > 0.0) || !self.integration_time.is_finite() {
            return Err(Error::InvalidInput(format!("integration_time must be > 0, got {}", self.integration_time)));
        }
        Ok(())
    }

    /// Single-arm detection rates `(R_s, R_i)` including dark counts.
    pub fn singles_rates(&self) -> (f64, f64) {
        (
            0.5 * self.pair_rate * self.efficiency_signal + self.dark_rate_signal,
            0.5 * self.pair_rate * self.efficiency_idler + self.dark_rate_idler,
        )
    }

    pub fn accidental_rate(&self) -> f64 {
        let (rs, ri) = self.singles_rates();
        accidental_rate(rs, ri, self.coincidence_window)
    }

    /// Detected true-coincidence rate at unit probability.
    pub fn coincidence_scale(&self) -> f64 {
        self.pair_rate * self.efficiency_signal * self.efficiency_idler
    }
}

/// Accidental coincidence rate `R_s·R_i·τ`.
pub fn accidental_rate(singles_signal: f64, singles_idler: f64, window: f64) -> f64 {
    singles_signal * singles_idler * window
}

fn check_probability(p: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&p) {
        return Err(Error::InvalidInput(format!("probability must lie in [0, 1], got {p}")));
    }
    Ok(())
}

/// Mean coincidence count for joint detection probability `p` over one integration time.
pub fn expected_coincidences(p: f64, model: &DetectionModel) -> Result<f64> {
    check_probability(p)?;
    Ok((model.coincidence_scale() * p + model.accidental_rate()) * model.integration_time)
}

/// Mean count of the classical single-beam mode at transmitted fraction `intensity`.
pub fn expected_classical_counts(intensity: f64, model: &DetectionModel) -> Result<f64> {
    check_probability(intensity)?;
    Ok((model.singles_rate_classical * intensity + model.dark_rate_idler) * model.integration_time)
}

/// Deterministic Poisson variate for `(seed, stream)`.
pub fn sample_counts(mean: f64, seed: u64, stream: u64) -> Result<u64> {
    if !(mean >= 0.0) || !mean.is_finite() {
        return Err(Error::InvalidInput(format!("Poisson mean must be finite and >= 0, got {mean}")));
    }
    if mean == 0.0 {
        return Ok(0);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    let dist = Poisson::new(mean).map_err(|e| Error::InvalidInput(e.to_string()))?;
    Ok(dist.sample(&mut rng) as u64)
}

/// SplitMix64 finalizer; derives independent sub-seeds from a master seed.
pub fn derive_seed(seed: u64, salt: u64) -> u64 {
    let mut z = seed ^ salt.wrapping_mul(0x9E37_79B9_7F4A_7C15).wrapping_add(0x632B_E59B_D9B4_E019);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Whether records carry Poisson-sampled counts or the exact means.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Sampling {
    #[default]
    Poisson,
    Expected,
}

impl Sampling {
    pub fn draw(self, mean: f64, seed: u64, stream: u64) -> Result<f64> {
        match self {
            Sampling::Expected => Ok(mean),
            Sampling::Poisson => Ok(sample_counts(mean, seed, stream)? as f64),
        }
    }
}

/// Birefringent sample under test.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SampleSpec {
    pub theta: PolAngle,
    pub delta: Retardance,
}

impl SampleSpec {
    pub fn new(theta: PolAngle, delta: Retardance) -> Self {
        SampleSpec { theta, delta }
    }

    pub fn from_physical(sample: &PhysicalSample) -> Result<Self> {
        Ok(SampleSpec { theta: sample.axis, delta: retardance_of(sample)? })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    Quantum,
    Classical,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweptParameter {
    IdlerHwp,
    Analyzer,
}

/// A sweep of the idler HWP (quantum) or the analyzer (classical).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepPlan {
    pub mode: Mode,
    pub angles: Vec<PolAngle>,
    /// Signal HWP angle `h_s` (quantum) or polarizer angle `p` (classical).
    pub fixed_angle: PolAngle,
    pub compensator: bool,
    pub sampling: Sampling,
    /// Permit quantum sweeps whose counts do not depend on `δ`.
    pub override_validity: bool,
}

impl SweepPlan {
    pub const MIN_ANGLES: usize = 4;

    pub fn quantum(h_signal: PolAngle, angles: Vec<PolAngle>, compensator: bool) -> Self {
        SweepPlan {
            mode: Mode::Quantum,
            angles,
            fixed_angle: h_signal,
            compensator,
            sampling: Sampling::Poisson,
            override_validity: false,
        }
    }

    pub fn classical(polarizer: PolAngle, angles: Vec<PolAngle>, compensator: bool) -> Self {
        SweepPlan { mode: Mode::Classical, fixed_angle: polarizer, ..Self::quantum(polarizer, angles, compensator) }
    }

    pub fn with_sampling(mut self, sampling: Sampling) -> Self {
        self.sampling = sampling;
        self
    }

    pub fn swept_parameter(&self) -> SweptParameter {
        match self.mode {
            Mode::Quantum => SweptParameter::IdlerHwp,
            Mode::Classical => SweptParameter::Analyzer,
        }
    }

    /// `n` evenly spaced angles over `[start, stop)`.
    pub fn uniform_angles(start: f64, stop: f64, n: usize) -> Vec<PolAngle> {
        (0..n).map(|k| PolAngle(start + (stop - start) * k as f64 / n as f64)).collect()
    }

    pub fn validate(&self) -> Result<()> {
        if self.angles.len() < Self::MIN_ANGLES {
            return Err(Error::InvalidPlan(format!(
                "need at least {} angles, got {}",
                Self::MIN_ANGLES,
                self.angles.len()
            )));
        }
        if self.angles.iter().any(|a| !a.0.is_finite()) || !self.fixed_angle.0.is_finite() {
            return Err(Error::InvalidPlan("angles must be finite".into()));
        }
        if self.angles.windows(2).any(|w| !(w[1].0 > w[0].0)) {
            return Err(Error::InvalidPlan("sweep angles must be strictly increasing".into()));
        }
        Ok(())
    }

    /// Ideal detection probability (quantum) or transmitted fraction (classical) per angle.
    pub fn probabilities(&self, sample: &SampleSpec) -> Vec<f64> {
        match self.mode {
            Mode::Quantum => {
                let state = sample_state(sample.theta, sample.delta);
                self.angles
                    .iter()
                    .map(|&h_i| {
                        let mut cfg = AnalyzerConfig::new(self.fixed_angle, h_i);
                        cfg.compensator_present = self.compensator;
                        coincidence_probability(&state, &cfg)
                    })
                    .collect()
            }
            Mode::Classical => self
                .angles
                .iter()
                .map(|&a| {
                    let mut cfg = PsaConfig::new(self.fixed_angle, a, sample.theta, sample.delta);
                    cfg.compensator_present = self.compensator;
                    psa_intensity(&cfg)
                })
                .collect(),
        }
    }

    /// Mean counts per angle.
    pub fn expected_counts(&self, sample: &SampleSpec, model: &DetectionModel) -> Result<Vec<f64>> {
        self.probabilities(sample)
            .into_iter()
            .map(|p| match self.mode {
                Mode::Quantum => expected_coincidences(p, model),
                Mode::Classical => expected_classical_counts(p, model),
            })
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SweepRecord {
    pub angle: PolAngle,
    pub counts: f64,
    pub integration_s: f64,
}

/// Provenance attached to a dataset; serialized as the JSON sidecar.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetMetadata {
    pub schema_version: u32,
    pub seed: u64,
    pub mode: Mode,
    pub swept_parameter: SweptParameter,
    /// `h_s` (quantum) or `p` (classical), radians.
    pub fixed_angle_rad: f64,
    pub compensator: bool,
    pub sampling: Sampling,
    pub detection: DetectionModel,
    pub ground_truth: Option<SampleSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub config_hash: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub master_seed: Option<u64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepDataset {
    pub records: Vec<SweepRecord>,
    pub metadata: Option<DatasetMetadata>,
}

impl SweepDataset {
    pub fn from_records(records: Vec<SweepRecord>) -> Self {
        SweepDataset { records, metadata: None }
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn angles(&self) -> Vec<f64> {
        self.records.iter().map(|r| r.angle.0).collect()
    }

    pub fn counts(&self) -> Vec<f64> {
        self.records.iter().map(|r| r.counts).collect()
    }

    pub fn total_counts(&self) -> f64 {
        self.records.iter().map(|r| r.counts).sum()
    }

    /// CSV body; floats use the shortest round-trip representation.
    pub fn to_csv_string(&self) -> String {
        let mut out = String::with_capacity(32 * (self.records.len() + 1));
        out.push_str(CSV_HEADER);
        out.push('\n');
        for r in &self.records {
            let _ = writeln!(out, "{},{},{}", r.angle.0, r.counts, r.integration_s);
        }
        out
    }

    pub fn from_csv_str(text: &str) -> Result<Self> {
        let mut lines = text.lines();
        match lines.next() {
            Some(h) if h.trim() == CSV_HEADER => {}
            other => {
                return Err(Error::Parse(format!("expected header `{CSV_HEADER}`, found {other:?}")));
            }
        }
        let mut records = Vec::new();
        for (lineno, line) in lines.enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let fields: Vec<&str> = line.split(',').map(str::trim).collect();
            if fields.len() != 3 {
                return Err(Error::Parse(format!("line {}: expected 3 fields", lineno + 2)));
            }
            let num = |s: &str| {
                s.parse::<f64>()
                    .map_err(|e| Error::Parse(format!("line {}: {e}: {s:?}", lineno + 2)))
            };
            let (angle, counts, integration_s) = (num(fields[0])?, num(fields[1])?, num(fields[2])?);
            if !angle.is_finite() || !counts.is_finite() || counts < 0.0 {
                return Err(Error::Parse(format!("line {}: counts must be finite and >= 0", lineno + 2)));
            }
            records.push(SweepRecord { angle: PolAngle(angle), counts, integration_s });
        }
        Ok(SweepDataset { records, metadata: None })
    }

    pub fn sidecar_path(csv_path: &Path) -> PathBuf {
        csv_path.with_extension("json")
    }

    /// Writes the CSV and, when metadata is present, the JSON sidecar next to it.
    pub fn write(&self, csv_path: &Path) -> Result<()> {
        fs::write(csv_path, self.to_csv_string())?;
        if let Some(meta) = &self.metadata {
            let mut json = serde_json::to_string_pretty(meta)?;
            json.push('\n');
            fs::write(Self::sidecar_path(csv_path), json)?;
        }
        Ok(())
    }

    /// Reads a CSV and its sidecar if one exists.
    pub fn read(csv_path: &Path) -> Result<Self> {
        let mut ds = Self::from_csv_str(&fs::read_to_string(csv_path)?)?;
        let sidecar = Self::sidecar_path(csv_path);
        if sidecar.exists() {
            ds.metadata = Some(serde_json::from_str(&fs::read_to_string(sidecar)?)?);
        }
        Ok(ds)
    }
}

/// Simulates one sweep. Refuses quantum plans whose counts cannot depend on `δ`
/// unless `plan.override_validity` is set.
pub fn run_sweep(plan: &SweepPlan, sample: &SampleSpec, model: &DetectionModel, seed: u64) -> Result<SweepDataset> {
    plan.validate()?;
    model.validate()?;
    if plan.mode == Mode::Quantum && !plan.override_validity && !sweep_validity(plan.fixed_angle.0, sample.theta.0) {
        return Err(Error::InvalidPlan(format!(
            "4h_s + 2θ ≡ 0 (mod π) for h_s = {:.4} rad, θ = {:.4} rad: coincidences do not depend on δ",
            plan.fixed_angle.0, sample.theta.0
        )));
    }
    let means = plan.expected_counts(sample, model)?;
    let counts: Vec<f64> = means
        .par_iter()
        .enumerate()
        .map(|(k, &m)| plan.sampling.draw(m, seed, k as u64))
        .collect::<Result<_>>()?;
    let records = plan
        .angles
        .iter()
        .zip(counts)
        .map(|(&angle, counts)| SweepRecord { angle, counts, integration_s: model.integration_time })
        .collect();
    Ok(SweepDataset {
        records,
        metadata: Some(DatasetMetadata {
            schema_version: SCHEMA_VERSION,
            seed,
            mode: plan.mode,
            swept_parameter: plan.swept_parameter(),
            fixed_angle_rad: plan.fixed_angle.0,
            compensator: plan.compensator,
            sampling: plan.sampling,
            detection: *model,
            ground_truth: Some(*sample),
            config_hash: None,
            master_seed: None,
        }),
    })
}
