//! Command implementations. Each returns its output files in memory; writing
//! happens afterwards in a fixed order.

use std::path::{Path, PathBuf};

use entangleometer_core::biphoton::{bell_phi_plus, depolarize};
use entangleometer_core::characterization::{
    simulate_characterization, uhlmann_fidelity, werner_expectations, CharacterizationPlan, ChshSettings,
};
use entangleometer_core::detection::{run_sweep, DatasetMetadata, SCHEMA_VERSION};
use entangleometer_core::estimation::{aggregate, relative_error, sensitivity_scan, signed_relative_error, Estimator};
use entangleometer_core::{FitModel, FitResult, PolAngle, SensitivityReport, Summary, SweepDataset};
use rayon::prelude::*;
use serde::Serialize;
use serde_json::json;

use crate::config::{config_hash, CharacterizeConfig, ExperimentConfig, RunSpec};
use crate::error::{CliError, CliResult};

pub const TOOL_VERSION: &str = env!("CARGO_PKG_VERSION");

/// A file produced by a command, relative to the output directory.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Artifact {
    pub path: PathBuf,
    pub contents: Vec<u8>,
}

impl Artifact {
    pub fn text(path: impl Into<PathBuf>, contents: String) -> Self {
        Artifact { path: path.into(), contents: contents.into_bytes() }
    }

    pub fn json<T: Serialize>(path: impl Into<PathBuf>, value: &T) -> Self {
        let mut s = serde_json::to_string_pretty(value).expect("report serializes");
        s.push('\n');
        Artifact::text(path, s)
    }
}

pub fn write_artifacts(out_dir: &Path, artifacts: &[Artifact]) -> CliResult<()> {
    for a in artifacts {
        let path = out_dir.join(&a.path);
        if let Some(parent) = path.parent() {
            std::fs::create_dir_all(parent).map_err(|e| CliError::io(parent, e))?;
        }
        std::fs::write(&path, &a.contents).map_err(|e| CliError::io(&path, e))?;
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Provenance {
    pub schema_version: u32,
    pub command: &'static str,
    pub tool_version: &'static str,
    pub config_hash: String,
    pub seed: u64,
}

impl Provenance {
    pub fn new<T: Serialize>(command: &'static str, config: &T, seed: u64) -> Self {
        Provenance { schema_version: SCHEMA_VERSION, command, tool_version: TOOL_VERSION, config_hash: config_hash(config), seed }
    }
}

fn run_name(index: usize) -> String {
    format!("run_{index:04}")
}

fn simulate_runs(config: &ExperimentConfig, hash: &str) -> CliResult<Vec<(RunSpec, SweepDataset)>> {
    config.validate()?;
    let plan = config.plan();
    let runs = config.runs()?;
    let datasets = runs
        .par_iter()
        .map(|run| {
            let mut ds = run_sweep(&plan, &run.sample, &config.detection, run.seed)?;
            if let Some(meta) = ds.metadata.as_mut() {
                meta.config_hash = Some(hash.to_string());
                meta.master_seed = Some(config.seed);
            }
            Ok(ds)
        })
        .collect::<entangleometer_core::Result<Vec<_>>>()?;
    Ok(runs.into_iter().zip(datasets).collect())
}

fn sidecar(meta: &Option<DatasetMetadata>) -> String {
    let mut s = serde_json::to_string_pretty(meta).expect("metadata serializes");
    s.push('\n');
    s
}

/// Simulated sweep datasets, one CSV plus JSON sidecar per run.
pub fn cmd_simulate(config: &ExperimentConfig) -> CliResult<Vec<Artifact>> {
    let provenance = Provenance::new("simulate", config, config.seed);
    let runs = simulate_runs(config, &provenance.config_hash)?;
    let mut artifacts = Vec::with_capacity(2 * runs.len() + 1);
    let mut index = Vec::with_capacity(runs.len());
    for (run, ds) in &runs {
        let name = run_name(run.index);
        artifacts.push(Artifact::text(format!("runs/{name}.csv"), ds.to_csv_string()));
        artifacts.push(Artifact::text(format!("runs/{name}.json"), sidecar(&ds.metadata)));
        index.push(json!({
            "file": format!("runs/{name}.csv"),
            "seed": run.seed,
            "axis_deg": run.sample.theta.degrees(),
            "retardance_rad": run.sample.delta.0,
            "total_counts": ds.total_counts(),
        }));
    }
    artifacts.push(Artifact::json(
        "simulate_report.json",
        &json!({ "provenance": provenance, "config": config, "runs": index }),
    ));
    Ok(artifacts)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FitRun {
    pub source: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    pub model: FitModel,
    pub fit: FitResult,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub relative_error: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub signed_relative_error: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub sensitivity: Option<SensitivityReport>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FitReport {
    pub provenance: Provenance,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub delta_std: Option<f64>,
    pub runs: Vec<FitRun>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub summary: Option<Summary>,
}

fn fit_one(
    config: &ExperimentConfig,
    model: FitModel,
    data: &SweepDataset,
    delta_std: Option<f64>,
    sensitivity: bool,
) -> CliResult<(FitResult, Option<SensitivityReport>, Option<f64>, Option<f64>)> {
    let estimator = config.fit.estimator(model)?;
    let fit = estimator.apply(data)?;
    let scan = match (sensitivity, &estimator) {
        (true, Estimator::LeastSquares(cfg)) => Some(sensitivity_scan(data, cfg)?),
        _ => None,
    };
    let (rel, signed) = match delta_std {
        Some(d) => {
            let truth = model.canonical_delta(d);
            (Some(relative_error(fit.delta_hat.0, truth)?), Some(signed_relative_error(fit.delta_hat.0, truth)?))
        }
        None => (None, None),
    };
    Ok((fit, scan, rel, signed))
}

fn fit_curve(model: FitModel, fit: &FitResult, data: &SweepDataset) -> String {
    let mut out = String::from("angle_rad,counts,fitted\n");
    for r in &data.records {
        let fitted = fit.scale_hat * model.eval(r.angle.0, fit.delta_hat.0).intensity;
        out.push_str(&format!("{},{},{}\n", r.angle.0, r.counts, fitted));
    }
    out
}

/// Fits either one dataset from disk or every run simulated from the config.
pub fn cmd_fit(config: &ExperimentConfig, data_path: Option<&Path>, sensitivity: bool) -> CliResult<Vec<Artifact>> {
    let provenance = Provenance::new("fit", config, config.seed);
    let mut artifacts = Vec::new();
    let mut runs = Vec::new();
    let delta_std;

    if let Some(path) = data_path {
        let data = SweepDataset::read(path)?;
        let meta_truth = data.metadata.as_ref().and_then(|m| m.ground_truth);
        let theta = config.sample.spec()?.theta;
        let model = config.fit_model(theta);
        delta_std = match config.delta_std {
            Some(d) => Some(d),
            None => meta_truth.map(|t| t.delta.0).or(config.sample.spec().ok().map(|s| s.delta.0)),
        };
        let (fit, scan, rel, signed) = fit_one(config, model, &data, delta_std, sensitivity)?;
        artifacts.push(Artifact::text("fit_curve.csv", fit_curve(model, &fit, &data)));
        runs.push(FitRun {
            source: path.display().to_string(),
            seed: data.metadata.as_ref().map(|m| m.seed),
            model,
            fit,
            relative_error: rel,
            signed_relative_error: signed,
            sensitivity: scan,
        });
    } else {
        delta_std = Some(config.delta_std()?);
        let simulated = simulate_runs(config, &provenance.config_hash)?;
        let fitted = simulated
            .par_iter()
            .map(|(run, ds)| {
                let model = config.fit_model(run.sample.theta);
                fit_one(config, model, ds, delta_std, sensitivity).map(|r| (model, r))
            })
            .collect::<Vec<_>>();
        for ((run, ds), result) in simulated.iter().zip(fitted) {
            let (model, (fit, scan, rel, signed)) = result?;
            let name = run_name(run.index);
            artifacts.push(Artifact::text(format!("fit_curves/{name}.csv"), fit_curve(model, &fit, ds)));
            runs.push(FitRun {
                source: name,
                seed: Some(run.seed),
                model,
                fit,
                relative_error: rel,
                signed_relative_error: signed,
                sensitivity: scan,
            });
        }
    }

    let summary = match delta_std {
        Some(d) if runs.len() >= 2 => {
            let results: Vec<FitResult> = runs.iter().map(|r| r.fit).collect();
            Some(aggregate(&results, runs[0].model.canonical_delta(d))?)
        }
        _ => None,
    };
    artifacts.push(Artifact::json("fit_report.json", &FitReport { provenance, delta_std, runs, summary }));
    Ok(artifacts)
}

fn chsh_csv(chsh: &entangleometer_core::characterization::ChshResult) -> String {
    let mut out = String::from("signal_deg,idler_deg,c_pp,c_pm,c_mp,c_mm,correlation,correlation_std\n");
    for c in &chsh.cells {
        out.push_str(&format!(
            "{},{},{},{},{},{},{},{}\n",
            c.signal_angle.degrees(),
            c.idler_angle.degrees(),
            c.counts[0],
            c.counts[1],
            c.counts[2],
            c.counts[3],
            c.correlation,
            c.correlation_std
        ));
    }
    out
}

/// Fringes, CHSH and tomography of a (depolarized) Bell source.
pub fn cmd_characterize(config: &CharacterizeConfig) -> CliResult<Vec<Artifact>> {
    let provenance = Provenance::new("characterize", config, config.seed);
    let target = bell_phi_plus();
    let v = config.state.visibility;
    let rho = depolarize(&target, v)?;
    let chsh_settings = match config.chsh_settings_deg {
        Some([a, ap, b, bp]) => ChshSettings { a: PolAngle::deg(a), a_prime: PolAngle::deg(ap), b: PolAngle::deg(b), b_prime: PolAngle::deg(bp) },
        None => ChshSettings::default(),
    };
    let plan = CharacterizationPlan { fringe_points: config.fringe_points, sampling: config.sampling, chsh_settings };
    let report = simulate_characterization(&rho, &target, &config.detection, &plan, config.seed)?;

    let m = report.tomography.rho.matrix();
    let real: Vec<Vec<f64>> = (0..4).map(|r| (0..4).map(|c| m[(r, c)].re).collect()).collect();
    let imag: Vec<Vec<f64>> = (0..4).map(|r| (0..4).map(|c| m[(r, c)].im).collect()).collect();
    let (v_expected, s_expected, f_expected) = werner_expectations(v);

    Ok(vec![
        Artifact::text("fringe_h.csv", report.fringe_h.to_csv_string()),
        Artifact::text("fringe_d.csv", report.fringe_d.to_csv_string()),
        Artifact::text("chsh.csv", chsh_csv(&report.chsh)),
        Artifact::text("tomography_counts.csv", report.tomography_counts.to_csv_string()),
        Artifact::json(
            "rho.json",
            &json!({
                "provenance": provenance,
                "basis": ["HH", "HV", "VH", "VV"],
                "entries": report.tomography.rho,
                "real": real,
                "imag": imag,
            }),
        ),
        Artifact::json(
            "characterization_report.json",
            &json!({
                "provenance": provenance,
                "config": config,
                "visibility_h": report.visibility_h,
                "visibility_d": report.visibility_d,
                "chsh": report.chsh,
                "chsh_violation_sigmas": report.chsh.violation_sigmas(),
                "tomography": {
                    "fidelity_to_target": report.tomography.fidelity_to_target,
                    "fidelity_to_source": uhlmann_fidelity(&report.tomography.rho, &rho),
                    "log_likelihood": report.tomography.log_likelihood,
                    "iterations": report.tomography.iterations,
                },
                "source_expectations": {
                    "visibility": v_expected,
                    "s_value": s_expected,
                    "fidelity": f_expected,
                },
            }),
        ),
    ])
}
