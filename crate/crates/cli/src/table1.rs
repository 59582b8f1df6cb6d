//! Monte Carlo reproduction of the quantum/classical comparison table.

use entangleometer_core::detection::{derive_seed, run_sweep};
use entangleometer_core::estimation::{aggregate, sensitivity_scan};
use entangleometer_core::{DetectionModel, FitResult, Mode, PolAngle, Retardance, SampleSpec, Sampling, Summary, SweepPlan};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::commands::{Artifact, Provenance};
use crate::config::FitSettings;
use crate::error::{CliError, CliResult};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CaseConfig {
    pub label: String,
    pub mode: Mode,
    pub compensator: bool,
    /// `h_s` (quantum) or `p` (classical).
    pub fixed_deg: f64,
    /// Sample axis of the long-duration runs.
    pub axis_deg: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SampleRow {
    pub label: String,
    pub delta_std: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Table1Bundle {
    pub cases: Vec<CaseConfig>,
    pub samples: Vec<SampleRow>,
    pub repetitions: usize,
    pub axis_schedule_deg: Vec<f64>,
    pub sweep_points: usize,
    pub sampling: Sampling,
    pub detection: DetectionModel,
    /// Set the classical count rate so both modes have the same fringe amplitude.
    pub match_classical_counts: bool,
    pub fit: FitSettings,
    pub seed: u64,
}

impl Default for Table1Bundle {
    fn default() -> Self {
        Table1Bundle {
            cases: vec![
                CaseConfig { label: "quantum, no compensator".into(), mode: Mode::Quantum, compensator: false, fixed_deg: 0.0, axis_deg: 22.5 },
                CaseConfig { label: "quantum, compensator".into(), mode: Mode::Quantum, compensator: true, fixed_deg: 0.0, axis_deg: 45.0 },
                CaseConfig { label: "classical, compensator".into(), mode: Mode::Classical, compensator: true, fixed_deg: 90.0, axis_deg: 45.0 },
            ],
            samples: vec![
                SampleRow { label: "HWP".into(), delta_std: 3.1341 },
                SampleRow { label: "QWP".into(), delta_std: 1.56 },
            ],
            repetitions: 20,
            axis_schedule_deg: vec![15.0, 30.0, 45.0, 60.0, 75.0, 105.0, 120.0, 135.0, 150.0, 165.0],
            sweep_points: 36,
            sampling: Sampling::Poisson,
            detection: DetectionModel::default(),
            match_classical_counts: true,
            fit: FitSettings::default(),
            seed: 0,
        }
    }
}

impl Table1Bundle {
    /// Noise-free, background-free variant of the default bundle.
    pub fn noise_free() -> Self {
        let mut b = Table1Bundle::default();
        b.sampling = Sampling::Expected;
        b.detection = DetectionModel { integration_time: 10.0, ..DetectionModel::ideal(7200.0) };
        b.repetitions = 2;
        b
    }

    pub fn validate(&self) -> CliResult<()> {
        if self.cases.is_empty() || self.samples.is_empty() {
            return Err(CliError::Config("bundle needs at least one case and one sample".into()));
        }
        if self.repetitions < 2 {
            return Err(CliError::Config("repetitions must be >= 2".into()));
        }
        if self.samples.iter().any(|s| !(s.delta_std > 0.0)) {
            return Err(CliError::Config("delta_std must be > 0".into()));
        }
        self.detection.validate()?;
        Ok(())
    }

    /// Detection model of a case; classical rate matched to the coincidence scale when requested.
    pub fn detection_for(&self, case: &CaseConfig) -> DetectionModel {
        let mut d = self.detection;
        if case.mode == Mode::Classical && self.match_classical_counts {
            d.singles_rate_classical = 0.5 * d.coincidence_scale();
        }
        d
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Dependence {
    /// Majority verdict over the long-duration runs.
    pub dependent: bool,
    pub dependent_fraction: f64,
    pub mean_spread: f64,
    pub threshold: f64,
    pub max_free_refit_spread: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Cell {
    pub case: String,
    pub sample: String,
    pub delta_std: f64,
    /// Spread over repeated fits at a fixed axis.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub long_duration: Option<Summary>,
    /// Spread over the axis schedule.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub varying_axes: Option<Summary>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub dependence: Option<Dependence>,
    pub failures: Vec<String>,
}

fn plan_for(case: &CaseConfig, bundle: &Table1Bundle) -> SweepPlan {
    let angles = SweepPlan::uniform_angles(0.0, std::f64::consts::PI, bundle.sweep_points);
    let fixed = PolAngle::deg(case.fixed_deg);
    match case.mode {
        Mode::Quantum => SweepPlan::quantum(fixed, angles, case.compensator),
        Mode::Classical => SweepPlan::classical(fixed, angles, case.compensator),
    }
    .with_sampling(bundle.sampling)
}

fn run_cell(bundle: &Table1Bundle, case: &CaseConfig, sample: &SampleRow, cell_seed: u64) -> Cell {
    let plan = plan_for(case, bundle);
    let detection = bundle.detection_for(case);
    let fixed = PolAngle::deg(case.fixed_deg);
    let mut failures = Vec::new();

    let fit_at = |theta: PolAngle, seed: u64, scan: bool| -> Result<(FitResult, Option<(bool, f64, f64, f64)>), String> {
        let spec = SampleSpec::new(theta, Retardance(sample.delta_std));
        let data = run_sweep(&plan, &spec, &detection, seed).map_err(|e| e.to_string())?;
        let model = bundle.fit.resolve_model(case.mode, case.compensator, fixed, theta);
        let estimator = bundle.fit.estimator(model).map_err(|e| e.to_string())?;
        let fit = estimator.apply(&data).map_err(|e| e.to_string())?;
        let dep = if scan {
            let cfg = bundle.fit.fit_config(model).map_err(|e| e.to_string())?;
            let r = sensitivity_scan(&data, &cfg).map_err(|e| e.to_string())?;
            Some((r.dependent, r.spread, r.threshold, r.free_refit_spread))
        } else {
            None
        };
        Ok((fit, dep))
    };

    let long_seed = derive_seed(cell_seed, 1);
    let long: Vec<_> = (0..bundle.repetitions)
        .into_par_iter()
        .map(|k| fit_at(PolAngle::deg(case.axis_deg), derive_seed(long_seed, k as u64), true))
        .collect();
    let axes_seed = derive_seed(cell_seed, 2);
    let axes: Vec<_> = bundle
        .axis_schedule_deg
        .par_iter()
        .enumerate()
        .map(|(j, &deg)| fit_at(PolAngle::deg(deg), derive_seed(axes_seed, j as u64), false))
        .collect();

    let mut long_fits = Vec::new();
    let mut deps = Vec::new();
    for (k, r) in long.into_iter().enumerate() {
        match r {
            Ok((fit, dep)) => {
                long_fits.push(fit);
                deps.extend(dep);
            }
            Err(e) => failures.push(format!("long-duration run {k}: {e}")),
        }
    }
    let mut axis_fits = Vec::new();
    for (j, r) in axes.into_iter().enumerate() {
        match r {
            Ok((fit, _)) => axis_fits.push(fit),
            Err(e) => failures.push(format!("axis {}°: {e}", bundle.axis_schedule_deg[j])),
        }
    }
    let summarize = |fits: &[FitResult], failures: &mut Vec<String>, what: &str| match aggregate(fits, sample.delta_std) {
        Ok(s) => Some(s),
        Err(e) => {
            failures.push(format!("{what}: {e}"));
            None
        }
    };
    let long_duration = summarize(&long_fits, &mut failures, "long-duration summary");
    let varying_axes = summarize(&axis_fits, &mut failures, "varying-axes summary");
    let dependence = (!deps.is_empty()).then(|| {
        let n = deps.len() as f64;
        let flagged = deps.iter().filter(|d| d.0).count() as f64;
        Dependence {
            dependent: flagged / n > 0.5,
            dependent_fraction: flagged / n,
            mean_spread: deps.iter().map(|d| d.1).sum::<f64>() / n,
            threshold: deps.iter().map(|d| d.2).sum::<f64>() / n,
            max_free_refit_spread: deps.iter().map(|d| d.3).fold(0.0, f64::max),
        }
    });
    Cell {
        case: case.label.clone(),
        sample: sample.label.clone(),
        delta_std: sample.delta_std,
        long_duration,
        varying_axes,
        dependence,
        failures,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Table1Report {
    pub provenance: Provenance,
    pub note: &'static str,
    pub bundle: Table1Bundle,
    pub cells: Vec<Cell>,
}

pub const SIMULATED_NOTE: &str = "Values are Monte Carlo simulations of the measurement protocol, not hardware measurements.";

pub fn run_table1(bundle: &Table1Bundle) -> CliResult<Table1Report> {
    bundle.validate()?;
    let provenance = Provenance::new("table1", bundle, bundle.seed);
    let grid: Vec<(usize, usize)> =
        (0..bundle.cases.len()).flat_map(|c| (0..bundle.samples.len()).map(move |s| (c, s))).collect();
    let cells = grid
        .par_iter()
        .map(|&(c, s)| {
            let seed = derive_seed(bundle.seed, (c * bundle.samples.len() + s) as u64);
            run_cell(bundle, &bundle.cases[c], &bundle.samples[s], seed)
        })
        .collect();
    Ok(Table1Report { provenance, note: SIMULATED_NOTE, bundle: bundle.clone(), cells })
}

fn cell_text(s: &Option<Summary>) -> String {
    s.as_ref().map(Summary::cell).unwrap_or_else(|| "failed".into())
}

pub fn render_text(report: &Table1Report) -> String {
    let mut out = format!("# {}\n# config {} seed {}\n\n", report.note, report.provenance.config_hash, report.provenance.seed);
    let header = ["case", "sample", "long duration (mean ± std, rel. error)", "varying axes (mean ± std, rel. error)", "init. dependence"];
    let rows: Vec<[String; 5]> = report
        .cells
        .iter()
        .map(|c| {
            [
                c.case.clone(),
                c.sample.clone(),
                cell_text(&c.long_duration),
                cell_text(&c.varying_axes),
                match &c.dependence {
                    Some(d) if d.dependent => "Yes".into(),
                    Some(_) => "No".into(),
                    None => "n/a".into(),
                },
            ]
        })
        .collect();
    let widths: Vec<usize> = (0..5)
        .map(|i| rows.iter().map(|r| r[i].chars().count()).chain([header[i].chars().count()]).max().unwrap_or(0))
        .collect();
    let line = |cols: [&str; 5]| {
        let mut s = cols
            .iter()
            .zip(&widths)
            .map(|(c, w)| format!("{c}{}", " ".repeat(w - c.chars().count())))
            .collect::<Vec<_>>()
            .join("  ");
        s.truncate(s.trim_end().len());
        s.push('\n');
        s
    };
    out.push_str(&line(header));
    for r in &rows {
        out.push_str(&line([&r[0], &r[1], &r[2], &r[3], &r[4]]));
    }
    for c in report.cells.iter().filter(|c| !c.failures.is_empty()) {
        out.push_str(&format!("\n{} / {}: {} failure(s): {}\n", c.case, c.sample, c.failures.len(), c.failures.join("; ")));
    }
    out
}

pub fn cmd_table1(bundle: &Table1Bundle) -> CliResult<Vec<Artifact>> {
    let report = run_table1(bundle)?;
    Ok(vec![Artifact::json("table1.json", &report), Artifact::text("table1.txt", render_text(&report))])
}
