//! Retardance estimation from sweep datasets.
//!
//! The least-squares fitter minimizes `Σ w_k²(y_k - I₀·m(angle_k; δ))²` over
//! `(δ, I₀)` with a Levenberg–Marquardt damped Gauss–Newton iteration and the
//! analytic `∂m/∂δ` of each model family.
//!
//! Ambiguity classes:
//!
//! * compensator-free models (quantum and classical) depend on `δ` through
//!   `cos δ` only, so `δ` and `2π - δ` are indistinguishable; estimates are
//!   folded into `[0, π]`.
//! * compensator, Senarmont and classical-with-compensator models contain a
//!   `sin δ` term; estimates are reported on `[0, 2π)`.

use std::f64::consts::{PI, TAU};

use nalgebra::{Matrix2, Matrix3, Vector2, Vector3};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::biphoton::{model_compensator, model_no_compensator, model_senarmont, sweep_validity, ModelValue};
use crate::classical_psa::{psa_intensity_with_derivative, PsaConfig};
use crate::detection::{derive_seed, run_sweep, DatasetMetadata, DetectionModel, Mode, SampleSpec, SweepDataset, SweepPlan};
use crate::error::{Error, Result};
use crate::polcore::{wrap, wrapped_difference, wrapped_distance, PolAngle, Retardance};

pub const MIN_RECORDS: usize = 4;
const MULTI_START: usize = 8;

/// Closed-form intensity model used to fit a sweep.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum FitModel {
    NoCompensator { h_signal: PolAngle, theta: PolAngle },
    Compensator { h_signal: PolAngle, theta: PolAngle },
    /// `h_s = 0`, `θ = π/4`, compensator at 0°.
    Senarmont,
    ClassicalPsa { polarizer: PolAngle, theta: PolAngle, compensator: bool },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Ambiguity {
    /// `δ` is identifiable modulo `2π`.
    None,
    /// `δ ~ 2π - δ`; reported in `[0, π]`.
    Reflection,
}

impl FitModel {
    /// Model value at sweep angle `angle` (idler HWP or analyzer) as a fraction of `I₀`.
    pub fn eval(&self, angle: f64, delta: f64) -> ModelValue {
        match *self {
            FitModel::NoCompensator { h_signal, theta } => model_no_compensator(h_signal.0, angle, theta.0, delta),
            FitModel::Compensator { h_signal, theta } => model_compensator(h_signal.0, angle, theta.0, delta),
            FitModel::Senarmont => model_senarmont(angle, delta),
            FitModel::ClassicalPsa { polarizer, theta, compensator } => {
                let mut cfg = PsaConfig::new(polarizer, PolAngle(angle), theta, Retardance(delta));
                cfg.compensator_present = compensator;
                psa_intensity_with_derivative(&cfg)
            }
        }
    }

    pub fn ambiguity(&self) -> Ambiguity {
        match *self {
            FitModel::NoCompensator { .. } | FitModel::ClassicalPsa { compensator: false, .. } => Ambiguity::Reflection,
            _ => Ambiguity::None,
        }
    }

    /// Maps a raw estimate into the canonical range of the model's ambiguity class.
    pub fn canonical_delta(&self, delta: f64) -> f64 {
        let w = wrap(delta, TAU);
        match self.ambiguity() {
            Ambiguity::None => w,
            Ambiguity::Reflection => w.min(TAU - w),
        }
    }

    /// Distance between two retardances modulo the ambiguity class.
    pub fn delta_distance(&self, a: f64, b: f64) -> f64 {
        wrapped_distance(self.canonical_delta(a), self.canonical_delta(b), TAU)
    }

    /// The model matching how a dataset was generated, using its recorded ground-truth axis.
    pub fn from_metadata(meta: &DatasetMetadata) -> Option<FitModel> {
        let theta = meta.ground_truth?.theta;
        let fixed = PolAngle(meta.fixed_angle_rad);
        Some(match (meta.mode, meta.compensator) {
            (Mode::Quantum, false) => FitModel::NoCompensator { h_signal: fixed, theta },
            (Mode::Quantum, true) => FitModel::Compensator { h_signal: fixed, theta },
            (Mode::Classical, compensator) => FitModel::ClassicalPsa { polarizer: fixed, theta, compensator },
        })
    }

    fn check_validity(&self) -> Result<()> {
        let (hs, theta) = match *self {
            FitModel::NoCompensator { h_signal, theta } | FitModel::Compensator { h_signal, theta } => (h_signal.0, theta.0),
            _ => return Ok(()),
        };
        if sweep_validity(hs, theta) {
            Ok(())
        } else {
            Err(Error::DegenerateSweep(format!(
                "4h_s + 2θ ≡ 0 (mod π) at h_s = {hs:.4}, θ = {theta:.4}: counts do not depend on δ"
            )))
        }
    }

    /// Fails when the model does not vary with `δ` at any of the given angles.
    fn check_informative(&self, angles: &[f64]) -> Result<()> {
        let base: Vec<f64> = angles.iter().map(|&a| self.eval(a, 0.0).intensity).collect();
        let variation = (1..64)
            .map(|k| TAU * k as f64 / 64.0)
            .flat_map(|d| angles.iter().zip(&base).map(move |(&a, &b)| (self.eval(a, d).intensity - b).abs()))
            .fold(0.0, f64::max);
        if variation <= 1e-12 {
            Err(Error::DegenerateSweep("modelled counts are independent of δ at every sweep angle".into()))
        } else {
            Ok(())
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Weighting {
    #[default]
    Unweighted,
    /// Weights `1/√max(y, 1)`: Poisson variance estimated by the observed count.
    Poisson,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FitConfig {
    pub model: FitModel,
    /// Single start; `None` runs a multi-start over evenly spaced `δ`.
    pub initial_delta: Option<Retardance>,
    /// `None` uses the best linear scale at each starting `δ`.
    pub initial_scale: Option<f64>,
    pub max_iterations: usize,
    /// Bound on the scaled gradient `max_j |J_jᵀr|/(‖J_j‖·‖r‖)` at convergence.
    pub convergence_tol: f64,
    /// Half-width of the relative `I₀` perturbation used by [`sensitivity_scan`].
    pub scale_perturbation: f64,
    /// Relative `δ̂` spread above which a fit is flagged as initial-condition dependent.
    pub dependence_threshold: f64,
    pub weighting: Weighting,
}

impl FitConfig {
    pub fn new(model: FitModel) -> Self {
        FitConfig {
            model,
            initial_delta: None,
            initial_scale: None,
            max_iterations: 200,
            convergence_tol: 1e-10,
            scale_perturbation: 0.02,
            dependence_threshold: 0.01,
            weighting: Weighting::Unweighted,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.convergence_tol > 0.0) {
            return Err(Error::InvalidInput("convergence tolerance must be > 0".into()));
        }
        if self.max_iterations < 1 {
            return Err(Error::InvalidInput("max_iterations must be >= 1".into()));
        }
        if let Some(s) = self.initial_scale {
            if !(s > 0.0) || !s.is_finite() {
                return Err(Error::InvalidInput(format!("initial scale must be > 0, got {s}")));
            }
        }
        if !(self.scale_perturbation >= 0.0) || !(self.dependence_threshold >= 0.0) {
            return Err(Error::InvalidInput("perturbation and threshold must be >= 0".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StdErrors {
    /// `None` when the Jacobian is rank-deficient at the optimum.
    pub delta: Option<f64>,
    pub scale: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FitResult {
    pub delta_hat: Retardance,
    pub scale_hat: f64,
    pub residual_norm: f64,
    pub std_errors: StdErrors,
    pub iterations: usize,
    pub converged: bool,
    pub ambiguity: Ambiguity,
}

struct Problem<'a> {
    model: FitModel,
    angles: &'a [f64],
    counts: &'a [f64],
    weights: Vec<f64>,
    data_norm: f64,
}

struct Eval {
    residuals: Vec<f64>,
    jac_delta: Vec<f64>,
    jac_scale: Vec<f64>,
}

impl Eval {
    fn cost(&self) -> f64 {
        0.5 * self.residuals.iter().map(|r| r * r).sum::<f64>()
    }

    fn normal_equations(&self) -> (Matrix2<f64>, Vector2<f64>) {
        let mut a = Matrix2::zeros();
        let mut g = Vector2::zeros();
        for ((r, jd), js) in self.residuals.iter().zip(&self.jac_delta).zip(&self.jac_scale) {
            a[(0, 0)] += jd * jd;
            a[(0, 1)] += jd * js;
            a[(1, 1)] += js * js;
            g[0] += jd * r;
            g[1] += js * r;
        }
        a[(1, 0)] = a[(0, 1)];
        (a, g)
    }
}

impl<'a> Problem<'a> {
    fn new(model: FitModel, angles: &'a [f64], counts: &'a [f64], weighting: Weighting) -> Self {
        let weights: Vec<f64> = match weighting {
            Weighting::Unweighted => vec![1.0; counts.len()],
            Weighting::Poisson => counts.iter().map(|&y| 1.0 / y.max(1.0).sqrt()).collect(),
        };
        let data_norm = counts.iter().zip(&weights).map(|(y, w)| (y * w).powi(2)).sum::<f64>().sqrt();
        Problem { model, angles, counts, weights, data_norm }
    }

    fn eval(&self, delta: f64, scale: f64) -> Eval {
        let n = self.angles.len();
        let mut e = Eval { residuals: Vec::with_capacity(n), jac_delta: Vec::with_capacity(n), jac_scale: Vec::with_capacity(n) };
        for ((&a, &y), &w) in self.angles.iter().zip(self.counts).zip(&self.weights) {
            let m = self.model.eval(a, delta);
            e.residuals.push(w * (scale * m.intensity - y));
            e.jac_delta.push(w * scale * m.d_delta);
            e.jac_scale.push(w * m.intensity);
        }
        e
    }

    fn cost(&self, delta: f64, scale: f64) -> f64 {
        self.angles
            .iter()
            .zip(self.counts)
            .zip(&self.weights)
            .map(|((&a, &y), &w)| (w * (scale * self.model.eval(a, delta).intensity - y)).powi(2))
            .sum::<f64>()
            * 0.5
    }

    fn scaled_gradient(&self, e: &Eval) -> f64 {
        let rnorm = (2.0 * e.cost()).sqrt();
        if rnorm == 0.0 {
            return 0.0;
        }
        let (a, g) = e.normal_equations();
        (0..2)
            .map(|j| {
                let col = a[(j, j)].sqrt();
                if col > 0.0 {
                    g[j].abs() / (col * rnorm)
                } else {
                    0.0
                }
            })
            .fold(0.0, f64::max)
    }

    /// Least-squares `I₀` at fixed `δ`.
    fn best_scale(&self, delta: f64) -> f64 {
        let (mut num, mut den) = (0.0, 0.0);
        for ((&a, &y), &w) in self.angles.iter().zip(self.counts).zip(&self.weights) {
            let m = self.model.eval(a, delta).intensity * w;
            num += m * y * w;
            den += m * m;
        }
        if den > 0.0 && num > 0.0 {
            num / den
        } else {
            1.0
        }
    }
}

struct RawFit {
    delta: f64,
    scale: f64,
    cost: f64,
    iterations: usize,
    converged: bool,
    gradient: f64,
}

fn levenberg_marquardt(problem: &Problem, delta0: f64, scale0: f64, max_iterations: usize, tol: f64) -> RawFit {
    let (mut delta, mut scale) = (delta0, scale0);
    let mut e = problem.eval(delta, scale);
    let mut cost = e.cost();
    let mut lambda = 1e-3;
    let mut iterations = 0;
    let exact = |c: f64| c.sqrt() <= 1e-13 * problem.data_norm.max(f64::MIN_POSITIVE);

    loop {
        let gradient = problem.scaled_gradient(&e);
        if gradient <= tol || exact(cost) {
            return RawFit { delta, scale, cost, iterations, converged: true, gradient };
        }
        if iterations >= max_iterations {
            return RawFit { delta, scale, cost, iterations, converged: false, gradient };
        }
        iterations += 1;
        let (a, g) = e.normal_equations();
        let diag = Vector2::new(a[(0, 0)].max(1e-300), a[(1, 1)].max(1e-300));
        let mut accepted = false;
        while lambda < 1e20 {
            let mut damped = a;
            damped[(0, 0)] += lambda * diag[0];
            damped[(1, 1)] += lambda * diag[1];
            let Some(step) = damped.try_inverse().map(|inv| -(inv * g)) else {
                lambda *= 10.0;
                continue;
            };
            let (nd, ns) = (delta + step[0], scale + step[1]);
            let trial = problem.cost(nd, ns);
            if trial.is_finite() && trial <= cost {
                let stalled = (step[0].abs() <= 1e-15 * (1.0 + delta.abs()))
                    && (step[1].abs() <= 1e-15 * (1.0 + scale.abs()));
                delta = nd;
                scale = ns;
                e = problem.eval(delta, scale);
                cost = e.cost();
                lambda = (lambda / 3.0).max(1e-12);
                accepted = !stalled;
                break;
            }
            lambda *= 4.0;
        }
        if !accepted {
            // no descent step left at working precision
            let gradient = problem.scaled_gradient(&e);
            let converged = gradient <= tol.sqrt().min(1e-6) || exact(cost);
            return RawFit { delta, scale, cost, iterations, converged, gradient };
        }
    }
}

fn check_dataset(data: &SweepDataset) -> Result<()> {
    if data.len() < MIN_RECORDS {
        return Err(Error::InsufficientData { needed: MIN_RECORDS, got: data.len() });
    }
    if data.records.iter().any(|r| !r.counts.is_finite() || r.counts < 0.0 || !r.angle.0.is_finite()) {
        return Err(Error::InvalidInput("counts and angles must be finite, counts >= 0".into()));
    }
    if data.total_counts() <= 0.0 {
        return Err(Error::DegenerateSweep("dataset contains no counts".into()));
    }
    Ok(())
}

fn covariance(e: &Eval, n: usize) -> StdErrors {
    let (a, _) = e.normal_equations();
    let dof = n.saturating_sub(2).max(1) as f64;
    let s2 = 2.0 * e.cost() / dof;
    let det = a.determinant();
    let scale = a[(0, 0)] * a[(1, 1)];
    if !(det > 1e-12 * scale) || scale == 0.0 {
        return StdErrors { delta: None, scale: None };
    }
    let inv = a.try_inverse().expect("determinant checked");
    StdErrors {
        delta: Some((s2 * inv[(0, 0)]).max(0.0).sqrt()),
        scale: Some((s2 * inv[(1, 1)]).max(0.0).sqrt()),
    }
}

/// Least-squares estimate of `(δ, I₀)`.
pub fn fit_retardance(data: &SweepDataset, config: &FitConfig) -> Result<FitResult> {
    config.validate()?;
    check_dataset(data)?;
    config.model.check_validity()?;
    let angles = data.angles();
    let counts = data.counts();
    config.model.check_informative(&angles)?;
    let problem = Problem::new(config.model, &angles, &counts, config.weighting);

    let starts: Vec<f64> = match config.initial_delta {
        Some(d) => vec![d.0],
        None => (0..MULTI_START).map(|k| (2 * k + 1) as f64 * PI / MULTI_START as f64).collect(),
    };
    let mut best: Option<RawFit> = None;
    for d0 in starts {
        let s0 = config.initial_scale.unwrap_or_else(|| problem.best_scale(d0));
        let fit = levenberg_marquardt(&problem, d0, s0, config.max_iterations, config.convergence_tol);
        let better = match &best {
            None => true,
            Some(b) => match (fit.converged, b.converged) {
                (true, false) => true,
                (false, true) => false,
                _ => fit.cost < b.cost * (1.0 - 1e-12),
            },
        };
        if better {
            best = Some(fit);
        }
    }
    if config.model.ambiguity() == Ambiguity::Reflection {
        // δ = 0 and δ = π are stationary by symmetry; a minimum there is only
        // approached sub-linearly by Gauss-Newton because ∂m/∂δ vanishes
        for d in [0.0, PI] {
            let scale = problem.best_scale(d);
            let e = problem.eval(d, scale);
            // the δ-component of the gradient vanishes identically here
            let (a, g) = e.normal_equations();
            let rnorm = (2.0 * e.cost()).sqrt();
            let gradient = if rnorm > 0.0 && a[(1, 1)] > 0.0 { g[1].abs() / (a[(1, 1)].sqrt() * rnorm) } else { 0.0 };
            let fit = RawFit { delta: d, scale, cost: e.cost(), iterations: 0, converged: gradient <= config.convergence_tol, gradient };
            let better = match &best {
                Some(b) if b.converged => fit.converged && fit.cost < b.cost * (1.0 - 1e-12),
                _ => fit.converged,
            };
            if better {
                best = Some(fit);
            }
        }
    }
    let best = best.expect("at least one start");
    if !best.converged {
        return Err(Error::NonConvergence { iterations: best.iterations, gradient: best.gradient });
    }
    let e = problem.eval(best.delta, best.scale);
    Ok(FitResult {
        delta_hat: Retardance(config.model.canonical_delta(best.delta)),
        scale_hat: best.scale,
        residual_norm: (2.0 * best.cost).sqrt(),
        std_errors: covariance(&e, angles.len()),
        iterations: best.iterations,
        converged: true,
        ambiguity: config.model.ambiguity(),
    })
}

/// Senarmont extremum estimator.
///
/// Fits `c₀ + c₁cos 4h + c₂sin 4h` by linear least squares; the minimum sits at
/// `4h* = atan2(-c₂, -c₁)` and `δ̂ = 4h* mod 2π`. `Î₀ = 4·√(c₁² + c₂²)`.
pub fn senarmont_estimate(data: &SweepDataset) -> Result<FitResult> {
    check_dataset(data)?;
    let angles = data.angles();
    let span = angles.iter().cloned().fold(f64::MIN, f64::max) - angles.iter().cloned().fold(f64::MAX, f64::min);
    if span < PI / 4.0 - 1e-12 {
        return Err(Error::DegenerateSweep(format!(
            "sweep spans {span:.4} rad; at least a half period (π/4) is required"
        )));
    }
    let fit = fit_sinusoid(&angles, &data.counts())?;
    let (c1, c2) = (fit.coef[1], fit.coef[2]);
    let amp = fit.amplitude();
    let sigma_amp = fit.amplitude_std();
    if !(amp > 2.0 * sigma_amp) || amp <= 1e-12 * fit.coef[0].abs() {
        return Err(Error::DegenerateSweep(format!(
            "fitted modulation {amp:.3e} is consistent with zero (σ = {sigma_amp:.3e})"
        )));
    }
    let delta = wrap((-c2).atan2(-c1), TAU);
    let grad = Vector3::new(0.0, -c2 / (amp * amp), c1 / (amp * amp));
    let var_delta = (grad.transpose() * fit.cov * grad)[(0, 0)];
    Ok(FitResult {
        delta_hat: Retardance(delta),
        scale_hat: 4.0 * amp,
        residual_norm: fit.rss.sqrt(),
        std_errors: StdErrors { delta: Some(var_delta.max(0.0).sqrt()), scale: Some(4.0 * sigma_amp) },
        iterations: 1,
        converged: true,
        ambiguity: Ambiguity::None,
    })
}

/// Linear least-squares fit of `c₀ + c₁cos 4h + c₂sin 4h`.
#[derive(Debug, Clone)]
pub struct SinusoidFit {
    pub coef: Vector3<f64>,
    /// Parameter covariance scaled by the residual variance.
    pub cov: Matrix3<f64>,
    pub rss: f64,
}

impl SinusoidFit {
    pub fn amplitude(&self) -> f64 {
        self.coef[1].hypot(self.coef[2])
    }

    pub fn amplitude_std(&self) -> f64 {
        let a = self.amplitude();
        if a == 0.0 {
            return (self.cov[(1, 1)].max(self.cov[(2, 2)])).max(0.0).sqrt();
        }
        let g = Vector3::new(0.0, self.coef[1] / a, self.coef[2] / a);
        (g.transpose() * self.cov * g)[(0, 0)].max(0.0).sqrt()
    }
}

pub fn fit_sinusoid(angles: &[f64], counts: &[f64]) -> Result<SinusoidFit> {
    let mut ata = Matrix3::zeros();
    let mut aty = Vector3::zeros();
    for (&h, &y) in angles.iter().zip(counts) {
        let (s, c) = (4.0 * h).sin_cos();
        let row = Vector3::new(1.0, c, s);
        ata += row * row.transpose();
        aty += row * y;
    }
    let inv = ata
        .try_inverse()
        .filter(|_| ata.determinant().abs() > 1e-12 * (ata[(0, 0)] * ata[(1, 1)] * ata[(2, 2)]).abs())
        .ok_or_else(|| Error::DegenerateSweep("sweep angles do not resolve a sinusoid".into()))?;
    let coef = inv * aty;
    let rss: f64 = angles
        .iter()
        .zip(counts)
        .map(|(&h, &y)| {
            let (s, c) = (4.0 * h).sin_cos();
            (y - coef[0] - coef[1] * c - coef[2] * s).powi(2)
        })
        .sum();
    let dof = angles.len().saturating_sub(3).max(1) as f64;
    Ok(SinusoidFit { coef, cov: inv * (rss / dof), rss })
}

/// Initial-condition dependence of `δ̂` on the assumed `I₀`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SensitivityReport {
    pub nominal: FitResult,
    /// Relative `I₀` values `1 + κ` applied to the base scale.
    pub scale_factors: Vec<f64>,
    /// `δ̂` re-optimized with `I₀` held at each perturbed value.
    pub delta_hats: Vec<Option<f64>>,
    pub spread: f64,
    /// Absolute threshold in radians: `dependence_threshold·δ̂`.
    pub threshold: f64,
    pub dependent: bool,
    /// `δ̂` of unconstrained refits started from each perturbed `I₀`.
    pub free_refit_delta_hats: Vec<Option<f64>>,
    pub free_refit_spread: f64,
    pub failures: Vec<String>,
}

/// Scale factors `1 + κ` spanning `±perturbation` in five steps.
pub fn perturbation_grid(perturbation: f64) -> Vec<f64> {
    [-1.0, -0.5, 0.0, 0.5, 1.0].iter().map(|k| 1.0 + k * perturbation).collect()
}

/// Global 1-D minimization of the cost over `δ` at fixed `I₀`.
fn conditional_delta(problem: &Problem, scale: f64, tol: f64) -> Option<f64> {
    const GRID: usize = 256;
    let (mut best_d, mut best_c) = (0.0, f64::INFINITY);
    for k in 0..GRID {
        let d = TAU * k as f64 / GRID as f64;
        let c = problem.cost(d, scale);
        if c < best_c {
            best_d = d;
            best_c = c;
        }
    }
    let mut delta = best_d;
    let mut cost = best_c;
    let mut lambda = 1e-3;
    for _ in 0..500 {
        let e = problem.eval(delta, scale);
        let (a, g) = e.normal_equations();
        let (h, g) = (a[(0, 0)], g[0]);
        if h <= 0.0 || g.abs() <= tol * h.sqrt() * problem.data_norm {
            break;
        }
        let mut moved = false;
        while lambda < 1e20 {
            let nd = delta - g / (h * (1.0 + lambda));
            let c = problem.cost(nd, scale);
            if c <= cost {
                moved = nd != delta;
                delta = nd;
                cost = c;
                lambda = (lambda / 3.0).max(1e-12);
                break;
            }
            lambda *= 4.0;
        }
        if !moved {
            break;
        }
    }
    cost.is_finite().then_some(delta)
}

/// Largest pairwise circular distance among the estimates.
fn circular_spread(values: &[f64]) -> f64 {
    let mut spread: f64 = 0.0;
    for (i, a) in values.iter().enumerate() {
        for b in &values[i + 1..] {
            spread = spread.max(wrapped_distance(*a, *b, TAU));
        }
    }
    spread
}

/// Measures how strongly `δ̂` depends on the starting value of `I₀`.
///
/// A converged unconstrained fit forgets its starting scale (reported as
/// `free_refit_spread`). The dependence flag is therefore based on the `δ̂`
/// obtained with `I₀` held at each value in `base·(1 ± κ)`: where the counts are
/// insensitive to `δ` (no compensator, `δ` near `0` or `π`) a small `I₀`
/// offset moves `δ̂` by a large amount.
pub fn sensitivity_scan(data: &SweepDataset, config: &FitConfig) -> Result<SensitivityReport> {
    let nominal = fit_retardance(data, config)?;
    let angles = data.angles();
    let counts = data.counts();
    let problem = Problem::new(config.model, &angles, &counts, config.weighting);
    let base = config.initial_scale.unwrap_or(nominal.scale_hat);
    let factors = perturbation_grid(config.scale_perturbation);

    let mut failures = Vec::new();
    let delta_hats: Vec<Option<f64>> = factors
        .iter()
        .map(|f| {
            let d = conditional_delta(&problem, base * f, config.convergence_tol).map(|d| config.model.canonical_delta(d));
            if d.is_none() {
                failures.push(format!("conditional fit at I₀ factor {f} failed"));
            }
            d
        })
        .collect();

    let free_refit_delta_hats: Vec<Option<f64>> = factors
        .iter()
        .map(|f| {
            let mut c = *config;
            c.initial_scale = Some(base * f);
            c.initial_delta = Some(config.initial_delta.unwrap_or(nominal.delta_hat));
            match fit_retardance(data, &c) {
                Ok(r) => Some(r.delta_hat.0),
                Err(e) => {
                    failures.push(format!("free refit at I₀ factor {f}: {e}"));
                    None
                }
            }
        })
        .collect();

    let spread = circular_spread(&delta_hats.iter().flatten().copied().collect::<Vec<_>>());
    let free_refit_spread = circular_spread(&free_refit_delta_hats.iter().flatten().copied().collect::<Vec<_>>());
    let threshold = config.dependence_threshold * nominal.delta_hat.0.max(1e-9);
    Ok(SensitivityReport {
        nominal,
        scale_factors: factors,
        delta_hats,
        spread,
        threshold,
        dependent: spread > threshold,
        free_refit_delta_hats,
        free_refit_spread,
        failures,
    })
}

/// `|δ̂ - δ_std|/δ_std` with the numerator taken as a circular distance.
pub fn relative_error(delta_hat: f64, delta_std: f64) -> Result<f64> {
    if !(delta_std > 0.0) {
        return Err(Error::InvalidInput(format!("reference retardance must be > 0, got {delta_std}")));
    }
    Ok(wrapped_distance(delta_hat, delta_std, TAU) / delta_std)
}

/// Signed counterpart of [`relative_error`].
pub fn signed_relative_error(delta_hat: f64, delta_std: f64) -> Result<f64> {
    if !(delta_std > 0.0) {
        return Err(Error::InvalidInput(format!("reference retardance must be > 0, got {delta_std}")));
    }
    Ok(wrapped_difference(delta_hat, delta_std, TAU) / delta_std)
}

/// Mean ± sample standard deviation of a set of fits against a reference.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub n: usize,
    pub delta_std: f64,
    pub mean_delta: f64,
    pub std_delta: f64,
    /// Signed relative error statistics.
    pub mean_relative_error: f64,
    pub std_relative_error: f64,
    pub mean_abs_relative_error: f64,
    pub max_abs_relative_error: f64,
}

impl Summary {
    /// Table cell such as `3.1463 ± 0.0060 (0.39% ± 0.19%)`.
    pub fn cell(&self) -> String {
        format!(
            "{:.4} ± {:.4} ({:.2}% ± {:.2}%)",
            self.mean_delta,
            self.std_delta,
            100.0 * self.mean_relative_error,
            100.0 * self.std_relative_error
        )
    }
}

pub fn mean_std(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

pub fn aggregate(results: &[FitResult], delta_std: f64) -> Result<Summary> {
    if results.len() < 2 {
        return Err(Error::InsufficientData { needed: 2, got: results.len() });
    }
    let deltas: Vec<f64> = results.iter().map(|r| r.delta_hat.0).collect();
    let rel: Vec<f64> = deltas.iter().map(|&d| signed_relative_error(d, delta_std)).collect::<Result<_>>()?;
    let (mean_delta, std_delta) = mean_std(&deltas);
    let (mean_rel, std_rel) = mean_std(&rel);
    Ok(Summary {
        n: results.len(),
        delta_std,
        mean_delta,
        std_delta,
        mean_relative_error: mean_rel,
        std_relative_error: std_rel,
        mean_abs_relative_error: rel.iter().map(|r| r.abs()).sum::<f64>() / rel.len() as f64,
        max_abs_relative_error: rel.iter().map(|r| r.abs()).fold(0.0, f64::max),
    })
}

/// Which estimator a Monte Carlo batch applies.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Estimator {
    LeastSquares(FitConfig),
    SenarmontExtremum,
}

impl Estimator {
    pub fn apply(&self, data: &SweepDataset) -> Result<FitResult> {
        match self {
            Estimator::LeastSquares(cfg) => fit_retardance(data, cfg),
            Estimator::SenarmontExtremum => senarmont_estimate(data),
        }
    }
}

/// Simulates and fits `repetitions` independent sweeps in parallel.
///
/// Repetition `k` uses seed `derive_seed(seed, k)`; results are ordered by `k`.
pub fn monte_carlo(
    plan: &SweepPlan,
    sample: &SampleSpec,
    model: &DetectionModel,
    estimator: &Estimator,
    repetitions: usize,
    seed: u64,
) -> Vec<Result<FitResult>> {
    (0..repetitions)
        .into_par_iter()
        .map(|k| {
            let data = run_sweep(plan, sample, model, derive_seed(seed, k as u64))?;
            estimator.apply(&data)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::detection::{Sampling, SweepRecord};

    fn synth(model: FitModel, delta: f64, scale: f64, n: usize) -> SweepDataset {
        SweepDataset::from_records(
            (0..n)
                .map(|k| {
                    let a = PI * k as f64 / n as f64;
                    SweepRecord { angle: PolAngle(a), counts: scale * model.eval(a, delta).intensity, integration_s: 1.0 }
                })
                .collect(),
        )
    }

    #[test]
    fn senarmont_round_trip_at_reported_qwp_value() {
        let data = synth(FitModel::Senarmont, 1.5522, 5000.0, 36);
        let r = fit_retardance(&data, &FitConfig::new(FitModel::Senarmont)).unwrap();
        assert!((r.delta_hat.0 - 1.5522).abs() < 1e-9);
        assert!((r.scale_hat - 5000.0).abs() < 1e-6);
        assert!(r.converged);
    }

    #[test]
    fn no_compensator_round_trip() {
        let model = FitModel::NoCompensator { h_signal: PolAngle(0.0), theta: PolAngle(PI / 8.0) };
        let data = synth(model, PI / 2.0, 1000.0, 36);
        let r = fit_retardance(&data, &FitConfig::new(model)).unwrap();
        assert!((r.delta_hat.0 - PI / 2.0).abs() < 1e-9);
        assert_eq!(r.ambiguity, Ambiguity::Reflection);
    }

    #[test]
    fn invalid_geometry_is_degenerate() {
        let model = FitModel::NoCompensator { h_signal: PolAngle(0.0), theta: PolAngle(PI / 2.0) };
        let data = synth(model, 1.0, 1000.0, 36);
        assert!(matches!(fit_retardance(&data, &FitConfig::new(model)), Err(Error::DegenerateSweep(_))));
        // the structural check catches it even without the validity rule
        let cl = FitModel::ClassicalPsa { polarizer: PolAngle(PI / 2.0), theta: PolAngle(PI / 2.0), compensator: false };
        let data = synth(cl, 1.0, 1000.0, 36);
        assert!(matches!(fit_retardance(&data, &FitConfig::new(cl)), Err(Error::DegenerateSweep(_))));
    }

    #[test]
    fn too_few_records() {
        let data = synth(FitModel::Senarmont, 1.0, 100.0, 3);
        assert!(matches!(
            fit_retardance(&data, &FitConfig::new(FitModel::Senarmont)),
            Err(Error::InsufficientData { needed: 4, got: 3 })
        ));
    }

    #[test]
    fn exhausted_iterations_report_nonconvergence() {
        let data = synth(FitModel::Senarmont, 2.0, 1000.0, 36);
        let mut cfg = FitConfig::new(FitModel::Senarmont);
        cfg.max_iterations = 1;
        cfg.initial_delta = Some(Retardance(5.5));
        cfg.initial_scale = Some(10.0);
        assert!(matches!(fit_retardance(&data, &cfg), Err(Error::NonConvergence { .. })));
    }

    #[test]
    fn senarmont_estimator_examples() {
        let data = synth(FitModel::Senarmont, 1.0, 1000.0, 36);
        let r = senarmont_estimate(&data).unwrap();
        assert!((r.delta_hat.0 - 1.0).abs() < 1e-9);
        assert!((r.delta_hat.0 / 4.0 - 0.25).abs() < 1e-9);
        assert!((r.scale_hat - 1000.0).abs() < 1e-6);

        let r = senarmont_estimate(&synth(FitModel::Senarmont, 0.0, 1000.0, 36)).unwrap();
        assert!(wrapped_distance(r.delta_hat.0, 0.0, TAU) < 1e-9);

        let r = senarmont_estimate(&synth(FitModel::Senarmont, PI, 1000.0, 36)).unwrap();
        assert!((r.delta_hat.0 - PI).abs() < 1e-9);

        let flat = SweepDataset::from_records(
            (0..12).map(|k| SweepRecord { angle: PolAngle(k as f64 * 0.1), counts: 50.0, integration_s: 1.0 }).collect(),
        );
        assert!(matches!(senarmont_estimate(&flat), Err(Error::DegenerateSweep(_))));

        let narrow = SweepDataset::from_records(
            (0..12).map(|k| SweepRecord { angle: PolAngle(k as f64 * 0.01), counts: 50.0 + k as f64, integration_s: 1.0 }).collect(),
        );
        assert!(matches!(senarmont_estimate(&narrow), Err(Error::DegenerateSweep(_))));
    }

    #[test]
    fn relative_error_examples() {
        assert_eq!(relative_error(3.1341, 3.1341).unwrap(), 0.0);
        assert!((relative_error(3.1463, 3.1341).unwrap() - 0.0039).abs() < 5e-5);
        assert!((relative_error(1.5255, 1.56).unwrap() - 0.0221).abs() < 5e-5);
        assert!(relative_error(1.0, 0.0).is_err());
        assert!(relative_error(1.0, -1.0).is_err());
        assert!((signed_relative_error(1.5255, 1.56).unwrap() + 0.0221).abs() < 5e-5);
    }

    fn result(delta: f64) -> FitResult {
        FitResult {
            delta_hat: Retardance(delta),
            scale_hat: 1.0,
            residual_norm: 0.0,
            std_errors: StdErrors { delta: None, scale: None },
            iterations: 1,
            converged: true,
            ambiguity: Ambiguity::None,
        }
    }

    #[test]
    fn aggregate_examples() {
        let s = aggregate(&[result(2.0), result(2.0), result(2.0)], 2.0).unwrap();
        assert_eq!(s.std_delta, 0.0);
        let s = aggregate(&[result(3.14), result(3.16)], 3.15).unwrap();
        assert!((s.mean_delta - 3.15).abs() < 1e-12);
        assert!((s.std_delta - 0.0141).abs() < 5e-5);
        assert!(aggregate(&[result(1.0)], 1.0).is_err());
        assert!(s.cell().starts_with("3.1500 ± 0.0141"));
    }

    #[test]
    fn noise_free_sensitivity() {
        for model in [
            FitModel::Senarmont,
            FitModel::NoCompensator { h_signal: PolAngle(0.0), theta: PolAngle(PI / 8.0) },
            FitModel::Compensator { h_signal: PolAngle(0.0), theta: PolAngle(PI / 8.0) },
        ] {
            for delta in [1.56, 3.1341] {
                let data = synth(model, delta, 1e4, 36);
                let rep = sensitivity_scan(&data, &FitConfig::new(model)).unwrap();
                assert!(rep.free_refit_spread <= 1e-9, "{model:?} {delta}: {}", rep.free_refit_spread);
                assert!(rep.failures.is_empty());
            }
        }
        // held-scale shift is structural near δ = π without a compensator
        let model = FitModel::NoCompensator { h_signal: PolAngle(0.0), theta: PolAngle(PI / 8.0) };
        let rep = sensitivity_scan(&synth(model, 3.1341, 1e4, 36), &FitConfig::new(model)).unwrap();
        assert!(rep.dependent && rep.spread > 0.1);
        let rep = sensitivity_scan(&synth(FitModel::Senarmont, 3.1341, 1e4, 36), &FitConfig::new(FitModel::Senarmont)).unwrap();
        assert!(!rep.dependent && rep.spread < 1e-9);
    }

    #[test]
    fn monte_carlo_is_ordered_and_deterministic() {
        let plan = SweepPlan::quantum(PolAngle(0.0), SweepPlan::uniform_angles(0.0, PI, 36), true);
        let sample = SampleSpec::new(PolAngle(PI / 4.0), Retardance(1.2));
        let model = DetectionModel::ideal(2000.0);
        let est = Estimator::LeastSquares(FitConfig::new(FitModel::Senarmont));
        let a: Vec<f64> = monte_carlo(&plan, &sample, &model, &est, 16, 5).into_iter().map(|r| r.unwrap().delta_hat.0).collect();
        let b: Vec<f64> = monte_carlo(&plan, &sample, &model, &est, 16, 5).into_iter().map(|r| r.unwrap().delta_hat.0).collect();
        assert_eq!(a, b);
        let expected = plan.clone().with_sampling(Sampling::Expected);
        let exact = run_sweep(&expected, &sample, &model, 0).unwrap();
        assert!((fit_retardance(&exact, &FitConfig::new(FitModel::Senarmont)).unwrap().delta_hat.0 - 1.2).abs() < 1e-9);
    }
}
