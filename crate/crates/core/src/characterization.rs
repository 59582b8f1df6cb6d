//! Source characterization: fringe visibility, CHSH, fidelity and
//! maximum-likelihood two-qubit tomography.

use std::f64::consts::{FRAC_1_SQRT_2, FRAC_PI_2, FRAC_PI_4, FRAC_PI_8, SQRT_2};
use std::fmt;
use std::str::FromStr;

use nalgebra::{DMatrix, DVector, Matrix2, Matrix4, Vector2};
use num_complex::Complex64;
use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::biphoton::{coincidence_probability_density, kron, AnalyzerConfig, BiphotonDensity, BiphotonState, Port};
use crate::detection::{derive_seed, expected_coincidences, DetectionModel, Sampling, SweepDataset, SweepRecord};
use crate::error::{Error, Result};
use crate::estimation::fit_sinusoid;
use crate::polcore::{PolAngle, PolOperator};

pub const MIN_FRINGE_POINTS: usize = 8;
pub const FRINGE_PERIOD: f64 = FRAC_PI_2;
pub const TOMOGRAPHY_CSV_HEADER: &str = "basis_signal,basis_idler,counts";

/// Analysis basis of the signal arm while the idler HWP is rotated.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum FringeBasis {
    H,
    D,
}

impl FringeBasis {
    pub fn signal_hwp(self) -> PolAngle {
        match self {
            FringeBasis::H => PolAngle(0.0),
            FringeBasis::D => PolAngle(FRAC_PI_8),
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            FringeBasis::H => "H",
            FringeBasis::D => "D",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VisibilityResult {
    pub basis_label: String,
    pub c_max: f64,
    pub c_min: f64,
    pub visibility: f64,
    pub visibility_std: f64,
}

/// Visibility `(C_max - C_min)/(C_max + C_min)` from a fitted fringe.
///
/// Backgrounds are not subtracted.
pub fn visibility(curve: &SweepDataset, basis_label: &str) -> Result<VisibilityResult> {
    let n = curve.len();
    if n < MIN_FRINGE_POINTS {
        return Err(Error::InsufficientData { needed: MIN_FRINGE_POINTS, got: n });
    }
    let angles = curve.angles();
    let lo = angles.iter().cloned().fold(f64::MAX, f64::min);
    let hi = angles.iter().cloned().fold(f64::MIN, f64::max);
    let covered = (hi - lo) * n as f64 / (n - 1) as f64;
    if covered < FRINGE_PERIOD - 1e-9 {
        return Err(Error::DegenerateSweep(format!(
            "fringe sweep covers {covered:.4} rad; a full period ({FRINGE_PERIOD:.4}) is required"
        )));
    }
    let fit = fit_sinusoid(&angles, &curve.counts())?;
    let c0 = fit.coef[0];
    let amp = fit.amplitude();
    let sigma_amp = fit.amplitude_std();
    if !(c0 > 0.0) || amp <= 1e-12 * c0 || amp <= 2.0 * sigma_amp {
        return Err(Error::DegenerateSweep(format!(
            "fringe amplitude {amp:.3e} is consistent with zero (σ = {sigma_amp:.3e})"
        )));
    }
    let g = nalgebra::Vector3::new(-amp / (c0 * c0), fit.coef[1] / (amp * c0), fit.coef[2] / (amp * c0));
    let var = (g.transpose() * fit.cov * g)[(0, 0)];
    Ok(VisibilityResult {
        basis_label: basis_label.to_string(),
        c_max: c0 + amp,
        c_min: c0 - amp,
        visibility: amp / c0,
        visibility_std: var.max(0.0).sqrt(),
    })
}

/// Idler-HWP fringe at a fixed signal basis, both ports transmitted.
pub fn fringe_sweep(
    rho: &BiphotonDensity,
    basis: FringeBasis,
    points: usize,
    model: &DetectionModel,
    sampling: Sampling,
    seed: u64,
) -> Result<SweepDataset> {
    model.validate()?;
    let records = (0..points)
        .map(|k| {
            let h = FRINGE_PERIOD * k as f64 / points as f64;
            let p = coincidence_probability_density(rho, &AnalyzerConfig::new(basis.signal_hwp(), PolAngle(h)));
            let mean = expected_coincidences(p, model)?;
            Ok(SweepRecord {
                angle: PolAngle(h),
                counts: sampling.draw(mean, seed, k as u64)?,
                integration_s: model.integration_time,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(SweepDataset::from_records(records))
}

/// Analyzer polarization angles: `a, a'` on the signal arm, `b, b'` on the idler.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ChshSettings {
    pub a: PolAngle,
    pub a_prime: PolAngle,
    pub b: PolAngle,
    pub b_prime: PolAngle,
}

impl Default for ChshSettings {
    /// Maximal violation for `(|HV⟩ + |VH⟩)/√2`, whose correlation is
    /// `E(α, β) = -cos 2(α + β)`: signal `0°, 45°`, idler `-22.5°, -67.5°`.
    fn default() -> Self {
        ChshSettings {
            a: PolAngle(0.0),
            a_prime: PolAngle(FRAC_PI_4),
            b: PolAngle(-FRAC_PI_8),
            b_prime: PolAngle(-3.0 * FRAC_PI_8),
        }
    }
}

impl ChshSettings {
    /// Textbook settings `(0°, 45°; 22.5°, 67.5°)`, optimal for `(|HH⟩ + |VV⟩)/√2`.
    pub fn canonical() -> Self {
        ChshSettings {
            a: PolAngle(0.0),
            a_prime: PolAngle(FRAC_PI_4),
            b: PolAngle(FRAC_PI_8),
            b_prime: PolAngle(3.0 * FRAC_PI_8),
        }
    }

    /// `(a,b), (a,b'), (a',b), (a',b')`
    pub fn pairs(&self) -> [(PolAngle, PolAngle); 4] {
        [(self.a, self.b), (self.a, self.b_prime), (self.a_prime, self.b), (self.a_prime, self.b_prime)]
    }
}

/// Counts of the four port combinations for one analyzer pair.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ChshCell {
    pub signal_angle: PolAngle,
    pub idler_angle: PolAngle,
    /// `[++, +-, -+, --]`, `+` = transmitted.
    pub counts: [f64; 4],
    pub correlation: f64,
    pub correlation_std: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChshResult {
    pub settings: ChshSettings,
    pub cells: Vec<ChshCell>,
    pub s_value: f64,
    pub s_std: f64,
}

impl ChshResult {
    pub fn correlations(&self) -> [f64; 4] {
        [self.cells[0].correlation, self.cells[1].correlation, self.cells[2].correlation, self.cells[3].correlation]
    }

    /// `(S - 2)/σ_S`.
    pub fn violation_sigmas(&self) -> f64 {
        (self.s_value - 2.0) / self.s_std
    }
}

const PORT_PAIRS: [(Port, Port); 4] = [
    (Port::Transmitted, Port::Transmitted),
    (Port::Transmitted, Port::Reflected),
    (Port::Reflected, Port::Transmitted),
    (Port::Reflected, Port::Reflected),
];

/// CHSH parameter `|E(a,b) - E(a,b') + E(a',b) + E(a',b')|` from simulated counts.
///
/// Each of the 16 (pair, port, port) means is `expected_coincidences(p, model)`;
/// `σ_E² = (1 - E²)/N` per pair.
pub fn chsh(
    rho: &BiphotonDensity,
    settings: &ChshSettings,
    model: &DetectionModel,
    sampling: Sampling,
    seed: u64,
) -> Result<ChshResult> {
    model.validate()?;
    let mut cells = Vec::with_capacity(4);
    for (k, (alpha, beta)) in settings.pairs().into_iter().enumerate() {
        let mut counts = [0.0; 4];
        for (j, (ps, pi)) in PORT_PAIRS.into_iter().enumerate() {
            let cfg = AnalyzerConfig::new(PolAngle(alpha.0 / 2.0), PolAngle(beta.0 / 2.0)).with_ports(ps, pi);
            let mean = expected_coincidences(coincidence_probability_density(rho, &cfg), model)?;
            counts[j] = sampling.draw(mean, seed, (4 * k + j) as u64)?;
        }
        cells.push(correlation_cell(alpha, beta, counts)?);
    }
    Ok(chsh_from_cells(*settings, cells))
}

fn correlation_cell(signal_angle: PolAngle, idler_angle: PolAngle, counts: [f64; 4]) -> Result<ChshCell> {
    let total: f64 = counts.iter().sum();
    if !(total > 0.0) {
        return Err(Error::InsufficientData { needed: 1, got: 0 });
    }
    let e = (counts[0] + counts[3] - counts[1] - counts[2]) / total;
    Ok(ChshCell { signal_angle, idler_angle, counts, correlation: e, correlation_std: ((1.0 - e * e).max(0.0) / total).sqrt() })
}

fn chsh_from_cells(settings: ChshSettings, cells: Vec<ChshCell>) -> ChshResult {
    let e: Vec<f64> = cells.iter().map(|c| c.correlation).collect();
    let s = (e[0] - e[1] + e[2] + e[3]).abs();
    let s_std = cells.iter().map(|c| c.correlation_std.powi(2)).sum::<f64>().sqrt();
    ChshResult { settings, cells, s_value: s, s_std }
}

/// CHSH from a measured table of `[++, +-, -+, --]` counts per analyzer pair.
pub fn chsh_from_counts(settings: ChshSettings, counts: [[f64; 4]; 4]) -> Result<ChshResult> {
    let cells = settings
        .pairs()
        .into_iter()
        .zip(counts)
        .map(|((a, b), c)| correlation_cell(a, b, c))
        .collect::<Result<Vec<_>>>()?;
    Ok(chsh_from_cells(settings, cells))
}

/// `⟨ψ|ρ|ψ⟩`
pub fn fidelity(rho: &BiphotonDensity, target: &BiphotonState) -> f64 {
    rho.overlap(target).clamp(0.0, 1.0)
}

fn psd_sqrt(m: &Matrix4<Complex64>) -> Matrix4<Complex64> {
    let h = (m + m.adjoint()) * Complex64::new(0.5, 0.0);
    let eig = h.symmetric_eigen();
    let d = Matrix4::from_diagonal(&eig.eigenvalues.map(|l| Complex64::new(l.max(0.0).sqrt(), 0.0)));
    eig.eigenvectors * d * eig.eigenvectors.adjoint()
}

/// Uhlmann fidelity `(tr √(√ρ σ √ρ))²`.
pub fn uhlmann_fidelity(rho: &BiphotonDensity, sigma: &BiphotonDensity) -> f64 {
    let sr = psd_sqrt(rho.matrix());
    let inner = sr * sigma.matrix() * sr;
    let h = (inner + inner.adjoint()) * Complex64::new(0.5, 0.0);
    let t: f64 = h.symmetric_eigenvalues().iter().map(|l| l.max(0.0).sqrt()).sum();
    (t * t).clamp(0.0, 1.0)
}

/// Single-photon analysis state of a tomography setting.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum TomoBasis {
    H,
    V,
    D,
    A,
    R,
    L,
}

impl TomoBasis {
    pub const ALL: [TomoBasis; 6] = [TomoBasis::H, TomoBasis::V, TomoBasis::D, TomoBasis::A, TomoBasis::R, TomoBasis::L];

    /// `R = (H - iV)/√2`, `L = (H + iV)/√2`.
    pub fn state(self) -> Vector2<Complex64> {
        let r = |x: f64| Complex64::new(x, 0.0);
        let h = FRAC_1_SQRT_2;
        match self {
            TomoBasis::H => Vector2::new(r(1.0), r(0.0)),
            TomoBasis::V => Vector2::new(r(0.0), r(1.0)),
            TomoBasis::D => Vector2::new(r(h), r(h)),
            TomoBasis::A => Vector2::new(r(h), r(-h)),
            TomoBasis::R => Vector2::new(r(h), Complex64::new(0.0, -h)),
            TomoBasis::L => Vector2::new(r(h), Complex64::new(0.0, h)),
        }
    }

    pub fn projector(self) -> PolOperator {
        let v = self.state();
        PolOperator(v * v.adjoint())
    }

    pub fn label(self) -> &'static str {
        match self {
            TomoBasis::H => "H",
            TomoBasis::V => "V",
            TomoBasis::D => "D",
            TomoBasis::A => "A",
            TomoBasis::R => "R",
            TomoBasis::L => "L",
        }
    }
}

impl fmt::Display for TomoBasis {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

impl FromStr for TomoBasis {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        TomoBasis::ALL
            .into_iter()
            .find(|b| b.label() == s.trim())
            .ok_or_else(|| Error::Parse(format!("unknown tomography basis {s:?}")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TomoEntry {
    pub signal: TomoBasis,
    pub idler: TomoBasis,
    pub counts: f64,
}

impl TomoEntry {
    pub fn effect(&self) -> Matrix4<Complex64> {
        kron(&self.signal.projector(), &self.idler.projector())
    }
}

/// Coincidence counts for a set of joint projections.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct TomographyCounts {
    pub entries: Vec<TomoEntry>,
}

impl TomographyCounts {
    pub fn to_csv_string(&self) -> String {
        let mut out = String::from(TOMOGRAPHY_CSV_HEADER);
        out.push('\n');
        for e in &self.entries {
            out.push_str(&format!("{},{},{:?}\n", e.signal, e.idler, e.counts));
        }
        out
    }

    pub fn from_csv_str(text: &str) -> Result<Self> {
        let mut lines = text.lines().filter(|l| !l.trim().is_empty());
        match lines.next() {
            Some(h) if h.trim() == TOMOGRAPHY_CSV_HEADER => {}
            other => return Err(Error::Parse(format!("expected header {TOMOGRAPHY_CSV_HEADER:?}, got {other:?}"))),
        }
        let entries = lines
            .enumerate()
            .map(|(i, line)| {
                let fields: Vec<&str> = line.split(',').collect();
                if fields.len() != 3 {
                    return Err(Error::Parse(format!("line {}: expected 3 fields", i + 2)));
                }
                let counts: f64 = fields[2].trim().parse().map_err(|e| Error::Parse(format!("line {}: {e}", i + 2)))?;
                if !(counts >= 0.0) || !counts.is_finite() {
                    return Err(Error::Parse(format!("line {}: counts must be finite and >= 0", i + 2)));
                }
                Ok(TomoEntry { signal: fields[0].parse()?, idler: fields[1].parse()?, counts })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(TomographyCounts { entries })
    }
}

/// Simulated 36-setting count table; setting `k` uses RNG stream `k`.
pub fn simulate_tomography(rho: &BiphotonDensity, model: &DetectionModel, sampling: Sampling, seed: u64) -> Result<TomographyCounts> {
    model.validate()?;
    let settings: Vec<(TomoBasis, TomoBasis)> =
        TomoBasis::ALL.iter().flat_map(|&s| TomoBasis::ALL.iter().map(move |&i| (s, i))).collect();
    let entries = settings
        .par_iter()
        .enumerate()
        .map(|(k, &(signal, idler))| {
            let mut e = TomoEntry { signal, idler, counts: 0.0 };
            let p = rho.expectation(&e.effect()).clamp(0.0, 1.0);
            e.counts = sampling.draw(expected_coincidences(p, model)?, seed, k as u64)?;
            Ok(e)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(TomographyCounts { entries })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TomographyResult {
    pub rho: BiphotonDensity,
    pub fidelity_to_target: f64,
    pub log_likelihood: f64,
    pub iterations: usize,
}

pub const MLE_MAX_ITERATIONS: usize = 5000;
pub const MLE_TOL: f64 = 1e-10;

fn pauli(k: usize) -> Matrix2<Complex64> {
    let (z, o, i) = (Complex64::new(0.0, 0.0), Complex64::new(1.0, 0.0), Complex64::new(0.0, 1.0));
    match k {
        0 => Matrix2::new(o, z, z, o),
        1 => Matrix2::new(z, o, o, z),
        2 => Matrix2::new(z, -i, i, z),
        _ => Matrix2::new(o, z, z, -o),
    }
}

fn pauli_basis() -> Vec<Matrix4<Complex64>> {
    (0..16).map(|k| kron(&PolOperator(pauli(k / 4)), &PolOperator(pauli(k % 4)))).collect()
}

fn hermitize(m: &Matrix4<Complex64>) -> Matrix4<Complex64> {
    (m + m.adjoint()) * Complex64::new(0.5, 0.0)
}

/// Clips negative eigenvalues and renormalizes to unit trace.
fn project_physical(m: &Matrix4<Complex64>) -> Matrix4<Complex64> {
    let eig = hermitize(m).symmetric_eigen();
    let clipped = eig.eigenvalues.map(|l| l.max(0.0));
    let total: f64 = clipped.sum();
    if total <= 0.0 {
        return Matrix4::identity() * Complex64::new(0.25, 0.0);
    }
    let d = Matrix4::from_diagonal(&clipped.map(|l| Complex64::new(l / total, 0.0)));
    hermitize(&(eig.eigenvectors * d * eig.eigenvectors.adjoint()))
}

/// Multinomial log-likelihood `Σ n_k ln(p_k/Σp)`.
fn log_likelihood(rho: &Matrix4<Complex64>, effects: &[Matrix4<Complex64>], counts: &[f64]) -> f64 {
    let probs: Vec<f64> = effects.iter().map(|e| (e * rho).trace().re.max(0.0)).collect();
    let total: f64 = probs.iter().sum();
    probs
        .iter()
        .zip(counts)
        .map(|(&p, &n)| if n == 0.0 { 0.0 } else { n * (p / total).ln() })
        .sum()
}

/// Maximum-likelihood density matrix from a joint-projection count table.
///
/// A least-squares linear inversion, projected onto the physical cone, seeds
/// the `ρ ← RρR / tr(RρR)` iteration with `R = Σ_k (n_k/p_k) Π_k`.
pub fn tomography(counts: &TomographyCounts, target: &BiphotonState) -> Result<TomographyResult> {
    let entries = &counts.entries;
    if entries.iter().map(|e| e.counts).sum::<f64>() <= 0.0 {
        return Err(Error::InsufficientData { needed: 1, got: 0 });
    }
    let effects: Vec<Matrix4<Complex64>> = entries.iter().map(TomoEntry::effect).collect();
    let n: Vec<f64> = entries.iter().map(|e| e.counts).collect();

    let basis = pauli_basis();
    let design = DMatrix::from_fn(entries.len(), 16, |k, j| (effects[k] * basis[j]).trace().re);
    let svd = design.clone().svd(true, true);
    let smax = svd.singular_values.max();
    let smin = if entries.len() >= 16 { svd.singular_values.min() } else { 0.0 };
    if !(smin > 1e-10 * smax) {
        return Err(Error::IllConditioned(format!(
            "{} settings do not determine all 16 density-matrix parameters",
            entries.len()
        )));
    }
    let x = svd
        .solve(&DVector::from_vec(n.clone()), 1e-12 * smax)
        .map_err(|e| Error::IllConditioned(e.to_string()))?;
    let linear = basis.iter().zip(x.iter()).fold(Matrix4::zeros(), |acc, (b, &c)| acc + b * Complex64::new(c, 0.0));
    let mut rho = project_physical(&linear);
    let mut ll = log_likelihood(&rho, &effects, &n);
    if !ll.is_finite() {
        rho = rho * Complex64::new(0.99, 0.0) + Matrix4::identity() * Complex64::new(0.0025, 0.0);
        ll = log_likelihood(&rho, &effects, &n);
    }

    let mut iterations = 0;
    while iterations < MLE_MAX_ITERATIONS {
        let mut r = Matrix4::zeros();
        for (e, &nk) in effects.iter().zip(&n) {
            if nk > 0.0 {
                let p = (e * rho).trace().re;
                if p > 0.0 {
                    r += e * Complex64::new(nk / p, 0.0);
                }
            }
        }
        let next = r * rho * r;
        let tr = next.trace().re;
        if !(tr > 0.0) {
            break;
        }
        let next = hermitize(&(next / Complex64::new(tr, 0.0)));
        let next_ll = log_likelihood(&next, &effects, &n);
        iterations += 1;
        if !(next_ll >= ll) {
            break;
        }
        let gain = next_ll - ll;
        rho = next;
        ll = next_ll;
        if gain < MLE_TOL {
            break;
        }
    }
    let rho = BiphotonDensity::from_matrix(project_physical(&rho))?;
    Ok(TomographyResult { fidelity_to_target: fidelity(&rho, target), rho, log_likelihood: ll, iterations })
}

/// Random density matrix `GG†/tr(GG†)` with `G` a complex Gaussian `4×rank` matrix.
pub fn random_density<R: Rng + ?Sized>(rng: &mut R, rank: usize) -> BiphotonDensity {
    let rank = rank.clamp(1, 4);
    let g = DMatrix::<Complex64>::from_fn(4, rank, |_, _| {
        Complex64::new(rng.sample::<f64, _>(StandardNormal), rng.sample::<f64, _>(StandardNormal))
    });
    let m = &g * g.adjoint();
    let tr = m.trace().re;
    let rho = Matrix4::from_fn(|r, c| m[(r, c)] / tr);
    BiphotonDensity::from_matrix(hermitize(&rho)).expect("Wishart matrix is a valid density")
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CharacterizationPlan {
    pub fringe_points: usize,
    pub sampling: Sampling,
    pub chsh_settings: ChshSettings,
}

impl Default for CharacterizationPlan {
    fn default() -> Self {
        CharacterizationPlan { fringe_points: 36, sampling: Sampling::Poisson, chsh_settings: ChshSettings::default() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CharacterizationReport {
    pub visibility_h: VisibilityResult,
    pub visibility_d: VisibilityResult,
    pub chsh: ChshResult,
    pub tomography: TomographyResult,
    #[serde(skip)]
    pub fringe_h: SweepDataset,
    #[serde(skip)]
    pub fringe_d: SweepDataset,
    #[serde(skip)]
    pub tomography_counts: TomographyCounts,
}

/// H- and D-basis fringes, CHSH and tomography of one source, each with its own sub-seed.
///
/// Per-setting means follow `expected_coincidences`, so the pair budget of a
/// setting is `coincidence_scale·T`.
pub fn simulate_characterization(
    rho: &BiphotonDensity,
    target: &BiphotonState,
    model: &DetectionModel,
    plan: &CharacterizationPlan,
    seed: u64,
) -> Result<CharacterizationReport> {
    rho.check()?;
    let fringe_h = fringe_sweep(rho, FringeBasis::H, plan.fringe_points, model, plan.sampling, derive_seed(seed, 1))?;
    let fringe_d = fringe_sweep(rho, FringeBasis::D, plan.fringe_points, model, plan.sampling, derive_seed(seed, 2))?;
    let chsh = chsh(rho, &plan.chsh_settings, model, plan.sampling, derive_seed(seed, 3))?;
    let tomography_counts = simulate_tomography(rho, model, plan.sampling, derive_seed(seed, 4))?;
    Ok(CharacterizationReport {
        visibility_h: visibility(&fringe_h, FringeBasis::H.label())?,
        visibility_d: visibility(&fringe_d, FringeBasis::D.label())?,
        chsh,
        tomography: tomography(&tomography_counts, target)?,
        fringe_h,
        fringe_d,
        tomography_counts,
    })
}

/// Werner-state identities: `V = v`, `S = 2√2·v`, `F = (1 + 3v)/4`.
pub fn werner_expectations(v: f64) -> (f64, f64, f64) {
    (v, 2.0 * SQRT_2 * v, (1.0 + 3.0 * v) / 4.0)
}
