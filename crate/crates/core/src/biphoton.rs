//! Two-photon polarization state engine and closed-form coincidence models.
//!
//! Basis order is `(HH, HV, VH, VV)` with the signal photon as the left tensor
//! factor. Coincidence probabilities are computed from first principles as
//! `tr[(E_s ⊗ E_i) ρ]`; the closed-form models are regression-tested against
//! that engine.
//!
//! Conventions reproduced by the engine (both ports transmitted):
//!
//! * no compensator: `I_out1/I₀ = 2·p`, with the interference term
//!   `cos(4(h_i - h_s - θ))`. The alternative sign `cos(4(h_s - h_i - θ))`
//!   does not match the state evolution.
//! * quarter-wave compensator at 0° after the sample: `I_out2/I₀ = p`.

use std::f64::consts::{FRAC_1_SQRT_2, PI};

use nalgebra::{Matrix4, Vector4};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::polcore::{qwp, retarder, wrapped_distance, PolAngle, PolOperator, Retardance};

/// Closed-form `I_out1/I₀` equals this multiple of the transmitted/transmitted probability.
pub const NO_COMPENSATOR_SCALE: f64 = 2.0;
/// Closed-form `I_out2/I₀` (and the Senarmont form) equals this multiple of the probability.
pub const COMPENSATOR_SCALE: f64 = 1.0;

const UNITARY_TOL: f64 = 1e-10;

/// Normalized pure two-photon polarization state.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BiphotonState {
    amps: Vector4<Complex64>,
}

impl BiphotonState {
    /// Builds a state from `(HH, HV, VH, VV)` amplitudes, normalizing them.
    pub fn new(amps: [Complex64; 4]) -> Result<Self> {
        let v = Vector4::from(amps);
        let n = v.norm();
        if !(n > 0.0) || !n.is_finite() {
            return Err(Error::InvalidInput("state vector must have finite nonzero norm".into()));
        }
        Ok(BiphotonState { amps: v / Complex64::new(n, 0.0) })
    }

    pub fn product(signal: &crate::polcore::JonesVector, idler: &crate::polcore::JonesVector) -> Result<Self> {
        Self::new([
            signal[0] * idler[0],
            signal[0] * idler[1],
            signal[1] * idler[0],
            signal[1] * idler[1],
        ])
    }

    pub fn amplitudes(&self) -> &Vector4<Complex64> {
        &self.amps
    }

    pub fn norm(&self) -> f64 {
        self.amps.norm()
    }

    pub fn density(&self) -> BiphotonDensity {
        BiphotonDensity { matrix: self.amps * self.amps.adjoint() }
    }
}

/// 4×4 density matrix in the `(HH, HV, VH, VV)` basis.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BiphotonDensity {
    matrix: Matrix4<Complex64>,
}

impl BiphotonDensity {
    pub const HERMITIAN_TOL: f64 = 1e-10;
    pub const TRACE_TOL: f64 = 1e-10;
    pub const EIGEN_TOL: f64 = 1e-9;

    /// Validates hermiticity, unit trace and positivity.
    pub fn from_matrix(matrix: Matrix4<Complex64>) -> Result<Self> {
        let rho = BiphotonDensity { matrix };
        rho.check()?;
        Ok(rho)
    }

    pub fn maximally_mixed() -> Self {
        BiphotonDensity { matrix: Matrix4::identity() * Complex64::new(0.25, 0.0) }
    }

    pub fn matrix(&self) -> &Matrix4<Complex64> {
        &self.matrix
    }

    pub fn trace(&self) -> f64 {
        self.matrix.trace().re
    }

    pub fn hermiticity_deviation(&self) -> f64 {
        (self.matrix - self.matrix.adjoint()).iter().map(|z| z.norm()).fold(0.0, f64::max)
    }

    /// Eigenvalues of the Hermitian part, ascending.
    pub fn eigenvalues(&self) -> [f64; 4] {
        let h = (self.matrix + self.matrix.adjoint()) * Complex64::new(0.5, 0.0);
        let eig = h.symmetric_eigenvalues();
        let mut ev = [eig[0], eig[1], eig[2], eig[3]];
        ev.sort_by(|a, b| a.total_cmp(b));
        ev
    }

    pub fn check(&self) -> Result<()> {
        let herm = self.hermiticity_deviation();
        if herm > Self::HERMITIAN_TOL {
            return Err(Error::InvalidInput(format!("density matrix not Hermitian ({herm:.3e})")));
        }
        let tr = self.trace();
        if (tr - 1.0).abs() > Self::TRACE_TOL {
            return Err(Error::InvalidInput(format!("density matrix trace {tr} != 1")));
        }
        let min = self.eigenvalues()[0];
        if min < -Self::EIGEN_TOL {
            return Err(Error::InvalidInput(format!("density matrix has eigenvalue {min:.3e} < 0")));
        }
        Ok(())
    }

    /// `tr[O ρ]` for a Hermitian observable/effect `O`.
    pub fn expectation(&self, op: &Matrix4<Complex64>) -> f64 {
        (op * self.matrix).trace().re
    }

    /// `⟨ψ|ρ|ψ⟩`
    pub fn overlap(&self, state: &BiphotonState) -> f64 {
        let a = state.amplitudes();
        (a.adjoint() * self.matrix * a)[(0, 0)].re
    }

    /// Apply `J_s ⊗ J_i` as `U ρ U†`.
    pub fn evolve(&self, j_signal: &PolOperator, j_idler: &PolOperator) -> Result<Self> {
        check_unitary(j_signal)?;
        check_unitary(j_idler)?;
        let u = kron(j_signal, j_idler);
        Ok(BiphotonDensity { matrix: u * self.matrix * u.adjoint() })
    }
}

impl Serialize for BiphotonDensity {
    /// 16 row-major `[re, im]` pairs.
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        let entries: Vec<[f64; 2]> = (0..16).map(|k| {
            let z = self.matrix[(k / 4, k % 4)];
            [z.re, z.im]
        }).collect();
        entries.serialize(serializer)
    }
}

impl<'de> Deserialize<'de> for BiphotonDensity {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        let entries = Vec::<[f64; 2]>::deserialize(deserializer)?;
        if entries.len() != 16 {
            return Err(serde::de::Error::custom(format!("expected 16 entries, got {}", entries.len())));
        }
        let m = Matrix4::from_fn(|r, c| {
            let [re, im] = entries[4 * r + c];
            Complex64::new(re, im)
        });
        BiphotonDensity::from_matrix(m).map_err(serde::de::Error::custom)
    }
}

/// Output port of the polarizing beam splitter behind a half-wave plate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Port {
    Transmitted,
    Reflected,
}

impl Port {
    pub const BOTH: [Port; 2] = [Port::Transmitted, Port::Reflected];

    /// `+1` for the transmitted port, `-1` for the reflected one.
    pub fn sign(self) -> f64 {
        match self {
            Port::Transmitted => 1.0,
            Port::Reflected => -1.0,
        }
    }
}

/// HWP angle plus PBS port selecting one projective measurement outcome.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProjectorSetting {
    pub hwp_angle: PolAngle,
    pub port: Port,
}

impl ProjectorSetting {
    pub fn transmitted(hwp_angle: PolAngle) -> Self {
        ProjectorSetting { hwp_angle, port: Port::Transmitted }
    }

    pub fn reflected(hwp_angle: PolAngle) -> Self {
        ProjectorSetting { hwp_angle, port: Port::Reflected }
    }
}

/// Joint analyzer configuration for both arms.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AnalyzerConfig {
    pub signal: ProjectorSetting,
    pub idler: ProjectorSetting,
    /// Quarter-wave compensator in the idler arm, after the sample.
    pub compensator_present: bool,
    pub compensator_angle: PolAngle,
}

impl AnalyzerConfig {
    /// Both ports transmitted, no compensator.
    pub fn new(h_signal: PolAngle, h_idler: PolAngle) -> Self {
        AnalyzerConfig {
            signal: ProjectorSetting::transmitted(h_signal),
            idler: ProjectorSetting::transmitted(h_idler),
            compensator_present: false,
            compensator_angle: PolAngle::ZERO,
        }
    }

    pub fn with_compensator(mut self) -> Self {
        self.compensator_present = true;
        self
    }

    pub fn with_ports(mut self, signal: Port, idler: Port) -> Self {
        self.signal.port = signal;
        self.idler.port = idler;
        self
    }
}

/// `|φ⁺⟩ = (|HV⟩ + |VH⟩)/√2`.
pub fn bell_phi_plus() -> BiphotonState {
    let z = Complex64::new(0.0, 0.0);
    let a = Complex64::new(FRAC_1_SQRT_2, 0.0);
    BiphotonState { amps: Vector4::new(z, a, a, z) }
}

/// Kronecker product `a ⊗ b` in `(HH, HV, VH, VV)` ordering.
pub fn kron(a: &PolOperator, b: &PolOperator) -> Matrix4<Complex64> {
    Matrix4::from_fn(|r, c| a.entry(r / 2, c / 2) * b.entry(r % 2, c % 2))
}

fn check_unitary(op: &PolOperator) -> Result<()> {
    let deviation = op.unitarity_deviation();
    if deviation > UNITARY_TOL {
        Err(Error::NonUnitary { deviation })
    } else {
        Ok(())
    }
}

/// `(J_s ⊗ J_i)|ψ⟩`; both operators must be unitary.
pub fn apply_local(state: &BiphotonState, j_signal: &PolOperator, j_idler: &PolOperator) -> Result<BiphotonState> {
    check_unitary(j_signal)?;
    check_unitary(j_idler)?;
    Ok(BiphotonState { amps: kron(j_signal, j_idler) * state.amps })
}

/// The state after the idler photon crosses a retarder `(θ, δ)`.
pub fn sample_state(theta: PolAngle, delta: Retardance) -> BiphotonState {
    let s = retarder(theta, delta);
    BiphotonState { amps: kron(&PolOperator::identity(), &s) * bell_phi_plus().amps }
}

/// Rank-1 projector of one PBS port behind a HWP at `h`.
///
/// Transmitted: `|M⟩⟨M|` with `M = (cos 2h, sin 2h)`;
/// reflected: `|N⟩⟨N|` with `N = (-sin 2h, cos 2h)`.
pub fn projector(setting: ProjectorSetting) -> PolOperator {
    let (s, c) = (2.0 * setting.hwp_angle.0).sin_cos();
    match setting.port {
        Port::Transmitted => PolOperator::from_real([[c * c, c * s], [c * s, s * s]]),
        Port::Reflected => PolOperator::from_real([[s * s, -c * s], [-c * s, c * c]]),
    }
}

/// Joint measurement effect `E_s ⊗ C† E_i C`, where `C` is the optional compensator.
pub fn measurement_effect(config: &AnalyzerConfig) -> Matrix4<Complex64> {
    let es = projector(config.signal);
    let mut ei = projector(config.idler);
    if config.compensator_present {
        let c = qwp(config.compensator_angle);
        ei = c.adjoint() * ei * c;
    }
    kron(&es, &ei)
}

/// First-principles joint detection probability `tr[(E_s ⊗ E_i) ρ]` for a pure state.
pub fn coincidence_probability(state: &BiphotonState, config: &AnalyzerConfig) -> f64 {
    let a = state.amplitudes();
    let e = measurement_effect(config);
    (a.adjoint() * e * a)[(0, 0)].re.clamp(0.0, 1.0)
}

/// As [`coincidence_probability`], for a mixed state.
pub fn coincidence_probability_density(rho: &BiphotonDensity, config: &AnalyzerConfig) -> f64 {
    rho.expectation(&measurement_effect(config)).clamp(0.0, 1.0)
}

/// Value of a closed-form intensity model and its derivative in `δ`, as fractions of `I₀`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModelValue {
    pub intensity: f64,
    pub d_delta: f64,
}

/// Compensator-free coincidence model `I_out1/I₀` and `∂/∂δ`.
pub fn model_no_compensator(h_s: f64, h_i: f64, theta: f64, delta: f64) -> ModelValue {
    let c_sum = (4.0 * (h_s + h_i)).cos();
    let c_diff = (4.0 * (h_i - h_s - theta)).cos();
    let (sd, cd) = delta.sin_cos();
    ModelValue {
        intensity: 0.25 * (2.0 - (1.0 + cd) * c_sum - (1.0 - cd) * c_diff),
        d_delta: 0.25 * sd * (c_sum - c_diff),
    }
}

/// Model with a quarter-wave compensator at 0° behind the sample: `I_out2/I₀` and `∂/∂δ`.
pub fn model_compensator(h_s: f64, h_i: f64, theta: f64, delta: f64) -> ModelValue {
    let (s4i, c4i) = (4.0 * h_i).sin_cos();
    let c4s = (4.0 * h_s).cos();
    let c4st = (4.0 * h_s + 4.0 * theta).cos();
    let k = (4.0 * h_s + 2.0 * theta).sin();
    let (sd, cd) = delta.sin_cos();
    let (sh, ch) = (0.5 * delta).sin_cos();
    ModelValue {
        intensity: 0.25 * (1.0 - c4i * (c4s * ch * ch + c4st * sh * sh) - s4i * k * sd),
        d_delta: 0.25 * k * (-cd * s4i + c4i * sd * (2.0 * theta).sin()),
    }
}

/// Senarmont configuration (`h_s = 0`, `θ = π/4`, compensator at 0°).
pub fn model_senarmont(h_i: f64, delta: f64) -> ModelValue {
    let x = 0.5 * delta - 2.0 * h_i;
    let s = x.sin();
    ModelValue {
        intensity: 0.5 * s * s,
        d_delta: 0.25 * (delta - 4.0 * h_i).sin(),
    }
}

/// Tolerance on `4h_s + 2θ (mod π)` below which a sweep is treated as uninformative.
pub const VALIDITY_TOL: f64 = 1e-9;

/// Whether rotating the idler HWP with `h_s` and `θ` fixed yields δ-dependent counts.
///
/// Requires `4h_s + 2θ ≢ 0 (mod π)`.
pub fn sweep_validity(h_s: f64, theta: f64) -> bool {
    wrapped_distance(4.0 * h_s + 2.0 * theta, 0.0, PI) > VALIDITY_TOL
}

/// Werner-type mixture `v|ψ⟩⟨ψ| + (1-v)·I/4`.
pub fn depolarize(state: &BiphotonState, visibility: f64) -> Result<BiphotonDensity> {
    if !(0.0..=1.0).contains(&visibility) {
        return Err(Error::InvalidInput(format!("visibility must lie in [0, 1], got {visibility}")));
    }
    let pure = state.density().matrix;
    let mixed = BiphotonDensity::maximally_mixed().matrix;
    Ok(BiphotonDensity {
        matrix: pure * Complex64::new(visibility, 0.0) + mixed * Complex64::new(1.0 - visibility, 0.0),
    })
}
