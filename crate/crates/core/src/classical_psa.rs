//! Classical polarizer–sample–analyzer (PSA) transmission ellipsometer.
//!
//! Intensities are evaluated from the Jones chain
//! `E_out = A·R(a)·[C]·S·R(-p)·P·L_in` with `P = A = diag(1, 0)` and
//! `|P·L_in|² = 1`, where `C` is an optional quarter-wave compensator at 0°.
//! The printed closed form without compensator is kept as [`psa_closed_form`]
//! for regression.
//!
//! Under `a = 2h_i`, `p = π/2 - 2h_s` the classical intensity coincides with
//! the compensator-free coincidence model `I_out1/I₀` with the same sample
//! axis `θ` (no sign flip).

use std::f64::consts::FRAC_PI_2;

use nalgebra::Vector2;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::biphoton::ModelValue;
use crate::polcore::{qwp, retarder, retarder_delta_derivative, rotation, PolAngle, PolOperator, Retardance};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PsaConfig {
    pub polarizer: PolAngle,
    pub analyzer: PolAngle,
    pub theta: PolAngle,
    pub delta: Retardance,
    pub compensator_present: bool,
}

impl PsaConfig {
    pub fn new(polarizer: PolAngle, analyzer: PolAngle, theta: PolAngle, delta: Retardance) -> Self {
        PsaConfig { polarizer, analyzer, theta, delta, compensator_present: false }
    }

    pub fn with_compensator(mut self) -> Self {
        self.compensator_present = true;
        self
    }
}

fn chain(config: &PsaConfig, sample: PolOperator) -> Complex64 {
    let input = Vector2::new(Complex64::new(1.0, 0.0), Complex64::new(0.0, 0.0));
    let mut op = sample * rotation(PolAngle(-config.polarizer.0));
    if config.compensator_present {
        op = qwp(PolAngle::ZERO) * op;
    }
    let out = (rotation(config.analyzer) * op).apply(&input);
    // the analyzer keeps the first component
    out[0]
}

/// Transmitted fraction `|E_out|²/I₀`.
pub fn psa_intensity(config: &PsaConfig) -> f64 {
    psa_intensity_with_derivative(config).intensity
}

/// Transmitted fraction and its exact derivative with respect to `δ`.
pub fn psa_intensity_with_derivative(config: &PsaConfig) -> ModelValue {
    let amp = chain(config, retarder(config.theta, config.delta));
    let d_amp = chain(config, retarder_delta_derivative(config.theta, config.delta));
    ModelValue {
        intensity: amp.norm_sqr(),
        d_delta: 2.0 * (amp.conj() * d_amp).re,
    }
}

/// Printed closed form for the compensator-free PSA, as a fraction of `I₀`.
pub fn psa_closed_form(p: f64, a: f64, theta: f64, delta: f64) -> f64 {
    let cd = delta.cos();
    0.25 * (2.0 + (1.0 + cd) * (2.0 * (a - p)).cos() + (1.0 - cd) * (2.0 * (a + p - 2.0 * theta)).cos())
}

/// Maps HWP settings `(h_s, h_i)` of the entangled analyzer to PSA angles `(p, a)`.
pub fn quantum_classical_map(h_s: PolAngle, h_i: PolAngle) -> (PolAngle, PolAngle) {
    (PolAngle(FRAC_PI_2 - 2.0 * h_s.0), PolAngle(2.0 * h_i.0))
}
