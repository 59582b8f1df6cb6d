//! Jones-calculus primitives.
//!
//! Matrices follow the row convention `R(α) = [[cos α, sin α], [-sin α, cos α]]`
//! and a linear retarder with slow axis at `θ` is `R(-θ)·diag(1, e^{iδ})·R(θ)`.
//! No global-phase normalization is applied anywhere; use
//! [`PolOperator::approx_eq_up_to_phase`] when the phase is irrelevant.

use std::f64::consts::{PI, TAU};
use std::ops::Mul;

use nalgebra::{Matrix2, Vector2};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type JonesVector = Vector2<Complex64>;

/// Reduce `x` into `[0, period)`.
pub fn wrap(x: f64, period: f64) -> f64 {
    let r = x.rem_euclid(period);
    // rem_euclid can round up to exactly `period` for tiny negative inputs
    if r >= period {
        0.0
    } else {
        r
    }
}

/// Shortest distance between `a` and `b` on a circle of circumference `period`.
pub fn wrapped_distance(a: f64, b: f64, period: f64) -> f64 {
    let d = wrap(a - b, period);
    d.min(period - d)
}

/// Signed shortest difference `a - b` on a circle, in `(-period/2, period/2]`.
pub fn wrapped_difference(a: f64, b: f64, period: f64) -> f64 {
    let d = wrap(a - b, period);
    if d > period / 2.0 {
        d - period
    } else {
        d
    }
}

/// A polarization angle (waveplate axis, HWP setting, polarizer direction) in radians.
///
/// Values are stored as given; reduction happens when angles are compared.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Default, Serialize, Deserialize)]
#[serde(transparent)]
pub struct PolAngle(pub f64);

impl PolAngle {
    pub const ZERO: PolAngle = PolAngle(0.0);

    pub fn rad(value: f64) -> Self {
        PolAngle(value)
    }

    pub fn deg(value: f64) -> Self {
        PolAngle(value.to_radians())
    }

    pub fn radians(self) -> f64 {
        self.0
    }

    pub fn degrees(self) -> f64 {
        self.0.to_degrees()
    }

    /// Distance to `other` modulo the axis period π.
    pub fn axis_distance(self, other: PolAngle) -> f64 {
        wrapped_distance(self.0, other.0, PI)
    }
}

/// Optical phase retardance in radians. Canonical reporting range is `[0, 2π)`.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Default, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Retardance(pub f64);

impl Retardance {
    pub fn rad(value: f64) -> Self {
        Retardance(value)
    }

    pub fn radians(self) -> f64 {
        self.0
    }

    pub fn wrapped(self) -> Retardance {
        Retardance(wrap(self.0, TAU))
    }

    pub fn distance(self, other: Retardance) -> f64 {
        wrapped_distance(self.0, other.0, TAU)
    }
}

/// A 2×2 complex Jones matrix acting on one photon's polarization.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PolOperator(pub Matrix2<Complex64>);

impl PolOperator {
    pub fn identity() -> Self {
        PolOperator(Matrix2::identity())
    }

    pub fn from_real(m: [[f64; 2]; 2]) -> Self {
        PolOperator(Matrix2::new(
            Complex64::new(m[0][0], 0.0),
            Complex64::new(m[0][1], 0.0),
            Complex64::new(m[1][0], 0.0),
            Complex64::new(m[1][1], 0.0),
        ))
    }

    pub fn matrix(&self) -> &Matrix2<Complex64> {
        &self.0
    }

    pub fn entry(&self, row: usize, col: usize) -> Complex64 {
        self.0[(row, col)]
    }

    pub fn adjoint(&self) -> PolOperator {
        PolOperator(self.0.adjoint())
    }

    pub fn apply(&self, v: &JonesVector) -> JonesVector {
        self.0 * v
    }

    /// Largest entry of `|U†U - I|`.
    pub fn unitarity_deviation(&self) -> f64 {
        let g = self.0.adjoint() * self.0 - Matrix2::identity();
        g.iter().map(|z| z.norm()).fold(0.0, f64::max)
    }

    pub fn is_unitary(&self, tol: f64) -> bool {
        self.unitarity_deviation() <= tol
    }

    /// Largest entrywise modulus of `self - other`.
    pub fn max_abs_diff(&self, other: &PolOperator) -> f64 {
        (self.0 - other.0).iter().map(|z| z.norm()).fold(0.0, f64::max)
    }

    pub fn approx_eq(&self, other: &PolOperator, tol: f64) -> bool {
        self.max_abs_diff(other) <= tol
    }

    /// Entrywise comparison after removing the best global phase `e^{iφ}`.
    ///
    /// The optimal phase aligns `self` with `other` in the Frobenius sense:
    /// `φ = arg(tr(other† · self))`.
    pub fn approx_eq_up_to_phase(&self, other: &PolOperator, tol: f64) -> bool {
        let overlap = (other.0.adjoint() * self.0).trace();
        let phase = if overlap.norm() > 0.0 {
            overlap / overlap.norm()
        } else {
            Complex64::new(1.0, 0.0)
        };
        let aligned = self.0.map(|z| z / phase);
        (aligned - other.0).iter().all(|z| z.norm() <= tol)
    }
}

impl Mul for PolOperator {
    type Output = PolOperator;

    fn mul(self, rhs: PolOperator) -> PolOperator {
        PolOperator(self.0 * rhs.0)
    }
}

/// Rotation matrix `[[cos α, sin α], [-sin α, cos α]]`.
pub fn rotation(alpha: PolAngle) -> PolOperator {
    let (s, c) = alpha.0.sin_cos();
    PolOperator::from_real([[c, s], [-s, c]])
}

/// Linear retarder with slow axis `theta` and retardance `delta`.
pub fn retarder(theta: PolAngle, delta: Retardance) -> PolOperator {
    let core = PolOperator(Matrix2::new(
        Complex64::new(1.0, 0.0),
        Complex64::new(0.0, 0.0),
        Complex64::new(0.0, 0.0),
        Complex64::from_polar(1.0, delta.0),
    ));
    rotation(PolAngle(-theta.0)) * core * rotation(theta)
}

/// `∂/∂δ` of [`retarder`]: `R(-θ)·diag(0, i e^{iδ})·R(θ)`.
pub fn retarder_delta_derivative(theta: PolAngle, delta: Retardance) -> PolOperator {
    let core = PolOperator(Matrix2::new(
        Complex64::new(0.0, 0.0),
        Complex64::new(0.0, 0.0),
        Complex64::new(0.0, 0.0),
        Complex64::i() * Complex64::from_polar(1.0, delta.0),
    ));
    rotation(PolAngle(-theta.0)) * core * rotation(theta)
}

pub fn hwp(theta: PolAngle) -> PolOperator {
    retarder(theta, Retardance(PI))
}

pub fn qwp(theta: PolAngle) -> PolOperator {
    retarder(theta, Retardance(PI / 2.0))
}

/// Ideal linear polarizer transmitting along `angle`: `|u⟩⟨u|`, `u = (cos a, sin a)`.
pub fn linear_polarizer(angle: PolAngle) -> PolOperator {
    let (s, c) = angle.0.sin_cos();
    PolOperator::from_real([[c * c, c * s], [c * s, s * s]])
}

/// Linear polarization state at `angle` from horizontal.
pub fn linear_state(angle: PolAngle) -> JonesVector {
    let (s, c) = angle.0.sin_cos();
    Vector2::new(Complex64::new(c, 0.0), Complex64::new(s, 0.0))
}

/// A birefringent sample described by its physical parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PhysicalSample {
    pub wavelength_nm: f64,
    /// `|n_e - n_o|`
    pub birefringence: f64,
    pub thickness_nm: f64,
    pub axis: PolAngle,
}

/// `δ = 2π·|n_e - n_o|·d/λ`, unwrapped.
pub fn retardance_of(sample: &PhysicalSample) -> Result<Retardance> {
    if !(sample.wavelength_nm > 0.0) || !sample.wavelength_nm.is_finite() {
        return Err(Error::InvalidInput(format!(
            "wavelength must be positive, got {} nm",
            sample.wavelength_nm
        )));
    }
    if sample.birefringence < 0.0 || sample.thickness_nm < 0.0 {
        return Err(Error::InvalidInput(
            "birefringence and thickness must be nonnegative".into(),
        ));
    }
    Ok(Retardance(
        TAU * sample.birefringence * sample.thickness_nm / sample.wavelength_nm,
    ))
}
