//! Two-level rotation toy: a y-rotation followed by a z-rotation from `|0>`.
//!
//! `U_y(a) = exp(-i π a σ_y / 2)` and `U_z(b) = exp(-i π b σ_z)` with
//! `a, b ∈ [0, 1]`, so `(a, b) = (θ/π, φ/2π)` prepares
//! `cos(θ/2)|0> + e^{iφ} sin(θ/2)|1>` up to a global phase.

use serde::{Deserialize, Serialize};

use crate::dynamics::QuantumState;
use crate::error::Result;
use crate::nv::{bloch_state, TargetAngles};
use crate::scalar::{Complex, Real};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ToyAction<R> {
    pub omega_y: R,
    pub omega_z: R,
}

impl<R: Real> ToyAction<R> {
    /// Clamps both rotation fractions into `[0, 1]`.
    pub fn clamped(omega_y: R, omega_z: R) -> Self {
        Self {
            omega_y: omega_y.max(R::zero()).min(R::one()),
            omega_z: omega_z.max(R::zero()).min(R::one()),
        }
    }
}

/// `U_z(Ω_z) U_y(Ω_y) |0>`.
pub fn toy_apply<R: Real>(action: ToyAction<R>) -> QuantumState<R> {
    let a = ToyAction::clamped(action.omega_y, action.omega_z);
    let half_angle = R::PI() * a.omega_y * R::lit(0.5);
    let phase = R::PI() * a.omega_z;
    QuantumState::from_raw(vec![
        Complex::from_polar(half_angle.cos(), -phase),
        Complex::from_polar(half_angle.sin(), phase),
    ])
}

/// Target Bloch state; the shifted variant carries the phase `e^{i(φ-π)}`.
pub fn toy_target<R: Real>(theta: R, phi: R, shifted: bool) -> Result<QuantumState<R>> {
    let angles = TargetAngles::new(theta, phi)?;
    let phase = if shifted { angles.phi - R::PI() } else { angles.phi };
    Ok(bloch_state(2, 0, 1, angles.theta, phase))
}

/// Exact equator protocol `(1/2, Ω_z(φ))`.
pub fn toy_analytic<R: Real>(phi: R, shifted: bool) -> ToyAction<R> {
    toy_analytic_bloch(R::FRAC_PI_2(), phi, shifted)
}

/// Exact protocol for any Bloch target: `Ω_y = θ/π`, `Ω_z` as in [`toy_analytic`].
/// In the shifted variant `Ω_z` jumps from 1 to 0 across `φ' = π`.
pub fn toy_analytic_bloch<R: Real>(theta: R, phi: R, shifted: bool) -> ToyAction<R> {
    let omega_z = if !shifted {
        phi / R::two_pi()
    } else if phi <= R::PI() {
        (phi + R::PI()) / R::two_pi()
    } else {
        (phi - R::PI()) / R::two_pi()
    };
    ToyAction {
        omega_y: theta / R::PI(),
        omega_z,
    }
}
