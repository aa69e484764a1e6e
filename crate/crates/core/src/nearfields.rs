//! First-harmonic dual-drive channel modes.
//!
//! The two illuminants interfere in the channel; their relative phase θ_r and
//! mode ratio r select cosh or sinh transverse profiles for E_y, B_x and B_z.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

/// Relative amplitude below which a center-field component counts as zero.
pub const CENTER_MODE_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DriveConfig {
    pub mode_ratio: Complex64,
    /// Relative phase between the two illuminants, rad (mod 2π).
    pub relative_phase: f64,
    /// First-harmonic E_y amplitude in the channel, V/m.
    pub channel_amplitude: f64,
    /// Transverse decay constant Γ, rad/m.
    pub decay: f64,
}

impl DriveConfig {
    /// θ_r = π, r = 0: cosh B_z on axis, E_y and B_x vanish there.
    pub fn modulation(channel_amplitude: f64, decay: f64) -> Self {
        Self {
            mode_ratio: Complex64::new(0.0, 0.0),
            relative_phase: std::f64::consts::PI,
            channel_amplitude,
            decay,
        }
    }

    /// θ_r = 0, r = 0: cosh B_x on axis, B_z vanishes there.
    pub fn polarizing(channel_amplitude: f64, decay: f64) -> Self {
        Self {
            mode_ratio: Complex64::new(0.0, 0.0),
            relative_phase: 0.0,
            channel_amplitude,
            decay,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModeCoefficients {
    pub plus: Complex64,
    pub minus: Complex64,
}

/// Complex first-harmonic amplitudes at one transverse offset (the e^{ik_z z}
/// factor is left out).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FieldSample {
    pub e_y: Complex64,
    pub b_x: Complex64,
    pub b_z: Complex64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ModeKind {
    /// Only B_z on axis: the spin-dependent modulation stage.
    CoshBz,
    /// Only E_y and B_x on axis: the spin-rotating stage.
    SinhBz,
    Mixed,
}

/// b± = (1 ± r)(e^{iθ_r} ± 1)/2
pub fn mode_coefficients(cfg: &DriveConfig) -> ModeCoefficients {
    let one = Complex64::new(1.0, 0.0);
    let phase = Complex64::from_polar(1.0, cfg.relative_phase);
    ModeCoefficients {
        plus: (one + cfg.mode_ratio) * (phase + one) * 0.5,
        minus: (one - cfg.mode_ratio) * (phase - one) * 0.5,
    }
}

pub fn field_at(cfg: &DriveConfig, x: f64, omega: f64, k_z: f64) -> FieldSample {
    let b = mode_coefficients(cfg);
    let (sh, ch) = ((cfg.decay * x).sinh(), (cfg.decay * x).cosh());
    let even = b.plus * ch + b.minus * sh;
    let odd = b.plus * sh + b.minus * ch;
    let magnetic = Complex64::new(0.0, cfg.channel_amplitude * k_z / omega);
    FieldSample {
        e_y: even * cfg.channel_amplitude,
        b_x: magnetic * even,
        b_z: magnetic * odd,
    }
}

pub fn classify_center_mode(cfg: &DriveConfig) -> ModeKind {
    // Unit amplitude and k_z/ω = 1 keep E and B on the same footing.
    let unit = DriveConfig {
        channel_amplitude: 1.0,
        ..*cfg
    };
    let f = field_at(&unit, 0.0, 1.0, 1.0);
    let (e, bx, bz) = (f.e_y.norm(), f.b_x.norm(), f.b_z.norm());
    let scale = e.max(bx).max(bz);
    if scale == 0.0 {
        return ModeKind::Mixed;
    }
    let tol = CENTER_MODE_TOLERANCE * scale;
    match (e < tol && bx < tol, bz < tol) {
        (true, false) => ModeKind::CoshBz,
        (false, true) => ModeKind::SinhBz,
        _ => ModeKind::Mixed,
    }
}
