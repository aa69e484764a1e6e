//! Physical constants (SI, CODATA 2018) and the phase-matched scales shared by
//! every stage of the polarizer.
//!
//! Energies cross the API boundary in eV only where noted (`sigma_e_ev`);
//! everything else is SI.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const ELECTRON_MASS: f64 = 9.109_383_701_5e-31; // kg
pub const ELEMENTARY_CHARGE: f64 = 1.602_176_634e-19; // C, exact
pub const SPEED_OF_LIGHT: f64 = 299_792_458.0; // m/s, exact
pub const PLANCK: f64 = 6.626_070_15e-34; // J s, exact
pub const HBAR: f64 = PLANCK / (2.0 * PI);
pub const BOHR_MAGNETON: f64 = 9.274_010_078_3e-24; // J/T

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PhysicalConstants {
    pub electron_mass: f64,
    pub elementary_charge: f64,
    pub speed_of_light: f64,
    pub planck: f64,
    pub hbar: f64,
    pub bohr_magneton: f64,
}

impl PhysicalConstants {
    pub const fn codata2018() -> Self {
        Self {
            electron_mass: ELECTRON_MASS,
            elementary_charge: ELEMENTARY_CHARGE,
            speed_of_light: SPEED_OF_LIGHT,
            planck: PLANCK,
            hbar: HBAR,
            bohr_magneton: BOHR_MAGNETON,
        }
    }
}

impl Default for PhysicalConstants {
    fn default() -> Self {
        Self::codata2018()
    }
}

/// Electron beam: velocity fraction and (coherent) energy spread.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BeamParams {
    pub beta: f64,
    /// Energy spread in eV.
    pub sigma_e_ev: f64,
}

impl BeamParams {
    pub fn new(beta: f64, sigma_e_ev: f64) -> Result<Self> {
        let beam = Self { beta, sigma_e_ev };
        beam.validate()?;
        Ok(beam)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.beta > 0.0 && self.beta < 1.0) {
            return Err(Error::param("beta", format!("must lie in (0, 1), got {}", self.beta)));
        }
        if !(self.sigma_e_ev > 0.0 && self.sigma_e_ev.is_finite()) {
            return Err(Error::param(
                "sigma_e_ev",
                format!("must be positive, got {}", self.sigma_e_ev),
            ));
        }
        Ok(())
    }

    pub fn gamma(&self) -> f64 {
        1.0 / (1.0 - self.beta * self.beta).sqrt()
    }

    pub fn velocity(&self) -> f64 {
        self.beta * SPEED_OF_LIGHT
    }

    pub fn sigma_e_joule(&self) -> f64 {
        self.sigma_e_ev * ELEMENTARY_CHARGE
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LaserParams {
    pub wavelength: f64,
    /// Incident field per drive side, V/m.
    pub incident_field: f64,
    /// Incident-to-channel-center field conversion efficiency.
    pub conversion_efficiency: f64,
}

impl LaserParams {
    pub fn new(wavelength: f64, incident_field: f64, conversion_efficiency: f64) -> Result<Self> {
        let laser = Self {
            wavelength,
            incident_field,
            conversion_efficiency,
        };
        laser.validate()?;
        Ok(laser)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.wavelength > 0.0 && self.wavelength.is_finite()) {
            return Err(Error::param(
                "wavelength",
                format!("must be positive, got {}", self.wavelength),
            ));
        }
        if !(self.incident_field >= 0.0 && self.incident_field.is_finite()) {
            return Err(Error::param(
                "incident_field",
                format!("must be non-negative, got {}", self.incident_field),
            ));
        }
        if !(0.0..=1.0).contains(&self.conversion_efficiency) {
            return Err(Error::param(
                "conversion_efficiency",
                format!("must lie in [0, 1], got {}", self.conversion_efficiency),
            ));
        }
        Ok(())
    }

    pub fn omega(&self) -> f64 {
        2.0 * PI * SPEED_OF_LIGHT / self.wavelength
    }

    /// Per-side field amplitude reaching the channel center.
    pub fn channel_field(&self) -> f64 {
        self.conversion_efficiency * self.incident_field
    }
}

/// Phase-matched kinematic scales.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DerivedScales {
    pub grating_period: f64,
    pub wavenumber: f64,
    pub omega: f64,
    pub gamma: f64,
    pub velocity: f64,
    /// L_QR = β³γ³ m_e c λ² / h
    pub revival_length: f64,
}

impl DerivedScales {
    pub fn drift_fraction(&self, drift_length: f64) -> f64 {
        drift_length / self.revival_length
    }

    pub fn drift_length(&self, fraction: f64) -> f64 {
        fraction * self.revival_length
    }
}

pub fn derive_scales(beam: &BeamParams, laser: &LaserParams) -> Result<DerivedScales> {
    beam.validate()?;
    if !(laser.wavelength > 0.0 && laser.wavelength.is_finite()) {
        return Err(Error::param(
            "wavelength",
            format!("must be positive, got {}", laser.wavelength),
        ));
    }
    let beta = beam.beta;
    let gamma = beam.gamma();
    let lambda = laser.wavelength;
    let grating_period = beta * lambda;
    let bg = beta * gamma;
    Ok(DerivedScales {
        grating_period,
        wavenumber: 2.0 * PI / grating_period,
        omega: laser.omega(),
        gamma,
        velocity: beam.velocity(),
        revival_length: bg * bg * bg * ELECTRON_MASS * SPEED_OF_LIGHT * lambda * lambda / PLANCK,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DeviceParams {
    pub grating_period: f64,
    pub wavenumber: f64,
    pub stage1_length: f64,
    pub stage2_length: f64,
    pub drift_length: f64,
    /// Transverse decay constant Γ of the first harmonic, rad/m.
    pub decay_constant: f64,
    pub lidt_field: Option<f64>,
}

impl DeviceParams {
    /// Device with λ_g = βλ and Γ = k_z.
    pub fn phase_matched(
        scales: &DerivedScales,
        stage1_length: f64,
        stage2_length: f64,
        drift_length: f64,
    ) -> Result<Self> {
        for (name, v) in [
            ("stage1_length", stage1_length),
            ("stage2_length", stage2_length),
            ("drift_length", drift_length),
        ] {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(Error::param(name, format!("must be non-negative, got {v}")));
            }
        }
        Ok(Self {
            grating_period: scales.grating_period,
            wavenumber: scales.wavenumber,
            stage1_length,
            stage2_length,
            drift_length,
            decay_constant: scales.wavenumber,
            lidt_field: None,
        })
    }
}
