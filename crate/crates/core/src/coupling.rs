//! Dimensionless coupling coefficients of the phase-matched first harmonic.
//!
//! g_B = (−iμ_B k_z / ħω) ∫ B(z) e^{−ik_z z} dz   (magnetic, B_z or B_x)
//! g_L = −(q / ħω) ∫ E_y(x, z) e^{−ik_z z} dz     (Lorentz, q = −e)
//!
//! Integrals run over the sampled interval [−L/2, L/2] with the trapezoidal
//! rule; halving the resolution gives the error estimate.

use std::f64::consts::PI;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::physconst::{DerivedScales, BOHR_MAGNETON, ELEMENTARY_CHARGE, HBAR};

/// Coarsest accepted sampling of a longitudinal profile.
pub const MIN_SAMPLES_PER_PERIOD: usize = 32;

/// Incident fields above this are rejected outright by the inverse design.
pub const HARD_FIELD_CAP: f64 = 1.0e10;

/// Maps an angle onto (−π, π].
pub fn wrap_phase(phi: f64) -> f64 {
    let r = phi.rem_euclid(2.0 * PI);
    if r > PI {
        r - 2.0 * PI
    } else {
        r
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CouplingKind {
    Magnetic,
    Lorentz,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CouplingCoefficient {
    pub value: Complex64,
    pub kind: CouplingKind,
}

impl CouplingCoefficient {
    pub fn from_polar(magnitude: f64, phase: f64, kind: CouplingKind) -> Self {
        Self {
            value: Complex64::from_polar(magnitude, phase),
            kind,
        }
    }

    pub fn magnitude(&self) -> f64 {
        self.value.norm()
    }

    /// arg g in (−π, π]; zero for a vanishing coefficient.
    pub fn phase(&self) -> f64 {
        if self.value.norm() == 0.0 {
            0.0
        } else {
            wrap_phase(self.value.arg())
        }
    }
}

/// Uniformly sampled complex field along z, centered on the stage.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LongitudinalFieldProfile {
    pub start: f64,
    pub spacing: f64,
    pub samples: Vec<Complex64>,
}

impl LongitudinalFieldProfile {
    /// Samples `field` on [−L/2, L/2] with at least `samples_per_period` points
    /// per grating period and an even number of intervals.
    pub fn sample<F>(length: f64, k_z: f64, samples_per_period: usize, field: F) -> Result<Self>
    where
        F: Fn(f64) -> Complex64,
    {
        if !(length > 0.0 && length.is_finite()) {
            return Err(Error::param("length", format!("must be positive, got {length}")));
        }
        let period = 2.0 * PI / k_z;
        let mut intervals = ((length / period) * samples_per_period as f64).ceil() as usize;
        intervals = intervals.max(2);
        intervals += intervals % 2;
        let spacing = length / intervals as f64;
        let start = -0.5 * length;
        let samples = (0..=intervals)
            .map(|i| field(start + i as f64 * spacing))
            .collect();
        Ok(Self {
            start,
            spacing,
            samples,
        })
    }

    /// B₁ e^{ik_z z} over the stage.
    pub fn phase_matched(amplitude: Complex64, k_z: f64, length: f64) -> Result<Self> {
        Self::sample(length, k_z, 64, |z| {
            amplitude * Complex64::from_polar(1.0, k_z * z)
        })
    }

    pub fn length(&self) -> f64 {
        self.spacing * self.samples.len().saturating_sub(1) as f64
    }

    pub fn positions(&self) -> impl Iterator<Item = f64> + '_ {
        (0..self.samples.len()).map(move |i| self.start + i as f64 * self.spacing)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Quadrature {
    pub value: Complex64,
    /// Richardson estimate from the half-resolution rule, when the interval
    /// count is even.
    pub error_estimate: Option<f64>,
}

fn trapezoid(values: &[Complex64], h: f64) -> Complex64 {
    let n = values.len();
    let inner: Complex64 = values[1..n - 1].iter().sum();
    (inner + (values[0] + values[n - 1]) * 0.5) * h
}

/// ∫ f(z) e^{−ik_z z} dz over the profile.
pub fn overlap_integral(profile: &LongitudinalFieldProfile, k_z: f64) -> Result<Quadrature> {
    let n = profile.samples.len();
    if n < 2 {
        return Err(Error::InvalidInput(format!(
            "field profile needs at least two samples, got {n}"
        )));
    }
    let period = 2.0 * PI / k_z;
    if profile.spacing > period / MIN_SAMPLES_PER_PERIOD as f64 * (1.0 + 1e-9) {
        return Err(Error::InvalidInput(format!(
            "profile spacing {:.3e} m is coarser than λ_g/{MIN_SAMPLES_PER_PERIOD}",
            profile.spacing
        )));
    }
    let integrand: Vec<Complex64> = profile
        .positions()
        .zip(&profile.samples)
        .map(|(z, f)| f * Complex64::from_polar(1.0, -k_z * z))
        .collect();
    let value = trapezoid(&integrand, profile.spacing);
    let error_estimate = if (n - 1) % 2 == 0 && n >= 5 {
        let coarse: Vec<Complex64> = integrand.iter().step_by(2).copied().collect();
        let coarse = trapezoid(&coarse, 2.0 * profile.spacing);
        Some((value - coarse).norm() / 3.0)
    } else {
        None
    };
    Ok(Quadrature {
        value,
        error_estimate,
    })
}

pub fn magnetic_coupling(
    profile: &LongitudinalFieldProfile,
    k_z: f64,
    omega: f64,
) -> Result<CouplingCoefficient> {
    let q = overlap_integral(profile, k_z)?;
    let prefactor = Complex64::new(0.0, -BOHR_MAGNETON * k_z / (HBAR * omega));
    Ok(CouplingCoefficient {
        value: prefactor * q.value,
        kind: CouplingKind::Magnetic,
    })
}

/// Lorentz coupling of an E_y profile taken at a fixed transverse offset.
pub fn lorentz_coupling(
    profile: &LongitudinalFieldProfile,
    k_z: f64,
    omega: f64,
) -> Result<CouplingCoefficient> {
    let q = overlap_integral(profile, k_z)?;
    let charge = -ELEMENTARY_CHARGE;
    Ok(CouplingCoefficient {
        value: q.value * (-charge / (HBAR * omega)),
        kind: CouplingKind::Lorentz,
    })
}

/// Relation between incident drive field and first-harmonic channel amplitude.
///
/// channel amplitude = `dual_drive_factor` · η · E_inc. With both sides
/// adding in phase on axis the factor is 2; this reproduces |g| ≈ 0.48 for a
/// 12.7 µm stage driven at 550 MV/m per side with η = 0.35.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FieldCalibration {
    pub dual_drive_factor: f64,
}

impl Default for FieldCalibration {
    fn default() -> Self {
        Self {
            dual_drive_factor: 2.0,
        }
    }
}

impl FieldCalibration {
    pub fn channel_amplitude(&self, incident_field: f64, conversion_efficiency: f64) -> f64 {
        self.dual_drive_factor * conversion_efficiency * incident_field
    }
}

/// On-axis phase-matched magnetic amplitude for a channel E_y amplitude.
pub fn phase_matched_magnetic_amplitude(channel_amplitude: f64, k_z: f64, omega: f64) -> f64 {
    channel_amplitude * k_z / omega
}

/// Magnetic coupling of a stage of length `length` driven at `incident_field`,
/// evaluated by quadrature of the on-axis B_z of the modulation mode.
pub fn stage_coupling_from_field(
    incident_field: f64,
    conversion_efficiency: f64,
    length: f64,
    scales: &DerivedScales,
    calibration: &FieldCalibration,
) -> Result<CouplingCoefficient> {
    let e0 = calibration.channel_amplitude(incident_field, conversion_efficiency);
    let b1 = phase_matched_magnetic_amplitude(e0, scales.wavenumber, scales.omega);
    // b⁻ = −1 and the i k_z/ω prefactor of the cosh B_z mode
    let amplitude = Complex64::new(0.0, -b1);
    let profile = LongitudinalFieldProfile::phase_matched(amplitude, scales.wavenumber, length)?;
    magnetic_coupling(&profile, scales.wavenumber, scales.omega)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FieldRequirement {
    pub incident_field: f64,
    pub exceeds_lidt: bool,
}

/// Incident per-side field giving |g| = `target` on a phase-matched stage.
pub fn required_field_for_g(
    target: f64,
    length: f64,
    conversion_efficiency: f64,
    scales: &DerivedScales,
    calibration: &FieldCalibration,
    lidt_field: Option<f64>,
) -> Result<FieldRequirement> {
    if !(target >= 0.0 && target.is_finite()) {
        return Err(Error::param("target", format!("must be non-negative, got {target}")));
    }
    if !(length > 0.0 && length.is_finite()) {
        return Err(Error::param("length", format!("must be positive, got {length}")));
    }
    let (k, omega) = (scales.wavenumber, scales.omega);
    // |g| = μ_B k B₁ L / ħω with B₁ = F η E k / ω
    let per_field = BOHR_MAGNETON * k * k * length
        * calibration.dual_drive_factor
        * conversion_efficiency
        / (HBAR * omega * omega);
    let required = if target == 0.0 {
        0.0
    } else if per_field > 0.0 {
        target / per_field
    } else {
        f64::INFINITY
    };
    if required > HARD_FIELD_CAP {
        return Err(Error::Infeasible {
            required,
            cap: HARD_FIELD_CAP,
            ratio: required / HARD_FIELD_CAP,
        });
    }
    Ok(FieldRequirement {
        incident_field: required,
        exceeds_lidt: lidt_field.is_some_and(|l| required > l),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::physconst::{derive_scales, BeamParams, LaserParams};

    fn scales() -> DerivedScales {
        derive_scales(
            &BeamParams::new(0.1, 0.15).unwrap(),
            &LaserParams::new(2.4e-6, 550e6, 0.35).unwrap(),
        )
        .unwrap()
    }

    /// Independent fine-grid trapezoid, no shared helpers.
    fn reference_integral(f: impl Fn(f64) -> Complex64, k: f64, length: f64, n: usize) -> Complex64 {
        let h = length / n as f64;
        let mut acc = Complex64::new(0.0, 0.0);
        for i in 0..=n {
            let z = -0.5 * length + i as f64 * h;
            let w = if i == 0 || i == n { 0.5 } else { 1.0 };
            acc += f(z) * Complex64::from_polar(1.0, -k * z) * w;
        }
        acc * h
    }

    #[test]
    fn wrap_phase_branch() {
        assert_eq!(wrap_phase(PI), PI);
        assert!((wrap_phase(-PI) - PI).abs() < 1e-15);
        assert!((wrap_phase(3.0 * PI / 2.0) + PI / 2.0).abs() < 1e-15);
        assert_eq!(wrap_phase(0.0), 0.0);
    }

    #[test]
    fn zero_field_zero_coupling() {
        let s = scales();
        let p = LongitudinalFieldProfile::sample(12.7e-6, s.wavenumber, 32, |_| 0.0.into()).unwrap();
        assert_eq!(magnetic_coupling(&p, s.wavenumber, s.omega).unwrap().magnitude(), 0.0);
        assert_eq!(lorentz_coupling(&p, s.wavenumber, s.omega).unwrap().magnitude(), 0.0);
    }

    #[test]
    fn empty_profile_rejected() {
        let p = LongitudinalFieldProfile {
            start: 0.0,
            spacing: 1e-9,
            samples: vec![],
        };
        assert!(matches!(magnetic_coupling(&p, 2.6e7, 7.8e14), Err(Error::InvalidInput(_))));
    }

    #[test]
    fn coarse_profile_rejected() {
        let s = scales();
        let p = LongitudinalFieldProfile::sample(12.7e-6, s.wavenumber, 8, |_| 1.0.into()).unwrap();
        assert!(magnetic_coupling(&p, s.wavenumber, s.omega).is_err());
    }

    #[test]
    fn phase_matched_magnitude_and_phase() {
        let s = scales();
        let (k, w, length) = (s.wavenumber, s.omega, 12.7e-6);
        let b1 = Complex64::from_polar(3.0, 0.4);
        let p = LongitudinalFieldProfile::phase_matched(b1, k, length).unwrap();
        let g = magnetic_coupling(&p, k, w).unwrap();
        let expect = BOHR_MAGNETON * k * 3.0 * length / (HBAR * w);
        assert!((g.magnitude() / expect - 1.0).abs() < 1e-8);
        assert!((g.phase() - wrap_phase(-PI / 2.0 + 0.4)).abs() < 1e-9);
        // oracle at 10x resolution
        let fine = reference_integral(|z| b1 * Complex64::from_polar(1.0, k * z), k, length, 10 * p.samples.len());
        let g_ref = Complex64::new(0.0, -BOHR_MAGNETON * k / (HBAR * w)) * fine;
        assert!((g.value - g_ref).norm() / g_ref.norm() < 1e-8);
    }

    #[test]
    fn device_numbers_give_half() {
        let s = scales();
        let g = stage_coupling_from_field(550e6, 0.35, 12.7e-6, &s, &FieldCalibration::default()).unwrap();
        assert!((g.magnitude() - 0.5).abs() < 0.25 * 0.5, "{}", g.magnitude());
        // analytic cross-check: μ_B B₁ L / (ħ v)
        let b1 = 2.0 * 0.35 * 550e6 / s.velocity;
        let analytic = BOHR_MAGNETON * b1 * 12.7e-6 / (HBAR * s.velocity);
        assert!((g.magnitude() / analytic - 1.0).abs() < 1e-8);
    }

    #[test]
    fn lorentz_sinh_mode() {
        let s = scales();
        let (k, w, length) = (s.wavenumber, s.omega, 12.7e-6);
        let gamma = k;
        let x = 1.0 / gamma;
        let e0 = 1.0e8;
        let p = LongitudinalFieldProfile::phase_matched((e0 * (gamma * x).sinh()).into(), k, length).unwrap();
        let g = lorentz_coupling(&p, k, w).unwrap();
        let expect = ELEMENTARY_CHARGE / (HBAR * w) * e0 * 1f64.sinh() * length;
        assert!((g.magnitude() / expect - 1.0).abs() < 1e-8);
        assert_eq!(g.kind, CouplingKind::Lorentz);
    }

    #[test]
    fn lorentz_vanishes_on_axis_for_modulation_mode() {
        use crate::nearfields::{field_at, DriveConfig};
        let s = scales();
        let drive = DriveConfig::modulation(1.9e8, s.wavenumber);
        let ey = field_at(&drive, 0.0, s.omega, s.wavenumber).e_y;
        let p = LongitudinalFieldProfile::phase_matched(ey, s.wavenumber, 12.7e-6).unwrap();
        let g = lorentz_coupling(&p, s.wavenumber, s.omega).unwrap();
        let scale = ELEMENTARY_CHARGE / (HBAR * s.omega) * 1.9e8 * 12.7e-6;
        assert!(g.magnitude() < 1e-12 * scale);
    }

    #[test]
    fn second_harmonic_suppressed() {
        let s = scales();
        let k = s.wavenumber;
        let length = 50.0 * s.grating_period;
        let p = LongitudinalFieldProfile::sample(length, k, 64, |z| {
            Complex64::from_polar(1.0, k * z) + Complex64::from_polar(1.0, 2.0 * k * z)
        })
        .unwrap();
        let only_first = LongitudinalFieldProfile::phase_matched(1.0.into(), k, length).unwrap();
        let a = magnetic_coupling(&p, k, s.omega).unwrap();
        let b = magnetic_coupling(&only_first, k, s.omega).unwrap();
        assert!((a.value - b.value).norm() / b.magnitude() < 1e-8);
    }

    #[test]
    fn quadrature_error_estimate_small_for_band_limited() {
        let s = scales();
        let p = LongitudinalFieldProfile::phase_matched(1.0.into(), s.wavenumber, 12.7e-6).unwrap();
        let q = overlap_integral(&p, s.wavenumber).unwrap();
        assert!(q.error_estimate.unwrap() < 1e-8 * q.value.norm());
    }

    #[test]
    fn required_field_near_device_value() {
        let s = scales();
        let cal = FieldCalibration::default();
        let req = required_field_for_g(0.5, 12.7e-6, 0.35, &s, &cal, Some(600e6)).unwrap();
        assert!((req.incident_field / 550e6 - 1.0).abs() < 0.25, "{}", req.incident_field);
        assert!(!req.exceeds_lidt);
        let g = stage_coupling_from_field(req.incident_field, 0.35, 12.7e-6, &s, &cal).unwrap();
        assert!((g.magnitude() / 0.5 - 1.0).abs() < 1e-6);
        let zero = required_field_for_g(0.0, 12.7e-6, 0.35, &s, &cal, None).unwrap();
        assert_eq!(zero.incident_field, 0.0);
        let flagged = required_field_for_g(0.5, 12.7e-6, 0.35, &s, &cal, Some(100e6)).unwrap();
        assert!(flagged.exceeds_lidt);
    }

    #[test]
    fn required_field_infeasible() {
        let s = scales();
        let err = required_field_for_g(1e4, 12.7e-6, 0.35, &s, &FieldCalibration::default(), None)
            .unwrap_err();
        match err {
            Error::Infeasible { ratio, .. } => assert!(ratio > 1.0),
            e => panic!("unexpected {e:?}"),
        }
        assert!(required_field_for_g(0.5, 0.0, 0.35, &s, &FieldCalibration::default(), None).is_err());
    }

    proptest::proptest! {
        #[test]
        fn doubling_length_halves_field(g in 0.01f64..2.0, l in 1e-5f64..5e-5) {
            let s = scales();
            let cal = FieldCalibration::default();
            let a = required_field_for_g(g, l, 0.35, &s, &cal, None).unwrap();
            let b = required_field_for_g(g, 2.0 * l, 0.35, &s, &cal, None).unwrap();
            proptest::prop_assert!((a.incident_field / b.incident_field - 2.0).abs() < 1e-12);
        }

        #[test]
        fn coupling_is_linear(alpha in 0.01f64..100.0, phase in -3.0f64..3.0) {
            let s = scales();
            let k = s.wavenumber;
            let f = |z: f64| Complex64::from_polar(1.0, k * z + phase) * (1.0 + 0.3 * (0.5 * k * z).cos());
            let p1 = LongitudinalFieldProfile::sample(10e-6, k, 48, f).unwrap();
            let p2 = LongitudinalFieldProfile::sample(10e-6, k, 48, |z| f(z) * alpha).unwrap();
            let g1 = magnetic_coupling(&p1, k, s.omega).unwrap();
            let g2 = magnetic_coupling(&p2, k, s.omega).unwrap();
            proptest::prop_assert!((g2.value - g1.value * alpha).norm() <= 1e-12 * g2.magnitude());
        }

        #[test]
        fn translation_multiplies_phase(delta in -1e-7f64..1e-7) {
            let s = scales();
            let k = s.wavenumber;
            let length = 40.0 * s.grating_period;
            let f = |z: f64| Complex64::from_polar(2.0, k * z);
            let p = LongitudinalFieldProfile::sample(length, k, 64, f).unwrap();
            let shifted = LongitudinalFieldProfile::sample(length, k, 64, |z| f(z - delta)).unwrap();
            let g = magnetic_coupling(&p, k, s.omega).unwrap();
            let gs = magnetic_coupling(&shifted, k, s.omega).unwrap();
            let ratio = gs.value / g.value;
            proptest::prop_assert!((ratio - Complex64::from_polar(1.0, -k * delta)).norm() < 1e-9);
        }
    }
}
