//! Unwanted density bunching from the Lorentz (p·A) coupling of the
//! modulation stage.
//!
//! Off axis the sinh-mode E_y gives a coupling g_L(x). An electron with
//! transverse momentum p_y picks up the phase X sin(k_z z′ + φ_L) with
//! X = 2|g_L(x)| p_y / (m_e v_e). Amplitudes add coherently over the p_y
//! distribution of the packet. After the drift, densities add incoherently
//! over the x profile. The quantity of interest is the longitudinal density
//! contrast left behind.

use std::collections::BTreeMap;
use std::f64::consts::PI;

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::coupling::{lorentz_coupling, LongitudinalFieldProfile};
use crate::dynamics::{apply_drift, Grid, SpinorWavepacket, MIN_SAMPLES_PER_PERIOD};
use crate::error::{Error, Result};
use crate::nearfields::{field_at, DriveConfig};
use crate::physconst::{DerivedScales, ELECTRON_MASS, HBAR};

/// Gaussian weight e^{−t²} is below 1e-16 beyond |t| = 6.1.
const P_RANGE: f64 = 6.1;
/// Refinement stops at this many p_y points per side.
const MAX_P_POINTS: usize = 1 << 22;
/// |ψ_x|² is below 1e-15 of its peak beyond t = x/(√2 σ_x) = 5.9.
const X_RANGE: f64 = 5.9;
const X_INITIAL_STEP: f64 = 0.5;
const MAX_X_LEVEL: u32 = 9;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TransverseBeam {
    pub sigma_x: f64,
    pub sigma_y: f64,
}

impl TransverseBeam {
    pub fn new(sigma_x: f64, sigma_y: f64) -> Result<Self> {
        let b = Self { sigma_x, sigma_y };
        b.validate()?;
        Ok(b)
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [("sigma_x", self.sigma_x), ("sigma_y", self.sigma_y)] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::param(name, format!("must be positive, got {v}")));
            }
        }
        Ok(())
    }

    /// Minimum-uncertainty Δp_y = ħ / (2σ_y).
    pub fn delta_p_y(&self) -> f64 {
        HBAR / (2.0 * self.sigma_y)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PinemConfig {
    pub beam: TransverseBeam,
    /// Modulation-stage drive (sinh E_y across the channel).
    pub drive: DriveConfig,
    pub stage_length: f64,
    pub drift_fraction: f64,
    pub samples_per_period: usize,
    /// Convergence target on the density (mean density is 1).
    pub tolerance: f64,
}

impl PinemConfig {
    /// Modulation stage of `stage_length` with channel amplitude `e0` and
    /// Γ = k_z, drifting to L_QR/2.
    pub fn device(beam: TransverseBeam, e0: f64, stage_length: f64, scales: &DerivedScales) -> Self {
        Self {
            beam,
            drive: DriveConfig::modulation(e0, scales.wavenumber),
            stage_length,
            drift_fraction: 0.5,
            samples_per_period: MIN_SAMPLES_PER_PERIOD,
            tolerance: 1e-6,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.beam.validate()?;
        if !(self.stage_length > 0.0 && self.stage_length.is_finite()) {
            return Err(Error::param("stage_length", "must be positive"));
        }
        if !(self.drift_fraction >= 0.0 && self.drift_fraction.is_finite()) {
            return Err(Error::param("drift_fraction", "must be non-negative"));
        }
        if self.samples_per_period < MIN_SAMPLES_PER_PERIOD {
            return Err(Error::param(
                "samples_per_period",
                format!("needs at least {MIN_SAMPLES_PER_PERIOD}"),
            ));
        }
        if !(self.tolerance > 0.0) {
            return Err(Error::param("tolerance", "must be positive"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PinemResult {
    /// One grating period of z′ starting at 0.
    pub grid: Vec<f64>,
    /// Density relative to the unmodulated beam.
    pub density: Vec<f64>,
    pub contrast: f64,
    /// Transverse nodes of the converged x average.
    pub x_nodes: usize,
}

impl PinemResult {
    pub fn fidelity(&self) -> f64 {
        1.0 - self.contrast
    }
}

/// (max − min) / (max + min); 0 for an empty or all-zero density.
pub fn contrast(density: &[f64]) -> f64 {
    let (lo, hi) = density
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)));
    if !(hi + lo > 0.0) {
        return 0.0;
    }
    (hi - lo) / (hi + lo)
}

/// Lorentz coupling at transverse offset x, by quadrature over the stage.
pub fn lorentz_coupling_at(cfg: &PinemConfig, x: f64, scales: &DerivedScales) -> Result<Complex64> {
    let e_y = field_at(&cfg.drive, x, scales.omega, scales.wavenumber).e_y;
    if !(e_y.re.is_finite() && e_y.im.is_finite()) {
        return Err(Error::InvalidInput(format!(
            "field diverges at x = {x:.3e} m; the transverse integration range is too wide"
        )));
    }
    let profile = LongitudinalFieldProfile::phase_matched(e_y, scales.wavenumber, cfg.stage_length)?;
    Ok(lorentz_coupling(&profile, scales.wavenumber, scales.omega)?.value)
}

/// κ = 2|g_L| Δp_y / (m_e v_e): with p_y = 2Δp_y t the phase is 2κ t sin θ.
pub fn kappa(g_l: f64, beam: &TransverseBeam, scales: &DerivedScales) -> f64 {
    2.0 * g_l * beam.delta_p_y() / (ELECTRON_MASS * scales.velocity)
}

/// Trapezoid rule for ∫ e^{−t²} f(t) dt / √π on [−T, T] with step `h`.
struct MomentumRule {
    step: f64,
    /// Weights for t = 0, h, 2h, …
    weights: Vec<f64>,
}

impl MomentumRule {
    fn new(step: f64) -> Self {
        let n = (P_RANGE / step).ceil() as usize;
        let weights = (0..=n)
            .map(|j| {
                let t = j as f64 * step;
                (-t * t).exp() * step / PI.sqrt()
            })
            .collect();
        Self { step, weights }
    }

    /// Σ_t w(t) e^{i a t}, summed over ±t.
    fn full_range(&self, a: f64) -> Complex64 {
        let rot = Complex64::from_polar(1.0, a * self.step);
        let mut plus = Complex64::new(1.0, 0.0);
        let mut acc = Complex64::new(self.weights[0], 0.0);
        for (j, w) in self.weights.iter().enumerate().skip(1) {
            plus = if j % 512 == 0 {
                Complex64::from_polar(1.0, a * self.step * j as f64)
            } else {
                plus * rot
            };
            acc += *w * plus + *w * plus.conj();
        }
        acc
    }

    /// w(0) + 2 Σ_{t>0} w(t) cos(a t): the reflection-symmetric form.
    fn half_range(&self, a: f64) -> f64 {
        self.weights[0]
            + 2.0
                * self
                    .weights
                    .iter()
                    .enumerate()
                    .skip(1)
                    .map(|(j, w)| w * (a * self.step * j as f64).cos())
                    .sum::<f64>()
    }
}

fn period_grid(scales: &DerivedScales, samples: usize) -> Grid {
    Grid {
        origin: 0.0,
        spacing: scales.grating_period / samples as f64,
        len: samples,
    }
}

/// Coherent p_y average of e^{i 2κ t sin θ} at each grid point, refined until
/// successive halvings of the step agree to `tol`.
fn momentum_averaged_amplitude(
    kappa: f64,
    phase: f64,
    grid: &Grid,
    k_z: f64,
    tol: f64,
    half_range: bool,
) -> Result<Vec<Complex64>> {
    let a_max = 2.0 * kappa.abs();
    let mut step = (2.0 * PI / (a_max + 12.0)).min(0.5) * 2.0;
    let eval = |rule: &MomentumRule| -> Vec<Complex64> {
        grid.positions()
            .map(|z| {
                let a = 2.0 * kappa * (k_z * z + phase).sin();
                if half_range {
                    Complex64::new(rule.half_range(a), 0.0)
                } else {
                    rule.full_range(a)
                }
            })
            .collect()
    };
    let diverged = || {
        Error::InvalidInput(format!(
            "p_y integration does not converge for κ = {kappa:.3e}; the transverse beam is too wide"
        ))
    };
    if !(P_RANGE / step <= MAX_P_POINTS as f64) {
        return Err(diverged());
    }
    let mut prev = eval(&MomentumRule::new(step));
    loop {
        step *= 0.5;
        if P_RANGE / step > MAX_P_POINTS as f64 {
            return Err(diverged());
        }
        let next = eval(&MomentumRule::new(step));
        let change = prev
            .iter()
            .zip(&next)
            .map(|(a, b)| (a - b).norm())
            .fold(0.0, f64::max);
        prev = next;
        if change < tol {
            return Ok(prev);
        }
    }
}

/// Density of a single transverse slice after the drift.
fn slice_density(
    cfg: &PinemConfig,
    x: f64,
    grid: &Grid,
    scales: &DerivedScales,
    half_range: bool,
) -> Result<Vec<f64>> {
    let g = lorentz_coupling_at(cfg, x, scales)?;
    if g.norm() == 0.0 {
        return Ok(vec![1.0; grid.len]);
    }
    let k = kappa(g.norm(), &cfg.beam, scales);
    let amp = momentum_averaged_amplitude(k, g.arg(), grid, scales.wavenumber, 0.1 * cfg.tolerance, half_range)?;
    let drift = scales.drift_length(cfg.drift_fraction);
    let packet = SpinorWavepacket {
        grid: *grid,
        up: amp,
        down: vec![Complex64::new(0.0, 0.0); grid.len],
        periodic: true,
    };
    let drifted = apply_drift(&packet, drift, scales)?;
    let out = drifted.density_up();
    if out.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidInput(format!("non-finite density at x = {x:.3e} m")));
    }
    Ok(out)
}

/// Trapezoid average over the |ψ_x|² profile (x = √2 σ_x t), halving the
/// step until the density settles. Slices at ±x coincide, so only t ≥ 0 is
/// evaluated; nodes are reused across refinements.
fn x_average(cfg: &PinemConfig, grid: &Grid, scales: &DerivedScales, half_range: bool) -> Result<(Vec<f64>, usize)> {
    let finest = 1u64 << MAX_X_LEVEL;
    let mut cache: BTreeMap<u64, Vec<f64>> = BTreeMap::new();
    let mut prev: Option<Vec<f64>> = None;
    for level in 0..=MAX_X_LEVEL {
        let step = X_INITIAL_STEP / (1u64 << level) as f64;
        let stride = finest >> level;
        let n = (X_RANGE / step).ceil() as u64;
        let missing: Vec<u64> = (0..=n).map(|j| j * stride).filter(|k| !cache.contains_key(k)).collect();
        let fresh: Vec<(u64, Vec<f64>)> = missing
            .par_iter()
            .map(|&key| {
                let t = key as f64 * X_INITIAL_STEP / finest as f64;
                let x = std::f64::consts::SQRT_2 * cfg.beam.sigma_x * t;
                Ok((key, slice_density(cfg, x, grid, scales, half_range)?))
            })
            .collect::<Result<_>>()?;
        cache.extend(fresh);
        let mut acc = vec![0.0; grid.len];
        for j in 0..=n {
            let t = j as f64 * step;
            let w = (-t * t).exp() * step / PI.sqrt() * if j == 0 { 1.0 } else { 2.0 };
            acc.iter_mut()
                .zip(&cache[&(j * stride)])
                .for_each(|(s, v)| *s += w * v);
        }
        if let Some(p) = &prev {
            let change = p.iter().zip(&acc).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
            if change < cfg.tolerance {
                return Ok((acc, 2 * n as usize + 1));
            }
        }
        prev = Some(acc);
    }
    Err(Error::InvalidInput(format!(
        "x integration does not converge to {:.1e}",
        cfg.tolerance
    )))
}

fn modulated_density(cfg: &PinemConfig, scales: &DerivedScales, half_range: bool) -> Result<PinemResult> {
    cfg.validate()?;
    let grid = period_grid(scales, cfg.samples_per_period);
    let (density, nodes) = x_average(cfg, &grid, scales, half_range)?;
    Ok(PinemResult {
        grid: grid.positions().collect(),
        contrast: contrast(&density),
        density,
        x_nodes: nodes,
    })
}

/// Longitudinal density after the stage and drift, averaged over the
/// transverse beam profile.
pub fn pinem_modulated_density(cfg: &PinemConfig, scales: &DerivedScales) -> Result<PinemResult> {
    modulated_density(cfg, scales, false)
}

/// Same density using the reflection-symmetric cos kernel over p_y ≥ 0.
pub fn pinem_modulated_density_half_range(cfg: &PinemConfig, scales: &DerivedScales) -> Result<PinemResult> {
    modulated_density(cfg, scales, true)
}

/// 1 − PINEM contrast.
pub fn fidelity_report(cfg: &PinemConfig, scales: &DerivedScales) -> Result<f64> {
    Ok(pinem_modulated_density(cfg, scales)?.fidelity())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PinemGridPoint {
    pub sigma_x: f64,
    pub sigma_y: f64,
    pub contrast: f64,
    pub fidelity: f64,
}

/// Contrast over every (σ_x, σ_y) pair, σ_x-major.
pub fn pinem_grid(
    base: &PinemConfig,
    sigmas_x: &[f64],
    sigmas_y: &[f64],
    scales: &DerivedScales,
) -> Result<Vec<PinemGridPoint>> {
    let pairs: Vec<(f64, f64)> = sigmas_x
        .iter()
        .flat_map(|&sx| sigmas_y.iter().map(move |&sy| (sx, sy)))
        .collect();
    pairs
        .par_iter()
        .map(|&(sx, sy)| {
            let cfg = PinemConfig {
                beam: TransverseBeam::new(sx, sy)?,
                ..*base
            };
            let r = pinem_modulated_density(&cfg, scales)?;
            Ok(PinemGridPoint {
                sigma_x: sx,
                sigma_y: sy,
                contrast: r.contrast,
                fidelity: r.fidelity(),
            })
        })
        .collect()
}
