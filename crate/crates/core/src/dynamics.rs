//! Spinor wavepacket on a longitudinal grid and the three evolution steps:
//! spin-dependent phase modulation, free drift, and position-dependent spin
//! rotation.
//!
//! The stage operators are the exact exponential / closed forms. The Bessel
//! series (`*_series`) exist as independent checks of those forms.

use std::f64::consts::PI;
use std::sync::Arc;

use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::bessel::{amplitude_order, bessel_j_orders, truncation_order};
use crate::coupling::{wrap_phase, CouplingCoefficient, CouplingKind};
use crate::error::{Error, Result};
use crate::physconst::{derive_scales, BeamParams, DerivedScales, LaserParams, ELECTRON_MASS, HBAR};

/// Finest-required grid: Δz′ ≤ λ_g / 64.
pub const MIN_SAMPLES_PER_PERIOD: usize = 64;

/// Σ J_n² deficit accepted when truncating Bessel series.
pub const SERIES_TOLERANCE: f64 = 1e-12;

/// Operator phase of the polarizing stage relative to its drive phase.
///
/// The transverse-field mode driving the spin rotation sits a quarter cycle
/// behind the longitudinal mode of the modulation stage for equal drive
/// phases, so a relative drive phase of π/2 lines the rotation up with the
/// spin-separated bunches.
pub const POLARIZING_PHASE_REFERENCE: f64 = -PI / 2.0;

const I: Complex64 = Complex64::new(0.0, 1.0);

/// Two-component spin amplitudes in the z basis.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Spinor {
    pub up: Complex64,
    pub down: Complex64,
}

impl Spinor {
    pub fn new(up: Complex64, down: Complex64) -> Result<Self> {
        let n = (up.norm_sqr() + down.norm_sqr()).sqrt();
        if !(n > 0.0 && n.is_finite()) {
            return Err(Error::InvalidInput("spinor has zero or non-finite norm".into()));
        }
        Ok(Self {
            up: up / n,
            down: down / n,
        })
    }

    pub fn up_z() -> Self {
        Self {
            up: 1.0.into(),
            down: 0.0.into(),
        }
    }

    pub fn down_z() -> Self {
        Self {
            up: 0.0.into(),
            down: 1.0.into(),
        }
    }

    pub fn up_x() -> Self {
        let s = std::f64::consts::FRAC_1_SQRT_2;
        Self {
            up: s.into(),
            down: s.into(),
        }
    }

    pub fn down_x() -> Self {
        let s = std::f64::consts::FRAC_1_SQRT_2;
        Self {
            up: s.into(),
            down: (-s).into(),
        }
    }

    pub fn up_y() -> Self {
        let s = std::f64::consts::FRAC_1_SQRT_2;
        Self {
            up: s.into(),
            down: Complex64::new(0.0, s),
        }
    }

    pub fn down_y() -> Self {
        let s = std::f64::consts::FRAC_1_SQRT_2;
        Self {
            up: s.into(),
            down: Complex64::new(0.0, -s),
        }
    }
}

/// Uniform grid of offsets z′ from the packet center.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Grid {
    pub origin: f64,
    pub spacing: f64,
    pub len: usize,
}

impl Grid {
    pub fn position(&self, i: usize) -> f64 {
        self.origin + i as f64 * self.spacing
    }

    pub fn positions(&self) -> impl Iterator<Item = f64> + '_ {
        (0..self.len).map(move |i| self.position(i))
    }

    pub fn window(&self) -> f64 {
        self.spacing * self.len as f64
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "lowercase")]
pub enum Envelope {
    /// Plane-wave limit: uniform amplitude over an integer number of periods
    /// with periodic boundaries.
    Periodic { periods: usize },
    /// Gaussian envelope. `sigma_z` defaults to the transform-limited width
    /// ħv/(2σ_E); `window` defaults to a span of at least 16σ_z.
    Gaussian {
        sigma_z: Option<f64>,
        window: Option<f64>,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PacketSpec {
    pub envelope: Envelope,
    pub samples_per_period: usize,
}

impl Default for PacketSpec {
    fn default() -> Self {
        Self {
            envelope: Envelope::Periodic { periods: 4 },
            samples_per_period: MIN_SAMPLES_PER_PERIOD,
        }
    }
}

/// Transform-limited longitudinal width: σ_p = σ_E / v, σ_z = ħ / (2σ_p).
pub fn minimum_uncertainty_sigma_z(beam: &BeamParams) -> f64 {
    HBAR * beam.velocity() / (2.0 * beam.sigma_e_joule())
}

/// ψ±(z′) on a shared grid, normalized so Σ(|ψ₊|² + |ψ₋|²)Δz′ = 1.
#[derive(Debug, Clone, PartialEq)]
pub struct SpinorWavepacket {
    pub grid: Grid,
    pub up: Vec<Complex64>,
    pub down: Vec<Complex64>,
    pub periodic: bool,
}

impl SpinorWavepacket {
    pub fn norm(&self) -> f64 {
        let s: f64 = self
            .up
            .iter()
            .zip(&self.down)
            .map(|(u, d)| u.norm_sqr() + d.norm_sqr())
            .sum();
        s * self.grid.spacing
    }

    /// ⟨σ_z⟩, i.e. ⟨S_z⟩ in units of ħ/2.
    pub fn s_z(&self) -> f64 {
        let s: f64 = self
            .up
            .iter()
            .zip(&self.down)
            .map(|(u, d)| u.norm_sqr() - d.norm_sqr())
            .sum();
        s * self.grid.spacing
    }

    pub fn density_up(&self) -> Vec<f64> {
        self.up.iter().map(|c| c.norm_sqr()).collect()
    }

    pub fn density_down(&self) -> Vec<f64> {
        self.down.iter().map(|c| c.norm_sqr()).collect()
    }

    pub fn density(&self) -> Vec<f64> {
        self.up
            .iter()
            .zip(&self.down)
            .map(|(u, d)| u.norm_sqr() + d.norm_sqr())
            .collect()
    }

    /// Longitudinal spin-z density |ψ₊|² − |ψ₋|².
    pub fn spin_z_density(&self) -> Vec<f64> {
        self.up
            .iter()
            .zip(&self.down)
            .map(|(u, d)| u.norm_sqr() - d.norm_sqr())
            .collect()
    }
}

pub fn init_packet(
    beam: &BeamParams,
    scales: &DerivedScales,
    spec: &PacketSpec,
    spin: &Spinor,
) -> Result<SpinorWavepacket> {
    if spec.samples_per_period < MIN_SAMPLES_PER_PERIOD {
        return Err(Error::param(
            "samples_per_period",
            format!(
                "needs at least {MIN_SAMPLES_PER_PERIOD}, got {}",
                spec.samples_per_period
            ),
        ));
    }
    let spin = Spinor::new(spin.up, spin.down)?;
    let spacing = scales.grating_period / spec.samples_per_period as f64;
    let (grid, envelope, periodic) = match spec.envelope {
        Envelope::Periodic { periods } => {
            if periods == 0 {
                return Err(Error::param("periods", "must be at least 1"));
            }
            let len = periods * spec.samples_per_period;
            let grid = Grid {
                origin: -0.5 * periods as f64 * scales.grating_period,
                spacing,
                len,
            };
            (grid, vec![Complex64::new(1.0, 0.0); len], true)
        }
        Envelope::Gaussian { sigma_z, window } => {
            let sigma = sigma_z.unwrap_or_else(|| minimum_uncertainty_sigma_z(beam));
            if !(sigma > 0.0 && sigma.is_finite()) {
                return Err(Error::param("sigma_z", format!("must be positive, got {sigma}")));
            }
            let window = window.unwrap_or_else(|| {
                let periods = ((16.0 * sigma) / scales.grating_period).ceil().max(8.0);
                periods * scales.grating_period
            });
            if window < 6.0 * sigma {
                return Err(Error::InvalidInput(format!(
                    "window {window:.3e} m covers fewer than 6 standard deviations ({sigma:.3e} m)"
                )));
            }
            let len = (window / spacing).round() as usize;
            let grid = Grid {
                origin: -0.5 * len as f64 * spacing,
                spacing,
                len,
            };
            let env = grid
                .positions()
                .map(|z| Complex64::new((-z * z / (4.0 * sigma * sigma)).exp(), 0.0))
                .collect();
            (grid, env, false)
        }
    };
    let total: f64 = envelope.iter().map(|c| c.norm_sqr()).sum::<f64>() * grid.spacing;
    let scale = 1.0 / total.sqrt();
    Ok(SpinorWavepacket {
        grid,
        up: envelope.iter().map(|e| e * spin.up * scale).collect(),
        down: envelope.iter().map(|e| e * spin.down * scale).collect(),
        periodic,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Stage {
    Modulation,
    Polarizing,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StagePhaseConfig {
    pub stage: Stage,
    /// Coupling whose argument is the operator phase φ of the stage.
    pub coupling: CouplingCoefficient,
    /// Bessel truncation from the Σ J_n² rule; series evaluation extends it
    /// until the dropped terms fall below double precision.
    pub n_max: usize,
    /// Phase of the illuminants; kept so that |g| = 0 does not lose it.
    pub drive_phase: f64,
}

impl StagePhaseConfig {
    pub fn new(stage: Stage, coupling: CouplingCoefficient) -> Result<Self> {
        let g = coupling.magnitude();
        if !g.is_finite() {
            return Err(Error::param("coupling", "must be finite"));
        }
        let drive_phase = match stage {
            Stage::Modulation => coupling.phase(),
            Stage::Polarizing => wrap_phase(coupling.phase() - POLARIZING_PHASE_REFERENCE),
        };
        Ok(Self {
            stage,
            coupling,
            n_max: truncation_order(2.0 * g, SERIES_TOLERANCE),
            drive_phase,
        })
    }

    /// Stage from |g| and the drive phase of its illuminants.
    pub fn from_drive(stage: Stage, magnitude: f64, drive_phase: f64) -> Result<Self> {
        if !(magnitude >= 0.0) {
            return Err(Error::param("coupling", format!("|g| must be non-negative, got {magnitude}")));
        }
        let phase = match stage {
            Stage::Modulation => drive_phase,
            Stage::Polarizing => drive_phase + POLARIZING_PHASE_REFERENCE,
        };
        let mut cfg = Self::new(
            stage,
            CouplingCoefficient::from_polar(magnitude, phase, CouplingKind::Magnetic),
        )?;
        cfg.drive_phase = drive_phase;
        Ok(cfg)
    }

    /// Same stage and drive phase with a new |g|.
    pub fn with_magnitude(&self, magnitude: f64) -> Result<Self> {
        Self::from_drive(self.stage, magnitude, self.drive_phase)
    }

    pub fn magnitude(&self) -> f64 {
        self.coupling.magnitude()
    }

    pub fn operator_phase(&self) -> f64 {
        self.coupling.phase()
    }

    fn series_order(&self) -> usize {
        self.n_max
            .max(amplitude_order(2.0 * self.magnitude(), 1e-17))
    }

    /// 2|g| sin(k_z z′ + φ): the local phase (stage 1) or rotation angle α (stage 2).
    pub fn angle_at(&self, z: f64, k_z: f64) -> f64 {
        2.0 * self.magnitude() * (k_z * z + self.operator_phase()).sin()
    }
}

fn expect_stage(cfg: &StagePhaseConfig, stage: Stage) -> Result<()> {
    if cfg.stage != stage {
        return Err(Error::InvalidInput(format!(
            "expected a {stage:?} stage config, got {:?}",
            cfg.stage
        )));
    }
    Ok(())
}

/// ψ± ← ψ± · exp(±i 2|g| sin(k_z z′ + φ₁)).
pub fn apply_modulation_stage(
    psi: &SpinorWavepacket,
    cfg: &StagePhaseConfig,
    k_z: f64,
) -> Result<SpinorWavepacket> {
    expect_stage(cfg, Stage::Modulation)?;
    let mut out = psi.clone();
    for (i, (u, d)) in out.up.iter_mut().zip(out.down.iter_mut()).enumerate() {
        let phase = Complex64::from_polar(1.0, cfg.angle_at(psi.grid.position(i), k_z));
        *u *= phase;
        *d *= phase.conj();
    }
    Ok(out)
}

/// [ψ₊, ψ₋] ← [cos α ψ₊ + i sin α ψ₋, i sin α ψ₊ + cos α ψ₋], α = 2|g₂| sin(k_z z′ + φ₂).
pub fn apply_polarizing_stage(
    psi: &SpinorWavepacket,
    cfg: &StagePhaseConfig,
    k_z: f64,
) -> Result<SpinorWavepacket> {
    expect_stage(cfg, Stage::Polarizing)?;
    let mut out = psi.clone();
    for (i, (u, d)) in out.up.iter_mut().zip(out.down.iter_mut()).enumerate() {
        let alpha = cfg.angle_at(psi.grid.position(i), k_z);
        let (s, c) = alpha.sin_cos();
        let (a, b) = (*u, *d);
        *u = a * c + I * s * b;
        *d = I * s * a + b * c;
    }
    Ok(out)
}

/// Free drift by the exact quadratic dispersion exp(−iħq²L_D / (2 m_e γ³ v))
/// applied per grid wavenumber q. On the sideband q = n k_z this is the order
/// phase exp(−i n² π L_D / L_QR).
pub fn apply_drift(psi: &SpinorWavepacket, drift_length: f64, scales: &DerivedScales) -> Result<SpinorWavepacket> {
    if !(drift_length >= 0.0 && drift_length.is_finite()) {
        return Err(Error::param(
            "drift_length",
            format!("must be non-negative, got {drift_length}"),
        ));
    }
    let mut out = psi.clone();
    if drift_length == 0.0 {
        return Ok(out);
    }
    let n = psi.grid.len;
    let kinetic = HBAR * drift_length
        / (2.0 * ELECTRON_MASS * scales.gamma.powi(3) * scales.velocity);
    let dq = 2.0 * PI / (n as f64 * psi.grid.spacing);
    let propagator: Vec<Complex64> = (0..n)
        .map(|j| {
            let q = fft_index_wavenumber(j, n) * dq;
            Complex64::from_polar(1.0, -kinetic * q * q)
        })
        .collect();
    let (forward, inverse) = fft_pair(n);
    for component in [&mut out.up, &mut out.down] {
        // the FFT phase origin sits at grid index 0; the propagator is
        // diagonal in q so the grid origin drops out
        forward.process(component);
        for (c, p) in component.iter_mut().zip(&propagator) {
            *c *= p / n as f64;
        }
        inverse.process(component);
    }
    Ok(out)
}

fn fft_index_wavenumber(j: usize, n: usize) -> f64 {
    if j < n.div_ceil(2) {
        j as f64
    } else {
        j as f64 - n as f64
    }
}

fn fft_pair(n: usize) -> (Arc<dyn Fft<f64>>, Arc<dyn Fft<f64>>) {
    let mut planner = FftPlanner::new();
    (planner.plan_fft_forward(n), planner.plan_fft_inverse(n))
}

/// Σ_n J_n(2|g|) e^{in(k_z z′ + φ)} (±1)^n: stage-1 factor as a Bessel series.
pub fn modulation_factor_series(cfg: &StagePhaseConfig, z: f64, k_z: f64, spin_up: bool) -> Complex64 {
    modulated_drifted_series(cfg, z, k_z, spin_up, 0.0)
}

/// Stage-1 factor followed by the order phase e^{−in²π L_D/L_QR}.
pub fn modulated_drifted_series(
    cfg: &StagePhaseConfig,
    z: f64,
    k_z: f64,
    spin_up: bool,
    drift_fraction: f64,
) -> Complex64 {
    let n_max = cfg.series_order();
    let j = bessel_j_orders(n_max, 2.0 * cfg.magnitude());
    let theta = k_z * z + cfg.operator_phase();
    let n_max = n_max as i64;
    (-n_max..=n_max)
        .map(|n| {
            let m = n.unsigned_abs() as usize;
            let mut jn = j[m];
            if n < 0 && m % 2 == 1 {
                jn = -jn;
            }
            if !spin_up && m % 2 == 1 {
                jn = -jn;
            }
            let nf = n as f64;
            jn * Complex64::from_polar(1.0, nf * theta - nf * nf * PI * drift_fraction)
        })
        .sum()
}

pub type SpinMatrix = [[Complex64; 2]; 2];

/// cos α 𝟙 + i sin α σ_x
pub fn polarizing_operator_closed(cfg: &StagePhaseConfig, z: f64, k_z: f64) -> SpinMatrix {
    let (s, c) = cfg.angle_at(z, k_z).sin_cos();
    [[c.into(), I * s], [I * s, c.into()]]
}

/// Σ_m J_m(2|g|) e^{im(k_z z′ + φ)} σ_x^m
pub fn polarizing_operator_series(cfg: &StagePhaseConfig, z: f64, k_z: f64) -> SpinMatrix {
    let n_max = cfg.series_order();
    let j = bessel_j_orders(n_max, 2.0 * cfg.magnitude());
    let theta = k_z * z + cfg.operator_phase();
    let zero = Complex64::new(0.0, 0.0);
    let (mut diag, mut off) = (zero, zero);
    let n_max = n_max as i64;
    for m in -n_max..=n_max {
        let k = m.unsigned_abs() as usize;
        let jm = if m < 0 && k % 2 == 1 { -j[k] } else { j[k] };
        let term = Complex64::from_polar(jm, m as f64 * theta);
        if k % 2 == 0 {
            diag += term;
        } else {
            off += term;
        }
    }
    [[diag, off], [off, diag]]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelineConfig {
    pub beam: BeamParams,
    pub scales: DerivedScales,
    pub packet: PacketSpec,
    pub stage1: StagePhaseConfig,
    pub stage2: StagePhaseConfig,
    pub drift_length: f64,
}

impl PipelineConfig {
    /// Stages of strength |g₁|, |g₂| driven with phases φ₁ = `relative_phase`
    /// and φ₂ = 0, separated by `drift_fraction`·L_QR.
    pub fn from_couplings(
        beam: BeamParams,
        scales: DerivedScales,
        packet: PacketSpec,
        g1: f64,
        g2: f64,
        drift_fraction: f64,
        relative_phase: f64,
    ) -> Result<Self> {
        Ok(Self {
            beam,
            scales,
            packet,
            stage1: StagePhaseConfig::from_drive(Stage::Modulation, g1, relative_phase)?,
            stage2: StagePhaseConfig::from_drive(Stage::Polarizing, g2, 0.0)?,
            drift_length: scales.drift_length(drift_fraction),
        })
    }

    /// |g₁| = |g₂| = 0.5, L_D = L_QR/2, φ_g = π/2, periodic envelope.
    pub fn canonical() -> Self {
        let beam = canonical_beam();
        let scales = derive_scales(&beam, &canonical_laser()).expect("canonical parameters are valid");
        Self::from_couplings(beam, scales, PacketSpec::default(), 0.5, 0.5, 0.5, PI / 2.0)
            .expect("canonical parameters are valid")
    }

    pub fn drift_fraction(&self) -> f64 {
        self.scales.drift_fraction(self.drift_length)
    }

    /// Same configuration with the stage-1 drive phase offset by `phase`
    /// from the stage-2 drive phase.
    pub fn with_relative_phase(&self, phase: f64) -> Result<Self> {
        Ok(Self {
            stage1: StagePhaseConfig::from_drive(
                Stage::Modulation,
                self.stage1.magnitude(),
                self.stage2.drive_phase + phase,
            )?,
            ..self.clone()
        })
    }
}

/// β = 0.1, σ_E = 0.15 eV.
pub fn canonical_beam() -> BeamParams {
    BeamParams::new(0.1, 0.15).expect("valid")
}

/// λ = 2.4 µm, 550 MV/m incident per side, 35 % conversion.
pub fn canonical_laser() -> LaserParams {
    LaserParams::new(2.4e-6, 550e6, 0.35).expect("valid")
}

/// Snapshots along the beamline.
#[derive(Debug, Clone, PartialEq)]
pub struct PipelineRun {
    pub initial: SpinorWavepacket,
    pub modulated: SpinorWavepacket,
    /// After the drift: input of the polarizing stage.
    pub drifted: SpinorWavepacket,
    pub output: SpinorWavepacket,
}

/// Initial packet → modulation → drift.
pub fn propagate_to_polarizer(
    cfg: &PipelineConfig,
    spin: &Spinor,
) -> Result<(SpinorWavepacket, SpinorWavepacket, SpinorWavepacket)> {
    let k = cfg.scales.wavenumber;
    let initial = init_packet(&cfg.beam, &cfg.scales, &cfg.packet, spin)?;
    let modulated = apply_modulation_stage(&initial, &cfg.stage1, k)?;
    let drifted = apply_drift(&modulated, cfg.drift_length, &cfg.scales)?;
    Ok((initial, modulated, drifted))
}

pub fn run_pipeline(cfg: &PipelineConfig, spin: &Spinor) -> Result<PipelineRun> {
    let (initial, modulated, drifted) = propagate_to_polarizer(cfg, spin)?;
    let output = apply_polarizing_stage(&drifted, &cfg.stage2, cfg.scales.wavenumber)?;
    Ok(PipelineRun {
        initial,
        modulated,
        drifted,
        output,
    })
}
