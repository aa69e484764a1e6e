//! Scenario files: TOML, one table per part of the beamline.

use std::f64::consts::PI;
use std::fs;
use std::path::{Path, PathBuf};

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use spinpol::coupling::{stage_coupling_from_field, FieldCalibration};
use spinpol::dynamics::{Envelope, PacketSpec, PipelineConfig, Spinor, Stage, StagePhaseConfig};
use spinpol::ensemble::{Basis, SpinDensityMatrix};
use spinpol::physconst::{derive_scales, BeamParams, DerivedScales, LaserParams};
use spinpol::pinem::{PinemConfig, TransverseBeam};
use spinpol::sweep::{config_hash, Axis, SweepSpec};

use crate::CliError;

pub const CANONICAL: &str = include_str!("../configs/canonical.cfg");
pub const FIG3A: &str = include_str!("../configs/fig3a.cfg");
pub const FIG3B: &str = include_str!("../configs/fig3b.cfg");
pub const FIGS1: &str = include_str!("../configs/figS1.cfg");

pub const BUNDLED: [(&str, &str); 4] = [
    ("canonical", CANONICAL),
    ("fig3a", FIG3A),
    ("fig3b", FIG3B),
    ("figS1", FIGS1),
];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub beam: BeamSection,
    pub laser: LaserSection,
    #[serde(default)]
    pub device: DeviceSection,
    pub stage1: StageSection,
    pub stage2: StageSection,
    pub drift: DriftSection,
    #[serde(default)]
    pub spin: SpinSection,
    #[serde(default)]
    pub grid: GridSection,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sweep: Option<SweepSection>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pinem: Option<PinemSection>,
    #[serde(default)]
    pub outputs: OutputsSection,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BeamSection {
    pub beta: f64,
    pub sigma_e_ev: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LaserSection {
    /// m
    pub wavelength: f64,
    /// V/m, per side
    pub incident_field: f64,
    pub conversion_efficiency: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DeviceSection {
    /// m, used by field-specified stages and the PINEM model
    #[serde(default = "default_stage_length")]
    pub stage_length: f64,
    #[serde(default = "default_dual_drive")]
    pub dual_drive_factor: f64,
}

fn default_stage_length() -> f64 {
    12.7e-6
}

fn default_dual_drive() -> f64 {
    FieldCalibration::default().dual_drive_factor
}

impl Default for DeviceSection {
    fn default() -> Self {
        Self {
            stage_length: default_stage_length(),
            dual_drive_factor: default_dual_drive(),
        }
    }
}

/// Either `coupling` (|g|) or `incident_field` (V/m per side); the drive
/// phase as `phase` (rad) or `phase_pi` (units of π).
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StageSection {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub coupling: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub incident_field: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub phase: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub phase_pi: Option<f64>,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DriftSection {
    /// L_D / L_QR
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fraction: Option<f64>,
    /// m
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub length: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum SpinSection {
    /// (re, im) amplitudes along z; normalized on load.
    Spinor { up: [f64; 2], down: [f64; 2] },
    /// ρ = (𝟙 + r·σ)/2
    Density { bloch: [f64; 3] },
    /// ½/½ pair quantized along `basis`.
    Basis { basis: Basis },
}

impl Default for SpinSection {
    fn default() -> Self {
        SpinSection::Density { bloch: [0.0; 3] }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EnvelopeMode {
    Periodic,
    Gaussian,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSection {
    pub envelope: EnvelopeMode,
    /// Δz′ = λ_g / samples_per_period
    pub samples_per_period: usize,
    /// periodic envelope only
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub periods: Option<usize>,
    /// gaussian envelope only, m
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sigma_z: Option<f64>,
    /// gaussian envelope only, m
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub window: Option<f64>,
}

impl Default for GridSection {
    fn default() -> Self {
        Self {
            envelope: EnvelopeMode::Periodic,
            samples_per_period: PacketSpec::default().samples_per_period,
            periods: None,
            sigma_z: None,
            window: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AxisSection {
    pub parameter: String,
    pub start: f64,
    pub stop: f64,
    pub count: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSection {
    pub axis1: AxisSection,
    pub axis2: AxisSection,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PinemSection {
    /// m
    pub sigma_x: Vec<f64>,
    /// m
    pub sigma_y: Vec<f64>,
    /// Channel E_y amplitude in V/m; defaults to the laser drive.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub channel_field: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub drift_fraction: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tolerance: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    Csv,
    Json,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputsSection {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dir: Option<PathBuf>,
    #[serde(default = "default_formats")]
    pub formats: Vec<Format>,
}

fn default_formats() -> Vec<Format> {
    vec![Format::Csv, Format::Json]
}

impl Default for OutputsSection {
    fn default() -> Self {
        Self {
            dir: None,
            formats: default_formats(),
        }
    }
}

/// Initial spin after validation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SpinInput {
    Density(SpinDensityMatrix),
    Basis(Basis),
}

impl SpinInput {
    /// Weighted pure states run through the pipeline.
    pub fn members(&self) -> Vec<(f64, Spinor)> {
        match self {
            SpinInput::Density(rho) => rho.pure_states(),
            SpinInput::Basis(b) => b.pair().map(|s| (0.5, s)).to_vec(),
        }
    }
}

/// Validated scenario ready to run.
#[derive(Debug, Clone)]
pub struct Scenario {
    pub config: ScenarioConfig,
    pub config_hash: String,
    pub scales: DerivedScales,
    pub pipeline: PipelineConfig,
    pub spin: SpinInput,
    pub sweep: Option<SweepSpec>,
    pub pinem: Option<PinemPlan>,
}

#[derive(Debug, Clone)]
pub struct PinemPlan {
    pub base: PinemConfig,
    pub sigma_x: Vec<f64>,
    pub sigma_y: Vec<f64>,
}

fn at<T>(path: &str, r: spinpol::Result<T>) -> Result<T, CliError> {
    r.map_err(|e| CliError::Config(format!("{path}: {e}")))
}

fn bad(path: &str, msg: impl std::fmt::Display) -> CliError {
    CliError::Config(format!("{path}: {msg}"))
}

impl ScenarioConfig {
    pub fn parse(text: &str) -> Result<Self, CliError> {
        toml::from_str(text).map_err(|e| CliError::Config(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = fs::read_to_string(path).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        Self::parse(&text).map_err(|e| match e {
            CliError::Config(m) => CliError::Config(format!("{}: {m}", path.display())),
            other => other,
        })
    }

    pub fn bundled(name: &str) -> Result<Self, CliError> {
        let text = BUNDLED
            .iter()
            .find(|(n, _)| *n == name)
            .map(|(_, t)| *t)
            .ok_or_else(|| CliError::Usage(format!("no bundled config `{name}`")))?;
        Self::parse(text)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("scenario serializes")
    }

    /// Hash of everything except the output settings.
    pub fn hash(&self) -> String {
        let physics = Self {
            outputs: OutputsSection::default(),
            ..self.clone()
        };
        config_hash(&physics)
    }

    pub fn validate(&self) -> Result<Scenario, CliError> {
        let beam = at("beam", BeamParams::new(self.beam.beta, self.beam.sigma_e_ev))?;
        let l = &self.laser;
        let laser = at("laser", LaserParams::new(l.wavelength, l.incident_field, l.conversion_efficiency))?;
        let scales = at("beam", derive_scales(&beam, &laser))?;
        let d = &self.device;
        if !(d.stage_length > 0.0 && d.stage_length.is_finite()) {
            return Err(bad("device.stage_length", format!("must be positive, got {}", d.stage_length)));
        }
        if !(d.dual_drive_factor > 0.0 && d.dual_drive_factor.is_finite()) {
            return Err(bad(
                "device.dual_drive_factor",
                format!("must be positive, got {}", d.dual_drive_factor),
            ));
        }
        let calibration = FieldCalibration {
            dual_drive_factor: d.dual_drive_factor,
        };
        let stage = |name: &str, s: &StageSection, kind: Stage| -> Result<StagePhaseConfig, CliError> {
            let g = match (s.coupling, s.incident_field) {
                (Some(g), None) => g,
                (None, Some(e)) => {
                    let c = stage_coupling_from_field(e, l.conversion_efficiency, d.stage_length, &scales, &calibration);
                    at(&format!("{name}.incident_field"), c)?.magnitude()
                }
                _ => return Err(bad(name, "give exactly one of `coupling` or `incident_field`")),
            };
            let phase = match (s.phase, s.phase_pi) {
                (Some(p), None) => p,
                (None, Some(p)) => p * PI,
                (None, None) => 0.0,
                _ => return Err(bad(name, "give at most one of `phase` or `phase_pi`")),
            };
            if !phase.is_finite() {
                return Err(bad(&format!("{name}.phase"), "must be finite"));
            }
            at(&format!("{name}.coupling"), StagePhaseConfig::from_drive(kind, g, phase))
        };
        let stage1 = stage("stage1", &self.stage1, Stage::Modulation)?;
        let stage2 = stage("stage2", &self.stage2, Stage::Polarizing)?;
        let drift_length = match (self.drift.fraction, self.drift.length) {
            (Some(f), None) => scales.drift_length(f),
            (None, Some(len)) => len,
            _ => return Err(bad("drift", "give exactly one of `fraction` or `length`")),
        };
        if !(drift_length >= 0.0 && drift_length.is_finite()) {
            return Err(bad("drift", format!("drift length must be non-negative, got {drift_length}")));
        }
        let packet = self.packet()?;
        let spin = match self.spin {
            SpinSection::Spinor { up, down } => {
                let s = at(
                    "spin",
                    Spinor::new(Complex64::new(up[0], up[1]), Complex64::new(down[0], down[1])),
                )?;
                SpinInput::Density(SpinDensityMatrix::pure(&s))
            }
            SpinSection::Density { bloch } => SpinInput::Density(at("spin.bloch", SpinDensityMatrix::from_bloch(bloch))?),
            SpinSection::Basis { basis } => SpinInput::Basis(basis),
        };
        let pipeline = PipelineConfig {
            beam,
            scales,
            packet,
            stage1,
            stage2,
            drift_length,
        };
        let sweep = self.sweep.as_ref().map(|s| s.spec()).transpose()?;
        let pinem = self
            .pinem
            .as_ref()
            .map(|p| p.plan(&laser, &calibration, d.stage_length, &scales))
            .transpose()?;
        if self.outputs.formats.is_empty() {
            return Err(bad("outputs.formats", "list at least one format"));
        }
        Ok(Scenario {
            config: self.clone(),
            config_hash: self.hash(),
            scales,
            pipeline,
            spin,
            sweep,
            pinem,
        })
    }

    fn packet(&self) -> Result<PacketSpec, CliError> {
        let g = &self.grid;
        if g.samples_per_period < spinpol::dynamics::MIN_SAMPLES_PER_PERIOD {
            return Err(bad(
                "grid.samples_per_period",
                format!("must be at least {}", spinpol::dynamics::MIN_SAMPLES_PER_PERIOD),
            ));
        }
        let envelope = match g.envelope {
            EnvelopeMode::Periodic => {
                if g.sigma_z.is_some() || g.window.is_some() {
                    return Err(bad("grid", "`sigma_z` and `window` apply to the gaussian envelope only"));
                }
                let periods = g.periods.unwrap_or(4);
                if periods == 0 {
                    return Err(bad("grid.periods", "must be at least 1"));
                }
                Envelope::Periodic { periods }
            }
            EnvelopeMode::Gaussian => {
                if g.periods.is_some() {
                    return Err(bad("grid.periods", "applies to the periodic envelope only"));
                }
                for (name, v) in [("grid.sigma_z", g.sigma_z), ("grid.window", g.window)] {
                    if let Some(v) = v {
                        if !(v > 0.0 && v.is_finite()) {
                            return Err(bad(name, format!("must be positive, got {v}")));
                        }
                    }
                }
                Envelope::Gaussian {
                    sigma_z: g.sigma_z,
                    window: g.window,
                }
            }
        };
        Ok(PacketSpec {
            envelope,
            samples_per_period: g.samples_per_period,
        })
    }
}

impl AxisSection {
    fn axis(&self, path: &str) -> Result<Axis, CliError> {
        let p = at(&format!("{path}.parameter"), self.parameter.parse())?;
        at(path, Axis::new(p, self.start, self.stop, self.count))
    }
}

impl SweepSection {
    fn spec(&self) -> Result<SweepSpec, CliError> {
        let spec = SweepSpec {
            axis1: self.axis1.axis("sweep.axis1")?,
            axis2: self.axis2.axis("sweep.axis2")?,
            threads: None,
        };
        at("sweep", spec.validate())?;
        Ok(spec)
    }
}

impl PinemSection {
    fn plan(
        &self,
        laser: &LaserParams,
        calibration: &FieldCalibration,
        stage_length: f64,
        scales: &DerivedScales,
    ) -> Result<PinemPlan, CliError> {
        if self.sigma_x.is_empty() || self.sigma_y.is_empty() {
            return Err(bad("pinem", "`sigma_x` and `sigma_y` need at least one value each"));
        }
        for (name, list) in [("pinem.sigma_x", &self.sigma_x), ("pinem.sigma_y", &self.sigma_y)] {
            if let Some(v) = list.iter().find(|v| !(**v > 0.0 && v.is_finite())) {
                return Err(bad(name, format!("values must be positive, got {v}")));
            }
        }
        let e0 = self
            .channel_field
            .unwrap_or_else(|| calibration.channel_amplitude(laser.incident_field, laser.conversion_efficiency));
        if !(e0 >= 0.0 && e0.is_finite()) {
            return Err(bad("pinem.channel_field", format!("must be non-negative, got {e0}")));
        }
        let beam = at("pinem", TransverseBeam::new(self.sigma_x[0], self.sigma_y[0]))?;
        let mut base = PinemConfig::device(beam, e0, stage_length, scales);
        if let Some(f) = self.drift_fraction {
            base.drift_fraction = f;
        }
        if let Some(t) = self.tolerance {
            base.tolerance = t;
        }
        at("pinem", base.validate())?;
        Ok(PinemPlan {
            base,
            sigma_x: self.sigma_x.clone(),
            sigma_y: self.sigma_y.clone(),
        })
    }
}
