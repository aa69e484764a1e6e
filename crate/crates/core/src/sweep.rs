//! Two-axis parameter scans of the unpolarized-beam ⟨S_y⟩.

use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::dynamics::{
    apply_polarizing_stage, propagate_to_polarizer, Envelope, PacketSpec, PipelineConfig, Spinor,
    SpinorWavepacket, StagePhaseConfig,
};
use crate::ensemble::{run_mixed, SpinDensityMatrix};
use crate::error::{Error, Result};
use crate::observables::expectation_s_y_direct;

/// Fraction of the peak |⟨S_y⟩| that counts as robust.
pub const ROBUSTNESS_THRESHOLD: f64 = 0.9;
pub const ROBUSTNESS_POINTS: usize = 201;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepParameter {
    /// |g₁| = |g₂|
    Coupling,
    G1,
    G2,
    DriftFraction,
    RelativePhase,
}

impl SweepParameter {
    pub const ALL: [SweepParameter; 5] = [
        SweepParameter::Coupling,
        SweepParameter::G1,
        SweepParameter::G2,
        SweepParameter::DriftFraction,
        SweepParameter::RelativePhase,
    ];

    pub fn name(self) -> &'static str {
        match self {
            SweepParameter::Coupling => "coupling",
            SweepParameter::G1 => "g1",
            SweepParameter::G2 => "g2",
            SweepParameter::DriftFraction => "drift_fraction",
            SweepParameter::RelativePhase => "relative_phase",
        }
    }

    pub fn valid_names() -> String {
        Self::ALL.map(Self::name).join(", ")
    }

    fn only_touches_stage2(self) -> bool {
        self == SweepParameter::G2
    }

    fn apply(self, cfg: &PipelineConfig, value: f64) -> Result<PipelineConfig> {
        let with_g = |stage: &StagePhaseConfig, g: f64| -> Result<StagePhaseConfig> {
            if !(g >= 0.0) {
                return Err(Error::param("coupling", format!("|g| must be non-negative, got {g}")));
            }
            stage.with_magnitude(g)
        };
        let mut out = cfg.clone();
        match self {
            SweepParameter::Coupling => {
                out.stage1 = with_g(&cfg.stage1, value)?;
                out.stage2 = with_g(&cfg.stage2, value)?;
            }
            SweepParameter::G1 => out.stage1 = with_g(&cfg.stage1, value)?,
            SweepParameter::G2 => out.stage2 = with_g(&cfg.stage2, value)?,
            SweepParameter::DriftFraction => {
                if !(value >= 0.0) {
                    return Err(Error::param("drift_fraction", format!("must be non-negative, got {value}")));
                }
                out.drift_length = cfg.scales.drift_length(value);
            }
            SweepParameter::RelativePhase => out = cfg.with_relative_phase(value)?,
        }
        Ok(out)
    }
}

impl fmt::Display for SweepParameter {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for SweepParameter {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|p| p.name() == s)
            .ok_or_else(|| Error::UnknownParameter {
                name: s.to_string(),
                valid: Self::valid_names(),
            })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Axis {
    pub parameter: SweepParameter,
    pub start: f64,
    pub stop: f64,
    pub count: usize,
}

impl Axis {
    pub fn new(parameter: SweepParameter, start: f64, stop: f64, count: usize) -> Result<Self> {
        let a = Self {
            parameter,
            start,
            stop,
            count,
        };
        a.validate()?;
        Ok(a)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.start.is_finite() && self.stop.is_finite()) {
            return Err(Error::param("axis", format!("{} range must be finite", self.parameter)));
        }
        if self.count == 0 {
            return Err(Error::param("axis", format!("{} needs at least one sample", self.parameter)));
        }
        Ok(())
    }

    pub fn values(&self) -> Vec<f64> {
        if self.count == 1 {
            return vec![self.start];
        }
        let step = (self.stop - self.start) / (self.count - 1) as f64;
        (0..self.count).map(|i| self.start + step * i as f64).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SweepSpec {
    /// Rows.
    pub axis1: Axis,
    /// Columns.
    pub axis2: Axis,
    /// Worker cap; `None` uses the global pool.
    pub threads: Option<usize>,
}

impl SweepSpec {
    pub fn validate(&self) -> Result<()> {
        self.axis1.validate()?;
        self.axis2.validate()?;
        if self.axis1.parameter == self.axis2.parameter {
            return Err(Error::param("axis", "both axes sweep the same parameter"));
        }
        if self.threads == Some(0) {
            return Err(Error::param("threads", "must be at least 1"));
        }
        Ok(())
    }

    /// ⟨S_y⟩ over |g| ∈ [0, 2] (|g₁| = |g₂|) × L_D/L_QR ∈ [0, 1], 41 × 41.
    pub fn coupling_vs_drift() -> Self {
        Self {
            axis1: Axis::new(SweepParameter::Coupling, 0.0, 2.0, 41).expect("valid"),
            axis2: Axis::new(SweepParameter::DriftFraction, 0.0, 1.0, 41).expect("valid"),
            threads: None,
        }
    }

    /// ⟨S_y⟩ over |g₁| × |g₂| ∈ [0, 2]², 41 × 41.
    pub fn coupling_vs_coupling() -> Self {
        Self {
            axis1: Axis::new(SweepParameter::G1, 0.0, 2.0, 41).expect("valid"),
            axis2: Axis::new(SweepParameter::G2, 0.0, 2.0, 41).expect("valid"),
            threads: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Extremum {
    pub row: usize,
    pub col: usize,
    pub value1: f64,
    pub value2: f64,
    pub s_y: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HeatMapResult {
    pub spec: SweepSpec,
    pub values1: Vec<f64>,
    pub values2: Vec<f64>,
    /// `s_y[row][col]`, ħ/2 units.
    pub s_y: Vec<Vec<f64>>,
    pub argmax: Extremum,
    pub argmin: Extremum,
    /// SHA-256 of the sweep spec and base configuration.
    pub config_hash: String,
}

impl HeatMapResult {
    fn extremum(&self, better: impl Fn(f64, f64) -> bool) -> Extremum {
        let mut best = (0, 0);
        for (i, row) in self.s_y.iter().enumerate() {
            for (j, &v) in row.iter().enumerate() {
                if better(v, self.s_y[best.0][best.1]) {
                    best = (i, j);
                }
            }
        }
        Extremum {
            row: best.0,
            col: best.1,
            value1: self.values1[best.0],
            value2: self.values2[best.1],
            s_y: self.s_y[best.0][best.1],
        }
    }

    /// Cell with the largest |⟨S_y⟩|.
    pub fn max_magnitude(&self) -> Extremum {
        self.extremum(|a, b| a.abs() > b.abs())
    }

    pub fn cell(&self, row: usize, col: usize) -> f64 {
        self.s_y[row][col]
    }
}

pub fn config_hash<T: Serialize>(value: &T) -> String {
    let json = serde_json::to_vec(value).expect("plain data serializes");
    Sha256::digest(&json).iter().map(|b| format!("{b:02x}")).collect()
}

/// ⟨S_y⟩ of the maximally mixed input.
pub fn unpolarized_s_y(cfg: &PipelineConfig) -> Result<f64> {
    Ok(run_mixed(&SpinDensityMatrix::maximally_mixed(), cfg)?.s_y_expect)
}

fn row_values(spec: &SweepSpec, base: &PipelineConfig, v1: f64, values2: &[f64]) -> Result<Vec<f64>> {
    let row_cfg = spec.axis1.parameter.apply(base, v1)?;
    if !spec.axis2.parameter.only_touches_stage2() {
        return values2
            .iter()
            .map(|&v2| unpolarized_s_y(&spec.axis2.parameter.apply(&row_cfg, v2)?))
            .collect();
    }
    // the ρ = 𝟙/2 split runs |↑_z⟩ and |↓_z⟩ with weight ½ each
    let upstream: Vec<SpinorWavepacket> = [Spinor::up_z(), Spinor::down_z()]
        .iter()
        .map(|s| Ok(propagate_to_polarizer(&row_cfg, s)?.2))
        .collect::<Result<_>>()?;
    values2
        .iter()
        .map(|&v2| {
            let cfg = spec.axis2.parameter.apply(&row_cfg, v2)?;
            let mut acc = 0.0;
            for psi in &upstream {
                let out = apply_polarizing_stage(psi, &cfg.stage2, cfg.scales.wavenumber)?;
                acc += 0.5 * expectation_s_y_direct(&out);
            }
            Ok(acc)
        })
        .collect()
}

pub fn run_sweep(spec: &SweepSpec, base: &PipelineConfig) -> Result<HeatMapResult> {
    spec.validate()?;
    let values1 = spec.axis1.values();
    let values2 = spec.axis2.values();
    let compute = || -> Result<Vec<Vec<f64>>> {
        values1
            .par_iter()
            .map(|&v1| row_values(spec, base, v1, &values2))
            .collect()
    };
    let s_y = match spec.threads {
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .map_err(|e| Error::InvalidInput(format!("thread pool: {e}")))?
            .install(compute)?,
        None => compute()?,
    };
    let mut result = HeatMapResult {
        spec: *spec,
        values1,
        values2,
        s_y,
        argmax: Extremum {
            row: 0,
            col: 0,
            value1: 0.0,
            value2: 0.0,
            s_y: 0.0,
        },
        argmin: Extremum {
            row: 0,
            col: 0,
            value1: 0.0,
            value2: 0.0,
            s_y: 0.0,
        },
        config_hash: config_hash(&(spec, base)),
    };
    result.argmax = result.extremum(|a, b| a > b);
    result.argmin = result.extremum(|a, b| a < b);
    Ok(result)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Robustness {
    pub coupling: f64,
    pub peak: f64,
    /// Contiguous L_D/L_QR interval around the peak with |⟨S_y⟩| ≥ 0.9·peak.
    pub interval: Option<(f64, f64)>,
    pub width: f64,
    pub fractions: Vec<f64>,
    pub s_y: Vec<f64>,
}

/// Drift tolerance at |g₁| = |g₂| = `coupling` from a 201-point scan of
/// L_D/L_QR ∈ [0, 1].
pub fn drift_robustness(coupling: f64, base: &PipelineConfig) -> Result<Robustness> {
    if !(coupling >= 0.0 && coupling.is_finite()) {
        return Err(Error::param("coupling", format!("must be non-negative, got {coupling}")));
    }
    let cfg = SweepParameter::Coupling.apply(base, coupling)?;
    let fractions = Axis::new(SweepParameter::DriftFraction, 0.0, 1.0, ROBUSTNESS_POINTS)?.values();
    let s_y: Vec<f64> = fractions
        .par_iter()
        .map(|&f| unpolarized_s_y(&SweepParameter::DriftFraction.apply(&cfg, f)?))
        .collect::<Result<_>>()?;
    let (peak_idx, peak) = s_y
        .iter()
        .map(|v| v.abs())
        .enumerate()
        .fold((0, 0.0), |best, (i, v)| if v > best.1 { (i, v) } else { best });
    let mut out = Robustness {
        coupling,
        peak,
        interval: None,
        width: 0.0,
        fractions,
        s_y,
    };
    if peak < 1e-12 {
        return Ok(out);
    }
    let keep = |i: usize| out.s_y[i].abs() >= ROBUSTNESS_THRESHOLD * peak;
    let mut lo = peak_idx;
    while lo > 0 && keep(lo - 1) {
        lo -= 1;
    }
    let mut hi = peak_idx;
    while hi + 1 < out.s_y.len() && keep(hi + 1) {
        hi += 1;
    }
    out.interval = Some((out.fractions[lo], out.fractions[hi]));
    out.width = out.fractions[hi] - out.fractions[lo];
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EnvelopeCheck {
    pub row: usize,
    pub col: usize,
    pub periodic: f64,
    pub gaussian: f64,
}

impl EnvelopeCheck {
    pub fn difference(&self) -> f64 {
        (self.periodic - self.gaussian).abs()
    }
}

/// Recomputes selected cells with a Gaussian envelope of width `sigma_z`.
pub fn gaussian_confirmation(
    result: &HeatMapResult,
    base: &PipelineConfig,
    cells: &[(usize, usize)],
    sigma_z: f64,
) -> Result<Vec<EnvelopeCheck>> {
    let packet = PacketSpec {
        envelope: Envelope::Gaussian {
            sigma_z: Some(sigma_z),
            window: None,
        },
        samples_per_period: base.packet.samples_per_period,
    };
    let gaussian_base = PipelineConfig {
        packet,
        ..base.clone()
    };
    cells
        .par_iter()
        .map(|&(row, col)| {
            let (v1, v2) = (
                *result.values1.get(row).ok_or_else(|| Error::InvalidInput(format!("row {row} out of range")))?,
                *result.values2.get(col).ok_or_else(|| Error::InvalidInput(format!("column {col} out of range")))?,
            );
            let cfg = result.spec.axis1.parameter.apply(&gaussian_base, v1)?;
            let cfg = result.spec.axis2.parameter.apply(&cfg, v2)?;
            Ok(EnvelopeCheck {
                row,
                col,
                periodic: result.s_y[row][col],
                gaussian: unpolarized_s_y(&cfg)?,
            })
        })
        .collect()
}

/// Five spread-out cells: the center, and the midpoints of each quadrant.
pub fn confirmation_cells(rows: usize, cols: usize) -> Vec<(usize, usize)> {
    let r = |f: f64| ((rows - 1) as f64 * f).round() as usize;
    let c = |f: f64| ((cols - 1) as f64 * f).round() as usize;
    vec![
        (r(0.5), c(0.5)),
        (r(0.25), c(0.25)),
        (r(0.25), c(0.75)),
        (r(0.75), c(0.25)),
        (r(0.75), c(0.75)),
    ]
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parameter_names() {
        for p in SweepParameter::ALL {
            assert_eq!(p.name().parse::<SweepParameter>().unwrap(), p);
        }
        match "coupling_strength".parse::<SweepParameter>() {
            Err(Error::UnknownParameter { valid, .. }) => {
                assert!(valid.contains("drift_fraction") && valid.contains("g2"))
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn axis_values() {
        let a = Axis::new(SweepParameter::G1, 0.0, 2.0, 41).unwrap();
        let v = a.values();
        assert_eq!(v.len(), 41);
        assert!((v[10] - 0.5).abs() < 1e-15 && (v[40] - 2.0).abs() < 1e-15);
        assert!(Axis::new(SweepParameter::G1, 0.0, f64::INFINITY, 3).is_err());
        assert!(Axis::new(SweepParameter::G1, 0.0, 1.0, 0).is_err());
    }

    #[test]
    fn single_cell_is_single_run() {
        let base = PipelineConfig::canonical();
        let spec = SweepSpec {
            axis1: Axis::new(SweepParameter::G1, 0.5, 0.5, 1).unwrap(),
            axis2: Axis::new(SweepParameter::G2, 0.5, 0.5, 1).unwrap(),
            threads: Some(1),
        };
        let r = run_sweep(&spec, &base).unwrap();
        let direct = unpolarized_s_y(&base).unwrap();
        assert!((r.cell(0, 0) - direct).abs() < 1e-14);
        assert_eq!(r.argmax, r.argmin);
    }

    #[test]
    fn same_axis_twice_rejected() {
        let a = Axis::new(SweepParameter::G1, 0.0, 1.0, 2).unwrap();
        let spec = SweepSpec {
            axis1: a,
            axis2: a,
            threads: None,
        };
        assert!(run_sweep(&spec, &PipelineConfig::canonical()).is_err());
    }

    #[test]
    fn cached_rows_match_full_runs() {
        let base = PipelineConfig::canonical();
        let spec = SweepSpec {
            axis1: Axis::new(SweepParameter::G1, 0.2, 1.2, 3).unwrap(),
            axis2: Axis::new(SweepParameter::G2, 0.1, 1.7, 4).unwrap(),
            threads: Some(2),
        };
        let r = run_sweep(&spec, &base).unwrap();
        for (i, &g1) in r.values1.iter().enumerate() {
            for (j, &g2) in r.values2.iter().enumerate() {
                let cfg = SweepParameter::G2
                    .apply(&SweepParameter::G1.apply(&base, g1).unwrap(), g2)
                    .unwrap();
                assert!((r.cell(i, j) - unpolarized_s_y(&cfg).unwrap()).abs() < 1e-13);
            }
        }
    }

    #[test]
    fn zero_coupling_has_zero_width() {
        let r = drift_robustness(0.0, &PipelineConfig::canonical()).unwrap();
        assert_eq!(r.width, 0.0);
        assert!(r.interval.is_none());
        assert!(drift_robustness(-1.0, &PipelineConfig::canonical()).is_err());
    }

    #[test]
    fn hash_depends_on_config() {
        let a = PipelineConfig::canonical();
        let b = a.with_relative_phase(1.0).unwrap();
        assert_ne!(config_hash(&a), config_hash(&b));
        assert_eq!(config_hash(&a), config_hash(&a.clone()));
        assert_eq!(config_hash(&a).len(), 64);
    }
}
