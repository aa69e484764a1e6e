//! Spin observables along y: densities, ⟨S_y⟩ (in units of ħ/2), measurement
//! probabilities, and the relative bunch phase of the two spin trains.
//!
//! Two routes are provided. The direct route projects the final wavepacket.
//! The analytic route integrates the stage-2 rotation kernels against the
//! pre-rotation channels ψ′± and a spin density matrix.

use std::f64::consts::{FRAC_PI_4, PI};

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::coupling::wrap_phase;
use crate::dynamics::{Grid, SpinorWavepacket, StagePhaseConfig};
use crate::ensemble::SpinDensityMatrix;
use crate::error::{Error, Result};

/// Relative first-harmonic power below which a density is featureless.
pub const FEATURELESS_POWER: f64 = 1e-9;

/// Norm tolerance on channels fed to the analytic forms.
pub const CHANNEL_NORM_TOLERANCE: f64 = 1e-8;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObservablesReport {
    pub s_y_expect: f64,
    pub s_z_expect: f64,
    pub p_up_y: f64,
    pub p_down_y: f64,
    pub polarization: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub grid: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub s_y_density: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub density_up: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub density_down: Option<Vec<f64>>,
}

impl ObservablesReport {
    pub fn from_wavepacket(psi: &SpinorWavepacket, with_arrays: bool) -> Self {
        let (up_y, down_y) = project_y_densities(psi);
        let dz = psi.grid.spacing;
        let p_up_y = up_y.iter().sum::<f64>() * dz;
        let p_down_y = down_y.iter().sum::<f64>() * dz;
        let arrays = with_arrays.then(|| {
            (
                psi.grid.positions().collect(),
                s_y_density(psi),
                psi.density_up(),
                psi.density_down(),
            )
        });
        let (grid, s_y, du, dd) = match arrays {
            Some((g, s, u, d)) => (Some(g), Some(s), Some(u), Some(d)),
            None => (None, None, None, None),
        };
        Self {
            s_y_expect: expectation_s_y_direct(psi),
            s_z_expect: psi.s_z(),
            p_up_y,
            p_down_y,
            polarization: p_up_y - p_down_y,
            grid,
            s_y_density: s_y,
            density_up: du,
            density_down: dd,
        }
    }

    /// Σ w_i · report_i over scalars and any arrays all members carry.
    pub fn weighted(members: &[(f64, &ObservablesReport)]) -> Self {
        let scalar = |f: fn(&ObservablesReport) -> f64| members.iter().map(|(w, r)| w * f(r)).sum::<f64>();
        let array = |f: fn(&ObservablesReport) -> Option<&Vec<f64>>| -> Option<Vec<f64>> {
            let mut acc: Option<Vec<f64>> = None;
            for (w, r) in members {
                let a = f(r)?;
                let acc = acc.get_or_insert_with(|| vec![0.0; a.len()]);
                if acc.len() != a.len() {
                    return None;
                }
                acc.iter_mut().zip(a).for_each(|(s, v)| *s += w * v);
            }
            acc
        };
        Self {
            s_y_expect: scalar(|r| r.s_y_expect),
            s_z_expect: scalar(|r| r.s_z_expect),
            p_up_y: scalar(|r| r.p_up_y),
            p_down_y: scalar(|r| r.p_down_y),
            polarization: scalar(|r| r.polarization),
            grid: members.first().and_then(|(_, r)| r.grid.clone()),
            s_y_density: array(|r| r.s_y_density.as_ref()),
            density_up: array(|r| r.density_up.as_ref()),
            density_down: array(|r| r.density_down.as_ref()),
        }
    }
}

/// Pointwise |⟨↑_y|ψ⟩|², |⟨↓_y|ψ⟩|² with ⟨↑_y| = (⟨↑_z| − i⟨↓_z|)/√2.
pub fn project_y_densities(psi: &SpinorWavepacket) -> (Vec<f64>, Vec<f64>) {
    let i = Complex64::new(0.0, 1.0);
    psi.up
        .iter()
        .zip(&psi.down)
        .map(|(&u, &d)| (0.5 * (u - i * d).norm_sqr(), 0.5 * (u + i * d).norm_sqr()))
        .unzip()
}

/// 2 Im(ψ₊* ψ₋) at each grid point.
pub fn s_y_density(psi: &SpinorWavepacket) -> Vec<f64> {
    psi.up
        .iter()
        .zip(&psi.down)
        .map(|(u, d)| 2.0 * (u.conj() * d).im)
        .collect()
}

pub fn expectation_s_y_direct(psi: &SpinorWavepacket) -> f64 {
    s_y_density(psi).iter().sum::<f64>() * psi.grid.spacing
}

/// Pre-rotation wavefunctions ψ′± of the pure |↑_z⟩ and |↓_z⟩ inputs, each
/// normalized on its own.
#[derive(Debug, Clone, PartialEq)]
pub struct SpinChannels {
    pub grid: Grid,
    pub up: Vec<Complex64>,
    pub down: Vec<Complex64>,
}

impl SpinChannels {
    /// Takes ψ′₊ from the up component of `up_run` and ψ′₋ from the down
    /// component of `down_run`.
    pub fn from_runs(up_run: &SpinorWavepacket, down_run: &SpinorWavepacket) -> Result<Self> {
        if up_run.grid != down_run.grid {
            return Err(Error::InvalidInput("channel grids differ".into()));
        }
        Ok(Self {
            grid: up_run.grid,
            up: up_run.up.clone(),
            down: down_run.down.clone(),
        })
    }

    fn validate(&self) -> Result<()> {
        let dz = self.grid.spacing;
        for (name, c) in [("up", &self.up), ("down", &self.down)] {
            let n = c.iter().map(|v| v.norm_sqr()).sum::<f64>() * dz;
            if (n - 1.0).abs() > CHANNEL_NORM_TOLERANCE {
                return Err(Error::InvalidInput(format!(
                    "{name} channel norm {n:.12} is not 1"
                )));
            }
            if c.len() != self.grid.len {
                return Err(Error::InvalidInput(format!("{name} channel length mismatch")));
            }
        }
        Ok(())
    }

    /// Overlap ∫|ψ′₊ ψ′₋| dz′.
    pub fn overlap(&self) -> f64 {
        self.up
            .iter()
            .zip(&self.down)
            .map(|(a, b)| a.norm() * b.norm())
            .sum::<f64>()
            * self.grid.spacing
    }
}

/// ⟨S_y⟩ after the polarizing stage from the pre-rotation channels:
/// ∫ [sin 2α (ρ₊₊|ψ′₊|² − ρ₋₋|ψ′₋|²) + 2 cos 2α Im(ρ₋₊ ψ′₊* ψ′₋)] dz′.
pub fn expectation_s_y_analytic(
    channels: &SpinChannels,
    rho: &SpinDensityMatrix,
    stage2: &StagePhaseConfig,
    k_z: f64,
) -> Result<f64> {
    channels.validate()?;
    let (r_uu, r_dd, r_du) = (rho.rho[0][0].re, rho.rho[1][1].re, rho.rho[1][0]);
    let sum: f64 = (0..channels.grid.len)
        .map(|i| {
            let (a, b) = (channels.up[i], channels.down[i]);
            let (s2, c2) = (2.0 * stage2.angle_at(channels.grid.position(i), k_z)).sin_cos();
            s2 * (r_uu * a.norm_sqr() - r_dd * b.norm_sqr()) + 2.0 * c2 * (r_du * a.conj() * b).im
        })
        .sum();
    Ok(sum * channels.grid.spacing)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProbabilityEstimate {
    pub p_up_y: f64,
    pub p_down_y: f64,
    /// |exact − approximate| for either probability: the dropped cross term.
    pub residual: f64,
}

/// P↑y, P↓y from the sin²(α ± π/4) kernels without the spin cross term.
pub fn probabilities_analytic(
    channels: &SpinChannels,
    rho: &SpinDensityMatrix,
    stage2: &StagePhaseConfig,
    k_z: f64,
) -> Result<ProbabilityEstimate> {
    channels.validate()?;
    let (r_uu, r_dd, r_du) = (rho.rho[0][0].re, rho.rho[1][1].re, rho.rho[1][0]);
    let (mut up, mut down, mut cross) = (0.0, 0.0, 0.0);
    for i in 0..channels.grid.len {
        let (a, b) = (channels.up[i], channels.down[i]);
        let alpha = stage2.angle_at(channels.grid.position(i), k_z);
        let plus = (alpha + FRAC_PI_4).sin().powi(2);
        let minus = (alpha - FRAC_PI_4).sin().powi(2);
        up += r_uu * a.norm_sqr() * plus + r_dd * b.norm_sqr() * minus;
        down += r_uu * a.norm_sqr() * minus + r_dd * b.norm_sqr() * plus;
        cross += (2.0 * alpha).cos() * (r_du * a.conj() * b).im;
    }
    let dz = channels.grid.spacing;
    Ok(ProbabilityEstimate {
        p_up_y: up * dz,
        p_down_y: down * dz,
        residual: (cross * dz).abs(),
    })
}

/// arg C₋ − arg C₊ of the first spatial harmonics C± = ∫ρ± e^{−ik_z z′} dz′,
/// wrapped to (−π, π].
pub fn bunch_phase_shift(rho_up: &[f64], rho_down: &[f64], grid: &Grid, k_z: f64) -> Result<f64> {
    if rho_up.len() != grid.len || rho_down.len() != grid.len {
        return Err(Error::InvalidInput("density length does not match grid".into()));
    }
    let harmonic = |rho: &[f64]| -> Result<Complex64> {
        let total: f64 = rho.iter().sum();
        let c: Complex64 = rho
            .iter()
            .enumerate()
            .map(|(i, &r)| Complex64::from_polar(r, -k_z * grid.position(i)))
            .sum();
        let power = if total > 0.0 { c.norm_sqr() / (total * total) } else { 0.0 };
        if !(power >= FEATURELESS_POWER) {
            return Err(Error::UndefinedPhase { power });
        }
        Ok(c)
    };
    let (cu, cd) = (harmonic(rho_up)?, harmonic(rho_down)?);
    let d = wrap_phase(cd.arg() - cu.arg());
    // a shift of exactly half a period can land on −π through rounding
    Ok(if (d + PI).abs() < 1e-12 { PI } else { d })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::coupling::{CouplingCoefficient, CouplingKind};
    use crate::dynamics::{Spinor, Stage};

    fn packet(spin: Spinor, len: usize) -> SpinorWavepacket {
        let grid = Grid {
            origin: 0.0,
            spacing: 1.0 / len as f64,
            len,
        };
        SpinorWavepacket {
            grid,
            up: vec![spin.up; len],
            down: vec![spin.down; len],
            periodic: true,
        }
    }

    #[test]
    fn basis_states() {
        let up_y = packet(Spinor::up_y(), 64);
        let (_, d) = project_y_densities(&up_y);
        assert!(d.iter().all(|v| v.abs() < 1e-15));
        assert!((expectation_s_y_direct(&up_y) - 1.0).abs() < 1e-12);
        let up_z = packet(Spinor::up_z(), 64);
        let r = ObservablesReport::from_wavepacket(&up_z, false);
        assert!(r.s_y_expect.abs() < 1e-15);
        assert!((r.p_up_y - 0.5).abs() < 1e-12 && (r.p_down_y - 0.5).abs() < 1e-12);
        assert!((r.s_z_expect - 1.0).abs() < 1e-12);
    }

    #[test]
    fn report_json_field_names() {
        let r = ObservablesReport::from_wavepacket(&packet(Spinor::up_x(), 64), false);
        let v: serde_json::Value = serde_json::to_value(&r).unwrap();
        for key in ["s_y_expect", "p_up_y", "p_down_y", "polarization"] {
            assert!(v.get(key).is_some(), "{key}");
        }
        assert!(v.get("grid").is_none());
        let with = ObservablesReport::from_wavepacket(&packet(Spinor::up_x(), 64), true);
        let back: ObservablesReport = serde_json::from_str(&serde_json::to_string(&with).unwrap()).unwrap();
        assert_eq!(back, with);
    }

    #[test]
    fn zero_rotation_gives_even_split() {
        let p = packet(Spinor::up_z(), 64);
        let ch = SpinChannels::from_runs(&p, &packet(Spinor::down_z(), 64)).unwrap();
        let stage2 = StagePhaseConfig::new(
            Stage::Polarizing,
            CouplingCoefficient::from_polar(0.0, 0.0, CouplingKind::Magnetic),
        )
        .unwrap();
        let est = probabilities_analytic(&ch, &SpinDensityMatrix::maximally_mixed(), &stage2, 2.0 * PI).unwrap();
        assert!((est.p_up_y - 0.5).abs() < 1e-12 && (est.p_down_y - 0.5).abs() < 1e-12);
    }

    #[test]
    fn uniform_channel_averages_out() {
        let p = packet(Spinor::up_z(), 256);
        let ch = SpinChannels::from_runs(&p, &packet(Spinor::down_z(), 256)).unwrap();
        let stage2 = StagePhaseConfig::new(
            Stage::Polarizing,
            CouplingCoefficient::from_polar(0.7, 0.4, CouplingKind::Magnetic),
        )
        .unwrap();
        let s = expectation_s_y_analytic(&ch, &SpinDensityMatrix::pure(&Spinor::up_z()), &stage2, 2.0 * PI).unwrap();
        assert!(s.abs() < 1e-12, "{s}");
    }

    #[test]
    fn unnormalized_channels_rejected() {
        let mut p = packet(Spinor::up_z(), 64);
        p.up.iter_mut().for_each(|v| *v *= 2.0);
        let ch = SpinChannels::from_runs(&p, &packet(Spinor::down_z(), 64)).unwrap();
        let stage2 = StagePhaseConfig::new(
            Stage::Polarizing,
            CouplingCoefficient::from_polar(0.5, 0.0, CouplingKind::Magnetic),
        )
        .unwrap();
        assert!(matches!(
            expectation_s_y_analytic(&ch, &SpinDensityMatrix::maximally_mixed(), &stage2, 1.0),
            Err(Error::InvalidInput(_))
        ));
    }

    #[test]
    fn phase_shift_of_constructed_trains() {
        let n = 256;
        let grid = Grid {
            origin: -1.5,
            spacing: 3.0 / n as f64,
            len: n,
        };
        let k = 2.0 * PI;
        let up: Vec<f64> = grid.positions().map(|z| 1.0 + 0.6 * (k * z + 0.3).cos()).collect();
        let down: Vec<f64> = grid.positions().map(|z| 1.0 + 0.6 * (k * (z - 0.5) + 0.3).cos()).collect();
        assert!((bunch_phase_shift(&up, &down, &grid, k).unwrap() - PI).abs() < 1e-9);
        assert!(bunch_phase_shift(&up, &up, &grid, k).unwrap().abs() < 1e-12);
        let flat = vec![1.0; n];
        assert!(matches!(
            bunch_phase_shift(&flat, &up, &grid, k),
            Err(Error::UndefinedPhase { .. })
        ));
    }

    #[test]
    fn weighted_average() {
        let a = ObservablesReport::from_wavepacket(&packet(Spinor::up_y(), 32), true);
        let b = ObservablesReport::from_wavepacket(&packet(Spinor::down_y(), 32), true);
        let m = ObservablesReport::weighted(&[(0.25, &a), (0.75, &b)]);
        assert!((m.s_y_expect - (0.25 - 0.75)).abs() < 1e-12);
        assert!((m.p_up_y + m.p_down_y - 1.0).abs() < 1e-12);
        assert_eq!(m.s_y_density.unwrap().len(), 32);
    }
}
