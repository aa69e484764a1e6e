//! Mixed and basis-family initial spin states.
//!
//! A density matrix is split into at most two pure states by
//! eigendecomposition; each runs through the pure pipeline and the
//! observables are weight-averaged.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::dynamics::{propagate_to_polarizer, run_pipeline, PipelineConfig, Spinor};
use crate::error::{Error, Result};
use crate::observables::{expectation_s_y_analytic, ObservablesReport, SpinChannels};

pub const DENSITY_MATRIX_TOLERANCE: f64 = 1e-12;

/// Eigenvalues below this are dropped from the pure-state split.
const NEGLIGIBLE_WEIGHT: f64 = 1e-15;

/// 2×2 spin density matrix in the z basis, `rho[0]` ↔ ↑_z.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SpinDensityMatrix {
    pub rho: [[Complex64; 2]; 2],
}

impl SpinDensityMatrix {
    pub fn new(rho: [[Complex64; 2]; 2]) -> Result<Self> {
        let m = Self { rho };
        m.validate()?;
        Ok(m)
    }

    pub fn validate(&self) -> Result<()> {
        let r = &self.rho;
        let tol = DENSITY_MATRIX_TOLERANCE;
        if r.iter().flatten().any(|c| !c.re.is_finite() || !c.im.is_finite()) {
            return Err(Error::InvalidInput("density matrix has non-finite entries".into()));
        }
        if r[0][0].im.abs() > tol || r[1][1].im.abs() > tol || (r[0][1] - r[1][0].conj()).norm() > tol {
            return Err(Error::InvalidInput("density matrix is not Hermitian".into()));
        }
        let trace = r[0][0].re + r[1][1].re;
        if (trace - 1.0).abs() > tol {
            return Err(Error::InvalidInput(format!("density matrix trace {trace} is not 1")));
        }
        let (hi, lo) = self.eigenvalues();
        if lo < -tol || hi > 1.0 + tol {
            return Err(Error::InvalidInput(format!(
                "density matrix eigenvalues ({lo}, {hi}) outside [0, 1]"
            )));
        }
        Ok(())
    }

    pub fn maximally_mixed() -> Self {
        let h = Complex64::new(0.5, 0.0);
        let z = Complex64::new(0.0, 0.0);
        Self { rho: [[h, z], [z, h]] }
    }

    pub fn pure(spin: &Spinor) -> Self {
        let (u, d) = (spin.up, spin.down);
        let n = u.norm_sqr() + d.norm_sqr();
        Self {
            rho: [
                [u * u.conj() / n, u * d.conj() / n],
                [d * u.conj() / n, d * d.conj() / n],
            ],
        }
    }

    /// ρ = (𝟙 + r·σ)/2 for |r| ≤ 1.
    pub fn from_bloch(r: [f64; 3]) -> Result<Self> {
        let len = (r[0] * r[0] + r[1] * r[1] + r[2] * r[2]).sqrt();
        if !(len <= 1.0 + DENSITY_MATRIX_TOLERANCE) {
            return Err(Error::InvalidInput(format!("Bloch vector length {len} exceeds 1")));
        }
        Ok(Self {
            rho: [
                [Complex64::new(0.5 * (1.0 + r[2]), 0.0), Complex64::new(0.5 * r[0], -0.5 * r[1])],
                [Complex64::new(0.5 * r[0], 0.5 * r[1]), Complex64::new(0.5 * (1.0 - r[2]), 0.0)],
            ],
        })
    }

    pub fn bloch_vector(&self) -> [f64; 3] {
        let b = self.rho[1][0];
        [2.0 * b.re, 2.0 * b.im, self.rho[0][0].re - self.rho[1][1].re]
    }

    /// α·self + (1 − α)·other
    pub fn mix(&self, alpha: f64, other: &Self) -> Self {
        let mut rho = self.rho;
        for (row, orow) in rho.iter_mut().zip(&other.rho) {
            for (v, o) in row.iter_mut().zip(orow) {
                *v = alpha * *v + (1.0 - alpha) * o;
            }
        }
        Self { rho }
    }

    /// (larger, smaller)
    pub fn eigenvalues(&self) -> (f64, f64) {
        let (a, d, b) = (self.rho[0][0].re, self.rho[1][1].re, self.rho[1][0]);
        let mean = 0.5 * (a + d);
        let r = (0.25 * (a - d) * (a - d) + b.norm_sqr()).sqrt();
        (mean + r, mean - r)
    }

    /// Weighted pure states summing to ρ. Diagonal (including degenerate)
    /// matrices split along the z basis, ↑_z first.
    pub fn pure_states(&self) -> Vec<(f64, Spinor)> {
        let (a, d, b) = (self.rho[0][0].re, self.rho[1][1].re, self.rho[1][0]);
        let states = if b.norm() < DENSITY_MATRIX_TOLERANCE * 1e-3 {
            vec![(a, Spinor::up_z()), (d, Spinor::down_z())]
        } else {
            let (hi, lo) = self.eigenvalues();
            [hi, lo]
                .into_iter()
                .map(|l| {
                    // (ρ − λ)v = 0 from either row; take the better conditioned
                    let v1 = (b.conj(), Complex64::new(l - a, 0.0));
                    let v2 = (Complex64::new(l - d, 0.0), b);
                    let n1 = v1.0.norm_sqr() + v1.1.norm_sqr();
                    let n2 = v2.0.norm_sqr() + v2.1.norm_sqr();
                    let (u, w) = if n1 >= n2 { v1 } else { v2 };
                    let spin = Spinor::new(u, w).expect("eigenvector of a valid density matrix");
                    (l, spin)
                })
                .collect()
        };
        states
            .into_iter()
            .filter(|(w, _)| *w > NEGLIGIBLE_WEIGHT)
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Basis {
    X,
    Y,
    Z,
}

impl Basis {
    pub fn pair(self) -> [Spinor; 2] {
        match self {
            Basis::X => [Spinor::up_x(), Spinor::down_x()],
            Basis::Y => [Spinor::up_y(), Spinor::down_y()],
            Basis::Z => [Spinor::up_z(), Spinor::down_z()],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnsembleMember {
    pub spin: Spinor,
    pub weight: f64,
    pub report: ObservablesReport,
    /// |ψ₊|² − |ψ₋|² after modulation and drift.
    pub spin_z_density: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnsembleResult {
    pub grid: Vec<f64>,
    pub members: Vec<EnsembleMember>,
    pub average: ObservablesReport,
}

impl EnsembleResult {
    pub fn weights(&self) -> Vec<f64> {
        self.members.iter().map(|m| m.weight).collect()
    }
}

fn run_members(states: &[(f64, Spinor)], cfg: &PipelineConfig, with_arrays: bool) -> Result<EnsembleResult> {
    let mut members = Vec::with_capacity(states.len());
    let mut grid = Vec::new();
    for &(weight, spin) in states {
        let run = run_pipeline(cfg, &spin)?;
        if grid.is_empty() {
            grid = run.output.grid.positions().collect();
        }
        members.push(EnsembleMember {
            spin,
            weight,
            report: ObservablesReport::from_wavepacket(&run.output, with_arrays),
            spin_z_density: run.drifted.spin_z_density(),
        });
    }
    let weighted: Vec<(f64, &ObservablesReport)> = members.iter().map(|m| (m.weight, &m.report)).collect();
    let average = ObservablesReport::weighted(&weighted);
    Ok(EnsembleResult { grid, members, average })
}

pub fn run_mixed(rho: &SpinDensityMatrix, cfg: &PipelineConfig) -> Result<ObservablesReport> {
    rho.validate()?;
    Ok(run_members(&rho.pure_states(), cfg, false)?.average)
}

/// As [`run_mixed`], keeping per-member results and density arrays.
pub fn run_mixed_detailed(rho: &SpinDensityMatrix, cfg: &PipelineConfig) -> Result<EnsembleResult> {
    rho.validate()?;
    run_members(&rho.pure_states(), cfg, true)
}

/// Unpolarized ½/½ pair quantized along `basis`.
pub fn run_basis_family(basis: Basis, cfg: &PipelineConfig) -> Result<EnsembleResult> {
    let [a, b] = basis.pair();
    run_members(&[(0.5, a), (0.5, b)], cfg, true)
}

/// Pre-rotation channels ψ′± from |↑_z⟩ and |↓_z⟩ runs.
pub fn spin_channels(cfg: &PipelineConfig) -> Result<SpinChannels> {
    let (_, _, up) = propagate_to_polarizer(cfg, &Spinor::up_z())?;
    let (_, _, down) = propagate_to_polarizer(cfg, &Spinor::down_z())?;
    SpinChannels::from_runs(&up, &down)
}

/// ⟨S_y⟩ of a mixed input through the analytic rotation kernels.
pub fn run_mixed_analytic(rho: &SpinDensityMatrix, cfg: &PipelineConfig) -> Result<f64> {
    rho.validate()?;
    expectation_s_y_analytic(&spin_channels(cfg)?, rho, &cfg.stage2, cfg.scales.wavenumber)
}
