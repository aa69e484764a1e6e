//! Invariant suite: every module's properties checked at fixed seeds and
//! grids, collected into a machine-readable report.

use std::f64::consts::PI;

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::coupling::{
    lorentz_coupling, stage_coupling_from_field, FieldCalibration, LongitudinalFieldProfile,
};
use crate::dynamics::{
    apply_drift, apply_modulation_stage, apply_polarizing_stage, init_packet, modulated_drifted_series,
    modulation_factor_series, polarizing_operator_closed, polarizing_operator_series, propagate_to_polarizer,
    PipelineConfig, Spinor, SpinorWavepacket, Stage, StagePhaseConfig,
};
use crate::ensemble::{run_basis_family, run_mixed, spin_channels, Basis, SpinDensityMatrix};
use crate::error::Result;
use crate::nearfields::{classify_center_mode, field_at, DriveConfig, ModeKind};
use crate::observables::{
    bunch_phase_shift, expectation_s_y_analytic, expectation_s_y_direct, s_y_density, ObservablesReport,
};
use crate::physconst::{derive_scales, DerivedScales, BOHR_MAGNETON, ELECTRON_MASS, HBAR, PLANCK, SPEED_OF_LIGHT};
use crate::pinem::{pinem_modulated_density, pinem_modulated_density_half_range, PinemConfig, TransverseBeam};
use crate::sweep::{run_sweep, Axis, SweepParameter, SweepSpec};

/// Polarizing-stage operator used by the direct side of the analytic check.
pub type PolarizingOperator = fn(&SpinorWavepacket, &StagePhaseConfig, f64) -> Result<SpinorWavepacket>;

#[derive(Debug, Clone, Copy)]
pub struct ValidationOptions {
    pub seed: u64,
    pub draws: usize,
    pub polarizing_operator: PolarizingOperator,
}

impl Default for ValidationOptions {
    fn default() -> Self {
        Self {
            seed: 20240521,
            draws: 20,
            polarizing_operator: apply_polarizing_stage,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InvariantCheck {
    pub module: String,
    pub id: String,
    pub observed: f64,
    pub bound: f64,
    pub passed: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub detail: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub seed: u64,
    pub draws: usize,
    pub passed: bool,
    pub checks: Vec<InvariantCheck>,
}

impl ValidationReport {
    pub fn failures(&self) -> impl Iterator<Item = &InvariantCheck> {
        self.checks.iter().filter(|c| !c.passed)
    }

    pub fn check(&self, id: &str) -> Option<&InvariantCheck> {
        self.checks.iter().find(|c| c.id == id)
    }
}

/// Outcome of one check: observed value against a bound.
enum Bound {
    /// observed ≤ bound
    AtMost(f64),
    /// observed ≥ bound
    AtLeast(f64),
}

struct Suite {
    checks: Vec<InvariantCheck>,
}

impl Suite {
    fn record(&mut self, module: &str, id: &str, bound: Bound, f: impl FnOnce() -> Result<f64>) {
        let (limit, ok): (f64, fn(f64, f64) -> bool) = match bound {
            Bound::AtMost(b) => (b, |o, b| o <= b),
            Bound::AtLeast(b) => (b, |o, b| o >= b),
        };
        let check = match f() {
            Ok(observed) => InvariantCheck {
                module: module.into(),
                id: id.into(),
                observed,
                bound: limit,
                passed: ok(observed, limit),
                detail: None,
            },
            Err(e) => InvariantCheck {
                module: module.into(),
                id: id.into(),
                observed: f64::NAN,
                bound: limit,
                passed: false,
                detail: Some(e.to_string()),
            },
        };
        self.checks.push(check);
    }
}

struct Draw {
    g1: f64,
    g2: f64,
    phi1: f64,
    phi2: f64,
    fraction: f64,
    spin: Spinor,
    bloch: [f64; 3],
}

fn draw(rng: &mut ChaCha8Rng) -> Draw {
    let mut c = || Complex64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0));
    let (up, down) = (c(), c());
    let spin = Spinor::new(up, down).unwrap_or_else(|_| Spinor::up_z());
    let (theta, phi, r): (f64, f64, f64) = (rng.gen_range(0.0..PI), rng.gen_range(-PI..PI), rng.gen_range(0.0..1.0));
    Draw {
        g1: rng.gen_range(0.0..2.0),
        g2: rng.gen_range(0.0..2.0),
        phi1: rng.gen_range(-PI..PI),
        phi2: rng.gen_range(-PI..PI),
        fraction: rng.gen_range(0.0..1.0),
        spin,
        bloch: [r * theta.sin() * phi.cos(), r * theta.sin() * phi.sin(), r * theta.cos()],
    }
}

fn drawn_config(base: &PipelineConfig, d: &Draw) -> Result<PipelineConfig> {
    Ok(PipelineConfig {
        stage1: StagePhaseConfig::from_drive(Stage::Modulation, d.g1, d.phi1)?,
        stage2: StagePhaseConfig::from_drive(Stage::Polarizing, d.g2, d.phi2)?,
        drift_length: base.scales.drift_length(d.fraction),
        ..base.clone()
    })
}

fn max_abs(values: impl IntoIterator<Item = f64>) -> f64 {
    values.into_iter().fold(0.0, |m, v| if v.is_nan() { f64::NAN } else { m.max(v.abs()) })
}

/// |analytic − direct| for ρ over a drawn configuration, the direct side
/// going through `op`.
pub fn analytic_direct_gap(
    cfg: &PipelineConfig,
    rho: &SpinDensityMatrix,
    op: PolarizingOperator,
) -> Result<f64> {
    let analytic = expectation_s_y_analytic(&spin_channels(cfg)?, rho, &cfg.stage2, cfg.scales.wavenumber)?;
    let mut direct = 0.0;
    for (w, spin) in rho.pure_states() {
        let (_, _, drifted) = propagate_to_polarizer(cfg, &spin)?;
        direct += w * expectation_s_y_direct(&op(&drifted, &cfg.stage2, cfg.scales.wavenumber)?);
    }
    Ok((analytic - direct).abs())
}

/// ∫ min(|ψ₊|², |ψ₋|²) dz′ of the |↑_x⟩ input after stage 1 and a drift.
pub fn spin_overlap(cfg: &PipelineConfig, fraction: f64) -> Result<f64> {
    let c = PipelineConfig {
        drift_length: cfg.scales.drift_length(fraction),
        ..cfg.clone()
    };
    let (_, _, d) = propagate_to_polarizer(&c, &Spinor::up_x())?;
    Ok(d.density_up()
        .iter()
        .zip(d.density_down())
        .map(|(a, b)| a.min(b))
        .sum::<f64>()
        * d.grid.spacing)
}

fn report_gap(a: &ObservablesReport, b: &ObservablesReport) -> f64 {
    max_abs([
        a.s_y_expect - b.s_y_expect,
        a.s_z_expect - b.s_z_expect,
        a.p_up_y - b.p_up_y,
        a.p_down_y - b.p_down_y,
        a.polarization - b.polarization,
    ])
}

pub fn run_validation(opts: &ValidationOptions) -> ValidationReport {
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let draws: Vec<Draw> = (0..opts.draws).map(|_| draw(&mut rng)).collect();
    let base = PipelineConfig::canonical();
    let scales: DerivedScales = base.scales;
    let k = scales.wavenumber;
    let mut s = Suite { checks: Vec::new() };

    s.record("physconst", "physconst.grating_period", Bound::AtMost(1e-15), || {
        Ok((scales.grating_period / 240e-9 - 1.0).abs())
    });
    s.record("physconst", "physconst.revival_length", Bound::AtMost(1e-9), || {
        let (b, g) = (0.1_f64, 1.0 / (1.0 - 0.01_f64).sqrt());
        let hand = (b * g).powi(3) * ELECTRON_MASS * SPEED_OF_LIGHT * 2.4e-6 * 2.4e-6 / PLANCK;
        Ok((scales.revival_length / hand - 1.0).abs())
    });
    s.record("physconst", "physconst.deterministic_scales", Bound::AtMost(0.0), || {
        let again = derive_scales(&base.beam, &crate::dynamics::canonical_laser())?;
        Ok(if again == scales { 0.0 } else { 1.0 })
    });

    s.record("nearfields", "nearfields.center_modes", Bound::AtMost(0.0), || {
        let m = classify_center_mode(&DriveConfig::modulation(1.0, k)) == ModeKind::CoshBz;
        let p = classify_center_mode(&DriveConfig::polarizing(1.0, k)) == ModeKind::SinhBz;
        Ok(if m && p { 0.0 } else { 1.0 })
    });
    s.record("nearfields", "nearfields.linearity", Bound::AtMost(1e-12), || {
        let one = field_at(&DriveConfig::modulation(1.0, k), 30e-9, scales.omega, k);
        let many = field_at(&DriveConfig::modulation(3.5, k), 30e-9, scales.omega, k);
        Ok(max_abs([
            (many.e_y - one.e_y * 3.5).norm() / many.e_y.norm(),
            (many.b_z - one.b_z * 3.5).norm() / many.b_z.norm(),
        ]))
    });

    s.record("coupling", "coupling.phase_matched_magnitude", Bound::AtMost(1e-6), || {
        let cal = FieldCalibration::default();
        let g = stage_coupling_from_field(550e6, 0.35, 12.7e-6, &scales, &cal)?;
        let b1 = cal.channel_amplitude(550e6, 0.35) / scales.velocity;
        let analytic = BOHR_MAGNETON * b1 * 12.7e-6 / (HBAR * scales.velocity);
        Ok((g.magnitude() / analytic - 1.0).abs())
    });
    s.record("coupling", "coupling.lorentz_on_axis", Bound::AtMost(1e-12), || {
        let e = field_at(&DriveConfig::modulation(3.85e8, k), 0.0, scales.omega, k).e_y;
        let p = LongitudinalFieldProfile::phase_matched(e, k, 12.7e-6)?;
        Ok(lorentz_coupling(&p, k, scales.omega)?.magnitude())
    });

    s.record("dynamics", "dynamics.unitarity", Bound::AtMost(1e-10), || {
        let mut worst: f64 = 0.0;
        for d in &draws {
            let cfg = drawn_config(&base, d)?;
            let psi = init_packet(&cfg.beam, &cfg.scales, &cfg.packet, &d.spin)?;
            let m = apply_modulation_stage(&psi, &cfg.stage1, k)?;
            let dr = apply_drift(&m, cfg.drift_length, &scales)?;
            let out = apply_polarizing_stage(&dr, &cfg.stage2, k)?;
            worst = worst.max(max_abs([m.norm() - 1.0, dr.norm() - 1.0, out.norm() - 1.0]));
        }
        Ok(worst)
    });
    s.record("dynamics", "dynamics.stage1_sz", Bound::AtMost(1e-12), || {
        let mut worst: f64 = 0.0;
        for d in &draws {
            let cfg = drawn_config(&base, d)?;
            let psi = init_packet(&cfg.beam, &cfg.scales, &cfg.packet, &d.spin)?;
            let m = apply_modulation_stage(&psi, &cfg.stage1, k)?;
            worst = worst.max((m.s_z() - psi.s_z()).abs());
        }
        Ok(worst)
    });
    s.record("dynamics", "dynamics.jacobi_anger_modulation", Bound::AtMost(1e-10), || {
        let mut worst: f64 = 0.0;
        for g in [0.5, 1.5] {
            let cfg = StagePhaseConfig::from_drive(Stage::Modulation, g, 0.7)?;
            for i in 0..64 {
                let z = scales.grating_period * i as f64 / 64.0;
                let exact = Complex64::from_polar(1.0, cfg.angle_at(z, k));
                worst = worst
                    .max((modulation_factor_series(&cfg, z, k, true) - exact).norm())
                    .max((modulation_factor_series(&cfg, z, k, false) - exact.conj()).norm());
            }
        }
        Ok(worst)
    });
    s.record("dynamics", "dynamics.jacobi_anger_polarizing", Bound::AtMost(1e-10), || {
        let mut worst: f64 = 0.0;
        for g in [0.5, 1.5] {
            let cfg = StagePhaseConfig::from_drive(Stage::Polarizing, g, -0.4)?;
            for i in 0..64 {
                let z = scales.grating_period * i as f64 / 64.0;
                let (a, b) = (polarizing_operator_closed(&cfg, z, k), polarizing_operator_series(&cfg, z, k));
                for r in 0..2 {
                    for c in 0..2 {
                        worst = worst.max((a[r][c] - b[r][c]).norm());
                    }
                }
            }
        }
        Ok(worst)
    });
    s.record("dynamics", "dynamics.drift_order_phase", Bound::AtMost(1e-8), || {
        let cfg = StagePhaseConfig::from_drive(Stage::Modulation, 0.5, 0.3)?;
        let psi = init_packet(&base.beam, &scales, &base.packet, &Spinor::up_z())?;
        let m = apply_modulation_stage(&psi, &cfg, k)?;
        let amp = (1.0 / psi.grid.window()).sqrt();
        let mut worst: f64 = 0.0;
        for f in [0.25, 0.5, 0.8] {
            let d = apply_drift(&m, scales.drift_length(f), &scales)?;
            for (i, z) in psi.grid.positions().enumerate() {
                let series = modulated_drifted_series(&cfg, z, k, true, f) * amp;
                worst = worst.max((d.up[i] - series).norm() / amp);
            }
        }
        Ok(worst)
    });
    s.record("dynamics", "dynamics.gauge_2pi", Bound::AtMost(1e-12), || {
        let mut worst: f64 = 0.0;
        for d in draws.iter().take(5) {
            let a = drawn_config(&base, d)?;
            let shifted = Draw {
                phi1: d.phi1 + 2.0 * PI,
                phi2: d.phi2 - 2.0 * PI,
                ..*d
            };
            let b = drawn_config(&base, &shifted)?;
            let (ra, rb) = (
                crate::dynamics::run_pipeline(&a, &d.spin)?.output,
                crate::dynamics::run_pipeline(&b, &d.spin)?.output,
            );
            let scale = (1.0 / ra.grid.window()).sqrt();
            for (x, y) in ra.up.iter().chain(&ra.down).zip(rb.up.iter().chain(&rb.down)) {
                worst = worst.max((x - y).norm() / scale);
            }
        }
        Ok(worst)
    });
    s.record("dynamics", "dynamics.pi_shift", Bound::AtMost(0.05), || {
        let (_, _, d) = propagate_to_polarizer(&base, &Spinor::up_x())?;
        Ok((bunch_phase_shift(&d.density_up(), &d.density_down(), &d.grid, k)?.abs() - PI).abs())
    });
    s.record("dynamics", "dynamics.minimal_overlap", Bound::AtLeast(f64::MIN_POSITIVE), || {
        let mid = spin_overlap(&base, 0.5)?;
        Ok(spin_overlap(&base, 0.1)?.min(spin_overlap(&base, 0.9)?) - mid)
    });

    s.record("observables", "observables.analytic_direct", Bound::AtMost(1e-8), || {
        let mut worst: f64 = 0.0;
        for d in &draws {
            let cfg = drawn_config(&base, d)?;
            worst = worst
                .max(analytic_direct_gap(&cfg, &SpinDensityMatrix::pure(&d.spin), opts.polarizing_operator)?)
                .max(analytic_direct_gap(&cfg, &SpinDensityMatrix::from_bloch(d.bloch)?, opts.polarizing_operator)?);
        }
        Ok(worst)
    });
    let pipeline_reports = || -> Result<Vec<(ObservablesReport, f64)>> {
        draws
            .iter()
            .map(|d| {
                let out = crate::dynamics::run_pipeline(&drawn_config(&base, d)?, &d.spin)?.output;
                let density_integral = s_y_density(&out).iter().sum::<f64>() * out.grid.spacing;
                Ok((ObservablesReport::from_wavepacket(&out, false), density_integral))
            })
            .collect()
    };
    s.record("observables", "observables.probability_sum", Bound::AtMost(1e-10), || {
        Ok(max_abs(pipeline_reports()?.iter().map(|(r, _)| r.p_up_y + r.p_down_y - 1.0)))
    });
    s.record("observables", "observables.polarization_is_s_y", Bound::AtMost(1e-10), || {
        Ok(max_abs(pipeline_reports()?.iter().map(|(r, _)| r.polarization - r.s_y_expect)))
    });
    s.record("observables", "observables.s_y_density_integral", Bound::AtMost(1e-10), || {
        Ok(max_abs(pipeline_reports()?.iter().map(|(r, i)| r.s_y_expect - i)))
    });
    s.record("observables", "observables.s_y_bounded", Bound::AtMost(1.0 + 1e-12), || {
        Ok(max_abs(pipeline_reports()?.iter().map(|(r, _)| r.s_y_expect)))
    });
    s.record("observables", "observables.phase_flip", Bound::AtMost(1e-6), || {
        let rho = SpinDensityMatrix::maximally_mixed();
        let a = run_mixed(&rho, &base.with_relative_phase(PI / 2.0)?)?.s_y_expect;
        let b = run_mixed(&rho, &base.with_relative_phase(-PI / 2.0)?)?.s_y_expect;
        Ok(if a.signum() == b.signum() { f64::INFINITY } else { (a + b).abs() })
    });

    s.record("ensemble", "ensemble.basis_independence", Bound::AtMost(1e-6), || {
        let mixed = run_mixed(&SpinDensityMatrix::maximally_mixed(), &base)?.s_y_expect;
        let mut worst: f64 = 0.0;
        for b in [Basis::X, Basis::Y, Basis::Z] {
            worst = worst.max((run_basis_family(b, &base)?.average.s_y_expect - mixed).abs());
        }
        Ok(worst)
    });
    s.record("ensemble", "ensemble.linearity", Bound::AtMost(1e-10), || {
        let mut worst: f64 = 0.0;
        for pair in draws.chunks(2).take(4) {
            let [a, b] = pair else { continue };
            let cfg = drawn_config(&base, a)?;
            let (r1, r2) = (SpinDensityMatrix::from_bloch(a.bloch)?, SpinDensityMatrix::from_bloch(b.bloch)?);
            let alpha = 0.3;
            let mixed = run_mixed(&r1.mix(alpha, &r2), &cfg)?;
            let (o1, o2) = (run_mixed(&r1, &cfg)?, run_mixed(&r2, &cfg)?);
            let combined = ObservablesReport::weighted(&[(alpha, &o1), (1.0 - alpha, &o2)]);
            worst = worst.max(report_gap(&mixed, &combined));
        }
        Ok(worst)
    });
    s.record("ensemble", "ensemble.pure_projector", Bound::AtMost(1e-10), || {
        let mut worst: f64 = 0.0;
        for d in draws.iter().take(5) {
            let cfg = drawn_config(&base, d)?;
            let pure = ObservablesReport::from_wavepacket(&crate::dynamics::run_pipeline(&cfg, &d.spin)?.output, false);
            worst = worst.max(report_gap(&run_mixed(&SpinDensityMatrix::pure(&d.spin), &cfg)?, &pure));
        }
        Ok(worst)
    });

    let pinem_cfg = |sx: f64, sy: f64| -> Result<PinemConfig> {
        Ok(PinemConfig::device(TransverseBeam::new(sx, sy)?, 2.0 * 0.35 * 550e6, 12.7e-6, &scales))
    };
    s.record("pinem", "pinem.half_range", Bound::AtMost(1e-8), || {
        let cfg = pinem_cfg(20e-9, 30e-9)?;
        let (a, b) = (pinem_modulated_density(&cfg, &scales)?, pinem_modulated_density_half_range(&cfg, &scales)?);
        Ok(max_abs(a.density.iter().zip(&b.density).map(|(x, y)| x - y)))
    });
    s.record("pinem", "pinem.zero_field", Bound::AtMost(0.0), || {
        let mut cfg = pinem_cfg(40e-9, 10e-9)?;
        cfg.drive.channel_amplitude = 0.0;
        Ok(pinem_modulated_density(&cfg, &scales)?.contrast)
    });
    s.record("pinem", "pinem.monotone_sigma_x", Bound::AtMost(0.0), || {
        let mut worst: f64 = 0.0;
        for sy in [10e-9, 100e-9] {
            let mut prev = f64::INFINITY;
            for sx in [40e-9, 20e-9, 8e-9, 2e-9] {
                let c = pinem_modulated_density(&pinem_cfg(sx, sy)?, &scales)?.contrast;
                worst = worst.max(c - prev);
                prev = c;
            }
        }
        Ok(worst)
    });

    let small_spec = |threads| -> Result<SweepSpec> {
        Ok(SweepSpec {
            axis1: Axis::new(SweepParameter::Coupling, 0.0, 2.0, 6)?,
            axis2: Axis::new(SweepParameter::DriftFraction, 0.0, 1.0, 5)?,
            threads: Some(threads),
        })
    };
    s.record("sweep", "sweep.determinism", Bound::AtMost(0.0), || {
        let a = run_sweep(&small_spec(1)?, &base)?;
        let b = run_sweep(&small_spec(3)?, &base)?;
        Ok(if a.s_y == b.s_y { 0.0 } else { 1.0 })
    });
    s.record("sweep", "sweep.phase_symmetry", Bound::AtMost(1e-6), || {
        let a = run_sweep(&small_spec(2)?, &base.with_relative_phase(PI / 2.0)?)?;
        let b = run_sweep(&small_spec(2)?, &base.with_relative_phase(-PI / 2.0)?)?;
        Ok(max_abs(a.s_y.iter().flatten().zip(b.s_y.iter().flatten()).map(|(x, y)| x + y)))
    });
    s.record("sweep", "sweep.bounded", Bound::AtMost(1.0 + 1e-12), || {
        Ok(max_abs(run_sweep(&small_spec(2)?, &base)?.s_y.into_iter().flatten()))
    });

    let passed = s.checks.iter().all(|c| c.passed);
    ValidationReport {
        seed: opts.seed,
        draws: opts.draws,
        passed,
        checks: s.checks,
    }
}
