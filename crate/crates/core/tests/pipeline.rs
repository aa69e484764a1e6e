use std::f64::consts::PI;

use num_complex::Complex64;
use proptest::prelude::*;

use spinpol::dynamics::{run_pipeline, Envelope, PacketSpec, PipelineConfig, Spinor, Stage, StagePhaseConfig};
use spinpol::ensemble::{run_mixed, run_mixed_analytic, SpinDensityMatrix};
use spinpol::observables::{expectation_s_y_direct, probabilities_analytic};
use spinpol::sweep::{confirmation_cells, gaussian_confirmation, run_sweep, Axis, SweepParameter, SweepSpec};

fn s_y(cfg: &PipelineConfig) -> f64 {
    run_mixed(&SpinDensityMatrix::maximally_mixed(), cfg).unwrap().s_y_expect
}

#[test]
fn zero_couplings_leave_spin_untouched() {
    let base = PipelineConfig::canonical();
    let cfg = PipelineConfig {
        stage1: base.stage1.with_magnitude(0.0).unwrap(),
        stage2: base.stage2.with_magnitude(0.0).unwrap(),
        ..base
    };
    let run = run_pipeline(&cfg, &Spinor::up_y()).unwrap();
    assert!((expectation_s_y_direct(&run.output) - 1.0).abs() < 1e-12);
    assert!(s_y(&cfg).abs() < 1e-12);
}

#[test]
fn no_drift_no_polarization() {
    let base = PipelineConfig::canonical();
    let cfg = PipelineConfig {
        drift_length: 0.0,
        ..base
    };
    assert!(s_y(&cfg).abs() < 1e-12);
}

#[test]
fn full_revival_no_polarization() {
    let base = PipelineConfig::canonical();
    let cfg = PipelineConfig {
        drift_length: base.scales.revival_length,
        ..base
    };
    assert!(s_y(&cfg).abs() < 1e-10);
}

#[test]
fn analytic_probabilities_match_canonical() {
    let cfg = PipelineConfig::canonical();
    let rho = SpinDensityMatrix::maximally_mixed();
    let est = probabilities_analytic(&spinpol::ensemble::spin_channels(&cfg).unwrap(), &rho, &cfg.stage2, cfg.scales.wavenumber)
        .unwrap();
    let direct = run_mixed(&rho, &cfg).unwrap();
    assert!((est.p_up_y - direct.p_up_y).abs() < 1e-10);
    assert!((est.p_up_y + est.p_down_y - 1.0).abs() < 1e-12);
}

#[test]
fn wide_gaussian_tracks_periodic() {
    let base = PipelineConfig::canonical();
    let wide = PipelineConfig {
        packet: PacketSpec {
            envelope: Envelope::Gaussian {
                sigma_z: Some(2e-6),
                window: None,
            },
            ..PacketSpec::default()
        },
        ..base.clone()
    };
    assert!((s_y(&base) - s_y(&wide)).abs() < 5e-3);
}

#[test]
fn minimal_gaussian_is_accepted() {
    let base = PipelineConfig::canonical();
    let cfg = PipelineConfig {
        packet: PacketSpec {
            envelope: Envelope::Gaussian {
                sigma_z: None,
                window: None,
            },
            ..PacketSpec::default()
        },
        ..base
    };
    let r = run_mixed(&SpinDensityMatrix::maximally_mixed(), &cfg).unwrap();
    assert!(r.s_y_expect.abs() <= 1.0);
}

#[test]
fn gaussian_confirmation_of_small_sweep() {
    let base = PipelineConfig::canonical();
    let spec = SweepSpec {
        axis1: Axis::new(SweepParameter::Coupling, 0.25, 1.0, 4).unwrap(),
        axis2: Axis::new(SweepParameter::DriftFraction, 0.25, 0.75, 3).unwrap(),
        threads: Some(2),
    };
    let map = run_sweep(&spec, &base).unwrap();
    let checks = gaussian_confirmation(&map, &base, &confirmation_cells(4, 3), 2e-6).unwrap();
    assert_eq!(checks.len(), 5);
    for c in checks {
        assert!(c.difference() < 1e-2);
    }
}

fn spinor(a: f64, b: f64, c: f64, d: f64) -> Option<Spinor> {
    Spinor::new(Complex64::new(a, b), Complex64::new(c, d)).ok()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn analytic_equals_direct(
        g1 in 0.0f64..2.0, g2 in 0.0f64..2.0, p1 in -PI..PI, p2 in -PI..PI, f in 0.0f64..1.0,
        x in -1.0f64..1.0, y in -1.0f64..1.0, z in -1.0f64..1.0, r in 0.0f64..1.0,
    ) {
        let base = PipelineConfig::canonical();
        let cfg = PipelineConfig {
            stage1: StagePhaseConfig::from_drive(Stage::Modulation, g1, p1).unwrap(),
            stage2: StagePhaseConfig::from_drive(Stage::Polarizing, g2, p2).unwrap(),
            drift_length: base.scales.drift_length(f),
            ..base
        };
        let len = (x * x + y * y + z * z).sqrt().max(1e-9);
        let rho = SpinDensityMatrix::from_bloch([x / len * r, y / len * r, z / len * r]).unwrap();
        let direct = run_mixed(&rho, &cfg).unwrap().s_y_expect;
        let analytic = run_mixed_analytic(&rho, &cfg).unwrap();
        prop_assert!((direct - analytic).abs() < 1e-9);
    }

    #[test]
    fn s_y_linear_in_rho(
        a in -1.0f64..1.0, b in -1.0f64..1.0, c in -1.0f64..1.0, d in -1.0f64..1.0, w in 0.0f64..1.0,
    ) {
        let Some(spin) = spinor(a, b, c, d) else { return Ok(()) };
        let cfg = PipelineConfig::canonical();
        let p = SpinDensityMatrix::pure(&spin);
        let m = SpinDensityMatrix::maximally_mixed();
        let mixed = s_y_of(&p.mix(w, &m), &cfg);
        let combo = w * s_y_of(&p, &cfg) + (1.0 - w) * s_y_of(&m, &cfg);
        prop_assert!((mixed - combo).abs() < 1e-10);
    }

    #[test]
    fn phase_offset_by_pi_negates(phase in -PI..PI) {
        let base = PipelineConfig::canonical();
        let a = s_y(&base.with_relative_phase(phase).unwrap());
        let b = s_y(&base.with_relative_phase(phase + PI).unwrap());
        prop_assert!((a + b).abs() < 1e-10);
    }

    #[test]
    fn polarization_bounded(g in 0.0f64..2.0, f in 0.0f64..1.0) {
        let base = PipelineConfig::canonical();
        let cfg = PipelineConfig {
            stage1: base.stage1.with_magnitude(g).unwrap(),
            stage2: base.stage2.with_magnitude(g).unwrap(),
            drift_length: base.scales.drift_length(f),
            ..base
        };
        let r = run_mixed(&SpinDensityMatrix::maximally_mixed(), &cfg).unwrap();
        prop_assert!(r.s_y_expect.abs() <= 1.0 + 1e-12);
        prop_assert!((r.p_up_y + r.p_down_y - 1.0).abs() < 1e-10);
    }
}

fn s_y_of(rho: &SpinDensityMatrix, cfg: &PipelineConfig) -> f64 {
    run_mixed(rho, cfg).unwrap().s_y_expect
}
