use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;

use spinpol::coupling::wrap_phase;
use spinpol::dynamics::{run_pipeline, Spinor};
use spinpol::ensemble::spin_channels;
use spinpol::export::{heat_map_csv, pinem_grid_csv, CsvTable};
use spinpol::observables::{bunch_phase_shift, project_y_densities, s_y_density, ObservablesReport};
use spinpol::pinem::{pinem_grid, PinemGridPoint};
use spinpol::sweep::{drift_robustness, run_sweep, Extremum, HeatMapResult, Robustness, SweepParameter, SweepSpec};
use spinpol::validate::{run_validation, ValidationOptions, ValidationReport};

use crate::config::{Format, Scenario, ScenarioConfig};
use crate::{Cli, CliError, Command, Figure};

/// Norm drift beyond this is reported as an internal failure.
pub const NORM_DRIFT_LIMIT: f64 = 1e-8;

const DEFAULT_OUT: &str = "spinpol-out";

pub fn dispatch(cli: &Cli) -> Result<(), CliError> {
    match cli.threads {
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n as usize)
            .build()
            .map_err(|e| CliError::Usage(format!("thread pool: {e}")))?
            .install(|| execute(cli)),
        None => execute(cli),
    }
}

fn execute(cli: &Cli) -> Result<(), CliError> {
    match &cli.command {
        Command::ShowConfig { name } => {
            print!("{}", ScenarioConfig::bundled(name)?.to_toml());
            Ok(())
        }
        Command::Validate { seed, draws } => validate(cli, *seed, *draws),
        Command::Simulate => simulate(&Outputs::prepare(cli, &load(cli, "canonical")?)?),
        Command::Sweep { figure } => {
            let default = match figure {
                Some(Figure::Fig3b) => "fig3b",
                _ => "fig3a",
            };
            let sc = load(cli, default)?;
            sweep(&Outputs::prepare(cli, &sc)?, *figure, cli.threads)
        }
        Command::Pinem => pinem(&Outputs::prepare(cli, &load(cli, "figS1")?)?),
    }
}

fn load(cli: &Cli, bundled: &str) -> Result<Scenario, CliError> {
    let cfg = match &cli.config {
        Some(p) => ScenarioConfig::load(p)?,
        None => ScenarioConfig::bundled(bundled)?,
    };
    cfg.validate()
}

/// Output directory checked for writability up front; all writes go
/// through here.
struct Outputs<'a> {
    dir: PathBuf,
    scenario: &'a Scenario,
}

impl<'a> Outputs<'a> {
    fn prepare(cli: &Cli, scenario: &'a Scenario) -> Result<Self, CliError> {
        let dir = cli
            .out
            .clone()
            .or_else(|| scenario.config.outputs.dir.clone())
            .unwrap_or_else(|| PathBuf::from(DEFAULT_OUT));
        ensure_writable(&dir)?;
        Ok(Self { dir, scenario })
    }

    fn wants(&self, f: Format) -> bool {
        self.scenario.config.outputs.formats.contains(&f)
    }

    fn csv(&self, name: &str, text: &str) -> Result<(), CliError> {
        if self.wants(Format::Csv) {
            write_file(&self.dir.join(name), text)?;
        }
        Ok(())
    }

    fn json<T: Serialize>(&self, name: &str, value: &T) -> Result<(), CliError> {
        if self.wants(Format::Json) {
            write_json(&self.dir.join(name), value)?;
        }
        Ok(())
    }
}

fn ensure_writable(dir: &Path) -> Result<(), CliError> {
    let fail = |e: std::io::Error| CliError::Io(format!("output directory {} is not writable: {e}", dir.display()));
    fs::create_dir_all(dir).map_err(fail)?;
    let probe = dir.join(".spinpol-write-check");
    fs::write(&probe, b"").map_err(fail)?;
    fs::remove_file(&probe).map_err(fail)
}

fn write_file(path: &Path, text: &str) -> Result<(), CliError> {
    fs::write(path, text).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
    println!("wrote {}", path.display());
    Ok(())
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), CliError> {
    let mut text = serde_json::to_string_pretty(value).expect("plain data serializes");
    text.push('\n');
    write_file(path, &text)
}

#[derive(Debug, Serialize)]
struct MemberSummary {
    weight: f64,
    spin: Spinor,
    s_y_expect: f64,
    p_up_y: f64,
    p_down_y: f64,
}

#[derive(Debug, Serialize)]
struct SimulationSummary<'a> {
    config_hash: &'a str,
    grating_period: f64,
    revival_length: f64,
    drift_fraction: f64,
    coupling1: f64,
    coupling2: f64,
    /// φ₁ − φ₂ of the drives, wrapped to (−π, π]
    phase_difference: f64,
    /// None when stage 1 leaves no first-harmonic bunching.
    bunch_phase_shift: Option<f64>,
    max_norm_drift: f64,
    observables: ObservablesReport,
    members: Vec<MemberSummary>,
}

fn simulate(out: &Outputs) -> Result<(), CliError> {
    let sc = out.scenario;
    let cfg = &sc.pipeline;
    let mut reports = Vec::new();
    let mut members = Vec::new();
    let mut drift: f64 = 0.0;
    let mut s_y = Vec::new();
    let mut up_y = Vec::new();
    let mut down_y = Vec::new();
    for (w, spin) in sc.spin.members() {
        let run = run_pipeline(cfg, &spin)?;
        for psi in [&run.initial, &run.modulated, &run.drifted, &run.output] {
            drift = drift.max((psi.norm() - 1.0).abs());
        }
        let report = ObservablesReport::from_wavepacket(&run.output, false);
        let (u, d) = project_y_densities(&run.output);
        accumulate(&mut s_y, w, &s_y_density(&run.output));
        accumulate(&mut up_y, w, &u);
        accumulate(&mut down_y, w, &d);
        members.push(MemberSummary {
            weight: w,
            spin,
            s_y_expect: report.s_y_expect,
            p_up_y: report.p_up_y,
            p_down_y: report.p_down_y,
        });
        reports.push((w, report));
    }
    if drift > NORM_DRIFT_LIMIT {
        return Err(CliError::Numerical(format!(
            "norm drift {drift:.3e} exceeds {NORM_DRIFT_LIMIT:.0e}"
        )));
    }
    let weighted: Vec<(f64, &ObservablesReport)> = reports.iter().map(|(w, r)| (*w, r)).collect();
    let observables = ObservablesReport::weighted(&weighted);

    let channels = spin_channels(cfg)?;
    let rho_up: Vec<f64> = channels.up.iter().map(|c| c.norm_sqr()).collect();
    let rho_down: Vec<f64> = channels.down.iter().map(|c| c.norm_sqr()).collect();
    let shift = bunch_phase_shift(&rho_up, &rho_down, &channels.grid, sc.scales.wavenumber).ok();

    let mut t = CsvTable::new(
        &sc.config_hash,
        &["densities after stage 1 and drift for |up_z> and |down_z> inputs"],
        &["z_prime_m", "density_up", "density_down"],
    );
    for (i, z) in channels.grid.positions().enumerate() {
        t.row(&[z, rho_up[i], rho_down[i]]);
    }
    out.csv("drift_densities.csv", &t.finish())?;

    let mut t = CsvTable::new(
        &sc.config_hash,
        &["after stage 2, ensemble-averaged; s_y in units of hbar/2"],
        &["z_prime_m", "s_y_density", "density_up_y", "density_down_y"],
    );
    for (i, z) in channels.grid.positions().enumerate() {
        t.row(&[z, s_y[i], up_y[i], down_y[i]]);
    }
    out.csv("s_y_density.csv", &t.finish())?;

    out.json(
        "observables.json",
        &SimulationSummary {
            config_hash: &sc.config_hash,
            grating_period: sc.scales.grating_period,
            revival_length: sc.scales.revival_length,
            drift_fraction: cfg.drift_fraction(),
            coupling1: cfg.stage1.magnitude(),
            coupling2: cfg.stage2.magnitude(),
            phase_difference: wrap_phase(cfg.stage1.drive_phase - cfg.stage2.drive_phase),
            bunch_phase_shift: shift,
            max_norm_drift: drift,
            observables: observables.clone(),
            members,
        },
    )?;
    println!(
        "<S_y> = {:+.6} hbar/2   P_up_y = {:.6}   P_down_y = {:.6}",
        observables.s_y_expect, observables.p_up_y, observables.p_down_y
    );
    Ok(())
}

fn accumulate(acc: &mut Vec<f64>, w: f64, v: &[f64]) {
    if acc.is_empty() {
        acc.resize(v.len(), 0.0);
    }
    acc.iter_mut().zip(v).for_each(|(a, x)| *a += w * x);
}

#[derive(Debug, Serialize)]
struct SweepSummary<'a> {
    config_hash: &'a str,
    max_magnitude: Extremum,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    robustness: Vec<Robustness>,
    result: &'a HeatMapResult,
}

fn sweep(out: &Outputs, figure: Option<Figure>, threads: Option<u64>) -> Result<(), CliError> {
    let sc = out.scenario;
    let (mut spec, stem) = match figure {
        Some(Figure::Fig3a) => (SweepSpec::coupling_vs_drift(), "sweep_3a"),
        Some(Figure::Fig3b) => (SweepSpec::coupling_vs_coupling(), "sweep_3b"),
        None => (
            sc.sweep
                .ok_or_else(|| CliError::Usage("no sweep: pass --figure or add a [sweep] table".into()))?,
            "sweep",
        ),
    };
    spec.threads = threads.map(|n| n as usize);
    let result = run_sweep(&spec, &sc.pipeline)?;
    let axes = [spec.axis1.parameter, spec.axis2.parameter];
    let robustness = if axes.contains(&SweepParameter::Coupling) && axes.contains(&SweepParameter::DriftFraction) {
        [0.5, 1.0, 1.5]
            .iter()
            .map(|&g| drift_robustness(g, &sc.pipeline))
            .collect::<spinpol::Result<_>>()?
    } else {
        Vec::new()
    };
    out.csv(&format!("{stem}.csv"), &heat_map_csv(&result))?;
    let best = result.max_magnitude();
    out.json(
        &format!("{stem}.json"),
        &SweepSummary {
            config_hash: &sc.config_hash,
            max_magnitude: best,
            robustness: robustness.clone(),
            result: &result,
        },
    )?;
    let (n1, n2) = (spec.axis1.parameter, spec.axis2.parameter);
    let show = |label: &str, e: &Extremum| {
        println!("{label}: <S_y> = {:+.6} at {n1} = {:.4}, {n2} = {:.4}", e.s_y, e.value1, e.value2)
    };
    show("max |<S_y>|", &best);
    show("max", &result.argmax);
    show("min", &result.argmin);
    for r in &robustness {
        println!("drift robustness at |g| = {:.2}: width {:.4}", r.coupling, r.width);
    }
    Ok(())
}

#[derive(Debug, Serialize)]
struct PinemSummary<'a> {
    config_hash: &'a str,
    channel_field: f64,
    stage_length: f64,
    drift_fraction: f64,
    points: &'a [PinemGridPoint],
}

fn pinem(out: &Outputs) -> Result<(), CliError> {
    let sc = out.scenario;
    let plan = sc
        .pinem
        .as_ref()
        .ok_or_else(|| CliError::Usage("no [pinem] table in the config".into()))?;
    let points = pinem_grid(&plan.base, &plan.sigma_x, &plan.sigma_y, &sc.scales)?;
    out.csv("pinem_grid.csv", &pinem_grid_csv(&points, &sc.config_hash))?;
    out.json(
        "pinem.json",
        &PinemSummary {
            config_hash: &sc.config_hash,
            channel_field: plan.base.drive.channel_amplitude,
            stage_length: plan.base.stage_length,
            drift_fraction: plan.base.drift_fraction,
            points: &points,
        },
    )?;
    println!("{:>12} {:>12} {:>12} {:>12}", "sigma_x_nm", "sigma_y_nm", "contrast", "fidelity");
    for p in &points {
        println!(
            "{:>12.3} {:>12.3} {:>12.4e} {:>12.6}",
            p.sigma_x * 1e9,
            p.sigma_y * 1e9,
            p.contrast,
            p.fidelity
        );
    }
    Ok(())
}

fn validate(cli: &Cli, seed: u64, draws: usize) -> Result<(), CliError> {
    if draws == 0 {
        return Err(CliError::Usage("--draws must be at least 1".into()));
    }
    let report: ValidationReport = run_validation(&ValidationOptions {
        seed,
        draws,
        ..Default::default()
    });
    for c in &report.checks {
        println!(
            "{} {:<40} observed {:.3e}  bound {:.3e}{}",
            if c.passed { "PASS" } else { "FAIL" },
            c.id,
            c.observed,
            c.bound,
            c.detail.as_deref().map(|d| format!("  ({d})")).unwrap_or_default()
        );
    }
    if let Some(dir) = &cli.out {
        ensure_writable(dir)?;
        write_json(&dir.join("validation.json"), &report)?;
    }
    let failed: Vec<String> = report
        .failures()
        .map(|c| format!("{} [{}]", c.id, c.module))
        .collect();
    if failed.is_empty() {
        println!("{} invariants passed", report.checks.len());
        Ok(())
    } else {
        Err(CliError::Numerical(format!("invariants failed: {}", failed.join(", "))))
    }
}
