//! CSV text for snapshots, heat maps and PINEM grids. Every file starts with
//! `#` comment lines carrying the configuration hash.

use std::fmt::Write;

use crate::dynamics::SpinorWavepacket;
use crate::observables::{project_y_densities, s_y_density};
use crate::pinem::{PinemGridPoint, PinemResult};
use crate::sweep::HeatMapResult;

/// Writes `{:.14e}`: 15 significant digits.
fn num(out: &mut String, v: f64) {
    write!(out, "{v:.14e}").expect("writing to a String");
}

pub struct CsvTable {
    text: String,
    columns: usize,
}

impl CsvTable {
    pub fn new(config_hash: &str, comments: &[&str], columns: &[&str]) -> Self {
        let mut text = format!("# config_hash: {config_hash}\n");
        for c in comments {
            text.push_str("# ");
            text.push_str(c);
            text.push('\n');
        }
        text.push_str(&columns.join(","));
        text.push('\n');
        Self {
            text,
            columns: columns.len(),
        }
    }

    pub fn row(&mut self, values: &[f64]) {
        assert_eq!(values.len(), self.columns, "row width");
        for (i, &v) in values.iter().enumerate() {
            if i > 0 {
                self.text.push(',');
            }
            num(&mut self.text, v);
        }
        self.text.push('\n');
    }

    pub fn finish(self) -> String {
        self.text
    }
}

/// z′, Re ψ₊, Im ψ₊, Re ψ₋, Im ψ₋, |ψ₊|², |ψ₋|²
pub fn snapshot_csv(psi: &SpinorWavepacket, config_hash: &str, label: &str) -> String {
    let mut t = CsvTable::new(
        config_hash,
        &[label],
        &["z_prime_m", "re_psi_up", "im_psi_up", "re_psi_down", "im_psi_down", "density_up", "density_down"],
    );
    for (i, z) in psi.grid.positions().enumerate() {
        let (u, d) = (psi.up[i], psi.down[i]);
        t.row(&[z, u.re, u.im, d.re, d.im, u.norm_sqr(), d.norm_sqr()]);
    }
    t.finish()
}

/// z′, S_y density, y-basis densities.
pub fn s_y_density_csv(psi: &SpinorWavepacket, config_hash: &str, label: &str) -> String {
    let mut t = CsvTable::new(
        config_hash,
        &[label],
        &["z_prime_m", "s_y_density", "density_up_y", "density_down_y"],
    );
    let s = s_y_density(psi);
    let (up, down) = project_y_densities(psi);
    for (i, z) in psi.grid.positions().enumerate() {
        t.row(&[z, s[i], up[i], down[i]]);
    }
    t.finish()
}

pub fn heat_map_csv(result: &HeatMapResult) -> String {
    let a1 = result.spec.axis1.parameter.name();
    let a2 = result.spec.axis2.parameter.name();
    let mut t = CsvTable::new(&result.config_hash, &["s_y in units of hbar/2"], &[a1, a2, "s_y"]);
    for (i, &v1) in result.values1.iter().enumerate() {
        for (j, &v2) in result.values2.iter().enumerate() {
            t.row(&[v1, v2, result.s_y[i][j]]);
        }
    }
    t.finish()
}

pub fn pinem_grid_csv(points: &[PinemGridPoint], config_hash: &str) -> String {
    let mut t = CsvTable::new(config_hash, &[], &["sigma_x_m", "sigma_y_m", "contrast", "fidelity"]);
    for p in points {
        t.row(&[p.sigma_x, p.sigma_y, p.contrast, p.fidelity]);
    }
    t.finish()
}

pub fn pinem_density_csv(result: &PinemResult, config_hash: &str) -> String {
    let mut t = CsvTable::new(config_hash, &[], &["z_prime_m", "density"]);
    for (z, d) in result.grid.iter().zip(&result.density) {
        t.row(&[*z, *d]);
    }
    t.finish()
}
