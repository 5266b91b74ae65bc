//! CSV and JSON persistence.
//!
//! Numbers are rounded to 12 significant digits and then printed in their shortest
//! round-trip form, so repeated runs produce identical bytes.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::couplings::{CouplingMatrix, SweepPoint};
use crate::error::{Error, Result};
use crate::phonons::AxialModeSet;
use crate::potential::{CrystalConfiguration, PotentialParams, SeparatrixContour};

pub const CRYSTAL_HEADER: &[&str] = &["index", "x_over_l0", "y_over_l0"];
pub const SPECTRUM_HEADER: &[&str] = &["mode_index", "omega_over_omega_z", "stable"];
pub const EIGENVECTOR_HEADER: &[&str] = &["mode_index", "ion_index", "amplitude"];
pub const COUPLING_HEADER: &[&str] = &["i", "j", "r_ij_over_l0", "J_over_Junit"];
pub const SWEEP_HEADER: &[&str] = &[
    "delta_over_omega_z",
    "alpha",
    "rmsd",
    "normalized_rmsd",
    "pairs_excluded",
];
pub const SEPARATRIX_HEADER: &[&str] = &["theta_rad", "rho_over_l0"];

/// Text form of a number, 12 significant digits at most, `-0` printed as `0`.
pub fn format_number(value: f64) -> String {
    if value == 0.0 {
        return "0".to_string();
    }
    if !value.is_finite() {
        return format!("{value}");
    }
    let rounded: f64 = format!("{value:.11e}").parse().expect("formatted float parses");
    let magnitude = rounded.abs();
    if (1e-4..1e15).contains(&magnitude) {
        format!("{rounded}")
    } else {
        format!("{rounded:e}")
    }
}

/// Rows of preformatted cells under a header row.
pub fn write_csv(path: &Path, header: &[&str], rows: &[Vec<String>]) -> Result<()> {
    let mut text = header.join(",");
    text.push('\n');
    for row in rows {
        text.push_str(&row.join(","));
        text.push('\n');
    }
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

pub fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| Error::Parse {
        path: path.to_path_buf(),
        message: e.to_string(),
    })
}

pub fn positions_rows(positions: &[[f64; 2]]) -> Vec<Vec<String>> {
    positions
        .iter()
        .enumerate()
        .map(|(i, p)| vec![i.to_string(), format_number(p[0]), format_number(p[1])])
        .collect()
}

pub fn write_positions_csv(path: &Path, positions: &[[f64; 2]]) -> Result<()> {
    write_csv(path, CRYSTAL_HEADER, &positions_rows(positions))
}

/// Reads `index, x_over_l0, y_over_l0` rows; indices must run 0, 1, 2, ...
pub fn read_positions_csv(path: &Path) -> Result<Vec<[f64; 2]>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let parse_error = |line: usize, message: String| Error::Parse {
        path: path.to_path_buf(),
        message: format!("line {line}: {message}"),
    };
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, header)) if header.trim() == CRYSTAL_HEADER.join(",") => {}
        other => {
            return Err(parse_error(
                1,
                format!(
                    "expected header `{}`, got {:?}",
                    CRYSTAL_HEADER.join(","),
                    other.map(|o| o.1)
                ),
            ))
        }
    }
    let mut positions = Vec::new();
    for (number, line) in lines {
        if line.trim().is_empty() {
            continue;
        }
        let cells: Vec<&str> = line.split(',').map(str::trim).collect();
        if cells.len() != 3 {
            return Err(parse_error(
                number + 1,
                format!("expected 3 cells, got {}", cells.len()),
            ));
        }
        let index: usize = cells[0]
            .parse()
            .map_err(|e| parse_error(number + 1, format!("index: {e}")))?;
        if index != positions.len() {
            return Err(parse_error(number + 1, format!("index {index} out of sequence")));
        }
        let x: f64 = cells[1]
            .parse()
            .map_err(|e| parse_error(number + 1, format!("x: {e}")))?;
        let y: f64 = cells[2]
            .parse()
            .map_err(|e| parse_error(number + 1, format!("y: {e}")))?;
        positions.push([x, y]);
    }
    Ok(positions)
}

/// Metadata written next to a crystal CSV.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CrystalSidecar {
    pub params: PotentialParams,
    pub n_ions: usize,
    pub energy: f64,
    pub gradient_norm: f64,
    pub iterations: usize,
    pub converged: bool,
}

impl CrystalSidecar {
    pub fn new(params: &PotentialParams, crystal: &CrystalConfiguration) -> Self {
        CrystalSidecar {
            params: *params,
            n_ions: crystal.len(),
            energy: round_for_text(crystal.energy),
            gradient_norm: round_for_text(crystal.gradient_norm),
            iterations: crystal.iterations,
            converged: crystal.converged,
        }
    }
}

/// Value after the 12-digit rounding used for text output.
pub fn round_for_text(value: f64) -> f64 {
    format_number(value).parse().unwrap_or(value)
}

/// Sidecar path for a crystal CSV: `crystal.csv` becomes `crystal.json`.
pub fn sidecar_path(csv: &Path) -> std::path::PathBuf {
    csv.with_extension("json")
}

pub fn write_crystal(path: &Path, params: &PotentialParams, crystal: &CrystalConfiguration) -> Result<()> {
    write_positions_csv(path, &crystal.positions)?;
    write_json(&sidecar_path(path), &CrystalSidecar::new(params, crystal))
}

pub fn write_spectrum_csv(path: &Path, modes: &AxialModeSet) -> Result<()> {
    let rows: Vec<Vec<String>> = modes
        .frequencies
        .iter()
        .zip(&modes.mode_stable)
        .enumerate()
        .map(|(nu, (w, s))| vec![nu.to_string(), format_number(*w), s.to_string()])
        .collect();
    write_csv(path, SPECTRUM_HEADER, &rows)
}

pub fn write_eigenvectors_csv(path: &Path, modes: &AxialModeSet) -> Result<()> {
    let mut rows = Vec::with_capacity(modes.len() * modes.len());
    for (nu, v) in modes.eigenvectors.iter().enumerate() {
        for (ion, b) in v.iter().enumerate() {
            rows.push(vec![nu.to_string(), ion.to_string(), format_number(*b)]);
        }
    }
    write_csv(path, EIGENVECTOR_HEADER, &rows)
}

pub fn coupling_rows(positions: &[[f64; 2]], couplings: &CouplingMatrix) -> Vec<Vec<String>> {
    couplings
        .pairs()
        .into_iter()
        .map(|(i, j, value)| {
            let r = (positions[i][0] - positions[j][0]).hypot(positions[i][1] - positions[j][1]);
            vec![i.to_string(), j.to_string(), format_number(r), format_number(value)]
        })
        .collect()
}

pub fn write_couplings_csv(path: &Path, positions: &[[f64; 2]], couplings: &CouplingMatrix) -> Result<()> {
    write_csv(path, COUPLING_HEADER, &coupling_rows(positions, couplings))
}

pub fn write_sweep_csv(path: &Path, sweep: &[SweepPoint]) -> Result<()> {
    let rows: Vec<Vec<String>> = sweep
        .iter()
        .map(|p| {
            vec![
                format_number(p.delta),
                format_number(p.fit.alpha),
                format_number(p.fit.rmsd),
                format_number(p.fit.normalized_rmsd.unwrap_or(f64::NAN)),
                p.fit.pairs_excluded.to_string(),
            ]
        })
        .collect();
    write_csv(path, SWEEP_HEADER, &rows)
}

pub fn write_separatrix_csv(path: &Path, contour: &SeparatrixContour) -> Result<()> {
    let rows: Vec<Vec<String>> = contour
        .points
        .iter()
        .map(|(theta, rho)| vec![format_number(*theta), format_number(*rho)])
        .collect();
    write_csv(path, SEPARATRIX_HEADER, &rows)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn number_formatting() {
        assert_eq!(format_number(0.0), "0");
        assert_eq!(format_number(-0.0), "0");
        assert_eq!(format_number(1.5), "1.5");
        assert_eq!(format_number(3.0), "3");
        assert_eq!(format_number(0.1 + 0.2), "0.3");
        assert_eq!(format_number(1.0 / 3.0), "0.333333333333");
        assert_eq!(format_number(2.5e-7), "2.5e-7");
        assert_eq!(format_number(-12345.678901234567), "-12345.6789012");
        assert_eq!(format_number(1e20), "1e20");
    }

    #[test]
    fn positions_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("crystal.csv");
        let positions = vec![[0.0, 0.0], [1.25, -3.5], [1e-7, 42.0]];
        write_positions_csv(&path, &positions).unwrap();
        assert_eq!(read_positions_csv(&path).unwrap(), positions);
    }

    #[test]
    fn malformed_crystal_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.csv");
        fs::write(&path, "index,x_over_l0,y_over_l0\n1,0,0\n").unwrap();
        assert!(matches!(read_positions_csv(&path), Err(Error::Parse { .. })));
        fs::write(&path, "a,b\n").unwrap();
        assert!(matches!(read_positions_csv(&path), Err(Error::Parse { .. })));
    }
}
