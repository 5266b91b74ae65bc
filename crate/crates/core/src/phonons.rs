//! Axial normal modes of a planar crystal.
//!
//! The axial stiffness matrix in units of `m omega_z^2` is
//! `K_jj = 1 - sum_k 1/r_jk^3` and `K_jk = 1/r_jk^3`, independent of the in-plane
//! trap and wall terms.

use nalgebra::{DMatrix, SymmetricEigen};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::equilibrium::{equilibrate, MinimizerSettings};
use crate::error::{Error, Result};
use crate::potential::PotentialParams;

/// Eigenvalues at or below this are not counted as stable.
pub const STABILITY_THRESHOLD: f64 = 1e-8;

#[derive(Debug, Clone, PartialEq)]
pub struct StiffnessMatrix {
    pub entries: DMatrix<f64>,
}

impl StiffnessMatrix {
    pub fn dim(&self) -> usize {
        self.entries.nrows()
    }

    pub fn trace(&self) -> f64 {
        self.entries.trace()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AxialModeSet {
    /// Eigenvalues of `K`, ascending.
    pub eigenvalues: Vec<f64>,
    /// `sqrt(lambda)` for stable modes, `-sqrt(-lambda)` otherwise, in units of `omega_z`.
    pub frequencies: Vec<f64>,
    /// `eigenvectors[nu][j]`: amplitude of ion `j` in mode `nu`, unit norm.
    pub eigenvectors: Vec<Vec<f64>>,
    pub mode_stable: Vec<bool>,
    pub stable: bool,
}

impl AxialModeSet {
    pub fn len(&self) -> usize {
        self.eigenvalues.len()
    }

    pub fn is_empty(&self) -> bool {
        self.eigenvalues.is_empty()
    }

    pub fn min_eigenvalue(&self) -> f64 {
        self.eigenvalues.first().copied().unwrap_or(f64::NAN)
    }

    pub fn unstable_count(&self) -> usize {
        self.mode_stable.iter().filter(|s| !**s).count()
    }
}

pub fn build_stiffness(positions: &[[f64; 2]]) -> Result<StiffnessMatrix> {
    crate::potential::check_distinct(positions)?;
    let n = positions.len();
    let mut k = DMatrix::identity(n, n);
    for i in 0..n {
        for j in (i + 1)..n {
            let r = (positions[i][0] - positions[j][0]).hypot(positions[i][1] - positions[j][1]);
            let c = 1.0 / (r * r * r);
            k[(i, j)] = c;
            k[(j, i)] = c;
            k[(i, i)] -= c;
            k[(j, j)] -= c;
        }
    }
    Ok(StiffnessMatrix { entries: k })
}

pub fn solve_modes(k: &StiffnessMatrix) -> AxialModeSet {
    let n = k.dim();
    let eigen = SymmetricEigen::new(k.entries.clone());
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eigen.eigenvalues[a].total_cmp(&eigen.eigenvalues[b]));

    let mut eigenvalues = Vec::with_capacity(n);
    let mut frequencies = Vec::with_capacity(n);
    let mut eigenvectors = Vec::with_capacity(n);
    let mut mode_stable = Vec::with_capacity(n);
    for &m in &order {
        let lambda = eigen.eigenvalues[m];
        let mut v: Vec<f64> = eigen.eigenvectors.column(m).iter().copied().collect();
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        v.iter_mut().for_each(|x| *x /= norm);
        // largest-magnitude component positive; near-ties go to the lowest ion index
        let biggest = v.iter().fold(0.0f64, |a, x| a.max(x.abs()));
        let lead = v.iter().position(|x| x.abs() >= biggest * (1.0 - 1e-9)).unwrap_or(0);
        if v[lead] < 0.0 {
            v.iter_mut().for_each(|x| *x = -*x);
        }
        let stable = lambda > STABILITY_THRESHOLD;
        eigenvalues.push(lambda);
        frequencies.push(if lambda >= 0.0 {
            lambda.sqrt()
        } else {
            -(-lambda).sqrt()
        });
        eigenvectors.push(v);
        mode_stable.push(stable);
    }
    AxialModeSet {
        stable: mode_stable.iter().all(|s| *s),
        eigenvalues,
        frequencies,
        eigenvectors,
        mode_stable,
    }
}

pub fn axial_modes(positions: &[[f64; 2]]) -> Result<AxialModeSet> {
    Ok(solve_modes(&build_stiffness(positions)?))
}

/// Per-ion amplitudes of one mode scaled so the largest magnitude is 1.
pub fn mode_displacement_map(modes: &AxialModeSet, mode_index: usize) -> Result<Vec<f64>> {
    let v = modes.eigenvectors.get(mode_index).ok_or(Error::IndexOutOfRange {
        index: mode_index,
        len: modes.len(),
    })?;
    let biggest = v.iter().fold(0.0f64, |a, x| a.max(x.abs()));
    Ok(v.iter().map(|x| x / biggest).collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScanPoint {
    pub omega_eff: f64,
    pub min_eigenvalue: Option<f64>,
    pub stable: bool,
    pub frequencies: Vec<f64>,
    pub converged: bool,
    /// Why the point has no spectrum, if it failed upstream.
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StabilityScan {
    pub points: Vec<ScanPoint>,
    /// Endpoints of the longest contiguous run of stable grid points.
    pub band: Option<(f64, f64)>,
}

impl StabilityScan {
    pub fn band_width(&self) -> f64 {
        self.band.map_or(0.0, |(a, b)| b - a)
    }
}

/// Seeds, minimizes and diagonalizes at every `omega_eff`, keeping `template`'s other values.
pub fn scan_stability(
    template: &PotentialParams,
    n_ions: usize,
    omega_eff_grid: &[f64],
    settings: &MinimizerSettings,
    seed_spacing: Option<f64>,
) -> StabilityScan {
    let points: Vec<ScanPoint> = omega_eff_grid
        .par_iter()
        .map(|&omega_eff| {
            let params = PotentialParams { omega_eff, ..*template };
            let analysed = equilibrate(&params, n_ions, seed_spacing, settings)
                .and_then(|c| axial_modes(&c.positions).map(|m| (c, m)));
            match analysed {
                Ok((crystal, modes)) => ScanPoint {
                    omega_eff,
                    min_eigenvalue: Some(modes.min_eigenvalue()),
                    stable: modes.stable && crystal.converged,
                    frequencies: modes.frequencies,
                    converged: crystal.converged,
                    error: None,
                },
                Err(e) => ScanPoint {
                    omega_eff,
                    min_eigenvalue: None,
                    stable: false,
                    frequencies: Vec::new(),
                    converged: false,
                    error: Some(e.to_string()),
                },
            }
        })
        .collect();
    let band = stability_band(&points);
    StabilityScan { points, band }
}

/// Longest run of consecutive stable points; the first one wins a tie.
pub fn stability_band(points: &[ScanPoint]) -> Option<(f64, f64)> {
    let mut best: Option<(usize, usize)> = None;
    let mut start = None;
    for (i, p) in points.iter().enumerate() {
        match (p.stable, start) {
            (true, None) => start = Some(i),
            (false, Some(s)) => {
                if best.is_none_or(|(a, b)| i - s > b - a + 1) {
                    best = Some((s, i - 1));
                }
                start = None;
            }
            _ => {}
        }
    }
    if let Some(s) = start {
        let end = points.len() - 1;
        if best.is_none_or(|(a, b)| end - s > b - a) {
            best = Some((s, end));
        }
    }
    best.map(|(a, b)| (points[a].omega_eff, points[b].omega_eff))
}
