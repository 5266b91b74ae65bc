//! Phonon-mediated Ising couplings and their power-law fits.
//!
//! Couplings are in units of `J = F_O^2 / (m omega_z^2)`:
//! `J_jk = F^2/4 sum_nu b_j b_k / (mu^2 - omega_nu^2)`.

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::phonons::AxialModeSet;
use crate::units::LogGrid;

/// A drive closer than this to a mode frequency is treated as resonant.
pub const RESONANCE_GUARD: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DriveParams {
    /// Beat-note frequency in units of `omega_z`.
    pub mu: f64,
    /// Dipole force in units that make the coupling unit 1.
    pub force: f64,
}

impl DriveParams {
    pub fn from_detuning(delta: f64) -> Self {
        DriveParams {
            mu: 1.0 + delta,
            force: 1.0,
        }
    }

    pub fn detuning(&self) -> f64 {
        self.mu - 1.0
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CouplingMatrix {
    pub entries: DMatrix<f64>,
    pub mu: f64,
}

impl CouplingMatrix {
    pub fn dim(&self) -> usize {
        self.entries.nrows()
    }

    /// `(i, j, J_ij)` for `i < j`, row-major.
    pub fn pairs(&self) -> Vec<(usize, usize, f64)> {
        let n = self.dim();
        let mut out = Vec::with_capacity(n * n.saturating_sub(1) / 2);
        for i in 0..n {
            for j in (i + 1)..n {
                out.push((i, j, self.entries[(i, j)]));
            }
        }
        out
    }
}

fn check_drive(modes: &AxialModeSet, drive: &DriveParams) -> Result<()> {
    if !(drive.mu > 0.0) {
        return Err(Error::ConfigInvalid(format!("mu must be positive, got {}", drive.mu)));
    }
    let unstable = modes.unstable_count();
    if unstable > 0 {
        return Err(Error::UnstableModes { count: unstable });
    }
    for (mode, &omega) in modes.frequencies.iter().enumerate() {
        if (drive.mu - omega).abs() < RESONANCE_GUARD {
            return Err(Error::ResonantDrive {
                mu: drive.mu,
                mode,
                omega,
            });
        }
    }
    Ok(())
}

/// Time-averaged couplings. The diagonal is set to zero.
pub fn coupling_matrix(modes: &AxialModeSet, drive: &DriveParams) -> Result<CouplingMatrix> {
    check_drive(modes, drive)?;
    let n = modes.len();
    let mu2 = drive.mu * drive.mu;
    let scale = 0.25 * drive.force * drive.force;
    let weights: Vec<f64> = modes.eigenvalues.iter().map(|lambda| scale / (mu2 - lambda)).collect();
    let mut j = DMatrix::zeros(n, n);
    for a in 0..n {
        for b in (a + 1)..n {
            let mut sum = 0.0;
            for (nu, w) in weights.iter().enumerate() {
                let v = &modes.eigenvectors[nu];
                sum += w * v[a] * v[b];
            }
            j[(a, b)] = sum;
            j[(b, a)] = sum;
        }
    }
    Ok(CouplingMatrix {
        entries: j,
        mu: drive.mu,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct CouplingTimeSeries {
    pub times: Vec<f64>,
    /// `(i, j)` with `i < j`, row-major.
    pub pairs: Vec<(usize, usize)>,
    /// `values[pair][t]`.
    pub values: Vec<Vec<f64>>,
}

/// Full time dependence
/// `J_jk(t) = F^2/4 sum_nu b_j b_k / (mu^2 - w^2) [1 + cos 2 mu t - (2 mu / w) sin w t sin mu t]`.
pub fn coupling_time_series(modes: &AxialModeSet, drive: &DriveParams, times: &[f64]) -> Result<CouplingTimeSeries> {
    check_drive(modes, drive)?;
    let n = modes.len();
    let mu = drive.mu;
    let scale = 0.25 * drive.force * drive.force;
    // brackets[t][nu] times the static weight
    let weighted: Vec<Vec<f64>> = times
        .iter()
        .map(|&t| {
            modes
                .eigenvalues
                .iter()
                .zip(&modes.frequencies)
                .map(|(&lambda, &w)| {
                    let bracket = 1.0 + (2.0 * mu * t).cos() - (2.0 * mu / w) * (w * t).sin() * (mu * t).sin();
                    scale * bracket / (mu * mu - lambda)
                })
                .collect()
        })
        .collect();
    let mut pairs = Vec::new();
    let mut values = Vec::new();
    for a in 0..n {
        for b in (a + 1)..n {
            let amplitudes: Vec<f64> = (0..n)
                .map(|nu| modes.eigenvectors[nu][a] * modes.eigenvectors[nu][b])
                .collect();
            let series = weighted
                .iter()
                .map(|row| row.iter().zip(&amplitudes).map(|(w, p)| w * p).sum())
                .collect();
            pairs.push((a, b));
            values.push(series);
        }
    }
    Ok(CouplingTimeSeries {
        times: times.to_vec(),
        pairs,
        values,
    })
}

/// Which residual the detuning sweep normalizes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum ResidualMetric {
    /// `sqrt(sum (ln J - ln J_fit)^2)` over the fitted pairs.
    #[default]
    Log,
    /// `sqrt(sum (J - J_fit)^2)` over all pairs.
    Linear,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PowerLawFit {
    pub alpha: f64,
    /// Intercept of `ln J = ln J0 - alpha ln r`.
    pub log_j0: f64,
    pub pairs_used: usize,
    pub pairs_excluded: usize,
    pub rmsd_log: f64,
    pub rmsd_linear: f64,
    /// The residual picked by the metric in use.
    pub rmsd: f64,
    /// Filled by [`detuning_sweep`].
    pub normalized_rmsd: Option<f64>,
}

impl PowerLawFit {
    pub fn predict(&self, r: f64) -> f64 {
        (self.log_j0 - self.alpha * r.ln()).exp()
    }
}

/// Unweighted least squares of `ln J_ij` on `ln r_ij` over pairs with `J_ij > 0`.
pub fn fit_power_law(
    positions: &[[f64; 2]],
    couplings: &CouplingMatrix,
    metric: ResidualMetric,
) -> Result<PowerLawFit> {
    let samples: Vec<(f64, f64)> = couplings
        .pairs()
        .into_iter()
        .map(|(i, j, value)| {
            let r = (positions[i][0] - positions[j][0]).hypot(positions[i][1] - positions[j][1]);
            (r, value)
        })
        .collect();
    fit_samples(&samples, metric)
}

/// Fit on raw `(r, J)` samples.
pub fn fit_samples(samples: &[(f64, f64)], metric: ResidualMetric) -> Result<PowerLawFit> {
    let used: Vec<(f64, f64)> = samples
        .iter()
        .filter(|s| s.1 > 0.0)
        .map(|&(r, value)| (r.ln(), value.ln()))
        .collect();
    let m = used.len() as f64;
    let mean_x = used.iter().map(|p| p.0).sum::<f64>() / m;
    let mean_y = used.iter().map(|p| p.1).sum::<f64>() / m;
    let sxx: f64 = used.iter().map(|p| (p.0 - mean_x).powi(2)).sum();
    if used.len() < 2 || !(sxx > 1e-14 * m) {
        return Err(Error::InsufficientPairs { used: used.len() });
    }
    let sxy: f64 = used.iter().map(|p| (p.0 - mean_x) * (p.1 - mean_y)).sum();
    let slope = sxy / sxx;
    let intercept = mean_y - slope * mean_x;

    let rmsd_log = used
        .iter()
        .map(|p| (p.1 - (intercept + slope * p.0)).powi(2))
        .sum::<f64>()
        .sqrt();
    let rmsd_linear = samples
        .iter()
        .map(|&(r, value)| (value - (intercept + slope * r.ln()).exp()).powi(2))
        .sum::<f64>()
        .sqrt();
    Ok(PowerLawFit {
        alpha: -slope,
        log_j0: intercept,
        pairs_used: used.len(),
        pairs_excluded: samples.len() - used.len(),
        rmsd_log,
        rmsd_linear,
        rmsd: match metric {
            ResidualMetric::Log => rmsd_log,
            ResidualMetric::Linear => rmsd_linear,
        },
        normalized_rmsd: None,
    })
}

/// `points` log-spaced values from `min` to `max`, endpoints exact.
pub fn log_grid(grid: &LogGrid) -> Vec<f64> {
    match grid.points {
        0 => Vec::new(),
        1 => vec![grid.min],
        n => {
            let (a, b) = (grid.min.log10(), grid.max.log10());
            (0..n)
                .map(|k| match k {
                    0 => grid.min,
                    k if k == n - 1 => grid.max,
                    k => 10f64.powf(a + (b - a) * k as f64 / (n - 1) as f64),
                })
                .collect()
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepPoint {
    pub delta: f64,
    pub fit: PowerLawFit,
}

/// Fits at every detuning and normalizes the residuals by their grid maximum.
///
/// When every residual is zero all points count as maxima and get 1.
pub fn detuning_sweep(
    modes: &AxialModeSet,
    positions: &[[f64; 2]],
    delta_grid: &[f64],
    metric: ResidualMetric,
) -> Result<Vec<SweepPoint>> {
    if let Some(bad) = delta_grid.iter().find(|d| !(**d > 0.0)) {
        return Err(Error::ConfigInvalid(format!("detunings must be positive, got {bad}")));
    }
    let mut points: Vec<SweepPoint> = delta_grid
        .par_iter()
        .map(|&delta| {
            let j = coupling_matrix(modes, &DriveParams::from_detuning(delta))?;
            Ok(SweepPoint {
                delta,
                fit: fit_power_law(positions, &j, metric)?,
            })
        })
        .collect::<Result<_>>()?;
    let peak = points.iter().map(|p| p.fit.rmsd).fold(0.0, f64::max);
    for p in &mut points {
        p.fit.normalized_rmsd = Some(if peak > 0.0 { p.fit.rmsd / peak } else { 1.0 });
    }
    Ok(points)
}

pub fn alpha_curve(modes: &AxialModeSet, positions: &[[f64; 2]], delta_grid: &[f64]) -> Result<Vec<(f64, f64)>> {
    Ok(detuning_sweep(modes, positions, delta_grid, ResidualMetric::default())?
        .into_iter()
        .map(|p| (p.delta, p.fit.alpha))
        .collect())
}
