//! End-to-end runs and plot-ready figure data.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::time::Instant;

use log::{info, warn};
use serde::{Deserialize, Serialize};

use crate::couplings::{coupling_matrix, detuning_sweep, fit_power_law, log_grid, DriveParams, ResidualMetric};
use crate::equilibrium::{equilibrate, minimize, MinimizerSettings};
use crate::error::{Error, Result};
use crate::io::{self, format_number};
use crate::lattice::build_disc_seed;
use crate::neighbors::nearest_neighbor_distances;
use crate::phonons::{axial_modes, mode_displacement_map, scan_stability};
use crate::potential::{separatrix_contour, CrystalConfiguration, PotentialParams, WallOrder, DEFAULT_ANGULAR_SAMPLES};
use crate::units::{effective_frequency, ConfigDocument, LinearGrid};

pub const FIGURE_IDS: &[&str] = &["fig1", "fig2", "fig3", "fig4", "fig5", "fig6", "fig7", "fig8"];

/// Wall strengths `3 V_W / omega_eff^2` of the three separatrix contours.
pub const SEPARATRIX_STRENGTHS: [f64; 3] = [0.508, 0.608, 0.908];

/// Detunings shown in the coupling scatter.
pub const SCATTER_DETUNINGS: [f64; 3] = [1e-4, 1e-1, 1e2];

/// Quadrupole-wall comparison crystal: harmonic trap, `omega_eff = 0.06`.
pub const COMPARISON_OMEGA_EFF: f64 = 0.06;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StageStatus {
    Ok,
    Skipped,
    Failed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageRecord {
    pub name: String,
    pub status: StageStatus,
    pub seconds: f64,
    pub message: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub tool_version: String,
    pub config: ConfigDocument,
    pub params: PotentialParams,
    pub n_ions: usize,
    pub warnings: Vec<String>,
    pub stages: Vec<StageRecord>,
    /// Output name to file path.
    pub outputs: BTreeMap<String, PathBuf>,
}

impl RunManifest {
    pub fn output(&self, name: &str) -> Result<&Path> {
        match self.outputs.get(name) {
            Some(path) if path.exists() => Ok(path),
            _ => Err(Error::MissingUpstream(format!("{name} output"))),
        }
    }

    pub fn load(path: &Path) -> Result<Self> {
        io::read_json(path)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PipelineOptions {
    pub out_dir: PathBuf,
    /// Overrides the configured seed spacing.
    pub seed_spacing: Option<f64>,
    pub settings: MinimizerSettings,
}

impl PipelineOptions {
    pub fn new(out_dir: impl Into<PathBuf>) -> Self {
        PipelineOptions {
            out_dir: out_dir.into(),
            seed_spacing: None,
            settings: MinimizerSettings::default(),
        }
    }
}

pub const MANIFEST_FILE: &str = "manifest.json";

/// Resolved inputs of a run: the document, potential parameters and warnings.
pub fn resolve_config(doc: &ConfigDocument) -> Result<(PotentialParams, Vec<String>)> {
    let trap = doc.to_trap_config()?;
    let params = trap.potential_params()?;
    let warnings = trap.regime_warnings()?;
    for w in &warnings {
        warn!("{w}");
    }
    debug_assert!((effective_frequency(&trap)? - params.omega_eff).abs() == 0.0);
    Ok((params, warnings))
}

struct Stages {
    records: Vec<StageRecord>,
}

impl Stages {
    fn run<T>(&mut self, name: &str, f: impl FnOnce() -> Result<Option<T>>) -> Result<Option<T>> {
        let start = Instant::now();
        let result = f();
        let seconds = start.elapsed().as_secs_f64();
        let (status, message) = match &result {
            Ok(Some(_)) => (StageStatus::Ok, None),
            Ok(None) => (StageStatus::Skipped, None),
            Err(e) => (StageStatus::Failed, Some(e.to_string())),
        };
        info!("stage {name}: {status:?} in {seconds:.3}s");
        self.records.push(StageRecord {
            name: name.to_string(),
            status,
            seconds,
            message,
        });
        result.map_err(|e| Error::stage(name, e))
    }
}

/// Seed, minimize, modes, couplings and detuning sweep, writing every artifact under
/// `options.out_dir` together with `manifest.json`.
pub fn run_pipeline(config_path: &Path, options: &PipelineOptions) -> Result<RunManifest> {
    let doc = ConfigDocument::from_path(config_path)?;
    run_pipeline_with(&doc, options)
}

pub fn run_pipeline_with(doc: &ConfigDocument, options: &PipelineOptions) -> Result<RunManifest> {
    let (params, warnings) = resolve_config(doc)?;
    let out = &options.out_dir;
    std::fs::create_dir_all(out).map_err(|e| Error::io(out, e))?;
    let spacing = options.seed_spacing.or(doc.run.seed_spacing);

    let mut manifest = RunManifest {
        tool_version: env!("CARGO_PKG_VERSION").to_string(),
        config: doc.clone(),
        params,
        n_ions: doc.n_ions,
        warnings,
        stages: Vec::new(),
        outputs: BTreeMap::new(),
    };
    let mut stages = Stages { records: Vec::new() };
    let mut outputs = BTreeMap::new();

    let result = (|| -> Result<()> {
        let crystal = stages
            .run("equilibrate", || {
                let crystal = equilibrate(&params, doc.n_ions, spacing, &options.settings)?;
                if !crystal.converged {
                    warn!("crystal did not converge; |g|_inf = {:.3e}", crystal.gradient_norm);
                }
                let path = out.join("crystal.csv");
                io::write_crystal(&path, &params, &crystal)?;
                outputs.insert("crystal".to_string(), path.clone());
                outputs.insert("crystal_meta".to_string(), io::sidecar_path(&path));
                Ok(Some(crystal))
            })?
            .expect("equilibrate always produces a crystal");

        let modes = stages
            .run("phonons", || {
                let modes = axial_modes(&crystal.positions)?;
                let spectrum = out.join("spectrum.csv");
                let vectors = out.join("eigenvectors.csv");
                io::write_spectrum_csv(&spectrum, &modes)?;
                io::write_eigenvectors_csv(&vectors, &modes)?;
                outputs.insert("spectrum".to_string(), spectrum);
                outputs.insert("eigenvectors".to_string(), vectors);
                Ok(Some(modes))
            })?
            .expect("phonons always produces modes");

        stages.run("couplings", || {
            let j = coupling_matrix(&modes, &DriveParams::from_detuning(doc.run.delta))?;
            let path = out.join("couplings.csv");
            io::write_couplings_csv(&path, &crystal.positions, &j)?;
            outputs.insert("couplings".to_string(), path);
            Ok(Some(()))
        })?;

        stages.run("sweep", || {
            let path = out.join("sweep.csv");
            let pairs = doc.n_ions * doc.n_ions.saturating_sub(1) / 2;
            let skipped = pairs < 2;
            let sweep = if skipped {
                Vec::new()
            } else {
                detuning_sweep(
                    &modes,
                    &crystal.positions,
                    &log_grid(&doc.run.delta_grid),
                    ResidualMetric::Log,
                )?
            };
            io::write_sweep_csv(&path, &sweep)?;
            outputs.insert("sweep".to_string(), path);
            Ok(if skipped { None } else { Some(()) })
        })?;
        Ok(())
    })();

    manifest.stages = stages.records;
    manifest.outputs = outputs;
    io::write_json(&out.join(MANIFEST_FILE), &manifest)?;
    result.map(|_| manifest)
}

/// Harmonic quadrupole-wall crystal used as the uniformity baseline.
///
/// Wall amplitude `omega_eff^2 / 8`, seeded from a circular patch of triangular lattice.
pub fn comparison_crystal(
    n_ions: usize,
    settings: &MinimizerSettings,
) -> Result<(PotentialParams, CrystalConfiguration)> {
    let omega = COMPARISON_OMEGA_EFF;
    let params = PotentialParams {
        omega_eff: omega,
        c4: 0.0,
        v_w: omega * omega / 8.0,
        wall: WallOrder::Quadrupole,
    };
    let radius = ((n_ions as f64).sqrt() / (omega * omega)).cbrt();
    let spacing = radius * (2.0 * std::f64::consts::PI / (3f64.sqrt() * n_ions as f64)).sqrt();
    let crystal = minimize(&params, &build_disc_seed(n_ions, spacing), settings)?;
    Ok((params, crystal))
}

fn load_crystal(manifest: &RunManifest) -> Result<Vec<[f64; 2]>> {
    io::read_positions_csv(manifest.output("crystal")?)
}

fn neighbor_rows(positions: &[[f64; 2]]) -> Result<Vec<Vec<String>>> {
    let report = nearest_neighbor_distances(positions)?;
    Ok(report
        .first_shell
        .iter()
        .map(|e| {
            vec![
                e.ion.to_string(),
                e.neighbor.to_string(),
                format_number(e.rho),
                format_number(e.distance),
            ]
        })
        .collect())
}

fn linear_grid(grid: &LinearGrid) -> Vec<f64> {
    let count = ((grid.stop - grid.start) / grid.step + 0.5).floor().max(0.0) as usize + 1;
    (0..count).map(|k| grid.start + grid.step * k as f64).collect()
}

/// Writes the plot-ready data of one figure into `out_dir`, returning the files.
pub fn emit_figure_data(manifest: &RunManifest, figure_id: &str, out_dir: &Path) -> Result<Vec<PathBuf>> {
    if !FIGURE_IDS.contains(&figure_id) {
        return Err(Error::UnknownFigure(figure_id.to_string()));
    }
    let params = manifest.params;
    let settings = MinimizerSettings::default();
    let mut written = Vec::new();
    let mut save = |name: String, header: &[&str], rows: Vec<Vec<String>>| -> Result<()> {
        let path = out_dir.join(name);
        io::write_csv(&path, header, &rows)?;
        written.push(path);
        Ok(())
    };

    match figure_id {
        "fig1" => {
            for strength in SEPARATRIX_STRENGTHS {
                let p = PotentialParams {
                    v_w: strength * params.omega_eff * params.omega_eff / 3.0,
                    wall: WallOrder::Triangular,
                    ..params
                };
                let contour = separatrix_contour(&p, DEFAULT_ANGULAR_SAMPLES)?;
                let rows = contour
                    .points
                    .iter()
                    .map(|(t, r)| vec![format_number(*t), format_number(*r)])
                    .collect();
                save(format!("fig1_separatrix_{strength}.csv"), io::SEPARATRIX_HEADER, rows)?;
            }
        }
        "fig2" => {
            let positions = load_crystal(manifest)?;
            let rows = positions
                .iter()
                .enumerate()
                .map(|(i, p)| {
                    vec![
                        i.to_string(),
                        format_number(p[0]),
                        format_number(p[1]),
                        format_number(p[0].hypot(p[1])),
                    ]
                })
                .collect();
            save(
                "fig2_crystal.csv".into(),
                &["index", "x_over_l0", "y_over_l0", "rho_over_l0"],
                rows,
            )?;
        }
        "fig3" => {
            let header = &["ion", "neighbor", "rho_over_l0", "d_over_l0"];
            let positions = load_crystal(manifest)?;
            save("fig3_triangular.csv".into(), header, neighbor_rows(&positions)?)?;
            let (_, baseline) = comparison_crystal(manifest.n_ions, &settings)?;
            save(
                "fig3_quadrupole.csv".into(),
                header,
                neighbor_rows(&baseline.positions)?,
            )?;
            save(
                "fig3_quadrupole_crystal.csv".into(),
                io::CRYSTAL_HEADER,
                io::positions_rows(&baseline.positions),
            )?;
        }
        "fig4" => {
            let grid = linear_grid(&manifest.config.run.omega_eff_grid);
            let scan = scan_stability(
                &params,
                manifest.n_ions,
                &grid,
                &settings,
                manifest.config.run.seed_spacing,
            );
            let mut spectrum = Vec::new();
            let mut summary = Vec::new();
            for point in &scan.points {
                for (nu, w) in point.frequencies.iter().enumerate() {
                    spectrum.push(vec![format_number(point.omega_eff), nu.to_string(), format_number(*w)]);
                }
                summary.push(vec![
                    format_number(point.omega_eff),
                    point.min_eigenvalue.map_or_else(|| "nan".to_string(), format_number),
                    point.stable.to_string(),
                    point.converged.to_string(),
                ]);
            }
            save(
                "fig4_spectra.csv".into(),
                &["omega_eff_over_omega_z", "mode_index", "omega_over_omega_z"],
                spectrum,
            )?;
            save(
                "fig4_stability.csv".into(),
                &["omega_eff_over_omega_z", "min_eigenvalue", "stable", "converged"],
                summary,
            )?;
        }
        "fig5" => {
            let positions = load_crystal(manifest)?;
            let modes = axial_modes(&positions)?;
            let rows = modes
                .frequencies
                .iter()
                .enumerate()
                .map(|(nu, w)| vec![nu.to_string(), format_number(*w), modes.mode_stable[nu].to_string()])
                .collect();
            save("fig5_spectrum.csv".into(), io::SPECTRUM_HEADER, rows)?;
            let n = modes.len();
            let top: Vec<usize> = (0..n.min(3)).map(|k| n - 1 - k).collect();
            let maps: Vec<Vec<f64>> = top
                .iter()
                .map(|&m| mode_displacement_map(&modes, m))
                .collect::<Result<_>>()?;
            let rows = positions
                .iter()
                .enumerate()
                .map(|(i, p)| {
                    let mut row = vec![i.to_string(), format_number(p[0]), format_number(p[1])];
                    row.extend(maps.iter().map(|m| format_number(m[i])));
                    row
                })
                .collect();
            let names: Vec<String> = top.iter().map(|m| format!("mode_{m}_amplitude")).collect();
            let mut header = vec!["ion_index", "x_over_l0", "y_over_l0"];
            header.extend(names.iter().map(String::as_str));
            save("fig5_modes.csv".into(), &header, rows)?;
        }
        "fig6" => {
            let positions = load_crystal(manifest)?;
            let modes = axial_modes(&positions)?;
            let mut fits = Vec::new();
            for delta in SCATTER_DETUNINGS {
                let j = coupling_matrix(&modes, &DriveParams::from_detuning(delta))?;
                save(
                    format!("fig6_couplings_delta_{delta:e}.csv"),
                    io::COUPLING_HEADER,
                    io::coupling_rows(&positions, &j),
                )?;
                let fit = fit_power_law(&positions, &j, ResidualMetric::Log)?;
                fits.push(vec![
                    format_number(delta),
                    format_number(fit.alpha),
                    format_number(fit.log_j0),
                    fit.pairs_used.to_string(),
                    fit.pairs_excluded.to_string(),
                ]);
            }
            save(
                "fig6_fits.csv".into(),
                &["delta_over_omega_z", "alpha", "ln_J0", "pairs_used", "pairs_excluded"],
                fits,
            )?;
        }
        "fig7" | "fig8" => {
            let positions = load_crystal(manifest)?;
            let modes = axial_modes(&positions)?;
            let grid = log_grid(&manifest.config.run.delta_grid);
            let sweep = detuning_sweep(&modes, &positions, &grid, ResidualMetric::Log)?;
            if figure_id == "fig7" {
                let rows = sweep
                    .iter()
                    .map(|p| vec![format_number(p.delta), format_number(p.fit.alpha)])
                    .collect();
                save("fig7_alpha.csv".into(), &["delta_over_omega_z", "alpha"], rows)?;
            } else {
                let linear = detuning_sweep(&modes, &positions, &grid, ResidualMetric::Linear)?;
                let rows = sweep
                    .iter()
                    .zip(&linear)
                    .map(|(a, b)| {
                        vec![
                            format_number(a.delta),
                            format_number(a.fit.normalized_rmsd.unwrap_or(f64::NAN)),
                            format_number(b.fit.normalized_rmsd.unwrap_or(f64::NAN)),
                        ]
                    })
                    .collect();
                save(
                    "fig8_rmsd.csv".into(),
                    &["delta_over_omega_z", "normalized_rmsd_log", "normalized_rmsd_linear"],
                    rows,
                )?;
            }
        }
        _ => unreachable!("figure ids checked above"),
    }
    Ok(written)
}
