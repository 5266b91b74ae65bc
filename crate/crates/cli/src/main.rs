use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use log::info;

use penning_crystal::couplings::{coupling_matrix, detuning_sweep, log_grid, DriveParams, ResidualMetric};
use penning_crystal::equilibrium::{equilibrate, Method, MinimizerSettings};
use penning_crystal::io;
use penning_crystal::phonons::{axial_modes, scan_stability};
use penning_crystal::pipeline::{
    emit_figure_data, resolve_config, run_pipeline, PipelineOptions, RunManifest, FIGURE_IDS, MANIFEST_FILE,
};
use penning_crystal::potential::{separatrix_contour, DEFAULT_ANGULAR_SAMPLES};
use penning_crystal::units::{ConfigDocument, LinearGrid, LogGrid};

/// Planar Penning-trap ion crystals: equilibria, axial phonons and Ising couplings.
#[derive(Parser)]
#[command(version, about)]
struct Cli {
    #[command(flatten)]
    global: Global,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Global {
    /// JSON configuration document.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(long, global = true, default_value = "out")]
    out_dir: PathBuf,
    /// Worker threads for scans and sweeps (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Seed lattice spacing in l0, overriding the config.
    #[arg(long, global = true)]
    seed_spacing: Option<f64>,
    #[arg(long, global = true, value_enum, default_value_t = MethodArg::Bfgs)]
    method: MethodArg,
}

#[derive(Clone, Copy, ValueEnum)]
enum MethodArg {
    Bfgs,
    Newton,
    Descent,
}

#[derive(Clone, Copy, ValueEnum)]
enum MetricArg {
    Log,
    Linear,
}

#[derive(Subcommand)]
enum Command {
    /// Run every stage and write the manifest.
    Pipeline,
    /// Minimize the crystal described by the config.
    Equilibrate,
    /// Axial modes of a crystal CSV.
    Phonons {
        #[arg(long)]
        crystal: Option<PathBuf>,
    },
    /// Coupling matrix at one detuning.
    Couplings {
        #[arg(long)]
        crystal: Option<PathBuf>,
        /// delta = mu - 1 in units of omega_z (default: the config's run.delta).
        #[arg(long)]
        delta: Option<f64>,
    },
    /// Power-law fits over a log grid of detunings.
    Sweep {
        #[arg(long)]
        crystal: Option<PathBuf>,
        #[arg(long)]
        delta_min: Option<f64>,
        #[arg(long)]
        delta_max: Option<f64>,
        #[arg(long)]
        points: Option<usize>,
        #[arg(long, value_enum, default_value_t = MetricArg::Log)]
        metric: MetricArg,
    },
    /// Stability scan over omega_eff at the configured C4 and V_W.
    Scan {
        #[arg(long)]
        start: Option<f64>,
        #[arg(long)]
        stop: Option<f64>,
        #[arg(long)]
        step: Option<f64>,
        /// Wall amplitude override.
        #[arg(long)]
        v_w: Option<f64>,
    },
    /// Zero-force contour of the configured potential.
    Separatrix {
        #[arg(long, default_value_t = DEFAULT_ANGULAR_SAMPLES)]
        samples: usize,
        /// Wall amplitude override.
        #[arg(long)]
        v_w: Option<f64>,
    },
    /// Plot-ready data for one figure, or all of them.
    Figure {
        /// fig1 .. fig8 or "all".
        id: String,
        /// Manifest of an earlier pipeline run (default: <out-dir>/manifest.json).
        #[arg(long)]
        manifest: Option<PathBuf>,
    },
}

fn settings(global: &Global) -> MinimizerSettings {
    let method = match global.method {
        MethodArg::Bfgs => Method::TrustRegionBfgs,
        MethodArg::Newton => Method::TrustRegionNewton,
        MethodArg::Descent => Method::GradientDescent,
    };
    MinimizerSettings {
        method,
        ..Default::default()
    }
}

fn load_config(global: &Global) -> Result<ConfigDocument> {
    let path = global
        .config
        .as_deref()
        .context("--config is required for this command")?;
    ConfigDocument::from_path(path).with_context(|| format!("reading {}", path.display()))
}

/// The config when given, otherwise the one recorded in the manifest under the output directory.
fn config_or_manifest(global: &Global) -> Result<ConfigDocument> {
    if global.config.is_some() {
        return load_config(global);
    }
    let manifest = global.out_dir.join(MANIFEST_FILE);
    if manifest.exists() {
        return Ok(RunManifest::load(&manifest)?.config);
    }
    bail!(
        "pass --config or run the pipeline into {} first",
        global.out_dir.display()
    )
}

fn crystal_path(global: &Global, given: &Option<PathBuf>) -> PathBuf {
    given.clone().unwrap_or_else(|| global.out_dir.join("crystal.csv"))
}

fn read_crystal(path: &Path) -> Result<Vec<[f64; 2]>> {
    io::read_positions_csv(path).with_context(|| format!("reading crystal {}", path.display()))
}

fn out_file(global: &Global, name: &str) -> Result<PathBuf> {
    fs::create_dir_all(&global.out_dir).with_context(|| format!("creating {}", global.out_dir.display()))?;
    Ok(global.out_dir.join(name))
}

fn run(cli: Cli) -> Result<()> {
    let g = &cli.global;
    match &cli.command {
        Command::Pipeline => {
            let path = g.config.as_deref().context("--config is required")?;
            let options = PipelineOptions {
                seed_spacing: g.seed_spacing,
                settings: settings(g),
                ..PipelineOptions::new(&g.out_dir)
            };
            let manifest = run_pipeline(path, &options)?;
            for (name, file) in &manifest.outputs {
                println!("{name}\t{}", file.display());
            }
        }
        Command::Equilibrate => {
            let doc = load_config(g)?;
            let (params, _) = resolve_config(&doc)?;
            let spacing = g.seed_spacing.or(doc.run.seed_spacing);
            let crystal = equilibrate(&params, doc.n_ions, spacing, &settings(g))?;
            let path = out_file(g, "crystal.csv")?;
            io::write_crystal(&path, &params, &crystal)?;
            println!(
                "E = {:.12}, |g|_inf = {:.3e}, converged = {}, {} iterations -> {}",
                crystal.energy,
                crystal.gradient_norm,
                crystal.converged,
                crystal.iterations,
                path.display()
            );
        }
        Command::Phonons { crystal } => {
            let positions = read_crystal(&crystal_path(g, crystal))?;
            let modes = axial_modes(&positions)?;
            io::write_spectrum_csv(&out_file(g, "spectrum.csv")?, &modes)?;
            io::write_eigenvectors_csv(&out_file(g, "eigenvectors.csv")?, &modes)?;
            println!(
                "{} modes, lowest eigenvalue {:.6e}, stable = {}",
                modes.len(),
                modes.min_eigenvalue(),
                modes.stable
            );
        }
        Command::Couplings { crystal, delta } => {
            let delta = match delta {
                Some(d) => *d,
                None => config_or_manifest(g).map(|d| d.run.delta).unwrap_or(1e-2),
            };
            let positions = read_crystal(&crystal_path(g, crystal))?;
            let modes = axial_modes(&positions)?;
            let j = coupling_matrix(&modes, &DriveParams::from_detuning(delta))?;
            let path = out_file(g, "couplings.csv")?;
            io::write_couplings_csv(&path, &positions, &j)?;
            println!("{} pairs at delta = {delta:e} -> {}", j.pairs().len(), path.display());
        }
        Command::Sweep {
            crystal,
            delta_min,
            delta_max,
            points,
            metric,
        } => {
            let base = config_or_manifest(g).map(|d| d.run.delta_grid).unwrap_or_default();
            let grid = LogGrid {
                min: delta_min.unwrap_or(base.min),
                max: delta_max.unwrap_or(base.max),
                points: points.unwrap_or(base.points),
            };
            let metric = match metric {
                MetricArg::Log => ResidualMetric::Log,
                MetricArg::Linear => ResidualMetric::Linear,
            };
            let positions = read_crystal(&crystal_path(g, crystal))?;
            let modes = axial_modes(&positions)?;
            let sweep = detuning_sweep(&modes, &positions, &log_grid(&grid), metric)?;
            let path = out_file(g, "sweep.csv")?;
            io::write_sweep_csv(&path, &sweep)?;
            println!("{} detunings -> {}", sweep.len(), path.display());
        }
        Command::Scan { start, stop, step, v_w } => {
            let doc = load_config(g)?;
            let (mut params, _) = resolve_config(&doc)?;
            if let Some(v) = v_w {
                params.v_w = *v;
            }
            let base = doc.run.omega_eff_grid;
            let grid = LinearGrid {
                start: start.unwrap_or(base.start),
                stop: stop.unwrap_or(base.stop),
                step: step.unwrap_or(base.step),
            };
            if grid.step.is_nan() || grid.step <= 0.0 || grid.stop < grid.start {
                bail!("scan grid needs step > 0 and stop >= start");
            }
            let count = ((grid.stop - grid.start) / grid.step + 0.5).floor() as usize + 1;
            let values: Vec<f64> = (0..count).map(|k| grid.start + grid.step * k as f64).collect();
            let spacing = g.seed_spacing.or(doc.run.seed_spacing);
            let scan = scan_stability(&params, doc.n_ions, &values, &settings(g), spacing);
            let rows = scan
                .points
                .iter()
                .map(|p| {
                    vec![
                        io::format_number(p.omega_eff),
                        p.min_eigenvalue.map_or_else(|| "nan".to_string(), io::format_number),
                        p.stable.to_string(),
                        p.converged.to_string(),
                    ]
                })
                .collect::<Vec<_>>();
            let path = out_file(g, "scan.csv")?;
            io::write_csv(
                &path,
                &["omega_eff_over_omega_z", "min_eigenvalue", "stable", "converged"],
                &rows,
            )?;
            match scan.band {
                Some((a, b)) => println!("stable band [{a}, {b}] -> {}", path.display()),
                None => println!("no stable point -> {}", path.display()),
            }
        }
        Command::Separatrix { samples, v_w } => {
            let doc = load_config(g)?;
            let (mut params, _) = resolve_config(&doc)?;
            if let Some(v) = v_w {
                params.v_w = *v;
            }
            let contour = separatrix_contour(&params, *samples)?;
            let path = out_file(g, "separatrix.csv")?;
            io::write_separatrix_csv(&path, &contour)?;
            println!("minimum radius {:.6} l0 -> {}", contour.radius, path.display());
        }
        Command::Figure { id, manifest } => {
            let path = manifest.clone().unwrap_or_else(|| g.out_dir.join(MANIFEST_FILE));
            let manifest = RunManifest::load(&path).with_context(|| format!("loading {}", path.display()))?;
            let dir = out_file(g, "figures")?;
            fs::create_dir_all(&dir)?;
            let ids: Vec<&str> = if id == "all" {
                FIGURE_IDS.to_vec()
            } else {
                vec![id.as_str()]
            };
            for id in ids {
                for file in emit_figure_data(&manifest, id, &dir)? {
                    println!("{id}\t{}", file.display());
                }
            }
        }
    }
    Ok(())
}

fn main() -> Result<()> {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    if let Some(threads) = cli.global.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build_global()
            .context("configuring the thread pool")?;
        info!("using {threads} threads");
    }
    run(cli)
}
