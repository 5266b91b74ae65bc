//! Acceptance checks. One PASS/FAIL line per criterion, nonzero exit on any failure.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;
use std::process::ExitCode;
use std::time::Instant;

use nalgebra::DVector;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use penning_crystal::couplings::{coupling_matrix, detuning_sweep, log_grid, DriveParams, ResidualMetric};
use penning_crystal::equilibrium::{equilibrate, MinimizerSettings};
use penning_crystal::lattice::{closed_shell_size, shell_count};
use penning_crystal::neighbors::nearest_neighbor_distances;
use penning_crystal::phonons::{axial_modes, build_stiffness, scan_stability, StabilityScan};
use penning_crystal::pipeline::{
    comparison_crystal, emit_figure_data, run_pipeline_with, PipelineOptions, FIGURE_IDS, MANIFEST_FILE,
};
use penning_crystal::potential::{energy, gradient, CrystalConfiguration, PotentialParams};
use penning_crystal::units::{effective_frequency_from_ratios, ConfigDocument, LinearGrid, LogGrid};

const N: usize = 85;

/// Lines are buffered and printed in criterion order at the end.
struct Report {
    failures: usize,
    lines: Vec<(u32, String)>,
}

impl Report {
    fn push(&mut self, id: &str, line: String) {
        let key = id.split(' ').next().and_then(|k| k.parse().ok()).unwrap_or(u32::MAX);
        self.lines.push((key, line));
    }

    fn check(&mut self, id: &str, pass: bool, detail: String) {
        if !pass {
            self.failures += 1;
        }
        self.push(id, format!("[{}] {id}: {detail}", if pass { "PASS" } else { "FAIL" }));
    }

    fn info(&mut self, id: &str, detail: String) {
        self.push(id, format!("[INFO] {id}: {detail}"));
    }
}

fn best() -> PotentialParams {
    PotentialParams::new(0.25, 0.002472, 0.0025)
}

fn com_residual(positions: &[[f64; 2]]) -> f64 {
    let k = build_stiffness(positions).unwrap().entries;
    let n = positions.len();
    let b = DVector::from_element(n, 1.0 / (n as f64).sqrt());
    (&k * &b - &b).norm()
}

fn random_configuration(rng: &mut ChaCha8Rng, n: usize) -> Vec<[f64; 2]> {
    let half = 1.5 * (n as f64).sqrt() + 1.0;
    let mut out: Vec<[f64; 2]> = Vec::with_capacity(n);
    while out.len() < n {
        let p = [rng.random_range(-half..half), rng.random_range(-half..half)];
        if out.iter().all(|q| (p[0] - q[0]).hypot(p[1] - q[1]) > 0.5) {
            out.push(p);
        }
    }
    out
}

fn central_difference(params: &PotentialParams, positions: &[[f64; 2]], h: f64) -> Vec<f64> {
    let mut out = Vec::with_capacity(2 * positions.len());
    let mut shifted = positions.to_vec();
    for i in 0..positions.len() {
        for c in 0..2 {
            shifted[i][c] = positions[i][c] + h;
            let up = energy(params, &shifted).unwrap();
            shifted[i][c] = positions[i][c] - h;
            let down = energy(params, &shifted).unwrap();
            shifted[i][c] = positions[i][c];
            out.push((up - down) / (2.0 * h));
        }
    }
    out
}

fn linear_grid(grid: &LinearGrid) -> Vec<f64> {
    let count = ((grid.stop - grid.start) / grid.step + 0.5).floor() as usize + 1;
    (0..count).map(|k| grid.start + grid.step * k as f64).collect()
}

fn describe_scan(scan: &StabilityScan) -> String {
    let stable = scan.points.iter().filter(|p| p.stable).count();
    let aborted = scan.points.iter().filter(|p| p.error.is_some()).count();
    let band = scan
        .band
        .map_or_else(|| "none".to_string(), |(a, b)| format!("[{a:.3}, {b:.3}]"));
    format!("band {band}, {stable}/{} stable, {aborted} aborted", scan.points.len())
}

fn read_tree(dir: &Path) -> BTreeMap<String, Vec<u8>> {
    let mut out = BTreeMap::new();
    for entry in fs::read_dir(dir).unwrap() {
        let path = entry.unwrap().path();
        let name = path.file_name().unwrap().to_string_lossy().into_owned();
        if path.is_dir() {
            for (k, v) in read_tree(&path) {
                out.insert(format!("{name}/{k}"), v);
            }
        } else if name != MANIFEST_FILE {
            out.insert(name, fs::read(&path).unwrap());
        }
    }
    out
}

fn full_run(dir: &Path, doc: &ConfigDocument) {
    let manifest = run_pipeline_with(doc, &PipelineOptions::new(dir)).unwrap();
    let figs = dir.join("figures");
    fs::create_dir_all(&figs).unwrap();
    for id in FIGURE_IDS {
        emit_figure_data(&manifest, id, &figs).unwrap();
    }
}

fn main() -> ExitCode {
    let mut r = Report {
        failures: 0,
        lines: Vec::new(),
    };
    let settings = MinimizerSettings::default();

    // 1
    let omega_eff = effective_frequency_from_ratios(9.645, 0.0579).unwrap();
    r.check(
        "1 effective frequency",
        (omega_eff - 0.2339).abs() <= 0.0005,
        format!("omega_eff = {omega_eff:.6}, target 0.2339 +- 0.0005"),
    );

    // 2
    let s = shell_count(85);
    r.check(
        "2 shell arithmetic",
        s == 7 && closed_shell_size(7) == 85 && closed_shell_size(s) == 1 + 3 * 7 * 8 / 2,
        format!("shell_count(85) = {s}, closed_shell_size(7) = {}", closed_shell_size(7)),
    );

    // 3
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut worst: f64 = 0.0;
    for n in [2, 5, 20] {
        for _ in 0..100 {
            let pos = random_configuration(&mut rng, n);
            let g = gradient(&best(), &pos).unwrap();
            let fd = central_difference(&best(), &pos, 1e-5);
            let diff: f64 = g.iter().zip(&fd).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt();
            let size: f64 = g.iter().map(|a| a * a).sum::<f64>().sqrt();
            worst = worst.max(diff / size.max(1e-12));
        }
    }
    r.check(
        "3 gradient vs central differences",
        worst < 1e-6,
        format!("largest relative error {worst:.2e} over 300 configurations"),
    );

    // 4
    let mut converged: Vec<(&str, CrystalConfiguration)> = Vec::new();
    let two = equilibrate(&PotentialParams::new(0.25, 0.0, 0.0), 2, None, &settings).unwrap();
    let d = (two.positions[0][0] - two.positions[1][0]).hypot(two.positions[0][1] - two.positions[1][1]);
    let modes = axial_modes(&two.positions).unwrap();
    let want = [(1.0 - 2.0 / d.powi(3)).sqrt(), 1.0];
    let mode_err = (modes.frequencies[0] - want[0])
        .abs()
        .max((modes.frequencies[1] - want[1]).abs());
    let sep_err = (d - 2.0 * 4f64.cbrt()).abs();
    r.check(
        "4 two-ion oracle",
        two.converged && sep_err < 1e-8 && mode_err < 1e-9,
        format!("separation error {sep_err:.2e}, mode error {mode_err:.2e}"),
    );
    converged.push(("two-ion", two));

    // 6
    let start = Instant::now();
    let crystal = equilibrate(&best(), N, None, &settings).unwrap();
    let (_, baseline) = comparison_crystal(N, &settings).unwrap();
    let elapsed = start.elapsed().as_secs_f64();
    let modes = axial_modes(&crystal.positions).unwrap();
    let tri = nearest_neighbor_distances(&crystal.positions).unwrap();
    let quad = nearest_neighbor_distances(&baseline.positions).unwrap();
    r.check(
        "6 N=85 stable crystal",
        crystal.converged && modes.stable && tri.variance < quad.variance && elapsed < 60.0,
        format!(
            "min eigenvalue {:.4}, NN variance {:.4} vs quadrupole {:.4}, {elapsed:.1}s",
            modes.min_eigenvalue(),
            tri.variance,
            quad.variance
        ),
    );
    r.info(
        "6 shape",
        format!(
            "max radius {:.2} l0, quadrupole max radius {:.2} l0, unfiltered NN variance {:.4} vs {:.4}",
            crystal.max_radius(),
            baseline.max_radius(),
            tri.raw_variance,
            quad.raw_variance
        ),
    );

    // 7
    let grid = linear_grid(&LinearGrid::default());
    let weak = scan_stability(&best(), N, &grid, &settings, None);
    let strong = scan_stability(&PotentialParams::new(0.25, 0.002472, 0.004), N, &grid, &settings, None);
    let contained = match (weak.band, strong.band) {
        (Some((a, b)), Some((c, d))) => a <= c && d <= b && (a, b) != (c, d),
        _ => false,
    };
    r.check(
        "7 stability band shrinkage",
        contained,
        format!(
            "V_W=0.0025: {}; V_W=0.004: {}",
            describe_scan(&weak),
            describe_scan(&strong)
        ),
    );
    if let Some(reason) = strong.points.iter().find_map(|p| p.error.clone()) {
        r.info("7 first V_W=0.004 failure", reason);
    }

    // 8
    let tilt_crystal = equilibrate(&PotentialParams::new(0.24, 0.002472, 0.0025), N, None, &settings).unwrap();
    let tilt = axial_modes(&tilt_crystal.positions).unwrap();
    let split = (tilt.frequencies[N - 2] - tilt.frequencies[N - 3]).abs();
    r.check(
        "8 tilt-mode near-degeneracy",
        tilt_crystal.converged && split < 1e-3,
        format!(
            "modes {:.6} and {:.6}, splitting {split:.2e}",
            tilt.frequencies[N - 3],
            tilt.frequencies[N - 2]
        ),
    );

    // 5, over every crystal converged above
    converged.push(("N=85", crystal.clone()));
    converged.push(("quadrupole", baseline));
    converged.push(("tilt", tilt_crystal));
    let mut worst_com: f64 = 0.0;
    for (_, c) in &converged {
        if c.converged {
            worst_com = worst_com.max(com_residual(&c.positions));
        }
    }
    r.check(
        "5 COM eigenpair",
        worst_com < 1e-10,
        format!("largest residual {worst_com:.2e} over {} crystals", converged.len()),
    );

    // 9
    let deltas = log_grid(&LogGrid::default());
    let sweep = detuning_sweep(&modes, &crystal.positions, &deltas, ResidualMetric::Log).unwrap();
    let alpha_at = |delta: f64| {
        let j = coupling_matrix(&modes, &DriveParams::from_detuning(delta)).unwrap();
        penning_crystal::fit_power_law(&crystal.positions, &j, ResidualMetric::Log)
            .unwrap()
            .alpha
    };
    let (low, high) = (alpha_at(1e-6), alpha_at(1e3));
    let largest_drop = sweep
        .windows(2)
        .map(|w| w[0].fit.alpha - w[1].fit.alpha)
        .fold(0.0, f64::max);
    r.check(
        "9 power-law limits",
        low < 0.05 && (2.9..=3.0).contains(&high) && largest_drop < 0.05,
        format!("alpha(1e-6) = {low:.4}, alpha(1e3) = {high:.4}, largest decrease {largest_drop:.2e}"),
    );

    // 10
    let mu: f64 = 1e3;
    let j = coupling_matrix(&modes, &DriveParams { mu, force: 1.0 }).unwrap();
    let k = build_stiffness(&crystal.positions).unwrap();
    let worst_ratio = j
        .pairs()
        .iter()
        .map(|&(a, b, v)| (v * 4.0 * mu.powi(4) / k.entries[(a, b)] - 1.0).abs())
        .fold(0.0, f64::max);
    r.check(
        "10 dipole asymptotics",
        worst_ratio < 0.01,
        format!(
            "largest |J*4mu^4/K - 1| = {worst_ratio:.2e} over {} pairs",
            j.pairs().len()
        ),
    );

    // 11
    let profile = |metric: ResidualMetric| {
        let points = detuning_sweep(&modes, &crystal.positions, &deltas, metric).unwrap();
        let values: Vec<f64> = points.iter().map(|p| p.fit.normalized_rmsd.unwrap()).collect();
        let argmax = values
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.total_cmp(b.1))
            .map(|(i, _)| deltas[i])
            .unwrap();
        let in_range = values.iter().all(|v| (0.0..=1.0).contains(v));
        let peak = values.iter().cloned().fold(f64::MIN, f64::max);
        let (first, last) = (values[0], values[values.len() - 1]);
        let pass = in_range && peak == 1.0 && first < 0.1 && last < 0.1 && (1e-4..=1e1).contains(&argmax);
        (
            pass,
            format!("endpoints {first:.3} and {last:.3}, maximum at delta = {argmax:.3e}"),
        )
    };
    let (pass, detail) = profile(ResidualMetric::Log);
    r.check("11 RMSD profile (log residuals)", pass, detail);
    let (pass, detail) = profile(ResidualMetric::Linear);
    r.info(
        "11 RMSD profile (linear residuals)",
        format!(
            "{} under the same test: {detail}",
            if pass { "passes" } else { "fails" }
        ),
    );

    // 12
    let doc = ConfigDocument::from_json_str(
        r#"{"omega_z_hz": 795e3, "omega_c_ratio": 9.645, "omega_eff_ratio": 0.25,
            "c4": 0.002472, "v_w": 0.0025, "n_ions": 85}"#,
    )
    .unwrap();
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    full_run(a.path(), &doc);
    full_run(b.path(), &doc);
    let (ta, tb) = (read_tree(a.path()), read_tree(b.path()));
    let differing: Vec<&String> = ta.keys().filter(|k| ta.get(*k) != tb.get(*k)).collect();
    r.check(
        "12 determinism",
        ta.len() == tb.len() && differing.is_empty(),
        format!(
            "{} files compared, {} differ {:?}",
            ta.len(),
            differing.len(),
            differing
        ),
    );

    r.lines.sort_by_key(|l| l.0);
    for (_, line) in &r.lines {
        println!("{line}");
    }
    println!("{} failure(s)", r.failures);
    if r.failures == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
