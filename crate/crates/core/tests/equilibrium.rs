use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use penning_crystal::equilibrium::{equilibrate, minimize_positions, Method, MinimizerSettings};
use penning_crystal::lattice::{build_seed, default_spacing};
use penning_crystal::neighbors::nearest_neighbor_distances;
use penning_crystal::phonons::axial_modes;
use penning_crystal::pipeline::comparison_crystal;
use penning_crystal::potential::{energy, PotentialParams};

fn reference_params() -> PotentialParams {
    PotentialParams::new(0.25, 0.002472, 0.0025)
}

#[test]
fn two_ion_separation_and_modes() {
    // dE/drho = 0 for ions at (+-rho, 0): 2 w^2 rho = 1 / (4 rho^2)
    let w: f64 = 0.25;
    let rho = (4.0 * w * w).powf(-1.0 / 3.0);
    let d = 2.0 * rho;
    assert!((d - 2.0 * 4f64.cbrt()).abs() < 1e-12);

    let params = PotentialParams::new(w, 0.0, 0.0);
    let crystal = equilibrate(&params, 2, None, &MinimizerSettings::default()).unwrap();
    assert!(crystal.converged);
    let p = &crystal.positions;
    let sep = (p[0][0] - p[1][0]).hypot(p[0][1] - p[1][1]);
    assert!((sep - d).abs() < 1e-8, "separation {sep}");

    let modes = axial_modes(p).unwrap();
    let stretch = (1.0 - 2.0 / d.powi(3)).sqrt();
    assert!((modes.frequencies[0] - stretch).abs() < 1e-9);
    assert!((modes.frequencies[1] - 1.0).abs() < 1e-9);
}

#[test]
fn single_ion_sits_at_origin() {
    let crystal = equilibrate(&reference_params(), 1, None, &MinimizerSettings::default()).unwrap();
    assert_eq!(crystal.positions, vec![[0.0, 0.0]]);
    assert_eq!(crystal.energy, 0.0);
}

#[test]
fn best_case_crystal_is_stable() {
    let crystal = equilibrate(&reference_params(), 85, None, &MinimizerSettings::default()).unwrap();
    assert!(crystal.converged);
    assert!(crystal.gradient_norm <= 1e-10);
    let modes = axial_modes(&crystal.positions).unwrap();
    assert!(modes.stable, "lowest eigenvalue {}", modes.min_eigenvalue());
    // no axial mode above the centre-of-mass mode
    assert!(modes.frequencies.iter().all(|w| *w <= 1.0 + 1e-9));
    let below_com = &modes.frequencies[..84];
    assert!(below_com.iter().all(|w| *w < 1.0));
}

#[test]
fn converged_energy_has_threefold_degeneracy() {
    let params = reference_params();
    let crystal = equilibrate(&params, 85, None, &MinimizerSettings::default()).unwrap();
    let (s, c) = (2.0 * PI / 3.0).sin_cos();
    let rotated: Vec<[f64; 2]> = crystal
        .positions
        .iter()
        .map(|p| [c * p[0] - s * p[1], s * p[0] + c * p[1]])
        .collect();
    let e = energy(&params, &rotated).unwrap();
    assert!((e - crystal.energy).abs() <= 1e-10 * crystal.energy.abs());
}

#[test]
fn energy_never_increases_across_accepted_steps() {
    let params = reference_params();
    let seed = build_seed(85, default_spacing(85, 0.25), &params);
    for method in [Method::TrustRegionBfgs, Method::TrustRegionNewton] {
        let settings = MinimizerSettings {
            method,
            ..Default::default()
        };
        let run = minimize_positions(&params, &seed.positions, &settings).unwrap();
        assert!(run.energy_history.first().unwrap() >= &run.crystal.energy);
        for w in run.energy_history.windows(2) {
            // below round-off the energy can wobble by a few ulps
            assert!(w[1] <= w[0] + 1e-13 * w[0].abs(), "{method:?}: {} -> {}", w[0], w[1]);
        }
    }
}

#[test]
fn seed_spacing_changes_of_fifty_percent_still_converge_to_stable_crystals() {
    let params = reference_params();
    let base = default_spacing(85, 0.25);
    for factor in [0.5, 0.75, 1.25, 1.5] {
        let crystal = equilibrate(&params, 85, Some(factor * base), &MinimizerSettings::default()).unwrap();
        assert!(crystal.converged, "spacing x{factor}");
        assert!(axial_modes(&crystal.positions).unwrap().stable, "spacing x{factor}");
    }
}

#[test]
fn perturbed_seeds_reach_the_same_energy() {
    let params = reference_params();
    let settings = MinimizerSettings::default();
    let seed = build_seed(85, default_spacing(85, 0.25), &params);
    let reference = minimize_positions(&params, &seed.positions, &settings).unwrap().crystal;
    let mut rng = ChaCha8Rng::seed_from_u64(20_140_601);
    let mut worst: f64 = 0.0;
    for _ in 0..5 {
        let perturbed: Vec<[f64; 2]> = seed
            .positions
            .iter()
            .map(|p| {
                [
                    p[0] + rng.random_range(-0.05..0.05),
                    p[1] + rng.random_range(-0.05..0.05),
                ]
            })
            .collect();
        let crystal = minimize_positions(&params, &perturbed, &settings).unwrap().crystal;
        assert!(crystal.converged);
        worst = worst.max(((crystal.energy - reference.energy) / reference.energy).abs());
    }
    assert!(worst <= 1e-6, "largest relative energy difference {worst:e}");
}

#[test]
fn triangular_wall_crystal_is_more_uniform_than_quadrupole_baseline() {
    let settings = MinimizerSettings::default();
    let crystal = equilibrate(&reference_params(), 85, None, &settings).unwrap();
    let (_, baseline) = comparison_crystal(85, &settings).unwrap();
    assert!(baseline.converged);
    assert!(axial_modes(&baseline.positions).unwrap().stable);
    let tri = nearest_neighbor_distances(&crystal.positions).unwrap();
    let quad = nearest_neighbor_distances(&baseline.positions).unwrap();
    assert!(tri.variance < quad.variance, "{} vs {}", tri.variance, quad.variance);
    // every first-shell entry is a Delaunay edge
    for e in &tri.first_shell {
        let key = (e.ion.min(e.neighbor), e.ion.max(e.neighbor));
        assert!(tri.delaunay_edges.iter().any(|d| (d.0, d.1) == key));
    }
}
