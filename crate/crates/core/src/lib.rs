//! Planar ion crystals in a Penning trap with a quartic term and a triangular rotating
//! wall: equilibrium positions, axial phonons and the phonon-mediated Ising couplings.
//!
//! All quantities are dimensionless. Lengths are in `l0 = (k_e e^2 / (m omega_z^2))^(1/3)`,
//! energies in `m omega_z^2 l0^2` and frequencies in `omega_z`. See [`units`] for the
//! conversions.

// `!(x > 0.0)` is used on purpose so that NaN is rejected too.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod couplings;
pub mod equilibrium;
pub mod error;
pub mod io;
pub mod lattice;
pub mod neighbors;
pub mod phonons;
pub mod pipeline;
pub mod potential;
pub mod units;

pub use couplings::{
    alpha_curve, coupling_matrix, coupling_time_series, detuning_sweep, fit_power_law, CouplingMatrix, DriveParams,
    PowerLawFit, ResidualMetric,
};
pub use equilibrium::{equilibrate, minimize, MinimizerSettings};
pub use error::{Error, Result};
pub use lattice::{build_seed, shell_count, SeedLattice};
pub use neighbors::nearest_neighbor_distances;
pub use phonons::{build_stiffness, mode_displacement_map, scan_stability, solve_modes, AxialModeSet};
pub use pipeline::{emit_figure_data, run_pipeline, RunManifest};
pub use potential::{energy, gradient, radial_trap_force, separatrix_contour, CrystalConfiguration, PotentialParams};
pub use units::{convert_anharmonic, effective_frequency, planar_confinement_ratio, TrapConfig};
