//! Closed-shell triangular seed lattices.
//!
//! A lattice point `m a1 + n a2`, with `a1 = (d, 0)` and `a2 = (d/2, sqrt(3) d/2)`,
//! belongs to shell `k = max(m - n, m + 2n, -2m - n)`. Each level set is a triangle
//! with a vertex on the `+x` axis, and shell `k >= 1` holds `3k` sites.

use std::cmp::Ordering;
use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::potential::{single_ion_energy, PotentialParams};

const SQRT3_2: f64 = 0.866_025_403_784_438_6;

/// Relative energy window inside which greedy candidates count as tied.
const TIE_TOLERANCE: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeedLattice {
    pub positions: Vec<[f64; 2]>,
    pub shell_index: Vec<usize>,
    /// True when the ion count fills an integer number of shells.
    pub complete: bool,
    pub spacing: f64,
}

impl SeedLattice {
    pub fn len(&self) -> usize {
        self.positions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.positions.is_empty()
    }
}

/// Number of ions in a lattice with shells `0..=shells` all filled.
pub fn closed_shell_size(shells: usize) -> usize {
    1 + 3 * shells * (shells + 1) / 2
}

/// Number of complete shells beyond the centre ion, `floor(sqrt(2(N-1)/3 + 1/4) - 1/2)`.
pub fn shell_count(n: usize) -> usize {
    assert!(n >= 1, "shell_count needs at least one ion");
    let estimate = ((2.0 * (n as f64 - 1.0) / 3.0 + 0.25).sqrt() - 0.5).floor().max(0.0) as usize;
    // Correct any rounding at exact closed-shell counts.
    let mut s = estimate;
    while closed_shell_size(s + 1) <= n {
        s += 1;
    }
    while s > 0 && closed_shell_size(s) > n {
        s -= 1;
    }
    s
}

fn shell_of(m: i64, n: i64) -> usize {
    (m - n).max(m + 2 * n).max(-2 * m - n) as usize
}

fn lattice_point(m: i64, n: i64, spacing: f64) -> [f64; 2] {
    [spacing * (m as f64 + 0.5 * n as f64), spacing * SQRT3_2 * n as f64]
}

/// Polar angle mapped into `[0, 2 pi)`.
pub fn polar_angle(p: [f64; 2]) -> f64 {
    let theta = p[1].atan2(p[0]);
    let theta = if theta < 0.0 { theta + 2.0 * PI } else { theta };
    // atan2 of a tiny negative y gives a value that rounds to 2 pi
    if theta >= 2.0 * PI {
        0.0
    } else {
        theta
    }
}

/// Sites of one triangular shell, ordered by polar angle.
pub fn shell_sites(shell: usize, spacing: f64) -> Vec<[f64; 2]> {
    if shell == 0 {
        return vec![[0.0, 0.0]];
    }
    let k = shell as i64;
    let mut sites = Vec::with_capacity(3 * shell);
    for m in -2 * k..=2 * k {
        for n in -2 * k..=2 * k {
            if shell_of(m, n) == shell {
                sites.push(lattice_point(m, n, spacing));
            }
        }
    }
    sites.sort_by(|a, b| polar_angle(*a).total_cmp(&polar_angle(*b)));
    sites
}

/// Spacing that puts the outermost shell vertex at the mean-field radius
/// `R` with `w^2 R = sqrt(N) / R^2`.
pub fn default_spacing(n: usize, omega_eff: f64) -> f64 {
    if n <= 1 {
        return 1.0;
    }
    let radius = ((n as f64).sqrt() / (omega_eff * omega_eff)).cbrt();
    let full = shell_count(n);
    let outer = if closed_shell_size(full) == n { full } else { full + 1 };
    radius / outer as f64
}

/// Closed-shell seed with any remaining ions placed greedily on the next shell.
///
/// Each greedy step picks the free site of lowest trap energy plus Coulomb energy from
/// the ions already placed. Ties go to the smallest polar angle.
pub fn build_seed(n: usize, spacing: f64, params: &PotentialParams) -> SeedLattice {
    assert!(n >= 1 && spacing > 0.0, "build_seed needs n >= 1 and spacing > 0");
    let full = shell_count(n);
    let mut positions = Vec::with_capacity(n);
    let mut shell_index = Vec::with_capacity(n);
    for s in 0..=full {
        for site in shell_sites(s, spacing) {
            positions.push(site);
            shell_index.push(s);
        }
    }
    let complete = positions.len() == n;

    let mut candidates = shell_sites(full + 1, spacing);
    while positions.len() < n {
        let scores: Vec<f64> = candidates
            .iter()
            .map(|&c| placement_energy(params, &positions, c))
            .collect();
        let best = scores.iter().copied().fold(f64::INFINITY, f64::min);
        let window = TIE_TOLERANCE * best.abs().max(1.0);
        // candidates are angle-sorted, so the first within the window wins the tie
        let pick = scores
            .iter()
            .position(|&s| s <= best + window)
            .expect("candidate shell has a free site");
        positions.push(candidates.remove(pick));
        shell_index.push(full + 1);
    }

    SeedLattice {
        positions,
        shell_index,
        complete,
        spacing,
    }
}

/// Trap energy of a site plus its Coulomb energy with the placed ions.
pub fn placement_energy(params: &PotentialParams, placed: &[[f64; 2]], site: [f64; 2]) -> f64 {
    let mut e = single_ion_energy(params, site);
    for p in placed {
        e += 1.0 / (p[0] - site[0]).hypot(p[1] - site[1]);
    }
    e
}

/// Triangular lattice cropped by a circle: the `n` sites nearest the origin,
/// ties in radius broken by polar angle. Used for the quadrupole comparison crystal.
pub fn build_disc_seed(n: usize, spacing: f64) -> SeedLattice {
    assert!(n >= 1 && spacing > 0.0, "build_disc_seed needs n >= 1 and spacing > 0");
    let reach = ((n as f64).sqrt() as i64) + 2;
    let mut sites: Vec<(i64, f64, [f64; 2])> = Vec::new();
    for m in -2 * reach..=2 * reach {
        for k in -2 * reach..=2 * reach {
            // squared distance in units of d^2 is the integer m^2 + m k + k^2
            let norm = m * m + m * k + k * k;
            let p = lattice_point(m, k, spacing);
            sites.push((norm, polar_angle(p), p));
        }
    }
    sites.sort_by(|a, b| match a.0.cmp(&b.0) {
        Ordering::Equal => a.1.total_cmp(&b.1),
        other => other,
    });
    let cutoff = sites[n - 1].0;
    let complete = sites.get(n).is_none_or(|next| next.0 != cutoff);
    let chosen: Vec<_> = sites.into_iter().take(n).collect();
    SeedLattice {
        shell_index: chosen.iter().map(|s| (s.0 as f64).sqrt().round() as usize).collect(),
        positions: chosen.into_iter().map(|s| s.2).collect(),
        complete,
        spacing,
    }
}
