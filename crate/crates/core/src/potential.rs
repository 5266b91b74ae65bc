//! The dimensionless rotating-frame potential
//!
//! `e = sum_i [ w^2/2 (rho_i^2 + C4 rho_i^4) + V_W Re((x_i + i y_i)^l) ] + sum_{i<j} 1/r_ij`
//!
//! with `l = 3` for the triangular wall (`x^3 - 3 x y^2`). The `l = 2` quadrupole
//! wall (`x^2 - y^2`) is kept for building comparison crystals.
//!
//! Gradients and Hessians use a flat layout `(x_1, y_1, ..., x_N, y_N)`.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Pair separations below this are treated as coincident ions.
pub const COINCIDENCE_GUARD: f64 = 1e-9;

/// Upper end of the bracket searched for the separatrix.
pub const SEPARATRIX_RHO_MAX: f64 = 1e3;
pub const SEPARATRIX_TOLERANCE: f64 = 1e-10;
pub const DEFAULT_ANGULAR_SAMPLES: usize = 720;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum WallOrder {
    /// `l = 2`, `V (x^2 - y^2)`.
    Quadrupole,
    /// `l = 3`, `V (x^3 - 3 x y^2)`.
    #[default]
    Triangular,
}

impl WallOrder {
    pub fn order(self) -> i32 {
        match self {
            WallOrder::Quadrupole => 2,
            WallOrder::Triangular => 3,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PotentialParams {
    /// Effective radial frequency in units of `omega_z`.
    pub omega_eff: f64,
    pub c4: f64,
    /// Wall amplitude in units of `omega_z^2`.
    pub v_w: f64,
    #[serde(default)]
    pub wall: WallOrder,
}

impl PotentialParams {
    pub fn new(omega_eff: f64, c4: f64, v_w: f64) -> Self {
        PotentialParams {
            omega_eff,
            c4,
            v_w,
            wall: WallOrder::Triangular,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.omega_eff > 0.0 && self.omega_eff.is_finite()) {
            return Err(Error::ConfigInvalid(format!(
                "omega_eff must be positive, got {}",
                self.omega_eff
            )));
        }
        if !(self.c4 >= 0.0) || !(self.v_w >= 0.0) {
            return Err(Error::ConfigInvalid(format!(
                "c4 and v_w must be non-negative, got c4 = {}, v_w = {}",
                self.c4, self.v_w
            )));
        }
        Ok(())
    }

    fn w2(&self) -> f64 {
        self.omega_eff * self.omega_eff
    }
}

/// Equilibrium state of the crystal, positions in units of `l0`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CrystalConfiguration {
    pub positions: Vec<[f64; 2]>,
    /// Energy in units of `E0`.
    pub energy: f64,
    /// Infinity norm of the gradient.
    pub gradient_norm: f64,
    pub converged: bool,
    pub iterations: usize,
}

impl CrystalConfiguration {
    pub fn len(&self) -> usize {
        self.positions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.positions.is_empty()
    }

    pub fn max_radius(&self) -> f64 {
        self.positions.iter().map(|p| p[0].hypot(p[1])).fold(0.0, f64::max)
    }
}

/// `Re((x + i y)^l)` and its first derivatives.
fn wall_term(order: WallOrder, x: f64, y: f64) -> (f64, f64, f64) {
    match order {
        WallOrder::Quadrupole => (x * x - y * y, 2.0 * x, -2.0 * y),
        WallOrder::Triangular => (x * x * x - 3.0 * x * y * y, 3.0 * (x * x - y * y), -6.0 * x * y),
    }
}

/// Trap plus wall energy of one ion, no Coulomb term.
pub fn single_ion_energy(params: &PotentialParams, p: [f64; 2]) -> f64 {
    let rho2 = p[0] * p[0] + p[1] * p[1];
    let (wall, _, _) = wall_term(params.wall, p[0], p[1]);
    0.5 * params.w2() * (rho2 + params.c4 * rho2 * rho2) + params.v_w * wall
}

fn pair_distance(positions: &[[f64; 2]], i: usize, j: usize) -> Result<f64> {
    let dx = positions[i][0] - positions[j][0];
    let dy = positions[i][1] - positions[j][1];
    let r = dx.hypot(dy);
    if r < COINCIDENCE_GUARD || !r.is_finite() {
        return Err(Error::CoincidentIons {
            first: i,
            second: j,
            distance: r,
        });
    }
    Ok(r)
}

/// Fails with `CoincidentIons` if any pair is closer than the guard distance.
pub fn check_distinct(positions: &[[f64; 2]]) -> Result<()> {
    for i in 0..positions.len() {
        for j in (i + 1)..positions.len() {
            pair_distance(positions, i, j)?;
        }
    }
    Ok(())
}

pub fn energy(params: &PotentialParams, positions: &[[f64; 2]]) -> Result<f64> {
    let mut trap = 0.0;
    for &p in positions {
        trap += single_ion_energy(params, p);
    }
    let mut coulomb = 0.0;
    for i in 0..positions.len() {
        for j in (i + 1)..positions.len() {
            coulomb += 1.0 / pair_distance(positions, i, j)?;
        }
    }
    Ok(trap + coulomb)
}

/// Analytic gradient in flat `(x_1, y_1, ..., x_N, y_N)` order.
pub fn gradient(params: &PotentialParams, positions: &[[f64; 2]]) -> Result<Vec<f64>> {
    energy_and_gradient(params, positions).map(|(_, g)| g)
}

pub fn energy_and_gradient(params: &PotentialParams, positions: &[[f64; 2]]) -> Result<(f64, Vec<f64>)> {
    let n = positions.len();
    let w2 = params.w2();
    let mut grad = vec![0.0; 2 * n];
    let mut total = 0.0;
    for (i, &[x, y]) in positions.iter().enumerate() {
        let rho2 = x * x + y * y;
        let (wall, wx, wy) = wall_term(params.wall, x, y);
        total += 0.5 * w2 * (rho2 + params.c4 * rho2 * rho2) + params.v_w * wall;
        let radial = w2 * (1.0 + 2.0 * params.c4 * rho2);
        grad[2 * i] += radial * x + params.v_w * wx;
        grad[2 * i + 1] += radial * y + params.v_w * wy;
    }
    for i in 0..n {
        for j in (i + 1)..n {
            let r = pair_distance(positions, i, j)?;
            total += 1.0 / r;
            let inv3 = 1.0 / (r * r * r);
            let fx = (positions[i][0] - positions[j][0]) * inv3;
            let fy = (positions[i][1] - positions[j][1]) * inv3;
            grad[2 * i] -= fx;
            grad[2 * i + 1] -= fy;
            grad[2 * j] += fx;
            grad[2 * j + 1] += fy;
        }
    }
    Ok((total, grad))
}

/// Analytic Hessian, row-major `2N x 2N` in the flat layout.
pub fn hessian(params: &PotentialParams, positions: &[[f64; 2]]) -> Result<Vec<f64>> {
    let n = positions.len();
    let dim = 2 * n;
    let w2 = params.w2();
    let mut h = vec![0.0; dim * dim];
    let idx = |a: usize, b: usize| a * dim + b;
    for (i, &[x, y]) in positions.iter().enumerate() {
        let rho2 = x * x + y * y;
        let base = w2 * (1.0 + 2.0 * params.c4 * rho2);
        let quartic = 4.0 * w2 * params.c4;
        let (wxx, wxy, wyy) = match params.wall {
            WallOrder::Quadrupole => (2.0, 0.0, -2.0),
            WallOrder::Triangular => (6.0 * x, -6.0 * y, -6.0 * x),
        };
        let (a, b) = (2 * i, 2 * i + 1);
        h[idx(a, a)] += base + quartic * x * x + params.v_w * wxx;
        h[idx(b, b)] += base + quartic * y * y + params.v_w * wyy;
        h[idx(a, b)] += quartic * x * y + params.v_w * wxy;
        h[idx(b, a)] += quartic * x * y + params.v_w * wxy;
    }
    for i in 0..n {
        for j in (i + 1)..n {
            let r = pair_distance(positions, i, j)?;
            let d = [positions[i][0] - positions[j][0], positions[i][1] - positions[j][1]];
            let inv3 = 1.0 / (r * r * r);
            let inv5 = inv3 / (r * r);
            for a in 0..2 {
                for b in 0..2 {
                    let delta = if a == b { 1.0 } else { 0.0 };
                    let block = 3.0 * d[a] * d[b] * inv5 - delta * inv3;
                    h[idx(2 * i + a, 2 * i + b)] += block;
                    h[idx(2 * j + a, 2 * j + b)] += block;
                    h[idx(2 * i + a, 2 * j + b)] -= block;
                    h[idx(2 * j + a, 2 * i + b)] -= block;
                }
            }
        }
    }
    Ok(h)
}

/// Radial component of the single-ion trap force, `-d/d rho` of the trap and wall terms.
///
/// `F_r = -[w^2 rho + 2 w^2 C4 rho^3 + l V_W Re((x + i y)^l) / rho]`
pub fn radial_trap_force(params: &PotentialParams, p: [f64; 2]) -> Result<f64> {
    let rho = p[0].hypot(p[1]);
    if rho == 0.0 {
        return Err(Error::OriginUndefined);
    }
    Ok(radial_force_polar(params, rho, p[1].atan2(p[0])))
}

fn radial_force_polar(params: &PotentialParams, rho: f64, theta: f64) -> f64 {
    let l = params.wall.order();
    let w2 = params.w2();
    let wall_over_rho = rho.powi(l - 1) * (l as f64 * theta).cos();
    -(w2 * rho + 2.0 * w2 * params.c4 * rho.powi(3) + l as f64 * params.v_w * wall_over_rho)
}

/// Smallest `rho > 0` where the radial force vanishes along `theta`.
pub fn separatrix_radius_at(params: &PotentialParams, theta: f64) -> Result<f64> {
    // Near the axis the harmonic term dominates, so F_r < 0 there. Scan a log grid for
    // the first sign change, then bisect.
    const GRID: usize = 4000;
    let lo_exp = -8.0f64;
    let hi_exp = SEPARATRIX_RHO_MAX.log10();
    let mut prev_rho = 10f64.powf(lo_exp);
    if radial_force_polar(params, prev_rho, theta) >= 0.0 {
        return Ok(prev_rho);
    }
    for k in 1..=GRID {
        let rho = 10f64.powf(lo_exp + (hi_exp - lo_exp) * k as f64 / GRID as f64);
        let f = radial_force_polar(params, rho, theta);
        if f >= 0.0 {
            let (mut a, mut b) = (prev_rho, rho);
            while b - a > SEPARATRIX_TOLERANCE {
                let mid = 0.5 * (a + b);
                if radial_force_polar(params, mid, theta) >= 0.0 {
                    b = mid;
                } else {
                    a = mid;
                }
            }
            return Ok(0.5 * (a + b));
        }
        prev_rho = rho;
    }
    Err(Error::NoRoot(format!(
        "radial force stays negative for rho in (0, {SEPARATRIX_RHO_MAX}] at theta = {theta:.6}"
    )))
}

/// Zero-force contour of the radial trap force.
#[derive(Debug, Clone, PartialEq)]
pub struct SeparatrixContour {
    /// `(theta, rho)` for every sampled angle where a root exists.
    pub points: Vec<(f64, f64)>,
    /// Minimum `rho` over the contour.
    pub radius: f64,
}

/// Samples `angular_samples` angles `2 pi k / n`, keeping those where the force has a root.
pub fn separatrix_contour(params: &PotentialParams, angular_samples: usize) -> Result<SeparatrixContour> {
    if !(params.v_w > 0.0) {
        return Err(Error::NoRoot(
            "wall amplitude is zero; the trap confines at every angle".into(),
        ));
    }
    let mut points = Vec::new();
    for k in 0..angular_samples.max(1) {
        let theta = 2.0 * PI * k as f64 / angular_samples.max(1) as f64;
        match separatrix_radius_at(params, theta) {
            Ok(rho) => points.push((theta, rho)),
            Err(Error::NoRoot(_)) => {}
            Err(other) => return Err(other),
        }
    }
    let radius = points.iter().map(|p| p.1).fold(f64::INFINITY, f64::min);
    if points.is_empty() {
        return Err(Error::NoRoot("the trap confines at every sampled angle".into()));
    }
    Ok(SeparatrixContour { points, radius })
}

/// Separatrix radius, or `None` when the trap confines in every direction.
pub fn separatrix_radius(params: &PotentialParams) -> Option<f64> {
    separatrix_contour(params, DEFAULT_ANGULAR_SAMPLES)
        .ok()
        .map(|c| c.radius)
}
