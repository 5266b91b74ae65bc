//! Energy minimization from a seed lattice.
//!
//! The default method is a trust-region quasi-Newton scheme: BFGS curvature, dogleg
//! subproblem. An exact-Hessian trust-region variant (Steihaug CG subproblem) and a
//! backtracking gradient descent are available as fallbacks.

use log::{debug, warn};
use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lattice::{build_seed, default_spacing, SeedLattice};
use crate::potential::{self, CrystalConfiguration, PotentialParams};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    #[default]
    TrustRegionBfgs,
    TrustRegionNewton,
    GradientDescent,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StepControl {
    pub initial_radius: f64,
    pub max_radius: f64,
    pub shrink: f64,
    pub grow: f64,
    /// Minimum actual/predicted reduction ratio for accepting a step.
    pub accept_ratio: f64,
}

impl Default for StepControl {
    fn default() -> Self {
        StepControl {
            initial_radius: 1.0,
            max_radius: 10.0,
            shrink: 0.25,
            grow: 2.0,
            accept_ratio: 1e-4,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MinimizerSettings {
    /// Infinity-norm gradient tolerance in `E0 / l0`.
    pub gradient_tolerance: f64,
    pub max_iterations: usize,
    pub step_control: StepControl,
    pub method: Method,
    /// Abort once an ion passes this fraction of the separatrix radius.
    pub separatrix_fraction: f64,
}

impl Default for MinimizerSettings {
    fn default() -> Self {
        MinimizerSettings {
            gradient_tolerance: 1e-10,
            max_iterations: 100_000,
            step_control: StepControl::default(),
            method: Method::TrustRegionBfgs,
            separatrix_fraction: 0.95,
        }
    }
}

impl MinimizerSettings {
    pub fn validate(&self) -> Result<()> {
        let sc = &self.step_control;
        if !(self.gradient_tolerance > 0.0) || self.max_iterations == 0 {
            return Err(Error::ConfigInvalid(
                "gradient_tolerance must be positive and max_iterations at least 1".into(),
            ));
        }
        if !(sc.initial_radius > 0.0
            && sc.max_radius >= sc.initial_radius
            && sc.shrink > 0.0
            && sc.shrink < 1.0
            && sc.grow > 1.0)
        {
            return Err(Error::ConfigInvalid(format!("invalid trust-region parameters {sc:?}")));
        }
        Ok(())
    }
}

/// Result of a minimization together with the energy after every accepted step.
#[derive(Debug, Clone, PartialEq)]
pub struct Minimization {
    pub crystal: CrystalConfiguration,
    pub energy_history: Vec<f64>,
}

pub fn minimize(
    params: &PotentialParams,
    seed: &SeedLattice,
    settings: &MinimizerSettings,
) -> Result<CrystalConfiguration> {
    minimize_positions(params, &seed.positions, settings).map(|m| m.crystal)
}

/// Builds the closed-shell seed and minimizes from it. Without an explicit spacing the
/// seed uses [`default_spacing`].
pub fn equilibrate(
    params: &PotentialParams,
    n_ions: usize,
    seed_spacing: Option<f64>,
    settings: &MinimizerSettings,
) -> Result<CrystalConfiguration> {
    params.validate()?;
    let spacing = seed_spacing.unwrap_or_else(|| default_spacing(n_ions, params.omega_eff));
    if !(spacing > 0.0) {
        return Err(Error::ConfigInvalid(format!(
            "seed spacing must be positive, got {spacing}"
        )));
    }
    minimize(params, &build_seed(n_ions, spacing, params), settings)
}

fn inf_norm(v: &DVector<f64>) -> f64 {
    v.iter().fold(0.0, |m, x| m.max(x.abs()))
}

fn to_positions(x: &DVector<f64>) -> Vec<[f64; 2]> {
    x.as_slice().chunks(2).map(|c| [c[0], c[1]]).collect()
}

struct Objective<'a> {
    params: &'a PotentialParams,
    limit: Option<(f64, f64)>,
}

impl Objective<'_> {
    fn eval(&self, x: &DVector<f64>) -> Result<(f64, DVector<f64>)> {
        let (e, g) = potential::energy_and_gradient(self.params, &to_positions(x))?;
        Ok((e, DVector::from_vec(g)))
    }

    fn check_confined(&self, x: &DVector<f64>) -> Result<()> {
        let Some((limit, separatrix)) = self.limit else {
            return Ok(());
        };
        for (ion, c) in x.as_slice().chunks(2).enumerate() {
            let rho = c[0].hypot(c[1]);
            if rho > limit {
                return Err(Error::DivergedOutsideSeparatrix {
                    ion,
                    rho,
                    limit,
                    separatrix,
                });
            }
        }
        Ok(())
    }
}

/// Minimizes from arbitrary starting positions.
pub fn minimize_positions(
    params: &PotentialParams,
    start: &[[f64; 2]],
    settings: &MinimizerSettings,
) -> Result<Minimization> {
    params.validate()?;
    settings.validate()?;
    potential::check_distinct(start)?;
    let limit = potential::separatrix_radius(params).map(|r| (settings.separatrix_fraction * r, r));
    let objective = Objective { params, limit };
    let x0 = DVector::from_iterator(2 * start.len(), start.iter().flat_map(|p| [p[0], p[1]]));
    objective.check_confined(&x0)?;

    let outcome = match settings.method {
        Method::TrustRegionBfgs | Method::TrustRegionNewton => {
            let mut outcome = trust_region(&objective, x0, settings)?;
            for _ in 0..MAX_SADDLE_ESCAPES {
                if inf_norm(&outcome.g) > settings.gradient_tolerance || outcome.iterations >= settings.max_iterations {
                    break;
                }
                let Some(x) = escape_saddle(&objective, &outcome)? else {
                    break;
                };
                let budget = MinimizerSettings {
                    max_iterations: settings.max_iterations - outcome.iterations,
                    ..*settings
                };
                let next = trust_region(&objective, x, &budget)?;
                outcome.history.extend_from_slice(&next.history);
                outcome = Outcome {
                    iterations: outcome.iterations + next.iterations,
                    history: outcome.history,
                    ..next
                };
            }
            outcome
        }
        Method::GradientDescent => gradient_descent(&objective, x0, settings)?,
    };
    let gradient_norm = inf_norm(&outcome.g);
    let converged = gradient_norm <= settings.gradient_tolerance;
    if !converged {
        warn!(
            "minimizer stopped after {} iterations with |g|_inf = {gradient_norm:.3e}",
            outcome.iterations
        );
    }
    Ok(Minimization {
        crystal: CrystalConfiguration {
            positions: to_positions(&outcome.x),
            energy: outcome.f,
            gradient_norm,
            converged,
            iterations: outcome.iterations,
        },
        energy_history: outcome.history,
    })
}

const MAX_SADDLE_ESCAPES: usize = 10;

/// Curvature below this marks a stationary point as a saddle.
const SADDLE_CURVATURE: f64 = -1e-8;

/// Symmetric seeds can lead a gradient method onto a saddle. If the exact Hessian has a
/// negative direction, step along it (the sign with lower energy) and return the new start.
fn escape_saddle(objective: &Objective, outcome: &Outcome) -> Result<Option<DVector<f64>>> {
    let dim = outcome.x.len();
    let flat = potential::hessian(objective.params, &to_positions(&outcome.x))?;
    let eigen = nalgebra::SymmetricEigen::new(DMatrix::from_row_slice(dim, dim, &flat));
    let (lowest, &lambda) = eigen
        .eigenvalues
        .iter()
        .enumerate()
        .min_by(|a, b| a.1.total_cmp(b.1))
        .expect("non-empty Hessian");
    if lambda >= SADDLE_CURVATURE {
        return Ok(None);
    }
    let direction = eigen.eigenvectors.column(lowest).into_owned();
    let mut best: Option<(f64, DVector<f64>)> = None;
    for scale in [0.1, 0.01] {
        for sign in [1.0, -1.0] {
            let trial = &outcome.x + &direction * (sign * scale);
            if let Ok((f, _)) = objective.eval(&trial) {
                if f < outcome.f && best.as_ref().is_none_or(|b| f < b.0) {
                    best = Some((f, trial));
                }
            }
        }
        if best.is_some() {
            break;
        }
    }
    debug!("saddle with curvature {lambda:.3e}; escaping: {}", best.is_some());
    Ok(best.map(|b| b.1))
}

struct Outcome {
    x: DVector<f64>,
    f: f64,
    g: DVector<f64>,
    iterations: usize,
    history: Vec<f64>,
}

/// Energy changes below this are indistinguishable from summation round-off.
fn noise_floor(f: f64) -> f64 {
    1e-14 * f.abs().max(1.0)
}

/// Quasi-Newton curvature, stored with its inverse so the dogleg step is O(n^2).
struct Bfgs {
    b: DMatrix<f64>,
    h: DMatrix<f64>,
    scaled: bool,
}

impl Bfgs {
    fn new(dim: usize) -> Self {
        Bfgs {
            b: DMatrix::identity(dim, dim),
            h: DMatrix::identity(dim, dim),
            scaled: false,
        }
    }

    fn update(&mut self, s: &DVector<f64>, y: &DVector<f64>) {
        let sy = s.dot(y);
        if !(sy > 1e-10 * s.norm() * y.norm()) {
            return;
        }
        let dim = s.len();
        if !self.scaled {
            let gamma = y.dot(y) / sy;
            self.b = DMatrix::identity(dim, dim) * gamma;
            self.h = DMatrix::identity(dim, dim) / gamma;
            self.scaled = true;
        }
        let bs = &self.b * s;
        let sbs = s.dot(&bs);
        self.b.ger(-1.0 / sbs, &bs, &bs, 1.0);
        self.b.ger(1.0 / sy, y, y, 1.0);

        // H+ = (I - r s y^T) H (I - r y s^T) + r s s^T, expanded as rank-2 updates
        let r = 1.0 / sy;
        let hy = &self.h * y;
        let yhy = y.dot(&hy);
        self.h.ger(-r, &hy, s, 1.0);
        self.h.ger(-r, s, &hy, 1.0);
        self.h.ger(r * r * yhy + r, s, s, 1.0);
    }

    fn dogleg(&self, g: &DVector<f64>, radius: f64) -> DVector<f64> {
        let newton = -(&self.h * g);
        if newton.norm() <= radius {
            return newton;
        }
        let gbg = g.dot(&(&self.b * g));
        let gnorm = g.norm();
        if !(gbg > 0.0) {
            return g * (-radius / gnorm);
        }
        let cauchy = g * (-g.dot(g) / gbg);
        let cn = cauchy.norm();
        if cn >= radius {
            return g * (-radius / gnorm);
        }
        // |cauchy + t (newton - cauchy)| = radius, t in [0, 1]
        let d = &newton - &cauchy;
        let a = d.dot(&d);
        let b = 2.0 * cauchy.dot(&d);
        let c = cn * cn - radius * radius;
        let t = (-b + (b * b - 4.0 * a * c).max(0.0).sqrt()) / (2.0 * a);
        cauchy + d * t
    }

    fn quadratic(&self, g: &DVector<f64>, p: &DVector<f64>) -> f64 {
        g.dot(p) + 0.5 * p.dot(&(&self.b * p))
    }
}

/// Steihaug truncated CG on `min g.p + p.B.p/2, |p| <= radius`.
fn steihaug(b: &DMatrix<f64>, g: &DVector<f64>, radius: f64) -> DVector<f64> {
    let dim = g.len();
    let mut p = DVector::zeros(dim);
    let mut r = g.clone();
    let mut d = -g.clone();
    let tol = g.norm() * g.norm().sqrt().min(0.5);
    if r.norm() <= tol {
        return p;
    }
    let to_boundary = |p: &DVector<f64>, d: &DVector<f64>| {
        let a = d.dot(d);
        let bq = 2.0 * p.dot(d);
        let c = p.dot(p) - radius * radius;
        let t = (-bq + (bq * bq - 4.0 * a * c).max(0.0).sqrt()) / (2.0 * a);
        p + d * t
    };
    for _ in 0..(2 * dim) {
        let bd = b * &d;
        let dbd = d.dot(&bd);
        if dbd <= 0.0 {
            return to_boundary(&p, &d);
        }
        let rr = r.dot(&r);
        let alpha = rr / dbd;
        let next = &p + &d * alpha;
        if next.norm() >= radius {
            return to_boundary(&p, &d);
        }
        p = next;
        r += &bd * alpha;
        if r.norm() < tol {
            return p;
        }
        let beta = r.dot(&r) / rr;
        d = -&r + &d * beta;
    }
    p
}

fn trust_region(objective: &Objective, mut x: DVector<f64>, settings: &MinimizerSettings) -> Result<Outcome> {
    let sc = settings.step_control;
    let newton = settings.method == Method::TrustRegionNewton;
    let dim = x.len();
    let (mut f, mut g) = objective.eval(&x)?;
    let mut history = vec![f];
    let mut bfgs = Bfgs::new(dim);
    let mut hess = DMatrix::zeros(0, 0);
    let mut hess_stale = true;
    let mut radius = sc.initial_radius;
    let mut restarts = 0usize;
    let mut iterations = 0usize;

    while iterations < settings.max_iterations {
        if inf_norm(&g) <= settings.gradient_tolerance {
            break;
        }
        iterations += 1;

        let (p, predicted) = if newton {
            if hess_stale {
                let flat = potential::hessian(objective.params, &to_positions(&x))?;
                hess = DMatrix::from_row_slice(dim, dim, &flat);
                hess_stale = false;
            }
            let p = steihaug(&hess, &g, radius);
            let pred = -(g.dot(&p) + 0.5 * p.dot(&(&hess * &p)));
            (p, pred)
        } else {
            let p = bfgs.dogleg(&g, radius);
            let pred = -bfgs.quadratic(&g, &p);
            (p, pred)
        };
        let step = p.norm();

        let trial = &x + &p;
        let evaluated = objective.eval(&trial);
        let (f_new, g_new) = match evaluated {
            Ok(v) => v,
            Err(Error::CoincidentIons { .. }) => {
                radius = sc.shrink * step;
                continue;
            }
            Err(e) => return Err(e),
        };

        let actual = f - f_new;
        let floor = noise_floor(f);
        let ratio = if predicted.abs() < floor || actual.abs() < floor {
            // Below round-off the energy difference is noise. The trapezoid rule on the
            // gradients gives the reduction without the cancellation.
            let estimated = -0.5 * (&g + &g_new).dot(&p);
            if predicted > 0.0 {
                estimated / predicted
            } else {
                0.0
            }
        } else {
            actual / predicted
        };

        if !newton {
            bfgs.update(&p, &(&g_new - &g));
        }

        if ratio > sc.accept_ratio {
            objective.check_confined(&trial)?;
            x = trial;
            f = f_new;
            g = g_new;
            hess_stale = true;
            history.push(f);
        }

        if ratio < 0.25 {
            radius = sc.shrink * step;
        } else if ratio > 0.75 && step >= 0.99 * radius {
            radius = (sc.grow * radius).min(sc.max_radius);
        }

        if radius < 1e-14 * (1.0 + x.norm()) {
            restarts += 1;
            if restarts > 10 {
                debug!("trust region collapsed; stopping");
                break;
            }
            debug!("trust region collapsed; resetting curvature (restart {restarts})");
            bfgs = Bfgs::new(dim);
            radius = sc.initial_radius;
        }
    }

    Ok(Outcome {
        x,
        f,
        g,
        iterations,
        history,
    })
}

fn gradient_descent(objective: &Objective, mut x: DVector<f64>, settings: &MinimizerSettings) -> Result<Outcome> {
    let (mut f, mut g) = objective.eval(&x)?;
    let mut history = vec![f];
    let mut step = settings.step_control.initial_radius;
    let mut iterations = 0usize;
    while iterations < settings.max_iterations {
        if inf_norm(&g) <= settings.gradient_tolerance {
            break;
        }
        iterations += 1;
        let gg = g.dot(&g);
        let mut t = step / g.norm();
        let mut accepted = false;
        for _ in 0..60 {
            let trial = &x - &g * t;
            match objective.eval(&trial) {
                Ok((f_new, g_new)) => {
                    let armijo = f_new <= f - 1e-4 * t * gg;
                    let noisy = (f - f_new).abs() < noise_floor(f) && g_new.norm() < g.norm();
                    if armijo || noisy {
                        objective.check_confined(&trial)?;
                        x = trial;
                        f = f_new;
                        g = g_new;
                        history.push(f);
                        accepted = true;
                        break;
                    }
                }
                Err(Error::CoincidentIons { .. }) => {}
                Err(e) => return Err(e),
            }
            t *= 0.5;
        }
        if !accepted {
            break;
        }
        step = (2.0 * t * g.norm()).clamp(1e-12, settings.step_control.max_radius);
    }
    Ok(Outcome {
        x,
        f,
        g,
        iterations,
        history,
    })
}
