//! Trap parameters and the physical to dimensionless conversions.
//!
//! Every other module works in reduced units: lengths in `l0`, energies in
//! `E0 = m omega_z^2 l0^2` and frequencies in `omega_z`. Conversions happen only
//! here, at the configuration boundary.

use std::f64::consts::PI;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::potential::{PotentialParams, WallOrder};

/// Axial/radial confinement ratio below which the planar-crystal assumption is flagged.
pub const PLANARITY_WARNING_THRESHOLD: f64 = 10.0;

/// Constants for the ion species. Defaults are those of 9Be+.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PhysicalConstants {
    /// Ion mass in atomic mass units.
    pub mass_u: f64,
    /// Ion charge in coulomb.
    pub charge: f64,
    /// Atomic mass unit in kg.
    pub atomic_mass_unit: f64,
    /// Coulomb constant in N m^2 / C^2.
    pub coulomb_constant: f64,
}

impl Default for PhysicalConstants {
    fn default() -> Self {
        PhysicalConstants {
            mass_u: 9.012182,
            charge: 1.60217646e-19,
            atomic_mass_unit: 1.66053873e-27,
            coulomb_constant: 8.987551787e9,
        }
    }
}

impl PhysicalConstants {
    pub fn mass(&self) -> f64 {
        self.mass_u * self.atomic_mass_unit
    }

    /// Cyclotron angular frequency `e B / m` for a field in tesla.
    pub fn cyclotron_frequency(&self, b_z: f64) -> f64 {
        self.charge * b_z / self.mass()
    }
}

/// Length and energy scales of the reduced units.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DimensionlessScales {
    /// `l0 = (k_e e^2 / (m omega_z^2))^(1/3)` in metres.
    pub l0: f64,
    /// `E0 = m omega_z^2 l0^2` in joule.
    pub e0: f64,
    mass_omega_z2: f64,
}

impl DimensionlessScales {
    pub fn new(constants: &PhysicalConstants, omega_z: f64) -> Self {
        let mass_omega_z2 = constants.mass() * omega_z * omega_z;
        let l0 = (constants.coulomb_constant * constants.charge * constants.charge / mass_omega_z2).cbrt();
        DimensionlessScales {
            l0,
            e0: mass_omega_z2 * l0 * l0,
            mass_omega_z2,
        }
    }

    pub fn to_reduced_length(&self, metres: f64) -> f64 {
        metres / self.l0
    }

    pub fn to_metres(&self, reduced: f64) -> f64 {
        reduced * self.l0
    }

    pub fn to_reduced_energy(&self, joule: f64) -> f64 {
        joule / self.e0
    }

    /// Reduced wall amplitude for a wall energy `v_wall * rho^3 / r_p^3`.
    pub fn convert_wall_amplitude(&self, v_wall_joule: f64, r_p: f64) -> f64 {
        v_wall_joule * self.l0 / (self.mass_omega_z2 * r_p.powi(3))
    }
}

/// Trap and crystal parameters. Angular frequencies are stored in rad/s.
#[derive(Debug, Clone, PartialEq)]
pub struct TrapConfig {
    pub omega_z: f64,
    pub omega_c: f64,
    /// Rotating-wall angular frequency `Omega`.
    pub rotation: f64,
    /// Reduced quartic strength `C4`.
    pub c4: f64,
    /// Reduced wall amplitude `V_W` in units of `omega_z^2`.
    pub v_w: f64,
    pub n_ions: usize,
    /// Plasma radius parameter in metres, if one was given.
    pub r_p: Option<f64>,
    pub constants: PhysicalConstants,
}

impl TrapConfig {
    /// Builds a configuration from frequencies already expressed as ratios to `omega_z`.
    pub fn from_ratios(
        omega_z: f64,
        omega_c_ratio: f64,
        rotation_ratio: f64,
        c4: f64,
        v_w: f64,
        n_ions: usize,
    ) -> Result<Self> {
        let config = TrapConfig {
            omega_z,
            omega_c: omega_c_ratio * omega_z,
            rotation: rotation_ratio * omega_z,
            c4,
            v_w,
            n_ions,
            r_p: None,
            constants: PhysicalConstants::default(),
        };
        config.check_ranges()?;
        Ok(config)
    }

    pub fn omega_c_ratio(&self) -> f64 {
        self.omega_c / self.omega_z
    }

    pub fn rotation_ratio(&self) -> f64 {
        self.rotation / self.omega_z
    }

    pub fn scales(&self) -> DimensionlessScales {
        DimensionlessScales::new(&self.constants, self.omega_z)
    }

    pub fn potential_params(&self) -> Result<PotentialParams> {
        Ok(PotentialParams {
            omega_eff: effective_frequency(self)?,
            c4: self.c4,
            v_w: self.v_w,
            wall: WallOrder::Triangular,
        })
    }

    /// Warnings about the operating regime. Empty when everything looks fine.
    pub fn regime_warnings(&self) -> Result<Vec<String>> {
        let ratio = planar_confinement_ratio(self)?;
        let mut warnings = Vec::new();
        if ratio < PLANARITY_WARNING_THRESHOLD {
            warnings.push(format!(
                "axial/radial confinement ratio {ratio:.4} is below {PLANARITY_WARNING_THRESHOLD}; \
                 the crystal may not stay planar"
            ));
        }
        Ok(warnings)
    }

    fn check_ranges(&self) -> Result<()> {
        let positive = [
            ("omega_z", self.omega_z),
            ("omega_c", self.omega_c),
            ("Omega", self.rotation),
        ];
        for (name, value) in positive {
            if !(value > 0.0 && value.is_finite()) {
                return Err(Error::ConfigInvalid(format!("{name} must be positive, got {value}")));
            }
        }
        if self.n_ions == 0 {
            return Err(Error::ConfigInvalid("n_ions must be at least 1".into()));
        }
        if !(self.c4 >= 0.0) {
            return Err(Error::ConfigInvalid(format!(
                "c4 must be non-negative, got {}",
                self.c4
            )));
        }
        if !(self.v_w >= 0.0) {
            return Err(Error::ConfigInvalid(format!(
                "v_w must be non-negative, got {}",
                self.v_w
            )));
        }
        Ok(())
    }
}

/// `omega_c Omega - Omega^2 - 1/2` in units of `omega_z^2`.
fn effective_radicand(omega_c_ratio: f64, rotation_ratio: f64) -> f64 {
    omega_c_ratio * rotation_ratio - rotation_ratio * rotation_ratio - 0.5
}

/// Effective radial trapping frequency in the rotating frame, in units of `omega_z`.
pub fn effective_frequency(config: &TrapConfig) -> Result<f64> {
    effective_frequency_from_ratios(config.omega_c_ratio(), config.rotation_ratio())
}

pub fn effective_frequency_from_ratios(omega_c_ratio: f64, rotation_ratio: f64) -> Result<f64> {
    let radicand = effective_radicand(omega_c_ratio, rotation_ratio);
    if radicand > 0.0 {
        Ok(radicand.sqrt())
    } else {
        Err(Error::NonconfiningRotation { radicand })
    }
}

/// Rotation rate (units of `omega_z`) that produces `omega_eff`, taking the slower
/// of the two solutions.
pub fn rotation_for_effective_frequency(omega_c_ratio: f64, omega_eff: f64) -> Result<f64> {
    let discriminant = omega_c_ratio * omega_c_ratio - 4.0 * (omega_eff * omega_eff + 0.5);
    if !(omega_eff > 0.0) || discriminant < 0.0 {
        return Err(Error::ConfigInvalid(format!(
            "omega_eff = {omega_eff} is not reachable with omega_c = {omega_c_ratio} omega_z"
        )));
    }
    Ok(0.5 * (omega_c_ratio - discriminant.sqrt()))
}

/// Axial over radial restoring strength, `2 e V0 / (e B_z Omega - m Omega^2 - e V0)`.
///
/// In reduced units this is `1 / omega_eff^2`; planar crystals need it to be large.
pub fn planar_confinement_ratio(config: &TrapConfig) -> Result<f64> {
    let omega_eff = effective_frequency(config)?;
    Ok(1.0 / (omega_eff * omega_eff))
}

/// Reduced quartic strength `C4 = 3 l0^2 C4_tilde / (8 r_p^2)`.
pub fn convert_anharmonic(c4_tilde: f64, r_p: f64, scales: &DimensionlessScales) -> Result<f64> {
    if !(r_p > 0.0) {
        return Err(Error::ConfigInvalid(format!("r_p must be positive, got {r_p}")));
    }
    Ok(3.0 * scales.l0 * scales.l0 * c4_tilde / (8.0 * r_p * r_p))
}

/// Detuning grid: `points` log-spaced values from `min` to `max` inclusive.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LogGrid {
    pub min: f64,
    pub max: f64,
    pub points: usize,
}

impl Default for LogGrid {
    fn default() -> Self {
        LogGrid {
            min: 1e-6,
            max: 1e3,
            points: 40,
        }
    }
}

/// Linear grid `start, start + step, ...` up to `stop` (inclusive within half a step).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LinearGrid {
    pub start: f64,
    pub stop: f64,
    pub step: f64,
}

impl Default for LinearGrid {
    fn default() -> Self {
        LinearGrid {
            start: 0.19,
            stop: 0.27,
            step: 0.002,
        }
    }
}

/// Optional run settings carried in the configuration document.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunOptions {
    /// Seed lattice spacing in `l0`; derived from the trap when absent.
    pub seed_spacing: Option<f64>,
    /// Detuning `delta = mu - 1` for the single coupling matrix.
    pub delta: f64,
    pub delta_grid: LogGrid,
    pub omega_eff_grid: LinearGrid,
}

impl Default for RunOptions {
    fn default() -> Self {
        RunOptions {
            seed_spacing: None,
            delta: 1e-2,
            delta_grid: LogGrid::default(),
            omega_eff_grid: LinearGrid::default(),
        }
    }
}

/// The JSON configuration document, as written by users.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConfigDocument {
    pub omega_z_hz: f64,
    pub b_z_tesla: Option<f64>,
    pub omega_c_ratio: Option<f64>,
    pub omega_ratio: Option<f64>,
    pub omega_eff_ratio: Option<f64>,
    pub c4: Option<f64>,
    pub c4_tilde: Option<f64>,
    pub r_p_m: Option<f64>,
    pub v_w: Option<f64>,
    pub v_wall_joule: Option<f64>,
    pub n_ions: usize,
    pub mass_u: Option<f64>,
    pub charge_c: Option<f64>,
    #[serde(default)]
    pub run: RunOptions,
}

impl ConfigDocument {
    pub fn from_json_str(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::ConfigInvalid(e.to_string()))
    }

    pub fn from_path(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json_str(&text)
    }

    /// Validates the document and resolves it into a [`TrapConfig`].
    pub fn to_trap_config(&self) -> Result<TrapConfig> {
        if !(self.omega_z_hz > 0.0) {
            return Err(Error::ConfigInvalid("omega_z_hz must be positive".into()));
        }
        let mut constants = PhysicalConstants::default();
        if let Some(mass_u) = self.mass_u {
            constants.mass_u = mass_u;
        }
        if let Some(charge) = self.charge_c {
            constants.charge = charge;
        }
        let omega_z = 2.0 * PI * self.omega_z_hz;
        let scales = DimensionlessScales::new(&constants, omega_z);

        let omega_c_ratio = match (self.b_z_tesla, self.omega_c_ratio) {
            (Some(b), None) => constants.cyclotron_frequency(b) / omega_z,
            (None, Some(ratio)) => ratio,
            _ => {
                return Err(Error::ConfigInvalid(
                    "exactly one of b_z_tesla / omega_c_ratio must be given".into(),
                ))
            }
        };

        let rotation_ratio = match (self.omega_ratio, self.omega_eff_ratio) {
            (Some(r), None) => r,
            (None, Some(eff)) => rotation_for_effective_frequency(omega_c_ratio, eff)?,
            _ => {
                return Err(Error::ConfigInvalid(
                    "exactly one of omega_ratio / omega_eff_ratio must be given".into(),
                ))
            }
        };

        let c4 = match (self.c4, self.c4_tilde) {
            (Some(c4), None) => c4,
            (None, Some(tilde)) => {
                let r_p = self
                    .r_p_m
                    .ok_or_else(|| Error::ConfigInvalid("c4_tilde requires r_p_m".into()))?;
                convert_anharmonic(tilde, r_p, &scales)?
            }
            _ => {
                return Err(Error::ConfigInvalid(
                    "exactly one of c4 / c4_tilde must be given".into(),
                ))
            }
        };

        let v_w = match (self.v_w, self.v_wall_joule) {
            (Some(v), None) => v,
            (None, Some(raw)) => {
                let r_p = self
                    .r_p_m
                    .ok_or_else(|| Error::ConfigInvalid("v_wall_joule requires r_p_m".into()))?;
                if !(r_p > 0.0) {
                    return Err(Error::ConfigInvalid(format!("r_p must be positive, got {r_p}")));
                }
                scales.convert_wall_amplitude(raw, r_p)
            }
            _ => {
                return Err(Error::ConfigInvalid(
                    "exactly one of v_w / v_wall_joule must be given".into(),
                ))
            }
        };

        let config = TrapConfig {
            omega_z,
            omega_c: omega_c_ratio * omega_z,
            rotation: rotation_ratio * omega_z,
            c4,
            v_w,
            n_ions: self.n_ions,
            r_p: self.r_p_m,
            constants,
        };
        config.check_ranges()?;
        if let Err(Error::NonconfiningRotation { radicand }) = effective_frequency(&config) {
            return Err(Error::ConfigInvalid(format!(
                "effective trapping frequency is not real: omega_c*Omega - Omega^2 - 1/2 = {radicand:.6e} <= 0"
            )));
        }
        Ok(config)
    }
}
