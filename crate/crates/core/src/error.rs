use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error(
        "rotation does not confine: omega_c*Omega - Omega^2 - 1/2 = {radicand:.6e} (units omega_z^2) must be positive"
    )]
    NonconfiningRotation { radicand: f64 },

    #[error("ions {first} and {second} coincide (separation {distance:.3e} l0)")]
    CoincidentIons { first: usize, second: usize, distance: f64 },

    #[error("radial force is undefined at the trap axis")]
    OriginUndefined,

    #[error("no zero of the radial trap force: {0}")]
    NoRoot(String),

    #[error("ion {ion} reached rho = {rho:.4} l0, beyond {limit:.4} l0 (separatrix radius {separatrix:.4} l0)")]
    DivergedOutsideSeparatrix {
        ion: usize,
        rho: f64,
        limit: f64,
        separatrix: f64,
    },

    #[error("degenerate geometry: {0}")]
    DegenerateGeometry(String),

    #[error("drive at mu = {mu} is resonant with mode {mode} (omega = {omega})")]
    ResonantDrive { mu: f64, mode: usize, omega: f64 },

    #[error("mode set contains {count} unstable mode(s)")]
    UnstableModes { count: usize },

    #[error("power-law fit needs at least two positive couplings at distinct distances, got {used}")]
    InsufficientPairs { used: usize },

    #[error("index {index} out of range for {len} entries")]
    IndexOutOfRange { index: usize, len: usize },

    #[error("invalid configuration: {0}")]
    ConfigInvalid(String),

    #[error("stage `{stage}` failed: {cause}")]
    StageFailed { stage: String, cause: Box<Error> },

    #[error("figure data needs {0}, which was not produced upstream")]
    MissingUpstream(String),

    #[error("unknown figure id `{0}`")]
    UnknownFigure(String),

    #[error("malformed input in {path}: {message}")]
    Parse { path: PathBuf, message: String },

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn stage(stage: &str, cause: Error) -> Self {
        Error::StageFailed {
            stage: stage.to_string(),
            cause: Box::new(cause),
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
