use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("horizon {horizon} must be greater than t0 {t0}")]
    InvalidSpan { t0: f64, horizon: f64 },

    #[error("time scale has no points in [{t0}, {horizon}]")]
    EmptyGrid { t0: f64, horizon: f64 },

    #[error("invalid time scale: {0}")]
    InvalidTimeScale(String),

    #[error("t = {0} is not a grid point")]
    NotInGrid(f64),

    #[error("t = {0} is the right end of the grid; the forward jump is undefined there")]
    AtBoundary(f64),

    #[error("regressivity violated at t = {t}: 1 + mu*p = {value}")]
    Regressivity { t: f64, value: f64 },

    #[error("cylinder transform needs 1 + h*z > 0 (h = {h}, z = {z})")]
    CylinderBranch { h: f64, z: f64 },

    #[error("solution diverged at t = {t} (state = {state})")]
    Divergence { t: f64, state: f64 },

    #[error("impulse instant t = {0} does not coincide with a grid point")]
    ImpulseOffGrid(f64),

    #[error("invalid impulse schedule: {0}")]
    InvalidSchedule(String),

    #[error("grid mismatch: {0}")]
    GridMismatch(String),

    #[error("bounds undefined: {0}")]
    BoundsUndefined(String),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("config error: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}
