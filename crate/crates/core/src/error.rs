use thiserror::Error;

use crate::Vector;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch in {context}: expected {expected}, got {got}")]
    Dimension {
        context: &'static str,
        expected: usize,
        got: usize,
    },

    #[error("index {index} out of range (count {count})")]
    IndexOutOfRange { index: usize, count: usize },

    #[error("invalid set: {0}")]
    InvalidSet(String),

    #[error("Dykstra projection did not converge after {sweeps} sweeps (last change {residual:e})")]
    ProjectionNotConverged {
        last: Vector,
        residual: f64,
        sweeps: usize,
    },

    #[error("invalid graph: {0}")]
    InvalidGraph(String),

    #[error("invalid schedule: {0}")]
    InvalidSchedule(String),

    #[error("time {t} outside the schedule range [0, {horizon}]")]
    TimeOutOfRange { t: f64, horizon: f64 },

    #[error("configuration error: {0}")]
    Config(String),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("Lyapunov-matrix bound p is not known for this game; supply p explicitly to compute delta2*")]
    MissingLyapunovBound,

    #[error("fixed-point iteration did not converge after {iterations} iterations (residual {residual:e})")]
    NotConverged {
        last: Vector,
        residual: f64,
        iterations: usize,
    },

    #[error("state left the action set of player {player} at step {step} (t = {t}): distance {distance:e}")]
    Infeasible {
        step: usize,
        t: f64,
        player: usize,
        distance: f64,
    },

    #[error("insufficient data for rate fit: {usable} usable samples, need at least {needed}")]
    InsufficientData { usable: usize, needed: usize },

    #[error("malformed trajectory CSV at line {line}: {message}")]
    Csv { line: usize, message: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error("report serialization: {0}")]
    Serialize(String),
}

pub(crate) fn check_dim(context: &'static str, expected: usize, got: usize) -> Result<()> {
    if expected == got {
        Ok(())
    } else {
        Err(Error::Dimension {
            context,
            expected,
            got,
        })
    }
}
