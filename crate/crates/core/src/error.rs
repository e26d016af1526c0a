use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("time step {0} s outside (0, 0.002]")]
    InvalidTimeStep(f64),

    #[error("query point is {distance:.2} m from the path (limit {limit} m)")]
    OffPath { distance: f64, limit: f64 },

    #[error("path window too short: {0:.2} m of usable path")]
    IllConditionedFit(f64),

    #[error("degenerate acceleration hull at vx0 = {vx0} m/s (area {area:.3})")]
    DegenerateHull { vx0: f64, area: f64 },

    #[error("envelope fit needs at least 3 speed groups, got {0}")]
    TooFewGroups(usize),

    #[error("quadratic program is infeasible")]
    QpInfeasible,

    #[error("quadratic program is not strictly convex")]
    QpNotConvex,

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}: {message}")]
    Config { path: PathBuf, message: String },

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error("vehicle left the path corridor at t = {t:.2} s ({distance:.1} m off)")]
    VehicleLost { t: f64, distance: f64 },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}

/// Reads and deserializes a TOML file.
pub(crate) fn read_toml<T: serde::de::DeserializeOwned>(path: &std::path::Path) -> Result<T> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    toml::from_str(&text).map_err(|e| Error::Config {
        path: path.to_path_buf(),
        message: e.to_string(),
    })
}

pub(crate) fn write_toml<T: serde::Serialize>(path: &std::path::Path, value: &T) -> Result<()> {
    let text = toml::to_string_pretty(value).map_err(|e| Error::Config {
        path: path.to_path_buf(),
        message: e.to_string(),
    })?;
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}
