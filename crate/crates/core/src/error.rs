//! Crate-wide error type.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid coordinate: {0}")]
    InvalidCoordinate(String),

    #[error("degenerate geometry: {0}")]
    DegenerateGeometry(String),

    #[error("pixel ({col}, {row}) outside {width}x{height} image")]
    PixelOutOfBounds {
        col: f64,
        row: f64,
        width: u32,
        height: u32,
    },

    #[error("invalid thumbnail spec: {0}")]
    InvalidSpec(String),

    #[error("invalid detection: {0}")]
    InvalidDetection(String),

    #[error("configuration error: {0}")]
    Config(String),

    /// Object subtends too small an angle to invert (effectively at infinity).
    #[error("degenerate object: {0}")]
    DegenerateObject(String),

    #[error("altitude angle {0} deg too close to a pole")]
    PoleAngle(f64),

    #[error("ill-conditioned pair: apex angle {theta_c_deg:.4} deg below minimum {min_deg} deg")]
    IllConditionedPair { theta_c_deg: f64, min_deg: f64 },

    #[error("divergent rays: {0}")]
    DivergentRays(String),

    #[error("pairing rejected: {0}")]
    PairingRejected(String),

    #[error("invalid depth: {0}")]
    InvalidDepth(String),

    #[error("invalid observation: {0}")]
    InvalidObservation(String),

    #[error("no measurements to aggregate")]
    NoMeasurement,

    #[error("invalid scene: {0}")]
    InvalidScene(String),

    #[error("empty mask: no trunk pixels")]
    NoTrunk,

    #[error("ambiguous mask: {components} connected components, expected 1")]
    AmbiguousMask { components: usize },

    #[error("schema error in {path}: {detail}")]
    Schema { path: String, detail: String },

    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub fn io(path: impl Into<String>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub fn schema(path: impl Into<String>, detail: impl Into<String>) -> Self {
        Error::Schema {
            path: path.into(),
            detail: detail.into(),
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
