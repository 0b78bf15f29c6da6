//! Measurement library for street-level imagery: geographic conversions,
//! panorama and thumbnail projection geometry, land-cover width scanning,
//! known-dimension object localization, stereo trunk triangulation, and a
//! synthetic scene oracle for end-to-end verification.

pub mod error;
pub mod formats;
pub mod geo;
pub mod projection;
pub mod raster;
pub mod synthetic;
pub mod tacheometry;
pub mod triangulation;
pub mod width;

pub use error::{Error, Result};
