//! Georeferenced class-ID rasters and the rotation transform used by the
//! width pipeline.

use std::collections::BTreeMap;

use crate::error::{Error, Result};
use crate::geo::GeoPoint;

/// Class ID reserved for unlabeled pixels (also the fill value introduced by
/// rotation).
pub const BACKGROUND_CLASS: u8 = 0;

/// Sentinel touching-class name for runs that hit the raster border.
pub const EDGE_CLASS_NAME: &str = "edge";

/// Top-down land-cover map. North-up grid; `heading_deg` is the street
/// heading the width pipeline aligns scanlines against. The geographic
/// position of the grid center pixel is `center`.
#[derive(Debug, Clone, PartialEq)]
pub struct LandCoverRaster {
    pub grid: Vec<u8>,
    pub width: usize,
    pub height: usize,
    pub resolution_m: f64,
    pub center: GeoPoint,
    pub heading_deg: f64,
    pub class_table: BTreeMap<u8, String>,
}

impl LandCoverRaster {
    pub fn validate(&self) -> Result<()> {
        if self.width == 0 || self.height == 0 {
            return Err(Error::Config("empty raster".into()));
        }
        if self.grid.len() != self.width * self.height {
            return Err(Error::Config(format!(
                "grid length {} does not match {}x{}",
                self.grid.len(),
                self.width,
                self.height
            )));
        }
        if !(self.resolution_m > 0.0) {
            return Err(Error::Config(format!(
                "resolution {} must be positive",
                self.resolution_m
            )));
        }
        self.center.validate()?;
        for &id in self.grid.iter() {
            if id != BACKGROUND_CLASS && !self.class_table.contains_key(&id) {
                return Err(Error::Config(format!(
                    "class id {id} present in grid but missing from class table"
                )));
            }
        }
        Ok(())
    }

    #[inline]
    pub fn get(&self, col: usize, row: usize) -> u8 {
        self.grid[row * self.width + col]
    }

    pub fn class_id_of(&self, name: &str) -> Option<u8> {
        self.class_table
            .iter()
            .find(|(_, n)| n.as_str() == name)
            .map(|(&id, _)| id)
    }

    pub fn class_name(&self, id: u8) -> &str {
        self.class_table
            .get(&id)
            .map(String::as_str)
            .unwrap_or(if id == BACKGROUND_CLASS {
                "background"
            } else {
                "unknown"
            })
    }
}

/// Binary mask with the same indexing as [`LandCoverRaster`].
#[derive(Debug, Clone, PartialEq)]
pub struct BinaryRaster {
    pub bits: Vec<u8>,
    pub width: usize,
    pub height: usize,
}

impl BinaryRaster {
    pub fn zeros(width: usize, height: usize) -> Self {
        BinaryRaster {
            bits: vec![0; width * height],
            width,
            height,
        }
    }

    #[inline]
    pub fn get(&self, col: usize, row: usize) -> u8 {
        self.bits[row * self.width + col]
    }

    #[inline]
    pub fn set(&mut self, col: usize, row: usize, v: u8) {
        self.bits[row * self.width + col] = v;
    }

    pub fn row(&self, row: usize) -> &[u8] {
        &self.bits[row * self.width..(row + 1) * self.width]
    }
}

/// Rigid rotation between the source (north-up) and destination (heading-up)
/// pixel frames. Coordinates are continuous pixel positions; pixel `(c, r)`
/// covers `[c, c+1) x [r, r+1)` with center `(c + 0.5, r + 0.5)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RotationTransform {
    /// Rotation angle in degrees (the street heading).
    pub angle_deg: f64,
    cos_t: f64,
    sin_t: f64,
    src_center: (f64, f64),
    dst_center: (f64, f64),
}

impl RotationTransform {
    pub fn new(angle_deg: f64, src_dims: (usize, usize), dst_dims: (usize, usize)) -> Self {
        let t = angle_deg.to_radians();
        RotationTransform {
            angle_deg,
            cos_t: t.cos(),
            sin_t: t.sin(),
            src_center: (src_dims.0 as f64 / 2.0, src_dims.1 as f64 / 2.0),
            dst_center: (dst_dims.0 as f64 / 2.0, dst_dims.1 as f64 / 2.0),
        }
    }

    pub fn identity(dims: (usize, usize)) -> Self {
        Self::new(0.0, dims, dims)
    }

    /// Map a source-frame position to the destination (rotated) frame.
    pub fn src_to_dst(&self, x: f64, y: f64) -> (f64, f64) {
        let dx = x - self.src_center.0;
        let dy = y - self.src_center.1;
        (
            self.cos_t * dx + self.sin_t * dy + self.dst_center.0,
            -self.sin_t * dx + self.cos_t * dy + self.dst_center.1,
        )
    }

    /// Map a destination-frame position back to the source frame.
    pub fn dst_to_src(&self, x: f64, y: f64) -> (f64, f64) {
        let dx = x - self.dst_center.0;
        let dy = y - self.dst_center.1;
        (
            self.cos_t * dx - self.sin_t * dy + self.src_center.0,
            self.sin_t * dx + self.cos_t * dy + self.src_center.1,
        )
    }
}
