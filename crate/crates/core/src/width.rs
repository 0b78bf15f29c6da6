//! Width measurement for ribbon-shaped ground classes on a land-cover map.
//!
//! The pipeline rotates the map so the street heading points up, binarizes
//! the target class, cleans it with an open-then-close morphology, extracts
//! per-scanline runs with run-length encoding, attaches touching-class and
//! cover-ratio attributes, and rotates the resulting slices back into the
//! original frame as metric width measurements.

use std::collections::BTreeSet;

use crate::error::{Error, Result};
use crate::geo::LocalPoint;
use crate::raster::{
    BinaryRaster, LandCoverRaster, RotationTransform, BACKGROUND_CLASS, EDGE_CLASS_NAME,
};

/// Default scanline interval in meters.
pub const DEFAULT_INTERVAL_M: f64 = 0.25;
/// Default square morphology kernel side in pixels.
pub const DEFAULT_KERNEL_PX: usize = 3;
/// Default minimum cover ratio for a slice to count as valid.
pub const DEFAULT_MIN_COVER_RATIO: f64 = 0.9;

/// One maximal run of target pixels on a scanline, columns inclusive.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RawRun {
    pub row: usize,
    pub col_start: usize,
    pub col_end: usize,
}

impl RawRun {
    pub fn len_px(&self) -> usize {
        self.col_end - self.col_start + 1
    }
}

/// Touching classes and cover ratio of a run.
#[derive(Debug, Clone, PartialEq)]
pub struct SliceAttrs {
    pub touching_start: String,
    pub touching_end: String,
    pub cover_ratio: f64,
}

/// One width measurement, endpoints in meters relative to the raster center
/// (east/north), already rotated back to the original frame.
#[derive(Debug, Clone, PartialEq)]
pub struct Slice {
    pub start: LocalPoint,
    pub end: LocalPoint,
    pub length_m: f64,
    pub row_index: usize,
    pub touching_start: String,
    pub touching_end: String,
    pub cover_ratio: f64,
    pub valid: bool,
}

/// Validity filters applied in the finalize step.
#[derive(Debug, Clone, PartialEq)]
pub struct SliceFilters {
    pub min_cover_ratio: f64,
    /// Class names a slice end may touch. Runs touching anything else,
    /// including the raster border sentinel, are marked invalid.
    pub allowed_touching: BTreeSet<String>,
    pub min_length_m: Option<f64>,
    pub max_length_m: Option<f64>,
}

impl Default for SliceFilters {
    fn default() -> Self {
        SliceFilters {
            min_cover_ratio: DEFAULT_MIN_COVER_RATIO,
            allowed_touching: ["background", "terrain", "sidewalk", "curb"]
                .into_iter()
                .map(String::from)
                .collect(),
            min_length_m: None,
            max_length_m: None,
        }
    }
}

/// Full pipeline configuration.
#[derive(Debug, Clone, PartialEq)]
pub struct WidthConfig {
    pub target_class: String,
    pub interval_m: f64,
    pub kernel_px: usize,
    pub filters: SliceFilters,
}

impl WidthConfig {
    pub fn new(target_class: impl Into<String>) -> Self {
        WidthConfig {
            target_class: target_class.into(),
            interval_m: DEFAULT_INTERVAL_M,
            kernel_px: DEFAULT_KERNEL_PX,
            filters: SliceFilters::default(),
        }
    }
}

/// Step 1: rotate the map so the street heading points up. Nearest-neighbor
/// resampling, canvas enlarged to hold the full source.
pub fn rotate_to_heading(r: &LandCoverRaster) -> Result<(LandCoverRaster, RotationTransform)> {
    r.validate()?;
    if r.heading_deg == 0.0 {
        let mut out = r.clone();
        out.heading_deg = 0.0;
        return Ok((out, RotationTransform::identity((r.width, r.height))));
    }
    let t = r.heading_deg.to_radians();
    let (s, c) = (t.sin().abs(), t.cos().abs());
    // the epsilon absorbs float residue at axis-aligned headings (sin(pi))
    let dst_w = (r.width as f64 * c + r.height as f64 * s - 1e-6).ceil() as usize;
    let dst_h = (r.width as f64 * s + r.height as f64 * c - 1e-6).ceil() as usize;
    let transform = RotationTransform::new(r.heading_deg, (r.width, r.height), (dst_w, dst_h));
    let mut grid = vec![BACKGROUND_CLASS; dst_w * dst_h];
    for row in 0..dst_h {
        for col in 0..dst_w {
            let (sx, sy) = transform.dst_to_src(col as f64 + 0.5, row as f64 + 0.5);
            let sc = sx.floor();
            let sr = sy.floor();
            if sc >= 0.0 && sr >= 0.0 && (sc as usize) < r.width && (sr as usize) < r.height {
                grid[row * dst_w + col] = r.get(sc as usize, sr as usize);
            }
        }
    }
    let rotated = LandCoverRaster {
        grid,
        width: dst_w,
        height: dst_h,
        resolution_m: r.resolution_m,
        center: r.center,
        heading_deg: 0.0,
        class_table: r.class_table.clone(),
    };
    Ok((rotated, transform))
}

/// Step 2: indicator raster of the target class.
pub fn binarize(r: &LandCoverRaster, target_class: &str) -> Result<BinaryRaster> {
    let id = r
        .class_id_of(target_class)
        .ok_or_else(|| Error::Config(format!("class {target_class:?} not in class table")))?;
    let mut out = BinaryRaster::zeros(r.width, r.height);
    for (dst, &src) in out.bits.iter_mut().zip(r.grid.iter()) {
        *dst = u8::from(src == id);
    }
    Ok(out)
}

fn morph_pass(b: &BinaryRaster, radius: usize, erode: bool) -> BinaryRaster {
    // separable square-kernel min (erode) / max (dilate); the window clips at
    // the raster border, so erosion and dilation stay adjoint and the
    // open-close filter is idempotent
    let (w, h) = (b.width, b.height);
    let mut tmp = BinaryRaster::zeros(w, h);
    for row in 0..h {
        for col in 0..w {
            let lo = col.saturating_sub(radius);
            let hi = (col + radius).min(w - 1);
            let window = &b.row(row)[lo..=hi];
            let v = if erode {
                *window.iter().min().unwrap()
            } else {
                *window.iter().max().unwrap()
            };
            tmp.set(col, row, v);
        }
    }
    let mut out = BinaryRaster::zeros(w, h);
    for col in 0..w {
        for row in 0..h {
            let lo = row.saturating_sub(radius);
            let hi = (row + radius).min(h - 1);
            let mut v = if erode { 1 } else { 0 };
            for r in lo..=hi {
                let p = tmp.get(col, r);
                if erode {
                    v = v.min(p);
                } else {
                    v = v.max(p);
                }
            }
            out.set(col, row, v);
        }
    }
    out
}

pub fn erode(b: &BinaryRaster, kernel_px: usize) -> BinaryRaster {
    morph_pass(b, kernel_px / 2, true)
}

pub fn dilate(b: &BinaryRaster, kernel_px: usize) -> BinaryRaster {
    morph_pass(b, kernel_px / 2, false)
}

/// Step 3: open-then-close with a square kernel. `kernel_px` must be odd;
/// a kernel of 1 is the identity.
pub fn morph_open_close(b: &BinaryRaster, kernel_px: usize) -> Result<BinaryRaster> {
    if kernel_px == 0 || kernel_px % 2 == 0 {
        return Err(Error::Config(format!(
            "morphology kernel {kernel_px} must be odd and >= 1"
        )));
    }
    if kernel_px == 1 {
        return Ok(b.clone());
    }
    let opened = dilate(&erode(b, kernel_px), kernel_px);
    Ok(erode(&dilate(&opened, kernel_px), kernel_px))
}

/// Step 4: run-length encode scanlines sampled every
/// `round(interval_m / resolution)` rows (stride at least 1).
pub fn scanline_slices(
    b: &BinaryRaster,
    interval_m: f64,
    resolution_m: f64,
) -> Result<Vec<RawRun>> {
    if !(interval_m > 0.0) {
        return Err(Error::Config(format!(
            "scanline interval {interval_m} must be positive"
        )));
    }
    if !(resolution_m > 0.0) {
        return Err(Error::Config(format!(
            "resolution {resolution_m} must be positive"
        )));
    }
    let stride = ((interval_m / resolution_m).round() as usize).max(1);
    let mut runs = Vec::new();
    let mut row = 0;
    while row < b.height {
        let line = b.row(row);
        let mut col = 0;
        while col < b.width {
            if line[col] != 0 {
                let start = col;
                while col + 1 < b.width && line[col + 1] != 0 {
                    col += 1;
                }
                runs.push(RawRun {
                    row,
                    col_start: start,
                    col_end: col,
                });
            }
            col += 1;
        }
        row += stride;
    }
    Ok(runs)
}

/// Step 5: touching classes at the two run ends and the cover ratio of the
/// run's bounding square.
///
/// Touching classes come from the single pixel just past each end on the
/// run's row in the rotated class raster; runs at the raster border touch
/// the sentinel class `"edge"`. The cover ratio counts target pixels inside
/// the axis-aligned square of side equal to the run length, centered on the
/// run, clipped to the raster (the denominator is the clipped pixel count).
pub fn slice_attributes(
    run: &RawRun,
    rotated: &LandCoverRaster,
    binary: &BinaryRaster,
) -> Result<SliceAttrs> {
    if run.row >= binary.height || run.col_end >= binary.width || run.col_start > run.col_end {
        return Err(Error::InvalidDetection(format!(
            "run {run:?} outside {}x{} raster",
            binary.width, binary.height
        )));
    }
    let touching = |col: Option<usize>| -> String {
        match col {
            Some(c) if c < rotated.width => rotated.class_name(rotated.get(c, run.row)).to_string(),
            _ => EDGE_CLASS_NAME.to_string(),
        }
    };
    let touching_start = touching(run.col_start.checked_sub(1));
    let touching_end = touching(if run.col_end + 1 < rotated.width {
        Some(run.col_end + 1)
    } else {
        None
    });

    let len = run.len_px();
    let half_lo = (len - 1) / 2;
    let half_hi = len / 2;
    let row_lo = run.row.saturating_sub(half_lo);
    let row_hi = (run.row + half_hi).min(binary.height - 1);
    let col_lo = run.col_start;
    let col_hi = run.col_end;
    let mut target = 0usize;
    let mut total = 0usize;
    for row in row_lo..=row_hi {
        for col in col_lo..=col_hi {
            total += 1;
            target += binary.get(col, row) as usize;
        }
    }
    Ok(SliceAttrs {
        touching_start,
        touching_end,
        cover_ratio: target as f64 / total as f64,
    })
}

/// Step 6: rotate runs back to the original frame, convert to meters from
/// the raster center, and apply validity filters.
pub fn finalize_slices(
    runs: &[(RawRun, SliceAttrs)],
    transform: &RotationTransform,
    r: &LandCoverRaster,
    filters: &SliceFilters,
) -> Vec<Slice> {
    let to_local = |x: f64, y: f64| -> LocalPoint {
        LocalPoint::new(
            (x - r.width as f64 / 2.0) * r.resolution_m,
            (r.height as f64 / 2.0 - y) * r.resolution_m,
            0.0,
        )
    };
    runs.iter()
        .map(|(run, attrs)| {
            let y = run.row as f64 + 0.5;
            // run outer edges so |end - start| equals the pixel-count length
            let (sx, sy) = transform.dst_to_src(run.col_start as f64, y);
            let (ex, ey) = transform.dst_to_src(run.col_end as f64 + 1.0, y);
            let start = to_local(sx, sy);
            let end = to_local(ex, ey);
            let length_m = run.len_px() as f64 * r.resolution_m;
            let touching_ok = filters.allowed_touching.contains(&attrs.touching_start)
                && filters.allowed_touching.contains(&attrs.touching_end);
            let length_ok = filters.min_length_m.map_or(true, |m| length_m >= m)
                && filters.max_length_m.map_or(true, |m| length_m <= m);
            let valid = touching_ok && attrs.cover_ratio > filters.min_cover_ratio && length_ok;
            Slice {
                start,
                end,
                length_m,
                row_index: run.row,
                touching_start: attrs.touching_start.clone(),
                touching_end: attrs.touching_end.clone(),
                cover_ratio: attrs.cover_ratio,
                valid,
            }
        })
        .collect()
}

/// Run steps 1-6 on one raster.
pub fn measure_widths(r: &LandCoverRaster, config: &WidthConfig) -> Result<Vec<Slice>> {
    let (rotated, transform) = rotate_to_heading(r)?;
    let binary = binarize(&rotated, &config.target_class)?;
    let cleaned = morph_open_close(&binary, config.kernel_px)?;
    let runs = scanline_slices(&cleaned, config.interval_m, r.resolution_m)?;
    let with_attrs: Vec<(RawRun, SliceAttrs)> = runs
        .into_iter()
        .map(|run| {
            let attrs = slice_attributes(&run, &rotated, &cleaned)?;
            Ok((run, attrs))
        })
        .collect::<Result<_>>()?;
    Ok(finalize_slices(&with_attrs, &transform, r, &config.filters))
}
