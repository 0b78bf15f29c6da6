//! On-disk formats: panorama metadata JSONL, detection and trunk-observation
//! records, land-cover rasters with georeferencing sidecars, dimension
//! registries, and GeoJSON output.
//!
//! All writers are deterministic: object keys are sorted and feature order is
//! the caller's (already normalized) order, so identical inputs produce
//! byte-identical files.

use std::collections::BTreeMap;
use std::fs;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::geo::{local_to_geo, wrap_360, GeoPoint, PanoramaPose, DEFAULT_CAMERA_HEIGHT_M};
use crate::projection::{thumb_pixel_to_angles, ImageRef, PixelBox, ThumbnailSpec};
use crate::raster::{BinaryRaster, LandCoverRaster};
use crate::tacheometry::{DimensionRegistry, LocatedObject};
use crate::triangulation::{locate_from_depth, TriangulatedTree, TrunkObservation};
use crate::width::Slice;

pub const TOOL_VERSION: &str = env!("CARGO_PKG_VERSION");

/// One line of panorama metadata JSONL.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PanoRecord {
    pub pano_id: String,
    pub lat: f64,
    pub lon: f64,
    pub heading_deg: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pitch_deg: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub roll_deg: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub camera_height_m: Option<f64>,
    pub image_width: u32,
    pub image_height: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sequence_id: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seq_index: Option<u32>,
}

/// A validated pose plus the sequence tag used to decide adjacency.
#[derive(Debug, Clone, PartialEq)]
pub struct PanoEntry {
    pub pose: PanoramaPose,
    pub sequence_id: Option<String>,
    pub seq_index: Option<u32>,
}

impl PanoEntry {
    /// Two entries are adjacent when consecutive in file order and in the
    /// same sequence (or both untagged).
    pub fn same_sequence(&self, other: &PanoEntry) -> bool {
        self.sequence_id == other.sequence_id
    }
}

impl PanoRecord {
    pub fn to_entry(&self) -> Result<PanoEntry> {
        let heading = if (0.0..360.0).contains(&self.heading_deg) {
            self.heading_deg
        } else {
            let h = wrap_360(self.heading_deg);
            log::warn!(
                "panorama {}: heading {} normalized to {h}",
                self.pano_id,
                self.heading_deg
            );
            h
        };
        let pose = PanoramaPose {
            pano_id: self.pano_id.clone(),
            position: GeoPoint::new(self.lat, self.lon)?,
            camera_height_m: self.camera_height_m.unwrap_or(DEFAULT_CAMERA_HEIGHT_M),
            heading_deg: heading,
            pitch_deg: self.pitch_deg.unwrap_or(0.0),
            roll_deg: self.roll_deg.unwrap_or(0.0),
            image_width: self.image_width,
            image_height: self.image_height,
        };
        pose.validate()?;
        Ok(PanoEntry {
            pose,
            sequence_id: self.sequence_id.clone(),
            seq_index: self.seq_index,
        })
    }

    pub fn from_entry(entry: &PanoEntry) -> Self {
        let p = &entry.pose;
        PanoRecord {
            pano_id: p.pano_id.clone(),
            lat: p.position.lat,
            lon: p.position.lon,
            heading_deg: p.heading_deg,
            pitch_deg: Some(p.pitch_deg),
            roll_deg: Some(p.roll_deg),
            camera_height_m: Some(p.camera_height_m),
            image_width: p.image_width,
            image_height: p.image_height,
            sequence_id: entry.sequence_id.clone(),
            seq_index: entry.seq_index,
        }
    }
}

/// One detection of a known-dimension object.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetectionRecord {
    /// Set for panorama-frame boxes; mutually exclusive with
    /// `thumbnail_spec`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pano_id: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub thumbnail_spec: Option<ThumbnailSpec>,
    pub class: String,
    pub col_min: f64,
    pub row_min: f64,
    pub col_max: f64,
    pub row_max: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub confidence: Option<f64>,
}

impl DetectionRecord {
    pub fn pano_id(&self) -> Result<&str> {
        match (&self.pano_id, &self.thumbnail_spec) {
            (Some(id), None) => Ok(id),
            (None, Some(spec)) => Ok(&spec.pano_id),
            _ => Err(Error::InvalidDetection(
                "exactly one of pano_id and thumbnail_spec must be set".into(),
            )),
        }
    }

    pub fn pixel_box(&self) -> Result<PixelBox> {
        let image = match (&self.pano_id, &self.thumbnail_spec) {
            (Some(id), None) => ImageRef::Panorama {
                pano_id: id.clone(),
            },
            (None, Some(spec)) => ImageRef::Thumbnail(spec.clone()),
            _ => {
                return Err(Error::InvalidDetection(
                    "exactly one of pano_id and thumbnail_spec must be set".into(),
                ))
            }
        };
        Ok(PixelBox {
            image,
            col_min: self.col_min,
            row_min: self.row_min,
            col_max: self.col_max,
            row_max: self.row_max,
        })
    }
}

/// One trunk observation line. Azimuths may be given directly or as pixel
/// columns on the thumbnail (converted during resolution).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrunkObsRecord {
    pub pano_id: String,
    pub thumbnail_spec: ThumbnailSpec,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub az_left_deg: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub az_right_deg: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub col_left: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub col_right: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub row_measure: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub depth_m: Option<f64>,
}

impl TrunkObsRecord {
    pub fn resolve(&self, pose: &PanoramaPose) -> Result<TrunkObservation> {
        if pose.pano_id != self.pano_id {
            return Err(Error::InvalidObservation(format!(
                "record pano {} resolved against pose {}",
                self.pano_id, pose.pano_id
            )));
        }
        let (az_left, az_right) = match (self.az_left_deg, self.az_right_deg) {
            (Some(l), Some(r)) => (l, r),
            (None, None) => {
                let (cl, cr, row) = match (self.col_left, self.col_right, self.row_measure) {
                    (Some(cl), Some(cr), Some(row)) => (cl, cr, row),
                    _ => {
                        return Err(Error::InvalidObservation(
                            "need az_left_deg/az_right_deg or col_left/col_right/row_measure"
                                .into(),
                        ))
                    }
                };
                let l = thumb_pixel_to_angles(pose, &self.thumbnail_spec, cl, row)?;
                let r = thumb_pixel_to_angles(pose, &self.thumbnail_spec, cr, row)?;
                (l.azimuth_deg, r.azimuth_deg)
            }
            _ => {
                return Err(Error::InvalidObservation(
                    "az_left_deg and az_right_deg must be given together".into(),
                ))
            }
        };
        let mut obs = TrunkObservation {
            pano_id: self.pano_id.clone(),
            thumbnail: self.thumbnail_spec.clone(),
            az_left_deg: wrap_360(az_left),
            az_right_deg: wrap_360(az_right),
            depth_m: self.depth_m,
            coarse_position: None,
        };
        obs.validate()?;
        if obs.depth_m.is_some() {
            obs.coarse_position = Some(locate_from_depth(&obs, pose)?);
        }
        Ok(obs)
    }
}

/// Georeferencing sidecar stored next to a land-cover raster image.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RasterSidecar {
    pub resolution_m: f64,
    pub center_lat: f64,
    pub center_lon: f64,
    pub heading_deg: f64,
    pub class_table: BTreeMap<u8, String>,
}

fn path_str(path: &Path) -> String {
    path.display().to_string()
}

/// Read newline-delimited JSON records; blank lines are skipped.
pub fn read_jsonl<T: DeserializeOwned>(path: &Path) -> Result<Vec<T>> {
    let file = fs::File::open(path).map_err(|e| Error::io(path_str(path), e))?;
    let mut out = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path_str(path), e))?;
        if line.trim().is_empty() {
            continue;
        }
        let record = serde_json::from_str(&line)
            .map_err(|e| Error::schema(path_str(path), format!("line {}: {e}", i + 1)))?;
        out.push(record);
    }
    Ok(out)
}

pub fn write_jsonl<T: Serialize>(records: &[T], path: &Path) -> Result<()> {
    let file = fs::File::create(path).map_err(|e| Error::io(path_str(path), e))?;
    let mut w = BufWriter::new(file);
    for r in records {
        let line = serde_json::to_string(r)
            .map_err(|e| Error::schema(path_str(path), e.to_string()))?;
        writeln!(w, "{line}").map_err(|e| Error::io(path_str(path), e))?;
    }
    w.flush().map_err(|e| Error::io(path_str(path), e))
}

/// Load and validate panorama metadata, preserving file order.
pub fn load_pano_metadata(path: &Path) -> Result<Vec<PanoEntry>> {
    let records: Vec<PanoRecord> = read_jsonl(path)?;
    records
        .iter()
        .map(|r| {
            r.to_entry()
                .map_err(|e| Error::schema(path_str(path), e.to_string()))
        })
        .collect()
}

pub fn save_pano_metadata(entries: &[PanoEntry], path: &Path) -> Result<()> {
    let records: Vec<PanoRecord> = entries.iter().map(PanoRecord::from_entry).collect();
    write_jsonl(&records, path)
}

pub fn load_registry(path: &Path) -> Result<DimensionRegistry> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path_str(path), e))?;
    let registry: DimensionRegistry = serde_json::from_str(&text)
        .map_err(|e| Error::schema(path_str(path), e.to_string()))?;
    registry.validate()?;
    Ok(registry)
}

/// Load a single-band 8-bit class raster (PNG or PGM) with its sidecar.
pub fn load_landcover(image_path: &Path, sidecar_path: &Path) -> Result<LandCoverRaster> {
    let text = fs::read_to_string(sidecar_path).map_err(|e| Error::io(path_str(sidecar_path), e))?;
    let sidecar: RasterSidecar = serde_json::from_str(&text)
        .map_err(|e| Error::schema(path_str(sidecar_path), e.to_string()))?;
    let img = image::open(image_path)
        .map_err(|e| Error::schema(path_str(image_path), e.to_string()))?
        .into_luma8();
    let (width, height) = (img.width() as usize, img.height() as usize);
    let raster = LandCoverRaster {
        grid: img.into_raw(),
        width,
        height,
        resolution_m: sidecar.resolution_m,
        center: GeoPoint::new(sidecar.center_lat, sidecar.center_lon)?,
        heading_deg: wrap_360(sidecar.heading_deg),
        class_table: sidecar.class_table,
    };
    raster.validate()?;
    Ok(raster)
}

pub fn save_landcover(
    raster: &LandCoverRaster,
    image_path: &Path,
    sidecar_path: &Path,
) -> Result<()> {
    raster.validate()?;
    image::save_buffer(
        image_path,
        &raster.grid,
        raster.width as u32,
        raster.height as u32,
        image::ColorType::L8,
    )
    .map_err(|e| Error::schema(path_str(image_path), e.to_string()))?;
    let sidecar = RasterSidecar {
        resolution_m: raster.resolution_m,
        center_lat: raster.center.lat,
        center_lon: raster.center.lon,
        heading_deg: raster.heading_deg,
        class_table: raster.class_table.clone(),
    };
    let text = serde_json::to_string_pretty(&sidecar)
        .map_err(|e| Error::schema(path_str(sidecar_path), e.to_string()))?;
    fs::write(sidecar_path, text + "\n").map_err(|e| Error::io(path_str(sidecar_path), e))
}

fn count_components(mask: &BinaryRaster) -> usize {
    let mut seen = vec![false; mask.bits.len()];
    let mut components = 0;
    let (w, h) = (mask.width, mask.height);
    for start in 0..mask.bits.len() {
        if mask.bits[start] == 0 || seen[start] {
            continue;
        }
        components += 1;
        let mut stack = vec![start];
        seen[start] = true;
        while let Some(i) = stack.pop() {
            let (c, r) = (i % w, i / w);
            let mut push = |c2: usize, r2: usize| {
                let j = r2 * w + c2;
                if mask.bits[j] != 0 && !seen[j] {
                    seen[j] = true;
                    stack.push(j);
                }
            };
            if c > 0 {
                push(c - 1, r);
            }
            if c + 1 < w {
                push(c + 1, r);
            }
            if r > 0 {
                push(c, r - 1);
            }
            if r + 1 < h {
                push(c, r + 1);
            }
        }
    }
    components
}

/// Extract a trunk observation from a binary trunk mask on a thumbnail.
/// The measuring row is the one whose horizontal extent is the (lower)
/// median over trunk rows; the azimuths come from that row's endpoint
/// pixel centers.
pub fn mask_to_trunk_observation(
    mask: &BinaryRaster,
    spec: &ThumbnailSpec,
    pose: &PanoramaPose,
) -> Result<TrunkObservation> {
    if mask.width != spec.width as usize || mask.height != spec.height as usize {
        return Err(Error::InvalidObservation(format!(
            "mask {}x{} does not match thumbnail {}x{}",
            mask.width, mask.height, spec.width, spec.height
        )));
    }
    match count_components(mask) {
        0 => return Err(Error::NoTrunk),
        1 => {}
        n => return Err(Error::AmbiguousMask { components: n }),
    }
    // per-row horizontal extent of the trunk
    let mut rows: Vec<(usize, usize, usize)> = Vec::new();
    for r in 0..mask.height {
        let row = mask.row(r);
        let first = row.iter().position(|&v| v != 0);
        if let Some(c0) = first {
            let c1 = mask.width - 1 - row.iter().rev().position(|&v| v != 0).unwrap();
            rows.push((r, c0, c1));
        }
    }
    let mut widths: Vec<usize> = rows.iter().map(|&(_, c0, c1)| c1 - c0 + 1).collect();
    widths.sort_unstable();
    let median_w = widths[(widths.len() - 1) / 2];
    let &(row, c0, c1) = rows
        .iter()
        .find(|&&(_, c0, c1)| c1 - c0 + 1 == median_w)
        .unwrap();
    let left = thumb_pixel_to_angles(pose, spec, c0 as f64, row as f64)?;
    let right = thumb_pixel_to_angles(pose, spec, c1 as f64, row as f64)?;
    let obs = TrunkObservation {
        pano_id: pose.pano_id.clone(),
        thumbnail: spec.clone(),
        az_left_deg: left.azimuth_deg,
        az_right_deg: right.azimuth_deg,
        depth_m: None,
        coarse_position: None,
    };
    obs.validate()?;
    Ok(obs)
}

/// Provenance block embedded in every output file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OutputMeta {
    pub tool_version: String,
    pub resolved_config: Value,
    pub input_hashes: BTreeMap<String, String>,
}

impl OutputMeta {
    pub fn new(resolved_config: Value) -> Self {
        OutputMeta {
            tool_version: TOOL_VERSION.to_string(),
            resolved_config,
            input_hashes: BTreeMap::new(),
        }
    }

    pub fn hash_input(&mut self, path: &Path) -> Result<()> {
        let digest = file_sha256(path)?;
        self.input_hashes
            .insert(path.file_name().map_or_else(
                || path_str(path),
                |n| n.to_string_lossy().into_owned(),
            ), digest);
        Ok(())
    }
}

pub fn file_sha256(path: &Path) -> Result<String> {
    let bytes = fs::read(path).map_err(|e| Error::io(path_str(path), e))?;
    Ok(hex::encode(Sha256::digest(&bytes)))
}

fn geo_coords(p: &GeoPoint) -> Value {
    match p.alt {
        Some(alt) => json!([p.lon, p.lat, alt]),
        None => json!([p.lon, p.lat]),
    }
}

/// LineString feature for one width slice. Endpoints are local to the
/// raster center.
pub fn slice_feature(slice: &Slice, center: &GeoPoint, source_raster: &str) -> Result<Value> {
    let start = local_to_geo(&slice.start, center)?;
    let end = local_to_geo(&slice.end, center)?;
    Ok(json!({
        "type": "Feature",
        "geometry": {
            "type": "LineString",
            "coordinates": [[start.lon, start.lat], [end.lon, end.lat]],
        },
        "properties": {
            "length_m": slice.length_m,
            "row_index": slice.row_index,
            "touching_start": slice.touching_start,
            "touching_end": slice.touching_end,
            "cover_ratio": slice.cover_ratio,
            "valid": slice.valid,
            "source_raster": source_raster,
        },
    }))
}

/// Point feature for one located object.
pub fn object_feature(obj: &LocatedObject) -> Value {
    json!({
        "type": "Feature",
        "geometry": {
            "type": "Point",
            "coordinates": geo_coords(&obj.position),
        },
        "properties": {
            "class": obj.class_name,
            "d_hor_m": obj.d_hor_m,
            "h_b_m": obj.h_b_m,
            "azimuth_deg": obj.azimuth_deg,
            "method": obj.method.to_string(),
            "source_pano": obj.source_pano,
            "n_observations": obj.n_observations,
        },
    })
}

/// Point feature for one triangulated tree.
pub fn tree_feature(tree: &TriangulatedTree) -> Value {
    json!({
        "type": "Feature",
        "geometry": {
            "type": "Point",
            "coordinates": geo_coords(&tree.position),
        },
        "properties": {
            "diameter_m": tree.diameter_m,
            "mean_diameter_m": tree.mean_diameter_m,
            "n_pairs": tree.n_pairs,
            "theta_c_deg_min": tree.theta_c_deg,
            "method": "triangulation",
        },
    })
}

/// Write an RFC 7946 FeatureCollection. Feature order is preserved; keys
/// are emitted sorted, so output bytes depend only on content.
pub fn write_geojson(features: Vec<Value>, meta: &OutputMeta, path: &Path) -> Result<()> {
    let collection = json!({
        "type": "FeatureCollection",
        "metadata": meta,
        "features": features,
    });
    let text = serde_json::to_string_pretty(&collection)
        .map_err(|e| Error::schema(path_str(path), e.to_string()))?;
    fs::write(path, text + "\n").map_err(|e| Error::io(path_str(path), e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geo::LocalPoint;
    use crate::synthetic::{project_cylinder, CylinderSpec};
    use approx::assert_abs_diff_eq;

    fn tmp() -> tempfile::TempDir {
        tempfile::tempdir().unwrap()
    }

    fn pose() -> PanoramaPose {
        PanoramaPose::new(
            "p1",
            GeoPoint::new(38.9, -77.0).unwrap(),
            0.0,
            16384,
            8192,
        )
        .unwrap()
    }

    fn spec_east() -> ThumbnailSpec {
        ThumbnailSpec {
            pano_id: "p1".into(),
            heading_offset_deg: 90.0,
            pitch_deg: 0.0,
            hfov_deg: 90.0,
            width: 640,
            height: 640,
        }
    }

    #[test]
    fn empty_metadata_file_is_empty_list() {
        let dir = tmp();
        let path = dir.path().join("panos.jsonl");
        fs::write(&path, "").unwrap();
        assert!(load_pano_metadata(&path).unwrap().is_empty());
    }

    #[test]
    fn heading_370_normalizes_to_10() {
        let rec = PanoRecord {
            pano_id: "p".into(),
            lat: 10.0,
            lon: 20.0,
            heading_deg: 370.0,
            pitch_deg: None,
            roll_deg: None,
            camera_height_m: None,
            image_width: 8192,
            image_height: 4096,
            sequence_id: None,
            seq_index: None,
        };
        assert_abs_diff_eq!(rec.to_entry().unwrap().pose.heading_deg, 10.0);
    }

    #[test]
    fn missing_field_names_it() {
        let dir = tmp();
        let path = dir.path().join("panos.jsonl");
        fs::write(&path, "{\"pano_id\": \"p\", \"lat\": 1.0}\n").unwrap();
        let err = load_pano_metadata(&path).unwrap_err();
        assert!(err.to_string().contains("lon"), "{err}");
    }

    #[test]
    fn metadata_round_trip_identical() {
        let dir = tmp();
        let path = dir.path().join("panos.jsonl");
        let entries = vec![
            PanoEntry {
                pose: pose(),
                sequence_id: Some("seq-a".into()),
                seq_index: Some(0),
            },
            PanoEntry {
                pose: PanoramaPose::new("p2", GeoPoint::new(38.901, -77.0).unwrap(), 12.5, 8192, 4096)
                    .unwrap(),
                sequence_id: Some("seq-a".into()),
                seq_index: Some(1),
            },
        ];
        save_pano_metadata(&entries, &path).unwrap();
        let back = load_pano_metadata(&path).unwrap();
        assert_eq!(back, entries);
    }

    #[test]
    fn landcover_round_trips_png_and_pgm() {
        let dir = tmp();
        let raster = LandCoverRaster {
            grid: vec![0, 1, 2, 1, 0, 2],
            width: 3,
            height: 2,
            resolution_m: 0.25,
            center: GeoPoint::new(38.9, -77.0).unwrap(),
            heading_deg: 17.0,
            class_table: [(1, "road".to_string()), (2, "sidewalk".to_string())]
                .into_iter()
                .collect(),
        };
        for ext in ["png", "pgm"] {
            let img = dir.path().join(format!("lc.{ext}"));
            let sidecar = dir.path().join(format!("lc.{ext}.json"));
            save_landcover(&raster, &img, &sidecar).unwrap();
            let back = load_landcover(&img, &sidecar).unwrap();
            assert_eq!(back, raster);
        }
    }

    #[test]
    fn rectangle_mask_any_row_consistent() {
        let spec = spec_east();
        let mut mask = BinaryRaster::zeros(640, 640);
        for r in 100..500 {
            for c in 310..330 {
                mask.set(c, r, 1);
            }
        }
        let obs = mask_to_trunk_observation(&mask, &spec, &pose()).unwrap();
        let left = thumb_pixel_to_angles(&pose(), &spec, 310.0, 300.0).unwrap();
        let right = thumb_pixel_to_angles(&pose(), &spec, 329.0, 300.0).unwrap();
        // every row has identical extent; azimuths must match the shared runs
        assert_abs_diff_eq!(obs.az_left_deg, left.azimuth_deg, epsilon = 1e-6);
        assert_abs_diff_eq!(obs.az_right_deg, right.azimuth_deg, epsilon = 1e-6);
    }

    #[test]
    fn taper_selects_median_width_row() {
        let spec = spec_east();
        let mut mask = BinaryRaster::zeros(640, 640);
        // widths 10..=20 px over 11 rows, centered on column 320
        for (i, w) in (10..=20).enumerate() {
            let r = 200 + i;
            let c0 = 320 - w / 2;
            for c in c0..c0 + w {
                mask.set(c, r, 1);
            }
        }
        let obs = mask_to_trunk_observation(&mask, &spec, &pose()).unwrap();
        // median width is 15 px, the row at offset 5
        let row = 205.0;
        let left = thumb_pixel_to_angles(&pose(), &spec, (320 - 7) as f64, row).unwrap();
        let right = thumb_pixel_to_angles(&pose(), &spec, (320 - 7 + 14) as f64, row).unwrap();
        assert_abs_diff_eq!(obs.az_left_deg, left.azimuth_deg, epsilon = 1e-9);
        assert_abs_diff_eq!(obs.az_right_deg, right.azimuth_deg, epsilon = 1e-9);
    }

    #[test]
    fn empty_and_split_masks_rejected() {
        let spec = spec_east();
        let empty = BinaryRaster::zeros(640, 640);
        assert!(matches!(
            mask_to_trunk_observation(&empty, &spec, &pose()),
            Err(Error::NoTrunk)
        ));
        let mut split = BinaryRaster::zeros(640, 640);
        split.set(100, 100, 1);
        split.set(400, 400, 1);
        assert!(matches!(
            mask_to_trunk_observation(&split, &spec, &pose()),
            Err(Error::AmbiguousMask { components: 2 })
        ));
    }

    #[test]
    fn cylinder_mask_matches_projection_oracle() {
        let p = pose();
        let spec = spec_east();
        let trunk = CylinderSpec {
            position: local_to_geo(&LocalPoint::new(10.0, 0.0, 0.0), &p.position).unwrap(),
            radius_m: 0.3,
            height_m: 8.0,
        };
        let proj = project_cylinder(&p, &trunk).unwrap();
        // mark every pixel whose center azimuth falls between the tangents
        let mut mask = BinaryRaster::zeros(640, 640);
        for r in 280..360 {
            for c in 0..640 {
                let a = thumb_pixel_to_angles(&p, &spec, c as f64, r as f64).unwrap();
                let inside = crate::geo::signed_arc(proj.az_left_deg, a.azimuth_deg) >= 0.0
                    && crate::geo::signed_arc(a.azimuth_deg, proj.az_right_deg) >= 0.0;
                if inside {
                    mask.set(c, r, 1);
                }
            }
        }
        let obs = mask_to_trunk_observation(&mask, &spec, &p).unwrap();
        let pixel_deg = 90.0 / 640.0;
        assert!(
            crate::geo::signed_arc(proj.az_left_deg, obs.az_left_deg).abs() <= pixel_deg,
            "left {} vs {}",
            obs.az_left_deg,
            proj.az_left_deg
        );
        assert!(
            crate::geo::signed_arc(proj.az_right_deg, obs.az_right_deg).abs() <= pixel_deg
        );
    }

    #[test]
    fn empty_geojson_collection_valid() {
        let dir = tmp();
        let path = dir.path().join("out.geojson");
        write_geojson(vec![], &OutputMeta::new(json!({})), &path).unwrap();
        let v: Value = serde_json::from_str(&fs::read_to_string(&path).unwrap()).unwrap();
        assert_eq!(v["type"], "FeatureCollection");
        assert!(v["features"].as_array().unwrap().is_empty());
        assert_eq!(v["metadata"]["tool_version"], TOOL_VERSION);
    }

    #[test]
    fn slice_feature_has_all_properties() {
        let slice = Slice {
            start: LocalPoint::new(-5.0, 0.0, 0.0),
            end: LocalPoint::new(5.0, 0.0, 0.0),
            length_m: 10.0,
            row_index: 42,
            touching_start: "terrain".into(),
            touching_end: "sidewalk".into(),
            cover_ratio: 0.97,
            valid: true,
        };
        let center = GeoPoint::new(38.9, -77.0).unwrap();
        let f = slice_feature(&slice, &center, "lc.png").unwrap();
        assert_eq!(f["geometry"]["type"], "LineString");
        let props = f["properties"].as_object().unwrap();
        for key in [
            "length_m",
            "row_index",
            "touching_start",
            "touching_end",
            "cover_ratio",
            "valid",
            "source_raster",
        ] {
            assert!(props.contains_key(key), "missing {key}");
        }
        // lon-lat order: longitude of the west endpoint is smaller
        let coords = f["geometry"]["coordinates"].as_array().unwrap();
        assert!(coords[0][0].as_f64().unwrap() < coords[1][0].as_f64().unwrap());
        assert_abs_diff_eq!(coords[0][1].as_f64().unwrap(), 38.9, epsilon = 1e-9);
    }

    #[test]
    fn geojson_bytes_deterministic() {
        let dir = tmp();
        let obj = LocatedObject {
            class_name: "stop_sign".into(),
            position: GeoPoint::new(38.9, -77.0).unwrap(),
            d_hor_m: 12.0,
            h_b_m: -0.3,
            azimuth_deg: 45.0,
            source_pano: "p1".into(),
            method: crate::tacheometry::Method::Tacheometry,
            d_hor_bound_m: None,
            n_observations: 1,
        };
        let meta = OutputMeta::new(json!({"radius_m": 3.0}));
        let a = dir.path().join("a.geojson");
        let b = dir.path().join("b.geojson");
        write_geojson(vec![object_feature(&obj)], &meta, &a).unwrap();
        write_geojson(vec![object_feature(&obj)], &meta, &b).unwrap();
        assert_eq!(fs::read(&a).unwrap(), fs::read(&b).unwrap());
    }

    #[test]
    fn sha256_of_known_bytes() {
        let dir = tmp();
        let path = dir.path().join("abc.txt");
        fs::write(&path, "abc").unwrap();
        assert_eq!(
            file_sha256(&path).unwrap(),
            "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad"
        );
    }
}
