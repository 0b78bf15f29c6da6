//! Single-image 3D localization of objects with a known vertical dimension.
//!
//! The observer measures the altitude angles of the object's top and bottom;
//! with the object height known, the horizontal distance follows from the
//! triangle the two sight rays form with the object. Altitudes are signed
//! (positive above the horizon), which collapses the above/straddle/below
//! camera configurations into one formula:
//!
//! `d_hor = h_o * cos(theta_t) * cos(theta_b) / sin(theta_t - theta_b)`

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geo::{local_to_geo, wrap_360, GeoPoint, LocalPoint, PanoramaPose};
use crate::projection::{box_to_angular_extents, ImageRef, PixelBox};

/// Minimum angular height in degrees before an object counts as "at
/// infinity".
pub const MIN_ANGULAR_HEIGHT_DEG: f64 = 0.01;
/// Altitudes closer than this to +-90 deg are rejected.
pub const POLE_LIMIT_DEG: f64 = 89.99;
/// Default clustering radius for merging repeated observations.
pub const DEFAULT_MERGE_RADIUS_M: f64 = 3.0;

/// Standard stop sign face height in meters.
pub const STOP_SIGN_HEIGHT_M: f64 = 0.75;

/// Inputs for one tacheometric distance solution.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TachInput {
    /// Altitude of the object top, degrees, signed.
    pub theta_top_deg: f64,
    /// Altitude of the object bottom, degrees, signed.
    pub theta_bottom_deg: f64,
    /// World azimuth of the object center, degrees.
    pub azimuth_deg: f64,
    /// Known vertical extent of the object, meters.
    pub object_height_m: f64,
}

/// How a located object's position was obtained.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Tacheometry,
    Triangulation,
    Depth,
}

impl std::fmt::Display for Method {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Method::Tacheometry => "tacheometry",
            Method::Triangulation => "triangulation",
            Method::Depth => "depth",
        })
    }
}

/// A 3D-positioned detection.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LocatedObject {
    pub class_name: String,
    pub position: GeoPoint,
    /// Horizontal camera-to-object distance, meters.
    pub d_hor_m: f64,
    /// Vertical offset of the object bottom relative to the camera, meters,
    /// negative below the camera.
    pub h_b_m: f64,
    pub azimuth_deg: f64,
    pub source_pano: String,
    pub method: Method,
    /// Worst-case distance error propagated from per-edge angle
    /// quantization, when known.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub d_hor_bound_m: Option<f64>,
    /// Number of raw observations behind this record (1 before merging).
    #[serde(default = "one")]
    pub n_observations: usize,
}

fn one() -> usize {
    1
}

/// Known vertical dimensions per detection class, meters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct DimensionRegistry(pub BTreeMap<String, f64>);

impl DimensionRegistry {
    /// Registry with the only dimension shipped by default: the standard
    /// stop sign face height.
    pub fn builtin() -> Self {
        let mut m = BTreeMap::new();
        m.insert("stop_sign".to_string(), STOP_SIGN_HEIGHT_M);
        DimensionRegistry(m)
    }

    pub fn height_of(&self, class: &str) -> Result<f64> {
        self.0
            .get(class)
            .copied()
            .ok_or_else(|| Error::Config(format!("class {class:?} not in dimension registry")))
    }

    pub fn validate(&self) -> Result<()> {
        for (class, h) in &self.0 {
            if !(*h > 0.0) {
                return Err(Error::Config(format!(
                    "dimension for {class:?} must be positive, got {h}"
                )));
            }
        }
        Ok(())
    }
}

fn check_altitude(theta_deg: f64) -> Result<()> {
    if theta_deg.abs() >= POLE_LIMIT_DEG {
        return Err(Error::PoleAngle(theta_deg));
    }
    Ok(())
}

/// Horizontal distance and signed bottom height from one angular
/// observation of an object with known vertical extent.
pub fn tacheometric_distance(input: &TachInput) -> Result<(f64, f64)> {
    let (theta_t, theta_b) = (input.theta_top_deg, input.theta_bottom_deg);
    if !(input.object_height_m > 0.0) {
        return Err(Error::Config(format!(
            "object height {} must be positive",
            input.object_height_m
        )));
    }
    check_altitude(theta_t)?;
    check_altitude(theta_b)?;
    let span = theta_t - theta_b;
    if span < MIN_ANGULAR_HEIGHT_DEG {
        return Err(Error::DegenerateObject(format!(
            "angular height {span:.5} deg below {MIN_ANGULAR_HEIGHT_DEG} deg (object at infinity)"
        )));
    }
    let (t, b) = (theta_t.to_radians(), theta_b.to_radians());
    let d_hor = input.object_height_m * t.cos() * b.cos() / (t - b).sin();
    let h_b = b.tan() * d_hor;
    Ok((d_hor, h_b))
}

/// Worst-case distance deviation when each altitude edge may be off by
/// `delta_top_deg` / `delta_bottom_deg` (e.g. one pixel of quantization).
pub fn propagated_distance_bound(
    input: &TachInput,
    delta_top_deg: f64,
    delta_bottom_deg: f64,
) -> Result<f64> {
    let (d0, _) = tacheometric_distance(input)?;
    let mut worst: f64 = 0.0;
    for st in [-1.0, 1.0] {
        for sb in [-1.0, 1.0] {
            let perturbed = TachInput {
                theta_top_deg: input.theta_top_deg + st * delta_top_deg,
                theta_bottom_deg: input.theta_bottom_deg + sb * delta_bottom_deg,
                ..*input
            };
            match tacheometric_distance(&perturbed) {
                Ok((d, _)) => worst = worst.max((d - d0).abs()),
                // a perturbation that collapses the object to zero angular
                // height means the distance is unbounded above
                Err(Error::DegenerateObject(_)) => return Ok(f64::INFINITY),
                Err(e) => return Err(e),
            }
        }
    }
    Ok(worst)
}

/// Place a measured object in geographic coordinates around the camera.
pub fn place_object(
    pose: &PanoramaPose,
    class_name: impl Into<String>,
    d_hor_m: f64,
    h_b_m: f64,
    azimuth_deg: f64,
) -> Result<LocatedObject> {
    if !(d_hor_m > 0.0) {
        return Err(Error::DegenerateGeometry(format!(
            "horizontal distance {d_hor_m} must be positive"
        )));
    }
    let az = wrap_360(azimuth_deg);
    let az_rad = az.to_radians();
    let local = LocalPoint::new(
        d_hor_m * az_rad.sin(),
        d_hor_m * az_rad.cos(),
        pose.camera_height_m + h_b_m,
    );
    let position = local_to_geo(&local, &pose.position)?;
    Ok(LocatedObject {
        class_name: class_name.into(),
        position,
        d_hor_m,
        h_b_m,
        azimuth_deg: az,
        source_pano: pose.pano_id.clone(),
        method: Method::Tacheometry,
        d_hor_bound_m: None,
        n_observations: 1,
    })
}

/// Per-edge altitude step of one pixel at the box's top and bottom rows,
/// used to propagate quantization error.
fn per_pixel_altitude_steps(pose: &PanoramaPose, pixel_box: &PixelBox) -> (f64, f64) {
    match &pixel_box.image {
        ImageRef::Panorama { .. } => {
            let step = 180.0 / pose.image_height as f64;
            (step, step)
        }
        ImageRef::Thumbnail(spec) => {
            // perspective altitude per pixel varies with row; evaluate at the
            // box edges
            let f = spec.focal_px();
            let step_at = |row: f64| {
                let y = spec.height as f64 / 2.0 - (row + 0.5);
                let a0 = (y / f).atan().to_degrees();
                let a1 = ((y - 1.0) / f).atan().to_degrees();
                (a0 - a1).abs()
            };
            (step_at(pixel_box.row_min), step_at(pixel_box.row_max))
        }
    }
}

/// Full localization of a single detection: box to angles, distance, and
/// geographic placement, with a propagated quantization bound attached.
pub fn localize_detection(
    pose: &PanoramaPose,
    class_name: &str,
    pixel_box: &PixelBox,
    registry: &DimensionRegistry,
) -> Result<LocatedObject> {
    let h_o = registry.height_of(class_name)?;
    let extents = box_to_angular_extents(pose, pixel_box)?;
    let input = TachInput {
        theta_top_deg: extents.theta_top_deg,
        theta_bottom_deg: extents.theta_bottom_deg,
        azimuth_deg: extents.azimuth_center_deg,
        object_height_m: h_o,
    };
    let (d_hor, h_b) = tacheometric_distance(&input)?;
    let (dt, db) = per_pixel_altitude_steps(pose, pixel_box);
    let bound = propagated_distance_bound(&input, dt, db)?;
    let mut obj = place_object(pose, class_name, d_hor, h_b, extents.azimuth_center_deg)?;
    obj.d_hor_bound_m = Some(bound);
    Ok(obj)
}

fn median(values: &mut [f64]) -> f64 {
    values.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let n = values.len();
    if n % 2 == 1 {
        values[n / 2]
    } else {
        (values[n / 2 - 1] + values[n / 2]) / 2.0
    }
}

/// Greedy single-linkage clustering of repeated observations of the same
/// physical objects. Observations of different classes never merge. Cluster
/// position is the component-wise median.
pub fn merge_observations(
    objects: &[LocatedObject],
    radius_m: f64,
) -> Result<Vec<LocatedObject>> {
    if !(radius_m > 0.0) {
        return Err(Error::Config(format!(
            "merge radius {radius_m} must be positive"
        )));
    }
    if objects.is_empty() {
        return Ok(Vec::new());
    }
    let anchor = objects[0].position;
    let locals: Vec<LocalPoint> = objects
        .iter()
        .map(|o| crate::geo::geo_to_local(&o.position, &anchor))
        .collect::<Result<_>>()?;

    // union-find over pairs within the linkage radius
    let mut parent: Vec<usize> = (0..objects.len()).collect();
    fn find(parent: &mut Vec<usize>, i: usize) -> usize {
        if parent[i] != i {
            let root = find(parent, parent[i]);
            parent[i] = root;
        }
        parent[i]
    }
    for i in 0..objects.len() {
        for j in (i + 1)..objects.len() {
            if objects[i].class_name == objects[j].class_name
                && locals[i].horizontal_distance(&locals[j]) <= radius_m
            {
                let (ri, rj) = (find(&mut parent, i), find(&mut parent, j));
                if ri != rj {
                    parent[rj.max(ri)] = rj.min(ri);
                }
            }
        }
    }

    let mut clusters: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for i in 0..objects.len() {
        let root = find(&mut parent, i);
        clusters.entry(root).or_default().push(i);
    }

    let mut merged = Vec::with_capacity(clusters.len());
    for (_, members) in clusters {
        let mut easts: Vec<f64> = members.iter().map(|&i| locals[i].east).collect();
        let mut norths: Vec<f64> = members.iter().map(|&i| locals[i].north).collect();
        let mut ups: Vec<f64> = members.iter().map(|&i| locals[i].up).collect();
        let mut dists: Vec<f64> = members.iter().map(|&i| objects[i].d_hor_m).collect();
        let mut heights: Vec<f64> = members.iter().map(|&i| objects[i].h_b_m).collect();
        let center = LocalPoint::new(median(&mut easts), median(&mut norths), median(&mut ups));
        // circular mean keeps the reported azimuth meaningful across the wrap
        let (ss, sc) = members.iter().fold((0.0, 0.0), |(s, c), &i| {
            let a = objects[i].azimuth_deg.to_radians();
            (s + a.sin(), c + a.cos())
        });
        let first = &objects[members[0]];
        merged.push(LocatedObject {
            class_name: first.class_name.clone(),
            position: local_to_geo(&center, &anchor)?,
            d_hor_m: median(&mut dists),
            h_b_m: median(&mut heights),
            azimuth_deg: wrap_360(ss.atan2(sc).to_degrees()),
            source_pano: first.source_pano.clone(),
            method: first.method,
            d_hor_bound_m: None,
            n_observations: members.len(),
        });
    }
    Ok(merged)
}
