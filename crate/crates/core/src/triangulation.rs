//! Stereo diameter measurement from paired thumbnails of adjacent panoramas.
//!
//! Two cameras observing the same trunk form a triangle with the baseline.
//! Both interior angles at the cameras come from the observed azimuths, the
//! baseline length from the camera positions, and the law of sines gives the
//! camera-to-object distances. The diameter follows from the angular width
//! each camera sees.
//!
//! All triangle math runs in a local frame with camera A at the origin and
//! the A-to-B baseline along +x, where the interior angle at A doubles as
//! the direction angle of the A-to-object ray; the result is rotated back by
//! the baseline bearing afterwards.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geo::{
    bearing_between, geo_to_local, local_to_geo, signed_arc, wrap_360, GeoPoint, LocalPoint,
    PanoramaPose,
};
use crate::projection::ThumbnailSpec;

/// Horizontal field of view of planned thumbnails, degrees.
pub const THUMBNAIL_HFOV_DEG: f64 = 90.0;
/// Default planned thumbnail size in pixels.
pub const DEFAULT_THUMBNAIL_SIZE_PX: u32 = 640;
/// Heading offsets of the six planned thumbnails per panorama.
pub const THUMBNAIL_OFFSETS_DEG: [f64; 6] = [45.0, 90.0, 135.0, -45.0, -90.0, -135.0];
/// Two coarse locations closer than this are treated as the same tree.
pub const DEFAULT_MATCH_DISTANCE_M: f64 = 3.0;
/// Minimum stereo baseline, meters.
pub const MIN_BASELINE_M: f64 = 0.5;
/// Minimum apex angle before a pair counts as ill-conditioned, degrees.
pub const MIN_APEX_ANGLE_DEG: f64 = 2.0;

/// One trunk sighting on one thumbnail: world azimuths of the diameter ends
/// at measuring height, plus an optional monocular-depth coarse location.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrunkObservation {
    pub pano_id: String,
    pub thumbnail: ThumbnailSpec,
    pub az_left_deg: f64,
    pub az_right_deg: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub depth_m: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub coarse_position: Option<GeoPoint>,
}

impl TrunkObservation {
    pub fn validate(&self) -> Result<()> {
        let width = signed_arc(self.az_left_deg, self.az_right_deg);
        if !(width > 0.0 && width < 90.0) {
            return Err(Error::InvalidObservation(format!(
                "angular width {width:.4} deg outside (0, 90): az_left {} az_right {}",
                self.az_left_deg, self.az_right_deg
            )));
        }
        Ok(())
    }

    /// Shortest positive arc from the left to the right diameter end.
    pub fn angular_width_deg(&self) -> f64 {
        signed_arc(self.az_left_deg, self.az_right_deg)
    }

    /// Azimuth of the trunk axis: midpoint of the two diameter-end azimuths.
    pub fn az_center_deg(&self) -> f64 {
        wrap_360(self.az_left_deg + self.angular_width_deg() / 2.0)
    }
}

/// Two observations of the same trunk from different panoramas.
#[derive(Debug, Clone, PartialEq)]
pub struct StereoPair {
    pub obs_a: TrunkObservation,
    pub obs_b: TrunkObservation,
    pub camera_a: GeoPoint,
    pub camera_b: GeoPoint,
    /// Baseline length s_c, meters.
    pub baseline_m: f64,
    /// Bearing of the A-to-B baseline, degrees.
    pub baseline_bearing_deg: f64,
}

impl StereoPair {
    pub fn new(
        pose_a: &PanoramaPose,
        obs_a: TrunkObservation,
        pose_b: &PanoramaPose,
        obs_b: TrunkObservation,
    ) -> Result<Self> {
        if pose_a.pano_id == pose_b.pano_id {
            return Err(Error::PairingRejected(format!(
                "both observations come from panorama {}",
                pose_a.pano_id
            )));
        }
        obs_a.validate()?;
        obs_b.validate()?;
        let baseline_m = crate::geo::horizontal_distance(&pose_a.position, &pose_b.position)?;
        if baseline_m <= MIN_BASELINE_M {
            return Err(Error::PairingRejected(format!(
                "baseline {baseline_m:.2} m below minimum {MIN_BASELINE_M} m"
            )));
        }
        let baseline_bearing_deg = bearing_between(&pose_a.position, &pose_b.position)?;
        Ok(StereoPair {
            obs_a,
            obs_b,
            camera_a: pose_a.position,
            camera_b: pose_b.position,
            baseline_m,
            baseline_bearing_deg,
        })
    }
}

/// How the diameter is derived from the subtended angle.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DiameterMode {
    /// Flat-target approximation `d = 2 s tan(theta/2)`; slightly
    /// overestimates a cylinder.
    #[default]
    Tangent,
    /// Exact for a cylinder whose tangent rays subtend `theta` at distance
    /// `s` from the axis: `d = 2 s sin(theta/2)`.
    ExactCylinder,
}

/// A triangulated (and optionally measured) tree.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TriangulatedTree {
    pub position: GeoPoint,
    /// Interior angle at camera A, degrees.
    pub theta_a_deg: f64,
    /// Interior angle at camera B, degrees.
    pub theta_b_deg: f64,
    /// Apex angle at the object, degrees.
    pub theta_c_deg: f64,
    /// Distance from camera B to the object, meters.
    pub side_a_m: f64,
    /// Distance from camera A to the object, meters.
    pub side_b_m: f64,
    /// Baseline length, meters.
    pub side_c_m: f64,
    /// Diameters measured from each image of each contributing pair.
    pub per_image_diameters_m: Vec<f64>,
    /// Mean of the per-pair diameters.
    pub mean_diameter_m: f64,
    /// Diameter of this measurement (pair mean, or aggregate mean).
    pub diameter_m: f64,
    /// Number of stereo pairs behind this record.
    pub n_pairs: usize,
}

/// The six standard thumbnails of a panorama: 45, 90, 135 degrees off the
/// travel direction on each side, 90 degree horizontal field of view.
pub fn plan_thumbnails(pose: &PanoramaPose) -> [ThumbnailSpec; 6] {
    THUMBNAIL_OFFSETS_DEG.map(|offset| ThumbnailSpec {
        pano_id: pose.pano_id.clone(),
        heading_offset_deg: offset,
        pitch_deg: 0.0,
        hfov_deg: THUMBNAIL_HFOV_DEG,
        width: DEFAULT_THUMBNAIL_SIZE_PX,
        height: DEFAULT_THUMBNAIL_SIZE_PX,
    })
}

/// Candidate thumbnail pairs for two panoramas that are consecutive along
/// the capture track (`rear` captured before `front`). Per side, the
/// trailing thumbnail of the front panorama pairs with each of the three
/// same-side thumbnails of the rear one: three pairs per side, six total.
/// `seq_distance` is the separation in capture order; anything but 1 is
/// rejected.
pub fn candidate_pairs(
    rear: &PanoramaPose,
    front: &PanoramaPose,
    seq_distance: u32,
) -> Result<Vec<(ThumbnailSpec, ThumbnailSpec)>> {
    if seq_distance != 1 {
        return Err(Error::PairingRejected(format!(
            "panoramas {} and {} are {} apart in sequence; only adjacent panoramas pair",
            rear.pano_id, front.pano_id, seq_distance
        )));
    }
    let spec = |pose: &PanoramaPose, offset: f64| ThumbnailSpec {
        pano_id: pose.pano_id.clone(),
        heading_offset_deg: offset,
        pitch_deg: 0.0,
        hfov_deg: THUMBNAIL_HFOV_DEG,
        width: DEFAULT_THUMBNAIL_SIZE_PX,
        height: DEFAULT_THUMBNAIL_SIZE_PX,
    };
    let mut pairs = Vec::with_capacity(6);
    for side in [1.0, -1.0] {
        let trailing = spec(front, side * 135.0);
        for offset in [45.0, 90.0, 135.0] {
            pairs.push((trailing.clone(), spec(rear, side * offset)));
        }
    }
    Ok(pairs)
}

/// Coarse single-image location from a monocular depth estimate.
pub fn locate_from_depth(obs: &TrunkObservation, pose: &PanoramaPose) -> Result<GeoPoint> {
    let depth = obs
        .depth_m
        .ok_or_else(|| Error::InvalidDepth("observation carries no depth".into()))?;
    if !(depth > 0.0) {
        return Err(Error::InvalidDepth(format!(
            "depth {depth} must be positive"
        )));
    }
    let az = obs.az_center_deg().to_radians();
    local_to_geo(
        &LocalPoint::new(depth * az.sin(), depth * az.cos(), 0.0),
        &pose.position,
    )
}

/// True when two coarse locations are close enough to come from the same
/// tree. Observations without a coarse position never match.
pub fn match_by_depth(a: &TrunkObservation, b: &TrunkObservation, max_dist_m: f64) -> bool {
    match (&a.coarse_position, &b.coarse_position) {
        (Some(pa), Some(pb)) => crate::geo::horizontal_distance(pa, pb)
            .map(|d| d <= max_dist_m)
            .unwrap_or(false),
        _ => false,
    }
}

/// Intersect the two center rays of a stereo pair.
pub fn triangulate(pair: &StereoPair) -> Result<TriangulatedTree> {
    let az_a = pair.obs_a.az_center_deg();
    let az_b = pair.obs_b.az_center_deg();
    // interior angles between each ray and the baseline
    let dev_a = signed_arc(pair.baseline_bearing_deg, az_a);
    let dev_b = signed_arc(wrap_360(pair.baseline_bearing_deg + 180.0), az_b);
    // both rays must leave the baseline toward the same side
    if dev_a == 0.0 || dev_b == 0.0 || dev_a.signum() == dev_b.signum() {
        return Err(Error::DivergentRays(format!(
            "rays leave the baseline on different sides (deviations {dev_a:.3} / {dev_b:.3} deg)"
        )));
    }
    let theta_a = dev_a.abs();
    let theta_b = dev_b.abs();
    let theta_c = 180.0 - theta_a - theta_b;
    if theta_c <= 0.0 {
        return Err(Error::DivergentRays(format!(
            "interior angles {theta_a:.3} + {theta_b:.3} >= 180 deg; rays never meet"
        )));
    }
    if theta_c < MIN_APEX_ANGLE_DEG {
        return Err(Error::IllConditionedPair {
            theta_c_deg: theta_c,
            min_deg: MIN_APEX_ANGLE_DEG,
        });
    }
    let side_b = pair.baseline_m * theta_b.to_radians().sin() / theta_c.to_radians().sin();
    let side_a = pair.baseline_m * theta_a.to_radians().sin() / theta_c.to_radians().sin();
    // baseline-aligned frame: x along the baseline, y toward the object side
    let x = side_b * theta_a.to_radians().cos();
    let y = side_b * theta_a.to_radians().sin();
    let side_sign = dev_a.signum(); // +1: object clockwise of the baseline
    let beta = pair.baseline_bearing_deg.to_radians();
    let (e_hat, n_hat) = (beta.sin(), beta.cos());
    // clockwise perpendicular of the baseline direction
    let (e_perp, n_perp) = (n_hat, -e_hat);
    let local = LocalPoint::new(
        x * e_hat + side_sign * y * e_perp,
        x * n_hat + side_sign * y * n_perp,
        0.0,
    );
    let position = local_to_geo(&local, &pair.camera_a)?;
    Ok(TriangulatedTree {
        position,
        theta_a_deg: theta_a,
        theta_b_deg: theta_b,
        theta_c_deg: theta_c,
        side_a_m: side_a,
        side_b_m: side_b,
        side_c_m: pair.baseline_m,
        per_image_diameters_m: Vec::new(),
        mean_diameter_m: 0.0,
        diameter_m: 0.0,
        n_pairs: 1,
    })
}

fn diameter_single(angular_width_deg: f64, distance_m: f64, mode: DiameterMode) -> Result<f64> {
    if !(angular_width_deg > 0.0) {
        return Err(Error::InvalidObservation(format!(
            "angular width {angular_width_deg} deg must be positive"
        )));
    }
    let half = (angular_width_deg / 2.0).to_radians();
    Ok(match mode {
        DiameterMode::Tangent => 2.0 * distance_m * half.tan(),
        DiameterMode::ExactCylinder => 2.0 * distance_m * half.sin(),
    })
}

/// Per-image diameters and their mean for one triangulated pair. Fills the
/// diameter fields of `tree` and returns the pair diameter.
pub fn diameter_from_pair(
    pair: &StereoPair,
    tree: &mut TriangulatedTree,
    mode: DiameterMode,
) -> Result<f64> {
    let d_a = diameter_single(pair.obs_a.angular_width_deg(), tree.side_b_m, mode)?;
    let d_b = diameter_single(pair.obs_b.angular_width_deg(), tree.side_a_m, mode)?;
    let mean = (d_a + d_b) / 2.0;
    tree.per_image_diameters_m = vec![d_a, d_b];
    tree.mean_diameter_m = mean;
    tree.diameter_m = mean;
    Ok(mean)
}

fn median_local(mut values: Vec<f64>) -> f64 {
    values.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let n = values.len();
    if n % 2 == 1 {
        values[n / 2]
    } else {
        (values[n / 2 - 1] + values[n / 2]) / 2.0
    }
}

/// Combine the per-pair measurements of one matched tree: component-wise
/// median position, mean of the pair diameters, minimum apex angle.
pub fn aggregate_tree(measurements: &[TriangulatedTree]) -> Result<TriangulatedTree> {
    if measurements.is_empty() {
        return Err(Error::NoMeasurement);
    }
    if measurements.len() == 1 {
        return Ok(measurements[0].clone());
    }
    let anchor = measurements[0].position;
    let locals: Vec<LocalPoint> = measurements
        .iter()
        .map(|m| geo_to_local(&m.position, &anchor))
        .collect::<Result<_>>()?;
    let center = LocalPoint::new(
        median_local(locals.iter().map(|l| l.east).collect()),
        median_local(locals.iter().map(|l| l.north).collect()),
        median_local(locals.iter().map(|l| l.up).collect()),
    );
    let mean_diameter =
        measurements.iter().map(|m| m.diameter_m).sum::<f64>() / measurements.len() as f64;
    let worst = measurements
        .iter()
        .min_by(|a, b| a.theta_c_deg.partial_cmp(&b.theta_c_deg).unwrap())
        .unwrap();
    Ok(TriangulatedTree {
        position: local_to_geo(&center, &anchor)?,
        theta_a_deg: worst.theta_a_deg,
        theta_b_deg: worst.theta_b_deg,
        theta_c_deg: worst.theta_c_deg,
        side_a_m: worst.side_a_m,
        side_b_m: worst.side_b_m,
        side_c_m: worst.side_c_m,
        per_image_diameters_m: measurements
            .iter()
            .flat_map(|m| m.per_image_diameters_m.iter().copied())
            .collect(),
        mean_diameter_m: mean_diameter,
        diameter_m: mean_diameter,
        n_pairs: measurements.iter().map(|m| m.n_pairs).sum(),
    })
}
