//! Pixel/angle geometry for equirectangular panoramas and perspective
//! thumbnails.
//!
//! Conventions, stated once because street-view providers never do:
//! - the panorama center column looks along the pose heading; the leftmost
//!   column looks along heading - 180 deg;
//! - pixel `(col, row)` samples the image at `(col + 0.5, row + 0.5)`;
//! - azimuths are clockwise from true north, altitudes positive above the
//!   horizon;
//! - roll rotates the camera about its view axis and is applied after
//!   heading and pitch.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geo::{signed_arc, wrap_360, PanoramaPose};

/// A world-frame viewing direction (heading already applied).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AngularObservation {
    /// Degrees clockwise from true north, in `[0, 360)`.
    pub azimuth_deg: f64,
    /// Degrees above horizontal, in `[-90, 90]`.
    pub altitude_deg: f64,
}

impl AngularObservation {
    pub fn new(azimuth_deg: f64, altitude_deg: f64) -> Result<Self> {
        if !azimuth_deg.is_finite() || !altitude_deg.is_finite() {
            return Err(Error::InvalidCoordinate(
                "non-finite angular observation".into(),
            ));
        }
        if !(-90.0..=90.0).contains(&altitude_deg) {
            return Err(Error::InvalidCoordinate(format!(
                "altitude {altitude_deg} out of [-90, 90]"
            )));
        }
        Ok(AngularObservation {
            azimuth_deg: wrap_360(azimuth_deg),
            altitude_deg,
        })
    }
}

/// Geometry of a perspective thumbnail reprojected from a panorama.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThumbnailSpec {
    pub pano_id: String,
    /// Degrees relative to the pano heading (+90 = right of travel).
    pub heading_offset_deg: f64,
    #[serde(default)]
    pub pitch_deg: f64,
    /// Horizontal field of view, degrees, in `(0, 180)`.
    pub hfov_deg: f64,
    pub width: u32,
    pub height: u32,
}

impl ThumbnailSpec {
    pub fn validate(&self) -> Result<()> {
        if !(self.hfov_deg > 0.0 && self.hfov_deg < 180.0) {
            return Err(Error::InvalidSpec(format!(
                "hfov {} deg outside (0, 180)",
                self.hfov_deg
            )));
        }
        if self.width == 0 || self.height == 0 {
            return Err(Error::InvalidSpec("empty thumbnail dimensions".into()));
        }
        Ok(())
    }

    /// Pinhole focal length in pixels.
    pub fn focal_px(&self) -> f64 {
        (self.width as f64 / 2.0) / (self.hfov_deg.to_radians() / 2.0).tan()
    }
}

/// Which image a pixel box lives on.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ImageRef {
    Panorama { pano_id: String },
    Thumbnail(ThumbnailSpec),
}

/// An axis-aligned detection bounding box in pixel coordinates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PixelBox {
    pub image: ImageRef,
    pub col_min: f64,
    pub row_min: f64,
    pub col_max: f64,
    pub row_max: f64,
}

impl PixelBox {
    pub fn validate(&self, width: u32, height: u32) -> Result<()> {
        if self.col_min > self.col_max || self.row_min > self.row_max {
            return Err(Error::InvalidDetection(format!(
                "box min exceeds max: ({}, {})..({}, {})",
                self.col_min, self.row_min, self.col_max, self.row_max
            )));
        }
        if self.col_min < 0.0
            || self.row_min < 0.0
            || self.col_max >= width as f64
            || self.row_max >= height as f64
        {
            return Err(Error::InvalidDetection(format!(
                "box ({}, {})..({}, {}) outside {width}x{height} image",
                self.col_min, self.row_min, self.col_max, self.row_max
            )));
        }
        if self.col_min == self.col_max || self.row_min == self.row_max {
            return Err(Error::InvalidDetection("zero-area box".into()));
        }
        Ok(())
    }
}

/// Angular extents of a detection box: altitudes of the top and bottom edges,
/// azimuth of the center, and horizontal angular width.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AngularExtents {
    pub theta_top_deg: f64,
    pub theta_bottom_deg: f64,
    pub azimuth_center_deg: f64,
    pub hfov_box_deg: f64,
}

#[derive(Debug, Clone, Copy)]
struct Vec3 {
    east: f64,
    north: f64,
    up: f64,
}

impl Vec3 {
    fn from_az_alt(az_deg: f64, alt_deg: f64) -> Self {
        let az = az_deg.to_radians();
        let alt = alt_deg.to_radians();
        Vec3 {
            east: az.sin() * alt.cos(),
            north: az.cos() * alt.cos(),
            up: alt.sin(),
        }
    }

    fn to_az_alt(self) -> (f64, f64) {
        let norm = (self.east * self.east + self.north * self.north + self.up * self.up).sqrt();
        let az = wrap_360(self.east.atan2(self.north).to_degrees());
        let alt = (self.up / norm).clamp(-1.0, 1.0).asin().to_degrees();
        (az, alt)
    }

    fn dot(self, o: Vec3) -> f64 {
        self.east * o.east + self.north * o.north + self.up * o.up
    }

    fn scale(self, k: f64) -> Vec3 {
        Vec3 {
            east: self.east * k,
            north: self.north * k,
            up: self.up * k,
        }
    }

    fn add(self, o: Vec3) -> Vec3 {
        Vec3 {
            east: self.east + o.east,
            north: self.north + o.north,
            up: self.up + o.up,
        }
    }

    fn cross(self, o: Vec3) -> Vec3 {
        Vec3 {
            east: self.north * o.up - self.up * o.north,
            north: self.up * o.east - self.east * o.up,
            up: self.east * o.north - self.north * o.east,
        }
    }
}

/// Orthonormal camera basis in world (ENU) coordinates.
struct CameraBasis {
    right: Vec3,
    up: Vec3,
    forward: Vec3,
}

impl CameraBasis {
    /// Positive roll rotates the camera clockwise about the view axis as seen
    /// looking along it.
    fn new(yaw_deg: f64, pitch_deg: f64, roll_deg: f64) -> Self {
        let forward = Vec3::from_az_alt(yaw_deg, pitch_deg);
        let right0 = Vec3::from_az_alt(yaw_deg + 90.0, 0.0);
        let up0 = right0.cross(forward);
        let (right, up) = if roll_deg == 0.0 {
            (right0, up0)
        } else {
            let phi = roll_deg.to_radians();
            let (s, c) = phi.sin_cos();
            (
                right0.scale(c).add(up0.scale(-s)),
                right0.scale(s).add(up0.scale(c)),
            )
        };
        CameraBasis { right, up, forward }
    }

    fn to_world(&self, x_right: f64, y_up: f64, z_forward: f64) -> Vec3 {
        self.right
            .scale(x_right)
            .add(self.up.scale(y_up))
            .add(self.forward.scale(z_forward))
    }

    fn from_world(&self, v: Vec3) -> (f64, f64, f64) {
        (v.dot(self.right), v.dot(self.up), v.dot(self.forward))
    }
}

fn check_pixel(col: f64, row: f64, width: u32, height: u32) -> Result<()> {
    if !(col >= 0.0 && col < width as f64 && row >= 0.0 && row < height as f64) {
        return Err(Error::PixelOutOfBounds {
            col,
            row,
            width,
            height,
        });
    }
    Ok(())
}

/// World azimuth/altitude seen through a panorama pixel.
pub fn pano_pixel_to_angles(pose: &PanoramaPose, col: f64, row: f64) -> Result<AngularObservation> {
    check_pixel(col, row, pose.image_width, pose.image_height)?;
    let az_rel = (col + 0.5) / pose.image_width as f64 * 360.0 - 180.0;
    // the +0.5 center convention pushes continuous rows inside the outermost
    // half-pixel past the poles; clamp them back
    let alt = (90.0 - (row + 0.5) / pose.image_height as f64 * 180.0).clamp(-90.0, 90.0);
    if pose.pitch_deg == 0.0 && pose.roll_deg == 0.0 {
        return AngularObservation::new(pose.heading_deg + az_rel, alt);
    }
    let basis = CameraBasis::new(pose.heading_deg, pose.pitch_deg, pose.roll_deg);
    let cam = Vec3::from_az_alt(az_rel, alt);
    // camera-frame az/alt reuse the world parameterization: east -> right,
    // north -> forward, up -> up
    let world = basis.to_world(cam.east, cam.up, cam.north);
    let (az, alt) = world.to_az_alt();
    AngularObservation::new(az, alt)
}

fn thumb_basis(pose: &PanoramaPose, spec: &ThumbnailSpec) -> CameraBasis {
    CameraBasis::new(
        pose.heading_deg + spec.heading_offset_deg,
        pose.pitch_deg + spec.pitch_deg,
        pose.roll_deg,
    )
}

/// World azimuth/altitude seen through a thumbnail pixel (ideal pinhole).
pub fn thumb_pixel_to_angles(
    pose: &PanoramaPose,
    spec: &ThumbnailSpec,
    col: f64,
    row: f64,
) -> Result<AngularObservation> {
    spec.validate()?;
    check_pixel(col, row, spec.width, spec.height)?;
    let x = col + 0.5 - spec.width as f64 / 2.0;
    let y = spec.height as f64 / 2.0 - (row + 0.5);
    let world = thumb_basis(pose, spec).to_world(x, y, spec.focal_px());
    let (az, alt) = world.to_az_alt();
    AngularObservation::new(az, alt)
}

/// Continuous pixel position of a world ray on a thumbnail, or `None` when
/// the ray falls outside the frustum.
pub fn angles_to_thumb_pixel(
    pose: &PanoramaPose,
    spec: &ThumbnailSpec,
    obs: &AngularObservation,
) -> Result<Option<(f64, f64)>> {
    spec.validate()?;
    let dir = Vec3::from_az_alt(obs.azimuth_deg, obs.altitude_deg);
    let (x, y, z) = thumb_basis(pose, spec).from_world(dir);
    if z <= 0.0 {
        return Ok(None);
    }
    let f = spec.focal_px();
    let col = x / z * f + spec.width as f64 / 2.0 - 0.5;
    let row = spec.height as f64 / 2.0 - y / z * f - 0.5;
    if col >= 0.0 && col < spec.width as f64 && row >= 0.0 && row < spec.height as f64 {
        Ok(Some((col, row)))
    } else {
        Ok(None)
    }
}

fn pixel_to_angles(pose: &PanoramaPose, image: &ImageRef, col: f64, row: f64) -> Result<AngularObservation> {
    match image {
        ImageRef::Panorama { .. } => pano_pixel_to_angles(pose, col, row),
        ImageRef::Thumbnail(spec) => thumb_pixel_to_angles(pose, spec, col, row),
    }
}

/// Angular extents of a detection box on either a panorama or a thumbnail.
pub fn box_to_angular_extents(pose: &PanoramaPose, pixel_box: &PixelBox) -> Result<AngularExtents> {
    let (w, h) = match &pixel_box.image {
        ImageRef::Panorama { .. } => (pose.image_width, pose.image_height),
        ImageRef::Thumbnail(spec) => {
            spec.validate()?;
            (spec.width, spec.height)
        }
    };
    pixel_box.validate(w, h)?;
    let col_center = (pixel_box.col_min + pixel_box.col_max) / 2.0;
    let row_center = (pixel_box.row_min + pixel_box.row_max) / 2.0;
    let top = pixel_to_angles(pose, &pixel_box.image, col_center, pixel_box.row_min)?;
    let bottom = pixel_to_angles(pose, &pixel_box.image, col_center, pixel_box.row_max)?;
    let center = pixel_to_angles(pose, &pixel_box.image, col_center, row_center)?;
    let left = pixel_to_angles(pose, &pixel_box.image, pixel_box.col_min, row_center)?;
    let right = pixel_to_angles(pose, &pixel_box.image, pixel_box.col_max, row_center)?;
    Ok(AngularExtents {
        theta_top_deg: top.altitude_deg,
        theta_bottom_deg: bottom.altitude_deg,
        azimuth_center_deg: center.azimuth_deg,
        hfov_box_deg: signed_arc(left.azimuth_deg, right.azimuth_deg).abs(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geo::GeoPoint;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    fn pose(heading: f64) -> PanoramaPose {
        PanoramaPose::new(
            "p",
            GeoPoint::new(38.9, -77.0).unwrap(),
            heading,
            8192,
            4096,
        )
        .unwrap()
    }

    fn spec(offset: f64) -> ThumbnailSpec {
        ThumbnailSpec {
            pano_id: "p".into(),
            heading_offset_deg: offset,
            pitch_deg: 0.0,
            hfov_deg: 90.0,
            width: 640,
            height: 640,
        }
    }

    #[test]
    fn pano_center_pixel_looks_along_heading() {
        let p = pose(90.0);
        let obs = pano_pixel_to_angles(&p, 8192.0 / 2.0 - 0.5, 4096.0 / 2.0 - 0.5).unwrap();
        assert_abs_diff_eq!(obs.azimuth_deg, 90.0, epsilon = 1e-9);
        assert_abs_diff_eq!(obs.altitude_deg, 0.0, epsilon = 1e-9);
    }

    #[test]
    fn pano_top_row_near_zenith() {
        let p = pose(0.0);
        let obs = pano_pixel_to_angles(&p, 100.0, 0.0).unwrap();
        let half_pixel_deg = 180.0 / 4096.0 / 2.0;
        assert!((90.0 - obs.altitude_deg).abs() <= half_pixel_deg + 1e-12);
    }

    #[test]
    fn pano_pixel_out_of_bounds_rejected() {
        let p = pose(0.0);
        assert!(matches!(
            pano_pixel_to_angles(&p, 8192.0, 10.0),
            Err(Error::PixelOutOfBounds { .. })
        ));
    }

    /// Forward-projection oracle: place a ray at known az/alt, compute its
    /// continuous pixel coordinates from the equirectangular definition, and
    /// require the implementation to invert them.
    #[test]
    fn pano_round_trips_analytic_rays() {
        let p = pose(213.0);
        for (az, alt) in [(0.0, 0.0), (37.0, 12.5), (280.0, -44.0), (213.0, 70.0)] {
            let col = wrap_360(az - p.heading_deg + 180.0) / 360.0 * p.image_width as f64 - 0.5;
            let row = (90.0 - alt) / 180.0 * p.image_height as f64 - 0.5;
            let obs = pano_pixel_to_angles(&p, col, row).unwrap();
            assert_abs_diff_eq!(signed_arc(obs.azimuth_deg, az), 0.0, epsilon = 1e-9);
            assert_abs_diff_eq!(obs.altitude_deg, alt, epsilon = 1e-9);
        }
    }

    #[test]
    fn column_shift_of_quarter_width_shifts_azimuth_90() {
        let p = pose(77.0);
        let a = pano_pixel_to_angles(&p, 1000.0, 2048.0).unwrap();
        let b = pano_pixel_to_angles(&p, 1000.0 + 8192.0 / 4.0, 2048.0).unwrap();
        assert_abs_diff_eq!(
            signed_arc(a.azimuth_deg, b.azimuth_deg),
            90.0,
            epsilon = 1e-9
        );
    }

    #[test]
    fn thumb_center_pixel_looks_along_offset_heading() {
        let p = pose(0.0);
        let s = spec(90.0);
        let obs = thumb_pixel_to_angles(&p, &s, 320.0 - 0.5, 320.0 - 0.5).unwrap();
        assert_abs_diff_eq!(obs.azimuth_deg, 90.0, epsilon = 1e-9);
        assert_abs_diff_eq!(obs.altitude_deg, 0.0, epsilon = 1e-9);
    }

    #[test]
    fn thumb_rightmost_pixel_near_hfov_edge() {
        let p = pose(0.0);
        let s = spec(0.0);
        let obs = thumb_pixel_to_angles(&p, &s, 639.0, 320.0 - 0.5).unwrap();
        // half a pixel short of the 45 deg frustum edge
        let per_px = 45.0 - ((639.0 + 0.5 - 320.0) / s.focal_px()).atan().to_degrees();
        assert!(obs.azimuth_deg < 45.0 && 45.0 - obs.azimuth_deg <= per_px + 1e-9);
    }

    #[test]
    fn thumb_bad_hfov_rejected() {
        let p = pose(0.0);
        let mut s = spec(0.0);
        s.hfov_deg = 180.0;
        assert!(matches!(
            thumb_pixel_to_angles(&p, &s, 10.0, 10.0),
            Err(Error::InvalidSpec(_))
        ));
    }

    #[test]
    fn on_axis_ray_maps_to_center() {
        let p = pose(30.0);
        let s = spec(45.0);
        let obs = AngularObservation::new(75.0, 0.0).unwrap();
        let (col, row) = angles_to_thumb_pixel(&p, &s, &obs).unwrap().unwrap();
        assert_abs_diff_eq!(col, 320.0 - 0.5, epsilon = 1e-9);
        assert_abs_diff_eq!(row, 320.0 - 0.5, epsilon = 1e-9);
    }

    #[test]
    fn ray_90_off_axis_out_of_view() {
        let p = pose(0.0);
        let s = spec(0.0);
        let obs = AngularObservation::new(90.0, 0.0).unwrap();
        assert!(angles_to_thumb_pixel(&p, &s, &obs).unwrap().is_none());
    }

    #[test]
    fn full_height_pano_box_spans_poles() {
        let p = pose(0.0);
        let b = PixelBox {
            image: ImageRef::Panorama { pano_id: "p".into() },
            col_min: 4000.0,
            row_min: 0.0,
            col_max: 4200.0,
            row_max: 4095.0,
        };
        let e = box_to_angular_extents(&p, &b).unwrap();
        let half_px = 180.0 / 4096.0 / 2.0;
        assert!((90.0 - e.theta_top_deg).abs() <= half_px + 1e-12);
        assert!((-90.0 - e.theta_bottom_deg).abs() <= half_px + 1e-12);
    }

    #[test]
    fn box_symmetric_about_center_row_has_opposite_thetas() {
        let p = pose(11.0);
        let b = PixelBox {
            image: ImageRef::Panorama { pano_id: "p".into() },
            col_min: 100.0,
            row_min: 2048.0 - 300.5,
            col_max: 400.0,
            row_max: 2048.0 + 299.5,
        };
        let e = box_to_angular_extents(&p, &b).unwrap();
        assert_abs_diff_eq!(e.theta_top_deg, -e.theta_bottom_deg, epsilon = 1e-9);
    }

    #[test]
    fn degenerate_box_rejected() {
        let p = pose(0.0);
        let b = PixelBox {
            image: ImageRef::Panorama { pano_id: "p".into() },
            col_min: 100.0,
            row_min: 50.0,
            col_max: 100.0,
            row_max: 80.0,
        };
        assert!(matches!(
            box_to_angular_extents(&p, &b),
            Err(Error::InvalidDetection(_))
        ));
    }

    #[test]
    fn adjacent_same_side_thumbnails_share_45_deg_band() {
        // hfov-90 thumbnails at +45 and +90 both see the band (45, 90)
        let p = pose(0.0);
        let a = spec(45.0);
        let b = spec(90.0);
        for az in [46.0, 60.0, 75.0, 89.0] {
            let obs = AngularObservation::new(az, 0.0).unwrap();
            assert!(angles_to_thumb_pixel(&p, &a, &obs).unwrap().is_some(), "az {az} not in +45");
            assert!(angles_to_thumb_pixel(&p, &b, &obs).unwrap().is_some(), "az {az} not in +90");
        }
    }

    proptest! {
        #[test]
        fn thumb_round_trip_identity(
            heading in 0.0..360.0f64,
            offset in -135.0..135.0f64,
            pitch in -10.0..10.0f64,
            col in 0.0..640.0f64,
            row in 0.0..640.0f64,
        ) {
            let p = pose(heading);
            let mut s = spec(offset);
            s.pitch_deg = pitch;
            prop_assume!(col < 640.0 && row < 640.0);
            let obs = thumb_pixel_to_angles(&p, &s, col, row).unwrap();
            let (c2, r2) = angles_to_thumb_pixel(&p, &s, &obs).unwrap().expect("in view");
            let obs2 = thumb_pixel_to_angles(&p, &s, c2, r2).unwrap();
            prop_assert!(signed_arc(obs.azimuth_deg, obs2.azimuth_deg).abs() < 1e-6);
            prop_assert!((obs.altitude_deg - obs2.altitude_deg).abs() < 1e-6);
            prop_assert!((c2 - col).abs() < 1e-6 && (r2 - row).abs() < 1e-6);
        }

        #[test]
        fn altitude_monotone_decreasing_in_row(
            row_a in 0.0..4095.0f64,
            delta in 0.001..500.0f64,
            col in 0.0..8192.0f64,
        ) {
            let p = pose(0.0);
            // stay clear of the clamped half-pixel at the nadir
            let row_b = (row_a + delta).min(4095.4);
            prop_assume!(row_b > row_a);
            let a = pano_pixel_to_angles(&p, col, row_a).unwrap();
            let b = pano_pixel_to_angles(&p, col, row_b).unwrap();
            prop_assert!(b.altitude_deg < a.altitude_deg);
        }

        #[test]
        fn thumb_altitude_monotone_decreasing_in_row(
            row_a in 0.0..639.0f64,
            delta in 0.001..200.0f64,
            col in 0.0..640.0f64,
            pitch in -20.0..20.0f64,
        ) {
            let p = pose(0.0);
            let mut s = spec(0.0);
            s.pitch_deg = pitch;
            let row_b = (row_a + delta).min(639.9);
            prop_assume!(row_b > row_a);
            let a = thumb_pixel_to_angles(&p, &s, col, row_a).unwrap();
            let b = thumb_pixel_to_angles(&p, &s, col, row_b).unwrap();
            prop_assert!(b.altitude_deg < a.altitude_deg);
        }
    }
}
