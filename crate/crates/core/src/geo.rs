//! Geographic and local tangent plane coordinate types and conversions.
//!
//! All conversions use a spherical earth of radius [`EARTH_RADIUS_M`] with
//! per-latitude longitude scaling. Scenes handled here span well under a
//! kilometer, where the tangent-plane approximation is millimeter-accurate.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Mean earth radius in meters (spherical model).
pub const EARTH_RADIUS_M: f64 = 6_371_000.0;

/// Camera height above ground assumed when metadata does not provide one
/// (typical mapping-car mast).
pub const DEFAULT_CAMERA_HEIGHT_M: f64 = 2.5;

/// Wrap an angle in degrees into `[0, 360)`.
pub fn wrap_360(deg: f64) -> f64 {
    let mut a = deg % 360.0;
    if a < 0.0 {
        a += 360.0;
    }
    // -1e-18 % 360 wraps to exactly 360.0 above
    if a >= 360.0 {
        a = 0.0;
    }
    a
}

/// Shortest signed arc from `from` to `to`, in degrees, in `(-180, 180]`.
pub fn signed_arc(from_deg: f64, to_deg: f64) -> f64 {
    let mut d = (to_deg - from_deg) % 360.0;
    if d > 180.0 {
        d -= 360.0;
    } else if d <= -180.0 {
        d += 360.0;
    }
    d
}

/// Meters per degree of latitude on the spherical earth.
pub fn meters_per_degree_lat() -> f64 {
    EARTH_RADIUS_M * std::f64::consts::PI / 180.0
}

/// Meters per degree of longitude at the given latitude.
pub fn meters_per_degree_lon(lat_deg: f64) -> f64 {
    meters_per_degree_lat() * lat_deg.to_radians().cos()
}

/// WGS84 geographic position. Altitude is optional and its datum is
/// caller-defined (ground-relative by default throughout this crate).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GeoPoint {
    pub lat: f64,
    pub lon: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub alt: Option<f64>,
}

impl GeoPoint {
    pub fn new(lat: f64, lon: f64) -> Result<Self> {
        let p = GeoPoint { lat, lon, alt: None };
        p.validate()?;
        Ok(p)
    }

    pub fn with_alt(lat: f64, lon: f64, alt: f64) -> Result<Self> {
        let p = GeoPoint {
            lat,
            lon,
            alt: Some(alt),
        };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        if !self.lat.is_finite() || !self.lon.is_finite() {
            return Err(Error::InvalidCoordinate(format!(
                "non-finite lat/lon ({}, {})",
                self.lat, self.lon
            )));
        }
        if let Some(alt) = self.alt {
            if !alt.is_finite() {
                return Err(Error::InvalidCoordinate(format!("non-finite alt {alt}")));
            }
        }
        if !(-90.0..=90.0).contains(&self.lat) {
            return Err(Error::InvalidCoordinate(format!(
                "latitude {} out of [-90, 90]",
                self.lat
            )));
        }
        if !(-180.0..180.0).contains(&self.lon) && self.lon != 180.0 {
            return Err(Error::InvalidCoordinate(format!(
                "longitude {} out of [-180, 180)",
                self.lon
            )));
        }
        Ok(())
    }

    pub fn alt_or_zero(&self) -> f64 {
        self.alt.unwrap_or(0.0)
    }
}

/// East/north/up offsets in meters within a local tangent plane. The anchor
/// [`GeoPoint`] the plane is attached to travels alongside in call signatures.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LocalPoint {
    pub east: f64,
    pub north: f64,
    pub up: f64,
}

impl LocalPoint {
    pub fn new(east: f64, north: f64, up: f64) -> Self {
        LocalPoint { east, north, up }
    }

    pub fn horizontal_distance(&self, other: &LocalPoint) -> f64 {
        let de = self.east - other.east;
        let dn = self.north - other.north;
        (de * de + dn * dn).sqrt()
    }
}

/// Camera pose of one equirectangular panorama.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PanoramaPose {
    pub pano_id: String,
    pub position: GeoPoint,
    /// Camera height above local ground in meters.
    pub camera_height_m: f64,
    /// Degrees clockwise from true north, normalized to `[0, 360)`.
    pub heading_deg: f64,
    pub pitch_deg: f64,
    pub roll_deg: f64,
    pub image_width: u32,
    pub image_height: u32,
}

impl PanoramaPose {
    pub fn new(
        pano_id: impl Into<String>,
        position: GeoPoint,
        heading_deg: f64,
        image_width: u32,
        image_height: u32,
    ) -> Result<Self> {
        let pose = PanoramaPose {
            pano_id: pano_id.into(),
            position,
            camera_height_m: DEFAULT_CAMERA_HEIGHT_M,
            heading_deg: wrap_360(heading_deg),
            pitch_deg: 0.0,
            roll_deg: 0.0,
            image_width,
            image_height,
        };
        pose.validate()?;
        Ok(pose)
    }

    pub fn validate(&self) -> Result<()> {
        self.position.validate()?;
        if self.image_width == 0 || self.image_height == 0 {
            return Err(Error::Config(format!(
                "panorama {} has empty image dimensions",
                self.pano_id
            )));
        }
        if self.image_width != 2 * self.image_height {
            return Err(Error::Config(format!(
                "panorama {} is {}x{}, expected width = 2 x height for a full equirectangular image",
                self.pano_id, self.image_width, self.image_height
            )));
        }
        if !(0.0..360.0).contains(&self.heading_deg) {
            return Err(Error::Config(format!(
                "heading {} not normalized to [0, 360)",
                self.heading_deg
            )));
        }
        Ok(())
    }
}

/// Project a geographic point into the tangent plane anchored at `anchor`.
pub fn geo_to_local(p: &GeoPoint, anchor: &GeoPoint) -> Result<LocalPoint> {
    p.validate()?;
    anchor.validate()?;
    let dlon = signed_arc(anchor.lon, p.lon);
    let east = dlon * meters_per_degree_lon(anchor.lat);
    let north = (p.lat - anchor.lat) * meters_per_degree_lat();
    let up = p.alt_or_zero() - anchor.alt_or_zero();
    Ok(LocalPoint { east, north, up })
}

/// Inverse of [`geo_to_local`]. The returned altitude is present whenever the
/// anchor carries one or `p.up` is nonzero.
pub fn local_to_geo(p: &LocalPoint, anchor: &GeoPoint) -> Result<GeoPoint> {
    anchor.validate()?;
    if !p.east.is_finite() || !p.north.is_finite() || !p.up.is_finite() {
        return Err(Error::InvalidCoordinate(format!(
            "non-finite local point ({}, {}, {})",
            p.east, p.north, p.up
        )));
    }
    let lat = anchor.lat + p.north / meters_per_degree_lat();
    let mut lon = anchor.lon + p.east / meters_per_degree_lon(anchor.lat);
    if lon >= 180.0 {
        lon -= 360.0;
    } else if lon < -180.0 {
        lon += 360.0;
    }
    let alt = if anchor.alt.is_some() || p.up != 0.0 {
        Some(anchor.alt_or_zero() + p.up)
    } else {
        None
    };
    Ok(GeoPoint { lat, lon, alt })
}

/// Clockwise-from-north azimuth of `b` as seen from `a`, in `[0, 360)`.
pub fn bearing_between(a: &GeoPoint, b: &GeoPoint) -> Result<f64> {
    let local = geo_to_local(b, a)?;
    if local.east == 0.0 && local.north == 0.0 {
        return Err(Error::DegenerateGeometry(
            "bearing between coincident points".into(),
        ));
    }
    Ok(wrap_360(local.east.atan2(local.north).to_degrees()))
}

/// Horizontal great-circle-free distance in meters between two nearby points.
pub fn horizontal_distance(a: &GeoPoint, b: &GeoPoint) -> Result<f64> {
    let local = geo_to_local(b, a)?;
    Ok((local.east * local.east + local.north * local.north).sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    /// Independent spherical-earth oracle: offsets along meridian/parallel
    /// arcs of a sphere with R = 6 371 000 m.
    fn oracle_offsets(p: &GeoPoint, anchor: &GeoPoint) -> (f64, f64) {
        let r = EARTH_RADIUS_M;
        let north = (p.lat - anchor.lat).to_radians() * r;
        let east = (p.lon - anchor.lon).to_radians() * r * anchor.lat.to_radians().cos();
        (east, north)
    }

    #[test]
    fn identity_offset_is_zero() {
        let p = GeoPoint::new(38.9, -77.0).unwrap();
        let l = geo_to_local(&p, &p).unwrap();
        assert_eq!((l.east, l.north, l.up), (0.0, 0.0, 0.0));
    }

    #[test]
    fn east_offset_matches_oracle() {
        let anchor = GeoPoint::new(38.9, -77.0).unwrap();
        let p = GeoPoint::new(38.9, -77.0 + 0.001).unwrap();
        let l = geo_to_local(&p, &anchor).unwrap();
        let (east, _) = oracle_offsets(&p, &anchor);
        assert_abs_diff_eq!(l.east, east, epsilon = 1e-9);
        // nominal sanity figure: 0.001 deg of longitude at 38.9 N is ~86.6 m
        assert_abs_diff_eq!(l.east, 0.001 * 111_320.0 * 38.9_f64.to_radians().cos(), epsilon = 0.2);
    }

    #[test]
    fn north_offset_matches_oracle() {
        let anchor = GeoPoint::new(0.0, 10.0).unwrap();
        let p = GeoPoint::new(0.001, 10.0).unwrap();
        let l = geo_to_local(&p, &anchor).unwrap();
        let (_, north) = oracle_offsets(&p, &anchor);
        assert_abs_diff_eq!(l.north, north, epsilon = 1e-9);
        assert_abs_diff_eq!(l.north, 111.32, epsilon = 0.2);
    }

    #[test]
    fn local_to_geo_identity() {
        let a = GeoPoint::with_alt(45.0, 9.0, 120.0).unwrap();
        let g = local_to_geo(&LocalPoint::new(0.0, 0.0, 0.0), &a).unwrap();
        assert_eq!(g, a);
    }

    #[test]
    fn hundred_meters_east_lon_shift() {
        let a = GeoPoint::new(38.9, 0.0).unwrap();
        let g = local_to_geo(&LocalPoint::new(100.0, 0.0, 0.0), &a).unwrap();
        let expected = 100.0 / meters_per_degree_lon(38.9);
        assert_abs_diff_eq!(g.lon, expected, epsilon = 1e-12);
    }

    #[test]
    fn out_of_range_latitude_rejected() {
        assert!(GeoPoint::new(91.0, 0.0).is_err());
        assert!(GeoPoint::new(f64::NAN, 0.0).is_err());
    }

    #[test]
    fn bearing_cardinal_directions() {
        let a = GeoPoint::new(38.9, -77.0).unwrap();
        let north = local_to_geo(&LocalPoint::new(0.0, 50.0, 0.0), &a).unwrap();
        let east = local_to_geo(&LocalPoint::new(50.0, 0.0, 0.0), &a).unwrap();
        assert_abs_diff_eq!(bearing_between(&a, &north).unwrap(), 0.0, epsilon = 1e-9);
        assert_abs_diff_eq!(bearing_between(&a, &east).unwrap(), 90.0, epsilon = 1e-9);
    }

    #[test]
    fn bearing_coincident_points_degenerate() {
        let a = GeoPoint::new(38.9, -77.0).unwrap();
        assert!(matches!(
            bearing_between(&a, &a),
            Err(Error::DegenerateGeometry(_))
        ));
    }

    #[test]
    fn lon_scaling_symmetric_about_equator() {
        for lat in [0.0, 12.5, 45.0, 70.0] {
            assert_eq!(meters_per_degree_lon(lat), meters_per_degree_lon(-lat));
        }
    }

    #[test]
    fn pano_pose_requires_two_to_one_aspect() {
        let p = GeoPoint::new(0.0, 0.0).unwrap();
        assert!(PanoramaPose::new("a", p, 0.0, 8192, 4096).is_ok());
        assert!(PanoramaPose::new("a", p, 0.0, 8192, 4000).is_err());
    }

    proptest! {
        #[test]
        fn round_trip_within_one_mm(
            lat in -70.0..70.0f64,
            lon in -179.0..179.0f64,
            east in -1000.0..1000.0f64,
            north in -1000.0..1000.0f64,
            up in -100.0..100.0f64,
        ) {
            let anchor = GeoPoint::new(lat, lon).unwrap();
            let p = local_to_geo(&LocalPoint::new(east, north, up), &anchor).unwrap();
            let back = geo_to_local(&p, &anchor).unwrap();
            prop_assert!((back.east - east).abs() < 1e-3);
            prop_assert!((back.north - north).abs() < 1e-3);
            prop_assert!((back.up - up).abs() < 1e-3);
        }

        #[test]
        fn bearing_reverses_by_180(
            lat in -70.0..70.0f64,
            east in -500.0..500.0f64,
            north in -500.0..500.0f64,
        ) {
            prop_assume!(east.abs() > 0.5 || north.abs() > 0.5);
            let a = GeoPoint::new(lat, 10.0).unwrap();
            let b = local_to_geo(&LocalPoint::new(east, north, 0.0), &a).unwrap();
            let fwd = bearing_between(&a, &b).unwrap();
            let rev = bearing_between(&b, &a).unwrap();
            let diff = signed_arc(fwd, rev).abs();
            prop_assert!((diff - 180.0).abs() < 0.01, "fwd {fwd} rev {rev}");
        }

        #[test]
        fn random_bearing_matches_atan2_oracle(
            east in -800.0..800.0f64,
            north in -800.0..800.0f64,
        ) {
            prop_assume!(east.abs() > 1.0 || north.abs() > 1.0);
            let a = GeoPoint::new(38.9, -77.0).unwrap();
            let b = local_to_geo(&LocalPoint::new(east, north, 0.0), &a).unwrap();
            let bearing = bearing_between(&a, &b).unwrap();
            let oracle = wrap_360(east.atan2(north).to_degrees());
            prop_assert!(signed_arc(oracle, bearing).abs() < 1e-6);
        }
    }
}
