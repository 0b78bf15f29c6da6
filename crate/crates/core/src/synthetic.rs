//! Synthetic scene generator: forward-projects known geometry into the
//! observation formats the pipelines consume, so every pipeline can be
//! verified end-to-end against ground truth.
//!
//! Angles are computed analytically from the scene geometry (trigonometry on
//! tangent-plane offsets), deliberately not through the projection module's
//! inverse functions, so agreement between oracle and pipeline is evidence
//! rather than tautology.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geo::{geo_to_local, wrap_360, GeoPoint, LocalPoint, PanoramaPose};
use crate::projection::{ImageRef, PixelBox};
use crate::raster::{LandCoverRaster, BACKGROUND_CLASS};

/// A ribbon-shaped ground feature (road, sidewalk) along a polyline.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RibbonSpec {
    /// Vertices in meters east/north of the scene anchor.
    pub polyline: Vec<[f64; 2]>,
    pub width_m: f64,
    pub class: String,
}

/// A vertical rectangle of known dimensions facing the camera (sign).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BillboardSpec {
    pub position: GeoPoint,
    pub bottom_height_m: f64,
    pub height_m: f64,
    pub width_m: f64,
    pub class: String,
}

/// A vertical cylinder (tree trunk).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CylinderSpec {
    pub position: GeoPoint,
    pub radius_m: f64,
    pub height_m: f64,
}

/// Gaussian noise magnitudes for perturbed outputs; zeros mean exact.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct NoiseSpec {
    #[serde(default)]
    pub angle_deg_sigma: f64,
    #[serde(default)]
    pub pose_m_sigma: f64,
    #[serde(default)]
    pub depth_m_sigma: f64,
}

/// A complete synthetic scene.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SceneSpec {
    pub anchor: GeoPoint,
    #[serde(default)]
    pub ribbons: Vec<RibbonSpec>,
    #[serde(default)]
    pub billboards: Vec<BillboardSpec>,
    #[serde(default)]
    pub cylinders: Vec<CylinderSpec>,
    #[serde(default)]
    pub cameras: Vec<PanoramaPose>,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub noise: NoiseSpec,
}

impl SceneSpec {
    pub fn validate(&self) -> Result<()> {
        self.anchor.validate()?;
        for r in &self.ribbons {
            if !(r.width_m > 0.0) {
                return Err(Error::InvalidScene(format!(
                    "ribbon width {} must be positive",
                    r.width_m
                )));
            }
            if r.polyline.len() < 2 {
                return Err(Error::InvalidScene(
                    "ribbon polyline needs at least two vertices".into(),
                ));
            }
        }
        for b in &self.billboards {
            if !(b.height_m > 0.0 && b.width_m > 0.0) {
                return Err(Error::InvalidScene("billboard with non-positive size".into()));
            }
        }
        for c in &self.cylinders {
            if !(c.radius_m > 0.0 && c.height_m > 0.0) {
                return Err(Error::InvalidScene("cylinder with non-positive size".into()));
            }
        }
        for cam in &self.cameras {
            cam.validate()?;
        }
        if self.noise.angle_deg_sigma < 0.0
            || self.noise.pose_m_sigma < 0.0
            || self.noise.depth_m_sigma < 0.0
        {
            return Err(Error::InvalidScene("negative noise sigma".into()));
        }
        Ok(())
    }
}

/// Exact angular observation of a billboard from a panorama camera, plus
/// the quantized pixel box.
#[derive(Debug, Clone, PartialEq)]
pub struct BillboardProjection {
    pub theta_top_deg: f64,
    pub theta_bottom_deg: f64,
    pub azimuth_deg: f64,
    pub hfov_deg: f64,
    pub distance_m: f64,
    pub pixel_box: PixelBox,
}

/// Exact tangent-line observation of a cylinder from a camera.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CylinderProjection {
    pub az_left_deg: f64,
    pub az_right_deg: f64,
    pub az_center_deg: f64,
    /// Horizontal distance to the cylinder axis.
    pub depth_m: f64,
}

fn point_segment_distance(p: [f64; 2], a: [f64; 2], b: [f64; 2]) -> f64 {
    let (abx, aby) = (b[0] - a[0], b[1] - a[1]);
    let (apx, apy) = (p[0] - a[0], p[1] - a[1]);
    let len2 = abx * abx + aby * aby;
    let t = if len2 == 0.0 {
        0.0
    } else {
        ((apx * abx + apy * aby) / len2).clamp(0.0, 1.0)
    };
    let (dx, dy) = (apx - t * abx, apy - t * aby);
    (dx * dx + dy * dy).sqrt()
}

fn ribbon_contains(ribbon: &RibbonSpec, east: f64, north: f64) -> bool {
    let half = ribbon.width_m / 2.0;
    ribbon
        .polyline
        .windows(2)
        .any(|w| point_segment_distance([east, north], w[0], w[1]) <= half)
}

/// Rasterize the scene's ribbons into a square land-cover map of the given
/// extent (meters across) centered on the anchor. Classes are numbered in
/// listing order starting at 1; later ribbons win at overlaps.
/// `heading_deg` is recorded as the raster's street heading.
pub fn render_landcover(
    scene: &SceneSpec,
    resolution_m: f64,
    extent_m: f64,
    heading_deg: f64,
) -> Result<LandCoverRaster> {
    scene.validate()?;
    if !(resolution_m > 0.0) {
        return Err(Error::Config(format!(
            "resolution {resolution_m} must be positive"
        )));
    }
    let n = (extent_m / resolution_m).round() as usize;
    if n == 0 {
        return Err(Error::InvalidScene(format!(
            "extent {extent_m} m empty at {resolution_m} m/px"
        )));
    }
    let mut class_table = std::collections::BTreeMap::new();
    let mut class_ids = Vec::with_capacity(scene.ribbons.len());
    for ribbon in &scene.ribbons {
        let id = class_table
            .iter()
            .find(|(_, name)| *name == &ribbon.class)
            .map(|(&id, _)| id)
            .unwrap_or_else(|| {
                let id = class_table.len() as u8 + 1;
                class_table.insert(id, ribbon.class.clone());
                id
            });
        class_ids.push(id);
    }
    let mut grid = vec![BACKGROUND_CLASS; n * n];
    let half = n as f64 / 2.0;
    for row in 0..n {
        for col in 0..n {
            let east = (col as f64 + 0.5 - half) * resolution_m;
            let north = (half - (row as f64 + 0.5)) * resolution_m;
            for (ribbon, &id) in scene.ribbons.iter().zip(&class_ids).rev() {
                if ribbon_contains(ribbon, east, north) {
                    grid[row * n + col] = id;
                    break;
                }
            }
        }
    }
    Ok(LandCoverRaster {
        grid,
        width: n,
        height: n,
        resolution_m,
        center: scene.anchor,
        heading_deg: wrap_360(heading_deg),
        class_table,
    })
}

fn pano_col_of_azimuth(pose: &PanoramaPose, az_deg: f64) -> f64 {
    wrap_360(az_deg - pose.heading_deg + 180.0) / 360.0 * pose.image_width as f64
}

fn pano_row_of_altitude(pose: &PanoramaPose, alt_deg: f64) -> f64 {
    (90.0 - alt_deg) / 180.0 * pose.image_height as f64
}

/// Exact angular extents of a billboard seen from a camera, with the pixel
/// box obtained by quantizing those angles onto the panorama grid.
pub fn project_billboard(
    camera: &PanoramaPose,
    billboard: &BillboardSpec,
) -> Result<BillboardProjection> {
    let local = geo_to_local(&billboard.position, &camera.position)?;
    let d = (local.east * local.east + local.north * local.north).sqrt();
    if d <= 1e-9 {
        return Err(Error::InvalidScene(
            "billboard coincides with the camera".into(),
        ));
    }
    let azimuth = wrap_360(local.east.atan2(local.north).to_degrees());
    let cam_h = camera.camera_height_m;
    let theta_bottom = ((billboard.bottom_height_m - cam_h) / d).atan().to_degrees();
    let theta_top = ((billboard.bottom_height_m + billboard.height_m - cam_h) / d)
        .atan()
        .to_degrees();
    let half_h = (billboard.width_m / 2.0 / d).atan().to_degrees();

    let clamp_px = |v: f64, max: u32| v.floor().clamp(0.0, max as f64 - 1.0);
    let pixel_box = PixelBox {
        image: ImageRef::Panorama {
            pano_id: camera.pano_id.clone(),
        },
        col_min: clamp_px(
            pano_col_of_azimuth(camera, azimuth - half_h),
            camera.image_width,
        ),
        row_min: clamp_px(
            pano_row_of_altitude(camera, theta_top),
            camera.image_height,
        ),
        col_max: clamp_px(
            pano_col_of_azimuth(camera, azimuth + half_h),
            camera.image_width,
        ),
        row_max: clamp_px(
            pano_row_of_altitude(camera, theta_bottom),
            camera.image_height,
        ),
    };
    Ok(BillboardProjection {
        theta_top_deg: theta_top,
        theta_bottom_deg: theta_bottom,
        azimuth_deg: azimuth,
        hfov_deg: 2.0 * half_h,
        distance_m: d,
        pixel_box,
    })
}

/// Exact tangent azimuths of a cylinder: the half-angle subtended by a
/// circle of radius r at horizontal distance d from its center is
/// `asin(r / d)`.
pub fn project_cylinder(
    camera: &PanoramaPose,
    cylinder: &CylinderSpec,
) -> Result<CylinderProjection> {
    let local = geo_to_local(&cylinder.position, &camera.position)?;
    let d = (local.east * local.east + local.north * local.north).sqrt();
    if d <= cylinder.radius_m {
        return Err(Error::InvalidScene(format!(
            "camera inside cylinder: distance {d:.3} m <= radius {} m",
            cylinder.radius_m
        )));
    }
    let az_center = wrap_360(local.east.atan2(local.north).to_degrees());
    let half = (cylinder.radius_m / d).asin().to_degrees();
    Ok(CylinderProjection {
        az_left_deg: wrap_360(az_center - half),
        az_right_deg: wrap_360(az_center + half),
        az_center_deg: az_center,
        depth_m: d,
    })
}

/// Seeded Gaussian perturbation source for scene outputs. Zero sigmas are
/// exact identities; a fixed seed reproduces the same noise stream.
pub struct NoiseGen {
    rng: ChaCha8Rng,
    noise: NoiseSpec,
}

impl NoiseGen {
    pub fn new(noise: NoiseSpec, seed: u64) -> Self {
        NoiseGen {
            rng: ChaCha8Rng::seed_from_u64(seed),
            noise,
        }
    }

    fn draw(&mut self, sigma: f64) -> f64 {
        if sigma == 0.0 {
            return 0.0;
        }
        Normal::new(0.0, sigma).unwrap().sample(&mut self.rng)
    }

    pub fn jitter_angle(&mut self, deg: f64) -> f64 {
        deg + self.draw(self.noise.angle_deg_sigma)
    }

    pub fn jitter_depth(&mut self, depth_m: f64) -> f64 {
        depth_m + self.draw(self.noise.depth_m_sigma)
    }

    pub fn jitter_position(&mut self, p: &GeoPoint) -> Result<GeoPoint> {
        let de = self.draw(self.noise.pose_m_sigma);
        let dn = self.draw(self.noise.pose_m_sigma);
        crate::geo::local_to_geo(&LocalPoint::new(de, dn, 0.0), p)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn anchor() -> GeoPoint {
        GeoPoint::new(38.9, -77.0).unwrap()
    }

    fn camera_at(east: f64, north: f64, heading: f64) -> PanoramaPose {
        let pos = crate::geo::local_to_geo(&LocalPoint::new(east, north, 0.0), &anchor()).unwrap();
        PanoramaPose::new("cam", pos, heading, 16384, 8192).unwrap()
    }

    fn scene_with_ribbon(ribbon: RibbonSpec) -> SceneSpec {
        SceneSpec {
            anchor: anchor(),
            ribbons: vec![ribbon],
            billboards: vec![],
            cylinders: vec![],
            cameras: vec![],
            seed: 0,
            noise: NoiseSpec::default(),
        }
    }

    #[test]
    fn vertical_ribbon_rasterizes_to_forty_pixels() {
        let scene = scene_with_ribbon(RibbonSpec {
            polyline: vec![[0.0, -30.0], [0.0, 30.0]],
            width_m: 10.0,
            class: "road".into(),
        });
        let r = render_landcover(&scene, 0.25, 50.0, 0.0).unwrap();
        assert_eq!(r.width, 200);
        let mid = r.height / 2;
        let band: usize = (0..r.width).filter(|&c| r.get(c, mid) == 1).count();
        assert_eq!(band, 40);
    }

    #[test]
    fn later_ribbon_wins_at_overlap() {
        let mut scene = scene_with_ribbon(RibbonSpec {
            polyline: vec![[0.0, -30.0], [0.0, 30.0]],
            width_m: 10.0,
            class: "road".into(),
        });
        scene.ribbons.push(RibbonSpec {
            polyline: vec![[-30.0, 0.0], [30.0, 0.0]],
            width_m: 6.0,
            class: "sidewalk".into(),
        });
        let r = render_landcover(&scene, 0.25, 50.0, 0.0).unwrap();
        // the crossing is sidewalk (class 2) where both cover
        let c = r.width / 2;
        assert_eq!(r.get(c, r.height / 2), 2);
    }

    #[test]
    fn raster_matches_point_distance_oracle() {
        let ribbon = RibbonSpec {
            polyline: vec![[-20.0, -10.0], [5.0, 8.0], [20.0, -3.0]],
            width_m: 7.0,
            class: "road".into(),
        };
        let scene = scene_with_ribbon(ribbon.clone());
        let r = render_landcover(&scene, 0.5, 60.0, 0.0).unwrap();
        for row in (0..r.height).step_by(7) {
            for col in (0..r.width).step_by(7) {
                let east = (col as f64 + 0.5 - r.width as f64 / 2.0) * 0.5;
                let north = (r.height as f64 / 2.0 - (row as f64 + 0.5)) * 0.5;
                let expected = u8::from(ribbon_contains(&ribbon, east, north));
                assert_eq!(r.get(col, row), expected, "at ({col}, {row})");
            }
        }
    }

    #[test]
    fn empty_extent_rejected() {
        let scene = scene_with_ribbon(RibbonSpec {
            polyline: vec![[0.0, -1.0], [0.0, 1.0]],
            width_m: 1.0,
            class: "road".into(),
        });
        assert!(render_landcover(&scene, 0.25, 0.0, 0.0).is_err());
    }

    #[test]
    fn symmetric_billboard_has_opposite_thetas() {
        let cam = camera_at(0.0, 0.0, 0.0);
        let pos = crate::geo::local_to_geo(&LocalPoint::new(0.0, 10.0, 0.0), &anchor()).unwrap();
        let b = BillboardSpec {
            position: pos,
            bottom_height_m: 2.5 - 0.5,
            height_m: 1.0,
            width_m: 0.6,
            class: "sign".into(),
        };
        let p = project_billboard(&cam, &b).unwrap();
        assert_abs_diff_eq!(p.theta_top_deg, -p.theta_bottom_deg, epsilon = 1e-9);
        assert_abs_diff_eq!(p.azimuth_deg, 0.0, epsilon = 1e-9);
    }

    #[test]
    fn worked_sign_angles() {
        // sign of height 0.75 with bottom at 2.13 m, camera at 2.5 m, 10 m away
        let cam = camera_at(0.0, 0.0, 0.0);
        let pos = crate::geo::local_to_geo(&LocalPoint::new(0.0, 10.0, 0.0), &anchor()).unwrap();
        let b = BillboardSpec {
            position: pos,
            bottom_height_m: 2.13,
            height_m: 0.75,
            width_m: 0.75,
            class: "stop_sign".into(),
        };
        let p = project_billboard(&cam, &b).unwrap();
        assert_abs_diff_eq!(
            p.theta_bottom_deg,
            (-0.037f64).atan().to_degrees(),
            epsilon = 1e-6
        );
        assert_abs_diff_eq!(
            p.theta_top_deg,
            (0.038f64).atan().to_degrees(),
            epsilon = 1e-6
        );
    }

    #[test]
    fn sign_along_heading_centered_on_panorama() {
        let cam = camera_at(0.0, 0.0, 30.0);
        let pos = crate::geo::local_to_geo(
            &LocalPoint::new(10.0 * 30f64.to_radians().sin(), 10.0 * 30f64.to_radians().cos(), 0.0),
            &anchor(),
        )
        .unwrap();
        let b = BillboardSpec {
            position: pos,
            bottom_height_m: 2.0,
            height_m: 0.75,
            width_m: 0.6,
            class: "sign".into(),
        };
        let p = project_billboard(&cam, &b).unwrap();
        let center_col = (p.pixel_box.col_min + p.pixel_box.col_max) / 2.0;
        assert!((center_col - (16384.0 / 2.0 - 0.5)).abs() <= 2.0);
    }

    #[test]
    fn cylinder_tangent_half_angle() {
        let cam = camera_at(0.0, 0.0, 0.0);
        let s = 10.0 * 45f64.to_radians().sin() / 90f64.to_radians().sin(); // 7.0711
        let pos = crate::geo::local_to_geo(&LocalPoint::new(0.0, s, 0.0), &anchor()).unwrap();
        let cyl = CylinderSpec {
            position: pos,
            radius_m: 0.25,
            height_m: 8.0,
        };
        let p = project_cylinder(&cam, &cyl).unwrap();
        let half = crate::geo::signed_arc(p.az_left_deg, p.az_right_deg) / 2.0;
        assert_abs_diff_eq!(half, (0.25f64 / s).asin().to_degrees(), epsilon = 1e-9);
        assert_abs_diff_eq!(half, 2.0268, epsilon = 1e-3);
        assert_abs_diff_eq!(p.depth_m, s, epsilon = 1e-9);
        // symmetric about due north
        assert_abs_diff_eq!(
            crate::geo::signed_arc(p.az_left_deg, 0.0),
            crate::geo::signed_arc(0.0, p.az_right_deg),
            epsilon = 1e-9
        );
    }

    #[test]
    fn vanishing_radius_vanishing_width() {
        let cam = camera_at(0.0, 0.0, 0.0);
        let pos = crate::geo::local_to_geo(&LocalPoint::new(3.0, 4.0, 0.0), &anchor()).unwrap();
        let cyl = CylinderSpec {
            position: pos,
            radius_m: 1e-9,
            height_m: 8.0,
        };
        let p = project_cylinder(&cam, &cyl).unwrap();
        assert!(crate::geo::signed_arc(p.az_left_deg, p.az_right_deg) < 1e-6);
    }

    #[test]
    fn camera_inside_cylinder_invalid() {
        let cam = camera_at(0.0, 0.0, 0.0);
        let pos = crate::geo::local_to_geo(&LocalPoint::new(0.1, 0.0, 0.0), &anchor()).unwrap();
        let cyl = CylinderSpec {
            position: pos,
            radius_m: 0.5,
            height_m: 8.0,
        };
        assert!(matches!(
            project_cylinder(&cam, &cyl),
            Err(Error::InvalidScene(_))
        ));
    }

    #[test]
    fn zero_sigma_noise_is_identity() {
        let mut gen = NoiseGen::new(NoiseSpec::default(), 99);
        assert_eq!(gen.jitter_angle(12.34), 12.34);
        assert_eq!(gen.jitter_depth(5.0), 5.0);
        let p = anchor();
        assert_eq!(gen.jitter_position(&p).unwrap(), p);
    }

    #[test]
    fn fixed_seed_reproduces_noise() {
        let spec = NoiseSpec {
            angle_deg_sigma: 0.1,
            pose_m_sigma: 0.5,
            depth_m_sigma: 1.0,
        };
        let mut a = NoiseGen::new(spec, 7);
        let mut b = NoiseGen::new(spec, 7);
        for _ in 0..32 {
            assert_eq!(a.jitter_angle(1.0), b.jitter_angle(1.0));
            assert_eq!(a.jitter_depth(5.0), b.jitter_depth(5.0));
        }
    }

    #[test]
    fn noise_moments_match_sigma() {
        let spec = NoiseSpec {
            angle_deg_sigma: 0.25,
            ..Default::default()
        };
        let mut gen = NoiseGen::new(spec, 3);
        let n = 100_000;
        let draws: Vec<f64> = (0..n).map(|_| gen.jitter_angle(0.0)).collect();
        let mean = draws.iter().sum::<f64>() / n as f64;
        let var = draws.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n as f64;
        assert!(mean.abs() < 0.25 * 0.02);
        assert!((var.sqrt() - 0.25).abs() / 0.25 < 0.02);
    }
}
