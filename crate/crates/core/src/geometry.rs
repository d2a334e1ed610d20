//! Pixel-space geometry: bounding boxes, foot-point estimation, floor
//! homographies and the residual distortion model used by the simulator.

use std::collections::BTreeMap;

use nalgebra::{Matrix3, Point2, Vector2, Vector3};
use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// A point in some camera's pixel frame.
pub type Pixel = Point2<f64>;

const PROJECTION_EPS: f64 = 1e-9;
const SINGULAR_DET: f64 = 1e-12;
const UNDISTORT_MAX_ITER: usize = 50;
const UNDISTORT_TOL: f64 = 1e-6;

/// Axis-aligned bounding box in image coordinates.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BBox {
    pub x1: f64,
    pub y1: f64,
    pub x2: f64,
    pub y2: f64,
}

impl BBox {
    pub fn new(x1: f64, y1: f64, x2: f64, y2: f64) -> Result<Self> {
        let finite = [x1, y1, x2, y2].iter().all(|v| v.is_finite());
        if !finite || x1 >= x2 || y1 >= y2 {
            return Err(Error::invalid(
                "bbox",
                format!("expected x1 < x2 and y1 < y2, got ({x1}, {y1}, {x2}, {y2})"),
            ));
        }
        Ok(Self { x1, y1, x2, y2 })
    }

    pub fn center(&self) -> Pixel {
        Pixel::new(0.5 * (self.x1 + self.x2), 0.5 * (self.y1 + self.y2))
    }

    pub fn width(&self) -> f64 {
        self.x2 - self.x1
    }

    pub fn height(&self) -> f64 {
        self.y2 - self.y1
    }

    pub fn translated(&self, dx: f64, dy: f64) -> Self {
        Self {
            x1: self.x1 + dx,
            y1: self.y1 + dy,
            x2: self.x2 + dx,
            y2: self.y2 + dy,
        }
    }
}

/// Position on the shared floor plane, in mosaic pixels.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct GlobalPoint {
    pub x: f64,
    pub y: f64,
}

impl GlobalPoint {
    pub const fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    pub fn distance(&self, other: &GlobalPoint) -> f64 {
        (self.x - other.x).hypot(self.y - other.y)
    }

    pub fn to_vector(self) -> Vector2<f64> {
        Vector2::new(self.x, self.y)
    }

    pub fn from_vector(v: Vector2<f64>) -> Self {
        Self { x: v.x, y: v.y }
    }
}

/// Which pixel represents a detection when it is projected to the floor.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CoordinateMode {
    BboxCenter,
    #[serde(alias = "foot-position")]
    Foot,
}

impl CoordinateMode {
    pub const ALL: [CoordinateMode; 2] = [CoordinateMode::BboxCenter, CoordinateMode::Foot];

    pub fn as_str(self) -> &'static str {
        match self {
            CoordinateMode::BboxCenter => "bbox-center",
            CoordinateMode::Foot => "foot",
        }
    }
}

impl std::str::FromStr for CoordinateMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "bbox-center" | "center" => Ok(CoordinateMode::BboxCenter),
            "foot" | "foot-position" => Ok(CoordinateMode::Foot),
            other => Err(Error::invalid(
                "coordinate_mode",
                format!("expected `bbox-center` or `foot`, got `{other}`"),
            )),
        }
    }
}

impl std::fmt::Display for CoordinateMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Residual lens distortion left over after calibration.
///
/// Radial term `r' = r (1 + k_radial r^2)` around the image center plus a
/// vertical stretch `dy = k_stretch (y - cy) r / r_max` that grows toward the
/// image periphery.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct RadialDistortion {
    #[serde(default)]
    pub k_stretch: f64,
    #[serde(default)]
    pub k_radial: f64,
}

impl RadialDistortion {
    pub fn is_identity(&self) -> bool {
        self.k_stretch == 0.0 && self.k_radial == 0.0
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CameraModel {
    pub camera_id: u32,
    pub image_width: f64,
    pub image_height: f64,
    pub image_center: Pixel,
    homography: Matrix3<f64>,
    inverse: Matrix3<f64>,
    pub distortion: Option<RadialDistortion>,
}

impl CameraModel {
    /// Builds a camera with its image center at `(W/2, H/2)`.
    pub fn new(camera_id: u32, width: f64, height: f64, homography: Matrix3<f64>) -> Result<Self> {
        if !(width > 0.0 && height > 0.0) {
            return Err(Error::invalid(
                "image size",
                format!("camera {camera_id}: expected positive size, got {width}x{height}"),
            ));
        }
        let det = homography.determinant();
        if !det.is_finite() || det.abs() <= SINGULAR_DET {
            return Err(Error::SingularHomography { det });
        }
        let inverse = homography
            .try_inverse()
            .ok_or(Error::SingularHomography { det })?;
        Ok(Self {
            camera_id,
            image_width: width,
            image_height: height,
            image_center: Pixel::new(width / 2.0, height / 2.0),
            homography,
            inverse,
            distortion: None,
        })
    }

    pub fn with_image_center(mut self, center: Pixel) -> Result<Self> {
        if !(0.0..=self.image_width).contains(&center.x) || !(0.0..=self.image_height).contains(&center.y) {
            return Err(Error::invalid(
                "image_center",
                format!(
                    "camera {}: ({}, {}) lies outside the {}x{} image",
                    self.camera_id, center.x, center.y, self.image_width, self.image_height
                ),
            ));
        }
        self.image_center = center;
        Ok(self)
    }

    pub fn with_distortion(mut self, distortion: RadialDistortion) -> Self {
        self.distortion = Some(distortion);
        self
    }

    pub fn homography(&self) -> &Matrix3<f64> {
        &self.homography
    }

    pub fn inverse_homography(&self) -> &Matrix3<f64> {
        &self.inverse
    }

    /// Undistorted pixel to floor.
    pub fn to_floor(&self, pt: Pixel) -> Result<GlobalPoint> {
        project(pt, &self.homography)
    }

    /// Floor to undistorted pixel.
    pub fn to_pixel(&self, pt: GlobalPoint) -> Result<Pixel> {
        let p = project(Pixel::new(pt.x, pt.y), &self.inverse)?;
        Ok(Pixel::new(p.x, p.y))
    }

    pub fn contains(&self, pt: &Pixel, inset: f64) -> bool {
        pt.x >= inset
            && pt.y >= inset
            && pt.x <= self.image_width - inset
            && pt.y <= self.image_height - inset
    }

    /// Distance from the image center to the farthest image corner.
    pub fn max_radius(&self) -> f64 {
        let c = self.image_center;
        [
            (0.0, 0.0),
            (self.image_width, 0.0),
            (0.0, self.image_height),
            (self.image_width, self.image_height),
        ]
        .iter()
        .map(|&(x, y)| (x - c.x).hypot(y - c.y))
        .fold(0.0, f64::max)
    }
}

/// Cameras keyed by id.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct CameraRig {
    cameras: BTreeMap<u32, CameraModel>,
}

impl CameraRig {
    pub fn new(cameras: impl IntoIterator<Item = CameraModel>) -> Result<Self> {
        let mut map = BTreeMap::new();
        for cam in cameras {
            let id = cam.camera_id;
            if map.insert(id, cam).is_some() {
                return Err(Error::invalid("camera_id", format!("duplicate camera id {id}")));
            }
        }
        Ok(Self { cameras: map })
    }

    pub fn get(&self, camera_id: u32) -> Result<&CameraModel> {
        self.cameras.get(&camera_id).ok_or(Error::UnknownCamera(camera_id))
    }

    pub fn iter(&self) -> impl Iterator<Item = &CameraModel> {
        self.cameras.values()
    }

    pub fn len(&self) -> usize {
        self.cameras.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cameras.is_empty()
    }
}

/// Estimated ground-contact pixel of a person.
///
/// Walks from the box center toward `image_center` and returns where that
/// ray leaves the box. Under a downward-looking camera the feet sit on the
/// side of the box facing the image center. When the box center coincides
/// with the image center the box center itself is returned.
pub fn foot_point(bbox: &BBox, image_center: Pixel) -> Pixel {
    let c = bbox.center();
    let dir = image_center - c;
    let half = Vector2::new(bbox.width() / 2.0, bbox.height() / 2.0);

    // slab exit parameter along each axis
    let mut exit: Option<(usize, f64)> = None;
    for axis in 0..2 {
        if dir[axis] != 0.0 {
            let t = half[axis] / dir[axis].abs();
            if exit.is_none_or(|(_, best)| t < best) {
                exit = Some((axis, t));
            }
        }
    }
    let Some((axis, t)) = exit else {
        return c;
    };
    let mut p = c + dir * t;
    // land exactly on the crossed edge
    p[axis] = c[axis] + half[axis].copysign(dir[axis]);
    p
}

/// Applies a homography to a pixel with perspective division.
pub fn project(pt: Pixel, h: &Matrix3<f64>) -> Result<GlobalPoint> {
    let v = h * Vector3::new(pt.x, pt.y, 1.0);
    if !v.z.is_finite() || v.z.abs() <= PROJECTION_EPS {
        return Err(Error::DegenerateProjection { w: v.z });
    }
    Ok(GlobalPoint::new(v.x / v.z, v.y / v.z))
}

fn apply_distortion(pt: Pixel, center: Pixel, r_max: f64, d: &RadialDistortion) -> Pixel {
    let offset = pt - center;
    let r2 = offset.norm_squared();
    let r = r2.sqrt();
    let scale = 1.0 + d.k_radial * r2;
    let stretch = if r_max > 0.0 { d.k_stretch * offset.y * (r / r_max) } else { 0.0 };
    Pixel::new(center.x + offset.x * scale, center.y + offset.y * scale + stretch)
}

/// Ideal (undistorted) pixel to observed pixel. Identity for cameras without
/// a distortion model.
pub fn distort(pt: Pixel, cam: &CameraModel) -> Pixel {
    match &cam.distortion {
        Some(d) if !d.is_identity() => apply_distortion(pt, cam.image_center, cam.max_radius(), d),
        _ => pt,
    }
}

/// Inverts [`distort`] by fixed-point iteration.
pub fn undistort(pt: Pixel, cam: &CameraModel) -> Result<Pixel> {
    let d = match &cam.distortion {
        Some(d) if !d.is_identity() => *d,
        _ => return Ok(pt),
    };
    let center = cam.image_center;
    let r_max = cam.max_radius();
    let mut u = pt;
    let mut residual = f64::INFINITY;
    for _ in 0..UNDISTORT_MAX_ITER {
        let err = apply_distortion(u, center, r_max, &d) - pt;
        residual = err.norm();
        if residual < UNDISTORT_TOL {
            return Ok(u);
        }
        u -= err;
    }
    let err = (apply_distortion(u, center, r_max, &d) - pt).norm();
    if err < UNDISTORT_TOL {
        return Ok(u);
    }
    Err(Error::NonConvergent {
        residual: residual.min(err),
        iterations: UNDISTORT_MAX_ITER,
    })
}

/// The pixel that stands for a detection under the given coordinate mode.
pub fn anchor_point(bbox: &BBox, mode: CoordinateMode, cam: &CameraModel) -> Pixel {
    match mode {
        CoordinateMode::BboxCenter => bbox.center(),
        CoordinateMode::Foot => foot_point(bbox, cam.image_center),
    }
}
