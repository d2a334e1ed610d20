//! Synthetic warehouse scenarios: random-walk workers observed by ceiling
//! cameras with configurable degradation.

mod export;
mod features;
mod observe;
mod world;

use nalgebra::Matrix3;
use serde::{Deserialize, Serialize};

use crate::fusion::{FusionConfig, Tracklet};
use crate::geometry::{CameraModel, CameraRig, GlobalPoint, RadialDistortion};
use crate::metrics::LabeledTimeline;
use crate::{Error, Result};

pub use export::{export_scenario, ExportPaths, FeatureFormat};
pub use features::{synth_feature, IdentityAppearance};
pub use observe::{observe, CameraObservation};
pub use world::{generate_world, World};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WorldConfig {
    /// Floor extent `[width, height]` in floor px.
    pub floor_size: [f64; 2],
    pub n_workers: usize,
    pub n_frames: u32,
    #[serde(default = "default_fps")]
    pub fps: f64,
    /// Step length per frame, floor px.
    pub walk_speed_px: f64,
    /// Std of per-frame heading change, radians.
    pub turn_std: f64,
    #[serde(default)]
    pub seed: u64,
}

fn default_fps() -> f64 {
    5.0
}

impl WorldConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_workers < 1 {
            return Err(Error::invalid("world.n_workers", "must be >= 1"));
        }
        if self.n_frames < 1 {
            return Err(Error::invalid("world.n_frames", "must be >= 1"));
        }
        if !(self.floor_size[0] > 0.0 && self.floor_size[1] > 0.0) {
            return Err(Error::invalid("world.floor_size", "must be positive"));
        }
        if !(self.fps > 0.0) {
            return Err(Error::invalid("world.fps", "must be > 0"));
        }
        if !(self.walk_speed_px >= 0.0) || !(self.turn_std >= 0.0) {
            return Err(Error::invalid("world.walk_speed_px", "speed and turn_std must be >= 0"));
        }
        Ok(())
    }
}

/// Axis-aligned floor rectangle `[x0, y0, x1, y1]`.
pub type FloorRect = [f64; 4];

pub(crate) fn rect_contains(r: &FloorRect, p: &GlobalPoint) -> bool {
    p.x >= r[0] && p.x <= r[2] && p.y >= r[1] && p.y <= r[3]
}

/// A ceiling camera looking straight down onto `footprint`.
///
/// The true image-to-floor mapping is the axis-aligned affine map that takes
/// the image rectangle onto the footprint. The rig handed to fusion carries
/// that mapping perturbed by a rigid transform whose translation at the
/// footprint center has length `misalignment`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CameraPlacement {
    pub camera_id: u32,
    #[serde(default = "default_image_size")]
    pub image_size: [f64; 2],
    pub footprint: FloorRect,
    #[serde(default)]
    pub misalignment: f64,
    /// Person height over camera height.
    #[serde(default)]
    pub mount_height_ratio: f64,
    #[serde(default = "default_half_width")]
    pub body_half_width_px: f64,
    #[serde(default)]
    pub distortion: Option<RadialDistortion>,
}

fn default_image_size() -> [f64; 2] {
    [1920.0, 1080.0]
}

fn default_half_width() -> f64 {
    12.0
}

impl CameraPlacement {
    pub fn validate(&self, world: &WorldConfig) -> Result<()> {
        let field = |name: &str| format!("camera[{}].{name}", self.camera_id);
        let [x0, y0, x1, y1] = self.footprint;
        if !(x0 < x1 && y0 < y1) {
            return Err(Error::invalid(field("footprint"), "expected x0 < x1 and y0 < y1"));
        }
        if x0 < 0.0 || y0 < 0.0 || x1 > world.floor_size[0] || y1 > world.floor_size[1] {
            return Err(Error::invalid(field("footprint"), "must lie within the floor"));
        }
        if !(self.image_size[0] > 0.0 && self.image_size[1] > 0.0) {
            return Err(Error::invalid(field("image_size"), "must be positive"));
        }
        if !(0.0..1.0).contains(&self.mount_height_ratio) {
            return Err(Error::invalid(field("mount_height_ratio"), "must lie in [0, 1)"));
        }
        if !(self.misalignment >= 0.0) || !(self.body_half_width_px >= 0.0) {
            return Err(Error::invalid(field("misalignment"), "misalignment and body_half_width_px must be >= 0"));
        }
        Ok(())
    }

    /// Image pixel to floor, ground truth.
    pub fn true_homography(&self) -> Matrix3<f64> {
        let [x0, y0, x1, y1] = self.footprint;
        let sx = (x1 - x0) / self.image_size[0];
        let sy = (y1 - y0) / self.image_size[1];
        Matrix3::new(sx, 0.0, x0, 0.0, sy, y0, 0.0, 0.0, 1.0)
    }

    pub fn true_camera(&self) -> Result<CameraModel> {
        let cam = CameraModel::new(self.camera_id, self.image_size[0], self.image_size[1], self.true_homography())?;
        Ok(match self.distortion {
            Some(d) if !d.is_identity() => cam.with_distortion(d),
            _ => cam,
        })
    }

    pub fn footprint_center(&self) -> GlobalPoint {
        let [x0, y0, x1, y1] = self.footprint;
        GlobalPoint::new((x0 + x1) / 2.0, (y0 + y1) / 2.0)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NoiseConfig {
    pub det_miss_prob: f64,
    /// Expected false-positive tracklets started per camera-frame.
    pub fp_rate: f64,
    pub bbox_jitter_px: f64,
    pub frag_prob: f64,
    /// Floor rectangles in which the lower body is hidden.
    pub occlusion_zones: Vec<FloorRect>,
    /// Zero disables features entirely.
    pub feature_dim: usize,
    pub feature_noise_std: f64,
    pub view_drift_gain: f64,
}

impl Default for NoiseConfig {
    fn default() -> Self {
        Self {
            det_miss_prob: 0.0,
            fp_rate: 0.0,
            bbox_jitter_px: 0.0,
            frag_prob: 0.0,
            occlusion_zones: Vec::new(),
            feature_dim: 0,
            feature_noise_std: 0.0,
            view_drift_gain: 0.0,
        }
    }
}

impl NoiseConfig {
    pub fn validate(&self) -> Result<()> {
        for (name, p) in [("noise.det_miss_prob", self.det_miss_prob), ("noise.frag_prob", self.frag_prob)] {
            if !(0.0..=1.0).contains(&p) {
                return Err(Error::invalid(name, "must lie in [0, 1]"));
            }
        }
        for (name, v) in [
            ("noise.fp_rate", self.fp_rate),
            ("noise.bbox_jitter_px", self.bbox_jitter_px),
            ("noise.feature_noise_std", self.feature_noise_std),
            ("noise.view_drift_gain", self.view_drift_gain),
        ] {
            if !(v >= 0.0) || !v.is_finite() {
                return Err(Error::invalid(name, "must be finite and >= 0"));
            }
        }
        if self.occlusion_zones.iter().any(|z| !(z[0] < z[2] && z[1] < z[3])) {
            return Err(Error::invalid("noise.occlusion_zones", "expected x0 < x1 and y0 < y1"));
        }
        Ok(())
    }
}

/// Complete scenario description as read from a scenario file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub world: WorldConfig,
    #[serde(default)]
    pub noise: NoiseConfig,
    #[serde(rename = "camera")]
    pub cameras: Vec<CameraPlacement>,
    /// Fusion settings written next to the generated data.
    #[serde(default)]
    pub fusion: FusionConfig,
}

impl Scenario {
    pub fn validate(&self) -> Result<()> {
        self.world.validate()?;
        self.noise.validate()?;
        if self.cameras.is_empty() {
            return Err(Error::invalid("camera", "at least one camera is required"));
        }
        for c in &self.cameras {
            c.validate(&self.world)?;
        }
        let mut ids: Vec<u32> = self.cameras.iter().map(|c| c.camera_id).collect();
        ids.sort_unstable();
        if ids.windows(2).any(|w| w[0] == w[1]) {
            return Err(Error::invalid("camera.camera_id", "duplicate camera id"));
        }
        self.fusion.validate()
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.world.seed = seed;
        self
    }

    /// The reference benchmark: 8 workers, 6 cameras in a 3x2 grid with
    /// overlapping views, 600 frames, features off.
    pub fn reference() -> Self {
        let (cols, rows) = (3usize, 2usize);
        let (fw, fh) = (960.0, 540.0);
        let (step_x, step_y) = (640.0, 360.0);
        let margin = 0.0;
        let floor = [
            2.0 * margin + step_x * (cols - 1) as f64 + fw,
            2.0 * margin + step_y * (rows - 1) as f64 + fh,
        ];
        let mut cameras = Vec::new();
        for r in 0..rows {
            for c in 0..cols {
                let x0 = margin + step_x * c as f64;
                let y0 = margin + step_y * r as f64;
                cameras.push(CameraPlacement {
                    camera_id: (r * cols + c + 1) as u32,
                    image_size: default_image_size(),
                    footprint: [x0, y0, x0 + fw, y0 + fh],
                    misalignment: 15.0,
                    mount_height_ratio: 0.4,
                    body_half_width_px: default_half_width(),
                    distortion: Some(RadialDistortion {
                        k_stretch: 0.15,
                        k_radial: 0.0,
                    }),
                });
            }
        }
        Self {
            world: WorldConfig {
                floor_size: floor,
                n_workers: 8,
                n_frames: 600,
                fps: 5.0,
                walk_speed_px: 12.0,
                turn_std: 0.1,
                seed: 0,
            },
            noise: NoiseConfig {
                det_miss_prob: 0.05,
                fp_rate: 0.01,
                bbox_jitter_px: 4.0,
                frag_prob: 0.05,
                occlusion_zones: Vec::new(),
                feature_dim: 0,
                feature_noise_std: 0.0,
                view_drift_gain: 0.0,
            },
            cameras,
            fusion: FusionConfig::default(),
        }
    }

    /// [`Scenario::reference`] with appearance features switched on.
    pub fn reference_with_features() -> Self {
        let mut s = Self::reference();
        s.noise.feature_dim = 64;
        s.noise.feature_noise_std = 0.3;
        s.noise.view_drift_gain = 0.5;
        s
    }
}

/// A generated scenario: ground truth, the rig given to fusion and the
/// per-camera observations.
#[derive(Debug, Clone)]
pub struct SimulationOutput {
    pub world: World,
    pub ground_truth: LabeledTimeline,
    /// Cameras with the (possibly misaligned) homographies fusion sees.
    pub rig: CameraRig,
    pub observations: Vec<CameraObservation>,
}

impl SimulationOutput {
    pub fn tracklets(&self) -> Vec<Tracklet> {
        self.observations.iter().flat_map(|o| o.tracklets.iter().cloned()).collect()
    }
}

/// Mixes a base seed with a stream tag and index (SplitMix64 finalizer).
pub(crate) fn derive_seed(base: u64, stream: u64, index: u64) -> u64 {
    let mut z = base
        .wrapping_add(stream.wrapping_mul(0x9E37_79B9_7F4A_7C15))
        .wrapping_add(index.wrapping_mul(0xD1B5_4A32_D192_ED03));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

pub(crate) const STREAM_WORLD: u64 = 1;
pub(crate) const STREAM_CAMERA: u64 = 2;
pub(crate) const STREAM_IDENTITY: u64 = 3;
pub(crate) const STREAM_MISALIGN: u64 = 4;

/// Generates the world, observes it from every camera and builds the rig.
pub fn simulate(scenario: &Scenario) -> Result<SimulationOutput> {
    use rayon::prelude::*;

    scenario.validate()?;
    let world = generate_world(&scenario.world)?;
    let appearance = IdentityAppearance::new(scenario.noise.feature_dim, scenario.world.n_workers, scenario.world.seed);
    let observations = scenario
        .cameras
        .par_iter()
        .map(|placement| {
            let seed = derive_seed(scenario.world.seed, STREAM_CAMERA, u64::from(placement.camera_id));
            observe(&world, placement, &scenario.noise, &appearance, seed)
        })
        .collect::<Result<Vec<_>>>()?;
    let cameras = scenario
        .cameras
        .iter()
        .map(|p| observe::configured_camera(p, scenario.world.seed))
        .collect::<Result<Vec<_>>>()?;
    let ground_truth = world.visible_ground_truth(&scenario.cameras)?;
    Ok(SimulationOutput {
        world,
        ground_truth,
        rig: CameraRig::new(cameras)?,
        observations,
    })
}
