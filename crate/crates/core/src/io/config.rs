use std::path::{Path, PathBuf};

use nalgebra::Matrix3;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use super::tables::{read_features, read_tracklets_csv};
use crate::fusion::{FusionConfig, Tracklet};
use crate::geometry::{CameraModel, CameraRig, Pixel, RadialDistortion};
use crate::metrics::MatchingParams;
use crate::simulator::Scenario;
use crate::{Error, Result};

/// One camera as stored in a rig or run file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CameraEntry {
    pub camera_id: u32,
    pub width: f64,
    pub height: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub image_center: Option<[f64; 2]>,
    /// Row-major 3x3, undistorted pixel to floor.
    pub homography: [f64; 9],
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub distortion: Option<RadialDistortion>,
}

impl CameraEntry {
    pub fn from_model(cam: &CameraModel) -> Self {
        let h = cam.homography();
        let center = cam.image_center;
        let default_center = (center.x - cam.image_width / 2.0).abs() < f64::EPSILON
            && (center.y - cam.image_height / 2.0).abs() < f64::EPSILON;
        Self {
            camera_id: cam.camera_id,
            width: cam.image_width,
            height: cam.image_height,
            image_center: (!default_center).then_some([center.x, center.y]),
            homography: std::array::from_fn(|i| h[(i / 3, i % 3)]),
            distortion: cam.distortion,
        }
    }

    pub fn to_model(&self) -> Result<CameraModel> {
        let mut cam = CameraModel::new(
            self.camera_id,
            self.width,
            self.height,
            Matrix3::from_row_slice(&self.homography),
        )?;
        if let Some([x, y]) = self.image_center {
            cam = cam.with_image_center(Pixel::new(x, y))?;
        }
        if let Some(d) = self.distortion {
            cam = cam.with_distortion(d);
        }
        Ok(cam)
    }
}

pub fn rig_from_entries(entries: &[CameraEntry]) -> Result<CameraRig> {
    CameraRig::new(entries.iter().map(CameraEntry::to_model).collect::<Result<Vec<_>>>()?)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RigFile {
    #[serde(rename = "camera")]
    pub cameras: Vec<CameraEntry>,
}

/// Tracklet (and optional feature) file of one camera.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InputEntry {
    pub camera_id: u32,
    pub tracklets: PathBuf,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub features: Option<PathBuf>,
}

/// Everything `fuse` needs: rig, inputs and thresholds. Relative paths are
/// resolved against the directory of the file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ground_truth: Option<PathBuf>,
    #[serde(rename = "camera")]
    pub cameras: Vec<CameraEntry>,
    #[serde(rename = "input", default)]
    pub inputs: Vec<InputEntry>,
    #[serde(default)]
    pub fusion: FusionConfig,
    #[serde(default)]
    pub metrics: MatchingParams,
}

/// A run file with its inputs read.
#[derive(Debug, Clone)]
pub struct LoadedRun {
    pub config: RunConfig,
    pub rig: CameraRig,
    pub tracklets: Vec<Tracklet>,
}

/// Parses TOML text, reporting the file, line and offending key on error.
pub fn parse_toml<T: DeserializeOwned>(path: &Path, text: &str) -> Result<T> {
    toml::from_str(text).map_err(|e| {
        let location = e
            .span()
            .map(|s| {
                let line = text[..s.start.min(text.len())].matches('\n').count() + 1;
                format!("line {line}: ")
            })
            .unwrap_or_default();
        Error::parse(path, format!("{location}{}", e.message()))
    })
}

pub fn read_toml<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_toml(path, &text)
}

pub fn load_scenario(path: &Path) -> Result<Scenario> {
    let s: Scenario = read_toml(path)?;
    s.validate().map_err(|e| Error::parse(path, e.to_string()))?;
    Ok(s)
}

pub fn load_rig(path: &Path) -> Result<CameraRig> {
    let rig: RigFile = read_toml(path)?;
    rig_from_entries(&rig.cameras)
}

fn resolve(base: &Path, p: &Path) -> PathBuf {
    if p.is_absolute() {
        p.to_path_buf()
    } else {
        base.join(p)
    }
}

pub fn load_run(path: &Path) -> Result<LoadedRun> {
    let mut config: RunConfig = read_toml(path)?;
    config.fusion.validate().map_err(|e| Error::parse(path, e.to_string()))?;
    config.metrics.validate().map_err(|e| Error::parse(path, e.to_string()))?;
    let base = path.parent().unwrap_or(Path::new("."));
    let rig = rig_from_entries(&config.cameras)?;
    let mut tracklets = Vec::new();
    for input in &config.inputs {
        rig.get(input.camera_id)?;
        let mut ts = read_tracklets_csv(&resolve(base, &input.tracklets), input.camera_id)?;
        if let Some(fp) = &input.features {
            read_features(&resolve(base, fp))?.attach(&mut ts);
        }
        tracklets.extend(ts);
    }
    if let Some(gt) = &config.ground_truth {
        config.ground_truth = Some(resolve(base, gt));
    }
    Ok(LoadedRun { config, rig, tracklets })
}

pub fn to_toml_string<T: Serialize>(value: &T) -> Result<String> {
    toml::to_string(value).map_err(|e| Error::invalid("toml", e.to_string()))
}

#[cfg(test)]
mod tests {
    use super::*;

    const RIG: &str = r#"
[[camera]]
camera_id = 3
width = 1920
height = 1080
homography = [0.5, 0, 10, 0, 0.5, 20, 0, 0, 1]

[[camera]]
camera_id = 4
width = 1280
height = 720
image_center = [600.0, 400.0]
homography = [1, 0, 0, 0, 1, 0, 0, 0, 1]
distortion = { k_stretch = 0.1 }
"#;

    #[test]
    fn rig_parses_and_round_trips() {
        let rig: RigFile = parse_toml(Path::new("rig.toml"), RIG).unwrap();
        let cams = rig_from_entries(&rig.cameras).unwrap();
        let c3 = cams.get(3).unwrap();
        assert_eq!(c3.image_center, Pixel::new(960.0, 540.0));
        let g = c3.to_floor(Pixel::new(100.0, 100.0)).unwrap();
        assert_eq!((g.x, g.y), (60.0, 70.0));
        let c4 = cams.get(4).unwrap();
        assert_eq!(c4.image_center, Pixel::new(600.0, 400.0));
        assert_eq!(c4.distortion.unwrap().k_stretch, 0.1);

        let entries: Vec<CameraEntry> = cams.iter().map(CameraEntry::from_model).collect();
        assert_eq!(entries, rig.cameras);
    }

    #[test]
    fn missing_field_is_named_with_line() {
        let text = "[[camera]]\ncamera_id = 1\nwidth = 10\nheight = 10\n";
        let err = parse_toml::<RigFile>(Path::new("rig.toml"), text).unwrap_err().to_string();
        assert!(err.contains("homography") && err.contains("line"), "{err}");
    }

    #[test]
    fn unknown_key_rejected() {
        let text = "[[camera]]\ncamera_id = 1\nwidth = 10\nheight = 10\nhomography = [1,0,0,0,1,0,0,0,1]\nzoom = 2\n";
        let err = parse_toml::<RigFile>(Path::new("rig.toml"), text).unwrap_err().to_string();
        assert!(err.contains("zoom") && err.contains("line 6"), "{err}");
    }

    #[test]
    fn singular_homography_rejected() {
        let text = "[[camera]]\ncamera_id = 1\nwidth = 10\nheight = 10\nhomography = [1,0,0,2,0,0,0,0,1]\n";
        let rig: RigFile = parse_toml(Path::new("rig.toml"), text).unwrap();
        assert!(matches!(rig_from_entries(&rig.cameras), Err(Error::SingularHomography { .. })));
    }

    #[test]
    fn fusion_section_defaults() {
        let text = "[[camera]]\ncamera_id = 1\nwidth = 10\nheight = 10\nhomography = [1,0,0,0,1,0,0,0,1]\n[fusion]\ngap_dist = 90.0\n";
        let run: RunConfig = parse_toml(Path::new("run.toml"), text).unwrap();
        assert_eq!(run.fusion.gap_dist, 90.0);
        assert_eq!(run.fusion.merge_avg_dist, 130.0);
        assert!(run.inputs.is_empty());
    }
}
