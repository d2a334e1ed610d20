use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{Scenario, SimulationOutput};
use crate::io::{
    to_toml_string, write_features_bin, write_features_csv, write_timeline_csv, write_tracklets_csv, CameraEntry,
    FeatureTable, InputEntry, RunConfig,
};
use crate::metrics::MatchingParams;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FeatureFormat {
    #[default]
    Csv,
    Binary,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExportPaths {
    pub dir: PathBuf,
    pub feature_format: FeatureFormat,
}

impl ExportPaths {
    pub fn new(dir: impl Into<PathBuf>) -> Self {
        Self {
            dir: dir.into(),
            feature_format: FeatureFormat::Csv,
        }
    }

    pub fn ground_truth(&self) -> PathBuf {
        self.dir.join("gt.csv")
    }

    pub fn run_config(&self) -> PathBuf {
        self.dir.join("run.toml")
    }

    fn tracklets_name(camera_id: u32) -> String {
        format!("cam{camera_id}_tracklets.csv")
    }

    fn features_name(&self, camera_id: u32) -> String {
        match self.feature_format {
            FeatureFormat::Csv => format!("cam{camera_id}_features.csv"),
            FeatureFormat::Binary => format!("cam{camera_id}_features.bin"),
        }
    }
}

/// Writes ground truth, per-camera tracklets (and features when enabled)
/// and a `run.toml` that `fuse` can consume directly. Returns the written
/// paths in write order.
///
/// `comment` is embedded as `#` lines at the top of every text file.
pub fn export_scenario(
    scenario: &Scenario,
    sim: &SimulationOutput,
    paths: &ExportPaths,
    comment: Option<&str>,
) -> Result<Vec<PathBuf>> {
    std::fs::create_dir_all(&paths.dir).map_err(|e| Error::io(&paths.dir, e))?;
    let mut written = Vec::new();

    let gt = paths.ground_truth();
    write_timeline_csv(&gt, &sim.ground_truth, comment)?;
    written.push(gt);

    let mut inputs = Vec::new();
    for obs in &sim.observations {
        let name = ExportPaths::tracklets_name(obs.camera_id);
        let path = paths.dir.join(&name);
        write_tracklets_csv(&path, &obs.tracklets, comment)?;
        written.push(path);
        let mut input = InputEntry {
            camera_id: obs.camera_id,
            tracklets: PathBuf::from(name),
            features: None,
        };
        if scenario.noise.feature_dim > 0 {
            let name = paths.features_name(obs.camera_id);
            let path = paths.dir.join(&name);
            let table = FeatureTable::from_tracklets(scenario.noise.feature_dim, &obs.tracklets);
            match paths.feature_format {
                FeatureFormat::Csv => write_features_csv(&path, &table, comment)?,
                FeatureFormat::Binary => write_features_bin(&path, &table)?,
            }
            written.push(path);
            input.features = Some(PathBuf::from(name));
        }
        inputs.push(input);
    }

    let run = RunConfig {
        ground_truth: Some(PathBuf::from("gt.csv")),
        cameras: sim.rig.iter().map(CameraEntry::from_model).collect(),
        inputs,
        fusion: scenario.fusion.clone(),
        metrics: MatchingParams::default(),
    };
    let mut text = String::new();
    if let Some(c) = comment {
        for line in c.lines() {
            text.push_str(&format!("# {line}\n"));
        }
    }
    text.push_str(&to_toml_string(&run)?);
    let run_path = paths.run_config();
    write_file(&run_path, &text)?;
    written.push(run_path);
    Ok(written)
}

fn write_file(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}
