//! Fusion of per-camera tracklets into global floor-plane tracks.
//!
//! The pipeline runs in four stages:
//!
//! 1. [`transform_tracklets`] picks an anchor pixel per detection and
//!    projects it to the floor.
//! 2. [`merge_overlaps`] joins tracklets from different cameras that
//!    describe the same person at the same time.
//! 3. [`dedup_frames`] keeps, per frame, the observation nearest its
//!    camera's image center.
//! 4. [`merge_gaps`] chains temporally disjoint fragments using a
//!    constant-velocity Kalman prediction.

mod gap;
mod kalman;
mod overlap;

use std::collections::BTreeMap;

use nalgebra::Vector2;
use serde::{Deserialize, Serialize};

use crate::appearance::{FeatureStrategy, FeatureVec, SimilarityParams};
use crate::geometry::{anchor_point, BBox, CameraRig, CoordinateMode, GlobalPoint, Pixel};
use crate::{Error, Result};

pub use gap::{gap_merge_test, gap_threshold, initial_direction, merge_gaps};
pub use kalman::{kalman_predict, KalmanParams, KalmanState, Prediction};
pub use overlap::{merge_overlaps, overlap_merge_test};

/// One observation of a person by one camera.
#[derive(Debug, Clone, PartialEq)]
pub struct Detection {
    pub frame: u32,
    pub camera_id: u32,
    pub local_track_id: u32,
    pub bbox: BBox,
    pub confidence: f64,
    pub feature: Option<FeatureVec>,
    /// Pixel used for projection; the box center until transformed.
    pub anchor_px: Pixel,
    pub global_pos: GlobalPoint,
    /// Image-space movement of the anchor, pixels per frame.
    pub motion: Option<Vector2<f64>>,
}

impl Detection {
    pub fn new(frame: u32, camera_id: u32, local_track_id: u32, bbox: BBox, confidence: f64) -> Self {
        let c = bbox.center();
        Self {
            frame,
            camera_id,
            local_track_id,
            bbox,
            confidence,
            feature: None,
            anchor_px: c,
            global_pos: GlobalPoint::new(c.x, c.y),
            motion: None,
        }
    }

    pub fn tracklet_key(&self) -> TrackletKey {
        TrackletKey {
            camera_id: self.camera_id,
            local_track_id: self.local_track_id,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct TrackletKey {
    pub camera_id: u32,
    pub local_track_id: u32,
}

/// Single-camera track: detections sharing a local id, strictly increasing
/// in frame.
#[derive(Debug, Clone, PartialEq)]
pub struct Tracklet {
    pub camera_id: u32,
    pub local_track_id: u32,
    pub detections: Vec<Detection>,
}

impl Tracklet {
    pub fn new(camera_id: u32, local_track_id: u32, detections: Vec<Detection>) -> Result<Self> {
        if detections.is_empty() {
            return Err(Error::invalid(
                "tracklet",
                format!("camera {camera_id} track {local_track_id} has no detections"),
            ));
        }
        for d in &detections {
            if d.camera_id != camera_id || d.local_track_id != local_track_id {
                return Err(Error::invalid(
                    "tracklet",
                    format!(
                        "detection of camera {} track {} filed under camera {camera_id} track {local_track_id}",
                        d.camera_id, d.local_track_id
                    ),
                ));
            }
        }
        if let Some(w) = detections.windows(2).find(|w| w[0].frame >= w[1].frame) {
            return Err(Error::invalid(
                "tracklet",
                format!(
                    "camera {camera_id} track {local_track_id}: frames not strictly increasing ({} then {})",
                    w[0].frame, w[1].frame
                ),
            ));
        }
        Ok(Self {
            camera_id,
            local_track_id,
            detections,
        })
    }

    pub fn key(&self) -> TrackletKey {
        TrackletKey {
            camera_id: self.camera_id,
            local_track_id: self.local_track_id,
        }
    }

    pub fn start_frame(&self) -> u32 {
        self.detections[0].frame
    }

    pub fn end_frame(&self) -> u32 {
        self.detections[self.detections.len() - 1].frame
    }

    pub fn len(&self) -> usize {
        self.detections.len()
    }

    pub fn is_empty(&self) -> bool {
        self.detections.is_empty()
    }
}

/// Groups loose detections into tracklets by (camera, local id).
pub fn group_tracklets(detections: impl IntoIterator<Item = Detection>) -> Result<Vec<Tracklet>> {
    let mut groups: BTreeMap<TrackletKey, Vec<Detection>> = BTreeMap::new();
    for d in detections {
        groups.entry(d.tracklet_key()).or_default().push(d);
    }
    groups
        .into_iter()
        .map(|(key, mut dets)| {
            dets.sort_by_key(|d| d.frame);
            Tracklet::new(key.camera_id, key.local_track_id, dets)
        })
        .collect()
}

/// Fused trajectory on the floor.
///
/// Detections are ordered by `(frame, camera_id, local_track_id)`. Before
/// [`dedup_frames`] a frame may hold several detections; afterwards at most
/// one.
#[derive(Debug, Clone, PartialEq)]
pub struct GlobalTrack {
    pub global_id: u32,
    pub members: Vec<TrackletKey>,
    pub detections: Vec<Detection>,
}

impl GlobalTrack {
    pub fn start_frame(&self) -> u32 {
        self.detections.first().map_or(0, |d| d.frame)
    }

    pub fn end_frame(&self) -> u32 {
        self.detections.last().map_or(0, |d| d.frame)
    }

    /// `(frame, position)` per detection, in frame order.
    pub fn timeline(&self) -> Vec<(u32, GlobalPoint)> {
        self.detections.iter().map(|d| (d.frame, d.global_pos)).collect()
    }

    fn sort_detections(&mut self) {
        self.detections
            .sort_by_key(|d| (d.frame, d.camera_id, d.local_track_id));
        self.members.sort();
        self.members.dedup();
    }

    fn order_key(&self) -> (u32, TrackletKey) {
        (
            self.start_frame(),
            self.members.first().copied().unwrap_or(TrackletKey {
                camera_id: u32::MAX,
                local_track_id: u32::MAX,
            }),
        )
    }
}

/// Renumbers tracks from 1 by (start frame, smallest member key).
fn assign_global_ids(tracks: &mut [GlobalTrack]) {
    tracks.sort_by_key(GlobalTrack::order_key);
    for (i, t) in tracks.iter_mut().enumerate() {
        t.global_id = i as u32 + 1;
    }
}

/// Thresholds for track merging. Distances are floor pixels.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FusionConfig {
    pub coordinate_mode: CoordinateMode,
    pub feature_strategy: FeatureStrategy,
    /// Mean distance over overlapping frames must not exceed this.
    pub merge_avg_dist: f64,
    /// Every overlapping frame must be closer than this.
    pub merge_max_dist: f64,
    pub dir_cos_min: f64,
    pub app_sim_min: f64,
    pub app_sim_low: f64,
    pub max_gap_frames: u32,
    pub gap_dist: f64,
    pub similarity: SimilarityParams,
    pub kalman: KalmanParams,
}

impl Default for FusionConfig {
    fn default() -> Self {
        Self {
            coordinate_mode: CoordinateMode::Foot,
            feature_strategy: FeatureStrategy::SimpleAveraging,
            merge_avg_dist: 130.0,
            merge_max_dist: 300.0,
            dir_cos_min: 0.8,
            app_sim_min: 0.85,
            app_sim_low: 0.5,
            max_gap_frames: 10,
            gap_dist: 130.0,
            similarity: SimilarityParams::default(),
            kalman: KalmanParams::default(),
        }
    }
}

impl FusionConfig {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("merge_avg_dist", self.merge_avg_dist),
            ("merge_max_dist", self.merge_max_dist),
            ("gap_dist", self.gap_dist),
        ] {
            if !(v > 0.0) {
                return Err(Error::invalid(name, "must be > 0"));
            }
        }
        for (name, v) in [
            ("dir_cos_min", self.dir_cos_min),
            ("app_sim_min", self.app_sim_min),
            ("app_sim_low", self.app_sim_low),
        ] {
            if !(-1.0..=1.0).contains(&v) {
                return Err(Error::invalid(name, "must lie in [-1, 1]"));
            }
        }
        if self.max_gap_frames < 1 {
            return Err(Error::invalid("max_gap_frames", "must be >= 1"));
        }
        self.similarity.validate()?;
        self.kalman.validate()
    }
}

/// Sets anchor pixel, floor position and image-space motion of every
/// detection.
///
/// Motion is the central difference of anchor positions over the
/// neighbouring detections of the same tracklet (one-sided at the ends),
/// divided by the frame span; single-detection tracklets get none.
pub fn transform_tracklets(
    tracklets: &[Tracklet],
    cameras: &CameraRig,
    mode: CoordinateMode,
) -> Result<Vec<Tracklet>> {
    tracklets
        .iter()
        .map(|t| {
            let cam = cameras.get(t.camera_id)?;
            let mut out = t.clone();
            for d in &mut out.detections {
                d.anchor_px = anchor_point(&d.bbox, mode, cam);
                d.global_pos = cam.to_floor(d.anchor_px)?;
            }
            let n = out.detections.len();
            let motions: Vec<_> = (0..n)
                .map(|i| {
                    if n < 2 {
                        return None;
                    }
                    let lo = i.saturating_sub(1);
                    let hi = (i + 1).min(n - 1);
                    let (a, b) = (&out.detections[lo], &out.detections[hi]);
                    let span = f64::from(b.frame - a.frame);
                    Some((b.anchor_px - a.anchor_px) / span)
                })
                .collect();
            for (d, m) in out.detections.iter_mut().zip(motions) {
                d.motion = m;
            }
            Ok(out)
        })
        .collect()
}

/// For each frame holding several detections keeps the one whose anchor is
/// closest to its own camera's image center; ties go to the lower camera id.
pub fn dedup_frames(track: &GlobalTrack, cameras: &CameraRig) -> Result<GlobalTrack> {
    let mut kept: Vec<Detection> = Vec::with_capacity(track.detections.len());
    let mut best_radius = f64::INFINITY;
    for d in &track.detections {
        let cam = cameras.get(d.camera_id)?;
        let radius = (d.anchor_px - cam.image_center).norm();
        match kept.last() {
            Some(prev) if prev.frame == d.frame => {
                let better = radius < best_radius
                    || (radius == best_radius
                        && (d.camera_id, d.local_track_id) < (prev.camera_id, prev.local_track_id));
                if better {
                    *kept.last_mut().expect("non-empty") = d.clone();
                    best_radius = radius;
                }
            }
            _ => {
                kept.push(d.clone());
                best_radius = radius;
            }
        }
    }
    Ok(GlobalTrack {
        global_id: track.global_id,
        members: track.members.clone(),
        detections: kept,
    })
}

/// Runs the complete fusion pipeline.
pub fn fuse(tracklets: &[Tracklet], cameras: &CameraRig, cfg: &FusionConfig) -> Result<Vec<GlobalTrack>> {
    cfg.validate()?;
    let transformed = transform_tracklets(tracklets, cameras, cfg.coordinate_mode)?;
    let merged = merge_overlaps(&transformed, cfg)?;
    let deduped = merged
        .iter()
        .map(|t| dedup_frames(t, cameras))
        .collect::<Result<Vec<_>>>()?;
    merge_gaps(deduped, cfg)
}
