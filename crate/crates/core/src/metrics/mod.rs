//! HOTA, IDF1 and MOTA for point-valued floor tracks.
//!
//! Box IoU does not apply to floor points, so the similarity between a
//! ground-truth point and a predicted point is `max(0, 1 - d / sim_dist_max)`.
//! Otherwise the procedures follow the usual CLEAR, identity and HOTA
//! definitions, scaled to `[0, 100]`.

mod clear;
mod hota;
mod hungarian;
mod identity;

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::fusion::GlobalTrack;
use crate::geometry::GlobalPoint;
use crate::{Error, Result};

pub use clear::{mota, ClearResult};
pub use hota::{hota, HotaResult};
pub use hungarian::{hungarian, maximize, Assignment};
pub use identity::{idf1, IdentityResult};

/// Per-frame labelled points.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct LabeledTimeline {
    frames: BTreeMap<u32, Vec<(u64, GlobalPoint)>>,
}

impl LabeledTimeline {
    pub fn new() -> Self {
        Self::default()
    }

    /// Adds a point; an identity may appear at most once per frame.
    pub fn insert(&mut self, frame: u32, id: u64, pos: GlobalPoint) -> Result<()> {
        let entries = self.frames.entry(frame).or_default();
        if entries.iter().any(|(other, _)| *other == id) {
            return Err(Error::invalid(
                "timeline",
                format!("identity {id} appears twice in frame {frame}"),
            ));
        }
        entries.push((id, pos));
        Ok(())
    }

    pub fn from_points(points: impl IntoIterator<Item = (u32, u64, GlobalPoint)>) -> Result<Self> {
        let mut t = Self::new();
        for (f, id, p) in points {
            t.insert(f, id, p)?;
        }
        Ok(t)
    }

    pub fn from_tracks(tracks: &[GlobalTrack]) -> Result<Self> {
        Self::from_points(tracks.iter().flat_map(|t| {
            t.detections
                .iter()
                .map(move |d| (d.frame, u64::from(t.global_id), d.global_pos))
        }))
    }

    pub fn frames(&self) -> impl Iterator<Item = (u32, &[(u64, GlobalPoint)])> {
        self.frames.iter().map(|(f, v)| (*f, v.as_slice()))
    }

    pub fn get(&self, frame: u32) -> &[(u64, GlobalPoint)] {
        self.frames.get(&frame).map_or(&[], Vec::as_slice)
    }

    pub fn num_points(&self) -> usize {
        self.frames.values().map(Vec::len).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.num_points() == 0
    }

    /// Distinct identities in ascending order.
    pub fn identities(&self) -> Vec<u64> {
        let mut ids: Vec<u64> = self.frames.values().flatten().map(|(id, _)| *id).collect();
        ids.sort_unstable();
        ids.dedup();
        ids
    }

    pub fn map_ids(&self, f: impl Fn(u64) -> u64) -> Result<Self> {
        Self::from_points(
            self.frames
                .iter()
                .flat_map(|(fr, v)| v.iter().map(|(id, p)| (*fr, f(*id), *p)))
                .collect::<Vec<_>>(),
        )
    }

    pub fn map_points(&self, f: impl Fn(GlobalPoint) -> GlobalPoint) -> Self {
        Self {
            frames: self
                .frames
                .iter()
                .map(|(fr, v)| (*fr, v.iter().map(|(id, p)| (*id, f(*p))).collect()))
                .collect(),
        }
    }

    /// Union of frames of two timelines, ascending.
    pub(crate) fn joint_frames(a: &Self, b: &Self) -> Vec<u32> {
        let mut frames: Vec<u32> = a.frames.keys().chain(b.frames.keys()).copied().collect();
        frames.sort_unstable();
        frames.dedup();
        frames
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MatchingParams {
    /// Distance at which point similarity drops to zero, floor px.
    pub sim_dist_max: f64,
    pub alpha_grid: Vec<f64>,
}

impl Default for MatchingParams {
    fn default() -> Self {
        Self {
            sim_dist_max: 260.0,
            alpha_grid: (1..=19).map(|k| f64::from(k) / 20.0).collect(),
        }
    }
}

impl MatchingParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.sim_dist_max > 0.0) {
            return Err(Error::invalid("sim_dist_max", "must be > 0"));
        }
        if self.alpha_grid.is_empty() {
            return Err(Error::invalid("alpha_grid", "must not be empty"));
        }
        let in_range = self.alpha_grid.iter().all(|a| *a > 0.0 && *a < 1.0);
        let ascending = self.alpha_grid.windows(2).all(|w| w[0] < w[1]);
        if !in_range || !ascending {
            return Err(Error::invalid("alpha_grid", "must be strictly ascending within (0, 1)"));
        }
        Ok(())
    }
}

pub fn point_similarity(a: &GlobalPoint, b: &GlobalPoint, params: &MatchingParams) -> f64 {
    (1.0 - a.distance(b) / params.sim_dist_max).max(0.0)
}

/// Similarity matrix between the points of two frames.
pub(crate) fn similarity_matrix(
    gt: &[(u64, GlobalPoint)],
    pred: &[(u64, GlobalPoint)],
    params: &MatchingParams,
) -> Vec<Vec<f64>> {
    gt.iter()
        .map(|(_, g)| pred.iter().map(|(_, p)| point_similarity(g, p, params)).collect())
        .collect()
}

pub(crate) fn check_ground_truth(gt: &LabeledTimeline) -> Result<()> {
    if gt.is_empty() {
        return Err(Error::EmptyGroundTruth);
    }
    Ok(())
}

/// All metrics for one (ground truth, prediction) pair.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub hota: f64,
    pub idf1: f64,
    pub mota: f64,
    pub deta: f64,
    pub assa: f64,
    pub fp: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
    pub idsw: usize,
    /// `(alpha, HOTA_alpha)` on the 0-100 scale.
    pub per_alpha: Vec<(f64, f64)>,
}

impl EvalReport {
    /// Plain `key=value` lines.
    pub fn to_key_value(&self) -> String {
        let mut s = String::new();
        for (k, v) in [
            ("hota", self.hota),
            ("idf1", self.idf1),
            ("mota", self.mota),
            ("deta", self.deta),
            ("assa", self.assa),
        ] {
            s.push_str(&format!("{k}={v:.6}\n"));
        }
        s.push_str(&format!("fp={}\nfn={}\nidsw={}\n", self.fp, self.fn_, self.idsw));
        for (alpha, v) in &self.per_alpha {
            s.push_str(&format!("hota_alpha_{alpha:.2}={v:.6}\n"));
        }
        s
    }
}

pub fn evaluate(gt: &LabeledTimeline, pred: &LabeledTimeline, params: &MatchingParams) -> Result<EvalReport> {
    params.validate()?;
    let clear = mota(gt, pred, params)?;
    let id = idf1(gt, pred, params)?;
    let h = hota(gt, pred, params)?;
    Ok(EvalReport {
        hota: h.hota,
        idf1: id.idf1,
        mota: clear.mota,
        deta: h.deta,
        assa: h.assa,
        fp: clear.fp,
        fn_: clear.fn_,
        idsw: clear.idsw,
        per_alpha: h.per_alpha,
    })
}
