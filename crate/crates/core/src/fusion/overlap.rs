//! Duplicate removal across overlapping camera views.

use std::collections::BTreeMap;

use petgraph::unionfind::UnionFind;
use rayon::prelude::*;

use super::{assign_global_ids, FusionConfig, GlobalTrack, Tracklet};
use crate::appearance::track_similarity;
use crate::fusion::Detection;
use crate::Result;

/// Detection pairs of `a` and `b` that share a frame, in frame order.
fn overlapping<'a>(a: &'a Tracklet, b: &'a Tracklet) -> Vec<(&'a Detection, &'a Detection)> {
    let (mut i, mut j) = (0, 0);
    let mut out = Vec::new();
    while i < a.detections.len() && j < b.detections.len() {
        let (p, q) = (&a.detections[i], &b.detections[j]);
        match p.frame.cmp(&q.frame) {
            std::cmp::Ordering::Less => i += 1,
            std::cmp::Ordering::Greater => j += 1,
            std::cmp::Ordering::Equal => {
                out.push((p, q));
                i += 1;
                j += 1;
            }
        }
    }
    out
}

/// Whether two transformed tracklets are the same person seen by two
/// cameras at once.
///
/// All gates must pass: different cameras, at least one shared frame, mean
/// floor distance over shared frames within `merge_avg_dist`, every shared
/// frame closer than `merge_max_dist`, start-to-end displacement cosine over
/// the shared range above `dir_cos_min`, and (when a feature strategy is
/// active and both tracks carry features) appearance similarity above
/// `app_sim_min`. A zero displacement fails the direction gate.
pub fn overlap_merge_test(a: &Tracklet, b: &Tracklet, cfg: &FusionConfig) -> Result<bool> {
    if a.camera_id == b.camera_id {
        return Ok(false);
    }
    let shared = overlapping(a, b);
    let Some((first, last)) = shared.first().zip(shared.last()) else {
        return Ok(false);
    };

    let mut sum = 0.0;
    for (p, q) in &shared {
        let d = p.global_pos.distance(&q.global_pos);
        if !(d < cfg.merge_max_dist) {
            return Ok(false);
        }
        sum += d;
    }
    if sum / shared.len() as f64 > cfg.merge_avg_dist {
        return Ok(false);
    }

    let disp_a = last.0.global_pos.to_vector() - first.0.global_pos.to_vector();
    let disp_b = last.1.global_pos.to_vector() - first.1.global_pos.to_vector();
    let denom = disp_a.norm() * disp_b.norm();
    if denom == 0.0 || !(disp_a.dot(&disp_b) / denom > cfg.dir_cos_min) {
        return Ok(false);
    }

    let sim = track_similarity(&a.detections, &b.detections, cfg.feature_strategy, &cfg.similarity)?;
    Ok(sim.is_none_or(|s| s > cfg.app_sim_min))
}

/// Groups tracklets into global tracks: every cross-camera pair passing
/// [`overlap_merge_test`] is joined, and connected components become tracks.
/// Ids follow earliest start frame, then smallest `(camera, local id)`.
pub fn merge_overlaps(tracklets: &[Tracklet], cfg: &FusionConfig) -> Result<Vec<GlobalTrack>> {
    let n = tracklets.len();
    let candidates: Vec<(usize, usize)> = (0..n)
        .flat_map(|i| (i + 1..n).map(move |j| (i, j)))
        .filter(|&(i, j)| {
            let (a, b) = (&tracklets[i], &tracklets[j]);
            a.camera_id != b.camera_id && a.start_frame() <= b.end_frame() && b.start_frame() <= a.end_frame()
        })
        .collect();

    let passing = candidates
        .par_iter()
        .map(|&(i, j)| overlap_merge_test(&tracklets[i], &tracklets[j], cfg).map(|ok| ok.then_some((i, j))))
        .collect::<Result<Vec<_>>>()?;

    let mut uf = UnionFind::<usize>::new(n);
    for (i, j) in passing.into_iter().flatten() {
        uf.union(i, j);
    }
    let mut components: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for (i, root) in uf.into_labeling().into_iter().enumerate() {
        components.entry(root).or_default().push(i);
    }

    let mut tracks: Vec<GlobalTrack> = components
        .into_values()
        .map(|comp| {
            let mut t = GlobalTrack {
                global_id: 0,
                members: comp.iter().map(|&i| tracklets[i].key()).collect(),
                detections: comp
                    .iter()
                    .flat_map(|&i| tracklets[i].detections.iter().cloned())
                    .collect(),
            };
            t.sort_detections();
            t
        })
        .collect();
    assign_global_ids(&mut tracks);
    Ok(tracks)
}
