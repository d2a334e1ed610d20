//! Joining temporally disjoint fragments with Kalman prediction.

use nalgebra::Vector2;
use rayon::prelude::*;

use super::kalman::predict_timeline;
use super::{assign_global_ids, FusionConfig, GlobalTrack};
use crate::appearance::track_similarity;
use crate::Result;

const INITIAL_DIRECTION_WINDOW: usize = 5;

/// Distance threshold for a gap merge given the appearance similarity:
/// doubled above `app_sim_min`, halved below `app_sim_low`, unchanged when
/// there is no similarity.
pub fn gap_threshold(similarity: Option<f64>, cfg: &FusionConfig) -> f64 {
    match similarity {
        Some(s) if s > cfg.app_sim_min => 2.0 * cfg.gap_dist,
        Some(s) if s < cfg.app_sim_low => cfg.gap_dist / 2.0,
        _ => cfg.gap_dist,
    }
}

/// Displacement over the first `min(5, len)` points of a track.
pub fn initial_direction(track: &GlobalTrack) -> Vector2<f64> {
    let dets = &track.detections;
    if dets.is_empty() {
        return Vector2::zeros();
    }
    let k = dets.len().min(INITIAL_DIRECTION_WINDOW);
    dets[k - 1].global_pos.to_vector() - dets[0].global_pos.to_vector()
}

/// Predicted-position distance from `a`'s end to `b`'s start if the pair
/// passes every gap gate, `None` otherwise.
fn gap_candidate(a: &GlobalTrack, b: &GlobalTrack, cfg: &FusionConfig) -> Result<Option<f64>> {
    if a.detections.is_empty() || b.detections.is_empty() || a.end_frame() >= b.start_frame() {
        return Ok(None);
    }
    let gap = b.start_frame() - a.end_frame();
    if gap >= cfg.max_gap_frames {
        return Ok(None);
    }

    let pred = predict_timeline(&a.timeline(), gap, &cfg.kalman);
    let dir_b = initial_direction(b);
    let denom = pred.velocity.norm() * dir_b.norm();
    if denom == 0.0 || !(pred.velocity.dot(&dir_b) / denom > cfg.dir_cos_min) {
        return Ok(None);
    }

    let sim = track_similarity(&a.detections, &b.detections, cfg.feature_strategy, &cfg.similarity)?;
    let threshold = gap_threshold(sim, cfg);
    let dist = pred.position.distance(&b.detections[0].global_pos);
    Ok((dist < threshold).then_some(dist))
}

/// Whether `b` continues `a` after a short gap.
///
/// Requires `a` to end before `b` starts with a gap under `max_gap_frames`,
/// the Kalman-predicted velocity of `a` to point along `b`'s initial
/// direction (cosine above `dir_cos_min`), and the predicted position to lie
/// within the similarity-dependent [`gap_threshold`] of `b`'s first point.
pub fn gap_merge_test(a: &GlobalTrack, b: &GlobalTrack, cfg: &FusionConfig) -> Result<bool> {
    gap_candidate(a, b, cfg).map(|d| d.is_some())
}

fn concat(tracks: &[GlobalTrack], chain: &[usize]) -> GlobalTrack {
    let mut out = GlobalTrack {
        global_id: tracks[chain[0]].global_id,
        members: Vec::new(),
        detections: Vec::new(),
    };
    for &i in chain {
        out.members.extend_from_slice(&tracks[i].members);
        out.detections.extend(tracks[i].detections.iter().cloned());
    }
    out.sort_detections();
    out
}

/// Greedily chains fragments until no more links form.
///
/// Tracks are visited in ascending end frame. Each picks, among passing
/// successors that have no predecessor yet, the one with the smallest
/// predicted-position distance. Chains are then concatenated and the
/// procedure repeats on the merged tracks.
pub fn merge_gaps(mut tracks: Vec<GlobalTrack>, cfg: &FusionConfig) -> Result<Vec<GlobalTrack>> {
    assign_global_ids(&mut tracks);
    loop {
        let n = tracks.len();
        let pairs: Vec<(usize, usize)> = (0..n)
            .flat_map(|a| (0..n).map(move |b| (a, b)))
            .filter(|&(a, b)| {
                let (ta, tb) = (&tracks[a], &tracks[b]);
                a != b
                    && !ta.detections.is_empty()
                    && !tb.detections.is_empty()
                    && tb.start_frame() > ta.end_frame()
                    && tb.start_frame() - ta.end_frame() < cfg.max_gap_frames
            })
            .collect();
        let scored = pairs
            .par_iter()
            .map(|&(a, b)| gap_candidate(&tracks[a], &tracks[b], cfg).map(|d| d.map(|d| (a, b, d))))
            .collect::<Result<Vec<_>>>()?;

        let mut options: Vec<Vec<(usize, f64)>> = vec![Vec::new(); n];
        for (a, b, d) in scored.into_iter().flatten() {
            options[a].push((b, d));
        }

        let mut order: Vec<usize> = (0..n).collect();
        order.sort_by_key(|&i| (tracks[i].end_frame(), tracks[i].global_id));
        let mut successor: Vec<Option<usize>> = vec![None; n];
        let mut has_pred = vec![false; n];
        let mut linked = false;
        for &a in &order {
            let best = options[a]
                .iter()
                .filter(|(b, _)| !has_pred[*b])
                .min_by(|x, y| {
                    x.1.total_cmp(&y.1)
                        .then_with(|| tracks[x.0].start_frame().cmp(&tracks[y.0].start_frame()))
                        .then_with(|| tracks[x.0].global_id.cmp(&tracks[y.0].global_id))
                });
            if let Some(&(b, _)) = best {
                successor[a] = Some(b);
                has_pred[b] = true;
                linked = true;
            }
        }
        if !linked {
            return Ok(tracks);
        }

        let mut merged = Vec::new();
        for head in (0..n).filter(|&i| !has_pred[i]) {
            let mut chain = vec![head];
            let mut cur = head;
            while let Some(next) = successor[cur] {
                chain.push(next);
                cur = next;
            }
            merged.push(concat(&tracks, &chain));
        }
        assign_global_ids(&mut merged);
        tracks = merged;
    }
}
