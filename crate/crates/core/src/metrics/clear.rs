use std::collections::HashMap;

use super::{check_ground_truth, maximize, similarity_matrix, LabeledTimeline, MatchingParams};
use crate::Result;

/// Bonus that makes continuing last frame's correspondence dominate any
/// similarity difference.
const CONTINUITY_BONUS: f64 = 1000.0;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ClearResult {
    pub mota: f64,
    pub tp: usize,
    pub fp: usize,
    pub fn_: usize,
    pub idsw: usize,
}

/// CLEAR MOT accuracy, unclamped (may be negative).
///
/// Per frame, correspondences from the previous frame that are still inside
/// the similarity gate are preferred; the rest is matched by maximum total
/// similarity. An identity switch is counted when a ground-truth identity is
/// matched to a prediction other than the one it was last matched to.
pub fn mota(gt: &LabeledTimeline, pred: &LabeledTimeline, params: &MatchingParams) -> Result<ClearResult> {
    check_ground_truth(gt)?;
    let mut prev_frame: HashMap<u64, u64> = HashMap::new();
    let mut last_match: HashMap<u64, u64> = HashMap::new();
    let (mut tp, mut fp, mut fn_, mut idsw) = (0usize, 0usize, 0usize, 0usize);

    for frame in LabeledTimeline::joint_frames(gt, pred) {
        let g = gt.get(frame);
        let p = pred.get(frame);
        let sim = similarity_matrix(g, p, params);
        let score: Vec<Vec<f64>> = g
            .iter()
            .enumerate()
            .map(|(i, (gid, _))| {
                p.iter()
                    .enumerate()
                    .map(|(j, (pid, _))| {
                        if sim[i][j] <= 0.0 {
                            0.0
                        } else if prev_frame.get(gid) == Some(pid) {
                            CONTINUITY_BONUS + sim[i][j]
                        } else {
                            sim[i][j]
                        }
                    })
                    .collect()
            })
            .collect();

        let mut current = HashMap::new();
        for (i, j) in maximize(&score).pairs {
            if sim[i][j] <= 0.0 {
                continue;
            }
            let (gid, pid) = (g[i].0, p[j].0);
            if last_match.get(&gid).is_some_and(|&prev| prev != pid) {
                idsw += 1;
            }
            last_match.insert(gid, pid);
            current.insert(gid, pid);
        }
        let matched = current.len();
        tp += matched;
        fn_ += g.len() - matched;
        fp += p.len() - matched;
        prev_frame = current;
    }

    let gt_count = gt.num_points() as f64;
    let mota = 100.0 * (1.0 - (fn_ + fp + idsw) as f64 / gt_count);
    Ok(ClearResult { mota, tp, fp, fn_, idsw })
}
