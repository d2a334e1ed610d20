use std::collections::HashMap;

use super::{check_ground_truth, maximize, similarity_matrix, LabeledTimeline, MatchingParams};
use crate::Result;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IdentityResult {
    pub idf1: f64,
    pub idtp: usize,
    pub idfp: usize,
    pub idfn: usize,
}

/// Identity F1 under the best global one-to-one mapping between
/// ground-truth and predicted identities.
///
/// A frame counts toward a pairing when both identities are present and
/// their similarity is positive.
pub fn idf1(gt: &LabeledTimeline, pred: &LabeledTimeline, params: &MatchingParams) -> Result<IdentityResult> {
    check_ground_truth(gt)?;
    let gt_ids = gt.identities();
    let pred_ids = pred.identities();
    let gt_index: HashMap<u64, usize> = gt_ids.iter().enumerate().map(|(i, id)| (*id, i)).collect();
    let pred_index: HashMap<u64, usize> = pred_ids.iter().enumerate().map(|(i, id)| (*id, i)).collect();

    let mut overlap = vec![vec![0.0f64; pred_ids.len()]; gt_ids.len()];
    for frame in LabeledTimeline::joint_frames(gt, pred) {
        let g = gt.get(frame);
        let p = pred.get(frame);
        let sim = similarity_matrix(g, p, params);
        for (i, (gid, _)) in g.iter().enumerate() {
            for (j, (pid, _)) in p.iter().enumerate() {
                if sim[i][j] > 0.0 {
                    overlap[gt_index[gid]][pred_index[pid]] += 1.0;
                }
            }
        }
    }

    let idtp = maximize(&overlap).total_cost.round() as usize;
    let (n_gt, n_pred) = (gt.num_points(), pred.num_points());
    let (idfn, idfp) = (n_gt - idtp, n_pred - idtp);
    let idf1 = 100.0 * 2.0 * idtp as f64 / (n_gt + n_pred) as f64;
    Ok(IdentityResult { idf1, idtp, idfp, idfn })
}
