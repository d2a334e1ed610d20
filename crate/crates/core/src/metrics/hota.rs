use std::collections::HashMap;

use super::{check_ground_truth, maximize, similarity_matrix, LabeledTimeline, MatchingParams};
use crate::Result;

#[derive(Debug, Clone, PartialEq)]
pub struct HotaResult {
    pub hota: f64,
    pub deta: f64,
    pub assa: f64,
    /// `(alpha, HOTA_alpha)`, 0-100 scale.
    pub per_alpha: Vec<(f64, f64)>,
    pub deta_alpha: Vec<f64>,
    pub assa_alpha: Vec<f64>,
}

/// Higher Order Tracking Accuracy averaged over the alpha grid.
///
/// Matching is done once per frame by maximizing
/// `global_alignment(gt_id, pred_id) * similarity`, where the global
/// alignment is the identity-level Jaccard of soft per-frame matches. A
/// matched pair counts as a true positive at threshold `alpha` when its
/// similarity reaches `alpha`.
pub fn hota(gt: &LabeledTimeline, pred: &LabeledTimeline, params: &MatchingParams) -> Result<HotaResult> {
    check_ground_truth(gt)?;
    const EPS: f64 = f64::EPSILON;

    let gt_ids = gt.identities();
    let pred_ids = pred.identities();
    let gi: HashMap<u64, usize> = gt_ids.iter().enumerate().map(|(i, id)| (*id, i)).collect();
    let pi: HashMap<u64, usize> = pred_ids.iter().enumerate().map(|(i, id)| (*id, i)).collect();
    let (ng, np) = (gt_ids.len(), pred_ids.len());
    let frames = LabeledTimeline::joint_frames(gt, pred);

    // identity-level soft alignment
    let mut potential = vec![vec![0.0f64; np]; ng];
    let mut gt_count = vec![0.0f64; ng];
    let mut pred_count = vec![0.0f64; np];
    for &frame in &frames {
        let g = gt.get(frame);
        let p = pred.get(frame);
        let sim = similarity_matrix(g, p, params);
        let row_sum: Vec<f64> = sim.iter().map(|r| r.iter().sum()).collect();
        let col_sum: Vec<f64> = (0..p.len()).map(|j| sim.iter().map(|r| r[j]).sum()).collect();
        for (i, (gid, _)) in g.iter().enumerate() {
            for (j, (pid, _)) in p.iter().enumerate() {
                let denom = row_sum[i] + col_sum[j] - sim[i][j];
                if denom > EPS {
                    potential[gi[gid]][pi[pid]] += sim[i][j] / denom;
                }
            }
        }
        for (gid, _) in g {
            gt_count[gi[gid]] += 1.0;
        }
        for (pid, _) in p {
            pred_count[pi[pid]] += 1.0;
        }
    }
    let alignment: Vec<Vec<f64>> = (0..ng)
        .map(|i| {
            (0..np)
                .map(|j| potential[i][j] / (gt_count[i] + pred_count[j] - potential[i][j]))
                .collect()
        })
        .collect();

    let n_alpha = params.alpha_grid.len();
    let mut tp = vec![0usize; n_alpha];
    let mut fn_ = vec![0usize; n_alpha];
    let mut fp = vec![0usize; n_alpha];
    let mut matches = vec![vec![vec![0.0f64; np]; ng]; n_alpha];

    for &frame in &frames {
        let g = gt.get(frame);
        let p = pred.get(frame);
        let sim = similarity_matrix(g, p, params);
        let score: Vec<Vec<f64>> = g
            .iter()
            .enumerate()
            .map(|(i, (gid, _))| {
                p.iter()
                    .enumerate()
                    .map(|(j, (pid, _))| alignment[gi[gid]][pi[pid]] * sim[i][j])
                    .collect()
            })
            .collect();
        let assignment = maximize(&score);
        for (a, &alpha) in params.alpha_grid.iter().enumerate() {
            let mut matched = 0;
            for &(i, j) in &assignment.pairs {
                if sim[i][j] >= alpha - EPS {
                    matched += 1;
                    matches[a][gi[&g[i].0]][pi[&p[j].0]] += 1.0;
                }
            }
            tp[a] += matched;
            fn_[a] += g.len() - matched;
            fp[a] += p.len() - matched;
        }
    }

    let mut per_alpha = Vec::with_capacity(n_alpha);
    let mut deta_alpha = Vec::with_capacity(n_alpha);
    let mut assa_alpha = Vec::with_capacity(n_alpha);
    for (a, &alpha) in params.alpha_grid.iter().enumerate() {
        let deta = tp[a] as f64 / ((tp[a] + fn_[a] + fp[a]).max(1)) as f64;
        let mut ass_sum = 0.0;
        for i in 0..ng {
            for j in 0..np {
                let m = matches[a][i][j];
                if m > 0.0 {
                    ass_sum += m * m / (gt_count[i] + pred_count[j] - m).max(1.0);
                }
            }
        }
        let assa = ass_sum / (tp[a].max(1)) as f64;
        deta_alpha.push(100.0 * deta);
        assa_alpha.push(100.0 * assa);
        per_alpha.push((alpha, 100.0 * (deta * assa).sqrt()));
    }

    let mean = |v: &mut dyn Iterator<Item = f64>| v.sum::<f64>() / n_alpha as f64;
    Ok(HotaResult {
        hota: mean(&mut per_alpha.iter().map(|x| x.1)),
        deta: mean(&mut deta_alpha.iter().copied()),
        assa: mean(&mut assa_alpha.iter().copied()),
        per_alpha,
        deta_alpha,
        assa_alpha,
    })
}
