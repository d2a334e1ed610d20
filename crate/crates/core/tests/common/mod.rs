//! Independent reference implementations and fixtures shared by the
//! integration tests. Everything here enumerates instead of optimizing, so it
//! is only usable on tiny inputs.
#![allow(dead_code)]

use std::collections::HashMap;

use nalgebra::Vector2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use trackfuse::appearance::{FeatureVec, SimilarityParams};
use trackfuse::fusion::Detection;
use trackfuse::geometry::{BBox, GlobalPoint};
use trackfuse::metrics::{LabeledTimeline, MatchingParams};

pub const TOL: f64 = 1e-9;

// ---------------------------------------------------------------- metrics

fn sim(a: &GlobalPoint, b: &GlobalPoint, params: &MatchingParams) -> f64 {
    let d = ((a.x - b.x).powi(2) + (a.y - b.y).powi(2)).sqrt();
    (1.0 - d / params.sim_dist_max).max(0.0)
}

fn frames_of(gt: &LabeledTimeline, pred: &LabeledTimeline) -> Vec<u32> {
    let mut f: Vec<u32> = gt.frames().map(|x| x.0).chain(pred.frames().map(|x| x.0)).collect();
    f.sort_unstable();
    f.dedup();
    f
}

/// Every injective partial matching of `n` rows into `m` columns that only
/// uses pairs allowed by `ok`.
fn all_matchings(n: usize, m: usize, ok: &dyn Fn(usize, usize) -> bool) -> Vec<Vec<(usize, usize)>> {
    fn rec(
        i: usize,
        n: usize,
        m: usize,
        used: &mut Vec<bool>,
        cur: &mut Vec<(usize, usize)>,
        ok: &dyn Fn(usize, usize) -> bool,
        out: &mut Vec<Vec<(usize, usize)>>,
    ) {
        if i == n {
            out.push(cur.clone());
            return;
        }
        rec(i + 1, n, m, used, cur, ok, out);
        for j in 0..m {
            if !used[j] && ok(i, j) {
                used[j] = true;
                cur.push((i, j));
                rec(i + 1, n, m, used, cur, ok, out);
                cur.pop();
                used[j] = false;
            }
        }
    }
    let mut out = Vec::new();
    rec(0, n, m, &mut vec![false; m], &mut Vec::new(), ok, &mut out);
    out
}

#[derive(Debug, Clone, Copy)]
pub struct OracleClear {
    pub mota: f64,
    pub fp: usize,
    pub fn_: usize,
    pub idsw: usize,
}

/// CLEAR walk: correspondences of the previous frame that are still in the
/// gate are kept first, then total similarity decides; a switch is a
/// ground-truth id matched to something other than its last partner.
pub fn oracle_mota(gt: &LabeledTimeline, pred: &LabeledTimeline, params: &MatchingParams) -> OracleClear {
    let mut prev: HashMap<u64, u64> = HashMap::new();
    let mut last: HashMap<u64, u64> = HashMap::new();
    let (mut fp, mut fn_, mut idsw) = (0, 0, 0);
    for f in frames_of(gt, pred) {
        let (g, p) = (gt.get(f), pred.get(f));
        let s = |i: usize, j: usize| sim(&g[i].1, &p[j].1, params);
        let keeps = |i: usize, j: usize| prev.get(&g[i].0) == Some(&p[j].0);
        let best = all_matchings(g.len(), p.len(), &|i, j| s(i, j) > 0.0)
            .into_iter()
            .max_by(|a, b| {
                let key = |m: &Vec<(usize, usize)>| {
                    (m.iter().filter(|&&(i, j)| keeps(i, j)).count(), m.iter().map(|&(i, j)| s(i, j)).sum::<f64>())
                };
                let (ka, kb) = (key(a), key(b));
                ka.0.cmp(&kb.0).then(ka.1.total_cmp(&kb.1))
            })
            .unwrap_or_default();
        let mut now = HashMap::new();
        for &(i, j) in &best {
            if let Some(&l) = last.get(&g[i].0) {
                if l != p[j].0 {
                    idsw += 1;
                }
            }
            last.insert(g[i].0, p[j].0);
            now.insert(g[i].0, p[j].0);
        }
        fn_ += g.len() - best.len();
        fp += p.len() - best.len();
        prev = now;
    }
    let total = gt.num_points() as f64;
    OracleClear {
        mota: 100.0 * (1.0 - (fp + fn_ + idsw) as f64 / total),
        fp,
        fn_,
        idsw,
    }
}

/// Best identity mapping by trying every injective map of gt ids to pred ids.
pub fn oracle_idf1(gt: &LabeledTimeline, pred: &LabeledTimeline, params: &MatchingParams) -> f64 {
    let (gi, pi) = (gt.identities(), pred.identities());
    let mut count = vec![vec![0usize; pi.len()]; gi.len()];
    for f in frames_of(gt, pred) {
        for (a, ga) in gt.get(f) {
            for (b, pb) in pred.get(f) {
                if sim(ga, pb, params) > 0.0 {
                    let i = gi.iter().position(|x| x == a).unwrap();
                    let j = pi.iter().position(|x| x == b).unwrap();
                    count[i][j] += 1;
                }
            }
        }
    }
    let idtp = all_matchings(gi.len(), pi.len(), &|_, _| true)
        .iter()
        .map(|m| m.iter().map(|&(i, j)| count[i][j]).sum::<usize>())
        .max()
        .unwrap_or(0);
    100.0 * 2.0 * idtp as f64 / (gt.num_points() + pred.num_points()) as f64
}

/// HOTA with identity alignment from soft per-frame matches and per-frame
/// matching by exhaustive search over `alignment * similarity`.
pub fn oracle_hota(gt: &LabeledTimeline, pred: &LabeledTimeline, params: &MatchingParams) -> f64 {
    let eps = f64::EPSILON;
    let (gi, pi) = (gt.identities(), pred.identities());
    let idx = |ids: &[u64], x: u64| ids.iter().position(|&y| y == x).unwrap();
    let frames = frames_of(gt, pred);

    let mut pot = vec![vec![0.0; pi.len()]; gi.len()];
    let mut gcount = vec![0.0; gi.len()];
    let mut pcount = vec![0.0; pi.len()];
    for &f in &frames {
        let (g, p) = (gt.get(f), pred.get(f));
        let s: Vec<Vec<f64>> = g.iter().map(|a| p.iter().map(|b| sim(&a.1, &b.1, params)).collect()).collect();
        for i in 0..g.len() {
            for j in 0..p.len() {
                let row: f64 = s[i].iter().sum();
                let col: f64 = s.iter().map(|r| r[j]).sum();
                let denom = row + col - s[i][j];
                if denom > eps {
                    pot[idx(&gi, g[i].0)][idx(&pi, p[j].0)] += s[i][j] / denom;
                }
            }
        }
        g.iter().for_each(|a| gcount[idx(&gi, a.0)] += 1.0);
        p.iter().for_each(|b| pcount[idx(&pi, b.0)] += 1.0);
    }
    let align = |i: usize, j: usize| pot[i][j] / (gcount[i] + pcount[j] - pot[i][j]);

    let mut total = 0.0;
    for &alpha in &params.alpha_grid {
        let (mut tp, mut fnc, mut fpc) = (0usize, 0usize, 0usize);
        let mut matches = vec![vec![0.0; pi.len()]; gi.len()];
        for &f in &frames {
            let (g, p) = (gt.get(f), pred.get(f));
            let s = |i: usize, j: usize| sim(&g[i].1, &p[j].1, params);
            let score = |i: usize, j: usize| align(idx(&gi, g[i].0), idx(&pi, p[j].0)) * s(i, j);
            let best = all_matchings(g.len(), p.len(), &|i, j| score(i, j) > 0.0)
                .into_iter()
                .max_by(|a, b| {
                    let t = |m: &Vec<(usize, usize)>| m.iter().map(|&(i, j)| score(i, j)).sum::<f64>();
                    t(a).total_cmp(&t(b))
                })
                .unwrap_or_default();
            let hits: Vec<_> = best.into_iter().filter(|&(i, j)| s(i, j) >= alpha - eps).collect();
            for &(i, j) in &hits {
                matches[idx(&gi, g[i].0)][idx(&pi, p[j].0)] += 1.0;
            }
            tp += hits.len();
            fnc += g.len() - hits.len();
            fpc += p.len() - hits.len();
        }
        let deta = tp as f64 / (tp + fnc + fpc).max(1) as f64;
        let mut ass = 0.0;
        for i in 0..gi.len() {
            for j in 0..pi.len() {
                let m = matches[i][j];
                if m > 0.0 {
                    ass += m * m / (gcount[i] + pcount[j] - m).max(1.0);
                }
            }
        }
        let assa = ass / tp.max(1) as f64;
        total += (deta * assa).sqrt();
    }
    100.0 * total / params.alpha_grid.len() as f64
}

/// What a tracker reports for one ground-truth point.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Event {
    Absent,
    Hit,
    Miss,
    Swap,
    HitWithFalsePositive,
    Far,
}

pub const EVENTS: [Event; 6] = [
    Event::Absent,
    Event::Hit,
    Event::Miss,
    Event::Swap,
    Event::HitWithFalsePositive,
    Event::Far,
];

/// Builds a (gt, pred) pair from one event per (frame, identity). Ground
/// truth identities sit 150 px apart so neighbours compete for matches;
/// predictions get a random offset of up to 100 px so ties do not occur.
pub fn build_case(n_ids: usize, events: &[Event], seed: u64) -> Option<(LabeledTimeline, LabeledTimeline)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n_frames = events.len() / n_ids;
    let mut gt = LabeledTimeline::new();
    let mut pred = LabeledTimeline::new();
    for f in 0..n_frames {
        let mut used = Vec::new();
        for k in 0..n_ids {
            let ev = events[f * n_ids + k];
            if ev == Event::Absent {
                continue;
            }
            let truth = GlobalPoint::new(150.0 * k as f64, 12.0 * f as f64);
            gt.insert(f as u32, k as u64 + 1, truth).unwrap();
            let mut jitter = || {
                let a: f64 = rng.random_range(0.0..std::f64::consts::TAU);
                let r: f64 = rng.random_range(0.0..100.0);
                GlobalPoint::new(truth.x + r * a.cos(), truth.y + r * a.sin())
            };
            let mut put = |label: u64, pos: GlobalPoint| {
                let label = if used.contains(&label) { 90 + label } else { label };
                used.push(label);
                pred.insert(f as u32, label, pos).unwrap();
            };
            match ev {
                Event::Absent | Event::Miss => {}
                Event::Hit => put(10 + k as u64, jitter()),
                Event::Swap => put(10 + ((k + 1) % n_ids) as u64, jitter()),
                Event::HitWithFalsePositive => {
                    let (a, b) = (jitter(), jitter());
                    put(10 + k as u64, a);
                    put(50 + k as u64, b);
                }
                Event::Far => put(10 + k as u64, GlobalPoint::new(truth.x, truth.y + 400.0)),
            }
        }
    }
    (!gt.is_empty()).then_some((gt, pred))
}

/// Exhaustive event grids for one identity over 1 to 3 frames and two
/// identities over two frames, then seeded random grids for three identities
/// over five frames.
pub fn metric_cases(n_random: usize) -> Vec<(String, LabeledTimeline, LabeledTimeline)> {
    let mut out = Vec::new();
    let mut seed = 0u64;
    for (n_ids, n_frames) in [(1usize, 1usize), (1, 2), (1, 3), (2, 2)] {
        let cells = n_ids * n_frames;
        for code in 0..EVENTS.len().pow(cells as u32) {
            let mut c = code;
            let events: Vec<Event> = (0..cells)
                .map(|_| {
                    let e = EVENTS[c % EVENTS.len()];
                    c /= EVENTS.len();
                    e
                })
                .collect();
            seed += 1;
            if let Some((g, p)) = build_case(n_ids, &events, seed) {
                out.push((format!("{n_ids}x{n_frames} {events:?}"), g, p));
            }
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    let mut made = 0;
    while made < n_random {
        let events: Vec<Event> = (0..15).map(|_| EVENTS[rng.random_range(0..EVENTS.len())]).collect();
        seed += 1;
        if let Some((g, p)) = build_case(3, &events, seed) {
            out.push((format!("3x5 {events:?}"), g, p));
            made += 1;
        }
    }
    out
}

// ---------------------------------------------------------------- appearance

/// Position/direction-aware similarity by brute force: every detection pair,
/// top `M` by repeated arg-max, then the best `ceil(top_fraction * M)`-subset
/// mean of cosines over all subsets. Returns `(value, surviving, fallback)`.
pub fn oracle_pd(a: &[Detection], b: &[Detection], params: &SimilarityParams) -> (f64, usize, bool) {
    let cos = |x: &[f64], y: &[f64]| {
        let dot: f64 = x.iter().zip(y).map(|(p, q)| p * q).sum();
        let nx = x.iter().map(|v| v * v).sum::<f64>().sqrt();
        let ny = y.iter().map(|v| v * v).sum::<f64>().sqrt();
        if nx < 1e-12 || ny < 1e-12 {
            0.0
        } else {
            (dot / (nx * ny)).clamp(-1.0, 1.0)
        }
    };
    let center = |d: &Detection| ((d.bbox.x1 + d.bbox.x2) / 2.0, (d.bbox.y1 + d.bbox.y2) / 2.0);
    let mut pairs: Vec<(f64, f64)> = Vec::new();
    for p in a.iter().filter(|d| d.feature.is_some()) {
        for q in b.iter().filter(|d| d.feature.is_some()) {
            let (cp, cq) = (center(p), center(q));
            let d = ((cp.0 - cq.0).powi(2) + (cp.1 - cq.1).powi(2)).sqrt();
            if d > params.d_max {
                continue;
            }
            let wv = match (p.motion, q.motion) {
                (Some(u), Some(v)) if u.norm() * v.norm() > 1e-12 => (1.0 + u.dot(&v) / (u.norm() * v.norm())) / 2.0,
                _ => 0.5,
            };
            let w = (-d * d / (params.sigma_p * params.sigma_p)).exp() * wv;
            pairs.push((w, cos(p.feature.as_ref().unwrap().as_slice(), q.feature.as_ref().unwrap().as_slice())));
        }
    }
    let surviving = pairs.len();
    let m = params.m_min_pairs;
    if surviving < m {
        let mean = |dets: &[Detection]| {
            let feats: Vec<&FeatureVec> = dets.iter().filter_map(|d| d.feature.as_ref()).collect();
            let dim = feats[0].dim();
            (0..dim).map(|k| feats.iter().map(|f| f.as_slice()[k]).sum::<f64>() / feats.len() as f64).collect::<Vec<_>>()
        };
        return (cos(&mean(a), &mean(b)), surviving, true);
    }
    let mut top = Vec::new();
    let mut rest = pairs;
    for _ in 0..m {
        let (i, _) = rest.iter().enumerate().max_by(|x, y| x.1 .0.total_cmp(&y.1 .0)).unwrap();
        top.push(rest.remove(i).1);
    }
    let k = (params.top_fraction * m as f64).ceil() as usize;
    let mut best = f64::NEG_INFINITY;
    for mask in 0u32..(1 << m) {
        if mask.count_ones() as usize != k {
            continue;
        }
        let s: f64 = (0..m).filter(|i| mask & (1 << i) != 0).map(|i| top[i]).sum();
        best = best.max(s / k as f64);
    }
    (best, surviving, false)
}

/// A detection centered at `(cx, cy)` with the given motion and feature.
pub fn det(frame: u32, cam: u32, local: u32, cx: f64, cy: f64, motion: Option<(f64, f64)>, feature: Option<Vec<f64>>) -> Detection {
    let bbox = BBox::new(cx - 15.0, cy - 40.0, cx + 15.0, cy + 40.0).unwrap();
    let mut d = Detection::new(frame, cam, local, bbox, 0.9);
    d.motion = motion.map(|(x, y)| Vector2::new(x, y));
    d.feature = feature.map(|f| FeatureVec::new(f).unwrap());
    d
}

/// A random track of `n` detections with features, positions within a
/// `spread` px square and random motions.
pub fn random_track(rng: &mut ChaCha8Rng, cam: u32, n: usize, dim: usize, spread: f64) -> Vec<Detection> {
    (0..n)
        .map(|f| {
            let feature: Vec<f64> = (0..dim).map(|_| rng.random_range(-1.0..1.0)).collect();
            let motion = (rng.random_range(-5.0..5.0), rng.random_range(-5.0..5.0));
            det(
                f as u32,
                cam,
                1,
                rng.random_range(0.0..spread),
                rng.random_range(0.0..spread),
                Some(motion),
                Some(feature),
            )
        })
        .collect()
}
