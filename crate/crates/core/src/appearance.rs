//! Appearance features and track-to-track similarity.
//!
//! Two strategies are available. Simple averaging compares the mean feature
//! of each track. The position/direction-aware strategy only compares
//! detection pairs that sit at similar image positions and move in similar
//! directions, because those pairs are the least affected by wide-angle
//! viewpoint changes.

use serde::{Deserialize, Serialize};

use crate::fusion::Detection;
use crate::{Error, Result};

const NORM_EPS: f64 = 1e-12;

/// Appearance embedding of a single detection.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct FeatureVec(Vec<f64>);

impl FeatureVec {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::invalid("feature", format!("entry {i} is not finite")));
        }
        Ok(Self(values))
    }

    pub fn zeros(dim: usize) -> Self {
        Self(vec![0.0; dim])
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn norm(&self) -> f64 {
        self.0.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    /// Unit-length copy; a (near) zero vector is returned unchanged.
    pub fn normalized(&self) -> Self {
        let n = self.norm();
        if n < NORM_EPS {
            return self.clone();
        }
        Self(self.0.iter().map(|v| v / n).collect())
    }
}

impl From<FeatureVec> for Vec<f64> {
    fn from(f: FeatureVec) -> Self {
        f.0
    }
}

/// Which appearance comparison, if any, participates in track merging.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FeatureStrategy {
    None,
    #[serde(rename = "mean", alias = "simple-averaging")]
    SimpleAveraging,
    #[serde(rename = "pd-aware", alias = "position-direction-aware")]
    PositionDirectionAware,
}

impl FeatureStrategy {
    pub const ALL: [FeatureStrategy; 3] = [
        FeatureStrategy::None,
        FeatureStrategy::SimpleAveraging,
        FeatureStrategy::PositionDirectionAware,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            FeatureStrategy::None => "none",
            FeatureStrategy::SimpleAveraging => "mean",
            FeatureStrategy::PositionDirectionAware => "pd-aware",
        }
    }
}

impl std::str::FromStr for FeatureStrategy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "none" => Ok(FeatureStrategy::None),
            "mean" | "simple-averaging" => Ok(FeatureStrategy::SimpleAveraging),
            "pd-aware" | "position-direction-aware" => Ok(FeatureStrategy::PositionDirectionAware),
            other => Err(Error::invalid(
                "feature_strategy",
                format!("expected `none`, `mean` or `pd-aware`, got `{other}`"),
            )),
        }
    }
}

impl std::fmt::Display for FeatureStrategy {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Parameters of the position/direction-aware comparison.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimilarityParams {
    /// Gaussian scale of the position weight, camera pixels.
    pub sigma_p: f64,
    /// Pairs farther apart than this (camera pixels) are excluded.
    pub d_max: f64,
    /// Minimum number of surviving pairs, and the number of top pairs used.
    pub m_min_pairs: usize,
    /// Fraction of the top pairs whose cosines are averaged.
    pub top_fraction: f64,
}

impl Default for SimilarityParams {
    fn default() -> Self {
        Self {
            sigma_p: 500.0,
            d_max: 540.0,
            m_min_pairs: 8,
            top_fraction: 0.75,
        }
    }
}

impl SimilarityParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.sigma_p > 0.0) {
            return Err(Error::invalid("sigma_p", "must be > 0"));
        }
        if !(self.d_max > 0.0) {
            return Err(Error::invalid("d_max", "must be > 0"));
        }
        if self.m_min_pairs == 0 {
            return Err(Error::invalid("m_min_pairs", "must be >= 1"));
        }
        if !(self.top_fraction > 0.0 && self.top_fraction <= 1.0) {
            return Err(Error::invalid("top_fraction", "must lie in (0, 1]"));
        }
        Ok(())
    }

    /// Number of top-weighted pair cosines that get averaged, never zero.
    pub fn top_count(&self) -> usize {
        let raw = (self.top_fraction * self.m_min_pairs as f64 - 1e-9).ceil();
        (raw as usize).clamp(1, self.m_min_pairs)
    }
}

/// Cosine similarity; 0 when either vector is (near) zero.
pub fn cosine(f: &FeatureVec, g: &FeatureVec) -> Result<f64> {
    cosine_slices(f.as_slice(), g.as_slice())
}

fn cosine_slices(f: &[f64], g: &[f64]) -> Result<f64> {
    if f.len() != g.len() {
        return Err(Error::DimensionMismatch {
            left: f.len(),
            right: g.len(),
        });
    }
    let (mut dot, mut nf, mut ng) = (0.0, 0.0, 0.0);
    for (a, b) in f.iter().zip(g) {
        dot += a * b;
        nf += a * a;
        ng += b * b;
    }
    let (nf, ng) = (nf.sqrt(), ng.sqrt());
    if nf < NORM_EPS || ng < NORM_EPS {
        return Ok(0.0);
    }
    Ok((dot / (nf * ng)).clamp(-1.0, 1.0))
}

/// Component-wise mean, L2-normalized unless it cancels to zero.
pub fn mean_feature<'a, I>(features: I) -> Result<FeatureVec>
where
    I: IntoIterator<Item = &'a FeatureVec>,
{
    let mut iter = features.into_iter();
    let first = iter.next().ok_or(Error::EmptyTrack)?;
    let mut sum = first.as_slice().to_vec();
    let mut n = 1usize;
    for f in iter {
        if f.dim() != sum.len() {
            return Err(Error::DimensionMismatch {
                left: sum.len(),
                right: f.dim(),
            });
        }
        for (s, v) in sum.iter_mut().zip(f.as_slice()) {
            *s += v;
        }
        n += 1;
    }
    for s in &mut sum {
        *s /= n as f64;
    }
    Ok(FeatureVec(sum).normalized())
}

/// Mean feature over the detections of a track that carry one.
pub fn track_mean_feature(dets: &[Detection]) -> Result<FeatureVec> {
    mean_feature(dets.iter().filter_map(|d| d.feature.as_ref()))
}

/// Combined position and direction weight of a detection pair, or `None`
/// when the pair is farther apart than `d_max`.
pub fn pair_weight(p: &Detection, q: &Detection, params: &SimilarityParams) -> Option<f64> {
    let d = (p.bbox.center() - q.bbox.center()).norm();
    if d > params.d_max {
        return None;
    }
    let w_pos = (-(d * d) / (params.sigma_p * params.sigma_p)).exp();
    let w_vel = match (p.motion, q.motion) {
        (Some(vp), Some(vq)) => {
            let denom = vp.norm() * vq.norm();
            if denom < NORM_EPS {
                0.5
            } else {
                (1.0 + (vp.dot(&vq) / denom).clamp(-1.0, 1.0)) / 2.0
            }
        }
        _ => 0.5,
    };
    Some(w_pos * w_vel)
}

/// How the position/direction-aware similarity was obtained.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum PdOutcome {
    /// Enough pairs survived; value is the mean of the best pair cosines.
    TopPairs { surviving: usize, value: f64 },
    /// Too few pairs survived; value is the cosine of the mean features.
    Fallback { surviving: usize, value: f64 },
}

impl PdOutcome {
    pub fn value(&self) -> f64 {
        match *self {
            PdOutcome::TopPairs { value, .. } | PdOutcome::Fallback { value, .. } => value,
        }
    }

    pub fn surviving(&self) -> usize {
        match *self {
            PdOutcome::TopPairs { surviving, .. } | PdOutcome::Fallback { surviving, .. } => surviving,
        }
    }

    pub fn is_fallback(&self) -> bool {
        matches!(self, PdOutcome::Fallback { .. })
    }
}

type DetKey = (u32, u32, u32);

fn det_key(d: &Detection) -> DetKey {
    (d.frame, d.camera_id, d.local_track_id)
}

pub fn pd_similarity_detailed(a: &[Detection], b: &[Detection], params: &SimilarityParams) -> Result<PdOutcome> {
    let mean_a = track_mean_feature(a)?;
    let mean_b = track_mean_feature(b)?;

    struct Pair {
        weight: f64,
        key: (DetKey, DetKey),
        p: usize,
        q: usize,
    }

    let mut pairs = Vec::new();
    for (i, p) in a.iter().enumerate().filter(|(_, d)| d.feature.is_some()) {
        for (j, q) in b.iter().enumerate().filter(|(_, d)| d.feature.is_some()) {
            if let Some(weight) = pair_weight(p, q, params) {
                let (kp, kq) = (det_key(p), det_key(q));
                let key = if kp <= kq { (kp, kq) } else { (kq, kp) };
                pairs.push(Pair { weight, key, p: i, q: j });
            }
        }
    }

    let surviving = pairs.len();
    let m = params.m_min_pairs;
    if surviving < m {
        return Ok(PdOutcome::Fallback {
            surviving,
            value: cosine(&mean_a, &mean_b)?,
        });
    }

    pairs.sort_by(|x, y| y.weight.total_cmp(&x.weight).then_with(|| x.key.cmp(&y.key)));
    let mut cosines = pairs[..m]
        .iter()
        .map(|pair| {
            let fp = a[pair.p].feature.as_ref().expect("filtered above");
            let fq = b[pair.q].feature.as_ref().expect("filtered above");
            cosine(fp, fq)
        })
        .collect::<Result<Vec<_>>>()?;
    cosines.sort_by(|x, y| y.total_cmp(x));
    let k = params.top_count();
    let value = cosines[..k].iter().sum::<f64>() / k as f64;
    Ok(PdOutcome::TopPairs { surviving, value })
}

pub fn pd_similarity(a: &[Detection], b: &[Detection], params: &SimilarityParams) -> Result<f64> {
    pd_similarity_detailed(a, b, params).map(|o| o.value())
}

/// Track-to-track appearance similarity under `strategy`.
///
/// `Ok(None)` means no appearance information: either the strategy is
/// `None` or one of the tracks carries no features.
pub fn track_similarity(
    a: &[Detection],
    b: &[Detection],
    strategy: FeatureStrategy,
    params: &SimilarityParams,
) -> Result<Option<f64>> {
    let result = match strategy {
        FeatureStrategy::None => return Ok(None),
        FeatureStrategy::SimpleAveraging => track_mean_feature(a)
            .and_then(|fa| track_mean_feature(b).and_then(|fb| cosine(&fa, &fb))),
        FeatureStrategy::PositionDirectionAware => pd_similarity(a, b, params),
    };
    match result {
        Ok(v) => Ok(Some(v)),
        Err(Error::EmptyTrack) => Ok(None),
        Err(e) => Err(e),
    }
}
