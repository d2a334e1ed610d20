use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, StandardNormal};

use super::{derive_seed, STREAM_IDENTITY};
use crate::appearance::FeatureVec;

/// Smooth view-dependent drift: component `k` is
/// `sqrt(1/D) sin(w_k . (u, v, cos a, sin a) + phase_k)`, so each component
/// has the scale of a unit embedding's and `E|g|^2 = 1/2`.
#[derive(Debug, Clone, PartialEq)]
struct DriftField {
    freqs: Vec<[f64; 4]>,
    phases: Vec<f64>,
}

impl DriftField {
    fn sample(dim: usize, rng: &mut ChaCha8Rng) -> Self {
        let spatial = Normal::new(0.0, PI).expect("valid std");
        let angular = Normal::new(0.0, 1.0).expect("valid std");
        let mut freqs = Vec::with_capacity(dim);
        let mut phases = Vec::with_capacity(dim);
        for _ in 0..dim {
            freqs.push([
                spatial.sample(rng),
                spatial.sample(rng),
                angular.sample(rng),
                angular.sample(rng),
            ]);
            phases.push(rng.random_range(-PI..PI));
        }
        Self { freqs, phases }
    }

    fn eval(&self, pos: (f64, f64), direction: Option<f64>) -> impl Iterator<Item = f64> + '_ {
        let amp = (1.0 / self.freqs.len() as f64).sqrt();
        let (c, s) = direction.map_or((0.0, 0.0), |a| (a.cos(), a.sin()));
        self.freqs.iter().zip(&self.phases).map(move |(w, phase)| {
            amp * (w[0] * pos.0 + w[1] * pos.1 + w[2] * c + w[3] * s + phase).sin()
        })
    }
}

/// Per-identity unit embeddings and drift fields, shared by all cameras.
#[derive(Debug, Clone, PartialEq)]
pub struct IdentityAppearance {
    dim: usize,
    embeddings: Vec<Vec<f64>>,
    fields: Vec<DriftField>,
}

impl IdentityAppearance {
    pub fn new(dim: usize, n_identities: usize, seed: u64) -> Self {
        let mut embeddings = Vec::with_capacity(n_identities);
        let mut fields = Vec::with_capacity(n_identities);
        for id in 0..n_identities {
            let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, STREAM_IDENTITY, id as u64));
            embeddings.push(random_unit(dim, &mut rng));
            fields.push(DriftField::sample(dim, &mut rng));
        }
        Self { dim, embeddings, fields }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn embedding(&self, identity: usize) -> &[f64] {
        &self.embeddings[identity]
    }
}

pub(crate) fn random_unit(dim: usize, rng: &mut impl Rng) -> Vec<f64> {
    if dim == 0 {
        return Vec::new();
    }
    loop {
        let v: Vec<f64> = (0..dim).map(|_| StandardNormal.sample(rng)).collect();
        let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if n > 1e-9 {
            return v.into_iter().map(|x| x / n).collect();
        }
    }
}

/// Appearance feature of `identity` seen at normalized image position
/// `pos` (both coordinates in `[0, 1]`) while moving along image angle
/// `direction`.
///
/// `e_id + gain * g_id(pos, direction) + n`, renormalized, where `n` has
/// per-component std `noise_std / sqrt(D)` so that `|n|` is about
/// `noise_std`.
pub fn synth_feature(
    appearance: &IdentityAppearance,
    identity: usize,
    pos: (f64, f64),
    direction: Option<f64>,
    view_drift_gain: f64,
    noise_std: f64,
    rng: &mut impl Rng,
) -> FeatureVec {
    let dim = appearance.dim;
    let sigma = noise_std / (dim as f64).sqrt();
    let values: Vec<f64> = appearance.embeddings[identity]
        .iter()
        .zip(appearance.fields[identity].eval(pos, direction))
        .map(|(e, g)| {
            let n: f64 = if sigma > 0.0 { sigma * Distribution::<f64>::sample(&StandardNormal, rng) } else { 0.0 };
            e + view_drift_gain * g + n
        })
        .collect();
    FeatureVec::new(values).expect("finite by construction").normalized()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::appearance::cosine;

    #[test]
    fn no_drift_no_noise_is_embedding() {
        let app = IdentityAppearance::new(32, 3, 5);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let f = synth_feature(&app, 1, (0.2, 0.9), Some(1.0), 0.0, 0.0, &mut rng);
        for (a, b) in f.as_slice().iter().zip(app.embedding(1)) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn same_view_same_feature_across_cameras() {
        let app = IdentityAppearance::new(32, 2, 5);
        let mut r1 = ChaCha8Rng::seed_from_u64(1);
        let mut r2 = ChaCha8Rng::seed_from_u64(2);
        let a = synth_feature(&app, 0, (0.3, 0.4), Some(0.5), 0.8, 0.0, &mut r1);
        let b = synth_feature(&app, 0, (0.3, 0.4), Some(0.5), 0.8, 0.0, &mut r2);
        assert!((cosine(&a, &b).unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn opposite_corners_less_similar_than_same_position() {
        let app = IdentityAppearance::new(64, 1, 11);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let (mut same, mut far) = (0.0, 0.0);
        for _ in 0..100 {
            let a = synth_feature(&app, 0, (0.05, 0.05), Some(0.0), 0.8, 0.1, &mut rng);
            let b = synth_feature(&app, 0, (0.05, 0.05), Some(0.0), 0.8, 0.1, &mut rng);
            let c = synth_feature(&app, 0, (0.95, 0.95), Some(0.0), 0.8, 0.1, &mut rng);
            same += cosine(&a, &b).unwrap();
            far += cosine(&a, &c).unwrap();
        }
        assert!(far < same, "far {far} vs same {same}");
    }

    #[test]
    fn drift_field_has_half_mean_energy() {
        let app = IdentityAppearance::new(256, 1, 4);
        let mut total = 0.0;
        let n = 200;
        for i in 0..n {
            let t = i as f64 / n as f64;
            total += app.fields[0].eval((t, 1.0 - t), Some(6.0 * t)).map(|g| g * g).sum::<f64>();
        }
        let mean = total / n as f64;
        assert!((mean - 0.5).abs() < 0.1, "mean energy {mean}");
    }

    #[test]
    fn embeddings_are_unit() {
        let app = IdentityAppearance::new(16, 4, 1);
        for i in 0..4 {
            let n: f64 = app.embedding(i).iter().map(|x| x * x).sum::<f64>().sqrt();
            assert!((n - 1.0).abs() < 1e-12);
        }
    }
}
