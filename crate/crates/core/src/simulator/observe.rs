use nalgebra::{Matrix3, Vector2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, Poisson};

use super::features::random_unit;
use super::{derive_seed, rect_contains, synth_feature, CameraPlacement, IdentityAppearance, NoiseConfig, World, STREAM_MISALIGN};
use crate::appearance::FeatureVec;
use crate::fusion::{Detection, Tracklet};
use crate::geometry::{distort, BBox, CameraModel, Pixel};
use crate::Result;

/// Shortest tracklet the simulator emits.
pub const MIN_FRAGMENT_LEN: usize = 2;

/// Share of the body hidden from the feet up inside an occlusion zone.
const OCCLUDED_FRACTION: f64 = 0.4;

/// What one camera reports.
#[derive(Debug, Clone, PartialEq)]
pub struct CameraObservation {
    pub camera_id: u32,
    pub tracklets: Vec<Tracklet>,
    /// Worker identity behind each tracklet; `None` for false positives.
    pub identities: Vec<Option<u64>>,
}

/// Camera as written to the rig config: the true homography composed with
/// a rigid floor-plane error.
pub(crate) fn configured_camera(placement: &CameraPlacement, seed: u64) -> Result<CameraModel> {
    let truth = placement.true_camera()?;
    if placement.misalignment == 0.0 {
        return Ok(truth);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, STREAM_MISALIGN, u64::from(placement.camera_id)));
    let phi: f64 = rng.random_range(-std::f64::consts::PI..std::f64::consts::PI);
    let [x0, y0, x1, y1] = placement.footprint;
    let half_diag = 0.5 * (x1 - x0).hypot(y1 - y0);
    // rotation moves the footprint corners by at most half the misalignment
    let theta = rng.random_range(-1.0..=1.0) * 0.5 * placement.misalignment / half_diag;
    let c = placement.footprint_center();
    let (s, co) = theta.sin_cos();
    let (tx, ty) = (placement.misalignment * phi.cos(), placement.misalignment * phi.sin());
    let rigid = Matrix3::new(
        co,
        -s,
        c.x - co * c.x + s * c.y + tx,
        s,
        co,
        c.y - s * c.x - co * c.y + ty,
        0.0,
        0.0,
        1.0,
    );
    let cam = CameraModel::new(
        placement.camera_id,
        placement.image_size[0],
        placement.image_size[1],
        rigid * placement.true_homography(),
    )?;
    Ok(match truth.distortion {
        Some(d) => cam.with_distortion(d),
        None => cam,
    })
}

/// Box around a standing person whose feet are at undistorted pixel `foot`.
///
/// The head lies on the ray from the image center through the feet, pushed
/// outward by `1 / (1 - mount_height_ratio)`, and carries the residual lens
/// distortion.
pub(crate) fn person_box(cam: &CameraModel, placement: &CameraPlacement, foot: Pixel, occluded: bool) -> [f64; 4] {
    let c = cam.image_center;
    let head = c + (foot - c) / (1.0 - placement.mount_height_ratio);
    let head = distort(head, cam);
    let bottom = if occluded { foot + (head - foot) * OCCLUDED_FRACTION } else { foot };
    let hw = placement.body_half_width_px;
    [
        bottom.x.min(head.x) - hw,
        bottom.y.min(head.y) - hw,
        bottom.x.max(head.x) + hw,
        bottom.y.max(head.y) + hw,
    ]
}

/// A worker is in view when its feet are inside the image.
pub(crate) fn sees(cam: &CameraModel, foot: &Pixel) -> bool {
    cam.contains(foot, -1e-6)
}

fn clip_box(b: [f64; 4], cam: &CameraModel) -> Option<BBox> {
    let x1 = b[0].clamp(0.0, cam.image_width);
    let y1 = b[1].clamp(0.0, cam.image_height);
    let x2 = b[2].clamp(0.0, cam.image_width);
    let y2 = b[3].clamp(0.0, cam.image_height);
    if x2 - x1 < 1.0 || y2 - y1 < 1.0 {
        return None;
    }
    BBox::new(x1, y1, x2, y2).ok()
}

struct Pending {
    start: u32,
    identity: Option<u64>,
    detections: Vec<Detection>,
}

/// Simulates the tracklets one camera would report.
///
/// A tracklet follows one worker through a run of frames in which its feet
/// are inside the image; missed detections leave gaps, fragmentation splits
/// it into pieces of at least [`MIN_FRAGMENT_LEN`] detections, and pieces
/// shorter than that are dropped.
pub fn observe(
    world: &World,
    placement: &CameraPlacement,
    noise: &NoiseConfig,
    appearance: &IdentityAppearance,
    seed: u64,
) -> Result<CameraObservation> {
    let cam = placement.true_camera()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let jitter = Normal::new(0.0, noise.bbox_jitter_px).expect("validated std");
    let with_features = noise.feature_dim > 0;
    let (w, h) = (cam.image_width, cam.image_height);
    let mut pending = Vec::new();

    for worker in 0..world.n_workers() {
        let mut run: Vec<Detection> = Vec::new();
        let mut runs = Vec::new();
        for frame in 0..world.n_frames {
            let g = world.position(worker, frame);
            let foot = cam.to_pixel(g)?;
            if !sees(&cam, &foot) {
                if !run.is_empty() {
                    runs.push(std::mem::take(&mut run));
                }
                continue;
            }
            if rng.random::<f64>() < noise.det_miss_prob {
                continue;
            }
            let occluded = noise.occlusion_zones.iter().any(|z| rect_contains(z, &g));
            let mut b = person_box(&cam, placement, foot, occluded);
            if noise.bbox_jitter_px > 0.0 {
                for v in &mut b {
                    *v += jitter.sample(&mut rng);
                }
            }
            let Some(bbox) = clip_box(b, &cam) else { continue };
            let mut det = Detection::new(frame, cam.camera_id, 0, bbox, rng.random_range(0.5..0.99));
            if with_features {
                let (vx, vy) = world.velocity(worker, frame);
                let ahead = cam.to_pixel(crate::geometry::GlobalPoint::new(g.x + vx, g.y + vy))?;
                let motion: Vector2<f64> = ahead - foot;
                let direction = (motion.norm() > 1e-9).then(|| motion.y.atan2(motion.x));
                det.feature = Some(synth_feature(
                    appearance,
                    worker,
                    (foot.x / w, foot.y / h),
                    direction,
                    noise.view_drift_gain,
                    noise.feature_noise_std,
                    &mut rng,
                ));
            }
            run.push(det);
        }
        if !run.is_empty() {
            runs.push(run);
        }
        for run in runs {
            for piece in fragment(run, noise.frag_prob, &mut rng) {
                if piece.len() >= MIN_FRAGMENT_LEN {
                    pending.push(Pending {
                        start: piece[0].frame,
                        identity: Some(World::identity(worker)),
                        detections: piece,
                    });
                }
            }
        }
    }

    if noise.fp_rate > 0.0 {
        let poisson = Poisson::new(noise.fp_rate).expect("validated rate");
        let hw = placement.body_half_width_px;
        for frame in 0..world.n_frames {
            let count = poisson.sample(&mut rng) as usize;
            for _ in 0..count {
                let len = rng.random_range(2..=5u32).min(world.n_frames - frame);
                let bw = rng.random_range(30.0..80.0);
                let bh = rng.random_range(60.0..200.0);
                let x = rng.random_range(hw..(w - hw - bw).max(hw + 1.0));
                let y = rng.random_range(hw..(h - hw - bh).max(hw + 1.0));
                let base = with_features.then(|| random_unit(noise.feature_dim, &mut rng));
                let mut dets = Vec::new();
                for f in frame..frame + len {
                    let mut b = [x, y, x + bw, y + bh];
                    if noise.bbox_jitter_px > 0.0 {
                        for v in &mut b {
                            *v += jitter.sample(&mut rng);
                        }
                    }
                    let Some(bbox) = clip_box(b, &cam) else { continue };
                    let mut det = Detection::new(f, cam.camera_id, 0, bbox, rng.random_range(0.3..0.6));
                    if let Some(base) = &base {
                        det.feature = Some(noisy(base, noise.feature_noise_std, &mut rng));
                    }
                    dets.push(det);
                }
                if dets.len() >= MIN_FRAGMENT_LEN {
                    pending.push(Pending {
                        start: dets[0].frame,
                        identity: None,
                        detections: dets,
                    });
                }
            }
        }
    }

    // stable sort keeps creation order among equal starts
    pending.sort_by_key(|p| p.start);
    let mut tracklets = Vec::with_capacity(pending.len());
    let mut identities = Vec::with_capacity(pending.len());
    for (i, p) in pending.into_iter().enumerate() {
        let local = i as u32 + 1;
        let dets = p
            .detections
            .into_iter()
            .map(|mut d| {
                d.local_track_id = local;
                d
            })
            .collect();
        tracklets.push(Tracklet::new(cam.camera_id, local, dets)?);
        identities.push(p.identity);
    }
    Ok(CameraObservation {
        camera_id: cam.camera_id,
        tracklets,
        identities,
    })
}

fn noisy(base: &[f64], noise_std: f64, rng: &mut impl Rng) -> FeatureVec {
    let sigma = noise_std / (base.len() as f64).sqrt();
    let values = base
        .iter()
        .map(|v| v + if sigma > 0.0 { sigma * rng.sample::<f64, _>(rand_distr::StandardNormal) } else { 0.0 })
        .collect();
    FeatureVec::new(values).expect("finite by construction").normalized()
}

/// Splits a run into consecutive pieces. After each detection the piece is
/// closed with probability `frag_prob` when both it and the remainder have
/// at least [`MIN_FRAGMENT_LEN`] detections.
pub(crate) fn fragment(run: Vec<Detection>, frag_prob: f64, rng: &mut impl Rng) -> Vec<Vec<Detection>> {
    if frag_prob == 0.0 {
        return vec![run];
    }
    let n = run.len();
    let mut pieces = Vec::new();
    let mut current = Vec::new();
    for (i, d) in run.into_iter().enumerate() {
        current.push(d);
        let remaining = n - i - 1;
        if current.len() >= MIN_FRAGMENT_LEN && remaining >= MIN_FRAGMENT_LEN && rng.random::<f64>() < frag_prob {
            pieces.push(std::mem::take(&mut current));
        }
    }
    if !current.is_empty() {
        pieces.push(current);
    }
    pieces
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{foot_point, GlobalPoint, RadialDistortion};
    use crate::simulator::{generate_world, WorldConfig};

    fn placement(ratio: f64) -> CameraPlacement {
        CameraPlacement {
            camera_id: 1,
            image_size: [1920.0, 1080.0],
            footprint: [0.0, 0.0, 640.0, 360.0],
            misalignment: 0.0,
            mount_height_ratio: ratio,
            body_half_width_px: 12.0,
            distortion: None,
        }
    }

    fn one_worker_world(points: Vec<GlobalPoint>) -> World {
        World {
            n_frames: points.len() as u32,
            paths: vec![points],
        }
    }

    #[test]
    fn zero_height_box_centered_on_foot() {
        let p = placement(0.0);
        let cam = p.true_camera().unwrap();
        let g = p.footprint_center();
        let world = one_worker_world(vec![g; 3]);
        let obs = observe(&world, &p, &NoiseConfig::default(), &IdentityAppearance::new(0, 1, 0), 1).unwrap();
        assert_eq!(obs.tracklets.len(), 1);
        let d = &obs.tracklets[0].detections[0];
        let foot = cam.to_pixel(g).unwrap();
        assert!((d.bbox.center() - foot).norm() < 1e-9);
        assert!((cam.to_floor(d.bbox.center()).unwrap().distance(&g)) < 1e-9);
    }

    #[test]
    fn foot_point_beats_center_at_footprint_edge() {
        let mut p = placement(0.5);
        p.distortion = Some(RadialDistortion {
            k_stretch: 0.15,
            k_radial: 0.0,
        });
        let cam = p.true_camera().unwrap();
        for g in [GlobalPoint::new(30.0, 180.0), GlobalPoint::new(600.0, 40.0), GlobalPoint::new(320.0, 330.0)] {
            let foot = cam.to_pixel(g).unwrap();
            let bbox = clip_box(person_box(&cam, &p, foot, false), &cam).unwrap();
            let err_center = cam.to_floor(bbox.center()).unwrap().distance(&g);
            let err_foot = cam.to_floor(foot_point(&bbox, cam.image_center)).unwrap().distance(&g);
            assert!(err_foot < err_center, "{g:?}: foot {err_foot} center {err_center}");
        }
    }

    #[test]
    fn full_fragmentation_gives_short_pieces() {
        let world = generate_world(&WorldConfig {
            floor_size: [640.0, 360.0],
            n_workers: 3,
            n_frames: 80,
            fps: 5.0,
            walk_speed_px: 5.0,
            turn_std: 0.2,
            seed: 4,
        })
        .unwrap();
        let noise = NoiseConfig {
            frag_prob: 1.0,
            ..NoiseConfig::default()
        };
        let obs = observe(&world, &placement(0.3), &noise, &IdentityAppearance::new(0, 3, 0), 9).unwrap();
        assert!(!obs.tracklets.is_empty());
        for t in &obs.tracklets {
            assert!(t.len() >= MIN_FRAGMENT_LEN && t.len() <= 2 * MIN_FRAGMENT_LEN, "len {}", t.len());
        }
    }

    #[test]
    fn fragments_partition_the_run() {
        let run: Vec<Detection> = (0..37)
            .map(|f| Detection::new(f, 1, 0, BBox::new(0.0, 0.0, 1.0, 1.0).unwrap(), 0.9))
            .collect();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let pieces = fragment(run, 0.3, &mut rng);
        let frames: Vec<u32> = pieces.iter().flatten().map(|d| d.frame).collect();
        assert_eq!(frames, (0..37).collect::<Vec<_>>());
        assert!(pieces.iter().all(|p| p.len() >= MIN_FRAGMENT_LEN));
    }

    #[test]
    fn misalignment_moves_footprint_center_by_magnitude() {
        let mut p = placement(0.0);
        p.misalignment = 15.0;
        let cam = configured_camera(&p, 77).unwrap();
        let truth = p.true_camera().unwrap();
        let center_px = truth.to_pixel(p.footprint_center()).unwrap();
        let moved = cam.to_floor(center_px).unwrap();
        assert!((moved.distance(&p.footprint_center()) - 15.0).abs() < 1e-9);
    }

    #[test]
    fn false_positives_are_short_and_unlabelled() {
        let world = one_worker_world(vec![GlobalPoint::new(-100.0, -100.0); 200]);
        let noise = NoiseConfig {
            fp_rate: 0.2,
            feature_dim: 8,
            ..NoiseConfig::default()
        };
        let obs = observe(&world, &placement(0.0), &noise, &IdentityAppearance::new(8, 1, 0), 3).unwrap();
        assert!(!obs.tracklets.is_empty());
        for (t, id) in obs.tracklets.iter().zip(&obs.identities) {
            assert!(id.is_none());
            assert!((2..=5).contains(&t.len()));
            assert!(t.detections.iter().all(|d| d.feature.as_ref().is_some_and(|f| f.dim() == 8)));
        }
    }
}
