use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use super::{derive_seed, CameraPlacement, WorldConfig, STREAM_WORLD};
use crate::geometry::GlobalPoint;
use crate::metrics::LabeledTimeline;
use crate::Result;

/// Ground-truth floor trajectories, one position per worker per frame.
#[derive(Debug, Clone, PartialEq)]
pub struct World {
    pub n_frames: u32,
    /// `paths[worker][frame]`.
    pub paths: Vec<Vec<GlobalPoint>>,
}

impl World {
    pub fn n_workers(&self) -> usize {
        self.paths.len()
    }

    /// Identity label of a worker index.
    pub fn identity(worker: usize) -> u64 {
        worker as u64 + 1
    }

    pub fn position(&self, worker: usize, frame: u32) -> GlobalPoint {
        self.paths[worker][frame as usize]
    }

    /// Floor-space heading of a worker at a frame, from its neighbours.
    pub fn velocity(&self, worker: usize, frame: u32) -> (f64, f64) {
        let path = &self.paths[worker];
        let i = frame as usize;
        let lo = i.saturating_sub(1);
        let hi = (i + 1).min(path.len() - 1);
        if hi == lo {
            return (0.0, 0.0);
        }
        let span = (hi - lo) as f64;
        ((path[hi].x - path[lo].x) / span, (path[hi].y - path[lo].y) / span)
    }

    /// Every worker position in every frame.
    pub fn ground_truth(&self) -> Result<LabeledTimeline> {
        LabeledTimeline::from_points(self.paths.iter().enumerate().flat_map(|(w, path)| {
            path.iter()
                .enumerate()
                .map(move |(f, p)| (f as u32, Self::identity(w), *p))
        }))
    }

    /// Worker positions visible to at least one camera.
    pub fn visible_ground_truth(&self, cameras: &[CameraPlacement]) -> Result<LabeledTimeline> {
        let cams = cameras
            .iter()
            .map(CameraPlacement::true_camera)
            .collect::<Result<Vec<_>>>()?;
        let mut points = Vec::new();
        for (w, path) in self.paths.iter().enumerate() {
            for (f, p) in path.iter().enumerate() {
                let seen = cams
                    .iter()
                    .any(|cam| cam.to_pixel(*p).is_ok_and(|px| super::observe::sees(cam, &px)));
                if seen {
                    points.push((f as u32, Self::identity(w), *p));
                }
            }
        }
        LabeledTimeline::from_points(points)
    }
}

/// Rate (rad/frame) at which workers near a wall steer back toward the
/// floor centre.
const WALL_TURN_RATE: f64 = 0.07;

/// Correlated random walk per worker that turns away from floor walls.
///
/// Each step has length `walk_speed_px`; the heading receives a Gaussian
/// increment with std `turn_std` every frame. Within a turning radius of
/// a wall the heading is also rotated toward the floor centre, so walkers
/// curve away instead of bouncing. Positions are still reflected as a
/// last resort.
pub fn generate_world(cfg: &WorldConfig) -> Result<World> {
    cfg.validate()?;
    let [w, h] = cfg.floor_size;
    let turn = Normal::new(0.0, cfg.turn_std).expect("validated std");
    let paths = (0..cfg.n_workers)
        .map(|worker| {
            let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(cfg.seed, STREAM_WORLD, worker as u64));
            let mut x = rng.random_range(0.0..=w);
            let mut y = rng.random_range(0.0..=h);
            let mut heading: f64 = rng.random_range(-PI..PI);
            let mut path = Vec::with_capacity(cfg.n_frames as usize);
            path.push(GlobalPoint::new(x, y));
            for _ in 1..cfg.n_frames {
                heading += turn.sample(&mut rng);
                let margin = 2.0 * cfg.walk_speed_px / WALL_TURN_RATE;
                let near_wall = x.min(w - x).min(y.min(h - y)) < margin;
                if near_wall {
                    let inward = (h / 2.0 - y).atan2(w / 2.0 - x);
                    let diff = wrap_angle(inward - heading);
                    if diff.abs() > PI / 2.0 {
                        heading += WALL_TURN_RATE * diff.signum();
                    }
                }
                let nx = x + cfg.walk_speed_px * heading.cos();
                let ny = y + cfg.walk_speed_px * heading.sin();
                if !(0.0..=w).contains(&nx) {
                    heading = PI - heading;
                }
                if !(0.0..=h).contains(&ny) {
                    heading = -heading;
                }
                x = reflect(nx, w);
                y = reflect(ny, h);
                path.push(GlobalPoint::new(x, y));
            }
            path
        })
        .collect();
    Ok(World {
        n_frames: cfg.n_frames,
        paths,
    })
}

fn wrap_angle(a: f64) -> f64 {
    (a + PI).rem_euclid(2.0 * PI) - PI
}

fn reflect(v: f64, max: f64) -> f64 {
    if v < 0.0 {
        (-v).min(max)
    } else if v > max {
        (2.0 * max - v).max(0.0)
    } else {
        v
    }
}
