use std::collections::{BTreeMap, BTreeSet};

use trackfuse::fusion::fuse;
use trackfuse::geometry::{anchor_point, CoordinateMode};
use trackfuse::metrics::{evaluate, LabeledTimeline, MatchingParams};
use trackfuse::simulator::{simulate, NoiseConfig, Scenario, World};

fn short(mut s: Scenario, frames: u32, seed: u64) -> Scenario {
    s.world.n_frames = frames;
    s.with_seed(seed)
}

#[test]
fn same_seed_same_output() {
    let s = short(Scenario::reference_with_features(), 120, 9);
    let (a, b) = (simulate(&s).unwrap(), simulate(&s).unwrap());
    assert_eq!(a.observations, b.observations);
    assert_eq!(a.world.paths, b.world.paths);
    assert_eq!(a.ground_truth, b.ground_truth);
    let c = simulate(&s.clone().with_seed(10)).unwrap();
    assert_ne!(a.world.paths, c.world.paths);
}

/// Reference layout with perfect detections, calibration and flat people.
fn perfect(seed: u64, workers: usize) -> Scenario {
    let mut s = short(Scenario::reference(), 200, seed);
    s.world.n_workers = workers;
    s.noise = NoiseConfig::default();
    for c in &mut s.cameras {
        c.misalignment = 0.0;
        c.mount_height_ratio = 0.0;
        c.distortion = None;
    }
    s
}

fn closest_approach(world: &World) -> f64 {
    let mut best = f64::INFINITY;
    for a in 0..world.n_workers() {
        for b in a + 1..world.n_workers() {
            for f in 0..world.n_frames {
                best = best.min(world.position(a, f).distance(&world.position(b, f)));
            }
        }
    }
    best
}

// Workers that walk side by side inside the merge gates are
// indistinguishable without noise too, so only separated scenes count.
#[test]
fn noiseless_flat_world_is_recovered_exactly() {
    let mut checked = 0;
    for seed in 1..=100 {
        let s = perfect(seed, 3);
        let sim = simulate(&s).unwrap();
        if closest_approach(&sim.world) <= s.fusion.merge_avg_dist {
            continue;
        }
        checked += 1;
        for mode in [CoordinateMode::Foot, CoordinateMode::BboxCenter] {
            let mut cfg = s.fusion.clone();
            cfg.coordinate_mode = mode;
            let tracks = fuse(&sim.tracklets(), &sim.rig, &cfg).unwrap();
            assert_eq!(tracks.len(), 3, "seed {seed} {mode}");
            let pred = LabeledTimeline::from_tracks(&tracks).unwrap();
            let r = evaluate(&sim.ground_truth, &pred, &MatchingParams::default()).unwrap();
            assert_eq!((r.hota, r.idf1, r.mota), (100.0, 100.0, 100.0), "seed {seed} {mode}");
        }
    }
    assert!(checked >= 5, "only {checked} separated scenes");
}

#[test]
fn foot_anchor_is_closer_to_truth_than_box_center() {
    let mut s = short(Scenario::reference(), 300, 4);
    s.noise.fp_rate = 0.0;
    let sim = simulate(&s).unwrap();
    let (mut n, mut foot_sum, mut center_sum) = (0usize, 0.0, 0.0);
    for (obs, placement) in sim.observations.iter().zip(&s.cameras) {
        let cam = placement.true_camera().unwrap();
        for (t, id) in obs.tracklets.iter().zip(&obs.identities) {
            let worker = (id.unwrap() - 1) as usize;
            for d in &t.detections {
                let truth = sim.world.position(worker, d.frame);
                let err = |mode| cam.to_floor(anchor_point(&d.bbox, mode, &cam)).unwrap().distance(&truth);
                foot_sum += err(CoordinateMode::Foot);
                center_sum += err(CoordinateMode::BboxCenter);
                n += 1;
            }
        }
    }
    assert!(n >= 1000, "only {n} detections");
    let (foot, center) = (foot_sum / n as f64, center_sum / n as f64);
    assert!(foot < center, "foot {foot:.2} center {center:.2}");
}

/// Frames of each (camera, worker) covered by its tracklets, asserting the
/// tracklets do not overlap.
fn coverage(s: &Scenario) -> BTreeMap<(u32, u64), BTreeSet<u32>> {
    let sim = simulate(s).unwrap();
    let mut out: BTreeMap<(u32, u64), BTreeSet<u32>> = BTreeMap::new();
    for obs in &sim.observations {
        for (t, id) in obs.tracklets.iter().zip(&obs.identities) {
            let frames = out.entry((obs.camera_id, id.unwrap())).or_default();
            for d in &t.detections {
                assert!(frames.insert(d.frame), "frame {} covered twice", d.frame);
            }
        }
    }
    out
}

#[test]
fn fragmentation_partitions_the_frames() {
    for seed in [2, 5] {
        let mut whole = perfect(seed, 8);
        whole.cameras = Scenario::reference().cameras;
        let mut split = whole.clone();
        split.noise.frag_prob = 0.3;
        let (a, b) = (coverage(&whole), coverage(&split));
        assert_eq!(a, b, "seed {seed}");

        let sim = simulate(&split).unwrap();
        let unfragmented: usize = simulate(&whole).unwrap().tracklets().len();
        assert!(sim.tracklets().len() > unfragmented, "seed {seed}: nothing fragmented");
    }
}

#[test]
fn ground_truth_lists_visible_workers_only() {
    let s = short(Scenario::reference(), 100, 3);
    let sim = simulate(&s).unwrap();
    let cams: Vec<_> = s.cameras.iter().map(|c| c.true_camera().unwrap()).collect();
    for (frame, pts) in sim.ground_truth.frames() {
        for (id, p) in pts {
            assert_eq!(*p, sim.world.position((*id - 1) as usize, frame));
            let foot_in_view = cams.iter().any(|c| c.contains(&c.to_pixel(*p).unwrap(), -1e-6));
            assert!(foot_in_view);
        }
    }
    assert_eq!(World::identity(0), 1);
}
