//! Constant-velocity Kalman filter over floor positions.

use nalgebra::{Matrix2x4, Matrix4, Vector2, Vector4};
use serde::{Deserialize, Serialize};

use super::GlobalTrack;
use crate::geometry::GlobalPoint;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct KalmanParams {
    /// Velocity process noise per frame, floor px^2/frame^2.
    pub process_noise: f64,
    /// Position measurement noise, floor px^2.
    pub measurement_noise: f64,
}

impl Default for KalmanParams {
    fn default() -> Self {
        Self {
            process_noise: 1.0,
            measurement_noise: 10.0,
        }
    }
}

impl KalmanParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.process_noise >= 0.0) {
            return Err(Error::invalid("kalman.process_noise", "must be >= 0"));
        }
        if !(self.measurement_noise > 0.0) {
            return Err(Error::invalid("kalman.measurement_noise", "must be > 0"));
        }
        Ok(())
    }
}

/// State `(x, y, vx, vy)` and its covariance.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KalmanState {
    pub state: Vector4<f64>,
    pub covariance: Matrix4<f64>,
}

fn transition() -> Matrix4<f64> {
    let mut f = Matrix4::identity();
    f[(0, 2)] = 1.0;
    f[(1, 3)] = 1.0;
    f
}

fn observation() -> Matrix2x4<f64> {
    Matrix2x4::new(1.0, 0.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0)
}

impl KalmanState {
    pub fn new(position: GlobalPoint, velocity: Vector2<f64>, covariance: Matrix4<f64>) -> Self {
        Self {
            state: Vector4::new(position.x, position.y, velocity.x, velocity.y),
            covariance,
        }
    }

    pub fn position(&self) -> GlobalPoint {
        GlobalPoint::new(self.state[0], self.state[1])
    }

    pub fn velocity(&self) -> Vector2<f64> {
        Vector2::new(self.state[2], self.state[3])
    }

    /// Advances the state by one frame.
    pub fn predict(&mut self, params: &KalmanParams) {
        let f = transition();
        let mut q = Matrix4::zeros();
        q[(2, 2)] = params.process_noise;
        q[(3, 3)] = params.process_noise;
        self.state = f * self.state;
        self.covariance = f * self.covariance * f.transpose() + q;
        self.symmetrize();
    }

    pub fn update(&mut self, measurement: GlobalPoint, params: &KalmanParams) {
        let h = observation();
        let z = Vector2::new(measurement.x, measurement.y);
        let innovation = z - h * self.state;
        let s = h * self.covariance * h.transpose()
            + nalgebra::Matrix2::identity() * params.measurement_noise;
        let Some(s_inv) = s.try_inverse() else {
            return;
        };
        let gain = self.covariance * h.transpose() * s_inv;
        self.state += gain * innovation;
        // Joseph form
        let i_kh = Matrix4::identity() - gain * h;
        self.covariance = i_kh * self.covariance * i_kh.transpose()
            + gain * gain.transpose() * params.measurement_noise;
        self.symmetrize();
    }

    fn symmetrize(&mut self) {
        self.covariance = (self.covariance + self.covariance.transpose()) * 0.5;
    }

    /// Fits the filter over a frame-ordered timeline and returns the state at
    /// its last frame. Initialized from the first two points, or with zero
    /// velocity for a single point. Frame gaps are bridged by repeated
    /// prediction.
    pub fn fit(timeline: &[(u32, GlobalPoint)], params: &KalmanParams) -> Option<Self> {
        let r = params.measurement_noise;
        let (&(f0, p0), rest) = timeline.split_first()?;
        let Some(&(f1, p1)) = rest.first() else {
            let cov = Matrix4::from_diagonal(&Vector4::new(r, r, 100.0, 100.0));
            return Some(Self::new(p0, Vector2::zeros(), cov));
        };
        let dt = f64::from(f1.saturating_sub(f0).max(1));
        let velocity = (p1.to_vector() - p0.to_vector()) / dt;
        let v_var = 2.0 * r / (dt * dt);
        let mut kf = Self::new(p1, velocity, Matrix4::from_diagonal(&Vector4::new(r, r, v_var, v_var)));
        let mut frame = f1;
        for &(f, p) in &rest[1..] {
            for _ in frame..f {
                kf.predict(params);
            }
            kf.update(p, params);
            frame = f;
        }
        Some(kf)
    }
}

/// Predicted position and velocity of a track some frames past its end.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Prediction {
    pub position: GlobalPoint,
    pub velocity: Vector2<f64>,
}

/// Fits a constant-velocity filter over the track and propagates it
/// `n_frames` past the last point. An empty track predicts the origin with
/// zero velocity.
pub fn kalman_predict(track: &GlobalTrack, n_frames: u32, params: &KalmanParams) -> Prediction {
    predict_timeline(&track.timeline(), n_frames, params)
}

pub(crate) fn predict_timeline(timeline: &[(u32, GlobalPoint)], n_frames: u32, params: &KalmanParams) -> Prediction {
    let Some(mut kf) = KalmanState::fit(timeline, params) else {
        return Prediction {
            position: GlobalPoint::default(),
            velocity: Vector2::zeros(),
        };
    };
    for _ in 0..n_frames {
        kf.predict(params);
    }
    Prediction {
        position: kf.position(),
        velocity: kf.velocity(),
    }
}

#[cfg(test)]
mod tests {
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, Normal};

    use super::*;

    fn line(n: u32, start: (f64, f64), step: (f64, f64)) -> Vec<(u32, GlobalPoint)> {
        (0..n)
            .map(|i| {
                let t = f64::from(i);
                (i, GlobalPoint::new(start.0 + step.0 * t, start.1 + step.1 * t))
            })
            .collect()
    }

    #[test]
    fn stationary_track_stays_put() {
        let tl = line(10, (50.0, 50.0), (0.0, 0.0));
        let p = predict_timeline(&tl, 5, &KalmanParams::default());
        assert!(p.position.distance(&GlobalPoint::new(50.0, 50.0)) < 1e-6);
    }

    #[test]
    fn exact_linear_motion() {
        let tl = line(20, (0.0, 0.0), (2.0, 1.0));
        let p = predict_timeline(&tl, 3, &KalmanParams::default());
        // closed form: last point (38, 19) plus 3 steps of (2, 1)
        assert!(p.position.distance(&GlobalPoint::new(44.0, 22.0)) < 0.5);
        assert!((p.velocity - Vector2::new(2.0, 1.0)).norm() < 1e-9);
    }

    #[test]
    fn noise_free_error_small_for_all_short_gaps() {
        let tl = line(12, (100.0, -40.0), (-3.5, 7.25));
        let (_, last_p) = *tl.last().unwrap();
        for g in 1..=10u32 {
            let p = predict_timeline(&tl, g, &KalmanParams::default());
            let truth = GlobalPoint::new(last_p.x - 3.5 * f64::from(g), last_p.y + 7.25 * f64::from(g));
            assert!(p.position.distance(&truth) < 1e-3, "gap {g}");
        }
    }

    #[test]
    fn noisy_linear_motion_one_step() {
        let params = KalmanParams::default();
        let mut total = 0.0;
        for seed in 0..30u64 {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let noise = Normal::new(0.0, 1.0).unwrap();
            let tl: Vec<_> = line(20, (0.0, 0.0), (2.0, 1.0))
                .into_iter()
                .map(|(f, p)| (f, GlobalPoint::new(p.x + noise.sample(&mut rng), p.y + noise.sample(&mut rng))))
                .collect();
            let p = predict_timeline(&tl, 1, &params);
            total += p.position.distance(&GlobalPoint::new(40.0, 20.0));
        }
        assert!(total / 30.0 < 3.0, "mean error {}", total / 30.0);
    }

    #[test]
    fn single_point_predicts_zero_velocity() {
        let tl = vec![(4, GlobalPoint::new(3.0, 4.0))];
        let p = predict_timeline(&tl, 7, &KalmanParams::default());
        assert_eq!(p.position, GlobalPoint::new(3.0, 4.0));
        assert_eq!(p.velocity, Vector2::zeros());
    }

    #[test]
    fn covariance_stays_symmetric_psd_diagonal() {
        let tl: Vec<_> = (0..30u32)
            .filter(|f| f % 4 != 3)
            .map(|f| (f, GlobalPoint::new(f64::from(f).sin() * 10.0, f64::from(f) * 2.0)))
            .collect();
        let kf = KalmanState::fit(&tl, &KalmanParams::default()).unwrap();
        let c = kf.covariance;
        assert!((c - c.transpose()).abs().max() < 1e-9);
        assert!((0..4).all(|i| c[(i, i)] >= 0.0));
    }
}
