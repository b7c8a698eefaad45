//! Single-target localization from images and constant-acceleration
//! Kalman tracking.

use nalgebra::{Matrix2, Matrix2x6, Matrix6, Matrix6x2, SymmetricEigen, Vector2, Vector6};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{Point, VoxelGrid};
use crate::reconstruction::Image;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PositionEstimate {
    pub k: u64,
    pub position: Point,
    pub peak: f64,
    pub voxel: usize,
}

/// Center of the brightest voxel; ties go to the lowest index.
pub fn localize(k: u64, image: &Image, grid: &VoxelGrid) -> Result<PositionEstimate> {
    if image.len() != grid.len() {
        return Err(Error::LengthMismatch { expected: grid.len(), actual: image.len() });
    }
    let mut best: Option<(usize, f64)> = None;
    for (j, &v) in image.values.iter().enumerate() {
        match best {
            Some((_, b)) if !(v > b) => {}
            _ if v.is_nan() => {}
            _ => best = Some((j, v)),
        }
    }
    let (voxel, peak) = best.ok_or(Error::EmptyInput("image has no finite voxels"))?;
    Ok(PositionEstimate { k, position: grid.center(voxel), peak, voxel })
}

pub fn localization_error(estimate: Point, truth: Point) -> f64 {
    estimate.distance(truth)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct KalmanConfig {
    /// White-noise jerk intensity, m^2/s^5.
    pub process_noise: f64,
    /// Measurement variance as a multiple of the squared voxel width.
    pub measurement_scale: f64,
    /// Initial variance of every state component.
    pub initial_variance: f64,
    /// Time between frames, seconds.
    pub frame_interval: f64,
}

impl Default for KalmanConfig {
    fn default() -> Self {
        KalmanConfig { process_noise: 1.0, measurement_scale: 4.0, initial_variance: 10.0, frame_interval: 0.1 }
    }
}

impl KalmanConfig {
    pub fn measurement_covariance(&self, voxel_width: f64) -> Matrix2<f64> {
        Matrix2::identity() * (voxel_width * voxel_width * self.measurement_scale)
    }
}

/// State `(x, y, vx, vy, ax, ay)` with its covariance.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrackState {
    pub k: u64,
    pub state: Vector6<f64>,
    pub covariance: Matrix6<f64>,
}

impl TrackState {
    pub fn start(z: &PositionEstimate, initial_variance: f64) -> Self {
        let mut state = Vector6::zeros();
        state[0] = z.position.x;
        state[1] = z.position.y;
        TrackState { k: z.k, state, covariance: Matrix6::identity() * initial_variance }
    }

    pub fn position(&self) -> Point {
        Point::new(self.state[0], self.state[1])
    }

    pub fn velocity(&self) -> Vector2<f64> {
        Vector2::new(self.state[2], self.state[3])
    }

    pub fn acceleration(&self) -> Vector2<f64> {
        Vector2::new(self.state[4], self.state[5])
    }
}

fn transition(dt: f64) -> Matrix6<f64> {
    let mut f = Matrix6::identity();
    for axis in 0..2 {
        f[(axis, 2 + axis)] = dt;
        f[(axis, 4 + axis)] = 0.5 * dt * dt;
        f[(2 + axis, 4 + axis)] = dt;
    }
    f
}

fn process_covariance(dt: f64, q: f64) -> Matrix6<f64> {
    let (dt2, dt3) = (dt * dt, dt * dt * dt);
    let (dt4, dt5) = (dt3 * dt, dt3 * dt2);
    // per-axis blocks indexed by derivative order
    let block = [
        [dt5 / 20.0, dt4 / 8.0, dt3 / 6.0],
        [dt4 / 8.0, dt3 / 3.0, dt2 / 2.0],
        [dt3 / 6.0, dt2 / 2.0, dt],
    ];
    let mut m = Matrix6::zeros();
    for axis in 0..2 {
        for a in 0..3 {
            for b in 0..3 {
                m[(2 * a + axis, 2 * b + axis)] = q * block[a][b];
            }
        }
    }
    m
}

fn observation() -> Matrix2x6<f64> {
    let mut h = Matrix2x6::zeros();
    h[(0, 0)] = 1.0;
    h[(1, 1)] = 1.0;
    h
}

fn symmetrize(m: &Matrix6<f64>) -> Matrix6<f64> {
    (m + m.transpose()) * 0.5
}

fn check_psd(m: &Matrix6<f64>) -> Result<()> {
    let tol = 1e-12 * m.trace().abs().max(1.0);
    let min = SymmetricEigen::new(*m).eigenvalues.min();
    if min < -tol || !min.is_finite() {
        return Err(Error::Factorization {
            what: "track covariance",
            diagnostics: format!("smallest eigenvalue {min:e}"),
        });
    }
    Ok(())
}

pub fn kalman_predict(track: &TrackState, dt: f64, q: f64) -> Result<TrackState> {
    if !(dt > 0.0 && dt.is_finite()) {
        return Err(Error::param("dt", format!("must be > 0, got {dt}")));
    }
    if !(q >= 0.0 && q.is_finite()) {
        return Err(Error::param("process_noise", format!("must be >= 0, got {q}")));
    }
    let f = transition(dt);
    let covariance = symmetrize(&(f * track.covariance * f.transpose() + process_covariance(dt, q)));
    Ok(TrackState { k: track.k, state: f * track.state, covariance })
}

/// Joseph-form measurement update.
pub fn kalman_update(track: &TrackState, z: &PositionEstimate, r: &Matrix2<f64>) -> Result<TrackState> {
    let h = observation();
    let s = h * track.covariance * h.transpose() + r;
    let s_chol = s.cholesky().ok_or_else(|| Error::Factorization {
        what: "innovation covariance",
        diagnostics: format!("S = {s:?}"),
    })?;
    let pht: Matrix6x2<f64> = track.covariance * h.transpose();
    let gain = s_chol.solve(&pht.transpose()).transpose();
    let innovation = Vector2::new(z.position.x, z.position.y) - h * track.state;
    let state = track.state + gain * innovation;
    let ikh = Matrix6::identity() - gain * h;
    let covariance = symmetrize(&(ikh * track.covariance * ikh.transpose() + gain * r * gain.transpose()));
    check_psd(&covariance)?;
    Ok(TrackState { k: z.k, state, covariance })
}

pub fn kalman_step(
    track: &TrackState,
    z: &PositionEstimate,
    dt: f64,
    q: f64,
    r: &Matrix2<f64>,
) -> Result<TrackState> {
    check_psd(&track.covariance)?;
    let predicted = kalman_predict(track, dt, q)?;
    kalman_update(&predicted, z, r)
}

/// Runs the filter over a stream of estimates, one output per input. The
/// first estimate seeds the track.
pub fn track_positions(estimates: &[PositionEstimate], config: &KalmanConfig, voxel_width: f64) -> Result<Vec<TrackState>> {
    let r = config.measurement_covariance(voxel_width);
    let mut out: Vec<TrackState> = Vec::with_capacity(estimates.len());
    for z in estimates {
        let next = match out.last() {
            None => TrackState::start(z, config.initial_variance),
            Some(prev) => {
                let steps = z.k.saturating_sub(prev.k).max(1);
                kalman_step(prev, z, config.frame_interval * steps as f64, config.process_noise, &r)?
            }
        };
        out.push(next);
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq)]
pub struct ErrorSummary {
    pub count: usize,
    pub mean: f64,
    pub median: f64,
    pub p95: f64,
    pub max: f64,
    /// Sorted `(error, cumulative fraction)` pairs.
    pub cdf: Vec<(f64, f64)>,
}

/// Linear-interpolation percentile of sorted data, `q` in [0, 1].
fn percentile(sorted: &[f64], q: f64) -> f64 {
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (sorted[hi] - sorted[lo]) * (pos - lo as f64)
}

pub fn error_summary(errors: &[f64]) -> Result<ErrorSummary> {
    if errors.is_empty() {
        return Err(Error::EmptyInput("error sequence"));
    }
    if errors.iter().any(|e| !e.is_finite()) {
        return Err(Error::param("errors", "non-finite localization error"));
    }
    let mut sorted = errors.to_vec();
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len();
    let cdf = sorted.iter().enumerate().map(|(i, &e)| (e, (i + 1) as f64 / n as f64)).collect();
    Ok(ErrorSummary {
        count: n,
        // running mean: exact for constant input
        mean: errors.iter().enumerate().fold(0.0, |m, (i, &e)| m + (e - m) / (i + 1) as f64),
        median: percentile(&sorted, 0.5),
        p95: percentile(&sorted, 0.95),
        max: sorted[n - 1],
        cdf,
    })
}
