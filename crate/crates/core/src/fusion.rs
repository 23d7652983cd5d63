//! Gradient-descent (Madgwick-style) IMU orientation filter and earth-frame
//! linear acceleration.

use crate::preprocess::UniformTrack;
use crate::quat::{Quaternion, Vec3};

pub const DEFAULT_BETA: f64 = 0.1;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FusionConfig {
    /// Correction gain, rad/s.
    pub beta: f64,
    /// Starting orientation; `None` derives it from the first valid accel
    /// sample (shortest arc onto +z, zero yaw).
    pub initial: Option<Quaternion>,
}

impl Default for FusionConfig {
    fn default() -> Self {
        FusionConfig {
            beta: DEFAULT_BETA,
            initial: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct OrientationTrack {
    pub track: UniformTrack,
    /// Sensor-to-earth orientation per grid point.
    pub q: Vec<Quaternion>,
    /// Gravity-removed acceleration in the earth frame, g.
    pub a_earth: Vec<Vec3>,
}

impl OrientationTrack {
    pub fn device_id(&self) -> u8 {
        self.track.device_id
    }

    pub fn len(&self) -> usize {
        self.q.len()
    }

    pub fn is_empty(&self) -> bool {
        self.q.is_empty()
    }

    pub fn valid(&self) -> &[bool] {
        &self.track.valid
    }
}

/// Initial orientation aligning a measured accel direction with +z.
pub fn orientation_from_accel(accel: Vec3) -> Quaternion {
    Quaternion::from_two_vectors(accel, Vec3::Z)
}

/// One filter step: gyro rate `omega` in rad/s, measured `accel` in any unit.
pub fn madgwick_step(q: Quaternion, omega: Vec3, accel: Vec3, beta: f64, dt: f64) -> Quaternion {
    let Quaternion { w: q0, x: q1, y: q2, z: q3 } = q;
    let mut dq = (q * Quaternion::from_vector(omega)).scale(0.5);
    if let Some(a) = accel.normalized() {
        // objective f = conj(q) * (0,0,0,1) * q - a, gradient J^T f
        let f0 = 2.0 * (q1 * q3 - q0 * q2) - a.x;
        let f1 = 2.0 * (q0 * q1 + q2 * q3) - a.y;
        let f2 = 2.0 * (0.5 - q1 * q1 - q2 * q2) - a.z;
        let grad = Quaternion::new(
            -2.0 * q2 * f0 + 2.0 * q1 * f1,
            2.0 * q3 * f0 + 2.0 * q0 * f1 - 4.0 * q1 * f2,
            -2.0 * q0 * f0 + 2.0 * q3 * f1 - 4.0 * q2 * f2,
            2.0 * q1 * f0 + 2.0 * q2 * f1,
        );
        let n = grad.norm();
        // an exact fixed point has no direction to correct along
        if n > 1e-12 {
            dq = dq - grad.scale(beta / n);
        }
    }
    (q + dq.scale(dt)).normalize().unwrap_or(q)
}

/// `rotate(q[k], accel[k]) - (0, 0, 1)`.
pub fn earth_accel(accel: &[Vec3], q: &[Quaternion]) -> Vec<Vec3> {
    accel
        .iter()
        .zip(q)
        .map(|(&a, &q)| q.rotate_unchecked(a) - Vec3::Z)
        .collect()
}

/// Runs the filter over a calibrated uniform track. Invalid grid points hold
/// the last orientation and stay marked invalid.
pub fn fuse_orientation(track: &UniformTrack, config: &FusionConfig) -> OrientationTrack {
    let n = track.len();
    let dt = 1.0 / track.rate_hz;
    let deg = std::f64::consts::PI / 180.0;
    let first = (0..n).find(|&k| track.valid[k]);
    let mut q = config
        .initial
        .or_else(|| first.map(|k| orientation_from_accel(track.accel[k])))
        .unwrap_or(Quaternion::IDENTITY);
    let mut qs = Vec::with_capacity(n);
    for k in 0..n {
        if track.valid[k] {
            // the first valid sample already defined q when initializing from accel
            if !(config.initial.is_none() && Some(k) == first) {
                q = madgwick_step(q, track.gyro[k] * deg, track.accel[k], config.beta, dt);
            }
        }
        qs.push(q);
    }
    let a_earth = earth_accel(&track.accel, &qs);
    OrientationTrack {
        track: track.clone(),
        q: qs,
        a_earth,
    }
}
