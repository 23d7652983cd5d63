//! Calibration and resampling onto the shared 130 Hz grid.

use serde::{Deserialize, Serialize};

use crate::dsp::lowpass_zero_phase;
use crate::error::{Error, Result};
use crate::quat::{Quaternion, Vec3};
use crate::types::{CalibratedSample, SAMPLE_PERIOD_S, SAMPLE_RATE_HZ};
use crate::wire::session::DeviceCalibration;

/// Source spacing above which grid points are masked instead of interpolated.
pub const MAX_GAP_PERIODS: f64 = 3.0;
pub const MAX_GYRO_BIAS_DPS: f64 = 50.0;
pub const MAX_ACCEL_BIAS_G: f64 = 0.5;
/// Per-axis smoothing applied before the stillness threshold.
pub const STILL_LOWPASS_HZ: f64 = 10.0;

/// A device's samples on the uniform grid `t0 + k / rate_hz`.
#[derive(Debug, Clone, PartialEq)]
pub struct UniformTrack {
    pub device_id: u8,
    pub t0: f64,
    pub rate_hz: f64,
    pub accel: Vec<Vec3>,
    pub gyro: Vec<Vec3>,
    /// `false` inside source gaps; such entries hold the last valid value.
    pub valid: Vec<bool>,
}

impl UniformTrack {
    /// Track with every sample valid.
    pub fn new(device_id: u8, t0: f64, accel: Vec<Vec3>, gyro: Vec<Vec3>) -> Self {
        assert_eq!(accel.len(), gyro.len(), "accel and gyro lengths differ");
        let valid = vec![true; accel.len()];
        UniformTrack {
            device_id,
            t0,
            rate_hz: SAMPLE_RATE_HZ,
            accel,
            gyro,
            valid,
        }
    }

    pub fn len(&self) -> usize {
        self.accel.len()
    }

    pub fn is_empty(&self) -> bool {
        self.accel.is_empty()
    }

    pub fn time(&self, k: usize) -> f64 {
        self.t0 + k as f64 / self.rate_hz
    }

    pub fn duration_s(&self) -> f64 {
        self.len() as f64 / self.rate_hz
    }

    pub fn valid_count(&self) -> usize {
        self.valid.iter().filter(|&&v| v).count()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Calibration {
    pub gyro_bias: Vec3,
    pub accel_bias: Vec3,
    /// Mounting correction applied after bias removal.
    pub alignment: Quaternion,
}

impl Default for Calibration {
    fn default() -> Self {
        Calibration {
            gyro_bias: Vec3::ZERO,
            accel_bias: Vec3::ZERO,
            alignment: Quaternion::IDENTITY,
        }
    }
}

impl Calibration {
    pub fn validate(&self) -> Result<()> {
        if !(self.gyro_bias.norm() <= MAX_GYRO_BIAS_DPS) {
            return Err(Error::CalibrationOutOfRange(format!(
                "gyro bias {:.2} dps exceeds {MAX_GYRO_BIAS_DPS} dps",
                self.gyro_bias.norm()
            )));
        }
        if !(self.accel_bias.norm() <= MAX_ACCEL_BIAS_G) {
            return Err(Error::CalibrationOutOfRange(format!(
                "accel bias {:.3} g exceeds {MAX_ACCEL_BIAS_G} g",
                self.accel_bias.norm()
            )));
        }
        self.alignment.rotate(Vec3::ZERO)?;
        Ok(())
    }

    pub fn apply(&self, track: &UniformTrack) -> UniformTrack {
        let q = self.alignment;
        UniformTrack {
            accel: track.accel.iter().map(|&a| q.rotate_unchecked(a - self.accel_bias)).collect(),
            gyro: track.gyro.iter().map(|&g| q.rotate_unchecked(g - self.gyro_bias)).collect(),
            ..track.clone()
        }
    }

    pub fn record(&self) -> DeviceCalibration {
        DeviceCalibration {
            gyro_bias_dps: self.gyro_bias,
            accel_bias_g: self.accel_bias,
        }
    }
}

/// Maximal intervals (seconds) where the smoothed gyro magnitude stays below
/// `gyro_thresh_dps` for at least `min_duration_s`. Invalid samples break
/// stillness.
pub fn detect_still(track: &UniformTrack, min_duration_s: f64, gyro_thresh_dps: f64) -> Vec<(f64, f64)> {
    let n = track.len();
    if n == 0 {
        return Vec::new();
    }
    let axis = |f: fn(&Vec3) -> f64| {
        let x: Vec<f64> = track.gyro.iter().map(f).collect();
        lowpass_zero_phase(&x, STILL_LOWPASS_HZ, track.rate_hz)
    };
    let (gx, gy, gz) = (axis(|v| v.x), axis(|v| v.y), axis(|v| v.z));
    let still = |k: usize| track.valid[k] && Vec3::new(gx[k], gy[k], gz[k]).norm() < gyro_thresh_dps;
    let mut out = Vec::new();
    let mut k = 0;
    while k < n {
        if !still(k) {
            k += 1;
            continue;
        }
        let start = k;
        while k < n && still(k) {
            k += 1;
        }
        // samples cover [t_start, t_end + one period)
        let (a, b) = (track.time(start), track.time(k - 1) + 1.0 / track.rate_hz);
        if b - a >= min_duration_s - 1e-9 {
            out.push((a, b));
        }
    }
    out
}

/// Gyro bias = mean rate over the still intervals; accel bias = mean accel
/// minus unit gravity along the mean direction.
pub fn estimate_bias(track: &UniformTrack, still: &[(f64, f64)]) -> Result<Calibration> {
    let needed_s = 1.0;
    let mut g = Vec3::ZERO;
    let mut a = Vec3::ZERO;
    let mut count = 0usize;
    for k in 0..track.len() {
        let t = track.time(k);
        if track.valid[k] && still.iter().any(|&(s, e)| t >= s - 1e-9 && t < e - 1e-9) {
            g += track.gyro[k];
            a += track.accel[k];
            count += 1;
        }
    }
    let found_s = count as f64 / track.rate_hz;
    if found_s < needed_s - 1e-9 {
        return Err(Error::InsufficientStillness { found_s, needed_s });
    }
    let g = g / count as f64;
    let a = a / count as f64;
    let dir = a.normalized().ok_or_else(|| Error::CalibrationOutOfRange("zero mean acceleration".into()))?;
    let cal = Calibration {
        gyro_bias: g,
        accel_bias: a - dir,
        alignment: Quaternion::IDENTITY,
    };
    cal.validate()?;
    Ok(cal)
}

/// Detect stillness with the default thresholds and estimate the bias from
/// the longest still interval (one resting pose).
pub fn calibrate(track: &UniformTrack) -> Result<Calibration> {
    let still = detect_still(track, 1.0, 3.0);
    let longest = still.iter().copied().max_by(|a, b| (a.1 - a.0).total_cmp(&(b.1 - b.0)));
    estimate_bias(track, longest.as_slice())
}

/// Resamples one device onto `t0 + k / 130` for `k < n`.
pub fn resample_device(samples: &[CalibratedSample], t0: f64, n: usize) -> Result<UniformTrack> {
    if samples.len() < 2 {
        return Err(Error::TooFewSamples(format!(
            "device needs at least 2 samples to resample, got {}",
            samples.len()
        )));
    }
    let device_id = samples[0].device_id;
    let max_gap = MAX_GAP_PERIODS * SAMPLE_PERIOD_S + 1e-9;
    let mut accel = Vec::with_capacity(n);
    let mut gyro = Vec::with_capacity(n);
    let mut valid = Vec::with_capacity(n);
    let mut j = 0;
    let mut last = (samples[0].accel, samples[0].gyro);
    for k in 0..n {
        let t = t0 + k as f64 / SAMPLE_RATE_HZ;
        while j + 2 < samples.len() && samples[j + 1].t_s <= t {
            j += 1;
        }
        let (s0, s1) = (&samples[j], &samples[j + 1]);
        let ok = if (t - s0.t_s).abs() <= 1e-9 {
            last = (s0.accel, s0.gyro);
            true
        } else if (t - s1.t_s).abs() <= 1e-9 {
            last = (s1.accel, s1.gyro);
            true
        } else if t < s0.t_s || t > s1.t_s || s1.t_s - s0.t_s > max_gap {
            false
        } else {
            let u = (t - s0.t_s) / (s1.t_s - s0.t_s);
            last = (s0.accel + (s1.accel - s0.accel) * u, s0.gyro + (s1.gyro - s0.gyro) * u);
            true
        };
        accel.push(last.0);
        gyro.push(last.1);
        valid.push(ok);
    }
    Ok(UniformTrack {
        device_id,
        t0,
        rate_hz: SAMPLE_RATE_HZ,
        accel,
        gyro,
        valid,
    })
}

/// Resamples every device present in `samples` onto one shared grid that
/// spans the interval all devices cover. Tracks are ordered by device id.
pub fn resample_uniform(samples: &[CalibratedSample]) -> Result<Vec<UniformTrack>> {
    let mut by_device: Vec<Vec<CalibratedSample>> = Vec::new();
    for s in samples {
        let d = s.device_id as usize;
        if by_device.len() <= d {
            by_device.resize(d + 1, Vec::new());
        }
        by_device[d].push(*s);
    }
    let devices: Vec<&Vec<CalibratedSample>> = by_device.iter().filter(|v| !v.is_empty()).collect();
    if devices.is_empty() {
        return Err(Error::TooFewSamples("no samples to resample".into()));
    }
    for d in &devices {
        if d.len() < 2 {
            return Err(Error::TooFewSamples(format!(
                "device {} has {} sample(s); at least 2 are required",
                d[0].device_id,
                d.len()
            )));
        }
        if d.windows(2).any(|w| w[1].t_s < w[0].t_s) {
            return Err(Error::NonMonotoneTime {
                device: d[0].device_id,
                t_s: d.windows(2).find(|w| w[1].t_s < w[0].t_s).map_or(0.0, |w| w[1].t_s),
            });
        }
    }
    let t0 = devices.iter().map(|d| d[0].t_s).fold(f64::NEG_INFINITY, f64::max);
    let end = devices.iter().map(|d| d[d.len() - 1].t_s).fold(f64::INFINITY, f64::min);
    if end < t0 {
        return Err(Error::InsufficientOverlap(format!(
            "devices share no common interval (latest start {t0:.3} s, earliest end {end:.3} s)"
        )));
    }
    let n = ((end - t0) * SAMPLE_RATE_HZ + 1e-6).floor() as usize + 1;
    devices.iter().map(|d| resample_device(d, t0, n)).collect()
}
