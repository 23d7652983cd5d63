//! Second-order Butterworth sections and zero-phase filtering.

use std::f64::consts::{PI, SQRT_2};

/// Biquad coefficients, `a0` normalized to 1.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Biquad {
    pub b: [f64; 3],
    pub a: [f64; 2],
}

impl Biquad {
    /// 2nd-order Butterworth low-pass (bilinear transform, prewarped).
    pub fn lowpass(cutoff_hz: f64, fs_hz: f64) -> Biquad {
        let k = (PI * cutoff_hz / fs_hz).tan();
        let norm = 1.0 / (1.0 + SQRT_2 * k + k * k);
        let b0 = k * k * norm;
        Biquad {
            b: [b0, 2.0 * b0, b0],
            a: [2.0 * (k * k - 1.0) * norm, (1.0 - SQRT_2 * k + k * k) * norm],
        }
    }

    /// 2nd-order Butterworth high-pass.
    pub fn highpass(cutoff_hz: f64, fs_hz: f64) -> Biquad {
        let k = (PI * cutoff_hz / fs_hz).tan();
        let norm = 1.0 / (1.0 + SQRT_2 * k + k * k);
        Biquad {
            b: [norm, -2.0 * norm, norm],
            a: [2.0 * (k * k - 1.0) * norm, (1.0 - SQRT_2 * k + k * k) * norm],
        }
    }

    fn dc_gain(&self) -> f64 {
        (self.b[0] + self.b[1] + self.b[2]) / (1.0 + self.a[0] + self.a[1])
    }

    /// Transposed direct form II state for a constant input `x0` at steady state.
    fn steady_state(&self, x0: f64) -> [f64; 2] {
        let y0 = self.dc_gain() * x0;
        let z2 = self.b[2] * x0 - self.a[1] * y0;
        let z1 = self.b[1] * x0 - self.a[0] * y0 + z2;
        [z1, z2]
    }

    fn run(&self, data: &mut [f64], mut z: [f64; 2]) {
        let [b0, b1, b2] = self.b;
        let [a1, a2] = self.a;
        for v in data.iter_mut() {
            let x = *v;
            let y = b0 * x + z[0];
            z[0] = b1 * x - a1 * y + z[1];
            z[1] = b2 * x - a2 * y;
            *v = y;
        }
    }

    /// Causal filtering, initialized at steady state on the first sample.
    pub fn filter(&self, x: &[f64]) -> Vec<f64> {
        let mut out = x.to_vec();
        if let Some(&x0) = x.first() {
            self.run(&mut out, self.steady_state(x0));
        }
        out
    }

    /// Forward-backward (zero-phase) filtering with odd-reflection padding.
    pub fn filtfilt(&self, x: &[f64], pad: usize) -> Vec<f64> {
        let n = x.len();
        if n < 2 {
            return x.to_vec();
        }
        let pad = pad.min(n - 1);
        let mut ext = Vec::with_capacity(n + 2 * pad);
        let (first, last) = (x[0], x[n - 1]);
        ext.extend((1..=pad).rev().map(|i| 2.0 * first - x[i]));
        ext.extend_from_slice(x);
        ext.extend((1..=pad).map(|i| 2.0 * last - x[n - 1 - i]));

        let z = self.steady_state(ext[0]);
        self.run(&mut ext, z);
        ext.reverse();
        let z = self.steady_state(ext[0]);
        self.run(&mut ext, z);
        ext.reverse();
        ext.drain(..pad);
        ext.truncate(n);
        ext
    }
}

/// Padding length used for a cutoff: three periods of the cutoff, at least 9 samples.
pub fn default_pad(cutoff_hz: f64, fs_hz: f64) -> usize {
    ((3.0 * fs_hz / cutoff_hz).ceil() as usize).max(9)
}

pub fn lowpass_zero_phase(x: &[f64], cutoff_hz: f64, fs_hz: f64) -> Vec<f64> {
    Biquad::lowpass(cutoff_hz, fs_hz).filtfilt(x, default_pad(cutoff_hz, fs_hz))
}

pub fn highpass_zero_phase(x: &[f64], cutoff_hz: f64, fs_hz: f64) -> Vec<f64> {
    Biquad::highpass(cutoff_hz, fs_hz).filtfilt(x, default_pad(cutoff_hz, fs_hz))
}

/// Root mean square, `0` for an empty slice.
pub fn rms(x: &[f64]) -> f64 {
    if x.is_empty() {
        return 0.0;
    }
    (x.iter().map(|v| v * v).sum::<f64>() / x.len() as f64).sqrt()
}

/// Pearson correlation; `0` when either series is constant.
pub fn pearson(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len().min(b.len());
    if n < 2 {
        return 0.0;
    }
    let (a, b) = (&a[..n], &b[..n]);
    let ma = a.iter().sum::<f64>() / n as f64;
    let mb = b.iter().sum::<f64>() / n as f64;
    let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        let (dx, dy) = (x - ma, y - mb);
        sab += dx * dy;
        saa += dx * dx;
        sbb += dy * dy;
    }
    if saa <= 0.0 || sbb <= 0.0 {
        return 0.0;
    }
    sab / (saa * sbb).sqrt()
}
