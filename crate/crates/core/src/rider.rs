//! Rider motion relative to the horse: lag alignment against the waist
//! sensor, earth-frame residuals, the Movement Magnitude Index (windowed RMS
//! of the residual magnitude) and limb x time activity maps.

use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::dsp::pearson;
use crate::error::{Error, Result};
use crate::fusion::OrientationTrack;
use crate::quat::Vec3;
use crate::types::Placement;

pub const DEFAULT_MAX_LAG: usize = 10;
pub const MIN_OVERLAP_S: f64 = 5.0;
pub const DEFAULT_WINDOW_S: f64 = 1.0;
pub const DEFAULT_STRIDE_S: f64 = 0.25;
pub const DEFAULT_BIN_S: f64 = 5.0;
/// Reference RMS below which the normalized index is undefined.
pub const MIN_REFERENCE_RMS_G: f64 = 1e-3;

/// Lag (samples) maximizing the correlation of `|limb[k]|` with
/// `|waist[k - lag]|` over `-max_lag..=max_lag`. When no lag clears the
/// noise floor `4 / sqrt(n)` the series are treated as unrelated and the lag
/// is 0. Ties go to the smaller `|lag|`, then to the negative lag.
pub fn align_lag(
    limb: &[Vec3],
    limb_valid: &[bool],
    waist: &[Vec3],
    waist_valid: &[bool],
    rate_hz: f64,
    max_lag: usize,
) -> Result<i32> {
    let n = limb.len().min(waist.len());
    let both = (0..n).filter(|&k| limb_valid[k] && waist_valid[k]).count();
    if (both as f64) < MIN_OVERLAP_S * rate_hz - 1e-9 {
        return Err(Error::InsufficientOverlap(format!(
            "lag alignment needs {MIN_OVERLAP_S} s of jointly valid data, found {:.2} s",
            both as f64 / rate_hz
        )));
    }
    let lm: Vec<f64> = limb.iter().map(|v| v.norm()).collect();
    let wm: Vec<f64> = waist.iter().map(|v| v.norm()).collect();
    let max_lag = max_lag as i32;
    let mut best: Option<(f64, i32)> = None;
    let mut lags: Vec<i32> = (-max_lag..=max_lag).collect();
    lags.sort_by_key(|&l| (l.abs(), l > 0));
    for lag in lags {
        let (mut a, mut b) = (Vec::with_capacity(n), Vec::with_capacity(n));
        for k in 0..n {
            let j = k as i64 - lag as i64;
            if j < 0 || j >= n as i64 {
                continue;
            }
            let j = j as usize;
            if limb_valid[k] && waist_valid[j] {
                a.push(lm[k]);
                b.push(wm[j]);
            }
        }
        let r = pearson(&a, &b);
        // strictly greater keeps the earlier (preferred) lag on ties
        if best.is_none_or(|(c, _)| r > c) {
            best = Some((r, lag));
        }
    }
    let (r, lag) = best.expect("at least lag 0 is evaluated");
    let floor = 4.0 / (both as f64).sqrt();
    Ok(if r > floor { lag } else { 0 })
}

#[derive(Debug, Clone, PartialEq)]
pub struct ResidualTrack {
    pub placement: Placement,
    pub t0: f64,
    pub rate_hz: f64,
    pub lag_samples: i32,
    /// Earth-frame residual acceleration, g. Zero where invalid.
    pub r: Vec<Vec3>,
    pub valid: Vec<bool>,
}

impl ResidualTrack {
    pub fn lag_s(&self) -> f64 {
        self.lag_samples as f64 / self.rate_hz
    }

    pub fn len(&self) -> usize {
        self.r.len()
    }

    pub fn is_empty(&self) -> bool {
        self.r.is_empty()
    }
}

/// `r[k] = limb[k] - waist[k - lag]`, invalid where either side is.
pub fn residual(limb: &[Vec3], limb_valid: &[bool], waist: &[Vec3], waist_valid: &[bool], lag: i32) -> (Vec<Vec3>, Vec<bool>) {
    let n = limb.len();
    let mut r = Vec::with_capacity(n);
    let mut valid = Vec::with_capacity(n);
    for k in 0..n {
        let j = k as i64 - lag as i64;
        let ok = limb_valid[k] && j >= 0 && (j as usize) < waist.len() && waist_valid[j as usize];
        r.push(if ok { limb[k] - waist[j as usize] } else { Vec3::ZERO });
        valid.push(ok);
    }
    (r, valid)
}

pub fn extract_residual(placement: Placement, limb: &OrientationTrack, waist: &OrientationTrack, lag: i32) -> ResidualTrack {
    let (r, valid) = residual(&limb.a_earth, limb.valid(), &waist.a_earth, waist.valid(), lag);
    ResidualTrack {
        placement,
        t0: limb.track.t0,
        rate_hz: limb.track.rate_hz,
        lag_samples: lag,
        r,
        valid,
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct MmiSeries {
    pub centers_s: Vec<f64>,
    pub mmi: Vec<f64>,
    /// `mmi / RMS(|a_waist|)` over the same window, when that RMS exceeds
    /// the reference floor.
    pub normalized: Vec<Option<f64>>,
}

impl MmiSeries {
    pub fn len(&self) -> usize {
        self.mmi.len()
    }

    pub fn is_empty(&self) -> bool {
        self.mmi.is_empty()
    }

    pub fn mean(&self) -> f64 {
        if self.mmi.is_empty() {
            0.0
        } else {
            self.mmi.iter().sum::<f64>() / self.mmi.len() as f64
        }
    }
}

/// Windowed RMS of `|r|` over valid samples. Windows start every `stride_s`
/// and span `window_s`; windows without valid samples are skipped.
pub fn mmi(res: &ResidualTrack, reference: Option<&[Vec3]>, window_s: f64, stride_s: f64) -> Result<MmiSeries> {
    let n = res.len();
    let track_s = n as f64 / res.rate_hz;
    if window_s > track_s + 1e-9 || n == 0 {
        return Err(Error::WindowTooLong { window_s, track_s });
    }
    if !(stride_s > 0.0) {
        return Err(Error::InvalidConfig("MMI stride must be > 0".into()));
    }
    let len = (window_s * res.rate_hz).round().max(1.0) as usize;
    let mut out = MmiSeries::default();
    for i in 0.. {
        let k0 = (i as f64 * stride_s * res.rate_hz).round() as usize;
        if k0 + len > n {
            break;
        }
        let (mut sum, mut sum_ref, mut count) = (0.0, 0.0, 0usize);
        for k in k0..k0 + len {
            if res.valid[k] {
                sum += res.r[k].norm_sq();
                if let Some(w) = reference {
                    sum_ref += w[k].norm_sq();
                }
                count += 1;
            }
        }
        if count == 0 {
            continue;
        }
        let m = (sum / count as f64).sqrt();
        let rr = (sum_ref / count as f64).sqrt();
        out.centers_s.push(res.t0 + (k0 as f64 + 0.5 * len as f64) / res.rate_hz);
        out.mmi.push(m);
        out.normalized.push((reference.is_some() && rr > MIN_REFERENCE_RMS_G).then(|| m / rr));
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ActivityMap {
    pub rows: Vec<Placement>,
    pub t0: f64,
    pub bin_s: f64,
    /// `cells[row][bin]`, mean MMI (g) of the windows centred in the bin.
    pub cells: Vec<Vec<f64>>,
}

impl ActivityMap {
    pub fn columns(&self) -> usize {
        self.cells.first().map_or(0, |r| r.len())
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        let mut header = vec!["limb".to_string()];
        header.extend((0..self.columns()).map(|c| format!("{}", self.t0 + c as f64 * self.bin_s)));
        w.write_record(&header)?;
        for (p, row) in self.rows.iter().zip(&self.cells) {
            let mut rec = vec![p.name().to_string()];
            rec.extend(row.iter().map(|v| v.to_string()));
            w.write_record(&rec)?;
        }
        w.flush().map_err(|e| Error::io(path, e))?;
        Ok(())
    }
}

/// Limb x time-bin matrix over `[t0, t0 + duration_s)`.
pub fn activity_map(series: &[(Placement, MmiSeries)], t0: f64, duration_s: f64, bin_s: f64) -> ActivityMap {
    let cols = if duration_s > 0.0 { (duration_s / bin_s - 1e-9).ceil() as usize } else { 0 };
    let cells = series
        .iter()
        .map(|(_, s)| {
            let mut sum = vec![0.0; cols];
            let mut count = vec![0usize; cols];
            for (&c, &m) in s.centers_s.iter().zip(&s.mmi) {
                let b = ((c - t0) / bin_s).floor();
                if b >= 0.0 && (b as usize) < cols {
                    sum[b as usize] += m;
                    count[b as usize] += 1;
                }
            }
            sum.iter().zip(&count).map(|(&s, &c)| if c > 0 { s / c as f64 } else { 0.0 }).collect()
        })
        .collect();
    ActivityMap {
        rows: series.iter().map(|(p, _)| *p).collect(),
        t0,
        bin_s,
        cells,
    }
}

/// Long-format MMI table: limb, window centre, mmi, normalized (empty when
/// undefined).
pub fn write_mmi_csv(path: &Path, series: &[(Placement, MmiSeries)]) -> Result<()> {
    let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = std::io::BufWriter::new(file);
    let mut write = || -> std::io::Result<()> {
        writeln!(w, "limb,t_s,mmi_g,normalized")?;
        for (p, s) in series {
            for i in 0..s.len() {
                let norm = s.normalized[i].map_or_else(String::new, |v| v.to_string());
                writeln!(w, "{},{},{},{}", p.name(), s.centers_s[i], s.mmi[i], norm)?;
            }
        }
        w.flush()
    };
    write().map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::types::SAMPLE_RATE_HZ;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn signal(n: usize, seed: u64) -> Vec<Vec3> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n)
            .map(|_| Vec3::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)))
            .collect()
    }

    fn lag_of(a: &[Vec3], b: &[Vec3]) -> i32 {
        let va = vec![true; a.len()];
        let vb = vec![true; b.len()];
        align_lag(a, &va, b, &vb, SAMPLE_RATE_HZ, DEFAULT_MAX_LAG).unwrap()
    }

    fn res(r: Vec<Vec3>) -> ResidualTrack {
        ResidualTrack {
            placement: Placement::LeftArm,
            t0: 0.0,
            rate_hz: SAMPLE_RATE_HZ,
            lag_samples: 0,
            valid: vec![true; r.len()],
            r,
        }
    }

    #[test]
    fn identical_series_have_zero_lag() {
        let s = signal(1300, 1);
        assert_eq!(lag_of(&s, &s), 0);
    }

    #[test]
    fn shifted_series_recover_the_shift() {
        let w = signal(1300, 2);
        let limb: Vec<Vec3> = (0..1300).map(|k| if k >= 3 { w[k - 3] } else { Vec3::ZERO }).collect();
        assert_eq!(lag_of(&limb, &w), 3);
        let early: Vec<Vec3> = (0..1300).map(|k| if k + 5 < 1300 { w[k + 5] } else { Vec3::ZERO }).collect();
        assert_eq!(lag_of(&early, &w), -5);
    }

    #[test]
    fn independent_noise_has_zero_lag() {
        for seed in 0..10 {
            assert_eq!(lag_of(&signal(1300, 100 + seed), &signal(1300, 200 + seed)), 0);
        }
    }

    #[test]
    fn short_overlap_is_an_error() {
        let s = signal(400, 1);
        let v = vec![true; 400];
        assert!(matches!(align_lag(&s, &v, &s, &v, SAMPLE_RATE_HZ, 10), Err(Error::InsufficientOverlap(_))));
    }

    #[test]
    fn self_subtraction_is_exactly_zero() {
        let s = signal(500, 3);
        let v = vec![true; 500];
        let (r, valid) = residual(&s, &v, &s, &v, 0);
        assert!(r.iter().all(|x| *x == Vec3::ZERO));
        assert!(valid.iter().all(|&x| x));
    }

    #[test]
    fn zero_waist_leaves_limb_unchanged() {
        let s = signal(500, 4);
        let v = vec![true; 500];
        let (r, _) = residual(&s, &v, &vec![Vec3::ZERO; 500], &v, 0);
        assert_eq!(r, s);
    }

    #[test]
    fn lagged_residual_masks_the_edge() {
        let s = signal(100, 5);
        let v = vec![true; 100];
        let (_, valid) = residual(&s, &v, &s, &v, 2);
        assert!(!valid[0] && !valid[1] && valid[2]);
    }

    #[test]
    fn constant_residual_gives_constant_mmi() {
        let r = res(vec![Vec3::new(0.0, 0.12, 0.16); 1300]);
        let m = mmi(&r, None, 1.0, 0.25).unwrap();
        // windows start every 0.25 s and must fit in 10 s
        assert_eq!(m.len(), 37);
        assert!(m.mmi.iter().all(|&x| (x - 0.2).abs() < 1e-12));
        assert!(m.normalized.iter().all(|x| x.is_none()));
    }

    #[test]
    fn zero_residual_gives_zero_mmi() {
        let m = mmi(&res(vec![Vec3::ZERO; 400]), None, 1.0, 0.25).unwrap();
        assert!(m.mmi.iter().all(|&x| x == 0.0));
    }

    #[test]
    fn window_longer_than_track() {
        assert!(matches!(mmi(&res(vec![Vec3::ZERO; 100]), None, 1.0, 0.25), Err(Error::WindowTooLong { .. })));
    }

    #[test]
    fn normalized_uses_reference_rms() {
        let r = res(vec![Vec3::new(0.1, 0.0, 0.0); 260]);
        let w = vec![Vec3::new(0.0, 0.0, 0.4); 260];
        let m = mmi(&r, Some(&w), 1.0, 0.25).unwrap();
        assert!(m.normalized.iter().all(|x| (x.unwrap() - 0.25).abs() < 1e-12));
        let quiet = vec![Vec3::ZERO; 260];
        assert!(mmi(&r, Some(&quiet), 1.0, 0.25).unwrap().normalized.iter().all(|x| x.is_none()));
    }

    #[test]
    fn activity_map_shapes() {
        let s = MmiSeries {
            centers_s: (0..240).map(|i| 0.5 + i as f64 * 0.25).collect(),
            mmi: vec![0.1; 240],
            normalized: vec![None; 240],
        };
        let map = activity_map(&[(Placement::Head, s.clone())], 0.0, 60.0, 5.0);
        assert_eq!(map.columns(), 12);
        assert!(map.cells[0].iter().all(|&c| (c - 0.1).abs() < 1e-12));
        assert_eq!(activity_map(&[(Placement::Head, s)], 0.0, 0.0, 5.0).columns(), 0);
    }

    proptest! {
        #[test]
        fn mmi_scales_linearly(c in 0.0..10.0f64, seed in 0u64..1000) {
            let s = signal(390, seed);
            let a = mmi(&res(s.clone()), None, 1.0, 0.25).unwrap();
            let b = mmi(&res(s.iter().map(|&v| v * c).collect()), None, 1.0, 0.25).unwrap();
            for (x, y) in a.mmi.iter().zip(&b.mmi) {
                prop_assert!((y - c * x).abs() <= 1e-12 * (1.0 + c * x));
            }
        }

        #[test]
        fn mmi_is_yaw_invariant(yaw in -3.2..3.2f64, seed in 0u64..1000) {
            let q = crate::quat::Quaternion::from_axis_angle(Vec3::Z, yaw);
            let s = signal(390, seed);
            let a = mmi(&res(s.clone()), None, 1.0, 0.25).unwrap();
            let b = mmi(&res(s.iter().map(|&v| q.rotate_unchecked(v)).collect()), None, 1.0, 0.25).unwrap();
            for (x, y) in a.mmi.iter().zip(&b.mmi) {
                prop_assert!((x - y).abs() <= 1e-12);
            }
        }

        #[test]
        fn integer_shifts_are_recovered(shift in -10i32..=10, seed in 0u64..100) {
            let w = signal(1000, seed);
            let limb: Vec<Vec3> = (0..1000i32)
                .map(|k| {
                    let j = k - shift;
                    if (0..1000).contains(&j) { w[j as usize] } else { Vec3::ZERO }
                })
                .collect();
            prop_assert_eq!(lag_of(&limb, &w), shift);
        }
    }
}
