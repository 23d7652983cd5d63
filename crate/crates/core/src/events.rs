//! Stance/swing segmentation and hoof-on / hoof-off detection for horse limb
//! sensors, plus timing evaluation against reference events.

use serde::{Deserialize, Serialize};

use crate::dsp::{highpass_zero_phase, lowpass_zero_phase};
use crate::preprocess::UniformTrack;
use crate::types::{HoofEvent, HoofKind, Placement};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EventConfig {
    pub gyro_lowpass_hz: f64,
    pub stance_dps: f64,
    pub swing_dps: f64,
    pub stance_dwell_s: f64,
    pub refractory_s: f64,
    pub impact_highpass_hz: f64,
    pub impact_search_s: f64,
    /// Fraction of the swing peak rate that marks the swing onset.
    pub onset_fraction: f64,
    /// Rising-edge band fitted to extrapolate the onset back to zero rate.
    pub onset_fit_band: (f64, f64),
}

impl Default for EventConfig {
    fn default() -> Self {
        EventConfig {
            gyro_lowpass_hz: 10.0,
            stance_dps: 50.0,
            swing_dps: 150.0,
            stance_dwell_s: 0.040,
            refractory_s: 0.100,
            impact_highpass_hz: 20.0,
            impact_search_s: 0.060,
            onset_fraction: 0.2,
            onset_fit_band: (0.1, 0.4),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PhaseKind {
    Stance,
    Swing,
}

/// Half-open sample range `[start, end)` of one phase.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Phase {
    pub kind: PhaseKind,
    pub start: usize,
    pub end: usize,
}

impl Phase {
    pub fn len(&self) -> usize {
        self.end - self.start
    }

    pub fn is_empty(&self) -> bool {
        self.end == self.start
    }
}

fn gyro_norm(track: &UniformTrack) -> Vec<f64> {
    track.gyro.iter().map(|g| g.norm()).collect()
}

/// Alternating stance/swing phases covering the track. Stance needs the
/// smoothed rate below `stance_dps` for `stance_dwell_s`; swing starts as
/// soon as it exceeds `swing_dps`; in between the previous state holds.
/// Phases shorter than the refractory period are absorbed by the previous
/// one.
pub fn detect_phases(track: &UniformTrack, cfg: &EventConfig) -> Vec<Phase> {
    let n = track.len();
    if track.valid.iter().all(|&v| !v) {
        return Vec::new();
    }
    let g = lowpass_zero_phase(&gyro_norm(track), cfg.gyro_lowpass_hz, track.rate_hz);
    let dwell = (cfg.stance_dwell_s * track.rate_hz).ceil().max(1.0) as usize;

    let mut state: Option<PhaseKind> = None;
    let mut labels = vec![PhaseKind::Stance; n];
    let mut run = 0usize;
    let mut first_known = n;
    for k in 0..n {
        if track.valid[k] {
            if g[k] < cfg.stance_dps {
                run += 1;
            } else {
                run = 0;
            }
            if g[k] > cfg.swing_dps {
                if state != Some(PhaseKind::Swing) {
                    // swing began where the rate left the stance band
                    let mut j = k;
                    while j > 0 && g[j - 1] >= cfg.stance_dps {
                        j -= 1;
                    }
                    for l in &mut labels[j..k] {
                        *l = PhaseKind::Swing;
                    }
                }
                state = Some(PhaseKind::Swing);
            } else if run >= dwell && state != Some(PhaseKind::Stance) {
                // stance began where the quiet run began
                for l in &mut labels[k + 1 - run..k] {
                    *l = PhaseKind::Stance;
                }
                state = Some(PhaseKind::Stance);
            }
        }
        if let Some(s) = state {
            labels[k] = s;
            first_known = first_known.min(k);
        }
    }
    if first_known == n {
        // never left the dead band: all stance if it is quiet, else nothing known
        return vec![Phase {
            kind: PhaseKind::Stance,
            start: 0,
            end: n,
        }];
    }
    let lead = labels[first_known];
    for l in &mut labels[..first_known] {
        *l = lead;
    }

    let mut phases: Vec<Phase> = Vec::new();
    for (k, &kind) in labels.iter().enumerate() {
        match phases.last_mut() {
            Some(p) if p.kind == kind => p.end = k + 1,
            _ => phases.push(Phase { kind, start: k, end: k + 1 }),
        }
    }
    let min_len = (cfg.refractory_s * track.rate_hz).round() as usize;
    let mut merged: Vec<Phase> = Vec::with_capacity(phases.len());
    for p in phases {
        match merged.last_mut() {
            Some(last) if p.len() < min_len || last.kind == p.kind => last.end = p.end,
            _ => merged.push(p),
        }
    }
    // a short leading phase has nothing before it to merge into
    if merged.len() > 1 && merged[0].len() < min_len {
        let first = merged.remove(0);
        merged[0].start = first.start;
    }
    merged
}

/// Least-squares line through `(x, y)`; returns the x where it crosses zero.
fn zero_crossing(x: &[f64], y: &[f64]) -> Option<f64> {
    let n = x.len() as f64;
    if x.len() < 2 {
        return None;
    }
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = x.iter().map(|a| (a - mx) * (a - mx)).sum();
    if sxx <= 0.0 {
        return None;
    }
    let slope = sxy / sxx;
    (slope > 0.0).then(|| mx - my / slope)
}

/// Hoof-off time: the last sample below the onset fraction of the swing
/// peak, refined by extrapolating the rising edge back to zero rate.
fn hoof_off_time(track: &UniformTrack, g: &[f64], stance: &Phase, swing: &Phase, cfg: &EventConfig) -> f64 {
    let peak = g[swing.start..swing.end].iter().cloned().fold(0.0, f64::max);
    let cross = (swing.start..swing.end)
        .find(|&k| g[k] >= cfg.onset_fraction * peak)
        .unwrap_or(swing.start);
    let lit = (stance.start..cross)
        .rev()
        .find(|&k| g[k] < cfg.onset_fraction * peak)
        .unwrap_or(stance.start);
    let (lo_f, hi_f) = cfg.onset_fit_band;
    let Some(hi) = (lit + 1..swing.end).find(|&k| g[k] > hi_f * peak) else {
        return track.time(lit);
    };
    let lo = (stance.start..hi).rev().find(|&k| g[k] < lo_f * peak).unwrap_or(stance.start);
    let xs: Vec<f64> = (lo + 1..hi).map(|k| (k - lo) as f64 / track.rate_hz).collect();
    let ys: Vec<f64> = (lo + 1..hi).map(|k| g[k]).collect();
    match zero_crossing(&xs, &ys) {
        Some(x0) => {
            let back = (lo - stance.start) as f64 / track.rate_hz;
            let span = (hi - lo) as f64 / track.rate_hz;
            track.time(lo) + x0.clamp(-back, span)
        }
        None => track.time(lit),
    }
}

/// Hoof events from phases: hoof-on at the impact peak (high-passed accel
/// magnitude) near each swing-to-stance boundary, hoof-off at the onset of
/// each swing. Events alternate and respect the refractory period.
pub fn detect_events(track: &UniformTrack, limb: Placement, phases: &[Phase], cfg: &EventConfig) -> Vec<HoofEvent> {
    if phases.len() < 2 {
        return Vec::new();
    }
    let n = track.len();
    let g = gyro_norm(track);
    let a: Vec<f64> = track.accel.iter().map(|v| v.norm()).collect();
    let h = highpass_zero_phase(&a, cfg.impact_highpass_hz, track.rate_hz);
    let reach = (cfg.impact_search_s * track.rate_hz).round() as usize;

    let mut raw = Vec::new();
    for w in phases.windows(2) {
        let (prev, next) = (&w[0], &w[1]);
        match (prev.kind, next.kind) {
            (PhaseKind::Swing, PhaseKind::Stance) => {
                let lo = next.start.saturating_sub(reach);
                let hi = (next.start + reach + 1).min(n);
                let best = (lo..hi)
                    .filter(|&k| track.valid[k])
                    .fold(None::<usize>, |b, k| match b {
                        Some(j) if h[j] >= h[k] => Some(j),
                        _ => Some(k),
                    });
                if let Some(k) = best {
                    raw.push(HoofEvent { limb, kind: HoofKind::HoofOn, t_s: track.time(k) });
                }
            }
            (PhaseKind::Stance, PhaseKind::Swing) => {
                let t = hoof_off_time(track, &g, prev, next, cfg);
                raw.push(HoofEvent { limb, kind: HoofKind::HoofOff, t_s: t });
            }
            _ => {}
        }
    }
    let mut out: Vec<HoofEvent> = Vec::with_capacity(raw.len());
    for e in raw {
        match out.last() {
            Some(last) if last.kind == e.kind || e.t_s - last.t_s < cfg.refractory_s => {}
            _ => out.push(e),
        }
    }
    out
}

/// Phases and events for one limb track.
pub fn detect_limb(track: &UniformTrack, limb: Placement, cfg: &EventConfig) -> Vec<HoofEvent> {
    detect_events(track, limb, &detect_phases(track, cfg), cfg)
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TimingStats {
    pub matched: usize,
    pub misses: usize,
    pub false_positives: usize,
    pub mae_ms: f64,
    pub max_abs_ms: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LimbTiming {
    pub limb: Placement,
    #[serde(flatten)]
    pub stats: TimingStats,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimingReport {
    /// Matching window, ms.
    pub window_ms: f64,
    /// Statistic used for timing precision.
    pub statistic: String,
    #[serde(flatten)]
    pub overall: TimingStats,
    pub hoof_on: TimingStats,
    pub hoof_off: TimingStats,
    pub per_limb: Vec<LimbTiming>,
}

#[derive(Default)]
struct Acc {
    matched: usize,
    misses: usize,
    fps: usize,
    sum: f64,
    max: f64,
}

impl Acc {
    fn add(&mut self, o: &Acc) {
        self.matched += o.matched;
        self.misses += o.misses;
        self.fps += o.fps;
        self.sum += o.sum;
        self.max = self.max.max(o.max);
    }

    fn stats(&self) -> TimingStats {
        TimingStats {
            matched: self.matched,
            misses: self.misses,
            false_positives: self.fps,
            mae_ms: if self.matched > 0 { 1e3 * self.sum / self.matched as f64 } else { 0.0 },
            max_abs_ms: 1e3 * self.max,
        }
    }
}

fn match_group(det: &[f64], truth: &[f64], window: f64) -> Acc {
    let mut pairs: Vec<(f64, usize, usize)> = Vec::new();
    for (i, &t) in truth.iter().enumerate() {
        for (j, &d) in det.iter().enumerate() {
            let e = (d - t).abs();
            if e <= window {
                pairs.push((e, i, j));
            }
        }
    }
    pairs.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2)));
    let mut used_t = vec![false; truth.len()];
    let mut used_d = vec![false; det.len()];
    let mut acc = Acc::default();
    for (e, i, j) in pairs {
        if !used_t[i] && !used_d[j] {
            used_t[i] = true;
            used_d[j] = true;
            acc.matched += 1;
            acc.sum += e;
            acc.max = acc.max.max(e);
        }
    }
    acc.misses = truth.len() - acc.matched;
    acc.fps = det.len() - acc.matched;
    acc
}

/// Greedy nearest-first matching within `window_s` per (limb, kind). Timing
/// precision is the mean absolute error over matched pairs.
pub fn evaluate_timing(detected: &[HoofEvent], truth: &[HoofEvent], window_s: f64) -> TimingReport {
    let mut limbs: Vec<Placement> = detected.iter().chain(truth).map(|e| e.limb).collect();
    limbs.sort();
    limbs.dedup();
    let times = |list: &[HoofEvent], limb, kind| -> Vec<f64> {
        list.iter().filter(|e| e.limb == limb && e.kind == kind).map(|e| e.t_s).collect()
    };
    let mut overall = Acc::default();
    let mut on = Acc::default();
    let mut off = Acc::default();
    let mut per_limb = Vec::new();
    for limb in limbs {
        let mut acc = Acc::default();
        for (kind, bucket) in [(HoofKind::HoofOn, &mut on), (HoofKind::HoofOff, &mut off)] {
            let g = match_group(&times(detected, limb, kind), &times(truth, limb, kind), window_s);
            bucket.add(&g);
            acc.add(&g);
        }
        overall.add(&acc);
        per_limb.push(LimbTiming { limb, stats: acc.stats() });
    }
    TimingReport {
        window_ms: window_s * 1e3,
        statistic: "mean absolute error over matched events".into(),
        overall: overall.stats(),
        hoof_on: on.stats(),
        hoof_off: off.stats(),
        per_limb,
    }
}
