//! Per-limb stance timelines.
//!
//! Stance intervals are laid out from each step's footfall table against one
//! continuous stride phase, overridden around jumps, then cleaned so every
//! stance and swing respects the configured minimum duration. The ground
//! truth events and the synthesized signals are both derived from the
//! cleaned timeline.

use super::gait::{Gait, GaitParams};

/// Stride phase at t = 0, chosen so that no footfall coincides with a step
/// boundary for the default tables.
pub const INITIAL_PHASE: f64 = 0.1234;

pub const DEFAULT_JUMP_INTERVAL_S: f64 = 3.0;
pub const FLIGHT_S: f64 = 0.4;
/// Landing impacts are this much harder than regular footfalls.
pub const LANDING_IMPACT_SCALE: f64 = 1.6;

#[derive(Debug, Clone)]
pub struct Span {
    pub start: f64,
    pub end: f64,
    pub params: GaitParams,
    pub step: usize,
}

pub type Intervals = Vec<(f64, f64)>;

/// Takeoff instants (simultaneous hind hoof-off) inside a jump span.
pub fn jump_times(span: &Span, interval: f64) -> Vec<f64> {
    let d = span.end - span.start;
    let n = ((d / interval).floor() as usize).max(1);
    let first = span.start + 0.5 * (d - (n - 1) as f64 * interval);
    (0..n).map(|k| first + k as f64 * interval).collect()
}

fn union(iv: &mut Intervals, lo: f64, hi: f64) {
    if hi <= lo {
        return;
    }
    iv.push((lo, hi));
    iv.sort_by(|a, b| a.0.total_cmp(&b.0));
    let mut merged: Intervals = Vec::with_capacity(iv.len());
    for &(a, b) in iv.iter() {
        match merged.last_mut() {
            Some(last) if a <= last.1 => last.1 = last.1.max(b),
            _ => merged.push((a, b)),
        }
    }
    *iv = merged;
}

fn subtract(iv: &mut Intervals, lo: f64, hi: f64) {
    let mut out = Vec::with_capacity(iv.len() + 1);
    for &(a, b) in iv.iter() {
        if b <= lo || a >= hi {
            out.push((a, b));
            continue;
        }
        if a < lo {
            out.push((a, lo));
        }
        if b > hi {
            out.push((hi, b));
        }
    }
    *iv = out;
}

/// Closes interior swing gaps shorter than `min_swing`, then removes stances
/// shorter than `min_stance`.
pub fn clean(iv: &mut Intervals, min_stance: f64, min_swing: f64) {
    let mut merged: Intervals = Vec::with_capacity(iv.len());
    for &(a, b) in iv.iter() {
        match merged.last_mut() {
            Some(last) if a - last.1 < min_swing => last.1 = b,
            _ => merged.push((a, b)),
        }
    }
    merged.retain(|&(a, b)| b - a >= min_stance);
    *iv = merged;
}

/// Stance intervals of horse limb `limb` (LF, RF, LH, RH) over `[0, total)`.
pub fn limb_stances(
    limb: usize,
    spans: &[Span],
    jumps: &[f64],
    total: f64,
    min_stance: f64,
    min_swing: f64,
) -> Intervals {
    let mut iv: Intervals = Vec::new();
    let mut phase = INITIAL_PHASE;
    for span in spans {
        let p = &span.params;
        if p.gait == Gait::Halt {
            union(&mut iv, span.start, span.end);
            continue;
        }
        let f = p.stride_hz;
        let stance_len = p.duty[limb] / f;
        let o = p.phase[limb];
        // onset when phase + f (t - start) = m + o
        let m0 = (phase - o).floor() as i64 - 1;
        let mut m = m0;
        loop {
            let on = span.start + (m as f64 + o - phase) / f;
            if on >= span.end {
                break;
            }
            let off = on + stance_len;
            if off > span.start {
                union(&mut iv, on.max(span.start), off.min(span.end));
            }
            m += 1;
        }
        phase += f * (span.end - span.start);
    }
    let hind = limb >= 2;
    for &tj in jumps {
        if hind {
            union(&mut iv, tj - 0.22, tj);
            subtract(&mut iv, tj, tj + FLIGHT_S + 0.12);
            union(&mut iv, tj + FLIGHT_S + 0.12, tj + FLIGHT_S + 0.34);
        } else {
            subtract(&mut iv, tj - 0.15, tj + FLIGHT_S);
            union(&mut iv, tj + FLIGHT_S, tj + FLIGHT_S + 0.22);
        }
    }
    subtract(&mut iv, f64::NEG_INFINITY, 0.0);
    subtract(&mut iv, total, f64::INFINITY);
    clean(&mut iv, min_stance, min_swing);
    // a final swing cut short by the end of the recording is not observable
    if let Some(last) = iv.last_mut() {
        if last.1 < total && total - last.1 < min_swing {
            last.1 = total;
        }
    }
    iv
}

/// `true` when `t` is a landing instant of one of the jumps.
pub fn is_landing(t: f64, jumps: &[f64]) -> bool {
    jumps
        .iter()
        .any(|&tj| t >= tj + FLIGHT_S - 0.01 && t <= tj + FLIGHT_S + 0.2)
}
