//! Deterministic horse + rider IMU simulator with exact ground truth.
//!
//! Horse limb sensors follow a phenomenological limb cycle (see
//! [`gait::limb_cycle`]): still during stance, a half-sine sagittal rotation
//! during swing and a decaying impact transient at each hoof-on. The sensor
//! orientation is integrated from the simulated angular rate, so gravity and
//! impacts appear in the sensor frame consistently with the gyroscope.
//!
//! The rider waist carries a low-passed (5 Hz) mix of the limb impacts plus
//! any lateral trunk acceleration, standing in for the horse's trunk. Every
//! other rider sensor is the waist signal plus its own sinusoid bursts.

pub mod faults;
pub mod gait;
pub mod protocol;
pub mod script;
pub mod timeline;

use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp, Normal};

use crate::dsp::lowpass_zero_phase;
use crate::error::Result;
use crate::quat::{Quaternion, Vec3};
use crate::types::{
    Annotation, CalibratedSample, HoofEvent, HoofKind, Placement, RawImu, DEVICE_COUNT,
    SAMPLE_RATE_HZ,
};
use crate::wire::codec::{encode_packet, Packet};
use crate::wire::session::{Session, SessionManifest};

pub use faults::inject_faults;
pub use gait::{limb_cycle, Gait, GaitParams};
pub use script::{HorseProfile, RiderMotion, RiderProfile, Script, ScriptStep, SimConfig};
use timeline::{Intervals, Span};

pub const GAIT_TRACK: &str = "gait";
pub const TASK_TRACK: &str = "task";

/// Cut-off of the trunk response to limb impacts.
const TRUNK_LOWPASS_HZ: f64 = 5.0;
const LEG_AID_HZ: f64 = 3.0;

#[derive(Debug, Clone, PartialEq)]
pub struct GroundTruth {
    /// Hoof events of all four limbs, time-sorted.
    pub events: Vec<HoofEvent>,
    /// Label intervals for the "gait" and "task" tracks.
    pub labels: Vec<Annotation>,
    /// Stance intervals per limb (LF, RF, LH, RH).
    pub stances: [Intervals; 4],
    /// Takeoff instants of every jump.
    pub jumps: Vec<f64>,
}

impl GroundTruth {
    pub fn events_for(&self, limb: Placement) -> impl Iterator<Item = &HoofEvent> {
        self.events.iter().filter(move |e| e.limb == limb)
    }
}

#[derive(Debug, Clone)]
pub struct Simulation {
    /// Exact samples on the host clock, ordered by (time, device).
    pub samples: Vec<CalibratedSample>,
    /// Wire datagrams with host arrival times, in arrival order.
    pub packets: Vec<(f64, Vec<u8>)>,
    pub truth: GroundTruth,
    pub duration_s: f64,
    /// Per-device clock offset (device - host), seconds.
    pub clock_offsets: [f64; DEVICE_COUNT],
    /// Independent rider motion injected per device (zero for horse sensors
    /// and the waist), earth frame, g.
    pub rider_components: Vec<Vec<Vec3>>,
}

impl Simulation {
    pub fn to_session(&self, session_id: impl Into<String>) -> Session {
        let mut manifest = SessionManifest::all_present(session_id);
        manifest.source = "simulator".into();
        Session {
            manifest,
            samples: self.samples.clone(),
            annotations: self.truth.labels.clone(),
            truth_events: Some(self.truth.events.clone()),
        }
    }

    pub fn device_samples(&self, device: u8) -> Vec<CalibratedSample> {
        self.samples.iter().filter(|s| s.device_id == device).copied().collect()
    }
}

fn spans_of(script: &Script) -> Vec<Span> {
    let mut t = 0.0;
    script
        .steps
        .iter()
        .enumerate()
        .map(|(i, s)| {
            let span = Span {
                start: t,
                end: t + s.duration_s,
                params: s.params(&script.config.horse, &script.config),
                step: i,
            };
            t += s.duration_s;
            span
        })
        .collect()
}

fn label_track(script: &Script, spans: &[Span], track: &str) -> Vec<Annotation> {
    let mut out: Vec<Annotation> = Vec::new();
    for (step, span) in script.steps.iter().zip(spans) {
        let label = match track {
            GAIT_TRACK => Some(step.gait.name().to_string()),
            _ => step.task.clone(),
        };
        let Some(label) = label else { continue };
        match out.last_mut() {
            Some(last) if last.label == label && (last.end_s - span.start).abs() < 1e-9 => {
                last.end_s = span.end
            }
            _ => out.push(Annotation {
                track: track.to_string(),
                label,
                start_s: span.start,
                end_s: span.end,
            }),
        }
    }
    out
}

fn span_at(spans: &[Span], t: f64) -> &Span {
    let i = spans.partition_point(|s| s.end <= t);
    &spans[i.min(spans.len() - 1)]
}

/// Swing and impact description for one limb, derived from its stances.
struct LimbPlan {
    stances: Intervals,
    /// Impact amplitude per stance (0 for stances without a hoof-on event).
    impacts: Vec<f64>,
    /// (start, end, sagittal peak dps, lateral peak dps) per swing.
    swings: Vec<(f64, f64, f64, f64)>,
}

impl LimbPlan {
    fn new(limb: usize, stances: Intervals, spans: &[Span], script: &Script, jumps: &[f64], total: f64) -> Self {
        let left = limb == 0 || limb == 2;
        let impacts = stances
            .iter()
            .map(|&(on, _)| {
                if on <= 0.0 {
                    return 0.0;
                }
                let s = span_at(spans, on);
                let scale = if timeline::is_landing(on, jumps) {
                    timeline::LANDING_IMPACT_SCALE
                } else {
                    1.0
                };
                s.params.impact_g * scale
            })
            .collect();
        let mut bounds = vec![0.0];
        for &(a, b) in &stances {
            bounds.push(a);
            bounds.push(b);
        }
        bounds.push(total);
        let swings = bounds
            .chunks_exact(2)
            .filter(|w| w[1] > w[0])
            .map(|w| {
                let span = span_at(spans, 0.5 * (w[0] + w[1]));
                let step = &script.steps[span.step];
                let side = if left { 1.0 + step.asymmetry } else { 1.0 - step.asymmetry };
                let mut peak = span.params.swing_dps * side;
                if peak == 0.0 {
                    // a swing overlapping a halt boundary still has to move the limb
                    peak = GaitParams::for_gait(Gait::Walk).swing_dps * script.config.horse.swing_scale;
                }
                (w[0], w[1], peak, step.crossing_dps)
            })
            .collect();
        LimbPlan {
            stances,
            impacts,
            swings,
        }
    }
}

/// Cursor over a limb plan for monotonically increasing times.
struct LimbCursor<'a> {
    plan: &'a LimbPlan,
    stance: usize,
    swing: usize,
}

impl<'a> LimbCursor<'a> {
    fn new(plan: &'a LimbPlan) -> Self {
        LimbCursor { plan, stance: 0, swing: 0 }
    }

    /// (angular rate dps in sensor frame, vertical impact acceleration g).
    fn eval(&mut self, t: f64) -> (Vec3, f64) {
        let st = &self.plan.stances;
        while self.stance < st.len() && st[self.stance].1 <= t {
            self.stance += 1;
        }
        if self.stance < st.len() && st[self.stance].0 <= t {
            let on = st[self.stance].0;
            let spike = self.plan.impacts[self.stance] * (-(t - on) / gait::IMPACT_DECAY_S).exp();
            return (Vec3::ZERO, spike);
        }
        let sw = &self.plan.swings;
        while self.swing < sw.len() && sw[self.swing].1 <= t {
            self.swing += 1;
        }
        match sw.get(self.swing) {
            Some(&(a, b, peak, cross)) if a <= t => {
                let s = (PI * (t - a) / (b - a)).sin();
                (Vec3::new(cross * s, peak * s, 0.0), 0.0)
            }
            _ => (Vec3::ZERO, 0.0),
        }
    }
}

fn burst_envelope(m: &RiderMotion, t: f64) -> f64 {
    const RAMP: f64 = 0.25;
    if t < m.offset_s || m.burst_on_s <= 0.0 {
        return 0.0;
    }
    let u = (t - m.offset_s) % (m.burst_on_s + m.burst_off_s);
    if u >= m.burst_on_s {
        return 0.0;
    }
    let ramp = RAMP.min(0.5 * m.burst_on_s);
    let edge = u.min(m.burst_on_s - u);
    if edge >= ramp {
        1.0
    } else {
        0.5 - 0.5 * (PI * edge / ramp).cos()
    }
}

/// Runs a script. The output is a pure function of `(script, seed)`.
pub fn simulate_session(script: &Script, seed: u64) -> Result<Simulation> {
    script.validate()?;
    let cfg = &script.config;
    let fs = SAMPLE_RATE_HZ;
    let dt = 1.0 / fs;
    let spans = spans_of(script);
    let total = script.duration_s();
    let n = (total * fs).floor() as usize;
    let times: Vec<f64> = (0..n).map(|k| k as f64 / fs).collect();

    let jumps: Vec<f64> = spans
        .iter()
        .filter(|s| s.params.gait == Gait::Jump)
        .flat_map(|s| {
            let step = &script.steps[s.step];
            timeline::jump_times(s, step.jump_interval_s.unwrap_or(timeline::DEFAULT_JUMP_INTERVAL_S))
        })
        .collect();

    let plans: Vec<LimbPlan> = (0..4)
        .map(|limb| {
            let st = timeline::limb_stances(limb, &spans, &jumps, total, cfg.min_stance_s, cfg.min_swing_s);
            LimbPlan::new(limb, st, &spans, script, &jumps, total)
        })
        .collect();

    let mut events = Vec::new();
    for (limb, plan) in plans.iter().enumerate() {
        let placement = Placement::HORSE_LIMBS[limb];
        for &(on, off) in &plan.stances {
            if on > 1e-9 {
                events.push(HoofEvent { limb: placement, kind: HoofKind::HoofOn, t_s: on });
            }
            if off < total - 1e-9 {
                events.push(HoofEvent { limb: placement, kind: HoofKind::HoofOff, t_s: off });
            }
        }
    }
    events.sort_by(|a, b| a.t_s.total_cmp(&b.t_s).then(a.limb.cmp(&b.limb)));

    // physical signals per device, before noise
    let mut accel: Vec<Vec<Vec3>> = (0..DEVICE_COUNT).map(|_| Vec::with_capacity(n)).collect();
    let mut gyro: Vec<Vec<Vec3>> = (0..DEVICE_COUNT).map(|_| Vec::with_capacity(n)).collect();
    let mut spikes: Vec<Vec<f64>> = (0..4).map(|_| Vec::with_capacity(n)).collect();
    let deg = PI / 180.0;
    for (limb, plan) in plans.iter().enumerate() {
        let mut cursor = LimbCursor::new(plan);
        let mut mid = LimbCursor::new(plan);
        let mut q = Quaternion::IDENTITY;
        for &t in &times {
            let (w, spike) = cursor.eval(t);
            let up = q.conjugate().rotate_unchecked(Vec3::new(0.0, 0.0, 1.0 + spike));
            accel[limb].push(up);
            gyro[limb].push(w);
            spikes[limb].push(spike);
            let (wm, _) = mid.eval(t + 0.5 * dt);
            q = (q * Quaternion::from_rotation_vector(wm * (deg * dt)))
                .normalize()
                .unwrap_or(Quaternion::IDENTITY);
        }
    }

    let mean_spike: Vec<f64> = (0..n).map(|k| 0.25 * spikes.iter().map(|s| s[k]).sum::<f64>()).collect();
    let trunk_z: Vec<f64> = lowpass_zero_phase(&mean_spike, TRUNK_LOWPASS_HZ, fs)
        .into_iter()
        .map(|v| v * cfg.horse.trunk_gain)
        .collect();
    let lateral_raw: Vec<f64> = times.iter().map(|&t| script.steps[span_at(&spans, t).step].lateral_g).collect();
    let lateral = lowpass_zero_phase(&lateral_raw, 0.5, fs);
    let trunk: Vec<Vec3> = (0..n).map(|k| Vec3::new(0.0, lateral[k], trunk_z[k])).collect();

    let waist = Placement::Waist.device_id() as usize;
    accel[waist] = trunk.iter().map(|&a| a + Vec3::Z).collect();
    gyro[waist] = vec![Vec3::ZERO; n];

    let rider = &cfg.rider;
    let mut rider_components = vec![Vec::new(); DEVICE_COUNT];
    for p in Placement::RIDER_LIMBS {
        let motion = match p {
            Placement::Head => &rider.head,
            Placement::LeftArm => &rider.left_arm,
            Placement::RightArm => &rider.right_arm,
            Placement::LeftLeg => &rider.left_leg,
            _ => &rider.right_leg,
        };
        let id = p.device_id() as usize;
        let comp: Vec<Vec3> = times
            .iter()
            .map(|&t| {
                let step = &script.steps[span_at(&spans, t).step];
                let own = motion.axis
                    * (motion.amplitude_g
                        * step.rider_gain
                        * burst_envelope(motion, t)
                        * (2.0 * PI * motion.freq_hz * (t - motion.offset_s)).sin());
                let aid_side = match p {
                    Placement::LeftLeg => step.leg_aid_g.max(0.0),
                    Placement::RightLeg => (-step.leg_aid_g).max(0.0),
                    _ => 0.0,
                };
                own + Vec3::Y * (aid_side * (2.0 * PI * LEG_AID_HZ * t).sin())
            })
            .collect();
        let lag = rider.lag_samples;
        accel[id] = (0..n)
            .map(|k| {
                let src = (k as i64 - lag as i64).clamp(0, n.saturating_sub(1) as i64) as usize;
                trunk[src] + comp[k] + Vec3::Z
            })
            .collect();
        gyro[id] = vec![Vec3::ZERO; n];
        rider_components[id] = comp;
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let accel_noise = Normal::new(0.0, cfg.noise_accel_g).expect("validated noise level");
    let gyro_noise = Normal::new(0.0, cfg.noise_gyro_dps).expect("validated noise level");
    let mut per_device: Vec<Vec<CalibratedSample>> = Vec::with_capacity(DEVICE_COUNT);
    for device in 0..DEVICE_COUNT {
        let mut out = Vec::with_capacity(n);
        for k in 0..n {
            let mut draw = |d: &Normal<f64>| Vec3::new(d.sample(&mut rng), d.sample(&mut rng), d.sample(&mut rng));
            let a = accel[device][k] + cfg.accel_bias_g + draw(&accel_noise);
            let g = gyro[device][k] + cfg.gyro_bias_dps + draw(&gyro_noise);
            out.push(CalibratedSample::from_raw(device as u8, times[k], &RawImu::quantize(a, g)));
        }
        per_device.push(out);
    }

    let mut clock_offsets = [0.0; DEVICE_COUNT];
    for c in clock_offsets.iter_mut() {
        *c = rng.random_range(10.0..1000.0);
    }
    let jitter = (cfg.jitter_s > 0.0).then(|| Exp::new(1.0 / cfg.jitter_s).expect("positive rate"));
    let per = cfg.samples_per_packet;
    let mut packets: Vec<(f64, u8, u32, Vec<u8>)> = Vec::new();
    for (device, samples) in per_device.iter().enumerate() {
        for (k, chunk) in samples.chunks(per).enumerate() {
            let t_first = chunk[0].t_s;
            let t_last = chunk[chunk.len() - 1].t_s;
            let seq = (k * per) as u32;
            let p = Packet {
                device_id: device as u8,
                seq,
                t_device_us: ((t_first + clock_offsets[device]) * 1e6).round() as u64,
                flags: 0,
                samples: chunk.iter().map(|s| RawImu::quantize(s.accel, s.gyro)).collect(),
            };
            let extra = jitter.as_ref().map_or(0.0, |j| j.sample(&mut rng));
            let arrival = t_last + cfg.latency_s + extra;
            packets.push((arrival, device as u8, seq, encode_packet(&p)?));
        }
    }
    packets.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2)));

    let mut samples = Vec::with_capacity(n * DEVICE_COUNT);
    for k in 0..n {
        for dev in &per_device {
            samples.push(dev[k]);
        }
    }

    let mut labels = label_track(script, &spans, GAIT_TRACK);
    labels.extend(label_track(script, &spans, TASK_TRACK));
    let [s0, s1, s2, s3]: [LimbPlan; 4] = plans.try_into().ok().expect("four limbs");
    Ok(Simulation {
        samples,
        packets: packets.into_iter().map(|(t, _, _, b)| (t, b)).collect(),
        truth: GroundTruth {
            events,
            labels,
            stances: [s0.stances, s1.stances, s2.stances, s3.stances],
            jumps,
        },
        duration_s: n as f64 / fs,
        clock_offsets,
        rider_components,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn walk10() -> Script {
        Script::new(vec![ScriptStep::new(10.0, Gait::Walk)])
    }

    #[test]
    fn ten_seconds_of_walk_has_nine_footfalls_per_limb() {
        let sim = simulate_session(&walk10(), 1).unwrap();
        for limb in Placement::HORSE_LIMBS {
            let on = sim.truth.events_for(limb).filter(|e| e.kind == HoofKind::HoofOn).count();
            assert_eq!(on, 9, "{limb}");
        }
        assert_eq!(sim.samples.len(), 1300 * DEVICE_COUNT);
    }

    #[test]
    fn halt_only_has_no_events() {
        let script = Script::new(vec![ScriptStep::new(5.0, Gait::Halt)]);
        let sim = simulate_session(&script, 3).unwrap();
        assert!(sim.truth.events.is_empty());
        let gait: Vec<_> = sim.truth.labels.iter().filter(|a| a.track == GAIT_TRACK).collect();
        assert_eq!(gait.len(), 1);
        assert_eq!((gait[0].label.as_str(), gait[0].start_s, gait[0].end_s), ("halt", 0.0, 5.0));
    }

    #[test]
    fn deterministic_given_seed() {
        let a = simulate_session(&walk10(), 42).unwrap();
        let b = simulate_session(&walk10(), 42).unwrap();
        assert_eq!(a.packets, b.packets);
        let c = simulate_session(&walk10(), 43).unwrap();
        assert_ne!(a.packets, c.packets);
    }

    #[test]
    fn empty_script_is_rejected() {
        assert!(simulate_session(&Script::new(vec![]), 0).is_err());
    }

    #[test]
    fn events_alternate_and_respect_minimum_durations() {
        let script = Script::new(vec![
            ScriptStep::new(3.0, Gait::Halt),
            ScriptStep::new(8.0, Gait::Walk),
            ScriptStep::new(8.0, Gait::Trot),
            ScriptStep::new(8.0, Gait::Canter),
            ScriptStep::new(7.0, Gait::Jump),
            ScriptStep::new(6.0, Gait::Trot),
            ScriptStep::new(3.0, Gait::Halt),
        ]);
        let sim = simulate_session(&script, 9).unwrap();
        for limb in Placement::HORSE_LIMBS {
            let ev: Vec<_> = sim.truth.events_for(limb).collect();
            assert!(!ev.is_empty());
            for w in ev.windows(2) {
                assert_ne!(w[0].kind, w[1].kind, "{limb} at {}", w[1].t_s);
                let min = match w[0].kind {
                    HoofKind::HoofOn => script.config.min_stance_s,
                    HoofKind::HoofOff => script.config.min_swing_s,
                };
                assert!(w[1].t_s - w[0].t_s >= min - 1e-9);
            }
        }
    }

    #[test]
    fn halt_accel_norm_is_one_g_within_noise() {
        let script = Script::new(vec![ScriptStep::new(4.0, Gait::Halt)]);
        let sim = simulate_session(&script, 5).unwrap();
        let sigma = script.config.noise_accel_g;
        for s in sim.samples.iter().filter(|s| s.device_id < 4) {
            assert!((s.accel.norm() - 1.0).abs() <= 3.0 * sigma * 3f64.sqrt());
        }
    }

    #[test]
    fn waist_is_a_function_of_the_limbs() {
        // same limb signals and no noise: identical waist regardless of rider settings
        let mut a = walk10();
        a.config = SimConfig::clean();
        let mut b = a.clone();
        b.config.rider.left_leg.amplitude_g = 0.9;
        let wa = simulate_session(&a, 1).unwrap().device_samples(5);
        let wb = simulate_session(&b, 2).unwrap().device_samples(5);
        assert_eq!(wa, wb);
    }
}
