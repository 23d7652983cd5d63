//! Live ingestion: per-device deduplication, bounded reordering and
//! device-to-host clock mapping.
//!
//! Each device clock is mapped onto the host clock with an offset equal to
//! the running median of `host_recv - t_device(last sample)` over the most
//! recent packets. Packets are held in a per-device reorder buffer until
//! either they are the next expected sequence number or they have waited for
//! the full reorder window; anything older than the release point is dropped.

use std::collections::{BTreeMap, VecDeque};

use serde::{Deserialize, Serialize};

use super::codec::{decode_packet, Packet};
use crate::types::{CalibratedSample, DEVICE_COUNT, SAMPLE_RATE_HZ};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IngestConfig {
    pub sample_rate_hz: f64,
    pub reorder_window_s: f64,
    /// Number of recent packets in the clock-offset median.
    pub offset_window: usize,
}

impl Default for IngestConfig {
    fn default() -> Self {
        IngestConfig {
            sample_rate_hz: SAMPLE_RATE_HZ,
            reorder_window_s: 0.2,
            offset_window: 64,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct IngestStats {
    pub packets: u64,
    pub accepted: u64,
    pub duplicates: u64,
    /// Arrived after their slot was already released.
    pub late: u64,
    pub malformed: u64,
    pub unknown_device: u64,
    pub samples_emitted: u64,
    /// Samples skipped over by sequence gaps.
    pub samples_lost: u64,
}

#[derive(Debug)]
struct Pending {
    arrival: f64,
    packet: Packet,
}

const RECENT_SEQS: usize = 256;

#[derive(Debug, Default)]
struct DeviceState {
    /// (raw, unwrapped) of the highest sequence number seen.
    seq_anchor: Option<(u32, u64)>,
    next_seq: Option<u64>,
    deltas: VecDeque<f64>,
    pending: BTreeMap<u64, Pending>,
    recent: VecDeque<u64>,
    last_t: Option<f64>,
}

impl DeviceState {
    fn unwrap_seq(&mut self, seq: u32) -> u64 {
        match self.seq_anchor {
            None => {
                // start one epoch in so that early wraps backwards stay positive
                let u = (1u64 << 32) + seq as u64;
                self.seq_anchor = Some((seq, u));
                u
            }
            Some((raw, unwrapped)) => {
                let diff = seq.wrapping_sub(raw) as i32 as i64;
                let u = (unwrapped as i64 + diff).max(0) as u64;
                if diff > 0 {
                    self.seq_anchor = Some((seq, u));
                }
                u
            }
        }
    }

    fn offset(&self) -> Option<f64> {
        if self.deltas.is_empty() {
            return None;
        }
        let mut v: Vec<f64> = self.deltas.iter().copied().collect();
        v.sort_by(f64::total_cmp);
        let m = v.len() / 2;
        Some(if v.len() % 2 == 1 {
            v[m]
        } else {
            0.5 * (v[m - 1] + v[m])
        })
    }
}

/// Ingestion state for all devices; confined to a single task.
#[derive(Debug)]
pub struct IngestState {
    config: IngestConfig,
    devices: Vec<DeviceState>,
    stats: IngestStats,
}

impl IngestState {
    pub fn new(config: IngestConfig) -> Self {
        IngestState {
            config,
            devices: (0..DEVICE_COUNT).map(|_| DeviceState::default()).collect(),
            stats: IngestStats::default(),
        }
    }

    pub fn stats(&self) -> &IngestStats {
        &self.stats
    }

    pub fn config(&self) -> &IngestConfig {
        &self.config
    }

    /// Current clock offset (host - device, seconds) for a device.
    pub fn offset_estimate(&self, device_id: u8) -> Option<f64> {
        self.devices.get(device_id as usize)?.offset()
    }

    /// Feeds one datagram received at `host_time` (seconds). Released
    /// samples are appended to `out`.
    pub fn push(&mut self, host_time: f64, bytes: &[u8], out: &mut Vec<CalibratedSample>) {
        self.stats.packets += 1;
        match decode_packet(bytes) {
            Ok(packet) => self.accept(host_time, packet),
            Err(e) => {
                log::debug!("malformed datagram at {host_time:.3}s: {e}");
                self.stats.malformed += 1;
            }
        }
        self.release(host_time, out);
    }

    fn accept(&mut self, host_time: f64, packet: Packet) {
        let period = 1.0 / self.config.sample_rate_hz;
        let Some(dev) = self.devices.get_mut(packet.device_id as usize) else {
            self.stats.unknown_device += 1;
            return;
        };
        let useq = dev.unwrap_seq(packet.seq);
        if dev.recent.contains(&useq) || dev.pending.contains_key(&useq) {
            self.stats.duplicates += 1;
            return;
        }
        if dev.next_seq.is_some_and(|next| useq < next) {
            self.stats.late += 1;
            return;
        }
        let t_last = packet.t_device_us as f64 * 1e-6 + (packet.samples.len() - 1) as f64 * period;
        dev.deltas.push_back(host_time - t_last);
        while dev.deltas.len() > self.config.offset_window {
            dev.deltas.pop_front();
        }
        dev.pending.insert(
            useq,
            Pending {
                arrival: host_time,
                packet,
            },
        );
    }

    fn release(&mut self, now: f64, out: &mut Vec<CalibratedSample>) {
        for id in 0..self.devices.len() {
            loop {
                let dev = &self.devices[id];
                let Some((&useq, first)) = dev.pending.first_key_value() else {
                    break;
                };
                let due = dev.next_seq == Some(useq)
                    || first.arrival + self.config.reorder_window_s <= now;
                if !due {
                    break;
                }
                self.emit_first(id, out);
            }
        }
    }

    fn emit_first(&mut self, id: usize, out: &mut Vec<CalibratedSample>) {
        let period = 1.0 / self.config.sample_rate_hz;
        let dev = &mut self.devices[id];
        let Some((useq, pending)) = dev.pending.pop_first() else {
            return;
        };
        if let Some(next) = dev.next_seq {
            self.stats.samples_lost += useq.saturating_sub(next);
        }
        let p = pending.packet;
        let n = p.samples.len() as u64;
        dev.next_seq = Some(useq + n);
        dev.recent.push_back(useq);
        while dev.recent.len() > RECENT_SEQS {
            dev.recent.pop_front();
        }
        let offset = dev.offset().unwrap_or(0.0);
        let t0 = p.t_device_us as f64 * 1e-6 + offset;
        for (i, imu) in p.samples.iter().enumerate() {
            let mut t = t0 + i as f64 * period;
            if let Some(last) = dev.last_t {
                if t <= last {
                    t = last + 1e-6;
                }
            }
            dev.last_t = Some(t);
            out.push(CalibratedSample::from_raw(p.device_id, t, imu));
        }
        self.stats.accepted += 1;
        self.stats.samples_emitted += n;
    }

    /// Releases everything still buffered, in sequence order.
    pub fn flush(&mut self, out: &mut Vec<CalibratedSample>) {
        for id in 0..self.devices.len() {
            while !self.devices[id].pending.is_empty() {
                self.emit_first(id, out);
            }
        }
    }
}

/// Runs a complete arrival-ordered stream through a fresh [`IngestState`].
pub fn ingest<I, B>(stream: I, config: IngestConfig) -> (Vec<CalibratedSample>, IngestStats)
where
    I: IntoIterator<Item = (f64, B)>,
    B: AsRef<[u8]>,
{
    let mut state = IngestState::new(config);
    let mut out = Vec::new();
    for (t, bytes) in stream {
        state.push(t, bytes.as_ref(), &mut out);
    }
    state.flush(&mut out);
    let stats = state.stats.clone();
    (out, stats)
}
