//! UDP transport: the live listener and the session replayer.

use std::io::ErrorKind;
use std::net::{SocketAddr, ToSocketAddrs, UdpSocket};
use std::str::FromStr;
use std::time::{Duration, Instant, SystemTime, UNIX_EPOCH};

use serde::Serialize;

use super::codec::{encode_packet, Packet, MAX_SAMPLES};
use super::ingest::{IngestConfig, IngestState, IngestStats};
use super::session::{Session, SessionManifest};
use crate::error::{Error, Result};
use crate::types::{RawImu, DEVICE_COUNT};

pub const DEFAULT_PORT: u16 = 9870;

pub struct Listener {
    socket: UdpSocket,
    config: IngestConfig,
}

#[derive(Debug)]
pub struct ListenOutcome {
    pub session: Session,
    pub stats: IngestStats,
}

impl Listener {
    pub fn bind(addr: impl ToSocketAddrs, config: IngestConfig) -> Result<Listener> {
        let socket = UdpSocket::bind(addr).map_err(Error::Net)?;
        socket
            .set_read_timeout(Some(Duration::from_millis(20)))
            .map_err(Error::Net)?;
        Ok(Listener { socket, config })
    }

    pub fn local_addr(&self) -> Result<SocketAddr> {
        self.socket.local_addr().map_err(Error::Net)
    }

    /// Receives for `duration`, then flushes the reorder buffers and builds a
    /// session on the host clock (`t_s = 0` at listener start).
    pub fn run(self, duration: Duration) -> Result<ListenOutcome> {
        let started = Instant::now();
        let wall = SystemTime::now()
            .duration_since(UNIX_EPOCH)
            .map_or(0.0, |d| d.as_secs_f64());
        let mut state = IngestState::new(self.config);
        let mut samples = Vec::new();
        let mut buf = [0u8; 2048];
        while started.elapsed() < duration {
            match self.socket.recv_from(&mut buf) {
                Ok((n, _)) => {
                    let now = started.elapsed().as_secs_f64();
                    state.push(now, &buf[..n], &mut samples);
                }
                Err(e) if matches!(e.kind(), ErrorKind::WouldBlock | ErrorKind::TimedOut) => {}
                Err(e) if e.kind() == ErrorKind::ConnectionRefused => {}
                Err(e) => return Err(Error::Net(e)),
            }
        }
        state.flush(&mut samples);
        let stats = state.stats().clone();

        let mut present = [false; DEVICE_COUNT];
        for s in &samples {
            present[s.device_id as usize] = true;
        }
        let mut manifest = SessionManifest::new(format!("udp-{}", wall as u64), present);
        manifest.start_time_unix_s = wall;
        manifest.source = "udp".into();
        Ok(ListenOutcome {
            session: Session::new(manifest, samples),
            stats,
        })
    }
}

/// Replay pacing: a speed-up factor relative to real time, or as fast as possible.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ReplayRate {
    Speed(f64),
    Max,
}

impl FromStr for ReplayRate {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        if s.eq_ignore_ascii_case("max") {
            return Ok(ReplayRate::Max);
        }
        match s.parse::<f64>() {
            Ok(v) if v > 0.0 && v.is_finite() => Ok(ReplayRate::Speed(v)),
            _ => Err(format!("rate must be a positive number or 'max', got '{s}'")),
        }
    }
}

#[derive(Debug, Clone, Default, Serialize)]
pub struct ReplayStats {
    pub packets: u64,
    pub bytes: u64,
}

/// Splits a session into per-device packets of up to `per_packet` samples,
/// each paired with its send time (the time of its last sample), ordered by
/// send time. Values are re-quantized to sensor counts.
pub fn packetize(session: &Session, per_packet: usize) -> Result<Vec<(f64, Vec<u8>)>> {
    let per_packet = per_packet.clamp(1, MAX_SAMPLES);
    let t_min = session.samples.iter().map(|s| s.t_s).fold(f64::INFINITY, f64::min);
    let base = if t_min.is_finite() && t_min < 0.0 { -t_min } else { 0.0 };
    let mut out = Vec::new();
    for (device, samples) in session.by_device().iter().enumerate() {
        for (k, chunk) in samples.chunks(per_packet).enumerate() {
            let p = Packet {
                device_id: device as u8,
                seq: (k * per_packet) as u32,
                t_device_us: ((chunk[0].t_s + base) * 1e6).round() as u64,
                flags: 0,
                samples: chunk.iter().map(|s| RawImu::quantize(s.accel, s.gyro)).collect(),
            };
            out.push((chunk[chunk.len() - 1].t_s, encode_packet(&p)?));
        }
    }
    out.sort_by(|a, b| a.0.total_cmp(&b.0));
    Ok(out)
}

pub fn replay(session: &Session, target: impl ToSocketAddrs, rate: ReplayRate) -> Result<ReplayStats> {
    let packets = packetize(session, 5)?;
    let socket = UdpSocket::bind("0.0.0.0:0").map_err(Error::Net)?;
    socket.connect(target).map_err(Error::Net)?;
    let t0 = packets.first().map_or(0.0, |p| p.0);
    let started = Instant::now();
    let mut stats = ReplayStats::default();
    for (t, bytes) in &packets {
        if let ReplayRate::Speed(f) = rate {
            let due = Duration::from_secs_f64(((t - t0) / f).max(0.0));
            if let Some(wait) = due.checked_sub(started.elapsed()) {
                std::thread::sleep(wait);
            }
        }
        socket.send(bytes).map_err(Error::Net)?;
        stats.packets += 1;
        stats.bytes += bytes.len() as u64;
    }
    Ok(stats)
}
