//! On-disk session layout:
//!
//! ```text
//! <session>/manifest.json
//! <session>/samples.csv        t_s,device,ax_g,ay_g,az_g,gx_dps,gy_dps,gz_dps
//! <session>/annotations.csv    track,label,start_s,end_s
//! <session>/truth_events.csv   limb,kind,t_s   (simulator sessions only)
//! ```
//!
//! Floating-point columns are written in shortest round-trip form, so a
//! save/load cycle reproduces every value bit for bit.

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::quat::Vec3;
use crate::types::{
    Annotation, CalibratedSample, HoofEvent, HoofKind, Placement, DEVICE_COUNT, SAMPLE_RATE_HZ,
};

pub const MANIFEST_FILE: &str = "manifest.json";
pub const SAMPLES_FILE: &str = "samples.csv";
pub const ANNOTATIONS_FILE: &str = "annotations.csv";
pub const TRUTH_FILE: &str = "truth_events.csv";

const SAMPLE_COLUMNS: [&str; 8] = ["t_s", "device", "ax_g", "ay_g", "az_g", "gx_dps", "gy_dps", "gz_dps"];
const ANNOTATION_COLUMNS: [&str; 4] = ["track", "label", "start_s", "end_s"];
const TRUTH_COLUMNS: [&str; 3] = ["limb", "kind", "t_s"];

pub const MANIFEST_FORMAT: u32 = 1;

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct DeviceCalibration {
    pub gyro_bias_dps: Vec3,
    pub accel_bias_g: Vec3,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeviceEntry {
    pub id: u8,
    pub placement: Placement,
    pub present: bool,
    #[serde(default)]
    pub calibration: DeviceCalibration,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionManifest {
    pub format: u32,
    pub session_id: String,
    pub sample_rate_hz: f64,
    /// Host clock origin of `t_s = 0`, seconds since the Unix epoch (0 when unknown).
    pub start_time_unix_s: f64,
    #[serde(default)]
    pub source: String,
    pub devices: Vec<DeviceEntry>,
}

impl SessionManifest {
    /// Manifest with the fixed device table; `present` flags by device id.
    pub fn new(session_id: impl Into<String>, present: [bool; DEVICE_COUNT]) -> Self {
        SessionManifest {
            format: MANIFEST_FORMAT,
            session_id: session_id.into(),
            sample_rate_hz: SAMPLE_RATE_HZ,
            start_time_unix_s: 0.0,
            source: String::new(),
            devices: Placement::ALL
                .iter()
                .map(|&p| DeviceEntry {
                    id: p.device_id(),
                    placement: p,
                    present: present[p.device_id() as usize],
                    calibration: DeviceCalibration::default(),
                })
                .collect(),
        }
    }

    pub fn all_present(session_id: impl Into<String>) -> Self {
        SessionManifest::new(session_id, [true; DEVICE_COUNT])
    }

    pub fn validate(&self) -> Result<()> {
        if self.format != MANIFEST_FORMAT {
            return Err(Error::InvalidManifest(format!("unsupported format {}", self.format)));
        }
        if !(self.sample_rate_hz > 0.0 && self.sample_rate_hz.is_finite()) {
            return Err(Error::InvalidManifest(format!("bad sample rate {}", self.sample_rate_hz)));
        }
        if self.devices.len() != DEVICE_COUNT {
            return Err(Error::InvalidManifest(format!(
                "expected {DEVICE_COUNT} device entries, found {}",
                self.devices.len()
            )));
        }
        for (i, d) in self.devices.iter().enumerate() {
            if d.id as usize != i || Placement::from_device_id(d.id) != Some(d.placement) {
                return Err(Error::InvalidManifest(format!(
                    "device entry {i} has id {} / placement {}",
                    d.id, d.placement
                )));
            }
        }
        Ok(())
    }

    pub fn is_present(&self, placement: Placement) -> bool {
        self.devices
            .get(placement.device_id() as usize)
            .is_some_and(|d| d.present)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Session {
    pub manifest: SessionManifest,
    pub samples: Vec<CalibratedSample>,
    pub annotations: Vec<Annotation>,
    pub truth_events: Option<Vec<HoofEvent>>,
}

impl Session {
    pub fn new(manifest: SessionManifest, samples: Vec<CalibratedSample>) -> Self {
        Session {
            manifest,
            samples,
            annotations: Vec::new(),
            truth_events: None,
        }
    }

    /// Samples split by device id, preserving order.
    pub fn by_device(&self) -> Vec<Vec<CalibratedSample>> {
        let mut out = vec![Vec::new(); DEVICE_COUNT];
        for s in &self.samples {
            if let Some(v) = out.get_mut(s.device_id as usize) {
                v.push(*s);
            }
        }
        out
    }

    pub fn tracks(&self) -> Vec<String> {
        let mut t: Vec<String> = self.annotations.iter().map(|a| a.track.clone()).collect();
        t.sort();
        t.dedup();
        t
    }

    pub fn duration_s(&self) -> f64 {
        let (lo, hi) = self
            .samples
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), s| (lo.min(s.t_s), hi.max(s.t_s)));
        if hi >= lo {
            hi - lo
        } else {
            0.0
        }
    }
}

fn check_monotone(samples: &[CalibratedSample]) -> Result<()> {
    let mut last = [f64::NEG_INFINITY; 256];
    for s in samples {
        let slot = &mut last[s.device_id as usize];
        if !(s.t_s > *slot) {
            return Err(Error::NonMonotoneTime {
                device: s.device_id,
                t_s: s.t_s,
            });
        }
        *slot = s.t_s;
    }
    Ok(())
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    File::create(path)
        .map(|f| BufWriter::with_capacity(1 << 20, f))
        .map_err(|e| Error::io(path, e))
}

pub fn save_session(dir: impl AsRef<Path>, session: &Session) -> Result<()> {
    let dir = dir.as_ref();
    session.manifest.validate()?;
    check_monotone(&session.samples)?;
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;

    let path = dir.join(MANIFEST_FILE);
    let json = serde_json::to_string_pretty(&session.manifest)?;
    fs::write(&path, json + "\n").map_err(|e| Error::io(&path, e))?;

    let path = dir.join(SAMPLES_FILE);
    let mut w = create(&path)?;
    let io = |e| Error::io(dir.join(SAMPLES_FILE), e);
    writeln!(w, "{}", SAMPLE_COLUMNS.join(",")).map_err(io)?;
    for s in &session.samples {
        writeln!(
            w,
            "{},{},{},{},{},{},{},{}",
            s.t_s, s.device_id, s.accel.x, s.accel.y, s.accel.z, s.gyro.x, s.gyro.y, s.gyro.z
        )
        .map_err(io)?;
    }
    w.flush().map_err(io)?;

    let path = dir.join(ANNOTATIONS_FILE);
    let mut w = csv::Writer::from_path(&path)?;
    w.write_record(ANNOTATION_COLUMNS)?;
    for a in &session.annotations {
        w.write_record([
            a.track.as_str(),
            a.label.as_str(),
            &a.start_s.to_string(),
            &a.end_s.to_string(),
        ])?;
    }
    w.flush().map_err(|e| Error::io(&path, e))?;

    let truth_path = dir.join(TRUTH_FILE);
    match &session.truth_events {
        Some(events) => write_events(&truth_path, events)?,
        None if truth_path.exists() => fs::remove_file(&truth_path).map_err(|e| Error::io(&truth_path, e))?,
        None => {}
    }
    Ok(())
}

/// Writes hoof events as `limb,kind,t_s`.
pub fn write_events(path: &Path, events: &[HoofEvent]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(TRUTH_COLUMNS)?;
    for e in events {
        w.write_record([e.limb.name(), e.kind.name(), &e.t_s.to_string()])?;
    }
    w.flush().map_err(|e| Error::io(path, e))?;
    Ok(())
}

fn reader(path: &Path) -> Result<csv::Reader<File>> {
    let f = File::open(path).map_err(|e| Error::io(path, e))?;
    Ok(csv::ReaderBuilder::new().has_headers(true).flexible(true).from_reader(f))
}

fn check_header(r: &mut csv::Reader<File>, file: &str, expected: &[&str]) -> Result<()> {
    let h = r.headers()?;
    if h.len() != expected.len() || h.iter().zip(expected).any(|(a, b)| a.trim() != *b) {
        return Err(Error::ColumnMismatch {
            file: file.to_string(),
            line: 1,
            detail: format!("header {:?}, expected {:?}", h.iter().collect::<Vec<_>>(), expected),
        });
    }
    Ok(())
}

fn field<T: std::str::FromStr>(rec: &csv::ByteRecord, i: usize, file: &str) -> Result<T> {
    let line = rec.position().map_or(0, |p| p.line());
    let raw = rec.get(i).unwrap_or_default();
    std::str::from_utf8(raw)
        .ok()
        .and_then(|s| s.trim().parse().ok())
        .ok_or_else(|| Error::ColumnMismatch {
            file: file.to_string(),
            line,
            detail: format!("cannot parse column {i}: {:?}", String::from_utf8_lossy(raw)),
        })
}

fn check_width(rec: &csv::ByteRecord, width: usize, file: &str) -> Result<()> {
    if rec.len() != width {
        return Err(Error::ColumnMismatch {
            file: file.to_string(),
            line: rec.position().map_or(0, |p| p.line()),
            detail: format!("{} fields, expected {width}", rec.len()),
        });
    }
    Ok(())
}

pub fn load_manifest(dir: impl AsRef<Path>) -> Result<SessionManifest> {
    let path = dir.as_ref().join(MANIFEST_FILE);
    if !path.is_file() {
        return Err(Error::MissingManifest(path));
    }
    let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
    let manifest: SessionManifest = serde_json::from_str(&text)?;
    manifest.validate()?;
    Ok(manifest)
}

pub fn load_session(dir: impl AsRef<Path>) -> Result<Session> {
    let dir = dir.as_ref();
    let manifest = load_manifest(dir)?;

    let mut r = reader(&dir.join(SAMPLES_FILE))?;
    check_header(&mut r, SAMPLES_FILE, &SAMPLE_COLUMNS)?;
    let mut samples = Vec::new();
    let mut rec = csv::ByteRecord::new();
    while r.read_byte_record(&mut rec)? {
        check_width(&rec, SAMPLE_COLUMNS.len(), SAMPLES_FILE)?;
        let f = |i| field::<f64>(&rec, i, SAMPLES_FILE);
        let device_id: u8 = field(&rec, 1, SAMPLES_FILE)?;
        if device_id as usize >= DEVICE_COUNT {
            return Err(Error::ColumnMismatch {
                file: SAMPLES_FILE.into(),
                line: rec.position().map_or(0, |p| p.line()),
                detail: format!("device id {device_id} out of range"),
            });
        }
        samples.push(CalibratedSample {
            device_id,
            t_s: f(0)?,
            accel: Vec3::new(f(2)?, f(3)?, f(4)?),
            gyro: Vec3::new(f(5)?, f(6)?, f(7)?),
        });
    }
    check_monotone(&samples)?;

    let mut annotations = Vec::new();
    let ann_path = dir.join(ANNOTATIONS_FILE);
    if ann_path.is_file() {
        let mut r = reader(&ann_path)?;
        check_header(&mut r, ANNOTATIONS_FILE, &ANNOTATION_COLUMNS)?;
        while r.read_byte_record(&mut rec)? {
            check_width(&rec, ANNOTATION_COLUMNS.len(), ANNOTATIONS_FILE)?;
            annotations.push(Annotation {
                track: field(&rec, 0, ANNOTATIONS_FILE)?,
                label: field(&rec, 1, ANNOTATIONS_FILE)?,
                start_s: field(&rec, 2, ANNOTATIONS_FILE)?,
                end_s: field(&rec, 3, ANNOTATIONS_FILE)?,
            });
        }
    }

    let truth_path = dir.join(TRUTH_FILE);
    let truth_events = if truth_path.is_file() {
        Some(read_events(&truth_path)?)
    } else {
        None
    };

    Ok(Session {
        manifest,
        samples,
        annotations,
        truth_events,
    })
}

pub fn read_events(path: &Path) -> Result<Vec<HoofEvent>> {
    let name = path.file_name().map_or_else(String::new, |n| n.to_string_lossy().into_owned());
    let mut r = reader(path)?;
    check_header(&mut r, &name, &TRUTH_COLUMNS)?;
    let mut rec = csv::ByteRecord::new();
    let mut out = Vec::new();
    while r.read_byte_record(&mut rec)? {
        check_width(&rec, TRUTH_COLUMNS.len(), &name)?;
        let limb: Placement = field(&rec, 0, &name)?;
        let kind: HoofKind = field(&rec, 1, &name)?;
        out.push(HoofEvent {
            limb,
            kind,
            t_s: field(&rec, 2, &name)?,
        });
    }
    Ok(out)
}

/// `true` when `dir` looks like a session directory.
pub fn is_session_dir(dir: &Path) -> bool {
    dir.join(MANIFEST_FILE).is_file()
}

pub fn session_paths(dir: &Path) -> [PathBuf; 4] {
    [MANIFEST_FILE, SAMPLES_FILE, ANNOTATIONS_FILE, TRUTH_FILE].map(|f| dir.join(f))
}
