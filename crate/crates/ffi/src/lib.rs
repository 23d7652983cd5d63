//! C interface to the equimetrics pipeline.
//!
//! Every fallible function returns an [`EqmStatus`]; on failure the message is
//! kept per thread and can be read with [`eqm_last_error`]. Objects crossing
//! the boundary are opaque handles that must be released with their `_free`
//! function. Null handles are accepted by every `_free` function.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::PathBuf;
use std::ptr;

use equimetrics::analyze::{analyze, Analysis, AnalyzeConfig};
use equimetrics::har::{checkpoint, Classifier};
use equimetrics::wire::codec::{MAX_PACKET_LEN, MAX_SAMPLES};
use equimetrics::wire::{decode_packet, encode_packet, load_session, IngestConfig, IngestState, Packet, Session};
use equimetrics::{CalibratedSample, Error, ErrorClass, HoofKind, Quaternion, RawImu, Vec3};

/// Result codes. Non-zero means failure.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EqmStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    Io = 3,
    Data = 4,
    BufferTooSmall = 5,
    OutOfRange = 6,
    Panic = 7,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: impl Into<String>) {
    let msg = msg.into().replace('\0', " ");
    LAST_ERROR.with(|e| *e.borrow_mut() = CString::new(msg).ok());
}

fn clear_error() {
    LAST_ERROR.with(|e| *e.borrow_mut() = None);
}

fn fail(status: EqmStatus, msg: impl Into<String>) -> EqmStatus {
    set_error(msg);
    status
}

fn from_error(e: &Error) -> EqmStatus {
    let status = match e.class() {
        ErrorClass::Usage => EqmStatus::InvalidArgument,
        ErrorClass::Io => EqmStatus::Io,
        ErrorClass::Data => EqmStatus::Data,
    };
    fail(status, e.to_string())
}

/// Runs `f`, converting panics into [`EqmStatus::Panic`].
fn guard(f: impl FnOnce() -> EqmStatus) -> EqmStatus {
    clear_error();
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(s) => s,
        Err(p) => {
            let msg = p
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| p.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "panic".into());
            fail(EqmStatus::Panic, format!("internal error: {msg}"))
        }
    }
}

unsafe fn path_arg(p: *const c_char) -> Result<PathBuf, EqmStatus> {
    if p.is_null() {
        return Err(fail(EqmStatus::NullPointer, "path is null"));
    }
    match CStr::from_ptr(p).to_str() {
        Ok(s) => Ok(PathBuf::from(s)),
        Err(_) => Err(fail(EqmStatus::InvalidArgument, "path is not valid UTF-8")),
    }
}

/// Message of the last failure on this thread, or null. Valid until the next
/// call into the library on the same thread.
#[no_mangle]
pub extern "C" fn eqm_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |s| s.as_ptr()))
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn eqm_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Largest encoded packet, bytes.
#[no_mangle]
pub extern "C" fn eqm_max_packet_len() -> usize {
    MAX_PACKET_LEN
}

#[repr(C)]
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct EqmRawSample {
    pub accel: [i16; 3],
    pub gyro: [i16; 3],
}

#[repr(C)]
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct EqmPacketHeader {
    pub device_id: u8,
    pub seq: u32,
    pub t_device_us: u64,
    pub flags: u8,
    pub n_samples: u8,
}

/// Encodes a packet into `out`. `written` receives the encoded length.
///
/// # Safety
/// `samples` must point to `header.n_samples` values and `out` to `out_cap`
/// writable bytes.
#[no_mangle]
pub unsafe extern "C" fn eqm_packet_encode(
    header: *const EqmPacketHeader,
    samples: *const EqmRawSample,
    out: *mut u8,
    out_cap: usize,
    written: *mut usize,
) -> EqmStatus {
    guard(|| {
        if header.is_null() || out.is_null() || written.is_null() {
            return fail(EqmStatus::NullPointer, "null argument");
        }
        let h = *header;
        let n = h.n_samples as usize;
        if n > 0 && samples.is_null() {
            return fail(EqmStatus::NullPointer, "samples is null");
        }
        let raw = if n == 0 { &[][..] } else { std::slice::from_raw_parts(samples, n) };
        let p = Packet {
            device_id: h.device_id,
            seq: h.seq,
            t_device_us: h.t_device_us,
            flags: h.flags,
            samples: raw.iter().map(|s| RawImu { accel: s.accel, gyro: s.gyro }).collect(),
        };
        let bytes = match encode_packet(&p) {
            Ok(b) => b,
            Err(e) => return fail(EqmStatus::InvalidArgument, e.to_string()),
        };
        *written = bytes.len();
        if bytes.len() > out_cap {
            return fail(EqmStatus::BufferTooSmall, format!("need {} bytes", bytes.len()));
        }
        ptr::copy_nonoverlapping(bytes.as_ptr(), out, bytes.len());
        EqmStatus::Ok
    })
}

/// Decodes one datagram. `samples` needs room for `samples_cap` entries;
/// up to 10 are ever written.
///
/// # Safety
/// `bytes` must point to `len` readable bytes and `samples` to `samples_cap`
/// writable entries.
#[no_mangle]
pub unsafe extern "C" fn eqm_packet_decode(
    bytes: *const u8,
    len: usize,
    header: *mut EqmPacketHeader,
    samples: *mut EqmRawSample,
    samples_cap: usize,
) -> EqmStatus {
    guard(|| {
        if bytes.is_null() || header.is_null() {
            return fail(EqmStatus::NullPointer, "null argument");
        }
        let p = match decode_packet(std::slice::from_raw_parts(bytes, len)) {
            Ok(p) => p,
            Err(e) => return fail(EqmStatus::Data, e.to_string()),
        };
        *header = EqmPacketHeader {
            device_id: p.device_id,
            seq: p.seq,
            t_device_us: p.t_device_us,
            flags: p.flags,
            n_samples: p.samples.len() as u8,
        };
        if p.samples.len() > samples_cap.min(MAX_SAMPLES) {
            return fail(EqmStatus::BufferTooSmall, format!("need room for {} samples", p.samples.len()));
        }
        if !p.samples.is_empty() && samples.is_null() {
            return fail(EqmStatus::NullPointer, "samples is null");
        }
        for (i, s) in p.samples.iter().enumerate() {
            *samples.add(i) = EqmRawSample { accel: s.accel, gyro: s.gyro };
        }
        EqmStatus::Ok
    })
}

/// Hamilton quaternion `w + xi + yj + zk`.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EqmQuat {
    pub w: f64,
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

impl From<EqmQuat> for Quaternion {
    fn from(q: EqmQuat) -> Self {
        Quaternion::new(q.w, q.x, q.y, q.z)
    }
}

impl From<Quaternion> for EqmQuat {
    fn from(q: Quaternion) -> Self {
        EqmQuat { w: q.w, x: q.x, y: q.y, z: q.z }
    }
}

/// `out = a * b`.
///
/// # Safety
/// All pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn eqm_quat_mul(a: *const EqmQuat, b: *const EqmQuat, out: *mut EqmQuat) -> EqmStatus {
    guard(|| {
        if a.is_null() || b.is_null() || out.is_null() {
            return fail(EqmStatus::NullPointer, "null argument");
        }
        *out = (Quaternion::from(*a) * Quaternion::from(*b)).into();
        EqmStatus::Ok
    })
}

/// Rotates `v` (3 doubles) by the unit quaternion `q` into `out`.
///
/// # Safety
/// `v` and `out` must point to 3 doubles.
#[no_mangle]
pub unsafe extern "C" fn eqm_quat_rotate(q: *const EqmQuat, v: *const f64, out: *mut f64) -> EqmStatus {
    guard(|| {
        if q.is_null() || v.is_null() || out.is_null() {
            return fail(EqmStatus::NullPointer, "null argument");
        }
        let v = Vec3::new(*v, *v.add(1), *v.add(2));
        match Quaternion::from(*q).rotate(v) {
            Ok(r) => {
                *out = r.x;
                *out.add(1) = r.y;
                *out.add(2) = r.z;
                EqmStatus::Ok
            }
            Err(e) => from_error(&e),
        }
    })
}

/// Sample in physical units on the host clock.
#[repr(C)]
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct EqmSample {
    pub device_id: u8,
    pub t_s: f64,
    /// g
    pub accel: [f64; 3],
    /// degrees per second
    pub gyro: [f64; 3],
}

impl From<&CalibratedSample> for EqmSample {
    fn from(s: &CalibratedSample) -> Self {
        EqmSample {
            device_id: s.device_id,
            t_s: s.t_s,
            accel: s.accel.to_array(),
            gyro: s.gyro.to_array(),
        }
    }
}

/// Live ingestion state: feed datagrams, drain ordered samples.
pub struct EqmIngest {
    state: IngestState,
    ready: Vec<CalibratedSample>,
}

#[no_mangle]
pub extern "C" fn eqm_ingest_new() -> *mut EqmIngest {
    Box::into_raw(Box::new(EqmIngest {
        state: IngestState::new(IngestConfig::default()),
        ready: Vec::new(),
    }))
}

/// # Safety
/// `h` must come from [`eqm_ingest_new`] and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn eqm_ingest_free(h: *mut EqmIngest) {
    if !h.is_null() {
        drop(Box::from_raw(h));
    }
}

/// Feeds one datagram received at `host_time_s`. Malformed datagrams are
/// counted, not reported as errors.
///
/// # Safety
/// `h` must be a live handle and `bytes` point to `len` readable bytes.
#[no_mangle]
pub unsafe extern "C" fn eqm_ingest_push(h: *mut EqmIngest, host_time_s: f64, bytes: *const u8, len: usize) -> EqmStatus {
    guard(|| {
        let Some(h) = h.as_mut() else {
            return fail(EqmStatus::NullPointer, "null handle");
        };
        if bytes.is_null() && len > 0 {
            return fail(EqmStatus::NullPointer, "bytes is null");
        }
        let data = if len == 0 { &[][..] } else { std::slice::from_raw_parts(bytes, len) };
        h.state.push(host_time_s, data, &mut h.ready);
        EqmStatus::Ok
    })
}

/// Releases everything still held in the reorder buffers.
///
/// # Safety
/// `h` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn eqm_ingest_flush(h: *mut EqmIngest) -> EqmStatus {
    guard(|| {
        let Some(h) = h.as_mut() else {
            return fail(EqmStatus::NullPointer, "null handle");
        };
        h.state.flush(&mut h.ready);
        EqmStatus::Ok
    })
}

/// Moves up to `cap` ready samples into `out`; `n` receives the count.
///
/// # Safety
/// `h` must be a live handle and `out` point to `cap` writable entries.
#[no_mangle]
pub unsafe extern "C" fn eqm_ingest_drain(h: *mut EqmIngest, out: *mut EqmSample, cap: usize, n: *mut usize) -> EqmStatus {
    guard(|| {
        let Some(h) = h.as_mut() else {
            return fail(EqmStatus::NullPointer, "null handle");
        };
        if n.is_null() || (out.is_null() && cap > 0) {
            return fail(EqmStatus::NullPointer, "null argument");
        }
        let k = cap.min(h.ready.len());
        for (i, s) in h.ready.drain(..k).enumerate() {
            *out.add(i) = EqmSample::from(&s);
        }
        *n = k;
        EqmStatus::Ok
    })
}

#[repr(C)]
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct EqmIngestStats {
    pub packets: u64,
    pub accepted: u64,
    pub duplicates: u64,
    pub late: u64,
    pub malformed: u64,
    pub unknown_device: u64,
    pub samples_emitted: u64,
    pub samples_lost: u64,
}

/// # Safety
/// `h` must be a live handle and `out` valid.
#[no_mangle]
pub unsafe extern "C" fn eqm_ingest_stats(h: *const EqmIngest, out: *mut EqmIngestStats) -> EqmStatus {
    guard(|| {
        let (Some(h), false) = (h.as_ref(), out.is_null()) else {
            return fail(EqmStatus::NullPointer, "null argument");
        };
        let s = h.state.stats();
        *out = EqmIngestStats {
            packets: s.packets,
            accepted: s.accepted,
            duplicates: s.duplicates,
            late: s.late,
            malformed: s.malformed,
            unknown_device: s.unknown_device,
            samples_emitted: s.samples_emitted,
            samples_lost: s.samples_lost,
        };
        EqmStatus::Ok
    })
}

/// A recorded session loaded from disk.
pub struct EqmSession(Session);

/// # Safety
/// `dir` must be a NUL-terminated string and `out` valid.
#[no_mangle]
pub unsafe extern "C" fn eqm_session_load(dir: *const c_char, out: *mut *mut EqmSession) -> EqmStatus {
    guard(|| {
        if out.is_null() {
            return fail(EqmStatus::NullPointer, "out is null");
        }
        *out = ptr::null_mut();
        let dir = match path_arg(dir) {
            Ok(d) => d,
            Err(s) => return s,
        };
        match load_session(dir) {
            Ok(s) => {
                *out = Box::into_raw(Box::new(EqmSession(s)));
                EqmStatus::Ok
            }
            Err(e) => from_error(&e),
        }
    })
}

/// # Safety
/// `h` must come from [`eqm_session_load`] and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn eqm_session_free(h: *mut EqmSession) {
    if !h.is_null() {
        drop(Box::from_raw(h));
    }
}

/// Number of samples across all devices, 0 for a null handle.
///
/// # Safety
/// `h` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn eqm_session_sample_count(h: *const EqmSession) -> usize {
    h.as_ref().map_or(0, |s| s.0.samples.len())
}

/// # Safety
/// `h` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn eqm_session_duration_s(h: *const EqmSession) -> f64 {
    h.as_ref().map_or(0.0, |s| s.0.duration_s())
}

/// Result of the full analysis pipeline.
pub struct EqmAnalysis(Analysis);

#[repr(C)]
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct EqmHoofEvent {
    /// Device id of the limb sensor (0 LF, 1 RF, 2 LH, 3 RH).
    pub limb: u8,
    /// 1 for hoof-on, 0 for hoof-off.
    pub hoof_on: u8,
    pub t_s: f64,
}

/// Runs the analysis with default thresholds.
///
/// # Safety
/// `session` must be a live handle and `out` valid.
#[no_mangle]
pub unsafe extern "C" fn eqm_analyze(session: *const EqmSession, out: *mut *mut EqmAnalysis) -> EqmStatus {
    guard(|| {
        if out.is_null() {
            return fail(EqmStatus::NullPointer, "out is null");
        }
        *out = ptr::null_mut();
        let Some(s) = session.as_ref() else {
            return fail(EqmStatus::NullPointer, "null session");
        };
        match analyze(&s.0, &AnalyzeConfig::default()) {
            Ok(a) => {
                *out = Box::into_raw(Box::new(EqmAnalysis(a)));
                EqmStatus::Ok
            }
            Err(e) => from_error(&e),
        }
    })
}

/// # Safety
/// `h` must come from [`eqm_analyze`] and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn eqm_analysis_free(h: *mut EqmAnalysis) {
    if !h.is_null() {
        drop(Box::from_raw(h));
    }
}

/// # Safety
/// `h` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn eqm_analysis_event_count(h: *const EqmAnalysis) -> usize {
    h.as_ref().map_or(0, |a| a.0.events.len())
}

/// # Safety
/// `h` must be a live handle and `out` valid.
#[no_mangle]
pub unsafe extern "C" fn eqm_analysis_event(h: *const EqmAnalysis, index: usize, out: *mut EqmHoofEvent) -> EqmStatus {
    guard(|| {
        let (Some(a), false) = (h.as_ref(), out.is_null()) else {
            return fail(EqmStatus::NullPointer, "null argument");
        };
        let Some(e) = a.0.events.get(index) else {
            return fail(EqmStatus::OutOfRange, format!("event {index} of {}", a.0.events.len()));
        };
        *out = EqmHoofEvent {
            limb: e.limb.device_id(),
            hoof_on: (e.kind == HoofKind::HoofOn) as u8,
            t_s: e.t_s,
        };
        EqmStatus::Ok
    })
}

/// Mean absolute timing error against the session's reference events, ms.
/// Fails with [`EqmStatus::Data`] when the session has no reference events.
///
/// # Safety
/// `h` must be a live handle and `out` valid.
#[no_mangle]
pub unsafe extern "C" fn eqm_analysis_timing_mae_ms(h: *const EqmAnalysis, out: *mut f64) -> EqmStatus {
    guard(|| {
        let (Some(a), false) = (h.as_ref(), out.is_null()) else {
            return fail(EqmStatus::NullPointer, "null argument");
        };
        match &a.0.timing {
            Some(t) => {
                *out = t.overall.mae_ms;
                EqmStatus::Ok
            }
            None => fail(EqmStatus::Data, "session has no reference events"),
        }
    })
}

/// Mean MMI of one rider placement (device id 4..=9), g.
///
/// # Safety
/// `h` must be a live handle and `out` valid.
#[no_mangle]
pub unsafe extern "C" fn eqm_analysis_mean_mmi(h: *const EqmAnalysis, device_id: u8, out: *mut f64) -> EqmStatus {
    guard(|| {
        let (Some(a), false) = (h.as_ref(), out.is_null()) else {
            return fail(EqmStatus::NullPointer, "null argument");
        };
        match a.0.rider.iter().find(|r| r.placement.device_id() == device_id) {
            Some(r) => {
                *out = r.series.mean();
                EqmStatus::Ok
            }
            None => fail(EqmStatus::OutOfRange, format!("no MMI series for device {device_id}")),
        }
    })
}

/// A trained activity classifier.
pub struct EqmClassifier(Classifier);

/// # Safety
/// `path` must be a NUL-terminated string and `out` valid.
#[no_mangle]
pub unsafe extern "C" fn eqm_classifier_load(path: *const c_char, out: *mut *mut EqmClassifier) -> EqmStatus {
    guard(|| {
        if out.is_null() {
            return fail(EqmStatus::NullPointer, "out is null");
        }
        *out = ptr::null_mut();
        let path = match path_arg(path) {
            Ok(p) => p,
            Err(s) => return s,
        };
        match checkpoint::load(&path) {
            Ok(c) => {
                *out = Box::into_raw(Box::new(EqmClassifier(c)));
                EqmStatus::Ok
            }
            Err(e) => from_error(&e),
        }
    })
}

/// # Safety
/// `h` must come from [`eqm_classifier_load`] and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn eqm_classifier_free(h: *mut EqmClassifier) {
    if !h.is_null() {
        drop(Box::from_raw(h));
    }
}

/// Number of classes, 0 for a null handle.
///
/// # Safety
/// `h` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn eqm_classifier_class_count(h: *const EqmClassifier) -> usize {
    h.as_ref().map_or(0, |c| c.0.vocab.len())
}

/// Evaluates on an annotated session and writes the macro-F1 to `out`.
///
/// # Safety
/// Handles must be live and `out` valid.
#[no_mangle]
pub unsafe extern "C" fn eqm_classifier_macro_f1(
    h: *const EqmClassifier,
    session: *const EqmSession,
    out: *mut f64,
) -> EqmStatus {
    guard(|| {
        let (Some(c), Some(s), false) = (h.as_ref(), session.as_ref(), out.is_null()) else {
            return fail(EqmStatus::NullPointer, "null argument");
        };
        let report = c
            .0
            .session_windows(std::slice::from_ref(&s.0))
            .and_then(|raw| c.0.evaluate(&raw));
        match report {
            Ok(r) => {
                *out = r.macro_f1;
                EqmStatus::Ok
            }
            Err(e) => from_error(&e),
        }
    })
}
