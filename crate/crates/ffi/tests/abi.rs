use std::ffi::{CStr, CString};
use std::path::Path;
use std::ptr;

use equimetrics::sim::{simulate_session, Gait, Script, ScriptStep, SimConfig};
use equimetrics::wire::save_session;
use equimetrics_ffi::*;

fn last_error() -> String {
    let p = eqm_last_error();
    assert!(!p.is_null());
    unsafe { CStr::from_ptr(p) }.to_string_lossy().into_owned()
}

#[test]
fn version_matches_crate() {
    let v = unsafe { CStr::from_ptr(eqm_version()) };
    assert_eq!(v.to_str().unwrap(), env!("CARGO_PKG_VERSION"));
}

#[test]
fn packet_round_trip() {
    let header = EqmPacketHeader {
        device_id: 3,
        seq: 77,
        t_device_us: 123_456_789,
        flags: 1,
        n_samples: 2,
    };
    let samples = [
        EqmRawSample { accel: [1, -2, 3], gyro: [-4, 5, -6] },
        EqmRawSample { accel: [i16::MAX, i16::MIN, 0], gyro: [7, 8, 9] },
    ];
    let mut buf = [0u8; 256];
    let mut written = 0;
    let s = unsafe { eqm_packet_encode(&header, samples.as_ptr(), buf.as_mut_ptr(), buf.len(), &mut written) };
    assert_eq!(s, EqmStatus::Ok);
    assert_eq!(written, 18 + 24);

    let mut h = EqmPacketHeader::default();
    let mut out = [EqmRawSample::default(); 10];
    let s = unsafe { eqm_packet_decode(buf.as_ptr(), written, &mut h, out.as_mut_ptr(), out.len()) };
    assert_eq!(s, EqmStatus::Ok);
    assert_eq!(h, header);
    assert_eq!(&out[..2], &samples);
}

#[test]
fn encode_reports_required_size() {
    let header = EqmPacketHeader { n_samples: 1, ..Default::default() };
    let sample = EqmRawSample::default();
    let mut buf = [0u8; 20];
    let mut written = 0;
    let s = unsafe { eqm_packet_encode(&header, &sample, buf.as_mut_ptr(), buf.len(), &mut written) };
    assert_eq!(s, EqmStatus::BufferTooSmall);
    assert_eq!(written, 30);
}

#[test]
fn truncated_packet_is_a_data_error() {
    let bytes = [0u8; 17];
    let mut h = EqmPacketHeader::default();
    let s = unsafe { eqm_packet_decode(bytes.as_ptr(), bytes.len(), &mut h, ptr::null_mut(), 0) };
    assert_eq!(s, EqmStatus::Data);
    assert!(!last_error().is_empty());
}

#[test]
fn null_arguments_are_rejected() {
    let s = unsafe { eqm_packet_decode(ptr::null(), 0, ptr::null_mut(), ptr::null_mut(), 0) };
    assert_eq!(s, EqmStatus::NullPointer);
    let mut out = ptr::null_mut();
    assert_eq!(unsafe { eqm_session_load(ptr::null(), &mut out) }, EqmStatus::NullPointer);
    assert_eq!(unsafe { eqm_session_sample_count(ptr::null()) }, 0);
    unsafe {
        eqm_session_free(ptr::null_mut());
        eqm_analysis_free(ptr::null_mut());
        eqm_classifier_free(ptr::null_mut());
        eqm_ingest_free(ptr::null_mut());
    }
}

#[test]
fn quaternion_helpers() {
    let h = std::f64::consts::FRAC_1_SQRT_2;
    // 90 degrees about z
    let q = EqmQuat { w: h, x: 0.0, y: 0.0, z: h };
    let mut r = [0.0; 3];
    assert_eq!(unsafe { eqm_quat_rotate(&q, [1.0, 0.0, 0.0].as_ptr(), r.as_mut_ptr()) }, EqmStatus::Ok);
    assert!((r[0]).abs() < 1e-12 && (r[1] - 1.0).abs() < 1e-12 && r[2].abs() < 1e-12);

    let mut qq = EqmQuat { w: 0.0, x: 0.0, y: 0.0, z: 0.0 };
    assert_eq!(unsafe { eqm_quat_mul(&q, &q, &mut qq) }, EqmStatus::Ok);
    assert!(qq.w.abs() < 1e-12 && (qq.z - 1.0).abs() < 1e-12);

    let zero = EqmQuat { w: 0.0, x: 0.0, y: 0.0, z: 0.0 };
    assert_ne!(unsafe { eqm_quat_rotate(&zero, [1.0, 0.0, 0.0].as_ptr(), r.as_mut_ptr()) }, EqmStatus::Ok);
}

fn walk_session(dir: &Path) {
    let mut script = Script::new(vec![ScriptStep::new(2.0, Gait::Halt), ScriptStep::new(10.0, Gait::Walk)]);
    script.config = SimConfig::clean();
    let sim = simulate_session(&script, 5).unwrap();
    save_session(dir, &sim.to_session("ffi")).unwrap();
}

#[test]
fn ingest_handle_recovers_simulated_stream() {
    let script = Script::new(vec![ScriptStep::new(3.0, Gait::Walk)]);
    let sim = simulate_session(&script, 2).unwrap();
    let h = eqm_ingest_new();
    for (t, bytes) in &sim.packets {
        assert_eq!(unsafe { eqm_ingest_push(h, *t, bytes.as_ptr(), bytes.len()) }, EqmStatus::Ok);
    }
    let garbage = [0xffu8; 5];
    assert_eq!(unsafe { eqm_ingest_push(h, 3.5, garbage.as_ptr(), garbage.len()) }, EqmStatus::Ok);
    assert_eq!(unsafe { eqm_ingest_flush(h) }, EqmStatus::Ok);

    let mut got = Vec::new();
    let mut buf = vec![EqmSample::default(); 1000];
    loop {
        let mut n = 0;
        assert_eq!(unsafe { eqm_ingest_drain(h, buf.as_mut_ptr(), buf.len(), &mut n) }, EqmStatus::Ok);
        if n == 0 {
            break;
        }
        got.extend_from_slice(&buf[..n]);
    }
    assert_eq!(got.len(), sim.samples.len());
    let mut stats = EqmIngestStats::default();
    assert_eq!(unsafe { eqm_ingest_stats(h, &mut stats) }, EqmStatus::Ok);
    assert_eq!(stats.malformed, 1);
    assert_eq!(stats.samples_emitted as usize, got.len());
    unsafe { eqm_ingest_free(h) };
}

#[test]
fn session_analysis_handles() {
    let dir = tempfile::tempdir().unwrap();
    walk_session(dir.path());
    let path = CString::new(dir.path().to_str().unwrap()).unwrap();
    let mut session = ptr::null_mut();
    assert_eq!(unsafe { eqm_session_load(path.as_ptr(), &mut session) }, EqmStatus::Ok);
    assert_eq!(unsafe { eqm_session_sample_count(session) }, 10 * 12 * 130);
    assert!((unsafe { eqm_session_duration_s(session) } - 12.0).abs() < 0.01);

    let mut a = ptr::null_mut();
    assert_eq!(unsafe { eqm_analyze(session, &mut a) }, EqmStatus::Ok);
    let n = unsafe { eqm_analysis_event_count(a) };
    assert!(n > 0);
    let mut ev = EqmHoofEvent::default();
    assert_eq!(unsafe { eqm_analysis_event(a, 0, &mut ev) }, EqmStatus::Ok);
    assert!(ev.limb < 4 && ev.t_s >= 0.0);
    assert_eq!(unsafe { eqm_analysis_event(a, n, &mut ev) }, EqmStatus::OutOfRange);
    let mut mae = 0.0;
    assert_eq!(unsafe { eqm_analysis_timing_mae_ms(a, &mut mae) }, EqmStatus::Ok);
    assert!(mae <= 7.69, "{mae}");
    let mut mmi = 0.0;
    assert_eq!(unsafe { eqm_analysis_mean_mmi(a, 8, &mut mmi) }, EqmStatus::Ok);
    assert!(mmi > 0.0);
    assert_eq!(unsafe { eqm_analysis_mean_mmi(a, 0, &mut mmi) }, EqmStatus::OutOfRange);
    unsafe {
        eqm_analysis_free(a);
        eqm_session_free(session);
    }
}

#[test]
fn missing_session_is_an_io_error() {
    let dir = tempfile::tempdir().unwrap();
    let path = CString::new(dir.path().join("absent").to_str().unwrap()).unwrap();
    let mut session = ptr::null_mut();
    assert_eq!(unsafe { eqm_session_load(path.as_ptr(), &mut session) }, EqmStatus::Io);
    assert!(session.is_null());
    assert!(last_error().contains("absent"));
}

#[test]
fn corrupt_checkpoint_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("bad.eqmc");
    std::fs::write(&p, b"EQMCgarbage").unwrap();
    let path = CString::new(p.to_str().unwrap()).unwrap();
    let mut c = ptr::null_mut();
    assert_eq!(unsafe { eqm_classifier_load(path.as_ptr(), &mut c) }, EqmStatus::Data);
    assert!(c.is_null());
    assert_eq!(unsafe { eqm_classifier_class_count(c) }, 0);
}
