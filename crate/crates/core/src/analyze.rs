//! Whole-session analysis: resample, calibrate, fuse, detect hoof events,
//! extract rider residuals and summarize them as MMI series and an activity
//! map.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::events::{detect_limb, evaluate_timing, EventConfig, TimingReport};
use crate::fusion::{fuse_orientation, FusionConfig, OrientationTrack, DEFAULT_BETA};
use crate::preprocess::{calibrate, resample_uniform, UniformTrack};
use crate::rider::{
    activity_map, align_lag, extract_residual, mmi, write_mmi_csv, ActivityMap, MmiSeries, DEFAULT_BIN_S,
    DEFAULT_MAX_LAG, DEFAULT_STRIDE_S, DEFAULT_WINDOW_S,
};
use crate::types::{HoofEvent, Placement};
use crate::wire::session::{write_events, Session};

pub const EVENTS_FILE: &str = "events.csv";
pub const TIMING_FILE: &str = "timing_report.json";
pub const MMI_FILE: &str = "mmi.csv";
pub const ACTIVITY_FILE: &str = "activity_map.csv";
pub const REPORT_FILE: &str = "report.txt";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AnalyzeConfig {
    pub events: EventConfig,
    pub beta: f64,
    /// Detected/reference events further apart than this are not matched, s.
    pub match_window_s: f64,
    pub max_lag_samples: usize,
    pub mmi_window_s: f64,
    pub mmi_stride_s: f64,
    pub activity_bin_s: f64,
}

impl Default for AnalyzeConfig {
    fn default() -> Self {
        AnalyzeConfig {
            events: EventConfig::default(),
            beta: DEFAULT_BETA,
            match_window_s: 0.1,
            max_lag_samples: DEFAULT_MAX_LAG,
            mmi_window_s: DEFAULT_WINDOW_S,
            mmi_stride_s: DEFAULT_STRIDE_S,
            activity_bin_s: DEFAULT_BIN_S,
        }
    }
}

impl AnalyzeConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::InvalidConfig(format!("thresholds: {e}")))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RiderResult {
    pub placement: Placement,
    pub lag_samples: i32,
    pub series: MmiSeries,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Analysis {
    pub t0: f64,
    pub duration_s: f64,
    pub devices: Vec<Placement>,
    pub events: Vec<HoofEvent>,
    pub timing: Option<TimingReport>,
    pub rider: Vec<RiderResult>,
    pub activity: Option<ActivityMap>,
    /// Human-readable remarks about skipped or degraded steps.
    pub notes: Vec<String>,
}

fn calibrated(track: &UniformTrack, notes: &mut Vec<String>) -> UniformTrack {
    let name = Placement::from_device_id(track.device_id).map_or("?", |p| p.name());
    match calibrate(track) {
        Ok(c) => c.apply(track),
        Err(e) => {
            notes.push(format!("{name}: calibration skipped ({e})"));
            track.clone()
        }
    }
}

/// Runs the full pipeline over one session.
pub fn analyze(session: &Session, cfg: &AnalyzeConfig) -> Result<Analysis> {
    let tracks = resample_uniform(&session.samples)?;
    let mut notes = Vec::new();
    let t0 = tracks[0].t0;
    let duration_s = tracks[0].duration_s();
    let find = |p: Placement| tracks.iter().find(|t| t.device_id == p.device_id());
    let devices: Vec<Placement> = tracks.iter().filter_map(|t| Placement::from_device_id(t.device_id)).collect();

    let mut events = Vec::new();
    for limb in Placement::HORSE_LIMBS {
        match find(limb) {
            Some(t) => events.extend(detect_limb(&calibrated(t, &mut notes), limb, &cfg.events)),
            None => notes.push(format!("{limb}: sensor absent, no hoof events")),
        }
    }
    events.sort_by(|a, b| a.t_s.total_cmp(&b.t_s).then(a.limb.cmp(&b.limb)));
    let timing = session
        .truth_events
        .as_ref()
        .map(|truth| evaluate_timing(&events, truth, cfg.match_window_s));

    let fusion = FusionConfig {
        beta: cfg.beta,
        ..FusionConfig::default()
    };
    let fuse = |t: &UniformTrack, notes: &mut Vec<String>| -> OrientationTrack { fuse_orientation(&calibrated(t, notes), &fusion) };
    let mut rider = Vec::new();
    match find(Placement::Waist) {
        None => notes.push("waist: sensor absent, MMI skipped".into()),
        Some(w) => {
            let waist = fuse(w, &mut notes);
            for p in Placement::RIDER_LIMBS {
                let Some(t) = find(p) else {
                    notes.push(format!("{p}: sensor absent, MMI skipped"));
                    continue;
                };
                let limb = fuse(t, &mut notes);
                let lag = match align_lag(
                    &limb.a_earth,
                    limb.valid(),
                    &waist.a_earth,
                    waist.valid(),
                    limb.track.rate_hz,
                    cfg.max_lag_samples,
                ) {
                    Ok(l) => l,
                    Err(e) => {
                        notes.push(format!("{p}: MMI skipped ({e})"));
                        continue;
                    }
                };
                let res = extract_residual(p, &limb, &waist, lag);
                match mmi(&res, Some(&waist.a_earth), cfg.mmi_window_s, cfg.mmi_stride_s) {
                    Ok(series) => rider.push(RiderResult {
                        placement: p,
                        lag_samples: lag,
                        series,
                    }),
                    Err(e) => notes.push(format!("{p}: MMI skipped ({e})")),
                }
            }
        }
    }
    let activity = (!rider.is_empty()).then(|| {
        let series: Vec<(Placement, MmiSeries)> = rider.iter().map(|r| (r.placement, r.series.clone())).collect();
        activity_map(&series, t0, duration_s, cfg.activity_bin_s)
    });
    Ok(Analysis {
        t0,
        duration_s,
        devices,
        events,
        timing,
        rider,
        activity,
        notes,
    })
}

impl Analysis {
    pub fn summary(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "duration_s: {:.3}", self.duration_s);
        let names: Vec<&str> = self.devices.iter().map(|p| p.name()).collect();
        let _ = writeln!(s, "devices: {}", names.join(" "));
        let _ = writeln!(s, "hoof_events: {}", self.events.len());
        if let Some(t) = &self.timing {
            let _ = writeln!(
                s,
                "timing: {} mae {:.3} ms, max {:.3} ms, matched {}, misses {}, false positives {}",
                t.statistic, t.overall.mae_ms, t.overall.max_abs_ms, t.overall.matched, t.overall.misses, t.overall.false_positives
            );
        }
        for r in &self.rider {
            let _ = writeln!(
                s,
                "mmi {}: mean {:.4} g over {} windows, lag {} samples",
                r.placement,
                r.series.mean(),
                r.series.len(),
                r.lag_samples
            );
        }
        for n in &self.notes {
            let _ = writeln!(s, "note: {n}");
        }
        s
    }

    /// Writes the plot-ready outputs into `dir`; returns the written paths.
    pub fn write(&self, dir: &Path) -> Result<Vec<PathBuf>> {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let mut out = Vec::new();
        let p = dir.join(EVENTS_FILE);
        write_events(&p, &self.events)?;
        out.push(p);
        if let Some(t) = &self.timing {
            let p = dir.join(TIMING_FILE);
            std::fs::write(&p, serde_json::to_string_pretty(t)?).map_err(|e| Error::io(&p, e))?;
            out.push(p);
        }
        if !self.rider.is_empty() {
            let series: Vec<(Placement, MmiSeries)> = self.rider.iter().map(|r| (r.placement, r.series.clone())).collect();
            let p = dir.join(MMI_FILE);
            write_mmi_csv(&p, &series)?;
            out.push(p);
        }
        if let Some(a) = &self.activity {
            let p = dir.join(ACTIVITY_FILE);
            a.write_csv(&p)?;
            out.push(p);
        }
        let p = dir.join(REPORT_FILE);
        std::fs::write(&p, self.summary()).map_err(|e| Error::io(&p, e))?;
        out.push(p);
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sim::{simulate_session, Gait, Script, ScriptStep, SimConfig};

    fn walk_session(clean: bool) -> Session {
        let mut script = Script::new(vec![ScriptStep::new(2.0, Gait::Halt), ScriptStep::new(12.0, Gait::Walk)]);
        if clean {
            script.config = SimConfig::clean();
        }
        simulate_session(&script, 3).unwrap().to_session("t")
    }

    #[test]
    fn full_session_produces_every_output() {
        let s = walk_session(false);
        let a = analyze(&s, &AnalyzeConfig::default()).unwrap();
        let t = a.timing.as_ref().unwrap();
        assert_eq!(t.overall.misses, 0);
        assert!(t.overall.mae_ms < 9.0, "{}", t.overall.mae_ms);
        assert_eq!(a.rider.len(), 5);
        assert!(a.activity.is_some());
        let dir = tempfile::tempdir().unwrap();
        let files = a.write(dir.path()).unwrap();
        assert_eq!(files.len(), 5);
    }

    #[test]
    fn missing_rider_sensors_skip_mmi() {
        let mut s = walk_session(true);
        s.samples.retain(|x| x.device_id < 4);
        let a = analyze(&s, &AnalyzeConfig::default()).unwrap();
        assert!(!a.events.is_empty());
        assert!(a.rider.is_empty() && a.activity.is_none());
        assert!(a.notes.iter().any(|n| n.contains("MMI skipped")));
        let dir = tempfile::tempdir().unwrap();
        let files = a.write(dir.path()).unwrap();
        assert!(!files.iter().any(|f| f.ends_with(MMI_FILE)));
    }

    #[test]
    fn halt_only_has_no_events() {
        let mut script = Script::new(vec![ScriptStep::new(8.0, Gait::Halt)]);
        let r = &mut script.config.rider;
        for m in [&mut r.head, &mut r.left_arm, &mut r.right_arm, &mut r.left_leg, &mut r.right_leg] {
            m.amplitude_g = 0.0;
        }
        let s = simulate_session(&script, 1).unwrap().to_session("h");
        let a = analyze(&s, &AnalyzeConfig::default()).unwrap();
        assert!(a.events.is_empty());
        for r in &a.rider {
            // difference of two 3-axis noise vectors: sqrt(6) x 0.02 g
            assert!(r.series.mean() < 0.08, "{} {}", r.placement, r.series.mean());
        }
    }

    #[test]
    fn thresholds_reject_unknown_keys() {
        assert!(AnalyzeConfig::from_json(r#"{"events": {"stance_dps": 40}}"#).is_ok());
        assert!(AnalyzeConfig::from_json(r#"{"stance": 1}"#).is_err());
    }
}
