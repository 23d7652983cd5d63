//! Simulation scripts: an ordered list of steps plus rig-level settings.
//!
//! A script file is JSON, either a bare list of steps or an object with
//! `steps` and an optional `config`:
//!
//! ```json
//! { "steps": [ { "duration_s": 5, "gait": "halt", "task": "halt_salute" },
//!              { "duration_s": 30, "gait": "trot", "task": "trot_circle", "lateral_g": 0.15 } ],
//!   "config": { "noise_gyro_dps": 1.0 } }
//! ```

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::gait::{Gait, GaitParams};
use crate::error::{Error, Result};
use crate::quat::Vec3;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScriptStep {
    pub duration_s: f64,
    pub gait: Gait,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub task: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub stride_hz: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub duty: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub impact_g: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub swing_dps: Option<f64>,
    /// Sustained lateral (centripetal) trunk acceleration, +y is left.
    #[serde(default)]
    pub lateral_g: f64,
    /// Lateral-axis limb rotation during swing (crossing legs), signed.
    #[serde(default)]
    pub crossing_dps: f64,
    /// Left/right swing amplitude imbalance: left x (1 + a), right x (1 - a).
    #[serde(default)]
    pub asymmetry: f64,
    /// Scales the rider's independent limb motion.
    #[serde(default = "one")]
    pub rider_gain: f64,
    /// Lateral leg-aid bursts; positive drives the left leg, negative the right.
    #[serde(default)]
    pub leg_aid_g: f64,
    /// Spacing of obstacles in a jump step.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub jump_interval_s: Option<f64>,
}

fn one() -> f64 {
    1.0
}

impl ScriptStep {
    pub fn new(duration_s: f64, gait: Gait) -> Self {
        ScriptStep {
            duration_s,
            gait,
            task: None,
            stride_hz: None,
            duty: None,
            impact_g: None,
            swing_dps: None,
            lateral_g: 0.0,
            crossing_dps: 0.0,
            asymmetry: 0.0,
            rider_gain: 1.0,
            leg_aid_g: 0.0,
            jump_interval_s: None,
        }
    }

    pub fn with_task(mut self, task: impl Into<String>) -> Self {
        self.task = Some(task.into());
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.duration_s > 0.0 && self.duration_s.is_finite()) {
            return Err(Error::InvalidScript(format!("step duration must be > 0, got {}", self.duration_s)));
        }
        if self.asymmetry.abs() >= 1.0 {
            return Err(Error::InvalidScript("asymmetry must be within (-1, 1)".into()));
        }
        if self.rider_gain < 0.0 {
            return Err(Error::InvalidScript("rider_gain must be non-negative".into()));
        }
        if let Some(j) = self.jump_interval_s {
            if !(j >= 1.5) {
                return Err(Error::InvalidScript("jump_interval_s must be at least 1.5 s".into()));
            }
        }
        Ok(())
    }

    /// Resolved limb-cycle parameters for this step under a horse profile.
    pub fn params(&self, horse: &HorseProfile, config: &SimConfig) -> GaitParams {
        let mut p = GaitParams::for_gait(self.gait);
        if self.gait != Gait::Halt {
            p.stride_hz = self.stride_hz.unwrap_or(p.stride_hz * horse.stride_scale);
            if let Some(d) = self.duty {
                p.duty = [d; 4];
            } else {
                p.duty = p.duty.map(|d| (d + horse.duty_shift).clamp(0.05, 0.95));
            }
            p.impact_g = self.impact_g.unwrap_or(p.impact_g * horse.impact_scale);
            p.swing_dps = self.swing_dps.unwrap_or(p.swing_dps * horse.swing_scale);
        }
        p.noise_accel_g = config.noise_accel_g;
        p.noise_gyro_dps = config.noise_gyro_dps;
        p
    }
}

/// Individual horse variation applied on top of the gait defaults.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct HorseProfile {
    pub stride_scale: f64,
    pub swing_scale: f64,
    pub impact_scale: f64,
    pub duty_shift: f64,
    /// Scales the trunk (waist) response to limb impacts.
    pub trunk_gain: f64,
}

impl Default for HorseProfile {
    fn default() -> Self {
        HorseProfile {
            stride_scale: 1.0,
            swing_scale: 1.0,
            impact_scale: 1.0,
            duty_shift: 0.0,
            trunk_gain: 1.0,
        }
    }
}

/// A rider limb's own motion: sinusoid bursts along a fixed earth-frame axis.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RiderMotion {
    pub amplitude_g: f64,
    pub freq_hz: f64,
    pub axis: Vec3,
    pub burst_on_s: f64,
    pub burst_off_s: f64,
    /// Start of the first burst.
    pub offset_s: f64,
}

/// Rider motion per rider placement (head, arms, legs).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RiderProfile {
    pub head: RiderMotion,
    pub left_arm: RiderMotion,
    pub right_arm: RiderMotion,
    pub left_leg: RiderMotion,
    pub right_leg: RiderMotion,
    /// Delay of rider limbs relative to the waist, samples.
    pub lag_samples: i32,
}

impl Default for RiderProfile {
    fn default() -> Self {
        let m = |amplitude_g, freq_hz, axis, on, off, offset_s| RiderMotion {
            amplitude_g,
            freq_hz,
            axis,
            burst_on_s: on,
            burst_off_s: off,
            offset_s,
        };
        RiderProfile {
            head: m(0.05, 1.1, Vec3::X, 2.0, 3.0, 0.7),
            left_arm: m(0.15, 1.6, Vec3::X, 3.0, 2.0, 0.4),
            right_arm: m(0.15, 1.7, Vec3::X, 3.0, 2.0, 1.9),
            left_leg: m(0.25, 2.2, Vec3::Y, 2.5, 2.5, 0.9),
            right_leg: m(0.25, 2.3, Vec3::Y, 2.5, 2.5, 2.2),
            lag_samples: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SimConfig {
    pub noise_accel_g: f64,
    pub noise_gyro_dps: f64,
    /// Bias added to every gyroscope.
    pub gyro_bias_dps: Vec3,
    /// Bias added to every accelerometer.
    pub accel_bias_g: Vec3,
    pub horse: HorseProfile,
    pub rider: RiderProfile,
    pub samples_per_packet: usize,
    /// Base network latency and mean exponential jitter.
    pub latency_s: f64,
    pub jitter_s: f64,
    /// Minimum stance / swing durations kept in the ground truth timeline.
    pub min_stance_s: f64,
    pub min_swing_s: f64,
}

impl Default for SimConfig {
    fn default() -> Self {
        SimConfig {
            noise_accel_g: 0.02,
            noise_gyro_dps: 0.5,
            gyro_bias_dps: Vec3::ZERO,
            accel_bias_g: Vec3::ZERO,
            horse: HorseProfile::default(),
            rider: RiderProfile::default(),
            samples_per_packet: 5,
            latency_s: 0.002,
            jitter_s: 0.001,
            min_stance_s: 0.12,
            min_swing_s: 0.15,
        }
    }
}

impl SimConfig {
    /// Noise-free variant (clean-signal oracles).
    pub fn clean() -> Self {
        SimConfig {
            noise_accel_g: 0.0,
            noise_gyro_dps: 0.0,
            ..SimConfig::default()
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Script {
    pub steps: Vec<ScriptStep>,
    #[serde(default)]
    pub config: SimConfig,
}

#[derive(Deserialize)]
#[serde(untagged)]
enum ScriptFile {
    Steps(Vec<ScriptStep>),
    Full(Box<Script>),
}

impl Script {
    pub fn new(steps: Vec<ScriptStep>) -> Self {
        Script {
            steps,
            config: SimConfig::default(),
        }
    }

    pub fn from_json(text: &str) -> Result<Script> {
        let parsed: ScriptFile =
            serde_json::from_str(text).map_err(|e| Error::InvalidScript(e.to_string()))?;
        let script = match parsed {
            ScriptFile::Steps(steps) => Script::new(steps),
            ScriptFile::Full(s) => *s,
        };
        script.validate()?;
        Ok(script)
    }

    pub fn load(path: &Path) -> Result<Script> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Script::from_json(&text)
    }

    pub fn validate(&self) -> Result<()> {
        if self.steps.is_empty() {
            return Err(Error::InvalidScript("script has no steps".into()));
        }
        for s in &self.steps {
            s.validate()?;
            s.params(&self.config.horse, &self.config).validate()?;
        }
        let c = &self.config;
        if c.noise_accel_g < 0.0 || c.noise_gyro_dps < 0.0 || c.latency_s < 0.0 || c.jitter_s < 0.0 {
            return Err(Error::InvalidScript("noise and latency settings must be non-negative".into()));
        }
        if c.samples_per_packet == 0 || c.samples_per_packet > crate::wire::codec::MAX_SAMPLES {
            return Err(Error::InvalidScript("samples_per_packet must be within 1..=10".into()));
        }
        Ok(())
    }

    pub fn duration_s(&self) -> f64 {
        self.steps.iter().map(|s| s.duration_s).sum()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_bare_list_and_full_form() {
        let s = Script::from_json(r#"[{"duration_s": 10, "gait": "walk"}]"#).unwrap();
        assert_eq!(s.steps.len(), 1);
        assert_eq!(s.config, SimConfig::default());
        let s = Script::from_json(
            r#"{"steps": [{"duration_s": 2, "gait": "halt", "task": "salute"}],
                "config": {"noise_gyro_dps": 5.0}}"#,
        )
        .unwrap();
        assert_eq!(s.steps[0].task.as_deref(), Some("salute"));
        assert_eq!(s.config.noise_gyro_dps, 5.0);
        assert_eq!(s.config.noise_accel_g, 0.02);
    }

    #[test]
    fn rejects_bad_scripts() {
        assert!(matches!(Script::from_json("[]"), Err(Error::InvalidScript(_))));
        assert!(Script::from_json(r#"[{"duration_s": 0, "gait": "walk"}]"#).is_err());
        assert!(Script::from_json(r#"[{"duration_s": 1, "gait": "gallop"}]"#).is_err());
        assert!(Script::from_json(r#"[{"duration_s": 1, "gait": "walk", "duty": 1.2}]"#).is_err());
        assert!(Script::from_json("not json").is_err());
    }
}
