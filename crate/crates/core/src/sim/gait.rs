use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::quat::Vec3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Gait {
    Halt,
    Walk,
    Trot,
    Canter,
    Jump,
}

impl Gait {
    pub const ALL: [Gait; 5] = [Gait::Halt, Gait::Walk, Gait::Trot, Gait::Canter, Gait::Jump];

    pub fn name(self) -> &'static str {
        match self {
            Gait::Halt => "halt",
            Gait::Walk => "walk",
            Gait::Trot => "trot",
            Gait::Canter => "canter",
            Gait::Jump => "jump",
        }
    }
}

impl fmt::Display for Gait {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Gait {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        Gait::ALL
            .into_iter()
            .find(|g| g.name() == s)
            .ok_or_else(|| format!("unknown gait '{s}'"))
    }
}

/// Time constant of the impact transient at stance onset.
pub const IMPACT_DECAY_S: f64 = 0.012;

/// Stationary limb-cycle parameters. Per-limb arrays are indexed LF, RF, LH, RH.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GaitParams {
    pub gait: Gait,
    pub stride_hz: f64,
    pub duty: [f64; 4],
    /// Fraction of the stride cycle at which each limb's stance begins.
    pub phase: [f64; 4],
    pub impact_g: f64,
    /// Peak sagittal angular rate at mid-swing.
    pub swing_dps: f64,
    pub noise_accel_g: f64,
    pub noise_gyro_dps: f64,
}

impl GaitParams {
    /// Footfall tables: walk is 4-beat (LH, LF, RH, RF), trot moves diagonal
    /// pairs, canter (right lead) is 3-beat with the LF/RH diagonal together.
    pub fn for_gait(gait: Gait) -> GaitParams {
        let (stride_hz, duty, phase, impact_g, swing_dps) = match gait {
            Gait::Halt => (0.0, 1.0, [0.0; 4], 0.0, 0.0),
            Gait::Walk => (0.9, 0.62, [0.25, 0.75, 0.0, 0.5], 1.5, 250.0),
            Gait::Trot => (1.4, 0.45, [0.0, 0.5, 0.5, 0.0], 2.5, 400.0),
            Gait::Canter => (1.8, 0.40, [0.3, 0.6, 0.0, 0.3], 3.0, 480.0),
            Gait::Jump => (1.8, 0.40, [0.3, 0.6, 0.0, 0.3], 3.0, 520.0),
        };
        GaitParams {
            gait,
            stride_hz,
            duty: [duty; 4],
            phase,
            impact_g,
            swing_dps,
            noise_accel_g: 0.0,
            noise_gyro_dps: 0.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.gait == Gait::Halt {
            return Ok(());
        }
        if !(self.stride_hz > 0.0 && self.stride_hz.is_finite()) {
            return Err(Error::InvalidScript(format!("stride frequency must be > 0, got {}", self.stride_hz)));
        }
        for (&d, &p) in self.duty.iter().zip(&self.phase) {
            if !(d > 0.0 && d < 1.0) {
                return Err(Error::InvalidScript(format!("duty factor {d} outside (0, 1)")));
            }
            if !(0.0..1.0).contains(&p) {
                return Err(Error::InvalidScript(format!("limb phase {p} outside [0, 1)")));
            }
        }
        if self.impact_g < 0.0 || self.swing_dps < 0.0 || self.noise_accel_g < 0.0 || self.noise_gyro_dps < 0.0 {
            return Err(Error::InvalidScript("amplitudes and noise levels must be non-negative".into()));
        }
        Ok(())
    }

    pub fn period_s(&self) -> f64 {
        1.0 / self.stride_hz
    }
}

/// Noise-free limb signal in an upright sensor frame (z up, y the sagittal
/// rotation axis) at `phase` of limb `limb`'s own cycle, where phase 0 is
/// stance onset.
///
/// Stance: gravity plus the impact transient `impact_g * exp(-tau / 12 ms)`
/// on z, no rotation. Swing: a half-sine sagittal rate bump peaking at
/// `swing_dps` mid-swing.
pub fn limb_cycle(params: &GaitParams, limb: usize, phase: f64) -> (Vec3, Vec3) {
    if params.gait == Gait::Halt {
        return (Vec3::Z, Vec3::ZERO);
    }
    let duty = params.duty[limb];
    let phase = phase.rem_euclid(1.0);
    if phase < duty {
        let tau = phase * params.period_s();
        let spike = params.impact_g * (-tau / IMPACT_DECAY_S).exp();
        (Vec3::new(0.0, 0.0, 1.0 + spike), Vec3::ZERO)
    } else {
        let s = (phase - duty) / (1.0 - duty);
        (Vec3::Z, Vec3::new(0.0, params.swing_dps * (PI * s).sin(), 0.0))
    }
}
