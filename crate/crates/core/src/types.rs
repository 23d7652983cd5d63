//! Domain types shared by every stage of the pipeline.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::quat::Vec3;

/// Nominal sampling rate of every sensor node.
pub const SAMPLE_RATE_HZ: f64 = 130.0;
/// Nominal sample period, seconds.
pub const SAMPLE_PERIOD_S: f64 = 1.0 / SAMPLE_RATE_HZ;

/// Accelerometer full scale (±16 g) over the signed 16-bit range.
pub const ACCEL_LSB_G: f64 = 16.0 / 32768.0;
/// Gyroscope full scale (±2000 dps) over the signed 16-bit range.
pub const GYRO_LSB_DPS: f64 = 2000.0 / 32768.0;

pub const ACCEL_RANGE_G: f64 = 16.0;
pub const GYRO_RANGE_DPS: f64 = 2000.0;

pub const DEVICE_COUNT: usize = 10;

/// Mounting position of a sensor node. Device ids are fixed:
/// 0-3 horse LF/RF/LH/RH, 4 head, 5 waist, 6/7 arms L/R, 8/9 legs L/R.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Placement {
    #[serde(rename = "LF")]
    HorseLf,
    #[serde(rename = "RF")]
    HorseRf,
    #[serde(rename = "LH")]
    HorseLh,
    #[serde(rename = "RH")]
    HorseRh,
    #[serde(rename = "head")]
    Head,
    #[serde(rename = "waist")]
    Waist,
    #[serde(rename = "left_arm")]
    LeftArm,
    #[serde(rename = "right_arm")]
    RightArm,
    #[serde(rename = "left_leg")]
    LeftLeg,
    #[serde(rename = "right_leg")]
    RightLeg,
}

impl Placement {
    pub const ALL: [Placement; DEVICE_COUNT] = [
        Placement::HorseLf,
        Placement::HorseRf,
        Placement::HorseLh,
        Placement::HorseRh,
        Placement::Head,
        Placement::Waist,
        Placement::LeftArm,
        Placement::RightArm,
        Placement::LeftLeg,
        Placement::RightLeg,
    ];

    pub const HORSE_LIMBS: [Placement; 4] = [
        Placement::HorseLf,
        Placement::HorseRf,
        Placement::HorseLh,
        Placement::HorseRh,
    ];

    /// Rider sensors analysed against the waist reference.
    pub const RIDER_LIMBS: [Placement; 5] = [
        Placement::Head,
        Placement::LeftArm,
        Placement::RightArm,
        Placement::LeftLeg,
        Placement::RightLeg,
    ];

    pub fn from_device_id(id: u8) -> Option<Placement> {
        Placement::ALL.get(id as usize).copied()
    }

    pub fn device_id(self) -> u8 {
        self as u8
    }

    pub fn is_horse_limb(self) -> bool {
        (self as u8) < 4
    }

    pub fn is_hind(self) -> bool {
        matches!(self, Placement::HorseLh | Placement::HorseRh)
    }

    pub fn is_left(self) -> bool {
        matches!(
            self,
            Placement::HorseLf | Placement::HorseLh | Placement::LeftArm | Placement::LeftLeg
        )
    }

    pub fn name(self) -> &'static str {
        match self {
            Placement::HorseLf => "LF",
            Placement::HorseRf => "RF",
            Placement::HorseLh => "LH",
            Placement::HorseRh => "RH",
            Placement::Head => "head",
            Placement::Waist => "waist",
            Placement::LeftArm => "left_arm",
            Placement::RightArm => "right_arm",
            Placement::LeftLeg => "left_leg",
            Placement::RightLeg => "right_leg",
        }
    }
}

impl fmt::Display for Placement {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Placement {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Placement::ALL
            .iter()
            .copied()
            .find(|p| p.name().eq_ignore_ascii_case(s))
            .ok_or_else(|| format!("unknown placement '{s}'"))
    }
}

/// One 6-axis reading in raw sensor counts.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct RawImu {
    pub accel: [i16; 3],
    pub gyro: [i16; 3],
}

impl RawImu {
    pub fn accel_g(&self) -> Vec3 {
        Vec3::new(
            self.accel[0] as f64 * ACCEL_LSB_G,
            self.accel[1] as f64 * ACCEL_LSB_G,
            self.accel[2] as f64 * ACCEL_LSB_G,
        )
    }

    pub fn gyro_dps(&self) -> Vec3 {
        Vec3::new(
            self.gyro[0] as f64 * GYRO_LSB_DPS,
            self.gyro[1] as f64 * GYRO_LSB_DPS,
            self.gyro[2] as f64 * GYRO_LSB_DPS,
        )
    }

    /// Quantizes physical values to counts, saturating at full scale.
    pub fn quantize(accel: Vec3, gyro: Vec3) -> RawImu {
        fn q(v: f64, lsb: f64) -> i16 {
            (v / lsb).round().clamp(i16::MIN as f64, i16::MAX as f64) as i16
        }
        RawImu {
            accel: [q(accel.x, ACCEL_LSB_G), q(accel.y, ACCEL_LSB_G), q(accel.z, ACCEL_LSB_G)],
            gyro: [q(gyro.x, GYRO_LSB_DPS), q(gyro.y, GYRO_LSB_DPS), q(gyro.z, GYRO_LSB_DPS)],
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RawSample {
    pub device_id: u8,
    pub t_device_us: u64,
    pub imu: RawImu,
}

/// One reading in physical units on the host clock.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CalibratedSample {
    pub device_id: u8,
    pub t_s: f64,
    /// g
    pub accel: Vec3,
    /// degrees per second
    pub gyro: Vec3,
}

impl CalibratedSample {
    pub fn from_raw(device_id: u8, t_s: f64, imu: &RawImu) -> Self {
        CalibratedSample {
            device_id,
            t_s,
            accel: imu.accel_g(),
            gyro: imu.gyro_dps(),
        }
    }

    pub fn in_range(&self) -> bool {
        let a = self.accel.to_array();
        let g = self.gyro.to_array();
        a.iter().all(|v| v.abs() <= ACCEL_RANGE_G) && g.iter().all(|v| v.abs() <= GYRO_RANGE_DPS)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HoofKind {
    HoofOn,
    HoofOff,
}

impl HoofKind {
    pub fn name(self) -> &'static str {
        match self {
            HoofKind::HoofOn => "hoof_on",
            HoofKind::HoofOff => "hoof_off",
        }
    }
}

impl FromStr for HoofKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "hoof_on" => Ok(HoofKind::HoofOn),
            "hoof_off" => Ok(HoofKind::HoofOff),
            _ => Err(format!("unknown hoof event kind '{s}'")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HoofEvent {
    pub limb: Placement,
    pub kind: HoofKind,
    pub t_s: f64,
}

/// A labelled time span on one annotation track ("gait", "task", ...).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Annotation {
    pub track: String,
    pub label: String,
    pub start_s: f64,
    pub end_s: f64,
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn placement_ids_are_fixed() {
        for (i, p) in Placement::ALL.iter().enumerate() {
            assert_eq!(p.device_id() as usize, i);
            assert_eq!(Placement::from_device_id(i as u8), Some(*p));
            assert_eq!(p.name().parse::<Placement>().unwrap(), *p);
        }
        assert_eq!(Placement::from_device_id(10), None);
        assert_eq!(Placement::Waist.device_id(), 5);
        assert!(Placement::HorseRh.is_horse_limb() && !Placement::Head.is_horse_limb());
    }

    #[test]
    fn raw_scaling_is_linear() {
        let imu = RawImu {
            accel: [2048, -32768, 32767],
            gyro: [16384, 0, -1],
        };
        assert_eq!(imu.accel_g(), Vec3::new(1.0, -16.0, 32767.0 * 16.0 / 32768.0));
        assert_eq!(imu.gyro_dps().x, 1000.0);
        assert_eq!(imu.gyro_dps().z, -2000.0 / 32768.0);
    }

    #[test]
    fn quantize_saturates() {
        let imu = RawImu::quantize(Vec3::new(20.0, -20.0, 1.0), Vec3::new(0.0, 3000.0, -1000.0));
        assert_eq!(imu.accel, [32767, -32768, 2048]);
        assert_eq!(imu.gyro, [0, 32767, -16384]);
    }
}
