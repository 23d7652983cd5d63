//! Equestrian IMU analysis: wire ingest, calibration, orientation fusion,
//! hoof-event detection, rider motion indices and activity recognition.

pub mod analyze;
pub mod dsp;
pub mod error;
pub mod events;
pub mod fusion;
pub mod har;
pub mod preprocess;
pub mod quat;
pub mod rider;
pub mod sim;
pub mod types;
pub mod wire;

pub use error::{Error, ErrorClass, Result};
pub use quat::{Quaternion, Vec3};
pub use types::*;
