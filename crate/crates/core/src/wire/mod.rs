//! Sensor-node wire protocol, live ingestion and session persistence.

pub mod codec;
pub mod ingest;
pub mod net;
pub mod session;

pub use codec::{decode_packet, encode_packet, DecodeError, EncodeError, Packet};
pub use ingest::{ingest, IngestConfig, IngestState, IngestStats};
pub use session::{load_session, save_session, DeviceCalibration, Session, SessionManifest};
