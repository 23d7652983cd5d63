//! Packet layout (little-endian):
//!
//! | offset | size | field        |
//! |--------|------|--------------|
//! | 0      | 2    | magic 0x4551 |
//! | 2      | 1    | version (1)  |
//! | 3      | 1    | device id    |
//! | 4      | 4    | seq          |
//! | 8      | 8    | t_device_us  |
//! | 16     | 1    | n (1..=10)   |
//! | 17     | 1    | flags        |
//! | 18     | 12n  | n x (ax ay az gx gy gz) as i16 |

use thiserror::Error;

use crate::types::RawImu;

pub const MAGIC: u16 = 0x4551;
pub const VERSION: u8 = 1;
pub const HEADER_LEN: usize = 18;
pub const SAMPLE_LEN: usize = 12;
pub const MAX_SAMPLES: usize = 10;
pub const MAX_PACKET_LEN: usize = HEADER_LEN + SAMPLE_LEN * MAX_SAMPLES;

/// Device applied factory calibration before sending.
pub const FLAG_FACTORY_CALIBRATED: u8 = 0b0000_0001;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Packet {
    pub device_id: u8,
    /// Sequence index of the first sample, wrapping.
    pub seq: u32,
    /// Device clock at the first sample.
    pub t_device_us: u64,
    pub flags: u8,
    pub samples: Vec<RawImu>,
}

impl Packet {
    pub fn encoded_len(&self) -> usize {
        HEADER_LEN + SAMPLE_LEN * self.samples.len()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum DecodeError {
    #[error("truncated packet: need {needed} bytes, got {got}")]
    Truncated { needed: usize, got: usize },
    #[error("bad magic 0x{0:04x}")]
    BadMagic(u16),
    #[error("unsupported version {0}")]
    BadVersion(u8),
    #[error("packet carries no samples")]
    EmptyBatch,
    #[error("packet declares {0} samples (max {MAX_SAMPLES})")]
    TooManySamples(u8),
    #[error("{extra} trailing bytes after packet body")]
    TrailingBytes { extra: usize },
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum EncodeError {
    #[error("sample count {0} outside 1..={MAX_SAMPLES}")]
    SampleCount(usize),
}

pub fn encode_packet(p: &Packet) -> Result<Vec<u8>, EncodeError> {
    let mut out = Vec::with_capacity(p.encoded_len());
    encode_into(p, &mut out)?;
    Ok(out)
}

/// Appends the encoded packet to `out`.
pub fn encode_into(p: &Packet, out: &mut Vec<u8>) -> Result<(), EncodeError> {
    let n = p.samples.len();
    if n == 0 || n > MAX_SAMPLES {
        return Err(EncodeError::SampleCount(n));
    }
    out.extend_from_slice(&MAGIC.to_le_bytes());
    out.push(VERSION);
    out.push(p.device_id);
    out.extend_from_slice(&p.seq.to_le_bytes());
    out.extend_from_slice(&p.t_device_us.to_le_bytes());
    out.push(n as u8);
    out.push(p.flags);
    for s in &p.samples {
        for v in s.accel.iter().chain(&s.gyro) {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    Ok(())
}

pub fn decode_packet(bytes: &[u8]) -> Result<Packet, DecodeError> {
    if bytes.len() < HEADER_LEN {
        return Err(DecodeError::Truncated {
            needed: HEADER_LEN,
            got: bytes.len(),
        });
    }
    let magic = u16::from_le_bytes([bytes[0], bytes[1]]);
    if magic != MAGIC {
        return Err(DecodeError::BadMagic(magic));
    }
    if bytes[2] != VERSION {
        return Err(DecodeError::BadVersion(bytes[2]));
    }
    let device_id = bytes[3];
    let seq = u32::from_le_bytes(bytes[4..8].try_into().unwrap());
    let t_device_us = u64::from_le_bytes(bytes[8..16].try_into().unwrap());
    let n = bytes[16];
    let flags = bytes[17];
    if n == 0 {
        return Err(DecodeError::EmptyBatch);
    }
    if n as usize > MAX_SAMPLES {
        return Err(DecodeError::TooManySamples(n));
    }
    let needed = HEADER_LEN + SAMPLE_LEN * n as usize;
    if bytes.len() < needed {
        return Err(DecodeError::Truncated {
            needed,
            got: bytes.len(),
        });
    }
    if bytes.len() > needed {
        return Err(DecodeError::TrailingBytes {
            extra: bytes.len() - needed,
        });
    }
    let samples = bytes[HEADER_LEN..needed]
        .chunks_exact(SAMPLE_LEN)
        .map(|c| {
            let v = |i: usize| i16::from_le_bytes([c[2 * i], c[2 * i + 1]]);
            RawImu {
                accel: [v(0), v(1), v(2)],
                gyro: [v(3), v(4), v(5)],
            }
        })
        .collect();
    Ok(Packet {
        device_id,
        seq,
        t_device_us,
        flags,
        samples,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn packet(n: usize) -> Packet {
        Packet {
            device_id: 3,
            seq: 77,
            t_device_us: 1_234_567,
            flags: FLAG_FACTORY_CALIBRATED,
            samples: (0..n)
                .map(|i| RawImu {
                    accel: [2048, -1, i as i16],
                    gyro: [16384, 0, -32768],
                })
                .collect(),
        }
    }

    #[test]
    fn header_arithmetic() {
        let bytes = encode_packet(&packet(2)).unwrap();
        assert_eq!(bytes.len(), 42);
        assert_eq!(&bytes[..4], &[0x51, 0x45, 1, 3]);
    }

    #[test]
    fn scaled_values_after_decode() {
        let p = decode_packet(&encode_packet(&packet(1)).unwrap()).unwrap();
        assert_eq!(p.samples[0].accel_g().x, 1.0);
        assert_eq!(p.samples[0].gyro_dps().x, 1000.0);
    }

    #[test]
    fn encode_rejects_bad_counts() {
        assert_eq!(encode_packet(&packet(0)), Err(EncodeError::SampleCount(0)));
        assert_eq!(encode_packet(&packet(11)), Err(EncodeError::SampleCount(11)));
    }

    #[test]
    fn distinct_decode_errors() {
        let good = encode_packet(&packet(2)).unwrap();
        let mut bad_magic = good.clone();
        bad_magic[0] = 0;
        bad_magic[1] = 0;
        assert_eq!(decode_packet(&bad_magic), Err(DecodeError::BadMagic(0)));
        let mut bad_version = good.clone();
        bad_version[2] = 2;
        assert_eq!(decode_packet(&bad_version), Err(DecodeError::BadVersion(2)));
        assert!(matches!(decode_packet(&good[..17]), Err(DecodeError::Truncated { needed: 18, got: 17 })));
        assert!(matches!(decode_packet(&good[..40]), Err(DecodeError::Truncated { needed: 42, got: 40 })));
        let mut empty = good[..18].to_vec();
        empty[16] = 0;
        assert_eq!(decode_packet(&empty), Err(DecodeError::EmptyBatch));
        let mut many = good.clone();
        many[16] = 11;
        assert_eq!(decode_packet(&many), Err(DecodeError::TooManySamples(11)));
        let mut trailing = good;
        trailing.push(0);
        assert_eq!(decode_packet(&trailing), Err(DecodeError::TrailingBytes { extra: 1 }));
    }

    fn arb_packet() -> impl Strategy<Value = Packet> {
        (
            any::<u8>(),
            any::<u32>(),
            any::<u64>(),
            any::<u8>(),
            prop::collection::vec(any::<[i16; 6]>(), 1..=MAX_SAMPLES),
        )
            .prop_map(|(device_id, seq, t_device_us, flags, s)| Packet {
                device_id,
                seq,
                t_device_us,
                flags,
                samples: s
                    .into_iter()
                    .map(|v| RawImu {
                        accel: [v[0], v[1], v[2]],
                        gyro: [v[3], v[4], v[5]],
                    })
                    .collect(),
            })
    }

    proptest! {
        #[test]
        fn round_trip(p in arb_packet()) {
            let bytes = encode_packet(&p).unwrap();
            prop_assert_eq!(bytes.len(), HEADER_LEN + SAMPLE_LEN * p.samples.len());
            prop_assert_eq!(decode_packet(&bytes).unwrap(), p);
        }

        #[test]
        fn decode_is_total(bytes in prop::collection::vec(any::<u8>(), 0..200)) {
            let _ = decode_packet(&bytes);
        }
    }
}
