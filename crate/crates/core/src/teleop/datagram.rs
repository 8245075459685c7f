//! Fixed 73-byte little-endian pose datagram.
//!
//! | offset | size | field                         |
//! |--------|------|-------------------------------|
//! | 0      | 4    | magic `TPOS`                  |
//! | 4      | 1    | version (1)                   |
//! | 5      | 4    | seq, u32                      |
//! | 9      | 8    | t, f64 seconds                |
//! | 17     | 24   | position x, y, z, f64 meters  |
//! | 41     | 32   | quaternion w, x, y, z, f64    |

use thiserror::Error;

use crate::geom::{RigidTransform, UnitQuaternion, Vector3};

pub const MAGIC: [u8; 4] = *b"TPOS";
pub const VERSION: u8 = 1;
pub const DATAGRAM_LEN: usize = 73;
pub const NORM_TOLERANCE: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum DatagramError {
    #[error("datagram is {0} bytes, need {DATAGRAM_LEN}")]
    ShortBuffer(usize),
    #[error("bad magic {0:?}")]
    BadMagic([u8; 4]),
    #[error("unsupported version {0}")]
    UnsupportedVersion(u8),
    #[error("quaternion norm {0} is not 1")]
    NonUnitQuaternion(f64),
    #[error("non-finite field")]
    NonFinite,
}

/// Decoded datagram. The quaternion is kept as sent so re-encoding is
/// bit-exact.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PoseDatagram {
    pub seq: u32,
    pub t: f64,
    pub position: [f64; 3],
    pub quaternion: [f64; 4],
}

impl PoseDatagram {
    pub fn from_pose(seq: u32, t: f64, pose: &RigidTransform) -> Self {
        Self {
            seq,
            t,
            position: pose.translation.to_array(),
            quaternion: pose.rotation.to_array(),
        }
    }

    pub fn validate(&self) -> Result<(), DatagramError> {
        let all = std::iter::once(self.t)
            .chain(self.position)
            .chain(self.quaternion);
        if all.into_iter().any(|v| !v.is_finite()) {
            return Err(DatagramError::NonFinite);
        }
        let norm = self.quaternion.iter().map(|v| v * v).sum::<f64>().sqrt();
        if (norm - 1.0).abs() > NORM_TOLERANCE {
            return Err(DatagramError::NonUnitQuaternion(norm));
        }
        Ok(())
    }

    pub fn pose(&self) -> RigidTransform {
        RigidTransform::new(
            UnitQuaternion::from_array(self.quaternion).expect("validated quaternion"),
            Vector3::from(self.position),
        )
    }

    pub fn encode(&self) -> [u8; DATAGRAM_LEN] {
        let mut out = [0u8; DATAGRAM_LEN];
        out[0..4].copy_from_slice(&MAGIC);
        out[4] = VERSION;
        out[5..9].copy_from_slice(&self.seq.to_le_bytes());
        let floats = std::iter::once(self.t)
            .chain(self.position)
            .chain(self.quaternion);
        for (k, v) in floats.enumerate() {
            out[9 + 8 * k..17 + 8 * k].copy_from_slice(&v.to_le_bytes());
        }
        out
    }

    /// Decode the first 73 bytes; trailing bytes are ignored.
    pub fn decode(bytes: &[u8]) -> Result<Self, DatagramError> {
        if bytes.len() < DATAGRAM_LEN {
            return Err(DatagramError::ShortBuffer(bytes.len()));
        }
        let magic: [u8; 4] = bytes[0..4].try_into().expect("4 bytes");
        if magic != MAGIC {
            return Err(DatagramError::BadMagic(magic));
        }
        if bytes[4] != VERSION {
            return Err(DatagramError::UnsupportedVersion(bytes[4]));
        }
        let seq = u32::from_le_bytes(bytes[5..9].try_into().expect("4 bytes"));
        let f = |k: usize| f64::from_le_bytes(bytes[9 + 8 * k..17 + 8 * k].try_into().expect("8 bytes"));
        let d = Self {
            seq,
            t: f(0),
            position: [f(1), f(2), f(3)],
            quaternion: [f(4), f(5), f(6), f(7)],
        };
        d.validate()?;
        Ok(d)
    }
}

/// Per-stream receive filter: keeps only datagrams newer than any seen so far.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct DatagramIngest {
    last_seq: Option<u32>,
    pub accepted: u64,
    pub out_of_order: u64,
    pub malformed: u64,
}

impl DatagramIngest {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn last_seq(&self) -> Option<u32> {
        self.last_seq
    }

    pub fn ingest(&mut self, bytes: &[u8]) -> Option<PoseDatagram> {
        let d = match PoseDatagram::decode(bytes) {
            Ok(d) => d,
            Err(_) => {
                self.malformed += 1;
                return None;
            }
        };
        if self.last_seq.is_some_and(|last| d.seq <= last) {
            self.out_of_order += 1;
            return None;
        }
        self.last_seq = Some(d.seq);
        self.accepted += 1;
        Some(d)
    }
}
