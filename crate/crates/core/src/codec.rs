//! Compact 5-byte measurement records: a 20-bit reference id followed by a
//! 20-bit RTT in microseconds, packed big-endian into 40 bits.

use crate::error::{Error, Result};

pub const RECORD_LEN: usize = 5;
pub const MAX_ID: u32 = (1 << 20) - 1;
pub const MAX_RTT_US: u32 = (1 << 20) - 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Record {
    pub reference: u32,
    pub rtt_us: u32,
}

impl Record {
    pub fn new(reference: u32, rtt_us: u32) -> Result<Self> {
        if reference > MAX_ID {
            return Err(Error::Encoding(format!("reference id {reference} exceeds 20 bits")));
        }
        if rtt_us > MAX_RTT_US {
            return Err(Error::Encoding(format!("rtt {rtt_us} us exceeds 20 bits")));
        }
        Ok(Record { reference, rtt_us })
    }

    /// Rounds a millisecond RTT to whole microseconds.
    pub fn from_ms(reference: u32, rtt_ms: f64) -> Result<Self> {
        if !(rtt_ms >= 0.0) || !rtt_ms.is_finite() {
            return Err(Error::Encoding(format!("rtt {rtt_ms} ms is not encodable")));
        }
        let us = (rtt_ms * 1000.0).round();
        if us > MAX_RTT_US as f64 {
            return Err(Error::Encoding(format!("rtt {rtt_ms} ms exceeds 20 bits of microseconds")));
        }
        Record::new(reference, us as u32)
    }

    pub fn rtt_ms(&self) -> f64 {
        self.rtt_us as f64 / 1000.0
    }

    pub fn encode(&self) -> [u8; RECORD_LEN] {
        let v = ((self.reference as u64) << 20) | self.rtt_us as u64;
        let b = v.to_be_bytes();
        [b[3], b[4], b[5], b[6], b[7]]
    }

    pub fn decode(bytes: [u8; RECORD_LEN]) -> Record {
        let mut b = [0u8; 8];
        b[3..].copy_from_slice(&bytes);
        let v = u64::from_be_bytes(b);
        Record { reference: (v >> 20) as u32, rtt_us: (v & MAX_RTT_US as u64) as u32 }
    }
}

pub fn encode_all(records: &[Record]) -> Vec<u8> {
    records.iter().flat_map(|r| r.encode()).collect()
}

pub fn decode_all(bytes: &[u8]) -> Result<Vec<Record>> {
    if bytes.len() % RECORD_LEN != 0 {
        return Err(Error::Encoding(format!("{} bytes is not a multiple of {RECORD_LEN}", bytes.len())));
    }
    Ok(bytes
        .chunks_exact(RECORD_LEN)
        .map(|c| Record::decode(c.try_into().expect("chunk of 5")))
        .collect())
}
