//! Append-only hash-chained event log with a byte-exact file format.
//!
//! Each record is stored as a 4-byte big-endian length followed by compact
//! JSON of `{index, timestamp, payload, prev_hash, hash}` in that field
//! order. `hash` is the lowercase hex SHA-256 of the compact JSON of
//! `{index, timestamp, payload, prev_hash}`; entry 0 chains from a
//! prev_hash of 64 zeros. Timestamps are logical: equal to the index.

use super::event::Event;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

pub const GENESIS_PREV_HASH: &str =
    "0000000000000000000000000000000000000000000000000000000000000000";

#[derive(Debug, Error)]
pub enum ChainError {
    #[error("record {index} is not valid JSON: {source}")]
    Json {
        index: usize,
        source: serde_json::Error,
    },
    #[error("log truncated at byte {offset}")]
    Truncated { offset: usize },
    #[error("record {index}: stored index/timestamp disagree with position")]
    IndexMismatch { index: usize },
    #[error("record {index}: prev_hash does not match the preceding record")]
    BrokenLink { index: usize },
    #[error("record {index}: hash does not match its contents")]
    HashMismatch { index: usize },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogRecord {
    pub index: u64,
    pub timestamp: u64,
    pub payload: Event,
    pub prev_hash: String,
    pub hash: String,
}

fn record_hash(index: u64, timestamp: u64, payload: &Event, prev_hash: &str) -> String {
    #[derive(Serialize)]
    struct Preimage<'a> {
        index: u64,
        timestamp: u64,
        payload: &'a Event,
        prev_hash: &'a str,
    }
    let bytes = serde_json::to_vec(&Preimage {
        index,
        timestamp,
        payload,
        prev_hash,
    })
    .expect("event serializes");
    hex::encode(Sha256::digest(bytes))
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct EventLog {
    records: Vec<LogRecord>,
}

impl EventLog {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn records(&self) -> &[LogRecord] {
        &self.records
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn append(&mut self, payload: Event) -> &LogRecord {
        let index = self.records.len() as u64;
        let prev_hash = match self.records.last() {
            Some(prev) => prev.hash.clone(),
            None => GENESIS_PREV_HASH.to_string(),
        };
        let hash = record_hash(index, index, &payload, &prev_hash);
        self.records.push(LogRecord {
            index,
            timestamp: index,
            payload,
            prev_hash,
            hash,
        });
        self.records.last().unwrap()
    }

    /// Recompute every hash and link; succeeds iff nothing was altered.
    pub fn verify(&self) -> Result<(), ChainError> {
        let mut prev = GENESIS_PREV_HASH;
        for (i, rec) in self.records.iter().enumerate() {
            if rec.index != i as u64 || rec.timestamp != rec.index {
                return Err(ChainError::IndexMismatch { index: i });
            }
            if rec.prev_hash != prev {
                return Err(ChainError::BrokenLink { index: i });
            }
            if record_hash(rec.index, rec.timestamp, &rec.payload, &rec.prev_hash) != rec.hash {
                return Err(ChainError::HashMismatch { index: i });
            }
            prev = &rec.hash;
        }
        Ok(())
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        for rec in &self.records {
            let json = serde_json::to_vec(rec).expect("record serializes");
            out.extend_from_slice(&(json.len() as u32).to_be_bytes());
            out.extend_from_slice(&json);
        }
        out
    }

    /// Parse without verifying; call `verify` to check integrity.
    pub fn from_bytes(bytes: &[u8]) -> Result<Self, ChainError> {
        let mut records = Vec::new();
        let mut offset = 0usize;
        while offset < bytes.len() {
            if offset + 4 > bytes.len() {
                return Err(ChainError::Truncated { offset });
            }
            let len =
                u32::from_be_bytes(bytes[offset..offset + 4].try_into().unwrap()) as usize;
            offset += 4;
            if offset + len > bytes.len() {
                return Err(ChainError::Truncated { offset });
            }
            let rec = serde_json::from_slice(&bytes[offset..offset + len]).map_err(|source| {
                ChainError::Json {
                    index: records.len(),
                    source,
                }
            })?;
            records.push(rec);
            offset += len;
        }
        Ok(Self { records })
    }
}

/// True iff `bytes` parse as a log whose hash chain is intact.
pub fn verify_chain(bytes: &[u8]) -> bool {
    match EventLog::from_bytes(bytes) {
        Ok(log) => log.verify().is_ok(),
        Err(_) => false,
    }
}
