//! `TTAG1` binary time-tag files.
//!
//! Layout (little-endian): 8-byte magic `TTAG1\0\0\0`, `u64` record count,
//! then one 9-byte record per event (`u64` time in ps, `u8` channel).

use crate::photon::{EventRecord, Party, PhotonError, TimestampStream};
use std::io::{self, Read, Write};
use std::path::Path;
use thiserror::Error;

pub const MAGIC: [u8; 8] = *b"TTAG1\0\0\0";
pub const HEADER_LEN: usize = 16;
pub const RECORD_LEN: usize = 9;

#[derive(Debug, Error)]
pub enum TtagError {
    #[error("i/o error: {0}")]
    Io(#[from] io::Error),
    #[error("bad magic at byte offset 0")]
    BadMagic,
    #[error("file truncated at byte offset {offset} (expected {expected} bytes)")]
    Truncated { offset: u64, expected: u64 },
    #[error("unexpected trailing data at byte offset {offset}")]
    TrailingBytes { offset: u64 },
    #[error("channel {channel} out of range at byte offset {offset}")]
    InvalidChannel { channel: u8, offset: u64 },
    #[error("invalid stream: {0}")]
    Stream(#[from] PhotonError),
}

pub fn write_events<W: Write>(mut w: W, events: &[EventRecord]) -> io::Result<()> {
    w.write_all(&MAGIC)?;
    w.write_all(&(events.len() as u64).to_le_bytes())?;
    let mut buf = Vec::with_capacity(RECORD_LEN * 4096);
    for chunk in events.chunks(4096) {
        buf.clear();
        for e in chunk {
            buf.extend_from_slice(&e.time_ps.to_le_bytes());
            buf.push(e.channel);
        }
        w.write_all(&buf)?;
    }
    w.flush()
}

pub fn decode(bytes: &[u8]) -> Result<Vec<EventRecord>, TtagError> {
    if bytes.len() < 8 {
        return Err(TtagError::Truncated {
            offset: bytes.len() as u64,
            expected: HEADER_LEN as u64,
        });
    }
    if bytes[..8] != MAGIC {
        return Err(TtagError::BadMagic);
    }
    if bytes.len() < HEADER_LEN {
        return Err(TtagError::Truncated {
            offset: bytes.len() as u64,
            expected: HEADER_LEN as u64,
        });
    }
    let count = u64::from_le_bytes(bytes[8..16].try_into().unwrap());
    let expected = (HEADER_LEN as u64).saturating_add(count.saturating_mul(RECORD_LEN as u64));
    if (bytes.len() as u64) < expected {
        // report the start of the first incomplete record
        let complete = (bytes.len() - HEADER_LEN) / RECORD_LEN;
        return Err(TtagError::Truncated {
            offset: (HEADER_LEN + complete * RECORD_LEN) as u64,
            expected,
        });
    }
    if (bytes.len() as u64) > expected {
        return Err(TtagError::TrailingBytes { offset: expected });
    }
    let body = &bytes[HEADER_LEN..];
    let mut events = Vec::with_capacity(count as usize);
    for (i, rec) in body.chunks_exact(RECORD_LEN).enumerate() {
        let channel = rec[8];
        if channel > 7 {
            return Err(TtagError::InvalidChannel {
                channel,
                offset: (HEADER_LEN + i * RECORD_LEN + 8) as u64,
            });
        }
        events.push(EventRecord {
            time_ps: u64::from_le_bytes(rec[..8].try_into().unwrap()),
            channel,
        });
    }
    Ok(events)
}

pub fn read_events<R: Read>(mut r: R) -> Result<Vec<EventRecord>, TtagError> {
    let mut bytes = Vec::new();
    r.read_to_end(&mut bytes)?;
    decode(&bytes)
}

pub fn write_stream(path: &Path, stream: &TimestampStream) -> Result<(), TtagError> {
    let file = std::fs::File::create(path)?;
    write_events(io::BufWriter::new(file), &stream.events)?;
    Ok(())
}

/// Reads a file and checks that every channel belongs to `party`. The format
/// does not record the session length; `duration_ps` is supplied by the caller.
pub fn read_stream(
    path: &Path,
    party: Party,
    duration_ps: u64,
) -> Result<TimestampStream, TtagError> {
    let events = decode(&std::fs::read(path)?)?;
    Ok(TimestampStream::new(party, events, duration_ps)?)
}
