//! Public classical channel, kept as an append-only log.
//!
//! Payload types can only hold click times, event indices and basis labels;
//! there is no variant that could carry a measurement outcome. The log file
//! records each message's size and a 64-bit FNV-1a digest of its payload.

use crate::seed::Fnv64;
use std::fmt::Write as _;
use thiserror::Error;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Direction {
    AliceToBob,
    BobToAlice,
}

impl Direction {
    fn ends(self) -> (&'static str, &'static str) {
        match self {
            Direction::AliceToBob => ("alice", "bob"),
            Direction::BobToAlice => ("bob", "alice"),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum MessageKind {
    Timestamps,
    BasisTags,
    DiscardList,
}

impl MessageKind {
    pub fn name(self) -> &'static str {
        match self {
            MessageKind::Timestamps => "timestamps",
            MessageKind::BasisTags => "basis-tags",
            MessageKind::DiscardList => "discard-list",
        }
    }

    fn from_name(s: &str) -> Option<Self> {
        [
            MessageKind::Timestamps,
            MessageKind::BasisTags,
            MessageKind::DiscardList,
        ]
        .into_iter()
        .find(|k| k.name() == s)
    }
}

pub enum Payload<'a> {
    /// Click times in picoseconds.
    Timestamps(&'a [u64]),
    /// `(event index, basis)` with basis 0 = z, 1 = x.
    BasisTags(&'a [(u64, u8)]),
    /// Indices of the receiver's events to drop.
    DiscardList(&'a [u64]),
}

impl Payload<'_> {
    fn kind(&self) -> MessageKind {
        match self {
            Payload::Timestamps(_) => MessageKind::Timestamps,
            Payload::BasisTags(_) => MessageKind::BasisTags,
            Payload::DiscardList(_) => MessageKind::DiscardList,
        }
    }

    fn summarize(&self) -> (u64, u64) {
        let mut h = Fnv64::default();
        let count = match self {
            Payload::Timestamps(v) | Payload::DiscardList(v) => {
                for x in v.iter() {
                    h.write(&x.to_le_bytes());
                }
                v.len()
            }
            Payload::BasisTags(v) => {
                for (i, b) in v.iter() {
                    h.write(&i.to_le_bytes());
                    h.write(&[*b]);
                }
                v.len()
            }
        };
        (count as u64, h.finish())
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ClassicalMessage {
    pub seq: u64,
    pub direction: Direction,
    pub kind: MessageKind,
    pub count: u64,
    pub digest: u64,
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AuditError {
    #[error("line {line}: malformed message entry")]
    Malformed { line: usize },
    #[error("line {line}: field {field} is not allowed on the public channel")]
    ForbiddenField { line: usize, field: String },
    #[error("line {line}: sequence number {seq} out of order")]
    Sequence { line: usize, seq: u64 },
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct MessageLog {
    pub messages: Vec<ClassicalMessage>,
}

impl MessageLog {
    pub fn append(&mut self, direction: Direction, payload: Payload<'_>) {
        let (count, digest) = payload.summarize();
        self.messages.push(ClassicalMessage {
            seq: self.messages.len() as u64 + 1,
            direction,
            kind: payload.kind(),
            count,
            digest,
        });
    }

    pub fn to_text(&self) -> String {
        let mut s = String::from("# MSG1 public channel log\n");
        for m in &self.messages {
            let (from, to) = m.direction.ends();
            writeln!(
                s,
                "seq={} from={from} to={to} kind={} count={} fnv64={:016x}",
                m.seq,
                m.kind.name(),
                m.count,
                m.digest
            )
            .unwrap();
        }
        s
    }

    /// Parses a log and checks that every entry uses only the permitted
    /// fields and message kinds, in sequence.
    pub fn audit(text: &str) -> Result<MessageLog, AuditError> {
        let mut log = MessageLog::default();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let n = i + 1;
            let mut seq = None;
            let mut from = None;
            let mut to = None;
            let mut kind = None;
            let mut count = None;
            let mut digest = None;
            for field in line.split_whitespace() {
                let (k, v) = field
                    .split_once('=')
                    .ok_or(AuditError::Malformed { line: n })?;
                let bad = || AuditError::Malformed { line: n };
                match k {
                    "seq" => seq = Some(v.parse::<u64>().map_err(|_| bad())?),
                    "from" => from = Some(v),
                    "to" => to = Some(v),
                    "kind" => kind = Some(MessageKind::from_name(v).ok_or_else(bad)?),
                    "count" => count = Some(v.parse::<u64>().map_err(|_| bad())?),
                    "fnv64" => digest = Some(u64::from_str_radix(v, 16).map_err(|_| bad())?),
                    other => {
                        return Err(AuditError::ForbiddenField {
                            line: n,
                            field: other.into(),
                        })
                    }
                }
            }
            let direction = match (from, to) {
                (Some("alice"), Some("bob")) => Direction::AliceToBob,
                (Some("bob"), Some("alice")) => Direction::BobToAlice,
                _ => return Err(AuditError::Malformed { line: n }),
            };
            let (Some(seq), Some(kind), Some(count), Some(digest)) = (seq, kind, count, digest)
            else {
                return Err(AuditError::Malformed { line: n });
            };
            if seq != log.messages.len() as u64 + 1 {
                return Err(AuditError::Sequence { line: n, seq });
            }
            log.messages.push(ClassicalMessage {
                seq,
                direction,
                kind,
                count,
                digest,
            });
        }
        Ok(log)
    }
}
