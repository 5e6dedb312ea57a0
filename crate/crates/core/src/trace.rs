//! Run traces and their line-delimited JSON form.
//!
//! The first line is the header; every following line is one event. Byte
//! payloads are lowercase hex without separators.

use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EventKind {
    Start,
    Send,
    Deliver,
    Drop,
    Modify,
    Reflect,
    Violation,
    Crash,
    Silence,
    LoopDetected,
    Stop,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TraceEvent {
    pub id: u64,
    pub time_ms: u64,
    pub kind: EventKind,
    pub endpoint: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub peer: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none", with = "opt_hex")]
    pub bytes: Option<Vec<u8>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub detail: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cause: Option<u64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ClockMode {
    Virtual,
    Real,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EndpointInfo {
    pub name: String,
    pub role: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub protocol: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TraceHeader {
    pub scenario: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub scenario_path: Option<String>,
    pub sut: String,
    pub trial: u32,
    pub seed: u64,
    pub clock: ClockMode,
    pub budget_ms: u64,
    pub deterministic: bool,
    pub endpoints: Vec<EndpointInfo>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Trace {
    pub header: TraceHeader,
    pub events: Vec<TraceEvent>,
}

#[derive(Debug, thiserror::Error)]
pub enum TraceError {
    #[error("line {line}: {msg}")]
    SchemaViolation { line: usize, msg: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

fn violation(line: usize, msg: impl Into<String>) -> TraceError {
    TraceError::SchemaViolation { line, msg: msg.into() }
}

impl Trace {
    pub fn event(&self, id: u64) -> Option<&TraceEvent> {
        // ids are dense from 0 in recorded traces, but imported ones need not be
        match self.events.get(id as usize) {
            Some(e) if e.id == id => Some(e),
            _ => self.events.iter().find(|e| e.id == id),
        }
    }

    /// Endpoint role from the header.
    pub fn role_of(&self, endpoint: &str) -> Option<&str> {
        self.header.endpoints.iter().find(|e| e.name == endpoint).map(|e| e.role.as_str())
    }

    pub fn protocol_of(&self, endpoint: &str) -> Option<&str> {
        self.header.endpoints.iter().find(|e| e.name == endpoint).and_then(|e| e.protocol.as_deref())
    }

    pub fn end_time(&self) -> u64 {
        self.events.last().map_or(0, |e| e.time_ms)
    }

    pub fn export(&self) -> String {
        let mut out = serde_json::to_string(&self.header).expect("header serializes");
        out.push('\n');
        for e in &self.events {
            let _ = writeln!(out, "{}", serde_json::to_string(e).expect("event serializes"));
        }
        out
    }

    pub fn import(text: &str) -> Result<Trace, TraceError> {
        let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
        let (_, first) = lines.next().ok_or_else(|| violation(1, "empty trace"))?;
        let header: TraceHeader = serde_json::from_str(first).map_err(|e| violation(1, format!("header: {e}")))?;
        let mut events: Vec<TraceEvent> = Vec::new();
        for (i, line) in lines {
            let n = i + 1;
            let e: TraceEvent = serde_json::from_str(line).map_err(|e| violation(n, e.to_string()))?;
            if let Some(prev) = events.last() {
                if e.id <= prev.id {
                    return Err(violation(n, format!("event id {} does not increase", e.id)));
                }
                if e.time_ms < prev.time_ms {
                    return Err(violation(n, format!("event {} goes back in time", e.id)));
                }
            }
            if let Some(c) = e.cause {
                if c >= e.id || !events.iter().any(|x| x.id == c) {
                    return Err(violation(n, format!("event {} has cause {c} that is not an earlier event", e.id)));
                }
            }
            if matches!(e.kind, EventKind::Send | EventKind::Deliver) && e.bytes.is_none() {
                return Err(violation(n, format!("{:?} event {} has no bytes", e.kind, e.id)));
            }
            events.push(e);
        }
        Ok(Trace { header, events })
    }

    pub fn write(&self, path: &Path) -> std::io::Result<()> {
        std::fs::write(path, self.export())
    }

    pub fn read(path: &Path) -> Result<Trace, TraceError> {
        Trace::import(&std::fs::read_to_string(path)?)
    }
}

mod opt_hex {
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(bytes: &Option<Vec<u8>>, s: S) -> Result<S::Ok, S::Error> {
        match bytes {
            Some(b) => s.serialize_str(&hex::encode(b)),
            None => s.serialize_none(),
        }
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Option<Vec<u8>>, D::Error> {
        let Some(s) = Option::<String>::deserialize(d)? else { return Ok(None) };
        if s.bytes().any(|b| b.is_ascii_uppercase()) {
            return Err(serde::de::Error::custom("hex must be lowercase"));
        }
        hex::decode(&s).map(Some).map_err(serde::de::Error::custom)
    }
}
