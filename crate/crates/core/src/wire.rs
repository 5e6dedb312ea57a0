//! Schema-driven frame codec.
//!
//! Both shipped protocols share one wire idiom: a packet is a concatenation of
//! frames, each frame is a type byte followed by its fields in schema order.
//! Byte-string fields carry a 16-bit big-endian length prefix; integer fields
//! are big-endian with the declared width. A frame with an unknown type byte
//! swallows the rest of the datagram.
//!
//! Encoding follows whatever schema it is handed, so a spec whose schema was
//! mutated (a narrower integer, say) produces correspondingly mutated bytes.

use serde::{Deserialize, Serialize};

use crate::spec::{FieldType, KindSchema, Subject, Value, WIRE_MAX_LEN};

/// Mapping between frame type bytes and schema kinds.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct WireLayout {
    pub frames: Vec<(u8, String)>,
    /// Kind of the synthetic packet subject (holds `kinds`: the frame type
    /// bytes in order).
    pub packet_kind: String,
}

impl WireLayout {
    pub fn kind_of(&self, type_byte: u8) -> Option<&str> {
        self.frames.iter().find(|(b, _)| *b == type_byte).map(|(_, k)| k.as_str())
    }

    pub fn type_of(&self, kind: &str) -> Option<u8> {
        self.frames.iter().find(|(_, k)| k == kind).map(|(b, _)| *b)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum WireFrame {
    Known(Subject),
    Unknown { type_byte: u8, body: Vec<u8> },
}

impl WireFrame {
    pub fn type_byte(&self, layout: &WireLayout) -> Option<u8> {
        match self {
            WireFrame::Known(s) => layout.type_of(&s.kind),
            WireFrame::Unknown { type_byte, .. } => Some(*type_byte),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum WireError {
    #[error("field `{field}` is {len} bytes, over the 16-bit length limit")]
    Oversize { field: String, len: usize },
    #[error("truncated at offset {offset}: need {needed} bytes, {available} available")]
    Truncated { offset: usize, needed: usize, available: usize },
    #[error("no frame type for kind `{0}`")]
    UnknownKind(String),
    #[error("frame `{kind}` lacks field `{field}` of the expected type")]
    MissingField { kind: String, field: String },
    #[error("value {value} of `{field}` does not fit in {bits} bits")]
    ValueTooWide { field: String, value: u64, bits: u8 },
}

fn schema_for<'a>(schema: &'a [KindSchema], kind: &str) -> Result<&'a KindSchema, WireError> {
    schema.iter().find(|k| k.kind == kind).ok_or_else(|| WireError::UnknownKind(kind.to_string()))
}

pub fn encode_frames(schema: &[KindSchema], layout: &WireLayout, frames: &[WireFrame]) -> Result<Vec<u8>, WireError> {
    let mut out = Vec::new();
    for frame in frames {
        match frame {
            WireFrame::Unknown { type_byte, body } => {
                out.push(*type_byte);
                out.extend_from_slice(body);
            }
            WireFrame::Known(subject) => {
                let ty = layout.type_of(&subject.kind).ok_or_else(|| WireError::UnknownKind(subject.kind.clone()))?;
                out.push(ty);
                for decl in &schema_for(schema, &subject.kind)?.fields {
                    let missing = || WireError::MissingField { kind: subject.kind.clone(), field: decl.name.clone() };
                    match (decl.ty, subject.fields.get(&decl.name)) {
                        (FieldType::Bytes { .. }, Some(Value::Bytes(b))) => {
                            if b.len() > WIRE_MAX_LEN as usize {
                                return Err(WireError::Oversize { field: decl.name.clone(), len: b.len() });
                            }
                            out.extend_from_slice(&(b.len() as u16).to_be_bytes());
                            out.extend_from_slice(b);
                        }
                        (FieldType::UInt { bits }, Some(Value::Int(v))) => {
                            if bits < 64 && *v >> bits != 0 {
                                return Err(WireError::ValueTooWide { field: decl.name.clone(), value: *v, bits });
                            }
                            let width = bits as usize / 8;
                            out.extend_from_slice(&v.to_be_bytes()[8 - width..]);
                        }
                        _ => return Err(missing()),
                    }
                }
            }
        }
    }
    Ok(out)
}

fn take<'a>(bytes: &'a [u8], at: &mut usize, n: usize) -> Result<&'a [u8], WireError> {
    let available = bytes.len() - *at;
    if n > available {
        return Err(WireError::Truncated { offset: *at, needed: n, available });
    }
    let s = &bytes[*at..*at + n];
    *at += n;
    Ok(s)
}

pub fn decode_frames(schema: &[KindSchema], layout: &WireLayout, bytes: &[u8]) -> Result<Vec<WireFrame>, WireError> {
    let mut frames = Vec::new();
    let mut at = 0;
    while at < bytes.len() {
        let ty = bytes[at];
        at += 1;
        let Some(kind) = layout.kind_of(ty) else {
            frames.push(WireFrame::Unknown { type_byte: ty, body: bytes[at..].to_vec() });
            break;
        };
        let mut subject = Subject::new(kind);
        for decl in &schema_for(schema, kind)?.fields {
            let value = match decl.ty {
                FieldType::Bytes { .. } => {
                    let len = take(bytes, &mut at, 2)?;
                    let len = u16::from_be_bytes([len[0], len[1]]) as usize;
                    Value::Bytes(take(bytes, &mut at, len)?.to_vec())
                }
                FieldType::UInt { bits } => {
                    let raw = take(bytes, &mut at, bits as usize / 8)?;
                    Value::Int(raw.iter().fold(0u64, |acc, b| (acc << 8) | *b as u64))
                }
            };
            subject.fields.insert(decl.name.clone(), value);
        }
        frames.push(WireFrame::Known(subject));
    }
    Ok(frames)
}

/// The packet-level subject: `kinds` holds the frame type bytes in order.
pub fn packet_subject(layout: &WireLayout, frames: &[WireFrame]) -> Subject {
    let kinds = frames.iter().filter_map(|f| f.type_byte(layout)).collect();
    Subject::new(layout.packet_kind.clone()).with("kinds", Value::Bytes(kinds))
}

/// Packet subject followed by one subject per known frame.
pub fn subjects(layout: &WireLayout, frames: &[WireFrame]) -> Vec<Subject> {
    let mut out = vec![packet_subject(layout, frames)];
    out.extend(frames.iter().filter_map(|f| match f {
        WireFrame::Known(s) => Some(s.clone()),
        WireFrame::Unknown { .. } => None,
    }));
    out
}
