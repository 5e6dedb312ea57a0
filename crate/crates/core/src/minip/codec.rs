//! MiniP wire format.
//!
//! ```text
//! frame     = type:u8 payload
//! PING/PONG = 0x01/0x02, length:u16be, data[length]
//! TIMESTAMP = 0x03, millis:u64be
//! packet    = frame*        (one datagram)
//! ```
//!
//! The codec represents non-conforming packets too: any number of frames,
//! any payload size up to the length field, and unknown frame types (which
//! take the rest of the datagram). Whether a packet conforms is judged
//! against the spec, not here.

use crate::spec::{Subject, Value, WIRE_MAX_LEN};

pub const TYPE_PING: u8 = 0x01;
pub const TYPE_PONG: u8 = 0x02;
pub const TYPE_TIMESTAMP: u8 = 0x03;

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum Frame {
    Ping(Vec<u8>),
    Pong(Vec<u8>),
    /// Milliseconds since the sender's epoch.
    Timestamp(u64),
    Unknown { type_byte: u8, body: Vec<u8> },
}

impl Frame {
    pub fn type_byte(&self) -> u8 {
        match self {
            Frame::Ping(_) => TYPE_PING,
            Frame::Pong(_) => TYPE_PONG,
            Frame::Timestamp(_) => TYPE_TIMESTAMP,
            Frame::Unknown { type_byte, .. } => *type_byte,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Default)]
pub struct Packet {
    pub frames: Vec<Frame>,
}

impl Packet {
    pub fn ping(timestamp: u64) -> Packet {
        Packet { frames: vec![Frame::Ping(b"ping".to_vec()), Frame::Timestamp(timestamp)] }
    }

    pub fn pong(timestamp: u64) -> Packet {
        Packet { frames: vec![Frame::Pong(b"pong".to_vec()), Frame::Timestamp(timestamp)] }
    }

    /// Packet subject (`kinds`) followed by one subject per known frame.
    pub fn subjects(&self) -> Vec<Subject> {
        let kinds = self.frames.iter().map(Frame::type_byte).collect();
        let mut out = vec![Subject::new("packet").with("kinds", Value::Bytes(kinds))];
        for f in &self.frames {
            match f {
                Frame::Ping(d) => out.push(Subject::new("ping").with("data", Value::Bytes(d.clone()))),
                Frame::Pong(d) => out.push(Subject::new("pong").with("data", Value::Bytes(d.clone()))),
                Frame::Timestamp(t) => out.push(Subject::new("timestamp").with("value", Value::Int(*t))),
                Frame::Unknown { .. } => {}
            }
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum CodecError {
    #[error("frame data is {0} bytes, over the 16-bit length field")]
    Oversize(usize),
    #[error("truncated at offset {offset}: need {needed} bytes, {available} available")]
    Truncated { offset: usize, needed: usize, available: usize },
}

pub fn encode(p: &Packet) -> Result<Vec<u8>, CodecError> {
    let mut out = Vec::new();
    for f in &p.frames {
        out.push(f.type_byte());
        match f {
            Frame::Ping(d) | Frame::Pong(d) => {
                if d.len() > WIRE_MAX_LEN as usize {
                    return Err(CodecError::Oversize(d.len()));
                }
                out.extend_from_slice(&(d.len() as u16).to_be_bytes());
                out.extend_from_slice(d);
            }
            Frame::Timestamp(t) => out.extend_from_slice(&t.to_be_bytes()),
            Frame::Unknown { body, .. } => out.extend_from_slice(body),
        }
    }
    Ok(out)
}

pub fn decode(bytes: &[u8]) -> Result<Packet, CodecError> {
    let mut frames = Vec::new();
    let mut at = 0usize;
    let take = |at: &mut usize, n: usize| -> Result<&[u8], CodecError> {
        let available = bytes.len() - *at;
        if n > available {
            return Err(CodecError::Truncated { offset: *at, needed: n, available });
        }
        let s = &bytes[*at..*at + n];
        *at += n;
        Ok(s)
    };
    while at < bytes.len() {
        let ty = bytes[at];
        at += 1;
        let frame = match ty {
            TYPE_PING | TYPE_PONG => {
                let len = take(&mut at, 2)?;
                let len = u16::from_be_bytes([len[0], len[1]]) as usize;
                let data = take(&mut at, len)?.to_vec();
                if ty == TYPE_PING {
                    Frame::Ping(data)
                } else {
                    Frame::Pong(data)
                }
            }
            TYPE_TIMESTAMP => {
                let raw = take(&mut at, 8)?;
                Frame::Timestamp(u64::from_be_bytes(raw.try_into().expect("8 bytes")))
            }
            _ => {
                let body = bytes[at..].to_vec();
                at = bytes.len();
                Frame::Unknown { type_byte: ty, body }
            }
        };
        frames.push(frame);
    }
    Ok(Packet { frames })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn encodes_ping_and_pong_bit_exact() {
        // Hand-computed: type, length, data, then 0x03 and an 8-byte stamp.
        assert_eq!(hex::encode(encode(&Packet::ping(0)).unwrap()), "01000470696e67030000000000000000");
        assert_eq!(hex::encode(encode(&Packet::pong(1000)).unwrap()), "020004706f6e670300000000000003e8");
    }

    #[test]
    fn round_trips_the_reference_packets() {
        for p in [Packet::ping(0), Packet::pong(1000)] {
            assert_eq!(decode(&encode(&p).unwrap()).unwrap(), p);
        }
    }

    #[test]
    fn oversize_data_is_rejected() {
        let p = Packet { frames: vec![Frame::Ping(vec![0; 70_000]), Frame::Timestamp(0)] };
        assert_eq!(encode(&p), Err(CodecError::Oversize(70_000)));
    }

    #[test]
    fn decodes_short_single_frame_ping() {
        let p = decode(&hex::decode("01000268 69".replace(' ', "")).unwrap()).unwrap();
        assert_eq!(p.frames, vec![Frame::Ping(b"hi".to_vec())]);
    }

    #[test]
    fn declared_length_past_end_is_truncated() {
        assert_eq!(decode(&[0x01, 0xff, 0xff, 0x00]), Err(CodecError::Truncated { offset: 3, needed: 65535, available: 1 }));
        assert!(matches!(decode(&[0x03, 0, 0, 0, 0]), Err(CodecError::Truncated { .. })));
    }

    #[test]
    fn unknown_frame_takes_the_rest() {
        let p = decode(&[0x01, 0x00, 0x00, 0x09, 0xaa, 0xbb]).unwrap();
        assert_eq!(p.frames, vec![Frame::Ping(vec![]), Frame::Unknown { type_byte: 9, body: vec![0xaa, 0xbb] }]);
        assert_eq!(encode(&p).unwrap(), vec![0x01, 0x00, 0x00, 0x09, 0xaa, 0xbb]);
    }
}
