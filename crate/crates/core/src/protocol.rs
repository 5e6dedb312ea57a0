//! Registry of the shipped protocols: spec, wire layout and role shapes.

use std::sync::OnceLock;

use serde::{Deserialize, Serialize};

use crate::spec::{parse_predicate, Predicate, ProtocolSpec, Subject};
use crate::wire::{self, WireError, WireFrame, WireLayout};

pub const MINIP_SPEC: &str = include_str!("../specs/minip.spec");
pub const MAXIP_SPEC: &str = include_str!("../specs/maxip.spec");

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Role {
    Client,
    Server,
}

#[derive(Debug)]
pub struct Protocol {
    pub spec: ProtocolSpec,
    pub layout: WireLayout,
    /// Frame type that opens a client packet.
    pub client_frame: u8,
    /// Frame type that opens a server packet.
    pub server_frame: u8,
}

impl Protocol {
    pub fn name(&self) -> &str {
        &self.spec.name
    }

    pub fn decode(&self, bytes: &[u8]) -> Result<Vec<WireFrame>, WireError> {
        wire::decode_frames(&self.spec.schema, &self.layout, bytes)
    }

    pub fn encode(&self, frames: &[WireFrame]) -> Result<Vec<u8>, WireError> {
        wire::encode_frames(&self.spec.schema, &self.layout, frames)
    }

    /// Packet subject followed by the subject of every known frame.
    pub fn subjects(&self, bytes: &[u8]) -> Result<Vec<Subject>, WireError> {
        Ok(wire::subjects(&self.layout, &self.decode(bytes)?))
    }

    /// Extra packet-level constraint that makes generated traffic look like
    /// it comes from `role`.
    pub fn role_constraint(&self, role: Role) -> Predicate {
        let ty = match role {
            Role::Client => self.client_frame,
            Role::Server => self.server_frame,
        };
        let param = self.packet_component().map_or("p", |c| c.param.as_str());
        parse_predicate(&format!("{param}.kinds.value(0) = 0x{ty:02x}")).expect("role constraint parses")
    }

    pub fn packet_component(&self) -> Option<&crate::spec::SpecComponent> {
        self.spec.components_for_kind(&self.layout.packet_kind).find(|c| c.layer == crate::spec::Layer::Packet)
    }
}

fn load(src: &str, frames: &[(u8, &str)], client_frame: u8, server_frame: u8) -> Protocol {
    let spec = ProtocolSpec::from_text(src).unwrap_or_else(|e| panic!("shipped spec is invalid: {e:?}"));
    let layout = WireLayout { frames: frames.iter().map(|(b, k)| (*b, k.to_string())).collect(), packet_kind: "packet".into() };
    Protocol { spec, layout, client_frame, server_frame }
}

pub fn minip() -> &'static Protocol {
    static P: OnceLock<Protocol> = OnceLock::new();
    P.get_or_init(|| load(MINIP_SPEC, &[(0x01, "ping"), (0x02, "pong"), (0x03, "timestamp")], 0x01, 0x02))
}

pub fn maxip() -> &'static Protocol {
    static P: OnceLock<Protocol> = OnceLock::new();
    P.get_or_init(|| load(MAXIP_SPEC, &[(0x01, "hello"), (0x02, "ack")], 0x01, 0x02))
}

pub fn by_name(name: &str) -> Option<&'static Protocol> {
    match name {
        "minip" => Some(minip()),
        "maxip" => Some(maxip()),
        _ => None,
    }
}

pub const NAMES: [&str; 2] = ["minip", "maxip"];

#[cfg(test)]
mod tests {
    use super::*;
    use crate::minip::{self as codec, Frame, Packet};

    #[test]
    fn shipped_specs_load() {
        assert_eq!(minip().spec.requirement_count(), 6);
        assert_eq!(maxip().spec.requirement_count(), 4);
    }

    #[test]
    fn generic_codec_matches_the_minip_codec() {
        let packets = [
            Packet::ping(0),
            Packet::pong(1000),
            Packet { frames: vec![Frame::Ping(b"hi".to_vec())] },
            Packet { frames: vec![Frame::Timestamp(u64::MAX), Frame::Unknown { type_byte: 0x7f, body: vec![1, 2, 3] }] },
        ];
        for p in packets {
            let bytes = codec::encode(&p).unwrap();
            let frames = minip().decode(&bytes).unwrap();
            assert_eq!(minip().encode(&frames).unwrap(), bytes);
            assert_eq!(wire::subjects(&minip().layout, &frames), p.subjects());
        }
        assert!(minip().decode(&[0x01, 0xff, 0xff, 0x00]).is_err());
    }
}
