use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::NetError;
use crate::protocol;
use crate::spec::{check_event, Layer, ProtocolSpec, Subject, Violation};
use crate::wire::WireError;

/// Events every protocol shares, whatever its own vocabulary.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BaseEvent {
    Send,
    Receive,
    Timeout,
    Crash,
}

/// Routes datagrams seen at an endpoint to the protocol components of a
/// (possibly composed) spec.
#[derive(Debug, Clone)]
pub struct SystemComponent {
    spec: ProtocolSpec,
    /// Endpoint name to the protocol its traffic is classified as.
    routes: BTreeMap<String, String>,
}

/// One spec event produced by classifying a datagram.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Routed {
    pub base: BaseEvent,
    pub event: String,
    pub subject: Subject,
}

impl SystemComponent {
    pub fn new(spec: ProtocolSpec, routes: impl IntoIterator<Item = (String, String)>) -> Result<Self, NetError> {
        let routes: BTreeMap<String, String> = routes.into_iter().collect();
        for (endpoint, proto) in &routes {
            if protocol::by_name(proto).is_none() {
                return Err(NetError::Topology(format!("endpoint `{endpoint}` speaks unknown protocol `{proto}`")));
            }
            if !Self::covers(&spec, proto) {
                return Err(NetError::Topology(format!("route for `{endpoint}` targets `{proto}`, which the spec has no packet component for")));
            }
        }
        Ok(SystemComponent { spec, routes })
    }

    /// Whether `spec` has a packet component for `proto`.
    pub fn covers(spec: &ProtocolSpec, proto: &str) -> bool {
        protocol::by_name(proto)
            .and_then(|p| spec.kind_for(proto, &p.layout.packet_kind))
            .is_some_and(|k| spec.components_for_kind(&k).any(|c| c.layer == Layer::Packet))
    }

    pub fn spec(&self) -> &ProtocolSpec {
        &self.spec
    }

    pub fn protocol_of(&self, endpoint: &str) -> Option<&str> {
        self.routes.get(endpoint).map(String::as_str)
    }

    /// Decodes `bytes` as traffic of `endpoint`'s protocol and maps every
    /// subject to the handler events it triggers. Subjects of kinds the spec
    /// does not handle are skipped.
    pub fn classify(&self, endpoint: &str, bytes: &[u8]) -> Result<Vec<Routed>, WireError> {
        let Some(proto) = self.protocol_of(endpoint).and_then(protocol::by_name) else { return Ok(Vec::new()) };
        let mut out = Vec::new();
        for mut subject in proto.subjects(bytes)? {
            let Some(kind) = self.spec.kind_for(proto.name(), &subject.kind) else { continue };
            subject.kind = kind.clone();
            for c in self.spec.components_for_kind(&kind).filter(|c| c.layer != Layer::Shim) {
                out.push(Routed { base: BaseEvent::Receive, event: c.event.clone(), subject: subject.clone() });
            }
        }
        Ok(out)
    }

    /// Conformance check of one datagram classified under `endpoint`.
    pub fn check(&self, endpoint: &str, bytes: &[u8], clock: u64) -> Result<Vec<Violation>, WireError> {
        let mut out = Vec::new();
        for r in self.classify(endpoint, bytes)? {
            out.extend(check_event(&self.spec, &r.event, &r.subject, clock, None).expect("routed events exist in the spec"));
        }
        Ok(out)
    }
}
