use super::{Ctx, Node, NodeSpec};
use crate::minip::{self, EndpointConfig};
use crate::maxip;

/// Replays fixed datagrams at fixed times and ignores everything it receives.
pub struct Script {
    sends: Vec<(u64, String, Vec<u8>)>,
}

impl Script {
    pub fn new(sends: Vec<(u64, String, Vec<u8>)>) -> Self {
        Script { sends }
    }
}

impl Node for Script {
    fn start(&mut self, ctx: &mut Ctx) {
        for (i, (at, _, _)) in self.sends.iter().enumerate() {
            ctx.set_timer(*at, i as u64);
        }
    }

    fn on_datagram(&mut self, _ctx: &mut Ctx, _from: &str, _bytes: &[u8]) {}

    fn on_timer(&mut self, ctx: &mut Ctx, id: u64) {
        let (_, to, bytes) = &self.sends[id as usize];
        ctx.send(to, bytes.clone());
    }
}

/// Builds the node for a concrete endpoint spec. Placeholders (`sut`,
/// `attacker`, `mitm`) and external endpoints yield `None`.
pub fn build(spec: &NodeSpec) -> Option<Box<dyn Node>> {
    Some(match spec {
        NodeSpec::MinipClient { peer, rounds, interval_ms, start_ms } => Box::new(minip::Client::new(peer, *rounds, *interval_ms, *start_ms)),
        NodeSpec::MinipServer { variant, buffer_cap } => {
            Box::new(minip::Server::new(EndpointConfig { buffer_cap: *buffer_cap, ..EndpointConfig::server(*variant) }))
        }
        NodeSpec::MaxipClient { peer, rounds, interval_ms, start_ms } => Box::new(maxip::Client::new(peer, *rounds, *interval_ms, *start_ms)),
        NodeSpec::MaxipServer => Box::new(maxip::Server),
        NodeSpec::Script { sends, .. } => Box::new(Script::new(
            sends.iter().map(|s| (s.at_ms, s.to.clone(), hex::decode(&s.hex).expect("validated hex"))).collect(),
        )),
        NodeSpec::Sut | NodeSpec::Attacker { .. } | NodeSpec::Mitm | NodeSpec::External { .. } => return None,
    })
}

/// Protocol a concrete endpoint speaks, when the spec fixes it.
pub fn protocol(spec: &NodeSpec) -> Option<&str> {
    match spec {
        NodeSpec::MinipClient { .. } | NodeSpec::MinipServer { .. } => Some("minip"),
        NodeSpec::MaxipClient { .. } | NodeSpec::MaxipServer => Some("maxip"),
        NodeSpec::Script { protocol, .. } | NodeSpec::External { protocol, .. } => Some(protocol),
        NodeSpec::Sut | NodeSpec::Attacker { .. } | NodeSpec::Mitm => None,
    }
}
