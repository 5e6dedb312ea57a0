//! Simulated network: topologies, the sans-IO node contract, a deterministic
//! discrete-event runner and a UDP loopback adapter for external endpoints.

mod nodes;
mod sim;
mod system;
mod udp;

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

pub use nodes::{build as build_node, protocol as node_protocol, Script};
pub use sim::{run_real, run_virtual, HARNESS};
pub use system::{BaseEvent, Routed, SystemComponent};
pub use udp::{attach_external, spawn_udp_endpoint, Attachment, UdpEndpoint};

use crate::trace::TraceHeader;

/// Everything a node can do while handling a callback.
pub trait Host {
    fn now(&self) -> u64;
    /// Sends a datagram and returns the id of the recorded Send event.
    fn send(&mut self, from: &str, to: &str, bytes: Vec<u8>, detail: Option<String>, cause: Option<u64>) -> u64;
    fn set_timer(&mut self, node: &str, after_ms: u64, id: u64);
    fn crash(&mut self, node: &str, detail: String, cause: Option<u64>);
    fn stop(&mut self, node: &str);
    fn silence(&mut self, node: &str, peer: &str, detail: String, cause: Option<u64>);
}

/// Handle passed to node callbacks.
pub struct Ctx<'a> {
    host: &'a mut dyn Host,
    me: &'a str,
    delivery: Option<u64>,
}

impl<'a> Ctx<'a> {
    pub fn new(host: &'a mut dyn Host, me: &'a str, delivery: Option<u64>) -> Ctx<'a> {
        Ctx { host, me, delivery }
    }

    pub fn now(&self) -> u64 {
        self.host.now()
    }

    pub fn me(&self) -> &str {
        self.me
    }

    /// Id of the Deliver event being handled, if any.
    pub fn delivery(&self) -> Option<u64> {
        self.delivery
    }

    pub fn send(&mut self, to: &str, bytes: Vec<u8>) -> u64 {
        self.host.send(self.me, to, bytes, None, self.delivery)
    }

    pub fn send_noted(&mut self, to: &str, bytes: Vec<u8>, detail: String) -> u64 {
        self.host.send(self.me, to, bytes, Some(detail), self.delivery)
    }

    pub fn set_timer(&mut self, after_ms: u64, id: u64) {
        self.host.set_timer(self.me, after_ms, id);
    }

    pub fn crash(&mut self, detail: impl Into<String>) {
        self.host.crash(self.me, detail.into(), self.delivery);
    }

    pub fn stop(&mut self) {
        self.host.stop(self.me);
    }

    pub fn silence(&mut self, peer: &str, detail: impl Into<String>, cause: Option<u64>) {
        self.host.silence(self.me, peer, detail.into(), cause);
    }
}

/// A protocol endpoint as a reactor over datagrams and timers.
pub trait Node: Send {
    fn start(&mut self, ctx: &mut Ctx);
    fn on_datagram(&mut self, ctx: &mut Ctx, from: &str, bytes: &[u8]);
    fn on_timer(&mut self, _ctx: &mut Ctx, _id: u64) {}
}

/// What an inline interceptor does with one packet.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Effect {
    Pass,
    Modify(String),
    Reflect,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Forward {
    pub bytes: Vec<u8>,
    pub to: String,
    pub extra_delay_ms: u64,
    pub effect: Effect,
}

/// Inline man-in-the-middle on a link. An empty result drops the packet.
pub trait Interceptor: Send {
    fn intercept(&mut self, from: &str, to: &str, bytes: &[u8], now: u64) -> Vec<Forward>;
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EndpointRole {
    Sut,
    Attacker,
    Tester,
    Mitm,
}

impl EndpointRole {
    pub fn as_str(self) -> &'static str {
        match self {
            EndpointRole::Sut => "sut",
            EndpointRole::Attacker => "attacker",
            EndpointRole::Tester => "tester",
            EndpointRole::Mitm => "mitm",
        }
    }

    pub fn is_adversary(self) -> bool {
        matches!(self, EndpointRole::Attacker | EndpointRole::Mitm)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LinkProfile {
    #[serde(default = "default_latency")]
    pub latency_ms: u64,
    #[serde(default)]
    pub loss_percent: f64,
    #[serde(default)]
    pub reorder: bool,
}

fn default_latency() -> u64 {
    1
}

impl Default for LinkProfile {
    fn default() -> Self {
        LinkProfile { latency_ms: default_latency(), loss_percent: 0.0, reorder: false }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LinkSpec {
    pub from: String,
    pub to: String,
    #[serde(flatten)]
    pub profile: LinkProfile,
    #[serde(default)]
    pub both_ways: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TapSpec {
    pub link: [String; 2],
    pub mitm: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Variant {
    #[default]
    Conforming,
    VFmt,
    VOvf,
    VLoop,
}

impl Variant {
    pub fn as_str(self) -> &'static str {
        match self {
            Variant::Conforming => "conforming",
            Variant::VFmt => "v_fmt",
            Variant::VOvf => "v_ovf",
            Variant::VLoop => "v_loop",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScriptSend {
    pub at_ms: u64,
    pub to: String,
    pub hex: String,
}

/// How an endpoint is realised.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "type", deny_unknown_fields)]
pub enum NodeSpec {
    MinipClient {
        peer: String,
        #[serde(default = "default_rounds")]
        rounds: u32,
        #[serde(default = "default_interval")]
        interval_ms: u64,
        #[serde(default)]
        start_ms: u64,
    },
    MinipServer {
        #[serde(default)]
        variant: Variant,
        #[serde(default = "default_buffer_cap")]
        buffer_cap: usize,
    },
    MaxipClient {
        peer: String,
        #[serde(default = "default_one")]
        rounds: u32,
        #[serde(default = "default_interval")]
        interval_ms: u64,
        #[serde(default)]
        start_ms: u64,
    },
    MaxipServer,
    /// Sends fixed datagrams at fixed times and ignores input.
    Script {
        protocol: String,
        sends: Vec<ScriptSend>,
    },
    /// Placeholder bound to the system under test of a campaign cell.
    Sut,
    /// Placeholder bound to the scenario's attacker model.
    Attacker {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        peer: Option<String>,
    },
    /// Interceptor bound to the scenario's intercept policy.
    Mitm,
    External {
        addr: String,
        protocol: String,
    },
}

fn default_rounds() -> u32 {
    5
}

fn default_one() -> u32 {
    1
}

fn default_interval() -> u64 {
    1000
}

fn default_buffer_cap() -> usize {
    32
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EndpointSpec {
    pub name: String,
    pub role: EndpointRole,
    pub node: NodeSpec,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Topology {
    pub endpoints: Vec<EndpointSpec>,
    #[serde(default)]
    pub links: Vec<LinkSpec>,
    #[serde(default)]
    pub taps: Vec<TapSpec>,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum NetError {
    #[error("invalid topology: {0}")]
    Topology(String),
    #[error("reflect target `{0}` is not in the topology")]
    UnknownReflectTarget(String),
    #[error("cannot attach `{name}` at {addr}: {reason}")]
    AttachFailure { name: String, addr: String, reason: String },
    #[error("endpoint `{0}` is detached")]
    NetworkDetached(String),
}

impl Topology {
    pub fn endpoint(&self, name: &str) -> Option<&EndpointSpec> {
        self.endpoints.iter().find(|e| e.name == name)
    }

    pub fn validate(&self) -> Result<(), NetError> {
        let bad = |m: String| Err(NetError::Topology(m));
        let mut names = BTreeSet::new();
        for e in &self.endpoints {
            if !names.insert(e.name.as_str()) {
                return bad(format!("endpoint `{}` declared twice", e.name));
            }
        }
        for l in &self.links {
            for n in [&l.from, &l.to] {
                if !names.contains(n.as_str()) {
                    return bad(format!("link references unknown endpoint `{n}`"));
                }
            }
            if !(0.0..=100.0).contains(&l.profile.loss_percent) {
                return bad(format!("link {} -> {}: loss must be within 0..=100", l.from, l.to));
            }
        }
        let mut tapped = BTreeSet::new();
        for t in &self.taps {
            for n in &t.link {
                if !names.contains(n.as_str()) {
                    return bad(format!("tap references unknown endpoint `{n}`"));
                }
            }
            let mut key = t.link.clone();
            key.sort();
            if !tapped.insert(key) {
                return bad(format!("link {} <-> {} has more than one tap", t.link[0], t.link[1]));
            }
            match self.endpoint(&t.mitm) {
                Some(e) if e.role == EndpointRole::Mitm => {}
                _ => return bad(format!("tap endpoint `{}` is not a mitm endpoint", t.mitm)),
            }
        }
        for e in &self.endpoints {
            let peer = match &e.node {
                NodeSpec::MinipClient { peer, .. } | NodeSpec::MaxipClient { peer, .. } => Some(peer),
                NodeSpec::Attacker { peer } => peer.as_ref(),
                _ => None,
            };
            if let Some(p) = peer {
                if !names.contains(p.as_str()) {
                    return bad(format!("endpoint `{}` targets unknown peer `{p}`", e.name));
                }
            }
            if let NodeSpec::Script { sends, .. } = &e.node {
                for s in sends {
                    if !names.contains(s.to.as_str()) {
                        return bad(format!("script `{}` sends to unknown endpoint `{}`", e.name, s.to));
                    }
                    if hex::decode(&s.hex).is_err() {
                        return bad(format!("script `{}` has malformed hex", e.name));
                    }
                }
            }
        }
        Ok(())
    }

    /// Profile of the directed link `from -> to`; unlisted pairs get a
    /// perfect 1 ms link.
    pub fn link(&self, from: &str, to: &str) -> LinkProfile {
        self.links
            .iter()
            .find(|l| (l.from == from && l.to == to) || (l.both_ways && l.from == to && l.to == from))
            .map(|l| l.profile)
            .unwrap_or_default()
    }

    /// MitM endpoint tapping the link between `a` and `b`, either direction.
    pub fn tap(&self, a: &str, b: &str) -> Option<&str> {
        self.taps
            .iter()
            .find(|t| (t.link[0] == a && t.link[1] == b) || (t.link[0] == b && t.link[1] == a))
            .map(|t| t.mitm.as_str())
    }
}

/// A node bound to its topology endpoint.
pub struct Attached {
    pub name: String,
    pub role: EndpointRole,
    pub protocol: Option<String>,
    pub node: Option<Box<dyn Node>>,
    /// UDP address for external endpoints (real mode only).
    pub external: Option<String>,
}

/// Inputs shared by both run modes.
pub struct RunSetup {
    pub topology: Topology,
    pub endpoints: Vec<Attached>,
    /// Interceptor per MitM endpoint name.
    pub interceptors: Vec<(String, Box<dyn Interceptor>)>,
    pub header: TraceHeader,
}
