use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use super::{decode, encode, Frame, Packet};
use crate::netsim::{Ctx, Node, Variant};
use crate::protocol::Role;

/// Response sent over and over by a V-LOOP server stuck in connection close.
pub const CLOSE: [u8; 1] = [0x1c];

/// Period of the V-LOOP close retransmission.
pub const CLOSE_PERIOD_MS: u64 = 50;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EndpointConfig {
    pub role: Role,
    #[serde(default)]
    pub variant: Variant,
    #[serde(default = "three_seconds")]
    pub response_deadline_ms: u64,
    #[serde(default = "three_seconds")]
    pub idle_disconnect_ms: u64,
    #[serde(default = "default_cap")]
    pub buffer_cap: usize,
}

fn three_seconds() -> u64 {
    3000
}

fn default_cap() -> usize {
    32
}

impl EndpointConfig {
    pub fn server(variant: Variant) -> Self {
        EndpointConfig { role: Role::Server, variant, response_deadline_ms: 3000, idle_disconnect_ms: 3000, buffer_cap: 32 }
    }

    pub fn client() -> Self {
        EndpointConfig { role: Role::Client, ..EndpointConfig::server(Variant::Conforming) }
    }

    pub fn validate(&self) -> Result<(), String> {
        if self.response_deadline_ms == 0 || self.idle_disconnect_ms == 0 {
            return Err("deadlines must be strictly positive".into());
        }
        if self.buffer_cap == 0 {
            return Err("buffer cap must be at least 1".into());
        }
        if self.role == Role::Client && self.variant != Variant::Conforming {
            return Err(format!("variant {} exists only for servers", self.variant.as_str()));
        }
        Ok(())
    }
}

fn contains(hay: &[u8], needle: &[u8]) -> bool {
    hay.windows(needle.len()).any(|w| w == needle)
}

struct Conn {
    id: u64,
    last_seen: u64,
    closing: bool,
}

/// MiniP server. One connection per remote address; a connection is dropped
/// without notice after `idle_disconnect_ms` of silence.
pub struct Server {
    cfg: EndpointConfig,
    epoch: u64,
    conns: BTreeMap<String, Conn>,
    next_conn: u64,
}

impl Server {
    pub fn new(cfg: EndpointConfig) -> Self {
        Server { cfg, epoch: 0, conns: BTreeMap::new(), next_conn: 1 }
    }

    fn peer_of(&self, conn: u64) -> Option<String> {
        self.conns.iter().find(|(_, c)| c.id == conn).map(|(p, _)| p.clone())
    }

    /// Frames a client may legally send.
    fn illegal(p: &Packet) -> bool {
        p.frames.iter().any(|f| matches!(f, Frame::Pong(_) | Frame::Unknown { .. }))
    }
}

impl Node for Server {
    fn start(&mut self, ctx: &mut Ctx) {
        self.epoch = ctx.now();
    }

    fn on_datagram(&mut self, ctx: &mut Ctx, from: &str, bytes: &[u8]) {
        let now = ctx.now();
        let conn = self.conns.entry(from.to_string()).or_insert_with(|| {
            self.next_conn += 1;
            Conn { id: self.next_conn - 1, last_seen: now, closing: false }
        });
        conn.last_seen = now;
        let (id, closing) = (conn.id, conn.closing);
        ctx.set_timer(self.cfg.idle_disconnect_ms, id * 2);
        if closing {
            return;
        }
        let packet = decode(bytes);
        let pings: Vec<&[u8]> = match &packet {
            Ok(p) => p.frames.iter().filter_map(|f| if let Frame::Ping(d) = f { Some(d.as_slice()) } else { None }).collect(),
            Err(_) => Vec::new(),
        };
        match self.cfg.variant {
            Variant::VFmt if pings.iter().any(|d| contains(d, b"%n")) => {
                return ctx.crash("format string: %n reached the output routine");
            }
            Variant::VOvf => {
                if let Some(d) = pings.iter().find(|d| d.len() > self.cfg.buffer_cap) {
                    return ctx.crash(format!("buffer overflow: {} bytes into a {}-byte buffer", d.len(), self.cfg.buffer_cap));
                }
            }
            Variant::VLoop if packet.as_ref().map_or(true, Self::illegal) => {
                if let Some(c) = self.conns.get_mut(from) {
                    c.closing = true;
                }
                ctx.send_noted(from, CLOSE.to_vec(), format!("conn {id} close"));
                ctx.set_timer(CLOSE_PERIOD_MS, id * 2 + 1);
                return;
            }
            _ => {}
        }
        let Ok(p) = packet else { return };
        if matches!(p.frames.first(), Some(Frame::Ping(_))) {
            let pong = encode(&Packet::pong(now - self.epoch)).expect("pong encodes");
            ctx.send_noted(from, pong, format!("conn {id}"));
        }
    }

    fn on_timer(&mut self, ctx: &mut Ctx, timer: u64) {
        let (conn, looping) = (timer / 2, timer % 2 == 1);
        let Some(peer) = self.peer_of(conn) else { return };
        if looping {
            // the close state never resolves
            ctx.send_noted(&peer, CLOSE.to_vec(), format!("conn {conn} close"));
            ctx.set_timer(CLOSE_PERIOD_MS, timer);
        } else if ctx.now() - self.conns[&peer].last_seen >= self.cfg.idle_disconnect_ms && !self.conns[&peer].closing {
            self.conns.remove(&peer);
        }
    }
}

const PING_TIMER: u64 = 0;

/// MiniP client: `rounds` PINGs, `interval_ms` apart, to one server. Stops
/// once every PING was answered or has gone unanswered past the deadline.
pub struct Client {
    cfg: EndpointConfig,
    peer: String,
    rounds: u32,
    interval_ms: u64,
    start_ms: u64,
    epoch: u64,
    sent: u32,
    pending: BTreeSet<u32>,
}

impl Client {
    pub fn new(peer: impl Into<String>, rounds: u32, interval_ms: u64, start_ms: u64) -> Self {
        Client { cfg: EndpointConfig::client(), peer: peer.into(), rounds, interval_ms, start_ms, epoch: 0, sent: 0, pending: BTreeSet::new() }
    }

    fn maybe_stop(&self, ctx: &mut Ctx) {
        if self.sent == self.rounds && self.pending.is_empty() {
            ctx.stop();
        }
    }
}

impl Node for Client {
    fn start(&mut self, ctx: &mut Ctx) {
        self.epoch = ctx.now();
        if self.rounds == 0 {
            return ctx.stop();
        }
        ctx.set_timer(self.start_ms, PING_TIMER);
    }

    fn on_datagram(&mut self, ctx: &mut Ctx, _from: &str, bytes: &[u8]) {
        let Ok(p) = decode(bytes) else { return };
        if matches!(p.frames.first(), Some(Frame::Pong(_))) {
            if let Some(&r) = self.pending.iter().next() {
                self.pending.remove(&r);
            }
            self.maybe_stop(ctx);
        }
    }

    fn on_timer(&mut self, ctx: &mut Ctx, timer: u64) {
        if timer == PING_TIMER {
            let ping = encode(&Packet::ping(ctx.now() - self.epoch)).expect("ping encodes");
            ctx.send(&self.peer, ping);
            self.sent += 1;
            self.pending.insert(self.sent);
            ctx.set_timer(self.cfg.response_deadline_ms, u64::from(self.sent));
            if self.sent < self.rounds {
                ctx.set_timer(self.interval_ms, PING_TIMER);
            }
        } else {
            self.pending.remove(&(timer as u32));
            self.maybe_stop(ctx);
        }
    }
}
