//! MaxiP: a second toy protocol used for cross-protocol runs.

use crate::netsim::{Ctx, Node};
use crate::protocol;
use crate::spec::{Subject, Value};
use crate::wire::WireFrame;

pub const TOKEN_LEN: usize = 64;

pub fn hello(token: &[u8]) -> Vec<u8> {
    let f = Subject::new("hello").with("token", Value::Bytes(token.to_vec()));
    protocol::maxip().encode(&[WireFrame::Known(f)]).expect("hello encodes")
}

pub fn ack() -> Vec<u8> {
    let f = Subject::new("ack").with("data", Value::Bytes(b"ack!".to_vec()));
    protocol::maxip().encode(&[WireFrame::Known(f)]).expect("ack encodes")
}

fn is_kind(bytes: &[u8], kind: &str) -> Option<Subject> {
    match protocol::maxip().decode(bytes).ok()?.as_slice() {
        [WireFrame::Known(s)] if s.kind == kind => Some(s.clone()),
        _ => None,
    }
}

/// Sends `rounds` HELLOs and stops after the last ACK or deadline.
pub struct Client {
    peer: String,
    rounds: u32,
    interval_ms: u64,
    start_ms: u64,
    sent: u32,
    open: u32,
}

impl Client {
    pub fn new(peer: impl Into<String>, rounds: u32, interval_ms: u64, start_ms: u64) -> Self {
        Client { peer: peer.into(), rounds, interval_ms, start_ms, sent: 0, open: 0 }
    }

    fn token() -> Vec<u8> {
        (0..TOKEN_LEN).map(|i| b'a' + (i % 26) as u8).collect()
    }
}

const SEND: u64 = 0;
const DEADLINE: u64 = 1;

impl Node for Client {
    fn start(&mut self, ctx: &mut Ctx) {
        if self.rounds == 0 {
            return ctx.stop();
        }
        ctx.set_timer(self.start_ms, SEND);
    }

    fn on_datagram(&mut self, ctx: &mut Ctx, _from: &str, bytes: &[u8]) {
        if is_kind(bytes, "ack").is_some() && self.open > 0 {
            self.open -= 1;
            if self.sent == self.rounds && self.open == 0 {
                ctx.stop();
            }
        }
    }

    fn on_timer(&mut self, ctx: &mut Ctx, id: u64) {
        if id == SEND {
            ctx.send(&self.peer, hello(&Self::token()));
            self.sent += 1;
            self.open += 1;
            ctx.set_timer(3000, DEADLINE);
            if self.sent < self.rounds {
                ctx.set_timer(self.interval_ms, SEND);
            }
        } else {
            self.open = self.open.saturating_sub(1);
            if self.sent == self.rounds && self.open == 0 {
                ctx.stop();
            }
        }
    }
}

/// Acknowledges every well-formed HELLO.
#[derive(Default)]
pub struct Server;

impl Node for Server {
    fn start(&mut self, _ctx: &mut Ctx) {}

    fn on_datagram(&mut self, ctx: &mut Ctx, from: &str, bytes: &[u8]) {
        if is_kind(bytes, "hello").and_then(|s| s.bytes("token").map(<[u8]>::len)) == Some(TOKEN_LEN) {
            ctx.send(from, ack());
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::spec::check_event;

    #[test]
    fn hello_layout() {
        let h = hello(&[7; 64]);
        assert_eq!(&h[..3], &[0x01, 0x00, 0x40]);
        assert_eq!(h.len(), 67);
        assert_eq!(ack(), [0x02, 0x00, 0x04, b'a', b'c', b'k', b'!']);
    }

    #[test]
    fn endpoint_traffic_conforms() {
        let spec = &protocol::maxip().spec;
        for bytes in [hello(&Client::token()), ack()] {
            let subjects = protocol::maxip().subjects(&bytes).unwrap();
            for s in subjects {
                for c in spec.components_for_kind(&s.kind) {
                    assert!(check_event(spec, &c.event, &s, 0, None).unwrap().is_empty(), "{}", c.event);
                }
            }
        }
    }
}
