use std::collections::{BTreeMap, BTreeSet};
use std::sync::mpsc::{self, Receiver, RecvTimeoutError, Sender};
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::udp::{self, Inbound, Link};
use super::{Ctx, Effect, Forward, Host, Interceptor, NetError, Node, RunSetup, Topology};
use crate::protocol;
use crate::trace::{ClockMode, EventKind, Trace, TraceEvent, TraceHeader};

/// Endpoint name used for harness-level events.
pub const HARNESS: &str = "netsim";

enum Pending {
    Deliver { to: usize, from: String, bytes: Vec<u8>, cause: u64 },
    Timer { node: usize, id: u64 },
}

/// Socket side of a real-clock run.
struct Wire {
    start: Instant,
    tx: Sender<Inbound>,
    /// External endpoint index to its address and response deadline.
    externals: BTreeMap<usize, (std::net::SocketAddr, u64)>,
    /// One socket per (internal sender, external peer) pair.
    links: BTreeMap<(usize, usize), Link>,
    /// Last Send per pair, used as the cause of inbound datagrams.
    last_send: BTreeMap<(usize, usize), u64>,
    /// Unanswered sends from non-adversary endpoints: send id and time.
    awaiting: BTreeMap<(usize, usize), (u64, u64)>,
    unreachable: BTreeSet<(usize, usize)>,
}

struct Core<'t> {
    topo: &'t Topology,
    now: u64,
    seq: u64,
    queue: BTreeMap<(u64, u64), Pending>,
    events: Vec<TraceEvent>,
    rng: ChaCha8Rng,
    index: BTreeMap<String, usize>,
    adversary: Vec<bool>,
    stopped: Vec<bool>,
    interceptors: BTreeMap<String, Box<dyn Interceptor>>,
    crashed: bool,
    error: Option<NetError>,
    wire: Option<Wire>,
}

impl Core<'_> {
    fn record(&mut self, kind: EventKind, endpoint: &str, peer: Option<&str>, bytes: Option<Vec<u8>>, detail: Option<String>, cause: Option<u64>) -> u64 {
        let id = self.events.len() as u64;
        self.events.push(TraceEvent {
            id,
            time_ms: self.now,
            kind,
            endpoint: endpoint.to_string(),
            peer: peer.map(str::to_string),
            bytes,
            detail,
            cause,
        });
        id
    }

    fn schedule(&mut self, at: u64, p: Pending) {
        self.seq += 1;
        self.queue.insert((at, self.seq), p);
    }

    fn forward(&mut self, delay: u64, from: &str, to: &str, bytes: Vec<u8>, cause: u64, send_id: u64) {
        let Some(&t) = self.index.get(to) else {
            self.error = Some(NetError::UnknownReflectTarget(to.to_string()));
            return;
        };
        if self.wire.as_ref().is_some_and(|w| w.externals.contains_key(&t)) {
            self.send_external(from, t, bytes, send_id);
            return;
        }
        self.schedule(self.now + delay, Pending::Deliver { to: t, from: from.to_string(), bytes, cause });
    }

    fn send_external(&mut self, from: &str, to: usize, bytes: Vec<u8>, send_id: u64) {
        let f = self.index[from];
        let now = self.now;
        let adversary = self.adversary[f];
        let wire = self.wire.as_mut().expect("external endpoints exist only with a wire");
        let addr = wire.externals[&to].0;
        let result = match wire.links.get(&(f, to)) {
            Some(l) => l.send(&bytes),
            None => udp::open_link(addr, f, to, wire.tx.clone()).and_then(|l| {
                let r = l.send(&bytes);
                wire.links.insert((f, to), l);
                r
            }),
        };
        wire.last_send.insert((f, to), send_id);
        if !adversary {
            wire.awaiting.entry((f, to)).or_insert((send_id, now));
        }
        if let Err(e) = result {
            let refused = e.kind() == std::io::ErrorKind::ConnectionRefused;
            let peer = self.name(to);
            self.record(EventKind::Drop, from, Some(&peer), None, Some(format!("send failed: {e}")), Some(send_id));
            if refused {
                self.unreachable(f, to, Some(send_id));
            }
        }
    }

    fn unreachable(&mut self, internal: usize, external: usize, cause: Option<u64>) {
        let wire = self.wire.as_mut().expect("wire");
        if wire.unreachable.insert((internal, external)) {
            let (me, peer) = (self.name(internal), self.name(external));
            self.record(EventKind::Silence, &me, Some(&peer), None, Some("unreachable".into()), cause);
        }
    }

    fn name(&self, i: usize) -> String {
        self.index.iter().find(|(_, &v)| v == i).map(|(k, _)| k.clone()).unwrap_or_default()
    }
}

impl Host for Core<'_> {
    fn now(&self) -> u64 {
        self.now
    }

    fn send(&mut self, from: &str, to: &str, bytes: Vec<u8>, detail: Option<String>, cause: Option<u64>) -> u64 {
        let id = self.record(EventKind::Send, from, Some(to), Some(bytes.clone()), detail, cause);
        if !self.index.contains_key(to) {
            self.record(EventKind::Drop, from, Some(to), None, Some("unknown destination".into()), Some(id));
            return id;
        }
        let link = self.topo.link(from, to);
        if link.loss_percent > 0.0 && self.rng.gen_bool(link.loss_percent / 100.0) {
            self.record(EventKind::Drop, from, Some(to), None, Some("link loss".into()), Some(id));
            return id;
        }
        let mut delay = link.latency_ms;
        if link.reorder && self.rng.gen_bool(0.5) {
            // held back long enough for the next datagram on the link to overtake
            delay += self.rng.gen_range(1..=link.latency_ms.max(1));
        }
        let Some(mitm) = self.topo.tap(from, to).map(str::to_string) else {
            self.forward(delay, from, to, bytes, id, id);
            return id;
        };
        let now = self.now;
        let forwards = match self.interceptors.get_mut(&mitm) {
            Some(i) => i.intercept(from, to, &bytes, now),
            None => vec![Forward { bytes, to: to.to_string(), extra_delay_ms: 0, effect: Effect::Pass }],
        };
        if forwards.is_empty() {
            self.record(EventKind::Drop, &mitm, Some(to), None, Some("intercepted".into()), Some(id));
        }
        for f in forwards {
            if !self.index.contains_key(&f.to) {
                self.error = Some(NetError::UnknownReflectTarget(f.to));
                break;
            }
            let cause = match f.effect {
                Effect::Pass => id,
                Effect::Modify(d) => self.record(EventKind::Modify, &mitm, Some(&f.to), Some(f.bytes.clone()), Some(d), Some(id)),
                Effect::Reflect => {
                    let d = format!("reflected from {to}");
                    self.record(EventKind::Reflect, &mitm, Some(&f.to), Some(f.bytes.clone()), Some(d), Some(id))
                }
            };
            self.forward(delay + f.extra_delay_ms, from, &f.to, f.bytes, cause, id);
        }
        id
    }

    fn set_timer(&mut self, node: &str, after_ms: u64, id: u64) {
        if let Some(&node) = self.index.get(node) {
            self.schedule(self.now + after_ms, Pending::Timer { node, id });
        }
    }

    fn crash(&mut self, node: &str, detail: String, cause: Option<u64>) {
        self.record(EventKind::Crash, node, None, None, Some(detail), cause);
        self.crashed = true;
    }

    fn stop(&mut self, node: &str) {
        if let Some(&i) = self.index.get(node) {
            if !self.stopped[i] {
                self.stopped[i] = true;
                self.record(EventKind::Stop, node, None, None, Some("stopped".into()), None);
            }
        }
    }

    fn silence(&mut self, node: &str, peer: &str, detail: String, cause: Option<u64>) {
        self.record(EventKind::Silence, node, Some(peer), None, Some(detail), cause);
    }
}

struct Prepared<'t> {
    core: Core<'t>,
    names: Vec<String>,
    nodes: Vec<Option<Box<dyn Node>>>,
    budget: u64,
}

type Setup<'t> = (Prepared<'t>, TraceHeader, Option<Receiver<Inbound>>);

fn prepare(topology: &Topology, setup: RunSetup, seed: u64, real: bool) -> Result<Setup<'_>, NetError> {
    let RunSetup { endpoints, interceptors, mut header, .. } = setup;
    topology.validate()?;
    for e in &topology.endpoints {
        if !endpoints.iter().any(|a| a.name == e.name) {
            return Err(NetError::Topology(format!("endpoint `{}` has no attached node", e.name)));
        }
    }
    if !real {
        if let Some(a) = endpoints.iter().find(|a| a.external.is_some()) {
            return Err(NetError::Topology(format!("external endpoint `{}` needs the real clock", a.name)));
        }
    }
    header.clock = if real { ClockMode::Real } else { ClockMode::Virtual };
    header.deterministic = !real;

    let names: Vec<String> = endpoints.iter().map(|a| a.name.clone()).collect();
    let mut wire = None;
    if real {
        let (tx, rx) = mpsc::channel();
        let mut externals = BTreeMap::new();
        for (i, a) in endpoints.iter().enumerate() {
            if let Some(addr) = &a.external {
                let att = udp::attach_external(&a.name, addr)?;
                let deadline = a
                    .protocol
                    .as_deref()
                    .and_then(protocol::by_name)
                    .and_then(|p| p.spec.components.iter().filter_map(|c| c.timing.as_ref().map(|t| t.within_ms)).max())
                    .unwrap_or(3000);
                externals.insert(i, (att.addr, deadline));
            }
        }
        wire = Some((
            Wire {
                start: Instant::now(),
                tx,
                externals,
                links: BTreeMap::new(),
                last_send: BTreeMap::new(),
                awaiting: BTreeMap::new(),
                unreachable: BTreeSet::new(),
            },
            rx,
        ));
    }
    let adversary = endpoints.iter().map(|a| a.role.is_adversary()).collect();
    let (wire, rx) = match wire {
        Some((w, rx)) => (Some(w), Some(rx)),
        None => (None, None),
    };
    let core = Core {
        topo: topology,
        now: 0,
        seq: 0,
        queue: BTreeMap::new(),
        events: Vec::new(),
        rng: ChaCha8Rng::seed_from_u64(seed),
        index: names.iter().enumerate().map(|(i, n)| (n.clone(), i)).collect(),
        adversary,
        stopped: vec![false; names.len()],
        interceptors: interceptors.into_iter().collect(),
        crashed: false,
        error: None,
        wire,
    };
    let budget = header.budget_ms;
    let roles: Vec<&'static str> = endpoints.iter().map(|a| a.role.as_str()).collect();
    let nodes = endpoints.into_iter().map(|a| a.node).collect();
    let mut p = Prepared { core, names, nodes, budget };
    for (name, role) in p.names.iter().zip(&roles) {
        p.core.record(EventKind::Start, name, None, None, Some(role.to_string()), None);
    }
    Ok((p, header, rx))
}

impl Prepared<'_> {
    fn start_nodes(&mut self) {
        for (i, name) in self.names.iter().enumerate() {
            if let Some(node) = self.nodes[i].as_mut() {
                node.start(&mut Ctx::new(&mut self.core, name, None));
            }
            if self.core.crashed || self.core.error.is_some() {
                break;
            }
        }
    }

    fn dispatch(&mut self, pending: Pending) {
        let core = &mut self.core;
        match pending {
            Pending::Deliver { to, from, bytes, cause } => {
                let name = &self.names[to];
                if core.stopped[to] || self.nodes[to].is_none() {
                    core.record(EventKind::Drop, name, Some(&from), None, Some("no receiver".into()), Some(cause));
                    return;
                }
                let did = core.record(EventKind::Deliver, name, Some(&from), Some(bytes.clone()), None, Some(cause));
                if let Some(node) = self.nodes[to].as_mut() {
                    node.on_datagram(&mut Ctx::new(core, name, Some(did)), &from, &bytes);
                }
            }
            Pending::Timer { node, id } => {
                if !core.stopped[node] {
                    if let Some(n) = self.nodes[node].as_mut() {
                        n.on_timer(&mut Ctx::new(core, &self.names[node], None), id);
                    }
                }
            }
        }
    }

    fn inbound(&mut self, msg: Inbound) {
        match msg {
            Inbound::Datagram { internal, external, bytes } => {
                let wire = self.core.wire.as_mut().expect("wire");
                wire.awaiting.remove(&(internal, external));
                let Some(&cause) = wire.last_send.get(&(internal, external)) else { return };
                let from = self.names[external].clone();
                self.dispatch(Pending::Deliver { to: internal, from, bytes, cause });
            }
            Inbound::Unreachable { internal, external } => {
                let cause = self.core.wire.as_ref().and_then(|w| w.last_send.get(&(internal, external)).copied());
                self.core.unreachable(internal, external, cause);
            }
        }
    }

    fn check_deadlines(&mut self) {
        let now = self.core.now;
        let wire = self.core.wire.as_mut().expect("wire");
        let due: Vec<((usize, usize), u64, u64)> = wire
            .awaiting
            .iter()
            .filter(|((_, ext), (_, at))| now >= at + wire.externals[ext].1)
            .map(|(k, (id, _))| (*k, *id, wire.externals[&k.1].1))
            .collect();
        for (key, id, within) in due {
            self.core.wire.as_mut().expect("wire").awaiting.remove(&key);
            let (me, peer) = (self.names[key.0].clone(), self.names[key.1].clone());
            self.core.record(EventKind::Silence, &me, Some(&peer), None, Some(format!("no response within {within} ms")), Some(id));
        }
    }

    fn internal_done(&self) -> bool {
        self.nodes.iter().zip(&self.core.stopped).all(|(n, s)| n.is_none() || *s)
    }
}

/// Runs a topology on the discrete-event scheduler.
///
/// The run ends when simulated time would pass the budget, when nothing is
/// left to happen, or on the first crash. Identical setups and seeds give
/// identical traces.
pub fn run_virtual(setup: RunSetup, seed: u64) -> Result<Trace, NetError> {
    let topology = setup.topology.clone();
    let (mut p, header, _) = prepare(&topology, setup, seed, false)?;
    p.start_nodes();
    let reason = loop {
        if p.core.crashed {
            break "crash";
        }
        if let Some(e) = p.core.error.take() {
            return Err(e);
        }
        let Some((&(at, _), _)) = p.core.queue.first_key_value() else { break "idle" };
        if at > p.budget {
            p.core.now = p.budget;
            break "budget";
        }
        let (_, pending) = p.core.queue.pop_first().expect("queue is non-empty");
        p.core.now = at;
        p.dispatch(pending);
    };
    p.core.record(EventKind::Stop, HARNESS, None, None, Some(reason.into()), None);
    Ok(Trace { header, events: p.core.events })
}

/// Runs a topology against the wall clock, with external endpoints reached
/// over UDP loopback.
///
/// The run ends on the budget, on a crash of an in-process endpoint, or once
/// every in-process endpoint has stopped. Traces are not reproducible.
pub fn run_real(setup: RunSetup, seed: u64) -> Result<Trace, NetError> {
    let topology = setup.topology.clone();
    let (mut p, header, rx) = prepare(&topology, setup, seed, true)?;
    let rx = rx.expect("real runs have an inbox");
    p.start_nodes();
    let reason = loop {
        if p.core.crashed {
            break "crash";
        }
        if let Some(e) = p.core.error.take() {
            if let Some(w) = p.core.wire.take() {
                udp::close(w.links);
            }
            return Err(e);
        }
        let elapsed = p.core.wire.as_ref().expect("wire").start.elapsed().as_millis() as u64;
        p.core.now = p.core.now.max(elapsed);
        if p.core.now >= p.budget {
            p.core.now = p.budget.max(p.core.now);
            break "budget";
        }
        if p.internal_done() {
            break "idle";
        }
        p.check_deadlines();
        if let Some((&(at, _), _)) = p.core.queue.first_key_value() {
            if at <= p.core.now {
                let (_, pending) = p.core.queue.pop_first().expect("queue is non-empty");
                p.dispatch(pending);
                continue;
            }
        }
        let next = p.core.queue.first_key_value().map_or(p.budget, |(&(at, _), _)| at).min(p.budget);
        let wait = next.saturating_sub(p.core.now).clamp(1, 20);
        match rx.recv_timeout(Duration::from_millis(wait)) {
            Ok(msg) => {
                let elapsed = p.core.wire.as_ref().expect("wire").start.elapsed().as_millis() as u64;
                p.core.now = p.core.now.max(elapsed);
                p.inbound(msg);
            }
            Err(RecvTimeoutError::Timeout) => {}
            Err(RecvTimeoutError::Disconnected) => unreachable!("the wire holds a sender"),
        }
    };
    p.core.record(EventKind::Stop, HARNESS, None, None, Some(reason.into()), None);
    if let Some(w) = p.core.wire.take() {
        udp::close(w.links);
    }
    Ok(Trace { header, events: p.core.events })
}
