//! Loopback UDP plumbing for real-clock runs.

use std::collections::BTreeMap;
use std::io::ErrorKind;
use std::net::{SocketAddr, UdpSocket};
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::mpsc::Sender;
use std::sync::Arc;
use std::thread::JoinHandle;
use std::time::{Duration, Instant};

use super::{Ctx, Host, NetError, Node};

const POLL: Duration = Duration::from_millis(20);
const MAX_DATAGRAM: usize = 65536;

pub(super) enum Inbound {
    Datagram { internal: usize, external: usize, bytes: Vec<u8> },
    Unreachable { internal: usize, external: usize },
}

/// A connected socket for one (internal endpoint, external peer) pair and
/// the thread draining it.
pub(super) struct Link {
    socket: Arc<UdpSocket>,
    done: Arc<AtomicBool>,
    reader: JoinHandle<()>,
}

impl Link {
    pub(super) fn send(&self, bytes: &[u8]) -> std::io::Result<()> {
        self.socket.send(bytes).map(|_| ())
    }
}

pub(super) fn open_link(addr: SocketAddr, internal: usize, external: usize, tx: Sender<Inbound>) -> std::io::Result<Link> {
    let socket = UdpSocket::bind(("127.0.0.1", 0))?;
    socket.connect(addr)?;
    socket.set_read_timeout(Some(POLL))?;
    let socket = Arc::new(socket);
    let done = Arc::new(AtomicBool::new(false));
    let reader = {
        let (socket, done) = (socket.clone(), done.clone());
        std::thread::spawn(move || {
            let mut buf = vec![0u8; MAX_DATAGRAM];
            while !done.load(Ordering::Relaxed) {
                let msg = match socket.recv(&mut buf) {
                    Ok(n) => Inbound::Datagram { internal, external, bytes: buf[..n].to_vec() },
                    Err(e) if e.kind() == ErrorKind::ConnectionRefused => Inbound::Unreachable { internal, external },
                    Err(_) => continue,
                };
                if tx.send(msg).is_err() {
                    break;
                }
            }
        })
    };
    Ok(Link { socket, done, reader })
}

pub(super) fn close(links: BTreeMap<(usize, usize), Link>) {
    for l in links.values() {
        l.done.store(true, Ordering::Relaxed);
    }
    for (_, l) in links {
        let _ = l.reader.join();
    }
}

/// A checked external endpoint.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Attachment {
    pub name: String,
    pub addr: SocketAddr,
}

/// Resolves `addr` and checks that something is listening there.
///
/// The check sends one empty datagram and waits briefly for the port
/// unreachable report a closed loopback port produces.
pub fn attach_external(name: &str, addr: &str) -> Result<Attachment, NetError> {
    let fail = |reason: String| NetError::AttachFailure { name: name.to_string(), addr: addr.to_string(), reason };
    let parsed: SocketAddr = addr.parse().map_err(|e| fail(format!("malformed address: {e}")))?;
    let probe = UdpSocket::bind(("127.0.0.1", 0)).map_err(|e| fail(e.to_string()))?;
    probe.connect(parsed).map_err(|e| fail(e.to_string()))?;
    probe.set_read_timeout(Some(Duration::from_millis(100))).map_err(|e| fail(e.to_string()))?;
    probe.send(&[]).map_err(|e| fail(e.to_string()))?;
    let mut buf = [0u8; 1];
    match probe.recv(&mut buf) {
        Err(e) if e.kind() == ErrorKind::ConnectionRefused => Err(fail("port unreachable".into())),
        _ => Ok(Attachment { name: name.to_string(), addr: parsed }),
    }
}

/// An in-process node served over a real UDP socket, standing in for an
/// external implementation.
pub struct UdpEndpoint {
    addr: SocketAddr,
    done: Arc<AtomicBool>,
    thread: Option<JoinHandle<()>>,
}

impl UdpEndpoint {
    pub fn addr(&self) -> SocketAddr {
        self.addr
    }

    /// Stops serving and closes the socket, as if the process died.
    pub fn kill(&mut self) {
        self.done.store(true, Ordering::Relaxed);
        if let Some(t) = self.thread.take() {
            let _ = t.join();
        }
    }
}

impl Drop for UdpEndpoint {
    fn drop(&mut self) {
        self.kill();
    }
}

struct SocketHost {
    socket: UdpSocket,
    start: Instant,
    now: u64,
    timers: BTreeMap<(u64, u64), u64>,
    seq: u64,
    halted: bool,
}

impl Host for SocketHost {
    fn now(&self) -> u64 {
        self.now
    }

    fn send(&mut self, _from: &str, to: &str, bytes: Vec<u8>, _detail: Option<String>, _cause: Option<u64>) -> u64 {
        if let Ok(addr) = to.parse::<SocketAddr>() {
            let _ = self.socket.send_to(&bytes, addr);
        }
        0
    }

    fn set_timer(&mut self, _node: &str, after_ms: u64, id: u64) {
        self.seq += 1;
        self.timers.insert((self.now + after_ms, self.seq), id);
    }

    fn crash(&mut self, _node: &str, _detail: String, _cause: Option<u64>) {
        self.halted = true;
    }

    fn stop(&mut self, _node: &str) {
        self.halted = true;
    }

    fn silence(&mut self, _node: &str, _peer: &str, _detail: String, _cause: Option<u64>) {}
}

/// Serves `node` on a fresh loopback port. Peers appear to the node under
/// their socket address.
pub fn spawn_udp_endpoint(name: &str, mut node: Box<dyn Node>) -> std::io::Result<UdpEndpoint> {
    let socket = UdpSocket::bind(("127.0.0.1", 0))?;
    let addr = socket.local_addr()?;
    let done = Arc::new(AtomicBool::new(false));
    let flag = done.clone();
    let name = name.to_string();
    let thread = std::thread::spawn(move || {
        let mut host = SocketHost { socket, start: Instant::now(), now: 0, timers: BTreeMap::new(), seq: 0, halted: false };
        node.start(&mut Ctx::new(&mut host, &name, None));
        let mut buf = vec![0u8; MAX_DATAGRAM];
        while !flag.load(Ordering::Relaxed) && !host.halted {
            host.now = host.start.elapsed().as_millis() as u64;
            if let Some((&(at, seq), &id)) = host.timers.first_key_value() {
                if at <= host.now {
                    host.timers.remove(&(at, seq));
                    node.on_timer(&mut Ctx::new(&mut host, &name, None), id);
                    continue;
                }
            }
            let wait = host.timers.first_key_value().map_or(POLL, |(&(at, _), _)| Duration::from_millis((at - host.now).clamp(1, 20)));
            let _ = host.socket.set_read_timeout(Some(wait));
            if let Ok((n, from)) = host.socket.recv_from(&mut buf) {
                host.now = host.start.elapsed().as_millis() as u64;
                let bytes = buf[..n].to_vec();
                node.on_datagram(&mut Ctx::new(&mut host, &name, None), &from.to_string(), &bytes);
            }
        }
    });
    Ok(UdpEndpoint { addr, done, thread: Some(thread) })
}
