//! Trace analysis and verdicts.
//!
//! Only behaviour of non-adversary endpoints counts against them: traffic
//! sent by an attacker, or rewritten or reflected by a man in the middle, is
//! never checked for conformance, and only requests from non-adversary
//! endpoints create response deadlines.

use std::collections::{BTreeMap, BTreeSet, VecDeque};

use serde::{Deserialize, Serialize};

use crate::netsim::{SystemComponent, HARNESS};
use crate::scenario::is_adversary_role;
use crate::spec::{check_event, ProtocolSpec, ViolationKind};
use crate::trace::{EventKind, Trace, TraceEvent};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FindingKind {
    Violation,
    Deadline,
    Crash,
    Silence,
    LoopDetected,
}

impl FindingKind {
    pub fn as_str(self) -> &'static str {
        match self {
            FindingKind::Violation => "violation",
            FindingKind::Deadline => "deadline",
            FindingKind::Crash => "crash",
            FindingKind::Silence => "silence",
            FindingKind::LoopDetected => "loop_detected",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Finding {
    pub kind: FindingKind,
    /// Endpoint at fault.
    pub endpoint: String,
    /// Triggering event ids, the decisive one first.
    pub events: Vec<u64>,
    pub time_ms: u64,
    pub detail: String,
    /// Datagram that led to the finding, when there is one.
    #[serde(default, skip_serializing_if = "Option::is_none", with = "opt_hex")]
    pub payload: Option<Vec<u8>>,
    /// Attack step whose packet led here.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub step: Option<u32>,
    /// Seed that reproduces the run.
    pub seed: u64,
    /// How many times the same finding recurred in the trace.
    pub occurrences: u32,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct AnalysisConfig {
    /// Identical consecutive sends that count as a loop.
    pub loop_threshold: usize,
}

impl Default for AnalysisConfig {
    fn default() -> Self {
        AnalysisConfig { loop_threshold: crate::scenario::DEFAULT_LOOP_THRESHOLD }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum AnalysisError {
    #[error("incomplete trace: no final stop event")]
    IncompleteTrace,
}

struct Obligation {
    trigger: u64,
    at: u64,
    event: String,
    within: u64,
}

#[derive(Default)]
struct Streak {
    bytes: Vec<u8>,
    count: usize,
    first: u64,
    reported: bool,
}

struct Analyzer<'a> {
    trace: &'a Trace,
    spec: &'a ProtocolSpec,
    sc: SystemComponent,
    adversary: BTreeSet<&'a str>,
    findings: Vec<Finding>,
    /// Violation findings already reported, by (endpoint, detail).
    seen: BTreeMap<(String, String), usize>,
}

impl<'a> Analyzer<'a> {
    fn new(trace: &'a Trace, spec: &'a ProtocolSpec) -> Self {
        let routes = trace
            .header
            .endpoints
            .iter()
            .filter_map(|e| e.protocol.as_ref().filter(|p| SystemComponent::covers(spec, p)).map(|p| (e.name.clone(), p.clone())));
        let sc = SystemComponent::new(spec.clone(), routes).expect("routes were filtered to covered protocols");
        let adversary = trace.header.endpoints.iter().filter(|e| is_adversary_role(&e.role)).map(|e| e.name.as_str()).collect();
        Analyzer { trace, spec, sc, adversary, findings: Vec::new(), seen: BTreeMap::new() }
    }

    fn is_adversary(&self, name: &str) -> bool {
        self.adversary.contains(name)
    }

    /// Whether a delivery carries bytes an adversary produced.
    fn adversarial_delivery(&self, e: &TraceEvent) -> bool {
        let rewritten = e.cause.and_then(|c| self.trace.event(c)).is_some_and(|c| matches!(c.kind, EventKind::Modify | EventKind::Reflect));
        rewritten || e.peer.as_deref().is_some_and(|p| self.is_adversary(p))
    }

    fn push(&mut self, kind: FindingKind, endpoint: &str, events: Vec<u64>, time_ms: u64, detail: String, payload: Option<Vec<u8>>) {
        if kind == FindingKind::Violation {
            let key = (endpoint.to_string(), detail.clone());
            if let Some(&i) = self.seen.get(&key) {
                self.findings[i].occurrences += 1;
                return;
            }
            self.seen.insert(key, self.findings.len());
        }
        let step = self.step_for(&events);
        self.findings.push(Finding {
            kind,
            endpoint: endpoint.to_string(),
            events,
            time_ms,
            detail,
            payload,
            step,
            seed: self.trace.header.seed,
            occurrences: 1,
        });
    }

    /// Step of the attack packet behind `events`: found along cause links
    /// first, else the latest step sent before the first event.
    fn step_for(&self, events: &[u64]) -> Option<u32> {
        let parse = |e: &TraceEvent| {
            (e.kind == EventKind::Send && self.is_adversary(&e.endpoint))
                .then(|| e.detail.as_deref()?.strip_prefix("step ")?.parse().ok())
                .flatten()
        };
        for &id in events {
            let mut cur = self.trace.event(id);
            while let Some(e) = cur {
                if let Some(s) = parse(e) {
                    return Some(s);
                }
                cur = e.cause.and_then(|c| self.trace.event(c));
            }
        }
        let anchor = *events.first()?;
        self.trace.events.iter().take_while(|e| e.id <= anchor).filter_map(parse).last()
    }

    fn run(mut self, cfg: &AnalysisConfig) -> Vec<Finding> {
        let mut pending: BTreeMap<(String, String), VecDeque<Obligation>> = BTreeMap::new();
        let mut streaks: BTreeMap<(String, String), Streak> = BTreeMap::new();
        let silenced: BTreeSet<u64> = self.trace.events.iter().filter(|e| e.kind == EventKind::Silence).filter_map(|e| e.cause).collect();
        // requests that never reached their addressee unaltered owe no answer
        let diverted: BTreeSet<u64> = self
            .trace
            .events
            .iter()
            .filter(|e| matches!(e.kind, EventKind::Drop | EventKind::Modify | EventKind::Reflect))
            .filter_map(|e| e.cause)
            .collect();

        for e in &self.trace.events {
            let peer = e.peer.clone().unwrap_or_default();
            match e.kind {
                EventKind::Send if !self.is_adversary(&e.endpoint) => {
                    let bytes = e.bytes.as_deref().unwrap_or_default();
                    let s = streaks.entry((e.endpoint.clone(), peer.clone())).or_default();
                    if s.count > 0 && s.bytes == bytes {
                        s.count += 1;
                    } else {
                        *s = Streak { bytes: bytes.to_vec(), count: 1, first: e.id, reported: false };
                    }
                    if s.count >= cfg.loop_threshold && !s.reported {
                        s.reported = true;
                        let (first, n) = (s.first, s.count);
                        let detail = format!("{n} identical consecutive sends to {peer}");
                        self.push(FindingKind::LoopDetected, &e.endpoint, vec![e.id, first], e.time_ms, detail, Some(bytes.to_vec()));
                    }
                    if self.is_adversary(&peer) || diverted.contains(&e.id) {
                        continue;
                    }
                    let Ok(routed) = self.sc.classify(&e.endpoint, bytes) else { continue };
                    let conforming = routed.iter().all(|r| check_event(self.spec, &r.event, &r.subject, e.time_ms, None).is_ok_and(|v| v.is_empty()));
                    if !conforming {
                        continue;
                    }
                    for r in &routed {
                        for c in self.spec.components.iter().filter(|c| c.timing.as_ref().is_some_and(|t| t.after == r.event)) {
                            let within = c.timing.as_ref().expect("filtered on timing").within_ms;
                            pending.entry((e.endpoint.clone(), peer.clone())).or_default().push_back(Obligation {
                                trigger: e.id,
                                at: e.time_ms,
                                event: r.event.clone(),
                                within,
                            });
                        }
                    }
                }
                EventKind::Deliver => {
                    if let Some(s) = streaks.get_mut(&(e.endpoint.clone(), peer.clone())) {
                        s.count = 0;
                    }
                    if self.adversarial_delivery(e) {
                        continue;
                    }
                    let bytes = e.bytes.as_deref().unwrap_or_default();
                    match self.sc.classify(&peer, bytes) {
                        Err(err) => {
                            let detail = format!("undecodable packet: {err}");
                            self.push(FindingKind::Violation, &peer, vec![e.id], e.time_ms, detail, Some(bytes.to_vec()));
                        }
                        Ok(routed) => {
                            let mut broken = Vec::new();
                            for r in &routed {
                                for v in check_event(self.spec, &r.event, &r.subject, e.time_ms, None).expect("routed events exist") {
                                    if let ViolationKind::Requirement { requirement, .. } = &v.kind {
                                        broken.push(format!("{}: {requirement}", v.component));
                                    } else if let ViolationKind::Evaluation { error, .. } = &v.kind {
                                        broken.push(format!("{}: {error}", v.component));
                                    }
                                }
                            }
                            if !broken.is_empty() {
                                self.push(FindingKind::Violation, &peer, vec![e.id], e.time_ms, broken.join("; "), Some(bytes.to_vec()));
                            }
                            // responses settle the oldest open obligation they answer
                            let key = (e.endpoint.clone(), peer.clone());
                            for r in &routed {
                                let Some(t) = self.spec.component_for_event(&r.event).and_then(|c| c.timing.as_ref()) else { continue };
                                let Some(queue) = pending.get_mut(&key) else { continue };
                                let Some(pos) = queue.iter().position(|o| o.event == t.after) else { continue };
                                let o = queue.remove(pos).expect("position is valid");
                                if e.time_ms - o.at > o.within {
                                    let detail = format!("response {} ms after the request, limit {} ms", e.time_ms - o.at, o.within);
                                    self.push(FindingKind::Deadline, &peer, vec![e.id, o.trigger], e.time_ms, detail, None);
                                }
                            }
                        }
                    }
                }
                EventKind::Crash => {
                    let cause = e.cause.and_then(|c| self.trace.event(c));
                    let mut events = vec![e.id];
                    events.extend(e.cause);
                    let payload = cause.and_then(|c| c.bytes.clone());
                    self.push(FindingKind::Crash, &e.endpoint, events, e.time_ms, e.detail.clone().unwrap_or_default(), payload);
                }
                EventKind::Silence if !self.is_adversary(&peer) => {
                    let mut events = vec![e.id];
                    events.extend(e.cause);
                    let detail = format!("{} (seen by {})", e.detail.as_deref().unwrap_or("silent"), e.endpoint);
                    self.push(FindingKind::Silence, &peer, events, e.time_ms, detail, None);
                }
                EventKind::Violation | EventKind::LoopDetected => {
                    let kind = if e.kind == EventKind::Violation { FindingKind::Violation } else { FindingKind::LoopDetected };
                    self.push(kind, &e.endpoint, vec![e.id], e.time_ms, e.detail.clone().unwrap_or_default(), e.bytes.clone());
                }
                _ => {}
            }
        }

        let end = self.trace.end_time();
        for ((_, responder), queue) in pending {
            for o in queue {
                if end >= o.at + o.within && !silenced.contains(&o.trigger) {
                    let detail = format!("no response within {} ms", o.within);
                    self.push(FindingKind::Silence, &responder, vec![o.trigger], o.at + o.within, detail, None);
                }
            }
        }
        self.findings.sort_by_key(|f| (f.events[0], f.kind));
        self.findings
    }
}

/// Findings of one trace, judged against `spec` (the unmutated protocol
/// spec, composed with the others present when several are spoken).
pub fn analyze(trace: &Trace, spec: &ProtocolSpec, cfg: &AnalysisConfig) -> Result<Vec<Finding>, AnalysisError> {
    match trace.events.last() {
        Some(e) if e.kind == EventKind::Stop && e.endpoint == HARNESS => {}
        _ => return Err(AnalysisError::IncompleteTrace),
    }
    Ok(Analyzer::new(trace, spec).run(cfg))
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "outcome", content = "reason")]
pub enum TrialOutcome {
    Pass,
    Fail(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Aggregate {
    AllPass,
    AllFail,
    Mixed,
}

impl Aggregate {
    /// Grid symbol: ✓ vulnerable (every trial failed), ✗ safe (every trial
    /// passed), ∼ mixed.
    pub fn symbol(self) -> &'static str {
        match self {
            Aggregate::AllFail => "✓",
            Aggregate::AllPass => "✗",
            Aggregate::Mixed => "∼",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Classification {
    Safe,
    Unsafe,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Verdict {
    pub per_trial: Vec<TrialOutcome>,
    pub aggregate: Aggregate,
}

/// A trial fails iff it has a finding. An empty trial list counts as all
/// passing.
pub fn verdict(trials: &[Vec<Finding>]) -> Verdict {
    let per_trial: Vec<TrialOutcome> = trials
        .iter()
        .map(|f| match f.first() {
            None => TrialOutcome::Pass,
            Some(first) => {
                let kinds: BTreeSet<&str> = f.iter().map(|x| x.kind.as_str()).collect();
                TrialOutcome::Fail(format!("{} finding(s): {}; first: {}", f.len(), kinds.into_iter().collect::<Vec<_>>().join(", "), first.detail))
            }
        })
        .collect();
    let fails = per_trial.iter().filter(|t| matches!(t, TrialOutcome::Fail(_))).count();
    let aggregate = match fails {
        0 => Aggregate::AllPass,
        n if n == per_trial.len() => Aggregate::AllFail,
        _ => Aggregate::Mixed,
    };
    Verdict { per_trial, aggregate }
}

/// Safe iff every verdict is all-pass; a mixed verdict is not safe.
pub fn classify<'a>(verdicts: impl IntoIterator<Item = &'a Verdict>) -> Classification {
    if verdicts.into_iter().all(|v| v.aggregate == Aggregate::AllPass) {
        Classification::Safe
    } else {
        Classification::Unsafe
    }
}

mod opt_hex {
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(bytes: &Option<Vec<u8>>, s: S) -> Result<S::Ok, S::Error> {
        match bytes {
            Some(b) => s.serialize_str(&hex::encode(b)),
            None => s.serialize_none(),
        }
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Option<Vec<u8>>, D::Error> {
        Option::<String>::deserialize(d)?.map(|s| hex::decode(s).map_err(serde::de::Error::custom)).transpose()
    }
}
