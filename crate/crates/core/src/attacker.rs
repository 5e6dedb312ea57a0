//! Attacker models: a vector, a (possibly mutated) spec, fixed scenario
//! constraints and, for a man in the middle, an intercept policy.
//!
//! Traffic is generated per subject kind from a plan. The mutated clause and
//! the scenario constraints are mandatory; if they contradict each other the
//! model is misconfigured. Every other requirement of the spec, plus the
//! constraint that gives the packet the attacker's role, is then added in
//! order as long as the set stays satisfiable.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::mutation::{Literal, Mutant};
use crate::netsim::{Ctx, Effect, Forward, Interceptor, Node};
use crate::protocol::{Protocol, Role};
use crate::seed;
use crate::solver::{self, domains_for, Domain, SolveError, DEFAULT_MAX_TRIES};
use crate::spec::{check_event, evaluate, parse_predicate, print_predicate, KindSchema, Layer, Predicate, ProtocolSpec, SpecError, Subject, Value};
use crate::wire::{self, WireFrame};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Vector {
    MaliciousClient,
    MaliciousServer,
    Mitm,
}

impl Vector {
    pub fn role(self) -> Option<Role> {
        match self {
            Vector::MaliciousClient => Some(Role::Client),
            Vector::MaliciousServer => Some(Role::Server),
            Vector::Mitm => None,
        }
    }
}

/// Attack categories, used only to tag reports.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Category {
    TlsSsl,
    Injection,
    Eavesdropping,
    ServiceDisruption,
    Spoofing,
    ProtocolBased,
}

/// A fixed requirement added to one component for a scenario.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConstraint {
    pub component: String,
    pub require: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Match {
    /// Subject kind the predicate is evaluated on (`packet`, `ping`, ...).
    pub kind: String,
    pub require: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Rewrite {
    pub kind: String,
    pub field: String,
    pub value: Literal,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "type", deny_unknown_fields)]
pub enum Action {
    Pass,
    Drop,
    Delay { ms: u64 },
    Modify { rewrites: Vec<Rewrite> },
    Reflect { target: String },
    Forge { hex: String },
    /// Replace the packet with one generated from the model's spec.
    Regenerate,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InterceptPolicy {
    /// Only packets with a subject satisfying this are acted on; all
    /// packets when absent.
    #[serde(rename = "match", default, skip_serializing_if = "Option::is_none")]
    pub matcher: Option<Match>,
    /// Only packets sent by this endpoint are acted on.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub from: Option<String>,
    pub action: Action,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum AttackError {
    #[error("scenario constraint on `{component}`: {msg}")]
    Scenario { component: String, msg: String },
    #[error("scenario unsatisfiable: the fixed constraints on `{kind}` cannot all hold ({detail})")]
    SolverUnsat { kind: String, detail: String },
    #[error(transparent)]
    Solver(#[from] SolveError),
    #[error("no self-consistent packet found")]
    Inconsistent,
    #[error("reflect target `{0}` is not in the topology")]
    UnknownReflectTarget(String),
    #[error("a mitm model needs an intercept policy")]
    MissingPolicy,
    #[error("intercept policy: {0}")]
    Policy(String),
}

#[derive(Debug, Clone)]
pub struct AttackerModel {
    pub vector: Vector,
    pub protocol: &'static Protocol,
    /// The spec traffic is generated from: a mutant or the original.
    pub spec: ProtocolSpec,
    pub mutant: Option<Mutant>,
    pub scenario: Vec<(String, Predicate)>,
    pub policy: Option<InterceptPolicy>,
    /// Extra report tags on top of the derived ones.
    pub tags: BTreeSet<Category>,
}

impl AttackerModel {
    pub fn new(
        vector: Vector,
        protocol: &'static Protocol,
        base: &ProtocolSpec,
        mutant: Option<Mutant>,
        scenario: &[ScenarioConstraint],
        policy: Option<InterceptPolicy>,
    ) -> Result<AttackerModel, AttackError> {
        let spec = mutant.as_ref().map_or_else(|| base.clone(), |m| m.spec.clone());
        let mut fixed = Vec::new();
        for sc in scenario {
            let fail = |msg: String| AttackError::Scenario { component: sc.component.clone(), msg };
            let pred = parse_predicate(&sc.require).map_err(|e| fail(e.to_string()))?;
            // type-check by attaching the constraint to a scratch copy
            let mut scratch = spec.clone();
            let c = scratch.component_mut(&sc.component).ok_or_else(|| fail("no such component".into()))?;
            c.requirements.push(pred.clone());
            if let Err(errs) = scratch.validate() {
                return Err(fail(errs.iter().map(SpecError::to_string).collect::<Vec<_>>().join("; ")));
            }
            fixed.push((sc.component.clone(), pred));
        }
        if vector == Vector::Mitm && policy.is_none() {
            return Err(AttackError::MissingPolicy);
        }
        if let Some(p) = &policy {
            if let Some(m) = &p.matcher {
                parse_predicate(&m.require).map_err(|e| AttackError::Policy(e.to_string()))?;
            }
            if let Action::Forge { hex } = &p.action {
                hex::decode(hex).map_err(|e| AttackError::Policy(format!("forge template: {e}")))?;
            }
        }
        Ok(AttackerModel { vector, protocol, spec, mutant, scenario: fixed, policy, tags: BTreeSet::new() })
    }

    /// Report tags: derived from the vector and policy, plus explicit ones.
    pub fn categories(&self) -> BTreeSet<Category> {
        let mut out = self.tags.clone();
        match (&self.vector, self.policy.as_ref().map(|p| &p.action)) {
            (Vector::Mitm, Some(a)) => out.extend(match a {
                Action::Pass => vec![Category::Eavesdropping],
                Action::Drop | Action::Delay { .. } => vec![Category::ServiceDisruption],
                Action::Modify { .. } | Action::Regenerate => vec![Category::Injection],
                Action::Reflect { .. } => vec![Category::Spoofing, Category::ProtocolBased],
                Action::Forge { .. } => vec![Category::Spoofing, Category::Injection],
            }),
            _ => out.extend([Category::Injection, Category::ProtocolBased]),
        }
        out
    }

    /// Builds the generation plan for traffic in `role`. Fails when the
    /// mandatory constraints of some kind cannot be satisfied.
    pub fn plan(&self, role: Role, seed: u64) -> Result<Plan, AttackError> {
        let layout = &self.protocol.layout;
        let mutated = self.mutant.as_ref().and_then(|m| m.mutated_requirement());
        let mut kinds = BTreeMap::new();
        let names = std::iter::once(layout.packet_kind.as_str()).chain(layout.frames.iter().map(|(_, k)| k.as_str()));
        for kind in names {
            let Some(schema) = self.spec.kind_schema(kind) else { continue };
            let domains = domains_for(schema);
            let mut mandatory = Vec::new();
            let mut optional = Vec::new();
            if kind == layout.packet_kind {
                optional.push(shape_constraint(self.protocol));
                optional.push(self.protocol.role_constraint(role));
            }
            for c in self.spec.components_for_kind(kind).filter(|c| c.layer != Layer::Shim) {
                for (i, r) in c.requirements.iter().enumerate() {
                    if mutated == Some((c.name.as_str(), i)) {
                        mandatory.push(r.clone());
                    } else {
                        optional.push(r.clone());
                    }
                }
                mandatory.extend(self.scenario.iter().filter(|(n, _)| *n == c.name).map(|(_, p)| p.clone()));
            }
            let seed = seed::derive(&[b"plan", &seed.to_be_bytes(), kind.as_bytes()]);
            match solver::solve(&mandatory, &domains, seed, DEFAULT_MAX_TRIES) {
                Ok(_) => {}
                Err(SolveError::Unsat { .. }) => {
                    let detail = mandatory.iter().map(|p| print_predicate(p, "f")).collect::<Vec<_>>().join(" & ");
                    return Err(AttackError::SolverUnsat { kind: kind.to_string(), detail });
                }
                Err(e) => return Err(e.into()),
            }
            let mut plan = KindPlan { constraints: mandatory, dropped: Vec::new(), domains };
            for p in optional {
                plan.constraints.push(p);
                if solver::solve(&plan.constraints, &plan.domains, seed, DEFAULT_MAX_TRIES).is_err() {
                    let p = plan.constraints.pop().expect("just pushed");
                    plan.dropped.push(print_predicate(&p, "f"));
                }
            }
            kinds.insert(kind.to_string(), plan);
        }
        Ok(Plan { protocol: self.protocol, schema: self.spec.schema.clone(), role, kinds })
    }
}

/// Every frame type byte but the last must be known, since an unknown type
/// byte swallows the rest of the datagram.
fn shape_constraint(p: &Protocol) -> Predicate {
    let known: Vec<String> = p.layout.frames.iter().map(|(b, _)| format!("p.kinds.value(I) = 0x{b:02x}")).collect();
    let src = format!("~(exists I. I < p.kinds.end - 1 & ~({}))", known.join(" | "));
    parse_predicate(&src).expect("shape constraint parses")
}

#[derive(Debug, Clone)]
pub struct KindPlan {
    pub constraints: Vec<Predicate>,
    /// Requirements left out because they contradict the mandatory ones.
    pub dropped: Vec<String>,
    domains: Vec<Domain>,
}

#[derive(Debug, Clone)]
pub struct Plan {
    pub protocol: &'static Protocol,
    pub schema: Vec<KindSchema>,
    pub role: Role,
    pub kinds: BTreeMap<String, KindPlan>,
}

const GENERATE_ATTEMPTS: u64 = 32;

impl Plan {
    /// One packet satisfying the plan, as bytes.
    pub fn generate(&self, seed: u64) -> Result<Vec<u8>, AttackError> {
        let layout = &self.protocol.layout;
        let packet = &self.kinds[&layout.packet_kind];
        for attempt in 0..GENERATE_ATTEMPTS {
            let s = seed::derive(&[&seed.to_be_bytes(), &attempt.to_be_bytes()]);
            let Ok(a) = solver::solve(&packet.constraints, &packet.domains, s, DEFAULT_MAX_TRIES) else { continue };
            let kinds = a.bytes("kinds").unwrap_or_default().to_vec();
            let mut frames = Vec::new();
            for (i, b) in kinds.iter().enumerate() {
                let frame = match layout.kind_of(*b).and_then(|k| self.kinds.get(k).map(|p| (k, p))) {
                    Some((k, p)) => {
                        let fs = seed::derive(&[&s.to_be_bytes(), &(i as u64).to_be_bytes()]);
                        match solver::solve(&p.constraints, &p.domains, fs, DEFAULT_MAX_TRIES) {
                            Ok(a) => WireFrame::Known(a.into_subject(k)),
                            Err(_) => break,
                        }
                    }
                    None => WireFrame::Unknown { type_byte: *b, body: Vec::new() },
                };
                frames.push(frame);
            }
            if frames.len() != kinds.len() {
                continue;
            }
            let Ok(bytes) = wire::encode_frames(&self.schema, layout, &frames) else { continue };
            if self.consistent(&bytes, &kinds) {
                return Ok(bytes);
            }
        }
        Err(AttackError::Inconsistent)
    }

    /// Whether `bytes` re-decode to the intended frame sequence and every
    /// subject meets its kind's plan.
    pub fn consistent(&self, bytes: &[u8], kinds: &[u8]) -> bool {
        let layout = &self.protocol.layout;
        let Ok(frames) = wire::decode_frames(&self.schema, layout, bytes) else { return false };
        let subjects = wire::subjects(layout, &frames);
        if subjects[0].bytes("kinds") != Some(kinds) {
            return false;
        }
        subjects.iter().all(|s| {
            self.kinds.get(&s.kind).is_none_or(|p| p.constraints.iter().all(|c| evaluate(c, s) == Ok(true)))
        })
    }
}

/// The next attack packet of a client or server vector. The solver seed is
/// derived from the run seed and the step index only, so a step can be
/// reproduced without replaying earlier ones.
pub fn generate_step(plan: &Plan, run_seed: u64, step: u32) -> Result<Vec<u8>, AttackError> {
    plan.generate(seed::step(run_seed, step))
}

/// Whether a mutant's traffic can be told apart from conforming traffic.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Screening {
    Distinct,
    PossiblyEquivalent,
}

/// Samples packets from `plan` and looks for one the original spec rejects.
pub fn screen(plan: &Plan, original: &ProtocolSpec, seed: u64, samples: u32) -> Screening {
    for i in 0..samples {
        let Ok(bytes) = plan.generate(seed::step(seed, i)) else { continue };
        if violates(plan.protocol, original, &bytes) {
            return Screening::Distinct;
        }
    }
    Screening::PossiblyEquivalent
}

fn violates(p: &Protocol, spec: &ProtocolSpec, bytes: &[u8]) -> bool {
    let Ok(frames) = wire::decode_frames(&spec.schema, &p.layout, bytes) else { return true };
    wire::subjects(&p.layout, &frames).iter().any(|s| {
        spec.components_for_kind(&s.kind)
            .filter(|c| c.layer != Layer::Shim)
            .any(|c| !check_event(spec, &c.event, s, 0, None).expect("component event exists").is_empty())
    })
}

const STEP_TIMER: u64 = 0;
const DONE_TIMER: u64 = 1;

/// Waiting time after the last client step before the attacker leaves.
pub const STEP_TIMEOUT_MS: u64 = 3000;

/// Drives a client or server vector inside a run. Sends carry the detail
/// `step N`.
pub struct AttackerNode {
    plan: Plan,
    vector: Vector,
    target: Option<String>,
    steps: u32,
    interval_ms: u64,
    seed: u64,
    step: u32,
}

impl AttackerNode {
    pub fn new(plan: Plan, vector: Vector, target: Option<String>, steps: u32, interval_ms: u64, seed: u64) -> Self {
        AttackerNode { plan, vector, target, steps, interval_ms, seed, step: 0 }
    }

    fn emit(&mut self, ctx: &mut Ctx, to: &str) {
        match generate_step(&self.plan, self.seed, self.step) {
            Ok(bytes) => {
                ctx.send_noted(to, bytes, format!("step {}", self.step));
                self.step += 1;
            }
            Err(_) => ctx.stop(),
        }
    }
}

impl Node for AttackerNode {
    fn start(&mut self, ctx: &mut Ctx) {
        if self.vector == Vector::MaliciousClient {
            ctx.set_timer(0, STEP_TIMER);
        }
    }

    fn on_datagram(&mut self, ctx: &mut Ctx, from: &str, _bytes: &[u8]) {
        if self.vector == Vector::MaliciousServer {
            self.emit(ctx, from);
        }
    }

    fn on_timer(&mut self, ctx: &mut Ctx, id: u64) {
        if id == DONE_TIMER {
            return ctx.stop();
        }
        let Some(to) = self.target.clone() else { return ctx.stop() };
        if self.step >= self.steps {
            return ctx.stop();
        }
        self.emit(ctx, &to);
        if self.step < self.steps {
            ctx.set_timer(self.interval_ms, STEP_TIMER);
        } else {
            ctx.set_timer(STEP_TIMEOUT_MS, DONE_TIMER);
        }
    }
}

/// Applies an intercept policy on a tapped link.
pub struct Mitm {
    policy: InterceptPolicy,
    matcher: Option<(String, Predicate)>,
    protocols: BTreeMap<String, &'static Protocol>,
    regen: Option<(Plan, Plan)>,
    seed: u64,
    count: u32,
}

impl Mitm {
    /// `protocols` maps endpoint names to what they speak; `endpoints` lists
    /// every endpoint of the topology.
    pub fn new(
        model: &AttackerModel,
        protocols: BTreeMap<String, &'static Protocol>,
        endpoints: &BTreeSet<String>,
        seed: u64,
    ) -> Result<Mitm, AttackError> {
        let policy = model.policy.clone().ok_or(AttackError::MissingPolicy)?;
        if let Action::Reflect { target } = &policy.action {
            if !endpoints.contains(target) {
                return Err(AttackError::UnknownReflectTarget(target.clone()));
            }
        }
        let matcher = match &policy.matcher {
            Some(m) => Some((m.kind.clone(), parse_predicate(&m.require).map_err(|e| AttackError::Policy(e.to_string()))?)),
            None => None,
        };
        let regen = match policy.action {
            Action::Regenerate => Some((model.plan(Role::Client, seed)?, model.plan(Role::Server, seed)?)),
            _ => None,
        };
        Ok(Mitm { policy, matcher, protocols, regen, seed, count: 0 })
    }

    fn matches(&self, from: &str, to: &str, bytes: &[u8]) -> bool {
        if self.policy.from.as_deref().is_some_and(|f| f != from) {
            return false;
        }
        let Some((kind, pred)) = &self.matcher else { return true };
        let Some(p) = self.protocols.get(from).or_else(|| self.protocols.get(to)) else { return false };
        let Ok(subjects) = p.subjects(bytes) else { return false };
        subjects.iter().any(|s| s.kind == *kind && evaluate(pred, s) == Ok(true))
    }

    /// What happens to one packet crossing the tap.
    pub fn decide(&mut self, from: &str, to: &str, bytes: &[u8]) -> Vec<Forward> {
        let pass = |bytes: Vec<u8>| vec![Forward { bytes, to: to.to_string(), extra_delay_ms: 0, effect: Effect::Pass }];
        if !self.matches(from, to, bytes) {
            return pass(bytes.to_vec());
        }
        let changed = |bytes: Vec<u8>, delay: u64, why: String| vec![Forward { bytes, to: to.to_string(), extra_delay_ms: delay, effect: Effect::Modify(why) }];
        match &self.policy.action {
            Action::Pass => pass(bytes.to_vec()),
            Action::Drop => Vec::new(),
            Action::Delay { ms } => changed(bytes.to_vec(), *ms, format!("delayed {ms} ms")),
            Action::Modify { rewrites } => {
                let Some(p) = self.protocols.get(from).or_else(|| self.protocols.get(to)) else { return pass(bytes.to_vec()) };
                match rewrite(p, bytes, rewrites) {
                    Some(out) => changed(out, 0, "rewrote fields".into()),
                    None => pass(bytes.to_vec()),
                }
            }
            Action::Reflect { target } => vec![Forward { bytes: bytes.to_vec(), to: target.clone(), extra_delay_ms: 0, effect: Effect::Reflect }],
            Action::Forge { hex } => changed(hex::decode(hex).expect("validated at load"), 0, "forged".into()),
            Action::Regenerate => {
                let (client, server) = self.regen.as_ref().expect("plans built for regenerate");
                let plan = if bytes.first() == Some(&client.protocol.server_frame) { server } else { client };
                let step = self.count;
                self.count += 1;
                match generate_step(plan, self.seed, step) {
                    Ok(out) => changed(out, 0, format!("regenerated step {step}")),
                    Err(_) => pass(bytes.to_vec()),
                }
            }
        }
    }
}

fn rewrite(p: &Protocol, bytes: &[u8], rewrites: &[Rewrite]) -> Option<Vec<u8>> {
    let mut frames = p.decode(bytes).ok()?;
    for f in &mut frames {
        let WireFrame::Known(s) = f else { continue };
        for r in rewrites.iter().filter(|r| r.kind == s.kind) {
            let v = match &r.value {
                Literal::Int(i) => Value::Int(*i),
                Literal::Bytes(b) => Value::Bytes(b.clone()),
            };
            s.fields.insert(r.field.clone(), v);
        }
    }
    p.encode(&frames).ok()
}

impl Interceptor for Mitm {
    fn intercept(&mut self, from: &str, to: &str, bytes: &[u8], _now: u64) -> Vec<Forward> {
        self.decide(from, to, bytes)
    }
}

/// Subjects of a packet as the attacker's own spec sees them.
pub fn decode_as(plan: &Plan, bytes: &[u8]) -> Option<Vec<Subject>> {
    wire::decode_frames(&plan.schema, &plan.protocol.layout, bytes).ok().map(|f| wire::subjects(&plan.protocol.layout, &f))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::minip::{self, Frame};
    use crate::mutation::{self, MutationOp, Statement};
    use crate::protocol;

    fn format_string_mutant() -> Mutant {
        let op = MutationOp::StatementDeleteOrAdd {
            component: "ping_frame".into(),
            statement: Statement::Add { index: 2, predicate: mutation::TEMPLATES[0].1.into(), template: Some("format_string".into()) },
        };
        mutation::apply(&protocol::minip().spec, &op).unwrap()
    }

    fn ping_data(bytes: &[u8]) -> Vec<u8> {
        match &minip::decode(bytes).unwrap().frames[0] {
            Frame::Ping(d) => d.clone(),
            f => panic!("expected a ping, got {f:?}"),
        }
    }

    #[test]
    fn unmutated_client_traffic_conforms() {
        let m = AttackerModel::new(Vector::MaliciousClient, protocol::minip(), &protocol::minip().spec, None, &[], None).unwrap();
        let plan = m.plan(Role::Client, 1).unwrap();
        for step in 0..20 {
            let bytes = generate_step(&plan, 9, step).unwrap();
            assert!(!violates(protocol::minip(), &protocol::minip().spec, &bytes), "{}", hex::encode(&bytes));
            assert_eq!(ping_data(&bytes), b"ping");
        }
    }

    #[test]
    fn format_string_step_embeds_the_needle() {
        let m = AttackerModel::new(Vector::MaliciousClient, protocol::minip(), &protocol::minip().spec, Some(format_string_mutant()), &[], None).unwrap();
        let plan = m.plan(Role::Client, 1).unwrap();
        let data = ping_data(&generate_step(&plan, 3, 0).unwrap());
        assert!(data.windows(4).any(|w| w == [0x25, 0x78, 0x25, 0x6e]));
        assert_eq!(plan.kinds["ping"].dropped.len(), 2);
    }

    #[test]
    fn overflow_replay_scenario_is_reproducible() {
        let sc = [
            ScenarioConstraint { component: "ping_frame".into(), require: "f.data.end = 50".into() },
            ScenarioConstraint { component: "ping_frame".into(), require: "f.data.value(6) = 0x25 & f.data.value(7) = 0x78".into() },
        ];
        let m = AttackerModel::new(Vector::MaliciousClient, protocol::minip(), &protocol::minip().spec, Some(format_string_mutant()), &sc, None).unwrap();
        let plan = m.plan(Role::Client, 5).unwrap();
        let a = generate_step(&plan, 42, 0).unwrap();
        assert_eq!(a, generate_step(&plan, 42, 0).unwrap());
        let d = ping_data(&a);
        assert_eq!(d.len(), 50);
        assert_eq!(&d[6..8], &[0x25, 0x78]);
    }

    #[test]
    fn contradictory_scenario_is_a_configuration_error() {
        let sc = [
            ScenarioConstraint { component: "ping_frame".into(), require: "f.data.end = 3".into() },
        ];
        let m = AttackerModel::new(Vector::MaliciousClient, protocol::minip(), &protocol::minip().spec, Some(format_string_mutant()), &sc, None).unwrap();
        assert!(matches!(m.plan(Role::Client, 1), Err(AttackError::SolverUnsat { .. })));
    }

    #[test]
    fn server_vector_without_mutation_answers_with_pong() {
        let m = AttackerModel::new(Vector::MaliciousServer, protocol::minip(), &protocol::minip().spec, None, &[], None).unwrap();
        let plan = m.plan(Role::Server, 1).unwrap();
        let p = minip::decode(&generate_step(&plan, 1, 0).unwrap()).unwrap();
        assert!(matches!(&p.frames[..], [Frame::Pong(d), Frame::Timestamp(_)] if d == b"pong"));
    }

    #[test]
    fn bad_scenario_component_is_rejected() {
        let sc = [ScenarioConstraint { component: "nope".into(), require: "f.data.end = 3".into() }];
        assert!(matches!(
            AttackerModel::new(Vector::MaliciousClient, protocol::minip(), &protocol::minip().spec, None, &sc, None),
            Err(AttackError::Scenario { .. })
        ));
    }

    #[test]
    fn deleting_an_implied_requirement_is_possibly_equivalent() {
        let spec = &protocol::minip().spec;
        let del = mutation::apply(spec, &MutationOp::StatementDeleteOrAdd { component: "ping_frame".into(), statement: Statement::Delete { index: 1 } }).unwrap();
        let neg = mutation::apply(spec, &MutationOp::Negation { component: "ping_frame".into(), index: 0 }).unwrap();
        for (m, want) in [(del, Screening::PossiblyEquivalent), (neg, Screening::Distinct)] {
            let model = AttackerModel::new(Vector::MaliciousClient, protocol::minip(), &protocol::minip().spec, Some(m), &[], None).unwrap();
            assert_eq!(screen(&model.plan(Role::Client, 1).unwrap(), spec, 1, 16), want);
        }
    }

    #[test]
    fn policy_actions() {
        let ping = minip::encode(&minip::Packet::ping(0)).unwrap();
        let protocols: BTreeMap<String, &'static Protocol> = [("c".to_string(), protocol::minip()), ("s".to_string(), protocol::minip())].into();
        let names: BTreeSet<String> = ["c", "s", "m"].iter().map(|s| s.to_string()).collect();
        let mk = |action: Action, matcher: Option<Match>| {
            let policy = InterceptPolicy { matcher, from: None, action };
            let model = AttackerModel::new(Vector::Mitm, protocol::minip(), &protocol::minip().spec, None, &[], Some(policy)).unwrap();
            Mitm::new(&model, protocols.clone(), &names, 1)
        };

        let only_pong = Some(Match { kind: "packet".into(), require: "p.kinds.value(0) = 0x02".into() });
        let out = mk(Action::Drop, only_pong).unwrap().decide("c", "s", &ping);
        assert_eq!(out, vec![Forward { bytes: ping.clone(), to: "s".into(), extra_delay_ms: 0, effect: Effect::Pass }]);

        assert!(mk(Action::Drop, None).unwrap().decide("c", "s", &ping).is_empty());

        let out = mk(Action::Reflect { target: "m".into() }, None).unwrap().decide("c", "s", &ping);
        assert_eq!(out[0].to, "m");
        assert_eq!(out[0].effect, Effect::Reflect);
        assert!(matches!(mk(Action::Reflect { target: "x".into() }, None), Err(AttackError::UnknownReflectTarget(_))));

        let rw = Action::Modify { rewrites: vec![Rewrite { kind: "ping".into(), field: "data".into(), value: Literal::Bytes(b"%n".to_vec()) }] };
        let out = mk(rw, None).unwrap().decide("c", "s", &ping);
        assert_eq!(ping_data(&out[0].bytes), b"%n");
    }
}
