//! Scenario files and single runs.
//!
//! A scenario binds an attacker model to a topology. The topology's `sut`
//! placeholder is filled per run with the system under test, its `attacker`
//! placeholders with attacker nodes and its `mitm` endpoints with the model's
//! intercept policy.

use std::collections::{BTreeMap, BTreeSet};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::attacker::{AttackError, AttackerModel, AttackerNode, Category, InterceptPolicy, Mitm, Plan, ScenarioConstraint, Vector};
use crate::minip::{self, EndpointConfig};
use crate::mutation::{self, Lineage, MutationError, MutationOp};
use crate::netsim::{self, Attached, EndpointRole, Interceptor, NetError, NodeSpec, RunSetup, Topology, Variant};
use crate::protocol::{self, Protocol, Role};
use crate::seed;
use crate::spec::{compose, ProtocolSpec, SpecError};
use crate::trace::{ClockMode, EndpointInfo, Trace, TraceHeader};

pub const DEFAULT_BUDGET_MS: u64 = 150_000;
pub const DEFAULT_TRIALS: u32 = 3;
pub const DEFAULT_LOOP_THRESHOLD: usize = 10;

/// Mutation applied to the scenario's spec: an inline op or a lineage
/// sidecar file.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MutationRef {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub op: Option<MutationOp>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lineage: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum TopologyRef {
    Path(String),
    Inline(Topology),
}

fn d_protocol() -> String {
    "minip".into()
}
fn d_budget() -> u64 {
    DEFAULT_BUDGET_MS
}
fn d_trials() -> u32 {
    DEFAULT_TRIALS
}
fn d_steps() -> u32 {
    5
}
fn d_interval() -> u64 {
    100
}
fn d_loop() -> usize {
    DEFAULT_LOOP_THRESHOLD
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioFile {
    pub name: String,
    /// Attack vector; a scenario without one is a plain conformance run.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub vector: Option<Vector>,
    #[serde(default = "d_protocol")]
    pub protocol: String,
    /// Spec file; the shipped spec of `protocol` when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub spec: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mutation: Option<MutationRef>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub scenario: Vec<ScenarioConstraint>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub policy: Option<InterceptPolicy>,
    pub topology: TopologyRef,
    #[serde(default = "d_budget")]
    pub budget_ms: u64,
    #[serde(default = "d_trials")]
    pub trials: u32,
    #[serde(default)]
    pub seed: u64,
    /// Packets a malicious client sends.
    #[serde(default = "d_steps")]
    pub steps: u32,
    #[serde(default = "d_interval")]
    pub step_interval_ms: u64,
    #[serde(default = "d_loop")]
    pub loop_threshold: usize,
    #[serde(default, skip_serializing_if = "BTreeSet::is_empty")]
    pub tags: BTreeSet<Category>,
}

#[derive(Debug, thiserror::Error)]
pub enum ScenarioError {
    #[error("scenario file {0} not found")]
    MissingScenario(PathBuf),
    #[error("{path}: {err}")]
    Io { path: PathBuf, err: std::io::Error },
    #[error("malformed scenario: {0}")]
    Parse(String),
    #[error("invalid scenario: {0}")]
    Invalid(String),
    #[error("spec: {}", .0.iter().map(|e| e.to_string()).collect::<Vec<_>>().join("; "))]
    Spec(Vec<SpecError>),
    #[error("mutation: {0}")]
    Mutation(#[from] MutationError),
    #[error(transparent)]
    Attack(#[from] AttackError),
    #[error(transparent)]
    Net(#[from] NetError),
}

/// System under test filling a topology's `sut` placeholder.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Sut {
    Builtin(Variant),
    Custom {
        variant: Variant,
        buffer_cap: usize,
    },
    External {
        external: String,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        label: Option<String>,
    },
}

impl Sut {
    pub fn id(&self) -> String {
        match self {
            Sut::Builtin(v) => v.as_str().to_string(),
            Sut::Custom { variant, buffer_cap } => format!("{}(cap={buffer_cap})", variant.as_str()),
            Sut::External { label: Some(l), .. } => l.clone(),
            Sut::External { external, .. } => format!("udp:{external}"),
        }
    }

    pub fn validate(&self) -> Result<(), String> {
        match self {
            Sut::Builtin(v) => EndpointConfig::server(*v).validate(),
            Sut::Custom { variant, buffer_cap } => EndpointConfig { buffer_cap: *buffer_cap, ..EndpointConfig::server(*variant) }.validate(),
            Sut::External { external, .. } => {
                external.parse::<std::net::SocketAddr>().map(|_| ()).map_err(|e| format!("external address `{external}`: {e}"))
            }
        }
    }
}

#[derive(Debug, Clone)]
pub struct Scenario {
    pub file: ScenarioFile,
    pub path: Option<PathBuf>,
    /// The unmutated spec traffic is judged against.
    pub source: ProtocolSpec,
    pub model: Option<AttackerModel>,
    pub topology: Topology,
    plans: BTreeMap<Role, Plan>,
}

fn read(path: &Path) -> Result<String, ScenarioError> {
    std::fs::read_to_string(path).map_err(|err| ScenarioError::Io { path: path.to_path_buf(), err })
}

impl Scenario {
    pub fn load(path: &Path) -> Result<Scenario, ScenarioError> {
        if !path.exists() {
            return Err(ScenarioError::MissingScenario(path.to_path_buf()));
        }
        let text = read(path)?;
        let mut s = Scenario::from_json(&text, path.parent())?;
        s.path = Some(path.to_path_buf());
        Ok(s)
    }

    /// Parses and checks a scenario. Relative file references resolve
    /// against `base`.
    pub fn from_json(text: &str, base: Option<&Path>) -> Result<Scenario, ScenarioError> {
        let file: ScenarioFile = serde_json::from_str(text).map_err(|e| ScenarioError::Parse(e.to_string()))?;
        Scenario::from_file(file, base)
    }

    pub fn from_file(file: ScenarioFile, base: Option<&Path>) -> Result<Scenario, ScenarioError> {
        let resolve = |p: &str| base.map_or_else(|| PathBuf::from(p), |b| b.join(p));
        let invalid = |m: String| Err(ScenarioError::Invalid(m));
        if file.budget_ms == 0 {
            return invalid("budget_ms must be positive".into());
        }
        if file.trials == 0 {
            return invalid("trials must be at least 1".into());
        }
        if file.loop_threshold < 2 {
            return invalid("loop_threshold must be at least 2".into());
        }
        let Some(proto) = protocol::by_name(&file.protocol) else {
            return invalid(format!("unknown protocol `{}`", file.protocol));
        };
        let source = match &file.spec {
            Some(p) => {
                let spec = ProtocolSpec::from_text(&read(&resolve(p))?).map_err(ScenarioError::Spec)?;
                if spec.name != file.protocol {
                    return invalid(format!("spec `{}` does not describe protocol `{}`", spec.name, file.protocol));
                }
                spec
            }
            None => proto.spec.clone(),
        };
        let mutant = match &file.mutation {
            None => None,
            Some(MutationRef { op: Some(op), seed, lineage: None }) => Some(mutation::apply_seeded(&source, op, *seed)?),
            Some(MutationRef { op: None, seed: None, lineage: Some(l) }) => {
                let lin: Lineage = serde_json::from_str(&read(&resolve(l))?).map_err(|e| ScenarioError::Parse(format!("lineage: {e}")))?;
                if lin.source_id != mutation::spec_id(&source) {
                    return invalid(format!("lineage {l} was made from a different spec"));
                }
                Some(mutation::apply_seeded(&source, &lin.op, lin.seed)?)
            }
            Some(_) => return invalid("mutation needs exactly one of `op` (with optional `seed`) or `lineage`".into()),
        };
        let model = match file.vector {
            Some(v) => {
                let mut m = AttackerModel::new(v, proto, &source, mutant, &file.scenario, file.policy.clone())?;
                m.tags = file.tags.clone();
                Some(m)
            }
            None if mutant.is_some() || !file.scenario.is_empty() || file.policy.is_some() => {
                return invalid("mutation, scenario constraints and policy need an attack vector".into());
            }
            None => None,
        };
        let topology = match &file.topology {
            TopologyRef::Inline(t) => t.clone(),
            TopologyRef::Path(p) => {
                serde_json::from_str(&read(&resolve(p))?).map_err(|e| ScenarioError::Parse(format!("topology {p}: {e}")))?
            }
        };
        topology.validate()?;
        let count = |f: fn(&NodeSpec) -> bool| topology.endpoints.iter().filter(|e| f(&e.node)).count();
        if count(|n| matches!(n, NodeSpec::Sut)) != 1 {
            return invalid("topology needs exactly one `sut` endpoint".into());
        }
        let attackers = count(|n| matches!(n, NodeSpec::Attacker { .. }));
        match file.vector {
            None | Some(Vector::Mitm) if attackers > 0 => return invalid("only client and server vectors have attacker endpoints".into()),
            Some(Vector::MaliciousClient | Vector::MaliciousServer) if attackers == 0 => {
                return invalid("the topology has no attacker endpoint".into());
            }
            _ => {}
        }
        for e in &topology.endpoints {
            match &e.node {
                NodeSpec::Attacker { peer: None } if file.vector == Some(Vector::MaliciousClient) => {
                    return invalid(format!("malicious client `{}` needs a peer", e.name));
                }
                NodeSpec::Mitm if file.policy.is_none() => return invalid(format!("mitm endpoint `{}` but no policy", e.name)),
                _ => {}
            }
        }
        let mut plans = BTreeMap::new();
        if let Some((m, role)) = model.as_ref().zip(file.vector.and_then(|v| v.role())) {
            plans.insert(role, m.plan(role, file.seed)?);
        }
        let s = Scenario { file, path: None, source, model, topology, plans };
        s.interceptors(0)?;
        Ok(s)
    }

    pub fn name(&self) -> &str {
        &self.file.name
    }

    pub fn plan(&self) -> Option<&Plan> {
        self.file.vector.and_then(|v| v.role()).and_then(|r| self.plans.get(&r))
    }

    /// Protocol spoken by every endpoint.
    pub fn protocols(&self) -> BTreeMap<String, &'static Protocol> {
        self.topology
            .endpoints
            .iter()
            .filter_map(|e| {
                let name = match &e.node {
                    NodeSpec::Sut => "minip",
                    NodeSpec::Attacker { .. } | NodeSpec::Mitm => &self.file.protocol,
                    n => netsim::node_protocol(n)?,
                };
                Some((e.name.clone(), protocol::by_name(name)?))
            })
            .collect()
    }

    /// Spec traffic is judged against: the scenario's source spec, composed
    /// with the shipped spec of every other protocol in the topology.
    pub fn analysis_spec(&self) -> ProtocolSpec {
        let mut others: BTreeSet<&str> = self.protocols().values().map(|p| p.name()).collect();
        others.remove(self.source.name.as_str());
        others.into_iter().fold(self.source.clone(), |acc, name| {
            compose(&acc, &protocol::by_name(name).expect("registered").spec, &[]).expect("shipped protocols compose")
        })
    }

    fn interceptors(&self, seed: u64) -> Result<Vec<(String, Box<dyn Interceptor>)>, ScenarioError> {
        let names: BTreeSet<String> = self.topology.endpoints.iter().map(|e| e.name.clone()).collect();
        let mut out: Vec<(String, Box<dyn Interceptor>)> = Vec::new();
        for e in self.topology.endpoints.iter().filter(|e| matches!(e.node, NodeSpec::Mitm)) {
            let model = self.model.as_ref().ok_or(AttackError::MissingPolicy)?;
            let m = Mitm::new(model, self.protocols(), &names, seed)?;
            out.push((e.name.clone(), Box::new(m)));
        }
        Ok(out)
    }

    /// Assembles the run inputs for one trial.
    pub fn setup(&self, sut: &Sut, seed: u64, trial: u32, clock: ClockMode) -> Result<RunSetup, ScenarioError> {
        sut.validate().map_err(ScenarioError::Invalid)?;
        let protocols = self.protocols();
        let mut endpoints = Vec::new();
        for e in &self.topology.endpoints {
            let mut a = Attached {
                name: e.name.clone(),
                role: e.role,
                protocol: protocols.get(&e.name).map(|p| p.name().to_string()),
                node: None,
                external: None,
            };
            match (&e.node, sut) {
                (NodeSpec::Sut, Sut::External { external, .. }) => a.external = Some(external.clone()),
                (NodeSpec::Sut, Sut::Builtin(v)) => a.node = Some(Box::new(minip::Server::new(EndpointConfig::server(*v)))),
                (NodeSpec::Sut, Sut::Custom { variant, buffer_cap }) => {
                    let cfg = EndpointConfig { buffer_cap: *buffer_cap, ..EndpointConfig::server(*variant) };
                    a.node = Some(Box::new(minip::Server::new(cfg)));
                }
                (NodeSpec::Attacker { peer }, _) => {
                    let plan = self.plan().expect("client and server vectors have a plan").clone();
                    let node_seed = seed::derive(&[&seed.to_be_bytes(), e.name.as_bytes()]);
                    let f = &self.file;
                    a.node = Some(Box::new(AttackerNode::new(plan, f.vector.expect("attackers imply a vector"), peer.clone(), f.steps, f.step_interval_ms, node_seed)));
                }
                (NodeSpec::External { addr, .. }, _) => a.external = Some(addr.clone()),
                (n, _) => a.node = netsim::build_node(n),
            }
            endpoints.push(a);
        }
        let header = TraceHeader {
            scenario: self.file.name.clone(),
            scenario_path: self.path.as_ref().map(|p| p.display().to_string()),
            sut: sut.id(),
            trial,
            seed,
            clock,
            budget_ms: self.file.budget_ms,
            deterministic: clock == ClockMode::Virtual,
            endpoints: self
                .topology
                .endpoints
                .iter()
                .map(|e| EndpointInfo {
                    name: e.name.clone(),
                    role: e.role.as_str().to_string(),
                    protocol: protocols.get(&e.name).map(|p| p.name().to_string()),
                })
                .collect(),
        };
        Ok(RunSetup { topology: self.topology.clone(), endpoints, interceptors: self.interceptors(seed)?, header })
    }

    /// One run of the scenario against `sut`.
    pub fn run(&self, sut: &Sut, seed: u64, trial: u32, clock: ClockMode) -> Result<Trace, ScenarioError> {
        let setup = self.setup(sut, seed, trial, clock)?;
        Ok(match clock {
            ClockMode::Virtual => netsim::run_virtual(setup, seed)?,
            ClockMode::Real => netsim::run_real(setup, seed)?,
        })
    }
}

/// Role of a topology endpoint as recorded in trace headers.
pub fn is_adversary_role(role: &str) -> bool {
    role == EndpointRole::Attacker.as_str() || role == EndpointRole::Mitm.as_str()
}
