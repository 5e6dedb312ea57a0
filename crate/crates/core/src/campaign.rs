//! Campaigns: scenarios and mutation sweeps run against a matrix of systems
//! under test, with reports.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::analysis::{analyze, classify, verdict, AnalysisConfig, Classification, Finding, FindingKind, Verdict};
use crate::attacker::{screen, Category, Screening};
use crate::mutation::{self, MutationKind, MutationOp};
use crate::scenario::{MutationRef, Scenario, ScenarioError, ScenarioFile, Sut, TopologyRef};
use crate::seed;
use crate::spec::ProtocolSpec;
use crate::trace::{ClockMode, Trace, TraceError};

/// Packets sampled when screening a mutant for equivalence.
const SCREEN_SAMPLES: u32 = 32;

fn d_limit() -> usize {
    12
}

/// A mutation sweep over a base scenario: either enumerated (`kinds`,
/// `limit`, `seed`) or an explicit list of ops.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MutationSweep {
    pub base: String,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub kinds: Vec<MutationKind>,
    #[serde(default = "d_limit")]
    pub limit: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub ops: Vec<MutationOp>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CampaignFile {
    /// Spec files checked before anything runs.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub specs: Vec<String>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub scenarios: Vec<String>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub mutations: Vec<MutationSweep>,
    pub suts: Vec<Sut>,
    /// Overrides every scenario's budget.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub budget_ms: Option<u64>,
    /// Overrides every scenario's trial count.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub trials: Option<u32>,
    #[serde(default)]
    pub seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub out: Option<String>,
}

/// Command-line overrides of campaign settings.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub budget_ms: Option<u64>,
    pub trials: Option<u32>,
    pub out: Option<PathBuf>,
    pub jobs: Option<usize>,
}

#[derive(Debug, thiserror::Error)]
pub enum CampaignError {
    #[error("{0}")]
    Config(String),
    #[error("{context}: {err}")]
    Scenario { context: String, err: ScenarioError },
    #[error("{path}: {err}")]
    Io { path: PathBuf, err: std::io::Error },
    #[error("trace {path}: {err}")]
    Trace { path: PathBuf, err: TraceError },
}

fn io(path: &Path) -> impl FnOnce(std::io::Error) -> CampaignError + '_ {
    move |err| CampaignError::Io { path: path.to_path_buf(), err }
}

/// File-name-safe form of an id.
pub fn slug(s: &str) -> String {
    let out: String = s.chars().map(|c| if c.is_ascii_alphanumeric() || c == '.' || c == '_' { c } else { '-' }).collect();
    out.trim_matches('-').to_string()
}

/// One column of the grid.
#[derive(Debug, Clone)]
pub struct Entry {
    pub scenario: Scenario,
    /// File the scenario was loaded from or written to; traces point here.
    pub file: PathBuf,
    pub mutation: Option<MutationOp>,
    pub screening: Option<Screening>,
}

#[derive(Debug, Clone)]
pub struct Campaign {
    pub file: CampaignFile,
    pub dir: PathBuf,
    pub entries: Vec<Entry>,
    /// Sweep mutants that could not be turned into a scenario, with why.
    pub skipped: Vec<(String, String)>,
    pub invalid_mutants: BTreeMap<MutationKind, usize>,
    pub out: PathBuf,
    pub jobs: Option<usize>,
}

fn load_scenario(path: &Path) -> Result<Scenario, CampaignError> {
    Scenario::load(path).map_err(|source| CampaignError::Scenario { context: path.display().to_string(), err: source })
}

/// Base scenario `base` with every relative reference made absolute and
/// `op` as its mutation.
fn mutant_file(base: &Scenario, base_path: &Path, name: String, op: &MutationOp, seed: u64) -> ScenarioFile {
    let dir = base_path.parent().unwrap_or(Path::new("."));
    let mut f = base.file.clone();
    f.name = name;
    f.spec = f.spec.map(|s| dir.join(s).display().to_string());
    f.topology = TopologyRef::Inline(base.topology.clone());
    f.mutation = Some(MutationRef { op: Some(op.clone()), seed: Some(seed), lineage: None });
    f
}

impl Campaign {
    pub fn load(path: &Path, ov: &Overrides) -> Result<Campaign, CampaignError> {
        let text = std::fs::read_to_string(path).map_err(io(path))?;
        let mut file: CampaignFile =
            serde_json::from_str(&text).map_err(|e| CampaignError::Config(format!("{}: {e}", path.display())))?;
        let dir = path.parent().unwrap_or(Path::new(".")).canonicalize().map_err(io(path))?;
        file.seed = ov.seed.unwrap_or(file.seed);
        file.budget_ms = ov.budget_ms.or(file.budget_ms);
        file.trials = ov.trials.or(file.trials);
        let out = ov.out.clone().unwrap_or_else(|| dir.join(file.out.as_deref().unwrap_or("out")));
        Campaign::build(file, dir, out, ov.jobs)
    }

    /// Loads and checks everything a campaign refers to. Nothing has run
    /// when this returns.
    pub fn build(file: CampaignFile, dir: PathBuf, out: PathBuf, jobs: Option<usize>) -> Result<Campaign, CampaignError> {
        let config = |m: String| Err(CampaignError::Config(m));
        if file.scenarios.is_empty() && file.mutations.is_empty() {
            return config("campaign needs at least one scenario or mutation sweep".into());
        }
        if file.suts.is_empty() {
            return config("campaign needs at least one system under test".into());
        }
        if file.trials == Some(0) {
            return config("trials must be at least 1".into());
        }
        if file.budget_ms == Some(0) {
            return config("budget_ms must be positive".into());
        }
        if jobs == Some(0) {
            return config("jobs must be at least 1".into());
        }
        for s in &file.suts {
            s.validate().map_err(CampaignError::Config)?;
        }
        for p in &file.specs {
            let path = dir.join(p);
            let text = std::fs::read_to_string(&path).map_err(io(&path))?;
            if let Err(errs) = ProtocolSpec::from_text(&text) {
                let msgs: Vec<String> = errs.iter().map(|e| e.to_string()).collect();
                return config(format!("{p}: {}", msgs.join("; ")));
            }
        }
        let apply = |mut s: Scenario| {
            s.file.budget_ms = file.budget_ms.unwrap_or(s.file.budget_ms);
            s.file.trials = file.trials.unwrap_or(s.file.trials);
            s
        };

        let mut entries = Vec::new();
        for p in &file.scenarios {
            let path = dir.join(p).canonicalize().map_err(|_| CampaignError::Scenario {
                context: p.clone(),
                err: ScenarioError::MissingScenario(dir.join(p)),
            })?;
            let scenario = apply(load_scenario(&path)?);
            entries.push(Entry { mutation: None, screening: None, file: path, scenario });
        }

        let mut skipped = Vec::new();
        let mut invalid_mutants = BTreeMap::new();
        let generated = out.join("scenarios");
        for sweep in &file.mutations {
            let base_path = dir.join(&sweep.base).canonicalize().map_err(|_| CampaignError::Scenario {
                context: sweep.base.clone(),
                err: ScenarioError::MissingScenario(dir.join(&sweep.base)),
            })?;
            let base = load_scenario(&base_path)?;
            if base.model.is_none() {
                return config(format!("mutation sweep base {} has no attack vector", sweep.base));
            }
            let ops: Vec<MutationOp> = if sweep.ops.is_empty() {
                let kinds = if sweep.kinds.is_empty() { MutationKind::ALL.to_vec() } else { sweep.kinds.clone() };
                let e = mutation::enumerate(&base.source, &kinds, sweep.seed, sweep.limit);
                for (k, n) in e.invalid {
                    *invalid_mutants.entry(k).or_insert(0) += n;
                }
                e.mutants.into_iter().map(|m| m.lineage.op).collect()
            } else {
                sweep.ops.clone()
            };
            for (i, op) in ops.iter().enumerate() {
                let name = format!("{}/{}-{i}", base.name(), op.kind().as_str());
                let f = mutant_file(&base, &base_path, name.clone(), op, sweep.seed);
                match Scenario::from_file(f.clone(), None) {
                    Ok(mut s) => {
                        let screening = s.plan().map(|plan| screen(plan, &s.source, seed::derive(&[name.as_bytes()]), SCREEN_SAMPLES));
                        let path = generated.join(format!("{}.json", slug(&name)));
                        s.path = Some(path.clone());
                        entries.push(Entry { scenario: apply(s), file: path, mutation: Some(op.clone()), screening });
                    }
                    // a mutant whose attack cannot be generated is reported, not run
                    Err(e) => skipped.push((name, e.to_string())),
                }
            }
        }
        if entries.is_empty() {
            return config("no runnable scenario: every mutant was skipped".into());
        }
        let mut names = std::collections::BTreeSet::new();
        for e in &entries {
            if !names.insert(e.scenario.name().to_string()) {
                return config(format!("duplicate scenario name `{}`", e.scenario.name()));
            }
        }
        Ok(Campaign { file, dir, entries, skipped, invalid_mutants, out, jobs })
    }

    /// Runs every (scenario, SUT) cell and writes traces and reports under
    /// the output directory.
    pub fn run(&self) -> Result<Report, CampaignError> {
        std::fs::create_dir_all(self.out.join("scenarios")).map_err(io(&self.out))?;
        for e in self.entries.iter().filter(|e| e.mutation.is_some()) {
            let text = serde_json::to_string_pretty(&e.scenario.file).expect("scenario files serialize") + "\n";
            std::fs::write(&e.file, text).map_err(io(&e.file))?;
        }
        let cells: Vec<(usize, usize)> =
            (0..self.entries.len()).flat_map(|i| (0..self.file.suts.len()).map(move |j| (i, j))).collect();
        let run = || cells.par_iter().map(|&(i, j)| self.run_cell(i, j)).collect::<Result<Vec<_>, _>>();
        let results = match self.jobs {
            Some(n) => rayon::ThreadPoolBuilder::new()
                .num_threads(n)
                .build()
                .map_err(|e| CampaignError::Config(format!("worker pool: {e}")))?
                .install(run)?,
            None => run()?,
        };
        let report = Report::assemble(self, results);
        report.write(&self.out)?;
        Ok(report)
    }

    fn run_cell(&self, i: usize, j: usize) -> Result<CellReport, CampaignError> {
        let entry = &self.entries[i];
        let sut = &self.file.suts[j];
        let s = &entry.scenario;
        let clock = if matches!(sut, Sut::External { .. }) { ClockMode::Real } else { ClockMode::Virtual };
        let spec = s.analysis_spec();
        let cfg = AnalysisConfig { loop_threshold: s.file.loop_threshold };
        let dir = self.out.join("traces").join(slug(s.name())).join(slug(&sut.id()));
        std::fs::create_dir_all(&dir).map_err(io(&dir))?;
        let mut trials = Vec::new();
        for t in 0..s.file.trials {
            let seed = seed::trial(self.file.seed, s.name(), &sut.id(), t);
            let context = || format!("{} × {} trial {t}", s.name(), sut.id());
            let trace = s.run(sut, seed, t, clock).map_err(|err| CampaignError::Scenario { context: context(), err })?;
            let findings = analyze(&trace, &spec, &cfg).map_err(|e| CampaignError::Config(format!("{}: {e}", context())))?;
            let path = dir.join(format!("trial-{t}.jsonl"));
            trace.write(&path).map_err(io(&path))?;
            let rel = path.strip_prefix(&self.out).unwrap_or(&path).display().to_string();
            trials.push(TrialReport { seed, trace: rel, findings });
        }
        let v = verdict(&trials.iter().map(|t| t.findings.clone()).collect::<Vec<_>>());
        Ok(CellReport { scenario: s.name().to_string(), sut: sut.id(), verdict: v, trials })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TrialReport {
    pub seed: u64,
    /// Trace file, relative to the output directory.
    pub trace: String,
    pub findings: Vec<Finding>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CellReport {
    pub scenario: String,
    pub sut: String,
    pub verdict: Verdict,
    pub trials: Vec<TrialReport>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioSummary {
    pub name: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mutation: Option<MutationOp>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub screening: Option<Screening>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub categories: Vec<Category>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub seed: u64,
    pub suts: Vec<String>,
    pub scenarios: Vec<ScenarioSummary>,
    pub cells: Vec<CellReport>,
    pub classification: BTreeMap<String, Classification>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub skipped: Vec<(String, String)>,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub invalid_mutants: BTreeMap<MutationKind, usize>,
}

impl Report {
    fn assemble(c: &Campaign, cells: Vec<CellReport>) -> Report {
        let suts: Vec<String> = c.file.suts.iter().map(Sut::id).collect();
        let classification = suts
            .iter()
            .map(|id| (id.clone(), classify(cells.iter().filter(|x| &x.sut == id).map(|x| &x.verdict))))
            .collect();
        let scenarios = c
            .entries
            .iter()
            .map(|e| ScenarioSummary {
                name: e.scenario.name().to_string(),
                mutation: e.mutation.clone(),
                screening: e.screening,
                categories: e.scenario.model.as_ref().map(|m| m.categories().into_iter().collect()).unwrap_or_default(),
            })
            .collect();
        Report {
            seed: c.file.seed,
            suts,
            scenarios,
            cells,
            classification,
            skipped: c.skipped.clone(),
            invalid_mutants: c.invalid_mutants.clone(),
        }
    }

    pub fn safe(&self) -> bool {
        self.classification.values().all(|c| *c == Classification::Safe)
    }

    pub fn cell(&self, scenario: &str, sut: &str) -> Option<&CellReport> {
        self.cells.iter().find(|c| c.scenario == scenario && c.sut == sut)
    }

    /// Text grid: one row per SUT, one column per scenario.
    pub fn grid(&self) -> String {
        let mut out = String::new();
        let width = self.suts.iter().map(|s| s.chars().count()).max().unwrap_or(0).max(3);
        let _ = write!(out, "{:width$}", "");
        for i in 0..self.scenarios.len() {
            let _ = write!(out, " {:>4}", format!("A{}", i + 1));
        }
        let _ = writeln!(out, "  classification");
        for sut in &self.suts {
            let _ = write!(out, "{sut:width$}");
            for s in &self.scenarios {
                let sym = self.cell(&s.name, sut).map_or("?", |c| c.verdict.aggregate.symbol());
                let _ = write!(out, " {sym:>4}");
            }
            let class = match self.classification[sut] {
                Classification::Safe => "safe",
                Classification::Unsafe => "unsafe",
            };
            let _ = writeln!(out, "  {class}");
        }
        let _ = writeln!(out);
        for (i, s) in self.scenarios.iter().enumerate() {
            let flag = if s.screening == Some(Screening::PossiblyEquivalent) { "  (possibly equivalent mutant)" } else { "" };
            let _ = writeln!(out, "A{:<4} {}{flag}", i + 1, s.name);
        }
        let _ = writeln!(out, "\n✓ all trials failed (vulnerable)   ✗ all trials passed (safe)   ∼ mixed");
        for (name, why) in &self.skipped {
            let _ = writeln!(out, "skipped {name}: {why}");
        }
        out
    }

    pub fn write(&self, dir: &Path) -> Result<(), CampaignError> {
        let json = dir.join("report.json");
        std::fs::write(&json, serde_json::to_string_pretty(self).expect("reports serialize") + "\n").map_err(io(&json))?;
        let txt = dir.join("report.txt");
        std::fs::write(&txt, self.grid()).map_err(io(&txt))
    }
}

/// Outcome of re-running a recorded trial.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ReplayStatus {
    /// A finding of an originally found kind showed up again.
    Recurs,
    /// None of the original findings came back.
    Mitigated,
    /// The original trace had no findings to look for.
    NothingToReplay,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReplayOutcome {
    pub status: ReplayStatus,
    pub sut: String,
    pub original: Vec<FindingKind>,
    pub findings: Vec<Finding>,
}

/// Re-runs the trial recorded in `trace_path` in virtual mode, against the
/// recorded SUT or `sut`, and compares findings.
pub fn replay(trace_path: &Path, sut: Option<Sut>) -> Result<ReplayOutcome, CampaignError> {
    let original = Trace::read(trace_path).map_err(|err| CampaignError::Trace { path: trace_path.to_path_buf(), err })?;
    let h = &original.header;
    let Some(sp) = &h.scenario_path else {
        return Err(CampaignError::Scenario {
            context: trace_path.display().to_string(),
            err: ScenarioError::MissingScenario(PathBuf::from(format!("<{}: no scenario path recorded>", h.scenario))),
        });
    };
    let mut scenario = load_scenario(Path::new(sp))?;
    scenario.file.budget_ms = h.budget_ms;
    let sut = match sut {
        Some(s) => s,
        None => Sut::Builtin(serde_json::from_value(serde_json::Value::String(h.sut.clone())).map_err(|_| {
            CampaignError::Config(format!("recorded SUT `{}` is not built in; name one to replay against", h.sut))
        })?),
    };
    let spec = scenario.analysis_spec();
    let cfg = AnalysisConfig { loop_threshold: scenario.file.loop_threshold };
    let bad = |e: crate::analysis::AnalysisError| CampaignError::Config(format!("{}: {e}", trace_path.display()));
    let before = analyze(&original, &spec, &cfg).map_err(bad)?;
    let trace = scenario
        .run(&sut, h.seed, h.trial, ClockMode::Virtual)
        .map_err(|err| CampaignError::Scenario { context: sp.clone(), err })?;
    let after = analyze(&trace, &spec, &cfg).map_err(bad)?;
    let recurs = before.iter().any(|b| after.iter().any(|a| a.kind == b.kind && (b.step.is_none() || a.step == b.step)));
    let status = match (before.is_empty(), recurs) {
        (true, _) => ReplayStatus::NothingToReplay,
        (false, true) => ReplayStatus::Recurs,
        (false, false) => ReplayStatus::Mitigated,
    };
    let mut original: Vec<FindingKind> = before.iter().map(|f| f.kind).collect();
    original.dedup();
    Ok(ReplayOutcome { status, sut: sut.id(), original, findings: after })
}
