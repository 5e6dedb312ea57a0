//! End-to-end acceptance checks, one line per criterion.

mod common;

use std::collections::BTreeSet;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::{Duration, Instant};

use protomut::analysis::{analyze, classify, verdict, Aggregate, AnalysisConfig, Classification, Finding, FindingKind};
use protomut::campaign::{Campaign, Overrides, Report};
use protomut::minip::{self, EndpointConfig};
use protomut::mutation::{self, MutationKind};
use protomut::netsim::{spawn_udp_endpoint, Variant};
use protomut::protocol;
use protomut::scenario::{Scenario, Sut};
use protomut::solver::{self, Domain};
use protomut::spec::{evaluate, parse_predicate, ProtocolSpec};
use protomut::trace::{ClockMode, EventKind, Trace};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

type Outcome = Result<String, String>;

fn assets() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../assets")
}

fn scenario(name: &str) -> Scenario {
    Scenario::load(&assets().join("scenarios").join(format!("{name}.json"))).expect("shipped scenario loads")
}

fn findings(s: &Scenario, sut: &Sut, seed: u64) -> (Trace, Vec<Finding>) {
    let trace = s.run(sut, seed, 0, ClockMode::Virtual).expect("run");
    let f = analyze(&trace, &s.analysis_spec(), &AnalysisConfig { loop_threshold: s.file.loop_threshold }).expect("complete trace");
    (trace, f)
}

fn campaign(name: &str, out: &Path, ov: Overrides) -> Report {
    let ov = Overrides { out: Some(out.to_path_buf()), ..ov };
    Campaign::load(&assets().join("campaigns").join(format!("{name}.json")), &ov).expect("campaign loads").run().expect("campaign runs")
}

fn ensure(cond: bool, msg: impl Into<String>) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg.into())
    }
}

fn c1_conformance_baseline() -> Outcome {
    let s = scenario("conformance");
    let t0 = Instant::now();
    let (trace, f) = findings(&s, &Sut::Builtin(Variant::Conforming), 1);
    let took = t0.elapsed();
    let pongs = trace.events.iter().filter(|e| e.kind == EventKind::Deliver && e.endpoint == "client").count();
    ensure(f.is_empty(), format!("{} findings, first: {:?}", f.len(), f.first()))?;
    ensure(pongs == 100, format!("{pongs} PONGs delivered, want 100"))?;
    ensure(took < Duration::from_secs(1), format!("took {took:?}"))?;
    Ok(format!("100 rounds, 0 findings, {took:?}"))
}

fn c2_format_string_discovery() -> Outcome {
    let dir = tempfile::tempdir().unwrap();
    let t0 = Instant::now();
    let r = campaign("format_string", dir.path(), Overrides::default());
    let took = t0.elapsed();
    let vf = r.cell("format-string", "v_fmt").ok_or("no v_fmt cell")?;
    let ok = r.cell("format-string", "conforming").ok_or("no conforming cell")?;
    ensure(vf.trials.len() == 3, "want 3 trials")?;
    ensure(vf.verdict.aggregate == Aggregate::AllFail, format!("v_fmt verdict {:?}", vf.verdict.aggregate))?;
    for t in &vf.trials {
        let crash = t.findings.iter().find(|f| f.kind == FindingKind::Crash).ok_or("trial without a crash")?;
        let payload = crash.payload.as_deref().ok_or("crash without a causal payload")?;
        ensure(payload.windows(2).any(|w| w == [0x25, 0x6e]), format!("payload {} lacks 25 6e", hex::encode(payload)))?;
    }
    ensure(ok.verdict.aggregate == Aggregate::AllPass, format!("conforming verdict {:?}", ok.verdict.aggregate))?;
    ensure(took < Duration::from_secs(10), format!("took {took:?}"))?;
    Ok(format!("v_fmt {} conforming {}, {took:?}", vf.verdict.aggregate.symbol(), ok.verdict.aggregate.symbol()))
}

fn c3_scenario_replay() -> Outcome {
    let mut traces = Vec::new();
    for _ in 0..5 {
        let dir = tempfile::tempdir().unwrap();
        let r = campaign("overflow_replay", dir.path(), Overrides::default());
        let cell = r.cell("overflow-replay", "v_ovf").ok_or("no v_ovf cell")?;
        ensure(cell.verdict.aggregate == Aggregate::AllFail, format!("verdict {:?}", cell.verdict.aggregate))?;
        let crash = cell.trials[0].findings.iter().find(|f| f.kind == FindingKind::Crash).ok_or("no crash")?;
        let p = crash.payload.as_deref().ok_or("no payload")?;
        let d = minip::decode(p).map_err(|e| e.to_string())?;
        let minip::Frame::Ping(data) = &d.frames[0] else { return Err("payload is not a ping".into()) };
        ensure(data.len() == 50 && data[6..8] == [0x25, 0x78], format!("payload data {}", hex::encode(data)))?;
        let files: Vec<Vec<u8>> = cell.trials.iter().map(|t| std::fs::read(dir.path().join(&t.trace)).unwrap()).collect();
        traces.push(files);
    }
    ensure(traces.windows(2).all(|w| w[0] == w[1]), "trace files differ between invocations")?;
    Ok("5 invocations, byte-identical traces, crash on the 50-byte payload".into())
}

fn c4_verdict_semantics() -> Outcome {
    let f = || Finding {
        kind: FindingKind::Crash,
        endpoint: "server".into(),
        events: vec![3],
        time_ms: 1,
        detail: "synthetic".into(),
        payload: None,
        step: None,
        seed: 0,
        occurrences: 1,
    };
    let pass = verdict(&[vec![], vec![], vec![]]);
    let fail = verdict(&[vec![f()], vec![f()], vec![f()]]);
    let mixed = verdict(&[vec![], vec![f()], vec![]]);
    let symbols = [pass.aggregate.symbol(), fail.aggregate.symbol(), mixed.aggregate.symbol()];
    ensure(symbols == ["✗", "✓", "∼"], format!("symbols {symbols:?}"))?;
    ensure(classify([&pass]) == Classification::Safe, "all-pass is not safe")?;
    ensure(classify([&pass, &fail]) == Classification::Unsafe, "all-fail cell classified safe")?;
    ensure(classify([&pass, &mixed]) == Classification::Unsafe, "mixed cell classified safe")?;
    Ok("✗ ✓ ∼ and safe iff every cell is ✗".into())
}

/// Independent scan for the format-string needle.
fn needle_oracle(data: &[u8]) -> bool {
    data.len() < 100_000 && (0..data.len().saturating_sub(8)).any(|i| data[i..i + 4] == [0x25, 0x78, 0x25, 0x6e])
}

fn c5_solver_soundness() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(0x5eed);
    let domains = common::domains();
    let (mut sat, mut unsound) = (0, 0);
    for i in 0..1000u64 {
        let set = common::constraint_set(&mut rng);
        if let Ok(a) = solver::solve(&set, &domains, i, solver::DEFAULT_MAX_TRIES) {
            sat += 1;
            let s = a.into_subject("frame");
            if !set.iter().all(|p| evaluate(p, &s) == Ok(true)) {
                unsound += 1;
            }
        }
    }
    ensure(unsound == 0, format!("{unsound} unsound assignments"))?;
    let needle = parse_predicate(mutation::TEMPLATES[0].1).unwrap();
    let samples = solver::sample_many(&[needle], &[Domain::bytes("data", solver::DEFAULT_MAX_LEN)], 2, 100).map_err(|e| e.to_string())?;
    let mut lengths = BTreeSet::new();
    for a in samples {
        let a = a.map_err(|e| format!("format-string slot unsatisfied: {e}"))?;
        let d = a.bytes("data").ok_or("no data")?;
        ensure(needle_oracle(d), format!("sample fails the scan oracle: {}", hex::encode(d)))?;
        lengths.insert(d.len());
    }
    ensure(lengths.len() >= 25, format!("{} distinct lengths", lengths.len()))?;
    Ok(format!("1000 sets ({sat} solved), 0 unsound; format-string 100/100 with {} lengths", lengths.len()))
}

fn c6_mutation_validity() -> Outcome {
    let spec = &protocol::minip().spec;
    let e = mutation::enumerate(spec, &MutationKind::ALL, 6, usize::MAX);
    let kinds: BTreeSet<MutationKind> = e.mutants.iter().map(|m| m.lineage.op.kind()).collect();
    ensure(kinds.len() == 6, format!("only kinds {kinds:?} produced mutants"))?;
    for m in &e.mutants {
        let changes = mutation::diff(spec, &m.spec);
        ensure(changes.len() == 1, format!("{}: {} changes", m.id, changes.len()))?;
        let back = ProtocolSpec::from_text(&m.text()).map_err(|e| format!("{}: reparse failed: {e:?}", m.id))?;
        ensure(back == m.spec, format!("{}: text round trip differs", m.id))?;
    }
    let invalid: usize = e.invalid.values().sum();
    ensure(invalid > 0, "no invalid mutant was filtered")?;
    let per_kind: Vec<String> = e.invalid.iter().map(|(k, n)| format!("{}={n}", k.as_str())).collect();
    Ok(format!("{} mutants valid; invalid filtered: {}", e.mutants.len(), per_kind.join(" ")))
}

fn c7_cross_protocol_reflection() -> Outcome {
    let ovf = Sut::Builtin(Variant::VOvf);
    let (_, with) = findings(&scenario("reflect"), &ovf, 1);
    let (_, without) = findings(&scenario("reflect_without_mitm"), &ovf, 1);
    ensure(with.iter().any(|f| f.kind == FindingKind::Crash && f.endpoint == "server"), format!("findings {with:?}"))?;
    ensure(without.is_empty(), format!("without the mitm: {without:?}"))?;
    Ok("reflected hello overflows the server; no mitm, no findings".into())
}

fn c8_loop_detection() -> Outcome {
    let lp = Sut::Builtin(Variant::VLoop);
    let s = scenario("malformed_once");
    let (_, bad) = findings(&s, &lp, 1);
    let l = bad.iter().find(|f| f.kind == FindingKind::LoopDetected).ok_or_else(|| format!("no loop finding in {bad:?}"))?;
    ensure(l.time_ms <= s.file.budget_ms, "loop found after the budget")?;
    ensure(l.payload.as_deref() == Some(&minip::CLOSE[..]), "loop payload is not the close response")?;
    let (_, good) = findings(&scenario("ping_pong"), &lp, 1);
    ensure(good.is_empty(), format!("conforming traffic: {good:?}"))?;
    Ok(format!("loop found at {} ms; conforming traffic clean", l.time_ms))
}

fn c9_multipoint() -> Outcome {
    let (trace, f) = findings(&scenario("multipoint"), &Sut::Builtin(Variant::Conforming), 1);
    ensure(f.is_empty(), format!("findings {f:?}"))?;
    let peers: Vec<&str> =
        trace.events.iter().filter(|e| e.kind == EventKind::Send && e.endpoint == "server").filter_map(|e| e.peer.as_deref()).collect();
    let conns: BTreeSet<&str> = trace.events.iter().filter(|e| e.kind == EventKind::Send && e.endpoint == "server").filter_map(|e| e.detail.as_deref()).collect();
    ensure(conns.len() == 3, format!("server connections {conns:?}"))?;
    let switches = peers.windows(2).filter(|w| w[0] != w[1]).count();
    ensure(switches >= 6, format!("responses barely interleave: {peers:?}"))?;
    Ok(format!("3 clients, 0 findings, {} responses with {switches} peer switches", peers.len()))
}

fn c10_external_parity() -> Outcome {
    let ep = spawn_udp_endpoint("server", Box::new(minip::Server::new(EndpointConfig::server(Variant::Conforming)))).map_err(|e| e.to_string())?;
    let external = Sut::External { external: ep.addr().to_string(), label: Some("udp-conforming".into()) };
    let local = Sut::Builtin(Variant::Conforming);
    let mut lines = Vec::new();
    for name in ["conformance", "format_string", "overflow_replay"] {
        let s = scenario(name);
        let cfg = AnalysisConfig { loop_threshold: s.file.loop_threshold };
        let spec = s.analysis_spec();
        let run = |sut: &Sut, clock| -> Result<Vec<Vec<Finding>>, String> {
            (0..s.file.trials)
                .map(|t| {
                    let trace = s.run(sut, 40 + u64::from(t), t, clock).map_err(|e| e.to_string())?;
                    analyze(&trace, &spec, &cfg).map_err(|e| e.to_string())
                })
                .collect()
        };
        let a = verdict(&run(&local, ClockMode::Virtual)?);
        let b = verdict(&run(&external, ClockMode::Real)?);
        ensure(a == b, format!("{name}: in-process {a:?} vs udp {b:?}"))?;
        lines.push(format!("{name} {}", a.aggregate.symbol()));
    }
    Ok(format!("identical verdicts: {}", lines.join(", ")))
}

fn c11_determinism() -> Outcome {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    campaign("reference_suts", a.path(), Overrides { seed: Some(99), jobs: Some(1), ..Default::default() });
    campaign("reference_suts", b.path(), Overrides { seed: Some(99), jobs: Some(4), ..Default::default() });
    let files = |root: &Path| -> Vec<(PathBuf, Vec<u8>)> {
        let mut out = Vec::new();
        let mut stack = vec![root.to_path_buf()];
        while let Some(d) = stack.pop() {
            for e in std::fs::read_dir(&d).unwrap() {
                let p = e.unwrap().path();
                if p.is_dir() {
                    stack.push(p);
                } else {
                    out.push((p.strip_prefix(root).unwrap().to_path_buf(), std::fs::read(&p).unwrap()));
                }
            }
        }
        out.sort();
        out
    };
    let (fa, fb) = (files(a.path()), files(b.path()));
    ensure(fa.len() > 2, "no output files")?;
    let names = |f: &[(PathBuf, Vec<u8>)]| f.iter().map(|(p, _)| p.clone()).collect::<Vec<_>>();
    ensure(names(&fa) == names(&fb), "different file sets")?;
    for ((p, x), (_, y)) in fa.iter().zip(&fb) {
        ensure(x == y, format!("{} differs", p.display()))?;
    }
    Ok(format!("{} files byte-identical across two runs", fa.len()))
}

fn main() -> ExitCode {
    let criteria: [(&str, fn() -> Outcome); 11] = [
        ("conformance baseline", c1_conformance_baseline),
        ("format-string discovery", c2_format_string_discovery),
        ("scenario replay", c3_scenario_replay),
        ("verdict semantics", c4_verdict_semantics),
        ("solver soundness", c5_solver_soundness),
        ("mutation validity", c6_mutation_validity),
        ("cross-protocol reflection", c7_cross_protocol_reflection),
        ("loop detection", c8_loop_detection),
        ("multipoint", c9_multipoint),
        ("external attachment parity", c10_external_parity),
        ("determinism", c11_determinism),
    ];
    let mut failed = 0;
    for (i, (name, check)) in criteria.iter().enumerate() {
        let outcome = catch_unwind(AssertUnwindSafe(check)).unwrap_or_else(|_| Err("panicked".into()));
        match outcome {
            Ok(detail) => println!("PASS criterion {:>2} {name}: {detail}", i + 1),
            Err(why) => {
                failed += 1;
                println!("FAIL criterion {:>2} {name}: {why}", i + 1);
            }
        }
    }
    println!("acceptance: {} passed, {failed} failed", criteria.len() - failed);
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
