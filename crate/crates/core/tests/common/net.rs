//! Small topologies built in code.
#![allow(dead_code)]

use std::path::{Path, PathBuf};

use protomut::analysis::{analyze, AnalysisConfig, Finding};
use protomut::scenario::{Scenario, Sut};
use protomut::trace::{ClockMode, Trace};
use serde_json::json;

pub fn assets() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../assets")
}

pub fn shipped(name: &str) -> Scenario {
    Scenario::load(&assets().join("scenarios").join(format!("{name}.json"))).expect("shipped scenario loads")
}

/// A scenario in which a prober sends `packets`, 10 ms apart, to the SUT.
pub fn probe(packets: &[Vec<u8>], budget_ms: u64) -> Scenario {
    let sends: Vec<_> = packets.iter().enumerate().map(|(i, p)| json!({ "at_ms": i as u64 * 10, "to": "server", "hex": hex::encode(p) })).collect();
    let file = json!({
        "name": "probe",
        "budget_ms": budget_ms,
        "trials": 1,
        "topology": {
            "endpoints": [
                { "name": "prober", "role": "attacker", "node": { "type": "script", "protocol": "minip", "sends": sends } },
                { "name": "server", "role": "sut", "node": { "type": "sut" } }
            ]
        }
    });
    Scenario::from_json(&file.to_string(), None).expect("probe scenario is valid")
}

pub fn run(s: &Scenario, sut: &Sut, seed: u64) -> (Trace, Vec<Finding>) {
    let trace = s.run(sut, seed, 0, ClockMode::Virtual).expect("run");
    let findings = analyze(&trace, &s.analysis_spec(), &AnalysisConfig { loop_threshold: s.file.loop_threshold }).expect("complete");
    (trace, findings)
}
