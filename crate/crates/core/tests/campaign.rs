mod common;

use std::path::{Path, PathBuf};

use common::net::assets;
use protomut::analysis::{Aggregate, Classification};
use protomut::campaign::{replay, Campaign, CampaignError, Overrides, ReplayStatus};
use protomut::netsim::Variant;
use protomut::scenario::{ScenarioError, Sut};
use serde_json::json;

fn scenario(name: &str) -> String {
    assets().join("scenarios").join(format!("{name}.json")).canonicalize().unwrap().display().to_string()
}

fn write_campaign(dir: &Path, body: serde_json::Value) -> PathBuf {
    let path = dir.join("campaign.json");
    std::fs::write(&path, body.to_string()).unwrap();
    path
}

fn load(dir: &Path, body: serde_json::Value) -> Result<Campaign, CampaignError> {
    let ov = Overrides { out: Some(dir.join("out")), ..Overrides::default() };
    Campaign::load(&write_campaign(dir, body), &ov)
}

#[test]
fn malformed_campaigns_are_config_errors() {
    let dir = tempfile::tempdir().unwrap();
    let cases = [
        json!({ "suts": ["conforming"] }),
        json!({ "scenarios": [scenario("ping_pong")], "suts": [] }),
        json!({ "scenarios": [scenario("ping_pong")], "suts": ["conforming"], "trials": 0 }),
        json!({ "scenarios": [scenario("ping_pong")], "suts": [{ "variant": "v_ovf", "buffer_cap": 0 }] }),
        json!({ "scenarios": [scenario("ping_pong"), scenario("ping_pong")], "suts": ["conforming"] }),
    ];
    for c in cases {
        assert!(matches!(load(dir.path(), c.clone()), Err(CampaignError::Config(_))), "{c}");
    }
}

#[test]
fn unknown_fields_and_suts_are_rejected() {
    let dir = tempfile::tempdir().unwrap();
    assert!(load(dir.path(), json!({ "scenarios": [scenario("ping_pong")], "suts": ["conforming"], "sede": 1 })).is_err());
    assert!(load(dir.path(), json!({ "scenarios": [scenario("ping_pong")], "suts": ["v_nope"] })).is_err());
}

#[test]
fn missing_scenario_is_reported_by_path() {
    let dir = tempfile::tempdir().unwrap();
    let err = load(dir.path(), json!({ "scenarios": ["nowhere.json"], "suts": ["conforming"] })).unwrap_err();
    assert!(matches!(err, CampaignError::Scenario { err: ScenarioError::MissingScenario(_), .. }), "{err}");
    assert!(err.to_string().contains("nowhere.json"));
}

#[test]
fn overrides_replace_file_settings() {
    let dir = tempfile::tempdir().unwrap();
    let path = write_campaign(dir.path(), json!({ "scenarios": [scenario("ping_pong")], "suts": ["conforming"], "seed": 1, "trials": 4 }));
    let ov = Overrides { seed: Some(9), trials: Some(2), budget_ms: Some(700), out: Some(dir.path().join("o")), jobs: Some(2) };
    let c = Campaign::load(&path, &ov).unwrap();
    assert_eq!(c.file.seed, 9);
    assert_eq!(c.entries[0].scenario.file.trials, 2);
    assert_eq!(c.entries[0].scenario.file.budget_ms, 700);
    let report = c.run().unwrap();
    assert_eq!(report.cells[0].trials.len(), 2);
    assert!(dir.path().join("o/report.json").exists());
    assert!(dir.path().join("o/report.txt").exists());
}

#[test]
fn unmutated_scenarios_against_the_conforming_sut_are_safe() {
    let dir = tempfile::tempdir().unwrap();
    let c = load(dir.path(), json!({ "scenarios": [scenario("conformance"), scenario("multipoint")], "suts": ["conforming"], "trials": 2 })).unwrap();
    let report = c.run().unwrap();
    assert!(report.safe());
    assert_eq!(report.classification["conforming"], Classification::Safe);
}

#[test]
fn every_mutation_kind_is_handled_by_the_conforming_sut() {
    let dir = tempfile::tempdir().unwrap();
    let ov = Overrides { out: Some(dir.path().to_path_buf()), ..Overrides::default() };
    let c = Campaign::load(&assets().join("campaigns/mutation_kinds.json"), &ov).unwrap();
    let report = c.run().unwrap();
    let kinds: std::collections::BTreeSet<_> = c.entries.iter().filter_map(|e| e.mutation.as_ref()).map(|m| m.kind()).collect();
    assert_eq!(kinds.len(), 6, "one mutant per kind at least");
    for cell in &report.cells {
        assert_eq!(cell.verdict.aggregate, Aggregate::AllPass, "{}", cell.scenario);
    }
    let grid = report.grid();
    let row = grid.lines().find(|l| l.starts_with("conforming")).unwrap();
    assert_eq!(row.matches('✗').count(), report.cells.len(), "{grid}");
    // generated mutant scenarios are written out so traces can be replayed
    for e in c.entries.iter().filter(|e| e.mutation.is_some()) {
        assert!(e.file.exists(), "{}", e.file.display());
    }
}

fn format_string_trace(dir: &Path) -> PathBuf {
    let c = load(dir, json!({ "scenarios": [scenario("format_string")], "suts": ["v_fmt"], "trials": 1, "seed": 2024 })).unwrap();
    let report = c.run().unwrap();
    assert_eq!(report.cells[0].verdict.aggregate, Aggregate::AllFail);
    c.out.join(&report.cells[0].trials[0].trace)
}

#[test]
fn replay_recurs_against_the_same_sut_and_is_mitigated_by_the_fix() {
    let dir = tempfile::tempdir().unwrap();
    let trace = format_string_trace(dir.path());
    assert_eq!(replay(&trace, None).unwrap().status, ReplayStatus::Recurs);
    let fixed = replay(&trace, Some(Sut::Builtin(Variant::Conforming))).unwrap();
    assert_eq!(fixed.status, ReplayStatus::Mitigated);
    assert!(fixed.findings.is_empty());
}

#[test]
fn replay_of_a_clean_trace_has_nothing_to_replay() {
    let dir = tempfile::tempdir().unwrap();
    let c = load(dir.path(), json!({ "scenarios": [scenario("ping_pong")], "suts": ["conforming"], "trials": 1 })).unwrap();
    let report = c.run().unwrap();
    let out = replay(&c.out.join(&report.cells[0].trials[0].trace), None).unwrap();
    assert_eq!(out.status, ReplayStatus::NothingToReplay);
}

#[test]
fn replay_needs_the_recorded_scenario() {
    let dir = tempfile::tempdir().unwrap();
    let trace = format_string_trace(dir.path());
    let text = std::fs::read_to_string(&trace).unwrap();
    let moved = text.replacen(&scenario("format_string"), "/nonexistent/format_string.json", 1);
    assert_ne!(moved, text);
    std::fs::write(&trace, moved).unwrap();
    let err = replay(&trace, None).unwrap_err();
    assert!(matches!(err, CampaignError::Scenario { err: ScenarioError::MissingScenario(_), .. }), "{err}");
}
