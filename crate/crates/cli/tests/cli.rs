use std::path::Path;
use std::process::{Command, Output};

use mec_core::sim::{Algorithm, LiftingMode};
use mec_sim::config::{ArrivalSpec, TopologySpec};
use mec_sim::{emit_scenario, parse_scenario_str, ScenarioConfig};
use proptest::prelude::*;
use serde_json::Value;

const SCENARIO: &str = r#"{"algorithm": "wog", "horizon_slots": 300, "layout_stations": 6, "layout_groups": 20, "k_classes": 2}"#;

fn mec_sim(args: &[&str], dir: &Path) -> Output {
    let out = Command::new(env!("CARGO_BIN_EXE_mec-sim")).args(args).current_dir(dir).output().expect("binary runs");
    assert!(out.status.success(), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
    out
}

fn scenario_dir(text: &str) -> tempfile::TempDir {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("s.json"), text).unwrap();
    dir
}

#[test]
fn simulate_is_deterministic() {
    let dir = scenario_dir(SCENARIO);
    mec_sim(&["simulate", "--config", "s.json", "--seed", "7", "--out", "a"], dir.path());
    mec_sim(&["simulate", "--config", "s.json", "--seed", "7", "--out", "b"], dir.path());
    let a = std::fs::read(dir.path().join("a/summary.json")).unwrap();
    let b = std::fs::read(dir.path().join("b/summary.json")).unwrap();
    assert_eq!(a, b);
    assert_eq!(std::fs::read(dir.path().join("a/trace.csv")).unwrap(), std::fs::read(dir.path().join("b/trace.csv")).unwrap());
}

#[test]
fn sweep_writes_one_row_per_point() {
    let dir = scenario_dir(SCENARIO);
    mec_sim(&["sweep", "--config", "s.json", "--param", "v", "--values", "5,10,20,40", "--out", "sw"], dir.path());
    let mut rdr = csv::Reader::from_path(dir.path().join("sw/sweep.csv")).unwrap();
    let values: Vec<String> = rdr.records().map(|r| r.unwrap()[1].to_string()).collect();
    assert_eq!(values, ["5", "10", "20", "40"]);
    for i in 0..4 {
        assert!(dir.path().join(format!("sw/point-{i}/summary.json")).exists());
    }
}

#[test]
fn failed_sweep_points_are_kept_in_the_manifest() {
    let dir = scenario_dir(SCENARIO);
    let out = Command::new(env!("CARGO_BIN_EXE_mec-sim"))
        .args(["sweep", "--config", "s.json", "--param", "v", "--values", "10,-1", "--out", "sw"])
        .current_dir(dir.path())
        .output()
        .unwrap();
    assert!(!out.status.success());
    let manifest: Value = serde_json::from_slice(&std::fs::read(dir.path().join("sw/manifest.json")).unwrap()).unwrap();
    let ok: Vec<bool> = manifest["points"].as_array().unwrap().iter().map(|p| p["ok"].as_bool().unwrap()).collect();
    assert_eq!(ok, [true, false]);
    assert_eq!(csv::Reader::from_path(dir.path().join("sw/sweep.csv")).unwrap().records().count(), 1);
}

#[test]
fn bounds_reports_the_waiting_time_cap() {
    let dir = scenario_dir(SCENARIO);
    let out = mec_sim(&["bounds", "--config", "s.json"], dir.path());
    let report: Value = serde_json::from_slice(&out.stdout).unwrap();
    assert!(report["h_max"].as_array().unwrap().iter().all(|h| h == 12));
    assert_eq!(report["h_max_global"], 12);
}

#[test]
fn solve_pk_prints_the_two_station_optimum() {
    let text = r#"{"algorithm": "known", "horizon_slots": 10, "k_classes": 1, "known_lambda": [0.8, 0.2],
        "stations": [{"lat": -37.816, "lon": 144.96, "budget_w": 92}, {"lat": -37.816, "lon": 144.96, "budget_w": 92}],
        "arrivals": {"kind": "bernoulli", "p": [0.8, 0.2]}}"#;
    let dir = scenario_dir(text);
    let out = mec_sim(&["solve-pk", "--config", "s.json"], dir.path());
    let sol: Value = serde_json::from_slice(&out.stdout).unwrap();
    let mu: Vec<f64> = sol["mu_star"].as_array().unwrap().iter().map(|x| x.as_f64().unwrap()).collect();
    assert!(mu.iter().all(|m| (m - 0.5).abs() < 1e-9), "{mu:?}");
}

#[test]
fn validate_passes_on_a_small_run() {
    let dir = scenario_dir(SCENARIO);
    let out = mec_sim(&["validate", "--config", "s.json"], dir.path());
    assert!(!String::from_utf8_lossy(&out.stdout).contains("FAIL"));
}

#[test]
fn generated_dataset_drives_a_run() {
    let dir = scenario_dir(r#"{"algorithm": "nop", "horizon_slots": 50, "dataset": "loc.csv", "k_classes": 1}"#);
    mec_sim(&["dataset-gen", "--seed", "3", "--stations", "5", "--groups", "12", "--out", "loc.csv"], dir.path());
    mec_sim(&["simulate", "--config", "s.json", "--out", "o"], dir.path());
    let doc: Value = serde_json::from_slice(&std::fs::read(dir.path().join("o/summary.json")).unwrap()).unwrap();
    assert_eq!(doc["energy_per_bs"].as_array().unwrap().len(), 5);
}

#[test]
fn bad_config_names_the_key() {
    let dir = scenario_dir(r#"{"algorithm": "wog", "horizon_slots": 10, "v": -3}"#);
    let out = Command::new(env!("CARGO_BIN_EXE_mec-sim")).args(["simulate", "--config", "s.json"]).current_dir(dir.path()).output().unwrap();
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("v"));
}

#[test]
fn summaries_match_the_published_schema() {
    let schema: Value =
        serde_json::from_str(&std::fs::read_to_string(concat!(env!("CARGO_MANIFEST_DIR"), "/../../docs/summary.schema.json")).unwrap()).unwrap();
    let validator = jsonschema::validator_for(&schema).unwrap();
    let known = r#"{"algorithm": "known", "horizon_slots": 100, "k_classes": 1, "stations": [{"lat": -37.816, "lon": 144.96}, {"lat": -37.816, "lon": 144.961}],
        "arrivals": {"kind": "bernoulli", "p": [0.3]}}"#;
    let texts = [SCENARIO.to_string(), SCENARIO.replace("wog", "nop"), SCENARIO.replace("wog", "greedy"), known.to_string()];
    let dir = tempfile::tempdir().unwrap();
    for (i, text) in texts.iter().enumerate() {
        let cfg = parse_scenario_str(text).unwrap();
        let out = mec_sim::run_scenario(&cfg).unwrap();
        let sub = dir.path().join(i.to_string());
        mec_sim::runner::write_run(&sub, &out).unwrap();
        let doc: Value = serde_json::from_slice(&std::fs::read(sub.join("summary.json")).unwrap()).unwrap();
        let errors: Vec<String> = validator.iter_errors(&doc).map(|e| e.to_string()).collect();
        assert!(errors.is_empty(), "{text}: {errors:?}");
    }
}

fn arb_scenario() -> impl Strategy<Value = ScenarioConfig> {
    let algorithm = prop_oneof![Just(Algorithm::Wog), Just(Algorithm::WogObserved), Just(Algorithm::Nop), Just(Algorithm::Greedy)];
    let arrivals = prop_oneof![
        prop::collection::vec(0.0f64..=1.0, 1..4).prop_map(|p| ArrivalSpec::Bernoulli { p }),
        (0.0f64..2.0, 10.0f64..500.0).prop_map(|(rate_per_ms, attach_radius_m)| ArrivalSpec::UserGroupPoisson { rate_per_ms, attach_radius_m }),
        (10.0f64..500.0, 0.0f64..=1.0, 0.0f64..=1.0, 0.0f64..2.0).prop_map(|(attach_radius_m, p_on_to_off, p_off_to_on, on_rate_per_ms)| {
            ArrivalSpec::MarkovBurst { attach_radius_m, p_on_to_off, p_off_to_on, on_rate_per_ms }
        }),
    ];
    let lifting = prop_oneof![Just(LiftingMode::Faithful), Just(LiftingMode::Eager), Just(LiftingMode::None)];
    let topology = prop_oneof![Just(TopologySpec::Geographic), (0u32..6).prop_map(|delta_slots| TopologySpec::Complete { delta_slots })];
    (algorithm, 1u64..100_000, any::<u64>(), arrivals, 0.01f64..100.0, 1usize..8, lifting, topology, 0.0f64..3.0, any::<bool>()).prop_map(
        |(algorithm, horizon_slots, seed, arrivals, v, k_classes, lifting, topology, load_factor, record_trace)| {
            let base = parse_scenario_str(&format!(r#"{{"algorithm": "nop", "horizon_slots": {horizon_slots}}}"#)).unwrap();
            ScenarioConfig { algorithm, seed, arrivals, v, k_classes, lifting, topology, load_factor, record_trace, ..base }
        },
    )
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn emitted_scenarios_parse_back(cfg in arb_scenario()) {
        let text = emit_scenario(&cfg);
        prop_assert_eq!(parse_scenario_str(&text).unwrap(), cfg);
    }
}
