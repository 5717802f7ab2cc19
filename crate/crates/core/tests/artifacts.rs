use std::collections::BTreeMap;
use std::fs;

use ipnpep::harness::metrics::{goodput, median};
use ipnpep::harness::world::stream_len;
use ipnpep::harness::{parse_timeline, run_experiment, run_scenario, RunOptions, ScenarioConfig, Scheme, TraceMode};

fn report_map(csv: &str) -> BTreeMap<String, String> {
    csv.lines()
        .skip(1)
        .filter_map(|l| l.split_once(','))
        .map(|(k, v)| (k.to_string(), v.to_string()))
        .collect()
}

#[test]
fn report_agrees_with_timeline() {
    let dir = tempfile::tempdir().unwrap();
    let scenario = dir.path().join("s.toml");
    fs::write(&scenario, "name = \"xcheck\"\nseed = 3\nloss = 0.02\n\n[flow]\ncount = 3\nsize = 600000\n").unwrap();
    let out = dir.path().join("out");
    let r = run_experiment(&scenario, None, &out).unwrap();

    let timeline = parse_timeline(&fs::read_to_string(out.join("timeline.csv")).unwrap()).unwrap();
    assert_eq!(timeline, r.timeline);
    let bytes: u64 = timeline.iter().map(|t| t.len).sum();
    assert_eq!(bytes, 3 * stream_len(600_000));
    let last = timeline.iter().map(|t| t.t_inorder_us).max().unwrap() as f64 / 1e6;
    let recomputed = goodput(bytes, last).unwrap();
    assert!((recomputed - r.report.goodput_bps).abs() <= 1e-6 * recomputed);

    let report = report_map(&fs::read_to_string(out.join("report.csv")).unwrap());
    let reported: f64 = report["goodput_bps"].parse().unwrap();
    assert!((reported - recomputed).abs() <= 1e-6 * recomputed);

    let owd: Vec<f64> = timeline.iter().map(|t| t.owd_s()).collect();
    assert!((median(&owd) - r.report.owd.median).abs() < 1e-9);
    for t in &timeline {
        assert!(t.t_send_us <= t.t_arrive_us && t.t_arrive_us <= t.t_inorder_us);
    }

    let meta = fs::read_to_string(out.join("run_meta.toml")).unwrap();
    let reparsed: toml::Value = toml::from_str(&meta).unwrap();
    assert_eq!(reparsed["seed"].as_integer(), Some(3));
    let scenario = toml::to_string(&reparsed["scenario"]).unwrap();
    assert_eq!(ScenarioConfig::parse(&scenario).unwrap().to_toml(), r.config.to_toml());
}

#[test]
fn raw_endpoint_delivers_everything() {
    let mut cfg = ScenarioConfig::standard(0.01, 2, 500_000);
    cfg.scheme = Scheme::RawEndpoint;
    cfg.trace = TraceMode::None;
    let r = run_scenario(&cfg, &RunOptions::default()).unwrap();
    assert_eq!(r.report.verified_plaintext, vec![500_000, 500_000]);
    assert!(r.trace_digest.is_none());
}

#[test]
fn gateway_holds_traffic_through_an_outage() {
    let mut cfg = ScenarioConfig::standard(0.0, 1, 1_500_000);
    cfg.disruption.intervals = vec![[0.5, 4.0]];
    let r = run_scenario(&cfg, &RunOptions::default()).unwrap();
    assert!(r.report.gateway_high_water > 0);
    assert!(r.report.plateau_s >= 3.0, "{}", r.report.plateau_s);
    assert_eq!(r.report.verified_plaintext, vec![1_500_000]);
}

#[test]
fn invalid_config_is_rejected_before_running() {
    let mut cfg = ScenarioConfig::standard(0.01, 0, 1000);
    cfg.name = "empty".into();
    let err = run_scenario(&cfg, &RunOptions::default()).unwrap_err();
    assert_eq!(err.exit_code(), 3);
}
