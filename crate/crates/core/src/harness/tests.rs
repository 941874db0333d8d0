use std::sync::Arc;

use serde_json::Value;

use super::*;
use crate::api::{
    generate_routes, ApiError, HttpClient, RequestRecord, ResponseRecord, UNAVAILABLE,
};
use crate::factory::sample_filled_input;
use crate::model::{builtin_dispenser_schema, validate_value, DeviceSchema};

fn setup() -> (DeviceSchema, crate::api::ApiMapping) {
    let s = builtin_dispenser_schema();
    let m = generate_routes(&s, "100").unwrap();
    (s, m)
}

fn class_of(m: &crate::api::ApiMapping, route: &str) -> String {
    m.entries
        .iter()
        .find(|e| e.dt_route == route)
        .unwrap()
        .class
        .clone()
}

/// Per-field verdicts: true when the value violates its property.
fn verdicts(s: &DeviceSchema, m: &crate::api::ApiMapping, r: &RequestRecord) -> Vec<bool> {
    let class = class_of(m, &r.route);
    r.body
        .as_object()
        .unwrap()
        .iter()
        .map(|(k, v)| !validate_value(s, &class, k, v).unwrap().is_ok())
        .collect()
}

fn corpus(rate: f64, n: u64, seed: u64) -> Vec<RequestRecord> {
    let (s, m) = setup();
    let cfg = GeneratorConfig {
        invalid_rate: rate,
        seed,
        ..Default::default()
    };
    generate_requests(&s, &m, &cfg, 0..n).unwrap()
}

#[test]
fn all_valid_when_rate_zero() {
    let (s, m) = setup();
    for r in corpus(0.0, 2_000, 1) {
        assert!(verdicts(&s, &m, &r).iter().all(|bad| !bad), "{}", r.body);
    }
}

#[test]
fn all_invalid_when_rate_one() {
    let (s, m) = setup();
    for r in corpus(1.0, 2_000, 2) {
        assert!(verdicts(&s, &m, &r).iter().all(|bad| *bad), "{}", r.body);
    }
}

#[test]
fn violation_frequency_matches_rate() {
    let (s, m) = setup();
    let mut bad = 0usize;
    let mut total = 0usize;
    for r in corpus(0.3, 10_000, 3) {
        let v = verdicts(&s, &m, &r);
        bad += v.iter().filter(|b| **b).count();
        total += v.len();
    }
    let frac = bad as f64 / total as f64;
    assert!((frac - 0.3).abs() <= 0.02, "{frac}");
}

#[test]
fn routes_cover_scope_uniformly() {
    let (_, m) = setup();
    let c = corpus(0.2, 8_000, 4);
    let mut counts = std::collections::BTreeMap::new();
    for r in &c {
        *counts.entry(class_of(&m, &r.route)).or_insert(0usize) += 1;
    }
    assert_eq!(counts.len(), 4);
    assert!(
        counts.values().all(|&n| (1_800..2_200).contains(&n)),
        "{counts:?}"
    );
}

#[test]
fn corpus_is_deterministic() {
    assert_eq!(corpus(0.2, 500, 9), corpus(0.2, 500, 9));
    assert_ne!(corpus(0.2, 500, 9), corpus(0.2, 500, 10));
}

#[test]
fn generator_config_checked() {
    let (s, m) = setup();
    let bad = GeneratorConfig {
        invalid_rate: -0.1,
        ..Default::default()
    };
    assert!(matches!(
        RequestGenerator::new(&s, &m, bad),
        Err(HarnessError::InvalidConfig(_))
    ));
    let bad = GeneratorConfig {
        classes: vec!["MedicationPlan".into()],
        ..Default::default()
    };
    assert!(RequestGenerator::new(&s, &m, bad).is_err());
}

#[test]
fn plans() {
    assert_eq!(RunPlan::standard(1).unwrap().total_requests(), 1_800);
    assert_eq!(RunPlan::standard(10).unwrap().total_requests(), 12_000);
    assert_eq!(RunPlan::standard(4).unwrap().rate, 30);
    assert_eq!(RunPlan::standard(6).unwrap().rate, 20);
    assert!(RunPlan::standard(3).is_err());
    assert!(RunPlan::new(1, 25, false).is_err());
    assert_eq!(RunPlan::new(3, 25, true).unwrap().total_requests(), 4_500);
}

#[test]
fn limiter_spacing() {
    let mut l = RateLimiter::new(30, None);
    let ts: Vec<u64> = (0..100).map(|_| l.acquire()).collect();
    assert!(ts.windows(2).all(|w| w[1] - w[0] >= 2_000));
}

fn experiment(seed: u64) -> Experiment {
    let s = Arc::new(builtin_dispenser_schema());
    let filled = sample_filled_input(&s);
    Experiment::new(s, filled, seed)
}

#[test]
fn one_hour_run_shape() {
    let out = experiment(5).run(&RunPlan::standard(1).unwrap()).unwrap();
    assert_eq!(out.corpus.len(), 1_800);
    assert_eq!(out.twin.len(), 1_800);
    assert_eq!(out.emulator.len(), 1_800);
    assert!(out.twin.is_ordered());
    assert!(out
        .twin
        .records
        .iter()
        .zip(&out.emulator.records)
        .all(|(a, b)| a.id == b.id));
    assert!(out
        .corpus
        .windows(2)
        .all(|w| w[1].sent_at - w[0].sent_at >= 2_000));
    let ok = out
        .twin
        .status_codes()
        .iter()
        .filter(|&&c| c == 200)
        .count();
    assert!(ok > 300 && ok < 1_500, "{ok}");
}

#[test]
fn runs_are_reproducible() {
    let plan = RunPlan::new(1, 20, true).unwrap();
    assert_eq!(
        experiment(8).run(&plan).unwrap(),
        experiment(8).run(&plan).unwrap()
    );
}

struct Recorder(Vec<Value>);

impl Endpoint for Recorder {
    fn send(&mut self, req: &RequestRecord) -> Result<ResponseRecord, ApiError> {
        self.0.push(req.body.clone());
        Ok(ResponseRecord::new(req.id, 200, 1, Ok(Value::Null)))
    }
}

#[test]
fn fork_sends_identical_bodies() {
    let (mut a, mut b) = (Recorder(vec![]), Recorder(vec![]));
    for r in corpus(0.5, 200, 6) {
        fork_and_record(&r, &mut a, &mut b);
    }
    let ser = |v: &Vec<Value>| {
        v.iter()
            .map(|x| serde_json::to_string(x).unwrap())
            .collect::<Vec<_>>()
    };
    assert_eq!(ser(&a.0), ser(&b.0));
}

#[test]
fn unreachable_endpoint_is_synthetic_503() {
    let mut dead = HttpEndpoint {
        client: HttpClient::new(std::time::Duration::from_millis(500)),
        base_url: "http://127.0.0.1:9".into(),
        vendor_mapping: None,
    };
    let mut ok = Recorder(vec![]);
    let r = &corpus(0.0, 1, 7)[0];
    let (x, y) = fork_and_record(r, &mut ok, &mut dead);
    assert_eq!(x.status_code, 200);
    assert_eq!((y.status_code, y.synthetic), (UNAVAILABLE, true));
}

#[test]
fn batch_replays_corpus_per_twin() {
    let e = experiment(11);
    let c: Vec<RequestRecord> = corpus(0.2, 120, 11);
    let runs = e.batch(&c, &[3, 5]).unwrap();
    assert_eq!(
        runs.iter().map(|b| b.traces.len()).collect::<Vec<_>>(),
        [3, 5]
    );
    for b in &runs {
        for (_, t) in &b.traces {
            assert_eq!(t.len(), c.len());
            assert!(!t.is_partial());
        }
    }
    let serials: Vec<&str> = runs[1].traces.iter().map(|(s, _)| s.as_str()).collect();
    assert_eq!(serials, ["1", "2", "3", "4", "5"]);
}

#[test]
fn retarget_rewrites_serial() {
    let r = &corpus(0.0, 1, 1)[0];
    let t = retarget(r, "42");
    assert!(t.route.starts_with("/devices/42/"));
    assert_eq!(t.serial, "42");
    assert_eq!(t.body, r.body);
}

#[test]
fn run_files_round_trip() {
    let out = experiment(3)
        .run(&RunPlan::new(1, 5, true).unwrap())
        .unwrap();
    let dir = tempfile::tempdir().unwrap();
    out.save(dir.path()).unwrap();
    assert_eq!(RunOutput::load(dir.path()).unwrap(), out);
    std::fs::write(dir.path().join(EMULATOR_TRACE_FILE), "").unwrap();
    assert!(RunOutput::load(dir.path()).is_err());
}
