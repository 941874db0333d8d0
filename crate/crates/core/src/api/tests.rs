use std::sync::Arc;

use serde_json::{json, Value};

use super::*;
use crate::behavior::{RuntimeConfig, State, TwinRuntime};
use crate::factory::{instantiate, sample_filled_input};
use crate::model::builtin_dispenser_schema;

fn twin(serial: &str) -> Twin {
    let schema = Arc::new(builtin_dispenser_schema());
    let inst = instantiate(&schema, &sample_filled_input(&schema), serial).unwrap();
    Twin::new(TwinRuntime::new(inst, RuntimeConfig::default()), schema).unwrap()
}

fn req(id: u64, method: Method, route: &str, body: Value) -> RequestRecord {
    RequestRecord {
        id,
        serial: "100".into(),
        method,
        route: route.into(),
        body,
        sent_at: 0,
    }
}

fn snapshot(t: &Twin) -> String {
    t.runtime.instance().to_canonical_json()
}

#[test]
fn put_alarm_then_get() {
    let mut t = twin("100");
    let body = json!({"silent_mode": false, "melody": "M1", "repetitions": 2});
    let r = t
        .handle(&req(
            1,
            Method::Put,
            "/devices/100/settings/alarm",
            body.clone(),
        ))
        .unwrap();
    assert_eq!(r.status_code, OK);
    assert!((2_400..=3_000).contains(&r.response_time_ms));
    assert_eq!(r.body["status"], json!(200));
    let g = t
        .handle(&req(
            2,
            Method::Get,
            "/devices/100/settings/alarm",
            Value::Null,
        ))
        .unwrap();
    assert_eq!(g.status_code, OK);
    for (k, v) in body.as_object().unwrap() {
        assert_eq!(&g.body["data"][k], v);
    }
}

#[test]
fn out_of_range_brightness_rejected() {
    let mut t = twin("100");
    let before = snapshot(&t);
    let r = t
        .handle(&req(
            1,
            Method::Post,
            "/devices/100/settings/display",
            json!({"brightness": 6}),
        ))
        .unwrap();
    assert_eq!(r.status_code, UNAVAILABLE);
    assert_eq!(r.body["error"]["violations"][0]["constraint"], json!("S1"));
    assert_eq!(snapshot(&t), before);
}

#[test]
fn mixed_body_is_all_or_nothing() {
    let mut t = twin("100");
    let before = snapshot(&t);
    let r = t
        .handle(&req(
            1,
            Method::Put,
            "/devices/100/settings/alarm",
            json!({"repetitions": 1, "volume": 99}),
        ))
        .unwrap();
    assert_eq!(r.status_code, UNAVAILABLE);
    assert_eq!(snapshot(&t), before);
}

#[test]
fn unknown_property_and_wrong_type_rejected() {
    let mut t = twin("100");
    let before = snapshot(&t);
    for body in [
        json!({"colour": 1}),
        json!({"brightness": "high"}),
        json!([1, 2]),
        Value::Null,
    ] {
        let r = t
            .handle(&req(1, Method::Put, "/devices/100/settings/display", body))
            .unwrap();
        assert_eq!(r.status_code, UNAVAILABLE);
    }
    assert_eq!(snapshot(&t), before);
}

#[test]
fn plans_post_and_delete() {
    let mut t = twin("100");
    let r = t
        .handle(&req(
            1,
            Method::Delete,
            "/devices/100/medication-plans/ghost",
            Value::Null,
        ))
        .unwrap();
    assert_eq!(r.status_code, UNAVAILABLE);

    let plan = json!({"period_days": 7, "intake_times": [{"time": "08:00", "medicine_lines": [{"doses": 1}]}]});
    let r = t
        .handle(&req(2, Method::Post, "/devices/100/medication-plans", plan))
        .unwrap();
    assert_eq!(r.status_code, OK, "{}", r.body);
    assert_eq!(r.body["data"]["id"], json!("plan-2"));

    let bad = json!({"period_days": 29, "intake_times": [{"time": "08:00"}]});
    let before = snapshot(&t);
    let r = t
        .handle(&req(3, Method::Post, "/devices/100/medication-plans", bad))
        .unwrap();
    assert_eq!(r.status_code, UNAVAILABLE);
    assert_eq!(snapshot(&t), before);

    let dup = json!({"id": "plan-1", "intake_times": [{"time": "08:00"}]});
    assert_eq!(
        t.handle(&req(4, Method::Post, "/devices/100/medication-plans", dup))
            .unwrap()
            .status_code,
        UNAVAILABLE
    );

    let r = t
        .handle(&req(
            5,
            Method::Delete,
            "/devices/100/medication-plans/plan-2",
            Value::Null,
        ))
        .unwrap();
    assert_eq!(r.status_code, OK);
    let list = t
        .handle(&req(
            6,
            Method::Get,
            "/devices/100/medication-plans",
            Value::Null,
        ))
        .unwrap();
    assert_eq!(list.body["data"].as_array().unwrap().len(), 1);
}

#[test]
fn nested_routes_resolve() {
    let mut t = twin("100");
    let r = t
        .handle(&req(
            1,
            Method::Put,
            "/devices/100/medication-plans/plan-1/intake-times/0/medicine-lines/0",
            json!({"doses": 3}),
        ))
        .unwrap();
    assert_eq!(r.status_code, OK, "{}", r.body);
    let r = t
        .handle(&req(
            2,
            Method::Put,
            "/devices/100/medication-plans/plan-1/intake-times/0/medicine-lines/0",
            json!({"doses": 10}),
        ))
        .unwrap();
    assert_eq!(r.status_code, UNAVAILABLE);
    // Last intake time cannot go: at least one is required.
    let mut deleted = 0;
    for _ in 0..5 {
        let r = t
            .handle(&req(
                3,
                Method::Delete,
                "/devices/100/medication-plans/plan-1/intake-times/0",
                Value::Null,
            ))
            .unwrap();
        deleted += usize::from(r.status_code == OK);
    }
    assert_eq!(deleted, 2);
}

#[test]
fn route_not_found() {
    let mut t = twin("100");
    let err = t
        .handle(&req(1, Method::Get, "/devices/100/firmware", Value::Null))
        .unwrap_err();
    assert!(matches!(err, ApiError::RouteNotFound(_)));
    assert!(t
        .handle(&req(1, Method::Get, "/devices/999/settings", Value::Null))
        .is_err());
}

#[test]
fn busy_while_dispensing() {
    let mut t = twin("100");
    // First intake is 09:00, 30 minutes after the epoch.
    let at = 30 * 60_000 + 10_000;
    let before = {
        t.runtime.run_until(at);
        assert_eq!(t.runtime.state(), State::Dispense);
        snapshot(&t)
    };
    for (i, m) in [Method::Get, Method::Put, Method::Post, Method::Delete]
        .into_iter()
        .enumerate()
    {
        let mut r = req(
            i as u64,
            m,
            "/devices/100/settings/display",
            json!({"brightness": 2}),
        );
        r.sent_at = at + i as u64;
        let resp = t.handle(&r).unwrap();
        assert_eq!(resp.status_code, UNAVAILABLE);
        assert!(resp.response_time_ms <= 400);
    }
    assert_eq!(snapshot(&t), before);
    let mut later = req(
        9,
        Method::Put,
        "/devices/100/settings/display",
        json!({"brightness": 2}),
    );
    later.sent_at = at + 120_000;
    assert_eq!(t.handle(&later).unwrap().status_code, OK);
}

#[test]
fn shut_down_twin_refuses() {
    let mut t = twin("100");
    t.runtime.shutdown();
    let r = t
        .handle(&req(1, Method::Get, "/devices/100/status", Value::Null))
        .unwrap();
    assert_eq!(r.status_code, UNAVAILABLE);
}

#[test]
fn status_route() {
    let mut t = twin("100");
    let r = t
        .handle(&req(1, Method::Get, "/devices/100/status", Value::Null))
        .unwrap();
    assert_eq!(r.body["data"]["serial"], json!("100"));
    assert_eq!(
        t.handle(&req(2, Method::Put, "/devices/100/status", json!({})))
            .unwrap()
            .status_code,
        UNAVAILABLE
    );
}

#[test]
fn http_round_trip_and_forwarding() {
    let server = serve(
        vec![Box::new(twin("100")), Box::new(twin("101"))],
        "127.0.0.1:0",
        ServerOptions::default(),
    )
    .unwrap();
    let client = HttpClient::default();
    let base = server.base_url();
    let put = req(
        1,
        Method::Put,
        "/devices/100/settings/alarm",
        json!({"repetitions": 4}),
    );
    let r = client.send(&base, &put.route, &put).unwrap();
    assert_eq!(r.status_code, OK);
    assert!(r.response_time_ms >= 2_400);
    let get = req(2, Method::Get, "/devices/100/settings/alarm", Value::Null);
    assert_eq!(
        client.send(&base, &get.route, &get).unwrap().body["data"]["repetitions"],
        json!(4)
    );
    // The other twin is independent.
    let other = RequestRecord {
        serial: "101".into(),
        route: "/devices/101/settings/alarm".into(),
        ..get.clone()
    };
    assert_eq!(
        client.send(&base, &other.route, &other).unwrap().body["data"]["repetitions"],
        json!(3)
    );
    let bad = req(
        3,
        Method::Put,
        "/devices/100/settings/display",
        json!({"brightness": 0}),
    );
    assert_eq!(
        client.send(&base, &bad.route, &bad).unwrap().status_code,
        UNAVAILABLE
    );
    let missing = req(4, Method::Get, "/devices/100/firmware", Value::Null);
    assert_eq!(
        client
            .send(&base, &missing.route, &missing)
            .unwrap()
            .status_code,
        NOT_FOUND
    );
    let nobody = req(5, Method::Get, "/devices/555", Value::Null);
    assert_eq!(
        client
            .send(&base, &nobody.route, &nobody)
            .unwrap()
            .status_code,
        NOT_FOUND
    );

    let mapping = generate_routes(&builtin_dispenser_schema(), "100").unwrap();
    let dead = forward_to_device(&client, &get, &mapping, "http://127.0.0.1:9");
    assert!(matches!(dead, Err(ApiError::DeviceUnreachable(_))));
    server.shutdown();
}

#[test]
fn duplicate_serials_refused() {
    let err = serve(
        vec![Box::new(twin("1")), Box::new(twin("1"))],
        "127.0.0.1:0",
        ServerOptions::default(),
    )
    .unwrap_err();
    assert_eq!(err, ApiError::DuplicateSerial("1".into()));
}
