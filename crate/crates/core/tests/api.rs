use std::io::{BufRead, BufReader};
use std::net::{IpAddr, Ipv4Addr};
use std::path::PathBuf;
use std::time::{Duration, Instant};

use reqwest::blocking::Client;
use reqwest::Method;
use serde_json::{json, Value};

use oocran::api::{spawn_background, ApiClient, ClientError, NsView, RunningServer, Scope, ServeError, ServerConfig};
use oocran::engine::SwapStatus;
use oocran::ids::{AlarmInstanceId, NsId};
use oocran::model::{Alarm, NsDescriptor, NsState, VnfRole};
use oocran::monitor::AlarmMessage;
use oocran::time::SimTime;

const SECRET: &str = "test-secret";

fn data(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/data").join(name)
}

fn descriptor(name: &str) -> NsDescriptor {
    NsDescriptor::from_toml_str(&std::fs::read_to_string(data(name)).unwrap()).unwrap()
}

fn config() -> ServerConfig {
    let mut cfg = ServerConfig::new(SECRET);
    cfg.bind = IpAddr::V4(Ipv4Addr::LOCALHOST);
    cfg.port = 0;
    cfg.scenario = Some(data("virtual.toml"));
    cfg.tick = Duration::from_millis(10);
    cfg
}

fn start() -> (RunningServer, ApiClient) {
    let srv = spawn_background(config()).unwrap();
    let client = ApiClient::new(srv.url(), None);
    (srv, client)
}

fn wait_for(client: &ApiClient, id: NsId, done: impl Fn(&NsView) -> bool) -> NsView {
    let deadline = Instant::now() + Duration::from_secs(10);
    loop {
        let v = client.get_ns(id).unwrap();
        if done(&v) {
            return v;
        }
        assert!(Instant::now() < deadline, "timed out; last state {}", v.ns.state);
        std::thread::sleep(Duration::from_millis(20));
    }
}

fn status_of(r: Result<Value, ClientError>) -> u16 {
    match r {
        Ok(_) => 200,
        Err(ClientError::Api { status, .. }) => status,
        Err(e) => panic!("{e}"),
    }
}

#[test]
fn empty_service_list() {
    let (_srv, c) = start();
    assert!(c.list_nss().unwrap().is_empty());
}

#[test]
fn deploy_then_delete() {
    let (_srv, c) = start();
    let v = c.create_ns(&descriptor("lte_downlink.toml")).unwrap();
    assert_eq!(v.ns.state, NsState::Deploying);
    let v = wait_for(&c, v.ns.id, |v| v.ns.state == NsState::Active);
    assert_eq!(v.vnfs.len(), 2);
    assert_eq!(c.infrastructure().unwrap().vms.len(), 2);

    let v = c.delete_ns(v.ns.id).unwrap();
    assert_eq!(v.ns.state, NsState::Terminated);
    let infra = c.infrastructure().unwrap();
    assert!(infra.vms.is_empty());
    assert!(infra.slices.is_empty());
    assert_eq!(status_of(c.request(Method::DELETE, &format!("/nss/{}", v.ns.id), None::<&()>, None)), 409);
}

#[test]
fn error_statuses() {
    let (_srv, c) = start();
    let mut bad = descriptor("lte_downlink.toml");
    bad.vnfs.clear();
    match c.create_ns(&bad) {
        Err(ClientError::Api { status: 422, .. }) => {}
        other => panic!("{other:?}"),
    }
    assert_eq!(status_of(c.request(Method::GET, "/nss/ns-404", None::<&()>, None)), 404);
    assert_eq!(status_of(c.request(Method::GET, "/nss/banana", None::<&()>, None)), 404);
    assert_eq!(status_of(c.request(Method::GET, "/swaps/swap-9", None::<&()>, None)), 404);
}

#[test]
fn forged_alarm_is_unauthorized() {
    let (srv, c) = start();
    let id = c.create_ns(&descriptor("bound_downlink.toml")).unwrap().ns.id;
    let v = wait_for(&c, id, |v| v.ns.state == NsState::Active);
    let alarm = Alarm {
        instance: AlarmInstanceId(77),
        alarm_id: "cpu-alarm".into(),
        rule_id: "cpu-high".into(),
        vnf_id: v.vnfs[1].id,
        fired_at: SimTime::ZERO,
        payload: Default::default(),
    };
    let http = Client::new();
    let post = |msg: &AlarmMessage| {
        http.post(format!("{}/alerts/messages", srv.url()))
            .json(msg)
            .send()
            .unwrap()
            .status()
            .as_u16()
    };
    assert_eq!(post(&AlarmMessage::signed(&alarm, "not-the-secret")), 401);
    let mut tampered = AlarmMessage::signed(&alarm, SECRET);
    tampered.alarm_id = "other".into();
    assert_eq!(post(&tampered), 401);
    let malformed = http
        .post(format!("{}/alerts/messages", srv.url()))
        .body("{")
        .send()
        .unwrap();
    assert_eq!(malformed.status().as_u16(), 400);

    assert_eq!(post(&AlarmMessage::signed(&alarm, SECRET)), 202);
    let v = wait_for(&c, id, |v| v.ns.state == NsState::Active && v.vnfs.len() == 3);
    assert_eq!(v.vnfs.iter().filter(|x| x.descriptor.role == VnfRole::EnodebTx).count(), 2);
}

#[test]
fn metric_alarm_loop_over_http() {
    let (_srv, c) = start();
    let id = c.create_ns(&descriptor("bound_downlink.toml")).unwrap().ns.id;
    let v = wait_for(&c, id, |v| v.ns.state == NsState::Active);
    let enb = v.vnfs[1].id;
    let mut fired = 0;
    for _ in 0..3 {
        let r = c
            .request(Method::POST, "/metrics", Some(&json!({"vnf_id": enb, "metric": "cpu_load", "value": 92.5})), None)
            .unwrap();
        fired += r["alarms"].as_array().unwrap().len();
    }
    assert_eq!(fired, 1);
    let v = wait_for(&c, id, |v| v.ns.state == NsState::Active && v.vnfs.len() == 3);
    assert_eq!(v.vnfs.iter().filter(|x| x.descriptor.role == VnfRole::EnodebTx).count(), 2);
    assert_eq!(c.metrics(enb, "cpu_load").unwrap().len(), 3);
}

#[test]
fn event_stream_replays_then_follows() {
    let (srv, c) = start();
    let first = c.create_ns(&descriptor("lte_downlink.toml")).unwrap().ns.id;
    wait_for(&c, first, |v| v.ns.state == NsState::Active);

    let resp = Client::builder()
        .timeout(Duration::from_secs(10))
        .build()
        .unwrap()
        .get(format!("{}/events?since=0", srv.url()))
        .send()
        .unwrap();
    assert_eq!(resp.status().as_u16(), 200);
    assert!(resp.headers()["content-type"].to_str().unwrap().starts_with("text/event-stream"));

    let second = c.create_ns(&descriptor("lte_downlink.toml")).unwrap().ns.id;
    let mut seen_first = false;
    for line in BufReader::new(resp).lines() {
        let line = line.unwrap();
        let Some(data) = line.strip_prefix("data:") else { continue };
        let ev: Value = serde_json::from_str(data.trim()).unwrap();
        let is_active = |id: NsId| ev["entity_kind"] == "ns" && ev["entity_id"] == id.to_string() && ev["event"].as_str().unwrap().contains("ACTIVE");
        if is_active(first) {
            seen_first = true;
        }
        if is_active(second) {
            assert!(seen_first, "backlog must precede live events");
            return;
        }
    }
    panic!("stream ended before the second service came up");
}

#[test]
fn bearer_scopes() {
    let mut cfg = config();
    for (s, t) in [(Scope::Wip, "wip"), (Scope::Wsp, "wsp"), (Scope::Wtp, "wtp")] {
        cfg.tokens.insert(s, t.into());
    }
    let srv = spawn_background(cfg).unwrap();
    let as_ = |t: Option<&str>| ApiClient::new(srv.url(), t.map(String::from));
    let desc = descriptor("lte_downlink.toml");

    assert_eq!(status_of(as_(None).request(Method::GET, "/nss", None::<&()>, None)), 401);
    assert_eq!(status_of(as_(Some("nope")).request(Method::GET, "/nss", None::<&()>, None)), 401);
    assert_eq!(status_of(as_(Some("wtp")).request(Method::GET, "/nss", None::<&()>, None)), 200);
    assert_eq!(status_of(as_(Some("wtp")).request(Method::POST, "/nss", Some(&desc), None)), 403);
    assert_eq!(status_of(as_(Some("wtp")).request(Method::POST, "/vwis/plan", Some(&json!({"name": "p", "target_area_m2": 3000.0})), None)), 200);

    let id = as_(Some("wsp")).create_ns(&desc).unwrap().ns.id;
    let swap = json!({"strategy": "HARD", "vwi": {"name": "v", "target_area_m2": 3000.0}});
    let path = format!("/vwis/{id}/swap");
    assert_eq!(status_of(as_(Some("wsp")).request(Method::POST, &path, Some(&swap), None)), 403);

    // The alarm receiver authenticates by signature, not by token.
    let r = Client::new().post(format!("{}/alerts/messages", srv.url())).body("{}").send().unwrap();
    assert_eq!(r.status().as_u16(), 400);
}

#[test]
fn idempotent_create() {
    let (_srv, c) = start();
    let desc = descriptor("lte_downlink.toml");
    let a = c.request(Method::POST, "/nss", Some(&desc), Some("k-1")).unwrap();
    let b = c.request(Method::POST, "/nss", Some(&desc), Some("k-1")).unwrap();
    assert_eq!(a, b);
    assert_eq!(c.list_nss().unwrap().len(), 1);
    c.request(Method::POST, "/nss", Some(&desc), Some("k-2")).unwrap();
    assert_eq!(c.list_nss().unwrap().len(), 2);
}

#[test]
fn plan_endpoint() {
    let (_srv, c) = start();
    let body = json!({"name": "campus", "target_area_m2": 58241.0});
    let r = c.request(Method::POST, "/vwis/plan?model=linear", Some(&body), None).unwrap();
    assert_eq!(r["plan"]["n_enodebs"], 21);
    let t = r["plan"]["estimated_setup_s"].as_f64().unwrap();
    assert!((55.0..=75.0).contains(&t), "{t}");
    assert_eq!(r["descriptor"]["vnfs"].as_array().unwrap().len(), 21);
    assert_eq!(status_of(c.request(Method::POST, "/vwis/plan?model=cubic", Some(&body), None)), 422);
    let bad = json!({"name": "x", "target_area_m2": -5.0});
    assert_eq!(status_of(c.request(Method::POST, "/vwis/plan", Some(&bad), None)), 422);
}

#[test]
fn patch_scales_and_guards_networks() {
    let (_srv, c) = start();
    let id = c.create_ns(&descriptor("lte_downlink.toml")).unwrap().ns.id;
    wait_for(&c, id, |v| v.ns.state == NsState::Active);
    let path = format!("/nss/{id}");
    let r = c
        .request(Method::PATCH, &path, Some(&json!({"role_counts": {"ENODEB_TX": 3}})), None)
        .unwrap();
    assert_eq!(r["tasks"].as_array().unwrap().len(), 4);
    let v = wait_for(&c, id, |v| v.ns.state == NsState::Active && v.vnfs.len() == 4);
    assert_eq!(v.ns.descriptor.vnfs.len(), 4);

    let nets = json!({"networks": [{"role": "MANAGEMENT", "cidr": "10.9.0.0/24"}]});
    assert_eq!(status_of(c.request(Method::PATCH, &path, Some(&nets), None)), 422);
    assert_eq!(status_of(c.request(Method::PATCH, &path, Some(&json!({"colour": "red"})), None)), 422);
}

#[test]
fn hard_swap_through_api() {
    let (_srv, c) = start();
    let body = json!({"name": "small", "target_area_m2": 2826.0});
    let planned = c.request(Method::POST, "/vwis/plan", Some(&body), None).unwrap();
    let desc: NsDescriptor = serde_json::from_value(planned["descriptor"].clone()).unwrap();
    let old = c.create_ns(&desc).unwrap().ns.id;
    wait_for(&c, old, |v| v.ns.state == NsState::Active);

    let req = json!({"strategy": "HARD", "vwi": {"name": "big", "target_area_m2": 56520.0}});
    let report = c.request(Method::POST, &format!("/vwis/{old}/swap"), Some(&req), None).unwrap();
    let swap_id = report["swap_id"].as_str().unwrap().to_string();
    let deadline = Instant::now() + Duration::from_secs(10);
    let report = loop {
        let r = c.request(Method::GET, &format!("/swaps/{swap_id}"), None::<&()>, None).unwrap();
        if r["status"] != json!(SwapStatus::InProgress) {
            break r;
        }
        assert!(Instant::now() < deadline);
        std::thread::sleep(Duration::from_millis(20));
    };
    assert_eq!(report["status"], json!(SwapStatus::Completed));
    let downtime = report["downtime_s"].as_f64().unwrap();
    assert!((downtime - 60.19).abs() < 1e-3, "{downtime}");
    assert_eq!(c.get_ns(old).unwrap().ns.state, NsState::Terminated);
}

#[test]
fn actuator_registry() {
    let (_srv, c) = start();
    let a = json!({"name": "noop", "action": "NOOP"});
    assert_eq!(status_of(c.request(Method::POST, "/actuators", Some(&a), None)), 200);
    assert_eq!(status_of(c.request(Method::POST, "/actuators", Some(&a), None)), 409);
    let all = c.request(Method::GET, "/actuators", None::<&()>, None).unwrap();
    assert_eq!(all.as_array().unwrap().len(), 2);
}

#[test]
fn busy_port_is_reported() {
    let (srv, _c) = start();
    let mut cfg = config();
    cfg.port = srv.addr.port();
    match spawn_background(cfg) {
        Err(ServeError::PortInUse(p)) => assert_eq!(p, srv.addr.port()),
        Err(e) => panic!("{e}"),
        Ok(_) => panic!("second bind succeeded"),
    }
}
