use std::collections::{BTreeMap, HashMap};
use std::convert::Infallible;
use std::net::{IpAddr, Ipv4Addr, SocketAddr};
use std::path::PathBuf;
use std::sync::{Arc, Mutex, MutexGuard};
use std::time::Duration;

use axum::body::{to_bytes, Body, Bytes};
use axum::extract::{Path, Query, Request, State};
use axum::http::{header, HeaderValue, Method, StatusCode};
use axum::middleware::{self, Next};
use axum::response::sse::{Event, KeepAlive, Sse};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use futures::stream::{self, Stream, StreamExt};
use serde::Deserialize;
use serde_json::json;
use tokio::sync::{broadcast, oneshot};

use super::{engine_status, ErrorBody, HttpTransport, NsView, PlanResponse, Scope, SwapRequest};
use crate::control::{ControlError, ControlPlane};
use crate::engine::{EngineError, EngineEvent, NsPatch};
use crate::ids::{NsId, SwapId, VnfId};
use crate::model::{Actuator, NsDescriptor};
use crate::monitor::{deliver, DeliveryPolicy, MetricSample, MonitorError, WebhookEndpoint};
use crate::planner::{plan_vwi, vwi_ns_descriptor, SwapStrategy, TimeModelMode, VwiDescriptor};
use crate::scenario::{Scenario, ScenarioError};
use crate::time::{ClockMode, SimTime};

pub const DEFAULT_PORT: u16 = 8000;

#[derive(Debug, thiserror::Error)]
pub enum ServeError {
    #[error("port {0} is already in use")]
    PortInUse(u16),
    #[error("bad configuration: {0}")]
    BadConfig(String),
    #[error(transparent)]
    Scenario(#[from] ScenarioError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone)]
pub struct ServerConfig {
    pub bind: IpAddr,
    pub port: u16,
    pub secret: String,
    pub scenario: Option<PathBuf>,
    /// One bearer token per scope; authentication is off when empty.
    pub tokens: BTreeMap<Scope, String>,
    /// Where fired alarms are posted; defaults to this server's receiver.
    pub callback_url: Option<String>,
    pub tick: Duration,
}

impl ServerConfig {
    pub fn new(secret: impl Into<String>) -> Self {
        ServerConfig {
            bind: IpAddr::V4(Ipv4Addr::UNSPECIFIED),
            port: DEFAULT_PORT,
            secret: secret.into(),
            scenario: None,
            tokens: BTreeMap::new(),
            callback_url: None,
            tick: Duration::from_millis(50),
        }
    }

    /// Reads `OOCRAN_PORT`, `OOCRAN_SECRET`, `OOCRAN_SCENARIO`,
    /// `OOCRAN_TOKEN_{WIP,WSP,WTP}` and `OOCRAN_CALLBACK_URL`.
    pub fn from_env() -> Result<Self, ServeError> {
        let var = |k: &str| std::env::var(k).ok().filter(|v| !v.is_empty());
        let secret = var("OOCRAN_SECRET").ok_or_else(|| ServeError::BadConfig("OOCRAN_SECRET is not set".into()))?;
        let mut cfg = ServerConfig::new(secret);
        if let Some(p) = var("OOCRAN_PORT") {
            cfg.port = p
                .parse()
                .map_err(|_| ServeError::BadConfig(format!("OOCRAN_PORT `{p}` is not a port")))?;
        }
        cfg.scenario = var("OOCRAN_SCENARIO").map(PathBuf::from);
        for scope in [Scope::Wip, Scope::Wsp, Scope::Wtp] {
            if let Some(t) = var(&format!("OOCRAN_TOKEN_{scope}")) {
                cfg.tokens.insert(scope, t);
            }
        }
        cfg.callback_url = var("OOCRAN_CALLBACK_URL");
        Ok(cfg)
    }

    /// The configured scenario, or the default one on a wall-clock timeline.
    pub fn load_scenario(&self) -> Result<Scenario, ServeError> {
        match &self.scenario {
            Some(p) => Ok(Scenario::load(p)?),
            None => {
                let mut sc = Scenario::default();
                sc.clock.mode = ClockMode::Realtime;
                Ok(sc)
            }
        }
    }
}

struct Plane {
    cp: ControlPlane,
    published: usize,
}

struct Shared {
    plane: Mutex<Plane>,
    events: broadcast::Sender<EngineEvent>,
    tokens: BTreeMap<Scope, String>,
    idempotency: Mutex<HashMap<String, (StatusCode, Bytes)>>,
    callback_url: String,
}

#[derive(Clone)]
pub struct AppState(Arc<Shared>);

impl AppState {
    pub fn new(cp: ControlPlane, tokens: BTreeMap<Scope, String>, callback_url: impl Into<String>) -> Self {
        let (events, _) = broadcast::channel(4096);
        AppState(Arc::new(Shared {
            plane: Mutex::new(Plane { cp, published: 0 }),
            events,
            tokens,
            idempotency: Mutex::new(HashMap::new()),
            callback_url: callback_url.into(),
        }))
    }

    fn lock(&self) -> MutexGuard<'_, Plane> {
        self.0.plane.lock().unwrap_or_else(|p| p.into_inner())
    }

    /// Runs `f` against the control plane and broadcasts the events it
    /// produced.
    pub fn with_plane<R>(&self, f: impl FnOnce(&mut ControlPlane) -> R) -> R {
        let mut plane = self.lock();
        let out = f(&mut plane.cp);
        let events = plane.cp.engine.events();
        for e in &events[plane.published..] {
            let _ = self.0.events.send(e.clone());
        }
        plane.published = events.len();
        out
    }

    /// Advances the infrastructure: boots due VMs under a wall clock, or
    /// jumps straight past pending boots under a virtual one.
    pub fn tick(&self) {
        self.with_plane(|cp| match cp.engine.vim().clock_mode() {
            ClockMode::Realtime => cp.engine.tick(),
            ClockMode::Virtual => {
                let _ = cp.engine.run_until_settled();
            }
        });
    }

    /// Posts queued alarms to the callback URL off the async runtime.
    pub async fn deliver_outbox(&self) {
        let (alarms, secret) = self.with_plane(|cp| (cp.take_outbox(), cp.secret().to_string()));
        if alarms.is_empty() {
            return;
        }
        let Ok(endpoint) = WebhookEndpoint::new(self.0.callback_url.clone(), secret) else {
            return;
        };
        let results = tokio::task::spawn_blocking(move || {
            let mut transport = HttpTransport::default();
            alarms
                .iter()
                .map(|a| deliver(a, &endpoint, &mut transport, &DeliveryPolicy::default()))
                .collect::<Vec<_>>()
        })
        .await;
        let Ok(results) = results else { return };
        self.with_plane(|cp| {
            for r in results {
                match r {
                    Ok(receipt) => cp.record_receipt(receipt),
                    Err(failed) => {
                        tracing::warn!("{failed}");
                        cp.dead_letter(failed.alarm);
                    }
                }
            }
        });
    }
}

fn error(status: u16, msg: impl ToString) -> Response {
    let code = StatusCode::from_u16(status).unwrap_or(StatusCode::INTERNAL_SERVER_ERROR);
    (
        code,
        Json(ErrorBody {
            error: msg.to_string(),
            detail: None,
        }),
    )
        .into_response()
}

fn engine_error(e: EngineError) -> Response {
    let status = engine_status(&e);
    let detail = match &e {
        EngineError::ValidationFailed(report) => serde_json::to_value(report).ok(),
        _ => None,
    };
    let code = StatusCode::from_u16(status).unwrap_or(StatusCode::INTERNAL_SERVER_ERROR);
    (
        code,
        Json(ErrorBody {
            error: e.to_string(),
            detail,
        }),
    )
        .into_response()
}

fn monitor_error(e: MonitorError) -> Response {
    let status = match e {
        MonitorError::UnknownRule(_) => 404,
        MonitorError::Journal(_) => 500,
        _ => 409,
    };
    error(status, e)
}

fn ns_id(raw: &str) -> Result<NsId, Response> {
    raw.parse().map_err(|_| error(404, format!("unknown network service {raw}")))
}

fn view(cp: &ControlPlane, id: NsId) -> Option<NsView> {
    let ns = cp.engine.ns(id)?.clone();
    let vnfs = cp.engine.vnfs_of(id).into_iter().cloned().collect();
    Some(NsView { ns, vnfs })
}

/// Scopes allowed to call an endpoint; `None` means no bearer token is
/// needed.
fn allowed(method: &Method, path: &str) -> Option<&'static [Scope]> {
    const ANY: &[Scope] = &[Scope::Wip, Scope::Wsp, Scope::Wtp];
    const OPERATE: &[Scope] = &[Scope::Wip, Scope::Wsp];
    const INFRA: &[Scope] = &[Scope::Wip];
    if path == "/alerts/messages" {
        return None;
    }
    if *method == Method::GET || path == "/metrics" || path == "/vwis/plan" {
        return Some(ANY);
    }
    if path.starts_with("/vwis/") {
        return Some(INFRA);
    }
    Some(OPERATE)
}

async fn auth(State(state): State<AppState>, req: Request, next: Next) -> Response {
    let tokens = &state.0.tokens;
    if tokens.is_empty() {
        return next.run(req).await;
    }
    let Some(scopes) = allowed(req.method(), req.uri().path()) else {
        return next.run(req).await;
    };
    let presented = req
        .headers()
        .get(header::AUTHORIZATION)
        .and_then(|v| v.to_str().ok())
        .and_then(|v| v.strip_prefix("Bearer "));
    let Some(scope) = presented.and_then(|p| tokens.iter().find(|(_, t)| t.as_str() == p).map(|(s, _)| *s)) else {
        return error(401, "missing or unknown bearer token");
    };
    if !scopes.contains(&scope) {
        return error(403, format!("scope {scope} may not call this endpoint"));
    }
    next.run(req).await
}

/// Replays the stored response for a repeated `Idempotency-Key`.
async fn idempotency(State(state): State<AppState>, req: Request, next: Next) -> Response {
    if req.method() == Method::GET {
        return next.run(req).await;
    }
    let Some(key) = req
        .headers()
        .get("idempotency-key")
        .and_then(|v| v.to_str().ok())
        .map(|k| format!("{} {} {k}", req.method(), req.uri().path()))
    else {
        return next.run(req).await;
    };
    let cached = state.0.idempotency.lock().unwrap_or_else(|p| p.into_inner()).get(&key).cloned();
    if let Some((status, body)) = cached {
        return json_bytes(status, body);
    }
    let resp = next.run(req).await;
    let status = resp.status();
    let Ok(body) = to_bytes(resp.into_body(), usize::MAX).await else {
        return error(500, "response body unavailable");
    };
    if !status.is_server_error() {
        state
            .0
            .idempotency
            .lock()
            .unwrap_or_else(|p| p.into_inner())
            .insert(key, (status, body.clone()));
    }
    json_bytes(status, body)
}

fn json_bytes(status: StatusCode, body: Bytes) -> Response {
    let mut resp = Response::new(Body::from(body));
    *resp.status_mut() = status;
    resp.headers_mut()
        .insert(header::CONTENT_TYPE, HeaderValue::from_static("application/json"));
    resp
}

async fn list_nss(State(st): State<AppState>) -> Response {
    st.with_plane(|cp| {
        let ids: Vec<NsId> = cp.engine.network_services().map(|n| n.id).collect();
        let views: Vec<NsView> = ids.into_iter().filter_map(|id| view(cp, id)).collect();
        Json(views).into_response()
    })
}

async fn create_ns(State(st): State<AppState>, Json(desc): Json<NsDescriptor>) -> Response {
    st.with_plane(|cp| match cp.engine.create_ns(desc) {
        Ok(id) => (StatusCode::ACCEPTED, Json(view(cp, id))).into_response(),
        Err(e) => engine_error(e),
    })
}

async fn get_ns(State(st): State<AppState>, Path(raw): Path<String>) -> Response {
    let id = match ns_id(&raw) {
        Ok(id) => id,
        Err(r) => return r,
    };
    st.with_plane(|cp| match view(cp, id) {
        Some(v) => Json(v).into_response(),
        None => engine_error(EngineError::UnknownNs(id)),
    })
}

async fn delete_ns(State(st): State<AppState>, Path(raw): Path<String>) -> Response {
    let id = match ns_id(&raw) {
        Ok(id) => id,
        Err(r) => return r,
    };
    st.with_plane(|cp| match cp.engine.delete_ns(id) {
        Ok(()) => (StatusCode::ACCEPTED, Json(view(cp, id))).into_response(),
        Err(e) => engine_error(e),
    })
}

async fn patch_ns(State(st): State<AppState>, Path(raw): Path<String>, Json(patch): Json<NsPatch>) -> Response {
    let id = match ns_id(&raw) {
        Ok(id) => id,
        Err(r) => return r,
    };
    st.with_plane(|cp| match cp.reconfigure(id, patch) {
        Ok(tasks) => (StatusCode::ACCEPTED, Json(json!({ "tasks": tasks, "ns": view(cp, id) }))).into_response(),
        Err(ControlError::Engine(e)) => engine_error(e),
        Err(ControlError::Monitor(e)) => monitor_error(e),
        Err(e) => error(500, e),
    })
}

async fn list_actuators(State(st): State<AppState>) -> Response {
    st.with_plane(|cp| Json(cp.engine.actuators().cloned().collect::<Vec<_>>()).into_response())
}

async fn create_actuator(State(st): State<AppState>, Json(a): Json<Actuator>) -> Response {
    st.with_plane(|cp| match cp.engine.register_actuator(a.clone()) {
        Ok(()) => (StatusCode::CREATED, Json(a)).into_response(),
        Err(e) => engine_error(e),
    })
}

#[derive(Deserialize)]
struct MetricIn {
    vnf_id: VnfId,
    metric: String,
    value: f64,
    /// Defaults to the current simulated time.
    #[serde(default)]
    ts: Option<SimTime>,
}

async fn push_metric(State(st): State<AppState>, Json(m): Json<MetricIn>) -> Response {
    if !m.value.is_finite() {
        return error(422, "metric value must be finite");
    }
    let resp = st.with_plane(|cp| {
        let ts = m.ts.unwrap_or_else(|| cp.engine.now());
        let sample = MetricSample {
            vnf_id: m.vnf_id,
            metric: m.metric,
            value: m.value,
            ts,
        };
        match cp.ingest(sample) {
            Ok(alarms) => (StatusCode::ACCEPTED, Json(json!({ "alarms": alarms }))).into_response(),
            Err(ControlError::Monitor(e)) => monitor_error(e),
            Err(e) => error(500, e),
        }
    });
    let bg = st.clone();
    tokio::spawn(async move { bg.deliver_outbox().await });
    resp
}

#[derive(Deserialize)]
struct MetricQuery {
    vnf_id: VnfId,
    metric: String,
    #[serde(default)]
    start: Option<f64>,
    #[serde(default)]
    end: Option<f64>,
}

async fn query_metrics(State(st): State<AppState>, Query(q): Query<MetricQuery>) -> Response {
    let start = SimTime::from_secs_f64(q.start.unwrap_or(0.0));
    let end = q.end.map_or(SimTime::from_nanos(u64::MAX), SimTime::from_secs_f64);
    st.with_plane(|cp| Json(cp.monitor.query(q.vnf_id, &q.metric, start, end)).into_response())
}

async fn receive_alert(State(st): State<AppState>, body: Bytes) -> Response {
    st.with_plane(|cp| match cp.receive_body(&body) {
        Ok(outcome) => (StatusCode::ACCEPTED, Json(outcome)).into_response(),
        Err(e) => error(e.http_status(), e),
    })
}

#[derive(Deserialize)]
struct PlanQuery {
    #[serde(default)]
    model: Option<String>,
}

async fn plan(State(st): State<AppState>, Query(q): Query<PlanQuery>, Json(vwi): Json<VwiDescriptor>) -> Response {
    st.with_plane(|cp| {
        let cfg = cp.engine.config();
        let mut model = cfg.time_model.clone();
        match q.model.as_deref().map(str::to_ascii_uppercase).as_deref() {
            None => {}
            Some("TABLE") => model.mode = TimeModelMode::Table,
            Some("LINEAR") => model.mode = TimeModelMode::Linear,
            Some(other) => return error(422, format!("unknown time model `{other}`")),
        }
        match plan_vwi(&vwi, &model) {
            Ok(plan) => {
                let descriptor = vwi_ns_descriptor(&vwi.name, vwi.channel_bandwidth_hz, &plan, &cfg.vwi_template);
                Json(PlanResponse { plan, descriptor }).into_response()
            }
            Err(e) => engine_error(e.into()),
        }
    })
}

async fn swap(State(st): State<AppState>, Path(raw): Path<String>, Json(req): Json<SwapRequest>) -> Response {
    let id = match ns_id(&raw) {
        Ok(id) => id,
        Err(r) => return r,
    };
    st.with_plane(|cp| {
        let started = match (req.strategy, req.descriptor, req.vwi) {
            (SwapStrategy::Repository, _, _) => cp.engine.swap_from_repository(id, &req.demand),
            (s, Some(d), _) => cp.engine.begin_swap(id, d, s),
            (s, None, Some(v)) => cp.engine.swap_to_vwi(id, &v, s),
            (_, None, None) => return error(422, "swap needs `descriptor` or `vwi`"),
        };
        match started.and_then(|sid| cp.engine.swap_report(sid).cloned()) {
            Ok(report) => (StatusCode::ACCEPTED, Json(report)).into_response(),
            Err(e) => engine_error(e),
        }
    })
}

async fn get_swap(State(st): State<AppState>, Path(raw): Path<String>) -> Response {
    let Ok(id) = raw.parse::<SwapId>() else {
        return error(404, format!("unknown swap {raw}"));
    };
    st.with_plane(|cp| match cp.engine.swap_report(id) {
        Ok(r) => Json(r.clone()).into_response(),
        Err(e) => engine_error(e),
    })
}

async fn infrastructure(State(st): State<AppState>) -> Response {
    st.with_plane(|cp| Json(cp.engine.infrastructure()).into_response())
}

#[derive(Deserialize)]
struct EventsQuery {
    #[serde(default)]
    since: usize,
}

fn frame(e: &EngineEvent) -> Result<Event, Infallible> {
    Ok(Event::default().data(serde_json::to_string(e).unwrap_or_default()))
}

/// Replays the log from `since`, then follows live events.
async fn events(
    State(st): State<AppState>,
    Query(q): Query<EventsQuery>,
) -> Sse<impl Stream<Item = Result<Event, Infallible>>> {
    let (backlog, rx) = st.with_plane(|cp| {
        let all = cp.engine.events();
        let from = q.since.min(all.len());
        (all[from..].to_vec(), st.0.events.subscribe())
    });
    let live = stream::unfold(rx, |mut rx| async move {
        loop {
            match rx.recv().await {
                Ok(e) => return Some((frame(&e), rx)),
                Err(broadcast::error::RecvError::Lagged(_)) => continue,
                Err(broadcast::error::RecvError::Closed) => return None,
            }
        }
    });
    let replay = stream::iter(backlog.iter().map(frame).collect::<Vec<_>>());
    Sse::new(replay.chain(live)).keep_alive(KeepAlive::default())
}

pub fn router(state: AppState) -> Router {
    Router::new()
        .route("/nss", get(list_nss).post(create_ns))
        .route("/nss/{id}", get(get_ns).delete(delete_ns).patch(patch_ns))
        .route("/actuators", get(list_actuators).post(create_actuator))
        .route("/metrics", post(push_metric))
        .route("/metrics/query", get(query_metrics))
        .route("/alerts/messages", post(receive_alert))
        .route("/vwis/plan", post(plan))
        .route("/vwis/{id}/swap", post(swap))
        .route("/swaps/{id}", get(get_swap))
        .route("/infrastructure", get(infrastructure))
        .route("/events", get(events))
        .layer(middleware::from_fn_with_state(state.clone(), idempotency))
        .layer(middleware::from_fn_with_state(state.clone(), auth))
        .with_state(state)
}

fn build_state(cfg: &ServerConfig, addr: SocketAddr) -> Result<AppState, ServeError> {
    if cfg.secret.is_empty() {
        return Err(ServeError::BadConfig("shared secret must not be empty".into()));
    }
    let sc = cfg.load_scenario()?;
    let cp = ControlPlane::from_scenario(&sc, cfg.secret.clone())?;
    let callback = cfg
        .callback_url
        .clone()
        .unwrap_or_else(|| format!("http://127.0.0.1:{}/alerts/messages", addr.port()));
    Ok(AppState::new(cp, cfg.tokens.clone(), callback))
}

fn bind(cfg: &ServerConfig) -> Result<std::net::TcpListener, ServeError> {
    let listener = std::net::TcpListener::bind((cfg.bind, cfg.port)).map_err(|e| match e.kind() {
        std::io::ErrorKind::AddrInUse => ServeError::PortInUse(cfg.port),
        _ => ServeError::Io(e),
    })?;
    listener.set_nonblocking(true)?;
    Ok(listener)
}

async fn run(
    listener: std::net::TcpListener,
    state: AppState,
    tick: Duration,
    shutdown: impl std::future::Future<Output = ()> + Send + 'static,
) -> Result<(), ServeError> {
    let listener = tokio::net::TcpListener::from_std(listener)?;
    let ticker = state.clone();
    let tick_task = tokio::spawn(async move {
        let mut interval = tokio::time::interval(tick);
        loop {
            interval.tick().await;
            ticker.tick();
            ticker.deliver_outbox().await;
        }
    });
    let result = axum::serve(listener, router(state)).with_graceful_shutdown(shutdown).await;
    tick_task.abort();
    Ok(result?)
}

/// Serves until the process is interrupted.
pub async fn serve(cfg: ServerConfig) -> Result<(), ServeError> {
    let listener = bind(&cfg)?;
    let state = build_state(&cfg, listener.local_addr()?)?;
    tracing::info!("listening on {}", listener.local_addr()?);
    run(listener, state, cfg.tick, async {
        let _ = tokio::signal::ctrl_c().await;
    })
    .await
}

/// A server on its own thread and runtime; stopped when dropped.
pub struct RunningServer {
    pub addr: SocketAddr,
    pub state: AppState,
    shutdown: Option<oneshot::Sender<()>>,
    thread: Option<std::thread::JoinHandle<()>>,
}

impl RunningServer {
    pub fn url(&self) -> String {
        format!("http://{}", self.addr)
    }
}

impl Drop for RunningServer {
    fn drop(&mut self) {
        if let Some(tx) = self.shutdown.take() {
            let _ = tx.send(());
        }
        if let Some(t) = self.thread.take() {
            let _ = t.join();
        }
    }
}

pub fn spawn_background(cfg: ServerConfig) -> Result<RunningServer, ServeError> {
    let listener = bind(&cfg)?;
    let addr = listener.local_addr()?;
    let state = build_state(&cfg, addr)?;
    let runtime = tokio::runtime::Builder::new_multi_thread()
        .worker_threads(2)
        .enable_all()
        .build()?;
    let (tx, rx) = oneshot::channel::<()>();
    let served = state.clone();
    let tick = cfg.tick;
    let thread = std::thread::spawn(move || {
        let result = runtime.block_on(run(listener, served, tick, async {
            let _ = rx.await;
        }));
        if let Err(e) = result {
            tracing::error!("server stopped: {e}");
        }
    });
    Ok(RunningServer {
        addr,
        state,
        shutdown: Some(tx),
        thread: Some(thread),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn alarm_receiver_needs_no_token() {
        assert_eq!(allowed(&Method::POST, "/alerts/messages"), None);
        assert_eq!(allowed(&Method::POST, "/vwis/ns-1/swap"), Some(&[Scope::Wip][..]));
        assert!(allowed(&Method::GET, "/nss").unwrap().contains(&Scope::Wtp));
        assert!(!allowed(&Method::DELETE, "/nss/ns-1").unwrap().contains(&Scope::Wtp));
    }

    #[test]
    fn env_config_requires_secret() {
        // Only the parsing helper is exercised; the environment is shared.
        let cfg = ServerConfig::new("s");
        assert_eq!(cfg.port, DEFAULT_PORT);
        assert!(cfg.tokens.is_empty());
    }
}
