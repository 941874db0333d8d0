//! HTTP surface: a communication server dispatching to device actors and a
//! small blocking client.

use std::collections::HashMap;
use std::net::SocketAddr;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, Mutex};
use std::thread::JoinHandle;
use std::time::{Duration, Instant};

use axum::body::Bytes;
use axum::extract::State;
use axum::http::{HeaderMap, StatusCode, Uri};
use axum::response::IntoResponse;
use axum::{Json, Router};
use serde_json::{json, Value};
use tokio::sync::oneshot;

use super::handler::{Method, RequestRecord, ResponseRecord, Twin, NOT_FOUND, UNAVAILABLE};
use super::mapping::ApiMapping;
use super::ApiError;
use crate::behavior::{WallPacer, DEFAULT_ACCELERATION};

/// Virtual send time of a request, ms after the device clock epoch.
pub const SENT_AT_HEADER: &str = "x-sent-at-ms";
pub const REQUEST_ID_HEADER: &str = "x-request-id";

/// Anything that answers device API requests for one serial.
pub trait Backend: Send + 'static {
    fn serial(&self) -> &str;
    fn handle(&mut self, req: &RequestRecord) -> Result<ResponseRecord, ApiError>;
}

impl Backend for Twin {
    fn serial(&self) -> &str {
        Twin::serial(self)
    }

    fn handle(&mut self, req: &RequestRecord) -> Result<ResponseRecord, ApiError> {
        Twin::handle(self, req)
    }
}

type Shared = Arc<Mutex<Box<dyn Backend>>>;

struct ServerState {
    devices: HashMap<String, Shared>,
    pacer: WallPacer,
    next_id: AtomicU64,
}

#[derive(Debug, Clone)]
pub struct ServerOptions {
    /// Virtual-time acceleration used for requests without a send-time
    /// header.
    pub acceleration: f64,
}

impl Default for ServerOptions {
    fn default() -> Self {
        Self {
            acceleration: DEFAULT_ACCELERATION,
        }
    }
}

/// A running server. Dropping the handle stops it.
#[derive(Debug)]
pub struct ServerHandle {
    addr: SocketAddr,
    stop: Option<oneshot::Sender<()>>,
    thread: Option<JoinHandle<()>>,
}

impl ServerHandle {
    pub fn addr(&self) -> SocketAddr {
        self.addr
    }

    pub fn base_url(&self) -> String {
        format!("http://{}", self.addr)
    }

    /// Blocks until the server stops.
    pub fn wait(mut self) {
        if let Some(t) = self.thread.take() {
            let _ = t.join();
        }
    }

    pub fn shutdown(mut self) {
        self.stop_now();
    }

    fn stop_now(&mut self) {
        if let Some(tx) = self.stop.take() {
            let _ = tx.send(());
        }
        if let Some(t) = self.thread.take() {
            let _ = t.join();
        }
    }
}

impl Drop for ServerHandle {
    fn drop(&mut self) {
        self.stop_now();
    }
}

/// Starts an HTTP server on its own runtime thread. Requests are routed by
/// the serial in the second path segment (`/devices/{serial}/...` or
/// `/karie/{serial}/...`); each device handles one request at a time while
/// distinct devices proceed in parallel.
pub fn serve(
    backends: Vec<Box<dyn Backend>>,
    bind: &str,
    options: ServerOptions,
) -> Result<ServerHandle, ApiError> {
    let mut devices = HashMap::new();
    for b in backends {
        let serial = b.serial().to_string();
        if devices
            .insert(serial.clone(), Arc::new(Mutex::new(b)))
            .is_some()
        {
            return Err(ApiError::DuplicateSerial(serial));
        }
    }
    let listener = std::net::TcpListener::bind(bind)
        .map_err(|e| ApiError::BindFailure(format!("{bind}: {e}")))?;
    listener
        .set_nonblocking(true)
        .map_err(|e| ApiError::BindFailure(e.to_string()))?;
    let addr = listener
        .local_addr()
        .map_err(|e| ApiError::BindFailure(e.to_string()))?;
    let state = Arc::new(ServerState {
        devices,
        pacer: WallPacer::new(options.acceleration),
        next_id: AtomicU64::new(1),
    });
    let app = Router::new().fallback(dispatch).with_state(state);
    let runtime = tokio::runtime::Builder::new_multi_thread()
        .enable_all()
        .build()
        .map_err(|e| ApiError::BindFailure(e.to_string()))?;
    let listener = {
        let _guard = runtime.enter();
        tokio::net::TcpListener::from_std(listener)
            .map_err(|e| ApiError::BindFailure(e.to_string()))?
    };
    let (tx, rx) = oneshot::channel();
    let thread = std::thread::spawn(move || {
        runtime.block_on(async move {
            let shutdown = async {
                let _ = rx.await;
            };
            if let Err(e) = axum::serve(listener, app)
                .with_graceful_shutdown(shutdown)
                .await
            {
                log::error!("server stopped: {e}");
            }
        });
    });
    log::info!("listening on {addr}");
    Ok(ServerHandle {
        addr,
        stop: Some(tx),
        thread: Some(thread),
    })
}

fn error_response(status: u16, message: String) -> (StatusCode, Json<Value>) {
    let code = StatusCode::from_u16(status).unwrap_or(StatusCode::INTERNAL_SERVER_ERROR);
    (
        code,
        Json(json!({ "status": status, "error": { "message": message } })),
    )
}

async fn dispatch(
    State(state): State<Arc<ServerState>>,
    method: axum::http::Method,
    uri: Uri,
    headers: HeaderMap,
    body: Bytes,
) -> impl IntoResponse {
    let started = Instant::now();
    let path = uri.path().to_string();
    let Some(serial) = path
        .split('/')
        .filter(|s| !s.is_empty())
        .nth(1)
        .map(str::to_string)
    else {
        return error_response(NOT_FOUND, format!("no route {path}"));
    };
    let Some(device) = state.devices.get(&serial).cloned() else {
        return error_response(NOT_FOUND, format!("unknown device {serial}"));
    };
    let Ok(method) = method.as_str().parse::<Method>() else {
        return error_response(NOT_FOUND, format!("unsupported method {method}"));
    };
    let body = if body.is_empty() {
        Value::Null
    } else {
        match serde_json::from_slice(&body) {
            Ok(v) => v,
            Err(e) => return error_response(UNAVAILABLE, format!("malformed JSON body: {e}")),
        }
    };
    let header_u64 = |name: &str| {
        headers
            .get(name)
            .and_then(|v| v.to_str().ok())
            .and_then(|v| v.parse::<u64>().ok())
    };
    let sent_at = header_u64(SENT_AT_HEADER).unwrap_or_else(|| state.pacer.virtual_now_ms());
    let id = header_u64(REQUEST_ID_HEADER)
        .unwrap_or_else(|| state.next_id.fetch_add(1, Ordering::Relaxed));
    let req = RequestRecord {
        id,
        serial,
        method,
        route: path,
        body,
        sent_at,
    };
    let result = {
        let mut guard = device.lock().unwrap_or_else(|p| p.into_inner());
        guard.handle(&req)
    };
    match result {
        Ok(mut resp) => {
            resp.response_time_ms += started.elapsed().as_millis() as u64;
            resp.body["response_time_ms"] = json!(resp.response_time_ms);
            let code =
                StatusCode::from_u16(resp.status_code).unwrap_or(StatusCode::INTERNAL_SERVER_ERROR);
            (code, Json(resp.body))
        }
        Err(e) => error_response(NOT_FOUND, e.to_string()),
    }
}

/// Blocking HTTP client for device APIs. Non-2xx statuses are responses,
/// not errors.
#[derive(Debug, Clone)]
pub struct HttpClient {
    agent: ureq::Agent,
}

impl Default for HttpClient {
    fn default() -> Self {
        Self::new(Duration::from_secs(30))
    }
}

impl HttpClient {
    pub fn new(timeout: Duration) -> Self {
        let config = ureq::Agent::config_builder()
            .http_status_as_error(false)
            .timeout_global(Some(timeout))
            .build();
        Self {
            agent: config.into(),
        }
    }

    /// Sends `req` to `base_url` + `route`. The response time is the one the
    /// device reports, or the measured round trip when it reports none.
    pub fn send(
        &self,
        base_url: &str,
        route: &str,
        req: &RequestRecord,
    ) -> Result<ResponseRecord, ApiError> {
        let url = format!("{}{}", base_url.trim_end_matches('/'), route);
        let unreachable = |e: ureq::Error| ApiError::DeviceUnreachable(format!("{url}: {e}"));
        let started = Instant::now();
        let sent_at = req.sent_at.to_string();
        let id = req.id.to_string();
        let mut resp = match req.method {
            Method::Get => self
                .agent
                .get(&url)
                .header(SENT_AT_HEADER, &sent_at)
                .header(REQUEST_ID_HEADER, &id)
                .call(),
            Method::Delete => self
                .agent
                .delete(&url)
                .header(SENT_AT_HEADER, &sent_at)
                .header(REQUEST_ID_HEADER, &id)
                .call(),
            Method::Post => self
                .agent
                .post(&url)
                .header(SENT_AT_HEADER, &sent_at)
                .header(REQUEST_ID_HEADER, &id)
                .send_json(&req.body),
            Method::Put => self
                .agent
                .put(&url)
                .header(SENT_AT_HEADER, &sent_at)
                .header(REQUEST_ID_HEADER, &id)
                .send_json(&req.body),
        }
        .map_err(unreachable)?;
        let status = resp.status().as_u16();
        let text = resp.body_mut().read_to_string().map_err(unreachable)?;
        let body: Value = serde_json::from_str(&text).unwrap_or(Value::String(text));
        let response_time_ms = body
            .get("response_time_ms")
            .and_then(Value::as_u64)
            .unwrap_or(started.elapsed().as_millis() as u64);
        Ok(ResponseRecord {
            request_id: req.id,
            status_code: status,
            response_time_ms,
            body,
        })
    }
}

/// Re-issues a twin request to the mapped vendor route on `upstream` and
/// returns the device's answer unchanged.
pub fn forward_to_device(
    client: &HttpClient,
    req: &RequestRecord,
    mapping: &ApiMapping,
    upstream: &str,
) -> Result<ResponseRecord, ApiError> {
    let route = mapping.to_device_route(&req.route)?;
    client.send(upstream, &route, req)
}
