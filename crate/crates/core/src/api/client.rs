use std::time::Duration;

use reqwest::blocking::Client;
use reqwest::Method;
use serde::de::DeserializeOwned;
use serde::Serialize;
use serde_json::Value;

use super::{ErrorBody, NsView, PlanResponse, SwapRequest, SwapResponse};
use crate::engine::InfrastructureView;
use crate::ids::{NsId, VnfId};
use crate::model::NsDescriptor;
use crate::monitor::{MetricSample, TransportResponse, WebhookTransport};
use crate::planner::VwiDescriptor;

#[derive(Debug, thiserror::Error)]
pub enum ClientError {
    #[error("request failed: {0}")]
    Transport(String),
    #[error("HTTP {status}: {message}")]
    Api { status: u16, message: String },
    #[error("unexpected response: {0}")]
    Decode(String),
}

fn http_client() -> Client {
    Client::builder()
        .timeout(Duration::from_secs(10))
        .build()
        .expect("static client configuration")
}

/// Blocking client for the REST service.
pub struct ApiClient {
    base: String,
    token: Option<String>,
    http: Client,
}

impl ApiClient {
    pub fn new(base: impl Into<String>, token: Option<String>) -> Self {
        ApiClient {
            base: base.into().trim_end_matches('/').to_string(),
            token,
            http: http_client(),
        }
    }

    pub fn base(&self) -> &str {
        &self.base
    }

    pub fn request<B: Serialize + ?Sized>(
        &self,
        method: Method,
        path: &str,
        body: Option<&B>,
        idempotency_key: Option<&str>,
    ) -> Result<Value, ClientError> {
        let mut req = self.http.request(method, format!("{}{path}", self.base));
        if let Some(t) = &self.token {
            req = req.bearer_auth(t);
        }
        if let Some(k) = idempotency_key {
            req = req.header("Idempotency-Key", k);
        }
        if let Some(b) = body {
            req = req.json(b);
        }
        let resp = req.send().map_err(|e| ClientError::Transport(e.to_string()))?;
        let status = resp.status().as_u16();
        let text = resp.text().map_err(|e| ClientError::Transport(e.to_string()))?;
        if !(200..300).contains(&status) {
            let message = serde_json::from_str::<ErrorBody>(&text)
                .map(|b| b.error)
                .unwrap_or(text);
            return Err(ClientError::Api { status, message });
        }
        if text.is_empty() {
            return Ok(Value::Null);
        }
        serde_json::from_str(&text).map_err(|e| ClientError::Decode(e.to_string()))
    }

    fn typed<T: DeserializeOwned, B: Serialize + ?Sized>(
        &self,
        method: Method,
        path: &str,
        body: Option<&B>,
    ) -> Result<T, ClientError> {
        let v = self.request(method, path, body, None)?;
        serde_json::from_value(v).map_err(|e| ClientError::Decode(e.to_string()))
    }

    pub fn list_nss(&self) -> Result<Vec<NsView>, ClientError> {
        self.typed(Method::GET, "/nss", None::<&()>)
    }

    pub fn get_ns(&self, id: NsId) -> Result<NsView, ClientError> {
        self.typed(Method::GET, &format!("/nss/{id}"), None::<&()>)
    }

    pub fn create_ns(&self, desc: &NsDescriptor) -> Result<NsView, ClientError> {
        self.typed(Method::POST, "/nss", Some(desc))
    }

    pub fn delete_ns(&self, id: NsId) -> Result<NsView, ClientError> {
        self.typed(Method::DELETE, &format!("/nss/{id}"), None::<&()>)
    }

    pub fn plan(&self, vwi: &VwiDescriptor) -> Result<PlanResponse, ClientError> {
        self.typed(Method::POST, "/vwis/plan", Some(vwi))
    }

    pub fn swap(&self, id: NsId, req: &SwapRequest) -> Result<SwapResponse, ClientError> {
        self.typed(Method::POST, &format!("/vwis/{id}/swap"), Some(req))
    }

    pub fn infrastructure(&self) -> Result<InfrastructureView, ClientError> {
        self.typed(Method::GET, "/infrastructure", None::<&()>)
    }

    pub fn metrics(&self, vnf: VnfId, metric: &str) -> Result<Vec<MetricSample>, ClientError> {
        self.typed(
            Method::GET,
            &format!("/metrics/query?vnf_id={vnf}&metric={metric}"),
            None::<&()>,
        )
    }
}

/// Posts alarm callbacks over HTTP.
pub struct HttpTransport {
    http: Client,
}

impl Default for HttpTransport {
    fn default() -> Self {
        HttpTransport { http: http_client() }
    }
}

impl WebhookTransport for HttpTransport {
    fn post(&mut self, url: &str, body: &[u8]) -> Result<TransportResponse, String> {
        let resp = self
            .http
            .post(url)
            .header("Content-Type", "application/json")
            .body(body.to_vec())
            .send()
            .map_err(|e| e.to_string())?;
        let status = resp.status().as_u16();
        Ok(TransportResponse {
            status,
            body: resp.text().unwrap_or_default(),
        })
    }
}
