//! REST service and its blocking client.

mod client;
mod server;

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::engine::{EngineError, SwapReport};
use crate::model::{NetworkService, NsDescriptor, VnfInstance};
use crate::planner::{DeploymentPlan, SwapStrategy, VwiDescriptor};

pub use client::{ApiClient, ClientError, HttpTransport};
pub use server::{router, serve, spawn_background, AppState, RunningServer, ServeError, ServerConfig};

/// Operator roles; each bearer token carries one.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum Scope {
    /// Infrastructure provider: owns hosts, spectrum and VWI swaps.
    Wip,
    /// Service provider: deploys and manages network services.
    Wsp,
    /// Test provider: read access, planning and metrics.
    Wtp,
}

impl fmt::Display for Scope {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Scope::Wip => "WIP",
            Scope::Wsp => "WSP",
            Scope::Wtp => "WTP",
        })
    }
}

impl FromStr for Scope {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_uppercase().as_str() {
            "WIP" => Ok(Scope::Wip),
            "WSP" => Ok(Scope::Wsp),
            "WTP" => Ok(Scope::Wtp),
            _ => Err(format!("unknown scope `{s}`")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorBody {
    pub error: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub detail: Option<serde_json::Value>,
}

/// A service together with its live VNF instances.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NsView {
    #[serde(flatten)]
    pub ns: NetworkService,
    pub vnfs: Vec<VnfInstance>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlanResponse {
    pub plan: DeploymentPlan,
    /// Ready to POST to `/nss`.
    pub descriptor: NsDescriptor,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SwapRequest {
    pub strategy: SwapStrategy,
    #[serde(default)]
    pub vwi: Option<VwiDescriptor>,
    #[serde(default)]
    pub descriptor: Option<NsDescriptor>,
    #[serde(default)]
    pub demand: BTreeMap<String, f64>,
}

pub type SwapResponse = SwapReport;

pub(crate) fn engine_status(e: &EngineError) -> u16 {
    use EngineError::*;
    match e {
        ValidationFailed(_) | ImmutableField(_) | InvalidPatch(_) | Planner(_) => 422,
        QuotaExceeded(_) => 429,
        UnknownNs(_) | UnknownVnf(_) | UnknownActuator(_) | UnknownAlarm(_) | UnknownSwap(_) => 404,
        IllegalTransition(_) | DuplicateActuator(_) | NsNotActive { .. } | SwapTooSoon { .. } => 409,
        InsufficientCapacity(_) | Vim(_) | Rf(_) => 503,
        Queue(_) => 500,
    }
}
