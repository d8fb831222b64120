//! Declarative network-service and VNF templates.
//!
//! Descriptor files are TOML documents with top-level keys `name`,
//! `networks`, `vnfs` and `actuator_bindings`. The same structure renders
//! to JSON for the REST API.

use std::collections::BTreeSet;
use std::fmt;

use serde::{Deserialize, Serialize};

use super::cidr::Ipv4Cidr;
use crate::ids::RrhId;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum VnfRole {
    EnodebTx,
    EnodebRx,
    Ue,
    ChannelSim,
    DataSource,
    SpectrumAnalyzer,
    Controller,
    CoreFn,
}

impl VnfRole {
    pub const ALL: [VnfRole; 8] = [
        VnfRole::EnodebTx,
        VnfRole::EnodebRx,
        VnfRole::Ue,
        VnfRole::ChannelSim,
        VnfRole::DataSource,
        VnfRole::SpectrumAnalyzer,
        VnfRole::Controller,
        VnfRole::CoreFn,
    ];

    /// Roles that drive a radio front end and therefore need spectrum.
    pub fn needs_radio(self) -> bool {
        matches!(
            self,
            VnfRole::EnodebTx | VnfRole::EnodebRx | VnfRole::Ue | VnfRole::SpectrumAnalyzer
        )
    }
}

impl fmt::Display for VnfRole {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = serde_json::to_value(self).ok();
        let s = s.as_ref().and_then(|v| v.as_str()).unwrap_or("?");
        f.write_str(s)
    }
}

impl std::str::FromStr for VnfRole {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        serde_json::from_value(serde_json::Value::String(s.to_ascii_uppercase()))
            .map_err(|_| format!("unknown VNF role `{s}`"))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum NetworkRole {
    Dataflow,
    Management,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Flavor {
    pub vcpus: u32,
    pub ram_mb: u64,
}

/// Planar position in metres.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Point {
    pub x: f64,
    pub y: f64,
}

impl Point {
    pub fn new(x: f64, y: f64) -> Self {
        Point { x, y }
    }

    pub fn distance(&self, other: &Point) -> f64 {
        (self.x - other.x).hypot(self.y - other.y)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RadioRequirements {
    pub bandwidth_hz: f64,
    pub tx_power_dbm: f64,
    /// Transmitter site. Defaults to the origin.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub location: Option<Point>,
    /// Physical radio head to attach to. Simulated radio links leave this empty.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rrh: Option<RrhId>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VnfDescriptor {
    pub name: String,
    pub image: String,
    pub flavor: Flavor,
    pub role: VnfRole,
    pub networks: Vec<NetworkRole>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub radio_requirements: Option<RadioRequirements>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct NetworkSpec {
    pub role: NetworkRole,
    pub cidr: Ipv4Cidr,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ActuatorBinding {
    pub alarm_id: String,
    pub actuator: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NsDescriptor {
    pub name: String,
    pub networks: Vec<NetworkSpec>,
    pub vnfs: Vec<VnfDescriptor>,
    #[serde(default)]
    pub actuator_bindings: Vec<ActuatorBinding>,
}

#[derive(Debug, thiserror::Error)]
pub enum DescriptorFormatError {
    #[error("descriptor parse error: {0}")]
    Toml(#[from] toml::de::Error),
    #[error("descriptor render error: {0}")]
    TomlRender(#[from] toml::ser::Error),
    #[error("descriptor JSON error: {0}")]
    Json(#[from] serde_json::Error),
}

impl NsDescriptor {
    pub fn from_toml_str(s: &str) -> Result<Self, DescriptorFormatError> {
        Ok(toml::from_str(s)?)
    }

    pub fn to_toml_string(&self) -> Result<String, DescriptorFormatError> {
        Ok(toml::to_string_pretty(self)?)
    }

    pub fn from_json_str(s: &str) -> Result<Self, DescriptorFormatError> {
        Ok(serde_json::from_str(s)?)
    }

    pub fn to_json_string(&self) -> Result<String, DescriptorFormatError> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn network(&self, role: NetworkRole) -> Option<&NetworkSpec> {
        self.networks.iter().find(|n| n.role == role)
    }

    pub fn binding(&self, alarm_id: &str) -> Option<&ActuatorBinding> {
        self.actuator_bindings.iter().find(|b| b.alarm_id == alarm_id)
    }

    /// The minimal LTE downlink service: a data source feeding an eNodeB
    /// transmitter, both on a management and a data-flow subnet.
    pub fn lte_downlink() -> Self {
        let both = vec![NetworkRole::Dataflow, NetworkRole::Management];
        NsDescriptor {
            name: "lte-downlink".into(),
            networks: vec![
                NetworkSpec {
                    role: NetworkRole::Management,
                    cidr: "10.0.0.0/24".parse().expect("static cidr"),
                },
                NetworkSpec {
                    role: NetworkRole::Dataflow,
                    cidr: "10.0.1.0/24".parse().expect("static cidr"),
                },
            ],
            vnfs: vec![
                VnfDescriptor {
                    name: "data-source".into(),
                    image: "ubuntu-16.04".into(),
                    flavor: Flavor { vcpus: 1, ram_mb: 1024 },
                    role: VnfRole::DataSource,
                    networks: both.clone(),
                    radio_requirements: None,
                },
                VnfDescriptor {
                    name: "enodeb-tx".into(),
                    image: "srslte-enb".into(),
                    flavor: Flavor { vcpus: 2, ram_mb: 2048 },
                    role: VnfRole::EnodebTx,
                    networks: both,
                    radio_requirements: Some(RadioRequirements {
                        bandwidth_hz: 1.4e6,
                        tx_power_dbm: 10.0,
                        location: None,
                        rrh: None,
                    }),
                },
            ],
            actuator_bindings: vec![],
        }
    }
}

/// One broken invariant, naming the rule and the offending field.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Violation {
    pub invariant: String,
    pub field: String,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.field, self.invariant)
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub violations: Vec<Violation>,
}

impl ValidationReport {
    pub fn is_empty(&self) -> bool {
        self.violations.is_empty()
    }

    pub fn mentions(&self, needle: &str) -> bool {
        self.violations
            .iter()
            .any(|v| v.invariant.contains(needle) || v.field.contains(needle))
    }

    fn push(&mut self, field: impl Into<String>, invariant: impl Into<String>) {
        self.violations.push(Violation {
            invariant: invariant.into(),
            field: field.into(),
        });
    }
}

impl fmt::Display for ValidationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let parts: Vec<String> = self.violations.iter().map(|v| v.to_string()).collect();
        f.write_str(&parts.join("; "))
    }
}

/// Checks every descriptor invariant. Never fails; problems are reported.
pub fn validate_descriptor(d: &NsDescriptor) -> ValidationReport {
    let mut report = ValidationReport::default();

    if d.name.trim().is_empty() {
        report.push("name", "name must be non-empty");
    }

    let mgmt = d.networks.iter().filter(|n| n.role == NetworkRole::Management).count();
    let dataflow = d.networks.iter().filter(|n| n.role == NetworkRole::Dataflow).count();
    if mgmt != 1 {
        report.push("networks", "exactly one MANAGEMENT network");
    }
    if dataflow > 1 {
        report.push("networks", "at most one DATAFLOW network");
    }
    for (i, net) in d.networks.iter().enumerate() {
        if net.cidr.block_size() < 4 {
            report.push(format!("networks[{i}].cidr"), "cidr must span at least 4 addresses");
        }
    }
    for (i, a) in d.networks.iter().enumerate() {
        for b in &d.networks[i + 1..] {
            if a.cidr.overlaps(&b.cidr) {
                report.push(format!("networks[{i}].cidr"), "network prefixes must not overlap");
            }
        }
    }

    if d.vnfs.is_empty() {
        report.push("vnfs", "at least one VNF");
    }
    let mut names = BTreeSet::new();
    for (i, vnf) in d.vnfs.iter().enumerate() {
        let at = |f: &str| format!("vnfs[{i}].{f}");
        if vnf.name.trim().is_empty() {
            report.push(at("name"), "name must be non-empty");
        } else if !names.insert(vnf.name.as_str()) {
            report.push(at("name"), "VNF names unique within the descriptor");
        }
        if vnf.flavor.vcpus == 0 {
            report.push(at("flavor.vcpus"), "vcpus must be positive");
        }
        if vnf.flavor.ram_mb == 0 {
            report.push(at("flavor.ram_mb"), "ram_mb must be positive");
        }
        if !vnf.networks.contains(&NetworkRole::Management) {
            report.push(at("networks"), "every VNF references the MANAGEMENT network");
        }
        if vnf.networks.contains(&NetworkRole::Dataflow) && dataflow == 0 {
            report.push(at("networks"), "VNF references a DATAFLOW network the descriptor does not declare");
        }
        match &vnf.radio_requirements {
            None if vnf.role.needs_radio() => {
                report.push(at("radio_requirements"), "radio_requirements required for radio roles");
            }
            Some(r) => {
                if !(r.bandwidth_hz > 0.0) || !r.bandwidth_hz.is_finite() {
                    report.push(at("radio_requirements.bandwidth_hz"), "bandwidth_hz must be positive");
                }
                if !r.tx_power_dbm.is_finite() {
                    report.push(at("radio_requirements.tx_power_dbm"), "tx_power_dbm must be finite");
                }
            }
            None => {}
        }
    }

    let mut alarm_ids = BTreeSet::new();
    for (i, b) in d.actuator_bindings.iter().enumerate() {
        if !alarm_ids.insert(b.alarm_id.as_str()) {
            report.push(
                format!("actuator_bindings[{i}].alarm_id"),
                "alarm_ids unique within the descriptor",
            );
        }
    }

    report
}
