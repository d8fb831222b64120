//! Scenario files: the simulated infrastructure plus an optional timeline of
//! operator actions for `simulate`.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::engine::{EngineConfig, EngineError, NsPatch, Orchestrator};
use crate::ids::{HostId, NsId, RrhId};
use crate::model::{Actuator, NsDescriptor, Point};
use crate::monitor::{AlertRule, MonitorError};
use crate::planner::{SwapStrategy, VwiDescriptor};
use crate::rf::{PoolConfig, RadioPool, RfError};
use crate::time::{Clock, ClockMode};
use crate::vim::{ComputeHost, RrhDevice, Vim, VimError};

#[derive(Debug, thiserror::Error)]
pub enum ScenarioError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("bad scenario: {0}")]
    Parse(String),
    #[error("bad scenario: {0}")]
    Invalid(String),
    #[error(transparent)]
    Vim(#[from] VimError),
    #[error(transparent)]
    Rf(#[from] RfError),
    #[error(transparent)]
    Engine(#[from] EngineError),
    #[error(transparent)]
    Monitor(#[from] MonitorError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ClockConfig {
    pub mode: ClockMode,
    /// Simulated seconds per wall-clock second in realtime mode.
    pub speed: f64,
}

impl Default for ClockConfig {
    fn default() -> Self {
        ClockConfig {
            mode: ClockMode::Virtual,
            speed: 1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HostSpec {
    pub vcpus: u32,
    pub ram_mb: u64,
    /// Number of identical hosts.
    #[serde(default = "one")]
    pub count: u32,
}

fn one() -> u32 {
    1
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RrhSpec {
    pub location: Point,
    pub max_bandwidth_hz: f64,
    pub max_tx_power_dbm: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MonitorConfig {
    pub retention: usize,
    pub journal: Option<PathBuf>,
}

impl Default for MonitorConfig {
    fn default() -> Self {
        MonitorConfig {
            retention: crate::monitor::DEFAULT_RETENTION,
            journal: None,
        }
    }
}

/// Where a deployed service comes from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DeploySource {
    /// Inline descriptor.
    Descriptor(NsDescriptor),
    /// Descriptor file, relative to the scenario file.
    File(PathBuf),
    /// A VWI planned from a coverage target.
    Vwi(VwiDescriptor),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Action {
    Deploy {
        at_s: f64,
        #[serde(flatten)]
        source: DeploySource,
    },
    Delete {
        at_s: f64,
        ns: NsId,
    },
    Reconfigure {
        at_s: f64,
        ns: NsId,
        patch: NsPatch,
    },
    Swap {
        at_s: f64,
        ns: NsId,
        strategy: SwapStrategy,
        #[serde(default)]
        vwi: Option<VwiDescriptor>,
        #[serde(default)]
        demand: BTreeMap<String, f64>,
    },
    /// Pushes `repeat` samples of a metric for the named VNF, `interval_s`
    /// apart.
    Metric {
        at_s: f64,
        ns: NsId,
        vnf: String,
        metric: String,
        value: f64,
        #[serde(default = "one")]
        repeat: u32,
        #[serde(default = "default_interval")]
        interval_s: f64,
    },
}

fn default_interval() -> f64 {
    1.0
}

impl Action {
    pub fn at_s(&self) -> f64 {
        match self {
            Action::Deploy { at_s, .. }
            | Action::Delete { at_s, .. }
            | Action::Reconfigure { at_s, .. }
            | Action::Swap { at_s, .. }
            | Action::Metric { at_s, .. } => *at_s,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Scenario {
    pub clock: ClockConfig,
    pub hosts: Vec<HostSpec>,
    pub rrhs: Vec<RrhSpec>,
    pub pool: PoolConfig,
    pub engine: EngineConfig,
    pub monitor: MonitorConfig,
    pub actuators: Vec<Actuator>,
    pub rules: Vec<AlertRule>,
    pub repository: Vec<VwiDescriptor>,
    pub actions: Vec<Action>,
    #[serde(skip)]
    pub base_dir: Option<PathBuf>,
}

impl Default for Scenario {
    /// Two 24-core hosts, five radio heads and a 20 MHz pool at 2.6 GHz.
    fn default() -> Self {
        let rrhs = (0..5)
            .map(|i| RrhSpec {
                location: Point {
                    x: 60.0 * i as f64,
                    y: 0.0,
                },
                max_bandwidth_hz: 25e6,
                max_tx_power_dbm: 20.0,
            })
            .collect();
        Scenario {
            clock: ClockConfig::default(),
            hosts: vec![HostSpec {
                vcpus: 24,
                ram_mb: 65_536,
                count: 2,
            }],
            rrhs,
            pool: PoolConfig::default(),
            engine: EngineConfig::default(),
            monitor: MonitorConfig::default(),
            actuators: Vec::new(),
            rules: Vec::new(),
            repository: Vec::new(),
            actions: Vec::new(),
            base_dir: None,
        }
    }
}

impl Scenario {
    pub fn from_toml_str(s: &str) -> Result<Self, ScenarioError> {
        let sc: Scenario = toml::from_str(s).map_err(|e| ScenarioError::Parse(e.to_string()))?;
        sc.validate()?;
        Ok(sc)
    }

    pub fn load(path: &Path) -> Result<Self, ScenarioError> {
        let text = std::fs::read_to_string(path).map_err(|source| ScenarioError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        let mut sc = Self::from_toml_str(&text)?;
        sc.base_dir = path.parent().map(Path::to_path_buf);
        Ok(sc)
    }

    pub fn validate(&self) -> Result<(), ScenarioError> {
        if self.hosts.iter().any(|h| h.vcpus == 0 || h.ram_mb == 0) {
            return Err(ScenarioError::Invalid("hosts need positive vcpus and ram_mb".into()));
        }
        if !(self.clock.speed > 0.0 && self.clock.speed.is_finite()) {
            return Err(ScenarioError::Invalid("clock.speed must be positive".into()));
        }
        if let Some(a) = self.actions.iter().find(|a| !(a.at_s() >= 0.0 && a.at_s().is_finite())) {
            return Err(ScenarioError::Invalid(format!("action time {} is not a valid instant", a.at_s())));
        }
        self.engine.time_model.validate().map_err(|e| ScenarioError::Invalid(e.to_string()))?;
        Ok(())
    }

    pub fn clock(&self) -> Clock {
        match self.clock.mode {
            ClockMode::Virtual => Clock::virtual_clock(),
            ClockMode::Realtime => Clock::realtime(self.clock.speed),
        }
    }

    pub fn build_vim(&self) -> Result<Vim, ScenarioError> {
        let mut vim = Vim::new(self.clock());
        let mut next = 1;
        for spec in &self.hosts {
            for _ in 0..spec.count {
                vim.add_host(ComputeHost::new(HostId(next), spec.vcpus, spec.ram_mb))?;
                next += 1;
            }
        }
        for (i, r) in self.rrhs.iter().enumerate() {
            vim.add_rrh(RrhDevice {
                id: RrhId(i as u64 + 1),
                location: r.location,
                max_bandwidth_hz: r.max_bandwidth_hz,
                max_tx_power_dbm: r.max_tx_power_dbm,
                attached_vnf: None,
            });
        }
        Ok(vim)
    }

    /// Infrastructure, engine, registered actuators and repository.
    pub fn build_orchestrator(&self) -> Result<Orchestrator, ScenarioError> {
        let mut o = Orchestrator::new(self.build_vim()?, RadioPool::new(self.pool.clone())?, self.engine.clone())?;
        for a in &self.actuators {
            o.register_actuator(a.clone())?;
        }
        for v in &self.repository {
            o.repository_mut().put(v.clone());
        }
        Ok(o)
    }

    /// Resolves a descriptor file path against the scenario's directory.
    pub fn resolve(&self, path: &Path) -> PathBuf {
        match &self.base_dir {
            Some(dir) if path.is_relative() => dir.join(path),
            _ => path.to_path_buf(),
        }
    }
}
