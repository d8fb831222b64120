//! Metric ingestion and alert evaluation.
//!
//! Samples are kept per `(vnf_id, metric)` stream in a bounded ring buffer.
//! Each sample re-evaluates the rules watching its metric; a rule fires once
//! when its predicate has held for `consecutive` samples in a row, and can
//! only fire again after the predicate fails at least once.

mod webhook;

use std::collections::{BTreeMap, HashMap, VecDeque};
use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::ids::{AlarmInstanceId, IdSeq, VnfId};
use crate::model::Alarm;
use crate::time::SimTime;

pub use webhook::{
    canonical_body, deliver, sign, verify_message, AlarmMessage, DeliveryFailed, DeliveryPolicy,
    DeliveryReceipt, DeliveryStatus, SignatureError, TransportResponse, WebhookEndpoint,
    WebhookTransport,
};

pub const DEFAULT_RETENTION: usize = 10_000;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricSample {
    pub vnf_id: VnfId,
    pub metric: String,
    pub value: f64,
    pub ts: SimTime,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Predicate {
    Gt,
    Lt,
    Gte,
    Lte,
}

impl Predicate {
    pub fn holds(self, value: f64, threshold: f64) -> bool {
        match self {
            Predicate::Gt => value > threshold,
            Predicate::Lt => value < threshold,
            Predicate::Gte => value >= threshold,
            Predicate::Lte => value <= threshold,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AlertRule {
    pub rule_id: String,
    pub metric: String,
    pub predicate: Predicate,
    pub threshold: f64,
    pub consecutive: u32,
    pub alarm_id: String,
    /// Restricts the rule to one VNF; `None` watches every VNF.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub vnf_id: Option<VnfId>,
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum MonitorError {
    #[error("stale sample for {vnf_id}/{metric}: {ts} is before {last}")]
    StaleSample {
        vnf_id: VnfId,
        metric: String,
        ts: SimTime,
        last: SimTime,
    },
    #[error("invalid rule: {0}")]
    InvalidRule(String),
    #[error("alarm id `{0}` already used by another rule")]
    DuplicateAlarmId(String),
    #[error("rule `{0}` already exists")]
    DuplicateRule(String),
    #[error("unknown rule `{0}`")]
    UnknownRule(String),
    #[error("journal: {0}")]
    Journal(String),
}

#[derive(Debug, Default, Clone, Copy)]
struct RuleState {
    run: u32,
    firing: bool,
}

#[derive(Debug)]
pub struct Monitor {
    rules: BTreeMap<String, AlertRule>,
    streams: HashMap<(VnfId, String), VecDeque<MetricSample>>,
    rule_state: HashMap<(String, VnfId), RuleState>,
    retention: usize,
    alarm_seq: IdSeq,
    dead_letters: Vec<Alarm>,
    journal: Option<File>,
}

impl Default for Monitor {
    fn default() -> Self {
        Self::new(DEFAULT_RETENTION)
    }
}

impl Monitor {
    pub fn new(retention: usize) -> Self {
        Monitor {
            rules: BTreeMap::new(),
            streams: HashMap::new(),
            rule_state: HashMap::new(),
            retention: retention.max(1),
            alarm_seq: IdSeq::starting_at(1),
            dead_letters: Vec::new(),
            journal: None,
        }
    }

    /// Persists every accepted sample as a JSON line, after replaying any
    /// samples already in the file.
    pub fn with_journal(mut self, path: &Path) -> Result<Self, MonitorError> {
        if path.exists() {
            let file = File::open(path).map_err(|e| MonitorError::Journal(e.to_string()))?;
            for line in BufReader::new(file).lines() {
                let line = line.map_err(|e| MonitorError::Journal(e.to_string()))?;
                if line.trim().is_empty() {
                    continue;
                }
                let sample: MetricSample =
                    serde_json::from_str(&line).map_err(|e| MonitorError::Journal(e.to_string()))?;
                self.store(sample)?;
            }
        }
        let file = OpenOptions::new()
            .create(true)
            .append(true)
            .open(path)
            .map_err(|e| MonitorError::Journal(e.to_string()))?;
        self.journal = Some(file);
        Ok(self)
    }

    pub fn add_rule(&mut self, rule: AlertRule) -> Result<(), MonitorError> {
        if rule.consecutive == 0 {
            return Err(MonitorError::InvalidRule("consecutive must be at least 1".into()));
        }
        if !rule.threshold.is_finite() {
            return Err(MonitorError::InvalidRule("threshold must be finite".into()));
        }
        if self.rules.contains_key(&rule.rule_id) {
            return Err(MonitorError::DuplicateRule(rule.rule_id));
        }
        if self.rules.values().any(|r| r.alarm_id == rule.alarm_id) {
            return Err(MonitorError::DuplicateAlarmId(rule.alarm_id));
        }
        self.rules.insert(rule.rule_id.clone(), rule);
        Ok(())
    }

    pub fn remove_rule(&mut self, rule_id: &str) -> Result<AlertRule, MonitorError> {
        self.rule_state.retain(|(r, _), _| r != rule_id);
        self.rules
            .remove(rule_id)
            .ok_or_else(|| MonitorError::UnknownRule(rule_id.to_string()))
    }

    pub fn set_threshold(&mut self, rule_id: &str, threshold: f64) -> Result<(), MonitorError> {
        if !threshold.is_finite() {
            return Err(MonitorError::InvalidRule("threshold must be finite".into()));
        }
        let rule = self
            .rules
            .get_mut(rule_id)
            .ok_or_else(|| MonitorError::UnknownRule(rule_id.to_string()))?;
        rule.threshold = threshold;
        Ok(())
    }

    pub fn rules(&self) -> impl Iterator<Item = &AlertRule> {
        self.rules.values()
    }

    pub fn rule(&self, rule_id: &str) -> Option<&AlertRule> {
        self.rules.get(rule_id)
    }

    fn store(&mut self, sample: MetricSample) -> Result<(), MonitorError> {
        let key = (sample.vnf_id, sample.metric.clone());
        let stream = self.streams.entry(key).or_default();
        if let Some(last) = stream.back() {
            if sample.ts < last.ts {
                return Err(MonitorError::StaleSample {
                    vnf_id: sample.vnf_id,
                    metric: sample.metric,
                    ts: sample.ts,
                    last: last.ts,
                });
            }
        }
        if stream.len() == self.retention {
            stream.pop_front();
        }
        stream.push_back(sample);
        Ok(())
    }

    /// Appends a sample and returns the alarms it fired.
    pub fn ingest(&mut self, sample: MetricSample) -> Result<Vec<Alarm>, MonitorError> {
        if !sample.value.is_finite() {
            return Err(MonitorError::InvalidRule(format!(
                "sample value for {} must be finite",
                sample.metric
            )));
        }
        self.store(sample.clone())?;
        if let Some(journal) = self.journal.as_mut() {
            let line = serde_json::to_string(&sample).map_err(|e| MonitorError::Journal(e.to_string()))?;
            writeln!(journal, "{line}").map_err(|e| MonitorError::Journal(e.to_string()))?;
        }

        let mut fired = Vec::new();
        for rule in self.rules.values() {
            if rule.metric != sample.metric || rule.vnf_id.is_some_and(|v| v != sample.vnf_id) {
                continue;
            }
            let state = self
                .rule_state
                .entry((rule.rule_id.clone(), sample.vnf_id))
                .or_default();
            if rule.predicate.holds(sample.value, rule.threshold) {
                state.run = state.run.saturating_add(1);
                if state.run >= rule.consecutive && !state.firing {
                    state.firing = true;
                    fired.push(Alarm {
                        instance: AlarmInstanceId(self.alarm_seq.next_raw()),
                        alarm_id: rule.alarm_id.clone(),
                        rule_id: rule.rule_id.clone(),
                        vnf_id: sample.vnf_id,
                        fired_at: sample.ts,
                        payload: BTreeMap::from([
                            ("metric".to_string(), sample.metric.clone()),
                            ("value".to_string(), sample.value.to_string()),
                            ("threshold".to_string(), rule.threshold.to_string()),
                            ("consecutive".to_string(), rule.consecutive.to_string()),
                        ]),
                    });
                }
            } else {
                *state = RuleState::default();
            }
        }
        Ok(fired)
    }

    /// Samples of one stream with `start <= ts <= end`, oldest first.
    pub fn query(&self, vnf_id: VnfId, metric: &str, start: SimTime, end: SimTime) -> Vec<MetricSample> {
        self.streams
            .get(&(vnf_id, metric.to_string()))
            .map(|s| {
                s.iter()
                    .filter(|x| x.ts >= start && x.ts <= end)
                    .cloned()
                    .collect()
            })
            .unwrap_or_default()
    }

    /// Drops all state kept for a VNF that no longer exists.
    pub fn forget_vnf(&mut self, vnf_id: VnfId) {
        self.streams.retain(|(v, _), _| *v != vnf_id);
        self.rule_state.retain(|(_, v), _| *v != vnf_id);
    }

    pub fn record_dead_letter(&mut self, alarm: Alarm) {
        self.dead_letters.push(alarm);
    }

    pub fn dead_letters(&self) -> &[Alarm] {
        &self.dead_letters
    }
}
