//! The monitoring loop around the orchestrator: samples go into the
//! monitor, fired alarms are signed and delivered to the alarm receiver, and
//! the receiver hands verified alarms to the engine.

use crate::engine::{AlarmOutcome, EngineError, EntityKind, NsPatch, Orchestrator};
use crate::ids::{NsId, TaskId};
use crate::model::Alarm;
use crate::monitor::{
    deliver, verify_message, AlarmMessage, DeliveryPolicy, DeliveryReceipt, MetricSample, Monitor,
    MonitorError, SignatureError, TransportResponse, WebhookEndpoint, WebhookTransport,
};
use crate::scenario::{Scenario, ScenarioError};

#[derive(Debug, thiserror::Error)]
pub enum ControlError {
    #[error("shared secret must not be empty")]
    EmptySecret,
    #[error(transparent)]
    Monitor(#[from] MonitorError),
    #[error(transparent)]
    Engine(#[from] EngineError),
}

/// Why the alarm receiver refused a callback.
#[derive(Debug, thiserror::Error)]
pub enum ReceiveError {
    #[error("malformed alarm message: {0}")]
    Malformed(String),
    #[error("alarm signature rejected: {0}")]
    BadSignature(#[from] SignatureError),
    #[error("alarm rejected: {0}")]
    Rejected(#[from] EngineError),
}

impl ReceiveError {
    pub fn http_status(&self) -> u16 {
        match self {
            ReceiveError::Malformed(_) => 400,
            ReceiveError::BadSignature(_) => 401,
            ReceiveError::Rejected(
                EngineError::UnknownAlarm(_) | EngineError::UnknownVnf(_) | EngineError::UnknownNs(_),
            ) => 404,
            ReceiveError::Rejected(_) => 409,
        }
    }
}

pub struct ControlPlane {
    pub engine: Orchestrator,
    pub monitor: Monitor,
    secret: String,
    outbox: Vec<Alarm>,
    receipts: Vec<DeliveryReceipt>,
}

impl ControlPlane {
    pub fn new(engine: Orchestrator, monitor: Monitor, secret: impl Into<String>) -> Result<Self, ControlError> {
        let secret = secret.into();
        if secret.is_empty() {
            return Err(ControlError::EmptySecret);
        }
        Ok(ControlPlane {
            engine,
            monitor,
            secret,
            outbox: Vec::new(),
            receipts: Vec::new(),
        })
    }

    pub fn from_scenario(sc: &Scenario, secret: impl Into<String>) -> Result<Self, ScenarioError> {
        let engine = sc.build_orchestrator()?;
        let mut monitor = Monitor::new(sc.monitor.retention);
        if let Some(path) = &sc.monitor.journal {
            monitor = monitor.with_journal(&sc.resolve(path))?;
        }
        for rule in &sc.rules {
            monitor.add_rule(rule.clone())?;
        }
        ControlPlane::new(engine, monitor, secret).map_err(|e| ScenarioError::Invalid(e.to_string()))
    }

    pub fn secret(&self) -> &str {
        &self.secret
    }

    /// Stores a sample; alarms it fires are queued for delivery.
    pub fn ingest(&mut self, sample: MetricSample) -> Result<Vec<Alarm>, ControlError> {
        let fired = self.monitor.ingest(sample)?;
        for a in &fired {
            self.engine.note(
                EntityKind::Alarm,
                a.instance,
                format!("FIRED {} by rule {} on {}", a.alarm_id, a.rule_id, a.vnf_id),
            );
        }
        self.outbox.extend(fired.iter().cloned());
        Ok(fired)
    }

    /// Alarms waiting to be delivered, oldest first.
    pub fn take_outbox(&mut self) -> Vec<Alarm> {
        std::mem::take(&mut self.outbox)
    }

    pub fn record_receipt(&mut self, receipt: DeliveryReceipt) {
        self.receipts.push(receipt);
    }

    pub fn receipts(&self) -> &[DeliveryReceipt] {
        &self.receipts
    }

    pub fn dead_letter(&mut self, alarm: Alarm) {
        self.engine.note(EntityKind::Alarm, alarm.instance, "DEAD_LETTER");
        self.monitor.record_dead_letter(alarm);
    }

    /// The alarm receiver: verifies the signature, then routes the alarm.
    pub fn receive(&mut self, msg: AlarmMessage) -> Result<AlarmOutcome, ReceiveError> {
        if let Err(e) = verify_message(&msg, &self.secret) {
            self.engine
                .note(EntityKind::Alarm, msg.instance, format!("REJECTED signature: {e}"));
            return Err(e.into());
        }
        Ok(self.engine.handle_alarm(&msg.into_alarm())?)
    }

    pub fn receive_body(&mut self, body: &[u8]) -> Result<AlarmOutcome, ReceiveError> {
        let msg: AlarmMessage = serde_json::from_slice(body).map_err(|e| ReceiveError::Malformed(e.to_string()))?;
        self.receive(msg)
    }

    /// Delivers queued alarms straight to this process's receiver, through
    /// the same signing and verification as the HTTP path.
    pub fn deliver_loopback(&mut self) -> Vec<DeliveryReceipt> {
        let endpoint = WebhookEndpoint::new("loopback:/alerts/messages", self.secret.clone())
            .expect("secret checked at construction");
        let mut out = Vec::new();
        for alarm in self.take_outbox() {
            let result = deliver(&alarm, &endpoint, &mut Loopback(self), &DeliveryPolicy::immediate(0));
            match result {
                Ok(r) => {
                    self.receipts.push(r.clone());
                    out.push(r);
                }
                Err(failed) => self.dead_letter(failed.alarm),
            }
        }
        out
    }

    /// Applies a patch, including alert thresholds held by the monitor.
    pub fn reconfigure(&mut self, ns: NsId, patch: NsPatch) -> Result<Vec<TaskId>, ControlError> {
        for rule in patch.rule_thresholds.keys() {
            if self.monitor.rule(rule).is_none() {
                return Err(MonitorError::UnknownRule(rule.clone()).into());
            }
        }
        let tasks = self.engine.reconfigure_ns(ns, patch.clone())?;
        for (rule, t) in &patch.rule_thresholds {
            self.monitor.set_threshold(rule, *t)?;
        }
        Ok(tasks)
    }
}

struct Loopback<'a>(&'a mut ControlPlane);

impl WebhookTransport for Loopback<'_> {
    fn post(&mut self, _url: &str, body: &[u8]) -> Result<TransportResponse, String> {
        let (status, body) = match self.0.receive_body(body) {
            Ok(outcome) => (202, serde_json::to_string(&outcome).unwrap_or_default()),
            Err(e) => (e.http_status(), e.to_string()),
        };
        Ok(TransportResponse { status, body })
    }
}
