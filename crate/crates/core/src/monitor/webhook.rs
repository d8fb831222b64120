//! Signed alarm callbacks.
//!
//! The body is a JSON object with the alarm fields plus `signature`, the hex
//! HMAC-SHA256 of the canonical body (the same object without `signature`,
//! fields in declaration order) under the shared secret.

use std::collections::BTreeMap;
use std::time::Duration;

use hmac::{Hmac, Mac};
use serde::{Deserialize, Serialize};
use sha2::Sha256;

use crate::ids::{AlarmInstanceId, VnfId};
use crate::model::Alarm;
use crate::time::SimTime;

type HmacSha256 = Hmac<Sha256>;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct WebhookEndpoint {
    pub url: String,
    pub secret: String,
}

impl WebhookEndpoint {
    pub fn new(url: impl Into<String>, secret: impl Into<String>) -> Result<Self, SignatureError> {
        let secret = secret.into();
        if secret.is_empty() {
            return Err(SignatureError::EmptySecret);
        }
        Ok(WebhookEndpoint { url: url.into(), secret })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum SignatureError {
    #[error("webhook secret must not be empty")]
    EmptySecret,
    #[error("signature is not valid hex")]
    Malformed,
    #[error("signature mismatch")]
    Mismatch,
}

/// Wire form of an alarm callback.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AlarmMessage {
    pub alarm_id: String,
    pub rule_id: String,
    pub vnf_id: VnfId,
    pub fired_at: SimTime,
    #[serde(default)]
    pub payload: BTreeMap<String, String>,
    pub instance: AlarmInstanceId,
    pub signature: String,
}

#[derive(Serialize)]
struct Unsigned<'a> {
    alarm_id: &'a str,
    rule_id: &'a str,
    vnf_id: VnfId,
    fired_at: SimTime,
    payload: &'a BTreeMap<String, String>,
    instance: AlarmInstanceId,
}

fn unsigned_bytes(
    alarm_id: &str,
    rule_id: &str,
    vnf_id: VnfId,
    fired_at: SimTime,
    payload: &BTreeMap<String, String>,
    instance: AlarmInstanceId,
) -> Vec<u8> {
    serde_json::to_vec(&Unsigned {
        alarm_id,
        rule_id,
        vnf_id,
        fired_at,
        payload,
        instance,
    })
    .expect("alarm fields always serialize")
}

pub fn canonical_body(alarm: &Alarm) -> Vec<u8> {
    unsigned_bytes(
        &alarm.alarm_id,
        &alarm.rule_id,
        alarm.vnf_id,
        alarm.fired_at,
        &alarm.payload,
        alarm.instance,
    )
}

pub fn sign(secret: &str, body: &[u8]) -> String {
    let mut mac = HmacSha256::new_from_slice(secret.as_bytes()).expect("HMAC takes keys of any length");
    mac.update(body);
    hex::encode(mac.finalize().into_bytes())
}

impl AlarmMessage {
    pub fn signed(alarm: &Alarm, secret: &str) -> Self {
        AlarmMessage {
            alarm_id: alarm.alarm_id.clone(),
            rule_id: alarm.rule_id.clone(),
            vnf_id: alarm.vnf_id,
            fired_at: alarm.fired_at,
            payload: alarm.payload.clone(),
            instance: alarm.instance,
            signature: sign(secret, &canonical_body(alarm)),
        }
    }

    pub fn into_alarm(self) -> Alarm {
        Alarm {
            instance: self.instance,
            alarm_id: self.alarm_id,
            rule_id: self.rule_id,
            vnf_id: self.vnf_id,
            fired_at: self.fired_at,
            payload: self.payload,
        }
    }
}

/// Recomputes the signature over the received fields and compares it in
/// constant time.
pub fn verify_message(msg: &AlarmMessage, secret: &str) -> Result<(), SignatureError> {
    if secret.is_empty() {
        return Err(SignatureError::EmptySecret);
    }
    let claimed = hex::decode(&msg.signature).map_err(|_| SignatureError::Malformed)?;
    let body = unsigned_bytes(
        &msg.alarm_id,
        &msg.rule_id,
        msg.vnf_id,
        msg.fired_at,
        &msg.payload,
        msg.instance,
    );
    let mut mac = HmacSha256::new_from_slice(secret.as_bytes()).expect("HMAC takes keys of any length");
    mac.update(&body);
    mac.verify_slice(&claimed).map_err(|_| SignatureError::Mismatch)
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TransportResponse {
    pub status: u16,
    pub body: String,
}

/// Carries one POST to the callback URL.
pub trait WebhookTransport {
    fn post(&mut self, url: &str, body: &[u8]) -> Result<TransportResponse, String>;
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct DeliveryPolicy {
    pub max_retries: u32,
    pub backoff: Duration,
}

impl Default for DeliveryPolicy {
    fn default() -> Self {
        DeliveryPolicy {
            max_retries: 3,
            backoff: Duration::from_millis(200),
        }
    }
}

impl DeliveryPolicy {
    /// No sleeping between attempts; used under a virtual clock.
    pub fn immediate(max_retries: u32) -> Self {
        DeliveryPolicy {
            max_retries,
            backoff: Duration::ZERO,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum DeliveryStatus {
    Accepted,
    Rejected,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DeliveryReceipt {
    pub instance: AlarmInstanceId,
    pub status: DeliveryStatus,
    pub http_status: u16,
    pub attempts: u32,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
#[error("delivery of {} failed after {attempts} attempts: {last_error}", alarm.instance)]
pub struct DeliveryFailed {
    pub alarm: Alarm,
    pub attempts: u32,
    pub last_error: String,
}

/// Posts a signed alarm. Transport errors and 5xx answers are retried up to
/// `max_retries` times; any other answer is final. On exhaustion the alarm
/// comes back inside the error for dead-lettering.
pub fn deliver(
    alarm: &Alarm,
    endpoint: &WebhookEndpoint,
    transport: &mut dyn WebhookTransport,
    policy: &DeliveryPolicy,
) -> Result<DeliveryReceipt, DeliveryFailed> {
    let body = serde_json::to_vec(&AlarmMessage::signed(alarm, &endpoint.secret))
        .expect("alarm message always serializes");
    let mut last_error = String::new();
    let total = policy.max_retries + 1;
    for attempt in 1..=total {
        match transport.post(&endpoint.url, &body) {
            Ok(resp) if resp.status < 500 => {
                let status = if (200..300).contains(&resp.status) {
                    DeliveryStatus::Accepted
                } else {
                    DeliveryStatus::Rejected
                };
                return Ok(DeliveryReceipt {
                    instance: alarm.instance,
                    status,
                    http_status: resp.status,
                    attempts: attempt,
                    detail: resp.body,
                });
            }
            Ok(resp) => last_error = format!("HTTP {}: {}", resp.status, resp.body),
            Err(e) => last_error = e,
        }
        if attempt < total && !policy.backoff.is_zero() {
            std::thread::sleep(policy.backoff);
        }
    }
    Err(DeliveryFailed {
        alarm: alarm.clone(),
        attempts: total,
        last_error,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn alarm() -> Alarm {
        Alarm {
            instance: AlarmInstanceId(7),
            alarm_id: "alarm-cpu".into(),
            rule_id: "cpu-high".into(),
            vnf_id: VnfId(3),
            fired_at: SimTime::from_secs_f64(12.5),
            payload: BTreeMap::from([("value".into(), "90".into())]),
        }
    }

    #[test]
    fn known_hmac_vector() {
        // RFC 4231 test case 2.
        assert_eq!(
            sign("Jefe", b"what do ya want for nothing?"),
            "5bdcc146bf60754e6a042426089575c75a003f089d2739839dec58b964ec3843"
        );
    }

    #[test]
    fn signed_message_verifies_and_tampering_does_not() {
        let msg = AlarmMessage::signed(&alarm(), "s3cret");
        verify_message(&msg, "s3cret").unwrap();
        assert_eq!(verify_message(&msg, "wrong"), Err(SignatureError::Mismatch));
        let mut tampered = msg.clone();
        tampered.payload.insert("value".into(), "10".into());
        assert_eq!(verify_message(&tampered, "s3cret"), Err(SignatureError::Mismatch));
        let mut garbage = msg;
        garbage.signature = "zz".into();
        assert_eq!(verify_message(&garbage, "s3cret"), Err(SignatureError::Malformed));
    }

    #[test]
    fn signature_survives_json_round_trip() {
        let msg = AlarmMessage::signed(&alarm(), "k");
        let wire = serde_json::to_string(&msg).unwrap();
        let back: AlarmMessage = serde_json::from_str(&wire).unwrap();
        verify_message(&back, "k").unwrap();
        assert_eq!(back.into_alarm(), alarm());
    }

    #[test]
    fn empty_secret_rejected() {
        assert_eq!(WebhookEndpoint::new("http://x", ""), Err(SignatureError::EmptySecret));
    }

    struct Scripted(Vec<Result<TransportResponse, String>>, u32);

    impl WebhookTransport for Scripted {
        fn post(&mut self, _url: &str, _body: &[u8]) -> Result<TransportResponse, String> {
            self.1 += 1;
            if self.0.is_empty() {
                Err("connection refused".into())
            } else {
                self.0.remove(0)
            }
        }
    }

    fn ok(status: u16) -> Result<TransportResponse, String> {
        Ok(TransportResponse {
            status,
            body: String::new(),
        })
    }

    #[test]
    fn retries_until_success() {
        let ep = WebhookEndpoint::new("http://x/alerts/messages", "k").unwrap();
        let mut t = Scripted(vec![Err("down".into()), ok(503), ok(202)], 0);
        let r = deliver(&alarm(), &ep, &mut t, &DeliveryPolicy::immediate(3)).unwrap();
        assert_eq!(r.status, DeliveryStatus::Accepted);
        assert_eq!(r.attempts, 3);
    }

    #[test]
    fn rejection_is_final() {
        let ep = WebhookEndpoint::new("http://x", "k").unwrap();
        let mut t = Scripted(vec![ok(401), ok(202)], 0);
        let r = deliver(&alarm(), &ep, &mut t, &DeliveryPolicy::immediate(3)).unwrap();
        assert_eq!(r.status, DeliveryStatus::Rejected);
        assert_eq!(t.1, 1);
    }

    #[test]
    fn exhaustion_returns_alarm_for_dead_letter() {
        let ep = WebhookEndpoint::new("http://x", "k").unwrap();
        let mut t = Scripted(vec![], 0);
        let err = deliver(&alarm(), &ep, &mut t, &DeliveryPolicy::immediate(3)).unwrap_err();
        assert_eq!(err.attempts, 4);
        assert_eq!(t.1, 4);
        assert_eq!(err.alarm, alarm());
    }
}
