//! Network-service and VNF lifecycle state machines.

use std::collections::BTreeMap;
use std::fmt;
use std::net::Ipv4Addr;

use serde::{Deserialize, Serialize};

use super::descriptor::{NsDescriptor, VnfDescriptor};
use crate::ids::{AlarmInstanceId, NsId, RrhId, SliceId, VmId, VnfId};
use crate::time::SimTime;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum NsState {
    Pending,
    Deploying,
    Active,
    Reconfiguring,
    Terminating,
    Terminated,
    Failed,
}

impl NsState {
    pub const ALL: [NsState; 7] = [
        NsState::Pending,
        NsState::Deploying,
        NsState::Active,
        NsState::Reconfiguring,
        NsState::Terminating,
        NsState::Terminated,
        NsState::Failed,
    ];

    /// Outgoing edges of the state graph.
    pub fn successors(self) -> &'static [NsState] {
        use NsState::*;
        match self {
            Pending => &[Deploying],
            Deploying => &[Active, Failed],
            Active => &[Reconfiguring, Terminating],
            Reconfiguring => &[Active, Failed],
            Terminating => &[Terminated],
            Failed => &[Terminating],
            Terminated => &[],
        }
    }

    pub fn can_transition_to(self, target: NsState) -> bool {
        self.successors().contains(&target)
    }
}

impl fmt::Display for NsState {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            NsState::Pending => "PENDING",
            NsState::Deploying => "DEPLOYING",
            NsState::Active => "ACTIVE",
            NsState::Reconfiguring => "RECONFIGURING",
            NsState::Terminating => "TERMINATING",
            NsState::Terminated => "TERMINATED",
            NsState::Failed => "FAILED",
        };
        f.write_str(s)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, thiserror::Error)]
#[error("illegal transition {from} -> {to}")]
pub struct IllegalTransition {
    pub from: NsState,
    pub to: NsState,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct StateEvent {
    pub from: NsState,
    pub to: NsState,
    pub at: SimTime,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetworkService {
    pub id: NsId,
    pub descriptor: NsDescriptor,
    pub state: NsState,
    pub vnf_instances: Vec<VnfId>,
    pub slices: Vec<SliceId>,
    pub created_at: SimTime,
    pub state_changed_at: SimTime,
    pub history: Vec<StateEvent>,
}

impl NetworkService {
    pub fn new(id: NsId, descriptor: NsDescriptor, now: SimTime) -> Self {
        NetworkService {
            id,
            descriptor,
            state: NsState::Pending,
            vnf_instances: Vec::new(),
            slices: Vec::new(),
            created_at: now,
            state_changed_at: now,
            history: Vec::new(),
        }
    }

    /// Returns the next version of this service in `target` state.
    pub fn transition(&self, target: NsState, at: SimTime) -> Result<NetworkService, IllegalTransition> {
        if !self.state.can_transition_to(target) {
            return Err(IllegalTransition {
                from: self.state,
                to: target,
            });
        }
        let mut next = self.clone();
        next.history.push(StateEvent {
            from: self.state,
            to: target,
            at,
        });
        next.state = target;
        next.state_changed_at = at;
        Ok(next)
    }

    /// Replays the history from `PENDING` and checks every step is a graph edge
    /// ending in the current state.
    pub fn history_is_valid_walk(&self) -> bool {
        let mut cur = NsState::Pending;
        let mut last_at = self.created_at;
        for ev in &self.history {
            if ev.from != cur || !cur.can_transition_to(ev.to) || ev.at < last_at {
                return false;
            }
            cur = ev.to;
            last_at = ev.at;
        }
        cur == self.state
    }

    /// Time of the most recent entry into `state`, if any.
    pub fn entered(&self, state: NsState) -> Option<SimTime> {
        self.history.iter().rev().find(|e| e.to == state).map(|e| e.at)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum VnfState {
    Booting,
    Running,
    Reconfiguring,
    Stopped,
    Error,
}

impl fmt::Display for VnfState {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Debug::fmt(self, f)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VnfInstance {
    pub id: VnfId,
    pub ns_id: NsId,
    pub descriptor: VnfDescriptor,
    pub vm_id: Option<VmId>,
    pub state: VnfState,
    pub mgmt_ip: Option<Ipv4Addr>,
    pub dataflow_ip: Option<Ipv4Addr>,
    pub slice_id: Option<SliceId>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rrh_id: Option<RrhId>,
}

impl VnfInstance {
    pub fn needs_radio(&self) -> bool {
        self.descriptor.radio_requirements.is_some()
    }

    /// Checks the per-instance invariants that must hold in steady state.
    pub fn invariants_hold(&self) -> bool {
        let live = matches!(self.state, VnfState::Running | VnfState::Reconfiguring);
        if live && self.mgmt_ip.is_none() {
            return false;
        }
        if self.state == VnfState::Running && self.slice_id.is_some() != self.needs_radio() {
            return false;
        }
        true
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum ActuatorAction {
    ScaleOut,
    ScaleIn,
    PartialReconfigure,
    RedeployVwi,
    Noop,
}

/// A named management action run in response to an alarm.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Actuator {
    pub name: String,
    pub action: ActuatorAction,
    #[serde(default)]
    pub parameters: BTreeMap<String, String>,
}

impl Actuator {
    pub fn new(name: impl Into<String>, action: ActuatorAction) -> Self {
        Actuator {
            name: name.into(),
            action,
            parameters: BTreeMap::new(),
        }
    }

    pub fn with_param(mut self, key: impl Into<String>, value: impl ToString) -> Self {
        self.parameters.insert(key.into(), value.to_string());
        self
    }

    pub fn param(&self, key: &str) -> Option<&str> {
        self.parameters.get(key).map(String::as_str)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Alarm {
    /// Firing instance; used to deduplicate redelivery.
    pub instance: AlarmInstanceId,
    /// Identifier bound to exactly one actuator.
    pub alarm_id: String,
    pub rule_id: String,
    pub vnf_id: VnfId,
    pub fired_at: SimTime,
    #[serde(default)]
    pub payload: BTreeMap<String, String>,
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::{BTreeSet, VecDeque};

    fn ns() -> NetworkService {
        NetworkService::new(NsId(1), NsDescriptor::lte_downlink(), SimTime::ZERO)
    }

    #[test]
    fn graph_edge_accepted() {
        let next = ns().transition(NsState::Deploying, SimTime::from_secs_f64(1.0)).unwrap();
        assert_eq!(next.state, NsState::Deploying);
        assert_eq!(next.state_changed_at, SimTime::from_secs_f64(1.0));
    }

    #[test]
    fn non_edge_rejected_with_both_states() {
        let mut s = ns();
        s.state = NsState::Terminated;
        let err = s.transition(NsState::Active, SimTime::ZERO).unwrap_err();
        assert_eq!(err.from, NsState::Terminated);
        assert_eq!(err.to, NsState::Active);
        assert!(err.to_string().contains("TERMINATED"));
    }

    /// Breadth-first reachability from PENDING over the declared successor
    /// table; used as the oracle for which walks exist.
    fn reachable_from_pending() -> BTreeSet<NsState> {
        let mut seen = BTreeSet::from([NsState::Pending]);
        let mut queue = VecDeque::from([NsState::Pending]);
        while let Some(s) = queue.pop_front() {
            for &n in s.successors() {
                if seen.insert(n) {
                    queue.push_back(n);
                }
            }
        }
        seen
    }

    #[test]
    fn every_state_reachable_and_terminated_is_sink() {
        assert_eq!(reachable_from_pending().len(), NsState::ALL.len());
        assert!(NsState::Terminated.successors().is_empty());
    }

    #[test]
    fn full_lifecycle_records_four_events_in_order() {
        use NsState::*;
        let path = [Deploying, Active, Terminating, Terminated];
        let mut s = ns();
        for (i, &st) in path.iter().enumerate() {
            s = s.transition(st, SimTime::from_secs_f64(i as f64)).unwrap();
        }
        assert_eq!(s.history.len(), 4);
        let tos: Vec<_> = s.history.iter().map(|e| e.to).collect();
        assert_eq!(tos, path);
        assert!(s.history_is_valid_walk());
        assert_eq!(s.entered(Active), Some(SimTime::from_secs_f64(1.0)));
    }

    #[test]
    fn failed_only_from_deploying_or_reconfiguring() {
        for s in NsState::ALL {
            let allowed = matches!(s, NsState::Deploying | NsState::Reconfiguring);
            assert_eq!(s.can_transition_to(NsState::Failed), allowed, "{s}");
        }
    }

    #[test]
    fn tampered_history_detected() {
        let mut s = ns().transition(NsState::Deploying, SimTime::ZERO).unwrap();
        s.history[0].to = NsState::Active;
        assert!(!s.history_is_valid_walk());
    }
}
