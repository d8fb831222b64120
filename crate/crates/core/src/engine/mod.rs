//! The orchestrator: network-service lifecycle, actuators and VWI swaps.
//!
//! Every infrastructure side effect is expressed as a task on the
//! [`TaskQueue`](crate::queue::TaskQueue) and carried out by the drivers in
//! [`driver`]. The orchestrator itself only decides and records.

mod driver;
mod reconfigure;
mod swap;

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::ids::{AlarmInstanceId, IdSeq, NetworkId, NsId, SwapId, TaskId, VmId, VnfId};
use crate::model::{
    validate_descriptor, Actuator, Alarm, IllegalTransition, NetworkRole, NetworkService, NsDescriptor,
    NsState, ValidationReport, VnfInstance, VnfState,
};
use crate::planner::{estimate_setup_time, PlannerError, TimeModel, VwiRepository, VwiTemplate};
use crate::queue::{NewTask, QueueError, TaskFailure, TaskKind, TaskQueue, TaskState};
use crate::rf::{PoolConfig, RadioPool, RfError, SpectrumSlice};
use crate::time::{ClockMode, SimTime};
use crate::vim::{ComputeHost, RrhDevice, VimError, VimSnapshot, VirtualMachine, Vim};

use driver::Drivers;

pub use reconfigure::NsPatch;
pub use swap::{SwapReport, SwapStatus};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum EngineError {
    #[error("descriptor validation failed: {0}")]
    ValidationFailed(ValidationReport),
    #[error("quota exceeded: {0}")]
    QuotaExceeded(String),
    #[error("unknown network service {0}")]
    UnknownNs(NsId),
    #[error("unknown VNF {0}")]
    UnknownVnf(String),
    #[error(transparent)]
    IllegalTransition(#[from] IllegalTransition),
    #[error("field `{0}` cannot be changed on a live service")]
    ImmutableField(String),
    #[error("invalid patch: {0}")]
    InvalidPatch(String),
    #[error("actuator `{0}` already registered")]
    DuplicateActuator(String),
    #[error("unknown actuator `{0}`")]
    UnknownActuator(String),
    #[error("alarm `{0}` is not bound to an actuator")]
    UnknownAlarm(String),
    #[error("network service {ns} is {state}, not ACTIVE")]
    NsNotActive { ns: NsId, state: NsState },
    #[error("insufficient capacity: {0}")]
    InsufficientCapacity(String),
    #[error("swap requested {elapsed_s:.1} s after the previous one; minimum interval is {min_s:.1} s")]
    SwapTooSoon { elapsed_s: f64, min_s: f64 },
    #[error("unknown swap {0}")]
    UnknownSwap(SwapId),
    #[error(transparent)]
    Planner(#[from] PlannerError),
    #[error(transparent)]
    Vim(#[from] VimError),
    #[error(transparent)]
    Rf(#[from] RfError),
    #[error(transparent)]
    Queue(#[from] QueueError),
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Quota {
    pub max_ns: Option<usize>,
    pub max_vcpus: Option<u64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EngineConfig {
    pub time_model: TimeModel,
    pub max_retries: u32,
    /// Delay before a failed task is retried under a realtime clock.
    pub retry_backoff_s: f64,
    pub quota: Quota,
    pub vwi_template: VwiTemplate,
    /// Minimum spacing between two VWI swaps.
    pub min_swap_interval_s: f64,
}

impl Default for EngineConfig {
    fn default() -> Self {
        EngineConfig {
            time_model: TimeModel::reference_table(),
            max_retries: crate::queue::DEFAULT_MAX_RETRIES,
            retry_backoff_s: 1.0,
            quota: Quota::default(),
            vwi_template: VwiTemplate::default(),
            min_swap_interval_s: 0.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EntityKind {
    Ns,
    Vnf,
    Vm,
    Slice,
    Task,
    Alarm,
    Actuator,
    Swap,
}

impl fmt::Display for EntityKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let v = serde_json::to_value(self).expect("unit enum serializes");
        f.write_str(v.as_str().unwrap_or("?"))
    }
}

/// One line of the orchestration event log; also the event-stream frame.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EngineEvent {
    pub ts: SimTime,
    pub entity_kind: EntityKind,
    pub entity_id: String,
    pub event: String,
}

impl EngineEvent {
    pub fn new(ts: SimTime, entity_kind: EntityKind, entity_id: String, event: impl Into<String>) -> Self {
        EngineEvent {
            ts,
            entity_kind,
            entity_id,
            event: event.into(),
        }
    }
}

#[derive(Debug, Clone)]
pub(crate) struct NsRecord {
    pub ns: NetworkService,
    pub networks: BTreeMap<NetworkRole, NetworkId>,
    /// VNFs being torn down by an in-flight reconfiguration.
    pub removing: Vec<VnfId>,
}

/// What became of a delivered alarm.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "outcome", rename_all = "SCREAMING_SNAKE_CASE")]
pub enum AlarmOutcome {
    Executed { ns_id: NsId, tasks: Vec<TaskId> },
    Parked { ns_id: NsId },
    Duplicate,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InfrastructureView {
    pub now: SimTime,
    pub clock_mode: ClockMode,
    pub hosts: Vec<ComputeHost>,
    pub vms: Vec<VirtualMachine>,
    pub rrhs: Vec<RrhDevice>,
    pub pool: PoolConfig,
    pub slices: Vec<SpectrumSlice>,
}

/// Byte-comparable state of everything the orchestrator can leak.
#[derive(Debug, Clone, PartialEq)]
pub struct ResourceSnapshot {
    pub vim: VimSnapshot,
    pub slices: Vec<SpectrumSlice>,
}

#[derive(Debug, Clone)]
pub struct Orchestrator {
    vim: Vim,
    pool: RadioPool,
    queue: TaskQueue,
    config: EngineConfig,
    nss: BTreeMap<NsId, NsRecord>,
    vnfs: BTreeMap<VnfId, VnfInstance>,
    actuators: BTreeMap<String, Actuator>,
    events: Vec<EngineEvent>,
    parked: Vec<(Alarm, NsId)>,
    seen_alarms: BTreeSet<AlarmInstanceId>,
    swaps: BTreeMap<SwapId, swap::SwapRecord>,
    last_swap_at: Option<SimTime>,
    repository: VwiRepository,
    ns_seq: IdSeq,
    vnf_seq: IdSeq,
    swap_seq: IdSeq,
}

impl Orchestrator {
    pub fn new(vim: Vim, pool: RadioPool, config: EngineConfig) -> Result<Self, EngineError> {
        config.time_model.validate()?;
        let backoff = match vim.clock_mode() {
            ClockMode::Virtual => SimTime::ZERO,
            ClockMode::Realtime => SimTime::from_secs_f64(config.retry_backoff_s),
        };
        Ok(Orchestrator {
            queue: TaskQueue::new(config.max_retries, backoff),
            vim,
            pool,
            config,
            nss: BTreeMap::new(),
            vnfs: BTreeMap::new(),
            actuators: BTreeMap::new(),
            events: Vec::new(),
            parked: Vec::new(),
            seen_alarms: BTreeSet::new(),
            swaps: BTreeMap::new(),
            last_swap_at: None,
            repository: VwiRepository::default(),
            ns_seq: IdSeq::starting_at(1),
            vnf_seq: IdSeq::starting_at(1),
            swap_seq: IdSeq::starting_at(1),
        })
    }

    pub fn config(&self) -> &EngineConfig {
        &self.config
    }

    pub fn vim(&self) -> &Vim {
        &self.vim
    }

    pub fn pool(&self) -> &RadioPool {
        &self.pool
    }

    pub fn queue(&self) -> &TaskQueue {
        &self.queue
    }

    pub fn now(&mut self) -> SimTime {
        self.vim.now()
    }

    pub fn ns(&self, id: NsId) -> Option<&NetworkService> {
        self.nss.get(&id).map(|r| &r.ns)
    }

    pub fn network_services(&self) -> impl Iterator<Item = &NetworkService> {
        self.nss.values().map(|r| &r.ns)
    }

    pub fn vnf(&self, id: VnfId) -> Option<&VnfInstance> {
        self.vnfs.get(&id)
    }

    pub fn vnfs_of(&self, ns: NsId) -> Vec<&VnfInstance> {
        self.nss
            .get(&ns)
            .map(|r| r.ns.vnf_instances.iter().filter_map(|id| self.vnfs.get(id)).collect())
            .unwrap_or_default()
    }

    pub fn ns_of_vnf(&self, vnf: VnfId) -> Option<NsId> {
        self.vnfs.get(&vnf).map(|v| v.ns_id)
    }

    pub fn events(&self) -> &[EngineEvent] {
        &self.events
    }

    pub fn repository(&self) -> &VwiRepository {
        &self.repository
    }

    pub fn repository_mut(&mut self) -> &mut VwiRepository {
        &mut self.repository
    }

    pub fn resource_snapshot(&self) -> ResourceSnapshot {
        ResourceSnapshot {
            vim: self.vim.snapshot(),
            slices: self.pool.snapshot(),
        }
    }

    pub fn infrastructure(&mut self) -> InfrastructureView {
        InfrastructureView {
            now: self.vim.now(),
            clock_mode: self.vim.clock_mode(),
            hosts: self.vim.hosts().cloned().collect(),
            vms: self.vim.vms().cloned().collect(),
            rrhs: self.vim.rrhs().cloned().collect(),
            pool: self.pool.config().clone(),
            slices: self.pool.snapshot(),
        }
    }

    /// Appends an event on behalf of another component.
    pub fn note(&mut self, kind: EntityKind, id: impl ToString, event: impl Into<String>) {
        self.emit(kind, id, event);
    }

    fn emit(&mut self, kind: EntityKind, id: impl ToString, event: impl Into<String>) {
        let at = self.vim.now();
        self.events.push(EngineEvent::new(at, kind, id.to_string(), event));
    }

    fn record(&self, id: NsId) -> Result<&NsRecord, EngineError> {
        self.nss.get(&id).ok_or(EngineError::UnknownNs(id))
    }

    fn set_state(&mut self, id: NsId, target: NsState) -> Result<(), EngineError> {
        let now = self.vim.now();
        let rec = self.nss.get_mut(&id).ok_or(EngineError::UnknownNs(id))?;
        rec.ns = rec.ns.transition(target, now)?;
        self.emit(EntityKind::Ns, id, target.to_string());
        if target == NsState::Active {
            self.on_ns_active(id);
        }
        Ok(())
    }

    pub fn register_actuator(&mut self, actuator: Actuator) -> Result<(), EngineError> {
        if self.actuators.contains_key(&actuator.name) {
            return Err(EngineError::DuplicateActuator(actuator.name));
        }
        self.emit(EntityKind::Actuator, &actuator.name, "REGISTERED");
        self.actuators.insert(actuator.name.clone(), actuator);
        Ok(())
    }

    pub fn actuators(&self) -> impl Iterator<Item = &Actuator> {
        self.actuators.values()
    }

    fn check_quota(&self, desc: &NsDescriptor) -> Result<(), EngineError> {
        let live = self
            .nss
            .values()
            .filter(|r| r.ns.state != NsState::Terminated)
            .count();
        if let Some(max) = self.config.quota.max_ns {
            if live >= max {
                return Err(EngineError::QuotaExceeded(format!("at most {max} network services")));
            }
        }
        if let Some(max) = self.config.quota.max_vcpus {
            let used: u64 = self.vnfs.values().filter(|v| v.vm_id.is_some()).map(|v| v.descriptor.flavor.vcpus as u64).sum();
            let wanted: u64 = desc.vnfs.iter().map(|v| v.flavor.vcpus as u64).sum();
            if used + wanted > max {
                return Err(EngineError::QuotaExceeded(format!(
                    "{} vcpus requested, {} of {max} in use",
                    wanted, used
                )));
            }
        }
        Ok(())
    }

    /// Boot delay of the `k`-th VNF added to a service already holding
    /// `existing` VNFs: the marginal setup time of the time model.
    fn boot_delay(&self, existing: usize, k: usize) -> f64 {
        let tm = &self.config.time_model;
        estimate_setup_time((existing + k) as u32, tm) - estimate_setup_time(existing as u32, tm)
    }

    /// Validates, creates networks and queues the deployment. The returned
    /// service is `DEPLOYING` (or `FAILED` once rolled back); it turns
    /// `ACTIVE` when all its VMs have booted.
    pub fn create_ns(&mut self, descriptor: NsDescriptor) -> Result<NsId, EngineError> {
        let report = validate_descriptor(&descriptor);
        if !report.is_empty() {
            return Err(EngineError::ValidationFailed(report));
        }
        self.check_quota(&descriptor)?;

        let id = NsId(self.ns_seq.next_raw());
        let now = self.vim.now();
        let mut networks = BTreeMap::new();
        for spec in &descriptor.networks {
            match self.vim.create_network(spec.role, spec.cidr) {
                Ok(net) => {
                    networks.insert(spec.role, net.id);
                }
                Err(e) => {
                    for net in networks.values() {
                        let _ = self.vim.delete_network(*net);
                    }
                    return Err(e.into());
                }
            }
        }
        let vnf_descs = descriptor.vnfs.clone();
        self.nss.insert(
            id,
            NsRecord {
                ns: NetworkService::new(id, descriptor, now),
                networks,
                removing: Vec::new(),
            },
        );
        self.queue.open_ns(id);
        self.emit(EntityKind::Ns, id, NsState::Pending.to_string());
        self.set_state(id, NsState::Deploying)?;

        let new_vnfs: Vec<VnfId> = vnf_descs
            .into_iter()
            .map(|d| self.add_vnf_record(id, d))
            .collect();
        self.enqueue_additions(id, &new_vnfs, 0)?;
        self.pump();
        Ok(id)
    }

    fn add_vnf_record(&mut self, ns: NsId, descriptor: crate::model::VnfDescriptor) -> VnfId {
        let vid = VnfId(self.vnf_seq.next_raw());
        self.vnfs.insert(
            vid,
            VnfInstance {
                id: vid,
                ns_id: ns,
                descriptor,
                vm_id: None,
                state: VnfState::Booting,
                mgmt_ip: None,
                dataflow_ip: None,
                slice_id: None,
                rrh_id: None,
            },
        );
        if let Some(rec) = self.nss.get_mut(&ns) {
            rec.ns.vnf_instances.push(vid);
        }
        vid
    }

    /// Queues spectrum for every radio VNF first, then the VMs, so the
    /// scarcer resource fails before any VM exists.
    fn enqueue_additions(&mut self, ns: NsId, vnfs: &[VnfId], existing: usize) -> Result<Vec<TaskId>, EngineError> {
        let mut tasks = Vec::new();
        for vid in vnfs {
            if self.vnfs[vid].needs_radio() {
                tasks.push(
                    self.queue
                        .enqueue(NewTask::new(ns, TaskKind::AllocateSlice).with("vnf", vid))?,
                );
            }
        }
        for (k, vid) in vnfs.iter().enumerate() {
            let boot = self.boot_delay(existing, k + 1);
            tasks.push(self.queue.enqueue(
                NewTask::new(ns, TaskKind::DeployVnf)
                    .with("vnf", vid)
                    .with("boot_s", boot),
            )?);
        }
        Ok(tasks)
    }

    /// Queues teardown in reverse creation order: VM before slice.
    fn enqueue_removals(&mut self, ns: NsId, vnfs: &[VnfId]) -> Result<Vec<TaskId>, EngineError> {
        let mut tasks = Vec::new();
        for vid in vnfs.iter().rev() {
            tasks.push(self.queue.enqueue(NewTask::new(ns, TaskKind::DeleteVnf).with("vnf", vid))?);
            if self.vnfs.get(vid).is_some_and(|v| v.needs_radio() || v.slice_id.is_some()) {
                tasks.push(
                    self.queue
                        .enqueue(NewTask::new(ns, TaskKind::ReleaseSlice).with("vnf", vid))?,
                );
            }
        }
        Ok(tasks)
    }

    fn run_queue(&mut self) {
        loop {
            let now = self.vim.now();
            let step = {
                let mut drivers = Drivers {
                    vim: &mut self.vim,
                    pool: &mut self.pool,
                    vnfs: &mut self.vnfs,
                    nss: &self.nss,
                    events: &mut self.events,
                };
                self.queue.run_worker_step(&mut drivers, now)
            };
            match step {
                Some(task) => {
                    let event = format!("{} {:?} attempt {}", task.kind, task.state, task.attempts);
                    self.emit(EntityKind::Task, task.task_id, event);
                    // Let the caller handle the failure before later tasks
                    // of the same service run.
                    if task.state == TaskState::Failed {
                        break;
                    }
                }
                None => break,
            }
        }
    }

    /// Runs every eligible task, handles failures and promotes services
    /// whose work is complete.
    pub fn pump(&mut self) {
        loop {
            self.run_queue();
            let failures = self.queue.drain_failures();
            if failures.is_empty() {
                break;
            }
            for f in failures {
                self.on_task_failure(f);
            }
        }
        self.refresh_all();
    }

    fn on_task_failure(&mut self, failure: TaskFailure) {
        let ns = failure.ns_id;
        self.emit(
            EntityKind::Task,
            failure.task_id,
            format!("{} FAILED: {}", failure.kind, failure.error),
        );
        let Some(state) = self.nss.get(&ns).map(|r| r.ns.state) else {
            return;
        };
        let now = self.vim.now();
        self.queue.cancel_ns(ns, "cancelled after failure", now);
        if let Some(v) = self
            .queue
            .task(failure.task_id)
            .and_then(|t| t.get("vnf"))
            .and_then(|v| v.parse::<VnfId>().ok())
            .and_then(|id| self.vnfs.get_mut(&id))
        {
            v.state = VnfState::Error;
        }
        match state {
            NsState::Deploying => {
                self.rollback(ns);
                let _ = self.set_state(ns, NsState::Failed);
            }
            NsState::Reconfiguring => {
                let _ = self.set_state(ns, NsState::Failed);
            }
            _ => {}
        }
        self.abort_swaps_involving(ns);
    }

    /// Releases everything a failed deployment acquired, newest first.
    fn rollback(&mut self, ns: NsId) {
        self.teardown(ns);
        self.emit(EntityKind::Ns, ns, "ROLLED_BACK");
    }

    /// Deletes all VMs, slices and networks of a service and forgets its VNFs.
    fn teardown(&mut self, ns: NsId) {
        let vnfs = self.nss.get(&ns).map(|r| r.ns.vnf_instances.clone()).unwrap_or_default();
        let now = self.vim.now();
        self.queue.cancel_ns(ns, "teardown", now);
        if self.enqueue_removals(ns, &vnfs).is_ok() {
            self.run_queue();
        }
        // Teardown drivers only fail on bookkeeping bugs; release directly so
        // nothing can leak regardless.
        for vid in &vnfs {
            if let Some(v) = self.vnfs.remove(vid) {
                if let Some(vm) = v.vm_id {
                    let _ = self.vim.delete_vm(vm);
                }
                if let Some(s) = v.slice_id {
                    let _ = self.pool.release_slice(s);
                }
                if let Some(r) = v.rrh_id {
                    let _ = self.vim.detach_rrh(r);
                }
            }
        }
        let now = self.vim.now();
        self.queue.cancel_ns(ns, "teardown", now);
        let _ = self.queue.drain_failures();
        if let Some(rec) = self.nss.get_mut(&ns) {
            for net in rec.networks.values() {
                let _ = self.vim.delete_network(*net);
            }
            rec.networks.clear();
            rec.ns.vnf_instances.clear();
            rec.ns.slices.clear();
            rec.removing.clear();
        }
    }

    pub fn delete_ns(&mut self, id: NsId) -> Result<(), EngineError> {
        let state = self.record(id)?.ns.state;
        if !state.can_transition_to(NsState::Terminating) {
            return Err(IllegalTransition {
                from: state,
                to: NsState::Terminating,
            }
            .into());
        }
        self.set_state(id, NsState::Terminating)?;
        self.teardown(id);
        self.set_state(id, NsState::Terminated)?;
        self.queue.close_ns(id);
        self.parked.retain(|(_, ns)| *ns != id);
        Ok(())
    }

    /// Applies VM boot events and re-evaluates service states.
    fn apply_vm_events(&mut self, events: Vec<crate::vim::VmEvent>) {
        if events.is_empty() {
            return;
        }
        let by_vm: BTreeMap<VmId, VnfId> = self
            .vnfs
            .values()
            .filter_map(|v| v.vm_id.map(|vm| (vm, v.id)))
            .collect();
        for ev in events {
            self.events.push(EngineEvent::new(ev.at, EntityKind::Vm, ev.vm_id.to_string(), "RUNNING"));
            if let Some(vid) = by_vm.get(&ev.vm_id) {
                if let Some(v) = self.vnfs.get_mut(vid) {
                    if v.state == VnfState::Booting {
                        v.state = VnfState::Running;
                        self.events
                            .push(EngineEvent::new(ev.at, EntityKind::Vnf, vid.to_string(), "RUNNING"));
                    }
                }
            }
        }
    }

    fn refresh_all(&mut self) {
        let ids: Vec<NsId> = self.nss.keys().copied().collect();
        for id in ids {
            self.refresh(id);
        }
    }

    fn refresh(&mut self, id: NsId) {
        let Some(rec) = self.nss.get_mut(&id) else { return };
        if !matches!(rec.ns.state, NsState::Deploying | NsState::Reconfiguring) {
            return;
        }
        if self.queue.pending_for(id) > 0 {
            return;
        }
        // Finished removals leave the service for good.
        if !rec.removing.is_empty() {
            let gone: Vec<VnfId> = std::mem::take(&mut rec.removing);
            rec.ns.vnf_instances.retain(|v| !gone.contains(v));
            for v in gone {
                self.vnfs.remove(&v);
            }
        }
        let rec = self.nss.get_mut(&id).expect("checked above");
        let mut slices = Vec::new();
        let mut all_running = true;
        for vid in &rec.ns.vnf_instances {
            let v = &self.vnfs[vid];
            all_running &= v.state == VnfState::Running;
            slices.extend(v.slice_id);
        }
        rec.ns.slices = slices;
        if all_running {
            let _ = self.set_state(id, NsState::Active);
        }
    }

    /// Advances a virtual clock by `dt_s` seconds.
    pub fn advance(&mut self, dt_s: f64) -> Result<(), EngineError> {
        let events = self.vim.advance_clock(dt_s)?;
        self.apply_vm_events(events);
        self.pump();
        Ok(())
    }

    /// Moves a virtual clock to `t`, stopping at each boot deadline on the
    /// way so follow-up work happens at the right instant.
    pub fn advance_to(&mut self, t: SimTime) -> Result<(), EngineError> {
        if self.vim.clock_mode() != ClockMode::Virtual {
            return Err(VimError::WrongClockMode {
                expected: ClockMode::Virtual,
            }
            .into());
        }
        while let Some(next) = self.vim.next_boot_deadline().filter(|d| *d <= t) {
            let events = self.vim.advance_to(next);
            self.apply_vm_events(events);
            self.pump();
        }
        let events = self.vim.advance_to(t);
        self.apply_vm_events(events);
        self.pump();
        Ok(())
    }

    pub fn next_event_time(&self) -> Option<SimTime> {
        self.vim.next_boot_deadline()
    }

    /// Runs a virtual clock forward until no VM is left booting.
    pub fn run_until_settled(&mut self) -> Result<SimTime, EngineError> {
        while let Some(next) = self.vim.next_boot_deadline() {
            self.advance_to(next)?;
        }
        Ok(self.vim.now())
    }

    /// Realtime counterpart of `advance`: boots whatever is due now.
    pub fn tick(&mut self) {
        let events = self.vim.poll();
        self.apply_vm_events(events);
        self.pump();
    }

    /// Routes a verified alarm to the actuator bound in its service.
    /// Replays of an already handled alarm instance are ignored; alarms for
    /// a service that is mid-reconfiguration are parked and retried once it
    /// is `ACTIVE` again.
    pub fn handle_alarm(&mut self, alarm: &Alarm) -> Result<AlarmOutcome, EngineError> {
        if self.seen_alarms.contains(&alarm.instance) {
            return Ok(AlarmOutcome::Duplicate);
        }
        let ns_id = self
            .ns_of_vnf(alarm.vnf_id)
            .ok_or_else(|| EngineError::UnknownVnf(alarm.vnf_id.to_string()))?;
        let rec = self.record(ns_id)?;
        if rec.ns.descriptor.binding(&alarm.alarm_id).is_none() {
            return Err(EngineError::UnknownAlarm(alarm.alarm_id.clone()));
        }
        self.emit(EntityKind::Alarm, alarm.instance, format!("RECEIVED {}", alarm.alarm_id));
        match self.execute_actuator_for(&alarm.alarm_id, ns_id, Some(alarm)) {
            Ok(tasks) => {
                self.seen_alarms.insert(alarm.instance);
                Ok(AlarmOutcome::Executed { ns_id, tasks })
            }
            Err(EngineError::NsNotActive { state, .. })
                if matches!(state, NsState::Reconfiguring | NsState::Deploying) =>
            {
                self.seen_alarms.insert(alarm.instance);
                self.parked.push((alarm.clone(), ns_id));
                self.emit(EntityKind::Alarm, alarm.instance, format!("PARKED while {state}"));
                Ok(AlarmOutcome::Parked { ns_id })
            }
            Err(e) => Err(e),
        }
    }

    pub fn parked_alarms(&self) -> usize {
        self.parked.len()
    }

    fn on_ns_active(&mut self, id: NsId) {
        let (ready, rest): (Vec<_>, Vec<_>) = std::mem::take(&mut self.parked)
            .into_iter()
            .partition(|(_, ns)| *ns == id);
        self.parked = rest;
        for (alarm, ns) in ready {
            match self.execute_actuator_for(&alarm.alarm_id, ns, Some(&alarm)) {
                Ok(_) => self.emit(EntityKind::Alarm, alarm.instance, "RETRIED"),
                Err(e) => self.emit(EntityKind::Alarm, alarm.instance, format!("DROPPED: {e}")),
            }
        }
        self.on_swap_progress(id);
    }

    pub fn execute_actuator(&mut self, alarm_id: &str, ns_id: NsId) -> Result<Vec<TaskId>, EngineError> {
        self.execute_actuator_for(alarm_id, ns_id, None)
    }
}
