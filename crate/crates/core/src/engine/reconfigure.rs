//! Partial reconfiguration and actuator execution.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::{EngineError, EntityKind, Orchestrator};
use crate::ids::{TaskId, VnfId};
use crate::model::{ActuatorAction, Alarm, Flavor, NetworkSpec, NsState, VnfDescriptor, VnfRole};
use crate::planner::{SwapStrategy, VwiDescriptor};
use crate::queue::{NewTask, TaskKind};

/// The mutable subset of a service descriptor. Fields left empty are kept.
///
/// `name` and `networks` are accepted only so that a full descriptor can be
/// sent back; any difference from the live value is rejected.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NsPatch {
    pub name: Option<String>,
    pub networks: Option<Vec<NetworkSpec>>,
    /// New flavor per VNF name.
    pub flavors: BTreeMap<String, Flavor>,
    /// New transmit power per VNF name.
    pub tx_power_dbm: BTreeMap<String, f64>,
    /// Desired number of instances per role.
    pub role_counts: BTreeMap<VnfRole, u32>,
    /// New alert thresholds per rule id. Rules live in the monitor, so the
    /// control plane applies these; the engine ignores them.
    pub rule_thresholds: BTreeMap<String, f64>,
}

impl NsPatch {
    pub fn is_empty(&self) -> bool {
        self.flavors.is_empty() && self.tx_power_dbm.is_empty() && self.role_counts.is_empty()
    }

    pub fn scale(role: VnfRole, count: u32) -> Self {
        NsPatch {
            role_counts: BTreeMap::from([(role, count)]),
            ..NsPatch::default()
        }
    }
}

/// `enb-3` -> `enb-`, then the first free `enb-N`.
fn next_name(template: &str, taken: &[String]) -> String {
    let base = template.trim_end_matches(|c: char| c.is_ascii_digit());
    let base = if base.ends_with('-') { base.to_string() } else { format!("{base}-") };
    (1..)
        .map(|i| format!("{base}{i}"))
        .find(|n| !taken.contains(n))
        .expect("unbounded range")
}

impl Orchestrator {
    fn live_vnf_by_name(&self, ns: crate::ids::NsId, name: &str) -> Result<VnfId, EngineError> {
        self.vnfs_of(ns)
            .into_iter()
            .find(|v| v.descriptor.name == name)
            .map(|v| v.id)
            .ok_or_else(|| EngineError::UnknownVnf(name.to_string()))
    }

    /// Applies only the differences in `patch`. An empty or no-op patch
    /// leaves the service untouched in `ACTIVE`.
    pub fn reconfigure_ns(&mut self, id: crate::ids::NsId, patch: NsPatch) -> Result<Vec<TaskId>, EngineError> {
        let rec = self.record(id)?;
        let desc = &rec.ns.descriptor;
        if patch.name.as_ref().is_some_and(|n| *n != desc.name) {
            return Err(EngineError::ImmutableField("name".into()));
        }
        if patch.networks.as_ref().is_some_and(|n| *n != desc.networks) {
            return Err(EngineError::ImmutableField("networks".into()));
        }
        if rec.ns.state != NsState::Active {
            return Err(EngineError::NsNotActive {
                ns: id,
                state: rec.ns.state,
            });
        }

        let mut resize = Vec::new();
        for (name, flavor) in &patch.flavors {
            if flavor.vcpus == 0 || flavor.ram_mb == 0 {
                return Err(EngineError::InvalidPatch(format!("flavor of `{name}` must be positive")));
            }
            let vid = self.live_vnf_by_name(id, name)?;
            if self.vnfs[&vid].descriptor.flavor != *flavor {
                resize.push((vid, *flavor));
            }
        }
        let mut repower = Vec::new();
        for (name, p) in &patch.tx_power_dbm {
            if !p.is_finite() {
                return Err(EngineError::InvalidPatch(format!("tx power of `{name}` must be finite")));
            }
            let vid = self.live_vnf_by_name(id, name)?;
            let Some(radio) = &self.vnfs[&vid].descriptor.radio_requirements else {
                return Err(EngineError::InvalidPatch(format!("`{name}` has no radio")));
            };
            if radio.tx_power_dbm != *p {
                repower.push((vid, *p));
            }
        }

        let mut add: Vec<VnfDescriptor> = Vec::new();
        let mut remove: Vec<VnfId> = Vec::new();
        let mut taken: Vec<String> = self.vnfs_of(id).iter().map(|v| v.descriptor.name.clone()).collect();
        for (&role, &want) in &patch.role_counts {
            if want == 0 {
                return Err(EngineError::InvalidPatch(format!("{role} count must be at least 1")));
            }
            let current: Vec<&crate::model::VnfInstance> =
                self.vnfs_of(id).into_iter().filter(|v| v.descriptor.role == role).collect();
            let have = current.len() as u32;
            if want > have {
                let Some(newest) = current.last() else {
                    return Err(EngineError::InvalidPatch(format!("no {role} instance to scale from")));
                };
                for _ in have..want {
                    let mut d = newest.descriptor.clone();
                    d.name = next_name(&newest.descriptor.name, &taken);
                    if let Some(r) = d.radio_requirements.as_mut() {
                        r.rrh = None;
                    }
                    taken.push(d.name.clone());
                    add.push(d);
                }
            } else {
                remove.extend(current.iter().rev().take((have - want) as usize).map(|v| v.id));
            }
        }

        if resize.is_empty() && repower.is_empty() && add.is_empty() && remove.is_empty() {
            return Ok(Vec::new());
        }
        let mut needed: Vec<Flavor> = add.iter().map(|d| d.flavor).collect();
        needed.extend(resize.iter().map(|(_, f)| *f));
        if !self.vim.can_place_all(&needed) {
            return Err(EngineError::InsufficientCapacity(format!(
                "cannot place {} additional VM(s)",
                needed.len()
            )));
        }

        self.set_state(id, NsState::Reconfiguring)?;
        let mut tasks = Vec::new();
        for (vid, f) in &resize {
            tasks.push(self.queue.enqueue(
                NewTask::new(id, TaskKind::ReconfigureVnf)
                    .with("vnf", vid)
                    .with("vcpus", f.vcpus)
                    .with("ram_mb", f.ram_mb),
            )?);
        }
        for (vid, p) in &repower {
            tasks.push(self.queue.enqueue(
                NewTask::new(id, TaskKind::ReconfigureVnf)
                    .with("vnf", vid)
                    .with("tx_power_dbm", p),
            )?);
        }
        tasks.extend(self.enqueue_removals(id, &remove)?);
        let existing = self.vnfs_of(id).len() - remove.len();
        let added: Vec<VnfId> = add.into_iter().map(|d| self.add_vnf_record(id, d)).collect();
        tasks.extend(self.enqueue_additions(id, &added, existing)?);

        let rec = self.nss.get_mut(&id).expect("checked above");
        rec.removing.extend(remove.iter().copied());
        let names: Vec<String> = remove.iter().map(|v| self.vnfs[v].descriptor.name.clone()).collect();
        let desc = &mut rec.ns.descriptor;
        desc.vnfs.retain(|d| !names.contains(&d.name));
        for vid in &added {
            desc.vnfs.push(self.vnfs[vid].descriptor.clone());
        }
        for d in desc.vnfs.iter_mut() {
            if let Some((_, f)) = patch.flavors.iter().find(|(n, _)| **n == d.name) {
                d.flavor = *f;
            }
            if let (Some(p), Some(r)) = (patch.tx_power_dbm.get(&d.name), d.radio_requirements.as_mut()) {
                r.tx_power_dbm = *p;
            }
        }
        self.pump();
        Ok(tasks)
    }

    pub(super) fn execute_actuator_for(
        &mut self,
        alarm_id: &str,
        ns_id: crate::ids::NsId,
        alarm: Option<&Alarm>,
    ) -> Result<Vec<TaskId>, EngineError> {
        let rec = self.record(ns_id)?;
        let binding = rec
            .ns
            .descriptor
            .binding(alarm_id)
            .ok_or_else(|| EngineError::UnknownAlarm(alarm_id.to_string()))?;
        let actuator = self
            .actuators
            .get(&binding.actuator)
            .cloned()
            .ok_or_else(|| EngineError::UnknownActuator(binding.actuator.clone()))?;
        if rec.ns.state != NsState::Active {
            return Err(EngineError::NsNotActive {
                ns: ns_id,
                state: rec.ns.state,
            });
        }
        let bad = |key: &str| EngineError::InvalidPatch(format!("actuator `{}`: bad `{key}`", actuator.name));
        let role: VnfRole = match actuator.param("role") {
            Some(r) => r.parse().map_err(|_| bad("role"))?,
            None => VnfRole::EnodebTx,
        };
        let step: u32 = match actuator.param("step") {
            Some(s) => s.parse().map_err(|_| bad("step"))?,
            None => 1,
        };
        let count = self.vnfs_of(ns_id).iter().filter(|v| v.descriptor.role == role).count() as u32;
        self.emit(
            EntityKind::Actuator,
            &actuator.name,
            format!("EXECUTE {:?} on {ns_id} for {alarm_id}", actuator.action),
        );

        match actuator.action {
            ActuatorAction::Noop => {
                let task = self.queue.enqueue(
                    NewTask::new(ns_id, TaskKind::RunActuator)
                        .with("actuator", &actuator.name)
                        .with("action", "NOOP"),
                )?;
                self.pump();
                Ok(vec![task])
            }
            ActuatorAction::ScaleOut => self.reconfigure_ns(ns_id, NsPatch::scale(role, count + step)),
            ActuatorAction::ScaleIn => {
                if count <= 1 {
                    self.emit(EntityKind::Ns, ns_id, format!("WouldViolateMinimum: {role} count is {count}"));
                    return Ok(Vec::new());
                }
                self.reconfigure_ns(ns_id, NsPatch::scale(role, count.saturating_sub(step).max(1)))
            }
            ActuatorAction::PartialReconfigure => {
                let name = actuator.param("vnf").ok_or_else(|| bad("vnf"))?.to_string();
                let mut patch = NsPatch::default();
                let vid = self.live_vnf_by_name(ns_id, &name)?;
                let mut flavor = self.vnfs[&vid].descriptor.flavor;
                let mut resize = false;
                if let Some(v) = actuator.param("vcpus") {
                    flavor.vcpus = v.parse().map_err(|_| bad("vcpus"))?;
                    resize = true;
                }
                if let Some(v) = actuator.param("ram_mb") {
                    flavor.ram_mb = v.parse().map_err(|_| bad("ram_mb"))?;
                    resize = true;
                }
                if resize {
                    patch.flavors.insert(name.clone(), flavor);
                }
                if let Some(v) = actuator.param("tx_power_dbm") {
                    patch.tx_power_dbm.insert(name, v.parse().map_err(|_| bad("tx_power_dbm"))?);
                }
                self.reconfigure_ns(ns_id, patch)
            }
            ActuatorAction::RedeployVwi => {
                let strategy: SwapStrategy = match actuator.param("strategy") {
                    Some(s) => s.parse().map_err(|_| bad("strategy"))?,
                    None => SwapStrategy::SoftHandover,
                };
                let swap = if strategy == SwapStrategy::Repository {
                    let mut demand: BTreeMap<String, f64> = actuator
                        .parameters
                        .iter()
                        .filter_map(|(k, v)| Some((k.strip_prefix("demand.")?.to_string(), v.parse().ok()?)))
                        .collect();
                    // The metric value that fired the alarm stands in for the
                    // named demand field.
                    if let (Some(field), Some(value)) = (
                        actuator.param("demand_field"),
                        alarm.and_then(|a| a.payload.get("value")).and_then(|v| v.parse().ok()),
                    ) {
                        demand.insert(field.to_string(), value);
                    }
                    self.swap_from_repository(ns_id, &demand)?
                } else {
                    let area: f64 = actuator
                        .param("target_area_m2")
                        .ok_or_else(|| bad("target_area_m2"))?
                        .parse()
                        .map_err(|_| bad("target_area_m2"))?;
                    let name = format!("{}-redeploy", self.record(ns_id)?.ns.descriptor.name);
                    self.swap_to_vwi(ns_id, &VwiDescriptor::new(name, area), strategy)?
                };
                let new_ns = self.swaps[&swap].new_ns;
                Ok(new_ns.map(|n| self.queue.tasks_for(n)).unwrap_or_default())
            }
        }
    }
}
