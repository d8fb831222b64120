//! Executes queued tasks against the simulated VIM and the radio pool.
//!
//! Every call first checks whether its effect is already in place, so
//! re-running a completed task is harmless.

use std::collections::BTreeMap;

use crate::ids::{NetworkId, VnfId};
use crate::model::{Flavor, NetworkRole, VnfInstance, VnfState};
use crate::queue::{Task, TaskDriver, TaskKind};
use crate::rf::RadioPool;
use crate::vim::Vim;

use super::{EngineEvent, EntityKind, NsRecord};

pub(super) struct Drivers<'a> {
    pub vim: &'a mut Vim,
    pub pool: &'a mut RadioPool,
    pub vnfs: &'a mut BTreeMap<VnfId, VnfInstance>,
    pub nss: &'a BTreeMap<crate::ids::NsId, NsRecord>,
    pub events: &'a mut Vec<EngineEvent>,
}

fn param<'t>(task: &'t Task, key: &str) -> Result<&'t str, String> {
    task.get(key).ok_or_else(|| format!("task {} lacks `{key}`", task.task_id))
}

fn parse<T: std::str::FromStr>(task: &Task, key: &str) -> Result<T, String> {
    param(task, key)?
        .parse()
        .map_err(|_| format!("task {}: bad `{key}`", task.task_id))
}

impl Drivers<'_> {
    fn emit(&mut self, kind: EntityKind, id: String, event: impl Into<String>) {
        let at = self.vim.now();
        self.events.push(EngineEvent::new(at, kind, id, event));
    }

    fn vnf_mut(&mut self, id: VnfId) -> Result<&mut VnfInstance, String> {
        self.vnfs.get_mut(&id).ok_or_else(|| format!("unknown vnf {id}"))
    }

    fn allocate_slice(&mut self, vnf_id: VnfId) -> Result<(), String> {
        let vnf = self.vnf_mut(vnf_id)?.clone();
        if vnf.slice_id.is_some() {
            return Ok(());
        }
        let Some(radio) = vnf.descriptor.radio_requirements.clone() else {
            return Ok(());
        };
        let limit = match radio.rrh {
            Some(rrh) => {
                let dev = self.vim.rrh(rrh).ok_or_else(|| format!("unknown rrh {rrh}"))?;
                if let Some(owner) = dev.attached_vnf.filter(|o| *o != vnf_id) {
                    return Err(format!("rrh {rrh} busy with {owner}"));
                }
                if radio.bandwidth_hz > dev.max_bandwidth_hz {
                    return Err(format!("rrh {rrh} cannot carry {} Hz", radio.bandwidth_hz));
                }
                Some(dev.max_tx_power_dbm)
            }
            None => None,
        };
        let slice = self
            .pool
            .allocate_slice(
                radio.bandwidth_hz,
                radio.location.unwrap_or_default(),
                radio.tx_power_dbm,
                vnf_id,
                limit,
            )
            .map_err(|e| e.to_string())?;
        if let Some(rrh) = radio.rrh {
            if let Err(e) = self.vim.attach_rrh(rrh, vnf_id) {
                let _ = self.pool.release_slice(slice.id);
                return Err(e.to_string());
            }
        }
        let v = self.vnf_mut(vnf_id)?;
        v.slice_id = Some(slice.id);
        v.rrh_id = radio.rrh;
        self.emit(
            EntityKind::Slice,
            slice.id.to_string(),
            format!("ALLOCATED {:.1}-{:.1} MHz", slice.f_low_hz / 1e6, slice.f_high_hz / 1e6),
        );
        Ok(())
    }

    fn release_slice(&mut self, vnf_id: VnfId) -> Result<(), String> {
        let vnf = self.vnf_mut(vnf_id)?;
        let slice = vnf.slice_id.take();
        let rrh = vnf.rrh_id.take();
        if let Some(rrh) = rrh {
            self.vim.detach_rrh(rrh).map_err(|e| e.to_string())?;
        }
        if let Some(slice) = slice {
            self.pool.release_slice(slice).map_err(|e| e.to_string())?;
            self.emit(EntityKind::Slice, slice.to_string(), "RELEASED");
        }
        Ok(())
    }

    fn deploy_vnf(&mut self, vnf_id: VnfId, boot_s: f64) -> Result<(), String> {
        let vnf = self.vnf_mut(vnf_id)?.clone();
        if vnf.vm_id.is_some() {
            return Ok(());
        }
        let record = self
            .nss
            .get(&vnf.ns_id)
            .ok_or_else(|| format!("unknown ns {}", vnf.ns_id))?;
        let nets: Vec<(NetworkRole, NetworkId)> = vnf
            .descriptor
            .networks
            .iter()
            .map(|role| {
                record
                    .networks
                    .get(role)
                    .map(|id| (*role, *id))
                    .ok_or_else(|| format!("ns {} has no {role:?} network", vnf.ns_id))
            })
            .collect::<Result<_, _>>()?;
        let ids: Vec<NetworkId> = nets.iter().map(|(_, id)| *id).collect();
        let vm = self
            .vim
            .create_vm(vnf.descriptor.flavor, &ids, boot_s)
            .map_err(|e| e.to_string())?;
        let ip = |role: NetworkRole| {
            nets.iter()
                .find(|(r, _)| *r == role)
                .and_then(|(_, id)| vm.ip_on(*id))
        };
        let (vm_id, mgmt, data) = (vm.id, ip(NetworkRole::Management), ip(NetworkRole::Dataflow));
        let v = self.vnf_mut(vnf_id)?;
        v.vm_id = Some(vm_id);
        v.mgmt_ip = mgmt;
        v.dataflow_ip = data;
        v.state = VnfState::Booting;
        self.emit(EntityKind::Vm, vm_id.to_string(), format!("CREATED for {vnf_id}"));
        self.emit(EntityKind::Vnf, vnf_id.to_string(), "BOOTING");
        Ok(())
    }

    fn delete_vnf(&mut self, vnf_id: VnfId) -> Result<(), String> {
        let vnf = self.vnf_mut(vnf_id)?;
        let vm = vnf.vm_id.take();
        vnf.mgmt_ip = None;
        vnf.dataflow_ip = None;
        vnf.state = VnfState::Stopped;
        if let Some(vm) = vm {
            self.vim.delete_vm(vm).map_err(|e| e.to_string())?;
            self.emit(EntityKind::Vm, vm.to_string(), "DELETED");
            self.emit(EntityKind::Vnf, vnf_id.to_string(), "STOPPED");
        }
        Ok(())
    }

    fn reconfigure_vnf(&mut self, task: &Task, vnf_id: VnfId) -> Result<(), String> {
        let vnf = self.vnf_mut(vnf_id)?.clone();
        let flavor = match (task.get("vcpus"), task.get("ram_mb")) {
            (None, None) => None,
            _ => Some(Flavor {
                vcpus: task.get("vcpus").map_or(Ok(vnf.descriptor.flavor.vcpus), |_| parse(task, "vcpus"))?,
                ram_mb: task.get("ram_mb").map_or(Ok(vnf.descriptor.flavor.ram_mb), |_| parse(task, "ram_mb"))?,
            }),
        };
        let tx: Option<f64> = task.get("tx_power_dbm").map(|_| parse(task, "tx_power_dbm")).transpose()?;

        let previous = vnf.state;
        self.vnf_mut(vnf_id)?.state = VnfState::Reconfiguring;
        let result = (|| {
            if let (Some(f), Some(vm)) = (flavor, vnf.vm_id) {
                if self.vim.vm(vm).map(|v| v.flavor) != Some(f) {
                    self.vim.resize_vm(vm, f).map_err(|e| e.to_string())?;
                }
            }
            if let (Some(p), Some(slice)) = (tx, vnf.slice_id) {
                let limit = vnf.rrh_id.and_then(|r| self.vim.rrh(r)).map(|d| d.max_tx_power_dbm);
                self.pool.set_tx_power(slice, p, limit).map_err(|e| e.to_string())?;
            }
            Ok::<(), String>(())
        })();
        let v = self.vnf_mut(vnf_id)?;
        match &result {
            Ok(()) => {
                if let Some(f) = flavor {
                    v.descriptor.flavor = f;
                }
                if let (Some(p), Some(r)) = (tx, v.descriptor.radio_requirements.as_mut()) {
                    r.tx_power_dbm = p;
                }
                v.state = previous;
            }
            Err(_) => v.state = previous,
        }
        if result.is_ok() {
            self.emit(EntityKind::Vnf, vnf_id.to_string(), "RECONFIGURED");
        }
        result
    }
}

impl TaskDriver for Drivers<'_> {
    fn execute(&mut self, task: &Task) -> Result<(), String> {
        match task.kind {
            TaskKind::AllocateSlice => self.allocate_slice(parse(task, "vnf")?),
            TaskKind::ReleaseSlice => self.release_slice(parse(task, "vnf")?),
            TaskKind::DeployVnf => {
                let boot: f64 = parse(task, "boot_s")?;
                self.deploy_vnf(parse(task, "vnf")?, boot)
            }
            TaskKind::DeleteVnf => self.delete_vnf(parse(task, "vnf")?),
            TaskKind::ReconfigureVnf => {
                let vnf = parse(task, "vnf")?;
                self.reconfigure_vnf(task, vnf)
            }
            TaskKind::RunActuator => {
                let name = param(task, "actuator")?.to_string();
                let action = task.get("action").unwrap_or("NOOP").to_string();
                self.emit(EntityKind::Actuator, name, format!("RAN {action} for {}", task.ns_id));
                Ok(())
            }
        }
    }
}
