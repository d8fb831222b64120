//! Simulated virtualized infrastructure manager.
//!
//! Compute hosts with first-fit placement, virtual networks with
//! deterministic lowest-free-address assignment, remote radio heads with
//! exclusive attachment, and a clock that boots VMs at their deadlines.
//! All mutation goes through `&mut self`; callers that share a `Vim`
//! serialize access themselves.

use std::collections::{BTreeMap, BTreeSet};
use std::net::Ipv4Addr;

use serde::{Deserialize, Serialize};

use crate::ids::{HostId, IdSeq, NetworkId, RrhId, VmId, VnfId};
use crate::model::{Flavor, Ipv4Cidr, NetworkRole, Point};
use crate::time::{Clock, ClockMode, SimTime};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum VimError {
    #[error("invalid cidr {0}: need at least 4 addresses")]
    InvalidCidr(Ipv4Cidr),
    #[error("no host can fit {vcpus} vcpus / {ram_mb} MB")]
    CapacityExhausted { vcpus: u32, ram_mb: u64 },
    #[error("unknown network {0}")]
    UnknownNetwork(NetworkId),
    #[error("unknown vm {0}")]
    UnknownVm(VmId),
    #[error("unknown rrh {0}")]
    UnknownRrh(RrhId),
    #[error("rrh {rrh} already attached to {vnf}")]
    RrhBusy { rrh: RrhId, vnf: VnfId },
    #[error("no free address left on {0}")]
    AddressPoolExhausted(NetworkId),
    #[error("network {0} still has attached NICs")]
    NetworkInUse(NetworkId),
    #[error("operation requires a {expected:?} clock")]
    WrongClockMode { expected: ClockMode },
    #[error("invalid duration {0}")]
    InvalidDuration(f64),
    #[error("duplicate host id {0}")]
    DuplicateHost(HostId),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ComputeHost {
    pub id: HostId,
    pub vcpus_total: u32,
    pub vcpus_free: u32,
    pub ram_mb_total: u64,
    pub ram_mb_free: u64,
}

impl ComputeHost {
    pub fn new(id: HostId, vcpus: u32, ram_mb: u64) -> Self {
        ComputeHost {
            id,
            vcpus_total: vcpus,
            vcpus_free: vcpus,
            ram_mb_total: ram_mb,
            ram_mb_free: ram_mb,
        }
    }

    fn fits(&self, flavor: &Flavor) -> bool {
        self.vcpus_free >= flavor.vcpus && self.ram_mb_free >= flavor.ram_mb
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum VmState {
    Booting,
    Running,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Nic {
    pub network_id: NetworkId,
    pub ip: Ipv4Addr,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct VirtualMachine {
    pub id: VmId,
    pub host_id: HostId,
    pub flavor: Flavor,
    pub nics: Vec<Nic>,
    pub boot_deadline: SimTime,
    pub state: VmState,
}

impl VirtualMachine {
    pub fn ip_on(&self, network: NetworkId) -> Option<Ipv4Addr> {
        self.nics.iter().find(|n| n.network_id == network).map(|n| n.ip)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct VirtualNetwork {
    pub id: NetworkId,
    pub role: NetworkRole,
    pub cidr: Ipv4Cidr,
    /// Lowest free assignable address, `None` when the pool is exhausted.
    pub next_ip_cursor: Option<Ipv4Addr>,
    assigned: BTreeSet<Ipv4Addr>,
}

impl VirtualNetwork {
    pub fn gateway(&self) -> Ipv4Addr {
        self.cidr.nth(1).expect("cidr spans at least 4 addresses")
    }

    pub fn assigned(&self) -> impl Iterator<Item = Ipv4Addr> + '_ {
        self.assigned.iter().copied()
    }

    /// Offsets usable by VMs: after the gateway, before broadcast.
    fn assignable_offsets(&self) -> std::ops::Range<u64> {
        2..self.cidr.block_size() - 1
    }

    pub fn assignable_count(&self) -> u64 {
        let r = self.assignable_offsets();
        r.end - r.start
    }

    fn lowest_free(&self) -> Option<Ipv4Addr> {
        self.assignable_offsets()
            .filter_map(|i| self.cidr.nth(i))
            .find(|ip| !self.assigned.contains(ip))
    }

    fn take(&mut self) -> Option<Ipv4Addr> {
        let ip = self.next_ip_cursor?;
        self.assigned.insert(ip);
        self.next_ip_cursor = self.lowest_free();
        Some(ip)
    }

    fn give_back(&mut self, ip: Ipv4Addr) {
        if self.assigned.remove(&ip) {
            self.next_ip_cursor = self.lowest_free();
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RrhDevice {
    pub id: RrhId,
    pub location: Point,
    pub max_bandwidth_hz: f64,
    pub max_tx_power_dbm: f64,
    pub attached_vnf: Option<VnfId>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct VmEvent {
    pub vm_id: VmId,
    pub at: SimTime,
    pub state: VmState,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReleasedResources {
    pub vm_id: VmId,
    pub host_id: HostId,
    pub vcpus: u32,
    pub ram_mb: u64,
    pub addresses: Vec<Nic>,
}

/// Comparable view of everything a leak would show up in.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VimSnapshot {
    pub hosts: Vec<ComputeHost>,
    pub networks: Vec<(NetworkId, Ipv4Cidr, Vec<Ipv4Addr>)>,
    pub vm_count: usize,
    pub rrh_attachments: Vec<(RrhId, Option<VnfId>)>,
}

#[derive(Debug, Clone)]
pub struct Vim {
    clock: Clock,
    hosts: BTreeMap<HostId, ComputeHost>,
    vms: BTreeMap<VmId, VirtualMachine>,
    networks: BTreeMap<NetworkId, VirtualNetwork>,
    rrhs: BTreeMap<RrhId, RrhDevice>,
    vm_seq: IdSeq,
    net_seq: IdSeq,
}

impl Vim {
    pub fn new(clock: Clock) -> Self {
        Vim {
            clock,
            hosts: BTreeMap::new(),
            vms: BTreeMap::new(),
            networks: BTreeMap::new(),
            rrhs: BTreeMap::new(),
            vm_seq: IdSeq::starting_at(1),
            net_seq: IdSeq::starting_at(1),
        }
    }

    pub fn add_host(&mut self, host: ComputeHost) -> Result<(), VimError> {
        if self.hosts.contains_key(&host.id) {
            return Err(VimError::DuplicateHost(host.id));
        }
        self.hosts.insert(host.id, host);
        Ok(())
    }

    pub fn add_rrh(&mut self, rrh: RrhDevice) {
        self.rrhs.insert(rrh.id, rrh);
    }

    pub fn clock_mode(&self) -> ClockMode {
        self.clock.mode()
    }

    pub fn now(&mut self) -> SimTime {
        self.clock.now()
    }

    pub fn hosts(&self) -> impl Iterator<Item = &ComputeHost> {
        self.hosts.values()
    }

    pub fn host(&self, id: HostId) -> Option<&ComputeHost> {
        self.hosts.get(&id)
    }

    pub fn vms(&self) -> impl Iterator<Item = &VirtualMachine> {
        self.vms.values()
    }

    pub fn vm(&self, id: VmId) -> Option<&VirtualMachine> {
        self.vms.get(&id)
    }

    pub fn network(&self, id: NetworkId) -> Option<&VirtualNetwork> {
        self.networks.get(&id)
    }

    pub fn networks(&self) -> impl Iterator<Item = &VirtualNetwork> {
        self.networks.values()
    }

    pub fn rrhs(&self) -> impl Iterator<Item = &RrhDevice> {
        self.rrhs.values()
    }

    pub fn rrh(&self, id: RrhId) -> Option<&RrhDevice> {
        self.rrhs.get(&id)
    }

    pub fn create_network(&mut self, role: NetworkRole, cidr: Ipv4Cidr) -> Result<&VirtualNetwork, VimError> {
        if cidr.block_size() < 4 {
            return Err(VimError::InvalidCidr(cidr));
        }
        let id = NetworkId(self.net_seq.next_raw());
        let mut net = VirtualNetwork {
            id,
            role,
            cidr,
            next_ip_cursor: None,
            assigned: BTreeSet::new(),
        };
        net.next_ip_cursor = net.lowest_free();
        Ok(self.networks.entry(id).or_insert(net))
    }

    pub fn delete_network(&mut self, id: NetworkId) -> Result<(), VimError> {
        let net = self.networks.get(&id).ok_or(VimError::UnknownNetwork(id))?;
        if !net.assigned.is_empty() {
            return Err(VimError::NetworkInUse(id));
        }
        self.networks.remove(&id);
        Ok(())
    }

    /// Places a VM on the first host (ascending id) with room, assigning one
    /// address per requested network. The VM boots `boot_time_s` from now.
    pub fn create_vm(
        &mut self,
        flavor: Flavor,
        networks: &[NetworkId],
        boot_time_s: f64,
    ) -> Result<&VirtualMachine, VimError> {
        if !(boot_time_s >= 0.0) || !boot_time_s.is_finite() {
            return Err(VimError::InvalidDuration(boot_time_s));
        }
        for net in networks {
            let n = self.networks.get(net).ok_or(VimError::UnknownNetwork(*net))?;
            if n.next_ip_cursor.is_none() {
                return Err(VimError::AddressPoolExhausted(*net));
            }
        }
        let host_id = self
            .hosts
            .values()
            .find(|h| h.fits(&flavor))
            .map(|h| h.id)
            .ok_or(VimError::CapacityExhausted {
                vcpus: flavor.vcpus,
                ram_mb: flavor.ram_mb,
            })?;

        let host = self.hosts.get_mut(&host_id).expect("host just found");
        host.vcpus_free -= flavor.vcpus;
        host.ram_mb_free -= flavor.ram_mb;

        let nics = networks
            .iter()
            .map(|net| {
                let ip = self
                    .networks
                    .get_mut(net)
                    .and_then(VirtualNetwork::take)
                    .expect("address availability checked above");
                Nic { network_id: *net, ip }
            })
            .collect();

        let id = VmId(self.vm_seq.next_raw());
        let now = self.clock.now();
        let vm = VirtualMachine {
            id,
            host_id,
            flavor,
            nics,
            boot_deadline: now + SimTime::from_secs_f64(boot_time_s),
            state: VmState::Booting,
        };
        Ok(self.vms.entry(id).or_insert(vm))
    }

    pub fn delete_vm(&mut self, id: VmId) -> Result<ReleasedResources, VimError> {
        let vm = self.vms.remove(&id).ok_or(VimError::UnknownVm(id))?;
        let host = self.hosts.get_mut(&vm.host_id).expect("vm host exists");
        host.vcpus_free += vm.flavor.vcpus;
        host.ram_mb_free += vm.flavor.ram_mb;
        for nic in &vm.nics {
            if let Some(net) = self.networks.get_mut(&nic.network_id) {
                net.give_back(nic.ip);
            }
        }
        Ok(ReleasedResources {
            vm_id: id,
            host_id: vm.host_id,
            vcpus: vm.flavor.vcpus,
            ram_mb: vm.flavor.ram_mb,
            addresses: vm.nics,
        })
    }

    /// Changes a VM's flavor in place. The VM stays on its host; growing
    /// fails if that host lacks the headroom.
    pub fn resize_vm(&mut self, id: VmId, flavor: Flavor) -> Result<(), VimError> {
        let vm = self.vms.get_mut(&id).ok_or(VimError::UnknownVm(id))?;
        let host = self.hosts.get_mut(&vm.host_id).expect("vm host exists");
        let vcpus_avail = host.vcpus_free + vm.flavor.vcpus;
        let ram_avail = host.ram_mb_free + vm.flavor.ram_mb;
        if vcpus_avail < flavor.vcpus || ram_avail < flavor.ram_mb {
            return Err(VimError::CapacityExhausted {
                vcpus: flavor.vcpus,
                ram_mb: flavor.ram_mb,
            });
        }
        host.vcpus_free = vcpus_avail - flavor.vcpus;
        host.ram_mb_free = ram_avail - flavor.ram_mb;
        vm.flavor = flavor;
        Ok(())
    }

    pub fn attach_rrh(&mut self, rrh: RrhId, vnf: VnfId) -> Result<&RrhDevice, VimError> {
        let dev = self.rrhs.get_mut(&rrh).ok_or(VimError::UnknownRrh(rrh))?;
        match dev.attached_vnf {
            Some(owner) if owner != vnf => Err(VimError::RrhBusy { rrh, vnf: owner }),
            _ => {
                dev.attached_vnf = Some(vnf);
                Ok(dev)
            }
        }
    }

    pub fn detach_rrh(&mut self, rrh: RrhId) -> Result<(), VimError> {
        let dev = self.rrhs.get_mut(&rrh).ok_or(VimError::UnknownRrh(rrh))?;
        dev.attached_vnf = None;
        Ok(())
    }

    /// Advances a virtual clock by `dt_s` and boots every VM whose deadline
    /// has passed. Events come back in deadline order, ties by VM id.
    pub fn advance_clock(&mut self, dt_s: f64) -> Result<Vec<VmEvent>, VimError> {
        if self.clock.mode() != ClockMode::Virtual {
            return Err(VimError::WrongClockMode {
                expected: ClockMode::Virtual,
            });
        }
        if !(dt_s >= 0.0) || !dt_s.is_finite() {
            return Err(VimError::InvalidDuration(dt_s));
        }
        let target = self.clock.peek() + SimTime::from_secs_f64(dt_s);
        Ok(self.advance_to(target))
    }

    /// Moves a virtual clock to `t` (never backwards) and settles boots.
    pub fn advance_to(&mut self, t: SimTime) -> Vec<VmEvent> {
        if self.clock.mode() == ClockMode::Virtual {
            self.clock.set_virtual(t);
        }
        let now = self.clock.now();
        self.settle(now)
    }

    /// Samples the clock and settles boots; the realtime counterpart of
    /// `advance_clock`.
    pub fn poll(&mut self) -> Vec<VmEvent> {
        let now = self.clock.now();
        self.settle(now)
    }

    /// Earliest deadline among VMs still booting.
    pub fn next_boot_deadline(&self) -> Option<SimTime> {
        self.vms
            .values()
            .filter(|vm| vm.state == VmState::Booting)
            .map(|vm| vm.boot_deadline)
            .min()
    }

    fn settle(&mut self, now: SimTime) -> Vec<VmEvent> {
        let mut due: Vec<(SimTime, VmId)> = self
            .vms
            .values()
            .filter(|vm| vm.state == VmState::Booting && vm.boot_deadline <= now)
            .map(|vm| (vm.boot_deadline, vm.id))
            .collect();
        due.sort();
        due.into_iter()
            .map(|(at, id)| {
                self.vms.get_mut(&id).expect("due vm exists").state = VmState::Running;
                VmEvent {
                    vm_id: id,
                    at,
                    state: VmState::Running,
                }
            })
            .collect()
    }

    pub fn snapshot(&self) -> VimSnapshot {
        VimSnapshot {
            hosts: self.hosts.values().cloned().collect(),
            networks: self
                .networks
                .values()
                .map(|n| (n.id, n.cidr, n.assigned.iter().copied().collect()))
                .collect(),
            vm_count: self.vms.len(),
            rrh_attachments: self.rrhs.values().map(|r| (r.id, r.attached_vnf)).collect(),
        }
    }

    /// Resource conservation: every host's free counters plus the flavors
    /// of its resident VMs equal its totals.
    pub fn conservation_holds(&self) -> bool {
        self.hosts.values().all(|h| {
            let (cpu, ram) = self
                .vms
                .values()
                .filter(|vm| vm.host_id == h.id)
                .fold((0u64, 0u64), |(c, r), vm| (c + vm.flavor.vcpus as u64, r + vm.flavor.ram_mb));
            h.vcpus_free as u64 + cpu == h.vcpus_total as u64 && h.ram_mb_free + ram == h.ram_mb_total
        })
    }

    /// Whether a batch of flavors could be placed right now, replaying
    /// first-fit on a scratch copy of the host table.
    pub fn can_place_all(&self, flavors: &[Flavor]) -> bool {
        let mut hosts: Vec<ComputeHost> = self.hosts.values().cloned().collect();
        flavors.iter().all(|f| match hosts.iter_mut().find(|h| h.fits(f)) {
            Some(h) => {
                h.vcpus_free -= f.vcpus;
                h.ram_mb_free -= f.ram_mb;
                true
            }
            None => false,
        })
    }
}
