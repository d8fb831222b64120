//! Properties shared by the invariant suite and the acceptance run.
#![allow(dead_code)]

use std::collections::{BTreeMap, BTreeSet};

use proptest::prelude::*;
use proptest::test_runner::{Config, RngAlgorithm, TestCaseError, TestRng, TestRunner};

use oocran::engine::{EngineConfig, NsPatch, Orchestrator};
use oocran::ids::{AlarmInstanceId, HostId, NsId, VnfId};
use oocran::model::{Actuator, ActuatorAction, ActuatorBinding, Alarm, NsDescriptor, NsState, Point, VnfRole};
use oocran::monitor::{AlertRule, MetricSample, Monitor, Predicate};
use oocran::planner::{SwapStrategy, VwiDescriptor};
use oocran::queue::{NewTask, TaskKind, TaskQueue, TaskState};
use oocran::rf::{PoolConfig, RadioPool};
use oocran::time::{Clock, SimTime};
use oocran::vim::{ComputeHost, Vim};

pub const MHZ: f64 = 1e6;

/// Runs `prop` over `cases` generated inputs with a fixed seed.
pub fn run_cases<S: Strategy>(
    cases: u32,
    strategy: S,
    prop: impl Fn(S::Value) -> Result<(), TestCaseError>,
) -> Result<(), String> {
    let config = Config {
        cases,
        failure_persistence: None,
        ..Config::default()
    };
    let rng = TestRng::deterministic_rng(RngAlgorithm::ChaCha);
    TestRunner::new_with_rng(config, rng)
        .run(&strategy, prop)
        .map_err(|e| e.to_string())
}

/// The downlink service with `enbs` transmitters spread `spacing_m` apart.
pub fn downlink(enbs: usize, spacing_m: f64, tx_power_dbm: f64) -> NsDescriptor {
    let mut d = NsDescriptor::lte_downlink();
    let tpl = d.vnfs.pop().expect("downlink has a transmitter");
    for i in 0..enbs {
        let mut v = tpl.clone();
        v.name = format!("enb-{}", i + 1);
        let rr = v.radio_requirements.as_mut().expect("transmitter has radio");
        rr.location = Some(Point::new(i as f64 * spacing_m, 0.0));
        rr.tx_power_dbm = tx_power_dbm;
        d.vnfs.push(v);
    }
    d
}

// ---------------------------------------------------------------- spectrum

#[derive(Debug, Clone)]
pub enum PoolOp {
    Alloc { bw_mhz: f64, x: f64, y: f64 },
    Release(usize),
}

pub fn pool_ops() -> impl Strategy<Value = Vec<PoolOp>> {
    let op = prop_oneof![
        3 => (prop::sample::select(vec![1.4, 3.0, 5.0, 10.0]), 0u32..20, 0u32..20)
            .prop_map(|(bw_mhz, x, y)| PoolOp::Alloc { bw_mhz, x: x as f64 * 10.0, y: y as f64 * 10.0 }),
        1 => any::<usize>().prop_map(PoolOp::Release),
    ];
    prop::collection::vec(op, 1..60)
}

/// Brute-force check of a whole pool: no two slices within reuse distance
/// share a frequency, and every slice lies inside the band.
pub fn pool_oracle(pool: &RadioPool) -> Result<(), TestCaseError> {
    let cfg = pool.config();
    let all = pool.snapshot();
    for s in &all {
        prop_assert!(s.f_low_hz >= cfg.f_start_hz && s.f_high_hz <= cfg.f_end_hz);
    }
    for (i, a) in all.iter().enumerate() {
        for b in &all[i + 1..] {
            let overlap = a.f_low_hz < b.f_high_hz && b.f_low_hz < a.f_high_hz;
            let near = a.location.distance(&b.location) <= cfg.reuse_distance_m;
            prop_assert!(!(overlap && near), "{:?} interferes with {:?}", a.id, b.id);
        }
    }
    Ok(())
}

/// Lowest feasible start for a new slice, by exhaustive search over the
/// only starts that can be minimal.
fn lowest_feasible(pool: &RadioPool, bw: f64, at: &Point) -> Option<f64> {
    let cfg = pool.config();
    let all = pool.snapshot();
    let mut starts: Vec<f64> = std::iter::once(cfg.f_start_hz).chain(all.iter().map(|s| s.f_high_hz)).collect();
    starts.sort_by(f64::total_cmp);
    starts.into_iter().find(|&c| {
        c >= cfg.f_start_hz
            && c + bw <= cfg.f_end_hz
            && all.iter().all(|s| {
                !(s.f_low_hz < c + bw && c < s.f_high_hz) || s.location.distance(at) > cfg.reuse_distance_m
            })
    })
}

pub fn check_pool_sequence(ops: Vec<PoolOp>) -> Result<(), TestCaseError> {
    let mut pool = RadioPool::new(PoolConfig::default()).unwrap();
    let mut owner = 0u64;
    for op in ops {
        match op {
            PoolOp::Alloc { bw_mhz, x, y } => {
                let at = Point::new(x, y);
                let expect = lowest_feasible(&pool, bw_mhz * MHZ, &at);
                owner += 1;
                let got = pool.allocate_slice(bw_mhz * MHZ, at, 10.0, VnfId(owner), None);
                match (expect, got) {
                    (Some(f), Ok(s)) => prop_assert!((s.f_low_hz - f).abs() < 1e-3, "placed at {} not {}", s.f_low_hz, f),
                    (None, Err(_)) => {}
                    (e, g) => return Err(TestCaseError::fail(format!("oracle {e:?} vs pool {g:?}"))),
                }
            }
            PoolOp::Release(i) => {
                let ids: Vec<_> = pool.slices().map(|s| s.id).collect();
                if !ids.is_empty() {
                    pool.release_slice(ids[i % ids.len()]).unwrap();
                }
            }
        }
        pool_oracle(&pool)?;
        prop_assert_eq!(pool.find_interference(), None);
    }
    Ok(())
}

// --------------------------------------------------------------------- vim

#[derive(Debug, Clone)]
pub enum VimOp {
    Create { vcpus: u32, nets: u8 },
    Delete(usize),
}

pub fn vim_ops() -> impl Strategy<Value = Vec<VimOp>> {
    let op = prop_oneof![
        3 => (1u32..5, 1u8..4).prop_map(|(vcpus, nets)| VimOp::Create { vcpus, nets }),
        2 => any::<usize>().prop_map(VimOp::Delete),
    ];
    prop::collection::vec(op, 1..80)
}

pub fn check_vim_sequence(ops: Vec<VimOp>) -> Result<(), TestCaseError> {
    use oocran::model::{Flavor, NetworkRole};
    let mut vim = Vim::new(Clock::virtual_clock());
    vim.add_host(ComputeHost::new(HostId(1), 16, 1 << 16)).unwrap();
    vim.add_host(ComputeHost::new(HostId(2), 8, 1 << 16)).unwrap();
    // A /29 exhausts after five VMs.
    let nets = [
        vim.create_network(NetworkRole::Management, "10.0.0.0/29".parse().unwrap()).unwrap().id,
        vim.create_network(NetworkRole::Dataflow, "10.0.1.0/28".parse().unwrap()).unwrap().id,
        vim.create_network(NetworkRole::Dataflow, "192.168.7.0/27".parse().unwrap()).unwrap().id,
    ];
    let empty = vim.snapshot();
    for op in ops {
        match op {
            VimOp::Create { vcpus, nets: k } => {
                let _ = vim.create_vm(Flavor { vcpus, ram_mb: 512 }, &nets[..k as usize], 1.0);
            }
            VimOp::Delete(i) => {
                let ids: Vec<_> = vim.vms().map(|v| v.id).collect();
                if !ids.is_empty() {
                    vim.delete_vm(ids[i % ids.len()]).unwrap();
                }
            }
        }
        prop_assert!(vim.conservation_holds());
        for net in vim.networks() {
            let assigned: Vec<_> = net.assigned().collect();
            let unique: BTreeSet<_> = assigned.iter().collect();
            prop_assert_eq!(unique.len(), assigned.len());
            let gw = net.gateway();
            for ip in &assigned {
                let off = net.cidr.offset_of(*ip);
                prop_assert!(off.is_some(), "{} outside {}", ip, net.cidr);
                let off = off.unwrap();
                prop_assert!(off >= 2 && off < net.cidr.block_size() - 1 && *ip != gw);
            }
            let on_vms: Vec<_> = vim.vms().filter_map(|vm| vm.ip_on(net.id)).collect();
            prop_assert_eq!(on_vms.len(), assigned.len());
        }
    }
    let ids: Vec<_> = vim.vms().map(|v| v.id).collect();
    for id in ids {
        vim.delete_vm(id).unwrap();
    }
    prop_assert_eq!(vim.snapshot(), empty);
    Ok(())
}

// ------------------------------------------------------------------ engine

#[derive(Debug, Clone)]
pub enum EngineOp {
    Deploy { enbs: usize, spacing: f64 },
    Delete(usize),
    Scale { pick: usize, enbs: u32 },
    Swap { pick: usize, cells: u32, soft: bool },
    Alarm { pick: usize, alarm: usize, instance: u64 },
    Advance(f64),
    Settle,
}

pub fn engine_ops() -> impl Strategy<Value = Vec<EngineOp>> {
    let op = prop_oneof![
        4 => (1usize..5, prop::sample::select(vec![0.0, 30.0, 100.0]))
            .prop_map(|(enbs, spacing)| EngineOp::Deploy { enbs, spacing }),
        2 => any::<usize>().prop_map(EngineOp::Delete),
        1 => (any::<usize>(), 1u32..5).prop_map(|(pick, enbs)| EngineOp::Scale { pick, enbs }),
        1 => (any::<usize>(), 1u32..4, any::<bool>()).prop_map(|(pick, cells, soft)| EngineOp::Swap { pick, cells, soft }),
        2 => (any::<usize>(), 0usize..3, 1u64..30).prop_map(|(pick, alarm, instance)| EngineOp::Alarm { pick, alarm, instance }),
        3 => (0u32..45).prop_map(|s| EngineOp::Advance(s as f64)),
        1 => Just(EngineOp::Settle),
    ];
    prop::collection::vec(op, 1..25)
}

const ALARMS: [(&str, &str, ActuatorAction); 3] = [
    ("load-high", "grow", ActuatorAction::ScaleOut),
    ("load-low", "shrink", ActuatorAction::ScaleIn),
    ("heartbeat", "log", ActuatorAction::Noop),
];

/// Two small hosts and the default 20 MHz band, so deploys regularly run
/// out of room. Actuators for every alarm in `ALARMS` are registered.
pub fn small_orchestrator() -> Orchestrator {
    let mut vim = Vim::new(Clock::virtual_clock());
    vim.add_host(ComputeHost::new(HostId(1), 8, 16_384)).unwrap();
    vim.add_host(ComputeHost::new(HostId(2), 6, 8_192)).unwrap();
    let mut o = Orchestrator::new(vim, RadioPool::new(PoolConfig::default()).unwrap(), EngineConfig::default()).unwrap();
    for (_, name, action) in ALARMS {
        o.register_actuator(Actuator::new(name, action)).unwrap();
    }
    o
}

fn bound_downlink(enbs: usize, spacing_m: f64) -> NsDescriptor {
    let mut d = downlink(enbs, spacing_m, 10.0);
    for (alarm_id, actuator, _) in ALARMS {
        d.actuator_bindings.push(ActuatorBinding {
            alarm_id: alarm_id.into(),
            actuator: actuator.into(),
        });
    }
    d
}

fn live(o: &Orchestrator) -> Vec<NsId> {
    o.network_services()
        .filter(|ns| !matches!(ns.state, NsState::Terminated))
        .map(|ns| ns.id)
        .collect()
}

pub fn check_engine_sequence(ops: Vec<EngineOp>) -> Result<(), TestCaseError> {
    let mut o = small_orchestrator();
    let pristine = o.resource_snapshot();
    for op in ops {
        // Errors are legitimate outcomes here; only leaks are failures.
        let _ = match op {
            EngineOp::Deploy { enbs, spacing } => o.create_ns(bound_downlink(enbs, spacing)).map(drop),
            EngineOp::Delete(i) => {
                let ids = live(&o);
                if ids.is_empty() { Ok(()) } else { o.delete_ns(ids[i % ids.len()]) }
            }
            EngineOp::Scale { pick, enbs } => {
                let ids = live(&o);
                if ids.is_empty() {
                    Ok(())
                } else {
                    o.reconfigure_ns(ids[pick % ids.len()], NsPatch::scale(VnfRole::EnodebTx, enbs)).map(drop)
                }
            }
            EngineOp::Swap { pick, cells, soft } => {
                let ids = live(&o);
                if ids.is_empty() {
                    Ok(())
                } else {
                    let vwi = VwiDescriptor::new("swap", cells as f64 * std::f64::consts::PI * 900.0);
                    let strategy = if soft { SwapStrategy::SoftHandover } else { SwapStrategy::Hard };
                    o.swap_to_vwi(ids[pick % ids.len()], &vwi, strategy).map(drop)
                }
            }
            EngineOp::Alarm { pick, alarm, instance } => {
                let ids = live(&o);
                let target = (!ids.is_empty())
                    .then(|| ids[pick % ids.len()])
                    .and_then(|ns| o.vnfs_of(ns).last().map(|v| v.id));
                match target {
                    None => Ok(()),
                    Some(vnf_id) => {
                        let a = Alarm {
                            instance: AlarmInstanceId(instance),
                            alarm_id: ALARMS[alarm].0.into(),
                            rule_id: "prop".into(),
                            vnf_id,
                            fired_at: o.now(),
                            payload: BTreeMap::new(),
                        };
                        o.handle_alarm(&a).map(drop)
                    }
                }
            }
            EngineOp::Advance(dt) => o.advance(dt),
            EngineOp::Settle => o.run_until_settled().map(drop),
        };
        prop_assert!(o.vim().conservation_holds());
        prop_assert_eq!(o.pool().find_interference(), None);
    }
    o.run_until_settled().map_err(|e| TestCaseError::fail(e.to_string()))?;
    for id in live(&o) {
        o.delete_ns(id).map_err(|e| TestCaseError::fail(format!("delete {id}: {e}")))?;
    }
    o.run_until_settled().map_err(|e| TestCaseError::fail(e.to_string()))?;
    prop_assert_eq!(o.resource_snapshot(), pristine);
    prop_assert!(o.pool().is_empty());
    prop_assert_eq!(o.vim().vms().count(), 0);
    Ok(())
}

// ----------------------------------------------------------------- monitor

/// Expected firing indices for a GT rule needing `k` consecutive hits:
/// once per run of hits, at the k-th sample of the run.
pub fn edge_oracle(values: &[f64], threshold: f64, k: u32) -> Vec<usize> {
    let mut run = 0;
    let mut fired = Vec::new();
    for (i, v) in values.iter().enumerate() {
        if *v > threshold {
            run += 1;
            if run == k {
                fired.push(i);
            }
        } else {
            run = 0;
        }
    }
    fired
}

pub fn check_monitor_sequence((values, k): (Vec<f64>, u32)) -> Result<(), TestCaseError> {
    let mut m = Monitor::new(1000);
    m.add_rule(AlertRule {
        rule_id: "r".into(),
        metric: "cpu".into(),
        predicate: Predicate::Gt,
        threshold: 50.0,
        consecutive: k,
        alarm_id: "a".into(),
        vnf_id: None,
    })
    .unwrap();
    let mut fired = Vec::new();
    for (i, v) in values.iter().enumerate() {
        let alarms = m
            .ingest(MetricSample {
                vnf_id: VnfId(1),
                metric: "cpu".into(),
                value: *v,
                ts: SimTime::from_secs_f64(i as f64),
            })
            .unwrap();
        prop_assert!(alarms.len() <= 1);
        if !alarms.is_empty() {
            fired.push(i);
        }
    }
    prop_assert_eq!(fired, edge_oracle(&values, 50.0, k));
    Ok(())
}

pub fn monitor_inputs() -> impl Strategy<Value = (Vec<f64>, u32)> {
    (prop::collection::vec(prop::sample::select(vec![10.0, 49.0, 50.0, 51.0, 90.0]), 0..80), 1u32..5)
}

// ------------------------------------------------------------------- queue

#[derive(Debug, Clone)]
pub enum QueueOp {
    Enqueue(u64),
    Claim,
    Finish { pick: usize, ok: bool },
}

pub fn queue_ops() -> impl Strategy<Value = Vec<QueueOp>> {
    let op = prop_oneof![
        3 => (1u64..5).prop_map(QueueOp::Enqueue),
        3 => Just(QueueOp::Claim),
        3 => (any::<usize>(), prop::bool::weighted(0.8)).prop_map(|(pick, ok)| QueueOp::Finish { pick, ok }),
    ];
    prop::collection::vec(op, 1..120)
}

/// Many workers claim concurrently; at most one task per service may be
/// running, and each service's tasks finish in enqueue order.
pub fn check_queue_sequence(ops: Vec<QueueOp>) -> Result<(), TestCaseError> {
    let mut q = TaskQueue::new(1, SimTime::ZERO);
    for ns in 1..5 {
        q.open_ns(NsId(ns));
    }
    let mut running = Vec::new();
    let mut order: BTreeMap<NsId, Vec<_>> = BTreeMap::new();
    for op in ops {
        match op {
            QueueOp::Enqueue(ns) => {
                let id = q.enqueue(NewTask::new(NsId(ns), TaskKind::DeployVnf)).unwrap();
                order.entry(NsId(ns)).or_default().push(id);
            }
            QueueOp::Claim => {
                if let Some(t) = q.claim_next(SimTime::ZERO) {
                    running.push(t);
                }
            }
            QueueOp::Finish { pick, ok } => {
                if !running.is_empty() {
                    let t = running.remove(pick % running.len());
                    let result = if ok { Ok(()) } else { Err("boom".to_string()) };
                    q.complete(t.task_id, result, SimTime::ZERO).unwrap();
                }
            }
        }
        let busy: Vec<NsId> = running.iter().map(|t| t.ns_id).collect();
        let distinct: BTreeSet<_> = busy.iter().collect();
        prop_assert_eq!(distinct.len(), busy.len(), "two tasks of one service running");
    }
    for (ns, ids) in order {
        let finished: Vec<_> = q
            .log()
            .iter()
            .filter(|e| e.ns_id == ns)
            .filter(|e| q.task(e.task_id).is_some_and(|t| t.state.is_terminal()))
            .filter(|e| !matches!(e.outcome, oocran::queue::LogOutcome::Retry))
            .map(|e| e.task_id)
            .collect();
        prop_assert_eq!(&finished[..], &ids[..finished.len()]);
        for w in ids.windows(2) {
            let a = q.task(w[0]).unwrap().state;
            let b = q.task(w[1]).unwrap().state;
            prop_assert!(a.is_terminal() || b == TaskState::Queued);
        }
    }
    Ok(())
}
