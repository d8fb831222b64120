//! Batch runs of a scenario timeline under the virtual clock.

use serde::Serialize;

use crate::control::{ControlError, ControlPlane};
use crate::engine::{EngineError, EngineEvent, EntityKind, SwapReport};
use crate::ids::NsId;
use crate::model::{NsDescriptor, NsState};
use crate::monitor::MetricSample;
use crate::planner::{plan_vwi, vwi_ns_descriptor, SwapStrategy};
use crate::scenario::{Action, DeploySource, Scenario, ScenarioError};
use crate::time::{ClockMode, SimTime};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct NsSummary {
    pub ns_id: NsId,
    pub name: String,
    pub state: NsState,
    pub vnfs: usize,
    pub active_at: Option<SimTime>,
}

#[derive(Debug, Clone, Serialize)]
pub struct SimReport {
    pub until: SimTime,
    pub events: Vec<EngineEvent>,
    pub services: Vec<NsSummary>,
    pub swaps: Vec<SwapReport>,
}

impl SimReport {
    /// One line per event: `ts kind id event`.
    pub fn event_log(&self) -> String {
        self.events
            .iter()
            .map(|e| format!("{:>12} {:<8} {:<10} {}\n", e.ts.to_string(), e.entity_kind.to_string(), e.entity_id, e.event))
            .collect()
    }
}

fn load_descriptor(sc: &Scenario, source: &DeploySource) -> Result<NsDescriptor, ScenarioError> {
    match source {
        DeploySource::Descriptor(d) => Ok(d.clone()),
        DeploySource::File(path) => {
            let path = sc.resolve(path);
            let text = std::fs::read_to_string(&path).map_err(|source| ScenarioError::Io { path: path.clone(), source })?;
            NsDescriptor::from_toml_str(&text).map_err(|e| ScenarioError::Parse(format!("{}: {e}", path.display())))
        }
        DeploySource::Vwi(v) => {
            let plan = plan_vwi(v, &sc.engine.time_model).map_err(EngineError::from)?;
            Ok(vwi_ns_descriptor(&v.name, v.channel_bandwidth_hz, &plan, &sc.engine.vwi_template))
        }
    }
}

/// Runs every action of `sc` in time order, then advances to `until_s`.
/// Failed actions are recorded in the event log rather than aborting.
pub fn simulate(sc: &Scenario, until_s: f64) -> Result<SimReport, ScenarioError> {
    if sc.clock.mode != ClockMode::Virtual {
        return Err(ScenarioError::Invalid("simulate needs a VIRTUAL clock".into()));
    }
    let mut cp = ControlPlane::from_scenario(sc, "simulate")?;
    let mut actions: Vec<&Action> = sc.actions.iter().collect();
    actions.sort_by(|a, b| a.at_s().total_cmp(&b.at_s()));
    let until = SimTime::from_secs_f64(until_s);

    for action in actions {
        let at = SimTime::from_secs_f64(action.at_s());
        if at > until {
            break;
        }
        cp.engine.advance_to(at).map_err(ScenarioError::Engine)?;
        if let Err(e) = apply(sc, &mut cp, action) {
            cp.engine.note(EntityKind::Ns, "-", format!("ACTION FAILED: {e}"));
        }
        cp.deliver_loopback();
    }
    cp.engine.advance_to(until).map_err(ScenarioError::Engine)?;
    cp.deliver_loopback();

    let services = cp
        .engine
        .network_services()
        .map(|ns| NsSummary {
            ns_id: ns.id,
            name: ns.descriptor.name.clone(),
            state: ns.state,
            vnfs: ns.vnf_instances.len(),
            active_at: ns.entered(NsState::Active),
        })
        .collect();
    Ok(SimReport {
        until,
        events: cp.engine.events().to_vec(),
        services,
        swaps: cp.engine.swap_reports().cloned().collect(),
    })
}

fn apply(sc: &Scenario, cp: &mut ControlPlane, action: &Action) -> Result<(), ScenarioError> {
    match action {
        Action::Deploy { source, .. } => {
            let desc = load_descriptor(sc, source)?;
            cp.engine.create_ns(desc)?;
        }
        Action::Delete { ns, .. } => cp.engine.delete_ns(*ns)?,
        Action::Reconfigure { ns, patch, .. } => {
            cp.reconfigure(*ns, patch.clone()).map_err(|e| match e {
                ControlError::Engine(e) => ScenarioError::Engine(e),
                other => ScenarioError::Invalid(other.to_string()),
            })?;
        }
        Action::Swap {
            ns,
            strategy,
            vwi,
            demand,
            ..
        } => {
            match (strategy, vwi) {
                (SwapStrategy::Repository, _) => cp.engine.swap_from_repository(*ns, demand)?,
                (s, Some(v)) => cp.engine.swap_to_vwi(*ns, v, *s)?,
                (_, None) => return Err(ScenarioError::Invalid("swap needs a `vwi` target".into())),
            };
        }
        Action::Metric {
            ns,
            vnf,
            metric,
            value,
            repeat,
            interval_s,
            ..
        } => {
            let vnf_id = cp
                .engine
                .vnfs_of(*ns)
                .iter()
                .find(|v| v.descriptor.name == *vnf)
                .map(|v| v.id)
                .ok_or_else(|| EngineError::UnknownVnf(vnf.clone()))?;
            for i in 0..*repeat {
                if i > 0 {
                    cp.engine.advance(*interval_s)?;
                }
                let ts = cp.engine.now();
                cp.ingest(MetricSample {
                    vnf_id,
                    metric: metric.clone(),
                    value: *value,
                    ts,
                })
                .map_err(|e| ScenarioError::Invalid(e.to_string()))?;
                cp.deliver_loopback();
            }
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::planner::{VwiDescriptor, REFERENCE_SETUP_TIMES};
    use crate::scenario::HostSpec;

    fn big() -> Scenario {
        let mut sc = Scenario {
            hosts: vec![HostSpec {
                vcpus: 256,
                ram_mb: 1 << 20,
                count: 2,
            }],
            ..Scenario::default()
        };
        sc.pool.f_start_hz = 2.0e9;
        sc.pool.f_end_hz = 3.0e9;
        sc
    }

    #[test]
    fn table_one_timeline() {
        let mut sc = big();
        for (n, _) in REFERENCE_SETUP_TIMES {
            sc.actions.push(Action::Deploy {
                at_s: 0.0,
                source: DeploySource::Vwi(VwiDescriptor::new(format!("vwi-{n}"), n as f64 * 2826.0)),
            });
        }
        let report = simulate(&sc, 120.0).unwrap();
        for ((_, secs), ns) in REFERENCE_SETUP_TIMES.iter().zip(&report.services) {
            let at = ns.active_at.unwrap().as_secs_f64();
            assert!((at - secs).abs() <= 1e-3, "{}: {at}", ns.name);
        }
        assert!(report.event_log().lines().count() > 100);
    }

    #[test]
    fn failed_action_is_logged_not_fatal() {
        let mut sc = big();
        sc.actions.push(Action::Delete { at_s: 1.0, ns: NsId(9) });
        let report = simulate(&sc, 2.0).unwrap();
        assert!(report.events.iter().any(|e| e.event.starts_with("ACTION FAILED")));
    }

    #[test]
    fn realtime_scenario_refused() {
        let mut sc = big();
        sc.clock.mode = ClockMode::Realtime;
        assert!(simulate(&sc, 1.0).is_err());
    }
}
