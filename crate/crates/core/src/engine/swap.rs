//! Replacing a running VWI with a new one.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::{EngineError, EntityKind, Orchestrator};
use crate::ids::{NsId, SwapId};
use crate::model::{NsDescriptor, NsState};
use crate::planner::{plan_vwi, vwi_ns_descriptor, SwapStrategy, VwiDescriptor};
use crate::time::{ClockMode, SimTime};
use crate::vim::VimError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum SwapStatus {
    InProgress,
    Completed,
    Failed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SwapReport {
    pub swap_id: SwapId,
    pub strategy: SwapStrategy,
    pub status: SwapStatus,
    pub old_ns: NsId,
    pub new_ns: Option<NsId>,
    pub started_at: SimTime,
    pub completed_at: Option<SimTime>,
    /// Time without any ACTIVE service: from the old one leaving ACTIVE to
    /// the new one reaching it. Zero for a soft handover.
    pub downtime_s: Option<f64>,
    /// Largest number of VMs held by the old and new service together.
    pub peak_resource_overlap: usize,
    pub old_vms: usize,
    pub new_vms: usize,
}

#[derive(Debug, Clone)]
pub(super) struct SwapRecord {
    pub report: SwapReport,
    pub new_ns: Option<NsId>,
    /// When the old service stopped serving; set at the start of a hard swap.
    old_down_at: Option<SimTime>,
}

impl Orchestrator {
    fn vm_count(&self, ns: NsId) -> usize {
        self.vnfs_of(ns).iter().filter(|v| v.vm_id.is_some()).count()
    }

    /// Starts replacing `old` with a service built from `descriptor`.
    ///
    /// HARD deletes the old service first. SOFT_HANDOVER (and REPOSITORY)
    /// keep it until the new one is ACTIVE, so both footprints must fit; if
    /// they do not, nothing is touched.
    pub fn begin_swap(
        &mut self,
        old: NsId,
        descriptor: NsDescriptor,
        strategy: SwapStrategy,
    ) -> Result<SwapId, EngineError> {
        let state = self.record(old)?.ns.state;
        if state != NsState::Active {
            return Err(EngineError::NsNotActive { ns: old, state });
        }
        let now = self.vim.now();
        if let Some(last) = self.last_swap_at {
            let elapsed_s = now.saturating_sub(last).as_secs_f64();
            if elapsed_s < self.config.min_swap_interval_s {
                return Err(EngineError::SwapTooSoon {
                    elapsed_s,
                    min_s: self.config.min_swap_interval_s,
                });
            }
        }

        let hard = strategy == SwapStrategy::Hard;
        let mut probe = self.clone();
        if hard {
            probe.delete_ns(old)?;
        }
        let fits = match probe.create_ns(descriptor.clone()) {
            Ok(id) => probe.ns(id).is_some_and(|ns| ns.state != NsState::Failed),
            Err(EngineError::Vim(_)) | Err(EngineError::QuotaExceeded(_)) => false,
            Err(e) => return Err(e),
        };
        if !fits {
            let what = if hard { "the new VWI" } else { "both VWIs at once" };
            return Err(EngineError::InsufficientCapacity(format!("cluster cannot hold {what}")));
        }

        let id = SwapId(self.swap_seq.next_raw());
        self.last_swap_at = Some(now);
        let old_vms = self.vm_count(old);
        self.emit(EntityKind::Swap, id, format!("STARTED {strategy:?} from {old}"));
        let mut old_down_at = None;
        if hard {
            old_down_at = Some(now);
            self.delete_ns(old)?;
        }
        let new_ns = self.create_ns(descriptor)?;
        let new_vms = self.vm_count(new_ns);
        let peak = if hard { old_vms.max(new_vms) } else { old_vms + new_vms };
        self.swaps.insert(
            id,
            SwapRecord {
                report: SwapReport {
                    swap_id: id,
                    strategy,
                    status: SwapStatus::InProgress,
                    old_ns: old,
                    new_ns: Some(new_ns),
                    started_at: now,
                    completed_at: None,
                    downtime_s: None,
                    peak_resource_overlap: peak,
                    old_vms,
                    new_vms,
                },
                new_ns: Some(new_ns),
                old_down_at,
            },
        );
        // A deployment without VMs to boot is already settled.
        match self.ns(new_ns).map(|n| n.state) {
            Some(NsState::Active) => self.on_swap_progress(new_ns),
            Some(NsState::Failed) => self.abort_swaps_involving(new_ns),
            _ => {}
        }
        Ok(id)
    }

    /// Plans `vwi` and swaps to it.
    pub fn swap_to_vwi(&mut self, old: NsId, vwi: &VwiDescriptor, strategy: SwapStrategy) -> Result<SwapId, EngineError> {
        let plan = plan_vwi(vwi, &self.config.time_model)?;
        let desc = vwi_ns_descriptor(&vwi.name, vwi.channel_bandwidth_hz, &plan, &self.config.vwi_template);
        self.begin_swap(old, desc, strategy)
    }

    /// Picks the stored VWI closest to `demand` and hands over softly.
    pub fn swap_from_repository(&mut self, old: NsId, demand: &BTreeMap<String, f64>) -> Result<SwapId, EngineError> {
        let vwi = self.repository.select(demand)?.clone();
        self.emit(EntityKind::Swap, old, format!("REPOSITORY selected {}", vwi.name));
        self.swap_to_vwi(old, &vwi, SwapStrategy::Repository)
    }

    /// Virtual-clock convenience: starts the swap and runs until it settles.
    pub fn swap(&mut self, old: NsId, descriptor: NsDescriptor, strategy: SwapStrategy) -> Result<SwapReport, EngineError> {
        if self.vim.clock_mode() != ClockMode::Virtual {
            return Err(VimError::WrongClockMode {
                expected: ClockMode::Virtual,
            }
            .into());
        }
        let id = self.begin_swap(old, descriptor, strategy)?;
        self.run_until_settled()?;
        Ok(self.swaps[&id].report.clone())
    }

    pub fn swap_report(&self, id: SwapId) -> Result<&SwapReport, EngineError> {
        self.swaps.get(&id).map(|s| &s.report).ok_or(EngineError::UnknownSwap(id))
    }

    pub fn swap_reports(&self) -> impl Iterator<Item = &SwapReport> {
        self.swaps.values().map(|s| &s.report)
    }

    /// Called whenever `ns` becomes ACTIVE.
    pub(super) fn on_swap_progress(&mut self, ns: NsId) {
        let pending: Vec<SwapId> = self
            .swaps
            .iter()
            .filter(|(_, s)| s.new_ns == Some(ns) && s.report.status == SwapStatus::InProgress)
            .map(|(id, _)| *id)
            .collect();
        for id in pending {
            let now = self.vim.now();
            let (old, down_at) = {
                let s = &self.swaps[&id];
                (s.report.old_ns, s.old_down_at)
            };
            if down_at.is_none() {
                let old_vms = self.vm_count(old);
                let new_vms = self.vm_count(ns);
                let s = self.swaps.get_mut(&id).expect("listed above");
                s.report.peak_resource_overlap = s.report.peak_resource_overlap.max(old_vms + new_vms);
                if let Err(e) = self.delete_ns(old) {
                    self.emit(EntityKind::Swap, id, format!("old service not removed: {e}"));
                }
            }
            let s = self.swaps.get_mut(&id).expect("listed above");
            s.report.downtime_s = Some(down_at.map_or(0.0, |t| now.saturating_sub(t).as_secs_f64()));
            s.report.status = SwapStatus::Completed;
            s.report.completed_at = Some(now);
            let event = format!("COMPLETED downtime {:.3}s", s.report.downtime_s.unwrap_or_default());
            self.emit(EntityKind::Swap, id, event);
        }
    }

    pub(super) fn abort_swaps_involving(&mut self, ns: NsId) {
        let failed: Vec<SwapId> = self
            .swaps
            .iter()
            .filter(|(_, s)| s.new_ns == Some(ns) && s.report.status == SwapStatus::InProgress)
            .map(|(id, _)| *id)
            .collect();
        for id in failed {
            let now = self.vim.now();
            let s = self.swaps.get_mut(&id).expect("listed above");
            s.report.status = SwapStatus::Failed;
            s.report.completed_at = Some(now);
            self.emit(EntityKind::Swap, id, "FAILED");
        }
    }
}
