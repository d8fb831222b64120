//! Radio resources: free-space propagation, link budgets, cell geometry and
//! the spectrum pool that hands out interference-free slices.

use std::collections::BTreeMap;
use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::ids::{IdSeq, SliceId, VnfId};
use crate::model::Point;

pub const SPEED_OF_LIGHT_M_S: f64 = 299_792_458.0;
/// Thermal noise density at 290 K, dBm/Hz.
pub const THERMAL_NOISE_DBM_HZ: f64 = -174.0;
pub const DEFAULT_SNR_THRESHOLD_DB: f64 = 10.0;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum RfError {
    #[error("domain error: {0}")]
    Domain(String),
    #[error("no spectrum gap of {bandwidth_hz} Hz free of interference")]
    SpectrumExhausted { bandwidth_hz: f64 },
    #[error("tx power {requested_dbm} dBm exceeds limit {limit_dbm} dBm")]
    PowerExceedsLimit { requested_dbm: f64, limit_dbm: f64 },
    #[error("unknown slice {0}")]
    UnknownSlice(SliceId),
}

fn positive(name: &str, v: f64) -> Result<(), RfError> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(RfError::Domain(format!("{name} must be positive and finite, got {v}")))
    }
}

/// Friis free-space path loss in dB between isotropic antennas.
pub fn fspl_db(distance_m: f64, frequency_hz: f64) -> Result<f64, RfError> {
    positive("distance_m", distance_m)?;
    positive("frequency_hz", frequency_hz)?;
    Ok(20.0 * distance_m.log10()
        + 20.0 * frequency_hz.log10()
        + 20.0 * (4.0 * PI / SPEED_OF_LIGHT_M_S).log10())
}

/// Thermal noise floor of an ideal (0 dB noise figure) receiver.
pub fn noise_floor_dbm(bandwidth_hz: f64) -> Result<f64, RfError> {
    positive("bandwidth_hz", bandwidth_hz)?;
    Ok(THERMAL_NOISE_DBM_HZ + 10.0 * bandwidth_hz.log10())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LinkBudget {
    pub tx_power_dbm: f64,
    pub frequency_hz: f64,
    pub distance_m: f64,
    pub bandwidth_hz: f64,
    pub rx_power_dbm: f64,
    pub noise_dbm: f64,
    pub snr_db: f64,
    pub operational: bool,
}

/// Line-of-sight link budget. The link counts as operational when the SNR
/// reaches `snr_threshold_db`, which stands in for a block-error-rate target.
pub fn link_budget(
    tx_power_dbm: f64,
    frequency_hz: f64,
    distance_m: f64,
    bandwidth_hz: f64,
    snr_threshold_db: f64,
) -> Result<LinkBudget, RfError> {
    if !tx_power_dbm.is_finite() {
        return Err(RfError::Domain(format!("tx_power_dbm must be finite, got {tx_power_dbm}")));
    }
    let loss = fspl_db(distance_m, frequency_hz)?;
    let noise_dbm = noise_floor_dbm(bandwidth_hz)?;
    let rx_power_dbm = tx_power_dbm - loss;
    let snr_db = rx_power_dbm - noise_dbm;
    Ok(LinkBudget {
        tx_power_dbm,
        frequency_hz,
        distance_m,
        bandwidth_hz,
        rx_power_dbm,
        noise_dbm,
        snr_db,
        operational: snr_db >= snr_threshold_db,
    })
}

/// Area of a circular cell, π·r².
pub fn coverage_area_m2(cell_radius_m: f64) -> Result<f64, RfError> {
    if !(cell_radius_m >= 0.0) || !cell_radius_m.is_finite() {
        return Err(RfError::Domain(format!("cell radius must be non-negative, got {cell_radius_m}")));
    }
    Ok(PI * cell_radius_m * cell_radius_m)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpectrumSlice {
    pub id: SliceId,
    pub f_low_hz: f64,
    pub f_high_hz: f64,
    pub tx_power_dbm: f64,
    pub location: Point,
    pub owner_vnf: VnfId,
}

impl SpectrumSlice {
    pub fn bandwidth_hz(&self) -> f64 {
        self.f_high_hz - self.f_low_hz
    }

    pub fn overlaps_band(&self, lo: f64, hi: f64) -> bool {
        self.f_low_hz < hi && lo < self.f_high_hz
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PoolConfig {
    pub f_start_hz: f64,
    pub f_end_hz: f64,
    pub reuse_distance_m: f64,
    pub snr_threshold_db: f64,
    /// Power ceiling for slices not served by a specific radio head.
    pub max_tx_power_dbm: f64,
}

impl Default for PoolConfig {
    fn default() -> Self {
        PoolConfig {
            f_start_hz: 2.600e9,
            f_end_hz: 2.620e9,
            reuse_distance_m: 60.0,
            snr_threshold_db: DEFAULT_SNR_THRESHOLD_DB,
            max_tx_power_dbm: 30.0,
        }
    }
}

/// Spectrum pool. Two slices may share frequencies only when their sites
/// are farther apart than the reuse distance.
#[derive(Debug, Clone)]
pub struct RadioPool {
    config: PoolConfig,
    slices: BTreeMap<SliceId, SpectrumSlice>,
    seq: IdSeq,
}

impl RadioPool {
    pub fn new(config: PoolConfig) -> Result<Self, RfError> {
        if !(config.f_start_hz < config.f_end_hz) || !(config.f_start_hz >= 0.0) {
            return Err(RfError::Domain("pool band requires 0 <= f_start < f_end".into()));
        }
        positive("reuse_distance_m", config.reuse_distance_m)?;
        Ok(RadioPool {
            config,
            slices: BTreeMap::new(),
            seq: IdSeq::starting_at(1),
        })
    }

    pub fn config(&self) -> &PoolConfig {
        &self.config
    }

    pub fn slices(&self) -> impl Iterator<Item = &SpectrumSlice> {
        self.slices.values()
    }

    pub fn slice(&self, id: SliceId) -> Option<&SpectrumSlice> {
        self.slices.get(&id)
    }

    pub fn len(&self) -> usize {
        self.slices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.slices.is_empty()
    }

    fn interferes(&self, a: &Point, b: &Point) -> bool {
        a.distance(b) <= self.config.reuse_distance_m
    }

    /// Lowest start frequency at which `bandwidth_hz` fits at `location`
    /// without clashing with a nearby slice.
    pub fn find_gap(&self, bandwidth_hz: f64, location: &Point) -> Option<(f64, f64)> {
        let mut blockers: Vec<(f64, f64)> = self
            .slices
            .values()
            .filter(|s| self.interferes(&s.location, location))
            .map(|s| (s.f_low_hz, s.f_high_hz))
            .collect();
        blockers.sort_by(|a, b| a.0.total_cmp(&b.0));

        // Sweep upward; the cursor only ever jumps to the end of a blocker.
        let mut cursor = self.config.f_start_hz;
        for (lo, hi) in blockers {
            if cursor + bandwidth_hz <= lo {
                break;
            }
            if hi > cursor {
                cursor = hi;
            }
        }
        (cursor + bandwidth_hz <= self.config.f_end_hz).then_some((cursor, cursor + bandwidth_hz))
    }

    pub fn allocate_slice(
        &mut self,
        bandwidth_hz: f64,
        location: Point,
        tx_power_dbm: f64,
        owner: VnfId,
        power_limit_dbm: Option<f64>,
    ) -> Result<SpectrumSlice, RfError> {
        positive("bandwidth_hz", bandwidth_hz)?;
        if !tx_power_dbm.is_finite() {
            return Err(RfError::Domain("tx_power_dbm must be finite".into()));
        }
        let limit = power_limit_dbm
            .unwrap_or(self.config.max_tx_power_dbm)
            .min(self.config.max_tx_power_dbm);
        if tx_power_dbm > limit {
            return Err(RfError::PowerExceedsLimit {
                requested_dbm: tx_power_dbm,
                limit_dbm: limit,
            });
        }
        let (f_low_hz, f_high_hz) = self
            .find_gap(bandwidth_hz, &location)
            .ok_or(RfError::SpectrumExhausted { bandwidth_hz })?;
        let slice = SpectrumSlice {
            id: SliceId(self.seq.next_raw()),
            f_low_hz,
            f_high_hz,
            tx_power_dbm,
            location,
            owner_vnf: owner,
        };
        self.slices.insert(slice.id, slice.clone());
        Ok(slice)
    }

    pub fn release_slice(&mut self, id: SliceId) -> Result<SpectrumSlice, RfError> {
        self.slices.remove(&id).ok_or(RfError::UnknownSlice(id))
    }

    /// Changes transmit power without moving the slice in frequency.
    pub fn set_tx_power(&mut self, id: SliceId, tx_power_dbm: f64, power_limit_dbm: Option<f64>) -> Result<(), RfError> {
        let limit = power_limit_dbm
            .unwrap_or(self.config.max_tx_power_dbm)
            .min(self.config.max_tx_power_dbm);
        if !tx_power_dbm.is_finite() {
            return Err(RfError::Domain("tx_power_dbm must be finite".into()));
        }
        if tx_power_dbm > limit {
            return Err(RfError::PowerExceedsLimit {
                requested_dbm: tx_power_dbm,
                limit_dbm: limit,
            });
        }
        let slice = self.slices.get_mut(&id).ok_or(RfError::UnknownSlice(id))?;
        slice.tx_power_dbm = tx_power_dbm;
        Ok(())
    }

    /// O(n²) scan for two slices that overlap in frequency while within
    /// reuse distance. Returns the first offending pair.
    pub fn find_interference(&self) -> Option<(SliceId, SliceId)> {
        let all: Vec<&SpectrumSlice> = self.slices.values().collect();
        for (i, a) in all.iter().enumerate() {
            for b in &all[i + 1..] {
                if a.overlaps_band(b.f_low_hz, b.f_high_hz) && self.interferes(&a.location, &b.location) {
                    return Some((a.id, b.id));
                }
            }
        }
        None
    }

    /// Occupied slices, for equality checks independent of the id counter.
    pub fn snapshot(&self) -> Vec<SpectrumSlice> {
        self.slices.values().cloned().collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const MHZ: f64 = 1e6;

    fn pool(lo_mhz: f64, hi_mhz: f64) -> RadioPool {
        RadioPool::new(PoolConfig {
            f_start_hz: lo_mhz * MHZ,
            f_end_hz: hi_mhz * MHZ,
            ..PoolConfig::default()
        })
        .unwrap()
    }

    // Expected values below come from an independent evaluation of the
    // Friis formula (arbitrary-precision arithmetic, outside this crate):
    //   FSPL(30 m, 2.6 GHz) = 70.28967527569...
    //   FSPL(1 m, 2.6 GHz)  = 40.74725018130...
    //   -174 + 10 log10(1.4e6) = -112.53871964322...
    #[test]
    fn fspl_reference_points() {
        assert!((fspl_db(30.0, 2.6e9).unwrap() - 70.289_675_3).abs() < 1e-6);
        assert!((fspl_db(1.0, 2.6e9).unwrap() - 40.747_250_2).abs() < 1e-6);
    }

    #[test]
    fn fspl_doubling_distance_adds_six_db() {
        for f in [7e8, 2.6e9, 5.8e9] {
            let d = fspl_db(60.0, f).unwrap() - fspl_db(30.0, f).unwrap();
            assert!((d - 6.0206).abs() < 1e-4);
        }
    }

    #[test]
    fn fspl_domain_errors() {
        assert!(matches!(fspl_db(0.0, 1e9), Err(RfError::Domain(_))));
        assert!(matches!(fspl_db(1.0, -1e9), Err(RfError::Domain(_))));
    }

    #[test]
    fn downlink_link_budget() {
        let lb = link_budget(0.0, 2.6e9, 30.0, 1.4e6, DEFAULT_SNR_THRESHOLD_DB).unwrap();
        assert!((lb.rx_power_dbm + 70.289_675).abs() < 1e-5);
        assert!((lb.noise_dbm + 112.538_720).abs() < 1e-5);
        assert!((lb.snr_db - 42.249_044).abs() < 1e-5);
        assert!(lb.operational);
    }

    #[test]
    fn tx_equal_to_loss_gives_zero_rx() {
        let loss = fspl_db(30.0, 2.6e9).unwrap();
        let lb = link_budget(loss, 2.6e9, 30.0, 1.4e6, 10.0).unwrap();
        assert_eq!(lb.rx_power_dbm, 0.0);
    }

    #[test]
    fn weak_transmitter_not_operational() {
        let lb = link_budget(-80.0, 2.6e9, 30.0, 1.4e6, 10.0).unwrap();
        assert!(lb.snr_db < 0.0);
        assert!(!lb.operational);
    }

    #[test]
    fn coverage_area() {
        let a30 = coverage_area_m2(30.0).unwrap();
        assert!((a30 - 2827.43).abs() < 0.01);
        assert!(((a30 - 2826.0) / 2826.0).abs() < 0.0006);
        assert_eq!(coverage_area_m2(0.0).unwrap(), 0.0);
        assert!((coverage_area_m2(60.0).unwrap() - 4.0 * a30).abs() < 1e-9);
        assert!(coverage_area_m2(-1.0).is_err());
    }

    #[test]
    fn first_fit_from_empty_pool() {
        let mut p = pool(2600.0, 2610.0);
        let s = p.allocate_slice(1.4 * MHZ, Point::default(), 10.0, VnfId(1), None).unwrap();
        assert_eq!((s.f_low_hz, s.f_high_hz), (2600.0 * MHZ, 2601.4 * MHZ));
    }

    #[test]
    fn colocated_slices_stack_and_distant_slices_reuse() {
        let mut p = pool(2600.0, 2610.0);
        p.allocate_slice(1.4 * MHZ, Point::default(), 10.0, VnfId(1), None).unwrap();
        let near = p.allocate_slice(1.4 * MHZ, Point::default(), 10.0, VnfId(2), None).unwrap();
        assert_eq!((near.f_low_hz, near.f_high_hz), (2601.4 * MHZ, 2602.8 * MHZ));
        let far = p
            .allocate_slice(1.4 * MHZ, Point::new(61.0, 0.0), 10.0, VnfId(3), None)
            .unwrap();
        // Both earlier slices sit at the origin, 61 m away.
        assert_eq!((far.f_low_hz, far.f_high_hz), (2600.0 * MHZ, 2601.4 * MHZ));
    }

    #[test]
    fn release_then_reallocate_is_identical() {
        let mut p = pool(2600.0, 2610.0);
        let a = p.allocate_slice(1.4 * MHZ, Point::default(), 10.0, VnfId(1), None).unwrap();
        let before = p.snapshot();
        p.release_slice(a.id).unwrap();
        assert!(p.is_empty());
        let b = p.allocate_slice(1.4 * MHZ, Point::default(), 10.0, VnfId(1), None).unwrap();
        assert_eq!((a.f_low_hz, a.f_high_hz), (b.f_low_hz, b.f_high_hz));
        assert_eq!(p.snapshot().len(), before.len());
        assert_eq!(p.release_slice(SliceId(999)).unwrap_err(), RfError::UnknownSlice(SliceId(999)));
    }

    #[test]
    fn full_pool_reports_exhaustion_then_recovers() {
        let mut p = pool(2600.0, 2610.0);
        let mut ids = Vec::new();
        while let Ok(s) = p.allocate_slice(1.4 * MHZ, Point::default(), 10.0, VnfId(1), None) {
            ids.push(s.id);
        }
        // 10 MHz / 1.4 MHz = 7 whole slices.
        assert_eq!(ids.len(), 7);
        assert!(matches!(
            p.allocate_slice(1.4 * MHZ, Point::default(), 10.0, VnfId(1), None),
            Err(RfError::SpectrumExhausted { .. })
        ));
        p.release_slice(ids[3]).unwrap();
        let s = p.allocate_slice(1.4 * MHZ, Point::default(), 10.0, VnfId(9), None).unwrap();
        assert!((s.f_low_hz - (2600.0 + 3.0 * 1.4) * MHZ).abs() < 1.0);
    }

    #[test]
    fn power_limit_enforced() {
        let mut p = pool(2600.0, 2610.0);
        assert!(matches!(
            p.allocate_slice(1.4 * MHZ, Point::default(), 25.0, VnfId(1), Some(20.0)),
            Err(RfError::PowerExceedsLimit { .. })
        ));
        let s = p.allocate_slice(1.4 * MHZ, Point::default(), 15.0, VnfId(1), Some(20.0)).unwrap();
        p.set_tx_power(s.id, 5.0, Some(20.0)).unwrap();
        assert_eq!(p.slice(s.id).unwrap().tx_power_dbm, 5.0);
        assert_eq!(p.slice(s.id).unwrap().f_low_hz, s.f_low_hz);
    }

    #[test]
    fn snr_strictly_decreases_with_distance() {
        let mut last = f64::INFINITY;
        for d in [1.0, 2.0, 10.0, 30.0, 100.0, 1000.0] {
            let snr = link_budget(0.0, 2.6e9, d, 1.4e6, 10.0).unwrap().snr_db;
            assert!(snr < last);
            last = snr;
        }
    }
}
