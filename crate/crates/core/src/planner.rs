//! VWI deployment planning.
//!
//! Turns a coverage target into a cell count and hexagonal placement,
//! estimates how long the deployment takes, and keeps a repository of
//! ready-made VWI designs matched against traffic demand.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::model::{
    Flavor, Ipv4Cidr, NetworkRole, NetworkSpec, NsDescriptor, Point, RadioRequirements, VnfDescriptor,
    VnfRole,
};
use crate::rf::coverage_area_m2;

pub const DEFAULT_CELL_RADIUS_M: f64 = 30.0;
pub const DEFAULT_CHANNEL_BANDWIDTH_HZ: f64 = 1.4e6;

/// Measured VWI setup times: (number of eNodeBs, seconds).
pub const REFERENCE_SETUP_TIMES: [(u32, f64); 5] =
    [(1, 30.12), (5, 33.49), (10, 45.87), (20, 60.19), (30, 84.63)];

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum PlannerError {
    #[error("invalid VWI descriptor: {0}")]
    InvalidDescriptor(String),
    #[error("invalid time model: {0}")]
    InvalidTimeModel(String),
    #[error("VWI repository is empty")]
    EmptyRepository,
    #[error("plan export: {0}")]
    Export(String),
}

fn default_radius() -> f64 {
    DEFAULT_CELL_RADIUS_M
}

fn default_bandwidth() -> f64 {
    DEFAULT_CHANNEL_BANDWIDTH_HZ
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VwiDescriptor {
    pub name: String,
    pub target_area_m2: f64,
    #[serde(default = "default_radius")]
    pub cell_radius_m: f64,
    #[serde(default = "default_bandwidth")]
    pub channel_bandwidth_hz: f64,
    #[serde(default)]
    pub traffic_profile: BTreeMap<String, f64>,
    /// Centre of the coverage region.
    #[serde(default)]
    pub center: Point,
}

impl VwiDescriptor {
    pub fn new(name: impl Into<String>, target_area_m2: f64) -> Self {
        VwiDescriptor {
            name: name.into(),
            target_area_m2,
            cell_radius_m: DEFAULT_CELL_RADIUS_M,
            channel_bandwidth_hz: DEFAULT_CHANNEL_BANDWIDTH_HZ,
            traffic_profile: BTreeMap::new(),
            center: Point::default(),
        }
    }

    pub fn with_profile(mut self, key: &str, value: f64) -> Self {
        self.traffic_profile.insert(key.to_string(), value);
        self
    }

    pub fn validate(&self) -> Result<(), PlannerError> {
        let bad = |m: &str| Err(PlannerError::InvalidDescriptor(m.to_string()));
        if !(self.target_area_m2 > 0.0) || !self.target_area_m2.is_finite() {
            return bad("target_area_m2 must be positive");
        }
        if !(self.cell_radius_m > 0.0) || !self.cell_radius_m.is_finite() {
            return bad("cell_radius_m must be positive");
        }
        if !(self.channel_bandwidth_hz > 0.0) || !self.channel_bandwidth_hz.is_finite() {
            return bad("channel_bandwidth_hz must be positive");
        }
        Ok(())
    }

    pub fn from_toml_str(s: &str) -> Result<Self, PlannerError> {
        toml::from_str(s).map_err(|e| PlannerError::InvalidDescriptor(e.to_string()))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum TimeModelMode {
    #[default]
    Table,
    Linear,
}

/// Setup time as `a + b·n`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LinearModel {
    pub a_s: f64,
    pub b_s_per_enodeb: f64,
}

impl LinearModel {
    pub fn predict(&self, n: f64) -> f64 {
        self.a_s + self.b_s_per_enodeb * n
    }
}

/// Ordinary least-squares line through `(n, seconds)` points.
pub fn fit_linear(points: &[(u32, f64)]) -> Result<LinearModel, PlannerError> {
    if points.len() < 2 {
        return Err(PlannerError::InvalidTimeModel("need at least two points to fit".into()));
    }
    let k = points.len() as f64;
    let mean_x = points.iter().map(|p| p.0 as f64).sum::<f64>() / k;
    let mean_y = points.iter().map(|p| p.1).sum::<f64>() / k;
    let sxx: f64 = points.iter().map(|p| (p.0 as f64 - mean_x).powi(2)).sum();
    let sxy: f64 = points
        .iter()
        .map(|p| (p.0 as f64 - mean_x) * (p.1 - mean_y))
        .sum();
    if sxx == 0.0 {
        return Err(PlannerError::InvalidTimeModel("points share one abscissa".into()));
    }
    let b = sxy / sxx;
    Ok(LinearModel {
        a_s: mean_y - b * mean_x,
        b_s_per_enodeb: b,
    })
}

/// Missing fields in a serialized model fall back to the reference data, so
/// `mode = "LINEAR"` alone selects the least-squares fit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TimeModel {
    pub mode: TimeModelMode,
    pub table: Vec<(u32, f64)>,
    pub linear: LinearModel,
}

impl Default for TimeModel {
    fn default() -> Self {
        TimeModel::reference_table()
    }
}

impl TimeModel {
    /// TABLE mode anchored on the measured setup times; the LINEAR
    /// parameters are the least-squares fit of the same points.
    pub fn reference_table() -> Self {
        let table = REFERENCE_SETUP_TIMES.to_vec();
        let linear = fit_linear(&table).expect("reference points are well-posed");
        TimeModel {
            mode: TimeModelMode::Table,
            table,
            linear,
        }
    }

    pub fn reference_linear() -> Self {
        TimeModel {
            mode: TimeModelMode::Linear,
            ..TimeModel::reference_table()
        }
    }

    pub fn validate(&self) -> Result<(), PlannerError> {
        let bad = |m: &str| Err(PlannerError::InvalidTimeModel(m.to_string()));
        match self.mode {
            TimeModelMode::Table => {
                if self.table.is_empty() {
                    return bad("TABLE mode needs at least one anchor");
                }
                if self.table.iter().any(|&(n, s)| n == 0 || !(s > 0.0)) {
                    return bad("anchors need n >= 1 and positive seconds");
                }
                if self.table.windows(2).any(|w| !(w[0].0 < w[1].0 && w[0].1 < w[1].1)) {
                    return bad("anchors must be strictly increasing in both coordinates");
                }
            }
            TimeModelMode::Linear => {
                if !(self.linear.b_s_per_enodeb > 0.0) {
                    return bad("per-eNodeB slope must be positive");
                }
                if !(self.linear.a_s >= 0.0) {
                    return bad("fixed overhead must be non-negative");
                }
            }
        }
        Ok(())
    }
}

/// Seconds needed to bring up a VWI of `n` eNodeBs.
///
/// TABLE mode is exact at the anchors, interpolates linearly between them
/// (and from the origin up to the first anchor), and extrapolates past the
/// last anchor with the slope of the final segment.
pub fn estimate_setup_time(n: u32, tm: &TimeModel) -> f64 {
    if n == 0 {
        return 0.0;
    }
    match tm.mode {
        TimeModelMode::Linear => tm.linear.predict(n as f64),
        TimeModelMode::Table => {
            let x = n as f64;
            let mut prev = (0.0, 0.0);
            for &(an, secs) in &tm.table {
                let ax = an as f64;
                if n == an {
                    return secs;
                }
                if x < ax {
                    return prev.1 + (secs - prev.1) * (x - prev.0) / (ax - prev.0);
                }
                prev = (ax, secs);
            }
            let slope = match tm.table.len() {
                0 => 0.0,
                1 => tm.table[0].1 / tm.table[0].0 as f64,
                len => {
                    let (n0, s0) = tm.table[len - 2];
                    let (n1, s1) = tm.table[len - 1];
                    (s1 - s0) / (n1 as f64 - n0 as f64)
                }
            };
            prev.1 + slope * (x - prev.0)
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeploymentPlan {
    pub n_enodebs: u32,
    pub cell_radius_m: f64,
    pub placements: Vec<Point>,
    pub covered_area_m2: f64,
    pub estimated_setup_s: f64,
}

impl DeploymentPlan {
    pub fn to_toml_string(&self) -> Result<String, PlannerError> {
        toml::to_string_pretty(self).map_err(|e| PlannerError::Export(e.to_string()))
    }
}

/// Number of cells of radius `r` whose summed area reaches the target.
/// Always at least one.
pub fn cell_count(target_area_m2: f64, cell_radius_m: f64) -> u32 {
    let per_cell = coverage_area_m2(cell_radius_m).unwrap_or(f64::NAN);
    let ratio = target_area_m2 / per_cell;
    if !(ratio > 0.0) {
        return 1;
    }
    // Shave off rounding noise so an exact multiple of the cell area does
    // not round up to an extra cell.
    (ratio * (1.0 - 1e-12)).ceil().max(1.0) as u32
}

/// The `n` points of a hexagonal lattice with pitch √3·r nearest to `center`,
/// nearest first.
pub fn hex_placements(n: u32, cell_radius_m: f64, center: Point) -> Vec<Point> {
    if n == 0 {
        return Vec::new();
    }
    let pitch = 3f64.sqrt() * cell_radius_m;
    // Rings needed to hold n points: 1 + 3k(k+1) >= n.
    let mut rings = 0i64;
    while 1 + 3 * rings * (rings + 1) < n as i64 {
        rings += 1;
    }
    let span = rings + 1;
    let mut candidates = Vec::new();
    for i in -span..=span {
        for j in -span..=span {
            let x = pitch * (i as f64 + j as f64 / 2.0);
            let y = pitch * (j as f64 * 3f64.sqrt() / 2.0);
            candidates.push((x.hypot(y), y.atan2(x), x, y));
        }
    }
    candidates.sort_by(|a, b| {
        // Lattice distances are exact multiples of the pitch up to rounding;
        // compare on a coarse grid so ties resolve by angle.
        let da = (a.0 / pitch * 1e6).round();
        let db = (b.0 / pitch * 1e6).round();
        da.total_cmp(&db).then(a.1.total_cmp(&b.1))
    });
    candidates
        .into_iter()
        .take(n as usize)
        .map(|(_, _, x, y)| Point::new(center.x + x, center.y + y))
        .collect()
}

pub fn plan_vwi(desc: &VwiDescriptor, tm: &TimeModel) -> Result<DeploymentPlan, PlannerError> {
    desc.validate()?;
    tm.validate()?;
    let n = cell_count(desc.target_area_m2, desc.cell_radius_m);
    let per_cell = coverage_area_m2(desc.cell_radius_m)
        .map_err(|e| PlannerError::InvalidDescriptor(e.to_string()))?;
    Ok(DeploymentPlan {
        n_enodebs: n,
        cell_radius_m: desc.cell_radius_m,
        placements: hex_placements(n, desc.cell_radius_m, desc.center),
        covered_area_m2: n as f64 * per_cell,
        estimated_setup_s: estimate_setup_time(n, tm),
    })
}

/// Knobs used when turning a plan into a deployable service descriptor.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct VwiTemplate {
    pub enodeb_flavor: Flavor,
    pub enodeb_image: String,
    pub tx_power_dbm: f64,
    pub management_cidr: Ipv4Cidr,
    pub dataflow_cidr: Ipv4Cidr,
}

impl Default for VwiTemplate {
    fn default() -> Self {
        VwiTemplate {
            enodeb_flavor: Flavor { vcpus: 2, ram_mb: 2048 },
            enodeb_image: "srslte-enb".into(),
            tx_power_dbm: 10.0,
            management_cidr: "10.10.0.0/16".parse().expect("static cidr"),
            dataflow_cidr: "10.20.0.0/16".parse().expect("static cidr"),
        }
    }
}

/// One eNodeB transmitter per planned cell, on a management and a data-flow
/// network.
pub fn vwi_ns_descriptor(name: &str, desc_bandwidth_hz: f64, plan: &DeploymentPlan, tpl: &VwiTemplate) -> NsDescriptor {
    let vnfs = plan
        .placements
        .iter()
        .enumerate()
        .map(|(i, p)| VnfDescriptor {
            name: format!("enb-{}", i + 1),
            image: tpl.enodeb_image.clone(),
            flavor: tpl.enodeb_flavor,
            role: VnfRole::EnodebTx,
            networks: vec![NetworkRole::Management, NetworkRole::Dataflow],
            radio_requirements: Some(RadioRequirements {
                bandwidth_hz: desc_bandwidth_hz,
                tx_power_dbm: tpl.tx_power_dbm,
                location: Some(*p),
                rrh: None,
            }),
        })
        .collect();
    NsDescriptor {
        name: name.to_string(),
        networks: vec![
            NetworkSpec {
                role: NetworkRole::Management,
                cidr: tpl.management_cidr,
            },
            NetworkSpec {
                role: NetworkRole::Dataflow,
                cidr: tpl.dataflow_cidr,
            },
        ],
        vnfs,
        actuator_bindings: vec![],
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum SwapStrategy {
    Hard,
    SoftHandover,
    Repository,
}

impl std::str::FromStr for SwapStrategy {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_uppercase().replace('-', "_").as_str() {
            "HARD" => Ok(SwapStrategy::Hard),
            "SOFT" | "SOFT_HANDOVER" => Ok(SwapStrategy::SoftHandover),
            "REPOSITORY" => Ok(SwapStrategy::Repository),
            _ => Err(format!("unknown swap strategy `{s}`")),
        }
    }
}

/// Stored VWI designs, selectable by traffic demand.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct VwiRepository {
    entries: Vec<VwiDescriptor>,
}

impl VwiRepository {
    pub fn put(&mut self, desc: VwiDescriptor) {
        self.entries.push(desc);
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn entries(&self) -> &[VwiDescriptor] {
        &self.entries
    }

    /// Entry nearest to `demand` in normalized Euclidean distance over the
    /// demand's numeric fields. Each field is scaled by its spread across the
    /// repository; an entry lacking a field counts as maximally distant on
    /// it. Ties go to the earliest insertion.
    pub fn select(&self, demand: &BTreeMap<String, f64>) -> Result<&VwiDescriptor, PlannerError> {
        if self.entries.is_empty() {
            return Err(PlannerError::EmptyRepository);
        }
        let scale: BTreeMap<&str, f64> = demand
            .iter()
            .map(|(k, &d)| {
                let values = self
                    .entries
                    .iter()
                    .filter_map(|e| e.traffic_profile.get(k).copied())
                    .chain(std::iter::once(d));
                let (lo, hi) = values.fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| (lo.min(v), hi.max(v)));
                let spread = hi - lo;
                (k.as_str(), if spread > 0.0 { spread } else { 1.0 })
            })
            .collect();
        let distance = |e: &VwiDescriptor| -> f64 {
            demand
                .iter()
                .map(|(k, &d)| match e.traffic_profile.get(k) {
                    Some(&v) => ((v - d) / scale[k.as_str()]).powi(2),
                    None => 1.0,
                })
                .sum::<f64>()
                .sqrt()
        };
        let mut best = &self.entries[0];
        let mut best_d = distance(best);
        for e in &self.entries[1..] {
            let d = distance(e);
            if d < best_d {
                best = e;
                best_d = d;
            }
        }
        Ok(best)
    }
}
