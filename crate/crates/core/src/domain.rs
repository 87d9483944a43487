//! Shared domain model: scenarios, topologies, traffic profiles, the fault
//! taxonomy and the observation-window schedule.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, LogNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Opaque node identifier, a small integer index into the topology.
#[derive(
    Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize, Default,
)]
#[serde(transparent)]
pub struct NodeId(pub u16);

impl NodeId {
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

impl fmt::Display for NodeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Scenario {
    #[serde(rename = "H2H_APSTA")]
    H2hApSta,
    #[serde(rename = "IOT_APSTA")]
    IotApSta,
    #[serde(rename = "IOT_ADHOC")]
    IotAdHoc,
}

impl Scenario {
    pub const ALL: [Scenario; 3] = [Scenario::H2hApSta, Scenario::IotApSta, Scenario::IotAdHoc];

    pub fn mode(self) -> TopologyMode {
        match self {
            Scenario::H2hApSta | Scenario::IotApSta => TopologyMode::Infrastructure,
            Scenario::IotAdHoc => TopologyMode::AdHoc,
        }
    }

    pub fn traffic(self) -> TrafficMode {
        match self {
            Scenario::H2hApSta => TrafficMode::H2h,
            Scenario::IotApSta | Scenario::IotAdHoc => TrafficMode::Iot,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Scenario::H2hApSta => "H2H_APSTA",
            Scenario::IotApSta => "IOT_APSTA",
            Scenario::IotAdHoc => "IOT_ADHOC",
        }
    }
}

impl fmt::Display for Scenario {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum TopologyMode {
    Infrastructure,
    AdHoc,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum TrafficMode {
    H2h,
    Iot,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Link {
    pub a: NodeId,
    pub b: NodeId,
    pub rssi_dbm: f64,
    pub carrier_sense: bool,
}

impl Link {
    pub fn touches(&self, n: NodeId) -> bool {
        self.a == n || self.b == n
    }

    pub fn connects(&self, x: NodeId, y: NodeId) -> bool {
        (self.a == x && self.b == y) || (self.a == y && self.b == x)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Topology {
    pub nodes: Vec<NodeId>,
    pub mode: TopologyMode,
    pub ap: Option<NodeId>,
    pub links: Vec<Link>,
}

pub const RSSI_FLOOR_DBM: f64 = -95.0;
pub const RSSI_CEIL_DBM: f64 = -20.0;

impl Topology {
    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn contains(&self, n: NodeId) -> bool {
        self.nodes.contains(&n)
    }

    pub fn link_index(&self, x: NodeId, y: NodeId) -> Option<usize> {
        self.links.iter().position(|l| l.connects(x, y))
    }

    pub fn neighbors(&self, n: NodeId) -> Vec<NodeId> {
        self.links
            .iter()
            .filter_map(|l| {
                if l.a == n {
                    Some(l.b)
                } else if l.b == n {
                    Some(l.a)
                } else {
                    None
                }
            })
            .collect()
    }

    /// Checks the structural invariants for the declared mode.
    pub fn validate(&self) -> Result<()> {
        if self.nodes.len() < 3 {
            return Err(Error::InvalidConfig(format!(
                "topology needs at least 3 nodes, got {}",
                self.nodes.len()
            )));
        }
        for l in &self.links {
            if !(RSSI_FLOOR_DBM..=RSSI_CEIL_DBM).contains(&l.rssi_dbm) {
                return Err(Error::InvalidConfig(format!(
                    "link {}-{} rssi {} outside [-95, -20]",
                    l.a, l.b, l.rssi_dbm
                )));
            }
            if l.a == l.b || !self.contains(l.a) || !self.contains(l.b) {
                return Err(Error::InvalidConfig(format!("bad link {}-{}", l.a, l.b)));
            }
        }
        match self.mode {
            TopologyMode::Infrastructure => {
                let ap = self.ap.ok_or_else(|| {
                    Error::InvalidConfig("infrastructure topology without AP".into())
                })?;
                for &n in self.nodes.iter().filter(|&&n| n != ap) {
                    let to_ap = self.links.iter().filter(|l| l.connects(n, ap)).count();
                    let total = self.links.iter().filter(|l| l.touches(n)).count();
                    if to_ap != 1 || total != 1 {
                        return Err(Error::InvalidConfig(format!(
                            "station {n} must have exactly one link, to the AP"
                        )));
                    }
                }
            }
            TopologyMode::AdHoc => {
                if self.ap.is_some() {
                    return Err(Error::InvalidConfig("ad hoc topology with an AP".into()));
                }
                if !self.is_connected() {
                    return Err(Error::InvalidConfig(
                        "ad hoc link graph is disconnected".into(),
                    ));
                }
            }
        }
        Ok(())
    }

    fn is_connected(&self) -> bool {
        let mut seen = vec![false; self.nodes.len()];
        let mut stack = vec![self.nodes[0]];
        seen[self.nodes[0].index()] = true;
        while let Some(n) = stack.pop() {
            for m in self.neighbors(n) {
                if !seen[m.index()] {
                    seen[m.index()] = true;
                    stack.push(m);
                }
            }
        }
        seen.into_iter().all(|s| s)
    }
}

/// Knobs for synthetic topology generation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TopologyConfig {
    pub rssi_min_dbm: f64,
    pub rssi_max_dbm: f64,
    /// Probability of each extra chord beyond the base ring in ad hoc graphs.
    pub adhoc_chord_prob: f64,
}

impl Default for TopologyConfig {
    fn default() -> Self {
        Self {
            rssi_min_dbm: -75.0,
            rssi_max_dbm: -40.0,
            adhoc_chord_prob: 0.2,
        }
    }
}

pub fn build_topology(scenario: Scenario, n_nodes: usize, rng_seed: u64) -> Result<Topology> {
    build_topology_with(scenario, n_nodes, rng_seed, &TopologyConfig::default())
}

pub fn build_topology_with(
    scenario: Scenario,
    n_nodes: usize,
    rng_seed: u64,
    cfg: &TopologyConfig,
) -> Result<Topology> {
    if n_nodes < 3 {
        return Err(Error::InvalidConfig(format!(
            "n_nodes must be >= 3, got {n_nodes}"
        )));
    }
    if n_nodes > u16::MAX as usize {
        return Err(Error::InvalidConfig("too many nodes".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);
    let nodes: Vec<NodeId> = (0..n_nodes as u16).map(NodeId).collect();
    let rssi = |rng: &mut ChaCha8Rng| rng.random_range(cfg.rssi_min_dbm..=cfg.rssi_max_dbm);

    let topo = match scenario.mode() {
        TopologyMode::Infrastructure => {
            let ap = NodeId(0);
            let links = nodes[1..]
                .iter()
                .map(|&sta| Link {
                    a: ap,
                    b: sta,
                    rssi_dbm: rssi(&mut rng),
                    carrier_sense: true,
                })
                .collect();
            Topology {
                nodes,
                mode: TopologyMode::Infrastructure,
                ap: Some(ap),
                links,
            }
        }
        TopologyMode::AdHoc => {
            // A shuffled ring keeps every node at degree >= 2; chords add variety.
            let mut order = nodes.clone();
            order.shuffle(&mut rng);
            let mut pairs: Vec<(NodeId, NodeId)> = (0..n_nodes)
                .map(|i| ordered(order[i], order[(i + 1) % n_nodes]))
                .collect();
            for i in 0..n_nodes as u16 {
                for j in (i + 1)..n_nodes as u16 {
                    let p = (NodeId(i), NodeId(j));
                    if !pairs.contains(&p) && rng.random_bool(cfg.adhoc_chord_prob) {
                        pairs.push(p);
                    }
                }
            }
            pairs.sort();
            pairs.dedup();
            let links = pairs
                .into_iter()
                .map(|(a, b)| Link {
                    a,
                    b,
                    rssi_dbm: rssi(&mut rng),
                    carrier_sense: true,
                })
                .collect();
            Topology {
                nodes,
                mode: TopologyMode::AdHoc,
                ap: None,
                links,
            }
        }
    };
    topo.validate()?;
    Ok(topo)
}

fn ordered(a: NodeId, b: NodeId) -> (NodeId, NodeId) {
    if a < b {
        (a, b)
    } else {
        (b, a)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FlowDemand {
    pub src: NodeId,
    pub dst: NodeId,
    pub mean_offered_load_bps: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrafficProfile {
    pub mode: TrafficMode,
    /// Sorted by (src, dst); no self-pairs.
    pub matrix: Vec<FlowDemand>,
    /// Pareto shape of H2H burst sizes; for IoT, the relative jitter amplitude.
    pub burstiness: f64,
    pub period_s: f64,
}

impl TrafficProfile {
    pub fn load(&self, src: NodeId, dst: NodeId) -> Option<f64> {
        self.matrix
            .iter()
            .find(|d| d.src == src && d.dst == dst)
            .map(|d| d.mean_offered_load_bps)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrafficConfig {
    pub h2h_base_bps: f64,
    pub iot_base_bps: f64,
    pub lognormal_sigma: f64,
    pub h2h_shape_min: f64,
    pub h2h_shape_max: f64,
    pub iot_period_min_s: f64,
    pub iot_period_max_s: f64,
    pub iot_jitter: f64,
}

impl Default for TrafficConfig {
    fn default() -> Self {
        Self {
            h2h_base_bps: 1.0e6,
            iot_base_bps: 0.15e6,
            lognormal_sigma: 1.0,
            h2h_shape_min: 1.2,
            h2h_shape_max: 1.9,
            iot_period_min_s: 5.0,
            iot_period_max_s: 15.0,
            iot_jitter: 0.05,
        }
    }
}

pub fn build_traffic_profile(
    scenario: Scenario,
    topology: &Topology,
    rng_seed: u64,
) -> Result<TrafficProfile> {
    build_traffic_profile_with(scenario, topology, rng_seed, &TrafficConfig::default())
}

pub fn build_traffic_profile_with(
    scenario: Scenario,
    topology: &Topology,
    rng_seed: u64,
    cfg: &TrafficConfig,
) -> Result<TrafficProfile> {
    topology.validate()?;
    if topology.mode != scenario.mode() {
        return Err(Error::InvalidConfig(format!(
            "topology mode {:?} does not match scenario {scenario}",
            topology.mode
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(rng_seed ^ 0x7261_6666_6963);
    let scale = LogNormal::new(0.0, cfg.lognormal_sigma)
        .map_err(|e| Error::InvalidConfig(format!("lognormal sigma: {e}")))?;
    let base = match scenario.traffic() {
        TrafficMode::H2h => cfg.h2h_base_bps,
        TrafficMode::Iot => cfg.iot_base_bps,
    };
    // Every link carries traffic in both directions: STA<->AP in
    // infrastructure mode, neighbor<->neighbor in ad hoc mode.
    let mut matrix = Vec::with_capacity(topology.links.len() * 2);
    for l in &topology.links {
        for (src, dst) in [(l.a, l.b), (l.b, l.a)] {
            matrix.push(FlowDemand {
                src,
                dst,
                mean_offered_load_bps: base * scale.sample(&mut rng),
            });
        }
    }
    matrix.sort_by_key(|d| (d.src, d.dst));
    let (burstiness, period_s) = match scenario.traffic() {
        TrafficMode::H2h => {
            let shape = rng.random_range(cfg.h2h_shape_min..=cfg.h2h_shape_max);
            (shape.clamp(1.0 + 1e-9, 2.0), 1.0)
        }
        TrafficMode::Iot => (
            cfg.iot_jitter,
            rng.random_range(cfg.iot_period_min_s..=cfg.iot_period_max_s)
                .round(),
        ),
    };
    Ok(TrafficProfile {
        mode: scenario.traffic(),
        matrix,
        burstiness,
        period_s,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum FaultType {
    NodeCrash,
    PoorLinkQuality,
    AppCrash,
    AppSlowdown,
    TrafficOverload,
    HiddenNode,
    RateAdaptationFailure,
    ProbeFailure,
    BeaconLoss,
    BufferBloat,
    QueueOverflow,
    Normal,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum FaultCategory {
    Hardware,
    Software,
    #[serde(rename = "MAC")]
    Mac,
    Association,
    Congestion,
    None,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Phenomenon {
    Disconnect,
    Lag,
    None,
}

impl FaultType {
    pub const ALL: [FaultType; 12] = [
        FaultType::NodeCrash,
        FaultType::PoorLinkQuality,
        FaultType::AppCrash,
        FaultType::AppSlowdown,
        FaultType::TrafficOverload,
        FaultType::HiddenNode,
        FaultType::RateAdaptationFailure,
        FaultType::ProbeFailure,
        FaultType::BeaconLoss,
        FaultType::BufferBloat,
        FaultType::QueueOverflow,
        FaultType::Normal,
    ];

    /// The eleven injectable faults, excluding `Normal`.
    pub const FAULTS: [FaultType; 11] = [
        FaultType::NodeCrash,
        FaultType::PoorLinkQuality,
        FaultType::AppCrash,
        FaultType::AppSlowdown,
        FaultType::TrafficOverload,
        FaultType::HiddenNode,
        FaultType::RateAdaptationFailure,
        FaultType::ProbeFailure,
        FaultType::BeaconLoss,
        FaultType::BufferBloat,
        FaultType::QueueOverflow,
    ];

    pub fn category(self) -> FaultCategory {
        use FaultType::*;
        match self {
            NodeCrash | PoorLinkQuality => FaultCategory::Hardware,
            AppCrash | AppSlowdown | TrafficOverload => FaultCategory::Software,
            HiddenNode | RateAdaptationFailure => FaultCategory::Mac,
            ProbeFailure | BeaconLoss => FaultCategory::Association,
            BufferBloat | QueueOverflow => FaultCategory::Congestion,
            Normal => FaultCategory::None,
        }
    }

    pub fn phenomenon(self) -> Phenomenon {
        use FaultType::*;
        match self {
            NodeCrash | AppCrash | ProbeFailure | BeaconLoss => Phenomenon::Disconnect,
            Normal => Phenomenon::None,
            _ => Phenomenon::Lag,
        }
    }

    pub fn is_normal(self) -> bool {
        self == FaultType::Normal
    }

    /// Dense class index in `ALL` order.
    pub fn class_index(self) -> usize {
        FaultType::ALL.iter().position(|&f| f == self).unwrap()
    }

    pub fn from_class_index(i: usize) -> Option<FaultType> {
        FaultType::ALL.get(i).copied()
    }

    pub fn as_str(self) -> &'static str {
        use FaultType::*;
        match self {
            NodeCrash => "NodeCrash",
            PoorLinkQuality => "PoorLinkQuality",
            AppCrash => "AppCrash",
            AppSlowdown => "AppSlowdown",
            TrafficOverload => "TrafficOverload",
            HiddenNode => "HiddenNode",
            RateAdaptationFailure => "RateAdaptationFailure",
            ProbeFailure => "ProbeFailure",
            BeaconLoss => "BeaconLoss",
            BufferBloat => "BufferBloat",
            QueueOverflow => "QueueOverflow",
            Normal => "Normal",
        }
    }
}

impl fmt::Display for FaultType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for FaultType {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        FaultType::ALL
            .into_iter()
            .find(|f| f.as_str().eq_ignore_ascii_case(s))
            .ok_or_else(|| Error::InvalidFault(format!("unknown fault type {s:?}")))
    }
}

/// One row of the fault summary table.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct FaultTableRow {
    pub name: FaultType,
    pub category: FaultCategory,
    pub phenomenon: Phenomenon,
}

pub fn fault_table() -> Vec<FaultTableRow> {
    FaultType::ALL
        .into_iter()
        .map(|name| FaultTableRow {
            name,
            category: name.category(),
            phenomenon: name.phenomenon(),
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct WindowSchedule {
    pub duration_s: u32,
    pub injection_at_s: u32,
    pub tick_s: f64,
}

impl Default for WindowSchedule {
    fn default() -> Self {
        Self {
            duration_s: 180,
            injection_at_s: 60,
            tick_s: 1.0,
        }
    }
}

impl WindowSchedule {
    pub fn validate(&self) -> Result<()> {
        if !(self.injection_at_s > 0 && self.injection_at_s < self.duration_s) {
            return Err(Error::InvalidConfig(format!(
                "injection_at_s {} must lie strictly inside (0, {})",
                self.injection_at_s, self.duration_s
            )));
        }
        let divides = |x: u32| {
            let q = x as f64 / self.tick_s;
            self.tick_s > 0.0 && (q - q.round()).abs() < 1e-9
        };
        if !divides(self.duration_s) || !divides(self.injection_at_s) {
            return Err(Error::InvalidConfig(format!(
                "tick_s {} must divide duration and injection time",
                self.tick_s
            )));
        }
        Ok(())
    }

    pub fn ticks(&self) -> usize {
        (self.duration_s as f64 / self.tick_s).round() as usize
    }

    pub fn injection_tick(&self) -> usize {
        (self.injection_at_s as f64 / self.tick_s).round() as usize
    }

    /// Wall-clock second of a tick index.
    pub fn time_of(&self, tick: usize) -> u32 {
        (tick as f64 * self.tick_s).floor() as u32
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FaultSpec {
    pub fault: FaultType,
    pub target: Option<NodeId>,
    /// Second transmitter for `HiddenNode`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub partner: Option<NodeId>,
    pub severity: BTreeMap<String, f64>,
    pub injected_at_s: u32,
}

impl FaultSpec {
    pub fn normal(injected_at_s: u32) -> Self {
        Self {
            fault: FaultType::Normal,
            target: None,
            partner: None,
            severity: BTreeMap::new(),
            injected_at_s,
        }
    }

    pub fn new(fault: FaultType, target: NodeId, injected_at_s: u32) -> Self {
        Self {
            fault,
            target: Some(target),
            partner: None,
            severity: BTreeMap::new(),
            injected_at_s,
        }
    }

    pub fn with_severity(mut self, name: &str, value: f64) -> Self {
        self.severity.insert(name.to_string(), value);
        self
    }

    pub fn with_partner(mut self, partner: NodeId) -> Self {
        self.partner = Some(partner);
        self
    }
}
