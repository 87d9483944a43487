//! Fault injector: severity schemas and per-tick fault effects.

use std::collections::BTreeMap;

use rand::Rng;

use crate::domain::{FaultSpec, FaultType, NodeId, Topology};
use crate::error::{Error, Result};

use super::channel::{base_loss, clamp_rssi, retx_rate};
use super::{SimRng, World};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SeverityParam {
    pub name: &'static str,
    pub min: f64,
    pub max: f64,
}

const fn p(name: &'static str, min: f64, max: f64) -> SeverityParam {
    SeverityParam { name, min, max }
}

const POOR_LINK: &[SeverityParam] = &[p("rssi_drop_db", 15.0, 25.0), p("base_loss", 0.05, 0.2)];
const APP_SLOWDOWN: &[SeverityParam] = &[p("latency_multiplier", 3.0, 10.0)];
const OVERLOAD: &[SeverityParam] = &[p("load_multiplier", 2.0, 4.0)];
const HIDDEN: &[SeverityParam] = &[p("hidden_duty", 0.2, 0.5)];
const RATE_ADAPT: &[SeverityParam] = &[p("rate_fraction", 0.1, 0.3), p("retx_increase", 0.1, 0.3)];
const PROBE: &[SeverityParam] = &[
    p("reassoc_fail_ticks", 10.0, 30.0),
    p("disconnect_period_ticks", 45.0, 45.0),
];
const BEACON: &[SeverityParam] = &[
    p("outage_ticks", 8.0, 20.0),
    p("missed_beacons_to_drop", 5.0, 5.0),
];
const BLOAT: &[SeverityParam] = &[
    p("queue_multiplier", 20.0, 20.0),
    p("load_factor", 1.2, 1.2),
];
const OVERFLOW: &[SeverityParam] = &[p("queue_fraction", 0.1, 0.1), p("burst_factor", 1.5, 2.5)];

/// Registered severity parameters and their default sampling ranges.
pub fn severity_schema(fault: FaultType) -> &'static [SeverityParam] {
    use FaultType::*;
    match fault {
        NodeCrash | AppCrash | Normal => &[],
        PoorLinkQuality => POOR_LINK,
        AppSlowdown => APP_SLOWDOWN,
        TrafficOverload => OVERLOAD,
        HiddenNode => HIDDEN,
        RateAdaptationFailure => RATE_ADAPT,
        ProbeFailure => PROBE,
        BeaconLoss => BEACON,
        BufferBloat => BLOAT,
        QueueOverflow => OVERFLOW,
    }
}

/// The scalar whose increase should never weaken the fault's main symptom.
pub fn primary_severity(fault: FaultType) -> Option<&'static str> {
    use FaultType::*;
    match fault {
        NodeCrash | AppCrash | Normal => None,
        PoorLinkQuality => Some("rssi_drop_db"),
        AppSlowdown => Some("latency_multiplier"),
        TrafficOverload => Some("load_multiplier"),
        HiddenNode => Some("hidden_duty"),
        RateAdaptationFailure => Some("retx_increase"),
        ProbeFailure => Some("reassoc_fail_ticks"),
        BeaconLoss => Some("outage_ticks"),
        BufferBloat => Some("queue_multiplier"),
        QueueOverflow => Some("burst_factor"),
    }
}

/// Per-fault overrides of the sampling ranges, keyed by parameter name.
pub type SeverityOverrides = BTreeMap<FaultType, BTreeMap<String, [f64; 2]>>;

pub fn validate_overrides(overrides: &SeverityOverrides) -> Result<()> {
    for (fault, params) in overrides {
        for (name, [lo, hi]) in params {
            if !severity_schema(*fault).iter().any(|s| s.name == name) {
                return Err(Error::InvalidConfig(format!(
                    "{fault} has no severity parameter {name:?}"
                )));
            }
            if !(lo <= hi) {
                return Err(Error::InvalidConfig(format!(
                    "{fault}.{name}: range [{lo}, {hi}] is empty"
                )));
            }
        }
    }
    Ok(())
}

pub fn sample_severity<R: Rng>(
    fault: FaultType,
    overrides: &SeverityOverrides,
    rng: &mut R,
) -> BTreeMap<String, f64> {
    severity_schema(fault)
        .iter()
        .map(|s| {
            let [lo, hi] = overrides
                .get(&fault)
                .and_then(|m| m.get(s.name))
                .copied()
                .unwrap_or([s.min, s.max]);
            // Always draw so the stream position does not depend on the range.
            let u: f64 = rng.random();
            (s.name.to_string(), lo + u * (hi - lo))
        })
        .collect()
}

fn severity(fault: &FaultSpec, name: &str) -> f64 {
    fault.severity.get(name).copied().unwrap_or_else(|| {
        let s = severity_schema(fault.fault)
            .iter()
            .find(|s| s.name == name)
            .expect("parameter is registered");
        0.5 * (s.min + s.max)
    })
}

/// The node on the receiving end of a hidden-node collision.
pub fn hidden_receiver(topology: &Topology, target: NodeId) -> Option<NodeId> {
    topology.neighbors(target).into_iter().min()
}

pub fn validate_fault(fault: &FaultSpec, topology: &Topology) -> Result<()> {
    match (fault.fault.is_normal(), fault.target) {
        (true, Some(t)) => {
            return Err(Error::InvalidFault(format!(
                "Normal sample must not carry a target (got {t})"
            )))
        }
        (false, None) => {
            return Err(Error::InvalidFault(format!(
                "{} requires a target node",
                fault.fault
            )))
        }
        (false, Some(t)) if !topology.contains(t) => {
            return Err(Error::InvalidFault(format!(
                "target {t} is not in the topology"
            )))
        }
        _ => {}
    }
    for name in fault.severity.keys() {
        if !severity_schema(fault.fault).iter().any(|s| s.name == name) {
            return Err(Error::InvalidFault(format!(
                "{} has no severity parameter {name:?}",
                fault.fault
            )));
        }
    }
    if fault.fault == FaultType::HiddenNode {
        let target = fault.target.unwrap();
        let partner = fault
            .partner
            .ok_or_else(|| Error::InvalidFault("HiddenNode needs a second transmitter".into()))?;
        let receiver = hidden_receiver(topology, target)
            .ok_or_else(|| Error::InvalidFault(format!("target {target} has no neighbor")))?;
        if partner == target || partner == receiver || !topology.contains(partner) {
            return Err(Error::InvalidFault(format!(
                "invalid hidden transmitter {partner} for target {target}"
            )));
        }
    } else if fault.partner.is_some() {
        return Err(Error::InvalidFault(format!(
            "{} does not take a second transmitter",
            fault.fault
        )));
    }
    Ok(())
}

/// How a congestion-class fault reshapes the target's offered load.
#[derive(Debug, Clone, Copy, PartialEq)]
pub(crate) enum LoadMode {
    /// Multiply the target's offered load, flooring it at a fraction of its
    /// residual airtime so that the overload always saturates the node.
    Overload { multiplier: f64, floor: f64 },
    /// Offer exactly `factor` times the residual service rate.
    Saturate { factor: f64 },
}

/// Mutable fault state carried across ticks.
#[derive(Debug, Clone, Default)]
pub(crate) struct FaultRuntime {
    pub activated: bool,
    pub load: Option<(NodeId, LoadMode)>,
    /// Collision probability applied to (flow index) this tick.
    pub collisions: Vec<(usize, f64)>,
    /// Node whose traffic is blacked out this tick.
    pub blackout: Option<NodeId>,
    pub cpu_extra: f64,
    pub mem_extra: f64,
    // association fault bookkeeping
    episode_start: usize,
    episode_len: usize,
    reassoc_at: usize,
    next_episode: usize,
    missed_run: usize,
}

/// Apply one tick of fault effects. Static effects (link degradation,
/// queue resizing, crashes) are applied on the first active tick; dynamic
/// effects (association episodes, bursts, collisions) are refreshed every
/// tick. `Normal` leaves the world untouched.
pub fn apply_fault(
    world: &mut World,
    fault: &FaultSpec,
    tick: usize,
    rng: &mut SimRng,
) -> Result<()> {
    if fault.fault.is_normal() {
        return Ok(());
    }
    if !world.fault_rt.activated {
        validate_fault(fault, &world.topology)?;
    }
    let target = fault.target.expect("validated");
    let ti = target.index();
    let first = !world.fault_rt.activated;
    world.fault_rt.activated = true;
    world.fault_rt.collisions.clear();
    world.fault_rt.blackout = None;

    // Fixed number of draws per tick keeps the fault stream aligned
    // regardless of fault type or severity.
    let u: [f64; 3] = [rng.fault.random(), rng.fault.random(), rng.fault.random()];

    use FaultType::*;
    match fault.fault {
        NodeCrash => {
            let n = &mut world.nodes[ti];
            n.alive = false;
            n.associated = false;
            n.app_running = false;
            n.cpu_pct = 0.0;
            n.mem_pct = 0.0;
            world.queue_bits[ti] = 0.0;
            n.queue_len_pkts = 0;
        }
        PoorLinkQuality => {
            if first {
                let drop = severity(fault, "rssi_drop_db");
                let floor_loss = severity(fault, "base_loss");
                for (li, l) in world.topology.links.iter().enumerate() {
                    if l.touches(target) {
                        let ls = &mut world.links[li];
                        ls.rssi_dbm = clamp_rssi(ls.rssi_dbm - drop);
                        ls.phy_rate_bps = world.cfg.channel.phy_rate_bps(ls.rssi_dbm);
                        ls.capacity_bps = world.cfg.channel.capacity_bps(ls.phy_rate_bps);
                        ls.base_loss = base_loss(ls.rssi_dbm).max(floor_loss).min(1.0);
                        ls.retx_rate = retx_rate(ls.rssi_dbm);
                    }
                }
            }
        }
        AppCrash => {
            world.nodes[ti].app_running = false;
        }
        AppSlowdown => {
            world.nodes[ti].app_latency_multiplier = severity(fault, "latency_multiplier").max(1.0);
            world.fault_rt.cpu_extra = 0.1;
            world.fault_rt.mem_extra = 0.25;
        }
        TrafficOverload => {
            let m = severity(fault, "load_multiplier").max(1.0);
            world.fault_rt.load = Some((
                target,
                LoadMode::Overload {
                    multiplier: m,
                    floor: 0.6,
                },
            ));
            world.fault_rt.cpu_extra = 0.3 + 0.12 * m;
        }
        HiddenNode => {
            let partner = fault.partner.expect("validated");
            let receiver = hidden_receiver(&world.topology, target).expect("validated");
            if first {
                if let Some(li) = world.topology.link_index(target, partner) {
                    world.topology.links[li].carrier_sense = false;
                }
            }
            let overlap = (severity(fault, "hidden_duty") * (0.8 + 0.4 * u[0])).clamp(0.0, 1.0);
            for (fi, f) in world.flow_ends.iter().enumerate() {
                if f.1 == receiver && (f.0 == target || f.0 == partner) {
                    world.fault_rt.collisions.push((fi, overlap));
                }
            }
        }
        RateAdaptationFailure => {
            if first {
                let frac = severity(fault, "rate_fraction").clamp(0.01, 1.0);
                let extra = severity(fault, "retx_increase").max(0.0);
                for (li, l) in world.topology.links.iter().enumerate() {
                    if l.touches(target) {
                        let nominal = world.nominal_links[li].phy_rate_bps;
                        let ls = &mut world.links[li];
                        ls.phy_rate_bps = nominal * frac;
                        ls.capacity_bps = world.cfg.channel.capacity_bps(ls.phy_rate_bps);
                        ls.retx_rate = (ls.retx_rate + extra).min(0.95);
                    }
                }
            }
        }
        ProbeFailure => {
            let period = severity(fault, "disconnect_period_ticks").round().max(1.0) as usize;
            let fail = severity(fault, "reassoc_fail_ticks").round().max(1.0) as usize;
            let rt = &mut world.fault_rt;
            if first {
                rt.next_episode = tick;
            }
            if tick == rt.next_episode {
                rt.episode_start = tick;
                rt.reassoc_at = tick + fail;
                rt.next_episode = tick + period;
            }
            let n = &mut world.nodes[ti];
            n.associated = !(tick >= rt.episode_start && tick < rt.reassoc_at);
        }
        BeaconLoss => {
            let outage = severity(fault, "outage_ticks").round().max(1.0) as usize;
            let to_drop = severity(fault, "missed_beacons_to_drop").round().max(1.0) as usize;
            let rt = &mut world.fault_rt;
            if first {
                rt.next_episode = tick + (u[1] * 5.0) as usize;
                rt.episode_len = 0;
                rt.reassoc_at = 0;
            }
            if tick == rt.next_episode {
                rt.episode_start = tick;
                rt.episode_len = outage;
                rt.missed_run = 0;
                // Rejoin takes two ticks after beacons come back.
                rt.reassoc_at = tick + outage + 2;
                rt.next_episode = rt.reassoc_at + 10 + (u[2] * 15.0) as usize;
            }
            let in_outage = tick >= rt.episode_start && tick < rt.episode_start + rt.episode_len;
            if in_outage {
                rt.missed_run += 1;
                rt.blackout = Some(target);
            }
            let n = &mut world.nodes[ti];
            if in_outage && rt.missed_run >= to_drop {
                n.associated = false;
            } else if !in_outage && tick >= rt.reassoc_at {
                n.associated = true;
            }
        }
        BufferBloat => {
            if first {
                let mult = severity(fault, "queue_multiplier").max(1.0);
                let n = &mut world.nodes[ti];
                n.queue_cap_pkts = ((n.queue_cap_pkts as f64) * mult).round().max(1.0) as u64;
            }
            let factor = severity(fault, "load_factor").max(0.0);
            world.fault_rt.load = Some((target, LoadMode::Saturate { factor }));
        }
        QueueOverflow => {
            if first {
                let frac = severity(fault, "queue_fraction").clamp(1e-3, 1.0);
                let n = &mut world.nodes[ti];
                n.queue_cap_pkts = ((n.queue_cap_pkts as f64) * frac).round().max(1.0) as u64;
            }
            let burst = severity(fault, "burst_factor").max(1.0);
            let factor = 1.0 + u[0] * (burst - 1.0);
            world.fault_rt.load = Some((target, LoadMode::Saturate { factor }));
        }
        Normal => unreachable!(),
    }
    Ok(())
}
