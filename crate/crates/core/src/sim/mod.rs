//! Tick-based fluid network dynamics and the window runner.
//!
//! Each tick samples offered load per flow, shares airtime between
//! transmitting nodes max-min fairly, runs a FIFO queue per node with a
//! fixed service rate, and derives per-flow delivery, latency, jitter, loss
//! and retransmission rates. Faults perturb node, link and load state once
//! the injection time is reached.

pub mod channel;
pub mod fault;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::domain::{
    FaultSpec, NodeId, Scenario, Topology, TrafficMode, TrafficProfile, WindowSchedule,
};
use crate::error::{Error, Result};

pub use channel::ChannelConfig;
pub use fault::{
    apply_fault, hidden_receiver, primary_severity, sample_severity, severity_schema,
    validate_fault, validate_overrides, SeverityOverrides, SeverityParam,
};

use fault::{FaultRuntime, LoadMode};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinkState {
    pub rssi_dbm: f64,
    pub base_loss: f64,
    pub capacity_bps: f64,
    pub phy_rate_bps: f64,
    pub retx_rate: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NodeState {
    pub alive: bool,
    pub associated: bool,
    pub app_running: bool,
    pub app_latency_multiplier: f64,
    pub queue_len_pkts: u64,
    pub queue_cap_pkts: u64,
    pub cpu_pct: f64,
    pub mem_pct: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FlowState {
    pub src: NodeId,
    pub dst: NodeId,
    pub offered_bps: f64,
    pub delivered_bps: f64,
    pub latency_ms: f64,
    pub jitter_ms: f64,
    pub loss: f64,
    pub retx_rate: f64,
}

impl FlowState {
    fn idle(src: NodeId, dst: NodeId) -> Self {
        Self {
            src,
            dst,
            offered_bps: 0.0,
            delivered_bps: 0.0,
            latency_ms: 0.0,
            jitter_ms: 0.0,
            loss: 0.0,
            retx_rate: 0.0,
        }
    }

    pub fn touches(&self, n: NodeId) -> bool {
        self.src == n || self.dst == n
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SimConfig {
    pub channel: ChannelConfig,
    pub pkt_bytes_h2h: f64,
    pub pkt_bytes_iot: f64,
    /// Application message size whose serialization time enters latency.
    pub msg_bytes_h2h: f64,
    pub msg_bytes_iot: f64,
    /// Default transmit queue depth, in seconds of nominal service.
    pub queue_seconds: f64,
    pub base_latency_ms: [f64; 2],
    pub h2h_background: f64,
    pub h2h_burst_start_prob: f64,
    pub h2h_max_burst_ticks: f64,
    pub h2h_max_intensity: f64,
    pub cpu_base: [f64; 2],
    pub mem_base: [f64; 2],
    /// Medium-access delay scales as `1 / (1 - gain * busy)` with the
    /// channel's busy airtime fraction.
    pub contention_gain: f64,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            channel: ChannelConfig::default(),
            pkt_bytes_h2h: 1200.0,
            pkt_bytes_iot: 300.0,
            msg_bytes_h2h: 65536.0,
            msg_bytes_iot: 16384.0,
            queue_seconds: 3.0,
            base_latency_ms: [0.5, 1.5],
            h2h_background: 0.4,
            h2h_burst_start_prob: 0.1,
            h2h_max_burst_ticks: 20.0,
            h2h_max_intensity: 3.0,
            cpu_base: [0.05, 0.25],
            mem_base: [0.2, 0.5],
            contention_gain: 0.7,
        }
    }
}

impl SimConfig {
    pub fn pkt_bytes(&self, mode: TrafficMode) -> f64 {
        match mode {
            TrafficMode::H2h => self.pkt_bytes_h2h,
            TrafficMode::Iot => self.pkt_bytes_iot,
        }
    }

    fn msg_bits(&self, mode: TrafficMode) -> f64 {
        8.0 * match mode {
            TrafficMode::H2h => self.msg_bytes_h2h,
            TrafficMode::Iot => self.msg_bytes_iot,
        }
    }
}

/// Independent random streams: traffic, measurement noise, and fault
/// dynamics. Pre-injection ticks never touch the fault stream.
#[derive(Debug, Clone)]
pub struct SimRng {
    pub traffic: ChaCha8Rng,
    pub noise: ChaCha8Rng,
    pub fault: ChaCha8Rng,
}

impl SimRng {
    pub fn new(seed: u64) -> Self {
        let stream = |s: u64| {
            let mut r = ChaCha8Rng::seed_from_u64(seed);
            r.set_stream(s);
            r
        };
        Self {
            traffic: stream(1),
            noise: stream(2),
            fault: stream(3),
        }
    }
}

#[derive(Debug, Clone)]
enum FlowGen {
    H2h { burst_left: u32, intensity: f64 },
    Iot { phase: u32 },
}

#[derive(Debug, Clone)]
pub struct World {
    pub topology: Topology,
    pub nodes: Vec<NodeState>,
    pub links: Vec<LinkState>,
    pub flows: Vec<FlowState>,
    pub(crate) cfg: SimConfig,
    pub(crate) nominal_links: Vec<LinkState>,
    pub(crate) flow_ends: Vec<(NodeId, NodeId)>,
    pub(crate) queue_bits: Vec<f64>,
    pub(crate) fault_rt: FaultRuntime,
    mode: TrafficMode,
    tick_s: f64,
    flow_link: Vec<usize>,
    flow_mean_bps: Vec<f64>,
    flow_base_ms: Vec<f64>,
    prev_latency: Vec<f64>,
    gens: Vec<FlowGen>,
    cpu_base: Vec<f64>,
    mem_base: Vec<f64>,
}

impl World {
    pub fn new(
        topology: &Topology,
        traffic: &TrafficProfile,
        schedule: &WindowSchedule,
        cfg: &SimConfig,
        rng: &mut SimRng,
    ) -> Result<Self> {
        topology.validate()?;
        let links: Vec<LinkState> = topology
            .links
            .iter()
            .map(|l| {
                let phy = cfg.channel.phy_rate_bps(l.rssi_dbm);
                LinkState {
                    rssi_dbm: l.rssi_dbm,
                    base_loss: channel::base_loss(l.rssi_dbm),
                    capacity_bps: cfg.channel.capacity_bps(phy),
                    phy_rate_bps: phy,
                    retx_rate: channel::retx_rate(l.rssi_dbm),
                }
            })
            .collect();

        let mut flow_ends = Vec::with_capacity(traffic.matrix.len());
        let mut flow_link = Vec::with_capacity(traffic.matrix.len());
        let mut flow_mean_bps = Vec::with_capacity(traffic.matrix.len());
        for d in &traffic.matrix {
            let li = topology.link_index(d.src, d.dst).ok_or_else(|| {
                Error::InvalidConfig(format!("traffic pair {}->{} has no link", d.src, d.dst))
            })?;
            if d.mean_offered_load_bps < 0.0 {
                return Err(Error::InvalidConfig("negative offered load".into()));
            }
            flow_ends.push((d.src, d.dst));
            flow_link.push(li);
            flow_mean_bps.push(d.mean_offered_load_bps);
        }

        let pkt_bits = 8.0 * cfg.pkt_bytes(traffic.mode);
        let n = topology.len();
        let nodes: Vec<NodeState> = (0..n)
            .map(|i| {
                let id = NodeId(i as u16);
                let caps: Vec<f64> = topology
                    .links
                    .iter()
                    .zip(&links)
                    .filter(|(l, _)| l.touches(id))
                    .map(|(_, s)| s.capacity_bps)
                    .collect();
                let mean_cap = caps.iter().sum::<f64>() / caps.len().max(1) as f64;
                NodeState {
                    alive: true,
                    associated: true,
                    app_running: true,
                    app_latency_multiplier: 1.0,
                    queue_len_pkts: 0,
                    queue_cap_pkts: ((cfg.queue_seconds * mean_cap / pkt_bits).round() as u64)
                        .max(1),
                    cpu_pct: 0.0,
                    mem_pct: 0.0,
                }
            })
            .collect();

        let cpu_base = (0..n)
            .map(|_| rng.noise.random_range(cfg.cpu_base[0]..=cfg.cpu_base[1]))
            .collect();
        let mem_base = (0..n)
            .map(|_| rng.noise.random_range(cfg.mem_base[0]..=cfg.mem_base[1]))
            .collect();
        let flow_base_ms = flow_ends
            .iter()
            .map(|_| {
                rng.noise
                    .random_range(cfg.base_latency_ms[0]..=cfg.base_latency_ms[1])
            })
            .collect();
        let period = traffic.period_s.max(1.0).round() as u32;
        let gens = flow_ends
            .iter()
            .map(|_| match traffic.mode {
                TrafficMode::H2h => FlowGen::H2h {
                    burst_left: 0,
                    intensity: 0.0,
                },
                TrafficMode::Iot => FlowGen::Iot {
                    phase: rng.traffic.random_range(0..period),
                },
            })
            .collect();

        Ok(Self {
            topology: topology.clone(),
            nominal_links: links.clone(),
            links,
            flows: flow_ends
                .iter()
                .map(|&(s, d)| FlowState::idle(s, d))
                .collect(),
            nodes,
            cfg: cfg.clone(),
            queue_bits: vec![0.0; n],
            fault_rt: FaultRuntime::default(),
            mode: traffic.mode,
            tick_s: schedule.tick_s,
            prev_latency: vec![0.0; flow_ends.len()],
            flow_ends,
            flow_link,
            flow_mean_bps,
            flow_base_ms,
            gens,
            cpu_base,
            mem_base,
        })
    }

    fn sample_offered(
        &mut self,
        traffic: &TrafficProfile,
        tick: usize,
        rng: &mut ChaCha8Rng,
    ) -> Vec<f64> {
        let cfg = &self.cfg;
        let period = traffic.period_s.max(1.0).round() as usize;
        let mut out = Vec::with_capacity(self.gens.len());
        for (gen, &mean) in self.gens.iter_mut().zip(&self.flow_mean_bps) {
            let x = match gen {
                FlowGen::H2h {
                    burst_left,
                    intensity,
                } => {
                    let u_start: f64 = rng.random();
                    let u_dur: f64 = 1.0 - rng.random::<f64>();
                    let u_int: f64 = 1.0 - rng.random::<f64>();
                    let z: f64 = StandardNormal.sample(rng);
                    if *burst_left == 0 && u_start < cfg.h2h_burst_start_prob {
                        let shape = traffic.burstiness;
                        *burst_left =
                            u_dur.powf(-1.0 / shape).min(cfg.h2h_max_burst_ticks).ceil() as u32;
                        *intensity = u_int.powf(-1.0 / shape).min(cfg.h2h_max_intensity);
                    }
                    let burst = if *burst_left > 0 {
                        *burst_left -= 1;
                        *intensity
                    } else {
                        0.0
                    };
                    (cfg.h2h_background + burst) * (1.0 + 0.05 * z).max(0.5)
                }
                FlowGen::Iot { phase } => {
                    let z: f64 = StandardNormal.sample(rng);
                    let report = if tick % period == *phase as usize {
                        0.5
                    } else {
                        0.0
                    };
                    (1.0 + report + traffic.burstiness * z).max(0.2)
                }
            };
            out.push(mean * x);
        }
        out
    }

    fn pkt_bits(&self) -> f64 {
        8.0 * self.cfg.pkt_bytes(self.mode)
    }
}

/// Max-min fair share of `total` airtime across node demands.
pub fn max_min_share(demands: &[f64], total: f64) -> Vec<f64> {
    let mut alloc = vec![0.0; demands.len()];
    let mut order: Vec<usize> = (0..demands.len()).filter(|&i| demands[i] > 0.0).collect();
    order.sort_by(|&a, &b| demands[a].total_cmp(&demands[b]).then(a.cmp(&b)));
    let mut remaining = total;
    let mut left = order.len();
    for &i in &order {
        let share = remaining / left as f64;
        let give = demands[i].min(share);
        alloc[i] = give;
        remaining -= give;
        left -= 1;
    }
    alloc
}

/// Advance the world by one tick.
pub fn step(
    world: &mut World,
    traffic: &TrafficProfile,
    fault: &FaultSpec,
    tick: usize,
    rng: &mut SimRng,
) -> Result<()> {
    let t_s = (tick as f64 * world.tick_s).floor() as u32;
    if !fault.fault.is_normal() && t_s >= fault.injected_at_s {
        apply_fault(world, fault, tick, rng)?;
    }
    let tick_s = world.tick_s;
    let n_nodes = world.nodes.len();
    let n_flows = world.flows.len();
    let base_offered = world.sample_offered(traffic, tick, &mut rng.traffic);
    let pkt_bits = world.pkt_bits();
    let msg_bits = world.cfg.msg_bits(world.mode);

    let blackout = world.fault_rt.blackout;
    let can_send = |w: &World, n: NodeId| {
        let s = &w.nodes[n.index()];
        s.alive && s.associated && blackout != Some(n)
    };

    let mut collision = vec![0.0; n_flows];
    for &(fi, p) in &world.fault_rt.collisions {
        collision[fi] = p;
    }

    // Gate flows by endpoint state.
    let mut offered = vec![0.0; n_flows];
    let mut enqueued = vec![false; n_flows];
    for f in 0..n_flows {
        let (s, d) = world.flow_ends[f];
        let src = &world.nodes[s.index()];
        if src.alive && src.app_running {
            offered[f] = base_offered[f];
        }
        enqueued[f] = offered[f] > 0.0 && can_send(world, s) && can_send(world, d);
    }

    let retx: Vec<f64> = (0..n_flows)
        .map(|f| (world.links[world.flow_link[f]].retx_rate + collision[f]).clamp(0.0, 0.95))
        .collect();
    let goodput_cap: Vec<f64> = (0..n_flows)
        .map(|f| world.links[world.flow_link[f]].capacity_bps * (1.0 - retx[f]))
        .collect();

    // Per-node arrivals and effective service capacity.
    let node_totals = |offered: &[f64]| {
        let mut arrivals = vec![0.0; n_nodes];
        let mut airtime = vec![0.0; n_nodes];
        for f in 0..n_flows {
            if enqueued[f] {
                let s = world.flow_ends[f].0.index();
                arrivals[s] += offered[f] * tick_s;
                airtime[s] += offered[f] / goodput_cap[f];
            }
        }
        (arrivals, airtime)
    };
    let node_capacity = |n: usize, arrivals: &[f64], airtime: &[f64]| {
        if arrivals[n] > 0.0 {
            arrivals[n] / tick_s / airtime[n]
        } else {
            let caps: Vec<f64> = (0..n_flows)
                .filter(|&f| world.flow_ends[f].0.index() == n)
                .map(|f| goodput_cap[f])
                .collect();
            caps.iter().sum::<f64>() / caps.len().max(1) as f64
        }
    };
    let (mut arrivals, mut airtime) = node_totals(&offered);
    let mut capacity: Vec<f64> = (0..n_nodes)
        .map(|n| node_capacity(n, &arrivals, &airtime))
        .collect();
    let demand_of = |n: usize, arrivals: &[f64], capacity: &[f64], queue: &[f64], w: &World| {
        if !can_send(w, NodeId(n as u16)) || capacity[n] <= 0.0 {
            0.0
        } else {
            (arrivals[n] + queue[n]) / (capacity[n] * tick_s)
        }
    };

    if let Some((target, mode)) = world.fault_rt.load {
        let t = target.index();
        if can_send(world, target) && arrivals[t] > 0.0 {
            let mut d: Vec<f64> = (0..n_nodes)
                .map(|n| demand_of(n, &arrivals, &capacity, &world.queue_bits, world))
                .collect();
            d[t] = f64::INFINITY;
            let residual = max_min_share(&d, 1.0)[t];
            let service_bits = residual * capacity[t] * tick_s;
            let wanted = match mode {
                LoadMode::Overload { multiplier, floor } => {
                    multiplier * arrivals[t].max(floor * service_bits)
                }
                LoadMode::Saturate { factor } => factor * service_bits,
            };
            let scale = wanted / arrivals[t];
            for f in 0..n_flows {
                if world.flow_ends[f].0 == target && enqueued[f] {
                    offered[f] *= scale;
                }
            }
            (arrivals, airtime) = node_totals(&offered);
            capacity = (0..n_nodes)
                .map(|n| node_capacity(n, &arrivals, &airtime))
                .collect();
        }
    }

    let demands: Vec<f64> = (0..n_nodes)
        .map(|n| demand_of(n, &arrivals, &capacity, &world.queue_bits, world))
        .collect();
    let alloc = max_min_share(&demands, 1.0);
    let utilization: f64 = alloc.iter().sum::<f64>().min(1.0);
    let contention = 1.0 / (1.0 - world.cfg.contention_gain.clamp(0.0, 0.99) * utilization);

    let mut served_frac = vec![1.0; n_nodes];
    let mut drop_frac = vec![0.0; n_nodes];
    let mut queue_ms = vec![0.0; n_nodes];
    for n in 0..n_nodes {
        let node = &mut world.nodes[n];
        if !can_send_state(node, blackout, n) {
            // Frames cannot leave the node; the backlog is flushed.
            world.queue_bits[n] = 0.0;
            node.queue_len_pkts = 0;
            continue;
        }
        let backlog = arrivals[n] + world.queue_bits[n];
        let served = backlog.min(alloc[n] * capacity[n] * tick_s);
        let mut q = backlog - served;
        let cap_bits = node.queue_cap_pkts as f64 * pkt_bits;
        let dropped = (q - cap_bits).max(0.0);
        q -= dropped;
        if arrivals[n] > 0.0 {
            served_frac[n] = (served / arrivals[n]).min(1.0);
            drop_frac[n] = (dropped / arrivals[n]).min(1.0);
        }
        let rate = if served > 0.0 {
            served / tick_s
        } else {
            capacity[n]
        };
        queue_ms[n] = if q > 0.0 && rate > 0.0 {
            1000.0 * q / rate
        } else {
            0.0
        };
        world.queue_bits[n] = q;
        node.queue_len_pkts = ((q / pkt_bits).floor() as u64).min(node.queue_cap_pkts);
    }

    for f in 0..n_flows {
        let z: f64 = StandardNormal.sample(&mut rng.noise);
        let (s, d) = world.flow_ends[f];
        let mut st = FlowState::idle(s, d);
        st.offered_bps = offered[f];
        let src = &world.nodes[s.index()];
        let dst = &world.nodes[d.index()];
        if !src.alive || !dst.alive {
            st.loss = 1.0;
        } else if offered[f] <= 0.0 {
            // zero-valued state
        } else if !enqueued[f] {
            st.loss = 1.0;
        } else {
            let link = &world.links[world.flow_link[f]];
            let sn = s.index();
            let coll_loss = 0.5 * collision[f];
            st.delivered_bps =
                (offered[f] * served_frac[sn] * (1.0 - link.base_loss) * (1.0 - coll_loss))
                    .min(offered[f]);
            st.loss = (1.0 - (1.0 - link.base_loss) * (1.0 - coll_loss) * (1.0 - drop_frac[sn]))
                .clamp(0.0, 1.0);
            st.retx_rate = retx[f];
            let msg_ms = 1000.0 * msg_bits / goodput_cap[f] * contention;
            st.latency_ms = (world.flow_base_ms[f] + msg_ms + queue_ms[sn])
                * src.app_latency_multiplier
                * dst.app_latency_multiplier;
            let prev = world.prev_latency[f];
            let delta = if prev > 0.0 {
                (st.latency_ms - prev).abs()
            } else {
                0.0
            };
            st.jitter_ms = 0.5 * delta + 0.03 * st.latency_ms * z.abs();
            world.prev_latency[f] = st.latency_ms;
        }
        world.flows[f] = st;
    }

    for n in 0..n_nodes {
        let zc: f64 = StandardNormal.sample(&mut rng.noise);
        let zm: f64 = StandardNormal.sample(&mut rng.noise);
        let is_target = world.fault_rt.activated && fault.target == Some(NodeId(n as u16));
        let (cpu_extra, mem_extra) = if is_target {
            (world.fault_rt.cpu_extra, world.fault_rt.mem_extra)
        } else {
            (0.0, 0.0)
        };
        let node = &mut world.nodes[n];
        if !node.alive {
            node.cpu_pct = 0.0;
            node.mem_pct = 0.0;
            continue;
        }
        let fill = world.queue_bits[n] / (node.queue_cap_pkts as f64 * pkt_bits);
        node.cpu_pct = (world.cpu_base[n] + 0.35 * demands[n].min(1.0) + cpu_extra + 0.015 * zc)
            .clamp(0.0, 1.0);
        node.mem_pct =
            (world.mem_base[n] + 0.15 * fill.min(1.0) + mem_extra + 0.01 * zm).clamp(0.0, 1.0);
    }
    Ok(())
}

fn can_send_state(node: &NodeState, blackout: Option<NodeId>, n: usize) -> bool {
    node.alive && node.associated && blackout != Some(NodeId(n as u16))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Snapshot {
    pub t_s: u32,
    pub nodes: Vec<NodeState>,
    pub links: Vec<LinkState>,
    pub flows: Vec<FlowState>,
}

/// Per-tick world snapshots for one observation window.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RawTrace {
    pub scenario: Scenario,
    pub schedule: WindowSchedule,
    pub topology: Topology,
    pub traffic: TrafficProfile,
    pub fault: FaultSpec,
    pub pkt_bytes: f64,
    pub snapshots: Vec<Snapshot>,
}

impl RawTrace {
    pub fn n_nodes(&self) -> usize {
        self.topology.len()
    }

    pub fn n_flows(&self) -> usize {
        self.traffic.matrix.len()
    }

    pub fn injection_tick(&self) -> usize {
        self.schedule.injection_tick()
    }
}

pub fn run_window(
    scenario: Scenario,
    topology: &Topology,
    traffic: &TrafficProfile,
    fault: &FaultSpec,
    schedule: &WindowSchedule,
    rng_seed: u64,
) -> Result<RawTrace> {
    run_window_with(
        scenario,
        topology,
        traffic,
        fault,
        schedule,
        rng_seed,
        &SimConfig::default(),
    )
}

pub fn run_window_with(
    scenario: Scenario,
    topology: &Topology,
    traffic: &TrafficProfile,
    fault: &FaultSpec,
    schedule: &WindowSchedule,
    rng_seed: u64,
    cfg: &SimConfig,
) -> Result<RawTrace> {
    schedule.validate()?;
    if topology.mode != scenario.mode() || traffic.mode != scenario.traffic() {
        return Err(Error::InvalidConfig(format!(
            "topology/traffic do not match scenario {scenario}"
        )));
    }
    validate_fault(fault, topology)?;
    let mut rng = SimRng::new(rng_seed);
    let mut world = World::new(topology, traffic, schedule, cfg, &mut rng)?;
    let ticks = schedule.ticks();
    let mut snapshots = Vec::with_capacity(ticks);
    for tick in 0..ticks {
        step(&mut world, traffic, fault, tick, &mut rng)?;
        snapshots.push(Snapshot {
            t_s: schedule.time_of(tick),
            nodes: world.nodes.clone(),
            links: world.links.clone(),
            flows: world.flows.clone(),
        });
    }
    Ok(RawTrace {
        scenario,
        schedule: *schedule,
        topology: world.topology.clone(),
        traffic: traffic.clone(),
        fault: fault.clone(),
        pkt_bytes: cfg.pkt_bytes(traffic.mode),
        snapshots,
    })
}
