//! Observation modalities derived from a raw trace: flow measurements,
//! packet-flow statistics, warning events and runtime monitoring records.

use std::fmt;
use std::str::FromStr;

use rand::seq::IndexedRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::domain::NodeId;
use crate::error::{Error, Result};
use crate::sim::RawTrace;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Modality {
    Flow,
    Packet,
    Warning,
    Monitor,
}

impl Modality {
    pub const ALL: [Modality; 4] = [
        Modality::Flow,
        Modality::Packet,
        Modality::Warning,
        Modality::Monitor,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Modality::Flow => "flow",
            Modality::Packet => "packet",
            Modality::Warning => "warning",
            Modality::Monitor => "monitor",
        }
    }

    pub fn file_name(self) -> &'static str {
        match self {
            Modality::Flow => "flow.jsonl",
            Modality::Packet => "packet.jsonl",
            Modality::Warning => "warning.jsonl",
            Modality::Monitor => "monitor.jsonl",
        }
    }
}

impl fmt::Display for Modality {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Modality {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Modality::ALL
            .into_iter()
            .find(|m| m.as_str().eq_ignore_ascii_case(s.trim()))
            .ok_or_else(|| Error::InvalidConfig(format!("unknown modality {s:?}")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Side {
    Sender,
    Receiver,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FlowRecord {
    pub t_s: u32,
    pub src: NodeId,
    pub dst: NodeId,
    pub side: Side,
    pub throughput_bps: f64,
    pub latency_ms: f64,
    pub jitter_ms: f64,
    pub loss: f64,
}

impl FlowRecord {
    /// The node that produced this record.
    pub fn reporter(&self) -> NodeId {
        match self.side {
            Side::Sender => self.src,
            Side::Receiver => self.dst,
        }
    }
}

/// Averaged per-flow statistics over one segment of the window.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PacketFlowFeatures {
    pub t_s: u32,
    pub src: NodeId,
    pub dst: NodeId,
    pub mean_pkt_size_bytes: f64,
    pub mean_iat_ms: f64,
    pub mean_fwd_rate_pps: f64,
    pub mean_bwd_rate_pps: f64,
    pub retx_fraction: f64,
    pub mean_hdr_overhead: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum WarningKind {
    ConnectivityDegradation,
    PacketLoss,
    ExcessiveDelay,
    ProcessDown,
    ResourceAnomaly,
    Reassociation,
}

impl WarningKind {
    pub const ALL: [WarningKind; 6] = [
        WarningKind::ConnectivityDegradation,
        WarningKind::PacketLoss,
        WarningKind::ExcessiveDelay,
        WarningKind::ProcessDown,
        WarningKind::ResourceAnomaly,
        WarningKind::Reassociation,
    ];

    pub fn index(self) -> usize {
        WarningKind::ALL.iter().position(|&k| k == self).unwrap()
    }

    pub fn as_str(self) -> &'static str {
        match self {
            WarningKind::ConnectivityDegradation => "ConnectivityDegradation",
            WarningKind::PacketLoss => "PacketLoss",
            WarningKind::ExcessiveDelay => "ExcessiveDelay",
            WarningKind::ProcessDown => "ProcessDown",
            WarningKind::ResourceAnomaly => "ResourceAnomaly",
            WarningKind::Reassociation => "Reassociation",
        }
    }
}

impl FromStr for WarningKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        WarningKind::ALL
            .into_iter()
            .find(|k| k.as_str() == s)
            .ok_or_else(|| Error::InvalidConfig(format!("unknown warning kind {s:?}")))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WarningEvent {
    pub t_s: u32,
    pub node: NodeId,
    pub kind: WarningKind,
    pub severity: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MonitorRecord {
    pub t_s: u32,
    pub node: NodeId,
    pub cpu_pct: f64,
    pub mem_pct: f64,
    pub app_process_up: bool,
    pub tx_bytes: u64,
    pub rx_bytes: u64,
    pub rssi_dbm: f64,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct TelemetryBundle {
    pub flow: Option<Vec<FlowRecord>>,
    pub packet: Option<Vec<PacketFlowFeatures>>,
    pub warning: Option<Vec<WarningEvent>>,
    pub monitor: Option<Vec<MonitorRecord>>,
}

impl TelemetryBundle {
    pub fn from_trace(trace: &RawTrace, rules: &WarningRuleConfig) -> Result<Self> {
        Ok(Self {
            flow: Some(emit_flow(trace)),
            packet: Some(emit_packet_features(trace)),
            warning: Some(emit_warnings(trace, rules)?),
            monitor: Some(emit_monitor(trace)),
        })
    }

    pub fn has(&self, m: Modality) -> bool {
        match m {
            Modality::Flow => self.flow.is_some(),
            Modality::Packet => self.packet.is_some(),
            Modality::Warning => self.warning.is_some(),
            Modality::Monitor => self.monitor.is_some(),
        }
    }

    pub fn present(&self) -> Vec<Modality> {
        Modality::ALL.into_iter().filter(|&m| self.has(m)).collect()
    }

    pub fn is_complete(&self) -> bool {
        self.present().len() == Modality::ALL.len()
    }

    pub fn remove(&mut self, m: Modality) {
        match m {
            Modality::Flow => self.flow = None,
            Modality::Packet => self.packet = None,
            Modality::Warning => self.warning = None,
            Modality::Monitor => self.monitor = None,
        }
    }

    /// Largest timestamp across present streams.
    pub fn max_t_s(&self) -> Option<u32> {
        let f = self.flow.iter().flatten().map(|r| r.t_s);
        let p = self.packet.iter().flatten().map(|r| r.t_s);
        let w = self.warning.iter().flatten().map(|r| r.t_s);
        let m = self.monitor.iter().flatten().map(|r| r.t_s);
        f.chain(p).chain(w).chain(m).max()
    }

    /// Apply a node relabeling to every stream.
    pub fn relabel(&mut self, map: impl Fn(NodeId) -> NodeId) {
        for r in self.flow.iter_mut().flatten() {
            r.src = map(r.src);
            r.dst = map(r.dst);
        }
        for r in self.packet.iter_mut().flatten() {
            r.src = map(r.src);
            r.dst = map(r.dst);
        }
        for r in self.warning.iter_mut().flatten() {
            r.node = map(r.node);
        }
        for r in self.monitor.iter_mut().flatten() {
            r.node = map(r.node);
        }
    }
}

/// One sender and one receiver record per flow per tick; a crashed node
/// produces no records of its own.
pub fn emit_flow(trace: &RawTrace) -> Vec<FlowRecord> {
    let mut out = Vec::with_capacity(trace.snapshots.len() * trace.n_flows() * 2);
    for snap in &trace.snapshots {
        for f in &snap.flows {
            let rec = |side, throughput_bps| FlowRecord {
                t_s: snap.t_s,
                src: f.src,
                dst: f.dst,
                side,
                throughput_bps: quantize(throughput_bps),
                latency_ms: quantize(f.latency_ms),
                jitter_ms: quantize(f.jitter_ms),
                loss: quantize(f.loss),
            };
            if snap.nodes[f.src.index()].alive {
                out.push(rec(Side::Sender, f.offered_bps));
            }
            if snap.nodes[f.dst.index()].alive {
                out.push(rec(Side::Receiver, f.delivered_bps));
            }
        }
    }
    out
}

/// Measurement precision of exported values: six significant digits.
pub fn quantize(x: f64) -> f64 {
    if x == 0.0 || !x.is_finite() {
        return x;
    }
    let mag = 10f64.powi(5 - x.abs().log10().floor() as i32);
    (x * mag).round() / mag
}

pub const PACKET_SEGMENT_TICKS: usize = 10;
const HEADER_BYTES: f64 = 66.0;

pub fn emit_packet_features(trace: &RawTrace) -> Vec<PacketFlowFeatures> {
    let pkt_bits = 8.0 * trace.pkt_bytes;
    // Acknowledgement traffic per data packet in the reverse direction.
    let ack_ratio = match trace.traffic.mode {
        crate::domain::TrafficMode::H2h => 0.5,
        crate::domain::TrafficMode::Iot => 0.1,
    };
    let tick_s = trace.schedule.tick_s;
    let mut out = Vec::new();
    for seg in trace.snapshots.chunks(PACKET_SEGMENT_TICKS) {
        for fi in 0..trace.n_flows() {
            let len = seg.len() as f64;
            let mut pps = 0.0;
            let mut retx = 0.0;
            let mut active = 0usize;
            for snap in seg {
                let f = &snap.flows[fi];
                pps += f.delivered_bps / pkt_bits;
                if f.delivered_bps > 0.0 {
                    retx += f.retx_rate;
                    active += 1;
                }
            }
            let fwd = pps / len;
            let first = &seg[0].flows[fi];
            let (size, iat, overhead) = if fwd > 0.0 {
                (
                    trace.pkt_bytes,
                    1000.0 / fwd * tick_s.min(1.0),
                    HEADER_BYTES / trace.pkt_bytes,
                )
            } else {
                (0.0, 0.0, 0.0)
            };
            out.push(PacketFlowFeatures {
                t_s: seg[0].t_s,
                src: first.src,
                dst: first.dst,
                mean_pkt_size_bytes: quantize(size),
                mean_iat_ms: quantize(iat),
                mean_fwd_rate_pps: quantize(fwd),
                mean_bwd_rate_pps: quantize(fwd * ack_ratio),
                retx_fraction: quantize(if active > 0 {
                    retx / active as f64
                } else {
                    0.0
                }),
                mean_hdr_overhead: quantize(overhead),
            });
        }
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct WarningRuleConfig {
    /// Consecutive zero-delivery ticks on an inbound flow.
    pub connectivity_ticks: usize,
    pub loss_threshold: f64,
    pub loss_window_ticks: usize,
    /// Latency multiple of the node's pre-injection median.
    pub delay_factor: f64,
    pub resource_threshold: f64,
}

impl Default for WarningRuleConfig {
    fn default() -> Self {
        Self {
            connectivity_ticks: 5,
            loss_threshold: 0.1,
            loss_window_ticks: 5,
            delay_factor: 3.0,
            resource_threshold: 0.9,
        }
    }
}

impl WarningRuleConfig {
    pub fn validate(&self) -> Result<()> {
        if self.connectivity_ticks == 0
            || self.loss_window_ticks == 0
            || !(self.loss_threshold > 0.0)
            || !(self.delay_factor > 0.0)
            || !(self.resource_threshold > 0.0)
        {
            return Err(Error::InvalidConfig(
                "warning rule thresholds must be positive".into(),
            ));
        }
        Ok(())
    }
}

/// Per-node, per-tick quantities the warning rules are evaluated on.
#[derive(Debug, Clone)]
pub struct NodeSignals {
    /// Longest current zero-delivery run over inbound flows.
    pub inbound_zero_run: Vec<Vec<usize>>,
    /// Mean loss over sourced flows with offered load, if any.
    pub loss: Vec<Vec<Option<f64>>>,
    /// Mean latency over sourced flows that delivered, if any.
    pub latency: Vec<Vec<Option<f64>>>,
    pub latency_baseline: Vec<Option<f64>>,
}

impl NodeSignals {
    pub fn from_trace(trace: &RawTrace) -> Self {
        let n = trace.n_nodes();
        let ticks = trace.snapshots.len();
        let mut run = vec![0usize; trace.n_flows()];
        let mut inbound_zero_run = vec![vec![0; ticks]; n];
        let mut loss = vec![vec![None; ticks]; n];
        let mut latency = vec![vec![None; ticks]; n];
        for (t, snap) in trace.snapshots.iter().enumerate() {
            for (fi, f) in snap.flows.iter().enumerate() {
                run[fi] = if f.delivered_bps > 0.0 {
                    0
                } else {
                    run[fi] + 1
                };
                let d = f.dst.index();
                inbound_zero_run[d][t] = inbound_zero_run[d][t].max(run[fi]);
            }
            for (v, (loss_v, lat_v)) in loss.iter_mut().zip(latency.iter_mut()).enumerate() {
                let src = snap.flows.iter().filter(|f| f.src.index() == v);
                let offered: Vec<f64> = src
                    .clone()
                    .filter(|f| f.offered_bps > 0.0)
                    .map(|f| f.loss)
                    .collect();
                let delivering: Vec<f64> = src
                    .filter(|f| f.delivered_bps > 0.0)
                    .map(|f| f.latency_ms)
                    .collect();
                loss_v[t] = mean_opt(&offered);
                lat_v[t] = mean_opt(&delivering);
            }
        }
        let inj = trace.injection_tick().min(ticks);
        let latency_baseline = latency
            .iter()
            .map(|l| median(l[..inj].iter().flatten().copied().collect()))
            .collect();
        Self {
            inbound_zero_run,
            loss,
            latency,
            latency_baseline,
        }
    }

    pub fn windowed_loss(&self, node: usize, tick: usize, window: usize) -> Option<f64> {
        let lo = (tick + 1).saturating_sub(window);
        let vals: Vec<f64> = self.loss[node][lo..=tick]
            .iter()
            .flatten()
            .copied()
            .collect();
        mean_opt(&vals)
    }
}

fn mean_opt(v: &[f64]) -> Option<f64> {
    if v.is_empty() {
        None
    } else {
        Some(v.iter().sum::<f64>() / v.len() as f64)
    }
}

pub(crate) fn median(mut v: Vec<f64>) -> Option<f64> {
    if v.is_empty() {
        return None;
    }
    v.sort_by(|a, b| a.total_cmp(b));
    let m = v.len() / 2;
    Some(if v.len().is_multiple_of(2) {
        0.5 * (v[m - 1] + v[m])
    } else {
        v[m]
    })
}

pub fn emit_warnings(trace: &RawTrace, rules: &WarningRuleConfig) -> Result<Vec<WarningEvent>> {
    rules.validate()?;
    let sig = NodeSignals::from_trace(trace);
    let mut out = Vec::new();
    for (t, snap) in trace.snapshots.iter().enumerate() {
        for (v, node) in snap.nodes.iter().enumerate() {
            if !node.alive {
                continue;
            }
            let mut emit = |kind, severity: f64| {
                out.push(WarningEvent {
                    t_s: snap.t_s,
                    node: NodeId(v as u16),
                    kind,
                    severity: quantize(severity.clamp(0.0, 1.0)),
                })
            };
            let run = sig.inbound_zero_run[v][t];
            if run >= rules.connectivity_ticks {
                emit(
                    WarningKind::ConnectivityDegradation,
                    run as f64 / (2 * rules.connectivity_ticks) as f64,
                );
            }
            if let Some(l) = sig.windowed_loss(v, t, rules.loss_window_ticks) {
                if l > rules.loss_threshold {
                    emit(
                        WarningKind::PacketLoss,
                        (l - rules.loss_threshold) / (1.0 - rules.loss_threshold).max(1e-9),
                    );
                }
            }
            if let (Some(lat), Some(base)) = (sig.latency[v][t], sig.latency_baseline[v]) {
                if base > 0.0 && lat > rules.delay_factor * base {
                    let ratio = lat / base;
                    emit(
                        WarningKind::ExcessiveDelay,
                        (ratio - rules.delay_factor) / rules.delay_factor,
                    );
                }
            }
            if !node.app_running {
                emit(WarningKind::ProcessDown, 1.0);
            }
            let peak = node.cpu_pct.max(node.mem_pct);
            if peak > rules.resource_threshold {
                emit(
                    WarningKind::ResourceAnomaly,
                    (peak - rules.resource_threshold) / (1.0 - rules.resource_threshold).max(1e-9),
                );
            }
            if t > 0 && node.associated && !trace.snapshots[t - 1].nodes[v].associated {
                emit(WarningKind::Reassociation, 1.0);
            }
        }
    }
    Ok(out)
}

pub const MONITOR_PERIOD_TICKS: usize = 5;

/// Runtime monitoring every five ticks; crashed nodes stop reporting.
pub fn emit_monitor(trace: &RawTrace) -> Vec<MonitorRecord> {
    let tick_s = trace.schedule.tick_s;
    let mut out = Vec::new();
    for (t, snap) in trace
        .snapshots
        .iter()
        .enumerate()
        .step_by(MONITOR_PERIOD_TICKS)
    {
        let interval = &trace.snapshots[t..(t + MONITOR_PERIOD_TICKS).min(trace.snapshots.len())];
        for (v, node) in snap.nodes.iter().enumerate() {
            if !node.alive {
                continue;
            }
            let id = NodeId(v as u16);
            let (mut tx, mut rx) = (0.0, 0.0);
            for s in interval {
                for f in &s.flows {
                    if f.src == id {
                        tx += f.delivered_bps * tick_s / 8.0;
                    }
                    if f.dst == id {
                        rx += f.delivered_bps * tick_s / 8.0;
                    }
                }
            }
            let rssi: Vec<f64> = trace
                .topology
                .links
                .iter()
                .zip(&snap.links)
                .filter(|(l, _)| l.touches(id))
                .map(|(_, s)| s.rssi_dbm)
                .collect();
            out.push(MonitorRecord {
                t_s: snap.t_s,
                node: id,
                cpu_pct: quantize(node.cpu_pct),
                mem_pct: quantize(node.mem_pct),
                app_process_up: node.app_running,
                tx_bytes: tx.round() as u64,
                rx_bytes: rx.round() as u64,
                rssi_dbm: quantize(rssi.iter().sum::<f64>() / rssi.len().max(1) as f64),
            });
        }
    }
    out
}

/// With probability `rate`, remove one uniformly chosen stream; the last
/// remaining stream is never removed.
pub fn drop_modalities<R: Rng>(
    mut bundle: TelemetryBundle,
    rate: f64,
    rng: &mut R,
) -> Result<TelemetryBundle> {
    if !(0.0..=0.5).contains(&rate) {
        return Err(Error::InvalidConfig(format!(
            "missing-modality rate {rate} outside [0, 0.5]"
        )));
    }
    let u: f64 = rng.random();
    if u < rate {
        bundle = drop_one_modality(bundle, rng);
    }
    Ok(bundle)
}

/// Remove one uniformly chosen stream unless only one is left.
pub fn drop_one_modality<R: Rng>(mut bundle: TelemetryBundle, rng: &mut R) -> TelemetryBundle {
    let present = bundle.present();
    if present.len() > 1 {
        let m = *present.choose(rng).expect("non-empty");
        bundle.remove(m);
    }
    bundle
}
