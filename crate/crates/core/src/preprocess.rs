//! Feature pipelines: fixed-size node-major matrices for conventional
//! classifiers, padded tick sequences for sequence models, and discretized
//! deviation levels for language-model prompts.
//!
//! Every modality is first reduced to per-node rows on its native slot grid
//! (ticks for flow and warning streams, ten-tick segments for packet
//! statistics, five-tick periods for monitoring). Window aggregates and
//! sequences are both derived from those rows.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataset::Sample;
use crate::error::{Error, Result};
use crate::telemetry::{Modality, Side, WarningKind, MONITOR_PERIOD_TICKS, PACKET_SEGMENT_TICKS};

/// One per-node feature of a modality.
#[derive(Debug, Clone, Copy)]
pub struct FeatureDef {
    pub name: &'static str,
    /// Compress heavy-tailed magnitudes with `ln(1 + x)`.
    pub log: bool,
}

const fn f(name: &'static str, log: bool) -> FeatureDef {
    FeatureDef { name, log }
}

const FLOW: &[FeatureDef] = &[
    f("tx_throughput_bps", true),
    f("rx_throughput_bps", true),
    f("latency_ms", true),
    f("jitter_ms", true),
    f("loss", false),
    f("coverage", false),
];
const PACKET: &[FeatureDef] = &[
    f("pkt_size_bytes", false),
    f("iat_ms", true),
    f("fwd_rate_pps", true),
    f("bwd_rate_pps", true),
    f("retx_fraction", false),
    f("hdr_overhead", false),
];
const WARNING: &[FeatureDef] = &[
    f("connectivity_degradation", false),
    f("packet_loss", false),
    f("excessive_delay", false),
    f("process_down", false),
    f("resource_anomaly", false),
    f("reassociation", false),
];
const MONITOR: &[FeatureDef] = &[
    f("cpu_pct", false),
    f("mem_pct", false),
    f("app_process_up", false),
    f("tx_bytes", true),
    f("rx_bytes", true),
    f("rssi_dbm", false),
    f("coverage", false),
];

pub fn feature_defs(m: Modality) -> &'static [FeatureDef] {
    match m {
        Modality::Flow => FLOW,
        Modality::Packet => PACKET,
        Modality::Warning => WARNING,
        Modality::Monitor => MONITOR,
    }
}

fn modality_index(m: Modality) -> usize {
    Modality::ALL.iter().position(|&x| x == m).unwrap()
}

/// Ticks covered by one slot of the modality's native grid.
pub fn slot_ticks(m: Modality) -> usize {
    match m {
        Modality::Flow | Modality::Warning => 1,
        Modality::Packet => PACKET_SEGMENT_TICKS,
        Modality::Monitor => MONITOR_PERIOD_TICKS,
    }
}

/// Index of the trailing coverage feature, for modalities that have one.
fn coverage_index(m: Modality) -> Option<usize> {
    feature_defs(m).iter().position(|d| d.name == "coverage")
}

/// Per-node rows for one modality on its slot grid, already log-compressed.
/// A `None` row means the node reported nothing in that slot.
#[derive(Debug, Clone, PartialEq)]
pub struct ModalityRows {
    pub modality: Modality,
    /// `rows[slot][node]`; coverage columns hold 1.0 in present rows.
    pub rows: Vec<Vec<Option<Vec<f64>>>>,
}

impl ModalityRows {
    /// Window aggregate per node: mean over present rows; coverage is the
    /// fraction of slots with a row. Nodes with no rows get zeros.
    pub fn aggregate(&self, n_nodes: usize) -> Vec<Vec<f64>> {
        let k = feature_defs(self.modality).len();
        let cov = coverage_index(self.modality);
        let slots = self.rows.len().max(1) as f64;
        (0..n_nodes)
            .map(|v| {
                let mut acc = vec![0.0; k];
                let mut n = 0usize;
                for row in self.rows.iter().filter_map(|r| r[v].as_ref()) {
                    for (a, x) in acc.iter_mut().zip(row) {
                        *a += x;
                    }
                    n += 1;
                }
                if n > 0 {
                    acc.iter_mut().for_each(|a| *a /= n as f64);
                }
                if let Some(c) = cov {
                    acc[c] = n as f64 / slots;
                }
                acc
            })
            .collect()
    }
}

fn transform(m: Modality, raw: &mut [f64]) {
    for (x, d) in raw.iter_mut().zip(feature_defs(m)) {
        if d.log {
            *x = x.max(0.0).ln_1p();
        }
    }
}

fn slot_count(ticks: usize, m: Modality) -> usize {
    ticks.div_ceil(slot_ticks(m))
}

pub fn modality_rows(sample: &Sample, m: Modality) -> Option<ModalityRows> {
    let n = sample.n_nodes;
    let ticks = sample.ticks();
    let slots = slot_count(ticks, m);
    let slot_of = |t_s: u32| (t_s as usize / slot_ticks(m)).min(slots.saturating_sub(1));
    let k = feature_defs(m).len();
    let mut rows: Vec<Vec<Option<Vec<f64>>>> = vec![vec![None; n]; slots];
    match m {
        Modality::Flow => {
            // sums: tx, rx; means: latency, jitter, loss
            let mut cnt = vec![vec![0usize; n]; slots];
            for r in sample.bundle.flow.as_ref()? {
                let v = r.reporter().index();
                let s = slot_of(r.t_s);
                let row = rows[s][v].get_or_insert_with(|| vec![0.0; k]);
                match r.side {
                    Side::Sender => row[0] += r.throughput_bps,
                    Side::Receiver => row[1] += r.throughput_bps,
                }
                row[2] += r.latency_ms;
                row[3] += r.jitter_ms;
                row[4] += r.loss;
                cnt[s][v] += 1;
            }
            for (s, slot) in rows.iter_mut().enumerate() {
                for (v, row) in slot.iter_mut().enumerate() {
                    if let Some(row) = row {
                        let c = cnt[s][v] as f64;
                        row[2] /= c;
                        row[3] /= c;
                        row[4] /= c;
                        row[5] = 1.0;
                    }
                }
            }
        }
        Modality::Packet => {
            let mut cnt = vec![vec![0usize; n]; slots];
            for r in sample.bundle.packet.as_ref()? {
                let v = r.src.index();
                let s = slot_of(r.t_s);
                let row = rows[s][v].get_or_insert_with(|| vec![0.0; k]);
                let vals = [
                    r.mean_pkt_size_bytes,
                    r.mean_iat_ms,
                    r.mean_fwd_rate_pps,
                    r.mean_bwd_rate_pps,
                    r.retx_fraction,
                    r.mean_hdr_overhead,
                ];
                for (a, x) in row.iter_mut().zip(vals) {
                    *a += x;
                }
                cnt[s][v] += 1;
            }
            for (s, slot) in rows.iter_mut().enumerate() {
                for (v, row) in slot.iter_mut().enumerate() {
                    if let Some(row) = row {
                        let c = cnt[s][v] as f64;
                        row.iter_mut().for_each(|x| *x /= c);
                    }
                }
            }
        }
        Modality::Warning => {
            let events = sample.bundle.warning.as_ref()?;
            for slot in rows.iter_mut() {
                for row in slot.iter_mut() {
                    *row = Some(vec![0.0; k]);
                }
            }
            for e in events {
                if let Some(row) = rows[slot_of(e.t_s)][e.node.index()].as_mut() {
                    row[e.kind.index()] += 1.0;
                }
            }
        }
        Modality::Monitor => {
            for r in sample.bundle.monitor.as_ref()? {
                rows[slot_of(r.t_s)][r.node.index()] = Some(vec![
                    r.cpu_pct,
                    r.mem_pct,
                    if r.app_process_up { 1.0 } else { 0.0 },
                    r.tx_bytes as f64,
                    r.rx_bytes as f64,
                    r.rssi_dbm,
                    1.0,
                ]);
            }
        }
    }
    for row in rows.iter_mut().flatten().flatten() {
        transform(m, row);
    }
    Some(ModalityRows { modality: m, rows })
}

/// Everything the pipelines need from one sample, extracted once.
#[derive(Debug, Clone)]
pub struct SampleFeatures {
    pub id: String,
    pub n_nodes: usize,
    pub ticks: usize,
    rows: [Option<ModalityRows>; 4],
    aggregates: [Option<Vec<Vec<f64>>>; 4],
}

impl SampleFeatures {
    pub fn extract(sample: &Sample) -> Self {
        let rows = Modality::ALL.map(|m| modality_rows(sample, m));
        let aggregates =
            std::array::from_fn(|i| rows[i].as_ref().map(|r| r.aggregate(sample.n_nodes)));
        Self {
            id: sample.id.clone(),
            n_nodes: sample.n_nodes,
            ticks: sample.ticks(),
            rows,
            aggregates,
        }
    }

    pub fn has(&self, m: Modality) -> bool {
        self.rows[modality_index(m)].is_some()
    }

    pub fn rows(&self, m: Modality) -> Option<&ModalityRows> {
        self.rows[modality_index(m)].as_ref()
    }

    /// Per-node window means, after log compression, before normalization.
    pub fn aggregate(&self, m: Modality) -> Option<&Vec<Vec<f64>>> {
        self.aggregates[modality_index(m)].as_ref()
    }
}

pub fn extract_all(samples: &[Sample]) -> Vec<SampleFeatures> {
    samples.par_iter().map(SampleFeatures::extract).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureStats {
    pub modality: Modality,
    pub name: String,
    pub min: f64,
    pub max: f64,
    /// Mean and standard deviation over normal-labeled training samples.
    pub mu: f64,
    pub sigma: f64,
    /// Range of per-slot values, used by the sequence pipeline.
    pub slot_min: f64,
    pub slot_max: f64,
}

impl FeatureStats {
    /// Min-max scaling clamped to [0, 1]; constant features map to 0.5.
    pub fn scale(&self, x: f64) -> f64 {
        minmax(x, self.min, self.max)
    }

    pub fn scale_slot(&self, x: f64) -> f64 {
        minmax(x, self.slot_min, self.slot_max)
    }
}

pub fn minmax(x: f64, lo: f64, hi: f64) -> f64 {
    if hi <= lo {
        0.5
    } else {
        ((x - lo) / (hi - lo)).clamp(0.0, 1.0)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NormStats {
    pub config_hash: String,
    pub n_nodes: usize,
    /// Sequence length for the sequence pipeline.
    pub seq_len: usize,
    pub features: Vec<FeatureStats>,
}

impl NormStats {
    pub fn get(&self, m: Modality, j: usize) -> &FeatureStats {
        let offset: usize = Modality::ALL
            .iter()
            .take_while(|&&x| x != m)
            .map(|&x| feature_defs(x).len())
            .sum();
        &self.features[offset + j]
    }
}

/// Fit per-feature statistics on the training split. Statistics are pooled
/// over nodes so every node is scaled identically, which keeps the pipeline
/// equivariant under node relabeling.
pub fn fit_normalizer(
    train: &[&SampleFeatures],
    normal: &[bool],
    config_hash: &str,
) -> Result<NormStats> {
    if train.len() < 2 {
        return Err(Error::Contract(format!(
            "normalizer needs at least 2 training samples, got {}",
            train.len()
        )));
    }
    if normal.len() != train.len() {
        return Err(Error::Contract(
            "normal flags do not match training samples".into(),
        ));
    }
    let n_nodes = train[0].n_nodes;
    if train.iter().any(|s| s.n_nodes != n_nodes) {
        return Err(Error::Contract(
            "training samples differ in node count".into(),
        ));
    }
    let mean_ticks = train.iter().map(|s| s.ticks as f64).sum::<f64>() / train.len() as f64;
    let seq_len = (((mean_ticks / 10.0).round() as usize) * 10).max(10);
    let mut features = Vec::new();
    for m in Modality::ALL {
        for (j, def) in feature_defs(m).iter().enumerate() {
            let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
            let (mut slo, mut shi) = (f64::INFINITY, f64::NEG_INFINITY);
            let (mut sum, mut sq, mut cnt) = (0.0, 0.0, 0usize);
            for (s, &is_normal) in train.iter().zip(normal) {
                let Some(agg) = s.aggregate(m) else { continue };
                for node in agg {
                    let x = node[j];
                    lo = lo.min(x);
                    hi = hi.max(x);
                    if is_normal {
                        sum += x;
                        sq += x * x;
                        cnt += 1;
                    }
                }
                for row in s
                    .rows(m)
                    .into_iter()
                    .flat_map(|r| r.rows.iter())
                    .flatten()
                    .flatten()
                {
                    slo = slo.min(row[j]);
                    shi = shi.max(row[j]);
                }
            }
            if !lo.is_finite() {
                (lo, hi) = (0.0, 0.0);
            }
            if !slo.is_finite() {
                (slo, shi) = (lo, hi);
            }
            let (mu, sigma) = if cnt > 0 {
                let mu = sum / cnt as f64;
                (mu, (sq / cnt as f64 - mu * mu).max(0.0).sqrt())
            } else {
                (0.0, 0.0)
            };
            features.push(FeatureStats {
                modality: m,
                name: def.name.to_string(),
                min: lo,
                max: hi,
                mu,
                sigma,
                slot_min: slo,
                slot_max: shi,
            });
        }
    }
    Ok(NormStats {
        config_hash: config_hash.to_string(),
        n_nodes,
        seq_len,
        features,
    })
}

/// Canonical ordering of a modality set.
pub fn canonical(mods: &[Modality]) -> Vec<Modality> {
    let mut v = mods.to_vec();
    v.sort();
    v.dedup();
    v
}

pub fn modality_set_name(mods: &[Modality]) -> String {
    canonical(mods)
        .iter()
        .map(|m| m.as_str())
        .collect::<Vec<_>>()
        .join("+")
}

pub fn parse_modality_set(s: &str) -> Result<Vec<Modality>> {
    let mods: Vec<Modality> = s.split('+').map(str::parse).collect::<Result<_>>()?;
    if mods.is_empty() {
        return Err(Error::InvalidConfig("empty modality set".into()));
    }
    Ok(canonical(&mods))
}

/// Per-node width of a modality block: its features plus a presence flag.
pub fn block_width(m: Modality) -> usize {
    feature_defs(m).len() + 1
}

pub fn per_node_width(mods: &[Modality]) -> usize {
    mods.iter().map(|&m| block_width(m)).sum()
}

/// Column names for a node-major matrix.
pub fn column_names(mods: &[Modality], n_nodes: usize) -> Vec<String> {
    let mods = canonical(mods);
    let mut out = Vec::with_capacity(n_nodes * per_node_width(&mods));
    for v in 0..n_nodes {
        for &m in &mods {
            for d in feature_defs(m) {
                out.push(format!("n{v}.{m}.{}", d.name));
            }
            out.push(format!("n{v}.{m}.present"));
        }
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureMatrixView {
    pub id: String,
    pub modalities: Vec<Modality>,
    pub n_nodes: usize,
    /// Node-major: node 0's blocks, then node 1's, and so on.
    pub values: Vec<f64>,
}

impl FeatureMatrixView {
    pub fn columns(&self) -> Vec<String> {
        column_names(&self.modalities, self.n_nodes)
    }

    pub fn node_block(&self, v: usize) -> &[f64] {
        let w = self.values.len() / self.n_nodes;
        &self.values[v * w..(v + 1) * w]
    }
}

pub fn aggregate_features(
    s: &SampleFeatures,
    norm: &NormStats,
    mods: &[Modality],
) -> FeatureMatrixView {
    let mods = canonical(mods);
    let mut values = Vec::with_capacity(s.n_nodes * per_node_width(&mods));
    for v in 0..s.n_nodes {
        for &m in &mods {
            match s.aggregate(m) {
                Some(agg) => {
                    for (j, x) in agg[v].iter().enumerate() {
                        values.push(norm.get(m, j).scale(*x));
                    }
                    values.push(1.0);
                }
                None => values.extend(std::iter::repeat_n(0.0, block_width(m))),
            }
        }
    }
    FeatureMatrixView {
        id: s.id.clone(),
        modalities: mods,
        n_nodes: s.n_nodes,
        values,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SequenceView {
    pub id: String,
    pub modalities: Vec<Modality>,
    /// `x[tick][node]` holds the node-major feature row for that tick.
    pub x: Vec<Vec<Vec<f64>>>,
    /// 1 for real ticks, 0 for padding.
    pub mask: Vec<u8>,
}

/// Per-tick features with slot values held over their slot's ticks; ticks
/// beyond `len` are truncated and missing ticks are zero-padded.
pub fn to_sequence(
    s: &SampleFeatures,
    len: usize,
    norm: &NormStats,
    mods: &[Modality],
) -> SequenceView {
    let mods = canonical(mods);
    let width = per_node_width(&mods);
    let real = s.ticks.min(len);
    let mut x = vec![vec![vec![0.0; width]; s.n_nodes]; len];
    for (t, tick) in x.iter_mut().enumerate().take(real) {
        for (v, cell) in tick.iter_mut().enumerate() {
            let mut off = 0;
            for &m in &mods {
                let k = feature_defs(m).len();
                if let Some(rows) = s.rows(m) {
                    if let Some(row) = rows.rows[t / slot_ticks(m)][v].as_ref() {
                        for j in 0..k {
                            cell[off + j] = norm.get(m, j).scale_slot(row[j]);
                        }
                    }
                    cell[off + k] = 1.0;
                }
                off += k + 1;
            }
        }
    }
    let mut mask = vec![0u8; len];
    mask[..real].iter_mut().for_each(|m| *m = 1);
    SequenceView {
        id: s.id.clone(),
        modalities: mods,
        x,
        mask,
    }
}

/// Signed deviation level from a z-score: 0 below one standard deviation,
/// then one step per standard deviation up to three.
pub fn level_of(z: f64) -> i8 {
    let a = z.abs();
    let mag = if a < 1.0 {
        0
    } else if a < 2.0 {
        1
    } else if a < 3.0 {
        2
    } else {
        3
    };
    if z < 0.0 {
        -mag
    } else {
        mag
    }
}

/// Level of `x` relative to normal statistics; a zero spread means any
/// difference at all is an extreme deviation.
pub fn deviation_level(x: f64, mu: f64, sigma: f64) -> i8 {
    if sigma > 0.0 {
        level_of((x - mu) / sigma)
    } else if x == mu {
        0
    } else if x > mu {
        3
    } else {
        -3
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeviationView {
    pub id: String,
    /// Per node: `"modality.feature"` to level in -3..=3.
    pub nodes: Vec<BTreeMap<String, i8>>,
    /// Per node warning counts by kind, if the warning stream is present.
    pub warnings: Option<Vec<BTreeMap<WarningKind, usize>>>,
}

pub fn discretize(s: &SampleFeatures, norm: &NormStats, mods: &[Modality]) -> DeviationView {
    let mods = canonical(mods);
    let mut nodes = vec![BTreeMap::new(); s.n_nodes];
    for &m in &mods {
        let Some(agg) = s.aggregate(m) else { continue };
        for (v, row) in agg.iter().enumerate() {
            for (j, (x, d)) in row.iter().zip(feature_defs(m)).enumerate() {
                let st = norm.get(m, j);
                nodes[v].insert(
                    format!("{m}.{}", d.name),
                    deviation_level(*x, st.mu, st.sigma),
                );
            }
        }
    }
    let warnings = if mods.contains(&Modality::Warning) {
        s.rows(Modality::Warning).map(|rows| {
            (0..s.n_nodes)
                .map(|v| {
                    let mut counts = BTreeMap::new();
                    for row in rows.rows.iter().filter_map(|r| r[v].as_ref()) {
                        for (k, &c) in WarningKind::ALL.iter().zip(row) {
                            if c > 0.0 {
                                *counts.entry(*k).or_insert(0) += c.round() as usize;
                            }
                        }
                    }
                    counts
                })
                .collect()
        })
    } else {
        None
    };
    DeviationView {
        id: s.id.clone(),
        nodes,
        warnings,
    }
}

fn fmt_num(out: &mut String, x: f64) {
    if x == x.trunc() && x.abs() < 1e15 {
        let _ = write!(out, "{}", x as i64);
    } else {
        let _ = write!(out, "{x:.6}");
    }
}

/// CSV with an `id` column followed by the matrix columns.
pub fn write_feature_csv(path: &Path, views: &[FeatureMatrixView]) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    let mut line = String::from("id");
    if let Some(v) = views.first() {
        for c in v.columns() {
            line.push(',');
            line.push_str(&c);
        }
    }
    line.push('\n');
    w.write_all(line.as_bytes())
        .map_err(|e| Error::io(path, e))?;
    for v in views {
        line.clear();
        line.push_str(&v.id);
        for &x in &v.values {
            line.push(',');
            fmt_num(&mut line, x);
        }
        line.push('\n');
        w.write_all(line.as_bytes())
            .map_err(|e| Error::io(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// Header describing the layout of `sequences.jsonl`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SequenceMeta {
    pub config_hash: String,
    pub seq_len: usize,
    pub n_nodes: usize,
    pub modalities: Vec<Modality>,
    /// Per-node column names; each tick row is `n_nodes` such rows.
    pub node_columns: Vec<String>,
}

pub fn sequence_node_columns(mods: &[Modality]) -> Vec<String> {
    column_names(mods, 1)
        .into_iter()
        .map(|c| c.trim_start_matches("n0.").to_string())
        .collect()
}

/// One line per tick: `{"id", "t", "mask", "x": [[node row], ...]}`.
pub fn write_sequences_jsonl(path: &Path, seqs: &[SequenceView]) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    let mut line = String::new();
    for s in seqs {
        for (t, tick) in s.x.iter().enumerate() {
            line.clear();
            let _ = write!(
                line,
                "{{\"id\":\"{}\",\"t\":{t},\"mask\":{},\"x\":[",
                s.id, s.mask[t]
            );
            for (v, row) in tick.iter().enumerate() {
                line.push_str(if v == 0 { "[" } else { ",[" });
                for (j, &x) in row.iter().enumerate() {
                    if j > 0 {
                        line.push(',');
                    }
                    if x == 0.0 || x == 1.0 {
                        fmt_num(&mut line, x);
                    } else {
                        let _ = write!(line, "{x:.4}");
                    }
                }
                line.push(']');
            }
            line.push_str("]}\n");
            w.write_all(line.as_bytes())
                .map_err(|e| Error::io(path, e))?;
        }
    }
    w.flush().map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn level_boundaries() {
        let table = [
            (0.0, 0),
            (0.999, 0),
            (1.0, 1),
            (1.999, 1),
            (2.0, 2),
            (2.5, 2),
            (3.0, 3),
            (40.0, 3),
            (-1.0, -1),
            (-2.5, -2),
            (-3.0, -3),
        ];
        for (z, l) in table {
            assert_eq!(level_of(z), l, "z={z}");
        }
    }

    #[test]
    fn zero_spread_rule() {
        assert_eq!(deviation_level(5.0, 5.0, 0.0), 0);
        assert_eq!(deviation_level(5.1, 5.0, 0.0), 3);
        assert_eq!(deviation_level(4.9, 5.0, 0.0), -3);
    }

    #[test]
    fn minmax_examples() {
        assert_eq!(minmax(15.0, 10.0, 20.0), 0.5);
        assert_eq!(minmax(25.0, 10.0, 20.0), 1.0);
        assert_eq!(minmax(5.0, 10.0, 20.0), 0.0);
        assert_eq!(minmax(7.0, 3.0, 3.0), 0.5);
    }

    #[test]
    fn modality_set_parsing_is_canonical() {
        let m = parse_modality_set("warning+flow").unwrap();
        assert_eq!(m, vec![Modality::Flow, Modality::Warning]);
        assert_eq!(modality_set_name(&m), "flow+warning");
        assert!(parse_modality_set("flow+pcap").is_err());
    }

    #[test]
    fn column_layout_is_node_major() {
        let cols = column_names(&[Modality::Warning], 2);
        assert_eq!(cols.len(), 2 * block_width(Modality::Warning));
        assert!(cols[0].starts_with("n0.warning."));
        assert_eq!(
            cols[block_width(Modality::Warning) - 1],
            "n0.warning.present"
        );
        assert!(cols[block_width(Modality::Warning)].starts_with("n1."));
    }
}
