//! Sample assembly, labeling, anonymization, persistence and splitting.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::domain::{
    build_topology_with, build_traffic_profile_with, FaultSpec, FaultType, NodeId, Scenario,
    TopologyConfig, TrafficConfig, WindowSchedule,
};
use crate::error::{Error, Result};
use crate::jsonio::{ensure_dir, read_json, read_jsonl, to_json_string, write_jsonl};
use crate::sim::{
    hidden_receiver, run_window_with, sample_severity, validate_overrides, RawTrace,
    SeverityOverrides, SimConfig,
};
use crate::telemetry::{drop_one_modality, Modality, TelemetryBundle, WarningRuleConfig};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Labels {
    pub fault_present: bool,
    pub fault_type: FaultType,
    pub fault_node: Option<NodeId>,
}

impl Labels {
    pub fn normal() -> Self {
        Self {
            fault_present: false,
            fault_type: FaultType::Normal,
            fault_node: None,
        }
    }

    pub fn from_fault(spec: &FaultSpec) -> Self {
        Self {
            fault_present: !spec.fault.is_normal(),
            fault_type: spec.fault,
            fault_node: spec.target,
        }
    }

    pub fn validate(&self, n_nodes: usize) -> Result<()> {
        let normal = self.fault_type.is_normal();
        if self.fault_present == normal || self.fault_node.is_some() == normal {
            return Err(Error::Contract(format!(
                "inconsistent labels: present={} type={} node={:?}",
                self.fault_present, self.fault_type, self.fault_node
            )));
        }
        if let Some(n) = self.fault_node {
            if n.index() >= n_nodes {
                return Err(Error::Contract(format!("fault node {n} out of range")));
            }
        }
        Ok(())
    }
}

/// Everything about a sample except its telemetry streams; stored as
/// `sample.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleMeta {
    pub id: String,
    pub scenario: Scenario,
    pub seed: u64,
    pub n_nodes: usize,
    pub duration_s: u32,
    pub injected_at_s: u32,
    /// `node_permutation[original] = published` node index.
    pub node_permutation: Vec<u16>,
    pub severity: BTreeMap<String, f64>,
    pub modalities: Vec<Modality>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Sample {
    pub id: String,
    pub scenario: Scenario,
    pub seed: u64,
    pub n_nodes: usize,
    pub duration_s: u32,
    pub injected_at_s: u32,
    pub node_permutation: Vec<u16>,
    pub severity: BTreeMap<String, f64>,
    pub bundle: TelemetryBundle,
    pub labels: Labels,
}

impl Sample {
    pub fn from_trace(
        id: impl Into<String>,
        seed: u64,
        trace: &RawTrace,
        rules: &WarningRuleConfig,
    ) -> Result<Self> {
        let n = trace.n_nodes();
        Ok(Self {
            id: id.into(),
            scenario: trace.scenario,
            seed,
            n_nodes: n,
            duration_s: trace.schedule.duration_s,
            injected_at_s: trace.fault.injected_at_s,
            node_permutation: (0..n as u16).collect(),
            severity: trace.fault.severity.clone(),
            bundle: TelemetryBundle::from_trace(trace, rules)?,
            labels: Labels::from_fault(&trace.fault),
        })
    }

    pub fn meta(&self) -> SampleMeta {
        SampleMeta {
            id: self.id.clone(),
            scenario: self.scenario,
            seed: self.seed,
            n_nodes: self.n_nodes,
            duration_s: self.duration_s,
            injected_at_s: self.injected_at_s,
            node_permutation: self.node_permutation.clone(),
            severity: self.severity.clone(),
            modalities: self.bundle.present(),
        }
    }

    pub fn ticks(&self) -> usize {
        self.duration_s as usize
    }

    /// Checks every persisted invariant: label consistency, node ranges,
    /// timestamps and the recorded permutation.
    pub fn validate(&self) -> Result<()> {
        let fail = |msg: String| Err(Error::Contract(format!("sample {}: {msg}", self.id)));
        if let Err(e) = self.labels.validate(self.n_nodes) {
            return fail(e.to_string());
        }
        let mut seen = vec![false; self.n_nodes];
        if self.node_permutation.len() != self.n_nodes {
            return fail("permutation length differs from node count".into());
        }
        for &p in &self.node_permutation {
            match seen.get_mut(p as usize) {
                Some(s) if !*s => *s = true,
                _ => {
                    return fail(format!(
                        "node_permutation is not a permutation: {:?}",
                        self.node_permutation
                    ))
                }
            }
        }
        if self.bundle.present().is_empty() {
            return fail("no modality present".into());
        }
        let n = self.n_nodes;
        let ok_node = |id: NodeId| id.index() < n;
        let b = &self.bundle;
        let nodes_ok = b
            .flow
            .iter()
            .flatten()
            .all(|r| ok_node(r.src) && ok_node(r.dst))
            && b.packet
                .iter()
                .flatten()
                .all(|r| ok_node(r.src) && ok_node(r.dst))
            && b.warning.iter().flatten().all(|r| ok_node(r.node))
            && b.monitor.iter().flatten().all(|r| ok_node(r.node));
        if !nodes_ok {
            return fail("stream references a node outside the sample".into());
        }
        if b.max_t_s().is_some_and(|t| t >= self.duration_s) {
            return fail("timestamp beyond the observation window".into());
        }
        Ok(())
    }
}

/// Relabel every node reference with `perm[old] = new`, composing with the
/// permutation already recorded on the sample.
pub fn apply_permutation(mut sample: Sample, perm: &[u16]) -> Result<Sample> {
    if perm.len() != sample.n_nodes {
        return Err(Error::Contract(format!(
            "permutation of {} nodes applied to a {}-node sample",
            perm.len(),
            sample.n_nodes
        )));
    }
    let map = |n: NodeId| NodeId(perm[n.index()]);
    sample.bundle.relabel(map);
    sample.labels.fault_node = sample.labels.fault_node.map(map);
    sample.node_permutation = sample
        .node_permutation
        .iter()
        .map(|&p| perm[p as usize])
        .collect();
    Ok(sample)
}

pub fn invert_permutation(perm: &[u16]) -> Vec<u16> {
    let mut inv = vec![0u16; perm.len()];
    for (i, &p) in perm.iter().enumerate() {
        inv[p as usize] = i as u16;
    }
    inv
}

/// Relabel nodes by a uniformly random permutation.
pub fn anonymize<R: Rng>(sample: Sample, rng: &mut R) -> Sample {
    let mut perm: Vec<u16> = (0..sample.n_nodes as u16).collect();
    perm.shuffle(rng);
    apply_permutation(sample, &perm).expect("permutation sized to the sample")
}

pub fn sample_dir(root: &Path, id: &str) -> PathBuf {
    root.join("samples").join(id)
}

pub fn write_sample(dir: &Path, sample: &Sample) -> Result<()> {
    let io = |e: std::io::Error| Error::SampleIo {
        sample: sample.id.clone(),
        source: e,
    };
    fs::create_dir_all(dir).map_err(io)?;
    let b = &sample.bundle;
    if let Some(v) = &b.flow {
        write_jsonl(&dir.join(Modality::Flow.file_name()), v)?;
    }
    if let Some(v) = &b.packet {
        write_jsonl(&dir.join(Modality::Packet.file_name()), v)?;
    }
    if let Some(v) = &b.warning {
        write_jsonl(&dir.join(Modality::Warning.file_name()), v)?;
    }
    if let Some(v) = &b.monitor {
        write_jsonl(&dir.join(Modality::Monitor.file_name()), v)?;
    }
    fs::write(dir.join("labels.json"), to_json_string(&sample.labels)).map_err(io)?;
    fs::write(dir.join("sample.json"), to_json_string(&sample.meta())).map_err(io)?;
    Ok(())
}

/// Streams listed in `sample.json` are loaded; an absent stream file for a
/// listed modality is an error.
pub fn read_sample(dir: &Path) -> Result<Sample> {
    let meta: SampleMeta = read_json(&dir.join("sample.json"))?;
    let labels: Labels = read_json(&dir.join("labels.json"))?;
    let mut bundle = TelemetryBundle::default();
    for m in &meta.modalities {
        let path = dir.join(m.file_name());
        match m {
            Modality::Flow => bundle.flow = Some(read_jsonl(&path)?),
            Modality::Packet => bundle.packet = Some(read_jsonl(&path)?),
            Modality::Warning => bundle.warning = Some(read_jsonl(&path)?),
            Modality::Monitor => bundle.monitor = Some(read_jsonl(&path)?),
        }
    }
    Ok(Sample {
        id: meta.id,
        scenario: meta.scenario,
        seed: meta.seed,
        n_nodes: meta.n_nodes,
        duration_s: meta.duration_s,
        injected_at_s: meta.injected_at_s,
        node_permutation: meta.node_permutation,
        severity: meta.severity,
        bundle,
        labels,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CorpusConfig {
    pub counts: BTreeMap<Scenario, usize>,
    pub n_nodes: usize,
    pub normal_fraction: f64,
    /// Fraction of samples with one telemetry stream removed.
    pub missing_rate: f64,
    pub base_seed: u64,
    pub train_ratio: f64,
    pub anonymize: bool,
    pub schedule: WindowSchedule,
    pub topology: TopologyConfig,
    pub traffic: TrafficConfig,
    pub sim: SimConfig,
    pub severity: SeverityOverrides,
    pub warnings: WarningRuleConfig,
}

impl Default for CorpusConfig {
    fn default() -> Self {
        Self {
            counts: Scenario::ALL.into_iter().map(|s| (s, 400)).collect(),
            n_nodes: 7,
            normal_fraction: 0.5,
            missing_rate: 0.1,
            base_seed: 2024,
            train_ratio: 0.8,
            anonymize: true,
            schedule: WindowSchedule::default(),
            topology: TopologyConfig::default(),
            traffic: TrafficConfig::default(),
            sim: SimConfig::default(),
            severity: SeverityOverrides::new(),
            warnings: WarningRuleConfig::default(),
        }
    }
}

impl CorpusConfig {
    pub fn with_counts(mut self, per_scenario: usize) -> Self {
        self.counts = Scenario::ALL
            .into_iter()
            .map(|s| (s, per_scenario))
            .collect();
        self
    }

    pub fn total(&self) -> usize {
        self.counts.values().sum()
    }

    pub fn validate(&self) -> Result<()> {
        if self.counts.is_empty() {
            return Err(Error::InvalidConfig("no scenario counts given".into()));
        }
        if let Some((s, _)) = self.counts.iter().find(|(_, &c)| c == 0) {
            return Err(Error::InvalidConfig(format!("count for {s} must be > 0")));
        }
        if !(0.0..=1.0).contains(&self.normal_fraction) {
            return Err(Error::InvalidConfig(
                "normal_fraction outside [0, 1]".into(),
            ));
        }
        if !(0.0..=0.5).contains(&self.missing_rate) {
            return Err(Error::InvalidConfig("missing_rate outside [0, 0.5]".into()));
        }
        if !(self.train_ratio > 0.0 && self.train_ratio < 1.0) {
            return Err(Error::InvalidConfig("train_ratio outside (0, 1)".into()));
        }
        if self.n_nodes < 3 || self.n_nodes > u16::MAX as usize {
            return Err(Error::InvalidConfig(format!(
                "n_nodes {} out of range",
                self.n_nodes
            )));
        }
        self.schedule.validate()?;
        self.warnings.validate()?;
        validate_overrides(&self.severity)
    }
}

/// What one corpus slot will contain, fixed before any simulation runs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SamplePlan {
    pub index: usize,
    pub scenario: Scenario,
    pub fault: FaultType,
    pub drop_modality: bool,
}

const PLAN_STREAM: u64 = 0x706c616e;
const SAMPLE_STREAM: u64 = 0x73616d70;

/// Label plan for the corpus. Normal counts are rounded per scenario,
/// faults cycle through the eleven types across the whole corpus, and
/// exactly `round(missing_rate * total)` samples lose a stream.
pub fn plan_corpus(cfg: &CorpusConfig) -> Result<Vec<SamplePlan>> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.base_seed);
    rng.set_stream(PLAN_STREAM);
    let mut plan = Vec::with_capacity(cfg.total());
    let mut next_fault = 0usize;
    for (&scenario, &count) in &cfg.counts {
        let normals = (count as f64 * cfg.normal_fraction).round() as usize;
        let mut faults: Vec<FaultType> = vec![FaultType::Normal; normals];
        for _ in normals..count {
            faults.push(FaultType::FAULTS[next_fault % FaultType::FAULTS.len()]);
            next_fault += 1;
        }
        faults.shuffle(&mut rng);
        for fault in faults {
            plan.push(SamplePlan {
                index: plan.len(),
                scenario,
                fault,
                drop_modality: false,
            });
        }
    }
    let drops = (plan.len() as f64 * cfg.missing_rate).round() as usize;
    let mut order: Vec<usize> = (0..plan.len()).collect();
    order.shuffle(&mut rng);
    for &i in &order[..drops] {
        plan[i].drop_modality = true;
    }
    Ok(plan)
}

pub fn sample_id(index: usize) -> String {
    format!("s{index:05}")
}

/// Simulate and assemble one planned sample. Deterministic in
/// `(cfg, plan)`; the sample seed is `base_seed + index`.
pub fn build_sample(cfg: &CorpusConfig, plan: &SamplePlan) -> Result<Sample> {
    let seed = cfg.base_seed.wrapping_add(plan.index as u64);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(SAMPLE_STREAM);
    let topology = build_topology_with(plan.scenario, cfg.n_nodes, seed, &cfg.topology)?;
    let traffic = build_traffic_profile_with(plan.scenario, &topology, seed, &cfg.traffic)?;
    let inj = cfg.schedule.injection_at_s;
    let spec = if plan.fault.is_normal() {
        FaultSpec::normal(inj)
    } else {
        let target = NodeId(rng.random_range(0..cfg.n_nodes) as u16);
        let mut spec = FaultSpec::new(plan.fault, target, inj);
        spec.severity = sample_severity(plan.fault, &cfg.severity, &mut rng);
        if plan.fault == FaultType::HiddenNode {
            let receiver = hidden_receiver(&topology, target);
            let candidates: Vec<NodeId> = (0..cfg.n_nodes as u16)
                .map(NodeId)
                .filter(|&n| n != target && Some(n) != receiver)
                .collect();
            spec.partner = Some(candidates[rng.random_range(0..candidates.len())]);
        }
        spec
    };
    let trace = run_window_with(
        plan.scenario,
        &topology,
        &traffic,
        &spec,
        &cfg.schedule,
        seed,
        &cfg.sim,
    )?;
    let mut sample = Sample::from_trace(sample_id(plan.index), seed, &trace, &cfg.warnings)?;
    if plan.drop_modality {
        sample.bundle = drop_one_modality(sample.bundle, &mut rng);
    }
    if cfg.anonymize {
        sample = anonymize(sample, &mut rng);
    }
    Ok(sample)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub id: String,
    pub scenario: Scenario,
    pub fault_type: FaultType,
    pub complete: bool,
    pub split: SplitPart,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorpusManifest {
    pub config_hash: String,
    pub base_seed: u64,
    pub total: usize,
    pub n_nodes: usize,
    pub duration_s: u32,
    pub per_scenario: BTreeMap<Scenario, usize>,
    pub per_fault: BTreeMap<FaultType, usize>,
    pub normal_count: usize,
    pub complete_count: usize,
    pub incomplete_count: usize,
    pub split_seed: u64,
    pub train_ratio: f64,
    /// Stratification key used by the split.
    pub split_strata: String,
    pub samples: Vec<ManifestEntry>,
}

impl CorpusManifest {
    pub fn normal_fraction(&self) -> f64 {
        self.normal_count as f64 / self.total.max(1) as f64
    }

    pub fn missing_fraction(&self) -> f64 {
        self.incomplete_count as f64 / self.total.max(1) as f64
    }

    pub fn ids(&self) -> impl Iterator<Item = &str> {
        self.samples.iter().map(|e| e.id.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SplitPart {
    Train,
    Test,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Split {
    pub config_hash: String,
    pub seed: u64,
    pub train_ratio: f64,
    pub stratified_by: String,
    pub train: Vec<String>,
    pub test: Vec<String>,
}

impl Split {
    pub fn part_of(&self) -> BTreeMap<&str, SplitPart> {
        self.train
            .iter()
            .map(|id| (id.as_str(), SplitPart::Train))
            .chain(self.test.iter().map(|id| (id.as_str(), SplitPart::Test)))
            .collect()
    }
}

/// Stratified split of `(id, stratum)` pairs. Per-stratum train counts are
/// allocated by largest remainder so the overall count is `round(ratio * n)`
/// and every stratum is within one sample of its exact share.
pub fn stratified_split<K: Ord + Clone>(
    items: &[(String, K)],
    ratio: f64,
    seed: u64,
) -> Result<(Vec<String>, Vec<String>)> {
    if !(ratio > 0.0 && ratio < 1.0) {
        return Err(Error::InvalidConfig(format!(
            "split ratio {ratio} outside (0, 1)"
        )));
    }
    let mut strata: BTreeMap<K, Vec<String>> = BTreeMap::new();
    for (id, k) in items {
        strata.entry(k.clone()).or_default().push(id.clone());
    }
    let target = (ratio * items.len() as f64).round() as usize;
    let exact: Vec<f64> = strata.values().map(|v| ratio * v.len() as f64).collect();
    let mut alloc: Vec<usize> = exact.iter().map(|x| x.floor() as usize).collect();
    let mut by_rem: Vec<usize> = (0..alloc.len()).collect();
    by_rem.sort_by(|&a, &b| {
        let ra = exact[a] - exact[a].floor();
        let rb = exact[b] - exact[b].floor();
        rb.total_cmp(&ra).then(a.cmp(&b))
    });
    let short = target.saturating_sub(alloc.iter().sum());
    for &i in by_rem.iter().take(short) {
        alloc[i] += 1;
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (mut train, mut test) = (Vec::new(), Vec::new());
    for (ids, k) in strata.into_values().zip(alloc) {
        let mut ids = ids;
        ids.sort();
        ids.shuffle(&mut rng);
        train.extend_from_slice(&ids[..k]);
        test.extend_from_slice(&ids[k..]);
    }
    train.sort();
    test.sort();
    Ok((train, test))
}

/// Split a corpus stratified by fault type.
pub fn split_corpus(manifest: &CorpusManifest, ratio: f64, seed: u64) -> Result<Split> {
    let items: Vec<(String, FaultType)> = manifest
        .samples
        .iter()
        .map(|e| (e.id.clone(), e.fault_type))
        .collect();
    let (train, test) = stratified_split(&items, ratio, seed)?;
    Ok(Split {
        config_hash: manifest.config_hash.clone(),
        seed,
        train_ratio: ratio,
        stratified_by: "fault_type".into(),
        train,
        test,
    })
}

/// Rewrite the manifest's per-sample split column from a split.
pub fn assign_split(manifest: &mut CorpusManifest, split: &Split) {
    let part = split.part_of();
    for e in &mut manifest.samples {
        e.split = part.get(e.id.as_str()).copied().unwrap_or(SplitPart::Test);
    }
    manifest.split_seed = split.seed;
    manifest.train_ratio = split.train_ratio;
    manifest.split_strata = split.stratified_by.clone();
}

fn build_manifest(
    cfg: &CorpusConfig,
    config_hash: &str,
    samples: &[(SamplePlan, bool)],
) -> CorpusManifest {
    let mut per_scenario = BTreeMap::new();
    let mut per_fault = BTreeMap::new();
    let mut entries = Vec::with_capacity(samples.len());
    for (p, complete) in samples {
        *per_scenario.entry(p.scenario).or_insert(0) += 1;
        *per_fault.entry(p.fault).or_insert(0) += 1;
        entries.push(ManifestEntry {
            id: sample_id(p.index),
            scenario: p.scenario,
            fault_type: p.fault,
            complete: *complete,
            split: SplitPart::Train,
        });
    }
    let complete_count = samples.iter().filter(|(_, c)| *c).count();
    CorpusManifest {
        config_hash: config_hash.to_string(),
        base_seed: cfg.base_seed,
        total: samples.len(),
        n_nodes: cfg.n_nodes,
        duration_s: cfg.schedule.duration_s,
        per_scenario,
        normal_count: per_fault.get(&FaultType::Normal).copied().unwrap_or(0),
        per_fault,
        complete_count,
        incomplete_count: samples.len() - complete_count,
        split_seed: cfg.base_seed,
        train_ratio: cfg.train_ratio,
        split_strata: "fault_type".into(),
        samples: entries,
    }
}

pub const MANIFEST_FILE: &str = "manifest.json";
pub const SPLIT_FILE: &str = "split.json";

/// Generate the whole corpus under `root`: one directory per sample plus
/// `manifest.json`, whose split column follows the returned default split
/// (written separately as `split.json`). Samples are simulated in parallel;
/// the manifest is assembled afterwards in index order.
pub fn generate_corpus(
    cfg: &CorpusConfig,
    root: &Path,
    config_hash: &str,
) -> Result<(CorpusManifest, Split)> {
    let plan = plan_corpus(cfg)?;
    ensure_dir(&root.join("samples"))?;
    let done: Vec<(SamplePlan, bool)> = plan
        .par_iter()
        .map(|p| {
            let s = build_sample(cfg, p)?;
            s.validate()?;
            write_sample(&sample_dir(root, &s.id), &s)?;
            Ok((*p, s.bundle.is_complete()))
        })
        .collect::<Result<_>>()?;
    let mut manifest = build_manifest(cfg, config_hash, &done);
    let split = split_corpus(&manifest, cfg.train_ratio, cfg.base_seed)?;
    assign_split(&mut manifest, &split);
    crate::jsonio::write_json(&root.join(MANIFEST_FILE), &manifest)?;
    Ok((manifest, split))
}

pub fn write_corpus_index(root: &Path, manifest: &CorpusManifest, split: &Split) -> Result<()> {
    crate::jsonio::write_json(&root.join(MANIFEST_FILE), manifest)?;
    crate::jsonio::write_json(&root.join(SPLIT_FILE), split)
}

/// In-memory corpus without touching disk.
pub fn generate_in_memory(cfg: &CorpusConfig) -> Result<Vec<Sample>> {
    plan_corpus(cfg)?
        .par_iter()
        .map(|p| build_sample(cfg, p))
        .collect()
}

pub fn load_samples(root: &Path, manifest: &CorpusManifest) -> Result<Vec<Sample>> {
    manifest
        .samples
        .par_iter()
        .map(|e| read_sample(&sample_dir(root, &e.id)))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn labels_invariant() {
        assert!(Labels::normal().validate(7).is_ok());
        let bad = Labels {
            fault_present: true,
            fault_type: FaultType::Normal,
            fault_node: None,
        };
        assert!(bad.validate(7).is_err());
        let out_of_range = Labels {
            fault_present: true,
            fault_type: FaultType::NodeCrash,
            fault_node: Some(NodeId(7)),
        };
        assert!(out_of_range.validate(7).is_err());
    }

    #[test]
    fn zero_count_is_rejected() {
        let mut cfg = CorpusConfig::default();
        cfg.counts.insert(Scenario::IotAdHoc, 0);
        assert!(matches!(plan_corpus(&cfg), Err(Error::InvalidConfig(_))));
    }

    #[test]
    fn inverse_permutation() {
        let p = vec![2u16, 0, 3, 1];
        let inv = invert_permutation(&p);
        for i in 0..4 {
            assert_eq!(inv[p[i] as usize] as usize, i);
        }
    }

    #[test]
    fn single_stratum_split() {
        let items: Vec<(String, u8)> = (0..11).map(|i| (format!("{i}"), 0)).collect();
        let (tr, te) = stratified_split(&items, 0.8, 1).unwrap();
        assert_eq!(tr.len(), 9);
        assert_eq!(te.len(), 2);
    }
}
