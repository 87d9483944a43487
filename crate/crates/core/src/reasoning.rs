//! Operational-feature reasoning: a fixed space of interpretable fault
//! features, ground-truth vectors built from warnings and fault labels,
//! binarization of model scores, explanation precision/recall/F1, and
//! per-dimension threshold calibration.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::dataset::SplitPart;
use crate::domain::FaultType;
use crate::error::{Error, Result};
use crate::telemetry::{WarningEvent, WarningKind};

pub const FEATURE_NAMES: [&str; 10] = [
    "connectivity_loss",
    "signal_degradation",
    "elevated_packet_loss",
    "elevated_latency",
    "elevated_jitter",
    "throughput_degradation",
    "excessive_retransmissions",
    "queue_saturation",
    "application_failure",
    "resource_exhaustion",
];

/// Feature names plus the two mapping tables used to build ground truth.
/// Serialized as `features.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FeatureSpace {
    pub names: Vec<String>,
    pub warning_map: BTreeMap<WarningKind, Vec<String>>,
    pub fault_map: BTreeMap<FaultType, Vec<String>>,
}

impl Default for FeatureSpace {
    fn default() -> Self {
        use FaultType::*;
        use WarningKind::*;
        let v = |xs: &[&str]| xs.iter().map(|s| s.to_string()).collect::<Vec<_>>();
        let warning_map = BTreeMap::from([
            (ConnectivityDegradation, v(&["connectivity_loss"])),
            (PacketLoss, v(&["elevated_packet_loss"])),
            (ExcessiveDelay, v(&["elevated_latency"])),
            (ProcessDown, v(&["application_failure"])),
            (ResourceAnomaly, v(&["resource_exhaustion"])),
            (Reassociation, v(&["connectivity_loss"])),
        ]);
        let fault_map = BTreeMap::from([
            (
                NodeCrash,
                v(&["connectivity_loss", "throughput_degradation"]),
            ),
            (
                PoorLinkQuality,
                v(&[
                    "signal_degradation",
                    "elevated_packet_loss",
                    "elevated_jitter",
                    "throughput_degradation",
                ]),
            ),
            (
                AppCrash,
                v(&["application_failure", "throughput_degradation"]),
            ),
            (AppSlowdown, v(&["application_failure", "elevated_latency"])),
            (
                TrafficOverload,
                v(&[
                    "resource_exhaustion",
                    "elevated_latency",
                    "elevated_packet_loss",
                ]),
            ),
            (
                HiddenNode,
                v(&[
                    "elevated_packet_loss",
                    "excessive_retransmissions",
                    "elevated_latency",
                ]),
            ),
            (
                RateAdaptationFailure,
                v(&["throughput_degradation", "excessive_retransmissions"]),
            ),
            (ProbeFailure, v(&["connectivity_loss"])),
            (BeaconLoss, v(&["connectivity_loss"])),
            (BufferBloat, v(&["elevated_latency", "queue_saturation"])),
            (
                QueueOverflow,
                v(&["elevated_packet_loss", "queue_saturation"]),
            ),
            (Normal, vec![]),
        ]);
        Self {
            names: v(&FEATURE_NAMES),
            warning_map,
            fault_map,
        }
    }
}

impl FeatureSpace {
    pub fn d(&self) -> usize {
        self.names.len()
    }

    pub fn index(&self, name: &str) -> Option<usize> {
        self.names.iter().position(|n| n == name)
    }

    pub fn validate(&self) -> Result<()> {
        if self.names.is_empty() {
            return Err(Error::InvalidConfig("feature space is empty".into()));
        }
        let unique: BTreeSet<&String> = self.names.iter().collect();
        if unique.len() != self.names.len() {
            return Err(Error::InvalidConfig("duplicate feature names".into()));
        }
        for k in WarningKind::ALL {
            if !self.warning_map.contains_key(&k) {
                return Err(Error::InvalidConfig(format!(
                    "warning map lacks {}",
                    k.as_str()
                )));
            }
        }
        for f in FaultType::ALL {
            if !self.fault_map.contains_key(&f) {
                return Err(Error::InvalidConfig(format!("fault map lacks {f}")));
            }
        }
        let targets = self
            .warning_map
            .values()
            .chain(self.fault_map.values())
            .flatten();
        for name in targets {
            if self.index(name).is_none() {
                return Err(Error::InvalidConfig(format!(
                    "unknown feature {name:?} in mapping"
                )));
            }
        }
        Ok(())
    }

    fn set(&self, out: &mut [bool], names: &[String]) {
        for n in names {
            if let Some(i) = self.index(n) {
                out[i] = true;
            }
        }
    }

    /// Features implied by warnings alone.
    pub fn from_warnings(&self, kinds: impl IntoIterator<Item = WarningKind>) -> Vec<bool> {
        let mut out = vec![false; self.d()];
        for k in kinds {
            if let Some(names) = self.warning_map.get(&k) {
                self.set(&mut out, names);
            }
        }
        out
    }

    /// Ground truth: union of the warning-implied and fault-implied sets.
    pub fn build_ground_truth(&self, warnings: &[WarningEvent], fault: FaultType) -> Vec<bool> {
        let mut out = self.from_warnings(warnings.iter().map(|w| w.kind));
        if let Some(names) = self.fault_map.get(&fault) {
            self.set(&mut out, names);
        }
        out
    }
}

fn check_dims(a: usize, b: usize) -> Result<()> {
    if a != b {
        return Err(Error::Contract(format!("dimension mismatch: {a} vs {b}")));
    }
    Ok(())
}

/// `E_i = 1` iff `e_i >= tau_i`.
pub fn binarize(e: &[f64], tau: &[f64]) -> Result<Vec<bool>> {
    check_dims(e.len(), tau.len())?;
    Ok(e.iter().zip(tau).map(|(x, t)| x >= t).collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ExplanationScores {
    pub ep: f64,
    pub er: f64,
    pub ef1: f64,
}

/// Explanation precision, recall and F1 of a predicted feature set against
/// the ground-truth set. Two empty sets agree perfectly; if only one side
/// is empty the undefined ratio is 0 and so is F1.
pub fn explanation_scores(pred: &[bool], truth: &[bool]) -> Result<ExplanationScores> {
    check_dims(pred.len(), truth.len())?;
    let np = pred.iter().filter(|&&x| x).count();
    let nt = truth.iter().filter(|&&x| x).count();
    if np == 0 && nt == 0 {
        return Ok(ExplanationScores {
            ep: 1.0,
            er: 1.0,
            ef1: 1.0,
        });
    }
    let inter = pred.iter().zip(truth).filter(|(p, t)| **p && **t).count() as f64;
    let ep = if np > 0 { inter / np as f64 } else { 0.0 };
    let er = if nt > 0 { inter / nt as f64 } else { 0.0 };
    let ef1 = if ep + er > 0.0 {
        2.0 * ep * er / (ep + er)
    } else {
        0.0
    };
    Ok(ExplanationScores { ep, er, ef1 })
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
struct Counts {
    tp: usize,
    fp: usize,
    fn_: usize,
}

impl Counts {
    fn add(&mut self, o: Counts) {
        self.tp += o.tp;
        self.fp += o.fp;
        self.fn_ += o.fn_;
    }

    fn f1(self) -> f64 {
        let den = 2 * self.tp + self.fp + self.fn_;
        if den == 0 {
            1.0
        } else {
            2.0 * self.tp as f64 / den as f64
        }
    }
}

fn dim_counts(scores: &[f64], truth: &[bool], tau: f64) -> Counts {
    let mut c = Counts::default();
    for (&s, &t) in scores.iter().zip(truth) {
        match (s >= tau, t) {
            (true, true) => c.tp += 1,
            (true, false) => c.fp += 1,
            (false, true) => c.fn_ += 1,
            (false, false) => {}
        }
    }
    c
}

/// Candidate thresholds for one dimension, ascending: 0, every observed
/// score, and the next representable value above the largest score so an
/// all-negative prediction is always reachable, even past 1.
pub fn threshold_candidates(scores: &[f64]) -> Vec<f64> {
    let mut c: Vec<f64> = scores.iter().map(|x| x.clamp(0.0, 1.0)).collect();
    c.push(0.0);
    c.sort_by(f64::total_cmp);
    c.dedup();
    let top = *c.last().unwrap();
    c.push(top.next_up());
    c
}

/// Micro-averaged explanation F1 over every pair and dimension.
pub fn micro_ef1(pairs: &[(Vec<f64>, Vec<bool>)], tau: &[f64]) -> f64 {
    let mut c = Counts::default();
    for (i, &t) in tau.iter().enumerate() {
        let s: Vec<f64> = pairs.iter().map(|p| p.0[i]).collect();
        let y: Vec<bool> = pairs.iter().map(|p| p.1[i]).collect();
        c.add(dim_counts(&s, &y, t));
    }
    c.f1()
}

/// Best threshold of one dimension under an integer-valued objective, ties
/// going to the largest threshold.
fn argmax_threshold(
    cands: &[f64],
    scores: &[f64],
    truth: &[bool],
    score: impl Fn(Counts) -> i64,
) -> f64 {
    let mut best = (i64::MIN, 0.0);
    for &t in cands {
        let v = score(dim_counts(scores, truth, t));
        if v >= best.0 {
            best = (v, t);
        }
    }
    best.1
}

/// Micro-F1 as an exact fraction `num / den`.
fn micro_ratio(cols: &[(Vec<f64>, Vec<bool>)], tau: &[f64]) -> (i64, i64) {
    let mut c = Counts::default();
    for ((s, y), &t) in cols.iter().zip(tau) {
        c.add(dim_counts(s, y, t));
    }
    let den = (2 * c.tp + c.fp + c.fn_) as i64;
    if den == 0 {
        (1, 1)
    } else {
        (2 * c.tp as i64, den)
    }
}

/// Threshold vector from (model scores, ground truth) pairs.
///
/// Each dimension first takes the threshold maximizing its own binary F1.
/// Aggregate micro-F1 is a ratio `2TP / (2TP + FP + FN)`, so for a fixed
/// target value `a/b` maximizing `2TP(b - a) - a(FP + FN)` separates across
/// dimensions; iterating the target to the achieved micro-F1 (Dinkelbach)
/// reaches the joint optimum, and ties toward larger thresholds then pick
/// the componentwise largest optimal vector. Arithmetic stays in integers
/// so tie-breaking is exact.
pub fn calibrate_thresholds(pairs: &[(Vec<f64>, Vec<bool>)]) -> Result<Vec<f64>> {
    let Some(first) = pairs.first() else {
        return Err(Error::Contract(
            "calibration needs at least one pair".into(),
        ));
    };
    let d = first.0.len();
    for (e, y) in pairs {
        check_dims(e.len(), d)?;
        check_dims(y.len(), d)?;
    }
    let cols: Vec<(Vec<f64>, Vec<bool>)> = (0..d)
        .map(|i| {
            (
                pairs.iter().map(|p| p.0[i]).collect(),
                pairs.iter().map(|p| p.1[i]).collect(),
            )
        })
        .collect();
    let cands: Vec<Vec<f64>> = cols.iter().map(|(s, _)| threshold_candidates(s)).collect();

    // Binary F1 in 2^-50 fixed point: distinct fractions with denominators
    // below 2^25 stay distinct.
    let dim_f1 = |c: Counts| {
        let den = (2 * c.tp + c.fp + c.fn_) as i64;
        if den == 0 {
            1 << 50
        } else {
            (((2 * c.tp as i128) << 50) / den as i128) as i64
        }
    };
    let mut tau: Vec<f64> = (0..d)
        .map(|i| argmax_threshold(&cands[i], &cols[i].0, &cols[i].1, dim_f1))
        .collect();
    let mut lambda = micro_ratio(&cols, &tau);
    loop {
        let (a, b) = lambda;
        let next: Vec<f64> = (0..d)
            .map(|i| {
                argmax_threshold(&cands[i], &cols[i].0, &cols[i].1, |c| {
                    2 * c.tp as i64 * (b - a) - a * (c.fp + c.fn_) as i64
                })
            })
            .collect();
        let (na, nb) = micro_ratio(&cols, &next);
        // Compare na/nb with a/b.
        let ord = (na * b).cmp(&(a * nb));
        if ord != std::cmp::Ordering::Greater {
            if ord == std::cmp::Ordering::Equal {
                tau = next;
            }
            break;
        }
        tau = next;
        lambda = (na, nb);
    }

    // No single coordinate change may improve the aggregate.
    let (a, b) = micro_ratio(&cols, &tau);
    for i in 0..d {
        for &t in &cands[i] {
            let mut trial = tau.clone();
            trial[i] = t;
            let (ta, tb) = micro_ratio(&cols, &trial);
            debug_assert!(ta * b <= a * tb, "coordinate {i} improves micro-F1");
        }
    }
    Ok(tau)
}

/// Per-sample explanation scores written to `reasoning_eval.jsonl`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReasoningRecord {
    pub sample: String,
    pub modalities: String,
    pub part: SplitPart,
    pub ep: f64,
    pub er: f64,
    pub ef1: f64,
}

/// Corpus means for one modality set and split part.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReasoningSummary {
    pub modalities: String,
    pub part: SplitPart,
    pub n: usize,
    pub ep: f64,
    pub er: f64,
    pub ef1: f64,
    pub thresholds: Vec<f64>,
    pub config_hash: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ReasoningLine {
    Sample(ReasoningRecord),
    Summary(ReasoningSummary),
}

/// Scored samples of one modality set, keyed by split part.
pub struct ScoredSample<'a> {
    pub id: &'a str,
    pub part: SplitPart,
    pub scores: &'a [f64],
    pub truth: &'a [bool],
}

/// Calibrate on the training part, score every sample, and summarize both
/// parts with the same thresholds.
pub fn evaluate_set(
    modalities: &str,
    samples: &[ScoredSample],
    config_hash: &str,
) -> Result<Vec<ReasoningLine>> {
    let train: Vec<(Vec<f64>, Vec<bool>)> = samples
        .iter()
        .filter(|s| s.part == SplitPart::Train)
        .map(|s| (s.scores.to_vec(), s.truth.to_vec()))
        .collect();
    let tau = calibrate_thresholds(&train)?;
    let mut lines = Vec::with_capacity(samples.len() + 2);
    let mut sums: BTreeMap<SplitPart, (usize, f64, f64, f64)> = BTreeMap::new();
    for s in samples {
        let pred = binarize(s.scores, &tau)?;
        let sc = explanation_scores(&pred, s.truth)?;
        let e = sums.entry(s.part).or_default();
        e.0 += 1;
        e.1 += sc.ep;
        e.2 += sc.er;
        e.3 += sc.ef1;
        lines.push(ReasoningLine::Sample(ReasoningRecord {
            sample: s.id.to_string(),
            modalities: modalities.to_string(),
            part: s.part,
            ep: sc.ep,
            er: sc.er,
            ef1: sc.ef1,
        }));
    }
    for (part, (n, ep, er, ef1)) in sums {
        let k = n as f64;
        lines.push(ReasoningLine::Summary(ReasoningSummary {
            modalities: modalities.to_string(),
            part,
            n,
            ep: ep / k,
            er: er / k,
            ef1: ef1 / k,
            thresholds: tau.clone(),
            config_hash: config_hash.to_string(),
        }));
    }
    Ok(lines)
}

/// Markdown table of mean EP/ER/EF1 per modality set, one row per split
/// part. Thresholds are always calibrated on the training part.
pub fn render_reasoning(summaries: &[ReasoningSummary]) -> String {
    let mut sets: Vec<&str> = Vec::new();
    for s in summaries {
        if !sets.contains(&s.modalities.as_str()) {
            sets.push(&s.modalities);
        }
    }
    let mut out = String::from("\n## Reasoning consistency\n\n");
    out.push_str("Entries are mean EP / ER / EF1 of binarized model features against ground truth; thresholds are calibrated on the training part and reused on the test part.\n\n| Part |");
    for s in &sets {
        out.push_str(&format!(" {s} (EP/ER/EF1) |"));
    }
    out.push_str("\n|---|");
    out.push_str(&"---|".repeat(sets.len()));
    out.push('\n');
    for part in [SplitPart::Train, SplitPart::Test] {
        out.push_str(&format!(
            "| {} |",
            if part == SplitPart::Train {
                "train"
            } else {
                "test"
            }
        ));
        for set in &sets {
            match summaries
                .iter()
                .find(|s| s.modalities == *set && s.part == part)
            {
                Some(s) => out.push_str(&format!(" {:.2} / {:.2} / {:.2} |", s.ep, s.er, s.ef1)),
                None => out.push_str(" – |"),
            }
        }
        out.push('\n');
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::NodeId;

    fn set(d: usize, on: &[usize]) -> Vec<bool> {
        (0..d).map(|i| on.contains(&i)).collect()
    }

    fn warn(kind: WarningKind) -> WarningEvent {
        WarningEvent {
            t_s: 70,
            node: NodeId(1),
            kind,
            severity: 0.5,
        }
    }

    #[test]
    fn default_space_is_valid() {
        let s = FeatureSpace::default();
        s.validate().unwrap();
        assert_eq!(s.d(), 10);
    }

    #[test]
    fn ground_truth_rules() {
        let s = FeatureSpace::default();
        assert!(s
            .build_ground_truth(&[], FaultType::Normal)
            .iter()
            .all(|&x| !x));
        let pl = s.build_ground_truth(&[warn(WarningKind::PacketLoss)], FaultType::Normal);
        assert_eq!(pl, set(10, &[2]));
        let ac = s.build_ground_truth(&[warn(WarningKind::ProcessDown)], FaultType::AppCrash);
        assert_eq!(ac, set(10, &[5, 8]));
    }

    #[test]
    fn binarize_is_inclusive() {
        assert_eq!(
            binarize(&[0.3, 0.8], &[0.5, 0.5]).unwrap(),
            vec![false, true]
        );
        assert_eq!(binarize(&[0.5], &[0.5]).unwrap(), vec![true]);
        assert_eq!(
            binarize(&[0.0, 0.2], &[0.0, 0.0]).unwrap(),
            vec![true, true]
        );
        assert!(binarize(&[0.1], &[0.1, 0.2]).is_err());
    }

    #[test]
    fn scores_edge_rules() {
        let e = explanation_scores(&set(4, &[]), &set(4, &[])).unwrap();
        assert_eq!((e.ep, e.er, e.ef1), (1.0, 1.0, 1.0));
        let e = explanation_scores(&set(4, &[1]), &set(4, &[])).unwrap();
        assert_eq!((e.ep, e.er, e.ef1), (0.0, 0.0, 0.0));
        let e = explanation_scores(&set(4, &[]), &set(4, &[2])).unwrap();
        assert_eq!((e.ep, e.er, e.ef1), (0.0, 0.0, 0.0));
        let e = explanation_scores(&set(4, &[0, 1, 2]), &set(4, &[1, 2, 3])).unwrap();
        assert!((e.ep - 2.0 / 3.0).abs() < 1e-12 && (e.ef1 - 2.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn separable_dimension_reaches_f1_one() {
        let pairs: Vec<(Vec<f64>, Vec<bool>)> =
            [(0.1, false), (0.3, false), (0.6, true), (0.9, true)]
                .iter()
                .map(|&(s, y)| (vec![s], vec![y]))
                .collect();
        let tau = calibrate_thresholds(&pairs).unwrap();
        assert!(tau[0] > 0.3 && tau[0] <= 0.6);
        assert_eq!(micro_ef1(&pairs, &tau), 1.0);
    }

    #[test]
    fn all_negative_dimension_predicts_nothing() {
        let pairs: Vec<(Vec<f64>, Vec<bool>)> = [0.2, 0.7, 0.4]
            .iter()
            .map(|&s| (vec![s], vec![false]))
            .collect();
        let tau = calibrate_thresholds(&pairs).unwrap();
        assert!(tau[0] > 0.7);
        assert!(calibrate_thresholds(&[]).is_err());
    }
}
