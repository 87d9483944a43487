//! Prediction tasks, metrics, the benchmark grid and the results report.

pub mod models;

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataset::{Labels, SplitPart};
use crate::domain::FaultType;
use crate::error::{Error, Result};
use crate::preprocess::{
    aggregate_features, canonical, modality_set_name, NormStats, SampleFeatures,
};
use crate::telemetry::Modality;

pub use models::{train_baseline, BaselineConfig, MethodKind, Model, TrainSet};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Task {
    Detection,
    Classification,
    Localization,
}

impl Task {
    pub const ALL: [Task; 3] = [Task::Detection, Task::Classification, Task::Localization];

    pub fn as_str(self) -> &'static str {
        match self {
            Task::Detection => "Detection",
            Task::Classification => "Classification",
            Task::Localization => "Localization",
        }
    }

    pub fn n_classes(self, n_nodes: usize) -> usize {
        match self {
            Task::Detection => 2,
            Task::Classification => FaultType::ALL.len(),
            Task::Localization => n_nodes,
        }
    }

    pub fn class_name(self, c: usize) -> String {
        match self {
            Task::Detection => if c == 1 { "fault" } else { "normal" }.to_string(),
            Task::Classification => FaultType::from_class_index(c)
                .map_or_else(|| format!("class {c}"), |f| f.to_string()),
            Task::Localization => format!("node {c}"),
        }
    }
}

impl std::fmt::Display for Task {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for Task {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let t = s.trim().to_ascii_lowercase();
        Task::ALL
            .into_iter()
            .find(|k| {
                k.as_str().to_ascii_lowercase() == t || k.as_str()[..1].eq_ignore_ascii_case(&t)
            })
            .ok_or_else(|| Error::InvalidConfig(format!("unknown task {s:?}")))
    }
}

/// Class label of a sample for a task; `None` when the sample is outside
/// the task (normal samples have no fault node to localize).
pub fn label_for(labels: &Labels, task: Task) -> Option<usize> {
    match task {
        Task::Detection => Some(usize::from(labels.fault_present)),
        Task::Classification => Some(labels.fault_type.class_index()),
        Task::Localization => labels.fault_node.map(|n| n.index()),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub accuracy: f64,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

fn ratio(a: usize, b: usize) -> f64 {
    if b == 0 {
        0.0
    } else {
        a as f64 / b as f64
    }
}

pub fn harmonic(p: f64, r: f64) -> f64 {
    if p + r > 0.0 {
        2.0 * p * r / (p + r)
    } else {
        0.0
    }
}

/// Detection scores the positive (fault) class. Multi-class tasks
/// macro-average precision and recall over the classes present in `truth`,
/// and F1 is their harmonic mean.
pub fn evaluate(pred: &[usize], truth: &[usize], task: Task) -> Result<Metrics> {
    if pred.len() != truth.len() {
        return Err(Error::Contract(format!(
            "{} predictions for {} labels",
            pred.len(),
            truth.len()
        )));
    }
    let correct = pred.iter().zip(truth).filter(|(p, t)| p == t).count();
    let accuracy = ratio(correct, truth.len());
    let class_pr = |c: usize| {
        let tp = pred
            .iter()
            .zip(truth)
            .filter(|&(&p, &t)| p == c && t == c)
            .count();
        let predicted = pred.iter().filter(|&&p| p == c).count();
        let actual = truth.iter().filter(|&&t| t == c).count();
        (ratio(tp, predicted), ratio(tp, actual))
    };
    let (precision, recall) = match task {
        Task::Detection => class_pr(1),
        _ => {
            let classes: BTreeSet<usize> = truth.iter().copied().collect();
            let n = classes.len().max(1) as f64;
            let (ps, rs) = classes
                .iter()
                .map(|&c| class_pr(c))
                .fold((0.0, 0.0), |(a, b), (p, r)| (a + p, b + r));
            (ps / n, rs / n)
        }
    };
    Ok(Metrics {
        accuracy,
        precision,
        recall,
        f1: harmonic(precision, recall),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultsRecord {
    pub method: String,
    /// Canonical modality set, e.g. `flow+warning`.
    pub modalities: String,
    pub task: Task,
    pub accuracy: f64,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    #[serde(default)]
    pub n_train: usize,
    #[serde(default)]
    pub n_test: usize,
    #[serde(default)]
    pub config_hash: String,
}

impl ResultsRecord {
    pub fn validate(&self) -> Result<()> {
        let unit = |x: f64| (0.0..=1.0).contains(&x);
        if ![self.accuracy, self.precision, self.recall, self.f1]
            .into_iter()
            .all(unit)
        {
            return Err(Error::Contract(format!(
                "{} metrics outside [0, 1]",
                self.method
            )));
        }
        if (self.f1 - harmonic(self.precision, self.recall)).abs() > 1e-6 {
            return Err(Error::Contract(format!(
                "{} {} {}: f1 is not the harmonic mean of precision and recall",
                self.method, self.modalities, self.task
            )));
        }
        Ok(())
    }
}

/// A labelled corpus in feature form with its split.
pub struct BenchData<'a> {
    pub features: &'a [SampleFeatures],
    pub labels: &'a [Labels],
    pub parts: &'a [SplitPart],
    pub norm: &'a NormStats,
}

/// Train and test matrices for one modality set and task.
pub struct TaskData {
    pub x_train: Vec<Vec<f64>>,
    pub y_train: Vec<usize>,
    pub x_test: Vec<Vec<f64>>,
    pub y_test: Vec<usize>,
    pub n_classes: usize,
}

impl BenchData<'_> {
    pub fn matrix(&self, mods: &[Modality]) -> Vec<Vec<f64>> {
        self.features
            .par_iter()
            .map(|s| aggregate_features(s, self.norm, mods).values)
            .collect()
    }

    pub fn task_data(&self, x: &[Vec<f64>], task: Task) -> TaskData {
        let mut d = TaskData {
            x_train: Vec::new(),
            y_train: Vec::new(),
            x_test: Vec::new(),
            y_test: Vec::new(),
            n_classes: task.n_classes(self.norm.n_nodes),
        };
        for ((xi, lab), part) in x.iter().zip(self.labels).zip(self.parts) {
            let Some(y) = label_for(lab, task) else {
                continue;
            };
            match part {
                SplitPart::Train => {
                    d.x_train.push(xi.clone());
                    d.y_train.push(y);
                }
                SplitPart::Test => {
                    d.x_test.push(xi.clone());
                    d.y_test.push(y);
                }
            }
        }
        d
    }
}

pub fn run_cell(
    data: &TaskData,
    method: MethodKind,
    task: Task,
    hyper: &BaselineConfig,
) -> Result<Metrics> {
    let train = TrainSet {
        x: &data.x_train,
        y: &data.y_train,
        n_classes: data.n_classes,
    };
    let model = train_baseline(method, train, hyper, &|c| task.class_name(c))?;
    evaluate(&model.predict_all(&data.x_test), &data.y_test, task)
}

/// Run every (method, modality set, task) cell on the shared split. Cells
/// run in parallel; output order is methods, then sets, then tasks.
pub fn run_benchmark(
    data: &BenchData<'_>,
    methods: &[MethodKind],
    sets: &[Vec<Modality>],
    tasks: &[Task],
    hyper: &BaselineConfig,
    config_hash: &str,
) -> Result<Vec<ResultsRecord>> {
    let sets: Vec<Vec<Modality>> = sets.iter().map(|s| canonical(s)).collect();
    if sets.iter().any(Vec::is_empty) {
        return Err(Error::InvalidConfig("empty modality set".into()));
    }
    let matrices: Vec<Vec<Vec<f64>>> = sets.iter().map(|s| data.matrix(s)).collect();
    let task_data: Vec<Vec<TaskData>> = matrices
        .iter()
        .map(|x| tasks.iter().map(|&t| data.task_data(x, t)).collect())
        .collect();
    let mut cells = Vec::new();
    for &m in methods {
        for si in 0..sets.len() {
            for ti in 0..tasks.len() {
                cells.push((m, si, ti));
            }
        }
    }
    cells
        .par_iter()
        .map(|&(m, si, ti)| {
            let td = &task_data[si][ti];
            let met = run_cell(td, m, tasks[ti], hyper)?;
            Ok(ResultsRecord {
                method: m.to_string(),
                modalities: modality_set_name(&sets[si]),
                task: tasks[ti],
                accuracy: met.accuracy,
                precision: met.precision,
                recall: met.recall,
                f1: met.f1,
                n_train: td.y_train.len(),
                n_test: td.y_test.len(),
                config_hash: config_hash.to_string(),
            })
        })
        .collect()
}

/// Default single-modality sets: flow, packet and warning streams.
pub fn default_single_sets() -> Vec<Vec<Modality>> {
    vec![
        vec![Modality::Flow],
        vec![Modality::Packet],
        vec![Modality::Warning],
    ]
}

/// Pairwise and triple fusions of the three default streams.
pub fn default_fusion_sets() -> Vec<Vec<Modality>> {
    use Modality::*;
    vec![
        vec![Flow, Packet],
        vec![Flow, Warning],
        vec![Packet, Warning],
        vec![Flow, Packet, Warning],
    ]
}

type Grid = BTreeMap<(String, String), BTreeMap<Task, f64>>;

fn modality_order(set: &str) -> (usize, Vec<usize>) {
    let idx: Vec<usize> = set
        .split('+')
        .map(|m| {
            m.parse::<Modality>().map_or(usize::MAX, |m| {
                Modality::ALL.iter().position(|&x| x == m).unwrap()
            })
        })
        .collect();
    (idx.len(), idx)
}

fn triplet(cells: Option<&BTreeMap<Task, f64>>, fmt: impl Fn(f64) -> String) -> String {
    Task::ALL
        .iter()
        .map(|t| {
            cells
                .and_then(|c| c.get(t))
                .map_or_else(|| "–".to_string(), |&v| fmt(v))
        })
        .collect::<Vec<_>>()
        .join(" / ")
}

/// Markdown report: a (D/C/L) F1 table over single modalities and a fusion
/// table of F1 deltas against each method's best constituent modality.
pub fn render_report(records: &[ResultsRecord], notes: &[String]) -> String {
    let mut methods: Vec<String> = Vec::new();
    let mut grid: Grid = BTreeMap::new();
    for r in records {
        if !methods.contains(&r.method) {
            methods.push(r.method.clone());
        }
        grid.entry((r.method.clone(), r.modalities.clone()))
            .or_default()
            .insert(r.task, r.f1);
    }
    let mut sets: Vec<String> = grid
        .keys()
        .map(|(_, s)| s.clone())
        .collect::<BTreeSet<_>>()
        .into_iter()
        .collect();
    sets.sort_by_key(|s| modality_order(s));
    let (singles, fusions): (Vec<String>, Vec<String>) =
        sets.into_iter().partition(|s| !s.contains('+'));

    let mut out = String::from("# Diagnosis benchmark\n\n");
    out.push_str("Entries are F1 scores as (D/C/L): detection, classification, localization.\n");
    out.push_str("Detection scores the fault class; classification and localization macro-average precision and recall over the classes present in the test split, with F1 their harmonic mean.\n");
    out.push_str("Localization is trained and tested on fault-present samples only.\n");
    for n in notes {
        out.push_str(n);
        out.push('\n');
    }
    if !singles.is_empty() {
        out.push_str("\n| Method |");
        for s in &singles {
            let _ = write!(out, " {s} (D/C/L) |");
        }
        out.push_str("\n|---|");
        out.push_str(&"---|".repeat(singles.len()));
        out.push('\n');
        for m in &methods {
            let _ = write!(out, "| {m} |");
            for s in &singles {
                let _ = write!(
                    out,
                    " {} |",
                    triplet(grid.get(&(m.clone(), s.clone())), |v| format!("{v:.2}"))
                );
            }
            out.push('\n');
        }
    }
    if !fusions.is_empty() {
        out.push_str("\nFusion rows show the F1 change against the best single constituent modality of the same method and task.\n");
        out.push_str("\n| Method |");
        for s in &fusions {
            let _ = write!(out, " {s} |");
        }
        out.push_str("\n|---|");
        out.push_str(&"---|".repeat(fusions.len()));
        out.push('\n');
        let fused = |m: &String| {
            fusions
                .iter()
                .any(|s| grid.contains_key(&(m.clone(), s.clone())))
        };
        for m in methods.iter().filter(|m| fused(m)) {
            let _ = write!(out, "| {m} |");
            for s in &fusions {
                let cells = grid.get(&(m.clone(), s.clone()));
                let best_single = |t: Task| {
                    s.split('+')
                        .filter_map(|p| {
                            grid.get(&(m.clone(), p.to_string()))
                                .and_then(|c| c.get(&t))
                        })
                        .copied()
                        .fold(None, |a: Option<f64>, v| Some(a.map_or(v, |a| a.max(v))))
                };
                let text = Task::ALL
                    .iter()
                    .map(|&t| match (cells.and_then(|c| c.get(&t)), best_single(t)) {
                        (Some(v), Some(b)) => format!("{:+.2}", v - b),
                        (Some(v), None) => format!("{v:.2}"),
                        _ => "–".to_string(),
                    })
                    .collect::<Vec<_>>()
                    .join(" / ");
                let _ = write!(out, " {text} |");
            }
            out.push('\n');
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::NodeId;

    #[test]
    fn labels_per_task() {
        let normal = Labels::normal();
        assert_eq!(label_for(&normal, Task::Detection), Some(0));
        assert_eq!(label_for(&normal, Task::Localization), None);
        let bloat = Labels {
            fault_present: true,
            fault_type: FaultType::BufferBloat,
            fault_node: Some(NodeId(3)),
        };
        assert_eq!(label_for(&bloat, Task::Localization), Some(3));
        assert_eq!(
            label_for(&bloat, Task::Classification),
            Some(FaultType::BufferBloat.class_index())
        );
    }

    #[test]
    fn all_negative_detector() {
        let truth = [0, 1, 0, 1, 0, 1];
        let m = evaluate(&[0; 6], &truth, Task::Detection).unwrap();
        assert_eq!(m.recall, 0.0);
        assert_eq!(m.accuracy, 0.5);
        assert_eq!(m.f1, 0.0);
    }

    #[test]
    fn perfect_predictions() {
        let truth = [0, 3, 2, 2, 1];
        for task in [Task::Classification, Task::Localization] {
            let m = evaluate(&truth, &truth, task).unwrap();
            assert_eq!(
                (m.accuracy, m.precision, m.recall, m.f1),
                (1.0, 1.0, 1.0, 1.0)
            );
        }
    }

    #[test]
    fn task_names_parse() {
        assert_eq!("D".parse::<Task>().unwrap(), Task::Detection);
        assert_eq!("localization".parse::<Task>().unwrap(), Task::Localization);
        assert!("x".parse::<Task>().is_err());
    }
}
