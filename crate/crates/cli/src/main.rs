//! `wifault`: stage-gated pipeline from corpus generation to the report.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};

use wifault::config::{check_hash, RunConfig};
use wifault::dataset::{
    assign_split, generate_corpus, load_samples, split_corpus, CorpusManifest, Labels, Sample,
    Split, SplitPart, MANIFEST_FILE, SPLIT_FILE,
};
use wifault::diagnosis::{
    render_report, run_benchmark, BenchData, MethodKind, ResultsRecord, Task,
};
use wifault::jsonio::{ensure_dir, read_json, read_jsonl, require, write_json, write_jsonl};
use wifault::llmclient::{
    build_prompts, distill, distill_subset, extraction, query, responder_for, AuditLog, DistillRow,
    Extraction, PromptBundle,
};
use wifault::preprocess::{
    aggregate_features, discretize, extract_all, fit_normalizer, parse_modality_set,
    sequence_node_columns, to_sequence, write_feature_csv, write_sequences_jsonl, NormStats,
    SampleFeatures, SequenceMeta,
};
use wifault::reasoning::{evaluate_set, render_reasoning, ReasoningLine, ScoredSample};
use wifault::telemetry::Modality;

#[derive(Parser)]
#[command(
    name = "wifault",
    version,
    about = "Wi-Fi fault simulation and diagnosis benchmark"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct Common {
    /// JSON run config; defaults apply when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Run directory holding every stage's outputs.
    #[arg(long, default_value = "run")]
    out: PathBuf,
    /// Override the corpus base seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Continue even if an input was produced under a different config.
    #[arg(long)]
    force: bool,
    /// Comma-separated modality sets, each joined by '+', e.g. flow,flow+warning.
    #[arg(long)]
    modalities: Option<String>,
    /// Comma-separated methods (LogReg, KNN, DecisionTree, MLP).
    #[arg(long)]
    methods: Option<String>,
    /// Comma-separated tasks (detection, classification, localization).
    #[arg(long)]
    tasks: Option<String>,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate the corpus.
    Generate(Common),
    /// Write the stratified train/test split.
    Split(Common),
    /// Fit normalization and export feature matrices and sequences.
    Preprocess(Common),
    /// Run the baseline grid.
    Bench(Common),
    /// Query the language-model endpoint for operational features.
    LlmExtract(Common),
    /// Score extracted features against ground truth and distill.
    ReasonEval(Common),
    /// Merge every results file into report.md.
    Report(Common),
}

struct Layout {
    root: PathBuf,
}

impl Layout {
    fn corpus(&self) -> PathBuf {
        self.root.join("corpus")
    }
    fn manifest(&self) -> PathBuf {
        self.corpus().join(MANIFEST_FILE)
    }
    fn split(&self) -> PathBuf {
        self.corpus().join(SPLIT_FILE)
    }
    fn features(&self) -> PathBuf {
        self.root.join("features")
    }
    fn norm(&self) -> PathBuf {
        self.features().join("norm.json")
    }
    fn results(&self) -> PathBuf {
        self.root.join("results")
    }
    fn bench_results(&self) -> PathBuf {
        self.results().join("results.jsonl")
    }
    fn llm(&self) -> PathBuf {
        self.root.join("llm")
    }
    fn extractions(&self) -> PathBuf {
        self.llm().join("extractions.jsonl")
    }
    fn reasoning(&self) -> PathBuf {
        self.root.join("reasoning")
    }
    fn reasoning_eval(&self) -> PathBuf {
        self.reasoning().join("reasoning_eval.jsonl")
    }
    fn operational(&self) -> PathBuf {
        self.reasoning().join("operational.jsonl")
    }
}

struct Ctx {
    cfg: RunConfig,
    hash: String,
    force: bool,
    paths: Layout,
    common: Common,
}

impl Ctx {
    fn new(common: &Common) -> Result<Self> {
        let mut cfg = match &common.config {
            Some(p) => {
                RunConfig::load(p).with_context(|| format!("loading config {}", p.display()))?
            }
            None => RunConfig::default(),
        };
        if let Some(seed) = common.seed {
            cfg.corpus.base_seed = seed;
        }
        cfg.validate()?;
        Ok(Self {
            hash: cfg.hash(),
            cfg,
            force: common.force,
            paths: Layout {
                root: common.out.clone(),
            },
            common: common.clone(),
        })
    }

    fn check(&self, path: &Path, found: &str) -> Result<()> {
        if found != self.hash && self.force {
            eprintln!(
                "warning: {} was produced under config {found}; continuing (--force)",
                path.display()
            );
        }
        Ok(check_hash(path, &self.hash, found, self.force)?)
    }

    fn manifest(&self) -> Result<CorpusManifest> {
        let p = self.paths.manifest();
        require(&p, "generate")?;
        let m: CorpusManifest = read_json(&p)?;
        self.check(&p, &m.config_hash)?;
        Ok(m)
    }

    fn split(&self) -> Result<Split> {
        let p = self.paths.split();
        require(&p, "split")?;
        let s: Split = read_json(&p)?;
        self.check(&p, &s.config_hash)?;
        Ok(s)
    }

    fn norm(&self) -> Result<NormStats> {
        let p = self.paths.norm();
        require(&p, "preprocess")?;
        let n: NormStats = read_json(&p)?;
        self.check(&p, &n.config_hash)?;
        Ok(n)
    }

    fn modality_sets(&self, default: Vec<Vec<Modality>>) -> Result<Vec<Vec<Modality>>> {
        match &self.common.modalities {
            Some(s) => s
                .split(',')
                .map(|x| parse_modality_set(x.trim()).map_err(Into::into))
                .collect(),
            None => Ok(default),
        }
    }
}

/// Samples in manifest order with their split parts.
struct Loaded {
    samples: Vec<Sample>,
    parts: Vec<SplitPart>,
}

fn load(ctx: &Ctx) -> Result<Loaded> {
    let manifest = ctx.manifest()?;
    let split = ctx.split()?;
    let samples = load_samples(&ctx.paths.corpus(), &manifest)?;
    let part_of = split.part_of();
    let parts = samples
        .iter()
        .map(|s| {
            part_of
                .get(s.id.as_str())
                .copied()
                .with_context(|| format!("sample {} is not in {}", s.id, SPLIT_FILE))
        })
        .collect::<Result<_>>()?;
    Ok(Loaded { samples, parts })
}

fn generate(ctx: &Ctx) -> Result<()> {
    let p = ctx.paths.manifest();
    if p.exists() {
        let old: CorpusManifest = read_json(&p)?;
        ctx.check(&p, &old.config_hash)?;
    }
    ensure_dir(&ctx.paths.root)?;
    write_json(&ctx.paths.root.join("config.json"), &ctx.cfg)?;
    let (m, _) = generate_corpus(&ctx.cfg.corpus, &ctx.paths.corpus(), &ctx.hash)?;
    println!(
        "generated {} samples ({} normal, {} incomplete) in {}",
        m.total,
        m.normal_count,
        m.incomplete_count,
        ctx.paths.corpus().display()
    );
    Ok(())
}

fn split(ctx: &Ctx) -> Result<()> {
    let mut manifest = ctx.manifest()?;
    let c = &ctx.cfg.corpus;
    let split = split_corpus(&manifest, c.train_ratio, c.base_seed)?;
    assign_split(&mut manifest, &split);
    write_json(&ctx.paths.manifest(), &manifest)?;
    write_json(&ctx.paths.split(), &split)?;
    println!(
        "split {} train / {} test",
        split.train.len(),
        split.test.len()
    );
    Ok(())
}

fn features_and_norm(ctx: &Ctx, data: &Loaded) -> Result<(Vec<SampleFeatures>, NormStats)> {
    let feats = extract_all(&data.samples);
    let norm = match ctx.paths.norm().exists() {
        true => ctx.norm()?,
        false => bail!(
            "missing input {}: run `preprocess` first",
            ctx.paths.norm().display()
        ),
    };
    Ok((feats, norm))
}

fn preprocess(ctx: &Ctx) -> Result<()> {
    let data = load(ctx)?;
    let feats = extract_all(&data.samples);
    let (train, normal): (Vec<&SampleFeatures>, Vec<bool>) = feats
        .iter()
        .zip(&data.samples)
        .zip(&data.parts)
        .filter(|(_, p)| **p == SplitPart::Train)
        .map(|((f, s), _)| (f, !s.labels.fault_present))
        .unzip();
    let norm = fit_normalizer(&train, &normal, &ctx.hash)?;
    let dir = ctx.paths.features();
    ensure_dir(&dir)?;
    write_json(&ctx.paths.norm(), &norm)?;

    let all = Modality::ALL.to_vec();
    let views: Vec<_> = feats
        .iter()
        .map(|f| aggregate_features(f, &norm, &all))
        .collect();
    write_feature_csv(&dir.join("features.csv"), &views)?;
    let seqs: Vec<_> = feats
        .iter()
        .map(|f| to_sequence(f, norm.seq_len, &norm, &all))
        .collect();
    write_sequences_jsonl(&dir.join("sequences.jsonl"), &seqs)?;
    write_json(
        &dir.join("sequence_meta.json"),
        &SequenceMeta {
            config_hash: ctx.hash.clone(),
            seq_len: norm.seq_len,
            n_nodes: norm.n_nodes,
            modalities: all,
            node_columns: sequence_node_columns(&Modality::ALL),
        },
    )?;
    let labels: Vec<serde_json::Value> = data
        .samples
        .iter()
        .map(|s| {
            serde_json::json!({
                "id": s.id,
                "fault_present": s.labels.fault_present,
                "fault_type": s.labels.fault_type,
                "fault_node": s.labels.fault_node.map(|n| n.index()),
                "class": s.labels.fault_type.class_index(),
            })
        })
        .collect();
    write_jsonl(&dir.join("labels.jsonl"), &labels)?;
    println!(
        "preprocessed {} samples: {} features per sample, sequence length {}",
        feats.len(),
        views.first().map_or(0, |v| v.values.len()),
        norm.seq_len
    );
    Ok(())
}

fn parse_list<T>(s: &Option<String>, default: &[T]) -> Result<Vec<T>>
where
    T: std::str::FromStr<Err = wifault::Error> + Clone,
{
    match s {
        Some(s) => s
            .split(',')
            .map(|x| x.trim().parse::<T>().map_err(Into::into))
            .collect(),
        None => Ok(default.to_vec()),
    }
}

fn bench(ctx: &Ctx) -> Result<()> {
    let data = load(ctx)?;
    let (feats, norm) = features_and_norm(ctx, &data)?;
    let b = &ctx.cfg.bench;
    let methods: Vec<MethodKind> = parse_list(&ctx.common.methods, &b.methods)?;
    let tasks: Vec<Task> = parse_list(&ctx.common.tasks, &b.tasks)?;
    let default_sets: Vec<Vec<Modality>> = b
        .single_sets
        .iter()
        .chain(&b.fusion_sets)
        .cloned()
        .collect();
    let sets = ctx.modality_sets(default_sets)?;
    let labels: Vec<Labels> = data.samples.iter().map(|s| s.labels.clone()).collect();
    let bd = BenchData {
        features: &feats,
        labels: &labels,
        parts: &data.parts,
        norm: &norm,
    };
    let records = run_benchmark(&bd, &methods, &sets, &tasks, &b.hyper, &ctx.hash)?;
    ensure_dir(&ctx.paths.results())?;
    write_jsonl(&ctx.paths.bench_results(), &records)?;
    println!(
        "wrote {} results to {}",
        records.len(),
        ctx.paths.bench_results().display()
    );
    Ok(())
}

fn llm_extract(ctx: &Ctx) -> Result<()> {
    let data = load(ctx)?;
    let (feats, norm) = features_and_norm(ctx, &data)?;
    let llm = &ctx.cfg.llm;
    let items: Vec<_> = data
        .samples
        .iter()
        .zip(&data.parts)
        .map(|(s, p)| (s.id.clone(), s.labels.fault_type, *p))
        .collect();
    let subset: std::collections::BTreeSet<String> =
        distill_subset(&items, llm.subset_fraction, ctx.cfg.corpus.base_seed)?
            .into_iter()
            .collect();
    let chosen: Vec<usize> = (0..data.samples.len())
        .filter(|&i| subset.contains(&data.samples[i].id))
        .collect();
    let sets = ctx.modality_sets(llm.modality_sets.clone())?;

    ensure_dir(&ctx.paths.llm())?;
    let audit_path = ctx.paths.llm().join("audit.jsonl");
    if audit_path.exists() {
        fs::remove_file(&audit_path)
            .with_context(|| format!("resetting {}", audit_path.display()))?;
    }
    let audit = AuditLog::to_file(&audit_path)?;
    let responder = responder_for(&llm.endpoint)?;
    let mut bundles_out: Vec<PromptBundle> = Vec::new();
    let mut extractions: Vec<Extraction> = Vec::new();
    for set in &sets {
        let bundles: Vec<PromptBundle> = chosen
            .iter()
            .map(|&i| build_prompts(&discretize(&feats[i], &norm, set), set, &ctx.cfg.features))
            .collect();
        let responses = query(
            responder.as_ref(),
            &bundles,
            &ctx.cfg.features,
            llm.max_retries,
            &audit,
        );
        for (b, r) in bundles.iter().zip(&responses) {
            extractions.push(extraction(b, r, &ctx.hash));
        }
        bundles_out.extend(bundles);
    }
    write_jsonl(&ctx.paths.llm().join("prompts.jsonl"), &bundles_out)?;
    write_jsonl(&ctx.paths.extractions(), &extractions)?;
    let failed = extractions
        .iter()
        .flat_map(|e| &e.node_status)
        .filter(|s| **s == wifault::llmclient::ParseStatus::Failed)
        .count();
    println!(
        "extracted features for {} samples x {} modality sets ({} node answers failed)",
        chosen.len(),
        sets.len(),
        failed
    );
    Ok(())
}

fn reason_eval(ctx: &Ctx) -> Result<()> {
    let p = ctx.paths.extractions();
    require(&p, "llm-extract")?;
    let extractions: Vec<Extraction> = read_jsonl(&p)?;
    if let Some(e) = extractions.first() {
        ctx.check(&p, &e.config_hash)?;
    }
    let data = load(ctx)?;
    let space = &ctx.cfg.features;
    let index: BTreeMap<&str, usize> = data
        .samples
        .iter()
        .enumerate()
        .map(|(i, s)| (s.id.as_str(), i))
        .collect();
    let truth: Vec<Vec<bool>> = data
        .samples
        .iter()
        .map(|s| {
            space.build_ground_truth(
                s.bundle.warning.as_deref().unwrap_or(&[]),
                s.labels.fault_type,
            )
        })
        .collect();

    let mut by_set: BTreeMap<&str, Vec<&Extraction>> = BTreeMap::new();
    for e in &extractions {
        by_set.entry(e.modalities.as_str()).or_default().push(e);
    }
    let mut lines: Vec<ReasoningLine> = Vec::new();
    let mut distilled: Vec<ResultsRecord> = Vec::new();
    let method = format!("LLM-distill-{}", ctx.cfg.llm.distill_method);
    for (set, exs) in &by_set {
        let mut scored = Vec::with_capacity(exs.len());
        let mut rows = Vec::with_capacity(exs.len());
        for e in exs {
            let i = *index
                .get(e.sample.as_str())
                .with_context(|| format!("extraction for unknown sample {}", e.sample))?;
            scored.push(ScoredSample {
                id: &e.sample,
                part: data.parts[i],
                scores: &e.scores,
                truth: &truth[i],
            });
            rows.push(DistillRow {
                scores: &e.scores,
                fault: data.samples[i].labels.fault_type,
                part: data.parts[i],
            });
        }
        lines.extend(evaluate_set(set, &scored, &ctx.hash)?);
        let m = distill(&rows, ctx.cfg.llm.distill_method, &ctx.cfg.bench.hyper)
            .with_context(|| format!("distilling on {set}"))?;
        distilled.push(ResultsRecord {
            method: method.clone(),
            modalities: set.to_string(),
            task: Task::Classification,
            accuracy: m.accuracy,
            precision: m.precision,
            recall: m.recall,
            f1: m.f1,
            n_train: rows.iter().filter(|r| r.part == SplitPart::Train).count(),
            n_test: rows.iter().filter(|r| r.part == SplitPart::Test).count(),
            config_hash: ctx.hash.clone(),
        });
    }

    // Upper-bound reference: the same classifier on ground-truth features of
    // the whole corpus.
    let gt: Vec<Vec<f64>> = truth
        .iter()
        .map(|t| t.iter().map(|&b| f64::from(u8::from(b))).collect())
        .collect();
    let rows: Vec<DistillRow> = gt
        .iter()
        .zip(&data.samples)
        .zip(&data.parts)
        .map(|((x, s), p)| DistillRow {
            scores: x,
            fault: s.labels.fault_type,
            part: *p,
        })
        .collect();
    let kind = MethodKind::DecisionTree;
    let m = distill(&rows, kind, &ctx.cfg.bench.hyper)?;
    let operational = ResultsRecord {
        method: format!("GroundTruth-{kind}"),
        modalities: "operational".into(),
        task: Task::Classification,
        accuracy: m.accuracy,
        precision: m.precision,
        recall: m.recall,
        f1: m.f1,
        n_train: rows.iter().filter(|r| r.part == SplitPart::Train).count(),
        n_test: rows.iter().filter(|r| r.part == SplitPart::Test).count(),
        config_hash: ctx.hash.clone(),
    };

    ensure_dir(&ctx.paths.reasoning())?;
    ensure_dir(&ctx.paths.results())?;
    write_json(&ctx.paths.reasoning().join("features.json"), space)?;
    write_jsonl(&ctx.paths.reasoning_eval(), &lines)?;
    write_jsonl(&ctx.paths.operational(), [&operational])?;
    write_jsonl(&ctx.paths.results().join("distill.jsonl"), &distilled)?;
    for l in &lines {
        if let ReasoningLine::Summary(s) = l {
            println!(
                "{} {:?}: EP {:.3} ER {:.3} EF1 {:.3}",
                s.modalities, s.part, s.ep, s.er, s.ef1
            );
        }
    }
    println!(
        "ground-truth feature classification F1 {:.3}",
        operational.f1
    );
    Ok(())
}

/// Every `*.jsonl` file in the results directory, in name order.
fn results_files(dir: &Path) -> Result<Vec<PathBuf>> {
    let mut files: Vec<PathBuf> = fs::read_dir(dir)
        .with_context(|| format!("reading {}", dir.display()))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "jsonl"))
        .collect();
    files.sort();
    Ok(files)
}

fn report(ctx: &Ctx) -> Result<()> {
    let primary = ctx.paths.bench_results();
    require(&primary, "bench")?;
    let mut records: Vec<ResultsRecord> = Vec::new();
    let mut seen: BTreeMap<(String, String, Task), PathBuf> = BTreeMap::new();
    let mut notes = Vec::new();
    let mut files = vec![primary.clone()];
    files.extend(
        results_files(&ctx.paths.results())?
            .into_iter()
            .filter(|p| *p != primary),
    );
    for f in &files {
        let rs: Vec<ResultsRecord> = read_jsonl(f)?;
        for r in rs {
            r.validate()
                .with_context(|| format!("invalid record in {}", f.display()))?;
            if !r.config_hash.is_empty() {
                ctx.check(f, &r.config_hash)?;
            }
            let key = (r.method.clone(), r.modalities.clone(), r.task);
            if let Some(first) = seen.get(&key) {
                notes.push(format!(
                    "Duplicate {} {} {} in {} ignored (kept {}).",
                    key.0,
                    key.1,
                    key.2,
                    f.display(),
                    first.display()
                ));
                continue;
            }
            seen.insert(key, f.clone());
            records.push(r);
        }
    }
    let mut text = render_report(&records, &notes);
    if ctx.paths.reasoning_eval().exists() {
        let lines: Vec<ReasoningLine> = read_jsonl(&ctx.paths.reasoning_eval())?;
        let summaries: Vec<_> = lines
            .into_iter()
            .filter_map(|l| match l {
                ReasoningLine::Summary(s) => Some(s),
                ReasoningLine::Sample(_) => None,
            })
            .collect();
        text.push_str(&render_reasoning(&summaries));
        text.push_str(
            "\nThe distillation subset is a stratified sample spanning both splits; distilled classifiers train on its training part and are scored on its test part.\n",
        );
    }
    if ctx.paths.operational().exists() {
        let ops: Vec<ResultsRecord> = read_jsonl(&ctx.paths.operational())?;
        for r in ops {
            text.push_str(&format!(
                "\nClassification from ground-truth operational features ({}): F1 {:.2}.\n",
                r.method, r.f1
            ));
        }
    }
    let out = ctx.paths.root.join("report.md");
    fs::write(&out, &text).with_context(|| format!("writing {}", out.display()))?;
    println!(
        "merged {} records from {} files into {}",
        records.len(),
        files.len(),
        out.display()
    );
    Ok(())
}

fn main() -> Result<()> {
    let cli = Cli::parse();
    let (common, stage): (&Common, fn(&Ctx) -> Result<()>) = match &cli.command {
        Command::Generate(c) => (c, generate),
        Command::Split(c) => (c, split),
        Command::Preprocess(c) => (c, preprocess),
        Command::Bench(c) => (c, bench),
        Command::LlmExtract(c) => (c, llm_extract),
        Command::ReasonEval(c) => (c, reason_eval),
        Command::Report(c) => (c, report),
    };
    let ctx = Ctx::new(common)?;
    stage(&ctx)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cli_parses() {
        use clap::CommandFactory;
        Cli::command().debug_assert();
    }
}
