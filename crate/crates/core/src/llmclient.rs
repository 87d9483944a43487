//! Language-model feature extraction.
//!
//! Each node of a sample gets its own prompt listing discretized deviation
//! levels and warning counts; the answer is a JSON object of operational
//! feature scores. Answers come either from an OpenAI-style chat endpoint or
//! from a deterministic offline responder, and per-node scores are merged
//! into one sample-level vector. A small distillation track trains a
//! conventional classifier on the resulting vectors.

use std::collections::BTreeMap;
use std::fs::{File, OpenOptions};
use std::io::Write;
use std::path::Path;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;
use std::time::{Duration, Instant, SystemTime, UNIX_EPOCH};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use serde_json::Value;
use sha2::{Digest, Sha256};

use crate::dataset::{stratified_split, SplitPart};
use crate::diagnosis::{
    evaluate, train_baseline, BaselineConfig, MethodKind, Metrics, Task, TrainSet,
};
use crate::domain::FaultType;
use crate::error::{Error, Result};
use crate::preprocess::{canonical, modality_set_name, DeviationView};
use crate::reasoning::FeatureSpace;
use crate::telemetry::{Modality, WarningKind};

/// Bumped whenever the prompt wording changes.
pub const PROMPT_VERSION: &str = "wifi-diag-v1";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NodePrompt {
    pub node: usize,
    pub text: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PromptBundle {
    pub sample: String,
    pub modalities: String,
    pub prompts: Vec<NodePrompt>,
    /// Feature names the answer must contain, in order.
    pub schema: Vec<String>,
}

fn level_words(level: i8) -> &'static str {
    match level {
        i8::MIN..=-3 => "far below normal",
        -2 => "well below normal",
        -1 => "slightly below normal",
        0 => "normal",
        1 => "slightly above normal",
        2 => "well above normal",
        _ => "far above normal",
    }
}

/// One prompt per node. Numeric modalities are rendered as signed levels;
/// the warning stream is rendered as per-kind event counts.
pub fn build_prompts(
    view: &DeviationView,
    mods: &[Modality],
    space: &FeatureSpace,
) -> PromptBundle {
    let mods = canonical(mods);
    let n = view.nodes.len();
    let keys = space.names.join(", ");
    let prompts = (0..n)
        .map(|v| {
            let mut t = format!(
                "Wi-Fi fault analysis for sample {}, node {v} of {n}.\n\
                 Telemetry of this node as deviation levels relative to normal operation \
                 (scale -3 to +3):\n",
                view.id
            );
            for &m in mods.iter().filter(|&&m| m != Modality::Warning) {
                let prefix = format!("{m}.");
                let mut any = false;
                for (k, &l) in view.nodes[v].iter().filter(|(k, _)| k.starts_with(&prefix)) {
                    t.push_str(&format!("- {k}: {l:+} ({})\n", level_words(l)));
                    any = true;
                }
                if !any {
                    t.push_str(&format!("- {m} telemetry: unavailable\n"));
                }
            }
            if mods.contains(&Modality::Warning) {
                match &view.warnings {
                    None => t.push_str("Warnings: unavailable\n"),
                    Some(w) if w[v].is_empty() => {
                        t.push_str("Warnings raised by this node: none\n")
                    }
                    Some(w) => {
                        t.push_str("Warnings raised by this node:\n");
                        for (k, c) in &w[v] {
                            t.push_str(&format!("- {} x {c}\n", k.as_str()));
                        }
                    }
                }
            }
            t.push_str(&format!(
                "Rate how strongly each operational feature is present at this node, \
                 from 0 (absent) to 1 (certain).\n\
                 Answer with one JSON object whose keys are exactly: {keys}.\n"
            ));
            NodePrompt { node: v, text: t }
        })
        .collect();
    PromptBundle {
        sample: view.id.clone(),
        modalities: modality_set_name(&mods),
        prompts,
        schema: space.names.clone(),
    }
}

pub fn prompt_hash(prompt: &str) -> String {
    hex::encode(Sha256::digest(prompt.as_bytes()))
}

/// Well-formed answer text for a score vector.
pub fn render(scores: &[f64], names: &[String]) -> String {
    let body: Vec<String> = names
        .iter()
        .zip(scores)
        .map(|(n, x)| format!("\"{n}\": {x}"))
        .collect();
    format!("{{{}}}", body.join(", "))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ParseStatus {
    Ok,
    Repaired,
    Failed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LlmResponse {
    pub raw: String,
    pub parsed: Option<Vec<f64>>,
    pub status: ParseStatus,
}

impl LlmResponse {
    fn failed(raw: String) -> Self {
        Self {
            raw,
            parsed: None,
            status: ParseStatus::Failed,
        }
    }
}

fn normalize_key(k: &str) -> String {
    k.trim()
        .to_ascii_lowercase()
        .chars()
        .map(|c| if c == ' ' || c == '-' { '_' } else { c })
        .collect()
}

fn first_object(raw: &str) -> Option<serde_json::Map<String, Value>> {
    for (i, _) in raw.match_indices('{') {
        let mut it = serde_json::Deserializer::from_str(&raw[i..]).into_iter::<Value>();
        if let Some(Ok(Value::Object(m))) = it.next() {
            return Some(m);
        }
    }
    None
}

fn line_pairs(raw: &str) -> BTreeMap<String, Value> {
    let mut out = BTreeMap::new();
    for line in raw.lines() {
        let line = line.trim().trim_start_matches(['-', '*']).trim();
        let Some((k, v)) = line.split_once(':').or_else(|| line.split_once('=')) else {
            continue;
        };
        let v = v.trim().trim_end_matches(',');
        if let Ok(x) = v.parse::<f64>() {
            out.insert(k.trim().trim_matches('"').to_string(), Value::from(x));
        }
    }
    out
}

/// Extract the named scores. Exact answers parse as `Ok`; clamped values,
/// renamed or missing keys, and non-JSON `name: value` lines give
/// `Repaired`; text with none of the names is `Failed`.
pub fn parse_features(raw: &str, space: &FeatureSpace) -> LlmResponse {
    let (pairs, mut repaired): (BTreeMap<String, Value>, bool) = match first_object(raw) {
        Some(m) => (m.into_iter().collect(), false),
        None => (line_pairs(raw), true),
    };
    let by_norm: BTreeMap<String, &Value> =
        pairs.iter().map(|(k, v)| (normalize_key(k), v)).collect();
    let mut scores = Vec::with_capacity(space.d());
    let mut found = 0;
    for name in &space.names {
        let value = match pairs.get(name) {
            Some(v) => Some(v),
            None => {
                let v = by_norm.get(name.as_str()).copied();
                repaired |= v.is_some();
                v
            }
        };
        let x = match value {
            Some(Value::Number(x)) => x.as_f64(),
            Some(Value::String(s)) => {
                repaired = true;
                s.trim().parse::<f64>().ok()
            }
            _ => None,
        };
        match x {
            Some(x) if x.is_finite() => {
                found += 1;
                let c = x.clamp(0.0, 1.0);
                repaired |= c != x;
                scores.push(c);
            }
            _ => {
                repaired = true;
                scores.push(0.0);
            }
        }
    }
    if found == 0 {
        return LlmResponse::failed(raw.to_string());
    }
    repaired |= pairs.len() != space.d();
    LlmResponse {
        raw: raw.to_string(),
        parsed: Some(scores),
        status: if repaired {
            ParseStatus::Repaired
        } else {
            ParseStatus::Ok
        },
    }
}

/// Sample-level scores (elementwise max over nodes) and the node with the
/// highest single score, ties to the lowest index. Nodes without a parsed
/// answer contribute zeros.
pub fn aggregate_nodes(per_node: &[Option<Vec<f64>>], d: usize) -> (Vec<f64>, usize) {
    let mut agg = vec![0.0; d];
    let mut best = (f64::NEG_INFINITY, 0usize);
    for (v, scores) in per_node.iter().enumerate() {
        let peak = match scores {
            Some(s) => {
                for (a, &x) in agg.iter_mut().zip(s) {
                    *a = f64::max(*a, x);
                }
                s.iter().copied().fold(0.0, f64::max)
            }
            None => 0.0,
        };
        if peak > best.0 {
            best = (peak, v);
        }
    }
    (agg, best.1)
}

// Offline responder -------------------------------------------------------

/// (warning kind, feature, weight): a copy of the ground-truth warning
/// table with a few plausible but spurious associations mixed in.
const MOCK_WARNING_RULES: &[(&str, &str, f64)] = &[
    ("ConnectivityDegradation", "connectivity_loss", 1.0),
    ("ConnectivityDegradation", "throughput_degradation", 0.5),
    ("PacketLoss", "elevated_packet_loss", 1.0),
    ("PacketLoss", "excessive_retransmissions", 0.3),
    ("ExcessiveDelay", "elevated_latency", 1.0),
    ("ExcessiveDelay", "queue_saturation", 0.4),
    ("ProcessDown", "application_failure", 1.0),
    ("ResourceAnomaly", "resource_exhaustion", 1.0),
    ("Reassociation", "connectivity_loss", 1.0),
    ("Reassociation", "signal_degradation", 0.3),
];

/// (telemetry feature, direction, feature, weight) for numeric levels.
const MOCK_LEVEL_RULES: &[(&str, i8, &str, f64)] = &[
    ("flow.tx_throughput_bps", -1, "throughput_degradation", 1.0),
    ("flow.rx_throughput_bps", -1, "throughput_degradation", 1.0),
    ("flow.latency_ms", 1, "elevated_latency", 1.0),
    ("flow.jitter_ms", 1, "elevated_jitter", 1.0),
    ("flow.loss", 1, "elevated_packet_loss", 1.0),
    ("flow.coverage", -1, "connectivity_loss", 1.0),
    ("packet.iat_ms", 1, "throughput_degradation", 0.5),
    ("packet.fwd_rate_pps", -1, "throughput_degradation", 1.0),
    ("packet.bwd_rate_pps", -1, "throughput_degradation", 0.5),
    ("packet.retx_fraction", 1, "excessive_retransmissions", 1.0),
    ("monitor.cpu_pct", 1, "resource_exhaustion", 1.0),
    ("monitor.mem_pct", 1, "resource_exhaustion", 0.5),
    ("monitor.mem_pct", 1, "queue_saturation", 0.5),
    ("monitor.app_process_up", -1, "application_failure", 1.0),
    ("monitor.tx_bytes", -1, "throughput_degradation", 0.5),
    ("monitor.rx_bytes", -1, "throughput_degradation", 0.5),
    ("monitor.rssi_dbm", -1, "signal_degradation", 1.0),
    ("monitor.coverage", -1, "connectivity_loss", 1.0),
];

/// Keys the prompt asks for, read back from its answer-format line.
fn prompt_keys(prompt: &str) -> Vec<String> {
    prompt
        .lines()
        .find_map(|l| l.split_once("keys are exactly:").map(|(_, k)| k))
        .map(|k| {
            k.trim()
                .trim_end_matches('.')
                .split(',')
                .map(|s| s.trim().to_string())
                .filter(|s| !s.is_empty())
                .collect()
        })
        .unwrap_or_default()
}

/// Deterministic rule-based stand-in for a language model. It reads the
/// levels and warning counts back out of the prompt, scores features
/// through fixed rule tables, adds uniform noise in `[-noise, noise]` drawn
/// from a stream seeded by `seed` and the prompt hash, and renders a
/// well-formed answer with three decimals.
pub fn mock_llm(prompt: &str, seed: u64, noise: f64) -> String {
    let keys = prompt_keys(prompt);
    let mut score: BTreeMap<&str, f64> = BTreeMap::new();
    let mut bump = |f: &'static str, x: f64| {
        let e = score.entry(f).or_insert(0.0);
        *e = e.max(x);
    };
    for line in prompt.lines() {
        let Some(item) = line.strip_prefix("- ") else {
            continue;
        };
        if let Some((kind, count)) = item.split_once(" x ") {
            let Ok(c) = count.trim().parse::<f64>() else {
                continue;
            };
            for &(_, f, w) in MOCK_WARNING_RULES.iter().filter(|r| r.0 == kind) {
                bump(f, w * (0.7 + 0.2 * (c / 10.0).min(1.0)));
            }
        } else if let Some((name, rest)) = item.split_once(": ") {
            let Some(level) = rest
                .split_whitespace()
                .next()
                .and_then(|l| l.parse::<i8>().ok())
            else {
                continue;
            };
            for &(_, dir, f, w) in MOCK_LEVEL_RULES.iter().filter(|r| r.0 == name) {
                let m = (level * dir).max(0) as f64;
                if m > 0.0 {
                    bump(f, w * 0.25 * m);
                }
            }
        }
    }
    let digest = Sha256::digest(prompt.as_bytes());
    let h = u64::from_le_bytes(digest[..8].try_into().unwrap());
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ h);
    let values: Vec<f64> = keys
        .iter()
        .map(|k| {
            let u: f64 = if noise > 0.0 {
                rng.random_range(-noise..=noise)
            } else {
                0.0
            };
            let x = (score.get(k.as_str()).copied().unwrap_or(0.0) + u).clamp(0.0, 1.0);
            (x * 1000.0).round() / 1000.0
        })
        .collect();
    render(&values, &keys)
}

// Endpoints ----------------------------------------------------------------

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum Endpoint {
    /// Offline rule-based responder; never touches the network.
    Mock { seed: u64, noise: f64 },
    /// Chat-completion style HTTP service.
    Http {
        base_url: String,
        model: String,
        /// Environment variable holding the bearer token, if any.
        api_key_env: Option<String>,
        timeout_s: f64,
        max_in_flight: usize,
        /// Minimum spacing between request starts.
        min_interval_ms: u64,
    },
}

impl Default for Endpoint {
    fn default() -> Self {
        Endpoint::Mock {
            seed: 7,
            noise: 0.1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LlmConfig {
    pub endpoint: Endpoint,
    /// Extra attempts after a transport error or an unparseable answer.
    pub max_retries: u32,
    /// Fraction of the corpus sent to the model, stratified by fault type
    /// and split part.
    pub subset_fraction: f64,
    /// Single-modality sets prompted separately.
    pub modality_sets: Vec<Vec<Modality>>,
    pub distill_method: MethodKind,
}

impl Default for LlmConfig {
    fn default() -> Self {
        Self {
            endpoint: Endpoint::default(),
            max_retries: 2,
            subset_fraction: 0.1,
            modality_sets: vec![
                vec![Modality::Flow],
                vec![Modality::Packet],
                vec![Modality::Warning],
            ],
            distill_method: MethodKind::DecisionTree,
        }
    }
}

impl LlmConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.subset_fraction > 0.0 && self.subset_fraction <= 1.0) {
            return Err(Error::InvalidConfig(format!(
                "subset_fraction {} outside (0, 1]",
                self.subset_fraction
            )));
        }
        if self.modality_sets.is_empty() || self.modality_sets.iter().any(Vec::is_empty) {
            return Err(Error::InvalidConfig(
                "llm modality sets must be non-empty".into(),
            ));
        }
        match &self.endpoint {
            Endpoint::Mock { noise, .. } if !(0.0..=0.5).contains(noise) => Err(
                Error::InvalidConfig(format!("mock noise {noise} outside [0, 0.5]")),
            ),
            Endpoint::Http {
                base_url,
                timeout_s,
                max_in_flight,
                ..
            } => {
                if !(base_url.starts_with("http://") || base_url.starts_with("https://")) {
                    return Err(Error::InvalidConfig(format!(
                        "base_url {base_url:?} is not http(s)"
                    )));
                }
                if !(*timeout_s > 0.0) || *max_in_flight == 0 {
                    return Err(Error::InvalidConfig(
                        "timeout_s and max_in_flight must be positive".into(),
                    ));
                }
                Ok(())
            }
            _ => Ok(()),
        }
    }
}

/// Something that turns a prompt into answer text.
pub trait Responder: Sync {
    fn complete(&self, prompt: &str) -> Result<String>;
    /// Where requests go, or `None` for in-process responders.
    fn transport(&self) -> Option<&str>;
    fn max_in_flight(&self) -> usize;
    fn min_interval(&self) -> Duration {
        Duration::ZERO
    }
}

pub struct MockResponder {
    pub seed: u64,
    pub noise: f64,
}

impl Responder for MockResponder {
    fn complete(&self, prompt: &str) -> Result<String> {
        Ok(mock_llm(prompt, self.seed, self.noise))
    }

    fn transport(&self) -> Option<&str> {
        None
    }

    fn max_in_flight(&self) -> usize {
        std::thread::available_parallelism().map_or(1, |n| n.get())
    }
}

pub struct HttpResponder {
    agent: ureq::Agent,
    url: String,
    model: String,
    token: Option<String>,
    max_in_flight: usize,
    min_interval: Duration,
}

impl HttpResponder {
    pub fn new(
        base_url: &str,
        model: &str,
        token: Option<String>,
        timeout: Duration,
        max_in_flight: usize,
        min_interval: Duration,
    ) -> Self {
        let agent = ureq::Agent::config_builder()
            .timeout_global(Some(timeout))
            .http_status_as_error(false)
            .build()
            .into();
        Self {
            agent,
            url: format!("{}/chat/completions", base_url.trim_end_matches('/')),
            model: model.to_string(),
            token,
            max_in_flight: max_in_flight.max(1),
            min_interval,
        }
    }
}

/// Text of the first candidate in a chat-completion response.
pub fn completion_text(v: &Value) -> Option<String> {
    let c = v.get("choices")?.get(0)?;
    c.get("message")
        .and_then(|m| m.get("content"))
        .or_else(|| c.get("text"))
        .and_then(Value::as_str)
        .map(str::to_string)
}

impl Responder for HttpResponder {
    fn complete(&self, prompt: &str) -> Result<String> {
        let body = serde_json::json!({
            "model": self.model,
            "messages": [{ "role": "user", "content": prompt }],
            "temperature": 0,
        });
        let mut req = self.agent.post(&self.url);
        if let Some(t) = &self.token {
            req = req.header("Authorization", &format!("Bearer {t}"));
        }
        let mut resp = req
            .send_json(&body)
            .map_err(|e| Error::Transport(format!("{}: {e}", self.url)))?;
        let status = resp.status();
        if !status.is_success() {
            return Err(Error::Transport(format!(
                "{}: HTTP {}",
                self.url,
                status.as_u16()
            )));
        }
        let v: Value = resp
            .body_mut()
            .read_json()
            .map_err(|e| Error::Transport(format!("{}: bad response body: {e}", self.url)))?;
        completion_text(&v).ok_or_else(|| {
            Error::Transport(format!("{}: response has no candidate text", self.url))
        })
    }

    fn transport(&self) -> Option<&str> {
        Some(&self.url)
    }

    fn max_in_flight(&self) -> usize {
        self.max_in_flight
    }

    fn min_interval(&self) -> Duration {
        self.min_interval
    }
}

/// Build the responder an endpoint describes. Tokens are read from the
/// environment, never from config files.
pub fn responder_for(endpoint: &Endpoint) -> Result<Box<dyn Responder>> {
    Ok(match endpoint {
        Endpoint::Mock { seed, noise } => Box::new(MockResponder {
            seed: *seed,
            noise: *noise,
        }),
        Endpoint::Http {
            base_url,
            model,
            api_key_env,
            timeout_s,
            max_in_flight,
            min_interval_ms,
        } => {
            let token = match api_key_env {
                Some(var) => Some(std::env::var(var).map_err(|_| {
                    Error::InvalidConfig(format!("environment variable {var} is not set"))
                })?),
                None => None,
            };
            Box::new(HttpResponder::new(
                base_url,
                model,
                token,
                Duration::from_secs_f64(*timeout_s),
                *max_in_flight,
                Duration::from_millis(*min_interval_ms),
            ))
        }
    })
}

// Audit log ------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AuditEntry {
    pub timestamp_ms: u128,
    pub sample: String,
    pub node: usize,
    pub prompt_hash: String,
    /// `ok`, `repaired`, `failed`, or `transport_error`.
    pub status: String,
    pub attempt: u32,
    /// Request URL for networked calls; absent for in-process responders.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub transport: Option<String>,
    pub response: String,
}

/// Append-only JSONL audit trail; appends are serialized.
#[derive(Default)]
pub struct AuditLog {
    file: Option<Mutex<File>>,
    entries: Mutex<Vec<AuditEntry>>,
}

impl AuditLog {
    pub fn to_file(path: &Path) -> Result<Self> {
        let f = OpenOptions::new()
            .create(true)
            .append(true)
            .open(path)
            .map_err(|e| Error::io(path, e))?;
        Ok(Self {
            file: Some(Mutex::new(f)),
            entries: Mutex::default(),
        })
    }

    pub fn in_memory() -> Self {
        Self::default()
    }

    pub fn append(&self, e: AuditEntry) {
        if let Some(f) = &self.file {
            let line = serde_json::to_string(&e).expect("audit entry serializes");
            let mut f = f.lock().unwrap();
            // Audit failures must not abort extraction.
            let _ = writeln!(f, "{line}");
        }
        self.entries.lock().unwrap().push(e);
    }

    pub fn entries(&self) -> Vec<AuditEntry> {
        self.entries.lock().unwrap().clone()
    }
}

fn now_ms() -> u128 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map_or(0, |d| d.as_millis())
}

struct RateLimiter {
    interval: Duration,
    next: Mutex<Instant>,
}

impl RateLimiter {
    fn wait(&self) {
        if self.interval.is_zero() {
            return;
        }
        let slot = {
            let mut next = self.next.lock().unwrap();
            let slot = (*next).max(Instant::now());
            *next = slot + self.interval;
            slot
        };
        let now = Instant::now();
        if slot > now {
            std::thread::sleep(slot - now);
        }
    }
}

fn ask(
    responder: &dyn Responder,
    limiter: &RateLimiter,
    audit: &AuditLog,
    sample: &str,
    p: &NodePrompt,
    space: &FeatureSpace,
    max_retries: u32,
) -> LlmResponse {
    let hash = prompt_hash(&p.text);
    let mut last = LlmResponse::failed(String::new());
    for attempt in 0..=max_retries {
        limiter.wait();
        let (status, response) = match responder.complete(&p.text) {
            Ok(text) => {
                last = parse_features(&text, space);
                (
                    serde_json::to_value(last.status)
                        .ok()
                        .and_then(|v| v.as_str().map(str::to_string))
                        .unwrap_or_default(),
                    text,
                )
            }
            Err(e) => {
                last = LlmResponse::failed(String::new());
                ("transport_error".to_string(), e.to_string())
            }
        };
        audit.append(AuditEntry {
            timestamp_ms: now_ms(),
            sample: sample.to_string(),
            node: p.node,
            prompt_hash: hash.clone(),
            status,
            attempt,
            transport: responder.transport().map(str::to_string),
            response,
        });
        if last.status != ParseStatus::Failed {
            break;
        }
    }
    last
}

/// Send every node prompt of every bundle, at most `max_in_flight` at a
/// time and no faster than the responder's minimum interval. Results are
/// in bundle and node order regardless of completion order.
pub fn query(
    responder: &dyn Responder,
    bundles: &[PromptBundle],
    space: &FeatureSpace,
    max_retries: u32,
    audit: &AuditLog,
) -> Vec<Vec<LlmResponse>> {
    let jobs: Vec<(usize, usize)> = bundles
        .iter()
        .enumerate()
        .flat_map(|(b, bundle)| (0..bundle.prompts.len()).map(move |p| (b, p)))
        .collect();
    let limiter = RateLimiter {
        interval: responder.min_interval(),
        next: Mutex::new(Instant::now()),
    };
    let slots: Vec<Mutex<Option<LlmResponse>>> = jobs.iter().map(|_| Mutex::new(None)).collect();
    let cursor = AtomicUsize::new(0);
    let workers = responder.max_in_flight().clamp(1, jobs.len().max(1));
    std::thread::scope(|s| {
        for _ in 0..workers {
            s.spawn(|| loop {
                let j = cursor.fetch_add(1, Ordering::Relaxed);
                let Some(&(b, p)) = jobs.get(j) else { break };
                let bundle = &bundles[b];
                let r = ask(
                    responder,
                    &limiter,
                    audit,
                    &bundle.sample,
                    &bundle.prompts[p],
                    space,
                    max_retries,
                );
                *slots[j].lock().unwrap() = Some(r);
            });
        }
    });
    let mut out: Vec<Vec<LlmResponse>> = bundles
        .iter()
        .map(|b| Vec::with_capacity(b.prompts.len()))
        .collect();
    for ((b, _), slot) in jobs.iter().zip(slots) {
        out[*b].push(slot.into_inner().unwrap().expect("every job ran"));
    }
    out
}

/// Per-sample extraction result, one line of `llm_features.jsonl`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Extraction {
    pub sample: String,
    pub modalities: String,
    pub prompt_version: String,
    pub node_status: Vec<ParseStatus>,
    pub node_scores: Vec<Option<Vec<f64>>>,
    /// Elementwise max over nodes.
    pub scores: Vec<f64>,
    pub predicted_node: usize,
    pub config_hash: String,
}

pub fn extraction(
    bundle: &PromptBundle,
    responses: &[LlmResponse],
    config_hash: &str,
) -> Extraction {
    let node_scores: Vec<Option<Vec<f64>>> = responses.iter().map(|r| r.parsed.clone()).collect();
    let (scores, predicted_node) = aggregate_nodes(&node_scores, bundle.schema.len());
    Extraction {
        sample: bundle.sample.clone(),
        modalities: bundle.modalities.clone(),
        prompt_version: PROMPT_VERSION.to_string(),
        node_status: responses.iter().map(|r| r.status).collect(),
        node_scores,
        scores,
        predicted_node,
        config_hash: config_hash.to_string(),
    }
}

// Distillation ---------------------------------------------------------------

/// Stratified subset of `(id, fault type, split part)` items; strata are the
/// (fault type, part) pairs so the subset spans both splits in proportion.
pub fn distill_subset(
    items: &[(String, FaultType, SplitPart)],
    fraction: f64,
    seed: u64,
) -> Result<Vec<String>> {
    if items.is_empty() {
        return Err(Error::InvalidConfig("distillation subset is empty".into()));
    }
    if fraction >= 1.0 {
        let mut all: Vec<String> = items.iter().map(|i| i.0.clone()).collect();
        all.sort();
        return Ok(all);
    }
    let keyed: Vec<(String, (FaultType, SplitPart))> = items
        .iter()
        .map(|(id, f, p)| (id.clone(), (*f, *p)))
        .collect();
    let (subset, _) = stratified_split(&keyed, fraction, seed ^ 0x6469_7374)?;
    if subset.is_empty() {
        return Err(Error::InvalidConfig(format!(
            "subset fraction {fraction} selects no samples from {}",
            items.len()
        )));
    }
    Ok(subset)
}

/// One labelled feature vector of the distillation set.
pub struct DistillRow<'a> {
    pub scores: &'a [f64],
    pub fault: FaultType,
    pub part: SplitPart,
}

/// Train a classifier on feature vectors of the subset's training part and
/// score fault classification on its test part.
pub fn distill(rows: &[DistillRow], kind: MethodKind, hyper: &BaselineConfig) -> Result<Metrics> {
    if rows.is_empty() {
        return Err(Error::InvalidConfig("distillation subset is empty".into()));
    }
    let task = Task::Classification;
    let (mut xt, mut yt, mut xe, mut ye) = (vec![], vec![], vec![], vec![]);
    for r in rows {
        let (x, y) = match r.part {
            SplitPart::Train => (&mut xt, &mut yt),
            SplitPart::Test => (&mut xe, &mut ye),
        };
        x.push(r.scores.to_vec());
        y.push(r.fault.class_index());
    }
    if xe.is_empty() {
        return Err(Error::InvalidConfig(
            "distillation subset has no test samples".into(),
        ));
    }
    let model = train_baseline(
        kind,
        TrainSet {
            x: &xt,
            y: &yt,
            n_classes: FaultType::ALL.len(),
        },
        hyper,
        &|c| task.class_name(c),
    )?;
    evaluate(&model.predict_all(&xe), &ye, task)
}

/// Count of audit entries that went over the network.
pub fn transport_entries(entries: &[AuditEntry]) -> usize {
    entries.iter().filter(|e| e.transport.is_some()).count()
}

/// Warning kinds named in a prompt, for diagnostics.
pub fn prompt_warnings(prompt: &str) -> Vec<(WarningKind, usize)> {
    prompt
        .lines()
        .filter_map(|l| l.strip_prefix("- ")?.split_once(" x "))
        .filter_map(|(k, c)| Some((k.parse().ok()?, c.trim().parse().ok()?)))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn view(levels: &[(&str, i8)], warnings: Option<Vec<(WarningKind, usize)>>) -> DeviationView {
        DeviationView {
            id: "s00001".into(),
            nodes: vec![levels.iter().map(|(k, l)| (k.to_string(), *l)).collect()],
            warnings: warnings.map(|w| vec![w.into_iter().collect()]),
        }
    }

    #[test]
    fn normal_prompt_has_only_normal_descriptors() {
        let space = FeatureSpace::default();
        let v = view(&[("flow.latency_ms", 0), ("flow.loss", 0)], None);
        let b = build_prompts(&v, &[Modality::Flow], &space);
        assert_eq!(b.prompts.len(), 1);
        let t = &b.prompts[0].text;
        assert!(t.contains("(normal)"));
        assert!(!t.contains("above") && !t.contains("below"));
        let scores = parse_features(&mock_llm(t, 3, 0.1), &space);
        assert_eq!(scores.status, ParseStatus::Ok);
        assert!(scores.parsed.unwrap().iter().all(|&x| x <= 0.1));
    }

    #[test]
    fn packet_loss_warnings_raise_the_matching_score() {
        let space = FeatureSpace::default();
        let v = view(&[], Some(vec![(WarningKind::PacketLoss, 3)]));
        let b = build_prompts(&v, &[Modality::Warning], &space);
        let t = &b.prompts[0].text;
        assert!(t.contains("PacketLoss x 3"));
        assert_eq!(prompt_warnings(t), vec![(WarningKind::PacketLoss, 3)]);
        for seed in 0..50 {
            let r = parse_features(&mock_llm(t, seed, 0.1), &space);
            let i = space.index("elevated_packet_loss").unwrap();
            assert!(r.parsed.unwrap()[i] >= 0.6);
        }
        assert_eq!(mock_llm(t, 9, 0.1), mock_llm(t, 9, 0.1));
    }

    #[test]
    fn parse_rules() {
        let space = FeatureSpace::default();
        let scores: Vec<f64> = (0..10).map(|i| i as f64 / 10.0).collect();
        let r = parse_features(&render(&scores, &space.names), &space);
        assert_eq!(r.status, ParseStatus::Ok);
        assert_eq!(r.parsed.unwrap(), scores);

        let mut over = scores.clone();
        over[3] = 1.7;
        let r = parse_features(&format!("Sure! {}", render(&over, &space.names)), &space);
        assert_eq!(r.status, ParseStatus::Repaired);
        assert_eq!(r.parsed.unwrap()[3], 1.0);

        let r = parse_features("The node looks congested to me.", &space);
        assert_eq!(r.status, ParseStatus::Failed);
        assert!(r.parsed.is_none());

        let r = parse_features("Elevated Latency: 0.8\nqueue saturation = 0.4", &space);
        assert_eq!(r.status, ParseStatus::Repaired);
        let p = r.parsed.unwrap();
        assert_eq!(p[3], 0.8);
        assert_eq!(p[7], 0.4);
    }

    #[test]
    fn aggregation_rules() {
        let one = vec![Some(vec![0.2, 0.5])];
        assert_eq!(aggregate_nodes(&one, 2), (vec![0.2, 0.5], 0));
        let three = vec![Some(vec![0.1, 0.3]), None, Some(vec![0.9, 0.0])];
        assert_eq!(aggregate_nodes(&three, 2), (vec![0.9, 0.3], 2));
        let zeros = vec![Some(vec![0.0, 0.0]); 4];
        assert_eq!(aggregate_nodes(&zeros, 2).1, 0);
    }

    #[test]
    fn endpoint_config_round_trips() {
        let cfg = LlmConfig::default();
        let s = serde_json::to_string(&cfg).unwrap();
        assert_eq!(serde_json::from_str::<LlmConfig>(&s).unwrap(), cfg);
        let bad = r#"{"endpoint": {"kind": "mock", "seed": 1, "noise": 0.1, "extra": 2}}"#;
        assert!(serde_json::from_str::<LlmConfig>(bad).is_err());
    }

    #[test]
    fn subset_is_stratified_and_nonempty() {
        let items: Vec<(String, FaultType, SplitPart)> = (0..200)
            .map(|i| {
                let f = FaultType::ALL[i % 12];
                let p = if i % 5 == 0 {
                    SplitPart::Test
                } else {
                    SplitPart::Train
                };
                (format!("s{i:05}"), f, p)
            })
            .collect();
        let sub = distill_subset(&items, 0.1, 1).unwrap();
        assert_eq!(sub.len(), 20);
        assert!(distill_subset(&[], 0.1, 1).is_err());
        assert!(distill(&[], MethodKind::DecisionTree, &BaselineConfig::default()).is_err());
    }
}
