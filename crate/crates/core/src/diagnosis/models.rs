//! Native baselines: multinomial logistic regression, k-nearest neighbours,
//! CART decision tree and a one-hidden-layer perceptron.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum MethodKind {
    LogReg,
    #[serde(rename = "KNN")]
    Knn,
    DecisionTree,
    #[serde(rename = "MLP")]
    Mlp,
}

impl MethodKind {
    pub const ALL: [MethodKind; 4] = [
        MethodKind::LogReg,
        MethodKind::Knn,
        MethodKind::DecisionTree,
        MethodKind::Mlp,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            MethodKind::LogReg => "LogReg",
            MethodKind::Knn => "KNN",
            MethodKind::DecisionTree => "DecisionTree",
            MethodKind::Mlp => "MLP",
        }
    }
}

impl std::fmt::Display for MethodKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for MethodKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        MethodKind::ALL
            .into_iter()
            .find(|m| m.as_str().eq_ignore_ascii_case(s.trim()))
            .ok_or_else(|| Error::InvalidConfig(format!("unknown method {s:?}")))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LogRegConfig {
    pub epochs: usize,
    pub learning_rate: f64,
    pub l2: f64,
}

impl Default for LogRegConfig {
    fn default() -> Self {
        Self {
            epochs: 300,
            learning_rate: 0.05,
            l2: 1e-4,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct KnnConfig {
    pub k: usize,
}

impl Default for KnnConfig {
    fn default() -> Self {
        Self { k: 5 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TreeConfig {
    pub max_depth: usize,
    pub min_samples_split: usize,
}

impl Default for TreeConfig {
    fn default() -> Self {
        Self {
            max_depth: 12,
            min_samples_split: 4,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MlpConfig {
    pub hidden: usize,
    pub epochs: usize,
    pub learning_rate: f64,
    pub l2: f64,
    pub seed: u64,
}

impl Default for MlpConfig {
    fn default() -> Self {
        Self {
            hidden: 64,
            epochs: 300,
            learning_rate: 0.01,
            l2: 1e-4,
            seed: 7,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BaselineConfig {
    pub logreg: LogRegConfig,
    pub knn: KnnConfig,
    pub tree: TreeConfig,
    pub mlp: MlpConfig,
}

/// Dense training set: `x[i]` has label `y[i] < n_classes`.
#[derive(Debug, Clone, Copy)]
pub struct TrainSet<'a> {
    pub x: &'a [Vec<f64>],
    pub y: &'a [usize],
    pub n_classes: usize,
}

impl TrainSet<'_> {
    fn dim(&self) -> usize {
        self.x.first().map_or(0, Vec::len)
    }

    /// Every class must be represented and all rows must agree in width.
    pub fn check(&self, class_names: &dyn Fn(usize) -> String) -> Result<()> {
        if self.x.len() != self.y.len() || self.x.is_empty() {
            return Err(Error::Training("empty or mismatched training set".into()));
        }
        let d = self.dim();
        if self.x.iter().any(|r| r.len() != d) {
            return Err(Error::Training("inconsistent feature dimensions".into()));
        }
        let mut seen = vec![false; self.n_classes];
        for &c in self.y {
            match seen.get_mut(c) {
                Some(s) => *s = true,
                None => return Err(Error::Training(format!("label {c} out of range"))),
            }
        }
        if let Some(c) = seen.iter().position(|s| !s) {
            return Err(Error::Training(format!(
                "class {} has no training samples",
                class_names(c)
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Model {
    LogReg(LogReg),
    Knn(Knn),
    DecisionTree(DecisionTree),
    Mlp(Mlp),
}

impl Model {
    pub fn predict(&self, x: &[f64]) -> usize {
        match self {
            Model::LogReg(m) => m.predict(x),
            Model::Knn(m) => m.predict(x),
            Model::DecisionTree(m) => m.predict(x),
            Model::Mlp(m) => m.predict(x),
        }
    }

    pub fn predict_all(&self, xs: &[Vec<f64>]) -> Vec<usize> {
        xs.iter().map(|x| self.predict(x)).collect()
    }
}

pub fn train_baseline(
    kind: MethodKind,
    data: TrainSet<'_>,
    hyper: &BaselineConfig,
    class_names: &dyn Fn(usize) -> String,
) -> Result<Model> {
    data.check(class_names)?;
    Ok(match kind {
        MethodKind::LogReg => Model::LogReg(LogReg::fit(data, &hyper.logreg)),
        MethodKind::Knn => Model::Knn(Knn::fit(data, &hyper.knn)),
        MethodKind::DecisionTree => Model::DecisionTree(DecisionTree::fit(data, &hyper.tree)),
        MethodKind::Mlp => Model::Mlp(Mlp::fit(data, &hyper.mlp)),
    })
}

fn argmax(v: &[f64]) -> usize {
    let mut best = 0;
    for (i, &x) in v.iter().enumerate() {
        if x > v[best] {
            best = i;
        }
    }
    best
}

fn softmax_in_place(z: &mut [f64]) {
    let m = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut s = 0.0;
    for v in z.iter_mut() {
        *v = (*v - m).exp();
        s += *v;
    }
    z.iter_mut().for_each(|v| *v /= s);
}

/// Adam state over a flat parameter vector.
struct Adam {
    lr: f64,
    m: Vec<f64>,
    v: Vec<f64>,
    t: i32,
}

impl Adam {
    fn new(n: usize, lr: f64) -> Self {
        Self {
            lr,
            m: vec![0.0; n],
            v: vec![0.0; n],
            t: 0,
        }
    }

    fn step(&mut self, params: &mut [f64], grad: &[f64]) {
        const B1: f64 = 0.9;
        const B2: f64 = 0.999;
        self.t += 1;
        let c1 = 1.0 - B1.powi(self.t);
        let c2 = 1.0 - B2.powi(self.t);
        for i in 0..params.len() {
            self.m[i] = B1 * self.m[i] + (1.0 - B1) * grad[i];
            self.v[i] = B2 * self.v[i] + (1.0 - B2) * grad[i] * grad[i];
            params[i] -= self.lr * (self.m[i] / c1) / ((self.v[i] / c2).sqrt() + 1e-8);
        }
    }
}

/// Softmax regression trained by full-batch Adam from zero weights.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogReg {
    pub n_classes: usize,
    pub dim: usize,
    /// Row-major `[class][dim + 1]`, bias last.
    pub weights: Vec<f64>,
}

impl LogReg {
    pub fn fit(data: TrainSet<'_>, cfg: &LogRegConfig) -> Self {
        let (k, d) = (data.n_classes, data.dim());
        let mut model = Self {
            n_classes: k,
            dim: d,
            weights: vec![0.0; k * (d + 1)],
        };
        let mut opt = Adam::new(model.weights.len(), cfg.learning_rate);
        let n = data.x.len() as f64;
        let mut grad = vec![0.0; model.weights.len()];
        let mut p = vec![0.0; k];
        for _ in 0..cfg.epochs {
            grad.iter_mut().for_each(|g| *g = 0.0);
            for (x, &y) in data.x.iter().zip(data.y) {
                model.scores_into(x, &mut p);
                softmax_in_place(&mut p);
                p[y] -= 1.0;
                for c in 0..k {
                    let g = &mut grad[c * (d + 1)..(c + 1) * (d + 1)];
                    for j in 0..d {
                        g[j] += p[c] * x[j];
                    }
                    g[d] += p[c];
                }
            }
            for (i, g) in grad.iter_mut().enumerate() {
                *g /= n;
                if i % (d + 1) != d {
                    *g += cfg.l2 * model.weights[i];
                }
            }
            opt.step(&mut model.weights, &grad);
        }
        model
    }

    fn scores_into(&self, x: &[f64], out: &mut [f64]) {
        let d = self.dim;
        for (c, o) in out.iter_mut().enumerate() {
            let w = &self.weights[c * (d + 1)..(c + 1) * (d + 1)];
            *o = w[d] + w[..d].iter().zip(x).map(|(a, b)| a * b).sum::<f64>();
        }
    }

    pub fn predict(&self, x: &[f64]) -> usize {
        let mut s = vec![0.0; self.n_classes];
        self.scores_into(x, &mut s);
        argmax(&s)
    }
}

/// Majority vote among the k nearest training points (Euclidean). Vote
/// ties go to the class with the smaller summed distance, then the lower
/// class index.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Knn {
    pub k: usize,
    pub n_classes: usize,
    pub x: Vec<Vec<f64>>,
    pub y: Vec<usize>,
}

impl Knn {
    pub fn fit(data: TrainSet<'_>, cfg: &KnnConfig) -> Self {
        Self {
            k: cfg.k.max(1),
            n_classes: data.n_classes,
            x: data.x.to_vec(),
            y: data.y.to_vec(),
        }
    }

    pub fn predict(&self, q: &[f64]) -> usize {
        let mut d: Vec<(f64, usize)> = self
            .x
            .iter()
            .enumerate()
            .map(|(i, x)| {
                (
                    x.iter().zip(q).map(|(a, b)| (a - b) * (a - b)).sum::<f64>(),
                    i,
                )
            })
            .collect();
        let k = self.k.min(d.len());
        d.select_nth_unstable_by(k - 1, |a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        let mut votes = vec![(0usize, 0.0f64); self.n_classes];
        for &(dist, i) in &d[..k] {
            votes[self.y[i]].0 += 1;
            votes[self.y[i]].1 += dist.sqrt();
        }
        let mut best = 0;
        for c in 1..self.n_classes {
            let (vc, dc) = votes[c];
            let (vb, db) = votes[best];
            if vc > vb || (vc == vb && vc > 0 && dc < db) {
                best = c;
            }
        }
        best
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum TreeNode {
    Leaf {
        class: usize,
    },
    Split {
        feature: usize,
        threshold: f64,
        left: usize,
        right: usize,
    },
}

/// CART with Gini impurity; `x[feature] <= threshold` goes left.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecisionTree {
    pub nodes: Vec<TreeNode>,
}

impl DecisionTree {
    pub fn fit(data: TrainSet<'_>, cfg: &TreeConfig) -> Self {
        let mut tree = Self { nodes: Vec::new() };
        let idx: Vec<usize> = (0..data.x.len()).collect();
        tree.grow(&data, idx, 0, cfg);
        tree
    }

    fn counts(data: &TrainSet<'_>, idx: &[usize]) -> Vec<usize> {
        let mut c = vec![0; data.n_classes];
        for &i in idx {
            c[data.y[i]] += 1;
        }
        c
    }

    fn gini(counts: &[usize], n: usize) -> f64 {
        if n == 0 {
            return 0.0;
        }
        let n = n as f64;
        1.0 - counts.iter().map(|&c| (c as f64 / n).powi(2)).sum::<f64>()
    }

    fn grow(
        &mut self,
        data: &TrainSet<'_>,
        idx: Vec<usize>,
        depth: usize,
        cfg: &TreeConfig,
    ) -> usize {
        let counts = Self::counts(data, &idx);
        let majority = counts
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.cmp(b.1).then(b.0.cmp(&a.0)))
            .map_or(0, |(c, _)| c);
        let id = self.nodes.len();
        self.nodes.push(TreeNode::Leaf { class: majority });
        let pure = counts.iter().filter(|&&c| c > 0).count() <= 1;
        if pure || depth >= cfg.max_depth || idx.len() < cfg.min_samples_split {
            return id;
        }
        let Some((feature, threshold)) = Self::best_split(data, &idx, &counts) else {
            return id;
        };
        let (l, r): (Vec<usize>, Vec<usize>) =
            idx.iter().partition(|&&i| data.x[i][feature] <= threshold);
        let left = self.grow(data, l, depth + 1, cfg);
        let right = self.grow(data, r, depth + 1, cfg);
        self.nodes[id] = TreeNode::Split {
            feature,
            threshold,
            left,
            right,
        };
        id
    }

    fn best_split(data: &TrainSet<'_>, idx: &[usize], counts: &[usize]) -> Option<(usize, f64)> {
        let n = idx.len();
        let parent = Self::gini(counts, n);
        let mut best: Option<(f64, usize, f64)> = None;
        let mut order = idx.to_vec();
        for j in 0..data.dim() {
            order.sort_by(|&a, &b| data.x[a][j].total_cmp(&data.x[b][j]).then(a.cmp(&b)));
            let mut left = vec![0usize; data.n_classes];
            for pos in 0..n - 1 {
                left[data.y[order[pos]]] += 1;
                let (xa, xb) = (data.x[order[pos]][j], data.x[order[pos + 1]][j]);
                if xa == xb {
                    continue;
                }
                let nl = pos + 1;
                let right: Vec<usize> = counts.iter().zip(&left).map(|(t, l)| t - l).collect();
                let w = (nl as f64 * Self::gini(&left, nl)
                    + (n - nl) as f64 * Self::gini(&right, n - nl))
                    / n as f64;
                let gain = parent - w;
                if gain > 1e-12 && best.is_none_or(|(g, _, _)| gain > g + 1e-12) {
                    best = Some((gain, j, 0.5 * (xa + xb)));
                }
            }
        }
        best.map(|(_, j, t)| (j, t))
    }

    pub fn predict(&self, x: &[f64]) -> usize {
        let mut i = 0;
        loop {
            match self.nodes[i] {
                TreeNode::Leaf { class } => return class,
                TreeNode::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => i = if x[feature] <= threshold { left } else { right },
            }
        }
    }
}

/// One tanh hidden layer with a softmax output, trained by full-batch Adam
/// on L2-regularized cross-entropy.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Mlp {
    pub dim: usize,
    pub hidden: usize,
    pub n_classes: usize,
    /// `[W1 (hidden x dim), b1 (hidden), W2 (classes x hidden), b2 (classes)]`.
    pub params: Vec<f64>,
}

impl Mlp {
    pub fn new(dim: usize, hidden: usize, n_classes: usize, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut params = vec![0.0; hidden * dim + hidden + n_classes * hidden + n_classes];
        let s1 = (6.0 / (dim + hidden) as f64).sqrt();
        let s2 = (6.0 / (hidden + n_classes) as f64).sqrt();
        for (i, p) in params.iter_mut().enumerate() {
            let u: f64 = rng.random_range(-1.0..1.0);
            if i < hidden * dim {
                *p = u * s1;
            } else if (hidden * dim + hidden..hidden * dim + hidden + n_classes * hidden)
                .contains(&i)
            {
                *p = u * s2;
            }
        }
        Self {
            dim,
            hidden,
            n_classes,
            params,
        }
    }

    fn offsets(&self) -> (usize, usize, usize) {
        let b1 = self.hidden * self.dim;
        let w2 = b1 + self.hidden;
        let b2 = w2 + self.n_classes * self.hidden;
        (b1, w2, b2)
    }

    fn forward(&self, params: &[f64], x: &[f64], h: &mut [f64], out: &mut [f64]) {
        let (b1, w2, b2) = self.offsets();
        for (u, hu) in h.iter_mut().enumerate() {
            let w = &params[u * self.dim..(u + 1) * self.dim];
            *hu = (params[b1 + u] + w.iter().zip(x).map(|(a, b)| a * b).sum::<f64>()).tanh();
        }
        for (c, o) in out.iter_mut().enumerate() {
            let w = &params[w2 + c * self.hidden..w2 + (c + 1) * self.hidden];
            *o = params[b2 + c] + w.iter().zip(h.iter()).map(|(a, b)| a * b).sum::<f64>();
        }
        softmax_in_place(out);
    }

    /// Mean cross-entropy plus `l2/2 * |W|^2` over weight matrices, and its
    /// gradient with respect to every parameter.
    pub fn loss_and_grad(
        &self,
        params: &[f64],
        x: &[Vec<f64>],
        y: &[usize],
        l2: f64,
    ) -> (f64, Vec<f64>) {
        let (b1, w2, b2) = self.offsets();
        let n = x.len() as f64;
        let mut grad = vec![0.0; params.len()];
        let mut loss = 0.0;
        let mut h = vec![0.0; self.hidden];
        let mut p = vec![0.0; self.n_classes];
        let mut dh = vec![0.0; self.hidden];
        for (xi, &yi) in x.iter().zip(y) {
            self.forward(params, xi, &mut h, &mut p);
            loss -= p[yi].max(1e-300).ln();
            p[yi] -= 1.0;
            dh.iter_mut().for_each(|v| *v = 0.0);
            for c in 0..self.n_classes {
                grad[b2 + c] += p[c];
                let row = w2 + c * self.hidden;
                for u in 0..self.hidden {
                    grad[row + u] += p[c] * h[u];
                    dh[u] += p[c] * params[row + u];
                }
            }
            for u in 0..self.hidden {
                let dz = dh[u] * (1.0 - h[u] * h[u]);
                grad[b1 + u] += dz;
                let row = u * self.dim;
                for j in 0..self.dim {
                    grad[row + j] += dz * xi[j];
                }
            }
        }
        loss /= n;
        grad.iter_mut().for_each(|g| *g /= n);
        let is_weight = |i: usize| i < b1 || (w2..b2).contains(&i);
        for (i, g) in grad.iter_mut().enumerate() {
            if is_weight(i) {
                loss += 0.5 * l2 * params[i] * params[i];
                *g += l2 * params[i];
            }
        }
        (loss, grad)
    }

    pub fn fit(data: TrainSet<'_>, cfg: &MlpConfig) -> Self {
        let mut model = Self::new(data.dim(), cfg.hidden, data.n_classes, cfg.seed);
        let mut opt = Adam::new(model.params.len(), cfg.learning_rate);
        for _ in 0..cfg.epochs {
            let (_, grad) = model.loss_and_grad(&model.params, data.x, data.y, cfg.l2);
            let mut params = std::mem::take(&mut model.params);
            opt.step(&mut params, &grad);
            model.params = params;
        }
        model
    }

    pub fn predict_proba(&self, x: &[f64]) -> Vec<f64> {
        let mut h = vec![0.0; self.hidden];
        let mut p = vec![0.0; self.n_classes];
        self.forward(&self.params, x, &mut h, &mut p);
        p
    }

    pub fn predict(&self, x: &[f64]) -> usize {
        argmax(&self.predict_proba(x))
    }
}
