//! Histogram-based gradient-boosted regression trees with squared-error loss.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::{keyed_rng, Stream};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GbrtParams {
    pub n_trees: usize,
    pub max_depth: usize,
    pub learning_rate: f64,
    pub l1: f64,
    pub l2: f64,
    pub n_bins: usize,
    /// Rounds without validation improvement before boosting stops.
    pub early_stopping_rounds: usize,
    pub min_samples_leaf: usize,
}

impl Default for GbrtParams {
    fn default() -> Self {
        Self {
            n_trees: 200,
            max_depth: 5,
            learning_rate: 0.1,
            l1: 0.0,
            l2: 1.0,
            n_bins: 32,
            early_stopping_rounds: 20,
            min_samples_leaf: 1,
        }
    }
}

impl GbrtParams {
    pub fn validate(&self) -> Result<()> {
        let ok = self.n_trees > 0
            && self.max_depth > 0
            && self.learning_rate > 0.0
            && self.learning_rate <= 1.0
            && self.l1 >= 0.0
            && self.l2 >= 0.0
            && (2..=256).contains(&self.n_bins)
            && self.min_samples_leaf > 0;
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidParameter(format!("invalid boosting parameters {self:?}")))
        }
    }

    /// Random-search candidate `trial`, deterministic in `seed`.
    pub fn sample(&self, seed: u64, trial: usize) -> Self {
        let mut rng = keyed_rng(seed, Stream::HyperSearch, &[trial as u64]);
        let log_uniform = |rng: &mut rand_chacha::ChaCha8Rng, lo: f64, hi: f64| (rng.random_range(lo.ln()..hi.ln())).exp();
        Self {
            max_depth: rng.random_range(2..=8),
            learning_rate: log_uniform(&mut rng, 0.02, 0.3),
            l2: log_uniform(&mut rng, 0.1, 10.0),
            l1: if rng.random_bool(0.5) { 0.0 } else { log_uniform(&mut rng, 1e-3, 1.0) },
            min_samples_leaf: rng.random_range(1..=20),
            ..*self
        }
    }
}

/// Row-major feature matrix with targets.
#[derive(Debug, Clone, Copy)]
pub struct Dataset<'a> {
    pub features: &'a [f64],
    pub targets: &'a [f64],
    pub n_features: usize,
}

impl<'a> Dataset<'a> {
    pub fn new(features: &'a [f64], targets: &'a [f64], n_features: usize) -> Result<Self> {
        if n_features == 0 || features.len() != targets.len() * n_features {
            return Err(Error::Dimension(format!(
                "{} feature values for {} targets of {n_features} features",
                features.len(),
                targets.len()
            )));
        }
        if features.iter().chain(targets).any(|v| !v.is_finite()) {
            return Err(Error::DataQuality("non-finite training value".into()));
        }
        Ok(Self { features, targets, n_features })
    }

    pub fn len(&self) -> usize {
        self.targets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.targets.is_empty()
    }

    pub fn row(&self, i: usize) -> &'a [f64] {
        &self.features[i * self.n_features..(i + 1) * self.n_features]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase")]
pub enum Node {
    /// Rows with `x[feature] <= threshold` go left.
    Split { feature: usize, threshold: f64, left: usize, right: usize },
    Leaf { value: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tree {
    pub nodes: Vec<Node>,
}

impl Tree {
    pub fn predict(&self, x: &[f64]) -> f64 {
        let mut k = 0;
        loop {
            match self.nodes[k] {
                Node::Leaf { value } => return value,
                Node::Split { feature, threshold, left, right } => k = if x[feature] <= threshold { left } else { right },
            }
        }
    }
}

/// Fitted ensemble; leaf values already include the learning rate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Gbrt {
    pub n_features: usize,
    pub base_score: f64,
    pub trees: Vec<Tree>,
    pub params: GbrtParams,
    /// Validation RMSE at the retained number of trees, when a validation set was given.
    pub val_rmse: Option<f64>,
}

impl Gbrt {
    pub fn predict(&self, x: &[f64]) -> f64 {
        self.base_score + self.trees.iter().map(|t| t.predict(x)).sum::<f64>()
    }

    /// Boosts on `train`, stopping early on `val` when given.
    pub fn fit(train: &Dataset, val: Option<&Dataset>, params: &GbrtParams) -> Result<Self> {
        params.validate()?;
        if train.is_empty() {
            return Err(Error::Training("empty training set".into()));
        }
        if val.is_some_and(|v| v.n_features != train.n_features) {
            return Err(Error::Dimension("validation features differ from training features".into()));
        }
        let nf = train.n_features;
        let bins = Binning::new(train, params.n_bins);
        let binned = bins.apply(train);
        let base_score = train.targets.iter().sum::<f64>() / train.len() as f64;
        let mut pred = vec![base_score; train.len()];
        let mut val_pred = val.map(|v| vec![base_score; v.len()]);
        let mut trees = Vec::new();
        let mut best = (f64::INFINITY, 0usize);

        for round in 0..params.n_trees {
            let grad: Vec<f64> = pred.iter().zip(train.targets).map(|(p, y)| p - y).collect();
            let tree = TreeBuilder { binned: &binned, n_features: nf, bins: &bins, grad: &grad, params }.build();
            for (i, p) in pred.iter_mut().enumerate() {
                *p += tree.predict(train.row(i));
            }
            if let (Some(v), Some(vp)) = (val, val_pred.as_mut()) {
                let mut sq = 0.0;
                for (i, p) in vp.iter_mut().enumerate() {
                    *p += tree.predict(v.row(i));
                    sq += (*p - v.targets[i]).powi(2);
                }
                let rmse = (sq / v.len().max(1) as f64).sqrt();
                if rmse < best.0 {
                    best = (rmse, round + 1);
                }
                trees.push(tree);
                if round + 1 - best.1 >= params.early_stopping_rounds {
                    break;
                }
            } else {
                trees.push(tree);
            }
        }
        let val_rmse = val.map(|_| best.0);
        if val.is_some() {
            trees.truncate(best.1);
        }
        Ok(Self { n_features: nf, base_score, trees, params: *params, val_rmse })
    }

    /// Fits `n_trials` random candidates (plus `base`) and keeps the one with
    /// the lowest validation RMSE.
    pub fn fit_search(train: &Dataset, val: &Dataset, base: &GbrtParams, n_trials: usize, seed: u64) -> Result<Self> {
        let mut best = Self::fit(train, Some(val), base)?;
        for trial in 0..n_trials {
            let candidate = Self::fit(train, Some(val), &base.sample(seed, trial))?;
            if candidate.val_rmse < best.val_rmse {
                best = candidate;
            }
        }
        Ok(best)
    }
}

/// Per-feature split candidates at training quantiles.
struct Binning {
    thresholds: Vec<Vec<f64>>,
}

impl Binning {
    fn new(data: &Dataset, n_bins: usize) -> Self {
        let n = data.len();
        let thresholds = (0..data.n_features)
            .map(|f| {
                let mut col: Vec<f64> = (0..n).map(|i| data.row(i)[f]).collect();
                col.sort_by(f64::total_cmp);
                let mut t: Vec<f64> = (1..n_bins).map(|k| col[(k * n / n_bins).min(n - 1)]).collect();
                t.dedup();
                // A threshold at the maximum cannot separate anything.
                if t.last() == col.last() {
                    t.pop();
                }
                t
            })
            .collect();
        Self { thresholds }
    }

    /// Bin `b` holds values in `(t[b−1], t[b]]`.
    fn apply(&self, data: &Dataset) -> Vec<u8> {
        let nf = data.n_features;
        let mut out = vec![0u8; data.len() * nf];
        for i in 0..data.len() {
            for (f, t) in self.thresholds.iter().enumerate() {
                out[i * nf + f] = t.partition_point(|&th| th < data.row(i)[f]) as u8;
            }
        }
        out
    }
}

fn soft_threshold(g: f64, l1: f64) -> f64 {
    if g > l1 {
        g - l1
    } else if g < -l1 {
        g + l1
    } else {
        0.0
    }
}

struct TreeBuilder<'a> {
    binned: &'a [u8],
    n_features: usize,
    bins: &'a Binning,
    grad: &'a [f64],
    params: &'a GbrtParams,
}

impl TreeBuilder<'_> {
    fn build(&self) -> Tree {
        let rows: Vec<usize> = (0..self.grad.len()).collect();
        let mut nodes = Vec::new();
        self.grow(&rows, 0, &mut nodes);
        Tree { nodes }
    }

    /// Structure score of a node with gradient sum `g` over `h` rows.
    fn score(&self, g: f64, h: f64) -> f64 {
        let s = soft_threshold(g, self.params.l1);
        s * s / (h + self.params.l2)
    }

    fn leaf_value(&self, g: f64, h: f64) -> f64 {
        let denom = h + self.params.l2;
        if denom <= 0.0 {
            return 0.0;
        }
        -soft_threshold(g, self.params.l1) / denom * self.params.learning_rate
    }

    fn grow(&self, rows: &[usize], depth: usize, nodes: &mut Vec<Node>) -> usize {
        let id = nodes.len();
        let g: f64 = rows.iter().map(|&i| self.grad[i]).sum();
        let h = rows.len() as f64;
        nodes.push(Node::Leaf { value: self.leaf_value(g, h) });
        if depth >= self.params.max_depth || rows.len() < 2 * self.params.min_samples_leaf {
            return id;
        }
        let Some((feature, bin)) = self.best_split(rows, g, h) else {
            return id;
        };
        let nf = self.n_features;
        let (left, right): (Vec<usize>, Vec<usize>) =
            rows.iter().partition(|&&i| (self.binned[i * nf + feature] as usize) <= bin);
        let l = self.grow(&left, depth + 1, nodes);
        let r = self.grow(&right, depth + 1, nodes);
        nodes[id] = Node::Split { feature, threshold: self.bins.thresholds[feature][bin], left: l, right: r };
        id
    }

    fn best_split(&self, rows: &[usize], g: f64, h: f64) -> Option<(usize, usize)> {
        let nf = self.n_features;
        let parent = self.score(g, h);
        let min_leaf = self.params.min_samples_leaf as f64;
        let mut best: Option<(f64, usize, usize)> = None;
        for (f, thresholds) in self.bins.thresholds.iter().enumerate() {
            if thresholds.is_empty() {
                continue;
            }
            let n_bins = thresholds.len() + 1;
            let mut hist_g = vec![0.0; n_bins];
            let mut hist_h = vec![0.0; n_bins];
            for &i in rows {
                let b = self.binned[i * nf + f] as usize;
                hist_g[b] += self.grad[i];
                hist_h[b] += 1.0;
            }
            let (mut gl, mut hl) = (0.0, 0.0);
            for b in 0..thresholds.len() {
                gl += hist_g[b];
                hl += hist_h[b];
                let hr = h - hl;
                if hl < min_leaf || hr < min_leaf {
                    continue;
                }
                let gain = self.score(gl, hl) + self.score(g - gl, hr) - parent;
                if gain > 1e-12 && best.is_none_or(|(bg, _, _)| gain > bg) {
                    best = Some((gain, f, b));
                }
            }
        }
        best.map(|(_, f, b)| (f, b))
    }
}
