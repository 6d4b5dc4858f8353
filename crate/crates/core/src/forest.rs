//! Multi-output random-forest regression.
//!
//! Each tree maps a feature array to a vector of per-solver costs. Splits
//! minimise the weighted squared error summed over all outputs; leaves hold
//! the weighted mean cost vector of their rows. The forest averages its trees.

use std::collections::{BTreeSet, HashMap};

use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::cost::{CostConfig, ResultsTable};
use crate::features::{FeatureVector, TaskId, FEATURE_NAMES};
use crate::solver::{SolverId, SolverRanking};

pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum ForestError {
    #[error("training set is empty")]
    EmptyTrainingSet,
    #[error("need at least {needed} rows to train, got {got}")]
    TooFewRows { needed: usize, got: usize },
    #[error("row `{task}`: {message}")]
    BadRow { task: String, message: String },
    #[error("need at least {k} distinct files for {k}-fold splits, got {files}")]
    TooFewFiles { k: usize, files: usize },
    #[error("feature and results task sets differ; only in features: [{only_features}]; only in results: [{only_results}]")]
    TaskMismatch {
        only_features: String,
        only_results: String,
    },
    #[error("invalid hyperparameters: {0}")]
    Hyperparameters(String),
    #[error("model schema error at `{path}`: {message}")]
    Schema { path: String, message: String },
}

/// Population standard deviation of a cost vector.
pub fn sample_weight(costs: &[f64]) -> f64 {
    if costs.is_empty() {
        return 0.0;
    }
    let n = costs.len() as f64;
    let mean = costs.iter().sum::<f64>() / n;
    (costs.iter().map(|c| (c - mean) * (c - mean)).sum::<f64>() / n).sqrt()
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainingRow {
    pub task_id: String,
    /// Grouping key for cross-validation.
    pub file: String,
    pub features: Vec<f64>,
    pub costs: Vec<f64>,
    pub weight: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainingSet {
    pub roster: Vec<SolverId>,
    pub feature_names: Vec<String>,
    pub rows: Vec<TrainingRow>,
}

impl TrainingSet {
    pub fn new(
        roster: Vec<SolverId>,
        feature_names: Vec<String>,
        rows: Vec<TrainingRow>,
    ) -> Result<Self, ForestError> {
        for r in &rows {
            let bad = |message: String| ForestError::BadRow {
                task: r.task_id.clone(),
                message,
            };
            if r.costs.len() != roster.len() {
                return Err(bad(format!("{} costs for {} solvers", r.costs.len(), roster.len())));
            }
            if r.features.len() != feature_names.len() {
                return Err(bad(format!("{} features, expected {}", r.features.len(), feature_names.len())));
            }
            if !(r.weight.is_finite() && r.weight >= 0.0) {
                return Err(bad(format!("weight {} is not a finite non-negative number", r.weight)));
            }
            if r.features.iter().chain(&r.costs).any(|x| !x.is_finite()) {
                return Err(bad("non-finite feature or cost".into()));
            }
        }
        Ok(TrainingSet {
            roster,
            feature_names,
            rows,
        })
    }

    /// Joins extracted features with recorded results. Cost vectors come from
    /// the cost function; weights are the cost spread when `weighted`, else 1.
    pub fn from_results(
        features: &[(TaskId, FeatureVector)],
        results: &ResultsTable,
        cfg: CostConfig,
        weighted: bool,
    ) -> Result<Self, ForestError> {
        let feature_ids: BTreeSet<String> = features.iter().map(|(t, _)| t.to_string()).collect();
        let result_ids: BTreeSet<String> = results.tasks().iter().map(|t| t.to_string()).collect();
        if feature_ids != result_ids || feature_ids.len() != features.len() {
            let join = |s: Vec<&String>| s.into_iter().cloned().collect::<Vec<_>>().join(", ");
            return Err(ForestError::TaskMismatch {
                only_features: join(feature_ids.difference(&result_ids).collect()),
                only_results: join(result_ids.difference(&feature_ids).collect()),
            });
        }
        let rows = features
            .iter()
            .map(|(id, fv)| {
                let key = id.to_string();
                let i = results.task_index(&key).expect("checked above");
                let costs = results.cost_vector(i, cfg);
                let weight = if weighted { sample_weight(&costs) } else { 1.0 };
                TrainingRow {
                    task_id: key,
                    file: id.file.clone(),
                    features: fv.to_array().to_vec(),
                    costs,
                    weight,
                }
            })
            .collect();
        TrainingSet::new(
            results.roster().to_vec(),
            FEATURE_NAMES.iter().map(|s| s.to_string()).collect(),
            rows,
        )
    }

    pub fn subset(&self, rows: &[usize]) -> TrainingSet {
        TrainingSet {
            roster: self.roster.clone(),
            feature_names: self.feature_names.clone(),
            rows: rows.iter().map(|&i| self.rows[i].clone()).collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Hyperparameters {
    pub trees: usize,
    pub max_depth: Option<usize>,
    pub min_samples_leaf: usize,
    /// Features drawn at random for each split; `None` considers all of them.
    #[serde(default)]
    pub max_features: Option<usize>,
    #[serde(default = "default_bootstrap")]
    pub bootstrap: bool,
}

fn default_bootstrap() -> bool {
    true
}

impl Default for Hyperparameters {
    fn default() -> Self {
        Hyperparameters {
            trees: 100,
            max_depth: None,
            min_samples_leaf: 1,
            max_features: None,
            bootstrap: true,
        }
    }
}

impl Hyperparameters {
    fn check(&self) -> Result<(), ForestError> {
        if self.trees == 0 {
            return Err(ForestError::Hyperparameters("trees must be at least 1".into()));
        }
        if self.min_samples_leaf == 0 {
            return Err(ForestError::Hyperparameters("min_samples_leaf must be at least 1".into()));
        }
        if self.max_features == Some(0) {
            return Err(ForestError::Hyperparameters("max_features must be at least 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(untagged)]
pub enum TreeNode {
    Split {
        feature: usize,
        threshold: f64,
        left: Box<TreeNode>,
        right: Box<TreeNode>,
    },
    Leaf {
        value: Vec<f64>,
    },
}

impl TreeNode {
    /// Go left iff `x[feature] <= threshold`.
    pub fn leaf_for(&self, x: &[f64]) -> &[f64] {
        let mut node = self;
        loop {
            match node {
                TreeNode::Leaf { value } => return value,
                TreeNode::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => node = if x[*feature] <= *threshold { left } else { right },
            }
        }
    }

    pub fn depth(&self) -> usize {
        match self {
            TreeNode::Leaf { .. } => 0,
            TreeNode::Split { left, right, .. } => 1 + left.depth().max(right.depth()),
        }
    }

    pub fn leaf_count(&self) -> usize {
        match self {
            TreeNode::Leaf { .. } => 1,
            TreeNode::Split { left, right, .. } => left.leaf_count() + right.leaf_count(),
        }
    }
}

/// The split chosen at a node.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Split {
    pub feature: usize,
    pub threshold: f64,
    /// Weighted squared error of both children, summed over outputs.
    pub impurity: f64,
}

/// Relative tolerance under which two impurities count as equal.
pub const IMPURITY_TOLERANCE: f64 = 1e-10;

fn midpoint(a: f64, b: f64) -> f64 {
    let t = a + (b - a) / 2.0;
    if t >= b || t < a {
        a
    } else {
        t
    }
}

/// Borrowed training data for one tree.
struct Data<'a> {
    x: Vec<&'a [f64]>,
    y: Vec<&'a [f64]>,
    w: Vec<f64>,
}

impl<'a> Data<'a> {
    fn from_set(ts: &'a TrainingSet) -> Self {
        Data {
            x: ts.rows.iter().map(|r| r.features.as_slice()).collect(),
            y: ts.rows.iter().map(|r| r.costs.as_slice()).collect(),
            w: ts.rows.iter().map(|r| r.weight).collect(),
        }
    }

    fn outputs(&self) -> usize {
        self.y.first().map_or(0, |y| y.len())
    }

    /// Weighted mean target, falling back to the plain mean when all weights
    /// in the node are zero.
    fn leaf_value(&self, idx: &[usize]) -> Vec<f64> {
        let m = self.outputs();
        let total_w: f64 = idx.iter().map(|&i| self.w[i]).sum();
        let mut out = vec![0.0; m];
        if total_w > 0.0 {
            for &i in idx {
                for (o, y) in out.iter_mut().zip(self.y[i]) {
                    *o += self.w[i] * y;
                }
            }
            out.iter_mut().for_each(|o| *o /= total_w);
        } else {
            for &i in idx {
                for (o, y) in out.iter_mut().zip(self.y[i]) {
                    *o += y;
                }
            }
            out.iter_mut().for_each(|o| *o /= idx.len() as f64);
        }
        out
    }

    fn sse(&self, idx: &[usize]) -> (f64, f64) {
        let m = self.outputs();
        let mut s = vec![0.0; m];
        let mut q = 0.0;
        let mut w_tot = 0.0;
        for &i in idx {
            let w = self.w[i];
            w_tot += w;
            for (k, y) in self.y[i].iter().enumerate() {
                s[k] += w * y;
                q += w * y * y;
            }
        }
        if w_tot <= 0.0 {
            return (0.0, q);
        }
        let sse = q - s.iter().map(|v| v * v).sum::<f64>() / w_tot;
        (sse.max(0.0), q)
    }

    fn best_split(&self, idx: &[usize], features: &[usize], min_leaf: usize) -> Option<Split> {
        let m = self.outputs();
        let n = idx.len();
        let (_, scale) = self.sse(idx);
        let tol = IMPURITY_TOLERANCE * scale.max(1.0);
        let mut best: Option<Split> = None;
        let mut order: Vec<usize> = idx.to_vec();
        let mut total_s = vec![0.0; m];
        let mut total_q = 0.0;
        let mut total_w = 0.0;
        for &i in idx {
            total_w += self.w[i];
            for (k, y) in self.y[i].iter().enumerate() {
                total_s[k] += self.w[i] * y;
                total_q += self.w[i] * y * y;
            }
        }
        let side_sse = |q: f64, s: &[f64], w: f64| -> f64 {
            if w <= 0.0 {
                0.0
            } else {
                (q - s.iter().map(|v| v * v).sum::<f64>() / w).max(0.0)
            }
        };
        let mut left_s = vec![0.0; m];
        let mut right_s = vec![0.0; m];
        for &f in features {
            order.sort_by(|&a, &b| self.x[a][f].total_cmp(&self.x[b][f]));
            left_s.iter_mut().for_each(|v| *v = 0.0);
            let (mut left_q, mut left_w) = (0.0, 0.0);
            for pos in 1..n {
                let i = order[pos - 1];
                let w = self.w[i];
                left_w += w;
                for (k, y) in self.y[i].iter().enumerate() {
                    left_s[k] += w * y;
                    left_q += w * y * y;
                }
                let (lo, hi) = (self.x[i][f], self.x[order[pos]][f]);
                if lo == hi || pos < min_leaf || n - pos < min_leaf {
                    continue;
                }
                for k in 0..m {
                    right_s[k] = total_s[k] - left_s[k];
                }
                let impurity = side_sse(left_q, &left_s, left_w)
                    + side_sse(total_q - left_q, &right_s, total_w - left_w);
                if best.map_or(true, |b| impurity < b.impurity - tol) {
                    best = Some(Split {
                        feature: f,
                        threshold: midpoint(lo, hi),
                        impurity,
                    });
                }
            }
        }
        best
    }
}

struct Builder<'a> {
    data: Data<'a>,
    hp: &'a Hyperparameters,
    n_features: usize,
    rng: ChaCha8Rng,
}

impl Builder<'_> {
    fn build(&mut self, idx: Vec<usize>, depth: usize) -> TreeNode {
        let leaf = |b: &Self, idx: &[usize]| TreeNode::Leaf {
            value: b.data.leaf_value(idx),
        };
        let depth_capped = self.hp.max_depth.is_some_and(|d| depth >= d);
        let uniform = idx.iter().all(|&i| self.data.y[i] == self.data.y[idx[0]]);
        if idx.len() < 2 * self.hp.min_samples_leaf || depth_capped || uniform {
            return leaf(self, &idx);
        }
        let features: Vec<usize> = match self.hp.max_features {
            Some(k) if k < self.n_features => {
                let mut f = sample(&mut self.rng, self.n_features, k).into_vec();
                f.sort_unstable();
                f
            }
            _ => (0..self.n_features).collect(),
        };
        let (parent, scale) = self.data.sse(&idx);
        let split = match self.data.best_split(&idx, &features, self.hp.min_samples_leaf) {
            Some(s) if s.impurity < parent - IMPURITY_TOLERANCE * scale.max(1.0) => s,
            _ => return leaf(self, &idx),
        };
        let (l, r): (Vec<usize>, Vec<usize>) = idx
            .iter()
            .partition(|&&i| self.data.x[i][split.feature] <= split.threshold);
        TreeNode::Split {
            feature: split.feature,
            threshold: split.threshold,
            left: Box::new(self.build(l, depth + 1)),
            right: Box::new(self.build(r, depth + 1)),
        }
    }
}

/// Exposed for split-oracle tests: the split `train_tree` would choose at a
/// node holding `rows` of `ts` when considering `features`.
pub fn best_split(ts: &TrainingSet, rows: &[usize], features: &[usize], min_samples_leaf: usize) -> Option<Split> {
    Data::from_set(ts).best_split(rows, features, min_samples_leaf)
}

fn check_trainable(ts: &TrainingSet, hp: &Hyperparameters) -> Result<(), ForestError> {
    hp.check()?;
    if ts.rows.is_empty() {
        return Err(ForestError::EmptyTrainingSet);
    }
    if ts.rows.len() < 2 {
        return Err(ForestError::TooFewRows {
            needed: 2,
            got: ts.rows.len(),
        });
    }
    Ok(())
}

fn grow(ts: &TrainingSet, hp: &Hyperparameters, seed: u64, bootstrap: bool) -> TreeNode {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = ts.rows.len();
    let idx: Vec<usize> = if bootstrap {
        (0..n).map(|_| rng.gen_range(0..n)).collect()
    } else {
        (0..n).collect()
    };
    let mut b = Builder {
        data: Data::from_set(ts),
        hp,
        n_features: ts.feature_names.len(),
        rng,
    };
    b.build(idx, 0)
}

/// Grows one tree on every row of `ts` (no resampling).
pub fn train_tree(ts: &TrainingSet, hp: &Hyperparameters, seed: u64) -> Result<TreeNode, ForestError> {
    check_trainable(ts, hp)?;
    Ok(grow(ts, hp, seed, false))
}

#[derive(Debug, Clone, PartialEq)]
pub struct ForestModel {
    pub roster: Vec<SolverId>,
    pub feature_names: Vec<String>,
    pub seed: u64,
    pub hyperparameters: Hyperparameters,
    pub trees: Vec<TreeNode>,
}

/// Tree `i` is grown from seed `seed + i`, so the result does not depend on
/// how many threads the surrounding rayon pool has.
pub fn train_forest(ts: &TrainingSet, hp: &Hyperparameters, seed: u64) -> Result<ForestModel, ForestError> {
    check_trainable(ts, hp)?;
    let trees: Vec<TreeNode> = (0..hp.trees)
        .into_par_iter()
        .map(|t| grow(ts, hp, seed.wrapping_add(t as u64), hp.bootstrap))
        .collect();
    Ok(ForestModel {
        roster: ts.roster.clone(),
        feature_names: ts.feature_names.clone(),
        seed,
        hyperparameters: hp.clone(),
        trees,
    })
}

impl ForestModel {
    pub fn predict(&self, features: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.roster.len()];
        for tree in &self.trees {
            for (o, v) in out.iter_mut().zip(tree.leaf_for(features)) {
                *o += v;
            }
        }
        let n = self.trees.len() as f64;
        out.iter_mut().for_each(|o| *o /= n);
        out
    }

    pub fn predict_ranking(&self, features: &[f64]) -> SolverRanking {
        SolverRanking::by_ascending(&self.predict(features))
    }

    pub fn to_json(&self) -> String {
        let file = ModelFileRef {
            format_version: FORMAT_VERSION,
            solvers: &self.roster,
            feature_names: &self.feature_names,
            seed: self.seed,
            hyperparameters: &self.hyperparameters,
            trees: &self.trees,
        };
        serde_json::to_string_pretty(&file).expect("model serialises")
    }

    pub fn from_json(text: &str) -> Result<Self, ForestError> {
        let de = &mut serde_json::Deserializer::from_str(text);
        let raw: ModelFile = serde_path_to_error::deserialize(de).map_err(|e| ForestError::Schema {
            path: e.path().to_string(),
            message: e.inner().to_string(),
        })?;
        let schema = |path: String, message: String| ForestError::Schema { path, message };
        if raw.format_version != FORMAT_VERSION {
            return Err(schema(
                "format_version".into(),
                format!("unsupported version {}", raw.format_version),
            ));
        }
        if raw.solvers.is_empty() {
            return Err(schema("solvers".into(), "at least one solver required".into()));
        }
        if raw.feature_names.is_empty() {
            return Err(schema("feature_names".into(), "at least one feature required".into()));
        }
        if raw.trees.is_empty() {
            return Err(schema("trees".into(), "at least one tree required".into()));
        }
        let n_out = raw.solvers.len();
        let n_feat = raw.feature_names.len();
        let trees = raw
            .trees
            .into_iter()
            .enumerate()
            .map(|(i, t)| t.into_node(&format!("trees[{i}]"), n_feat, n_out))
            .collect::<Result<Vec<_>, _>>()?;
        Ok(ForestModel {
            roster: raw.solvers,
            feature_names: raw.feature_names,
            seed: raw.seed,
            hyperparameters: raw.hyperparameters,
            trees,
        })
    }
}

#[derive(Serialize)]
struct ModelFileRef<'a> {
    format_version: u32,
    solvers: &'a [SolverId],
    feature_names: &'a [String],
    seed: u64,
    hyperparameters: &'a Hyperparameters,
    trees: &'a [TreeNode],
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct ModelFile {
    format_version: u32,
    solvers: Vec<SolverId>,
    feature_names: Vec<String>,
    seed: u64,
    hyperparameters: Hyperparameters,
    trees: Vec<RawNode>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawNode {
    feature: Option<usize>,
    threshold: Option<f64>,
    left: Option<Box<RawNode>>,
    right: Option<Box<RawNode>>,
    value: Option<Vec<f64>>,
}

impl RawNode {
    fn into_node(self, path: &str, n_feat: usize, n_out: usize) -> Result<TreeNode, ForestError> {
        let err = |message: String| ForestError::Schema {
            path: path.to_string(),
            message,
        };
        match self {
            RawNode {
                feature: None,
                threshold: None,
                left: None,
                right: None,
                value: Some(value),
            } => {
                if value.len() != n_out {
                    return Err(err(format!("leaf has {} values for {n_out} solvers", value.len())));
                }
                if value.iter().any(|v| !v.is_finite()) {
                    return Err(err("leaf value is not finite".into()));
                }
                Ok(TreeNode::Leaf { value })
            }
            RawNode {
                feature: Some(feature),
                threshold: Some(threshold),
                left: Some(left),
                right: Some(right),
                value: None,
            } => {
                if feature >= n_feat {
                    return Err(err(format!("feature {feature} out of range for {n_feat} features")));
                }
                if !threshold.is_finite() {
                    return Err(err("threshold is not finite".into()));
                }
                Ok(TreeNode::Split {
                    feature,
                    threshold,
                    left: Box::new(left.into_node(&format!("{path}.left"), n_feat, n_out)?),
                    right: Box::new(right.into_node(&format!("{path}.right"), n_feat, n_out)?),
                })
            }
            _ => Err(err(
                "node must be either {feature, threshold, left, right} or {value}".into(),
            )),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Fold {
    pub train: Vec<usize>,
    pub validation: Vec<usize>,
}

/// Splits rows into `k` folds by their file key so that no file contributes
/// rows to two folds. Fold sizes (in files) differ by at most one.
pub fn kfold_by_file(files: &[String], k: usize, seed: u64) -> Result<Vec<Fold>, ForestError> {
    let mut keys: Vec<&String> = files.iter().collect::<BTreeSet<_>>().into_iter().collect();
    if k < 2 || keys.len() < k {
        return Err(ForestError::TooFewFiles { k, files: keys.len() });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rand::seq::SliceRandom::shuffle(keys.as_mut_slice(), &mut rng);
    let fold_of: HashMap<&String, usize> = keys.iter().enumerate().map(|(i, f)| (*f, i % k)).collect();
    Ok((0..k)
        .map(|fold| {
            let (validation, train): (Vec<usize>, Vec<usize>) =
                (0..files.len()).partition(|&i| fold_of[&files[i]] == fold);
            Fold { train, validation }
        })
        .collect())
}

pub fn kfold_splits(ts: &TrainingSet, k: usize, seed: u64) -> Result<Vec<Fold>, ForestError> {
    let files: Vec<String> = ts.rows.iter().map(|r| r.file.clone()).collect();
    kfold_by_file(&files, k, seed)
}
