//! Random forest of binary CART trees over sparse features.
//!
//! Trees split on `value <= threshold` (left) with thresholds at midpoints
//! between consecutive distinct values of a feature in the node; absent
//! sparse entries take part as value 0. Splits maximize the weighted Gini
//! decrease. Each tree trains on a bootstrap resample with its own seed
//! derived from the forest seed and the tree index (see
//! [`crate::rng::derive_seed`]), so trees can be grown in any order or in
//! parallel with identical results.

use rand::seq::index;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::{self, SeededRng};
use crate::tfidf::SparseVector;

pub const FORMAT_VERSION: u32 = 1;

/// Gains closer than this are treated as ties.
const TIE_EPS: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MaxFeatures {
    /// `ceil(sqrt(n_features))`
    #[default]
    Sqrt,
    All,
    Count(usize),
}

impl MaxFeatures {
    pub fn resolve(self, n_features: usize) -> usize {
        match self {
            MaxFeatures::Sqrt => ceil_sqrt(n_features),
            MaxFeatures::All => n_features,
            MaxFeatures::Count(k) => k.min(n_features),
        }
        .max(1)
    }
}

fn ceil_sqrt(n: usize) -> usize {
    let mut s = (n as f64).sqrt().ceil() as usize;
    while s * s < n {
        s += 1;
    }
    while s > 0 && (s - 1) * (s - 1) >= n {
        s -= 1;
    }
    s
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ForestTrainConfig {
    pub n_estimators: usize,
    pub bootstrap: bool,
    pub max_depth: Option<usize>,
    pub min_samples_leaf: usize,
    pub max_features: MaxFeatures,
    pub seed: u64,
}

impl Default for ForestTrainConfig {
    fn default() -> Self {
        ForestTrainConfig {
            n_estimators: 100,
            bootstrap: true,
            max_depth: None,
            min_samples_leaf: 1,
            max_features: MaxFeatures::Sqrt,
            seed: 0,
        }
    }
}

impl ForestTrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_estimators == 0 {
            return Err(Error::invalid("n_estimators must be at least 1"));
        }
        if self.min_samples_leaf == 0 {
            return Err(Error::invalid("min_samples_leaf must be at least 1"));
        }
        if self.max_features == MaxFeatures::Count(0) {
            return Err(Error::invalid("max_features must be at least 1"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TreeNode {
    Split {
        feature: usize,
        threshold: f64,
        left: Box<TreeNode>,
        right: Box<TreeNode>,
    },
    Leaf {
        class_counts: [u64; 2],
    },
}

impl TreeNode {
    /// Follows `x` down to its leaf.
    pub fn leaf_for(&self, x: &SparseVector) -> [u64; 2] {
        let mut node = self;
        loop {
            match node {
                TreeNode::Leaf { class_counts } => return *class_counts,
                TreeNode::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => node = if x.get(*feature) <= *threshold { left } else { right },
            }
        }
    }

    /// Positive fraction of the leaf `x` reaches.
    pub fn proba(&self, x: &SparseVector) -> f64 {
        let [neg, pos] = self.leaf_for(x);
        pos as f64 / (neg + pos) as f64
    }

    pub fn depth(&self) -> usize {
        match self {
            TreeNode::Leaf { .. } => 0,
            TreeNode::Split { left, right, .. } => 1 + left.depth().max(right.depth()),
        }
    }

    pub fn n_leaves(&self) -> usize {
        match self {
            TreeNode::Leaf { .. } => 1,
            TreeNode::Split { left, right, .. } => left.n_leaves() + right.n_leaves(),
        }
    }

    fn validate(&self, n_features: usize) -> Result<()> {
        let mut stack = vec![self];
        while let Some(node) = stack.pop() {
            match node {
                TreeNode::Leaf { class_counts } => {
                    if class_counts[0] + class_counts[1] == 0 {
                        return Err(Error::Format("leaf with no samples".into()));
                    }
                }
                TreeNode::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => {
                    if *feature >= n_features || !threshold.is_finite() {
                        return Err(Error::Format(format!(
                            "bad split on feature {feature} at {threshold}"
                        )));
                    }
                    stack.push(left);
                    stack.push(right);
                }
            }
        }
        Ok(())
    }
}

/// `1 - sum(p_i^2)` over the two class proportions.
pub fn gini(class_counts: [u64; 2]) -> Result<f64> {
    let total = class_counts[0] + class_counts[1];
    if total == 0 {
        return Err(Error::invalid("gini of an empty node"));
    }
    Ok(gini_unchecked(class_counts))
}

fn gini_unchecked([neg, pos]: [u64; 2]) -> f64 {
    let total = (neg + pos) as f64;
    let p0 = neg as f64 / total;
    let p1 = pos as f64 / total;
    1.0 - (p0 * p0 + p1 * p1)
}

/// Weighted Gini decrease of splitting `parent` into `left` and the rest.
fn gini_decrease(parent: [u64; 2], left: [u64; 2]) -> f64 {
    let right = [parent[0] - left[0], parent[1] - left[1]];
    let n = (parent[0] + parent[1]) as f64;
    let nl = (left[0] + left[1]) as f64;
    let nr = (right[0] + right[1]) as f64;
    gini_unchecked(parent) - (nl / n) * gini_unchecked(left) - (nr / n) * gini_unchecked(right)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Split {
    pub feature: usize,
    pub threshold: f64,
    pub impurity_decrease: f64,
}

/// Row-major training rows plus a column-major copy for split search.
pub struct TrainingSet<'a> {
    rows: &'a [SparseVector],
    labels: &'a [u8],
    columns: Vec<Vec<(usize, f64)>>,
    n_features: usize,
}

impl<'a> TrainingSet<'a> {
    pub fn new(rows: &'a [SparseVector], labels: &'a [u8], n_features: usize) -> Result<Self> {
        if rows.len() != labels.len() {
            return Err(Error::Dimension(format!(
                "{} rows but {} labels",
                rows.len(),
                labels.len()
            )));
        }
        if rows.is_empty() {
            return Err(Error::invalid("empty training set"));
        }
        if let Some(&bad) = labels.iter().find(|&&l| l > 1) {
            return Err(Error::invalid(format!("label {bad} is not binary")));
        }
        let mut columns = vec![Vec::new(); n_features];
        for (r, row) in rows.iter().enumerate() {
            for (j, v) in row.iter() {
                let col = columns.get_mut(j).ok_or_else(|| {
                    Error::Dimension(format!("feature index {j} out of range for {n_features} features"))
                })?;
                col.push((r, v));
            }
        }
        Ok(TrainingSet {
            rows,
            labels,
            columns,
            n_features,
        })
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn n_features(&self) -> usize {
        self.n_features
    }

    fn class_counts(&self, rows: &[usize]) -> [u64; 2] {
        let mut c = [0u64; 2];
        for &r in rows {
            c[self.labels[r] as usize] += 1;
        }
        c
    }
}

/// Per-tree work buffers.
struct Scratch {
    multiplicity: Vec<u32>,
    seen_stamp: Vec<u32>,
    stamp: u32,
}

impl Scratch {
    fn new(data: &TrainingSet) -> Self {
        Scratch {
            multiplicity: vec![0; data.len()],
            seen_stamp: vec![0; data.n_features],
            stamp: 0,
        }
    }

    /// Sorted features with at least one non-zero value among `rows`.
    fn present_features(&mut self, data: &TrainingSet, rows: &[usize]) -> Vec<usize> {
        self.stamp = self.stamp.wrapping_add(1);
        if self.stamp == 0 {
            self.seen_stamp.iter_mut().for_each(|s| *s = 0);
            self.stamp = 1;
        }
        let mut present = Vec::new();
        for &r in rows {
            for &j in data.rows[r].indices() {
                if self.seen_stamp[j] != self.stamp {
                    self.seen_stamp[j] = self.stamp;
                    present.push(j);
                }
            }
        }
        present.sort_unstable();
        present
    }
}

/// Best split over `candidates`, including splits that do not lower the
/// impurity. Ties within [`TIE_EPS`] go to the lowest feature, then the
/// lowest threshold.
fn search_splits(
    data: &TrainingSet,
    rows: &[usize],
    candidates: &[usize],
    min_samples_leaf: usize,
    scratch: &mut Scratch,
) -> Option<Split> {
    let parent = data.class_counts(rows);
    let total = parent[0] + parent[1];
    let min_leaf = min_samples_leaf as u64;
    for &r in rows {
        scratch.multiplicity[r] += 1;
    }

    let mut sorted_candidates = candidates.to_vec();
    sorted_candidates.sort_unstable();
    sorted_candidates.dedup();

    let mut best: Option<Split> = None;
    let mut groups: Vec<(f64, [u64; 2])> = Vec::new();
    for &feature in &sorted_candidates {
        groups.clear();
        let mut nonzero = [0u64; 2];
        for &(r, v) in &data.columns[feature] {
            let m = scratch.multiplicity[r] as u64;
            if m > 0 {
                let mut c = [0u64; 2];
                c[data.labels[r] as usize] = m;
                nonzero[0] += c[0];
                nonzero[1] += c[1];
                groups.push((v, c));
            }
        }
        let zeros = [parent[0] - nonzero[0], parent[1] - nonzero[1]];
        if zeros[0] + zeros[1] > 0 {
            groups.push((0.0, zeros));
        }
        groups.sort_unstable_by(|a, b| a.0.total_cmp(&b.0));

        let mut left = [0u64; 2];
        let mut i = 0;
        while i < groups.len() {
            let value = groups[i].0;
            while i < groups.len() && groups[i].0 == value {
                left[0] += groups[i].1[0];
                left[1] += groups[i].1[1];
                i += 1;
            }
            if i == groups.len() {
                break;
            }
            let n_left = left[0] + left[1];
            if n_left < min_leaf || total - n_left < min_leaf {
                continue;
            }
            let gain = gini_decrease(parent, left);
            if best.is_none_or(|b| gain > b.impurity_decrease + TIE_EPS) {
                best = Some(Split {
                    feature,
                    threshold: 0.5 * (value + groups[i].0),
                    impurity_decrease: gain,
                });
            }
        }
    }

    for &r in rows {
        scratch.multiplicity[r] = 0;
    }
    best
}

/// The split among `candidate_features` with the largest weighted Gini
/// decrease, or `None` when no split lowers the impurity. `rows` may repeat
/// indices (bootstrap multiplicity).
pub fn best_split(data: &TrainingSet, rows: &[usize], candidate_features: &[usize]) -> Option<Split> {
    best_split_with_min_leaf(data, rows, candidate_features, 1)
}

pub fn best_split_with_min_leaf(
    data: &TrainingSet,
    rows: &[usize],
    candidate_features: &[usize],
    min_samples_leaf: usize,
) -> Option<Split> {
    if rows.len() < 2 {
        return None;
    }
    let mut scratch = Scratch::new(data);
    search_splits(data, rows, candidate_features, min_samples_leaf, &mut scratch)
        .filter(|s| s.impurity_decrease > TIE_EPS)
}

struct Grower<'a, 'd> {
    data: &'a TrainingSet<'d>,
    config: &'a ForestTrainConfig,
    scratch: Scratch,
    rng: SeededRng,
}

impl Grower<'_, '_> {
    fn grow(&mut self, rows: Vec<usize>, depth: usize) -> TreeNode {
        let counts = self.data.class_counts(&rows);
        let leaf = TreeNode::Leaf { class_counts: counts };
        let pure = counts[0] == 0 || counts[1] == 0;
        if pure
            || rows.len() < 2 * self.config.min_samples_leaf
            || self.config.max_depth.is_some_and(|d| depth >= d)
        {
            return leaf;
        }

        let present = self.scratch.present_features(self.data, &rows);
        let k = self.config.max_features.resolve(self.data.n_features);
        let candidates = if k >= present.len() {
            present
        } else {
            let mut picked: Vec<usize> = index::sample(&mut self.rng, present.len(), k)
                .into_iter()
                .map(|i| present[i])
                .collect();
            picked.sort_unstable();
            picked
        };

        // An impure node keeps splitting even when the best available split
        // has zero gain (e.g. XOR patterns); it only stops when every
        // candidate feature is constant over its rows.
        let Some(split) = search_splits(
            self.data,
            &rows,
            &candidates,
            self.config.min_samples_leaf,
            &mut self.scratch,
        ) else {
            return leaf;
        };

        let (left, right): (Vec<usize>, Vec<usize>) = rows
            .into_iter()
            .partition(|&r| self.data.rows[r].get(split.feature) <= split.threshold);
        TreeNode::Split {
            feature: split.feature,
            threshold: split.threshold,
            left: Box::new(self.grow(left, depth + 1)),
            right: Box::new(self.grow(right, depth + 1)),
        }
    }
}

/// Grows one tree from `rows`. All randomness (candidate features per node)
/// comes from one generator seeded with `tree_seed`, advanced depth-first.
pub fn grow_tree(data: &TrainingSet, rows: &[usize], config: &ForestTrainConfig, tree_seed: u64) -> Result<TreeNode> {
    if rows.is_empty() {
        return Err(Error::invalid("cannot grow a tree from zero rows"));
    }
    config.validate()?;
    let mut grower = Grower {
        data,
        config,
        scratch: Scratch::new(data),
        rng: rng::seeded(tree_seed),
    };
    Ok(grower.grow(rows.to_vec(), 0))
}

fn train_one(data: &TrainingSet, config: &ForestTrainConfig, tree_index: usize) -> TreeNode {
    let mut rng = rng::seeded(rng::derive_seed(config.seed, tree_index as u64));
    let n = data.len();
    let rows: Vec<usize> = if config.bootstrap {
        (0..n).map(|_| rng.gen_range(0..n)).collect()
    } else {
        (0..n).collect()
    };
    let mut grower = Grower {
        data,
        config,
        scratch: Scratch::new(data),
        rng,
    };
    grower.grow(rows, 0)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Execution {
    #[default]
    Parallel,
    Sequential,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PredictMode {
    Vote,
    #[default]
    MeanProba,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RandomForest {
    config: ForestTrainConfig,
    n_features: usize,
    trees: Vec<TreeNode>,
}

pub fn train_forest(
    x: &[SparseVector],
    y: &[u8],
    n_features: usize,
    config: &ForestTrainConfig,
) -> Result<RandomForest> {
    train_forest_with(x, y, n_features, config, Execution::Parallel)
}

pub fn train_forest_with(
    x: &[SparseVector],
    y: &[u8],
    n_features: usize,
    config: &ForestTrainConfig,
    execution: Execution,
) -> Result<RandomForest> {
    config.validate()?;
    let data = TrainingSet::new(x, y, n_features)?;
    let trees = match execution {
        Execution::Parallel => (0..config.n_estimators)
            .into_par_iter()
            .map(|i| train_one(&data, config, i))
            .collect(),
        Execution::Sequential => (0..config.n_estimators)
            .map(|i| train_one(&data, config, i))
            .collect(),
    };
    Ok(RandomForest {
        config: config.clone(),
        n_features,
        trees,
    })
}

impl RandomForest {
    pub fn from_trees(config: ForestTrainConfig, n_features: usize, trees: Vec<TreeNode>) -> Result<Self> {
        if trees.is_empty() {
            return Err(Error::invalid("a forest needs at least one tree"));
        }
        for t in &trees {
            t.validate(n_features)?;
        }
        Ok(RandomForest {
            config,
            n_features,
            trees,
        })
    }

    pub fn trees(&self) -> &[TreeNode] {
        &self.trees
    }

    pub fn config(&self) -> &ForestTrainConfig {
        &self.config
    }

    pub fn n_features(&self) -> usize {
        self.n_features
    }

    /// `(label, probability)`. Mean mode averages leaf positive fractions
    /// and labels positive at 0.5 or above; vote mode reports the share of
    /// trees whose leaf majority is positive (a tied leaf votes positive) and
    /// labels positive on at least half the votes.
    pub fn predict(&self, x: &SparseVector, mode: PredictMode) -> Result<(u8, f64)> {
        if let Some(i) = x.max_index().filter(|&i| i >= self.n_features) {
            return Err(Error::Dimension(format!(
                "feature index {i} out of range for {} features",
                self.n_features
            )));
        }
        let n = self.trees.len() as f64;
        let p = match mode {
            PredictMode::MeanProba => self.trees.iter().map(|t| t.proba(x)).sum::<f64>() / n,
            PredictMode::Vote => {
                self.trees
                    .iter()
                    .filter(|t| {
                        let [neg, pos] = t.leaf_for(x);
                        pos >= neg
                    })
                    .count() as f64
                    / n
            }
        };
        Ok(((p >= 0.5) as u8, p))
    }

    pub fn predict_proba(&self, x: &SparseVector) -> Result<f64> {
        self.predict(x, PredictMode::MeanProba).map(|(_, p)| p)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(&ForestFileRef {
            format_version: FORMAT_VERSION,
            model_type: "random_forest",
            n_features: self.n_features,
            config: &self.config,
            trees: &self.trees,
        })?)
    }

    pub fn from_json(json: &str) -> Result<Self> {
        let mut de = serde_json::Deserializer::from_str(json);
        de.disable_recursion_limit();
        let file = ForestFile::deserialize(&mut de)?;
        de.end()?;
        if file.format_version != FORMAT_VERSION || file.model_type != "random_forest" {
            return Err(Error::Format(format!(
                "expected random_forest format_version {FORMAT_VERSION}, found {} v{}",
                file.model_type, file.format_version
            )));
        }
        if file.trees.len() != file.config.n_estimators {
            return Err(Error::Format(format!(
                "config says {} trees, file holds {}",
                file.config.n_estimators,
                file.trees.len()
            )));
        }
        RandomForest::from_trees(file.config, file.n_features, file.trees)
    }
}

#[derive(Serialize)]
struct ForestFileRef<'a> {
    format_version: u32,
    model_type: &'a str,
    n_features: usize,
    config: &'a ForestTrainConfig,
    trees: &'a [TreeNode],
}

#[derive(Deserialize)]
struct ForestFile {
    format_version: u32,
    model_type: String,
    n_features: usize,
    config: ForestTrainConfig,
    trees: Vec<TreeNode>,
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rows_1d(values: &[f64]) -> Vec<SparseVector> {
        values.iter().map(|&v| SparseVector::from_dense(&[v])).collect()
    }

    #[test]
    fn gini_values() {
        assert_eq!(gini([10, 0]).unwrap(), 0.0);
        assert_eq!(gini([5, 5]).unwrap(), 0.5);
        assert!((gini([3, 1]).unwrap() - 0.375).abs() < 1e-15);
        assert!(gini([0, 0]).is_err());
    }

    #[test]
    fn ceil_sqrt_values() {
        let cases = [(1, 1), (2, 2), (4, 2), (5, 3), (9, 3), (10, 4), (100, 10), (101, 11)];
        for (n, want) in cases {
            assert_eq!(ceil_sqrt(n), want, "{n}");
        }
        assert_eq!(MaxFeatures::Count(50).resolve(10), 10);
    }

    #[test]
    fn two_point_split() {
        let x = rows_1d(&[0.0, 1.0]);
        let y = [0, 1];
        let data = TrainingSet::new(&x, &y, 1).unwrap();
        let s = best_split(&data, &[0, 1], &[0]).unwrap();
        assert_eq!(s.feature, 0);
        assert_eq!(s.threshold, 0.5);
        assert_eq!(s.impurity_decrease, 0.5);
    }

    #[test]
    fn pure_rows_have_no_split() {
        let x = rows_1d(&[0.0, 1.0, 2.0]);
        let y = [1, 1, 1];
        let data = TrainingSet::new(&x, &y, 1).unwrap();
        assert!(best_split(&data, &[0, 1, 2], &[0]).is_none());
    }

    #[test]
    fn negative_values_sort_before_zero() {
        let x = rows_1d(&[-1.0, 0.0, 0.0, 2.0]);
        let y = [1, 0, 0, 0];
        let data = TrainingSet::new(&x, &y, 1).unwrap();
        let s = best_split(&data, &[0, 1, 2, 3], &[0]).unwrap();
        assert_eq!(s.threshold, -0.5);
    }

    #[test]
    fn single_row_and_pure_trees_are_leaves() {
        let x = rows_1d(&[1.0, 2.0, 3.0]);
        let y = [1, 1, 1];
        let data = TrainingSet::new(&x, &y, 1).unwrap();
        let cfg = ForestTrainConfig::default();
        assert_eq!(grow_tree(&data, &[2], &cfg, 0).unwrap(), TreeNode::Leaf { class_counts: [0, 1] });
        assert_eq!(grow_tree(&data, &[0, 1, 2], &cfg, 0).unwrap(), TreeNode::Leaf { class_counts: [0, 3] });
    }

    #[test]
    fn xor_is_fit_through_zero_gain_split() {
        let x: Vec<_> = [[0.0, 0.0], [1.0, 1.0], [0.0, 1.0], [1.0, 0.0]]
            .iter()
            .map(|d| SparseVector::from_dense(d))
            .collect();
        let y = [0, 0, 1, 1];
        let data = TrainingSet::new(&x, &y, 2).unwrap();
        assert!(best_split(&data, &[0, 1, 2, 3], &[0, 1]).is_none());
        let cfg = ForestTrainConfig {
            max_features: MaxFeatures::All,
            ..ForestTrainConfig::default()
        };
        let tree = grow_tree(&data, &[0, 1, 2, 3], &cfg, 0).unwrap();
        for (xi, &yi) in x.iter().zip(&y) {
            assert_eq!(tree.proba(xi), yi as f64);
        }
    }

    #[test]
    fn forest_probability_arithmetic() {
        let leaf = |neg, pos| TreeNode::Leaf { class_counts: [neg, pos] };
        let cfg = ForestTrainConfig {
            n_estimators: 3,
            ..ForestTrainConfig::default()
        };
        let f = RandomForest::from_trees(cfg.clone(), 1, vec![leaf(0, 7); 3]).unwrap();
        assert_eq!(f.predict(&SparseVector::default(), PredictMode::MeanProba).unwrap(), (1, 1.0));

        let f = RandomForest::from_trees(cfg.clone(), 1, vec![leaf(4, 1), leaf(2, 3)]).unwrap();
        let (label, p) = f.predict(&SparseVector::default(), PredictMode::MeanProba).unwrap();
        assert!((p - 0.4).abs() < 1e-15);
        assert_eq!(label, 0);
        // Vote: tree 2 votes positive, tree 1 negative; a 1-1 split is positive.
        assert_eq!(f.predict(&SparseVector::default(), PredictMode::Vote).unwrap(), (1, 0.5));

        let f = RandomForest::from_trees(cfg, 1, vec![leaf(1, 1), leaf(3, 1), leaf(3, 1)]).unwrap();
        assert_eq!(f.predict(&SparseVector::default(), PredictMode::Vote).unwrap().0, 0);
        assert!(f.predict(&SparseVector::from_dense(&[0.0, 1.0]), PredictMode::Vote).is_err());
    }

    #[test]
    fn config_validation() {
        let bad = ForestTrainConfig {
            n_estimators: 0,
            ..ForestTrainConfig::default()
        };
        assert!(bad.validate().is_err());
        assert!(ForestTrainConfig {
            min_samples_leaf: 0,
            ..ForestTrainConfig::default()
        }
        .validate()
        .is_err());
    }

    #[test]
    fn min_samples_leaf_is_respected() {
        let x = rows_1d(&[1.0, 2.0, 3.0, 4.0, 5.0, 6.0]);
        let y = [1, 0, 0, 0, 0, 0];
        let data = TrainingSet::new(&x, &y, 1).unwrap();
        let all: Vec<usize> = (0..6).collect();
        assert_eq!(best_split(&data, &all, &[0]).unwrap().threshold, 1.5);
        let s = best_split_with_min_leaf(&data, &all, &[0], 2).unwrap();
        assert_eq!(s.threshold, 2.5);
    }
}
