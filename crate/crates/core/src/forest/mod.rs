//! Random-forest classifier (CART trees on Gini impurity) with impurity-based
//! feature importance, multi-seed rank aggregation and a top-K sweep.
//!
//! Every tree draws from its own ChaCha8 stream (`seed`, stream = tree index),
//! so a forest is a pure function of data, parameters and seed regardless of
//! how rayon schedules the trees.

mod ranking;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::features::FeatureTable;

pub use ranking::{aggregate_ranks, aggregate_ranks_prepared, top_k_sweep, FeatureRanking, KSweep};

pub const MODEL_FORMAT: &str = "radlung-forest";
pub const MODEL_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum ForestError {
    #[error("training labels contain a single class")]
    SingleClass,
    #[error("missing value at row {row}, column {col}")]
    MissingValues { row: usize, col: usize },
    #[error("expected {expected} features, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("invalid parameters: {0}")]
    InvalidParams(String),
    #[error("need at least 2 samples")]
    TooFewSamples,
    #[error("unsupported model format {0:?} version {1}")]
    UnsupportedModel(String, u32),
    #[error("model json: {0}")]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Eval(#[from] Box<crate::eval::EvalError>),
}

pub type Result<T> = std::result::Result<T, ForestError>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ClassWeight {
    #[default]
    None,
    /// Each class weighted by `n / (2 n_class)`.
    Balanced,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ForestParams {
    pub n_trees: usize,
    pub max_depth: Option<usize>,
    pub min_samples_leaf: usize,
    /// Features tried per split; `None` means `ceil(sqrt(d))`.
    pub mtry: Option<usize>,
    pub bootstrap: bool,
    pub class_weight: ClassWeight,
    pub seed: u64,
}

impl Default for ForestParams {
    fn default() -> Self {
        Self {
            n_trees: 100,
            max_depth: None,
            min_samples_leaf: 1,
            mtry: None,
            bootstrap: true,
            class_weight: ClassWeight::None,
            seed: 0,
        }
    }
}

impl ForestParams {
    pub fn resolved_mtry(&self, d: usize) -> usize {
        self.mtry
            .unwrap_or_else(|| (d as f64).sqrt().ceil() as usize)
            .clamp(1, d.max(1))
    }

    fn validate(&self, d: usize) -> Result<()> {
        if self.n_trees == 0 {
            return Err(ForestError::InvalidParams("n_trees must be >= 1".into()));
        }
        if self.min_samples_leaf == 0 {
            return Err(ForestError::InvalidParams("min_samples_leaf must be >= 1".into()));
        }
        if let Some(m) = self.mtry {
            if m == 0 || m > d {
                return Err(ForestError::InvalidParams(format!("mtry {m} outside 1..={d}")));
            }
        }
        Ok(())
    }
}

/// Column-major numeric matrix with feature names.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub n_rows: usize,
    pub n_cols: usize,
    pub names: Vec<String>,
    cols: Vec<f64>,
}

impl Dataset {
    /// From row-major values.
    pub fn from_rows(n_rows: usize, n_cols: usize, rows: &[f64], names: Vec<String>) -> Result<Self> {
        if rows.len() != n_rows * n_cols || names.len() != n_cols {
            return Err(ForestError::DimensionMismatch {
                expected: n_rows * n_cols,
                got: rows.len(),
            });
        }
        let mut cols = vec![0.0; rows.len()];
        for r in 0..n_rows {
            for c in 0..n_cols {
                let x = rows[r * n_cols + c];
                if !x.is_finite() {
                    return Err(ForestError::MissingValues { row: r, col: c });
                }
                cols[c * n_rows + r] = x;
            }
        }
        Ok(Self {
            n_rows,
            n_cols,
            names,
            cols,
        })
    }

    pub fn from_table(t: &FeatureTable) -> Result<Self> {
        Self::from_rows(t.n_rows(), t.n_cols(), &t.values, t.names.clone())
    }

    #[inline]
    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.cols[col * self.n_rows + row]
    }

    pub fn column(&self, col: usize) -> &[f64] {
        &self.cols[col * self.n_rows..(col + 1) * self.n_rows]
    }

    pub fn row(&self, row: usize) -> Vec<f64> {
        (0..self.n_cols).map(|c| self.get(row, c)).collect()
    }

    pub fn select(&self, rows: &[usize], cols: &[usize]) -> Dataset {
        let mut out = Vec::with_capacity(rows.len() * cols.len());
        for &c in cols {
            let col = self.column(c);
            out.extend(rows.iter().map(|&r| col[r]));
        }
        Dataset {
            n_rows: rows.len(),
            n_cols: cols.len(),
            names: cols.iter().map(|&c| self.names[c].clone()).collect(),
            cols: out,
        }
    }
}

/// Dense per-feature ranks of distinct values, computed once and shared by
/// every tree trained on the same data.
#[derive(Debug, Clone)]
pub struct Presorted {
    ranks: Vec<u32>,
    uniq: Vec<Vec<f64>>,
    n_rows: usize,
}

impl Presorted {
    pub fn new(data: &Dataset) -> Self {
        let n = data.n_rows;
        let mut ranks = vec![0u32; n * data.n_cols];
        let mut uniq = Vec::with_capacity(data.n_cols);
        let mut order: Vec<usize> = Vec::with_capacity(n);
        for c in 0..data.n_cols {
            let col = data.column(c);
            order.clear();
            order.extend(0..n);
            order.sort_by(|&a, &b| col[a].total_cmp(&col[b]));
            let mut u: Vec<f64> = Vec::new();
            for &i in &order {
                if u.last() != Some(&col[i]) {
                    u.push(col[i]);
                }
                ranks[c * n + i] = (u.len() - 1) as u32;
            }
            uniq.push(u);
        }
        Self { ranks, uniq, n_rows: n }
    }

    #[inline]
    fn rank(&self, col: usize, row: usize) -> u32 {
        self.ranks[col * self.n_rows + row]
    }

    /// Midpoint between the values of ranks `lo < hi`, never rounding up
    /// onto the larger value.
    fn threshold(&self, col: usize, lo: u32, hi: u32) -> f64 {
        let a = self.uniq[col][lo as usize];
        let b = self.uniq[col][hi as usize];
        let mid = a / 2.0 + b / 2.0;
        if mid < b {
            mid
        } else {
            a
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Node {
    /// Rows with `x[feature] <= threshold` go left.
    Split {
        feature: usize,
        threshold: f64,
        left: usize,
        right: usize,
    },
    /// Class probabilities `[p0, p1]`.
    Leaf { proba: [f64; 2] },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tree {
    pub nodes: Vec<Node>,
}

impl Tree {
    pub fn predict_row(&self, x: &[f64]) -> f64 {
        let mut i = 0;
        loop {
            match self.nodes[i] {
                Node::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => i = if x[feature] <= threshold { left } else { right },
                Node::Leaf { proba } => return proba[1],
            }
        }
    }

    pub fn depth(&self) -> usize {
        fn go(t: &Tree, i: usize) -> usize {
            match t.nodes[i] {
                Node::Split { left, right, .. } => 1 + go(t, left).max(go(t, right)),
                Node::Leaf { .. } => 0,
            }
        }
        go(self, 0)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RandomForest {
    pub format: String,
    pub version: u32,
    pub params: ForestParams,
    pub feature_names: Vec<String>,
    pub trees: Vec<Tree>,
    /// Mean over trees of the weighted impurity decrease per feature, before
    /// normalisation.
    pub raw_importance: Vec<f64>,
}

fn gini_times_weight(c: [f64; 2]) -> f64 {
    let w = c[0] + c[1];
    if w <= 0.0 {
        0.0
    } else {
        2.0 * c[0] * c[1] / w
    }
}

struct Builder<'a> {
    pre: &'a Presorted,
    data: &'a Dataset,
    y: &'a [u8],
    cw: [f64; 2],
    params: &'a ForestParams,
    mtry: usize,
    rng: ChaCha8Rng,
    nodes: Vec<Node>,
    importance: Vec<f64>,
    root_weight: f64,
    feature_pool: Vec<usize>,
    keys: Vec<u64>,
}

enum Scan {
    Constant,
    NoCut,
    /// Score and the ranks on either side of the cut.
    Cut(f64, u32, u32),
}

struct Best {
    score: f64,
    feature: usize,
    lo: u32,
    hi: u32,
}

impl Builder<'_> {
    fn class_weights(&self, samples: &[(u32, u32)]) -> ([f64; 2], usize) {
        let mut c = [0.0; 2];
        let mut n = 0usize;
        for &(i, m) in samples {
            let k = self.y[i as usize] as usize;
            c[k] += m as f64 * self.cw[k];
            n += m as usize;
        }
        (c, n)
    }

    fn leaf(&mut self, c: [f64; 2]) -> usize {
        let w = c[0] + c[1];
        let p1 = if w > 0.0 { c[1] / w } else { 0.0 };
        self.nodes.push(Node::Leaf {
            proba: [1.0 - p1, p1],
        });
        self.nodes.len() - 1
    }

    /// Best split of one feature: lowest weighted child impurity, first
    /// (lowest) threshold on ties.
    fn scan_feature(&mut self, f: usize, samples: &[(u32, u32)], total: [f64; 2], n: usize) -> Scan {
        self.keys.clear();
        for (j, &(i, _)) in samples.iter().enumerate() {
            self.keys.push(((self.pre.rank(f, i as usize) as u64) << 32) | j as u64);
        }
        self.keys.sort_unstable();
        let first = (self.keys[0] >> 32) as u32;
        let last = (self.keys[self.keys.len() - 1] >> 32) as u32;
        if first == last {
            return Scan::Constant;
        }
        let min_leaf = self.params.min_samples_leaf;
        let mut left = [0.0; 2];
        let mut n_left = 0usize;
        let mut best: Option<(f64, u32, u32)> = None;
        for w in 0..self.keys.len() - 1 {
            let (i, m) = samples[(self.keys[w] & 0xffff_ffff) as usize];
            let k = self.y[i as usize] as usize;
            left[k] += m as f64 * self.cw[k];
            n_left += m as usize;
            let r = (self.keys[w] >> 32) as u32;
            let next = (self.keys[w + 1] >> 32) as u32;
            if r == next {
                continue;
            }
            if n_left < min_leaf || n - n_left < min_leaf {
                continue;
            }
            let right = [total[0] - left[0], total[1] - left[1]];
            let score = gini_times_weight(left) + gini_times_weight(right);
            if best.is_none_or(|(b, _, _)| score < b) {
                best = Some((score, r, next));
            }
        }
        match best {
            Some((score, lo, hi)) => Scan::Cut(score, lo, hi),
            None => Scan::NoCut,
        }
    }

    fn grow(&mut self, samples: Vec<(u32, u32)>, depth: usize) -> usize {
        let (c, n) = self.class_weights(&samples);
        let pure = c[0] == 0.0 || c[1] == 0.0;
        let at_depth = self.params.max_depth.is_some_and(|d| depth >= d);
        if pure || at_depth || n < 2 * self.params.min_samples_leaf {
            return self.leaf(c);
        }

        // Draw features without replacement until `mtry` non-constant ones
        // have been scanned.
        let d = self.data.n_cols;
        let mut best: Option<Best> = None;
        let mut scanned = 0;
        for drawn in 0..d {
            if scanned == self.mtry {
                break;
            }
            let j = self.rng.random_range(drawn..d);
            self.feature_pool.swap(drawn, j);
            let f = self.feature_pool[drawn];
            let (score, lo, hi) = match self.scan_feature(f, &samples, c, n) {
                // constant features do not count towards mtry
                Scan::Constant => continue,
                Scan::NoCut => {
                    scanned += 1;
                    continue;
                }
                Scan::Cut(score, lo, hi) => (score, lo, hi),
            };
            scanned += 1;
            let better = match &best {
                None => true,
                Some(b) => score < b.score || (score == b.score && f < b.feature),
            };
            if better {
                best = Some(Best {
                    score,
                    feature: f,
                    lo,
                    hi,
                });
            }
        }
        let Some(best) = best else {
            return self.leaf(c);
        };

        let (mut ls, mut rs) = (Vec::new(), Vec::new());
        for &s in &samples {
            if self.pre.rank(best.feature, s.0 as usize) <= best.lo {
                ls.push(s);
            } else {
                rs.push(s);
            }
        }
        let (cl, _) = self.class_weights(&ls);
        let (cr, _) = self.class_weights(&rs);
        // (w / W) (G - wl/w Gl - wr/w Gr) = (w G - wl Gl - wr Gr) / W
        let gain = (gini_times_weight(c) - gini_times_weight(cl) - gini_times_weight(cr)) / self.root_weight;
        self.importance[best.feature] += gain.max(0.0);

        let id = self.nodes.len();
        self.nodes.push(Node::Leaf { proba: [0.0; 2] });
        drop(samples);
        let left = self.grow(ls, depth + 1);
        let right = self.grow(rs, depth + 1);
        self.nodes[id] = Node::Split {
            feature: best.feature,
            threshold: self.pre.threshold(best.feature, best.lo, best.hi),
            left,
            right,
        };
        id
    }
}

/// Bootstrap multiplicities for tree `tree_idx`: `n` draws with replacement
/// from the tree's own stream (all ones without bootstrap).
pub fn bootstrap_counts(n: usize, seed: u64, tree_idx: u64, bootstrap: bool) -> (Vec<u32>, ChaCha8Rng) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(tree_idx);
    let mut counts = vec![0u32; n];
    if bootstrap {
        for _ in 0..n {
            counts[rng.random_range(0..n)] += 1;
        }
    } else {
        counts.fill(1);
    }
    (counts, rng)
}

fn class_weights(y: &[u8], cw: ClassWeight) -> [f64; 2] {
    match cw {
        ClassWeight::None => [1.0, 1.0],
        ClassWeight::Balanced => {
            let n1 = y.iter().filter(|&&v| v == 1).count() as f64;
            let n0 = y.len() as f64 - n1;
            let n = y.len() as f64;
            [n / (2.0 * n0), n / (2.0 * n1)]
        }
    }
}

fn check_labels(y: &[u8], n: usize) -> Result<()> {
    if y.len() != n {
        return Err(ForestError::DimensionMismatch {
            expected: n,
            got: y.len(),
        });
    }
    if n < 2 {
        return Err(ForestError::TooFewSamples);
    }
    if let Some(bad) = y.iter().find(|&&v| v > 1) {
        return Err(ForestError::InvalidParams(format!("label {bad} is not 0/1")));
    }
    if y.iter().all(|&v| v == y[0]) {
        return Err(ForestError::SingleClass);
    }
    Ok(())
}

pub fn train_forest(data: &Dataset, y: &[u8], params: &ForestParams) -> Result<RandomForest> {
    train_forest_prepared(data, &Presorted::new(data), y, params)
}

/// As [`train_forest`] with ranks precomputed by the caller.
pub fn train_forest_prepared(
    data: &Dataset,
    pre: &Presorted,
    y: &[u8],
    params: &ForestParams,
) -> Result<RandomForest> {
    check_labels(y, data.n_rows)?;
    if data.n_cols == 0 {
        return Err(ForestError::InvalidParams("no features".into()));
    }
    params.validate(data.n_cols)?;
    let cw = class_weights(y, params.class_weight);
    let mtry = params.resolved_mtry(data.n_cols);
    let built: Vec<(Tree, Vec<f64>)> = (0..params.n_trees)
        .into_par_iter()
        .map(|t| {
            let (counts, rng) = bootstrap_counts(data.n_rows, params.seed, t as u64, params.bootstrap);
            let samples: Vec<(u32, u32)> = counts
                .iter()
                .enumerate()
                .filter(|(_, &m)| m > 0)
                .map(|(i, &m)| (i as u32, m))
                .collect();
            let mut b = Builder {
                pre,
                data,
                y,
                cw,
                params,
                mtry,
                rng,
                nodes: Vec::new(),
                importance: vec![0.0; data.n_cols],
                root_weight: 0.0,
                feature_pool: (0..data.n_cols).collect(),
                keys: Vec::with_capacity(samples.len()),
            };
            let (c, _) = b.class_weights(&samples);
            b.root_weight = c[0] + c[1];
            b.grow(samples, 0);
            (Tree { nodes: b.nodes }, b.importance)
        })
        .collect();
    let mut raw = vec![0.0; data.n_cols];
    for (_, imp) in &built {
        for (r, v) in raw.iter_mut().zip(imp) {
            *r += v;
        }
    }
    raw.iter_mut().for_each(|r| *r /= params.n_trees as f64);
    Ok(RandomForest {
        format: MODEL_FORMAT.into(),
        version: MODEL_VERSION,
        params: params.clone(),
        feature_names: data.names.clone(),
        trees: built.into_iter().map(|b| b.0).collect(),
        raw_importance: raw,
    })
}

impl RandomForest {
    pub fn n_features(&self) -> usize {
        self.feature_names.len()
    }

    /// Mean class-1 leaf probability over trees, per row.
    pub fn predict_proba(&self, data: &Dataset) -> Result<Vec<f64>> {
        if data.n_cols != self.n_features() {
            return Err(ForestError::DimensionMismatch {
                expected: self.n_features(),
                got: data.n_cols,
            });
        }
        Ok((0..data.n_rows)
            .into_par_iter()
            .map(|r| {
                let x = data.row(r);
                let s: f64 = self.trees.iter().map(|t| t.predict_row(&x)).sum();
                (s / self.trees.len() as f64).clamp(0.0, 1.0)
            })
            .collect())
    }

    /// Importance normalised to sum 1; uniform if no split reduced impurity.
    pub fn gini_importance(&self) -> Vec<f64> {
        let s: f64 = self.raw_importance.iter().sum();
        let d = self.raw_importance.len();
        if s > 0.0 {
            self.raw_importance.iter().map(|v| v / s).collect()
        } else {
            vec![1.0 / d as f64; d]
        }
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let f: RandomForest = serde_json::from_str(s)?;
        if f.format != MODEL_FORMAT || f.version != MODEL_VERSION {
            return Err(ForestError::UnsupportedModel(f.format, f.version));
        }
        Ok(f)
    }
}

pub fn gini_importance(forest: &RandomForest) -> Vec<f64> {
    forest.gini_importance()
}

pub fn predict_proba(forest: &RandomForest, data: &Dataset) -> Result<Vec<f64>> {
    forest.predict_proba(data)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ds(rows: &[&[f64]]) -> Dataset {
        let d = rows[0].len();
        let flat: Vec<f64> = rows.iter().flat_map(|r| r.iter().copied()).collect();
        Dataset::from_rows(rows.len(), d, &flat, (0..d).map(|i| format!("f{i}")).collect()).unwrap()
    }

    #[test]
    fn separable_1d() {
        let xs: Vec<f64> = (-25..25).map(|i| i as f64 + 0.5).collect();
        let rows: Vec<&[f64]> = xs.iter().map(std::slice::from_ref).collect();
        let data = ds(&rows);
        let y: Vec<u8> = xs.iter().map(|&x| u8::from(x > 0.0)).collect();
        let f = train_forest(&data, &y, &ForestParams { n_trees: 50, ..Default::default() }).unwrap();
        let p = f.predict_proba(&data).unwrap();
        let acc = p.iter().zip(&y).filter(|(p, &y)| (**p > 0.5) == (y == 1)).count();
        assert_eq!(acc, 50);
        assert_eq!(f.gini_importance(), vec![1.0]);
    }

    #[test]
    fn stump_threshold_is_midpoint() {
        let data = ds(&[&[1.0], &[2.0], &[4.0], &[8.0]]);
        let y = [0, 0, 1, 1];
        let p = ForestParams {
            n_trees: 1,
            max_depth: Some(1),
            bootstrap: false,
            ..Default::default()
        };
        let f = train_forest(&data, &y, &p).unwrap();
        assert_eq!(
            f.trees[0].nodes[0],
            Node::Split {
                feature: 0,
                threshold: 3.0,
                left: 1,
                right: 2
            }
        );
    }

    #[test]
    fn tie_goes_to_lowest_feature() {
        // features 0 and 1 both separate perfectly
        let data = ds(&[&[0.0, 0.0, 5.0], &[0.0, 0.0, 1.0], &[1.0, 1.0, 3.0], &[1.0, 1.0, 2.0]]);
        let y = [0, 0, 1, 1];
        let p = ForestParams {
            n_trees: 1,
            mtry: Some(3),
            bootstrap: false,
            ..Default::default()
        };
        let f = train_forest(&data, &y, &p).unwrap();
        assert!(matches!(f.trees[0].nodes[0], Node::Split { feature: 0, .. }));
        assert_eq!(f.gini_importance(), vec![1.0, 0.0, 0.0]);
    }

    #[test]
    fn errors() {
        let data = ds(&[&[0.0], &[1.0]]);
        assert!(matches!(train_forest(&data, &[1, 1], &ForestParams::default()), Err(ForestError::SingleClass)));
        let bad = Dataset::from_rows(2, 1, &[0.0, f64::NAN], vec!["a".into()]);
        assert!(matches!(bad, Err(ForestError::MissingValues { row: 1, col: 0 })));
        let f = train_forest(&data, &[0, 1], &ForestParams::default()).unwrap();
        let wide = ds(&[&[0.0, 1.0]]);
        assert!(matches!(f.predict_proba(&wide), Err(ForestError::DimensionMismatch { .. })));
    }

    #[test]
    fn json_round_trip() {
        let data = ds(&[&[0.0, 3.0], &[1.0, 2.0], &[2.0, 1.0], &[3.0, 0.0]]);
        let f = train_forest(&data, &[0, 0, 1, 1], &ForestParams { n_trees: 3, ..Default::default() }).unwrap();
        let g = RandomForest::from_json(&f.to_json().unwrap()).unwrap();
        assert_eq!(f, g);
        let bumped = f.to_json().unwrap().replace("\"version\": 1", "\"version\": 9");
        assert!(matches!(RandomForest::from_json(&bumped), Err(ForestError::UnsupportedModel(_, 9))));
    }

    #[test]
    fn bootstrap_has_n_draws() {
        let (c, _) = bootstrap_counts(37, 5, 3, true);
        assert_eq!(c.iter().sum::<u32>(), 37);
        assert_eq!(c, bootstrap_counts(37, 5, 3, true).0);
        assert_ne!(c, bootstrap_counts(37, 5, 4, true).0);
    }
}
