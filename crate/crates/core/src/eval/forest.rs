//! Random forest classifier for binary targets.
//!
//! Trees use Gini splits over a random subset of features at every node
//! (`√d` by default) and are fit on bootstrap resamples. Features are
//! rank-binned once up front, so split search is a histogram pass over the
//! node's rows whenever the node is larger than the feature's number of
//! distinct values, and a sort of ranks otherwise.

use alloc::vec;
use alloc::vec::Vec;

use rand::Rng as _;

use crate::error::{Error, Result};
use crate::numkernel::{math, rng_for, Matrix, Rng};

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(default))]
pub struct ForestConfig {
    pub n_trees: usize,
    pub max_depth: usize,
    /// Fraction of features tried per split; `None` means `√d`.
    pub feature_subsample: Option<f64>,
    pub bootstrap: bool,
    pub seed: u64,
}

impl Default for ForestConfig {
    fn default() -> Self {
        ForestConfig { n_trees: 100, max_depth: 12, feature_subsample: None, bootstrap: true, seed: 0 }
    }
}

impl ForestConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_trees == 0 {
            return Err(Error::InvalidArgument("a forest needs at least one tree".into()));
        }
        if let Some(f) = self.feature_subsample {
            if !(f > 0.0 && f <= 1.0) {
                return Err(Error::InvalidArgument("feature_subsample must lie in (0, 1]".into()));
            }
        }
        Ok(())
    }

    fn features_per_split(&self, d: usize) -> usize {
        let m = match self.feature_subsample {
            None => math::sqrt(d as f64) as usize,
            Some(f) => math::ceil(f * d as f64) as usize,
        };
        m.clamp(1, d.max(1))
    }
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub enum Node {
    /// Class counts `[negatives, positives]` of the training rows reaching
    /// the leaf.
    Leaf { counts: [u32; 2] },
    /// Rows with `x[feature] <= threshold` go left.
    Split { feature: usize, threshold: f64, left: usize, right: usize },
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct Tree {
    /// Node 0 is the root.
    pub nodes: Vec<Node>,
    /// Impurity decrease per feature, weighted by the fraction of rows at the
    /// splitting node.
    pub importances: Vec<f64>,
}

impl Tree {
    /// Majority class of the leaf reached by `row`; ties go to class 0.
    pub fn predict_row(&self, row: &[f64]) -> u8 {
        let mut i = 0;
        loop {
            match &self.nodes[i] {
                Node::Leaf { counts } => return u8::from(counts[1] > counts[0]),
                Node::Split { feature, threshold, left, right } => {
                    i = if row[*feature] <= *threshold { *left } else { *right };
                }
            }
        }
    }

    pub fn depth(&self) -> usize {
        fn go(nodes: &[Node], i: usize) -> usize {
            match &nodes[i] {
                Node::Leaf { .. } => 0,
                Node::Split { left, right, .. } => 1 + go(nodes, *left).max(go(nodes, *right)),
            }
        }
        go(&self.nodes, 0)
    }
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct Forest {
    pub trees: Vec<Tree>,
    pub n_features: usize,
    pub config: ForestConfig,
}

impl Forest {
    pub fn from_trees(trees: Vec<Tree>, n_features: usize, config: ForestConfig) -> Self {
        Forest { trees, n_features, config }
    }

    /// Majority vote over trees; a tied vote predicts class 0.
    pub fn predict(&self, x: &Matrix) -> Result<Vec<u8>> {
        if self.trees.is_empty() {
            return Err(Error::EmptyForest);
        }
        if x.cols() != self.n_features {
            return Err(Error::dim("Forest::predict", x.shape(), (x.rows(), self.n_features)));
        }
        Ok((0..x.rows())
            .map(|r| {
                let row = x.row(r);
                let ones = self.trees.iter().filter(|t| t.predict_row(row) == 1).count();
                u8::from(2 * ones > self.trees.len())
            })
            .collect())
    }

    /// Mean decrease in impurity per input feature: normalized within each
    /// tree, averaged over trees and normalized again. All zeros if no tree
    /// ever split.
    pub fn feature_importances(&self) -> Vec<f64> {
        let mut acc = vec![0.0; self.n_features];
        for t in &self.trees {
            let total: f64 = t.importances.iter().sum();
            if total > 0.0 {
                for (a, v) in acc.iter_mut().zip(&t.importances) {
                    *a += v / total;
                }
            }
        }
        let total: f64 = acc.iter().sum();
        if total > 0.0 {
            acc.iter_mut().for_each(|v| *v /= total);
        }
        acc
    }
}

/// Training data prepared for repeated tree fitting.
///
/// Each tree depends only on the trainer and its index, so trees can be fit
/// in any order or in parallel and assembled with [`Forest::from_trees`].
#[derive(Debug, Clone)]
pub struct ForestTrainer {
    /// Per feature: sorted distinct values.
    values: Vec<Vec<f64>>,
    /// Per feature: rank of every row's value in `values`.
    ranks: Vec<Vec<u32>>,
    y: Vec<u8>,
    config: ForestConfig,
}

impl ForestTrainer {
    pub fn new(x: &Matrix, y: &[u8], config: ForestConfig) -> Result<Self> {
        config.validate()?;
        if x.rows() != y.len() {
            return Err(Error::dim("ForestTrainer::new", x.shape(), (y.len(), 1)));
        }
        if y.is_empty() {
            return Err(Error::EmptyInput);
        }
        if y.iter().any(|&v| v > 1) {
            return Err(Error::InvalidArgument("targets must be 0 or 1".into()));
        }
        if y.iter().all(|&v| v == y[0]) {
            return Err(Error::DegenerateForest);
        }
        x.ensure_finite("forest input")?;
        let mut values = Vec::with_capacity(x.cols());
        let mut ranks = Vec::with_capacity(x.cols());
        for c in 0..x.cols() {
            let col = x.column(c);
            let mut uniq = col.clone();
            uniq.sort_by(f64::total_cmp);
            uniq.dedup();
            let r = col.iter().map(|v| uniq.partition_point(|u| u < v) as u32).collect();
            values.push(uniq);
            ranks.push(r);
        }
        Ok(ForestTrainer { values, ranks, y: y.to_vec(), config })
    }

    pub fn n_features(&self) -> usize {
        self.values.len()
    }

    pub fn config(&self) -> &ForestConfig {
        &self.config
    }

    pub fn fit_tree(&self, index: usize) -> Tree {
        let n = self.y.len();
        let mut rng = rng_for(tree_seed(self.config.seed, index), 9);
        let rows: Vec<u32> = if self.config.bootstrap {
            (0..n).map(|_| rng.random_range(0..n) as u32).collect()
        } else {
            (0..n as u32).collect()
        };
        let mut b = Builder {
            t: self,
            rng,
            nodes: Vec::new(),
            importances: vec![0.0; self.n_features()],
            m_try: self.config.features_per_split(self.n_features()),
            root_n: rows.len() as f64,
            hist: Vec::new(),
        };
        let mut rows = rows;
        b.grow(&mut rows, 0);
        Tree { nodes: b.nodes, importances: b.importances }
    }

    pub fn fit(&self) -> Forest {
        let trees = (0..self.config.n_trees).map(|i| self.fit_tree(i)).collect();
        Forest::from_trees(trees, self.n_features(), self.config)
    }
}

fn tree_seed(seed: u64, index: usize) -> u64 {
    let mut z = seed ^ (index as u64 + 1).wrapping_mul(0xD1B5_4A32_D192_ED03);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// `n * gini` for a node with `pos` positives among `n` rows.
#[inline]
fn weighted_gini(n: f64, pos: f64) -> f64 {
    if n <= 0.0 {
        0.0
    } else {
        2.0 * pos * (n - pos) / n
    }
}

struct Candidate {
    feature: usize,
    /// Rows with rank `<= split_rank` go left.
    split_rank: u32,
    next_rank: u32,
    score: f64,
}

struct Builder<'a> {
    t: &'a ForestTrainer,
    rng: Rng,
    nodes: Vec<Node>,
    importances: Vec<f64>,
    m_try: usize,
    root_n: f64,
    hist: Vec<[u32; 2]>,
}

impl Builder<'_> {
    fn grow(&mut self, rows: &mut [u32], depth: usize) -> usize {
        let id = self.nodes.len();
        let pos = rows.iter().filter(|&&r| self.t.y[r as usize] == 1).count() as u32;
        let counts = [rows.len() as u32 - pos, pos];
        self.nodes.push(Node::Leaf { counts });
        if depth >= self.t.config.max_depth || rows.len() < 2 || pos == 0 || pos as usize == rows.len() {
            return id;
        }
        let Some(best) = self.best_split(rows, pos) else {
            return id;
        };
        let ranks = &self.t.ranks[best.feature];
        let mut split = 0;
        for i in 0..rows.len() {
            if ranks[rows[i] as usize] <= best.split_rank {
                rows.swap(i, split);
                split += 1;
            }
        }
        let n = rows.len() as f64;
        let parent = weighted_gini(n, pos as f64);
        self.importances[best.feature] += (parent - best.score) / self.root_n;
        let vals = &self.t.values[best.feature];
        let threshold = 0.5 * (vals[best.split_rank as usize] + vals[best.next_rank as usize]);
        let (l, r) = rows.split_at_mut(split);
        let left = self.grow(l, depth + 1);
        let right = self.grow(r, depth + 1);
        self.nodes[id] = Node::Split { feature: best.feature, threshold, left, right };
        id
    }

    /// Lowest weighted Gini split over randomly ordered features, stopping
    /// after `m_try` features that are not constant within the node.
    fn best_split(&mut self, rows: &[u32], pos: u32) -> Option<Candidate> {
        let d = self.t.n_features();
        let mut order: Vec<usize> = (0..d).collect();
        let mut best: Option<Candidate> = None;
        let mut tried = 0;
        for i in 0..d {
            if tried == self.m_try {
                break;
            }
            let j = self.rng.random_range(i..d);
            order.swap(i, j);
            let f = order[i];
            if let Some(c) = self.scan_feature(f, rows, pos) {
                tried += 1;
                if let Some(c) = c {
                    if best.as_ref().is_none_or(|b| c.score < b.score) {
                        best = Some(c);
                    }
                }
            }
        }
        best
    }

    /// `None` if the feature is constant within the node, otherwise its best
    /// split (if any).
    fn scan_feature(&mut self, f: usize, rows: &[u32], pos: u32) -> Option<Option<Candidate>> {
        let ranks = &self.t.ranks[f];
        let y = &self.t.y;
        let n_bins = self.t.values[f].len();
        let n = rows.len();
        // (rank, negatives, positives) in ascending rank order
        let mut groups: Vec<(u32, u32, u32)> = Vec::new();
        if n_bins <= 2 * n {
            self.hist.clear();
            self.hist.resize(n_bins, [0, 0]);
            for &r in rows {
                self.hist[ranks[r as usize] as usize][y[r as usize] as usize] += 1;
            }
            for (k, h) in self.hist.iter().enumerate() {
                if h[0] + h[1] > 0 {
                    groups.push((k as u32, h[0], h[1]));
                }
            }
        } else {
            let mut keyed: Vec<(u32, u8)> = rows.iter().map(|&r| (ranks[r as usize], y[r as usize])).collect();
            keyed.sort_unstable();
            for (k, c) in keyed {
                match groups.last_mut() {
                    Some(g) if g.0 == k => {
                        if c == 1 { g.2 += 1 } else { g.1 += 1 }
                    }
                    _ => groups.push((k, u32::from(c == 0), u32::from(c == 1))),
                }
            }
        }
        if groups.len() < 2 {
            return None;
        }
        let (nf, pf) = (n as f64, pos as f64);
        let (mut ln, mut lp) = (0.0, 0.0);
        let mut best: Option<Candidate> = None;
        for w in groups.windows(2) {
            ln += (w[0].1 + w[0].2) as f64;
            lp += w[0].2 as f64;
            let score = weighted_gini(ln, lp) + weighted_gini(nf - ln, pf - lp);
            if best.as_ref().is_none_or(|b| score < b.score) {
                best = Some(Candidate { feature: f, split_rank: w[0].0, next_rank: w[1].0, score });
            }
        }
        Some(best)
    }
}

/// Fits `config.n_trees` trees sequentially.
pub fn fit_forest(x: &Matrix, y: &[u8], config: &ForestConfig) -> Result<Forest> {
    Ok(ForestTrainer::new(x, y, *config)?.fit())
}
