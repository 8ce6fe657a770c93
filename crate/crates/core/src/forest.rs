//! Bootstrap random forest of Gini CART trees, used as an independent
//! second model for transferability checks.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use thiserror::Error;

use crate::data::Dataset;

#[derive(Debug, Error)]
pub enum ForestError {
    #[error("cannot fit a forest on an empty dataset")]
    EmptyDataset,
    #[error("a forest needs at least one tree")]
    NoTrees,
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
}

pub type Result<T, E = ForestError> = std::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq)]
pub enum Node {
    /// Samples with `x[column] <= threshold` go left.
    Split {
        column: usize,
        threshold: f64,
        left: usize,
        right: usize,
    },
    Leaf {
        counts: [usize; 2],
    },
}

/// Flat node arena; node 0 is the root and children always have larger
/// indices than their parent.
#[derive(Debug, Clone, PartialEq)]
pub struct DecisionTree {
    pub nodes: Vec<Node>,
    width: usize,
}

impl DecisionTree {
    pub fn width(&self) -> usize {
        self.width
    }

    pub fn leaf_counts(&self, x: &[f64]) -> [usize; 2] {
        let mut at = 0;
        loop {
            match &self.nodes[at] {
                Node::Leaf { counts } => return *counts,
                Node::Split {
                    column,
                    threshold,
                    left,
                    right,
                } => {
                    at = if x[*column] <= *threshold {
                        *left
                    } else {
                        *right
                    }
                }
            }
        }
    }

    /// Leaf-majority class, ties to class 0.
    pub fn predict(&self, x: &[f64]) -> usize {
        let c = self.leaf_counts(x);
        usize::from(c[1] > c[0])
    }
}

struct Builder<'a> {
    data: &'a Dataset,
    n_features: usize,
    rng: ChaCha8Rng,
    nodes: Vec<Node>,
}

fn gini(counts: [usize; 2]) -> f64 {
    let n = (counts[0] + counts[1]) as f64;
    if n == 0.0 {
        return 0.0;
    }
    let p = counts[0] as f64 / n;
    2.0 * p * (1.0 - p)
}

impl Builder<'_> {
    fn counts(&self, idx: &[usize]) -> [usize; 2] {
        let mut c = [0; 2];
        for &i in idx {
            c[self.data.labels[i]] += 1;
        }
        c
    }

    /// Best threshold on one column: (weighted child impurity, threshold),
    /// or None if the column is constant over `idx`.
    fn best_split_on(&self, idx: &[usize], column: usize) -> Option<(f64, f64)> {
        let mut vals: Vec<(f64, usize)> = idx
            .iter()
            .map(|&i| (self.data.samples[i][column], self.data.labels[i]))
            .collect();
        vals.sort_by(|a, b| a.0.total_cmp(&b.0));
        if vals[0].0 == vals[vals.len() - 1].0 {
            return None;
        }
        let total = self.counts(idx);
        let n = vals.len() as f64;
        let mut left = [0usize; 2];
        let mut best: Option<(f64, f64)> = None;
        for k in 0..vals.len() - 1 {
            left[vals[k].1] += 1;
            if vals[k].0 == vals[k + 1].0 {
                continue;
            }
            let right = [total[0] - left[0], total[1] - left[1]];
            let nl = (k + 1) as f64;
            let score = (nl * gini(left) + (n - nl) * gini(right)) / n;
            if best.is_none_or(|(s, _)| score < s) {
                let mut threshold = 0.5 * (vals[k].0 + vals[k + 1].0);
                // Midpoint can round up onto the right value.
                if threshold >= vals[k + 1].0 {
                    threshold = vals[k].0;
                }
                best = Some((score, threshold));
            }
        }
        best
    }

    fn grow(&mut self, idx: Vec<usize>) -> usize {
        let counts = self.counts(&idx);
        let at = self.nodes.len();
        self.nodes.push(Node::Leaf { counts });
        if counts[0] == 0 || counts[1] == 0 || idx.len() < 2 {
            return at;
        }
        // Visit features in random order until `n_features` non-constant
        // ones have been scored.
        let width = self.data.width();
        let mut features: Vec<usize> = (0..width).collect();
        features.shuffle(&mut self.rng);
        let mut best: Option<(f64, usize, f64)> = None;
        let mut scored = 0;
        for &f in &features {
            if scored >= self.n_features {
                break;
            }
            if let Some((score, thr)) = self.best_split_on(&idx, f) {
                scored += 1;
                if best.is_none_or(|(s, _, _)| score < s) {
                    best = Some((score, f, thr));
                }
            }
        }
        let Some((_, column, threshold)) = best else {
            return at;
        };
        let (l, r): (Vec<usize>, Vec<usize>) = idx
            .into_iter()
            .partition(|&i| self.data.samples[i][column] <= threshold);
        let left = self.grow(l);
        let right = self.grow(r);
        self.nodes[at] = Node::Split {
            column,
            threshold,
            left,
            right,
        };
        at
    }
}

/// Grows one unpruned tree on the rows `idx` (repeats allowed).
fn fit_tree(data: &Dataset, idx: Vec<usize>, n_features: usize, seed: u64) -> DecisionTree {
    let mut b = Builder {
        data,
        n_features,
        rng: ChaCha8Rng::seed_from_u64(seed),
        nodes: Vec::new(),
    };
    b.grow(idx);
    DecisionTree {
        nodes: b.nodes,
        width: data.width(),
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RandomForest {
    pub trees: Vec<DecisionTree>,
    pub n_features_per_split: usize,
    pub tree_seeds: Vec<u64>,
}

/// Features tried per split: floor(sqrt(width)), at least 1.
pub fn default_features_per_split(width: usize) -> usize {
    ((width as f64).sqrt().floor() as usize).max(1)
}

/// Gini trees grown to purity on bootstrap resamples of the training set,
/// sqrt(width) candidate features per split.
pub fn fit_forest(train: &Dataset, n_trees: usize, seed: u64) -> Result<RandomForest> {
    if train.is_empty() {
        return Err(ForestError::EmptyDataset);
    }
    if n_trees == 0 {
        return Err(ForestError::NoTrees);
    }
    let n_features = default_features_per_split(train.width());
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let jobs: Vec<(u64, Vec<usize>)> = (0..n_trees)
        .map(|_| {
            let boot = (0..train.len())
                .map(|_| rng.gen_range(0..train.len()))
                .collect();
            (rng.gen(), boot)
        })
        .collect();
    let tree_seeds = jobs.iter().map(|j| j.0).collect();
    let trees = jobs
        .into_par_iter()
        .map(|(s, boot)| fit_tree(train, boot, n_features, s))
        .collect();
    Ok(RandomForest {
        trees,
        n_features_per_split: n_features,
        tree_seeds,
    })
}

impl RandomForest {
    pub fn width(&self) -> usize {
        self.trees[0].width()
    }

    /// Majority vote of the trees' predictions; ties go to class 0.
    pub fn predict(&self, x: &[f64]) -> Result<usize> {
        if x.len() != self.width() {
            return Err(ForestError::DimensionMismatch {
                expected: self.width(),
                got: x.len(),
            });
        }
        let votes = self.trees.iter().filter(|t| t.predict(x) == 1).count();
        Ok(usize::from(2 * votes > self.trees.len()))
    }

    pub fn accuracy(&self, data: &Dataset) -> f64 {
        if data.is_empty() {
            return 0.0;
        }
        let hits = data
            .samples
            .iter()
            .zip(&data.labels)
            .filter(|(x, &y)| self.predict(x).ok() == Some(y))
            .count();
        hits as f64 / data.len() as f64
    }
}
