//! Random forest of Gini classification trees grown on bootstrap samples.

use serde::{Deserialize, Serialize};

use super::features::FeatureMatrix;
use crate::error::{Error, Result};
use crate::rng::RngStream;

fn default_trees() -> usize {
    500
}
fn default_min_leaf() -> usize {
    1
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForestOptions {
    #[serde(default = "default_trees")]
    pub n_trees: usize,
    /// Features tried per split; `floor(sqrt(p))` when unset.
    #[serde(default)]
    pub mtry: Option<usize>,
    #[serde(default = "default_min_leaf")]
    pub min_leaf: usize,
}

impl Default for ForestOptions {
    fn default() -> Self {
        ForestOptions {
            n_trees: default_trees(),
            mtry: None,
            min_leaf: default_min_leaf(),
        }
    }
}

impl ForestOptions {
    pub fn validate(&self) -> Result<()> {
        if self.n_trees == 0 || self.min_leaf == 0 || self.mtry == Some(0) {
            return Err(Error::Config("forest sizes must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Node {
    Split {
        feature: usize,
        threshold: f64,
        left: usize,
        right: usize,
    },
    /// Majority vote of the leaf: 1, 0, or 0.5 on a tie.
    Leaf(f64),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tree {
    pub nodes: Vec<Node>,
}

impl Tree {
    pub fn vote(&self, row: &[f64]) -> f64 {
        let mut k = 0;
        loop {
            match self.nodes[k] {
                Node::Leaf(v) => return v,
                Node::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => k = if row[feature] <= threshold { left } else { right },
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Forest {
    pub trees: Vec<Tree>,
}

impl Forest {
    /// Fraction of trees voting for class 1.
    pub fn predict(&self, row: &[f64]) -> f64 {
        self.trees.iter().map(|t| t.vote(row)).sum::<f64>() / self.trees.len() as f64
    }
}

struct Grower<'a> {
    x: &'a FeatureMatrix,
    y: &'a [f64],
    mtry: usize,
    min_leaf: usize,
    features: Vec<usize>,
    pairs: Vec<(f64, f64)>,
}

impl Grower<'_> {
    fn grow(&mut self, idx: Vec<usize>, stream: &mut RngStream, nodes: &mut Vec<Node>) -> usize {
        let id = nodes.len();
        let ones: f64 = idx.iter().map(|&i| self.y[i]).sum();
        let n = idx.len() as f64;
        let leaf = Node::Leaf(if 2.0 * ones > n {
            1.0
        } else if 2.0 * ones < n {
            0.0
        } else {
            0.5
        });
        nodes.push(leaf.clone());
        if ones == 0.0 || ones == n || idx.len() <= self.min_leaf {
            return id;
        }

        // partial Fisher-Yates draw of mtry candidate features
        let p = self.features.len();
        for k in 0..self.mtry.min(p) {
            let j = k + stream.below(p - k);
            self.features.swap(k, j);
        }
        let parent_gini = n - (ones * ones + (n - ones) * (n - ones)) / n;
        let mut best: Option<(f64, usize, f64)> = None;
        for k in 0..self.mtry.min(p) {
            let f = self.features[k];
            self.pairs.clear();
            self.pairs
                .extend(idx.iter().map(|&i| (self.x.row(i)[f], self.y[i])));
            self.pairs
                .sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap_or(std::cmp::Ordering::Equal));
            let (mut ln, mut l1) = (0.0, 0.0);
            for s in 0..self.pairs.len() - 1 {
                ln += 1.0;
                l1 += self.pairs[s].1;
                if self.pairs[s].0 == self.pairs[s + 1].0 {
                    continue;
                }
                let (rn, r1) = (n - ln, ones - l1);
                if (ln as usize) < self.min_leaf || (rn as usize) < self.min_leaf {
                    continue;
                }
                let gini = ln - (l1 * l1 + (ln - l1) * (ln - l1)) / ln + rn
                    - (r1 * r1 + (rn - r1) * (rn - r1)) / rn;
                let gain = parent_gini - gini;
                if gain > 1e-12 && best.is_none_or(|b| gain > b.0) {
                    let thr = 0.5 * (self.pairs[s].0 + self.pairs[s + 1].0);
                    best = Some((gain, f, thr));
                }
            }
        }
        let Some((_, feature, threshold)) = best else {
            return id;
        };
        let (li, ri): (Vec<usize>, Vec<usize>) = idx
            .into_iter()
            .partition(|&i| self.x.row(i)[feature] <= threshold);
        let left = self.grow(li, stream, nodes);
        let right = self.grow(ri, stream, nodes);
        nodes[id] = Node::Split {
            feature,
            threshold,
            left,
            right,
        };
        id
    }
}

pub fn fit_forest(
    x: &FeatureMatrix,
    y: &[f64],
    opts: &ForestOptions,
    stream: &mut RngStream,
) -> Result<Forest> {
    opts.validate()?;
    let n = x.rows();
    let p = x.cols();
    let mtry = opts
        .mtry
        .unwrap_or(((p as f64).sqrt().floor() as usize).max(1))
        .min(p.max(1));
    let mut grower = Grower {
        x,
        y,
        mtry,
        min_leaf: opts.min_leaf,
        features: (0..p).collect(),
        pairs: Vec::with_capacity(n),
    };
    let mut trees = Vec::with_capacity(opts.n_trees);
    for _ in 0..opts.n_trees {
        let boot: Vec<usize> = (0..n).map(|_| stream.below(n)).collect();
        let mut nodes = Vec::new();
        grower.grow(boot, stream, &mut nodes);
        trees.push(Tree { nodes });
    }
    Ok(Forest { trees })
}
