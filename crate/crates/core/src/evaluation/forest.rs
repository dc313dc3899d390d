use ndarray::{Array2, ArrayView1};
use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A classifier over fixed-width feature rows.
pub trait TabularClassifier {
    fn fit(&mut self, x: &Array2<f64>, y: &[usize], classes: usize) -> Result<()>;
    /// Class probabilities for one row.
    fn predict_proba(&self, row: &ArrayView1<'_, f64>) -> Vec<f64>;
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ForestConfig {
    pub trees: usize,
    pub max_depth: usize,
    pub min_samples_leaf: usize,
    /// Features tried per split; `None` uses the square root of the width.
    pub max_features: Option<usize>,
    pub seed: u64,
}

impl Default for ForestConfig {
    fn default() -> Self {
        Self { trees: 100, max_depth: 16, min_samples_leaf: 1, max_features: None, seed: 0 }
    }
}

#[derive(Debug, Clone)]
enum Node {
    Leaf(Vec<f64>),
    Split { feature: usize, threshold: f64, left: usize, right: usize },
}

#[derive(Debug, Clone, Default)]
struct Tree {
    nodes: Vec<Node>,
}

impl Tree {
    fn predict(&self, row: &ArrayView1<'_, f64>) -> &[f64] {
        let mut i = 0;
        loop {
            match &self.nodes[i] {
                Node::Leaf(p) => return p,
                Node::Split { feature, threshold, left, right } => {
                    i = if row[*feature] <= *threshold { *left } else { *right };
                }
            }
        }
    }
}

/// Bagged CART trees with Gini splits on random feature subsets.
#[derive(Debug, Clone, Default)]
pub struct RandomForest {
    cfg: ForestConfig,
    classes: usize,
    trees: Vec<Tree>,
}

impl RandomForest {
    pub fn new(cfg: ForestConfig) -> Self {
        Self { cfg, classes: 0, trees: Vec::new() }
    }
}

fn gini(counts: &[usize], n: usize) -> f64 {
    if n == 0 {
        return 0.0;
    }
    let n = n as f64;
    1.0 - counts.iter().map(|&c| (c as f64 / n).powi(2)).sum::<f64>()
}

struct Builder<'a> {
    x: &'a Array2<f64>,
    y: &'a [usize],
    classes: usize,
    cfg: &'a ForestConfig,
    max_features: usize,
}

impl Builder<'_> {
    fn leaf(&self, idx: &[usize]) -> Node {
        let mut p = vec![0.0; self.classes];
        for &i in idx {
            p[self.y[i]] += 1.0;
        }
        let n = idx.len() as f64;
        p.iter_mut().for_each(|v| *v /= n);
        Node::Leaf(p)
    }

    /// Best `(feature, threshold)` over a random feature subset, if any split lowers impurity.
    fn best_split(&self, idx: &[usize], rng: &mut ChaCha8Rng) -> Option<(usize, f64)> {
        let n = idx.len();
        let mut total = vec![0usize; self.classes];
        idx.iter().for_each(|&i| total[self.y[i]] += 1);
        let parent = gini(&total, n);
        let mut best: Option<(usize, f64, f64)> = None;
        let mut order: Vec<(f64, usize)> = Vec::with_capacity(n);
        for f in sample(rng, self.x.ncols(), self.max_features).into_iter() {
            order.clear();
            order.extend(idx.iter().map(|&i| (self.x[[i, f]], self.y[i])));
            order.sort_by(|a, b| a.0.total_cmp(&b.0));
            let mut left = vec![0usize; self.classes];
            let mut right = total.clone();
            for k in 0..n - 1 {
                left[order[k].1] += 1;
                right[order[k].1] -= 1;
                let nl = k + 1;
                if order[k].0 == order[k + 1].0 || nl < self.cfg.min_samples_leaf || n - nl < self.cfg.min_samples_leaf {
                    continue;
                }
                let score = (nl as f64 * gini(&left, nl) + (n - nl) as f64 * gini(&right, n - nl)) / n as f64;
                if score < parent - 1e-12 && best.is_none_or(|b| score < b.2) {
                    best = Some((f, 0.5 * (order[k].0 + order[k + 1].0), score));
                }
            }
        }
        best.map(|(f, t, _)| (f, t))
    }

    fn grow(&self, tree: &mut Tree, idx: Vec<usize>, depth: usize, rng: &mut ChaCha8Rng) -> usize {
        let at = tree.nodes.len();
        let pure = idx.iter().all(|&i| self.y[i] == self.y[idx[0]]);
        if pure || depth >= self.cfg.max_depth || idx.len() < 2 * self.cfg.min_samples_leaf.max(1) {
            tree.nodes.push(self.leaf(&idx));
            return at;
        }
        let Some((feature, threshold)) = self.best_split(&idx, rng) else {
            tree.nodes.push(self.leaf(&idx));
            return at;
        };
        tree.nodes.push(Node::Leaf(Vec::new()));
        let (l, r): (Vec<usize>, Vec<usize>) = idx.into_iter().partition(|&i| self.x[[i, feature]] <= threshold);
        let left = self.grow(tree, l, depth + 1, rng);
        let right = self.grow(tree, r, depth + 1, rng);
        tree.nodes[at] = Node::Split { feature, threshold, left, right };
        at
    }
}

impl TabularClassifier for RandomForest {
    fn fit(&mut self, x: &Array2<f64>, y: &[usize], classes: usize) -> Result<()> {
        if x.nrows() == 0 || x.nrows() != y.len() || x.ncols() == 0 {
            return Err(Error::InvalidInput("forest needs matching non-empty rows and labels".into()));
        }
        if classes == 0 || y.iter().any(|&c| c >= classes) {
            return Err(Error::InvalidInput("label outside class range".into()));
        }
        if self.cfg.trees == 0 {
            return Err(Error::Config("forest needs at least one tree".into()));
        }
        let width = x.ncols();
        let max_features = self
            .cfg
            .max_features
            .unwrap_or_else(|| (width as f64).sqrt().round() as usize)
            .clamp(1, width);
        let b = Builder { x, y, classes, cfg: &self.cfg, max_features };
        let mut rng = ChaCha8Rng::seed_from_u64(self.cfg.seed);
        self.classes = classes;
        self.trees = (0..self.cfg.trees)
            .map(|_| {
                let boot: Vec<usize> = (0..x.nrows()).map(|_| rng.random_range(0..x.nrows())).collect();
                let mut t = Tree::default();
                b.grow(&mut t, boot, 0, &mut rng);
                t
            })
            .collect();
        Ok(())
    }

    fn predict_proba(&self, row: &ArrayView1<'_, f64>) -> Vec<f64> {
        let mut p = vec![0.0; self.classes];
        for t in &self.trees {
            p.iter_mut().zip(t.predict(row)).for_each(|(a, b)| *a += b);
        }
        let n = self.trees.len().max(1) as f64;
        p.iter_mut().for_each(|v| *v /= n);
        p
    }
}
