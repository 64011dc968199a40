//! Random forest of CART trees (Gini impurity, bootstrap rows, √d candidate
//! features per split), used as the classical baseline.

use rand::seq::index::sample;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::discriminator::{confusion_matrix, f1_scores, F1Report, ProductSample};
use crate::error::{Error, Result};
use crate::linalg::seeded_rng;
use crate::par;

#[derive(Clone, Debug, Serialize, Deserialize)]
enum Node {
    Leaf { probs: Vec<f64> },
    Split { feature: usize, threshold: f64, left: usize, right: usize },
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Tree {
    nodes: Vec<Node>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct RandomForest {
    pub n_classes: usize,
    pub n_features: usize,
    trees: Vec<Tree>,
}

fn gini(counts: &[usize], n: usize) -> f64 {
    if n == 0 {
        return 0.0;
    }
    let n = n as f64;
    1.0 - counts.iter().map(|&c| (c as f64 / n).powi(2)).sum::<f64>()
}

struct Builder<'a> {
    x: &'a [Vec<f64>],
    y: &'a [usize],
    nc: usize,
    max_features: usize,
    rng: ChaCha8Rng,
    nodes: Vec<Node>,
}

impl Builder<'_> {
    fn leaf(&mut self, rows: &[usize]) -> usize {
        let mut probs = vec![0.0; self.nc];
        for &r in rows {
            probs[self.y[r]] += 1.0;
        }
        let n = rows.len().max(1) as f64;
        probs.iter_mut().for_each(|p| *p /= n);
        self.nodes.push(Node::Leaf { probs });
        self.nodes.len() - 1
    }

    /// Best (gain, feature, threshold) over a random feature subset.
    fn best_split(&mut self, rows: &[usize]) -> Option<(f64, usize, f64)> {
        let d = self.x[0].len();
        let mut counts = vec![0usize; self.nc];
        for &r in rows {
            counts[self.y[r]] += 1;
        }
        let parent = gini(&counts, rows.len());
        let mut best: Option<(f64, usize, f64)> = None;
        let feats = sample(&mut self.rng, d, self.max_features.min(d));
        let mut order: Vec<usize> = rows.to_vec();
        for f in feats.iter() {
            order.sort_by(|&a, &b| self.x[a][f].total_cmp(&self.x[b][f]));
            let mut left = vec![0usize; self.nc];
            let n = order.len();
            for k in 0..n - 1 {
                left[self.y[order[k]]] += 1;
                let (v, next) = (self.x[order[k]][f], self.x[order[k + 1]][f]);
                if next <= v {
                    continue;
                }
                let right: Vec<usize> = counts.iter().zip(&left).map(|(c, l)| c - l).collect();
                let nl = k + 1;
                let child = (nl as f64 * gini(&left, nl) + (n - nl) as f64 * gini(&right, n - nl)) / n as f64;
                let gain = parent - child;
                if gain > -1e-12 && best.is_none_or(|b| gain > b.0) {
                    best = Some((gain, f, 0.5 * (v + next)));
                }
            }
        }
        best
    }

    fn grow(&mut self, rows: &[usize]) -> usize {
        let first = self.y[rows[0]];
        if rows.len() < 2 || rows.iter().all(|&r| self.y[r] == first) {
            return self.leaf(rows);
        }
        let Some((_, feature, threshold)) = self.best_split(rows) else {
            return self.leaf(rows);
        };
        let (l, r): (Vec<usize>, Vec<usize>) = rows.iter().partition(|&&i| self.x[i][feature] <= threshold);
        let id = self.nodes.len();
        self.nodes.push(Node::Leaf { probs: Vec::new() });
        let left = self.grow(&l);
        let right = self.grow(&r);
        self.nodes[id] = Node::Split {
            feature,
            threshold,
            left,
            right,
        };
        id
    }
}

impl Tree {
    fn probs(&self, x: &[f64]) -> &[f64] {
        let mut id = 0;
        loop {
            match &self.nodes[id] {
                Node::Leaf { probs } => return probs,
                Node::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => id = if x[*feature] <= *threshold { *left } else { *right },
            }
        }
    }
}

impl RandomForest {
    pub fn fit(x: &[Vec<f64>], y: &[usize], n_classes: usize, n_trees: usize, seed: u64) -> Result<Self> {
        if x.is_empty() || x.len() != y.len() {
            return Err(Error::invalid("random forest needs matching, nonempty features and labels"));
        }
        let d = x[0].len();
        if d == 0 || x.iter().any(|r| r.len() != d) {
            return Err(Error::invalid("feature rows must share a positive length"));
        }
        if y.iter().any(|&l| l >= n_classes) || n_trees == 0 {
            return Err(Error::invalid("labels must be below n_classes and n_trees positive"));
        }
        let max_features = ((d as f64).sqrt().floor() as usize).max(1);
        let trees = par::map_indexed(n_trees, |t| {
            let mut rng = seeded_rng(seed, t as u64);
            let rows: Vec<usize> = (0..x.len()).map(|_| rng.random_range(0..x.len())).collect();
            let mut b = Builder {
                x,
                y,
                nc: n_classes,
                max_features,
                rng,
                nodes: Vec::new(),
            };
            b.grow(&rows);
            Tree { nodes: b.nodes }
        });
        Ok(RandomForest {
            n_classes,
            n_features: d,
            trees,
        })
    }

    /// Mean leaf class frequencies over trees; ties go to the lower label.
    pub fn predict(&self, x: &[f64]) -> usize {
        let mut acc = vec![0.0; self.n_classes];
        for t in &self.trees {
            for (a, p) in acc.iter_mut().zip(t.probs(x)) {
                *a += p;
            }
        }
        (0..self.n_classes).fold(0, |best, c| if acc[c] > acc[best] { c } else { best })
    }

    pub fn f1(&self, x: &[Vec<f64>], y: &[usize]) -> F1Report {
        let pred: Vec<usize> = x.iter().map(|r| self.predict(r)).collect();
        f1_scores(&confusion_matrix(y, &pred, self.n_classes))
    }
}

/// The 2L-dimensional flattened amplitude vector of a product sample.
pub fn features(s: &ProductSample) -> Vec<f64> {
    s.x.iter().flat_map(|a| a.iter().copied()).collect()
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct BaselineReport {
    pub train_f1: f64,
    pub test_f1: f64,
    pub n_trees: usize,
}

pub fn baseline_random_forest(train: &[ProductSample], test: &[ProductSample], n_trees: usize, seed: u64) -> Result<(RandomForest, BaselineReport)> {
    let xs: Vec<Vec<f64>> = train.iter().map(features).collect();
    let ys: Vec<usize> = train.iter().map(|s| s.label).collect();
    let nc = ys.iter().max().map_or(2, |m| (m + 1).max(2));
    let rf = RandomForest::fit(&xs, &ys, nc, n_trees, seed)?;
    let xt: Vec<Vec<f64>> = test.iter().map(features).collect();
    let yt: Vec<usize> = test.iter().map(|s| s.label).collect();
    let report = BaselineReport {
        train_f1: rf.f1(&xs, &ys).average,
        test_f1: if test.is_empty() { f64::NAN } else { rf.f1(&xt, &yt).average },
        n_trees,
    };
    Ok((rf, report))
}
