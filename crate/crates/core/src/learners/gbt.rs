//! Squared-error gradient boosting with exact-greedy regression trees.
//!
//! Trees are grown level by level. Each feature keeps one presorted row
//! order for the whole fit, so a level costs a single pass per feature; split
//! candidates are the midpoints between consecutive distinct values inside a
//! node.

use serde::{Deserialize, Serialize};

use super::{LearnerSpec, Parameters};
use crate::error::Result;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "node", rename_all = "snake_case")]
pub enum TreeNode {
    Split {
        feature: usize,
        threshold: f64,
        left: usize,
        right: usize,
    },
    Leaf {
        value: f64,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tree {
    pub nodes: Vec<TreeNode>,
}

impl Tree {
    fn leaf(value: f64) -> Self {
        Tree {
            nodes: vec![TreeNode::Leaf { value }],
        }
    }

    /// Rows go left when `x <= threshold`.
    pub fn predict_row(&self, cols: &[&[f64]], row: usize) -> f64 {
        let mut at = 0;
        loop {
            match self.nodes[at] {
                TreeNode::Leaf { value } => return value,
                TreeNode::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => at = if cols[feature][row] <= threshold { left } else { right },
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Ensemble {
    pub base: f64,
    pub learning_rate: f64,
    pub trees: Vec<Tree>,
    /// Weighted training MSE before any tree, then after each round.
    pub training_loss: Vec<f64>,
}

impl Ensemble {
    pub(super) fn predict(&self, cols: &[&[f64]], n: usize) -> Vec<f64> {
        (0..n)
            .map(|row| {
                // same accumulation order as training, so predictions on the
                // training rows reproduce the recorded loss bit for bit
                let mut acc = self.base;
                for t in &self.trees {
                    acc += self.learning_rate * t.predict_row(cols, row);
                }
                acc
            })
            .collect()
    }
}

#[derive(Clone, Copy, Default)]
struct Stats {
    weight: f64,
    sum: f64,
}

impl Stats {
    fn add(&mut self, w: f64, r: f64) {
        self.weight += w;
        self.sum += w * r;
    }

    fn score(&self) -> f64 {
        if self.weight > 0.0 {
            self.sum * self.sum / self.weight
        } else {
            0.0
        }
    }
}

#[derive(Clone, Copy)]
struct Candidate {
    gain: f64,
    feature: usize,
    threshold: f64,
}

/// Per-node scan state while walking one feature's sorted order.
#[derive(Clone, Copy)]
struct Scan {
    left: Stats,
    last: f64,
    started: bool,
}

pub(super) fn fit(cols: &[&[f64]], y: &[f64], weights: Option<&[f64]>, spec: &LearnerSpec) -> Result<Parameters> {
    let n = y.len();
    let w: Vec<f64> = weights.map_or_else(|| vec![1.0; n], <[f64]>::to_vec);
    let total_w: f64 = w.iter().sum();
    let base = w.iter().zip(y).map(|(a, b)| a * b).sum::<f64>() / total_w;

    let sorted: Vec<Vec<u32>> = cols
        .iter()
        .map(|col| {
            let mut idx: Vec<u32> = (0..n as u32).collect();
            idx.sort_by(|&a, &b| col[a as usize].total_cmp(&col[b as usize]).then(a.cmp(&b)));
            idx
        })
        .collect();

    let mut pred = vec![base; n];
    let loss = |pred: &[f64]| {
        (0..n).map(|i| w[i] * (y[i] - pred[i]).powi(2)).sum::<f64>() / total_w
    };
    let mut training_loss = vec![loss(&pred)];
    let mut trees = Vec::new();
    let rounds = if spec.learning_rate == 0.0 { 0 } else { spec.max_iterations };
    let mut residual = vec![0.0; n];
    let mut leaf_of = vec![0usize; n];

    for _ in 0..rounds {
        for i in 0..n {
            residual[i] = y[i] - pred[i];
        }
        let tree = grow(cols, &sorted, &residual, &w, spec.max_depth, &mut leaf_of);
        for i in 0..n {
            if let TreeNode::Leaf { value } = tree.nodes[leaf_of[i]] {
                pred[i] += spec.learning_rate * value;
            }
        }
        training_loss.push(loss(&pred));
        trees.push(tree);
    }
    Ok(Parameters::Gbt(Ensemble {
        base,
        learning_rate: spec.learning_rate,
        trees,
        training_loss,
    }))
}

/// Relative margin a split must clear to displace the incumbent, so that
/// gains equal up to rounding keep the earlier feature and threshold.
const TIE_MARGIN: f64 = 1e-10;

fn beats(gain: f64, incumbent: f64) -> bool {
    gain - incumbent > TIE_MARGIN * gain.abs().max(incumbent.abs())
}

/// Midpoint of `lo < hi` that still sends `hi` right.
fn midpoint(lo: f64, hi: f64) -> f64 {
    let mid = lo + (hi - lo) / 2.0;
    if mid < hi {
        mid
    } else {
        lo
    }
}

/// Grow one tree on `residual`; `leaf_of` receives each row's leaf index.
fn grow(
    cols: &[&[f64]],
    sorted: &[Vec<u32>],
    residual: &[f64],
    w: &[f64],
    max_depth: usize,
    leaf_of: &mut [usize],
) -> Tree {
    let n = residual.len();
    let mut root = Stats::default();
    for i in 0..n {
        root.add(w[i], residual[i]);
        leaf_of[i] = 0;
    }
    if cols.is_empty() {
        return Tree::leaf(root.sum / root.weight);
    }

    let mut nodes = vec![TreeNode::Leaf { value: 0.0 }];
    let mut totals = vec![root];
    let mut frontier = vec![0usize];
    // slot[node] = position in the frontier, usize::MAX when not splittable now
    let mut slot = vec![0usize];

    for _ in 0..max_depth {
        if frontier.is_empty() {
            break;
        }
        let mut best: Vec<Option<Candidate>> = vec![None; frontier.len()];
        for (f, order) in sorted.iter().enumerate() {
            let col = cols[f];
            let mut scans = vec![
                Scan {
                    left: Stats::default(),
                    last: 0.0,
                    started: false,
                };
                frontier.len()
            ];
            for &row in order {
                let row = row as usize;
                let s = slot[leaf_of[row]];
                if s == usize::MAX {
                    continue;
                }
                let x = col[row];
                let scan = &mut scans[s];
                if scan.started && x > scan.last {
                    let total = totals[frontier[s]];
                    let right = Stats {
                        weight: total.weight - scan.left.weight,
                        sum: total.sum - scan.left.sum,
                    };
                    if scan.left.weight > 0.0 && right.weight > 0.0 {
                        let gain = scan.left.score() + right.score() - total.score();
                        if best[s].is_none_or(|b| beats(gain, b.gain)) {
                            best[s] = Some(Candidate {
                                gain,
                                feature: f,
                                threshold: midpoint(scan.last, x),
                            });
                        }
                    }
                }
                scan.left.add(w[row], residual[row]);
                scan.last = x;
                scan.started = true;
            }
        }

        let mut next = Vec::new();
        let mut split_into: Vec<Option<(usize, usize, usize, f64)>> = vec![None; frontier.len()];
        for (s, &node) in frontier.iter().enumerate() {
            let Some(c) = best[s] else { continue };
            let tol = 1e-12 * totals[node].score().abs().max(f64::MIN_POSITIVE);
            if !(c.gain > tol) {
                continue;
            }
            let left = nodes.len();
            nodes.push(TreeNode::Leaf { value: 0.0 });
            nodes.push(TreeNode::Leaf { value: 0.0 });
            totals.push(Stats::default());
            totals.push(Stats::default());
            nodes[node] = TreeNode::Split {
                feature: c.feature,
                threshold: c.threshold,
                left,
                right: left + 1,
            };
            split_into[s] = Some((left, left + 1, c.feature, c.threshold));
            next.push(left);
            next.push(left + 1);
        }
        if next.is_empty() {
            break;
        }
        for i in 0..n {
            let s = slot[leaf_of[i]];
            if s == usize::MAX {
                continue;
            }
            if let Some((l, r, f, t)) = split_into[s] {
                let child = if cols[f][i] <= t { l } else { r };
                leaf_of[i] = child;
                totals[child].add(w[i], residual[i]);
            }
        }
        slot = vec![usize::MAX; nodes.len()];
        for (s, &node) in next.iter().enumerate() {
            slot[node] = s;
        }
        frontier = next;
    }

    for (node, stats) in nodes.iter_mut().zip(&totals) {
        if let TreeNode::Leaf { value } = node {
            *value = if stats.weight > 0.0 { stats.sum / stats.weight } else { 0.0 };
        }
    }
    Tree { nodes }
}
