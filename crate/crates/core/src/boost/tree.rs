//! Least-squares regression trees grown best-first with exact split search.

use serde::{Deserialize, Serialize};

use super::FitConfig;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum TreeNode {
    Leaf {
        value: f64,
        n_obs: usize,
    },
    Split {
        feature: usize,
        /// Rows with `x[feature] <= threshold` go left.
        threshold: f64,
        left: Box<TreeNode>,
        right: Box<TreeNode>,
    },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct RegressionTree {
    root: TreeNode,
}

impl RegressionTree {
    pub fn leaf(value: f64, n_obs: usize) -> Self {
        RegressionTree {
            root: TreeNode::Leaf { value, n_obs },
        }
    }

    pub fn from_root(root: TreeNode) -> Self {
        RegressionTree { root }
    }

    pub fn root(&self) -> &TreeNode {
        &self.root
    }

    pub fn predict(&self, x: &[f64]) -> f64 {
        let mut node = &self.root;
        loop {
            match node {
                TreeNode::Leaf { value, .. } => return *value,
                TreeNode::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => {
                    node = if x[*feature] <= *threshold { left } else { right };
                }
            }
        }
    }

    /// Number of edges on the longest root-to-leaf path.
    pub fn depth(&self) -> usize {
        fn go(n: &TreeNode) -> usize {
            match n {
                TreeNode::Leaf { .. } => 0,
                TreeNode::Split { left, right, .. } => 1 + go(left).max(go(right)),
            }
        }
        go(&self.root)
    }

    pub fn n_leaves(&self) -> usize {
        self.leaves().len()
    }

    /// `(value, n_obs)` of each leaf, left to right.
    pub fn leaves(&self) -> Vec<(f64, usize)> {
        fn go(n: &TreeNode, out: &mut Vec<(f64, usize)>) {
            match n {
                TreeNode::Leaf { value, n_obs } => out.push((*value, *n_obs)),
                TreeNode::Split { left, right, .. } => {
                    go(left, out);
                    go(right, out);
                }
            }
        }
        let mut out = Vec::new();
        go(&self.root, &mut out);
        out
    }
}

/// Row-major design matrix with per-feature orderings computed once.
#[derive(Clone, Debug)]
pub struct SortedFeatures {
    n_rows: usize,
    n_features: usize,
    x: Vec<f64>,
    order: Vec<Vec<u32>>,
}

impl SortedFeatures {
    pub fn new(rows: &[Vec<f64>]) -> Self {
        let n_rows = rows.len();
        let n_features = rows.first().map_or(0, Vec::len);
        let x: Vec<f64> = rows.iter().flatten().copied().collect();
        assert_eq!(x.len(), n_rows * n_features, "ragged design matrix");
        let order = (0..n_features)
            .map(|f| {
                let mut idx: Vec<u32> = (0..n_rows as u32).collect();
                idx.sort_by(|&a, &b| {
                    x[a as usize * n_features + f]
                        .total_cmp(&x[b as usize * n_features + f])
                        .then(a.cmp(&b))
                });
                idx
            })
            .collect();
        SortedFeatures {
            n_rows,
            n_features,
            x,
            order,
        }
    }

    pub fn n_rows(&self) -> usize {
        self.n_rows
    }

    pub fn n_features(&self) -> usize {
        self.n_features
    }

    pub fn row(&self, r: usize) -> &[f64] {
        &self.x[r * self.n_features..(r + 1) * self.n_features]
    }

    fn value(&self, r: u32, f: usize) -> f64 {
        self.x[r as usize * self.n_features + f]
    }
}

#[derive(Clone, Copy, Debug)]
struct SplitCandidate {
    feature: usize,
    /// Number of rows (in this feature's order) that go left.
    left_count: usize,
    threshold: f64,
    gain: f64,
}

struct GrowingLeaf {
    /// Row indices sorted by each feature.
    rows: Vec<Vec<u32>>,
    depth: usize,
    best: Option<SplitCandidate>,
    arena_id: usize,
}

enum ArenaNode {
    Leaf { value: f64, n_obs: usize },
    Split { feature: usize, threshold: f64, left: usize, right: usize },
}

/// Relative gain below which a split is treated as no improvement.
const MIN_RELATIVE_GAIN: f64 = 1e-12;

/// Fits one tree on `targets` with the growth limits from `cfg`.
pub fn fit_tree(x: &[Vec<f64>], targets: &[f64], cfg: &FitConfig) -> RegressionTree {
    fit_tree_presorted(&SortedFeatures::new(x), targets, cfg)
}

pub fn fit_tree_presorted(features: &SortedFeatures, targets: &[f64], cfg: &FitConfig) -> RegressionTree {
    let n = features.n_rows();
    assert_eq!(targets.len(), n, "one target per row");
    if n == 0 {
        return RegressionTree::leaf(0.0, 0);
    }
    let mut arena: Vec<ArenaNode> = Vec::new();
    let root_rows: Vec<Vec<u32>> = if features.n_features() == 0 {
        vec![(0..n as u32).collect()]
    } else {
        features.order.clone()
    };
    let mut leaves = vec![make_leaf(features, targets, root_rows, 0, cfg, &mut arena)];
    let mut goes_left = vec![false; n];

    while leaves.len() < cfg.max_leaves {
        let mut pick: Option<usize> = None;
        for (i, leaf) in leaves.iter().enumerate() {
            if let Some(c) = leaf.best {
                if pick.is_none_or(|p| c.gain > leaves[p].best.unwrap().gain) {
                    pick = Some(i);
                }
            }
        }
        let Some(i) = pick else { break };
        let leaf = leaves.remove(i);
        let split = leaf.best.unwrap();

        let ordered = &leaf.rows[split.feature];
        for (k, &r) in ordered.iter().enumerate() {
            goes_left[r as usize] = k < split.left_count;
        }
        let mut left_rows = Vec::with_capacity(leaf.rows.len());
        let mut right_rows = Vec::with_capacity(leaf.rows.len());
        for list in &leaf.rows {
            let (l, r): (Vec<u32>, Vec<u32>) = list.iter().partition(|&&r| goes_left[r as usize]);
            left_rows.push(l);
            right_rows.push(r);
        }
        let left = make_leaf(features, targets, left_rows, leaf.depth + 1, cfg, &mut arena);
        let right = make_leaf(features, targets, right_rows, leaf.depth + 1, cfg, &mut arena);
        arena[leaf.arena_id] = ArenaNode::Split {
            feature: split.feature,
            threshold: split.threshold,
            left: left.arena_id,
            right: right.arena_id,
        };
        // `leaves` stays in creation order, so equal gains resolve to the older leaf.
        leaves.push(left);
        leaves.push(right);
    }
    fn build(arena: &[ArenaNode], id: usize) -> TreeNode {
        match arena[id] {
            ArenaNode::Leaf { value, n_obs } => TreeNode::Leaf { value, n_obs },
            ArenaNode::Split {
                feature,
                threshold,
                left,
                right,
            } => TreeNode::Split {
                feature,
                threshold,
                left: Box::new(build(arena, left)),
                right: Box::new(build(arena, right)),
            },
        }
    }
    RegressionTree::from_root(build(&arena, 0))
}

fn make_leaf(
    features: &SortedFeatures,
    targets: &[f64],
    rows: Vec<Vec<u32>>,
    depth: usize,
    cfg: &FitConfig,
    arena: &mut Vec<ArenaNode>,
) -> GrowingLeaf {
    let members = &rows[0];
    let count = members.len();
    let value = members.iter().map(|&r| targets[r as usize]).sum::<f64>() / count as f64;
    let best = if depth < cfg.max_depth && count >= 2 * cfg.min_obs_per_leaf && features.n_features() > 0 {
        best_split(features, targets, &rows, value, cfg.min_obs_per_leaf)
    } else {
        None
    };
    let arena_id = arena.len();
    arena.push(ArenaNode::Leaf {
        value,
        n_obs: count,
    });
    GrowingLeaf {
        rows,
        depth,
        best,
        arena_id,
    }
}

/// Exhaustive scan over all features and all distinct-value boundaries.
fn best_split(
    features: &SortedFeatures,
    targets: &[f64],
    rows: &[Vec<u32>],
    mean: f64,
    min_obs: usize,
) -> Option<SplitCandidate> {
    let n = rows[0].len();
    let node_sse: f64 = rows[0]
        .iter()
        .map(|&r| {
            let d = targets[r as usize] - mean;
            d * d
        })
        .sum();
    if !(node_sse > 0.0) {
        return None;
    }
    // Sums of centred targets; the parent term S^2/n is ~0 and is subtracted anyway.
    let total: f64 = rows[0].iter().map(|&r| targets[r as usize] - mean).sum();
    let parent = total * total / n as f64;
    let mut best: Option<SplitCandidate> = None;
    for (f, ordered) in rows.iter().enumerate() {
        let mut left_sum = 0.0;
        for k in 0..n - 1 {
            let r = ordered[k];
            left_sum += targets[r as usize] - mean;
            let left_count = k + 1;
            let right_count = n - left_count;
            if left_count < min_obs {
                continue;
            }
            if right_count < min_obs {
                break;
            }
            let here = features.value(r, f);
            let next = features.value(ordered[k + 1], f);
            if here == next {
                continue;
            }
            let right_sum = total - left_sum;
            let gain = left_sum * left_sum / left_count as f64
                + right_sum * right_sum / right_count as f64
                - parent;
            if best.is_none_or(|b| gain > b.gain) {
                let mid = here + 0.5 * (next - here);
                let threshold = if mid >= next || mid < here { here } else { mid };
                best = Some(SplitCandidate {
                    feature: f,
                    left_count,
                    threshold,
                    gain,
                });
            }
        }
    }
    best.filter(|b| b.gain > MIN_RELATIVE_GAIN * node_sse)
}
