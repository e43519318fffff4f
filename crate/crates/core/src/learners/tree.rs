use rand::Rng;

use super::Dataset;

/// Marker stored in [`Node::feature`] for leaves.
pub const LEAF: u32 = u32::MAX;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Node {
    pub feature: u32,
    pub threshold: f64,
    pub left: u32,
    pub right: u32,
    pub value: f64,
}

/// Axis-aligned regression tree; rows with `x[feature] <= threshold` go left.
#[derive(Debug, Clone, PartialEq)]
pub struct Tree {
    pub nodes: Vec<Node>,
}

impl Tree {
    pub fn predict(&self, x: &[f64]) -> f64 {
        let mut i = 0usize;
        loop {
            let n = &self.nodes[i];
            if n.feature == LEAF {
                return n.value;
            }
            i = if x[n.feature as usize] <= n.threshold {
                n.left
            } else {
                n.right
            } as usize;
        }
    }

    pub fn n_leaves(&self) -> usize {
        self.nodes.iter().filter(|n| n.feature == LEAF).count()
    }

    pub fn depth(&self) -> usize {
        fn d(t: &Tree, i: usize) -> usize {
            let n = &t.nodes[i];
            if n.feature == LEAF {
                0
            } else {
                1 + d(t, n.left as usize).max(d(t, n.right as usize))
            }
        }
        d(self, 0)
    }
}

#[derive(Debug, Clone, Copy)]
pub(crate) struct GrowParams {
    pub max_features: usize,
    pub min_leaf: usize,
    pub max_depth: usize,
}

/// Column copies and per-feature row orderings, computed once per dataset.
pub(crate) struct Presorted {
    pub cols: Vec<Vec<f64>>,
    pub order: Vec<Vec<u32>>,
}

impl Presorted {
    pub fn new(ds: &Dataset) -> Self {
        let cols: Vec<Vec<f64>> = (0..ds.p).map(|f| (0..ds.n).map(|i| ds.x[i * ds.p + f]).collect()).collect();
        let order = cols
            .iter()
            .map(|c| {
                let mut o: Vec<u32> = (0..ds.n as u32).collect();
                o.sort_by(|&a, &b| c[a as usize].total_cmp(&c[b as usize]).then(a.cmp(&b)));
                o
            })
            .collect();
        Presorted { cols, order }
    }
}

/// Grows a tree on targets `y` for the sample given by per-row
/// multiplicities `counts` (bootstrap or subsample membership).
pub(crate) fn grow<R: Rng>(pre: &Presorted, y: &[f64], counts: &[u32], params: GrowParams, rng: &mut R) -> Tree {
    let p = pre.cols.len();
    let m: usize = counts.iter().map(|&c| c as usize).sum();
    let mut lists: Vec<Vec<u32>> = pre
        .order
        .iter()
        .map(|o| {
            let mut v = Vec::with_capacity(m);
            for &r in o {
                for _ in 0..counts[r as usize] {
                    v.push(r);
                }
            }
            v
        })
        .collect();
    let mut scratch = vec![0u32; m];
    let mut nodes = vec![leaf(0.0)];
    // (node id, lo, hi, depth)
    let mut stack = vec![(0usize, 0usize, m, 0usize)];
    let sample_all = params.max_features >= p;
    while let Some((id, lo, hi, depth)) = stack.pop() {
        let rows = &lists[0][lo..hi];
        let (mut ymin, mut ymax, mut mean, mut sum) = (f64::INFINITY, f64::NEG_INFINITY, 0.0, 0.0);
        for (k, &r) in rows.iter().enumerate() {
            let v = y[r as usize];
            ymin = ymin.min(v);
            ymax = ymax.max(v);
            mean += (v - mean) / (k + 1) as f64;
            sum += v;
        }
        nodes[id].value = mean;
        let size = hi - lo;
        if size == 0 || ymin == ymax || depth >= params.max_depth || size < 2 * params.min_leaf {
            continue;
        }
        let features: Vec<usize> = if sample_all {
            (0..p).collect()
        } else {
            let mut f = rand::seq::index::sample(rng, p, params.max_features).into_vec();
            f.sort_unstable();
            f
        };
        let base = sum * sum / size as f64;
        let mut best: Option<(f64, usize, f64, usize)> = None; // gain, feature, threshold, n_left
        for &f in &features {
            let col = &pre.cols[f];
            let list = &lists[f][lo..hi];
            let mut sl = 0.0;
            for k in 1..size {
                sl += y[list[k - 1] as usize];
                let (a, b) = (col[list[k - 1] as usize], col[list[k] as usize]);
                if a == b || k < params.min_leaf || size - k < params.min_leaf {
                    continue;
                }
                let sr = sum - sl;
                let gain = sl * sl / k as f64 + sr * sr / (size - k) as f64 - base;
                if gain > 0.0 && best.is_none_or(|(g, ..)| gain > g) {
                    let mut t = 0.5 * (a + b);
                    if t >= b {
                        t = a;
                    }
                    best = Some((gain, f, t, k));
                }
            }
        }
        let Some((_, f, t, n_left)) = best else {
            continue;
        };
        let col = &pre.cols[f];
        for list in lists.iter_mut() {
            let seg = &mut list[lo..hi];
            let (mut l, mut r) = (0, n_left);
            for &row in seg.iter() {
                if col[row as usize] <= t {
                    scratch[l] = row;
                    l += 1;
                } else {
                    scratch[r] = row;
                    r += 1;
                }
            }
            seg.copy_from_slice(&scratch[..size]);
        }
        let left = nodes.len();
        nodes.push(leaf(0.0));
        nodes.push(leaf(0.0));
        nodes[id] = Node {
            feature: f as u32,
            threshold: t,
            left: left as u32,
            right: left as u32 + 1,
            value: nodes[id].value,
        };
        stack.push((left + 1, lo + n_left, hi, depth + 1));
        stack.push((left, lo, lo + n_left, depth + 1));
    }
    Tree { nodes }
}

fn leaf(value: f64) -> Node {
    Node {
        feature: LEAF,
        threshold: 0.0,
        left: 0,
        right: 0,
        value,
    }
}
