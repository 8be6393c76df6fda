//! Depth-limited regression trees fitted to gradient/hessian statistics with
//! exact greedy splits.

use serde::{Deserialize, Serialize};

const LEAF: i32 = -1;

/// Flat tree arrays in breadth-first order; node 0 is the root.
///
/// For a split node `feature[i] >= 0`, rows with `x[feature] < threshold`
/// go to `left[i]`, the rest to `right[i]`. Leaves have `feature[i] == -1`
/// and store their output in `value[i]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tree {
    feature: Vec<i32>,
    threshold: Vec<f64>,
    value: Vec<f64>,
    left: Vec<u32>,
    right: Vec<u32>,
}

impl Tree {
    pub fn predict(&self, x: &[f64]) -> f64 {
        let mut i = 0usize;
        loop {
            let f = self.feature[i];
            if f == LEAF {
                return self.value[i];
            }
            i = if x[f as usize] < self.threshold[i] {
                self.left[i] as usize
            } else {
                self.right[i] as usize
            };
        }
    }

    pub fn node_count(&self) -> usize {
        self.feature.len()
    }

    /// Features used by at least one split.
    pub fn split_features(&self) -> impl Iterator<Item = usize> + '_ {
        self.feature.iter().filter(|f| **f != LEAF).map(|f| *f as usize)
    }

    pub(crate) fn is_well_formed(&self, n_features: usize) -> bool {
        let n = self.feature.len();
        n > 0
            && [self.threshold.len(), self.value.len(), self.left.len(), self.right.len()]
                .iter()
                .all(|l| *l == n)
            && (0..n).all(|i| {
                let f = self.feature[i];
                f == LEAF
                    || ((f as usize) < n_features
                        && (self.left[i] as usize) > i
                        && (self.left[i] as usize) < n
                        && (self.right[i] as usize) > i
                        && (self.right[i] as usize) < n)
            })
    }

    fn push_leaf(&mut self, value: f64) -> usize {
        self.feature.push(LEAF);
        self.threshold.push(0.0);
        self.value.push(value);
        self.left.push(0);
        self.right.push(0);
        self.feature.len() - 1
    }
}

#[derive(Debug, Clone, Copy)]
pub(crate) struct TreeParams {
    pub max_depth: usize,
    pub lambda: f64,
    pub min_child_weight: f64,
    pub min_split_gain: f64,
}

/// Column-major training matrix with per-column row orders, sorted once and
/// reused by every tree of a boosting run.
pub(crate) struct Presorted<'a> {
    columns: &'a [Vec<f64>],
    order: Vec<Vec<u32>>,
}

impl<'a> Presorted<'a> {
    /// `rows` are the training rows available to this booster.
    pub fn new(columns: &'a [Vec<f64>], rows: &[u32]) -> Self {
        let order = columns
            .iter()
            .map(|col| {
                let mut o = rows.to_vec();
                o.sort_by(|a, b| col[*a as usize].total_cmp(&col[*b as usize]).then(a.cmp(b)));
                o
            })
            .collect();
        Self { columns, order }
    }
}

#[derive(Debug, Clone, Copy)]
struct Split {
    gain: f64,
    feature: usize,
    threshold: f64,
    gl: f64,
    hl: f64,
}

struct Open {
    node: usize,
    g: f64,
    h: f64,
}

fn score(g: f64, h: f64, lambda: f64) -> f64 {
    g * g / (h + lambda)
}

/// Fits one tree level by level. `member[r]` says whether row `r` is in this
/// round's sample; rows outside the sample are ignored.
pub(crate) fn fit_tree(
    data: &Presorted<'_>,
    member: &[bool],
    grad: &[f64],
    hess: &[f64],
    p: &TreeParams,
) -> Tree {
    let n_rows = member.len();
    let mut tree = Tree {
        feature: Vec::new(),
        threshold: Vec::new(),
        value: Vec::new(),
        left: Vec::new(),
        right: Vec::new(),
    };
    // slot of the open node each row sits in, or NONE
    const NONE: u32 = u32::MAX;
    let mut slot_of = vec![NONE; n_rows];
    let (mut g0, mut h0) = (0.0, 0.0);
    for &r in &data.order[0] {
        if member[r as usize] {
            slot_of[r as usize] = 0;
            g0 += grad[r as usize];
            h0 += hess[r as usize];
        }
    }
    let root = tree.push_leaf(-g0 / (h0 + p.lambda));
    let mut open = vec![Open { node: root, g: g0, h: h0 }];

    for _depth in 0..p.max_depth {
        if open.is_empty() {
            break;
        }
        let mut best: Vec<Option<Split>> = vec![None; open.len()];
        for (feature, order) in data.order.iter().enumerate() {
            let col = &data.columns[feature];
            let mut gl = vec![0.0; open.len()];
            let mut hl = vec![0.0; open.len()];
            let mut last: Vec<Option<f64>> = vec![None; open.len()];
            for &r in order {
                let r = r as usize;
                let s = slot_of[r];
                if s == NONE {
                    continue;
                }
                let s = s as usize;
                let v = col[r];
                if let Some(prev) = last[s] {
                    if v > prev {
                        let (g, h) = (open[s].g, open[s].h);
                        let (gr, hr) = (g - gl[s], h - hl[s]);
                        if hl[s] >= p.min_child_weight && hr >= p.min_child_weight {
                            let gain = score(gl[s], hl[s], p.lambda) + score(gr, hr, p.lambda)
                                - score(g, h, p.lambda);
                            // strict: ties keep the earlier feature and threshold
                            if gain > p.min_split_gain && best[s].is_none_or(|b| gain > b.gain) {
                                let mid = 0.5 * (prev + v);
                                best[s] = Some(Split {
                                    gain,
                                    feature,
                                    threshold: if mid > prev { mid } else { v },
                                    gl: gl[s],
                                    hl: hl[s],
                                });
                            }
                        }
                    }
                }
                gl[s] += grad[r];
                hl[s] += hess[r];
                last[s] = Some(v);
            }
        }

        let mut next = Vec::new();
        // new slot per (old slot, side)
        let mut child_slot = vec![[NONE, NONE]; open.len()];
        for (s, split) in best.iter().enumerate() {
            let Some(sp) = split else { continue };
            let o = &open[s];
            let (gr, hr) = (o.g - sp.gl, o.h - sp.hl);
            let l = tree.push_leaf(-sp.gl / (sp.hl + p.lambda));
            let r = tree.push_leaf(-gr / (hr + p.lambda));
            tree.feature[o.node] = sp.feature as i32;
            tree.threshold[o.node] = sp.threshold;
            tree.left[o.node] = l as u32;
            tree.right[o.node] = r as u32;
            child_slot[s] = [next.len() as u32, next.len() as u32 + 1];
            next.push(Open { node: l, g: sp.gl, h: sp.hl });
            next.push(Open { node: r, g: gr, h: hr });
        }
        for (r, slot) in slot_of.iter_mut().enumerate() {
            if *slot == NONE {
                continue;
            }
            let s = *slot as usize;
            *slot = match best[s] {
                Some(sp) => {
                    let side = usize::from(data.columns[sp.feature][r] >= sp.threshold);
                    child_slot[s][side]
                }
                None => NONE,
            };
        }
        open = next;
    }
    tree
}
