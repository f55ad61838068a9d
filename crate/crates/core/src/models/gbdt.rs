//! Gradient-boosted regression trees under the Huber objective.
//!
//! Trees are grown level by level with exact greedy splits: for every
//! feature the training rows are walked once in presorted order, and each
//! active node accumulates its left-hand gradient sums as it goes. A split
//! maximizes the weighted variance reduction of the negative gradients;
//! ties go to the lowest feature index, then the lowest threshold. Leaves
//! hold the weighted mean negative gradient scaled by the learning rate.

use std::any::Any;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{huber_loss, mean_huber, HuberParams, Regressor, RegressorFactory, TrainData};
use crate::artifact::{Reader, Writer};
use crate::error::{Error, Result};
use crate::rng::RngSeed;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GbdtParams {
    pub n_trees: usize,
    pub learning_rate: f64,
    pub max_depth: usize,
    pub min_leaf: usize,
}

impl Default for GbdtParams {
    fn default() -> Self {
        GbdtParams {
            n_trees: 150,
            learning_rate: 0.1,
            max_depth: 4,
            min_leaf: 20,
        }
    }
}

const LEAF: u32 = u32::MAX;
const MIN_GAIN: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq)]
pub struct Node {
    pub feature: u32,
    pub threshold: f64,
    pub left: u32,
    pub right: u32,
    pub value: f64,
}

impl Node {
    fn leaf(value: f64) -> Self {
        Node {
            feature: LEAF,
            threshold: 0.0,
            left: 0,
            right: 0,
            value,
        }
    }

    pub fn is_leaf(&self) -> bool {
        self.feature == LEAF
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Tree {
    pub nodes: Vec<Node>,
}

impl Tree {
    pub fn predict(&self, row: &[f64]) -> f64 {
        let mut i = 0usize;
        loop {
            let n = &self.nodes[i];
            if n.is_leaf() {
                return n.value;
            }
            i = if row[n.feature as usize] <= n.threshold {
                n.left as usize
            } else {
                n.right as usize
            };
        }
    }

    pub fn depth(&self) -> usize {
        fn go(t: &Tree, i: usize) -> usize {
            let n = &t.nodes[i];
            if n.is_leaf() {
                0
            } else {
                1 + go(t, n.left as usize).max(go(t, n.right as usize))
            }
        }
        go(self, 0)
    }

    pub fn leaf_count(&self) -> usize {
        self.nodes.iter().filter(|n| n.is_leaf()).count()
    }

    /// Features used by any split.
    pub fn split_features(&self) -> impl Iterator<Item = usize> + '_ {
        self.nodes.iter().filter(|n| !n.is_leaf()).map(|n| n.feature as usize)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GbdtModel {
    pub base_score: f64,
    pub trees: Vec<Tree>,
    pub learning_rate: f64,
    pub max_depth: usize,
    pub min_leaf: usize,
    pub n_trees: usize,
    pub feature_count: usize,
    /// Weighted mean training Huber loss after the base score and after each round.
    pub train_loss: Vec<f64>,
}

fn median(ys: &[f64]) -> f64 {
    let mut s = ys.to_vec();
    s.sort_by(f64::total_cmp);
    let n = s.len();
    if n % 2 == 1 {
        s[n / 2]
    } else {
        0.5 * (s[n / 2 - 1] + s[n / 2])
    }
}

/// Feature values stored column-major with a per-feature sort order.
struct Presorted {
    columns: Vec<Vec<f64>>,
    order: Vec<Vec<u32>>,
}

impl Presorted {
    fn new(data: &TrainData<'_>) -> Self {
        let columns: Vec<Vec<f64>> = (0..data.cols)
            .map(|c| (0..data.rows).map(|r| data.x[r * data.cols + c]).collect())
            .collect();
        let order = columns
            .par_iter()
            .map(|col| {
                let mut idx: Vec<u32> = (0..col.len() as u32).collect();
                idx.sort_by(|&a, &b| col[a as usize].total_cmp(&col[b as usize]).then(a.cmp(&b)));
                idx
            })
            .collect();
        Presorted { columns, order }
    }
}

#[derive(Clone, Copy, Default)]
struct Stats {
    grad: f64,
    weight: f64,
    count: usize,
}

#[derive(Clone, Copy)]
struct Split {
    gain: f64,
    feature: usize,
    threshold: f64,
}

fn score(s: f64, w: f64) -> f64 {
    if w > 0.0 {
        s * s / w
    } else {
        0.0
    }
}

/// A threshold strictly between `lo` and `hi` (lo < hi) that sends `lo` left.
fn midpoint(lo: f64, hi: f64) -> f64 {
    let m = lo + (hi - lo) / 2.0;
    if m >= hi {
        lo
    } else {
        m
    }
}

fn best_split_for_feature(
    feature: usize,
    pre: &Presorted,
    node_slot: &[u32],
    totals: &[Stats],
    neg_grad: &[f64],
    weights: &[f64],
    min_leaf: usize,
) -> Vec<Option<Split>> {
    let k = totals.len();
    let mut left = vec![Stats::default(); k];
    let mut last = vec![f64::NAN; k];
    let mut best: Vec<Option<Split>> = vec![None; k];
    let col = &pre.columns[feature];
    for &r in &pre.order[feature] {
        let r = r as usize;
        let slot = node_slot[r];
        if slot == LEAF {
            continue;
        }
        let slot = slot as usize;
        let x = col[r];
        let l = &mut left[slot];
        if l.count >= min_leaf && totals[slot].count - l.count >= min_leaf && x > last[slot] {
            let t = totals[slot];
            let gain = score(l.grad, l.weight) + score(t.grad - l.grad, t.weight - l.weight)
                - score(t.grad, t.weight);
            if gain > MIN_GAIN && best[slot].is_none_or(|b| gain > b.gain) {
                best[slot] = Some(Split {
                    gain,
                    feature,
                    threshold: midpoint(last[slot], x),
                });
            }
        }
        l.grad += weights[r] * neg_grad[r];
        l.weight += weights[r];
        l.count += 1;
        last[slot] = x;
    }
    best
}

/// Grow one tree on the negative gradients. Returns the tree and each row's leaf value.
fn grow_tree(
    pre: &Presorted,
    neg_grad: &[f64],
    weights: &[f64],
    max_depth: usize,
    min_leaf: usize,
    learning_rate: f64,
) -> (Tree, Vec<f64>) {
    let rows = neg_grad.len();
    let mut node_of = vec![0u32; rows];
    let mut nodes = vec![Node::leaf(0.0)];
    let mut active: Vec<u32> = vec![0];
    let total = (0..rows).fold(Stats::default(), |s, r| Stats {
        grad: s.grad + weights[r] * neg_grad[r],
        weight: s.weight + weights[r],
        count: s.count + 1,
    });
    let mut stats = vec![total];

    for _depth in 0..max_depth {
        if active.is_empty() {
            break;
        }
        let mut slot_of_node = vec![LEAF; nodes.len()];
        for (s, &n) in active.iter().enumerate() {
            slot_of_node[n as usize] = s as u32;
        }
        let node_slot: Vec<u32> = node_of.iter().map(|&n| slot_of_node[n as usize]).collect();
        let totals: Vec<Stats> = active.iter().map(|&n| stats[n as usize]).collect();
        let per_feature: Vec<Vec<Option<Split>>> = (0..pre.columns.len())
            .into_par_iter()
            .map(|f| best_split_for_feature(f, pre, &node_slot, &totals, neg_grad, weights, min_leaf))
            .collect();
        let mut best: Vec<Option<Split>> = vec![None; active.len()];
        for candidates in &per_feature {
            for (b, c) in best.iter_mut().zip(candidates) {
                if let Some(c) = c {
                    if b.is_none_or(|cur| c.gain > cur.gain) {
                        *b = Some(*c);
                    }
                }
            }
        }
        let mut next = Vec::new();
        let mut split_of_node: Vec<Option<(Split, u32, u32)>> = vec![None; nodes.len()];
        for (slot, &n) in active.iter().enumerate() {
            if let Some(s) = best[slot] {
                let l = nodes.len() as u32;
                nodes.push(Node::leaf(0.0));
                nodes.push(Node::leaf(0.0));
                stats.push(Stats::default());
                stats.push(Stats::default());
                let node = &mut nodes[n as usize];
                node.feature = s.feature as u32;
                node.threshold = s.threshold;
                node.left = l;
                node.right = l + 1;
                split_of_node[n as usize] = Some((s, l, l + 1));
                next.push(l);
                next.push(l + 1);
            }
        }
        if next.is_empty() {
            break;
        }
        for r in 0..rows {
            if let Some(Some((s, l, rt))) = split_of_node.get(node_of[r] as usize) {
                let child = if pre.columns[s.feature][r] <= s.threshold { *l } else { *rt };
                node_of[r] = child;
                let st = &mut stats[child as usize];
                st.grad += weights[r] * neg_grad[r];
                st.weight += weights[r];
                st.count += 1;
            }
        }
        active = next;
    }
    for (i, n) in nodes.iter_mut().enumerate() {
        if n.is_leaf() {
            let s = stats[i];
            n.value = if s.weight > 0.0 {
                learning_rate * s.grad / s.weight
            } else {
                0.0
            };
        }
    }
    let per_row = node_of.iter().map(|&n| nodes[n as usize].value).collect();
    (Tree { nodes }, per_row)
}

impl GbdtModel {
    pub fn fit(data: &TrainData<'_>, params: &GbdtParams, huber: HuberParams) -> Result<Self> {
        if params.min_leaf == 0 || data.rows < 2 * params.min_leaf {
            return Err(Error::Shape(format!(
                "gbdt needs at least 2 x min_leaf = {} rows, got {}",
                2 * params.min_leaf,
                data.rows
            )));
        }
        if !(params.learning_rate > 0.0 && params.learning_rate <= 1.0) {
            return Err(Error::Input(format!(
                "learning_rate must be in (0, 1], got {}",
                params.learning_rate
            )));
        }
        let pre = Presorted::new(data);
        let base_score = median(data.y);
        let mut pred = vec![base_score; data.rows];
        let mut trees = Vec::with_capacity(params.n_trees);
        let mut train_loss = vec![mean_huber(data.y, &pred, data.weights, huber)];
        let mut neg_grad = vec![0.0; data.rows];
        for _ in 0..params.n_trees {
            for (g, (&y, &p)) in neg_grad.iter_mut().zip(data.y.iter().zip(&pred)) {
                *g = -huber_loss(y, p, huber).1;
            }
            let (tree, step) = grow_tree(
                &pre,
                &neg_grad,
                data.weights,
                params.max_depth,
                params.min_leaf,
                params.learning_rate,
            );
            for (p, s) in pred.iter_mut().zip(&step) {
                *p += s;
            }
            trees.push(tree);
            train_loss.push(mean_huber(data.y, &pred, data.weights, huber));
        }
        Ok(GbdtModel {
            base_score,
            trees,
            learning_rate: params.learning_rate,
            max_depth: params.max_depth,
            min_leaf: params.min_leaf,
            n_trees: params.n_trees,
            feature_count: data.cols,
            train_loss,
        })
    }

    /// Features split on by any tree.
    pub fn used_features(&self) -> Vec<bool> {
        let mut used = vec![false; self.feature_count];
        for t in &self.trees {
            for f in t.split_features() {
                used[f] = true;
            }
        }
        used
    }

    fn read_body(r: &mut Reader<'_>) -> Result<Self> {
        let base_score = r.f64()?;
        let learning_rate = r.f64()?;
        let max_depth = r.usize()?;
        let min_leaf = r.usize()?;
        let n_trees = r.usize()?;
        let feature_count = r.usize()?;
        let train_loss = r.f64s()?;
        let count = r.usize()?;
        let mut trees = Vec::with_capacity(count.min(1 << 20));
        for _ in 0..count {
            let n = r.usize()?;
            let mut nodes = Vec::with_capacity(n.min(1 << 20));
            for _ in 0..n {
                let feature = r.u32()?;
                let node = Node {
                    feature,
                    threshold: r.f64()?,
                    left: r.u32()?,
                    right: r.u32()?,
                    value: r.f64()?,
                };
                if !node.is_leaf()
                    && (feature as usize >= feature_count
                        || node.left as usize >= n
                        || node.right as usize >= n)
                {
                    return Err(r.err("tree node references out of range"));
                }
                nodes.push(node);
            }
            if nodes.is_empty() {
                return Err(r.err("tree without nodes"));
            }
            trees.push(Tree { nodes });
        }
        Ok(GbdtModel {
            base_score,
            trees,
            learning_rate,
            max_depth,
            min_leaf,
            n_trees,
            feature_count,
            train_loss,
        })
    }
}

impl Regressor for GbdtModel {
    fn kind(&self) -> &'static str {
        "gbdt"
    }

    fn feature_count(&self) -> usize {
        self.feature_count
    }

    fn predict_row(&self, row: &[f64]) -> f64 {
        self.trees.iter().fold(self.base_score, |acc, t| acc + t.predict(row))
    }

    fn write(&self, w: &mut Writer) {
        w.f64(self.base_score);
        w.f64(self.learning_rate);
        w.usize(self.max_depth);
        w.usize(self.min_leaf);
        w.usize(self.n_trees);
        w.usize(self.feature_count);
        w.f64s(&self.train_loss);
        w.usize(self.trees.len());
        for t in &self.trees {
            w.usize(t.nodes.len());
            for n in &t.nodes {
                w.u32(n.feature);
                w.f64(n.threshold);
                w.u32(n.left);
                w.u32(n.right);
                w.f64(n.value);
            }
        }
    }

    fn as_any(&self) -> &dyn Any {
        self
    }
}

pub struct GbdtFactory(pub GbdtParams);

impl RegressorFactory for GbdtFactory {
    fn name(&self) -> &'static str {
        "gbdt"
    }

    fn description(&self) -> &'static str {
        "gradient-boosted regression trees, exact greedy splits, Huber gradients"
    }

    fn fit(&self, data: &TrainData<'_>, huber: HuberParams, _seed: RngSeed) -> Result<Box<dyn Regressor>> {
        Ok(Box::new(GbdtModel::fit(data, &self.0, huber)?))
    }

    fn load(&self, r: &mut Reader<'_>) -> Result<Box<dyn Regressor>> {
        Ok(Box::new(GbdtModel::read_body(r)?))
    }
}
