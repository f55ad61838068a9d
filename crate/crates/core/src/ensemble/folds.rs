use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::RngSeed;

/// Assignment of `n` rows to `k` validation folds.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FoldPlan {
    pub k: usize,
    pub assignments: Vec<usize>,
    pub seed: RngSeed,
}

impl FoldPlan {
    /// Row positions whose validation fold is `fold`.
    pub fn validation(&self, fold: usize) -> Vec<usize> {
        (0..self.assignments.len()).filter(|&i| self.assignments[i] == fold).collect()
    }

    pub fn training(&self, fold: usize) -> Vec<usize> {
        (0..self.assignments.len()).filter(|&i| self.assignments[i] != fold).collect()
    }

    pub fn sizes(&self) -> Vec<usize> {
        let mut s = vec![0; self.k];
        for &a in &self.assignments {
            s[a] += 1;
        }
        s
    }
}

fn check(n: usize, k: usize) -> Result<()> {
    if k < 2 {
        return Err(Error::Fold(format!("k must be at least 2, got {k}")));
    }
    if n < k {
        return Err(Error::Fold(format!("{n} rows cannot fill {k} folds")));
    }
    Ok(())
}

/// Seeded shuffle followed by round-robin assignment.
pub fn make_folds(n: usize, k: usize, seed: RngSeed) -> Result<FoldPlan> {
    check(n, k)?;
    let order = seed.rng().permutation(n);
    let mut assignments = vec![0; n];
    for (i, &row) in order.iter().enumerate() {
        assignments[row] = i % k;
    }
    Ok(FoldPlan { k, assignments, seed })
}

/// Like [`make_folds`], but rows are grouped by label decile before the
/// round-robin pass so every fold sees the whole label range.
pub fn make_stratified_folds(labels: &[f64], k: usize, seed: RngSeed) -> Result<FoldPlan> {
    let n = labels.len();
    check(n, k)?;
    let mut by_label: Vec<usize> = (0..n).collect();
    by_label.sort_by(|&a, &b| labels[a].total_cmp(&labels[b]).then(a.cmp(&b)));
    let mut decile = vec![0usize; n];
    for (pos, &row) in by_label.iter().enumerate() {
        decile[row] = pos * 10 / n;
    }
    let mut order = seed.rng().permutation(n);
    order.sort_by_key(|&r| decile[r]);
    let mut assignments = vec![0; n];
    for (i, &row) in order.iter().enumerate() {
        assignments[row] = i % k;
    }
    Ok(FoldPlan { k, assignments, seed })
}
