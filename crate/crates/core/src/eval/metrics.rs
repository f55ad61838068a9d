use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Fractional ranks (1-based); tied values share the mean of their positions.
pub fn average_ranks(xs: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..xs.len()).collect();
    order.sort_by(|&a, &b| xs[a].total_cmp(&xs[b]));
    let mut ranks = vec![0.0; xs.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i + 1;
        while j < order.len() && xs[order[j]] == xs[order[i]] {
            j += 1;
        }
        // positions i..j hold rank (i+1)..=j
        let r = (i + 1 + j) as f64 / 2.0;
        for &k in &order[i..j] {
            ranks[k] = r;
        }
        i = j;
    }
    ranks
}

fn check_pair(y: &[f64], yhat: &[f64]) -> Result<()> {
    if y.len() != yhat.len() {
        return Err(Error::Shape(format!(
            "labels have {} entries, predictions {}",
            y.len(),
            yhat.len()
        )));
    }
    if y.iter().chain(yhat).any(|v| !v.is_finite()) {
        return Err(Error::Input("metric inputs must be finite".into()));
    }
    Ok(())
}

/// Spearman rank correlation: Pearson correlation of the average-rank vectors.
pub fn spearman(y: &[f64], yhat: &[f64]) -> Result<f64> {
    check_pair(y, yhat)?;
    let n = y.len();
    if n < 2 {
        return Err(Error::UndefinedCorrelation(format!("need at least 2 points, got {n}")));
    }
    let (a, b) = (average_ranks(y), average_ranks(yhat));
    let mean = (n + 1) as f64 / 2.0;
    let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
    for (x, z) in a.iter().zip(&b) {
        let (dx, dz) = (x - mean, z - mean);
        sab += dx * dz;
        saa += dx * dx;
        sbb += dz * dz;
    }
    if saa == 0.0 || sbb == 0.0 {
        return Err(Error::UndefinedCorrelation("one input is constant".into()));
    }
    Ok((sab / (saa.sqrt() * sbb.sqrt())).clamp(-1.0, 1.0))
}

/// Mean absolute error.
pub fn mae(y: &[f64], yhat: &[f64]) -> Result<f64> {
    check_pair(y, yhat)?;
    if y.is_empty() {
        return Err(Error::Shape("mae of an empty vector".into()));
    }
    Ok(y.iter().zip(yhat).map(|(a, b)| (a - b).abs()).sum::<f64>() / y.len() as f64)
}

/// The `{src, mae, n}` metrics object.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub src: f64,
    pub mae: f64,
    pub n: usize,
}

impl Metrics {
    pub fn compute(y: &[f64], yhat: &[f64]) -> Result<Self> {
        Ok(Metrics {
            src: spearman(y, yhat)?,
            mae: mae(y, yhat)?,
            n: y.len(),
        })
    }

    /// Like [`Metrics::compute`], but an undefined correlation reports SRC 0.
    pub fn compute_lenient(y: &[f64], yhat: &[f64]) -> Result<Self> {
        let src = match spearman(y, yhat) {
            Ok(v) => v,
            Err(Error::UndefinedCorrelation(_)) => 0.0,
            Err(e) => return Err(e),
        };
        Ok(Metrics {
            src,
            mae: mae(y, yhat)?,
            n: y.len(),
        })
    }
}
