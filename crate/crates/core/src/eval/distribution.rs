use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::quantile_sorted;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HistogramRow {
    pub bin_left: f64,
    pub bin_right: f64,
    pub count_true: usize,
    pub count_pred: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DensityRow {
    pub x: f64,
    pub density_true: f64,
    pub density_pred: f64,
}

pub const DENSITY_POINTS: usize = 200;

fn joint_range(y: &[f64], yhat: &[f64], range: Option<(f64, f64)>) -> Result<(f64, f64)> {
    if let Some((lo, hi)) = range {
        if !(lo.is_finite() && hi.is_finite() && lo < hi) {
            return Err(Error::Input(format!("histogram range ({lo}, {hi}) is not an increasing finite pair")));
        }
        return Ok((lo, hi));
    }
    let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
    for &v in y.iter().chain(yhat) {
        lo = lo.min(v);
        hi = hi.max(v);
    }
    if !lo.is_finite() {
        return Ok((0.0, 1.0));
    }
    if lo == hi {
        return Ok((lo - 0.5, hi + 0.5));
    }
    Ok((lo, hi))
}

fn check(y: &[f64], yhat: &[f64]) -> Result<()> {
    if y.iter().chain(yhat).any(|v| !v.is_finite()) {
        return Err(Error::Input("distribution inputs must be finite".into()));
    }
    Ok(())
}

/// Equal-width histogram of both series over their joint range (or `range`).
/// Values outside a given range land in the edge bins, so counts always sum to
/// the series lengths.
pub fn histogram(y: &[f64], yhat: &[f64], bins: usize, range: Option<(f64, f64)>) -> Result<Vec<HistogramRow>> {
    if bins == 0 {
        return Err(Error::Input("histogram needs at least one bin".into()));
    }
    check(y, yhat)?;
    let (lo, hi) = joint_range(y, yhat, range)?;
    let width = (hi - lo) / bins as f64;
    let bin_of = |v: f64| (((v - lo) / width).floor().max(0.0) as usize).min(bins - 1);
    let mut rows: Vec<HistogramRow> = (0..bins)
        .map(|b| HistogramRow {
            bin_left: lo + width * b as f64,
            bin_right: if b + 1 == bins { hi } else { lo + width * (b + 1) as f64 },
            count_true: 0,
            count_pred: 0,
        })
        .collect();
    for &v in y {
        rows[bin_of(v)].count_true += 1;
    }
    for &v in yhat {
        rows[bin_of(v)].count_pred += 1;
    }
    Ok(rows)
}

/// Center of the bin holding the most values of the first series.
pub fn modal_bin_center(rows: &[HistogramRow]) -> Option<f64> {
    let mut best: Option<&HistogramRow> = None;
    for r in rows {
        if best.is_none_or(|b| r.count_true > b.count_true) {
            best = Some(r);
        }
    }
    best.map(|r| 0.5 * (r.bin_left + r.bin_right))
}

/// `0.9 · min(σ, IQR/1.34) · n^(-1/5)`, falling back to σ and then 1 when a
/// spread estimate is zero.
pub fn silverman_bandwidth(xs: &[f64]) -> f64 {
    let n = xs.len();
    if n < 2 {
        return 1.0;
    }
    let mean = xs.iter().sum::<f64>() / n as f64;
    let sd = (xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1) as f64).sqrt();
    let mut sorted = xs.to_vec();
    sorted.sort_by(f64::total_cmp);
    let iqr = quantile_sorted(&sorted, 0.75) - quantile_sorted(&sorted, 0.25);
    let spread = match (sd > 0.0, iqr > 0.0) {
        (true, true) => sd.min(iqr / 1.34),
        (true, false) => sd,
        _ => return 1.0,
    };
    0.9 * spread * (n as f64).powf(-0.2)
}

fn kde(xs: &[f64], at: f64, h: f64) -> f64 {
    if xs.is_empty() {
        return 0.0;
    }
    let c = 1.0 / ((2.0 * std::f64::consts::PI).sqrt() * h * xs.len() as f64);
    c * xs.iter().map(|x| (-0.5 * ((at - x) / h).powi(2)).exp()).sum::<f64>()
}

/// Gaussian kernel density of both series at `points` evenly spaced grid
/// points spanning the joint range.
pub fn density(y: &[f64], yhat: &[f64], points: usize, range: Option<(f64, f64)>) -> Result<Vec<DensityRow>> {
    check(y, yhat)?;
    let (lo, hi) = joint_range(y, yhat, range)?;
    let (hy, hp) = (silverman_bandwidth(y), silverman_bandwidth(yhat));
    Ok((0..points)
        .map(|i| {
            let x = if points == 1 {
                0.5 * (lo + hi)
            } else {
                lo + (hi - lo) * i as f64 / (points - 1) as f64
            };
            DensityRow {
                x,
                density_true: kde(y, x, hy),
                density_pred: kde(yhat, x, hp),
            }
        })
        .collect())
}

pub fn histogram_csv(rows: &[HistogramRow]) -> String {
    let mut s = String::from("bin_left,bin_right,count_true,count_pred\n");
    for r in rows {
        s.push_str(&format!("{:.6},{:.6},{},{}\n", r.bin_left, r.bin_right, r.count_true, r.count_pred));
    }
    s
}

pub fn density_csv(rows: &[DensityRow]) -> String {
    let mut s = String::from("x,density_true,density_pred\n");
    for r in rows {
        s.push_str(&format!("{:.6},{:.8},{:.8}\n", r.x, r.density_true, r.density_pred));
    }
    s
}
