use crate::error::{Error, Result};

/// Quantile by linear interpolation of order statistics at position (n - 1)·q.
pub fn quantile_sorted(sorted: &[f64], q: f64) -> f64 {
    let pos = (sorted.len() - 1) as f64 * q;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (pos - lo as f64) * (sorted[hi] - sorted[lo])
}

/// Keep-mask for labels inside [Q1 - m·IQR, Q3 + m·IQR].
pub fn iqr_filter(labels: &[f64], multiplier: f64) -> Result<Vec<bool>> {
    if labels.len() < 4 {
        return Err(Error::Degenerate(format!(
            "IQR filtering needs at least 4 labels, got {}",
            labels.len()
        )));
    }
    if multiplier.is_infinite() && multiplier > 0.0 {
        return Ok(vec![true; labels.len()]);
    }
    let mut sorted = labels.to_vec();
    sorted.sort_by(f64::total_cmp);
    let q1 = quantile_sorted(&sorted, 0.25);
    let q3 = quantile_sorted(&sorted, 0.75);
    let iqr = q3 - q1;
    let (lo, hi) = (q1 - multiplier * iqr, q3 + multiplier * iqr);
    Ok(labels.iter().map(|&y| y >= lo && y <= hi).collect())
}
