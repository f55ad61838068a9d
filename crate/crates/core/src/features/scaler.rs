use crate::artifact::{Reader, Writer};
use crate::error::Result;

pub const STD_FLOOR: f64 = 1e-12;

/// Per-column standardization with population statistics.
#[derive(Debug, Clone, PartialEq)]
pub struct ScalerModel {
    pub means: Vec<f64>,
    pub stds: Vec<f64>,
}

impl ScalerModel {
    /// Fit on a row-major `rows × cols` matrix.
    pub fn fit(data: &[f64], rows: usize, cols: usize) -> Self {
        assert_eq!(data.len(), rows * cols);
        let mut means = vec![0.0; cols];
        let mut stds = vec![STD_FLOOR; cols];
        if rows == 0 {
            return ScalerModel { means, stds };
        }
        for c in 0..cols {
            let col = (0..rows).map(|r| data[r * cols + c]);
            let first = data[c];
            if col.clone().all(|v| v == first) {
                means[c] = first;
                continue;
            }
            let mean = col.clone().sum::<f64>() / rows as f64;
            let var = col.map(|v| (v - mean) * (v - mean)).sum::<f64>() / rows as f64;
            means[c] = mean;
            stds[c] = var.sqrt().max(STD_FLOOR);
        }
        ScalerModel { means, stds }
    }

    /// Columns that were constant at fit time map to 0 for every row, including
    /// rows whose value differs from the fitted constant.
    pub fn apply(&self, data: &[f64]) -> Vec<f64> {
        let cols = self.means.len();
        data.chunks_exact(cols)
            .flat_map(|row| {
                row.iter().enumerate().map(|(c, v)| {
                    if self.stds[c] <= STD_FLOOR {
                        0.0
                    } else {
                        (v - self.means[c]) / self.stds[c]
                    }
                })
            })
            .collect()
    }

    pub fn write(&self, w: &mut Writer) {
        w.f64s(&self.means);
        w.f64s(&self.stds);
    }

    pub fn read(r: &mut Reader<'_>) -> Result<Self> {
        let means = r.f64s()?;
        let stds = r.f64s()?;
        if means.len() != stds.len() {
            return Err(r.err("scaler means/stds length mismatch"));
        }
        Ok(ScalerModel { means, stds })
    }
}
