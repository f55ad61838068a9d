//! Weighted ridge regression solved on centered data.

use std::any::Any;

use serde::{Deserialize, Serialize};

use super::{HuberParams, Regressor, RegressorFactory, TrainData};
use crate::artifact::{Reader, Writer};
use crate::error::{Error, Result};
use crate::linalg::{cholesky_solve, Mat};
use crate::rng::RngSeed;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RidgeParams {
    pub l2: f64,
}

impl Default for RidgeParams {
    fn default() -> Self {
        RidgeParams { l2: 1.0 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RidgeModel {
    pub weights: Vec<f64>,
    pub bias: f64,
    pub l2: f64,
}

impl RidgeModel {
    /// Solves `(XcᵀWXc + l2·I) w = XcᵀW(y − ȳ)` where `Xc` is column-centered
    /// with the weighted means. The Huber objective does not apply here.
    pub fn fit(data: &TrainData<'_>, l2: f64) -> Result<Self> {
        if !(l2 >= 0.0 && l2.is_finite()) {
            return Err(Error::Input(format!("l2 must be finite and nonnegative, got {l2}")));
        }
        let (n, d) = (data.rows, data.cols);
        let total: f64 = data.weights.iter().sum();
        let mut mean = vec![0.0; d];
        let mut y_mean = 0.0;
        for r in 0..n {
            let w = data.weights[r];
            for (m, v) in mean.iter_mut().zip(data.row(r)) {
                *m += w * v;
            }
            y_mean += w * data.y[r];
        }
        mean.iter_mut().for_each(|m| *m /= total);
        y_mean /= total;

        let mut a = Mat::zeros(d, d);
        let mut b = vec![0.0; d];
        let mut xc = vec![0.0; d];
        for r in 0..n {
            let w = data.weights[r];
            if w == 0.0 {
                continue;
            }
            for ((c, v), m) in xc.iter_mut().zip(data.row(r)).zip(&mean) {
                *c = v - m;
            }
            let yc = data.y[r] - y_mean;
            for i in 0..d {
                let wi = w * xc[i];
                b[i] += wi * yc;
                for j in 0..=i {
                    a.data[i * d + j] += wi * xc[j];
                }
            }
        }
        for i in 0..d {
            for j in 0..i {
                a.data[j * d + i] = a.data[i * d + j];
            }
            a.data[i * d + i] += l2;
        }
        let mut weights = cholesky_solve(&a, &b).map_err(|e| match e {
            Error::Singular(m) if l2 == 0.0 => Error::Singular(format!("ridge with l2 = 0: {m}")),
            other => other,
        })?;
        // one step of iterative refinement
        let resid: Vec<f64> = (0..d)
            .map(|i| b[i] - (0..d).map(|j| a.data[i * d + j] * weights[j]).sum::<f64>())
            .collect();
        let delta = cholesky_solve(&a, &resid)?;
        weights.iter_mut().zip(&delta).for_each(|(w, e)| *w += e);
        let bias = y_mean - weights.iter().zip(&mean).map(|(w, m)| w * m).sum::<f64>();
        if !bias.is_finite() || weights.iter().any(|w| !w.is_finite()) {
            return Err(Error::Singular("ridge solution is not finite".into()));
        }
        Ok(RidgeModel { weights, bias, l2 })
    }

    fn read_body(r: &mut Reader<'_>) -> Result<Self> {
        Ok(RidgeModel {
            weights: r.f64s()?,
            bias: r.f64()?,
            l2: r.f64()?,
        })
    }
}

impl Regressor for RidgeModel {
    fn kind(&self) -> &'static str {
        "ridge"
    }

    fn feature_count(&self) -> usize {
        self.weights.len()
    }

    fn predict_row(&self, row: &[f64]) -> f64 {
        self.bias + self.weights.iter().zip(row).map(|(w, x)| w * x).sum::<f64>()
    }

    fn write(&self, w: &mut Writer) {
        w.f64s(&self.weights);
        w.f64(self.bias);
        w.f64(self.l2);
    }

    fn as_any(&self) -> &dyn Any {
        self
    }
}

pub struct RidgeFactory(pub RidgeParams);

impl RegressorFactory for RidgeFactory {
    fn name(&self) -> &'static str {
        "ridge"
    }

    fn description(&self) -> &'static str {
        "weighted ridge regression, Cholesky solve on centered data"
    }

    fn fit(&self, data: &TrainData<'_>, _huber: HuberParams, _seed: RngSeed) -> Result<Box<dyn Regressor>> {
        Ok(Box::new(RidgeModel::fit(data, self.0.l2)?))
    }

    fn load(&self, r: &mut Reader<'_>) -> Result<Box<dyn Regressor>> {
        Ok(Box::new(RidgeModel::read_body(r)?))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn random(rows: usize, cols: usize, seed: u64) -> (Vec<f64>, Vec<f64>) {
        let mut rng = RngSeed(seed).rng();
        let x: Vec<f64> = (0..rows * cols).map(|_| rng.normal()).collect();
        let y = (0..rows).map(|_| rng.normal() * 3.0 + 1.0).collect();
        (x, y)
    }

    /// Gauss-Jordan inverse with partial pivoting.
    fn invert(a: &[f64], n: usize) -> Vec<f64> {
        let mut m = a.to_vec();
        let mut inv = vec![0.0; n * n];
        for i in 0..n {
            inv[i * n + i] = 1.0;
        }
        for c in 0..n {
            let p = (c..n).max_by(|&i, &j| m[i * n + c].abs().total_cmp(&m[j * n + c].abs())).unwrap();
            for k in 0..n {
                m.swap(c * n + k, p * n + k);
                inv.swap(c * n + k, p * n + k);
            }
            let d = m[c * n + c];
            for k in 0..n {
                m[c * n + k] /= d;
                inv[c * n + k] /= d;
            }
            for r in 0..n {
                if r != c {
                    let f = m[r * n + c];
                    for k in 0..n {
                        m[r * n + k] -= f * m[c * n + k];
                        inv[r * n + k] -= f * inv[c * n + k];
                    }
                }
            }
        }
        inv
    }

    #[test]
    fn exact_linear_target() {
        let (x, _) = random(50, 3, 1);
        let y: Vec<f64> = (0..50).map(|r| 2.0 * x[r * 3]).collect();
        let w = vec![1.0; 50];
        let m = RidgeModel::fit(&TrainData::new(&x, 3, &y, &w, &[]).unwrap(), 1e-9).unwrap();
        assert!((m.weights[0] - 2.0).abs() < 1e-6);
        assert!(m.weights[1].abs() < 1e-6 && m.bias.abs() < 1e-6);
    }

    #[test]
    fn huge_penalty_predicts_the_mean() {
        let (x, y) = random(40, 4, 2);
        let w = vec![1.0; 40];
        let m = RidgeModel::fit(&TrainData::new(&x, 4, &y, &w, &[]).unwrap(), 1e12).unwrap();
        let mean = y.iter().sum::<f64>() / 40.0;
        assert!(m.weights.iter().all(|w| w.abs() < 1e-8));
        for p in m.predict(&x, 4).unwrap() {
            assert!((p - mean).abs() < 1e-8);
        }
    }

    #[test]
    fn matches_dense_inverse_and_satisfies_normal_equations() {
        for seed in 0..10 {
            let (rows, cols) = (30, 5);
            let (x, y) = random(rows, cols, 100 + seed);
            let w = vec![1.0; rows];
            let l2 = 0.3;
            let m = RidgeModel::fit(&TrainData::new(&x, cols, &y, &w, &[]).unwrap(), l2).unwrap();
            let xm: Vec<f64> = (0..cols).map(|c| (0..rows).map(|r| x[r * cols + c]).sum::<f64>() / rows as f64).collect();
            let ym = y.iter().sum::<f64>() / rows as f64;
            let mut a = vec![0.0; cols * cols];
            let mut b = vec![0.0; cols];
            let mut xty = vec![0.0; cols];
            for r in 0..rows {
                for i in 0..cols {
                    let xi = x[r * cols + i] - xm[i];
                    b[i] += xi * (y[r] - ym);
                    xty[i] += x[r * cols + i] * y[r];
                    for j in 0..cols {
                        a[i * cols + j] += xi * (x[r * cols + j] - xm[j]);
                    }
                }
            }
            for i in 0..cols {
                a[i * cols + i] += l2;
            }
            let inv = invert(&a, cols);
            for i in 0..cols {
                let expect: f64 = (0..cols).map(|j| inv[i * cols + j] * b[j]).sum();
                assert!((m.weights[i] - expect).abs() < 1e-8);
            }
            let xty_norm = xty.iter().map(|v| v * v).sum::<f64>().sqrt();
            let resid = (0..cols)
                .map(|i| {
                    let r = b[i] - (0..cols).map(|j| a[i * cols + j] * m.weights[j]).sum::<f64>();
                    r * r
                })
                .sum::<f64>()
                .sqrt();
            assert!(resid <= 1e-8 * xty_norm);
        }
    }

    #[test]
    fn singular_without_penalty() {
        let x: Vec<f64> = (0..20).flat_map(|r| [r as f64, 2.0 * r as f64]).collect();
        let y: Vec<f64> = (0..20).map(f64::from).collect();
        let w = vec![1.0; 20];
        let data = TrainData::new(&x, 2, &y, &w, &[]).unwrap();
        assert!(matches!(RidgeModel::fit(&data, 0.0), Err(Error::Singular(_))));
        assert!(RidgeModel::fit(&data, 1e-3).is_ok());
    }
}
