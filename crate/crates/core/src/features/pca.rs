use crate::artifact::{Reader, Writer};
use crate::error::{Error, Result};
use crate::linalg::{truncated_svd, Mat, SvdOptions};
use crate::rng::RngSeed;

#[derive(Debug, Clone, PartialEq)]
pub struct PcaModel {
    pub mean: Vec<f64>,
    /// k × D, rows orthonormal.
    pub components: Mat,
    pub explained_variance: Vec<f64>,
}

impl PcaModel {
    /// Principal directions of the centered rows of `x` (R × D).
    pub fn fit(x: &Mat, k: usize, seed: RngSeed) -> Result<Self> {
        let (rows, d) = (x.rows, x.cols);
        if k == 0 || rows < 2 || k > (rows - 1).min(d) {
            return Err(Error::Rank(format!(
                "PCA needs 1 <= k <= min(R - 1, D); got k = {k}, R = {rows}, D = {d}"
            )));
        }
        let mut mean = vec![0.0; d];
        for r in 0..rows {
            for (m, v) in mean.iter_mut().zip(x.row(r)) {
                *m += v;
            }
        }
        mean.iter_mut().for_each(|m| *m /= rows as f64);
        let mut centered = x.clone();
        for r in 0..rows {
            for c in 0..d {
                centered[(r, c)] -= mean[c];
            }
        }
        let svd = truncated_svd(
            &centered,
            k,
            SvdOptions {
                seed,
                ..SvdOptions::default()
            },
        )?;
        let explained_variance = svd
            .sigma
            .iter()
            .map(|s| s * s / (rows - 1) as f64)
            .collect();
        Ok(PcaModel {
            mean,
            components: svd.v.transpose(),
            explained_variance,
        })
    }

    pub fn k(&self) -> usize {
        self.components.rows
    }

    /// (x - mean) · componentsᵀ.
    pub fn apply(&self, x: &Mat) -> Result<Mat> {
        if x.cols != self.mean.len() {
            return Err(Error::Shape(format!(
                "PCA fitted on {} columns, got {}",
                self.mean.len(),
                x.cols
            )));
        }
        let mut centered = x.clone();
        for r in 0..x.rows {
            for c in 0..x.cols {
                centered[(r, c)] -= self.mean[c];
            }
        }
        Ok(centered.matmul(&self.components.transpose()))
    }

    pub fn write(&self, w: &mut Writer) {
        w.f64s(&self.mean);
        w.usize(self.components.rows);
        w.f64s(&self.components.data);
        w.f64s(&self.explained_variance);
    }

    pub fn read(r: &mut Reader<'_>) -> Result<Self> {
        let mean = r.f64s()?;
        let k = r.usize()?;
        let comps = r.f64s()?;
        let explained_variance = r.f64s()?;
        if comps.len() != k * mean.len() || explained_variance.len() != k {
            return Err(r.err("PCA component shapes inconsistent"));
        }
        Ok(PcaModel {
            components: Mat::from_vec(k, mean.len(), comps),
            mean,
            explained_variance,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn points_on_a_line() {
        let x = Mat::from_vec(4, 2, vec![1.0, 1.0, 2.0, 2.0, -1.0, -1.0, 5.0, 5.0]);
        let p = PcaModel::fit(&x, 2, RngSeed(0)).unwrap();
        let h = 1.0 / 2f64.sqrt();
        assert!((p.components[(0, 0)].abs() - h).abs() < 1e-12);
        assert!((p.components[(0, 1)].abs() - h).abs() < 1e-12);
        assert!(p.explained_variance[1].abs() < 1e-12);
    }

    #[test]
    fn full_rank_reconstructs() {
        let mut r = RngSeed(4).rng();
        let x = Mat::from_vec(12, 5, (0..60).map(|_| r.normal()).collect());
        let p = PcaModel::fit(&x, 5, RngSeed(1)).unwrap();
        let z = p.apply(&x).unwrap();
        let back = z.matmul(&p.components);
        for row in 0..12 {
            for c in 0..5 {
                assert!((back[(row, c)] + p.mean[c] - x[(row, c)]).abs() < 1e-8);
            }
        }
        assert!(p.explained_variance.windows(2).all(|w| w[0] >= w[1]));
    }

    #[test]
    fn rank_errors() {
        let x = Mat::zeros(3, 5);
        assert!(matches!(PcaModel::fit(&x, 3, RngSeed(0)), Err(Error::Rank(_))));
        assert!(matches!(PcaModel::fit(&x, 0, RngSeed(0)), Err(Error::Rank(_))));
    }

    proptest! {
        #[test]
        fn translation_invariant(seed in any::<u64>(), shift in prop::collection::vec(-50.0f64..50.0, 4)) {
            let mut r = RngSeed(seed).rng();
            let x = Mat::from_vec(15, 4, (0..60).map(|_| r.normal()).collect());
            let mut moved = x.clone();
            for row in 0..15 {
                for c in 0..4 {
                    moved[(row, c)] += shift[c];
                }
            }
            let a = PcaModel::fit(&x, 3, RngSeed(2)).unwrap().apply(&x).unwrap();
            let b = PcaModel::fit(&moved, 3, RngSeed(2)).unwrap().apply(&moved).unwrap();
            for (u, v) in a.data.iter().zip(&b.data) {
                prop_assert!((u - v).abs() < 1e-8);
            }
        }
    }
}
