//! Small dense linear algebra: just what SVD embeddings, PCA and ridge need.
//!
//! Truncated SVD goes through a randomized range finder with subspace
//! iteration, followed by a one-sided (Hestenes) Jacobi SVD of the small
//! projected matrix. When the requested sketch already spans the full rank the
//! Jacobi step runs on the input directly and the factorization is exact.

use crate::error::{Error, Result};
use crate::rng::RngSeed;

/// Row-major dense matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct Mat {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<f64>,
}

impl Mat {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Mat {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<f64>) -> Self {
        assert_eq!(data.len(), rows * cols, "Mat::from_vec shape");
        Mat { rows, cols, data }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Mat::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = 1.0;
        }
        m
    }

    pub fn row(&self, r: usize) -> &[f64] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn column(&self, c: usize) -> Vec<f64> {
        (0..self.rows).map(|r| self[(r, c)]).collect()
    }

    pub fn transpose(&self) -> Mat {
        let mut t = Mat::zeros(self.cols, self.rows);
        for r in 0..self.rows {
            for c in 0..self.cols {
                t[(c, r)] = self[(r, c)];
            }
        }
        t
    }

    pub fn matmul(&self, other: &Mat) -> Mat {
        assert_eq!(self.cols, other.rows, "matmul shape");
        let mut out = Mat::zeros(self.rows, other.cols);
        for i in 0..self.rows {
            let orow = &mut out.data[i * other.cols..(i + 1) * other.cols];
            for k in 0..self.cols {
                let a = self.data[i * self.cols + k];
                if a == 0.0 {
                    continue;
                }
                let brow = &other.data[k * other.cols..(k + 1) * other.cols];
                for (o, b) in orow.iter_mut().zip(brow) {
                    *o += a * b;
                }
            }
        }
        out
    }

    /// selfᵀ · other without materializing the transpose.
    pub fn t_matmul(&self, other: &Mat) -> Mat {
        assert_eq!(self.rows, other.rows, "t_matmul shape");
        let mut out = Mat::zeros(self.cols, other.cols);
        for k in 0..self.rows {
            let arow = self.row(k);
            let brow = other.row(k);
            for (i, &a) in arow.iter().enumerate() {
                if a == 0.0 {
                    continue;
                }
                let orow = &mut out.data[i * other.cols..(i + 1) * other.cols];
                for (o, b) in orow.iter_mut().zip(brow) {
                    *o += a * b;
                }
            }
        }
        out
    }

    pub fn frobenius(&self) -> f64 {
        self.data.iter().map(|v| v * v).sum::<f64>().sqrt()
    }
}

impl std::ops::Index<(usize, usize)> for Mat {
    type Output = f64;
    fn index(&self, (r, c): (usize, usize)) -> &f64 {
        &self.data[r * self.cols + c]
    }
}

impl std::ops::IndexMut<(usize, usize)> for Mat {
    fn index_mut(&mut self, (r, c): (usize, usize)) -> &mut f64 {
        &mut self.data[r * self.cols + c]
    }
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// Thin Q factor of a Householder QR of `a` (m × l, m ≥ l). Columns of the
/// result are orthonormal even when `a` is rank deficient.
pub fn householder_q(a: &Mat) -> Mat {
    let (m, l) = (a.rows, a.cols);
    assert!(m >= l, "householder_q needs rows >= cols");
    let mut r = a.clone();
    let mut vs: Vec<Vec<f64>> = Vec::with_capacity(l);
    for j in 0..l {
        let mut v: Vec<f64> = (j..m).map(|i| r[(i, j)]).collect();
        let alpha = norm(&v);
        if alpha == 0.0 {
            v.iter_mut().for_each(|x| *x = 0.0);
            v[0] = 1.0;
        } else {
            let sign = if v[0] >= 0.0 { 1.0 } else { -1.0 };
            v[0] += sign * alpha;
            let vn = norm(&v);
            v.iter_mut().for_each(|x| *x /= vn);
        }
        for c in j..l {
            let s: f64 = (j..m).map(|i| v[i - j] * r[(i, c)]).sum();
            for i in j..m {
                r[(i, c)] -= 2.0 * s * v[i - j];
            }
        }
        vs.push(v);
    }
    // Q = H_0 H_1 ... H_{l-1} applied to the first l columns of I.
    let mut q = Mat::zeros(m, l);
    for j in 0..l {
        q[(j, j)] = 1.0;
    }
    for j in (0..l).rev() {
        let v = &vs[j];
        for c in 0..l {
            let s: f64 = (j..m).map(|i| v[i - j] * q[(i, c)]).sum();
            if s != 0.0 {
                for i in j..m {
                    q[(i, c)] -= 2.0 * s * v[i - j];
                }
            }
        }
    }
    q
}

/// One-sided Jacobi SVD of `a` (n × l). Returns (σ, left, right) with
/// a = left · diag(σ) · rightᵀ, σ sorted nonincreasing. Left columns belonging
/// to zero singular values are completed to an orthonormal set.
pub fn jacobi_svd(a: &Mat) -> (Vec<f64>, Mat, Mat) {
    let (n, l) = (a.rows, a.cols);
    let mut cols: Vec<Vec<f64>> = (0..l).map(|c| a.column(c)).collect();
    let mut rot: Vec<Vec<f64>> = (0..l)
        .map(|c| {
            let mut e = vec![0.0; l];
            e[c] = 1.0;
            e
        })
        .collect();
    let eps = 1e-15;
    for _sweep in 0..80 {
        let mut rotated = false;
        for p in 0..l {
            for q in p + 1..l {
                let alpha = dot(&cols[p], &cols[p]);
                let beta = dot(&cols[q], &cols[q]);
                let gamma = dot(&cols[p], &cols[q]);
                if gamma == 0.0 || gamma.abs() <= eps * (alpha * beta).sqrt() {
                    continue;
                }
                rotated = true;
                let zeta = (beta - alpha) / (2.0 * gamma);
                let t = zeta.signum() / (zeta.abs() + (1.0 + zeta * zeta).sqrt());
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = c * t;
                let (lo, hi) = cols.split_at_mut(q);
                for (x, y) in lo[p].iter_mut().zip(hi[0].iter_mut()) {
                    let (xp, yq) = (*x, *y);
                    *x = c * xp - s * yq;
                    *y = s * xp + c * yq;
                }
                let (lo, hi) = rot.split_at_mut(q);
                for (x, y) in lo[p].iter_mut().zip(hi[0].iter_mut()) {
                    let (xp, yq) = (*x, *y);
                    *x = c * xp - s * yq;
                    *y = s * xp + c * yq;
                }
            }
        }
        if !rotated {
            break;
        }
    }
    let sigmas: Vec<f64> = cols.iter().map(|c| norm(c)).collect();
    let mut order: Vec<usize> = (0..l).collect();
    order.sort_by(|&i, &j| sigmas[j].total_cmp(&sigmas[i]).then(i.cmp(&j)));
    let smax = order.first().map(|&i| sigmas[i]).unwrap_or(0.0);
    let tiny = smax * 1e-13;

    let mut sigma = Vec::with_capacity(l);
    let mut left = Mat::zeros(n, l);
    let mut right = Mat::zeros(l, l);
    let mut missing = Vec::new();
    for (j, &src) in order.iter().enumerate() {
        let s = sigmas[src];
        for r in 0..l {
            right[(r, j)] = rot[src][r];
        }
        if s > tiny && s > 0.0 {
            sigma.push(s);
            for r in 0..n {
                left[(r, j)] = cols[src][r] / s;
            }
        } else {
            sigma.push(0.0);
            missing.push(j);
        }
    }
    complete_orthonormal(&mut left, &missing);
    (sigma, left, right)
}

/// Fill the listed columns of `m` with unit vectors orthogonal to every other
/// column. Each one is the standard basis vector with the largest residual
/// after projecting out the columns already in place.
fn complete_orthonormal(m: &mut Mat, missing: &[usize]) {
    if missing.is_empty() {
        return;
    }
    let n = m.rows;
    let mut done: Vec<usize> = (0..m.cols).filter(|c| !missing.contains(c)).collect();
    for &j in missing {
        let basis: Vec<Vec<f64>> = done.iter().map(|&c| m.column(c)).collect();
        let mut best: Option<(f64, Vec<f64>)> = None;
        for candidate in 0..n {
            let mut v = vec![0.0; n];
            v[candidate] = 1.0;
            for _ in 0..2 {
                for col in &basis {
                    let p = dot(col, &v);
                    v.iter_mut().zip(col).for_each(|(x, y)| *x -= p * y);
                }
            }
            let nv = norm(&v);
            if best.as_ref().is_none_or(|(b, _)| nv > *b) {
                best = Some((nv, v));
            }
        }
        let (nv, v) = best.expect("matrix has at least one row");
        assert!(nv > 0.0, "cannot complete orthonormal basis: columns already span the space");
        for r in 0..n {
            m[(r, j)] = v[r] / nv;
        }
        done.push(j);
    }
}

/// Rank-k factorization m ≈ U·diag(σ)·Vᵀ.
#[derive(Debug, Clone, PartialEq)]
pub struct Svd {
    pub u: Mat,
    pub sigma: Vec<f64>,
    pub v: Mat,
}

#[derive(Debug, Clone, Copy)]
pub struct SvdOptions {
    pub oversample: usize,
    pub iterations: usize,
    pub seed: RngSeed,
}

impl Default for SvdOptions {
    fn default() -> Self {
        SvdOptions {
            oversample: 10,
            iterations: 8,
            seed: RngSeed(0),
        }
    }
}

pub fn truncated_svd(m: &Mat, k: usize, opts: SvdOptions) -> Result<Svd> {
    let (rows, cols) = (m.rows, m.cols);
    if rows == 0 || cols == 0 {
        return Err(Error::Degenerate("empty matrix".into()));
    }
    let full = rows.min(cols);
    if k > full {
        return Err(Error::Rank(format!("k = {k} exceeds min(m, n) = {full}")));
    }
    if k == 0 {
        return Err(Error::Rank("k must be at least 1".into()));
    }
    let sketch = (k + opts.oversample).min(full);
    let (sigma, mut u, mut v) = if sketch == full {
        if cols <= rows {
            jacobi_svd(m)
        } else {
            let (s, l, r) = jacobi_svd(&m.transpose());
            (s, r, l)
        }
    } else {
        randomized(m, sketch, opts)
    };
    let mut sigma = sigma;
    sigma.truncate(k);
    u = take_cols(&u, k);
    v = take_cols(&v, k);
    // Sign convention: the largest-magnitude entry of each right vector is positive.
    for j in 0..k {
        let mut best = 0;
        for r in 0..v.rows {
            if v[(r, j)].abs() > v[(best, j)].abs() {
                best = r;
            }
        }
        if v[(best, j)] < 0.0 {
            for r in 0..v.rows {
                v[(r, j)] = -v[(r, j)];
            }
            for r in 0..u.rows {
                u[(r, j)] = -u[(r, j)];
            }
        }
    }
    Ok(Svd { u, sigma, v })
}

fn randomized(m: &Mat, sketch: usize, opts: SvdOptions) -> (Vec<f64>, Mat, Mat) {
    let mut rng = opts.seed.rng();
    let omega = Mat::from_vec(
        m.cols,
        sketch,
        (0..m.cols * sketch).map(|_| rng.normal()).collect(),
    );
    let mut q = householder_q(&m.matmul(&omega));
    for _ in 0..opts.iterations {
        let z = householder_q(&m.t_matmul(&q));
        q = householder_q(&m.matmul(&z));
    }
    // B = Qᵀ M (sketch × n); Jacobi on Bᵀ gives Bᵀ = Ṽ Σ Jᵀ, so B = J Σ Ṽᵀ.
    let bt = m.t_matmul(&q);
    let (sigma, vt, j) = jacobi_svd(&bt);
    let u = q.matmul(&j);
    (sigma, u, vt)
}

fn take_cols(m: &Mat, k: usize) -> Mat {
    let mut out = Mat::zeros(m.rows, k);
    for r in 0..m.rows {
        for c in 0..k {
            out[(r, c)] = m[(r, c)];
        }
    }
    out
}

/// Solve a symmetric positive-definite system by Cholesky factorization.
pub fn cholesky_solve(a: &Mat, b: &[f64]) -> Result<Vec<f64>> {
    let n = a.rows;
    assert_eq!(a.cols, n);
    assert_eq!(b.len(), n);
    let mut l = Mat::zeros(n, n);
    let scale = (0..n).map(|i| a[(i, i)].abs()).fold(0.0, f64::max);
    for j in 0..n {
        let mut d = a[(j, j)];
        for k in 0..j {
            d -= l[(j, k)] * l[(j, k)];
        }
        if d <= scale * 1e-14 || !d.is_finite() {
            return Err(Error::Singular(format!(
                "non-positive pivot {d:e} at column {j}"
            )));
        }
        let d = d.sqrt();
        l[(j, j)] = d;
        for i in j + 1..n {
            let mut s = a[(i, j)];
            for k in 0..j {
                s -= l[(i, k)] * l[(j, k)];
            }
            l[(i, j)] = s / d;
        }
    }
    let mut y = vec![0.0; n];
    for i in 0..n {
        let mut s = b[i];
        for k in 0..i {
            s -= l[(i, k)] * y[k];
        }
        y[i] = s / l[(i, i)];
    }
    let mut x = vec![0.0; n];
    for i in (0..n).rev() {
        let mut s = y[i];
        for k in i + 1..n {
            s -= l[(k, i)] * x[k];
        }
        x[i] = s / l[(i, i)];
    }
    Ok(x)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn random(rows: usize, cols: usize, seed: u64) -> Mat {
        let mut r = RngSeed(seed).rng();
        Mat::from_vec(rows, cols, (0..rows * cols).map(|_| r.normal()).collect())
    }

    fn max_orth_err(m: &Mat) -> f64 {
        let g = m.t_matmul(m);
        let mut e: f64 = 0.0;
        for i in 0..g.rows {
            for j in 0..g.cols {
                let t = if i == j { 1.0 } else { 0.0 };
                e = e.max((g[(i, j)] - t).abs());
            }
        }
        e
    }

    #[test]
    fn householder_q_is_orthonormal_even_when_rank_deficient() {
        let mut a = random(7, 4, 1);
        for r in 0..7 {
            a[(r, 3)] = a[(r, 0)] * 2.0;
        }
        let q = householder_q(&a);
        assert!(max_orth_err(&q) < 1e-12);
    }

    #[test]
    fn completes_left_vectors_of_a_nearly_full_rank_square_matrix() {
        let mut a = random(20, 20, 4);
        for r in 0..20 {
            a[(r, 19)] = a[(r, 0)] - 3.0 * a[(r, 5)];
        }
        let (s, l, _) = jacobi_svd(&a);
        assert_eq!(s[19], 0.0);
        assert!(max_orth_err(&l) < 1e-10);
    }

    #[test]
    fn jacobi_reconstructs() {
        let a = random(9, 5, 2);
        let (s, l, r) = jacobi_svd(&a);
        assert!(s.windows(2).all(|w| w[0] >= w[1]));
        assert!(max_orth_err(&l) < 1e-12);
        assert!(max_orth_err(&r) < 1e-12);
        let mut ls = l.clone();
        for rr in 0..ls.rows {
            for c in 0..ls.cols {
                ls[(rr, c)] *= s[c];
            }
        }
        let back = ls.matmul(&r.transpose());
        for (x, y) in back.data.iter().zip(&a.data) {
            assert!((x - y).abs() < 1e-12);
        }
    }

    #[test]
    fn randomized_path_matches_exact_path_on_low_rank() {
        // rank-3 40x30 matrix; sketch of width 8 is smaller than min(m, n)
        let a = random(40, 3, 3).matmul(&random(3, 30, 4));
        let opts = SvdOptions {
            oversample: 5,
            iterations: 4,
            seed: RngSeed(5),
        };
        let approx = truncated_svd(&a, 3, opts).unwrap();
        let exact = truncated_svd(&a, 3, SvdOptions { oversample: 100, ..opts }).unwrap();
        for (x, y) in approx.sigma.iter().zip(&exact.sigma) {
            assert!((x - y).abs() < 1e-9 * y.max(1.0));
        }
        assert!(max_orth_err(&approx.u) < 1e-10);
        assert!(max_orth_err(&approx.v) < 1e-10);
    }

    #[test]
    fn rank_and_degenerate_errors() {
        let a = random(3, 2, 1);
        assert!(matches!(
            truncated_svd(&a, 3, SvdOptions::default()),
            Err(Error::Rank(_))
        ));
        assert!(matches!(
            truncated_svd(&Mat::zeros(0, 3), 1, SvdOptions::default()),
            Err(Error::Degenerate(_))
        ));
    }

    #[test]
    fn cholesky_solves_and_rejects_singular() {
        let a = Mat::from_vec(2, 2, vec![4.0, 1.0, 1.0, 3.0]);
        let x = cholesky_solve(&a, &[1.0, 2.0]).unwrap();
        assert!((4.0 * x[0] + x[1] - 1.0).abs() < 1e-14);
        assert!((x[0] + 3.0 * x[1] - 2.0).abs() < 1e-14);
        let s = Mat::from_vec(2, 2, vec![1.0, 1.0, 1.0, 1.0]);
        assert!(matches!(cholesky_solve(&s, &[1.0, 1.0]), Err(Error::Singular(_))));
    }
}
