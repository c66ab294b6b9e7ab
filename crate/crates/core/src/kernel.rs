//! Dense numeric kernels: row-major matrices, matrix product, row softmax,
//! pairwise squared distances, layer normalization, and spatial pooling.
//!
//! All values are `f64`. Every operation here is a pure function of its
//! inputs, so concurrent calls on distinct data are safe.

use crate::error::{Error, Result};
use crate::types::PoseTokens;

/// Epsilon added to the population variance in [`layer_norm`].
pub const LAYER_NORM_EPS: f64 = 1e-5;

/// Dense row-major matrix of `f64`.
#[derive(Debug, Clone, PartialEq)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Matrix {
    pub fn zeros(rows: usize, cols: usize) -> Matrix {
        Matrix {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    /// Builds a matrix from row-major data. Errors when the length does not
    /// equal `rows * cols`.
    pub fn from_vec(rows: usize, cols: usize, data: Vec<f64>) -> Result<Matrix> {
        if data.len() != rows * cols {
            return Err(Error::Shape(format!(
                "matrix data length {} does not match {}x{}",
                data.len(),
                rows,
                cols
            )));
        }
        Ok(Matrix { rows, cols, data })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Matrix> {
        if rows.is_empty() {
            return Err(Error::Shape("matrix needs at least one row".into()));
        }
        let cols = rows[0].len();
        if rows.iter().any(|r| r.len() != cols) {
            return Err(Error::Shape("rows have unequal lengths".into()));
        }
        let mut data = Vec::with_capacity(rows.len() * cols);
        for r in rows {
            data.extend_from_slice(r);
        }
        Ok(Matrix {
            rows: rows.len(),
            cols,
            data,
        })
    }

    pub fn identity(n: usize) -> Matrix {
        let mut m = Matrix::zeros(n, n);
        for i in 0..n {
            m.data[i * n + i] = 1.0;
        }
        m
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn row_mut(&mut self, i: usize) -> &mut [f64] {
        &mut self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.cols + j]
    }

    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        self.data[i * self.cols + j] = v;
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    /// Standard matrix product. Errors when `self.cols != other.rows`.
    pub fn matmul(&self, other: &Matrix) -> Result<Matrix> {
        if self.cols != other.rows {
            return Err(Error::Shape(format!(
                "matmul: {}x{} * {}x{}",
                self.rows, self.cols, other.rows, other.cols
            )));
        }
        let mut out = Matrix::zeros(self.rows, other.cols);
        matmul_into(
            &self.data,
            &other.data,
            &mut out.data,
            self.rows,
            self.cols,
            other.cols,
        );
        Ok(out)
    }

    /// Row-wise softmax, stabilized by subtracting the row maximum so that
    /// large logits do not overflow and a zero row maps to the exactly
    /// uniform distribution.
    pub fn softmax_rows(&self) -> Matrix {
        let mut out = self.clone();
        for i in 0..self.rows {
            softmax_in_place(out.row_mut(i));
        }
        out
    }

    /// Symmetric matrix of squared Euclidean distances between rows; the
    /// diagonal is exactly zero.
    pub fn pairwise_sq_dist(&self) -> Matrix {
        let n = self.rows;
        let mut out = Matrix::zeros(n, n);
        for i in 0..n {
            for j in (i + 1)..n {
                let d = sq_dist(self.row(i), self.row(j));
                out.data[i * n + j] = d;
                out.data[j * n + i] = d;
            }
        }
        out
    }

    /// Element-wise `self += other`.
    pub fn add_assign(&mut self, other: &Matrix) -> Result<()> {
        if self.rows != other.rows || self.cols != other.cols {
            return Err(Error::Shape(format!(
                "add: {}x{} += {}x{}",
                self.rows, self.cols, other.rows, other.cols
            )));
        }
        for (a, b) in self.data.iter_mut().zip(other.data.iter()) {
            *a += b;
        }
        Ok(())
    }

    pub fn transpose(&self) -> Matrix {
        let mut out = Matrix::zeros(self.cols, self.rows);
        for i in 0..self.rows {
            for j in 0..self.cols {
                out.data[j * self.rows + i] = self.data[i * self.cols + j];
            }
        }
        out
    }

    /// Submatrix of the given rows restricted to a column range, with every
    /// entry scaled.
    pub fn gather_scaled(&self, rows: &[usize], cols: std::ops::Range<usize>, scale: f64) -> Matrix {
        let width = cols.len();
        let mut data = Vec::with_capacity(rows.len() * width);
        for &r in rows {
            data.extend(self.row(r)[cols.clone()].iter().map(|v| v * scale));
        }
        Matrix {
            rows: rows.len(),
            cols: width,
            data,
        }
    }

    /// Transposed submatrix of the given rows restricted to a column range
    /// (result is `cols.len() x rows.len()`).
    pub fn gather_transposed(&self, rows: &[usize], cols: std::ops::Range<usize>) -> Matrix {
        let width = cols.len();
        let mut out = Matrix::zeros(width, rows.len());
        for (j, &r) in rows.iter().enumerate() {
            for (i, &v) in self.row(r)[cols.clone()].iter().enumerate() {
                out.data[i * rows.len() + j] = v;
            }
        }
        out
    }
}

/// Squared Euclidean distance, summed in index order.
pub fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    let mut acc = 0.0;
    for (x, y) in a.iter().zip(b.iter()) {
        let d = x - y;
        acc += d * d;
    }
    acc
}

/// Stabilized softmax over one slice.
pub fn softmax_in_place(row: &mut [f64]) {
    let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut sum = 0.0;
    for v in row.iter_mut() {
        *v = (*v - max).exp();
        sum += *v;
    }
    let inv = 1.0 / sum;
    for v in row.iter_mut() {
        *v *= inv;
    }
}

/// Layer normalization of one vector with population variance and epsilon
/// [`LAYER_NORM_EPS`], followed by the affine map `gain * x + bias`.
pub fn layer_norm(v: &[f64], gain: &[f64], bias: &[f64]) -> Result<Vec<f64>> {
    if v.len() != gain.len() || v.len() != bias.len() {
        return Err(Error::Shape(format!(
            "layer_norm: value length {} vs gain {} / bias {}",
            v.len(),
            gain.len(),
            bias.len()
        )));
    }
    let mut out = v.to_vec();
    layer_norm_in_place(&mut out, gain, bias);
    Ok(out)
}

fn layer_norm_in_place(v: &mut [f64], gain: &[f64], bias: &[f64]) {
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    let var = v.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n;
    let inv = 1.0 / (var + LAYER_NORM_EPS).sqrt();
    for (x, (g, b)) in v.iter_mut().zip(gain.iter().zip(bias.iter())) {
        *x = g * ((*x - mean) * inv) + b;
    }
}

/// Applies [`layer_norm`] to every row of a matrix.
pub fn layer_norm_rows(m: &Matrix, gain: &[f64], bias: &[f64]) -> Result<Matrix> {
    if m.cols() != gain.len() || m.cols() != bias.len() {
        return Err(Error::Shape(format!(
            "layer_norm_rows: {} columns vs gain {} / bias {}",
            m.cols(),
            gain.len(),
            bias.len()
        )));
    }
    let mut out = m.clone();
    for i in 0..out.rows() {
        layer_norm_in_place(out.row_mut(i), gain, bias);
    }
    Ok(out)
}

/// Average pooling along the joint dimension: the result has one row per
/// frame, each the mean of that frame's joint vectors.
pub fn mean_pool_spatial(tokens: &PoseTokens) -> Matrix {
    let (n, j, c) = (tokens.n_frames(), tokens.joints(), tokens.dim());
    let mut out = Matrix::zeros(n, c);
    let inv = 1.0 / j as f64;
    for f in 0..n {
        let row = out.row_mut(f);
        for jj in 0..j {
            let tok = tokens.token(f, jj);
            for (o, t) in row.iter_mut().zip(tok.iter()) {
                *o += t;
            }
        }
        for o in row.iter_mut() {
            *o *= inv;
        }
    }
    out
}

// ---------------------------------------------------------------------------
// Matmul kernels
// ---------------------------------------------------------------------------
//
// The kernel is a 4x8 register-tiled triple loop. The same code is compiled
// three times: once for the baseline target, once with AVX2+FMA, and once
// with AVX-512F; the fastest supported variant is selected at runtime. All
// variants perform the identical sequence of scalar operations per
// accumulator, so a given binary on a given machine is deterministic.

fn matmul_into(a: &[f64], b: &[f64], out: &mut [f64], m: usize, k: usize, n: usize) {
    #[cfg(target_arch = "x86_64")]
    {
        if is_x86_feature_detected!("avx512f") {
            return unsafe { matmul_avx512(a, b, out, m, k, n) };
        }
        if is_x86_feature_detected!("avx2") && is_x86_feature_detected!("fma") {
            return unsafe { matmul_avx2(a, b, out, m, k, n) };
        }
    }
    matmul_kernel(a, b, out, m, k, n)
}

#[cfg(target_arch = "x86_64")]
#[target_feature(enable = "avx512f")]
unsafe fn matmul_avx512(a: &[f64], b: &[f64], out: &mut [f64], m: usize, k: usize, n: usize) {
    matmul_kernel(a, b, out, m, k, n)
}

#[cfg(target_arch = "x86_64")]
#[target_feature(enable = "avx2,fma")]
unsafe fn matmul_avx2(a: &[f64], b: &[f64], out: &mut [f64], m: usize, k: usize, n: usize) {
    matmul_kernel(a, b, out, m, k, n)
}

#[inline(always)]
fn matmul_kernel(a: &[f64], b: &[f64], out: &mut [f64], m: usize, k: usize, n: usize) {
    const MR: usize = 4;
    const NR: usize = 8;
    let m_main = m - m % MR;
    let n_main = n - n % NR;
    for i in (0..m_main).step_by(MR) {
        let a0 = &a[i * k..(i + 1) * k];
        let a1 = &a[(i + 1) * k..(i + 2) * k];
        let a2 = &a[(i + 2) * k..(i + 3) * k];
        let a3 = &a[(i + 3) * k..(i + 4) * k];
        for j in (0..n_main).step_by(NR) {
            let mut acc = [[0.0f64; NR]; MR];
            for kk in 0..k {
                let brow = &b[kk * n + j..kk * n + j + NR];
                let (v0, v1, v2, v3) = (a0[kk], a1[kk], a2[kk], a3[kk]);
                for t in 0..NR {
                    let bv = brow[t];
                    acc[0][t] += v0 * bv;
                    acc[1][t] += v1 * bv;
                    acc[2][t] += v2 * bv;
                    acc[3][t] += v3 * bv;
                }
            }
            for (r, acc_row) in acc.iter().enumerate() {
                out[(i + r) * n + j..(i + r) * n + j + NR].copy_from_slice(acc_row);
            }
        }
        for j in n_main..n {
            let mut acc = [0.0f64; MR];
            for kk in 0..k {
                let bv = b[kk * n + j];
                acc[0] += a0[kk] * bv;
                acc[1] += a1[kk] * bv;
                acc[2] += a2[kk] * bv;
                acc[3] += a3[kk] * bv;
            }
            for (r, &v) in acc.iter().enumerate() {
                out[(i + r) * n + j] = v;
            }
        }
    }
    for i in m_main..m {
        let arow = &a[i * k..(i + 1) * k];
        let orow = &mut out[i * n..(i + 1) * n];
        for (kk, &av) in arow.iter().enumerate() {
            let brow = &b[kk * n..(kk + 1) * n];
            for (o, &bv) in orow.iter_mut().zip(brow.iter()) {
                *o += av * bv;
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::Rng;
    use proptest::prelude::*;

    fn random_matrix(rng: &mut Rng, rows: usize, cols: usize) -> Matrix {
        let data = (0..rows * cols).map(|_| rng.uniform(-1.0, 1.0)).collect();
        Matrix::from_vec(rows, cols, data).unwrap()
    }

    #[test]
    fn matmul_identity() {
        let a = Matrix::from_rows(&[vec![1.0, 2.0], vec![3.0, 4.0]]).unwrap();
        let id = Matrix::identity(2);
        assert_eq!(id.matmul(&a).unwrap(), a);
    }

    #[test]
    fn matmul_hand_example() {
        let a = Matrix::from_rows(&[vec![1.0, 2.0]]).unwrap();
        let b = Matrix::from_rows(&[vec![3.0], vec![4.0]]).unwrap();
        let c = a.matmul(&b).unwrap();
        assert_eq!(c.rows(), 1);
        assert_eq!(c.cols(), 1);
        assert_eq!(c.get(0, 0), 11.0);
    }

    #[test]
    fn matmul_zero_absorbs() {
        let z = Matrix::zeros(3, 4);
        let mut rng = Rng::new(3);
        let b = random_matrix(&mut rng, 4, 5);
        let c = z.matmul(&b).unwrap();
        assert!(c.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn matmul_dimension_mismatch() {
        let a = Matrix::zeros(2, 3);
        let b = Matrix::zeros(2, 3);
        assert!(matches!(a.matmul(&b), Err(Error::Shape(_))));
    }

    #[test]
    fn matmul_matches_naive_on_odd_shapes() {
        // Exercises the main tile, the n remainder and the m remainder.
        let mut rng = Rng::new(11);
        for &(m, k, n) in &[(1usize, 1usize, 1usize), (5, 7, 9), (13, 4, 17), (9, 16, 8)] {
            let a = random_matrix(&mut rng, m, k);
            let b = random_matrix(&mut rng, k, n);
            let c = a.matmul(&b).unwrap();
            for i in 0..m {
                for j in 0..n {
                    let mut want = 0.0;
                    for kk in 0..k {
                        want += a.get(i, kk) * b.get(kk, j);
                    }
                    assert!((c.get(i, j) - want).abs() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn softmax_symmetry_and_stability() {
        let m = Matrix::from_rows(&[vec![0.0, 0.0], vec![1000.0, 1000.0]]).unwrap();
        let s = m.softmax_rows();
        for i in 0..2 {
            assert_eq!(s.get(i, 0), 0.5);
            assert_eq!(s.get(i, 1), 0.5);
        }
    }

    #[test]
    fn softmax_closed_form() {
        let m = Matrix::from_rows(&[vec![0.0, 3.0f64.ln()]]).unwrap();
        let s = m.softmax_rows();
        assert!((s.get(0, 0) - 0.25).abs() < 1e-12);
        assert!((s.get(0, 1) - 0.75).abs() < 1e-12);
    }

    #[test]
    fn pairwise_hand_examples() {
        let m = Matrix::from_rows(&[vec![0.0], vec![3.0]]).unwrap();
        let d = m.pairwise_sq_dist();
        assert_eq!(d.get(0, 1), 9.0);
        assert_eq!(d.get(1, 0), 9.0);
        assert_eq!(d.get(0, 0), 0.0);

        let m = Matrix::from_rows(&[vec![0.0, 0.0], vec![3.0, 4.0]]).unwrap();
        assert_eq!(m.pairwise_sq_dist().get(0, 1), 25.0);

        let m = Matrix::from_rows(&[vec![1.0, 2.0], vec![1.0, 2.0]]).unwrap();
        assert!(m.pairwise_sq_dist().data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn layer_norm_examples() {
        let gain = vec![1.0, 1.0];
        let bias = vec![0.0, 0.0];
        let out = layer_norm(&[5.0, 5.0], &gain, &bias).unwrap();
        assert!(out.iter().all(|&v| v.abs() < 1e-9));

        let out = layer_norm(&[1.0, -1.0], &gain, &bias).unwrap();
        assert!((out[0] - 1.0).abs() < 1e-5);
        assert!((out[1] + 1.0).abs() < 1e-5);

        let out = layer_norm(&[3.0, 9.0], &[0.0, 0.0], &[7.0, 7.0]).unwrap();
        assert_eq!(out, vec![7.0, 7.0]);

        assert!(matches!(
            layer_norm(&[1.0], &[1.0, 1.0], &[0.0, 0.0]),
            Err(Error::Shape(_))
        ));
    }

    #[test]
    fn mean_pool_examples() {
        // Single joint: pooling is the identity on the channel.
        let t = PoseTokens::from_vec(2, 1, 3, vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0]).unwrap();
        let p = mean_pool_spatial(&t);
        assert_eq!(p.row(0), &[1.0, 2.0, 3.0]);
        assert_eq!(p.row(1), &[4.0, 5.0, 6.0]);

        // Opposite joint vectors cancel.
        let t = PoseTokens::from_vec(1, 2, 2, vec![1.0, -2.0, -1.0, 2.0]).unwrap();
        assert!(mean_pool_spatial(&t).data().iter().all(|&v| v == 0.0));

        // Arithmetic mean.
        let t = PoseTokens::from_vec(1, 2, 1, vec![1.0, 3.0]).unwrap();
        assert_eq!(mean_pool_spatial(&t).get(0, 0), 2.0);
    }

    proptest! {
        #[test]
        fn softmax_rows_sum_to_one(rows in 1usize..6, cols in 1usize..6, seed in 0u64..1000) {
            let mut rng = Rng::new(seed);
            let data: Vec<f64> = (0..rows * cols).map(|_| rng.uniform(-50.0, 50.0)).collect();
            let m = Matrix::from_vec(rows, cols, data).unwrap();
            let s = m.softmax_rows();
            for i in 0..rows {
                let sum: f64 = s.row(i).iter().sum();
                prop_assert!((sum - 1.0).abs() < 1e-6);
                prop_assert!(s.row(i).iter().all(|&v| v >= 0.0));
            }
        }

        #[test]
        fn pairwise_symmetric_zero_diag(rows in 1usize..8, cols in 1usize..5, seed in 0u64..1000) {
            let mut rng = Rng::new(seed);
            let data: Vec<f64> = (0..rows * cols).map(|_| rng.uniform(-10.0, 10.0)).collect();
            let m = Matrix::from_vec(rows, cols, data).unwrap();
            let d = m.pairwise_sq_dist();
            for i in 0..rows {
                prop_assert_eq!(d.get(i, i), 0.0);
                for j in 0..rows {
                    prop_assert_eq!(d.get(i, j), d.get(j, i));
                }
            }
        }

        #[test]
        fn matmul_associative_4x4(seed in 0u64..1000) {
            let mut rng = Rng::new(seed);
            let a = random_matrix(&mut rng, 4, 4);
            let b = random_matrix(&mut rng, 4, 4);
            let c = random_matrix(&mut rng, 4, 4);
            let left = a.matmul(&b).unwrap().matmul(&c).unwrap();
            let right = a.matmul(&b.matmul(&c).unwrap()).unwrap();
            for (x, y) in left.data().iter().zip(right.data().iter()) {
                prop_assert!((x - y).abs() < 1e-5);
            }
        }
    }
}
