//! Dense 2-D matrix with row-major storage and the fixed set of kernels the
//! fusion architecture needs. No broadcasting rules beyond row broadcast for
//! biases; every shape requirement is checked and reported.

use crate::error::{Error, Result};
use crate::numerics::scalar::Scalar;

#[derive(Clone, Debug, PartialEq)]
pub struct Matrix<S> {
    rows: usize,
    cols: usize,
    data: Vec<S>,
}

impl<S: Scalar> Matrix<S> {
    pub fn from_vec(rows: usize, cols: usize, data: Vec<S>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::shape(
                "matrix construction",
                format!("{rows}x{cols} ({} values)", rows * cols),
                format!("{} values", data.len()),
            ));
        }
        Ok(Matrix { rows, cols, data })
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        Matrix {
            rows,
            cols,
            data: vec![S::ZERO; rows * cols],
        }
    }

    /// 1×n row vector.
    pub fn row(values: &[S]) -> Self {
        Matrix {
            rows: 1,
            cols: values.len(),
            data: values.to_vec(),
        }
    }

    pub fn row_from_f64(values: &[f64]) -> Self {
        Matrix {
            rows: 1,
            cols: values.len(),
            data: values.iter().map(|&v| S::from_f64(v)).collect(),
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Matrix::zeros(n, n);
        for i in 0..n {
            m.data[i * n + i] = S::ONE;
        }
        m
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn data(&self) -> &[S] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [S] {
        &mut self.data
    }

    pub fn get(&self, r: usize, c: usize) -> S {
        debug_assert!(r < self.rows && c < self.cols);
        self.data[r * self.cols + c]
    }

    pub fn set(&mut self, r: usize, c: usize, v: S) {
        debug_assert!(r < self.rows && c < self.cols);
        self.data[r * self.cols + c] = v;
    }

    pub fn row_slice(&self, r: usize) -> &[S] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    pub fn shape_string(&self) -> String {
        format!("{}x{}", self.rows, self.cols)
    }

    pub fn same_shape(&self, other: &Matrix<S>) -> bool {
        self.rows == other.rows && self.cols == other.cols
    }

    pub fn all_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn map(&self, f: impl Fn(S) -> S) -> Matrix<S> {
        Matrix {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    pub fn to_f64(&self) -> Matrix<f64> {
        Matrix {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|v| v.to_f64()).collect(),
        }
    }

    pub fn from_f64_matrix(m: &Matrix<f64>) -> Matrix<S> {
        Matrix {
            rows: m.rows,
            cols: m.cols,
            data: m.data.iter().map(|&v| S::from_f64(v)).collect(),
        }
    }

    /// Standard matrix product; requires `self.cols == other.rows`.
    pub fn matmul(&self, other: &Matrix<S>) -> Result<Matrix<S>> {
        if self.cols != other.rows {
            return Err(Error::shape(
                "matmul",
                format!("{} with inner dimension {}", self.shape_string(), self.cols),
                other.shape_string(),
            ));
        }
        let mut out = Matrix::zeros(self.rows, other.cols);
        for i in 0..self.rows {
            for k in 0..self.cols {
                let a = self.data[i * self.cols + k];
                if a == S::ZERO {
                    continue;
                }
                let b_row = &other.data[k * other.cols..(k + 1) * other.cols];
                let o_row = &mut out.data[i * other.cols..(i + 1) * other.cols];
                for (o, &b) in o_row.iter_mut().zip(b_row) {
                    *o += a * b;
                }
            }
        }
        Ok(out)
    }

    pub fn transpose(&self) -> Matrix<S> {
        let mut out = Matrix::zeros(self.cols, self.rows);
        for r in 0..self.rows {
            for c in 0..self.cols {
                out.data[c * self.rows + r] = self.data[r * self.cols + c];
            }
        }
        out
    }

    /// Columns of `self` followed by columns of `other`; row counts must match.
    pub fn concat_cols(&self, other: &Matrix<S>) -> Result<Matrix<S>> {
        if self.rows != other.rows {
            return Err(Error::shape(
                "concat_cols",
                format!("{} rows to match {}", other.rows, self.shape_string()),
                other.shape_string(),
            ));
        }
        let cols = self.cols + other.cols;
        let mut data = Vec::with_capacity(self.rows * cols);
        for r in 0..self.rows {
            data.extend_from_slice(self.row_slice(r));
            data.extend_from_slice(other.row_slice(r));
        }
        Ok(Matrix {
            rows: self.rows,
            cols,
            data,
        })
    }

    /// Row-major reinterpretation; element count must be preserved.
    pub fn reshape(&self, rows: usize, cols: usize) -> Result<Matrix<S>> {
        if rows * cols != self.data.len() {
            return Err(Error::shape(
                "reshape",
                format!("{} elements", self.data.len()),
                format!("{rows}x{cols} ({} elements)", rows * cols),
            ));
        }
        Ok(Matrix {
            rows,
            cols,
            data: self.data.clone(),
        })
    }

    pub fn relu(&self) -> Matrix<S> {
        self.map(|v| if v > S::ZERO { v } else { S::ZERO })
    }

    /// Elementwise logistic function, clamped into the open interval (0, 1).
    ///
    /// Uses the sign-split form so neither branch exponentiates a positive
    /// argument, and clamps so saturated outputs stay strictly inside (0, 1).
    pub fn sigmoid(&self) -> Matrix<S> {
        self.map(sigmoid_scalar)
    }

    /// Softmax over a single row (the public operation contract).
    pub fn softmax(&self) -> Result<Matrix<S>> {
        if self.rows != 1 {
            return Err(Error::shape("softmax", "1 row", self.shape_string()));
        }
        Ok(self.softmax_rows())
    }

    /// Row-wise softmax with max subtraction; used by batched paths.
    pub fn softmax_rows(&self) -> Matrix<S> {
        let mut out = self.clone();
        for r in 0..self.rows {
            let row = &mut out.data[r * self.cols..(r + 1) * self.cols];
            let max = row
                .iter()
                .fold(S::from_f64(f64::NEG_INFINITY), |m, &v| m.max(v));
            let mut sum = S::ZERO;
            for v in row.iter_mut() {
                *v = (*v - max).exp();
                sum += *v;
            }
            for v in row.iter_mut() {
                *v /= sum;
            }
        }
        out
    }

    /// Row-wise log-softmax; numerically stable companion of `softmax_rows`.
    pub fn log_softmax_rows(&self) -> Matrix<S> {
        let mut out = self.clone();
        for r in 0..self.rows {
            let row = &mut out.data[r * self.cols..(r + 1) * self.cols];
            let max = row
                .iter()
                .fold(S::from_f64(f64::NEG_INFINITY), |m, &v| m.max(v));
            let mut sum = S::ZERO;
            for &v in row.iter() {
                sum += (v - max).exp();
            }
            let lse = max + sum.ln();
            for v in row.iter_mut() {
                *v -= lse;
            }
        }
        out
    }

    pub fn add(&self, other: &Matrix<S>) -> Result<Matrix<S>> {
        if !self.same_shape(other) {
            return Err(Error::shape(
                "add",
                self.shape_string(),
                other.shape_string(),
            ));
        }
        let data = self
            .data
            .iter()
            .zip(&other.data)
            .map(|(&a, &b)| a + b)
            .collect();
        Ok(Matrix {
            rows: self.rows,
            cols: self.cols,
            data,
        })
    }

    pub fn sub(&self, other: &Matrix<S>) -> Result<Matrix<S>> {
        if !self.same_shape(other) {
            return Err(Error::shape(
                "sub",
                self.shape_string(),
                other.shape_string(),
            ));
        }
        let data = self
            .data
            .iter()
            .zip(&other.data)
            .map(|(&a, &b)| a - b)
            .collect();
        Ok(Matrix {
            rows: self.rows,
            cols: self.cols,
            data,
        })
    }

    pub fn scale(&self, factor: S) -> Matrix<S> {
        self.map(|v| v * factor)
    }

    /// Adds a 1×cols row vector to every row.
    pub fn add_row_broadcast(&self, row: &Matrix<S>) -> Result<Matrix<S>> {
        if row.rows != 1 || row.cols != self.cols {
            return Err(Error::shape(
                "add_row_broadcast",
                format!("1x{}", self.cols),
                row.shape_string(),
            ));
        }
        let mut out = self.clone();
        for r in 0..self.rows {
            let dst = &mut out.data[r * self.cols..(r + 1) * self.cols];
            for (d, &b) in dst.iter_mut().zip(&row.data) {
                *d += b;
            }
        }
        Ok(out)
    }

    pub fn sum(&self) -> S {
        let mut acc = S::ZERO;
        for &v in &self.data {
            acc += v;
        }
        acc
    }

    /// Index of the largest element in a 1×n row; ties resolve to the lowest
    /// index.
    pub fn argmax_row(&self, r: usize) -> usize {
        let row = self.row_slice(r);
        let mut best = 0;
        for (i, &v) in row.iter().enumerate() {
            if v > row[best] {
                best = i;
            }
        }
        best
    }
}

fn sigmoid_scalar<S: Scalar>(v: S) -> S {
    let y = if v >= S::ZERO {
        S::ONE / (S::ONE + (-v).exp())
    } else {
        let e = v.exp();
        e / (S::ONE + e)
    };
    if y >= S::ONE {
        S::BELOW_ONE
    } else if y <= S::ZERO {
        S::min_positive()
    } else {
        y
    }
}

/// Dense layer primitive: `x · w (+ bias broadcast over rows)`.
pub fn affine<S: Scalar>(x: &Matrix<S>, w: &Matrix<S>, bias: Option<&Matrix<S>>) -> Result<Matrix<S>> {
    let out = x.matmul(w)?;
    match bias {
        Some(b) => out.add_row_broadcast(b),
        None => Ok(out),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn m64(rows: usize, cols: usize, data: &[f64]) -> Matrix<f64> {
        Matrix::from_vec(rows, cols, data.to_vec()).unwrap()
    }

    /// Independent scalar triple-loop product used as the matmul oracle.
    fn matmul_oracle(a: &Matrix<f64>, b: &Matrix<f64>) -> Matrix<f64> {
        let mut out = Matrix::zeros(a.rows(), b.cols());
        for i in 0..a.rows() {
            for j in 0..b.cols() {
                let mut acc = 0.0;
                for k in 0..a.cols() {
                    acc += a.get(i, k) * b.get(k, j);
                }
                out.set(i, j, acc);
            }
        }
        out
    }

    fn assert_close(a: &Matrix<f64>, b: &Matrix<f64>, tol: f64) {
        assert_eq!(a.shape(), b.shape());
        for (x, y) in a.data().iter().zip(b.data()) {
            let scale = x.abs().max(y.abs()).max(1.0);
            assert!(
                (x - y).abs() <= tol * scale,
                "{x} vs {y} beyond tolerance {tol}"
            );
        }
    }

    #[test]
    fn matmul_unit_row_selector() {
        let a = m64(1, 2, &[1.0, 0.0]);
        let b = m64(2, 3, &[1.0, 2.0, 3.0, 4.0, 5.0, 6.0]);
        let r = a.matmul(&b).unwrap();
        assert_eq!(r.data(), &[1.0, 2.0, 3.0]);
    }

    #[test]
    fn matmul_identity() {
        let i3 = Matrix::<f64>::identity(3);
        let m = m64(3, 2, &[1.0, 2.0, 3.0, 4.0, 5.0, 6.0]);
        assert_eq!(i3.matmul(&m).unwrap(), m);
    }

    #[test]
    fn matmul_matches_triple_loop_oracle() {
        let mut seed = 1u64;
        let mut next = move || {
            // xorshift; any fixed deterministic stream works here
            seed ^= seed << 13;
            seed ^= seed >> 7;
            seed ^= seed << 17;
            (seed % 1000) as f64 / 500.0 - 1.0
        };
        let a = Matrix::from_vec(2, 4, (0..8).map(|_| next()).collect()).unwrap();
        let b = Matrix::from_vec(4, 3, (0..12).map(|_| next()).collect()).unwrap();
        assert_close(&a.matmul(&b).unwrap(), &matmul_oracle(&a, &b), 1e-12);
    }

    #[test]
    fn matmul_shape_error_names_both_shapes() {
        let a = m64(1, 2, &[1.0, 2.0]);
        let b = m64(3, 1, &[1.0, 2.0, 3.0]);
        let err = a.matmul(&b).unwrap_err().to_string();
        assert!(err.contains("1x2") && err.contains("3x1"), "{err}");
    }

    #[test]
    fn concat_cols_basic_and_empty_left() {
        let a = m64(1, 1, &[3.0]);
        let b = m64(1, 1, &[5.0]);
        assert_eq!(a.concat_cols(&b).unwrap().data(), &[3.0, 5.0]);

        let empty = Matrix::<f64>::zeros(1, 0);
        let v = m64(1, 4, &[1.0, 2.0, 3.0, 4.0]);
        assert_eq!(empty.concat_cols(&v).unwrap(), v);
    }

    #[test]
    fn concat_cols_row_mismatch() {
        let a = Matrix::<f64>::zeros(2, 1);
        let b = Matrix::<f64>::zeros(3, 1);
        assert!(a.concat_cols(&b).is_err());
    }

    #[test]
    fn concat_paper_widths() {
        let t = Matrix::<f64>::zeros(1, 768);
        let i = Matrix::<f64>::zeros(1, 512);
        assert_eq!(t.concat_cols(&i).unwrap().shape(), (1, 1280));
    }

    #[test]
    fn reshape_row_major_layout() {
        let m = m64(1, 4, &[10.0, 11.0, 12.0, 13.0]);
        let r = m.reshape(2, 2).unwrap();
        assert_eq!(r.get(0, 0), 10.0);
        assert_eq!(r.get(0, 1), 11.0);
        assert_eq!(r.get(1, 0), 12.0);
        assert_eq!(r.get(1, 1), 13.0);

        let wide = Matrix::<f64>::from_vec(1, 1280, (0..1280).map(|i| i as f64).collect()).unwrap();
        let folded = wide.reshape(2, 640).unwrap();
        assert_eq!(folded.get(0, 0), 0.0);
        assert_eq!(folded.get(0, 639), 639.0);
        assert_eq!(folded.get(1, 0), 640.0);
        assert_eq!(folded.get(1, 639), 1279.0);
    }

    #[test]
    fn reshape_count_mismatch() {
        assert!(m64(1, 4, &[1.0, 2.0, 3.0, 4.0]).reshape(3, 2).is_err());
    }

    #[test]
    fn relu_examples() {
        let m = m64(1, 3, &[-1.0, 0.0, 2.0]);
        assert_eq!(m.relu().data(), &[0.0, 0.0, 2.0]);
        let neg = m64(1, 3, &[-5.0, -0.1, -2.0]);
        assert_eq!(neg.relu().data(), &[0.0, 0.0, 0.0]);
    }

    #[test]
    fn sigmoid_examples() {
        let m = m64(1, 1, &[0.0]);
        assert_eq!(m.sigmoid().data(), &[0.5]);

        // Saturated inputs stay strictly inside (0, 1) in both precisions.
        for v in [50.0f64, -50.0, 500.0, -500.0] {
            let y64 = m64(1, 1, &[v]).sigmoid().data()[0];
            assert!(y64 > 0.0 && y64 < 1.0, "f64 sigmoid({v}) = {y64}");
            let y32 = Matrix::<f32>::row(&[v as f32]).sigmoid().data()[0];
            assert!(y32 > 0.0 && y32 < 1.0, "f32 sigmoid({v}) = {y32}");
        }
    }

    #[test]
    fn softmax_uniform_and_oracle() {
        let r = m64(1, 3, &[0.0, 0.0, 0.0]).softmax().unwrap();
        for &v in r.data() {
            assert!((v - 1.0 / 3.0).abs() < 1e-12);
        }

        // Direct exp/sum-exp oracle, frozen from independent arithmetic.
        let r = m64(1, 3, &[1.0, 2.0, 3.0]).softmax().unwrap();
        let expected = [
            0.09003057317038046,
            0.24472847105479767,
            0.6652409557748219,
        ];
        for (v, e) in r.data().iter().zip(expected) {
            assert!((v - e).abs() < 1e-9);
        }
    }

    #[test]
    fn softmax_requires_single_row() {
        assert!(Matrix::<f64>::zeros(2, 2).softmax().is_err());
    }

    #[test]
    fn affine_examples() {
        let x = m64(1, 2, &[1.0, 1.0]);
        let w = m64(2, 1, &[2.0, 3.0]);
        assert_eq!(affine(&x, &w, None).unwrap().data(), &[5.0]);

        let zero_w = Matrix::<f64>::zeros(2, 3);
        let b = m64(1, 3, &[7.0, 8.0, 9.0]);
        assert_eq!(affine(&x, &zero_w, Some(&b)).unwrap(), b);
    }

    #[test]
    fn affine_matches_matmul_plus_add_oracle() {
        let x = m64(2, 3, &[0.5, -1.0, 2.0, 1.5, 0.25, -0.75]);
        let w = m64(3, 2, &[1.0, -2.0, 0.5, 0.25, -1.5, 3.0]);
        let b = m64(1, 2, &[0.1, -0.2]);
        let got = affine(&x, &w, Some(&b)).unwrap();
        let want = matmul_oracle(&x, &w).add_row_broadcast(&b).unwrap();
        assert_close(&got, &want, 1e-12);
    }

    #[test]
    fn from_vec_length_check() {
        assert!(Matrix::<f64>::from_vec(2, 2, vec![1.0, 2.0, 3.0]).is_err());
    }

    proptest! {
        #[test]
        fn reshape_round_trip_is_identity(data in proptest::collection::vec(-1e6f64..1e6, 12)) {
            let m = Matrix::from_vec(3, 4, data).unwrap();
            let back = m.reshape(2, 6).unwrap().reshape(3, 4).unwrap();
            prop_assert_eq!(back, m);
        }

        #[test]
        fn relu_is_idempotent(data in proptest::collection::vec(-1e3f64..1e3, 8)) {
            let m = Matrix::from_vec(2, 4, data).unwrap();
            prop_assert_eq!(m.relu().relu(), m.relu());
        }

        #[test]
        fn sigmoid_bounds_and_symmetry(data in proptest::collection::vec(-80f64..80.0, 6)) {
            let m = Matrix::from_vec(1, 6, data).unwrap();
            let pos = m.sigmoid();
            let neg = m.scale(-1.0).sigmoid();
            for (&p, &n) in pos.data().iter().zip(neg.data()) {
                prop_assert!(p > 0.0 && p < 1.0);
                prop_assert!((p + n - 1.0).abs() < 1e-12);
            }
        }

        #[test]
        fn softmax_rows_sum_to_one_and_shift_invariant(
            data in proptest::collection::vec(-30f64..30.0, 5),
            shift in -10f64..10.0,
        ) {
            let m = Matrix::from_vec(1, 5, data).unwrap();
            let s = m.softmax().unwrap();
            let sum: f64 = s.data().iter().sum();
            prop_assert!((sum - 1.0).abs() < 1e-6);
            let shifted = m.map(|v| v + shift).softmax().unwrap();
            for (&a, &b) in s.data().iter().zip(shifted.data()) {
                prop_assert!((a - b).abs() < 1e-6);
            }
        }

        #[test]
        fn matmul_agrees_with_oracle_on_random_shapes(
            a in proptest::collection::vec(-10f64..10.0, 8),
            b in proptest::collection::vec(-10f64..10.0, 12),
        ) {
            let a = Matrix::from_vec(2, 4, a).unwrap();
            let b = Matrix::from_vec(4, 3, b).unwrap();
            let got = a.matmul(&b).unwrap();
            let want = matmul_oracle(&a, &b);
            for (x, y) in got.data().iter().zip(want.data()) {
                let scale = x.abs().max(y.abs()).max(1.0);
                prop_assert!((x - y).abs() <= 1e-12 * scale);
            }
        }
    }
}
