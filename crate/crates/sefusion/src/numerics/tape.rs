//! Reverse-mode differentiation over a recorded computation trace.
//!
//! The tape is eager: each operation computes its value when recorded and
//! remembers enough structure for the backward sweep. It covers exactly the
//! operations the fusion architecture needs, not arbitrary graphs.

use crate::error::{Error, Result};
use crate::numerics::matrix::Matrix;
use crate::numerics::params::{ParamId, ParamSet};
use crate::numerics::scalar::Scalar;

/// Handle to a value recorded on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct VarId(usize);

enum Op<S> {
    /// Input with no gradient of interest.
    Constant,
    /// Leaf bound to a trainable parameter.
    Param(ParamId),
    MatMul(VarId, VarId),
    ConcatCols(VarId, VarId),
    Reshape(VarId),
    Relu(VarId),
    Sigmoid(VarId),
    Add(VarId, VarId),
    /// Row vector broadcast-added to every row of the first operand.
    AddRow(VarId, VarId),
    /// out[b, j] = Σ_r s[b, r] · x[b, r·F + j]  with F = x.cols / groups.
    ///
    /// Per-sample weighted combination of the `groups` row-major segments of
    /// x — the batched form of multiplying a weight row into a reshaped
    /// feature matrix.
    RowwiseWeightedSum {
        s: VarId,
        x: VarId,
        groups: usize,
    },
    Sum(VarId),
    Scale(VarId, S),
    /// Mean over rows of −log softmax(row)[label].
    MeanNll {
        logits: VarId,
        labels: Vec<usize>,
    },
    /// Mean over rows of the binary cross-entropy on a single logit.
    MeanBceLogit {
        logits: VarId,
        labels: Vec<usize>,
    },
}

struct Node<S> {
    value: Matrix<S>,
    op: Op<S>,
}

#[derive(Default)]
pub struct Tape<S> {
    nodes: Vec<Node<S>>,
}

impl<S: Scalar> Tape<S> {
    pub fn new() -> Self {
        Tape { nodes: Vec::new() }
    }

    fn push(&mut self, value: Matrix<S>, op: Op<S>) -> VarId {
        self.nodes.push(Node { value, op });
        VarId(self.nodes.len() - 1)
    }

    pub fn value(&self, id: VarId) -> &Matrix<S> {
        &self.nodes[id.0].value
    }

    pub fn scalar_value(&self, id: VarId) -> Result<S> {
        let v = self.value(id);
        if v.shape() != (1, 1) {
            return Err(Error::usage(format!(
                "expected a scalar node, got shape {}",
                v.shape_string()
            )));
        }
        Ok(v.get(0, 0))
    }

    pub fn constant(&mut self, value: Matrix<S>) -> VarId {
        self.push(value, Op::Constant)
    }

    pub fn param(&mut self, params: &ParamSet<S>, id: ParamId) -> VarId {
        self.push(params.value(id).clone(), Op::Param(id))
    }

    pub fn matmul(&mut self, a: VarId, b: VarId) -> Result<VarId> {
        let value = self.value(a).matmul(self.value(b))?;
        Ok(self.push(value, Op::MatMul(a, b)))
    }

    pub fn concat_cols(&mut self, a: VarId, b: VarId) -> Result<VarId> {
        let value = self.value(a).concat_cols(self.value(b))?;
        Ok(self.push(value, Op::ConcatCols(a, b)))
    }

    pub fn reshape(&mut self, a: VarId, rows: usize, cols: usize) -> Result<VarId> {
        let value = self.value(a).reshape(rows, cols)?;
        Ok(self.push(value, Op::Reshape(a)))
    }

    pub fn relu(&mut self, a: VarId) -> VarId {
        let value = self.value(a).relu();
        self.push(value, Op::Relu(a))
    }

    pub fn sigmoid(&mut self, a: VarId) -> VarId {
        let value = self.value(a).sigmoid();
        self.push(value, Op::Sigmoid(a))
    }

    pub fn add(&mut self, a: VarId, b: VarId) -> Result<VarId> {
        let value = self.value(a).add(self.value(b))?;
        Ok(self.push(value, Op::Add(a, b)))
    }

    pub fn add_row(&mut self, a: VarId, row: VarId) -> Result<VarId> {
        let value = self.value(a).add_row_broadcast(self.value(row))?;
        Ok(self.push(value, Op::AddRow(a, row)))
    }

    /// `x · w` plus optional bias row, on the tape.
    pub fn affine(&mut self, x: VarId, w: VarId, bias: Option<VarId>) -> Result<VarId> {
        let product = self.matmul(x, w)?;
        match bias {
            Some(b) => self.add_row(product, b),
            None => Ok(product),
        }
    }

    /// Weighted sum of the `groups` equal column segments of `x`, with one
    /// weight per segment per row of `s`.
    pub fn rowwise_weighted_sum(&mut self, s: VarId, x: VarId, groups: usize) -> Result<VarId> {
        let sv = self.value(s);
        let xv = self.value(x);
        if groups == 0 || xv.cols() % groups != 0 {
            return Err(Error::shape(
                "rowwise_weighted_sum",
                format!("column count divisible by {groups}"),
                xv.shape_string(),
            ));
        }
        if sv.rows() != xv.rows() || sv.cols() != groups {
            return Err(Error::shape(
                "rowwise_weighted_sum",
                format!("{}x{groups} weights", xv.rows()),
                sv.shape_string(),
            ));
        }
        let width = xv.cols() / groups;
        let mut out = Matrix::zeros(xv.rows(), width);
        for b in 0..xv.rows() {
            for r in 0..groups {
                let w = sv.get(b, r);
                for j in 0..width {
                    let v = out.get(b, j) + w * xv.get(b, r * width + j);
                    out.set(b, j, v);
                }
            }
        }
        Ok(self.push(out, Op::RowwiseWeightedSum { s, x, groups }))
    }

    pub fn sum(&mut self, a: VarId) -> VarId {
        let total = self.value(a).sum();
        self.push(
            Matrix::from_vec(1, 1, vec![total]).expect("scalar"),
            Op::Sum(a),
        )
    }

    pub fn scale(&mut self, a: VarId, factor: S) -> VarId {
        let value = self.value(a).scale(factor);
        self.push(value, Op::Scale(a, factor))
    }

    /// Mean negative log-likelihood of `labels` under row-wise softmax.
    pub fn mean_nll(&mut self, logits: VarId, labels: &[usize]) -> Result<VarId> {
        let lv = self.value(logits);
        if labels.len() != lv.rows() {
            return Err(Error::usage(format!(
                "mean_nll: {} labels for {} logit rows",
                labels.len(),
                lv.rows()
            )));
        }
        if let Some(&bad) = labels.iter().find(|&&l| l >= lv.cols()) {
            return Err(Error::usage(format!(
                "mean_nll: label {bad} out of range for {} classes",
                lv.cols()
            )));
        }
        let log_probs = lv.log_softmax_rows();
        let mut total = S::ZERO;
        for (r, &label) in labels.iter().enumerate() {
            total -= log_probs.get(r, label);
        }
        let mean = total / S::from_f64(labels.len() as f64);
        Ok(self.push(
            Matrix::from_vec(1, 1, vec![mean]).expect("scalar"),
            Op::MeanNll {
                logits,
                labels: labels.to_vec(),
            },
        ))
    }

    /// Mean binary cross-entropy on a single-logit column; labels in {0, 1}.
    pub fn mean_bce_logit(&mut self, logits: VarId, labels: &[usize]) -> Result<VarId> {
        let lv = self.value(logits);
        if lv.cols() != 1 {
            return Err(Error::shape("mean_bce_logit", "1 column", lv.shape_string()));
        }
        if labels.len() != lv.rows() {
            return Err(Error::usage(format!(
                "mean_bce_logit: {} labels for {} logit rows",
                labels.len(),
                lv.rows()
            )));
        }
        if let Some(&bad) = labels.iter().find(|&&l| l > 1) {
            return Err(Error::usage(format!(
                "mean_bce_logit: label {bad} is not binary"
            )));
        }
        let mut total = S::ZERO;
        for (r, &label) in labels.iter().enumerate() {
            let v = lv.get(r, 0);
            // softplus(v) − y·v, with softplus in its overflow-safe form
            let softplus = v.max(S::ZERO) + (S::ONE + (-v.abs()).exp()).ln();
            total += softplus - S::from_f64(label as f64) * v;
        }
        let mean = total / S::from_f64(labels.len() as f64);
        Ok(self.push(
            Matrix::from_vec(1, 1, vec![mean]).expect("scalar"),
            Op::MeanBceLogit {
                logits,
                labels: labels.to_vec(),
            },
        ))
    }

    /// Propagates d(loss)/d(parameter) into every reachable parameter's
    /// gradient buffer. Gradients are zeroed first, so unreached parameters
    /// end at zero. Consumes the tape.
    pub fn backward(self, loss: VarId, params: &mut ParamSet<S>) -> Result<()> {
        let loss_value = self.value(loss);
        if loss_value.shape() != (1, 1) {
            return Err(Error::usage(format!(
                "backward requires a scalar loss, got shape {}",
                loss_value.shape_string()
            )));
        }
        params.zero_grads();

        let mut adjoints: Vec<Option<Matrix<S>>> = (0..self.nodes.len()).map(|_| None).collect();
        adjoints[loss.0] = Some(Matrix::from_vec(1, 1, vec![S::ONE]).expect("scalar"));

        for idx in (0..=loss.0).rev() {
            let Some(grad) = adjoints[idx].take() else {
                continue;
            };
            let node = &self.nodes[idx];
            match &node.op {
                Op::Constant => {}
                Op::Param(pid) => params.accumulate_grad(*pid, &grad)?,
                Op::MatMul(a, b) => {
                    let av = self.value(*a);
                    let bv = self.value(*b);
                    let da = grad.matmul(&bv.transpose())?;
                    let db = av.transpose().matmul(&grad)?;
                    accumulate(&mut adjoints, a.0, da)?;
                    accumulate(&mut adjoints, b.0, db)?;
                }
                Op::ConcatCols(a, b) => {
                    let a_cols = self.value(*a).cols();
                    let rows = grad.rows();
                    let b_cols = grad.cols() - a_cols;
                    let mut da = Matrix::zeros(rows, a_cols);
                    let mut db = Matrix::zeros(rows, b_cols);
                    for r in 0..rows {
                        for c in 0..a_cols {
                            da.set(r, c, grad.get(r, c));
                        }
                        for c in 0..b_cols {
                            db.set(r, c, grad.get(r, a_cols + c));
                        }
                    }
                    accumulate(&mut adjoints, a.0, da)?;
                    accumulate(&mut adjoints, b.0, db)?;
                }
                Op::Reshape(a) => {
                    let (rows, cols) = self.value(*a).shape();
                    accumulate(&mut adjoints, a.0, grad.reshape(rows, cols)?)?;
                }
                Op::Relu(a) => {
                    let input = self.value(*a);
                    let mut da = grad.clone();
                    for (g, &x) in da.data_mut().iter_mut().zip(input.data()) {
                        if x <= S::ZERO {
                            *g = S::ZERO;
                        }
                    }
                    accumulate(&mut adjoints, a.0, da)?;
                }
                Op::Sigmoid(a) => {
                    let output = &node.value;
                    let mut da = grad.clone();
                    for (g, &y) in da.data_mut().iter_mut().zip(output.data()) {
                        *g *= y * (S::ONE - y);
                    }
                    accumulate(&mut adjoints, a.0, da)?;
                }
                Op::Add(a, b) => {
                    accumulate(&mut adjoints, a.0, grad.clone())?;
                    accumulate(&mut adjoints, b.0, grad)?;
                }
                Op::AddRow(a, row) => {
                    let mut drow = Matrix::zeros(1, grad.cols());
                    for r in 0..grad.rows() {
                        for c in 0..grad.cols() {
                            let v = drow.get(0, c) + grad.get(r, c);
                            drow.set(0, c, v);
                        }
                    }
                    accumulate(&mut adjoints, a.0, grad)?;
                    accumulate(&mut adjoints, row.0, drow)?;
                }
                Op::RowwiseWeightedSum { s, x, groups } => {
                    let sv = self.value(*s);
                    let xv = self.value(*x);
                    let width = xv.cols() / groups;
                    let mut ds = Matrix::zeros(sv.rows(), sv.cols());
                    let mut dx = Matrix::zeros(xv.rows(), xv.cols());
                    for b in 0..xv.rows() {
                        for r in 0..*groups {
                            let w = sv.get(b, r);
                            let mut acc = S::ZERO;
                            for j in 0..width {
                                let g = grad.get(b, j);
                                acc += g * xv.get(b, r * width + j);
                                dx.set(b, r * width + j, dx.get(b, r * width + j) + g * w);
                            }
                            ds.set(b, r, acc);
                        }
                    }
                    accumulate(&mut adjoints, s.0, ds)?;
                    accumulate(&mut adjoints, x.0, dx)?;
                }
                Op::Sum(a) => {
                    let g = grad.get(0, 0);
                    let (rows, cols) = self.value(*a).shape();
                    let da = Matrix::from_vec(rows, cols, vec![g; rows * cols])?;
                    accumulate(&mut adjoints, a.0, da)?;
                }
                Op::Scale(a, factor) => {
                    accumulate(&mut adjoints, a.0, grad.scale(*factor))?;
                }
                Op::MeanNll { logits, labels } => {
                    let g = grad.get(0, 0);
                    let lv = self.value(*logits);
                    let mut da = lv.softmax_rows();
                    let inv_n = S::ONE / S::from_f64(labels.len() as f64);
                    for (r, &label) in labels.iter().enumerate() {
                        da.set(r, label, da.get(r, label) - S::ONE);
                    }
                    let da = da.scale(g * inv_n);
                    accumulate(&mut adjoints, logits.0, da)?;
                }
                Op::MeanBceLogit { logits, labels } => {
                    let g = grad.get(0, 0);
                    let lv = self.value(*logits);
                    let probs = lv.sigmoid();
                    let inv_n = S::ONE / S::from_f64(labels.len() as f64);
                    let mut da = Matrix::zeros(lv.rows(), 1);
                    for (r, &label) in labels.iter().enumerate() {
                        let y = S::from_f64(label as f64);
                        da.set(r, 0, (probs.get(r, 0) - y) * inv_n * g);
                    }
                    accumulate(&mut adjoints, logits.0, da)?;
                }
            }
        }
        Ok(())
    }
}

fn accumulate<S: Scalar>(
    adjoints: &mut [Option<Matrix<S>>],
    idx: usize,
    delta: Matrix<S>,
) -> Result<()> {
    match &mut adjoints[idx] {
        Some(existing) => {
            *existing = existing.add(&delta)?;
        }
        slot @ None => *slot = Some(delta),
    }
    Ok(())
}
