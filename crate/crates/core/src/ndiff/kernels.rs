use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::matrix::matmul_into;
use super::{Matrix, Real};
use crate::{Error, Result};

/// Gradients of [`affine`] with respect to its three inputs.
#[derive(Clone, Debug, PartialEq)]
pub struct AffineGrads {
    pub x: Matrix,
    pub w: Matrix,
    pub b: Matrix,
}

/// `x · w + b`, with `b` broadcast over rows.
pub fn affine(x: &Matrix, w: &Matrix, b: &Matrix) -> Result<Matrix> {
    if x.cols() != w.rows() {
        return Err(Error::shape(
            "affine",
            format!("input has {} columns, weight has {} rows", x.cols(), w.rows()),
        ));
    }
    if b.shape() != (1, w.cols()) {
        return Err(Error::shape(
            "affine",
            format!("bias is {}x{}, expected 1x{}", b.rows(), b.cols(), w.cols()),
        ));
    }
    let mut out = Matrix::zeros(x.rows(), w.cols());
    for r in 0..out.rows() {
        out.row_mut(r).copy_from_slice(b.data());
    }
    matmul_into(x, w, &mut out);
    Ok(out)
}

pub fn affine_backward(x: &Matrix, w: &Matrix, grad_out: &Matrix) -> Result<AffineGrads> {
    if grad_out.shape() != (x.rows(), w.cols()) {
        return Err(Error::shape(
            "affine_backward",
            format!(
                "gradient is {}x{}, expected {}x{}",
                grad_out.rows(),
                grad_out.cols(),
                x.rows(),
                w.cols()
            ),
        ));
    }
    Ok(AffineGrads {
        x: grad_out.matmul_t(w)?,
        w: x.t_matmul(grad_out)?,
        b: grad_out.col_sums(),
    })
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Relu,
    #[default]
    Elu,
}

impl Activation {
    #[inline]
    pub fn apply(self, v: Real) -> Real {
        match self {
            Activation::Relu => v.max(0.0),
            Activation::Elu => {
                if v > 0.0 {
                    v
                } else {
                    v.exp_m1()
                }
            }
        }
    }

    /// Derivative at `v`; the ReLU kink at 0 has derivative 0.
    #[inline]
    pub fn derivative(self, v: Real) -> Real {
        match self {
            Activation::Relu => {
                if v > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Elu => {
                if v > 0.0 {
                    1.0
                } else {
                    v.exp()
                }
            }
        }
    }
}

impl FromStr for Activation {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "relu" => Ok(Activation::Relu),
            "elu" => Ok(Activation::Elu),
            other => Err(Error::config(format!("unknown activation `{other}`"))),
        }
    }
}

impl fmt::Display for Activation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Activation::Relu => "relu",
            Activation::Elu => "elu",
        })
    }
}

pub fn activation(x: &Matrix, kind: Activation) -> Matrix {
    let mut out = x.clone();
    out.data_mut().iter_mut().for_each(|v| *v = kind.apply(*v));
    out
}

/// `input` is the pre-activation value seen by the forward pass.
pub fn activation_backward(input: &Matrix, grad_out: &Matrix, kind: Activation) -> Matrix {
    assert_eq!(input.shape(), grad_out.shape());
    let mut g = grad_out.clone();
    for (gv, &v) in g.data_mut().iter_mut().zip(input.data()) {
        *gv *= kind.derivative(v);
    }
    g
}

#[inline]
pub fn sigmoid(v: Real) -> Real {
    if v >= 0.0 {
        1.0 / (1.0 + (-v).exp())
    } else {
        let e = v.exp();
        e / (1.0 + e)
    }
}

fn check_indices(op: &'static str, idx: &[usize], len: usize) -> Result<()> {
    match idx.iter().find(|&&i| i >= len) {
        Some(&index) => Err(Error::Index { op, index, len }),
        None => Ok(()),
    }
}

/// `out[k] = x[idx[k]]`
pub fn gather_rows(x: &Matrix, idx: &[usize]) -> Result<Matrix> {
    check_indices("gather_rows", idx, x.rows())?;
    let mut out = Matrix::zeros(idx.len(), x.cols());
    for (k, &i) in idx.iter().enumerate() {
        out.row_mut(k).copy_from_slice(x.row(i));
    }
    Ok(out)
}

/// Scatter-adds gradient rows back onto an `n_rows`-row input; repeated
/// indices accumulate.
pub fn gather_rows_backward(grad_out: &Matrix, idx: &[usize], n_rows: usize) -> Result<Matrix> {
    check_indices("gather_rows_backward", idx, n_rows)?;
    if grad_out.rows() != idx.len() {
        return Err(Error::shape(
            "gather_rows_backward",
            format!("{} gradient rows for {} indices", grad_out.rows(), idx.len()),
        ));
    }
    let mut g = Matrix::zeros(n_rows, grad_out.cols());
    for (k, &i) in idx.iter().enumerate() {
        for (a, b) in g.row_mut(i).iter_mut().zip(grad_out.row(k)) {
            *a += b;
        }
    }
    Ok(g)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ReduceMode {
    Sum,
    Mean,
    Max,
}

/// Bookkeeping from [`scatter_reduce`] needed by its backward.
#[derive(Clone, Debug, Default)]
pub struct ScatterAux {
    /// Messages received per output slot.
    pub counts: Vec<usize>,
    /// Max mode only: winning message per `(slot, column)`, `usize::MAX`
    /// for empty slots.
    pub argmax: Vec<usize>,
}

/// Reduces message rows into `n_out` slots. Empty slots are zero rows in
/// every mode; max ties go to the first message in input order.
pub fn scatter_reduce(
    msgs: &Matrix,
    dst: &[usize],
    n_out: usize,
    mode: ReduceMode,
) -> Result<(Matrix, ScatterAux)> {
    check_indices("scatter_reduce", dst, n_out)?;
    if msgs.rows() != dst.len() {
        return Err(Error::shape(
            "scatter_reduce",
            format!("{} messages for {} destinations", msgs.rows(), dst.len()),
        ));
    }
    let c = msgs.cols();
    let mut counts = vec![0usize; n_out];
    for &d in dst {
        counts[d] += 1;
    }
    let mut out = Matrix::zeros(n_out, c);
    let mut argmax = Vec::new();
    match mode {
        ReduceMode::Sum | ReduceMode::Mean => {
            for (k, &d) in dst.iter().enumerate() {
                for (o, m) in out.row_mut(d).iter_mut().zip(msgs.row(k)) {
                    *o += m;
                }
            }
            if mode == ReduceMode::Mean {
                for (d, &n) in counts.iter().enumerate() {
                    if n > 0 {
                        let inv = 1.0 / n as Real;
                        out.row_mut(d).iter_mut().for_each(|v| *v *= inv);
                    }
                }
            }
        }
        ReduceMode::Max => {
            argmax = vec![usize::MAX; n_out * c];
            for (k, &d) in dst.iter().enumerate() {
                let row = msgs.row(k);
                for j in 0..c {
                    let slot = &mut argmax[d * c + j];
                    if *slot == usize::MAX || row[j] > out.get(d, j) {
                        *slot = k;
                        out.set(d, j, row[j]);
                    }
                }
            }
        }
    }
    Ok((out, ScatterAux { counts, argmax }))
}

pub fn scatter_reduce_backward(
    grad_out: &Matrix,
    dst: &[usize],
    aux: &ScatterAux,
    mode: ReduceMode,
) -> Matrix {
    let c = grad_out.cols();
    let mut g = Matrix::zeros(dst.len(), c);
    match mode {
        ReduceMode::Sum => {
            for (k, &d) in dst.iter().enumerate() {
                g.row_mut(k).copy_from_slice(grad_out.row(d));
            }
        }
        ReduceMode::Mean => {
            for (k, &d) in dst.iter().enumerate() {
                let inv = 1.0 / aux.counts[d] as Real;
                for (a, b) in g.row_mut(k).iter_mut().zip(grad_out.row(d)) {
                    *a = b * inv;
                }
            }
        }
        ReduceMode::Max => {
            for slot in 0..grad_out.rows() {
                for j in 0..c {
                    let k = aux.argmax[slot * c + j];
                    if k != usize::MAX {
                        g.set(k, j, g.get(k, j) + grad_out.get(slot, j));
                    }
                }
            }
        }
    }
    g
}

/// `[a | b]`
pub fn concat_cols(a: &Matrix, b: &Matrix) -> Result<Matrix> {
    if a.rows() != b.rows() {
        return Err(Error::shape(
            "concat_cols",
            format!("{} rows vs {} rows", a.rows(), b.rows()),
        ));
    }
    let (ca, cb) = (a.cols(), b.cols());
    let mut out = Matrix::zeros(a.rows(), ca + cb);
    for r in 0..a.rows() {
        let row = out.row_mut(r);
        row[..ca].copy_from_slice(a.row(r));
        row[ca..].copy_from_slice(b.row(r));
    }
    Ok(out)
}

/// Splits a gradient of `[a | b]` back into `(grad_a, grad_b)`.
pub fn concat_cols_backward(grad_out: &Matrix, a_cols: usize) -> (Matrix, Matrix) {
    (
        grad_out.slice_cols(0, a_cols),
        grad_out.slice_cols(a_cols, grad_out.cols()),
    )
}
