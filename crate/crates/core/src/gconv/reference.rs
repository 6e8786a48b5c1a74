//! Literal message-passing forms of the operators, built from the generic
//! gather / concat / affine / scatter kernels. Slower than [`ConvLayer`]'s
//! factorised paths; kept as an independent check of them.

use super::{spline_basis, ConvKind, ConvLayer, GraphBatch};
use crate::ndiff::{affine, concat_cols, gather_rows, scatter_reduce, Matrix, ReduceMode};
use crate::{Error, Result};

fn endpoints(g: &GraphBatch) -> (Vec<usize>, Vec<usize>) {
    (
        g.src.iter().map(|&s| s as usize).collect(),
        g.dst.iter().map(|&d| d as usize).collect(),
    )
}

fn sub(a: &Matrix, b: &Matrix) -> Matrix {
    let mut out = a.clone();
    for (o, v) in out.data_mut().iter_mut().zip(b.data()) {
        *o -= v;
    }
    out
}

pub fn forward(layer: &ConvLayer, g: &GraphBatch, x: &Matrix) -> Result<Matrix> {
    let p = |k: usize| layer.params[k].value();
    let (src, dst) = endpoints(g);
    let n = g.n_vertices();
    match layer.kind {
        ConvKind::Gcn => {
            let deg: Vec<f64> = (0..n).map(|i| (dst.iter().filter(|&&d| d == i).count() + 1) as f64).collect();
            let all_src: Vec<usize> = src.iter().copied().chain(0..n).collect();
            let all_dst: Vec<usize> = dst.iter().copied().chain(0..n).collect();
            let mut msgs = gather_rows(x, &all_src)?;
            for (e, (&s, &d)) in all_src.iter().zip(&all_dst).enumerate() {
                let w = 1.0 / (deg[s] * deg[d]).sqrt();
                msgs.row_mut(e).iter_mut().for_each(|v| *v *= w);
            }
            let (agg, _) = scatter_reduce(&msgs, &all_dst, n, ReduceMode::Sum)?;
            affine(&agg, p(0), p(1))
        }
        ConvKind::Sage => {
            let (mean, _) = scatter_reduce(&gather_rows(x, &src)?, &dst, n, ReduceMode::Mean)?;
            let mut out = affine(x, p(0), p(2))?;
            out.add_assign(&mean.matmul(p(1))?);
            Ok(out)
        }
        ConvKind::Edge => {
            let xi = gather_rows(x, &dst)?;
            let xj = gather_rows(x, &src)?;
            let msgs = affine(&concat_cols(&xi, &sub(&xj, &xi))?, p(0), p(1))?;
            Ok(scatter_reduce(&msgs, &dst, n, ReduceMode::Sum)?.0)
        }
        ConvKind::PointNet => {
            let pos = g.positions_matrix();
            let rel = sub(&gather_rows(&pos, &src)?, &gather_rows(&pos, &dst)?);
            let msgs = affine(&concat_cols(&gather_rows(x, &src)?, &rel)?, p(0), p(1))?;
            Ok(scatter_reduce(&msgs, &dst, n, ReduceMode::Max)?.0)
        }
        ConvKind::Spline => {
            let attrs = g
                .edge_attrs
                .as_ref()
                .ok_or_else(|| Error::config("spline convolution needs edge attributes"))?;
            let (ci, co) = (layer.c_in, layer.c_out);
            let mut msgs = Matrix::zeros(src.len(), co);
            for (e, &s) in src.iter().enumerate() {
                let (basis, _) = spline_basis(attrs[e], layer.knots);
                for (cell, w) in basis {
                    let block = p(0).slice_rows(cell as usize * ci, (cell as usize + 1) * ci);
                    let xj = Matrix::from_vec(1, ci, x.row(s).to_vec())?;
                    let m = xj.matmul(&block)?;
                    for (o, v) in msgs.row_mut(e).iter_mut().zip(m.data()) {
                        *o += w * v;
                    }
                }
            }
            let (mean, _) = scatter_reduce(&msgs, &dst, n, ReduceMode::Mean)?;
            let mut out = affine(x, p(1), p(2))?;
            out.add_assign(&mean);
            Ok(out)
        }
    }
}
