use std::fmt;
use std::str::FromStr;

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::GraphBatch;
use crate::ndiff::{matmul_into, Matrix, Parameter, Real};
use crate::{Error, Result};

pub const DEFAULT_SPLINE_KNOTS: usize = 5;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ConvKind {
    Gcn,
    Sage,
    Edge,
    PointNet,
    Spline,
}

impl ConvKind {
    pub const ALL: [ConvKind; 5] = [ConvKind::Gcn, ConvKind::Sage, ConvKind::Edge, ConvKind::PointNet, ConvKind::Spline];

    /// Closed-form trainable parameter count of one layer.
    pub fn parameter_count(self, c_in: usize, c_out: usize, knots: usize) -> usize {
        match self {
            ConvKind::Gcn => c_in * c_out + c_out,
            ConvKind::Sage | ConvKind::Edge => 2 * c_in * c_out + c_out,
            ConvKind::PointNet => (c_in + 3) * c_out + c_out,
            ConvKind::Spline => c_in * c_out * knots.pow(3) + c_in * c_out + c_out,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            ConvKind::Gcn => "gcn",
            ConvKind::Sage => "sage",
            ConvKind::Edge => "edge",
            ConvKind::PointNet => "pointnet",
            ConvKind::Spline => "spline",
        }
    }

    /// `(role, rows, fan_in)` of each parameter array, in registry order.
    fn layout(self, c_in: usize, knots: usize) -> Vec<(&'static str, usize, usize)> {
        match self {
            ConvKind::Gcn => vec![("weight", c_in, c_in), ("bias", 1, c_in)],
            ConvKind::Sage => vec![("root", c_in, c_in), ("neighbor", c_in, c_in), ("bias", 1, c_in)],
            ConvKind::Edge => vec![("weight", 2 * c_in, 2 * c_in), ("bias", 1, 2 * c_in)],
            ConvKind::PointNet => vec![("weight", c_in + 3, c_in + 3), ("bias", 1, c_in + 3)],
            ConvKind::Spline => vec![
                ("kernel", knots.pow(3) * c_in, c_in),
                ("root", c_in, c_in),
                ("bias", 1, c_in),
            ],
        }
    }
}

impl fmt::Display for ConvKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ConvKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        ConvKind::ALL
            .into_iter()
            .find(|k| k.as_str().eq_ignore_ascii_case(s))
            .ok_or_else(|| Error::config(format!("unknown convolution kind {s:?} (expected gcn, sage, edge, pointnet or spline)")))
    }
}

/// One graph-convolution layer and its parameters.
#[derive(Clone, Debug, PartialEq)]
pub struct ConvLayer {
    pub kind: ConvKind,
    pub c_in: usize,
    pub c_out: usize,
    /// Knots per pseudo-coordinate dimension; only used by spline layers.
    pub knots: usize,
    pub params: Vec<Parameter>,
}

/// Forward-pass state needed by [`ConvLayer::backward`].
#[derive(Clone, Debug)]
pub enum ConvCache {
    Gcn { agg: Matrix },
    Sage { mean: Matrix },
    Edge,
    PointNet { argmax: Vec<u32> },
    Spline { basis: Vec<SplineBasis>, clamped: usize },
}

impl ConvCache {
    /// Edge attribute components that fell outside `[0, 1]` and were clamped.
    pub fn clamped_attrs(&self) -> usize {
        match self {
            ConvCache::Spline { clamped, .. } => *clamped,
            _ => 0,
        }
    }
}

/// Active kernel cells of one edge and their weights.
pub type SplineBasis = [(u32, Real); 8];

/// Degree-1 tensor-product basis for pseudo-coordinates `u`. Components are
/// clamped into `[0, 1]`; the second value counts clamped components.
pub fn spline_basis(u: [Real; 3], knots: usize) -> (SplineBasis, usize) {
    debug_assert!(knots >= 2);
    let mut clamped = 0;
    let mut lo = [0usize; 3];
    let mut frac = [0.0; 3];
    for d in 0..3 {
        let v = if u[d].is_nan() || u[d] < 0.0 {
            clamped += 1;
            0.0
        } else if u[d] > 1.0 {
            clamped += 1;
            1.0
        } else {
            u[d]
        };
        let s = v * (knots - 1) as Real;
        let l = (s.floor() as usize).min(knots - 2);
        lo[d] = l;
        frac[d] = s - l as Real;
    }
    let mut out = [(0u32, 0.0); 8];
    for (bits, slot) in out.iter_mut().enumerate() {
        let mut cell = 0;
        let mut w = 1.0;
        let mut stride = 1;
        for d in 0..3 {
            let up = (bits >> d) & 1 == 1;
            cell += (lo[d] + usize::from(up)) * stride;
            w *= if up { frac[d] } else { 1.0 - frac[d] };
            stride *= knots;
        }
        *slot = (cell as u32, w);
    }
    (out, clamped)
}

fn add_into(dst: &mut [Real], src: &[Real]) {
    for (o, v) in dst.iter_mut().zip(src) {
        *o += v;
    }
}

fn axpy(dst: &mut [Real], a: Real, src: &[Real]) {
    for (o, v) in dst.iter_mut().zip(src) {
        *o += a * v;
    }
}

impl ConvLayer {
    /// Layer with parameters drawn uniformly from `±1/√fan_in`.
    pub fn new(kind: ConvKind, c_in: usize, c_out: usize, rng: &mut impl Rng) -> Result<Self> {
        Self::with_knots(kind, c_in, c_out, DEFAULT_SPLINE_KNOTS, rng)
    }

    pub fn with_knots(kind: ConvKind, c_in: usize, c_out: usize, knots: usize, rng: &mut impl Rng) -> Result<Self> {
        let mut layer = Self::zeroed(kind, c_in, c_out, knots)?;
        let layout = kind.layout(c_in, knots);
        for (p, (_, _, fan_in)) in layer.params.iter_mut().zip(layout) {
            let bound = 1.0 / (fan_in as Real).sqrt();
            p.value_mut().data_mut().iter_mut().for_each(|v| *v = rng.gen_range(-bound..bound));
        }
        Ok(layer)
    }

    /// Layer with all parameters zero.
    pub fn zeroed(kind: ConvKind, c_in: usize, c_out: usize, knots: usize) -> Result<Self> {
        if c_in == 0 || c_out == 0 {
            return Err(Error::config(format!("{kind} layer needs positive channel counts, got {c_in}->{c_out}")));
        }
        if kind == ConvKind::Spline && knots < 2 {
            return Err(Error::config(format!("degree-1 splines need at least 2 knots, got {knots}")));
        }
        let params = kind
            .layout(c_in, knots)
            .into_iter()
            .map(|(role, rows, _)| Parameter::new(role, Matrix::zeros(rows, c_out)))
            .collect();
        Ok(Self {
            kind,
            c_in,
            c_out,
            knots,
            params,
        })
    }

    pub fn parameter_count(&self) -> usize {
        self.params.iter().map(Parameter::len).sum()
    }

    /// Zero matrices shaped like the parameters, for [`Self::backward`].
    pub fn zero_grads(&self) -> Vec<Matrix> {
        self.params.iter().map(|p| Matrix::zeros(p.value().rows(), p.value().cols())).collect()
    }

    fn param(&self, k: usize) -> &Matrix {
        self.params[k].value()
    }

    fn check_input(&self, g: &GraphBatch, x: &Matrix) -> Result<()> {
        if x.shape() != (g.n_vertices(), self.c_in) {
            return Err(Error::shape(
                "conv",
                format!(
                    "{} layer expects {}x{} features, got {}x{}",
                    self.kind,
                    g.n_vertices(),
                    self.c_in,
                    x.rows(),
                    x.cols()
                ),
            ));
        }
        Ok(())
    }

    pub fn forward(&self, g: &GraphBatch, x: &Matrix) -> Result<(Matrix, ConvCache)> {
        self.check_input(g, x)?;
        match self.kind {
            ConvKind::Gcn => self.gcn_forward(g, x),
            ConvKind::Sage => self.sage_forward(g, x),
            ConvKind::Edge => self.edge_forward(g, x),
            ConvKind::PointNet => self.pointnet_forward(g, x),
            ConvKind::Spline => self.spline_forward(g, x),
        }
    }

    /// Accumulates parameter gradients into `grads` (same order as
    /// `params`) and returns the gradient with respect to `x`.
    pub fn backward(
        &self,
        g: &GraphBatch,
        x: &Matrix,
        cache: &ConvCache,
        grad_out: &Matrix,
        grads: &mut [Matrix],
    ) -> Result<Matrix> {
        self.check_input(g, x)?;
        if grad_out.shape() != (g.n_vertices(), self.c_out) {
            return Err(Error::shape(
                "conv_backward",
                format!("gradient is {}x{}, expected {}x{}", grad_out.rows(), grad_out.cols(), g.n_vertices(), self.c_out),
            ));
        }
        if grads.len() != self.params.len() {
            return Err(Error::shape(
                "conv_backward",
                format!("{} gradient buffers for {} parameters", grads.len(), self.params.len()),
            ));
        }
        match (self.kind, cache) {
            (ConvKind::Gcn, ConvCache::Gcn { agg }) => self.gcn_backward(g, agg, grad_out, grads),
            (ConvKind::Sage, ConvCache::Sage { mean }) => self.sage_backward(g, x, mean, grad_out, grads),
            (ConvKind::Edge, ConvCache::Edge) => self.edge_backward(g, x, grad_out, grads),
            (ConvKind::PointNet, ConvCache::PointNet { argmax }) => self.pointnet_backward(g, x, argmax, grad_out, grads),
            (ConvKind::Spline, ConvCache::Spline { basis, .. }) => self.spline_backward(g, x, basis, grad_out, grads),
            _ => Err(Error::shape("conv_backward", format!("cache does not belong to a {} layer", self.kind))),
        }
    }

    fn bias_rows(&self, n: usize, bias: &Matrix) -> Matrix {
        let mut out = Matrix::zeros(n, self.c_out);
        for r in 0..n {
            out.row_mut(r).copy_from_slice(bias.data());
        }
        out
    }

    fn gcn_degrees(g: &GraphBatch) -> Vec<Real> {
        (0..g.n_vertices()).map(|i| (g.in_degree(i) + 1) as Real).collect()
    }

    fn gcn_forward(&self, g: &GraphBatch, x: &Matrix) -> Result<(Matrix, ConvCache)> {
        let deg = Self::gcn_degrees(g);
        let mut agg = Matrix::zeros(g.n_vertices(), self.c_in);
        for i in 0..g.n_vertices() {
            let row = agg.row_mut(i);
            axpy(row, 1.0 / deg[i], x.row(i));
            for e in g.in_edges(i) {
                let j = g.src[e] as usize;
                axpy(row, 1.0 / (deg[i] * deg[j]).sqrt(), x.row(j));
            }
        }
        let mut out = self.bias_rows(g.n_vertices(), self.param(1));
        matmul_into(&agg, self.param(0), &mut out);
        Ok((out, ConvCache::Gcn { agg }))
    }

    fn gcn_backward(&self, g: &GraphBatch, agg: &Matrix, grad: &Matrix, grads: &mut [Matrix]) -> Result<Matrix> {
        grads[0].add_assign(&agg.t_matmul(grad)?);
        grads[1].add_assign(&grad.col_sums());
        let g_agg = grad.matmul_t(self.param(0))?;
        let deg = Self::gcn_degrees(g);
        let mut gx = Matrix::zeros(g.n_vertices(), self.c_in);
        for i in 0..g.n_vertices() {
            axpy(gx.row_mut(i), 1.0 / deg[i], g_agg.row(i));
            for e in g.in_edges(i) {
                let j = g.src[e] as usize;
                axpy(gx.row_mut(j), 1.0 / (deg[i] * deg[j]).sqrt(), g_agg.row(i));
            }
        }
        Ok(gx)
    }

    fn neighbor_mean(g: &GraphBatch, x: &Matrix) -> Matrix {
        let mut mean = Matrix::zeros(x.rows(), x.cols());
        for i in 0..x.rows() {
            let range = g.in_edges(i);
            if range.is_empty() {
                continue;
            }
            let inv = 1.0 / range.len() as Real;
            let row = mean.row_mut(i);
            for e in range {
                add_into(row, x.row(g.src[e] as usize));
            }
            row.iter_mut().for_each(|m| *m *= inv);
        }
        mean
    }

    fn sage_forward(&self, g: &GraphBatch, x: &Matrix) -> Result<(Matrix, ConvCache)> {
        let mean = Self::neighbor_mean(g, x);
        let mut out = self.bias_rows(x.rows(), self.param(2));
        matmul_into(x, self.param(0), &mut out);
        matmul_into(&mean, self.param(1), &mut out);
        Ok((out, ConvCache::Sage { mean }))
    }

    fn sage_backward(&self, g: &GraphBatch, x: &Matrix, mean: &Matrix, grad: &Matrix, grads: &mut [Matrix]) -> Result<Matrix> {
        grads[0].add_assign(&x.t_matmul(grad)?);
        grads[1].add_assign(&mean.t_matmul(grad)?);
        grads[2].add_assign(&grad.col_sums());
        let mut gx = grad.matmul_t(self.param(0))?;
        let g_mean = grad.matmul_t(self.param(1))?;
        for i in 0..x.rows() {
            let range = g.in_edges(i);
            if range.is_empty() {
                continue;
            }
            let inv = 1.0 / range.len() as Real;
            for e in range {
                axpy(gx.row_mut(g.src[e] as usize), inv, g_mean.row(i));
            }
        }
        Ok(gx)
    }

    /// `W = [W_a; W_b]` acting on `[x_i, x_j − x_i]`; returns `(W_a − W_b, W_b)`.
    fn edge_split(&self) -> (Matrix, Matrix) {
        let w = self.param(0);
        let mut wd = w.slice_rows(0, self.c_in);
        let wb = w.slice_rows(self.c_in, 2 * self.c_in);
        for (d, b) in wd.data_mut().iter_mut().zip(wb.data()) {
            *d -= b;
        }
        (wd, wb)
    }

    // Σ_j affine([x_i, x_j − x_i]) = deg_i·(x_i(W_a − W_b) + b) + Σ_j x_j W_b
    fn edge_forward(&self, g: &GraphBatch, x: &Matrix) -> Result<(Matrix, ConvCache)> {
        let (wd, wb) = self.edge_split();
        let u = x.matmul(&wd)?;
        let v = x.matmul(&wb)?;
        let b = self.param(1).data();
        let mut out = Matrix::zeros(x.rows(), self.c_out);
        for i in 0..x.rows() {
            let range = g.in_edges(i);
            if range.is_empty() {
                continue;
            }
            let deg = range.len() as Real;
            let row = out.row_mut(i);
            for ((o, ui), bi) in row.iter_mut().zip(u.row(i)).zip(b) {
                *o = deg * (ui + bi);
            }
            for e in range {
                add_into(row, v.row(g.src[e] as usize));
            }
        }
        Ok((out, ConvCache::Edge))
    }

    fn edge_backward(&self, g: &GraphBatch, x: &Matrix, grad: &Matrix, grads: &mut [Matrix]) -> Result<Matrix> {
        let n = x.rows();
        let mut gu = Matrix::zeros(n, self.c_out);
        let mut gv = Matrix::zeros(n, self.c_out);
        for i in 0..n {
            let range = g.in_edges(i);
            axpy(gu.row_mut(i), range.len() as Real, grad.row(i));
            for e in range {
                add_into(gv.row_mut(g.src[e] as usize), grad.row(i));
            }
        }
        let (wd, wb) = self.edge_split();
        let ga = x.t_matmul(&gu)?;
        let mut gb = x.t_matmul(&gv)?;
        for (b, a) in gb.data_mut().iter_mut().zip(ga.data()) {
            *b -= a;
        }
        let split = self.c_in * self.c_out;
        add_into(&mut grads[0].data_mut()[..split], ga.data());
        add_into(&mut grads[0].data_mut()[split..], gb.data());
        grads[1].add_assign(&gu.col_sums());
        let mut gx = gu.matmul_t(&wd)?;
        gx.add_assign(&gv.matmul_t(&wb)?);
        Ok(gx)
    }

    // max_j affine([x_j, p_j − p_i]) = max_j (x_j W_x + p_j W_p) − p_i W_p + b
    fn pointnet_forward(&self, g: &GraphBatch, x: &Matrix) -> Result<(Matrix, ConvCache)> {
        let w = self.param(0);
        let wx = w.slice_rows(0, self.c_in);
        let wp = w.slice_rows(self.c_in, self.c_in + 3);
        let pw = g.positions_matrix().matmul(&wp)?;
        let mut a = x.matmul(&wx)?;
        a.add_assign(&pw);
        let b = self.param(1).data();
        let c = self.c_out;
        let mut out = Matrix::zeros(x.rows(), c);
        let mut argmax = vec![u32::MAX; x.rows() * c];
        for i in 0..x.rows() {
            let range = g.in_edges(i);
            if range.is_empty() {
                continue;
            }
            let row = out.row_mut(i);
            let best = &mut argmax[i * c..(i + 1) * c];
            row.copy_from_slice(a.row(g.src[range.start] as usize));
            best.fill(range.start as u32);
            for e in range.start + 1..range.end {
                for ((o, k), v) in row.iter_mut().zip(best.iter_mut()).zip(a.row(g.src[e] as usize)) {
                    if *v > *o {
                        *o = *v;
                        *k = e as u32;
                    }
                }
            }
            for ((o, p), bi) in row.iter_mut().zip(pw.row(i)).zip(b) {
                *o += bi - p;
            }
        }
        Ok((out, ConvCache::PointNet { argmax }))
    }

    fn pointnet_backward(&self, g: &GraphBatch, x: &Matrix, argmax: &[u32], grad: &Matrix, grads: &mut [Matrix]) -> Result<Matrix> {
        let n = x.rows();
        let c = self.c_out;
        let mut ga = Matrix::zeros(n, c);
        let mut gpos = Matrix::zeros(n, c);
        let mut gbias = vec![0.0; c];
        for i in 0..n {
            if g.in_degree(i) == 0 {
                continue;
            }
            for k in 0..c {
                let v = grad.get(i, k);
                let j = g.src[argmax[i * c + k] as usize] as usize;
                ga.data_mut()[j * c + k] += v;
                gpos.data_mut()[j * c + k] += v;
                gpos.data_mut()[i * c + k] -= v;
                gbias[k] += v;
            }
        }
        let gwx = x.t_matmul(&ga)?;
        let gwp = g.positions_matrix().t_matmul(&gpos)?;
        let split = self.c_in * c;
        add_into(&mut grads[0].data_mut()[..split], gwx.data());
        add_into(&mut grads[0].data_mut()[split..], gwp.data());
        add_into(grads[1].data_mut(), &gbias);
        ga.matmul_t(&self.param(0).slice_rows(0, self.c_in))
    }

    fn spline_bases(&self, g: &GraphBatch) -> Result<(Vec<SplineBasis>, usize)> {
        let attrs = g
            .edge_attrs
            .as_ref()
            .ok_or_else(|| Error::config("spline convolution needs edge attributes (build graphs with edge attributes)"))?;
        let mut clamped = 0;
        let basis = attrs
            .iter()
            .map(|&u| {
                let (b, c) = spline_basis(u, self.knots);
                clamped += c;
                b
            })
            .collect();
        Ok((basis, clamped))
    }

    /// Calls `f(i, cell, entries)` for every vertex and kernel cell it
    /// touches, where `entries` are `(source, weight / in_degree)`.
    fn for_each_cell(g: &GraphBatch, basis: &[SplineBasis], mut f: impl FnMut(usize, usize, &[(usize, Real)])) {
        let mut scratch: Vec<(u32, usize, Real)> = Vec::new();
        let mut group: Vec<(usize, Real)> = Vec::new();
        for i in 0..g.n_vertices() {
            let range = g.in_edges(i);
            if range.is_empty() {
                continue;
            }
            let inv = 1.0 / range.len() as Real;
            scratch.clear();
            for e in range {
                for &(cell, w) in &basis[e] {
                    if w != 0.0 {
                        scratch.push((cell, g.src[e] as usize, w * inv));
                    }
                }
            }
            scratch.sort_by_key(|s| s.0);
            for chunk in scratch.chunk_by(|a, b| a.0 == b.0) {
                group.clear();
                group.extend(chunk.iter().map(|&(_, j, w)| (j, w)));
                f(i, chunk[0].0 as usize, &group);
            }
        }
    }

    fn spline_forward(&self, g: &GraphBatch, x: &Matrix) -> Result<(Matrix, ConvCache)> {
        let (basis, clamped) = self.spline_bases(g)?;
        let (ci, co) = (self.c_in, self.c_out);
        let mut out = self.bias_rows(x.rows(), self.param(2));
        matmul_into(x, self.param(1), &mut out);
        let kernel = self.param(0).data();
        let mut s = vec![0.0; ci];
        Self::for_each_cell(g, &basis, |i, cell, entries| {
            s.fill(0.0);
            for &(j, w) in entries {
                axpy(&mut s, w, x.row(j));
            }
            let block = &kernel[cell * ci * co..(cell + 1) * ci * co];
            let row = out.row_mut(i);
            for (a, &sa) in s.iter().enumerate() {
                axpy(row, sa, &block[a * co..(a + 1) * co]);
            }
        });
        Ok((out, ConvCache::Spline { basis, clamped }))
    }

    fn spline_backward(&self, g: &GraphBatch, x: &Matrix, basis: &[SplineBasis], grad: &Matrix, grads: &mut [Matrix]) -> Result<Matrix> {
        let (ci, co) = (self.c_in, self.c_out);
        grads[1].add_assign(&x.t_matmul(grad)?);
        grads[2].add_assign(&grad.col_sums());
        let mut gx = grad.matmul_t(self.param(1))?;
        let kernel = self.param(0).data();
        let gk = grads[0].data_mut();
        let mut s = vec![0.0; ci];
        let mut gs = vec![0.0; ci];
        Self::for_each_cell(g, basis, |i, cell, entries| {
            s.fill(0.0);
            for &(j, w) in entries {
                axpy(&mut s, w, x.row(j));
            }
            let gi = grad.row(i);
            let off = cell * ci * co;
            for a in 0..ci {
                let span = off + a * co..off + (a + 1) * co;
                gs[a] = kernel[span.clone()].iter().zip(gi).map(|(w, v)| w * v).sum();
                axpy(&mut gk[span], s[a], gi);
            }
            for &(j, w) in entries {
                axpy(gx.row_mut(j), w, &gs);
            }
        });
        Ok(gx)
    }
}
