use serde::{Deserialize, Serialize};

use super::GraphBatch;
use crate::ndiff::{Matrix, Real};
use crate::{Error, Result};

/// Voxel-grid cell size in pixels over `(x, y)`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct PoolSpec {
    pub sx: u32,
    pub sy: u32,
}

impl PoolSpec {
    pub fn new(sx: u32, sy: u32) -> Result<Self> {
        if sx == 0 || sy == 0 {
            return Err(Error::config(format!("pool cell must be at least 1x1, got {sx}x{sy}")));
        }
        Ok(Self { sx, sy })
    }
}

/// Maps pooled gradients back onto the input vertices.
#[derive(Clone, Debug)]
pub struct PoolCache {
    /// Input vertex that supplied each `(cluster, channel)` maximum.
    pub argmax: Vec<u32>,
    pub cluster: Vec<u32>,
    pub n_in: usize,
}

/// Cartesian pseudo-coordinates `(p_j − p_i)/2m + ½`, with `m` the largest
/// absolute offset component within each member graph.
pub fn cartesian_attrs(positions: &[[Real; 3]], src: &[u32], dst: &[u32], graph_of: &[u32], n_graphs: usize) -> Vec<[Real; 3]> {
    let delta = |e: usize| -> [Real; 3] {
        let (a, b) = (positions[src[e] as usize], positions[dst[e] as usize]);
        [a[0] - b[0], a[1] - b[1], a[2] - b[2]]
    };
    let mut m = vec![0.0 as Real; n_graphs];
    for e in 0..src.len() {
        let gid = graph_of[dst[e] as usize] as usize;
        m[gid] = delta(e).iter().fold(m[gid], |acc, v| acc.max(v.abs()));
    }
    (0..src.len())
        .map(|e| {
            let scale = m[graph_of[dst[e] as usize] as usize];
            delta(e).map(|d| if scale > 0.0 { d / (2.0 * scale) + 0.5 } else { 0.5 })
        })
        .collect()
}

/// Clusters vertices by `(graph, ⌊x/sx⌋, ⌊y/sy⌋)` and keeps one vertex per
/// non-empty cell, in sorted key order. Features are max-pooled; the new
/// position is the cell centre in `(x, y)` and the members' mean `t̂`.
/// Edges are mapped onto clusters with self-loops and duplicates removed.
pub fn voxel_max_pool(g: &GraphBatch, x: &Matrix, pool: PoolSpec) -> Result<(GraphBatch, Matrix, PoolCache)> {
    let n = g.n_vertices();
    if x.rows() != n {
        return Err(Error::shape("voxel_max_pool", format!("{} feature rows for {n} vertices", x.rows())));
    }
    let (sx, sy) = (Real::from(pool.sx), Real::from(pool.sy));
    let keys: Vec<(u32, i64, i64)> = (0..n)
        .map(|v| {
            let p = g.positions[v];
            (g.graph_of[v], (p[0] / sx).floor() as i64, (p[1] / sy).floor() as i64)
        })
        .collect();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by_key(|&v| keys[v]);
    let mut cluster = vec![0u32; n];
    let mut heads: Vec<usize> = Vec::new();
    for (k, &v) in order.iter().enumerate() {
        if k == 0 || keys[v] != keys[order[k - 1]] {
            heads.push(v);
        }
        cluster[v] = heads.len() as u32 - 1;
    }
    let m = heads.len();
    let c = x.cols();

    let mut out = Matrix::zeros(m, c);
    let mut argmax = vec![u32::MAX; m * c];
    for v in 0..n {
        let k = cluster[v] as usize;
        let row = x.row(v);
        for ch in 0..c {
            let slot = k * c + ch;
            if argmax[slot] == u32::MAX || row[ch] > out.data()[slot] {
                out.data_mut()[slot] = row[ch];
                argmax[slot] = v as u32;
            }
        }
    }

    let mut t_sum = vec![0.0; m];
    let mut count = vec![0usize; m];
    for v in 0..n {
        t_sum[cluster[v] as usize] += g.positions[v][2];
        count[cluster[v] as usize] += 1;
    }
    let positions = heads
        .iter()
        .enumerate()
        .map(|(k, &v)| {
            let (_, cx, cy) = keys[v];
            [(cx as Real + 0.5) * sx, (cy as Real + 0.5) * sy, t_sum[k] / count[k] as Real]
        })
        .collect::<Vec<_>>();
    let graph_of: Vec<u32> = heads.iter().map(|&v| g.graph_of[v]).collect();

    let mut edges: Vec<[u32; 2]> = g
        .src
        .iter()
        .zip(&g.dst)
        .map(|(&s, &d)| [cluster[s as usize], cluster[d as usize]])
        .filter(|e| e[0] != e[1])
        .collect();
    edges.sort_unstable_by_key(|e| (e[1], e[0]));
    edges.dedup();
    let attrs = g.edge_attrs.as_ref().map(|_| {
        let src: Vec<u32> = edges.iter().map(|e| e[0]).collect();
        let dst: Vec<u32> = edges.iter().map(|e| e[1]).collect();
        cartesian_attrs(&positions, &src, &dst, &graph_of, g.n_graphs())
    });
    let coarse = GraphBatch::new(positions, edges, attrs, graph_of, g.extents.clone())?;
    Ok((coarse, out, PoolCache { argmax, cluster, n_in: n }))
}

pub fn voxel_max_pool_backward(cache: &PoolCache, grad_out: &Matrix) -> Result<Matrix> {
    let c = grad_out.cols();
    if cache.argmax.len() != grad_out.rows() * c {
        return Err(Error::shape("voxel_max_pool_backward", format!("gradient is {}x{}", grad_out.rows(), c)));
    }
    let mut gx = Matrix::zeros(cache.n_in, c);
    for (slot, &v) in cache.argmax.iter().enumerate() {
        if v != u32::MAX {
            let ch = slot % c;
            gx.data_mut()[v as usize * c + ch] += grad_out.data()[slot];
        }
    }
    Ok(gx)
}

/// Remembers which vertex filled each readout slot.
#[derive(Clone, Debug)]
pub struct ReadoutCache {
    pub argmax: Vec<u32>,
    pub n_in: usize,
    pub channels: usize,
}

/// Readout cell of a position on a `width × height` sensor.
pub fn readout_cell(p: &[Real; 3], grid: (usize, usize), extent: (u32, u32)) -> (usize, usize) {
    let cell = |v: Real, g: usize, size: u32| -> usize {
        let c = (v * g as Real / Real::from(size.max(1))).floor();
        if c.is_nan() || c < 0.0 {
            0
        } else {
            (c as usize).min(g - 1)
        }
    };
    (cell(p[0], grid.0, extent.0), cell(p[1], grid.1, extent.1))
}

/// Fixed-size readout: each member graph becomes one row of length
/// `gx·gy·C`, holding the per-cell channel maxima (zeros for empty cells),
/// ordered by cell row-major then channel.
pub fn grid_readout(g: &GraphBatch, x: &Matrix, grid: (usize, usize)) -> Result<(Matrix, ReadoutCache)> {
    let (gx, gy) = grid;
    if gx == 0 || gy == 0 {
        return Err(Error::config(format!("readout grid must be at least 1x1, got {gx}x{gy}")));
    }
    if x.rows() != g.n_vertices() {
        return Err(Error::shape("grid_readout", format!("{} feature rows for {} vertices", x.rows(), g.n_vertices())));
    }
    let c = x.cols();
    let width = gx * gy * c;
    let mut out = Matrix::zeros(g.n_graphs(), width);
    let mut argmax = vec![u32::MAX; g.n_graphs() * width];
    for v in 0..g.n_vertices() {
        let gid = g.graph_of[v] as usize;
        let (cx, cy) = readout_cell(&g.positions[v], grid, g.extents[gid]);
        let base = gid * width + (cy * gx + cx) * c;
        for (ch, &val) in x.row(v).iter().enumerate() {
            let slot = base + ch;
            if argmax[slot] == u32::MAX || val > out.data()[slot] {
                out.data_mut()[slot] = val;
                argmax[slot] = v as u32;
            }
        }
    }
    Ok((out, ReadoutCache { argmax, n_in: g.n_vertices(), channels: c }))
}

pub fn grid_readout_backward(cache: &ReadoutCache, grad_out: &Matrix) -> Result<Matrix> {
    if grad_out.len() != cache.argmax.len() {
        return Err(Error::shape("grid_readout_backward", format!("gradient is {}x{}", grad_out.rows(), grad_out.cols())));
    }
    let c = cache.channels;
    let mut gx = Matrix::zeros(cache.n_in, c);
    for (slot, &v) in cache.argmax.iter().enumerate() {
        if v != u32::MAX {
            gx.data_mut()[v as usize * c + slot % c] += grad_out.data()[slot];
        }
    }
    Ok(gx)
}
