//! Graph convolutions, voxel-grid pooling and fixed-grid readout over
//! batched graphs.
//!
//! Five operators are provided: `gcn` (symmetric normalisation with
//! self-loops), `sage` (root + mean of neighbours), `edge` (sum of
//! `φ([x_i, x_j − x_i])`), `pointnet` (max of `φ([x_j, p_j − p_i])`) and
//! `spline` (degree-1 B-spline kernels over Cartesian edge attributes, mean
//! aggregation plus a root term). Every `φ` is a single affine map.
//!
//! Edge and PointNet layers are evaluated in factorised form: the affine map
//! is split into per-vertex products so that per-edge work is a gather and a
//! reduction. [`reference`] holds the literal per-edge formulations.

mod batch;
mod conv;
mod pool;
pub mod reference;

pub use batch::{permute_rows, GraphBatch};
pub use conv::{spline_basis, ConvCache, ConvKind, ConvLayer, SplineBasis, DEFAULT_SPLINE_KNOTS};
pub use pool::{
    cartesian_attrs, grid_readout, grid_readout_backward, readout_cell, voxel_max_pool, voxel_max_pool_backward,
    PoolCache, PoolSpec, ReadoutCache,
};

#[cfg(test)]
mod tests;
