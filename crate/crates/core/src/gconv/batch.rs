use std::ops::Range;

use crate::graphbuild::EventGraph;
use crate::ndiff::{Matrix, Real};
use crate::{Error, Result};

/// Topology of one or more graphs packed as a disjoint union.
///
/// Edges are kept sorted by `(dst, src)` so each destination's incoming
/// edges form a contiguous range. `graph_of[v]` names the member graph of
/// vertex `v`; `extents[g]` is that graph's sensor size.
#[derive(Clone, Debug, PartialEq)]
pub struct GraphBatch {
    pub positions: Vec<[Real; 3]>,
    pub src: Vec<u32>,
    pub dst: Vec<u32>,
    pub edge_attrs: Option<Vec<[Real; 3]>>,
    pub graph_of: Vec<u32>,
    pub extents: Vec<(u32, u32)>,
    in_offsets: Vec<usize>,
}

impl GraphBatch {
    pub fn new(
        positions: Vec<[Real; 3]>,
        edges: Vec<[u32; 2]>,
        edge_attrs: Option<Vec<[Real; 3]>>,
        graph_of: Vec<u32>,
        extents: Vec<(u32, u32)>,
    ) -> Result<Self> {
        let n = positions.len();
        if graph_of.len() != n {
            return Err(Error::shape("graph_batch", format!("{} graph ids for {n} vertices", graph_of.len())));
        }
        if let Some(&g) = graph_of.iter().find(|&&g| g as usize >= extents.len()) {
            return Err(Error::Index {
                op: "graph_batch",
                index: g as usize,
                len: extents.len(),
            });
        }
        if let Some(a) = &edge_attrs {
            if a.len() != edges.len() {
                return Err(Error::shape("graph_batch", format!("{} attributes for {} edges", a.len(), edges.len())));
            }
        }
        if let Some(&[s, d]) = edges.iter().find(|e| e[0] as usize >= n || e[1] as usize >= n) {
            return Err(Error::Index {
                op: "graph_batch",
                index: s.max(d) as usize,
                len: n,
            });
        }
        let mut order: Vec<usize> = (0..edges.len()).collect();
        if !edges.windows(2).all(|w| (w[0][1], w[0][0]) <= (w[1][1], w[1][0])) {
            order.sort_by_key(|&k| (edges[k][1], edges[k][0]));
        }
        let src: Vec<u32> = order.iter().map(|&k| edges[k][0]).collect();
        let dst: Vec<u32> = order.iter().map(|&k| edges[k][1]).collect();
        let edge_attrs = edge_attrs.map(|a| order.iter().map(|&k| a[k]).collect());
        let mut in_offsets = vec![0usize; n + 1];
        for &d in &dst {
            in_offsets[d as usize + 1] += 1;
        }
        for i in 0..n {
            in_offsets[i + 1] += in_offsets[i];
        }
        Ok(Self {
            positions,
            src,
            dst,
            edge_attrs,
            graph_of,
            extents,
            in_offsets,
        })
    }

    /// Packs graphs into one batch and returns it with the `N×1` polarity
    /// feature matrix.
    pub fn from_graphs(graphs: &[&EventGraph]) -> Result<(Self, Matrix)> {
        let n: usize = graphs.iter().map(|g| g.n_vertices()).sum();
        let with_attrs = !graphs.is_empty() && graphs.iter().all(|g| g.edge_attrs.is_some());
        let mut positions = Vec::with_capacity(n);
        let mut features = Vec::with_capacity(n);
        let mut graph_of = Vec::with_capacity(n);
        let mut edges = Vec::new();
        let mut attrs = Vec::new();
        let mut extents = Vec::with_capacity(graphs.len());
        for (gi, g) in graphs.iter().enumerate() {
            if g.features.len() != g.n_vertices() {
                return Err(Error::shape(
                    "graph_batch",
                    format!("graph {gi} has {} features for {} vertices", g.features.len(), g.n_vertices()),
                ));
            }
            let offset = positions.len() as u32;
            positions.extend(g.positions.iter().map(|p| p.map(Real::from)));
            features.extend(g.features.iter().map(|&f| Real::from(f)));
            graph_of.extend(std::iter::repeat(gi as u32).take(g.n_vertices()));
            edges.extend(g.edges.iter().map(|&[s, d]| [s + offset, d + offset]));
            if with_attrs {
                attrs.extend(g.edge_attrs.as_ref().unwrap().iter().map(|a| a.map(Real::from)));
            }
            extents.push((g.width, g.height));
        }
        let batch = Self::new(positions, edges, with_attrs.then_some(attrs), graph_of, extents)?;
        Ok((batch, Matrix::column(&features)))
    }

    pub fn from_graph(graph: &EventGraph) -> Result<(Self, Matrix)> {
        Self::from_graphs(&[graph])
    }

    #[inline]
    pub fn n_vertices(&self) -> usize {
        self.positions.len()
    }

    #[inline]
    pub fn n_edges(&self) -> usize {
        self.src.len()
    }

    #[inline]
    pub fn n_graphs(&self) -> usize {
        self.extents.len()
    }

    /// Edge ids whose destination is `v`.
    #[inline]
    pub fn in_edges(&self, v: usize) -> Range<usize> {
        self.in_offsets[v]..self.in_offsets[v + 1]
    }

    #[inline]
    pub fn in_degree(&self, v: usize) -> usize {
        self.in_offsets[v + 1] - self.in_offsets[v]
    }

    pub fn positions_matrix(&self) -> Matrix {
        let data = self.positions.iter().flatten().copied().collect();
        Matrix::from_vec(self.n_vertices(), 3, data).expect("3 components per position")
    }

    /// Same batch with vertex `v` relabelled to `perm[v]`; features must be
    /// permuted the same way by the caller.
    pub fn relabel(&self, perm: &[usize]) -> Result<Self> {
        let n = self.n_vertices();
        assert_eq!(perm.len(), n);
        let mut positions = vec![[0.0; 3]; n];
        let mut graph_of = vec![0; n];
        for v in 0..n {
            positions[perm[v]] = self.positions[v];
            graph_of[perm[v]] = self.graph_of[v];
        }
        let edges = self
            .src
            .iter()
            .zip(&self.dst)
            .map(|(&s, &d)| [perm[s as usize] as u32, perm[d as usize] as u32])
            .collect();
        Self::new(positions, edges, self.edge_attrs.clone(), graph_of, self.extents.clone())
    }
}

/// Rows of `x` moved so that row `v` lands at `perm[v]`.
pub fn permute_rows(x: &Matrix, perm: &[usize]) -> Matrix {
    let mut out = Matrix::zeros(x.rows(), x.cols());
    for (v, &p) in perm.iter().enumerate() {
        out.row_mut(p).copy_from_slice(x.row(v));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn csr_ranges_and_sorting() {
        let b = GraphBatch::new(
            vec![[0.0; 3]; 3],
            vec![[2, 1], [0, 1], [1, 0]],
            Some(vec![[0.1; 3], [0.2; 3], [0.3; 3]]),
            vec![0; 3],
            vec![(4, 4)],
        )
        .unwrap();
        assert_eq!(b.src, [1, 0, 2]);
        assert_eq!(b.dst, [0, 1, 1]);
        assert_eq!(b.edge_attrs.as_ref().unwrap()[0], [0.3; 3]);
        assert_eq!(b.in_edges(1), 1..3);
        assert_eq!(b.in_degree(2), 0);
    }

    #[test]
    fn rejects_bad_indices() {
        assert!(GraphBatch::new(vec![[0.0; 3]], vec![[0, 1]], None, vec![0], vec![(1, 1)]).is_err());
        assert!(GraphBatch::new(vec![[0.0; 3]], vec![], None, vec![1], vec![(1, 1)]).is_err());
    }

    #[test]
    fn packing_offsets_indices() {
        let g = EventGraph {
            positions: vec![[0.0; 3], [1.0, 0.0, 0.0]],
            features: vec![1.0, -1.0],
            edges: vec![[1, 0]],
            edge_attrs: None,
            width: 8,
            height: 6,
        };
        let (b, x) = GraphBatch::from_graphs(&[&g, &g]).unwrap();
        assert_eq!(b.src, [1, 3]);
        assert_eq!(b.dst, [0, 2]);
        assert_eq!(b.graph_of, [0, 0, 1, 1]);
        assert_eq!(x.data(), &[1.0, -1.0, 1.0, -1.0]);
    }
}
