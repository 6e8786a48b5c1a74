use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::*;
use crate::ndiff::{grad_check, Matrix, Real};

fn batch(positions: Vec<[Real; 3]>, edges: Vec<[u32; 2]>) -> GraphBatch {
    let n = positions.len();
    GraphBatch::new(positions, edges, None, vec![0; n], vec![(64, 48)]).unwrap()
}

fn with_attrs(mut g: GraphBatch) -> GraphBatch {
    g.edge_attrs = Some(cartesian_attrs(&g.positions, &g.src, &g.dst, &g.graph_of, g.n_graphs()));
    g
}

fn random_graph(rng: &mut ChaCha8Rng, n: usize, c: usize) -> (GraphBatch, Matrix) {
    let positions: Vec<[Real; 3]> = (0..n)
        .map(|_| [rng.gen_range(0.0..8.0), rng.gen_range(0.0..8.0), rng.gen_range(0.0..8.0)])
        .collect();
    let mut edges = Vec::new();
    for i in 0..n as u32 {
        for j in 0..n as u32 {
            if i != j && rng.gen_bool(0.3) {
                edges.push([j, i]);
            }
        }
    }
    let x = Matrix::from_vec(n, c, (0..n * c).map(|_| rng.gen_range(-1.0..1.0)).collect()).unwrap();
    (with_attrs(batch(positions, edges)), x)
}

fn set(layer: &mut ConvLayer, k: usize, rows: &[&[Real]]) {
    *layer.params[k].value_mut() = Matrix::from_rows(rows);
}

fn scalar_loss(out: &Matrix, proj: &Matrix) -> Real {
    out.data().iter().zip(proj.data()).map(|(a, b)| a * b).sum()
}

/// Largest relative error over the input and every parameter array.
///
/// Each operator is linear in any single coordinate (piecewise linear for
/// the max in pointnet), so central differences have no truncation error
/// and a wider step only reduces rounding noise on tiny gradients.
fn layer_grad_error(layer: &ConvLayer, g: &GraphBatch, x: &Matrix, rng: &mut ChaCha8Rng) -> Real {
    let h = if layer.kind == ConvKind::PointNet { 1e-5 } else { 1e-3 };
    let (out, cache) = layer.forward(g, x).unwrap();
    let proj = Matrix::from_vec(out.rows(), out.cols(), (0..out.len()).map(|_| rng.gen_range(-1.0..1.0)).collect()).unwrap();
    let mut grads = layer.zero_grads();
    let gx = layer.backward(g, x, &cache, &proj, &mut grads).unwrap();
    let mut worst = grad_check(
        |v| {
            let xv = Matrix::from_vec(x.rows(), x.cols(), v.to_vec()).unwrap();
            scalar_loss(&layer.forward(g, &xv).unwrap().0, &proj)
        },
        x.data(),
        gx.data(),
        h,
    );
    for k in 0..layer.params.len() {
        let err = grad_check(
            |v| {
                let mut l = layer.clone();
                l.params[k].value_mut().data_mut().copy_from_slice(v);
                scalar_loss(&l.forward(g, x).unwrap().0, &proj)
            },
            layer.params[k].value().data(),
            grads[k].data(),
            h,
        );
        worst = worst.max(err);
    }
    worst
}

#[test]
fn gcn_examples() {
    let g = batch(vec![[0.0; 3]; 2], vec![]);
    let mut l = ConvLayer::zeroed(ConvKind::Gcn, 2, 2, 5).unwrap();
    set(&mut l, 0, &[&[1.0, 0.0], &[0.0, 1.0]]);
    let x = Matrix::from_rows(&[[1.5, -2.0], [3.0, 4.0]]);
    assert_eq!(l.forward(&g, &x).unwrap().0, x);

    let g = batch(vec![[0.0; 3]; 2], vec![[0, 1], [1, 0]]);
    let mut l = ConvLayer::zeroed(ConvKind::Gcn, 1, 1, 5).unwrap();
    set(&mut l, 0, &[&[1.0]]);
    let out = l.forward(&g, &Matrix::column(&[2.0, 4.0])).unwrap().0;
    assert_eq!(out.data(), &[3.0, 3.0]);
}

#[test]
fn sage_examples() {
    let mut l = ConvLayer::zeroed(ConvKind::Sage, 1, 1, 5).unwrap();
    set(&mut l, 0, &[&[1.0]]);
    set(&mut l, 1, &[&[1.0]]);
    set(&mut l, 2, &[&[0.5]]);
    let g = batch(vec![[0.0; 3]; 2], vec![[1, 0]]);
    let out = l.forward(&g, &Matrix::column(&[2.0, 4.0])).unwrap().0;
    assert_eq!(out.data(), &[6.5, 4.5]);
}

#[test]
fn edge_examples() {
    let mut l = ConvLayer::zeroed(ConvKind::Edge, 1, 1, 5).unwrap();
    set(&mut l, 0, &[&[1.0], &[1.0]]);
    let g = batch(vec![[0.0; 3]; 3], vec![[0, 1], [1, 0]]);
    let out = l.forward(&g, &Matrix::column(&[1.0, 3.0, 9.0])).unwrap().0;
    assert_eq!(out.data(), &[3.0, 1.0, 0.0]);
}

#[test]
fn edge_shift_invariance_without_difference_block() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let (g, x) = random_graph(&mut rng, 8, 3);
    let mut l = ConvLayer::new(ConvKind::Edge, 3, 4, &mut rng).unwrap();
    // only the x_j − x_i half is non-zero
    l.params[0].value_mut().data_mut()[..12].fill(0.0);
    let mut shifted = x.clone();
    shifted.data_mut().iter_mut().for_each(|v| *v += 2.5);
    let a = l.forward(&g, &x).unwrap().0;
    let b = l.forward(&g, &shifted).unwrap().0;
    assert!(a.max_abs_diff(&b) <= 1e-12);
}

#[test]
fn pointnet_examples() {
    let mut l = ConvLayer::zeroed(ConvKind::PointNet, 1, 1, 5).unwrap();
    set(&mut l, 0, &[&[1.0], &[1.0], &[1.0], &[1.0]]);
    let g = batch(vec![[0.0, 0.0, 0.0], [1.0, 0.0, 0.0], [5.0, 5.0, 5.0]], vec![[0, 1], [1, 0]]);
    let out = l.forward(&g, &Matrix::column(&[2.0, 4.0, 7.0])).unwrap().0;
    assert_eq!(out.data(), &[5.0, 1.0, 0.0]);
}

#[test]
fn spline_corner_and_midpoint_bases() {
    let (b, c) = spline_basis([0.0; 3], 2);
    assert_eq!(c, 0);
    assert_eq!(b.iter().filter(|(_, w)| *w != 0.0).collect::<Vec<_>>(), vec![&(0, 1.0)]);
    let (b, _) = spline_basis([1.0; 3], 2);
    assert_eq!(b.iter().filter(|(_, w)| *w != 0.0).collect::<Vec<_>>(), vec![&(7, 1.0)]);
    let (b, _) = spline_basis([0.5, 0.0, 0.0], 2);
    let active: Vec<_> = b.iter().filter(|(_, w)| *w != 0.0).copied().collect();
    assert_eq!(active, vec![(0, 0.5), (1, 0.5)]);
    let (_, clamped) = spline_basis([-0.1, 1.2, 0.5], 5);
    assert_eq!(clamped, 2);
}

#[test]
fn spline_message_uses_active_cell() {
    let mut l = ConvLayer::zeroed(ConvKind::Spline, 1, 1, 2).unwrap();
    l.params[0].value_mut().data_mut().copy_from_slice(&[1.0, 2.0, 3.0, 4.0, 5.0, 6.0, 7.0, 8.0]);
    let mut g = batch(vec![[0.0; 3]; 2], vec![[1, 0]]);
    g.edge_attrs = Some(vec![[0.5, 0.0, 0.0]]);
    let out = l.forward(&g, &Matrix::column(&[0.0, 2.0])).unwrap().0;
    assert_eq!(out.data(), &[3.0, 0.0]);
    g.edge_attrs = None;
    assert!(l.forward(&g, &Matrix::column(&[0.0, 2.0])).unwrap_err().is_config());
    assert!(ConvLayer::zeroed(ConvKind::Spline, 1, 1, 1).unwrap_err().is_config());
}

#[test]
fn spline_midpoint_gradients() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut l = ConvLayer::with_knots(ConvKind::Spline, 2, 3, 2, &mut rng).unwrap();
    l.params[2].value_mut().data_mut().fill(0.1);
    let mut g = batch(vec![[0.0; 3]; 3], vec![[1, 0], [2, 0], [0, 1]]);
    g.edge_attrs = Some(vec![[0.5, 0.0, 0.0], [0.25, 0.75, 0.1], [0.9, 0.3, 0.6]]);
    let x = Matrix::from_rows(&[[0.3, -0.2], [1.0, 0.5], [-0.7, 0.8]]);
    assert!(layer_grad_error(&l, &g, &x, &mut rng) <= 1e-6);
}

#[test]
fn isolated_vertex_rows() {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let mut g = batch(vec![[1.0, 2.0, 3.0], [2.0, 2.0, 3.0], [3.0, 4.0, 5.0]], vec![[0, 1], [1, 0]]);
    g = with_attrs(g);
    let x = Matrix::from_rows(&[[0.5, 1.0], [-1.0, 2.0], [0.7, -0.3]]);
    for kind in ConvKind::ALL {
        let l = ConvLayer::new(kind, 2, 3, &mut rng).unwrap();
        let out = l.forward(&g, &x).unwrap().0;
        let expected: Vec<Real> = match kind {
            ConvKind::Gcn => {
                let w = l.params[0].value();
                (0..3).map(|c| x.get(2, 0) * w.get(0, c) + x.get(2, 1) * w.get(1, c) + l.params[1].value().get(0, c)).collect()
            }
            ConvKind::Sage | ConvKind::Spline => {
                let (root, bias) = if kind == ConvKind::Sage { (0, 2) } else { (1, 2) };
                let w = l.params[root].value();
                (0..3).map(|c| x.get(2, 0) * w.get(0, c) + x.get(2, 1) * w.get(1, c) + l.params[bias].value().get(0, c)).collect()
            }
            ConvKind::Edge | ConvKind::PointNet => vec![0.0; 3],
        };
        for (a, b) in out.row(2).iter().zip(&expected) {
            assert!((a - b).abs() <= 1e-12, "{kind}");
        }
    }
}

#[test]
fn factorised_paths_match_reference() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for kind in ConvKind::ALL {
        for _ in 0..5 {
            let n = rng.gen_range(1..15);
            let (g, x) = random_graph(&mut rng, n, 3);
            let l = ConvLayer::with_knots(kind, 3, 4, 3, &mut rng).unwrap();
            let fast = l.forward(&g, &x).unwrap().0;
            let slow = reference::forward(&l, &g, &x).unwrap();
            assert!(fast.max_abs_diff(&slow) <= 1e-10, "{kind}: {}", fast.max_abs_diff(&slow));
        }
    }
}

#[test]
fn gradients_match_finite_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    for kind in ConvKind::ALL {
        for _ in 0..4 {
            let n = rng.gen_range(2..10);
            let (g, x) = random_graph(&mut rng, n, 2);
            let l = ConvLayer::with_knots(kind, 2, 3, 3, &mut rng).unwrap();
            let err = layer_grad_error(&l, &g, &x, &mut rng);
            assert!(err <= 1e-6, "{kind}: {err}");
        }
    }
}

#[test]
fn permutation_equivariance_and_translation() {
    let mut rng = ChaCha8Rng::seed_from_u64(13);
    for kind in ConvKind::ALL {
        let (g, x) = random_graph(&mut rng, 12, 2);
        let l = ConvLayer::new(kind, 2, 3, &mut rng).unwrap();
        let mut perm: Vec<usize> = (0..12).collect();
        rand::seq::SliceRandom::shuffle(perm.as_mut_slice(), &mut rng);
        let gp = g.relabel(&perm).unwrap();
        let a = permute_rows(&l.forward(&g, &x).unwrap().0, &perm);
        let b = l.forward(&gp, &permute_rows(&x, &perm)).unwrap().0;
        assert!(a.max_abs_diff(&b) <= 1e-9, "{kind}");
    }
    let (g, x) = random_graph(&mut rng, 12, 2);
    let l = ConvLayer::new(ConvKind::PointNet, 2, 3, &mut rng).unwrap();
    let mut moved = g.clone();
    moved.positions.iter_mut().for_each(|p| *p = [p[0] + 7.0, p[1] - 3.0, p[2] + 11.0]);
    let a = l.forward(&g, &x).unwrap().0;
    let b = l.forward(&moved, &x).unwrap().0;
    assert!(a.max_abs_diff(&b) <= 1e-6);
}

#[test]
fn parameter_counts_follow_closed_forms() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    for kind in ConvKind::ALL {
        for (ci, co) in [(1, 8), (8, 16), (32, 128)] {
            let l = ConvLayer::with_knots(kind, ci, co, 3, &mut rng).unwrap();
            assert_eq!(l.parameter_count(), kind.parameter_count(ci, co, 3));
        }
    }
    assert_eq!(ConvKind::Spline.parameter_count(2, 3, 5), 2 * 3 * 125 + 6 + 3);
    assert_eq!("PointNet".parse::<ConvKind>().unwrap(), ConvKind::PointNet);
    assert!("mlp".parse::<ConvKind>().unwrap_err().is_config());
}

#[test]
fn voxel_pool_examples() {
    let g = batch(
        vec![[0.0, 0.0, 1.0], [1.0, 1.0, 3.0], [3.0, 0.0, 5.0], [3.0, 1.0, 7.0]],
        vec![[1, 0], [2, 1], [3, 2]],
    );
    let x = Matrix::from_rows(&[[1.0, 8.0], [5.0, 2.0], [3.0, 4.0], [6.0, 0.0]]);
    let (cg, px, cache) = voxel_max_pool(&g, &x, PoolSpec::new(2, 2).unwrap()).unwrap();
    assert_eq!(cg.n_vertices(), 2);
    assert_eq!(px, Matrix::from_rows(&[[5.0, 8.0], [6.0, 4.0]]));
    assert_eq!(cg.positions, vec![[1.0, 1.0, 2.0], [3.0, 1.0, 6.0]]);
    // 1→0 and 3→2 collapse to self-loops; 2→1 becomes 1→0
    assert_eq!((cg.src.clone(), cg.dst.clone()), (vec![1], vec![0]));
    let gx = voxel_max_pool_backward(&cache, &Matrix::from_rows(&[[1.0, 2.0], [3.0, 4.0]])).unwrap();
    assert_eq!(gx, Matrix::from_rows(&[[0.0, 2.0], [1.0, 0.0], [0.0, 4.0], [3.0, 0.0]]));

    let (cg, px, _) = voxel_max_pool(&g, &x, PoolSpec::new(16, 12).unwrap()).unwrap();
    assert_eq!((cg.n_vertices(), cg.n_edges()), (1, 0));
    assert_eq!(px.data(), &[6.0, 8.0]);
    assert!(PoolSpec::new(0, 3).unwrap_err().is_config());
}

#[test]
fn voxel_pool_matches_naive_loop() {
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    for _ in 0..20 {
        let n = rng.gen_range(1..40);
        let (g, x) = random_graph(&mut rng, n, 3);
        let (cg, px, _) = voxel_max_pool(&g, &x, PoolSpec::new(3, 2).unwrap()).unwrap();
        let mut cells: Vec<(i64, i64)> = g.positions.iter().map(|p| ((p[0] / 3.0).floor() as i64, (p[1] / 2.0).floor() as i64)).collect();
        cells.sort();
        cells.dedup();
        assert_eq!(cg.n_vertices(), cells.len());
        for (k, cell) in cells.iter().enumerate() {
            for ch in 0..3 {
                let naive = (0..n)
                    .filter(|&v| ((g.positions[v][0] / 3.0).floor() as i64, (g.positions[v][1] / 2.0).floor() as i64) == *cell)
                    .map(|v| x.get(v, ch))
                    .fold(Real::NEG_INFINITY, Real::max);
                assert_eq!(px.get(k, ch), naive);
            }
        }
        assert!(cg.src.iter().zip(&cg.dst).all(|(s, d)| s != d));
        let attrs = cg.edge_attrs.as_ref().unwrap();
        assert!(attrs.iter().flatten().all(|v| (0.0..=1.0).contains(v)));
    }
}

#[test]
fn readout_examples() {
    let empty = GraphBatch::new(vec![], vec![], None, vec![], vec![(64, 48)]).unwrap();
    let (r, _) = grid_readout(&empty, &Matrix::zeros(0, 3), (4, 4)).unwrap();
    assert_eq!(r, Matrix::zeros(1, 48));

    let g = batch(vec![[10.0, 5.0, 0.0], [50.0, 40.0, 0.0], [63.9, 47.9, 0.0]], vec![]);
    let x = Matrix::column(&[2.0, 7.0, 3.0]);
    let (r, _) = grid_readout(&g, &x, (1, 1)).unwrap();
    assert_eq!(r.data(), &[7.0]);
    let g2 = batch(vec![[10.0, 5.0, 0.0], [50.0, 40.0, 0.0]], vec![]);
    let (r, cache) = grid_readout(&g2, &Matrix::column(&[2.0, 7.0]), (2, 2)).unwrap();
    assert_eq!(r.data(), &[2.0, 0.0, 0.0, 7.0]);
    let gx = grid_readout_backward(&cache, &Matrix::from_rows(&[[1.0, 2.0, 3.0, 4.0]])).unwrap();
    assert_eq!(gx.data(), &[1.0, 4.0]);
    // positions on or past the far edge clamp into the last cell
    assert_eq!(readout_cell(&[64.0, 48.0, 0.0], (4, 4), (64, 48)), (3, 3));
    assert_eq!(readout_cell(&[-1.0, 0.0, 0.0], (4, 4), (64, 48)), (0, 0));
}

#[test]
fn readout_separates_batch_members() {
    let g = GraphBatch::new(
        vec![[1.0, 1.0, 0.0], [1.0, 1.0, 0.0]],
        vec![],
        None,
        vec![0, 1],
        vec![(8, 8), (8, 8)],
    )
    .unwrap();
    let (r, _) = grid_readout(&g, &Matrix::column(&[3.0, -2.0]), (1, 1)).unwrap();
    assert_eq!(r.data(), &[3.0, -2.0]);
}

#[test]
fn pool_and_readout_gradients() {
    let mut rng = ChaCha8Rng::seed_from_u64(31);
    for _ in 0..10 {
        let (g, x) = random_graph(&mut rng, 12, 2);
        let (_, _, pc) = voxel_max_pool(&g, &x, PoolSpec::new(4, 4).unwrap()).unwrap();
        let (px, _, _) = {
            let (cg, px, c) = voxel_max_pool(&g, &x, PoolSpec::new(4, 4).unwrap()).unwrap();
            (px, cg, c)
        };
        let proj: Vec<Real> = (0..px.len()).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let gx = voxel_max_pool_backward(&pc, &Matrix::from_vec(px.rows(), px.cols(), proj.clone()).unwrap()).unwrap();
        let err = grad_check(
            |v| {
                let xv = Matrix::from_vec(12, 2, v.to_vec()).unwrap();
                let (_, p, _) = voxel_max_pool(&g, &xv, PoolSpec::new(4, 4).unwrap()).unwrap();
                p.data().iter().zip(&proj).map(|(a, b)| a * b).sum()
            },
            x.data(),
            gx.data(),
            1e-5,
        );
        assert!(err <= 1e-6, "{err}");
    }
}

