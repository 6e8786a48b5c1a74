//! Finite-difference check of every graph convolution on a random graph.
//!
//! ```text
//! cargo run --release --example grad_check -- [vertices] [seed]
//! ```

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use evgraph::gconv::{cartesian_attrs, ConvKind, ConvLayer, GraphBatch};
use evgraph::ndiff::{grad_check, Matrix, Real};

fn main() -> evgraph::Result<()> {
    let mut args = std::env::args().skip(1);
    let n: usize = args.next().map_or(12, |s| s.parse().expect("vertices"));
    let seed: u64 = args.next().map_or(0, |s| s.parse().expect("seed"));
    let mut rng = ChaCha8Rng::seed_from_u64(seed);

    let positions: Vec<[Real; 3]> = (0..n)
        .map(|_| [rng.gen_range(0.0..10.0), rng.gen_range(0.0..10.0), rng.gen_range(0.0..10.0)])
        .collect();
    let mut edges = Vec::new();
    for i in 0..n as u32 {
        for j in 0..n as u32 {
            if i != j && rng.gen_bool(0.3) {
                edges.push([j, i]);
            }
        }
    }
    let mut g = GraphBatch::new(positions, edges, None, vec![0; n], vec![(10, 10)])?;
    g.edge_attrs = Some(cartesian_attrs(&g.positions, &g.src, &g.dst, &g.graph_of, 1));
    let x = Matrix::from_vec(n, 3, (0..n * 3).map(|_| rng.gen_range(-1.0..1.0)).collect())?;
    println!("{n} vertices, {} edges", g.n_edges());

    for kind in ConvKind::ALL {
        let layer = ConvLayer::with_knots(kind, 3, 4, 3, &mut rng)?;
        let (out, cache) = layer.forward(&g, &x)?;
        let proj = Matrix::from_vec(out.rows(), out.cols(), (0..out.len()).map(|_| rng.gen_range(-1.0..1.0)).collect())?;
        let loss = |o: &Matrix| o.data().iter().zip(proj.data()).map(|(a, b)| a * b).sum::<Real>();
        let mut grads = layer.zero_grads();
        let gx = layer.backward(&g, &x, &cache, &proj, &mut grads)?;
        let h = if kind == ConvKind::PointNet { 1e-6 } else { 1e-3 };
        let input_err = grad_check(
            |v| loss(&layer.forward(&g, &Matrix::from_vec(n, 3, v.to_vec()).unwrap()).unwrap().0),
            x.data(),
            gx.data(),
            h,
        );
        let mut param_err: Real = 0.0;
        for k in 0..layer.params.len() {
            param_err = param_err.max(grad_check(
                |v| {
                    let mut l = layer.clone();
                    l.params[k].value_mut().data_mut().copy_from_slice(v);
                    loss(&l.forward(&g, &x).unwrap().0)
                },
                layer.params[k].value().data(),
                grads[k].data(),
                h,
            ));
        }
        println!("{:<9} input {input_err:.2e}  parameters {param_err:.2e}", kind.as_str());
    }
    Ok(())
}
