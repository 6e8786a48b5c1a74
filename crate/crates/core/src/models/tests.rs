use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::*;
use crate::events::{Event, EventStream};
use crate::gconv::permute_rows;
use crate::graphbuild::{build_graph, GraphParams};
use crate::ndiff::{grad_check, Real};

fn random_graph(seed: u64, n: usize, width: u16, height: u16) -> EventGraph {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let events = (0..n)
        .map(|_| Event::new(rng.gen_range(0..width), rng.gen_range(0..height), rng.gen_range(0..50_000), rng.gen()))
        .collect();
    let stream = EventStream::new(events, u32::from(width), u32::from(height)).unwrap();
    let params = GraphParams {
        with_edge_attrs: true,
        ..Default::default()
    };
    build_graph(&stream, &params).unwrap()
}

fn tiny_spec(conv: ConvKind, task: Task) -> ModelSpec {
    ModelSpec {
        task,
        conv,
        n_classes: 3,
        in_features: 1,
        knots: 3,
        activation: Activation::Elu,
        final_activation: false,
        stages: vec![
            Stage {
                channels: vec![2, 3, 2],
                residual: true,
                pool: Some(PoolSpec { sx: 8, sy: 6 }),
            },
            Stage {
                channels: vec![3],
                residual: false,
                pool: None,
            },
        ],
        grid: (2, 2),
    }
}

#[test]
fn classifier_parameter_counts() {
    let expected = [
        (ConvKind::Gcn, 23_552),
        (ConvKind::Sage, 46_728),
        (ConvKind::Edge, 46_728),
        (ConvKind::PointNet, 24_680),
        (ConvKind::Spline, 2_920_552),
    ];
    for (kind, extractor) in expected {
        let m = build_classifier(kind, 100, 1, 0).unwrap();
        let t = m.count_parameters();
        assert_eq!(t.feature_extraction, extractor, "{kind}");
        assert_eq!(t.fully_connected, 204_900);
        assert_eq!(t.total, m.parameter_count());
        assert_eq!(t.rows.iter().map(|r| r.1).sum::<usize>(), t.total);
        let closed: usize = std::iter::once(1)
            .chain(CLASSIFIER_CHANNELS)
            .collect::<Vec<_>>()
            .windows(2)
            .map(|w| kind.parameter_count(w[0], w[1], 5))
            .sum();
        assert_eq!(closed, extractor);
    }
    assert!(t_csv_ends_with_head());
}

fn t_csv_ends_with_head() -> bool {
    let csv = build_classifier(ConvKind::PointNet, 100, 1, 0).unwrap().count_parameters().to_csv();
    csv.trim_end().ends_with("fully_connected,204900")
}

#[test]
fn detector_size_and_outputs() {
    let m = build_detector(100, 0).unwrap();
    let t = m.count_parameters();
    assert_eq!(t.feature_extraction, 40_912);
    assert_eq!(t.fully_connected, 1536 * 104 + 104);
    let g = random_graph(1, 300, 64, 48);
    let out = m.forward_graph(&g).unwrap();
    assert_eq!(out.shape(), (1, 104));
    let (b, x) = GraphBatch::from_graph(&g).unwrap();
    let d = &m.detect(&b, &x).unwrap()[0];
    assert!(d.bbox.iter().all(|v| (0.0..=1.0).contains(v)));
    assert!(d.confidence > 0.0 && d.confidence <= 1.0);
}

#[test]
fn residual_width_mismatch_rejected() {
    let mut spec = tiny_spec(ConvKind::Gcn, Task::Classification);
    spec.stages[0].channels = vec![2, 3, 4];
    assert!(Model::build(&spec, 0).unwrap_err().is_config());
}

#[test]
fn empty_graph_gives_head_bias() {
    let m = build_classifier(ConvKind::PointNet, 10, 1, 3).unwrap();
    let empty = EventGraph::empty(64, 48);
    let out = m.forward_graph(&empty).unwrap();
    let Layer::Head { params } = &m.layers[m.layers.len() - 1] else { panic!() };
    assert_eq!(out, *params[1].value());
    let mut zero = m.clone();
    let last = zero.layers.len() - 1;
    zero.layers[last].params_mut().iter_mut().for_each(|p| p.value_mut().fill(0.0));
    let out = zero.forward_graph(&random_graph(2, 100, 64, 48)).unwrap();
    assert!(out.data().iter().all(|&v| v == 0.0));
}

#[test]
fn readout_width_is_fixed() {
    let m = build_classifier(ConvKind::Gcn, 5, 1, 0).unwrap();
    let Layer::Head { params } = m.layers.last().unwrap() else { panic!() };
    assert_eq!(params[0].value().rows(), 2048);
    for n in [0, 1, 50] {
        assert_eq!(m.forward_graph(&random_graph(n as u64, n, 64, 48)).unwrap().shape(), (1, 5));
    }
}

#[test]
fn feature_width_mismatch_is_shape_error() {
    let m = build_classifier(ConvKind::Gcn, 5, 2, 0).unwrap();
    let err = m.forward_graph(&random_graph(0, 10, 64, 48)).unwrap_err();
    assert!(matches!(err, Error::Shape { .. }));
}

#[test]
fn logits_invariant_under_vertex_permutation() {
    let g = random_graph(4, 200, 64, 48);
    let (b, x) = GraphBatch::from_graph(&g).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut perm: Vec<usize> = (0..b.n_vertices()).collect();
    rand::seq::SliceRandom::shuffle(perm.as_mut_slice(), &mut rng);
    let (bp, xp) = (b.relabel(&perm).unwrap(), permute_rows(&x, &perm));
    for kind in ConvKind::ALL {
        let m = build_classifier(kind, 7, 1, 5).unwrap();
        let a = m.forward(&b, &x).unwrap();
        let c = m.forward(&bp, &xp).unwrap();
        assert!(a.max_abs_diff(&c) <= 1e-6, "{kind}");
    }
}

#[test]
fn batch_equals_individual_forwards() {
    let graphs: Vec<EventGraph> = (0..3).map(|s| random_graph(10 + s, 80, 64, 48)).collect();
    let refs: Vec<&EventGraph> = graphs.iter().collect();
    let (b, x) = GraphBatch::from_graphs(&refs).unwrap();
    let m = build_detector(4, 2).unwrap();
    let joint = m.forward(&b, &x).unwrap();
    for (k, g) in graphs.iter().enumerate() {
        let single = m.forward_graph(g).unwrap();
        let diff = single.data().iter().zip(joint.row(k)).map(|(a, c)| (a - c).abs()).fold(0.0, Real::max);
        assert!(diff <= 1e-5);
    }
}

#[test]
fn model_gradients_match_finite_differences() {
    for (conv, task) in [
        (ConvKind::Gcn, Task::Classification),
        (ConvKind::Spline, Task::Classification),
        (ConvKind::PointNet, Task::Detection),
        (ConvKind::Edge, Task::Detection),
    ] {
        let m = Model::build(&tiny_spec(conv, task), 9).unwrap();
        let graphs = [random_graph(20, 40, 16, 12), random_graph(21, 30, 16, 12)];
        let (b, x) = GraphBatch::from_graphs(&[&graphs[0], &graphs[1]]).unwrap();
        let trace = m.forward_train(&b, &x).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let out = trace.output().clone();
        let proj = Matrix::from_vec(out.rows(), out.cols(), (0..out.len()).map(|_| rng.gen_range(-1.0..1.0)).collect()).unwrap();
        let grads = m.backward(&trace, &proj).unwrap();
        let loss = |model: &Model| -> Real {
            let o = model.forward(&b, &x).unwrap();
            o.data().iter().zip(proj.data()).map(|(a, c)| a * c).sum()
        };
        for (k, grad) in grads.iter().enumerate() {
            let err = grad_check(
                |v| {
                    let mut mm = m.clone();
                    mm.params_mut().nth(k).unwrap().value_mut().data_mut().copy_from_slice(v);
                    loss(&mm)
                },
                m.params().nth(k).unwrap().value().data(),
                grad.data(),
                1e-5,
            );
            assert!(err <= 1e-5, "{conv} param {k}: {err}");
        }
    }
}

#[test]
fn checkpoint_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("m.ckpt");
    let m = build_detector(5, 1).unwrap();
    m.save(&path, serde_json::json!({"epoch": 3}), serde_json::json!({"lr": 1e-3})).unwrap();
    let (back, header) = Model::load(&path).unwrap();
    assert_eq!(back.spec, m.spec);
    assert_eq!(header.metadata["extra"]["epoch"], 3);
    for (a, b) in m.params().zip(back.params()) {
        assert_eq!(a.name, b.name);
        for (x, y) in a.value().data().iter().zip(b.value().data()) {
            assert!((x - y).abs() <= 1e-7 * x.abs().max(1e-30));
        }
    }
}

#[test]
fn parameter_names_are_unique() {
    let m = build_detector(3, 0).unwrap();
    let mut names: Vec<&str> = m.params().map(|p| p.name.as_str()).collect();
    let n = names.len();
    names.sort();
    names.dedup();
    assert_eq!(names.len(), n);
    assert!(names.iter().all(|n| n.starts_with("layer")));
}
