//! Trains a graph classifier on a synthetic 5-class event dataset.
//!
//! ```text
//! cargo run --release --example train_classifier -- [conv] [epochs]
//! ```

use evgraph::engine::{stratified_split, train, Sample, TrainConfig};
use evgraph::events::SynthConfig;
use evgraph::gconv::ConvKind;
use evgraph::graphbuild::GraphParams;
use evgraph::models::build_classifier;

fn main() -> evgraph::Result<()> {
    let mut args = std::env::args().skip(1);
    let conv: ConvKind = args.next().as_deref().unwrap_or("pointnet").parse()?;
    let epochs: usize = args.next().map_or(30, |s| s.parse().expect("epochs"));

    let synth = SynthConfig {
        classes: 5,
        samples_per_class: 50,
        seed: 1,
        ..SynthConfig::default()
    };
    let params = GraphParams {
        max_events: 2000,
        with_edge_attrs: conv == ConvKind::Spline,
        ..GraphParams::default()
    };
    let streams = synth.generate()?;
    let samples = streams.iter().map(|s| Sample::from_stream(s, &params)).collect::<evgraph::Result<Vec<_>>>()?;
    let mean_events = samples.iter().map(|s| s.graph.n_vertices()).sum::<usize>() as f64 / samples.len() as f64;
    let labels: Vec<u32> = samples.iter().map(|s| s.label as u32).collect();
    let (train_idx, test_idx) = stratified_split(&labels, 0.8, 0)?;
    let pick = |idx: &[usize]| idx.iter().map(|&i| samples[i].clone()).collect::<Vec<_>>();
    let (train_set, test_set) = (pick(&train_idx), pick(&test_idx));
    println!("{} train / {} test graphs, {mean_events:.0} vertices on average", train_set.len(), test_set.len());

    let mut model = build_classifier(conv, 5, 1, 0)?;
    let cfg = TrainConfig {
        epochs,
        target_metric: Some(1.0),
        ..TrainConfig::classification()
    };
    let outcome = train(&mut model, &train_set, &test_set, &cfg)?;
    for r in &outcome.history.records {
        println!("epoch {:3}  loss {:.4}  accuracy {:.3}  {:.1}s", r.epoch, r.loss, r.metric, r.seconds);
    }
    println!("best accuracy {:.3} at epoch {}", outcome.best_metric, outcome.best_epoch);
    Ok(())
}
