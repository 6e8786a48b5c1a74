//! Forward-pass throughput of the classifier for every convolution on
//! synthetic graphs.
//!
//! ```text
//! cargo run --release --example throughput -- [graphs] [max_events]
//! ```

use evgraph::engine::{bench_throughput, SystemClock};
use evgraph::events::SynthConfig;
use evgraph::gconv::ConvKind;
use evgraph::graphbuild::{build_graph, GraphParams};
use evgraph::models::build_classifier;

fn main() -> evgraph::Result<()> {
    let mut args = std::env::args().skip(1);
    let count: u32 = args.next().map_or(20, |s| s.parse().expect("graphs"));
    let max_events: usize = args.next().map_or(25_000, |s| s.parse().expect("max_events"));

    let streams = SynthConfig {
        classes: 2,
        samples_per_class: count.div_ceil(2),
        width: 240,
        height: 180,
        object_scale: 0.5,
        ..SynthConfig::default()
    }
    .generate()?;
    let params = GraphParams {
        max_events,
        with_edge_attrs: true,
        ..GraphParams::default()
    };
    let graphs = streams.iter().map(|s| build_graph(s, &params)).collect::<evgraph::Result<Vec<_>>>()?;
    let vertices = graphs.iter().map(|g| g.n_vertices()).sum::<usize>() as f64 / graphs.len() as f64;
    let edges = graphs.iter().map(|g| g.n_edges()).sum::<usize>() as f64 / graphs.len() as f64;
    println!("{} graphs, {vertices:.0} vertices and {edges:.0} edges on average", graphs.len());

    for kind in ConvKind::ALL {
        let model = build_classifier(kind, 100, 1, 0)?;
        let r = bench_throughput(&model, &graphs, 3, 1, &mut SystemClock::default())?;
        println!("{:<9} {:>9.2} ms  {:>8.1} graphs/s", kind.as_str(), r.mean_ms, r.graphs_per_second);
    }
    println!("{}", evgraph::engine::hardware_note());
    Ok(())
}
