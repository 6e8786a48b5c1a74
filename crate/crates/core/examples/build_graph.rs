//! Builds the spatio-temporal graph of one synthetic recording, prints its
//! degree statistics and memory footprint, and round-trips it through the
//! binary graph cache.
//!
//! ```text
//! cargo run --release --example build_graph -- [radius] [max_neighbors]
//! ```

use evgraph::events::SynthConfig;
use evgraph::graphbuild::{build_graph_with_report, load_graph, save_graph, GraphParams, MemoryProfile, TimeMode};

fn main() -> evgraph::Result<()> {
    let mut args = std::env::args().skip(1);
    let radius: f64 = args.next().map_or(5.0, |s| s.parse().expect("radius"));
    let max_neighbors: usize = args.next().map_or(32, |s| s.parse().expect("max_neighbors"));

    let stream = SynthConfig {
        samples_per_class: 1,
        seed: 3,
        ..SynthConfig::default()
    }
    .generate()?
    .remove(0);

    for time_mode in [TimeMode::Norm100, TimeMode::RawMicroseconds] {
        let params = GraphParams {
            radius,
            max_neighbors,
            time_mode,
            with_edge_attrs: true,
            ..GraphParams::default()
        };
        let (g, report) = build_graph_with_report(&stream, &params)?;
        let mut in_degree = vec![0usize; g.n_vertices()];
        for e in &g.edges {
            in_degree[e[1] as usize] += 1;
        }
        let capped = in_degree.iter().filter(|&&d| d == max_neighbors).count();
        let isolated = in_degree.iter().filter(|&&d| d == 0).count();
        println!(
            "{time_mode}: {} of {} events kept, {} edges, mean in-degree {:.1}, {capped} vertices at the cap, {isolated} isolated",
            report.selected_events,
            report.input_events,
            g.n_edges(),
            g.n_edges() as f64 / g.n_vertices().max(1) as f64,
        );
        for profile in [MemoryProfile::attr64(), MemoryProfile::lean32()] {
            let m = g.memory(&profile)?;
            println!("  {profile}: {} bytes ({:.4} MB)", m.total_bytes, m.total_mb);
        }
        if time_mode == TimeMode::Norm100 {
            let path = std::env::temp_dir().join("evgraph_example.evg");
            save_graph(&g, &path)?;
            assert_eq!(load_graph(&path)?, g);
            println!("  cache round trip through {} ok", path.display());
        }
    }
    Ok(())
}
