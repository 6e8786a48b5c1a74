//! Byte accounting of graphs against dense frames, for the published
//! average graph size and for any `vertices edges` given on the command line.
//!
//! ```text
//! cargo run --example memory_profile -- [vertices edges]
//! ```

use evgraph::graphbuild::{account_memory, dense_frame_mb, MemoryProfile};

fn main() -> evgraph::Result<()> {
    let args: Vec<u64> = std::env::args().skip(1).map(|s| s.parse().expect("integer")).collect();
    let cases = match args.as_slice() {
        [v, e] => vec![(*v, *e)],
        _ => vec![(24_457, 381_563), (24_457, 756_744)],
    };
    let profiles = [MemoryProfile::attr64(), MemoryProfile::attr32(), MemoryProfile::lean32()];
    println!("{:>8} {:>8} {:>8} {:>12} {:>10}", "vertices", "edges", "profile", "bytes", "MB");
    for (v, e) in cases {
        let mut totals = Vec::new();
        for p in &profiles {
            let r = account_memory(v, e, p)?;
            println!("{v:>8} {e:>8} {:>8} {:>12} {:>10.2}", p.to_string(), r.total_bytes, r.total_mb);
            totals.push(r.total_bytes);
        }
        println!("attr64 / lean32 = {:.2}", totals[0] as f64 / totals[2] as f64);
    }
    println!(
        "dense 240x180 frame: {} MB grey, {} MB rgb",
        dense_frame_mb(240, 180, 1),
        dense_frame_mb(240, 180, 3)
    );
    Ok(())
}
