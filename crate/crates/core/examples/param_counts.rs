//! Parameter tables of the classifier for every convolution and of the
//! detector.
//!
//! ```text
//! cargo run --example param_counts -- [classes]
//! ```

use evgraph::gconv::ConvKind;
use evgraph::models::{build_classifier, build_detector};

fn main() -> evgraph::Result<()> {
    let classes: usize = std::env::args().nth(1).map_or(100, |s| s.parse().expect("classes"));
    println!("{:<10} {:>18} {:>16} {:>10}", "model", "feature_extraction", "fully_connected", "total");
    for kind in ConvKind::ALL {
        let t = build_classifier(kind, classes, 1, 0)?.count_parameters();
        println!("{:<10} {:>18} {:>16} {:>10}", kind.as_str(), t.feature_extraction, t.fully_connected, t.total);
    }
    let det = build_detector(classes, 0)?;
    let t = det.count_parameters();
    println!("{:<10} {:>18} {:>16} {:>10}", "detector", t.feature_extraction, t.fully_connected, t.total);
    println!();
    println!("detector layers:");
    print!("{}", t.to_csv());
    Ok(())
}
