//! Trains the single-object detector on synthetic moving shapes and reports
//! mAP@0.5.
//!
//! ```text
//! cargo run --release --example train_detector -- [epochs]
//! ```

use evgraph::engine::{iou, predict_detections, stratified_split, train, Sample, TrainConfig};
use evgraph::events::{BoundingBox, SynthConfig};
use evgraph::graphbuild::GraphParams;
use evgraph::models::build_detector;

fn main() -> evgraph::Result<()> {
    let epochs: usize = std::env::args().nth(1).map_or(40, |s| s.parse().expect("epochs"));
    let synth = SynthConfig {
        classes: 5,
        samples_per_class: 50,
        seed: 2,
        object_scale: 0.4,
        ..SynthConfig::default()
    };
    let params = GraphParams {
        max_events: 2000,
        ..GraphParams::default()
    };
    let samples = synth
        .generate()?
        .iter()
        .map(|s| Sample::from_stream(s, &params))
        .collect::<evgraph::Result<Vec<_>>>()?;
    let labels: Vec<u32> = samples.iter().map(|s| s.label as u32).collect();
    let (train_idx, test_idx) = stratified_split(&labels, 0.8, 0)?;
    let pick = |idx: &[usize]| idx.iter().map(|&i| samples[i].clone()).collect::<Vec<_>>();
    let (train_set, test_set) = (pick(&train_idx), pick(&test_idx));

    let mut model = build_detector(5, 0)?;
    let cfg = TrainConfig {
        epochs,
        ..TrainConfig::detection()
    };
    let outcome = train(&mut model, &train_set, &test_set, &cfg)?;
    for r in &outcome.history.records {
        println!("epoch {:3}  loss {:.4}  mAP@0.5 {:.3}  {:.1}s", r.epoch, r.loss, r.metric, r.seconds);
    }
    println!("best mAP@0.5 {:.3} at epoch {}", outcome.best_metric, outcome.best_epoch);

    for (name, set) in [("train", &train_set), ("test", &test_set)] {
        let dets = predict_detections(&outcome.best, set)?;
        let mut ious: Vec<f64> = dets
            .iter()
            .zip(set.iter())
            .map(|(d, s)| {
                let (w, h) = (s.graph.width, s.graph.height);
                let truth = BoundingBox::from_fractions(s.bbox.expect("synthetic samples carry boxes"), w, h);
                iou(&d.bbox_pixels(w, h), &truth)
            })
            .collect();
        ious.sort_by(f64::total_cmp);
        let hits = ious.iter().filter(|&&v| v >= 0.5).count();
        let classes = dets.iter().zip(set.iter()).filter(|(d, s)| d.class_id == s.label).count();
        println!(
            "{name}: median IoU {:.2}, IoU >= 0.5 on {hits}/{n}, class correct on {classes}/{n}",
            ious[ious.len() / 2],
            n = ious.len()
        );
    }
    let first = &test_set[0];
    let det = &predict_detections(&outcome.best, std::slice::from_ref(first))?[0];
    let truth = first.bbox.expect("synthetic samples carry boxes");
    println!(
        "sample 0: class {} (truth {}), confidence {:.2}, box {:.2?} (truth {:.2?})",
        det.class_id, first.label, det.confidence, det.bbox, truth
    );
    Ok(())
}
