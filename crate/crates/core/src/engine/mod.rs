//! Dataset splitting, training, evaluation metrics and throughput
//! benchmarking.

mod bench;
mod metrics;
mod split;
mod train;

pub use bench::{bench_throughput, hardware_note, BenchReport, Clock, SystemClock};
pub use metrics::{accuracy, average_precision, iou, map50, ScoredBox};
pub use split::stratified_split;
pub use train::{
    eval_accuracy, eval_map50, evaluate, predict_detections, train, EpochRecord, History, Sample, TrainConfig,
    TrainOutcome,
};

#[cfg(test)]
mod tests;
