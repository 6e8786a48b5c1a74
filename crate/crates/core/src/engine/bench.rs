use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::gconv::GraphBatch;
use crate::graphbuild::EventGraph;
use crate::models::Model;
use crate::ndiff::Real;
use crate::{Error, Result};

/// Millisecond time source, replaceable in tests.
pub trait Clock {
    fn now_ms(&mut self) -> Real;
}

/// Wall clock measured from construction.
pub struct SystemClock(Instant);

impl Default for SystemClock {
    fn default() -> Self {
        Self(Instant::now())
    }
}

impl Clock for SystemClock {
    fn now_ms(&mut self) -> Real {
        self.0.elapsed().as_secs_f64() * 1e3
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BenchReport {
    pub mean_ms: Real,
    pub graphs_per_second: Real,
    /// Timed forward calls (warm-up excluded).
    pub samples: usize,
    pub warmup: usize,
    pub hardware: String,
}

/// Short description of the host CPU.
pub fn hardware_note() -> String {
    let cpu = std::fs::read_to_string("/proc/cpuinfo")
        .ok()
        .and_then(|s| {
            s.lines()
                .find(|l| l.starts_with("model name"))
                .and_then(|l| l.split(':').nth(1))
                .map(|m| m.trim().to_string())
        })
        .unwrap_or_else(|| "unknown cpu".into());
    let threads = std::thread::available_parallelism().map_or(1, |n| n.get());
    format!("{cpu}; {threads} hardware threads; {}-{}; forward only, single graph per call", std::env::consts::OS, std::env::consts::ARCH)
}

/// Times single-graph forward passes. Graphs are packed before timing;
/// `warmup` untimed calls cycle through the graphs first, then each graph
/// is run `reps` times.
pub fn bench_throughput(
    model: &Model,
    graphs: &[EventGraph],
    warmup: usize,
    reps: usize,
    clock: &mut impl Clock,
) -> Result<BenchReport> {
    if graphs.is_empty() || reps == 0 {
        return Err(Error::config("benchmark needs at least one graph and one repetition"));
    }
    let packed = graphs.iter().map(GraphBatch::from_graph).collect::<Result<Vec<_>>>()?;
    for k in 0..warmup {
        let (g, x) = &packed[k % packed.len()];
        std::hint::black_box(model.forward(g, x)?);
    }
    let mut total = 0.0;
    let mut samples = 0;
    for (g, x) in &packed {
        for _ in 0..reps {
            let t0 = clock.now_ms();
            std::hint::black_box(model.forward(g, x)?);
            total += clock.now_ms() - t0;
            samples += 1;
        }
    }
    let mean_ms = total / samples as Real;
    Ok(BenchReport {
        mean_ms,
        graphs_per_second: if mean_ms > 0.0 { 1000.0 / mean_ms } else { Real::INFINITY },
        samples,
        warmup,
        hardware: hardware_note(),
    })
}
