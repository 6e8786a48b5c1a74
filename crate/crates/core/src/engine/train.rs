use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::metrics::{accuracy, map50, ScoredBox};
use crate::events::{BoundingBox, EventStream};
use crate::gconv::GraphBatch;
use crate::graphbuild::{build_graph, EventGraph, GraphParams};
use crate::models::{argmax, Detection, Model, Task, BBOX_OUTPUTS};
use crate::ndiff::{smooth_l1, softmax_cross_entropy, AdamConfig, AdamState, Matrix, Real};
use crate::{Error, Result};

/// A built graph with its label and, for detection, its box as sensor
/// fractions `(cx, cy, w, h)`.
#[derive(Clone, Debug, PartialEq)]
pub struct Sample {
    pub graph: EventGraph,
    pub label: usize,
    pub bbox: Option<[Real; 4]>,
}

impl Sample {
    /// Builds the graph for a labelled stream. The box, when present, is
    /// stored as sensor fractions.
    pub fn from_stream(stream: &EventStream, params: &GraphParams) -> Result<Self> {
        let label = stream
            .label
            .ok_or_else(|| Error::config("training samples need a class label"))?;
        Ok(Self {
            graph: build_graph(stream, params)?,
            label: label as usize,
            bbox: stream.bbox.map(|b| b.to_fractions(stream.width, stream.height)),
        })
    }

    fn truth_box(&self) -> Result<BoundingBox> {
        let f = self.bbox.ok_or_else(|| Error::config("detection samples need a bounding box"))?;
        Ok(BoundingBox::from_fractions(f, self.graph.width, self.graph.height))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub task: Task,
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: Real,
    pub weight_decay: Real,
    pub seed: u64,
    /// Weight of the box loss relative to cross-entropy (detection only).
    pub bbox_weight: Real,
    /// Stop once the test metric reaches this value.
    pub target_metric: Option<Real>,
    /// Run each graph of a batch on its own worker. Floating-point sums are
    /// then merged in a different order, so runs are not bit-reproducible.
    pub parallel_batches: bool,
    /// Where to keep the best-so-far checkpoint.
    pub checkpoint: Option<PathBuf>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self::classification()
    }
}

impl TrainConfig {
    pub fn classification() -> Self {
        Self {
            task: Task::Classification,
            epochs: 150,
            batch_size: 8,
            learning_rate: 1e-3,
            weight_decay: 5e-3,
            seed: 0,
            bbox_weight: 1.0,
            target_metric: None,
            parallel_batches: false,
            checkpoint: None,
        }
    }

    pub fn detection() -> Self {
        Self {
            task: Task::Detection,
            epochs: 1000,
            batch_size: 16,
            weight_decay: 1e-4,
            ..Self::classification()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 || self.batch_size == 0 {
            return Err(Error::config("epochs and batch_size must be at least 1"));
        }
        if !(self.learning_rate >= 0.0) || !(self.weight_decay >= 0.0) || !(self.bbox_weight >= 0.0) {
            return Err(Error::config("learning_rate, weight_decay and bbox_weight must be non-negative"));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub loss: Real,
    pub metric: Real,
    pub seconds: Real,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct History {
    pub records: Vec<EpochRecord>,
}

impl History {
    /// `epoch,loss,metric,seconds`
    pub fn to_csv(&self) -> String {
        let mut out = String::from("epoch,loss,metric,seconds\n");
        for r in &self.records {
            let _ = writeln!(out, "{},{},{},{}", r.epoch, r.loss, r.metric, r.seconds);
        }
        out
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_csv()).map_err(Error::at_path(path))
    }

    /// Same records without wall-clock times, for reproducibility checks.
    pub fn without_timing(&self) -> Vec<(usize, Real, Real)> {
        self.records.iter().map(|r| (r.epoch, r.loss, r.metric)).collect()
    }
}

#[derive(Clone, Debug)]
pub struct TrainOutcome {
    pub history: History,
    pub best_epoch: usize,
    pub best_metric: Real,
    /// Parameters from the best epoch.
    pub best: Model,
}

/// Loss and output gradient for a batch's model outputs.
fn loss_and_grad(model: &Model, out: &Matrix, batch: &[&Sample], bbox_weight: Real) -> Result<(Real, Matrix)> {
    let labels: Vec<usize> = batch.iter().map(|s| s.label).collect();
    match model.spec.task {
        Task::Classification => softmax_cross_entropy(out, &labels),
        Task::Detection => {
            let k = model.spec.n_classes;
            let logits = out.slice_cols(0, k);
            let boxes = out.slice_cols(k, k + BBOX_OUTPUTS);
            let mut target = Matrix::zeros(batch.len(), BBOX_OUTPUTS);
            for (r, s) in batch.iter().enumerate() {
                let b = s.bbox.ok_or_else(|| Error::config("detection samples need a bounding box"))?;
                target.row_mut(r).copy_from_slice(&b);
            }
            let (ce, g_logits) = softmax_cross_entropy(&logits, &labels)?;
            let (l1, g_boxes) = smooth_l1(&boxes, &target)?;
            let mut grad = Matrix::zeros(out.rows(), out.cols());
            for r in 0..out.rows() {
                grad.row_mut(r)[..k].copy_from_slice(g_logits.row(r));
                for (g, v) in grad.row_mut(r)[k..].iter_mut().zip(g_boxes.row(r)) {
                    *g = bbox_weight * v;
                }
            }
            Ok((ce + bbox_weight * l1, grad))
        }
    }
}

fn batch_step(model: &Model, batch: &[&Sample], cfg: &TrainConfig) -> Result<(Real, Vec<Matrix>)> {
    if !cfg.parallel_batches || batch.len() == 1 {
        let graphs: Vec<&EventGraph> = batch.iter().map(|s| &s.graph).collect();
        let (g, x) = GraphBatch::from_graphs(&graphs)?;
        let trace = model.forward_train(&g, &x)?;
        let (loss, grad) = loss_and_grad(model, trace.output(), batch, cfg.bbox_weight)?;
        return Ok((loss, model.backward(&trace, &grad)?));
    }
    let parts: Vec<(Real, Vec<Matrix>)> = batch
        .par_iter()
        .map(|s| {
            let (g, x) = GraphBatch::from_graph(&s.graph)?;
            let trace = model.forward_train(&g, &x)?;
            let (loss, grad) = loss_and_grad(model, trace.output(), std::slice::from_ref(s), cfg.bbox_weight)?;
            Ok((loss, model.backward(&trace, &grad)?))
        })
        .collect::<Result<_>>()?;
    let scale = 1.0 / batch.len() as Real;
    let mut grads = model.zero_grads();
    let mut loss = 0.0;
    for (l, part) in parts {
        loss += l * scale;
        for (g, p) in grads.iter_mut().zip(part) {
            for (a, b) in g.data_mut().iter_mut().zip(p.data()) {
                *a += b * scale;
            }
        }
    }
    Ok((loss, grads))
}

/// Test metric for the model's task: accuracy or mAP@0.5.
pub fn evaluate(model: &Model, samples: &[Sample]) -> Result<Real> {
    match model.spec.task {
        Task::Classification => eval_accuracy(model, samples),
        Task::Detection => eval_map50(model, samples),
    }
}

const EVAL_CHUNK: usize = 16;

fn outputs(model: &Model, samples: &[Sample]) -> Result<Vec<Matrix>> {
    samples
        .par_chunks(EVAL_CHUNK)
        .map(|chunk| {
            let graphs: Vec<&EventGraph> = chunk.iter().map(|s| &s.graph).collect();
            let (g, x) = GraphBatch::from_graphs(&graphs)?;
            model.forward(&g, &x)
        })
        .collect()
}

/// Fraction of samples whose arg-max logit equals the label.
pub fn eval_accuracy(model: &Model, samples: &[Sample]) -> Result<Real> {
    if samples.is_empty() {
        return Err(Error::config("cannot evaluate on an empty set"));
    }
    let k = model.spec.n_classes;
    let mut predicted = Vec::with_capacity(samples.len());
    for out in outputs(model, samples)? {
        for r in 0..out.rows() {
            predicted.push(argmax(&out.row(r)[..k]));
        }
    }
    let truth: Vec<usize> = samples.iter().map(|s| s.label).collect();
    accuracy(&predicted, &truth)
}

/// Detector outputs for every sample, in order.
pub fn predict_detections(model: &Model, samples: &[Sample]) -> Result<Vec<Detection>> {
    if model.spec.task != Task::Detection {
        return Err(Error::config("detections need a detection model"));
    }
    let k = model.spec.n_classes;
    Ok(outputs(model, samples)?
        .iter()
        .flat_map(|out| (0..out.rows()).map(move |r| Detection::from_row(out.row(r), k)))
        .collect())
}

/// mAP@0.5 of the detector over `samples`.
pub fn eval_map50(model: &Model, samples: &[Sample]) -> Result<Real> {
    if samples.is_empty() {
        return Err(Error::config("cannot evaluate on an empty set"));
    }
    let dets = predict_detections(model, samples)?;
    let preds: Vec<ScoredBox> = dets
        .iter()
        .zip(samples)
        .map(|(d, s)| ScoredBox {
            class_id: d.class_id,
            confidence: d.confidence,
            bbox: d.bbox_pixels(s.graph.width, s.graph.height),
        })
        .collect();
    let truths = samples.iter().map(|s| Ok((s.label, s.truth_box()?))).collect::<Result<Vec<_>>>()?;
    map50(&preds, &truths)
}

/// Mini-batch Adam training. Each epoch shuffles the training set with a
/// ChaCha8 stream seeded by `cfg.seed`, applies one update per batch, then
/// scores the test set; the best-scoring parameters are kept (and written to
/// `cfg.checkpoint` when set).
pub fn train(model: &mut Model, train_set: &[Sample], test_set: &[Sample], cfg: &TrainConfig) -> Result<TrainOutcome> {
    cfg.validate()?;
    if train_set.is_empty() {
        return Err(Error::config("training set is empty"));
    }
    if test_set.is_empty() {
        return Err(Error::config("test set is empty"));
    }
    if cfg.task != model.spec.task {
        return Err(Error::config(format!("{:?} training needs a {:?} model", cfg.task, cfg.task)));
    }
    let adam = AdamConfig {
        learning_rate: cfg.learning_rate,
        weight_decay: cfg.weight_decay,
        ..AdamConfig::default()
    };
    let mut state = AdamState::new(adam, model.params());
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut order: Vec<usize> = (0..train_set.len()).collect();
    let mut history = History::default();
    let mut best: Option<(usize, Real, Model)> = None;
    for epoch in 1..=cfg.epochs {
        let started = Instant::now();
        order.shuffle(&mut rng);
        let mut loss_sum = 0.0;
        for (b, chunk) in order.chunks(cfg.batch_size).enumerate() {
            let batch: Vec<&Sample> = chunk.iter().map(|&i| &train_set[i]).collect();
            let (loss, grads) = batch_step(model, &batch, cfg)?;
            if !loss.is_finite() {
                return Err(Error::Divergence(format!("loss became {loss} at epoch {epoch}, batch {b}")));
            }
            loss_sum += loss * batch.len() as Real;
            for (p, g) in model.params_mut().zip(grads) {
                p.tensor.grad = g;
            }
            state.step(model.params_mut());
        }
        let metric = evaluate(model, test_set)?;
        history.records.push(EpochRecord {
            epoch,
            loss: loss_sum / train_set.len() as Real,
            metric,
            seconds: started.elapsed().as_secs_f64(),
        });
        if best.as_ref().is_none_or(|b| metric > b.1) {
            if let Some(path) = &cfg.checkpoint {
                let extra = serde_json::json!({ "epoch": epoch, "metric": metric });
                model.save(path, extra, serde_json::to_value(cfg)?)?;
            }
            best = Some((epoch, metric, model.clone()));
        }
        if cfg.target_metric.is_some_and(|t| metric >= t) {
            break;
        }
    }
    let (best_epoch, best_metric, best) = best.expect("at least one epoch ran");
    Ok(TrainOutcome {
        history,
        best_epoch,
        best_metric,
        best,
    })
}
