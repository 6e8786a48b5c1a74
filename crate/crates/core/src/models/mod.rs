//! Classification and detection networks assembled from [`crate::gconv`]
//! layers, with parameter accounting and checkpointing.
//!
//! A [`Model`] is a flat list of [`Layer`]s run in order. Pools replace the
//! working graph; residual layers save and re-add a feature matrix; the
//! readout turns each member graph of a batch into one fixed-width row.

mod spec;

use std::fs::File;
use std::io::{BufReader, BufWriter};
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::events::BoundingBox;
use crate::gconv::{
    grid_readout, grid_readout_backward, voxel_max_pool, voxel_max_pool_backward, ConvCache, ConvKind, ConvLayer,
    GraphBatch, PoolCache, PoolSpec, ReadoutCache,
};
use crate::graphbuild::EventGraph;
use crate::ndiff::checkpoint::{read_checkpoint, write_checkpoint, CheckpointHeader};
use crate::ndiff::{activation, activation_backward, affine, affine_backward, sigmoid, Activation, Matrix, Parameter, Real};
use crate::{Error, Result};

pub use spec::{ModelSpec, Stage, Task, BBOX_OUTPUTS, CLASSIFIER_CHANNELS};

#[derive(Clone, Debug, PartialEq)]
pub enum Layer {
    Conv(ConvLayer),
    Activation(Activation),
    Pool(PoolSpec),
    /// Pushes the current features for a later [`Layer::AddResidual`].
    SaveResidual,
    AddResidual,
    Readout { grid: (usize, usize) },
    /// Affine map `weight`, `bias` from the readout to the outputs.
    Head { params: Vec<Parameter> },
    /// Sigmoid over the last `n` output columns.
    SigmoidTail(usize),
}

impl Layer {
    pub fn params(&self) -> &[Parameter] {
        match self {
            Layer::Conv(c) => &c.params,
            Layer::Head { params } => params,
            _ => &[],
        }
    }

    pub fn params_mut(&mut self) -> &mut [Parameter] {
        match self {
            Layer::Conv(c) => &mut c.params,
            Layer::Head { params } => params,
            _ => &mut [],
        }
    }

    pub fn kind_name(&self) -> &'static str {
        match self {
            Layer::Conv(c) => c.kind.as_str(),
            Layer::Activation(_) => "activation",
            Layer::Pool(_) => "pool",
            Layer::SaveResidual => "save_residual",
            Layer::AddResidual => "add_residual",
            Layer::Readout { .. } => "readout",
            Layer::Head { .. } => "fully_connected",
            Layer::SigmoidTail(_) => "sigmoid",
        }
    }
}

/// Per-layer counts plus the extractor / head split.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize)]
pub struct ParamTable {
    pub rows: Vec<(String, usize)>,
    pub feature_extraction: usize,
    pub fully_connected: usize,
    pub total: usize,
}

impl ParamTable {
    /// `layer,count` lines, then total, feature_extraction and
    /// fully_connected.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("layer,count\n");
        for (name, n) in &self.rows {
            out.push_str(&format!("{name},{n}\n"));
        }
        out.push_str(&format!("total,{}\n", self.total));
        out.push_str(&format!("feature_extraction,{}\n", self.feature_extraction));
        out.push_str(&format!("fully_connected,{}\n", self.fully_connected));
        out
    }
}

/// One detector output: class scores and a box in sensor fractions.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Detection {
    pub logits: Vec<Real>,
    pub class_id: usize,
    /// Largest softmax probability.
    pub confidence: Real,
    /// `(cx, cy, w, h)` as fractions of the sensor size, each in `[0, 1]`.
    pub bbox: [Real; 4],
}

impl Detection {
    pub fn from_row(row: &[Real], n_classes: usize) -> Self {
        let logits = row[..n_classes].to_vec();
        let class_id = argmax(&logits);
        let max = logits[class_id];
        let denom: Real = logits.iter().map(|v| (v - max).exp()).sum();
        let bbox = [row[n_classes], row[n_classes + 1], row[n_classes + 2], row[n_classes + 3]];
        Self {
            logits,
            class_id,
            confidence: 1.0 / denom,
            bbox,
        }
    }

    pub fn bbox_pixels(&self, width: u32, height: u32) -> BoundingBox {
        BoundingBox::from_fractions(self.bbox, width, height)
    }
}

/// Index of the largest value; ties go to the lower index.
pub fn argmax(v: &[Real]) -> usize {
    let mut best = 0;
    for (i, x) in v.iter().enumerate() {
        if *x > v[best] {
            best = i;
        }
    }
    best
}

enum StepCache {
    None,
    Conv(ConvCache),
    Pool(PoolCache),
    Readout(ReadoutCache),
}

struct Step {
    input: Matrix,
    level: usize,
    cache: StepCache,
}

/// Everything [`Model::backward`] needs from a forward pass.
pub struct Trace<'a> {
    input: &'a GraphBatch,
    pooled: Vec<GraphBatch>,
    steps: Vec<Step>,
    output: Matrix,
}

impl Trace<'_> {
    pub fn output(&self) -> &Matrix {
        &self.output
    }

    fn graph(&self, level: usize) -> &GraphBatch {
        if level == 0 {
            self.input
        } else {
            &self.pooled[level - 1]
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Model {
    pub spec: ModelSpec,
    pub layers: Vec<Layer>,
}

impl Model {
    /// Builds the layer list described by `spec` with parameters drawn from
    /// a ChaCha8 stream seeded by `seed`.
    pub fn build(spec: &ModelSpec, seed: u64) -> Result<Self> {
        spec.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut layers = Vec::new();
        let mut c_in = spec.in_features;
        let n_convs: usize = spec.stages.iter().map(|s| s.channels.len()).sum();
        let mut conv_index = 0;
        for stage in &spec.stages {
            let last_in_stage = stage.channels.len() - 1;
            for (k, &c_out) in stage.channels.iter().enumerate() {
                layers.push(Layer::Conv(ConvLayer::with_knots(spec.conv, c_in, c_out, spec.knots, &mut rng)?));
                conv_index += 1;
                c_in = c_out;
                if stage.residual && k == last_in_stage {
                    layers.push(Layer::AddResidual);
                }
                if conv_index < n_convs || spec.final_activation {
                    layers.push(Layer::Activation(spec.activation));
                }
                if stage.residual && k == 0 {
                    layers.push(Layer::SaveResidual);
                }
            }
            if let Some(pool) = stage.pool {
                layers.push(Layer::Pool(pool));
            }
        }
        layers.push(Layer::Readout { grid: spec.grid });
        let fan_in = spec.grid.0 * spec.grid.1 * c_in;
        let bound = 1.0 / (fan_in as Real).sqrt();
        let mut init = |rows: usize, cols: usize| {
            let data = (0..rows * cols).map(|_| rand::Rng::gen_range(&mut rng, -bound..bound)).collect();
            Matrix::from_vec(rows, cols, data).expect("sized")
        };
        let n_out = spec.n_outputs();
        layers.push(Layer::Head {
            params: vec![Parameter::new("weight", init(fan_in, n_out)), Parameter::new("bias", init(1, n_out))],
        });
        if spec.task == Task::Detection {
            layers.push(Layer::SigmoidTail(BBOX_OUTPUTS));
        }
        for (i, layer) in layers.iter_mut().enumerate() {
            for p in layer.params_mut() {
                p.name = format!("layer{i}.{}", p.name);
            }
        }
        Ok(Self {
            spec: spec.clone(),
            layers,
        })
    }

    pub fn params(&self) -> impl Iterator<Item = &Parameter> + Clone {
        self.layers.iter().flat_map(|l| l.params().iter())
    }

    pub fn params_mut(&mut self) -> impl Iterator<Item = &mut Parameter> {
        self.layers.iter_mut().flat_map(|l| l.params_mut().iter_mut())
    }

    pub fn parameter_count(&self) -> usize {
        self.params().map(Parameter::len).sum()
    }

    /// Zero matrices in registry order, shaped like the parameters.
    pub fn zero_grads(&self) -> Vec<Matrix> {
        self.params().map(|p| Matrix::zeros(p.value().rows(), p.value().cols())).collect()
    }

    pub fn count_parameters(&self) -> ParamTable {
        let mut table = ParamTable::default();
        for (i, layer) in self.layers.iter().enumerate() {
            let n: usize = layer.params().iter().map(Parameter::len).sum();
            if n == 0 {
                continue;
            }
            table.rows.push((format!("layer{i}.{}", layer.kind_name()), n));
            match layer {
                Layer::Head { .. } => table.fully_connected += n,
                _ => table.feature_extraction += n,
            }
            table.total += n;
        }
        table
    }

    /// Output rows (one per member graph of the batch).
    pub fn forward(&self, g: &GraphBatch, x: &Matrix) -> Result<Matrix> {
        self.run(g, x, false).map(|t| t.output)
    }

    /// Forward pass that records what [`Self::backward`] needs.
    pub fn forward_train<'a>(&self, g: &'a GraphBatch, x: &Matrix) -> Result<Trace<'a>> {
        self.run(g, x, true)
    }

    /// One graph through the model; returns its `1×outputs` row.
    pub fn forward_graph(&self, graph: &EventGraph) -> Result<Matrix> {
        let (batch, x) = GraphBatch::from_graph(graph)?;
        self.forward(&batch, &x)
    }

    /// Detector outputs for each member graph of the batch.
    pub fn detect(&self, g: &GraphBatch, x: &Matrix) -> Result<Vec<Detection>> {
        if self.spec.task != Task::Detection {
            return Err(Error::config("detect() needs a detection model"));
        }
        let out = self.forward(g, x)?;
        Ok((0..out.rows()).map(|r| Detection::from_row(out.row(r), self.spec.n_classes)).collect())
    }

    fn run<'a>(&self, g: &'a GraphBatch, x: &Matrix, record: bool) -> Result<Trace<'a>> {
        if x.cols() != self.spec.in_features {
            return Err(Error::shape(
                "model_forward",
                format!("model expects {} input features, got {}", self.spec.in_features, x.cols()),
            ));
        }
        let mut trace = Trace {
            input: g,
            pooled: Vec::new(),
            steps: Vec::new(),
            output: Matrix::zeros(0, 0),
        };
        let mut level = 0;
        let mut h = x.clone();
        let mut saved: Vec<Matrix> = Vec::new();
        for layer in &self.layers {
            let graph = trace.graph(level);
            let (next, cache) = match layer {
                Layer::Conv(conv) => {
                    let (out, cache) = conv.forward(graph, &h)?;
                    (out, StepCache::Conv(cache))
                }
                Layer::Activation(kind) => (activation(&h, *kind), StepCache::None),
                Layer::Pool(spec) => {
                    let (coarse, out, cache) = voxel_max_pool(graph, &h, *spec)?;
                    trace.pooled.push(coarse);
                    (out, StepCache::Pool(cache))
                }
                Layer::SaveResidual => {
                    saved.push(h.clone());
                    continue;
                }
                Layer::AddResidual => {
                    let s = saved.pop().ok_or_else(|| Error::shape("model_forward", "residual add without a saved input"))?;
                    if s.shape() != h.shape() {
                        return Err(Error::shape("residual", format!("{:?} + {:?}", s.shape(), h.shape())));
                    }
                    let mut out = h.clone();
                    out.add_assign(&s);
                    (out, StepCache::None)
                }
                Layer::Readout { grid } => {
                    let (out, cache) = grid_readout(graph, &h, *grid)?;
                    (out, StepCache::Readout(cache))
                }
                Layer::Head { params } => (affine(&h, params[0].value(), params[1].value())?, StepCache::None),
                Layer::SigmoidTail(n) => {
                    let mut out = h.clone();
                    let cols = out.cols();
                    for r in 0..out.rows() {
                        out.row_mut(r)[cols - n..].iter_mut().for_each(|v| *v = sigmoid(*v));
                    }
                    (out, StepCache::None)
                }
            };
            let step_level = level;
            if matches!(layer, Layer::Pool(_)) {
                level += 1;
            }
            if record {
                trace.steps.push(Step {
                    input: std::mem::replace(&mut h, next),
                    level: step_level,
                    cache,
                });
            } else {
                h = next;
                if trace.pooled.len() > 1 {
                    // inference only needs the current graph
                    trace.pooled.remove(0);
                    level -= 1;
                }
            }
        }
        trace.output = h;
        Ok(trace)
    }

    /// Gradients of every parameter, in registry order, given the gradient
    /// of the loss with respect to the model output.
    pub fn backward(&self, trace: &Trace<'_>, grad_out: &Matrix) -> Result<Vec<Matrix>> {
        if grad_out.shape() != trace.output.shape() {
            return Err(Error::shape(
                "model_backward",
                format!("gradient is {:?}, output is {:?}", grad_out.shape(), trace.output.shape()),
            ));
        }
        let mut grads = self.zero_grads();
        let mut offsets = Vec::with_capacity(self.layers.len());
        let mut acc = 0;
        for layer in &self.layers {
            offsets.push(acc);
            acc += layer.params().len();
        }
        let mut g = grad_out.clone();
        let mut residual: Vec<Matrix> = Vec::new();
        let mut steps = trace.steps.iter().rev();
        for (i, layer) in self.layers.iter().enumerate().rev() {
            if let Layer::SaveResidual = layer {
                let r = residual.pop().ok_or_else(|| Error::shape("model_backward", "unmatched residual"))?;
                g.add_assign(&r);
                continue;
            }
            let step = steps.next().ok_or_else(|| Error::shape("model_backward", "trace does not match model"))?;
            let graph = trace.graph(step.level);
            g = match (layer, &step.cache) {
                (Layer::Conv(conv), StepCache::Conv(cache)) => {
                    let n = conv.params.len();
                    conv.backward(graph, &step.input, cache, &g, &mut grads[offsets[i]..offsets[i] + n])?
                }
                (Layer::Activation(kind), _) => activation_backward(&step.input, &g, *kind),
                (Layer::Pool(_), StepCache::Pool(cache)) => voxel_max_pool_backward(cache, &g)?,
                (Layer::AddResidual, _) => {
                    residual.push(g.clone());
                    g
                }
                (Layer::Readout { .. }, StepCache::Readout(cache)) => grid_readout_backward(cache, &g)?,
                (Layer::Head { params }, _) => {
                    let ag = affine_backward(&step.input, params[0].value(), &g)?;
                    grads[offsets[i]].add_assign(&ag.w);
                    grads[offsets[i] + 1].add_assign(&ag.b);
                    ag.x
                }
                (Layer::SigmoidTail(n), _) => {
                    let cols = g.cols();
                    for r in 0..g.rows() {
                        for c in cols - n..cols {
                            let s = sigmoid(step.input.get(r, c));
                            g.set(r, c, g.get(r, c) * s * (1.0 - s));
                        }
                    }
                    g
                }
                _ => return Err(Error::shape("model_backward", "trace does not match model")),
            };
        }
        Ok(grads)
    }

    /// Writes parameters plus the model spec (and `extra` metadata) to a
    /// checkpoint file.
    pub fn save(&self, path: &Path, extra: serde_json::Value, hyperparameters: serde_json::Value) -> Result<()> {
        let metadata = serde_json::json!({ "model": self.spec, "extra": extra });
        let file = File::create(path).map_err(Error::at_path(path))?;
        let mut w = BufWriter::new(file);
        write_checkpoint(&mut w, metadata, hyperparameters, self.params())?;
        std::io::Write::flush(&mut w).map_err(Error::at_path(path))?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<(Self, CheckpointHeader)> {
        let file = File::open(path).map_err(Error::at_path(path))?;
        let (header, tensors) = read_checkpoint(BufReader::new(file))?;
        let spec: ModelSpec = serde_json::from_value(header.metadata["model"].clone())
            .map_err(|e| Error::Format(format!("checkpoint metadata lacks a model spec: {e}")))?;
        let mut model = Model::build(&spec, 0)?;
        let n_params = model.params().count();
        if n_params != tensors.len() {
            return Err(Error::Format(format!("checkpoint has {} tensors, model needs {n_params}", tensors.len())));
        }
        for ((p, t), entry) in model.params_mut().zip(tensors).zip(&header.tensors) {
            if p.name != entry.name || p.value().shape() != t.shape() {
                return Err(Error::Format(format!(
                    "checkpoint tensor {} {:?} does not match parameter {} {:?}",
                    entry.name,
                    t.shape(),
                    p.name,
                    p.value().shape()
                )));
            }
            *p.value_mut() = t;
        }
        Ok((model, header))
    }
}

pub fn build_classifier(conv: ConvKind, n_classes: usize, in_features: usize, seed: u64) -> Result<Model> {
    Model::build(&ModelSpec::classifier(conv, n_classes, in_features), seed)
}

pub fn build_detector(n_classes: usize, seed: u64) -> Result<Model> {
    Model::build(&ModelSpec::detector(n_classes), seed)
}

#[cfg(test)]
mod tests;
