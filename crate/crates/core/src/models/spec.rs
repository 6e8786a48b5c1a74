use serde::{Deserialize, Serialize};

use crate::gconv::{ConvKind, PoolSpec, DEFAULT_SPLINE_KNOTS};
use crate::ndiff::Activation;
use crate::{Error, Result};

pub const CLASSIFIER_CHANNELS: [usize; 7] = [8, 16, 32, 32, 32, 128, 128];
/// `(cx, cy, w, h)`
pub const BBOX_OUTPUTS: usize = 4;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Task {
    Classification,
    Detection,
}

/// Consecutive convolutions, optionally wrapped in a residual connection
/// (first conv output added to last conv output) and followed by a pool.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Stage {
    pub channels: Vec<usize>,
    pub residual: bool,
    pub pool: Option<PoolSpec>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelSpec {
    pub task: Task,
    pub conv: ConvKind,
    pub n_classes: usize,
    pub in_features: usize,
    pub knots: usize,
    pub activation: Activation,
    /// Apply the activation after the final convolution too.
    pub final_activation: bool,
    pub stages: Vec<Stage>,
    pub grid: (usize, usize),
}

impl ModelSpec {
    /// Seven convolutions (8, 16, 32, 32, 32 | pool 16×12 | 128, 128), a
    /// 4×4 readout and an affine head.
    pub fn classifier(conv: ConvKind, n_classes: usize, in_features: usize) -> Self {
        Self {
            task: Task::Classification,
            conv,
            n_classes,
            in_features,
            knots: DEFAULT_SPLINE_KNOTS,
            activation: Activation::Elu,
            final_activation: false,
            stages: vec![
                Stage {
                    channels: CLASSIFIER_CHANNELS[..5].to_vec(),
                    residual: false,
                    pool: Some(PoolSpec { sx: 16, sy: 12 }),
                },
                Stage {
                    channels: CLASSIFIER_CHANNELS[5..].to_vec(),
                    residual: false,
                    pool: None,
                },
            ],
            grid: (4, 4),
        }
    }

    /// PointNet detector: an input block and three residual blocks with
    /// doubling pool windows, a 4×4 readout, and `n_classes + 4` outputs.
    pub fn detector(n_classes: usize) -> Self {
        let stage = |channels: &[usize], residual, pool: Option<u32>| Stage {
            channels: channels.to_vec(),
            residual,
            pool: pool.map(|s| PoolSpec { sx: s, sy: s }),
        };
        Self {
            task: Task::Detection,
            conv: ConvKind::PointNet,
            n_classes,
            in_features: 1,
            knots: DEFAULT_SPLINE_KNOTS,
            activation: Activation::Elu,
            final_activation: false,
            stages: vec![
                stage(&[16, 32], false, Some(4)),
                stage(&[32, 32, 32], true, Some(8)),
                stage(&[64, 64, 64], true, Some(16)),
                stage(&[96, 96, 96], true, None),
            ],
            grid: (4, 4),
        }
    }

    pub fn n_outputs(&self) -> usize {
        match self.task {
            Task::Classification => self.n_classes,
            Task::Detection => self.n_classes + super::BBOX_OUTPUTS,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_classes == 0 || self.in_features == 0 {
            return Err(Error::config("models need at least one class and one input feature"));
        }
        if self.stages.is_empty() || self.stages.iter().any(|s| s.channels.is_empty()) {
            return Err(Error::config("every stage needs at least one convolution"));
        }
        if self.grid.0 == 0 || self.grid.1 == 0 {
            return Err(Error::config("readout grid must be at least 1x1"));
        }
        for (k, stage) in self.stages.iter().enumerate() {
            if stage.residual {
                let (first, last) = (stage.channels[0], *stage.channels.last().unwrap());
                if stage.channels.len() < 2 || first != last {
                    return Err(Error::config(format!(
                        "residual stage {k} adds widths {first} and {last}; they must match and span at least two convolutions"
                    )));
                }
            }
            if let Some(p) = stage.pool {
                PoolSpec::new(p.sx, p.sy)?;
            }
        }
        Ok(())
    }
}
