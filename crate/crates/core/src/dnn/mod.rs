//! Dense feedforward binary classifier over flattened PC matrices.
//!
//! Hidden layers use ReLU, the single output unit a logistic sigmoid. Inputs
//! are divided by `col_scale` (one factor per flattened input, each >= 1)
//! before the first layer.

mod io;
mod train;

use std::collections::BTreeMap;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::vectorize::PcMatrix;

pub use io::{load_network, save_network, MODEL_VERSION};
pub use train::{
    kfold_partition, kfold_validate, train, EpochStats, KFoldReport, TrainConfig, TrainReport,
};

#[derive(Debug, Error)]
pub enum DnnError {
    #[error("bad layer dimensions: {0}")]
    BadDims(String),
    #[error("shape mismatch: expected {expected}, got {got}")]
    ShapeMismatch { expected: String, got: String },
    #[error("training data holds a single class")]
    SingleClassData,
    #[error("need at least {need} records, got {got}")]
    TooFewRecords { need: usize, got: usize },
    #[error("bad training configuration: {0}")]
    BadConfig(String),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("malformed model file: {0}")]
    Format(String),
    #[error("unsupported model file version {0:?}")]
    UnsupportedVersion(String),
}

/// Matrix shape a network was trained for.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct GroupShape {
    pub rows: usize,
    pub cols: usize,
}

/// `w[out][in]`, `b[out]`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Layer {
    pub w: Vec<Vec<f64>>,
    pub b: Vec<f64>,
}

impl Layer {
    fn zeros(inputs: usize, outputs: usize) -> Layer {
        Layer {
            w: vec![vec![0.0; inputs]; outputs],
            b: vec![0.0; outputs],
        }
    }

    fn inputs(&self) -> usize {
        self.w.first().map_or(0, |r| r.len())
    }

    fn outputs(&self) -> usize {
        self.b.len()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Network {
    dims: Vec<usize>,
    layers: Vec<Layer>,
    col_scale: Vec<f64>,
    threshold: f64,
    group: Option<GroupShape>,
    seed: u64,
    pub(crate) train_meta: BTreeMap<String, serde_json::Value>,
}

/// `[inputs, width x hidden, 1]`.
pub fn layer_dims(inputs: usize, hidden: usize, width: usize) -> Vec<usize> {
    let mut dims = vec![inputs];
    dims.extend(std::iter::repeat_n(width, hidden));
    dims.push(1);
    dims
}

fn check_dims(dims: &[usize]) -> Result<(), DnnError> {
    if dims.len() < 2 {
        return Err(DnnError::BadDims(format!("{dims:?} has no layers")));
    }
    if dims.contains(&0) {
        return Err(DnnError::BadDims(format!("{dims:?} has an empty layer")));
    }
    if dims.last() != Some(&1) {
        return Err(DnnError::BadDims(format!("{dims:?} must end in a single output")));
    }
    Ok(())
}

/// He-normal weights (variance `2 / fan_in`), zero biases, unit scaling and
/// threshold 0.5.
pub fn init_network(dims: &[usize], seed: u64) -> Result<Network, DnnError> {
    check_dims(dims)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let layers = dims
        .windows(2)
        .map(|io| {
            let normal = Normal::new(0.0, (2.0 / io[0] as f64).sqrt()).unwrap();
            let mut layer = Layer::zeros(io[0], io[1]);
            for row in &mut layer.w {
                for w in row {
                    *w = normal.sample(&mut rng);
                }
            }
            layer
        })
        .collect();
    Ok(Network {
        dims: dims.to_vec(),
        layers,
        col_scale: vec![1.0; dims[0]],
        threshold: 0.5,
        group: None,
        seed,
        train_meta: BTreeMap::new(),
    })
}

fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// Binary cross-entropy of `sigmoid(z)` against `y`, computed from the logit.
fn bce_from_logit(z: f64, y: f64) -> f64 {
    z.max(0.0) - z * y + (-z.abs()).exp().ln_1p()
}

/// Activations of every layer for one input; `acts[0]` is the scaled input,
/// the last entry holds the output logit.
struct Trace {
    acts: Vec<Vec<f64>>,
}

impl Network {
    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn layers(&self) -> &[Layer] {
        &self.layers
    }

    pub fn layers_mut(&mut self) -> &mut [Layer] {
        &mut self.layers
    }

    pub fn col_scale(&self) -> &[f64] {
        &self.col_scale
    }

    pub fn threshold(&self) -> f64 {
        self.threshold
    }

    pub fn set_threshold(&mut self, threshold: f64) {
        assert!(threshold > 0.0 && threshold < 1.0, "threshold must lie in (0, 1)");
        self.threshold = threshold;
    }

    pub fn group(&self) -> Option<GroupShape> {
        self.group
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn train_meta(&self) -> &BTreeMap<String, serde_json::Value> {
        &self.train_meta
    }

    pub fn inputs(&self) -> usize {
        self.dims[0]
    }

    fn forward(&self, raw: &[f64]) -> Trace {
        let x: Vec<f64> = raw.iter().zip(&self.col_scale).map(|(v, s)| v / s).collect();
        let mut acts = Vec::with_capacity(self.layers.len() + 1);
        acts.push(x);
        let last = self.layers.len() - 1;
        for (l, layer) in self.layers.iter().enumerate() {
            let input = acts.last().unwrap();
            let out: Vec<f64> = layer
                .w
                .iter()
                .zip(&layer.b)
                .map(|(row, b)| {
                    let z = row.iter().zip(input).map(|(w, x)| w * x).sum::<f64>() + b;
                    if l == last {
                        z
                    } else {
                        z.max(0.0)
                    }
                })
                .collect();
            acts.push(out);
        }
        Trace { acts }
    }

    fn logit(&self, raw: &[f64]) -> f64 {
        self.forward(raw).acts.last().unwrap()[0]
    }

    /// Sigmoid score of a flattened raw input of length `inputs()`.
    pub fn score(&self, raw: &[f64]) -> Result<f64, DnnError> {
        if raw.len() != self.inputs() {
            return Err(DnnError::ShapeMismatch {
                expected: format!("{} inputs", self.inputs()),
                got: format!("{} inputs", raw.len()),
            });
        }
        Ok(sigmoid(self.logit(raw)))
    }

    /// Score and label (`true` = satisfiable) of a PC matrix.
    pub fn predict(&self, m: &PcMatrix) -> Result<(f64, bool), DnnError> {
        if let Some(g) = self.group {
            if g.rows != m.rows() || g.cols != m.cols() {
                return Err(DnnError::ShapeMismatch {
                    expected: format!("{}x{}", g.rows, g.cols),
                    got: format!("{}x{}", m.rows(), m.cols()),
                });
            }
        }
        let score = self.score(&flatten(m))?;
        Ok((score, score >= self.threshold))
    }

    /// Mean weighted cross-entropy of raw inputs against labels.
    pub fn loss(&self, batch: &[(Vec<f64>, bool)], weights: [f64; 2]) -> f64 {
        let total: f64 = batch
            .iter()
            .map(|(x, y)| weights[*y as usize] * bce_from_logit(self.logit(x), *y as u8 as f64))
            .sum();
        total / batch.len() as f64
    }

    /// Loss as in [`Self::loss`] and its gradient with respect to every
    /// weight and bias, in the layout of `layers()`. `weights` are the loss
    /// weights of the negative and positive class.
    pub fn loss_and_gradients(
        &self,
        batch: &[(Vec<f64>, bool)],
        weights: [f64; 2],
    ) -> (f64, Vec<Layer>) {
        let mut grads: Vec<Layer> = self
            .layers
            .iter()
            .map(|l| Layer::zeros(l.inputs(), l.outputs()))
            .collect();
        let n = batch.len() as f64;
        let mut total = 0.0;
        for (x, y) in batch {
            let trace = self.forward(x);
            let z = trace.acts.last().unwrap()[0];
            let yv = *y as u8 as f64;
            let w = weights[*y as usize];
            total += w * bce_from_logit(z, yv);
            // delta = dL/d(pre-activation) of the current layer.
            let mut delta = vec![w * (sigmoid(z) - yv) / n];
            for l in (0..self.layers.len()).rev() {
                let input = &trace.acts[l];
                let g = &mut grads[l];
                for (o, d) in delta.iter().enumerate() {
                    g.b[o] += d;
                    for (gw, xi) in g.w[o].iter_mut().zip(input) {
                        *gw += d * xi;
                    }
                }
                if l == 0 {
                    break;
                }
                let layer = &self.layers[l];
                delta = (0..layer.inputs())
                    .map(|i| {
                        if input[i] <= 0.0 {
                            return 0.0;
                        }
                        delta.iter().enumerate().map(|(o, d)| d * layer.w[o][i]).sum()
                    })
                    .collect();
            }
        }
        (total / n, grads)
    }
}

pub fn flatten(m: &PcMatrix) -> Vec<f64> {
    m.cells().iter().map(|&v| v as f64).collect()
}
