use serde::{Deserialize, Serialize};

use super::{init_params, MlpParams, OptimizerMeta, ParamMeta, DEFAULT_HIDDEN};
use crate::dataset::{DatasetPair, EmbeddingMatrix};
use crate::error::{Error, Result};
use crate::rng;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub epochs: usize,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub hidden: usize,
    pub seed: u64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 20,
            learning_rate: 1e-4,
            batch_size: 256,
            hidden: DEFAULT_HIDDEN,
            seed: 0,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 {
            return Err(Error::Argument("epochs must be at least 1".into()));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::Argument("learning rate must be positive".into()));
        }
        if self.batch_size == 0 || self.hidden == 0 {
            return Err(Error::Argument("batch size and hidden width must be positive".into()));
        }
        if !(0.0..1.0).contains(&self.beta1) || !(0.0..1.0).contains(&self.beta2) || self.epsilon <= 0.0 {
            return Err(Error::Argument("invalid adaptive-moment hyperparameters".into()));
        }
        Ok(())
    }

    pub fn meta(&self) -> ParamMeta {
        ParamMeta {
            seed: self.seed,
            optimizer: OptimizerMeta {
                name: "adam".into(),
                learning_rate: self.learning_rate,
                beta1: self.beta1,
                beta2: self.beta2,
                epsilon: self.epsilon,
                epochs: self.epochs,
                batch_size: self.batch_size,
            },
        }
    }
}

/// A training set whose inputs are materialized on demand.
pub trait Samples {
    fn in_dim(&self) -> usize;
    fn len(&self) -> usize;
    fn is_empty(&self) -> bool {
        self.len() == 0
    }
    fn write_input(&self, idx: usize, buf: &mut [f64]);
    fn target(&self, idx: usize) -> f64;
}

/// Explicit input vectors, mostly for tests and small demos.
#[derive(Debug, Clone)]
pub struct DenseSamples {
    pub in_dim: usize,
    pub inputs: Vec<f64>,
    pub targets: Vec<f64>,
}

impl Samples for DenseSamples {
    fn in_dim(&self) -> usize {
        self.in_dim
    }
    fn len(&self) -> usize {
        self.targets.len()
    }
    fn write_input(&self, idx: usize, buf: &mut [f64]) {
        buf.copy_from_slice(&self.inputs[idx * self.in_dim..(idx + 1) * self.in_dim]);
    }
    fn target(&self, idx: usize) -> f64 {
        self.targets[idx]
    }
}

/// `concat(emb_F(i), emb_T(j))` inputs for a list of cells.
pub struct PairwiseSamples<'a> {
    pub pair: &'a DatasetPair,
    pub cells: Vec<(usize, usize)>,
    pub targets: Vec<f64>,
}

impl Samples for PairwiseSamples<'_> {
    fn in_dim(&self) -> usize {
        2 * self.pair.dim()
    }
    fn len(&self) -> usize {
        self.cells.len()
    }
    fn write_input(&self, idx: usize, buf: &mut [f64]) {
        let (i, j) = self.cells[idx];
        let dim = self.pair.dim();
        let (left, right) = buf.split_at_mut(dim);
        for (b, v) in left.iter_mut().zip(self.pair.fine_tune.row(i).expect("cell row in range")) {
            *b = *v as f64;
        }
        for (b, v) in right.iter_mut().zip(self.pair.target.row(j).expect("cell column in range")) {
            *b = *v as f64;
        }
    }
    fn target(&self, idx: usize) -> f64 {
        self.targets[idx]
    }
}

/// Single-embedding inputs for pointwise scores.
pub struct PointwiseSamples<'a> {
    pub embeddings: &'a EmbeddingMatrix,
    pub indices: Vec<usize>,
    pub targets: Vec<f64>,
}

impl Samples for PointwiseSamples<'_> {
    fn in_dim(&self) -> usize {
        self.embeddings.dim()
    }
    fn len(&self) -> usize {
        self.indices.len()
    }
    fn write_input(&self, idx: usize, buf: &mut [f64]) {
        let row = self.embeddings.row(self.indices[idx]).expect("index in range");
        for (b, v) in buf.iter_mut().zip(row) {
            *b = *v as f64;
        }
    }
    fn target(&self, idx: usize) -> f64 {
        self.targets[idx]
    }
}

/// First and second moment estimates for adaptive-moment updates.
#[derive(Debug, Clone)]
pub struct AdamState {
    first: Vec<f64>,
    second: Vec<f64>,
    step: i32,
}

impl AdamState {
    pub fn new(parameter_count: usize) -> Self {
        Self {
            first: vec![0.0; parameter_count],
            second: vec![0.0; parameter_count],
            step: 0,
        }
    }

    pub fn update(&mut self, params: &mut MlpParams, grads: &MlpParams, config: &TrainConfig) {
        self.step += 1;
        let c1 = 1.0 - config.beta1.powi(self.step);
        let c2 = 1.0 - config.beta2.powi(self.step);
        let moments = self.first.iter_mut().zip(self.second.iter_mut());
        for ((p, g), (m, v)) in params.iter_mut().zip(grads.iter()).zip(moments) {
            *m = config.beta1 * *m + (1.0 - config.beta1) * g;
            *v = config.beta2 * *v + (1.0 - config.beta2) * g * g;
            let m_hat = *m / c1;
            let v_hat = *v / c2;
            *p -= config.learning_rate * m_hat / (v_hat.sqrt() + config.epsilon);
        }
    }
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub params: MlpParams,
    /// Mean squared error over each epoch's mini-batches, measured before
    /// each batch's update.
    pub epoch_mse: Vec<f64>,
}

/// Trains a freshly initialized network with seeded shuffled mini-batches.
/// Targets must already lie in [0, 1].
pub fn train(samples: &impl Samples, config: &TrainConfig) -> Result<TrainOutcome> {
    config.validate()?;
    if samples.is_empty() {
        return Err(Error::Training("no training samples in Q1 (u too small)".into()));
    }
    if let Some(t) = (0..samples.len()).map(|k| samples.target(k)).find(|t| !(0.0..=1.0).contains(t)) {
        return Err(Error::Training(format!("training target {t} outside [0, 1]")));
    }
    let in_dim = samples.in_dim();
    let mut params = init_params(config.seed, in_dim, config.hidden)?;
    let mut adam = AdamState::new(params.parameter_count());
    let mut grads = super::MlpParams::zeros(in_dim, config.hidden);
    let mut order: Vec<usize> = (0..samples.len()).collect();
    let mut stream = rng::derived(config.seed, "network/batches");
    let mut x = vec![0.0; in_dim];
    let mut pre = vec![0.0; config.hidden];
    let mut epoch_mse = Vec::with_capacity(config.epochs);

    for _ in 0..config.epochs {
        rng::shuffle(&mut order, &mut stream);
        let mut sse = 0.0;
        for batch in order.chunks(config.batch_size) {
            grads.iter_mut().for_each(|g| *g = 0.0);
            let scale = 1.0 / batch.len() as f64;
            for &k in batch {
                samples.write_input(k, &mut x);
                sse += params.accumulate(&x, samples.target(k), scale, &mut grads, &mut pre);
            }
            adam.update(&mut params, &grads, config);
        }
        epoch_mse.push(sse / samples.len() as f64);
    }
    if !params.is_finite() {
        return Err(Error::Training("training diverged to non-finite parameters".into()));
    }
    Ok(TrainOutcome { params, epoch_mse })
}
