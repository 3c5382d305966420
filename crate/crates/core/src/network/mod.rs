//! The influence estimator: a two-layer perceptron
//! `y = logistic(w2 · relu(w1 · x + b1) + b2)` over concatenated sample
//! embeddings (pairwise) or a single embedding (pointwise).

mod estimate;
mod train;

use std::fs;
use std::path::Path;

use rand::Rng;
use serde::{Deserialize, Serialize};

pub use estimate::{
    baseline_estimates, estimate_pairwise, estimate_pointwise, mse_by_quadrant, mse_by_split, Baseline,
    QuadrantMse,
};
pub use train::{
    train, AdamState, DenseSamples, PairwiseSamples, PointwiseSamples, Samples, TrainConfig, TrainOutcome,
};

use crate::error::{Error, Result};
use crate::rng;

pub const DEFAULT_HIDDEN: usize = 100;

/// Observed `[min, max]` of training targets; maps targets into the unit
/// interval and estimates back out of it.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NormStats {
    pub min: f64,
    pub max: f64,
}

impl NormStats {
    pub fn new(min: f64, max: f64) -> Result<Self> {
        if !(min.is_finite() && max.is_finite() && min <= max) {
            return Err(Error::Argument(format!("invalid normalization range [{min}, {max}]")));
        }
        Ok(Self { min, max })
    }

    pub fn identity() -> Self {
        Self { min: 0.0, max: 1.0 }
    }

    pub fn observe(values: impl IntoIterator<Item = f64>) -> Option<Self> {
        values.into_iter().fold(None, |acc, v| match acc {
            None => Some(Self { min: v, max: v }),
            Some(s) => Some(Self {
                min: s.min.min(v),
                max: s.max.max(v),
            }),
        })
    }

    /// A degenerate range maps everything to the midpoint.
    pub fn to_unit(&self, value: f64) -> f64 {
        let span = self.max - self.min;
        if span > 0.0 {
            ((value - self.min) / span).clamp(0.0, 1.0)
        } else {
            0.5
        }
    }

    pub fn from_unit(&self, y: f64) -> f64 {
        self.min + y * (self.max - self.min)
    }
}

/// Weights of the estimator. `w1` is `hidden × in_dim` row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct MlpParams {
    pub in_dim: usize,
    pub hidden: usize,
    pub w1: Vec<f64>,
    pub b1: Vec<f64>,
    pub w2: Vec<f64>,
    pub b2: f64,
    /// Target normalization learned at training time, if any.
    pub norm_stats: Option<NormStats>,
}

impl MlpParams {
    pub fn zeros(in_dim: usize, hidden: usize) -> Self {
        Self {
            in_dim,
            hidden,
            w1: vec![0.0; hidden * in_dim],
            b1: vec![0.0; hidden],
            w2: vec![0.0; hidden],
            b2: 0.0,
            norm_stats: None,
        }
    }

    pub fn parameter_count(&self) -> usize {
        self.in_dim * self.hidden + 2 * self.hidden + 1
    }

    /// Weights and biases of the hidden layer alone.
    pub fn first_layer_parameter_count(&self) -> usize {
        self.in_dim * self.hidden + self.hidden
    }

    /// All parameters in a fixed order: w1, b1, w2, b2.
    pub fn iter(&self) -> impl Iterator<Item = &f64> {
        self.w1
            .iter()
            .chain(&self.b1)
            .chain(&self.w2)
            .chain(std::iter::once(&self.b2))
    }

    pub fn iter_mut(&mut self) -> impl Iterator<Item = &mut f64> {
        self.w1
            .iter_mut()
            .chain(&mut self.b1)
            .chain(&mut self.w2)
            .chain(std::iter::once(&mut self.b2))
    }

    pub fn is_finite(&self) -> bool {
        self.iter().all(|v| v.is_finite())
    }

    fn check_input(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.in_dim {
            return Err(Error::Argument(format!(
                "input has {} features, network expects {}",
                x.len(),
                self.in_dim
            )));
        }
        Ok(())
    }

    /// Network output in [0, 1] (strictly inside for moderate logits).
    pub fn forward(&self, x: &[f64]) -> Result<f64> {
        self.check_input(x)?;
        let mut hidden = vec![0.0; self.hidden];
        Ok(self.forward_with(x, &mut hidden))
    }

    /// Forward pass writing hidden pre-activations into `pre`.
    pub(crate) fn forward_with(&self, x: &[f64], pre: &mut [f64]) -> f64 {
        for (h, z) in pre.iter_mut().enumerate() {
            let row = &self.w1[h * self.in_dim..(h + 1) * self.in_dim];
            *z = self.b1[h] + dot(row, x);
        }
        self.output_from_pre(pre)
    }

    pub(crate) fn output_from_pre(&self, pre: &[f64]) -> f64 {
        let logit = self.b2
            + pre
                .iter()
                .zip(&self.w2)
                .map(|(z, w)| w * z.max(0.0))
                .sum::<f64>();
        logistic(logit)
    }

    /// Adds the gradient of `(y − target)² · scale` into `grads`; returns the
    /// squared error.
    pub(crate) fn accumulate(&self, x: &[f64], target: f64, scale: f64, grads: &mut MlpParams, pre: &mut [f64]) -> f64 {
        let y = self.forward_with(x, pre);
        let err = y - target;
        let g_logit = 2.0 * err * y * (1.0 - y) * scale;
        grads.b2 += g_logit;
        for (h, &z) in pre.iter().enumerate().take(self.hidden) {
            if z > 0.0 {
                grads.w2[h] += g_logit * z;
                let g_pre = g_logit * self.w2[h];
                grads.b1[h] += g_pre;
                let row = &mut grads.w1[h * self.in_dim..(h + 1) * self.in_dim];
                for (g, xi) in row.iter_mut().zip(x) {
                    *g += g_pre * xi;
                }
            }
        }
        err * err
    }

    /// Batch mean squared error and its exact gradient with respect to every
    /// parameter.
    pub fn loss_and_gradients<X: AsRef<[f64]>>(&self, batch: &[(X, f64)]) -> Result<(f64, MlpParams)> {
        if batch.is_empty() {
            return Err(Error::Argument("empty batch".into()));
        }
        let mut grads = MlpParams::zeros(self.in_dim, self.hidden);
        let mut pre = vec![0.0; self.hidden];
        let scale = 1.0 / batch.len() as f64;
        let mut sse = 0.0;
        for (x, target) in batch {
            let x = x.as_ref();
            self.check_input(x)?;
            sse += self.accumulate(x, *target, scale, &mut grads, &mut pre);
        }
        Ok((sse * scale, grads))
    }

    pub fn save(&self, path: impl AsRef<Path>, meta: &ParamMeta) -> Result<()> {
        let path = path.as_ref();
        let file = ParamFile {
            in_dim: self.in_dim,
            hidden: self.hidden,
            parameter_count: self.parameter_count(),
            seed: meta.seed,
            optimizer: meta.optimizer.clone(),
            w1: self.w1.chunks(self.in_dim.max(1)).map(<[f64]>::to_vec).collect(),
            b1: self.b1.clone(),
            w2: vec![self.w2.clone()],
            b2: vec![self.b2],
            norm_stats: self.norm_stats,
        };
        let mut json = serde_json::to_string_pretty(&file).expect("finite params serialize");
        json.push('\n');
        fs::write(path, json).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<(Self, ParamMeta)> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let file: ParamFile =
            serde_json::from_str(&text).map_err(|e| Error::Format(format!("{}: {e}", path.display())))?;
        file.into_params()
    }
}

pub fn logistic(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Glorot-uniform weights (`±√(6/(fan_in+fan_out))` per layer), zero biases.
pub fn init_params(seed: u64, in_dim: usize, hidden: usize) -> Result<MlpParams> {
    if in_dim == 0 || hidden == 0 {
        return Err(Error::Argument("network dims must be positive".into()));
    }
    let mut stream = rng::derived(seed, "network/init");
    let mut p = MlpParams::zeros(in_dim, hidden);
    let limit1 = (6.0 / (in_dim + hidden) as f64).sqrt();
    for w in &mut p.w1 {
        *w = stream.random_range(-limit1..limit1);
    }
    let limit2 = (6.0 / (hidden + 1) as f64).sqrt();
    for w in &mut p.w2 {
        *w = stream.random_range(-limit2..limit2);
    }
    Ok(p)
}

/// Provenance stored next to the weights.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamMeta {
    pub seed: u64,
    pub optimizer: OptimizerMeta,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OptimizerMeta {
    pub name: String,
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub epochs: usize,
    pub batch_size: usize,
}

#[derive(Serialize, Deserialize)]
struct ParamFile {
    in_dim: usize,
    hidden: usize,
    #[serde(default)]
    parameter_count: usize,
    seed: u64,
    optimizer: OptimizerMeta,
    w1: Vec<Vec<f64>>,
    b1: Vec<f64>,
    w2: Vec<Vec<f64>>,
    b2: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    norm_stats: Option<NormStats>,
}

impl ParamFile {
    fn into_params(self) -> Result<(MlpParams, ParamMeta)> {
        let bad = |what: &str| Error::Format(format!("parameter file: {what}"));
        if self.in_dim == 0 || self.hidden == 0 {
            return Err(bad("dims must be positive"));
        }
        if self.w1.len() != self.hidden || self.w1.iter().any(|r| r.len() != self.in_dim) {
            return Err(bad("w1 must be hidden x in_dim"));
        }
        if self.b1.len() != self.hidden {
            return Err(bad("b1 must have hidden entries"));
        }
        if self.w2.len() != 1 || self.w2[0].len() != self.hidden {
            return Err(bad("w2 must be 1 x hidden"));
        }
        if self.b2.len() != 1 {
            return Err(bad("b2 must have one entry"));
        }
        let params = MlpParams {
            in_dim: self.in_dim,
            hidden: self.hidden,
            w1: self.w1.into_iter().flatten().collect(),
            b1: self.b1,
            w2: self.w2.into_iter().flatten().collect(),
            b2: self.b2[0],
            norm_stats: self.norm_stats,
        };
        if !params.is_finite() {
            return Err(Error::Data("parameter file holds non-finite values".into()));
        }
        Ok((
            params,
            ParamMeta {
                seed: self.seed,
                optimizer: self.optimizer,
            },
        ))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parameter_counts() {
        let p = init_params(0, 2048, 100).unwrap();
        assert_eq!(p.parameter_count(), 205_001);
        assert_eq!(p.first_layer_parameter_count(), 204_900);
        assert_eq!(init_params(0, 8, 4).unwrap().parameter_count(), 41);
        assert_eq!(p.iter().count(), 205_001);
    }

    #[test]
    fn init_is_seeded() {
        assert_eq!(init_params(3, 8, 4).unwrap(), init_params(3, 8, 4).unwrap());
        assert_ne!(init_params(3, 8, 4).unwrap(), init_params(4, 8, 4).unwrap());
        let p = init_params(3, 8, 4).unwrap();
        let limit = (6.0f64 / 12.0).sqrt();
        assert!(p.w1.iter().all(|w| w.abs() <= limit));
        assert!(init_params(3, 0, 4).is_err());
    }

    #[test]
    fn zero_params_give_one_half() {
        let p = MlpParams::zeros(3, 2);
        assert_eq!(p.forward(&[5.0, -1.0, 2.0]).unwrap(), 0.5);
        assert!(p.forward(&[1.0]).is_err());
    }

    #[test]
    fn hand_evaluated_two_two_one() {
        let p = MlpParams {
            in_dim: 2,
            hidden: 2,
            w1: vec![1.0, 0.0, 0.0, 1.0],
            b1: vec![0.0, 0.0],
            w2: vec![1.0, 1.0],
            b2: 0.0,
            norm_stats: None,
        };
        let y = p.forward(&[1.0, -1.0]).unwrap();
        assert!((y - 0.73106).abs() < 1e-5);
        assert_eq!(y, logistic(1.0));
    }

    #[test]
    fn zero_loss_means_zero_gradient() {
        let p = MlpParams::zeros(4, 3);
        let (mse, g) = p.loss_and_gradients(&[(vec![1.0, 2.0, 3.0, 4.0], 0.5)]).unwrap();
        assert_eq!(mse, 0.0);
        assert!(g.iter().all(|v| *v == 0.0));

        let p = init_params(1, 4, 3).unwrap();
        let x = vec![0.3, -0.2, 0.9, 0.1];
        let y = p.forward(&x).unwrap();
        let (mse, g) = p.loss_and_gradients(&[(x, y)]).unwrap();
        assert_eq!(mse, 0.0);
        assert!(g.iter().all(|v| *v == 0.0));
    }

    #[test]
    fn empty_batch_rejected() {
        let p = MlpParams::zeros(2, 2);
        assert!(p.loss_and_gradients::<Vec<f64>>(&[]).is_err());
    }

    #[test]
    fn logistic_is_stable() {
        assert_eq!(logistic(0.0), 0.5);
        assert!(logistic(-800.0) >= 0.0);
        assert!(logistic(800.0) <= 1.0);
    }

    #[test]
    fn norm_stats_maps() {
        let n = NormStats::new(-1.0, 1.0).unwrap();
        assert_eq!(n.to_unit(0.0), 0.5);
        assert_eq!(n.from_unit(0.75), 0.5);
        let flat = NormStats::new(2.0, 2.0).unwrap();
        assert_eq!(flat.from_unit(0.3), 2.0);
        assert!(NormStats::new(1.0, 0.0).is_err());
    }

    #[test]
    fn param_file_round_trip_and_validation() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("params.json");
        let mut p = init_params(9, 5, 3).unwrap();
        p.norm_stats = Some(NormStats::new(-0.5, 0.5).unwrap());
        let meta = ParamMeta {
            seed: 9,
            optimizer: OptimizerMeta {
                name: "adam".into(),
                learning_rate: 1e-4,
                beta1: 0.9,
                beta2: 0.999,
                epsilon: 1e-8,
                epochs: 20,
                batch_size: 256,
            },
        };
        p.save(&path, &meta).unwrap();
        let (back, back_meta) = MlpParams::load(&path).unwrap();
        assert_eq!(back, p);
        assert_eq!(back_meta, meta);

        let text = fs::read_to_string(&path).unwrap().replacen("\"hidden\": 3", "\"hidden\": 4", 1);
        fs::write(&path, text).unwrap();
        assert!(matches!(MlpParams::load(&path), Err(Error::Format(_))));
    }
}
