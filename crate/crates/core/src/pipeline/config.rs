use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::dataset::{load_embeddings, load_texts, DatasetPair, EmbeddingMatrix};
use crate::error::{Error, Result};
use crate::influence::{Method, ModelScale, ModelScaleSpec, RademacherProjection};
use crate::network::TrainConfig;
use crate::probes::{FileProbe, Probe, SyntheticProbe};
use crate::report::CallCosts;
use crate::rng;
use crate::synth::{synthetic_pair, SyntheticSpec};

/// Where probe answers come from. Chosen explicitly, never auto-detected.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ProbeSpec {
    Synthetic {
        #[serde(default)]
        seed: u64,
        #[serde(default = "default_probe_dim")]
        dim: usize,
    },
    File {
        path: PathBuf,
        #[serde(default)]
        embedding_dim: Option<usize>,
    },
    Http {
        url: String,
        #[serde(default = "default_in_flight")]
        max_in_flight: usize,
        #[serde(default = "default_timeout_ms")]
        timeout_ms: u64,
        #[serde(default = "default_attempts")]
        max_attempts: u32,
        #[serde(default = "default_backoff_ms")]
        backoff_ms: u64,
        #[serde(default)]
        embedding_dim: Option<usize>,
    },
}

fn default_probe_dim() -> usize {
    16
}
fn default_in_flight() -> usize {
    8
}
fn default_timeout_ms() -> u64 {
    30_000
}
fn default_attempts() -> u32 {
    3
}
fn default_backoff_ms() -> u64 {
    250
}

impl Default for ProbeSpec {
    fn default() -> Self {
        ProbeSpec::Synthetic {
            seed: 0,
            dim: default_probe_dim(),
        }
    }
}

impl ProbeSpec {
    pub fn max_attempts(&self) -> u32 {
        match self {
            ProbeSpec::Http { max_attempts, .. } => *max_attempts,
            _ => 1,
        }
    }

    pub fn build(&self, http_token: Option<&str>) -> Result<Arc<dyn Probe>> {
        match self {
            ProbeSpec::Synthetic { seed, dim } => Ok(Arc::new(SyntheticProbe::new(*seed, *dim))),
            ProbeSpec::File { path, embedding_dim } => {
                let mut probe = FileProbe::load(path)?;
                if let Some(d) = embedding_dim {
                    probe = probe.with_declared_dim(*d);
                }
                Ok(Arc::new(probe))
            }
            #[cfg(feature = "http")]
            ProbeSpec::Http {
                url,
                max_in_flight,
                timeout_ms,
                max_attempts,
                backoff_ms,
                embedding_dim,
            } => {
                use std::time::Duration;
                let mut config = crate::probes::HttpConfig::new(url.clone());
                config.bearer_token = http_token.map(str::to_string);
                config.max_in_flight = *max_in_flight;
                config.timeout = Duration::from_millis(*timeout_ms);
                config.max_attempts = *max_attempts;
                config.initial_backoff = Duration::from_millis(*backoff_ms);
                config.embedding_dim = *embedding_dim;
                Ok(Arc::new(crate::probes::HttpProbe::new(config)))
            }
            #[cfg(not(feature = "http"))]
            ProbeSpec::Http { .. } => {
                let _ = http_token;
                Err(Error::Config("this build has no HTTP probe support".into()))
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScaleSpec {
    pub label: String,
    pub parameter_count: u64,
    #[serde(default)]
    pub probe: Option<ProbeSpec>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainOverrides {
    pub epochs: Option<usize>,
    pub learning_rate: Option<f64>,
    pub batch_size: Option<usize>,
    pub hidden: Option<usize>,
}

/// A whole run, read from one JSON document.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub method: Method,
    #[serde(default = "default_u")]
    pub u: f64,
    #[serde(default = "default_v")]
    pub v: f64,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub fine_tune_embeddings: Option<PathBuf>,
    #[serde(default)]
    pub target_embeddings: Option<PathBuf>,
    #[serde(default)]
    pub fine_tune_texts: Option<PathBuf>,
    #[serde(default)]
    pub target_texts: Option<PathBuf>,
    #[serde(default)]
    pub fine_tune_gradients: Option<PathBuf>,
    #[serde(default)]
    pub target_gradients: Option<PathBuf>,
    /// Rademacher-project gradient features to this many dimensions.
    #[serde(default)]
    pub gradient_projection_dim: Option<usize>,
    /// Generate seeded data instead of reading files.
    #[serde(default)]
    pub synthetic: Option<SyntheticSpec>,
    #[serde(default)]
    pub probe: ProbeSpec,
    #[serde(default)]
    pub scales: Vec<ScaleSpec>,
    #[serde(default = "default_prompts")]
    pub prompts: Vec<String>,
    #[serde(default)]
    pub train: TrainOverrides,
    /// Full ground-truth matrix (NNCIFTK) for MSE evaluation.
    #[serde(default)]
    pub ground_truth: Option<PathBuf>,
    /// Compute full ground truth for MSE evaluation, charged to a scratch
    /// ledger rather than the run's.
    #[serde(default)]
    pub evaluate_full_truth: bool,
    /// Select from estimates everywhere, discarding Q1 ground truth.
    #[serde(default)]
    pub pure_estimate: bool,
    #[serde(default)]
    pub call_costs: Option<CallCosts>,
    #[serde(default)]
    pub out_dir: Option<PathBuf>,
    #[serde(default)]
    pub sweep_u: Vec<f64>,
    #[serde(default)]
    pub sweep_v: Vec<f64>,
}

fn default_u() -> f64 {
    0.05
}
fn default_v() -> f64 {
    0.3
}
fn default_prompts() -> Vec<String> {
    vec!["{prompt}".to_string()]
}

impl RunConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let config: RunConfig = serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        config.validate()?;
        Ok(config)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    pub fn validate(&self) -> Result<()> {
        let cfg = |msg: String| Err(Error::Config(msg));
        for u in std::iter::once(self.u).chain(self.sweep_u.iter().copied()) {
            if !(u > 0.0 && u <= 1.0) {
                return cfg(format!("u must lie in (0,1], got {u}"));
            }
        }
        for v in std::iter::once(self.v).chain(self.sweep_v.iter().copied()) {
            if !(0.0..=1.0).contains(&v) {
                return cfg(format!("v must lie in [0,1], got {v}"));
            }
        }
        let has_files = self.fine_tune_embeddings.is_some() && self.target_embeddings.is_some();
        if self.synthetic.is_none() && !has_files {
            return cfg("need fine_tune_embeddings and target_embeddings, or a synthetic block".into());
        }
        if self.synthetic.is_some() && (self.fine_tune_embeddings.is_some() || self.target_embeddings.is_some()) {
            return cfg("synthetic data and embedding files are mutually exclusive".into());
        }
        let synthetic_texts = self.synthetic.is_some();
        let has_texts = synthetic_texts || (self.fine_tune_texts.is_some() && self.target_texts.is_some());
        match self.method {
            Method::Less => {
                let synthetic_grads = self.synthetic.as_ref().is_some_and(|s| s.gradient_dim.is_some());
                let file_grads = self.fine_tune_gradients.is_some() && self.target_gradients.is_some();
                if !(synthetic_grads || file_grads) {
                    return cfg("less needs gradient features for both sides".into());
                }
            }
            Method::Delift if !has_texts => return cfg("delift needs text records for both sides".into()),
            Method::SelectIt => {
                if !has_texts {
                    return cfg("selectit needs text records for the fine-tune side".into());
                }
                if self.prompts.is_empty() {
                    return cfg("selectit needs at least one prompt".into());
                }
                if self.scales.iter().any(|s| s.parameter_count == 0) {
                    return cfg("model scales need positive parameter counts".into());
                }
            }
            _ => {}
        }
        if self.gradient_projection_dim == Some(0) {
            return cfg("gradient_projection_dim must be positive".into());
        }
        if self.evaluate_full_truth
            && matches!(self.method, Method::Delift | Method::SelectIt)
            && !matches!(self.probe, ProbeSpec::Synthetic { .. })
        {
            return cfg("evaluate_full_truth with a real probe would pay for a full valuation".into());
        }
        self.train_config().validate().map_err(|e| Error::Config(e.to_string()))
    }

    pub fn train_config(&self) -> TrainConfig {
        let d = TrainConfig::default();
        TrainConfig {
            epochs: self.train.epochs.unwrap_or(d.epochs),
            learning_rate: self.train.learning_rate.unwrap_or(d.learning_rate),
            batch_size: self.train.batch_size.unwrap_or(d.batch_size),
            hidden: self.train.hidden.unwrap_or(d.hidden),
            seed: rng::derive_seed(self.seed, &[b"train"]),
            ..d
        }
    }

    /// SHA-256 of the canonical JSON encoding, ignoring the output directory.
    pub fn content_hash(&self) -> String {
        let mut canonical = self.clone();
        canonical.out_dir = None;
        rng::sha256_hex(serde_json::to_string(&canonical).expect("config serializes").as_bytes())
    }

    pub fn load_pair(&self) -> Result<DatasetPair> {
        let mut pair = if let Some(spec) = &self.synthetic {
            synthetic_pair(spec, self.seed)?
        } else {
            let f = load_embeddings(self.fine_tune_embeddings.as_ref().expect("validated"))?;
            let t = load_embeddings(self.target_embeddings.as_ref().expect("validated"))?;
            let mut pair = DatasetPair::new(f, t)?;
            if let (Some(fp), Some(tp)) = (&self.fine_tune_texts, &self.target_texts) {
                pair = pair.with_texts(load_texts(fp)?, load_texts(tp)?)?;
            }
            if let (Some(fp), Some(tp)) = (&self.fine_tune_gradients, &self.target_gradients) {
                pair = pair.with_gradients(load_embeddings(fp)?, load_embeddings(tp)?)?;
            }
            pair
        };
        if let Some(d) = self.gradient_projection_dim {
            let Some((gf, gt)) = pair.gradients.take() else {
                return Err(Error::Config("gradient_projection_dim set but no gradient features".into()));
            };
            let projection = RademacherProjection::new(rng::derive_seed(self.seed, &[b"projection"]), gf.dim(), d);
            let project = |g: &EmbeddingMatrix| -> Result<EmbeddingMatrix> {
                let mut flat = Vec::with_capacity(g.count() * d);
                for row in g.rows() {
                    let wide: Vec<f64> = row.iter().map(|v| *v as f64).collect();
                    flat.extend(projection.apply(&wide).into_iter().map(|v| v as f32));
                }
                EmbeddingMatrix::new(g.count(), d, flat)
            };
            pair = pair.with_gradients(project(&gf)?, project(&gt)?)?;
        }
        Ok(pair)
    }

    pub fn model_scales(&self, http_token: Option<&str>) -> Result<ModelScaleSpec> {
        let main = self.probe.build(http_token)?;
        let scales = if self.scales.is_empty() {
            vec![ModelScale {
                label: "default".into(),
                parameter_count: 1,
                probe: main,
            }]
        } else {
            self.scales
                .iter()
                .map(|s| {
                    Ok(ModelScale {
                        label: s.label.clone(),
                        parameter_count: s.parameter_count,
                        probe: match &s.probe {
                            Some(spec) => spec.build(http_token)?,
                            None => main.clone(),
                        },
                    })
                })
                .collect::<Result<Vec<_>>>()?
        };
        ModelScaleSpec::new(scales)
    }

    /// Number of probe attempts per call across all probes in use.
    pub fn max_attempts(&self) -> u32 {
        self.scales
            .iter()
            .filter_map(|s| s.probe.as_ref().map(ProbeSpec::max_attempts))
            .fold(self.probe.max_attempts(), u32::max)
    }
}
