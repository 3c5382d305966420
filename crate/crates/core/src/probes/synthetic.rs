use rand::Rng;
use rand_distr::StandardNormal;

use super::{CostLedger, Probe, ProbeKind, ProbeRequest};
use crate::error::Result;
use crate::rng;

/// Deterministic stand-in for a language model.
///
/// Every response is a pure function of `(seed, request)`: a per-request
/// ChaCha stream is keyed by SHA-256 of the seed, kind, context and target.
/// Token probabilities fall in (0.05, 1); embeddings are unit-norm Gaussian
/// directions.
#[derive(Debug, Clone)]
pub struct SyntheticProbe {
    seed: u64,
    dim: usize,
}

impl SyntheticProbe {
    pub fn new(seed: u64, dim: usize) -> Self {
        Self { seed, dim }
    }

    fn stream(&self, request: &ProbeRequest) -> rng::SeededRng {
        rng::seeded(rng::derive_seed(
            self.seed,
            &[
                request.kind.as_str().as_bytes(),
                request.context.as_bytes(),
                request.target.as_bytes(),
            ],
        ))
    }

    fn token_probs(&self, request: &ProbeRequest) -> impl Iterator<Item = f64> {
        let tokens = request.target.split_whitespace().count().max(1);
        let mut stream = self.stream(request);
        (0..tokens).map(move |_| 0.05 + 0.95 * stream.random::<f64>())
    }

    pub fn embed_text(&self, text: &str) -> Vec<f64> {
        let mut stream = self.stream(&ProbeRequest::embed(text));
        let raw: Vec<f64> = (0..self.dim).map(|_| stream.sample(StandardNormal)).collect();
        let norm = raw.iter().map(|v| v * v).sum::<f64>().sqrt();
        raw.into_iter().map(|v| v / norm).collect()
    }
}

impl Probe for SyntheticProbe {
    fn query(&self, request: &ProbeRequest, ledger: &CostLedger) -> Result<Vec<f64>> {
        request.validate()?;
        ledger.record_forward();
        Ok(match request.kind {
            ProbeKind::TargetLogprobs => self.token_probs(request).map(f64::ln).collect(),
            ProbeKind::TokenMaxProbs => self.token_probs(request).collect(),
            ProbeKind::Embed => self.embed_text(&request.context),
        })
    }

    fn embedding_dim(&self) -> Option<usize> {
        Some(self.dim)
    }
}
