//! Pluggable model probes and the cost ledger that meters them.
//!
//! A probe answers three kinds of question about a language model: the
//! log-probability of each target token given a context, the maximum
//! next-token probability at each target position, and an embedding of a
//! text. Every provider charges one forward call to the ledger per model call
//! it makes (per attempt for HTTP).

mod file;
#[cfg(feature = "http")]
mod http;
mod ledger;
mod synthetic;

use serde::{Deserialize, Serialize};

pub use file::{FileProbe, ProbeRecord};
#[cfg(feature = "http")]
pub use http::{HttpConfig, HttpProbe};
pub use ledger::{record_gradient_cost, CostLedger, LedgerSnapshot};
pub use synthetic::SyntheticProbe;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProbeKind {
    TargetLogprobs,
    TokenMaxProbs,
    Embed,
}

impl ProbeKind {
    pub fn as_str(self) -> &'static str {
        match self {
            ProbeKind::TargetLogprobs => "target_logprobs",
            ProbeKind::TokenMaxProbs => "token_max_probs",
            ProbeKind::Embed => "embed",
        }
    }
}

/// One question for a probe. For `Embed` the text to embed is `context` and
/// `target` is empty. `key` addresses stored responses (`"i"` or `"i:j"`).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ProbeRequest {
    pub kind: ProbeKind,
    pub context: String,
    pub target: String,
    pub key: Option<String>,
}

impl ProbeRequest {
    pub fn logprobs(context: impl Into<String>, target: impl Into<String>) -> Self {
        Self {
            kind: ProbeKind::TargetLogprobs,
            context: context.into(),
            target: target.into(),
            key: None,
        }
    }

    pub fn max_probs(context: impl Into<String>, target: impl Into<String>) -> Self {
        Self {
            kind: ProbeKind::TokenMaxProbs,
            context: context.into(),
            target: target.into(),
            key: None,
        }
    }

    pub fn embed(text: impl Into<String>) -> Self {
        Self {
            kind: ProbeKind::Embed,
            context: text.into(),
            target: String::new(),
            key: None,
        }
    }

    pub fn with_key(mut self, key: impl Into<String>) -> Self {
        self.key = Some(key.into());
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.kind != ProbeKind::Embed && self.target.is_empty() {
            return Err(Error::Argument(format!(
                "{} request needs a non-empty target",
                self.kind.as_str()
            )));
        }
        Ok(())
    }
}

/// A provider of model signals. Implementations charge the ledger themselves
/// and must tolerate concurrent calls.
pub trait Probe: Send + Sync {
    /// Raw provider call; callers normally use the typed helpers below, which
    /// validate the request and the response.
    fn query(&self, request: &ProbeRequest, ledger: &CostLedger) -> Result<Vec<f64>>;

    /// Embedding dimension the provider declares, if it embeds at all.
    fn embedding_dim(&self) -> Option<usize>;

    fn target_logprobs(&self, request: &ProbeRequest, ledger: &CostLedger) -> Result<Vec<f64>> {
        expect_kind(request, ProbeKind::TargetLogprobs)?;
        let values = self.query(request, ledger)?;
        check_logprobs(&values)?;
        Ok(values)
    }

    fn token_max_probs(&self, request: &ProbeRequest, ledger: &CostLedger) -> Result<Vec<f64>> {
        expect_kind(request, ProbeKind::TokenMaxProbs)?;
        let values = self.query(request, ledger)?;
        check_probs(&values)?;
        Ok(values)
    }

    fn embed(&self, request: &ProbeRequest, ledger: &CostLedger) -> Result<Vec<f64>> {
        expect_kind(request, ProbeKind::Embed)?;
        let values = self.query(request, ledger)?;
        let declared = self
            .embedding_dim()
            .ok_or_else(|| Error::Protocol("provider does not declare an embedding dim".into()))?;
        if values.len() != declared {
            return Err(Error::Protocol(format!(
                "embedding has {} entries, provider declares {declared}",
                values.len()
            )));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::Protocol("embedding contains non-finite values".into()));
        }
        Ok(values)
    }
}

fn expect_kind(request: &ProbeRequest, kind: ProbeKind) -> Result<()> {
    if request.kind != kind {
        return Err(Error::Argument(format!(
            "expected a {} request, got {}",
            kind.as_str(),
            request.kind.as_str()
        )));
    }
    request.validate()
}

pub(crate) fn check_logprobs(values: &[f64]) -> Result<()> {
    if values.is_empty() {
        return Err(Error::Protocol("empty log-probability list".into()));
    }
    if let Some(v) = values.iter().find(|v| !(v.is_finite() && **v <= 0.0)) {
        return Err(Error::Data(format!("log-probability {v} is not finite and <= 0")));
    }
    Ok(())
}

pub(crate) fn check_probs(values: &[f64]) -> Result<()> {
    if values.is_empty() {
        return Err(Error::Protocol("empty probability list".into()));
    }
    if let Some(v) = values.iter().find(|v| !(**v > 0.0 && **v <= 1.0)) {
        return Err(Error::Data(format!("probability {v} outside (0,1]")));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn log_prob_requests_need_a_target() {
        assert!(ProbeRequest::logprobs("ctx", "").validate().is_err());
        assert!(ProbeRequest::max_probs("", "y").validate().is_ok());
        assert!(ProbeRequest::embed("").validate().is_ok());
    }

    #[test]
    fn response_checks() {
        assert!(check_logprobs(&[]).is_err());
        assert!(check_logprobs(&[0.1]).is_err());
        assert!(check_logprobs(&[0.0, -3.0]).is_ok());
        assert!(check_probs(&[0.0]).is_err());
        assert!(check_probs(&[1.0, 1.0, 1.0]).is_ok());
    }
}
