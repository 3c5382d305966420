use std::collections::HashMap;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{check_logprobs, check_probs, CostLedger, Probe, ProbeKind, ProbeRequest};
use crate::error::{Error, Result};

/// One stored probe response: `{"key": "i" | "i:j", "kind": ..., "values": [...]}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProbeRecord {
    pub key: String,
    pub kind: ProbeKind,
    pub values: Vec<f64>,
}

fn valid_key(key: &str) -> bool {
    let mut parts = key.split(':');
    let digits = |s: Option<&str>| s.is_some_and(|s| !s.is_empty() && s.bytes().all(|b| b.is_ascii_digit()));
    digits(parts.next()) && match parts.next() {
        None => true,
        Some(second) => digits(Some(second)) && parts.next().is_none(),
    }
}

/// Replays recorded probe responses looked up by request key. Never touches
/// the network.
#[derive(Debug, Clone, Default)]
pub struct FileProbe {
    records: HashMap<(ProbeKind, String), Vec<f64>>,
    dim: Option<usize>,
}

impl FileProbe {
    pub fn from_records(records: impl IntoIterator<Item = ProbeRecord>) -> Result<Self> {
        let mut out = FileProbe::default();
        for rec in records {
            if !valid_key(&rec.key) {
                return Err(Error::Format(format!("record key {:?} is not \"i\" or \"i:j\"", rec.key)));
            }
            match rec.kind {
                ProbeKind::TargetLogprobs => check_logprobs(&rec.values)?,
                ProbeKind::TokenMaxProbs => check_probs(&rec.values)?,
                ProbeKind::Embed => {
                    if rec.values.iter().any(|v| !v.is_finite()) {
                        return Err(Error::Data(format!("embedding {} is not finite", rec.key)));
                    }
                    let dim = *out.dim.get_or_insert(rec.values.len());
                    if dim != rec.values.len() {
                        return Err(Error::Data(format!(
                            "embedding {} has {} entries, earlier records have {dim}",
                            rec.key,
                            rec.values.len()
                        )));
                    }
                }
            }
            let slot = (rec.kind, rec.key);
            if out.records.contains_key(&slot) {
                return Err(Error::Format(format!(
                    "duplicate {} record for key {}",
                    slot.0.as_str(),
                    slot.1
                )));
            }
            out.records.insert(slot, rec.values);
        }
        Ok(out)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut records = Vec::new();
        for (lineno, line) in text.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            records.push(
                serde_json::from_str::<ProbeRecord>(line)
                    .map_err(|e| Error::Format(format!("{}:{}: {e}", path.display(), lineno + 1)))?,
            );
        }
        Self::from_records(records)
    }

    /// Overrides the embedding dim inferred from the records.
    pub fn with_declared_dim(mut self, dim: usize) -> Self {
        self.dim = Some(dim);
        self
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }
}

impl Probe for FileProbe {
    fn query(&self, request: &ProbeRequest, ledger: &CostLedger) -> Result<Vec<f64>> {
        request.validate()?;
        let key = request
            .key
            .as_ref()
            .ok_or_else(|| Error::Lookup("file probe needs a keyed request".into()))?;
        let values = self
            .records
            .get(&(request.kind, key.clone()))
            .ok_or_else(|| Error::Lookup(format!("no {} record for key {key}", request.kind.as_str())))?;
        ledger.record_forward();
        Ok(values.clone())
    }

    fn embedding_dim(&self) -> Option<usize> {
        self.dim
    }
}
