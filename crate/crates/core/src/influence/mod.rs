//! Ground-truth influence functions.
//!
//! Three pairwise methods fill cells of an [`InfluenceMatrix`]:
//!
//! * `delift` — in-context utility: how much prepending fine-tune sample `i`
//!   as an example reduces the distance between the model's prediction and
//!   target `j`'s response. Positive means the example helps.
//! * `delift_se` — cosine similarity of the two samples' embeddings.
//! * `less` — cosine similarity of (optionally projected) gradient features.
//!
//! One pointwise method, `selectit`, scores fine-tune samples by the model's
//! own token-level confidence, averaged over prompts and weighted across model
//! scales by parameter count.

mod matrix;
mod projection;

use std::collections::{BTreeMap, HashSet};
use std::sync::Arc;

use serde::{Deserialize, Serialize};

pub use matrix::{InfluenceMatrix, PointwiseScores, MATRIX_MAGIC};
pub use projection::{random_project, RademacherProjection};

use crate::dataset::{DatasetPair, TextRecord};
use crate::error::{Error, Result};
use crate::par;
use crate::probes::{CostLedger, Probe, ProbeRequest};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Delift,
    DeliftSe,
    Less,
    #[serde(rename = "selectit")]
    SelectIt,
}

impl Method {
    pub fn is_pairwise(self) -> bool {
        !matches!(self, Method::SelectIt)
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Method::Delift => "delift",
            Method::DeliftSe => "delift_se",
            Method::Less => "less",
            Method::SelectIt => "selectit",
        }
    }
}

impl std::str::FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "delift" => Ok(Method::Delift),
            "delift_se" => Ok(Method::DeliftSe),
            "less" => Ok(Method::Less),
            "selectit" => Ok(Method::SelectIt),
            other => Err(Error::Config(format!("unknown method {other:?}"))),
        }
    }
}

/// Distance between a target and the model's prediction of it:
/// `1 − exp(mean log-probability)`, i.e. one minus the geometric-mean token
/// probability. Zero iff every target token has probability one.
pub fn distance_from_logprobs(logprobs: &[f64]) -> Result<f64> {
    if logprobs.is_empty() {
        return Err(Error::Argument("distance needs at least one log-probability".into()));
    }
    if let Some(v) = logprobs.iter().find(|v| !(v.is_finite() && **v <= 0.0)) {
        return Err(Error::Data(format!("log-probability {v} is not finite and <= 0")));
    }
    let mean = logprobs.iter().sum::<f64>() / logprobs.len() as f64;
    Ok((1.0 - mean.exp()).clamp(0.0, 1.0))
}

/// In-context utility from the two distances: without-context minus
/// with-context, so a helpful example scores positive.
pub fn delift_from_distances(without_context: f64, with_context: f64) -> f64 {
    without_context - with_context
}

fn delift_context(example: &TextRecord, query: &TextRecord) -> String {
    format!("{}\n{}\n\n{}", example.prompt, example.response, query.prompt)
}

fn no_context_distance(j: usize, pair: &DatasetPair, probe: &dyn Probe, ledger: &CostLedger) -> Result<f64> {
    let query = pair.target_text(j)?;
    let req = ProbeRequest::logprobs(query.prompt.clone(), query.response.clone()).with_key(j.to_string());
    distance_from_logprobs(&probe.target_logprobs(&req, ledger)?)
}

fn with_context_distance(
    i: usize,
    j: usize,
    pair: &DatasetPair,
    probe: &dyn Probe,
    ledger: &CostLedger,
) -> Result<f64> {
    let example = pair.fine_tune_text(i)?;
    let query = pair.target_text(j)?;
    let req = ProbeRequest::logprobs(delift_context(example, query), query.response.clone())
        .with_key(format!("{i}:{j}"));
    distance_from_logprobs(&probe.target_logprobs(&req, ledger)?)
}

/// Uncached in-context utility of fine-tune sample `i` for target `j`; costs
/// two probe forwards.
pub fn delift_pair(i: usize, j: usize, pair: &DatasetPair, probe: &dyn Probe, ledger: &CostLedger) -> Result<f64> {
    let without = no_context_distance(j, pair, probe, ledger)?;
    let with = with_context_distance(i, j, pair, probe, ledger)?;
    Ok(delift_from_distances(without, with))
}

/// Cosine similarity computed in `f64`, clamped to [−1, 1].
pub fn cosine(a: &[f32], b: &[f32]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::Argument(format!("cosine of lengths {} and {}", a.len(), b.len())));
    }
    let (mut dot, mut na, mut nb) = (0.0f64, 0.0f64, 0.0f64);
    for (&x, &y) in a.iter().zip(b) {
        let (x, y) = (x as f64, y as f64);
        dot += x * y;
        na += x * x;
        nb += y * y;
    }
    if na == 0.0 || nb == 0.0 {
        return Err(Error::Numeric("cosine of a zero-norm vector".into()));
    }
    Ok((dot / (na.sqrt() * nb.sqrt())).clamp(-1.0, 1.0))
}

pub fn delift_se_pair(i: usize, j: usize, pair: &DatasetPair) -> Result<f64> {
    let a = pair
        .fine_tune
        .row(i)
        .ok_or_else(|| Error::Lookup(format!("no fine-tune embedding {i}")))?;
    let b = pair
        .target
        .row(j)
        .ok_or_else(|| Error::Lookup(format!("no target embedding {j}")))?;
    cosine(a, b)
}

pub fn less_pair(i: usize, j: usize, pair: &DatasetPair) -> Result<f64> {
    let (gf, gt) = pair
        .gradients
        .as_ref()
        .ok_or_else(|| Error::Lookup("dataset has no gradient features".into()))?;
    let a = gf
        .row(i)
        .ok_or_else(|| Error::Lookup(format!("no gradient feature row {i}")))?;
    let b = gt
        .row(j)
        .ok_or_else(|| Error::Lookup(format!("no gradient feature row {j}")))?;
    cosine(a, b)
}

fn check_cells(cells: &[(usize, usize)], m: usize, n: usize) -> Result<()> {
    let mut seen = HashSet::with_capacity(cells.len());
    for &(i, j) in cells {
        if i >= m || j >= n {
            return Err(Error::Argument(format!("cell ({i}, {j}) outside {m}x{n}")));
        }
        if !seen.insert((i, j)) {
            return Err(Error::Argument(format!("cell ({i}, {j}) requested twice")));
        }
    }
    Ok(())
}

/// Valuates exactly the requested cells with a pairwise method.
///
/// `delift` needs a probe and texts; it evaluates the context-free distance
/// once per distinct target and one contextual call per cell. The cosine
/// methods make no probe calls. The first failing cell in request order aborts
/// the computation.
pub fn compute_influence(
    method: Method,
    cells: impl IntoIterator<Item = (usize, usize)>,
    pair: &DatasetPair,
    probe: Option<&dyn Probe>,
    ledger: &CostLedger,
) -> Result<InfluenceMatrix> {
    let cells: Vec<(usize, usize)> = cells.into_iter().collect();
    check_cells(&cells, pair.m(), pair.n())?;
    let values: Vec<Result<f64>> = match method {
        Method::Delift => {
            let probe = probe.ok_or_else(|| Error::Config("delift needs a probe".into()))?;
            let mut targets: Vec<usize> = cells.iter().map(|&(_, j)| j).collect();
            targets.sort_unstable();
            targets.dedup();
            let distances = par::map(&targets, |&j| no_context_distance(j, pair, probe, ledger));
            let mut cache = BTreeMap::new();
            for (&j, d) in targets.iter().zip(distances) {
                let first_row = cells.iter().find(|c| c.1 == j).map_or(0, |c| c.0);
                cache.insert(j, d.map_err(|e| e.at_cell(first_row, j))?);
            }
            par::map(&cells, |&(i, j)| {
                with_context_distance(i, j, pair, probe, ledger).map(|with| delift_from_distances(cache[&j], with))
            })
        }
        Method::DeliftSe => par::map(&cells, |&(i, j)| delift_se_pair(i, j, pair)),
        Method::Less => par::map(&cells, |&(i, j)| less_pair(i, j, pair)),
        Method::SelectIt => {
            return Err(Error::Argument("selectit is pointwise; use compute_pointwise".into()))
        }
    };
    let mut out = InfluenceMatrix::empty(pair.m(), pair.n());
    for (&(i, j), value) in cells.iter().zip(values) {
        let value = value.map_err(|e| e.at_cell(i, j))?;
        out.set(i, j, value as f32).map_err(|e| e.at_cell(i, j))?;
    }
    Ok(out)
}

/// One model scale for pointwise scoring.
#[derive(Clone)]
pub struct ModelScale {
    pub label: String,
    pub parameter_count: u64,
    pub probe: Arc<dyn Probe>,
}

impl std::fmt::Debug for ModelScale {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("ModelScale")
            .field("label", &self.label)
            .field("parameter_count", &self.parameter_count)
            .finish_non_exhaustive()
    }
}

#[derive(Debug, Clone)]
pub struct ModelScaleSpec {
    scales: Vec<ModelScale>,
}

impl ModelScaleSpec {
    pub fn new(scales: Vec<ModelScale>) -> Result<Self> {
        if scales.is_empty() {
            return Err(Error::Argument("at least one model scale is required".into()));
        }
        if let Some(s) = scales.iter().find(|s| s.parameter_count == 0) {
            return Err(Error::Argument(format!("scale {} has zero parameters", s.label)));
        }
        Ok(Self { scales })
    }

    pub fn scales(&self) -> &[ModelScale] {
        &self.scales
    }

    pub fn len(&self) -> usize {
        self.scales.len()
    }

    pub fn is_empty(&self) -> bool {
        self.scales.is_empty()
    }

    /// Weight of each scale, proportional to its parameter count.
    pub fn weights(&self) -> Vec<f64> {
        let total: f64 = self.scales.iter().map(|s| s.parameter_count as f64).sum();
        self.scales.iter().map(|s| s.parameter_count as f64 / total).collect()
    }
}

/// Parameter-count-weighted mean of per-scale sentence scores.
pub fn model_level_score(sentence_scores: &[f64], parameter_counts: &[u64]) -> f64 {
    let total: f64 = parameter_counts.iter().map(|&p| p as f64).sum();
    let weighted: f64 = sentence_scores
        .iter()
        .zip(parameter_counts)
        .map(|(s, &p)| s * p as f64)
        .sum();
    weighted / total
}

fn mean(values: &[f64]) -> f64 {
    values.iter().sum::<f64>() / values.len() as f64
}

/// Fills a prompt template; `{prompt}` is replaced by the sample's prompt, and
/// a template without the placeholder gets the prompt appended.
pub fn render_prompt(template: &str, text: &TextRecord) -> String {
    if template.contains("{prompt}") {
        template.replace("{prompt}", &text.prompt)
    } else {
        format!("{template}\n{}", text.prompt)
    }
}

/// Three-level confidence score of one fine-tune sample: token max
/// probabilities, averaged per prompt, averaged over prompts, then weighted by
/// model size. Costs `|prompts|·|scales|` probe forwards.
pub fn selectit_point(
    i: usize,
    text: &TextRecord,
    prompts: &[String],
    scales: &ModelScaleSpec,
    ledger: &CostLedger,
) -> Result<f64> {
    if prompts.is_empty() {
        return Err(Error::Argument("at least one prompt is required".into()));
    }
    let mut per_scale = Vec::with_capacity(scales.len());
    for scale in scales.scales() {
        let mut per_prompt = Vec::with_capacity(prompts.len());
        for (p, template) in prompts.iter().enumerate() {
            let req = ProbeRequest::max_probs(render_prompt(template, text), text.response.clone())
                .with_key(format!("{i}:{p}"));
            let tokens = scale.probe.token_max_probs(&req, ledger)?;
            if tokens.is_empty() {
                return Err(Error::Data(format!("no token scores for sample {i}")));
            }
            per_prompt.push(mean(&tokens));
        }
        per_scale.push(mean(&per_prompt));
    }
    let counts: Vec<u64> = scales.scales().iter().map(|s| s.parameter_count).collect();
    Ok(model_level_score(&per_scale, &counts))
}

/// Scores the requested fine-tune indices; the rest stay invalid.
pub fn compute_pointwise(
    indices: &[usize],
    pair: &DatasetPair,
    prompts: &[String],
    scales: &ModelScaleSpec,
    ledger: &CostLedger,
) -> Result<PointwiseScores> {
    let mut out = PointwiseScores::empty(pair.m());
    let scored = par::map(indices, |&i| {
        pair.fine_tune_text(i)
            .and_then(|text| selectit_point(i, text, prompts, scales, ledger))
    });
    for (&i, score) in indices.iter().zip(scored) {
        if i >= pair.m() {
            return Err(Error::Argument(format!("index {i} outside [0,{})", pair.m())));
        }
        if out.valid[i] {
            return Err(Error::Argument(format!("index {i} requested twice")));
        }
        out.values[i] = score.map_err(|e| e.at_cell(i, 0))?;
        out.valid[i] = true;
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::EmbeddingMatrix;
    use crate::probes::{FileProbe, ProbeKind, ProbeRecord};

    #[test]
    fn distance_examples() {
        assert_eq!(distance_from_logprobs(&[0.0, 0.0, 0.0]).unwrap(), 0.0);
        let half = 0.5f64.ln();
        assert!((distance_from_logprobs(&[half, half]).unwrap() - 0.5).abs() < 1e-15);
        assert!((distance_from_logprobs(&[0.25f64.ln()]).unwrap() - 0.75).abs() < 1e-15);
        assert!(matches!(distance_from_logprobs(&[]), Err(Error::Argument(_))));
        assert!(matches!(distance_from_logprobs(&[0.1]), Err(Error::Data(_))));
    }

    #[test]
    fn delift_sign_convention() {
        assert!((delift_from_distances(0.5, 0.2) - 0.3).abs() < 1e-15);
        assert!((delift_from_distances(0.1, 0.9) + 0.8).abs() < 1e-15);
        assert_eq!(delift_from_distances(0.4, 0.4), 0.0);
    }

    #[test]
    fn cosine_examples() {
        assert!((cosine(&[1.0, 2.0], &[1.0, 2.0]).unwrap() - 1.0).abs() < 1e-12);
        assert_eq!(cosine(&[1.0, 0.0], &[0.0, 1.0]).unwrap(), 0.0);
        let h = std::f32::consts::FRAC_1_SQRT_2;
        assert!((cosine(&[1.0, 0.0], &[h, h]).unwrap() - std::f64::consts::FRAC_1_SQRT_2).abs() < 1e-5);
        assert!((cosine(&[1.0, -2.0, 3.0], &[-1.0, 2.0, -3.0]).unwrap() + 1.0).abs() < 1e-12);
        assert!((cosine(&[1.0, -2.0, 3.0], &[3.0, -6.0, 9.0]).unwrap() - 1.0).abs() < 1e-12);
        assert!(matches!(cosine(&[0.0, 0.0], &[1.0, 0.0]), Err(Error::Numeric(_))));
    }

    fn texts(prefix: &str, n: usize) -> Vec<TextRecord> {
        (0..n)
            .map(|k| TextRecord {
                prompt: format!("{prefix} prompt {k}"),
                response: format!("{prefix} answer {k}"),
            })
            .collect()
    }

    fn text_pair(m: usize, n: usize) -> DatasetPair {
        let e = |c| EmbeddingMatrix::new(c, 1, vec![1.0; c]).unwrap();
        DatasetPair::new(e(m), e(n))
            .unwrap()
            .with_texts(texts("f", m), texts("t", n))
            .unwrap()
    }

    #[test]
    fn delift_with_identical_responses_is_zero() {
        let pair = text_pair(1, 1);
        let lp = vec![-0.3, -0.9];
        let probe = FileProbe::from_records([
            ProbeRecord { key: "0".into(), kind: ProbeKind::TargetLogprobs, values: lp.clone() },
            ProbeRecord { key: "0:0".into(), kind: ProbeKind::TargetLogprobs, values: lp },
        ])
        .unwrap();
        let ledger = CostLedger::new();
        assert_eq!(delift_pair(0, 0, &pair, &probe, &ledger).unwrap(), 0.0);
        assert_eq!(ledger.forward_calls(), 2);
    }

    #[test]
    fn missing_texts_or_features_are_lookup_errors() {
        let e = EmbeddingMatrix::new(1, 1, vec![1.0]).unwrap();
        let pair = DatasetPair::new(e.clone(), e).unwrap();
        let ledger = CostLedger::new();
        let probe = FileProbe::default();
        let err = compute_influence(Method::Delift, [(0, 0)], &pair, Some(&probe), &ledger).unwrap_err();
        assert_eq!(err.exit_code(), 5);
        assert!(matches!(less_pair(0, 0, &pair), Err(Error::Lookup(_))));
    }

    #[test]
    fn failing_cell_is_identified() {
        let f = EmbeddingMatrix::from_rows(2, &[vec![1.0, 0.0], vec![0.0, 0.0]]).unwrap();
        let t = EmbeddingMatrix::from_rows(2, &[vec![1.0, 1.0]]).unwrap();
        let pair = DatasetPair::new(f, t).unwrap();
        let err = compute_influence(Method::DeliftSe, [(0, 0), (1, 0)], &pair, None, &CostLedger::new())
            .unwrap_err();
        assert!(matches!(err, Error::Cell { i: 1, j: 0, .. }));
    }

    #[test]
    fn duplicate_cells_rejected() {
        let pair = text_pair(2, 2);
        assert!(compute_influence(Method::DeliftSe, [(0, 0), (0, 0)], &pair, None, &CostLedger::new()).is_err());
    }

    #[test]
    fn selectit_single_scale_all_certain() {
        let probe = FileProbe::from_records([ProbeRecord {
            key: "0:0".into(),
            kind: ProbeKind::TokenMaxProbs,
            values: vec![1.0, 1.0, 1.0],
        }])
        .unwrap();
        let scales = ModelScaleSpec::new(vec![ModelScale {
            label: "small".into(),
            parameter_count: 1_000_000_000,
            probe: Arc::new(probe),
        }])
        .unwrap();
        let ledger = CostLedger::new();
        let text = &texts("f", 1)[0];
        assert_eq!(selectit_point(0, text, &["{prompt}".into()], &scales, &ledger).unwrap(), 1.0);
        assert!(selectit_point(0, text, &[], &scales, &ledger).is_err());
    }

    #[test]
    fn model_level_weighting() {
        assert_eq!(model_level_score(&[0.4, 0.8], &[1_000_000_000, 3_000_000_000]), 0.7);
        assert!(ModelScaleSpec::new(vec![]).is_err());
    }

    #[test]
    fn prompt_rendering() {
        let t = TextRecord { prompt: "Q".into(), response: "A".into() };
        assert_eq!(render_prompt("Rate: {prompt}", &t), "Rate: Q");
        assert_eq!(render_prompt("Rate", &t), "Rate\nQ");
    }

    #[test]
    fn method_names() {
        for m in [Method::Delift, Method::DeliftSe, Method::Less, Method::SelectIt] {
            assert_eq!(m.as_str().parse::<Method>().unwrap(), m);
            assert_eq!(serde_json::to_string(&m).unwrap(), format!("\"{}\"", m.as_str()));
        }
        assert!("bogus".parse::<Method>().is_err());
    }
}
