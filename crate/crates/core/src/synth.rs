//! Seeded synthetic datasets for desk-scale runs, demos and tests.

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::dataset::{DatasetPair, EmbeddingMatrix, TextRecord};
use crate::error::Result;
use crate::influence::{cosine, InfluenceMatrix};
use crate::rng;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SyntheticSpec {
    pub m: usize,
    pub n: usize,
    pub dim: usize,
    #[serde(default)]
    pub gradient_dim: Option<usize>,
}

const WORDS: &[&str] = &[
    "explain", "summarize", "translate", "list", "compare", "describe", "why", "how", "data", "model",
    "river", "market", "protein", "theorem", "recipe", "planet", "poem", "history", "budget", "signal",
];

/// `count` unit-norm Gaussian rows of width `dim`.
pub fn unit_gaussian_rows(count: usize, dim: usize, seed: u64) -> Result<EmbeddingMatrix> {
    let mut stream = rng::seeded(seed);
    let mut flat = Vec::with_capacity(count * dim);
    for _ in 0..count {
        let row: Vec<f64> = (0..dim).map(|_| stream.sample(StandardNormal)).collect();
        let norm = row.iter().map(|v| v * v).sum::<f64>().sqrt().max(f64::MIN_POSITIVE);
        flat.extend(row.iter().map(|v| (v / norm) as f32));
    }
    EmbeddingMatrix::new(count, dim, flat)
}

fn sentence(stream: &mut rng::SeededRng, lead: &str) -> String {
    let len = stream.random_range(3..9);
    let mut words = vec![lead.to_string()];
    words.extend((0..len).map(|_| WORDS[stream.random_range(0..WORDS.len())].to_string()));
    words.join(" ")
}

fn texts(count: usize, side: &str, seed: u64) -> Vec<TextRecord> {
    let mut stream = rng::derived(seed, &format!("synth/texts/{side}"));
    (0..count)
        .map(|k| TextRecord {
            prompt: sentence(&mut stream, &format!("{side}-{k}:")),
            response: sentence(&mut stream, "answer:"),
        })
        .collect()
}

/// Embeddings, texts and (optionally) gradient features for both sides.
pub fn synthetic_pair(spec: &SyntheticSpec, seed: u64) -> Result<DatasetPair> {
    let side_seed = |label: &str| rng::derive_seed(seed, &[b"synth", label.as_bytes()]);
    let f = unit_gaussian_rows(spec.m, spec.dim, side_seed("fine_tune"))?;
    let t = unit_gaussian_rows(spec.n, spec.dim, side_seed("target"))?;
    let mut pair = DatasetPair::new(f, t)?.with_texts(texts(spec.m, "f", seed), texts(spec.n, "t", seed))?;
    if let Some(g) = spec.gradient_dim {
        let gf = unit_gaussian_rows(spec.m, g, side_seed("grad/fine_tune"))?;
        let gt = unit_gaussian_rows(spec.n, g, side_seed("grad/target"))?;
        pair = pair.with_gradients(gf, gt)?;
    }
    Ok(pair)
}

/// Full ground-truth landscape `(cos(emb_F(i), emb_T(j)) + 1) / 2`.
pub fn cosine_landscape(pair: &DatasetPair) -> Result<InfluenceMatrix> {
    let mut values = Vec::with_capacity(pair.m() * pair.n());
    for a in pair.fine_tune.rows() {
        for b in pair.target.rows() {
            values.push(((cosine(a, b)? + 1.0) / 2.0) as f32);
        }
    }
    InfluenceMatrix::full(pair.m(), pair.n(), values)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn synthetic_pair_shapes() {
        let spec = SyntheticSpec { m: 7, n: 5, dim: 4, gradient_dim: Some(3) };
        let pair = synthetic_pair(&spec, 1).unwrap();
        assert_eq!((pair.m(), pair.n(), pair.dim()), (7, 5, 4));
        assert_eq!(pair.gradients.as_ref().unwrap().0.dim(), 3);
        assert!(!pair.fine_tune_text(6).unwrap().response.is_empty());
        for row in pair.fine_tune.rows() {
            let norm: f32 = row.iter().map(|v| v * v).sum::<f32>().sqrt();
            assert!((norm - 1.0).abs() < 1e-5);
        }
        let again = synthetic_pair(&spec, 1).unwrap();
        assert_eq!(again.fine_tune, pair.fine_tune);
        assert_eq!(again.texts, pair.texts);
    }

    #[test]
    fn landscape_in_unit_interval() {
        let spec = SyntheticSpec { m: 6, n: 6, dim: 3, gradient_dim: None };
        let k = cosine_landscape(&synthetic_pair(&spec, 2).unwrap()).unwrap();
        assert!(k.values().iter().all(|v| (0.0..=1.0).contains(v)));
    }
}
