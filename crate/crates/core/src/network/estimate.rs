use rand::Rng;
use serde::{Deserialize, Serialize};

use super::MlpParams;
use crate::dataset::{DatasetPair, EmbeddingMatrix, Quadrant, QuadrantPartition};
use crate::error::{Error, Result};
use crate::influence::{InfluenceMatrix, PointwiseScores};
use crate::network::NormStats;
use crate::par;
use crate::probes::CostLedger;
use crate::rng;

const CELL_CHUNK: usize = 4096;

fn widen(row: &[f32]) -> Vec<f64> {
    row.iter().map(|v| *v as f64).collect()
}

/// Hidden pre-activation contributed by one half of the concatenated input.
fn half_pre(params: &MlpParams, offset: usize, input: &[f64], with_bias: bool) -> Vec<f64> {
    (0..params.hidden)
        .map(|h| {
            let row = &params.w1[h * params.in_dim + offset..h * params.in_dim + offset + input.len()];
            let bias = if with_bias { params.b1[h] } else { 0.0 };
            bias + super::dot(row, input)
        })
        .collect()
}

/// Estimates the requested cells from `concat(emb_F(i), emb_T(j))`.
///
/// The first layer splits into a row half and a column half, so each distinct
/// row and column is projected once and a cell costs `O(hidden)`. Outputs are
/// mapped back through the network's stored target normalization. Every cell
/// is charged as one estimator forward; no probe calls are made.
pub fn estimate_pairwise(
    params: &MlpParams,
    pair: &DatasetPair,
    cells: impl IntoIterator<Item = (usize, usize)>,
    ledger: &CostLedger,
) -> Result<InfluenceMatrix> {
    let dim = pair.dim();
    if params.in_dim != 2 * dim {
        return Err(Error::Argument(format!(
            "network expects {} inputs, pairs have {}",
            params.in_dim,
            2 * dim
        )));
    }
    let cells: Vec<(usize, usize)> = cells.into_iter().collect();
    if let Some(&(i, j)) = cells.iter().find(|&&(i, j)| i >= pair.m() || j >= pair.n()) {
        return Err(Error::Argument(format!("cell ({i}, {j}) outside {}x{}", pair.m(), pair.n())));
    }
    let mut rows: Vec<usize> = cells.iter().map(|c| c.0).collect();
    rows.sort_unstable();
    rows.dedup();
    let mut cols: Vec<usize> = cells.iter().map(|c| c.1).collect();
    cols.sort_unstable();
    cols.dedup();

    let row_pre = par::map(&rows, |&i| half_pre(params, 0, &widen(pair.fine_tune.row(i).unwrap()), true));
    let col_pre = par::map(&cols, |&j| half_pre(params, dim, &widen(pair.target.row(j).unwrap()), false));
    let mut row_slot = vec![usize::MAX; pair.m()];
    rows.iter().enumerate().for_each(|(k, &i)| row_slot[i] = k);
    let mut col_slot = vec![usize::MAX; pair.n()];
    cols.iter().enumerate().for_each(|(k, &j)| col_slot[j] = k);

    let norm = params.norm_stats.unwrap_or_else(NormStats::identity);
    let chunks: Vec<&[(usize, usize)]> = cells.chunks(CELL_CHUNK).collect();
    let outputs = par::map(&chunks, |chunk| {
        let mut pre = vec![0.0; params.hidden];
        chunk
            .iter()
            .map(|&(i, j)| {
                let (a, b) = (&row_pre[row_slot[i]], &col_pre[col_slot[j]]);
                for ((p, x), y) in pre.iter_mut().zip(a).zip(b) {
                    *p = x + y;
                }
                norm.from_unit(params.output_from_pre(&pre))
            })
            .collect::<Vec<f64>>()
    });

    let mut out = InfluenceMatrix::empty(pair.m(), pair.n());
    for (&(i, j), value) in cells.iter().zip(outputs.into_iter().flatten()) {
        out.set(i, j, value as f32)?;
    }
    ledger.record_estimator(cells.len() as u64);
    Ok(out)
}

/// Estimates pointwise scores for `indices`, mapped through `norm`
/// (`min + y·(max − min)`), leaving other entries invalid.
pub fn estimate_pointwise(
    params: &MlpParams,
    embeddings: &EmbeddingMatrix,
    indices: &[usize],
    norm: &NormStats,
    ledger: &CostLedger,
) -> Result<PointwiseScores> {
    if params.in_dim != embeddings.dim() {
        return Err(Error::Argument(format!(
            "network expects {} inputs, embeddings have {}",
            params.in_dim,
            embeddings.dim()
        )));
    }
    if norm.min > norm.max {
        return Err(Error::Argument("normalization min exceeds max".into()));
    }
    let mut out = PointwiseScores::empty(embeddings.count());
    let values = par::map(indices, |&i| {
        let row = embeddings
            .row(i)
            .ok_or_else(|| Error::Argument(format!("index {i} outside [0,{})", embeddings.count())))?;
        params.forward(&widen(row)).map(|y| norm.from_unit(y))
    });
    for (&i, v) in indices.iter().zip(values) {
        out.values[i] = v?;
        out.valid[i] = true;
    }
    out.norm_stats = Some(*norm);
    ledger.record_estimator(indices.len() as u64);
    Ok(out)
}

/// Mean squared error per quadrant; `None` for an empty quadrant.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QuadrantMse {
    #[serde(rename = "Q1")]
    pub q1: Option<f64>,
    #[serde(rename = "Q2")]
    pub q2: Option<f64>,
    #[serde(rename = "Q3")]
    pub q3: Option<f64>,
    #[serde(rename = "Q4")]
    pub q4: Option<f64>,
}

impl QuadrantMse {
    pub fn get(&self, quadrant: Quadrant) -> Option<f64> {
        match quadrant {
            Quadrant::Q1 => self.q1,
            Quadrant::Q2 => self.q2,
            Quadrant::Q3 => self.q3,
            Quadrant::Q4 => self.q4,
        }
    }

    pub fn present(&self) -> impl Iterator<Item = f64> {
        [self.q1, self.q2, self.q3, self.q4].into_iter().flatten()
    }
}

pub fn mse_by_quadrant(
    estimates: &InfluenceMatrix,
    truth: &InfluenceMatrix,
    partition: &QuadrantPartition,
) -> Result<QuadrantMse> {
    let (m, n) = (partition.m(), partition.n());
    for (name, k) in [("estimates", estimates), ("truth", truth)] {
        if (k.m(), k.n()) != (m, n) {
            return Err(Error::Argument(format!(
                "{name} is {}x{}, partition is {m}x{n}",
                k.m(),
                k.n()
            )));
        }
    }
    let mut sums = [0.0f64; 4];
    let mut counts = [0usize; 4];
    for i in 0..m {
        for j in 0..n {
            let (Some(e), Some(t)) = (estimates.get(i, j), truth.get(i, j)) else {
                return Err(Error::Coverage(format!("cell ({i}, {j}) is not valid in both matrices")));
            };
            let q = partition.quadrant_of(i, j) as usize;
            let d = e as f64 - t as f64;
            sums[q] += d * d;
            counts[q] += 1;
        }
    }
    let mean = |q: usize| (counts[q] > 0).then(|| sums[q] / counts[q] as f64);
    Ok(QuadrantMse {
        q1: mean(0),
        q2: mean(1),
        q3: mean(2),
        q4: mean(3),
    })
}

/// Pointwise MSE split into (ID, OOD) samples of the fine-tune side.
pub fn mse_by_split(
    estimates: &PointwiseScores,
    truth: &PointwiseScores,
    partition: &QuadrantPartition,
) -> Result<(Option<f64>, Option<f64>)> {
    let mut sums = [0.0f64; 2];
    let mut counts = [0usize; 2];
    for i in 0..partition.m() {
        let ok = |s: &PointwiseScores| s.valid.get(i).copied().unwrap_or(false);
        if !(ok(estimates) && ok(truth)) {
            return Err(Error::Coverage(format!("score {i} is not valid in both score sets")));
        }
        let side = usize::from(!partition.is_id_f(i));
        let d = estimates.values[i] - truth.values[i];
        sums[side] += d * d;
        counts[side] += 1;
    }
    let mean = |s: usize| (counts[s] > 0).then(|| sums[s] / counts[s] as f64);
    Ok((mean(0), mean(1)))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Baseline {
    RandomUniform,
    PredictZero,
}

/// Fully valid baseline matrix: seeded i.i.d. uniforms in [0,1], or zeros.
pub fn baseline_estimates(kind: Baseline, m: usize, n: usize, seed: u64) -> InfluenceMatrix {
    let values = match kind {
        Baseline::PredictZero => vec![0.0; m * n],
        Baseline::RandomUniform => {
            let mut stream = rng::derived(seed, "baseline/random_uniform");
            (0..m * n).map(|_| stream.random::<f32>()).collect()
        }
    };
    InfluenceMatrix::full(m, n, values).expect("baseline values are finite")
}
