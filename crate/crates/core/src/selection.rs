//! Subset selection from influence values.
//!
//! Facility location `f(S) = Σ_j max_{i∈S} K[i,j]` is maximized greedily with
//! lazy (stale upper bound) evaluation; row-max and pointwise top-k rank rows
//! directly. Ties always go to the smallest row index.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::influence::{InfluenceMatrix, PointwiseScores};
use crate::rng;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectionResult {
    pub indices: Vec<usize>,
    /// Objective after each pick.
    pub objective_values: Vec<f64>,
    pub budget: usize,
}

/// `⌈v·M⌉`.
pub fn budget_from_fraction(v: f64, m: usize) -> Result<usize> {
    if !(0.0..=1.0).contains(&v) {
        return Err(Error::Argument(format!("v must lie in [0,1], got {v}")));
    }
    Ok(rng::ceil_fraction(v, m))
}

fn require_full(matrix: &InfluenceMatrix) -> Result<()> {
    if !matrix.is_fully_valid() {
        return Err(Error::Selection(format!(
            "selection needs a fully valid matrix, {} of {} cells valid",
            matrix.valid_count(),
            matrix.m() * matrix.n()
        )));
    }
    Ok(())
}

/// Affine map of all values from `[min, max]` onto `[0, 1]`; a constant
/// matrix maps to zeros.
pub fn normalize_kernel(matrix: &InfluenceMatrix) -> Result<InfluenceMatrix> {
    require_full(matrix)?;
    let Some((lo, hi)) = matrix.valid_range() else {
        return Ok(matrix.clone());
    };
    let (lo, hi) = (lo as f64, hi as f64);
    let span = hi - lo;
    let values = matrix
        .values()
        .iter()
        .map(|&v| if span > 0.0 { ((v as f64 - lo) / span) as f32 } else { 0.0 })
        .collect();
    InfluenceMatrix::full(matrix.m(), matrix.n(), values)
}

/// Marginal gain of adding row `i` given the current per-column cover.
pub fn marginal_gain(kernel: &InfluenceMatrix, i: usize, cover: &[f64]) -> f64 {
    kernel
        .row(i)
        .iter()
        .zip(cover)
        .map(|(&k, &c)| (k as f64 - c).max(0.0))
        .sum()
}

#[derive(Debug, PartialEq)]
struct Candidate {
    bound: f64,
    row: usize,
    /// Selection round the bound was computed in.
    round: usize,
}

impl Eq for Candidate {}

impl Ord for Candidate {
    fn cmp(&self, other: &Self) -> Ordering {
        self.bound
            .total_cmp(&other.bound)
            .then_with(|| other.row.cmp(&self.row))
    }
}

impl PartialOrd for Candidate {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

/// Lazy greedy facility location over a `[0,1]` kernel. Picks
/// `min(budget, M)` rows and yields exactly the sequence plain greedy would.
pub fn facility_location_greedy(kernel: &InfluenceMatrix, budget: usize) -> Result<SelectionResult> {
    if budget < 1 {
        return Err(Error::Selection("facility location needs a budget of at least 1".into()));
    }
    require_full(kernel)?;
    if let Some(v) = kernel.values().iter().find(|v| !(0.0..=1.0).contains(*v)) {
        return Err(Error::Selection(format!("kernel value {v} outside [0,1]; normalize first")));
    }
    let picks = budget.min(kernel.m());
    let mut cover = vec![0.0f64; kernel.n()];
    let mut heap: BinaryHeap<Candidate> = (0..kernel.m())
        .map(|row| Candidate {
            bound: marginal_gain(kernel, row, &cover),
            row,
            round: 0,
        })
        .collect();
    let mut result = SelectionResult {
        indices: Vec::with_capacity(picks),
        objective_values: Vec::with_capacity(picks),
        budget,
    };
    let mut objective = 0.0;
    while result.indices.len() < picks {
        let round = result.indices.len();
        let top = heap.pop().expect("heap holds every unselected row");
        if top.round == round {
            for (c, &k) in cover.iter_mut().zip(kernel.row(top.row)) {
                *c = c.max(k as f64);
            }
            objective = cover.iter().sum();
            result.indices.push(top.row);
            result.objective_values.push(objective);
        } else {
            heap.push(Candidate {
                bound: marginal_gain(kernel, top.row, &cover),
                row: top.row,
                round,
            });
        }
    }
    debug_assert!(objective.is_finite());
    Ok(result)
}

fn top_k(scores: &[f64], k: usize) -> Result<SelectionResult> {
    if k > scores.len() {
        return Err(Error::Selection(format!("k = {k} exceeds {} candidates", scores.len())));
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]).then(a.cmp(&b)));
    order.truncate(k);
    let objective_values = order
        .iter()
        .scan(0.0, |acc, &i| {
            *acc += scores[i];
            Some(*acc)
        })
        .collect();
    Ok(SelectionResult {
        indices: order,
        objective_values,
        budget: k,
    })
}

/// Ranks rows by their strongest single target match, `max_j K[i,j]`.
pub fn topk_rowmax(matrix: &InfluenceMatrix, k: usize) -> Result<SelectionResult> {
    require_full(matrix)?;
    let scores: Vec<f64> = (0..matrix.m())
        .map(|i| {
            matrix
                .row(i)
                .iter()
                .map(|&v| v as f64)
                .fold(f64::NEG_INFINITY, f64::max)
        })
        .collect();
    top_k(&scores, k)
}

pub fn topk_pointwise(scores: &PointwiseScores, k: usize) -> Result<SelectionResult> {
    if let Some(i) = scores.valid.iter().position(|ok| !ok) {
        return Err(Error::Selection(format!("score {i} is not valid")));
    }
    top_k(&scores.values, k)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn k(rows: &[&[f32]]) -> InfluenceMatrix {
        let n = rows[0].len();
        InfluenceMatrix::full(rows.len(), n, rows.iter().flat_map(|r| r.iter().copied()).collect()).unwrap()
    }

    #[test]
    fn normalize_examples() {
        let out = normalize_kernel(&k(&[&[0.0, 1.0], &[-1.0, 1.0]])).unwrap();
        assert_eq!(out.values(), &[0.5, 1.0, 0.0, 1.0]);
        let flat = normalize_kernel(&k(&[&[0.3, 0.3], &[0.3, 0.3]])).unwrap();
        assert!(flat.values().iter().all(|v| *v == 0.0));
        let unit = k(&[&[0.0, 0.25], &[1.0, 0.5]]);
        assert_eq!(normalize_kernel(&unit).unwrap(), unit);
    }

    #[test]
    fn budget_one_is_best_row_sum() {
        let kern = k(&[&[0.1, 0.2, 0.3], &[0.5, 0.5, 0.1], &[0.9, 0.0, 0.0]]);
        let r = facility_location_greedy(&kern, 1).unwrap();
        assert_eq!(r.indices, vec![1]);
        assert!((r.objective_values[0] - 1.1).abs() < 1e-6);
    }

    #[test]
    fn identity_kernel() {
        let r = facility_location_greedy(&k(&[&[1.0, 0.0], &[0.0, 1.0]]), 2).unwrap();
        assert_eq!(r.indices, vec![0, 1]);
        assert_eq!(r.objective_values, vec![1.0, 2.0]);
    }

    #[test]
    fn constant_kernel_picks_prefix() {
        let flat = normalize_kernel(&k(&[&[0.7; 3], &[0.7; 3], &[0.7; 3], &[0.7; 3]])).unwrap();
        assert_eq!(facility_location_greedy(&flat, 3).unwrap().indices, vec![0, 1, 2]);
    }

    #[test]
    fn budget_errors_and_clamping() {
        let kern = k(&[&[1.0, 0.0], &[0.0, 1.0]]);
        assert_eq!(facility_location_greedy(&kern, 0).unwrap_err().exit_code(), 4);
        assert_eq!(facility_location_greedy(&kern, 5).unwrap().indices.len(), 2);
        assert!(facility_location_greedy(&k(&[&[-0.5]]), 1).is_err());
    }

    #[test]
    fn topk_rowmax_examples() {
        let m = k(&[&[0.1, 0.9], &[0.5, 0.2], &[0.3, 0.35]]);
        assert_eq!(topk_rowmax(&m, 2).unwrap().indices, vec![0, 1]);
        assert!(topk_rowmax(&m, 0).unwrap().indices.is_empty());
        let all = topk_rowmax(&m, 3).unwrap();
        assert_eq!(all.indices, vec![0, 1, 2]);
        assert!((all.objective_values[2] - 1.75).abs() < 1e-6);
        assert!(topk_rowmax(&m, 4).is_err());
    }

    #[test]
    fn topk_pointwise_examples() {
        let s = PointwiseScores::full(vec![0.2, 0.9, 0.9]);
        assert_eq!(topk_pointwise(&s, 2).unwrap().indices, vec![1, 2]);
        assert_eq!(topk_pointwise(&PointwiseScores::full(vec![0.4; 5]), 1).unwrap().indices, vec![0]);
        assert!(topk_pointwise(&s, 0).unwrap().indices.is_empty());
        assert!(topk_pointwise(&s, 4).is_err());
    }

    #[test]
    fn budgets() {
        assert_eq!(budget_from_fraction(0.3, 15_000).unwrap(), 4_500);
        assert_eq!(budget_from_fraction(0.0, 100).unwrap(), 0);
        assert_eq!(budget_from_fraction(1.0, 100).unwrap(), 100);
        assert_eq!(budget_from_fraction(0.3, 40).unwrap(), 12);
        assert!(budget_from_fraction(1.2, 10).is_err());
    }
}
