//! Browser bindings for the interactive demo page in `www/`.
//!
//! Every entry point returns a JSON string; errors come back as
//! `{"error": "..."}` rather than exceptions. Nothing here touches
//! `CostLedger::time_phase`, since wall clocks are unavailable on
//! `wasm32-unknown-unknown`.

use nncift::dataset::{partition, Quadrant};
use nncift::influence::InfluenceMatrix;
use nncift::network::{
    baseline_estimates, estimate_pairwise, mse_by_quadrant, train, Baseline, NormStats, PairwiseSamples,
};
use nncift::report::{predicted_counts, savings_ratio, CostExtras, ValuationMode};
use nncift::selection::facility_location_greedy;
use nncift::synth::{cosine_landscape, synthetic_pair, SyntheticSpec};
use nncift::{CostLedger, Method, Result, TrainConfig};
use serde_json::{json, Value};
use wasm_bindgen::prelude::*;

fn respond(result: Result<Value>) -> String {
    match result {
        Ok(v) => v.to_string(),
        Err(e) => json!({ "error": e.to_string() }).to_string(),
    }
}

/// Trains the estimator on Q1 of a seeded cosine landscape and reports the
/// MSE of the network and both baselines per quadrant.
#[wasm_bindgen]
pub fn quadrant_mse(m: usize, n: usize, dim: usize, u: f64, epochs: usize, seed: u32) -> String {
    respond(quadrant_mse_value(m, n, dim, u, epochs, seed.into()))
}

fn quadrant_mse_value(m: usize, n: usize, dim: usize, u: f64, epochs: usize, seed: u64) -> Result<Value> {
    let spec = SyntheticSpec { m, n, dim, gradient_dim: None };
    let pair = synthetic_pair(&spec, seed)?;
    let truth = cosine_landscape(&pair)?;
    let split = partition(m, n, u, seed)?;
    let cells: Vec<(usize, usize)> = split.quadrant_pairs(Quadrant::Q1).collect();
    let targets: Vec<f64> = cells.iter().map(|&(i, j)| truth.get(i, j).unwrap() as f64).collect();
    let config = TrainConfig {
        epochs,
        learning_rate: 1e-3,
        batch_size: 64,
        seed,
        ..TrainConfig::default()
    };
    let outcome = train(&PairwiseSamples { pair: &pair, cells, targets }, &config)?;
    let mut params = outcome.params;
    params.norm_stats = Some(NormStats::identity());
    let ledger = CostLedger::new();
    let all = (0..m).flat_map(|i| (0..n).map(move |j| (i, j)));
    let estimates = estimate_pairwise(&params, &pair, all, &ledger)?;
    let trained = mse_by_quadrant(&estimates, &truth, &split)?;
    let random = mse_by_quadrant(&baseline_estimates(Baseline::RandomUniform, m, n, seed), &truth, &split)?;
    let zero = mse_by_quadrant(&baseline_estimates(Baseline::PredictZero, m, n, seed), &truth, &split)?;
    let rows: Vec<Value> = Quadrant::ALL
        .iter()
        .map(|&q| {
            json!({
                "quadrant": q.label(),
                "cells": split.quadrant_len(q),
                "trained": trained.get(q),
                "random_uniform": random.get(q),
                "predict_zero": zero.get(q),
            })
        })
        .collect();
    Ok(json!({
        "quadrants": rows,
        "epoch_mse": outcome.epoch_mse,
        "parameter_count": params.parameter_count(),
    }))
}

/// Facility-location selection of candidate points covering target points,
/// both given as flat `[x0, y0, x1, y1, ...]` arrays. The kernel is a
/// Gaussian of distance with bandwidth `sigma`.
#[wasm_bindgen]
pub fn select_points(candidates: &[f64], targets: &[f64], budget: usize, sigma: f64) -> String {
    respond(select_points_value(candidates, targets, budget, sigma))
}

fn select_points_value(candidates: &[f64], targets: &[f64], budget: usize, sigma: f64) -> Result<Value> {
    if !candidates.len().is_multiple_of(2) || !targets.len().is_multiple_of(2) {
        return Err(nncift::Error::Argument("coordinates come in x, y pairs".into()));
    }
    if sigma.is_nan() || sigma <= 0.0 {
        return Err(nncift::Error::Argument("sigma must be positive".into()));
    }
    let (m, n) = (candidates.len() / 2, targets.len() / 2);
    let kernel = InfluenceMatrix::from_fn(m, n, |i, j| {
        let dx = candidates[2 * i] - targets[2 * j];
        let dy = candidates[2 * i + 1] - targets[2 * j + 1];
        (-(dx * dx + dy * dy) / (2.0 * sigma * sigma)).exp() as f32
    })?;
    let result = facility_location_greedy(&kernel, budget)?;
    Ok(json!({
        "indices": result.indices,
        "objective_values": result.objective_values,
        "max_objective": n,
    }))
}

/// Predicted probe calls for estimating versus valuating everything.
#[wasm_bindgen]
pub fn cost_table(method: &str, m: usize, n: usize, u: f64, prompts: usize, scales: usize) -> String {
    respond(cost_table_value(method, m, n, u, prompts, scales))
}

fn cost_table_value(method: &str, m: usize, n: usize, u: f64, prompts: usize, scales: usize) -> Result<Value> {
    let method: Method = method.parse()?;
    let extras = CostExtras { prompts, scales };
    let full = predicted_counts(method, ValuationMode::Full, m, n, u, extras)?;
    let estimated = predicted_counts(method, ValuationMode::Estimated, m, n, u, extras)?;
    let estimator_forwards = if method.is_pairwise() {
        (m * n) as u64 - (nncift::rng::ceil_fraction(u, m) * nncift::rng::ceil_fraction(u, n)) as u64
    } else {
        (m - nncift::rng::ceil_fraction(u, m)) as u64
    };
    Ok(json!({
        "full": full,
        "estimated": estimated,
        "estimator_forwards": estimator_forwards,
        "savings_ratio": savings_ratio(estimated.forwards, full.forwards),
    }))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(s: String) -> Value {
        serde_json::from_str(&s).unwrap()
    }

    #[test]
    fn quadrant_demo_reports_four_quadrants() {
        let v = parse(quadrant_mse(40, 30, 4, 0.2, 3, 1));
        assert_eq!(v["quadrants"].as_array().unwrap().len(), 4);
        assert_eq!(v["epoch_mse"].as_array().unwrap().len(), 3);
    }

    #[test]
    fn select_covers_clusters() {
        let candidates = [0.0, 0.0, 0.1, 0.0, 5.0, 5.0];
        let targets = [0.0, 0.1, 5.0, 5.1];
        let v = parse(select_points(&candidates, &targets, 2, 0.5));
        let mut picked: Vec<u64> = v["indices"].as_array().unwrap().iter().map(|x| x.as_u64().unwrap()).collect();
        picked.sort();
        assert_eq!(picked[1], 2);
        assert!(parse(select_points(&[0.0], &targets, 1, 1.0))["error"].is_string());
    }

    #[test]
    fn cost_table_for_delift() {
        let v = parse(cost_table("delift", 1000, 1000, 0.05, 1, 1));
        assert_eq!(v["estimated"]["forwards"], 2550);
        assert_eq!(v["full"]["forwards"], 1_001_000);
        assert!(v["savings_ratio"].as_f64().unwrap() > 0.99);
        assert!(parse(cost_table("bogus", 1, 1, 0.5, 1, 1))["error"].is_string());
    }
}
