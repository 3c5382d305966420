//! Reference implementations shared by the oracle and acceptance tests.
//! Written independently of the library code they check.
#![allow(dead_code)]

use nncift::{InfluenceMatrix, MlpParams};
use rand::Rng;

pub fn rng(seed: u64) -> nncift::rng::SeededRng {
    nncift::rng::seeded(seed)
}

/// Plain two-layer forward pass: logistic(w2 · relu(W1 x + b1) + b2).
pub fn forward(p: &MlpParams, x: &[f64]) -> f64 {
    let mut logit = p.b2;
    for h in 0..p.hidden {
        let mut z = p.b1[h];
        for (k, &xk) in x.iter().enumerate().take(p.in_dim) {
            z += p.w1[h * p.in_dim + k] * xk;
        }
        if z > 0.0 {
            logit += p.w2[h] * z;
        }
    }
    1.0 / (1.0 + (-logit).exp())
}

pub fn batch_mse(p: &MlpParams, batch: &[(Vec<f64>, f64)]) -> f64 {
    batch.iter().map(|(x, t)| (forward(p, x) - t).powi(2)).sum::<f64>() / batch.len() as f64
}

fn param_mut(p: &mut MlpParams, k: usize) -> &mut f64 {
    let (n1, n2) = (p.w1.len(), p.b1.len());
    if k < n1 {
        &mut p.w1[k]
    } else if k < n1 + n2 {
        &mut p.b1[k - n1]
    } else if k < n1 + n2 + p.w2.len() {
        &mut p.w2[k - n1 - n2]
    } else {
        &mut p.b2
    }
}

fn param(p: &MlpParams, k: usize) -> f64 {
    *param_mut(&mut p.clone(), k)
}

pub struct GradCheck {
    pub components: usize,
    pub worst_relative_error: f64,
}

/// Compares analytic gradients with central differences of the batch MSE.
/// Components whose analytic and numeric values are both below `1e-7` in
/// magnitude count as matching.
pub fn gradient_check(p: &MlpParams, batch: &[(Vec<f64>, f64)], step: f64) -> GradCheck {
    let (_, grads) = p.loss_and_gradients(batch).unwrap();
    let count = p.parameter_count();
    let mut worst = 0.0f64;
    for k in 0..count {
        let mut plus = p.clone();
        *param_mut(&mut plus, k) += step;
        let mut minus = p.clone();
        *param_mut(&mut minus, k) -= step;
        let numeric = (batch_mse(&plus, batch) - batch_mse(&minus, batch)) / (2.0 * step);
        let analytic = param(&grads, k);
        let scale = analytic.abs().max(numeric.abs());
        if scale < 1e-7 {
            continue;
        }
        worst = worst.max((analytic - numeric).abs() / scale);
    }
    GradCheck {
        components: count,
        worst_relative_error: worst,
    }
}

/// Random network with weights in ±1 and inputs whose pre-activations stay
/// clear of the ReLU kink by more than the finite-difference step.
pub fn random_net(seed: u64, in_dim: usize, hidden: usize) -> (MlpParams, Vec<(Vec<f64>, f64)>) {
    let mut r = rng(seed);
    loop {
        let mut p = MlpParams::zeros(in_dim, hidden);
        p.w1.iter_mut().for_each(|w| *w = r.random_range(-1.0..1.0));
        p.b1.iter_mut().for_each(|w| *w = r.random_range(-0.5..0.5));
        p.w2.iter_mut().for_each(|w| *w = r.random_range(-1.0..1.0));
        p.b2 = r.random_range(-0.5..0.5);
        let batch: Vec<(Vec<f64>, f64)> = (0..4)
            .map(|_| ((0..in_dim).map(|_| r.random_range(-1.0..1.0)).collect(), r.random_range(0.0..1.0)))
            .collect();
        let clear = batch.iter().all(|(x, _)| {
            (0..hidden).all(|h| {
                let z: f64 = p.b1[h] + (0..in_dim).map(|k| p.w1[h * in_dim + k] * x[k]).sum::<f64>();
                z.abs() > 1e-2
            })
        });
        if clear {
            return (p, batch);
        }
    }
}

pub fn coverage(k: &InfluenceMatrix, picks: &[usize]) -> f64 {
    (0..k.n())
        .map(|j| picks.iter().map(|&i| k.get(i, j).unwrap() as f64).fold(0.0, f64::max))
        .sum()
}

/// Textbook greedy: recompute every marginal gain every round; ties go to the
/// smaller row.
pub fn naive_greedy(k: &InfluenceMatrix, budget: usize) -> Vec<usize> {
    let mut picks = Vec::new();
    while picks.len() < budget.min(k.m()) {
        let base = coverage(k, &picks);
        let mut best: Option<(f64, usize)> = None;
        for i in (0..k.m()).filter(|i| !picks.contains(i)) {
            let mut with = picks.clone();
            with.push(i);
            let gain = coverage(k, &with) - base;
            if best.is_none_or(|(g, _)| gain > g) {
                best = Some((gain, i));
            }
        }
        picks.push(best.unwrap().1);
    }
    picks
}

/// Best facility-location value over all subsets of exactly `budget` rows.
pub fn brute_force_opt(k: &InfluenceMatrix, budget: usize) -> f64 {
    fn walk(k: &InfluenceMatrix, start: usize, left: usize, chosen: &mut Vec<usize>, best: &mut f64) {
        if left == 0 {
            *best = best.max(coverage(k, chosen));
            return;
        }
        for i in start..k.m() {
            chosen.push(i);
            walk(k, i + 1, left - 1, chosen, best);
            chosen.pop();
        }
    }
    let mut best = 0.0;
    walk(k, 0, budget.min(k.m()), &mut Vec::new(), &mut best);
    best
}

pub fn random_kernel(r: &mut nncift::rng::SeededRng, m: usize, n: usize) -> InfluenceMatrix {
    InfluenceMatrix::full(m, n, (0..m * n).map(|_| r.random::<f32>()).collect()).unwrap()
}
