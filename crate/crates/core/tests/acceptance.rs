//! Acceptance suite. Runs every criterion, prints one PASS/FAIL line each and
//! exits non-zero if any fails.

mod common;

use std::sync::Arc;
use std::time::{Duration, Instant};

use common::*;
use nncift::dataset::{partition, save_embeddings, load_embeddings, DatasetPair, EmbeddingMatrix, Quadrant, TextRecord};
use nncift::influence::{
    compute_influence, distance_from_logprobs, selectit_point, ModelScale, ModelScaleSpec,
};
use nncift::network::{
    baseline_estimates, estimate_pairwise, init_params, mse_by_quadrant, train, Baseline, NormStats, PairwiseSamples,
};
use nncift::pipeline::{Run, RunConfig, FULL_FILE, PARAMS_FILE, Q1_FILE, SELECTION_FILE};
use nncift::probes::{FileProbe, ProbeKind, ProbeRecord};
use nncift::selection::facility_location_greedy;
use nncift::synth::{synthetic_pair, SyntheticSpec};
use nncift::{CostLedger, InfluenceMatrix, Method, TrainConfig};
use rand::Rng;

type Outcome = Result<String, String>;

fn ensure(ok: bool, msg: impl Into<String>) -> Result<(), String> {
    if ok {
        Ok(())
    } else {
        Err(msg.into())
    }
}

fn gradient_correctness() -> Outcome {
    let mut worst = 0.0f64;
    let mut r = rng(1000);
    for seed in 0..20 {
        let (in_dim, hidden) = (r.random_range(1..=16), r.random_range(1..=8));
        let (p, batch) = random_net(seed, in_dim, hidden);
        let check = gradient_check(&p, &batch, 1e-4);
        ensure(check.components == in_dim * hidden + 2 * hidden + 1, "component count")?;
        worst = worst.max(check.worst_relative_error);
    }
    ensure(worst < 1e-4, format!("worst relative error {worst:.2e}"))?;
    Ok(format!("20 nets, worst relative error {worst:.2e}"))
}

fn submodular_selection() -> Outcome {
    let mut r = rng(2000);
    for case in 0..100 {
        let (m, n, budget) = (r.random_range(1..=30), r.random_range(1..=20), r.random_range(1..=10));
        let k = random_kernel(&mut r, m, n);
        let lazy = facility_location_greedy(&k, budget).map_err(|e| e.to_string())?.indices;
        ensure(lazy == naive_greedy(&k, budget), format!("case {case}: lazy {lazy:?} differs from naive"))?;
    }
    let bound = 1.0 - (-1.0f64).exp();
    let mut worst_ratio = f64::INFINITY;
    for seed in 0..100 {
        let mut r = rng(3000 + seed);
        let (m, n, budget) = (r.random_range(1..=12), r.random_range(1..=10), r.random_range(1..=4));
        let k = random_kernel(&mut r, m, n);
        let got = *facility_location_greedy(&k, budget).unwrap().objective_values.last().unwrap();
        let opt = brute_force_opt(&k, budget);
        ensure(got >= bound * opt - 1e-9, format!("seed {seed}: greedy {got} < (1-1/e)·{opt}"))?;
        if opt > 0.0 {
            worst_ratio = worst_ratio.min(got / opt);
        }
    }
    Ok(format!("lazy == naive on 100 kernels; worst greedy/OPT {worst_ratio:.4}"))
}

/// Ground truth `(cos + 1) / 2`, computed here rather than by the library.
fn mapped_cosine(pair: &DatasetPair) -> InfluenceMatrix {
    InfluenceMatrix::from_fn(pair.m(), pair.n(), |i, j| {
        let (a, b) = (pair.fine_tune.row(i).unwrap(), pair.target.row(j).unwrap());
        let dot: f64 = a.iter().zip(b).map(|(&x, &y)| x as f64 * y as f64).sum();
        let na: f64 = a.iter().map(|&x| (x as f64).powi(2)).sum::<f64>().sqrt();
        let nb: f64 = b.iter().map(|&x| (x as f64).powi(2)).sum::<f64>().sqrt();
        ((dot / (na * nb) + 1.0) / 2.0) as f32
    })
    .unwrap()
}

fn quadrant_generalization() -> Outcome {
    let spec = SyntheticSpec { m: 2000, n: 500, dim: 32, gradient_dim: None };
    let pair = synthetic_pair(&spec, 42).map_err(|e| e.to_string())?;
    let truth = mapped_cosine(&pair);
    let mut lines = Vec::new();
    for u in [0.05, 0.1, 0.2] {
        let split = partition(2000, 500, u, 42).unwrap();
        let cells: Vec<(usize, usize)> = split.quadrant_pairs(Quadrant::Q1).collect();
        let raw: Vec<f64> = cells.iter().map(|&(i, j)| truth.get(i, j).unwrap() as f64).collect();
        let norm = NormStats::observe(raw.iter().copied()).unwrap();
        let q1_mean = raw.iter().sum::<f64>() / raw.len() as f64;
        let mean_q4 = split
            .quadrant_pairs(Quadrant::Q4)
            .map(|(i, j)| (truth.get(i, j).unwrap() as f64 - q1_mean).powi(2))
            .sum::<f64>()
            / split.quadrant_len(Quadrant::Q4) as f64;
        let targets = raw.iter().map(|&t| norm.to_unit(t)).collect();
        let config = TrainConfig { seed: 42, ..TrainConfig::default() };
        let outcome = train(&PairwiseSamples { pair: &pair, cells, targets }, &config).map_err(|e| e.to_string())?;
        let mut params = outcome.params;
        params.norm_stats = Some(norm);
        let all = (0..2000).flat_map(|i| (0..500).map(move |j| (i, j)));
        let estimates = estimate_pairwise(&params, &pair, all, &CostLedger::new()).unwrap();
        let trained = mse_by_quadrant(&estimates, &truth, &split).unwrap();
        let zero = mse_by_quadrant(&baseline_estimates(Baseline::PredictZero, 2000, 500, 7), &truth, &split).unwrap();
        let random = mse_by_quadrant(&baseline_estimates(Baseline::RandomUniform, 2000, 500, 7), &truth, &split).unwrap();
        let q4 = trained.get(Quadrant::Q4).unwrap();
        let (z4, r4) = (zero.get(Quadrant::Q4).unwrap(), random.get(Quadrant::Q4).unwrap());
        let hi = trained.present().fold(f64::NEG_INFINITY, f64::max);
        let lo = trained.present().fold(f64::INFINITY, f64::min);
        ensure(q4 < z4, format!("u={u}: Q4 {q4:.5} not below predict-zero {z4:.5}"))?;
        ensure(q4 < 0.5 * r4, format!("u={u}: Q4 {q4:.5} not below half of random {r4:.5}"))?;
        ensure(hi <= 3.0 * lo, format!("u={u}: quadrant spread {lo:.5}..{hi:.5}"))?;
        lines.push(format!(
            "u={u}: Q4 {q4:.5} (zero {z4:.3}, random {r4:.3}, Q1-mean constant {mean_q4:.5}), spread {:.2}x",
            hi / lo
        ));
    }
    Ok(lines.join("; "))
}

fn cost_accounting() -> Outcome {
    let grid: [(&str, usize, usize, f64); 20] = [
        ("delift", 100, 50, 0.1),
        ("delift", 60, 60, 0.05),
        ("delift", 200, 200, 0.05),
        ("delift", 37, 11, 0.3),
        ("delift", 25, 40, 1.0),
        ("delift_se", 100, 50, 0.1),
        ("delift_se", 80, 30, 0.05),
        ("delift_se", 13, 17, 0.5),
        ("delift_se", 50, 50, 1.0),
        ("delift_se", 7, 3, 0.2),
        ("less", 100, 50, 0.1),
        ("less", 60, 60, 0.05),
        ("less", 33, 9, 0.25),
        ("less", 15, 40, 0.5),
        ("less", 8, 8, 1.0),
        ("selectit", 100, 5, 0.1),
        ("selectit", 60, 5, 0.05),
        ("selectit", 41, 5, 0.3),
        ("selectit", 20, 5, 0.5),
        ("selectit", 9, 5, 1.0),
    ];
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let mut lowest_delift_savings = None;
    for (k, &(method, m, n, u)) in grid.iter().enumerate() {
        let extra = if method == "selectit" {
            r#", "prompts": ["{prompt}", "Rate: {prompt}", "Judge"], "scales": [{"label": "a", "parameter_count": 1}, {"label": "b", "parameter_count": 2}]"#
        } else {
            ""
        };
        let cfg = RunConfig::from_json(&format!(
            r#"{{"method": "{method}", "u": {u}, "seed": {k}, "train": {{"epochs": 1}},
                "synthetic": {{"m": {m}, "n": {n}, "dim": 4, "gradient_dim": 6}}{extra}}}"#
        ))
        .map_err(|e| e.to_string())?;
        let report = Run::new(cfg, dir.path().join(k.to_string()), None)
            .and_then(|run| run.pipeline())
            .map_err(|e| format!("case {k}: {e}"))?;
        ensure(
            report.ledger_check.pass,
            format!("case {k} ({method}, {m}, {n}, {u}): {:?}", report.ledger_check),
        )?;
        ensure(!report.cost.retries_possible, "synthetic provider never retries")?;
        if (method, m, n, u) == ("delift", 100, 50, 0.1) {
            ensure(report.cost.measured.forward_calls == 55, "DELIFT u=0.1 100x50 should cost 55")?;
            ensure(report.cost.full_valuation_forwards == 5050, "full DELIFT 100x50 should cost 5050")?;
        }
        if method == "delift" && u == 0.05 {
            let s = report.cost.savings_ratio;
            ensure(s >= 0.99, format!("DELIFT u=0.05 {m}x{n} savings {s:.4}"))?;
            lowest_delift_savings = Some(lowest_delift_savings.map_or(s, |b: f64| b.min(s)));
        }
    }
    let s = lowest_delift_savings.ok_or("no DELIFT u=0.05 case")?;
    Ok(format!("20/20 ledgers exact; DELIFT u=0.05 savings >= {s:.4}"))
}

fn unit_identities() -> Outcome {
    let text = |s: &str| TextRecord { prompt: format!("{s} prompt"), response: format!("{s} response") };
    let e = |rows: &[Vec<f32>]| EmbeddingMatrix::from_rows(rows[0].len(), rows).unwrap();
    let ledger = CostLedger::new();

    let same = vec![-0.3, -0.9, -0.05];
    let probe = FileProbe::from_records([
        ProbeRecord { key: "0".into(), kind: ProbeKind::TargetLogprobs, values: same.clone() },
        ProbeRecord { key: "0:0".into(), kind: ProbeKind::TargetLogprobs, values: same },
    ])
    .unwrap();
    let pair = DatasetPair::new(e(&[vec![1.0]]), e(&[vec![1.0]]))
        .unwrap()
        .with_texts(vec![text("f")], vec![text("t")])
        .unwrap();
    let k = compute_influence(Method::Delift, [(0, 0)], &pair, Some(&probe), &ledger).map_err(|e| e.to_string())?;
    ensure(k.get(0, 0) == Some(0.0), format!("DELIFT on identical responses {:?}", k.get(0, 0)))?;

    let v = vec![0.3f32, -1.2, 2.0];
    let neg: Vec<f32> = v.iter().map(|x| -x).collect();
    let ortho = vec![2.0f32, 0.5, 0.0];
    let rows = [v.clone(), v.clone(), v.clone()];
    let targets = [v.clone(), ortho, neg];
    for method in [Method::DeliftSe, Method::Less] {
        let mut pair = DatasetPair::new(e(&rows), e(&targets)).unwrap();
        if method == Method::Less {
            pair = pair.with_gradients(e(&rows), e(&targets)).unwrap();
        }
        let k = compute_influence(method, [(0, 0), (1, 1), (2, 2)], &pair, None, &ledger).unwrap();
        let got = [k.get(0, 0).unwrap(), k.get(1, 1).unwrap(), k.get(2, 2).unwrap()];
        ensure(got == [1.0, 0.0, -1.0], format!("{} gave {got:?}", method.as_str()))?;
    }

    let d = distance_from_logprobs(&[0.0, 0.0, 0.0, 0.0]).map_err(|e| e.to_string())?;
    ensure(d == 0.0, format!("D of a certain sequence {d}"))?;

    let scale = |label: &str, count: u64, p: f64| ModelScale {
        label: label.into(),
        parameter_count: count,
        probe: Arc::new(
            FileProbe::from_records([ProbeRecord { key: "0:0".into(), kind: ProbeKind::TokenMaxProbs, values: vec![p] }])
                .unwrap(),
        ),
    };
    let scales = ModelScaleSpec::new(vec![scale("1b", 1_000_000_000, 0.4), scale("3b", 3_000_000_000, 0.8)]).unwrap();
    let score = selectit_point(0, &text("f"), &["{prompt}".to_string()], &scales, &ledger).map_err(|e| e.to_string())?;
    ensure(score == 0.7, format!("SelectIT two-scale score {score:?}"))?;
    Ok("DELIFT 0, cosine 1/0/-1 for both cosine methods, D = 0, SelectIT = 0.7 exactly".into())
}

fn determinism() -> Outcome {
    let doc = r#"{"method": "delift", "u": 0.1, "v": 0.3, "seed": 17, "evaluate_full_truth": true,
                  "synthetic": {"m": 120, "n": 80, "dim": 16}}"#;
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let mut outputs = Vec::new();
    for k in 0..2 {
        let cfg = RunConfig::from_json(doc).map_err(|e| e.to_string())?;
        let run = Run::new(cfg, dir.path().join(format!("run{k}")), None).map_err(|e| e.to_string())?;
        run.pipeline().map_err(|e| e.to_string())?;
        let files: Vec<Vec<u8>> = [Q1_FILE, FULL_FILE, PARAMS_FILE, SELECTION_FILE]
            .iter()
            .map(|name| std::fs::read(run.path(name)).unwrap())
            .collect();
        outputs.push(files);
    }
    for (k, name) in [Q1_FILE, FULL_FILE, PARAMS_FILE, SELECTION_FILE].iter().enumerate() {
        ensure(outputs[0][k] == outputs[1][k], format!("{name} differs between runs"))?;
    }
    Ok("q1.nnk, full.nnk, params.json, selection.json byte-identical".into())
}

fn format_round_trips() -> Outcome {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let mut r = rng(7000);
    for case in 0..200 {
        let (count, dim) = (r.random_range(0..40), r.random_range(1..20));
        let bits: Vec<f32> = (0..count * dim).map(|_| f32::from_bits(r.random::<u32>() & 0xff7f_ffff)).collect();
        let e = EmbeddingMatrix::new(count, dim, bits).unwrap();
        let path = dir.path().join("e.emb");
        save_embeddings(&e, &path).unwrap();
        let back = load_embeddings(&path).map_err(|e| format!("case {case}: {e}"))?;
        ensure(back.to_bytes() == e.to_bytes(), format!("EMB1 case {case} changed"))?;

        let (m, n) = (r.random_range(0..30), r.random_range(0..30));
        let values: Vec<f32> = (0..m * n).map(|_| r.random_range(-3.0..3.0)).collect();
        let mask: Vec<bool> = (0..m * n).map(|_| r.random_bool(0.6)).collect();
        let k = InfluenceMatrix::with_mask(m, n, values, mask).unwrap();
        let path = dir.path().join("k.nnk");
        k.save(&path).unwrap();
        let raw = std::fs::read(&path).unwrap();
        let back = InfluenceMatrix::load(&path).map_err(|e| format!("case {case}: {e}"))?;
        ensure(back.mask() == k.mask(), format!("NNCIFTK case {case} mask changed"))?;
        ensure(back.to_bytes() == raw, format!("NNCIFTK case {case} bytes changed"))?;
    }
    Ok("200 random shapes each, bit-exact".into())
}

fn parameter_count() -> Outcome {
    let p = init_params(0, 2048, 100).map_err(|e| e.to_string())?;
    ensure(p.parameter_count() == 205_001, format!("parameter count {}", p.parameter_count()))?;
    ensure(p.first_layer_parameter_count() == 204_900, "first layer count")?;
    let cfg = RunConfig::from_json(
        r#"{"method": "delift_se", "u": 0.5, "train": {"epochs": 1}, "synthetic": {"m": 6, "n": 6, "dim": 1024}}"#,
    )
    .map_err(|e| e.to_string())?;
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let report = Run::new(cfg, dir.path(), None).and_then(|r| r.pipeline()).map_err(|e| e.to_string())?;
    ensure(report.network.parameter_count == 205_001, "report parameter count")?;
    ensure(report.network.first_layer_parameter_count == 204_900, "report first-layer count")?;
    let text = report.render_text();
    ensure(
        text.contains("205001 parameters (204900 in the hidden layer alone)"),
        "rendered report does not surface the first-layer count",
    )?;
    Ok("205,001 total; 204,900 reported as the hidden-layer-only count".into())
}

type Criterion = (&'static str, fn() -> Outcome, Duration);

fn main() {
    let criteria: [Criterion; 8] = [
        ("1 gradient correctness", gradient_correctness, Duration::from_secs(5)),
        ("2 submodular selection", submodular_selection, Duration::from_secs(30)),
        ("3 quadrant generalization", quadrant_generalization, Duration::from_secs(180)),
        ("4 cost accounting", cost_accounting, Duration::from_secs(60)),
        ("5 unit identities", unit_identities, Duration::from_secs(1)),
        ("6 pipeline determinism", determinism, Duration::from_secs(60)),
        ("7 format round-trips", format_round_trips, Duration::from_secs(5)),
        ("8 parameter count", parameter_count, Duration::from_secs(60)),
    ];
    let mut failures = 0;
    for (name, check, limit) in criteria {
        let start = Instant::now();
        let outcome = check();
        let elapsed = start.elapsed();
        let outcome = outcome.and_then(|detail| {
            if elapsed <= limit {
                Ok(detail)
            } else {
                Err(format!("{detail}; took {elapsed:.2?}, limit {limit:?}"))
            }
        });
        match outcome {
            Ok(detail) => println!("PASS  {name:<28} {elapsed:>10.2?}  {detail}"),
            Err(why) => {
                failures += 1;
                println!("FAIL  {name:<28} {elapsed:>10.2?}  {why}");
            }
        }
    }
    if failures > 0 {
        println!("{failures} acceptance criteria failed");
        std::process::exit(1);
    }
    println!("all 8 acceptance criteria passed");
}
