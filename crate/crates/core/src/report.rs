//! Cost model, ledger verification and run reports.
//!
//! Counts follow this toolkit's conventions: pairwise in-context valuation
//! pays one context-free call per distinct target plus one call per cell;
//! gradient matching pays one backward per ingested feature vector; pointwise
//! scoring pays one call per sample, prompt and model scale. Estimator
//! forwards are tracked separately and never count as probe calls.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::influence::Method;
use crate::probes::LedgerSnapshot;
use crate::rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ValuationMode {
    /// Ground truth for every cell (or sample).
    Full,
    /// Ground truth only for the in-distribution slice.
    Estimated,
}

/// Sizes beyond `M` and `N` that enter a method's cost.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct CostExtras {
    pub prompts: usize,
    pub scales: usize,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct PredictedCounts {
    pub forwards: u64,
    pub backwards: u64,
}

/// Exact probe-call counts a valuation will incur.
pub fn predicted_counts(
    method: Method,
    mode: ValuationMode,
    m: usize,
    n: usize,
    u: f64,
    extras: CostExtras,
) -> Result<PredictedCounts> {
    if !(0.0..=1.0).contains(&u) {
        return Err(Error::Argument(format!("u must lie in [0,1], got {u}")));
    }
    let (rows, cols) = match mode {
        ValuationMode::Full => (m, n),
        ValuationMode::Estimated => (rng::ceil_fraction(u, m), rng::ceil_fraction(u, n)),
    };
    let (rows, cols) = (rows as u64, cols as u64);
    Ok(match method {
        Method::Delift => PredictedCounts {
            forwards: rows * cols + cols,
            backwards: 0,
        },
        Method::DeliftSe => PredictedCounts::default(),
        Method::Less => PredictedCounts {
            forwards: 0,
            backwards: (m + n) as u64,
        },
        Method::SelectIt => {
            if extras.prompts == 0 || extras.scales == 0 {
                return Err(Error::Argument("selectit cost needs prompt and scale counts".into()));
            }
            PredictedCounts {
                forwards: rows * (extras.prompts * extras.scales) as u64,
                backwards: 0,
            }
        }
    })
}

/// Probe-forward savings of estimating versus valuating everything. Zero when
/// the full valuation makes no probe forwards to begin with.
pub fn savings_ratio(estimated_forwards: u64, full_forwards: u64) -> f64 {
    if full_forwards == 0 {
        0.0
    } else {
        (1.0 - estimated_forwards as f64 / full_forwards as f64).clamp(0.0, 1.0)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CostReport {
    pub method: Method,
    pub m: usize,
    pub n: usize,
    pub u: f64,
    pub predicted_forwards: u64,
    pub predicted_backwards: u64,
    pub full_valuation_forwards: u64,
    pub full_valuation_backwards: u64,
    pub measured: LedgerSnapshot,
    pub estimator_forwards: u64,
    pub wall_ms: BTreeMap<String, f64>,
    pub savings_ratio: f64,
    /// Probe counts may exceed predictions by retried attempts (HTTP).
    pub retries_possible: bool,
    pub max_attempts: u32,
    /// Optional per-call costs to turn counts into model-size-aware units.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub weighted_cost: Option<f64>,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct CallCosts {
    pub forward: f64,
    pub backward: f64,
}

impl CostReport {
    pub fn new(
        method: Method,
        m: usize,
        n: usize,
        u: f64,
        extras: CostExtras,
        measured: LedgerSnapshot,
    ) -> Result<Self> {
        let predicted = predicted_counts(method, ValuationMode::Estimated, m, n, u, extras)?;
        let full = predicted_counts(method, ValuationMode::Full, m, n, u, extras)?;
        Ok(Self {
            method,
            m,
            n,
            u,
            predicted_forwards: predicted.forwards,
            predicted_backwards: predicted.backwards,
            full_valuation_forwards: full.forwards,
            full_valuation_backwards: full.backwards,
            estimator_forwards: measured.estimator_forwards,
            wall_ms: measured.wall_ms.clone(),
            savings_ratio: savings_ratio(measured.forward_calls, full.forwards),
            measured,
            retries_possible: false,
            max_attempts: 1,
            weighted_cost: None,
        })
    }

    pub fn with_retries(mut self, max_attempts: u32) -> Self {
        self.retries_possible = max_attempts > 1;
        self.max_attempts = max_attempts.max(1);
        self
    }

    pub fn with_call_costs(mut self, costs: CallCosts) -> Self {
        self.weighted_cost = Some(
            self.measured.forward_calls as f64 * costs.forward + self.measured.backward_calls as f64 * costs.backward,
        );
        self
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LedgerCheck {
    pub pass: bool,
    /// measured − predicted
    pub forward_diff: i64,
    pub backward_diff: i64,
}

/// Passes iff measured probe counts equal the prediction exactly. When
/// retries are possible, forwards may exceed the prediction by up to the
/// retry allowance.
pub fn verify_ledger(report: &CostReport) -> LedgerCheck {
    let forward_diff = report.measured.forward_calls as i64 - report.predicted_forwards as i64;
    let backward_diff = report.measured.backward_calls as i64 - report.predicted_backwards as i64;
    let forwards_ok = if report.retries_possible {
        let slack = report.predicted_forwards as i64 * (report.max_attempts as i64 - 1);
        (0..=slack).contains(&forward_diff)
    } else {
        forward_diff == 0
    };
    LedgerCheck {
        pass: forwards_ok && backward_diff == 0,
        forward_diff,
        backward_diff,
    }
}

/// MSE of the trained estimator and both baselines on one evaluation slice.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MseTriple {
    pub trained: Option<f64>,
    pub random_uniform: Option<f64>,
    pub predict_zero: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetworkSummary {
    pub in_dim: usize,
    pub hidden: usize,
    pub parameter_count: usize,
    /// Hidden-layer weights and biases only, without the output neuron.
    pub first_layer_parameter_count: usize,
    pub final_training_mse: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectionSummary {
    pub method: Method,
    pub selector: String,
    pub budget: usize,
    pub selected: usize,
    pub final_objective: Option<f64>,
    pub kernel_hash: String,
}

/// Everything a finished run contributes to its report.
#[derive(Debug, Clone, Default)]
pub struct RunArtifacts {
    pub run_id: Option<String>,
    pub config_hash: Option<String>,
    /// The run configuration, echoed verbatim.
    pub config: Option<serde_json::Value>,
    /// Keyed by quadrant (`Q1`..`Q4`) or split (`ID`, `OOD`).
    pub quadrant_mse: Option<BTreeMap<String, MseTriple>>,
    pub cost: Option<CostReport>,
    pub selection: Option<SelectionSummary>,
    pub network: Option<NetworkSummary>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub run_id: String,
    pub config_hash: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub config: Option<serde_json::Value>,
    pub quadrant_mse: Option<BTreeMap<String, MseTriple>>,
    pub cost: CostReport,
    pub ledger_check: LedgerCheck,
    pub selection: SelectionSummary,
    pub network: NetworkSummary,
}

impl Report {
    pub fn from_artifacts(artifacts: &RunArtifacts) -> Result<Self> {
        let mut missing = Vec::new();
        let mut need = |present: bool, name: &str| {
            if !present {
                missing.push(name.to_string());
            }
        };
        need(artifacts.run_id.is_some(), "run_id");
        need(artifacts.config_hash.is_some(), "config_hash");
        need(artifacts.cost.is_some(), "cost");
        need(artifacts.selection.is_some(), "selection");
        need(artifacts.network.is_some(), "network");
        if !missing.is_empty() {
            return Err(Error::Report(missing));
        }
        let cost = artifacts.cost.clone().unwrap();
        Ok(Self {
            run_id: artifacts.run_id.clone().unwrap(),
            config_hash: artifacts.config_hash.clone().unwrap(),
            config: artifacts.config.clone(),
            quadrant_mse: artifacts.quadrant_mse.clone(),
            ledger_check: verify_ledger(&cost),
            cost,
            selection: artifacts.selection.clone().unwrap(),
            network: artifacts.network.clone().unwrap(),
        })
    }

    pub fn render_text(&self) -> String {
        let mut out = String::new();
        let fmt = |v: Option<f64>| v.map_or_else(|| "-".to_string(), |v| format!("{v:.6}"));
        let _ = writeln!(out, "run {}  config {}", self.run_id, &self.config_hash[..12.min(self.config_hash.len())]);
        let _ = writeln!(out, "method {}  M={} N={} u={}", self.cost.method.as_str(), self.cost.m, self.cost.n, self.cost.u);
        let _ = writeln!(out);
        match &self.quadrant_mse {
            Some(mse) => {
                let _ = writeln!(out, "{:<6} {:>12} {:>14} {:>14}", "slice", "trained", "random", "predict-0");
                for (slice, t) in mse {
                    let _ = writeln!(
                        out,
                        "{:<6} {:>12} {:>14} {:>14}",
                        slice,
                        fmt(t.trained),
                        fmt(t.random_uniform),
                        fmt(t.predict_zero)
                    );
                }
            }
            None => {
                let _ = writeln!(out, "no ground truth supplied; MSE not evaluated");
            }
        }
        let c = &self.cost;
        let _ = writeln!(out);
        let _ = writeln!(out, "{:<28} {:>12} {:>12}", "cost", "forwards", "backwards");
        let _ = writeln!(out, "{:<28} {:>12} {:>12}", "full valuation (predicted)", c.full_valuation_forwards, c.full_valuation_backwards);
        let _ = writeln!(out, "{:<28} {:>12} {:>12}", "this run (predicted)", c.predicted_forwards, c.predicted_backwards);
        let _ = writeln!(out, "{:<28} {:>12} {:>12}", "this run (measured)", c.measured.forward_calls, c.measured.backward_calls);
        let _ = writeln!(out, "{:<28} {:>12}", "estimator forwards", c.estimator_forwards);
        let _ = writeln!(out, "probe-forward savings {:.4}", c.savings_ratio);
        let _ = writeln!(
            out,
            "ledger check {} (forward diff {:+}, backward diff {:+})",
            if self.ledger_check.pass { "PASS" } else { "FAIL" },
            self.ledger_check.forward_diff,
            self.ledger_check.backward_diff
        );
        for (phase, ms) in &c.wall_ms {
            let _ = writeln!(out, "wall {phase:<16} {ms:>10.1} ms");
        }
        let n = &self.network;
        let _ = writeln!(out);
        let _ = writeln!(
            out,
            "estimator {}->{}->1: {} parameters ({} in the hidden layer alone)",
            n.in_dim, n.hidden, n.parameter_count, n.first_layer_parameter_count
        );
        let s = &self.selection;
        let _ = writeln!(
            out,
            "selection {} via {}: {} of budget {}, objective {}",
            s.method.as_str(),
            s.selector,
            s.selected,
            s.budget,
            fmt(s.final_objective)
        );
        out
    }
}

/// Writes `report.json` and `report.txt` into `dir`.
pub fn emit_report(artifacts: &RunArtifacts, dir: impl AsRef<Path>) -> Result<Report> {
    let dir = dir.as_ref();
    let report = Report::from_artifacts(artifacts)?;
    let mut json = serde_json::to_string_pretty(&report).expect("report serializes");
    json.push('\n');
    let path = dir.join("report.json");
    fs::write(&path, json).map_err(|e| Error::io(&path, e))?;
    let path = dir.join("report.txt");
    fs::write(&path, report.render_text()).map_err(|e| Error::io(&path, e))?;
    Ok(report)
}
