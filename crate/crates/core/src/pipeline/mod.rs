//! End-to-end runs: valuate Q1, train and estimate, select, report.
//!
//! Each step reads and writes plain files in the run directory, so steps can
//! run as separate processes and compose to the same bytes as one pipeline.

mod config;

pub use config::{ProbeSpec, RunConfig, ScaleSpec, TrainOverrides};

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::dataset::{partition_pair, DatasetPair, Quadrant, QuadrantPartition};
use crate::error::{Error, Result};
use crate::influence::{compute_influence, compute_pointwise, InfluenceMatrix, Method, PointwiseScores};
use crate::network::{
    baseline_estimates, estimate_pairwise, estimate_pointwise, mse_by_quadrant, mse_by_split, train, Baseline,
    MlpParams, NormStats, PairwiseSamples, PointwiseSamples,
};
use crate::probes::{record_gradient_cost, CostLedger, LedgerSnapshot};
use crate::report::{emit_report, CostExtras, CostReport, MseTriple, NetworkSummary, Report, RunArtifacts, SelectionSummary};
use crate::rng;
use crate::selection::{budget_from_fraction, facility_location_greedy, normalize_kernel, topk_pointwise, topk_rowmax};

pub const Q1_FILE: &str = "q1.nnk";
pub const FULL_FILE: &str = "full.nnk";
pub const PARAMS_FILE: &str = "params.json";
pub const TRAINING_FILE: &str = "training.json";
pub const MSE_FILE: &str = "mse.json";
pub const SELECTION_FILE: &str = "selection.json";
pub const LEDGER_FILE: &str = "ledger.json";

/// Contents of `selection.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectionRecord {
    pub method: Method,
    pub selector: String,
    pub budget: usize,
    pub v: f64,
    pub indices: Vec<usize>,
    pub objective_values: Vec<f64>,
    pub seed: u64,
    /// SHA-256 of the `full.nnk` bytes the selection was made from.
    pub kernel_hash: String,
}

/// Contents of `training.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingRecord {
    pub samples: usize,
    pub epoch_mse: Vec<f64>,
    pub norm_stats: NormStats,
}

/// One run bound to its output directory.
#[derive(Debug, Clone)]
pub struct Run {
    pub config: RunConfig,
    pub out_dir: PathBuf,
    http_token: Option<String>,
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value).expect("artifact serializes");
    text.push('\n');
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| Error::Format(format!("{}: {e}", path.display())))
}

impl Run {
    pub fn new(config: RunConfig, out_dir: impl Into<PathBuf>, http_token: Option<String>) -> Result<Self> {
        config.validate()?;
        let out_dir = out_dir.into();
        fs::create_dir_all(&out_dir).map_err(|e| Error::io(&out_dir, e))?;
        Ok(Self {
            config,
            out_dir,
            http_token,
        })
    }

    pub fn path(&self, name: &str) -> PathBuf {
        self.out_dir.join(name)
    }

    fn token(&self) -> Option<&str> {
        self.http_token.as_deref()
    }

    fn setup(&self) -> Result<(DatasetPair, QuadrantPartition)> {
        let pair = self.config.load_pair()?;
        let partition = partition_pair(&pair, self.config.u, self.config.seed)?;
        Ok((pair, partition))
    }

    fn load_ledger(&self) -> Result<CostLedger> {
        let snapshot: LedgerSnapshot = read_json(&self.path(LEDGER_FILE))?;
        Ok(CostLedger::from_snapshot(&snapshot))
    }

    fn save_ledger(&self, ledger: &CostLedger) -> Result<()> {
        write_json(&self.path(LEDGER_FILE), &ledger.snapshot())
    }

    /// Ground truth for Q1 (pairwise) or the ID fine-tune samples (pointwise).
    /// Writes `q1.nnk` and a fresh `ledger.json`.
    pub fn valuate(&self) -> Result<InfluenceMatrix> {
        let (pair, partition) = self.setup()?;
        let ledger = CostLedger::new();
        let method = self.config.method;
        let q1 = ledger.time_phase("valuate", || -> Result<InfluenceMatrix> {
            match method {
                Method::SelectIt => {
                    let scales = self.config.model_scales(self.token())?;
                    compute_pointwise(&partition.id_f, &pair, &self.config.prompts, &scales, &ledger)?.to_matrix()
                }
                _ => {
                    if method == Method::Less {
                        record_gradient_cost((pair.m() + pair.n()) as u64, &ledger);
                    }
                    let probe = match method {
                        Method::Delift => Some(self.config.probe.build(self.token())?),
                        _ => None,
                    };
                    compute_influence(method, partition.quadrant_pairs(Quadrant::Q1), &pair, probe.as_deref(), &ledger)
                }
            }
        })?;
        q1.save(self.path(Q1_FILE))?;
        self.save_ledger(&ledger)?;
        Ok(q1)
    }

    /// Trains the estimator on `q1.nnk` and writes the completed matrix
    /// `full.nnk`, plus `params.json`, `training.json` and, when ground truth
    /// is available, `mse.json`.
    pub fn train_estimate(&self) -> Result<InfluenceMatrix> {
        let (pair, partition) = self.setup()?;
        let q1 = InfluenceMatrix::load(self.path(Q1_FILE))?;
        let ledger = self.load_ledger()?;
        let pairwise = self.config.method.is_pairwise();
        let expected = if pairwise { (pair.m(), pair.n()) } else { (pair.m(), 1) };
        if (q1.m(), q1.n()) != expected {
            return Err(Error::Data(format!(
                "{Q1_FILE} is {}x{}, expected {}x{}",
                q1.m(),
                q1.n(),
                expected.0,
                expected.1
            )));
        }
        let train_config = self.config.train_config();
        let (full, params, record) = if pairwise {
            self.estimate_pairwise(&pair, &partition, &q1, &ledger)?
        } else {
            self.estimate_pointwise(&pair, &partition, &q1, &ledger)?
        };
        params.save(self.path(PARAMS_FILE), &train_config.meta())?;
        write_json(&self.path(TRAINING_FILE), &record)?;
        full.save(self.path(FULL_FILE))?;
        self.save_ledger(&ledger)?;
        if let Some(truth) = self.ground_truth(&pair, &partition)? {
            let mse = self.evaluate(&params, &pair, &partition, &truth)?;
            write_json(&self.path(MSE_FILE), &mse)?;
        }
        Ok(full)
    }

    fn training_targets(
        &self,
        q1: &InfluenceMatrix,
        cells: &[(usize, usize)],
    ) -> Result<(Vec<f64>, NormStats)> {
        let raw: Vec<f64> = cells.iter().filter_map(|&(i, j)| q1.get(i, j)).map(|v| v as f64).collect();
        if raw.is_empty() {
            return Err(Error::Training(format!("{Q1_FILE} holds no valid training values (u too small?)")));
        }
        if raw.len() != cells.len() {
            return Err(Error::Coverage(format!(
                "{Q1_FILE} covers {} of {} training cells",
                raw.len(),
                cells.len()
            )));
        }
        let norm = NormStats::observe(raw.iter().copied()).expect("non-empty");
        Ok((raw.iter().map(|&t| norm.to_unit(t)).collect(), norm))
    }

    fn estimate_pairwise(
        &self,
        pair: &DatasetPair,
        partition: &QuadrantPartition,
        q1: &InfluenceMatrix,
        ledger: &CostLedger,
    ) -> Result<(InfluenceMatrix, MlpParams, TrainingRecord)> {
        let cells: Vec<(usize, usize)> = partition.quadrant_pairs(Quadrant::Q1).collect();
        let (targets, norm) = self.training_targets(q1, &cells)?;
        let samples = PairwiseSamples { pair, cells, targets };
        let outcome = ledger.time_phase("train", || train(&samples, &self.config.train_config()))?;
        let mut params = outcome.params;
        params.norm_stats = Some(norm);
        let mut full = ledger.time_phase("estimate", || {
            if self.config.pure_estimate {
                estimate_pairwise(&params, pair, (0..pair.m()).flat_map(|i| (0..pair.n()).map(move |j| (i, j))), ledger)
            } else {
                estimate_pairwise(&params, pair, partition.non_training_pairs(), ledger)
            }
        })?;
        if !self.config.pure_estimate {
            for (i, j) in partition.quadrant_pairs(Quadrant::Q1) {
                full.set(i, j, q1.get(i, j).expect("coverage checked"))?;
            }
        }
        let record = TrainingRecord {
            samples: samples.cells.len(),
            epoch_mse: outcome.epoch_mse,
            norm_stats: norm,
        };
        Ok((full, params, record))
    }

    fn estimate_pointwise(
        &self,
        pair: &DatasetPair,
        partition: &QuadrantPartition,
        q1: &InfluenceMatrix,
        ledger: &CostLedger,
    ) -> Result<(InfluenceMatrix, MlpParams, TrainingRecord)> {
        let cells: Vec<(usize, usize)> = partition.id_f.iter().map(|&i| (i, 0)).collect();
        let (targets, norm) = self.training_targets(q1, &cells)?;
        let samples = PointwiseSamples {
            embeddings: &pair.fine_tune,
            indices: partition.id_f.clone(),
            targets,
        };
        let outcome = ledger.time_phase("train", || train(&samples, &self.config.train_config()))?;
        let mut params = outcome.params;
        params.norm_stats = Some(norm);
        let wanted: Vec<usize> = if self.config.pure_estimate {
            (0..pair.m()).collect()
        } else {
            partition.ood_f.clone()
        };
        let estimated = ledger.time_phase("estimate", || {
            estimate_pointwise(&params, &pair.fine_tune, &wanted, &norm, ledger)
        })?;
        let mut scores = PointwiseScores::from_matrix(q1)?;
        if self.config.pure_estimate {
            scores = estimated;
        } else {
            for &i in &wanted {
                scores.values[i] = estimated.values[i];
                scores.valid[i] = true;
            }
        }
        let record = TrainingRecord {
            samples: samples.indices.len(),
            epoch_mse: outcome.epoch_mse,
            norm_stats: norm,
        };
        Ok((scores.to_matrix()?, params, record))
    }

    /// Full ground truth for evaluation, charged to a scratch ledger.
    fn ground_truth(&self, pair: &DatasetPair, partition: &QuadrantPartition) -> Result<Option<InfluenceMatrix>> {
        if let Some(path) = &self.config.ground_truth {
            return InfluenceMatrix::load(path).map(Some);
        }
        if !self.config.evaluate_full_truth {
            return Ok(None);
        }
        let scratch = CostLedger::new();
        let truth = match self.config.method {
            Method::SelectIt => {
                let scales = self.config.model_scales(self.token())?;
                let all: Vec<usize> = (0..pair.m()).collect();
                compute_pointwise(&all, pair, &self.config.prompts, &scales, &scratch)?.to_matrix()?
            }
            method => {
                let probe = match method {
                    Method::Delift => Some(self.config.probe.build(self.token())?),
                    _ => None,
                };
                let all = (0..partition.m()).flat_map(|i| (0..partition.n()).map(move |j| (i, j)));
                compute_influence(method, all, pair, probe.as_deref(), &scratch)?
            }
        };
        Ok(Some(truth))
    }

    fn evaluate(
        &self,
        params: &MlpParams,
        pair: &DatasetPair,
        partition: &QuadrantPartition,
        truth: &InfluenceMatrix,
    ) -> Result<BTreeMap<String, MseTriple>> {
        let scratch = CostLedger::new();
        let seed = rng::derive_seed(self.config.seed, &[b"baseline"]);
        let mut out = BTreeMap::new();
        if self.config.method.is_pairwise() {
            let all = (0..pair.m()).flat_map(|i| (0..pair.n()).map(move |j| (i, j)));
            let trained = mse_by_quadrant(&estimate_pairwise(params, pair, all, &scratch)?, truth, partition)?;
            let random = mse_by_quadrant(
                &baseline_estimates(Baseline::RandomUniform, pair.m(), pair.n(), seed),
                truth,
                partition,
            )?;
            let zero = mse_by_quadrant(
                &baseline_estimates(Baseline::PredictZero, pair.m(), pair.n(), seed),
                truth,
                partition,
            )?;
            for q in Quadrant::ALL {
                out.insert(
                    q.label().to_string(),
                    MseTriple {
                        trained: trained.get(q),
                        random_uniform: random.get(q),
                        predict_zero: zero.get(q),
                    },
                );
            }
        } else {
            let truth = PointwiseScores::from_matrix(truth)?;
            let norm = params.norm_stats.unwrap_or_else(NormStats::identity);
            let all: Vec<usize> = (0..pair.m()).collect();
            let trained = mse_by_split(
                &estimate_pointwise(params, &pair.fine_tune, &all, &norm, &scratch)?,
                &truth,
                partition,
            )?;
            let baseline = |kind| {
                PointwiseScores::from_matrix(&baseline_estimates(kind, pair.m(), 1, seed))
                    .and_then(|s| mse_by_split(&s, &truth, partition))
            };
            let random = baseline(Baseline::RandomUniform)?;
            let zero = baseline(Baseline::PredictZero)?;
            out.insert(
                "ID".into(),
                MseTriple {
                    trained: trained.0,
                    random_uniform: random.0,
                    predict_zero: zero.0,
                },
            );
            out.insert(
                "OOD".into(),
                MseTriple {
                    trained: trained.1,
                    random_uniform: random.1,
                    predict_zero: zero.1,
                },
            );
        }
        Ok(out)
    }

    /// Selects `⌈v·M⌉` fine-tune rows from `full.nnk` and writes
    /// `selection.json`.
    pub fn select(&self) -> Result<SelectionRecord> {
        let path = self.path(FULL_FILE);
        let bytes = fs::read(&path).map_err(|e| Error::io(&path, e))?;
        let full = InfluenceMatrix::from_bytes(&bytes)?;
        let budget = budget_from_fraction(self.config.v, full.m())?;
        let (selector, result) = match self.config.method {
            Method::Delift | Method::DeliftSe => {
                ("facility_location", facility_location_greedy(&normalize_kernel(&full)?, budget)?)
            }
            Method::Less => ("topk_rowmax", topk_rowmax(&full, budget)?),
            Method::SelectIt => ("topk_pointwise", topk_pointwise(&PointwiseScores::from_matrix(&full)?, budget)?),
        };
        let record = SelectionRecord {
            method: self.config.method,
            selector: selector.into(),
            budget,
            v: self.config.v,
            indices: result.indices,
            objective_values: result.objective_values,
            seed: self.config.seed,
            kernel_hash: rng::sha256_hex(&bytes),
        };
        write_json(&self.path(SELECTION_FILE), &record)?;
        Ok(record)
    }

    /// Assembles `report.json` and `report.txt` from the step artifacts.
    pub fn report(&self) -> Result<Report> {
        let pair = self.config.load_pair()?;
        let ledger: LedgerSnapshot = read_json(&self.path(LEDGER_FILE))?;
        let extras = CostExtras {
            prompts: self.config.prompts.len(),
            scales: self.config.scales.len().max(1),
        };
        let mut cost = CostReport::new(self.config.method, pair.m(), pair.n(), self.config.u, extras, ledger)?
            .with_retries(self.config.max_attempts());
        if let Some(costs) = self.config.call_costs {
            cost = cost.with_call_costs(costs);
        }
        let optional = |name: &str| -> Result<Option<PathBuf>> {
            let path = self.path(name);
            Ok(path.exists().then_some(path))
        };
        let network = match optional(PARAMS_FILE)? {
            Some(path) => {
                let (params, _) = MlpParams::load(path)?;
                let training: Option<TrainingRecord> = optional(TRAINING_FILE)?.map(|p| read_json(&p)).transpose()?;
                Some(NetworkSummary {
                    in_dim: params.in_dim,
                    hidden: params.hidden,
                    parameter_count: params.parameter_count(),
                    first_layer_parameter_count: params.first_layer_parameter_count(),
                    final_training_mse: training.and_then(|t| t.epoch_mse.last().copied()),
                })
            }
            None => None,
        };
        let selection = optional(SELECTION_FILE)?
            .map(|p| read_json::<SelectionRecord>(&p))
            .transpose()?
            .map(|s| SelectionSummary {
                method: s.method,
                selector: s.selector,
                budget: s.budget,
                selected: s.indices.len(),
                final_objective: s.objective_values.last().copied(),
                kernel_hash: s.kernel_hash,
            });
        let quadrant_mse = optional(MSE_FILE)?.map(|p| read_json(&p)).transpose()?;
        let config_hash = self.config.content_hash();
        let artifacts = RunArtifacts {
            run_id: Some(format!("{}-u{}-v{}", &config_hash[..12], self.config.u, self.config.v)),
            config_hash: Some(config_hash),
            config: Some(serde_json::to_value(&self.config).expect("config serializes")),
            quadrant_mse,
            cost: Some(cost),
            selection,
            network,
        };
        emit_report(&artifacts, &self.out_dir)
    }

    pub fn pipeline(&self) -> Result<Report> {
        self.valuate()?;
        self.train_estimate()?;
        self.select()?;
        self.report()
    }
}

/// One entry of `sweep.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepEntry {
    pub u: f64,
    pub v: f64,
    pub dir: String,
    pub savings_ratio: f64,
    pub ledger_pass: bool,
    pub final_objective: Option<f64>,
}

/// Runs the full pipeline, once per `(u, v)` combination when sweep lists are
/// given. Sweep cells go to `u{u}_v{v}` subdirectories and are summarized in
/// `sweep.json`.
pub fn run_all(config: &RunConfig, out_dir: impl AsRef<Path>, http_token: Option<String>) -> Result<Vec<Report>> {
    config.validate()?;
    let out_dir = out_dir.as_ref();
    if config.sweep_u.is_empty() && config.sweep_v.is_empty() {
        let report = Run::new(config.clone(), out_dir, http_token)?.pipeline()?;
        return Ok(vec![report]);
    }
    let us = if config.sweep_u.is_empty() { vec![config.u] } else { config.sweep_u.clone() };
    let vs = if config.sweep_v.is_empty() { vec![config.v] } else { config.sweep_v.clone() };
    let mut reports = Vec::new();
    let mut entries = Vec::new();
    for &u in &us {
        for &v in &vs {
            let mut cell = config.clone();
            cell.u = u;
            cell.v = v;
            cell.sweep_u.clear();
            cell.sweep_v.clear();
            let dir = format!("u{u}_v{v}");
            let report = Run::new(cell, out_dir.join(&dir), http_token.clone())?.pipeline()?;
            entries.push(SweepEntry {
                u,
                v,
                dir,
                savings_ratio: report.cost.savings_ratio,
                ledger_pass: report.ledger_check.pass,
                final_objective: report.selection.final_objective,
            });
            reports.push(report);
        }
    }
    fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    write_json(&out_dir.join("sweep.json"), &entries)?;
    Ok(reports)
}
