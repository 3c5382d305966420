//! Learned influence estimation for instruction-tuning data curation.
//!
//! Ground-truth influence is computed on a small in-distribution slice of the
//! candidate and target datasets through metered model probes, a two-layer
//! perceptron is trained on those values, and the perceptron estimates the rest
//! of the influence matrix at a fraction of the probe cost. The estimated matrix
//! (or pointwise scores) then drives facility-location or top-k subset selection.

pub mod dataset;
pub mod error;
pub mod influence;
pub mod network;
mod par;
pub mod pipeline;
pub mod probes;
pub mod report;
pub mod rng;
pub mod selection;
pub mod synth;

pub use dataset::{DatasetPair, EmbeddingMatrix, Quadrant, QuadrantPartition, TextRecord};
pub use error::{Error, Result};
pub use influence::{InfluenceMatrix, Method, PointwiseScores};
pub use network::{MlpParams, NormStats, TrainConfig};
pub use probes::{CostLedger, LedgerSnapshot, Probe};
pub use selection::SelectionResult;
