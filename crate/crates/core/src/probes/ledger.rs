use std::collections::BTreeMap;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Mutex;
use std::time::Instant;

use serde::{Deserialize, Serialize};

/// Run-wide cost counters: probe forwards (F units), probe backwards (B units)
/// and forwards through the small estimator, plus wall time per phase.
#[derive(Debug, Default)]
pub struct CostLedger {
    forward_calls: AtomicU64,
    backward_calls: AtomicU64,
    estimator_forwards: AtomicU64,
    wall_ms: Mutex<BTreeMap<String, f64>>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct LedgerSnapshot {
    pub forward_calls: u64,
    pub backward_calls: u64,
    pub estimator_forwards: u64,
    pub wall_ms: BTreeMap<String, f64>,
}

impl CostLedger {
    pub fn new() -> Self {
        Self::default()
    }

    /// Resumes counting from a persisted snapshot.
    pub fn from_snapshot(snapshot: &LedgerSnapshot) -> Self {
        Self {
            forward_calls: AtomicU64::new(snapshot.forward_calls),
            backward_calls: AtomicU64::new(snapshot.backward_calls),
            estimator_forwards: AtomicU64::new(snapshot.estimator_forwards),
            wall_ms: Mutex::new(snapshot.wall_ms.clone()),
        }
    }

    pub fn record_forward(&self) {
        self.forward_calls.fetch_add(1, Ordering::Relaxed);
    }

    pub fn record_backward(&self, n: u64) {
        self.backward_calls.fetch_add(n, Ordering::Relaxed);
    }

    pub fn record_estimator(&self, n: u64) {
        self.estimator_forwards.fetch_add(n, Ordering::Relaxed);
    }

    pub fn forward_calls(&self) -> u64 {
        self.forward_calls.load(Ordering::Relaxed)
    }

    pub fn backward_calls(&self) -> u64 {
        self.backward_calls.load(Ordering::Relaxed)
    }

    pub fn estimator_forwards(&self) -> u64 {
        self.estimator_forwards.load(Ordering::Relaxed)
    }

    pub fn add_wall_ms(&self, phase: &str, ms: f64) {
        let mut wall = self.wall_ms.lock().expect("ledger mutex poisoned");
        *wall.entry(phase.to_string()).or_default() += ms;
    }

    /// Runs `f`, charging its monotonic wall time to `phase`.
    pub fn time_phase<R>(&self, phase: &str, f: impl FnOnce() -> R) -> R {
        let start = Instant::now();
        let out = f();
        self.add_wall_ms(phase, start.elapsed().as_secs_f64() * 1e3);
        out
    }

    pub fn snapshot(&self) -> LedgerSnapshot {
        LedgerSnapshot {
            forward_calls: self.forward_calls(),
            backward_calls: self.backward_calls(),
            estimator_forwards: self.estimator_forwards(),
            wall_ms: self.wall_ms.lock().expect("ledger mutex poisoned").clone(),
        }
    }
}

/// Charges the upstream backward passes that produced `n` ingested gradient
/// feature vectors.
pub fn record_gradient_cost(n: u64, ledger: &CostLedger) {
    ledger.record_backward(n);
}
