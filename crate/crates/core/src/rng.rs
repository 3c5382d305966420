//! Seeded randomness shared by every stage of the pipeline.
//!
//! All streams are ChaCha8 keyed by a 64-bit seed, so runs are reproducible
//! across platforms. Independent streams are derived from a base seed and a
//! label through SHA-256 instead of being drawn from one generator, which keeps
//! each stage stable when another stage changes how many numbers it consumes.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

pub type SeededRng = ChaCha8Rng;

pub fn seeded(seed: u64) -> SeededRng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Derives an independent 64-bit seed from `seed` and a list of byte labels.
pub fn derive_seed(seed: u64, labels: &[&[u8]]) -> u64 {
    let mut hasher = Sha256::new();
    hasher.update(seed.to_le_bytes());
    for label in labels {
        hasher.update((label.len() as u64).to_le_bytes());
        hasher.update(label);
    }
    let digest = hasher.finalize();
    u64::from_le_bytes(digest[..8].try_into().expect("digest is 32 bytes"))
}

pub fn derived(seed: u64, label: &str) -> SeededRng {
    seeded(derive_seed(seed, &[label.as_bytes()]))
}

/// In-place Fisher–Yates shuffle.
pub fn shuffle<T>(items: &mut [T], rng: &mut SeededRng) {
    for i in (1..items.len()).rev() {
        let j = rng.random_range(0..=i);
        items.swap(i, j);
    }
}

/// `⌈fraction·count⌉`, snapping products that are within rounding noise of an
/// integer (0.3·15000 must give 4500, not 4501).
pub fn ceil_fraction(fraction: f64, count: usize) -> usize {
    let product = fraction * count as f64;
    let nearest = product.round();
    let snapped = if (product - nearest).abs() <= 1e-9 * nearest.abs().max(1.0) {
        nearest
    } else {
        product.ceil()
    };
    (snapped.max(0.0) as usize).min(count)
}

/// Hex-encoded SHA-256 of `bytes`.
pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes)
        .iter()
        .map(|b| format!("{b:02x}"))
        .collect()
}
