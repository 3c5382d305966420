use rand::Rng;

use crate::rng;

/// Dense Rademacher projection `R^input_dim -> R^d`, entries ±1/√d.
///
/// Signs are drawn row-major from a ChaCha stream keyed by the seed, so the
/// same `(seed, input_dim, d)` always yields the same matrix.
#[derive(Debug, Clone)]
pub struct RademacherProjection {
    input_dim: usize,
    d: usize,
    signs: Vec<u64>,
}

impl RademacherProjection {
    pub fn new(seed: u64, input_dim: usize, d: usize) -> Self {
        assert!(d >= 1, "projection dim must be positive");
        let bits = input_dim * d;
        let mut stream = rng::derived(seed, "rademacher");
        let signs = (0..bits.div_ceil(64)).map(|_| stream.random::<u64>()).collect();
        Self { input_dim, d, signs }
    }

    pub fn output_dim(&self) -> usize {
        self.d
    }

    fn negative(&self, bit: usize) -> bool {
        self.signs[bit / 64] >> (bit % 64) & 1 == 1
    }

    pub fn apply(&self, vec: &[f64]) -> Vec<f64> {
        assert_eq!(vec.len(), self.input_dim, "projection input dim");
        let scale = 1.0 / (self.d as f64).sqrt();
        (0..self.d)
            .map(|r| {
                let base = r * self.input_dim;
                let sum: f64 = vec
                    .iter()
                    .enumerate()
                    .map(|(c, x)| if self.negative(base + c) { -x } else { *x })
                    .sum();
                sum * scale
            })
            .collect()
    }
}

/// Seeded Rademacher projection of a single vector to `d` dimensions.
pub fn random_project(vec: &[f64], seed: u64, d: usize) -> Vec<f64> {
    RademacherProjection::new(seed, vec.len(), d).apply(vec)
}
