use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::network::NormStats;

/// Magic bytes of the binary influence-matrix format.
pub const MATRIX_MAGIC: &[u8; 8] = b"NNCIFTK\0";
const HEADER_LEN: usize = 16;

/// `m × n` influence values over D_F × D_T with a per-cell validity mask, so a
/// partially valuated matrix (one quadrant, say) can be stored as-is.
#[derive(Debug, Clone, PartialEq)]
pub struct InfluenceMatrix {
    m: usize,
    n: usize,
    values: Vec<f32>,
    mask: Vec<bool>,
}

impl InfluenceMatrix {
    /// All cells invalid.
    pub fn empty(m: usize, n: usize) -> Self {
        Self {
            m,
            n,
            values: vec![0.0; m * n],
            mask: vec![false; m * n],
        }
    }

    /// All cells valid.
    pub fn full(m: usize, n: usize, values: Vec<f32>) -> Result<Self> {
        Self::with_mask(m, n, values, vec![true; m * n])
    }

    pub fn with_mask(m: usize, n: usize, values: Vec<f32>, mask: Vec<bool>) -> Result<Self> {
        if values.len() != m * n || mask.len() != m * n {
            return Err(Error::Argument(format!(
                "{} values / {} mask flags for a {m}x{n} matrix",
                values.len(),
                mask.len()
            )));
        }
        if let Some(k) = (0..m * n).find(|&k| mask[k] && !values[k].is_finite()) {
            return Err(Error::Data(format!("non-finite value at ({}, {})", k / n.max(1), k % n.max(1))));
        }
        Ok(Self { m, n, values, mask })
    }

    pub fn from_fn(m: usize, n: usize, mut f: impl FnMut(usize, usize) -> f32) -> Result<Self> {
        let values = (0..m * n).map(|k| f(k / n, k % n)).collect();
        Self::full(m, n, values)
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn values(&self) -> &[f32] {
        &self.values
    }

    pub fn mask(&self) -> &[bool] {
        &self.mask
    }

    pub fn row(&self, i: usize) -> &[f32] {
        &self.values[i * self.n..(i + 1) * self.n]
    }

    pub fn get(&self, i: usize, j: usize) -> Option<f32> {
        let k = i * self.n + j;
        (i < self.m && j < self.n && self.mask[k]).then(|| self.values[k])
    }

    pub fn is_valid(&self, i: usize, j: usize) -> bool {
        i < self.m && j < self.n && self.mask[i * self.n + j]
    }

    /// Writes a finite value and marks the cell valid.
    pub fn set(&mut self, i: usize, j: usize, value: f32) -> Result<()> {
        if i >= self.m || j >= self.n {
            return Err(Error::Argument(format!("cell ({i}, {j}) outside {}x{}", self.m, self.n)));
        }
        if !value.is_finite() {
            return Err(Error::Data(format!("non-finite value for cell ({i}, {j})")));
        }
        let k = i * self.n + j;
        self.values[k] = value;
        self.mask[k] = true;
        Ok(())
    }

    pub fn valid_count(&self) -> usize {
        self.mask.iter().filter(|v| **v).count()
    }

    pub fn is_fully_valid(&self) -> bool {
        self.mask.iter().all(|v| *v)
    }

    /// `(min, max)` over valid cells.
    pub fn valid_range(&self) -> Option<(f32, f32)> {
        self.values
            .iter()
            .zip(&self.mask)
            .filter(|(_, ok)| **ok)
            .fold(None, |acc, (&v, _)| match acc {
                None => Some((v, v)),
                Some((lo, hi)) => Some((lo.min(v), hi.max(v))),
            })
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let cells = self.m * self.n;
        let mut out = Vec::with_capacity(HEADER_LEN + cells * 4 + cells.div_ceil(8));
        out.extend_from_slice(MATRIX_MAGIC);
        out.extend_from_slice(&(self.m as u32).to_le_bytes());
        out.extend_from_slice(&(self.n as u32).to_le_bytes());
        for v in &self.values {
            out.extend_from_slice(&v.to_le_bytes());
        }
        let mut bits = vec![0u8; cells.div_ceil(8)];
        for (k, _) in self.mask.iter().enumerate().filter(|(_, ok)| **ok) {
            bits[k / 8] |= 1 << (k % 8);
        }
        out.extend_from_slice(&bits);
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        if bytes.len() < HEADER_LEN || &bytes[..8] != MATRIX_MAGIC {
            return Err(Error::Format("missing NNCIFTK magic or short header".into()));
        }
        let m = u32::from_le_bytes(bytes[8..12].try_into().unwrap()) as usize;
        let n = u32::from_le_bytes(bytes[12..16].try_into().unwrap()) as usize;
        let cells = m
            .checked_mul(n)
            .ok_or_else(|| Error::Format("header dimensions overflow".into()))?;
        let expected = cells * 4 + cells.div_ceil(8);
        let payload = &bytes[HEADER_LEN..];
        if payload.len() != expected {
            return Err(Error::Length {
                expected,
                found: payload.len(),
            });
        }
        let (raw, bits) = payload.split_at(cells * 4);
        let values = raw
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
            .collect();
        let mask: Vec<bool> = (0..cells).map(|k| bits[k / 8] & (1 << (k % 8)) != 0).collect();
        if cells % 8 != 0 && bits[cells / 8] >> (cells % 8) != 0 {
            return Err(Error::Format("mask padding bits are set".into()));
        }
        Self::with_mask(m, n, values, mask)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        fs::write(path, self.to_bytes()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        Self::from_bytes(&fs::read(path).map_err(|e| Error::io(path, e))?)
    }
}

/// One score per D_F sample, with validity flags for partial valuation.
#[derive(Debug, Clone, PartialEq)]
pub struct PointwiseScores {
    pub values: Vec<f64>,
    pub valid: Vec<bool>,
    pub norm_stats: Option<NormStats>,
}

impl PointwiseScores {
    pub fn empty(m: usize) -> Self {
        Self {
            values: vec![0.0; m],
            valid: vec![false; m],
            norm_stats: None,
        }
    }

    pub fn full(values: Vec<f64>) -> Self {
        let valid = vec![true; values.len()];
        Self {
            values,
            valid,
            norm_stats: None,
        }
    }

    pub fn m(&self) -> usize {
        self.values.len()
    }

    pub fn valid_indices(&self) -> impl Iterator<Item = usize> + '_ {
        self.valid.iter().enumerate().filter(|(_, ok)| **ok).map(|(i, _)| i)
    }

    /// Rescales valid values into [0,1] by their observed range and records it.
    pub fn normalize(&mut self) -> Option<NormStats> {
        let stats = NormStats::observe(self.valid_indices().map(|i| self.values[i]))?;
        for i in 0..self.m() {
            if self.valid[i] {
                self.values[i] = stats.to_unit(self.values[i]);
            }
        }
        self.norm_stats = Some(stats);
        Some(stats)
    }

    /// Stored as an `m × 1` matrix.
    pub fn to_matrix(&self) -> Result<InfluenceMatrix> {
        InfluenceMatrix::with_mask(
            self.m(),
            1,
            self.values.iter().map(|v| *v as f32).collect(),
            self.valid.clone(),
        )
    }

    pub fn from_matrix(matrix: &InfluenceMatrix) -> Result<Self> {
        if matrix.n() != 1 {
            return Err(Error::Format(format!(
                "pointwise scores are stored as m x 1, found {}x{}",
                matrix.m(),
                matrix.n()
            )));
        }
        Ok(Self {
            values: matrix.values().iter().map(|v| *v as f64).collect(),
            valid: matrix.mask().to_vec(),
            norm_stats: None,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn masked_round_trip() {
        let mut k = InfluenceMatrix::empty(3, 3);
        k.set(0, 1, -0.25).unwrap();
        k.set(2, 2, 0.75).unwrap();
        let back = InfluenceMatrix::from_bytes(&k.to_bytes()).unwrap();
        assert_eq!(back, k);
        assert_eq!(back.valid_count(), 2);
        assert_eq!(back.get(0, 1), Some(-0.25));
        assert_eq!(back.get(0, 0), None);
        // 16 header + 9 floats + 2 mask bytes
        assert_eq!(k.to_bytes().len(), 16 + 36 + 2);
    }

    #[test]
    fn corrupt_files_rejected() {
        let k = InfluenceMatrix::full(2, 2, vec![0.0; 4]).unwrap();
        let mut bytes = k.to_bytes();
        bytes.pop();
        assert!(matches!(InfluenceMatrix::from_bytes(&bytes), Err(Error::Length { .. })));
        let mut bytes = k.to_bytes();
        *bytes.last_mut().unwrap() |= 0x80;
        assert!(matches!(InfluenceMatrix::from_bytes(&bytes), Err(Error::Format(_))));
        assert!(InfluenceMatrix::from_bytes(b"NNCIFT1\0\0\0\0\0\0\0\0\0").is_err());
    }

    #[test]
    fn set_rejects_out_of_range() {
        let mut k = InfluenceMatrix::empty(1, 1);
        assert!(k.set(1, 0, 0.0).is_err());
        assert!(k.set(0, 0, f32::INFINITY).is_err());
    }

    #[test]
    fn pointwise_normalization() {
        let mut s = PointwiseScores::full(vec![2.0, 4.0, 3.0]);
        let stats = s.normalize().unwrap();
        assert_eq!((stats.min, stats.max), (2.0, 4.0));
        assert_eq!(s.values, vec![0.0, 1.0, 0.5]);
        let m = s.to_matrix().unwrap();
        assert_eq!((m.m(), m.n()), (3, 1));
    }
}
