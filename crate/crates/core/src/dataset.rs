//! Embedding storage, dataset pairing and the seeded ID/OOD quadrant split.

use std::fs;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng;

/// Magic bytes of the binary embedding format.
pub const EMB_MAGIC: &[u8; 8] = b"NNCIFT1\0";
const HEADER_LEN: usize = 16;

/// Row-major table of fixed-dimension `f32` vectors, one row per sample.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingMatrix {
    count: usize,
    dim: usize,
    rows: Vec<f32>,
}

impl EmbeddingMatrix {
    pub fn new(count: usize, dim: usize, rows: Vec<f32>) -> Result<Self> {
        if dim == 0 {
            return Err(Error::Argument("embedding dim must be positive".into()));
        }
        if rows.len() != count * dim {
            return Err(Error::Argument(format!(
                "{} values do not fill {count} rows of dim {dim}",
                rows.len()
            )));
        }
        if let Some(pos) = rows.iter().position(|v| !v.is_finite()) {
            return Err(Error::Data(format!(
                "non-finite value at row {}, column {}",
                pos / dim,
                pos % dim
            )));
        }
        Ok(Self { count, dim, rows })
    }

    pub fn from_rows(dim: usize, rows: &[Vec<f32>]) -> Result<Self> {
        let mut flat = Vec::with_capacity(rows.len() * dim);
        for (idx, row) in rows.iter().enumerate() {
            if row.len() != dim {
                return Err(Error::Argument(format!(
                    "row {idx} has {} entries, expected {dim}",
                    row.len()
                )));
            }
            flat.extend_from_slice(row);
        }
        Self::new(rows.len(), dim, flat)
    }

    pub fn empty(dim: usize) -> Result<Self> {
        Self::new(0, dim, Vec::new())
    }

    pub fn count(&self) -> usize {
        self.count
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn row(&self, idx: usize) -> Option<&[f32]> {
        (idx < self.count).then(|| &self.rows[idx * self.dim..(idx + 1) * self.dim])
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f32]> {
        self.rows.chunks_exact(self.dim)
    }

    pub fn as_slice(&self) -> &[f32] {
        &self.rows
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(HEADER_LEN + self.rows.len() * 4);
        out.extend_from_slice(EMB_MAGIC);
        out.extend_from_slice(&(self.count as u32).to_le_bytes());
        out.extend_from_slice(&(self.dim as u32).to_le_bytes());
        for v in &self.rows {
            out.extend_from_slice(&v.to_le_bytes());
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        if bytes.len() < HEADER_LEN || &bytes[..8] != EMB_MAGIC {
            return Err(Error::Format("missing NNCIFT1 magic or short header".into()));
        }
        let count = u32::from_le_bytes(bytes[8..12].try_into().unwrap()) as usize;
        let dim = u32::from_le_bytes(bytes[12..16].try_into().unwrap()) as usize;
        if dim == 0 {
            return Err(Error::Format("header declares dim 0".into()));
        }
        let expected = count
            .checked_mul(dim)
            .and_then(|n| n.checked_mul(4))
            .ok_or_else(|| Error::Format("header dimensions overflow".into()))?;
        let payload = &bytes[HEADER_LEN..];
        if payload.len() != expected {
            return Err(Error::Length {
                expected,
                found: payload.len(),
            });
        }
        let rows = payload
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
            .collect();
        Self::new(count, dim, rows)
    }
}

#[derive(Serialize, Deserialize)]
struct JsonRow {
    idx: usize,
    vec: Vec<f32>,
}

/// Loads an embedding file, either the binary format or JSON lines
/// (`{"idx": 0, "vec": [...]}` per line, ascending idx without gaps).
pub fn load_embeddings(path: impl AsRef<Path>) -> Result<EmbeddingMatrix> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    if bytes.starts_with(&EMB_MAGIC[..7]) {
        return EmbeddingMatrix::from_bytes(&bytes);
    }
    parse_embedding_jsonl(&bytes)
}

fn parse_embedding_jsonl(bytes: &[u8]) -> Result<EmbeddingMatrix> {
    let text = std::str::from_utf8(bytes)
        .map_err(|_| Error::Format("neither NNCIFT1 binary nor UTF-8 JSON lines".into()))?;
    let mut dim = None;
    let mut flat = Vec::new();
    let mut count = 0;
    for (lineno, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let row: JsonRow = serde_json::from_str(line)
            .map_err(|e| Error::Format(format!("line {}: {e}", lineno + 1)))?;
        if row.idx != count {
            return Err(Error::Format(format!(
                "line {}: idx {} out of order, expected {count}",
                lineno + 1,
                row.idx
            )));
        }
        let d = *dim.get_or_insert(row.vec.len());
        if row.vec.len() != d {
            return Err(Error::Format(format!(
                "line {}: vector has {} entries, expected {d}",
                lineno + 1,
                row.vec.len()
            )));
        }
        flat.extend(row.vec);
        count += 1;
    }
    let dim = dim.ok_or_else(|| Error::Format("JSON-lines file has no rows".into()))?;
    EmbeddingMatrix::new(count, dim, flat)
}

pub fn save_embeddings(matrix: &EmbeddingMatrix, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, matrix.to_bytes()).map_err(|e| Error::io(path, e))
}

pub fn save_embeddings_jsonl(matrix: &EmbeddingMatrix, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut out = Vec::new();
    for (idx, row) in matrix.rows().enumerate() {
        let line = serde_json::to_string(&JsonRow {
            idx,
            vec: row.to_vec(),
        })
        .expect("finite floats serialize");
        writeln!(out, "{line}").expect("writing to a Vec");
    }
    fs::write(path, out).map_err(|e| Error::io(path, e))
}

/// Prompt/response text of one sample.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TextRecord {
    pub prompt: String,
    pub response: String,
}

impl TextRecord {
    /// Prompt and response joined as one unit, the form that gets embedded.
    pub fn joined(&self) -> String {
        format!("{}\n{}", self.prompt, self.response)
    }
}

#[derive(Deserialize)]
struct JsonText {
    idx: usize,
    prompt: String,
    response: String,
}

/// Loads `{"idx", "prompt", "response"}` JSON lines in ascending idx order.
pub fn load_texts(path: impl AsRef<Path>) -> Result<Vec<TextRecord>> {
    let path = path.as_ref();
    let file = fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut out = Vec::new();
    for (lineno, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let rec: JsonText = serde_json::from_str(&line)
            .map_err(|e| Error::Format(format!("{}:{}: {e}", path.display(), lineno + 1)))?;
        if rec.idx != out.len() {
            return Err(Error::Format(format!(
                "{}:{}: idx {} out of order",
                path.display(),
                lineno + 1,
                rec.idx
            )));
        }
        out.push(TextRecord {
            prompt: rec.prompt,
            response: rec.response,
        });
    }
    Ok(out)
}

/// Fine-tuning candidates (D_F, `m` rows) paired with the target set (D_T, `n` rows).
#[derive(Debug, Clone)]
pub struct DatasetPair {
    pub fine_tune: EmbeddingMatrix,
    pub target: EmbeddingMatrix,
    pub gradients: Option<(EmbeddingMatrix, EmbeddingMatrix)>,
    pub texts: Option<(Vec<TextRecord>, Vec<TextRecord>)>,
}

impl DatasetPair {
    pub fn new(fine_tune: EmbeddingMatrix, target: EmbeddingMatrix) -> Result<Self> {
        if fine_tune.dim() != target.dim() {
            return Err(Error::Argument(format!(
                "fine-tune dim {} differs from target dim {}",
                fine_tune.dim(),
                target.dim()
            )));
        }
        Ok(Self {
            fine_tune,
            target,
            gradients: None,
            texts: None,
        })
    }

    pub fn with_gradients(mut self, fine_tune: EmbeddingMatrix, target: EmbeddingMatrix) -> Result<Self> {
        if fine_tune.count() != self.m() || target.count() != self.n() {
            return Err(Error::Argument(format!(
                "gradient features have {}/{} rows, datasets have {}/{}",
                fine_tune.count(),
                target.count(),
                self.m(),
                self.n()
            )));
        }
        if fine_tune.dim() != target.dim() {
            return Err(Error::Argument("gradient feature dims differ between sides".into()));
        }
        self.gradients = Some((fine_tune, target));
        Ok(self)
    }

    pub fn with_texts(mut self, fine_tune: Vec<TextRecord>, target: Vec<TextRecord>) -> Result<Self> {
        if fine_tune.len() != self.m() || target.len() != self.n() {
            return Err(Error::Argument(format!(
                "text records have {}/{} entries, datasets have {}/{}",
                fine_tune.len(),
                target.len(),
                self.m(),
                self.n()
            )));
        }
        self.texts = Some((fine_tune, target));
        Ok(self)
    }

    pub fn m(&self) -> usize {
        self.fine_tune.count()
    }

    pub fn n(&self) -> usize {
        self.target.count()
    }

    pub fn dim(&self) -> usize {
        self.fine_tune.dim()
    }

    pub fn fine_tune_text(&self, i: usize) -> Result<&TextRecord> {
        self.texts
            .as_ref()
            .and_then(|(f, _)| f.get(i))
            .ok_or_else(|| Error::Lookup(format!("no text for fine-tune sample {i}")))
    }

    pub fn target_text(&self, j: usize) -> Result<&TextRecord> {
        self.texts
            .as_ref()
            .and_then(|(_, t)| t.get(j))
            .ok_or_else(|| Error::Lookup(format!("no text for target sample {j}")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Quadrant {
    Q1,
    Q2,
    Q3,
    Q4,
}

impl Quadrant {
    pub const ALL: [Quadrant; 4] = [Quadrant::Q1, Quadrant::Q2, Quadrant::Q3, Quadrant::Q4];

    /// Quadrant of a cell given whether its row and column are in-distribution.
    pub fn of(row_id: bool, col_id: bool) -> Self {
        match (row_id, col_id) {
            (true, true) => Quadrant::Q1,
            (true, false) => Quadrant::Q2,
            (false, true) => Quadrant::Q3,
            (false, false) => Quadrant::Q4,
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            Quadrant::Q1 => "Q1",
            Quadrant::Q2 => "Q2",
            Quadrant::Q3 => "Q3",
            Quadrant::Q4 => "Q4",
        }
    }
}

/// Seeded split of both sides into in-distribution (ID) and out-of-distribution
/// (OOD) index sets. Index sets are stored in ascending order.
#[derive(Debug, Clone, PartialEq)]
pub struct QuadrantPartition {
    pub u: f64,
    pub seed: u64,
    pub id_f: Vec<usize>,
    pub ood_f: Vec<usize>,
    pub id_t: Vec<usize>,
    pub ood_t: Vec<usize>,
    in_f: Vec<bool>,
    in_t: Vec<bool>,
}

fn split_side(count: usize, u: f64, seed: u64, label: &str) -> (Vec<usize>, Vec<usize>, Vec<bool>) {
    let mut order: Vec<usize> = (0..count).collect();
    rng::shuffle(&mut order, &mut rng::derived(seed, label));
    let cut = rng::ceil_fraction(u, count);
    let mut membership = vec![false; count];
    for &idx in &order[..cut] {
        membership[idx] = true;
    }
    let (id, ood): (Vec<usize>, Vec<usize>) = (0..count).partition(|&i| membership[i]);
    (id, ood, membership)
}

impl QuadrantPartition {
    /// Builds a partition from explicit ID sets; remaining indices become OOD.
    pub fn from_id_sets(m: usize, n: usize, id_f: &[usize], id_t: &[usize]) -> Result<Self> {
        let mut in_f = vec![false; m];
        let mut in_t = vec![false; n];
        for &i in id_f {
            *in_f
                .get_mut(i)
                .ok_or_else(|| Error::Argument(format!("ID index {i} outside [0,{m})")))? = true;
        }
        for &j in id_t {
            *in_t
                .get_mut(j)
                .ok_or_else(|| Error::Argument(format!("ID index {j} outside [0,{n})")))? = true;
        }
        let (id_f, ood_f) = (0..m).partition(|&i| in_f[i]);
        let (id_t, ood_t) = (0..n).partition(|&j| in_t[j]);
        Ok(Self {
            u: f64::NAN,
            seed: 0,
            id_f,
            ood_f,
            id_t,
            ood_t,
            in_f,
            in_t,
        })
    }

    pub fn m(&self) -> usize {
        self.in_f.len()
    }

    pub fn n(&self) -> usize {
        self.in_t.len()
    }

    pub fn is_id_f(&self, i: usize) -> bool {
        self.in_f[i]
    }

    pub fn is_id_t(&self, j: usize) -> bool {
        self.in_t[j]
    }

    pub fn quadrant_of(&self, i: usize, j: usize) -> Quadrant {
        Quadrant::of(self.in_f[i], self.in_t[j])
    }

    fn sides(&self, quadrant: Quadrant) -> (&[usize], &[usize]) {
        match quadrant {
            Quadrant::Q1 => (&self.id_f, &self.id_t),
            Quadrant::Q2 => (&self.id_f, &self.ood_t),
            Quadrant::Q3 => (&self.ood_f, &self.id_t),
            Quadrant::Q4 => (&self.ood_f, &self.ood_t),
        }
    }

    pub fn quadrant_len(&self, quadrant: Quadrant) -> usize {
        let (rows, cols) = self.sides(quadrant);
        rows.len() * cols.len()
    }

    /// Cells of one quadrant in ascending `(i, j)` order.
    pub fn quadrant_pairs(&self, quadrant: Quadrant) -> impl Iterator<Item = (usize, usize)> + '_ {
        let (rows, cols) = self.sides(quadrant);
        rows.iter()
            .flat_map(move |&i| cols.iter().map(move |&j| (i, j)))
    }

    /// Every cell outside Q1 in ascending `(i, j)` order.
    pub fn non_training_pairs(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        (0..self.m())
            .flat_map(move |i| (0..self.n()).map(move |j| (i, j)))
            .filter(move |&(i, j)| !(self.in_f[i] && self.in_t[j]))
    }
}

/// Seeded shuffle of each side; the first `⌈u·count⌉` shuffled indices are ID.
pub fn partition(m: usize, n: usize, u: f64, seed: u64) -> Result<QuadrantPartition> {
    if !(0.0..=1.0).contains(&u) {
        return Err(Error::Argument(format!("u must lie in [0,1], got {u}")));
    }
    let (id_f, ood_f, in_f) = split_side(m, u, seed, "partition/fine_tune");
    let (id_t, ood_t, in_t) = split_side(n, u, seed, "partition/target");
    Ok(QuadrantPartition {
        u,
        seed,
        id_f,
        ood_f,
        id_t,
        ood_t,
        in_f,
        in_t,
    })
}

/// Partition sized from a dataset pair.
pub fn partition_pair(pair: &DatasetPair, u: f64, seed: u64) -> Result<QuadrantPartition> {
    partition(pair.m(), pair.n(), u, seed)
}
