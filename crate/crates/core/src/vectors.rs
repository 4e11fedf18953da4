//! Word vectors in the word2vec/GloVe text layout: `word v1 v2 ...` per
//! line, with an optional `count dim` header line.

use std::collections::HashMap;
use std::fs;
use std::path::Path;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Default)]
pub struct WordVectors {
    dim: usize,
    table: HashMap<String, Vec<f64>>,
}

impl WordVectors {
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text, path)
    }

    pub fn parse(text: &str, origin: &Path) -> Result<Self> {
        let mut dim = 0;
        let mut table = HashMap::new();
        for (idx, line) in text.lines().enumerate() {
            let mut parts = line.split_whitespace();
            let Some(word) = parts.next() else { continue };
            let values: std::result::Result<Vec<f64>, _> = parts.map(str::parse).collect();
            let values =
                values.map_err(|e| Error::parse(origin, idx + 1, format!("bad number: {e}")))?;
            if idx == 0 && values.len() == 1 && word.parse::<usize>().is_ok() {
                continue;
            }
            if values.is_empty() {
                return Err(Error::parse(origin, idx + 1, "word without vector"));
            }
            if dim == 0 {
                dim = values.len();
            } else if values.len() != dim {
                return Err(Error::parse(
                    origin,
                    idx + 1,
                    format!("expected {dim} values, found {}", values.len()),
                ));
            }
            table.insert(word.to_lowercase(), values);
        }
        Ok(Self { dim, table })
    }

    pub fn from_pairs(pairs: impl IntoIterator<Item = (String, Vec<f64>)>) -> Self {
        let table: HashMap<_, _> = pairs.into_iter().collect();
        let dim = table.values().next().map_or(0, Vec::len);
        Self { dim, table }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn get(&self, word: &str) -> Option<&[f64]> {
        self.table.get(word).map(Vec::as_slice)
    }

    /// Cosine similarity of two in-vocabulary words, clipped to `[0, 1]`.
    pub fn cosine(&self, a: &str, b: &str) -> Option<f64> {
        let (x, y) = (self.get(a)?, self.get(b)?);
        let dot: f64 = x.iter().zip(y).map(|(p, q)| p * q).sum();
        let nx = x.iter().map(|v| v * v).sum::<f64>().sqrt();
        let ny = y.iter().map(|v| v * v).sum::<f64>().sqrt();
        if nx == 0.0 || ny == 0.0 {
            return Some(0.0);
        }
        Some((dot / (nx * ny)).clamp(0.0, 1.0))
    }
}
