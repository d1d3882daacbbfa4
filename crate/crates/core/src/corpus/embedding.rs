use std::fs::File;
use std::io::{BufRead, BufReader};
use std::path::Path;

use super::vocab::Vocab;
use crate::error::{bail, Result};
use crate::numeric::{Rng, Tensor};

/// Word-embedding matrix, one row per vocabulary id.
#[derive(Clone, Debug, PartialEq)]
pub struct EmbeddingTable {
    dim: usize,
    data: Vec<f64>,
}

const INIT_RANGE: f64 = 0.1;

impl EmbeddingTable {
    pub fn new(rows: usize, dim: usize, data: Vec<f64>) -> Result<Self> {
        if dim == 0 {
            bail!(Argument, "embedding dim must be positive");
        }
        if data.len() != rows * dim {
            bail!(Argument, "embedding data does not match {rows} x {dim}");
        }
        Ok(Self { dim, data })
    }

    /// Rows drawn uniformly from `[-0.1, 0.1]`.
    pub fn random(rows: usize, dim: usize, rng: &mut Rng) -> Result<Self> {
        let data = (0..rows * dim)
            .map(|_| rng.uniform_range(-INIT_RANGE, INIT_RANGE))
            .collect();
        Self::new(rows, dim, data)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn rows(&self) -> usize {
        self.data.len() / self.dim
    }

    pub fn row(&self, id: usize) -> &[f64] {
        &self.data[id * self.dim..(id + 1) * self.dim]
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn to_tensor(&self) -> Tensor {
        Tensor::matrix(self.rows(), self.dim, self.data.clone()).expect("consistent shape")
    }
}

/// Loads pretrained vectors in the common text layout (`token v1 .. vdim`
/// per line). Every vocabulary row is first filled from `rng` so that rows
/// missing from the file, and the reserved rows, are reproducible by seed.
pub fn load_embeddings(path: &Path, vocab: &Vocab, dim: usize, rng: &mut Rng) -> Result<EmbeddingTable> {
    let mut table = EmbeddingTable::random(vocab.len(), dim, rng)?;
    let reader = BufReader::new(File::open(path)?);
    let mut found = 0usize;
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        let mut fields = line.split_whitespace();
        let Some(token) = fields.next() else {
            continue;
        };
        let values: Vec<&str> = fields.collect();
        if values.len() != dim {
            bail!(
                Format,
                "{}:{}: expected {} values after the token, found {}",
                path.display(),
                i + 1,
                dim,
                values.len()
            );
        }
        if !vocab.contains(token) {
            continue;
        }
        let id = vocab.id(token);
        let row = &mut table.data[id * dim..(id + 1) * dim];
        for (slot, v) in row.iter_mut().zip(values) {
            *slot = v.parse().map_err(|_| {
                crate::Error::Format(format!("{}:{}: bad number `{v}`", path.display(), i + 1))
            })?;
        }
        found += 1;
    }
    log::info!(
        "loaded {found} of {} vocabulary vectors from {}",
        vocab.len(),
        path.display()
    );
    Ok(table)
}
