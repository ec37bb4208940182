//! Block-partitioned parameters.
//!
//! A model's parameter vector is split into named blocks, one per tensor
//! (each weight matrix and each bias vector is its own block). Norms and
//! trust ratios are always computed per block over the flattened values.

use std::collections::HashSet;
use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const CHECKPOINT_MAGIC: &str = "LPV1";

/// Vector norm used for the layerwise parameter and update norms.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NormKind {
    L1,
    #[default]
    L2,
    #[serde(alias = "linf")]
    LInf,
}

/// Norm of a flattened block, reduced left to right so results are
/// bit-reproducible.
pub fn block_norm(values: &[f64], kind: NormKind) -> f64 {
    match kind {
        NormKind::L1 => values.iter().fold(0.0, |acc, v| acc + v.abs()),
        NormKind::L2 => values.iter().fold(0.0, |acc, v| acc + v * v).sqrt(),
        NormKind::LInf => values.iter().fold(0.0, |acc: f64, v| acc.max(v.abs())),
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ParamBlock {
    name: String,
    shape: Vec<usize>,
    values: Vec<f64>,
}

impl ParamBlock {
    pub fn new(name: impl Into<String>, shape: Vec<usize>, values: Vec<f64>) -> Result<Self> {
        let name = name.into();
        validate_name(&name)?;
        if shape.is_empty() || shape.contains(&0) {
            return Err(Error::shape(format!("block `{name}` has degenerate shape {shape:?}")));
        }
        let expected: usize = shape.iter().product();
        if values.len() != expected {
            return Err(Error::shape(format!(
                "block `{name}`: shape {shape:?} needs {expected} values, got {}",
                values.len()
            )));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite { block: name });
        }
        Ok(Self { name, shape, values })
    }

    pub fn zeros(name: impl Into<String>, shape: Vec<usize>) -> Result<Self> {
        let len = shape.iter().product();
        Self::new(name, shape, vec![0.0; len])
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Raw mutable access. Callers are responsible for keeping entries finite.
    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn norm(&self, kind: NormKind) -> f64 {
        block_norm(&self.values, kind)
    }

    fn same_layout(&self, other: &ParamBlock) -> bool {
        self.name == other.name && self.shape == other.shape
    }
}

fn validate_name(name: &str) -> Result<()> {
    if name.is_empty() || name.chars().any(|c| c.is_whitespace() || c.is_control()) {
        return Err(Error::shape(format!("invalid block name {name:?}: must be non-empty without whitespace")));
    }
    Ok(())
}

/// Ordered collection of uniquely named blocks. Gradients, moments and
/// deltas use the same type so alignment is checked by name and shape.
#[derive(Debug, Clone, PartialEq)]
pub struct LayeredParams {
    blocks: Vec<ParamBlock>,
}

impl LayeredParams {
    pub fn new(blocks: Vec<ParamBlock>) -> Result<Self> {
        if blocks.is_empty() {
            return Err(Error::shape("at least one block is required"));
        }
        let mut seen = HashSet::new();
        for b in &blocks {
            if !seen.insert(b.name.as_str()) {
                return Err(Error::shape(format!("duplicate block name `{}`", b.name)));
            }
        }
        Ok(Self { blocks })
    }

    /// Same names and shapes as `self`, all zeros.
    pub fn zeros_like(&self) -> Self {
        Self {
            blocks: self
                .blocks
                .iter()
                .map(|b| ParamBlock { name: b.name.clone(), shape: b.shape.clone(), values: vec![0.0; b.values.len()] })
                .collect(),
        }
    }

    /// Builds a block-aligned sibling from per-block value vectors.
    pub fn with_values(&self, values: Vec<Vec<f64>>) -> Result<Self> {
        if values.len() != self.blocks.len() {
            return Err(Error::shape(format!("expected {} blocks, got {}", self.blocks.len(), values.len())));
        }
        let blocks = self
            .blocks
            .iter()
            .zip(values)
            .map(|(b, v)| ParamBlock::new(b.name.clone(), b.shape.clone(), v))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self { blocks })
    }

    pub fn blocks(&self) -> &[ParamBlock] {
        &self.blocks
    }

    pub fn blocks_mut(&mut self) -> &mut [ParamBlock] {
        &mut self.blocks
    }

    pub fn block(&self, name: &str) -> Option<&ParamBlock> {
        self.blocks.iter().find(|b| b.name == name)
    }

    pub fn num_blocks(&self) -> usize {
        self.blocks.len()
    }

    /// Total dimension `d`, the sum of all block sizes.
    pub fn total_dim(&self) -> usize {
        self.blocks.iter().map(|b| b.len()).sum()
    }

    pub fn norms(&self, kind: NormKind) -> Vec<f64> {
        self.blocks.iter().map(|b| b.norm(kind)).collect()
    }

    /// Fails unless `other` has exactly the same block names, order and shapes.
    pub fn check_aligned(&self, other: &LayeredParams) -> Result<()> {
        if self.blocks.len() != other.blocks.len() {
            return Err(Error::shape(format!("block count differs: {} vs {}", self.blocks.len(), other.blocks.len())));
        }
        for (a, b) in self.blocks.iter().zip(&other.blocks) {
            if !a.same_layout(b) {
                return Err(Error::shape(format!(
                    "block `{}` {:?} does not match `{}` {:?}",
                    a.name, a.shape, b.name, b.shape
                )));
            }
        }
        Ok(())
    }

    /// `x <- x + delta` blockwise. Nothing is written unless every resulting
    /// entry is finite.
    pub fn apply_update(&mut self, deltas: &LayeredParams) -> Result<()> {
        self.check_aligned(deltas)?;
        for (x, d) in self.blocks.iter().zip(&deltas.blocks) {
            if x.values.iter().zip(&d.values).any(|(a, b)| !(a + b).is_finite()) {
                return Err(Error::NonFinite { block: x.name.clone() });
            }
        }
        for (x, d) in self.blocks.iter_mut().zip(&deltas.blocks) {
            for (a, b) in x.values.iter_mut().zip(&d.values) {
                *a += b;
            }
        }
        Ok(())
    }

    /// Flattened copy of all values in block order.
    pub fn flatten(&self) -> Vec<f64> {
        self.blocks.iter().flat_map(|b| b.values.iter().copied()).collect()
    }

    /// Writes the `LPV1` checkpoint: a magic line, then for each block a
    /// `name shape_csv` line followed by its values as little-endian f64.
    pub fn write_checkpoint<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "{CHECKPOINT_MAGIC}")?;
        for b in &self.blocks {
            let shape: Vec<String> = b.shape.iter().map(|s| s.to_string()).collect();
            writeln!(w, "{} {}", b.name, shape.join(","))?;
            for v in &b.values {
                w.write_all(&v.to_le_bytes())?;
            }
        }
        w.flush()?;
        Ok(())
    }

    pub fn read_checkpoint<R: BufRead>(mut r: R) -> Result<Self> {
        let mut line = Vec::new();
        r.read_until(b'\n', &mut line)?;
        if line != format!("{CHECKPOINT_MAGIC}\n").as_bytes() {
            return Err(Error::Checkpoint(format!("missing {CHECKPOINT_MAGIC} header")));
        }
        let mut blocks = Vec::new();
        loop {
            line.clear();
            let n = r.read_until(b'\n', &mut line)?;
            if n == 0 {
                break;
            }
            if line.last() != Some(&b'\n') {
                return Err(Error::Checkpoint("unterminated block header".into()));
            }
            let header = std::str::from_utf8(&line[..line.len() - 1])
                .map_err(|_| Error::Checkpoint("block header is not UTF-8".into()))?;
            let (name, shape_csv) = header
                .split_once(' ')
                .ok_or_else(|| Error::Checkpoint(format!("malformed block header {header:?}")))?;
            let shape = shape_csv
                .split(',')
                .map(|s| s.parse::<usize>())
                .collect::<std::result::Result<Vec<_>, _>>()
                .map_err(|_| Error::Checkpoint(format!("malformed shape {shape_csv:?}")))?;
            let len: usize = shape.iter().product();
            let mut bytes = vec![0u8; len * 8];
            let mut filled = 0;
            while filled < bytes.len() {
                let k = r.read(&mut bytes[filled..])?;
                if k == 0 {
                    return Err(Error::Checkpoint(format!(
                        "block `{name}` truncated: expected {} bytes, found {filled}",
                        bytes.len()
                    )));
                }
                filled += k;
            }
            let values = bytes.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().expect("chunk of 8"))).collect();
            blocks.push(ParamBlock::new(name, shape, values)?);
        }
        Self::new(blocks)
    }

    pub fn save(&self, path: impl AsRef<std::path::Path>) -> Result<()> {
        let f = std::fs::File::create(path)?;
        self.write_checkpoint(std::io::BufWriter::new(f))
    }

    pub fn load(path: impl AsRef<std::path::Path>) -> Result<Self> {
        let f = std::fs::File::open(path)?;
        Self::read_checkpoint(std::io::BufReader::new(f))
    }
}
