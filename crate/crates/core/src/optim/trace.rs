use std::io::Write;

use serde::Serialize;

use crate::error::Result;

pub const TRACE_CSV_HEADER: [&str; 6] =
    ["step", "block_name", "param_norm", "update_norm", "trust_ratio", "effective_lr"];

/// Diagnostics for one block in one step. `update_norm` is the norm of the
/// pre-scaling direction `u`; the block moved by `effective_lr * update_norm`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BlockTrace {
    pub name: String,
    pub param_norm: f64,
    pub update_norm: f64,
    pub trust_ratio: f64,
    pub effective_lr: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepTrace {
    pub step: u64,
    pub blocks: Vec<BlockTrace>,
}

impl StepTrace {
    pub fn write_csv_rows<W: Write>(&self, wtr: &mut csv::Writer<W>) -> Result<()> {
        for b in &self.blocks {
            wtr.write_record([
                self.step.to_string(),
                b.name.clone(),
                b.param_norm.to_string(),
                b.update_norm.to_string(),
                b.trust_ratio.to_string(),
                b.effective_lr.to_string(),
            ])?;
        }
        Ok(())
    }
}
