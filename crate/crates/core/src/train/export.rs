//! Attention-score CSV export.

use std::io::Write;

use crate::error::{Error, Result};
use crate::numerics::Real;

pub const ATTENTION_HEADER: &str = "row_variable,col_variable,score";

/// Writes one softmax row of `variable` over all `G` columns.
pub fn write_attention_csv<F: Real>(mut w: impl Write, variable: usize, row: &[F]) -> Result<()> {
    if variable >= row.len() {
        return Err(Error::Config(format!(
            "variable {variable} out of range for {} variables",
            row.len()
        )));
    }
    writeln!(w, "{ATTENTION_HEADER}")?;
    for (col, s) in row.iter().enumerate() {
        writeln!(w, "{variable},{col},{:.8}", s.as_f64())?;
    }
    Ok(())
}
