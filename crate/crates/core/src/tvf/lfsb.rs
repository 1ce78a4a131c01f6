//! Low-frequency filter sub-block.

use super::Dims;
use crate::error::{Error, Result};
use crate::numerics::{bins_for, irdft, low_pass, rdft, Allocator, Init, ParamId, ParamStore, Real, Tape, Tensor, Var};

/// Lower half of the real-DFT bins of a length-`len` series, rounded up.
pub fn default_keep_bins(len: usize) -> usize {
    bins_for(len).div_ceil(2)
}

pub fn check_keep_bins(len: usize, keep: usize) -> Result<()> {
    if keep == 0 || keep > bins_for(len) {
        return Err(Error::Config(format!(
            "keep_bins must lie in 1..={} for series length {len}, got {keep}",
            bins_for(len)
        )));
    }
    Ok(())
}

/// Zeroes every DFT bin `>= keep` of each row of `x: [.., T]`.
pub fn filter_series<F: Real>(x: &Tensor<F>, keep: usize) -> Result<Tensor<F>> {
    let len = x.last_dim();
    check_keep_bins(len, keep)?;
    irdft(&low_pass(&rdft(x)?, keep), len)
}

/// Patch tokens → full-length series → low-pass → patch tokens.
#[derive(Clone, Debug)]
pub struct LowFrequencyFilter {
    /// `[(N_seg·d_model), T]`.
    pub to_series: ParamId,
    /// `[T, (N_seg·d_model)]`.
    pub to_patches: ParamId,
    pub series_len: usize,
    pub keep_bins: usize,
}

impl LowFrequencyFilter {
    pub fn build(
        alloc: &mut dyn Allocator,
        name: &str,
        n_seg: usize,
        d_model: usize,
        series_len: usize,
        keep_bins: usize,
    ) -> Result<Self> {
        check_keep_bins(series_len, keep_bins)?;
        let flat = n_seg * d_model;
        Ok(Self {
            to_series: alloc.alloc(&format!("{name}.to_series"), &[flat, series_len], Init::Uniform { fan_in: flat }),
            to_patches: alloc.alloc(
                &format!("{name}.to_patches"),
                &[series_len, flat],
                Init::Uniform { fan_in: series_len },
            ),
            series_len,
            keep_bins,
        })
    }

    pub fn forward<F: Real>(&self, tape: &mut Tape<F>, store: &ParamStore<F>, x: Var) -> Result<Var> {
        let dims = Dims::of(tape, x)?;
        let flat = tape.reshape(x, &[dims.b, dims.g, dims.n * dims.d])?;
        let w1 = tape.param(store.get(self.to_series));
        let series = tape.matmul(flat, w1)?;
        let spec = tape.rdft(series)?;
        let spec = tape.low_pass(spec, self.keep_bins)?;
        let series = tape.irdft(spec, self.series_len)?;
        let w2 = tape.param(store.get(self.to_patches));
        let out = tape.matmul(series, w2)?;
        tape.reshape(out, &dims.original)
    }
}
