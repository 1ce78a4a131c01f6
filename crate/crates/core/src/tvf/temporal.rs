//! Temporal sub-block: mixing among the patches of each variable.

use super::layers::{HeadConfig, LayerNormParams, Mhsa, Mlp};
use super::Dims;
use crate::error::Result;
use crate::numerics::{Allocator, ParamStore, Real, Tape, Var};

/// Per-variable self-attention over the `N_seg` patch tokens.
#[derive(Clone, Debug)]
pub struct TemporalAttention {
    pub attn: Mhsa,
}

impl TemporalAttention {
    /// With a single patch the softmax is constant, so the query and key
    /// projections are left out.
    pub fn build(alloc: &mut dyn Allocator, name: &str, n_seg: usize, d_model: usize, heads: HeadConfig) -> Self {
        let attn = if n_seg == 1 {
            Mhsa::build_single_key(alloc, name, d_model, heads)
        } else {
            Mhsa::build(alloc, name, d_model, heads)
        };
        Self { attn }
    }

    pub fn forward<F: Real>(&self, tape: &mut Tape<F>, store: &ParamStore<F>, x: Var) -> Result<Var> {
        let dims = Dims::of(tape, x)?;
        let rows = tape.reshape(x, &[dims.b * dims.g, dims.n, dims.d])?;
        let out = self.attn.attend(tape, store, rows, rows)?.out;
        tape.reshape(out, &dims.original)
    }
}

/// Two residual MLPs: one inside each patch over `d_model`, one across the
/// patches of a variable over `N_seg`.
#[derive(Clone, Debug)]
pub struct TemporalMixer {
    pub norm_token: LayerNormParams,
    pub token: Mlp,
    pub norm_patch: LayerNormParams,
    pub patch: Mlp,
}

impl TemporalMixer {
    pub fn build(alloc: &mut dyn Allocator, name: &str, n_seg: usize, d_model: usize, dropout: f64) -> Self {
        Self {
            norm_token: LayerNormParams::build(alloc, &format!("{name}.norm_token"), d_model),
            token: Mlp::build(alloc, &format!("{name}.token"), d_model, 2 * d_model, dropout),
            norm_patch: LayerNormParams::build(alloc, &format!("{name}.norm_patch"), d_model),
            patch: Mlp::build(alloc, &format!("{name}.patch"), n_seg, 2 * n_seg, dropout),
        }
    }

    pub fn forward<F: Real>(&self, tape: &mut Tape<F>, store: &ParamStore<F>, x: Var) -> Result<Var> {
        let dims = Dims::of(tape, x)?;
        let x = tape.reshape(x, &dims.shape4())?;
        let h = self.norm_token.forward(tape, store, x)?;
        let h = self.token.forward(tape, store, h)?;
        let z = tape.add(x, h)?;

        let h = self.norm_patch.forward(tape, store, z)?;
        let h = tape.permute(h, &[0, 1, 3, 2])?;
        let h = self.patch.forward(tape, store, h)?;
        let h = tape.permute(h, &[0, 1, 3, 2])?;
        let out = tape.add(z, h)?;
        tape.reshape(out, &dims.original)
    }
}

#[derive(Clone, Debug)]
pub enum TemporalBlock {
    Attention(TemporalAttention),
    Mixer(TemporalMixer),
}

impl TemporalBlock {
    pub fn forward<F: Real>(&self, tape: &mut Tape<F>, store: &ParamStore<F>, x: Var) -> Result<Var> {
        match self {
            Self::Attention(b) => b.forward(tape, store, x),
            Self::Mixer(b) => b.forward(tape, store, x),
        }
    }
}
