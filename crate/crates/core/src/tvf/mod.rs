//! The temporal, inter-series and low-frequency sub-blocks and the
//! residual wrapper that stacks them into one block.

mod inter;
mod layers;
mod lfsb;
mod temporal;


pub use inter::{Additive, Dictionary, InterSeries, LowRank, Mechanism};
pub use layers::{Attended, HeadConfig, LayerNormParams, Linear, Mhsa, Mlp};
pub use lfsb::{check_keep_bins, default_keep_bins, filter_series, LowFrequencyFilter};
pub use temporal::{TemporalAttention, TemporalBlock, TemporalMixer};

use crate::error::{Error, Result};
use crate::numerics::{Allocator, ParamStore, Real, Tape, Tensor, Var};

/// Layout of a patch tensor `[G, N, d]` or a batch of them `[B, G, N, d]`.
#[derive(Clone, Debug)]
pub(crate) struct Dims {
    pub b: usize,
    pub g: usize,
    pub n: usize,
    pub d: usize,
    pub original: Vec<usize>,
}

impl Dims {
    pub fn of<F: Real>(tape: &Tape<F>, x: Var) -> Result<Self> {
        let s = tape.shape(x);
        let (b, rest) = match s.len() {
            3 => (1, s),
            4 => (s[0], &s[1..]),
            _ => return Err(Error::Shape(format!("expected [B,] G × N × d patches, got {s:?}"))),
        };
        Ok(Self {
            b,
            g: rest[0],
            n: rest[1],
            d: rest[2],
            original: s.to_vec(),
        })
    }

    pub fn shape4(&self) -> [usize; 4] {
        [self.b, self.g, self.n, self.d]
    }
}

/// Any of the three sub-block kinds.
#[derive(Clone, Debug)]
pub enum SubBlock {
    Temporal(TemporalBlock),
    InterSeries(InterSeries),
    Filter(LowFrequencyFilter),
}

impl SubBlock {
    pub fn forward<F: Real>(&self, tape: &mut Tape<F>, store: &ParamStore<F>, x: Var) -> Result<Var> {
        match self {
            Self::Temporal(b) => b.forward(tape, store, x),
            Self::InterSeries(b) => b.forward(tape, store, x),
            Self::Filter(b) => b.forward(tape, store, x),
        }
    }
}

/// `x̂ = LN(x + sub(x))`, `out = LN(x̂ + MLP(x̂))`.
#[derive(Clone, Debug)]
pub struct Wrapped {
    pub inner: SubBlock,
    pub norm1: LayerNormParams,
    pub mlp: Mlp,
    pub norm2: LayerNormParams,
}

impl Wrapped {
    pub fn build(alloc: &mut dyn Allocator, name: &str, d_model: usize, inner: impl FnOnce(&mut dyn Allocator) -> Result<SubBlock>) -> Result<Self> {
        let inner = inner(alloc)?;
        Ok(Self {
            inner,
            norm1: LayerNormParams::build(alloc, &format!("{name}.norm1"), d_model),
            mlp: Mlp::build(alloc, &format!("{name}.mlp"), d_model, 2 * d_model, 0.0),
            norm2: LayerNormParams::build(alloc, &format!("{name}.norm2"), d_model),
        })
    }

    pub fn forward<F: Real>(&self, tape: &mut Tape<F>, store: &ParamStore<F>, x: Var) -> Result<Var> {
        let sub = self.inner.forward(tape, store, x)?;
        self.finish(tape, store, x, sub)
    }

    /// Residual and MLP stages around an already computed `sub(x)`.
    pub fn finish<F: Real>(&self, tape: &mut Tape<F>, store: &ParamStore<F>, x: Var, sub: Var) -> Result<Var> {
        let h = tape.add(x, sub)?;
        let h = self.norm1.forward(tape, store, h)?;
        let m = self.mlp.forward(tape, store, h)?;
        let out = tape.add(h, m)?;
        self.norm2.forward(tape, store, out)
    }
}

/// Which temporal sub-block a block uses.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum TemporalKind {
    Attention,
    Mixer,
    /// No temporal sub-block; the inter-series stage attends over all
    /// (variable, patch) tokens jointly.
    None,
}

/// Shape and hyper-parameters of one block.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BlockConfig {
    pub temporal: TemporalKind,
    pub mechanism: Mechanism,
    pub variables: usize,
    pub n_seg: usize,
    pub d_model: usize,
    pub heads: HeadConfig,
    pub g: usize,
    pub series_len: usize,
    pub keep_bins: usize,
    pub dropout: f64,
}

/// Temporal, inter-series and filter stages, each residually wrapped.
#[derive(Clone, Debug)]
pub struct TvfBlock {
    pub temporal: Option<Wrapped>,
    pub inter: Wrapped,
    pub filter: Wrapped,
}

impl TvfBlock {
    pub fn build(alloc: &mut dyn Allocator, name: &str, cfg: &BlockConfig) -> Result<Self> {
        let d = cfg.d_model;
        let temporal = match cfg.temporal {
            TemporalKind::None => None,
            kind => Some(Wrapped::build(alloc, &format!("{name}.tsb"), d, |a| {
                let tsb_name = format!("{name}.tsb.inner");
                Ok(SubBlock::Temporal(match kind {
                    TemporalKind::Attention => {
                        TemporalBlock::Attention(TemporalAttention::build(a, &tsb_name, cfg.n_seg, d, cfg.heads))
                    }
                    _ => TemporalBlock::Mixer(TemporalMixer::build(a, &tsb_name, cfg.n_seg, d, cfg.dropout)),
                }))
            })?),
        };
        let inter = Wrapped::build(alloc, &format!("{name}.issb"), d, |a| {
            let issb_name = format!("{name}.issb.inner");
            Ok(SubBlock::InterSeries(if cfg.temporal == TemporalKind::None {
                if cfg.mechanism != Mechanism::Dictionary {
                    return Err(Error::UnsupportedMechanism(format!(
                        "joint tokens require dictionary attention, got {}",
                        cfg.mechanism
                    )));
                }
                InterSeries::build_joint(a, &issb_name, cfg.g, d, cfg.heads)
            } else {
                InterSeries::build(a, &issb_name, cfg.mechanism, cfg.variables, cfg.g, d, cfg.heads)
            }))
        })?;
        let filter = Wrapped::build(alloc, &format!("{name}.lfsb"), d, |a| {
            Ok(SubBlock::Filter(LowFrequencyFilter::build(
                a,
                &format!("{name}.lfsb.inner"),
                cfg.n_seg,
                d,
                cfg.series_len,
                cfg.keep_bins,
            )?))
        })?;
        Ok(Self { temporal, inter, filter })
    }

    pub fn forward<F: Real>(&self, tape: &mut Tape<F>, store: &ParamStore<F>, x: Var) -> Result<Var> {
        let x = self.before_inter(tape, store, x)?;
        let x = self.inter.forward(tape, store, x)?;
        self.filter.forward(tape, store, x)
    }

    /// Output of the temporal stage, the input the inter-series stage sees.
    pub fn before_inter<F: Real>(&self, tape: &mut Tape<F>, store: &ParamStore<F>, x: Var) -> Result<Var> {
        match &self.temporal {
            Some(t) => t.forward(tape, store, x),
            None => Ok(x),
        }
    }

    pub fn inter_series(&self) -> &InterSeries {
        match &self.inter.inner {
            SubBlock::InterSeries(i) => i,
            _ => unreachable!("inter stage always holds an inter-series block"),
        }
    }

    /// Head-averaged inter-series attention `[B, N, G, G]` for input `x`.
    pub fn attention_map<F: Real>(&self, tape: &mut Tape<F>, store: &ParamStore<F>, x: Var) -> Result<Tensor<F>> {
        let x = self.before_inter(tape, store, x)?;
        self.inter_series().attention_map(tape, store, x)
    }
}
