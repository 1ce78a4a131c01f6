//! The full forecaster: tokenisation, stacked blocks with patch merging and
//! the linear prediction head.

mod checkpoint;
mod config;

#[cfg(test)]
mod tests;

pub use checkpoint::{read_checkpoint, write_checkpoint, CHECKPOINT_MAGIC, CHECKPOINT_VERSION};
pub(crate) use config::parse_num;
pub use config::{key_values, ModelConfig, Tokenization, Variant, VariantSpec};

use crate::embedding::{patch_merge, EmbeddingParams, MergeParams, PatchConfig};
use crate::error::{Error, Result};
use crate::numerics::{Allocator, ParamStore, Real, ShapeCounter, Tape, Tensor, Var};
use crate::tvf::{BlockConfig, LayerNormParams, Linear, Mechanism, TvfBlock};

#[derive(Clone, Debug)]
pub struct Layer {
    pub block: TvfBlock,
    /// Absent once a single patch remains.
    pub merge: Option<MergeParams>,
    pub n_seg: usize,
}

/// Parameter layout of one configured model. Values live in a separate
/// [`ParamStore`] so optimisers can own them mutably.
#[derive(Clone, Debug)]
pub struct Model {
    cfg: ModelConfig,
    embed: EmbeddingParams,
    layers: Vec<Layer>,
    final_norm: LayerNormParams,
    head: Linear,
}

impl Model {
    /// Allocates every parameter in a fixed order: embedding, then each
    /// layer's block and merge, then the head.
    pub fn build(cfg: &ModelConfig, alloc: &mut dyn Allocator) -> Result<Self> {
        cfg.validate()?;
        let trace = cfg.n_seg_trace()?;
        let tokens = cfg.tokens();
        let d = cfg.d_model;
        let patch = PatchConfig::new(cfg.input_len, cfg.l_seg, d)?;
        let token_len = cfg.l_seg * cfg.token_area();
        let embed = EmbeddingParams::build(alloc, tokens, token_len, patch);
        let spec = cfg.spec();
        let mut layers = Vec::with_capacity(cfg.depth);
        for (l, &n_seg) in trace.iter().take(cfg.depth).enumerate() {
            let block_cfg = BlockConfig {
                temporal: spec.temporal,
                mechanism: spec.mechanism,
                variables: tokens,
                n_seg,
                d_model: d,
                heads: cfg.head_config(),
                g: cfg.g,
                series_len: cfg.input_len,
                keep_bins: cfg.keep_bins(),
                dropout: cfg.dropout,
            };
            let block = TvfBlock::build(alloc, &format!("layer{l}"), &block_cfg)?;
            let merge = (n_seg > 1).then(|| MergeParams::build(alloc, l, cfg.r_win, d));
            layers.push(Layer { block, merge, n_seg });
        }
        let n_final = *trace.last().expect("trace is never empty");
        let final_norm = LayerNormParams::build(alloc, "final_norm", d);
        let head = Linear::build(alloc, "head", n_final * d, cfg.horizon * cfg.token_area(), true);
        Ok(Self {
            cfg: cfg.clone(),
            embed,
            layers,
            final_norm,
            head,
        })
    }

    /// Builds the layout and a freshly initialised store.
    pub fn init<F: Real>(cfg: &ModelConfig, seed: u64) -> Result<(Self, ParamStore<F>)> {
        let mut store = ParamStore::new();
        let model = Self::build(cfg, &mut store.initializer(seed))?;
        Ok((model, store))
    }

    pub fn config(&self) -> &ModelConfig {
        &self.cfg
    }

    pub fn layers(&self) -> &[Layer] {
        &self.layers
    }

    /// Exact learnable scalar count of `cfg`.
    pub fn param_count(cfg: &ModelConfig) -> Result<usize> {
        let mut counter = ShapeCounter::default();
        Self::build(cfg, &mut counter)?;
        Ok(counter.scalars())
    }

    /// `[B, T, C, H, W]` frames to token patches `[B, tokens, N, L·area]`.
    fn tokenize<F: Real>(&self, frames: &Tensor<F>) -> Result<Tensor<F>> {
        let c = &self.cfg;
        let s = frames.shape();
        let expected = [c.input_len, c.channels, c.height, c.width];
        if s.len() != 5 || s[1..] != expected {
            return Err(Error::Shape(format!(
                "model expects [B, {}, {}, {}, {}] input, got {s:?}",
                expected[0], expected[1], expected[2], expected[3]
            )));
        }
        let (b, n) = (s[0], c.input_len / c.l_seg);
        match c.tokenization() {
            Tokenization::SuperMv => frames
                .clone()
                .reshape([b, c.input_len, c.variables()])?
                .permute(&[0, 2, 1])?
                .reshape([b, c.variables(), n, c.l_seg]),
            Tokenization::Tube => {
                let l = c.l_spatial;
                let (hp, wp) = (c.height / l, c.width / l);
                frames
                    .clone()
                    .reshape([b, n, c.l_seg, c.channels, hp, l, wp, l])?
                    .permute(&[0, 4, 6, 1, 2, 3, 5, 7])?
                    .reshape([b, hp * wp, n, c.l_seg * c.token_area()])
            }
        }
    }

    /// Embedded tokens `[B, tokens, N, d]`.
    fn embed<F: Real>(&self, tape: &mut Tape<F>, store: &ParamStore<F>, frames: &Tensor<F>) -> Result<Var> {
        let patches = tape.constant(self.tokenize(frames)?);
        self.embed.embed(tape, store, patches)
    }

    /// Forecast `[B, τ, C, H, W]` as a tape variable for input frames
    /// `[B, T, C, H, W]`.
    pub fn forward<F: Real>(&self, tape: &mut Tape<F>, store: &ParamStore<F>, frames: &Tensor<F>) -> Result<Var> {
        let mut x = self.embed(tape, store, frames)?;
        for layer in &self.layers {
            x = layer.block.forward(tape, store, x)?;
            if let Some(m) = &layer.merge {
                x = patch_merge(tape, store, x, m)?;
            }
        }
        self.head(tape, store, x, frames.shape()[0])
    }

    fn head<F: Real>(&self, tape: &mut Tape<F>, store: &ParamStore<F>, x: Var, b: usize) -> Result<Var> {
        let c = &self.cfg;
        let s = tape.shape(x).to_vec();
        let tokens = s[1];
        let x = self.final_norm.forward(tape, store, x)?;
        let x = tape.reshape(x, &[b, tokens, s[2] * s[3]])?;
        let y = self.head.forward(tape, store, x)?;
        match c.tokenization() {
            Tokenization::SuperMv => {
                let y = tape.permute(y, &[0, 2, 1])?;
                tape.reshape(y, &[b, c.horizon, c.channels, c.height, c.width])
            }
            Tokenization::Tube => {
                let l = c.l_spatial;
                let (hp, wp) = (c.height / l, c.width / l);
                let y = tape.reshape(y, &[b, hp, wp, c.horizon, c.channels, l, l])?;
                let y = tape.permute(y, &[0, 3, 4, 1, 5, 2, 6])?;
                tape.reshape(y, &[b, c.horizon, c.channels, c.height, c.width])
            }
        }
    }

    /// Evaluation-mode forecast `[τ, C, H, W]` for one window `[T, C, H, W]`.
    pub fn predict<F: Real>(&self, store: &ParamStore<F>, window: &Tensor<F>) -> Result<Tensor<F>> {
        let mut shape = vec![1];
        shape.extend_from_slice(window.shape());
        let batch = window.clone().reshape(shape)?;
        let c = &self.cfg;
        self.predict_batch(store, &batch)?
            .reshape([c.horizon, c.channels, c.height, c.width])
    }

    /// Evaluation-mode forecasts `[B, τ, C, H, W]`.
    pub fn predict_batch<F: Real>(&self, store: &ParamStore<F>, frames: &Tensor<F>) -> Result<Tensor<F>> {
        let mut tape = Tape::new();
        let y = self.forward(&mut tape, store, frames)?;
        Ok(tape.value(y).clone())
    }

    /// Head-averaged inter-series attention of variable `variable` over
    /// all variables, at block `layer` and patch index `patch`.
    pub fn export_attention<F: Real>(
        &self,
        store: &ParamStore<F>,
        window: &Tensor<F>,
        variable: usize,
        layer: usize,
        patch: usize,
    ) -> Result<Vec<F>> {
        if self.cfg.spec().mechanism != Mechanism::Full {
            return Err(Error::UnsupportedMechanism(format!(
                "attention export needs full attention, {} uses {}",
                self.cfg.variant,
                self.cfg.spec().mechanism
            )));
        }
        let tokens = self.cfg.tokens();
        let l = self.layers.get(layer).ok_or_else(|| {
            Error::Config(format!("layer {layer} out of range for depth {}", self.layers.len()))
        })?;
        if variable >= tokens || patch >= l.n_seg {
            return Err(Error::Config(format!(
                "variable {variable} / patch {patch} out of range ({tokens} variables, {} patches)",
                l.n_seg
            )));
        }
        let mut shape = vec![1];
        shape.extend_from_slice(window.shape());
        let frames = window.clone().reshape(shape)?;
        let mut tape = Tape::new();
        let mut x = self.embed(&mut tape, store, &frames)?;
        for prev in &self.layers[..layer] {
            x = prev.block.forward(&mut tape, store, x)?;
            if let Some(m) = &prev.merge {
                x = patch_merge(&mut tape, store, x, m)?;
            }
        }
        let map = l.block.attention_map(&mut tape, store, x)?;
        let start = (patch * tokens + variable) * tokens;
        Ok(map.data()[start..start + tokens].to_vec())
    }
}
