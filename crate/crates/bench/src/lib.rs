//! Fixtures shared by the benchmarks.

use sumformer::model::{Model, ModelConfig, Variant};
use sumformer::tvf::{HeadConfig, InterSeries, Mechanism};
use sumformer::{ParamStore, Result, Tensor};

pub const D_MODEL: usize = 32;
pub const HEADS: HeadConfig = HeadConfig { heads: 2, d_qkv: 16 };
pub const DICT_SIZE: usize = 64;

/// Deterministic pseudo-random values in `[-1, 1)`.
pub fn filled(shape: &[usize], seed: u64) -> Tensor<f32> {
    let mut state = seed.wrapping_mul(0x9E37_79B9_7F4A_7C15) | 1;
    Tensor::from_fn(shape.to_vec(), |_| {
        state ^= state << 13;
        state ^= state >> 7;
        state ^= state << 17;
        (state >> 40) as f32 / (1u64 << 23) as f32 - 1.0
    })
}

/// An inter-series block over `variables` series with one patch each.
pub fn issb_case(mechanism: Mechanism, variables: usize) -> (InterSeries, ParamStore<f32>, Tensor<f32>) {
    let mut store = ParamStore::new();
    let block = InterSeries::build(
        &mut store.initializer(0),
        "bench",
        mechanism,
        variables,
        DICT_SIZE,
        D_MODEL,
        HEADS,
    );
    (block, store, filled(&[variables, 1, D_MODEL], variables as u64))
}

/// The desk-scale configuration used by the learning check.
pub fn desk_model(variant: Variant) -> Result<(Model, ParamStore<f32>)> {
    let cfg = ModelConfig {
        variant,
        input_len: 64,
        horizon: 32,
        channels: 2,
        height: 8,
        width: 8,
        l_seg: 8,
        d_model: 32,
        depth: 3,
        g: 16,
        heads: 4,
        d_qkv: 8,
        dropout: 0.0,
        ..ModelConfig::default()
    };
    Model::init(&cfg, 0)
}
