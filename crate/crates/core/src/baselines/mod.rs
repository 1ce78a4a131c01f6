//! Heuristic and linear baselines and the error metrics shared with the
//! model evaluation.

mod metrics;

#[cfg(test)]
mod tests;

pub use metrics::{mae, rmse, write_reports_csv, ErrorAccumulator, ForecastReport};

use crate::embedding::GridSeries;
use crate::error::{Error, Result};
use crate::numerics::{Allocator, Init, ParamId, ParamStore, Real, Tape, Tensor, Var};

/// Per-variable mean of `input: [T_in, ..]`, repeated for `horizon` steps.
pub fn ha_forecast<F: Real>(input: &Tensor<F>, horizon: usize) -> Result<Tensor<F>> {
    let t = input.shape()[0];
    if input.rank() < 2 || t == 0 {
        return Err(Error::Shape(format!("HA needs a [T, ..] window, got {:?}", input.shape())));
    }
    let frame = input.len() / t;
    let mut mean = vec![0.0f64; frame];
    for row in input.data().chunks(frame) {
        mean.iter_mut().zip(row).for_each(|(m, v)| *m += v.as_f64());
    }
    let mean: Vec<F> = mean.into_iter().map(|m| F::cast(m / t as f64)).collect();
    let mut shape = input.shape().to_vec();
    shape[0] = horizon;
    Tensor::new(shape, mean.iter().copied().cycle().take(horizon * frame).collect())
}

/// `forecast(t) = history(t − P)` for `t ∈ [start, start + horizon)`;
/// steps further than one period ahead reuse the most recent observed
/// period.
pub fn periodic_forecast<F: Real>(history: &GridSeries<F>, start: usize, horizon: usize, period: usize) -> Result<Tensor<F>> {
    if period == 0 {
        return Err(Error::Config("period must be positive".into()));
    }
    if start < period || start > history.len() {
        return Err(Error::InsufficientHistory {
            needed: period,
            available: start.min(history.len()),
        });
    }
    let (_, c, h, w) = history.dims();
    let mut data = Vec::with_capacity(horizon * c * h * w);
    for k in 0..horizon {
        data.extend_from_slice(history.frame(start - period + k % period));
    }
    Tensor::new([horizon, c, h, w], data)
}

/// Value at the same time of the previous day.
pub fn dh_forecast<F: Real>(history: &GridSeries<F>, start: usize, horizon: usize) -> Result<Tensor<F>> {
    periodic_forecast(history, start, horizon, history.steps_per_day())
}

/// Value at the same time of the previous week.
pub fn wh_forecast<F: Real>(history: &GridSeries<F>, start: usize, horizon: usize) -> Result<Tensor<F>> {
    periodic_forecast(history, start, horizon, history.steps_per_week())
}

/// `ŷ = (x − x_last)·W + x_last` per variable with one `W` shared by all
/// variables.
#[derive(Clone, Debug)]
pub struct Nlinear {
    pub weight: ParamId,
    pub input_len: usize,
    pub horizon: usize,
}

impl Nlinear {
    pub fn build(alloc: &mut dyn Allocator, input_len: usize, horizon: usize) -> Self {
        Self {
            weight: alloc.alloc("nlinear.weight", &[input_len, horizon], Init::Uniform { fan_in: input_len }),
            input_len,
            horizon,
        }
    }

    pub fn init<F: Real>(input_len: usize, horizon: usize, seed: u64) -> (Self, ParamStore<F>) {
        let mut store = ParamStore::new();
        let m = Self::build(&mut store.initializer(seed), input_len, horizon);
        (m, store)
    }

    /// `frames: [B, T_in, C, H, W]` → `[B, τ, C, H, W]`.
    pub fn forward<F: Real>(&self, tape: &mut Tape<F>, store: &ParamStore<F>, frames: &Tensor<F>) -> Result<Var> {
        let s = frames.shape().to_vec();
        if s.len() != 5 || s[1] != self.input_len {
            return Err(Error::Shape(format!(
                "Nlinear expects [B, {}, C, H, W], got {s:?}",
                self.input_len
            )));
        }
        let (b, t, g) = (s[0], s[1], s[2] * s[3] * s[4]);
        let rows = frames.clone().reshape([b, t, g])?.permute(&[0, 2, 1])?;
        let last: Vec<F> = rows.data().chunks(t).map(|r| r[t - 1]).collect();
        let mut centred = rows;
        for (row, &l) in centred.data_mut().chunks_mut(t).zip(&last) {
            row.iter_mut().for_each(|v| *v = *v - l);
        }
        let x = tape.constant(centred);
        let w = tape.param(store.get(self.weight));
        let y = tape.matmul(x, w)?;
        let level = Tensor::new(
            [b, g, self.horizon],
            last.iter().flat_map(|&l| std::iter::repeat_n(l, self.horizon)).collect(),
        )?;
        let level = tape.constant(level);
        let y = tape.add(y, level)?;
        let y = tape.permute(y, &[0, 2, 1])?;
        tape.reshape(y, &[b, self.horizon, s[2], s[3], s[4]])
    }

    pub fn predict<F: Real>(&self, store: &ParamStore<F>, frames: &Tensor<F>) -> Result<Tensor<F>> {
        let mut tape = Tape::new();
        let y = self.forward(&mut tape, store, frames)?;
        Ok(tape.value(y).clone())
    }
}
