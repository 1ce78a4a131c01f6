//! Synthetic periodic mobility grids for desk-scale experiments.

use std::f64::consts::{PI, TAU};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::embedding::GridSeries;
use crate::error::{Error, Result};
use crate::numerics::Tensor;

/// Relative amplitude of the daily cycle.
pub const DAILY_AMPLITUDE: f64 = 0.5;
/// Relative amplitude of the weekly cycle.
pub const WEEKLY_AMPLITUDE: f64 = 0.2;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SynthConfig {
    pub steps: usize,
    pub channels: usize,
    pub height: usize,
    pub width: usize,
    pub steps_per_day: usize,
    /// Standard deviation of the additive noise; the base level averages
    /// about 1, so this is also relative to the signal scale.
    pub noise_sigma: f64,
    pub seed: u64,
}

/// `base(c,h,w) · [1 + a·sin(2πt/P_day + φ(h,w)) + b·sin(2πt/P_week)] + ε`,
/// clipped at zero. `base` lies in `[0.5, 1.5]` and, like the phase `φ`,
/// varies smoothly across the grid.
pub fn synth_generate(cfg: &SynthConfig) -> Result<GridSeries<f32>> {
    let SynthConfig {
        steps,
        channels,
        height,
        width,
        steps_per_day,
        noise_sigma,
        seed,
    } = *cfg;
    if [steps, channels, height, width, steps_per_day].contains(&0) {
        return Err(Error::Config("synthetic dimensions must be positive".into()));
    }
    if !(noise_sigma >= 0.0 && noise_sigma.is_finite()) {
        return Err(Error::Config(format!("noise_sigma must be nonnegative, got {noise_sigma}")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let channel_phase: Vec<(f64, f64)> = (0..channels)
        .map(|_| (rng.random_range(0.0..TAU), rng.random_range(0.0..TAU)))
        .collect();
    let phase_offset = rng.random_range(0.0..TAU);
    let frame = channels * height * width;
    let base: Vec<f64> = (0..frame)
        .map(|i| {
            let (c, h, w) = (i / (height * width), (i / width) % height, i % width);
            let (pc, pw) = channel_phase[c];
            let y = TAU * h as f64 / height as f64 + pc;
            let x = TAU * w as f64 / width as f64 + pw;
            1.0 + 0.5 * y.sin() * x.cos()
        })
        .collect();
    let phase: Vec<f64> = (0..height * width)
        .map(|i| {
            let (h, w) = (i / width, i % width);
            phase_offset + PI * (h as f64 / height as f64 + w as f64 / width as f64)
        })
        .collect();
    let noise = Normal::new(0.0, noise_sigma.max(f64::MIN_POSITIVE)).expect("valid sigma");
    let (p_day, p_week) = (steps_per_day as f64, 7.0 * steps_per_day as f64);
    let mut data = Vec::with_capacity(steps * frame);
    for t in 0..steps {
        let t = t as f64;
        let weekly = WEEKLY_AMPLITUDE * (TAU * t / p_week).sin();
        for (i, b) in base.iter().enumerate() {
            let daily = DAILY_AMPLITUDE * (TAU * t / p_day + phase[i % (height * width)]).sin();
            let eps = if noise_sigma > 0.0 { noise.sample(&mut rng) } else { 0.0 };
            data.push((b * (1.0 + daily + weekly) + eps).max(0.0) as f32);
        }
    }
    GridSeries::new(Tensor::new([steps, channels, height, width], data)?, steps_per_day)
}
