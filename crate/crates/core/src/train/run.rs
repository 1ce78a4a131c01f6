//! Training loop, evaluation and baseline scoring.

use std::fmt;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::baselines::{dh_forecast, ha_forecast, wh_forecast, ErrorAccumulator, Nlinear};
use crate::data::{stack_windows, windows_in, NormStats, Split};
use crate::embedding::GridSeries;
use crate::error::{Error, Result};
use crate::model::Model;
use crate::numerics::{ParamStore, Real, Tape, Tensor, Var};

use super::config::TrainConfig;
use super::optim::Adam;

/// Anything that maps `[B, T_in, C, H, W]` to `[B, τ, C, H, W]` on a tape.
pub trait Forecaster {
    fn forward<F: Real>(&self, tape: &mut Tape<F>, store: &ParamStore<F>, frames: &Tensor<F>) -> Result<Var>;
}

impl Forecaster for Model {
    fn forward<F: Real>(&self, tape: &mut Tape<F>, store: &ParamStore<F>, frames: &Tensor<F>) -> Result<Var> {
        Model::forward(self, tape, store, frames)
    }
}

impl Forecaster for Nlinear {
    fn forward<F: Real>(&self, tape: &mut Tape<F>, store: &ParamStore<F>, frames: &Tensor<F>) -> Result<Var> {
        Nlinear::forward(self, tape, store, frames)
    }
}

/// A series with its split, training statistics and window starts.
#[derive(Clone, Debug)]
pub struct TrainData<F: Real = f32> {
    pub raw: GridSeries<F>,
    pub normalized: GridSeries<F>,
    pub stats: NormStats,
    pub split: Split,
    pub input_len: usize,
    pub horizon: usize,
    pub train_starts: Vec<usize>,
    pub val_starts: Vec<usize>,
    pub test_starts: Vec<usize>,
}

impl<F: Real> TrainData<F> {
    pub fn new(raw: GridSeries<F>, cfg: &TrainConfig) -> Result<Self> {
        let (tin, tau) = (cfg.model.input_len, cfg.model.horizon);
        let (_, c, h, w) = raw.dims();
        let m = &cfg.model;
        if (c, h, w) != (m.channels, m.height, m.width) {
            return Err(Error::Config(format!(
                "series frames are {c}x{h}x{w}, model expects {}x{}x{}",
                m.channels, m.height, m.width
            )));
        }
        let split = Split::new(raw.len(), cfg.split, tin + tau)?;
        let stats = NormStats::fit(&raw, split.train.clone());
        let normalized = stats.normalize_series(&raw);
        let eval = cfg.eval_stride();
        Ok(Self {
            train_starts: windows_in(&split.train, tin, tau, cfg.train_stride)?,
            val_starts: windows_in(&split.val, tin, tau, eval)?,
            test_starts: windows_in(&split.test, tin, tau, eval)?,
            raw,
            normalized,
            stats,
            split,
            input_len: tin,
            horizon: tau,
        })
    }

    /// Normalised model inputs and targets for `starts`.
    pub fn batch(&self, starts: &[usize]) -> Result<(Tensor<F>, Tensor<F>)> {
        Ok((
            stack_windows(&self.normalized, starts, 0, self.input_len)?,
            stack_windows(&self.normalized, starts, self.input_len, self.horizon)?,
        ))
    }

    /// Raw-scale targets for `starts`.
    pub fn raw_targets(&self, starts: &[usize]) -> Result<Tensor<F>> {
        stack_windows(&self.raw, starts, self.input_len, self.horizon)
    }
}

/// One line of the training log.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EpochLog {
    pub epoch: usize,
    /// Rate at the epoch's last step.
    pub lr: f64,
    pub train_mse: f64,
    pub val_mse: f64,
}

pub const LOG_HEADER: &str = "epoch,lr,train_mse,val_mse";

impl EpochLog {
    pub fn csv_row(&self) -> String {
        format!("{},{:e},{:.6},{:.6}", self.epoch, self.lr, self.train_mse, self.val_mse)
    }
}

/// Result of [`fit`].
#[derive(Clone, Debug)]
pub struct Fitted<F: Real> {
    /// Parameters from the epoch with the lowest validation loss.
    pub best: ParamStore<F>,
    pub best_epoch: usize,
    /// Parameters after the last epoch.
    pub last: ParamStore<F>,
    pub history: Vec<EpochLog>,
}

fn step_seed(seed: u64, epoch: usize, step: usize) -> u64 {
    let mut z = seed ^ ((epoch as u64) << 32 | step as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z ^ (z >> 31)
}

/// Mean normalised-scale MSE of `model` over `starts`.
pub fn mse_over<M: Forecaster, F: Real>(
    model: &M,
    store: &ParamStore<F>,
    data: &TrainData<F>,
    starts: &[usize],
    batch_size: usize,
) -> Result<f64> {
    let mut sq = 0.0;
    let mut n = 0usize;
    for chunk in starts.chunks(batch_size.max(1)) {
        let (x, y) = data.batch(chunk)?;
        let mut tape = Tape::new();
        let pred = model.forward(&mut tape, store, &x)?;
        for (p, t) in tape.value(pred).data().iter().zip(y.data()) {
            let e = p.as_f64() - t.as_f64();
            sq += e * e;
        }
        n += y.len();
    }
    Ok(sq / n.max(1) as f64)
}

/// Raw-scale errors of `model` over `starts`.
pub fn evaluate<M: Forecaster, F: Real>(
    model: &M,
    store: &ParamStore<F>,
    data: &TrainData<F>,
    starts: &[usize],
    batch_size: usize,
) -> Result<ErrorAccumulator> {
    let mut acc = ErrorAccumulator::default();
    for chunk in starts.chunks(batch_size.max(1)) {
        let (x, _) = data.batch(chunk)?;
        let mut tape = Tape::new();
        let pred = model.forward(&mut tape, store, &x)?;
        let pred = data.stats.denormalize(tape.value(pred));
        acc.add(&pred, &data.raw_targets(chunk)?)?;
    }
    Ok(acc)
}

/// Trains `store` in place with Adam and the configured schedule, keeping a
/// copy of the best-validation parameters.
pub fn fit<M: Forecaster, F: Real>(
    model: &M,
    mut store: ParamStore<F>,
    cfg: &TrainConfig,
    data: &TrainData<F>,
    on_epoch: &mut dyn FnMut(&EpochLog),
) -> Result<Fitted<F>> {
    cfg.validate_training()?;
    if data.train_starts.is_empty() || data.val_starts.is_empty() {
        return Err(Error::Config("no training or validation windows".into()));
    }
    let schedule = cfg.schedule();
    let dropout = cfg.model.dropout > 0.0;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut order = data.train_starts.clone();
    let steps = order.len().div_ceil(cfg.batch_size);
    let mut adam = Adam::default();
    let mut history = Vec::with_capacity(cfg.epochs);
    let mut best: Option<(f64, usize, ParamStore<F>)> = None;

    for epoch in 0..cfg.epochs {
        order.shuffle(&mut rng);
        let mut loss_sum = 0.0;
        let mut lr = schedule.warmup_lr;
        for (step, chunk) in order.chunks(cfg.batch_size).enumerate() {
            let (x, y) = data.batch(chunk)?;
            let mut tape = if dropout {
                Tape::training(step_seed(cfg.seed, epoch, step))
            } else {
                Tape::new()
            };
            let pred = model.forward(&mut tape, &store, &x)?;
            let target = tape.constant(y);
            let loss = tape.mse(pred, target)?;
            let value = tape.value(loss).data()[0].as_f64();
            if !value.is_finite() {
                return Err(Error::NonFiniteLoss { epoch, step });
            }
            let grads = tape.backward(loss)?;
            store.zero_grad();
            store.accumulate(&grads, F::one());
            lr = schedule.lr_at(epoch, step, steps);
            adam.step(&mut store, lr);
            loss_sum += value * chunk.len() as f64;
        }
        let val_mse = mse_over(model, &store, data, &data.val_starts, cfg.batch_size)?;
        if !val_mse.is_finite() {
            return Err(Error::NonFiniteLoss { epoch, step: steps });
        }
        let log = EpochLog {
            epoch,
            lr,
            train_mse: loss_sum / order.len() as f64,
            val_mse,
        };
        on_epoch(&log);
        history.push(log);
        if best.as_ref().is_none_or(|(v, _, _)| val_mse < *v) {
            best = Some((val_mse, epoch, store.clone()));
        }
    }
    let (_, best_epoch, best) = best.expect("at least one epoch");
    Ok(Fitted {
        best,
        best_epoch,
        last: store,
        history,
    })
}

/// A trained model with test errors for both retained parameter sets.
#[derive(Clone, Debug)]
pub struct TrainOutcome<F: Real> {
    pub model: Model,
    pub fitted: Fitted<F>,
    pub test_best: ErrorAccumulator,
    pub test_last: ErrorAccumulator,
}

/// Builds the configured model, fits it and scores the test windows.
pub fn train<F: Real>(
    cfg: &TrainConfig,
    data: &TrainData<F>,
    on_epoch: &mut dyn FnMut(&EpochLog),
) -> Result<TrainOutcome<F>> {
    cfg.validate()?;
    let (model, store) = Model::init::<F>(&cfg.model, cfg.seed)?;
    let fitted = fit(&model, store, cfg, data, on_epoch)?;
    let test_best = evaluate(&model, &fitted.best, data, &data.test_starts, cfg.batch_size)?;
    let test_last = evaluate(&model, &fitted.last, data, &data.test_starts, cfg.batch_size)?;
    Ok(TrainOutcome {
        model,
        fitted,
        test_best,
        test_last,
    })
}

/// Fits the Nlinear baseline with the same optimiser and schedule.
pub fn fit_nlinear<F: Real>(
    cfg: &TrainConfig,
    data: &TrainData<F>,
    on_epoch: &mut dyn FnMut(&EpochLog),
) -> Result<(Nlinear, Fitted<F>)> {
    let (model, store) = Nlinear::init::<F>(cfg.model.input_len, cfg.model.horizon, cfg.seed);
    let fitted = fit(&model, store, cfg, data, on_epoch)?;
    Ok((model, fitted))
}

/// Heuristic and linear baselines.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Baseline {
    Ha,
    Dh,
    Wh,
    Nlinear,
}

impl Baseline {
    pub const ALL: [Self; 4] = [Self::Ha, Self::Dh, Self::Wh, Self::Nlinear];

    pub fn name(self) -> &'static str {
        match self {
            Self::Ha => "HA",
            Self::Dh => "DH",
            Self::Wh => "WH",
            Self::Nlinear => "Nlinear",
        }
    }
}

impl fmt::Display for Baseline {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Baseline {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "ha" => Ok(Self::Ha),
            "dh" => Ok(Self::Dh),
            "wh" => Ok(Self::Wh),
            "nlinear" => Ok(Self::Nlinear),
            other => Err(Error::Config(format!(
                "unknown baseline {other:?} (expected ha, dh, wh or nlinear)"
            ))),
        }
    }
}

/// Raw-scale errors of a heuristic baseline over `starts`. HA reads the
/// input window; DH and WH read the full history before each origin.
pub fn evaluate_heuristic<F: Real>(method: Baseline, data: &TrainData<F>, starts: &[usize]) -> Result<ErrorAccumulator> {
    let mut acc = ErrorAccumulator::default();
    for &s in starts {
        let origin = s + data.input_len;
        let pred = match method {
            Baseline::Ha => ha_forecast(&data.raw.window(s, data.input_len)?, data.horizon)?,
            Baseline::Dh => dh_forecast(&data.raw, origin, data.horizon)?,
            Baseline::Wh => wh_forecast(&data.raw, origin, data.horizon)?,
            Baseline::Nlinear => {
                return Err(Error::Config("Nlinear is fitted, not a heuristic".into()));
            }
        };
        acc.add(&pred, &data.raw.window(origin, data.horizon)?)?;
    }
    Ok(acc)
}
