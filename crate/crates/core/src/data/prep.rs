//! Chronological splits, z-score normalisation and sliding windows.

use std::ops::Range;

use crate::embedding::GridSeries;
use crate::error::{Error, Result};
use crate::numerics::{Real, Tensor};

/// Train : validation : test proportions.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct SplitRatios {
    pub train: usize,
    pub val: usize,
    pub test: usize,
}

impl Default for SplitRatios {
    fn default() -> Self {
        Self { train: 7, val: 1, test: 2 }
    }
}

impl std::str::FromStr for SplitRatios {
    type Err = Error;

    /// Parses `7:1:2`.
    fn from_str(s: &str) -> Result<Self> {
        let parts: Vec<usize> = s
            .split(':')
            .map(|p| p.trim().parse::<usize>())
            .collect::<std::result::Result<_, _>>()
            .map_err(|_| Error::Config(format!("split ratios must look like 7:1:2, got {s:?}")))?;
        match parts[..] {
            [train, val, test] if train > 0 && val > 0 && test > 0 => Ok(Self { train, val, test }),
            _ => Err(Error::Config(format!("split ratios must be three positive integers, got {s:?}"))),
        }
    }
}

impl std::fmt::Display for SplitRatios {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}:{}:{}", self.train, self.val, self.test)
    }
}

/// Contiguous, chronological segment ranges over one series.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Split {
    pub train: Range<usize>,
    pub val: Range<usize>,
    pub test: Range<usize>,
}

impl Split {
    /// Floors the train and validation lengths; the test segment takes the
    /// remainder. Each segment must hold at least `min_len` steps.
    pub fn new(len: usize, ratios: SplitRatios, min_len: usize) -> Result<Self> {
        let total = ratios.train + ratios.val + ratios.test;
        let n_train = len * ratios.train / total;
        let n_val = len * ratios.val / total;
        let split = Self {
            train: 0..n_train,
            val: n_train..n_train + n_val,
            test: n_train + n_val..len,
        };
        for (name, r) in split.segments() {
            if r.len() < min_len {
                return Err(Error::SegmentTooShort {
                    segment: name,
                    len: r.len(),
                    needed: min_len,
                });
            }
        }
        Ok(split)
    }

    pub fn segments(&self) -> [(&'static str, Range<usize>); 3] {
        [
            ("train", self.train.clone()),
            ("val", self.val.clone()),
            ("test", self.test.clone()),
        ]
    }
}

/// The three segments as separate series.
pub fn split_series<F: Real>(
    g: &GridSeries<F>,
    ratios: SplitRatios,
    min_len: usize,
) -> Result<[GridSeries<F>; 3]> {
    let s = Split::new(g.len(), ratios, min_len)?;
    Ok([
        g.slice(s.train.start, s.train.len())?,
        g.slice(s.val.start, s.val.len())?,
        g.slice(s.test.start, s.test.len())?,
    ])
}

/// Scalar z-score statistics.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct NormStats {
    pub mean: f64,
    pub std: f64,
}

pub const STD_FLOOR: f64 = 1e-8;

impl NormStats {
    /// Statistics over steps `range` of `g`.
    pub fn fit<F: Real>(g: &GridSeries<F>, range: Range<usize>) -> Self {
        let frame = g.frame_size();
        let values = &g.values().data()[range.start * frame..range.end * frame];
        let n = values.len().max(1) as f64;
        let mean = values.iter().map(|v| v.as_f64()).sum::<f64>() / n;
        let var = values.iter().map(|v| (v.as_f64() - mean).powi(2)).sum::<f64>() / n;
        Self {
            mean,
            std: var.sqrt().max(STD_FLOOR),
        }
    }

    pub fn normalize<F: Real>(&self, x: &Tensor<F>) -> Tensor<F> {
        let (m, s) = (self.mean, self.std);
        x.map(|v| F::cast((v.as_f64() - m) / s))
    }

    pub fn denormalize<F: Real>(&self, x: &Tensor<F>) -> Tensor<F> {
        let (m, s) = (self.mean, self.std);
        x.map(|v| F::cast(v.as_f64() * s + m))
    }

    pub fn normalize_series<F: Real>(&self, g: &GridSeries<F>) -> GridSeries<F> {
        GridSeries::new(self.normalize(g.values()), g.steps_per_day()).expect("shape unchanged")
    }
}

/// Window start offsets within a segment of length `len`:
/// `⌊(len − input_len − horizon) / stride⌋ + 1` of them.
pub fn window_starts(len: usize, input_len: usize, horizon: usize, stride: usize) -> Result<Vec<usize>> {
    let span = input_len + horizon;
    if len < span {
        return Err(Error::InsufficientHistory {
            needed: span,
            available: len,
        });
    }
    if stride == 0 {
        return Err(Error::Config("window stride must be positive".into()));
    }
    Ok((0..=(len - span) / stride).map(|i| i * stride).collect())
}

/// Absolute window starts lying wholly inside `range`.
pub fn windows_in(range: &Range<usize>, input_len: usize, horizon: usize, stride: usize) -> Result<Vec<usize>> {
    Ok(window_starts(range.len(), input_len, horizon, stride)?
        .into_iter()
        .map(|s| s + range.start)
        .collect())
}

/// One input/target pair cut from a series.
#[derive(Clone, Debug, PartialEq)]
pub struct WindowSample<F: Real = f32> {
    pub input: Tensor<F>,
    pub target: Tensor<F>,
    pub start: usize,
}

pub fn sample<F: Real>(g: &GridSeries<F>, start: usize, input_len: usize, horizon: usize) -> Result<WindowSample<F>> {
    Ok(WindowSample {
        input: g.window(start, input_len)?,
        target: g.window(start + input_len, horizon)?,
        start,
    })
}

/// Stacks windows starting at `starts` into `[B, len, C, H, W]`, reading
/// frames `[start + offset, start + offset + len)`.
pub fn stack_windows<F: Real>(g: &GridSeries<F>, starts: &[usize], offset: usize, len: usize) -> Result<Tensor<F>> {
    let (t, c, h, w) = g.dims();
    let frame = c * h * w;
    let mut data = Vec::with_capacity(starts.len() * len * frame);
    for &s in starts {
        let from = s + offset;
        if from + len > t {
            return Err(Error::InsufficientHistory {
                needed: from + len,
                available: t,
            });
        }
        data.extend_from_slice(&g.values().data()[from * frame..(from + len) * frame]);
    }
    Tensor::new([starts.len(), len, c, h, w], data)
}
