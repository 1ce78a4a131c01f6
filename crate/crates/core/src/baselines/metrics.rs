//! Pooled MAE / RMSE and CSV reports.

use std::io::Write;

use crate::error::{Error, Result};
use crate::numerics::{Real, Tensor};

/// Running sums for errors pooled over every element of every window.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct ErrorAccumulator {
    abs_sum: f64,
    sq_sum: f64,
    count: usize,
}

impl ErrorAccumulator {
    pub fn add<F: Real>(&mut self, pred: &Tensor<F>, target: &Tensor<F>) -> Result<()> {
        if pred.shape() != target.shape() {
            return Err(Error::ShapeMismatch {
                op: "metric",
                left: pred.shape().to_vec(),
                right: target.shape().to_vec(),
            });
        }
        for (p, t) in pred.data().iter().zip(target.data()) {
            let e = p.as_f64() - t.as_f64();
            self.abs_sum += e.abs();
            self.sq_sum += e * e;
        }
        self.count += pred.len();
        Ok(())
    }

    pub fn merge(&mut self, other: &Self) {
        self.abs_sum += other.abs_sum;
        self.sq_sum += other.sq_sum;
        self.count += other.count;
    }

    pub fn count(&self) -> usize {
        self.count
    }

    pub fn mae(&self) -> f64 {
        self.abs_sum / self.count.max(1) as f64
    }

    pub fn mse(&self) -> f64 {
        self.sq_sum / self.count.max(1) as f64
    }

    pub fn rmse(&self) -> f64 {
        self.mse().sqrt()
    }
}

pub fn mae<F: Real>(pred: &Tensor<F>, target: &Tensor<F>) -> Result<f64> {
    let mut acc = ErrorAccumulator::default();
    acc.add(pred, target)?;
    Ok(acc.mae())
}

pub fn rmse<F: Real>(pred: &Tensor<F>, target: &Tensor<F>) -> Result<f64> {
    let mut acc = ErrorAccumulator::default();
    acc.add(pred, target)?;
    Ok(acc.rmse())
}

#[derive(Clone, Debug, PartialEq)]
pub struct ForecastReport {
    pub model: String,
    /// `T_in-τ`, e.g. `128-64`.
    pub scenario: String,
    pub mae: f64,
    pub rmse: f64,
}

impl ForecastReport {
    pub fn new(model: impl Into<String>, input_len: usize, horizon: usize, acc: &ErrorAccumulator) -> Self {
        Self {
            model: model.into(),
            scenario: format!("{input_len}-{horizon}"),
            mae: acc.mae(),
            rmse: acc.rmse(),
        }
    }

    pub fn csv_row(&self) -> String {
        format!("{},{},{:.3},{:.3}", self.model, self.scenario, self.mae, self.rmse)
    }
}

pub const REPORT_HEADER: &str = "model,scenario,mae,rmse";

pub fn write_reports_csv(mut w: impl Write, reports: &[ForecastReport]) -> Result<()> {
    writeln!(w, "{REPORT_HEADER}")?;
    for r in reports {
        writeln!(w, "{}", r.csv_row())?;
    }
    Ok(())
}
