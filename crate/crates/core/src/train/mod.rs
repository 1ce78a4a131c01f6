//! Optimiser, schedule, training loop, evaluation and benchmarks.

mod bench;
mod config;
mod export;
mod optim;
mod run;
mod schedule;


pub use bench::{bench_issb, write_bench_csv, BenchConfig, BenchRow, BENCH_HEADER};
pub use config::{Loss, Scenario, TrainConfig};
pub use export::{write_attention_csv, ATTENTION_HEADER};
pub use optim::Adam;
pub use run::{
    evaluate, evaluate_heuristic, fit, fit_nlinear, mse_over, train, Baseline, EpochLog, Fitted, Forecaster,
    TrainData, TrainOutcome, LOG_HEADER,
};
pub use schedule::Schedule;
