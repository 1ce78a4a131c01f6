//! Series files, synthetic data, splits, normalisation and windows.

mod format;
mod prep;
mod synth;


pub use format::{
    convert_raw, decode_grid_series, encode_grid_series, read_grid_series, write_grid_series, HEADER_LEN,
    SERIES_MAGIC, SERIES_VERSION,
};
pub use prep::{
    sample, split_series, stack_windows, window_starts, windows_in, NormStats, Split, SplitRatios, WindowSample,
    STD_FLOOR,
};
pub use synth::{synth_generate, SynthConfig, DAILY_AMPLITUDE, WEEKLY_AMPLITUDE};
