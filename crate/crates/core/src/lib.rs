//! Super-multivariate forecasting of grid-based urban mobility data.
//!
//! A `T×C×H×W` mobility video is flattened into `G = C·H·W` independent
//! series, cut into temporal patches and processed by stacked
//! temporal / inter-series / low-frequency blocks with hierarchical patch
//! merging.

pub mod baselines;
pub mod data;
pub mod embedding;
pub mod error;
pub mod model;
pub mod numerics;
pub mod train;
pub mod tvf;

pub use error::{Error, Result};
pub use numerics::{ParamId, ParamStore, Parameter, Real, Tape, Tensor, Var};
