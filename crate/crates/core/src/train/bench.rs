//! Inter-series attention microbenchmark.

use std::io::Write;
use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::numerics::{ParamStore, Tape, Tensor};
use crate::tvf::{HeadConfig, InterSeries, Mechanism};

/// Shapes shared by every benchmarked mechanism.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BenchConfig {
    pub n_seg: usize,
    pub d_model: usize,
    pub heads: HeadConfig,
    /// Dictionary size and projection rank.
    pub g: usize,
    pub repeats: usize,
    pub seed: u64,
}

impl Default for BenchConfig {
    fn default() -> Self {
        Self {
            n_seg: 1,
            d_model: 32,
            heads: HeadConfig { heads: 2, d_qkv: 16 },
            g: 64,
            repeats: 5,
            seed: 0,
        }
    }
}

/// One measured (mechanism, G) cell.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BenchRow {
    pub mechanism: Mechanism,
    pub variables: usize,
    pub median_secs: f64,
    /// Attention scores per patch index.
    pub scores: u64,
}

pub const BENCH_HEADER: &str = "mechanism,variables,median_seconds,scores_per_patch";

impl BenchRow {
    pub fn csv_row(&self) -> String {
        format!(
            "{},{},{:.6},{}",
            self.mechanism.name(),
            self.variables,
            self.median_secs,
            self.scores
        )
    }
}

fn median(mut xs: Vec<f64>) -> f64 {
    xs.sort_by(f64::total_cmp);
    let n = xs.len();
    if n % 2 == 1 {
        xs[n / 2]
    } else {
        0.5 * (xs[n / 2 - 1] + xs[n / 2])
    }
}

struct Case {
    mechanism: Mechanism,
    variables: usize,
    block: InterSeries,
    store: ParamStore<f32>,
    input: Tensor<f32>,
    times: Vec<f64>,
    scores: u64,
}

/// Median forward time of each mechanism at each `G`. Repeats are
/// interleaved across cells so slow drifts in machine speed hit all cells
/// alike.
pub fn bench_issb(mechanisms: &[Mechanism], g_sizes: &[usize], cfg: &BenchConfig) -> Result<Vec<BenchRow>> {
    if g_sizes.windows(2).any(|w| w[0] > w[1]) {
        return Err(Error::Config("G sizes must be ascending".into()));
    }
    if cfg.repeats == 0 {
        return Err(Error::Config("repeats must be at least 1".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut cases = Vec::new();
    for &variables in g_sizes {
        let len = variables * cfg.n_seg * cfg.d_model;
        let data = (0..len).map(|_| StandardNormal.sample(&mut rng)).collect();
        let input = Tensor::new([variables, cfg.n_seg, cfg.d_model], data)?;
        for &mechanism in mechanisms {
            let mut store = ParamStore::new();
            let block = InterSeries::build(
                &mut store.initializer(cfg.seed),
                "bench",
                mechanism,
                variables,
                cfg.g,
                cfg.d_model,
                cfg.heads,
            );
            cases.push(Case {
                mechanism,
                variables,
                block,
                store,
                input: input.clone(),
                times: Vec::with_capacity(cfg.repeats),
                scores: 0,
            });
        }
    }
    // One untimed pass warms allocators and caches.
    for rep in 0..=cfg.repeats {
        for case in &mut cases {
            let mut tape = Tape::new();
            let start = Instant::now();
            let x = tape.input(case.input.clone());
            let y = case.block.forward(&mut tape, &case.store, x)?;
            std::hint::black_box(tape.value(y));
            let secs = start.elapsed().as_secs_f64();
            if rep > 0 {
                case.times.push(secs);
            }
            case.scores = tape.scores() / cfg.n_seg as u64;
        }
    }
    Ok(cases
        .into_iter()
        .map(|c| BenchRow {
            mechanism: c.mechanism,
            variables: c.variables,
            median_secs: median(c.times),
            scores: c.scores,
        })
        .collect())
}

pub fn write_bench_csv(mut w: impl Write, rows: &[BenchRow]) -> Result<()> {
    writeln!(w, "{BENCH_HEADER}")?;
    for r in rows {
        writeln!(w, "{}", r.csv_row())?;
    }
    Ok(())
}
